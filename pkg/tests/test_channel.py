import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimo_ae import channel
from mimo_ae.channel import ChannelRealization, NoiseConfig
from mimo_ae.linalg import InvalidInputError
from mimo_ae.rng import RngStream


@given(st.floats(-30, 40))
def test_snr_roundtrip(snr):
    nc = NoiseConfig.from_snr_db(snr)
    assert nc.snr_db == pytest.approx(snr)
    assert channel.snr_db_to_n0(snr) == pytest.approx(10 ** (-snr / 10))


def test_n0_values():
    assert channel.snr_db_to_n0(10.0) == pytest.approx(0.1)
    assert channel.snr_db_to_n0(0.0, p_t=2.0) == pytest.approx(2.0)


@pytest.mark.parametrize("n0", [-1.0, np.inf, np.nan])
def test_bad_noise(n0):
    with pytest.raises(InvalidInputError):
        NoiseConfig(n0)


def test_rayleigh_statistics():
    h = channel.sample_channels(RngStream(3), 100_000, 2, 2)
    assert h.shape == (100_000, 2, 2)
    p = np.abs(h) ** 2
    assert np.allclose(p.mean(axis=0), 1.0, atol=0.02)
    # |h|^2 is Exp(1): P(|h|^2 > 1) = e^-1
    assert abs(np.mean(p > 1) - np.exp(-1)) < 0.005


def test_noiseless_apply_is_exact():
    st_ = RngStream(4)
    ch = channel.sample_channel(st_, 2, 2, block_length=2)
    x = np.array([[1, 1j], [-1, 2]])
    y = channel.apply(ch, x, NoiseConfig(0.0), st_)
    assert np.array_equal(y, ch.h @ x)


def test_apply_noise_power():
    h = np.eye(2)
    x = np.zeros((2, 50_000))
    y = channel.apply(h, x, 0.3, RngStream(5))
    assert np.mean(np.abs(y) ** 2) == pytest.approx(0.3, rel=0.02)


def test_apply_checks_dimensions():
    ch = ChannelRealization(np.ones((2, 2)), block_length=1)
    with pytest.raises(InvalidInputError):
        channel.apply(ch, np.ones((3, 1)), 0.1, RngStream(0))
    with pytest.raises(InvalidInputError):
        channel.apply(ch, np.ones((2, 2)), 0.1, RngStream(0))


def test_bad_dimensions():
    with pytest.raises(InvalidInputError):
        channel.sample_channels(RngStream(0), 1, 0, 2)
