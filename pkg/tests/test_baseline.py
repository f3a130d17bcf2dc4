import itertools

import numpy as np
import pytest

from mimo_ae import baseline
from mimo_ae import constellation as cst
from mimo_ae.channel import sample_channels
from mimo_ae.linalg import InvalidInputError, SingularChannelError
from mimo_ae.rng import RngStream
from mimo_ae.ser import ser_point, StoppingRule

QPSK = cst.build("qpsk")


def test_alamouti_codeword_structure():
    x = baseline.alamouti_encode(np.array([0]), np.array([3]), QPSK, p_t=2.0)[0]
    s1, s2 = QPSK.points[0], QPSK.points[3]
    assert np.allclose(x, np.array([[s1, -np.conj(s2)], [s2, np.conj(s1)]]))
    # columns are orthogonal, power per slot is p_t
    assert np.allclose(np.sum(np.abs(x) ** 2, axis=0), 2.0)


def test_alamouti_noiseless_roundtrip():
    st = RngStream(1)
    msgs = st.uniform_message(16, (500, 2))
    c = cst.build("qam16")
    h = sample_channels(st.substream(1), 500, 1, 2)
    y = h @ baseline.alamouti_encode(msgs[:, 0], msgs[:, 1], c)
    d1, d2 = baseline.alamouti_ml_detect(y, h, c, n0=0.0)
    assert np.array_equal(d1, msgs[:, 0]) and np.array_equal(d2, msgs[:, 1])


def test_allocation_candidate_count():
    # (1,16),(16,1) carry one power split each; (2,8),(4,4),(8,2) every 1% step
    names, fracs = baseline.allocation_candidates(16, 2)
    assert len(names) == 2 + 3 * 101
    assert names[0] == ("trivial1", "qam16")
    assert np.allclose(fracs.sum(axis=1), 1.0)


def test_allocation_degenerate_channel():
    a = baseline.solve_allocation(np.array([2.0, 0.001]), 1.0, 10 ** -1.5)
    assert a.constellations == ("qam16", "trivial1")
    assert a.powers == pytest.approx((1.0, 0.0))


@pytest.mark.parametrize("snr_db", [15.0, 30.0])
def test_allocation_equal_gains_prefers_qpsk_pair(snr_db):
    a = baseline.solve_allocation(np.array([1.0, 1.0]), 1.0, 10 ** (-snr_db / 10))
    assert a.constellations == ("qpsk", "qpsk")
    assert a.powers == pytest.approx((0.5, 0.5))


def test_allocation_infeasible():
    with pytest.raises(baseline.InfeasibleAllocationError):
        baseline.allocation_candidates(3, 2)


@pytest.mark.parametrize("allocation,m", [("alloc", 16), ("equal-qpsk", 16), (baseline.Allocation(("qam8", "bpsk"), (0.7, 0.3), 0.0), 16)])
def test_svd_noiseless_roundtrip(allocation, m):
    st = RngStream(2)
    h = sample_channels(st, 400, 2, 2)
    msgs = st.substream(1).uniform_message(m, 400)
    det = baseline.svd_transceiver_roundtrip(h, msgs, allocation, 1.0, 0.0, m=m)
    assert np.array_equal(det, msgs)


def test_svd_message_split_is_mixed_radix():
    labels = baseline._split_message(np.array([0, 5, 15]), np.array([[4, 4]] * 3))
    assert labels.tolist() == [[0, 0], [1, 1], [3, 3]]
    assert baseline._join_message(labels, np.array([[4, 4]] * 3)).tolist() == [0, 5, 15]


def test_svd_rejects_bad_messages():
    h = np.eye(2)[None]
    with pytest.raises(InvalidInputError):
        baseline.svd_transceiver_roundtrip(h, np.array([16]), "equal-qpsk", 1.0, 0.0)


def test_zf_users_see_only_their_symbol():
    st = RngStream(3)
    h = sample_channels(st, 200, 2, 2)
    alpha, hp = baseline.zf_precoder(h)
    s = QPSK.modulate(st.uniform_message(4, (200, 2)))
    x = alpha[:, None, None] * (hp @ s[:, :, None])
    assert np.allclose(h @ x, alpha[:, None, None] * s[:, :, None])
    # averaged over all symbol pairs the transmit power is exactly p_t
    pairs = np.array(list(itertools.product(QPSK.points, repeat=2)))
    xs = alpha[:, None, None] * (hp @ pairs.T)
    assert np.allclose(np.mean(np.sum(np.abs(xs) ** 2, axis=1), axis=1), 1.0)


def test_zf_alpha_formula():
    h = np.array([[[2.0, 0], [0, 0.5]]], dtype=complex)
    alpha, _ = baseline.zf_precoder(h, p_t=1.0)
    assert alpha[0] == pytest.approx(1 / np.sqrt(0.25 + 4.0))


def test_zf_singular_channel():
    h = np.array([[[1, 1], [1, 1]]], dtype=complex)
    with pytest.raises(SingularChannelError):
        baseline.zf_transceiver_roundtrip(h, np.zeros((1, 2), dtype=int), QPSK, n0=0.0)


def test_zf_noiseless_roundtrip():
    st = RngStream(4)
    h = sample_channels(st, 300, 2, 2)
    msgs = st.substream(2).uniform_message(4, (300, 2))
    assert np.array_equal(baseline.zf_transceiver_roundtrip(h, msgs, QPSK, n0=0.0), msgs)


@pytest.mark.parametrize("scheme", [baseline.AlamoutiScheme(QPSK), baseline.SvdScheme(16), baseline.SvdScheme(16, "equal-qpsk"), baseline.ZfScheme(QPSK), baseline.AwgnScheme(QPSK)])
def test_schemes_noiseless_and_shapes(scheme):
    sent, det = scheme(1000, 0.0, RngStream(5))
    assert sent.shape == det.shape == (1000, scheme.symbols_per_block)
    assert np.array_equal(sent, det)


def test_awgn_scheme_matches_analytic():
    p = ser_point(baseline.AwgnScheme(QPSK), 8.0, StoppingRule(10**9, 10**6, 100_000), RngStream(6))
    ref = cst.ser_analytic(QPSK, 10 ** 0.8)
    assert abs(p.ser - ref) < 3 * np.sqrt(ref * (1 - ref) / p.num_symbols)


def test_zf_requires_enough_antennas():
    with pytest.raises(InvalidInputError):
        baseline.ZfScheme(QPSK, n_users=3, n_t=2)
