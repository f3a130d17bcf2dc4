"""End-to-end autoencoders: SISO, open-loop MIMO, closed-loop MIMO, multi-user MIMO.

A system couples a transmitter network, the power-normalization layer, the
channel, and one receiver network per user. :func:`loss_and_grads` runs one
forward and one reverse pass over a :class:`Batch`; gradients flow from the
receivers through ``Y = H X + N`` and the batch-coupled normalization back
into the transmitter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .channel import snr_db_to_n0
from .constellation import Constellation, from_points
from .linalg import InvalidInputError, from_real_composite, hermitian, to_real_composite
from .rng import RngStream

__all__ = [
    "KINDS",
    "TrainingDivergedError",
    "AeSystem",
    "Batch",
    "TrainConfig",
    "TrainResult",
    "build_system",
    "default_train_config",
    "draw_batch",
    "forward_siso",
    "forward_open_loop",
    "forward_closed_loop",
    "forward_mu_mimo",
    "loss_and_grads",
    "train",
    "train_siso_shaping",
    "extract_codebook",
    "extract_openloop_codebook",
    "write_scatter_csv",
    "write_loss_csv",
    "AeScheme",
    "save_system",
    "load_system",
]

KINDS = ("siso", "open_loop", "closed_loop", "mu_mimo")

# top-level stream indices under the master seed
INIT_STREAM = 1
TRAIN_STREAM = 2

# (tx hidden widths, rx hidden widths) per kind; open-loop at M=4
_ARCH = {
    "siso": ((64, 64), (128, 128)),
    "open_loop": ((256, 256), (2048, 2048, 2048)),
    "closed_loop": ((64, 64, 64), (512, 512, 512)),
    "mu_mimo": ((512, 512, 512), (256, 256, 256)),
}
_DIMS = {
    # n_t, n_r, n_b, l
    "siso": (1, 1, 1, 1),
    "open_loop": (2, 1, 2, 2),
    "closed_loop": (2, 2, 1, 1),
    "mu_mimo": (2, 2, 1, 1),
}
# paper training recipes at batch 2048
TRAIN_SNR_DB = {"siso": 12.0, "open_loop": 15.0, "closed_loop": 15.0, "mu_mimo": 15.0}
TRAIN_UPDATES = {"siso": 2000, "open_loop": 1563, "closed_loop": 20000, "mu_mimo": 3125}


class TrainingDivergedError(RuntimeError):
    def __init__(self, update: int, loss: float):
        super().__init__(f"training diverged at update {update} (loss={loss})")
        self.update = update
        self.loss = loss


def normalize_kind(kind: str) -> str:
    k = kind.replace("-", "_")
    if k not in KINDS:
        raise InvalidInputError(f"unknown system kind {kind!r}; choose from {KINDS}")
    return k


@dataclass
class AeSystem:
    """Transmitter, receiver(s) and dimensioning of one autoencoder.

    ``m`` is the per-message alphabet. The transmitter one-hot has
    ``m**l`` entries for open loop and ``m**n_r`` for multi-user.
    """

    kind: str
    m: int
    n_t: int
    n_r: int
    n_b: int
    l: int
    tx: nn.MlpModel
    rx: list[nn.MlpModel]
    p_t: float = 1.0

    @property
    def tx_alphabet(self) -> int:
        if self.kind == "open_loop":
            return self.m**self.l
        if self.kind == "mu_mimo":
            return self.m**self.n_r
        return self.m

    @property
    def rx_alphabet(self) -> int:
        return self.m**self.l if self.kind == "open_loop" else self.m

    @property
    def messages_per_block(self) -> int:
        return {"open_loop": self.l, "mu_mimo": self.n_r}.get(self.kind, 1)

    @property
    def loss_alphabet(self) -> int:
        """Output-alphabet size whose log is the loss of a blind receiver."""
        return self.m**self.n_r if self.kind == "mu_mimo" else self.rx_alphabet

    @property
    def uses_csi(self) -> bool:
        return self.kind != "siso"

    def parameters(self) -> list[np.ndarray]:
        out = self.tx.parameters()
        for r in self.rx:
            out += r.parameters()
        return out

    def models(self) -> list[nn.MlpModel]:
        return [self.tx] + list(self.rx)


def _layer_dims(in_dim, hidden, out_dim):
    return [in_dim, *hidden, out_dim]


def build_system(
    kind: str,
    m: int,
    n_t: int | None = None,
    n_r: int | None = None,
    tx_hidden=None,
    rx_hidden=None,
    p_t: float = 1.0,
    stream: RngStream | None = None,
) -> AeSystem:
    """Construct and He-initialize an autoencoder.

    Default widths: closed loop tx 3x64 / rx 3x512; open loop tx 2x256 /
    rx 3x2048 (five hidden layers each for ``m >= 16``); multi-user
    tx 3x512 / rx 3x256 per user; SISO tx 2x64 / rx 2x128.

    With ``stream`` given, all layers are He-initialized except the receivers'
    softmax layers, whose weights start at zero.
    """
    kind = normalize_kind(kind)
    if m < 2:
        raise InvalidInputError(f"m must be >= 2, got {m}")
    d_nt, d_nr, n_b, l = _DIMS[kind]
    n_t = d_nt if n_t is None else n_t
    n_r = d_nr if n_r is None else n_r
    if kind == "siso" and (n_t, n_r) != (1, 1):
        raise InvalidInputError("siso is 1x1")
    if kind == "open_loop":
        n_b = l = n_t  # rate-1 block: as many slots and messages as antennas
    if n_t < 1 or n_r < 1:
        raise InvalidInputError("n_t and n_r must be >= 1")
    if kind == "mu_mimo" and n_t < n_r:
        raise InvalidInputError("multi-user system needs n_t >= n_r")
    tx_h, rx_h = _ARCH[kind]
    if kind == "open_loop" and m >= 16:
        tx_h, rx_h = (tx_h[0],) * 5, (rx_h[0],) * 5
    tx_h = tuple(tx_hidden) if tx_hidden is not None else tx_h
    rx_h = tuple(rx_hidden) if rx_hidden is not None else rx_h

    csi = 2 * n_r * n_t
    if kind == "siso":
        tx_in, tx_out, rx_in, rx_out, n_rx = m, 2, 2, m, 1
    elif kind == "open_loop":
        tx_in, tx_out = m**l, 2 * n_t * n_b
        rx_in, rx_out, n_rx = 2 * n_r * n_b + csi, m**l, 1
    elif kind == "closed_loop":
        tx_in, tx_out = m + csi, 2 * n_t
        rx_in, rx_out, n_rx = 2 * n_r + csi, m, 1
    else:
        tx_in, tx_out = m**n_r + csi, 2 * n_t
        rx_in, rx_out, n_rx = 2 + 2 * n_t, m, n_r
    if tx_in > 1 << 16:
        raise InvalidInputError(f"one-hot input of size {tx_in} is too large")
    tx = nn.MlpModel.build(_layer_dims(tx_in, tx_h, tx_out), output="linear")
    rx = [nn.MlpModel.build(_layer_dims(rx_in, rx_h, rx_out), output="softmax") for _ in range(n_rx)]
    system = AeSystem(kind, m, n_t, n_r, n_b, l, tx, rx, p_t)
    if stream is not None:
        for i, model in enumerate(system.models()):
            nn.he_init(model, stream.substream(i))
        # zero softmax layer: untrained receivers output exactly uniform probabilities
        for r in system.rx:
            r.layers[-1].weight[...] = 0.0
    return system


# --------------------------------------------------------------------------
# batches and forward passes
# --------------------------------------------------------------------------


@dataclass
class Batch:
    """Messages plus the channel and unit-variance noise draws they will see.

    ``messages`` is (B, messages_per_block); ``h`` is (B, n_r, n_t);
    ``noise`` is CN(0, 1) of the receive shape and is scaled by sqrt(n0).
    """

    messages: np.ndarray
    h: np.ndarray
    noise: np.ndarray
    n0: float

    @property
    def size(self) -> int:
        return self.messages.shape[0]


def draw_batch(system: AeSystem, batch_size: int, n0: float, stream: RngStream) -> Batch:
    msgs = stream.substream(0).uniform_message(system.m, (batch_size, system.messages_per_block))
    if system.kind == "siso":
        h = np.ones((batch_size, 1, 1), dtype=np.complex128)
    else:
        h = stream.substream(1).standard_complex_gaussian((batch_size, system.n_r, system.n_t))
    slots = system.n_b if system.kind == "open_loop" else 1
    noise = stream.substream(2).standard_complex_gaussian((batch_size, system.n_r, slots))
    return Batch(msgs, h, noise, n0)


def joint_index(messages, m: int) -> np.ndarray:
    """Messages (B, k) to one index, first message most significant."""
    msgs = np.asarray(messages, dtype=np.int64)
    out = np.zeros(msgs.shape[0], dtype=np.int64)
    for j in range(msgs.shape[1]):
        out = out * m + msgs[:, j]
    return out


def split_index(idx, m: int, k: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).copy()
    out = np.empty((idx.shape[0], k), dtype=np.int64)
    for j in range(k - 1, -1, -1):
        out[:, j] = idx % m
        idx //= m
    return out


@dataclass
class _Trace:
    """Intermediates kept for the reverse pass."""

    tx_acts: list
    raw: np.ndarray
    scale: float
    rx_acts: list
    labels: list
    probs: list
    x: np.ndarray = field(default=None)


def _tx_input(system: AeSystem, batch: Batch) -> np.ndarray:
    oh = nn.one_hot(joint_index(batch.messages, system.m), system.tx_alphabet)
    if system.kind in ("closed_loop", "mu_mimo"):
        return np.concatenate([oh, to_real_composite(batch.h)], axis=1)
    return oh


def _transmit(system: AeSystem, batch: Batch, scale: float | None = None):
    """Transmitter forward + normalization. Returns (acts, raw, scale, X complex)."""
    acts = nn.forward(system.tx, _tx_input(system, batch))
    raw = acts[-1]
    slots = system.n_b if system.kind == "open_loop" else 1
    if scale is None:
        xs, scale = nn.power_normalize(raw, system.p_t, slots)
    else:
        xs = raw * scale
    n_t = 1 if system.kind == "siso" else system.n_t
    return acts, raw, scale, from_real_composite(xs, n_t, slots)


def _receive(system: AeSystem, batch: Batch, x: np.ndarray):
    """Channel and receivers. Returns (rx_acts per receiver, rx labels per receiver)."""
    y = batch.h @ x + np.sqrt(batch.n0) * batch.noise
    if system.kind == "siso":
        inputs = [to_real_composite(y)]
        labels = [batch.messages[:, 0]]
    elif system.kind == "open_loop":
        inputs = [np.concatenate([to_real_composite(y), to_real_composite(batch.h)], axis=1)]
        labels = [joint_index(batch.messages, system.m)]
    elif system.kind == "closed_loop":
        inputs = [np.concatenate([to_real_composite(y), to_real_composite(batch.h)], axis=1)]
        labels = [batch.messages[:, 0]]
    else:
        inputs, labels = [], []
        for i in range(system.n_r):
            # receiver i only sees its own sample and its own channel row
            inputs.append(np.concatenate([to_real_composite(y[:, i : i + 1, :]), to_real_composite(batch.h[:, i : i + 1, :])], axis=1))
            labels.append(batch.messages[:, i])
    acts = [nn.forward(r, inp) for r, inp in zip(system.rx, inputs)]
    return acts, labels


def _run(system: AeSystem, batch: Batch, scale: float | None = None) -> _Trace:
    tx_acts, raw, scale, x = _transmit(system, batch, scale)
    rx_acts, labels = _receive(system, batch, x)
    return _Trace(tx_acts, raw, scale, rx_acts, labels, [a[-1] for a in rx_acts], x)


def _check_kind(system: AeSystem, kind: str):
    if system.kind != kind:
        raise InvalidInputError(f"expected a {kind} system, got {system.kind}")


def forward_siso(system: AeSystem, batch: Batch) -> np.ndarray:
    _check_kind(system, "siso")
    return _run(system, batch).probs[0]


def forward_open_loop(system: AeSystem, batch: Batch) -> np.ndarray:
    """Probabilities over the ``m**l`` joint messages, shape (B, m**l)."""
    _check_kind(system, "open_loop")
    return _run(system, batch).probs[0]


def forward_closed_loop(system: AeSystem, batch: Batch) -> np.ndarray:
    _check_kind(system, "closed_loop")
    return _run(system, batch).probs[0]


def forward_mu_mimo(system: AeSystem, batch: Batch) -> list[np.ndarray]:
    """One (B, m) probability array per user."""
    _check_kind(system, "mu_mimo")
    return _run(system, batch).probs


def loss_and_grads(system: AeSystem, batch: Batch):
    """Loss (sum of per-receiver cross-entropies) and gradients for ``system.parameters()``."""
    tr = _run(system, batch)
    loss = 0.0
    rx_grads = []
    g_y_parts = []
    for model, acts, labels in zip(system.rx, tr.rx_acts, tr.labels):
        loss += nn.cross_entropy(acts[-1], labels)
        grads, g_in = nn.backward(model, acts, nn.cross_entropy_grad(acts[-1], labels), input_grad=True)
        rx_grads += grads
        g_y_parts.append(g_in)

    slots = system.n_b if system.kind == "open_loop" else 1
    n_r = system.n_r
    if system.kind == "mu_mimo":
        g_y = np.concatenate([from_real_composite(g[:, :2], 1, 1) for g in g_y_parts], axis=1)
    else:
        n_obs = 2 * n_r * slots
        g_y = from_real_composite(g_y_parts[0][:, :n_obs], n_r, slots)
    # d/dX of Y = H X under the (dL/dRe + i dL/dIm) convention
    g_x = hermitian(batch.h) @ g_y
    g_scaled = to_real_composite(g_x)
    g_raw = nn.power_normalize_backward(tr.raw, tr.scale, g_scaled)
    tx_grads, _ = nn.backward(system.tx, tr.tx_acts, g_raw, input_grad=False)
    return loss, tx_grads + rx_grads


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    snr_db: float
    batch_size: int = 2048
    lr: float = 1e-3
    updates: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.updates < 1 or self.lr <= 0:
            raise InvalidInputError("batch_size, updates and lr must be positive")


def default_train_config(kind: str, m: int | None = None, **overrides) -> TrainConfig:
    """Paper training recipe for ``kind`` (open loop at ``m=16`` trains at 18 dB)."""
    kind = normalize_kind(kind)
    snr = TRAIN_SNR_DB[kind]
    if kind == "open_loop" and m is not None and m >= 16:
        snr = 18.0
    cfg = dict(snr_db=snr, updates=TRAIN_UPDATES[kind])
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**cfg)


@dataclass
class TrainResult:
    system: AeSystem
    losses: list[float]
    optimizer: nn.AdamState


def train(system: AeSystem, config: TrainConfig, callback=None) -> TrainResult:
    """Adam on all transmitter and receiver parameters jointly.

    Every update draws fresh messages, channels and noise from
    ``RngStream(config.seed, TRAIN_STREAM).substream(update)``.
    """
    n0 = snr_db_to_n0(config.snr_db, system.p_t)
    params = system.parameters()
    opt = nn.AdamState.for_params(params, lr=config.lr)
    root = RngStream(config.seed, TRAIN_STREAM)
    losses = []
    for k in range(config.updates):
        batch = draw_batch(system, config.batch_size, n0, root.substream(k))
        loss, grads = loss_and_grads(system, batch)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDivergedError(k, loss)
        nn.adam_step(params, grads, opt)
        losses.append(loss)
        if callback is not None:
            callback(k, loss)
    return TrainResult(system, losses, opt)


def new_trained_system(kind: str, m: int, config: TrainConfig, callback=None, **build_kw) -> TrainResult:
    """Build with He init from ``config.seed`` and train."""
    system = build_system(kind, m, stream=RngStream(config.seed, INIT_STREAM), **build_kw)
    return train(system, config, callback)


# --------------------------------------------------------------------------
# codebooks, shaping, files
# --------------------------------------------------------------------------


def extract_codebook(system: AeSystem) -> np.ndarray:
    """Transmit symbols for every one-hot input, normalized over the codebook.

    Only for systems without transmitter CSI. Returns shape
    ``(alphabet, n_t, slots)`` with mean energy per slot exactly ``p_t``.
    """
    if system.kind not in ("siso", "open_loop"):
        raise InvalidInputError("codebooks exist only for transmitters without CSI")
    alpha = system.tx_alphabet
    raw = system.tx(np.eye(alpha))
    slots = system.n_b if system.kind == "open_loop" else 1
    xs, _ = nn.power_normalize(raw, system.p_t, slots)
    n_t = 1 if system.kind == "siso" else system.n_t
    return from_real_composite(xs, n_t, slots)


def codebook_scale(system: AeSystem) -> float:
    alpha = system.tx_alphabet
    raw = system.tx(np.eye(alpha))
    slots = system.n_b if system.kind == "open_loop" else 1
    return nn.power_normalize(raw, system.p_t, slots)[1]


def extract_openloop_codebook(system: AeSystem) -> np.ndarray:
    """All ``m**l`` open-loop codewords, shape (m**l, n_t, n_b)."""
    _check_kind(system, "open_loop")
    return extract_codebook(system)


def write_scatter_csv(codebook: np.ndarray, path) -> None:
    """``message,antenna,slot,re,im`` rows for every codeword entry."""
    with open(path, "w", newline="\n") as f:
        f.write("message,antenna,slot,re,im\n")
        for msg in range(codebook.shape[0]):
            for a in range(codebook.shape[1]):
                for s in range(codebook.shape[2]):
                    z = codebook[msg, a, s]
                    f.write(f"{msg},{a},{s},{float(z.real)!r},{float(z.imag)!r}\n")


def write_loss_csv(losses, path) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("update,loss\n")
        for k, v in enumerate(losses):
            f.write(f"{k},{float(v)!r}\n")


def train_siso_shaping(m: int = 16, snr_db: float = 12.0, config: TrainConfig | None = None, path=None, callback=None):
    """Learn a geometrically shaped constellation with a SISO autoencoder over AWGN.

    Returns ``(constellation, TrainResult)``; writes the constellation file
    when ``path`` is given.
    """
    from . import constellation as cst

    config = config or TrainConfig(snr_db=snr_db, updates=TRAIN_UPDATES["siso"])
    if config.snr_db != snr_db:
        config = TrainConfig(snr_db, config.batch_size, config.lr, config.updates, config.seed)
    result = new_trained_system("siso", m, config, callback)
    pts = extract_codebook(result.system)[:, 0, 0]
    c = from_points(pts, name=f"shaped{m}")
    if path is not None:
        cst.save(c, path)
    return c, result


class AeScheme:
    """Round-trip adapter so the SER harness can drive a trained system.

    Open-loop and SISO transmitters use their exact codebook normalization;
    closed-loop and multi-user ones normalize over each evaluation batch.
    """

    def __init__(self, system: AeSystem):
        self.system = system
        self.symbols_per_block = system.messages_per_block
        self.name = system.kind.replace("_", "-") + "-ae"
        self._scale = codebook_scale(system) if system.kind in ("siso", "open_loop") else None

    def __call__(self, n: int, n0: float, stream: RngStream):
        s = self.system
        batch = draw_batch(s, n, n0, stream)
        tr = _run(s, batch, self._scale)
        if s.kind == "open_loop":
            det = split_index(np.argmax(tr.probs[0], axis=1), s.m, s.l)
        else:
            det = np.stack([np.argmax(p, axis=1) for p in tr.probs], axis=1)
        return batch.messages, det


def save_system(system: AeSystem, path) -> None:
    """Container file with the transmitter followed by the receiver(s)."""
    nn.write_container(system.models(), path)


def load_system(path, p_t: float = 1.0) -> AeSystem:
    """Read a container and infer kind and dimensions from the layer shapes."""
    models = nn.read_container(path)
    tx, rx = models[0], models[1:]
    if tx.layers[-1].activation != "linear" or any(r.layers[-1].activation != "softmax" for r in rx):
        raise nn.ModelFormatError("container does not hold a transmitter followed by receivers")
    tx_in, tx_out = tx.in_dim, tx.out_dim
    rx_in, rx_out = rx[0].in_dim, rx[0].out_dim
    if len(rx) > 1:
        n_r = len(rx)
        n_t = tx_out // 2
        m = rx_out
        if rx_in != 2 + 2 * n_t or tx_in != m**n_r + 2 * n_r * n_t:
            raise nn.ModelFormatError("inconsistent multi-user dimensions")
        kind, n_b, l = "mu_mimo", 1, 1
    elif tx_out == 2 and rx_in == 2:
        kind, n_t, n_r, n_b, l, m = "siso", 1, 1, 1, 1, rx_out
        if tx_in != m:
            raise nn.ModelFormatError("inconsistent SISO dimensions")
    elif tx_in == rx_out:
        # open loop: one-hot over m**l on both ends, tx_out = 2 n_t n_b with n_b = l = n_t
        n_t = int(round(math.sqrt(tx_out / 2)))
        n_b = l = n_t
        n_r = (rx_in - 0) // (2 * n_b + 2 * n_t)
        m = int(round(rx_out ** (1.0 / l)))
        kind = "open_loop"
        if 2 * n_t * n_b != tx_out or m**l != rx_out or rx_in != 2 * n_r * n_b + 2 * n_r * n_t:
            raise nn.ModelFormatError("inconsistent open-loop dimensions")
    else:
        n_t = tx_out // 2
        m = rx_out
        n_r = (rx_in) // (2 + 2 * n_t)
        kind, n_b, l = "closed_loop", 1, 1
        if tx_in != m + 2 * n_r * n_t or rx_in != 2 * n_r + 2 * n_r * n_t:
            raise nn.ModelFormatError("inconsistent closed-loop dimensions")
    return AeSystem(kind, m, n_t, n_r, n_b, l, tx, list(rx), p_t)
