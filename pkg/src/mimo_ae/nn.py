"""Dense networks with hand-written reverse mode, Adam, and a binary model format.

Everything runs in float64. A layer computes ``act(x @ weight + bias)`` with
``weight`` of shape ``(in_dim, out_dim)``.

Model file layout (little-endian)::

    b"MIMOAE01"
    u32 layer_count
    layer_count x (u32 in_dim, u32 out_dim, u8 activation)   # 0 relu, 1 linear, 2 softmax
    for each layer: weight (in_dim*out_dim f64, row-major), bias (out_dim f64)
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .linalg import InvalidInputError
from .rng import RngStream

__all__ = [
    "ACTIVATIONS",
    "MAGIC",
    "ModelFormatError",
    "DegenerateBatchError",
    "Dense",
    "MlpModel",
    "AdamState",
    "forward",
    "backward",
    "softmax",
    "cross_entropy",
    "cross_entropy_grad",
    "one_hot",
    "power_normalize",
    "power_normalize_backward",
    "adam_step",
    "he_init",
    "save_model",
    "load_model",
    "model_to_bytes",
    "model_from_bytes",
    "model_file_size",
    "write_container",
    "read_container",
]

ACTIVATIONS = ("relu", "linear", "softmax")
MAGIC = b"MIMOAE01"
MAX_DIM = 1 << 24
PROB_FLOOR = 1e-30


class ModelFormatError(ValueError):
    """Unreadable model file; the message carries the byte offset."""


class DegenerateBatchError(ValueError):
    """Power normalization of an all-zero batch."""


@dataclass
class Dense:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class MlpModel:
    """Stack of :class:`Dense` layers; softmax may only appear last."""

    layers: list[Dense] = field(default_factory=list)

    @classmethod
    def build(cls, dims, hidden: str = "relu", output: str = "linear") -> "MlpModel":
        """Zero-initialized model with layer widths ``dims`` (input first)."""
        if len(dims) < 2:
            raise InvalidInputError("need at least input and output dims")
        layers = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            act = output if i == len(dims) - 2 else hidden
            layers.append(Dense(np.zeros((a, b)), np.zeros(b), act))
        model = cls(layers)
        model.validate()
        return model

    def validate(self) -> None:
        if not self.layers:
            raise InvalidInputError("model has no layers")
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise InvalidInputError(f"unknown activation {layer.activation!r}")
            if layer.activation == "softmax" and i != len(self.layers) - 1:
                raise InvalidInputError("softmax is only allowed on the last layer")
            if layer.bias.shape != (layer.out_dim,):
                raise InvalidInputError(f"layer {i}: bias shape {layer.bias.shape} != ({layer.out_dim},)")
            if i and self.layers[i - 1].out_dim != layer.in_dim:
                raise InvalidInputError(f"layer {i}: input dim {layer.in_dim} != previous output {self.layers[i - 1].out_dim}")

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "MlpModel":
        return MlpModel([Dense(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[-1]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def forward(model: MlpModel, x) -> list[np.ndarray]:
    """Return ``[x, a_1, ..., a_L]``; the last entry is the model output."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise InvalidInputError(f"expected input (batch, {model.in_dim}), got {x.shape}")
    acts = [x]
    a = x
    for layer in model.layers:
        z = a @ layer.weight
        z += layer.bias
        if layer.activation == "relu":
            np.maximum(z, 0.0, out=z)
        elif layer.activation == "softmax":
            z = softmax(z)
        acts.append(z)
        a = z
    return acts


def backward(model: MlpModel, acts: list[np.ndarray], grad_out: np.ndarray, input_grad: bool = True):
    """Reverse pass.

    ``grad_out`` is the gradient with respect to the output of the last layer,
    except for a softmax layer where it is taken with respect to the logits
    (use :func:`cross_entropy_grad`).

    Returns
    -------
    grads : list of arrays aligned with ``model.parameters()``
    grad_input : array or None
    """
    g = np.asarray(grad_out, dtype=np.float64)
    grads: list[np.ndarray] = [None] * (2 * len(model.layers))
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == "relu":
            g = g * (acts[i + 1] > 0)
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i or input_grad:
            g = g @ layer.weight.T
    return grads, (g if input_grad else None)


def one_hot(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cross_entropy(probs, labels) -> float:
    """Mean negative log-probability of the true labels (floored at 1e-30)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    p = probs[np.arange(labels.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def cross_entropy_grad(probs, labels) -> np.ndarray:
    """Gradient of :func:`cross_entropy` w.r.t. the softmax logits: ``(p - onehot)/B``."""
    g = np.array(probs, dtype=np.float64)
    b = g.shape[0]
    g[np.arange(b), np.asarray(labels, dtype=np.int64)] -= 1.0
    g /= b
    return g


def power_normalize(x, p_t: float = 1.0, slots: int = 1):
    """Scale a batch so its average energy per slot is exactly ``p_t``.

    ``x`` has shape (batch, features) with the real-composite encoding of each
    sample's transmit symbols, so ``sum(x**2)`` is the total energy.

    Returns ``(scaled, scale)``.
    """
    x = np.asarray(x, dtype=np.float64)
    total = float(np.sum(x * x))
    if total == 0.0:
        raise DegenerateBatchError("cannot normalize an all-zero batch")
    scale = np.sqrt(x.shape[0] * slots * p_t / total)
    return x * scale, scale


def power_normalize_backward(x, scale: float, grad_scaled) -> np.ndarray:
    """Exact gradient through :func:`power_normalize`, cross-sample coupling included.

    With ``y = s x`` and ``s = sqrt(c / sum x^2)``:
    ``dL/dx = s g - (s / sum x^2) <g, x> x``.
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(grad_scaled, dtype=np.float64)
    total = float(np.sum(x * x))
    return scale * g - (scale * float(np.sum(g * x)) / total) * x


@dataclass
class AdamState:
    """Adam moments for a fixed list of parameter arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InvalidInputError("params, grads and optimizer state disagree in length")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise InvalidInputError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # p -= lr * (m / c1) / (sqrt(v / c2) + eps)
        denom = np.sqrt(v / c2)
        denom += state.eps
        p -= (state.lr / c1) * m / denom


def he_init(model: MlpModel, stream: RngStream) -> MlpModel:
    """Gaussian weights with variance 2/fan_in before ReLU, 1/fan_in otherwise; zero biases."""
    for i, layer in enumerate(model.layers):
        var = (2.0 if layer.activation == "relu" else 1.0) / layer.in_dim
        sub = stream.substream(i)
        layer.weight[...] = np.sqrt(var) * sub.standard_normal(layer.weight.shape)
        layer.bias[...] = 0.0
    return model


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}


def model_file_size(dims_or_model) -> int:
    """Byte size of a serialized model: 12 + sum(9 + 8 (in*out + out))."""
    dims = dims_or_model.dims if isinstance(dims_or_model, MlpModel) else list(dims_or_model)
    return 12 + sum(9 + 8 * (a * b + b) for a, b in zip(dims[:-1], dims[1:]))


def model_to_bytes(model: MlpModel) -> bytes:
    model.validate()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(model.layers)))
    for layer in model.layers:
        buf.write(struct.pack("<IIB", layer.in_dim, layer.out_dim, _ACT_CODE[layer.activation]))
    for layer in model.layers:
        buf.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return buf.getvalue()


def _parse_model(data: bytes, offset: int = 0) -> tuple[MlpModel, int]:
    """Parse one model starting at ``offset``; return it and the end offset."""

    def need(n, what):
        if offset + n > len(data):
            raise ModelFormatError(f"truncated {what} at byte offset {offset}")

    need(len(MAGIC), "magic")
    if data[offset : offset + len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"bad magic at byte offset {offset}")
    offset += len(MAGIC)
    need(4, "layer count")
    (count,) = struct.unpack_from("<I", data, offset)
    if count == 0 or count > 4096:
        raise ModelFormatError(f"implausible layer count {count} at byte offset {offset}")
    offset += 4
    headers = []
    for i in range(count):
        need(9, f"layer {i} header")
        a, b, code = struct.unpack_from("<IIB", data, offset)
        if not (0 < a <= MAX_DIM and 0 < b <= MAX_DIM):
            raise ModelFormatError(f"layer {i} dims {a}x{b} out of range at byte offset {offset}")
        if code >= len(ACTIVATIONS):
            raise ModelFormatError(f"layer {i} activation code {code} unknown at byte offset {offset + 8}")
        if headers and headers[-1][1] != a:
            raise ModelFormatError(f"layer {i} input dim {a} does not chain at byte offset {offset}")
        headers.append((a, b, ACTIVATIONS[code]))
        offset += 9
    layers = []
    for i, (a, b, act) in enumerate(headers):
        nbytes = 8 * (a * b + b)
        need(nbytes, f"layer {i} parameters")
        w = np.frombuffer(data, dtype="<f8", count=a * b, offset=offset).reshape(a, b).astype(np.float64)
        bias = np.frombuffer(data, dtype="<f8", count=b, offset=offset + 8 * a * b).astype(np.float64)
        offset += nbytes
        layers.append(Dense(w, bias, act))
    model = MlpModel(layers)
    try:
        model.validate()
    except InvalidInputError as e:
        raise ModelFormatError(str(e)) from None
    return model, offset


def model_from_bytes(data: bytes) -> MlpModel:
    model, end = _parse_model(data, 0)
    if end != len(data):
        raise ModelFormatError(f"trailing data at byte offset {end}")
    return model


def save_model(model: MlpModel, path) -> None:
    with open(path, "wb") as f:
        f.write(model_to_bytes(model))


def load_model(path) -> MlpModel:
    with open(path, "rb") as f:
        return model_from_bytes(f.read())


def write_container(models: list[MlpModel], path) -> None:
    """Several models in one file: u32 count, then the serialized models back to back."""
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(models)))
        for m in models:
            f.write(model_to_bytes(m))


def read_container(path) -> list[MlpModel]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise ModelFormatError("truncated container header at byte offset 0")
    (count,) = struct.unpack_from("<I", data, 0)
    if count == 0 or count > 64:
        raise ModelFormatError(f"implausible model count {count} at byte offset 0")
    offset = 4
    models = []
    for _ in range(count):
        m, offset = _parse_model(data, offset)
        models.append(m)
    if offset != len(data):
        raise ModelFormatError(f"trailing data at byte offset {offset}")
    return models
