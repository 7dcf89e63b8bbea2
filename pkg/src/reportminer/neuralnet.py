"""Small neural-network engine: layers with hand-written backward passes.

Tensors are float64 numpy arrays, batch-first. A :class:`Network` is a chain
of layers built from :class:`LayerSpec` records; the loss head is softmax
plus cross-entropy on the last layer's outputs.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("tanh", "relu", "linear")
KINDS = ("embedding_lookup", "dense", "conv1d", "maxpool1d", "lstm", "dropout", "mean_reduce")
CHECKPOINT_MAGIC = b"RMNET1"
PROB_FLOOR = 1e-12


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------- functions

def _activate(z, activation):
    if activation == "tanh":
        return np.tanh(z)
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "linear":
        return z
    raise ValueError(f"unknown activation {activation!r}")


def _activation_grad(out, activation):
    """Derivative w.r.t. the pre-activation, expressed through the output."""
    if activation == "tanh":
        return 1.0 - out * out
    if activation == "relu":
        return (out > 0).astype(out.dtype)
    return np.ones_like(out)


def _sigmoid(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def dense_forward(x, W, bias, activation="linear"):
    x, W, bias = np.asarray(x, float), np.asarray(W, float), np.asarray(bias, float)
    if W.ndim != 2 or x.shape[-1] != W.shape[1] or bias.shape != (W.shape[0],):
        raise ShapeError(f"dense: x {x.shape}, W {W.shape}, bias {bias.shape}")
    return _activate(x @ W.T + bias, activation)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(pred, gold: int) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    if not 0 <= gold < pred.shape[-1]:
        raise IndexError(f"gold index {gold} out of range for {pred.shape[-1]} classes")
    return float(-np.log(max(pred[gold], PROB_FLOOR)))


def conv1d_forward(x, filters, bias, activation="relu"):
    """Same-length 1-D convolution: ``x`` is L x C, ``filters`` F x width x C."""
    x = np.asarray(x, float)
    out = _conv_batch(x[None], np.asarray(filters, float), np.asarray(bias, float))
    return _activate(out[0], activation)


def _im2col(x, width):
    """(B, L, C) -> (B, L, width*C) windows over zero-padded input."""
    B, L, C = x.shape
    left = (width - 1) // 2
    padded = np.zeros((B, L + width - 1, C))
    padded[:, left:left + L] = x
    cols = np.stack([padded[:, j:j + L] for j in range(width)], axis=2)
    return cols.reshape(B, L, width * C)


def _conv_batch(x, filters, bias):
    if x.ndim != 3 or filters.ndim != 3 or filters.shape[2] != x.shape[2] \
            or bias.shape != (filters.shape[0],):
        raise ShapeError(f"conv1d: x {x.shape}, filters {filters.shape}, bias {bias.shape}")
    if x.shape[1] < 1:
        raise ShapeError("conv1d needs at least one position")
    F = filters.shape[0]
    return _im2col(x, filters.shape[1]) @ filters.reshape(F, -1).T + bias


def maxpool1d(x, pool: int = 2):
    """Non-overlapping max over windows of ``pool``; a short last window is kept."""
    x = np.asarray(x, float)
    return _pool_batch(x[None], pool)[0][0]


def _pool_batch(x, pool):
    B, L, F = x.shape
    if L < 1:
        raise ShapeError("maxpool1d needs at least one position")
    out_len = -(-L // pool)
    padded = np.full((B, out_len * pool, F), -np.inf)
    padded[:, :L] = x
    windows = padded.reshape(B, out_len, pool, F)
    arg = windows.argmax(axis=2)          # first maximal index on ties
    return np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :], arg


@dataclass
class LSTMParams:
    """Gate blocks stacked in order input, forget, output, candidate."""

    W: np.ndarray   # 4H x D
    U: np.ndarray   # 4H x H
    b: np.ndarray   # 4H

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


def lstm_step(x_t, h_prev, c_prev, params: LSTMParams):
    x_t, h_prev, c_prev = (np.asarray(a, float) for a in (x_t, h_prev, c_prev))
    H = params.hidden
    if params.W.shape != (4 * H, x_t.shape[-1]) or params.U.shape != (4 * H, H) \
            or params.b.shape != (4 * H,) or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ShapeError("lstm_step: parameter and state shapes do not conform")
    z = x_t @ params.W.T + h_prev @ params.U.T + params.b
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    o = _sigmoid(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def dropout(x, rate: float, train: bool, rng: np.random.Generator | None = None):
    """Inverted dropout; identity outside training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    x = np.asarray(x, float)
    if not train or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    return x * keep / (1.0 - rate)


def sgd_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> None:
    """In place ``p -= lr * g``."""
    if len(params) != len(grads):
        raise ShapeError("parameter and gradient lists differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"sgd_update: parameter {p.shape} vs gradient {g.shape}")
        p -= lr * g


# ---------------------------------------------------------------- layers

@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0              # dense / lstm outputs, conv filters
    width: int = 3              # conv filter length
    pool: int = 2
    rate: float = 0.0
    activation: str = "linear"
    trainable: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("dense", "conv1d", "lstm") and self.units < 1:
            raise ValueError(f"{self.kind} needs units >= 1")
        if self.width < 1 or self.pool < 1:
            raise ValueError("width and pool must be >= 1")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class Context:
    """Per-call state shared by layers: sentence lengths, mode, dropout RNG."""

    def __init__(self, lengths, train=False, rng=None):
        self.lengths = np.asarray(lengths, dtype=np.int64)
        self.train = train
        self.rng = rng


class Layer:
    spec: LayerSpec
    params: dict
    grads: dict

    def forward(self, x, ctx: Context):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


class EmbeddingLookup(Layer):
    """Row lookup; rows listed in ``fixed_rows`` (padding, OOV) never change."""

    def __init__(self, spec, matrix, fixed_rows=()):
        self.spec = spec
        self.params = {"E": np.array(matrix, dtype=np.float64)}
        self.fixed_rows = np.asarray(fixed_rows, dtype=np.int64)
        self.zero_grad()

    def forward(self, ids, ctx):
        self.ids = np.asarray(ids, dtype=np.int64)
        return self.params["E"][self.ids]

    def backward(self, dout):
        if self.spec.trainable:
            np.add.at(self.grads["E"], self.ids.ravel(), dout.reshape(-1, dout.shape[-1]))
            self.grads["E"][self.fixed_rows] = 0.0
        return None


class MeanReduce(Layer):
    """Mean over the first ``length`` positions; zero for empty sentences."""

    def __init__(self, spec):
        self.spec, self.params = spec, {}
        self.zero_grad()

    def forward(self, x, ctx):
        B, L, _ = x.shape
        mask = np.arange(L)[None, :] < ctx.lengths[:, None]
        self.weights = mask / np.maximum(ctx.lengths, 1)[:, None]
        return np.einsum("bl,bld->bd", self.weights, x)

    def backward(self, dout):
        return self.weights[:, :, None] * dout[:, None, :]


class Dense(Layer):
    """Fully connected; flattens everything after the batch axis."""

    def __init__(self, spec, n_in, rng):
        self.spec = spec
        limit = np.sqrt(6.0 / (n_in + spec.units))
        self.params = {"W": rng.uniform(-limit, limit, (spec.units, n_in)),
                       "b": np.zeros(spec.units)}
        self.zero_grad()

    def forward(self, x, ctx):
        self.in_shape = x.shape
        self.x = x.reshape(x.shape[0], -1)
        if self.x.shape[1] != self.params["W"].shape[1]:
            raise ShapeError(f"dense expects {self.params['W'].shape[1]} inputs, got {self.x.shape[1]}")
        self.out = _activate(self.x @ self.params["W"].T + self.params["b"], self.spec.activation)
        return self.out

    def backward(self, dout):
        dz = dout * _activation_grad(self.out, self.spec.activation)
        self.grads["W"] += dz.T @ self.x
        self.grads["b"] += dz.sum(axis=0)
        return (dz @ self.params["W"]).reshape(self.in_shape)


class Conv1D(Layer):
    def __init__(self, spec, channels, rng):
        self.spec = spec
        fan_in, fan_out = spec.width * channels, spec.width * spec.units
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.params = {"W": rng.uniform(-limit, limit, (spec.units, spec.width, channels)),
                       "b": np.zeros(spec.units)}
        self.zero_grad()

    def forward(self, x, ctx):
        self.x_shape = x.shape
        self.cols = _im2col(x, self.spec.width)
        W = self.params["W"]
        if W.shape[2] != x.shape[2]:
            raise ShapeError(f"conv1d expects {W.shape[2]} channels, got {x.shape[2]}")
        self.out = _activate(self.cols @ W.reshape(W.shape[0], -1).T + self.params["b"],
                             self.spec.activation)
        return self.out

    def backward(self, dout):
        W = self.params["W"]
        F, width, C = W.shape
        dz = dout * _activation_grad(self.out, self.spec.activation)       # B x L x F
        self.grads["W"] += np.einsum("blf,blk->fk", dz, self.cols).reshape(W.shape)
        self.grads["b"] += dz.sum(axis=(0, 1))
        dcols = (dz @ W.reshape(F, -1)).reshape(dz.shape[0], dz.shape[1], width, C)
        B, L, _ = self.x_shape
        left = (width - 1) // 2
        dpad = np.zeros((B, L + width - 1, C))
        for j in range(width):
            dpad[:, j:j + L] += dcols[:, :, j]
        return dpad[:, left:left + L]


class MaxPool1D(Layer):
    def __init__(self, spec):
        self.spec, self.params = spec, {}
        self.zero_grad()

    def forward(self, x, ctx):
        self.x_shape = x.shape
        out, self.arg = _pool_batch(x, self.spec.pool)
        return out

    def backward(self, dout):
        B, L, F = self.x_shape
        pool = self.spec.pool
        out_len = dout.shape[1]
        dwin = np.zeros((B, out_len, pool, F))
        np.put_along_axis(dwin, self.arg[:, :, None, :], dout[:, :, None, :], axis=2)
        return dwin.reshape(B, out_len * pool, F)[:, :L]


class LSTM(Layer):
    """Single-layer LSTM returning the hidden state after each sentence's last token.

    Positions at or beyond a sentence's length leave the state unchanged.
    """

    def __init__(self, spec, n_in, rng, scale=0.08, forget_bias=1.0):
        self.spec = spec
        H = spec.units
        b = np.zeros(4 * H)
        b[H:2 * H] = forget_bias
        self.params = {"W": rng.uniform(-scale, scale, (4 * H, n_in)),
                       "U": rng.uniform(-scale, scale, (4 * H, H)),
                       "b": b}
        self.zero_grad()

    def forward(self, x, ctx):
        B, L, _ = x.shape
        H = self.spec.units
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        if W.shape[1] != x.shape[2]:
            raise ShapeError(f"lstm expects {W.shape[1]} inputs, got {x.shape[2]}")
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        self.x = x
        self.cache = []
        for t in range(L):
            m = (t < ctx.lengths)[:, None].astype(np.float64)
            z = x[:, t] @ W.T + h @ U.T + b
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            o = _sigmoid(z[:, 2 * H:3 * H])
            g = np.tanh(z[:, 3 * H:])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            self.cache.append((h, c, i, f, o, g, tc, m))
            h = m * (o * tc) + (1 - m) * h
            c = m * c_new + (1 - m) * c
        return h

    def backward(self, dh):
        W, U = self.params["W"], self.params["U"]
        dx = np.zeros_like(self.x)
        dc = np.zeros_like(dh)
        for t in reversed(range(len(self.cache))):
            h_prev, c_prev, i, f, o, g, tc, m = self.cache[t]
            dh_new, dc_new = m * dh, m * dc
            do = dh_new * tc
            dc_new = dc_new + dh_new * o * (1 - tc * tc)
            di, dg, df = dc_new * g, dc_new * i, dc_new * c_prev
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 do * o * (1 - o), dg * (1 - g * g)], axis=1)
            self.grads["W"] += dz.T @ self.x[:, t]
            self.grads["U"] += dz.T @ h_prev
            self.grads["b"] += dz.sum(axis=0)
            dx[:, t] = dz @ W
            dh = dz @ U + (1 - m) * dh
            dc = dc_new * f + (1 - m) * dc
        return dx


class Dropout(Layer):
    def __init__(self, spec):
        self.spec, self.params = spec, {}
        self.zero_grad()

    def forward(self, x, ctx):
        rate = self.spec.rate
        if not ctx.train or rate == 0.0:
            self.scale = None
            return x
        self.scale = (ctx.rng.random(x.shape) >= rate) / (1.0 - rate)
        return x * self.scale

    def backward(self, dout):
        return dout if self.scale is None else dout * self.scale


# ---------------------------------------------------------------- network

class Network:
    """Layer chain built from specs, with softmax/cross-entropy loss head."""

    def __init__(self, specs: Sequence[LayerSpec], layers: Sequence[Layer]):
        self.specs = list(specs)
        self.layers = list(layers)

    @classmethod
    def build(cls, specs: Sequence[LayerSpec], embedding: np.ndarray, seq_len: int,
              rng: np.random.Generator, fixed_rows=()) -> "Network":
        """Create layers with fresh weights; the first spec must be an embedding lookup."""
        if not specs or specs[0].kind != "embedding_lookup":
            raise ValueError("a network starts with an embedding_lookup layer")
        layers: list[Layer] = []
        shape: tuple = (seq_len, embedding.shape[1])     # per-example shape
        for spec in specs:
            if spec.kind == "embedding_lookup":
                layers.append(EmbeddingLookup(spec, embedding, fixed_rows))
            elif spec.kind == "mean_reduce":
                layers.append(MeanReduce(spec))
                shape = (shape[-1],)
            elif spec.kind == "dense":
                layers.append(Dense(spec, int(np.prod(shape)), rng))
                shape = (spec.units,)
            elif spec.kind == "conv1d":
                layers.append(Conv1D(spec, shape[-1], rng))
                shape = (shape[0], spec.units)
            elif spec.kind == "maxpool1d":
                layers.append(MaxPool1D(spec))
                shape = (-(-shape[0] // spec.pool), shape[1])
            elif spec.kind == "lstm":
                layers.append(LSTM(spec, shape[-1], rng))
                shape = (spec.units,)
            elif spec.kind == "dropout":
                layers.append(Dropout(spec))
        return cls(specs, layers)

    def forward(self, ids, lengths, train=False, rng=None):
        """Logits, shape (batch, classes)."""
        ctx = Context(lengths, train, rng)
        x = ids
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def predict_proba(self, ids, lengths):
        return softmax(self.forward(ids, lengths))

    def loss(self, ids, lengths, gold, train=False, rng=None) -> float:
        probs = softmax(self.forward(ids, lengths, train, rng))
        gold = np.asarray(gold)
        return float(-np.log(np.maximum(probs[np.arange(len(gold)), gold], PROB_FLOOR)).mean())

    def backward(self, probs, gold):
        """Accumulate gradients of the mean cross-entropy given forward outputs."""
        for layer in self.layers:
            layer.zero_grad()
        gold = np.asarray(gold)
        d = probs.copy()
        d[np.arange(len(gold)), gold] -= 1.0
        d /= len(gold)
        for layer in reversed(self.layers):
            d = layer.backward(d)

    def parameters(self, trainable_only=True) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(name, value, gradient) triples in layer order."""
        out = []
        for i, layer in enumerate(self.layers):
            if trainable_only and not layer.spec.trainable:
                continue
            for name, value in layer.params.items():
                out.append((f"{i}.{layer.spec.kind}.{name}", value, layer.grads[name]))
        return out

    def step(self, lr: float) -> None:
        params = self.parameters()
        sgd_update([p for _, p, _ in params], [g for _, _, g in params], lr)


def backward(network: Network, ids, lengths, gold, train=False, rng=None) -> dict[str, np.ndarray]:
    """Forward then reverse pass; returns a copy of every trainable gradient."""
    probs = softmax(network.forward(ids, lengths, train, rng))
    network.backward(probs, gold)
    return {name: g.copy() for name, _, g in network.parameters()}


def numeric_gradient(f: Callable[[], float], array: np.ndarray, eps: float = 1e-5,
                     index=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``array`` (perturbed in place, restored)."""
    grad = np.zeros_like(array)
    indices = np.ndindex(array.shape) if index is None else index
    for idx in indices:
        old = array[idx]
        array[idx] = old + eps
        up = f()
        array[idx] = old - eps
        down = f()
        array[idx] = old
        grad[idx] = (up - down) / (2 * eps)
    return grad


def relative_error(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


# ---------------------------------------------------------------- persistence

def save_network(network: Network, path: str | Path, extra: dict | None = None,
                 skip_frozen_embedding: bool = True) -> None:
    """``RMNET1`` container: magic, header length, JSON header, raw float64 tensors."""
    tensors = []
    for i, layer in enumerate(network.layers):
        if skip_frozen_embedding and layer.spec.kind == "embedding_lookup" \
                and not layer.spec.trainable:
            continue
        for name, value in layer.params.items():
            tensors.append((i, name, value))
    header = {
        "version": 1,
        "specs": [asdict(s) for s in network.specs],
        "tensors": [{"layer": i, "name": n, "shape": list(v.shape)} for i, n, v in tensors],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, _, v in tensors:
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_network(path: str | Path) -> tuple[dict, list[tuple[int, str, np.ndarray]]]:
    """Header and tensors of an ``RMNET1`` file."""
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a network checkpoint (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        tensors = []
        for t in header["tensors"]:
            n = int(np.prod(t["shape"])) * 8
            buf = fh.read(n)
            if len(buf) != n:
                raise ValueError(f"{path}: truncated checkpoint")
            arr = np.frombuffer(buf, dtype="<f8").reshape(t["shape"]).astype(np.float64)
            tensors.append((t["layer"], t["name"], arr))
    return header, tensors
