"""Skip-gram word vectors trained with negative sampling.

Each vocabulary word owns a center vector (row of ``center``) and an outer
vector (row of ``outer``). For a (center, outer) pair and ``k`` noise words
drawn from the unigram distribution the per-pair loss is::

    -log s(u_o . v_c) - sum_i log s(-u_i . v_c),    s(x) = 1 / (1 + exp(-x))

minimised by minibatch SGD with a constant learning rate: every block of
``batch`` consecutive pairs yields one step along the gradient of the
block's mean loss.
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .corpus import Sentence, Vocabulary, unigram_distribution
from .seeding import rng_stream

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"RMEMB1"


@dataclass(frozen=True)
class EmbeddingConfig:
    window: int = 3
    dim: int = 300
    negatives: int = 64
    batch: int = 128
    lr: float = 1.0
    epochs: int = 15
    seed: int = 0
    noise_power: float = 1.0

    def __post_init__(self):
        for name in ("window", "dim", "negatives", "batch", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


@dataclass
class EmbeddingModel:
    vocab: Vocabulary
    center: np.ndarray
    outer: np.ndarray | None = None
    config: EmbeddingConfig = field(default_factory=EmbeddingConfig)

    def __post_init__(self):
        V = self.vocab.size
        if self.center.ndim != 2 or self.center.shape[0] != V:
            raise ValueError(f"center vectors must have {V} rows, got shape {self.center.shape}")
        if self.outer is not None and self.outer.shape != self.center.shape:
            raise ValueError("outer and center matrices differ in shape")

    @property
    def dim(self) -> int:
        return self.center.shape[1]

    def vector(self, token: str) -> np.ndarray:
        return self.center[self.vocab.id_of[token]]

    def __contains__(self, token: str) -> bool:
        return token in self.vocab


@dataclass
class LossTrace:
    """Mean per-pair loss per batch (``steps`` = pairs processed so far)."""

    steps: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    epoch_means: list[float] = field(default_factory=list)

    def append(self, step: int, loss: float) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError("trace steps must be strictly increasing")
        self.steps.append(step)
        self.losses.append(loss)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("step,mean_loss\n")
            for s, l in zip(self.steps, self.losses):
                fh.write(f"{s},{l:.17g}\n")


def init_model(vocab: Vocabulary, config: EmbeddingConfig) -> EmbeddingModel:
    """Both matrices uniform on [-1, 1], drawn from the seed's init stream."""
    rng = rng_stream(config.seed, "embedding-init")
    shape = (vocab.size, config.dim)
    center = rng.uniform(-1.0, 1.0, size=shape)
    outer = rng.uniform(-1.0, 1.0, size=shape)
    return EmbeddingModel(vocab, center, outer, config)


def _sentence_ids(sentence, vocab: Vocabulary) -> list[int]:
    tokens = sentence.tokens if isinstance(sentence, Sentence) else sentence
    return [vocab.id_of.get(t, -1) for t in tokens]


def generate_pairs(sentences: Iterable, vocab: Vocabulary, window: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One (center, outer) pair per in-vocabulary position.

    The outer word is drawn uniformly from the in-vocabulary tokens at most
    ``window`` positions away in the same sentence. Positions without such a
    neighbour produce nothing.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    centers: list[int] = []
    outers: list[int] = []
    for sentence in sentences:
        ids = _sentence_ids(sentence, vocab)
        n = len(ids)
        if n < 2:
            continue
        draws = rng.random(n)
        for i, c in enumerate(ids):
            if c < 0:
                continue
            nbrs = [ids[j] for j in range(max(0, i - window), min(n, i + window + 1))
                    if j != i and ids[j] >= 0]
            if nbrs:
                centers.append(c)
                outers.append(nbrs[int(draws[i] * len(nbrs))])
    return np.array(centers, dtype=np.int64), np.array(outers, dtype=np.int64)


def sample_negatives(noise: np.ndarray, size, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws of word ids from ``noise``."""
    cdf = np.cumsum(noise)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(idx, len(noise) - 1).astype(np.int64)


def sigmoid(x):
    """Logistic function, evaluated without overflow for any finite input."""
    if np.ndim(x) == 0:
        x = float(x)
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        z = math.exp(x)
        return z / (1.0 + z)
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def log_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def _check_ids(model: EmbeddingModel, *ids) -> None:
    V = model.vocab.size
    for i in ids:
        if not 0 <= int(i) < V:
            raise IndexError(f"word id {i} outside vocabulary of size {V}")


def nce_loss(center_id: int, outer_id: int, negative_ids: Sequence[int],
             model: EmbeddingModel) -> float:
    negs = np.asarray(negative_ids, dtype=np.int64)
    _check_ids(model, center_id, outer_id, *negs)
    vc = model.center[center_id]
    pos = model.outer[outer_id] @ vc
    neg = model.outer[negs] @ vc
    return float(-log_sigmoid(pos) - log_sigmoid(-neg).sum())


@dataclass
class NCEGradients:
    center: np.ndarray      # d
    outer: np.ndarray       # d, for the true outer word's own term
    negatives: np.ndarray   # k x d, one row per noise draw

    def dense(self, center_id, outer_id, negative_ids, shape) -> tuple[np.ndarray, np.ndarray]:
        """Full-matrix gradients (center, outer); repeated ids accumulate."""
        g_center = np.zeros(shape)
        g_outer = np.zeros(shape)
        g_center[center_id] = self.center
        g_outer[outer_id] += self.outer
        np.add.at(g_outer, np.asarray(negative_ids, dtype=np.int64), self.negatives)
        return g_center, g_outer


def nce_gradients(center_id: int, outer_id: int, negative_ids: Sequence[int],
                  model: EmbeddingModel) -> NCEGradients:
    negs = np.asarray(negative_ids, dtype=np.int64)
    _check_ids(model, center_id, outer_id, *negs)
    vc = model.center[center_id]
    uo = model.outer[outer_id]
    un = model.outer[negs]
    pos_coef = -sigmoid(-(uo @ vc))          # s(x) - 1
    neg_coef = sigmoid(un @ vc)
    return NCEGradients(
        center=pos_coef * uo + neg_coef @ un,
        outer=pos_coef * vc,
        negatives=np.outer(neg_coef, vc),
    )


def train_embeddings(sentences: Sequence, vocab: Vocabulary, config: EmbeddingConfig,
                     sweep=None) -> tuple[EmbeddingModel, LossTrace]:
    """Skip-gram SGD over ``config.epochs`` passes.

    Pairs are consumed in corpus order, ``config.batch`` per SGD step; the
    trace holds one mean loss per step. ``sweep`` overrides the kernel.
    """
    if vocab.size < 1:
        raise ValueError("empty vocabulary")
    sweep = sweep or kernels.sgns_sweep
    model = init_model(vocab, config)
    noise = unigram_distribution(vocab, config.noise_power)
    pair_rng = rng_stream(config.seed, "embedding-pairs")
    neg_rng = rng_stream(config.seed, "embedding-negatives")
    trace = LossTrace()
    done = 0
    for epoch in range(config.epochs):
        centers, outers = generate_pairs(sentences, vocab, config.window, pair_rng)
        if len(centers) == 0:
            raise ValueError("corpus yields no training pairs")
        negatives = sample_negatives(noise, (len(centers), config.negatives), neg_rng)
        losses = np.empty(len(centers))
        sweep(model.center, model.outer, centers, outers, negatives, float(config.lr),
              config.batch, losses)
        for start in range(0, len(losses), config.batch):
            chunk = losses[start:start + config.batch]
            done += len(chunk)
            trace.append(done, float(chunk.mean()))
        trace.epoch_means.append(float(losses.mean()))
        log.info("epoch %d/%d: %d pairs, mean loss %.4f", epoch + 1, config.epochs,
                 len(losses), trace.epoch_means[-1])
    if not np.all(np.isfinite(model.center)) or not np.all(np.isfinite(model.outer)):
        raise FloatingPointError("training diverged to non-finite parameters")
    return model, trace


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def nearest_neighbors(model: EmbeddingModel, token: str, n: int) -> list[tuple[str, float]]:
    if token not in model.vocab:
        raise KeyError(f"token not in vocabulary: {token!r}")
    if n <= 0:
        return []
    q = model.vector(token)
    norms = np.linalg.norm(model.center, axis=1)
    qn = np.linalg.norm(q)
    if qn == 0:
        raise ValueError(f"zero vector for {token!r}")
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.clip(model.center @ q / (norms * qn), -1.0, 1.0)
    qid = model.vocab.id_of[token]
    ranked = sorted(
        ((model.vocab.tokens[i], float(sims[i])) for i in range(model.vocab.size)
         if i != qid and norms[i] > 0),
        key=lambda ts: (-ts[1], ts[0]),
    )
    return ranked[:n]


def save_embeddings(model: EmbeddingModel, path: str | Path) -> None:
    V, d = model.center.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{V} {d}\n")
        for token, row in zip(model.vocab.tokens, model.center):
            fh.write(token + " " + " ".join(format(x, ".17g") for x in row) + "\n")


class EmbeddingFormatError(ValueError):
    pass


def load_embeddings(path: str | Path) -> EmbeddingModel:
    """Read the text format written by :func:`save_embeddings`."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise EmbeddingFormatError(f"malformed header: {' '.join(header)!r}")
        V, d = map(int, header)
        tokens: list[str] = []
        seen: set[str] = set()
        matrix = np.empty((V, d))
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(tokens) == V:
                raise EmbeddingFormatError(f"more than {V} rows (line {lineno})")
            token, values = parts[0], parts[1:]
            if len(values) != d:
                raise EmbeddingFormatError(
                    f"line {lineno}: expected {d} values for {token!r}, got {len(values)}")
            if token in seen:
                raise EmbeddingFormatError(f"duplicate token {token!r} at line {lineno}")
            seen.add(token)
            matrix[len(tokens)] = [float(v) for v in values]
            tokens.append(token)
    if len(tokens) != V:
        raise EmbeddingFormatError(f"header declares {V} rows, found {len(tokens)}")
    # counts are not stored in the text format
    vocab = Vocabulary(tuple(tokens), (1,) * V)
    return EmbeddingModel(vocab, matrix, None, EmbeddingConfig(dim=d))


def save_checkpoint(model: EmbeddingModel, path: str | Path) -> None:
    """Binary container: magic, header length, JSON header, then raw arrays."""
    header = {
        "version": 1,
        "config": asdict(model.config),
        "tokens": list(model.vocab.tokens),
        "counts": list(model.vocab.counts),
        "shape": list(model.center.shape),
        "has_outer": model.outer is not None,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(model.center, dtype="<f8").tobytes())
        if model.outer is not None:
            fh.write(np.ascontiguousarray(model.outer, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> EmbeddingModel:
    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise EmbeddingFormatError("not an embedding checkpoint (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        V, d = header["shape"]
        size = V * d * 8

        def read_matrix():
            buf = fh.read(size)
            if len(buf) != size:
                raise EmbeddingFormatError("truncated checkpoint")
            return np.frombuffer(buf, dtype="<f8").reshape(V, d).astype(np.float64)

        center = read_matrix()
        outer = read_matrix() if header["has_outer"] else None
    vocab = Vocabulary(tuple(header["tokens"]), tuple(header["counts"]))
    return EmbeddingModel(vocab, center, outer, EmbeddingConfig(**header["config"]))
