"""EVENT / SYMPTOM / ACTION sentence classifiers over pre-trained word vectors."""
from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Sentence, clean_text, tokenize
from .embedding import EmbeddingModel, load_embeddings
from .neuralnet import LayerSpec, Network, read_network, save_network, softmax
from .seeding import rng_stream

log = logging.getLogger(__name__)

LABELS = ("EVENT", "SYMPTOM", "ACTION")
LABEL_ID = {name: i for i, name in enumerate(LABELS)}
KINDS = ("avg", "cnn", "lstm")
PAD_TOKEN = "<PAD>"      # whitespace is impossible in corpus tokens, "<PAD>" is reserved


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSentence:
    sentence: Sentence
    label: int

    @property
    def tokens(self):
        return self.sentence.tokens


@dataclass(frozen=True)
class ClassifierConfig:
    lr: float = 0.1
    epochs: int = 50
    batch: int = 32
    seed: int = 0
    fine_tune: bool = False
    avg_hidden: int = 20
    cnn_filters: int = 128
    cnn_width: int = 3
    cnn_hidden: int = 128
    lstm_units: int = 100
    dropout: float = 0.5

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 0 or self.batch < 1:
            raise ValueError("invalid classifier hyperparameters")


def load_labeled(path: str | Path) -> tuple[list[LabeledSentence], int]:
    """Parse ``label<TAB>sentence`` rows; returns (records, skipped-empty count).

    Every row is validated before anything is returned, so a bad label
    stops the run before training starts.
    """
    records, skipped = [], 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep:
                raise LabelError(f"line {lineno}: expected label<TAB>sentence")
            if label not in LABEL_ID:
                raise LabelError(f"line {lineno}: unknown label {label!r}")
            tokens = tokenize(clean_text(text))
            if not tokens:
                skipped += 1
                continue
            records.append(LabeledSentence(Sentence(tuple(tokens), index=lineno - 1),
                                           LABEL_ID[label]))
    if skipped:
        log.warning("%s: skipped %d sentences that were empty after cleaning", path, skipped)
    return records, skipped


def labeled_from_rows(rows: Sequence[tuple[str, Sequence[str] | str]]) -> list[LabeledSentence]:
    out = []
    for i, (label, text) in enumerate(rows):
        if label not in LABEL_ID:
            raise LabelError(f"unknown label {label!r}")
        tokens = tokenize(clean_text(text)) if isinstance(text, str) else list(text)
        if tokens:
            out.append(LabeledSentence(Sentence(tuple(tokens), index=i), LABEL_ID[label]))
    return out


def pad_sentence(items: Sequence, length: int, pad=PAD_TOKEN) -> list:
    """Right-pad with ``pad`` to ``length``, truncating longer input on the right."""
    if length < 1:
        raise ValueError("pad length must be >= 1")
    items = list(items)[:length]
    return items + [pad] * (length - len(items))


def sentence_feature_avg(tokens: Sequence[str], embedding: EmbeddingModel) -> np.ndarray:
    """Mean word vector; out-of-vocabulary words count as zero vectors."""
    out = np.zeros(embedding.dim)
    if not tokens:
        return out
    for t in tokens:
        if t in embedding.vocab:
            out += embedding.vector(t)
    return out / len(tokens)


def architecture_specs(kind: str, config: ClassifierConfig = ClassifierConfig()) -> list[LayerSpec]:
    emb = LayerSpec("embedding_lookup", trainable=config.fine_tune)
    if kind == "avg":
        return [emb, LayerSpec("mean_reduce"),
                LayerSpec("dense", units=config.avg_hidden, activation="tanh"),
                LayerSpec("dense", units=len(LABELS))]
    if kind == "cnn":
        conv = LayerSpec("conv1d", units=config.cnn_filters, width=config.cnn_width,
                         activation="relu")
        pool = LayerSpec("maxpool1d", pool=2)
        return [emb, conv, pool, conv, pool,
                LayerSpec("dense", units=config.cnn_hidden, activation="relu"),
                LayerSpec("dense", units=len(LABELS))]
    if kind == "lstm":
        return [emb, LayerSpec("lstm", units=config.lstm_units),
                LayerSpec("dropout", rate=config.dropout),
                LayerSpec("dense", units=len(LABELS))]
    raise ValueError(f"unknown architecture {kind!r}; expected one of {KINDS}")


def lookup_matrix(embedding: EmbeddingModel) -> np.ndarray:
    """Word vectors plus two zero rows: padding (id V) and unknown words (id V+1)."""
    return np.vstack([embedding.center, np.zeros((2, embedding.dim))])


def build_architecture(kind: str, embedding: EmbeddingModel, pad_length: int,
                       config: ClassifierConfig = ClassifierConfig(),
                       rng: np.random.Generator | None = None) -> Network:
    if pad_length < 1:
        raise ValueError("pad length must be >= 1")
    specs = architecture_specs(kind, config)
    rng = rng or rng_stream(config.seed, f"classifier-init-{kind}")
    V = embedding.vocab.size
    return Network.build(specs, lookup_matrix(embedding), pad_length, rng, fixed_rows=(V, V + 1))


@dataclass
class TrainedClassifier:
    kind: str
    network: Network
    embedding: EmbeddingModel
    pad_length: int
    config: ClassifierConfig = field(default_factory=ClassifierConfig)

    @property
    def pad_id(self) -> int:
        return self.embedding.vocab.size

    @property
    def oov_id(self) -> int:
        return self.embedding.vocab.size + 1

    def encode(self, batch: Sequence[Sequence[str]]) -> tuple[np.ndarray, np.ndarray]:
        """Padded id matrix and true lengths for a batch of token lists.

        The averaging net sees whole sentences; the others are cut at ``pad_length``.
        """
        id_of = self.embedding.vocab.id_of
        if self.kind == "avg":
            width = max([len(t) for t in batch] + [1])
        else:
            width = self.pad_length
        ids = np.full((len(batch), width), self.pad_id, dtype=np.int64)
        lengths = np.zeros(len(batch), dtype=np.int64)
        for r, tokens in enumerate(batch):
            row = [id_of.get(t, self.oov_id) for t in tokens[:width]]
            ids[r, :len(row)] = row
            lengths[r] = len(row)
        return ids, lengths

    def predict_proba(self, batch: Sequence[Sequence[str]]) -> np.ndarray:
        ids, lengths = self.encode(batch)
        return self.network.predict_proba(ids, lengths)


def _tokens(item) -> list[str]:
    if isinstance(item, LabeledSentence):
        return list(item.tokens)
    if isinstance(item, Sentence):
        return list(item.tokens)
    if isinstance(item, str):
        return tokenize(clean_text(item))
    return list(item)


def predict(classifier: TrainedClassifier, sentence) -> tuple[str, np.ndarray]:
    """Most probable label (lowest id on ties) and the probability vector."""
    probs = classifier.predict_proba([_tokens(sentence)])[0]
    return LABELS[int(np.argmax(probs))], probs


def predict_many(classifier: TrainedClassifier, sentences, batch: int = 256) -> np.ndarray:
    tokens = [_tokens(s) for s in sentences]
    if not tokens:
        return np.zeros((0, len(LABELS)))
    return np.vstack([classifier.predict_proba(tokens[i:i + batch])
                      for i in range(0, len(tokens), batch)])


def _class_groups(data: Sequence[LabeledSentence], rng) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, item in enumerate(data):
        groups.setdefault(item.label, []).append(i)
    for label in sorted(groups):
        rng.shuffle(groups[label])
    return groups


def split_train_test(data: Sequence[LabeledSentence], fraction: float = 0.8,
                     seed: int = 0) -> tuple[list[LabeledSentence], list[LabeledSentence]]:
    """Stratified shuffle split with exactly ``round(fraction * n)`` training rows.

    Per-class training counts use largest-remainder rounding.
    """
    if not data:
        raise ValueError("cannot split an empty data set")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    groups = _class_groups(data, rng_stream(seed, "split"))
    for label, idx in groups.items():
        if len(idx) < 2:
            raise ValueError(f"class {LABELS[label]} has fewer than 2 members")
    target = int(round(fraction * len(data)))
    exact = {lab: fraction * len(idx) for lab, idx in groups.items()}
    take = {lab: int(np.floor(v)) for lab, v in exact.items()}
    order = sorted(groups, key=lambda lab: (-(exact[lab] - take[lab]), lab))
    for lab in order[:target - sum(take.values())]:
        take[lab] += 1
    train_idx = sorted(i for lab in groups for i in groups[lab][:take[lab]])
    test_idx = sorted(i for lab in groups for i in groups[lab][take[lab]:])
    return [data[i] for i in train_idx], [data[i] for i in test_idx]


def stratified_folds(data: Sequence[LabeledSentence], k: int = 5, seed: int = 0) -> list[list[int]]:
    """Partition indices into ``k`` folds, dealing each class round-robin."""
    if k < 2:
        raise ValueError("k must be >= 2")
    groups = _class_groups(data, rng_stream(seed, "folds"))
    for label, idx in groups.items():
        if len(idx) < k:
            raise ValueError(f"class {LABELS[label]} has {len(idx)} members, fewer than k={k}")
    folds: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for label in sorted(groups):
        for i in groups[label]:
            folds[pos % k].append(i)
            pos += 1
    return [sorted(f) for f in folds]


def train_classifier(train: Sequence[LabeledSentence], kind: str, embedding: EmbeddingModel,
                     config: ClassifierConfig = ClassifierConfig()) -> TrainedClassifier:
    """Minibatch SGD on mean cross-entropy; deterministic for a given seed."""
    if not train:
        raise ValueError("empty training set")
    present = Counter(item.label for item in train)
    for lab, name in enumerate(LABELS):
        if present[lab] == 0:
            log.warning("no training examples for class %s", name)
    pad_length = max(max(len(item.tokens) for item in train), 1)
    net = build_architecture(kind, embedding, pad_length, config)
    clf = TrainedClassifier(kind, net, embedding, pad_length, config)
    order_rng = rng_stream(config.seed, f"classifier-order-{kind}")
    drop_rng = rng_stream(config.seed, f"dropout-{kind}")
    tokens = [list(item.tokens) for item in train]
    gold = np.array([item.label for item in train])
    for epoch in range(config.epochs):
        order = order_rng.permutation(len(train))
        total = 0.0
        for start in range(0, len(order), config.batch):
            batch = order[start:start + config.batch]
            ids, lengths = clf.encode([tokens[i] for i in batch])
            probs = softmax(net.forward(ids, lengths, train=True, rng=drop_rng))
            total += float(-np.log(np.maximum(probs[np.arange(len(batch)), gold[batch]],
                                              1e-12)).sum())
            net.backward(probs, gold[batch])
            net.step(config.lr)
        log.debug("%s epoch %d: mean loss %.4f", kind, epoch + 1, total / len(train))
    return clf


@dataclass
class EvalReport:
    confusion: np.ndarray                     # gold rows, predicted columns
    fold_accuracies: list[float] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.total) if self.total else 0.0

    @property
    def mean_fold_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies)) if self.fold_accuracies else self.accuracy

    def to_json(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "fold_accuracies": list(self.fold_accuracies),
            "labels": list(LABELS),
            "confusion": self.confusion.astype(int).tolist(),
        }
        if self.fold_accuracies:
            out["mean_fold_accuracy"] = self.mean_fold_accuracy
        return out


def confusion_matrix(gold: Sequence[int], pred: Sequence[int]) -> np.ndarray:
    cm = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    for g, p in zip(gold, pred):
        cm[g, p] += 1
    return cm


def evaluate(classifier: TrainedClassifier, test: Sequence[LabeledSentence]) -> EvalReport:
    if not test:
        raise ValueError("empty test set")
    probs = predict_many(classifier, test)
    pred = probs.argmax(axis=1)
    return EvalReport(confusion_matrix([t.label for t in test], pred))


def kfold_cv(data: Sequence[LabeledSentence], kind: str, embedding: EmbeddingModel,
             k: int = 5, config: ClassifierConfig = ClassifierConfig()) -> EvalReport:
    """Stratified k-fold CV; confusion is pooled over the k held-out folds."""
    folds = stratified_folds(data, k, config.seed)
    pooled = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    accs = []
    for f, test_idx in enumerate(folds):
        held = set(test_idx)
        train = [data[i] for i in range(len(data)) if i not in held]
        clf = train_classifier(train, kind, embedding, config)
        report = evaluate(clf, [data[i] for i in test_idx])
        pooled += report.confusion
        accs.append(report.accuracy)
        log.info("%s fold %d/%d accuracy %.4f", kind, f + 1, k, report.accuracy)
    return EvalReport(pooled, accs)


def save_classifier(classifier: TrainedClassifier, path: str | Path,
                    embedding_path: str | Path) -> None:
    """Network tensors go in the checkpoint; frozen word vectors stay in ``embedding_path``."""
    ref = os.path.relpath(Path(embedding_path).resolve(), Path(path).resolve().parent)
    save_network(classifier.network, path, extra={
        "kind": classifier.kind,
        "pad_length": classifier.pad_length,
        "labels": list(LABELS),
        "embedding_file": ref,
        "config": asdict(classifier.config),
    })


def load_classifier(path: str | Path, embedding: EmbeddingModel | None = None) -> TrainedClassifier:
    header, tensors = read_network(path)
    extra = header["extra"]
    if embedding is None:
        embedding = load_embeddings(Path(path).resolve().parent / extra["embedding_file"])
    config = ClassifierConfig(**extra["config"])
    specs = [LayerSpec(**s) for s in header["specs"]]
    V = embedding.vocab.size
    net = Network.build(specs, lookup_matrix(embedding), extra["pad_length"],
                        np.random.default_rng(0), fixed_rows=(V, V + 1))
    for layer_idx, name, value in tensors:
        target = net.layers[layer_idx].params[name]
        if target.shape != value.shape:
            raise ValueError(f"{path}: tensor {layer_idx}.{name} has shape {value.shape}, "
                             f"expected {target.shape}")
        target[...] = value
    return TrainedClassifier(extra["kind"], net, embedding, extra["pad_length"], config)


def report_json(report: EvalReport) -> str:
    return json.dumps(report.to_json(), indent=2)
