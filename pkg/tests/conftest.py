import numpy as np
import pytest

from reportminer import synthetic
from reportminer.corpus import build_vocabulary, corpus_sentences
from reportminer.embedding import EmbeddingConfig, EmbeddingModel, train_embeddings


@pytest.fixture(scope="session")
def small_reports():
    return synthetic.reports(synthetic.CorpusShape(wells=12, operators=3, npt_wells=5,
                                                   sentences=600), seed=11)


@pytest.fixture(scope="session")
def small_sentences(small_reports):
    return corpus_sentences(small_reports)


@pytest.fixture(scope="session")
def small_vocab(small_sentences):
    return build_vocabulary(small_sentences)


@pytest.fixture(scope="session")
def small_embedding(small_sentences, small_vocab):
    """A quick seeded run: good enough to separate labels, cheap to build."""
    cfg = EmbeddingConfig(dim=16, negatives=8, batch=64, epochs=5, seed=3)
    model, _ = train_embeddings(small_sentences, small_vocab, cfg)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_model(vocab, dim, rng, scale=0.5):
    center = rng.uniform(-scale, scale, size=(vocab.size, dim))
    outer = rng.uniform(-scale, scale, size=(vocab.size, dim))
    return EmbeddingModel(vocab, center, outer, EmbeddingConfig(dim=dim))


@pytest.fixture(scope="session")
def corpus_embedding():
    """Embedding trained on the full default synthetic corpus."""
    sentences = corpus_sentences(synthetic.reports(seed=0))
    cfg = EmbeddingConfig(dim=32, negatives=16, batch=128, epochs=15, seed=0)
    model, _ = train_embeddings(sentences, build_vocabulary(sentences), cfg)
    return model


def random_timelines(n_sentences, wells=8, operators=4, seed=0):
    """Random labelled timelines built directly, without a classifier."""
    import datetime as dt

    from reportminer.mining import TimelineEntry, WellTimeline

    r = np.random.default_rng(seed)
    words = ["torque", "pressure", "circ", "pooh", "stuck", "pipe", "Leak", "leak", "mud"]
    labels = ("EVENT", "SYMPTOM", "ACTION")
    by_well = {f"W{w:02d}": [] for w in range(wells)}
    for k in range(n_sentences):
        well = f"W{int(r.integers(wells)):02d}"
        text = " ".join(r.choice(words, size=int(r.integers(1, 5))))
        probs = r.dirichlet(np.ones(3))
        entry = TimelineEntry(dt.date(2016, 1, 1) + dt.timedelta(days=int(r.integers(60))),
                              f"OP{int(r.integers(operators))}", k, 0, text,
                              labels[int(r.choice(3, p=[0.28, 0.15, 0.57]))],
                              tuple(float(p) for p in probs))
        by_well[well].append(entry)
    out = []
    for w in sorted(by_well):
        entries = sorted(by_well[w], key=lambda e: (e.date, e.report_index, e.sentence_index))
        out.append(WellTimeline(w, entries))
    return out


# Brute-force oracles, written independently of the mining module.

def oracle_rank(timelines):
    counts = {}
    for t in timelines:
        counts[t.well_id] = 0
        for e in t.entries:
            if e.label == "EVENT":
                counts[t.well_id] += 1
    ranked = []
    remaining = dict(counts)
    while remaining:
        best = None
        for w, c in remaining.items():
            if best is None or c > remaining[best] or (c == remaining[best] and w < best):
                best = w
        ranked.append((best, remaining.pop(best)))
    return ranked


def oracle_operator_behavior(timelines, well):
    entries = next(t.entries for t in timelines if t.well_id == well)
    ops = sorted(set(e.operator_id for e in entries))
    out = {}
    for op in ops:
        mine = [e for e in entries if e.operator_id == op]
        out[op] = {lab: len([e for e in mine if e.label == lab]) / len(mine)
                   for lab in ("EVENT", "SYMPTOM", "ACTION")}
    return out


def oracle_label_distribution(timelines):
    labels = [e.label for t in timelines for e in t.entries]
    return {lab: labels.count(lab) / len(labels) for lab in ("EVENT", "SYMPTOM", "ACTION")}


def oracle_sequences(timelines, ante, cons, horizon, ante_f=None, cons_f=None):
    """Every ordered entry pair inside a well, kept when the gap is within horizon."""
    found = []
    for t in timelines:
        es = t.entries
        for i in range(len(es)):
            for j in range(len(es)):
                if not 0 < j - i <= horizon:
                    continue
                if es[i].label != ante or es[j].label != cons:
                    continue
                if ante_f is not None and ante_f not in es[i].text:
                    continue
                if cons_f is not None and cons_f not in es[j].text:
                    continue
                found.append((t.well_id, i, j))
    return sorted(found)


# One PASS/FAIL line per acceptance criterion, shown after the test summary.
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
