import json

import numpy as np
import pytest

from reportminer import synthetic
from reportminer.classifier import (LABELS, PAD_TOKEN, ClassifierConfig, EvalReport, LabelError,
                                    LabeledSentence, TrainedClassifier, architecture_specs,
                                    build_architecture, confusion_matrix, evaluate, kfold_cv,
                                    labeled_from_rows, load_classifier, load_labeled,
                                    pad_sentence, predict, predict_many, save_classifier,
                                    split_train_test, stratified_folds, train_classifier)
from reportminer.corpus import Sentence, Vocabulary
from reportminer.embedding import EmbeddingModel, save_embeddings

FAST = ClassifierConfig(epochs=3, avg_hidden=8, cnn_filters=6, cnn_hidden=8, lstm_units=6)


@pytest.fixture(scope="module")
def labeled():
    return labeled_from_rows(synthetic.labeled_set(150, seed=2))


def _rows(labels):
    return [LabeledSentence(Sentence((f"t{i}",), index=i), lab) for i, lab in enumerate(labels)]


# ---------------------------------------------------------------- loading

def test_load_labeled_single_row(tmp_path):
    p = tmp_path / "l.tsv"
    p.write_text("ACTION\tcirc bottoms up\n")
    recs, skipped = load_labeled(p)
    assert skipped == 0 and len(recs) == 1
    assert recs[0].label == 2 and recs[0].tokens == ("circ", "bottoms", "up")


def test_load_labeled_cleans_and_skips_empty(tmp_path):
    p = tmp_path / "l.tsv"
    p.write_text("EVENT\tstuck (pipe) ; at #3\nSYMPTOM\t ;; ##\n\n")
    recs, skipped = load_labeled(p)
    assert skipped == 1
    assert recs[0].tokens == ("stuck", "pipe", "at", "3")


def test_load_labeled_bad_label_fails_whole_file(tmp_path):
    lines = [f"{lab}\tsentence {i}" for i, lab in enumerate(["EVENT", "ACTION"] * 4 + ["SYMPTOM"])]
    lines.insert(6, "FOO\tsomething")
    p = tmp_path / "l.tsv"
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(LabelError, match="FOO") as info:
        load_labeled(p)
    assert "line 7" in str(info.value)


def test_load_labeled_missing_tab(tmp_path):
    p = tmp_path / "l.tsv"
    p.write_text("EVENT stuck pipe\n")
    with pytest.raises(LabelError, match="TAB"):
        load_labeled(p)


# ---------------------------------------------------------------- padding and features

def test_pad_sentence():
    assert pad_sentence(["a", "b"], 4) == ["a", "b", PAD_TOKEN, PAD_TOKEN]
    assert pad_sentence(["a", "b", "c"], 2) == ["a", "b"]
    assert pad_sentence([], 3) == [PAD_TOKEN] * 3
    with pytest.raises(ValueError):
        pad_sentence(["a"], 0)


def _emb(rows, tokens=None):
    rows = np.asarray(rows, dtype=float)
    tokens = tokens or tuple(f"w{i}" for i in range(len(rows)))
    return EmbeddingModel(Vocabulary(tuple(tokens), (1,) * len(tokens)), rows)


def test_sentence_feature_avg():
    from reportminer.classifier import sentence_feature_avg
    e = _emb([[1.0, 1.0], [3.0, 3.0]], ("a", "b"))
    assert sentence_feature_avg(["x", "y"], e).tolist() == [0.0, 0.0]
    assert sentence_feature_avg(["a"], e).tolist() == [1.0, 1.0]
    assert sentence_feature_avg(["a", "b"], e).tolist() == [2.0, 2.0]
    assert sentence_feature_avg([], e).tolist() == [0.0, 0.0]
    assert sentence_feature_avg(["a", "zzz"], e).tolist() == [0.5, 0.5]


def test_pad_token_not_in_corpus_vocab(small_vocab):
    assert PAD_TOKEN not in small_vocab


# ---------------------------------------------------------------- architectures

def _shapes(net):
    return {name: value.shape for name, value, _ in net.parameters(trainable_only=False)}


def test_avg_shapes():
    e = _emb(np.ones((5, 300)))
    s = _shapes(build_architecture("avg", e, 4))
    assert s["2.dense.W"] == (20, 300) and s["3.dense.W"] == (3, 20)


def test_lstm_shapes():
    e = _emb(np.ones((5, 300)))
    s = _shapes(build_architecture("lstm", e, 4))
    assert s["1.lstm.W"] == (400, 300) and s["1.lstm.U"] == (400, 100)
    assert s["3.dense.W"] == (3, 100)


def test_cnn_pooling_lengths():
    e = _emb(np.ones((5, 7)))
    net = build_architecture("cnn", e, 12)
    ids = np.zeros((1, 12), dtype=np.int64)
    from reportminer.neuralnet import Context
    ctx, x, lengths = Context([12]), ids, []
    for layer in net.layers:
        x = layer.forward(x, ctx)
        if layer.spec.kind == "maxpool1d":
            lengths.append(x.shape[1])
    assert lengths == [6, 3]
    assert _shapes(net)["5.dense.W"] == (128, 3 * 128)


def test_unknown_architecture():
    with pytest.raises(ValueError, match="unknown architecture"):
        architecture_specs("rnn")


def test_embedding_frozen_by_default():
    assert not architecture_specs("lstm")[0].trainable
    assert architecture_specs("lstm", ClassifierConfig(fine_tune=True))[0].trainable


def test_lookup_rows_for_pad_and_oov_are_zero(small_embedding):
    net = build_architecture("avg", small_embedding, 3)
    E = net.layers[0].params["E"]
    V = small_embedding.vocab.size
    assert E.shape == (V + 2, small_embedding.dim)
    assert not E[V:].any()
    assert np.array_equal(E[:V], small_embedding.center)


# ---------------------------------------------------------------- splits and folds

def test_split_sizes_and_determinism():
    data = _rows([0, 1] * 5)
    a_train, a_test = split_train_test(data, 0.8, seed=1)
    b_train, b_test = split_train_test(data, 0.8, seed=1)
    assert (len(a_train), len(a_test)) == (8, 2)
    assert a_train == b_train and a_test == b_test
    assert set(a_train) | set(a_test) == set(data) and not set(a_train) & set(a_test)


def test_split_stratified(labeled):
    train, _ = split_train_test(labeled, 0.8, seed=3)
    for lab in range(3):
        overall = sum(x.label == lab for x in labeled)
        got = sum(x.label == lab for x in train)
        assert abs(got - 0.8 * overall) <= 1


def test_split_errors():
    with pytest.raises(ValueError):
        split_train_test([], 0.8)
    with pytest.raises(ValueError, match="fewer than 2"):
        split_train_test(_rows([0, 0, 1]), 0.8)


def test_folds_partition():
    data = _rows([0] * 40 + [1] * 35 + [2] * 25)
    folds = stratified_folds(data, 5, seed=0)
    assert [len(f) for f in folds] == [20] * 5
    flat = [i for f in folds for i in f]
    assert sorted(flat) == list(range(100))
    assert folds == stratified_folds(data, 5, seed=0)
    for f in folds:
        counts = [sum(data[i].label == lab for i in f) for lab in range(3)]
        assert max(abs(c - t / 5) for c, t in zip(counts, (40, 35, 25))) <= 1


def test_folds_errors():
    with pytest.raises(ValueError, match="fewer than k"):
        stratified_folds(_rows([0] * 10 + [1] * 3), 5)
    with pytest.raises(ValueError):
        stratified_folds(_rows([0] * 10), 1)


# ---------------------------------------------------------------- training and prediction

@pytest.mark.parametrize("kind", ["avg", "cnn", "lstm"])
def test_training_deterministic(labeled, small_embedding, kind):
    a = train_classifier(labeled[:60], kind, small_embedding, FAST)
    b = train_classifier(labeled[:60], kind, small_embedding, FAST)
    for (n1, p1, _), (n2, p2, _) in zip(a.network.parameters(False), b.network.parameters(False)):
        assert n1 == n2 and np.array_equal(p1, p2)


@pytest.mark.parametrize("kind", ["avg", "cnn", "lstm"])
def test_lr_zero_keeps_initial_predictions(labeled, small_embedding, kind):
    cfg = ClassifierConfig(lr=0.0, epochs=2, avg_hidden=8, cnn_filters=6, cnn_hidden=8, lstm_units=6)
    clf = train_classifier(labeled[:40], kind, small_embedding, cfg)
    fresh = TrainedClassifier(kind, build_architecture(kind, small_embedding, clf.pad_length, cfg),
                              small_embedding, clf.pad_length, cfg)
    assert np.array_equal(predict_many(clf, labeled[:40]), predict_many(fresh, labeled[:40]))


@pytest.mark.parametrize("kind", ["avg", "cnn", "lstm"])
def test_predict_contract(labeled, small_embedding, kind):
    clf = train_classifier(labeled[:40], kind, small_embedding, FAST)
    for sentence in ([], ["never", "seen", "tokens"], "stuck pipe (incident)", labeled[0],
                     ["circ"] * (clf.pad_length + 10)):
        label, probs = predict(clf, sentence)
        assert label in LABELS
        assert abs(probs.sum() - 1.0) <= 1e-9
    probs = predict_many(clf, labeled)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert predict_many(clf, []).shape == (0, 3)


def test_avg_training_accuracy_on_separable_set(labeled, corpus_embedding):
    clf = train_classifier(labeled, "avg", corpus_embedding, ClassifierConfig(epochs=50))
    assert evaluate(clf, labeled).accuracy >= 0.99


def test_training_empty_set(small_embedding):
    with pytest.raises(ValueError):
        train_classifier([], "avg", small_embedding, FAST)


# ---------------------------------------------------------------- evaluation

def test_confusion_and_accuracy_example():
    cm = confusion_matrix([0, 1, 2, 2], [0, 2, 2, 2])
    r = EvalReport(cm)
    assert r.accuracy == 0.75
    assert cm[1].tolist() == [0, 0, 1]
    perfect = EvalReport(confusion_matrix([0, 1, 2], [0, 1, 2]))
    assert perfect.accuracy == 1.0 and np.array_equal(perfect.confusion, np.eye(3, dtype=int))


def test_evaluate_rows_match_gold_counts(labeled, small_embedding):
    clf = train_classifier(labeled[:60], "avg", small_embedding, FAST)
    r = evaluate(clf, labeled)
    gold = np.bincount([x.label for x in labeled], minlength=3)
    assert r.confusion.sum(axis=1).tolist() == gold.tolist()
    assert r.accuracy == np.trace(r.confusion) / len(labeled)


def test_kfold_cv_report(labeled, small_embedding):
    r = kfold_cv(labeled, "avg", small_embedding, k=5, config=FAST)
    assert len(r.fold_accuracies) == 5
    assert r.total == len(labeled)
    assert r.confusion.sum(axis=1).tolist() == np.bincount([x.label for x in labeled]).tolist()
    out = r.to_json()
    assert set(out) >= {"accuracy", "fold_accuracies", "confusion", "mean_fold_accuracy"}
    assert out["mean_fold_accuracy"] == pytest.approx(np.mean(r.fold_accuracies))
    again = kfold_cv(labeled, "avg", small_embedding, k=5, config=FAST)
    assert again.fold_accuracies == r.fold_accuracies
    assert np.array_equal(again.confusion, r.confusion)


def test_report_json_without_folds():
    out = EvalReport(confusion_matrix([0], [0])).to_json()
    assert "mean_fold_accuracy" not in out and out["fold_accuracies"] == []


# ---------------------------------------------------------------- persistence

@pytest.mark.parametrize("kind", ["avg", "cnn", "lstm"])
def test_checkpoint_round_trip(tmp_path, labeled, small_embedding, kind):
    clf = train_classifier(labeled[:40], kind, small_embedding, FAST)
    save_embeddings(small_embedding, tmp_path / "embeddings.txt")
    save_classifier(clf, tmp_path / "c.rmnet", tmp_path / "embeddings.txt")
    header = (tmp_path / "c.rmnet").read_bytes()[:400]
    assert b"embeddings.txt" in header
    back = load_classifier(tmp_path / "c.rmnet")
    assert back.kind == kind and back.pad_length == clf.pad_length and back.config == clf.config
    assert np.array_equal(predict_many(back, labeled), predict_many(clf, labeled))


def test_checkpoint_shape_mismatch(tmp_path, labeled, small_embedding):
    clf = train_classifier(labeled[:40], "avg", small_embedding, FAST)
    save_embeddings(small_embedding, tmp_path / "embeddings.txt")
    save_classifier(clf, tmp_path / "c.rmnet", tmp_path / "embeddings.txt")
    other = _emb(np.ones((small_embedding.vocab.size, 3)), small_embedding.vocab.tokens)
    with pytest.raises(ValueError, match="shape"):
        load_classifier(tmp_path / "c.rmnet", embedding=other)
