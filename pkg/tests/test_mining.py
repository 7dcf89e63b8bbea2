import datetime as dt

import numpy as np
import pytest

from reportminer import synthetic
from reportminer.classifier import ClassifierConfig, labeled_from_rows, train_classifier
from reportminer.corpus import Report
from reportminer.mining import (TimelineEntry, WellTimeline, classify_corpus, export_timelines,
                                field_summary, find_sequences, fit_regression, label_distribution,
                                load_timelines, operator_behavior, rank_problematic_wells,
                                regression_points)

from conftest import (oracle_label_distribution, oracle_operator_behavior, oracle_rank,
                      oracle_sequences, random_timelines)

D0 = dt.date(2016, 5, 1)


def _tl(well, labels, ops=None, texts=None):
    ops = ops or ["OP1"] * len(labels)
    texts = texts or [f"s{i}" for i in range(len(labels))]
    return WellTimeline(well, [TimelineEntry(D0 + dt.timedelta(days=i), op, i, 0, txt, lab,
                                             (1 / 3,) * 3)
                               for i, (lab, op, txt) in enumerate(zip(labels, ops, texts))])


@pytest.fixture(scope="module")
def clf(small_embedding):
    data = labeled_from_rows(synthetic.labeled_set(90, seed=4))
    return train_classifier(data, "avg", small_embedding, ClassifierConfig(epochs=5))


# ---------------------------------------------------------------- classify_corpus

def test_classify_empty(clf):
    assert classify_corpus([], clf) == []


def test_classify_orders_entries(clf):
    reports = [Report("W1", D0 + dt.timedelta(days=1), "OP2", True, "circ. pooh. rih"),
               Report("W1", D0, "OP1", False, "stuck pipe. kick taken. jar down")]
    (tl,) = classify_corpus(reports, clf)
    assert len(tl.entries) == 6
    keys = [(e.date, e.report_index, e.sentence_index) for e in tl.entries]
    assert keys == sorted(keys)
    assert [e.text for e in tl.entries][:3] == ["stuck pipe", "kick taken", "jar down"]
    assert tl.entries[3].operator_id == "OP2"
    for e in tl.entries:
        assert abs(sum(e.probs) - 1) <= 1e-9 and e.label in ("EVENT", "SYMPTOM", "ACTION")


def test_classify_npt_only(clf):
    reports = [Report("W1", D0, "OP1", False, "routine drilling"),
               Report("W2", D0, "OP1", True, "stuck pipe")]
    tls = classify_corpus(reports, clf, npt_only=True)
    assert [t.well_id for t in tls] == ["W2"]


def test_timelines_export_round_trip(tmp_path, clf, small_reports):
    tls = classify_corpus(small_reports[:30], clf)
    export_timelines(tls, tmp_path / "t.jsonl")
    assert load_timelines(tmp_path / "t.jsonl") == tls


# ---------------------------------------------------------------- field summary

def test_field_summary_303_well_fixture():
    s = field_summary(synthetic.field_reports(303, 112, seed=0))
    assert (s.wells_total, s.wells_with_npt) == (303, 112)
    assert s.performance_estimate == pytest.approx(0.6304, abs=1e-4)
    assert s.performance_estimate == 1 - 112 / 303


@pytest.mark.parametrize("npt, expected", [(False, 1.0), (True, 0.0)])
def test_field_summary_extremes(npt, expected):
    reports = [Report(f"W{i}", D0, "OP", npt, "x") for i in range(4)]
    assert field_summary(reports).performance_estimate == expected


def test_field_summary_duration_proxy():
    reports = [Report("W1", D0, "OP", True, "a"), Report("W1", D0, "OP", True, "b"),
               Report("W1", D0 + dt.timedelta(days=3), "OP", True, "c"),
               Report("W1", D0 + dt.timedelta(days=4), "OP", False, "d"),
               Report("W2", D0, "OP", False, "e")]
    s = field_summary(reports)
    assert s.npt_duration_per_well == {"W1": 2, "W2": 0}
    assert s.reports_per_well == {"W1": 4, "W2": 1}


def test_field_summary_empty():
    with pytest.raises(ValueError):
        field_summary([])


def test_performance_monotone_in_npt_wells():
    vals = []
    for k in range(6):
        reports = [Report(f"W{i}", D0, "OP", i < k, "x") for i in range(5)]
        vals.append(field_summary(reports).performance_estimate)
    assert all(b <= a for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- ranking

def test_rank_no_events():
    tls = [_tl("W2", ["ACTION"]), _tl("W1", ["SYMPTOM"])]
    assert rank_problematic_wells(tls) == [("W1", 0), ("W2", 0)]


def test_rank_top_two():
    tls = [_tl("A", ["EVENT"] * 3), _tl("B", ["EVENT"]), _tl("C", ["EVENT", "EVENT", "ACTION"])]
    assert rank_problematic_wells(tls, top_n=2) == [("A", 3), ("C", 2)]


@pytest.mark.parametrize("seed", range(5))
def test_rank_matches_oracle(seed):
    tls = random_timelines(300, seed=seed)
    assert rank_problematic_wells(tls) == oracle_rank(tls)


# ---------------------------------------------------------------- operator behaviour

def test_operator_behavior_single():
    out = operator_behavior([_tl("W", ["ACTION", "ACTION", "EVENT"])], "W")
    assert out == {"OP1": {"EVENT": 1 / 3, "SYMPTOM": 0.0, "ACTION": 2 / 3}}


def test_operator_behavior_two_operators():
    tl = _tl("W", ["EVENT", "ACTION", "SYMPTOM", "ACTION"], ops=["19", "4", "19", "4"])
    out = operator_behavior([tl], "W")
    assert out == {"19": {"EVENT": 0.5, "SYMPTOM": 0.5, "ACTION": 0.0},
                   "4": {"EVENT": 0.0, "SYMPTOM": 0.0, "ACTION": 1.0}}


def test_operator_behavior_unknown_well():
    with pytest.raises(KeyError):
        operator_behavior([_tl("W", ["EVENT"])], "nope")


@pytest.mark.parametrize("seed", range(3))
def test_operator_behavior_matches_oracle(seed):
    tls = random_timelines(400, seed=seed)
    for t in tls:
        got = operator_behavior(tls, t.well_id)
        assert got == oracle_operator_behavior(tls, t.well_id)
        for props in got.values():
            assert abs(sum(props.values()) - 1) <= 1e-12


# ---------------------------------------------------------------- label distribution

def test_label_distribution_example():
    assert label_distribution([_tl("W", ["EVENT", "SYMPTOM", "ACTION", "ACTION"])]) == \
        {"EVENT": 0.25, "SYMPTOM": 0.25, "ACTION": 0.5}


def test_label_distribution_empty():
    with pytest.raises(ValueError):
        label_distribution([WellTimeline("W")])


def test_label_distribution_matches_oracle():
    tls = random_timelines(500, seed=9)
    assert label_distribution(tls) == oracle_label_distribution(tls)


# ---------------------------------------------------------------- sequences

def test_sequences_order_matters():
    assert len(find_sequences([_tl("W", ["SYMPTOM", "ACTION"])], "SYMPTOM", "ACTION", 1)) == 1
    assert find_sequences([_tl("W", ["ACTION", "SYMPTOM"])], "SYMPTOM", "ACTION", 1) == []


def test_sequences_horizon_and_context():
    tl = _tl("W", ["SYMPTOM", "EVENT", "ACTION", "ACTION", "EVENT"])
    got = find_sequences([tl], "SYMPTOM", "ACTION", 2)
    assert [(m.antecedent, m.consequent, m.following) for m in got] == [(0, 2, (3, 4))]
    assert find_sequences([tl], "SYMPTOM", "ACTION", 1) == []


def test_sequences_filters_case_sensitive():
    tl = _tl("W", ["SYMPTOM", "ACTION", "SYMPTOM", "ACTION"],
             texts=["torque high", "circ", "Torque high", "pooh"])
    got = find_sequences([tl], "SYMPTOM", "ACTION", 1, antecedent_filter="torque")
    assert [(m.antecedent, m.consequent) for m in got] == [(0, 1)]
    got = find_sequences([tl], "SYMPTOM", "ACTION", 3, consequent_filter="pooh")
    assert [(m.antecedent, m.consequent) for m in got] == [(0, 3), (2, 3)]


def test_sequences_errors():
    with pytest.raises(ValueError):
        find_sequences([], "SYMPTOM", "ACTION", 0)
    with pytest.raises(ValueError):
        find_sequences([], "SYMPTOM", "REMEDY", 1)


@pytest.mark.parametrize("seed, horizon, af, cf", [(0, 1, None, None), (1, 3, "torque", None),
                                                  (2, 2, None, "leak"), (3, 5, "pipe", "Leak")])
def test_sequences_match_oracle(seed, horizon, af, cf):
    tls = random_timelines(300, wells=3, seed=seed)
    for ante in ("EVENT", "SYMPTOM", "ACTION"):
        for cons in ("EVENT", "SYMPTOM", "ACTION"):
            got = find_sequences(tls, ante, cons, horizon, af, cf)
            assert [(m.well_id, m.antecedent, m.consequent) for m in got] == \
                oracle_sequences(tls, ante, cons, horizon, af, cf)


def test_sequences_invariant_to_well_order():
    tls = random_timelines(200, seed=4)
    a = find_sequences(tls, "SYMPTOM", "ACTION", 2)
    b = find_sequences(list(reversed(tls)), "SYMPTOM", "ACTION", 2)
    assert a == b


def test_sequence_match_json():
    tl = _tl("W", ["SYMPTOM", "ACTION"])
    (m,) = find_sequences([tl], "SYMPTOM", "ACTION", 1)
    out = m.to_json({"W": tl})
    assert out["antecedent"]["label"] == "SYMPTOM" and out["following"] == []


# ---------------------------------------------------------------- regression

def test_regression_exact_line():
    fit = fit_regression([1, 2, 3], [2, 4, 6])
    assert fit.slope == pytest.approx(2.0) and fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert fit.r == pytest.approx(1.0)


def test_regression_constant_ys():
    fit = fit_regression([1, 2, 3], [5, 5, 5])
    assert (fit.slope, fit.r) == (0.0, 0.0)


def test_regression_degenerate():
    with pytest.raises(ValueError):
        fit_regression([2, 2, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_regression([1], [1])
    with pytest.raises(ValueError):
        fit_regression([1, 2], [1, 2, 3])


def _normal_equations(x, y):
    A = np.array([[len(x), x.sum()], [x.sum(), x @ x]])
    intercept, slope = np.linalg.solve(A, np.array([y.sum(), x @ y]))
    return slope, intercept


@pytest.mark.parametrize("seed", range(10))
def test_regression_matches_normal_equations(seed):
    r = np.random.default_rng(seed)
    x = r.uniform(0, 100, 50)
    y = 0.3 * x + r.normal(0, 5, 50)
    fit = fit_regression(x, y)
    slope, intercept = _normal_equations(x, y)
    assert abs(fit.slope - slope) <= 1e-9 * max(1, abs(slope))
    assert abs(fit.intercept - intercept) <= 1e-9 * max(1, abs(intercept))
    assert fit.r == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)
    resid = y - (fit.slope * x + fit.intercept)
    assert abs(resid @ x) <= 1e-9 * np.linalg.norm(resid) * np.linalg.norm(x) + 1e-9
    assert abs(resid.sum()) <= 1e-9 * np.linalg.norm(y)


def test_field_fixture_positive_correlation():
    fit = fit_regression(*regression_points(field_summary(synthetic.field_reports(seed=0))))
    assert fit.slope > 0 and fit.r > 0.5


def test_regression_points_filter():
    reports = [Report("A", D0, "OP", True, "x"), Report("B", D0, "OP", False, "x"),
               Report("B", D0, "OP", False, "y")]
    s = field_summary(reports)
    assert regression_points(s) == ([1], [1])
    assert regression_points(s, npt_wells_only=False) == ([1, 2], [1, 0])
