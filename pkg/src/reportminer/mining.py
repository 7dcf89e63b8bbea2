"""Queries over classified well timelines and field-level report statistics."""
from __future__ import annotations

import datetime as dt
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classifier import LABEL_ID, LABELS, TrainedClassifier, predict_many
from .corpus import Report, segment_sentences


@dataclass(frozen=True)
class TimelineEntry:
    date: dt.date
    operator_id: str
    report_index: int
    sentence_index: int
    text: str
    label: str
    probs: tuple[float, ...]


@dataclass
class WellTimeline:
    well_id: str
    entries: list[TimelineEntry] = field(default_factory=list)

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]


@dataclass(frozen=True)
class FieldSummary:
    wells_total: int
    wells_with_npt: int
    npt_duration_per_well: dict[str, int]
    reports_per_well: dict[str, int]

    @property
    def performance_estimate(self) -> float:
        return 1.0 - self.wells_with_npt / self.wells_total

    def to_json(self) -> dict:
        return {
            "wells_total": self.wells_total,
            "wells_with_npt": self.wells_with_npt,
            "performance_estimate": self.performance_estimate,
            "npt_duration_per_well": self.npt_duration_per_well,
            "reports_per_well": self.reports_per_well,
        }


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r: float


@dataclass(frozen=True)
class SequenceMatch:
    well_id: str
    antecedent: int          # entry positions within the well timeline
    consequent: int
    following: tuple[int, ...]

    def to_json(self, timelines: dict[str, WellTimeline]) -> dict:
        entries = timelines[self.well_id].entries

        def show(i):
            e = entries[i]
            return {"index": i, "date": e.date.isoformat(), "operator": e.operator_id,
                    "label": e.label, "text": e.text}

        return {"well_id": self.well_id, "antecedent": show(self.antecedent),
                "consequent": show(self.consequent),
                "following": [show(i) for i in self.following]}


def classify_corpus(reports: Sequence[Report], classifier: TrainedClassifier,
                    npt_only: bool = False) -> list[WellTimeline]:
    """Label every sentence; one timeline per well, sorted by well id.

    Entries are ordered by (date, position of the report in the input,
    sentence index).
    """
    rows = []
    for r_idx, report in enumerate(reports):
        if npt_only and not report.npt:
            continue
        for s in segment_sentences(report):
            rows.append((report.well_id, report.date, r_idx, s))
    probs = predict_many(classifier, [s for *_, s in rows])
    by_well: dict[str, list[TimelineEntry]] = defaultdict(list)
    for (well, date, r_idx, s), p in zip(rows, probs):
        by_well[well].append(TimelineEntry(date, s.operator_id, r_idx, s.index, s.text,
                                           LABELS[int(np.argmax(p))], tuple(float(x) for x in p)))
    out = []
    for well in sorted(by_well):
        entries = sorted(by_well[well], key=lambda e: (e.date, e.report_index, e.sentence_index))
        out.append(WellTimeline(well, entries))
    return out


def field_summary(reports: Iterable[Report]) -> FieldSummary:
    """Well counts and the NPT-free share; NPT days = distinct NPT report dates."""
    reports_per_well: Counter = Counter()
    npt_dates: dict[str, set] = defaultdict(set)
    for r in reports:
        reports_per_well[r.well_id] += 1
        if r.npt:
            npt_dates[r.well_id].add(r.date)
    if not reports_per_well:
        raise ValueError("no wells in the report set")
    wells = sorted(reports_per_well)
    return FieldSummary(
        wells_total=len(wells),
        wells_with_npt=len(npt_dates),
        npt_duration_per_well={w: len(npt_dates.get(w, ())) for w in wells},
        reports_per_well={w: reports_per_well[w] for w in wells},
    )


def rank_problematic_wells(timelines: Iterable[WellTimeline], top_n: int | None = None) -> list[tuple[str, int]]:
    """Wells by number of EVENT sentences, most first; ties by well id."""
    counts = [(t.well_id, sum(e.label == "EVENT" for e in t.entries)) for t in timelines]
    counts.sort(key=lambda wc: (-wc[1], wc[0]))
    return counts if top_n is None else counts[:top_n]


def operator_behavior(timelines: Iterable[WellTimeline], well_id: str) -> dict[str, dict[str, float]]:
    """Per-operator share of EVENT / SYMPTOM / ACTION sentences on one well."""
    for t in timelines:
        if t.well_id == well_id:
            break
    else:
        raise KeyError(f"unknown well {well_id!r}")
    tallies: dict[str, Counter] = defaultdict(Counter)
    for e in t.entries:
        tallies[e.operator_id][e.label] += 1
    out = {}
    for op in sorted(tallies):
        n = sum(tallies[op].values())
        out[op] = {lab: tallies[op][lab] / n for lab in LABELS}
    return out


def fit_regression(xs: Sequence[float], ys: Sequence[float]) -> RegressionFit:
    """Ordinary least squares line and Pearson correlation."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D and equally long")
    if len(x) < 2:
        raise ValueError("need at least two points")
    dx = x - x.mean()
    sxx = dx @ dx
    if sxx == 0:
        raise ValueError("degenerate input: all xs are equal")
    dy = y - y.mean()
    sxy = dx @ dy
    slope = sxy / sxx
    syy = dy @ dy
    r = 0.0 if syy == 0 else float(np.clip(sxy / np.sqrt(sxx * syy), -1.0, 1.0))
    return RegressionFit(float(slope), float(y.mean() - slope * x.mean()), r)


def regression_points(summary: FieldSummary, npt_wells_only: bool = True) -> tuple[list[int], list[int]]:
    wells = [w for w in summary.reports_per_well
             if not npt_wells_only or summary.npt_duration_per_well[w] > 0]
    return ([summary.reports_per_well[w] for w in wells],
            [summary.npt_duration_per_well[w] for w in wells])


def _matches(entry: TimelineEntry, label: str, needle: str | None) -> bool:
    return entry.label == label and (needle is None or needle in entry.text)


def find_sequences(timelines: Iterable[WellTimeline], antecedent: str, consequent: str,
                   horizon: int = 1, antecedent_filter: str | None = None,
                   consequent_filter: str | None = None) -> list[SequenceMatch]:
    """Entry pairs where ``consequent`` follows ``antecedent`` within ``horizon`` entries.

    Filters are case-sensitive substrings of the sentence text. Each match
    carries the positions of up to ``horizon`` entries after the consequent.
    Results are sorted by (well id, antecedent, consequent).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    for lab in (antecedent, consequent):
        if lab not in LABEL_ID:
            raise ValueError(f"unknown label {lab!r}")
    out = []
    for t in sorted(timelines, key=lambda t: t.well_id):
        entries = t.entries
        n = len(entries)
        for i, e in enumerate(entries):
            if not _matches(e, antecedent, antecedent_filter):
                continue
            for j in range(i + 1, min(n, i + horizon + 1)):
                if _matches(entries[j], consequent, consequent_filter):
                    following = tuple(range(j + 1, min(n, j + horizon + 1)))
                    out.append(SequenceMatch(t.well_id, i, j, following))
    return out


def label_distribution(timelines: Iterable[WellTimeline]) -> dict[str, float]:
    counts = Counter(e.label for t in timelines for e in t.entries)
    n = sum(counts.values())
    if n == 0:
        raise ValueError("no labeled sentences")
    return {lab: counts[lab] / n for lab in LABELS}


def export_timelines(timelines: Iterable[WellTimeline], path: str | Path) -> None:
    """One JSON object per sentence."""
    with open(path, "w", encoding="utf-8") as fh:
        for t in timelines:
            for e in t.entries:
                fh.write(json.dumps({
                    "well_id": t.well_id,
                    "date": e.date.isoformat(),
                    "operator_id": e.operator_id,
                    "report_index": e.report_index,
                    "sentence_index": e.sentence_index,
                    "text": e.text,
                    "label": e.label,
                    "probabilities": dict(zip(LABELS, e.probs)),
                }, ensure_ascii=False) + "\n")


def load_timelines(path: str | Path) -> list[WellTimeline]:
    by_well: dict[str, list[TimelineEntry]] = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            probs = tuple(float(obj["probabilities"][lab]) for lab in LABELS)
            by_well[obj["well_id"]].append(TimelineEntry(
                dt.date.fromisoformat(obj["date"]), obj["operator_id"], obj["report_index"],
                obj["sentence_index"], obj["text"], obj["label"], probs))
    return [WellTimeline(w, sorted(by_well[w], key=lambda e: (e.date, e.report_index,
                                                              e.sentence_index)))
            for w in sorted(by_well)]
