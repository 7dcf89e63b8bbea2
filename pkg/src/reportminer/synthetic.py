"""Seeded synthetic drilling corpus.

Stands in for proprietary report databases: templated EVENT / SYMPTOM /
ACTION sentences over a ~200-token vocabulary, spread across wells,
operators and dates, with the punctuation noise the regex cleaner targets.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .corpus import Report
from .seeding import rng_stream

LABELS = ("EVENT", "SYMPTOM", "ACTION")
LABEL_MIX = (0.28, 0.15, 0.57)

# Pairs drawn uniformly wherever their slot appears: identical contexts.
SYNONYMS = {
    "CIRC": ("circ", "circulate"),
    "INCIDENT": ("incident", "accident"),
    "POOH": ("pooh", "tooh"),
    "RIH": ("rih", "tih"),
    "REMARK": ("remarks", "remark"),
}

DEPTHS = [str(d) for d in range(500, 4500, 100)]          # 40 tokens
NUMBERS = [str(n) for n in range(5, 100, 5)]              # 19 tokens
UNITS = ["mMD", "mTVD"]
EQUIP = ["bha", "motor", "mwd", "jar", "bit", "stabilizer", "reamer", "drillpipe",
         "casing", "liner", "packer", "top-drive", "pump", "bop", "choke"]
ACTIVITY = ["drilling", "reaming", "tripping", "cementing", "logging", "washing",
            "backreaming", "coring", "circulating", "testing"]
FLUID = ["mud", "brine", "hi-vis", "lcm", "cement", "spacer"]
FORMATION = ["shale", "sandstone", "limestone", "salt", "claystone", "dolomite"]

TEMPLATES = {
    "EVENT": [
        "stuck pipe INCIDENT at {depth} {unit} while {activity}",
        "{equip} failure during {activity} at {depth} {unit}",
        "lost circulation INCIDENT in {formation} at {depth} {unit}",
        "kick taken at {depth} {unit} well shut in",
        "twist off of {equip} at {depth} {unit}",
        "{equip} parted downhole INCIDENT reported",
        "well control INCIDENT during {activity}",
        "packoff and stuck string at {depth} {unit}",
    ],
    "SYMPTOM": [
        "erratic torque observed while {activity} in {formation}",
        "high pressure {num} psi noted on standpipe",
        "{fluid} losses of {num} bbl/hr observed",
        "overpull of {num} klbs at {depth} {unit}",
        "tight hole and drag noted while {activity}",
        "pressure spikes seen on {equip}",
        "gas readings increased to {num} units",
        "slow rop and vibration seen in {formation}",
    ],
    "ACTION": [
        "CIRC bottoms up and condition {fluid}",
        "POOH to {depth} {unit} with {equip}",
        "RIH with {equip} to {depth} {unit}",
        "pump {num} bbl {fluid} pill and CIRC",
        "work pipe and jar down at {depth} {unit}",
        "CIRC and raise {fluid} weight",
        "flow check then POOH to shoe",
        "ream from {depth} to {depth} {unit}",
        "RIH and wash down to bottom",
        "set {equip} and test to {num} bar",
    ],
}

SLOTS = {
    "depth": DEPTHS, "unit": UNITS, "equip": EQUIP, "activity": ACTIVITY,
    "num": NUMBERS, "fluid": FLUID, "formation": FORMATION,
}

PT_TEMPLATES = [
    "drilled ahead from {depth} to {depth} {unit} in {formation}",
    "REMARK {equip} inspected ok",
    "REMARK: {fluid} properties checked",
    "survey taken at {depth} {unit}",
    "{activity} at {num} rpm with {fluid}",
]

# Punctuation noise the cleaning rules remove; inserted at random boundaries.
_NOISE = [", ", " #", "; ", " - ", " ==== ", " • ", " / ", " ** "]


def _fill(template: str, rng: np.random.Generator) -> list[str]:
    out = []
    for word in template.split():
        if word in SYNONYMS:
            out.append(SYNONYMS[word][rng.integers(2)])
        elif word.startswith("{") and word.endswith("}"):
            choices = SLOTS[word[1:-1]]
            out.append(choices[rng.integers(len(choices))])
        else:
            out.append(word)
    return out


def make_sentence(label: str, rng: np.random.Generator) -> list[str]:
    templates = TEMPLATES[label]
    return _fill(templates[rng.integers(len(templates))], rng)


def _noisy(tokens: list[str], rng: np.random.Generator) -> str:
    text = tokens[0]
    for tok in tokens[1:]:
        r = rng.random()
        if r < 0.08:
            text += _NOISE[rng.integers(len(_NOISE))] + tok
        elif r < 0.12:
            text += " (" + tok + ")"
        elif r < 0.14:
            text += " [" + tok + "]"
        else:
            text += " " + tok
    return text


def labeled_set(n: int, seed: int = 0, mix=LABEL_MIX) -> list[tuple[str, str]]:
    """``n`` (label, raw sentence) rows with exact label proportions ``mix``."""
    rng = rng_stream(seed, "synthetic-labeled")
    counts = [int(round(n * p)) for p in mix]
    counts[-1] = n - sum(counts[:-1])
    labels = [lab for lab, c in zip(LABELS, counts) for _ in range(c)]
    rng.shuffle(labels)
    return [(lab, _noisy(make_sentence(lab, rng), rng)) for lab in labels]


ORDER_MARKERS = ("pressure", "torque")
ORDER_FILLER = ["noted", "while", "drilling", "at", "bottom", "high", "low", "seen",
                "string", "hole", "pipe", "steady", "then", "after", "before", "rig"]


def order_task(n_pairs: int, seed: int = 0, length=(4, 9)) -> list[tuple[str, list[str]]]:
    """Label depends only on which marker comes first.

    Every bag of words is emitted twice, once per order: EVENT when
    ``pressure`` precedes ``torque``, SYMPTOM otherwise. Bag-of-words
    features therefore carry no label information.
    """
    rng = rng_stream(seed, "synthetic-order")
    a, b = ORDER_MARKERS
    rows = []
    for _ in range(n_pairs):
        n = int(rng.integers(length[0], length[1] + 1))
        filler = [ORDER_FILLER[i] for i in rng.integers(len(ORDER_FILLER), size=n - 2)]
        i, j = sorted(rng.choice(n, size=2, replace=False))
        first = list(filler)
        first.insert(i, a)
        first.insert(j, b)
        second = list(filler)
        second.insert(i, b)
        second.insert(j, a)
        rows.append(("EVENT", first))
        rows.append(("SYMPTOM", second))
    return rows


@dataclass(frozen=True)
class CorpusShape:
    wells: int = 50
    operators: int = 5
    npt_wells: int = 20
    sentences: int = 2000
    start: dt.date = dt.date(2015, 1, 1)


def reports(shape: CorpusShape = CorpusShape(), seed: int = 0) -> list[Report]:
    """Daily reports for ``shape.wells`` wells, about ``shape.sentences`` sentences.

    NPT reports hold EVENT/SYMPTOM/ACTION sentences in a causal-looking
    order; PT reports hold routine remarks. Sentences are separated by
    newlines or ". ".
    """
    rng = rng_stream(seed, "synthetic-reports")
    well_ids = [f"W{i:03d}" for i in range(1, shape.wells + 1)]
    operators = [f"OP{i:02d}" for i in range(1, shape.operators + 1)]
    npt_set = set(rng.choice(shape.wells, size=shape.npt_wells, replace=False).tolist())
    per_well = max(1, shape.sentences // (shape.wells * 4))
    out = []
    for w, well in enumerate(well_ids):
        ops = rng.choice(operators, size=min(2, len(operators)), replace=False)
        date = shape.start + dt.timedelta(days=int(rng.integers(0, 365)))
        n_reports = int(rng.integers(max(1, per_well // 2), per_well * 3 // 2 + 1))
        for _ in range(n_reports):
            npt = w in npt_set and rng.random() < 0.6
            if npt:
                labels = ["SYMPTOM"] * int(rng.random() < 0.6) + ["EVENT"] \
                    + ["ACTION"] * int(rng.integers(1, 4))
                sents = [make_sentence(lab, rng) for lab in labels]
            else:
                sents = [_fill(PT_TEMPLATES[rng.integers(len(PT_TEMPLATES))], rng)
                         for _ in range(int(rng.integers(2, 6)))]
            seps = ["\n" if rng.random() < 0.5 else ". " for _ in sents]
            text = "".join(_noisy(s, rng) + sep for s, sep in zip(sents, seps)).rstrip()
            out.append(Report(well, date, str(ops[rng.integers(len(ops))]), bool(npt), text))
            date += dt.timedelta(days=int(rng.integers(1, 3)))
    return out


def field_reports(wells: int = 303, npt_wells: int = 112, seed: int = 0) -> list[Report]:
    """Field-scale fixture where NPT days grow with a well's report count."""
    rng = rng_stream(seed, "synthetic-field")
    npt_set = set(rng.choice(wells, size=npt_wells, replace=False).tolist())
    out = []
    for w in range(wells):
        well = f"F{w + 1:03d}"
        n = int(rng.integers(3, 40))
        n_npt = 0
        if w in npt_set:
            n_npt = int(np.clip(round(0.4 * n + rng.normal(0, 1.5)), 1, n))
        date = dt.date(2014, 1, 1) + dt.timedelta(days=int(rng.integers(0, 200)))
        for i in range(n):
            npt = i >= n - n_npt
            label = "EVENT" if npt else None
            text = " ".join(make_sentence(label, rng)) if label else "drilled ahead"
            out.append(Report(well, date, f"OP{rng.integers(1, 6):02d}", npt, text))
            date += dt.timedelta(days=1)
    return out
