"""Report ingestion, regex denoising, tokenization and corpus statistics."""
from __future__ import annotations

import datetime as dt
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

# Denoising substitutions, applied in this exact order.
SUBSTITUTIONS: list[tuple[re.Pattern, str]] = [
    (re.compile(r",\s"), " "),                # commas at end of words
    (re.compile(r",([a-zA-Z])"), r" \1"),     # commas glued to the next word
    (re.compile(r"\((.*?)\)"), r" \1 "),      # enclosing parenthesis
    (re.compile("\u2022"), " "),             # bullet marks
    (re.compile(r"-\s"), " "),                # dashes
    (re.compile(r"==+|\*\*+"), " "),          # horizontal bars
    (re.compile(r"\[(.*?)\]"), r" \1 "),      # enclosing brackets
    (re.compile(r"#|;"), " "),                # pounds and semicolons
    (re.compile(r"_"), " "),                  # underscores
    (re.compile(r"\s/\s"), " "),              # orphan forward slashes
]

_WS = re.compile(r"\s+")
_SENTENCE_SPLIT = re.compile(r"\n|\.\s+")


class ReportFormatError(ValueError):
    """A malformed record in a report file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Report:
    well_id: str
    date: dt.date
    operator_id: str
    npt: bool
    text: str

    def __post_init__(self):
        if not self.well_id:
            raise ValueError("well_id must be nonempty")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    well_id: str = ""
    date: dt.date | None = None
    operator_id: str = ""
    index: int = 0

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Vocabulary:
    """Dense token ids ordered by descending count, ties lexicographic."""

    tokens: tuple[str, ...]
    counts: tuple[int, ...]
    id_of: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if len(self.tokens) != len(self.counts):
            raise ValueError("tokens and counts differ in length")
        if not self.id_of:
            object.__setattr__(self, "id_of", {t: i for i, t in enumerate(self.tokens)})
        if len(self.id_of) != len(self.tokens):
            dupes = [t for t, c in Counter(self.tokens).items() if c > 1]
            raise ValueError(f"duplicate token in vocabulary: {dupes[0]!r}")

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def total_tokens(self) -> int:
        return sum(self.counts)

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def count(self, token: str) -> int:
        return self.counts[self.id_of[token]]

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def __len__(self) -> int:
        return len(self.tokens)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        """Ids of in-vocabulary tokens; OOV tokens are skipped."""
        return [self.id_of[t] for t in tokens if t in self.id_of]


@dataclass(frozen=True)
class CorpusStats:
    token_count: int
    vocab_size: int
    length_histogram: dict[int, int]
    top_tokens: list[tuple[str, int]]
    bucket_width: int = 50

    def to_json(self) -> dict:
        return {
            "token_count": self.token_count,
            "vocab_size": self.vocab_size,
            "length_histogram": {str(k): v for k, v in sorted(self.length_histogram.items())},
            "top_tokens": [[t, c] for t, c in self.top_tokens],
        }


def _parse_record(obj: dict, line: int) -> Report:
    if not isinstance(obj, dict):
        raise ReportFormatError("record is not a JSON object", line)
    for key in ("well_id", "date", "operator_id", "npt", "text"):
        if key not in obj:
            raise ReportFormatError(f"missing field {key!r}", line)
    if not isinstance(obj["text"], str):
        raise ReportFormatError("field 'text' must be a string", line)
    if not isinstance(obj["npt"], bool):
        raise ReportFormatError("field 'npt' must be a boolean", line)
    well = str(obj["well_id"])
    if not well:
        raise ReportFormatError("empty well_id", line)
    try:
        date = dt.date.fromisoformat(str(obj["date"]))
    except ValueError:
        raise ReportFormatError(f"invalid date {obj['date']!r}", line) from None
    return Report(well, date, str(obj["operator_id"]), obj["npt"], obj["text"])


def ingest_reports(path: str | Path) -> list[Report]:
    """Read a JSON Lines report file. Blank lines are skipped."""
    reports = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ReportFormatError(f"invalid JSON ({exc.msg})", lineno) from None
            reports.append(_parse_record(obj, lineno))
    return reports


def report_to_json(report: Report) -> dict:
    return {
        "well_id": report.well_id,
        "date": report.date.isoformat(),
        "operator_id": report.operator_id,
        "npt": report.npt,
        "text": report.text,
    }


def write_reports(reports: Iterable[Report], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(report_to_json(r), ensure_ascii=False) + "\n")


def clean_text(raw: str) -> str:
    for pattern, repl in SUBSTITUTIONS:
        raw = pattern.sub(repl, raw)
    return _WS.sub(" ", raw).strip()


def tokenize(text: str) -> list[str]:
    return text.split()


def segment_sentences(report: Report) -> list[Sentence]:
    """Split on newlines and on a period followed by whitespace.

    Each segment is cleaned and tokenized; segments with no tokens are dropped.
    """
    out = []
    for segment in _SENTENCE_SPLIT.split(report.text):
        tokens = tokenize(clean_text(segment))
        if tokens:
            out.append(Sentence(tuple(tokens), report.well_id, report.date,
                                report.operator_id, len(out)))
    return out


def corpus_sentences(reports: Iterable[Report]) -> list[Sentence]:
    return [s for r in reports for s in segment_sentences(r)]


def _ranked(counter: Counter) -> list[tuple]:
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))


def build_vocabulary(sentences: Iterable[Sentence | Iterable[str]], min_count: int = 1) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counter: Counter = Counter()
    for s in sentences:
        counter.update(s.tokens if isinstance(s, Sentence) else s)
    kept = [(t, c) for t, c in _ranked(counter) if c >= min_count]
    if not kept:
        raise ValueError("empty vocabulary after min_count filtering")
    tokens, counts = zip(*kept)
    return Vocabulary(tuple(tokens), tuple(counts))


def unigram_distribution(vocab: Vocabulary, power: float = 1.0) -> np.ndarray:
    """Noise distribution over ids; ``power=1`` is the raw unigram."""
    if vocab.size < 1:
        raise ValueError("empty vocabulary")
    if power == 1.0:
        # exact rational normalisation, then one rounding per entry
        total = vocab.total_tokens
        return np.array([float(Fraction(c, total)) for c in vocab.counts])
    weights = np.asarray(vocab.counts, dtype=np.float64) ** power
    return weights / weights.sum()


def corpus_stats(reports: Iterable[Report], bucket_width: int = 50, top_k: int = 50) -> CorpusStats:
    """Token count, vocabulary size, report length histogram and top tokens.

    Lengths are words per cleaned report; bucket key is the bucket's lower bound.
    """
    if bucket_width < 1:
        raise ValueError("bucket_width must be >= 1")
    counter: Counter = Counter()
    hist: Counter = Counter()
    for r in reports:
        tokens = tokenize(clean_text(r.text))
        counter.update(tokens)
        hist[(len(tokens) // bucket_width) * bucket_width] += 1
    return CorpusStats(
        token_count=sum(counter.values()),
        vocab_size=len(counter),
        length_histogram=dict(sorted(hist.items())),
        top_tokens=_ranked(counter)[:top_k],
        bucket_width=bucket_width,
    )


def raw_token_stats(reports: Iterable[Report]) -> tuple[int, int]:
    """(T, V) before cleaning: whitespace tokens of the raw text."""
    counter: Counter = Counter()
    for r in reports:
        counter.update(r.text.split())
    return sum(counter.values()), len(counter)


def top_ngrams(sentences: Iterable[Sentence | Iterable[str]], n: int, k: int) -> list[tuple[str, int]]:
    """Most frequent n-grams, counted within sentence boundaries."""
    if n < 1:
        raise ValueError("n must be >= 1")
    counter: Counter = Counter()
    for s in sentences:
        toks = s.tokens if isinstance(s, Sentence) else tuple(s)
        counter.update(" ".join(toks[i:i + n]) for i in range(len(toks) - n + 1))
    return _ranked(counter)[:k]
