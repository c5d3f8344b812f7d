"""Alignment-gap span detection, repetition scoring and verdict assembly.

The checkalign detector flags a segment when n or more consecutive
target tokens have no alignment link at all; the oscillatory detector
compares top n-gram counts between target and source; the classifier
maps both signals to a single overgeneration category per segment.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from . import _kernels
from .aligner import Alignment
from .tokenizer import TokenSeq, tokenize

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import SegmentPair


class OvergenLabel(str, Enum):
    """Per-segment overgeneration category."""

    NONE = "none"
    OSCILLATORY = "oscillatory"
    DETACHED = "detached"
    PARTIALLY_DETACHED = "partially_detached"
    MINIMALLY_DETACHED = "minimally_detached"

    @classmethod
    def parse(cls, token: str) -> "OvergenLabel":
        try:
            return cls(token)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown label {token!r} (expected one of: {valid})") from None


OVERGEN_LABELS = (
    OvergenLabel.NONE,
    OvergenLabel.OSCILLATORY,
    OvergenLabel.DETACHED,
    OvergenLabel.PARTIALLY_DETACHED,
    OvergenLabel.MINIMALLY_DETACHED,
)


class DetectionMethod(str, Enum):
    CHECKALIGN = "checkalign"
    QE = "qe"
    ENSEMBLE = "ensemble"


@dataclass(frozen=True)
class DetachedSpan:
    """A maximal run of consecutive unaligned target tokens, inclusive ends."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid span ({self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class DetectorParams:
    """Detection thresholds.

    n: minimum consecutive unaligned target tokens for a span.
    theta_detached: unaligned span fraction at or above which the whole
        segment counts as detached.
    k_partial: span length separating partially from minimally detached.
    ngram_order / tng_margin: repetition statistic order and the
        target-minus-source margin that triggers the oscillatory flag.
    """

    n: int = 2
    theta_detached: float = 0.8
    k_partial: int = 5
    ngram_order: int = 2
    tng_margin: int = 3

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not (0.0 < self.theta_detached <= 1.0):
            raise ValueError(f"theta_detached must be in (0, 1], got {self.theta_detached}")
        if self.k_partial < self.n:
            raise ValueError(f"k_partial must be >= n, got {self.k_partial} < {self.n}")
        if self.ngram_order < 1:
            raise ValueError(f"ngram_order must be >= 1, got {self.ngram_order}")
        if self.tng_margin < 1:
            raise ValueError(f"tng_margin must be >= 1, got {self.tng_margin}")


@dataclass
class Verdict:
    """One detector outcome for one segment."""

    segment_id: str
    flagged: bool
    label: OvergenLabel
    spans: list[DetachedSpan]
    unaligned_fraction: float
    oscillatory_score: int
    method: DetectionMethod
    source_flags: list[tuple[str, bool]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.flagged != (self.label is not OvergenLabel.NONE):
            raise ValueError(
                f"verdict for {self.segment_id!r}: flagged={self.flagged} "
                f"inconsistent with label={self.label.value}"
            )
        if (
            self.method is DetectionMethod.CHECKALIGN
            and self.label
            in (
                OvergenLabel.DETACHED,
                OvergenLabel.PARTIALLY_DETACHED,
                OvergenLabel.MINIMALLY_DETACHED,
            )
            and not self.spans
        ):
            raise ValueError(
                f"verdict for {self.segment_id!r}: detached-family label requires spans"
            )
        if not (0.0 <= self.unaligned_fraction <= 1.0):
            raise ValueError(
                f"unaligned_fraction must be in [0, 1], got {self.unaligned_fraction}"
            )


def find_unaligned_spans(tgt_len: int, alignment: Alignment, n: int) -> list[DetachedSpan]:
    """All maximal runs of >= n consecutive unaligned target indices.

    Runs are returned in ascending start order. An alignment link
    referencing a target index >= tgt_len raises IndexError.
    """
    if tgt_len < 0:
        raise ValueError(f"tgt_len must be >= 0, got {tgt_len}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    aligned = np.zeros(tgt_len, dtype=np.bool_)
    for _, j in alignment.links:
        if j >= tgt_len:
            raise IndexError(f"alignment target index {j} out of range for length {tgt_len}")
        aligned[j] = True
    runs = _kernels.unaligned_runs(aligned)
    return [
        DetachedSpan(int(s), int(e)) for s, e in runs if e - s + 1 >= n
    ]


def top_ngram_count(tokens: TokenSeq, order: int) -> tuple[list[str], int]:
    """Most frequent order-gram (overlapping occurrences counted) and its count.

    Ties break toward the earliest first occurrence. Sequences shorter
    than `order` yield ([], 0).
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    toks = tokens.tokens
    if len(toks) < order:
        return [], 0
    grams = [toks[i : i + order] for i in range(len(toks) - order + 1)]
    counts = Counter(grams)
    first_pos: dict[tuple[str, ...], int] = {}
    for i, g in enumerate(grams):
        first_pos.setdefault(g, i)
    best = max(counts, key=lambda g: (counts[g], -first_pos[g]))
    return list(best), counts[best]


def detect_oscillatory(
    src: TokenSeq, tgt: TokenSeq, params: DetectorParams
) -> tuple[bool, int]:
    """Flag pathological target-side repetition.

    The signal is the target's top n-gram count minus the source's, so
    legitimate repetition mirrored from the source does not fire. The
    returned score is the difference floored at 0.
    """
    _, tgt_count = top_ngram_count(tgt, params.ngram_order)
    _, src_count = top_ngram_count(src, params.ngram_order)
    diff = tgt_count - src_count
    return diff >= params.tng_margin, max(diff, 0)


def classify(
    tgt_len: int,
    spans: Sequence[DetachedSpan],
    oscillatory: bool,
    params: DetectorParams,
) -> OvergenLabel:
    """Map span and repetition evidence to one category.

    Priority: oscillatory, then whole-segment detachment (summed span
    length at least theta_detached of the target), then any span of at
    least k_partial tokens, then any remaining span, else none.
    """
    if tgt_len == 0 and spans:
        raise ValueError("spans reported for an empty target")
    for span in spans:
        if span.end >= tgt_len:
            raise ValueError(f"span ({span.start}, {span.end}) exceeds target length {tgt_len}")
    if oscillatory:
        return OvergenLabel.OSCILLATORY
    if not spans:
        return OvergenLabel.NONE
    covered = sum(s.length for s in spans)
    if covered / tgt_len >= params.theta_detached:
        return OvergenLabel.DETACHED
    if any(s.length >= params.k_partial for s in spans):
        return OvergenLabel.PARTIALLY_DETACHED
    return OvergenLabel.MINIMALLY_DETACHED


def checkalign_detect(
    pair: "SegmentPair",
    alignment: Alignment,
    params: DetectorParams = DetectorParams(),
) -> Verdict:
    """Run the full alignment-gap detector on one segment.

    Composes tokenization, span finding, oscillation detection and
    classification. An empty target never flags: omissions are out of
    scope, only additions are detected.
    """
    src_seq = tokenize(pair.src)
    tgt_seq = tokenize(pair.tgt)
    n_tgt = len(tgt_seq)
    for i, _ in alignment.links:
        if i >= len(src_seq):
            raise IndexError(
                f"alignment source index {i} out of range for length {len(src_seq)}"
            )
    spans = find_unaligned_spans(n_tgt, alignment, params.n)
    osc, score = detect_oscillatory(src_seq, tgt_seq, params)
    label = classify(n_tgt, spans, osc, params)
    unaligned = n_tgt - len(alignment.aligned_tgt()) if n_tgt else 0
    return Verdict(
        segment_id=pair.id,
        flagged=label is not OvergenLabel.NONE,
        label=label,
        spans=spans,
        unaligned_fraction=unaligned / n_tgt if n_tgt else 0.0,
        oscillatory_score=score,
        method=DetectionMethod.CHECKALIGN,
    )


# ---------------------------------------------------------------------------
# Verdict wire format: one JSON object per line
# ---------------------------------------------------------------------------


def verdict_to_record(v: Verdict) -> dict:
    record = {
        "id": v.segment_id,
        "flagged": v.flagged,
        "label": v.label.value,
        "spans": [{"start": s.start, "end": s.end} for s in v.spans],
        "unaligned_fraction": v.unaligned_fraction,
        "oscillatory_score": v.oscillatory_score,
        "method": v.method.value,
    }
    if v.source_flags:
        record["source_flags"] = [
            {"method": m, "flagged": f} for m, f in v.source_flags
        ]
    return record


def verdict_from_record(record: dict) -> Verdict:
    try:
        spans = [DetachedSpan(int(s["start"]), int(s["end"])) for s in record.get("spans", [])]
        return Verdict(
            segment_id=record["id"],
            flagged=bool(record["flagged"]),
            label=OvergenLabel.parse(record["label"]),
            spans=spans,
            unaligned_fraction=float(record["unaligned_fraction"]),
            oscillatory_score=int(record["oscillatory_score"]),
            method=DetectionMethod(record["method"]),
            source_flags=[
                (s["method"], bool(s["flagged"])) for s in record.get("source_flags", [])
            ],
        )
    except KeyError as exc:
        raise ValueError(f"verdict record missing key {exc}") from exc


def write_verdicts_jsonl(verdicts: Iterable[Verdict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in verdicts:
            fh.write(json.dumps(verdict_to_record(v), ensure_ascii=False) + "\n")


def load_verdicts_jsonl(path: str) -> list[Verdict]:
    verdicts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                verdicts.append(verdict_from_record(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return verdicts
