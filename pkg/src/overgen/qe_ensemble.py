"""Threshold-based flagging of QE scores and verdict combination.

Quality-estimation scores arrive as data on a fixed 0.0-2.0 scale; this
module turns them into binary overgeneration flags via a threshold
calibrated on a development set, and OR-combines QE flags with
alignment-gap verdicts. The polarity of the score scale is a mandatory
configuration rather than a guess.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .detector import DetectionMethod, OvergenLabel, Verdict
from .evalkit import prf

QE_MIN = 0.0
QE_MAX = 2.0


class CalibrationError(ValueError):
    pass


class ScoreDirection(str, Enum):
    """Which end of the score scale indicates an overgeneration."""

    LOW_SCORE_IS_OVERGEN = "low_score_is_overgen"
    HIGH_SCORE_IS_OVERGEN = "high_score_is_overgen"


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    f1_at_threshold: float
    direction: ScoreDirection
    support: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "threshold": self.threshold,
                "direction": self.direction.value,
                "f1": self.f1_at_threshold,
                "support": self.support,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "CalibrationResult":
        doc = json.loads(text)
        return cls(
            threshold=float(doc["threshold"]),
            f1_at_threshold=float(doc["f1"]),
            direction=ScoreDirection(doc["direction"]),
            support=int(doc["support"]),
        )


def flag_from_score(
    score: float, threshold: float, direction: ScoreDirection
) -> bool:
    """Apply the calibrated threshold to one score. Boundary is inclusive."""
    if not (QE_MIN <= score <= QE_MAX):
        raise ValueError(f"score {score} outside [{QE_MIN}, {QE_MAX}]")
    if direction is ScoreDirection.LOW_SCORE_IS_OVERGEN:
        return score <= threshold
    return score >= threshold


def calibrate_threshold(
    dev: Sequence[tuple[float, bool]], direction: ScoreDirection
) -> CalibrationResult:
    """Pick the threshold maximizing F1 of the overgeneration class.

    Candidates are the midpoints between consecutive distinct sorted
    scores plus both extremes; every achievable flag set is induced by
    one of them. Ties break toward the candidate flagging fewer items
    (favoring precision), then toward the more conservative threshold.
    """
    if not dev:
        raise CalibrationError("empty development set")
    n_pos = sum(1 for _, y in dev if y)
    if n_pos == 0 or n_pos == len(dev):
        raise CalibrationError(
            "development set needs at least one positive and one negative example"
        )

    distinct = sorted({s for s, _ in dev})
    candidates = [distinct[0]]
    for a, b in zip(distinct, distinct[1:]):
        candidates.append((a + b) / 2.0)
    if len(distinct) > 1:
        candidates.append(distinct[-1])

    low = direction is ScoreDirection.LOW_SCORE_IS_OVERGEN
    best: tuple[float, int, float] | None = None
    best_thr = candidates[0]
    best_f1 = 0.0
    for thr in candidates:
        tp = fp = fn = 0
        flagged = 0
        for score, is_og in dev:
            flag = score <= thr if low else score >= thr
            if flag:
                flagged += 1
            if flag and is_og:
                tp += 1
            elif flag:
                fp += 1
            elif is_og:
                fn += 1
        f1 = prf(tp, fp, fn).f1
        key = (-f1, flagged, thr if low else -thr)
        if best is None or key < best:
            best = key
            best_thr = thr
            best_f1 = f1
    return CalibrationResult(
        threshold=best_thr,
        f1_at_threshold=best_f1,
        direction=direction,
        support=len(dev),
    )


def qe_verdict(
    segment_id: str,
    score: float | None,
    threshold: float,
    direction: ScoreDirection,
) -> Verdict:
    """Build a QE-method verdict for one segment.

    QE carries no span or category information, so a flagged segment is
    labelled detached (the binary pooled evaluation is unaffected by the
    choice). A missing score never flags.
    """
    flagged = (
        flag_from_score(score, threshold, direction) if score is not None else False
    )
    return Verdict(
        segment_id=segment_id,
        flagged=flagged,
        label=OvergenLabel.DETACHED if flagged else OvergenLabel.NONE,
        spans=[],
        unaligned_fraction=0.0,
        oscillatory_score=0,
        method=DetectionMethod.QE,
    )


def ensemble_or(a: Verdict, b: Verdict) -> Verdict:
    """Combine two verdicts for the same segment with an OR over flags.

    When both flag, the alignment-based verdict supplies label and
    spans since QE has no span information; otherwise the flagging
    verdict does. Both constituent flags are kept for audit.
    """
    if a.segment_id != b.segment_id:
        raise ValueError(
            f"cannot ensemble verdicts for different segments: "
            f"{a.segment_id!r} vs {b.segment_id!r}"
        )
    if a.flagged and b.flagged:
        if b.method is DetectionMethod.CHECKALIGN and a.method is not DetectionMethod.CHECKALIGN:
            primary = b
        else:
            primary = a
    elif a.flagged or b.flagged:
        primary = a if a.flagged else b
    else:
        primary = a
    spans = sorted(set(a.spans) | set(b.spans), key=lambda s: (s.start, s.end))
    return Verdict(
        segment_id=a.segment_id,
        flagged=a.flagged or b.flagged,
        label=primary.label,
        spans=spans,
        unaligned_fraction=max(a.unaligned_fraction, b.unaligned_fraction),
        oscillatory_score=max(a.oscillatory_score, b.oscillatory_score),
        method=DetectionMethod.ENSEMBLE,
        source_flags=[(a.method.value, a.flagged), (b.method.value, b.flagged)],
    )
