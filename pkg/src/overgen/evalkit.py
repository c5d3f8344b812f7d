"""Scoring detector runs against gold labels.

Binary pooling (all overgeneration categories vs none) is the primary
mode; per-category one-vs-rest scores and the full confusion matrix are
available for taxonomy analysis. Zero-denominator precision/recall/F1
come back as 0 with an explicit flag instead of raising, so runs with
sparse positives never abort.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .corpus import Corpus
from .detector import OVERGEN_LABELS, OvergenLabel, Verdict


class EvalError(ValueError):
    pass


class EvalMode(str, Enum):
    BINARY = "binary"
    PER_LABEL = "per_label"


@dataclass(frozen=True)
class PRF:
    """Precision / recall / F1 with flags naming any zero-denominator parts."""

    precision: float
    recall: float
    f1: float
    undefined: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix indexed (gold row, predicted column)."""

    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.labels):
            raise EvalError("matrix is not square")
        for row in self.counts:
            if len(row) != len(self.labels):
                raise EvalError("matrix is not square")
            if any(c < 0 for c in row):
                raise EvalError("matrix counts must be non-negative")

    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


@dataclass
class EvalReport:
    n_segments: int
    binary: PRF
    per_label: dict[str, PRF]
    matrix: ConfusionMatrix
    excluded: int = 0


def prf(tp: int, fp: int, fn: int) -> PRF:
    """Precision, recall and their harmonic mean from raw counts."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    undefined = []
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.append("f1")
    return PRF(precision, recall, f1, tuple(undefined))


def confusion_matrix(
    gold: Sequence[OvergenLabel], pred: Sequence[OvergenLabel]
) -> ConfusionMatrix:
    """Count matrix over the full label taxonomy, gold rows by predicted columns."""
    if len(gold) != len(pred):
        raise EvalError(f"gold/pred length mismatch: {len(gold)} vs {len(pred)}")
    if not gold:
        raise EvalError("cannot build a confusion matrix from zero segments")
    index = {label: k for k, label in enumerate(OVERGEN_LABELS)}
    counts = [[0] * len(OVERGEN_LABELS) for _ in OVERGEN_LABELS]
    for g, p in zip(gold, pred):
        counts[index[g]][index[p]] += 1
    return ConfusionMatrix(
        labels=tuple(label.value for label in OVERGEN_LABELS),
        counts=tuple(tuple(row) for row in counts),
    )


def binary_counts(matrix: ConfusionMatrix) -> tuple[int, int, int, int]:
    """Pool every overgeneration label against 'none'; returns (tp, fp, fn, tn)."""
    try:
        none_idx = matrix.labels.index(OvergenLabel.NONE.value)
    except ValueError:
        raise EvalError("matrix has no 'none' label to pool against") from None
    tp = fp = fn = tn = 0
    for g, row in enumerate(matrix.counts):
        for p, count in enumerate(row):
            gold_pos = g != none_idx
            pred_pos = p != none_idx
            if gold_pos and pred_pos:
                tp += count
            elif not gold_pos and pred_pos:
                fp += count
            elif gold_pos and not pred_pos:
                fn += count
            else:
                tn += count
    return tp, fp, fn, tn


def pooled_binary_matrix(matrix: ConfusionMatrix) -> ConfusionMatrix:
    """Collapse the taxonomy matrix to a 2x2 over ('og', 'no_error')."""
    tp, fp, fn, tn = binary_counts(matrix)
    return ConfusionMatrix(labels=("og", "no_error"), counts=((tp, fn), (fp, tn)))


def _one_vs_rest(matrix: ConfusionMatrix, label: str) -> tuple[int, int, int]:
    k = matrix.labels.index(label)
    tp = matrix.counts[k][k]
    fp = sum(matrix.counts[g][k] for g in range(len(matrix.labels)) if g != k)
    fn = sum(matrix.counts[k][p] for p in range(len(matrix.labels)) if p != k)
    return tp, fp, fn


def evaluate_run(
    gold_corpus: Corpus, verdicts: Sequence[Verdict], mode: EvalMode = EvalMode.BINARY
) -> EvalReport:
    """Score verdicts against a gold-labelled corpus.

    A verdict for an unknown id, or a repeated id, is an error. Verdicts
    whose segment has no gold label are excluded and counted. Results do
    not depend on verdict order.
    """
    by_id = gold_corpus.by_id()
    seen: set[str] = set()
    gold: list[OvergenLabel] = []
    pred: list[OvergenLabel] = []
    excluded = 0
    for v in verdicts:
        if v.segment_id in seen:
            raise EvalError(f"duplicate verdict for segment {v.segment_id!r}")
        seen.add(v.segment_id)
        seg = by_id.get(v.segment_id)
        if seg is None:
            raise EvalError(f"verdict for unknown segment {v.segment_id!r}")
        if seg.gold_label is None:
            excluded += 1
            continue
        gold.append(seg.gold_label)
        pred.append(v.label)
    if not gold:
        raise EvalError("no verdicts matched a gold-labelled segment")

    matrix = confusion_matrix(gold, pred)
    tp, fp, fn, _ = binary_counts(matrix)
    binary = prf(tp, fp, fn)
    per_label: dict[str, PRF] = {}
    if mode is EvalMode.PER_LABEL:
        for label in matrix.labels:
            per_label[label] = prf(*_one_vs_rest(matrix, label))
    return EvalReport(
        n_segments=len(gold),
        binary=binary,
        per_label=per_label,
        matrix=matrix,
        excluded=excluded,
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


class ReportFormat(str, Enum):
    JSON = "json"
    PLAIN_TABLE = "table"


def _prf_to_json(p: PRF) -> dict:
    return {
        "precision": p.precision,
        "recall": p.recall,
        "f1": p.f1,
        "undefined": list(p.undefined),
    }


def _prf_from_json(d: dict) -> PRF:
    return PRF(
        precision=float(d["precision"]),
        recall=float(d["recall"]),
        f1=float(d["f1"]),
        undefined=tuple(d.get("undefined", [])),
    )


def render_report(report: EvalReport, format: ReportFormat = ReportFormat.JSON) -> str:
    """Render a report as lossless JSON or a plain score table.

    The table layout mirrors the usual reporting convention: a pooled
    overgeneration row ('OG'), its complement ('No error'), then any
    per-category rows, each as Pr / Rec / F1 rounded to two decimals.
    """
    if format is ReportFormat.JSON:
        doc = {
            "n_segments": report.n_segments,
            "excluded": report.excluded,
            "binary": _prf_to_json(report.binary),
            "per_label": {k: _prf_to_json(v) for k, v in report.per_label.items()},
            "matrix": {
                "labels": list(report.matrix.labels),
                "counts": [list(row) for row in report.matrix.counts],
            },
        }
        return json.dumps(doc, ensure_ascii=False, indent=2)

    tp, fp, fn, tn = binary_counts(report.matrix)
    no_error = prf(tn, fn, fp)
    lines = [
        f"segments: {report.n_segments}  excluded: {report.excluded}",
        f"{'label':<22}{'Pr / Rec / F1'}",
    ]

    def row(name: str, p: PRF) -> str:
        return f"{name:<22}{p.precision:.2f} / {p.recall:.2f} / {p.f1:.2f}"

    lines.append(row("OG", report.binary))
    lines.append(row("No error", no_error))
    for label, p in report.per_label.items():
        lines.append(row(label, p))
    return "\n".join(lines)


def parse_report(text: str) -> EvalReport:
    """Inverse of render_report's JSON form."""
    doc = json.loads(text)
    try:
        return EvalReport(
            n_segments=int(doc["n_segments"]),
            binary=_prf_from_json(doc["binary"]),
            per_label={k: _prf_from_json(v) for k, v in doc["per_label"].items()},
            matrix=ConfusionMatrix(
                labels=tuple(doc["matrix"]["labels"]),
                counts=tuple(tuple(int(c) for c in row) for row in doc["matrix"]["counts"]),
            ),
            excluded=int(doc.get("excluded", 0)),
        )
    except KeyError as exc:
        raise EvalError(f"report document missing key {exc}") from exc
