"""Annotated segment collections and their interchange formats.

The canonical interchange is JSONL, one segment record per line; TSV is
supported for spreadsheet-exported annotations. Unknown JSONL keys are
kept opaquely on each segment and written back on save, so richer
annotations survive a round trip.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterator

from .aligner import Alignment, PharaohFormatError, parse_pharaoh, serialize_pharaoh
from .detector import OvergenLabel

_LANG_PAIR_RE = re.compile(r"^[a-z]{2,3}-[a-z]{2,3}$")

QE_SCORE_MIN = 0.0
QE_SCORE_MAX = 2.0

_REQUIRED_KEYS = ("id", "src", "tgt", "lang_pair")
_KNOWN_KEYS = frozenset(
    _REQUIRED_KEYS + ("gold_label", "qe_score", "ext_score", "alignment")
)


class CorpusError(ValueError):
    """Malformed or inconsistent corpus data; messages carry line/id context."""


@dataclass
class SegmentPair:
    """One source/target unit with optional annotations.

    `qe_score` is a quality-estimation score on the fixed 0.0-2.0 scale;
    `ext_score` is a generic external quality signal on whatever scale
    the originating dataset uses (the two are deliberately separate).
    """

    id: str
    src: str
    tgt: str
    lang_pair: str
    gold_label: OvergenLabel | None = None
    qe_score: float | None = None
    ext_score: float | None = None
    alignment: Alignment | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("segment id must be non-empty")
        if not _LANG_PAIR_RE.match(self.lang_pair):
            raise CorpusError(
                f"segment {self.id!r}: lang_pair {self.lang_pair!r} does not match 'xx-yy'"
            )
        if self.qe_score is not None and not (
            QE_SCORE_MIN <= self.qe_score <= QE_SCORE_MAX
        ):
            raise CorpusError(
                f"segment {self.id!r}: qe_score {self.qe_score} outside "
                f"[{QE_SCORE_MIN}, {QE_SCORE_MAX}]"
            )


@dataclass
class Corpus:
    """An ordered, immutable-by-convention collection of segments."""

    segments: list[SegmentPair]
    name: str = ""

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for seg in self.segments:
            if seg.id in seen:
                raise CorpusError(f"duplicate segment id {seg.id!r}")
            seen.add(seg.id)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[SegmentPair]:
        return iter(self.segments)

    def by_id(self) -> dict[str, SegmentPair]:
        return {seg.id: seg for seg in self.segments}


def _segment_from_record(record: dict, where: str) -> SegmentPair:
    if not isinstance(record, dict):
        raise CorpusError(f"{where}: record is not a JSON object")
    for key in _REQUIRED_KEYS:
        if key not in record:
            raise CorpusError(f"{where}: missing required key {key!r}")
        if not isinstance(record[key], str):
            raise CorpusError(f"{where}: key {key!r} must be a string")

    gold = None
    if "gold_label" in record:
        try:
            gold = OvergenLabel.parse(record["gold_label"])
        except ValueError as exc:
            raise CorpusError(f"{where}: {exc}") from exc

    def opt_number(key: str) -> float | None:
        if key not in record:
            return None
        value = record[key]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise CorpusError(f"{where}: key {key!r} must be a number")
        return float(value)

    alignment = None
    if "alignment" in record:
        if not isinstance(record["alignment"], str):
            raise CorpusError(f"{where}: key 'alignment' must be a Pharaoh string")
        try:
            alignment = parse_pharaoh(record["alignment"])
        except PharaohFormatError as exc:
            raise CorpusError(f"{where}: {exc}") from exc

    extra = {k: v for k, v in record.items() if k not in _KNOWN_KEYS}
    try:
        return SegmentPair(
            id=record["id"],
            src=record["src"],
            tgt=record["tgt"],
            lang_pair=record["lang_pair"],
            gold_label=gold,
            qe_score=opt_number("qe_score"),
            ext_score=opt_number("ext_score"),
            alignment=alignment,
            extra=extra,
        )
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from exc


def stream_jsonl(path: str) -> Iterator[SegmentPair]:
    """Yield segments from a JSONL file one at a time (blank lines skipped).

    Duplicate-id checking is the caller's responsibility; load_jsonl
    performs it for whole-file loads.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed JSON: {exc.msg}") from exc
            yield _segment_from_record(record, where)


def load_jsonl(path: str, name: str | None = None) -> Corpus:
    """Load a JSONL corpus, preserving file order."""
    return Corpus(list(stream_jsonl(path)), name=name if name is not None else path)


def segment_to_record(seg: SegmentPair) -> dict:
    record: dict = {
        "id": seg.id,
        "src": seg.src,
        "tgt": seg.tgt,
        "lang_pair": seg.lang_pair,
    }
    if seg.gold_label is not None:
        record["gold_label"] = seg.gold_label.value
    if seg.qe_score is not None:
        record["qe_score"] = seg.qe_score
    if seg.ext_score is not None:
        record["ext_score"] = seg.ext_score
    if seg.alignment is not None:
        record["alignment"] = serialize_pharaoh(seg.alignment)
    record.update(seg.extra)
    return record


def write_jsonl(corpus: Corpus, path: str) -> None:
    """Write one JSON object per segment; load_jsonl inverts this exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for seg in corpus:
            fh.write(json.dumps(segment_to_record(seg), ensure_ascii=False) + "\n")


_TSV_COLUMNS = ("id", "src", "tgt", "lang_pair", "gold_label", "qe_score")


def load_tsv(path: str, has_header: bool = False, name: str | None = None) -> Corpus:
    """Load a tab-separated corpus.

    Columns: id, src, tgt, lang_pair, then optional gold_label and
    qe_score. Empty optional cells mean the field is absent.
    """
    segments = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if has_header and lineno == 1:
                continue
            line = raw.rstrip("\r\n")
            if not line:
                continue
            cols = line.split("\t")
            where = f"{path}:{lineno}"
            if not (4 <= len(cols) <= 6):
                raise CorpusError(
                    f"{where}: expected 4-6 tab-separated columns, got {len(cols)}"
                )
            gold = None
            if len(cols) >= 5 and cols[4]:
                try:
                    gold = OvergenLabel.parse(cols[4])
                except ValueError as exc:
                    raise CorpusError(f"{where}: {exc}") from exc
            qe = None
            if len(cols) == 6 and cols[5]:
                try:
                    qe = float(cols[5])
                except ValueError:
                    raise CorpusError(
                        f"{where}: qe_score column is not a number: {cols[5]!r}"
                    ) from None
            try:
                segments.append(
                    SegmentPair(
                        id=cols[0],
                        src=cols[1],
                        tgt=cols[2],
                        lang_pair=cols[3],
                        gold_label=gold,
                        qe_score=qe,
                    )
                )
            except CorpusError as exc:
                raise CorpusError(f"{where}: {exc}") from exc
    return Corpus(segments, name=name if name is not None else path)


def filter_score_band(corpus: Corpus, lo: float, hi: float) -> Corpus:
    """Keep segments whose ext_score is present and within [lo, hi]."""
    if lo > hi:
        raise ValueError(f"invalid band: lo {lo} > hi {hi}")
    kept = [
        seg
        for seg in corpus
        if seg.ext_score is not None and lo <= seg.ext_score <= hi
    ]
    return Corpus(kept, name=corpus.name)


def copy_segment(seg: SegmentPair, **changes) -> SegmentPair:
    """Shallow copy with field overrides (extra dict is copied)."""
    if "extra" not in changes:
        changes["extra"] = dict(seg.extra)
    return replace(seg, **changes)
