"""Labelled synthetic overgeneration corpora from clean parallel text.

Three perturbations: prepending a helpful-assistant prefix, splicing a
short confabulated phrase into the target, and replacing or suffixing
the target with a repetition burst. Every injection comes with an
oracle alignment (the clean portion stays covered, injected tokens stay
uncovered) so detectors can be tested with perfect alignments, and a
manifest records exactly what was changed where.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Sequence

from .aligner import Alignment
from .corpus import Corpus, CorpusError, SegmentPair, copy_segment
from .detector import OvergenLabel
from .tokenizer import tokenize

# Target-language names for {language} template placeholders; codes not
# listed fall back to the bare code.
LANGUAGE_NAMES = {
    "de": "German",
    "en": "English",
    "es": "Spanish",
    "fr": "French",
    "it": "Italian",
    "ja": "Japanese",
    "nl": "Dutch",
    "ru": "Russian",
    "zh": "Chinese",
}


class InjectionKind(str, Enum):
    PREFIX = "prefix"
    CONFABULATION = "confabulation"
    OSCILLATION = "oscillation"


@dataclass
class InjectionSpec:
    """One perturbation pass over a corpus."""

    kind: InjectionKind
    templates: list[str] = field(default_factory=list)
    insert_lexicon: list[list[str]] = field(default_factory=list)
    repeat_token_range: tuple[int, int] = (8, 12)
    rate: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.rate <= 1.0):
            raise ValueError(f"rate must be in [0, 1], got {self.rate}")
        if self.kind is InjectionKind.PREFIX and not self.templates:
            raise ValueError("prefix injection needs at least one template")
        if self.kind is InjectionKind.CONFABULATION and not self.insert_lexicon:
            raise ValueError("confabulation injection needs a non-empty lexicon")
        if self.kind is InjectionKind.OSCILLATION:
            lo, hi = self.repeat_token_range
            if lo < 2 or hi < lo:
                raise ValueError(
                    f"repeat_token_range must satisfy 2 <= min <= max, got {self.repeat_token_range}"
                )


@dataclass
class SyntheticSegment:
    pair: SegmentPair
    injected_span: tuple[int, int] | None
    oracle_alignment: Alignment


@dataclass
class ManifestEntry:
    """One record per touched segment; skipped=True marks a segment a
    later spec selected but could not modify again."""

    id: str
    kind: InjectionKind
    template_or_insert: str
    span: tuple[int, int] | None
    skipped: bool = False

    def to_record(self) -> dict:
        record: dict = {
            "id": self.id,
            "kind": self.kind.value,
            "template_or_insert": self.template_or_insert,
            "span": None if self.span is None else {"start": self.span[0], "end": self.span[1]},
        }
        if self.skipped:
            record["skipped"] = True
        return record

    @classmethod
    def from_record(cls, record: dict) -> "ManifestEntry":
        span = record.get("span")
        return cls(
            id=record["id"],
            kind=InjectionKind(record["kind"]),
            template_or_insert=record["template_or_insert"],
            span=None if span is None else (int(span["start"]), int(span["end"])),
            skipped=bool(record.get("skipped", False)),
        )


def _read_resource_lines(filename: str) -> list[str]:
    text = resources.files("overgen").joinpath("data", filename).read_text("utf-8")
    return [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]


def load_templates(path: str | None = None) -> list[str]:
    """Prefix templates, one per line; the packaged defaults when no path."""
    if path is None:
        return _read_resource_lines("prefix_templates.txt")
    with open(path, "r", encoding="utf-8") as fh:
        return [l.strip() for l in fh if l.strip() and not l.lstrip().startswith("#")]


def load_lexicon(path: str | None = None) -> list[list[str]]:
    """Confabulation phrases as token sequences; packaged defaults when no path."""
    if path is None:
        lines = _read_resource_lines("confab_lexicon.txt")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [l.strip() for l in fh if l.strip() and not l.lstrip().startswith("#")]
    return [list(tokenize(line).tokens) for line in lines]


def _target_language(pair: SegmentPair) -> str:
    code = pair.lang_pair.split("-", 1)[1]
    return LANGUAGE_NAMES.get(code, code)


def base_alignment(pair: SegmentPair) -> Alignment:
    """The pair's own alignment, or a saturating identity covering every
    target token (token j links to source min(j, n_src - 1))."""
    if pair.alignment is not None:
        return pair.alignment
    n_src = len(tokenize(pair.src))
    n_tgt = len(tokenize(pair.tgt))
    if n_tgt and not n_src:
        raise ValueError(
            f"segment {pair.id!r}: cannot build a base alignment with an empty source"
        )
    return Alignment(frozenset((min(j, n_src - 1), j) for j in range(n_tgt)))


def _shift_tgt(alignment: Alignment, at: int, by: int) -> Alignment:
    return Alignment(
        frozenset((i, j + by if j >= at else j) for i, j in alignment.links)
    )


def inject_prefix(
    pair: SegmentPair, template: str, theta_detached: float = 0.8
) -> SyntheticSegment:
    """Prepend a helpful-assistant phrase to the target.

    The label is partially detached unless the prefix dominates the new
    target (token fraction >= theta_detached), which makes it detached.
    """
    text = template.replace("{language}", _target_language(pair)).strip()
    if not text:
        raise ValueError("prefix template is empty")
    k = len(tokenize(text))
    base = base_alignment(pair)
    new_tgt = f"{text} {pair.tgt}" if pair.tgt else text
    new_len = k + len(tokenize(pair.tgt))
    label = (
        OvergenLabel.DETACHED
        if k / new_len >= theta_detached
        else OvergenLabel.PARTIALLY_DETACHED
    )
    return SyntheticSegment(
        pair=copy_segment(pair, tgt=new_tgt, gold_label=label, alignment=None),
        injected_span=(0, k - 1),
        oracle_alignment=_shift_tgt(base, 0, k),
    )


def inject_confabulation(
    pair: SegmentPair,
    insert: Sequence[str],
    position: int,
    k_partial: int = 5,
) -> SyntheticSegment:
    """Splice a token sequence into the target at a token position.

    Short inserts (fewer than k_partial tokens) are labelled minimally
    detached, longer ones partially detached.
    """
    if not insert:
        raise ValueError("insert must contain at least one token")
    tgt_seq = tokenize(pair.tgt)
    if not (0 <= position <= len(tgt_seq)):
        raise IndexError(
            f"position {position} out of range for target of {len(tgt_seq)} tokens"
        )
    phrase = " ".join(insert)
    m = len(tokenize(phrase))
    base = base_alignment(pair)
    if position == len(tgt_seq):
        cut = len(pair.tgt)
        new_tgt = pair.tgt[:cut].rstrip() + (" " if pair.tgt.strip() else "") + phrase
    else:
        cut = tgt_seq.offsets[position][0]
        new_tgt = pair.tgt[:cut] + phrase + " " + pair.tgt[cut:]
    label = (
        OvergenLabel.MINIMALLY_DETACHED
        if m < k_partial
        else OvergenLabel.PARTIALLY_DETACHED
    )
    return SyntheticSegment(
        pair=copy_segment(pair, tgt=new_tgt, gold_label=label, alignment=None),
        injected_span=(position, position + m - 1),
        oracle_alignment=_shift_tgt(base, position, m),
    )


def inject_oscillation(
    pair: SegmentPair, token: str, repeats: int, mode: str = "replace"
) -> SyntheticSegment:
    """Replace (or suffix) the target with `repeats` copies of token+','."""
    if repeats < 2:
        raise ValueError(f"repeats must be >= 2, got {repeats}")
    if mode not in ("replace", "suffix"):
        raise ValueError(f"mode must be 'replace' or 'suffix', got {mode!r}")
    burst = " ".join(f"{token}," for _ in range(repeats))
    m = len(tokenize(burst))
    if mode == "replace":
        new_tgt = burst
        span = (0, m - 1)
        oracle = Alignment(frozenset())
    else:
        orig_len = len(tokenize(pair.tgt))
        new_tgt = f"{pair.tgt} {burst}" if pair.tgt else burst
        span = (orig_len, orig_len + m - 1)
        oracle = base_alignment(pair)
    return SyntheticSegment(
        pair=copy_segment(pair, tgt=new_tgt, gold_label=OvergenLabel.OSCILLATORY, alignment=None),
        injected_span=span,
        oracle_alignment=oracle,
    )


def _word_tokens(pair: SegmentPair) -> list[str]:
    return [t for t in tokenize(pair.tgt).tokens if any(c.isalnum() for c in t)]


def build_synthetic_corpus(
    clean: Corpus, specs: Sequence[InjectionSpec]
) -> tuple[Corpus, list[Alignment], list[ManifestEntry]]:
    """Apply injection specs to a clean corpus, deterministically per seed.

    Returns the perturbed corpus (untouched segments explicitly labelled
    none), one oracle alignment per segment in corpus order, and the
    manifest of applied (and skipped) injections. A segment already
    perturbed by an earlier spec is skipped by later ones.
    """
    for seg in clean:
        if seg.gold_label not in (None, OvergenLabel.NONE):
            raise CorpusError(
                f"segment {seg.id!r} already carries gold label "
                f"{seg.gold_label.value!r}; expected a clean corpus"
            )

    results: list[SyntheticSegment | None] = [None] * len(clean)
    manifest: list[ManifestEntry] = []
    segments = list(clean)

    for spec in specs:
        rng = random.Random(spec.seed)
        k = round(spec.rate * len(segments))
        chosen = sorted(rng.sample(range(len(segments)), k))
        for idx in chosen:
            seg = segments[idx]
            if results[idx] is not None:
                manifest.append(
                    ManifestEntry(seg.id, spec.kind, "", None, skipped=True)
                )
                continue
            if spec.kind is InjectionKind.PREFIX:
                template = rng.choice(spec.templates)
                synth = inject_prefix(seg, template)
                described = template
            elif spec.kind is InjectionKind.CONFABULATION:
                insert = rng.choice(spec.insert_lexicon)
                position = rng.randrange(len(tokenize(seg.tgt)) + 1)
                synth = inject_confabulation(seg, insert, position)
                described = " ".join(insert)
            else:
                words = _word_tokens(seg)
                if not words:
                    manifest.append(
                        ManifestEntry(seg.id, spec.kind, "", None, skipped=True)
                    )
                    continue
                token = rng.choice(words)
                repeats = rng.randint(*spec.repeat_token_range)
                synth = inject_oscillation(seg, token, repeats)
                described = f"{token} x{repeats}"
            results[idx] = synth
            manifest.append(
                ManifestEntry(seg.id, spec.kind, described, synth.injected_span)
            )

    out_segments: list[SegmentPair] = []
    alignments: list[Alignment] = []
    for idx, seg in enumerate(segments):
        synth = results[idx]
        if synth is None:
            out_segments.append(copy_segment(seg, gold_label=OvergenLabel.NONE))
            alignments.append(base_alignment(seg))
        else:
            out_segments.append(synth.pair)
            alignments.append(synth.oracle_alignment)
    name = f"{clean.name}-synthetic" if clean.name else "synthetic"
    return Corpus(out_segments, name=name), alignments, manifest
