"""Deterministic, language-agnostic tokenization.

Token indices produced here are the shared coordinate system for
alignments, span detection and span reporting, so every component must
tokenize through this module. Rules: split on whitespace, break each
punctuation character into its own token, and segment runs of CJK text
per character (no word segmenter is assumed for zh/ja).
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

# Explicit codepoint ranges so behaviour does not drift across Unicode
# database versions: Han (+ext A, compat), kana, hangul syllables.
_CJK_RANGES = (
    (0x2E80, 0x2EFF),
    (0x3040, 0x309F),
    (0x30A0, 0x30FF),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xAC00, 0xD7AF),
    (0xF900, 0xFAFF),
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


@dataclass(frozen=True)
class TokenSeq:
    """Tokens plus their (start, end) character offsets into the source text.

    Offsets are half-open, non-overlapping and strictly increasing, and
    each token equals the original text sliced by its offset.
    """

    tokens: tuple[str, ...]
    offsets: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.offsets):
            raise ValueError(
                f"token/offset length mismatch: {len(self.tokens)} vs {len(self.offsets)}"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def tokenize(text: str) -> TokenSeq:
    """Tokenize `text` into a TokenSeq with lossless offsets."""
    tokens: list[str] = []
    offsets: list[tuple[int, int]] = []
    word_start = -1

    def flush(end: int) -> None:
        nonlocal word_start
        if word_start >= 0:
            tokens.append(text[word_start:end])
            offsets.append((word_start, end))
            word_start = -1

    for i, ch in enumerate(text):
        if ch.isspace():
            flush(i)
        elif _is_punct(ch) or _is_cjk(ch):
            flush(i)
            tokens.append(ch)
            offsets.append((i, i + 1))
        else:
            if word_start < 0:
                word_start = i
    flush(len(text))
    return TokenSeq(tuple(tokens), tuple(offsets))


def span_text(seq: TokenSeq, start: int, end: int, original: str) -> str:
    """Recover the original-text substring covering tokens [start, end].

    `end` is inclusive. Raises IndexError for out-of-range indices.
    """
    if not (0 <= start <= end < len(seq)):
        raise IndexError(
            f"span ({start}, {end}) out of range for sequence of length {len(seq)}"
        )
    return original[seq.offsets[start][0] : seq.offsets[end][1]]
