"""Word alignment: a statistical EM aligner plus Pharaoh-format ingestion.

Alignments can be produced natively by training a lexical translation
model (classic IBM-style Model 1 EM, optionally with a NULL source word)
or ingested from any external aligner via the Pharaoh ``i-j`` text
format. Both routes yield the same normalized :class:`Alignment`.

Only the target side's coverage is consumed downstream, so alignment is
a single src->tgt argmax pass with no symmetrization.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .tokenizer import TokenSeq

NULL_TOKEN = "<NULL>"

_PHARAOH_PAIR_RE = re.compile(r"^(\d+)-(\d+)$")

MODEL_FORMAT = "overgen-ibm1"
MODEL_VERSION = 1


class PharaohFormatError(ValueError):
    """Malformed Pharaoh alignment text."""


class ModelFormatError(ValueError):
    """Corrupt or incompatible model file."""


@dataclass(frozen=True)
class Alignment:
    """A set of (src_idx, tgt_idx) token links with set semantics."""

    links: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for i, j in self.links:
            if i < 0 or j < 0:
                raise ValueError(f"negative link index: ({i}, {j})")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "Alignment":
        return cls(frozenset((int(i), int(j)) for i, j in pairs))

    def aligned_tgt(self) -> frozenset[int]:
        return frozenset(j for _, j in self.links)

    def aligned_src(self) -> frozenset[int]:
        return frozenset(i for i, _ in self.links)

    def __len__(self) -> int:
        return len(self.links)

    def __iter__(self):
        return iter(sorted(self.links))


EMPTY_ALIGNMENT = Alignment(frozenset())


def parse_pharaoh(line: str) -> Alignment:
    """Parse one line of whitespace-separated ``i-j`` pairs.

    An empty (or all-whitespace) line is an empty alignment. Duplicate
    pairs collapse under set semantics.
    """
    links = set()
    for token in line.split():
        m = _PHARAOH_PAIR_RE.match(token)
        if not m:
            raise PharaohFormatError(f"malformed alignment pair: {token!r}")
        links.add((int(m.group(1)), int(m.group(2))))
    return Alignment(frozenset(links))


def serialize_pharaoh(alignment: Alignment) -> str:
    """Render links sorted by (src, tgt) as ``i-j`` joined by single spaces."""
    return " ".join(f"{i}-{j}" for i, j in sorted(alignment.links))


@dataclass
class AlignDiagnostics:
    """Counters filled in by align_pair when passed explicitly."""

    oov_tokens: int = 0
    unaligned_tokens: int = 0


@dataclass
class TranslationModel:
    """Sparse lexical translation table t(tgt_word | src_word).

    Only co-occurring pairs carry entries. When trained with a NULL
    word, entries keyed by ``NULL_TOKEN`` model unalignable target
    tokens; ``NULL_TOKEN`` is not part of `src_vocab`.
    """

    t: dict[tuple[str, str], float]
    src_vocab: frozenset[str]
    tgt_vocab: frozenset[str]
    uses_null: bool
    iterations_trained: int
    skipped_pairs: int = 0
    log_likelihood: list[float] = field(default_factory=list)


class _EncodedCorpus:
    """Integer encoding of a tokenized bitext for the EM kernels."""

    def __init__(self, pairs: Sequence[tuple[Sequence[str], Sequence[str]]], uses_null: bool):
        self.src_words: list[str] = [NULL_TOKEN] if uses_null else []
        self.tgt_words: list[str] = []
        src_ids: dict[str, int] = {NULL_TOKEN: 0} if uses_null else {}
        tgt_ids: dict[str, int] = {}

        src_sents: list[list[int]] = []
        tgt_sents: list[list[int]] = []
        pair_set: set[tuple[int, int]] = set()
        for src_toks, tgt_toks in pairs:
            s_ids = [0] if uses_null else []
            for w in src_toks:
                if w not in src_ids:
                    src_ids[w] = len(self.src_words)
                    self.src_words.append(w)
                s_ids.append(src_ids[w])
            t_ids = []
            for w in tgt_toks:
                if w not in tgt_ids:
                    tgt_ids[w] = len(self.tgt_words)
                    self.tgt_words.append(w)
                t_ids.append(tgt_ids[w])
            src_sents.append(s_ids)
            tgt_sents.append(t_ids)
            for s in set(s_ids):
                for t in set(t_ids):
                    pair_set.add((s, t))

        self.n_src = len(self.src_words)
        self.n_tgt = len(self.tgt_words)
        self.src_flat = np.array([i for s in src_sents for i in s], dtype=np.int32)
        self.tgt_flat = np.array([i for s in tgt_sents for i in s], dtype=np.int32)
        self.src_off = np.cumsum([0] + [len(s) for s in src_sents]).astype(np.int64)
        self.tgt_off = np.cumsum([0] + [len(s) for s in tgt_sents]).astype(np.int64)

        ordered = sorted(pair_set)
        self.pair_src = np.array([s for s, _ in ordered], dtype=np.int32)
        self.pair_tgt = np.array([t for _, t in ordered], dtype=np.int32)
        block_off = np.zeros(self.n_src + 1, dtype=np.int64)
        for s, _ in ordered:
            block_off[s + 1] += 1
        self.block_off = np.cumsum(block_off).astype(np.int64)
        self.n_pairs = len(ordered)
        self._pair_index = {p: k for k, p in enumerate(ordered)}

    def uniform_prob(self) -> np.ndarray:
        prob = np.empty(self.n_pairs, dtype=np.float64)
        for s in range(self.n_src):
            lo, hi = self.block_off[s], self.block_off[s + 1]
            if hi > lo:
                prob[lo:hi] = 1.0 / (hi - lo)
        return prob

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat (src token, tgt slot) edge list for the numpy E-step."""
        edge_pair: list[int] = []
        edge_slot: list[int] = []
        slot_src_len: list[int] = []
        slot = 0
        for s in range(len(self.src_off) - 1):
            s_ids = self.src_flat[self.src_off[s] : self.src_off[s + 1]]
            t_ids = self.tgt_flat[self.tgt_off[s] : self.tgt_off[s + 1]]
            for t in t_ids:
                for i in s_ids:
                    edge_pair.append(self._pair_index[(int(i), int(t))])
                    edge_slot.append(slot)
                slot_src_len.append(len(s_ids))
                slot += 1
        return (
            np.array(edge_pair, dtype=np.int64),
            np.array(edge_slot, dtype=np.int64),
            np.array(slot_src_len, dtype=np.float64),
        )


def train_ibm1(
    corpus: Sequence[tuple[TokenSeq, TokenSeq]],
    iterations: int = 10,
    uses_null: bool = True,
) -> TranslationModel:
    """Train a Model-1 translation table by EM.

    The table is initialized uniform over co-occurring pairs, then
    updated for `iterations` rounds. The per-iteration training
    log-likelihood (evaluated with the parameters entering each round)
    is recorded on the returned model and is non-decreasing.

    Pairs with an empty side are skipped and counted in
    ``skipped_pairs``. An empty corpus (or one with no usable pairs)
    raises ValueError.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if not corpus:
        raise ValueError("training corpus is empty")

    usable: list[tuple[Sequence[str], Sequence[str]]] = []
    skipped = 0
    for src, tgt in corpus:
        if len(src) == 0 or len(tgt) == 0:
            skipped += 1
            continue
        usable.append((tuple(src.tokens), tuple(tgt.tokens)))
    if not usable:
        raise ValueError("training corpus has no pairs with both sides non-empty")

    enc = _EncodedCorpus(usable, uses_null)
    prob = enc.uniform_prob()
    history: list[float] = []

    if _kernels.USE_NUMBA:
        for _ in range(iterations):
            counts, ll = _kernels.em_step_nb(
                enc.src_flat,
                enc.src_off,
                enc.tgt_flat,
                enc.tgt_off,
                enc.pair_tgt,
                enc.block_off,
                prob,
            )
            prob = _kernels.normalize_counts(counts, enc.pair_src, enc.n_src, prob)
            history.append(ll)
    else:
        edge_pair, edge_slot, slot_src_len = enc.edge_arrays()
        for _ in range(iterations):
            counts, ll = _kernels.em_step_np(
                edge_pair, edge_slot, slot_src_len, enc.n_pairs, prob
            )
            prob = _kernels.normalize_counts(counts, enc.pair_src, enc.n_src, prob)
            history.append(ll)

    t = {
        (enc.src_words[enc.pair_src[k]], enc.tgt_words[enc.pair_tgt[k]]): float(prob[k])
        for k in range(enc.n_pairs)
    }
    src_vocab = frozenset(w for w in enc.src_words if w != NULL_TOKEN)
    return TranslationModel(
        t=t,
        src_vocab=src_vocab,
        tgt_vocab=frozenset(enc.tgt_words),
        uses_null=uses_null,
        iterations_trained=iterations,
        skipped_pairs=skipped,
        log_likelihood=history,
    )


def align_pair(
    model: TranslationModel,
    src: TokenSeq,
    tgt: TokenSeq,
    p_min: float = 0.05,
    diagnostics: AlignDiagnostics | None = None,
) -> Alignment:
    """Align each target token to its argmax source token.

    A link (argmax_i, j) is emitted iff the winning probability is at
    least `p_min` and, when the model was trained with a NULL word, the
    NULL hypothesis does not strictly beat it. Target tokens outside
    the model vocabulary are left unaligned and counted as OOV in
    `diagnostics` when one is supplied.
    """
    if not (0.0 <= p_min <= 1.0):
        raise ValueError(f"p_min must be in [0, 1], got {p_min}")
    links = set()
    for j, t_word in enumerate(tgt.tokens):
        if t_word not in model.tgt_vocab:
            if diagnostics is not None:
                diagnostics.oov_tokens += 1
                diagnostics.unaligned_tokens += 1
            continue
        best_i = -1
        best_p = 0.0
        for i, s_word in enumerate(src.tokens):
            p = model.t.get((s_word, t_word), 0.0)
            if p > best_p:
                best_p = p
                best_i = i
        if (
            best_i < 0
            or best_p < p_min
            or (model.uses_null and model.t.get((NULL_TOKEN, t_word), 0.0) > best_p)
        ):
            if diagnostics is not None:
                diagnostics.unaligned_tokens += 1
            continue
        links.add((best_i, j))
    return Alignment(frozenset(links))


def save_model(model: TranslationModel, path: str) -> None:
    """Write a model to `path` in the versioned line-oriented text format.

    Header lines carry the format name/version and flags; word tables
    are JSON-encoded one word per line; table entries are
    ``src_idx tgt_idx probability`` with probabilities printed to 17
    significant digits so reloading is exact.
    """
    src_words = sorted({s for s, _ in model.t})
    tgt_words = sorted({t for _, t in model.t})
    src_idx = {w: i for i, w in enumerate(src_words)}
    tgt_idx = {w: i for i, w in enumerate(tgt_words)}
    entries = sorted(model.t.items())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MODEL_FORMAT} {MODEL_VERSION}\n")
        fh.write(f"uses_null {int(model.uses_null)}\n")
        fh.write(f"iterations_trained {model.iterations_trained}\n")
        fh.write(f"skipped_pairs {model.skipped_pairs}\n")
        fh.write(f"src_words {len(src_words)}\n")
        for w in src_words:
            fh.write(json.dumps(w, ensure_ascii=False) + "\n")
        fh.write(f"tgt_words {len(tgt_words)}\n")
        for w in tgt_words:
            fh.write(json.dumps(w, ensure_ascii=False) + "\n")
        fh.write(f"entries {len(entries)}\n")
        for (s, t), p in entries:
            fh.write(f"{src_idx[s]} {tgt_idx[t]} {p:.16e}\n")


def _expect_header(line: str, key: str) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise ModelFormatError(f"expected '{key} <n>' header, got {line!r}")
    try:
        return int(parts[1])
    except ValueError as exc:
        raise ModelFormatError(f"bad count in header {line!r}") from exc


def load_model(path: str) -> TranslationModel:
    """Load a model written by save_model. Any inconsistency raises
    ModelFormatError; a partial model is never returned."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    it = iter(lines)

    def next_line() -> str:
        try:
            return next(it)
        except StopIteration:
            raise ModelFormatError("truncated model file") from None

    magic = next_line().split()
    if len(magic) != 2 or magic[0] != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} file")
    if magic[1] != str(MODEL_VERSION):
        raise ModelFormatError(f"unsupported model version {magic[1]!r}")
    uses_null = bool(_expect_header(next_line(), "uses_null"))
    iterations = _expect_header(next_line(), "iterations_trained")
    skipped = _expect_header(next_line(), "skipped_pairs")

    n_src = _expect_header(next_line(), "src_words")
    try:
        src_words = [json.loads(next_line()) for _ in range(n_src)]
        n_tgt = _expect_header(next_line(), "tgt_words")
        tgt_words = [json.loads(next_line()) for _ in range(n_tgt)]
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"bad word entry: {exc}") from exc

    n_entries = _expect_header(next_line(), "entries")
    t: dict[tuple[str, str], float] = {}
    for _ in range(n_entries):
        parts = next_line().split()
        if len(parts) != 3:
            raise ModelFormatError(f"bad table entry: {' '.join(parts)!r}")
        try:
            s_i, t_i, p = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise ModelFormatError(f"bad table entry: {parts!r}") from exc
        if not (0 <= s_i < n_src and 0 <= t_i < n_tgt):
            raise ModelFormatError(f"table entry index out of range: {parts!r}")
        if not (0.0 <= p <= 1.0):
            raise ModelFormatError(f"probability out of range: {parts[2]!r}")
        t[(src_words[s_i], tgt_words[t_i])] = p
    if any(True for _ in it):
        raise ModelFormatError("trailing data after table entries")

    return TranslationModel(
        t=t,
        src_vocab=frozenset(w for w in src_words if w != NULL_TOKEN),
        tgt_vocab=frozenset(tgt_words),
        uses_null=uses_null,
        iterations_trained=iterations,
        skipped_pairs=skipped,
    )
