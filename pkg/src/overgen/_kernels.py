"""Numeric kernels: numba-compiled hot paths with pure-numpy fallbacks.

The two inner loops that dominate batch runs live here: scanning target
coverage masks for unaligned runs, and the per-iteration E-step of the
lexical-translation EM trainer. Each kernel has a numba ``@njit`` build
and an equivalent vectorized numpy build.

Path selection: the compiled build is used when numba imports cleanly
and the ``OVERGEN_NUMBA`` environment variable is unset or truthy. Set
``OVERGEN_NUMBA=0`` to force the numpy path. ``benchmarks/bench_kernels.py``
times both.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def _env_wants_numba() -> bool:
    return os.environ.get("OVERGEN_NUMBA", "1").strip().lower() not in (
        "0",
        "false",
        "off",
        "no",
    )


USE_NUMBA = HAS_NUMBA and _env_wants_numba()


# ---------------------------------------------------------------------------
# Unaligned-run scanning
# ---------------------------------------------------------------------------


def unaligned_runs_np(aligned: np.ndarray) -> np.ndarray:
    """All maximal runs of False in `aligned` as an (k, 2) array of
    inclusive [start, end] pairs, in ascending order."""
    gap = ~aligned.astype(bool)
    padded = np.concatenate(([False], gap, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts = edges[0::2]
    ends = edges[1::2] - 1
    return np.stack([starts, ends], axis=1).astype(np.int64)


@njit(cache=True)
def unaligned_runs_nb(aligned: np.ndarray) -> np.ndarray:  # pragma: no cover
    n = aligned.size
    out = np.empty((n // 2 + 1, 2), np.int64)
    k = 0
    i = 0
    while i < n:
        if not aligned[i]:
            start = i
            while i < n and not aligned[i]:
                i += 1
            out[k, 0] = start
            out[k, 1] = i - 1
            k += 1
        else:
            i += 1
    return out[:k]


def unaligned_runs(aligned: np.ndarray) -> np.ndarray:
    if aligned.size == 0:
        return np.empty((0, 2), np.int64)
    if USE_NUMBA:
        return unaligned_runs_nb(np.ascontiguousarray(aligned, dtype=np.bool_))
    return unaligned_runs_np(aligned)


# ---------------------------------------------------------------------------
# EM E-step for the lexical translation table
# ---------------------------------------------------------------------------
#
# The corpus is encoded once as flat int32 token-id arrays with per-sentence
# offsets. The translation table is sparse: only co-occurring (src, tgt)
# word pairs get an entry. Entries are stored CSR-style grouped by source
# id, with the target ids sorted inside each block so a pair index can be
# recovered by binary search.


@njit(cache=True)
def em_step_nb(
    src_flat: np.ndarray,
    src_off: np.ndarray,
    tgt_flat: np.ndarray,
    tgt_off: np.ndarray,
    pair_tgt: np.ndarray,
    block_off: np.ndarray,
    prob: np.ndarray,
) -> tuple[np.ndarray, float]:  # pragma: no cover
    counts = np.zeros(prob.size, np.float64)
    ll = 0.0
    max_src = 0
    for s in range(src_off.size - 1):
        ls = src_off[s + 1] - src_off[s]
        if ls > max_src:
            max_src = ls
    k_buf = np.empty(max_src, np.int64)
    for s in range(src_off.size - 1):
        s0 = src_off[s]
        ls = src_off[s + 1] - s0
        for jj in range(tgt_off[s], tgt_off[s + 1]):
            t_id = tgt_flat[jj]
            denom = 0.0
            for ii in range(ls):
                s_id = src_flat[s0 + ii]
                lo = block_off[s_id]
                hi = block_off[s_id + 1]
                k = lo + np.searchsorted(pair_tgt[lo:hi], t_id)
                k_buf[ii] = k
                denom += prob[k]
            ll += np.log(denom) - np.log(ls)
            inv = 1.0 / denom
            for ii in range(ls):
                k = k_buf[ii]
                counts[k] += prob[k] * inv
    return counts, ll


def em_step_np(
    edge_pair: np.ndarray,
    edge_slot: np.ndarray,
    slot_src_len: np.ndarray,
    n_pairs: int,
    prob: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Vectorized E-step over the precomputed (src token, tgt slot) edge list.

    `edge_pair[e]` is the table entry for edge e, `edge_slot[e]` the target
    slot it feeds, and `slot_src_len[q]` the source length (incl. NULL) of
    slot q's sentence.
    """
    p = prob[edge_pair]
    denom = np.bincount(edge_slot, weights=p, minlength=slot_src_len.size)
    ll = float(np.sum(np.log(denom) - np.log(slot_src_len)))
    delta = p / denom[edge_slot]
    counts = np.bincount(edge_pair, weights=delta, minlength=n_pairs)
    return counts, ll


def normalize_counts(
    counts: np.ndarray, pair_src: np.ndarray, n_src: int, prob_old: np.ndarray
) -> np.ndarray:
    """M-step: renormalize expected counts per source word.

    A source word with zero total count (possible only in degenerate
    inputs) keeps its previous distribution.
    """
    totals = np.bincount(pair_src, weights=counts, minlength=n_src)
    pair_totals = totals[pair_src]
    ok = pair_totals > 0.0
    out = prob_old.copy()
    out[ok] = counts[ok] / pair_totals[ok]
    return out
