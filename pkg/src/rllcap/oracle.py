"""Exact partition functions for small and moderate lattices.

Two independent routes:

* a site-by-site transfer matrix that sweeps a frontier of M bits down each
  column in turn (log-domain, renormalized per column);
* brute-force enumeration of every configuration, vectorized with bit tricks.

For RLL potentials the frontier is restricted to masks whose upper part
(already placed in the current column) and lower part (still from the
previous column) are each free of adjacent 1s.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from rllcap.errors import DimensionError, SizeLimitError
from rllcap.model import LatticeModel, StripView, as_view

__all__ = [
    "BRUTE_MAX_SITES",
    "GENERAL_MAX_ROWS",
    "RLL_MAX_ROWS",
    "brute_log2_Z",
    "conditional_normalizer",
    "enumerate_proposal",
    "exact_capacity",
    "exact_log2_Z",
    "strip_log2_Z",
    "transfer_log2_Z",
    "valid_column_count",
]

RLL_MAX_ROWS = 30
GENERAL_MAX_ROWS = 20
BRUTE_MAX_SITES = 24
CONDITIONAL_MAX_ROWS = 20
_MAP_CACHE_ENTRIES = 50_000_000


def valid_column_count(m: int) -> int:
    """Number of length-``m`` binary strings without two adjacent 1s."""
    if m < 1:
        raise ValueError("m must be >= 1")
    a, b = 1, 2  # counts for lengths 0 and 1
    for _ in range(m - 1):
        a, b = b, a + b
    return b


@lru_cache(maxsize=64)
def _no11_masks(n: int) -> np.ndarray:
    masks = np.zeros(1, dtype=np.int64)
    last = np.zeros(1, dtype=bool)
    for i in range(n):
        ones = masks[~last] | (1 << i)
        masks = np.concatenate([masks, ones])
        last = np.concatenate([np.zeros(len(last), dtype=bool), np.ones(len(ones), dtype=bool)])
    out = np.sort(masks)
    out.setflags(write=False)
    return out


def _frontier(m: int, j: int, rll: bool) -> np.ndarray | None:
    """Frontier masks after placing row ``j``; None stands for all ``2**m`` masks."""
    if not rll:
        return None
    top = _no11_masks(j + 1)
    bottom = _no11_masks(m - j - 1)
    return np.sort((top[:, None] | (bottom[None, :] << (j + 1))).ravel())


def _index(frontier: np.ndarray | None, masks: np.ndarray) -> np.ndarray:
    """Positions of ``masks`` in ``frontier``; -1 where absent."""
    if frontier is None:
        return masks
    pos = np.searchsorted(frontier, masks)
    pos = np.minimum(pos, len(frontier) - 1)
    return np.where(frontier[pos] == masks, pos, -1)


def _site_maps(m: int, rll: bool):
    """Per-row gather maps from the frontier before row ``j`` to the one after it."""
    frontiers = [_frontier(m, j, rll) for j in range(m)]
    for j in range(m):
        prev = frontiers[j - 1]
        cur = frontiers[j] if frontiers[j] is not None else np.arange(1 << m, dtype=np.int64)
        bit = np.int64(1) << j
        x = (cur >> j) & 1
        i0 = _index(prev, cur & ~bit)
        i1 = _index(prev, cur | bit)
        above = (cur >> (j - 1)) & 1 if j > 0 else None
        yield j, x, above, i0, i1


def transfer_log2_Z(model: LatticeModel) -> float:
    """Exact log2 Z by sweeping the lattice one site at a time along its shorter side."""
    if model.rows > model.cols:
        model = model.transpose()
    m, rll = model.rows, model.is_rll
    limit = RLL_MAX_ROWS if rll else GENERAL_MAX_ROWS
    if m > limit:
        kind = "RLL" if rll else "general-potential"
        raise SizeLimitError(
            f"transfer matrix supports min(rows, cols) <= {limit} for {kind} models, got {m}"
        )
    h = model.h_potential.table
    v = model.v_potential.table
    ones = np.ones((2, 2))

    start = _frontier(m, m - 1, rll)
    size = (1 << m) if start is None else len(start)
    # Trailing slot stays 0 so that index -1 (absent mask) gathers zero weight.
    vec = np.zeros(size + 1)
    vec[0] = 1.0  # all-zero virtual column; mask 0 sorts first
    log_acc = 0.0

    maps = None
    n_entries = sum(len(_frontier(m, j, rll)) if rll else 1 << m for j in range(m))
    if 2 * n_entries <= _MAP_CACHE_ENTRIES:
        maps = list(_site_maps(m, rll))

    for k in range(model.cols):
        hk = h if k > 0 else ones
        for j, x, above, i0, i1 in maps if maps is not None else _site_maps(m, rll):
            new = np.empty(len(x) + 1)
            new[:-1] = hk[x, 0] * vec[i0] + hk[x, 1] * vec[i1]
            if above is not None:
                new[:-1] *= v[x, above]
            new[-1] = 0.0
            vec = new
        total = vec.sum()
        if total == 0.0:
            return -math.inf
        log_acc += math.log2(total)
        vec = vec / total
    return log_acc


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a).astype(np.int64)


def brute_log2_Z(model: LatticeModel, chunk: int = 1 << 20) -> float:
    """Exact log2 Z by enumerating all ``2**(rows*cols)`` configurations.

    Site ``(j, k)`` is bit ``j + k*rows``. Edge-type counts come from
    popcounts of shifted configurations, so any potential works.
    """
    m, K = model.rows, model.cols
    n = m * K
    if n > BRUTE_MAX_SITES:
        raise SizeLimitError(f"brute force supports rows*cols <= {BRUTE_MAX_SITES}, got {n}")
    vmask = sum(1 << (j + k * m) for k in range(K) for j in range(m - 1))
    hmask = sum(1 << (j + k * m) for k in range(K - 1) for j in range(m))
    v = model.v_potential.table
    h = model.h_potential.table

    def edge_weight(cfg, shift, mask, table):
        w = np.ones(len(cfg))
        if mask == 0:
            return w
        hi = (cfg >> np.uint64(shift)) & np.uint64(mask)
        lo = cfg & np.uint64(mask)
        m64 = np.uint64(mask)
        counts = {
            (1, 1): lambda: _popcount(hi & lo),
            (1, 0): lambda: _popcount(hi & ~lo & m64),
            (0, 1): lambda: _popcount(~hi & lo & m64),
            (0, 0): lambda: _popcount(~(hi | lo) & m64),
        }
        for (a, b), count in counts.items():
            val = table[a, b]
            if val == 1.0:
                continue
            powers = np.power(val, np.arange(mask.bit_count() + 1, dtype=np.float64))
            w = w * powers[count()]
        return w

    total = 0.0
    for start in range(0, 1 << n, chunk):
        cfg = np.arange(start, min(start + chunk, 1 << n), dtype=np.uint64)
        w = edge_weight(cfg, 1, vmask, v) * edge_weight(cfg, m, hmask, h)
        total += float(w.sum())
    return math.log2(total) if total > 0 else -math.inf


def exact_log2_Z(model: LatticeModel, method: str = "auto") -> float:
    if method == "brute":
        return brute_log2_Z(model)
    if method == "transfer":
        return transfer_log2_Z(model)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}; expected auto, transfer or brute")
    try:
        return transfer_log2_Z(model)
    except SizeLimitError:
        if model.n_sites <= BRUTE_MAX_SITES:
            return brute_log2_Z(model)
        raise


def exact_capacity(model: LatticeModel, method: str = "auto") -> float:
    return exact_log2_Z(model, method) / model.n_sites


def _all_columns(m: int) -> np.ndarray:
    if m > CONDITIONAL_MAX_ROWS:
        raise SizeLimitError(f"column enumeration supports rows <= {CONDITIONAL_MAX_ROWS}, got {m}")
    return (np.arange(1 << m)[:, None] >> np.arange(m)[None, :]) & 1


def conditional_normalizer(model: LatticeModel, prev=None) -> float:
    """Sum over all columns x of phi(x) * Psi(x, prev), by enumeration (prev=None drops Psi)."""
    m = model.rows
    cols = _all_columns(m)
    v = model.v_potential.table
    h = model.h_potential.table
    w = np.ones(len(cols))
    for j in range(m - 1):
        w = w * v[cols[:, j + 1], cols[:, j]]
    if prev is not None:
        p = np.asarray(prev, dtype=np.int64)
        if p.shape != (m,):
            raise DimensionError(f"prev must have length {m}, got shape {p.shape}")
        for j in range(m):
            w = w * h[cols[:, j], p[j]]
    return float(w.sum())


def enumerate_proposal(model_or_strip, k: int, prev=None) -> tuple[np.ndarray, np.ndarray]:
    """Every packed super-column state with positive proposal mass, and its probability.

    Uses the scalar factor evaluations of the strip view over the full
    product space, so it is only for tiny ``rows * width``.
    """
    view = as_view(model_or_strip)
    w = view.width_of(k)
    n = view.rows * w
    if n > 16:
        raise SizeLimitError(f"proposal enumeration supports rows*width <= 16, got {n}")
    states, weights = [], []
    for rows in itertools.product(range(1 << w), repeat=view.rows):
        s = np.array(rows[::-1], dtype=np.int64)
        val = view.phi(k, s)
        if k > 1:
            val *= view.psi(k, s, prev)
        if val > 0:
            states.append(s)
            weights.append(val)
    weights = np.array(weights)
    return np.array(states).reshape(-1, view.rows), weights / weights.sum()


def strip_log2_Z(view: StripView) -> float:
    """Exact log2 Z computed from the strip view's own factor tables.

    Sums over whole super-column states, so ``rows * width`` must stay small.
    """
    view = as_view(view)
    m = view.rows
    if m * view.width > 20:
        raise SizeLimitError(f"strip enumeration supports rows*width <= 20, got {m * view.width}")
    h = view.base.h_potential.table
    first_bits = _all_columns(m)
    psi = np.ones((1 << m, 1 << m))  # psi[first column of new strip, last column of previous]
    for j in range(m):
        psi = psi * h[first_bits[:, j][:, None], first_bits[:, j][None, :]]

    log_acc = 0.0
    carry = None  # mass grouped by the last column's bits
    for k in range(1, view.super_cols + 1):
        w = view.width_of(k)
        t = view.tables(k)
        s = 1 << w
        rows = (np.arange(s**m)[:, None] // (s ** np.arange(m))[None, :]) % s
        phi = np.ones(len(rows))
        for j in range(m):
            phi = phi * t.internal[rows[:, j]]
        for j in range(m - 1):
            phi = phi * t.vertical[rows[:, j + 1], rows[:, j]]
        first = ((rows & 1) << np.arange(m)[None, :]).sum(axis=1)
        last = (((rows >> (w - 1)) & 1) << np.arange(m)[None, :]).sum(axis=1)
        mass = phi if carry is None else phi * (psi @ carry)[first]
        total = mass.sum()
        if total == 0.0:
            return -math.inf
        log_acc += math.log2(total)
        carry = np.bincount(last, weights=mass / total, minlength=1 << m)
    return log_acc
