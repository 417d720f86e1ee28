"""Batched FFBS kernels over particles.

Two interchangeable implementations of the same two kernels:

``lognu(prev, boundary, vertical)``
    log2 of the conditional normalizer of the next super-column for each
    particle, by forward filtering with per-row normalization.

``sample(prev, boundary, vertical, uniforms)``
    forward filtering followed by backward sampling; one uniform per row.

``prev`` holds, per particle and row, the bit of the conditioning column
that touches the new super-column (all zeros with a one-row ``boundary``
table for the first super-column). The numba path is used when numba
imports and ``RLLCAP_DISABLE_NUMBA`` is unset or "0"; otherwise the
vectorized numpy path runs. Both use the same summation order, so they
agree to rounding of ``log2``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["BACKEND", "HAVE_NUMBA", "lognu", "sample", "set_num_threads", "get_num_threads"]

CHUNK = 4096

_disabled = os.environ.get("RLLCAP_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

# Skip numba's TBB probe (and its version warning) unless the user picked a layer.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA and not _disabled else "numpy"

_threads = 1


def set_num_threads(n: int) -> int:
    """Set the worker count hint; returns the count actually in effect."""
    global _threads
    n = max(1, int(n))
    if BACKEND == "numba":
        n = min(n, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n)
    _threads = n
    return n


def get_num_threads() -> int:
    return _threads


# -- numpy ---------------------------------------------------------------------


def _forward_np(prev, boundary, vertical):
    n, m = prev.shape
    s = boundary.shape[1]
    mu = np.empty((n, m, s))
    logc = np.empty((n, m))
    alpha = boundary[prev[:, 0]]
    for j in range(m):
        if j > 0:
            acc = np.zeros((n, s))
            for a in range(s):
                t = np.zeros(n)
                for b in range(s):
                    t = t + vertical[a, b] * alpha[:, b]
                acc[:, a] = boundary[prev[:, j], a] * t
            alpha = acc
        c = np.zeros(n)
        for a in range(s):
            c = c + alpha[:, a]
        pos = c > 0.0
        with np.errstate(divide="ignore"):
            logc[:, j] = np.where(pos, np.log2(np.where(pos, c, 1.0)), -np.inf)
        alpha = alpha / np.where(pos, c, 1.0)[:, None]
        mu[:, j] = alpha
    return mu, logc


def _sum_rows(logc):
    total = np.zeros(logc.shape[0])
    for j in range(logc.shape[1]):
        total = total + logc[:, j]
    return total


def _pick_np(w, u):
    cum = np.cumsum(w, axis=1)
    target = u * cum[:, -1]
    idx = np.count_nonzero(cum <= target[:, None], axis=1)
    over = idx >= w.shape[1]
    if np.any(over):
        last_pos = w.shape[1] - 1 - np.argmax(w[over, ::-1] > 0.0, axis=1)
        idx[over] = last_pos
    return idx


def _sample_np(prev, boundary, vertical, uniforms):
    mu, _ = _forward_np(prev, boundary, vertical)
    n, m = prev.shape
    x = np.empty((n, m), dtype=np.int64)
    x[:, m - 1] = _pick_np(mu[:, m - 1], uniforms[:, m - 1])
    for j in range(m - 2, -1, -1):
        x[:, j] = _pick_np(mu[:, j] * vertical[x[:, j + 1]], uniforms[:, j])
    return x


def _chunked(fn, n, *arrays):
    starts = range(0, n, CHUNK)
    jobs = [tuple(a[i : i + CHUNK] for a in arrays) for i in starts]
    if _threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(_threads) as pool:
            parts = list(pool.map(lambda args: fn(*args), jobs))
    else:
        parts = [fn(*args) for args in jobs]
    return np.concatenate(parts) if parts else fn(*arrays)


def lognu_numpy(prev, boundary, vertical):
    prev = np.ascontiguousarray(prev, dtype=np.int64)
    return _chunked(lambda p: _sum_rows(_forward_np(p, boundary, vertical)[1]), len(prev), prev)


def sample_numpy(prev, boundary, vertical, uniforms):
    prev = np.ascontiguousarray(prev, dtype=np.int64)
    return _chunked(
        lambda p, u: _sample_np(p, boundary, vertical, u), len(prev), prev, np.asarray(uniforms)
    )


# -- numba ---------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _forward_nb(prev_row, boundary, vertical, mu, logc):
        m = prev_row.shape[0]
        s = boundary.shape[1]
        for a in range(s):
            mu[0, a] = boundary[prev_row[0], a]
        for j in range(m):
            if j > 0:
                for a in range(s):
                    t = 0.0
                    for b in range(s):
                        t += vertical[a, b] * mu[j - 1, b]
                    mu[j, a] = boundary[prev_row[j], a] * t
            c = 0.0
            for a in range(s):
                c += mu[j, a]
            if c > 0.0:
                logc[j] = np.log2(c)
                for a in range(s):
                    mu[j, a] = mu[j, a] / c
            else:
                for jj in range(j, m):
                    logc[jj] = -np.inf
                    for a in range(s):
                        mu[jj, a] = 0.0
                return False
        return True

    @njit(cache=True, nogil=True)
    def _pick_nb(w, u):
        s = w.shape[0]
        total = 0.0
        for a in range(s):
            total += w[a]
        target = u * total
        cum = 0.0
        idx = 0
        for a in range(s):
            cum += w[a]
            if cum <= target:
                idx += 1
        if idx >= s:
            idx = s - 1
            while idx > 0 and w[idx] <= 0.0:
                idx -= 1
        return idx

    @njit(cache=True, nogil=True, parallel=True)
    def _lognu_nb(prev, boundary, vertical):
        n, m = prev.shape
        s = boundary.shape[1]
        out = np.empty(n)
        for i in prange(n):
            mu = np.empty((m, s))
            logc = np.empty(m)
            _forward_nb(prev[i], boundary, vertical, mu, logc)
            total = 0.0
            for j in range(m):
                total += logc[j]
            out[i] = total
        return out

    @njit(cache=True, nogil=True, parallel=True)
    def _sample_nb(prev, boundary, vertical, uniforms):
        n, m = prev.shape
        s = boundary.shape[1]
        x = np.empty((n, m), dtype=np.int64)
        for i in prange(n):
            mu = np.empty((m, s))
            logc = np.empty(m)
            w = np.empty(s)
            _forward_nb(prev[i], boundary, vertical, mu, logc)
            x[i, m - 1] = _pick_nb(mu[m - 1], uniforms[i, m - 1])
            for j in range(m - 2, -1, -1):
                below = x[i, j + 1]
                for a in range(s):
                    w[a] = mu[j, a] * vertical[below, a]
                x[i, j] = _pick_nb(w, uniforms[i, j])
        return x

    def lognu_numba(prev, boundary, vertical):
        return _lognu_nb(
            np.ascontiguousarray(prev, dtype=np.int64),
            np.ascontiguousarray(boundary, dtype=np.float64),
            np.ascontiguousarray(vertical, dtype=np.float64),
        )

    def sample_numba(prev, boundary, vertical, uniforms):
        return _sample_nb(
            np.ascontiguousarray(prev, dtype=np.int64),
            np.ascontiguousarray(boundary, dtype=np.float64),
            np.ascontiguousarray(vertical, dtype=np.float64),
            np.ascontiguousarray(uniforms, dtype=np.float64),
        )


if BACKEND == "numba":
    lognu = lognu_numba
    sample = sample_numba
else:
    lognu = lognu_numpy
    sample = sample_numpy
