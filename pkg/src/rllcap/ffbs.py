"""Exact inference on one (super-)column conditioned on its left neighbour.

Conditioned on the previous column, a column is a chain over its rows, so
its normalizer and exact samples from the optimal proposal come from one
forward filtering sweep (top to bottom, each message normalized, the log2
normalizers kept) and one backward sampling sweep (bottom to top).

These are the single-particle routines; the sampler runs the batched
equivalents in :mod:`rllcap._kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rllcap import _kernels
from rllcap.errors import ParameterError, SupportError
from rllcap.model import StripView, as_view

__all__ = [
    "MessageStack",
    "ProposalDraw",
    "backward_sample",
    "conditioning_bits",
    "forward_messages",
    "resampling_weight",
]


@dataclass(frozen=True)
class MessageStack:
    """Normalized forward messages for one column pass.

    ``mu[j]`` is the filtered distribution of row ``j`` given rows above it
    and the conditioning column; ``log2_c[j]`` is the log2 normalizer
    divided out at row ``j`` (row ``M - 1`` carries the terminal sum).
    """

    mu: np.ndarray
    log2_c: np.ndarray
    k: int
    prev_bits: np.ndarray | None

    @property
    def rows(self) -> int:
        return self.mu.shape[0]

    @property
    def has_support(self) -> bool:
        return bool(np.all(np.isfinite(self.log2_c)))


@dataclass(frozen=True)
class ProposalDraw:
    state: np.ndarray
    log2_weight_contribution: float


def conditioning_bits(view: StripView, k: int, prev) -> np.ndarray | None:
    """Bits of the last original column of super-column ``k - 1``, or None for ``k = 1``."""
    if k == 1:
        if prev is not None:
            raise ParameterError("the first column has no left neighbour; prev must be None")
        return None
    if prev is None:
        raise ParameterError(f"column {k} needs the previous column state")
    p = view.check_state(k - 1, prev, "prev")
    return (p >> (view.width_of(k - 1) - 1)) & 1


def _kernel_inputs(view: StripView, k: int, bits):
    t = view.tables(k)
    if bits is None:
        return np.zeros((1, view.rows), dtype=np.int64), t.internal[None, :], t.vertical
    return bits[None, :].astype(np.int64), t.boundary, t.vertical


def forward_messages(model_or_strip, k: int, prev=None) -> MessageStack:
    """Forward filtering down super-column ``k`` given the previous super-column."""
    view = as_view(model_or_strip)
    view.width_of(k)
    bits = conditioning_bits(view, k, prev)
    p, boundary, vertical = _kernel_inputs(view, k, bits)
    mu, logc = _kernels._forward_np(p, boundary, vertical)
    stack = MessageStack(mu[0], logc[0], k, bits)
    if view.base.is_rll:
        assert stack.has_support, "RLL columns always extend by all zeros"
    return stack


def _check_stack(stack: MessageStack, view, k, prev):
    if view is not None and stack.rows != view.rows:
        raise ParameterError("message stack does not match the model's row count")
    if k is not None and k != stack.k:
        raise ParameterError(f"message stack was computed for column {stack.k}, not {k}")
    if prev is not None and view is not None:
        bits = conditioning_bits(view, stack.k, prev)
        if not np.array_equal(bits, stack.prev_bits):
            raise ParameterError("message stack was computed for a different conditioning column")


def resampling_weight(stack: MessageStack, model_or_strip=None, k=None, prev=None) -> float:
    """log2 of the conditional normalizer; ``-inf`` when the column has no valid extension."""
    view = as_view(model_or_strip) if model_or_strip is not None else None
    _check_stack(stack, view, k, prev)
    return float(_kernels._sum_rows(stack.log2_c[None, :])[0])


def backward_sample(
    stack: MessageStack, model_or_strip, k=None, prev=None, rng=None
) -> ProposalDraw:
    """Exact draw of the whole (super-)column from the optimal proposal.

    Rows are drawn bottom to top by inverse CDF, one uniform each.
    """
    view = as_view(model_or_strip)
    _check_stack(stack, view, k, prev)
    log2_nu = resampling_weight(stack)
    if not np.isfinite(log2_nu):
        raise SupportError(f"column {stack.k} has no configuration compatible with prev")
    rng = np.random.default_rng(rng)
    u = rng.random((1, stack.rows))
    vertical = view.tables(stack.k).vertical
    m = stack.rows
    x = np.empty(m, dtype=np.int64)
    x[m - 1] = _kernels._pick_np(stack.mu[None, m - 1], u[:, m - 1])[0]
    for j in range(m - 2, -1, -1):
        w = stack.mu[j] * vertical[x[j + 1]]
        x[j] = _kernels._pick_np(w[None, :], u[:, j])[0]
    return ProposalDraw(x, log2_nu)
