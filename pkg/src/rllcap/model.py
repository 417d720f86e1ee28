"""Lattice graphical model for 2-D constrained channels.

The lattice has ``rows`` (M) by ``cols`` (K) binary sites. Every vertical
edge carries ``v_potential`` and every horizontal edge carries
``h_potential``; both are 2x2 tables indexed as ``table[a, b]``. Orientation
is fixed: vertical factors are evaluated as ``v(x[j+1, k], x[j, k])`` and
horizontal factors as ``h(x[j, k], x[j, k-1])``.

Columns are the steps of the sampler. A :class:`StripView` groups ``W``
consecutive columns into one super-column whose row entries are packed
integers in ``[0, 2**w)``; bit ``t`` of a packed row holds column ``t`` of
the strip (bit 0 is the leftmost column).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rllcap.errors import ConfigError, DimensionError, ParameterError

__all__ = [
    "ChainTables",
    "LatticeModel",
    "PairwisePotential",
    "StripView",
    "as_view",
    "between_psi",
    "column_phi",
    "load_model_spec",
    "parse_model_spec",
    "rll_model",
    "rll_potential",
    "strip_view",
]


@dataclass(frozen=True, eq=False)
class PairwisePotential:
    """Nonnegative 2x2 weight table for one lattice edge."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=np.float64)
        if t.shape != (2, 2):
            raise ParameterError(f"potential table must be 2x2, got shape {t.shape}")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ParameterError("potential entries must be finite and >= 0")
        if not np.any(t > 0):
            raise ParameterError("potential must have at least one positive entry")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def __call__(self, a: int, b: int) -> float:
        return float(self.table[a, b])

    def __eq__(self, other):
        if not isinstance(other, PairwisePotential):
            return NotImplemented
        return bool(np.array_equal(self.table, other.table))

    def __hash__(self):
        return hash(self.table.tobytes())

    @property
    def is_rll(self) -> bool:
        return bool(np.array_equal(self.table, [[1.0, 1.0], [1.0, 0.0]]))


def rll_potential() -> PairwisePotential:
    """Hard (1, inf) run-length-limited constraint: forbids two adjacent 1s."""
    return PairwisePotential(np.array([[1.0, 1.0], [1.0, 0.0]]))


@dataclass(frozen=True)
class LatticeModel:
    rows: int
    cols: int
    h_potential: PairwisePotential = field(default_factory=rll_potential)
    v_potential: PairwisePotential = field(default_factory=rll_potential)

    def __post_init__(self):
        for name in ("rows", "cols"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def is_rll(self) -> bool:
        return self.h_potential.is_rll and self.v_potential.is_rll

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols

    def transpose(self) -> "LatticeModel":
        """Same partition function with rows and columns exchanged."""
        return LatticeModel(self.cols, self.rows, self.v_potential, self.h_potential)


def rll_model(rows: int, cols: int | None = None) -> LatticeModel:
    return LatticeModel(rows, rows if cols is None else cols)


def _as_state(state, rows: int, name: str = "state") -> np.ndarray:
    s = np.asarray(state)
    if s.ndim != 1 or s.shape[0] != rows:
        raise DimensionError(f"{name} must have length {rows}, got shape {s.shape}")
    return s.astype(np.int64)


def column_phi(model: LatticeModel, state) -> float:
    """Product of the vertical potentials down one column."""
    s = _as_state(state, model.rows)
    v = model.v_potential.table
    out = 1.0
    for j in range(model.rows - 1):
        out *= v[s[j + 1], s[j]]
    return float(out)


def between_psi(model: LatticeModel, state, prev) -> float:
    """Product of the horizontal potentials between a column and its left neighbour."""
    s = _as_state(state, model.rows)
    p = _as_state(prev, model.rows, "prev")
    h = model.h_potential.table
    out = 1.0
    for j in range(model.rows):
        out *= h[s[j], p[j]]
    return float(out)


@dataclass(frozen=True, eq=False)
class ChainTables:
    """Factor tables of the row chain inside one super-column of width ``width``.

    ``internal[a]`` is the product of horizontal potentials inside a packed
    row ``a``; ``boundary[p, a]`` additionally multiplies the edge to the
    previous strip's last column holding bit ``p``; ``vertical[b, a]`` is
    the product over the strip of vertical potentials between packed row
    ``b`` (below) and packed row ``a`` (above).
    """

    width: int
    internal: np.ndarray
    boundary: np.ndarray
    vertical: np.ndarray

    @property
    def n_states(self) -> int:
        return 1 << self.width

    @classmethod
    def build(cls, model: LatticeModel, width: int) -> "ChainTables":
        h = model.h_potential.table
        v = model.v_potential.table
        n = 1 << width
        bits = (np.arange(n)[:, None] >> np.arange(width)[None, :]) & 1
        internal = np.ones(n)
        for t in range(1, width):
            internal = internal * h[bits[:, t], bits[:, t - 1]]
        boundary = np.empty((2, n))
        for p in (0, 1):
            boundary[p] = internal * h[bits[:, 0], p]
        vertical = np.ones((n, n))
        for t in range(width):
            vertical = vertical * v[bits[:, t][:, None], bits[:, t][None, :]]
        for arr in (internal, boundary, vertical):
            arr.setflags(write=False)
        return cls(width, internal, boundary, vertical)


@dataclass(frozen=True, eq=False)
class StripView:
    """The lattice seen as a chain of super-columns of ``width`` original columns.

    Super-columns are indexed ``k = 1 .. super_cols``; all have ``width``
    columns except possibly the last, which takes the remainder.
    """

    base: LatticeModel
    width: int

    def __post_init__(self):
        if not isinstance(self.width, (int, np.integer)) or not 1 <= self.width <= self.base.cols:
            raise ParameterError(
                f"strip width must be in [1, {self.base.cols}], got {self.width!r}"
            )
        object.__setattr__(self, "width", int(self.width))
        tables = {w: ChainTables.build(self.base, w) for w in set(self.widths)}
        object.__setattr__(self, "_tables", tables)

    @property
    def rows(self) -> int:
        return self.base.rows

    @property
    def super_cols(self) -> int:
        return math.ceil(self.base.cols / self.width)

    @property
    def widths(self) -> tuple[int, ...]:
        full, rem = divmod(self.base.cols, self.width)
        return (self.width,) * full + ((rem,) if rem else ())

    @property
    def row_state_bits(self) -> int:
        return self.width

    def width_of(self, k: int) -> int:
        if not 1 <= k <= self.super_cols:
            raise ParameterError(f"super-column index must be in [1, {self.super_cols}], got {k}")
        return self.widths[k - 1]

    def tables(self, k: int) -> ChainTables:
        return self._tables[self.width_of(k)]

    def check_state(self, k: int, state, name: str = "state") -> np.ndarray:
        s = _as_state(state, self.rows, name)
        if np.any(s < 0) or np.any(s >= 1 << self.width_of(k)):
            raise DimensionError(f"{name} entries must be packed rows of width {self.width_of(k)}")
        return s

    def phi(self, k: int, state) -> float:
        """All factors inside super-column ``k`` (internal horizontal and vertical edges)."""
        t = self.tables(k)
        s = self.check_state(k, state)
        out = 1.0
        for j in range(self.rows):
            out *= t.internal[s[j]]
        for j in range(self.rows - 1):
            out *= t.vertical[s[j + 1], s[j]]
        return float(out)

    def psi(self, k: int, state, prev) -> float:
        """Horizontal factors between super-column ``k`` and the last column of ``k - 1``."""
        s = self.check_state(k, state)
        p = self.check_state(k - 1, prev, "prev")
        last = (p >> (self.width_of(k - 1) - 1)) & 1
        h = self.base.h_potential.table
        out = 1.0
        for j in range(self.rows):
            out *= h[s[j] & 1, last[j]]
        return float(out)

    def unpack(self, k: int, state) -> np.ndarray:
        """Packed super-column state as an (M, w) array of bits."""
        s = self.check_state(k, state)
        return (s[:, None] >> np.arange(self.width_of(k))[None, :]) & 1

    def column_offset(self, k: int) -> int:
        """Index of the first original column covered by super-column ``k``."""
        return (k - 1) * self.width


def strip_view(model: LatticeModel, width: int) -> StripView:
    return StripView(model, width)


def as_view(model_or_strip) -> StripView:
    if isinstance(model_or_strip, StripView):
        return model_or_strip
    if isinstance(model_or_strip, LatticeModel):
        return StripView(model_or_strip, 1)
    raise TypeError(f"expected LatticeModel or StripView, got {type(model_or_strip).__name__}")


# -- model spec files ---------------------------------------------------------

_SPEC_KEYS = {"rows", "cols", "potential", "h_potential", "v_potential", "strip_width"}


def _parse_potential(text: str) -> PairwisePotential:
    text = text.strip()
    if text.lower() == "rll":
        return rll_potential()
    parts = text.split()
    if len(parts) != 4:
        raise ConfigError(f"potential must be 'rll' or four weights 'w00 w01 w10 w11', got {text!r}")
    try:
        weights = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"non-numeric potential weight in {text!r}") from exc
    try:
        return PairwisePotential(np.array(weights).reshape(2, 2))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def _positive_int(key: str, text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from exc
    if value < 1:
        raise ConfigError(f"{key} must be >= 1, got {value}")
    return value


def parse_key_values(text: str, allowed: set[str]) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown or repeated keys are errors."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def model_from_values(values: dict[str, str]) -> tuple[LatticeModel, int]:
    for key in ("rows", "cols"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    rows = _positive_int("rows", values["rows"])
    cols = _positive_int("cols", values["cols"])
    if "potential" in values and ({"h_potential", "v_potential"} & values.keys()):
        raise ConfigError("use either 'potential' or 'h_potential'/'v_potential', not both")
    both = _parse_potential(values.get("potential", "rll"))
    h = _parse_potential(values["h_potential"]) if "h_potential" in values else both
    v = _parse_potential(values["v_potential"]) if "v_potential" in values else both
    width = _positive_int("strip_width", values.get("strip_width", "1"))
    if width > cols:
        raise ConfigError(f"strip_width {width} exceeds cols {cols}")
    return LatticeModel(rows, cols, h, v), width


def parse_model_spec(text: str) -> tuple[LatticeModel, int]:
    """Parse a model spec; returns the model and its strip width."""
    return model_from_values(parse_key_values(text, _SPEC_KEYS))


def load_model_spec(path) -> tuple[LatticeModel, int]:
    return parse_model_spec(Path(path).read_text(encoding="utf-8"))
