"""Repeated-run benchmark harness: MSE of the capacity estimate against a reference.

Output CSV (UTF-8) has two sections. Records::

    kind,N,W,run,seed,capacity,log2_Z,wall_clock_s
    record,...

followed by summaries::

    summary,N,W,runs,mean,stderr,mse,mean_wall_clock_s
    summary,...

The JSON-lines form emits one object per row with the same field names
plus ``kind``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from rllcap import oracle, smc
from rllcap.errors import ConfigError, SizeLimitError
from rllcap.model import LatticeModel, model_from_values, parse_key_values, strip_view

__all__ = [
    "BenchConfig",
    "BenchRecord",
    "BenchResult",
    "RECORD_FIELDS",
    "Reference",
    "SUMMARY_FIELDS",
    "SummaryRow",
    "load_bench_config",
    "parse_bench_config",
    "read_records",
    "reference_value",
    "run_bench",
    "summarize",
    "write_result",
]

RECORD_FIELDS = ("kind", "N", "W", "run", "seed", "capacity", "log2_Z", "wall_clock_s")
SUMMARY_FIELDS = ("summary", "N", "W", "runs", "mean", "stderr", "mse", "mean_wall_clock_s")

# Long-run reference seeds live far from the grid seeds.
_REFERENCE_SEED_OFFSET = 10**12


@dataclass(frozen=True)
class Reference:
    mode: str = "oracle"  # oracle | fixed | smc
    value: float | None = None
    n_ref: int = 200_000
    runs_ref: int = 10

    def __post_init__(self):
        if self.mode not in ("oracle", "fixed", "smc"):
            raise ConfigError(f"unknown reference mode {self.mode!r}")
        if self.mode == "fixed" and self.value is None:
            raise ConfigError("fixed reference needs a value")
        if self.mode == "smc" and (self.n_ref < 1 or self.runs_ref < 1):
            raise ConfigError("smc reference needs n_ref >= 1 and runs_ref >= 1")


@dataclass(frozen=True)
class BenchConfig:
    model: LatticeModel
    particles: tuple[int, ...]
    runs: int = 10
    strip_widths: tuple[int, ...] = (1,)
    reference: Reference = field(default_factory=Reference)
    seed: int = 0

    def __post_init__(self):
        if self.runs < 2:
            raise ConfigError(f"runs must be >= 2 to estimate a standard error, got {self.runs}")
        if not self.particles or any(n < 1 for n in self.particles):
            raise ConfigError("particle grid must be non-empty with every N >= 1")
        if not self.strip_widths or any(not 1 <= w <= self.model.cols for w in self.strip_widths):
            raise ConfigError(f"strip widths must lie in [1, {self.model.cols}]")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def seed_for(self, n_index: int, w_index: int, run: int) -> int:
        cell = n_index * len(self.strip_widths) + w_index
        return self.seed + cell * self.runs + run


@dataclass(frozen=True)
class BenchRecord:
    N: int
    W: int
    run: int
    seed: int
    capacity: float
    log2_Z: float
    wall_clock_s: float


@dataclass(frozen=True)
class SummaryRow:
    N: int
    W: int
    runs: int
    mean: float
    stderr: float
    mse: float
    mean_wall_clock_s: float


@dataclass
class BenchResult:
    records: list[BenchRecord]
    summary: list[SummaryRow]
    reference: float


def reference_value(config: BenchConfig) -> float:
    ref = config.reference
    if ref.mode == "fixed":
        return float(ref.value)
    if ref.mode == "oracle":
        try:
            return oracle.exact_capacity(config.model)
        except SizeLimitError as exc:
            raise ConfigError(f"oracle reference unavailable: {exc}") from exc
    caps = [
        smc.run(config.model, ref.n_ref, config.seed + _REFERENCE_SEED_OFFSET + r).capacity
        for r in range(ref.runs_ref)
    ]
    return float(np.mean(caps))


def summarize(records: list[BenchRecord], reference: float) -> list[SummaryRow]:
    groups: dict[tuple[int, int], list[BenchRecord]] = {}
    for rec in records:
        groups.setdefault((rec.N, rec.W), []).append(rec)
    rows = []
    for (n, w), recs in groups.items():
        caps = np.array([r.capacity for r in recs])
        se = float(np.std(caps, ddof=1) / math.sqrt(len(caps))) if len(caps) > 1 else math.nan
        rows.append(
            SummaryRow(
                N=n,
                W=w,
                runs=len(recs),
                mean=float(np.mean(caps)),
                stderr=se,
                mse=float(np.mean((caps - reference) ** 2)),
                mean_wall_clock_s=float(np.mean([r.wall_clock_s for r in recs])),
            )
        )
    return rows


def run_bench(config: BenchConfig, progress=None) -> BenchResult:
    """All runs of the grid, ordered by (N, W, run)."""
    reference = reference_value(config)
    views = [strip_view(config.model, w) for w in config.strip_widths]
    records = []
    for ni, n in enumerate(config.particles):
        for wi, view in enumerate(views):
            for r in range(config.runs):
                seed = config.seed_for(ni, wi, r)
                est = smc.run(view, n, seed)
                records.append(
                    BenchRecord(n, view.width, r, seed, est.capacity, est.log2_Z, est.wall_clock_seconds)
                )
                if progress is not None:
                    progress(records[-1])
    return BenchResult(records, summarize(records, reference), reference)


# -- config files ----------------------------------------------------------------

_BENCH_KEYS = {
    "rows",
    "cols",
    "potential",
    "h_potential",
    "v_potential",
    "particles",
    "runs",
    "strip_widths",
    "reference",
    "seed",
}


def _int_list(key: str, text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{key} must be a list of integers, got {text!r}") from exc


def _parse_reference(text: str) -> Reference:
    parts = text.split()
    if not parts:
        raise ConfigError("empty reference")
    mode, args = parts[0].lower(), parts[1:]
    try:
        if mode == "oracle" and not args:
            return Reference("oracle")
        if mode == "fixed" and len(args) == 1:
            return Reference("fixed", value=float(args[0]))
        if mode == "smc" and len(args) <= 2:
            kw = dict(zip(("n_ref", "runs_ref"), (int(a) for a in args)))
            return Reference("smc", **kw)
    except ValueError as exc:
        raise ConfigError(f"bad reference {text!r}") from exc
    raise ConfigError(f"reference must be 'oracle', 'fixed VALUE' or 'smc [N_REF [RUNS_REF]]', got {text!r}")


def parse_bench_config(text: str) -> BenchConfig:
    """Bench config: the model spec keys (without strip_width) plus bench keys.

    ``particles = 1250, 2500, 5000``; ``runs = 10``; ``strip_widths = 1 3``;
    ``reference = oracle | fixed 0.5879 | smc 200000 10``; ``seed = 0``.
    """
    values = parse_key_values(text, _BENCH_KEYS)
    model, _ = model_from_values({k: v for k, v in values.items() if k in {"rows", "cols", "potential", "h_potential", "v_potential"}})
    if "particles" not in values:
        raise ConfigError("missing required key 'particles'")
    try:
        runs = int(values.get("runs", "10"))
        seed = int(values.get("seed", "0"))
    except ValueError as exc:
        raise ConfigError(f"runs and seed must be integers: {exc}") from exc
    return BenchConfig(
        model=model,
        particles=_int_list("particles", values["particles"]),
        runs=runs,
        strip_widths=_int_list("strip_widths", values.get("strip_widths", "1")),
        reference=_parse_reference(values.get("reference", "oracle")),
        seed=seed,
    )


def load_bench_config(path) -> BenchConfig:
    return parse_bench_config(Path(path).read_text(encoding="utf-8"))


# -- output ------------------------------------------------------------------------


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def record_row(rec: BenchRecord) -> dict:
    return {"kind": "record", **asdict(rec)}


def summary_row(row: SummaryRow) -> dict:
    return {"summary": "summary", **asdict(row)}


def write_result(result: BenchResult, fh, fmt: str = "csv") -> None:
    if fmt == "csv":
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for rec in result.records:
            w.writerow([_fmt(v) for v in record_row(rec).values()])
        w.writerow(SUMMARY_FIELDS)
        for row in result.summary:
            w.writerow([_fmt(v) for v in summary_row(row).values()])
    elif fmt == "jsonl":
        for rec in result.records:
            fh.write(json.dumps(record_row(rec)) + "\n")
        for row in result.summary:
            d = summary_row(row)
            d.pop("summary")
            fh.write(json.dumps({"kind": "summary", **d}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_records(source) -> list[BenchRecord]:
    """Record rows from a bench CSV (any estimator that writes the record header)."""
    text = source if isinstance(source, str) and "\n" in source else Path(source).read_text(encoding="utf-8")
    out = []
    for row in csv.reader(io.StringIO(text)):
        if row and row[0] == "record":
            n, w, run, seed = (int(x) for x in row[1:5])
            cap, log2z, wall = (float(x) for x in row[5:8])
            out.append(BenchRecord(n, w, run, seed, cap, log2z, wall))
    return out
