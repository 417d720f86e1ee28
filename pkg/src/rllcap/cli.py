"""Command-line front end: ``rllcap estimate | exact | bench``.

Exit status is 0 on success, 2 for invalid flags or configs (checked before
any sampling), and 1 for runtime failures such as oracle size limits.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from rllcap import _kernels, bench, oracle, smc
from rllcap.errors import ConfigError, SizeLimitError, SupportError
from rllcap.model import load_model_spec, model_from_values, strip_view


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", metavar="FILE", help="model spec file (key = value lines)")
    g.add_argument("--rows", type=int)
    g.add_argument("--cols", type=int)
    g.add_argument("--potential", help="'rll' (default) or four weights 'w00 w01 w10 w11'")
    g.add_argument("--h-potential", help="horizontal-edge weights 'w00 w01 w10 w11'")
    g.add_argument("--v-potential", help="vertical-edge weights 'w00 w01 w10 w11'")
    g.add_argument("--strip-width", type=int, help="columns per sampler step (default 1)")


def _add_output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", metavar="PATH", help="write results here instead of stdout")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rllcap", description="Capacity of 2-D constrained channels by SMC and exact transfer matrices."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="SMC estimate of log2 Z and capacity")
    _add_model_flags(est)
    est.add_argument("--particles", "-N", type=int, required=True)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--runs", type=int, default=1, help="independent runs with seeds seed, seed+1, ...")
    est.add_argument("--threads", type=int, default=1)
    est.add_argument("--trajectories", action="store_true", help=argparse.SUPPRESS)
    _add_output_flags(est)

    ex = sub.add_parser("exact", help="exact log2 Z and capacity")
    _add_model_flags(ex)
    ex.add_argument("--method", choices=("auto", "transfer", "brute"), default="auto")
    _add_output_flags(ex)

    b = sub.add_parser("bench", help="repeated runs over a particle grid; CSV of records and summaries")
    b.add_argument("config", help="bench config file")
    b.add_argument("--threads", type=int, default=1)
    _add_output_flags(b)
    return parser


def _resolve_model(args, parser):
    flags = {
        "rows": args.rows,
        "cols": args.cols,
        "potential": args.potential,
        "h_potential": args.h_potential,
        "v_potential": args.v_potential,
        "strip_width": args.strip_width,
    }
    try:
        if args.model:
            if any(v is not None for v in flags.values()):
                parser.error("--model cannot be combined with inline model flags")
            return load_model_spec(args.model)
        values = {k: str(v) for k, v in flags.items() if v is not None}
        return model_from_values(values)
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _rows_text(header, rows, fmt: str) -> str:
    buf = io.StringIO()
    if fmt == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    else:
        for row in rows:
            buf.write(json.dumps(dict(zip(header, row))) + "\n")
    return buf.getvalue()


def cmd_estimate(args, parser) -> int:
    model, width = _resolve_model(args, parser)
    if args.particles < 1:
        parser.error("--particles must be >= 1")
    if args.runs < 1:
        parser.error("--runs must be >= 1")
    if not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    _kernels.set_num_threads(args.threads)
    view = strip_view(model, width)
    rows = []
    for r in range(args.runs):
        seed = args.seed + r
        est = smc.run(view, args.particles, seed)
        rows.append(("record", args.particles, width, r, seed, est.capacity, est.log2_Z, est.wall_clock_seconds))
    _emit(_rows_text(bench.RECORD_FIELDS, rows, args.format), args.output)
    return 0


def cmd_exact(args, parser) -> int:
    model, _ = _resolve_model(args, parser)
    log2_z = oracle.exact_log2_Z(model, args.method)
    row = (model.rows, model.cols, log2_z, log2_z / model.n_sites)
    _emit(_rows_text(("rows", "cols", "log2_Z", "capacity"), [row], args.format), args.output)
    return 0


def cmd_bench(args, parser) -> int:
    try:
        config = bench.load_bench_config(args.config)
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    _kernels.set_num_threads(args.threads)
    try:
        result = bench.run_bench(config)
    except ConfigError as exc:
        print(f"rllcap: {exc}", file=sys.stderr)
        return 2
    buf = io.StringIO()
    bench.write_result(result, buf, args.format)
    _emit(buf.getvalue(), args.output)
    if args.output:
        print(f"reference capacity: {result.reference!r}")
        for row in result.summary:
            print(
                f"N={row.N:>8d} W={row.W} mean={row.mean:.6f} stderr={row.stderr:.2e} "
                f"mse={row.mse:.3e} wall={row.mean_wall_clock_s:.3f}s"
            )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"estimate": cmd_estimate, "exact": cmd_exact, "bench": cmd_bench}[args.command]
    try:
        return handler(args, parser)
    except (SizeLimitError, SupportError) as exc:
        print(f"rllcap: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
