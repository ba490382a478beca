"""Command line experiment runner.

Subcommands
-----------
run
    Build approximants for a list of budgets, write the results CSV and
    the rate summary.
rates
    Recompute the rate summary from an existing results CSV.
render
    Draw a two-dimensional partition dump as SVG.
audit
    Check the refinement bounds on a trace CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .analysis import audit_rows, fit_rate, lower_bound_check, predicted_rate
from .approximant import METHODS, ApproximationProblem, _check_dpq, alpha_of, approximate
from .functions import get_function
from .geometry import clip_slab_2d, dump_partition, load_partition
from .quadrature import DEFAULT_CONFIG, QuadratureConfig, lp_error
from .refinement import read_trace_csv

RESULT_COLUMNS = ("label", "d", "p", "q", "method", "N", "cells", "error", "seconds")
RATE_COLUMNS = ("label", "method", "slope", "r2", "predicted", "regime")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def fmt(x: float) -> str:
    """Shortest round-trip decimal; ``inf`` for infinity."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def parse_p(text) -> float:
    if isinstance(text, str) and text.strip().lower() in ("inf", "infinity", "oo"):
        return math.inf
    return float(text)


def _parse_int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(t) for t in text]
    return [int(t) for t in str(text).split(",") if t.strip()]


def _parse_methods(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return list(text)
    return [t.strip() for t in str(text).split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    function: str
    d: int
    p: float
    q: float
    budgets: list[int]
    methods: list[str] = field(default_factory=lambda: ["algorithm1", "uniform"])
    quadrature: QuadratureConfig = DEFAULT_CONFIG
    results: Path = Path("results.csv")
    rates: Path | None = None
    partition: Path | None = None
    svg: Path | None = None
    trace_dir: Path | None = None
    timings: bool = True

    def validate(self) -> None:
        if not self.budgets:
            raise ConfigError("budgets must be non-empty")
        if any(b < 1 for b in self.budgets):
            raise ConfigError("every budget must be >= 1")
        if any(a >= b for a, b in zip(self.budgets, self.budgets[1:])):
            raise ConfigError("budgets must be strictly increasing")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {','.join(METHODS)}")
        try:
            _check_dpq(self.d, self.p, self.q)
            get_function(self.function, self.d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.svg is not None and self.d != 2:
            raise ConfigError("rendering supports d=2 only")

    @property
    def rates_path(self) -> Path:
        if self.rates is not None:
            return self.rates
        return self.results.with_name(self.results.stem + "_rates.csv")


def threads() -> int:
    """Worker count from ``CONVPART_THREADS`` (0 or unset means all cores)."""
    raw = os.environ.get("CONVPART_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CONVPART_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("CONVPART_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


# --------------------------------------------------------------------------
# CSV I/O


@dataclass(frozen=True)
class ResultRow:
    label: str
    d: int
    p: float
    q: float
    method: str
    N: int
    cells: int
    error: float
    seconds: float | None

    def as_list(self) -> list[str]:
        secs = "" if self.seconds is None else fmt(round(self.seconds, 6))
        return [self.label, str(self.d), fmt(self.p), fmt(self.q), self.method, str(self.N), str(self.cells), fmt(self.error), secs]


def write_results(path: Path, rows: Sequence[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in sorted(rows, key=lambda r: (r.label, r.N, r.method)):
            w.writerow(r.as_list())


def read_results(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"results CSV lacks column(s) {','.join(sorted(missing))}")
        return [
            ResultRow(
                r["label"], int(r["d"]), parse_p(r["p"]), float(r["q"]), r["method"], int(r["N"]),
                int(r["cells"]), float(r["error"]), float(r["seconds"]) if r["seconds"] else None,
            )
            for r in reader
        ]


def rate_rows(rows: Sequence[ResultRow]) -> list[list[str]]:
    """One summary line per (label, method).

    The predicted slope is ``-rate`` for the anisotropic method and the
    isotropic ``-1/d`` for the baselines.  Fits skip single-cell runs and
    yield ``NA`` when fewer than 3 positive errors remain.
    """
    out = []
    keys = sorted({(r.label, r.method) for r in rows})
    for label, method in keys:
        series = sorted((r for r in rows if r.label == label and r.method == method), key=lambda r: r.N)
        pts = [(r.N, r.error) for r in series if r.cells > 1]
        slope = r2 = "NA"
        if len(pts) >= 3 and all(e > 0 for _, e in pts):
            s, _, rr = fit_rate(pts)
            slope, r2 = fmt(s), fmt(rr)
        d, p, q = series[0].d, series[0].p, series[0].q
        if method == "algorithm1":
            pred = predicted_rate(d, p, q)
            predicted, regime = fmt(-pred.rate), pred.regime.value
        else:
            predicted, regime = fmt(-1.0 / d), "isotropic"
        out.append([label, method, slope, r2, predicted, regime])
    return out


def write_rates(path: Path, rows: Sequence[ResultRow]) -> list[list[str]]:
    summary = rate_rows(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATE_COLUMNS)
        w.writerows(summary)
    return summary


# --------------------------------------------------------------------------
# SVG


def render_svg(partition, values, out) -> int:
    """Write one grayscale polygon per slab; returns the polygon count."""
    if partition.domain.dim != 2:
        raise ConfigError("rendering supports d=2 only")
    dom = partition.domain
    x0, y0 = dom.corner
    s = dom.side
    vals = list(values) if values is not None else [0.0] * len(partition)
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 0.0)
    span = hi - lo
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{fmt(x0)} {fmt(y0)} {fmt(s)} {fmt(s)}" width="600" height="600">',
        # flip so that y points up inside the domain square
        f'<g transform="translate(0 {fmt(2 * y0 + s)}) scale(1 -1)" stroke="#c00000" stroke-width="{fmt(s / 600)}">',
    ]
    count = 0
    for cell, v in zip(partition.cells, vals):
        poly = clip_slab_2d(cell)
        if not poly:
            continue
        t = 0.5 if span == 0 else (v - lo) / span
        g = int(round(40 + 200 * t))
        pts = " ".join(f"{px:.9g},{py:.9g}" for px, py in poly)
        lines.append(f'<polygon points="{pts}" fill="rgb({g},{g},{g})"/>')
        count += 1
    lines += ["</g>", "</svg>", ""]
    Path(out).write_text("\n".join(lines))
    return count


# --------------------------------------------------------------------------
# run


def _run_task(cfg: ExperimentConfig, method: str, N: int):
    f = get_function(cfg.function, cfg.d)
    t0 = time.perf_counter()
    s = approximate(ApproximationProblem(f, cfg.d, cfg.p, cfg.q, N), method, cfg.quadrature)
    err = lp_error(f, s, cfg.p, cfg.quadrature)
    secs = time.perf_counter() - t0 if cfg.timings else None
    return ResultRow(f.label, cfg.d, cfg.p, cfg.q, method, N, s.n_cells, err, secs), s


def run_experiment(cfg: ExperimentConfig, log=print) -> int:
    cfg.validate()
    tasks = [(m, N) for m in cfg.methods for N in cfg.budgets]
    rows: list[ResultRow] = []
    built = {}
    failure = None
    with ThreadPoolExecutor(max_workers=min(threads(), len(tasks))) as pool:
        futures = [pool.submit(_run_task, cfg, m, N) for m, N in tasks]
        for (m, N), fut in zip(tasks, futures):
            try:
                row, s = fut.result()
            except Exception as exc:  # flush what we have, then fail
                failure = failure or f"{m} N={N}: {exc}"
                continue
            rows.append(row)
            built[(m, N)] = s
    write_results(cfg.results, rows)
    if failure:
        log(f"error: {failure}", file=sys.stderr)
        return 2
    summary = write_rates(cfg.rates_path, rows)
    for line in summary:
        log("rate " + " ".join(f"{k}={v}" for k, v in zip(RATE_COLUMNS, line)))

    if cfg.trace_dir is not None:
        cfg.trace_dir.mkdir(parents=True, exist_ok=True)
        for (m, N), s in sorted(built.items()):
            if s.trace is not None:
                s.trace.to_csv(cfg.trace_dir / f"trace_{m}_N{N}.csv")
    if cfg.partition is not None or cfg.svg is not None:
        method = "algorithm1" if "algorithm1" in cfg.methods else cfg.methods[0]
        s = built[(method, cfg.budgets[-1])]
        if cfg.partition is not None:
            dump_partition(s.partition, cfg.partition, s.values)
        if cfg.svg is not None:
            render_svg(s.partition, s.values, cfg.svg)
    return 0


def _config_from_args(args) -> ExperimentConfig:
    doc: dict = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    outputs = doc.get("outputs", {})
    quad_doc = dict(doc.get("quadrature", {}))

    def pick(flag, key, default=None):
        value = getattr(args, flag)
        return value if value is not None else doc.get(key, default)

    for flag, key in (("gl_points", "gl_points_per_axis"), ("samples", "samples_per_cube"), ("seed", "seed")):
        if getattr(args, flag) is not None:
            quad_doc[key] = getattr(args, flag)
    try:
        qcfg = QuadratureConfig.from_dict(quad_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid quadrature settings: {exc}") from None

    missing = [k for k in ("function", "d", "p", "q", "budgets") if pick(k, k) is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {','.join(missing)}")

    def path(flag, key):
        value = getattr(args, flag) or outputs.get(key)
        return Path(value) if value else None

    try:
        return ExperimentConfig(
            function=str(pick("function", "function")),
            d=int(pick("d", "d")),
            p=parse_p(pick("p", "p")),
            q=float(pick("q", "q")),
            budgets=_parse_int_list(pick("budgets", "budgets")),
            methods=_parse_methods(pick("methods", "methods", "algorithm1,uniform")),
            quadrature=qcfg,
            results=path("out", "results") or Path("results.csv"),
            rates=path("rates", "rates"),
            partition=path("dump_partition", "partition"),
            svg=path("svg", "svg"),
            trace_dir=path("trace_dir", "trace_dir"),
            timings=not args.no_timings,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    if args.lower_bound_check:
        cfg.validate()
        f = get_function(cfg.function, cfg.d)
        if "m" not in f.params:
            raise ConfigError("--lower-bound-check applies to bump:m=M functions only")
        status = run_experiment(cfg)
        res = lower_bound_check(f.params["m"], cfg.d, cfg.quadrature, cfg.q)
        verdict = "PASS" if res.passed else "FAIL"
        print(
            f"lower_bound m={res.m} d={res.d} N={res.N} error_inf={res.error_inf:.6g} "
            f"error_uniform={res.error_uniform:.6g} threshold={res.threshold:.6g} {verdict}"
        )
        return status or (0 if res.passed else 1)
    return run_experiment(cfg)


def cmd_rates(args) -> int:
    rows = read_results(args.results)
    if not rows:
        raise ConfigError("results CSV has no rows")
    out = Path(args.out) if args.out else Path(args.results).with_name(Path(args.results).stem + "_rates.csv")
    for line in write_rates(out, rows):
        print(",".join(line))
    return 0


def cmd_render(args) -> int:
    try:
        partition, values = load_partition(args.dump)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read partition dump {args.dump}: {exc}") from None
    n = render_svg(partition, values, args.out)
    print(f"wrote {n} polygons to {args.out}")
    return 0


def cmd_audit(args) -> int:
    rows = read_trace_csv(args.trace)
    d = args.d
    gamma = 1.0 / d if args.gamma is None else args.gamma
    if args.alpha is not None:
        alpha = args.alpha
    elif args.q is not None:
        alpha = alpha_of(d, parse_p(args.p), args.q)
    else:
        raise ConfigError("audit needs --alpha or --p/--q")
    audit = audit_rows(rows, d, gamma, alpha, slack=args.slack)
    for k, (b, g) in enumerate(zip(audit.bound_ratio, audit.decay_ratio), start=1):
        print(f"k={k} bound_ratio={b:.6g} decay_ratio={g:.12g}")
    verdict = "PASS" if audit.ok else "FAIL"
    print(f"audit {audit.regime.value} C={audit.constant:.6g} bound={'ok' if audit.bound_ok else 'violated'} "
          f"decay={'ok' if audit.decay_ok else 'violated'} {verdict}")
    return 0 if audit.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convpart", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a rate study")
    run.add_argument("--config", help="JSON config; flags override its entries")
    run.add_argument("--function")
    run.add_argument("--d", type=int)
    run.add_argument("--p", help="real >= 1 or 'inf'")
    run.add_argument("--q", type=float)
    run.add_argument("--budgets", help="comma separated, strictly increasing")
    run.add_argument("--methods", help=f"comma separated subset of {','.join(METHODS)}")
    run.add_argument("--gl-points", type=int, dest="gl_points")
    run.add_argument("--samples", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="results CSV (default results.csv)")
    run.add_argument("--rates", help="rate summary CSV (default <results>_rates.csv)")
    run.add_argument("--dump-partition", dest="dump_partition", help="JSON dump of the largest-budget partition")
    run.add_argument("--svg", help="SVG of the largest-budget partition (d=2)")
    run.add_argument("--trace-dir", dest="trace_dir", help="directory for refinement trace CSVs")
    run.add_argument("--lower-bound-check", dest="lower_bound_check", action="store_true")
    run.add_argument("--no-timings", dest="no_timings", action="store_true", help="leave the seconds column empty")
    run.set_defaults(func=cmd_run)

    rates = sub.add_parser("rates", help="fit rates from a results CSV")
    rates.add_argument("results")
    rates.add_argument("--out")
    rates.set_defaults(func=cmd_rates)

    render = sub.add_parser("render", help="render a d=2 partition dump as SVG")
    render.add_argument("dump")
    render.add_argument("out")
    render.set_defaults(func=cmd_render)

    audit = sub.add_parser("audit", help="check refinement bounds on a trace CSV")
    audit.add_argument("trace")
    audit.add_argument("--d", type=int, required=True)
    audit.add_argument("--alpha", type=float)
    audit.add_argument("--gamma", type=float, help="default 1/d")
    audit.add_argument("--p", default="2")
    audit.add_argument("--q", type=float)
    audit.add_argument("--slack", type=float, default=1.01)
    audit.set_defaults(func=cmd_audit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
