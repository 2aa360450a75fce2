"""Command-line front end: ``cohbench simulate|sweep|chsh|validate``.

Exit codes: 0 success, 1 validation-suite failure, 2 usage or input error.
Angles on the command line are in degrees.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import __version__
from .detection import (
    CANONICAL_SETTINGS,
    chsh_max_search,
    chsh_S,
    detector_mean,
    fringe_visibility,
    gated_correlation_analytic,
)
from .dsl import DslError, load, serialize
from .field import ANGLE_PARAMS, RESERVED
from .graph import BenchError, BenchGraph
from .optics import REPORT_COLUMNS, build_fig1, field_report, report_rows

BUILTIN_FIG1 = "builtin:fig1"
METRICS = ("I_s1", "I_s2", "I_i3", "I_i4", "R_gated", "R_ungated", "visibility")
PSI_SCAN = 64


class UsageError(Exception):
    """Bad input from the user; reported with exit code 2."""


@dataclass(frozen=True)
class SweepSpec:
    param_name: str
    start: float
    stop: float
    step: float

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        try:
            name, rng = text.split("=", 1)
            start, stop, step = (float(x) for x in rng.split(":"))
        except ValueError:
            raise UsageError(f"bad --vary {text!r}; expected name=start:stop:step") from None
        spec = cls(name.strip(), start, stop, step)
        if not step > 0 or start > stop:
            raise UsageError(f"--vary {text!r}: need step > 0 and start <= stop")
        if len(spec.values()) < 2:
            raise UsageError(f"--vary {text!r}: fewer than 2 points")
        return spec

    def values(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [self.start + k * self.step for k in range(n)]


# -- bench loading and parameter handling ------------------------------------

def fig1_source() -> str:
    return serialize(build_fig1()).text


def shipped_fig1() -> str:
    return resources.files("cohbench").joinpath("data/fig1.obd").read_text(encoding="utf-8")


def load_bench(spec: str) -> tuple[BenchGraph, str]:
    if spec == BUILTIN_FIG1:
        text = fig1_source()
    else:
        path = Path(spec)
        if not path.is_file():
            raise UsageError(f"{spec}: file not found")
        text = path.read_text(encoding="utf-8")
    try:
        return load(text, spec), text
    except DslError as exc:
        raise UsageError(f"{spec}: invalid bench\n{exc}") from None


def angle_names(graph: BenchGraph) -> set[str]:
    """Params entered in degrees on the command line."""
    names = set(ANGLE_PARAMS) | {"phi"}
    for el in graph.nodes.values():
        ref = el.kwargs.get("angle_param")
        if isinstance(ref, str):
            names.add(ref)
    return names


def apply_setting(graph: BenchGraph, name: str, value: float) -> BenchGraph:
    """Set one CLI-level parameter (degrees for angles; ``phi`` adjusts psi)."""
    if name in angle_names(graph):
        value = math.radians(value)
    if name == "phi":
        p = graph.bench_params
        return graph.with_params(psi=value - (p.phi - p.psi))
    if name not in graph.params and name not in RESERVED:
        raise UsageError(f"unknown parameter {name!r}")
    try:
        return graph.with_params(**{name: value})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_sets(items: list[str]) -> list[tuple[str, float]]:
    out = []
    for item in items or []:
        try:
            k, v = item.split("=", 1)
            out.append((k.strip(), float(v)))
        except ValueError:
            raise UsageError(f"bad --set {item!r}; expected name=value") from None
    return out


def apply_sets(graph: BenchGraph, sets: list[tuple[str, float]]) -> BenchGraph:
    for k, v in sets:
        graph = apply_setting(graph, k, v)
    try:
        graph.bench_params
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return graph


# -- output ------------------------------------------------------------------

def run_id(command: str, bench_text: str, options: dict) -> str:
    blob = json.dumps({"command": command, "bench": bench_text, "options": options,
                       "version": __version__}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cell(x) -> str:
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def write_csv(rows: list[list], path: Path, header: list[str] | None = None,
              run: str | None = None) -> Path:
    """Rectangular rows to CSV with full-precision floats and ``\\n`` newlines."""
    if not rows:
        raise ValueError("no rows to write")
    width = len(header) if header else len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("rows are not rectangular")
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            if run is not None:
                fh.write(f"# run:{run}\n")
            w = csv.writer(fh, lineterminator="\n")
            if header:
                w.writerow(header)
            for r in rows:
                w.writerow([_cell(x) for x in r])
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None
    return path


def out_dir(arg: str | None) -> Path:
    d = Path(arg or os.environ.get("COHBENCH_OUT") or ".")
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {d}: {exc.strerror}") from None
    return d


# -- metrics -----------------------------------------------------------------

def psi_scan_visibility(graph: BenchGraph, detector: str) -> float:
    base = graph.bench_params.psi
    vals = [detector_mean(graph.with_params(psi=base + 2 * math.pi * k / PSI_SCAN), detector)
            for k in range(PSI_SCAN)]
    return fringe_visibility(vals)


def evaluate_metric(graph: BenchGraph, metric: str, pair: tuple[str, str], detector: str) -> float:
    if metric.startswith("I_"):
        return detector_mean(graph, metric[2:])
    if metric in ("R_gated", "R_ungated"):
        r = gated_correlation_analytic(graph, *pair)
        return r.gated_value if metric == "R_gated" else r.ungated_value
    return psi_scan_visibility(graph, detector)


def _sweep_point(job):
    graph, metric, pair, detector = job
    return evaluate_metric(graph, metric, pair, detector), graph.bench_params.phi


# -- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    graph, text = load_bench(args.bench)
    graph = apply_sets(graph, parse_sets(args.set))
    d = out_dir(args.out)
    run = run_id("simulate", text, {"set": args.set or []})
    rows, field_rows = [], []
    for det in sorted(graph.detectors):
        rows.append([det, detector_mean(graph, det), psi_scan_visibility(graph, det)])
        field_rows += report_rows(field_report(graph, det))
    if not rows:
        raise UsageError("bench binds no detectors")
    write_csv(rows, d / "detectors.csv", ["detector", "mean_intensity", "visibility_context"], run)
    if field_rows:
        write_csv(field_rows, d / "fields.csv", list(REPORT_COLUMNS), run)
    p = graph.bench_params
    print(f"run {run}  bench {graph.name}  I0={p.i0:g}  phi={math.degrees(p.phi):g} deg")
    print(f"{'detector':<10}{'mean_intensity':>22}{'visibility':>14}")
    for det, mean, vis in rows:
        print(f"{det:<10}{mean:>22.15g}{vis:>14.6g}")
    print(f"wrote {d / 'detectors.csv'} and {d / 'fields.csv'}")
    return 0


def cmd_sweep(args) -> int:
    if args.metric not in METRICS:
        raise UsageError(f"unknown metric {args.metric!r}; valid metrics: {', '.join(METRICS)}")
    if not args.vary:
        raise UsageError("sweep needs at least one --vary name=start:stop:step")
    if len(args.vary) > 2:
        raise UsageError("at most two --vary options")
    graph, text = load_bench(args.bench)
    graph = apply_sets(graph, parse_sets(args.set))
    specs = [SweepSpec.parse(v) for v in args.vary]
    pair = tuple(args.pair.split(","))
    if len(pair) != 2:
        raise UsageError("--pair expects two detector names, e.g. s1,i3")
    known = set(graph.detectors)
    for det in list(pair) + [args.detector] + [m[2:] for m in (args.metric,) if m.startswith("I_")]:
        if det not in known:
            raise UsageError(f"unknown detector {det!r}")
    angles = angle_names(graph)

    points: list[tuple[float, ...]] = [(v,) for v in specs[0].values()]
    if len(specs) == 2:
        points = [(a, b) for a in specs[0].values() for b in specs[1].values()]
    jobs = []
    for pt in points:
        g = graph
        for spec, v in zip(specs, pt):
            g = apply_setting(g, spec.param_name, v)
        jobs.append((g, args.metric, pair, args.detector))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]

    header: list[str] = []
    for spec in specs:
        if spec.param_name in angles:
            header += [f"{spec.param_name}_deg", f"{spec.param_name}_rad"]
        else:
            header.append(spec.param_name)
    header += [args.metric, "phi"]
    rows = []
    for pt, (value, phi) in zip(points, results):
        row: list = []
        for spec, v in zip(specs, pt):
            row += [v, math.radians(v)] if spec.param_name in angles else [v]
        rows.append(row + [value, phi])
    d = out_dir(args.out)
    run = run_id("sweep", text, {"set": args.set or [], "vary": args.vary, "metric": args.metric,
                                 "pair": args.pair, "detector": args.detector})
    path = write_csv(rows, d / "sweep.csv", header, run)
    print(f"run {run}  {len(rows)} points  metric {args.metric}  wrote {path}")
    return 0


def cmd_chsh(args) -> int:
    graph, text = load_bench(args.bench)
    graph = apply_sets(graph, parse_sets(args.set))
    pair = tuple(args.pair.split(","))
    gated = not args.ungated
    try:
        if args.mode == "canonical":
            res = chsh_S(graph, *CANONICAL_SETTINGS, pair=pair, gated=gated)
        else:
            res = chsh_max_search(graph, pair=pair, gated=gated)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    gate = "gated" if gated else "ungated"
    combos = [("E(a,b)", res.a, res.b), ("E(a,b')", res.a, res.b_prime),
              ("E(a',b)", res.a_prime, res.b), ("E(a',b')", res.a_prime, res.b_prime)]
    rows = [[label, math.degrees(x), math.degrees(y), e, gate]
            for (label, x, y), e in zip(combos, res.e_values)]
    rows.append(["S", "", "", res.s, gate])
    d = out_dir(args.out)
    run = run_id("chsh", text, {"set": args.set or [], "mode": args.mode, "gated": gated,
                                "pair": args.pair})
    path = write_csv(rows, d / "chsh.csv", ["label", "xi_deg", "theta_deg", "value", "gate"], run)
    flag = "" if gated else "  [ungated: gate disabled, not a gated correlation]"
    print(f"run {run}  mode {args.mode}  S = {res.s:.12f}{flag}")
    for label, x, y, e, _ in rows[:4]:
        print(f"  {label:<9} xi={x:10.6f} deg  theta={y:10.6f} deg  E={e:+.12f}")
    print(f"wrote {path}")
    return 0


def cmd_validate(args) -> int:
    from .validation import run_validation

    if args.draws < 1:
        raise UsageError("--draws must be at least 1")
    report = run_validation(draws=args.draws, seed=args.seed)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status}  {check.name:<32} max deviation {check.max_deviation:.3e}"
              f"  (tol {check.tolerance:.0e})")
    if report.passed:
        print(f"all {len(report.checks)} checks passed over {args.draws} draws (seed {args.seed})")
        return 0
    for check in report.checks:
        if not check.passed and check.manifest is not None:
            print(f"failing draw for {check.name}: {json.dumps(check.manifest, sort_keys=True)}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cohbench", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cohbench {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--bench", default=BUILTIN_FIG1, help="path to .obd file or builtin:fig1")
        p.add_argument("--set", action="append", metavar="K=V",
                       help="override a parameter (angles in degrees); repeatable")
        p.add_argument("--out", help="output directory (default $COHBENCH_OUT or .)")

    p = sub.add_parser("simulate", help="detector means and field tables")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="metric over a parameter grid")
    common(p)
    p.add_argument("--vary", action="append", metavar="K=START:STOP:STEP")
    p.add_argument("--metric", default="I_s1", help="one of " + ", ".join(METRICS))
    p.add_argument("--pair", default="s1,i3", help="detector pair for R metrics")
    p.add_argument("--detector", default="s1", help="detector for the visibility metric")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("chsh", help="CHSH S from joint rates")
    common(p)
    p.add_argument("--mode", choices=("canonical", "search"), default="canonical")
    p.add_argument("--pair", default="s1,i3")
    p.add_argument("--ungated", action="store_true", help="use ungated joint rates")
    p.set_defaults(func=cmd_chsh)

    p = sub.add_parser("validate", help="cross-pipeline and conservation checks")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
