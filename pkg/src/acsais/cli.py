"""Batch command-line front end.

Exit codes: 0 success, 2 domain-negative result (not M-connected, synthesis
objective unmet), 64 usage or input error, 70 numerical failure.  Every run
writes ``manifest.json`` with the fully resolved configuration into the
output directory (``--outdir``, else ``$ACSAIS_OUTDIR``, else ``./acsais_out``).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AcsaisError, InputValidationError, NotMConnectedError, PreconditionError
from .graphio import load_multilayer_json, load_undirected_layer, read_tsv_edges, save_multilayer_json, save_trace_json
from .meanfield import EpidemicParams, steady_prevalence_sweep
from .netcore import MultilayerNetwork, WeightedDigraph, is_m_connected
from .npf import DEFAULT_TOL, DEFAULT_MAX_ITER, acsais_threshold, default_workers, sweep_threshold
from .spectral import classify_scenario, psi, spectral_triple
from .stochastic import SimConfig, simulate, write_outputs
from .synth import SynthTarget, synth_psi_target

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 64, 70
DEFAULT_GRID = "log:0.01:100:61"
OUTDIR_ENV = "ACSAIS_OUTDIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_grid(spec: str) -> list[float]:
    """``log:<lo>:<hi>:<points>`` (log-spaced, inclusive) or a comma list."""
    spec = spec.strip()
    try:
        if spec.startswith("log:"):
            parts = spec.split(":")
            if len(parts) != 4:
                raise ValueError
            lo, hi, pts = float(parts[1]), float(parts[2]), int(parts[3])
            if not (0 < lo <= hi) or pts < 1:
                raise ValueError
            grid = list(np.logspace(math.log10(lo), math.log10(hi), pts)) if pts > 1 else [lo]
        else:
            grid = [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise InputValidationError(f"bad kappa grid {spec!r}: expected 'log:<lo>:<hi>:<points>' or a comma list")
    if not grid or any(not (g >= 0) for g in grid):
        raise InputValidationError(f"bad kappa grid {spec!r}: values must be nonnegative")
    return [float(g) for g in grid]


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputValidationError(f"{path}: no such file")
    return p


def _load_net(path) -> MultilayerNetwork:
    return load_multilayer_json(_existing(path))


def _load_layer(path) -> WeightedDigraph:
    """A single layer: multilayer JSON (S layer), TSV edge list, or undirected GML/edge list."""
    p = _existing(path)
    if p.suffix == ".json":
        return load_multilayer_json(p).layer_s
    if p.suffix == ".tsv":
        edges = read_tsv_edges(p)
        n = 1 + max(max(i, j) for i, j, _ in edges) if edges else 0
        return WeightedDigraph(n, tuple(edges))
    return load_undirected_layer(p)


def _outdir(args) -> Path:
    out = Path(args.outdir or os.environ.get(OUTDIR_ENV) or "acsais_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, args, **extra):
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    doc = {"tool": "acsais", "version": __version__, "command": args.command, "config": config}
    doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


PLOT_TEMPLATE = '''"""Plot {csv_name}; run with python (needs matplotlib)."""
import csv
import matplotlib.pyplot as plt

with open({csv_name!r}) as fh:
    rows = [r for r in csv.DictReader(fh) if r[{y!r}]]
x = [float(r["kappa_bar"]) for r in rows]
y = [float(r[{y!r}]) for r in rows]
plt.semilogx(x, y, marker=".")
plt.xlabel("relative alerting rate kappa_bar")
plt.ylabel({ylabel!r})
plt.grid(True, which="both", alpha=0.3)
plt.savefig({png!r}, dpi=150, bbox_inches="tight")
'''


def _plot_script(out: Path, csv_name: str, y: str, ylabel: str):
    stem = Path(csv_name).stem
    text = PLOT_TEMPLATE.format(csv_name=csv_name, y=y, ylabel=ylabel, png=f"{stem}.png")
    (out / f"plot_{stem}.py").write_text(text, encoding="utf-8")


def _workers(args):
    return args.workers if args.workers is not None else default_workers()


# ---------------------------------------------------------------- commands


def cmd_mconnect(args) -> int:
    net = _load_net(args.graph)
    out = _outdir(args)
    ok, trace = is_m_connected(net)
    save_trace_json(trace, out / "trace.json")
    _manifest(out, args, m_connected=ok, k_star=trace.k_star)
    if ok:
        print(f"M-CONNECTED k*={trace.k_star}")
        return EXIT_OK
    print("NOT M-CONNECTED: aggregation stalled at partition "
          + json.dumps([list(b) for b in trace.final_partition]))
    return EXIT_NEGATIVE


def _scenario_lines(net):
    try:
        rep = classify_scenario(net)
    except AcsaisError as exc:
        return [f"scenario: unavailable ({exc})"], None
    lines = [f"scenario: {rep.kind}", f"Psi(W_S,W_A) = {rep.psi_sa:.12g}", f"Psi(W_A,W_S) = {rep.psi_as:.12g}"]
    if rep.note:
        lines.append(f"note: {rep.note}")
    return lines, rep


def cmd_threshold(args) -> int:
    net = _load_net(args.graph)
    grid = parse_grid(args.kappa_grid)
    out = _outdir(args)
    tau0 = acsais_threshold(net, 0.0, tol=args.tol, max_iter=args.max_iter).tau_c
    points = sweep_threshold(net, grid, tol=args.tol, max_iter=args.max_iter, workers=_workers(args), check=False)
    rows = [(p.kappa_bar, p.tau_c, None if p.tau_c is None else p.tau_c / tau0) for p in points]
    name = args.out or "threshold.csv"
    _write_csv(out / name, ("kappa_bar", "tau_c", "tau_c_normalized"), rows)
    _plot_script(out, name, "tau_c_normalized", "tau_c / tau_c(0)")
    lines, rep = _scenario_lines(net)
    for line in lines:
        print(line)
    print(f"tau_c(0) = {tau0:.12g}")
    failed = [p for p in points if not p.ok]
    for p in failed:
        print(f"warning: kappa_bar={p.kappa_bar:g} failed: {p.error}", file=sys.stderr)
    _manifest(out, args, grid=grid, tau_c0=tau0, scenario=None if rep is None else rep.kind,
              failed_points=len(failed), solver={"tol": args.tol, "max_iter": args.max_iter})
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_prevalence(args) -> int:
    net = _load_net(args.graph)
    grid = parse_grid(args.kappa_grid)
    if not args.tau >= 0:
        raise InputValidationError("--tau must be a nonnegative multiple of tau_c(0)")
    out = _outdir(args)
    tau0 = acsais_threshold(net, 0.0).tau_c
    tau = args.tau * tau0
    points = steady_prevalence_sweep(net, tau, grid, dt=args.dt, t_max=args.t_max, workers=_workers(args))
    name = args.out or "prevalence.csv"
    _write_csv(out / name, ("kappa_bar", "prevalence"), [(p.kappa_bar, p.prevalence) for p in points])
    _plot_script(out, name, "prevalence", "steady-state prevalence")
    failed = [p for p in points if not p.ok]
    for p in failed:
        print(f"warning: kappa_bar={p.kappa_bar:g} failed: {p.error}", file=sys.stderr)
    unsettled = sum(1 for p in points if p.ok and not p.settled)
    if unsettled:
        print(f"warning: {unsettled} grid points did not settle within t_max", file=sys.stderr)
    print(f"tau = {args.tau:g} * tau_c(0) = {tau:.12g}")
    _manifest(out, args, grid=grid, tau_c0=tau0, tau=tau, failed_points=len(failed), unsettled_points=unsettled)
    return EXIT_NUMERIC if failed else EXIT_OK


def _seeding(spec: str):
    if spec == "all":
        return "all"
    if spec.startswith("count:"):
        try:
            return int(spec[6:])
        except ValueError:
            raise InputValidationError(f"bad --initial {spec!r}")
    try:
        return tuple(int(x) for x in spec.split(","))
    except ValueError:
        raise InputValidationError(f"bad --initial {spec!r}: expected 'all', 'count:<k>' or a comma list of nodes")


def cmd_simulate(args) -> int:
    net = _load_net(args.graph)
    params = EpidemicParams(args.beta, args.delta, args.kappa)
    config = SimConfig(params, _seeding(args.initial), args.t_end, args.seed, args.replicas, args.tail_fraction)
    out = _outdir(args)
    trajectories = simulate(net, config, workers=_workers(args))
    summary = write_outputs(trajectories, out, config.tail_fraction)
    print(f"replicas={summary['replicas']} survivors={summary['survivors']} "
          f"metastable_prevalence={summary['metastable_prevalence']:.6g} +/- {summary['metastable_stderr']:.2g}")
    _manifest(out, args, t_end=config.horizon)
    return EXIT_OK


OBJECTIVE_NAMES = {"undershoot": "psi_sa_below", "overshoot": "psi_as_above", "social-distancing": "social_distancing"}


def cmd_synthesize(args) -> int:
    base = _load_layer(args.base)
    objective = OBJECTIVE_NAMES[args.objective]
    bound = args.scale if objective == "social_distancing" else args.threshold
    target = SynthTarget(base, args.radius_ratio, objective, bound, args.max_steps, args.seed, args.symmetric_only)
    out = _outdir(args)
    result = synth_psi_target(target)
    save_multilayer_json(result.net, out / "network.json")
    result.write_log(out / "search_log.csv")
    report = result.report()
    report["scenario"] = classify_scenario(result.net).kind
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"Psi(W_S,W_A) = {result.psi_sa:.12g}")
    print(f"Psi(W_A,W_S) = {result.psi_as:.12g}")
    print(f"lambda ratio = {result.lambda_ratio:.12g}")
    print(f"scenario: {report['scenario']}")
    print("objective met" if result.met else "objective NOT met (best effort written)")
    _manifest(out, args, report=report)
    return EXIT_OK if result.met else EXIT_NEGATIVE


def _layers_for_spectrum(path):
    p = _existing(path)
    if p.suffix == ".json":
        net = load_multilayer_json(p)
        return {"S": net.layer_s, "A": net.layer_a}
    return {"S": _load_layer(p)}


def cmd_spectrum(args) -> int:
    layers = _layers_for_spectrum(args.graph)
    out = _outdir(args)
    values = {}
    for name, layer in layers.items():
        t = spectral_triple(layer.matrix, tol=args.tol)
        values[name] = t.lambda1
        _write_csv(out / f"eigvec_{name}.csv", ("node", "v", "u"), [(i, t.v[i], t.u[i]) for i in range(layer.n)])
        print(f"lambda1(W_{name}) = {t.lambda1:.12g}")
    _manifest(out, args, lambda1=values)
    return EXIT_OK


def cmd_psi(args) -> int:
    net = _load_net(args.graph)
    out = _outdir(args)
    ps, pa = psi(net.W_S, net.W_A), psi(net.W_A, net.W_S)
    print(f"Psi(W_S,W_A) = {ps:.12g}")
    print(f"Psi(W_A,W_S) = {pa:.12g}")
    lines, rep = _scenario_lines(net)
    for line in lines[:1] + lines[3:]:
        print(line)
    _manifest(out, args, psi_sa=ps, psi_as=pa, scenario=None if rep is None else rep.kind)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acsais", description="Thresholds and dynamics of adaptive-contact SAIS epidemics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, workers=False):
        p.add_argument("--outdir", help=f"output directory (default ${OUTDIR_ENV} or ./acsais_out)")
        if workers:
            p.add_argument("--workers", type=int, default=None, help="worker processes (default: CPU count)")

    p = sub.add_parser("mconnect", help="test M-connectivity and write the aggregation trace")
    p.add_argument("graph")
    common(p)
    p.set_defaults(func=cmd_mconnect)

    p = sub.add_parser("threshold", help="epidemic threshold over a kappa_bar grid")
    p.add_argument("graph")
    p.add_argument("--kappa-grid", default=DEFAULT_GRID)
    p.add_argument("--out", help="CSV file name inside the output directory")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    common(p, workers=True)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("prevalence", help="mean-field steady prevalence over a kappa_bar grid")
    p.add_argument("graph")
    p.add_argument("--tau", type=float, required=True, help="infection rate as a multiple of tau_c(0)")
    p.add_argument("--kappa-grid", default=DEFAULT_GRID)
    p.add_argument("--out")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-max", type=float, default=None)
    common(p, workers=True)
    p.set_defaults(func=cmd_prevalence)

    p = sub.add_parser("simulate", help="exact stochastic simulation")
    p.add_argument("graph")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--initial", default="all", help="'all', 'count:<k>' or comma-separated node list")
    p.add_argument("--tail-fraction", type=float, default=0.5)
    common(p, workers=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synthesize", help="synthesize an alert layer for a scenario")
    p.add_argument("base", help="S layer: multilayer JSON, TSV edge list, or undirected GML/edge list")
    p.add_argument("--objective", choices=sorted(OBJECTIVE_NAMES), required=True)
    p.add_argument("--threshold", type=float, default=1.0, help="Psi bound for undershoot/overshoot")
    p.add_argument("--scale", type=float, default=2.0 / 3.0, help="weight scale for social-distancing")
    p.add_argument("--radius-ratio", type=float, default=2.0 / 3.0)
    p.add_argument("--max-steps", type=int, default=50_000)
    p.add_argument("--symmetric-only", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("spectrum", help="dominant eigenvalue and eigenvectors of each layer")
    p.add_argument("graph", help="multilayer JSON or a single undirected layer (GML / edge list)")
    p.add_argument("--tol", type=float, default=1e-10)
    common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("psi", help="both Psi descriptors and the predicted scenario")
    p.add_argument("graph")
    common(p)
    p.set_defaults(func=cmd_psi)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NotMConnectedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    except (InputValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    except AcsaisError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
