"""Command-line front door: reproducible, file-driven planning runs.

Every run writes its result (stdout or --out) and a RunManifest recording
the command, input digests, parameters, tool version and elapsed time.
Exit codes: 0 success, 1 input/usage error, 2 degenerate-but-valid result
(for example a fleet plan of zero units, still written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .centrality import CentralityScores, betweenness, blended_betweenness, \
    correlation_report
from .coverage_model import FitResult, GompertzParams, gompertz_fit
from .fleet_opt import FleetPlan, PowerSampling, StationaryPoint, \
    TableSampling, ThreatScenario, optimal_unit_cost, plan_fleet
from .netmodel import NetworkFormatError, classify_nodes, distribution_histogram, \
    flow_consistency, load_network, load_od_matrix, node_congestion, \
    structural_summary
from .placement import CoverageCurve, MonitorGroup, SearchResult, \
    baseline_placement, coverage_curve, evaluate_group, exact_placement, \
    greedy_placement
from .simulate import CoverageEstimate, DetectionConfig, estimate_coverage

_MODES = {"hops": "hops", "ft": "free_flow_time", "ct": "congested_time"}


class _Parser(argparse.ArgumentParser):
    # usage problems are input errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(_fail(f"{self.prog}: {message}"))


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        return "null"
    s = format(float(x), ".17g")
    return s


def _json_value(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        inner = ", ".join(f"{json.dumps(str(k))}: {_json_value(v)}"
                          for k, v in obj.items())
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_json_value(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_bytes(obj) -> bytes:
    return (_json_value(obj) + "\n").encode()


def _csv_bytes(header: list[str], rows: list[list]) -> bytes:
    def cell(v):
        if isinstance(v, float):
            return _fmt_float(v)
        return str(v)

    lines = [",".join(header)]
    lines.extend(",".join(cell(v) for v in row) for row in rows)
    return ("\n".join(lines) + "\n").encode()


def _scores_dict(scores: CentralityScores) -> dict:
    body = {str(node): scores.scores[node] for node in sorted(scores.scores)}
    meta = {"weight_mode": scores.weight_mode, "od_weighted": scores.od_weighted,
            "alpha": scores.alpha, "unreachable_pairs": scores.unreachable_pairs}
    return {"scores": body, "settings": meta}


def _group_dict(group: MonitorGroup) -> dict:
    return {"members": list(group.members), "gbc_value": group.gbc_value,
            "coverage_fraction": group.coverage_fraction}


def emit(report, format: str = "json") -> bytes:
    """Serialize a module result. Floats keep 17 significant digits, so
    serialize -> parse -> serialize is byte stable."""
    if format not in ("json", "csv"):
        raise ValueError(f"unknown format {format!r}")
    if isinstance(report, CoverageCurve):
        if format == "csv":
            rows = [[n, cov, report.scheme] for n, cov in report.points]
            return _csv_bytes(["n", "coverage", "scheme"], rows)
        return _json_bytes({"scheme": report.scheme,
                            "points": [[n, cov] for n, cov in report.points]})
    if isinstance(report, CentralityScores):
        if format == "csv":
            rows = [[node, report.scores[node]]
                    for node in sorted(report.scores)]
            return _csv_bytes(["node", "score"], rows)
        return _json_bytes(_scores_dict(report))
    if format == "csv":
        raise ValueError(f"csv not supported for {type(report).__name__}")
    if isinstance(report, FleetPlan):
        return _json_bytes({"n_units": report.n_units,
                            "unit_cost": report.unit_cost,
                            "sampling": report.sampling,
                            "omega": report.omega,
                            "method": report.method})
    if isinstance(report, MonitorGroup):
        return _json_bytes(_group_dict(report))
    if isinstance(report, SearchResult):
        return _json_bytes({"group": _group_dict(report.group),
                            "certificate": report.certificate,
                            "elapsed_s": report.elapsed_s,
                            "completed": report.completed})
    if isinstance(report, FitResult):
        return _json_bytes({"a": report.params.a, "b": report.params.b,
                            "c": report.params.c,
                            "r_squared": report.r_squared})
    if isinstance(report, CoverageEstimate):
        return _json_bytes({"mean": report.mean,
                            "std_error": report.std_error,
                            "samples": report.samples})
    if isinstance(report, dict):
        return _json_bytes(report)
    raise ValueError(f"cannot emit {type(report).__name__}")


def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _write_outputs(args, payload: bytes, manifest: dict) -> None:
    if args.out:
        Path(args.out).write_bytes(payload)
        Path(str(args.out) + ".manifest.json").write_bytes(
            _json_bytes(manifest))
    else:
        sys.stdout.write(payload.decode())
        sys.stderr.write(_json_bytes(manifest).decode())


def _manifest(command: str, inputs: dict[str, str], params: dict,
              started: float) -> dict:
    digests = {name: {"path": str(path), "sha256": _digest(path)}
               for name, path in inputs.items() if path}
    return {"command": command, "inputs": digests, "parameters": params,
            "tool_version": __version__,
            "elapsed_seconds": time.perf_counter() - started}


def _load_inputs(args, need_od: bool):
    network = load_network(args.links)
    od = None
    if getattr(args, "od", None):
        od = load_od_matrix(args.od, network)
    elif need_od:
        raise NetworkFormatError("--od is required for this command")
    return network, od


def _parse_sampling(spec: str):
    kind, _, rest = spec.partition(":")
    if kind == "power":
        try:
            return PowerSampling(float(rest))
        except ValueError as err:
            raise ValueError(f"bad sampling spec {spec!r}: {err}") from None
    if kind == "table":
        import csv as _csv
        with open(rest, newline="") as f:
            reader = _csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != \
                    ["cost_ratio", "sampling"]:
                raise ValueError("table file header must be cost_ratio,sampling")
            pts = [(float(r[0]), float(r[1])) for r in reader if r]
        return TableSampling(pts)
    raise ValueError(f"bad sampling spec {spec!r} (power:<p> or table:<file>)")


def _parse_catalog(path: str) -> tuple[float, ...]:
    import csv as _csv
    with open(path, newline="") as f:
        reader = _csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["cost"]:
            raise ValueError("catalog header must be cost")
        return tuple(float(r[0]) for r in reader if r)


def _cmd_validate(args) -> int:
    started = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        network, od = _load_inputs(args, need_od=False)
    report = {"nodes": network.node_count, "links": network.link_count,
              "od_entries": len(od.entries) if od else 0,
              "total_demand": od.total_demand if od else 0.0,
              "warnings": sorted(str(w.message) for w in caught)}
    manifest = _manifest("validate", {"links": args.links, "od": args.od},
                         {}, started)
    _write_outputs(args, emit(report, args.format), manifest)
    return 0


def _cmd_stats(args) -> int:
    started = time.perf_counter()
    network, od = _load_inputs(args, need_od=False)
    summary = structural_summary(network)
    flows = flow_consistency(network)
    congestion = node_congestion(network)
    hist = distribution_histogram(list(congestion.values()), bins=10)
    report = {
        "structure": {
            "node_count": summary.node_count,
            "directed_edge_count": summary.directed_edge_count,
            "undirected_edge_count": summary.undirected_edge_count,
            "equivalence_class_count": summary.equivalence_class_count,
            "largest_equivalence_class": summary.largest_equivalence_class,
            "bcc_count": summary.bcc_count,
            "avg_bcc_size": summary.avg_bcc_size,
            "largest_bcc": summary.largest_bcc,
        },
        "worst_flow_imbalances": [
            {"node": r.node_id, "inbound_vph": r.inbound_vph,
             "outbound_vph": r.outbound_vph, "imbalance_vph": r.imbalance_vph}
            for r in flows[:10]],
        "congestion_histogram": {"edges": list(hist.edges),
                                 "counts": list(hist.counts)},
    }
    if od is not None:
        kinds = classify_nodes(network, od)
        report["node_kinds"] = {"stub": kinds.stub_count,
                                "transit": kinds.transit_count}
    manifest = _manifest("stats", {"links": args.links, "od": args.od},
                         {}, started)
    _write_outputs(args, emit(report, args.format), manifest)
    return 0


def _cmd_centrality(args) -> int:
    started = time.perf_counter()
    network, od = _load_inputs(args, need_od=args.alpha is not None)
    if args.alpha is not None:
        if od is None:
            return _fail("--alpha requires --od")
        scores = blended_betweenness(network, od, args.alpha, args.workers)
    else:
        scores = betweenness(network, _MODES[args.mode], od, args.workers)
    if args.correlate != "skip":
        report = correlation_report(scores, network, args.correlate, od)
        payload = emit({"scores": _scores_dict(scores)["scores"],
                        "correlation": report}, "json")
    else:
        payload = emit(scores, args.format)
    manifest = _manifest(
        "centrality", {"links": args.links, "od": args.od},
        {"mode": args.mode, "alpha": args.alpha, "workers": args.workers,
         "correlate": args.correlate}, started)
    _write_outputs(args, payload, manifest)
    return 0


def _cmd_place(args) -> int:
    started = time.perf_counter()
    network, od = _load_inputs(args, need_od=True)
    mode = _MODES[args.mode]
    if args.algo == "greedy":
        steps = greedy_placement(network, od, args.k, mode)
        result = {"steps": [{"node": s.node_id,
                             "marginal_gain": s.marginal_gain,
                             "gbc_value": s.gbc_value} for s in steps],
                  "members": sorted(s.node_id for s in steps)}
        payload = emit(result, "json")
    elif args.algo in ("dfbnb", "potential"):
        result = exact_placement(network, od, args.k, args.algo,
                                 args.time_budget_s, mode)
        payload = emit(result, "json")
    elif args.algo == "random":
        mean = baseline_placement(network, od, args.k, "random",
                                  seed=args.seed, repetitions=args.reps,
                                  mode=mode)
        payload = emit({"mean_gbc": mean, "k": args.k,
                        "repetitions": args.reps, "seed": args.seed}, "json")
    elif args.algo == "bctopk":
        group = baseline_placement(network, od, args.k, "bc_topk",
                                   mode=mode, alpha=args.alpha)
        payload = emit(group, "json")
    else:
        return _fail(f"--algo {args.algo} is not a placement algorithm")
    manifest = _manifest(
        "place", {"links": args.links, "od": args.od},
        {"algo": args.algo, "k": args.k, "mode": args.mode,
         "alpha": args.alpha, "time_budget_s": args.time_budget_s,
         "seed": args.seed, "reps": args.reps}, started)
    _write_outputs(args, payload, manifest)
    return 0


def _cmd_curve(args) -> int:
    started = time.perf_counter()
    network, od = _load_inputs(args, need_od=True)
    schemes = {"greedy": "gbc_greedy", "bctopk": "bc_topk", "random": "random"}
    if args.algo not in schemes:
        return _fail(f"--algo {args.algo} is not a curve scheme")
    curve = coverage_curve(network, od, schemes[args.algo], args.k,
                           mode=_MODES[args.mode], alpha=args.alpha,
                           seed=args.seed, repetitions=args.reps)
    manifest = _manifest(
        "curve", {"links": args.links, "od": args.od},
        {"algo": args.algo, "k": args.k, "mode": args.mode,
         "alpha": args.alpha, "seed": args.seed, "reps": args.reps}, started)
    _write_outputs(args, emit(curve, args.format), manifest)
    return 0


def _cmd_fit(args) -> int:
    started = time.perf_counter()
    import csv as _csv
    with open(args.curve, newline="") as f:
        reader = _csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header][:2] != ["n", "coverage"]:
            return _fail("fit input header must start with n,coverage")
        points = [(float(r[0]), float(r[1])) for r in reader if r]
    result = gompertz_fit(points)
    manifest = _manifest("fit", {"curve": args.curve}, {}, started)
    _write_outputs(args, emit(result, "json"), manifest)
    return 0


def _cmd_optimize(args) -> int:
    started = time.perf_counter()
    if args.fit:
        with open(args.fit) as f:
            fitted = json.load(f)
        params = GompertzParams(fitted["a"], fitted["b"], fitted["c"])
    else:
        if None in (args.a, args.b, args.c):
            return _fail("provide --a --b --c or --fit file")
        params = GompertzParams(args.a, args.b, args.c)
    catalog = _parse_catalog(args.catalog) if args.catalog else ()
    scenario = ThreatScenario(args.c_attack, args.cost_base, catalog)
    sampling_model = _parse_sampling(args.sampling)
    stationary = optimal_unit_cost(params, scenario, sampling_model)
    plan = plan_fleet(params, scenario, sampling_model)
    report = {
        "plan": {"n_units": plan.n_units, "unit_cost": plan.unit_cost,
                 "sampling": plan.sampling, "omega": plan.omega,
                 "method": plan.method},
        "stationary_points": [
            {"cost": sp.cost, "gamma": sp.gamma, "branch": sp.branch,
             "classification": sp.classification} for sp in stationary],
    }
    manifest = _manifest(
        "optimize", {"catalog": args.catalog, "fit": args.fit},
        {"a": params.a, "b": params.b, "c": params.c,
         "c_attack": args.c_attack, "cost_base": args.cost_base,
         "sampling": args.sampling}, started)
    _write_outputs(args, emit(report, "json"), manifest)
    return 2 if plan.n_units == 0 else 0


def _cmd_simulate(args) -> int:
    started = time.perf_counter()
    network, od = _load_inputs(args, need_od=True)
    try:
        monitors = [int(tok) for tok in args.monitors.split(",") if tok]
    except ValueError:
        return _fail("--monitors must be a comma list of node ids")
    config = DetectionConfig(q=args.q, samples=args.reps, seed=args.seed)
    estimate = estimate_coverage(network, od, monitors, config,
                                 _MODES[args.mode])
    report = {"mean": estimate.mean, "std_error": estimate.std_error,
              "samples": estimate.samples, "seed": args.seed}
    manifest = _manifest(
        "simulate", {"links": args.links, "od": args.od},
        {"monitors": monitors, "q": args.q, "samples": args.reps,
         "seed": args.seed, "mode": args.mode}, started)
    _write_outputs(args, emit(report, "json"), manifest)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="roadmon",
                     description="Road-network monitor placement and "
                                 "fleet economics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common_io(p, od_help):
        p.add_argument("--links", required=True,
                       help="links CSV (minutes, km, vehicles/hour)")
        p.add_argument("--od", default=None, help=od_help)
        p.add_argument("--out", default=None,
                       help="output path (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json",
                       help="output serialization")

    p = sub.add_parser("validate", help="check input files")
    common_io(p, "OD CSV (trips/hour), optional")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("stats", help="structural and flow reports")
    common_io(p, "OD CSV (trips/hour), optional")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("centrality", help="betweenness scores")
    common_io(p, "OD CSV (trips/hour); required with --alpha")
    p.add_argument("--mode", choices=tuple(_MODES), default="hops",
                   help="link weight: hops, ft (free-flow min), ct "
                        "(congested min)")
    p.add_argument("--alpha", type=float, default=None,
                   help="blend fraction in [0,1] of free-flow vs congested")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel source evaluations (no output effect)")
    p.add_argument("--correlate", choices=("skip", "none", "stub_vs_transit",
                                           "road_type"), default="skip",
                   help="add a score-vs-flow correlation report")
    p.set_defaults(func=_cmd_centrality)

    p = sub.add_parser("place", help="choose monitor nodes")
    common_io(p, "OD CSV (trips/hour), required")
    p.add_argument("--k", type=int, required=True, help="group size (nodes)")
    p.add_argument("--algo", choices=("greedy", "dfbnb", "potential",
                                      "random", "bctopk"), default="greedy",
                   help="placement algorithm or baseline")
    p.add_argument("--mode", choices=tuple(_MODES), default="ct",
                   help="link weight mode")
    p.add_argument("--alpha", type=float, default=0.25,
                   help="blend fraction for bctopk")
    p.add_argument("--time-budget-s", type=float, default=3600.0,
                   help="wall-clock budget in seconds for exact search")
    p.add_argument("--seed", type=int, default=0, help="random baseline seed")
    p.add_argument("--reps", type=int, default=30,
                   help="random baseline repetitions")
    p.set_defaults(func=_cmd_place)

    p = sub.add_parser("curve", help="coverage versus group size")
    common_io(p, "OD CSV (trips/hour), required")
    p.add_argument("--k", type=int, required=True, help="largest group size")
    p.add_argument("--algo", choices=("greedy", "bctopk", "random"),
                   default="greedy", help="curve scheme")
    p.add_argument("--mode", choices=tuple(_MODES), default="ct",
                   help="link weight mode")
    p.add_argument("--alpha", type=float, default=0.25,
                   help="blend fraction for bctopk")
    p.add_argument("--seed", type=int, default=0, help="random scheme seed")
    p.add_argument("--reps", type=int, default=30,
                   help="random scheme repetitions per size")
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("fit", help="fit the saturation curve")
    p.add_argument("--curve", required=True,
                   help="CSV of n,coverage samples (fractions)")
    p.add_argument("--out", default=None, help="output path")
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("optimize", help="fleet size and unit cost")
    p.add_argument("--a", type=float, default=None,
                   help="saturation coverage in (0,1]")
    p.add_argument("--b", type=float, default=None, help="shape, < 0")
    p.add_argument("--c", type=float, default=None, help="rate, < 0")
    p.add_argument("--fit", default=None,
                   help="fit-result JSON instead of --a --b --c")
    p.add_argument("--c-attack", type=float, required=True,
                   help="expected damage of an undetected attack (currency)")
    p.add_argument("--cost-base", type=float, required=True,
                   help="most expensive unit cost (currency)")
    p.add_argument("--sampling", required=True,
                   help="power:<p> or table:<file> (CSV cost_ratio,sampling)")
    p.add_argument("--catalog", default=None,
                   help="available unit costs, CSV with header cost")
    p.add_argument("--out", default=None, help="output path")
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("simulate", help="Monte Carlo detection check")
    common_io(p, "OD CSV (trips/hour), required")
    p.add_argument("--monitors", required=True,
                   help="comma list of monitored node ids")
    p.add_argument("--q", type=float, required=True,
                   help="per-monitor detection rate in [0,1]")
    p.add_argument("--mode", choices=tuple(_MODES), default="ct",
                   help="link weight mode")
    p.add_argument("--seed", type=int, default=0, help="simulation seed")
    p.add_argument("--reps", type=int, default=100000,
                   help="trips to simulate")
    p.set_defaults(func=_cmd_simulate)
    return parser


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except (NetworkFormatError, ValueError, OSError) as err:
        return _fail(str(err))


def main() -> None:
    sys.exit(run())
