"""
Command-line front end.

Usage:
    ssdo-te gen --complete 3 --capacity 2 --paths-per-pair 2 --demands manual:fig2 -o fig2/
    ssdo-te solve --topology fig2/topology.json --paths fig2/paths.json \\
        --demands fig2/demands.csv --report report.json
    ssdo-te experiment failures --topology t.json --demands d.csv --counts 1,2,4 --trials 5
    ssdo-te oracle --topology t.json --paths p.json --demands d.csv --step 0.01
    ssdo-te paths --topology t.json --paths-per-pair 4 -o paths.json

Exit codes: 0 success, 2 usage, 3 invalid input, 4 infeasible instance.
"""

import argparse
import dataclasses
import logging
import os
import sys
from typing import List, Optional

from .errors import InfeasibleError, InputError, SsdoError
from .experiment import (
    FAILURE_COLUMNS,
    PERTURB_COLUMNS,
    failure_sweep,
    perturb_sweep,
    stream_seed,
)
from .oracle import grid_global_optimum
from .reporting import (
    RunManifest,
    atomic_write_text,
    load_any_split,
    save_fixture,
    save_path_set,
    save_report,
    save_split,
    save_utilization_csv,
    write_csv,
    write_json,
)
from .ssdo import FORMS, SolverConfig, run, run_dual_start
from .topology import (
    complete_dcn_topology,
    load_graphml,
    load_path_set,
    load_topology,
    ring_deadlock_fixture,
    two_hop_path_set,
    yen_path_set,
)
from .traffic import (
    demand_series_from_gravity,
    gravity_demands,
    load_demands,
    load_series,
    manual_demands,
    series_to_json,
    validate_against,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 3
EXIT_INFEASIBLE = 4


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--form", choices=FORMS, default="auto",
                        help="Dense (<= 2-hop paths) or path form (default: auto)")
    parser.add_argument("--epsilon", type=float, default=1e-6,
                        help="Binary-search tolerance (default: 1e-6)")
    parser.add_argument("--epsilon0", type=float, default=1e-6,
                        help="Stop when an iteration gains at most this (default: 1e-6)")
    parser.add_argument("--budget-seconds", type=float,
                        help="Wall-clock budget for the solve")
    parser.add_argument("--static", action="store_true",
                        help="Visit every demanded pair in index order (ablation)")
    parser.add_argument("--greedy", action="store_true",
                        help="Greedy vertex instead of balanced subproblem solutions (ablation)")


def _solver_config(args, initial=None) -> SolverConfig:
    return SolverConfig(
        epsilon=args.epsilon,
        epsilon0=args.epsilon0,
        time_budget=args.budget_seconds,
        initial=initial,
        static_traversal=args.static,
        balanced=not args.greedy,
        form=args.form,
    )


def _config_echo(config: SolverConfig) -> dict:
    echo = {f.name: getattr(config, f.name) for f in dataclasses.fields(config) if f.name != "initial"}
    echo["start_mode"] = config.start_mode
    return echo


def _load_instance(args):
    topology = load_topology(args.topology)
    demands = load_demands(args.demands)
    validate_against(demands, topology)
    return topology, demands


def cmd_gen(args) -> int:
    """Write topology.json, paths.json and demands.csv into the output directory."""
    initial = None
    if args.ring_deadlock is not None:
        topology, paths, demands, initial = ring_deadlock_fixture(args.ring_deadlock)
    else:
        if args.complete is not None:
            topology = complete_dcn_topology(args.complete, args.capacity)
        elif args.graphml is not None:
            topology = load_graphml(args.graphml, args.default_capacity)
        else:
            topology = load_topology(args.topology)

        if args.demands is not None:
            name = args.demands.split(":", 1)[1] if args.demands.startswith("manual:") else args.demands
            demands = manual_demands(name, topology)
        else:
            demands = gravity_demands(topology, args.gravity, seed=stream_seed(args.seed, "traffic"),
                                      noise=args.noise)

        k = topology.node_count - 1 if args.all_paths else args.paths_per_pair
        if args.two_hop:
            paths = two_hop_path_set(topology, k)
        else:
            paths = yen_path_set(topology, k)

    outputs = save_fixture(args.output_dir, topology, paths, demands, initial)
    if args.series:
        volume = args.gravity if args.gravity else demands.total
        series = demand_series_from_gravity(topology, volume, args.series,
                                            seed=stream_seed(args.seed, "traffic", 1), noise=args.noise)
        outputs["series"] = atomic_write_text(os.path.join(args.output_dir, "series.json"),
                                              series_to_json(series) + "\n")

    manifest = RunManifest(
        inputs={role: path for role, path in (("topology", args.topology), ("graphml", args.graphml)) if path},
        config={key: value for key, value in vars(args).items() if key != "func"},
        outputs=outputs,
        seed=args.seed,
    )
    write_json(os.path.join(args.output_dir, "manifest.json"), manifest.to_dict())
    print(f"Generated {topology.node_count} nodes, {topology.edge_count} edges, "
          f"{len(paths)} pairs with paths, total demand {demands.total:g}")
    for role, path in outputs.items():
        print(f"  - {role}: {path}")
    return EXIT_OK


def cmd_solve(args) -> int:
    """Run SSDO and write the report, plus optional split and utilization files."""
    inputs = {"topology": args.topology, "demands": args.demands, "paths": args.paths}
    if args.hot_start:
        inputs["initial_split"] = args.hot_start
    manifest = RunManifest(inputs=inputs)
    manifest.check_inputs()

    topology, demands = _load_instance(args)
    paths = load_path_set(args.paths, topology)
    initial = load_any_split(args.hot_start, topology, paths) if args.hot_start else None
    config = _solver_config(args, initial)

    if args.dual_start:
        result = run_dual_start(topology, demands, paths, config)
        split, report = result.split, result.report
        print(f"Dual start: cold {result.cold_report.final_mlu:.6f}, "
              f"hot {result.hot_report.final_mlu:.6f}, kept {result.chosen}")
    else:
        split, report = run(topology, demands, paths, config)

    manifest.config = _config_echo(config)
    if args.split_out:
        manifest.outputs["split"] = save_split(split, topology, args.split_out)
    if args.util_csv:
        manifest.outputs["utilization"] = save_utilization_csv(topology, demands, split, args.util_csv)
    manifest.outputs["report"] = args.report
    save_report(report, args.report, manifest)

    print(f"Final MLU {report.final_mlu:.6f} (initial {report.initial_mlu:.6f}), "
          f"{report.iterations} iterations, {report.sd_updates} updates, {report.termination}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    """Run a failure or perturbation sweep and write plot-ready CSV."""
    topology = load_topology(args.topology)
    config = _solver_config(args)
    if args.sweep == "failures":
        demands = load_demands(args.demands)
        validate_against(demands, topology)
        rows = failure_sweep(topology, demands, args.paths_per_pair, args.counts, args.trials,
                             seed=args.seed, config=config, retries=args.retries, workers=args.workers)
        columns = FAILURE_COLUMNS
        skipped = sum(1 for r in rows if r["status"] != "ok")
        print(f"{len(rows)} trials, {skipped} not solved")
    else:
        if args.series:
            series = load_series(args.series)
        else:
            series = demand_series_from_gravity(topology, args.total_volume, args.snapshots,
                                                seed=stream_seed(args.seed, "traffic"), noise=args.noise)
        rows = perturb_sweep(topology, series, args.paths_per_pair, args.scales,
                             seed=args.seed, config=config, workers=args.workers)
        columns = PERTURB_COLUMNS
        print(f"{len(rows)} perturbed solves over {len(series)} snapshots")
    write_csv(args.output, rows, columns)
    print(f"Results written to {args.output}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Grid-search the global optimum of a small instance."""
    topology, demands = _load_instance(args)
    paths = load_path_set(args.paths, topology)
    result = grid_global_optimum(topology, demands, paths, args.step)
    data = result.to_dict(topology)
    if args.output:
        write_json(args.output, data)
    print(f"Grid optimum MLU {result.optimal_mlu:.6f} at step {result.grid_step:g}")
    return EXIT_OK


def cmd_paths(args) -> int:
    """Recompute a candidate path set for a topology file."""
    topology = load_topology(args.topology)
    k = topology.node_count - 1 if args.all_paths else args.paths_per_pair
    paths = two_hop_path_set(topology, k) if args.two_hop else yen_path_set(topology, k)
    save_path_set(paths, topology, args.output)
    print(f"{len(paths)} pairs, up to {k} paths each, max {paths.max_hops} hops -> {args.output}")
    return EXIT_OK


def _add_path_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("-k", "--paths-per-pair", type=int, default=4,
                       help="Candidate paths per pair (default: 4)")
    group.add_argument("--all-paths", action="store_true",
                       help="k = |V| - 1 candidates per pair")
    parser.add_argument("--two-hop", action="store_true",
                        help="Only one/two-hop candidates (dense form)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssdo-te",
        description="Solver-free MLU traffic engineering by sequential per-pair optimization",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for per-iteration detail")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate a topology, path set and demand fixture")
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--complete", type=int, metavar="N", help="Complete DCN topology K_N")
    source.add_argument("--ring-deadlock", type=int, metavar="N", help="Ring deadlock fixture")
    source.add_argument("--graphml", help="Topology Zoo GraphML file")
    source.add_argument("--topology", help="Existing topology JSON")
    gen.add_argument("--capacity", type=float, default=1.0,
                     help="Uniform capacity for --complete (default: 1.0)")
    gen.add_argument("--default-capacity", type=float, default=1.0,
                     help="Capacity for GraphML edges without one (default: 1.0)")
    _add_path_flags(gen)
    traffic = gen.add_mutually_exclusive_group()
    traffic.add_argument("--demands", help="Named demands, e.g. manual:fig2")
    traffic.add_argument("--gravity", type=float, metavar="VOLUME", help="Gravity-model total volume")
    gen.add_argument("--noise", type=float, default=0.0, help="Log-normal gravity noise (default: 0)")
    gen.add_argument("--series", type=int, metavar="SNAPSHOTS",
                     help="Also write a gravity demand series with this many snapshots")
    gen.add_argument("--seed", type=int, default=0, help="Root random seed (default: 0)")
    gen.add_argument("-o", "--output-dir", default=".", help="Output directory (default: .)")
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="Minimize MLU for one instance")
    solve.add_argument("--topology", required=True, help="Topology JSON")
    solve.add_argument("--paths", required=True, help="Path-set JSON")
    solve.add_argument("--demands", required=True, help="Demand CSV or JSON")
    _add_solver_flags(solve)
    solve.add_argument("--hot-start", metavar="SPLIT", help="Initial split JSON")
    solve.add_argument("--dual-start", action="store_true",
                       help="Run cold and hot start concurrently, keep the better")
    solve.add_argument("--report", default="report.json", help="Report JSON (default: report.json)")
    solve.add_argument("--split-out", help="Write the final split JSON here")
    solve.add_argument("--util-csv", help="Write per-edge utilization CSV here")
    solve.set_defaults(func=cmd_solve)

    experiment = sub.add_parser("experiment", help="Failure and perturbation sweeps")
    sweeps = experiment.add_subparsers(dest="sweep", required=True)
    failures = sweeps.add_parser("failures", help="Random link failures")
    failures.add_argument("--demands", required=True, help="Demand CSV or JSON")
    failures.add_argument("--counts", type=_int_list, default=[1, 2, 4],
                          help="Comma-separated failure counts (default: 1,2,4)")
    failures.add_argument("--trials", type=int, default=5, help="Trials per count (default: 5)")
    failures.add_argument("--retries", type=int, default=20,
                          help="Resampling cap for disconnecting draws (default: 20)")
    perturb = sweeps.add_parser("perturb", help="Demand perturbation")
    perturb.add_argument("--series", help="Demand series JSON")
    perturb.add_argument("--snapshots", type=int, default=5,
                         help="Gravity snapshots when no --series is given (default: 5)")
    perturb.add_argument("--total-volume", type=float, default=1000.0,
                         help="Gravity total volume (default: 1000)")
    perturb.add_argument("--noise", type=float, default=0.1,
                         help="Per-snapshot gravity noise (default: 0.1)")
    perturb.add_argument("--scales", type=_float_list, default=[2.0, 5.0, 20.0],
                         help="Comma-separated variance scales (default: 2,5,20)")
    for sweep in (failures, perturb):
        sweep.add_argument("--topology", required=True, help="Topology JSON")
        sweep.add_argument("-k", "--paths-per-pair", type=int, default=4,
                           help="Candidate paths per pair (default: 4)")
        sweep.add_argument("--seed", type=int, default=0, help="Root random seed (default: 0)")
        sweep.add_argument("--workers", type=int, default=1, help="Concurrent trials (default: 1)")
        sweep.add_argument("-o", "--output", required=True, help="Output CSV")
        _add_solver_flags(sweep)
        sweep.set_defaults(func=cmd_experiment)

    oracle = sub.add_parser("oracle", help="Grid-search optimum of a tiny instance")
    oracle.add_argument("--topology", required=True, help="Topology JSON")
    oracle.add_argument("--paths", required=True, help="Path-set JSON")
    oracle.add_argument("--demands", required=True, help="Demand CSV or JSON")
    oracle.add_argument("--step", type=float, default=0.01, help="Grid step (default: 0.01)")
    oracle.add_argument("-o", "--output", help="Write the result JSON here")
    oracle.set_defaults(func=cmd_oracle)

    paths = sub.add_parser("paths", help="Compute a candidate path set")
    paths.add_argument("--topology", required=True, help="Topology JSON")
    _add_path_flags(paths)
    paths.add_argument("-o", "--output", required=True, help="Output path-set JSON")
    paths.set_defaults(func=cmd_paths)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    if args.command == "gen" and args.ring_deadlock is None \
            and args.demands is None and args.gravity is None:
        parser.error("gen needs --demands or --gravity (except with --ring-deadlock)")
    if args.command == "solve" and args.dual_start and not args.hot_start:
        parser.error("--dual-start needs --hot-start")

    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as e:
        print(f"Error: infeasible instance: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, SsdoError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
