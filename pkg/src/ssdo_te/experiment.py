"""
Batch sweeps: random link failures and demand perturbation.

Each sweep solves a baseline once, then one instance per trial, and returns
plot-ready rows with the MLU normalized to the baseline. Trials get their
own random streams derived from the root seed, so results do not depend on
how many workers run them.
"""

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import InfeasibleError
from .ssdo import SolverConfig, run
from .topology import FailureScenario, Topology, apply_failures, random_failure_scenario, yen_path_set
from .traffic import DemandMatrix, DemandSeries, perturb_series

logger = logging.getLogger(__name__)

FAILURE_COLUMNS = ("count", "trial", "status", "removed_edges", "mlu", "normalized_mlu",
                   "iterations", "termination")
PERTURB_COLUMNS = ("scale", "snapshot", "mlu", "baseline_mlu", "normalized_mlu")


def named_seed(seed: int, name: str, *extra: int) -> np.random.SeedSequence:
    """Independent substream of ``seed`` labelled ``name`` (e.g. "traffic")."""
    return np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), *extra])


def named_rng(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(named_seed(seed, name, *extra))


def stream_seed(seed: int, name: str, *extra: int) -> int:
    return int(named_seed(seed, name, *extra).generate_state(1)[0])


def _normalize(mlu: float, baseline: float) -> float:
    if baseline > 0:
        return mlu / baseline
    return 1.0 if mlu == 0 else float("inf")


def _map(fn: Callable, tasks: Sequence, workers: int) -> List:
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


@dataclass
class FailureTrial:
    count: int
    trial: int
    scenario: Optional[FailureScenario]
    mlu: float = float("nan")
    iterations: int = 0
    termination: str = ""
    status: str = "ok"


def solve_mlu(topology: Topology, demands: DemandMatrix, k: int, config: SolverConfig):
    """Cold-start solve on k-shortest candidates of the demanded pairs."""
    paths = yen_path_set(topology, k, demands.demanded_pairs())
    _, report = run(topology, demands, paths, config)
    return report


def failure_sweep(
    topology: Topology,
    demands: DemandMatrix,
    k: int,
    counts: Sequence[int],
    trials: int,
    seed: int = 0,
    config: SolverConfig = SolverConfig(),
    retries: int = 20,
    workers: int = 1,
) -> List[dict]:
    """MLU after removing ``count`` random directed edges, per trial.

    Path sets are recomputed on each failed topology. Draws that disconnect
    a demanded pair are resampled up to ``retries`` times; trials that never
    find a connected draw are reported with status "skipped".

    Args:
        topology: Intact network
        demands: Demand matrix
        k: Candidate paths per pair
        counts: Numbers of edges to fail
        trials: Trials per count
        seed: Root seed; each (count, trial) uses its own "failures" substream
        config: Solver settings (hot start is ignored)
        retries: Resampling cap per trial
        workers: Concurrent trials

    Returns:
        Rows with FAILURE_COLUMNS keys, in (count, trial) order
    """
    config = replace(config, initial=None)
    baseline = solve_mlu(topology, demands, k, config)
    logger.info("Failure sweep baseline MLU %.6f", baseline.final_mlu)

    def one(task) -> FailureTrial:
        count, trial = task
        if count == 0:
            return FailureTrial(count, trial, FailureScenario(), baseline.final_mlu,
                                baseline.iterations, baseline.termination)
        rng = named_rng(seed, "failures", count, trial)
        scenario = random_failure_scenario(topology, count, demands, rng, retries)
        if scenario is None:
            logger.info("count %d trial %d skipped: no connected draw in %d tries", count, trial, retries)
            return FailureTrial(count, trial, None, status="skipped")
        failed = apply_failures(topology, scenario, demands)
        try:
            report = solve_mlu(failed, demands, k, config)
        except InfeasibleError as e:
            logger.warning("count %d trial %d infeasible: %s", count, trial, e)
            return FailureTrial(count, trial, scenario, status="infeasible")
        logger.info("count %d trial %d: MLU %.6f", count, trial, report.final_mlu)
        return FailureTrial(count, trial, scenario, report.final_mlu, report.iterations, report.termination)

    tasks = [(c, t) for c in counts for t in range(trials)]
    rows = []
    for result in _map(one, tasks, workers):
        removed = ""
        if result.scenario is not None:
            removed = ";".join(f"{topology.names[i]}->{topology.names[j]}"
                               for i, j in result.scenario.removed_edges)
        ok = result.status == "ok"
        rows.append({
            "count": result.count,
            "trial": result.trial,
            "status": result.status,
            "removed_edges": removed,
            "mlu": result.mlu if ok else "",
            "normalized_mlu": _normalize(result.mlu, baseline.final_mlu) if ok else "",
            "iterations": result.iterations if ok else "",
            "termination": result.termination,
        })
    return rows


def perturb_sweep(
    topology: Topology,
    series: DemandSeries,
    k: int,
    scales: Sequence[float],
    seed: int = 0,
    config: SolverConfig = SolverConfig(),
    workers: int = 1,
) -> List[dict]:
    """MLU on perturbed snapshots relative to the unperturbed ones.

    Every snapshot is solved once as is (the baseline) and once per scale
    after ``perturb_series`` noise drawn from the "perturb" substream. A
    scale of 0 leaves the series unchanged.

    Returns:
        Rows with PERTURB_COLUMNS keys, in (scale, snapshot) order
    """
    if not series.snapshots:
        return []
    config = replace(config, initial=None)
    paths = yen_path_set(topology, k)

    def solve(matrix: DemandMatrix) -> float:
        return run(topology, matrix, paths, config)[1].final_mlu

    baseline = _map(solve, series.snapshots, workers)
    rows = []
    for pos, scale in enumerate(scales):
        if scale > 0:
            perturbed = perturb_series(series, scale, stream_seed(seed, "perturb", pos))
            mlus = _map(solve, perturbed.snapshots, workers)
        else:
            mlus = list(baseline)
        for t, (mlu, base) in enumerate(zip(mlus, baseline)):
            rows.append({
                "scale": scale,
                "snapshot": t,
                "mlu": mlu,
                "baseline_mlu": base,
                "normalized_mlu": _normalize(mlu, base),
            })
        logger.info("scale %g: mean normalized MLU %.4f", scale,
                    float(np.mean([r["normalized_mlu"] for r in rows[-len(mlus):]])))
    return rows
