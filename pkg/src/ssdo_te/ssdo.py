"""
Sequential source-destination optimization (SSDO).

Each outer iteration collects the edges at the current MLU, queues the
demanded pairs whose candidate paths cross them (most crossings first),
and re-solves each queued pair's split ratios with BBSM while all other
pairs stay frozen.

An iteration that reduces the MLU by no more than ``epsilon0`` is
followed by a confirming iteration over the pairs near the MLU (within
``CONFIRM_EDGE_FACTOR * epsilon``). If that stalls too, every pair on a
max-utilized edge is re-solved on trial; the run converges only when none
of them alone lowers the MLU by more than ``epsilon0``. The time budget
stops the loop at any point.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .dense import (
    DEFAULT_EPSILON,
    SplitTensor,
    SubproblemView,
    UtilizationState,
    apply_sd_update,
    background_traffic,
    bbsm,
    compute_utilization,
    validate_split,
)
from .errors import InputError, NoPath
from .topology import SD, PathSet, Topology
from .traffic import DemandMatrix

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "ssdo-te/solve-report/1"
# Edges within this of the MLU count as maximally utilized.
MAX_EDGE_TOL = 1e-9
# Confirming passes widen the max-edge set to this many epsilons.
CONFIRM_EDGE_FACTOR = 10.0

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"

FORMS = ("auto", "dense", "path")

Trace = Callable[[SD, float], None]


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for one SSDO run.

    Attributes:
        epsilon: Binary-search bracket width
        epsilon0: MLU reductions up to this count as a stall, both per
            outer iteration and per trial re-solve
        time_budget: Wall-clock seconds, None for no limit
        initial: Hot-start split (SplitTensor or PathSplit); None = cold start
        static_traversal: Visit all demanded pairs in index order each
            iteration instead of the max-edge queue
        balanced: Use balanced subproblem solutions (False = greedy vertex)
        form: "dense", "path", or "auto" (path form when any candidate
            path has more than two hops)
    """
    epsilon: float = DEFAULT_EPSILON
    epsilon0: float = 1e-6
    time_budget: Optional[float] = None
    initial: object = field(default=None, compare=False, repr=False)
    static_traversal: bool = False
    balanced: bool = True
    form: str = "auto"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")
        if not self.epsilon0 > 0:
            raise InputError("epsilon0 must be positive")
        if self.time_budget is not None and not self.time_budget > 0:
            raise InputError("time budget must be positive")
        if self.form not in FORMS:
            raise InputError(f"form must be one of {FORMS}")

    @property
    def start_mode(self) -> str:
        return "cold" if self.initial is None else "hot"


@dataclass
class SolveReport:
    """Outcome of one run.

    ``mlu_trajectory`` starts with (0.0, initial MLU) and gains one
    (elapsed seconds, MLU) sample after every outer iteration.
    """
    mlu_trajectory: List[Tuple[float, float]] = field(default_factory=list)
    iterations: int = 0
    sd_updates: int = 0
    termination: str = CONVERGED
    final_mlu: float = 0.0
    initial_mlu: float = 0.0
    form: str = "dense"
    start_mode: str = "cold"
    elapsed: float = 0.0

    def to_dict(self, manifest: Optional[dict] = None) -> dict:
        data = {
            "schema": REPORT_SCHEMA,
            "form": self.form,
            "start_mode": self.start_mode,
            "initial_mlu": self.initial_mlu,
            "final_mlu": self.final_mlu,
            "iterations": self.iterations,
            "sd_updates": self.sd_updates,
            "termination": self.termination,
            "elapsed": round(self.elapsed, 3),
            "mlu_trajectory": [[round(t, 3), mlu] for t, mlu in self.mlu_trajectory],
        }
        if manifest is not None:
            data["manifest"] = manifest
        return data


class SolveClock:
    """Elapsed time against an optional budget."""

    def __init__(self, budget: Optional[float]):
        self.start = time.perf_counter()
        self.budget = budget

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def expired(self) -> bool:
        return self.budget is not None and self.elapsed() >= self.budget


def order_queue(sources: np.ndarray, dests: np.ndarray, counts: np.ndarray) -> List[SD]:
    """Pairs by descending max-edge count, ties by ascending (s, d)."""
    order = np.lexsort((dests, sources, -counts))
    return [(int(sources[i]), int(dests[i])) for i in order]


def resolve_form(paths: PathSet, form: str = "auto") -> str:
    if form == "auto":
        return "dense" if paths.is_dense else "path"
    if form == "dense" and not paths.is_dense:
        raise InputError("dense form needs a path set with at most two hops per path")
    return form


def cold_start(topology: Topology, demands: DemandMatrix, paths: PathSet) -> SplitTensor:
    """Every pair on its shortest candidate (the first in path-set order).

    Raises:
        NoPath: If a demanded pair has no candidate path
    """
    for sd in demands.demanded_pairs():
        if not paths[sd]:
            raise NoPath(sd)
    split = SplitTensor.zeros(topology.node_count)
    for s, d in paths.pairs():
        split.f[s, paths.intermediates((s, d))[0], d] = 1.0
    return split


def select_sds(
    state: UtilizationState,
    demands: DemandMatrix,
    paths: PathSet,
    tol: float = MAX_EDGE_TOL,
) -> List[SD]:
    """Queue of demanded pairs whose candidate paths cross a max-utilized edge.

    Pairs are ordered by how many distinct max-utilized edges their
    candidate paths touch, most first, ties by ascending (s, d). Edges
    within ``tol`` of the MLU count as max-utilized.
    """
    emax = state.max_edges(tol).astype(float)
    mask = paths.mid_mask
    # first hop s->k (k = d is the direct edge), then second hop k->d
    counts = np.einsum("sk,skd->sd", emax, mask) + np.einsum("skd,kd->sd", mask, emax)
    s, d = np.nonzero((counts > 0) & (demands.demand > 0))
    return order_queue(s, d, counts[s, d])


def static_queue(demands: DemandMatrix, paths: PathSet) -> List[SD]:
    return [sd for sd in demands.demanded_pairs() if paths[sd]]


def improving_update(
    state: UtilizationState,
    split: SplitTensor,
    demands: DemandMatrix,
    paths: PathSet,
    config: SolverConfig,
) -> Optional[Tuple[SD, SubproblemView, np.ndarray]]:
    """First pair whose re-solve alone lowers the MLU by more than ``epsilon0``.

    Only pairs crossing a max-utilized edge can lower the MLU, so only
    those are tried. Nothing is applied.

    Returns:
        (pair, view, ratios), or None at a single-pair plateau
    """
    target = state.mlu - config.epsilon0
    for sd in select_sds(state, demands, paths):
        view = background_traffic(state, split, demands, sd)
        ratios = bbsm(view, config.epsilon, config.balanced)
        if view.global_mlu(ratios) < target:
            return sd, view, ratios
    return None


def run(
    topology: Topology,
    demands: DemandMatrix,
    paths: PathSet,
    config: SolverConfig = SolverConfig(),
    trace: Optional[Trace] = None,
):
    """Minimize MLU by sequential per-pair re-optimization.

    Args:
        topology: Network
        demands: Demand matrix
        paths: Candidate path set
        config: Solver settings; ``config.initial`` switches to hot start
        trace: Called with (pair, MLU) after every pair update

    Returns:
        (split, SolveReport); split is a SplitTensor for the dense form and
        a PathSplit for the path form

    Raises:
        NoPath: Cold start with a demanded pair lacking candidates
        InputError: Invalid hot-start split
    """
    form = resolve_form(paths, config.form)
    if form == "path":
        from .paths import PathSplit, path_ssdo

        initial = config.initial
        if isinstance(initial, SplitTensor):
            initial = initial.to_path_split(paths)
        if initial is None:
            initial = PathSplit.cold_start(paths, demands)
        return path_ssdo(topology, demands, paths, initial, config, trace)

    if config.initial is None:
        split = cold_start(topology, demands, paths)
    elif isinstance(config.initial, SplitTensor):
        split = config.initial.copy()
    else:
        split = SplitTensor.from_path_split(config.initial, paths)
    validate_split(split, paths)

    clock = SolveClock(config.time_budget)
    state = compute_utilization(topology, demands, split, paths)
    report = SolveReport(form="dense", start_mode=config.start_mode, initial_mlu=state.mlu)
    report.mlu_trajectory.append((0.0, state.mlu))
    logger.info("Dense SSDO start (%s): %d demanded pairs, MLU %.6f",
                config.start_mode, len(demands.demanded_pairs()), state.mlu)

    def update(sd: SD, view: SubproblemView, ratios: np.ndarray) -> None:
        apply_sd_update(state, split, demands, sd, ratios, view.candidates)
        report.sd_updates += 1
        if trace is not None:
            trace(sd, state.mlu)

    opt = state.mlu
    confirming = False
    while True:
        if clock.expired():
            report.termination = BUDGET_EXHAUSTED
            break
        if config.static_traversal:
            queue = static_queue(demands, paths)
        elif confirming:
            queue = select_sds(state, demands, paths, CONFIRM_EDGE_FACTOR * config.epsilon)
        else:
            queue = select_sds(state, demands, paths)
        for sd in queue:
            if clock.expired():
                report.termination = BUDGET_EXHAUSTED
                break
            view = background_traffic(state, split, demands, sd)
            update(sd, view, bbsm(view, config.epsilon, config.balanced))
        report.iterations += 1

        done = report.termination == BUDGET_EXHAUSTED
        stalled = not done and opt - state.mlu <= config.epsilon0
        if stalled and (confirming or config.static_traversal):
            found = improving_update(state, split, demands, paths, config)
            if found is None:
                report.termination = CONVERGED
                done = True
            else:
                logger.debug("pair %s still lowers the MLU after a stalled pass", found[0])
                update(*found)
                stalled = False
        confirming = stalled

        mlu = state.mlu
        report.mlu_trajectory.append((clock.elapsed(), mlu))
        logger.debug("iteration %d: queue %d, MLU %.9f", report.iterations, len(queue), mlu)
        if done:
            break
        opt = mlu

    report.final_mlu = state.mlu
    report.elapsed = clock.elapsed()
    logger.info("Dense SSDO done: MLU %.6f after %d iterations, %d updates (%s)",
                report.final_mlu, report.iterations, report.sd_updates, report.termination)
    return split, report


@dataclass
class DualStartResult:
    """Best of a cold-start and a hot-start run."""
    split: object
    report: SolveReport
    cold_report: SolveReport
    hot_report: SolveReport
    chosen: str


def run_dual_start(
    topology: Topology,
    demands: DemandMatrix,
    paths: PathSet,
    config: SolverConfig,
) -> DualStartResult:
    """Run cold and hot start side by side and keep the lower MLU.

    Both runs share the wall-clock budget in ``config``; ties go to cold.

    Raises:
        InputError: If ``config.initial`` is missing
    """
    if config.initial is None:
        raise InputError("dual start needs a hot-start split")
    cold_config = replace(config, initial=None)
    with ThreadPoolExecutor(max_workers=2) as pool:
        cold = pool.submit(run, topology, demands, paths, cold_config)
        hot = pool.submit(run, topology, demands, paths, config)
        cold_split, cold_report = cold.result()
        hot_split, hot_report = hot.result()

    if hot_report.final_mlu < cold_report.final_mlu:
        chosen, split, report = "hot", hot_split, hot_report
    else:
        chosen, split, report = "cold", cold_split, cold_report
    logger.info("Dual start: cold %.6f, hot %.6f, keeping %s",
                cold_report.final_mlu, hot_report.final_mlu, chosen)
    return DualStartResult(split, report, cold_report, hot_report, chosen)
