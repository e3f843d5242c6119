"""
Path-based formulation for topologies whose candidate paths exceed two hops.

Split ratios are kept per pair as a vector over its candidate paths, edge
loads as a flat vector over the topology's edges. PB-BBSM re-solves one
pair against the residual utilization left by everybody else.
"""

import json
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .dense import DEFAULT_EPSILON, PREDICATE_SLACK, SPLIT_SUM_TOL, greedy_fill, normalize_bounds
from .errors import InputError, NeverFeasible, NoPath, ZeroDemand
from .ssdo import (
    BUDGET_EXHAUSTED,
    CONFIRM_EDGE_FACTOR,
    CONVERGED,
    MAX_EDGE_TOL,
    SolveReport,
    SolverConfig,
    Trace,
    SolveClock,
    order_queue,
    static_queue,
)
from .topology import SD, PathSet, Topology
from .traffic import DemandMatrix

logger = logging.getLogger(__name__)


@dataclass
class PathSplit:
    """Per-pair split ratios over candidate paths.

    Attributes:
        paths: The path set the ratios refer to
        ratios: Mapping pair -> ratios aligned with ``paths[pair]``
    """
    paths: PathSet
    ratios: Dict[SD, np.ndarray]

    def __post_init__(self):
        self.ratios = {sd: np.asarray(r, dtype=float) for sd, r in self.ratios.items()}

    @classmethod
    def cold_start(cls, paths: PathSet, demands: DemandMatrix) -> "PathSplit":
        """All traffic of every pair on its first (shortest) candidate.

        Raises:
            NoPath: If a demanded pair has no candidate path
        """
        for sd in demands.demanded_pairs():
            if not paths[sd]:
                raise NoPath(sd)
        ratios = {}
        for sd in paths.pairs():
            r = np.zeros(len(paths[sd]))
            r[0] = 1.0
            ratios[sd] = r
        return cls(paths, ratios)

    def copy(self) -> "PathSplit":
        return PathSplit(self.paths, {sd: r.copy() for sd, r in self.ratios.items()})

    def validate(self, tol: float = SPLIT_SUM_TOL) -> None:
        """Nonnegative ratios summing to 1 for every pair with candidates.

        Raises:
            InputError: On the first violation
        """
        for sd in self.paths.pairs():
            r = self.ratios.get(sd)
            if r is None or len(r) != len(self.paths[sd]):
                raise InputError(f"pair {sd} needs one ratio per candidate path")
            if (r < -tol).any():
                raise InputError(f"pair {sd} has negative split ratios")
            if abs(r.sum() - 1.0) > tol:
                raise InputError(f"split ratios of pair {sd} sum to {r.sum()!r}, not 1")

    def to_dict(self, topology: Topology) -> dict:
        names = topology.names
        return {
            "pairs": [
                {
                    "src": names[s],
                    "dst": names[d],
                    "paths": [
                        {"path": [names[v] for v in p], "ratio": float(r)}
                        for p, r in zip(self.paths[(s, d)], self.ratios[(s, d)])
                    ],
                }
                for s, d in self.paths.pairs()
            ]
        }

    @classmethod
    def from_dict(cls, data: Mapping, topology: Topology, paths: PathSet,
                  source: Optional[str] = None) -> "PathSplit":
        """Read ratios by matching each listed path against ``paths``.

        Paths missing from the file get ratio 0.
        """
        ratios = {sd: np.zeros(len(paths[sd])) for sd in paths.pairs()}
        try:
            for entry in data["pairs"]:
                sd = (topology.index(entry["src"]), topology.index(entry["dst"]))
                position = {p: i for i, p in enumerate(paths[sd])}
                for item in entry["paths"]:
                    p = tuple(topology.index(v) for v in item["path"])
                    if p not in position:
                        raise InputError(f"path {item['path']} is not a candidate of pair {sd}")
                    ratios[sd][position[p]] = float(item["ratio"])
        except InputError as e:
            raise InputError(str(e), path=source)
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed path split: {e}", path=source)
        split = cls(paths, ratios)
        try:
            split.validate()
        except InputError as e:
            raise InputError(str(e), path=source)
        return split


def load_path_split(filename: str, topology: Topology, paths: PathSet) -> PathSplit:
    try:
        with open(filename) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Split file '{filename}' not found")
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON: {e.msg}", path=filename, line=e.lineno)
    return PathSplit.from_dict(data, topology, paths, source=filename)


class PathIndex:
    """Edge ids and per-pair incidence for a path set on a topology.

    For every pair: its distinct edges (``local``), and the concatenated
    positions into ``local`` of each path's edges with ``offsets`` marking
    where each path starts, ready for ``np.minimum.reduceat``.
    """

    def __init__(self, topology: Topology, paths: PathSet):
        self.topology = topology
        self.paths = paths
        self.edges = topology.edge_list()
        self.edge_id = -np.ones((topology.node_count, topology.node_count), dtype=int)
        for e, (i, j) in enumerate(self.edges):
            self.edge_id[i, j] = e
        cap = np.array([topology.capacity[i, j] for i, j in self.edges])
        self.bounded = np.isfinite(cap)
        self.capacity = np.where(self.bounded, cap, 0.0)
        self.inverse = np.where(self.bounded, 1.0 / np.where(self.bounded, cap, 1.0), 0.0)

        self.local: Dict[SD, np.ndarray] = {}
        self.members: Dict[SD, np.ndarray] = {}
        self.offsets: Dict[SD, np.ndarray] = {}
        self.shared: Dict[SD, bool] = {}
        for sd in paths.pairs():
            path_edges = []
            for p in paths[sd]:
                ids = self.edge_id[list(p[:-1]), list(p[1:])]
                if (ids < 0).any():
                    raise InputError(f"candidate path {p} of pair {sd} uses a missing edge")
                path_edges.append(ids)
            flat = np.concatenate(path_edges)
            local, members = np.unique(flat, return_inverse=True)
            self.local[sd] = local
            self.members[sd] = members
            self.offsets[sd] = np.cumsum([0] + [len(ids) for ids in path_edges[:-1]])
            self.shared[sd] = len(local) < len(flat)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def own_load(self, sd: SD, ratios: np.ndarray, demand: float) -> np.ndarray:
        """The pair's load on each of its ``local`` edges."""
        lengths = np.diff(np.append(self.offsets[sd], len(self.members[sd])))
        per_member = np.repeat(ratios * demand, lengths)
        return np.bincount(self.members[sd], weights=per_member, minlength=len(self.local[sd]))

    @cached_property
    def edge_pairs(self):
        """CSR map edge id -> pairs whose candidates use it: (indptr, pair ids, pairs)."""
        pairs = self.paths.pairs()
        edge_ids = [self.local[sd] for sd in pairs]
        owners = np.repeat(np.arange(len(pairs)), [len(e) for e in edge_ids])
        flat = np.concatenate(edge_ids) if edge_ids else np.empty(0, dtype=int)
        order = np.argsort(flat, kind="stable")
        indptr = np.searchsorted(flat[order], np.arange(self.edge_count + 1))
        return indptr, owners[order], np.array(pairs, dtype=int).reshape(-1, 2)


@dataclass
class EdgeLoadState:
    """Loads and utilizations per edge id for a PathSplit.

    Attributes:
        index: Edge/path incidence
        split: Split ratios, updated in place by ``apply_path_update``
        load: Absolute traffic per edge
        util: load / capacity, 0 on unbounded edges
    """
    index: PathIndex
    split: PathSplit
    load: np.ndarray
    util: np.ndarray

    @property
    def mlu(self) -> float:
        return float(self.util.max()) if self.util.size else 0.0

    def utilization_matrix(self) -> np.ndarray:
        n = self.index.topology.node_count
        matrix = np.zeros((n, n))
        for e, (i, j) in enumerate(self.index.edges):
            matrix[i, j] = self.util[e]
        return matrix


def path_utilization(
    topology: Topology,
    demands: DemandMatrix,
    split: PathSplit,
    index: Optional[PathIndex] = None,
) -> EdgeLoadState:
    """From-scratch per-edge loads and utilizations for a path split.

    Raises:
        InputError: If a candidate path uses an edge missing from ``topology``
    """
    if index is None:
        index = PathIndex(topology, split.paths)
    load = np.zeros(index.edge_count)
    for sd in split.paths.pairs():
        D = float(demands.demand[sd])
        if D > 0:
            load[index.local[sd]] += index.own_load(sd, split.ratios[sd], D)
    return EdgeLoadState(index, split, load, load * index.inverse)


def pb_bbsm(
    state: EdgeLoadState,
    sd: SD,
    demands: DemandMatrix,
    paths: Optional[PathSet] = None,
    epsilon: float = DEFAULT_EPSILON,
    balanced: bool = True,
) -> np.ndarray:
    """Path-based balanced binary search for one pair.

    With R[e] the utilization on the pair's edges without its own traffic,
    each path's bound at target u is min_e (u - R[e]) * c_e / D_sd, clipped
    at 0. The search narrows u over [0, max U] while the bounds sum to at
    least 1 and returns the bounds at the upper end, normalized. When two
    candidates share an edge and the normalized result would raise the
    MLU, the current ratios are returned instead.

    Args:
        state: Live edge-load state (not modified)
        sd: Pair to re-solve
        demands: Demand matrix
        paths: Candidate path set (defaults to the state's)
        epsilon: Bracket width at which the search stops
        balanced: Balanced solution (default) or greedy vertex

    Returns:
        Ratios aligned with the pair's candidate paths

    Raises:
        ZeroDemand: If the pair has no demand
        NeverFeasible: If even max U is infeasible
    """
    paths = paths or state.split.paths
    D = float(demands.demand[sd])
    if D <= 0:
        raise ZeroDemand(f"pair {sd} has zero demand")
    current = state.split.ratios[sd]
    if len(paths[sd]) == 1:
        return np.ones(1)

    index = state.index
    local = index.local[sd]
    members = index.members[sd]
    offsets = index.offsets[sd]
    bounded = index.bounded[local]
    cap = index.capacity[local]

    free = np.logical_and.reduceat(~bounded[members], offsets)
    if free.any():
        return free / free.sum()

    own = index.own_load(sd, current, D)
    background = state.load[local] - own

    def upper(u: float) -> np.ndarray:
        residual = np.where(bounded, u * cap - background, np.inf)
        return np.maximum(np.minimum.reduceat(residual[members], offsets), 0.0) / D

    lo, hi = 0.0, state.mlu
    if upper(hi).sum() < 1.0 - 1e-9:
        raise NeverFeasible(f"pair {sd}: no feasible split at the current MLU {hi!r}")
    while hi - lo > epsilon:
        mid = 0.5 * (lo + hi)
        if upper(mid).sum() >= 1.0 - PREDICATE_SLACK:
            hi = mid
        else:
            lo = mid

    if balanced:
        ratios = normalize_bounds(upper(hi))
    else:
        u_lb = max(_untouched_mlu(state, local), float((background * index.inverse[local]).max()))
        u_star = max(hi, min(u_lb, state.mlu))
        ratios = greedy_fill(upper(u_star))

    if index.shared[sd]:
        new_load = background + index.own_load(sd, ratios, D)
        peak = float((new_load * index.inverse[local]).max())
        if peak > state.mlu + epsilon:
            logger.debug("pair %s: shared-edge update rejected (%.6f > %.6f)", sd, peak, state.mlu)
            return current.copy()
    return ratios


def _untouched_mlu(state: EdgeLoadState, local: np.ndarray) -> float:
    saved = state.util[local].copy()
    state.util[local] = 0.0
    value = float(state.util.max())
    state.util[local] = saved
    return value


def path_global_mlu(state: EdgeLoadState, demands: DemandMatrix, sd: SD, ratios: np.ndarray) -> float:
    """Network MLU if ``sd`` switched to ``ratios``; the state is left as is."""
    index = state.index
    D = float(demands.demand[sd])
    local = index.local[sd]
    load = state.load[local] + index.own_load(sd, ratios, D) - index.own_load(sd, state.split.ratios[sd], D)
    return max(_untouched_mlu(state, local), float((load * index.inverse[local]).max()))


def apply_path_update(state: EdgeLoadState, demands: DemandMatrix, sd: SD, ratios: np.ndarray) -> None:
    """Install new ratios for one pair and patch its edges' loads."""
    index = state.index
    D = float(demands.demand[sd])
    local = index.local[sd]
    delta = index.own_load(sd, ratios, D) - index.own_load(sd, state.split.ratios[sd], D)
    state.load[local] += delta
    state.util[local] = state.load[local] * index.inverse[local]
    state.split.ratios[sd] = np.asarray(ratios, dtype=float).copy()


def select_path_sds(state: EdgeLoadState, demands: DemandMatrix, tol: float = MAX_EDGE_TOL) -> List[SD]:
    """Path-form counterpart of ``ssdo.select_sds`` (same ordering rule)."""
    indptr, owners, pairs = state.index.edge_pairs
    emax = np.flatnonzero(state.util >= state.mlu - tol)
    if emax.size == 0 or pairs.size == 0:
        return []
    hits = np.concatenate([owners[indptr[e]:indptr[e + 1]] for e in emax])
    counts = np.bincount(hits, minlength=len(pairs))
    demanded = demands.demand[pairs[:, 0], pairs[:, 1]] > 0
    chosen = np.flatnonzero((counts > 0) & demanded)
    return order_queue(pairs[chosen, 0], pairs[chosen, 1], counts[chosen])


def improving_path_update(
    state: EdgeLoadState,
    demands: DemandMatrix,
    paths: PathSet,
    config: SolverConfig,
) -> Optional[Tuple[SD, np.ndarray]]:
    """First pair on a max-utilized edge whose PB-BBSM re-solve alone
    lowers the MLU by more than ``epsilon0``; nothing is applied."""
    target = state.mlu - config.epsilon0
    for sd in select_path_sds(state, demands):
        ratios = pb_bbsm(state, sd, demands, paths, config.epsilon, config.balanced)
        if path_global_mlu(state, demands, sd, ratios) < target:
            return sd, ratios
    return None


def path_ssdo(
    topology: Topology,
    demands: DemandMatrix,
    paths: PathSet,
    initial: PathSplit,
    config: SolverConfig = SolverConfig(),
    trace: Optional[Trace] = None,
):
    """SSDO over path-form split ratios.

    Same loop as the dense form: queue pairs crossing the max-utilized
    edges and re-solve each with PB-BBSM. A stalled iteration gets a
    confirming pass, then a trial re-solve of every pair on a max edge;
    the run converges once none of those gains more than ``epsilon0``.

    Returns:
        (PathSplit, SolveReport)

    Raises:
        InputError: If ``initial`` is not a valid split over ``paths``
    """
    split = initial.copy()
    split.validate()
    clock = SolveClock(config.time_budget)
    index = PathIndex(topology, paths)
    state = path_utilization(topology, demands, split, index)

    report = SolveReport(form="path", start_mode=config.start_mode, initial_mlu=state.mlu)
    report.mlu_trajectory.append((0.0, state.mlu))
    logger.info("Path SSDO start (%s): %d pairs, MLU %.6f", config.start_mode, len(paths), state.mlu)

    def update(sd: SD, ratios: np.ndarray) -> None:
        apply_path_update(state, demands, sd, ratios)
        report.sd_updates += 1
        if trace is not None:
            trace(sd, state.mlu)

    u_prev = state.mlu
    confirming = False
    while True:
        if clock.expired():
            report.termination = BUDGET_EXHAUSTED
            break
        if config.static_traversal:
            queue = static_queue(demands, paths)
        elif confirming:
            queue = select_path_sds(state, demands, CONFIRM_EDGE_FACTOR * config.epsilon)
        else:
            queue = select_path_sds(state, demands)
        for sd in queue:
            if clock.expired():
                report.termination = BUDGET_EXHAUSTED
                break
            update(sd, pb_bbsm(state, sd, demands, paths, config.epsilon, config.balanced))
        report.iterations += 1

        done = report.termination == BUDGET_EXHAUSTED
        stalled = not done and u_prev - state.mlu <= config.epsilon0
        if stalled and (confirming or config.static_traversal):
            found = improving_path_update(state, demands, paths, config)
            if found is None:
                report.termination = CONVERGED
                done = True
            else:
                logger.debug("pair %s still lowers the MLU after a stalled pass", found[0])
                update(*found)
                stalled = False
        confirming = stalled

        u = state.mlu
        report.mlu_trajectory.append((clock.elapsed(), u))
        logger.debug("iteration %d: queue %d, MLU %.9f", report.iterations, len(queue), u)
        if done:
            break
        u_prev = u

    report.final_mlu = state.mlu
    report.elapsed = clock.elapsed()
    logger.info("Path SSDO done: MLU %.6f after %d iterations, %d updates (%s)",
                report.final_mlu, report.iterations, report.sd_updates, report.termination)
    return split, report
