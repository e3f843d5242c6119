"""
Brute-force grid search over split ratios for desk-scale instances.

Everything here is evaluated from a path/edge incidence matrix built on
the spot, independently of the incremental solver state, so the results
can serve as ground truth in tests.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping

import numpy as np

from .dense import SubproblemView
from .errors import InputError, NoPath, TooLarge
from .topology import SD, PathSet, Topology
from .traffic import DemandMatrix

logger = logging.getLogger(__name__)

MAX_SUBPROBLEM_PATHS = 4
MAX_FREE_DIMENSIONS = 6
GRID_CHUNK = 1 << 16


@dataclass
class OracleResult:
    """Best grid point found.

    Attributes:
        optimal_mlu: MLU at ``argmin``
        argmin: Ratio vector (subproblem) or PathSplit (global)
        grid_step: Spacing of the ratio grid
    """
    optimal_mlu: float
    argmin: object
    grid_step: float

    def to_dict(self, topology: Topology = None) -> dict:
        argmin = self.argmin
        if hasattr(argmin, "to_dict") and topology is not None:
            argmin = argmin.to_dict(topology)
        elif isinstance(argmin, np.ndarray):
            argmin = argmin.tolist()
        return {"optimal_mlu": self.optimal_mlu, "grid_step": self.grid_step, "argmin": argmin}


def grid_divisions(step: float) -> int:
    """Number of grid intervals on [0, 1] for ``step``.

    Raises:
        InputError: If step is not positive or 1/step is not an integer
    """
    if not 0 < step <= 1:
        raise InputError("grid step must be in (0, 1]")
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise InputError(f"grid step {step!r} does not divide 1")
    return n


def simplex_grid(parts: int, n: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to n, lexicographic."""
    if parts == 1:
        return np.array([[n]])
    if parts == 2:
        first = np.arange(n + 1)
        return np.column_stack([first, n - first])
    blocks = []
    for a in range(n + 1):
        rest = simplex_grid(parts - 1, n - a)
        blocks.append(np.column_stack([np.full(len(rest), a), rest]))
    return np.vstack(blocks)


def _simplex_chunks(parts: int, n: int) -> Iterator[np.ndarray]:
    """``simplex_grid`` split by leading coordinate to bound memory."""
    if parts <= 2:
        yield simplex_grid(parts, n)
        return
    for a in range(n + 1):
        rest = simplex_grid(parts - 1, n - a)
        yield np.column_stack([np.full(len(rest), a), rest])


def _subproblem_mlu(view: SubproblemView, ratios: np.ndarray) -> np.ndarray:
    flow = view.demand * ratios
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = np.where(view.bounded1, (view.q1 + flow) / np.where(view.bounded1, view.cap1, 1.0), 0.0)
        u2 = np.where(view.bounded2, (view.q2 + flow) / np.where(view.bounded2, view.cap2, 1.0), 0.0)
    return np.maximum(np.maximum(u1, u2).max(axis=1), view.untouched_mlu)


def grid_subproblem_optimum(view: SubproblemView, step: float) -> OracleResult:
    """Exhaustive search of one pair's split ratios on a simplex grid.

    Args:
        view: Subproblem extracted by ``dense.background_traffic``
        step: Grid spacing (1/step must be an integer)

    Returns:
        OracleResult whose argmin is the lexicographically first minimizer

    Raises:
        TooLarge: If the pair has more than four candidates
    """
    if view.size > MAX_SUBPROBLEM_PATHS:
        raise TooLarge(f"subproblem has {view.size} candidates, oracle cap is {MAX_SUBPROBLEM_PATHS}")
    if view.size == 0:
        raise InputError(f"pair {view.sd} has no candidate paths")
    n = grid_divisions(step)
    best, best_ratios = np.inf, None
    for chunk in _simplex_chunks(view.size, n):
        ratios = chunk / n
        mlu = _subproblem_mlu(view, ratios)
        i = int(np.argmin(mlu))
        if mlu[i] < best:
            best, best_ratios = float(mlu[i]), ratios[i].copy()
    return OracleResult(best, best_ratios, step)


class Incidence:
    """Path-by-edge 0/1 matrix for every candidate path of a path set."""

    def __init__(self, topology: Topology, paths: PathSet):
        edges = topology.edge_list()
        edge_pos = {e: i for i, e in enumerate(edges)}
        self.columns: Dict[SD, slice] = {}
        rows: List[np.ndarray] = []
        for sd in paths.pairs():
            start = len(rows)
            for p in paths[sd]:
                row = np.zeros(len(edges))
                for hop in zip(p, p[1:]):
                    if hop not in edge_pos:
                        raise InputError(f"candidate path {p} of pair {sd} uses a missing edge")
                    row[edge_pos[hop]] = 1.0
                rows.append(row)
            self.columns[sd] = slice(start, len(rows))
        self.matrix = np.array(rows).reshape(len(rows), len(edges))
        cap = np.array([topology.capacity[e] for e in edges])
        self.bounded = np.isfinite(cap)
        self.inverse = 1.0 / cap[self.bounded]

    def mlu(self, path_flow: np.ndarray) -> np.ndarray:
        """MLU for each row of per-path flows (rows x paths)."""
        load = path_flow @ self.matrix
        if not self.bounded.any():
            return np.zeros(len(path_flow))
        return (load[:, self.bounded] * self.inverse).max(axis=1)


def incidence_mlu(
    topology: Topology,
    demands: DemandMatrix,
    paths: PathSet,
    ratios: Mapping[SD, np.ndarray],
) -> float:
    """MLU of a routing computed straight from path/edge incidence."""
    incidence = Incidence(topology, paths)
    flow = np.zeros(incidence.matrix.shape[0])
    for sd, cols in incidence.columns.items():
        flow[cols] = np.asarray(ratios[sd], dtype=float) * demands.demand[sd]
    return float(incidence.mlu(flow[None, :])[0])


def grid_global_optimum(
    topology: Topology,
    demands: DemandMatrix,
    paths: PathSet,
    step: float,
) -> OracleResult:
    """Exhaustive search over the product of every demanded pair's simplex grid.

    Pairs without demand or with a single candidate are fixed; the rest
    may span at most six free ratio dimensions in total.

    Args:
        topology: Network
        demands: Demand matrix
        paths: Candidate path set (any hop count)
        step: Grid spacing (1/step must be an integer)

    Returns:
        OracleResult whose argmin is a PathSplit

    Raises:
        NoPath: If a demanded pair has no candidate
        TooLarge: Beyond six free dimensions
    """
    from .paths import PathSplit

    n = grid_divisions(step)
    for sd in demands.demanded_pairs():
        if not paths[sd]:
            raise NoPath(sd)

    incidence = Incidence(topology, paths)
    width = incidence.matrix.shape[0]
    base = {sd: np.eye(len(paths[sd]))[0] for sd in paths.pairs()}
    free = [sd for sd in paths.pairs() if demands.demand[sd] > 0 and len(paths[sd]) > 1]
    dims = sum(len(paths[sd]) - 1 for sd in free)
    if dims > MAX_FREE_DIMENSIONS:
        raise TooLarge(f"{dims} free ratio dimensions, oracle cap is {MAX_FREE_DIMENSIONS}")

    fixed_flow = np.zeros(width)
    for sd in paths.pairs():
        if sd not in free:
            fixed_flow[incidence.columns[sd]] = base[sd] * demands.demand[sd]

    if not free:
        return OracleResult(float(incidence.mlu(fixed_flow[None, :])[0]), PathSplit(paths, base), step)

    grids = [simplex_grid(len(paths[sd]), n) / n for sd in free]
    # trailing pairs are enumerated as one vectorized block, leading ones in a loop
    split_at = len(free)
    block = 1
    while split_at > 0 and block * len(grids[split_at - 1]) <= GRID_CHUNK:
        split_at -= 1
        block *= len(grids[split_at])
    if split_at == len(free):
        split_at -= 1

    tail = np.zeros((1, width))
    for sd, grid in zip(free[split_at:], grids[split_at:]):
        flows = np.zeros((len(grid), width))
        flows[:, incidence.columns[sd]] = grid * demands.demand[sd]
        tail = np.repeat(tail, len(grid), axis=0) + np.tile(flows, (len(tail), 1))
    tail_index = np.indices([len(g) for g in grids[split_at:]]).reshape(len(grids) - split_at, -1).T

    logger.info("Grid oracle: %d free dimensions, step %g, %d points",
                dims, step, int(np.prod([len(g) for g in grids], dtype=float)))
    best, best_point = np.inf, None
    for prefix in itertools.product(*(range(len(g)) for g in grids[:split_at])):
        head = fixed_flow.copy()
        for sd, grid, i in zip(free, grids, prefix):
            head[incidence.columns[sd]] = grid[i] * demands.demand[sd]
        mlu = incidence.mlu(head + tail)
        i = int(np.argmin(mlu))
        if mlu[i] < best:
            best, best_point = float(mlu[i]), tuple(prefix) + tuple(tail_index[i])

    ratios = dict(base)
    for sd, grid, i in zip(free, grids, best_point):
        ratios[sd] = grid[i].copy()
    return OracleResult(best, PathSplit(paths, ratios), step)
