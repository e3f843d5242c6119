"""
Dense one/two-hop traffic-engineering state and the balanced binary search.

The split ratios of every pair live in a |V|x|V|x|V| tensor ``f[s, k, d]``:
the share of demand (s, d) sent s -> k -> d, with k = d meaning the direct
edge. Edge loads are kept in a |V|x|V| matrix and updated incrementally, so
re-optimizing one pair only touches the edges of its candidate paths.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import CapacityZeroWithLoad, InputError, NeverFeasible, ZeroDemand
from .topology import SD, PathSet, Topology
from .traffic import DemandMatrix

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
# Ratios at or below this are "unused" when classifying balanced solutions.
ZERO_RATIO_TOL = 1e-9
# Slack on the feasibility predicate sum(f) >= 1.
PREDICATE_SLACK = 1e-12
SPLIT_SUM_TOL = 1e-9


@dataclass
class SplitTensor:
    """Split ratios f[s, k, d] for one/two-hop path sets."""
    f: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "SplitTensor":
        return cls(np.zeros((n, n, n)))

    @property
    def node_count(self) -> int:
        return self.f.shape[0]

    def ratios(self, sd: SD, candidates: np.ndarray) -> np.ndarray:
        s, d = sd
        return self.f[s, candidates, d].copy()

    def copy(self) -> "SplitTensor":
        return SplitTensor(self.f.copy())

    def to_path_split(self, paths: PathSet):
        """Same routing in path form (ratios aligned with ``paths[sd]``)."""
        from .paths import PathSplit

        ratios = {sd: self.f[sd[0], paths.intermediates(sd), sd[1]].copy() for sd in paths.pairs()}
        return PathSplit(paths, ratios)

    @classmethod
    def from_path_split(cls, split, paths: PathSet) -> "SplitTensor":
        """Convert a PathSplit over a one/two-hop path set."""
        tensor = cls.zeros(paths.node_count)
        for sd in paths.pairs():
            tensor.f[sd[0], paths.intermediates(sd), sd[1]] = split.ratios[sd]
        return tensor

    def to_records(self, topology: Topology, tol: float = ZERO_RATIO_TOL) -> List[dict]:
        s_idx, k_idx, d_idx = np.nonzero(self.f > tol)
        names = topology.names
        return [
            {"src": names[s], "mid": names[k], "dst": names[d], "ratio": float(self.f[s, k, d])}
            for s, k, d in zip(s_idx, k_idx, d_idx)
        ]

    @classmethod
    def from_records(cls, records, topology: Topology, source: Optional[str] = None) -> "SplitTensor":
        tensor = cls.zeros(topology.node_count)
        try:
            for rec in records:
                s, k, d = (topology.index(rec[key]) for key in ("src", "mid", "dst"))
                tensor.f[s, k, d] = float(rec["ratio"])
        except InputError as e:
            raise InputError(str(e), path=source)
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"malformed split record: {e}", path=source)
        return tensor


def validate_split(split: SplitTensor, paths: PathSet, tol: float = SPLIT_SUM_TOL) -> None:
    """Check nonnegativity, support on the path set and per-pair normalization.

    Raises:
        InputError: On the first violated invariant
    """
    f = split.f
    n = paths.node_count
    if f.shape != (n, n, n):
        raise InputError(f"split tensor must be {n}x{n}x{n}, got {f.shape}")
    if (f < -tol).any():
        raise InputError("split ratios must be nonnegative")
    outside = np.abs(f[~paths.mid_mask])
    if outside.size and outside.max() > tol:
        raise InputError("split ratios must be zero outside the candidate path set")
    sums = f.sum(axis=1)
    for s, d in paths.pairs():
        if abs(sums[s, d] - 1.0) > tol:
            raise InputError(f"split ratios of pair {(s, d)} sum to {sums[s, d]!r}, not 1")


def load_split(filename: str, topology: Topology, paths: PathSet) -> SplitTensor:
    """Load a sparse split-tensor JSON file and validate it."""
    try:
        with open(filename) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Split file '{filename}' not found")
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON: {e.msg}", path=filename, line=e.lineno)
    records = data.get("ratios", data) if isinstance(data, dict) else data
    tensor = SplitTensor.from_records(records, topology, source=filename)
    try:
        validate_split(tensor, paths)
    except InputError as e:
        raise InputError(str(e), path=filename)
    return tensor


@dataclass
class UtilizationState:
    """Per-edge load and utilization for a dense split tensor.

    Attributes:
        topology: Network the loads refer to
        load: |V|x|V| traffic per edge
        util: |V|x|V| load / capacity, 0 on unbounded or absent edges
        paths: Candidate path set, needed for subproblem views
    """
    topology: Topology
    load: np.ndarray
    util: np.ndarray
    paths: Optional[PathSet] = None

    @property
    def mlu(self) -> float:
        return float(self.util.max()) if self.util.size else 0.0

    def max_edges(self, tol: float = 1e-9) -> np.ndarray:
        """Boolean mask of edges within ``tol`` of the MLU."""
        return self.topology.present & (self.util >= self.mlu - tol)

    def snapshot(self) -> "UtilizationState":
        return UtilizationState(self.topology, self.load.copy(), self.util.copy(), self.paths)


def edge_loads(split: SplitTensor, demands: DemandMatrix) -> np.ndarray:
    """Load on every edge, computed from scratch."""
    weighted = split.f * demands.demand[:, None, :]
    load = weighted.sum(axis=2)
    via = weighted.sum(axis=0)
    np.fill_diagonal(via, 0.0)
    load += via
    np.fill_diagonal(load, 0.0)
    return load


def compute_utilization(
    topology: Topology,
    demands: DemandMatrix,
    split: SplitTensor,
    paths: Optional[PathSet] = None,
) -> UtilizationState:
    """From-scratch loads and utilizations.

    Args:
        topology: Network with capacities
        demands: Demand matrix
        split: Split ratios satisfying the tensor invariants
        paths: Optional path set carried along for subproblem views

    Returns:
        UtilizationState whose ``mlu`` is the max utilization over finite edges

    Raises:
        CapacityZeroWithLoad: If traffic lands on an absent or zero-capacity edge
    """
    load = edge_loads(split, demands)
    stray = (~topology.present) & (load > 0)
    if stray.any():
        i, j = (int(v) for v in np.argwhere(stray)[0])
        raise CapacityZeroWithLoad(
            f"edge {topology.names[i]}->{topology.names[j]} has no capacity "
            f"but carries {load[i, j]!r}")
    util = load * topology.inverse_capacity
    return UtilizationState(topology, load, util, paths)


@dataclass
class SubproblemView:
    """Everything the one-pair subproblem needs, frozen at extraction time.

    Candidate k uses edge (s, k) and, unless k = d, edge (k, d). Arrays are
    aligned with ``candidates``; unbounded edges are flagged in
    ``bounded1``/``bounded2`` and carry capacity 0 in ``cap1``/``cap2``.
    """
    sd: SD
    demand: float
    candidates: np.ndarray
    current: np.ndarray
    cap1: np.ndarray
    q1: np.ndarray
    bounded1: np.ndarray
    cap2: np.ndarray
    q2: np.ndarray
    bounded2: np.ndarray
    untouched_mlu: float
    u_ub: float
    u_lb: float = field(default=0.0)

    @property
    def size(self) -> int:
        return len(self.candidates)

    def path_utilization(self, ratios: np.ndarray) -> np.ndarray:
        """Max edge utilization of each candidate path under ``ratios``."""
        flow = self.demand * np.asarray(ratios, dtype=float)
        u1 = np.where(self.bounded1, (self.q1 + flow) * _inverse(self.cap1), 0.0)
        u2 = np.where(self.bounded2, (self.q2 + flow) * _inverse(self.cap2), 0.0)
        return np.maximum(u1, u2)

    def global_mlu(self, ratios: np.ndarray) -> float:
        """Network MLU if this pair switched to ``ratios``."""
        return max(self.untouched_mlu, float(self.path_utilization(ratios).max()))


def _inverse(cap: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(cap > 0, 1.0 / np.where(cap > 0, cap, 1.0), 0.0)


def background_traffic(
    state: UtilizationState,
    split: SplitTensor,
    demands: DemandMatrix,
    sd: SD,
) -> SubproblemView:
    """Background load Q on the edges pair ``sd`` can use.

    Q is the current load minus the pair's own contribution, read from the
    incrementally maintained state, so the cost is proportional to |K_sd|.

    Raises:
        InputError: If the state carries no path set
    """
    if state.paths is None:
        raise InputError("utilization state has no path set attached")
    s, d = sd
    ks = state.paths.intermediates(sd)
    cap = state.topology.capacity
    D = float(demands.demand[s, d])
    current = split.f[s, ks, d].copy()
    own = current * D

    second = ks != d
    k2 = np.where(second, ks, s)

    c1 = cap[s, ks]
    c2 = np.where(second, cap[k2, d], np.inf)
    bounded1 = np.isfinite(c1)
    bounded2 = np.isfinite(c2)
    q1 = state.load[s, ks] - own
    q2 = np.where(second, state.load[k2, d] - own, 0.0)

    u_ub = state.mlu
    util = state.util
    saved1 = util[s, ks].copy()
    saved2 = util[k2[second], d].copy()
    util[s, ks] = 0.0
    util[k2[second], d] = 0.0
    untouched = float(util.max()) if util.size else 0.0
    util[s, ks] = saved1
    util[k2[second], d] = saved2

    view = SubproblemView(
        sd=sd,
        demand=D,
        candidates=ks,
        current=current,
        cap1=np.where(bounded1, c1, 0.0),
        q1=q1,
        bounded1=bounded1,
        cap2=np.where(bounded2, c2, 0.0),
        q2=q2,
        bounded2=bounded2,
        untouched_mlu=untouched,
        u_ub=u_ub,
    )
    view.u_lb = search_bounds(view)[0]
    return view


def _residual(view: SubproblemView, u: float) -> np.ndarray:
    t1 = np.where(view.bounded1, u * view.cap1 - view.q1, np.inf)
    t2 = np.where(view.bounded2, u * view.cap2 - view.q2, np.inf)
    return np.minimum(t1, t2)


def residual_ratios(view: SubproblemView, u0: float) -> np.ndarray:
    """Upper bounds f-bar on each candidate's ratio at target MLU ``u0``.

    T_skd = min(u0*c_sk - Q_sk, u0*c_kd - Q_kd) (single edge when k = d,
    unbounded edges contribute +inf) and f-bar = T / D_sd.

    Raises:
        ZeroDemand: If the pair has no demand
    """
    if view.demand <= 0:
        raise ZeroDemand(f"pair {view.sd} has zero demand")
    return _residual(view, u0) / view.demand


def balanced_ratios(fbar: np.ndarray) -> np.ndarray:
    """Componentwise max(0, f-bar)."""
    return np.maximum(fbar, 0.0)


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    ratios: Optional[np.ndarray] = None


def normalize_bounds(upper: np.ndarray) -> np.ndarray:
    unbounded = np.isinf(upper)
    if unbounded.any():
        return unbounded / unbounded.sum()
    return upper / upper.sum()


def feasibility_check(fbar: np.ndarray) -> Feasibility:
    """Feasible iff sum(f-bar) >= 1 and min(f-bar) >= 0; then f-bar normalized.

    Example:
        >>> feasibility_check(np.array([0.8, 0.3])).ratios
        array([0.72727273, 0.27272727])
    """
    fbar = np.asarray(fbar, dtype=float)
    if fbar.size == 0 or fbar.min() < 0 or fbar.sum() < 1.0 - PREDICATE_SLACK:
        return Feasibility(False)
    return Feasibility(True, normalize_bounds(fbar))


def search_bounds(view: SubproblemView) -> Tuple[float, float]:
    """(u_lb, u_ub): max background utilization, and the current MLU."""
    inv1 = _inverse(view.cap1)
    inv2 = _inverse(view.cap2)
    touched = 0.0
    if view.size:
        touched = float(max(
            np.where(view.bounded1, view.q1 * inv1, 0.0).max(),
            np.where(view.bounded2, view.q2 * inv2, 0.0).max(),
        ))
    return max(view.untouched_mlu, touched), view.u_ub


def greedy_fill(upper: np.ndarray) -> np.ndarray:
    """A vertex of {0 <= f <= upper, sum f = 1}: fill in candidate order."""
    ratios = np.zeros_like(upper)
    remaining = 1.0
    for i, cap in enumerate(upper):
        take = min(cap, remaining)
        ratios[i] = take
        remaining -= take
        if remaining <= 0:
            break
    return ratios / ratios.sum()


def bbsm(view: SubproblemView, epsilon: float = DEFAULT_EPSILON, balanced: bool = True) -> np.ndarray:
    """Balanced binary search for one pair's split ratios.

    Searches u over [0, u_ub] with the predicate sum(max(0, f-bar(u))) >= 1
    until the bracket is narrower than ``epsilon`` and returns the clipped
    bounds at the upper end, normalized to 1. Every used candidate then
    peaks at the same utilization u^e and every unused one is already at or
    above it.

    With ``balanced=False`` the search is followed by a greedy fill of the
    bounds at the subproblem optimum max(u^e, u_lb) in candidate order: an
    arbitrary optimal vertex instead of the balanced point.

    Args:
        view: Subproblem extracted by ``background_traffic``
        epsilon: Bracket width at which the search stops
        balanced: Return the balanced solution (default) or a greedy vertex

    Returns:
        Ratios aligned with ``view.candidates``

    Raises:
        ZeroDemand: If the pair has no demand
        NeverFeasible: If even u_ub is infeasible (state out of sync)
    """
    if view.demand <= 0:
        raise ZeroDemand(f"pair {view.sd} has zero demand")
    if view.size == 1:
        return np.ones(1)
    free = ~view.bounded1 & ~view.bounded2
    if free.any():
        return free / free.sum()

    def upper(u: float) -> np.ndarray:
        return np.maximum(_residual(view, u), 0.0) / view.demand

    lo, hi = 0.0, view.u_ub
    if upper(hi).sum() < 1.0 - 1e-9:
        raise NeverFeasible(
            f"pair {view.sd}: no feasible split at the current MLU {view.u_ub!r}")
    while hi - lo >= epsilon:
        mid = 0.5 * (lo + hi)
        if upper(mid).sum() >= 1.0 - PREDICATE_SLACK:
            hi = mid
        else:
            lo = mid

    if balanced:
        return normalize_bounds(upper(hi))
    return greedy_fill(upper(max(hi, min(view.u_lb, view.u_ub))))


def apply_sd_update(
    state: UtilizationState,
    split: SplitTensor,
    demands: DemandMatrix,
    sd: SD,
    new_ratios: np.ndarray,
    candidates: Optional[np.ndarray] = None,
) -> None:
    """Install new ratios for one pair and patch loads in place.

    Args:
        state: Utilization state consistent with ``split``
        split: Split tensor, updated in place
        demands: Demand matrix
        sd: Pair being updated
        new_ratios: Ratios aligned with ``candidates``, or a length-|V|
            vector indexed by intermediate node when ``candidates`` is None
        candidates: Intermediate nodes the ratios refer to
    """
    s, d = sd
    new_ratios = np.asarray(new_ratios, dtype=float)
    if candidates is None:
        candidates = np.flatnonzero((new_ratios != 0) | (split.f[s, :, d] != 0))
        new_ratios = new_ratios[candidates]
    ks = np.asarray(candidates, dtype=int)
    if ks.size == 0:
        return

    delta = (new_ratios - split.f[s, ks, d]) * demands.demand[s, d]
    split.f[s, ks, d] = new_ratios

    inv = state.topology.inverse_capacity
    state.load[s, ks] += delta
    state.util[s, ks] = state.load[s, ks] * inv[s, ks]
    second = ks != d
    k2 = ks[second]
    if k2.size:
        state.load[k2, d] += delta[second]
        state.util[k2, d] = state.load[k2, d] * inv[k2, d]


def consistency_error(state: UtilizationState, split: SplitTensor, demands: DemandMatrix) -> float:
    """Largest absolute gap between incremental and from-scratch loads."""
    return float(np.abs(state.load - edge_loads(split, demands)).max())
