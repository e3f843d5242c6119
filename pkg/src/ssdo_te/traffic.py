"""
Demand-matrix generation, temporal perturbation and demand I/O.

This module synthesizes gravity-model demands when no traces are
available, perturbs demand series with zero-mean normal noise scaled from
the series' own step-to-step variance, and reads/writes demand matrices as
dense CSV (row = source) or JSON.
"""

import csv
import io
import json
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import DegenerateWeights, InputError
from .topology import Topology

logger = logging.getLogger(__name__)

# Gravity mass contributed by one unbounded edge.
UNBOUNDED_EDGE_WEIGHT = 1e6


@dataclass(frozen=True, eq=False)
class DemandMatrix:
    """|V|x|V| nonnegative traffic demands with a zero diagonal."""
    demand: np.ndarray

    def __post_init__(self):
        d = np.array(self.demand, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InputError(f"demand matrix must be square, got shape {d.shape}")
        if not np.isfinite(d).all() or (d < 0).any():
            raise InputError("demands must be finite and nonnegative")
        if np.diag(d).any():
            raise InputError("demand diagonal must be zero")
        d.setflags(write=False)
        object.__setattr__(self, "demand", d)

    @property
    def node_count(self) -> int:
        return self.demand.shape[0]

    @property
    def total(self) -> float:
        return float(self.demand.sum())

    def demanded_pairs(self) -> List[tuple]:
        """Pairs with positive demand in ascending (s, d) order."""
        rows, cols = np.nonzero(self.demand > 0)
        return [(int(s), int(d)) for s, d in zip(rows, cols)]

    @classmethod
    def zeros(cls, n: int) -> "DemandMatrix":
        return cls(np.zeros((n, n)))


@dataclass(frozen=True)
class DemandSeries:
    """Ordered demand snapshots sharing one dimension.

    Attributes:
        snapshots: Demand matrices in time order
        interval: Label of the sampling interval, e.g. "1s"
    """
    snapshots: tuple
    interval: str = "1s"

    def __post_init__(self):
        snapshots = tuple(self.snapshots)
        if snapshots:
            n = snapshots[0].node_count
            if any(m.node_count != n for m in snapshots):
                raise InputError("all snapshots of a series must share dimensions")
        object.__setattr__(self, "snapshots", snapshots)

    def __len__(self) -> int:
        return len(self.snapshots)

    def stacked(self) -> np.ndarray:
        """Snapshots as a (T, |V|, |V|) array."""
        return np.stack([m.demand for m in self.snapshots])


def node_weights(topology: Topology, unbounded_weight: float = UNBOUNDED_EDGE_WEIGHT) -> np.ndarray:
    """Gravity mass per node: incident capacity, outgoing plus incoming."""
    cap = np.where(np.isinf(topology.capacity), unbounded_weight, topology.capacity)
    return cap.sum(axis=1) + cap.sum(axis=0)


def gravity_demands(
    topology: Topology,
    total_volume: float,
    seed: int = 0,
    noise: float = 0.0,
    unbounded_weight: float = UNBOUNDED_EDGE_WEIGHT,
) -> DemandMatrix:
    """Gravity-model demand matrix.

    D_ij = total * w_i * w_j / sum_{a != b} w_a * w_b, with w the incident
    capacity of each node. With ``noise`` > 0 each entry is multiplied by a
    log-normal factor exp(noise * z) drawn from ``seed`` and the result is
    rescaled back to ``total_volume``.

    Args:
        topology: Network whose capacities define node masses
        total_volume: Sum of all demands
        seed: Seed for the optional noise
        noise: Log-normal noise scale (0 disables noise)
        unbounded_weight: Mass contributed by an unbounded edge

    Returns:
        DemandMatrix summing to ``total_volume``

    Raises:
        InputError: If |V| < 2 or total_volume is not positive
        DegenerateWeights: If all node weights are zero

    Example:
        >>> dm = gravity_demands(complete_dcn_topology(3, 1.0), 6.0)
        >>> dm.demand[0, 1]
        1.0
    """
    n = topology.node_count
    if n < 2:
        raise InputError("gravity model needs at least two nodes")
    if not total_volume > 0:
        raise InputError("total volume must be positive")

    w = node_weights(topology, unbounded_weight)
    mass = np.outer(w, w)
    np.fill_diagonal(mass, 0.0)
    norm = mass.sum()
    if norm <= 0:
        raise DegenerateWeights("all gravity node weights are zero")

    demand = total_volume * mass / norm
    if noise > 0:
        rng = np.random.default_rng(seed)
        demand = demand * np.exp(noise * rng.standard_normal((n, n)))
        np.fill_diagonal(demand, 0.0)
        demand *= total_volume / demand.sum()
    return DemandMatrix(demand)


def demand_series_from_gravity(
    topology: Topology,
    total_volume: float,
    snapshots: int,
    seed: int = 0,
    noise: float = 0.1,
) -> DemandSeries:
    """Gravity base matrix with independent log-normal noise per snapshot."""
    if snapshots < 1:
        raise InputError("a series needs at least one snapshot")
    seeds = np.random.SeedSequence(seed).generate_state(snapshots)
    return DemandSeries(tuple(
        gravity_demands(topology, total_volume, seed=int(s), noise=noise) for s in seeds
    ))


def perturb_series(series: DemandSeries, scale: float, seed: int = 0) -> DemandSeries:
    """Add zero-mean normal noise scaled from the series' own variability.

    For each pair, with delta its step-to-step changes D[t+1] - D[t], the
    noise variance is ``scale * mean(delta ** 2)``: the mean square of
    delta, not ``np.var(delta)``. A steady ramp therefore still gets noise,
    and a two-snapshot series has a usable variance. Every snapshot gets an
    independent normal draw and negative results are clamped to 0.

    Args:
        series: At least two snapshots
        scale: Variance multiplier (> 0)
        seed: Seed for the noise stream

    Returns:
        Perturbed series with the same interval label

    Raises:
        InputError: If the series is too short or scale is not positive
    """
    if len(series) < 2:
        raise InputError("perturbation needs at least two snapshots")
    if not scale > 0:
        raise InputError("perturbation scale must be positive")

    stack = series.stacked()
    variance = np.mean(np.diff(stack, axis=0) ** 2, axis=0) * scale
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(stack.shape) * np.sqrt(variance)
    perturbed = np.maximum(stack + noise, 0.0)
    idx = np.arange(stack.shape[1])
    perturbed[:, idx, idx] = 0.0
    return DemandSeries(tuple(DemandMatrix(m) for m in perturbed), series.interval)


def manual_demands(name: str, topology: Topology) -> DemandMatrix:
    """Named demand fixtures.

    ``fig2``: on a 3-node topology, D(0,1) = 2, D(0,2) = D(1,2) = 1.

    Raises:
        InputError: For unknown names or mismatched topologies
    """
    n = topology.node_count
    if name == "fig2":
        if n != 3:
            raise InputError("manual:fig2 needs a 3-node topology")
        demand = np.zeros((3, 3))
        demand[0, 1] = 2.0
        demand[0, 2] = 1.0
        demand[1, 2] = 1.0
        return DemandMatrix(demand)
    if name == "ring":
        if n < 5:
            raise InputError("manual:ring needs n >= 5")
        demand = np.zeros((n, n))
        for i in range(n):
            demand[i, (i + 1) % n] = 1.0 / (n - 3)
        return DemandMatrix(demand)
    raise InputError(f"unknown manual demand fixture '{name}'")


def demands_to_csv(demands: DemandMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in demands.demand:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def load_demands(filename: str) -> DemandMatrix:
    """Load a demand matrix from CSV (row = source) or JSON.

    JSON files hold ``{"demand": [[...], ...]}``.

    Raises:
        FileNotFoundError: If the file doesn't exist
        InputError: On malformed rows or invariant violations
    """
    try:
        with open(filename, newline="") as f:
            text = f.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"Demand file '{filename}' not found")

    if filename.endswith(".json"):
        try:
            rows = json.loads(text)["demand"]
        except json.JSONDecodeError as e:
            raise InputError(f"invalid JSON: {e.msg}", path=filename, line=e.lineno)
        except (KeyError, TypeError):
            raise InputError("demand JSON needs a 'demand' matrix", path=filename)
    else:
        rows = []
        for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise InputError(f"non-numeric demand value in row {row}", path=filename, line=lineno)

    try:
        return DemandMatrix(np.array(rows, dtype=float))
    except (InputError, ValueError) as e:
        raise InputError(str(e), path=filename)


def demands_to_json(demands: DemandMatrix) -> str:
    return json.dumps({"demand": demands.demand.tolist()})


def series_to_json(series: DemandSeries) -> str:
    return json.dumps({
        "interval": series.interval,
        "snapshots": [m.demand.tolist() for m in series.snapshots],
    })


def load_series(filename: str) -> DemandSeries:
    try:
        with open(filename) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Series file '{filename}' not found")
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON: {e.msg}", path=filename, line=e.lineno)
    try:
        snapshots = tuple(DemandMatrix(np.array(m, dtype=float)) for m in data["snapshots"])
        return DemandSeries(snapshots, str(data.get("interval", "1s")))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed demand series: {e}", path=filename)


def validate_against(demands: DemandMatrix, topology: Topology) -> None:
    if demands.node_count != topology.node_count:
        raise InputError(
            f"demand matrix is {demands.node_count}x{demands.node_count} "
            f"but topology has {topology.node_count} nodes")
