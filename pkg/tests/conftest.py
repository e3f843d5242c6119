"""
Shared fixtures and random instance builders.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for testing
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from ssdo_te.topology import PathSet, Topology, complete_dcn_topology, ring_deadlock_fixture, two_hop_path_set
from ssdo_te.traffic import DemandMatrix, manual_demands


@pytest.fixture
def fig2():
    """K_3 with capacity 2, direct + one two-hop path per pair, D_AB=2, D_AC=D_BC=1."""
    topology = complete_dcn_topology(3, 2.0)
    paths = two_hop_path_set(topology, 2)
    demands = manual_demands("fig2", topology)
    return topology, paths, demands


@pytest.fixture
def ring8():
    return ring_deadlock_fixture(8)


def random_dense_instance(seed: int, n: int = 5, k: int = 3, density: float = 0.6):
    """Random complete topology with random capacities and sparse random demands.

    Each pair gets the direct edge plus up to k-1 random two-hop candidates.
    """
    rng = np.random.default_rng(seed)
    cap = rng.uniform(1.0, 4.0, size=(n, n))
    np.fill_diagonal(cap, 0.0)
    topology = Topology(tuple(f"v{i}" for i in range(n)), cap)
    paths = {}
    for s in range(n):
        for d in range(n):
            if s == d:
                continue
            mids = [m for m in range(n) if m not in (s, d)]
            chosen = sorted(rng.choice(mids, size=min(k - 1, len(mids)), replace=False).tolist())
            paths[(s, d)] = ((s, d),) + tuple((s, m, d) for m in chosen)
    demand = rng.uniform(0.1, 2.0, size=(n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(demand, 0.0)
    if not demand.any():
        demand[0, 1] = 1.0
    return topology, PathSet(n, paths), DemandMatrix(demand)


def tiny_instance(seed: int, detours: int = 2):
    """Instance small enough for the global grid oracle.

    Three demanded pairs on 4 nodes, each with the direct edge and up to
    ``detours`` two-hop candidates (6 free dimensions at most).
    """
    rng = np.random.default_rng(seed)
    n = 4
    cap = rng.uniform(1.0, 3.0, size=(n, n))
    np.fill_diagonal(cap, 0.0)
    topology = Topology(tuple("ABCD"), cap)
    all_pairs = [(s, d) for s in range(n) for d in range(n) if s != d]
    picks = rng.choice(len(all_pairs), size=3, replace=False)
    demand = np.zeros((n, n))
    paths = {}
    for p in sorted(picks.tolist()):
        s, d = all_pairs[p]
        demand[s, d] = rng.uniform(0.5, 3.0)
        mids = [m for m in range(n) if m not in (s, d)]
        paths[(s, d)] = ((s, d),) + tuple((s, m, d) for m in mids[:detours])
    return topology, PathSet(n, paths), DemandMatrix(demand)


@pytest.fixture
def make_dense_instance():
    return random_dense_instance


@pytest.fixture
def make_tiny_instance():
    return tiny_instance
