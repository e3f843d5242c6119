"""
Network topology model, candidate path precomputation and failure injection.

Nodes are dense integer indices 0..|V|-1; external names are kept alongside
for I/O only. Capacities live in a |V|x|V| matrix where 0 means "no edge"
and ``UNBOUNDED`` (``math.inf``) marks an edge whose utilization is always 0.
"""

import heapq
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

import networkx as nx
import numpy as np

from .errors import Disconnects, InputError, NoPath

logger = logging.getLogger(__name__)

UNBOUNDED = math.inf

Edge = Tuple[int, int]
SD = Tuple[int, int]
Path = Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Topology:
    """Directed graph with per-edge capacities.

    Attributes:
        names: External node names, index i is node i
        capacity: |V|x|V| float matrix; 0 = absent edge, inf = unbounded
    """
    names: Tuple[str, ...]
    capacity: np.ndarray

    def __post_init__(self):
        cap = np.array(self.capacity, dtype=float)
        n = len(self.names)
        if n < 1:
            raise InputError("topology needs at least one node")
        if cap.shape != (n, n):
            raise InputError(f"capacity matrix must be {n}x{n}, got {cap.shape}")
        if np.isnan(cap).any() or (cap < 0).any():
            raise InputError("capacities must be nonnegative numbers")
        if np.diag(cap).any():
            raise InputError("self-loops are not allowed")
        if len(set(self.names)) != n:
            raise InputError("node names must be unique")
        cap.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "capacity", cap)

    @property
    def node_count(self) -> int:
        return len(self.names)

    @cached_property
    def present(self) -> np.ndarray:
        """Boolean edge mask."""
        mask = self.capacity > 0
        mask.setflags(write=False)
        return mask

    @cached_property
    def inverse_capacity(self) -> np.ndarray:
        """1/c for finite edges, 0 for unbounded and absent ones."""
        inv = np.zeros_like(self.capacity)
        finite = self.present & np.isfinite(self.capacity)
        inv[finite] = 1.0 / self.capacity[finite]
        inv.setflags(write=False)
        return inv

    @cached_property
    def successors(self) -> Tuple[Tuple[int, ...], ...]:
        """Sorted out-neighbour lists."""
        return tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in self.present)

    @cached_property
    def predecessors(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(i) for i in np.flatnonzero(col)) for col in self.present.T)

    @property
    def edge_count(self) -> int:
        return int(self.present.sum())

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.present[i, j])

    def edge_list(self) -> List[Edge]:
        """All edges in row-major (src, dst) order."""
        rows, cols = np.nonzero(self.present)
        return [(int(i), int(j)) for i, j in zip(rows, cols)]

    def index(self, name: str) -> int:
        """Map an external node name to its index.

        Raises:
            InputError: If the name is unknown
        """
        try:
            return self._name_index[name]
        except KeyError:
            raise InputError(f"unknown node '{name}'")

    @cached_property
    def _name_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def without_edges(self, edges: Iterable[Edge]) -> "Topology":
        cap = self.capacity.copy()
        for i, j in edges:
            cap[i, j] = 0.0
        return Topology(self.names, cap)

    @classmethod
    def from_networkx(cls, graph: nx.DiGraph, default_capacity: float = UNBOUNDED) -> "Topology":
        """Directed graph with an optional ``capacity`` edge attribute."""
        nodes = list(graph.nodes())
        index = {v: i for i, v in enumerate(nodes)}
        cap = np.zeros((len(nodes), len(nodes)))
        for u, v, attrs in graph.edges(data=True):
            cap[index[u], index[v]] = float(attrs.get("capacity", default_capacity))
        return cls(tuple(str(v) for v in nodes), cap)

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.node_count))
        for i, j in self.edge_list():
            graph.add_edge(i, j, capacity=float(self.capacity[i, j]))
        return graph

    def to_dict(self) -> dict:
        edges = []
        for i, j in self.edge_list():
            c = float(self.capacity[i, j])
            edges.append({
                "src": self.names[i],
                "dst": self.names[j],
                "capacity": "unbounded" if math.isinf(c) else c,
            })
        return {"nodes": list(self.names), "edges": edges}

    @classmethod
    def from_dict(cls, data: Mapping, source: Optional[str] = None) -> "Topology":
        """Build a topology from its JSON document form.

        Raises:
            InputError: On unknown nodes, duplicate edges or bad capacities
        """
        try:
            names = [str(n) for n in data["nodes"]]
            raw_edges = data["edges"]
        except (KeyError, TypeError):
            raise InputError("topology JSON needs 'nodes' and 'edges'", path=source)
        index = {name: i for i, name in enumerate(names)}
        cap = np.zeros((len(names), len(names)))
        for pos, edge in enumerate(raw_edges):
            try:
                i, j = index[str(edge["src"])], index[str(edge["dst"])]
            except KeyError as e:
                raise InputError(f"edge #{pos} references unknown node {e}", path=source)
            value = edge.get("capacity")
            if value == "unbounded":
                c = UNBOUNDED
            else:
                try:
                    c = float(value)
                except (TypeError, ValueError):
                    raise InputError(f"edge #{pos} has invalid capacity {value!r}", path=source)
                if not math.isfinite(c) or c < 0:
                    raise InputError(f"edge #{pos} has invalid capacity {value!r}", path=source)
            if cap[i, j] != 0:
                raise InputError(f"duplicate edge {names[i]}->{names[j]}", path=source)
            if i == j:
                raise InputError(f"self-loop on {names[i]}", path=source)
            cap[i, j] = c
        return cls(tuple(names), cap)


def complete_dcn_topology(n: int, uniform_capacity: float) -> Topology:
    """Directed complete graph K_n with one uniform capacity.

    Args:
        n: Number of nodes (>= 2)
        uniform_capacity: Capacity of every ordered pair

    Returns:
        Topology with n*(n-1) edges

    Example:
        >>> complete_dcn_topology(3, 2.0).edge_count
        6
    """
    if n < 2:
        raise InputError("complete topology needs n >= 2")
    if not uniform_capacity > 0:
        raise InputError("uniform capacity must be positive")
    cap = np.full((n, n), float(uniform_capacity))
    np.fill_diagonal(cap, 0.0)
    return Topology(tuple(_default_names(n)), cap)


def _default_names(n: int) -> List[str]:
    if n <= 26:
        return [chr(ord("A") + i) for i in range(n)]
    return [f"n{i}" for i in range(n)]


def load_topology(filename: str) -> Topology:
    """Load a topology JSON file.

    Raises:
        FileNotFoundError: If the file doesn't exist
        InputError: If the document violates topology invariants
    """
    try:
        with open(filename) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Topology file '{filename}' not found")
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON: {e.msg}", path=filename, line=e.lineno)
    topology = Topology.from_dict(data, source=filename)
    logger.info("Loaded topology %s: %d nodes, %d edges", filename,
                topology.node_count, topology.edge_count)
    return topology


def load_graphml(filename: str, default_capacity: float) -> Topology:
    """Import a Topology Zoo GraphML file.

    Undirected edges become two directed edges. Parallel edges sum their
    capacities. A ``capacity`` or ``LinkSpeedRaw`` attribute is used when
    present, otherwise ``default_capacity``.

    Raises:
        FileNotFoundError: If the file doesn't exist
        InputError: If the file cannot be parsed
    """
    try:
        graph = nx.read_graphml(filename)
    except FileNotFoundError:
        raise FileNotFoundError(f"GraphML file '{filename}' not found")
    except Exception as e:
        raise InputError(f"cannot parse GraphML: {e}", path=filename)

    node_ids = list(graph.nodes())
    labels = [str(graph.nodes[n].get("label", n)) for n in node_ids]
    if len(set(labels)) != len(labels):
        labels = [str(n) for n in node_ids]
    index = {n: i for i, n in enumerate(node_ids)}
    cap = np.zeros((len(node_ids), len(node_ids)))

    for u, v, attrs in graph.edges(data=True):
        if u == v:
            continue
        c = attrs.get("capacity", attrs.get("LinkSpeedRaw"))
        try:
            c = float(c) if c is not None else float(default_capacity)
        except (TypeError, ValueError):
            c = float(default_capacity)
        i, j = index[u], index[v]
        cap[i, j] += c
        if not graph.is_directed():
            cap[j, i] += c

    topology = Topology(tuple(labels), cap)
    logger.info("Imported GraphML %s: %d nodes, %d directed edges", filename,
                topology.node_count, topology.edge_count)
    return topology


@dataclass(frozen=True, eq=False)
class PathSet:
    """Candidate paths per source-destination pair.

    Paths are node sequences. A pair missing from ``paths`` has no
    candidates. Dense (one/two-hop) views are derived on demand.

    Attributes:
        node_count: |V| of the topology the paths belong to
        paths: Mapping (s, d) -> tuple of node tuples, shortest first
    """
    node_count: int
    paths: Mapping[SD, Tuple[Path, ...]] = field(default_factory=dict)

    def __post_init__(self):
        frozen = {}
        for (s, d), plist in self.paths.items():
            plist = tuple(tuple(int(v) for v in p) for p in plist)
            if len(set(plist)) != len(plist):
                raise InputError(f"duplicate candidate paths for pair {(s, d)}")
            for p in plist:
                if len(p) < 2 or p[0] != s or p[-1] != d:
                    raise InputError(f"path {p} does not connect {s} to {d}")
                if len(set(p)) != len(p):
                    raise InputError(f"path {p} has a loop")
            if plist:
                frozen[(int(s), int(d))] = plist
        object.__setattr__(self, "paths", frozen)

    def __getitem__(self, sd: SD) -> Tuple[Path, ...]:
        return self.paths.get(sd, ())

    def __len__(self) -> int:
        return len(self.paths)

    def pairs(self) -> List[SD]:
        return sorted(self.paths)

    @cached_property
    def max_hops(self) -> int:
        return max((len(p) - 1 for plist in self.paths.values() for p in plist), default=0)

    @property
    def is_dense(self) -> bool:
        """True when every candidate path has at most two hops."""
        return self.max_hops <= 2

    def intermediates(self, sd: SD) -> np.ndarray:
        """K_sd: intermediate node per candidate path, d for the direct path.

        Raises:
            InputError: If some candidate path has more than two hops
        """
        return self._dense_index[sd] if sd in self._dense_index else np.empty(0, dtype=int)

    @cached_property
    def _dense_index(self) -> Dict[SD, np.ndarray]:
        if not self.is_dense:
            raise InputError("path set has paths longer than two hops; use the path form")
        index = {}
        for (s, d), plist in self.paths.items():
            index[(s, d)] = np.array([d if len(p) == 2 else p[1] for p in plist], dtype=int)
        return index

    @cached_property
    def mid_mask(self) -> np.ndarray:
        """Boolean tensor M[s, k, d], True iff (s, k, d) is a candidate."""
        n = self.node_count
        mask = np.zeros((n, n, n), dtype=bool)
        for (s, d), ks in self._dense_index.items():
            mask[s, ks, d] = True
        mask.setflags(write=False)
        return mask

    def validate(self, topology: Topology) -> None:
        """Check that every path edge exists in ``topology``.

        Raises:
            InputError: On the first path that uses a missing edge
        """
        if topology.node_count != self.node_count:
            raise InputError("path set and topology disagree on node count")
        for sd, plist in self.paths.items():
            for p in plist:
                for i, j in zip(p, p[1:]):
                    if not topology.has_edge(i, j):
                        raise InputError(
                            f"path {p} of pair {sd} uses missing edge "
                            f"{topology.names[i]}->{topology.names[j]}")

    def to_dict(self, topology: Topology) -> dict:
        return {
            "pairs": [
                {
                    "src": topology.names[s],
                    "dst": topology.names[d],
                    "paths": [[topology.names[v] for v in p] for p in self.paths[(s, d)]],
                }
                for s, d in self.pairs()
            ]
        }

    @classmethod
    def from_dict(cls, data: Mapping, topology: Topology, source: Optional[str] = None) -> "PathSet":
        try:
            entries = data["pairs"]
        except (KeyError, TypeError):
            raise InputError("path-set JSON needs 'pairs'", path=source)
        paths = {}
        try:
            for entry in entries:
                s, d = topology.index(entry["src"]), topology.index(entry["dst"])
                paths[(s, d)] = tuple(tuple(topology.index(v) for v in p) for p in entry["paths"])
            result = cls(topology.node_count, paths)
            result.validate(topology)
        except InputError as e:
            raise InputError(str(e), path=source)
        except (KeyError, TypeError) as e:
            raise InputError(f"malformed path-set entry: {e}", path=source)
        return result


def load_path_set(filename: str, topology: Topology) -> PathSet:
    try:
        with open(filename) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Path-set file '{filename}' not found")
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON: {e.msg}", path=filename, line=e.lineno)
    return PathSet.from_dict(data, topology, source=filename)


def _short_paths(topology: Topology, s: int, d: int) -> List[Path]:
    """All loopless paths of at most two hops, in (hops, lexicographic) order."""
    present = topology.present
    result = [(s, d)] if present[s, d] else []
    mids = np.flatnonzero(present[s, :] & present[:, d])
    result.extend((s, int(k), d) for k in mids if k != s and k != d)
    return result


def _lex_shortest_path(
    topology: Topology,
    source: int,
    target: int,
    banned_nodes: Set[int],
    banned_edges: Set[Edge],
) -> Optional[Path]:
    """Fewest-hop path, lexicographically smallest among ties, or None."""
    if source in banned_nodes or target in banned_nodes:
        return None
    dist = {target: 0}
    queue = deque([target])
    while queue and source not in dist:
        v = queue.popleft()
        for u in topology.predecessors[v]:
            if u in dist or u in banned_nodes or (u, v) in banned_edges:
                continue
            dist[u] = dist[v] + 1
            queue.append(u)
    if source not in dist:
        return None

    path = [source]
    node = source
    while node != target:
        for v in topology.successors[node]:
            if dist.get(v) == dist[node] - 1 and (node, v) not in banned_edges \
                    and v not in banned_nodes:
                node = v
                break
        path.append(node)
    return tuple(path)


def yen_k_shortest_paths(topology: Topology, s: int, d: int, k: int) -> List[Path]:
    """Up to k loopless fewest-hop paths from s to d (Yen's algorithm).

    Ties in hop count are ordered lexicographically by node index. When
    at least k paths of at most two hops exist they are exactly the answer
    and are read off the adjacency matrix directly.

    Args:
        topology: Graph to search
        s: Source node index
        d: Destination node index
        k: Maximum number of paths

    Returns:
        List of node tuples in nondecreasing hop count

    Raises:
        InputError: If s == d or k < 1
        NoPath: If d is unreachable from s

    Example:
        >>> tri = complete_dcn_topology(3, 1.0)
        >>> yen_k_shortest_paths(tri, 0, 1, 2)
        [(0, 1), (0, 2, 1)]
    """
    if s == d:
        raise InputError("source and destination must differ")
    if k < 1:
        raise InputError("k must be positive")

    short = _short_paths(topology, s, d)
    if len(short) >= k:
        return short[:k]

    first = _lex_shortest_path(topology, s, d, set(), set())
    if first is None:
        raise NoPath((s, d))

    found = [first]
    seen = {first}
    candidates: List[Tuple[int, Path]] = []
    while len(found) < k:
        last = found[-1]
        for i in range(len(last) - 1):
            root = last[:i + 1]
            banned_edges = {(p[i], p[i + 1]) for p in found if p[:i + 1] == root}
            spur = _lex_shortest_path(topology, last[i], d, set(root[:-1]), banned_edges)
            if spur is None:
                continue
            candidate = root[:-1] + spur
            if candidate not in seen:
                seen.add(candidate)
                heapq.heappush(candidates, (len(candidate), candidate))
        if not candidates:
            break
        _, best = heapq.heappop(candidates)
        found.append(best)
    return found


def yen_path_set(
    topology: Topology,
    k: int,
    pairs: Optional[Iterable[SD]] = None,
) -> PathSet:
    """Precompute k shortest paths for every pair (or the given pairs).

    Unreachable pairs get no candidates; callers that need them raise
    NoPath when the pair carries demand.
    """
    n = topology.node_count
    if pairs is None:
        pairs = [(s, d) for s in range(n) for d in range(n) if s != d]
    paths = {}
    for s, d in pairs:
        try:
            paths[(s, d)] = tuple(yen_k_shortest_paths(topology, s, d, k))
        except NoPath:
            logger.debug("pair %s unreachable, no candidate paths", (s, d))
    logger.info("Computed path set: %d pairs, k=%d, max %d hops",
                len(paths), k, max((len(p) - 1 for v in paths.values() for p in v), default=0))
    return PathSet(n, paths)


def two_hop_path_set(topology: Topology, k: int) -> PathSet:
    """Up to k one/two-hop candidates per pair, direct edge first.

    Pairs with no such path get no candidates.
    """
    if k < 1:
        raise InputError("k must be positive")
    n = topology.node_count
    paths = {}
    for s in range(n):
        for d in range(n):
            if s != d:
                short = _short_paths(topology, s, d)[:k]
                if short:
                    paths[(s, d)] = tuple(short)
    return PathSet(n, paths)


@dataclass(frozen=True)
class FailureScenario:
    """Directed edges to remove from a base topology."""
    removed_edges: Tuple[Edge, ...] = ()


def apply_failures(topology: Topology, scenario: FailureScenario, demands) -> Topology:
    """Remove the scenario's edges, rejecting disconnecting scenarios.

    Path sets are not touched; recompute them for the returned topology.

    Args:
        topology: Base topology
        scenario: Edges to remove
        demands: DemandMatrix whose nonzero pairs must stay connected

    Returns:
        New topology without the removed edges

    Raises:
        InputError: If a removed edge is not in the topology
        Disconnects: If some demanded pair loses all paths
    """
    for i, j in scenario.removed_edges:
        if not topology.has_edge(i, j):
            raise InputError(f"failure scenario removes missing edge ({i}, {j})")
    if not scenario.removed_edges:
        return topology

    failed = topology.without_edges(scenario.removed_edges)
    graph = failed.to_networkx()
    demand = np.asarray(demands.demand)
    for s in range(failed.node_count):
        targets = np.flatnonzero(demand[s] > 0)
        if targets.size == 0:
            continue
        reachable = nx.descendants(graph, s)
        for d in targets:
            if int(d) not in reachable:
                raise Disconnects((s, int(d)))
    return failed


def random_failure_scenario(
    topology: Topology,
    count: int,
    demands,
    rng: np.random.Generator,
    retries: int = 20,
) -> Optional[FailureScenario]:
    """Draw ``count`` distinct directed edges whose removal keeps demand routable.

    Returns:
        A scenario, or None when every one of ``retries`` draws disconnected
        some demanded pair
    """
    edges = topology.edge_list()
    if count > len(edges):
        raise InputError(f"cannot fail {count} of {len(edges)} edges")
    for attempt in range(retries):
        picks = sorted(rng.choice(len(edges), size=count, replace=False).tolist())
        scenario = FailureScenario(tuple(edges[p] for p in picks))
        try:
            apply_failures(topology, scenario, demands)
            return scenario
        except Disconnects as e:
            logger.warning("failure draw %d disconnects %s, resampling", attempt + 1, e.sd)
    return None


def ring_deadlock_fixture(n: int):
    """Directed ring whose all-detour routing is a single-pair deadlock.

    Clockwise edges i->i+1 have capacity 1, skip edges i->i+2 are
    unbounded. Each clockwise neighbour pair carries D = 1/(n-3) and has two
    candidates: the direct edge, and the detour i->i+2->...->i-1->i+1 that
    crosses n-3 unit edges.

    Args:
        n: Ring size (>= 5)

    Returns:
        (topology, path set, demand matrix, all-detour PathSplit)
    """
    from .paths import PathSplit
    from .traffic import DemandMatrix

    if n < 5:
        raise InputError("ring fixture needs n >= 5")
    cap = np.zeros((n, n))
    for i in range(n):
        cap[i, (i + 1) % n] = 1.0
        cap[i, (i + 2) % n] = UNBOUNDED
    topology = Topology(tuple(_default_names(n)), cap)

    demand = np.zeros((n, n))
    paths = {}
    ratios = {}
    for i in range(n):
        j = (i + 1) % n
        demand[i, j] = 1.0 / (n - 3)
        detour = (i,) + tuple((i + 2 + step) % n for step in range(n - 2)) + (j,)
        paths[(i, j)] = ((i, j), detour)
        ratios[(i, j)] = np.array([0.0, 1.0])
    path_set = PathSet(n, paths)
    return topology, path_set, DemandMatrix(demand), PathSplit(path_set, ratios)
