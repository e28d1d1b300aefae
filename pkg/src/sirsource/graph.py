"""Undirected simple graphs, loaders, tree generators and infection distances.

Graphs are stored in CSR form (``indptr``/``indices`` numpy arrays, neighbor
lists sorted) and are immutable once built.  Node ids are always dense
``0..N-1``; graphs loaded from files keep the original ids in ``id_map``.
"""

from __future__ import annotations

import io
import math
import warnings
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import (
    DisconnectedEvidenceError,
    EmptyInputError,
    NoInfectedError,
    ParseError,
    TooLargeError,
)

UNREACHABLE = -1
DEFAULT_NODE_CAP = 5_000_000


class Graph:
    """Immutable undirected simple graph over nodes ``0..node_count-1``."""

    __slots__ = ("node_count", "edge_count", "indptr", "indices", "id_map", "__dict__")

    def __init__(self, node_count: int, indptr: np.ndarray, indices: np.ndarray,
                 id_map: Sequence[int] | None = None):
        self.node_count = int(node_count)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self.edge_count = len(self.indices) // 2
        self.id_map = tuple(id_map) if id_map is not None else None

    @classmethod
    def from_edges(cls, node_count: int, edges, id_map=None) -> "Graph":
        """Build from an iterable or ``(m, 2)`` array of undirected edges.

        Duplicates and reversed duplicates collapse; self-loops are rejected.
        """
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64).reshape(-1, 2)
        if len(arr) and (arr.min() < 0 or arr.max() >= node_count):
            raise ValueError("edge endpoint out of range")
        if np.any(arr[:, 0] == arr[:, 1]):
            raise ValueError("self-loops are not allowed")
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        canon = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(arr) else arr
        src = np.concatenate([canon[:, 0], canon[:, 1]])
        dst = np.concatenate([canon[:, 1], canon[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(node_count + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(node_count, indptr, dst, id_map=id_map)

    @classmethod
    def from_parents(cls, parents: np.ndarray) -> "Graph":
        """Tree from a parent array (root has parent ``-1``)."""
        parents = np.asarray(parents, dtype=np.int64)
        child = np.nonzero(parents >= 0)[0]
        return cls.from_edges(len(parents), np.stack([parents[child], child], axis=1))

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        ind = self.indices.tolist()
        ptr = self.indptr.tolist()
        return tuple(tuple(ind[ptr[v]:ptr[v + 1]]) for v in range(self.node_count))

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as ``(u, v)`` rows with ``u < v``."""
        src = np.repeat(np.arange(self.node_count), self.degrees)
        keep = src < self.indices
        return np.stack([src[keep], self.indices[keep]], axis=1)

    @cached_property
    def csgraph(self) -> csr_matrix:
        data = np.ones(len(self.indices), dtype=np.float64)
        return csr_matrix((data, self.indices, self.indptr),
                          shape=(self.node_count, self.node_count))

    @cached_property
    def component_count(self) -> int:
        if self.node_count == 0:
            return 0
        return int(connected_components(self.csgraph, directed=False)[0])

    @cached_property
    def is_tree(self) -> bool:
        return (self.node_count >= 1 and self.edge_count == self.node_count - 1
                and self.component_count == 1)

    def original_id(self, v: int) -> int:
        return self.id_map[v] if self.id_map is not None else v

    @cached_property
    def index_of(self) -> dict[int, int]:
        if self.id_map is None:
            return {v: v for v in range(self.node_count)}
        return {orig: v for v, orig in enumerate(self.id_map)}

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.node_count == other.node_count
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __hash__(self):
        return hash((self.node_count, self.indices.tobytes()))

    def __repr__(self):
        return f"Graph(node_count={self.node_count}, edge_count={self.edge_count})"


@dataclass(frozen=True)
class Snapshot:
    """Observed infection flags; ``flags[v]`` is True when ``v`` is seen infected."""

    flags: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "flags", tuple(bool(f) for f in self.flags))

    @classmethod
    def from_infected(cls, node_count: int, infected: Iterable[int]) -> "Snapshot":
        flags = [False] * node_count
        for v in infected:
            flags[v] = True
        return cls(tuple(flags))

    @cached_property
    def infected_set(self) -> tuple[int, ...]:
        return tuple(v for v, f in enumerate(self.flags) if f)

    @cached_property
    def infected_array(self) -> np.ndarray:
        return np.asarray(self.infected_set, dtype=np.int64)

    def __len__(self):
        return len(self.flags)

    def to_vector(self) -> list[int]:
        return [int(f) for f in self.flags]


# -- loading and saving ------------------------------------------------------

def _lines(text) -> Iterable[str]:
    if isinstance(text, str):
        return io.StringIO(text)
    return text


def load_edge_list(text) -> Graph:
    """Parse a SNAP-style edge list (string or iterable of lines).

    Node ids are compacted to ``0..N-1`` in order of first appearance and the
    original ids are kept in ``Graph.id_map``.
    """
    index: dict[int, int] = {}
    edges = []
    self_loops = 0
    for lineno, raw in enumerate(_lines(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError(f"expected two node ids, got {line!r}", lineno)
        try:
            a, b = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise ParseError(f"non-integer token in {line!r}", lineno) from None
        if a < 0 or b < 0:
            raise ParseError(f"negative node id in {line!r}", lineno)
        ia = index.setdefault(a, len(index))
        ib = index.setdefault(b, len(index))
        if ia == ib:
            self_loops += 1
            continue
        edges.append((ia, ib))
    if not index:
        raise EmptyInputError("edge list contains no nodes")
    if self_loops:
        warnings.warn(f"dropped {self_loops} self-loop(s)", stacklevel=2)
    id_map = [0] * len(index)
    for orig, v in index.items():
        id_map[v] = orig
    return Graph.from_edges(len(index), np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                            id_map=id_map)


def write_edge_list(graph: Graph, fh) -> None:
    fh.write(f"# nodes: {graph.node_count} edges: {graph.edge_count}\n")
    for u, v in graph.edges().tolist():
        fh.write(f"{graph.original_id(u)} {graph.original_id(v)}\n")
    if graph.edge_count == 0 and graph.node_count == 1:
        # an isolated node cannot be expressed as an edge; keep it loadable
        fh.write(f"{graph.original_id(0)} {graph.original_id(0)}\n")


def read_snapshot_csv(text, graph: Graph) -> Snapshot:
    """Read a ``node_id,infected`` CSV; ids refer to the graph's original ids."""
    lines = [ln.strip() for ln in _lines(text)]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].replace(" ", "") != "node_id,infected":
        raise ParseError("snapshot CSV must start with header node_id,infected", 1)
    flags = [False] * graph.node_count
    index = graph.index_of
    for lineno, line in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise ParseError(f"bad snapshot row {line!r}", lineno)
        try:
            node = index[int(parts[0])]
        except (ValueError, KeyError):
            raise ParseError(f"unknown node id {parts[0]!r}", lineno) from None
        flags[node] = parts[1] == "1"
    return Snapshot(tuple(flags))


def write_snapshot_csv(snap: Snapshot, graph: Graph, fh) -> None:
    fh.write("node_id,infected\n")
    for v, f in enumerate(snap.flags):
        fh.write(f"{graph.original_id(v)},{int(f)}\n")


# -- generators --------------------------------------------------------------

def regular_tree_size(g: int, depth: int) -> int:
    if depth == 0:
        return 1
    return 1 + (g + 1) * (g ** depth - 1) // (g - 1)


def gen_regular_tree(g: int, depth: int, max_nodes: int = DEFAULT_NODE_CAP) -> Graph:
    """Finite truncation of the (g+1)-regular tree, root 0, leaves at ``depth``.

    Nodes are numbered breadth-first.
    """
    if g < 2 or depth < 0:
        raise ValueError("need g >= 2 and depth >= 0")
    n = regular_tree_size(g, depth)
    if n > max_nodes:
        raise TooLargeError(f"regular tree g={g} depth={depth} has {n} nodes > cap {max_nodes}")
    counts = [1] + [(g + 1) * g ** (d - 1) for d in range(1, depth + 1)]
    parents = [np.array([-1], dtype=np.int64)]
    first = 0
    for d in range(1, depth + 1):
        prev = np.arange(first, first + counts[d - 1], dtype=np.int64)
        fanout = g + 1 if d == 1 else g
        parents.append(np.repeat(prev, fanout))
        first += counts[d - 1]
    return Graph.from_parents(np.concatenate(parents))


def gen_regular_tree_prefix(g: int, node_count: int) -> Graph:
    """The first ``node_count`` nodes, breadth-first, of the (g+1)-regular tree."""
    if g < 2 or node_count < 1:
        raise ValueError("need g >= 2 and node_count >= 1")
    i = np.arange(node_count, dtype=np.int64)
    parents = np.where(i <= g + 1, 0, 1 + (i - (g + 2)) // g)
    parents[0] = -1
    return Graph.from_parents(parents)


def gen_binomial_tree(trials: int, beta: float, depth: int, rng: np.random.Generator,
                      max_nodes: int = DEFAULT_NODE_CAP) -> Graph:
    """Random tree where every node above ``depth`` has Binomial(trials, beta) children."""
    if not 0.0 <= beta <= 1.0 or trials < 0 or depth < 0:
        raise ValueError("need 0 <= beta <= 1, trials >= 0, depth >= 0")
    parents = [np.array([-1], dtype=np.int64)]
    level = np.array([0], dtype=np.int64)
    total = 1
    for _ in range(depth):
        kids = rng.binomial(trials, beta, size=len(level))
        n_new = int(kids.sum())
        if total + n_new > max_nodes:
            raise TooLargeError(f"binomial tree exceeds cap {max_nodes}")
        new_parents = np.repeat(level, kids)
        parents.append(new_parents)
        level = np.arange(total, total + n_new, dtype=np.int64)
        total += n_new
        if n_new == 0:
            break
    return Graph.from_parents(np.concatenate(parents))


# -- distances ---------------------------------------------------------------

def bfs_distances(graph: Graph, src: int) -> list[int]:
    """Hop distances from ``src``; unreachable nodes get ``UNREACHABLE``."""
    if not 0 <= src < graph.node_count:
        raise IndexError(f"node {src} out of range")
    adj = graph.adjacency
    dist = [UNREACHABLE] * graph.node_count
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for w in adj[u]:
            if dist[w] == UNREACHABLE:
                dist[w] = du
                queue.append(w)
    return dist


def _require_infected(snap: Snapshot, graph: Graph) -> np.ndarray:
    if len(snap) != graph.node_count:
        raise ValueError("snapshot length does not match graph")
    infected = snap.infected_array
    if len(infected) == 0:
        raise NoInfectedError("snapshot contains no infected node")
    return infected


def infection_eccentricity(graph: Graph, snap: Snapshot, v: int) -> float:
    """Largest hop distance from ``v`` to an infected node (``math.inf`` if one is unreachable)."""
    infected = _require_infected(snap, graph)
    dist = bfs_distances(graph, v)
    worst = 0
    for i in infected.tolist():
        if dist[i] == UNREACHABLE:
            return math.inf
        worst = max(worst, dist[i])
    return worst


def distances_from(graph: Graph, sources) -> np.ndarray:
    """Distance rows (``len(sources)`` x N, int64, ``UNREACHABLE`` for no path)."""
    d = shortest_path(graph.csgraph, method="D", directed=False, unweighted=True,
                      indices=np.atleast_1d(np.asarray(sources, dtype=np.int64)))
    out = np.full(d.shape, UNREACHABLE, dtype=np.int64)
    finite = np.isfinite(d)
    out[finite] = d[finite].astype(np.int64)
    return out


def _distance_and_parent(graph: Graph, src: int) -> tuple[np.ndarray, np.ndarray]:
    d, pred = shortest_path(graph.csgraph, method="D", directed=False, unweighted=True,
                            indices=src, return_predecessors=True)
    return d, pred


def infection_distance_matrix(graph: Graph, snap: Snapshot) -> np.ndarray:
    """Rows indexed by ``snap.infected_set``, columns by node."""
    return distances_from(graph, _require_infected(snap, graph))


class JordanCenters(NamedTuple):
    centers: tuple[int, ...]
    eccentricity: int


def _tree_jordan_centers(graph: Graph, infected: np.ndarray) -> JordanCenters:
    # double sweep: the infection eccentricity on a tree is governed by one
    # diametral pair of infected nodes; centers sit in the middle of that path
    d0, _ = _distance_and_parent(graph, int(infected[0]))
    b = int(infected[np.argmax(d0[infected])])
    db, pred = _distance_and_parent(graph, b)
    c = int(infected[np.argmax(db[infected])])
    diameter = int(db[c])
    path = [c]
    while path[-1] != b:
        path.append(int(pred[path[-1]]))
    path.reverse()
    lo, hi = diameter // 2, (diameter + 1) // 2
    centers = tuple(sorted({path[lo], path[hi]}))
    return JordanCenters(centers, hi)


def jordan_infection_centers(graph: Graph, snap: Snapshot) -> JordanCenters:
    """All nodes attaining the minimum finite infection eccentricity."""
    infected = _require_infected(snap, graph)
    if graph.is_tree:
        return _tree_jordan_centers(graph, infected)
    dist = distances_from(graph, infected)
    reach_all = np.all(dist != UNREACHABLE, axis=0)
    if not reach_all.any():
        raise DisconnectedEvidenceError("no node reaches every infected node")
    ecc = dist.max(axis=0)
    best = int(ecc[reach_all].min())
    centers = np.nonzero(reach_all & (ecc == best))[0]
    return JordanCenters(tuple(int(c) for c in centers), best)


def infection_distance_sums(graph: Graph, snap: Snapshot) -> np.ndarray:
    """Per-node sum of distances to the infected nodes (float, ``inf`` if some are unreachable)."""
    infected = _require_infected(snap, graph)
    if graph.is_tree:
        return _tree_distance_sums(graph, infected)
    dist = distances_from(graph, infected)
    sums = dist.sum(axis=0).astype(np.float64)
    sums[np.any(dist == UNREACHABLE, axis=0)] = np.inf
    if not np.isfinite(sums).any():
        raise DisconnectedEvidenceError("no node reaches every infected node")
    return sums


def _tree_distance_sums(graph: Graph, infected: np.ndarray) -> np.ndarray:
    # rerooting: S(child) = S(parent) + |I| - 2 * (#infected below child)
    root = int(infected[0])
    dist, pred = _distance_and_parent(graph, root)
    depth = dist.astype(np.int64)
    pred = pred.astype(np.int64)
    order = np.argsort(depth, kind="stable")
    bounds = np.searchsorted(depth[order], np.arange(depth.max() + 2))
    levels = [order[bounds[d]:bounds[d + 1]] for d in range(depth.max() + 1)]
    below = np.zeros(graph.node_count, dtype=np.int64)
    below[infected] = 1
    for nodes in reversed(levels[1:]):
        np.add.at(below, pred[nodes], below[nodes])
    sums = np.zeros(graph.node_count, dtype=np.float64)
    sums[root] = float(dist[infected].sum())
    k = len(infected)
    for nodes in levels[1:]:
        sums[nodes] = sums[pred[nodes]] + k - 2 * below[nodes]
    return sums


# -- trees given by parent arrays ---------------------------------------------

class RootedTree:
    """Tree stored as a parent array, root 0, cut into index batches.

    Every node in ``[bounds[k], bounds[k+1])`` has its parent before
    ``bounds[k]``, so passes over whole batches visit parents before children.
    This is what a lazily simulated outbreak produces, and it lets distance
    queries on million-node trees run as a few dozen vectorized steps.
    """

    def __init__(self, parent: np.ndarray, bounds: Sequence[int]):
        self.parent = np.asarray(parent, dtype=np.int64)
        self.node_count = len(self.parent)
        b = np.asarray(bounds, dtype=np.int64)
        self.batches = [(int(lo), int(hi)) for lo, hi in zip(b[:-1], b[1:]) if hi > lo]
        depth = np.zeros(self.node_count, dtype=np.int64)
        for lo, hi in self.batches[1:]:
            depth[lo:hi] = depth[self.parent[lo:hi]] + 1
        self.depth = depth

    def ancestors(self, v: int) -> list[int]:
        """Path from ``v`` up to the root, ``v`` first."""
        out = [v]
        while out[-1] != 0:
            out.append(int(self.parent[out[-1]]))
        return out

    def distances(self, x: int) -> np.ndarray:
        # d(x, v) = depth x + depth v - 2 depth(lca); the lca is the deepest
        # node of x's root path that is also an ancestor of v
        on_path = np.zeros(self.node_count, dtype=bool)
        on_path[self.ancestors(x)] = True
        lca = np.zeros(self.node_count, dtype=np.int64)
        for lo, hi in self.batches[1:]:
            par = self.parent[lo:hi]
            lca[lo:hi] = np.where(on_path[lo:hi], self.depth[lo:hi], lca[par])
        return self.depth + self.depth[x] - 2 * lca

    def jordan_centers(self, infected: np.ndarray) -> JordanCenters:
        if len(infected) == 0:
            raise NoInfectedError("snapshot contains no infected node")
        d0 = self.distances(int(infected[0]))
        b = int(infected[np.argmax(d0[infected])])
        db = self.distances(b)
        c = int(infected[np.argmax(db[infected])])
        diameter = int(db[c])
        up_b, up_c = self.ancestors(b), self.ancestors(c)
        join = len(set(up_b) & set(up_c))
        path = up_b[:len(up_b) - join + 1] + up_c[:len(up_c) - join][::-1]
        lo, hi = diameter // 2, (diameter + 1) // 2
        return JordanCenters(tuple(sorted({path[lo], path[hi]})), hi)

    def distance_sums(self, infected: np.ndarray) -> np.ndarray:
        below = np.zeros(self.node_count, dtype=np.int64)
        below[infected] = 1
        for lo, hi in reversed(self.batches[1:]):
            np.add.at(below, self.parent[lo:hi], below[lo:hi])
        sums = np.zeros(self.node_count, dtype=np.int64)
        sums[0] = int(self.depth[infected].sum())
        k = len(infected)
        for lo, hi in self.batches[1:]:
            sums[lo:hi] = sums[self.parent[lo:hi]] + k - 2 * below[lo:hi]
        return sums

    def to_graph(self) -> Graph:
        return Graph.from_parents(self.parent)
