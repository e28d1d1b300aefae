"""Discrete-time SIR dynamics on graphs.

Slot semantics, for every slot ``s = 1..t``:

* every node infected at a slot ``< s`` that has not recovered at a slot
  ``< s`` attacks each susceptible neighbor independently with probability q;
* afterwards every node infected at a slot ``< s`` that is still infected
  recovers with probability p (so it still attacked during its recovery slot);
* a node infected at slot ``s`` neither attacks nor recovers during ``s``;
  recovered nodes are never reinfected.

Times use ``NEVER = -1`` for "has not happened by the horizon".
"""

from __future__ import annotations

import io
import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import InvalidTraceError, ParseError
from .graph import Graph, RootedTree, Snapshot

NEVER = -1


@dataclass(frozen=True)
class SirParams:
    q: float
    p: float

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"infection probability q must be in (0, 1], got {self.q}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"recovery probability p must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class SirTrace:
    """A full sample path as per-node infection and recovery slots."""

    t_infect: tuple[int, ...]
    t_recover: tuple[int, ...]
    horizon: int
    source: int

    def __post_init__(self):
        object.__setattr__(self, "t_infect", tuple(int(x) for x in self.t_infect))
        object.__setattr__(self, "t_recover", tuple(int(x) for x in self.t_recover))
        if len(self.t_infect) != len(self.t_recover):
            raise InvalidTraceError("t_infect and t_recover lengths differ")

    @property
    def node_count(self) -> int:
        return len(self.t_infect)

    @cached_property
    def touched_count(self) -> int:
        """Number of nodes ever infected (infected or recovered at the horizon)."""
        return sum(1 for x in self.t_infect if x != NEVER)


def _gather_neighbors(graph: Graph, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    starts = graph.indptr[nodes]
    lens = graph.indptr[nodes + 1] - starts
    total = int(lens.sum())
    owner = np.repeat(nodes, lens)
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(total)
    return owner, graph.indices[offsets]


def _run(graph: Graph, source: int, params: SirParams, t: int, rng: np.random.Generator,
         max_touched: int | None = None):
    n = graph.node_count
    t_inf = np.full(n, NEVER, dtype=np.int64)
    t_rec = np.full(n, NEVER, dtype=np.int64)
    t_inf[source] = 0
    active = np.array([source], dtype=np.int64)  # infected before this slot, not recovered
    fresh = np.empty(0, dtype=np.int64)          # infected during the previous slot
    touched = 1
    for s in range(1, t + 1):
        active = np.concatenate([active, fresh])
        if len(active) == 0:
            break
        _, targets = _gather_neighbors(graph, active)
        targets = targets[t_inf[targets] == NEVER]
        hit = targets[rng.random(len(targets)) < params.q]
        fresh = np.unique(hit)
        t_inf[fresh] = s
        touched += len(fresh)
        if max_touched is not None and touched > max_touched:
            return None
        recovered = rng.random(len(active)) < params.p
        t_rec[active[recovered]] = s
        active = active[~recovered]
    return t_inf, t_rec


def simulate(graph: Graph, source: int, params: SirParams, t: int,
             rng: np.random.Generator) -> SirTrace:
    """Run the SIR chain from ``source`` for ``t`` slots."""
    if not 0 <= source < graph.node_count:
        raise IndexError(f"source {source} out of range")
    if t < 0:
        raise ValueError("t must be nonnegative")
    t_inf, t_rec = _run(graph, source, params, t, rng)
    return SirTrace(t_inf.tolist(), t_rec.tolist(), t, source)


def simulate_capped(graph: Graph, source: int, params: SirParams, t: int,
                    rng: np.random.Generator, max_touched: int) -> SirTrace | None:
    """Like :func:`simulate` but gives up (returns None) once more than
    ``max_touched`` nodes have been infected."""
    out = _run(graph, source, params, t, rng, max_touched=max_touched)
    if out is None:
        return None
    return SirTrace(out[0].tolist(), out[1].tolist(), t, source)


def snapshot(trace: SirTrace) -> Snapshot:
    t = trace.horizon
    return Snapshot(tuple(
        ti != NEVER and ti <= t and (tr == NEVER or tr > t)
        for ti, tr in zip(trace.t_infect, trace.t_recover)
    ))


# -- exact path probability --------------------------------------------------

class PathSignature(NamedTuple):
    """Exponents of the factors making up a sample-path probability.

    ``prob = (1-q)**survive * prod((1-(1-q)**n)**k for n, k in infect)
    * p**recover * (1-p)**stay``.
    """

    survive: int
    infect: tuple[tuple[int, int], ...]
    recover: int
    stay: int

    def log_prob(self, q, p):
        q = np.asarray(q, dtype=np.float64)
        p = np.asarray(p, dtype=np.float64)
        total = _count_log(self.survive, 1.0 - q)
        for n, k in self.infect:
            with np.errstate(divide="ignore"):
                hit = -np.expm1(n * np.log1p(-q)) if n > 1 else q
            total = total + _count_log(k, hit)
        total = total + _count_log(self.recover, p) + _count_log(self.stay, 1.0 - p)
        return total if total.shape else float(total)


def _count_log(count, base):
    base = np.asarray(base, dtype=np.float64)
    if count == 0:
        return np.zeros_like(base)
    with np.errstate(divide="ignore"):
        return count * np.log(base)


def validate_trace(graph: Graph, trace: SirTrace) -> None:
    n = graph.node_count
    if trace.node_count != n:
        raise InvalidTraceError("trace length does not match graph")
    t = trace.horizon
    src = trace.source
    if not 0 <= src < n:
        raise InvalidTraceError("source out of range")
    ti, tr = trace.t_infect, trace.t_recover
    if ti[src] != 0:
        raise InvalidTraceError("source must be infected at slot 0")
    adj = graph.adjacency
    for v in range(n):
        if v != src and ti[v] != NEVER and not 1 <= ti[v] <= t:
            raise InvalidTraceError(f"node {v}: infection slot {ti[v]} outside 1..{t}")
        if tr[v] != NEVER:
            if ti[v] == NEVER:
                raise InvalidTraceError(f"node {v} recovers without being infected")
            if not ti[v] + 1 <= tr[v] <= t:
                raise InvalidTraceError(f"node {v}: recovery slot {tr[v]} invalid")
        if v != src and ti[v] != NEVER:
            s = ti[v]
            if not any(ti[u] != NEVER and ti[u] < s and (tr[u] == NEVER or tr[u] >= s)
                       for u in adj[v]):
                raise InvalidTraceError(f"node {v} infected at slot {s} without an infectious neighbor")


def trace_signature(graph: Graph, trace: SirTrace) -> PathSignature:
    """Factor exponents of the trace's probability, slot by slot."""
    validate_trace(graph, trace)
    ti, tr = trace.t_infect, trace.t_recover
    adj = graph.adjacency
    survive = recover = stay = 0
    infect: Counter = Counter()
    for s in range(1, trace.horizon + 1):
        attacking = [ti[u] != NEVER and ti[u] < s and (tr[u] == NEVER or tr[u] >= s)
                     for u in range(graph.node_count)]
        for v in range(graph.node_count):
            if ti[v] != NEVER and ti[v] < s:
                # infected earlier: recovery draw unless recovered before s
                if tr[v] == s:
                    recover += 1
                elif tr[v] == NEVER or tr[v] > s:
                    stay += 1
                continue
            attackers = sum(attacking[u] for u in adj[v])
            if ti[v] == s:
                infect[attackers] += 1
            else:
                survive += attackers
    return PathSignature(survive, tuple(sorted(infect.items())), recover, stay)


class TraceProb(NamedTuple):
    prob: float
    log_prob: float


def trace_prob(graph: Graph, trace: SirTrace, params: SirParams) -> TraceProb:
    """Exact probability of the full sample path given its source."""
    logp = trace_signature(graph, trace).log_prob(params.q, params.p)
    return TraceProb(math.exp(logp) if logp > -math.inf else 0.0, logp)


# -- trace files -------------------------------------------------------------

def write_trace_csv(trace: SirTrace, graph: Graph, fh) -> None:
    fh.write("node_id,t_infect,t_recover\n")
    for v, (a, b) in enumerate(zip(trace.t_infect, trace.t_recover)):
        fh.write(f"{graph.original_id(v)},{a},{b}\n")


def read_trace_csv(text, graph: Graph, horizon: int) -> SirTrace:
    lines = [ln.strip() for ln in (io.StringIO(text) if isinstance(text, str) else text)]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].replace(" ", "") != "node_id,t_infect,t_recover":
        raise ParseError("trace CSV must start with header node_id,t_infect,t_recover", 1)
    ti = [NEVER] * graph.node_count
    tr = [NEVER] * graph.node_count
    index = graph.index_of
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            a, b, c = (int(x) for x in line.split(","))
            v = index[a]
        except (ValueError, KeyError):
            raise ParseError(f"bad trace row {line!r}", lineno) from None
        ti[v], tr[v] = b, c
    sources = [v for v, x in enumerate(ti) if x == 0]
    if len(sources) != 1:
        raise ParseError("trace must contain exactly one node infected at slot 0")
    return SirTrace(ti, tr, horizon, sources[0])


# -- lazily generated infinite trees -----------------------------------------

@dataclass(frozen=True)
class TreeOutbreak:
    """Outbreak on an implicit infinite tree, restricted to the touched nodes.

    Node 0 is the source; ``tree`` holds every node ever infected (plus the
    healthy halo when requested).  The CSR ``graph`` and the ``trace`` are
    built on first use since large outbreaks often need neither.
    """

    tree: RootedTree
    t_infect: np.ndarray
    t_recover: np.ndarray
    horizon: int

    @cached_property
    def graph(self) -> Graph:
        return self.tree.to_graph()

    @cached_property
    def trace(self) -> SirTrace:
        return SirTrace(self.t_infect.tolist(), self.t_recover.tolist(), self.horizon, 0)

    @property
    def touched_count(self) -> int:
        return int(np.count_nonzero(self.t_infect != NEVER))

    def infected_nodes(self) -> np.ndarray:
        return np.nonzero((self.t_infect != NEVER) & (self.t_recover == NEVER))[0]


def simulate_infinite_tree(params: SirParams, t: int, rng: np.random.Generator, *,
                           g: int | None = None, trials: int | None = None,
                           beta: float | None = None,
                           max_touched: int | None = None,
                           halo: bool = False) -> TreeOutbreak | None:
    """Simulate on an infinite tree without materializing susceptible nodes.

    Either ``g`` (regular tree: root has g+1 children, others g) or
    ``trials``/``beta`` (every node has Binomial(trials, beta) children).
    Children of a node are exchangeable, so only the count of still
    susceptible children is kept per node.  Returns None if more than
    ``max_touched`` nodes get infected.  With ``halo`` the children that
    were never infected are added as healthy leaves, so every touched node
    keeps its full degree in the returned graph.
    """
    if (g is None) == (trials is None):
        raise ValueError("give exactly one of g or (trials, beta)")

    def fanout(k):
        if g is not None:
            return np.full(k, g, dtype=np.int64)
        return rng.binomial(trials, beta, size=k).astype(np.int64)

    cap = 1024
    parent = np.empty(cap, dtype=np.int64)
    t_inf = np.empty(cap, dtype=np.int64)
    t_rec = np.empty(cap, dtype=np.int64)
    n_sus = np.empty(cap, dtype=np.int64)
    parent[0], t_inf[0], t_rec[0] = -1, 0, NEVER
    n_sus[0] = g + 1 if g is not None else fanout(1)[0]
    size = 1
    active = np.array([0], dtype=np.int64)
    fresh = np.empty(0, dtype=np.int64)
    for s in range(1, t + 1):
        active = np.concatenate([active, fresh])
        if len(active) == 0:
            break
        kids = rng.binomial(n_sus[active], params.q)
        n_sus[active] -= kids
        n_new = int(kids.sum())
        if max_touched is not None and size + n_new > max_touched:
            return None
        if size + n_new > cap:
            cap = max(2 * cap, size + n_new)
            parent, t_inf, t_rec, n_sus = (np.resize(a, cap) for a in (parent, t_inf, t_rec, n_sus))
        fresh = np.arange(size, size + n_new, dtype=np.int64)
        parent[fresh] = np.repeat(active, kids)
        t_inf[fresh] = s
        t_rec[fresh] = NEVER
        n_sus[fresh] = fanout(n_new)
        size += n_new
        recovered = rng.random(len(active)) < params.p
        t_rec[active[recovered]] = s
        active = active[~recovered]
    parent, t_inf, t_rec = parent[:size], t_inf[:size], t_rec[:size]
    # nodes are created slot by slot, so slots give parent-first batches
    bounds = np.searchsorted(t_inf, np.arange(t + 2)).tolist()
    if halo:
        extra = np.repeat(np.arange(size), n_sus[:size])
        parent = np.concatenate([parent, extra])
        t_inf = np.concatenate([t_inf, np.full(len(extra), NEVER)])
        t_rec = np.concatenate([t_rec, np.full(len(extra), NEVER)])
        bounds.append(len(parent))
    return TreeOutbreak(RootedTree(parent, bounds), t_inf, t_rec, t)
