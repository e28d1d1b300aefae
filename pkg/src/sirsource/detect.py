"""Source estimators working on a graph and one snapshot.

``reverse_infection`` runs the synchronous flooding protocol: every infected
node floods its id, each node records the round at which it first hears each
id, and the protocol stops at the first round where some node has heard all
of them.  Ties among those nodes go to the smallest total arrival time, then
to a seeded uniform draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedEvidenceError, NoInfectedError
from .graph import Graph, RootedTree, Snapshot, infection_distance_sums, jordan_infection_centers

# above this many (infected x node) bits the literal protocol is replaced by
# the equivalent distance computation
MESSAGE_PASSING_BUDGET = 20_000_000


@dataclass(frozen=True)
class DetectionResult:
    estimator: int
    candidates: tuple[int, ...]
    min_eccentricity: int
    tie_scores: dict[int, int]
    rounds: int
    messages_per_round: tuple[int, ...] = ()
    # candidate -> {infected node: arrival round}; empty when not message passing
    arrival_times: dict[int, dict[int, int]] = field(default_factory=dict)
    # per round, the largest number of messages any single node sent
    max_sends_per_round: tuple[int, ...] = ()
    method: str = "message-passing"


def _break_tie(options, rng: np.random.Generator) -> int:
    options = sorted(options)
    if len(options) == 1:
        return options[0]
    return options[int(rng.integers(len(options)))]


def _check(graph: Graph, snap: Snapshot) -> tuple[int, ...]:
    if len(snap) != graph.node_count:
        raise ValueError("snapshot length does not match graph")
    infected = snap.infected_set
    if not infected:
        raise NoInfectedError("snapshot contains no infected node")
    return infected


def _flood(graph: Graph, infected: tuple[int, ...]):
    adj = graph.adjacency
    n = graph.node_count
    full = (1 << len(infected)) - 1
    known = [0] * n
    fresh = [0] * n
    history: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for bit, i in enumerate(infected):
        known[i] |= 1 << bit
        fresh[i] |= 1 << bit
    for i in infected:
        history[i].append((0, fresh[i]))
    messages = []
    max_sends = []
    rnd = 0
    while True:
        done = [u for u in range(n) if known[u] == full]
        if done:
            return rnd, done, history, messages, max_sends
        senders = [u for u in range(n) if fresh[u]]
        if not senders:
            raise DisconnectedEvidenceError("no node reaches every infected node")
        # ids learned in the same round travel in one message per neighbor
        sends = [len(adj[u]) for u in senders]
        messages.append(sum(sends))
        max_sends.append(max(sends))
        rnd += 1
        incoming = [0] * n
        for u in senders:
            m = fresh[u]
            for w in adj[u]:
                incoming[w] |= m
        for u in range(n):
            new = incoming[u] & ~known[u]
            fresh[u] = new
            if new:
                known[u] |= new
                history[u].append((rnd, new))


def _arrivals(history, infected) -> dict[int, int]:
    out = {}
    for rnd, mask in history:
        bit = 0
        while mask:
            if mask & 1:
                out[infected[bit]] = rnd
            mask >>= 1
            bit += 1
    return out


def reverse_infection(graph: Graph, snap: Snapshot, rng: np.random.Generator,
                      method: str = "auto") -> DetectionResult:
    """Reverse Infection estimator.

    ``method`` is ``"message-passing"`` (the literal protocol), ``"distance"``
    (same estimator from BFS distances, no message accounting) or ``"auto"``,
    which falls back to distances only for very large outbreaks.
    """
    infected = _check(graph, snap)
    if method == "auto":
        method = ("message-passing"
                  if len(infected) * graph.node_count <= MESSAGE_PASSING_BUDGET else "distance")
    if method == "distance":
        centers, ecc = jordan_infection_centers(graph, snap)
        sums = infection_distance_sums(graph, snap)
        scores = {c: int(sums[c]) for c in centers}
        best = min(scores.values())
        est = _break_tie([c for c, s in scores.items() if s == best], rng)
        return DetectionResult(est, centers, ecc, scores, ecc, method="distance")
    if method != "message-passing":
        raise ValueError(f"unknown method {method!r}")
    rounds, done, history, messages, max_sends = _flood(graph, infected)
    arrivals = {u: _arrivals(history[u], infected) for u in done}
    scores = {u: sum(a.values()) for u, a in arrivals.items()}
    best = min(scores.values())
    est = _break_tie([u for u, s in scores.items() if s == best], rng)
    return DetectionResult(est, tuple(done), rounds, scores, rounds,
                           tuple(messages), arrivals, tuple(max_sends))


def closeness_estimator(graph: Graph, snap: Snapshot, rng: np.random.Generator) -> int:
    """Node with the largest infection closeness (smallest distance sum)."""
    _check(graph, snap)
    sums = infection_distance_sums(graph, snap)
    best = sums.min()
    return _break_tie(np.nonzero(sums == best)[0].tolist(), rng)


def reverse_infection_rooted(tree: RootedTree, infected: np.ndarray,
                             rng: np.random.Generator) -> DetectionResult:
    """Reverse Infection on a parent-array tree, via distances (for huge outbreaks)."""
    centers, ecc = tree.jordan_centers(infected)
    if len(centers) == 1:
        return DetectionResult(centers[0], centers, ecc, {}, ecc, method="distance")
    sums = tree.distance_sums(infected)
    scores = {c: int(sums[c]) for c in centers}
    best = min(scores.values())
    est = _break_tie([c for c, s in scores.items() if s == best], rng)
    return DetectionResult(est, centers, ecc, scores, ecc, method="distance")


def closeness_rooted(tree: RootedTree, infected: np.ndarray, rng: np.random.Generator) -> int:
    if len(infected) == 0:
        raise NoInfectedError("snapshot contains no infected node")
    sums = tree.distance_sums(infected)
    return _break_tie(np.nonzero(sums == sums.min())[0].tolist(), rng)


def random_guess(graph: Graph, rng: np.random.Generator) -> int:
    return int(rng.integers(graph.node_count))
