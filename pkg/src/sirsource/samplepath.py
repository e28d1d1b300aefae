"""Optimal sample paths, exact likelihoods and the sample-path estimator.

On a tree rooted at a candidate source every node is attacked only by its
parent, so a sample path factorizes over parent/child pairs.  The dynamic
program below walks the rooted tree bottom-up with per-node state
``(t_infect, t_recover)`` and combines child messages either with ``max``
(most likely sample path) or with ``logsumexp`` (likelihood of the snapshot).
All tables carry a trailing axis over parameter pairs so one pass can score
many ``(q, p)`` values at once.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NoInfectedError, NotATreeError, TooLargeError
from .graph import Graph, Snapshot, bfs_distances, infection_eccentricity, jordan_infection_centers
from .sir import NEVER, SirParams, SirTrace, trace_signature, validate_trace

BRUTE_FORCE_NODE_CAP = 8
BRUTE_FORCE_MAX_T = 4
MLE_NODE_CAP = 10


class PathScore(NamedTuple):
    root: int
    t_star: int
    log_prob: float
    witness: SirTrace | None


def _require_tree(graph: Graph) -> None:
    if not graph.is_tree:
        raise NotATreeError("operation requires a tree")


def optimal_time(tree: Graph, snap: Snapshot, root: int) -> int:
    """Duration of the most likely sample path rooted at ``root``: its infection eccentricity."""
    _require_tree(tree)
    return int(infection_eccentricity(tree, snap, root))


def _logs(q, p):
    q = np.atleast_1d(np.asarray(q, dtype=np.float64))
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    with np.errstate(divide="ignore"):
        return np.log(q), np.log1p(-q), np.log(p), np.log1p(-p)


def _scaled(count, log_base):
    # count * log(base) with 0 * -inf taken as 0
    count = np.asarray(count)[..., None]
    with np.errstate(invalid="ignore"):
        out = count * log_base
    return np.where(count == 0, 0.0, out)


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    # logsumexp without scipy's per-call overhead; all -inf gives -inf
    m = x.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(x - m).sum(axis=axis)) + np.squeeze(m, axis=axis)


def _max(x: np.ndarray, axis: int) -> np.ndarray:
    return x.max(axis=axis)


def _orient(tree: Graph, root: int):
    dist = bfs_distances(tree, root)
    order = sorted(range(tree.node_count), key=dist.__getitem__)
    parent = [-1] * tree.node_count
    children: list[list[int]] = [[] for _ in range(tree.node_count)]
    adj = tree.adjacency
    for v in order:
        for w in adj[v]:
            if dist[w] == dist[v] + 1:
                parent[w] = v
                children[v].append(w)
    return order, parent, children


class _Tables:
    """State-space bookkeeping for horizon ``t``.

    Index ``t + 1`` stands for NEVER on both the infection and recovery axes.
    """

    def __init__(self, t: int):
        self.t = t
        size = t + 2
        self.never = t + 1
        valid = np.zeros((size, size), dtype=bool)
        stay = np.zeros((size, size), dtype=np.int64)
        rec = np.zeros((size, size), dtype=np.int64)
        end = np.zeros((size, size), dtype=np.int64)
        for a in range(t + 1):
            for b in range(a + 1, t + 1):
                valid[a, b] = True
                stay[a, b] = b - a - 1
                rec[a, b] = 1
                end[a, b] = b
            valid[a, self.never] = True
            stay[a, self.never] = t - a
            end[a, self.never] = t
        valid[self.never, self.never] = True
        self.valid, self.stay, self.rec, self.end = valid, stay, rec, end
        # edge[a_p, b_p, a']: how the parent state (a_p, b_p) infects a child at a'
        e_valid = np.zeros((size, size, size), dtype=bool)
        e_surv = np.zeros((size, size, size), dtype=np.int64)
        e_inf = np.zeros((size, size, size), dtype=np.int64)
        for a in range(t + 1):
            for b in range(size):
                if not valid[a, b]:
                    continue
                e = end[a, b]
                for c in range(a + 1, e + 1):
                    e_valid[a, b, c] = True
                    e_surv[a, b, c] = c - a - 1
                    e_inf[a, b, c] = 1
                e_valid[a, b, self.never] = True
                e_surv[a, b, self.never] = e - a
        e_valid[self.never, self.never, self.never] = True
        self.e_valid, self.e_surv, self.e_inf = e_valid, e_surv, e_inf

    def allowed(self, infected: bool, is_root: bool) -> np.ndarray:
        mask = self.valid.copy()
        if is_root:
            mask[1:, :] = False
        else:
            mask[0, :] = False
        if infected:
            mask[:, :self.never] = False
            mask[self.never, :] = False
        else:
            mask[:self.never, self.never] = False
        return mask


@lru_cache(maxsize=64)
def _tables(t: int) -> _Tables:
    return _Tables(t)


class _Model(NamedTuple):
    """Log-factor tensors for one or more horizons stacked on the trailing axis.

    Horizon ``t`` lives in the state space of the largest horizon ``T``:
    slots ``0..t`` keep their index, NEVER moves to ``T + 1`` and the unused
    slots are masked out.  The trailing axis runs over (horizon, parameter).
    """

    horizon: int
    never: int
    own: np.ndarray                 # (S, S, K)
    edge: np.ndarray                # (S, S, S, K)
    masks: dict                     # (infected, is_root) -> (S, S, K) bool


_model_cache: dict = {}


def _model(ts: tuple[int, ...], q, p) -> _Model:
    lq, l1q, lp, l1p = _logs(q, p)
    key = (ts, lq.tobytes(), lp.tobytes())
    if key in _model_cache:
        return _model_cache[key]
    big = max(ts)
    size = big + 2
    kp = len(lq)
    own = np.full((size, size, len(ts), kp), -np.inf)
    edge = np.full((size, size, size, len(ts), kp), -np.inf)
    kinds = [(i, r) for i in (False, True) for r in (False, True)]
    masks = {kd: np.zeros((size, size, len(ts), kp), dtype=bool) for kd in kinds}
    for j, t in enumerate(ts):
        tb = _tables(t)
        idx = np.append(np.arange(t + 1), big + 1)
        own[np.ix_(idx, idx, [j])] = (_scaled(tb.stay, l1p) + _scaled(tb.rec, lp))[:, :, None]
        e = _scaled(tb.e_surv, l1q) + _scaled(tb.e_inf, lq)
        edge[np.ix_(idx, idx, idx, [j])] = np.where(tb.e_valid[..., None], e, -np.inf)[:, :, :, None]
        for kd in kinds:
            masks[kd][np.ix_(idx, idx, [j])] = tb.allowed(*kd)[:, :, None, None]
    k = len(ts) * kp
    model = _Model(big, big + 1, own.reshape(size, size, k), edge.reshape(size, size, size, k),
                   {kd: m.reshape(size, size, k) for kd, m in masks.items()})
    if len(_model_cache) > 64:
        _model_cache.clear()
    _model_cache[key] = model
    return model


def _healthy_message(model: _Model, reduce, children: int) -> np.ndarray:
    """Message from a healthy node whose subtree is an infinite ``children``-ary tree.

    Nothing more than ``T`` hops below the parent can be reached, so ``T + 1``
    rounds of the recursion give the exact fixed point.
    """
    mask = model.masks[(False, False)]
    msg = None
    with np.errstate(invalid="ignore"):
        for _ in range(model.horizon + 1):
            val = model.own if msg is None or children == 0 else model.own + children * msg
            val = np.where(mask, val, -np.inf)
            msg = reduce(model.edge + reduce(val, 1)[None, None], 2)
    return msg


_pad_cache: dict = {}


def _tree_dp(tree: Graph, snap: Snapshot, root: int, ts, q, p, mode: str,
             keep_tables: bool = False, pad_degree: int | None = None):
    """Bottom-up pass; returns the root score per (horizon, parameter) pair.

    ``ts`` is a horizon or a tuple of horizons; with a tuple the result has
    shape ``(len(ts), K)``.
    """
    stacked = not np.isscalar(ts)
    ts = tuple(int(t) for t in ts) if stacked else (int(ts),)
    model = _model(ts, q, p)
    reduce = _max if mode == "max" else _lse
    order, parent, children = _orient(tree, root)
    pad = None
    if pad_degree is not None:
        deficit = pad_degree - tree.degrees
        if (deficit < 0).any():
            raise ValueError("pad_degree below a node degree")
        key = (ts, mode, pad_degree, np.asarray(q, float).tobytes(), np.asarray(p, float).tobytes())
        pad = _pad_cache.get(key)
        if pad is None:
            if len(_pad_cache) > 256:
                _pad_cache.clear()
            pad = _pad_cache[key] = _healthy_message(model, reduce, pad_degree - 1)
    own, edge = model.own, model.edge
    values: dict[int, np.ndarray] = {}
    messages: dict[int, np.ndarray] = {}
    with np.errstate(invalid="ignore", divide="ignore"):
        for v in reversed(order):
            mask = model.masks[(bool(snap.flags[v]), v == root)]
            val = np.where(mask, own, -np.inf)
            for w in children[v]:
                val = val + messages.pop(w) if not keep_tables else val + messages[w]
            if pad is not None and deficit[v]:
                val = val + deficit[v] * pad
            val = np.where(mask, val, -np.inf)
            values[v] = val
            if v != root:
                best_child = reduce(val, 1)                       # (A, K) over recovery
                messages[v] = reduce(edge + best_child[None, None], 2)  # (A_p, B_p, K)
    top = reduce(values[root][0], 0)
    if stacked:
        top = top.reshape(len(ts), -1)
    if keep_tables:
        return top, (model, values, children)
    return top


def _backtrack(root: int, t: int, tables, n: int, k: int = 0) -> SirTrace:
    model, values, children = tables
    edge = model.edge
    t_inf = [NEVER] * n
    t_rec = [NEVER] * n
    b0 = int(np.argmax(values[root][0, :, k]))
    state = {root: (0, b0)}
    stack = [root]
    while stack:
        v = stack.pop()
        a, b = state[v]
        t_inf[v] = NEVER if a == model.never else a
        t_rec[v] = NEVER if b == model.never else b
        for w in children[v]:
            best_child = values[w][..., k].max(axis=1)
            aw = int(np.argmax(edge[a, b, :, k] + best_child))
            bw = int(np.argmax(values[w][aw, :, k]))
            state[w] = (aw, bw)
            stack.append(w)
    return SirTrace(t_inf, t_rec, t, root)


def optimal_path_log_probs(tree: Graph, snap: Snapshot, root: int, t: int, q, p,
                           pad_degree: int | None = None) -> np.ndarray:
    """Max log-probability over sample paths of duration ``t`` for each ``(q[k], p[k])``.

    ``pad_degree`` works as in :func:`snapshot_log_likelihoods`.
    """
    _require_tree(tree)
    return _tree_dp(tree, snap, root, t, q, p, "max", pad_degree=pad_degree)


def snapshot_log_likelihoods(tree: Graph, snap: Snapshot, root: int, t: int, q, p,
                             pad_degree: int | None = None) -> np.ndarray:
    """``log Pr(snapshot at t | source=root)`` on a tree, vectorized over parameters.

    With ``pad_degree`` every node is topped up to that degree with healthy
    infinite subtrees, which gives the likelihood on the infinite regular tree
    whose observed part is ``tree``.
    """
    _require_tree(tree)
    return _tree_dp(tree, snap, root, t, q, p, "sum", pad_degree=pad_degree)


def optimal_path_prob(tree: Graph, snap: Snapshot, root: int, params: SirParams,
                      t: int | None = None) -> PathScore:
    """Most likely sample path rooted at ``root`` that produces ``snap``.

    ``t`` defaults to the optimal duration (the infection eccentricity of
    ``root``).  ``log_prob`` is ``-inf`` and ``witness`` None when no path of
    that duration is consistent with the snapshot.
    """
    _require_tree(tree)
    if t is None:
        t = optimal_time(tree, snap, root)
    top, tables = _tree_dp(tree, snap, root, t, params.q, params.p, "max", keep_tables=True)
    logp = float(top[0])
    if logp == -math.inf:
        return PathScore(root, t, logp, None)
    return PathScore(root, t, logp, _backtrack(root, t, tables, tree.node_count))


def healthy_subtree_factor(q: float, p: float, attack_slots: int, n_children: int,
                           slots_left: int) -> float:
    """Best probability for a healthy child subtree in closed form.

    The child either resists all ``attack_slots`` attacks, or is infected in
    the first attacked slot, recovers in the next one, and its own
    ``n_children`` children each resist that single slot.  ``slots_left`` is
    the number of slots after the parent's infection; the second option needs
    two of them.  This equals the dynamic program on an infinite tree whose
    nodes all have ``n_children`` children.  On finite trees leaves have no
    children to protect, and for large q an infected leaf can do better.
    """
    resist = (1.0 - q) ** attack_slots
    if attack_slots >= 1 and slots_left >= 2:
        return max(resist, q * p * (1.0 - q) ** n_children)
    return resist


# -- exhaustive enumeration ---------------------------------------------------

@dataclass
class PathEnumeration:
    """Every sample path rooted at ``root`` with horizon ``t`` consistent with a snapshot.

    Paths sharing a factor signature are merged: ``signatures`` has one row per
    distinct ``(survive, infect, recover, stay)`` exponent vector,
    ``multiplicity`` counts the paths behind it and ``witnesses`` keeps one.
    """

    root: int
    t: int
    signatures: np.ndarray
    multiplicity: np.ndarray
    witnesses: list[SirTrace]
    path_count: int

    def log_probs(self, q, p) -> np.ndarray:
        """(distinct signatures, params) matrix of path log-probabilities."""
        lq, l1q, lp, l1p = _logs(q, p)
        s = self.signatures
        return (_scaled(s[:, 0], l1q) + _scaled(s[:, 1], lq)
                + _scaled(s[:, 2], lp) + _scaled(s[:, 3], l1p))

    def max_log_prob(self, q, p) -> np.ndarray:
        if len(self.signatures) == 0:
            return np.full(np.atleast_1d(q).shape, -np.inf)
        return self.log_probs(q, p).max(axis=0)

    def total_log_prob(self, q, p) -> np.ndarray:
        if len(self.signatures) == 0:
            return np.full(np.atleast_1d(q).shape, -np.inf)
        lp = self.log_probs(q, p) + np.log(self.multiplicity)[:, None]
        return _lse(lp, 0)


def _enumerate_tree(tree: Graph, snap: Snapshot, root: int, t: int):
    order, parent, _ = _orient(tree, root)
    n = tree.node_count
    y = snap.flags
    if y[root]:
        root_opts = [NEVER]
    else:
        root_opts = list(range(1, t + 1))
    t_inf = np.full((len(root_opts), n), NEVER, dtype=np.int64)
    t_rec = np.full((len(root_opts), n), NEVER, dtype=np.int64)
    sig = np.zeros((len(root_opts), 4), dtype=np.int64)
    t_inf[:, root] = 0
    t_rec[:, root] = root_opts
    b = np.asarray(root_opts, dtype=np.int64)
    sig[:, 2] = (b != NEVER)
    sig[:, 3] = np.where(b == NEVER, t, b - 1)
    for v in order[1:]:
        if len(t_inf) == 0:
            break
        opts = [] if y[v] else [(NEVER, NEVER)]
        for a in range(1, t + 1):
            if y[v]:
                opts.append((a, NEVER))
            else:
                opts.extend((a, r) for r in range(a + 1, t + 1))
        if not opts:
            t_inf = t_inf[:0]
            break
        oa = np.array([o[0] for o in opts], dtype=np.int64)
        ob = np.array([o[1] for o in opts], dtype=np.int64)
        ap = t_inf[:, parent[v]][:, None]
        bp = t_rec[:, parent[v]][:, None]
        end = np.where(bp == NEVER, t, bp)
        ok = np.where(oa[None] == NEVER, True,
                      (ap != NEVER) & (oa[None] > ap) & (oa[None] <= end))
        rows, cols = np.nonzero(ok)
        t_inf, t_rec, sig = t_inf[rows], t_rec[rows], sig[rows].copy()
        a_new, b_new = oa[cols], ob[cols]
        ap, end = ap[rows, 0], end[rows, 0]
        t_inf[:, v] = a_new
        t_rec[:, v] = b_new
        infected = a_new != NEVER
        parent_on = ap != NEVER
        sig[:, 0] += np.where(infected, a_new - ap - 1, np.where(parent_on, end - ap, 0))
        sig[:, 1] += infected
        sig[:, 2] += infected & (b_new != NEVER)
        sig[:, 3] += np.where(infected, np.where(b_new == NEVER, t - a_new, b_new - a_new - 1), 0)
    return t_inf, t_rec, sig


def enumerate_traces(graph: Graph, root: int, t: int, snap: Snapshot | None = None,
                     node_cap: int = BRUTE_FORCE_NODE_CAP):
    """Yield every valid trace rooted at ``root`` with horizon ``t`` (any graph).

    With ``snap`` given, only traces whose final state matches it are kept.
    Plain product enumeration; meant for a handful of nodes.
    """
    if graph.node_count > node_cap or t > BRUTE_FORCE_MAX_T:
        raise TooLargeError(f"enumeration limited to {node_cap} nodes and t <= {BRUTE_FORCE_MAX_T}")
    per_node = []
    for v in range(graph.node_count):
        flag = None if snap is None else snap.flags[v]
        if v == root:
            opts = [(0, r) for r in range(1, t + 1)] if flag is not True else []
            per_node.append(opts + ([(0, NEVER)] if flag is not False else []))
            continue
        opts = [] if flag is True else [(NEVER, NEVER)]
        for a in range(1, t + 1):
            if flag is not False:
                opts.append((a, NEVER))
            if flag is not True:
                opts.extend((a, r) for r in range(a + 1, t + 1))
        per_node.append(opts)
    for combo in itertools.product(*per_node):
        trace = SirTrace([c[0] for c in combo], [c[1] for c in combo], t, root)
        try:
            validate_trace(graph, trace)
        except ValueError:
            continue
        yield trace


def enumerate_paths(tree: Graph, snap: Snapshot, root: int, t: int,
                    node_cap: int = BRUTE_FORCE_NODE_CAP,
                    max_t: int = BRUTE_FORCE_MAX_T) -> PathEnumeration:
    """Exhaustively list the consistent sample paths on a tree for horizon ``t``.

    Children are expanded after their parent, and a child can only be
    infected while its parent is infectious; no other pruning is done.
    """
    _require_tree(tree)
    if tree.node_count > node_cap or t > max_t:
        raise TooLargeError(f"enumeration limited to {node_cap} nodes and t <= {max_t}")
    t_inf, t_rec, sig = _enumerate_tree(tree, snap, root, t)
    if len(sig) == 0:
        return PathEnumeration(root, t, np.zeros((0, 4), dtype=np.int64),
                               np.zeros(0, dtype=np.int64), [], 0)
    uniq, first, counts = np.unique(sig, axis=0, return_index=True, return_counts=True)
    witnesses = [SirTrace(t_inf[i].tolist(), t_rec[i].tolist(), t, root) for i in first]
    return PathEnumeration(root, t, uniq, counts, witnesses, len(sig))


def brute_force_osp(graph: Graph, snap: Snapshot, root: int, params: SirParams, t: int,
                    node_cap: int = BRUTE_FORCE_NODE_CAP) -> PathScore:
    """Most likely consistent sample path by exhaustive enumeration.

    Works on any graph within the caps; on loopy graphs each candidate path is
    scored slot by slot.  An empty consistent set gives ``log_prob=-inf``.
    """
    if graph.node_count > node_cap or t > BRUTE_FORCE_MAX_T:
        raise TooLargeError(f"enumeration limited to {node_cap} nodes and t <= {BRUTE_FORCE_MAX_T}")
    if graph.is_tree:
        paths = enumerate_paths(graph, snap, root, t, node_cap)
        if paths.path_count == 0:
            return PathScore(root, t, -math.inf, None)
        lp = paths.log_probs(params.q, params.p)[:, 0]
        best = int(np.argmax(lp))
        return PathScore(root, t, float(lp[best]), paths.witnesses[best])
    best_score, best_trace = -math.inf, None
    for trace in enumerate_traces(graph, root, t, snap, node_cap):
        lp = trace_signature(graph, trace).log_prob(params.q, params.p)
        if best_trace is None or lp > best_score:
            best_score, best_trace = lp, trace
    return PathScore(root, t, best_score, best_trace)


# -- estimators ----------------------------------------------------------------

class Ranking(NamedTuple):
    estimator: int
    ranking: list[PathScore]


def sample_path_estimator(tree: Graph, snap: Snapshot, params: SirParams,
                          mode: str = "centers") -> Ranking:
    """Root of the most likely sample path.

    ``mode="centers"`` scores only the Jordan infection centers;
    ``mode="full"`` scores every node (used to check that the winner is a
    center).  Ties go to the lower node index.
    """
    _require_tree(tree)
    if mode == "centers":
        roots = list(jordan_infection_centers(tree, snap).centers)
    elif mode == "full":
        roots = list(range(tree.node_count))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    scores = [optimal_path_prob(tree, snap, r, params) for r in roots]
    ranking = sorted(scores, key=lambda s: (-s.log_prob, s.root))
    return Ranking(ranking[0].root, ranking)


# Markov chain over {S, I, R}^N, states encoded base 3 with digit 1 = I, 2 = R
_S, _I, _R = 0, 1, 2


def forward_distributions(graph: Graph, source: int, params: SirParams, t_max: int,
                          node_cap: int = MLE_NODE_CAP):
    """Exact state distributions ``X(0), ..., X(t_max)`` as (codes, probs) pairs."""
    n = graph.node_count
    if n > node_cap:
        raise TooLargeError(f"exact chain limited to {node_cap} nodes")
    powers = 3 ** np.arange(n, dtype=np.int64)
    adj = np.zeros((n, n), dtype=np.int64)
    for u, v in graph.edges().tolist():
        adj[u, v] = adj[v, u] = 1
    codes = np.array([powers[source]], dtype=np.int64)
    probs = np.array([1.0])
    out = [(codes, probs)]
    for _ in range(t_max):
        digits = (codes[:, None] // powers[None, :]) % 3
        attackers = (digits == _I).astype(np.int64) @ adj
        advance = np.where(digits == _S, -np.expm1(attackers * math.log1p(-params.q))
                           if params.q < 1 else (attackers > 0).astype(float), 0.0)
        advance = np.where(digits == _I, params.p, advance)
        for j in range(n):
            a = advance[:, j]
            move = a > 0
            if not move.any():
                continue
            keep = a < 1
            codes = np.concatenate([codes[keep], codes[move] + powers[j]])
            probs = np.concatenate([probs[keep] * (1 - a[keep]), probs[move] * a[move]])
            advance = np.concatenate([advance[keep], advance[move]])
        uniq, inv = np.unique(codes, return_inverse=True)
        probs = np.bincount(inv, weights=probs)
        codes = uniq
        out.append((codes, probs))
    return out


def snapshot_probabilities(graph: Graph, snap: Snapshot, source: int, params: SirParams,
                           t_max: int, node_cap: int = MLE_NODE_CAP) -> np.ndarray:
    """``Pr(F(X(t)) = Y | source)`` for ``t = 0..t_max`` from the exact chain."""
    n = graph.node_count
    powers = 3 ** np.arange(n, dtype=np.int64)
    y = np.asarray(snap.flags, dtype=bool)
    res = []
    for codes, probs in forward_distributions(graph, source, params, t_max, node_cap):
        digits = (codes[:, None] // powers[None, :]) % 3
        match = np.all((digits == _I) == y[None, :], axis=1)
        res.append(float(probs[match].sum()))
    return np.asarray(res)


def infected_hull(tree: Graph, snap: Snapshot) -> list[int]:
    """Nodes of the smallest subtree spanning all infected nodes."""
    _require_tree(tree)
    if not snap.infected_set:
        raise NoInfectedError("snapshot contains no infected node")
    deg = tree.degrees.copy()
    alive = np.ones(tree.node_count, dtype=bool)
    adj = tree.adjacency
    stack = [v for v in range(tree.node_count) if deg[v] <= 1 and not snap.flags[v]]
    while stack:
        v = stack.pop()
        if not alive[v] or snap.flags[v]:
            continue
        alive[v] = False
        for w in adj[v]:
            if alive[w]:
                deg[w] -= 1
                if deg[w] <= 1 and not snap.flags[w]:
                    stack.append(w)
    return np.nonzero(alive)[0].tolist()


def _all_roots(tree: Graph, snap: Snapshot, ts: tuple[int, ...], q, p, mode: str,
               pad_degree: int | None = None):
    """Root score for every node of ``tree`` at once, by rerooting.

    Returns ``(per_root, halo)`` with shapes ``(N, len(ts), K)``.  ``halo[u]``
    scores a healthy off-tree neighbour of ``u`` as the root (only with
    ``pad_degree``; ``-inf`` where ``u`` has no free slot).
    """
    n = tree.node_count
    model = _model(ts, q, p)
    reduce = _max if mode == "max" else _lse
    own, edge = model.own, model.edge
    shape = own.shape
    deficit = np.zeros(n, dtype=np.int64)
    pad = np.zeros(shape[2:])
    if pad_degree is not None:
        deficit = pad_degree - tree.degrees
        if (deficit < 0).any():
            raise ValueError("pad_degree below a node degree")
        pad = _healthy_message(model, reduce, pad_degree - 1)
    order, parent, children = _orient(tree, 0)
    adj = tree.adjacency
    inbox: list[dict[int, np.ndarray]] = [{} for _ in range(n)]   # inbox[v][w]: message w -> v

    def send(v, exclude, extra_pad=0):
        total = own + (deficit[v] - extra_pad) * pad if deficit[v] - extra_pad else own
        for w, msg in inbox[v].items():
            if w != exclude:
                total = total + msg
        val = np.where(model.masks[(bool(snap.flags[v]), False)], total, -np.inf)
        return reduce(edge + reduce(val, 1)[None, None], 2)

    with np.errstate(invalid="ignore", divide="ignore"):
        for v in reversed(order):
            if parent[v] >= 0:
                inbox[parent[v]][v] = send(v, parent[v])
        for v in order:
            for w in children[v]:
                inbox[w][v] = send(v, w)
        per_root = np.empty((n,) + (len(ts), shape[2] // len(ts)))
        halo = np.full_like(per_root, -np.inf)
        for v in range(n):
            total = own + deficit[v] * pad if deficit[v] else own
            for w in adj[v]:
                total = total + inbox[v][w]
            val = np.where(model.masks[(bool(snap.flags[v]), True)], total, -np.inf)
            per_root[v] = reduce(val[0], 0).reshape(len(ts), -1)
            if deficit[v] > 0:
                msg = send(v, None, extra_pad=1)
                val = own + msg + (pad_degree - 1) * pad
                val = np.where(model.masks[(False, True)], val, -np.inf)
                halo[v] = reduce(val[0], 0).reshape(len(ts), -1)
    return per_root, halo


def _log_per_t(graph: Graph, snap: Snapshot, params: SirParams, t_max: int,
               pad_degree: int | None) -> np.ndarray:
    # (N, t_max + 1) log-likelihoods from the tree recursion.  With padding,
    # sources on the infected hull or one hop off it are scored exactly on
    # the infinite tree; off-hull neighbours of one hull node are
    # interchangeable and share the same score.
    ts = tuple(range(t_max + 1))
    if pad_degree is None:
        per_root, _ = _all_roots(graph, snap, ts, params.q, params.p, "sum")
        return per_root[:, :, 0]
    out = np.full((graph.node_count, t_max + 1), -np.inf)
    hull = infected_hull(graph, snap)
    local = {v: i for i, v in enumerate(hull)}
    adj = graph.adjacency
    edges = [(local[u], local[w]) for u in hull for w in adj[u] if w in local and u < w]
    core = Graph.from_edges(len(hull), edges)
    core_snap = Snapshot(tuple(snap.flags[v] for v in hull))
    per_root, halo = _all_roots(core, core_snap, ts, params.q, params.p, "sum", pad_degree)
    for u in hull:
        out[u] = per_root[local[u], :, 0]
        outside = [w for w in adj[u] if w not in local]
        if outside:
            out[outside] = halo[local[u], :, 0]
    return out


class MleResult(NamedTuple):
    estimator: int
    scores: np.ndarray      # log scores, -inf for impossible sources


def mle_estimator(graph: Graph, snap: Snapshot, params: SirParams, t_max: int,
                  rng: np.random.Generator, score: str = "max", method: str = "auto",
                  node_cap: int = MLE_NODE_CAP, pad_degree: int | None = None) -> MleResult:
    """Maximum-likelihood source with the unknown duration handled by ``score``.

    ``score="max"`` takes ``max_t Pr(Y | v, t)``; ``score="sum"`` averages over
    ``t = 0..t_max`` (uniform prior).  ``method="chain"`` propagates the exact
    3^N-state chain; ``method="tree"`` uses the sum-product tree recursion;
    ``"auto"`` picks ``tree`` on trees.

    ``pad_degree`` treats ``graph`` as the observed part of an infinite
    regular tree of that degree.  Only nodes on the infected hull or adjacent
    to it are scored; the rest get ``-inf``.  Scores are natural logs and
    differences below 1e-9 count as ties.
    """
    if method == "auto":
        method = "tree" if graph.is_tree else "chain"
    n = graph.node_count
    if not snap.infected_set:
        raise NoInfectedError("snapshot contains no infected node")
    if pad_degree is not None and method != "tree":
        raise ValueError("pad_degree needs method='tree'")
    if method == "chain":
        if n > node_cap:
            raise TooLargeError(f"exact chain limited to {node_cap} nodes")
        probs = np.array([snapshot_probabilities(graph, snap, v, params, t_max, node_cap)
                          for v in range(n)])
        with np.errstate(divide="ignore"):
            log_t = np.log(probs)
    elif method == "tree":
        _require_tree(graph)
        log_t = _log_per_t(graph, snap, params, t_max, pad_degree)
    else:
        raise ValueError(f"unknown method {method!r}")
    if score == "max":
        scores = log_t.max(axis=1)
    elif score == "sum":
        m = log_t.max(axis=1, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            scores = np.log(np.exp(log_t - m).mean(axis=1)) + m[:, 0]
    else:
        raise ValueError(f"unknown score {score!r}")
    best = scores.max()
    ties = np.nonzero(np.abs(scores - best) <= 1e-9)[0].tolist()
    est = ties[0] if len(ties) == 1 else ties[int(rng.integers(len(ties)))]
    return MleResult(int(est), scores)
