"""Monte Carlo experiment harness for source detection.

Scenarios
---------
``small-tree``     infinite (g+1)-regular tree with small outbreaks; the MLE
                   is computed exactly on the infected hull.
``regular-tree``   infinite (g+1)-regular tree, simulated lazily.
``binomial-tree``  infinite tree with Binomial(trials_binomial, beta) children.
``network-file``   a user-supplied edge list, uniformly random source.
``distance-vs-t``  regular tree with fixed (q, p); the grid runs over t.

Each trial draws its own RNG stream from ``(seed, grid index, trial)``, so
outputs do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
from scipy.stats import binomtest

from .detect import (
    closeness_estimator,
    closeness_rooted,
    random_guess,
    reverse_infection,
    reverse_infection_rooted,
)
from .errors import ConfigError, InfeasibleScenarioError
from .graph import Graph, Snapshot, distances_from, load_edge_list
from .samplepath import mle_estimator, sample_path_estimator
from .sir import SirParams, TreeOutbreak, simulate_capped, simulate_infinite_tree, snapshot

SCENARIOS = ("small-tree", "regular-tree", "binomial-tree", "network-file", "distance-vs-t")
ALGORITHMS = ("ri", "cc", "mle", "osp", "random")

_DEFAULTS = {
    "small-tree": dict(grid=(2, 3), algorithms=("ri", "cc", "mle"), t_range=(3, 5),
                       count_range=(1, 100), mle_t_max=10),
    "regular-tree": dict(grid=(4, 6, 8, 10), algorithms=("ri", "cc"), t_range=(3, 20),
                         count_range=(1, 500)),
    "binomial-tree": dict(grid=(0.3, 0.5, 0.7), algorithms=("ri", "cc"), t_range=(3, 20),
                          count_range=(1, 500)),
    "network-file": dict(grid=(0,), algorithms=("ri", "random"), q_range=(0.0, 0.05),
                         t_range=(3, 200), count_range=(50, 500)),
    "distance-vs-t": dict(grid=(5, 10, 20), algorithms=("ri",), q=0.5, p=0.2, g=3,
                          count_range=(1, 20_000_000)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    grid: tuple = ()
    trials: int = 500
    seed: int = 0
    algorithms: tuple[str, ...] = ("ri", "cc")
    q_range: tuple[float, float] = (0.0, 1.0)
    p_rule: str = "below-q"          # p ~ U(0, q); or "fixed" with ``p`` set
    q: float | None = None           # fixes q when set
    p: float | None = None
    t_range: tuple[int, int] = (3, 20)
    count_range: tuple[int, int] = (1, 500)   # accepted infected+recovered counts
    g: int = 3                       # child degree for distance-vs-t
    trials_binomial: int = 10
    mle_t_max: int = 10
    mle_score: str = "max"
    input: str | None = None
    retry_budget: int = 10_000
    workers: int = 1
    timing: bool = False

    @classmethod
    def for_scenario(cls, scenario: str, **overrides) -> "ExperimentConfig":
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}")
        opts = dict(_DEFAULTS[scenario])
        opts.update(overrides)
        return cls(scenario=scenario, **opts).validated()

    def validated(self) -> "ExperimentConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.grid:
            raise ConfigError("grid must not be empty")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad or not self.algorithms:
            raise ConfigError(f"unknown algorithms {sorted(bad)}")
        if self.t_range[0] > self.t_range[1] or self.count_range[0] > self.count_range[1]:
            raise ConfigError("empty t_range or count_range")
        if self.scenario == "network-file" and not self.input:
            raise ConfigError("network-file scenario needs input=<edge list path>")
        tree_only = {"mle", "osp"} & set(self.algorithms)
        if tree_only and self.scenario == "network-file":
            raise ConfigError("mle/osp need tree scenarios")
        if "mle" in self.algorithms and self.scenario != "small-tree":
            raise ConfigError("mle is only allowed in the small-tree scenario")
        if self.p_rule not in ("below-q", "fixed") or (self.p_rule == "fixed" and self.p is None):
            raise ConfigError("p_rule must be below-q, or fixed with p set")
        return self


_TUPLE_KEYS = {"grid", "algorithms", "q_range", "t_range", "count_range"}


def parse_config(text: str) -> ExperimentConfig:
    """Flat ``key = value`` format; ``#`` starts a comment, lists are comma separated."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key.replace("-", "_")] = value
    if "scenario" not in raw:
        raise ConfigError("config needs a scenario key")
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    opts = {}
    for key, value in raw.items():
        if key == "scenario":
            continue
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        opts[key] = _convert(key, value)
    return ExperimentConfig.for_scenario(raw["scenario"], **opts)


def _number(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def _convert(key: str, value: str):
    try:
        if key in _TUPLE_KEYS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(items) if key == "algorithms" else tuple(_number(v) for v in items)
        if key in ("input", "p_rule", "mle_score"):
            return value
        if key == "timing":
            return value.lower() in ("1", "true", "yes")
        if key in ("q", "p"):
            return float(value)
        return int(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


# -- trials ------------------------------------------------------------------

@dataclass
class AlgoOutcome:
    estimate: int
    distance: int
    candidates: int | None = None
    contains_source: bool | None = None
    wall_ms: float | None = None


@dataclass
class TrialRecord:
    trial: int
    param: object
    q: float
    p: float
    t: int
    source: int
    infected_count: int     # infected + recovered nodes
    observed_infected: int
    outcomes: dict[str, AlgoOutcome] = field(default_factory=dict)


def trial_rng(seed: int, grid_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, grid_index, trial]))


def _draw_params(cfg: ExperimentConfig, rng) -> SirParams:
    if cfg.q is not None:
        q = cfg.q
    else:
        q = 0.0
        while q <= cfg.q_range[0]:
            q = rng.uniform(*cfg.q_range)
    if cfg.p_rule == "fixed":
        p = cfg.p
    else:
        p = 0.0
        while p <= 0.0:
            p = rng.uniform(0.0, q)
    return SirParams(q, p)


_graph_cache: dict = {}


def _scenario_graph(cfg: ExperimentConfig, param) -> Graph | None:
    key = (cfg.scenario, param, cfg.input)
    if key not in _graph_cache:
        if cfg.scenario == "network-file":
            with open(cfg.input, encoding="utf-8") as fh:
                _graph_cache[key] = load_edge_list(fh)
        else:
            _graph_cache[key] = None
    return _graph_cache[key]


class _Outbreak(NamedTuple):
    params: SirParams
    t: int
    source: int
    touched: int
    infected: np.ndarray
    graph: Graph | None          # set for fixed graphs
    lazy: TreeOutbreak | None    # set for lazily simulated trees

    def full_graph(self) -> Graph:
        return self.graph if self.graph is not None else self.lazy.graph


def _sample_outbreak(cfg: ExperimentConfig, param, rng) -> _Outbreak:
    lo, hi = cfg.count_range
    graph = _scenario_graph(cfg, param)
    for _ in range(cfg.retry_budget):
        params = _draw_params(cfg, rng)
        t = int(param) if cfg.scenario == "distance-vs-t" else int(rng.integers(cfg.t_range[0], cfg.t_range[1] + 1))
        if graph is not None:
            source = int(rng.integers(graph.node_count))
            trace = simulate_capped(graph, source, params, t, rng, max_touched=hi)
            if trace is None:
                continue
            infected = np.asarray(snapshot(trace).infected_set, dtype=np.int64)
            out = _Outbreak(params, t, source, trace.touched_count, infected, graph, None)
        else:
            kw = {"g": int(param)} if cfg.scenario in ("regular-tree", "small-tree") else (
                {"g": cfg.g} if cfg.scenario == "distance-vs-t"
                else {"trials": cfg.trials_binomial, "beta": float(param)})
            lazy = simulate_infinite_tree(params, t, rng, max_touched=hi,
                                          halo=cfg.scenario == "small-tree", **kw)
            if lazy is None:
                continue
            out = _Outbreak(params, t, 0, lazy.touched_count, lazy.infected_nodes(), None, lazy)
        if len(out.infected) == 0 or out.touched < lo:
            continue
        return out
    raise InfeasibleScenarioError(
        f"{cfg.scenario} param={param}: no acceptable outbreak in {cfg.retry_budget} attempts")


def run_trial(cfg: ExperimentConfig, grid_index: int, trial: int) -> TrialRecord:
    param = cfg.grid[grid_index]
    rng = trial_rng(cfg.seed, grid_index, trial)
    ob = _sample_outbreak(cfg, param, rng)
    # records use the node ids of the input file
    ident = ob.graph.original_id if ob.graph is not None else int
    rec = TrialRecord(trial, param, ob.params.q, ob.params.p, ob.t, ident(ob.source), ob.touched,
                      len(ob.infected))
    # lazily simulated trees can reach millions of nodes; RI and CC then run
    # on the parent array and never build the CSR graph
    rooted = ob.lazy is not None and set(cfg.algorithms) <= {"ri", "cc"}
    if rooted:
        dist = ob.lazy.tree.depth
    else:
        graph = ob.full_graph()
        snap = Snapshot.from_infected(graph.node_count, ob.infected.tolist())
    estimates = {}
    for algo in cfg.algorithms:
        start = time.perf_counter()
        extra = {}
        if algo == "ri":
            res = (reverse_infection_rooted(ob.lazy.tree, ob.infected, rng) if rooted
                   else reverse_infection(graph, snap, rng))
            est = res.estimator
            extra = dict(candidates=len(res.candidates), contains_source=ob.source in res.candidates)
        elif algo == "cc":
            est = (closeness_rooted(ob.lazy.tree, ob.infected, rng) if rooted
                   else closeness_estimator(graph, snap, rng))
        elif algo == "random":
            est = random_guess(graph, rng)
        elif algo == "mle":
            est = mle_estimator(graph, snap, ob.params, cfg.mle_t_max, rng, score=cfg.mle_score,
                                pad_degree=int(param) + 1).estimator
        else:
            est = sample_path_estimator(graph, snap, ob.params).estimator
        wall = (time.perf_counter() - start) * 1000.0 if cfg.timing else None
        estimates[algo] = (est, extra, wall)
    if not rooted:
        dist = distances_from(graph, [ob.source])[0]
    for algo, (est, extra, wall) in estimates.items():
        rec.outcomes[algo] = AlgoOutcome(ident(int(est)), int(dist[est]), wall_ms=wall, **extra)
    return rec


# -- summaries ---------------------------------------------------------------

@dataclass
class AlgoSummary:
    algo: str
    trials: int
    detect_rate: float
    ci_lo: float
    ci_hi: float
    mean_dist: float
    median_dist: float
    histogram: list[int]
    within_2_hops: float
    candidate_rate: float | None = None


def summarize(records: list[TrialRecord]) -> dict[str, AlgoSummary]:
    """Per-algorithm detection rate (Wilson 95% CI), distance stats and histogram."""
    if not records:
        raise ConfigError("summarize needs at least one record")
    out = {}
    for algo in records[0].outcomes:
        dists = [r.outcomes[algo].distance for r in records]
        n = len(dists)
        hits = sum(d == 0 for d in dists)
        ci = binomtest(hits, n).proportion_ci(confidence_level=0.95, method="wilson")
        hist = [0] * (max(dists) + 1)
        for d in dists:
            hist[d] += 1
        cand = [r.outcomes[algo].contains_source for r in records]
        cand_rate = (sum(cand) / n) if all(c is not None for c in cand) else None
        out[algo] = AlgoSummary(algo, n, hits / n, float(ci.low), float(ci.high),
                                statistics.fmean(dists), float(statistics.median(dists)),
                                hist, sum(d <= 2 for d in dists) / n, cand_rate)
    return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: dict[object, list[TrialRecord]]
    summaries: dict[object, dict[str, AlgoSummary]]


def _task(args):
    cfg, gi, trial = args
    return run_trial(cfg, gi, trial)


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None,
                   workers: int | None = None) -> ExperimentResult:
    cfg = cfg.validated()
    workers = cfg.workers if workers is None else workers
    tasks = [(cfg, gi, k) for gi in range(len(cfg.grid)) for k in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        results = [_task(t) for t in tasks]
    records: dict[object, list[TrialRecord]] = {param: [] for param in cfg.grid}
    for (_, gi, _), rec in zip(tasks, results):
        records[cfg.grid[gi]].append(rec)
    summaries = {param: summarize(recs) for param, recs in records.items()}
    result = ExperimentResult(cfg, records, summaries)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


TRIAL_HEADER = ["trial", "q", "p", "t", "source", "infected_count", "algo", "estimate",
                "distance", "candidates", "wall_ms"]
SUMMARY_HEADER = ["scenario", "param", "algo", "trials", "detect_rate", "ci_lo", "ci_hi",
                  "mean_dist", "median_dist"]
HIST_HEADER = ["hop", "count", "fraction"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 12))
    return str(x)


def write_outputs(result: ExperimentResult, out_dir: str) -> list[str]:
    """Write trial, summary and histogram CSVs; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    written = []
    for param, recs in result.records.items():
        path = os.path.join(out_dir, f"trials_{cfg.scenario}_{param}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRIAL_HEADER)
            for r in recs:
                for algo, o in r.outcomes.items():
                    w.writerow([r.trial, _fmt(r.q), _fmt(r.p), r.t, r.source, r.infected_count,
                                algo, o.estimate, o.distance, _fmt(o.candidates), _fmt(o.wall_ms)])
        written.append(path)
        for algo, s in result.summaries[param].items():
            hpath = os.path.join(out_dir, f"hist_{cfg.scenario}_{param}_{algo}.csv")
            with open(hpath, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(HIST_HEADER)
                for hop, count in enumerate(s.histogram):
                    w.writerow([hop, count, _fmt(count / s.trials)])
            written.append(hpath)
    spath = os.path.join(out_dir, f"summary_{cfg.scenario}.csv")
    with open(spath, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for param, sums in result.summaries.items():
            for algo, s in sums.items():
                w.writerow([cfg.scenario, param, algo, s.trials, _fmt(s.detect_rate),
                            _fmt(s.ci_lo), _fmt(s.ci_hi), _fmt(s.mean_dist), _fmt(s.median_dist)])
    written.append(spath)
    return written


def distance_quantile(records: list[TrialRecord], algo: str, q: float) -> float:
    return float(np.quantile([r.outcomes[algo].distance for r in records], q))
