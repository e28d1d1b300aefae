"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed as the
tests run and again in a block at the end.  Criterion 9 uses a synthetic
Barabasi-Albert graph unless ``SIRSOURCE_NETWORK_EDGES`` names an edge list.
"""

import math
import os
import time
from collections import Counter

import networkx as nx
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_connected_graph, random_tree
from sirsource.bench import ExperimentConfig, distance_quantile, run_experiment
from sirsource.detect import reverse_infection
from sirsource.graph import Graph, Snapshot, infection_eccentricity, jordan_infection_centers
from sirsource.gw import (
    extinction_prob,
    offspring_pmf_inf,
    offspring_pmf_tau,
    p_tau,
    survival_mc,
)
from sirsource.samplepath import enumerate_paths, enumerate_traces, optimal_path_log_probs
from sirsource.sir import SirParams, simulate, snapshot, trace_prob

pytestmark = pytest.mark.slow


def report(capsys, number, ok, detail, elapsed, limit):
    within = elapsed <= limit
    line = (f"criterion {number}: {'PASS' if ok and within else 'FAIL'}  {detail}  "
            f"[{elapsed:.0f}s, limit {limit:.0f}s]")
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line
    assert within, line


def random_outbreak(g, rng):
    """Random SIR run with at least one infected node at the horizon."""
    while True:
        q, p = rng.uniform(0.05, 1.0), rng.uniform(0.0, 1.0)
        trace = simulate(g, int(rng.integers(g.node_count)), SirParams(q, p),
                         int(rng.integers(0, 12)), rng)
        s = snapshot(trace)
        if s.infected_set:
            return s


def all_trees(max_n):
    yield Graph.from_edges(1, [])
    for n in range(2, max_n + 1):
        for t in nx.nonisomorphic_trees(n):
            yield Graph.from_edges(n, list(t.edges()))


def test_criterion_1_center_equivalence(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    bad = 0
    for k in range(1000):
        if k % 2 == 0:
            g = random_tree(int(rng.integers(1, 501)), rng)
        else:
            n = int(rng.integers(2, 201))
            g = random_connected_graph(n, int(rng.integers(1, n + 1)), rng)
        s = random_outbreak(g, rng)
        res = reverse_infection(g, s, rng, method="message-passing")
        centers, ecc = jordan_infection_centers(g, s)
        bad += res.candidates != centers or res.rounds != ecc
    report(capsys, 1, bad == 0, f"{1000 - bad}/1000 instances agree",
           time.perf_counter() - start, 60)


def test_criterion_2_center_sets(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    bad = 0
    sizes = Counter()
    for _ in range(1000):
        g = random_tree(int(rng.integers(1, 301)), rng)
        centers, _ = jordan_infection_centers(g, random_outbreak(g, rng))
        sizes[len(centers)] += 1
        bad += not (len(centers) == 1 or (len(centers) == 2 and centers[1] in g.adjacency[centers[0]]))
    report(capsys, 2, bad == 0, f"sizes {dict(sorted(sizes.items()))}, {bad} violations",
           time.perf_counter() - start, 60)


def test_criterion_3_oracle_equivalence(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    qs, ps = rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)
    a_cases = a_bad = b_cases = b_bad = c_cases = c_bad = 0
    b_inf_bad = c_inf_bad = 0
    example = None
    for g in all_trees(7):
        n = g.node_count
        pad = max(int(g.degrees.max(initial=0)) + 1, 2)
        for mask in range(1, 2 ** n):
            s = Snapshot(tuple(bool(mask >> i & 1) for i in range(n)))
            ecc = np.array([infection_eccentricity(g, s, v) for v in range(n)])
            best_finite = np.empty((n, 100))
            best_inf = np.empty((n, 100))
            for r in range(n):
                e = int(ecc[r])
                curve = np.array([optimal_path_log_probs(g, s, r, t, qs, ps)
                                  for t in range(e, max(e, 4) + 1)])
                inf_curve = np.array([optimal_path_log_probs(g, s, r, t, qs, ps, pad_degree=pad)
                                      for t in range(e, max(e, 4) + 1)])
                best_finite[r], best_inf[r] = curve[0], inf_curve[0]
                if e > 3:
                    continue
                # (a) dynamic program against exhaustive enumeration at t*
                a_cases += 1
                brute = enumerate_paths(g, s, r, e).max_log_prob(qs, ps)
                a_bad += not np.allclose(curve[0], brute, rtol=0, atol=1e-9)
                # (b) strict decrease from t* up to t = 4
                b_cases += 1
                down = np.all(curve[:-1] > curve[1:], axis=0)
                if not down.all():
                    b_bad += 1
                    if example is None:
                        k = int(np.argmin(down))
                        example = (g.edges().tolist(), s.infected_set, r, round(float(qs[k]), 3),
                                   round(float(ps[k]), 3), np.round(curve[:, k], 3).tolist())
                b_inf_bad += not np.all(inf_curve[:-1] > inf_curve[1:])
            # (c) full scan, every root scored at its own t*
            c_cases += 1
            for scores, counter in ((best_finite, "finite"), (best_inf, "inf")):
                top = scores >= scores.max(axis=0) - 1e-12
                wrong = np.any(top & (ecc != ecc.min())[:, None])
                if counter == "finite":
                    c_bad += bool(wrong)
                else:
                    c_inf_bad += bool(wrong)
    ok = a_bad == 0 and b_bad == 0 and c_bad == 0
    detail = (f"(a) {a_cases - a_bad}/{a_cases} DP==brute force; "
              f"(b) {b_cases - b_bad}/{b_cases} strictly decreasing; "
              f"(c) {c_cases - c_bad}/{c_cases} argmax at min eccentricity; "
              f"with infinite healthy completion: (b) {b_cases - b_inf_bad}/{b_cases}, "
              f"(c) {c_cases - c_inf_bad}/{c_cases}; first (b) counterexample "
              f"edges,infected,root,q,p,logprob(t*..4)={example}")
    report(capsys, 3, ok, detail, time.perf_counter() - start, 600)


def rates(result, param):
    return {a: s.detect_rate for a, s in result.summaries[param].items()}


def test_criterion_4_small_trees(capsys):
    start = time.perf_counter()
    cfg = ExperimentConfig.for_scenario("small-tree", grid=(2, 3), trials=500, seed=4)
    result = run_experiment(cfg)
    parts, ok = [], True
    for g in cfg.grid:
        r = rates(result, g)
        ok &= abs(r["ri"] - r["mle"]) <= 0.05 and r["ri"] >= r["cc"]
        parts.append(f"g+1={g + 1}: RI {r['ri']:.3f} MLE {r['mle']:.3f} CC {r['cc']:.3f}")
    report(capsys, 4, ok, "; ".join(parts), time.perf_counter() - start, 900)


def test_criterion_5_regular_trees(capsys):
    # the sweep is over the node degree of g-regular trees; the scenario
    # parameter counts children, so degree g means g - 1 children
    start = time.perf_counter()
    degrees = (4, 6, 8, 10)
    cfg = ExperimentConfig.for_scenario("regular-tree", grid=tuple(d - 1 for d in degrees),
                                        trials=1000, seed=5)
    result = run_experiment(cfg)
    r = {d: rates(result, d - 1) for d in degrees}
    gap = np.mean([r[d]["ri"] - r[d]["cc"] for d in degrees])
    ok = gap >= 0.04 and all(r[d]["ri"] >= 0.55 for d in (8, 10))
    detail = (f"mean RI-CC {100 * gap:+.2f}pp; "
              + ", ".join(f"degree {d}: RI {r[d]['ri']:.3f} CC {r[d]['cc']:.3f}" for d in degrees))
    report(capsys, 5, ok, detail, time.perf_counter() - start, 1800)


def test_criterion_6_binomial_trees(capsys):
    start = time.perf_counter()
    cfg = ExperimentConfig.for_scenario("binomial-tree", grid=(0.3, 0.5, 0.7), trials=1000,
                                        trials_binomial=10, seed=6)
    result = run_experiment(cfg)
    r = {b: rates(result, b) for b in cfg.grid}
    gap = np.mean([r[b]["ri"] - r[b]["cc"] for b in cfg.grid])
    detail = (f"mean RI-CC {100 * gap:+.2f}pp; "
              + ", ".join(f"beta={b}: RI {r[b]['ri']:.3f} CC {r[b]['cc']:.3f}" for b in cfg.grid))
    report(capsys, 6, gap >= 0.04, detail, time.perf_counter() - start, 1200)


def test_criterion_7_distance_stability(capsys):
    start = time.perf_counter()
    cfg = ExperimentConfig.for_scenario("distance-vs-t", grid=(5, 10, 20), trials=500,
                                        q=0.5, p=0.2, g=3, seed=7)
    assert cfg.g * cfg.q > 1
    result = run_experiment(cfg)
    p90 = {t: distance_quantile(result.records[t], "ri", 0.9) for t in cfg.grid}
    med = {t: result.summaries[t]["ri"].median_dist for t in cfg.grid}
    ok = max(p90.values()) - min(p90.values()) <= 1 and all(m <= 2 for m in med.values())
    report(capsys, 7, ok, f"p90 {p90}, median {med}", time.perf_counter() - start, 600)


def test_criterion_8_gw_numerics(capsys):
    start = time.perf_counter()
    checks = {}
    checks["rho(2,0.75)=1/9"] = abs(extinction_prob(2, 0.75) - 1 / 9) <= 1e-10
    rng = np.random.default_rng(8)
    for g, q in ((2, 0.75), (3, 0.5), (4, 0.4)):
        est = survival_mc(g, q, 100_000, 60, rng)
        checks[f"mc({g},{q})"] = abs(est.estimate - (1 - extinction_prob(g, q))) <= 3 * est.stderr
    sums = ptau = True
    for g in (1, 2, 3, 5, 8):
        for q in (0.1, 0.5, 0.9, 1.0):
            for p in (0.05, 0.3, 1.0):
                for tau in (1, 2, 5, 20):
                    pmf = offspring_pmf_tau(g, q, p, tau).pmf
                    sums &= abs(pmf.sum() - 1) <= 1e-9 and bool(np.all(pmf >= 0))
                    ptau &= abs(p_tau(g, q, p, tau) - (1 - pmf[0])) <= 1e-12
                sums &= abs(offspring_pmf_inf(g, q, p).pmf.sum() - 1) <= 1e-9
    checks["pmf sums"] = sums
    checks["p_tau=1-pmf0"] = ptau
    checks["tau->inf"] = np.max(np.abs(offspring_pmf_inf(3, 0.5, 0.3).pmf
                                       - offspring_pmf_tau(3, 0.5, 0.3, 200).pmf)) < 1e-6
    detail = ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items())
    report(capsys, 8, all(checks.values()), detail, time.perf_counter() - start, 120)


def test_criterion_9_network(capsys, tmp_path):
    start = time.perf_counter()
    path = os.environ.get("SIRSOURCE_NETWORK_EDGES")
    if path:
        label = os.path.basename(path)
    else:
        G = nx.barabasi_albert_graph(4000, 2, seed=9)
        path = str(tmp_path / "ba.edges")
        with open(path, "w") as fh:
            fh.writelines(f"{u} {v}\n" for u, v in G.edges())
        label = "Barabasi-Albert n=4000 m=2"
    cfg = ExperimentConfig.for_scenario("network-file", input=path, trials=200, seed=9)
    result = run_experiment(cfg)
    s = result.summaries[0]
    n_nodes = len({int(x) for line in open(path) if line.strip() and not line.startswith("#")
                   for x in line.split()[:2]})
    gap = s["ri"].within_2_hops - s["random"].within_2_hops
    ok = n_nodes >= 3000 and gap >= 0.30
    detail = (f"{label} ({n_nodes} nodes): within 2 hops RI {s['ri'].within_2_hops:.3f} "
              f"vs random {s['random'].within_2_hops:.3f} ({100 * gap:+.1f}pp)")
    report(capsys, 9, ok, detail, time.perf_counter() - start, 1800)


def test_criterion_10_probability(capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(10)
    worst, cases = 0.0, 0
    for G in nx.graph_atlas_g()[1:19]:    # every graph on 1..4 nodes
        g = Graph.from_edges(G.number_of_nodes(), list(G.edges()))
        for t in range(4):
            traces = list(enumerate_traces(g, 0, t))
            for _ in range(20):
                params = SirParams(float(rng.uniform(0.01, 1)), float(rng.uniform(0, 1)))
                total = math.fsum(trace_prob(g, tr, params).prob for tr in traces)
                worst = max(worst, abs(total - 1))
                cases += 1
    # Monte Carlo snapshot frequencies against summed trace probabilities
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 0), (2, 3)])
    params, t, runs = SirParams(0.45, 0.3), 3, 100_000
    exact = Counter()
    for tr in enumerate_traces(g, 0, t):
        exact[snapshot(tr).flags] += trace_prob(g, tr, params).prob
    seen = Counter(snapshot(simulate(g, 0, params, t, rng)).flags for _ in range(runs))
    z = max(abs(seen[k] / runs - v) / math.sqrt(v * (1 - v) / runs) for k, v in exact.items())
    ok = worst <= 1e-9 and z <= 3 and set(seen) <= set(exact)
    detail = (f"{cases} exhaustive sums, max |sum-1| = {worst:.1e}; "
              f"{len(exact)} snapshots, max |z| = {z:.2f}")
    report(capsys, 10, ok, detail, time.perf_counter() - start, 300)
