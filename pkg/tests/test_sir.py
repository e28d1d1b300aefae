import io
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import path_graph, random_connected_graph, random_tree, star_graph
from sirsource.errors import InvalidTraceError, ParseError
from sirsource.graph import Graph, bfs_distances, gen_regular_tree
from sirsource.samplepath import enumerate_traces
from sirsource.sir import (
    NEVER,
    SirParams,
    SirTrace,
    read_trace_csv,
    simulate,
    simulate_capped,
    simulate_infinite_tree,
    snapshot,
    trace_prob,
    trace_signature,
    validate_trace,
    write_trace_csv,
)


def figure1():
    # nodes 1..7 of the propagation example, stored as indices 0..6
    g = Graph.from_edges(7, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (3, 6)])
    times = [(0, 2), (1, -1), (2, 3), (2, -1), (-1, -1), (3, -1), (3, -1)]
    trace = SirTrace([a for a, _ in times], [b for _, b in times], 3, 0)
    return g, trace


class TestSnapshot:
    def test_figure1_snapshot(self):
        g, trace = figure1()
        validate_trace(g, trace)
        assert snapshot(trace).to_vector() == [0, 1, 0, 1, 0, 1, 1]

    def test_recovered_at_horizon_is_healthy(self):
        _, trace = figure1()
        assert snapshot(trace).flags[2] is False

    def test_horizon_zero(self, rng):
        g = path_graph(4)
        trace = simulate(g, 2, SirParams(0.9, 0.5), 0, rng)
        assert snapshot(trace).infected_set == (2,)


class TestSimulate:
    def test_deterministic_wavefront(self, rng):
        trace = simulate(path_graph(3), 0, SirParams(1.0, 0.0), 2, rng)
        assert trace.t_infect == (0, 1, 2)
        assert trace.t_recover == (NEVER,) * 3

    def test_forced_star(self, rng):
        trace = simulate(star_graph(4), 0, SirParams(1.0, 1.0), 2, rng)
        assert trace.t_infect == (0, 1, 1, 1, 1)
        assert trace.t_recover == (1, 2, 2, 2, 2)

    def test_q1_p0_is_bfs(self, rng):
        g = random_connected_graph(40, 20, rng)
        trace = simulate(g, 5, SirParams(1.0, 0.0), 4, rng)
        d = bfs_distances(g, 5)
        assert list(trace.t_infect) == [x if x <= 4 else NEVER for x in d]

    def test_capped(self, rng):
        g = gen_regular_tree(3, 5)
        assert simulate_capped(g, 0, SirParams(1.0, 0.0), 5, rng, max_touched=10) is None
        assert simulate_capped(g, 0, SirParams(1.0, 0.0), 1, rng, max_touched=10) is not None

    def test_seeded(self):
        g = random_tree(60, np.random.default_rng(1))
        a = simulate(g, 0, SirParams(0.5, 0.2), 6, np.random.default_rng(9))
        b = simulate(g, 0, SirParams(0.5, 0.2), 6, np.random.default_rng(9))
        assert a == b

    def test_bad_params(self):
        with pytest.raises(ValueError):
            SirParams(0.0, 0.1)
        with pytest.raises(ValueError):
            SirParams(0.5, 1.5)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1), st.floats(0.05, 1.0), st.floats(0.0, 1.0),
       st.integers(0, 8))
def test_simulated_traces_are_valid(n, seed, q, p, t):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, n // 3, rng)
    trace = simulate(g, int(rng.integers(n)), SirParams(q, p), t, rng)
    validate_trace(g, trace)
    assert trace_prob(g, trace, SirParams(q, p)).prob > 0


class TestTraceProb:
    def test_one_attack(self):
        g = path_graph(2)
        tr = SirTrace([0, 1], [NEVER, NEVER], 1, 0)
        assert trace_prob(g, tr, SirParams(0.3, 0.2)).prob == pytest.approx(0.3 * 0.8)

    def test_resisted_attack(self):
        g = path_graph(2)
        tr = SirTrace([0, NEVER], [NEVER, NEVER], 1, 0)
        assert trace_prob(g, tr, SirParams(0.3, 0.2)).prob == pytest.approx(0.7 * 0.8)

    def test_triangle(self):
        g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
        tr = SirTrace([0, 1, 1], [1, NEVER, NEVER], 1, 0)
        assert trace_prob(g, tr, SirParams(0.4, 0.3)).prob == pytest.approx(0.4 ** 2 * 0.3)

    def test_two_attackers(self):
        # node 2 is attacked by both 0 and 1 in slot 2
        g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
        tr = SirTrace([0, 1, 2], [NEVER] * 3, 2, 0)
        q, p = 0.4, 0.3
        expected = q * (1 - q) * (1 - p) * (1 - (1 - q) ** 2) * (1 - p) ** 2
        assert trace_prob(g, tr, SirParams(q, p)).prob == pytest.approx(expected)

    def test_figure1_by_hand(self):
        g, trace = figure1()
        q, p = 0.6, 0.25
        # slot 1: 1 infects 2, 1 spares 3, 1 stays; slot 2: 1 and 2 infect 3 and 4,
        # 2 spares 5, 1 recovers, 2 stays; slot 3: 3 infects 6, 4 infects 7,
        # 2 spares 5, 2 and 4 stay, 3 recovers
        expected = (q * (1 - q) * (1 - p)
                    * q * q * (1 - q) * p * (1 - p)
                    * q * q * (1 - q) * (1 - p) ** 2 * p)
        assert trace_prob(g, trace, SirParams(q, p)).prob == pytest.approx(expected)

    def test_log_prob_vectorized(self):
        g, trace = figure1()
        sig = trace_signature(g, trace)
        qs, ps = np.array([0.6, 0.3]), np.array([0.25, 0.5])
        vec = sig.log_prob(qs, ps)
        for k in range(2):
            assert vec[k] == pytest.approx(trace_prob(g, trace, SirParams(qs[k], ps[k])).log_prob)

    @pytest.mark.parametrize("bad", [
        SirTrace([1, NEVER], [NEVER, NEVER], 1, 0),      # source not at 0
        SirTrace([0, 2], [NEVER, NEVER], 1, 0),          # beyond horizon
        SirTrace([0, NEVER], [NEVER, 1], 1, 0),          # recovers without infection
        SirTrace([0, 1], [1, 1], 1, 0),                  # recovers in its infection slot
        SirTrace([0, NEVER, 2], [NEVER] * 3, 2, 0),      # no infectious neighbor
        SirTrace([0, 1, 2], [1, NEVER, NEVER], 2, 0),    # fine: 1 attacks 2 at slot 2
    ])
    def test_validation(self, bad):
        g = path_graph(len(bad.t_infect))
        if bad.t_infect == (0, 1, 2):
            validate_trace(g, bad)
        else:
            with pytest.raises(InvalidTraceError):
                validate_trace(g, bad)

    def test_attacker_recovering_in_slot_still_attacks(self):
        # t_recover = s means the node attacks in slot s, then recovers
        g = path_graph(3)
        validate_trace(g, SirTrace([0, 1, 2], [NEVER, 2, NEVER], 2, 0))
        with pytest.raises(InvalidTraceError):
            validate_trace(g, SirTrace([0, 1, 3], [NEVER, 2, NEVER], 3, 0))


@pytest.mark.parametrize("graph", [path_graph(3), star_graph(3),
                                   Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])])
@pytest.mark.parametrize("t", [1, 2, 3])
def test_exhaustive_traces_sum_to_one(graph, t):
    q, p = 0.37, 0.21
    total = sum(trace_prob(graph, tr, SirParams(q, p)).prob for tr in enumerate_traces(graph, 0, t))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_simulation_frequencies_match_trace_probabilities():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 0), (2, 3)])
    params = SirParams(0.5, 0.4)
    rng = np.random.default_rng(77)
    runs = 20000
    counts = Counter()
    for _ in range(runs):
        tr = simulate(g, 0, params, 2, rng)
        counts[(tr.t_infect, tr.t_recover)] += 1
    for tr in enumerate_traces(g, 0, 2):
        prob = trace_prob(g, tr, params).prob
        sd = math.sqrt(prob * (1 - prob) / runs)
        assert abs(counts[(tr.t_infect, tr.t_recover)] / runs - prob) <= 4 * sd + 1e-12


class TestInfiniteTree:
    def test_forced_regular(self, rng):
        out = simulate_infinite_tree(SirParams(1.0, 0.0), 2, rng, g=2)
        assert out.touched_count == 1 + 3 + 6
        assert out.graph.degree(0) == 3

    def test_halo_restores_full_degree(self, rng):
        out = simulate_infinite_tree(SirParams(0.5, 0.3), 4, np.random.default_rng(3), g=3, halo=True)
        touched = np.nonzero(out.t_infect != NEVER)[0]
        assert all(out.graph.degree(int(v)) == 4 for v in touched)
        assert out.graph.node_count > out.touched_count

    def test_cap(self, rng):
        assert simulate_infinite_tree(SirParams(1.0, 0.0), 6, rng, g=3, max_touched=50) is None

    def test_trace_is_valid(self):
        out = simulate_infinite_tree(SirParams(0.6, 0.3), 6, np.random.default_rng(5), g=2)
        validate_trace(out.graph, out.trace)
        assert list(out.infected_nodes()) == list(snapshot(out.trace).infected_set)

    def test_needs_one_shape(self, rng):
        with pytest.raises(ValueError):
            simulate_infinite_tree(SirParams(0.5, 0.1), 3, rng)

    def test_matches_explicit_tree_in_distribution(self):
        # touched counts from the lazy simulator and from an explicit deep tree
        params, t, runs = SirParams(0.5, 0.3), 3, 3000
        rng = np.random.default_rng(11)
        lazy = [simulate_infinite_tree(params, t, rng, g=2).touched_count for _ in range(runs)]
        tree = gen_regular_tree(2, t + 1)
        full = [simulate(tree, 0, params, t, rng).touched_count for _ in range(runs)]
        se = math.sqrt(np.var(lazy) / runs + np.var(full) / runs)
        assert abs(np.mean(lazy) - np.mean(full)) < 4 * se

    def test_binomial_children(self):
        params = SirParams(1.0, 0.0)
        out = simulate_infinite_tree(params, 1, np.random.default_rng(2), trials=10, beta=1.0)
        assert out.touched_count == 11


def test_trace_csv_round_trip():
    g, trace = figure1()
    buf = io.StringIO()
    write_trace_csv(trace, g, buf)
    assert read_trace_csv(buf.getvalue(), g, 3) == trace
    with pytest.raises(ParseError):
        read_trace_csv("a,b,c\n", g, 3)
