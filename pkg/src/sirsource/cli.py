"""Command-line entry point: ``sirsource <subcommand> ...``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 resource cap.
Errors go to stderr as ``ERROR:<kind>: message``.  Every run prints the
seed it used as its first stdout line.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys

import numpy as np

from .bench import parse_config, run_experiment
from .detect import closeness_estimator, random_guess, reverse_infection
from .errors import SourceDetectionError
from .graph import (
    DEFAULT_NODE_CAP,
    gen_binomial_tree,
    gen_regular_tree,
    load_edge_list,
    read_snapshot_csv,
    write_edge_list,
    write_snapshot_csv,
)
from .gw import (
    L_prime,
    distance_envelope,
    extinction_prob,
    n0_bound,
    offspring_pmf_inf,
    offspring_pmf_tau,
    p_tau,
    survival_mc,
)
from .samplepath import sample_path_estimator
from .sir import SirParams, simulate, snapshot, write_trace_csv

DEFAULT_SEED = 20120601


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    if text == "random":
        return int(np.random.SeedSequence().entropy % (2**63))
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer or 'random'") from None
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be non-negative")
    return value


def _add_seed(p):
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED,
                   help=f"integer seed, or 'random' for fresh entropy (default {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sirsource",
                     description="Simulate SIR outbreaks on graphs and estimate their source.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a regular or binomial random tree as an edge list")
    p.add_argument("--tree", choices=("regular", "binomial"), required=True)
    p.add_argument("--g", type=int, help="children per node (regular; the root gets g+1)")
    p.add_argument("--trials", type=int, help="binomial: number of child trials per node")
    p.add_argument("--beta", type=float, help="binomial: success probability of a child trial")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--max-nodes", type=int, default=DEFAULT_NODE_CAP,
                   help="refuse to build larger trees (exit 3)")
    p.add_argument("--out", required=True, help="edge list path")
    _add_seed(p)

    p = sub.add_parser("simulate", help="run one discrete-time SIR outbreak")
    p.add_argument("--graph", required=True, help="edge list path")
    p.add_argument("--source", type=int, required=True, help="source node id as in the edge list")
    p.add_argument("--q", type=float, required=True, help="infection probability per slot")
    p.add_argument("--p", type=float, required=True, help="recovery probability per slot")
    p.add_argument("--t", type=int, required=True, help="number of slots")
    p.add_argument("--trace-out", help="write node_id,t_infect,t_recover CSV here")
    p.add_argument("--snapshot-out", help="write node_id,infected CSV here")
    _add_seed(p)

    p = sub.add_parser("detect", help="estimate the source from a snapshot")
    p.add_argument("--graph", required=True)
    p.add_argument("--snapshot", required=True, help="node_id,infected CSV")
    p.add_argument("--algo", choices=("ri", "cc", "random"), default="ri")
    p.add_argument("--method", choices=("auto", "message-passing", "distance"), default="auto",
                   help="how ri is computed (default auto)")
    _add_seed(p)

    p = sub.add_parser("osp", help="rank roots by their most likely sample path (trees only)")
    p.add_argument("--graph", required=True)
    p.add_argument("--snapshot", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--full-scan", action="store_true",
                   help="score every node instead of only the Jordan infection centers")
    _add_seed(p)

    p = sub.add_parser("gw", help="branching-process quantities for a (g+1)-regular tree")
    p.add_argument("--g", type=int, required=True, help="children per node")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--tau", type=int, required=True, help="cap on the infectious period")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--mc-trials", type=int, default=0,
                   help="also estimate survival by Monte Carlo with this many runs")
    p.add_argument("--horizon", type=int, default=50, help="generations for the Monte Carlo run")
    _add_seed(p)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment from a config file")
    p.add_argument("--config", required=True, help="flat key = value file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    p.add_argument("--seed", type=_seed, help="overrides the config seed")
    return parser


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _emit(key, value):
    print(f"{key}={value}")


def _generate(args, rng):
    if args.tree == "regular":
        if args.g is None:
            raise UsageError("generate --tree regular needs --g")
        graph = gen_regular_tree(args.g, args.depth, max_nodes=args.max_nodes)
    else:
        if args.trials is None or args.beta is None:
            raise UsageError("generate --tree binomial needs --trials and --beta")
        graph = gen_binomial_tree(args.trials, args.beta, args.depth, rng, max_nodes=args.max_nodes)
    with open(args.out, "w", encoding="utf-8") as fh:
        write_edge_list(graph, fh)
    _emit("nodes", graph.node_count)
    _emit("edges", graph.edge_count)


def _simulate(args, rng):
    graph = load_edge_list(_read(args.graph))
    if args.source not in graph.index_of:
        raise UsageError(f"source {args.source} is not a node of the graph")
    params = SirParams(args.q, args.p)
    trace = simulate(graph, graph.index_of[args.source], params, args.t, rng)
    snap = snapshot(trace)
    if args.trace_out:
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            write_trace_csv(trace, graph, fh)
    if args.snapshot_out:
        with open(args.snapshot_out, "w", encoding="utf-8") as fh:
            write_snapshot_csv(snap, graph, fh)
    _emit("touched", trace.touched_count)
    _emit("infected", len(snap.infected_set))


def _detect(args, rng):
    graph = load_edge_list(_read(args.graph))
    snap = read_snapshot_csv(_read(args.snapshot), graph)
    oid = graph.original_id
    _emit("algo", args.algo)
    if args.algo == "ri":
        res = reverse_infection(graph, snap, rng, method=args.method)
        _emit("estimator", oid(res.estimator))
        _emit("candidates", ",".join(str(oid(c)) for c in res.candidates))
        _emit("rounds", res.rounds)
        _emit("min_eccentricity", res.min_eccentricity)
        _emit("method", res.method)
        if res.messages_per_round:
            _emit("messages_per_round", ",".join(map(str, res.messages_per_round)))
    elif args.algo == "cc":
        _emit("estimator", oid(closeness_estimator(graph, snap, rng)))
    else:
        _emit("estimator", oid(random_guess(graph, rng)))


def _osp(args, rng):
    graph = load_edge_list(_read(args.graph))
    snap = read_snapshot_csv(_read(args.snapshot), graph)
    res = sample_path_estimator(graph, snap, SirParams(args.q, args.p),
                                mode="full" if args.full_scan else "centers")
    _emit("estimator", graph.original_id(res.estimator))
    print("root,t_star,log_prob")
    for s in res.ranking:
        print(f"{graph.original_id(s.root)},{s.t_star},{s.log_prob!r}")


def _gw(args, rng):
    capped = offspring_pmf_tau(args.g, args.q, args.p, args.tau)
    _emit("pmf_tau", ",".join(f"{x:.12g}" for x in capped.pmf))
    _emit("mean_tau", f"{capped.mean():.12g}")
    if args.p > 0:
        free = offspring_pmf_inf(args.g, args.q, args.p)
        _emit("pmf_inf", ",".join(f"{x:.12g}" for x in free.pmf))
    rho = extinction_prob(args.g, args.q)
    _emit("extinction_prob", f"{rho:.12g}")
    pt = p_tau(args.g, args.q, args.p, args.tau)
    _emit("p_tau", f"{pt:.12g}")
    if rho < 1:
        n0 = n0_bound(args.epsilon, rho)
        _emit("n0", n0)
        L = L_prime(args.epsilon, pt, n0)
        _emit("L_prime", L)
        _emit("distance_envelope", distance_envelope(args.tau, L))
    else:
        _emit("n0", "none (subcritical: g*q <= 1)")
    if args.mc_trials > 0:
        est = survival_mc(args.g, args.q, args.mc_trials, args.horizon, rng)
        _emit("survival_mc", f"{est.estimate:.6f}")
        _emit("survival_stderr", f"{est.stderr:.6f}")
        _emit("survival_exact", f"{1.0 - rho:.6f}")


def _experiment(args):
    cfg = parse_config(_read(args.config))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    cfg = dataclasses.replace(cfg, **overrides).validated()
    _emit("seed", cfg.seed)
    result = run_experiment(cfg, out_dir=args.out_dir)
    print("param,algo,trials,detect_rate,ci_lo,ci_hi,mean_dist,median_dist")
    for param, sums in result.summaries.items():
        for algo, s in sums.items():
            mean = "nan" if math.isnan(s.mean_dist) else f"{s.mean_dist:.4f}"
            print(f"{param},{algo},{s.trials},{s.detect_rate:.4f},{s.ci_lo:.4f},{s.ci_hi:.4f},"
                  f"{mean},{s.median_dist:g}")


_COMMANDS = {"generate": _generate, "simulate": _simulate, "detect": _detect,
             "osp": _osp, "gw": _gw}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "experiment":
            _experiment(args)
        else:
            _emit("seed", args.seed)
            _COMMANDS[args.command](args, np.random.default_rng(args.seed))
    except UsageError as exc:
        print(f"ERROR:usage: {exc}", file=sys.stderr)
        return 1
    except SourceDetectionError as exc:
        print(f"ERROR:{exc.kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"ERROR:io: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # parameter validation inside the library (e.g. q outside (0, 1])
        print(f"ERROR:invalid-argument: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
