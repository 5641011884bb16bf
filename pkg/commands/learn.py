
from config import SAMPLE_CAP
from treelab.core import load_target, tree_depth, tree_size, tree_variables, write_tree
from treelab.harness import measure_error
from treelab.learners import ALGORITHMS, learn
from treelab.oracle import Oracle
from treelab.schedules import GreedSchedule, LearnerConfig, polylog_k
from utils.checks import check_positive


def setup(subparsers):
    parser = subparsers.add_parser("learn", help="Learn a decision tree for a target file.")
    parser.add_argument("--target", required=True)
    parser.add_argument("--algo", choices=ALGORITHMS, default="topk")
    parser.add_argument("--s", type=int, required=True, help="Size budget (leaves).")
    parser.add_argument("--eps", type=float, default=0.05)
    parser.add_argument("--delta", type=float, default=0.05)
    parser.add_argument("--k", type=int, default=None, help="Candidates per level (first phase for adaptive).")
    parser.add_argument("--k2", type=int, default=None, help="Second-phase candidates for adaptive.")
    parser.add_argument("--phase-split", type=int, default=None)
    parser.add_argument("--lookahead", type=int, default=0)
    parser.add_argument("--depth", type=int, default=None,
                        help="Depth cap; defaults to ceil(log2(s / eps)), clamped to DP_MAX_DEPTH for dp.")
    parser.add_argument("--mode", choices=("mq", "ex"), default="mq")
    parser.add_argument("--noise", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument("--exact", action="store_true", help="Read the oracle's table instead of sampling.")
    parser.add_argument("--weak", action="store_true", help="Skip pruning to s leaves.")
    parser.add_argument("--sample-cap", type=int, default=SAMPLE_CAP)
    parser.set_defaults(handler=run)


def schedule_for(args) -> GreedSchedule:
    if args.algo == "greedy":
        return GreedSchedule.constant(1)
    if args.algo == "adaptive":
        return GreedSchedule.two_phase(args.k or polylog_k(args.s, 2.0), args.k2 or 1, args.phase_split)
    if args.k is not None:
        return GreedSchedule.constant(args.k)
    return GreedSchedule.polylog()


def run(args) -> int:
    check_positive("seed", args.seed, minimum=0)
    target, n = load_target(args.target)
    oracle = Oracle(target, n=n, mode=args.mode, noise=args.noise, seed=args.seed)
    cfg = LearnerConfig(
        s=args.s,
        eps=args.eps,
        delta=args.delta,
        depth=args.depth,
        schedule=schedule_for(args),
        lookahead=args.lookahead,
        mode=args.mode,
        seed=args.seed,
        exact=args.exact,
        proper="weak" if args.weak else "strict",
        sample_cap=args.sample_cap,
        dp_candidates="topk" if args.algo == "dp" and args.k is not None else "all",
    )
    tree, stats = learn(oracle, cfg, args.algo)
    write_tree(args.out, tree, n)

    err = measure_error(tree, oracle, eps=args.eps, seed=args.seed)
    print(f"> {args.algo}: size {tree_size(tree)}, depth {tree_depth(tree)}, variables {tree_variables(tree)}")
    print(f"  error {err:.6f} | mq {stats.mq_count} | ex {stats.ex_count} | "
          f"subproblems {stats.subproblems_explored} | {stats.wall_ms:.1f} ms")
    if stats.capped_estimates:
        print(f"  {stats.capped_estimates} of {stats.estimate_calls} estimates hit the sample cap ({args.sample_cap})")
    print(f"> Wrote hypothesis to {args.out}")
    return 0
