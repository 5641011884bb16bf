from config import TABLE_MAX_N
from treelab.core import TruthTable, load_target
from treelab.errors import ConfigError
from treelab.harness import measure_error
from treelab.oracle import Oracle
from utils.checks import check_positive


def setup(subparsers):
    parser = subparsers.add_parser("eval", help="Measure a hypothesis tree against a target.")
    parser.add_argument("--hypothesis", required=True)
    parser.add_argument("--target", required=True)
    parser.add_argument("--samples", type=int, default=None, help="Force the sampled path with this many points.")
    parser.add_argument("--seed", type=int, default=0)
    parser.set_defaults(handler=run)


def run(args) -> int:
    check_positive("seed", args.seed, minimum=0)
    hypothesis, _ = load_target(args.hypothesis)
    if isinstance(hypothesis, TruthTable):
        raise ConfigError(f"{args.hypothesis} holds a truth table, not a tree")
    target, n = load_target(args.target)
    oracle = Oracle(target, n=n, seed=args.seed)
    err = measure_error(hypothesis, oracle, samples=args.samples, seed=args.seed)
    path = "sampled" if args.samples or n > TABLE_MAX_N else "exact"
    print(f"error {err:.6f} ({path})")
    return 0
