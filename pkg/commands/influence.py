from treelab.core import Restriction, load_target
from treelab.influence import EstimationBudget, splitting_scores
from treelab.oracle import Oracle
from utils.checks import check_positive


def setup(subparsers):
    parser = subparsers.add_parser("influence", help="Influence (or correlation) of every free variable.")
    parser.add_argument("--target", required=True)
    parser.add_argument("--restriction", default="", help='e.g. "x3=1,x7=0"')
    parser.add_argument("--tau", type=float, default=0.05)
    parser.add_argument("--delta", type=float, default=0.01)
    parser.add_argument("--mode", choices=("mq", "ex"), default="mq")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--exact", action="store_true")
    parser.set_defaults(handler=run)


def run(args) -> int:
    check_positive("seed", args.seed, minimum=0)
    target, n = load_target(args.target)
    oracle = Oracle(target, n=n, mode=args.mode, seed=args.seed)
    restriction = Restriction.parse(args.restriction)
    budget = EstimationBudget(args.tau, args.delta)
    vector = splitting_scores(oracle, restriction, budget, exact=args.exact)

    if args.mode == "mq":
        label, m = "influence", budget.samples
    else:
        label, m = "correlation", budget.correlation_samples
    print(f"{label} under {{{restriction}}} ({vector.provenance.value}, m={m}):")
    for j in vector.ranked():
        print(f"  x{vector.variables[j]:<4} {vector.scores[j]:.4f}")
    mq_count, ex_count = oracle.counts()
    print(f"queries: mq {mq_count}, ex {ex_count}")
    return 0
