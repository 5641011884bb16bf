from treelab.core import tree_size, write_target
from treelab.harness import gen_junta, gen_monotone, gen_random_tree
from utils.checks import check_positive


def setup(subparsers):
    parser = subparsers.add_parser("gen", help="Generate a target function.")
    parser.add_argument("--family", choices=("tree", "junta", "monotone"), required=True)
    parser.add_argument("--s", type=int, default=8, help="Leaf count of a random tree.")
    parser.add_argument("--k", type=int, default=4, help="Junta size.")
    parser.add_argument("--n", type=int, required=True, help="Variable count.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.set_defaults(handler=run)


def run(args) -> int:
    check_positive("seed", args.seed, minimum=0)
    if args.family == "tree":
        target = gen_random_tree(args.s, args.n, args.seed)
        summary = f"random tree with {tree_size(target)} leaves"
    elif args.family == "junta":
        target = gen_junta(args.k, args.n, args.seed)
        summary = f"{args.k}-junta"
    else:
        target = gen_monotone(args.n, args.seed)
        summary = f"monotone table (bias {target.bias:.3f})"
    write_target(args.out, target, args.n)
    print(f"> Wrote {summary} on n={args.n} to {args.out}")
    return 0
