from config import BENCH_WORKERS
from treelab.harness import load_matrix, run_experiment
from utils.checks import check_positive


def setup(subparsers):
    parser = subparsers.add_parser("bench", help="Run an experiment matrix and write a CSV.")
    parser.add_argument("--matrix", required=True, help="YAML list of cells.")
    parser.add_argument("--trials", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    parser.add_argument("--start-cell", type=int, default=0, help="Resume: append rows from this cell on.")
    parser.add_argument("--timing", action="store_true", help="Record wall_ms (rows stop being reproducible).")
    parser.add_argument("--workers", type=int, default=BENCH_WORKERS)
    parser.set_defaults(handler=run)


def run(args) -> int:
    check_positive("seed", args.seed, minimum=0)
    cells = load_matrix(args.matrix)
    print(f"> Loaded {len(cells)} cells from {args.matrix}")
    report = run_experiment(
        cells,
        args.trials,
        args.out,
        master_seed=args.seed,
        start_cell=args.start_cell,
        timing=args.timing,
        workers=args.workers,
    )
    print(f"> Wrote {report.rows} rows to {args.out}")
    for cell_index, trial, reason in report.failures:
        print(f"  cell {cell_index} trial {trial} failed: {reason}")
    return 0 if not report.failures else 2
