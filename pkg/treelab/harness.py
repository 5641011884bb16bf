"""Target generation, error measurement and experiment sweeps."""
import asyncio
import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import psutil
import yaml

from config import BENCH_WORKERS, JUNTA_MAX_K, MONOTONE_MAX_N, TABLE_MAX_N
from treelab.core import (
    DecisionTree,
    Internal,
    Leaf,
    Target,
    TruthTable,
    distance,
    eval_tree_batch,
    load_target,
    tree_depth,
    tree_size,
    tree_to_table,
)
from treelab.errors import ConfigError, TreeLabError
from treelab.influence import EstimationBudget
from treelab.learners import ALGORITHMS, learn
from treelab.oracle import Oracle
from treelab.schedules import GreedSchedule, LearnerConfig, default_phase_split, polylog_k
from utils.checks import check_cap, check_choice, check_noise_rate, check_positive
from utils.time import timed

logger = logging.getLogger(__name__)

FAMILIES = ("tree", "junta", "monotone", "explicit")
EVAL_STREAM = 7

CSV_COLUMNS = [
    "family", "s_target", "n", "k_junta", "noise", "algo", "k1", "k2", "phase_split", "lookahead",
    "depth_cap", "eps", "delta", "mode", "seed", "trial", "err", "hyp_size", "hyp_depth",
    "mq_count", "ex_count", "subproblems", "wall_ms",
]


# Generators
class _GrowingNode:
    __slots__ = ("used", "var", "child0", "child1")

    def __init__(self, used: frozenset):
        self.used = used
        self.var = None
        self.child0 = None
        self.child1 = None


def gen_random_tree(s: int, n: int, seed: int) -> DecisionTree:
    """Exactly s leaves: split a uniform leaf on a uniform variable unused on its path."""
    check_positive("s", s)
    check_positive("n", n)
    if n < 64 and s > 1 << n:
        raise ConfigError(f"a tree on n={n} variables has at most {1 << n} leaves, asked for {s}")
    rng = np.random.default_rng(seed)
    root = _GrowingNode(frozenset())
    leaves = [root]
    for _ in range(s - 1):
        open_leaves = [leaf for leaf in leaves if len(leaf.used) < n]
        node = open_leaves[rng.integers(len(open_leaves))]
        unused = [v for v in range(n) if v not in node.used]
        node.var = unused[rng.integers(len(unused))]
        node.child0 = _GrowingNode(node.used | {node.var})
        node.child1 = _GrowingNode(node.used | {node.var})
        position = leaves.index(node)
        leaves[position:position + 1] = [node.child0, node.child1]

    labels = {id(leaf): int(bit) for leaf, bit in zip(leaves, rng.integers(0, 2, len(leaves)))}

    def freeze(node: _GrowingNode) -> DecisionTree:
        if node.var is None:
            return Leaf(labels[id(node)])
        return Internal(node.var, freeze(node.child0), freeze(node.child1))

    return freeze(root)


def gen_junta(k: int, n: int, seed: int) -> DecisionTree:
    """Full depth-k tree over k random variables with random leaf bits."""
    check_positive("n", n)
    check_cap("k", k, min(n, JUNTA_MAX_K))
    if k < 0:
        raise ConfigError(f"junta size must be >= 0, got {k}")
    rng = np.random.default_rng(seed)
    variables = [int(v) for v in rng.choice(n, size=k, replace=False)]
    bits = iter(int(b) for b in rng.integers(0, 2, 1 << k))

    def build(level: int) -> DecisionTree:
        if level == k:
            return Leaf(next(bits))
        child0 = build(level + 1)
        child1 = build(level + 1)
        return Internal(variables[level], child0, child1)

    return build(0)


def gen_monotone(n: int, seed: int, density: Optional[float] = None) -> TruthTable:
    """Upward closure of a sparse random table: f'(x) = OR of f(y) over y below x."""
    check_positive("n", n)
    check_cap("n", n, MONOTONE_MAX_N)
    density = 2.0 ** (-n / 2) if density is None else density
    rng = np.random.default_rng(seed)
    bits = (rng.random(1 << n) < density).astype(np.uint8)
    for var in range(n):
        pairs = bits.reshape(-1, 2, 1 << var)
        pairs[:, 1, :] |= pairs[:, 0, :]
    return TruthTable(n, bits)


@dataclass(frozen=True)
class TargetSpec:
    family: str
    n: int
    s: int = 0
    k: int = 0
    noise: float = 0.0
    seed: Optional[int] = None
    path: Optional[str] = None

    def __post_init__(self):
        check_choice("family", self.family, FAMILIES)
        check_noise_rate(self.noise)
        if self.seed is not None:
            check_positive("seed", self.seed, minimum=0)
        if self.family == "explicit" and not self.path:
            raise ConfigError("explicit targets need a file path")

    def build(self, trial_seed: int) -> Tuple[Target, int]:
        """A fixed `seed` pins one target for every trial; otherwise each trial draws its own."""
        seed = trial_seed if self.seed is None else self.seed
        if self.family == "tree":
            return gen_random_tree(self.s, self.n, seed), self.n
        if self.family == "junta":
            return gen_junta(self.k, self.n, seed), self.n
        if self.family == "monotone":
            return gen_monotone(self.n, seed), self.n
        return load_target(self.path)


# Error measurement
def measure_error(h: DecisionTree, target: Union[TruthTable, Oracle], samples: Optional[int] = None,
                  eps: float = 0.05, seed: int = 0) -> float:
    """Exact when a table is at hand (n <= 24) and no sample count is forced,
    else a fresh uniform sample sized for (eps/4, 0.01)."""
    if isinstance(target, TruthTable):
        return distance(tree_to_table(h, target.n), target)
    if samples is None and target.n <= TABLE_MAX_N:
        return distance(tree_to_table(h, target.n), target.exact_table())

    m = samples or EstimationBudget(eps / 4, 0.01).hoeffding_samples
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(EVAL_STREAM,)))
    wrong = 0
    for start in range(0, m, 1 << 14):
        X = rng.integers(0, 2, size=(min(1 << 14, m - start), target.n), dtype=np.uint8)
        wrong += int(np.count_nonzero(eval_tree_batch(h, X) != target.labels(X)))
    return wrong / m


# Experiments
def schedule_from_dict(data: Dict[str, Any]) -> GreedSchedule:
    kind = data.get("schedule", "polylog")
    if kind == "constant":
        return GreedSchedule.constant(int(data.get("k", 1)))
    if kind == "two_phase":
        phase_split = data.get("phase_split")
        return GreedSchedule.two_phase(
            int(data.get("k", 1)), int(data.get("k2", 1)), None if phase_split is None else int(phase_split)
        )
    if kind == "polylog":
        return GreedSchedule.polylog(float(data.get("exponent", 2.0)))
    raise ConfigError(f"unknown schedule {kind!r}")


@dataclass(frozen=True)
class ExperimentCell:
    target: TargetSpec
    algo: str
    config: LearnerConfig

    def __post_init__(self):
        check_choice("algo", self.algo, ALGORITHMS)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentCell":
        target = TargetSpec(**data["target"])
        options = dict(data.get("config") or {})
        schedule = schedule_from_dict(options)
        known = {"s", "eps", "delta", "depth", "lookahead", "mode", "exact", "proper", "sample_cap", "dp_candidates"}
        unknown = set(options) - known - {"schedule", "k", "k2", "phase_split", "exponent"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        options = {key: value for key, value in options.items() if key in known}
        options.setdefault("s", target.s or (1 << target.k) or 1)
        return cls(target, data["algo"], LearnerConfig(schedule=schedule, **options))


@dataclass(frozen=True)
class InvalidCell:
    reason: str


def load_matrix(path: Union[str, Path]) -> List[Union[ExperimentCell, InvalidCell]]:
    """YAML list of cells; a broken entry keeps its index as an InvalidCell."""
    entries = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or []
    if not isinstance(entries, list):
        raise ConfigError(f"{path}: expected a list of cells")
    cells = []
    for index, entry in enumerate(entries):
        try:
            cells.append(ExperimentCell.from_dict(entry))
        except (TreeLabError, KeyError, TypeError, ValueError) as e:
            logger.warning(f"Matrix cell {index} is invalid: {e}")
            cells.append(InvalidCell(str(e)))
    return cells


def schedule_sweep(s: int, n: int, noise: float = 0.0, eps: float = 0.05,
                   exact: bool = False, depth: Optional[int] = None) -> List[ExperimentCell]:
    """Constant vs two-phase vs polylog greediness on random size-s trees."""
    target = TargetSpec("tree", n=n, s=s, noise=noise)
    k_high = polylog_k(s, 2.0)
    schedules = [
        ("topk", GreedSchedule.constant(1)),
        ("topk", GreedSchedule.constant(2)),
        ("topk", GreedSchedule.constant(4)),
        ("adaptive", GreedSchedule.two_phase(k_high, 2, default_phase_split(s))),
        ("adaptive", GreedSchedule.two_phase(k_high, 1, default_phase_split(s))),
        ("topk", GreedSchedule.polylog(2.0)),
    ]
    return [
        ExperimentCell(target, algo, LearnerConfig(s=s, eps=eps, depth=depth, schedule=schedule, exact=exact))
        for algo, schedule in schedules
    ]


@dataclass
class ExperimentRecord:
    family: str
    s_target: int
    n: int
    k_junta: int
    noise: float
    algo: str
    k1: int
    k2: int
    phase_split: int
    lookahead: int
    depth_cap: int
    eps: float
    delta: float
    mode: str
    seed: int
    trial: int
    err: float
    hyp_size: int
    hyp_depth: int
    mq_count: int
    ex_count: int
    subproblems: int
    wall_ms: float

    def to_row(self) -> List[str]:
        values = asdict(self)
        row = []
        for column in CSV_COLUMNS:
            value = values[column]
            if column == "err":
                row.append(f"{value:.6f}")
            elif column == "wall_ms":
                row.append(f"{value:.1f}")
            elif isinstance(value, float):
                row.append(f"{value:g}")
            else:
                row.append(str(value))
        return row


def trial_seed(master_seed: int, cell_index: int, trial: int) -> int:
    state = np.random.SeedSequence(master_seed, spawn_key=(cell_index, trial)).generate_state(1)
    return int(state[0])


def run_trial(cell: ExperimentCell, cell_index: int, trial: int, master_seed: int,
              timing: bool = False) -> ExperimentRecord:
    seed = trial_seed(master_seed, cell_index, trial)
    target, n = cell.target.build(seed)
    cfg = replace(cell.config, seed=seed)
    oracle = Oracle(target, n=n, mode=cfg.mode, noise=cell.target.noise, seed=seed)
    with timed() as watch:
        tree, stats = learn(oracle, cfg, cell.algo)
    err = measure_error(tree, oracle, eps=cfg.eps, seed=seed)
    schedule_fields = cfg.schedule.csv_fields(cfg.s)
    return ExperimentRecord(
        family=cell.target.family,
        s_target=cell.target.s,
        n=n,
        k_junta=cell.target.k,
        noise=cell.target.noise,
        algo=cell.algo,
        k1=schedule_fields["k1"],
        k2=schedule_fields["k2"],
        phase_split=schedule_fields["phase_split"],
        lookahead=cfg.lookahead,
        depth_cap=cfg.depth_cap,
        eps=cfg.eps,
        delta=cfg.delta,
        mode=cfg.mode.value,
        seed=seed,
        trial=trial,
        err=err,
        hyp_size=tree_size(tree),
        hyp_depth=tree_depth(tree),
        mq_count=stats.mq_count,
        ex_count=stats.ex_count,
        subproblems=stats.subproblems_explored,
        wall_ms=watch.elapsed_ms if timing else 0.0,
    )


@dataclass
class BenchReport:
    rows: int = 0
    failures: List[Tuple[int, int, str]] = field(default_factory=list)


async def _run_matrix(cells, trials: int, writer, handle, master_seed: int, start_cell: int,
                      timing: bool, workers: int) -> BenchReport:
    report = BenchReport()
    order = [
        (cell_index, trial)
        for cell_index in range(start_cell, len(cells))
        for trial in range(trials)
    ]
    queue: "asyncio.Queue[Tuple[int, int]]" = asyncio.Queue()
    for item in order:
        queue.put_nowait(item)
    finished: Dict[Tuple[int, int], Optional[ExperimentRecord]] = {}
    cursor = 0

    def flush():
        nonlocal cursor
        while cursor < len(order) and order[cursor] in finished:
            record = finished.pop(order[cursor])
            if record is not None:
                writer.writerow(record.to_row())
                handle.flush()
                report.rows += 1
            cursor += 1

    async def worker():
        while True:
            cell_index, trial = await queue.get()
            cell = cells[cell_index]
            try:
                if isinstance(cell, InvalidCell):
                    raise ConfigError(cell.reason)
                record = await asyncio.to_thread(run_trial, cell, cell_index, trial, master_seed, timing)
            except Exception as e:
                logger.warning(f"Cell {cell_index} trial {trial} failed: {e}")
                report.failures.append((cell_index, trial, str(e)))
                record = None
            finished[(cell_index, trial)] = record
            flush()
            queue.task_done()

    tasks = [asyncio.create_task(worker()) for _ in range(max(1, workers))]
    await queue.join()
    for task in tasks:
        task.cancel()
    await asyncio.gather(*tasks, return_exceptions=True)
    return report


def run_experiment(cells: List[Union[ExperimentCell, InvalidCell]], trials: int, out: Union[str, Path],
                   master_seed: int = 0, start_cell: int = 0, timing: bool = False,
                   workers: Optional[int] = None) -> BenchReport:
    """One CSV row per (cell, trial), in that order whatever the completion order.

    start_cell > 0 appends to an existing file instead of rewriting it.
    """
    check_positive("trials", trials, minimum=0)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    appending = start_cell > 0 and out.exists()
    workers = BENCH_WORKERS if workers is None else workers

    with out.open("a" if appending else "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if not appending:
            writer.writerow(CSV_COLUMNS)
            handle.flush()
        report = asyncio.run(
            _run_matrix(cells, trials, writer, handle, master_seed, start_cell, timing, workers)
        )

    rss_mb = psutil.Process().memory_info().rss / (1024 * 1024)
    logger.info(
        f"Bench wrote {report.rows} rows to {out} ({len(report.failures)} failed trials, "
        f"resident memory {rss_mb:.0f} MiB)"
    )
    return report
