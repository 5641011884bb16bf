"""Decision-tree learners: greedy, top-k search, adaptive schedules,
restriction DP, and optimal size-s pruning.
"""
import logging
import math
import threading
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from config import DP_MAX_DEPTH, DP_MAX_N
from treelab.core import (
    DecisionTree,
    Internal,
    Leaf,
    Restriction,
    TruthTable,
    make_split,
    restrict_bits,
    restrict_cube,
    tree_size,
)
from treelab.errors import ConfigError, ResourceLimitError
from treelab.influence import (
    EstimationBudget,
    InfluenceVector,
    estimate_bias,
    influence_scores,
    lookahead_rank,
    rank_candidates,
    splitting_scores,
)
from treelab.oracle import AccessMode, Oracle
from treelab.schedules import LearnerConfig, SearchStats
from utils.checks import check_cap, check_positive
from utils.time import timed

logger = logging.getLogger(__name__)

# Substream purposes for Oracle.fork
INFLUENCE_STREAM = 0
BIAS_STREAM = 1
LOOKAHEAD_STREAM = 2

Solution = Tuple[DecisionTree, float]
BiasReference = Union[TruthTable, Oracle, Callable[[Restriction], float]]


def majority_bit(bias: float) -> int:
    """1 only for a strict majority of ones; an exact tie labels 0."""
    return 1 if bias > 0.5 else 0


def label_leaf(o: Oracle, restriction: Restriction, budget: EstimationBudget, exact: bool = False) -> int:
    return majority_bit(estimate_bias(o, restriction, budget, exact))


class SubproblemMemo:
    """Single logical map over canonical restrictions with get-or-insert semantics."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: Dict[Restriction, Solution] = {}

    def get_or_insert(self, key: Restriction, factory: Callable[[], Solution]) -> Solution:
        with self._lock:
            if key in self._entries:
                return self._entries[key]
        value = factory()
        with self._lock:
            return self._entries.setdefault(key, value)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


def _estimate_call_bound(levels: List[int], n: int) -> int:
    nodes = 0
    level_width = 1
    for k in levels:
        nodes += level_width
        level_width *= 2 * k
    nodes += level_width
    return nodes * (n + 2)


def learner_budget(cfg: LearnerConfig, n: int, greedy: bool = False) -> EstimationBudget:
    """tau = eps / (4d); delta spread over every estimate the search can issue."""
    levels = [1] * cfg.depth_cap if greedy else cfg.schedule.levels(cfg.depth_cap, cfg.s)
    return EstimationBudget(cfg.tau, cfg.delta, cfg.sample_cap).split(_estimate_call_bound(levels, n))


class TreeSearch:
    """Shared machinery of the oracle-driven learners.

    Every estimate at restriction pi draws from Oracle.fork(seed, purpose, pi),
    so two searches that meet the same subproblem see the same numbers.
    """

    def __init__(self, oracle: Oracle, cfg: LearnerConfig, algorithm: str):
        self.oracle = oracle
        self.cfg = cfg
        self.depth = cfg.depth_cap
        self.budget = learner_budget(cfg, oracle.n, greedy=algorithm == "greedy")
        self.stats = SearchStats(algorithm=algorithm)
        self.memo = SubproblemMemo()
        self._stats_lock = threading.Lock()
        self._explored = set()

    def _fork(self, purpose: int, restriction: Restriction) -> Oracle:
        # exact estimates draw nothing, so they share the parent oracle
        if self.cfg.exact:
            return self.oracle
        return self.oracle.fork(self.cfg.seed, purpose, *restriction.key())

    def _count_estimate(self, capped: bool):
        with self._stats_lock:
            self.stats.estimate_calls += 1
            if capped and not self.cfg.exact:
                self.stats.capped_estimates += 1

    def explore(self, restriction: Restriction):
        with self._stats_lock:
            if restriction in self._explored:
                return
            self._explored.add(restriction)
            self.stats.record_level(len(restriction))

    def bias(self, restriction: Restriction) -> float:
        self._count_estimate(self.budget.capped)
        return estimate_bias(self._fork(BIAS_STREAM, restriction), restriction, self.budget, self.cfg.exact)

    def leaf(self, restriction: Restriction) -> Solution:
        p = self.bias(restriction)
        return Leaf(majority_bit(p)), min(p, 1.0 - p)

    def candidates(self, restriction: Restriction, k: int) -> List[int]:
        """Original indices of up to k split candidates, best first."""
        examples_only = self.oracle.mode is not AccessMode.MQ
        self._count_estimate(self.budget.correlation_capped if examples_only else self.budget.capped)
        vector: InfluenceVector = splitting_scores(
            self._fork(INFLUENCE_STREAM, restriction), restriction, self.budget, self.cfg.exact
        )
        ell = self.cfg.lookahead
        pool = rank_candidates(vector, max(k, 2 * ell) if ell else k, self.budget.tau)
        if ell and len(pool) > 1:
            self._count_estimate(self.budget.capped)
            pool = lookahead_rank(
                self._fork(LOOKAHEAD_STREAM, restriction), restriction, pool, ell, self.budget, self.cfg.exact
            )
        chosen = [vector.variables[j] for j in pool[:k]]
        logger.debug(f"[{self.stats.algorithm}] {{{restriction}}} candidates {chosen}")
        return chosen

    def grow(self, restriction: Restriction) -> DecisionTree:
        """Pure greedy: split on the single best candidate."""
        level = len(restriction)
        if level == 0:
            self.explore(restriction)
        if level >= self.depth:
            return self.leaf(restriction)[0]
        self.explore(restriction)
        chosen = self.candidates(restriction, 1)
        if not chosen:
            return self.leaf(restriction)[0]
        var = chosen[0]
        return make_split(var, self.grow(restriction.extend(var, 0)), self.grow(restriction.extend(var, 1)))

    def solve(self, restriction: Restriction) -> Solution:
        if len(restriction) < self.depth:
            with self._stats_lock:
                self.stats.subproblem_visits += 1
        return self.memo.get_or_insert(restriction, lambda: self._solve(restriction))

    def _solve(self, restriction: Restriction) -> Solution:
        level = len(restriction)
        if level == 0:
            self.explore(restriction)
        if level >= self.depth:
            return self.leaf(restriction)
        self.explore(restriction)
        chosen = self.candidates(restriction, self.cfg.k_at(level))
        if not chosen:
            return self.leaf(restriction)

        best: Optional[Solution] = None
        best_rank = None
        for var in sorted(chosen):
            tree0, err0 = self.solve(restriction.extend(var, 0))
            tree1, err1 = self.solve(restriction.extend(var, 1))
            split = make_split(var, tree0, tree1)
            # equal errors: fewer leaves, then the smaller index
            rank = ((err0 + err1) / 2.0, tree_size(split))
            if best_rank is None or rank < best_rank:
                best, best_rank = (split, rank[0]), rank
        return best

    def finish(self, tree: DecisionTree) -> DecisionTree:
        if self.cfg.proper == "weak":
            return tree
        reference = self.oracle.exact_table() if self.cfg.exact else self.bias
        return prune_to_size(tree, reference, self.cfg.s)


def _run(oracle: Oracle, cfg: LearnerConfig, algorithm: str, build) -> Tuple[DecisionTree, SearchStats]:
    mq_before, ex_before = oracle.counts()
    search = TreeSearch(oracle, cfg, algorithm)
    with timed() as watch:
        tree, error = build(search)
        tree = search.finish(tree)
    stats = search.stats
    mq_after, ex_after = oracle.counts()
    stats.mq_count = mq_after - mq_before
    stats.ex_count = ex_after - ex_before
    stats.wall_ms = watch.elapsed_ms
    stats.error_estimate = error
    logger.info(
        f"[{algorithm}] n={oracle.n} s={cfg.s} d={search.depth} -> size {tree_size(tree)}, "
        f"{stats.subproblems_explored} subproblems, mq={stats.mq_count} ex={stats.ex_count}, "
        f"{stats.wall_ms:.1f} ms"
    )
    if stats.capped_estimates:
        logger.info(
            f"[{algorithm}] {stats.capped_estimates}/{stats.estimate_calls} estimates capped at "
            f"{search.budget.samples} samples (Hoeffding asked for {search.budget.hoeffding_samples})"
        )
    return tree, stats


def learn_greedy(oracle: Oracle, cfg: LearnerConfig) -> Tuple[DecisionTree, SearchStats]:
    return _run(oracle, cfg, "greedy", lambda search: (search.grow(Restriction()), None))


def learn_topk(oracle: Oracle, cfg: LearnerConfig) -> Tuple[DecisionTree, SearchStats]:
    return _run(oracle, cfg, "topk", lambda search: search.solve(Restriction()))


def learn_adaptive(oracle: Oracle, cfg: LearnerConfig) -> Tuple[DecisionTree, SearchStats]:
    """Top-k search with a level-dependent k(t); needs a two_phase schedule."""
    if cfg.schedule.kind != "two_phase":
        raise ConfigError(f"adaptive learning needs a two_phase schedule, got {cfg.schedule.kind}")
    return _run(oracle, cfg, "adaptive", lambda search: search.solve(Restriction()))


def dp_subproblem_count(n: int, depth: int) -> int:
    """Restrictions of at most `depth` out of n variables."""
    return sum(math.comb(n, j) * (1 << j) for j in range(min(n, depth) + 1))


def learn_restriction_dp(f: TruthTable, cfg: LearnerConfig) -> Tuple[DecisionTree, SearchStats]:
    """Exhaustive DP over restrictions: the optimal depth-<=d tree, smallest among ties.

    Without an explicit depth the derived cap is clamped to DP_MAX_DEPTH.
    """
    depth = cfg.depth_cap if cfg.depth is not None else min(cfg.depth_cap, DP_MAX_DEPTH)
    check_cap("n", f.n, DP_MAX_N)
    check_cap("depth", depth, DP_MAX_DEPTH)
    space = dp_subproblem_count(f.n, depth)
    if space > cfg.dp_cap:
        raise ResourceLimitError(f"{space} restrictions exceed the subproblem cap of {cfg.dp_cap}")

    stats = SearchStats(algorithm="dp")
    cube = f.cube()
    memo: Dict[Restriction, Tuple[float, int, DecisionTree]] = {}

    def candidates(restriction: Restriction, sub: np.ndarray) -> List[int]:
        free = restriction.free_variables(f.n)
        if cfg.dp_candidates == "all":
            return free
        vector = InfluenceVector(influence_scores(sub.reshape(-1)), tuple(free))
        picks = rank_candidates(vector, cfg.k_at(len(restriction)), cfg.tau)
        return sorted(free[j] for j in picks)

    def best(restriction: Restriction) -> Tuple[float, int, DecisionTree]:
        if restriction in memo:
            return memo[restriction]
        sub = restrict_cube(cube, f.n, restriction)
        size = np.size(sub)
        ones = int(np.sum(sub))
        p = ones / size
        answer = (min(p, 1.0 - p), 1, Leaf(majority_bit(p)))
        level = len(restriction)
        if level == 0 or (level < depth and 0 < ones < size):
            stats.record_level(level)
        if level < depth and 0 < ones < size:
            for var in candidates(restriction, sub):
                err0, leaves0, tree0 = best(restriction.extend(var, 0))
                err1, leaves1, tree1 = best(restriction.extend(var, 1))
                option = ((err0 + err1) / 2.0, leaves0 + leaves1, Internal(var, tree0, tree1))
                if option[:2] < answer[:2]:
                    answer = option
        memo[restriction] = answer
        return answer

    with timed() as watch:
        error, _, tree = best(Restriction())
        if cfg.proper == "strict":
            tree = prune_to_size(tree, f, cfg.s)
    stats.wall_ms = watch.elapsed_ms
    stats.error_estimate = error
    logger.info(f"[dp] n={f.n} d={depth}: optimal error {error:.6f}, {len(memo)} memoized restrictions")
    return tree, stats


def _bias_function(reference: BiasReference, budget: Optional[EstimationBudget]) -> Callable[[Restriction], float]:
    if isinstance(reference, TruthTable):
        return lambda restriction: float(restrict_bits(reference, restriction).mean())
    if isinstance(reference, Oracle):
        if budget is None:
            raise ConfigError("pruning against an oracle needs an estimation budget")
        return lambda restriction: estimate_bias(
            reference.fork(BIAS_STREAM, *restriction.key()), restriction, budget
        )
    return reference


def prune_to_size(tree: DecisionTree, reference: BiasReference, s: int,
                  budget: Optional[EstimationBudget] = None) -> DecisionTree:
    """Optimal pruning of `tree` to at most s leaves.

    A pruning replaces internal subtrees by majority leaves; original leaves keep
    their labels. Among equal errors the smaller tree wins.
    """
    check_positive("s", s)
    if tree_size(tree) <= s:
        return tree
    bias_of = _bias_function(reference, budget)

    # leaves -> (error mass, subtree)
    def options(node: DecisionTree, restriction: Restriction) -> Dict[int, Tuple[float, DecisionTree]]:
        weight = 2.0 ** -len(restriction)
        p = bias_of(restriction)
        if isinstance(node, Leaf):
            return {1: (weight * (p if node.bit == 0 else 1.0 - p), node)}
        table = {1: (weight * min(p, 1.0 - p), Leaf(majority_bit(p)))}
        left = options(node.child0, restriction.extend(node.var, 0))
        right = options(node.child1, restriction.extend(node.var, 1))
        for leaves0, (err0, tree0) in sorted(left.items()):
            for leaves1, (err1, tree1) in sorted(right.items()):
                leaves = leaves0 + leaves1
                if leaves > s:
                    break
                err = err0 + err1
                if leaves not in table or err < table[leaves][0]:
                    table[leaves] = (err, Internal(node.var, tree0, tree1))
        return table

    table = options(tree, Restriction())
    leaves = min(table, key=lambda b: (table[b][0], b))
    return table[leaves][1]


ALGORITHMS = ("greedy", "topk", "adaptive", "dp")


def learn(oracle: Oracle, cfg: LearnerConfig, algorithm: str) -> Tuple[DecisionTree, SearchStats]:
    if algorithm == "greedy":
        return learn_greedy(oracle, cfg)
    if algorithm == "topk":
        return learn_topk(oracle, cfg)
    if algorithm == "adaptive":
        return learn_adaptive(oracle, cfg)
    if algorithm == "dp":
        mq_before, ex_before = oracle.counts()
        tree, stats = learn_restriction_dp(oracle.exact_table(), cfg)
        mq_after, ex_after = oracle.counts()
        stats.mq_count, stats.ex_count = mq_after - mq_before, ex_after - ex_before
        return tree, stats
    raise ConfigError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
