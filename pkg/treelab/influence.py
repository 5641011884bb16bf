"""Variable-importance scores: exact influences and correlations, and their
sampled estimates against an oracle.

Inf_i(f) = Pr_x[f(x) != f(x xor e_i)]. Free-variable index j of a restriction
refers to the j-th unfixed variable in increasing index order; every vector
carries the original indices alongside.
"""
import functools
import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import LOOKAHEAD_MAX
from treelab.core import Restriction, TruthTable, restrict_bits, split_pairs
from treelab.errors import AccessViolationError, ConfigError
from treelab.oracle import AccessMode, Oracle
from utils.checks import check_open_unit, check_positive

logger = logging.getLogger(__name__)


class Provenance(str, Enum):
    EXACT = "exact"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class EstimationBudget:
    tau: float
    delta: float
    sample_cap: Optional[int] = None

    def __post_init__(self):
        check_open_unit("tau", self.tau)
        check_open_unit("delta", self.delta)
        if self.sample_cap is not None:
            check_positive("sample_cap", self.sample_cap)

    @property
    def hoeffding_samples(self) -> int:
        """Two-sided Hoeffding count ceil(ln(2/delta) / (2 tau^2))."""
        return max(1, math.ceil(math.log(2.0 / self.delta) / (2.0 * self.tau ** 2)))

    @property
    def samples(self) -> int:
        if self.sample_cap is None:
            return self.hoeffding_samples
        return min(self.hoeffding_samples, self.sample_cap)

    @property
    def capped(self) -> bool:
        return self.sample_cap is not None and self.hoeffding_samples > self.sample_cap

    @property
    def correlation_samples(self) -> int:
        """Samples for a [-1, 1]-valued mean: four times the indicator count, then capped."""
        m = 4 * self.hoeffding_samples
        return m if self.sample_cap is None else min(m, self.sample_cap)

    @property
    def correlation_capped(self) -> bool:
        return self.sample_cap is not None and 4 * self.hoeffding_samples > self.sample_cap

    def split(self, parts: int) -> "EstimationBudget":
        """Union bound: spread delta evenly over `parts` estimates."""
        return EstimationBudget(self.tau, self.delta / max(1, parts), self.sample_cap)


@dataclass(frozen=True, eq=False)
class InfluenceVector:
    scores: np.ndarray
    variables: Tuple[int, ...]
    provenance: Provenance = Provenance.EXACT
    tau: Optional[float] = None
    delta: Optional[float] = None

    def __post_init__(self):
        scores = np.clip(np.asarray(self.scores, dtype=float), 0.0, 1.0)
        if scores.shape != (len(self.variables),):
            raise ConfigError(f"{scores.size} scores for {len(self.variables)} free variables")
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.variables)

    def __getitem__(self, j: int) -> float:
        return float(self.scores[j])

    def ranked(self) -> List[int]:
        """Free indices by descending score, ties to the smallest index."""
        return sorted(range(len(self)), key=lambda j: (-self.scores[j], j))


_NEIGHBOUR_INDEX_MAX_N = 12


@functools.lru_cache(maxsize=None)
def _neighbour_index(n: int) -> np.ndarray:
    """Row i holds x xor e_i for every x < 2^n."""
    x = np.arange(1 << n, dtype=np.int64)
    return x[None, :] ^ (np.int64(1) << np.arange(n, dtype=np.int64))[:, None]


def influence_scores(bits: np.ndarray) -> np.ndarray:
    """Inf_i for every variable of the function tabulated by `bits`."""
    n = bits.size.bit_length() - 1
    if n <= _NEIGHBOUR_INDEX_MAX_N:
        return np.mean(bits[_neighbour_index(n)] != bits, axis=1)
    scores = np.empty(n)
    for var in range(n):
        low, high = split_pairs(bits, var)
        scores[var] = np.mean(low != high)
    return scores


def correlation_scores(bits: np.ndarray) -> np.ndarray:
    """E[(2f(x)-1)(2x_i-1)] for every i; equals influence when f is monotone."""
    n = bits.size.bit_length() - 1
    scores = np.empty(n)
    for var in range(n):
        low, high = split_pairs(bits, var)
        scores[var] = np.mean(high.astype(float) - low.astype(float))
    return scores


def exact_influence(f: TruthTable) -> InfluenceVector:
    return InfluenceVector(influence_scores(f.bits), tuple(range(f.n)))


def exact_correlation(f: TruthTable) -> np.ndarray:
    return correlation_scores(f.bits)


def _restricted(o: Oracle, restriction: Restriction) -> Tuple[np.ndarray, List[int]]:
    """Corrupted target bits under the restriction, and the free variables they range over."""
    return restrict_bits(o.exact_table(), restriction), restriction.free_variables(o.n)


def _free_var(o: Oracle, restriction: Restriction, i: int) -> int:
    free = restriction.free_variables(o.n)
    if not 0 <= i < len(free):
        raise ConfigError(f"free-variable index {i} out of range ({len(free)} free variables)")
    return free[i]


def _subcube_sample(o: Oracle, restriction: Restriction, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """Labelled uniform points of the subcube: queried in MQ mode, rejection-sampled otherwise."""
    if o.mode is AccessMode.MQ:
        X = o.sample_points(restriction, m)
        return X, o.mq_batch(X)
    return o.ex_conditioned_batch(restriction, m)


def estimate_influence(o: Oracle, restriction: Restriction, i: int, budget: EstimationBudget,
                       exact: bool = False) -> float:
    var = _free_var(o, restriction, i)
    if exact:
        bits, _ = _restricted(o, restriction)
        return float(influence_scores(bits)[i])
    if o.mode is not AccessMode.MQ:
        raise AccessViolationError("influence estimation needs membership queries; use estimate_influence_monotone")
    base, flipped = o.mq_neighbours(o.sample_points(restriction, budget.samples), [var])
    return float(np.mean(flipped[0] != base))


def estimate_influences(o: Oracle, restriction: Restriction, budget: EstimationBudget,
                        exact: bool = False) -> InfluenceVector:
    """All free-variable influences from one shared base sample."""
    if exact:
        bits, free = _restricted(o, restriction)
        return InfluenceVector(influence_scores(bits), tuple(free))
    if o.mode is not AccessMode.MQ:
        raise AccessViolationError("influence estimation needs membership queries; use estimate_influence_monotone")
    free = restriction.free_variables(o.n)
    base, flipped = o.mq_neighbours(o.sample_points(restriction, budget.samples), free)
    scores = np.mean(flipped != base, axis=1)
    return InfluenceVector(scores, tuple(free), Provenance.ESTIMATED, budget.tau, budget.delta)


def estimate_influence_monotone(o: Oracle, restriction: Restriction, i: int, budget: EstimationBudget,
                                exact: bool = False) -> float:
    var = _free_var(o, restriction, i)
    if exact:
        bits, _ = _restricted(o, restriction)
        return float(correlation_scores(bits)[i])
    X, labels = o.ex_conditioned_batch(restriction, budget.correlation_samples)
    signs = (2.0 * labels - 1.0) * (2.0 * X[:, var] - 1.0)
    return float(signs.mean())


def estimate_correlations(o: Oracle, restriction: Restriction, budget: EstimationBudget,
                          exact: bool = False) -> InfluenceVector:
    if exact:
        bits, free = _restricted(o, restriction)
        return InfluenceVector(correlation_scores(bits), tuple(free))
    free = restriction.free_variables(o.n)
    X, labels = o.ex_conditioned_batch(restriction, budget.correlation_samples)
    signed = 2.0 * labels - 1.0
    scores = np.array([np.mean(signed * (2.0 * X[:, var] - 1.0)) for var in free])
    return InfluenceVector(scores, tuple(free), Provenance.ESTIMATED, budget.tau, budget.delta)


def splitting_scores(o: Oracle, restriction: Restriction, budget: EstimationBudget,
                     exact: bool = False) -> InfluenceVector:
    """Influences with membership queries, degree-1 correlations from examples only."""
    if o.mode is AccessMode.MQ:
        return estimate_influences(o, restriction, budget, exact)
    return estimate_correlations(o, restriction, budget, exact)


def rank_candidates(vector: InfluenceVector, k: int, floor: float) -> List[int]:
    return [j for j in vector.ranked() if vector.scores[j] > floor][:k]


def top_k_influential(o: Oracle, restriction: Restriction, k: int, budget: EstimationBudget,
                      exact: bool = False) -> List[int]:
    check_positive("k", k)
    return rank_candidates(splitting_scores(o, restriction, budget, exact), k, budget.tau)


def estimate_bias(o: Oracle, restriction: Restriction, budget: EstimationBudget,
                  exact: bool = False) -> float:
    """Pr[f_pi(x) = 1]."""
    if exact:
        bits, _ = _restricted(o, restriction)
        return np.count_nonzero(bits) / bits.size
    _, labels = _subcube_sample(o, restriction, budget.samples)
    return float(labels.mean())


def _check_lookahead(ell: int, subsets: Sequence[Sequence[int]]):
    if not 0 <= ell <= LOOKAHEAD_MAX:
        raise ConfigError(f"lookahead depth {ell} outside [0, {LOOKAHEAD_MAX}]")
    for subset in subsets:
        if len(subset) > ell:
            raise ConfigError(f"{len(subset)} lookahead variables exceed depth {ell}")
        if len(set(subset)) != len(subset):
            raise ConfigError(f"repeated lookahead variable in {tuple(subset)}")


def lookahead_scores(o: Oracle, restriction: Restriction, subsets: Sequence[Sequence[int]], ell: int,
                     budget: EstimationBudget, exact: bool = False) -> Dict[Tuple[int, ...], float]:
    """Cell-majority error of each variable subset (free indices), from one shared sample."""
    _check_lookahead(ell, subsets)
    free = restriction.free_variables(o.n)
    scores = {}

    if exact:
        bits, _ = _restricted(o, restriction)
        m = len(free)
        cube = bits.reshape((2,) * m)
        for subset in subsets:
            keep = {m - 1 - j for j in subset}
            others = tuple(axis for axis in range(m) if axis not in keep)
            cells = cube.mean(axis=others) if others else cube.astype(float)
            scores[tuple(subset)] = float(np.mean(np.minimum(cells, 1.0 - cells)))
        return scores

    X, labels = _subcube_sample(o, restriction, budget.samples)
    for subset in subsets:
        cell = np.zeros(X.shape[0], dtype=np.int64)
        for position, j in enumerate(subset):
            cell |= X[:, free[j]].astype(np.int64) << position
        width = 1 << len(subset)
        counts = np.bincount(cell, minlength=width)
        ones = np.bincount(cell, weights=labels, minlength=width)
        scores[tuple(subset)] = float(np.minimum(ones, counts - ones).sum() / X.shape[0])
    return scores


def lookahead_score(o: Oracle, restriction: Restriction, variables: Sequence[int], ell: int,
                    budget: EstimationBudget, exact: bool = False) -> float:
    """Best error of a depth-ell tree querying only `variables` under the restriction."""
    return lookahead_scores(o, restriction, [tuple(variables)], ell, budget, exact)[tuple(variables)]


def lookahead_rank(o: Oracle, restriction: Restriction, pool: Sequence[int], ell: int,
                   budget: EstimationBudget, exact: bool = False) -> List[int]:
    """Reorder a candidate pool by the best lookahead error of any pool subset (size <= ell) containing each variable."""
    subsets = [
        combo
        for size in range(1, min(ell, len(pool)) + 1)
        for combo in itertools.combinations(pool, size)
    ]
    scores = lookahead_scores(o, restriction, subsets, ell, budget, exact)
    best = {j: min(score for combo, score in scores.items() if j in combo) for j in pool}
    position = {j: p for p, j in enumerate(pool)}
    return sorted(pool, key=lambda j: (best[j], position[j]))
