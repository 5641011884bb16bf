import numpy as np
import pytest

from treelab.core import Internal, Leaf, Restriction, TruthTable, relevant_variables, tree_to_table, tree_variables
from treelab.errors import AccessViolationError, ConfigError
from treelab.harness import gen_monotone, gen_random_tree
from treelab.influence import (
    EstimationBudget,
    InfluenceVector,
    Provenance,
    estimate_bias,
    estimate_correlations,
    estimate_influence,
    estimate_influence_monotone,
    estimate_influences,
    exact_correlation,
    exact_influence,
    lookahead_rank,
    lookahead_score,
    top_k_influential,
)
from treelab.oracle import Oracle

BUDGET = EstimationBudget(tau=0.1, delta=0.05)


def dictator(var: int, n: int) -> TruthTable:
    return TruthTable.from_function(n, lambda x: (x >> var) & 1)


class TestEstimationBudget:

    def test_hoeffding(self):
        assert EstimationBudget(0.1, 0.05).hoeffding_samples == 185

    def test_cap(self):
        budget = EstimationBudget(0.01, 0.01, sample_cap=1000)
        assert budget.samples == 1000 and budget.capped

    def test_correlation_samples(self):
        assert EstimationBudget(0.1, 0.05).correlation_samples == 740
        capped = EstimationBudget(0.1, 0.05, sample_cap=500)
        assert capped.correlation_samples == 500
        assert capped.correlation_capped and not capped.capped

    def test_split(self):
        assert EstimationBudget(0.1, 0.1).split(4).delta == pytest.approx(0.025)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            EstimationBudget(0.0, 0.1)


class TestExactInfluence:

    def test_dictator(self):
        assert exact_influence(dictator(0, 3)).scores.tolist() == [1.0, 0.0, 0.0]

    def test_xor(self, xor2):
        assert exact_influence(xor2).scores.tolist() == [1.0, 1.0]

    def test_majority(self, maj3):
        assert exact_influence(maj3).scores.tolist() == [0.5, 0.5, 0.5]

    def test_relevance(self):
        for seed in range(30):
            tree = gen_random_tree(2 + seed % 10, 10, seed)
            table = tree_to_table(tree, 10)
            scores = exact_influence(table).scores
            assert [v for v in range(10) if scores[v] > 0] == relevant_variables(table)
            for v in set(range(10)) - set(tree_variables(tree)):
                assert scores[v] == 0

    def test_poincare(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 11))
            f = TruthTable(n, rng.random(1 << n) < rng.random())
            p = f.bias
            assert 4 * p * (1 - p) <= exact_influence(f).scores.sum() + 1e-12

    def test_relabeling(self, rng):
        n = 7
        for _ in range(10):
            f = TruthTable(n, rng.integers(0, 2, 1 << n))
            perm = rng.permutation(n)

            def relabeled(x, f=f, perm=perm):
                y = 0
                for i in range(n):
                    y |= ((x >> i) & 1) << int(perm[i])
                return f[y]

            g = TruthTable.from_function(n, relabeled)
            assert np.allclose(exact_influence(g).scores, exact_influence(f).scores[perm])

    @pytest.mark.parametrize("n", [0, 5, 14])
    def test_flip_definition(self, n, rng):
        f = TruthTable(n, rng.integers(0, 2, 1 << n))
        x = np.arange(1 << n)
        expected = [np.mean(f.bits != f.bits[x ^ (1 << i)]) for i in range(n)]
        assert np.allclose(exact_influence(f).scores, expected)

    def test_scores_are_clipped(self):
        vector = InfluenceVector(np.array([1.2, -0.1]), (0, 1))
        assert vector.scores.tolist() == [1.0, 0.0]


class TestEstimatedInfluence:

    def test_constant_target(self):
        o = Oracle(TruthTable.constant(5, 1))
        assert estimate_influence(o, Restriction(), 3, BUDGET) == 0

    def test_dictator(self):
        o = Oracle(dictator(0, 4))
        assert estimate_influence(o, Restriction(), 0, BUDGET) == 1

    def test_counts_two_queries_per_sample(self):
        o = Oracle(dictator(0, 4))
        estimate_influence(o, Restriction(), 1, BUDGET)
        assert o.counts() == (2 * BUDGET.samples, 0)

    def test_free_index_under_restriction(self):
        o = Oracle(dictator(3, 5))
        restriction = Restriction.parse("x0=1,x2=0")
        # free variables are x1, x3, x4
        assert estimate_influence(o, restriction, 1, BUDGET) == 1
        vector = estimate_influences(o, restriction, BUDGET)
        assert vector.variables == (1, 3, 4)
        assert vector.scores.tolist() == [0.0, 1.0, 0.0]
        assert vector.provenance is Provenance.ESTIMATED

    def test_examples_only_refused(self):
        o = Oracle(dictator(0, 4), mode="ex")
        with pytest.raises(AccessViolationError):
            estimate_influence(o, Restriction(), 0, BUDGET)

    def test_calibration(self):
        budget = EstimationBudget(0.05, 0.01)
        misses = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n = 4 + seed % 9
            f = TruthTable(n, rng.integers(0, 2, 1 << n))
            i = seed % n
            truth = exact_influence(f)[i]
            misses += abs(estimate_influence(Oracle(f, seed=seed), Restriction(), i, budget) - truth) > budget.tau
        assert misses <= 0.02 * 200

    def test_majority_within_tau(self, maj3):
        budget = EstimationBudget(0.05, 0.01)
        hits = sum(
            abs(estimate_influence(Oracle(maj3, seed=seed), Restriction(), 0, budget) - 0.5) <= 0.05
            for seed in range(100)
        )
        assert hits >= 99

    def test_exact_mode_issues_no_queries(self, maj3):
        o = Oracle(maj3)
        assert estimate_influence(o, Restriction(), 2, BUDGET, exact=True) == 0.5
        assert o.counts() == (0, 0)


class TestMonotoneInfluence:

    def test_dictator_relevant(self):
        o = Oracle(dictator(0, 3), mode="ex")
        assert estimate_influence_monotone(o, Restriction(), 0, BUDGET) == 1

    def test_dictator_irrelevant(self):
        o = Oracle(dictator(0, 3), mode="ex")
        assert estimate_influence_monotone(o, Restriction(), 1, BUDGET, exact=True) == 0

    def test_uses_examples_only(self):
        o = Oracle(dictator(0, 3), mode="ex")
        estimate_influence_monotone(o, Restriction(), 0, BUDGET)
        assert o.counts() == (0, BUDGET.correlation_samples)

    def test_and_within_tau(self, and2):
        assert exact_correlation(and2).tolist() == exact_influence(and2).scores.tolist() == [0.5, 0.5]
        misses = 0
        for seed in range(100):
            o = Oracle(and2, mode="ex", seed=seed)
            for i in (0, 1):
                misses += abs(estimate_influence_monotone(o, Restriction(), i, BUDGET) - 0.5) > BUDGET.tau
        assert misses <= BUDGET.delta * 200

    def test_majority_within_tau(self, maj3):
        budget = EstimationBudget(0.05, 0.01)
        hits = sum(
            abs(estimate_influence_monotone(Oracle(maj3, mode="ex", seed=seed), Restriction(), 0, budget) - 0.5)
            <= 0.05
            for seed in range(100)
        )
        assert hits >= 99

    def test_correlation_equals_influence(self):
        for seed in range(40):
            f = gen_monotone(1 + seed % 10, seed)
            assert np.allclose(exact_correlation(f), exact_influence(f).scores)

    def test_restricted_correlation(self):
        f = gen_monotone(8, 3)
        o = Oracle(f, mode="ex")
        restriction = Restriction.parse("x1=1,x6=0")
        vector = estimate_correlations(o, restriction, BUDGET, exact=True)
        assert vector.variables == (0, 2, 3, 4, 5, 7)
        for j in range(len(vector)):
            assert estimate_influence_monotone(o, restriction, j, BUDGET, exact=True) == pytest.approx(vector[j])


class TestTopK:

    def test_embedded_xor(self):
        f = TruthTable.from_function(6, lambda x: (x ^ (x >> 1)) & 1)
        assert sorted(top_k_influential(Oracle(f), Restriction(), 2, BUDGET)) == [0, 1]

    def test_constant(self):
        assert top_k_influential(Oracle(TruthTable.constant(4, 0)), Restriction(), 3, BUDGET) == []

    def test_k_exceeds_free_variables(self, maj3):
        assert top_k_influential(Oracle(maj3), Restriction(), 5, BUDGET, exact=True) == [0, 1, 2]

    def test_ranking(self):
        tree = Internal(2, Internal(0, Leaf(0), Internal(1, Leaf(0), Leaf(1))), Leaf(1))
        f = tree_to_table(tree, 4)
        assert top_k_influential(Oracle(f), Restriction(), 1, BUDGET, exact=True) == [2]

    def test_invalid_k(self, maj3):
        with pytest.raises(ConfigError):
            top_k_influential(Oracle(maj3), Restriction(), 0, BUDGET)


class TestBias:

    def test_constant(self):
        assert estimate_bias(Oracle(TruthTable.constant(3, 1)), Restriction(), BUDGET) == 1.0

    def test_xor_exact(self, xor2):
        assert estimate_bias(Oracle(xor2), Restriction(), BUDGET, exact=True) == 0.5

    def test_and_restricted(self, and2):
        assert estimate_bias(Oracle(and2), Restriction.of({0: 1}), BUDGET, exact=True) == 0.5

    def test_examples_only_mode(self, and2):
        o = Oracle(and2, mode="ex", seed=2)
        assert estimate_bias(o, Restriction.of({0: 1, 1: 1}), BUDGET) == 1.0
        assert o.counts()[0] == 0


class TestLookahead:

    def test_no_lookahead(self, and2):
        assert lookahead_score(Oracle(and2), Restriction(), [], 0, BUDGET, exact=True) == 0.25

    def test_xor_resolved(self, xor2):
        assert lookahead_score(Oracle(xor2), Restriction(), [0, 1], 2, BUDGET, exact=True) == 0
        assert lookahead_score(Oracle(xor2), Restriction(), [0, 1], 2, BUDGET) == 0

    def test_xor_single_variable(self, xor2):
        assert lookahead_score(Oracle(xor2), Restriction(), [0], 1, BUDGET, exact=True) == 0.5

    def test_depth_cap(self, xor2):
        with pytest.raises(ConfigError):
            lookahead_score(Oracle(xor2), Restriction(), [0, 1], 1, BUDGET)

    def test_rank_prefers_parity_pair(self):
        # no single variable of x0 xor x1 helps; the pair resolves it
        f = TruthTable.from_function(4, lambda x: (x ^ (x >> 1)) & 1)
        assert lookahead_rank(Oracle(f), Restriction(), [2, 0, 1], 2, BUDGET, exact=True) == [0, 1, 2]
