import threading

import numpy as np
import pytest

from treelab.core import Internal, Leaf, Restriction, TruthTable, distance, int_to_bits
from treelab.errors import AccessViolationError, ConfigError, SamplingExhaustedError, StructuralError
from treelab.oracle import AccessMode, Oracle, default_attempts


class TestMembershipQueries:

    def test_and(self, and2):
        o = Oracle(and2)
        assert o.mq(0b11) == 1
        assert o.mq(0b01) == 0

    def test_examples_only_mode_refuses(self, and2):
        o = Oracle(and2, mode="ex")
        with pytest.raises(AccessViolationError):
            o.mq(3)
        with pytest.raises(AccessViolationError):
            o.mq_batch(np.zeros((2, 2), dtype=np.uint8))
        assert o.counts() == (0, 0)

    def test_tree_target(self):
        o = Oracle(Internal(4, Leaf(0), Leaf(1)), n=6)
        assert o.mq(1 << 4) == 1 and o.mq(0b1111) == 0

    def test_tree_variable_out_of_range(self):
        with pytest.raises(StructuralError):
            Oracle(Internal(7, Leaf(0), Leaf(1)), n=4)

    def test_negative_seed(self, and2):
        with pytest.raises(ConfigError):
            Oracle(and2, seed=-1)

    @pytest.mark.parametrize("n", [8, 30])
    def test_neighbours_match_single_batches(self, n):
        tree = Internal(1, Internal(5, Leaf(0), Leaf(1)), Internal(2, Leaf(1), Leaf(0)))
        o = Oracle(tree, n=n, noise=0.1, seed=4)
        X = np.random.default_rng(1).integers(0, 2, size=(300, n), dtype=np.uint8)
        base, flipped = o.mq_neighbours(X, [1, 2, 5])
        assert np.array_equal(base, o.labels(X))
        for row, var in enumerate([1, 2, 5]):
            Y = X.copy()
            Y[:, var] ^= 1
            assert np.array_equal(flipped[row], o.labels(Y))
        assert o.counts() == (4 * 300, 0)

    def test_neighbours_leave_inputs_alone(self, maj3):
        X = np.zeros((5, 3), dtype=np.uint8)
        Oracle(maj3).mq_neighbours(X, [0, 2])
        assert not X.any()

    def test_neighbours_refused_in_examples_only_mode(self, maj3):
        with pytest.raises(AccessViolationError):
            Oracle(maj3, mode="ex").mq_neighbours(np.zeros((1, 3), dtype=np.uint8), [0])


class TestCorruption:

    @pytest.mark.parametrize("n, noise", [(10, 0.1), (12, 0.05), (8, 0.3)])
    def test_exact_budget(self, n, noise, rng):
        clean = TruthTable(n, rng.integers(0, 2, 1 << n))
        o = Oracle(clean, noise=noise, seed=3)
        budget = int(np.floor(noise * (1 << n) + 0.5))
        assert o.corrupted_points().size == budget
        assert distance(o.exact_table(), clean) == budget / (1 << n)

    def test_corrupted_points_flip(self, rng):
        clean = TruthTable(10, rng.integers(0, 2, 1024))
        o = Oracle(clean, noise=0.1, seed=11)
        for x in o.corrupted_points()[:20]:
            assert o.mq(int(x)) == 1 - clean[int(x)]

    def test_same_x_same_label(self, rng):
        o = Oracle(TruthTable(6, rng.integers(0, 2, 64)), noise=0.2, seed=5)
        first = [o.mq(x) for x in range(64)]
        assert first == [o.mq(x) for x in range(64)]

    def test_large_n_uses_hash(self):
        o = Oracle(Leaf(0), n=40, noise=0.25, seed=2)
        X = np.random.default_rng(0).integers(0, 2, size=(4000, 40), dtype=np.uint8)
        labels = o.mq_batch(X)
        assert np.array_equal(labels, o.mq_batch(X))
        assert abs(labels.mean() - 0.25) < 0.03

    def test_no_noise(self, and2):
        assert Oracle(and2).exact_table() is and2


class TestExamples:

    def test_uniform_frequencies(self):
        o = Oracle(TruthTable.constant(4, 0), seed=9)
        X, _ = o.ex_batch(100_000)
        index = X.astype(np.int64) @ (1 << np.arange(4))
        frequencies = np.bincount(index, minlength=16) / 100_000
        assert np.all(np.abs(frequencies - 1 / 16) <= 0.01)

    def test_labels_agree_with_queries(self, rng):
        o = Oracle(TruthTable(6, rng.integers(0, 2, 64)), noise=0.1, seed=4)
        for _ in range(50):
            x, label = o.ex()
            assert o.mq(x) == label

    def test_counter_increments(self, and2):
        o = Oracle(and2)
        for i in range(1, 4):
            o.ex()
            assert o.counts() == (0, i)


class TestConditionedExamples:

    def test_empty_restriction(self, and2):
        o = Oracle(and2, mode="ex")
        x, label = o.ex_conditioned(Restriction())
        assert label == and2[x]
        assert o.counts() == (0, 1)

    def test_postcondition(self, rng):
        o = Oracle(TruthTable(5, rng.integers(0, 2, 32)), mode="ex", seed=1)
        for _ in range(30):
            x, _ = o.ex_conditioned(Restriction.of({0: 1}))
            assert x & 1

    def test_batch_postcondition(self, rng):
        f = TruthTable(8, rng.integers(0, 2, 256))
        o = Oracle(f, mode="ex", seed=1)
        restriction = Restriction.parse("x2=0,x5=1")
        X, labels = o.ex_conditioned_batch(restriction, 500)
        assert X.shape == (500, 8)
        assert np.all(restriction.matches(X))
        index = X.astype(np.int64) @ (1 << np.arange(8))
        assert np.array_equal(labels, f.bits[index])

    def test_deep_restriction_never_exhausts(self):
        o = Oracle(Leaf(1), n=10, mode="ex", seed=8)
        restriction = Restriction.parse("x0=1,x2=0,x4=1,x6=0,x8=1")
        assert default_attempts(restriction) == 64 * 32
        X, _ = o.ex_conditioned_batch(restriction, 10_000)
        assert len(X) == 10_000

    def test_exhausted(self):
        o = Oracle(Leaf(1), n=12, mode="ex", seed=8)
        restriction = Restriction.of({v: 1 for v in range(12)})
        with pytest.raises(SamplingExhaustedError):
            o.ex_conditioned(restriction, max_attempts=5)
        assert o.counts() == (0, 5)

    def test_batch_exhausted_counts_attempts(self):
        o = Oracle(Leaf(1), n=20, mode="ex", seed=8)
        restriction = Restriction.of({v: 1 for v in range(20)})
        with pytest.raises(SamplingExhaustedError):
            o.ex_conditioned_batch(restriction, 3, max_attempts=100)
        assert o.counts() == (0, 100)


class TestAccounting:

    def test_fresh(self, and2):
        assert Oracle(and2).counts() == (0, 0)

    def test_mixed(self, and2):
        o = Oracle(and2)
        for x in range(3):
            o.mq(x)
        o.ex()
        o.ex()
        assert o.counts() == (3, 2)

    def test_forks_share_counters(self, and2):
        o = Oracle(and2)
        o.fork(1, 2).mq(0)
        o.fork(3).ex_batch(4)
        assert o.counts() == (1, 4)

    def test_concurrent_queries(self, and2):
        o = Oracle(and2)

        def hammer(key):
            fork = o.fork(key)
            for _ in range(200):
                fork.mq_batch(int_to_bits(3, 2)[None, :])
                fork.ex()

        threads = [threading.Thread(target=hammer, args=(k,)) for k in range(8)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert o.counts() == (1600, 1600)


class TestDeterminism:

    def test_identical_oracles(self, rng):
        f = TruthTable(7, rng.integers(0, 2, 128))
        a, b = (Oracle(f, noise=0.1, seed=21) for _ in range(2))
        Xa, la = a.ex_batch(300)
        Xb, lb = b.ex_batch(300)
        assert np.array_equal(Xa, Xb) and np.array_equal(la, lb)
        assert np.array_equal(a.exact_table().bits, b.exact_table().bits)

    def test_forks_are_keyed(self, and2):
        o = Oracle(and2, seed=4)
        assert np.array_equal(o.fork(1, 2).ex_batch(50)[0], o.fork(1, 2).ex_batch(50)[0])
        assert not np.array_equal(o.fork(1, 2).ex_batch(50)[0], o.fork(2, 1).ex_batch(50)[0])

    def test_mode_parsing(self, and2):
        assert Oracle(and2, mode="mq").mode is AccessMode.MQ
