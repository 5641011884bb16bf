import copy
import hashlib
import logging
import math
import threading
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from config import CONDITIONED_ATTEMPT_FACTOR, TABLE_MAX_N, TREE_LOOKUP_MAX_N
from treelab.core import (
    DecisionTree,
    Restriction,
    TruthTable,
    bits_to_int,
    eval_tree_batch,
    int_to_bits,
    tree_to_table,
    validate_tree,
    tree_variables,
)
from treelab.errors import AccessViolationError, CapExceededError, SamplingExhaustedError, StructuralError
from utils.checks import check_noise_rate, check_positive

logger = logging.getLogger(__name__)

# SeedSequence spawn-key heads; forks are keyed below FORK_STREAM
EX_STREAM = 0
NOISE_STREAM = 1
FORK_STREAM = 2

_MAX_CHUNK = 1 << 18


class AccessMode(str, Enum):
    MQ = "mq"
    EX = "ex"


class QueryCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self.mq = 0
        self.ex = 0

    def add_mq(self, count: int):
        with self._lock:
            self.mq += int(count)

    def add_ex(self, count: int):
        with self._lock:
            self.ex += int(count)

    def snapshot(self) -> Tuple[int, int]:
        with self._lock:
            return self.mq, self.ex


class Corruption:
    """Fixed set of flipped inputs.

    n <= 24: exactly round(noise * 2^n) inputs chosen by a seeded generator.
    Larger n: x is flipped when a seeded blake2b hash of x falls below noise,
    so the corrupted fraction is noise only in expectation.
    """

    def __init__(self, n: int, noise: float, seed: int):
        self.n = n
        self.noise = noise
        self.seed = seed
        self.flipped: Optional[np.ndarray] = None
        self._mask: Optional[np.ndarray] = None
        self._hash_key = int(seed).to_bytes(16, "little", signed=True)

        if noise > 0 and n <= TABLE_MAX_N:
            budget = int(math.floor(noise * (1 << n) + 0.5))
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(NOISE_STREAM,)))
            self.flipped = np.sort(rng.choice(1 << n, size=budget, replace=False)).astype(np.int64)

    @property
    def mask(self) -> np.ndarray:
        if self._mask is None:
            mask = np.zeros(1 << self.n, dtype=bool)
            mask[self.flipped] = True
            self._mask = mask
        return self._mask

    def flips(self, X: np.ndarray, index: Optional[np.ndarray] = None) -> np.ndarray:
        if self.noise == 0:
            return np.zeros(X.shape[0], dtype=bool)
        if self.flipped is not None:
            return self.mask[index]
        packed = np.packbits(X, axis=1, bitorder="little")
        threshold = self.noise * 2.0 ** 64
        return np.fromiter(
            (
                int.from_bytes(hashlib.blake2b(row.tobytes(), digest_size=8, key=self._hash_key).digest(), "little")
                < threshold
                for row in packed
            ),
            dtype=bool,
            count=X.shape[0],
        )


class Oracle:
    """Query access to a target, with MQ/EX accounting.

    Forks share the target, the corruption and the counters but draw from
    their own SeedSequence substream, so a learner can key randomness by
    subproblem and stay independent of evaluation order.
    """

    def __init__(
        self,
        target: Union[TruthTable, DecisionTree],
        n: Optional[int] = None,
        mode: Union[AccessMode, str] = AccessMode.MQ,
        noise: float = 0.0,
        seed: int = 0,
    ):
        if isinstance(target, TruthTable):
            if n is not None and n != target.n:
                raise StructuralError(f"table has n={target.n}, oracle asked for n={n}")
            n = target.n
        else:
            if n is None:
                n = max(tree_variables(target), default=0) + 1
            validate_tree(target, n)
        check_positive("n", n)
        check_positive("seed", seed, minimum=0)
        check_noise_rate(noise)

        self.target = target
        self.n = n
        self.mode = AccessMode(mode)
        self.noise = noise
        self.seed = seed

        self._counter = QueryCounter()
        self._corruption = Corruption(n, noise, seed)
        self._cache = {}
        self._cache_lock = threading.Lock()
        self._weights = (np.int64(1) << np.arange(n, dtype=np.int64)) if n <= TABLE_MAX_N else None
        self._rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(EX_STREAM,)))
        self._rng_lock = threading.Lock()

    def fork(self, *key: int) -> "Oracle":
        child = copy.copy(self)
        child._rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(FORK_STREAM,) + tuple(key)))
        child._rng_lock = threading.Lock()
        return child

    def __repr__(self) -> str:
        kind = "table" if isinstance(self.target, TruthTable) else "tree"
        return f"Oracle({kind}, n={self.n}, mode={self.mode.value}, noise={self.noise}, seed={self.seed})"

    # Labels
    def _index(self, X: np.ndarray) -> Optional[np.ndarray]:
        if self._weights is None:
            return None
        return X.astype(np.int64) @ self._weights

    def _check_inputs(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.uint8)
        if X.ndim != 2 or X.shape[1] != self.n:
            raise StructuralError(f"expected an (m, {self.n}) input matrix, got shape {X.shape}")
        return X

    def _lookup(self) -> Optional[np.ndarray]:
        """Corrupted target bits, when labels can be read off a cached table."""
        if isinstance(self.target, TruthTable) or self.n <= TREE_LOOKUP_MAX_N:
            return self.exact_table().bits
        return None

    def labels(self, X: np.ndarray) -> np.ndarray:
        """Corrupted target on every row of X. Not counted; reserved for error measurement."""
        X = self._check_inputs(X)
        index = self._index(X)
        lookup = self._lookup()
        if lookup is not None:
            return lookup[index]
        clean = eval_tree_batch(self.target, X)
        return clean ^ self._corruption.flips(X, index).astype(np.uint8)

    def _draw(self, m: int) -> np.ndarray:
        with self._rng_lock:
            return self._rng.integers(0, 2, size=(m, self.n), dtype=np.uint8)

    # Membership queries
    def _require_mq(self):
        if self.mode is not AccessMode.MQ:
            raise AccessViolationError("membership query issued against an examples-only oracle")

    def mq(self, x: int) -> int:
        self._require_mq()
        label = self.labels(int_to_bits(x, self.n)[None, :])[0]
        self._counter.add_mq(1)
        return int(label)

    def mq_batch(self, X: np.ndarray) -> np.ndarray:
        self._require_mq()
        labels = self.labels(X)
        self._counter.add_mq(labels.size)
        return labels

    def mq_neighbours(self, X: np.ndarray, variables: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Labels of X, and of X with each listed variable flipped in turn.

        Returns shapes (m,) and (len(variables), m); counted as (1 + len(variables)) * m queries.
        """
        self._require_mq()
        X = self._check_inputs(X)
        variables = [int(v) for v in variables]
        lookup = self._lookup()
        if lookup is not None:
            index = self._index(X)
            base = lookup[index]
            masks = np.int64(1) << np.asarray(variables, dtype=np.int64)
            flipped = lookup[index[None, :] ^ masks[:, None]]
        else:
            base = self.labels(X)
            flipped = np.empty((len(variables), X.shape[0]), dtype=np.uint8)
            work = X.copy()
            for row, var in enumerate(variables):
                work[:, var] ^= 1
                flipped[row] = self.labels(work)
                work[:, var] ^= 1
        self._counter.add_mq(base.size + flipped.size)
        return base, flipped

    def sample_points(self, restriction: Restriction, m: int) -> np.ndarray:
        """Uniform points of the restriction's subcube, for the learner to query."""
        restriction.check(self.n)
        return restriction.apply(self._draw(m))

    # Random examples
    def ex(self) -> Tuple[int, int]:
        X = self._draw(1)
        label = self.labels(X)[0]
        self._counter.add_ex(1)
        return bits_to_int(X[0]), int(label)

    def ex_batch(self, m: int) -> Tuple[np.ndarray, np.ndarray]:
        X = self._draw(m)
        labels = self.labels(X)
        self._counter.add_ex(m)
        return X, labels

    def ex_conditioned(self, restriction: Restriction, max_attempts: Optional[int] = None) -> Tuple[int, int]:
        restriction.check(self.n)
        if max_attempts is None:
            max_attempts = default_attempts(restriction)
        for _ in range(max_attempts):
            x, label = self.ex()
            if restriction.consistent(x):
                return x, label
        raise SamplingExhaustedError(f"no example consistent with {{{restriction}}} in {max_attempts} draws")

    def ex_conditioned_batch(
        self,
        restriction: Restriction,
        m: int,
        max_attempts: Optional[int] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """m conditioned examples from one example stream.

        Sample j fails when more than max_attempts draws separate it from the
        previous hit. Only draws up to the last accepted hit are counted.
        """
        restriction.check(self.n)
        if max_attempts is None:
            max_attempts = default_attempts(restriction)
        expected = 1 << len(restriction)
        hits = []
        need = m
        gap = 0
        while need > 0:
            chunk = min(max(2 * need * expected, 256), _MAX_CHUNK)
            X = self._draw(chunk)
            positions = np.flatnonzero(restriction.matches(X))

            if positions.size == 0:
                if gap + chunk >= max_attempts:
                    self._counter.add_ex(max_attempts - gap)
                    raise SamplingExhaustedError(f"no example consistent with {{{restriction}}} in {max_attempts} draws")
                gap += chunk
                self._counter.add_ex(chunk)
                continue

            spacing = np.diff(np.concatenate(([-1], positions)))
            spacing[0] += gap
            too_far = np.flatnonzero(spacing > max_attempts)
            if too_far.size and too_far[0] < need:
                j = too_far[0]
                self._counter.add_ex(positions[j - 1] + 1 + max_attempts if j > 0 else max_attempts - gap)
                raise SamplingExhaustedError(f"no example consistent with {{{restriction}}} in {max_attempts} draws")

            taken = positions[:need]
            hits.append(X[taken])
            need -= taken.size
            if need == 0:
                self._counter.add_ex(taken[-1] + 1)
            else:
                self._counter.add_ex(chunk)
                gap = chunk - 1 - positions[-1]

        X = np.concatenate(hits)
        return X, self.labels(X)

    # Exact access
    def clean_table(self) -> TruthTable:
        if self.n > TABLE_MAX_N:
            raise CapExceededError(f"n={self.n} exceeds the table cap of {TABLE_MAX_N}")
        with self._cache_lock:
            if "clean" not in self._cache:
                if isinstance(self.target, TruthTable):
                    self._cache["clean"] = self.target
                else:
                    self._cache["clean"] = tree_to_table(self.target, self.n)
            return self._cache["clean"]

    def exact_table(self) -> TruthTable:
        """The corrupted target as a table. Issues no queries."""
        clean = self.clean_table()
        if self._corruption.flipped is None or self._corruption.flipped.size == 0:
            return clean
        with self._cache_lock:
            if "corrupted" not in self._cache:
                self._cache["corrupted"] = TruthTable(self.n, clean.bits ^ self._corruption.mask.astype(np.uint8))
            return self._cache["corrupted"]

    def corrupted_points(self) -> np.ndarray:
        if self.n > TABLE_MAX_N:
            raise CapExceededError(f"n={self.n} exceeds the table cap of {TABLE_MAX_N}")
        if self._corruption.flipped is None:
            return np.zeros(0, dtype=np.int64)
        return self._corruption.flipped

    def counts(self) -> Tuple[int, int]:
        return self._counter.snapshot()


def default_attempts(restriction: Restriction) -> int:
    return CONDITIONED_ATTEMPT_FACTOR * (1 << len(restriction))
