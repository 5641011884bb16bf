"""Boolean functions, decision trees and restrictions.

Bit conventions used everywhere in treelab: an input x is an n-bit integer
with variable 0 as the least-significant bit, and a truth table stores f(x)
at index x.
"""
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import TABLE_MAX_N
from treelab.errors import RestrictionError, StructuralError, TreeParseError
from utils.checks import check_cap

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TruthTable:
    n: int
    bits: np.ndarray

    def __post_init__(self):
        if self.n < 0:
            raise StructuralError(f"variable count must be >= 0, got {self.n}")
        check_cap("n", self.n, TABLE_MAX_N)
        bits = np.array(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size != 1 << self.n:
            raise StructuralError(f"table for n={self.n} needs {1 << self.n} bits, got {bits.size}")
        if bits.size and bits.max() > 1:
            raise StructuralError("truth table entries must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def constant(cls, n: int, bit: int) -> "TruthTable":
        return cls(n, np.full(1 << n, bit, dtype=np.uint8))

    @classmethod
    def from_bitstring(cls, text: str) -> "TruthTable":
        """'0001' is AND2: character i is f(i)."""
        size = len(text)
        n = size.bit_length() - 1
        if size == 0 or 1 << n != size:
            raise StructuralError(f"bitstring length {size} is not a power of two")
        return cls(n, np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0"))

    @classmethod
    def from_function(cls, n: int, fn) -> "TruthTable":
        return cls(n, np.fromiter((fn(x) for x in range(1 << n)), dtype=np.uint8, count=1 << n))

    @classmethod
    def from_hex(cls, n: int, text: str) -> "TruthTable":
        check_cap("n", n, TABLE_MAX_N)
        try:
            value = int(text, 16)
        except ValueError:
            raise TreeParseError(f"invalid hex payload {text[:16]!r}")
        size = 1 << n
        if value >> size:
            raise TreeParseError(f"hex payload has more than {size} bits")
        nbytes = max(1, (size + 7) // 8)
        raw = np.frombuffer(value.to_bytes(nbytes, "little"), dtype=np.uint8)
        return cls(n, np.unpackbits(raw, bitorder="little")[:size])

    def to_hex(self) -> str:
        size = 1 << self.n
        value = int.from_bytes(np.packbits(self.bits, bitorder="little").tobytes(), "little")
        return format(value, f"0{max(1, size // 4)}x")

    def bitstring(self) -> str:
        return (self.bits + ord("0")).tobytes().decode("ascii")

    def cube(self) -> np.ndarray:
        """View of the bits as an n-dimensional 2x...x2 array; variable i is axis n-1-i."""
        return self.bits.reshape((2,) * self.n)

    @property
    def bias(self) -> float:
        return float(self.bits.mean())

    def __getitem__(self, x: int) -> int:
        return int(self.bits[x])

    def __invert__(self) -> "TruthTable":
        return TruthTable(self.n, 1 - self.bits)

    def __xor__(self, other: "TruthTable") -> "TruthTable":
        _check_same_n(self, other)
        return TruthTable(self.n, self.bits ^ other.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruthTable):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash((self.n, self.bits.tobytes()))

    def __repr__(self) -> str:
        if self.n <= 5:
            return f"TruthTable(n={self.n}, bits={self.bitstring()})"
        return f"TruthTable(n={self.n}, bias={self.bias:.4f})"


@dataclass(frozen=True)
class Leaf:
    bit: int


@dataclass(frozen=True)
class Internal:
    var: int
    child0: "DecisionTree"
    child1: "DecisionTree"


DecisionTree = Union[Leaf, Internal]


def make_split(var: int, child0: DecisionTree, child1: DecisionTree) -> DecisionTree:
    """Internal node, except that two identical leaves collapse into one."""
    if isinstance(child0, Leaf) and child0 == child1:
        return child0
    return Internal(var, child0, child1)


def eval_tree(tree: DecisionTree, x: int, n: Optional[int] = None) -> int:
    node = tree
    while isinstance(node, Internal):
        if n is not None and not 0 <= node.var < n:
            raise StructuralError(f"variable x{node.var} out of range for n={n}")
        node = node.child1 if (x >> node.var) & 1 else node.child0
    return node.bit


def eval_tree_batch(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    """Evaluate every row of an (m, n) 0/1 matrix."""
    X = np.asarray(X)
    out = np.empty(X.shape[0], dtype=np.uint8)
    width = X.shape[1]

    def descend(node: DecisionTree, rows: np.ndarray):
        if rows.size == 0:
            return
        if isinstance(node, Leaf):
            out[rows] = node.bit
            return
        if not 0 <= node.var < width:
            raise StructuralError(f"variable x{node.var} out of range for n={width}")
        ones = X[rows, node.var].astype(bool)
        descend(node.child0, rows[~ones])
        descend(node.child1, rows[ones])

    descend(tree, np.arange(X.shape[0]))
    return out


def tree_size(tree: DecisionTree) -> int:
    if isinstance(tree, Leaf):
        return 1
    return tree_size(tree.child0) + tree_size(tree.child1)


def tree_depth(tree: DecisionTree) -> int:
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(tree_depth(tree.child0), tree_depth(tree.child1))


def tree_variables(tree: DecisionTree) -> List[int]:
    found = set()
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Internal):
            found.add(node.var)
            stack.extend((node.child0, node.child1))
    return sorted(found)


def validate_tree(tree: DecisionTree, n: Optional[int] = None):
    def walk(node: DecisionTree, path: frozenset):
        if isinstance(node, Leaf):
            if node.bit not in (0, 1):
                raise StructuralError(f"leaf value must be 0 or 1, got {node.bit}")
            return
        if node.var < 0 or (n is not None and node.var >= n):
            raise StructuralError(f"variable x{node.var} out of range for n={n}")
        if node.var in path:
            raise StructuralError(f"variable x{node.var} repeats on a root-to-leaf path")
        path = path | {node.var}
        walk(node.child0, path)
        walk(node.child1, path)

    walk(tree, frozenset())


def tree_to_table(tree: DecisionTree, n: int) -> TruthTable:
    check_cap("n", n, TABLE_MAX_N)
    validate_tree(tree, n)
    bits = np.empty(1 << n, dtype=np.uint8)

    def fill(node: DecisionTree, index: np.ndarray):
        if isinstance(node, Leaf):
            bits[index] = node.bit
            return
        ones = ((index >> node.var) & 1).astype(bool)
        fill(node.child0, index[~ones])
        fill(node.child1, index[ones])

    fill(tree, np.arange(1 << n, dtype=np.int64))
    return TruthTable(n, bits)


_RESTRICTION_TOKEN = re.compile(r"^x(\d+)=([01])$")


@dataclass(frozen=True)
class Restriction:
    """Partial assignment; pairs are kept sorted by variable index."""
    pairs: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        canonical = tuple(sorted((int(v), int(b)) for v, b in self.pairs))
        seen = set()
        for var, bit in canonical:
            if var < 0:
                raise RestrictionError(f"negative variable index {var}")
            if bit not in (0, 1):
                raise RestrictionError(f"x{var} fixed to {bit}, expected 0 or 1")
            if var in seen:
                raise RestrictionError(f"variable x{var} fixed twice")
            seen.add(var)
        object.__setattr__(self, "pairs", canonical)

    @classmethod
    def of(cls, assignment: Union[Dict[int, int], Iterable[Tuple[int, int]]]) -> "Restriction":
        if isinstance(assignment, dict):
            assignment = assignment.items()
        return cls(tuple(assignment))

    @classmethod
    def parse(cls, text: str) -> "Restriction":
        """'x3=1,x7=0' -> Restriction; empty text is the empty restriction."""
        pairs = []
        for token in filter(None, (t.strip() for t in text.split(","))):
            match = _RESTRICTION_TOKEN.match(token)
            if not match:
                raise RestrictionError(f"malformed restriction token {token!r}")
            pairs.append((int(match.group(1)), int(match.group(2))))
        return cls(tuple(pairs))

    def __str__(self) -> str:
        return ",".join(f"x{v}={b}" for v, b in self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def variables(self) -> Tuple[int, ...]:
        return tuple(v for v, _ in self.pairs)

    def as_dict(self) -> Dict[int, int]:
        return dict(self.pairs)

    def extend(self, var: int, bit: int) -> "Restriction":
        return Restriction(self.pairs + ((var, bit),))

    def union(self, other: "Restriction") -> "Restriction":
        return Restriction(self.pairs + other.pairs)

    def check(self, n: int):
        if self.pairs and self.pairs[-1][0] >= n:
            raise RestrictionError(f"variable x{self.pairs[-1][0]} out of range for n={n}")

    def free_variables(self, n: int) -> List[int]:
        """Original indices of the unfixed variables; position j is free variable j."""
        fixed = set(self.variables)
        return [v for v in range(n) if v not in fixed]

    def consistent(self, x: int) -> bool:
        return all((x >> v) & 1 == b for v, b in self.pairs)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Overwrite the fixed columns of an (m, n) matrix in place."""
        for var, bit in self.pairs:
            X[:, var] = bit
        return X

    def matches(self, X: np.ndarray) -> np.ndarray:
        hit = np.ones(X.shape[0], dtype=bool)
        for var, bit in self.pairs:
            hit &= X[:, var] == bit
        return hit

    def key(self) -> Tuple[int, ...]:
        """Non-negative integer encoding; usable as a SeedSequence spawn key."""
        return (len(self.pairs),) + tuple(2 * v + b for v, b in self.pairs)


def restrict(f: TruthTable, restriction: Restriction) -> TruthTable:
    if not restriction.pairs:
        return f
    return TruthTable(f.n - len(restriction), restrict_bits(f, restriction))


def restrict_bits(f: TruthTable, restriction: Restriction) -> np.ndarray:
    """Bits of the restricted function, in free-variable order, without a TruthTable around them."""
    restriction.check(f.n)
    return restrict_cube(f.cube(), f.n, restriction).reshape(-1)


def restrict_cube(cube: np.ndarray, n: int, restriction: Restriction) -> np.ndarray:
    """Index an n-axis cube by a restriction; remaining axes keep their order."""
    fixed = restriction.as_dict()
    index = tuple(fixed.get(n - 1 - axis, slice(None)) for axis in range(n))
    return cube[index]


def _check_same_n(f: TruthTable, g: TruthTable):
    if f.n != g.n:
        raise StructuralError(f"tables have different variable counts ({f.n} vs {g.n})")


def distance(f: TruthTable, g: TruthTable) -> float:
    _check_same_n(f, g)
    return float(np.count_nonzero(f.bits != g.bits)) / (1 << f.n)


def split_pairs(bits: np.ndarray, var: int) -> Tuple[np.ndarray, np.ndarray]:
    """Entries with x_var = 0 and with x_var = 1, aligned pairwise."""
    pairs = bits.reshape(-1, 2, 1 << var)
    return pairs[:, 0, :], pairs[:, 1, :]


def is_monotone(f: TruthTable) -> bool:
    for var in range(f.n):
        low, high = split_pairs(f.bits, var)
        if np.any(low > high):
            return False
    return True


def relevant_variables(f: TruthTable) -> List[int]:
    relevant = []
    for var in range(f.n):
        low, high = split_pairs(f.bits, var)
        if np.any(low != high):
            relevant.append(var)
    return relevant


def serialize_tree(tree: DecisionTree) -> str:
    if isinstance(tree, Leaf):
        return str(tree.bit)
    return f"(x{tree.var} {serialize_tree(tree.child0)} {serialize_tree(tree.child1)})"


_TREE_TOKEN = re.compile(r"\s+|\(|\)|x\d+|[01]")


def _tokenize(text: str) -> List[Tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TREE_TOKEN.match(text, pos)
        if not match:
            raise TreeParseError(f"unexpected character {text[pos]!r}", pos)
        if not match.group().isspace():
            tokens.append((match.group(), pos))
        pos = match.end()
    return tokens


def parse_tree(text: str) -> DecisionTree:
    tokens = _tokenize(text)
    if not tokens:
        raise TreeParseError("empty tree text", 0)

    def node_at(i: int) -> Tuple[DecisionTree, int]:
        if i >= len(tokens):
            raise TreeParseError("unexpected end of input", len(text))
        token, pos = tokens[i]
        if token in ("0", "1"):
            return Leaf(int(token)), i + 1
        if token != "(":
            raise TreeParseError(f"expected '(' or a leaf bit, got {token!r}", pos)
        if i + 1 >= len(tokens) or not tokens[i + 1][0].startswith("x"):
            where = tokens[i + 1][1] if i + 1 < len(tokens) else len(text)
            raise TreeParseError("expected a variable after '('", where)
        var = int(tokens[i + 1][0][1:])
        child0, i = node_at(i + 2)
        child1, i = node_at(i)
        if i >= len(tokens) or tokens[i][0] != ")":
            where = tokens[i][1] if i < len(tokens) else len(text)
            raise TreeParseError("expected ')'", where)
        return Internal(var, child0, child1), i + 1

    tree, end = node_at(0)
    if end != len(tokens):
        raise TreeParseError("trailing input after tree", tokens[end][1])
    validate_tree(tree)
    return tree


# Target files
Target = Union[TruthTable, DecisionTree]


def write_table(path: Union[str, Path], f: TruthTable):
    Path(path).write_text(f"n={f.n}\nhex={f.to_hex()}\n", encoding="utf-8")


def write_tree(path: Union[str, Path], tree: DecisionTree, n: int):
    Path(path).write_text(f"n={n}\n{serialize_tree(tree)}\n", encoding="utf-8")


def parse_target(text: str) -> Tuple[Target, int]:
    n = None
    payload = None
    tree_lines = []
    for line in (raw.strip() for raw in text.splitlines()):
        if not line:
            continue
        if line.startswith("n="):
            try:
                n = int(line[2:])
            except ValueError:
                raise TreeParseError(f"invalid variable count line {line!r}")
        elif line.startswith("hex="):
            payload = line[4:]
        else:
            tree_lines.append(line)

    if payload is not None:
        if n is None:
            raise TreeParseError("truth-table file is missing its 'n=' line")
        return TruthTable.from_hex(n, payload), n

    tree = parse_tree(" ".join(tree_lines))
    if n is None:
        n = max(tree_variables(tree), default=0) + 1
    validate_tree(tree, n)
    return tree, n


def load_target(path: Union[str, Path]) -> Tuple[Target, int]:
    target, n = parse_target(Path(path).read_text(encoding="utf-8"))
    logger.debug(f"Loaded {type(target).__name__} target on n={n} from {path}")
    return target, n


def write_target(path: Union[str, Path], target: Target, n: int):
    if isinstance(target, TruthTable):
        write_table(path, target)
    else:
        write_tree(path, target, n)


def int_to_bits(x: int, n: int) -> np.ndarray:
    return np.fromiter(((x >> i) & 1 for i in range(n)), dtype=np.uint8, count=n)


def bits_to_int(row: Sequence[int]) -> int:
    packed = np.packbits(np.asarray(row, dtype=np.uint8), bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")
