import os
import sys

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from treelab.core import TruthTable  # noqa: E402


@pytest.fixture
def and2():
    return TruthTable.from_bitstring("0001")


@pytest.fixture
def or2():
    return TruthTable.from_bitstring("0111")


@pytest.fixture
def xor2():
    return TruthTable.from_bitstring("0110")


@pytest.fixture
def maj3():
    return TruthTable.from_function(3, lambda x: int(bin(x).count("1") >= 2))


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(20240611)
