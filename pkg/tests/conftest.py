"""Shared fixtures: root modules on sys.path and the frozen 7-hypothesis example."""

import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core import StatisticVector  # noqa: E402
from file_handler import FileHandler  # noqa: E402


# Layer 2 pairs (1,2) (3,4) (5,6) and passes 7 through; layer 3 joins
# {1..4} and {5,6,7}. Child indices are 1-based as in the tree document.
SEVEN_TREE = {
    "m": 7,
    "M": 2,
    "L": 3,
    "layers": [[[1, 2], [3, 4], [5, 6], [7]], [[1, 2], [3, 4]]],
}

SEVEN_STATS = [3.0, 0.2, 0.9, 0.4, 2.5, 0.7, 0.55]
SEVEN_ALPHA = 0.4
SEVEN_REJECTIONS = {1, 3, 5, 6}


@pytest.fixture
def seven_tree():
    return FileHandler.tree_from_dict(SEVEN_TREE)


@pytest.fixture
def seven_stats():
    return StatisticVector(np.array(SEVEN_STATS))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
