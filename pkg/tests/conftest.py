import numpy as np
import pytest

from lcsdyn import (
    finite_permutation_system,
    rotation_system,
    strict_rotation_system,
)


@pytest.fixture
def cycle3():
    # 0 -> 1 -> 2 -> 0 with h = [1, 2, 3]
    return finite_permutation_system([1, 2, 0], [1, 2, 3])


@pytest.fixture
def swap_pair():
    # (0 <-> 1)(2) with h = [0, 4, 1]: cycle means 2 and 1
    return finite_permutation_system([1, 0, 2], [0, 4, 1])


@pytest.fixture
def const_rotation():
    return rotation_system(0.5, 0.2, grid_resolution=256)


@pytest.fixture
def golden_cos():
    return rotation_system("golden", {"type": "trig", "cos": [[1, 1.0]]},
                           grid_resolution=128)


@pytest.fixture
def golden_strict():
    return strict_rotation_system("golden", {"type": "trig", "sin": [[1, 1.0]]},
                                  grid_resolution=512)


def random_permutation_system(rng, max_states=64, h_low=-10, h_high=10):
    m = int(rng.integers(1, max_states + 1))
    table = rng.permutation(m).tolist()
    h = [int(v) for v in rng.integers(h_low, h_high + 1, size=m)]
    return finite_permutation_system(table, h)
