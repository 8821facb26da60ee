import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lagbound import MkpInstance, generate_mkp, generate_ssp


@pytest.fixture
def tiny_mkp() -> MkpInstance:
    """Two items, two dimensions; optimum is 4 (item 1 alone)."""
    return MkpInstance(
        n=2, d=2,
        profits=[3, 4],
        weights=[[2, 3], [3, 3]],
        capacities=[5, 3],
    )


def random_small_mkp(seed: int, max_n: int = 12, min_d: int = 2, max_d: int = 4) -> MkpInstance:
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(rng.integers(2, max_n + 1))
    d = int(rng.integers(min_d, max_d + 1))
    tightness = float(rng.uniform(0.3, 0.8))
    return generate_mkp(n, d, tightness, seed=int(rng.integers(0, 2**31)))


def random_small_ssp(seed: int, max_periods: int = 6, max_acts: int = 3, max_states: int = 4):
    rng = np.random.Generator(np.random.PCG64(seed))
    periods = int(rng.integers(2, max_periods + 1))
    acts = int(rng.integers(2, max_acts + 1))
    states = int(rng.integers(2, max_states + 1))
    return generate_ssp(periods, acts, states, constraint_count=2,
                        seed=int(rng.integers(0, 2**31)))
