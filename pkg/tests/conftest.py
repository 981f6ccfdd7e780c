import numpy as np
import pytest

from trackgnn.geom import HitGraph, LayerId
from trackgnn.synthetic import random_graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_graph() -> HitGraph:
    """Five nodes on B1, B2, E1, E1, E2 and four legal edges."""
    layers = [LayerId.B1, LayerId.B2, LayerId.E1, LayerId.E1, LayerId.E2]
    nf = np.arange(15).reshape(5, 3) - 7
    snd = [0, 0, 2, 3]
    rcv = [1, 2, 4, 4]
    ef = np.arange(16).reshape(4, 4) * 3 - 20
    return HitGraph(nf, np.array(layers), ef, snd, rcv)


@pytest.fixture
def small_graph():
    return tiny_graph()


def random_graphs(seed: int, count: int, lo: int = 10, hi: int = 1000):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield random_graph(rng, int(rng.integers(lo, hi + 1)))


