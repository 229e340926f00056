import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from apmp.energy import Energy, load_energy

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_path(name):
    return FIXTURES / name


def random_tree(n, seed, max_unary=10, max_pairwise=10):
    """Random tree energy with integer potentials, edges to a random earlier variable."""
    rng = np.random.default_rng(seed)
    unaries = np.zeros((n, 2))
    side = rng.integers(0, 2, size=n)
    unaries[np.arange(n), side] = 2 * rng.integers(0, max_unary // 2 + 1, size=n) + 1
    edges = [(int(rng.integers(0, v)), v) for v in range(1, n)]
    pairwise = 2 * rng.integers(0, max_pairwise // 2 + 1, size=(len(edges), 2))
    return Energy(unaries, np.array(edges, dtype=np.int64).reshape(-1, 2), pairwise)


def min_marginals(e):
    """Brute-force min-marginals, shape (n, 2)."""
    from apmp.energy import evaluate_many

    n = e.num_vars
    X = (np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    vals = evaluate_many(e, X)
    out = np.empty((n, 2))
    for i in range(n):
        out[i, 0] = vals[X[:, i] == 0].min()
        out[i, 1] = vals[X[:, i] == 1].min()
    return out


@st.composite
def energies(draw, max_vars=7, max_value=8, integer=True):
    n = draw(st.integers(1, max_vars))
    val = st.integers(0, max_value) if integer else st.floats(0, max_value, allow_nan=False)
    unaries = []
    for _ in range(n):
        v = draw(val)
        unaries.append([v, 0] if draw(st.booleans()) else [0, v])
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    pairwise = [[draw(val), draw(val)] for _ in chosen]
    return Energy(unaries, np.array(chosen, dtype=np.int64).reshape(-1, 2), np.array(pairwise).reshape(-1, 2))


@pytest.fixture
def chain():
    return load_energy(fixture_path("chain.json"))


@pytest.fixture
def fig5():
    """lambda=10, a=3, b=1: vars 0 and 3 carry (a, 0), vars 1 and 2 carry (0, b)."""
    return load_energy(fixture_path("fig5.json"))


@pytest.fixture
def three_islands():
    return load_energy(fixture_path("islands.json"))


@pytest.fixture
def fixture_doc():
    def load(name):
        return json.loads(fixture_path(name).read_text())

    return load
