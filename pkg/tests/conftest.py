import numpy as np
import pytest
from hypothesis import settings, strategies as st

from mmdflow.measure import Measure1D

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

coords = st.floats(-5, 5, allow_nan=False, allow_infinity=False).map(lambda v: round(v, 6))


@st.composite
def mixed_measures(draw, max_atoms=4, max_uniforms=3):
    """Random atom + uniform-piece mixtures with total mass exactly 1."""
    n_a = draw(st.integers(0, max_atoms))
    n_u = draw(st.integers(0 if n_a else 1, max_uniforms))
    xs = [draw(coords) for _ in range(n_a)]
    ivs = []
    for _ in range(n_u):
        a = draw(coords)
        ivs.append((a, a + draw(st.floats(0.01, 3.0))))
    w = np.array([draw(st.floats(0.05, 1.0)) for _ in range(n_a + n_u)])
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    atoms = tuple((x, float(m)) for x, m in zip(xs, w[:n_a]))
    unis = tuple((a, b, float(m)) for (a, b), m in zip(ivs, w[n_a:]))
    return Measure1D(atoms=atoms, uniforms=unis)


@st.composite
def monotone_grids(draw, n=None, lo=-3.0, hi=3.0):
    size = n if n is not None else draw(st.integers(2, 40))
    vals = draw(st.lists(st.floats(lo, hi), min_size=size, max_size=size))
    return np.sort(np.array(vals))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_mixed(rng, max_atoms=4, max_uniforms=3):
    """numpy counterpart of ``mixed_measures`` for bulk loops."""
    n_a = int(rng.integers(0, max_atoms + 1))
    n_u = int(rng.integers(0 if n_a else 1, max_uniforms + 1))
    w = rng.uniform(0.05, 1.0, n_a + n_u)
    w /= w.sum()
    xs = rng.uniform(-5, 5, n_a)
    a = rng.uniform(-5, 5, n_u)
    b = a + rng.uniform(0.01, 3, n_u)
    return Measure1D(tuple(zip(xs, w[:n_a])), tuple(zip(a, b, w[n_a:])))
