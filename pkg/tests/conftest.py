import numpy as np
import pytest

from ncflow.moebius import build_table


@pytest.fixture(scope="session")
def table_1m():
    return build_table(10**6)


@pytest.fixture(scope="session")
def table_10k():
    return build_table(10**4)


def unit_vector(rng, dim):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def hermitian_contraction(rng, dim):
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (g + g.conj().T) / 2.0
    return h / np.linalg.norm(h, 2)


def symbol_contraction(rng, dim):
    """Random Hermitian matrix with spectrum inside [0, 1]."""
    from ncflow.linalg import haar_unitary

    v = haar_unitary(dim, rng)
    lam = rng.random(dim)
    return (v * lam) @ v.conj().T
