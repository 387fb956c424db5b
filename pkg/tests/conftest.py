import numpy as np
import pytest
from scipy.stats import unitary_group


def rand_vec(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def rand_mat(rng, n, m=None):
    m = n if m is None else m
    return rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))


def rand_unitary(rng, n):
    return unitary_group.rvs(n, random_state=rng)


def rand_density(rng, n):
    a = rand_mat(rng, n)
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
