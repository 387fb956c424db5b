import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import rand_density
from hpequiv.elements import (
    ElementBackend,
    element_ode,
    extract_Z_ode,
    isometry_form_ode,
    product_of_exponentials,
    rk4_propagator,
    substeps,
)
from hpequiv.errors import ScheduleError
from hpequiv.operator_core import apply_superop, vec
from hpequiv.schedule import BUILTIN_NAMES, builtin_schedules, lindblad_superop, scaled_G


def test_trivial_element_is_identity():
    s = builtin_schedules("trivial", steps=5)
    assert np.allclose(element_ode(s), np.eye(2))
    assert np.allclose(isometry_form_ode(s), np.eye(2))
    assert np.allclose(extract_Z_ode(s), np.eye(4))


def test_amplitude_damping_closed_form():
    s = builtin_schedules("constant-AD", t_end=1.0, steps=10)
    M = element_ode(s, rk4_step=1e-3)
    assert np.abs(M - np.diag([1, np.exp(-0.5)])).max() <= 1e-8


def test_rk4_propagator_accuracy():
    A = np.array([[0.1, -1.0], [1.0, -0.3]], dtype=complex)
    assert np.abs(rk4_propagator(A, 0.01, 100) - expm(A)).max() <= 1e-9
    assert np.allclose(rk4_propagator(A, 0.01, 0), np.eye(2))


def test_step_too_large_rejected():
    s = builtin_schedules("constant-AD", t_end=1.0, steps=10)
    with pytest.raises(ScheduleError):
        element_ode(s, rk4_step=0.2)
    assert substeps(s, None) == (100, pytest.approx(1e-3))


@pytest.mark.parametrize("name", ["constant-AD", "two-lindblad", "time-ramp", "conservation-demo", "switch-on"])
def test_matches_product_of_exponentials(name):
    s = builtin_schedules(name, t_end=1.0, steps=8)
    rng = np.random.default_rng(3)
    d = s.noise_dim
    f = 0.5 * (rng.normal(size=(8, d)) + 1j * rng.normal(size=(8, d)))
    g = 0.5 * (rng.normal(size=(8, d)) + 1j * rng.normal(size=(8, d)))
    # 1e-4 substeps keep the RK4 truncation well below the target
    M = element_ode(s, f, g, rk4_step=1e-4)
    assert np.abs(M - product_of_exponentials(s, f, g)).max() <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 8), st.integers(0, 8), st.integers(0, 8))
def test_evolution_law(a, b, c):
    r, s_, t = sorted((a, b, c))
    s = builtin_schedules("time-ramp", t_end=1.0, steps=8)
    lhs = element_ode(s, s=r, t=s_) @ element_ode(s, s=s_, t=t)
    assert np.abs(lhs - element_ode(s, s=r, t=t)).max() <= 1e-12


def test_isometry_stationary_for_amplitude_damping():
    s = builtin_schedules("constant-AD", t_end=1.0, steps=10)
    assert np.abs(isometry_form_ode(s) - np.eye(2)).max() <= 1e-9


@pytest.mark.parametrize("name", ["constant-AD", "two-lindblad", "time-ramp", "switch-on"])
def test_isometry_certificate(name):
    s = builtin_schedules(name, t_end=1.0, steps=10)
    c = 0.6 + 0.5j  # |c|^2 T = 0.61 <= 1
    f = np.full((10, s.noise_dim), c / np.sqrt(s.noise_dim))
    N = isometry_form_ode(s, f, f)
    assert np.abs(N - np.exp(abs(c) ** 2) * np.eye(2)).max() <= 1e-7


def test_isometry_fails_when_unitarity_broken():
    s = scaled_G(builtin_schedules("constant-AD", t_end=1.0, steps=10), 1.1)
    f = np.full((10, 1), 0.7)
    N = isometry_form_ode(s, f, f)
    assert np.abs(N - np.exp(0.49) * np.eye(2)).max() > 1e-2


def test_z_closed_form_and_trace():
    s = builtin_schedules("constant-AD", t_end=1.0, steps=10)
    Z = extract_Z_ode(s, 2, 7)
    delta = 0.5
    rho = np.diag([0, 1]).astype(complex)
    expected = np.diag([1 - np.exp(-delta), np.exp(-delta)])
    assert np.abs(apply_superop(Z, rho) - expected).max() <= 1e-8
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = rand_density(rng, 2)
        assert abs(np.trace(apply_superop(Z, r)) - 1) <= 1e-9


def test_z_matches_dense_exponential():
    s = builtin_schedules("time-ramp", t_end=1.0, steps=4)
    exact = np.eye(4)
    for i in range(4):
        exact = exact @ expm(s.tau * lindblad_superop(s.G[i], s.L[i]))
    assert np.abs(extract_Z_ode(s) - exact).max() <= 1e-10
    rho = rand_density(np.random.default_rng(1), 2)
    assert np.allclose(extract_Z_ode(s) @ vec(rho), vec(apply_superop(exact, rho)))


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_backend_T_equals_element_with_zero_functions(name):
    s = builtin_schedules(name, t_end=1.0, steps=6)
    b = ElementBackend(s)
    assert np.abs(b.T(1, 5) - element_ode(s, s=1, t=5)).max() <= 1e-13
    assert np.allclose(b.T(3, 3), np.eye(2))


def test_backend_integral_equation_first_order():
    res = []
    for m in (10, 20, 40):
        s = builtin_schedules("time-ramp", t_end=1.0, steps=m)
        b = ElementBackend(s)
        riemann = sum(b.T(0, i) @ s.G[i] * s.tau for i in range(m))
        res.append(np.linalg.norm(b.T(0, m) - np.eye(2) - riemann, 2))
    assert 1.6 <= res[0] / res[1] <= 2.4 and 1.6 <= res[1] / res[2] <= 2.4
