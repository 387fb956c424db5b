import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rand_density, rand_mat
from hpequiv.errors import ScheduleError
from hpequiv.schedule import (
    BUILTIN_NAMES,
    CoefficientSchedule,
    TimeGrid,
    builtin_schedules,
    dump_schedule,
    from_constant,
    lindblad_apply,
    load_schedule,
    scaled_G,
    validate_unitarity,
)

E12 = np.array([[0, 1], [0, 0]], dtype=complex)


def test_grid():
    g = TimeGrid(1.0, 4)
    assert g.tau == 0.25
    assert g.index(0.5) == 2
    assert g.cell(0.6) == 2
    with pytest.raises(ScheduleError):
        g.index(0.3)
    with pytest.raises(ScheduleError):
        TimeGrid(0.0, 3)


def test_validate_empty():
    grid = TimeGrid(1.0, 2)
    s = CoefficientSchedule(grid, np.zeros((2, 2, 2)), np.zeros((2, 0, 2, 2)))
    assert validate_unitarity(s) == {"max_residual": 0.0, "hermitian_defect": 0.0}


def test_amplitude_damping_unitary():
    s = builtin_schedules("constant-AD")
    assert np.allclose(s.G[0], np.diag([0, -0.5]))
    assert np.allclose(s.L[0, 0], E12)
    rep = validate_unitarity(s)
    assert rep["max_residual"] == 0.0
    assert np.allclose(s.H_at(0), 0)


def test_hamiltonian_added_keeps_residual_zero():
    s = from_constant([E12], H=np.diag([-1.0, -2.0]))
    assert np.allclose(s.G[0], np.diag([0, -0.5]) + 1j * np.diag([1, 2]))
    assert validate_unitarity(s)["max_residual"] <= 1e-15


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_unitary(name):
    rep = validate_unitarity(builtin_schedules(name, steps=6))
    assert rep["max_residual"] <= 1e-12
    assert rep["hermitian_defect"] <= 1e-12


def test_two_lindblad_assembly():
    s = builtin_schedules("two-lindblad")
    L2 = np.diag([1, -1]) / np.sqrt(2)
    assert np.allclose(s.L[0, 1], L2)
    K = E12.conj().T @ E12 + L2 @ L2
    assert np.allclose(s.G[0], -0.5 * K)


def test_time_ramp_starts_as_damping():
    a, b = builtin_schedules("time-ramp"), builtin_schedules("constant-AD")
    assert np.allclose(a.G[0], b.G[0]) and np.allclose(a.L[0], b.L[0])
    assert np.linalg.norm(a.L[-1, 0]) > np.linalg.norm(a.L[0, 0])


def test_conservation_demo_not_gaussian():
    s = builtin_schedules("conservation-demo")
    assert s.S is not None and not s.gaussian
    assert builtin_schedules("constant-AD").gaussian


def test_unknown_builtin():
    with pytest.raises(ScheduleError):
        builtin_schedules("nope")


def test_lindblad_examples():
    s = builtin_schedules("constant-AD")
    out = lindblad_apply(s, 0, np.diag([0, 1]).astype(complex))
    assert np.allclose(out, np.diag([1, -1]))
    triv = builtin_schedules("trivial")
    assert np.allclose(lindblad_apply(triv, 0, rand_density(np.random.default_rng(0), 2)), 0)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["constant-AD", "two-lindblad", "time-ramp", "switch-on"]), st.integers(0, 2**32 - 1))
def test_lindblad_trace_zero_and_hermiticity(name, seed):
    rng = np.random.default_rng(seed)
    s = builtin_schedules(name, steps=4)
    rho = rand_mat(rng, 2)
    out = lindblad_apply(s, 3, rho)
    assert abs(np.trace(out)) <= 1e-12 * max(1, np.abs(rho).max())
    assert np.allclose(lindblad_apply(s, 3, rho.conj().T), out.conj().T, atol=1e-13)


def test_lindblad_dimension_check():
    with pytest.raises(Exception):
        lindblad_apply(builtin_schedules("constant-AD"), 0, np.eye(3))


def test_left_endpoint_lookup():
    s = builtin_schedules("time-ramp", t_end=1.0, steps=4)
    G, L = s.at_time(0.3)
    assert np.allclose(G, s.G[1]) and np.allclose(L, s.L[1])


def test_scaled_G_breaks_unitarity():
    s = scaled_G(builtin_schedules("constant-AD"), 1.1)
    assert validate_unitarity(s)["max_residual"] == pytest.approx(0.1)
    assert not s.unitary


def test_file_round_trip(tmp_path):
    s = builtin_schedules("conservation-demo", steps=3)
    dump_schedule(s, tmp_path / "s.json")
    r = load_schedule(tmp_path / "s.json")
    assert np.allclose(r.G, s.G) and np.allclose(r.L, s.L) and np.allclose(r.S, s.S)
    assert r.unitary


def test_file_broadcasts_single_entry(tmp_path):
    import json

    from hpequiv.operator_core import matrix_to_dict

    rec = {"dim_h": 2, "noise_dim": 1, "t_end": 1.0, "steps": 5,
           "G": [matrix_to_dict(np.diag([0, -0.5]))], "L": [[matrix_to_dict(E12)]]}
    (tmp_path / "s.json").write_text(json.dumps(rec))
    s = load_schedule(tmp_path / "s.json")
    assert s.G.shape == (5, 2, 2) and s.unitary
