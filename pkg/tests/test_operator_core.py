import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rand_mat, rand_unitary, rand_vec
from hpequiv.errors import DimensionError, KernelError
from hpequiv.operator_core import (
    ProductOperator,
    apply_superop,
    compress,
    compress_product_identity,
    dagger,
    epsilon_product,
    exchange_ampliate,
    exchange_permutation,
    ket_bra,
    load_matrix,
    dump_matrix,
    partial_trace_second,
    psd_rank_factorize,
    superop_sandwich,
    tensor,
    vec,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)


def test_tensor_examples():
    assert np.allclose(tensor(np.eye(2), np.eye(3)), np.eye(6))
    assert np.allclose(tensor(np.diag([1, 0]), np.eye(2)), np.diag([1, 1, 0, 0]))
    out = tensor(SX, SX) @ np.array([1, 0, 0, 0])
    assert np.allclose(out, [0, 0, 0, 1])


def test_tensor_shape_rectangular(rng):
    a, b = rand_mat(rng, 2, 3), rand_mat(rng, 4, 1)
    assert tensor(a, b).shape == (8, 3)


def test_compress_identity(rng):
    u, v = rand_vec(rng, 2), rand_vec(rng, 2)
    out = compress(np.eye(6), u, v, dim_h=2)
    assert np.allclose(out, np.vdot(u, v) * np.eye(3))


def test_compress_rank_one_factor(rng):
    a, b, u, v = (rand_vec(rng, 3) for _ in range(4))
    X = rand_mat(rng, 2)
    A = ProductOperator((3, 2), np.kron(ket_bra(a, b), X))
    assert np.allclose(compress(A, u, v), np.vdot(u, a) * np.vdot(b, v) * X)


def test_compress_sesquilinear(rng):
    A = rand_mat(rng, 6)
    u1, u2, v = (rand_vec(rng, 2) for _ in range(3))
    c = 0.3 - 1.2j
    lhs = compress(A, u1 + c * u2, v, dim_h=2)
    rhs = compress(A, u1, v, dim_h=2) + np.conj(c) * compress(A, u2, v, dim_h=2)
    assert np.allclose(lhs, rhs)


def test_compress_dimension_mismatch():
    with pytest.raises(DimensionError):
        compress(np.eye(6), np.ones(3), np.ones(2), dim_h=2)
    with pytest.raises(DimensionError):
        compress(np.eye(6), np.ones(2), np.ones(2), dim_h=4)


def test_compress_product_identity_requires_orthonormal():
    with pytest.raises(DimensionError):
        compress_product_identity(np.eye(4), np.eye(4), np.ones(2), np.ones(2), [[1, 0], [1, 1]], dim_h=2)


def test_compress_product_identity_trivial(rng):
    u, v = rand_vec(rng, 2), rand_vec(rng, 2)
    out = compress_product_identity(np.eye(4), np.eye(4), u, v, np.eye(2), dim_h=2)
    assert np.allclose(out, np.vdot(u, v) * np.eye(2))


def test_compress_contraction_ordering(rng):
    # A(u,v)^* A(u,v) <= ||u||^2 (A^* A)(v,v)
    A = rand_unitary(rng, 4)
    u, v = rand_vec(rng, 2), rand_vec(rng, 2)
    X = compress(A, u, v, dim_h=2)
    gap = np.vdot(u, u).real * compress(dagger(A) @ A, v, v, dim_h=2) - dagger(X) @ X
    assert np.linalg.eigvalsh((gap + dagger(gap)) / 2).min() >= -1e-12


def test_partial_trace_examples():
    rho = np.array([[0.7, 0.2j], [-0.2j, 0.3]])
    sigma = np.array([[0.4, 0.1], [0.1, 0.6]])
    assert np.allclose(partial_trace_second(ProductOperator((2, 2), np.kron(rho, sigma))), rho)
    assert np.allclose(partial_trace_second(ProductOperator((2, 2), np.eye(4))), 2 * np.eye(2))
    bell = np.array([1, 0, 0, 1]) / np.sqrt(2)
    assert np.allclose(partial_trace_second(ProductOperator((2, 2), np.outer(bell, bell))), np.eye(2) / 2)


def test_partial_trace_factor_count():
    with pytest.raises(DimensionError):
        partial_trace_second(ProductOperator((2, 2, 2), np.eye(8)))
    with pytest.raises(DimensionError):
        partial_trace_second(np.eye(4))


@pytest.mark.parametrize("n,k", [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3)])
def test_exchange_permutation_is_unitary(n, k):
    P = exchange_permutation(k, n, 2, 3)
    assert np.array_equal(dagger(P) @ P, np.eye(P.shape[0]))


def test_exchange_out_of_range():
    with pytest.raises(DimensionError):
        exchange_permutation(0, 2, 2, 2)
    with pytest.raises(DimensionError):
        exchange_ampliate(np.eye(4), 3, 2, dim_h=2)


def test_exchange_n1_is_identity_map(rng):
    A = rand_mat(rng, 4)
    assert np.allclose(exchange_ampliate(A, 1, 1, dim_h=2).matrix, A)


def test_exchange_places_u_k_next_to_H():
    # P_{1,2}(e0 (x) e1 (x) x) = e1 (x) e0 (x) x
    P = exchange_permutation(1, 2, 2, 1)
    src = np.kron(np.kron([1, 0], [0, 1]), [1])
    assert np.allclose(P @ src, np.kron([0, 1], [1, 0]))


def test_epsilon_product_partial_word(rng):
    # first m letters act, the remaining copies contribute <u_i, v_i>
    A = rand_unitary(rng, 4)
    us = [rand_vec(rng, 2) for _ in range(3)]
    vs = [rand_vec(rng, 2) for _ in range(3)]
    op = exchange_ampliate(A, 1, 3, dim_h=2)
    lhs = compress(op, np.kron(np.kron(us[0], us[1]), us[2]), np.kron(np.kron(vs[0], vs[1]), vs[2]))
    rhs = compress(A, us[0], vs[0], dim_h=2) * np.vdot(us[1], vs[1]) * np.vdot(us[2], vs[2])
    assert np.allclose(lhs, rhs)


def test_psd_zero_and_ones():
    d, E, _ = psd_rank_factorize(np.zeros((3, 3)))
    assert d == 0 and E.shape == (0, 3)
    d, E, _ = psd_rank_factorize(np.ones((3, 3)))
    assert d == 1
    assert np.allclose(E[:, 0], E[:, 1]) and np.allclose(E[:, 0], E[:, 2])


def test_psd_errors():
    with pytest.raises(KernelError):
        psd_rank_factorize(np.array([[1, 1j], [1, 1]]))
    with pytest.raises(KernelError):
        psd_rank_factorize(np.diag([1.0, -0.5]))


def test_psd_amplitude_damping_kernel():
    L = np.array([[0, 1], [0, 0]], dtype=complex)
    g = L.reshape(-1)
    d, E, _ = psd_rank_factorize(np.outer(np.conj(g), g))
    assert d == 1
    assert np.allclose(E[0].reshape(2, 2), L)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_psd_round_trip(n, r, seed):
    rng = np.random.default_rng(seed)
    X = rand_mat(rng, r, n)
    gram = dagger(X) @ X
    tol = 1e-9
    d, E, _ = psd_rank_factorize(gram, tol)
    assert d <= min(n, r)
    assert np.linalg.norm(dagger(E) @ E - gram) <= 10 * tol * np.linalg.norm(gram) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partial_trace_preserves_trace(seed):
    rng = np.random.default_rng(seed)
    B = rand_mat(rng, 6)
    B = B + dagger(B)
    assert abs(np.trace(partial_trace_second(ProductOperator((2, 3), B))) - np.trace(B)) <= 1e-12


def test_superop_sandwich(rng):
    A, B, rho = rand_mat(rng, 3), rand_mat(rng, 3), rand_mat(rng, 3)
    assert np.allclose(apply_superop(superop_sandwich(A, B), rho), A @ rho @ B)
    assert np.allclose(vec(rho)[:3], rho[:, 0])


def test_product_operator_rejects_bad_side():
    with pytest.raises(DimensionError):
        ProductOperator((2, 3), np.eye(5))


def test_matrix_file_round_trip(tmp_path, rng):
    a = rand_mat(rng, 2, 3)
    dump_matrix(a, tmp_path / "m.json")
    assert np.array_equal(load_matrix(tmp_path / "m.json"), a)


def test_epsilon_product_all_zero_word(rng):
    A = rand_unitary(rng, 4)
    us = [rand_vec(rng, 2) for _ in range(2)]
    vs = [rand_vec(rng, 2) for _ in range(2)]
    op = epsilon_product(A, [0, 1], dim_h=2)
    lhs = compress(op, np.kron(us[0], us[1]), np.kron(vs[0], vs[1]))
    rhs = compress(A, us[0], vs[0], dim_h=2) @ compress(dagger(A), us[1], vs[1], dim_h=2)
    assert np.allclose(lhs, rhs)
