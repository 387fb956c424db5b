"""Dense complex linear algebra on tensor products.

Matrices are plain ``numpy`` arrays of dtype complex128. Operators on a
tensor product carry their factor dimensions in a :class:`ProductOperator`
so that compressions and partial traces can check shapes at the boundary.

Superoperators act on column-stacked density matrices: ``vec(rho)`` is
``rho.flatten(order="F")`` and ``rho -> A rho B`` has matrix ``kron(B.T, A)``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hpequiv.errors import DimensionError, KernelError

CDTYPE = np.complex128

# Relative eigenvalue floor below which a Gram matrix counts as PSD.
TOL_PSD = 1e-9
# Absolute eigenvalue scale treated as an exactly vanishing Gram matrix.
ZERO_FLOOR = 1e-13


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=CDTYPE)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def as_vector(a) -> np.ndarray:
    v = np.asarray(a, dtype=CDTYPE)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    return v


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def basis(n: int, i: int) -> np.ndarray:
    e = np.zeros(n, dtype=CDTYPE)
    e[i] = 1.0
    return e


def ket_bra(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``|a><b|``."""
    return np.outer(a, np.conj(b))


@dataclass(frozen=True)
class ProductOperator:
    """Square matrix on ``C^{d_1} (x) ... (x) C^{d_k}``.

    The last factor plays the role of the "system" space H (or the Fock
    part); all preceding factors together form the initial space h.
    """

    factor_dims: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims or any(d <= 0 for d in dims):
            raise DimensionError(f"factor dimensions must be positive, got {dims}")
        m = as_matrix(self.matrix)
        side = int(np.prod(dims))
        if m.shape != (side, side):
            raise DimensionError(f"matrix shape {m.shape} does not match factors {dims}")
        object.__setattr__(self, "factor_dims", dims)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim_h(self) -> int:
        return int(np.prod(self.factor_dims[:-1])) if len(self.factor_dims) > 1 else 1

    @property
    def dim_H(self) -> int:
        return self.factor_dims[-1]

    def adjoint(self) -> "ProductOperator":
        return ProductOperator(self.factor_dims, dagger(self.matrix))

    def __matmul__(self, other: "ProductOperator") -> "ProductOperator":
        if self.factor_dims != other.factor_dims:
            raise DimensionError(f"factor mismatch {self.factor_dims} vs {other.factor_dims}")
        return ProductOperator(self.factor_dims, self.matrix @ other.matrix)


def _bipartite(A, dim_h: int | None) -> tuple[np.ndarray, int, int]:
    if isinstance(A, ProductOperator):
        if len(A.factor_dims) < 2:
            raise DimensionError("operator needs at least two tensor factors")
        return A.matrix, A.dim_h, A.dim_H
    m = as_matrix(A)
    if dim_h is None or m.shape[0] % dim_h or m.shape[0] != m.shape[1]:
        raise DimensionError(f"cannot split operator of shape {m.shape} with dim_h={dim_h}")
    return m, dim_h, m.shape[0] // dim_h


def tensor(A, B) -> np.ndarray:
    """Kronecker product ``A (x) B``."""
    return np.kron(np.asarray(A, dtype=CDTYPE), np.asarray(B, dtype=CDTYPE))


def compress(A, u, v, dim_h: int | None = None) -> np.ndarray:
    """The operator ``A(u, v)`` on H with ``<x, A(u,v) y> = <u (x) x, A v (x) y>``.

    ``A`` is a :class:`ProductOperator` (h = all factors but the last) or a
    bare matrix together with ``dim_h``. Anti-linear in ``u``, linear in ``v``.
    """
    m, nh, nH = _bipartite(A, dim_h)
    u = as_vector(u)
    v = as_vector(v)
    if u.shape[0] != nh or v.shape[0] != nh:
        raise DimensionError(f"vectors of length {u.shape[0]}, {v.shape[0]} for h of dim {nh}")
    blocks = m.reshape(nh, nH, nh, nH)
    return np.einsum("a,axby,b->xy", np.conj(u), blocks, v)


def compress_product_identity(A, B, u, v, basis_vectors: Sequence, dim_h: int | None = None) -> np.ndarray:
    """``sum_j A(u, e_j) B(e_j, v)`` over an orthonormal basis of h.

    Equals ``compress(A @ B, u, v)`` when the basis is complete.
    """
    E = np.array([as_vector(e) for e in basis_vectors])
    gram = E.conj() @ E.T
    if np.max(np.abs(gram - np.eye(len(E)))) > 1e-12:
        raise DimensionError("basis is not orthonormal")
    return sum(compress(A, u, e, dim_h) @ compress(B, e, v, dim_h) for e in E)


def partial_trace_second(B) -> np.ndarray:
    """``Tr_H`` of an operator on ``h (x) H``; returns a matrix on h."""
    if isinstance(B, ProductOperator):
        if len(B.factor_dims) != 2:
            raise DimensionError(f"expected two tensor factors, got {B.factor_dims}")
        nh, nH = B.factor_dims
        m = B.matrix
    else:
        raise DimensionError("partial_trace_second needs a two-factor ProductOperator")
    return np.einsum("axbx->ab", m.reshape(nh, nH, nh, nH))


def exchange_permutation(k: int, n: int, dim_h: int, dim_H: int) -> np.ndarray:
    """Permutation matrix of P_{k,n} on ``h^{(x)n} (x) H`` (k is 1-based).

    ``P_{k,n}(u_1 (x) ... (x) u_n (x) xi)`` has ``u_{tau(j)}`` in slot j where
    tau is the cycle (k k+1 ... n); so ``u_k`` lands next to H.
    """
    if not 1 <= k <= n:
        raise DimensionError(f"slot index k={k} outside 1..{n}")
    tau = list(range(n))
    tau[k - 1 : n] = list(range(k, n)) + [k - 1]
    side = dim_h**n * dim_H
    P = np.zeros((side, side), dtype=CDTYPE)
    for idx in itertools.product(range(dim_h), repeat=n):
        out = tuple(idx[tau[j]] for j in range(n))
        src = np.ravel_multi_index(idx, (dim_h,) * n) if n else 0
        dst = np.ravel_multi_index(out, (dim_h,) * n) if n else 0
        for x in range(dim_H):
            P[dst * dim_H + x, src * dim_H + x] = 1.0
    return P


def exchange_ampliate(A, k: int, n: int, eps: int = 0, dim_h: int | None = None) -> ProductOperator:
    """``A^{(n, eps)}`` placed on the k-th copy of h (1-based) and on H."""
    m, nh, nH = _bipartite(A, dim_h)
    if eps not in (0, 1):
        raise ValueError("eps must be 0 or 1")
    if eps:
        m = dagger(m)
    P = exchange_permutation(k, n, nh, nH)
    lifted = np.kron(np.eye(nh ** (n - 1), dtype=CDTYPE), m)
    return ProductOperator((nh,) * n + (nH,), P.T @ lifted @ P)


def epsilon_product(A, eps: Sequence[int], dim_h: int | None = None) -> ProductOperator:
    """``A^{(eps_1..eps_n)} = prod_k A^{(n, eps_k)}``, ordered k = 1..n."""
    n = len(eps)
    ops = [exchange_ampliate(A, k + 1, n, e, dim_h) for k, e in enumerate(eps)]
    out = ops[0]
    for op in ops[1:]:
        out = out @ op
    return out


def psd_rank_factorize(gram, tol: float = 1e-9, psd_tol: float = TOL_PSD) -> tuple[int, np.ndarray, np.ndarray]:
    """Rank-revealing factorization ``gram = E^dagger E``.

    Returns ``(rank, E, eigenvalues)`` with ``E`` of shape ``(rank, N)``; column
    i of ``E`` is the embedded vector of index i. Eigenvalues at or below
    ``tol * lambda_max`` are discarded; rows are ordered by descending
    eigenvalue and phase-fixed so the first non-negligible entry is real
    positive.
    """
    g = as_matrix(gram)
    if g.shape[0] != g.shape[1]:
        raise DimensionError("Gram matrix must be square")
    scale = max(1.0, float(np.max(np.abs(g)))) if g.size else 1.0
    if g.size and np.max(np.abs(g - dagger(g))) > 1e-12 * scale:
        raise KernelError("Gram matrix is not hermitian")
    g = 0.5 * (g + dagger(g))
    w, V = np.linalg.eigh(g)
    lam_max = float(w[-1]) if w.size else 0.0
    if lam_max <= ZERO_FLOOR:
        # numerically the zero kernel (trivial process)
        if w.size and w[0] < -ZERO_FLOOR:
            raise KernelError(f"Gram matrix is negative definite (min eigenvalue {w[0]:.3e})")
        return 0, np.zeros((0, g.shape[0]), dtype=CDTYPE), w
    if w[0] < -psd_tol * lam_max:
        raise KernelError(f"Gram matrix not PSD: min eigenvalue {w[0]:.3e} vs lambda_max {lam_max:.3e}")
    keep = w > tol * lam_max
    order = np.argsort(w[keep])[::-1]
    lam = w[keep][order]
    vecs = V[:, keep][:, order]
    E = np.sqrt(lam)[:, None] * dagger(vecs)
    for r in range(E.shape[0]):
        row = E[r]
        j = int(np.argmax(np.abs(row) > 1e-12 * np.max(np.abs(row))))
        E[r] = row * (np.abs(row[j]) / row[j])
    return int(keep.sum()), E, w


# -- superoperators ----------------------------------------------------------


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho, dtype=CDTYPE).flatten(order="F")


def unvec(x: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(x, dtype=CDTYPE).reshape(n, n, order="F")


def superop_sandwich(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix of ``rho -> A rho B``."""
    return np.kron(np.asarray(B, dtype=CDTYPE).T, np.asarray(A, dtype=CDTYPE))


def apply_superop(S: np.ndarray, rho: np.ndarray) -> np.ndarray:
    n = rho.shape[0]
    return unvec(S @ vec(rho), n)


def trace_norm(a: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def op_norm(a: np.ndarray) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


# -- file format -------------------------------------------------------------


def matrix_to_dict(a) -> dict:
    m = np.atleast_2d(np.asarray(a, dtype=CDTYPE))
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "re": [float(x) for x in m.real.ravel()],
        "im": [float(x) for x in m.imag.ravel()],
    }


def matrix_from_dict(d: dict) -> np.ndarray:
    rows, cols = int(d["rows"]), int(d["cols"])
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d.get("im", np.zeros(rows * cols)), dtype=float)
    if re.size != rows * cols or im.size != rows * cols:
        raise DimensionError(f"matrix record has {re.size} entries for {rows}x{cols}")
    return (re + 1j * im).reshape(rows, cols)


def dump_matrix(a, path) -> None:
    with open(path, "w") as fh:
        json.dump(matrix_to_dict(a), fh)


def load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        return matrix_from_dict(json.load(fh))
