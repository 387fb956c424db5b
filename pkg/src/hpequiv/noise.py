"""Noise space reconstruction: kernel Gram, Kolmogorov factorization, coefficient recovery.

At a time ``s`` the kernel on triples ``(u, v, eps)`` is

    K((u,v,e), (p,w,e')) = (-1)^{e+e'} ( <p, Lin(|w><v|) u> - conj<u,v> <p,G w> - conj<u,G v> <p,w> )

with ``G`` and ``Lin`` the generators of ``T`` and ``Z``. Its Gram on basis
pairs ``(e_i, e_k)`` (flattened as ``a = i*n + k``) factorizes as ``E^dagger E``;
column ``a`` of ``E`` is the noise vector ``eta(e_i, e_k)``, and
``(L_j)_{ik} = eta(e_i, e_k)_j``. Only ``eps = 0`` letters are stored; ``eps = 1``
flips the sign.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hpequiv.errors import DimensionError, KernelError
from hpequiv.flows import generators, snapshot
from hpequiv.operator_core import (
    CDTYPE,
    as_vector,
    dagger,
    matrix_from_dict,
    matrix_to_dict,
    op_norm,
    psd_rank_factorize,
)
from hpequiv.schedule import CoefficientSchedule, TimeGrid

RANK_TOL = 1e-6


@dataclass(frozen=True)
class KernelIndex:
    u: np.ndarray
    v: np.ndarray
    eps: int = 0

    def __post_init__(self):
        if self.eps not in (0, 1):
            raise ValueError("eps must be 0 or 1")


def kernel_eval(G, Lsuper, a: KernelIndex, b: KernelIndex) -> complex:
    G = np.asarray(G, dtype=CDTYPE)
    n = G.shape[0]
    u, v, p, w = (as_vector(x) for x in (a.u, a.v, b.u, b.v))
    if any(x.shape[0] != n for x in (u, v, p, w)) or np.shape(Lsuper) != (n * n, n * n):
        raise DimensionError("kernel arguments do not match dim_h")
    Y = (np.asarray(Lsuper) @ np.outer(w, v.conj()).flatten("F")).reshape(n, n, order="F")
    val = np.vdot(p, Y @ u) - np.conj(np.vdot(u, v)) * np.vdot(p, G @ w) - np.conj(np.vdot(u, G @ v)) * np.vdot(p, w)
    return complex((-1) ** (a.eps + b.eps) * val)


def gram_assemble(G, Lsuper, h: float | None = None, hermitian_tol: float = 1e-8) -> np.ndarray:
    """Kernel Gram on ``{(e_i, e_k, 0)}``, index ``i*n + k``.

    With ``h`` (the forward-difference step that produced ``G`` and ``Lsuper``)
    the vacuum contribution ``h conj(G_ik) G_pw`` of the difference quotient is
    removed; this is an exact projection off ``Omega`` and keeps the Gram PSD.
    """
    G = np.asarray(G, dtype=CDTYPE)
    n = G.shape[0]
    S = np.asarray(Lsuper, dtype=CDTYPE).reshape(n, n, n, n, order="F")  # S[p, u, w, v]
    eye = np.eye(n)
    K = np.einsum("piwk->ikpw", S)
    K = K - np.einsum("ik,pw->ikpw", eye, G) - np.einsum("ik,pw->ikpw", np.conj(G), eye)
    K = K.reshape(n * n, n * n)
    if h is not None:
        g = G.reshape(-1)
        K = K - h * np.outer(np.conj(g), g)
    defect = np.abs(K - dagger(K)).max()
    scale = max(1.0, np.abs(K).max())
    if defect > hermitian_tol * scale:
        raise KernelError(f"kernel Gram is not hermitian (defect {defect:.3g})")
    return (K + dagger(K)) / 2


@dataclass(frozen=True)
class NoiseFiber:
    t: float
    d: int
    embedding: np.ndarray  # d x n^2, column a = eta(e_i, e_k)
    gram: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def dim_h(self) -> int:
        return int(round(np.sqrt(self.gram.shape[0])))

    def eta(self, i: int, k: int) -> np.ndarray:
        return self.embedding[:, i * self.dim_h + k]

    def eta_vectors(self, u, v, eps: int = 0) -> np.ndarray:
        """``eta(u, v, eps)``, antilinear in ``u``, linear in ``v``."""
        u, v = as_vector(u), as_vector(v)
        x = np.einsum("i,k->ik", np.conj(u), v).reshape(-1)
        return (-1) ** eps * (self.embedding @ x)

    def eta_word(self, us: Sequence, vs: Sequence, eps: Sequence[int] | None = None) -> np.ndarray:
        """Multi-letter reduction ``sum_i prod_{k != i} <u_k, v_k> eta(u_i, v_i, eps_i)``."""
        eps = [0] * len(us) if eps is None else eps
        inner = [np.vdot(as_vector(a), as_vector(b)) for a, b in zip(us, vs)]
        out = np.zeros(self.d, dtype=CDTYPE)
        for i in range(len(us)):
            out = out + np.prod([inner[k] for k in range(len(us)) if k != i]) * self.eta_vectors(us[i], vs[i], eps[i])
        return out


def kolmogorov_factorize(gram, tol: float = RANK_TOL, t: float = 0.0) -> NoiseFiber:
    d, E, lam = psd_rank_factorize(gram, tol=tol)
    return NoiseFiber(t=t, d=d, embedding=E, gram=np.asarray(gram), eigenvalues=lam)


def recover_L(fiber: NoiseFiber) -> list[np.ndarray]:
    n = fiber.dim_h
    return [fiber.embedding[j].reshape(n, n) for j in range(fiber.d)]


def norm_identity_residual(L: Sequence[np.ndarray], G) -> float:
    """``max_k | sum_j ||L_j e_k||^2 + 2 Re <e_k, G e_k> |``."""
    G = np.asarray(G)
    lhs = sum((np.sum(np.abs(Lj) ** 2, axis=0) for Lj in L), np.zeros(G.shape[0]))
    return float(np.max(np.abs(lhs + 2 * np.real(np.diag(G)))))


def gauge_align(L_rec: Sequence[np.ndarray], L_ref: Sequence[np.ndarray]) -> tuple[np.ndarray, float]:
    """Unitary ``W`` minimizing ``sum_j ||sum_k W_jk L_rec_k - L_ref_j||_F^2``, and that minimum."""
    if len(L_rec) != len(L_ref):
        raise DimensionError(f"recovered multiplicity {len(L_rec)} differs from reference {len(L_ref)}")
    if len(L_rec) == 0:
        return np.zeros((0, 0), dtype=CDTYPE), 0.0
    A = np.array([np.asarray(x).reshape(-1) for x in L_rec], dtype=CDTYPE)
    B = np.array([np.asarray(x).reshape(-1) for x in L_ref], dtype=CDTYPE)
    U, _, Vh = np.linalg.svd(B @ dagger(A))
    W = U @ Vh
    return W, float(np.sum(np.abs(W @ A - B) ** 2))


@dataclass(frozen=True)
class MeasurableField:
    grid: TimeGrid
    fibers: tuple[NoiseFiber, ...]
    partition: dict

    @property
    def d_max(self) -> int:
        return max((f.d for f in self.fibers), default=0)

    def padded_L(self, i: int) -> np.ndarray:
        """Coefficients at cell ``i`` in the common ``C^{d_max}``; unused slots are zero."""
        fib = self.fibers[i]
        n = fib.dim_h
        out = np.zeros((self.d_max, n, n), dtype=CDTYPE)
        for j, Lj in enumerate(recover_L(fib)):
            out[j] = Lj
        return out


def assemble_field(grid: TimeGrid, fibers: Sequence[NoiseFiber]) -> MeasurableField:
    partition: dict[int, list[int]] = {}
    for i, fib in enumerate(fibers):
        partition.setdefault(fib.d, []).append(i)
    return MeasurableField(grid, tuple(fibers), partition)


@dataclass(frozen=True)
class Reconstruction:
    field: MeasurableField
    G: tuple[np.ndarray, ...]
    Lsuper: tuple[np.ndarray, ...]
    fd_step: float
    norm_residuals: tuple[float, ...]

    def rebuilt_schedule(self, name: str = "rebuilt") -> CoefficientSchedule:
        """Schedule from the recovered ``L_j`` and the hermitian part of the recovered Hamiltonian.

        ``G`` is re-derived as ``-iH - 1/2 sum L^dagger L`` so that the rebuilt
        schedule satisfies the unitarity condition exactly.
        """
        grid = self.field.grid
        m = grid.steps
        n = self.G[0].shape[0]
        d = self.field.d_max
        L = np.zeros((m, d, n, n), dtype=CDTYPE)
        G = np.zeros((m, n, n), dtype=CDTYPE)
        for i in range(m):
            L[i] = self.field.padded_L(i)
            K = sum((dagger(Lj) @ Lj for Lj in L[i]), np.zeros((n, n), dtype=CDTYPE))
            H = 1j * (self.G[i] + K / 2)
            H = (H + dagger(H)) / 2
            G[i] = -1j * H - K / 2
        return CoefficientSchedule(grid, G, L, None, name=name)


def rank_tolerance(G, h: float) -> float:
    """Relative eigenvalue cut: finite differences leave spurious eigenvalues of order ``h ||G||``."""
    return max(RANK_TOL, h * op_norm(G))


def reconstruct(process, h: float, richardson: bool = False, vacuum_correction: bool = True,
                tol: float | None = None) -> Reconstruction:
    """Extract generators from ``process`` and build fibers at every grid cell."""
    grid = process.grid
    gT = generators(snapshot(process, "T"), h, richardson)
    gZ = generators(snapshot(process, "Z"), h, richardson)
    fibers, norms = [], []
    cache: dict[int, NoiseFiber] = {}
    for i in range(grid.steps):
        key = id(gT[i])
        if key not in cache:
            gram = gram_assemble(gT[i], gZ[i], None if richardson or not vacuum_correction else h)
            cut = rank_tolerance(gT[i], h) if tol is None else tol
            cache[key] = kolmogorov_factorize(gram, cut, grid.time(i))
        fib = cache[key]
        if fib.t != grid.time(i):
            fib = NoiseFiber(grid.time(i), fib.d, fib.embedding, fib.gram, fib.eigenvalues)
        fibers.append(fib)
        norms.append(norm_identity_residual(recover_L(fib), gT[i]))
    field_ = assemble_field(grid, fibers)
    return Reconstruction(field_, tuple(gT[i] for i in range(grid.steps)),
                          tuple(gZ[i] for i in range(grid.steps)), h, tuple(norms))


def fiber_to_dict(fib: NoiseFiber) -> dict:
    n = fib.dim_h
    eta = {f"{i},{k}": {"re": fib.eta(i, k).real.tolist(), "im": fib.eta(i, k).imag.tolist()}
           for i in range(n) for k in range(n)}
    return {"t": fib.t, "d": fib.d, "eta": eta, "L": [matrix_to_dict(Lj) for Lj in recover_L(fib)]}


def fiber_from_dict(d: dict) -> NoiseFiber:
    L = [matrix_from_dict(x) for x in d["L"]]
    n = int(round(np.sqrt(len(d["eta"]))))
    E = np.array([Lj.reshape(-1) for Lj in L], dtype=CDTYPE).reshape(len(L), n * n)
    return NoiseFiber(d["t"], d["d"], E, dagger(E) @ E, np.linalg.eigvalsh(dagger(E) @ E)[::-1])


def dump_fibers(fibers: Sequence[NoiseFiber], path) -> None:
    with open(path, "w") as fh:
        json.dump([fiber_to_dict(f) for f in fibers], fh, indent=1)
