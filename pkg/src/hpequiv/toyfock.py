"""Repeated-interaction (toy Fock) realization of a unitary process.

The Fock space over ``[0, T]`` is replaced by ``(C^{1+d})^{(x) m}``, one
factor per grid cell, with ``|0>`` the vacuum of a slice and ``|j>`` a
single quantum in noise mode ``j``. Cell ``i`` contributes the slice unitary

    U_i = exp( sqrt(tau) sum_j (L_j (x) |j><0| - L_j^dagger (x) |0><j|)
               - i tau H (x) 1  [+ 1 (x) log S] )

acting on ``h`` and slice ``i`` only, and ``U_{s,t} = U_s U_{s+1} ... U_{t-1}``.
The evolution law and the independence of increments therefore hold
exactly, by the tensor-product structure.

Full-state vectors are stored as arrays of shape ``(dim_h, q, ..., q)`` and
slice unitaries are applied one tensor leg at a time; no operator on the
full space is ever formed unless explicitly requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from hpequiv.errors import CapError, DimensionError, ScheduleError
from hpequiv.operator_core import CDTYPE, as_vector, dagger
from hpequiv.schedule import CoefficientSchedule, validate_unitarity

MAX_WINDOW = 12  # slices in any full-state computation
MAX_DENSE = 4096  # side of any dense Fock-space operator
MAX_NOISE_DIM = 2
MAX_DIM_H = 4
MAX_STATE = 2**20  # amplitudes in any full-state vector
WINDOW_STATE = 2**16  # larger windows use the factorized vacuum route


def slice_generator(sched: CoefficientSchedule, i: int) -> np.ndarray:
    """Generator Theta_i on ``h (x) C^{1+d}`` (skew-hermitian for unitary schedules)."""
    n, d, tau = sched.dim_h, sched.noise_dim, sched.tau
    q = 1 + d
    theta = np.zeros((n * q, n * q), dtype=CDTYPE)
    for j, Lj in enumerate(sched.L[i]):
        up = np.zeros((q, q))
        up[j + 1, 0] = 1.0
        theta += np.sqrt(tau) * (np.kron(Lj, up) - np.kron(dagger(Lj), up.T))
    theta += -1j * tau * np.kron(sched.H_at(i), np.eye(q))
    logS = sched.log_S_at(i)
    if logS is not None:
        block = np.zeros((q, q), dtype=CDTYPE)
        block[1:, 1:] = logS
        theta += np.kron(np.eye(n), block)
    return theta


@dataclass(frozen=True)
class ToyFockProcess:
    sched: CoefficientSchedule
    slices: tuple[np.ndarray, ...]
    order: str = "forward"
    reference: np.ndarray | None = field(default=None, compare=False)
    max_window: int = MAX_WINDOW

    @property
    def dim_h(self) -> int:
        return self.sched.dim_h

    @property
    def q(self) -> int:
        return 1 + self.sched.noise_dim

    @property
    def m(self) -> int:
        return self.sched.grid.steps

    @property
    def grid(self):
        return self.sched.grid

    @property
    def tau(self) -> float:
        return self.sched.tau

    @property
    def fock_dim(self) -> int:
        return self.q**self.m

    @property
    def total_dim(self) -> int:
        return self.dim_h * self.fock_dim

    def slice_tensor(self, i: int) -> np.ndarray:
        n, q = self.dim_h, self.q
        return self.slices[i].reshape(n, q, n, q)

    def vacuum_block(self, i: int) -> np.ndarray:
        return self.slice_tensor(i)[:, 0, :, 0]

    def slice_channel(self, i: int) -> np.ndarray:
        """Superoperator of ``rho -> Tr_slice[U_i (rho (x) |0><0|) U_i^dagger]``."""
        U4 = self.slice_tensor(i)
        return sum(np.kron(np.conj(U4[:, x, :, 0]), U4[:, x, :, 0]) for x in range(self.q))

    def with_reference(self, psi) -> "ToyFockProcess":
        """Same unitaries, but expectations taken in the normalized Fock vector ``psi``."""
        psi = as_vector(psi)
        if psi.shape[0] != self.fock_dim:
            raise DimensionError(f"reference has length {psi.shape[0]}, Fock dimension is {self.fock_dim}")
        return replace(self, reference=psi / np.linalg.norm(psi))

    def scrambled(self) -> "ToyFockProcess":
        """Negative control: each interval applies its slices in reversed time order."""
        return replace(self, order="reversed")

    def restrict(self, stop: int) -> "ToyFockProcess":
        """The process on the first ``stop`` cells."""
        return replace(self, sched=self.sched.restrict(stop), slices=self.slices[:stop], reference=None)

    def _sequence(self, s: int, t: int, adjoint: bool) -> list[int]:
        """Slice indices in the order they act on a ket (rightmost factor first)."""
        if not 0 <= s <= t <= self.m:
            raise ScheduleError(f"interval [{s}, {t}) is not inside the grid 0..{self.m}")
        idx = list(range(s, t))  # operator product U_s ... U_{t-1}
        if self.order == "reversed":
            idx = idx[::-1]
        acting = idx[::-1]
        if adjoint:
            acting = acting[::-1]
        return acting

    def check_window(self, k: int) -> None:
        if k > self.max_window:
            raise CapError(f"{k} slices exceed the full-state cap of {self.max_window}")
        if self.dim_h * self.q**k > MAX_STATE:
            raise CapError(f"a state on {k} slices has {self.dim_h * self.q**k} amplitudes (cap {MAX_STATE})")

    # -- full-state vectors -------------------------------------------------

    def vacuum(self) -> np.ndarray:
        """The reference vector Omega of the Fock part (vacuum unless overridden)."""
        self.check_window(self.m)
        if self.reference is not None:
            return self.reference.copy()
        om = np.zeros(self.fock_dim, dtype=CDTYPE)
        om[0] = 1.0
        return om

    def _apply_sequence(self, state: np.ndarray, seq: Sequence[int], offset: int, adjoint: bool) -> np.ndarray:
        """Apply slices to ``state`` of shape ``(n, q, ..., q)``; slice i lives on axis ``1 + i - offset``."""
        for i in seq:
            U4 = self.slice_tensor(i)
            if adjoint:
                U4 = np.conj(U4.transpose(2, 3, 0, 1))
            ax = 1 + i - offset
            state = np.tensordot(U4, state, axes=([2, 3], [0, ax]))
            state = np.moveaxis(state, 1, ax)
        return state

    def apply(self, s: int, t: int, psi, adjoint: bool = False) -> np.ndarray:
        """``U_{s,t} psi`` (or its adjoint) for ``psi`` on ``h (x) Fock``."""
        self.check_window(self.m)
        psi = as_vector(psi)
        if psi.shape[0] != self.total_dim:
            raise DimensionError(f"vector of length {psi.shape[0]}, process dimension {self.total_dim}")
        state = psi.reshape((self.dim_h,) + (self.q,) * self.m)
        state = self._apply_sequence(state, self._sequence(s, t, adjoint), 0, adjoint)
        return state.reshape(-1)

    def apply_compressed(self, s: int, t: int, u, v, phi, eps: int = 0) -> np.ndarray:
        """``U^{(eps)}_{s,t}(u, v) phi`` for a Fock vector ``phi``."""
        u, v, phi = as_vector(u), as_vector(v), as_vector(phi)
        if u.shape[0] != self.dim_h or v.shape[0] != self.dim_h:
            raise DimensionError("u, v must live in h")
        out = self.apply(s, t, np.kron(v, phi), adjoint=bool(eps))
        return np.conj(u) @ out.reshape(self.dim_h, -1)

    def compressed_minus_one(self, s: int, t: int, u, v, phi, eps: int = 0) -> np.ndarray:
        """``(U^{(eps)}_{s,t} - 1)(u, v) phi``."""
        return self.apply_compressed(s, t, u, v, phi, eps) - np.vdot(u, v) * as_vector(phi)

    # -- window computations (product vacuum only) ---------------------------

    def apply_local(self, s: int, t: int, state: np.ndarray, offset: int, adjoint: bool = False) -> np.ndarray:
        """``U_{s,t}`` on a window state of shape ``(n, q, ..., q)`` whose first slice is ``offset``."""
        k = state.ndim - 1
        if not offset <= s <= t <= offset + k:
            raise ScheduleError(f"interval [{s}, {t}) is outside the window starting at {offset}")
        return self._apply_sequence(state, self._sequence(s, t, adjoint), offset, adjoint)

    def compressed_local(self, s: int, t: int, u, v, phi: np.ndarray, offset: int, eps: int = 0) -> np.ndarray:
        """``U^{(eps)}_{s,t}(u, v)`` on a Fock window state ``phi`` of shape ``(q, ..., q)``."""
        u, v = as_vector(u), as_vector(v)
        state = np.multiply.outer(v, phi)
        state = self.apply_local(s, t, state, offset, adjoint=bool(eps))
        return np.tensordot(np.conj(u), state, axes=(0, 0))

    def window_states(self, s: int, t: int) -> np.ndarray:
        """``psi[v] = U_{s,t} (e_v (x) Omega_window)`` reshaped to ``(n, n, q^k)``.

        Entry ``[v, u, x]`` is the component of ``U_{s,t}(e_u, e_v) Omega`` along
        the window basis state ``x``; slices outside ``[s, t)`` stay in vacuum.
        """
        k = t - s
        self.check_window(k)
        n, q = self.dim_h, self.q
        out = np.empty((n, n, q**k), dtype=CDTYPE)
        seq = self._sequence(s, t, False)
        for v in range(n):
            state = np.zeros((n,) + (q,) * k, dtype=CDTYPE)
            state[(v,) + (0,) * k] = 1.0
            state = self._apply_sequence(state, seq, s, False)
            out[v] = state.reshape(n, -1)
        return out

    def interval_matrix(self, s: int, t: int, adjoint: bool = False) -> np.ndarray:
        """Dense ``U_{s,t}`` on ``h (x) slices[s:t]``."""
        k = t - s
        side = self.dim_h * self.q**k
        if side > MAX_DENSE:
            raise CapError(f"dense interval operator of side {side} exceeds {MAX_DENSE}")
        cols = []
        seq = self._sequence(s, t, adjoint)
        for c in range(side):
            state = np.zeros(side, dtype=CDTYPE)
            state[c] = 1.0
            state = self._apply_sequence(state.reshape((self.dim_h,) + (self.q,) * k), seq, s, adjoint)
            cols.append(state.reshape(-1))
        return np.array(cols).T

    # -- expectation flows ----------------------------------------------------

    def _use_window(self, s: int, t: int) -> bool:
        k = t - s
        return self.reference is None and k <= self.max_window and self.dim_h * self.q**k <= WINDOW_STATE

    def T(self, s: int, t: int, route: str = "auto") -> np.ndarray:
        """``<u, T_{s,t} v> = <Omega, U_{s,t}(u, v) Omega>`` as a matrix on h."""
        if route == "factorized" or (route == "auto" and not self._use_window(s, t) and self.reference is None):
            seq = self._sequence(s, t, False)[::-1]  # operator order
            out = np.eye(self.dim_h, dtype=CDTYPE)
            for i in seq:
                out = out @ self.vacuum_block(i)
            return out
        if self.reference is not None:
            om = self.vacuum()
            n = self.dim_h
            return np.array([[np.vdot(om, self.apply_compressed(s, t, np.eye(n)[a], np.eye(n)[b], om))
                              for b in range(n)] for a in range(n)])
        psi = self.window_states(s, t)
        return psi[:, :, 0].T

    def Z(self, s: int, t: int, route: str = "auto") -> np.ndarray:
        """Superoperator of ``Z_{s,t}(rho) = Tr_Fock[U (rho (x) |Omega><Omega|) U^dagger]``."""
        n = self.dim_h
        if route == "factorized" or (route == "auto" and not self._use_window(s, t) and self.reference is None):
            seq = self._sequence(s, t, False)[::-1]
            out = np.eye(n * n, dtype=CDTYPE)
            for i in seq:
                out = out @ self.slice_channel(i)
            return out
        if self.reference is not None:
            om = self.vacuum()
            e = np.eye(n)
            phi = np.array([[self.apply_compressed(s, t, e[a], e[b], om) for b in range(n)] for a in range(n)])
        else:
            psi = self.window_states(s, t)
            phi = psi.transpose(1, 0, 2)  # phi[u, v] = U(e_u, e_v) Omega
        # <p, Z(|w><v|) u> = <phi[u, v], phi[p, w]>; row p + u n, column w + v n
        A = np.einsum("uvx,pwx->upvw", np.conj(phi), phi)
        return A.reshape(n * n, n * n)

    # -- exponential vectors -----------------------------------------------------

    def exponential_element(self, f, g, s: int = 0, t: int | None = None) -> np.ndarray:
        """Matrix ``M`` on h with ``<u, M v> = <u (x) e(f), U_{s,t} v (x) e(g)>``.

        ``f`` and ``g`` are arrays of shape ``(m, d)`` (one value per cell) and
        are restricted to ``[s, t)``. Since discrete exponential vectors are
        product vectors, ``M`` is an ordered product of per-slice compressions.
        """
        t = self.m if t is None else t
        f = self._step_function(f)
        g = self._step_function(g)
        out = np.eye(self.dim_h, dtype=CDTYPE)
        rt = np.sqrt(self.tau)
        for i in self._sequence(s, t, False)[::-1]:
            a = np.concatenate([[1.0], rt * f[i]])
            b = np.concatenate([[1.0], rt * g[i]])
            out = out @ np.einsum("x,axby,y->ab", np.conj(a), self.slice_tensor(i), b)
        return out

    def _step_function(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=CDTYPE)
        if f.ndim == 1 and self.sched.noise_dim == 1 and f.shape[0] == self.m:
            f = f[:, None]
        if f.shape != (self.m, self.sched.noise_dim):
            raise ScheduleError(f"step function must have shape ({self.m}, {self.sched.noise_dim}), got {f.shape}")
        return f


def build_process(
    sched: CoefficientSchedule,
    check: bool = True,
    max_noise_dim: int = MAX_NOISE_DIM,
    max_dim_h: int = MAX_DIM_H,
    max_window: int = MAX_WINDOW,
) -> ToyFockProcess:
    """Exponentiate the slice generators of ``sched``.

    With ``check`` (default) a schedule whose derived Hamiltonian is not
    hermitian is rejected; ``check=False`` builds the non-unitary slices,
    which is only useful as a negative control.
    """
    if sched.noise_dim > max_noise_dim or sched.dim_h > max_dim_h:
        raise CapError(f"dim_h={sched.dim_h}, d={sched.noise_dim} exceed caps ({max_dim_h}, {max_noise_dim})")
    if check:
        rep = validate_unitarity(sched)
        if rep["hermitian_defect"] > 1e-9 or rep["max_residual"] > 1e-9:
            raise ScheduleError(f"schedule violates the unitarity condition: {rep}")
    cache: dict[bytes, np.ndarray] = {}
    slices = []
    for i in range(sched.grid.steps):
        key = sched.G[i].tobytes() + sched.L[i].tobytes() + (b"" if sched.S is None else sched.S[i].tobytes())
        if key not in cache:
            cache[key] = expm(slice_generator(sched, i))
        slices.append(cache[key])
    return ToyFockProcess(sched, tuple(slices), max_window=max_window)


def discrete_exponential_vector(process: ToyFockProcess, f) -> np.ndarray:
    """Dense ``(x)_i (1, sqrt(tau) f(t_i))`` on the Fock part (unnormalized)."""
    process.check_window(process.m)
    f = process._step_function(f)
    out = np.ones(1, dtype=CDTYPE)
    rt = np.sqrt(process.tau)
    for i in range(process.m):
        out = np.kron(out, np.concatenate([[1.0], rt * f[i]]))
    return out


def compress_process(process: ToyFockProcess, s: int, t: int, u, v) -> np.ndarray:
    """Dense ``U_{s,t}(u, v)`` on the whole Fock part ``(C^{1+d})^{(x) m}``."""
    if process.fock_dim > MAX_DENSE:
        raise CapError(f"Fock dimension {process.fock_dim} exceeds dense cap {MAX_DENSE}")
    u, v = as_vector(u), as_vector(v)
    n, q, k = process.dim_h, process.q, t - s
    local = process.interval_matrix(s, t).reshape(n, q**k, n, q**k)
    block = np.einsum("a,axby,b->xy", np.conj(u), local, v)
    return np.kron(np.kron(np.eye(q**s), block), np.eye(q ** (process.m - t)))


def multi_interval_vector(process: ToyFockProcess, s, t, u, v, eps=None, phi=None) -> np.ndarray:
    """``prod_k U^{(eps_k)}_{s_k,t_k}(u_k, v_k) Omega`` for ordered grid intervals."""
    n = len(s)
    eps = [0] * n if eps is None else list(eps)
    if not (len(t) == len(u) == len(v) == len(eps) == n):
        raise DimensionError("interval, vector and epsilon words must have equal length")
    check_ordered(s, t)
    out = process.vacuum() if phi is None else as_vector(phi)
    for k in reversed(range(n)):
        out = process.apply_compressed(s[k], t[k], u[k], v[k], out, eps[k])
    return out


def check_ordered(s, t) -> None:
    prev = 0
    for a, b in zip(s, t):
        if not prev <= a <= b:
            raise ScheduleError(f"intervals must satisfy s_1 <= t_1 <= s_2 <= ...; got {list(zip(s, t))}")
        prev = b
