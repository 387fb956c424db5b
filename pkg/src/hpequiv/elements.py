"""Matrix elements of the HP evolution on exponential vectors, by ODE.

For step functions ``f, g`` and the right HP equation with creation
coefficient ``L_j``, annihilation coefficient ``-L_j^dagger`` and time
coefficient ``G``, the operator

    <u, M v> = <u (x) e(f), V_{s,t} v (x) e(g)>

obeys ``dM/dr = M C(r)`` with ``C = G + sum_j conj(f_j) L_j - sum_j g_j L_j^dagger``,
times the scalar weight ``exp(int_s^r <f, g>)``. Coefficients are constant
on grid cells, so each RK4 substep multiplies by the same polynomial of the
cell generator; cell propagators are computed once and cached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from hpequiv.errors import ScheduleError
from hpequiv.operator_core import CDTYPE, dagger
from hpequiv.schedule import CoefficientSchedule, lindblad_superop


def rk4_propagator(A: np.ndarray, h: float, k: int) -> np.ndarray:
    """``R(hA)^k`` where ``R(x) = 1 + x + x^2/2 + x^3/6 + x^4/24`` is one RK4 step of ``y' = A y``."""
    x = h * A
    x2 = x @ x
    step = x + x2 / 2 + x2 @ x / 6 + x2 @ x2 / 24
    # compose increments D with (1 + D1)(1 + D2) = 1 + D1 + D2 + D1 D2 so that
    # tiny steps do not lose digits against the identity
    out = np.zeros_like(step)
    while k:
        if k & 1:
            out = out + step + out @ step
        step = step + step + step @ step
        k >>= 1
    return np.eye(A.shape[0], dtype=CDTYPE) + out


def default_step(sched: CoefficientSchedule) -> float:
    return min(sched.tau, 1e-3 * sched.grid.t_end)


def substeps(sched: CoefficientSchedule, rk4_step: float | None) -> tuple[int, float]:
    """Number of RK4 substeps per cell and their length."""
    step = default_step(sched) if rk4_step is None else float(rk4_step)
    if step <= 0 or step > sched.tau * (1 + 1e-12):
        raise ScheduleError(f"rk4_step={step} must lie in (0, tau={sched.tau}]")
    k = max(1, math.ceil(sched.tau / step - 1e-9))
    return k, sched.tau / k


def _step_values(sched: CoefficientSchedule, f) -> np.ndarray:
    d, m = sched.noise_dim, sched.grid.steps
    if f is None:
        return np.zeros((m, d), dtype=CDTYPE)
    f = np.asarray(f, dtype=CDTYPE)
    if f.ndim == 1 and d == 1 and f.shape[0] == m:
        f = f[:, None]
    if f.shape != (m, d):
        raise ScheduleError(f"step function must have shape ({m}, {d}), got {f.shape}")
    return f


def element_generator(sched: CoefficientSchedule, i: int, fi, gi) -> np.ndarray:
    """``C = G + sum_j conj(f_j) L_j - sum_j g_j L_j^dagger`` on cell ``i``."""
    C = sched.G[i].astype(CDTYPE)
    for j, Lj in enumerate(sched.L[i]):
        C = C + np.conj(fi[j]) * Lj - gi[j] * dagger(Lj)
    return C


def _check_interval(sched: CoefficientSchedule, s: int, t: int) -> None:
    if not 0 <= s <= t <= sched.grid.steps:
        raise ScheduleError(f"interval [{s}, {t}) is not inside the grid 0..{sched.grid.steps}")


def _weight(sched: CoefficientSchedule, f, g, s: int, t: int) -> complex:
    return complex(np.exp(sched.tau * np.sum(np.conj(f[s:t]) * g[s:t])))


def element_ode(sched: CoefficientSchedule, f=None, g=None, s: int = 0, t: int | None = None,
                rk4_step: float | None = None) -> np.ndarray:
    """``M`` with ``<u, M v> = <u (x) e(f_[s,t)), V_{s,t} v (x) e(g_[s,t))>``; grid indices ``s <= t``."""
    t = sched.grid.steps if t is None else t
    _check_interval(sched, s, t)
    k, h = substeps(sched, rk4_step)
    f, g = _step_values(sched, f), _step_values(sched, g)
    M = np.eye(sched.dim_h, dtype=CDTYPE)
    for i in range(s, t):
        # M' = M C  <=>  (M^T)' = C^T M^T
        M = M @ rk4_propagator(element_generator(sched, i, f[i], g[i]).T, h, k).T
    return _weight(sched, f, g, s, t) * M


def isometry_generator(sched: CoefficientSchedule, i: int, fi, gi) -> np.ndarray:
    """Superoperator of ``N -> A^dagger N + N C + sum_j L_j^dagger N L_j`` (column stacking).

    ``C`` pairs ``(f, g)`` and ``A`` pairs ``(g, f)``, as produced by the quantum
    Ito rule applied to ``<V u e(f), V v e(g)>``.
    """
    n = sched.dim_h
    C = element_generator(sched, i, fi, gi)
    A = sched.G[i].astype(CDTYPE)
    for j, Lj in enumerate(sched.L[i]):
        A = A + np.conj(gi[j]) * Lj - fi[j] * dagger(Lj)
    eye = np.eye(n)
    sup = np.kron(eye, dagger(A)) + np.kron(C.T, eye)
    for Lj in sched.L[i]:
        sup = sup + np.kron(Lj.T, dagger(Lj))
    return sup


def isometry_form_ode(sched: CoefficientSchedule, f=None, g=None, s: int = 0, t: int | None = None,
                      rk4_step: float | None = None) -> np.ndarray:
    """Gram form ``N`` with ``<u, N v> = <V u (x) e(f), V v (x) e(g)>`` over ``[s, t)``.

    For a unitary schedule and ``f = g`` the result is ``e^{||f||^2} 1``.
    """
    t = sched.grid.steps if t is None else t
    _check_interval(sched, s, t)
    k, h = substeps(sched, rk4_step)
    f, g = _step_values(sched, f), _step_values(sched, g)
    n = sched.dim_h
    x = np.eye(n, dtype=CDTYPE).flatten("F")
    for i in range(s, t):
        x = rk4_propagator(isometry_generator(sched, i, f[i], g[i]), h, k) @ x
    return _weight(sched, f, g, s, t) * x.reshape(n, n, order="F")


def extract_Z_ode(sched: CoefficientSchedule, s: int = 0, t: int | None = None,
                  rk4_step: float | None = None) -> np.ndarray:
    """Superoperator of ``Z_{s,t}`` solving ``dZ/dr = Z o Lindblad(r)``."""
    return ElementBackend(sched, rk4_step).Z(s, sched.grid.steps if t is None else t)


@dataclass
class ElementBackend:
    """Process-like view on the ODE backend: vacuum flows ``T`` and ``Z`` on grid indices."""

    sched: CoefficientSchedule
    rk4_step: float | None = None
    _cells_T: dict = field(default_factory=dict, repr=False)
    _cells_Z: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._k, self._h = substeps(self.sched, self.rk4_step)

    @property
    def grid(self):
        return self.sched.grid

    @property
    def dim_h(self) -> int:
        return self.sched.dim_h

    @property
    def m(self) -> int:
        return self.sched.grid.steps

    @property
    def tau(self) -> float:
        return self.sched.tau

    def cell_T(self, i: int) -> np.ndarray:
        if i not in self._cells_T:
            self._cells_T[i] = rk4_propagator(self.sched.G[i].T.astype(CDTYPE), self._h, self._k).T
        return self._cells_T[i]

    def cell_Z(self, i: int) -> np.ndarray:
        if i not in self._cells_Z:
            Ls = lindblad_superop(self.sched.G[i], self.sched.L[i])
            self._cells_Z[i] = rk4_propagator(Ls.T, self._h, self._k).T
        return self._cells_Z[i]

    def T(self, s: int, t: int) -> np.ndarray:
        _check_interval(self.sched, s, t)
        out = np.eye(self.dim_h, dtype=CDTYPE)
        for i in range(s, t):
            out = out @ self.cell_T(i)
        return out

    def Z(self, s: int, t: int) -> np.ndarray:
        _check_interval(self.sched, s, t)
        out = np.eye(self.dim_h**2, dtype=CDTYPE)
        for i in range(s, t):
            out = out @ self.cell_Z(i)
        return out

    def exponential_element(self, f, g, s: int = 0, t: int | None = None) -> np.ndarray:
        return element_ode(self.sched, f, g, s, t, self.rk4_step)


def product_of_exponentials(sched: CoefficientSchedule, f=None, g=None, s: int = 0, t: int | None = None) -> np.ndarray:
    """Exact ``M`` for piecewise-constant data: ordered product of ``expm(tau C_i)`` times the weight."""
    t = sched.grid.steps if t is None else t
    _check_interval(sched, s, t)
    f, g = _step_values(sched, f), _step_values(sched, g)
    M = np.eye(sched.dim_h, dtype=CDTYPE)
    for i in range(s, t):
        M = M @ expm(sched.tau * element_generator(sched, i, f[i], g[i]))
    return _weight(sched, f, g, s, t) * M
