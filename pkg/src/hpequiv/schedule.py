"""Time-dependent Hudson-Parthasarathy coefficients on a uniform grid.

Conventions used throughout the package: the creation coefficient is
``L_j``, the annihilation coefficient is ``-L_j^dagger`` and the time
coefficient is ``G``. The unitarity condition reads
``sum_j L_j^dagger L_j + G + G^dagger = 0``, equivalently
``H = i (G + 1/2 sum_j L_j^dagger L_j)`` is hermitian.

Coefficients are piecewise constant: cell ``i`` covers ``[t_i, t_{i+1})``
and the value at any time is the left-endpoint value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import logm

from hpequiv.errors import DimensionError, ScheduleError
from hpequiv.operator_core import CDTYPE, dagger, matrix_from_dict, matrix_to_dict, op_norm

UNITARITY_TOL = 1e-10


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    steps: int

    def __post_init__(self):
        if not self.t_end > 0:
            raise ScheduleError(f"t_end must be positive, got {self.t_end}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ScheduleError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "t_end", float(self.t_end))

    @property
    def tau(self) -> float:
        return self.t_end / self.steps

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.tau

    def time(self, i: int) -> float:
        return i * self.tau

    def index(self, t: float, tol: float = 1e-9) -> int:
        """Grid index of ``t``; raises if ``t`` is not (close to) a grid point."""
        x = t / self.tau
        i = int(round(x))
        if abs(x - i) > tol or not 0 <= i <= self.steps:
            raise ScheduleError(f"time {t} is not on the grid (tau={self.tau})")
        return i

    def cell(self, t: float) -> int:
        """Index of the cell containing ``t`` (left-endpoint rule)."""
        return min(max(int(math.floor(t / self.tau + 1e-12)), 0), self.steps - 1)


@dataclass(frozen=True)
class CoefficientSchedule:
    """Piecewise-constant coefficients ``G(t)``, ``L_j(t)`` and optional ``S(t)``.

    ``G`` has shape ``(steps, n, n)``, ``L`` has shape ``(steps, d, n, n)`` and
    ``S`` (scattering, used only by the non-Gaussian demo) has shape
    ``(steps, d, d)``.
    """

    grid: TimeGrid
    G: np.ndarray
    L: np.ndarray
    S: np.ndarray | None = None
    name: str = "custom"
    unitary: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        G = np.asarray(self.G, dtype=CDTYPE)
        L = np.asarray(self.L, dtype=CDTYPE)
        m = self.grid.steps
        if G.ndim != 3 or G.shape[0] != m or G.shape[1] != G.shape[2]:
            raise DimensionError(f"G must have shape (steps, n, n); got {G.shape} for steps={m}")
        n = G.shape[1]
        if L.size == 0:
            L = np.zeros((m, 0, n, n), dtype=CDTYPE)
        if L.ndim != 4 or L.shape[0] != m or L.shape[2:] != (n, n):
            raise DimensionError(f"L must have shape (steps, d, n, n); got {L.shape}")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "L", L)
        if self.S is not None:
            S = np.asarray(self.S, dtype=CDTYPE)
            d = L.shape[1]
            if S.shape != (m, d, d):
                raise DimensionError(f"S must have shape (steps, d, d); got {S.shape}")
            object.__setattr__(self, "S", S)

    @property
    def dim_h(self) -> int:
        return self.G.shape[1]

    @property
    def noise_dim(self) -> int:
        return self.L.shape[1]

    @property
    def tau(self) -> float:
        return self.grid.tau

    @property
    def gaussian(self) -> bool:
        if self.S is None:
            return True
        eye = np.eye(self.noise_dim)
        return bool(all(np.allclose(s, eye) for s in self.S))

    def G_at(self, i: int) -> np.ndarray:
        return self.G[i]

    def L_at(self, i: int) -> np.ndarray:
        return self.L[i]

    def at_time(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        i = self.grid.cell(t)
        return self.G[i], self.L[i]

    def K_at(self, i: int) -> np.ndarray:
        """``sum_j L_j^dagger L_j`` on cell ``i``."""
        L = self.L[i]
        return np.einsum("jba,jbc->ac", np.conj(L), L)

    def H_at(self, i: int) -> np.ndarray:
        return 1j * (self.G[i] + 0.5 * self.K_at(i))

    def log_S_at(self, i: int) -> np.ndarray | None:
        if self.S is None:
            return None
        return logm(self.S[i])

    def sup_norm_G(self) -> float:
        return max(op_norm(g) for g in self.G)

    def restrict(self, stop: int) -> "CoefficientSchedule":
        """The schedule on the first ``stop`` cells."""
        if not 1 <= stop <= self.grid.steps:
            raise ScheduleError(f"cannot restrict to {stop} of {self.grid.steps} cells")
        grid = TimeGrid(stop * self.tau, stop)
        S = None if self.S is None else self.S[:stop]
        return CoefficientSchedule(grid, self.G[:stop], self.L[:stop], S, self.name, self.unitary, dict(self.meta))


def validate_unitarity(sched: CoefficientSchedule) -> dict:
    """Residuals of the unitarity condition over the grid (reports, never raises)."""
    res = 0.0
    herm = 0.0
    for i in range(sched.grid.steps):
        G = sched.G[i]
        K = sched.K_at(i)
        res = max(res, op_norm(K + G + dagger(G)))
        H = 1j * (G + 0.5 * K)
        herm = max(herm, op_norm(H - dagger(H)))
    return {"max_residual": res, "hermitian_defect": herm}


def lindblad_superop(G: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Column-stacking matrix of ``rho -> G rho + rho G^dagger + sum_j L_j rho L_j^dagger``."""
    n = G.shape[0]
    eye = np.eye(n, dtype=CDTYPE)
    S = np.kron(eye, G) + np.kron(np.conj(G), eye)
    for Lj in L:
        S = S + np.kron(np.conj(Lj), Lj)
    return S


def lindblad_apply(sched: CoefficientSchedule, i: int, rho) -> np.ndarray:
    """Apply the generator of cell ``i`` to ``rho``."""
    rho = np.asarray(rho, dtype=CDTYPE)
    n = sched.dim_h
    if rho.shape != (n, n):
        raise DimensionError(f"rho has shape {rho.shape}, expected ({n}, {n})")
    G = sched.G[i]
    out = G @ rho + rho @ dagger(G)
    for Lj in sched.L[i]:
        out = out + Lj @ rho @ dagger(Lj)
    return out


# -- builtins ------------------------------------------------------------------

_E12 = np.array([[0, 1], [0, 0]], dtype=CDTYPE)  # |e1><e2|
_SZ = np.diag([1.0, -1.0]).astype(CDTYPE)


def _G_from(L: list[np.ndarray], H: np.ndarray) -> np.ndarray:
    K = sum((dagger(Lj) @ Lj for Lj in L), np.zeros_like(H))
    return -1j * H - 0.5 * K


def from_constant(L: list, H=None, t_end: float = 1.0, steps: int = 10, name: str = "custom") -> CoefficientSchedule:
    """Constant schedule with ``G = -i H - 1/2 sum L^dagger L`` (unitary by construction)."""
    L = [np.asarray(x, dtype=CDTYPE) for x in L]
    if H is None:
        n = L[0].shape[0] if L else 2
        H = np.zeros((n, n), dtype=CDTYPE)
    H = np.asarray(H, dtype=CDTYPE)
    n = H.shape[0]
    G = _G_from(L, H)
    grid = TimeGrid(t_end, steps)
    Ls = np.array(L, dtype=CDTYPE).reshape(len(L), n, n)
    return CoefficientSchedule(grid, np.repeat(G[None], steps, 0), np.repeat(Ls[None], steps, 0), name=name)


BUILTIN_NAMES = ("constant-AD", "two-lindblad", "time-ramp", "conservation-demo", "trivial", "switch-on")


def builtin_schedules(name: str, t_end: float = 1.0, steps: int = 10, **params) -> CoefficientSchedule:
    """Named example schedules on ``dim_h = 2``.

    ``constant-AD``
        amplitude damping, ``L_1 = |e1><e2|``, ``G = diag(0, -1/2)``;
        ``gamma`` scales ``L_1`` by ``sqrt(gamma)`` and ``hamiltonian`` adds
        a hermitian part.
    ``two-lindblad``
        ``L_1 = |e1><e2|``, ``L_2 = sigma_z / sqrt 2``.
    ``time-ramp``
        amplitude damping with ``L_1`` scaled by ``sqrt(1 + t/T)``.
    ``conservation-demo``
        amplitude damping plus a scattering phase ``S = exp(i theta)``; not
        Gaussian.
    ``trivial``
        ``G = 0`` and ``noise_dim`` zero coefficients (default 0).
    ``switch-on``
        two-lindblad with ``L_2`` switched on at ``T/2``.
    """
    H = params.get("hamiltonian")
    if name == "constant-AD":
        gamma = float(params.get("gamma", 1.0))
        return from_constant([math.sqrt(gamma) * _E12], H, t_end, steps, name)
    if name == "two-lindblad":
        return from_constant([_E12, _SZ / math.sqrt(2)], H, t_end, steps, name)
    if name == "time-ramp":
        grid = TimeGrid(t_end, steps)
        H = np.zeros((2, 2), dtype=CDTYPE) if H is None else np.asarray(H, dtype=CDTYPE)
        Ls, Gs = [], []
        for i in range(steps):
            Li = math.sqrt(1.0 + grid.time(i) / t_end) * _E12
            Ls.append([Li])
            Gs.append(_G_from([Li], H))
        return CoefficientSchedule(grid, np.array(Gs), np.array(Ls), name=name)
    if name == "conservation-demo":
        theta = float(params.get("theta", math.pi / 2))
        base = from_constant([_E12], H, t_end, steps, name)
        S = np.full((steps, 1, 1), np.exp(1j * theta), dtype=CDTYPE)
        return CoefficientSchedule(base.grid, base.G, base.L, S, name, True, {"theta": theta})
    if name == "trivial":
        d = int(params.get("noise_dim", 0))
        grid = TimeGrid(t_end, steps)
        return CoefficientSchedule(grid, np.zeros((steps, 2, 2)), np.zeros((steps, d, 2, 2)), name=name)
    if name == "switch-on":
        grid = TimeGrid(t_end, steps)
        H = np.zeros((2, 2), dtype=CDTYPE) if H is None else np.asarray(H, dtype=CDTYPE)
        Ls, Gs = [], []
        for i in range(steps):
            on = 1.0 if grid.time(i) >= t_end / 2 - 1e-12 else 0.0
            Li = [_E12, on * _SZ / math.sqrt(2)]
            Ls.append(Li)
            Gs.append(_G_from(Li, H))
        return CoefficientSchedule(grid, np.array(Gs), np.array(Ls), name=name)
    raise ScheduleError(f"unknown builtin schedule {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def scaled_G(sched: CoefficientSchedule, factor: float) -> CoefficientSchedule:
    """Copy with ``G`` multiplied by ``factor`` (breaks unitarity unless factor is 1)."""
    return CoefficientSchedule(sched.grid, sched.G * factor, sched.L, sched.S, sched.name + f"*G{factor:g}", factor == 1.0)


# -- file format -------------------------------------------------------------


def schedule_to_dict(sched: CoefficientSchedule) -> dict:
    out = {
        "dim_h": sched.dim_h,
        "noise_dim": sched.noise_dim,
        "t_end": sched.grid.t_end,
        "steps": sched.grid.steps,
        "G": [matrix_to_dict(g) for g in sched.G],
        "L": [[matrix_to_dict(x) for x in Li] for Li in sched.L],
    }
    if sched.S is not None:
        out["S"] = [matrix_to_dict(s) for s in sched.S]
    return out


def schedule_from_dict(d: dict, name: str = "file") -> CoefficientSchedule:
    """Read a schedule record; a single ``G``/``L``/``S`` entry is held constant."""
    try:
        n = int(d["dim_h"])
        nd = int(d["noise_dim"])
        grid = TimeGrid(float(d["t_end"]), int(d["steps"]))
        G = [matrix_from_dict(x) for x in d["G"]]
        L = [[matrix_from_dict(x) for x in Li] for Li in d.get("L", [[]])]
    except (KeyError, TypeError) as exc:
        raise ScheduleError(f"malformed schedule record: {exc}") from exc
    m = grid.steps

    def stretch(seq, what):
        if len(seq) == 1:
            return list(seq) * m
        if len(seq) != m:
            raise ScheduleError(f"{what} has {len(seq)} entries for {m} steps")
        return list(seq)

    G = np.array(stretch(G, "G"), dtype=CDTYPE)
    L = stretch(L, "L")
    if any(len(Li) != nd for Li in L):
        raise ScheduleError(f"every L entry must list noise_dim={nd} matrices")
    L = np.array(L, dtype=CDTYPE).reshape(m, nd, n, n)
    if G.shape[1:] != (n, n):
        raise ScheduleError(f"G matrices must be {n}x{n}")
    S = None
    if d.get("S") is not None:
        S = np.array(stretch([matrix_from_dict(x) for x in d["S"]], "S"), dtype=CDTYPE)
    sched = CoefficientSchedule(grid, G, L, S, name=name)
    flagged = validate_unitarity(sched)["max_residual"] <= UNITARITY_TOL
    return CoefficientSchedule(grid, G, L, S, name=name, unitary=flagged)


def load_schedule(path) -> CoefficientSchedule:
    with open(path) as fh:
        return schedule_from_dict(json.load(fh), name=str(path))


def dump_schedule(sched: CoefficientSchedule, path) -> None:
    with open(path, "w") as fh:
        json.dump(schedule_to_dict(sched), fh)
