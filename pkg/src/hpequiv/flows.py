"""Vacuum expectation flows ``T_{s,t}``, trace flows ``Z_{s,t}`` and their generators.

Works with any backend exposing ``T(s, t)``, ``Z(s, t)`` on grid indices plus
``grid``/``dim_h`` (the toy Fock process and the ODE backend both do).
Superoperators act on column-stacked density matrices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from hpequiv.errors import ScheduleError
from hpequiv.operator_core import CDTYPE, apply_superop, op_norm, trace_norm
from hpequiv.schedule import TimeGrid


def extract_T(process, s: int, t: int) -> np.ndarray:
    """``<u, T_{s,t} v> = <Omega, U_{s,t}(u, v) Omega>``."""
    return np.asarray(process.T(s, t), dtype=CDTYPE)


def extract_Z(process, s: int, t: int) -> np.ndarray:
    """Superoperator with ``<p, Z(|w><v|) u> = <U(u, v) Omega, U(p, w) Omega>``."""
    return np.asarray(process.Z(s, t), dtype=CDTYPE)


@dataclass
class FlowSnapshot:
    """Lazily filled table of flow values on grid pairs, plus generators.

    ``values[(i, j)]`` holds ``T_{t_i, t_j}`` (kind ``"T"``) or the
    superoperator of ``Z_{t_i, t_j}`` (kind ``"Z"``).
    """

    kind: str
    grid: TimeGrid
    source: Callable[[int, int], np.ndarray] = field(repr=False)
    side: int
    values: dict = field(default_factory=dict, repr=False)
    generator: dict = field(default_factory=dict, repr=False)
    fd_step: float | None = None

    def value(self, i: int, j: int) -> np.ndarray:
        if not 0 <= i <= j <= self.grid.steps:
            raise ScheduleError(f"pair ({i}, {j}) is not an ordered grid pair")
        if (i, j) not in self.values:
            self.values[(i, j)] = np.eye(self.side, dtype=CDTYPE) if i == j else self.source(i, j)
        return self.values[(i, j)]

    def fill(self, max_span: int | None = None) -> "FlowSnapshot":
        m = self.grid.steps
        span = m if max_span is None else max_span
        for i in range(m + 1):
            for j in range(i, min(m, i + span) + 1):
                self.value(i, j)
        return self


def snapshot(process, kind: str) -> FlowSnapshot:
    n = process.dim_h
    if kind == "T":
        return FlowSnapshot("T", process.grid, lambda i, j: extract_T(process, i, j), n)
    if kind == "Z":
        return FlowSnapshot("Z", process.grid, lambda i, j: extract_Z(process, i, j), n * n)
    raise ValueError(f"unknown flow kind {kind!r}")


def fd_cells(grid: TimeGrid, h: float) -> int:
    k = h / grid.tau
    if k < 1 - 1e-9 or abs(k - round(k)) > 1e-6:
        raise ScheduleError(f"fd step {h} is not a positive multiple of tau={grid.tau}")
    return int(round(k))


def fd_generator(flow: FlowSnapshot, t: int, h: float, richardson: bool = False) -> np.ndarray:
    """Forward difference ``(S_{t,t+h} - 1)/h``; with ``richardson`` use ``2 D(h/2) - D(h)``."""
    k = fd_cells(flow.grid, h)
    if t + k > flow.grid.steps:
        raise ScheduleError(f"t + h exceeds the grid end (t index {t}, {k} cells)")
    eye = np.eye(flow.side, dtype=CDTYPE)
    D = (flow.value(t, t + k) - eye) / h
    if richardson:
        if k % 2:
            raise ScheduleError("Richardson step needs h/2 on the grid")
        D2 = (flow.value(t, t + k // 2) - eye) / (h / 2)
        D = 2 * D2 - D
    flow.generator[t] = D
    flow.fd_step = h
    return D


def generators(flow: FlowSnapshot, h: float, richardson: bool = False) -> dict[int, np.ndarray]:
    """Generator at every grid cell; cells closer than ``h`` to the end hold the last one."""
    k = fd_cells(flow.grid, h)
    m = flow.grid.steps
    if k > m:
        raise ScheduleError(f"fd step {h} longer than the grid")
    out = {i: fd_generator(flow, i, h, richardson) for i in range(m - k + 1)}
    for i in range(m - k + 1, m):
        out[i] = out[m - k]
    flow.generator.update(out)
    return out


def integral_residual(flow: FlowSnapshot, generator, s: int, t: int) -> float:
    """``|| S_{s,t} - 1 - sum_i S_{s,t_i} gen(t_i) tau ||`` (left Riemann sum)."""
    gen = generator if callable(generator) else generator.__getitem__
    acc = flow.value(s, t) - np.eye(flow.side, dtype=CDTYPE)
    for i in range(s, t):
        acc = acc - flow.value(s, i) @ gen(i) * flow.grid.tau
    return op_norm(acc)


def regularity_constant(flow: FlowSnapshot, max_span: int | None = None) -> float:
    """``max ||S_{s,t} - 1|| / (t - s)`` over grid pairs with span at most ``max_span`` cells."""
    m = flow.grid.steps
    span = m if max_span is None else max_span
    eye = np.eye(flow.side, dtype=CDTYPE)
    best = 0.0
    for i in range(m):
        for j in range(i + 1, min(m, i + span) + 1):
            best = max(best, op_norm(flow.value(i, j) - eye) / (flow.grid.tau * (j - i)))
    return best


def random_pure_states(n: int, count: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        psi = rng.normal(size=n) + 1j * rng.normal(size=n)
        psi /= np.linalg.norm(psi)
        out.append(np.outer(psi, psi.conj()))
    return out


def z_probe_report(Z: np.ndarray, n: int, count: int = 50, seed: int = 0) -> dict:
    """Trace preservation, positivity and ``||Z - 1||_1`` on random pure states."""
    trace_err, min_eig, dist = 0.0, np.inf, 0.0
    for rho in random_pure_states(n, count, seed):
        out = apply_superop(Z, rho)
        trace_err = max(trace_err, abs(np.trace(out) - 1.0))
        min_eig = min(min_eig, float(np.linalg.eigvalsh((out + out.conj().T) / 2).min()))
        dist = max(dist, trace_norm(out - rho))
    return {"trace_residual": trace_err, "min_eigenvalue": min_eig, "trace_distance": dist}


def emission_norm_residual(process, s: int, t: int, w) -> float:
    """``| sum_k ||(U_{s,t} - 1)(e_k, w) Omega||^2 - 2 Re <w, (1 - T_{s,t}) w> |`` on a toy process."""
    w = np.asarray(w, dtype=CDTYPE)
    psi = process.window_states(s, t)  # [v, u, x]
    vec = np.einsum("v,vux->ux", w, psi)
    vec[:, 0] -= w  # subtract <e_k, w> Omega
    lhs = float(np.sum(np.abs(vec) ** 2))
    T = psi[:, :, 0].T
    rhs = 2 * np.real(np.vdot(w, w - T @ w))
    return abs(lhs - rhs)


def dump_flow_csv(flow: FlowSnapshot, path, pairs=None) -> None:
    """Rows ``s, t, entry_index, re, im`` with row-major entry index."""
    pairs = sorted(flow.values) if pairs is None else pairs
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "t", "entry_index", "re", "im"])
        for i, j in pairs:
            vals = flow.value(i, j).reshape(-1)
            for k, z in enumerate(vals):
                wr.writerow([f"{flow.grid.time(i):.12g}", f"{flow.grid.time(j):.12g}", k, repr(float(z.real)), repr(float(z.imag))])
