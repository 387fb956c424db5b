"""Executable checks of the structural assumptions and the correlation-equivalence certificate.

Every sampler takes an explicit seed, so reports are reproducible bit for bit.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from hpequiv.errors import CapError, DimensionError, ScheduleError
from hpequiv.flows import regularity_constant, snapshot
from hpequiv.operator_core import CDTYPE
from hpequiv.toyfock import MAX_DENSE, ToyFockProcess, check_ordered, multi_interval_vector

STRUCTURAL_TOL = 1e-10
SLOPE_BAND = (0.8, 1.2)


@dataclass
class AssumptionReport:
    assumption: str
    max_violation: float
    samples: int
    threshold: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.threshold)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pass"] = self.passed
        return out


def _unit(rng, n: int) -> np.ndarray:
    x = rng.normal(size=n) + 1j * rng.normal(size=n)
    return x / np.linalg.norm(x)


def _random_state(rng, shape) -> np.ndarray:
    x = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return x / np.linalg.norm(x)


def _ordered_intervals(rng, lo: int, hi: int, count: int) -> tuple[list[int], list[int]]:
    pts = np.sort(rng.integers(lo, hi + 1, size=2 * count))
    return [int(x) for x in pts[0::2]], [int(x) for x in pts[1::2]]


def check_A(process: ToyFockProcess, samples: int = 20, seed: int = 0) -> tuple[AssumptionReport, ...]:
    """Evolution law (A1), commuting compressions (A2i) and vacuum factorization (A2ii)."""
    rng = np.random.default_rng(seed)
    n, q, m = process.dim_h, process.q, process.m
    w = min(m, process.max_window)

    a1 = 0.0
    for _ in range(samples):
        r = int(rng.integers(0, m - w + 1))
        a, b = sorted(int(x) for x in rng.integers(r, r + w + 1, size=2))
        state = _random_state(rng, (n,) + (q,) * w)
        two = process.apply_local(r, a, process.apply_local(a, b, state, r), r)
        one = process.apply_local(r, b, state, r)
        a1 = max(a1, float(np.linalg.norm(two - one)))

    a2i = 0.0
    for _ in range(samples):
        r = int(rng.integers(0, m - w + 1))
        s, t = _ordered_intervals(rng, r, r + w, 2)
        u1, v1, u2, v2 = (_unit(rng, n) for _ in range(4))
        phi = _random_state(rng, (q,) * w)
        xy = process.compressed_local(s[0], t[0], u1, v1, process.compressed_local(s[1], t[1], u2, v2, phi, r), r)
        yx = process.compressed_local(s[1], t[1], u2, v2, process.compressed_local(s[0], t[0], u1, v1, phi, r), r)
        a2i = max(a2i, float(np.linalg.norm(xy - yx)))

    full = process if m <= process.max_window else process.restrict(process.max_window)
    om = full.vacuum()
    a2ii = 0.0
    for _ in range(samples):
        c = int(rng.integers(1, full.m))
        words = []
        for lo, hi in ((0, c), (c, full.m)):
            k = int(rng.integers(1, 4))
            s, t = _ordered_intervals(rng, lo, hi, k)
            words.append((s, t, [_unit(rng, n) for _ in range(k)], [_unit(rng, n) for _ in range(k)],
                          [int(x) for x in rng.integers(0, 2, size=k)]))
        X, Y = words
        joint = multi_interval_vector(full, *(x + y for x, y in zip(X, Y)))
        ex = np.vdot(om, multi_interval_vector(full, *X))
        ey = np.vdot(om, multi_interval_vector(full, *Y))
        a2ii = max(a2ii, abs(np.vdot(om, joint) - ex * ey))

    return (
        AssumptionReport("A1", a1, samples, STRUCTURAL_TOL),
        AssumptionReport("A2i", a2i, samples, STRUCTURAL_TOL),
        AssumptionReport("A2ii", float(a2ii), samples, STRUCTURAL_TOL),
    )


def correlated_reference(process: ToyFockProcess) -> np.ndarray:
    """``(|0...0> + |1...1>)/sqrt(2)``: a reference vector correlated across all slices."""
    if process.q < 2:
        raise DimensionError("a correlated reference needs at least one noise mode")
    v = np.zeros(process.fock_dim, dtype=CDTYPE)
    v[0] = 1.0
    v[sum(process.q**k for k in range(process.m))] = 1.0
    return v / np.sqrt(2)


def check_B(process, max_span: int = 1, refine_tol: float = 0.1) -> AssumptionReport:
    """Regularity constant ``sup ||T_{s,t} - 1|| / (t - s)`` over short spans.

    The violation is the relative change of the constant when the span window
    is doubled; the constant itself is ``details["C"]``.
    """
    flow = snapshot(process, "T")
    c1 = regularity_constant(flow, max_span)
    c2 = regularity_constant(flow, min(2 * max_span, process.grid.steps))
    scale = max(c1, c2)
    drift = 0.0 if scale == 0.0 else abs(c1 - c2) / scale
    if not math.isfinite(c1):
        drift = math.inf
    return AssumptionReport("B", drift, process.grid.steps, refine_tol, {"C": c1, "C_wide": c2})


@dataclass
class GaussianityReport:
    spans: list[float]
    q: list[complex]
    slope: float
    band: tuple[float, float] = SLOPE_BAND

    @property
    def trivial(self) -> bool:
        return all(abs(x) == 0.0 for x in self.q)

    @property
    def passed(self) -> bool:
        return self.trivial or self.band[0] <= self.slope <= self.band[1]

    def to_report(self) -> AssumptionReport:
        viol = 0.0 if self.trivial else abs(self.slope - 1.0)
        return AssumptionReport("C", viol, len(self.spans), self.band[1] - 1.0,
                                {"spans": self.spans, "abs_q": [abs(x) for x in self.q], "slope": self.slope})


def third_cumulant(process: ToyFockProcess, us, vs, eps, s: int, cells: int) -> complex:
    """``(t - s)^{-1} <Omega, prod_k (U^{(eps_k)}_{s,t} - 1)(u_k, v_k) Omega>`` with ``t = s + cells``."""
    if process.reference is not None:
        raise ScheduleError("the Gaussianity probe needs the product vacuum")
    phi = np.zeros((process.q,) * cells, dtype=CDTYPE)
    phi[(0,) * cells] = 1.0
    for k in reversed(range(len(us))):
        phi = process.compressed_local(s, s + cells, us[k], vs[k], phi, s, eps[k]) - np.vdot(us[k], vs[k]) * phi
    return complex(phi[(0,) * cells] / (cells * process.tau))


def gaussianity_probe(process: ToyFockProcess, us, vs, eps=(0, 0, 0), s: int = 0, cells: int = 8,
                      levels: int = 3) -> GaussianityReport:
    """``q`` at spans of ``cells, cells/2, ...`` and its log-log slope."""
    if len(us) != 3 or len(vs) != 3 or len(eps) != 3:
        raise DimensionError("the probe word must have length 3")
    spans = [cells // 2**j for j in range(levels)]
    if spans[-1] < 1 or any(cells % 2**j for j in range(levels)):
        raise ScheduleError(f"{cells} cells cannot be halved {levels - 1} times on the grid")
    q = [third_cumulant(process, us, vs, eps, s, c) for c in spans]
    times = [c * process.tau for c in spans]
    mag = np.abs(q)
    if np.all(mag > 0):
        slope = float(np.polyfit(np.log(times), np.log(mag), 1)[0])
    else:
        slope = math.nan
    return GaussianityReport(times, q, slope)


def standard_probe_word(n: int):
    """Word that emits, scatters and reabsorbs one quantum when ``L`` maps ``e_2`` to ``e_1``."""
    e = np.eye(n, dtype=CDTYPE)
    us = [e[1], e[0], e[0]]
    vs = [e[0], e[0], e[1]]
    return us, vs


def interval_net(m: int, length: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All ordered tuples of ``length`` non-empty disjoint grid intervals in ``[0, m]``."""
    out = []

    def grow(start, s, t):
        if len(s) == length:
            out.append((tuple(s), tuple(t)))
            return
        for a in range(start, m):
            for b in range(a + 1, m + 1):
                grow(b, s + [a], t + [b])

    grow(0, [], [])
    return out


def check_D_minimality(process: ToyFockProcess, n_max: int = 2, seed: int = 0, budget: int = 20000,
                       rank_tol: float = 1e-10) -> AssumptionReport:
    """Rank of multi-interval vectors (up to ``n_max`` intervals) against the Fock dimension.

    The sampling net is every ordered tuple of disjoint intervals combined with
    every choice of basis vectors ``u_k, v_k`` (adjoint flags drawn from the
    seed). A level exceeding ``budget`` vectors is subsampled. Vectors of
    lower levels are kept, so the rank is monotone in ``n_max``.
    """
    if process.fock_dim > MAX_DENSE:
        raise CapError(f"Fock dimension {process.fock_dim} exceeds the dense cap {MAX_DENSE}")
    n, m = process.dim_h, process.m
    e = np.eye(n, dtype=CDTYPE)
    vecs = []
    ranks = []
    for level in range(1, n_max + 1):
        rng = np.random.default_rng([seed, level])
        combos = list(itertools.product(range(n), repeat=2 * level))
        items = [(iv, c) for iv in interval_net(m, level) for c in combos]
        if len(items) > budget:
            items = [items[i] for i in np.sort(rng.choice(len(items), budget, replace=False))]
        for (s, t), c in items:
            eps = [int(x) for x in rng.integers(0, 2, size=level)]
            vecs.append(multi_interval_vector(process, s, t, [e[i] for i in c[:level]], [e[i] for i in c[level:]], eps))
        if vecs:
            sv = np.linalg.svd(np.array(vecs), compute_uv=False)
            ranks.append(int(np.sum(sv > rank_tol * sv[0])) if sv[0] > 0 else 0)
        else:
            ranks.append(0)
    rank = ranks[-1] if ranks else 0
    return AssumptionReport("D", float(process.fock_dim - rank), len(vecs), 0.0,
                            {"rank": rank, "fock_dim": process.fock_dim, "ranks_by_level": ranks})


@dataclass(frozen=True)
class Word:
    s: tuple[int, ...]
    t: tuple[int, ...]
    u: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    eps: tuple[int, ...]

    def __post_init__(self):
        check_ordered(self.s, self.t)

    def vector(self, process: ToyFockProcess) -> np.ndarray:
        return multi_interval_vector(process, self.s, self.t, self.u, self.v, self.eps)


@dataclass(frozen=True)
class CorrelationSpec:
    left: Word
    right: Word

    def value(self, process: ToyFockProcess) -> complex:
        return complex(np.vdot(self.left.vector(process), self.right.vector(process)))


def random_word(rng, m: int, n: int, max_len: int = 3) -> Word:
    k = int(rng.integers(1, max_len + 1))
    s, t = _ordered_intervals(rng, 0, m, k)
    return Word(tuple(s), tuple(t), tuple(_unit(rng, n) for _ in range(k)), tuple(_unit(rng, n) for _ in range(k)),
                tuple(int(x) for x in rng.integers(0, 2, size=k)))


def random_battery(m: int, n: int, count: int = 50, max_len: int = 3, seed: int = 0) -> list[CorrelationSpec]:
    rng = np.random.default_rng(seed)
    return [CorrelationSpec(random_word(rng, m, n, max_len), random_word(rng, m, n, max_len)) for _ in range(count)]


def refine_battery(specs: Sequence[CorrelationSpec], factor: int) -> list[CorrelationSpec]:
    """Same time intervals on a grid ``factor`` times finer."""
    def scale(w: Word) -> Word:
        return Word(tuple(factor * x for x in w.s), tuple(factor * x for x in w.t), w.u, w.v, w.eps)

    return [CorrelationSpec(scale(sp.left), scale(sp.right)) for sp in specs]


def correlation_equivalence(proc_a: ToyFockProcess, proc_b: ToyFockProcess,
                            specs: Sequence[CorrelationSpec]) -> tuple[float, list[float]]:
    """Max and per-spec ``|<A-side> - <B-side>|`` over the battery."""
    if proc_a.dim_h != proc_b.dim_h or proc_a.m != proc_b.m:
        raise DimensionError("processes must share dim_h and grid")
    devs = [abs(spec.value(proc_a) - spec.value(proc_b)) for spec in specs]
    return (max(devs) if devs else 0.0), devs


def dump_reports(reports: Sequence[AssumptionReport], path, extra: dict | None = None) -> None:
    payload = {"reports": [r.to_dict() for r in reports]}
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def dump_battery_csv(devs: Sequence[float], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["spec_id", "deviation"])
        for i, d in enumerate(devs):
            wr.writerow([i, repr(float(d))])
