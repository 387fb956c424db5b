"""Batch front end: ``hpequiv <pipeline> [flags]`` or ``hpequiv run --config scenario.json``.

Exit codes: 0 ok, 2 configuration error, 3 size cap exceeded,
4 kernel not positive / process not Gaussian, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from hpequiv.elements import ElementBackend
from hpequiv.errors import CapError, HPError, KernelError
from hpequiv.flows import (
    dump_flow_csv,
    generators,
    integral_residual,
    regularity_constant,
    snapshot,
    z_probe_report,
)
from hpequiv.lab import (
    check_A,
    check_B,
    check_D_minimality,
    correlated_reference,
    correlation_equivalence,
    dump_battery_csv,
    dump_reports,
    gaussianity_probe,
    random_battery,
    standard_probe_word,
)
from hpequiv.noise import dump_fibers, gauge_align, reconstruct, recover_L
from hpequiv.operator_core import matrix_to_dict, op_norm
from hpequiv.schedule import BUILTIN_NAMES, builtin_schedules, load_schedule
from hpequiv.toyfock import build_process

log = logging.getLogger("hpequiv")

PIPELINES = ("simulate", "extract", "reconstruct", "verify", "roundtrip", "convergence")
EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_KERNEL, EXIT_VERIFY = 0, 2, 3, 4, 5

# reconstruction needs short cells; flow pipelines look at a unit time window
GRID_DEFAULTS = {
    "simulate": (1.0, 10),
    "extract": (1.0, 10),
    "convergence": (1.0, 10),
    "reconstruct": (0.08, 8),
    "verify": (0.08, 8),
    "roundtrip": (0.08, 8),
}


class ConfigError(HPError):
    pass


@dataclass
class ScenarioConfig:
    schedule: str = "constant-AD"
    pipeline: str = "simulate"
    steps: int | None = None
    t_end: float | None = None
    fd_step: float | None = None
    seed: int = 0
    out: str = "out"
    scramble: bool = False
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}; choose from {', '.join(PIPELINES)}")
        t_end, steps = GRID_DEFAULTS[self.pipeline]
        self.t_end = t_end if self.t_end is None else float(self.t_end)
        self.steps = steps if self.steps is None else int(self.steps)
        if self.t_end <= 0 or self.steps <= 0:
            raise ConfigError("t_end and steps must be positive")
        tol = {"equivalence": 1e-3, "structural": 1e-10, "norm_identity": None}
        tol.update(self.tolerances)
        if any(v is not None and v <= 0 for v in tol.values()):
            raise ConfigError("tolerances must be positive")
        self.tolerances = tol
        if self.fd_step is None:
            self.fd_step = 4 * self.t_end / self.steps

    def load(self):
        if self.schedule in BUILTIN_NAMES:
            return builtin_schedules(self.schedule, t_end=self.t_end, steps=self.steps)
        path = Path(self.schedule)
        if not path.exists():
            raise ConfigError(f"{self.schedule!r} is neither a builtin ({', '.join(BUILTIN_NAMES)}) nor a file")
        try:
            return load_schedule(path)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read schedule {path}: {exc}") from exc


def _write_json(path: Path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_plain)
        fh.write("\n")


def _plain(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def cmd_simulate(cfg: ScenarioConfig, out: Path) -> int:
    sched = cfg.load()
    proc = build_process(sched)
    ode = ElementBackend(sched)
    m = sched.grid.steps
    pairs = [(0, j) for j in range(m + 1)]
    for kind, name in (("T", "t_flow.csv"), ("Z", "z_flow.csv")):
        flow = snapshot(proc, kind)
        dump_flow_csv(flow, out / name, pairs)
    c = np.full((m, sched.noise_dim), 0.5)
    with open(out / "elements.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["kind", "t", "entry_index", "toy_re", "toy_im", "ode_re", "ode_im", "deviation"])
        for j in range(1, m + 1):
            rows = [("T", proc.T(0, j), ode.T(0, j)), ("Z", proc.Z(0, j), ode.Z(0, j))]
            if sched.noise_dim:
                rows.append(("E", proc.exponential_element(c, c, 0, j), ode.exponential_element(c, c, 0, j)))
            for kind, a, b in rows:
                for k, (x, y) in enumerate(zip(a.reshape(-1), b.reshape(-1))):
                    wr.writerow([kind, f"{sched.grid.time(j):.12g}", k, repr(x.real), repr(x.imag),
                                 repr(y.real), repr(y.imag), repr(abs(x - y))])
    log.info("simulate: wrote t_flow.csv, z_flow.csv, elements.csv to %s", out)
    return EXIT_OK


def cmd_extract(cfg: ScenarioConfig, out: Path) -> int:
    sched = cfg.load()
    proc = build_process(sched)
    report = {"fd_step": cfg.fd_step, "tau": sched.tau}
    with open(out / "generators.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["kind", "t", "entry_index", "re", "im"])
        for kind in ("T", "Z"):
            flow = snapshot(proc, kind)
            gens = generators(flow, cfg.fd_step)
            for i in range(sched.grid.steps):
                for k, z in enumerate(gens[i].reshape(-1)):
                    wr.writerow([kind, f"{sched.grid.time(i):.12g}", k, repr(z.real), repr(z.imag)])
            report[kind] = {
                "integral_residual": integral_residual(flow, gens, 0, sched.grid.steps),
                "regularity_constant": regularity_constant(flow),
            }
            dump_flow_csv(flow, out / f"{kind.lower()}_flow.csv")
        report["Z"]["probe"] = z_probe_report(proc.Z(0, sched.grid.steps), sched.dim_h, seed=cfg.seed)
    report["sup_norm_G"] = sched.sup_norm_G()
    _write_json(out / "extract_report.json", report)
    log.info("extract: generators.csv, extract_report.json written")
    return EXIT_OK


def _gaussianity(proc):
    """Probe at ``s = 0`` over the largest span of 4k cells that fits, or ``None`` on short grids."""
    cells = min(8, proc.m) // 4 * 4
    if cells < 4 or proc.dim_h < 2:
        return None
    us, vs = standard_probe_word(proc.dim_h)
    return gaussianity_probe(proc, us, vs, cells=cells)


def cmd_reconstruct(cfg: ScenarioConfig, out: Path) -> int:
    sched = cfg.load()
    proc = build_process(sched)
    probe = _gaussianity(proc)
    gaussian = sched.gaussian and (probe is None or probe.passed)
    rec = reconstruct(proc, cfg.fd_step)
    dump_fibers(rec.field.fibers, out / "fibers.json")
    _write_json(out / "L_rec.json", [
        {"t": f.t, "L": [matrix_to_dict(Lj) for Lj in recover_L(f)]} for f in rec.field.fibers])
    gauge = []
    for i, fib in enumerate(rec.field.fibers):
        ref = [Lj for Lj in sched.L[i] if np.abs(Lj).max() > 0]
        try:
            _, res = gauge_align(recover_L(fib), ref)
        except HPError:
            res = None
        gauge.append(res)
    report = {
        "d": [f.d for f in rec.field.fibers],
        "partition": {str(k): v for k, v in sorted(rec.field.partition.items())},
        "gauge_residual": gauge,
        "norm_identity_residual": list(rec.norm_residuals),
        "fd_step": cfg.fd_step,
        "gaussian": gaussian,
        "gaussianity_probe": None if probe is None else {"slope": probe.slope, "abs_q": [abs(x) for x in probe.q]},
    }
    _write_json(out / "reconstruct_report.json", report)
    if not gaussian:
        log.error("reconstruct: Gaussianity check failed; kernel limits do not describe this process")
        return EXIT_KERNEL
    log.info("reconstruct: d(t) = %s", report["d"])
    return EXIT_OK


def _roundtrip(cfg: ScenarioConfig, proc):
    rec = reconstruct(proc, cfg.fd_step)
    rebuilt = build_process(rec.rebuilt_schedule(), max_window=proc.max_window)
    specs = random_battery(proc.m, proc.dim_h, 50, 3, seed=cfg.seed)
    return correlation_equivalence(proc, rebuilt, specs)


def _nontrivial(sched) -> bool:
    return bool(np.abs(sched.L).max(initial=0.0) > 0 or np.abs(sched.G).max(initial=0.0) > 0)


def cmd_verify(cfg: ScenarioConfig, out: Path) -> int:
    sched = cfg.load()
    proc = build_process(sched)
    if cfg.scramble:
        proc = proc.scrambled()
    reports = list(check_A(proc, seed=cfg.seed))
    reports.append(check_B(proc))
    probe = _gaussianity(proc)
    if probe is not None:
        reports.append(probe.to_report())
    gating = {r.assumption for r in reports}
    small = proc.restrict(min(proc.m, 4))
    if small.fock_dim <= 4096:
        reports.append(check_D_minimality(small, n_max=small.m, seed=cfg.seed))
        if _nontrivial(sched):
            gating.add("D")
    controls = []
    if _nontrivial(sched) and not cfg.scramble:
        scr = check_A(proc.scrambled(), seed=cfg.seed)[0]
        controls.append(("scrambled order breaks A1", scr))
        if sched.noise_dim and np.abs(sched.L).max() > 0:
            ref = proc.restrict(min(proc.m, proc.max_window))
            bad = check_A(ref.with_reference(correlated_reference(ref)), seed=cfg.seed)[2]
            controls.append(("correlated reference breaks A2ii", bad))
    cons = build_process(builtin_schedules("conservation-demo", t_end=0.08, steps=8))
    us, vs = standard_probe_word(2)
    controls.append(("conservation noise breaks C", gaussianity_probe(cons, us, vs, cells=8).to_report()))

    dev, devs = _roundtrip(cfg, proc) if not cfg.scramble else (float("nan"), [])
    tol = cfg.tolerances["equivalence"]
    ok = all(r.passed for r in reports if r.assumption in gating)
    ok = ok and all(not r.passed for _, r in controls)
    ok = ok and (cfg.scramble or dev <= tol)
    extra = {
        "negative_controls": [dict(r.to_dict(), label=label) for label, r in controls],
        "equivalence": {"max_deviation": dev, "tolerance": tol, "specs": len(devs)},
        "gating": sorted(gating),
        "ok": bool(ok),
    }
    dump_reports(reports, out / "verify_report.json", extra)
    if devs:
        dump_battery_csv(devs, out / "battery.csv")
    for r in reports:
        log.info("%-4s violation %.3e  %s", r.assumption, r.max_violation, "pass" if r.passed else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_roundtrip(cfg: ScenarioConfig, out: Path) -> int:
    sched = cfg.load()
    proc = build_process(sched)
    dev, devs = _roundtrip(cfg, proc)
    tol = cfg.tolerances["equivalence"]
    dump_battery_csv(devs, out / "battery.csv")
    _write_json(out / "roundtrip_report.json", {"max_deviation": dev, "tolerance": tol, "specs": len(devs),
                                                "fd_step": cfg.fd_step, "ok": bool(dev <= tol)})
    log.info("roundtrip: max deviation %.3e (tolerance %.1e)", dev, tol)
    return EXIT_OK if dev <= tol else EXIT_VERIFY


def cmd_convergence(cfg: ScenarioConfig, out: Path, levels: int = 4) -> int:
    rows = []
    for lv in range(levels):
        c = replace(cfg, steps=cfg.steps * 2**lv, fd_step=None)
        sched = c.load()
        proc, ode = build_process(sched), ElementBackend(sched)
        m = sched.grid.steps
        f = np.full((m, sched.noise_dim), 0.5)
        dev = op_norm(proc.T(0, m) - ode.T(0, m))
        if sched.noise_dim:
            dev = max(dev, op_norm(proc.exponential_element(f, f) - ode.exponential_element(f, f)))
        rows.append((sched.tau, dev))
    with open(out / "convergence.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["tau", "max_deviation", "ratio"])
        for k, (tau, dev) in enumerate(rows):
            ratio = "" if k == 0 or dev == 0 else repr(rows[k - 1][1] / dev)
            wr.writerow([repr(tau), repr(dev), ratio])
    log.info("convergence: %s", ", ".join(f"{tau:.3g}:{dev:.3e}" for tau, dev in rows))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "extract": cmd_extract,
    "reconstruct": cmd_reconstruct,
    "verify": cmd_verify,
    "roundtrip": cmd_roundtrip,
    "convergence": cmd_convergence,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schedule", help="builtin name or schedule JSON file")
    p.add_argument("--steps", type=int)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--fd-step", type=float, dest="fd_step")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--scramble", action="store_true", default=None, help="verify the slice-scrambled process")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpequiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        _add_common(sub.add_parser(name, help=f"run the {name} pipeline"))
    run = sub.add_parser("run", help="run a scenario from a JSON config; flags override it")
    run.add_argument("--config")
    run.add_argument("--pipeline", choices=PIPELINES)
    _add_common(run)
    return parser


def config_from_args(args) -> ScenarioConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if args.command != "run":
        data["pipeline"] = args.command
    elif args.pipeline:
        data["pipeline"] = args.pipeline
    for key in ("schedule", "steps", "t_end", "fd_step", "seed", "out", "scramble"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    unknown = set(data) - set(ScenarioConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ScenarioConfig(**data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        cfg = config_from_args(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[cfg.pipeline](cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except CapError as exc:
        log.error("cap exceeded: %s", exc)
        return EXIT_CAP
    except KernelError as exc:
        log.error("kernel not positive (input is not a Gaussian unitary process): %s", exc)
        return EXIT_KERNEL
    except HPError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
