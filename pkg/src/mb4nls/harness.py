"""Experiment drivers: single runs, method comparison, parallel benchmark, order study."""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import GridModel, GridSpec, initial_condition, observables, uniform_state
from .newton import NewtonConfig, NonConvergence
from .reference import MethodId, make_integrator

log = logging.getLogger(__name__)

CSV_HEADER = "t,UK,UI,UE,H,prob,participation,newton_iters,wall_s"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi
    nx: int = 70
    ny: int = 70
    t_end: float = 1.0
    dt: float = 0.01
    gamma: float = 0.1
    v0: float = 0.0
    method: str = "MB4"
    newton_eps: float = 1e-13
    newton_roundoff: float = 10.0
    max_iters: int = 50
    max_halvings: int = 4
    workers: int = 1
    snapshot_times: tuple = ()
    out: str | None = None
    uniform_init: bool = False
    raw_participation: bool = False
    linear_solver: str = "direct"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_end < self.dt:
            raise ConfigError("t_end must be at least dt")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("nx and ny must be at least 2")
        if not 1 <= self.workers <= 3:
            raise ConfigError("workers must be 1, 2 or 3")
        if self.linear_solver not in ("direct", "gmres"):
            raise ConfigError("linear_solver must be 'direct' or 'gmres'")
        try:
            MethodId.parse(self.method)
            self.newton()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def newton(self) -> NewtonConfig:
        return NewtonConfig(self.newton_eps, self.max_iters, self.max_halvings, self.newton_roundoff)

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_end / self.dt * (1 - 1e-12)))


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value):
    kind = _FIELD_TYPES[key]
    if not isinstance(value, str):
        return tuple(value) if kind == "tuple" else value
    value = value.strip()
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "bool":
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if kind == "tuple":
        return tuple(float(v) for v in value.replace(",", " ").split())
    return value or None if key == "out" else value


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines.  ``eps`` is the nonlinearity in the opposite
    sign convention (gamma = -eps) and ``V0`` aliases ``v0``."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "eps":
            key, value = "gamma", str(-float(value))
        elif key == "V0":
            key = "v0"
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    return values


def load_config(path=None, **overrides) -> RunConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    for key, value in overrides.items():
        if value is not None:
            values[key] = _coerce(key, value)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def build_model(cfg: RunConfig) -> GridModel:
    grid = GridSpec(cfg.nx, cfg.ny, cfg.lx, cfg.ly)
    return GridModel.standard(grid, cfg.gamma, cfg.v0)


def initial_state(cfg: RunConfig, grid: GridSpec) -> np.ndarray:
    return uniform_state(grid) if cfg.uniform_init else initial_condition(grid)


@dataclass
class Trajectory:
    rows: list = field(default_factory=list)
    final_state: np.ndarray | None = None
    timings: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        idx = CSV_HEADER.split(",").index(name)
        return np.array([r[idx] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for t, uk, ui, ue, h, prob, part, iters, wall in self.rows:
            vals = [f"{v:.17g}" for v in (t, uk, ui, ue, h, prob, part)]
            lines.append(",".join(vals + [str(iters), f"{wall:.6f}"]))
        return "\n".join(lines) + "\n"

    @property
    def step_seconds(self) -> np.ndarray:
        return self.column("wall_s")[1:]


def relative_drift(values: np.ndarray) -> float:
    """max_t |v(t) - v(0)| / max(1, |v(0)|); inf once the run has blown up."""
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        return math.inf
    return float(np.max(np.abs(values - values[0])) / max(1.0, abs(values[0])))


def write_snapshot(path, t: float, grid: GridSpec, u: np.ndarray) -> None:
    density = (np.abs(u) ** 2).reshape(grid.ny, grid.nx)
    with open(path, "w") as fh:
        fh.write(f"# {t:.17g} {grid.nx} {grid.ny}\n")
        fh.writelines(" ".join(f"{v:.17g}" for v in row) + "\n" for row in density)


def read_snapshot(path) -> tuple[float, np.ndarray]:
    with open(path) as fh:
        t, nx, ny = fh.readline().lstrip("#").split()
        data = np.loadtxt(fh, ndmin=2)
    return float(t), data.reshape(int(ny), int(nx))


def _row(t, model, u, raw, iters, wall):
    o = observables(model, u, raw_participation=raw)
    return (t, o.u_kinetic, o.u_nonlinear, o.u_external, o.total_energy, o.probability,
            o.participation, iters, wall)


def run(cfg: RunConfig, model: GridModel | None = None, u0: np.ndarray | None = None) -> Trajectory:
    """Evolve to t_end, recording observables after every step.

    Writes ``trajectory.csv`` and the requested ``snapshot_<t>.txt`` files when
    ``cfg.out`` is set.
    """
    model = model or build_model(cfg)
    u = initial_state(cfg, model.grid) if u0 is None else np.array(u0, dtype=complex)
    out = Path(cfg.out) if cfg.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    traj = Trajectory()
    pending = sorted(cfg.snapshot_times)

    def maybe_snapshot(t):
        while pending and abs(pending[0] - t) <= 0.5 * cfg.dt:
            s = pending.pop(0)
            traj.snapshots[s] = np.abs(u) ** 2
            if out:
                write_snapshot(out / f"snapshot_{s:g}.txt", t, model.grid, u)
        while pending and pending[0] < t - 0.5 * cfg.dt:
            pending.pop(0)

    traj.rows.append(_row(0.0, model, u, cfg.raw_participation, 0, 0.0))
    maybe_snapshot(0.0)
    integrator = make_integrator(cfg.method, model, cfg.newton(), cfg.workers, cfg.linear_solver)
    try:
        # an unstable explicit run is recorded as it diverges, not aborted
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(1, cfg.n_steps + 1):
                t0 = time.perf_counter()
                try:
                    u, info = integrator.step(u, cfg.dt)
                except NonConvergence as exc:
                    raise NonConvergence(exc.residual, exc.iters, t=(k - 1) * cfg.dt) from exc
                wall = time.perf_counter() - t0
                t = k * cfg.dt
                traj.rows.append(_row(t, model, u, cfg.raw_participation, info.newton_iters, wall))
                log.info("t=%.6g H=%.17g newton=%d halvings=%d %.3fs", t, traj.rows[-1][4],
                         info.newton_iters, info.halvings, wall)
                maybe_snapshot(t)
    finally:
        traj.timings = dict(getattr(integrator, "timings", {}))
        integrator.close()
    traj.final_state = u
    if out:
        (out / "trajectory.csv").write_text(traj.to_csv())
    return traj


@dataclass
class MethodSummary:
    method: str
    energy_drift: float
    probability_drift: float
    step_seconds: float
    newton_iters: float
    failure: str = ""  # NonConvergence message when the run stopped early


@dataclass
class ComparisonReport:
    summaries: dict

    def ratio(self, method: str, baseline: str = "GAUSS2") -> float:
        return self.summaries[method].step_seconds / self.summaries[baseline].step_seconds

    def render(self) -> str:
        lines = [f"{'method':8s} {'energy_drift':>13s} {'prob_drift':>13s} {'s/step':>11s} {'newton/step':>11s}"]
        for s in self.summaries.values():
            lines.append(f"{s.method:8s} {s.energy_drift:13.3e} {s.probability_drift:13.3e} "
                         f"{s.step_seconds:11.4g} {s.newton_iters:11.3g}")
            if s.failure:
                lines.append(f"  {s.method} failed: {s.failure}")
        for m in ("MB4", "AVF4"):
            if m in self.summaries and "GAUSS2" in self.summaries:
                lines.append(f"time {m}/GAUSS2 = {self.ratio(m):.3f}")
        return "\n".join(lines) + "\n"


def compare_methods(cfg: RunConfig, methods=("GAUSS2", "AVF2", "GAUSS4", "AVF4", "MB4", "RK4")) -> ComparisonReport:
    model = build_model(cfg)
    summaries = {}
    for name in methods:
        m = MethodId.parse(name).value
        try:
            traj = run(cfg.replace(method=m, out=None, snapshot_times=()), model)
        except NonConvergence as exc:
            log.warning("%s: %s", m, exc)
            summaries[m] = MethodSummary(m, np.inf, np.inf, np.nan, np.nan, str(exc))
            continue
        summaries[m] = MethodSummary(
            m,
            relative_drift(traj.column("H")),
            relative_drift(traj.column("prob")),
            float(np.mean(traj.step_seconds)),
            float(np.mean(traj.column("newton_iters")[1:])),
        )
    report = ComparisonReport(summaries)
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out) / "report.txt").write_text(report.render())
    return report


@dataclass
class BenchReport:
    serial_step_seconds: float
    parallel_step_seconds: float
    solve_fraction: float
    identical: bool
    workers: int
    cpus: int

    @property
    def speedup(self) -> float:
        return self.serial_step_seconds / self.parallel_step_seconds

    def render(self) -> str:
        return (
            f"cpus available       {self.cpus}\n"
            f"serial s/step        {self.serial_step_seconds:.4g}\n"
            f"{self.workers}-worker s/step     {self.parallel_step_seconds:.4g}\n"
            f"speedup              {self.speedup:.3f}\n"
            f"linear-solve share   {self.solve_fraction:.3f}\n"
            f"bit-identical        {self.identical}\n"
        )


def _identical(a: Trajectory, b: Trajectory) -> bool:
    cols = CSV_HEADER.split(",")[:-1]
    same_rows = all(np.array_equal(a.column(c), b.column(c)) for c in cols)
    return same_rows and np.array_equal(a.final_state, b.final_state)


def parallel_bench(cfg: RunConfig, workers: int = 3) -> BenchReport:
    """Run identical MB4 workloads serially and with ``workers`` stage workers."""
    cfg = cfg.replace(method="MB4", out=None, snapshot_times=())
    model = build_model(cfg)
    serial = run(cfg.replace(workers=1), model)
    parallel = run(cfg.replace(workers=workers), model)
    t_serial = float(np.mean(serial.step_seconds))
    tm = serial.timings
    solve_share = (tm["factor"] + tm["solve"]) / float(np.sum(serial.step_seconds))
    report = BenchReport(t_serial, float(np.mean(parallel.step_seconds)), solve_share,
                         _identical(serial, parallel), workers, len(os.sched_getaffinity(0)))
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out) / "report.txt").write_text(report.render())
    return report


@dataclass
class OrderReport:
    method: str
    h: list
    errors: list
    slope: float

    def render(self) -> str:
        lines = [f"method {self.method}", f"{'h':>10s} {'error':>13s} {'ratio':>8s}"]
        for k, (h, e) in enumerate(zip(self.h, self.errors)):
            ratio = "" if k == 0 else f"{self.errors[k - 1] / e:8.3f}"
            lines.append(f"{h:10.5g} {e:13.4e} {ratio}")
        lines.append(f"fitted order {self.slope:.3f}")
        return "\n".join(lines) + "\n"


def evolve(cfg: RunConfig, model: GridModel, u0: np.ndarray, dt: float) -> np.ndarray:
    steps = max(1, math.ceil(cfg.t_end / dt * (1 - 1e-12)))
    u = u0
    with make_integrator(cfg.method, model, cfg.newton(), 1, cfg.linear_solver) as integ:
        for _ in range(steps):
            u, _ = integ.step(u, dt)
    return u


def convergence_study(cfg: RunConfig, h_list) -> OrderReport:
    """Max-norm errors at t_end against the same method at min(h)/8, and the log-log slope."""
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3 or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ConfigError("h_list must be strictly descending with at least 3 entries")
    model = build_model(cfg)
    u0 = initial_state(cfg, model.grid)
    ref = evolve(cfg, model, u0, h_list[-1] / 8)
    errors = [float(np.max(np.abs(evolve(cfg, model, u0, h) - ref))) for h in h_list]
    slope = float(np.polyfit(np.log(h_list), np.log(errors), 1)[0])
    report = OrderReport(MethodId.parse(cfg.method).value, h_list, errors, slope)
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out) / "report.txt").write_text(report.render())
    return report
