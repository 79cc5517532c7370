"""Config-driven experiments: coexistence, exclusion, initial-location sensitivity.

A :class:`ScenarioConfig` is plain data and round-trips through JSON.
:func:`run_scenario` ties the solver and diagnostics together and writes
CSV/JSON outputs.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .diagnostics import (AsymptoticReport, AuditReport, DiagnosticsRecord, asymptotic_report,
                          dissipation_audit, energy, record, write_histogram, write_report,
                          write_timeseries)
from .errors import MassMismatch
from .grid import LENGTH, Field, PeriodicGrid, l1_norm, mean
from .kernel import BaseKernel, PeriodizedKernel, periodize, velocity
from .reaction import ReactionModel, reaction_from_dict
from .solver import RunStats, SimState, SolverConfig, run

log = logging.getLogger(__name__)

FIGURE_TIMES = (0.0, 5.0, 10.0, 20.0, 50.0, 100.0)
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(8)


@dataclass
class InitialProfile:
    """One additive piece of an initial density.

    kinds: ``bump`` (cosine-squared, full support ``width`` around ``center``),
    ``step`` (``height`` on the periodic arc from ``left`` to ``right``),
    ``constant`` (``value``) and ``tabulated`` (two-column CSV at ``path``,
    linearly interpolated, periodic).
    """

    kind: str
    center: float | None = None
    width: float | None = None
    height: float | None = None
    left: float | None = None
    right: float | None = None
    value: float | None = None
    path: str | None = None

    def __post_init__(self):
        need = {"bump": ("center", "width", "height"), "step": ("left", "right", "height"),
                "constant": ("value",), "tabulated": ("path",)}
        if self.kind not in need:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        for k in need[self.kind]:
            if getattr(self, k) is None:
                raise ValueError(f"{self.kind} profile needs {k!r}")
        if (self.height is not None and self.height < 0) or (self.value is not None and self.value < 0):
            raise ValueError("profile heights must be nonnegative")
        if self.kind == "bump" and not (0 < self.width <= LENGTH):
            raise ValueError("bump width must lie in (0, 2*pi]")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if self.kind == "bump":
            d = np.mod(x - self.center + np.pi, LENGTH) - np.pi
            return np.where(np.abs(d) < self.width / 2, self.height * np.cos(np.pi * d / self.width) ** 2, 0.0)
        if self.kind == "step":
            span = np.mod(self.right - self.left, LENGTH)
            return np.where(np.mod(x - self.left, LENGTH) < span, self.height, 0.0)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        xs, us = _read_table(self.path)
        return np.interp(np.mod(x, LENGTH), xs, us, period=LENGTH)

    def shifted(self, offset: float) -> "InitialProfile":
        if self.kind == "bump":
            return replace(self, center=float(np.mod(self.center + offset, LENGTH)))
        if self.kind == "step":
            return replace(self, left=float(np.mod(self.left + offset, LENGTH)),
                           right=float(np.mod(self.right + offset, LENGTH)))
        if self.kind == "constant":
            return self
        raise ValueError("tabulated profiles cannot be shifted")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _read_table(path):
    xs, us = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            try:
                xs.append(float(row[0]))
                us.append(float(row[1]))
            except (ValueError, IndexError):
                continue
    return np.asarray(xs), np.asarray(us)


def sample(profiles: Sequence[InitialProfile], grid: PeriodicGrid) -> Field:
    """Cell averages of the summed profiles (8-point Gauss rule per cell)."""
    x = grid.centers[:, None] + 0.5 * grid.dx * _GAUSS_X[None, :]
    vals = np.zeros_like(x)
    for p in profiles:
        vals += p(x)
    return Field(grid, 0.5 * vals @ _GAUSS_W)


@dataclass
class DiagnosticsConfig:
    k_report: int = 16
    n_bins: int = 50
    dirac_delta: float | None = None
    plateau_window: float = 0.1
    plateau_tol: float = 1e-4
    eps_c: float = 0.02
    energy_tol: float = 1e-8
    audit_tol: float = 0.05
    drop_threshold: float = 1e-6
    overlap_tol: float = 1e-6
    segregation_after: float = 1.0
    check_energy: bool = True
    check_audit: bool = False
    check_segregation: bool = True


@dataclass
class ScenarioConfig:
    name: str
    reactions: list[dict]
    initial: list[list[InitialProfile]]
    n_cells: int = 256
    kernel: dict = field(default_factory=lambda: {"kind": "gaussian"})
    k_max: int = 4
    t_end: float = 100.0
    snapshot_every: float | None = None
    snapshot_times: list[float] | None = None
    cfl: float = 0.45
    max_dt: float | None = None
    limiter: str = "minmod"
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seed: int = 0
    expected_verdict: str | None = None

    def __post_init__(self):
        if len(self.reactions) != 2 or len(self.initial) != 2:
            raise ValueError("exactly two species are required")
        self.initial = [[p if isinstance(p, InitialProfile) else InitialProfile(**p) for p in sp]
                        for sp in self.initial]
        if isinstance(self.diagnostics, dict):
            self.diagnostics = DiagnosticsConfig(**self.diagnostics)
        self.models()  # validates reaction specs

    def models(self) -> tuple[ReactionModel, ReactionModel]:
        return tuple(reaction_from_dict(d) for d in self.reactions)

    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.n_cells)

    def build_kernel(self, grid: PeriodicGrid | None = None) -> PeriodizedKernel:
        return periodize(BaseKernel.from_dict(self.kernel), grid or self.grid(), self.k_max)

    def times(self) -> list[float]:
        if self.snapshot_times is not None:
            ts = [t for t in self.snapshot_times if t <= self.t_end]
        elif self.snapshot_every:
            n = int(np.floor(self.t_end / self.snapshot_every + 1e-9))
            ts = [round(k * self.snapshot_every, 12) for k in range(n + 1)]
        else:
            ts = [t for t in FIGURE_TIMES if t <= self.t_end]
        if not ts or ts[-1] < self.t_end:
            ts.append(float(self.t_end))
        return ts

    def initial_state(self, grid: PeriodicGrid | None = None) -> SimState:
        grid = grid or self.grid()
        u1, u2 = (sample(sp, grid) for sp in self.initial)
        if self.diagnostics.check_segregation and np.any(u1.values * u2.values > 0):
            raise ValueError("initial supports overlap while segregation monitoring is enabled")
        return SimState(0.0, u1, u2)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(self.t_end, self.models(), self.times(), self.cfl, self.limiter,
                            np.inf if self.max_dt is None else self.max_dt)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["initial"] = [[p.to_dict() for p in sp] for sp in self.initial]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)

    def with_overrides(self, n_cells: int | None = None, t_end: float | None = None) -> "ScenarioConfig":
        cfg = ScenarioConfig.from_dict(self.to_dict())
        if n_cells is not None:
            cfg.n_cells = int(n_cells)
        if t_end is not None:
            cfg.t_end = float(t_end)
        return cfg


def load_config(path) -> ScenarioConfig:
    return ScenarioConfig.from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    return path


def translate(cfg: ScenarioConfig, offset: float, name: str | None = None) -> ScenarioConfig:
    """Copy of ``cfg`` with every initial profile moved by ``offset``."""
    out = ScenarioConfig.from_dict(cfg.to_dict())
    out.initial = [[p.shifted(offset) for p in sp] for sp in out.initial]
    out.name = name or f"{cfg.name}_shifted"
    return out


# -- builtins ---------------------------------------------------------------

PI = np.pi
_COEX = [{"kind": "contact_inhibition", "b": 1.2, "gamma": 1.0, "mu": 1.0},
         {"kind": "logistic", "b": 1.2, "cap": 0.2}]
_EXCL = [{"kind": "contact_inhibition", "b": 1.5, "gamma": 1.0, "mu": 1.0},
         {"kind": "logistic", "b": 1.2, "cap": 0.2}]
_TWO_BUMPS = [[InitialProfile("bump", center=PI / 4, width=PI / 2, height=0.2)],
              [InitialProfile("bump", center=5 * PI / 4, width=PI / 2, height=0.2)]]


def _location(moving_center: float, name: str) -> ScenarioConfig:
    # species 1 in two patches, species 2 with a fixed small patch and a
    # movable one; the pair differs only in where the movable patch starts
    u1 = [InitialProfile("bump", center=0.32 * PI, width=0.32 * PI, height=0.25),
          InitialProfile("bump", center=1.2 * PI, width=0.16 * PI, height=0.2)]
    u2 = [InitialProfile("bump", center=0.07 * PI, width=0.1 * PI, height=0.15),
          InitialProfile("bump", center=moving_center, width=0.1 * PI, height=0.25)]
    return ScenarioConfig(name, [dict(d) for d in _COEX], [u1, u2], snapshot_every=0.5, max_dt=0.02)


def builtin(name: str) -> ScenarioConfig:
    if name == "coexistence":
        return ScenarioConfig("coexistence", [dict(d) for d in _COEX], [list(s) for s in _TWO_BUMPS],
                              snapshot_every=0.5, max_dt=0.02, expected_verdict="Coexistence")
    if name == "exclusion":
        return ScenarioConfig("exclusion", [dict(d) for d in _EXCL], [list(s) for s in _TWO_BUMPS],
                              snapshot_every=0.5, max_dt=0.02, expected_verdict="Exclusion1Wins")
    if name == "location_a":
        return _location(1.8 * PI, "location_a")
    if name == "location_b":
        return _location(0.8 * PI, "location_b")
    if name == "advection":
        return ScenarioConfig(
            "advection", [{"kind": "none", "reference": 0.2}, {"kind": "none", "reference": 0.2}],
            [[InitialProfile("bump", center=PI / 2, width=PI, height=0.3)],
             [InitialProfile("bump", center=3 * PI / 2, width=PI / 2, height=0.2)]],
            t_end=5.0, snapshot_every=0.5, max_dt=0.02,
            diagnostics=DiagnosticsConfig(check_energy=False))
    raise KeyError(f"no builtin scenario {name!r}; choose from {BUILTINS}")


BUILTINS = ("coexistence", "exclusion", "location_a", "location_b", "advection")


# -- running ----------------------------------------------------------------

@dataclass
class ScenarioResult:
    config: ScenarioConfig
    final: SimState
    history: list[DiagnosticsRecord]
    report: AsymptoticReport
    audit: AuditReport | None
    stats: RunStats
    max_step_increase: float
    max_overlap_ratio: float
    runtime: float
    files: list[Path] = field(default_factory=list)
    snapshots: list[SimState] = field(default_factory=list, repr=False)

    def checks(self) -> dict[str, bool]:
        """Outcome of every assertion enabled in the config."""
        dc = self.config.diagnostics
        out = {}
        if self.config.expected_verdict:
            out["verdict"] = self.report.scenario_verdict == self.config.expected_verdict
        if dc.check_energy:
            out["energy_monotone"] = self.max_step_increase < dc.energy_tol
        if dc.check_audit and self.audit is not None:
            out["dissipation_audit"] = self.audit.max_defect < dc.audit_tol
        if dc.check_segregation:
            out["segregation"] = self.max_overlap_ratio < dc.overlap_tol
        return out

    @property
    def passed(self) -> bool:
        return all(self.checks().values())


def _fmt_t(t: float) -> str:
    return f"{t:010.4f}".replace(".", "p")


def run_scenario(cfg: ScenarioConfig, out_dir=None, keep_snapshots: bool = False) -> ScenarioResult:
    """Run one scenario; write outputs under ``out_dir`` when given."""
    t_start = time.perf_counter()
    grid = cfg.grid()
    K = cfg.build_kernel(grid)
    models = cfg.models()
    scfg = cfg.solver_config()
    dc = cfg.diagnostics
    r1, r2 = models[0].root, models[1].root
    out = Path(out_dir) if out_dir is not None else None
    files: list[Path] = []
    if out is not None:
        (out / "snapshots").mkdir(parents=True, exist_ok=True)
        (out / "histograms").mkdir(parents=True, exist_ok=True)

    history: list[DiagnosticsRecord] = []
    kept: list[SimState] = []
    worst = {"inc": 0.0, "e": None, "overlap": 0.0}

    def sink(st: SimState):
        rec = record(st.t, st.u1, st.u2, K, models, dc.k_report, dc.n_bins, dc.dirac_delta)
        history.append(rec)
        if st.t > dc.segregation_after and rec.mass_1 > 0 and rec.mass_2 > 0:
            worst["overlap"] = max(worst["overlap"], rec.overlap / (rec.mass_1 * rec.mass_2))
        if keep_snapshots:
            kept.append(st)
        if out is not None:
            p = out / "snapshots" / f"snapshot_t{_fmt_t(st.t)}.csv"
            v = velocity(K, st.u_total).values
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x", "u1", "u2", "v"])
                for row in zip(grid.centers, st.u1.values, st.u2.values, v):
                    w.writerow([repr(float(c)) for c in row])
            files.append(p)
            files.append(write_histogram(out / "histograms" / f"histogram_t{_fmt_t(st.t)}.csv", rec.histogram))

    def on_step(st: SimState):
        e = energy(st.u1, r1) + energy(st.u2, r2)
        if worst["e"] is not None:
            worst["inc"] = max(worst["inc"], e - worst["e"])
        worst["e"] = e

    init = cfg.initial_state(grid)
    on_step(init)
    stats = RunStats()
    final = run(init, K, scfg, [sink], on_step if dc.check_energy else None, stats)
    report = asymptotic_report(history, r1, r2, dc.plateau_window, dc.plateau_tol, dc.eps_c,
                               require_plateau=False)
    audit = None
    if len(history) >= 2:
        audit = dissipation_audit(history, dc.energy_tol, dc.drop_threshold, dc.audit_tol, strict=False)
    runtime = time.perf_counter() - t_start
    res = ScenarioResult(cfg, final, history, report, audit, stats, worst["inc"], worst["overlap"],
                         runtime, files, kept)
    if out is not None:
        files.append(write_timeseries(out / "timeseries.csv", history))
        extra = {"name": cfg.name, "checks": res.checks(), "passed": res.passed,
                 "max_step_energy_increase": res.max_step_increase,
                 "max_overlap_ratio_after_transient": res.max_overlap_ratio}
        if audit is not None:
            extra["audit"] = {"monotone": audit.monotone, "max_increase": audit.max_increase,
                              "max_defect": audit.max_defect, "max_defect_coupled": audit.max_defect_coupled,
                              "n_intervals": len(audit.intervals)}
        files.append(write_report(out / "report.json", report, extra))
        manifest = {"package_version": __version__, "config": cfg.to_dict(), "stats": stats.to_dict(),
                    "runtime_s": runtime, "kernel_certified": K.certified,
                    "kernel_tail_bound": K.tail_bound}
        p = out / "manifest.json"
        p.write_text(json.dumps(manifest, indent=2, default=float) + "\n")
        files.append(p)
    log.info("%s: verdict %s in %.2fs", cfg.name, report.scenario_verdict, runtime)
    return res


@dataclass
class LocationReport:
    masses_0: tuple[tuple[float, float], tuple[float, float]]
    U_a: tuple[float, float]
    U_b: tuple[float, float]
    difference: tuple[float, float]
    results: tuple[ScenarioResult, ScenarioResult] = field(repr=False)


def location_sensitivity(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig, out_dir=None,
                         mass_tol: float = 1e-10) -> LocationReport:
    """Run two configurations with equal initial masses and compare mean limits."""
    sa, sb = cfg_a.initial_state(), cfg_b.initial_state()
    ma = (l1_norm(sa.u1), l1_norm(sa.u2))
    mb = (l1_norm(sb.u1), l1_norm(sb.u2))
    for i in range(2):
        if abs(ma[i] - mb[i]) > mass_tol:
            raise MassMismatch(f"species {i + 1}: initial masses {ma[i]:.12g} vs {mb[i]:.12g}")
    outs = (None, None) if out_dir is None else (Path(out_dir) / cfg_a.name, Path(out_dir) / cfg_b.name)
    ra = run_scenario(cfg_a, outs[0])
    rb = run_scenario(cfg_b, outs[1])
    Ua = (mean(ra.final.u1), mean(ra.final.u2))
    Ub = (mean(rb.final.u1), mean(rb.final.u2))
    return LocationReport((ma, mb), Ua, Ub, (Ua[0] - Ub[0], Ua[1] - Ub[1]), (ra, rb))


@dataclass
class ConvergenceReport:
    """``errors[k]``: L1 distance of level k to the finest level.

    ``orders[k]`` compares the successive differences
    ``|u_k - u_{k+1}|`` and ``|u_{k+1} - u_{k+2}|``; unlike the ratio of
    errors against a fixed reference it is not inflated by the reference's
    own error.
    """

    n_cells: list[int]
    errors: list[float]
    orders: list[float]

    @property
    def observed_order(self) -> float:
        return float(self.orders[-1]) if self.orders else float("nan")


def _restrict(f: Field, factor: int) -> np.ndarray:
    return f.values.reshape(-1, factor).mean(axis=1)


def _distance(coarse: SimState, fine: SimState) -> float:
    fac = fine.grid.n_cells // coarse.grid.n_cells
    return float((np.sum(np.abs(coarse.u1.values - _restrict(fine.u1, fac)))
                  + np.sum(np.abs(coarse.u2.values - _restrict(fine.u2, fac)))) * coarse.grid.dx)


def convergence_study(base_cfg: ScenarioConfig, levels: int = 3) -> ConvergenceReport:
    """Grid-doubling study on ``n, 2n, 4n, ...`` (``levels`` grids).

    Finer solutions are restricted onto coarser grids by averaging.  A
    finite ``max_dt`` is halved along with ``dx`` so time errors shrink too.
    """
    if levels < 3:
        raise ValueError("levels must be >= 3")
    finals = []
    ns = [base_cfg.n_cells * 2 ** k for k in range(levels)]
    for k, n in enumerate(ns):
        cfg = base_cfg.with_overrides(n_cells=n)
        cfg.snapshot_times, cfg.snapshot_every = [], None
        if cfg.max_dt is not None:
            cfg.max_dt = base_cfg.max_dt / 2 ** k
        grid = cfg.grid()
        finals.append(run(cfg.initial_state(grid), cfg.build_kernel(grid), cfg.solver_config()))
    errors = [_distance(st, finals[-1]) for st in finals[:-1]]
    diffs = [_distance(a, b) for a, b in zip(finals[:-1], finals[1:])]
    orders = []
    for a, b in zip(diffs[:-1], diffs[1:]):
        orders.append(float("inf") if b == 0 else float(np.log2(a / b)) if a > 0 else float("nan"))
    return ConvergenceReport(ns[:-1], errors, orders)
