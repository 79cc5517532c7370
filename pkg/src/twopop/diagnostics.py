"""Energy, dissipation, Fourier, segregation and long-time diagnostics.

The energy of species i with root r_i is the mean over the torus of
``G(u) = u ln(u/r) - u + r``; it vanishes only at ``u = r`` and equals
``r`` at ``u = 0``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AliasingRisk, MonotonicityViolated, NegativeDensity, NoPlateauDetected
from .grid import LENGTH, Field, check_same_grid, linf_norm, mean
from .kernel import PeriodizedKernel, divergence_v
from .reaction import ReactionModel

EPS_C = 0.02
K_REPORT = 16


def G(u, r: float) -> np.ndarray:
    """Pointwise energy density with the continuous extension G(0) = r."""
    u = np.asarray(u, float)
    small = u < 1e-16 * r
    safe = np.where(small, r, u)
    return np.where(small, r - u, safe * np.log(safe / r) - safe + r)


def energy(u: Field, r: float) -> float:
    if r <= 0:
        raise ValueError("root must be positive")
    if np.any(u.values < 0):
        raise NegativeDensity("energy of a field with negative values")
    return float(np.sum(G(u.values, r)) * u.grid.dx / LENGTH)


def fourier_moduli(u_total: Field, k_report: int = K_REPORT) -> np.ndarray:
    """|c_k[u]| for k = 0..k_report."""
    if k_report >= u_total.grid.n_cells / 2:
        raise AliasingRisk(f"k_report={k_report} reaches Nyquist")
    c = np.fft.rfft(u_total.values) / u_total.grid.n_cells
    return np.abs(c[: k_report + 1])


def overlap(u1: Field, u2: Field) -> float:
    """(1/2pi) integral of u1*u2."""
    check_same_grid(u1, u2)
    return float(np.sum(u1.values * u2.values) * u1.grid.dx / LENGTH)


@dataclass
class Histogram:
    edges: np.ndarray
    masses: np.ndarray
    weight_zero: float
    weight_r: float
    delta: float

    def rows(self):
        return [(float(a), float(b), float(m)) for a, b, m in zip(self.edges[:-1], self.edges[1:], self.masses)]


def young_histogram(u_total: Field, r: float, n_bins: int = 50,
                    delta: float | None = None) -> Histogram:
    """Distribution of the cell values of u1+u2 (each cell carries weight 1/n).

    ``weight_zero``/``weight_r`` are the fractions of cells within ``delta``
    (default 0.05 r) of 0 and of r.
    """
    if n_bins < 10:
        raise ValueError("n_bins must be >= 10")
    vals = u_total.values
    if np.any(vals < 0):
        raise NegativeDensity("histogram of negative densities")
    delta = 0.05 * r if delta is None else delta
    top = max(float(vals.max()), 1.5 * r)
    edges = np.linspace(0.0, top, n_bins + 1)
    counts, _ = np.histogram(vals, bins=edges)
    masses = counts / vals.size
    w0 = float(np.mean(np.abs(vals) <= delta))
    wr = float(np.mean(np.abs(vals - r) <= delta))
    return Histogram(edges, masses, w0, wr, delta)


def dissipation_rates(u1: Field, u2: Field, K: PeriodizedKernel,
                      models: Sequence[ReactionModel]) -> tuple[float, float, float]:
    """Instantaneous energy dissipation terms.

    Returns ``(D_fourier, D_reaction, D_reaction_coupled)`` where
    ``D_fourier = sum_k k^2 c_k[K] |c_k[u]|^2`` over all resolved k,
    ``D_reaction`` averages ``sum_i u_i |h_i(u_i) ln(u_i/r_i)|`` and the
    coupled variant evaluates ``h_i`` at ``u1 + u2``.
    """
    n = u1.grid.n_cells
    ut = u1.values + u2.values
    cu = np.fft.fft(ut) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    d_f = float(np.sum(k ** 2 * K.spectrum.real * np.abs(cu) ** 2))
    d_r = d_c = 0.0
    for u, m in zip((u1.values, u2.values), models):
        r = m.root
        pos = u > 1e-16 * r
        lg = np.zeros_like(u)
        lg[pos] = np.log(u[pos] / r)
        d_r += float(np.mean(u * np.abs(m.h(u) * lg)))
        d_c += float(np.mean(u * np.abs(m.h(ut) * lg)))
    return d_f, d_r, d_c


@dataclass
class DiagnosticsRecord:
    t: float
    energy_1: float
    energy_2: float
    energy_total: float
    mass_1: float
    mass_2: float
    overlap: float
    linf_1: float
    linf_2: float
    div_v_sup: float
    fourier_moduli: np.ndarray = field(repr=False)
    histogram: Histogram = field(repr=False)
    d_fourier: float = 0.0
    d_reaction: float = 0.0
    d_reaction_coupled: float = 0.0

    TIMESERIES_COLUMNS = ("t", "E1", "E2", "E", "mass1", "mass2", "overlap", "linf1", "linf2", "div_v_sup")

    def timeseries_row(self) -> tuple:
        return (self.t, self.energy_1, self.energy_2, self.energy_total, self.mass_1, self.mass_2,
                self.overlap, self.linf_1, self.linf_2, self.div_v_sup)


def record(t: float, u1: Field, u2: Field, K: PeriodizedKernel, models: Sequence[ReactionModel],
           k_report: int = K_REPORT, n_bins: int = 50, dirac_delta: float | None = None) -> DiagnosticsRecord:
    r1, r2 = models[0].root, models[1].root
    e1, e2 = energy(u1, r1), energy(u2, r2)
    ut = u1 + u2
    d_f, d_r, d_c = dissipation_rates(u1, u2, K, models)
    r_hist = r1 if r1 == r2 else max(r1, r2)
    return DiagnosticsRecord(
        t=float(t), energy_1=e1, energy_2=e2, energy_total=e1 + e2,
        mass_1=mean(u1), mass_2=mean(u2), overlap=overlap(u1, u2),
        linf_1=linf_norm(u1), linf_2=linf_norm(u2),
        div_v_sup=linf_norm(divergence_v(K, ut)),
        fourier_moduli=fourier_moduli(ut, k_report),
        histogram=young_histogram(ut, r_hist, n_bins, dirac_delta),
        d_fourier=d_f, d_reaction=d_r, d_reaction_coupled=d_c,
    )


@dataclass
class AuditInterval:
    t0: float
    t1: float
    drop: float
    predicted: float
    defect: float
    predicted_coupled: float
    defect_coupled: float


@dataclass
class AuditReport:
    monotone: bool
    max_increase: float
    worst_interval: tuple[float, float] | None
    intervals: list[AuditInterval]
    max_defect: float
    max_defect_coupled: float
    drop_threshold: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.monotone and self.max_defect < self.tolerance


def dissipation_audit(history: Sequence[DiagnosticsRecord], tol_E: float = 1e-8,
                      drop_threshold: float = 1e-6, tolerance: float = 0.05,
                      strict: bool = True) -> AuditReport:
    """Compare snapshot-to-snapshot energy drops with the integrated dissipation.

    The predicted drop over ``[t0, t1]`` is the trapezoidal time integral of
    ``D_fourier + D_reaction``.  The relative defect is reported only on
    intervals whose measured drop exceeds ``drop_threshold``.  With
    ``strict`` an energy increase above ``tol_E`` raises
    :class:`MonotonicityViolated`.
    """
    if len(history) < 2:
        raise ValueError("need at least two snapshots")
    max_inc, worst = 0.0, None
    ivs = []
    for a, b in zip(history[:-1], history[1:]):
        drop = a.energy_total - b.energy_total
        if -drop > max_inc:
            max_inc, worst = -drop, (a.t, b.t)
        dt = b.t - a.t
        pred = 0.5 * dt * (a.d_fourier + a.d_reaction + b.d_fourier + b.d_reaction)
        pred_c = 0.5 * dt * (a.d_fourier + a.d_reaction_coupled + b.d_fourier + b.d_reaction_coupled)
        if drop > drop_threshold:
            ivs.append(AuditInterval(a.t, b.t, drop, pred, abs(pred - drop) / drop,
                                     pred_c, abs(pred_c - drop) / drop))
    monotone = max_inc <= tol_E
    if strict and not monotone:
        raise MonotonicityViolated(worst[0], worst[1], max_inc)
    return AuditReport(monotone, max_inc, worst, ivs,
                       max((iv.defect for iv in ivs), default=0.0),
                       max((iv.defect_coupled for iv in ivs), default=0.0),
                       drop_threshold, tolerance)


@dataclass
class AsymptoticReport:
    E_infinity: float
    E_i_infinity: tuple[float, float]
    c1_mean: float
    c2_mean: float
    dirac_weights: tuple[float, float] | None
    plateau_detected: bool
    scenario_verdict: str
    window: tuple[float, float]

    def lemma_consistency(self, r: float) -> float:
        """|r c1 + r c2 - (2r - E_inf)|, meaningful when r1 = r2 = r."""
        return abs(r * self.c1_mean + r * self.c2_mean - (2 * r - self.E_infinity))

    def to_dict(self) -> dict:
        return asdict(self)


def detect_plateau(history: Sequence[DiagnosticsRecord], r: float, window_frac: float = 0.1,
                   plateau_tol: float = 1e-4) -> tuple[bool, list[DiagnosticsRecord]]:
    t_last = history[-1].t
    t_start = t_last - window_frac * (t_last - history[0].t)
    win = [h for h in history if h.t >= t_start - 1e-12]
    e = [h.energy_total for h in win]
    return (max(e) - min(e) < plateau_tol * r), win


def classify(c1: float, c2: float, eps_c: float = EPS_C) -> str:
    if eps_c < c1 < 1 - eps_c and eps_c < c2 < 1 - eps_c:
        return "Coexistence"
    if c1 > 1 - eps_c and c2 < eps_c:
        return "Exclusion1Wins"
    if c2 > 1 - eps_c and c1 < eps_c:
        return "Exclusion2Wins"
    return "Undecided"


def asymptotic_report(history: Sequence[DiagnosticsRecord], r1: float, r2: float,
                      window_frac: float = 0.1, plateau_tol: float = 1e-4,
                      eps_c: float = EPS_C, require_plateau: bool = True) -> AsymptoticReport:
    """Long-time indices from the tail of an energy history.

    Mean occupation fractions follow from ``c_i = 1 - E_i,inf / r_i``; the
    two-point weights ``(E_inf/r - 1, 2 - E_inf/r)`` are given only when
    the roots agree.
    """
    if not history:
        raise NoPlateauDetected("empty history")
    plateau, win = detect_plateau(history, min(r1, r2), window_frac, plateau_tol)
    if require_plateau and not plateau:
        e = [h.energy_total for h in win]
        raise NoPlateauDetected(f"energy varies by {max(e) - min(e):.3e} over the last window")
    e_inf = float(np.mean([h.energy_total for h in win]))
    e1 = float(np.mean([h.energy_1 for h in win]))
    e2 = float(np.mean([h.energy_2 for h in win]))
    c1, c2 = 1 - e1 / r1, 1 - e2 / r2
    weights = None
    if np.isclose(r1, r2, rtol=1e-12):
        weights = (e_inf / r1 - 1, 2 - e_inf / r1)
    return AsymptoticReport(e_inf, (e1, e2), c1, c2, weights, plateau,
                            classify(c1, c2, eps_c), (win[0].t, win[-1].t))


def write_timeseries(path, history: Sequence[DiagnosticsRecord]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DiagnosticsRecord.TIMESERIES_COLUMNS)
        for h in history:
            w.writerow([repr(float(v)) for v in h.timeseries_row()])
    return path


def write_histogram(path, hist: Histogram) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "mass"])
        for row in hist.rows():
            w.writerow([repr(v) for v in row])
    return path


def write_report(path, report: AsymptoticReport, extra: dict | None = None) -> Path:
    path = Path(path)
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, default=float) + "\n")
    return path
