"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL summary (printed at the end of the
pytest run) before asserting, so failing criteria still report their
measured values.
"""
import math
import time

import numpy as np
import pytest

from twopop.characteristics import cross_validate, fixed_point_iterate, integrate_flow, jacobian_identity_check
from twopop.diagnostics import fourier_moduli, young_histogram
from twopop.grid import Field, PeriodicGrid, l1_norm, mean
from twopop.kernel import BaseKernel, fourier_coefficients, periodize
from twopop.reaction import ContactInhibition, Logistic
from twopop.scenarios import builtin, convergence_study, location_sensitivity, run_scenario, translate
from twopop.solver import SimState, SolverConfig, run

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def coexistence():
    return run_scenario(builtin("coexistence"))


@pytest.fixture(scope="module")
def exclusion():
    return run_scenario(builtin("exclusion"))


def test_c01_kernel_certificate(criterion):
    t0 = time.perf_counter()
    K = periodize(BaseKernel.gaussian(), PeriodicGrid(256))
    c = fourier_coefficients(K, 16)
    elapsed = time.perf_counter() - t0
    n = np.arange(17)
    err = float(np.max(np.abs(c / np.exp(-n ** 2 / (4 * math.pi)) - 1)))
    ok = err < 1e-8 and bool(np.all(c > 0)) and elapsed < 1.0
    criterion(1, ok, f"max rel err {err:.2e}, min c_n {c.min():.2e}, {elapsed:.3f}s")
    assert ok


def test_c02_conservation(criterion):
    cfg = builtin("advection")
    res = run_scenario(cfg)
    s0 = cfg.initial_state()
    drift = max(abs(l1_norm(b) - l1_norm(a)) / l1_norm(a)
                for a, b in ((s0.u1, res.final.u1), (s0.u2, res.final.u2)))
    ok = drift < 1e-12 and res.runtime < 10 and res.final.t == 5.0
    criterion(2, ok, f"relative mass drift {drift:.2e} at t=5, {res.runtime:.2f}s")
    assert ok


def test_c03_energy_monotone_and_audit(coexistence, criterion):
    r = coexistence
    audit = r.audit
    mono = r.max_step_increase < 1e-8
    ok = mono and audit.max_defect < 0.05 and r.runtime < 120
    criterion(3, ok, f"max step increase {r.max_step_increase:.2e} (monotone {mono}); audit defect "
                     f"{audit.max_defect:.3g} over {len(audit.intervals)} intervals "
                     f"(coupled-rate variant {audit.max_defect_coupled:.3g}); {r.runtime:.1f}s")
    assert ok


def test_c04_coexistence_limit(coexistence, criterion):
    r = coexistence
    dev = l1_norm(r.final.u_total - 0.2) / TWO_PI
    m1, m2 = mean(r.final.u1), mean(r.final.u2)
    e_inf = r.report.E_infinity
    ok = (dev < 1e-2 and abs(e_inf - 0.2) <= 1e-2 and 0.02 < m1 < 0.18 and 0.02 < m2 < 0.18
          and r.report.scenario_verdict == "Coexistence")
    criterion(4, ok, f"L1/2pi {dev:.2e}, E_inf {e_inf:.4f}, means ({m1:.4f}, {m2:.4f}), "
                     f"{r.report.scenario_verdict}")
    assert ok


def test_c05_exclusion(exclusion, criterion):
    r = exclusion
    h = r.history[-1]
    m1, m2 = mean(r.final.u1), mean(r.final.u2)
    ok = (h.energy_1 < 1e-2 and abs(h.energy_2 - 0.2) < 1e-2 and abs(m1 - 0.5) < 1e-2 and m2 < 1e-2
          and r.report.scenario_verdict == "Exclusion1Wins")
    criterion(5, ok, f"E1 {h.energy_1:.2e}, E2 {h.energy_2:.4f}, means ({m1:.4f}, {m2:.2e}), "
                     f"{r.report.scenario_verdict}")
    assert ok


def test_c06_segregation(coexistence, exclusion, criterion):
    worst = {}
    for res in (coexistence, exclusion):
        ratios = [h.overlap / (h.mass_1 * h.mass_2) for h in res.history
                  if h.t > 1.0 and h.mass_1 * h.mass_2 > 0]
        worst[res.config.name] = max(ratios)
    ok = all(v < 1e-6 for v in worst.values())
    criterion(6, ok, "max overlap/(mass1*mass2) after t=1: "
                     + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))
    assert ok


def test_c07_fourier_decay(coexistence, criterion):
    m = fourier_moduli(coexistence.final.u_total, 16)
    top = float(m[1:].max())
    criterion(7, top < 1e-3, f"max |c_k|, 1<=k<=16, at t=100: {top:.2e}")
    assert top < 1e-3


def test_c08_young_weights(coexistence, criterion):
    h = young_histogram(coexistence.final.u_total, 0.2, delta=0.01 * 0.2)
    g = PeriodicGrid(256)
    half = Field(g, np.where(g.centers < math.pi, 0.2, 0.0))
    hh = young_histogram(half, 0.2)
    ok = h.weight_r > 0.95 and abs(hh.weight_zero - 0.5) <= 0.01 and abs(hh.weight_r - 0.5) <= 0.01
    criterion(8, ok, f"mass within 0.01r of r: {h.weight_r:.4f}; half-and-half weights "
                     f"({hh.weight_zero:.3f}, {hh.weight_r:.3f})")
    assert ok


def test_c09_location_sensitivity(criterion):
    a, b = builtin("location_a"), builtin("location_b")
    pair = location_sensitivity(a, b)
    moved = location_sensitivity(a, translate(a, math.pi / 2))
    d, dt = abs(pair.difference[1]), abs(moved.difference[1])
    ok = d > 0.01 and dt < 1e-8
    criterion(9, ok, f"|dU2| figure pair {d:.4f} (U2 {pair.U_a[1]:.4f} vs {pair.U_b[1]:.4f}); "
                     f"translated pair {dt:.1e}")
    assert ok


def _bump(g, c, w, h):
    d = np.mod(g.centers - c + math.pi, TWO_PI) - math.pi
    return np.where(np.abs(d) < w / 2, h * np.cos(math.pi * d / w) ** 2, 0.0)


def test_c10_characteristics(criterion):
    t0 = time.perf_counter()
    models = (ContactInhibition(1.2, 1, 1), Logistic(1.2, 0.2))
    tau = 0.05
    disc, ratios = [], []
    for n in (128, 256, 512):
        K = periodize(BaseKernel.gaussian(), PeriodicGrid(n))
        g = K.grid
        u1, u2 = Field(g, _bump(g, math.pi / 4, math.pi / 2, 0.2)), Field(g, _bump(g, 5 * math.pi / 4, math.pi / 2, 0.2))
        sol = fixed_point_iterate((u1, u2), K, models, tau=tau)
        ratios += sol.contraction_ratios()
        fv = run(SimState(0.0, u1, u2), K, SolverConfig(tau, models, max_dt=g.dx / 4))
        disc.append(cross_validate(sol, fv, tau).l1)
    z = (np.arange(1024) + 0.5) * TWO_PI / 1024
    flow = integrate_flow(lambda t, x: np.sin(x), z, 0.1, 0.01)
    jac = jacobian_identity_check(flow, lambda t, x: np.cos(x)).max_defect
    elapsed = time.perf_counter() - t0
    ok = (max(ratios) < 1 and disc[0] > disc[1] > disc[2] and jac < 1e-4 and elapsed < 30)
    criterion(10, ok, f"max residual ratio {max(ratios):.3f}; L1 discrepancy "
                      + " > ".join(f"{d:.2e}" for d in disc) + f"; Jacobian defect {jac:.1e}; {elapsed:.1f}s")
    assert ok


def test_c11_scheme_order(criterion):
    rep = convergence_study(builtin("advection").with_overrides(n_cells=64, t_end=1.0), 4)
    ok = rep.observed_order >= 1.0
    criterion(11, ok, f"observed order {rep.observed_order:.2f} (orders {', '.join(f'{o:.2f}' for o in rep.orders)})")
    assert ok
