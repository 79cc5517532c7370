import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from twopop.errors import AliasingRisk, GridMismatch, TailTooHeavy
from twopop.grid import Field, PeriodicGrid
from twopop.kernel import (BaseKernel, convolve, convolve_direct, divergence_v, fourier_coefficients,
                           periodize, sobolev_tail_check, velocity, write_fourier_report)

TWO_PI = 2 * math.pi


@pytest.fixture(scope="module")
def K64():
    return periodize(BaseKernel.gaussian(), PeriodicGrid(64))


def test_K0_series_k_max_2():
    K = periodize(BaseKernel.gaussian(), PeriodicGrid(16), k_max=2)
    mp = mpmath.mp.clone()
    mp.dps = 60
    oracle = 2 * mp.pi * (1 + 2 * mp.e ** (-4 * mp.pi ** 3) + 2 * mp.e ** (-16 * mp.pi ** 3))
    assert K.k_values[0] == pytest.approx(float(oracle), rel=1e-15)
    assert K.truncation_k_max == 2


def test_zero_table_gives_zero_kernel():
    K = periodize(BaseKernel.tabulated([-1, 1], [0, 0]), PeriodicGrid(16))
    assert np.all(K.k_values == 0)


def test_gaussian_kernel_even(K64):
    kv = K64.k_values
    assert np.allclose(kv[1:], kv[1:][::-1], rtol=1e-14, atol=0)


def test_tail_too_heavy():
    x = np.linspace(-40, 40, 801)
    wide = BaseKernel.tabulated(x, np.exp(-np.abs(x) / 5))
    with pytest.raises(TailTooHeavy):
        periodize(wide, PeriodicGrid(32), k_max=1)


def test_fourier_against_quadrature_oracle():
    # independent oracle: adaptive quadrature of the periodized series
    K = periodize(BaseKernel.gaussian(), PeriodicGrid(128))
    c = fourier_coefficients(K, 6)
    for n in range(7):
        f = lambda x: 2 * mpmath.pi * mpmath.nsum(lambda k: mpmath.e ** (-mpmath.pi * (x + 2 * mpmath.pi * k) ** 2),
                                                 [-3, 3]) * mpmath.cos(n * x)
        q = mpmath.quad(f, [-mpmath.pi, 0, mpmath.pi]) / (2 * mpmath.pi)
        assert c[n] == pytest.approx(float(q), rel=1e-10)


def test_fourier_poisson_values(K64):
    c = fourier_coefficients(K64, 2)
    assert c[0] == pytest.approx(1.0, rel=1e-13)
    n = np.arange(3)
    assert np.allclose(c, np.exp(-n ** 2 / (4 * math.pi)), rtol=1e-12)
    assert c[1] == pytest.approx(0.9236, abs=1e-4)
    assert c[2] == pytest.approx(0.7274, abs=1e-4)
    assert K64.certified


def test_fourier_constant_kernel():
    # one period of a flat table; 33 cells keep samples off the seam at +-pi
    K = periodize(BaseKernel.tabulated([-math.pi, math.pi], [0.5 / TWO_PI, 0.5 / TWO_PI]), PeriodicGrid(33))
    assert np.allclose(K.k_values, 0.5, rtol=1e-14)
    c = fourier_coefficients(K, 16)
    assert c[0] == pytest.approx(0.5, rel=1e-14)
    assert np.max(np.abs(c[1:])) < 1e-12


def test_aliasing_risk(K64):
    with pytest.raises(AliasingRisk):
        fourier_coefficients(K64, 32)


def test_convolve_constant_and_zero(K64):
    g = K64.grid
    assert np.allclose(convolve(K64, Field(g, np.full(64, 0.3))).values, 0.3, rtol=1e-13)
    assert np.all(convolve(K64, g.zeros()).values == 0)


@pytest.mark.parametrize("n", [1, 3, 7])
def test_convolve_fourier_mode(K64, n):
    g = K64.grid
    x = g.centers
    for part in (np.cos, np.sin):
        u = Field(g, part(n * x))
        direct = convolve_direct(K64, u).values
        assert np.allclose(direct, math.exp(-n * n / (4 * math.pi)) * part(n * x), atol=1e-13)
        assert np.allclose(convolve(K64, u).values, direct, atol=1e-13)


def test_convolve_grid_mismatch(K64):
    with pytest.raises(GridMismatch):
        convolve(K64, PeriodicGrid(32).zeros())


def _bump(g, c=math.pi, w=1.5):
    d = np.mod(g.centers - c + math.pi, TWO_PI) - math.pi
    return Field(g, np.where(np.abs(d) < w / 2, np.cos(math.pi * d / w) ** 2, 0.0))


def test_velocity_trivial(K64):
    g = K64.grid
    assert np.max(np.abs(velocity(K64, Field(g, np.full(64, 0.7))).values)) < 1e-14
    assert np.all(velocity(K64, g.zeros()).values == 0)


def test_velocity_pushes_outward(K64):
    g = K64.grid
    u = _bump(g)
    v = velocity(K64, u).values
    l = convolve_direct(K64, u).values
    fd = -(8 * (np.roll(l, -1) - np.roll(l, 1)) - (np.roll(l, -2) - np.roll(l, 2))) / (12 * g.dx)
    assert np.allclose(v, fd, atol=1e-3 * np.max(np.abs(v)))
    left, right = g.centers < math.pi - 0.3, g.centers > math.pi + 0.3
    assert np.all(v[left & (g.centers > 1.5)] < 0)
    assert np.all(v[right & (g.centers < 4.8)] > 0)
    assert abs(np.mean(v)) < 1e-15


def _Kpp(x):
    # second derivative of the periodized Gaussian, summed directly
    s = 0.0
    for k in range(-4, 5):
        y = x + TWO_PI * k
        s = s + (4 * math.pi ** 2 * y ** 2 - 2 * math.pi) * np.exp(-math.pi * y ** 2)
    return TWO_PI * s


def test_divergence_single_mode(K64):
    g = K64.grid
    a = 0.3
    u = Field(g, 1.0 + a * np.cos(g.centers))
    dv = divergence_v(K64, u).values
    assert np.allclose(dv, a * math.exp(-1 / (4 * math.pi)) * np.cos(g.centers), atol=1e-13)
    x = g.centers
    direct = -(_Kpp(x[:, None] - x[None, :]) @ u.values) / g.n_cells
    assert np.allclose(dv, direct, atol=1e-12)


def test_divergence_bound_and_trivial(K64):
    g = K64.grid
    assert np.max(np.abs(divergence_v(K64, Field(g, np.full(64, 2.0))).values)) < 1e-13
    assert np.all(divergence_v(K64, g.zeros()).values == 0)
    u = _bump(g)
    from twopop.grid import l1_norm
    bound = np.max(np.abs(K64.d2)) * l1_norm(u) / TWO_PI
    assert np.max(np.abs(divergence_v(K64, u).values)) <= bound * (1 + 1e-12)


def test_derivative_tables(K64):
    x = np.arange(64) * K64.grid.dx
    assert np.allclose(K64.d2, _Kpp(x), atol=1e-10)


def test_certificate_ignores_roundoff_noise(K64):
    assert K64.resolved_modes < 31
    n = K64.resolved_modes
    assert np.all(K64.fourier_coeffs[1: n + 1] > 0)


def test_sobolev_proxy(K64):
    assert sobolev_tail_check(K64)


def test_csv_roundtrip(tmp_path):
    x = np.linspace(-3, 3, 61)
    p = tmp_path / "rho.csv"
    p.write_text("x,rho\n" + "".join(f"{float(a)!r},{math.exp(-math.pi * a * a)!r}\n" for a in x))
    tab = BaseKernel.from_csv(p)
    K = periodize(tab, PeriodicGrid(32))
    Kg = periodize(BaseKernel.gaussian(), PeriodicGrid(32))
    assert np.allclose(K.k_values, Kg.k_values, atol=0.02)
    out = write_fourier_report(tmp_path / "c.csv", K.fourier_coeffs[:5])
    lines = out.read_text().splitlines()
    assert lines[0] == "n,c_n" and len(lines) == 6


fields = arrays(float, 32, elements=st.floats(0, 5, allow_nan=False))


@given(fields, fields, st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 31))
@settings(max_examples=40, deadline=None)
def test_convolution_linear_equivariant_and_matches_direct(a, b, s, t, shift):
    K = periodize(BaseKernel.gaussian(), PeriodicGrid(32))
    g = K.grid
    fa, fb = Field(g, a), Field(g, b)
    lhs = convolve(K, s * fa + t * fb).values
    rhs = s * convolve(K, fa).values + t * convolve(K, fb).values
    scale = 1 + np.max(np.abs(a)) + np.max(np.abs(b))
    assert np.allclose(lhs, rhs, atol=1e-12 * scale * 6)
    assert np.allclose(convolve(K, fa.rotate(shift)).values, np.roll(convolve(K, fa).values, shift),
                       atol=1e-12 * scale)
    d = convolve_direct(K, fa).values
    assert np.allclose(convolve(K, fa).values, d, rtol=1e-10, atol=1e-13 * scale)
