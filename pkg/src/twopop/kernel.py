"""Periodized interaction kernel, its Fourier coefficients and the induced velocity.

The torus kernel is ``K(x) = 2*pi * sum_k rho(x + 2*pi*k)`` and the
convolution is normalised by the torus length::

    (K o u)(x) = (1/2pi) * integral K(x - y) u(y) dy

so that ``c_n[K o u] = c_n[K] * c_n[u]`` with
``c_n[f] = (1/2pi) * integral f(x) exp(-i n x) dx``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erfc

from .errors import AliasingRisk, GridMismatch, TailTooHeavy
from .grid import LENGTH, Field, PeriodicGrid

DEFAULT_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class BaseKernel:
    """Whole-line kernel rho.

    ``kind`` is ``"gaussian"`` (rho(x) = exp(-pi x^2)) or ``"tabulated"``,
    in which case ``x``/``rho`` hold a sampled profile that is linearly
    interpolated and taken as zero outside the table.
    """

    kind: str = "gaussian"
    x: np.ndarray | None = field(default=None, repr=False, compare=False)
    rho: np.ndarray | None = field(default=None, repr=False, compare=False)
    source: str | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "tabulated"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "tabulated":
            if self.x is None or self.rho is None:
                raise ValueError("tabulated kernel needs x and rho arrays")
            x = np.asarray(self.x, dtype=float)
            r = np.asarray(self.rho, dtype=float)
            if x.shape != r.shape or x.ndim != 1 or x.size < 2:
                raise ValueError("x and rho must be 1-D arrays of equal length >= 2")
            if np.any(np.diff(x) <= 0):
                raise ValueError("table abscissae must be strictly increasing")
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "rho", r)

    @classmethod
    def gaussian(cls) -> "BaseKernel":
        return cls("gaussian")

    @classmethod
    def tabulated(cls, x, rho, source: str | None = None) -> "BaseKernel":
        return cls("tabulated", np.asarray(x, float), np.asarray(rho, float), source)

    @classmethod
    def from_csv(cls, path) -> "BaseKernel":
        """Load a two-column ``x, rho`` table (a header row is optional)."""
        xs, rs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    a, b = float(row[0]), float(row[1])
                except ValueError:
                    continue  # header
                xs.append(a)
                rs.append(b)
        return cls.tabulated(xs, rs, source=str(path))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-np.pi * x * x)
        return np.interp(x, self.x, self.rho, left=0.0, right=0.0)

    def tail_mass(self, radius: float) -> float:
        """Integral of |rho| over |x| > radius."""
        if self.kind == "gaussian":
            return float(erfc(np.sqrt(np.pi) * radius))
        xs, rs = self.x, np.abs(self.rho)
        fine = np.linspace(xs[0], xs[-1], 20 * xs.size + 1)
        vals = np.interp(fine, xs, rs)
        vals[np.abs(fine) <= radius] = 0.0
        return float(np.trapezoid(vals, fine))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "tabulated":
            if self.source:
                d["path"] = self.source
            else:
                d["x"] = self.x.tolist()
                d["rho"] = self.rho.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BaseKernel":
        kind = d.get("kind", "gaussian")
        if kind == "gaussian":
            return cls.gaussian()
        if "path" in d:
            return cls.from_csv(d["path"])
        return cls.tabulated(d["x"], d["rho"])


def _offsets(grid: PeriodicGrid) -> np.ndarray:
    return np.arange(grid.n_cells) * grid.dx


@dataclass(frozen=True)
class PeriodizedKernel:
    """Torus kernel sampled at the grid offsets ``m*dx``.

    ``k_values[m] = K(m*dx)``, which is what a circulant convolution of cell
    values needs.  ``fourier_coeffs`` holds ``c_n[K]`` for
    ``0 <= n <= n_cells/2 - 1``; ``d1``/``d2`` hold K' and K'' at the same
    offsets, obtained by spectral differentiation.
    """

    grid: PeriodicGrid
    base: BaseKernel
    k_values: np.ndarray = field(repr=False)
    fourier_coeffs: np.ndarray = field(repr=False)
    truncation_k_max: int
    tail_bound: float
    d1: np.ndarray = field(repr=False)
    d2: np.ndarray = field(repr=False)

    @property
    def resolved_modes(self) -> int:
        """Largest n whose coefficient stands above the round-off floor of the DFT."""
        floor = 64 * np.finfo(float).eps * np.max(np.abs(self.k_values))
        big = np.nonzero(np.abs(self.fourier_coeffs) > floor)[0]
        return int(big.max()) if big.size else 0

    @property
    def certified(self) -> bool:
        """True when c_n[K] > 0 for every resolved n != 0.

        Coefficients below the round-off floor carry no sign information and
        are not judged.
        """
        n = self.resolved_modes
        return bool(n >= 1 and np.all(self.fourier_coeffs[1: n + 1] > 0))

    @property
    def spectrum(self) -> np.ndarray:
        """Full-length DFT coefficients c_n[K] in numpy FFT ordering."""
        return np.fft.fft(self.k_values) / self.grid.n_cells


def periodize(rho: BaseKernel, grid: PeriodicGrid, k_max: int = 4,
              tail_tol: float = DEFAULT_TAIL_TOL) -> PeriodizedKernel:
    """Sum lattice translates of ``rho`` into a 2*pi-periodic kernel.

    Raises :class:`TailTooHeavy` when the mass of ``rho`` outside the
    summation window (|x| > 2*pi*k_max) exceeds ``tail_tol``.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    tail = rho.tail_mass(LENGTH * k_max)
    if tail > tail_tol:
        raise TailTooHeavy(f"tail mass {tail:.3e} beyond |x| > {LENGTH * k_max:.3f} exceeds {tail_tol:.1e}")
    m = _offsets(grid)
    # sum in a fixed order: symmetric pairs first, largest terms last
    k_vals = np.zeros(grid.n_cells)
    for k in range(k_max, 0, -1):
        k_vals += rho(m + LENGTH * k) + rho(m - LENGTH * k)
    k_vals = LENGTH * (k_vals + rho(m))
    n = grid.n_cells
    spec = np.fft.fft(k_vals) / n
    coeffs = spec[: n // 2].real.copy()
    freq = np.fft.fftfreq(n, d=1.0 / n)
    freq[n // 2] = 0.0  # drop the unpaired Nyquist mode in derivatives
    d1 = np.fft.ifft(1j * freq * spec).real * n
    d2 = np.fft.ifft(-(freq ** 2) * spec).real * n
    return PeriodizedKernel(grid, rho, k_vals, coeffs, int(k_max), LENGTH * tail, d1, d2)


def fourier_coefficients(K: PeriodizedKernel, n_max: int) -> np.ndarray:
    if n_max >= K.grid.n_cells / 2:
        raise AliasingRisk(f"n_max={n_max} reaches Nyquist for {K.grid.n_cells} cells")
    return K.fourier_coeffs[: n_max + 1].copy()


def sobolev_tail_check(K: PeriodizedKernel, power: int = 6, rel_tol: float = 1e-6) -> bool:
    """Numerical proxy for summability of ``|n|^power * c_n[K]^2``.

    Returns ``True`` when the last resolved terms are negligible against the
    partial sum; issues a warning otherwise.  Smoothness itself is not
    verified.
    """
    n = np.arange(K.fourier_coeffs.size)
    terms = n.astype(float) ** power * K.fourier_coeffs ** 2
    total = terms.sum()
    tail = terms[-max(1, terms.size // 8):].sum()
    ok = bool(total == 0 or tail <= rel_tol * total)
    if not ok:
        warnings.warn(f"kernel spectrum decays slowly: tail/total = {tail / total:.2e}", stacklevel=2)
    return ok


def _check(K: PeriodizedKernel, u: Field) -> None:
    if u.grid != K.grid:
        raise GridMismatch(f"field has {u.grid.n_cells} cells, kernel {K.grid.n_cells}")


def _spectral(K: PeriodizedKernel, u: Field, deriv: int) -> np.ndarray:
    _check(K, u)
    n = K.grid.n_cells
    prod = np.fft.rfft(K.k_values) * np.fft.rfft(u.values) / n
    if deriv:
        k = np.arange(prod.size, dtype=float)
        if n % 2 == 0:
            k[-1] = 0.0
        prod = prod * (1j * k) ** deriv
    return np.fft.irfft(prod, n)


def convolve(K: PeriodizedKernel, u: Field) -> Field:
    """(K o u) at the cell centers, computed spectrally."""
    return Field(u.grid, _spectral(K, u, 0))


def convolve_direct(K: PeriodizedKernel, u: Field) -> Field:
    """O(n^2) quadrature ``(1/2pi) sum_j K(x_i - x_j) u_j dx``."""
    _check(K, u)
    n = K.grid.n_cells
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return Field(u.grid, K.k_values[idx] @ u.values / n)


def velocity(K: PeriodizedKernel, u_total: Field) -> Field:
    """Cell-centered v = -d/dx (K o u_total)."""
    return Field(u_total.grid, -_spectral(K, u_total, 1))


def divergence_v(K: PeriodizedKernel, u_total: Field) -> Field:
    """Cell-centered div v = -d2/dx2 (K o u_total)."""
    return Field(u_total.grid, -_spectral(K, u_total, 2))


def write_fourier_report(path, coeffs) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "c_n"])
        for n, c in enumerate(coeffs):
            w.writerow([n, repr(float(c))])
    return path


def write_kernel_table(path, x, rho) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "rho"])
        for a, b in zip(x, rho):
            w.writerow([repr(float(a)), repr(float(b))])
    return path
