"""Lagrangian cross-check of the finite-volume solver.

Particles labelled by ``z`` move with the nonlocal velocity,
``d/dt X(t; z) = v(t, X(t; z))``, and each density is carried along as::

    w_i(t, z) = exp( int_0^t h_i(w1 + w2) - div v(l, X(l; z)) dl ) * u_i(0, z)

The pair (w, v) is the fixed point of a map T: given the current iterate
(w, v) the flow X is integrated with the *current* v; the new velocity is
the gradient of the kernel potential of the transported mass, and the new
w uses the new divergence sampled along the *current* flow.  The velocity
is represented by its first ``n_modes`` Fourier modes, which is exact up to
the decay of c_n[K].
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .errors import NoContraction, TimeMismatch, VelocityUndefined
from .grid import LENGTH, Field, PeriodicGrid, check_same_grid
from .kernel import PeriodizedKernel
from .reaction import ReactionModel
from .solver import SimState

Evaluator = Callable[[float, np.ndarray], np.ndarray]


def _time_integral(y: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Cumulative integral along axis 0, starting at zero."""
    if times.size >= 3:
        return cumulative_simpson(y, x=times, axis=0, initial=0.0)
    return cumulative_trapezoid(y, x=times, axis=0, initial=0.0)


@dataclass
class FlowMap:
    times: np.ndarray
    seeds: np.ndarray
    positions: np.ndarray = field(repr=False)  # (n_levels, n_seeds), unwrapped

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise TimeMismatch(f"t={t} is not a stored level")
        return self.positions[k]

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.positions, axis=1) > 0))


def integrate_flow(velocity_at: Evaluator, seeds, t_end: float, dt: float,
                   t0: float = 0.0) -> FlowMap:
    """Classical RK4 for every seed from ``t0`` to ``t_end``.

    The step is shrunk so that an integer number of steps lands on
    ``t_end``; every step is stored.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    seeds = np.asarray(seeds, float)
    span = t_end - t0
    n = max(1, int(np.ceil(span / dt - 1e-9))) if span > 0 else 0
    times = np.linspace(t0, t_end, n + 1)
    pos = np.empty((n + 1, seeds.size))
    pos[0] = x = seeds.copy()
    for k in range(n):
        t, h = times[k], times[k + 1] - times[k]
        k1 = velocity_at(t, x)
        k2 = velocity_at(t + h / 2, x + h / 2 * k1)
        k3 = velocity_at(t + h / 2, x + h / 2 * k2)
        k4 = velocity_at(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        pos[k + 1] = x
    return FlowMap(times, seeds, pos)


@dataclass
class JacobianReport:
    max_defect: float
    finite_difference: np.ndarray = field(repr=False)
    exponential: np.ndarray = field(repr=False)


def jacobian_identity_check(flow: FlowMap, div_v_at: Evaluator) -> JacobianReport:
    """Compare d/dz X by central differences with exp(int div v along X).

    Seeds must be uniformly spaced and cover one period.
    """
    z = flow.seeds
    dz = np.diff(z)
    if not np.allclose(dz, dz[0], rtol=1e-9) or not np.isclose(z.size * dz[0], LENGTH, rtol=1e-9):
        raise ValueError("seeds must be uniform over one period")
    X = flow.positions
    ahead = np.roll(X, -1, axis=1)
    ahead[:, -1] += LENGTH
    behind = np.roll(X, 1, axis=1)
    behind[:, 0] -= LENGTH
    fd = (ahead - behind) / (2 * dz[0])
    divs = np.array([div_v_at(t, X[k]) for k, t in enumerate(flow.times)])
    ex = np.exp(_time_integral(divs, flow.times))
    return JacobianReport(float(np.max(np.abs(fd - ex) / ex)), fd, ex)


def _fourier_basis(x, n_modes: int) -> np.ndarray:
    """Matrix of e^{i n x} for n = 1..n_modes (powers are cheaper than exp)."""
    z = np.exp(1j * np.asarray(x, float))
    return np.cumprod(np.broadcast_to(z[..., None], z.shape + (n_modes,)), axis=-1)


@dataclass
class ModalPotential:
    """Time-levelled potential ``l(t, x) = sum_n p_n(t) e^{inx}`` (real, n = +-1..M).

    Velocity is ``-dl/dx`` and divergence ``-d2l/dx2``; values between
    levels are interpolated linearly in time.
    """

    times: np.ndarray
    coeffs: np.ndarray  # (n_levels, M) complex, modes 1..M
    slack: float = 1e-12

    @property
    def n(self) -> np.ndarray:
        return np.arange(1, self.coeffs.shape[1] + 1)

    def _coeffs_at(self, t: float) -> np.ndarray:
        t0, t1 = self.times[0], self.times[-1]
        if t < t0 - self.slack or t > t1 + self.slack:
            raise VelocityUndefined(f"t={t} outside [{t0}, {t1}]")
        if self.times.size == 1:
            return self.coeffs[0]
        t = min(max(t, t0), t1)
        k = min(int(np.searchsorted(self.times, t, side="right")) - 1, self.times.size - 2)
        a = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1 - a) * self.coeffs[k] + a * self.coeffs[k + 1]

    def _eval(self, p: np.ndarray, x: np.ndarray, factor: np.ndarray) -> np.ndarray:
        return 2.0 * np.real(_fourier_basis(x, p.size) @ (factor * p))

    def velocity(self, t: float, x) -> np.ndarray:
        return self._eval(self._coeffs_at(t), x, -1j * self.n)

    def divergence(self, t: float, x) -> np.ndarray:
        return self._eval(self._coeffs_at(t), x, self.n.astype(float) ** 2)


def modal_potential(K: PeriodizedKernel, times: np.ndarray, positions: np.ndarray,
                    mass: np.ndarray, dz: float, n_modes: int) -> ModalPotential:
    """Potential of point masses ``mass[k, j] * dz`` sitting at ``positions[k, j]``."""
    n = np.arange(1, n_modes + 1)
    mu = np.einsum("kjn,kj->kn", np.conj(_fourier_basis(positions, n_modes)), mass) * dz / LENGTH
    return ModalPotential(np.asarray(times, float), mu * K.fourier_coeffs[1: n_modes + 1])


def default_modes(K: PeriodizedKernel, tol: float = 1e-16) -> int:
    """Smallest M such that n^2 c_n[K] < tol for every resolved n > M."""
    c = np.abs(K.fourier_coeffs)
    n = np.arange(c.size)
    big = np.nonzero(n ** 2 * c >= tol)[0]
    return int(max(1, min(big.max() if big.size else 1, c.size - 1)))


def spectral_interpolant(values: Field) -> Callable[[np.ndarray], np.ndarray]:
    """Trigonometric interpolant through cell-center values, usable at any x."""
    g = values.grid
    n = g.n_cells
    c = np.fft.rfft(values.values) / n
    k = np.arange(c.size)
    c = c * np.exp(-1j * k * g.dx / 2)  # samples sit at (i + 1/2) dx
    w = np.full(c.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0

    def f(x):
        x = np.asarray(x, float)
        return np.real(np.exp(1j * np.multiply.outer(x, k)) @ (w * c))

    return f


@dataclass
class CharacteristicSolution:
    seeds: np.ndarray
    times: np.ndarray
    positions: np.ndarray = field(repr=False)
    w1: np.ndarray = field(repr=False)
    w2: np.ndarray = field(repr=False)
    jacobian: np.ndarray = field(repr=False)
    residuals: list[list[float]] = field(default_factory=list)
    segments: list[tuple[float, float]] = field(default_factory=list)

    @property
    def flow(self) -> FlowMap:
        return FlowMap(self.times, self.seeds, self.positions)

    @property
    def iterations(self) -> int:
        return sum(len(r) for r in self.residuals)

    def contraction_ratios(self) -> list[float]:
        out = []
        for res in self.residuals:
            out += [b / a for a, b in zip(res[:-1], res[1:]) if a > 0]
        return out


def _picard(x0, w0, J0, dz, K, models, t0, tau, n_levels, max_iter, tol, n_modes):
    times = np.linspace(t0, t0 + tau, n_levels + 1)
    w = np.repeat(w0[:, None, :], n_levels + 1, axis=1)  # (2, L+1, P)
    pot = modal_potential(K, times, np.broadcast_to(x0, (n_levels + 1, x0.size)),
                          np.broadcast_to((w0[0] + w0[1]) * J0, (n_levels + 1, x0.size)), dz, n_modes)
    probe = np.linspace(0.0, LENGTH, 4 * n_modes + 8, endpoint=False)
    residuals = []
    dt = tau / n_levels
    for _ in range(max_iter):
        flow = integrate_flow(pot.velocity, x0, t0 + tau, dt, t0=t0)
        X = flow.positions
        H = np.stack([_time_integral(m.h(w[0] + w[1]), times) for m in models])
        mass = sum(np.exp(H[i]) * w0[i] * J0 for i in range(2))
        new_pot = modal_potential(K, times, X, mass, dz, n_modes)
        divs = np.array([new_pot.divergence(t, X[k]) for k, t in enumerate(times)])
        D = _time_integral(divs, times)
        w_new = np.exp(H - D[None]) * w0[:, None, :]
        dv = max(float(np.max(np.abs(new_pot.velocity(t, probe) - pot.velocity(t, probe)))) for t in times)
        dd = max(float(np.max(np.abs(new_pot.divergence(t, probe) - pot.divergence(t, probe)))) for t in times)
        res = max(float(np.max(np.abs(w_new - w))), dv, dd)
        residuals.append(res)
        w, pot = w_new, new_pot
        if res < tol:
            return times, X, w, J0 * np.exp(D), residuals
    raise NoContraction(f"residual {residuals[-1]:.3e} after {max_iter} iterations (tau={tau})", residuals)


def fixed_point_iterate(u0: Sequence[Field], K: PeriodizedKernel, models: Sequence[ReactionModel],
                        tau: float = 0.05, max_iter: int = 50, tol: float = 1e-10,
                        n_levels: int | None = None, n_modes: int | None = None,
                        max_halvings: int = 6) -> CharacteristicSolution:
    """Solve for (w, v) on [0, tau] by Picard iteration of T.

    Seeds are the cell centers of ``u0``.  If the iteration fails to
    contract, the horizon is split in two and the halves are chained, each
    restarting from the particle positions, densities and Jacobians reached
    by the previous one; after ``max_halvings`` splits the
    :class:`NoContraction` is re-raised.
    """
    u1, u2 = u0
    g = check_same_grid(u1, u2)
    x0 = g.centers.astype(float).copy()
    w0 = np.stack([u1.values, u2.values]).astype(float)
    M = default_modes(K) if n_modes is None else int(n_modes)
    n_levels = n_levels or max(4, int(np.ceil(tau / 0.0025)))
    n_levels += n_levels % 2
    sol = CharacteristicSolution(x0.copy(), np.array([0.0]), x0[None].copy(), w0[0][None].copy(),
                                 w0[1][None].copy(), np.ones((1, x0.size)))
    if tau <= 0:
        sol.residuals.append([0.0])
        return sol

    def advance(t0, span, depth, x, w, J):
        try:
            lv = max(2, int(np.ceil(n_levels * span / tau)))
            lv += lv % 2
            times, X, W, Jn, res = _picard(x, w, J, g.dx, K, models, t0, span, lv, max_iter, tol, M)
        except NoContraction:
            if depth >= max_halvings:
                raise
            x, w, J = advance(t0, span / 2, depth + 1, x, w, J)
            return advance(t0 + span / 2, span / 2, depth + 1, x, w, J)
        sol.times = np.concatenate([sol.times, times[1:]])
        sol.positions = np.concatenate([sol.positions, X[1:]])
        sol.w1 = np.concatenate([sol.w1, W[0, 1:]])
        sol.w2 = np.concatenate([sol.w2, W[1, 1:]])
        sol.jacobian = np.concatenate([sol.jacobian, Jn[1:]])
        sol.residuals.append(res)
        sol.segments.append((t0, t0 + span))
        return X[-1], W[:, -1], Jn[-1]

    advance(0.0, float(tau), 0, x0, w0, np.ones_like(x0))
    return sol


@dataclass
class CrossValidationReport:
    t: float
    l1: float
    l1_species: tuple[float, float]


def _push_forward(xs: np.ndarray, vals: np.ndarray, targets: np.ndarray) -> np.ndarray:
    xp = np.append(xs, xs[0] + LENGTH)
    yp = np.append(vals, vals[0])
    spline = CubicSpline(xp, yp, bc_type="periodic")
    return spline(xs[0] + np.mod(targets - xs[0], LENGTH))


def cross_validate(char_sol: CharacteristicSolution, fv_state: SimState, t: float) -> CrossValidationReport:
    """L1 distance between the Lagrangian and finite-volume densities at time ``t``.

    Lagrangian values sit at ``X(t; z_j)``; they are carried to the cell
    centers by a periodic cubic spline.
    """
    tol = 1e-10 * max(1.0, abs(t))
    if abs(fv_state.t - t) > tol:
        raise TimeMismatch(f"finite-volume state is at t={fv_state.t}, requested {t}")
    k = int(np.argmin(np.abs(char_sol.times - t)))
    if abs(char_sol.times[k] - t) > tol:
        raise TimeMismatch(f"no characteristic level at t={t}")
    X = char_sol.positions[k]
    g: PeriodicGrid = fv_state.grid
    errs = []
    for w, u in ((char_sol.w1[k], fv_state.u1), (char_sol.w2[k], fv_state.u2)):
        pushed = _push_forward(X, w, g.centers)
        errs.append(float(np.sum(np.abs(pushed - u.values)) * g.dx))
    return CrossValidationReport(float(t), errs[0] + errs[1], (errs[0], errs[1]))
