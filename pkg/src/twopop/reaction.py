"""Per-species growth laws h(u) and checks of their structural hypotheses.

Each species i grows at rate ``u_i * h_i(u1 + u2)``.  Two families are
built in:

* logistic: ``h(u) = b (1 - u/cap)``, root ``cap``
* contact inhibition: ``h(u) = b/(1 + gamma u) - mu``, root ``(b - mu)/(gamma mu)``

plus :class:`NoReaction` (h = 0) for pure-transport experiments.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AssumptionViolated, NegativeDensity, NoPositiveRoot


class ReactionModel:
    kind: str = ""

    def h(self, u):
        raise NotImplementedError

    def dh(self, u):
        raise NotImplementedError

    @property
    def root(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class Logistic(ReactionModel):
    b: float
    cap: float
    kind = "logistic"

    def __post_init__(self):
        if not (self.b > 0 and self.cap > 0):
            raise ValueError("logistic growth needs b > 0 and cap > 0")

    def h(self, u):
        return self.b * (1.0 - np.asarray(u, float) / self.cap)

    def dh(self, u):
        return np.full_like(np.asarray(u, float), -self.b / self.cap)

    @property
    def root(self) -> float:
        return float(self.cap)


@dataclass(frozen=True)
class ContactInhibition(ReactionModel):
    b: float
    gamma: float
    mu: float
    kind = "contact_inhibition"

    def __post_init__(self):
        if not (self.b > 0 and self.gamma > 0 and self.mu > 0):
            raise ValueError("contact inhibition needs b, gamma, mu > 0")

    def h(self, u):
        return self.b / (1.0 + self.gamma * np.asarray(u, float)) - self.mu

    def dh(self, u):
        return -self.b * self.gamma / (1.0 + self.gamma * np.asarray(u, float)) ** 2

    @property
    def root(self) -> float:
        if self.b <= self.mu:
            raise NoPositiveRoot(f"b={self.b} <= mu={self.mu}: h < 0 everywhere")
        return (self.b - self.mu) / (self.gamma * self.mu)


@dataclass(frozen=True)
class NoReaction(ReactionModel):
    """h = 0.  ``reference`` stands in for the root when an energy is needed."""

    reference: float = 1.0
    kind = "none"

    def h(self, u):
        return np.zeros_like(np.asarray(u, float))

    def dh(self, u):
        return np.zeros_like(np.asarray(u, float))

    @property
    def root(self) -> float:
        return float(self.reference)


_KINDS = {"logistic": Logistic, "contact_inhibition": ContactInhibition, "none": NoReaction}


def reaction_from_dict(d: dict) -> ReactionModel:
    d = dict(d)
    kind = d.pop("kind", None) or d.pop("reaction", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown reaction kind {kind!r}")
    return _KINDS[kind](**d)


def eval_h(m: ReactionModel, u):
    if np.any(np.asarray(u) < 0):
        raise NegativeDensity("growth rate requested at negative density")
    out = m.h(u)
    return float(out) if np.ndim(out) == 0 else out


def root(m: ReactionModel) -> float:
    return m.root


@dataclass
class AssumptionReport:
    root: float
    probe_max: float
    sign_ok: bool
    concave_ok: bool
    limsup_ok: bool
    max_second_difference: float
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.sign_ok and self.concave_ok and self.limsup_ok


def validate_assumptions(m: ReactionModel, probe_max: float | None = None,
                         n_probe: int = 1000, tol: float = 1e-8) -> AssumptionReport:
    """Check sign structure, concavity of u*h(u) and negativity at large u.

    Checks run on ``n_probe`` points of ``[0, max(2r, probe_max)]``.
    Raises :class:`AssumptionViolated` naming the first failed clause.
    """
    r = m.root
    if probe_max is None:
        probe_max = 2.0 * r
    if probe_max <= r:
        raise ValueError("probe_max must exceed the root")
    u = np.linspace(0.0, max(2.0 * r, probe_max), n_probe)
    hv = m.h(u)
    away = np.abs(u - r) > 1e-12 * max(r, 1.0)
    sign_ok = bool(np.all(np.sign(hv[away]) == np.sign(r - u[away])))
    g = u * hv
    d2 = g[2:] - 2 * g[1:-1] + g[:-2]
    max_d2 = float(d2.max())
    concave_ok = max_d2 <= tol
    limsup_ok = bool(m.h(probe_max) < 0)
    notes = []
    if isinstance(m, Logistic):
        notes.append("logistic h is unbounded below as u grows; bounds hold only on the probed range")
    rep = AssumptionReport(r, float(probe_max), sign_ok, concave_ok, limsup_ok, max_d2, notes)
    if not sign_ok:
        raise AssumptionViolated("sign", "h does not change sign exactly at its root")
    if not concave_ok:
        raise AssumptionViolated("concavity", f"second difference of u*h(u) reaches {max_d2:.3e}")
    if not limsup_ok:
        raise AssumptionViolated("limsup", f"h({probe_max}) >= 0")
    return rep
