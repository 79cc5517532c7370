"""Exception types raised across the package."""
from __future__ import annotations


class TwopopError(Exception):
    """Base class for all errors raised by :mod:`twopop`."""


class TailTooHeavy(TwopopError):
    pass


class AliasingRisk(TwopopError):
    pass


class GridMismatch(TwopopError):
    pass


class NegativeDensity(TwopopError):
    pass


class NoPositiveRoot(TwopopError):
    pass


class AssumptionViolated(TwopopError):
    """A structural hypothesis on a growth law failed.

    ``clause`` names the failed check (``"sign"``, ``"concavity"`` or
    ``"limsup"``).
    """

    def __init__(self, clause: str, message: str):
        super().__init__(f"{clause}: {message}")
        self.clause = clause


class CflViolation(TwopopError):
    pass


class NonFiniteState(TwopopError):
    pass


class VelocityUndefined(TwopopError):
    pass


class NoContraction(TwopopError):
    """Picard iteration did not reach the tolerance within ``max_iter``."""

    def __init__(self, message: str, residuals: list[float] | None = None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class TimeMismatch(TwopopError):
    pass


class MonotonicityViolated(TwopopError):
    def __init__(self, t0: float, t1: float, increase: float):
        super().__init__(f"energy increased by {increase:.3e} on [{t0:g}, {t1:g}]")
        self.interval = (t0, t1)
        self.increase = increase


class NoPlateauDetected(TwopopError):
    pass


class MassMismatch(TwopopError):
    pass
