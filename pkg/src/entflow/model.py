"""Coupling space of the XY chain with transverse and longitudinal fields.

The chain is

    H = sum_i [ (1+gamma)/2 X_i X_{i+1} + (1-gamma)/2 Y_i Y_{i+1} + lam Z_i ] + eps sum_i X_i

where ``gamma`` is the anisotropy (``gamma = 1`` is the quantum Ising chain),
``lam`` the transverse field with critical value ``lam = 1`` and ``eps`` a small
longitudinal field that breaks the Z2 symmetry.  Renormalization-group flows
run away from ``lam = 1``, so "further along the flow" means larger ``|1 - lam|``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import NegativeField, NonFinite

LAMBDA_CRITICAL = 1.0


@dataclass(frozen=True)
class CouplingPoint:
    gamma: float
    lam: float
    epsilon: float = 0.0

    def with_lambda(self, lam: float) -> "CouplingPoint":
        return CouplingPoint(self.gamma, lam, self.epsilon)


@dataclass(frozen=True)
class BlockSize:
    L: int

    def __post_init__(self):
        if isinstance(self.L, bool) or int(self.L) != self.L or self.L < 1:
            raise ValueError(f"block size must be a positive integer, got {self.L!r}")

    def __int__(self) -> int:
        return int(self.L)


class RgBranch(enum.Enum):
    ABOVE_CRITICAL = "above_critical"
    BELOW_CRITICAL = "below_critical"


def validate(point: CouplingPoint) -> CouplingPoint:
    """Return ``point`` unchanged if all fields are finite and fields are non-negative."""
    for name in ("gamma", "lam", "epsilon"):
        value = getattr(point, name)
        try:
            finite = math.isfinite(value)
        except TypeError:
            raise NonFinite(f"{name} is not a real number: {value!r}") from None
        if not finite:
            raise NonFinite(f"{name} must be finite, got {value!r}")
    if point.lam < 0:
        raise NegativeField(f"transverse field must be >= 0, got {point.lam!r}")
    if point.epsilon < 0:
        raise NegativeField(f"longitudinal field must be >= 0, got {point.epsilon!r}")
    return point


def flow_distance(point: CouplingPoint) -> float:
    """Distance ``|1 - lam|`` from the critical field."""
    return abs(LAMBDA_CRITICAL - point.lam)


def branch(point: CouplingPoint) -> RgBranch | None:
    """Flow branch of ``point``; ``None`` at the critical field itself."""
    if point.lam > LAMBDA_CRITICAL:
        return RgBranch.ABOVE_CRITICAL
    if point.lam < LAMBDA_CRITICAL:
        return RgBranch.BELOW_CRITICAL
    return None


def further_along(a: CouplingPoint, b: CouplingPoint) -> bool:
    """True if ``b`` lies strictly further along the same RG branch than ``a``.

    The critical point counts as the common origin of both branches.
    """
    ba, bb = branch(a), branch(b)
    if bb is None or (ba is not None and ba is not bb):
        return False
    return flow_distance(b) > flow_distance(a)


def same_branch(lams) -> bool:
    """True if no two fields in ``lams`` sit on opposite sides of the critical point."""
    above = any(x > LAMBDA_CRITICAL for x in lams)
    below = any(x < LAMBDA_CRITICAL for x in lams)
    return not (above and below)
