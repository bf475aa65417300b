"""Scalar amenable regularizers and their proximal operators.

Every penalty is stored unit-normalized, i.e. with slope 1 at ``0+``, and
scaled by ``spec.weight``.  The proximal operators take a *combined step*
``step``; the effective shrinkage threshold is ``theta = step * weight`` and
the operator solves

    argmin_x  step * weight * phi(|x|) + 0.5 * (x - y)**2

Families and the meaning of ``gamma``:

=========  ===============================================  =========
family     unit penalty                                     gamma
=========  ===============================================  =========
L1         t                                                unused
CappedL1   min(t, c/2)                                      cap c
SCAD       t up to 1, (2at - t^2 - 1)/(2(a-1)) up to a,     knot a > 2
           (a+1)/2 beyond
MCP        t - t^2/(2g) up to g, g/2 beyond                 knee g
=========  ===============================================  =========
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError, DomainError

__all__ = [
    "Family",
    "RegularizerSpec",
    "ProxResult",
    "phi",
    "phi_derivative",
    "weak_convexity",
    "check_step",
    "zero_threshold",
    "prox",
    "prox_array",
    "prox_vector",
]


class Family(enum.Enum):
    L1 = "L1"
    CappedL1 = "CappedL1"
    SCAD = "SCAD"
    MCP = "MCP"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "l1": cls.L1,
            "cappedl1": cls.CappedL1,
            "capped": cls.CappedL1,
            "scad": cls.SCAD,
            "mcp": cls.MCP,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ConfigurationError(f"unknown regularizer family {name!r}") from None


@dataclass(frozen=True)
class RegularizerSpec:
    """A concrete amenable penalty ``weight * phi_gamma``.

    Parameters
    ----------
    family : Family or str
    gamma : float
        Shape parameter. Cap ``c`` for CappedL1, knot ``a > 2`` for SCAD,
        knee for MCP. Ignored (but must be positive) for L1.
    weight : float
        Multiplier applied outside the unit-normalized penalty.
    """

    family: Family
    gamma: float = 1.0
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "weight", float(self.weight))
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if not np.isfinite(self.weight) or self.weight <= 0:
            raise ConfigurationError(f"weight must be positive, got {self.weight}")
        if self.family is Family.SCAD and self.gamma <= 2:
            raise ConfigurationError(f"SCAD knot must exceed 2, got {self.gamma}")

    def to_dict(self):
        return {"family": self.family.value, "gamma": self.gamma, "weight": self.weight}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"family", "gamma", "weight"}
        if unknown:
            raise ConfigurationError(f"unknown regularizer keys: {sorted(unknown)}")
        if "family" not in d:
            raise ConfigurationError("regularizer needs a 'family'")
        return cls(d["family"], d.get("gamma", 1.0), d.get("weight", 1.0))


class ProxResult(NamedTuple):
    value: float
    is_zero: bool


def _unit_phi(spec, t):
    g = spec.gamma
    fam = spec.family
    if fam is Family.L1:
        return t.copy()
    if fam is Family.CappedL1:
        return np.minimum(t, 0.5 * g)
    if fam is Family.MCP:
        return np.where(t <= g, t - t * t / (2.0 * g), 0.5 * g)
    # SCAD with knots 1 and a
    a = g
    mid = (2.0 * a * t - t * t - 1.0) / (2.0 * (a - 1.0))
    return np.where(t <= 1.0, t, np.where(t <= a, mid, 0.5 * (a + 1.0)))


def _unit_dphi(spec, t):
    g = spec.gamma
    fam = spec.family
    if fam is Family.L1:
        return np.ones_like(t)
    if fam is Family.CappedL1:
        return np.where(t < 0.5 * g, 1.0, 0.0)
    if fam is Family.MCP:
        return np.maximum(1.0 - t / g, 0.0)
    a = g
    return np.where(t <= 1.0, 1.0, np.where(t <= a, (a - t) / (a - 1.0), 0.0))


def _as_float_array(t):
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0


def phi(spec, t):
    """Penalty value ``weight * phi_gamma(t)`` for ``t >= 0`` (scalar or array)."""
    arr, scalar = _as_float_array(t)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("phi is defined for nonnegative arguments")
    out = spec.weight * _unit_phi(spec, np.atleast_1d(arr))
    return float(out[0]) if scalar else out.reshape(arr.shape)


def phi_derivative(spec, t):
    """Derivative of the penalty for ``t > 0``; exactly 0 in flat regions."""
    arr, scalar = _as_float_array(t)
    if np.any(~(arr > 0)):
        raise DomainError("phi_derivative requires t > 0")
    out = spec.weight * _unit_dphi(spec, np.atleast_1d(arr))
    return float(out[0]) if scalar else out.reshape(arr.shape)


def weak_convexity(spec):
    """Weak-convexity constant of the weighted penalty ``weight * phi_gamma``.

    CappedL1 is not weakly convex at its kink; ``weight / c`` is used as an
    effective constant so that the step check below keeps the prox threshold
    under the cap.
    """
    fam = spec.family
    if fam is Family.L1:
        unit = 0.0
    elif fam is Family.MCP:
        unit = 1.0 / spec.gamma
    elif fam is Family.SCAD:
        unit = 1.0 / (spec.gamma - 1.0)
    else:
        unit = 1.0 / spec.gamma
    return spec.weight * unit


def check_step(spec, step):
    """Raise unless the prox subproblem with combined step ``step`` is well posed."""
    step = float(step)
    if not np.isfinite(step) or step <= 0:
        raise ConfigurationError(f"prox step must be positive, got {step}")
    nu = weak_convexity(spec)
    if nu * step >= 1.0:
        raise ConfigurationError(
            f"{spec.family.value} prox with step {step:g} is not strongly convex: "
            f"weak convexity {nu:g} * step = {nu * step:g} >= 1"
        )
    return step


def zero_threshold(spec, step):
    """Largest ``|y|`` mapped to exactly zero by ``prox(spec, y, step)``."""
    check_step(spec, step)
    return step * spec.weight


def _prox_magnitude(spec, a, theta):
    # a >= 0 elementwise; returns the prox of the magnitude
    fam = spec.family
    g = spec.gamma
    soft = np.maximum(a - theta, 0.0)
    # the firm and SCAD-middle branches meet the identity at the knee; clamping
    # keeps rounding from pushing the output past |y|
    if fam is Family.L1:
        return soft
    if fam is Family.CappedL1:
        # two local minimizers; at the tie keep the smaller one
        return np.where(a <= 0.5 * g + 0.5 * theta, soft, a)
    if fam is Family.MCP:
        firm = np.minimum(soft / (1.0 - theta / g), a)
        return np.where(a > g, a, firm)
    s = g  # SCAD knot
    middle = np.minimum(((s - 1.0) * a - theta * s) / (s - 1.0 - theta), a)
    return np.where(a <= 1.0 + theta, soft, np.where(a <= s, middle, a))


def prox_array(spec, y, step):
    """Elementwise prox of an array. ``step`` is the combined step (e.g. tau*lambda)."""
    check_step(spec, step)
    y = np.asarray(y, dtype=float)
    theta = step * spec.weight
    mag = _prox_magnitude(spec, np.abs(y), theta)
    # identity region returns y itself, bit for bit
    out = np.where(mag == np.abs(y), y, np.copysign(mag, y))
    return out + 0.0  # turns -0.0 into +0.0


def prox(spec, y, tau):
    """Scalar proximal operator.

    Parameters
    ----------
    spec : RegularizerSpec
    y : float
    tau : float
        Combined step; the prox objective is
        ``tau * phi(spec, |x|) + 0.5 * (x - y)**2``.

    Returns
    -------
    ProxResult
    """
    x = float(prox_array(spec, np.array([y], dtype=float), tau)[0])
    return ProxResult(x, x == 0.0)


def prox_vector(spec, y, tau):
    """Elementwise prox of a vector, plus the boolean support of the result."""
    x = prox_array(spec, y, tau)
    return x, x != 0.0
