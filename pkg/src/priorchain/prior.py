"""The prior family dtheta / (a + ||theta||^2)^b and its radial disintegration.

A spec is valid when the induced marginal is sigma-finite: b < p/2 for a = 0,
b <= p/2 for a > 0.  The strong range additionally requires p >= 3 and
b >= p/2 - 1.  The flat prior (Lebesgue measure) is a distinguished variant
used by the random-walk demonstration, not the limit b -> 0.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as _sp

from .errors import DomainError


@dataclass(frozen=True)
class PriorSpec:
    p: int
    a: float = 0.0
    b: float = 1.0
    flat: bool = False

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise DomainError("p must be an integer >= 1")
        object.__setattr__(self, "p", int(self.p))
        if self.flat:
            object.__setattr__(self, "a", 0.0)
            object.__setattr__(self, "b", 0.0)
            return
        if self.a < 0:
            raise DomainError("a must be non-negative")
        if self.b <= 0:
            raise DomainError("b must be positive (use flat_prior for the flat variant)")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))

    @classmethod
    def flat_prior(cls, p):
        return cls(p=p, a=0.0, b=1.0, flat=True)

    @property
    def alpha(self):
        """Half the dimension; shape parameter of the radial factor."""
        return 0.5 * self.p

    def label(self):
        if self.flat:
            return f"flat(p={self.p})"
        return f"(p={self.p}, a={self.a:g}, b={self.b:g})"


@dataclass(frozen=True)
class Classification:
    valid: bool
    strong_range: bool
    reason: str = ""


def validate(spec: PriorSpec) -> Classification:
    """Total classification of a spec: invalid, or valid with the strong flag.

    Invalidity (a non-sigma-finite marginal) is a return value, never an
    exception.  The three outcomes {invalid, valid-weak, valid-strong} are
    exhaustive and mutually exclusive.
    """
    if spec.flat:
        return Classification(True, False, "flat variant (random-walk demo)")
    half_p = 0.5 * spec.p
    if spec.a == 0.0:
        if spec.b >= half_p:
            return Classification(False, False,
                                  f"a = 0 requires b < p/2 = {half_p:g} for a sigma-finite marginal")
        upper_ok = True
    else:
        if spec.b > half_p:
            return Classification(False, False,
                                  f"a > 0 requires b <= p/2 = {half_p:g} for a sigma-finite marginal")
        upper_ok = True
    strong = upper_ok and spec.p >= 3 and spec.b >= half_p - 1.0
    return Classification(True, strong,
                          "strong range" if strong else "valid, outside the strong range")


def g0(z, spec: PriorSpec):
    """Radial prior factor (a + z)^(-b); 1 for the flat variant."""
    arr = np.asarray(z, dtype=np.float64)
    if np.any(arr < 0):
        raise DomainError("z must be non-negative")
    if spec.flat:
        out = np.ones_like(arr)
    else:
        if spec.a == 0.0 and np.any(arr == 0.0):
            raise DomainError("g0 has a pole at z = 0 when a = 0")
        out = (spec.a + arr) ** (-spec.b)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def log_g0(z, spec: PriorSpec):
    arr = np.asarray(z, dtype=np.float64)
    if spec.flat:
        out = np.zeros_like(arr)
    else:
        out = -spec.b * np.log(spec.a + arr)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def s_density(beta, spec: PriorSpec):
    """Density of the radial mixing measure on (0, inf).

    Equals pi^(p/2) / Gamma(p/2) * g0(beta) * beta^(p/2 - 1); the prior is the
    uniform distribution on the sphere of squared radius beta mixed by this
    (infinite) measure.  The normalising constant is evaluated in log space.
    """
    arr = np.asarray(beta, dtype=np.float64)
    if np.any(arr <= 0):
        raise DomainError("beta must be positive")
    log_c = 0.5 * spec.p * math.log(math.pi) - _sp.gammaln(0.5 * spec.p)
    out = np.exp(log_c + log_g0(arr, spec) + (0.5 * spec.p - 1.0) * np.log(arr))
    return float(out) if np.isscalar(beta) or arr.ndim == 0 else out
