"""Numerically stable special-function and sampling primitives.

Everything evaluates in log space with log-sum-exp reductions; no intermediate
overflows for noncentrality, argument or series index up to 1e6.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from . import _kernels as K
from .errors import DomainError, TruncationError
from .rng import RngStream


@dataclass(frozen=True)
class SeriesCtl:
    """Numerical control knobs.

    rel_tol      relative tolerance for series truncation and quadrature
    max_terms    cap on the number of series terms in one window
    quad_panels  panel count for composite quadrature rules
    """

    rel_tol: float = 1e-10
    max_terms: int = 200_000
    quad_panels: int = 32

    def __post_init__(self):
        if not (0.0 < self.rel_tol < 1.0):
            raise DomainError("rel_tol must lie in (0, 1)")
        if self.max_terms < 1 or self.quad_panels < 1:
            raise DomainError("max_terms and quad_panels must be >= 1")


DEFAULT_CTL = SeriesCtl()


def log_gamma(x):
    """ln Gamma(x) for x > 0 (scalar or array), relative error <= 1e-12."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"log_gamma requires finite x > 0, got {x!r}")
    out = _sp.gammaln(arr)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _pois_logpmf(n, mean):
    return n * math.log(mean) - mean - _sp.gammaln(n + 1.0)


def poisson_weights(mean, ctl=DEFAULT_CTL):
    """Truncated Poisson(mean) table (indices, weights), tail mass <= rel_tol.

    The window starts at the mode and expands until each one-sided tail bound
    falls below rel_tol / 2 (geometric bounds on the term ratios).
    """
    if mean < 0:
        raise DomainError("mean must be non-negative")
    if mean == 0:
        return np.array([0]), np.array([1.0])
    half = 0.5 * ctl.rel_tol
    mode = int(mean)

    hi = mode
    while True:
        # right tail beyond hi: term(hi+1) / (1 - ratio) once ratio < 1
        r = mean / (hi + 2.0)
        if r < 1.0 and math.exp(_pois_logpmf(hi + 1.0, mean)) / (1.0 - r) <= half:
            break
        hi += max(1, int(0.25 * math.sqrt(mean)) + 1)
        if hi - mode > ctl.max_terms:
            raise TruncationError("poisson_weights: right tail not bounded within max_terms",
                                  mean=mean, terms=hi - mode)
    lo = mode
    while lo > 0:
        r = lo / mean
        if r < 1.0 and math.exp(_pois_logpmf(lo - 1.0, mean)) / (1.0 - r) <= half:
            break
        lo = max(0, lo - max(1, int(0.25 * math.sqrt(mean)) + 1))
    if hi - lo + 1 > ctl.max_terms:
        raise TruncationError("poisson_weights: window exceeds max_terms",
                              mean=mean, terms=hi - lo + 1)
    ns = np.arange(lo, hi + 1)
    logw = ns * math.log(mean) - mean - _sp.gammaln(ns + 1.0)
    return ns, np.exp(logw)


def _series_window(p, lam, v_lo, v_hi, ctl):
    """Index window covering the dominant terms of the mixture series.

    The summand over n peaks near n*(v) solving n (n + p/2) = lam v / 4; the
    window spans the peaks for v in [v_lo, v_hi] plus a 12-sigma guard.
    """
    def peak(v):
        return 0.5 * (-0.5 * p + math.sqrt(0.25 * p * p + lam * v))

    n_lo_pk = peak(v_lo)
    n_hi_pk = peak(v_hi)
    guard = 12.0 * math.sqrt(n_hi_pk + 1.0) + 40.0
    lo = max(0, int(n_lo_pk - guard))
    hi = int(n_hi_pk + guard) + 1
    if hi - lo + 1 > ctl.max_terms:
        raise TruncationError("ncx2 series window exceeds max_terms",
                              p=p, lam=lam, terms=hi - lo + 1)
    return lo, hi


def ncx2_logpdf(v, p, lam, ctl=DEFAULT_CTL):
    """Log density at v of ||Z||^2 with Z ~ N_p(mu, I), ||mu||^2 = lam.

    Evaluated as the Poisson mixture of central chi-square densities, entirely
    in log space.  Accepts scalar or array v > 0.
    """
    if p < 1 or int(p) != p:
        raise DomainError("p must be a positive integer")
    if lam < 0:
        raise DomainError("lam must be non-negative")
    varr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if np.any(varr <= 0.0):
        raise DomainError("v must be positive")
    half_p = 0.5 * p
    if lam == 0.0:
        out = ((half_p - 1.0) * np.log(0.5 * varr) - 0.5 * varr
               - math.log(2.0) - _sp.gammaln(half_p))
    else:
        lo, hi = _series_window(p, lam, float(varr.min()), float(varr.max()), ctl)
        ns = np.arange(lo, hi + 1, dtype=np.float64)
        log_pois = -0.5 * lam + ns * math.log(0.5 * lam) - _sp.gammaln(ns + 1.0)
        log_chi = -_sp.gammaln(ns + half_p) - math.log(2.0)
        lv = np.log(0.5 * varr)[:, None]
        terms = log_pois[None, :] + (ns[None, :] + half_p - 1.0) * lv \
            - 0.5 * varr[:, None] + log_chi[None, :]
        out = _sp.logsumexp(terms, axis=1)
    return float(out[0]) if np.isscalar(v) or np.asarray(v).ndim == 0 else out


def ncx2_pdf(v, p, lam, ctl=DEFAULT_CTL):
    """Density of the noncentral chi-square; see :func:`ncx2_logpdf`."""
    return np.exp(ncx2_logpdf(v, p, lam, ctl))


def ncx2_moments(p, lam):
    """First three raw moments (m1, m2, m3) of the noncentral chi-square."""
    if p < 1 or int(p) != p:
        raise DomainError("p must be a positive integer")
    if lam < 0:
        raise DomainError("lam must be non-negative")
    s = lam + p
    m1 = s
    m2 = s * s + 4.0 * lam + 2.0 * p
    m3 = s ** 3 + 12.0 * s * s - 6.0 * lam * p + 24.0 * lam - 6.0 * p * p + 8.0 * p
    return m1, m2, m3


def ncx2_sample(p, lam, rng: RngStream, n=None):
    """Exact draw(s) of ||Z||^2, Z ~ N_p(mu, I) with ||mu||^2 = lam."""
    if p < 1 or int(p) != p:
        raise DomainError("p must be a positive integer")
    if lam < 0:
        raise DomainError("lam must be non-negative")
    if n is None:
        return rng.ncx2(p, lam)
    return rng.ncx2_batch(p, lam, n)


def sphere_uniform(p, rng: RngStream, n=None):
    """Uniform unit vector(s) in R^p."""
    if p < 1 or int(p) != p:
        raise DomainError("p must be a positive integer")
    if n is None:
        return rng.sphere(p)
    return np.stack([rng.sphere(p) for _ in range(n)])


def vmf_direction(mean_dir, kappa, rng: RngStream, n=None):
    """Draw from the sphere density proportional to exp(kappa w.mean_dir)."""
    mu = np.asarray(mean_dir, dtype=np.float64)
    if abs(float(np.dot(mu, mu)) - 1.0) > 1e-9:
        raise DomainError("mean_dir must have unit norm")
    if kappa < 0:
        raise DomainError("kappa must be non-negative")
    if n is None:
        return rng.vmf(mu, kappa)
    return np.stack([rng.vmf(mu, kappa) for _ in range(n)])
