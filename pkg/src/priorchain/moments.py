"""Analytic engine for the increment moments of the radial chain.

Everything reduces to one family of tilt integrals

    u_q(m) = E[(a + G)^(-q)],   G ~ Gamma(m, scale=2),

computed in log space (closed form when a = 0).  The mixture coefficients

    w_k(n) = u_b(n + alpha + k) * Gamma(n + alpha + k) / Gamma(n + alpha)

with alpha = p/2 feed Poisson-weighted ratios r_k(y), and the first three
increment moments at state eta are assembled from outer expectations of the
telescoped products 2^k r_1(y) ... r_k(y) against the noncentral chi-square
weight.  The outer quadrature self-normalises against the same node set, so
window truncation cancels to first order.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from . import quadrature as quad
from .errors import DomainError, NumericalError
from .prior import PriorSpec, validate
from .specfun import DEFAULT_CTL, SeriesCtl

_LOG2 = math.log(2.0)
_BLOCK = 4096


@dataclass(frozen=True)
class MomentTriple:
    eta: float
    mu1: float
    mu2: float
    mu3: float


@dataclass(frozen=True)
class RatioDecomposition:
    k: int
    y: float
    ratio: float
    psi: float


def _ncx2_logw(v, p, lam):
    """Log noncentral chi-square density used as a quadrature weight.

    Bessel-function evaluation (exponentially scaled); fast and vectorised.
    The series form lives in specfun.ncx2_logpdf; the two are cross-checked
    in the test suite so each can serve as the other's oracle.
    """
    v = np.asarray(v, dtype=np.float64)
    half_p = 0.5 * p
    if lam == 0.0:
        return (half_p - 1.0) * np.log(0.5 * v) - 0.5 * v - _LOG2 - _sp.gammaln(half_p)
    nu = half_p - 1.0
    s = np.sqrt(lam * v)
    return (-_LOG2 - 0.5 * (v + lam) + 0.5 * nu * (np.log(v) - math.log(lam))
            + np.log(_sp.ive(nu, s)) + s)


def ncx2_outer_window(p, eta):
    """[lo, hi] covering all but ~1e-180 of the chi-square mass."""
    sig = math.sqrt(2.0 * p + 4.0 * eta)
    lo = max(0.0, eta + p - 42.0 * sig)
    hi = eta + p + 42.0 * sig + 60.0
    return lo, hi


def _log_tilt_integrals(ms, a, exponents, panels, order=24):
    """log integral of (a+z)^(-q) z^(m-1) e^(-z/2) dz for each m and q.

    One node layout per m, shared across all exponents q (correlated error
    cancellation in ratios such as phi).  Returns array (len(ms), len(qs)).
    """
    ms = np.asarray(ms, dtype=np.float64)
    out = np.empty((ms.size, len(exponents)))
    lo = np.maximum(0.0, 2.0 * ms - 40.0 * np.sqrt(ms) - 250.0)
    hi = 2.0 * ms + 40.0 * np.sqrt(ms) + 250.0
    for i, m in enumerate(ms):
        nodes, wts = quad.window_nodes(lo[i], hi[i], panels, order)
        base = (m - 1.0) * np.log(nodes) - 0.5 * nodes
        lw = np.log(wts)
        lz = np.log(a + nodes)
        for j, q in enumerate(exponents):
            out[i, j] = _sp.logsumexp(base - q * lz + lw)
    return out


class MomentEngine:
    """Per-spec cache of tilt tables and ratio machinery."""

    def __init__(self, spec: PriorSpec, ctl: SeriesCtl = DEFAULT_CTL):
        cls = validate(spec)
        if not cls.valid and not spec.flat:
            raise DomainError(f"spec {spec.label()} is invalid: {cls.reason}")
        self.spec = spec
        self.ctl = ctl
        self.alpha = spec.alpha
        # blocks of log u_b(j + alpha) and log u_{b+1}(j + alpha), j integer
        self._blocks = {}

    # -- tilt tables ---------------------------------------------------------

    def _build_block(self, b0):
        js = np.arange(b0, b0 + _BLOCK, dtype=np.float64)
        ms = js + self.alpha
        a, b = self.spec.a, self.spec.b
        if self.spec.flat:
            logu = np.zeros(ms.size)
            logu1 = np.zeros(ms.size)
        elif a == 0.0:
            base = _sp.gammaln(ms - b) - b * _LOG2 - _sp.gammaln(ms)
            logu = base
            logu1 = np.full(ms.size, -np.inf)  # unused when a = 0
        else:
            panels = self.ctl.quad_panels
            raw = _log_tilt_integrals(ms, a, (b, b + 1.0), panels)
            check = _log_tilt_integrals(ms[:: max(1, ms.size // 8)], a, (b,), 2 * panels)
            drift = np.max(np.abs(raw[:: max(1, ms.size // 8), 0] - check[:, 0]))
            if drift > max(self.ctl.rel_tol, 1e-13) * 50.0:
                raise NumericalError("tilt-integral quadrature did not converge",
                                     drift=float(drift), block=b0)
            norm = ms * _LOG2 + _sp.gammaln(ms)
            logu = raw[:, 0] - norm
            logu1 = raw[:, 1] - norm
        self._blocks[b0] = (logu, logu1)

    def _fetch(self, lo, hi):
        """(log u_b, log u_{b+1}) for integer offsets j in [lo, hi]."""
        first = (lo // _BLOCK) * _BLOCK
        last = (hi // _BLOCK) * _BLOCK
        parts0, parts1 = [], []
        for b0 in range(first, last + 1, _BLOCK):
            if b0 not in self._blocks:
                self._build_block(b0)
            u0, u1 = self._blocks[b0]
            parts0.append(u0)
            parts1.append(u1)
        u0 = np.concatenate(parts0)
        u1 = np.concatenate(parts1)
        s = lo - first
        return u0[s:s + (hi - lo + 1)], u1[s:s + (hi - lo + 1)]

    def log_tilt_mean(self, j):
        """log u_b(j + alpha) for integer j >= 0."""
        u0, _ = self._fetch(j, j)
        return float(u0[0])

    # -- mixture coefficients ------------------------------------------------

    def log_w_range(self, lo, hi, k):
        """log w_k(n) for n in [lo, hi]."""
        u0, _ = self._fetch(lo + k, hi + k)
        ns = np.arange(lo, hi + 1, dtype=np.float64)
        return u0 + _sp.gammaln(ns + self.alpha + k) - _sp.gammaln(ns + self.alpha)

    def log_w(self, n, k):
        return float(self.log_w_range(n, n, k)[0])

    def phi_range(self, lo, hi):
        """phi(n) = a b u_{b+1}(n + alpha) / u_b(n + alpha) on [lo, hi]."""
        if self.spec.a == 0.0 or self.spec.flat:
            return np.zeros(hi - lo + 1)
        u0, u1 = self._fetch(lo, hi)
        return self.spec.a * self.spec.b * np.exp(u1 - u0)

    def phi(self, n):
        return float(self.phi_range(n, n)[0])

    # -- Poisson-weighted ratios ----------------------------------------------

    def _window(self, lam):
        sig = math.sqrt(max(lam, 1.0))
        lo = max(0, int(lam - 12.0 * sig - 40.0))
        hi = int(lam + 12.0 * sig + 40.0) + 1
        if hi - lo + 1 > self.ctl.max_terms:
            raise NumericalError("Poisson window exceeds max_terms",
                                 lam=lam, terms=hi - lo + 1)
        return lo, hi

    def ratios_grid(self, ys):
        """r_k(y) = E[w_k(N)|y] / E[w_{k-1}(N)|y] for k = 1, 2, 3; rows per y."""
        ys = np.asarray(ys, dtype=np.float64)
        out = np.empty((ys.size, 3))
        pos = ys > 0.0
        if np.any(~pos):
            lw = np.array([self.log_w(0, k) for k in range(4)])
            out[~pos] = np.exp(np.diff(lw))[None, :]
        if not np.any(pos):
            return out
        ysp = ys[pos]
        lam = 0.5 * ysp
        sig = np.sqrt(np.maximum(lam, 1.0))
        lo = np.maximum(0, (lam - 12.0 * sig - 40.0).astype(np.int64))
        hi = (lam + 12.0 * sig + 40.0).astype(np.int64) + 1
        width = int(np.max(hi - lo)) + 1
        if width > self.ctl.max_terms:
            raise NumericalError("Poisson window exceeds max_terms", terms=width)
        n_min, n_max = int(lo.min()), int(hi.max())
        u0, _ = self._fetch(n_min, n_max + 3)
        js = np.arange(n_min, n_max + 4, dtype=np.float64)
        lg_na = _sp.gammaln(js + self.alpha)
        lg_n1 = _sp.gammaln(js + 1.0)
        base = u0 + lg_na  # log u_b(j+alpha) + lgamma(j+alpha) == log-w numerator part

        res = np.empty((ysp.size, 3))
        chunk = max(1, int(4_000_000 // width))
        offs = np.arange(width, dtype=np.int64)
        for c0 in range(0, ysp.size, chunk):
            sl = slice(c0, min(c0 + chunk, ysp.size))
            l = lo[sl][:, None]
            h = hi[sl][:, None]
            n = np.minimum(l + offs[None, :], h)
            valid = (l + offs[None, :]) <= h
            idx = n - n_min
            lam_c = lam[sl][:, None]
            log_pois = n * np.log(lam_c) - lam_c - lg_n1[idx]
            common = np.where(valid, log_pois - lg_na[idx], -np.inf)
            log_e = np.empty((n.shape[0], 4))
            for k in range(4):
                terms = common + base[idx + k]
                mx = terms.max(axis=1)
                log_e[:, k] = mx + np.log(np.sum(np.exp(terms - mx[:, None]), axis=1))
            res[sl] = np.exp(np.diff(log_e, axis=1))
        out[pos] = res
        return out

    def ew_ratio(self, k, y):
        if k not in (1, 2, 3):
            raise DomainError("k must be 1, 2 or 3")
        if y < 0:
            raise DomainError("y must be non-negative")
        r = float(self.ratios_grid(np.array([y]))[0, k - 1])
        psi = r - (self.alpha + 2.0 * (k - self.spec.b - 1.0) + 0.5 * y)
        return RatioDecomposition(k=k, y=float(y), ratio=r, psi=psi)

    # -- outer expectations ----------------------------------------------------

    def _outer_nodes(self, eta):
        lo, hi = ncx2_outer_window(self.spec.p, eta)
        nodes, wts = quad.window_nodes(lo, hi, self.ctl.quad_panels)
        logw = _ncx2_logw(nodes, self.spec.p, eta) + np.log(wts)
        return nodes, logw

    def expect_ratio_products(self, eta):
        """S_k = E[prod_{j<=k} r_j(Y)] for k = 1, 2, 3, Y noncentral chi-square."""
        nodes, logw = self._outer_nodes(eta)
        r = self.ratios_grid(nodes)
        prods = np.cumprod(r, axis=1)
        mx = logw.max()
        w = np.exp(logw - mx)
        z = w.sum()
        return (prods * w[:, None]).sum(axis=0) / z

    def mean_psi(self, k, eta):
        """E[psi_k(Y)] over the chi-square weight; decays like 1/eta."""
        nodes, logw = self._outer_nodes(eta)
        r = self.ratios_grid(nodes)[:, k - 1]
        psi = r - (self.alpha + 2.0 * (k - self.spec.b - 1.0) + 0.5 * nodes)
        mx = logw.max()
        w = np.exp(logw - mx)
        return float((psi * w).sum() / w.sum())

    def mu_triple(self, eta):
        if eta < 0:
            raise DomainError("eta must be non-negative")
        p, b = self.spec.p, self.spec.b
        if self.spec.flat:
            kap2 = 8.0 * (p + eta)
            kap3 = 64.0 * p + 96.0 * eta
            mu1 = 2.0 * p
            mu2 = kap2 + mu1 * mu1
            mu3 = kap3 + 3.0 * kap2 * mu1 + mu1 ** 3
            return MomentTriple(eta=float(eta), mu1=mu1, mu2=mu2, mu3=mu3)
        s1, s2, s3 = self.expect_ratio_products(eta)
        mu1 = 2.0 * s1 - eta
        mu2 = 4.0 * s2 - 4.0 * eta * s1 + eta * eta
        mu3 = 8.0 * s3 - 12.0 * eta * s2 + 6.0 * eta * eta * s1 - eta ** 3
        if eta >= 1.0 and mu2 <= 0.0:
            raise NumericalError("mu2 <= 0 above the positivity floor", eta=eta, mu2=mu2)
        return MomentTriple(eta=float(eta), mu1=mu1, mu2=mu2, mu3=mu3)

    def log_m0(self, v):
        """log of the posterior normaliser E[w_0(N) | v], N ~ Poisson(v/2)."""
        if v < 0:
            raise DomainError("v must be non-negative")
        if v == 0.0:
            return self.log_w(0, 0)
        lo, hi = self._window(0.5 * v)
        lw = self.log_w_range(lo, hi, 0)
        ns = np.arange(lo, hi + 1, dtype=np.float64)
        lam = 0.5 * v
        log_pois = ns * math.log(lam) - lam - _sp.gammaln(ns + 1.0)
        return float(_sp.logsumexp(log_pois + lw))


_ENGINES = {}


def get_engine(spec: PriorSpec, ctl: SeriesCtl = DEFAULT_CTL) -> MomentEngine:
    key = (spec, ctl)
    if key not in _ENGINES:
        _ENGINES[key] = MomentEngine(spec, ctl)
    return _ENGINES[key]


# -- module-level operation wrappers ------------------------------------------

def log_w(n, k, spec: PriorSpec, ctl: SeriesCtl = DEFAULT_CTL):
    """log of the mixture coefficient w_k(n); the coefficient is positive."""
    if n < 0 or int(n) != n:
        raise DomainError("n must be a non-negative integer")
    if k not in (0, 1, 2, 3):
        raise DomainError("k must lie in {0, 1, 2, 3}")
    return get_engine(spec, ctl).log_w(int(n), k)


def phi(n, spec: PriorSpec, ctl: SeriesCtl = DEFAULT_CTL):
    """Tilt correction ratio in the coefficient recursion; 0 when a = 0."""
    if n < 0 or int(n) != n:
        raise DomainError("n must be a non-negative integer")
    return get_engine(spec, ctl).phi(int(n))


def ew_ratio(k, y, spec: PriorSpec, ctl: SeriesCtl = DEFAULT_CTL) -> RatioDecomposition:
    return get_engine(spec, ctl).ew_ratio(k, y)


def mu_triple(eta, spec: PriorSpec, ctl: SeriesCtl = DEFAULT_CTL) -> MomentTriple:
    return get_engine(spec, ctl).mu_triple(eta)


@dataclass(frozen=True)
class AsymptoticReport:
    spec: PriorSpec
    rows: tuple          # (eta, mu1, mu2, mu3, rem1, rem2, rem3)
    decade_ratios: dict  # remainder at 10*eta over remainder at eta


def asymptotic_report(spec: PriorSpec, eta_grid, ctl: SeriesCtl = DEFAULT_CTL) -> AsymptoticReport:
    """Remainder diagnostics mu1 - (2p - 4b), mu2 - 8 eta, mu3 / eta per grid point."""
    etas = [float(e) for e in eta_grid]
    if not etas or any(e <= 0 for e in etas) or sorted(etas) != etas:
        raise DomainError("eta_grid must be non-empty, positive and ascending")
    eng = get_engine(spec, ctl)
    limit = 2.0 * spec.p - 4.0 * spec.b
    rows = []
    for eta in etas:
        t = eng.mu_triple(eta)
        rows.append((eta, t.mu1, t.mu2, t.mu3,
                     t.mu1 - limit, t.mu2 - 8.0 * eta, t.mu3 / eta))
    ratios = {}
    by_eta = {r[0]: r for r in rows}
    for eta in etas:
        if 10.0 * eta in by_eta:
            r_lo, r_hi = by_eta[eta], by_eta[10.0 * eta]
            ratios[eta] = tuple(
                abs(r_hi[4 + j]) / max(abs(r_lo[4 + j]), 1e-300) for j in range(3))
    return AsymptoticReport(spec=spec, rows=tuple(rows), decade_ratios=ratios)
