"""Drift criterion for recurrence of the radial chain.

The test function is f(x) = log(log(e + x)), whose first four derivatives
have the fixed sign pattern +, -, +, -.  A Taylor bound on the one-step drift
of f turns the three increment moments into a scalar bracket whose negativity
(together with the moment-ratio condition and an escape bound on compact
sets) is the numerically checkable part of the recurrence criterion.  The
threshold is grid-certified, so the verdict is labelled evidence, not proof.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature as quad
from .errors import DomainError, NumericalError
from .moments import MomentTriple, _ncx2_logw, get_engine, ncx2_outer_window
from .prior import PriorSpec, log_g0, validate
from .specfun import DEFAULT_CTL, SeriesCtl

_E = math.e


def drift_value(x):
    """f(x) = log(log(e + x)); monotone from [0, inf) onto [0, inf)."""
    return np.log(np.log(_E + np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class DriftDerivatives:
    x: float
    value: float
    d1: float
    d2: float
    d3: float
    d4: float


def drift_derivatives(x) -> DriftDerivatives:
    """Value and first four derivatives of the drift function at x >= 0."""
    if x < 0:
        raise DomainError("x must be non-negative")
    s = _E + x
    L = math.log(s)
    d1 = 1.0 / (s * L)
    d2 = -(L + 1.0) / (s ** 2 * L ** 2)
    d3 = (2.0 * L * L + 3.0 * L + 2.0) / (s ** 3 * L ** 3)
    d4 = -(6.0 * L ** 3 + 7.0 * L * L + 12.0 * L + 6.0) / (s ** 4 * L ** 4)
    return DriftDerivatives(x=float(x), value=math.log(L), d1=d1, d2=d2, d3=d3, d4=d4)


@dataclass(frozen=True)
class BracketTerms:
    """Both algebraic forms of the Taylor drift bound at one state.

    ``bracket`` is the factored form -1 + e log(x+e)/x + (psi1 + psi2)/(x f');
    ``direct`` is 1 + psi1 + x f''/f' + psi2.  They satisfy
    direct = x f' * bracket identically; ``agreement_rel`` records the
    numerical residual of that identity.  ``bound`` = f' mu2 / (2x) * direct
    dominates the one-step drift of f wherever the ratio condition holds.
    """

    eta: float
    bracket: float
    direct: float
    psi1: float
    psi2: float
    bound: float
    cond21_lhs: float
    cond21_rhs: float
    agreement_rel: float

    @property
    def cond21_holds(self):
        return self.cond21_lhs <= self.cond21_rhs


def taylor_bracket(eta, moments: MomentTriple, psi1_eps=0.5, psi1_value=None,
                   check=True) -> BracketTerms:
    if eta <= 0:
        raise DomainError("eta must be positive")
    if moments.mu2 <= 0:
        raise DomainError("mu2 must be positive")
    if psi1_value is None:
        if not (0.0 < psi1_eps < 1.0):
            raise DomainError("psi1_eps must lie in (0, 1)")
        psi1 = eta ** (-psi1_eps)
    else:
        psi1 = float(psi1_value)
    d = drift_derivatives(eta)
    psi2 = 2.0 * d.d3 * moments.mu3 * eta / (6.0 * d.d1 * moments.mu2)
    L = math.log(_E + eta)
    bracket = -1.0 + _E * L / eta + (psi1 + psi2) / (eta * d.d1)
    direct = 1.0 + psi1 + eta * d.d2 / d.d1 + psi2
    agree = abs(direct - eta * d.d1 * bracket) / max(1.0, abs(direct))
    if check and agree > 1e-9:
        raise NumericalError("bracket forms disagree", eta=eta, residual=agree)
    bound = d.d1 * moments.mu2 / (2.0 * eta) * direct
    return BracketTerms(eta=float(eta), bracket=bracket, direct=direct,
                        psi1=psi1, psi2=psi2, bound=bound,
                        cond21_lhs=2.0 * eta * moments.mu1,
                        cond21_rhs=moments.mu2 * (1.0 + psi1),
                        agreement_rel=agree)


def default_eta_grid(lo=1.0, hi=1e6, points=61):
    return np.logspace(math.log10(lo), math.log10(hi), points)


def find_threshold(spec: PriorSpec, eta_grid=None, psi1_eps=0.5,
                   ctl: SeriesCtl = DEFAULT_CTL):
    """Smallest grid point from which the drift conditions hold on the grid.

    Returns None when no such point exists.  The grid must span at least
    three decades so the asymptotic regime is actually probed.
    """
    grid = default_eta_grid() if eta_grid is None else np.asarray(eta_grid, dtype=np.float64)
    if grid.size < 3 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise DomainError("eta_grid must be ascending and positive")
    if grid[-1] / grid[0] < 1e3:
        raise DomainError("eta_grid must span at least three decades")
    eng = get_engine(spec, ctl)
    ok = np.zeros(grid.size, dtype=bool)
    for i, eta in enumerate(grid):
        t = eng.mu_triple(eta)
        if t.mu2 <= 0:
            ok[i] = False
            continue
        bt = taylor_bracket(eta, t, psi1_eps=psi1_eps)
        ok[i] = bt.cond21_holds and bt.bracket < 0.0
    idx = None
    for i in range(grid.size - 1, -1, -1):
        if ok[i]:
            idx = i
        else:
            break
    return None if idx is None else float(grid[idx])


def _unit_layouts(ctl):
    sq_n, sq_w = quad.sqrt_nodes(1.0, ctl.quad_panels)
    gl_n, gl_w = quad.gl_nodes(0.0, 1.0, ctl.quad_panels)
    return (sq_n, sq_w), (gl_n, gl_w)


def _inner_windows(v_nodes, spec):
    sig = np.sqrt(2.0 * spec.p + 4.0 * v_nodes)
    hi = v_nodes + spec.p + 42.0 * sig + 60.0
    lo = np.maximum(0.0, v_nodes + spec.p - 42.0 * sig - 60.0)
    return lo, hi


def _inner_expect(v_nodes, spec, ctl, fvals_of):
    """E[g(beta) | v] under the radial posterior for each v in v_nodes.

    Vectorised two-dimensional quadrature; rows whose window touches zero use
    the sqrt-graded layout, interior rows a plain composite rule.  The inner
    integral is self-normalised, so the posterior normaliser is never needed.
    """
    lo, hi = _inner_windows(v_nodes, spec)
    (sq_n, sq_w), (gl_n, gl_w) = _unit_layouts(ctl)
    out = np.empty(v_nodes.size)
    for zero_rows in (True, False):
        rows = (lo == 0.0) if zero_rows else (lo > 0.0)
        if not np.any(rows):
            continue
        vv = v_nodes[rows][:, None]
        if zero_rows:
            beta = hi[rows][:, None] * sq_n[None, :]
            logw = np.log(hi[rows])[:, None] + np.log(sq_w)[None, :]
        else:
            span = (hi[rows] - lo[rows])[:, None]
            beta = lo[rows][:, None] + span * gl_n[None, :]
            logw = np.log(span) + np.log(gl_w)[None, :]
        logq = _ncx2_logw(beta, spec.p, vv) + log_g0(beta, spec) + logw
        mx = logq.max(axis=1, keepdims=True)
        wts = np.exp(logq - mx)
        out[rows] = (wts * fvals_of(beta)).sum(axis=1) / wts.sum(axis=1)
    return out


def delta_direct(eta, spec: PriorSpec, ctl: SeriesCtl = DEFAULT_CTL):
    """One-step drift E[f(X_1)] - f(eta) of the radial chain, by nested quadrature."""
    if eta <= 0:
        raise DomainError("eta must be positive")
    cls = validate(spec)
    if not cls.valid:
        raise DomainError(f"invalid spec: {cls.reason}")
    v_lo, v_hi = ncx2_outer_window(spec.p, eta)
    v_nodes, v_w = quad.window_nodes(v_lo, v_hi, ctl.quad_panels)
    inner = _inner_expect(v_nodes, spec, ctl, drift_value)
    logw = _ncx2_logw(v_nodes, spec.p, eta) + np.log(v_w)
    mx = logw.max()
    wts = np.exp(logw - mx)
    return float((wts * inner).sum() / wts.sum() - drift_value(eta))


def _inner_logmass(v_nodes, spec, ctl, beta=None, logw=None):
    """log integral of the unnormalised posterior over beta, per v node.

    With beta/logw given, integrates over that fixed node set; otherwise over
    the per-v windows from :func:`_inner_windows`.
    """
    out = np.empty(v_nodes.size)
    if beta is not None:
        logq = _ncx2_logw(beta[None, :], spec.p, v_nodes[:, None]) \
            + log_g0(beta[None, :], spec) + logw[None, :]
        mrow = logq.max(axis=1, keepdims=True)
        return mrow[:, 0] + np.log(np.exp(logq - mrow).sum(axis=1))
    lo, hi = _inner_windows(v_nodes, spec)
    (sq_n, sq_w), (gl_n, gl_w) = _unit_layouts(ctl)
    for zero_rows in (True, False):
        rows = (lo == 0.0) if zero_rows else (lo > 0.0)
        if not np.any(rows):
            continue
        vv = v_nodes[rows][:, None]
        if zero_rows:
            bmat = hi[rows][:, None] * sq_n[None, :]
            lwmat = np.log(hi[rows])[:, None] + np.log(sq_w)[None, :]
        else:
            span = (hi[rows] - lo[rows])[:, None]
            bmat = lo[rows][:, None] + span * gl_n[None, :]
            lwmat = np.log(span) + np.log(gl_w)[None, :]
        logq = _ncx2_logw(bmat, spec.p, vv) + log_g0(bmat, spec) + lwmat
        mrow = logq.max(axis=1, keepdims=True)
        out[rows] = mrow[:, 0] + np.log(np.exp(logq - mrow).sum(axis=1))
    return out


def return_mass_grid(m, spec: PriorSpec, eta_grid=None, ctl: SeriesCtl = DEFAULT_CTL):
    """One-step mass R([0, m] | eta) for eta on a grid inside [0, m]."""
    if m <= 0:
        raise DomainError("m must be positive")
    etas = np.linspace(0.0, m, 25) if eta_grid is None else np.asarray(eta_grid, dtype=np.float64)
    (sq_n, sq_w), _ = _unit_layouts(ctl)
    beta_num = m * sq_n
    logw_num = math.log(m) + np.log(sq_w)
    out = np.empty(etas.size)
    for i, eta in enumerate(etas):
        v_lo, v_hi = ncx2_outer_window(spec.p, eta)
        v_nodes, v_w = quad.window_nodes(v_lo, v_hi, ctl.quad_panels)
        lognum = _inner_logmass(v_nodes, spec, ctl, beta=beta_num, logw=logw_num)
        logden = _inner_logmass(v_nodes, spec, ctl)
        frac = np.clip(np.exp(lognum - logden), 0.0, 1.0)
        logw = _ncx2_logw(v_nodes, spec.p, eta) + np.log(v_w)
        mx = logw.max()
        wts = np.exp(logw - mx)
        out[i] = float((wts * frac).sum() / wts.sum())
    return etas, out


def sup_return_mass(m, spec: PriorSpec, eta_grid=None, ctl: SeriesCtl = DEFAULT_CTL):
    """Grid maximum of the one-step return mass into [0, m] from inside it."""
    _, vals = return_mass_grid(m, spec, eta_grid, ctl)
    return float(vals.max())


@dataclass(frozen=True)
class RecurrenceReport:
    spec: PriorSpec
    verdict: str                     # "evidence-for-recurrence" | "inconclusive"
    threshold_m: float | None
    psi1_eps: float
    bracket_grid: tuple              # rows (eta, bracket, cond21_lhs, cond21_rhs)
    delta_grid: tuple                # rows (eta, delta)
    escape_grid: tuple               # rows (eta, return mass)
    escape_sup: float | None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "spec": {"p": self.spec.p, "a": self.spec.a, "b": self.spec.b,
                     "flat": self.spec.flat},
            "verdict": self.verdict,
            "threshold_m": self.threshold_m,
            "psi1_eps": self.psi1_eps,
            "bracket_grid": [list(r) for r in self.bracket_grid],
            "delta_grid": [list(r) for r in self.delta_grid],
            "escape_grid": [list(r) for r in self.escape_grid],
            "escape_sup": self.escape_sup,
            "diagnostics": self.diagnostics,
        }


def assemble_verdict(spec: PriorSpec, ctl: SeriesCtl = DEFAULT_CTL, eta_grid=None,
                     psi1_eps=0.5, delta_points=25, escape_points=25,
                     delta_eta_max=1e6) -> RecurrenceReport:
    """Run the full numerical criterion and assemble the evidence report.

    The verdict is evidence-for-recurrence only when a threshold m exists on
    the grid, the drift gap is non-positive at every confirmation point of
    [m, delta_eta_max], and the escape bound stays strictly below one.  Any
    numerical failure downgrades to inconclusive with diagnostics rather than
    raising.
    """
    cls = validate(spec)
    if not cls.valid:
        raise DomainError(f"invalid spec: {cls.reason}")
    grid = default_eta_grid() if eta_grid is None else np.asarray(eta_grid, dtype=np.float64)
    eng = get_engine(spec, ctl)
    diagnostics = {}
    bracket_rows = []
    try:
        for eta in grid:
            t = eng.mu_triple(float(eta))
            bt = taylor_bracket(float(eta), t, psi1_eps=psi1_eps)
            bracket_rows.append((float(eta), bt.bracket, bt.cond21_lhs, bt.cond21_rhs))
        m = find_threshold(spec, eta_grid=grid, psi1_eps=psi1_eps, ctl=ctl)
    except NumericalError as err:
        return RecurrenceReport(spec=spec, verdict="inconclusive", threshold_m=None,
                                psi1_eps=psi1_eps, bracket_grid=tuple(bracket_rows),
                                delta_grid=(), escape_grid=(), escape_sup=None,
                                diagnostics={"stage": "threshold", "error": str(err)})
    if m is None:
        return RecurrenceReport(spec=spec, verdict="inconclusive", threshold_m=None,
                                psi1_eps=psi1_eps, bracket_grid=tuple(bracket_rows),
                                delta_grid=(), escape_grid=(), escape_sup=None,
                                diagnostics={"stage": "threshold",
                                             "reason": "no grid point satisfies the drift conditions"})
    delta_rows = []
    try:
        for eta in np.logspace(math.log10(m), math.log10(delta_eta_max), delta_points):
            delta_rows.append((float(eta), delta_direct(float(eta), spec, ctl)))
    except NumericalError as err:
        return RecurrenceReport(spec=spec, verdict="inconclusive", threshold_m=m,
                                psi1_eps=psi1_eps, bracket_grid=tuple(bracket_rows),
                                delta_grid=tuple(delta_rows), escape_grid=(),
                                escape_sup=None,
                                diagnostics={"stage": "delta", "error": str(err)})
    try:
        etas, vals = return_mass_grid(m, spec, np.linspace(0.0, m, escape_points), ctl)
        escape_rows = tuple((float(e), float(v)) for e, v in zip(etas, vals))
        sup = float(vals.max())
    except NumericalError as err:
        return RecurrenceReport(spec=spec, verdict="inconclusive", threshold_m=m,
                                psi1_eps=psi1_eps, bracket_grid=tuple(bracket_rows),
                                delta_grid=tuple(delta_rows), escape_grid=(),
                                escape_sup=None,
                                diagnostics={"stage": "escape", "error": str(err)})
    delta_ok = all(d <= 0.0 for _, d in delta_rows)
    escape_ok = 0.0 < sup < 1.0 and all(0.0 < v < 1.0 for _, v in escape_rows)
    if not delta_ok:
        diagnostics["reason"] = "drift gap positive on the confirmation grid"
    elif not escape_ok:
        diagnostics["reason"] = "escape bound reached one"
    verdict = "evidence-for-recurrence" if (delta_ok and escape_ok) else "inconclusive"
    return RecurrenceReport(spec=spec, verdict=verdict, threshold_m=m,
                            psi1_eps=psi1_eps, bracket_grid=tuple(bracket_rows),
                            delta_grid=tuple(delta_rows), escape_grid=escape_rows,
                            escape_sup=sup, diagnostics=diagnostics)
