"""One-dimensional quadrature helpers (internal).

Fixed composite Gauss-Legendre rules on tailored node layouts do the bulk of
the work; a small adaptive Gauss-Kronrod routine backs the integrals whose
accuracy is part of an operation's contract.  Integrable endpoint behaviour
beta^(p/2-1) at 0 is removed by integrating in t = sqrt(beta); residual
fractional powers are absorbed by geometrically graded panels toward 0.
"""

import math
from functools import lru_cache

import numpy as np

from .errors import NumericalError


@lru_cache(maxsize=16)
def _gl(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gl_nodes(lo, hi, panels, order=32):
    """Composite Gauss-Legendre nodes/weights on [lo, hi]."""
    x, w = _gl(order)
    edges = np.linspace(lo, hi, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def sqrt_nodes(hi, panels, order=32, graded_decades=8):
    """Nodes/weights for integrals over [0, hi] with algebraic behaviour at 0.

    Integrates in t = sqrt(beta) (d beta = 2 t dt).  The t-range is split into
    `panels` uniform panels, and the panel touching 0 is further refined into
    geometric sub-panels over `graded_decades` decades so fractional powers
    beta^c, c > -1, integrate accurately.  Returned weights contain the 2t
    Jacobian: evaluate the beta-integrand at the returned beta nodes.
    """
    t_hi = math.sqrt(hi)
    t_break = t_hi / panels
    x, w = _gl(order)
    geo = t_break * 10.0 ** np.linspace(-graded_decades, 0.0, 2 * graded_decades + 1)
    edges = np.concatenate([[0.0], geo, np.linspace(t_break, t_hi, panels)[1:]])
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t * t, wt * 2.0 * t


def window_nodes(lo, hi, panels, order=32):
    """Node layout for a density window; sqrt-graded when the window touches 0."""
    if lo <= 0.0:
        return sqrt_nodes(hi, panels, order)
    return gl_nodes(lo, hi, panels, order)


# 15-point Kronrod extension of 7-point Gauss (weights from the literature).
_XGK = np.array([
    0.991455371120813, 0.949107912342759, 0.864864423359769, 0.741531185599394,
    0.586087235467691, 0.405845151377397, 0.207784955007898, 0.0,
])
_WGK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728,
])
_WG = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469,
])


def _gk15(f, a, b):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    xs = np.concatenate([c - h * _XGK[:-1], [c], c + h * _XGK[-2::-1]])
    fx = f(xs)
    left = fx[:7]          # c - h * xgk[0..6]
    center = fx[7]
    right = fx[8:][::-1]   # c + h * xgk[0..6]
    kron = h * (_WGK[-1] * center + np.sum(_WGK[:-1] * (left + right)))
    # the embedded 7-point Gauss rule uses abscissae 1, 3, 5 plus the centre
    gauss = h * (_WG[-1] * center + np.sum(_WG[:-1] * (left[1::2] + right[1::2])))
    return kron, abs(kron - gauss)


def adaptive_gk(f, a, b, rel_tol=1e-10, abs_tol=0.0, max_intervals=4096):
    """Adaptive Gauss-Kronrod integration of a vectorised integrand.

    Bisects the interval with the largest error estimate until the summed
    error meets ``rel_tol * |integral| + abs_tol``.  Raises NumericalError
    with diagnostics when the interval budget runs out.
    """
    val, err = _gk15(f, a, b)
    intervals = [(err, a, b, val)]
    while True:
        total = sum(v for _, _, _, v in intervals)
        total_err = sum(e for e, _, _, _ in intervals)
        if total_err <= rel_tol * abs(total) + abs_tol:
            return total, total_err
        if len(intervals) >= max_intervals:
            raise NumericalError("adaptive quadrature did not converge",
                                 achieved_rel=total_err / max(abs(total), 1e-300),
                                 target_rel=rel_tol, intervals=len(intervals))
        intervals.sort(key=lambda t: t[0])
        _, lo, hi, _ = intervals.pop()
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        intervals.append((e1, lo, mid, v1))
        intervals.append((e2, mid, hi, v2))
