"""Scalar simulation kernels, JIT-compiled with numba by default.

Every kernel is plain scalar Python over ``numpy`` uint64 / float64, so the
same source runs in two modes:

* compiled (default): wrapped with ``numba.njit(cache=True)``;
* fallback: set ``PRIORCHAIN_DISABLE_NUMBA=1`` (or have numba missing) and the
  functions execute uncompiled.

Both modes consume random streams identically, so every summary built on these
kernels is bit-for-bit reproducible across modes.  ``benchmarks/`` times the
two modes against each other and asserts they agree.

Stream layout (the documented splitting rule)
---------------------------------------------
The generator is SplitMix64: a stream holds a uint64 counter advanced by the
odd constant ``GAMMA`` and hashed through the Stafford mix13 finalizer.
Stream ``k`` of master seed ``s`` starts from::

    state0 = mix(mix(s) ^ mix(k ^ SALT))

Distinct ``(s, k)`` give states scattered over the full 2**64 cycle; overlap
of two length-``L`` streams has probability about ``n_streams * L / 2**64``.
Sampling algorithms are exact: Box-Muller normals (two uniforms per normal;
vector draws consume pairs), Marsaglia-Tsang gammas with the power boost for
shape < 1, and a rejection sampler on the tangent-normal decomposition for
directions on the sphere.
"""

import math
import os

import numpy as np

_truthy = ("1", "true", "True", "yes", "on")
NUMBA_DISABLED = os.environ.get("PRIORCHAIN_DISABLE_NUMBA", "0") in _truthy

if not NUMBA_DISABLED:
    try:
        from numba import njit as _njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED

if USING_NUMBA:
    def kernel(fn):
        return _njit(cache=True)(fn)
else:
    def kernel(fn):
        return fn


def call(fn, *args):
    """Invoke a kernel; in fallback mode silence uint64 wraparound warnings."""
    if USING_NUMBA:
        return fn(*args)
    with np.errstate(over="ignore"):
        return fn(*args)


GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)
_E = math.e


@kernel
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@kernel
def stream_state(master_seed, stream_index):
    return mix64(mix64(np.uint64(master_seed)) ^ mix64(np.uint64(stream_index) ^ _SALT))


@kernel
def next_uniform(state):
    # returns u in (0, 1]; the +1 keeps log(u) finite
    state = state + GAMMA
    z = mix64(state)
    return state, (float(z >> _S11) + 1.0) * _INV53


@kernel
def next_normal(state):
    # Box-Muller, cosine branch only: two uniforms per normal
    state, u1 = next_uniform(state)
    state, u2 = next_uniform(state)
    return state, math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@kernel
def next_normal_pair(state):
    state, u1 = next_uniform(state)
    state, u2 = next_uniform(state)
    r = math.sqrt(-2.0 * math.log(u1))
    return state, r * math.cos(_TWO_PI * u2), r * math.sin(_TWO_PI * u2)


@kernel
def next_gamma(state, shape):
    """Marsaglia-Tsang draw from Gamma(shape, scale=1), any shape > 0."""
    boost = 1.0
    if shape < 1.0:
        state, u = next_uniform(state)
        boost = u ** (1.0 / shape)
        shape = shape + 1.0
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        state, x = next_normal(state)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        state, u = next_uniform(state)
        if math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
            return state, boost * d * v


@kernel
def fill_uniforms(state, out):
    for i in range(out.shape[0]):
        state, out[i] = next_uniform(state)
    return state


@kernel
def fill_normals(state, out):
    for i in range(out.shape[0]):
        state, out[i] = next_normal(state)
    return state


@kernel
def fill_normal_vector(state, out):
    """Fill a vector with normals using the pairwise protocol.

    Consumes ceil(p/2) Box-Muller pairs; the trailing sine output is dropped
    when p is odd.  All p-vector draws in the package use this protocol.
    """
    p = out.shape[0]
    i = 0
    while i + 2 <= p:
        state, z1, z2 = next_normal_pair(state)
        out[i] = z1
        out[i + 1] = z2
        i += 2
    if i < p:
        state, z1, z2 = next_normal_pair(state)
        out[i] = z1
    return state


@kernel
def next_ncx2(state, p, lam):
    """One draw of ||Z||^2, Z ~ N_p(mu, I) with ||mu||^2 = lam (mu on axis 1)."""
    sq = math.sqrt(lam)
    acc = 0.0
    i = 0
    while i + 2 <= p:
        state, z1, z2 = next_normal_pair(state)
        if i == 0:
            z1 = z1 + sq
        acc += z1 * z1 + z2 * z2
        i += 2
    if i < p:
        state, z1, z2 = next_normal_pair(state)
        if i == 0:
            z1 = z1 + sq
        acc += z1 * z1
    return state, acc


@kernel
def fill_ncx2(state, p, lam, out):
    for i in range(out.shape[0]):
        state, out[i] = next_ncx2(state, p, lam)
    return state


@kernel
def sphere_draw(state, out):
    p = out.shape[0]
    if p == 1:
        state, u = next_uniform(state)
        out[0] = 1.0 if u > 0.5 else -1.0
        return state
    while True:
        state = fill_normal_vector(state, out)
        nrm = 0.0
        for i in range(p):
            nrm += out[i] * out[i]
        if nrm > 0.0:
            nrm = math.sqrt(nrm)
            for i in range(p):
                out[i] /= nrm
            return state


@kernel
def vmf_draw(state, mu, kappa, out, work):
    """Exact draw from the density on the unit sphere proportional to
    exp(kappa * dot(omega, mu)).  kappa = 0 reduces to the uniform law."""
    p = mu.shape[0]
    if p == 1:
        state, u = next_uniform(state)
        # P(omega = +mu) = e^k / (e^k + e^-k)
        thr = 1.0 / (1.0 + math.exp(-2.0 * kappa))
        out[0] = mu[0] if u < thr else -mu[0]
        return state
    dim = float(p - 1)
    b = dim / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + dim * dim))
    x0 = (1.0 - b) / (1.0 + b)
    cval = kappa * x0 + dim * math.log(1.0 - x0 * x0)
    s = 0.5 * dim
    while True:
        state, g1 = next_gamma(state, s)
        state, g2 = next_gamma(state, s)
        z = g1 / (g1 + g2)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        state, u = next_uniform(state)
        if kappa * w + dim * math.log(1.0 - x0 * w) - cval >= math.log(u):
            break
    # tangent direction: normals projected orthogonal to mu, then normalised
    while True:
        state = fill_normal_vector(state, work)
        dot = 0.0
        for i in range(p):
            dot += work[i] * mu[i]
        nrm = 0.0
        for i in range(p):
            work[i] -= dot * mu[i]
            nrm += work[i] * work[i]
        if nrm > 0.0:
            nrm = math.sqrt(nrm)
            break
    coef = math.sqrt(max(0.0, 1.0 - w * w))
    for i in range(p):
        out[i] = coef * work[i] / nrm + w * mu[i]
    return state


# ---------------------------------------------------------------------------
# Component index of the posterior radial mixture.
#
# Weights are W(n) ∝ lam^n / n! * Gamma(n + ac) / Gamma(n + alpha) with
# ac = alpha - c for a tilt exponent c in (0, alpha).  The ratio
# W(n+1)/W(n) = lam * (n + ac) / ((n + 1) (n + alpha)) is non-increasing in n
# (discrete log-concavity) exactly when c <= alpha (1 + alpha) / (2 + alpha);
# the construction layer checks that bound and passes lc_ok accordingly.
# ---------------------------------------------------------------------------


@kernel
def _tp_ratio(n, lam, ac, alpha):
    nf = float(n)
    return lam * (nf + ac) / ((nf + 1.0) * (nf + alpha))


@kernel
def _tp_logw(n, loglam, ac, alpha):
    nf = float(n)
    return nf * loglam - math.lgamma(nf + 1.0) + math.lgamma(nf + ac) - math.lgamma(nf + alpha)


@kernel
def _tp_mode(lam, ac, alpha):
    n = int(lam)
    if n < 0:
        n = 0
    while _tp_ratio(n, lam, ac, alpha) > 1.0:
        n += 1
    while n > 0 and _tp_ratio(n - 1, lam, ac, alpha) <= 1.0:
        n -= 1
    return n


@kernel
def _tp_draw_inversion(state, lam, ac, alpha):
    # windowed CDF inversion; weights by ratio recursion from the mode.
    # the 16-sigma window truncates mass far below the 2^-53 resolution of
    # the inverting uniform, so the draw is exact at float64 granularity.
    sig = math.sqrt(lam)
    nlo = int(lam - 16.0 * sig - 20.0)
    if nlo < 0:
        nlo = 0
    nhi = int(lam + 16.0 * sig + 40.0)
    npk = _tp_mode(lam, ac, alpha)
    if npk < nlo:
        npk = nlo
    if npk > nhi:
        npk = nhi
    size = nhi - nlo + 1
    w = np.empty(size)
    w[npk - nlo] = 1.0
    total = 1.0
    for n in range(npk, nhi):
        w[n + 1 - nlo] = w[n - nlo] * _tp_ratio(n, lam, ac, alpha)
        total += w[n + 1 - nlo]
    for n in range(npk, nlo, -1):
        w[n - 1 - nlo] = w[n - nlo] / _tp_ratio(n - 1, lam, ac, alpha)
        total += w[n - 1 - nlo]
    state, u = next_uniform(state)
    target = u * total
    acc = w[npk - nlo]
    if target <= acc:
        return state, npk
    right = npk + 1
    left = npk - 1
    while True:
        if right <= nhi:
            acc += w[right - nlo]
            if target <= acc:
                return state, right
            right += 1
        if left >= nlo:
            acc += w[left - nlo]
            if target <= acc:
                return state, left
            left -= 1
        if right > nhi and left < nlo:
            return state, nhi  # unreachable save for rounding at the edge


@kernel
def _tp_draw_hat(state, lam, ac, alpha):
    # rejection from a centre-flat / geometric-tail hat; requires discrete
    # log-concavity of the weights (lc_ok checked by the caller).
    loglam = math.log(lam)
    n0 = _tp_mode(lam, ac, alpha)
    K = int(math.sqrt(lam)) + 1
    lw0 = _tp_logw(n0, loglam, ac, alpha)
    c_lo = n0 - K
    if c_lo < 0:
        c_lo = 0
    c_hi = n0 + K
    m_center = float(c_hi - c_lo + 1)

    nR = n0 + K
    lwR = _tp_logw(nR, loglam, ac, alpha) - lw0
    rR = _tp_ratio(nR, lam, ac, alpha)
    m_right = math.exp(lwR) * rR / (1.0 - rR)

    m_left = 0.0
    rL = 0.0
    lwL = 0.0
    nL = n0 - K
    if nL >= 1:
        lwL = _tp_logw(nL, loglam, ac, alpha) - lw0
        rL = 1.0 / _tp_ratio(nL - 1, lam, ac, alpha)
        m_left = math.exp(lwL) * rL / (1.0 - rL)

    total = m_center + m_right + m_left
    log_rR = math.log(rR)
    log_rL = math.log(rL) if m_left > 0.0 else 0.0
    while True:
        state, u = next_uniform(state)
        pick = u * total
        if pick < m_center:
            n = c_lo + int(pick)
            if n > c_hi:
                n = c_hi
            hat_ln = 0.0
        elif pick < m_center + m_right:
            state, u2 = next_uniform(state)
            j = 1 + int(math.floor(math.log(u2) / log_rR))
            n = nR + j
            hat_ln = lwR + float(j) * log_rR
        else:
            state, u2 = next_uniform(state)
            j = 1 + int(math.floor(math.log(u2) / log_rL))
            n = nL - j
            if n < 0:
                continue
            hat_ln = lwL + float(j) * log_rL
        state, ua = next_uniform(state)
        if math.log(ua) < _tp_logw(n, loglam, ac, alpha) - lw0 - hat_ln:
            return state, n


@kernel
def tilted_poisson_draw(state, lam, ac, alpha, lc_ok):
    if lam <= 0.0:
        return state, 0
    if lc_ok and lam >= 32.0:
        return _tp_draw_hat(state, lam, ac, alpha)
    return _tp_draw_inversion(state, lam, ac, alpha)


@kernel
def posterior_radius_draw(state, v, alpha, a, b, c, log_k, lc_ok):
    """Exact draw of beta given ||x||^2 = v from the tilted radial posterior.

    Mixture representation: component n with weight ∝ Pois(n; v/2) times the
    tilt integral, then beta from z^(n+alpha-1) e^(-z/2) (a+z)^(-b).  The
    component is proposed with tilt exponent c and the gamma stage corrects
    the difference by rejection; c = b makes the correction (z/(a+z))^b and
    a = 0 needs no correction at all.
    """
    state, n = tilted_poisson_draw(state, 0.5 * v, alpha - c, alpha, lc_ok)
    shape = float(n) + alpha - c
    while True:
        state, g = next_gamma(state, shape)
        z = 2.0 * g
        if a == 0.0:
            return state, z
        la = c * math.log(z) - b * math.log(a + z) - log_k
        state, u = next_uniform(state)
        if math.log(u) < la:
            return state, z


@kernel
def reduced_step(state, eta, p, alpha, a, b, c, log_k, lc_ok, flat):
    """One exact transition of the radial chain from state eta."""
    if flat:
        state, v = next_ncx2(state, p, 0.5 * eta)
        return state, 2.0 * v
    state, v = next_ncx2(state, p, eta)
    return posterior_radius_draw(state, v, alpha, a, b, c, log_k, lc_ok)


@kernel
def fill_reduced_transitions(master_seed, stream_index, eta, p, alpha, a, b, c, log_k, lc_ok, flat, out):
    state = stream_state(master_seed, stream_index)
    for i in range(out.shape[0]):
        state, out[i] = reduced_step(state, eta, p, alpha, a, b, c, log_k, lc_ok, flat)
    return out


@kernel
def fill_posterior_radius(master_seed, stream_index, v, p, alpha, a, b, c, log_k, lc_ok, out):
    state = stream_state(master_seed, stream_index)
    for i in range(out.shape[0]):
        state, out[i] = posterior_radius_draw(state, v, alpha, a, b, c, log_k, lc_ok)
    return out


@kernel
def reduced_hitting_paths(master_seed, stream_base, start, m, n_paths, max_steps,
                          p, alpha, a, b, c, log_k, lc_ok, flat, hit_steps):
    """First entry times of the radial chain into [0, m); -1 when censored."""
    for path in range(n_paths):
        state = stream_state(master_seed, stream_base + path)
        x = start
        hit = -1
        for step in range(1, max_steps + 1):
            state, x = reduced_step(state, x, p, alpha, a, b, c, log_k, lc_ok, flat)
            if x < m:
                hit = step
                break
        hit_steps[path] = hit
    return hit_steps


@kernel
def walk_hitting_paths(master_seed, stream_base, start, radius, n_paths, max_steps, hit_steps):
    """Random-walk paths theta += N(0, 2 I); hit when ||theta|| <= radius."""
    p = start.shape[0]
    r2 = radius * radius
    theta = np.empty(p)
    for path in range(n_paths):
        state = stream_state(master_seed, stream_base + path)
        for i in range(p):
            theta[i] = start[i]
        hit = -1
        for step in range(1, max_steps + 1):
            i = 0
            while i + 2 <= p:
                state, z1, z2 = next_normal_pair(state)
                theta[i] += SQRT2 * z1
                theta[i + 1] += SQRT2 * z2
                i += 2
            if i < p:
                state, z1, z2 = next_normal_pair(state)
                theta[i] += SQRT2 * z1
            nrm = 0.0
            for i in range(p):
                nrm += theta[i] * theta[i]
            if nrm <= r2:
                hit = step
                break
        hit_steps[path] = hit
    return hit_steps


@kernel
def _loglog_value(x):
    return math.log(math.log(_E + x))


@kernel
def stopped_drift_sums(master_seed, stream_base, x0, m, n_paths, horizon,
                       p, alpha, a, b, c, log_k, lc_ok, flat,
                       sum_y, sum_d, sum_d2):
    """Accumulate Y_n = f(X_{tau ∧ n}) for f = log log(e + x), stopped on [0, m).

    sum_y[n] collects Y_n over paths (n = 0..horizon); sum_d / sum_d2 collect
    per-path increments Y_{n+1} - Y_n for paired standard errors.
    """
    for path in range(n_paths):
        state = stream_state(master_seed, stream_base + path)
        x = x0
        stopped = False
        y = _loglog_value(x)
        sum_y[0] += y
        for n in range(horizon):
            if not stopped:
                state, x = reduced_step(state, x, p, alpha, a, b, c, log_k, lc_ok, flat)
                if x < m:
                    stopped = True
            ynew = _loglog_value(x)
            d = ynew - y
            sum_y[n + 1] += ynew
            sum_d[n] += d
            sum_d2[n] += d * d
            y = ynew
    return sum_y


@kernel
def mh_norm_chain(master_seed, stream_index, v_x, n_samples, burn, thin,
                  p, a, b, out):
    """Independence Metropolis chain for ||theta||^2 under the tilted posterior.

    Proposals are ||x + Z||^2 with Z standard normal (noncentrality fixed at
    v_x); the acceptance ratio reduces to ((a + v_cur)/(a + v_prop))^b.
    Returns the acceptance count over all proposals.
    """
    state = stream_state(master_seed, stream_index)
    v_cur = v_x
    accepted = 0
    total = burn + n_samples * thin
    idx = 0
    for it in range(total):
        state, v_prop = next_ncx2(state, p, v_x)
        state, u = next_uniform(state)
        if math.log(u) < b * (math.log(a + v_cur) - math.log(a + v_prop)):
            v_cur = v_prop
            accepted += 1
        if it >= burn and (it - burn) % thin == thin - 1:
            out[idx] = v_cur
            idx += 1
    return accepted
