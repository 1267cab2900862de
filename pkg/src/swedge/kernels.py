"""Log-posterior value+gradient kernels for the four Bayesian models.

These are the hot inner loops of sampling: one call per leapfrog step.  All
functions take plain arrays/scalars and are JIT-compiled via numba when
enabled (see swedge._accel); the same code runs un-JITted as the fallback.

Shared unconstrained layout (offsets from 0):
    alpha | beta (p) | beta_b (J*p, row-major) | log sigma_b |
    smoothness (log sigma_beta in random-walk mode, log lambda in penalty
    mode) | effect block (model-specific) | covariate coefs (n_x) |
    log sigma_eps (gaussian family only)

Effect blocks:
    immediate       tau
    time-varying    beta_star (p*) | log sigma_beta_star
    cluster-varying beta_star (p*) | log sigma_beta_star | u (J) | log sigma_u
    monotone        delta | stick reals (K-1) | omega real

Family codes: 0 gaussian, 1 bernoulli/logit, 2 poisson/log.
Smoothness codes: 0 random-walk prior, 1 second-difference penalty
(conventional=0 keeps the penalty contrast beta_{m-1}-beta_m+beta_{m+1}
exactly as printed; conventional=1 uses beta_{m-1}-2*beta_m+beta_{m+1}).
"""

import math

import numpy as np

from ._accel import maybe_njit

LOG_2PI = math.log(2.0 * math.pi)
OMEGA_LO = 0.01
OMEGA_HI = 100.0


@maybe_njit
def _theta_out_of_range(theta):
    """Reject absurd unconstrained values (|theta| >= 200, or NaN) up front.

    Far outside any posterior mass given the model's priors; keeps the
    exp/1-over-sigma arithmetic below free of overflow in both the JIT and
    plain-Python paths.  The sampler treats the -inf as a divergence.
    """
    for i in range(theta.size):
        if not (-200.0 < theta[i] < 200.0):
            return True
    return False


@maybe_njit
def _digamma(x):
    """Digamma for x > 0 via the ascending recurrence and asymptotic series."""
    r = 0.0
    while x < 6.0:
        r -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    s = f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))))
    return r + math.log(x) - 0.5 / x - s


@maybe_njit
def _half_t_logpdf(x, nu, s):
    """Density of |T| for T ~ student_t(nu, 0, s), evaluated at x >= 0."""
    return (math.log(2.0) + math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
            - 0.5 * math.log(nu * math.pi) - math.log(s)
            - 0.5 * (nu + 1.0) * math.log1p(x * x / (nu * s * s)))


@maybe_njit
def _half_t_dlog_dlogx(x, nu, s):
    """d/d(log x) of [half-t log density + log-Jacobian] for x = exp(log x)."""
    return 1.0 - (nu + 1.0) * x * x / (nu * s * s + x * x)


@maybe_njit
def _shared_core(theta, grad, y, cluster, B, A, X, effect, family, smooth, conventional, J, l_eff):
    """Likelihood + shared-block priors; returns (value, dloglik/deta).

    Accumulates gradients for alpha, beta, beta_b, the scale/smoothness
    hyperparameters, covariate coefficients and sigma_eps.  The caller
    handles the effect block.
    """
    n = B.shape[0]
    p = B.shape[1]
    n_x = X.shape[1]
    ib = 1
    ibj = 1 + p
    isb = ibj + J * p
    ism = isb + 1
    ix = ism + 1 + l_eff
    ieps = ix + n_x

    a = theta[0]
    # linear predictor
    eta = np.empty(n)
    for i in range(n):
        s = a
        base = ibj + cluster[i] * p
        for m in range(p):
            s += theta[base + m] * B[i, m]
        s += effect[i] * A[i]
        for k in range(n_x):
            s += theta[ix + k] * X[i, k]
        eta[i] = s

    # likelihood and dloglik/deta
    val = 0.0
    g = np.empty(n)
    if family == 0:
        sigma_eps = math.exp(theta[ieps])
        inv_var = 1.0 / (sigma_eps * sigma_eps)
        const = -0.5 * LOG_2PI - theta[ieps]
        acc_eps = 0.0
        for i in range(n):
            r = y[i] - eta[i]
            val += const - 0.5 * r * r * inv_var
            g[i] = r * inv_var
            acc_eps += -1.0 + r * r * inv_var
        grad[ieps] += acc_eps
    elif family == 1:
        for i in range(n):
            e = eta[i]
            if e > 0.0:
                sp = e + math.log1p(math.exp(-e))
            else:
                sp = math.log1p(math.exp(e))
            val += y[i] * e - sp
            g[i] = y[i] - 1.0 / (1.0 + math.exp(-e))
    else:
        for i in range(n):
            mu = math.exp(eta[i])
            val += y[i] * eta[i] - mu - math.lgamma(y[i] + 1.0)
            g[i] = y[i] - mu

    # backprop into shared location blocks
    ga = 0.0
    for i in range(n):
        gi = g[i]
        ga += gi
        base = ibj + cluster[i] * p
        for m in range(p):
            grad[base + m] += gi * B[i, m]
        for k in range(n_x):
            grad[ix + k] += gi * X[i, k]
    grad[0] += ga

    # alpha ~ N(0,1)
    val += -0.5 * LOG_2PI - 0.5 * a * a
    grad[0] += -a

    # beta_b[j] ~ N(beta, sigma_b^2 I)
    sigma_b = math.exp(theta[isb])
    inv_sb2 = 1.0 / (sigma_b * sigma_b)
    acc_sb = 0.0
    for j in range(J):
        base = ibj + j * p
        for m in range(p):
            d = theta[base + m] - theta[ib + m]
            val += -theta[isb] - 0.5 * LOG_2PI - 0.5 * d * d * inv_sb2
            grad[base + m] += -d * inv_sb2
            grad[ib + m] += d * inv_sb2
            acc_sb += -1.0 + d * d * inv_sb2
    grad[isb] += acc_sb
    # sigma_b ~ half-t(3, 0, 2.5), plus log-Jacobian of the exp transform
    val += _half_t_logpdf(sigma_b, 3.0, 2.5) + theta[isb]
    grad[isb] += _half_t_dlog_dlogx(sigma_b, 3.0, 2.5)

    # beta_1 ~ N(0,1)
    val += -0.5 * LOG_2PI - 0.5 * theta[ib] * theta[ib]
    grad[ib] += -theta[ib]
    if smooth == 0:
        # random-walk prior beta_m ~ N(beta_{m-1}, sigma_beta^2)
        sigma_beta = math.exp(theta[ism])
        inv2 = 1.0 / (sigma_beta * sigma_beta)
        acc = 0.0
        for m in range(1, p):
            d = theta[ib + m] - theta[ib + m - 1]
            val += -theta[ism] - 0.5 * LOG_2PI - 0.5 * d * d * inv2
            grad[ib + m] += -d * inv2
            grad[ib + m - 1] += d * inv2
            acc += -1.0 + d * d * inv2
        grad[ism] += acc
        # sigma_beta ~ half-N(0,1)
        val += math.log(2.0) - 0.5 * LOG_2PI - 0.5 * sigma_beta * sigma_beta + theta[ism]
        grad[ism] += 1.0 - sigma_beta * sigma_beta
    else:
        # penalty 0.5*lambda*sum_m contrast_m^2 replaces the random walk
        lam = math.exp(theta[ism])
        mid = 2.0 if conventional == 1 else 1.0
        acc = 0.0
        for m in range(1, p - 1):
            c = theta[ib + m - 1] - mid * theta[ib + m] + theta[ib + m + 1]
            val += -0.5 * lam * c * c
            grad[ib + m - 1] += -lam * c
            grad[ib + m] += mid * lam * c
            grad[ib + m + 1] += -lam * c
            acc += c * c
        grad[ism] += -0.5 * lam * acc
        # lambda ~ half-t(3, 0, 2.5)
        val += _half_t_logpdf(lam, 3.0, 2.5) + theta[ism]
        grad[ism] += _half_t_dlog_dlogx(lam, 3.0, 2.5)

    # covariate coefficients ~ N(0,1)
    for k in range(n_x):
        th = theta[ix + k]
        val += -0.5 * LOG_2PI - 0.5 * th * th
        grad[ix + k] += -th

    if family == 0:
        sigma_eps = math.exp(theta[ieps])
        val += _half_t_logpdf(sigma_eps, 3.0, 2.5) + theta[ieps]
        grad[ieps] += _half_t_dlog_dlogx(sigma_eps, 3.0, 2.5)

    return val, g


@maybe_njit
def logpost_immediate(theta, y, cluster, B, A, X, family, smooth, conventional, J):
    if _theta_out_of_range(theta):
        return -np.inf, np.zeros(theta.size)
    n = B.shape[0]
    p = B.shape[1]
    grad = np.zeros(theta.size)
    ieff = 1 + p + J * p + 2
    tau = theta[ieff]
    effect = np.full(n, tau)
    val, g = _shared_core(theta, grad, y, cluster, B, A, X, effect, family, smooth, conventional, J, 1)
    acc = 0.0
    for i in range(n):
        acc += g[i] * A[i]
    grad[ieff] += acc
    # tau ~ N(0, 5^2)
    val += -math.log(5.0) - 0.5 * LOG_2PI - tau * tau / 50.0
    grad[ieff] += -tau / 25.0
    return val, grad


@maybe_njit
def logpost_time_varying(theta, y, cluster, B, Bstar, A, X, family, smooth, conventional, J, has_u):
    if _theta_out_of_range(theta):
        return -np.inf, np.zeros(theta.size)
    n = B.shape[0]
    p = B.shape[1]
    pstar = Bstar.shape[1]
    grad = np.zeros(theta.size)
    ibs = 1 + p + J * p + 2
    isbs = ibs + pstar
    iu = isbs + 1
    isu = iu + J
    l_eff = pstar + 1 + (J + 1 if has_u == 1 else 0)

    effect = np.empty(n)
    for i in range(n):
        s = 0.0
        for m in range(pstar):
            s += theta[ibs + m] * Bstar[i, m]
        if has_u == 1:
            s *= math.exp(theta[iu + cluster[i]])
        effect[i] = s

    val, g = _shared_core(theta, grad, y, cluster, B, A, X, effect, family, smooth, conventional, J, l_eff)

    for i in range(n):
        w = g[i] * A[i]
        if has_u == 1:
            scale = math.exp(theta[iu + cluster[i]])
            grad[iu + cluster[i]] += w * effect[i]
        else:
            scale = 1.0
        for m in range(pstar):
            grad[ibs + m] += w * scale * Bstar[i, m]

    # beta_star_1 ~ N(0,1); random walk beta*_m ~ N(beta*_{m-1}, sigma_beta*^2)
    val += -0.5 * LOG_2PI - 0.5 * theta[ibs] * theta[ibs]
    grad[ibs] += -theta[ibs]
    sigma_bs = math.exp(theta[isbs])
    inv2 = 1.0 / (sigma_bs * sigma_bs)
    acc = 0.0
    for m in range(1, pstar):
        d = theta[ibs + m] - theta[ibs + m - 1]
        val += -theta[isbs] - 0.5 * LOG_2PI - 0.5 * d * d * inv2
        grad[ibs + m] += -d * inv2
        grad[ibs + m - 1] += d * inv2
        acc += -1.0 + d * d * inv2
    grad[isbs] += acc
    # sigma_beta_star ~ half-N(0,1)
    val += math.log(2.0) - 0.5 * LOG_2PI - 0.5 * sigma_bs * sigma_bs + theta[isbs]
    grad[isbs] += 1.0 - sigma_bs * sigma_bs

    if has_u == 1:
        sigma_u = math.exp(theta[isu])
        inv_u2 = 1.0 / (sigma_u * sigma_u)
        acc_u = 0.0
        for j in range(J):
            uj = theta[iu + j]
            val += -theta[isu] - 0.5 * LOG_2PI - 0.5 * uj * uj * inv_u2
            grad[iu + j] += -uj * inv_u2
            acc_u += -1.0 + uj * uj * inv_u2
        grad[isu] += acc_u
        # sigma_u ~ half-N(0, 0.2^2)
        val += (math.log(2.0) - 0.5 * LOG_2PI - math.log(0.2)
                - 0.5 * sigma_u * sigma_u / 0.04 + theta[isu])
        grad[isu] += 1.0 - sigma_u * sigma_u / 0.04

    return val, grad


@maybe_njit
def _stick_break(v, K):
    """Stan-style stick-breaking: K-1 reals -> simplex of K entries.

    Returns (x, z, sticks, log_jacobian); sticks[k] is the mass remaining
    before entry k is carved off.
    """
    x = np.empty(K)
    z = np.empty(K - 1)
    sticks = np.empty(K - 1)
    stick = 1.0
    logj = 0.0
    for k in range(K - 1):
        arg = v[k] - math.log(K - 1.0 - k)
        zk = 1.0 / (1.0 + math.exp(-arg))
        z[k] = zk
        sticks[k] = stick
        x[k] = stick * zk
        logj += math.log(stick) + math.log(zk) + math.log(1.0 - zk)
        stick *= 1.0 - zk
    x[K - 1] = stick
    return x, z, sticks, logj


@maybe_njit
def logpost_monotone(theta, y, cluster, B, eclamp, A, X, family, smooth, conventional, J, K):
    if _theta_out_of_range(theta):
        return -np.inf, np.zeros(theta.size)
    n = B.shape[0]
    p = B.shape[1]
    grad = np.zeros(theta.size)
    idelta = 1 + p + J * p + 2
    iv = idelta + 1
    iw = iv + K - 1
    l_eff = 1 + (K - 1) + 1
    delta = theta[idelta]

    x, z, sticks, logj = _stick_break(theta[iv:iw], K)
    S = np.empty(K + 1)
    S[0] = 0.0
    for k in range(K):
        S[k + 1] = S[k] + x[k]

    effect = np.empty(n)
    for i in range(n):
        effect[i] = delta * S[eclamp[i]]

    val, g = _shared_core(theta, grad, y, cluster, B, A, X, effect, family, smooth, conventional, J, l_eff)
    val += logj

    # likelihood backprop into delta and the simplex
    wsum = np.zeros(K + 1)
    acc_delta = 0.0
    for i in range(n):
        w = g[i] * A[i]
        acc_delta += w * S[eclamp[i]]
        wsum[eclamp[i]] += w
    grad[idelta] += acc_delta
    dfdx = np.zeros(K)
    suffix = 0.0
    for level in range(K, 0, -1):
        suffix += wsum[level]
        dfdx[level - 1] = delta * suffix

    # delta ~ N(0, 5^2)
    val += -math.log(5.0) - 0.5 * LOG_2PI - delta * delta / 50.0
    grad[idelta] += -delta / 25.0

    # omega via scaled logit onto (OMEGA_LO, OMEGA_HI); the uniform prior
    # density cancels the range factor of the transform Jacobian
    w_real = theta[iw]
    sw = 1.0 / (1.0 + math.exp(-w_real))
    omega = OMEGA_LO + (OMEGA_HI - OMEGA_LO) * sw
    val += math.log(sw) + math.log(1.0 - sw)
    domega_dw = (OMEGA_HI - OMEGA_LO) * sw * (1.0 - sw)
    grad[iw] += 1.0 - 2.0 * sw

    # Dirichlet(omega, ..., omega) prior on the simplex
    sumlogx = 0.0
    for k in range(K):
        sumlogx += math.log(x[k])
        dfdx[k] += (omega - 1.0) / x[k]
    val += math.lgamma(K * omega) - K * math.lgamma(omega) + (omega - 1.0) * sumlogx
    dlp_domega = K * _digamma(K * omega) - K * _digamma(omega) + sumlogx
    grad[iw] += dlp_domega * domega_dw

    # backprop df/dx through stick-breaking, plus the Jacobian's own gradient
    rsuf = 0.0
    for k in range(K - 2, -1, -1):
        rsuf += dfdx[k + 1] * x[k + 1]
        dfdz = dfdx[k] * sticks[k] - rsuf / (1.0 - z[k])
        djdz = 1.0 / z[k] - (1.0 + (K - 2.0 - k)) / (1.0 - z[k])
        grad[iv + k] += (dfdz + djdz) * z[k] * (1.0 - z[k])

    return val, grad


@maybe_njit
def eta_immediate(theta, cluster, B, A, X, J):
    n = B.shape[0]
    p = B.shape[1]
    ieff = 1 + p + J * p + 2
    ix = ieff + 1
    eta = np.empty(n)
    for i in range(n):
        s = theta[0] + theta[ieff] * A[i]
        base = 1 + p + cluster[i] * p
        for m in range(p):
            s += theta[base + m] * B[i, m]
        for k in range(X.shape[1]):
            s += theta[ix + k] * X[i, k]
        eta[i] = s
    return eta


@maybe_njit
def eta_time_varying(theta, cluster, B, Bstar, A, X, J, has_u):
    n = B.shape[0]
    p = B.shape[1]
    pstar = Bstar.shape[1]
    ibs = 1 + p + J * p + 2
    iu = ibs + pstar + 1
    ix = ibs + pstar + 1 + (J + 1 if has_u == 1 else 0)
    eta = np.empty(n)
    for i in range(n):
        s = theta[0]
        base = 1 + p + cluster[i] * p
        for m in range(p):
            s += theta[base + m] * B[i, m]
        eff = 0.0
        for m in range(pstar):
            eff += theta[ibs + m] * Bstar[i, m]
        if has_u == 1:
            eff *= math.exp(theta[iu + cluster[i]])
        s += eff * A[i]
        for k in range(X.shape[1]):
            s += theta[ix + k] * X[i, k]
        eta[i] = s
    return eta


@maybe_njit
def eta_monotone(theta, cluster, B, eclamp, A, X, J, K):
    n = B.shape[0]
    p = B.shape[1]
    idelta = 1 + p + J * p + 2
    iv = idelta + 1
    ix = iv + K
    x, _, _, _ = _stick_break(theta[iv:iv + K - 1], K)
    S = np.empty(K + 1)
    S[0] = 0.0
    for k in range(K):
        S[k + 1] = S[k] + x[k]
    eta = np.empty(n)
    for i in range(n):
        s = theta[0] + theta[idelta] * S[eclamp[i]] * A[i]
        base = 1 + p + cluster[i] * p
        for m in range(p):
            s += theta[base + m] * B[i, m]
        for k in range(X.shape[1]):
            s += theta[ix + k] * X[i, k]
        eta[i] = s
    return eta


@maybe_njit
def pointwise_loglik_from_eta(eta, y, family, sigma_eps):
    n = eta.size
    out = np.empty(n)
    if family == 0:
        const = -0.5 * LOG_2PI - math.log(sigma_eps)
        inv_var = 1.0 / (sigma_eps * sigma_eps)
        for i in range(n):
            r = y[i] - eta[i]
            out[i] = const - 0.5 * r * r * inv_var
    elif family == 1:
        for i in range(n):
            e = eta[i]
            if e > 0.0:
                sp = e + math.log1p(math.exp(-e))
            else:
                sp = math.log1p(math.exp(e))
            out[i] = y[i] * e - sp
    else:
        for i in range(n):
            out[i] = y[i] * eta[i] - math.exp(eta[i]) - math.lgamma(y[i] + 1.0)
    return out
