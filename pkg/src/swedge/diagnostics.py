"""Convergence diagnostics, PSIS-LOO, and posterior summaries."""

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .posterior import ParamLayout, constrain_vector

logger = logging.getLogger(__name__)


def _split_halves(x):
    """(n_chains, n) -> (2*n_chains, n//2) half-chains (odd middle draw dropped)."""
    x = np.asarray(x, dtype=float)
    m, n = x.shape
    half = n // 2
    return np.vstack([x[:, :half], x[:, n - half:]])


def split_rhat(x, rank_normalized=False):
    """Potential scale reduction over split half-chains.

    x has shape (n_chains, n_draws).  Returns +inf when the within-chain
    variance is zero (constant chains).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 4:
        raise ValueError("need >= 2 chains with >= 4 draws each")
    if rank_normalized:
        x = _rank_normalize(x)
    halves = _split_halves(x)
    n = halves.shape[1]
    means = halves.mean(axis=1)
    W = halves.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W <= 0.0:
        logger.warning("zero within-chain variance; R-hat undefined")
        return math.inf
    return float(math.sqrt(((n - 1) / n * W + B / n) / W))


def _rank_normalize(x):
    shape = x.shape
    flat = x.ravel()
    ranks = np.empty(flat.size)
    order = np.argsort(flat, kind="stable")
    ranks[order] = np.arange(1, flat.size + 1)
    # average ties
    uniq, inv, counts = np.unique(flat, return_inverse=True, return_counts=True)
    if counts.max() > 1:
        sums = np.bincount(inv, weights=ranks)
        ranks = (sums / counts)[inv]
    from scipy.special import ndtri

    z = ndtri((ranks - 0.375) / (flat.size + 0.25))
    return z.reshape(shape)


def ess(x):
    """Effective sample size with Geyer's initial-monotone truncation.

    Combines chains the usual way (variogram over the pooled variance).
    Returns nan for constant chains; antithetic chains can exceed the draw
    count and are capped at twice the total with a warning.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 4:
        raise ValueError("need >= 2 chains with >= 4 draws each")
    x = _split_halves(x)
    m, n = x.shape
    W = x.var(axis=1, ddof=1).mean()
    if W <= 0.0:
        logger.warning("zero within-chain variance; ESS undefined")
        return math.nan
    B = n * x.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * W + B / n

    acov = np.zeros(n)
    for c in range(m):
        acov += _autocov(x[c])
    acov /= m

    rho = 1.0 - (W - acov) / var_plus
    # pair up lags (Geyer): keep while the pair sum stays positive, then
    # enforce a non-increasing sequence of pair sums
    tau = 1.0
    prev_pair = math.inf
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0.0:
            break
        pair = min(pair, prev_pair)
        tau += 2.0 * pair
        prev_pair = pair
        t += 2
    total = m * n
    out = total / tau
    if out > 2.0 * total:
        logger.warning("ESS %.0f exceeds twice the draw count; capping", out)
        out = 2.0 * total
    return float(out)


def _autocov(v):
    n = v.size
    v = v - v.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(v, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real
    return acov / n


def _gpd_fit(x):
    """Zhang & Stephens posterior-mean estimate of GPD (k, sigma).

    x must be sorted ascending exceedances over the cutoff.
    """
    n = x.size
    prior_bs = 3.0
    prior_k = 10.0
    m_est = 30 + int(math.sqrt(n))
    b = 1.0 - np.sqrt(m_est / (np.arange(1, m_est + 1) - 0.5))
    b /= prior_bs * x[int(n / 4 + 0.5) - 1]
    b += 1.0 / x[-1]
    k = np.mean(np.log1p(-b[:, None] * x), axis=1)
    log_lik = n * (np.log(-b / k) - k - 1.0)
    weights = 1.0 / np.sum(np.exp(log_lik - log_lik[:, None]), axis=1)
    keep = weights >= 10 * np.finfo(float).eps
    b, weights = b[keep], weights[keep]
    weights /= weights.sum()
    b_post = float(np.sum(b * weights))
    k_post = float(np.mean(np.log1p(-b_post * x)))
    sigma = -k_post / b_post
    k_post = (n * k_post + prior_k * 0.5) / (n + prior_k)
    return k_post, sigma


def _gpd_quantiles(probs, k, sigma):
    if abs(k) < np.finfo(float).eps:
        q = -np.log1p(-probs)
    else:
        q = np.expm1(-k * np.log1p(-probs)) / k
    return sigma * q


def _logsumexp(v):
    mx = v.max()
    if not np.isfinite(mx):
        return mx
    return mx + math.log(np.sum(np.exp(v - mx)))


def psis_loo(loglik_draws, tail_fraction=0.2):
    """PSIS leave-one-out estimate from a (draws, n_obs) log-likelihood matrix.

    Importance ratios are exp(-loglik); a generalized Pareto is fit to the
    top tail of each observation's ratios and the tail weights replaced by
    the fitted quantiles.  Returns {"elpd_loo", "looic", "pareto_k",
    "elpd_pointwise"}.
    """
    ll = np.asarray(loglik_draws, dtype=float)
    if ll.ndim != 2:
        raise ValueError("loglik_draws must be (draws, n_obs)")
    if not np.all(np.isfinite(ll)):
        raise ValueError("log-likelihood draws must be finite")
    S, n = ll.shape
    tail_len = int(math.ceil(tail_fraction * S))
    elpd = np.empty(n)
    ks = np.empty(n)
    for i in range(n):
        logr = -ll[:, i]
        logr = logr - logr.max()
        if np.ptp(logr) == 0.0:
            # all ratios equal: plain log mean, nothing to smooth
            elpd[i] = _logsumexp(ll[:, i]) - math.log(S)
            ks[i] = -math.inf
            continue
        srt = np.sort(logr)
        cutoff = srt[-tail_len - 1]
        tail_ids = np.where(logr > cutoff)[0]
        x_tail = np.exp(logr[tail_ids]) - math.exp(cutoff)
        order = np.argsort(x_tail)
        smoothed = logr.copy()
        if x_tail.size >= 5 and np.unique(x_tail).size > 1:
            k, sigma = _gpd_fit(x_tail[order])
            if math.isfinite(k):
                probs = (np.arange(1, x_tail.size + 1) - 0.5) / x_tail.size
                repl = np.log(_gpd_quantiles(probs, k, sigma) + math.exp(cutoff))
                smoothed[tail_ids[order]] = repl
                smoothed = np.minimum(smoothed, 0.0)
            ks[i] = k
        else:
            ks[i] = math.inf
        logw = smoothed - _logsumexp(smoothed)
        elpd[i] = _logsumexp(logw + ll[:, i])
    elpd_loo = float(elpd.sum())
    frac_bad = float(np.mean(ks > 0.7))
    if frac_bad:
        logger.info("PSIS: %.1f%% of observations have pareto k > 0.7", 100 * frac_bad)
    return {
        "elpd_loo": elpd_loo,
        "looic": -2.0 * elpd_loo,
        "pareto_k": ks,
        "elpd_pointwise": elpd,
    }


@dataclass
class FitSummary:
    """Per-parameter posterior summaries plus fit-level diagnostics."""

    params: dict                      # name -> {median, mean, sd, q2.5, q97.5, rhat, ess}
    n_divergences: int = 0
    looic: float = math.nan
    elpd_loo: float = math.nan
    pareto_k: np.ndarray = None
    model: str = ""
    extras: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def median(self, name):
        return self.params[name]["median"]

    def interval(self, name):
        st = self.params[name]
        return st["q2.5"], st["q97.5"]

    def max_rhat(self):
        vals = [s["rhat"] for s in self.params.values() if math.isfinite(s["rhat"])]
        return max(vals) if vals else math.nan

    def to_dict(self):
        return {
            "model": self.model,
            "params": self.params,
            "n_divergences": self.n_divergences,
            "looic": self.looic,
            "elpd_loo": self.elpd_loo,
            "max_rhat": self.max_rhat(),
            "extras": self.extras,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def constrained_draws(chains, spec):
    """(names, array (n_chains, n_draws, n_names)) on the constrained scale."""
    layout = ParamLayout(spec)
    names = layout.constrained_names()
    out = np.empty((chains.n_chains, chains.n_draws, len(names)))
    for c in range(chains.n_chains):
        for d in range(chains.n_draws):
            out[c, d] = constrain_vector(spec, chains.draws[c, d])
    return names, out


def summarize(chains, spec, loglik=None):
    """FitSummary from sampled chains: equal-tailed 95% intervals, medians,
    split R-hat and ESS per constrained parameter; PSIS-LOO when a pointwise
    log-likelihood matrix is supplied."""
    names, cons = constrained_draws(chains, spec)
    params = {}
    for idx, name in enumerate(names):
        vals = cons[:, :, idx]
        pooled = vals.ravel()
        qlo, qmed, qhi = np.quantile(pooled, [0.025, 0.5, 0.975])
        params[name] = {
            "median": float(qmed),
            "mean": float(pooled.mean()),
            "sd": float(pooled.std(ddof=1)),
            "q2.5": float(qlo),
            "q97.5": float(qhi),
            "rhat": split_rhat(vals),
            "ess": ess(vals),
        }
    summary = FitSummary(params=params, n_divergences=chains.n_divergent, model=spec.model)
    if loglik is not None:
        loo = psis_loo(loglik)
        summary.looic = loo["looic"]
        summary.elpd_loo = loo["elpd_loo"]
        summary.pareto_k = loo["pareto_k"]
    return summary
