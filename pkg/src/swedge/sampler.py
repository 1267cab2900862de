"""No-U-Turn sampler with dual-averaging step size and diagonal mass matrix.

Multinomial sampling over the trajectory, biased progressive sampling at the
top level, endpoint U-turn criterion, energy-error divergence threshold of
1000.  Warmup follows the usual windowed schedule: a fast initial buffer for
step size only, doubling "slow" windows that estimate the diagonal inverse
mass from draw variances, and a fast terminal buffer.
"""

import math
from dataclasses import dataclass, field

import numpy as np

DIVERGENCE_THRESHOLD = 1000.0


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_warmup: int = 1000
    n_draws: int = 1000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    init_radius: float = 2.0

    def __post_init__(self):
        if min(self.n_chains, self.n_warmup, self.n_draws, self.max_tree_depth) < 1:
            raise ValueError("chain/draw counts and max_tree_depth must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("n_chains", "n_warmup", "n_draws", "target_accept",
                 "max_tree_depth", "seed", "init_radius")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass
class Chains:
    """Post-warmup draws on the unconstrained scale plus sampler telemetry."""

    draws: np.ndarray          # (n_chains, n_draws, dim)
    logp: np.ndarray           # (n_chains, n_draws)
    divergent: np.ndarray      # (n_chains, n_draws) bool
    tree_depth: np.ndarray     # (n_chains, n_draws) int
    step_size: np.ndarray      # (n_chains,)
    inv_mass: np.ndarray       # (n_chains, dim)
    config: SamplerConfig = None

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_draws(self):
        return self.draws.shape[1]

    @property
    def dim(self):
        return self.draws.shape[2]

    @property
    def n_divergent(self):
        return int(self.divergent.sum())

    def pooled(self):
        return self.draws.reshape(-1, self.dim)

    def report(self):
        return {
            "n_chains": self.n_chains,
            "n_draws": self.n_draws,
            "dim": self.dim,
            "step_size": self.step_size.tolist(),
            "n_divergent": self.n_divergent,
            "mean_tree_depth": float(self.tree_depth.mean()),
            "max_tree_depth_hit": int((self.tree_depth >= self.config.max_tree_depth).sum())
            if self.config else None,
        }


def init_params(logp_grad, dim, rng, radius=2.0, max_tries=100):
    """Uniform draw in the init box, retried until the density and gradient
    are finite."""
    for _ in range(max_tries):
        theta = rng.uniform(-radius, radius, dim)
        value, grad = logp_grad(theta)
        if math.isfinite(value) and np.all(np.isfinite(grad)):
            return theta
    raise RuntimeError("initialization failed")


class _DualAveraging:
    """Nesterov dual averaging of log step size (Hoffman & Gelman defaults)."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(eps0)

    def restart(self, eps0):
        self.mu = math.log(10.0 * eps0)
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.m = 0

    def update(self, accept_stat):
        self.m += 1
        eta = 1.0 / (self.m + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.m) / self.gamma * self.h_bar
        w = self.m ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    def adapted(self):
        return math.exp(self.log_eps_bar)


class _Welford:
    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def push(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def variance(self):
        if self.n < 2:
            return np.ones_like(self.mean)
        var = self.m2 / (self.n - 1)
        # shrink toward a small diagonal, as is conventional
        return (self.n / (self.n + 5.0)) * var + (5.0 / (self.n + 5.0)) * 1e-3


def _find_reasonable_epsilon(logp_grad, theta, value, grad, inv_mass, rng):
    """Double/halve the step until the one-step acceptance crosses 1/2."""
    eps = 1.0
    sd = np.sqrt(1.0 / inv_mass)
    r = rng.standard_normal(theta.size) * sd
    h0 = -value + 0.5 * float(np.sum(inv_mass * r * r))
    theta1, r1, value1, grad1 = _leapfrog(logp_grad, theta, r, grad, eps, inv_mass)
    h1 = -value1 + 0.5 * float(np.sum(inv_mass * r1 * r1))
    if not math.isfinite(h1):
        log_ratio = -math.inf
    else:
        log_ratio = h0 - h1
    direction = 1.0 if log_ratio > math.log(0.5) else -1.0
    for _ in range(100):
        eps *= 2.0 ** direction
        theta1, r1, value1, grad1 = _leapfrog(logp_grad, theta, r, grad, eps, inv_mass)
        h1 = -value1 + 0.5 * float(np.sum(inv_mass * r1 * r1))
        log_ratio = (h0 - h1) if math.isfinite(h1) else -math.inf
        if direction * log_ratio <= direction * math.log(0.5):
            return eps
    return eps


def _leapfrog(logp_grad, theta, r, grad, eps, inv_mass):
    r_half = r + 0.5 * eps * grad
    theta_new = theta + eps * inv_mass * r_half
    value_new, grad_new = logp_grad(theta_new)
    if not (math.isfinite(value_new) and np.all(np.isfinite(grad_new))):
        return theta_new, r_half, -math.inf, np.zeros_like(grad)
    r_new = r_half + 0.5 * eps * grad_new
    return theta_new, r_new, value_new, grad_new


class _Tree:
    __slots__ = ("q_minus", "r_minus", "g_minus", "q_plus", "r_plus", "g_plus",
                 "proposal", "proposal_logp", "log_sum_w", "sum_alpha", "n_alpha",
                 "turning", "divergent")


def _uturn(q_plus, q_minus, r_plus, r_minus, inv_mass):
    dq = q_plus - q_minus
    return (float(np.dot(dq, inv_mass * r_minus)) < 0.0
            or float(np.dot(dq, inv_mass * r_plus)) < 0.0)


def _build_tree(logp_grad, q, r, grad, depth, direction, eps, h0, inv_mass, rng):
    if depth == 0:
        q1, r1, v1, g1 = _leapfrog(logp_grad, q, r, grad, direction * eps, inv_mass)
        h1 = -v1 + 0.5 * float(np.sum(inv_mass * r1 * r1)) if math.isfinite(v1) else math.inf
        energy_error = h1 - h0
        t = _Tree()
        t.q_minus = t.q_plus = t.proposal = q1
        t.r_minus = t.r_plus = r1
        t.g_minus = t.g_plus = g1
        t.proposal_logp = v1
        t.divergent = not math.isfinite(energy_error) or energy_error > DIVERGENCE_THRESHOLD
        t.log_sum_w = -energy_error if not t.divergent else -math.inf
        t.sum_alpha = math.exp(min(0.0, -energy_error)) if math.isfinite(energy_error) else 0.0
        t.n_alpha = 1
        t.turning = False
        return t

    first = _build_tree(logp_grad, q, r, grad, depth - 1, direction, eps, h0, inv_mass, rng)
    if first.divergent or first.turning:
        return first
    if direction == 1:
        q2, r2, g2 = first.q_plus, first.r_plus, first.g_plus
    else:
        q2, r2, g2 = first.q_minus, first.r_minus, first.g_minus
    second = _build_tree(logp_grad, q2, r2, g2, depth - 1, direction, eps, h0, inv_mass, rng)

    first.sum_alpha += second.sum_alpha
    first.n_alpha += second.n_alpha
    if second.divergent or second.turning:
        first.divergent = second.divergent
        first.turning = second.turning
        return first
    total = np.logaddexp(first.log_sum_w, second.log_sum_w)
    if math.log(rng.uniform()) < second.log_sum_w - total:
        first.proposal = second.proposal
        first.proposal_logp = second.proposal_logp
    first.log_sum_w = total
    if direction == 1:
        first.q_plus, first.r_plus, first.g_plus = second.q_plus, second.r_plus, second.g_plus
    else:
        first.q_minus, first.r_minus, first.g_minus = second.q_minus, second.r_minus, second.g_minus
    first.turning = _uturn(first.q_plus, first.q_minus, first.r_plus, first.r_minus, inv_mass)
    return first


def _transition(logp_grad, q, value, grad, eps, inv_mass, max_depth, rng):
    """One NUTS draw; returns (q', value', grad', accept_stat, depth, divergent)."""
    sd = np.sqrt(1.0 / inv_mass)
    r0 = rng.standard_normal(q.size) * sd
    h0 = -value + 0.5 * float(np.sum(inv_mass * r0 * r0))

    q_minus = q_plus = q
    r_minus = r_plus = r0
    g_minus = g_plus = grad
    proposal, proposal_logp = q, value
    log_sum_w = 0.0
    sum_alpha = 0.0
    n_alpha = 0
    divergent = False
    depth = 0
    while depth < max_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        if direction == 1:
            sub = _build_tree(logp_grad, q_plus, r_plus, g_plus, depth, 1,
                              eps, h0, inv_mass, rng)
        else:
            sub = _build_tree(logp_grad, q_minus, r_minus, g_minus, depth, -1,
                              eps, h0, inv_mass, rng)
        sum_alpha += sub.sum_alpha
        n_alpha += sub.n_alpha
        if sub.divergent or sub.turning:
            divergent = divergent or sub.divergent
            break
        # biased progressive sampling favours the new subtree
        if math.log(rng.uniform()) < sub.log_sum_w - log_sum_w:
            proposal, proposal_logp = sub.proposal, sub.proposal_logp
        log_sum_w = np.logaddexp(log_sum_w, sub.log_sum_w)
        if direction == 1:
            q_plus, r_plus, g_plus = sub.q_plus, sub.r_plus, sub.g_plus
        else:
            q_minus, r_minus, g_minus = sub.q_minus, sub.r_minus, sub.g_minus
        depth += 1
        if _uturn(q_plus, q_minus, r_plus, r_minus, inv_mass):
            break

    accept_stat = sum_alpha / n_alpha if n_alpha else 0.0
    if proposal is q:
        return q, value, grad, accept_stat, depth, divergent
    value_new, grad_new = logp_grad(proposal)
    return proposal, value_new, grad_new, accept_stat, depth, divergent


def _slow_windows(n_warmup):
    """(init_buffer, term_buffer, mass-update iteration indices)."""
    if n_warmup >= 150:
        init_buf, term_buf, base = 75, 50, 25
    else:
        init_buf = max(1, int(0.15 * n_warmup))
        term_buf = max(1, int(0.10 * n_warmup))
        base = max(1, n_warmup - init_buf - term_buf)
    boundaries = []
    start, end, w = init_buf, n_warmup - term_buf, base
    while start < end:
        nxt = start + w
        if nxt + 2 * w > end:
            nxt = end
        boundaries.append(nxt)
        start = nxt
        w *= 2
    return init_buf, term_buf, boundaries


def _run_chain(logp_grad, dim, config, rng):
    theta = init_params(logp_grad, dim, rng, config.init_radius)
    value, grad = logp_grad(theta)
    inv_mass = np.ones(dim)
    eps = _find_reasonable_epsilon(logp_grad, theta, value, grad, inv_mass, rng)
    da = _DualAveraging(eps, config.target_accept)
    init_buf, term_buf, boundaries = _slow_windows(config.n_warmup)
    welford = _Welford(dim)
    boundary_set = set(boundaries)

    for it in range(1, config.n_warmup + 1):
        theta, value, grad, astat, _, _ = _transition(
            logp_grad, theta, value, grad, eps, inv_mass, config.max_tree_depth, rng)
        eps = da.update(astat)
        if init_buf < it <= config.n_warmup - term_buf:
            welford.push(theta)
        if it in boundary_set:
            inv_mass = welford.variance()
            welford = _Welford(dim)
            da.restart(min(max(math.exp(da.log_eps), 1e-10), 1e10))
    eps = da.adapted()

    draws = np.empty((config.n_draws, dim))
    logps = np.empty(config.n_draws)
    divergent = np.zeros(config.n_draws, dtype=bool)
    depths = np.zeros(config.n_draws, dtype=np.int16)
    for it in range(config.n_draws):
        theta, value, grad, _, depth, div = _transition(
            logp_grad, theta, value, grad, eps, inv_mass, config.max_tree_depth, rng)
        draws[it] = theta
        logps[it] = value
        divergent[it] = div
        depths[it] = depth
    return draws, logps, divergent, depths, eps, inv_mass


def nuts_sample(logp_grad, dim, config):
    """Run config.n_chains independent NUTS chains; returns Chains.

    logp_grad(theta) must return (log density, gradient) and be safe to call
    repeatedly; chains use independent spawned RNG streams from config.seed.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    draws = np.empty((config.n_chains, config.n_draws, dim))
    logps = np.empty((config.n_chains, config.n_draws))
    divergent = np.zeros((config.n_chains, config.n_draws), dtype=bool)
    depths = np.zeros((config.n_chains, config.n_draws), dtype=np.int16)
    step_sizes = np.empty(config.n_chains)
    inv_masses = np.empty((config.n_chains, dim))
    for c, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        out = _run_chain(logp_grad, dim, config, rng)
        draws[c], logps[c], divergent[c], depths[c], step_sizes[c], inv_masses[c] = out
    return Chains(draws, logps, divergent, depths, step_sizes, inv_masses, config)
