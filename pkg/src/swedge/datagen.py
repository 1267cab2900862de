"""Synthetic stepped-wedge data generation.

Continuous outcomes follow
    y = alpha_j + s_j(t) + tau(t*) * A + eps,
with cluster intercepts alpha_j ~ N(0, sigma_alpha^2), a shared quadratic
trend plus a stationary AR(1) cluster-time effect
    s_j(t) = quad_coef * t^2 + gamma_jt,
and iid noise.  The three time-varying effect-curve scenarios and the
cluster-specific multiplier exp(u_j) live here too.

Per-cluster RNG streams are spawned from the dataset seed, so generation is
reproducible independent of iteration order.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .design import dataset_from_design, design_rows


@dataclass(frozen=True)
class GenConfig:
    sigma_alpha: float = 0.5
    quad_coef: float = -0.01
    d_scale: float = 0.6
    rho: float = 0.95
    sigma_eps: float = 1.0
    sigma_u: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_alpha", "d_scale", "sigma_eps", "sigma_u"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")


@dataclass(frozen=True)
class EffectCurve:
    """Intervention effect as a function of exposure time.

    kind: "constant" (level tau), "scenario1", "scenario2", or "table"
    (values[k] = effect at exposure k, clamped at the last entry).
    Time-varying kinds are 0 at exposure 0.
    """

    kind: str
    level: float = 0.0
    table: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind not in ("constant", "scenario1", "scenario2", "table"):
            raise ValueError(f"unknown effect curve kind {self.kind!r}")
        if self.kind == "table":
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 1 or tab.size == 0:
                raise ValueError("table curve needs a 1-d value array")
            if tab[0] != 0.0:
                raise ValueError("time-varying curves must satisfy tau(0) = 0")
            object.__setattr__(self, "table", tab)

    def __call__(self, t_star):
        return effect_curve(self, t_star)


def effect_curve(curve, t_star):
    """Evaluate an effect curve at integer or real exposure time t_star >= 0."""
    ts = float(t_star)
    if ts < 0:
        raise ValueError("exposure time must be >= 0")
    if curve.kind == "constant":
        return float(curve.level)
    if ts == 0.0:
        return 0.0
    if curve.kind == "scenario1":
        return 5.0 / (1.0 + 2.0 * math.exp(-ts))
    if curve.kind == "scenario2":
        if ts < 5.0:
            return 5.0 / (1.0 + math.exp(-5.0 * (ts - 1.0)))
        return 2.5 + 5.0 / (1.0 + math.exp(2.0 * (ts - 5.0)))
    tab = curve.table
    idx = min(int(ts), tab.size - 1)
    return float(tab[idx])


def gen_ar1_temporal(T, d_scale, rho, rng):
    """Stationary AR(1) vector over the T+1 time points.

    gamma_0 = d*z_0, gamma_k = rho*gamma_{k-1} + d*sqrt(1-rho^2)*z_k, which has
    covariance D R D with D = d_scale*I and R_ab = rho^|a-b| exactly.
    """
    z = rng.standard_normal(T + 1)
    gamma = np.empty(T + 1)
    gamma[0] = d_scale * z[0]
    innov_sd = d_scale * math.sqrt(1.0 - rho * rho)
    for k in range(1, T + 1):
        gamma[k] = rho * gamma[k - 1] + innov_sd * z[k]
    return gamma


def _generate(design, config, curve, cluster_specific):
    cluster, period, exposure, treated = design_rows(design)
    J, T = design.n_clusters, design.n_periods_T
    tau_grid = np.array([effect_curve(curve, k) for k in range(T + 1)])

    y = config.quad_coef * period.astype(float) ** 2 + tau_grid[exposure] * treated

    streams = np.random.SeedSequence(config.seed).spawn(J)
    u = np.zeros(J)
    for j, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        alpha_j = config.sigma_alpha * rng.standard_normal()
        if cluster_specific:
            u[j] = config.sigma_u * rng.standard_normal()
        else:
            rng.standard_normal()  # keep the stream aligned across the two modes
        gamma = gen_ar1_temporal(T, config.d_scale, config.rho, rng)
        rows = cluster == j
        y[rows] += alpha_j + gamma[period[rows]]
        y[rows] += config.sigma_eps * rng.standard_normal(rows.sum())
    if cluster_specific:
        scale = np.exp(u[cluster])
        y += tau_grid[exposure] * treated * (scale - 1.0)

    return dataset_from_design(design, y)


def gen_immediate(design, config, tau):
    """Immediate-effect gaussian data: constant effect tau once treated."""
    return _generate(design, config, EffectCurve("constant", level=tau), cluster_specific=False)


def gen_time_varying(design, config, curve, cluster_specific=False):
    """Time-varying-effect gaussian data; optionally scale the curve by exp(u_j)."""
    if curve.kind == "constant":
        raise ValueError("use gen_immediate for constant effects")
    return _generate(design, config, curve, cluster_specific)
