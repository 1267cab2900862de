"""Model specifications, unconstrained parameter layouts, and log posteriors.

Four Bayesian models share a hierarchical spline time trend (pooled
coefficients beta with either a random-walk prior or an explicit
second-difference penalty, cluster coefficients beta_b shrunk toward beta):

    immediate        constant intervention effect tau
    time_varying     effect = spline in exposure time, coefficients beta_star
    cluster_varying  same curve scaled by exp(u_j) per cluster
    monotone         effect = delta * cumulative sums of a Dirichlet simplex

Sampling happens on the unconstrained scale: scales enter through exp,
the simplex through stick-breaking and omega through a scaled logit, with
all transform Jacobians included in the log posterior.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .basis import SplineBasis, basis_matrix, eval_basis, make_knots

MODELS = ("immediate", "time_varying", "cluster_varying", "monotone")
LINK_FAMILY = {"identity": "gaussian", "logit": "bernoulli", "log": "poisson"}
FAMILY_CODE = {"gaussian": 0, "bernoulli": 1, "poisson": 2}
SMOOTH_CODE = {"random_walk": 0, "second_difference": 1}


@dataclass(frozen=True)
class ModelSpec:
    model: str
    time_basis: SplineBasis
    n_clusters: int
    link: str = "identity"
    smoothness: str = "random_walk"
    penalty_form: str = "printed"
    exposure_basis: SplineBasis = None
    n_extra_covariates: int = 0
    monotone_k: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.link not in LINK_FAMILY:
            raise ValueError(f"unknown link {self.link!r}")
        if self.smoothness not in SMOOTH_CODE:
            raise ValueError(f"unknown smoothness mode {self.smoothness!r}")
        if self.penalty_form not in ("printed", "conventional"):
            raise ValueError(f"unknown penalty form {self.penalty_form!r}")
        uses_exposure = self.model in ("time_varying", "cluster_varying")
        if uses_exposure != (self.exposure_basis is not None):
            raise ValueError("exposure_basis present iff the model uses an exposure spline")
        if self.model == "monotone" and self.monotone_k < 1:
            raise ValueError("monotone model needs monotone_k >= 1")
        if self.smoothness == "second_difference" and self.time_basis.p < 3:
            raise ValueError("second-difference penalty needs p >= 3")
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")

    @property
    def family(self):
        return LINK_FAMILY[self.link]

    def to_dict(self):
        d = {
            "model": self.model,
            "link": self.link,
            "smoothness": self.smoothness,
            "penalty_form": self.penalty_form,
            "time_basis": self.time_basis.to_dict(),
            "n_clusters": self.n_clusters,
            "n_extra_covariates": self.n_extra_covariates,
            "monotone_k": self.monotone_k,
        }
        if self.exposure_basis is not None:
            d["exposure_basis"] = self.exposure_basis.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        eb = d.get("exposure_basis")
        return cls(
            model=d["model"],
            time_basis=SplineBasis.from_dict(d["time_basis"]),
            n_clusters=d["n_clusters"],
            link=d.get("link", "identity"),
            smoothness=d.get("smoothness", "random_walk"),
            penalty_form=d.get("penalty_form", "printed"),
            exposure_basis=SplineBasis.from_dict(eb) if eb else None,
            n_extra_covariates=d.get("n_extra_covariates", 0),
            monotone_k=d.get("monotone_k", 0),
        )


def build_model_spec(model, dataset, link=None, smoothness="random_walk",
                     penalty_form="printed", n_quantiles=6, degree=3, t_star_max=None):
    """Assemble a ModelSpec for a dataset using the quantile knot rules.

    Time knots come from the study-time grid {0..T}; exposure knots from the
    exposure grid {0..max observed exposure}.  For the monotone model the
    simplex length defaults to T-2 (the classic-design maximum estimand
    exposure), clamping larger observed exposures onto the final step.
    """
    if link is None:
        link = {v: k for k, v in LINK_FAMILY.items()}[dataset.outcome_family]
    T = dataset.design.n_periods_T if dataset.design is not None else dataset.max_period
    time_basis = SplineBasis(make_knots(np.arange(T + 1), n_quantiles, degree))
    exposure_basis = None
    monotone_k = 0
    if model in ("time_varying", "cluster_varying"):
        exposure_basis = SplineBasis(make_knots(np.arange(dataset.max_exposure + 1),
                                                n_quantiles, degree))
    elif model == "monotone":
        monotone_k = int(t_star_max) if t_star_max is not None else max(1, T - 2)
    return ModelSpec(
        model=model, time_basis=time_basis, n_clusters=dataset.n_clusters,
        link=link, smoothness=smoothness, penalty_form=penalty_form,
        exposure_basis=exposure_basis, n_extra_covariates=dataset.n_covariates,
        monotone_k=monotone_k,
    )


@dataclass
class ParamLayout:
    """Index map of the unconstrained parameter vector for a ModelSpec."""

    spec: ModelSpec
    slices: dict = field(default_factory=dict)
    dim: int = 0

    def __post_init__(self):
        s = self.spec
        p = s.time_basis.p
        J = s.n_clusters
        pos = 0

        def block(name, length):
            nonlocal pos
            self.slices[name] = slice(pos, pos + length)
            pos += length

        block("alpha", 1)
        block("beta", p)
        block("beta_b", J * p)
        block("log_sigma_b", 1)
        if s.smoothness == "random_walk":
            block("log_sigma_beta", 1)
        else:
            block("log_lambda", 1)
        if s.model == "immediate":
            block("tau", 1)
        elif s.model in ("time_varying", "cluster_varying"):
            block("beta_star", s.exposure_basis.p)
            block("log_sigma_beta_star", 1)
            if s.model == "cluster_varying":
                block("u", J)
                block("log_sigma_u", 1)
        else:
            block("delta", 1)
            block("stick", s.monotone_k - 1)
            block("omega_real", 1)
        if s.n_extra_covariates:
            block("x_coef", s.n_extra_covariates)
        if s.family == "gaussian":
            block("log_sigma_eps", 1)
        self.dim = pos

    def get(self, theta, name):
        sl = self.slices[name]
        if sl.stop - sl.start == 1:
            return float(theta[sl.start])
        return theta[sl]

    def constrained_names(self):
        """Column names of the constrained draw view, in layout order."""
        s = self.spec
        p = s.time_basis.p
        J = s.n_clusters
        names = ["alpha"]
        names += [f"beta[{m}]" for m in range(1, p + 1)]
        names += [f"beta_b[{j}][{m}]" for j in range(1, J + 1) for m in range(1, p + 1)]
        names += ["sigma_b"]
        names += ["sigma_beta"] if s.smoothness == "random_walk" else ["lambda"]
        if s.model == "immediate":
            names += ["tau"]
        elif s.model in ("time_varying", "cluster_varying"):
            names += [f"beta_star[{m}]" for m in range(1, s.exposure_basis.p + 1)]
            names += ["sigma_beta_star"]
            if s.model == "cluster_varying":
                names += [f"u[{j}]" for j in range(1, J + 1)]
                names += ["sigma_u"]
        else:
            names += ["delta"]
            names += [f"simplex[{k}]" for k in range(1, s.monotone_k + 1)]
            names += ["omega"]
        names += [f"x_coef[{k}]" for k in range(1, s.n_extra_covariates + 1)]
        if s.family == "gaussian":
            names += ["sigma_eps"]
        return names


def stick_breaking(v):
    """Map len(v) unconstrained reals to a simplex of len(v)+1 entries."""
    K = v.size + 1
    x, _, _, logj = kernels._stick_break(np.asarray(v, dtype=float), K)
    return x, logj


def scaled_logit(w, lo=kernels.OMEGA_LO, hi=kernels.OMEGA_HI):
    """Map a real onto (lo, hi); returns (value, log-Jacobian)."""
    s = 1.0 / (1.0 + math.exp(-w))
    return lo + (hi - lo) * s, math.log(hi - lo) + math.log(s) + math.log(1.0 - s)


def constrain(spec, theta):
    """Constrained parameter blocks plus the total transform log-Jacobian."""
    layout = ParamLayout(spec)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (layout.dim,):
        raise ValueError(f"expected parameter vector of length {layout.dim}, got {theta.shape}")
    s = spec
    out = {}
    logj = 0.0
    out["alpha"] = layout.get(theta, "alpha")
    out["beta"] = np.array(layout.get(theta, "beta"))
    out["beta_b"] = np.array(layout.get(theta, "beta_b")).reshape(s.n_clusters, s.time_basis.p)
    for name, key in (("log_sigma_b", "sigma_b"),
                      ("log_sigma_beta", "sigma_beta"),
                      ("log_lambda", "lambda"),
                      ("log_sigma_beta_star", "sigma_beta_star"),
                      ("log_sigma_u", "sigma_u"),
                      ("log_sigma_eps", "sigma_eps")):
        if name in layout.slices:
            lv = layout.get(theta, name)
            out[key] = math.exp(lv)
            logj += lv
    if s.model == "immediate":
        out["tau"] = layout.get(theta, "tau")
    elif s.model in ("time_varying", "cluster_varying"):
        out["beta_star"] = np.array(layout.get(theta, "beta_star"))
        if s.model == "cluster_varying":
            out["u"] = np.array(layout.get(theta, "u"))
    else:
        out["delta"] = layout.get(theta, "delta")
        if s.monotone_k > 1:
            simplex, lj = stick_breaking(layout.get(theta, "stick"))
        else:
            simplex, lj = np.ones(1), 0.0
        out["simplex"] = simplex
        logj += lj
        omega, lj = scaled_logit(layout.get(theta, "omega_real"))
        out["omega"] = omega
        logj += lj
    if s.n_extra_covariates:
        out["x_coef"] = np.array(layout.get(theta, "x_coef"))
    return out, logj


def constrain_vector(spec, theta):
    """Flat constrained view matching ParamLayout.constrained_names()."""
    c, _ = constrain(spec, theta)
    parts = [np.atleast_1d(c["alpha"]), c["beta"], c["beta_b"].ravel(),
             np.atleast_1d(c["sigma_b"]),
             np.atleast_1d(c["sigma_beta"] if spec.smoothness == "random_walk" else c["lambda"])]
    if spec.model == "immediate":
        parts.append(np.atleast_1d(c["tau"]))
    elif spec.model in ("time_varying", "cluster_varying"):
        parts += [c["beta_star"], np.atleast_1d(c["sigma_beta_star"])]
        if spec.model == "cluster_varying":
            parts += [c["u"], np.atleast_1d(c["sigma_u"])]
    else:
        parts += [np.atleast_1d(c["delta"]), c["simplex"], np.atleast_1d(c["omega"])]
    if spec.n_extra_covariates:
        parts.append(c["x_coef"])
    if spec.family == "gaussian":
        parts.append(np.atleast_1d(c["sigma_eps"]))
    return np.concatenate(parts)


def penalty_term(beta, lam, form="printed"):
    """The quantity 0.5*lambda*sum of squared coefficient contrasts.

    This is what penalty mode subtracts from the log density in place of the
    random-walk prior on the pooled coefficients.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.size < 3:
        raise ValueError("penalty needs at least 3 coefficients")
    mid = 2.0 if form == "conventional" else 1.0
    c = beta[:-2] - mid * beta[1:-1] + beta[2:]
    return 0.5 * lam * float(np.dot(c, c))


class Posterior:
    """Precomputed design blocks + kernel dispatch for one (spec, dataset)."""

    def __init__(self, spec, dataset):
        if dataset.outcome_family != spec.family:
            raise ValueError(
                f"dataset family {dataset.outcome_family!r} does not match link {spec.link!r}")
        if dataset.n_obs and int(dataset.cluster.max()) >= spec.n_clusters:
            raise ValueError("dataset has more clusters than the spec")
        if dataset.n_covariates != spec.n_extra_covariates:
            raise ValueError("covariate count mismatch between spec and dataset")
        self.spec = spec
        self.layout = ParamLayout(spec)
        self.dim = self.layout.dim
        self.y = np.ascontiguousarray(dataset.y, dtype=np.float64)
        self.cluster = np.ascontiguousarray(dataset.cluster, dtype=np.int64)
        self.A = np.ascontiguousarray(dataset.treated, dtype=np.float64)
        n = self.y.size
        self.X = (np.ascontiguousarray(dataset.covariates, dtype=np.float64)
                  if dataset.covariates is not None else np.zeros((n, 0)))
        self.B = basis_matrix(spec.time_basis, dataset.period)
        self._family = FAMILY_CODE[spec.family]
        self._smooth = SMOOTH_CODE[spec.smoothness]
        self._conventional = 1 if spec.penalty_form == "conventional" else 0
        if spec.model in ("time_varying", "cluster_varying"):
            self.Bstar = basis_matrix(spec.exposure_basis, dataset.exposure)
        elif spec.model == "monotone":
            self.eclamp = np.minimum(dataset.exposure, spec.monotone_k).astype(np.int64)

    def logp_grad(self, theta):
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        s = self.spec
        args = (theta, self.y, self.cluster, self.B)
        if s.model == "immediate":
            return kernels.logpost_immediate(*args, self.A, self.X, self._family,
                                             self._smooth, self._conventional, s.n_clusters)
        if s.model in ("time_varying", "cluster_varying"):
            has_u = 1 if s.model == "cluster_varying" else 0
            return kernels.logpost_time_varying(*args, self.Bstar, self.A, self.X,
                                                self._family, self._smooth,
                                                self._conventional, s.n_clusters, has_u)
        return kernels.logpost_monotone(*args, self.eclamp, self.A, self.X, self._family,
                                        self._smooth, self._conventional,
                                        s.n_clusters, s.monotone_k)

    def logp(self, theta):
        return self.logp_grad(theta)[0]

    def eta(self, theta):
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        s = self.spec
        if s.model == "immediate":
            return kernels.eta_immediate(theta, self.cluster, self.B, self.A, self.X, s.n_clusters)
        if s.model in ("time_varying", "cluster_varying"):
            has_u = 1 if s.model == "cluster_varying" else 0
            return kernels.eta_time_varying(theta, self.cluster, self.B, self.Bstar,
                                            self.A, self.X, s.n_clusters, has_u)
        return kernels.eta_monotone(theta, self.cluster, self.B, self.eclamp,
                                    self.A, self.X, s.n_clusters, s.monotone_k)

    def pointwise_log_lik(self, theta):
        eta = self.eta(theta)
        sigma_eps = 1.0
        if self.spec.family == "gaussian":
            sigma_eps = math.exp(self.layout.get(np.asarray(theta), "log_sigma_eps"))
        return kernels.pointwise_loglik_from_eta(eta, self.y, self._family, sigma_eps)


def log_posterior(spec, theta, dataset):
    """Log density and gradient at the unconstrained point theta."""
    value, grad = Posterior(spec, dataset).logp_grad(theta)
    return value, grad


def pointwise_log_lik(spec, theta, dataset):
    """Per-observation log likelihood at theta (likelihood only, no priors)."""
    return Posterior(spec, dataset).pointwise_log_lik(theta)


def effect_at(spec, theta, t_star, cluster=None):
    """Intervention effect at exposure t_star implied by one parameter draw.

    For cluster_varying the overall curve is returned unless a cluster index
    is given.  The immediate model has no curve (its effect is tau).
    """
    c, _ = constrain(spec, theta)
    if spec.model == "immediate":
        return c["tau"]
    if spec.model == "monotone":
        k = min(int(t_star), spec.monotone_k)
        return c["delta"] * float(np.sum(c["simplex"][:k]))
    val = float(np.dot(c["beta_star"], eval_basis(spec.exposure_basis, t_star)))
    if spec.model == "cluster_varying" and cluster is not None:
        val *= math.exp(c["u"][cluster])
    return val


def linear_predictor(spec, theta, obs):
    """Linear predictor for one observation (fields: cluster, period, exposure,
    treated, covariates)."""
    c, _ = constrain(spec, theta)
    eta = c["alpha"] + float(np.dot(c["beta_b"][obs.cluster],
                                    eval_basis(spec.time_basis, obs.period)))
    if obs.treated:
        eta += effect_at(spec, theta, obs.exposure, cluster=obs.cluster)
    if spec.n_extra_covariates:
        eta += float(np.dot(c["x_coef"], np.asarray(obs.covariates, dtype=float)))
    return eta
