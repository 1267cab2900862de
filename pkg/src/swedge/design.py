"""Stepped-wedge trial layout: treatment schedules, exposure times, panel data.

Time points are t = 0..T (period 0 is the all-control baseline).  Cluster j
first receives the intervention at start_period[j] in 1..T and stays treated.
Exposure time is 1 in the first treated period and 0 while untreated.
"""

import csv
import io
import json
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

CSV_BASE_COLUMNS = ("cluster", "period", "exposure", "treated", "y")

PanelObservation = namedtuple(
    "PanelObservation", ["cluster", "period", "exposure", "treated", "y", "covariates"])


@dataclass(frozen=True)
class TrialDesign:
    n_clusters: int
    n_periods_T: int
    start_period: np.ndarray
    individuals_per_cell: int

    def __post_init__(self):
        starts = np.asarray(self.start_period, dtype=int)
        object.__setattr__(self, "start_period", starts)
        if self.n_clusters < 1:
            raise ValueError("need at least one cluster")
        if starts.shape != (self.n_clusters,):
            raise ValueError("start_period must have one entry per cluster")
        if np.any(starts < 1) or np.any(starts > self.n_periods_T):
            raise ValueError("start periods must lie in [1, T]; period 0 is the baseline")
        if self.individuals_per_cell < 1:
            raise ValueError("individuals_per_cell must be >= 1")

    @property
    def periods(self):
        return np.arange(self.n_periods_T + 1)

    def to_dict(self):
        return {
            "n_clusters": self.n_clusters,
            "n_periods_T": self.n_periods_T,
            "start_period": self.start_period.tolist(),
            "individuals_per_cell": self.individuals_per_cell,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["n_clusters"], d["n_periods_T"],
                   np.asarray(d["start_period"], dtype=int), d["individuals_per_cell"])

    def to_json(self):
        return json.dumps(self.to_dict())


def build_design(J, T, schedule=None, I=10, rng=None):
    """Build a stepped-wedge design.

    schedule=None draws a random permutation of start periods 1..J (classic
    one-cluster-per-step rollout; needs rng).  An explicit sequence of start
    periods is validated and passed through.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    if T < J:
        raise ValueError("need T >= J so every cluster can start by the last period")
    if schedule is None:
        rng = np.random.default_rng(rng)
        starts = rng.permutation(J) + 1
    else:
        starts = np.asarray(schedule, dtype=int)
    return TrialDesign(J, T, starts, I)


def treatment_indicator(design, j, t):
    """1 once cluster j has crossed over (absorbing), else 0."""
    return int(t >= design.start_period[j])


def exposure_time(design, j, t):
    """Periods of intervention exposure: 0 while untreated, 1 at the start period."""
    return max(0, int(t) - int(design.start_period[j]) + 1)


@dataclass
class PanelDataset:
    """Individual-level cross-sectional observations from a stepped-wedge trial.

    Column arrays all have length n_obs; covariates is (n_obs, k) or None.
    design is None for datasets loaded from files without full schedule info.
    """

    cluster: np.ndarray
    period: np.ndarray
    exposure: np.ndarray
    treated: np.ndarray
    y: np.ndarray
    covariates: np.ndarray = None
    outcome_family: str = "gaussian"
    design: TrialDesign = field(default=None)

    def __post_init__(self):
        self.cluster = np.asarray(self.cluster, dtype=np.int64)
        self.period = np.asarray(self.period, dtype=np.int64)
        self.exposure = np.asarray(self.exposure, dtype=np.int64)
        self.treated = np.asarray(self.treated, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        if self.covariates is not None:
            self.covariates = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        n = self.y.size
        for name in ("cluster", "period", "exposure", "treated"):
            if getattr(self, name).size != n:
                raise ValueError(f"column {name} length mismatch")
        if self.covariates is not None and self.covariates.shape[0] != n:
            raise ValueError("covariates row count mismatch")
        if self.outcome_family not in ("gaussian", "bernoulli", "poisson"):
            raise ValueError(f"unknown outcome_family {self.outcome_family!r}")

    @property
    def n_obs(self):
        return self.y.size

    @property
    def n_clusters(self):
        return int(self.cluster.max()) + 1

    @property
    def n_covariates(self):
        return 0 if self.covariates is None else self.covariates.shape[1]

    @property
    def max_period(self):
        return int(self.period.max())

    @property
    def max_exposure(self):
        return int(self.exposure.max())

    def row(self, i):
        return PanelObservation(
            int(self.cluster[i]), int(self.period[i]), int(self.exposure[i]),
            int(self.treated[i]), float(self.y[i]),
            None if self.covariates is None else self.covariates[i])

    def to_csv(self, path_or_buf):
        header = list(CSV_BASE_COLUMNS) + [f"covariate_{k}" for k in range(self.n_covariates)]
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            f = open(path_or_buf, "w", newline="")
            close = True
        else:
            f = path_or_buf
        try:
            w = csv.writer(f)
            w.writerow(header)
            for i in range(self.n_obs):
                row = [self.cluster[i], self.period[i], self.exposure[i],
                       self.treated[i], repr(float(self.y[i]))]
                if self.covariates is not None:
                    row += [repr(float(v)) for v in self.covariates[i]]
                w.writerow(row)
        finally:
            if close:
                f.close()

    @classmethod
    def from_csv(cls, path_or_buf, outcome_family="gaussian"):
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            f = open(path_or_buf, newline="")
            close = True
        elif isinstance(path_or_buf, io.TextIOBase):
            f = path_or_buf
        else:
            f = io.StringIO(path_or_buf.read())
        try:
            r = csv.reader(f)
            header = next(r)
            if header[:5] != list(CSV_BASE_COLUMNS):
                raise ValueError(f"expected header starting with {CSV_BASE_COLUMNS}, got {header[:5]}")
            cov_names = header[5:]
            rows = [row for row in r if row]
        finally:
            if close:
                f.close()
        n = len(rows)
        arr = np.array([[float(v) for v in row] for row in rows]) if n else np.zeros((0, 5))
        ds = cls(
            cluster=arr[:, 0].astype(int), period=arr[:, 1].astype(int),
            exposure=arr[:, 2].astype(int), treated=arr[:, 3].astype(int),
            y=arr[:, 4],
            covariates=arr[:, 5:] if cov_names else None,
            outcome_family=outcome_family,
            design=None,
        )
        ds.design = _infer_design(ds)
        return ds


def _infer_design(ds):
    """Reconstruct a TrialDesign from columns when every cluster crosses over."""
    J = ds.n_clusters
    T = ds.max_period
    starts = np.zeros(J, dtype=int)
    counts = np.zeros((J, T + 1), dtype=int)
    for j in range(J):
        mask = (ds.cluster == j) & (ds.treated == 1)
        if not mask.any():
            return None
        starts[j] = ds.period[mask].min()
        for t in range(T + 1):
            counts[j, t] = np.sum((ds.cluster == j) & (ds.period == t))
    cells = counts.ravel()
    if not (cells > 0).all() or len(set(cells.tolist())) != 1:
        return None
    try:
        return TrialDesign(J, T, starts, int(cells[0]))
    except ValueError:
        return None


def dataset_from_design(design, y, covariates=None, outcome_family="gaussian"):
    """Assemble a PanelDataset in canonical row order (cluster, period, individual)."""
    cluster, period, exposure, treated = design_rows(design)
    return PanelDataset(cluster, period, exposure, treated, y,
                        covariates=covariates, outcome_family=outcome_family, design=design)


def design_rows(design):
    """Canonical row layout: for each cluster, each period, I individuals."""
    J, T, I = design.n_clusters, design.n_periods_T, design.individuals_per_cell
    n = J * (T + 1) * I
    cluster = np.repeat(np.arange(J), (T + 1) * I)
    period = np.tile(np.repeat(np.arange(T + 1), I), J)
    treated = (period >= design.start_period[cluster]).astype(np.int64)
    exposure = np.maximum(0, period - design.start_period[cluster] + 1) * treated
    assert cluster.size == n
    return cluster, period, exposure, treated
