"""B-spline bases on study time and exposure time.

Knots come from equally spaced quantiles of the observed support with the
extreme quantiles dropped; evaluation uses the Cox-de Boor recursion on an
open (clamped) knot vector.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KnotVector:
    """Interior knots plus boundaries; boundaries are repeated degree+1 times."""

    interior: np.ndarray
    lo: float
    hi: float
    degree: int

    def __post_init__(self):
        interior = np.asarray(self.interior, dtype=float)
        object.__setattr__(self, "interior", interior)
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if not self.lo < self.hi:
            raise ValueError("boundary_lo must be < boundary_hi")
        if interior.size:
            seq = np.concatenate([[self.lo], interior, [self.hi]])
            if not np.all(np.diff(seq) > 0):
                raise ValueError("knots must be strictly increasing inside the boundaries")

    @property
    def padded(self):
        """Full clamped knot sequence with each boundary repeated degree+1 times."""
        d = self.degree
        return np.concatenate([np.full(d + 1, self.lo), self.interior, np.full(d + 1, self.hi)])


@dataclass(frozen=True)
class SplineBasis:
    """A B-spline basis of dimension p = len(interior) + degree + 1."""

    knots: KnotVector

    @property
    def p(self):
        return self.knots.interior.size + self.knots.degree + 1

    @property
    def degree(self):
        return self.knots.degree

    def to_dict(self):
        return {
            "degree": self.knots.degree,
            "interior_knots": self.knots.interior.tolist(),
            "boundaries": [self.knots.lo, self.knots.hi],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(KnotVector(np.asarray(d["interior_knots"], dtype=float),
                              d["boundaries"][0], d["boundaries"][1], d["degree"]))

    def to_json(self):
        return json.dumps(self.to_dict())


def make_knots(values, n_quantiles=6, degree=3):
    """Quantile-based knot vector over the support of `values`.

    Takes n_quantiles equally spaced quantiles (linear interpolation between
    order statistics), drops the smallest and largest, and uses the rest as
    interior knots.  Boundaries are min/max of the values.  Ties among the
    quantiles (or with a boundary) collapse to a single knot.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("values must be nonempty")
    if n_quantiles < 3:
        raise ValueError("n_quantiles must be >= 3")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise ValueError("degenerate support")
    probs = np.linspace(0.0, 1.0, n_quantiles)[1:-1]
    qs = np.quantile(values, probs)  # numpy default = linear ("type 7")
    interior = np.unique(qs)
    interior = interior[(interior > lo) & (interior < hi)]
    if interior.size < qs.size:
        logger.warning("collapsed %d duplicate/boundary quantile knots", qs.size - interior.size)
    return KnotVector(interior, lo, hi, degree)


def _find_span(padded, degree, x):
    """Index s with padded[s] <= x < padded[s+1]; the last span is closed."""
    n_basis = padded.size - degree - 1
    if x >= padded[n_basis]:
        return n_basis - 1
    if x <= padded[degree]:
        return degree
    lo_i, hi_i = degree, n_basis
    while True:
        mid = (lo_i + hi_i) // 2
        if x < padded[mid]:
            hi_i = mid
        elif x >= padded[mid + 1]:
            lo_i = mid
        else:
            return mid


def _nonzero_basis(padded, degree, span, x):
    """The degree+1 nonzero basis values at x (Cox-de Boor, Piegl & Tiller)."""
    vals = np.zeros(degree + 1)
    left = np.zeros(degree + 1)
    right = np.zeros(degree + 1)
    vals[0] = 1.0
    for j in range(1, degree + 1):
        left[j] = x - padded[span + 1 - j]
        right[j] = padded[span + j] - x
        saved = 0.0
        for r in range(j):
            denom = right[r + 1] + left[j - r]
            term = vals[r] / denom if denom != 0.0 else 0.0
            vals[r] = saved + right[r + 1] * term
            saved = left[j - r] * term
        vals[j] = saved
    return vals


def eval_basis(basis, x):
    """All p basis values at x; x outside the boundaries is clamped."""
    kv = basis.knots
    x = min(max(float(x), kv.lo), kv.hi)
    padded = kv.padded
    span = _find_span(padded, kv.degree, x)
    out = np.zeros(basis.p)
    out[span - kv.degree: span + 1] = _nonzero_basis(padded, kv.degree, span, x)
    return out


def basis_matrix(basis, xs):
    """Stack eval_basis rowwise: row i holds the basis values at xs[i]."""
    xs = np.asarray(xs, dtype=float)
    out = np.zeros((xs.size, basis.p))
    for i, x in enumerate(xs.ravel()):
        out[i] = eval_basis(basis, x)
    return out
