"""Synthetic counts and brute-force oracles.

Two generators live here:

* a Gaussian-copula scheme (latent MVN -> normal CDF -> Poisson quantile),
  whose conditional-independence graph is the zero pattern of the latent
  precision matrix;
* exact enumeration of the count MRF on a truncated support for ``P <= 3``,
  used by the tests as an independent oracle for the node conditionals.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import norm, poisson

from .errors import GenerationError, ParameterError, ShapeError
from .model import EdgeWeights, edge_transform, pair_indices

MAX_TINY_STATES = 30_000


def _edges_from_matrix(mat, tol=0.0):
    iu = pair_indices(mat.shape[0])
    keep = np.abs(mat[iu]) > tol
    return [(int(j), int(l)) for j, l, k in zip(iu[0], iu[1], keep) if k]


def random_sparse_precision(P, edge_prob=0.2, magnitude=0.3, seed=None):
    """Random diagonally dominant precision matrix.

    Each pair ``j < l`` gets an off-diagonal entry of ``+/- magnitude`` with
    probability ``edge_prob`` (random sign).  Diagonal entries are the row sums
    of absolute off-diagonals plus one, which makes the matrix strictly
    diagonally dominant and hence positive definite.

    Returns
    -------
    precision : ndarray, shape (P, P)
    edges : list of (j, l) tuples with ``j < l``
    """
    if not 0 <= edge_prob < 1:
        raise ParameterError("edge_prob must lie in [0, 1)")
    if P < 2:
        raise ParameterError("need P >= 2")
    rng = np.random.default_rng(seed)
    iu = pair_indices(P)
    present = rng.random(iu[0].size) < edge_prob
    signs = np.where(rng.random(iu[0].size) < 0.5, -1.0, 1.0)
    off = np.where(present, signs * magnitude, 0.0)
    omega = np.zeros((P, P))
    omega[iu] = off
    omega = omega + omega.T
    np.fill_diagonal(omega, np.abs(omega).sum(axis=1) + 1.0)
    return omega, _edges_from_matrix(omega)


@dataclass
class CopulaSpec:
    """Settings for Gaussian-copula count generation."""

    P: int
    n: int
    precision: np.ndarray
    marginal_mean: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        self.precision = np.asarray(self.precision, dtype=float)
        if self.precision.shape != (self.P, self.P):
            raise ShapeError(f"precision must be {self.P}x{self.P}")
        if not np.allclose(self.precision, self.precision.T):
            raise GenerationError("precision matrix must be symmetric")
        if not self.marginal_mean > 0:
            raise ParameterError("marginal_mean must be positive")
        if self.n < 0:
            raise ParameterError("n must be nonnegative")


@dataclass
class SimulatedCounts:
    counts: np.ndarray
    edges: list
    precision: np.ndarray
    spec: CopulaSpec


def poisson_quantile(p, mean):
    """Smallest integer ``k`` with ``CDF(k) >= p`` (vectorised)."""
    return poisson.ppf(p, mean).astype(np.int64)


def generate_copula_counts(spec):
    """Draw ``spec.n`` rows of dependent counts via a Gaussian copula.

    Rows of a latent matrix are ``MVN(0, precision^-1)``; each entry is pushed
    through the standard normal CDF and then the Poisson(``marginal_mean``)
    quantile function.  Both maps are monotone, so zeros of the precision
    matrix are conditional independencies of the counts.
    """
    try:
        chol = np.linalg.cholesky(spec.precision)
    except np.linalg.LinAlgError as exc:
        raise GenerationError("precision matrix is not positive definite") from exc
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.n, spec.P))
    # precision = L L^T  =>  x = L^{-T} z has covariance precision^{-1}
    latent = np.linalg.solve(chol.T, z.T).T if spec.n else z
    counts = np.empty(latent.shape, dtype=np.int64)
    low = latent <= 0
    counts[low] = poisson_quantile(norm.cdf(latent[low]), spec.marginal_mean)
    # upper half via survival functions so that Phi(x) never rounds to 1
    hi = ~low
    counts[hi] = poisson.isf(norm.sf(latent[hi]), spec.marginal_mean).astype(np.int64)
    return SimulatedCounts(counts, _edges_from_matrix(spec.precision), spec.precision, spec)


@dataclass
class TinyMRFSpec:
    """A small count MRF whose truncated joint support can be enumerated."""

    lambda_row: np.ndarray
    beta: EdgeWeights
    theta: float
    B_small: int = 25

    def __post_init__(self):
        self.lambda_row = np.asarray(self.lambda_row, dtype=float)
        P = self.lambda_row.size
        if not isinstance(self.beta, EdgeWeights):
            self.beta = EdgeWeights(self.beta, P)
        if self.beta.P != P:
            raise ShapeError("beta and lambda_row disagree on P")
        if P > 3 or P < 2:
            raise ParameterError("tiny specs support P in {2, 3}")
        if self.B_small < 1 or (self.B_small + 1) ** P > MAX_TINY_STATES:
            raise ParameterError("support must hold between 2 and 30000 states per table")
        if np.any(self.lambda_row <= 0):
            raise ParameterError("lambda must be positive")

    @property
    def P(self):
        return self.lambda_row.size


@dataclass
class JointTable:
    """Exact probabilities over ``{0..B_small}^P``; ``prob[x1, ..., xP]``."""

    prob: np.ndarray
    log_normalizer: float
    spec: TinyMRFSpec = field(repr=False)

    @property
    def P(self):
        return self.prob.ndim

    def marginal(self, j):
        axes = tuple(a for a in range(self.P) if a != j)
        return self.prob.sum(axis=axes)

    def conditional(self, j, x):
        """Distribution of ``X_j`` on ``0..B_small`` given the other entries of ``x``."""
        idx = [int(v) for v in x]
        idx[j] = slice(None)
        col = self.prob[tuple(idx)]
        return col / col.sum()

    def pair_conditional(self, j, l, x):
        """Joint table of ``(X_j, X_l)`` given the remaining coordinates of ``x``."""
        idx = [int(v) for v in x]
        idx[j] = slice(None)
        idx[l] = slice(None)
        sub = self.prob[tuple(idx)]
        if j > l:
            sub = sub.T
        return sub / sub.sum()

    def moments(self):
        """Means and covariance matrix of the enumerated distribution."""
        grids = np.meshgrid(*[np.arange(self.prob.shape[0])] * self.P, indexing="ij")
        flat = np.stack([g.ravel() for g in grids], axis=1).astype(float)
        w = self.prob.ravel()
        mean = w @ flat
        centred = flat - mean
        cov = (centred * w[:, None]).T @ centred
        return mean, cov


def exact_joint_pmf(spec):
    """Enumerate the unnormalized joint mass on the truncated support and normalize."""
    P = spec.P
    support = np.arange(spec.B_small + 1)
    f = edge_transform(support, spec.theta)
    bm = spec.beta.matrix()
    logm = np.zeros((spec.B_small + 1,) * P)
    for j in range(P):
        shape = [1] * P
        shape[j] = -1
        node = support * np.log(spec.lambda_row[j]) - gammaln(support + 1)
        logm = logm + node.reshape(shape)
    for j, l in itertools.combinations(range(P), 2):
        shape_j = [1] * P
        shape_j[j] = -1
        shape_l = [1] * P
        shape_l[l] = -1
        logm = logm - bm[j, l] * f.reshape(shape_j) * f.reshape(shape_l)
    log_z = float(logsumexp(logm))
    return JointTable(np.exp(logm - log_z), log_z, spec)


def sample_tiny_mrf(spec, n, seed=None, table=None):
    """iid draws from the enumerated joint table, returned as an ``n x P`` matrix."""
    if table is None:
        table = exact_joint_pmf(spec)
    P = spec.P
    if n == 0:
        return np.zeros((0, P), dtype=np.int64)
    rng = np.random.default_rng(seed)
    flat = table.prob.ravel()
    cdf = np.cumsum(flat)
    cdf[-1] = 1.0
    picks = np.searchsorted(cdf, rng.random(n), side="right")
    picks = np.minimum(picks, flat.size - 1)
    return np.stack(np.unravel_index(picks, table.prob.shape), axis=1).astype(np.int64)


def _edge_set(edges):
    out = set()
    for j, l in edges:
        j, l = int(j), int(l)
        if j == l:
            continue
        out.add((min(j, l), max(j, l)))
    return out


def evaluate_estimate(truth_edges, estimate, P):
    """False-positive and false-negative edge proportions ``(p1, p2)``.

    ``p1`` is the number of estimated edges absent from the truth divided by
    the number of true non-edges; ``p2`` is the number of true edges missing
    from the estimate divided by the number of true edges.  ``p1 = 0`` when the
    true graph is complete and ``p2 = 0`` when it is empty.

    ``estimate`` may be a GraphEstimate, a boolean adjacency matrix or an
    iterable of ``(j, l)`` pairs.
    """
    adjacency = getattr(estimate, "adjacency", estimate)
    arr = np.asarray(adjacency) if not isinstance(adjacency, (set, list, tuple)) else None
    if arr is not None and arr.ndim == 2:
        if arr.shape != (P, P):
            raise ShapeError(f"estimate adjacency must be {P}x{P}")
        est = _edges_from_matrix(arr.astype(float))
    else:
        est = adjacency
    truth = _edge_set(truth_edges)
    est = _edge_set(est)
    total = P * (P - 1) // 2
    non_edges = total - len(truth)
    p1 = len(est - truth) / non_edges if non_edges else 0.0
    p2 = len(truth - est) / len(truth) if truth else 0.0
    return p1, p2
