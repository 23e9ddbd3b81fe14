"""Count Markov random field with bounded arctan edge potentials.

The joint mass of one observation ``x`` (length ``P``) is

    Pr(x) ∝ prod_j lambda_j**x_j / x_j! * exp(-sum_{j<l} beta_jl F(x_j) F(x_l))

with ``F(x) = arctan(x)**theta``.  Because ``F`` is bounded by
``(pi/2)**theta`` the edge weights may take either sign.  Everything here is
a pure function of its inputs and is evaluated in the log domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import poisson

from .errors import ParameterError, ShapeError, TruncationError

DEFAULT_B = 100
# relative outward rounding applied to floating-point upper bounds
_BOUND_SLACK = 1e-12


def _check_theta(theta):
    if not (np.isfinite(theta) and theta > 0):
        raise ParameterError(f"theta must be a positive finite real, got {theta!r}")


def edge_transform(x, theta):
    """Bounded monotone transform ``F(x) = arctan(x)**theta``.

    Parameters
    ----------
    x : int, float or array_like
        Nonnegative counts.
    theta : float
        Positive exponent.

    Returns
    -------
    float or ndarray
        Values in ``[0, (pi/2)**theta)``; exactly 0 at ``x = 0``.
    """
    _check_theta(theta)
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ParameterError("edge_transform is defined for nonnegative x only")
    out = np.zeros_like(arr)
    pos = arr > 0
    out[pos] = np.exp(theta * np.log(np.arctan(arr[pos])))
    if out.ndim == 0:
        return float(out)
    return out


def transform_upper(theta):
    """Supremum of the edge transform, ``(pi/2)**theta``."""
    _check_theta(theta)
    return (math.pi / 2.0) ** theta


def transform_table(theta, B=DEFAULT_B):
    """``F(0), F(1), ..., F(B)`` as a float array of length ``B + 1``."""
    return edge_transform(np.arange(B + 1), theta)


def pair_indices(P):
    """Row/column indices of the ``q = P(P-1)/2`` pairs ``j < l`` in storage order."""
    return np.triu_indices(P, k=1)


def n_pairs(P):
    return P * (P - 1) // 2


def nodes_from_pairs(q):
    """Invert ``q = P(P-1)/2``; raises ShapeError when ``q`` is not triangular."""
    P = int(round((1 + math.sqrt(1 + 8 * q)) / 2))
    if n_pairs(P) != q or P < 2:
        raise ShapeError(f"{q} is not a valid number of node pairs")
    return P


class EdgeWeights:
    """Symmetric edge weights stored as a length-``q`` vector over pairs ``j < l``.

    ``weight(j, l) == weight(l, j)``; self-edges are undefined.
    """

    def __init__(self, beta, P=None):
        beta = np.asarray(beta, dtype=float)
        if beta.ndim == 2:
            if beta.shape[0] != beta.shape[1]:
                raise ShapeError(f"edge-weight matrix must be square, got {beta.shape}")
            P = beta.shape[0]
            if not np.allclose(beta, beta.T, rtol=0, atol=0):
                raise ShapeError("edge-weight matrix must be symmetric")
            beta = beta[pair_indices(P)]
        elif beta.ndim == 1:
            q = beta.size
            inferred = nodes_from_pairs(q)
            if P is not None and P != inferred:
                raise ShapeError(f"{q} weights do not match P={P}")
            P = inferred
        else:
            raise ShapeError("beta must be a vector or a square matrix")
        self.P = int(P)
        self.vector = beta.copy()

    @classmethod
    def zeros(cls, P):
        return cls(np.zeros(n_pairs(P)), P)

    @property
    def q(self):
        return self.vector.size

    def matrix(self):
        """Dense symmetric ``P x P`` matrix with zero diagonal."""
        m = np.zeros((self.P, self.P))
        iu = pair_indices(self.P)
        m[iu] = self.vector
        m[(iu[1], iu[0])] = self.vector
        return m

    def _index(self, j, l):
        if j == l:
            raise ParameterError("self-edges are undefined")
        if not (0 <= j < self.P and 0 <= l < self.P):
            raise ParameterError(f"node index out of range for P={self.P}")
        j, l = min(j, l), max(j, l)
        return j * self.P - j * (j + 1) // 2 + (l - j - 1)

    def weight(self, j, l):
        return float(self.vector[self._index(j, l)])

    def with_weight(self, j, l, value):
        out = EdgeWeights(self.vector, self.P)
        out.vector[self._index(j, l)] = value
        return out

    def __repr__(self):
        return f"EdgeWeights(P={self.P}, vector={self.vector!r})"


def as_beta_matrix(beta, P=None):
    """Accept EdgeWeights, a length-q vector or a symmetric matrix."""
    if isinstance(beta, EdgeWeights):
        ew = beta
    else:
        ew = EdgeWeights(beta, P)
    if P is not None and ew.P != P:
        raise ShapeError(f"edge weights are for P={ew.P}, expected P={P}")
    return ew.matrix()


def as_count_matrix(data):
    """Validate and return an ``n x P`` int64 array of nonnegative counts."""
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ShapeError(f"count matrix must be 2-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ParameterError("counts must be integral")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ParameterError("counts must be nonnegative")
    return arr


def check_truncation(data, B):
    """Raise TruncationError naming the first cell with a count above ``B``."""
    data = np.asarray(data)
    over = np.argwhere(data > B)
    if over.size:
        r, c = (int(v) for v in over[0])
        raise TruncationError(
            f"count {int(data[r, c])} at observation {r}, node {c} (0-based) exceeds truncation level B={B}",
            row=r, column=c, value=int(data[r, c]),
        )


def log_unnormalized_joint(x, lambda_row, beta, theta):
    """Log of the unnormalized joint mass of one observation.

    ``sum_j [x_j log(lambda_j) - log(x_j!)] - sum_{j<l} beta_jl F(x_j) F(x_l)``
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lambda_row, dtype=float)
    if x.ndim != 1 or lam.shape != x.shape:
        raise ShapeError(f"x {x.shape} and lambda_row {lam.shape} must be equal-length vectors")
    if np.any(lam <= 0):
        raise ParameterError("lambda must be strictly positive")
    bm = as_beta_matrix(beta, x.size)
    f = edge_transform(x, theta)
    node = float(np.sum(x * np.log(lam) - gammaln(x + 1)))
    edge = 0.5 * float(f @ bm @ f)
    return node - edge


def conditional_log_pmf(j, x, lambda_tj, beta, theta, B=DEFAULT_B):
    """Log conditional distribution of ``X_j`` on ``0..B`` given the other coordinates.

    Returns a length ``B + 1`` vector whose exponentials sum to one.  The value
    of ``x[j]`` itself is ignored except for the truncation check.
    """
    x = np.asarray(x)
    P = x.size
    if not 0 <= j < P:
        raise ParameterError(f"node index {j} out of range for P={P}")
    if B < 1:
        raise ParameterError("truncation level B must be >= 1")
    if x[j] > B:
        raise TruncationError(
            f"count {int(x[j])} at node {j} exceeds truncation level B={B}",
            column=j, value=int(x[j]),
        )
    if not lambda_tj > 0:
        raise ParameterError("lambda must be strictly positive")
    bm = as_beta_matrix(beta, P)
    fx = edge_transform(x, theta)
    h = float(bm[j] @ fx)
    y = np.arange(B + 1)
    logits = y * math.log(lambda_tj) - gammaln(y + 1) - transform_table(theta, B) * h
    return logits - logsumexp(logits)


def truncation_error_bound(lambda_tj, beta_row, x_others, theta, B, coarse=False):
    """Upper bound on the normalizer mass dropped by truncating at ``B``.

    ``exp(lambda) * P(Y > B) * exp(-sum_{beta_l < 0} beta_l U F(x_l))`` with
    ``Y ~ Poisson(lambda)`` and ``U = (pi/2)**theta``.  With ``coarse=True``
    ``F(x_l)`` is replaced by ``U``.
    """
    _check_theta(theta)
    if B < 1:
        raise ParameterError("truncation level B must be >= 1")
    if not lambda_tj > 0:
        raise ParameterError("lambda must be strictly positive")
    beta_row = np.asarray(beta_row, dtype=float)
    x_others = np.asarray(x_others)
    if beta_row.shape != x_others.shape:
        raise ShapeError("beta_row and x_others must have the same length")
    U = transform_upper(theta)
    neg = beta_row < 0
    f = np.full(x_others.shape, U) if coarse else edge_transform(x_others, theta)
    log_edge = -float(np.sum(beta_row[neg] * U * f[neg]))
    log_tail = lambda_tj + poisson.logsf(B, lambda_tj)
    # equality holds when every F(x_l) * beta_l vanishes, so round outward
    return math.exp(log_tail + log_edge) * (1.0 + _BOUND_SLACK)


def normalizing_constant_bounds(alpha, beta, theta, log=False):
    """Lower and upper bounds on the global normalizing constant.

    ``exp(sum_j exp(alpha_j) -/+ U**2 sum_{j<l} |beta_jl|)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    bvec = beta.vector if isinstance(beta, EdgeWeights) else EdgeWeights(beta, alpha.size).vector
    U = transform_upper(theta)
    centre = float(np.sum(np.exp(alpha)))
    spread = U * U * float(np.sum(np.abs(bvec)))
    lo, hi = centre - spread, centre + spread
    if log:
        return lo, hi
    return math.exp(lo), math.exp(hi)


@dataclass
class ModelParams:
    """Random effects, edge weights, transform exponent and truncation level."""

    lam: np.ndarray
    beta: EdgeWeights
    theta: float
    B: int = DEFAULT_B

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.ndim != 2:
            raise ShapeError("lam must be an n x P matrix")
        if not np.all(np.isfinite(self.lam)) or np.any(self.lam <= 0):
            raise ParameterError("lam entries must be positive and finite")
        if not isinstance(self.beta, EdgeWeights):
            self.beta = EdgeWeights(self.beta, self.lam.shape[1])
        if self.beta.P != self.lam.shape[1]:
            raise ShapeError("beta and lam disagree on the number of nodes")
        _check_theta(self.theta)
        if int(self.B) < 1:
            raise ParameterError("truncation level B must be >= 1")
        self.B = int(self.B)


def conditional_log_pmf_matrix(data, params):
    """Log conditional tables for every observation and node, shape ``(n, P, B+1)``."""
    data = as_count_matrix(data)
    if data.shape != params.lam.shape:
        raise ShapeError(f"data {data.shape} and lam {params.lam.shape} differ")
    check_truncation(data, params.B)
    fx = edge_transform(data, params.theta)
    h = fx @ params.beta.matrix()
    y = np.arange(params.B + 1)
    ftab = transform_table(params.theta, params.B)
    logits = (
        y * np.log(params.lam)[:, :, None]
        - gammaln(y + 1)
        - ftab * h[:, :, None]
    )
    return logits - logsumexp(logits, axis=2, keepdims=True)


def log_pseudo_likelihood(data, params):
    """Sum over observations and nodes of each node's conditional log mass."""
    data = as_count_matrix(data)
    table = conditional_log_pmf_matrix(data, params)
    picked = np.take_along_axis(table, data[:, :, None], axis=2)
    return float(picked.sum())
