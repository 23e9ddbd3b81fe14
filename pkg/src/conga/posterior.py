"""Graph estimates from retained edge-weight draws.

Edges are declared present when the equal-tailed credible interval of the
weight excludes zero.  Intervals are percentile intervals using numpy's
default (linear, "type 7") quantile rule.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, ParameterError, ShapeError
from .model import n_pairs, nodes_from_pairs, pair_indices


@dataclass
class PosteriorSamples:
    """Retained draws of the ``q = P(P-1)/2`` edge weights, one row per iteration.

    ``diagnostics`` maps names to per-iteration scalar arrays aligned with the
    rows of ``beta``.
    """

    beta: np.ndarray
    P: int
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1, n_pairs(self.P))

    @classmethod
    def from_draws(cls, beta):
        beta = np.asarray(beta, dtype=float)
        if beta.ndim != 2:
            raise ShapeError("draws must be a 2-D array (iterations x pairs)")
        return cls(beta, nodes_from_pairs(beta.shape[1]))

    @property
    def n_draws(self):
        return self.beta.shape[0]

    @property
    def q(self):
        return self.beta.shape[1]


@dataclass
class GraphEstimate:
    adjacency: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    significance: np.ndarray
    level: float

    @property
    def P(self):
        return self.adjacency.shape[0]

    def edges(self):
        iu = pair_indices(self.P)
        return [(int(j), int(l)) for j, l in zip(*iu) if self.adjacency[j, l]]

    def degrees(self):
        return self.adjacency.sum(axis=1).astype(int)


@dataclass
class EdgeDifference:
    delta_ci_lower: np.ndarray
    delta_ci_upper: np.ndarray
    flagged: np.ndarray
    level: float
    n_draws: int

    @property
    def similarity(self):
        """Percentage of edges whose difference interval contains zero."""
        if self.flagged.size == 0:
            return 100.0
        return 100.0 * float(np.mean(~self.flagged))


def _check_level(level):
    if not 0 < level < 1:
        raise ParameterError("credible level must lie in (0, 1)")


def credible_intervals(draws, level=0.95):
    """Equal-tailed percentile intervals along axis 0."""
    _check_level(level)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [alpha, 1.0 - alpha], axis=0)
    return lo, hi


def significance_score(draws):
    """``|0.5 - P(beta > 0)| / 0.5`` estimated from draws (vectorised over columns)."""
    draws = np.asarray(draws, dtype=float)
    if draws.shape[0] == 0:
        raise InsufficientDataError("no draws")
    p_pos = np.mean(draws > 0, axis=0)
    return np.abs(0.5 - p_pos) / 0.5


def _to_matrix(vec, P, fill=0.0, dtype=float):
    out = np.full((P, P), fill, dtype=dtype)
    iu = pair_indices(P)
    out[iu] = vec
    out[(iu[1], iu[0])] = vec
    return out


def edge_decision(samples, level=0.95):
    """Graph estimate with per-edge intervals and significance scores."""
    if samples.n_draws < 2:
        raise InsufficientDataError("edge decisions need at least 2 retained draws")
    lo, hi = credible_intervals(samples.beta, level)
    present = (lo > 0) | (hi < 0)
    adj = _to_matrix(present, samples.P, False, bool)
    np.fill_diagonal(adj, False)
    return GraphEstimate(adj, lo, hi, significance_score(samples.beta), level)


def graph_difference(samples_a, samples_b, level=0.95):
    """Intervals for iteration-aligned differences of two independent chains."""
    if samples_a.q != samples_b.q:
        raise ShapeError("sample stores cover different numbers of edges")
    n = min(samples_a.n_draws, samples_b.n_draws)
    if samples_a.n_draws != samples_b.n_draws:
        warnings.warn(
            f"retained lengths differ ({samples_a.n_draws} vs {samples_b.n_draws}); "
            f"using the first {n} draws of each",
            stacklevel=2,
        )
    if n < 2:
        raise InsufficientDataError("need at least 2 aligned draws")
    delta = samples_a.beta[:n] - samples_b.beta[:n]
    lo, hi = credible_intervals(delta, level)
    flagged = (lo > 0) | (hi < 0)
    return EdgeDifference(lo, hi, flagged, level, n)


def degree_ranking(estimate, k):
    """Top-``k`` ``(node, degree)`` pairs, by degree descending then node ascending."""
    deg = estimate.degrees()
    k = max(0, min(int(k), deg.size))
    order = sorted(range(deg.size), key=lambda j: (-deg[j], j))
    return [(j, int(deg[j])) for j in order[:k]]
