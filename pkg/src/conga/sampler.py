"""Pseudo-posterior MCMC for the count MRF.

One sweep updates, in order:

1. every random effect ``lam[t, j]`` by Dirichlet-process reassignment
   (join another observation's value with Poisson weight, or take a fresh
   value with weight ``M_j`` times the Gamma-Poisson marginal);
2. every DP concentration ``M_j`` by the auxiliary-variable Gamma update;
3. every row of the edge weights by a Metropolis-Hastings move whose
   direction comes from the Gaussian-graphical-model conditional of that row.

Both MH blocks target the pseudo-likelihood built from the truncated node
conditionals.  Step sizes ``K1`` (per node) and ``K2`` (per row) adapt by
Robbins-Monro during burn-in only.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels as K
from .errors import ParameterError, ShapeError
from .model import (
    DEFAULT_B,
    as_count_matrix,
    check_truncation,
    edge_transform,
    n_pairs,
    pair_indices,
    transform_table,
    transform_upper,
)
from .posterior import PosteriorSamples

CHECKPOINT_FORMAT = "conga-checkpoint"
CHECKPOINT_VERSION = 1
# mixed into the seed so chain streams differ from data-generation streams
_STREAM_TAG = 0xC06A

_K1_BOUNDS = (1e-3, 0.99)
_K2_BOUNDS = (1e-4, 1e3)
_EIG_FLOOR = 1e-8


@dataclass(frozen=True)
class PriorConfig:
    """Prior constants.

    ``nu3`` is the variance of the iid normal prior on each edge weight,
    ``gamma_w`` the regulariser of the row proposal, ``Gamma(a, b)`` the DP
    base measure (shape/rate) and ``Gamma(c, d)`` the prior on each ``M_j``.
    """

    nu3: float = 100.0
    gamma_w: float = 5.0
    a: float = 1.0
    b: float = 1.0
    c: float = 10.0
    d: float = 10.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"prior constant {name} must be positive, got {value!r}")


@dataclass(frozen=True)
class SamplerConfig:
    n_burn: int = 5000
    n_keep: int = 5000
    B: int = DEFAULT_B
    target_accept: float = 0.3
    K1_init: float = 0.5
    K2_init: float = 0.1
    adapt_decay: float = 0.6
    random_scan: bool = False
    use_likelihood: bool = True
    pl_weight: float = 0.5

    def __post_init__(self):
        if self.n_burn < 0 or self.n_keep < 0:
            raise ParameterError("n_burn and n_keep must be nonnegative")
        if self.B < 1:
            raise ParameterError("B must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ParameterError("target_accept must lie in (0, 1)")
        if not 0 < self.K1_init < 1:
            raise ParameterError("K1_init must lie in (0, 1)")
        if not self.K2_init > 0:
            raise ParameterError("K2_init must be positive")
        if not 0 < self.pl_weight <= 1:
            raise ParameterError("pl_weight must lie in (0, 1]")


@dataclass
class SamplerState:
    lam: np.ndarray
    beta: np.ndarray
    M: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    iteration: int = 0
    counters: dict = field(default_factory=dict)

    def cluster_labels(self, j):
        """Cluster index of every observation at node ``j`` (shared values = same cluster)."""
        _, labels = np.unique(self.lam[:, j], return_inverse=True)
        return labels

    def n_clusters(self):
        return np.array([np.unique(self.lam[:, j]).size for j in range(self.lam.shape[1])])

    def beta_vector(self):
        return self.beta[pair_indices(self.beta.shape[0])].copy()

    def copy(self):
        return SamplerState(
            self.lam.copy(), self.beta.copy(), self.M.copy(), self.K1.copy(),
            self.K2.copy(), self.iteration,
            {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.counters.items()},
        )


@dataclass
class RowProposal:
    """Gaussian conditional of row ``l`` under the proposal model.

    ``mean = -C s[-l, l]`` and ``C = ((s_ll + gamma) Omega_{-l,-l}^{-1} + I/nu3)^{-1}``,
    stored through its eigendecomposition.
    """

    l: int
    others: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    repaired: bool

    def draw(self, xi):
        """Gibbs candidate ``mean + C^{1/2} xi`` for a standard normal vector ``xi``."""
        return self.mean + self.centred(xi)

    def centred(self, xi):
        return self.eigvecs @ (np.sqrt(self.eigvals) * xi)


@dataclass
class ChainResult:
    samples: PosteriorSamples
    state: SamplerState
    summary: dict


def standardized_gram(fx):
    """Centre and scale columns of ``F(X)``; returns ``(Z^T Z, inverse-correlation diagonal)``.

    Constant columns are left at zero and get a unit diagonal entry.
    """
    centred = fx - fx.mean(axis=0)
    n = fx.shape[0]
    sd = centred.std(axis=0, ddof=1) if n > 1 else np.zeros(fx.shape[1])
    safe = np.where(sd > 0, sd, 1.0)
    z = np.where(sd > 0, centred / safe, 0.0)
    gram = z.T @ z
    corr = gram / max(n - 1, 1)
    np.fill_diagonal(corr, 1.0)
    diag = np.diag(np.linalg.pinv(corr, hermitian=True))
    diag = np.where(np.isfinite(diag) & (diag > 0), diag, 1.0)
    return gram, diag


def gibbs_row_moments(l, omega, s, gamma_w, nu3):
    """Mean and covariance of the Gaussian-model conditional of ``Omega[l, -l]``.

    ``Omega_{-l,-l}`` is diagonalised; eigenvalues that are not safely positive
    are replaced by ``max(|w|, 1e-8)`` and ``repaired`` is set.
    """
    P = omega.shape[0]
    others = np.r_[0:l, l + 1:P]
    sub = omega[np.ix_(others, others)]
    w, V = np.linalg.eigh(sub)
    repaired = bool(np.any(w <= _EIG_FLOOR))
    w = np.maximum(np.abs(w), _EIG_FLOOR)
    c_eig = 1.0 / ((s[l, l] + gamma_w) / w + 1.0 / nu3)
    cov = (V * c_eig) @ V.T
    mean = -cov @ s[others, l]
    return RowProposal(l, others, mean, cov, V, c_eig, repaired)


def concentration_params(M, n_unique, n, c, d, delta):
    """Shape and rate of the Gamma full conditional of ``M_j`` given the auxiliary ``delta``."""
    del M, n
    return c + n_unique, d - math.log(delta)


def update_concentration(M, n_unique, n, c, d, rng):
    """Draw ``delta ~ Beta(M, n)`` then ``M ~ Gamma(c + U, d - log delta)``."""
    delta = rng.beta(M, n)
    shape, rate = concentration_params(M, n_unique, n, c, d, delta)
    return rng.gamma(shape, 1.0 / rate)


def nb_marginal(x, a, b):
    """Gamma(a, b)-Poisson marginal mass at ``x`` (negative binomial)."""
    return math.exp(K.nb_log_marginal(int(x), a, b, math.lgamma(x + 1.0)))


def dp_assignment_probabilities(i, x_col, lam_col, M, a, b, use_likelihood=True):
    """Normalised reassignment probabilities for observation ``i`` at one node.

    Entry ``k != i`` is the probability of copying ``lam_col[k]``; entry ``i``
    is the probability of the fresh-draw branch.
    """
    x_col = np.asarray(x_col)
    lam_col = np.asarray(lam_col, dtype=float)
    xi = int(x_col[i])
    if use_likelihood:
        logw = xi * np.log(lam_col) - lam_col - math.lgamma(xi + 1.0)
        logw[i] = math.log(M) + K.nb_log_marginal(xi, a, b, math.lgamma(xi + 1.0))
    else:
        logw = np.zeros(lam_col.size)
        logw[i] = math.log(M)
    w = np.exp(logw - logw.max())
    return w / w.sum()


class CongaSampler:
    """Single-chain sampler.  Deterministic given ``seed``."""

    def __init__(self, data, theta, priors=None, config=None, seed=0):
        self.data = as_count_matrix(data)
        n, P = self.data.shape
        if n < 1 or P < 2:
            raise ShapeError("need at least one observation and two nodes")
        self.priors = priors or PriorConfig()
        self.config = config or SamplerConfig()
        if not (np.isfinite(theta) and theta > 0):
            raise ParameterError("theta must be positive")
        self.theta = float(theta)
        self.seed = int(seed)
        B = self.config.B
        check_truncation(self.data, B)

        self.ftab = transform_table(self.theta, B)
        self.lgam = gammaln(np.arange(B + 1) + 1.0)
        self.upper = transform_upper(self.theta)
        self.fx = np.ascontiguousarray(edge_transform(self.data, self.theta))
        self.gram, self.omega_diag = standardized_gram(self.fx)
        self.rng = np.random.default_rng([_STREAM_TAG, self.seed])
        # shape/rate of the fresh-value candidate distribution
        if self.config.use_likelihood:
            self._cand_shape = (self.priors.a + self.data.T).astype(float)
            self._cand_rate = self.priors.b + 1.0
        else:
            self._cand_shape = np.full((P, n), self.priors.a)
            self._cand_rate = self.priors.b
        self._buf = np.empty(n)
        self._new_h = np.empty((n, P))
        self._new_logz = np.empty((n, P))
        self.state = self.initial_state()
        self._refresh_cache()
        self.retained = []
        self.diagnostics = {name: [] for name in _DIAG_NAMES}

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def P(self):
        return self.data.shape[1]

    def initial_state(self):
        P = self.P
        pr, cf = self.priors, self.config
        counters = {
            "lambda_attempts": np.zeros(P, dtype=np.int64),
            "lambda_accepts": np.zeros(P, dtype=np.int64),
            "lambda_exact": np.zeros(P, dtype=np.int64),
            "beta_attempts": np.zeros(P, dtype=np.int64),
            "beta_accepts": np.zeros(P, dtype=np.int64),
            "repairs": 0,
            "nonfinite": 0,
        }
        return SamplerState(
            lam=self.data.astype(float) + 0.5,
            beta=np.zeros((P, P)),
            M=np.full(P, pr.c / pr.d),
            K1=np.full(P, cf.K1_init),
            K2=np.full(P, cf.K2_init),
            counters=counters,
        )

    def _refresh_cache(self):
        st = self.state
        self.loglam = np.log(st.lam)
        self.H = K.compute_fields(self.fx, st.beta)
        self.logz = K.compute_log_normalizers(st.lam, self.H, self.ftab, self.lgam,
                                              self.upper, self.config.B)

    def omega(self):
        """Proposal precision: off-diagonals mirror beta, diagonal fixed from the data."""
        om = self.state.beta.copy()
        np.fill_diagonal(om, self.omega_diag)
        return om

    def _gain(self):
        return (1.0 + self.state.iteration) ** (-self.config.adapt_decay)

    def _adapting(self):
        return self.state.iteration < self.config.n_burn

    # -- blocks -----------------------------------------------------------

    def update_lambda(self):
        st, pr, cf = self.state, self.priors, self.config
        n, P = self.n, self.P
        rng = self.rng
        u_choice = rng.random((P, n))
        cand = rng.standard_gamma(self._cand_shape) / self._cand_rate
        np.maximum(cand, np.finfo(float).tiny, out=cand)
        u_acc = rng.random((P, n))
        adapt = self._adapting()
        g = self._gain()
        for j in range(P):
            att, acc, exact = K.dp_sweep_column(
                self.data[:, j], st.lam[:, j], self.loglam[:, j], self.H[:, j],
                self.logz[:, j], self.ftab, self.lgam, self.upper, cf.B,
                float(st.M[j]), float(st.K1[j]), pr.a, pr.b, cf.use_likelihood,
                u_choice[j], cand[j], u_acc[j], self._buf,
            )
            st.counters["lambda_attempts"][j] += att
            st.counters["lambda_accepts"][j] += acc
            st.counters["lambda_exact"][j] += exact
            if adapt and att > 0:
                k1 = math.exp(math.log(st.K1[j]) + g * (acc / att - cf.target_accept))
                st.K1[j] = min(max(k1, _K1_BOUNDS[0]), _K1_BOUNDS[1])

    def update_concentration(self):
        st, pr = self.state, self.priors
        unique = st.n_clusters()
        delta = self.rng.beta(st.M, self.n)
        delta = np.maximum(delta, np.finfo(float).tiny)
        shape = pr.c + unique
        rate = pr.d - np.log(delta)
        st.M = self.rng.gamma(shape, 1.0 / rate)
        st.M = np.maximum(st.M, np.finfo(float).tiny)

    def row_proposal(self, l):
        return gibbs_row_moments(l, self.omega(), self.gram, self.priors.gamma_w, self.priors.nu3)

    def propose_row(self, l, xi, proposal=None):
        """Candidate row: current + K2 * (centred Gibbs draw) / sqrt(trace C)."""
        prop = proposal or self.row_proposal(l)
        step = prop.centred(xi)
        scale = math.sqrt(float(prop.eigvals.sum()))
        current = self.state.beta[l, prop.others]
        return current + self.state.K2[l] * step / scale, prop

    def row_log_ratio(self, l, candidate_others):
        """Log MH ratio of replacing row ``l`` (entries ``k != l``) by the candidate.

        The proposal is symmetric, so only the pseudo-likelihood and prior terms appear.
        The pseudo-likelihood change is scaled by ``config.pl_weight``: every
        edge weight enters two node conditionals, and 0.5 undoes that double
        counting of curvature.
        Fills the candidate fields/normalizer buffers as a side effect.
        """
        st, pr, cf = self.state, self.priors, self.config
        others = np.r_[0:l, l + 1:self.P]
        new_row = np.zeros(self.P)
        new_row[others] = candidate_others
        old = st.beta[l, others]
        log_prior = -(np.sum(candidate_others ** 2) - np.sum(old ** 2)) / (2.0 * pr.nu3)
        if not cf.use_likelihood:
            return float(log_prior), new_row
        dpl = K.beta_row_delta(l, new_row, st.beta, self.fx, self.loglam, st.lam,
                               self.H, self.logz, self.ftab, self.lgam, self.upper,
                               cf.B, self._new_h, self._new_logz)
        return float(self.config.pl_weight * dpl + log_prior), new_row

    def update_beta(self):
        st, cf = self.state, self.config
        P = self.P
        order = self.rng.permutation(P) if cf.random_scan else range(P)
        adapt = self._adapting()
        g = self._gain()
        accepted = 0
        for l in order:
            xi = self.rng.standard_normal(P - 1)
            u = self.rng.random()
            cand, prop = self.propose_row(l, xi)
            if prop.repaired:
                st.counters["repairs"] += 1
            log_r, new_row = self.row_log_ratio(l, cand)
            st.counters["beta_attempts"][l] += 1
            ok = np.isfinite(log_r) and math.log(u) < log_r
            if not np.isfinite(log_r):
                st.counters["nonfinite"] += 1
            if ok:
                st.beta[l, :] = new_row
                st.beta[:, l] = new_row
                st.beta[l, l] = 0.0
                if cf.use_likelihood:
                    self.H[:] = self._new_h
                    self.logz[:] = self._new_logz
                st.counters["beta_accepts"][l] += 1
                accepted += 1
            if adapt:
                k2 = math.exp(math.log(st.K2[l]) + g * (float(ok) - cf.target_accept))
                st.K2[l] = min(max(k2, _K2_BOUNDS[0]), _K2_BOUNDS[1])
        return accepted / P

    def step(self):
        """One full sweep.  Returns the fraction of accepted row moves."""
        la0 = int(self.state.counters["lambda_attempts"].sum())
        lc0 = int(self.state.counters["lambda_accepts"].sum())
        self.update_lambda()
        self.update_concentration()
        beta_rate = self.update_beta()
        st = self.state
        it = st.iteration
        st.iteration += 1
        if it >= self.config.n_burn:
            self.retained.append(st.beta_vector())
            la = int(st.counters["lambda_attempts"].sum()) - la0
            lc = int(st.counters["lambda_accepts"].sum()) - lc0
            self.diagnostics["beta_accept"].append(beta_rate)
            self.diagnostics["lambda_accept"].append(lc / la if la else float("nan"))
            self.diagnostics["mean_clusters"].append(float(st.n_clusters().mean()))
            self.diagnostics["mean_M"].append(float(st.M.mean()))
        return beta_rate

    def run(self, checkpoint_path=None, checkpoint_every=0, progress=None):
        total = self.config.n_burn + self.config.n_keep
        while self.state.iteration < total:
            self.step()
            if checkpoint_path and checkpoint_every and self.state.iteration % checkpoint_every == 0:
                self.save_checkpoint(checkpoint_path)
            if progress is not None:
                progress(self.state.iteration, total)
        return self.result()

    def result(self):
        q = n_pairs(self.P)
        beta = np.array(self.retained).reshape(-1, q)
        diag = {k: np.asarray(v, dtype=float) for k, v in self.diagnostics.items()}
        return ChainResult(PosteriorSamples(beta, self.P, diag), self.state, self.summary())

    def summary(self):
        c = self.state.counters

        def rate(acc, att):
            att = int(np.sum(att))
            return float(np.sum(acc)) / att if att else None

        return {
            "iterations": int(self.state.iteration),
            "lambda_accept_rate": rate(c["lambda_accepts"], c["lambda_attempts"]),
            "beta_accept_rate": rate(c["beta_accepts"], c["beta_attempts"]),
            "lambda_exact_draws": int(np.sum(c["lambda_exact"])),
            "repairs": int(c["repairs"]),
            "nonfinite": int(c["nonfinite"]),
            "K1": [float(v) for v in self.state.K1],
            "K2": [float(v) for v in self.state.K2],
            "mean_clusters": float(self.state.n_clusters().mean()),
        }

    # -- checkpoints ------------------------------------------------------

    def data_digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.data).tobytes()
                              + str(self.data.shape).encode()).hexdigest()

    def checkpoint_dict(self):
        st = self.state
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "theta": self.theta,
            "priors": asdict(self.priors),
            "config": asdict(self.config),
            "shape": list(self.data.shape),
            "data_sha256": self.data_digest(),
            "state": {
                "iteration": st.iteration,
                "lam": st.lam.tolist(),
                "beta": st.beta.tolist(),
                "M": st.M.tolist(),
                "K1": st.K1.tolist(),
                "K2": st.K2.tolist(),
                "counters": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                             for k, v in st.counters.items()},
            },
            "cache": {"H": self.H.tolist(), "logz": self.logz.tolist()},
            "rng": self.rng.bit_generator.state,
            "retained": [r.tolist() for r in self.retained],
            "diagnostics": {k: list(v) for k, v in self.diagnostics.items()},
        }

    def save_checkpoint(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(self.checkpoint_dict(), fh)
        os.replace(tmp, path)

    @classmethod
    def from_checkpoint(cls, path, data):
        with open(path) as fh:
            ck = json.load(fh)
        if ck.get("format") != CHECKPOINT_FORMAT or ck.get("version") != CHECKPOINT_VERSION:
            raise ParameterError(f"{path} is not a version-{CHECKPOINT_VERSION} checkpoint")
        sampler = cls(data, ck["theta"], PriorConfig(**ck["priors"]),
                      SamplerConfig(**ck["config"]), ck["seed"])
        if sampler.data_digest() != ck["data_sha256"]:
            raise ParameterError("checkpoint was written for different data")
        s = ck["state"]
        counters = {k: (np.asarray(v, dtype=np.int64) if isinstance(v, list) else v)
                    for k, v in s["counters"].items()}
        sampler.state = SamplerState(
            np.asarray(s["lam"]), np.asarray(s["beta"]), np.asarray(s["M"]),
            np.asarray(s["K1"]), np.asarray(s["K2"]), int(s["iteration"]), counters,
        )
        sampler.loglam = np.log(sampler.state.lam)
        sampler.H = np.asarray(ck["cache"]["H"])
        sampler.logz = np.asarray(ck["cache"]["logz"])
        sampler.rng.bit_generator.state = ck["rng"]
        sampler.retained = [np.asarray(r) for r in ck["retained"]]
        sampler.diagnostics = {k: list(v) for k, v in ck["diagnostics"].items()}
        return sampler


_DIAG_NAMES = ("beta_accept", "lambda_accept", "mean_clusters", "mean_M")


def run_chain(data, priors=None, theta=1.0, n_burn=5000, n_keep=5000, seed=0,
              B=DEFAULT_B, config=None, checkpoint_path=None, checkpoint_every=0,
              progress=None):
    """Run one chain and return a :class:`ChainResult`.

    ``config`` overrides ``n_burn``, ``n_keep`` and ``B`` when given.
    """
    if config is None:
        config = SamplerConfig(n_burn=n_burn, n_keep=n_keep, B=B)
    sampler = CongaSampler(data, theta, priors, config, seed)
    return sampler.run(checkpoint_path, checkpoint_every, progress)


def resume_chain(checkpoint_path, data, checkpoint_every=0, progress=None):
    sampler = CongaSampler.from_checkpoint(checkpoint_path, data)
    return sampler.run(checkpoint_path, checkpoint_every, progress)
