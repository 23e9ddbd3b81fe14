import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln, logsumexp
from scipy.stats import gamma as gamma_dist

from conga import _kernels as K
from conga.errors import ParameterError, TruncationError
from conga.model import EdgeWeights, ModelParams, conditional_log_pmf, log_pseudo_likelihood, transform_table
from conga.sampler import (
    CongaSampler,
    PriorConfig,
    SamplerConfig,
    concentration_params,
    dp_assignment_probabilities,
    gibbs_row_moments,
    nb_marginal,
    resume_chain,
    run_chain,
)


def small_data(seed=0, n=12, P=3, lam=1.5):
    return np.random.default_rng(seed).poisson(lam, (n, P))


class TestLogNormalizer:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-3, 60.0), st.floats(-30.0, 30.0), st.floats(0.1, 6.0))
    def test_matches_full_sum(self, lam, h, theta):
        B = 100
        ftab = transform_table(theta, B)
        lgam = gammaln(np.arange(B + 1) + 1.0)
        y = np.arange(B + 1)
        full = logsumexp(y * math.log(lam) - lgam - ftab * h)
        got = K.log_normalizer(math.log(lam), lam, h, ftab, lgam, (math.pi / 2) ** theta, B)
        assert got == pytest.approx(full, abs=1e-13 * max(1.0, abs(full)))


class TestDPAssignment:
    def test_single_observation_goes_fresh(self):
        p = dp_assignment_probabilities(0, [3], [2.0], 1.0, 1.0, 1.0)
        assert p.tolist() == [1.0]

    def test_poisson_join_ratio(self):
        p = dp_assignment_probabilities(0, [0, 0, 0], [5.0, 1.0, 100.0], 1.0, 1.0, 1.0)
        assert math.log(p[1] / p[2]) == pytest.approx(99.0, abs=1e-9)

    def test_negative_binomial_marginal(self):
        assert nb_marginal(2, 1.0, 1.0) == pytest.approx(1 / 8, abs=1e-15)

    def test_marginal_integrates_poisson_against_gamma(self):
        from scipy.integrate import quad
        from scipy.stats import poisson

        a, b, x = 2.5, 0.7, 4
        val, _ = quad(lambda l: poisson.pmf(x, l) * gamma_dist.pdf(l, a, scale=1 / b), 0, np.inf)
        assert nb_marginal(x, a, b) == pytest.approx(val, rel=1e-8)

    def test_fresh_weight_scales_with_M(self):
        lam = [1.0, 1.0, 1.0]
        p1 = dp_assignment_probabilities(0, [1, 1, 1], lam, 1.0, 1.0, 1.0)
        p2 = dp_assignment_probabilities(0, [1, 1, 1], lam, 2.0, 1.0, 1.0)
        assert p2[0] / p2[1] == pytest.approx(2 * p1[0] / p1[1])


class TestFreshDraw:
    B = 100

    def _tables(self, theta):
        return (transform_table(theta, self.B), gammaln(np.arange(self.B + 1) + 1.0),
                (math.pi / 2) ** theta)

    def test_conjugate_limit_has_unit_ratio(self):
        ftab, lgam, U = self._tables(1.0)
        a, b, x = 1.0, 1.0, 3
        for cand in (0.3, 2.0, 7.5):
            lam_old = 1.7
            K1 = 1.0 - 1e-12
            lam_new = lam_old + K1 * (cand - lam_old)
            lz = K.log_normalizer(math.log(lam_old), lam_old, 0.0, ftab, lgam, U, self.B)
            r, _ = K.fresh_log_ratio(x, lam_old, lam_new, cand, K1, a, b, a + x, b + 1.0,
                                     0.0, lz, ftab, lgam, U, self.B, True)
            assert r == pytest.approx(0.0, abs=1e-6)

    def test_identity_move(self):
        ftab, lgam, U = self._tables(1.0)
        lz = K.log_normalizer(math.log(2.0), 2.0, 0.4, ftab, lgam, U, self.B)
        r, _ = K.fresh_log_ratio(1, 2.0, 2.0, 2.0, 0.5, 1.0, 1.0, 2.0, 2.0,
                                 0.4, lz, ftab, lgam, U, self.B, True)
        assert r == pytest.approx(0.0, abs=1e-12)

    def test_matches_conditional_oracle(self):
        theta, beta12 = 1.0, 2.0
        ftab, lgam, U = self._tables(theta)
        x = np.array([2, 1])
        a, b, K1 = 1.0, 1.0, 0.4
        lam_old, cand = 1.3, 3.1
        lam_new = lam_old + K1 * (cand - lam_old)
        h = beta12 * ftab[x[1]]
        lz = K.log_normalizer(math.log(lam_old), lam_old, h, ftab, lgam, U, self.B)
        got, _ = K.fresh_log_ratio(int(x[0]), lam_old, lam_new, cand, K1, a, b, a + x[0], b + 1.0,
                                   h, lz, ftab, lgam, U, self.B, True)
        lik = (conditional_log_pmf(0, x, lam_new, [beta12], theta, self.B)[x[0]]
               - conditional_log_pmf(0, x, lam_old, [beta12], theta, self.B)[x[0]])
        prior = gamma_dist.logpdf(lam_new, a, scale=1 / b) - gamma_dist.logpdf(lam_old, a, scale=1 / b)
        z_rev = (lam_old - (1 - K1) * lam_new) / K1
        g = gamma_dist(a + x[0], scale=1 / (b + 1))
        prop = g.logpdf(z_rev) - g.logpdf(cand)
        assert got == pytest.approx(lik + prior + prop, abs=1e-10)

    def test_impossible_reverse_rejected(self):
        ftab, lgam, U = self._tables(1.0)
        # z_rev = lam0 - (1 - K1)(cand - lam0) < 0 for a far candidate
        r, _ = K.fresh_log_ratio(0, 0.1, 0.59, 5.0, 0.1, 1.0, 1.0, 1.0, 2.0,
                                 0.0, 0.0, ftab, lgam, U, self.B, True)
        assert r == -np.inf


class TestConcentration:
    def test_delta_one_keeps_rate(self):
        assert concentration_params(1.0, 3, 10, 10.0, 10.0, 1.0) == (13.0, 10.0)

    def test_all_singletons(self):
        shape, _ = concentration_params(1.0, 25, 25, 10.0, 10.0, 0.5)
        assert shape == 35.0


class TestRowProposal:
    def test_mean_matches_dense_solve(self):
        rng = np.random.default_rng(0)
        P = 3
        A = rng.normal(size=(P, P))
        omega = A @ A.T + P * np.eye(P)
        z = rng.normal(size=(20, P))
        s = z.T @ z
        gamma_w, nu3 = 5.0, 100.0
        for l in range(P):
            prop = gibbs_row_moments(l, omega, s, gamma_w, nu3)
            o = [k for k in range(P) if k != l]
            dense = (s[l, l] + gamma_w) * np.linalg.inv(omega[np.ix_(o, o)]) + np.eye(P - 1) / nu3
            mean = -np.linalg.solve(dense, s[o, l])
            np.testing.assert_allclose(prop.mean, mean, atol=1e-10)
            np.testing.assert_allclose(prop.cov, np.linalg.inv(dense), atol=1e-10)
            assert not prop.repaired

    def test_singular_block_is_repaired(self):
        omega = np.array([[1.0, 0, 0], [0, 1.0, 1.0], [0, 1.0, 1.0]])
        prop = gibbs_row_moments(0, omega, np.eye(3), 5.0, 100.0)
        assert prop.repaired
        assert np.all(np.isfinite(prop.cov))


class TestRowRatio:
    @pytest.mark.parametrize("weight", [1.0, 0.5])
    def test_matches_pseudo_likelihood_oracle(self, weight):
        data = np.array([[0, 1], [2, 0], [1, 3]])
        cfg = SamplerConfig(n_burn=0, n_keep=0, pl_weight=weight)
        smp = CongaSampler(data, 1.0, config=cfg, seed=0)
        smp.state.lam[:] = [[0.7, 1.2], [2.1, 0.4], [1.0, 2.5]]
        smp.state.beta[:] = [[0, 0.3], [0.3, 0]]
        smp._refresh_cache()
        cand = np.array([-0.8])
        got, _ = smp.row_log_ratio(0, cand)

        def pl(b):
            return log_pseudo_likelihood(data, ModelParams(smp.state.lam, EdgeWeights([b]), 1.0))

        prior = -(0.8 ** 2 - 0.3 ** 2) / (2 * 100.0)
        assert got == pytest.approx(weight * (pl(-0.8) - pl(0.3)) + prior, abs=1e-10)

    def test_three_nodes_oracle(self):
        data = small_data(4, n=8, P=3)
        smp = CongaSampler(data, 2.0, config=SamplerConfig(n_burn=0, n_keep=0, pl_weight=1.0), seed=0)
        smp.state.beta[:] = EdgeWeights([0.2, -0.4, 0.1]).matrix()
        smp._refresh_cache()
        cand = np.array([0.5, 0.3])  # row 1, entries (1,0) and (1,2)
        got, _ = smp.row_log_ratio(1, cand)
        new = EdgeWeights([0.5, -0.4, 0.3])
        old = EdgeWeights([0.2, -0.4, 0.1])
        lam = smp.state.lam
        dpl = (log_pseudo_likelihood(data, ModelParams(lam, new, 2.0))
               - log_pseudo_likelihood(data, ModelParams(lam, old, 2.0)))
        prior = -(0.25 + 0.09 - 0.04 - 0.01) / 200.0
        assert got == pytest.approx(dpl + prior, abs=1e-10)

    def test_identity_candidate(self):
        smp = CongaSampler(small_data(), 1.0, config=SamplerConfig(n_burn=0, n_keep=0), seed=0)
        got, _ = smp.row_log_ratio(0, np.zeros(2))
        assert got == 0.0

    def test_accepted_move_keeps_cache_consistent(self):
        smp = CongaSampler(small_data(2), 1.5, config=SamplerConfig(n_burn=30, n_keep=0), seed=1)
        for _ in range(30):
            smp.step()
        H, logz = smp.H.copy(), smp.logz.copy()
        smp._refresh_cache()
        np.testing.assert_allclose(H, smp.H, atol=1e-12)
        np.testing.assert_allclose(logz, smp.logz, atol=1e-10)


class TestChain:
    def test_truncation_before_sampling(self):
        data = small_data()
        data[3, 1] = 150
        with pytest.raises(TruncationError):
            run_chain(data, theta=1.0, n_burn=1, n_keep=1)

    def test_bad_config(self):
        with pytest.raises(ParameterError):
            SamplerConfig(K1_init=1.5)
        with pytest.raises(ParameterError):
            PriorConfig(nu3=0.0)

    def test_no_retained_draws(self):
        res = run_chain(small_data(), theta=1.0, n_burn=5, n_keep=0)
        assert res.samples.n_draws == 0
        assert res.state.iteration == 5

    def test_deterministic(self):
        a = run_chain(small_data(), theta=1.3, n_burn=20, n_keep=20, seed=7)
        b = run_chain(small_data(), theta=1.3, n_burn=20, n_keep=20, seed=7)
        assert np.array_equal(a.samples.beta, b.samples.beta)
        c = run_chain(small_data(), theta=1.3, n_burn=20, n_keep=20, seed=8)
        assert not np.array_equal(a.samples.beta, c.samples.beta)

    def test_adaptation_frozen_after_burn_in(self):
        smp = CongaSampler(small_data(), 1.0, config=SamplerConfig(n_burn=15, n_keep=15), seed=3)
        for _ in range(15):
            smp.step()
        k1, k2 = smp.state.K1.copy(), smp.state.K2.copy()
        for _ in range(15):
            smp.step()
        assert np.array_equal(k1, smp.state.K1)
        assert np.array_equal(k2, smp.state.K2)

    def test_state_validity(self):
        smp = CongaSampler(small_data(1, n=15), 1.0, config=SamplerConfig(n_burn=25, n_keep=0), seed=2)
        diag = smp.omega().diagonal().copy()
        for _ in range(25):
            smp.step()
            st_ = smp.state
            assert np.all(st_.lam > 0)
            assert np.array_equal(st_.beta, st_.beta.T)
            assert np.array_equal(smp.omega().diagonal(), diag)
            for j in range(smp.P):
                labels = st_.cluster_labels(j)
                assert labels.size == smp.n
                assert set(labels.tolist()) == set(range(labels.max() + 1))

    def test_checkpoint_resume_is_identical(self, tmp_path):
        data = small_data(5)
        cfg = SamplerConfig(n_burn=10, n_keep=10)
        full = CongaSampler(data, 1.2, config=cfg, seed=4).run()
        path = tmp_path / "ck.json"
        part = CongaSampler(data, 1.2, config=cfg, seed=4)
        for _ in range(13):
            part.step()
        part.save_checkpoint(path)
        resumed = resume_chain(path, data)
        assert np.array_equal(full.samples.beta, resumed.samples.beta)
        assert np.array_equal(full.state.lam, resumed.state.lam)

    def test_checkpoint_rejects_other_data(self, tmp_path):
        smp = CongaSampler(small_data(5), 1.0, config=SamplerConfig(n_burn=2, n_keep=2), seed=0)
        smp.save_checkpoint(tmp_path / "ck.json")
        with pytest.raises(ParameterError):
            CongaSampler.from_checkpoint(tmp_path / "ck.json", small_data(6))

    def test_prior_only_short_run(self):
        cfg = SamplerConfig(n_burn=500, n_keep=4000, use_likelihood=False)
        res = run_chain(small_data(n=10, P=2), theta=1.0, config=cfg, seed=0)
        assert res.samples.beta.var() == pytest.approx(100.0, rel=0.35)
        assert res.samples.diagnostics["mean_M"].mean() == pytest.approx(1.0, rel=0.1)
