import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid
from scipy.special import expit

from dlsjm.clustering import match_clusters
from dlsjm.data import ItemResponseMatrix
from dlsjm.mixture_rasch import (
    EMConfig,
    MixtureRaschModel,
    class_posteriors,
    classify_map,
    em_fit,
    log_likelihood,
    pattern_probabilities,
)

FAST = EMConfig(n_starts=3, max_iter=500, rel_tol=1e-7)


def rasch_data(rng, n, easiness, mu=0.0, sigma=1.0):
    ability = rng.normal(mu, sigma, n)
    return (rng.random((n, easiness.size)) < expit(ability[:, None] + easiness[None, :])).astype(int)


def random_model(rng, G, p):
    beta = rng.normal(0, 1, (G, p))
    beta -= beta.mean(axis=1, keepdims=True)
    return MixtureRaschModel(rng.dirichlet(np.ones(G)), beta, rng.normal(0, 1, G), rng.uniform(0.3, 2.0, G))


def brute_marginal(model, pattern):
    """Integrate the ability out with a fine trapezoid rule instead of quadrature."""
    t = np.linspace(-10, 10, 8001)
    phi = np.exp(-0.5 * t ** 2) / math.sqrt(2 * math.pi)
    total = 0.0
    for g in range(model.n_classes):
        eta = model.mu[g] + model.sigma[g] * t[:, None] + model.beta[g][None, :]
        prob = np.prod(np.where(pattern[None, :] == 1, expit(eta), 1 - expit(eta)), axis=1)
        total += model.weights[g] * trapezoid(prob * phi, x=t)
    return total


class TestLikelihood:
    def test_patterns_sum_to_one(self, rng):
        for G, p in ((1, 5), (2, 8), (3, 12)):
            probs = pattern_probabilities(random_model(rng, G, p))
            assert abs(probs.sum() - 1.0) < 1e-8

    def test_quadrature_against_fine_grid(self, rng):
        model = random_model(rng, 2, 4)
        probs = pattern_probabilities(model)
        for code in (0, 5, 15):
            pattern = (code >> np.arange(4)) & 1
            assert probs[code] == pytest.approx(brute_marginal(model, pattern), rel=1e-6)

    def test_loglik_matches_patterns(self, rng):
        model = random_model(rng, 2, 5)
        x = (rng.random((30, 5)) < 0.5).astype(int)
        probs = pattern_probabilities(model)
        codes = x @ (1 << np.arange(5))
        assert log_likelihood(model, ItemResponseMatrix(x)) == pytest.approx(np.log(probs[codes]).sum(), rel=1e-12)

    def test_enumeration_limit(self, rng):
        with pytest.raises(ValueError):
            pattern_probabilities(random_model(rng, 1, 21))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_posteriors_normalized_and_permutation_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, 3, 6)
        x = ItemResponseMatrix((rng.random((15, 6)) < 0.5).astype(int))
        post = class_posteriors(model, x)
        assert np.all(np.abs(post.sum(axis=1) - 1.0) < 1e-12)
        order = rng.permutation(3)
        perm = model.permuted(order)
        assert log_likelihood(perm, x) == pytest.approx(log_likelihood(model, x), rel=1e-12)
        np.testing.assert_allclose(class_posteriors(perm, x), post[:, order], atol=1e-12)


class TestEM:
    def test_single_class_recovers_rasch(self):
        rng = np.random.default_rng(6)
        easiness = np.linspace(-2, 2, 20)
        x = ItemResponseMatrix(rasch_data(rng, 500, easiness))
        fit = em_fit(x, 1, FAST)
        est = fit.model.beta[0]
        assert np.corrcoef(est, easiness)[0, 1] > 0.95
        assert abs(est.sum()) < 1e-9
        assert fit.model.sigma[0] == pytest.approx(1.0, abs=0.25)
        assert fit.converged

    def test_monotone_trace(self, rng):
        x = ItemResponseMatrix(rasch_data(rng, 200, np.linspace(-1, 1, 8)))
        fit = em_fit(x, 2, FAST)
        tr = np.array(fit.trace)
        assert np.all(np.diff(tr) >= -1e-10 * np.abs(tr[:-1]))
        assert fit.loglik == max(fit.all_logliks)

    def test_two_classes_separated(self):
        rng = np.random.default_rng(7)
        e = np.linspace(-2, 2, 12)
        x = np.vstack([rasch_data(rng, 300, e), rasch_data(rng, 300, -e)])
        truth = np.repeat([0, 1], 300)
        fit = em_fit(ItemResponseMatrix(x), 2, FAST)
        assert match_clusters(classify_map(fit.model, ItemResponseMatrix(x)), truth).agreement > 0.9

    def test_deterministic(self, rng):
        x = ItemResponseMatrix(rasch_data(rng, 100, np.linspace(-1, 1, 6)))
        a, b = em_fit(x, 2, FAST, seed=3), em_fit(x, 2, FAST, seed=3)
        np.testing.assert_array_equal(a.model.beta, b.model.beta)

    def test_workers_match_serial(self, rng):
        x = ItemResponseMatrix(rasch_data(rng, 100, np.linspace(-1, 1, 6)))
        a = em_fit(x, 2, FAST, seed=3)
        b = em_fit(x, 2, EMConfig(n_starts=3, max_iter=500, rel_tol=1e-7, n_workers=2), seed=3)
        assert a.loglik == b.loglik

    def test_bad_G(self, rng):
        with pytest.raises(ValueError):
            em_fit(ItemResponseMatrix(np.eye(3, dtype=int)), 0)

    def test_to_dict(self, rng):
        d = random_model(rng, 2, 3).to_dict()
        assert d["n_classes"] == 2 and len(d["beta"]) == 2 and len(d["beta"][0]) == 3
