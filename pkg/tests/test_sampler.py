import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import dlsjm._kernels as K
import oracles
from dlsjm.data import DegenerateItemError, ItemResponseMatrix
from dlsjm.likelihood import ModelState, PriorConfig, log_posterior, logpost_z
from dlsjm.sampler import (
    AcceptanceLedger,
    ChainEngine,
    SamplerConfig,
    _pair_sums,
    adapt_proposals,
    initialize_state,
    run_chain,
    sweep,
    z_buckets,
)


@pytest.fixture(scope="module")
def small_data():
    rng = np.random.default_rng(5)
    x, *_ = oracles.random_instance(rng, 25, 6)
    return ItemResponseMatrix(x)


class TestConfig:
    def test_default_schedule_sample_count(self):
        assert SamplerConfig().n_samples == 5000

    def test_short_schedule(self):
        assert SamplerConfig(n_iterations=1100, burn_in=100, thin=10).n_samples == 100

    @pytest.mark.parametrize("kw", [dict(burn_in=10, n_iterations=10), dict(thin=0), dict(jump_beta=0.0),
                                    dict(target_accept_lo=0.5, target_accept_hi=0.4),
                                    dict(jump_z_schedule=(1.0, 1.0)), dict(update=("z", "nope"))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SamplerConfig(**kw)

    def test_z_jumps_scale_with_items(self):
        jumps = SamplerConfig().initial_jumps(16)
        assert jumps["z_q1"] == pytest.approx(0.4) and jumps["z_q4"] == pytest.approx(0.05)
        assert SamplerConfig(jump_z_scale=1.0).initial_jumps(16)["z_q1"] == 1.6
        assert jumps["beta"] == 0.1 and jumps["theta"] == 3.0


class TestInitialize:
    def test_deterministic(self, small_data):
        a = initialize_state(small_data, PriorConfig(), 3)
        b = initialize_state(small_data, PriorConfig(), 3)
        np.testing.assert_array_equal(a.z, b.z)

    def test_intercepts_zero(self, small_data):
        s = initialize_state(small_data, PriorConfig(), 3)
        assert not s.beta.any() and not s.theta.any() and s.sigma_z_sq == 1.0

    def test_z_moments(self):
        x = ItemResponseMatrix(np.tile([[1, 0], [0, 1]], (2500, 1)))
        z = initialize_state(x, PriorConfig(), 11).z
        assert z.size == 10_000
        assert abs(z.mean()) < 3 * 0.5 / math.sqrt(z.size)
        assert z.std() == pytest.approx(0.5, rel=0.03)


class TestBuckets:
    def test_quartiles(self):
        b = z_buckets(np.arange(8))
        assert b.tolist() == [0, 0, 1, 1, 2, 2, 3, 3]

    def test_high_score_gets_small_jump(self, small_data):
        e = ChainEngine(small_data, PriorConfig(), SamplerConfig(), initialize_state(small_data, PriorConfig(), 0),
                        np.random.default_rng(0))
        scores = small_data.person_scores
        sd = e._z_jumps()
        assert sd[np.argmax(scores)] <= sd[np.argmin(scores)]


class TestAdaptation:
    def _ledger(self, rate):
        led = AcceptanceLedger(("beta",))
        led.record("beta", 1000, int(rate * 1000))
        return led

    def test_rule(self):
        cfg = SamplerConfig()
        assert adapt_proposals(self._ledger(0.5), {"beta": 1.0}, cfg)["beta"] == 1.25
        assert adapt_proposals(self._ledger(0.3), {"beta": 1.0}, cfg)["beta"] == 1.0
        assert adapt_proposals(self._ledger(0.1), {"beta": 1.0}, cfg)["beta"] == 0.8

    def test_self_tuning_on_standard_normal(self):
        """Random-walk Metropolis on N(0, 1) from a badly scaled start."""
        cfg = SamplerConfig()
        rng = np.random.default_rng(2)
        for start in (0.1, 30.0):
            jumps = {"beta": start}
            x = 0.0
            led = AcceptanceLedger(("beta",))
            rates = []
            for _ in range(20):
                acc = 0
                for _ in range(cfg.adapt_window):
                    prop = x + jumps["beta"] * rng.standard_normal()
                    if math.log(rng.random()) < 0.5 * (x * x - prop * prop):
                        x, acc = prop, acc + 1
                led.record("beta", cfg.adapt_window, acc)
                rates.append(led.window_rate("beta"))
                jumps = adapt_proposals(led, jumps, cfg)
                led.close_window(0, "burn_in", jumps)
            assert 0.2 <= rates[-1] <= 0.4, (start, rates)


class TestKernels:
    def test_table_matches_exact(self, rng):
        offsets = rng.normal(0, 2, 30)
        f0, f1, f2 = K.build_table(offsets, 200, K.TABLE_STEP)
        for d in rng.uniform(0, 9.9, 200):
            exact = np.logaddexp(0.0, offsets - d).sum()
            assert abs(K.table_eval(d, f0, f1, f2, K.TABLE_STEP, offsets) - exact) < 1e-9
        # beyond the table the exact sum is used
        assert K.table_eval(50.0, f0, f1, f2, K.TABLE_STEP, offsets) == pytest.approx(
            np.logaddexp(0.0, offsets - 50.0).sum(), rel=1e-14)

    def test_binned_sum_matches_exact(self, rng):
        dists = rng.gamma(2.0, 1.0, 20_000)
        centres, moments = _pair_sums(dists)
        assert moments.shape[1] == K.BIN_ORDER + 1
        for b in (-4.0, 0.0, 3.0):
            assert abs(K.expanded_softplus_sum(b, centres, moments) - np.logaddexp(0.0, b - dists).sum()) < 1e-7

    def test_small_pair_sets_are_exact(self, rng):
        dists = rng.gamma(2.0, 1.0, 100)
        centres, moments = _pair_sums(dists)
        assert K.expanded_softplus_sum(0.5, centres, moments) == pytest.approx(
            np.logaddexp(0.0, 0.5 - dists).sum(), rel=1e-14)

    @pytest.mark.parametrize("ordered", [False, True])
    def test_z_delta_matches_exact_conditional(self, ordered):
        rng = np.random.default_rng(9)
        n, p = 60, 8
        x, beta, theta, z = oracles.random_instance(rng, n, p)
        m = ItemResponseMatrix(x)
        prior = PriorConfig(ordered_pairs=ordered)
        s = ModelState(beta, theta, 1.3, z)
        e = ChainEngine(m, prior, SamplerConfig(), s, rng)
        h = e._table(e.beta, e.zdist.max())
        g = e._table(e.theta, e.wdist.max())
        for k in range(0, n, 7):
            znew = z[k] + rng.normal(0, 0.3, 2)
            dnew, wnew = np.empty(n), np.empty((p, 2))
            delta = prior.pair_weight * K.z_delta(k, znew, e.z, e.zdist, e.w, e.wdist, e._X, e._co_person,
                                                  e._co_item, e._totals, e.beta, *h, e.theta, *g,
                                                  K.TABLE_STEP, dnew, wnew)
            delta -= 0.5 * (znew @ znew - z[k] @ z[k]) / s.sigma_z_sq
            exact = logpost_z(k, znew, s, m, prior) - logpost_z(k, z[k], s, m, prior)
            assert abs(delta - exact) < 1e-8


class TestSweep:
    def test_zero_width_proposals(self, small_data):
        prior = PriorConfig()
        s = initialize_state(small_data, prior, 1)
        jumps = {b: 1e-12 for b in ("z_q1", "z_q2", "z_q3", "z_q4", "beta", "theta")}
        cfg = SamplerConfig(update=("z", "beta", "theta"))
        out = sweep(s, small_data, prior, cfg, np.random.default_rng(0), jumps)
        np.testing.assert_allclose(out.z, s.z, atol=1e-10)
        np.testing.assert_allclose(out.beta, s.beta, atol=1e-10)
        np.testing.assert_allclose(out.theta, s.theta, atol=1e-10)

    def test_input_state_untouched(self, small_data):
        s = initialize_state(small_data, PriorConfig(), 1)
        z0 = s.z.copy()
        sweep(s, small_data, PriorConfig(), SamplerConfig(), np.random.default_rng(0))
        np.testing.assert_array_equal(s.z, z0)

    def test_degenerate_item_rejected(self):
        x = ItemResponseMatrix(np.array([[1, 0], [1, 0], [0, 0]]))
        with pytest.raises(DegenerateItemError):
            run_chain(x, PriorConfig(), SamplerConfig(n_iterations=10, burn_in=0, thin=1))

    def test_sigma_gibbs_ks(self, small_data):
        prior = PriorConfig()
        s = initialize_state(small_data, prior, 4)
        e = ChainEngine(small_data, prior, SamplerConfig(update=("sigma_z",)), s, np.random.default_rng(8))
        draws = np.empty(10_000)
        for t in range(draws.size):
            e.sweep()
            draws[t] = e.sigma_z_sq
        shape = prior.a_sigma + small_data.n * 2 / 2
        scale = prior.b_sigma + 0.5 * np.sum(s.z ** 2)
        assert stats.kstest(draws, stats.invgamma(shape, scale=scale).cdf).pvalue > 0.01

    def test_beta_histogram_two_person_toy(self):
        """Two persons; only beta of the item both answered moves, so its target is one-dimensional."""
        x = ItemResponseMatrix(np.array([[1, 1], [1, 0]]))
        prior = PriorConfig(sigma_beta_sq=1.0)
        z = np.array([[0.0], [0.7]])
        s = ModelState(np.zeros(2), np.zeros(2), 1.0, z)
        cfg = SamplerConfig(dim=1, update=("beta",))
        e = ChainEngine(x, prior, cfg, s, np.random.default_rng(12), jumps={"beta": 2.0})
        draws = np.empty(200_000)
        for t in range(draws.size):
            e.sweep()
            draws[t] = e.beta[0]
        edges = np.linspace(-4, 5, 51)
        fine = np.linspace(-4, 5, 50 * 200 + 1)
        # beta_1 conditional: N(0, 1) prior times one edge with logit beta - 0.7
        logd = -0.5 * fine ** 2 + np.array([oracles.log_sigmoid(b - 0.7) for b in fine])
        dens = np.exp(logd - logd.max())
        mass = np.add.reduceat(dens[:-1], np.arange(0, fine.size - 1, 200))
        mass /= mass.sum()
        hist, _ = np.histogram(draws, edges)
        tv = 0.5 * np.abs(hist / draws.size - mass).sum()
        assert tv < 0.05, tv


@pytest.fixture(scope="module")
def chain(small_data):
    return run_chain(small_data, PriorConfig(), SamplerConfig(n_iterations=1600, burn_in=600, thin=5,
                                                             adapt_window=200, seed=17))


class TestRunChain:
    def test_shapes(self, chain, small_data):
        assert chain.n_samples == 200
        assert chain.z.shape == (200, small_data.n, 2) and chain.beta.shape == (200, small_data.p)
        assert chain.iterations[0] == 605 and chain.iterations[-1] == 1600

    def test_recorded_log_posterior(self, chain, small_data):
        for s in (0, 77, 199):
            assert abs(chain.log_posterior[s] - log_posterior(chain.state(s), small_data, chain.prior)) < 1e-9

    def test_jumps_frozen_after_burn_in(self, chain):
        sampling = [r for r in chain.ledger.history if r[1] == "sampling"]
        assert sampling
        for b in chain.ledger.blocks:
            jumps = {r[5] for r in sampling if r[2] == b}
            assert jumps == {chain.final_jumps[b]}

    def test_ledger_consistent(self, chain):
        for b in chain.ledger.blocks:
            assert chain.ledger.acceptances[b] <= chain.ledger.proposals[b]
            assert sum(r[3] for r in chain.ledger.history if r[2] == b) == chain.ledger.proposals[b]

    def test_deterministic(self, chain, small_data):
        again = run_chain(small_data, PriorConfig(), chain.config)
        np.testing.assert_array_equal(again.z, chain.z)
        np.testing.assert_array_equal(again.log_posterior, chain.log_posterior)

    def test_seed_changes_chain(self, chain, small_data):
        other = run_chain(small_data, PriorConfig(), SamplerConfig(n_iterations=700, burn_in=600, thin=5,
                                                                  adapt_window=200, seed=18))
        assert not np.array_equal(other.z[0], chain.z[0])


@given(st.integers(2, 40), st.integers(0, 200), st.integers(1, 20))
@settings(max_examples=50, deadline=None)
def test_sample_count_property(extra, burn_in, thin):
    cfg = SamplerConfig(n_iterations=burn_in + extra, burn_in=burn_in, thin=thin)
    assert cfg.n_samples == extra // thin
