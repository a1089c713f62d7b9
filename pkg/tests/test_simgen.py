import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlsjm.simgen import (
    STUDY_GRID,
    SimDesign,
    assign_groups,
    class_sizes_for,
    design_grid,
    drv_design,
    generate_responses,
    inject_dependence,
    simulate,
)


def binom_ok(hits, trials, p, z=4.0):
    return abs(hits - trials * p) <= z * np.sqrt(trials * p * (1 - p))


class TestDesign:
    def test_defaults(self):
        d = SimDesign()
        assert d.n == 300 and d.p == 24
        assert d.intended_inside().sum(axis=1).tolist() == [2] * 300

    def test_unequal_sizes(self):
        d = SimDesign(respondents_per_class=(3, 4, 5))
        assert d.labels().tolist() == [0] * 3 + [1] * 4 + [2] * 5

    def test_drv_shape(self):
        d = drv_design()
        assert (d.n, d.p) == (418, 24)

    def test_grid(self):
        designs = design_grid(respondents_per_class=10)
        assert len(designs) == len(STUDY_GRID) == 6
        assert {(d.p11, d.p12) for d in designs} == set(STUDY_GRID)

    def test_class_sizes_for(self):
        assert class_sizes_for(418, 3) == (140, 139, 139)

    @pytest.mark.parametrize("kw", [dict(p11=1.5), dict(rho=-0.1), dict(anchor=4), dict(respondents_per_class=(1, 2)),
                                    dict(class_to_groups=((0,), (1,), (9,)))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SimDesign(**kw)

    def test_warns_on_reversed_probabilities(self):
        with pytest.warns(UserWarning):
            SimDesign(p11=0.4)


class TestSteps:
    def test_group_flag_frequencies(self):
        d = SimDesign(respondents_per_class=3000, p11=0.8, p21=0.5)
        flags = assign_groups(d, np.random.default_rng(1))
        intended = d.intended_inside()
        assert binom_ok(flags[intended].sum(), intended.sum(), 0.8)
        assert binom_ok((~flags[~intended]).sum(), (~intended).sum(), 0.5)

    def test_response_frequencies(self):
        d = SimDesign(respondents_per_class=3000, p12=0.7, p22=0.4)
        rng = np.random.default_rng(2)
        flags = assign_groups(d, rng)
        x = generate_responses(flags, d, rng)
        inside = flags[:, d.item_groups()]
        assert binom_ok(x[inside].sum(), inside.sum(), 0.7)
        assert binom_ok(x[~inside].sum(), (~inside).sum(), 0.4)

    def test_copy_frequency_and_effect(self):
        d = SimDesign(respondents_per_class=3000, rho=0.6)
        rng = np.random.default_rng(3)
        raw = (rng.random((d.n, d.p)) < 0.5).astype(np.int8)
        out, copied = inject_dependence(raw, d, rng)
        anchors = np.arange(0, d.p, d.items_per_group)
        assert not copied[:, anchors].any()
        np.testing.assert_array_equal(out[:, anchors], raw[:, anchors])
        others = np.setdiff1d(np.arange(d.p), anchors)
        assert binom_ok(copied[:, others].sum(), copied[:, others].size, 0.6)
        anchor_of = np.repeat(anchors, d.items_per_group)
        assert np.all(out[copied] == out[:, anchor_of][copied])
        np.testing.assert_array_equal(out[~copied], raw[~copied])

    def test_rho_extremes(self):
        rng = np.random.default_rng(4)
        raw = (rng.random((50, 24)) < 0.5).astype(np.int8)
        out0, c0 = inject_dependence(raw, SimDesign(rho=0.0), rng)
        assert not c0.any() and np.array_equal(out0, raw)
        out1, _ = inject_dependence(raw, SimDesign(rho=1.0), rng)
        for g in range(6):
            block = out1[:, 4 * g:4 * g + 4]
            assert np.all(block == block[:, :1])

    def test_within_group_correlation_increases_with_rho(self):
        corr = []
        for rho in (0.0, 0.4, 0.8):
            sim = simulate(SimDesign(respondents_per_class=500, rho=rho), seed=5)
            x = sim.responses.x.astype(float)
            c = np.corrcoef(x[:, :4].T)
            corr.append(c[np.triu_indices(4, 1)].mean())
        assert corr[0] < corr[1] < corr[2]


class TestSimulate:
    def test_deterministic(self):
        a = simulate(SimDesign(respondents_per_class=20), seed=9)
        b = simulate(SimDesign(respondents_per_class=20), seed=9)
        np.testing.assert_array_equal(a.responses.x, b.responses.x)
        np.testing.assert_array_equal(a.copied, b.copied)

    def test_seed_sequence_accepted(self):
        ss = np.random.SeedSequence(3, spawn_key=(1, 2))
        a = simulate(SimDesign(respondents_per_class=20), seed=ss)
        b = simulate(SimDesign(respondents_per_class=20), seed=np.random.SeedSequence(3, spawn_key=(1, 2)))
        np.testing.assert_array_equal(a.responses.x, b.responses.x)

    def test_design_seed_default(self):
        a = simulate(SimDesign(respondents_per_class=20, seed=4))
        b = simulate(SimDesign(respondents_per_class=20), seed=4)
        np.testing.assert_array_equal(a.responses.x, b.responses.x)

    def test_classes_score_higher_on_their_groups(self):
        sim = simulate(SimDesign(respondents_per_class=400, p11=0.9, p12=0.9), seed=1)
        d = sim.design
        x = sim.responses.x
        for c, groups in enumerate(d.class_to_groups):
            cols = np.isin(d.item_groups(), groups)
            rows = sim.labels == c
            assert x[np.ix_(rows, cols)].mean() > x[np.ix_(rows, ~cols)].mean() + 0.1

    @given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(2, 5))
    @settings(max_examples=30, deadline=None)
    def test_shapes_and_values(self, seed, classes, per):
        groups = tuple((c,) for c in range(classes))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            d = SimDesign(n_classes=classes, respondents_per_class=per, n_item_groups=classes,
                          class_to_groups=groups)
        sim = simulate(d, seed=seed)
        assert sim.responses.x.shape == (classes * per, classes * 4)
        assert set(np.unique(sim.responses.x)) <= {0, 1}
        assert sim.inside.shape == (classes * per, classes)
