import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m2bcal import TopLabelCalibrator, example1_distribution, random_distribution
from m2bcal.core import TopLabelDecomposition, top_label
from m2bcal.exceptions import EmptyInput, InvalidHyperparameters, UnsupportedPredictor
from m2bcal.metrics import (
    bin_index,
    canonical_validity_curve,
    conf_ece,
    conf_mce,
    cw_ece,
    exact_class_wise_deviation,
    exact_metrics,
    exact_top_label_deviation,
    reliability_diagram,
    tl_ece,
    tl_mce,
    validity_curve,
)
from m2bcal.temperature import TemperatureScaling


def _two_atom_sample(copies=5):
    """Two-atom population as a finite sample: per atom 5 rows, hit rates 0.2 and 1.0."""
    c = np.array([0] * 5 + [1] * 5)
    h = np.full(10, 0.6)
    y = np.array([0, 2, 2, 2, 2, 1, 1, 1, 1, 1])
    return np.tile(y, copies), np.tile(c, copies), np.tile(h, copies)


class TestHandValues:
    def test_perfect(self):
        y = np.array([0, 1, 2])
        assert conf_ece(y, y, np.ones(3)) == 0.0
        assert tl_mce(y, y, np.ones(3)) == 0.0

    def test_single_cell(self):
        assert conf_ece([0, 1, 1, 1], [0, 0, 0, 0], np.full(4, 0.5)) == pytest.approx(0.25)

    def test_weighted_strata(self):
        # class 0: h=0.6, 5/10 hits; class 1: h=0.6, 7/10 hits
        c = np.repeat([0, 1], 10)
        y = np.concatenate([[0] * 5 + [2] * 5, [1] * 7 + [2] * 3])
        h = np.full(20, 0.6)
        assert tl_ece(y, c, h) == pytest.approx(0.1)
        assert tl_mce(y, c, h) == pytest.approx(0.1)
        assert conf_ece(y, c, h) == pytest.approx(0.0, abs=1e-15)

    def test_two_atom_as_sample(self):
        y, c, h = _two_atom_sample()
        assert conf_ece(y, c, h) == pytest.approx(0.0, abs=1e-15)
        assert conf_mce(y, c, h) == pytest.approx(0.0, abs=1e-15)
        assert tl_ece(y, c, h) == pytest.approx(0.4)
        assert tl_mce(y, c, h) == pytest.approx(0.4)

    def test_mce_is_max_over_cells(self):
        # cells [0, .5) and [.5, 1]: deviations 0.1 and 0.05
        h = np.array([0.3] * 10 + [0.75] * 20)
        c = np.zeros(30, dtype=int)
        y = np.array([0] * 4 + [1] * 6 + [0] * 16 + [1] * 4)
        assert tl_mce(y, c, h, n_bins=2) == pytest.approx(0.1)
        assert conf_mce(y, c, h, n_bins=2) == pytest.approx(0.1)

    def test_cw_ece(self):
        H = np.tile([0.8, 0.2], (10, 1))
        y = np.array([0] * 6 + [1] * 4)
        assert cw_ece(y, H) == pytest.approx(0.2)
        one_hot = np.eye(3)[[0, 1, 2, 1]]
        assert cw_ece([0, 1, 2, 1], one_hot) == 0.0

    def test_cw_symmetric(self):
        assert cw_ece([0, 1], np.full((2, 2), 0.5)) == 0.0

    def test_empty(self):
        with pytest.raises(EmptyInput):
            tl_ece([], [], [])
        with pytest.raises(EmptyInput):
            cw_ece([], np.empty((0, 3)))


class TestBinning:
    def test_cells(self):
        np.testing.assert_array_equal(bin_index([0.0, 0.099, 0.1, 0.95, 1.0], 10), [0, 0, 1, 9, 9])

    def test_bad_bins(self):
        with pytest.raises(InvalidHyperparameters):
            bin_index([0.5], 0)

    def test_unbinned_uses_exact_values(self):
        h = np.array([0.3, 0.3, 0.31])
        y = np.array([0, 1, 0])
        c = np.zeros(3, dtype=int)
        # binned: one cell; unbinned: two groups
        assert tl_ece(y, c, h, n_bins=None) == pytest.approx((2 * 0.2 + 0.69) / 3)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31), B=st.integers(1, 20), n=st.integers(1, 300))
def test_metric_properties(seed, B, n):
    r = np.random.default_rng(seed)
    P = r.dirichlet(np.ones(3), size=n)
    y = r.integers(0, 3, n)
    c, h = top_label(P)
    e, m = tl_ece(y, c, h, n_bins=B), tl_mce(y, c, h, n_bins=B)
    assert 0 <= e <= m + 1e-15 <= 1 + 1e-15
    assert 0 <= conf_ece(y, c, h, n_bins=B) <= 1
    # merging pairs of cells never increases the estimate
    if B % 2 == 0:
        assert tl_ece(y, c, h, n_bins=B // 2) <= e + 1e-12
        assert conf_ece(y, c, h, n_bins=B // 2) <= conf_ece(y, c, h, n_bins=B) + 1e-12
    # cell boundaries are nested when B divides 2B
    assert tl_ece(y, c, h, n_bins=B) <= tl_ece(y, c, h, n_bins=2 * B) + 1e-12


class TestReliabilityDiagram:
    def test_two_atom_single_bin(self):
        y, c, h = _two_atom_sample()
        d = reliability_diagram(y, c, h, n_bins=1)
        assert d.conf[0] == pytest.approx(0.6) and d.acc[0] == pytest.approx(0.6)
        assert d.delta[0] == pytest.approx(0.4)
        assert d.top_label_ordinate[0] in (pytest.approx(0.2), pytest.approx(1.0))

    def test_reconstructs_binned_tl_ece(self, calib_data):
        P, y = calib_data
        c, h = top_label(P)
        for B in (1, 5, 15):
            d = reliability_diagram(y, c, h, n_bins=B)
            assert np.sum(d.weight * d.delta) == pytest.approx(tl_ece(y, c, h, n_bins=B), abs=1e-12)
            assert np.sum(d.weight) == pytest.approx(1.0)
            assert np.all(d.delta >= 0)

    def test_empty_bins_omitted(self):
        d = reliability_diagram([0, 0], [0, 0], [0.95, 0.99], n_bins=10)
        assert d.bin.tolist() == [9]

    def test_sign_of_marker(self):
        d = reliability_diagram([0, 0, 0, 0], [0, 0, 0, 0], np.full(4, 0.5), n_bins=1)
        assert d.top_label_ordinate[0] == pytest.approx(1.0)  # acc 1 > conf 0.5

    def test_to_dict(self):
        d = reliability_diagram([0, 1], [0, 0], [0.6, 0.7], n_bins=2).to_dict()
        assert isinstance(d["conf"], list) and d["per_class"][0][0]["class"] == 0


class TestValidity:
    def test_perfect(self):
        v = validity_curve([0, 1], [0, 1], [1.0, 1.0])
        assert np.all(v.values == 1.0)

    def test_two_atom_step(self):
        y, c, h = _two_atom_sample()
        v = validity_curve(y, c, h, grid_step=0.1)
        np.testing.assert_array_equal(v.values, [0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1])
        vc = validity_curve(y, c, h, grouping="confidence", grid_step=0.1)
        assert np.all(vc.values == 1.0)

    def test_monotone_and_ends_at_one(self, calib_data):
        P, y = calib_data
        c, h = top_label(P)
        v = validity_curve(y, c, h, n_bins=15)
        assert np.all(np.diff(v.values) >= 0) and v.values[-1] == 1.0

    def test_grid_step_must_divide(self):
        with pytest.raises(InvalidHyperparameters):
            validity_curve([0], [0], [0.5], grid_step=0.3)

    def test_canonical(self, calib_data):
        P, y = calib_data
        v = canonical_validity_curve(y, P, np.argmax(P, axis=1))
        assert np.all(np.diff(v.values) >= 0) and v.values[-1] == 1.0
        one_hot = np.eye(4)[y]
        assert np.all(canonical_validity_curve(y, one_hot, y).values == 1.0)


class TestExact:
    def test_two_atom(self):
        m = exact_metrics(example1_distribution())
        assert m.conf_ece == 0.0
        assert abs(m.tl_ece - 0.4) < 1e-15
        assert abs(m.tl_mce - 0.4) < 1e-15
        assert m.conf_mce == 0.0

    def test_matches_weighted_plugin_on_support(self):
        d = random_distribution(4, 30, seed=3)
        m = exact_metrics(d)
        # expand every (atom, label) pair with weight p(atom) * P(label | atom)
        A, L = d.cond.shape
        atoms = np.repeat(np.arange(A), L)
        labels = np.tile(np.arange(L), A)
        w = (d.p[:, None] * d.cond).ravel()
        c, h = top_label(d.scores[atoms])
        kw = dict(n_bins=None, sample_weight=w)
        assert tl_ece(labels, c, h, **kw) == pytest.approx(m.tl_ece, abs=1e-12)
        assert conf_ece(labels, c, h, **kw) == pytest.approx(m.conf_ece, abs=1e-12)
        assert tl_mce(labels, c, h, **kw) == pytest.approx(m.tl_mce, abs=1e-12)
        assert cw_ece(labels, d.scores[atoms], **kw) == pytest.approx(m.cw_ece, abs=1e-12)

    def test_deterministic_one_hot_is_zero(self):
        from m2bcal.synthetic import DiscreteDistribution

        eye = np.eye(3)
        d = DiscreteDistribution(np.full(3, 1 / 3), eye, eye)
        m = exact_metrics(d)
        assert (m.conf_ece, m.tl_ece, m.tl_mce, m.conf_mce, m.cw_ece) == (0, 0, 0, 0, 0)

    def test_accepts_models_and_callables(self):
        d = random_distribution(3, 50, seed=0)
        dec = top_label(d.scores)
        a = exact_metrics(d, TopLabelDecomposition(*dec))
        b = exact_metrics(d, lambda s: top_label(s))
        assert a.tl_ece == b.tl_ece and a.cw_ece is None
        c = exact_metrics(d, lambda s: s)
        assert c.cw_ece is not None

    def test_rejects_logit_models(self):
        d = random_distribution(3, 5, seed=0)
        with pytest.raises(UnsupportedPredictor):
            exact_metrics(d, TemperatureScaling())
        with pytest.raises(UnsupportedPredictor):
            exact_metrics(d, 42)

    def test_deviation_helpers(self):
        d = example1_distribution()
        np.testing.assert_allclose(exact_top_label_deviation(d, top_label(d.scores)), [0.4, 0.4])
        dev = exact_class_wise_deviation(d, d.scores)
        assert dev.shape == (2, 3) and np.all(dev >= 0)

    def test_fitted_model(self):
        d = random_distribution(3, 200, seed=5)
        from m2bcal.synthetic import sample

        ds = sample(d, 1000, seed=1)
        model = TopLabelCalibrator().fit(*ds)
        m = exact_metrics(d, model)
        assert 0 <= m.conf_ece <= m.tl_ece <= m.tl_mce <= 1
