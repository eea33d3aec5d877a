import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backward_cp.rules import (
    ConstantRule,
    EntropyModel,
    EntropyRule,
    apply_rule,
    bin_thresholds,
    calibration_caps,
    fit_entropy_rule,
    local_entropy,
    pca_2d,
    rule_from_config,
)
from backward_cp.rules import test_point_entropy as point_entropy
from backward_cp.scores import CalibrationSet, EmbeddingMatrix, ScoreMatrix


def _cal(n, k, seed=0):
    rng = np.random.default_rng(seed)
    return CalibrationSet(
        ScoreMatrix(rng.lognormal(size=(n, k))), rng.integers(0, k, size=n)
    )


def _subspace_angle(a, b):
    # largest principal angle between the row spans of two 2 x d bases;
    # scipy uses the sine-based formula, which resolves tiny angles that
    # arccos of a singular value cannot
    from scipy.linalg import subspace_angles

    return float(subspace_angles(a.T, b.T).max())


class TestPca2d:
    def test_diagonal_covariance_gives_identity_axes(self):
        pts = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        res = pca_2d(EmbeddingMatrix(pts))
        np.testing.assert_allclose(res.projection, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(res.projected, pts, atol=1e-12)
        assert not res.degenerate

    def test_collinear_points_second_component_zero(self):
        t = np.array([-2.0, -1.0, 0.5, 2.5])
        pts = t[:, None] * np.ones(3)[None, :]
        res = pca_2d(EmbeddingMatrix(pts))
        np.testing.assert_allclose(res.projected[:, 1], 0.0, atol=1e-9)
        assert not res.degenerate

    def test_identical_points_degenerate(self):
        pts = np.tile([1.5, -2.0, 3.0], (4, 1))
        res = pca_2d(EmbeddingMatrix(pts))
        assert res.degenerate
        assert np.all(res.projection == 0.0)
        assert np.all(res.projected == 0.0)

    def test_matches_svd_oracle(self):
        # independent route: right singular vectors of the centered data.
        # coordinates scaled so the spectrum has a clear gap; with nearly
        # tied eigenvalues the comparison measures solver noise instead
        rng = np.random.default_rng(12345)
        pts = rng.standard_normal((5, 3)) * np.array([5.0, 2.0, 0.5])
        res = pca_2d(EmbeddingMatrix(pts))
        centered = pts - pts.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        assert _subspace_angle(res.projection, vt[:2]) <= 1e-8

    def test_matches_svd_oracle_larger(self):
        rng = np.random.default_rng(2024)
        pts = rng.standard_normal((40, 6)) * np.array([6.0, 3.0, 1.5, 1.0, 0.7, 0.2])
        res = pca_2d(EmbeddingMatrix(pts))
        centered = pts - pts.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        assert _subspace_angle(res.projection, vt[:2]) <= 1e-8

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        pts = rng.standard_normal((20, 4))
        shifted = pts + np.array([5.0, -3.0, 100.0, 0.25])
        a = pca_2d(EmbeddingMatrix(pts))
        b = pca_2d(EmbeddingMatrix(shifted))
        np.testing.assert_allclose(a.projection, b.projection, atol=1e-9)
        np.testing.assert_allclose(a.projected, b.projected, atol=1e-8)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(4)
        res = pca_2d(EmbeddingMatrix(rng.standard_normal((30, 6))))
        np.testing.assert_allclose(res.projection @ res.projection.T, np.eye(2), atol=1e-12)

    def test_sign_convention(self):
        rng = np.random.default_rng(44)
        res = pca_2d(EmbeddingMatrix(rng.standard_normal((15, 5))))
        for row in res.projection:
            assert row[np.argmax(np.abs(row))] > 0

    def test_needs_two_points(self):
        with pytest.raises(ValueError, match="at least 2"):
            pca_2d(EmbeddingMatrix([[1.0, 2.0]]))

    def test_needs_two_dims(self):
        with pytest.raises(ValueError, match="dimension >= 2"):
            pca_2d(EmbeddingMatrix([[1.0], [2.0]]))


class TestLocalEntropy:
    def test_point_mass(self):
        assert local_entropy([3] * 20, 10) == 0.0

    def test_fair_coin(self):
        assert local_entropy([0] * 10 + [1] * 10, 10) == 1.0

    def test_uniform_over_ten(self):
        labels = np.repeat(np.arange(10), 2)
        np.testing.assert_allclose(local_entropy(labels, 10), math.log2(10), rtol=1e-12)
        np.testing.assert_allclose(local_entropy(labels, 10), 3.32193, atol=1e-5)

    def test_range_bound(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            k = int(rng.integers(1, 40))
            labels = rng.integers(0, 7, size=k)
            h = local_entropy(labels, 7)
            assert 0.0 <= h <= math.log2(7) + 1e-12

    def test_empty_errors(self):
        with pytest.raises(ValueError, match="non-empty"):
            local_entropy([], 5)

    def test_out_of_range_label(self):
        with pytest.raises(ValueError, match=r"\[0, 3\)"):
            local_entropy([0, 3], 3)


class TestBinThresholds:
    def test_skewed_bins_worked_example(self):
        bins = bin_thresholds(0.0, 2.0, L=3, skew_exponent=0.5)
        np.testing.assert_allclose(bins, [0.0, math.sqrt(2.0), 2.0], rtol=1e-12)
        np.testing.assert_allclose(bins, [0.0, 1.41421, 2.0], atol=1e-5)

    def test_linear_bins(self):
        bins = bin_thresholds(0.0, 2.0, L=3, skew_exponent=1.0)
        np.testing.assert_allclose(bins, [0.0, 1.0, 2.0], rtol=1e-12)

    def test_endpoints_pinned(self):
        bins = bin_thresholds(0.37, 2.91, L=5, skew_exponent=0.5)
        assert bins[0] == 0.37
        np.testing.assert_allclose(bins[-1], 2.91, rtol=1e-15)
        assert (np.diff(bins) >= 0).all()


def _clustered_fixture(n=40, seed=15):
    # two tight, well-separated clusters: one label-pure, one label-mixed
    rng = np.random.default_rng(seed)
    half = n // 2
    pure = rng.normal(loc=(-8.0, 0.0), scale=0.3, size=(half, 2))
    mixed = rng.normal(loc=(8.0, 0.0), scale=0.3, size=(n - half, 2))
    pts = np.vstack([pure, mixed])
    labels = np.concatenate([np.zeros(half, dtype=int), rng.integers(0, 4, size=n - half)])
    cal = CalibrationSet(ScoreMatrix(rng.lognormal(size=(n, 4))), labels)
    return cal, EmbeddingMatrix(pts)


class TestFitEntropyRule:
    def test_entropies_match_brute_force(self):
        cal, emb = _clustered_fixture()
        model = fit_entropy_rule(cal, emb, k=5, t_min=1, t_max=3)
        proj = model.projected_cal
        for i in range(cal.n):
            d = ((proj - proj[i]) ** 2).sum(axis=1)
            d[i] = np.inf
            order = np.lexsort((np.arange(cal.n), d))[:5]
            expected = local_entropy(cal.labels[order], cal.num_labels)
            np.testing.assert_allclose(model.cal_entropies[i], expected, rtol=1e-12)

    def test_pure_cluster_entropy_zero(self):
        cal, emb = _clustered_fixture()
        model = fit_entropy_rule(cal, emb, k=5, t_min=1, t_max=3)
        assert model.cal_entropies[:10].max() == 0.0

    def test_bins_span_observed_range(self):
        cal, emb = _clustered_fixture()
        model = fit_entropy_rule(cal, emb, k=5, t_min=1, t_max=4)
        assert model.bins[0] == model.cal_entropies.min()
        np.testing.assert_allclose(model.bins[-1], model.cal_entropies.max(), rtol=1e-15)
        assert model.bins.shape == (4,)

    def test_k_validation(self):
        cal, emb = _clustered_fixture(n=10)
        with pytest.raises(ValueError, match="1 <= k <= n-1"):
            fit_entropy_rule(cal, emb, k=10, t_min=1, t_max=3)
        with pytest.raises(ValueError, match="1 <= k <= n-1"):
            fit_entropy_rule(cal, emb, k=0, t_min=1, t_max=3)

    def test_t_bounds_validation(self):
        cal, emb = _clustered_fixture(n=10)
        with pytest.raises(ValueError, match="t_min < t_max"):
            fit_entropy_rule(cal, emb, k=3, t_min=2, t_max=2)
        with pytest.raises(ValueError, match="t_min < t_max"):
            fit_entropy_rule(cal, emb, k=3, t_min=1, t_max=9)

    def test_row_count_mismatch(self):
        cal, _ = _clustered_fixture(n=10)
        emb = EmbeddingMatrix(np.zeros((8, 2)))
        with pytest.raises(ValueError, match="8 rows"):
            fit_entropy_rule(cal, emb, k=3, t_min=1, t_max=3)

    def test_skew_validation(self):
        cal, emb = _clustered_fixture(n=10)
        with pytest.raises(ValueError, match="skew_exponent"):
            fit_entropy_rule(cal, emb, k=3, t_min=1, t_max=3, skew_exponent=0.0)


class TestApplyRule:
    def test_constant(self):
        cal = _cal(5, 3)
        assert apply_rule(ConstantRule(2), cal) == 2
        assert apply_rule(ConstantRule(2), cal, test_embedding=[1.0, 2.0]) == 2

    def test_constant_validation(self):
        with pytest.raises(ValueError, match=">= 1"):
            ConstantRule(0)

    def test_binning_indicator_example(self):
        model = _manual_model(bins=[0.0, 1.41421, 2.0], t_min=1)
        assert model.size_from_entropy(1.0) == 2
        assert model.size_from_entropy(0.0) == 1
        assert model.size_from_entropy(1.9) == 3

    def test_entropy_rule_end_to_end(self):
        cal, emb = _clustered_fixture()
        rule = EntropyRule(fit_entropy_rule(cal, emb, k=5, t_min=1, t_max=3))
        # query inside the pure cluster: zero entropy, smallest cap
        cap_pure = apply_rule(rule, cal, test_embedding=[-8.0, 0.0])
        assert cap_pure == 1
        cap_mixed = apply_rule(rule, cal, test_embedding=[8.0, 0.0])
        assert 1 <= cap_mixed <= 3

    def test_entropy_rule_needs_embedding(self):
        cal, emb = _clustered_fixture()
        rule = EntropyRule(fit_entropy_rule(cal, emb, k=5, t_min=1, t_max=3))
        with pytest.raises(ValueError, match="test embedding"):
            apply_rule(rule, cal)

    def test_monotone_in_entropy(self):
        model = _manual_model(bins=[0.1, 0.5, 1.2, 2.0], t_min=1)
        sizes = [model.size_from_entropy(h) for h in np.linspace(0, 2.5, 60)]
        assert all(a <= b for a, b in zip(sizes, sizes[1:]))

    def test_degenerate_entropy_range_always_t_min(self):
        # all calibration entropies equal: bins collapse, strict > never fires
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(12, 2))
        labels = np.zeros(12, dtype=int)
        cal = CalibrationSet(ScoreMatrix(rng.lognormal(size=(12, 3))), labels)
        model = fit_entropy_rule(cal, EmbeddingMatrix(pts), k=4, t_min=1, t_max=3)
        assert np.all(model.bins == model.bins[0])
        for h in [0.0, model.bins[0], 1.0, 5.0]:
            if h <= model.bins[0]:
                assert model.size_from_entropy(h) == 1
        assert calibration_caps(EntropyRule(model), cal, EmbeddingMatrix(pts)).tolist() == [1] * 12


def _manual_model(bins, t_min):
    bins = np.asarray(bins, dtype=float)
    t_max = t_min + bins.size - 1
    return EntropyModel(
        projection=np.eye(2),
        mean=np.zeros(2),
        projected_cal=np.zeros((4, 2)),
        cal_labels=np.zeros(4, dtype=np.int64),
        cal_entropies=np.zeros(4),
        num_labels=10,
        k=1,
        t_min=t_min,
        t_max=t_max,
        bins=bins,
        skew_exponent=0.5,
    )


class TestCalibrationCaps:
    def test_constant(self):
        cal = _cal(6, 4)
        caps = calibration_caps(ConstantRule(3), cal)
        assert caps.tolist() == [3] * 6

    def test_entropy_caps_match_stored_entropies(self):
        cal, emb = _clustered_fixture()
        model = fit_entropy_rule(cal, emb, k=5, t_min=1, t_max=3)
        caps = calibration_caps(EntropyRule(model), cal, emb)
        expected = [model.size_from_entropy(h) for h in model.cal_entropies]
        assert caps.tolist() == expected
        assert caps.min() >= 1 and caps.max() <= 3

    def test_entropy_needs_embeddings(self):
        cal, emb = _clustered_fixture()
        rule = EntropyRule(fit_entropy_rule(cal, emb, k=5, t_min=1, t_max=3))
        with pytest.raises(ValueError, match="requires embeddings"):
            calibration_caps(rule, cal)

    def test_fit_size_mismatch_detected(self):
        cal, emb = _clustered_fixture()
        rule = EntropyRule(fit_entropy_rule(cal, emb, k=5, t_min=1, t_max=3))
        other = _cal(11, 4)
        with pytest.raises(ValueError, match="fitted on"):
            calibration_caps(rule, other, EmbeddingMatrix(np.zeros((11, 2))))


class TestKnnDeterminism:
    def test_ties_broken_by_lower_index(self):
        # five coincident points: neighbor lists are index-ordered
        pts = np.zeros((5, 2))
        labels = np.arange(5, dtype=np.int64) % 3
        cal = CalibrationSet(ScoreMatrix(np.ones((5, 5)) + np.eye(5)[:, :5]), labels)
        model = fit_entropy_rule(cal, EmbeddingMatrix(pts + 1.0), k=2, t_min=1, t_max=3)
        # point 0 sees neighbors {1, 2} -> labels {1, 2} -> entropy 1 bit
        assert model.cal_entropies[0] == 1.0
        # point 4 sees neighbors {0, 1} -> labels {0, 1} -> entropy 1 bit
        assert model.cal_entropies[4] == 1.0

    def test_test_point_tie_determinism(self):
        pts = np.zeros((4, 2))
        labels = np.array([0, 0, 1, 1])
        cal = CalibrationSet(ScoreMatrix(np.ones((4, 2))), labels)
        model = fit_entropy_rule(cal, EmbeddingMatrix(pts), k=2, t_min=1, t_max=2)
        # query equidistant from everything: picks indices {0, 1}, both label 0
        assert point_entropy(model, [0.0, 0.0]) == 0.0


class TestRuleFromConfig:
    def test_constant(self):
        rule = rule_from_config({"kind": "constant", "t": 2})
        assert isinstance(rule, ConstantRule) and rule.t == 2

    def test_entropy(self):
        cal, emb = _clustered_fixture()
        rule = rule_from_config(
            {"kind": "entropy", "k": 5, "t_min": 1, "t_max": 3}, cal, emb
        )
        assert isinstance(rule, EntropyRule)
        assert rule.model.skew_exponent == 0.5

    def test_entropy_custom_skew(self):
        cal, emb = _clustered_fixture()
        rule = rule_from_config(
            {"kind": "entropy", "k": 5, "t_min": 1, "t_max": 3, "skew_exponent": 1.0},
            cal,
            emb,
        )
        assert rule.model.skew_exponent == 1.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown rule kind"):
            rule_from_config({"kind": "magic"})

    def test_missing_keys(self):
        with pytest.raises(ValueError, match="constant rule config"):
            rule_from_config({"kind": "constant"})
        with pytest.raises(ValueError, match="entropy rule config"):
            rule_from_config({"kind": "entropy", "k": 5})

    def test_entropy_requires_data(self):
        with pytest.raises(ValueError, match="calibration set and embeddings"):
            rule_from_config({"kind": "entropy", "k": 5, "t_min": 1, "t_max": 3})


@settings(deadline=None, max_examples=100)
@given(
    h=st.floats(min_value=-1.0, max_value=6.0),
    t_min=st.integers(min_value=1, max_value=4),
    span=st.integers(min_value=1, max_value=5),
    skew=st.floats(min_value=0.1, max_value=3.0),
)
def test_binned_size_always_in_bounds(h, t_min, span, skew):
    t_max = t_min + span
    bins = bin_thresholds(0.0, 3.3, L=t_max - t_min + 1, skew_exponent=skew)
    model = _manual_model(bins.tolist(), t_min)
    assert t_min <= model.size_from_entropy(h) <= t_max
