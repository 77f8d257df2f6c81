import numpy as np
import pytest
from sklearn.base import clone

from diffgap.dimension import (
    CENTRAL,
    FORWARD,
    NONE_DETECTED,
    LocalDimensionEstimator,
    detect_dimension,
    dimension_vs_time_sweep,
    estimate_singular_values,
    second_differences,
)
from diffgap.empirical import EmpiricalScore
from diffgap.exact_score import ExactScore
from diffgap.manifold_data import VarianceProfile, sample_dataset, sample_projection


@pytest.fixture(scope="module")
def field():
    return ExactScore(sample_projection(100, 40, VarianceProfile.single(1.0), 0))


@pytest.fixture(scope="module")
def x0():
    return np.random.default_rng(0).standard_normal(100)


class TestSingularValues:
    def test_linear_field_gives_transformed_spectrum(self, field, x0):
        t0 = 1e-2
        est = estimate_singular_values(field, x0, t0)
        r = np.abs(field.jacobian_eigenvalues(t0).values)
        np.testing.assert_allclose(est.singular_values, np.sort(r / r.max())[::-1], atol=1e-8)
        assert est.orthogonality_residual < 1e-12

    def test_plateau_and_tail(self, field, x0):
        v = estimate_singular_values(field, x0, 1e-3).singular_values
        assert np.sum(np.abs(v - 1.0) < 1e-3) == 60
        assert np.sum(v < 0.01) == 40

    def test_central_equals_forward_for_linear_field(self, field, x0):
        a = estimate_singular_values(field, x0, 1e-3, FORWARD, seed=2).singular_values
        b = estimate_singular_values(field, x0, 1e-3, CENTRAL, seed=2).singular_values
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_seed_invariance_for_linear_field(self, field, x0):
        a = estimate_singular_values(field, x0, 1e-3, seed=0).singular_values
        b = estimate_singular_values(field, x0, 1e-3, seed=99).singular_values
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_scale_invariance(self, field, x0):
        a = estimate_singular_values(field, x0, 1e-3).singular_values
        b = estimate_singular_values(lambda x, t: 7.5 * field(x, t), x0, 1e-3).singular_values
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_invalid_arguments(self, field, x0):
        with pytest.raises(ValueError):
            estimate_singular_values(field, x0, 1e-3, variant="backward")
        with pytest.raises(ValueError):
            estimate_singular_values(field, x0, 0.0)


class TestDetection:
    def test_exact_score_dimension(self, field, x0):
        det = detect_dimension(estimate_singular_values(field, x0, 1e-3))
        assert det.detected
        assert det.dimension == 40
        assert det.gap_index == 60

    def test_flat_spectrum_not_detected(self):
        det = detect_dimension(np.ones(50))
        assert det.method == NONE_DETECTED
        assert det.dimension is None and det.dimension_or_zero() == 0

    def test_step_profile(self):
        v = np.r_[np.ones(30), np.full(20, 1e-3)]
        v = v + 1e-5 * np.random.default_rng(0).random(50)
        det = detect_dimension(v)
        assert det.dimension == 20
        assert 30 in det.gaps

    def test_second_differences(self):
        np.testing.assert_allclose(second_differences([1.0, 4.0, 9.0, 16.0]), [0.0, 2.0, 2.0, 0.0])

    def test_invalid(self):
        with pytest.raises(ValueError):
            detect_dimension(np.ones(3))
        with pytest.raises(ValueError):
            detect_dimension(np.ones(10), threshold_factor=0.0)

    def test_memorized_score_has_no_dimension(self):
        model = sample_projection(50, 20, VarianceProfile.single(1.0), 0)
        Y = sample_dataset(model, 4, seed=0).points
        est = EmpiricalScore().fit(Y)
        x = Y[0] + 1e-3 * np.random.default_rng(1).standard_normal(50)
        det = detect_dimension(estimate_singular_values(est, x, 1e-5))
        assert det.dimension_or_zero() == 0

    def test_sweep_is_constant_for_exact_score(self, field, x0):
        rows = dimension_vs_time_sweep(field, x0, np.geomspace(10, 1e-4, 6), repeats=2)
        assert [r[1] for r in rows] == [40.0] * 6
        assert all(r[2] == 0.0 for r in rows)


class TestEstimator:
    def test_params_and_clone(self, field):
        est = LocalDimensionEstimator(field, t0=1e-2, variant=CENTRAL)
        params = est.get_params()
        assert params["t0"] == 1e-2 and params["variant"] == CENTRAL
        assert clone(est).get_params()["t0"] == 1e-2

    def test_fit_predict(self, field, x0):
        X = np.vstack([x0, -x0, np.zeros(100)])
        est = LocalDimensionEstimator(field).fit(X)
        np.testing.assert_array_equal(est.dimensions_, [40, 40, 40])
        np.testing.assert_array_equal(est.predict(X), est.dimensions_)
        assert est.transform(X).shape == (3, 100)

    def test_requires_field(self):
        with pytest.raises(ValueError):
            LocalDimensionEstimator().fit(np.zeros((1, 5)))
