import numpy as np
import pytest

from glm_subsampling.errors import MissingResponses, NonFiniteLinearPredictor, ShapeMismatch
from glm_subsampling.glm_core import (
    Dataset,
    FamilyKind,
    LinearFamily,
    LogisticFamily,
    PoissonFamily,
    b_double_prime,
    b_prime,
    b_value,
    fisher_info,
    get_family,
    neg_log_likelihood,
    score,
)

FAMILIES = [LinearFamily(), LogisticFamily(), PoissonFamily()]


class TestFamilyFunctions:
    def test_known_values(self):
        assert b_value(LogisticFamily(), 0.0) == pytest.approx(np.log(2.0), abs=1e-15)
        assert b_value(LinearFamily(), 3.0) == 4.5
        assert b_value(PoissonFamily(), 0.0) == 1.0
        assert b_prime(LogisticFamily(), 0.0) == 0.5
        assert b_prime(LinearFamily(), -2.5) == -2.5
        assert b_prime(LogisticFamily(), 2.0) == pytest.approx(1.0 / (1.0 + np.exp(-2.0)), abs=1e-15)
        assert b_double_prime(LogisticFamily(), 0.0) == 0.25
        assert b_double_prime(LinearFamily(), 17.0) == 1.0
        assert b_double_prime(PoissonFamily(), 0.0) == 1.0

    def test_logistic_b_is_stable_for_large_predictors(self):
        family = LogisticFamily()
        np.testing.assert_allclose(family.b(np.array([800.0, -800.0])), [800.0, 0.0], atol=1e-12)

    def test_poisson_guard(self):
        with pytest.raises(NonFiniteLinearPredictor):
            PoissonFamily().b(np.array([0.0, 501.0]))
        with pytest.raises(NonFiniteLinearPredictor):
            LogisticFamily().b_prime(np.array([np.nan]))

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.name)
    def test_derivatives_match_finite_differences(self, family):
        grid = np.linspace(-20.0, 20.0, 81)
        if family.kind is FamilyKind.POISSON:
            grid = np.linspace(-10.0, 10.0, 41)
        h = 1e-5
        db = (family.b(grid + h) - family.b(grid - h)) / (2 * h)
        d2b = (family.b_prime(grid + h) - family.b_prime(grid - h)) / (2 * h)
        np.testing.assert_allclose(db, family.b_prime(grid), rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(d2b, family.b_double_prime(grid), rtol=1e-6, atol=1e-9)

    @pytest.mark.parametrize("family", FAMILIES, ids=lambda f: f.name)
    def test_curvature_positive(self, family):
        grid = np.linspace(-30.0, 30.0, 61)
        assert np.all(family.b_double_prime(grid) > 0)

    def test_get_family(self):
        assert isinstance(get_family("poisson"), PoissonFamily)
        assert isinstance(get_family(FamilyKind.LINEAR), LinearFamily)
        family = LogisticFamily()
        assert get_family(family) is family


class TestDataset:
    def test_intercept_prepended(self):
        data = Dataset.from_arrays([[2.0], [3.0]], [1.0, 0.0], feature_names=["z"])
        np.testing.assert_array_equal(data.x, [[1.0, 2.0], [1.0, 3.0]])
        assert data.has_intercept
        assert data.feature_names == ["intercept", "z"]
        assert (data.n, data.p) == (2, 2)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            Dataset(x=np.ones((3, 2)), y=np.ones(2))

    def test_missing_responses(self):
        data = Dataset(x=np.ones((3, 1)), y=np.array([1.0, np.nan, 0.0]))
        np.testing.assert_array_equal(data.responses_at([0, 2]), [1.0, 0.0])
        np.testing.assert_array_equal(data.measured, [True, False, True])
        with pytest.raises(MissingResponses) as info:
            data.responses_at([1, 0, 1])
        assert info.value.rows == [1]
        assert "rows 1" in str(info.value)
        with pytest.raises(MissingResponses):
            data.covariates_only().responses_at()

    def test_support_check(self):
        with pytest.raises(ValueError):
            Dataset(x=np.ones((2, 1)), y=np.array([0.0, 2.0])).check_support(LogisticFamily())
        with pytest.raises(ValueError):
            Dataset(x=np.ones((2, 1)), y=np.array([1.5, 2.0])).check_support(PoissonFamily())
        Dataset(x=np.ones((2, 1)), y=np.array([1.0, np.nan])).check_support(LogisticFamily())


class TestScoreAndInformation:
    def test_score_zero_at_least_squares(self):
        x = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
        y = np.array([1.0, 2.0, 4.0])
        data = Dataset(x=x, y=y)
        beta = np.linalg.lstsq(x, y, rcond=None)[0]
        assert np.linalg.norm(score(LinearFamily(), data, beta)) < 1e-12

    def test_single_row_logistic(self):
        data = Dataset(x=np.array([[1.0]]), y=np.array([1.0]))
        np.testing.assert_allclose(score(LogisticFamily(), data, [0.0]), [-0.5])
        np.testing.assert_allclose(fisher_info(LogisticFamily(), data.covariates_only(), [0.0]), [[0.25]])

    def test_score_is_gradient_of_objective(self, rng):
        x = rng.standard_normal((5, 2))
        data = Dataset(x=x, y=np.array([1.0, 0.0, 1.0, 1.0, 0.0]))
        beta = np.array([0.3, -0.7])
        h = 1e-6
        numeric = np.array(
            [
                (neg_log_likelihood(LogisticFamily(), data, beta + h * e)
                 - neg_log_likelihood(LogisticFamily(), data, beta - h * e)) / (2 * h)
                for e in np.eye(2)
            ]
        )
        np.testing.assert_allclose(score(LogisticFamily(), data, beta), numeric, atol=1e-6)

    def test_fisher_info_matches_loop(self, rng):
        x = rng.standard_normal((6, 3))
        beta = np.array([0.2, -0.1, 0.5])
        weights = rng.uniform(0.5, 2.0, size=6)
        data = Dataset(x=x)
        expected = np.zeros((3, 3))
        for i in range(6):
            p = 1.0 / (1.0 + np.exp(-x[i] @ beta))
            expected += weights[i] * p * (1 - p) * np.outer(x[i], x[i])
        info = fisher_info(LogisticFamily(), data, beta, weights)
        np.testing.assert_allclose(info, expected / 6, atol=1e-12)
        np.testing.assert_array_equal(info, info.T)
        assert np.linalg.eigvalsh(info).min() >= -1e-12

    def test_linear_information_is_gram(self, rng):
        x = rng.standard_normal((10, 2))
        np.testing.assert_allclose(fisher_info(LinearFamily(), Dataset(x=x), [5.0, -1.0]), x.T @ x / 10, atol=1e-14)
