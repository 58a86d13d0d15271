import numpy as np
import pytest

from glm_subsampling.errors import (
    DegenerateMarginal,
    MissingResponses,
    PilotTooLarge,
    SeparationSuspected,
    ZeroWeights,
)
from glm_subsampling.glm_core import Dataset, LinearFamily, LogisticFamily, fisher_info
from glm_subsampling.sampling import (
    AliasTable,
    Criterion,
    CriterionKind,
    PilotEstimate,
    SamplingPlan,
    case_control_pilot,
    case_control_pilot_probabilities,
    optimal_weights,
    os_probabilities,
    pilot_estimate,
    plan_from_weights,
    sample_with_replacement,
    simple_random_pilot,
)


def _pilot(beta, phi, r_p=10):
    return PilotEstimate(beta_p=np.asarray(beta, float), phi_p=np.atleast_2d(phi), pilot_indices=np.arange(r_p), r_p=r_p)


class TestCriterion:
    @pytest.mark.parametrize("token", ["aopt", "A-OS", "a_opt", "AOS"])
    def test_parse_a(self, token):
        assert Criterion.parse(token).kind is CriterionKind.A_OPT

    @pytest.mark.parametrize("token", ["lopt", "L-OS", "l_opt"])
    def test_parse_l(self, token):
        assert Criterion.parse(token).kind is CriterionKind.L_OPT

    def test_parse_rejects_unknown(self):
        with pytest.raises(ValueError):
            Criterion.parse("dopt")

    def test_general_needs_matrix(self):
        with pytest.raises(ValueError):
            Criterion(kind=CriterionKind.GENERAL_L)
        assert Criterion.general(np.eye(2)).label == "general-L"


class TestPilot:
    def test_full_permutation(self, rng):
        assert sorted(simple_random_pilot(5, 5, rng)) == [0, 1, 2, 3, 4]

    def test_distinct_indices(self, rng):
        indices = simple_random_pilot(10, 3, rng)
        assert len(set(indices.tolist())) == 3
        assert indices.min() >= 0 and indices.max() < 10

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(0)
        draws = np.array([simple_random_pilot(2, 1, rng)[0] for _ in range(100_000)])
        sigma = np.sqrt(100_000 * 0.25)
        assert abs(np.sum(draws == 0) - 50_000) < 3 * sigma

    def test_too_large(self, rng):
        with pytest.raises(PilotTooLarge):
            simple_random_pilot(3, 4, rng)

    def test_linear_phi_is_scaled_gram(self, rng):
        x = rng.standard_normal((50, 2))
        data = Dataset(x=x, y=rng.standard_normal(50))
        indices = np.arange(0, 50, 5)
        pilot = pilot_estimate(LinearFamily(), data, indices)
        np.testing.assert_allclose(pilot.phi_p, x[indices].T @ x[indices] / 10, atol=1e-14)
        assert pilot.r_p == 10

    def test_single_class_pilot(self):
        data = Dataset(x=np.ones((6, 1)), y=np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]))
        with pytest.raises(SeparationSuspected):
            pilot_estimate(LogisticFamily(), data, [0, 1, 2])

    def test_unmeasured_pilot_rows_named_by_full_data_index(self):
        y = np.array([1.0, 0.0, np.nan, 1.0, 0.0, np.nan, 1.0, 0.0])
        data = Dataset(x=np.column_stack([np.ones(8), np.arange(8.0)]), y=y)
        with pytest.raises(MissingResponses) as info:
            pilot_estimate(LogisticFamily(), data, [5, 0, 1, 2, 5])
        assert info.value.rows == [2, 5]

    def test_weighted_pilot_uses_inverse_probabilities(self, logistic_data, rng):
        data, _ = logistic_data
        indices, probabilities = case_control_pilot(data.y, 300, rng)
        pilot = pilot_estimate(LogisticFamily(), data, indices, pilot_probabilities=probabilities)
        weights = 1.0 / (data.n * probabilities)
        expected = fisher_info(LogisticFamily(), data.subset(indices).covariates_only(), pilot.beta_p, weights)
        np.testing.assert_allclose(pilot.phi_p, expected, atol=1e-14)


class TestCaseControl:
    def test_balanced_marginal_is_uniform(self):
        probabilities = case_control_pilot_probabilities([1, 0, 0, 1, 1], p_m=0.5)
        np.testing.assert_allclose(probabilities, np.full(5, 0.2), atol=1e-15)

    def test_hand_computed(self):
        probabilities = case_control_pilot_probabilities([1, 0, 0, 0], p_m=0.25)
        np.testing.assert_allclose(probabilities, [0.5, 1 / 6, 1 / 6, 1 / 6], atol=1e-15)

    def test_default_marginal_balances_classes(self):
        y = np.array([1.0] * 10 + [0.0] * 90)
        probabilities = case_control_pilot_probabilities(y)
        assert probabilities[y == 1].sum() == pytest.approx(0.5, abs=1e-12)
        assert probabilities.sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("p_m", [0.0, 1.0])
    def test_degenerate(self, p_m):
        with pytest.raises(DegenerateMarginal):
            case_control_pilot_probabilities([0, 1], p_m=p_m)


class TestProbabilities:
    def test_identical_rows(self):
        data = Dataset(x=np.array([[1.0, 2.0], [1.0, 2.0]]))
        plan = os_probabilities(LinearFamily(), data, _pilot([0.0, 0.0], np.eye(2)), Criterion.a_opt())
        np.testing.assert_allclose(plan.probabilities, [0.5, 0.5], atol=1e-15)

    @pytest.mark.parametrize("criterion", [Criterion.a_opt(), Criterion.l_opt()])
    def test_one_dimensional_hand_values(self, criterion):
        data = Dataset(x=np.array([[1.0], [2.0], [3.0]]))
        plan = os_probabilities(LinearFamily(), data, _pilot([0.0], [[14.0 / 3.0]]), criterion)
        np.testing.assert_allclose(plan.probabilities, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)

    def test_general_reductions(self, rng):
        x = rng.standard_normal((40, 3))
        data = Dataset(x=x)
        beta = np.array([0.2, -0.4, 0.1])
        phi = fisher_info(LogisticFamily(), data, beta)
        pilot = _pilot(beta, phi)
        family = LogisticFamily()
        a_plan = os_probabilities(family, data, pilot, Criterion.a_opt())
        l_plan = os_probabilities(family, data, pilot, Criterion.l_opt())
        np.testing.assert_allclose(
            os_probabilities(family, data, pilot, Criterion.general(np.eye(3))).probabilities,
            a_plan.probabilities, atol=1e-10,
        )
        np.testing.assert_allclose(
            os_probabilities(family, data, pilot, Criterion.general(phi)).probabilities,
            l_plan.probabilities, atol=1e-10,
        )
        np.testing.assert_allclose(
            os_probabilities(family, data, pilot, Criterion.general(7.5 * phi)).probabilities,
            os_probabilities(family, data, pilot, Criterion.general(phi)).probabilities,
            rtol=1e-12,
        )
        for plan in (a_plan, l_plan):
            assert abs(plan.probabilities.sum() - 1.0) < 1e-12
            assert np.all(plan.probabilities > 0)

    def test_weight_bookkeeping(self, rng):
        x = rng.standard_normal((30, 2))
        data = Dataset(x=x)
        pilot = _pilot([0.5, 0.5], fisher_info(LogisticFamily(), data, [0.5, 0.5]))
        weights = optimal_weights(LogisticFamily(), x, pilot.beta_p, pilot.phi_p, Criterion.a_opt())
        plan = os_probabilities(LogisticFamily(), data, pilot, Criterion.a_opt())
        assert plan.m_hat == pytest.approx(weights.mean(), rel=1e-14)
        np.testing.assert_allclose(plan.weights, weights, rtol=1e-12)

    def test_row_permutation(self, rng):
        x = rng.standard_normal((20, 2))
        order = rng.permutation(20)
        pilot = _pilot([0.0, 0.0], x.T @ x / 20)
        plan = os_probabilities(LinearFamily(), Dataset(x=x), pilot, Criterion.a_opt())
        permuted = os_probabilities(LinearFamily(), Dataset(x=x[order]), pilot, Criterion.a_opt())
        np.testing.assert_allclose(permuted.probabilities, plan.probabilities[order], atol=1e-15)

    def test_zero_weights(self):
        with pytest.raises(ZeroWeights):
            plan_from_weights(np.zeros(3), Criterion.a_opt())

    def test_excluding_keeps_weight_scale(self):
        plan = plan_from_weights(np.array([1.0, 2.0, 3.0, 4.0]), Criterion.a_opt())
        remaining = plan.excluding([3])
        np.testing.assert_allclose(remaining.probabilities, [1 / 6, 2 / 6, 3 / 6, 0.0], atol=1e-15)
        np.testing.assert_allclose(remaining.weights, [1.0, 2.0, 3.0, 0.0], atol=1e-14)

    def test_plan_must_sum_to_one(self):
        with pytest.raises(ValueError):
            SamplingPlan(probabilities=np.array([0.5, 0.4]), criterion=Criterion.a_opt(), m_hat=1.0)


class TestSampling:
    def test_point_mass(self, rng):
        plan = plan_from_weights(np.array([2.0]), Criterion.a_opt())
        draw = sample_with_replacement(plan, 5, rng)
        np.testing.assert_array_equal(draw.indices, np.zeros(5))
        np.testing.assert_array_equal(draw.probabilities_at_draw, np.ones(5))

    @pytest.mark.parametrize("method", ["alias", "inverse_cdf"])
    def test_two_point_counts(self, method):
        rng = np.random.default_rng(11)
        plan = plan_from_weights(np.array([1.0, 1.0]), Criterion.a_opt())
        r = 100_000
        draw = sample_with_replacement(plan, r, rng, method=method)
        assert draw.r == r
        assert abs(np.sum(draw.indices == 0) - r / 2) < 4 * np.sqrt(r * 0.25)
        np.testing.assert_array_equal(draw.probabilities_at_draw, plan.probabilities[draw.indices])

    def test_alias_frequencies(self):
        rng = np.random.default_rng(5)
        probabilities = np.array([0.1, 0.2, 0.3, 0.4])
        counts = np.bincount(AliasTable(probabilities).draw(200_000, rng), minlength=4) / 200_000
        np.testing.assert_allclose(counts, probabilities, atol=0.005)

    def test_never_draws_zero_probability_rows(self, rng):
        plan = plan_from_weights(np.array([1.0, 0.0, 3.0, 0.0]), Criterion.a_opt())
        for method in ("alias", "inverse_cdf"):
            draw = sample_with_replacement(plan, 10_000, rng, method=method)
            assert set(np.unique(draw.indices).tolist()) <= {0, 2}

    def test_unknown_method(self, rng):
        plan = plan_from_weights(np.array([1.0, 1.0]), Criterion.a_opt())
        with pytest.raises(ValueError):
            sample_with_replacement(plan, 3, rng, method="systematic")
