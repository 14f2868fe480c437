import numpy as np
import pytest

import scalelink as sl
from scalelink import (
    DatasetId,
    MetricId,
    NumericalError,
    ScalingLaw,
    ValidationError,
    fit_law,
    optimal_model_size,
    predict_loss,
    r_squared,
)
from scalelink.lawfit import (
    DecayCurve,
    fit_decay_curve,
    law_objective,
    predict_decay,
)
from scalelink.synthetic import flop_budgets, grid_keys, runs_from_law

DS = DatasetId("webtext-a")
MT = MetricId("ce", "train")

# Wide per-budget spread: a factor-64 size range at each budget separates the
# two loss terms well enough that sigma=0.01 noise moves the exponents < 0.02.
WIDE_SPREAD = 64.0


def _grid_runs(law, noise_sigma=0.0, seed=0, spread=WIDE_SPREAD):
    keys = grid_keys(law, flop_budgets(), spread=spread)
    rng = np.random.default_rng(seed)
    return runs_from_law(law, keys, DS, MT, noise_sigma=noise_sigma, rng=rng)


class TestPredictLoss:
    def test_reference_point_frozen_value(self, ref_law):
        # 750M params, 10.75B tokens, deep in the grid interior.
        got = predict_loss(ref_law, 7.5e8, 1.075e10)
        assert got == pytest.approx(2.4454514424705276, rel=1e-12)
        assert 2.2 < got < 3.6

    def test_equal_term_ratios_collapse_to_powers_of_two(self):
        law = ScalingLaw(form="nested", E=0.5, A=1e8, B=1e9, alpha=1.0, beta=1.0)
        # A/N = B/D = 1 makes the bracket exactly 2.
        assert predict_loss(law, 1e8, 1e9) == pytest.approx(2.5, rel=1e-14)

    def test_nested_equals_additive_structure_when_exponents_match(self, ref_law):
        law = ScalingLaw(form="nested", E=1.97, A=6.68e7, B=8.90e8, alpha=0.46, beta=0.46)
        n, d = 3.1e8, 7.7e9
        direct = 1.97 + (6.68e7 / n + 8.90e8 / d) ** 0.46
        assert predict_loss(law, n, d) == pytest.approx(direct, rel=1e-13)

    def test_additive_form(self):
        law = ScalingLaw(form="additive", E=1.8, A=2.1e7, B=3.3e8, alpha=0.45, beta=0.46)
        n, d = 5e8, 2e10
        direct = 1.8 + 2.1e7 / n**0.45 + 3.3e8 / d**0.46
        assert predict_loss(law, n, d) == pytest.approx(direct, rel=1e-13)

    def test_strictly_decreasing_in_both_sizes(self, ref_law):
        n = np.geomspace(1e6, 1e12, 40)
        along_n = predict_loss(ref_law, n, 1e10)
        along_d = predict_loss(ref_law, 1e9, n)
        assert np.all(np.diff(along_n) < 0)
        assert np.all(np.diff(along_d) < 0)

    def test_approaches_floor_in_joint_limit(self, ref_law):
        gap = predict_loss(ref_law, 1e30, 1e30) - ref_law.E
        assert 0 < gap < 1e-9

    def test_vector_input_matches_scalar(self, ref_law):
        n = np.array([1e8, 1e9])
        d = np.array([1e10, 1e10])
        vec = predict_loss(ref_law, n, d)
        assert vec[0] == predict_loss(ref_law, 1e8, 1e10)
        assert vec[1] == predict_loss(ref_law, 1e9, 1e10)

    def test_rejects_nonpositive_sizes(self, ref_law):
        with pytest.raises(ValidationError):
            predict_loss(ref_law, 0.0, 1e10)


class TestFitLaw:
    def test_noiseless_round_trip(self, ref_law, small_cfg):
        runs = _grid_runs(ref_law)
        fit = fit_law(runs, "nested", small_cfg)
        assert fit.alpha == pytest.approx(ref_law.alpha, abs=0.005)
        assert fit.beta == pytest.approx(ref_law.beta, abs=0.005)
        assert fit.E == pytest.approx(ref_law.E, rel=0.005)
        assert np.log(fit.A) == pytest.approx(np.log(ref_law.A), rel=0.005)
        assert np.log(fit.B) == pytest.approx(np.log(ref_law.B), rel=0.005)

    def test_noisy_round_trip_worst_case_over_seeds(self, ref_law, small_cfg):
        # Cheap three-seed rehearsal; the full 20-seed sweep runs in the
        # acceptance suite at the same tolerance.
        worst = 0.0
        for seed in range(3):
            runs = _grid_runs(ref_law, noise_sigma=0.01, seed=seed)
            fit = fit_law(runs, "nested", small_cfg)
            worst = max(worst, abs(fit.alpha - ref_law.alpha), abs(fit.beta - ref_law.beta))
        assert worst <= 0.02

    def test_additive_fit_on_nested_data_recovers_floor(self, ref_law, small_cfg):
        # The two forms agree wherever one loss term dominates, so on a wide
        # rectangle of model sizes x token counts most points sit deep in one
        # limb and the additive fit lands near the true floor despite the
        # misspecification. IsoFLOP-slice designs concentrate weight where the
        # forms disagree and push the fitted floor above the 0.05 band.
        ns = np.geomspace(1e6, 1e10, 8)
        ds = np.geomspace(1e9, 1e12, 11)
        keys = [(int(round(n)), int(round(d))) for n in ns for d in ds]
        runs = runs_from_law(ref_law, keys, DS, MT)
        fit = fit_law(runs, "additive", small_cfg)
        assert fit.form == "additive"
        assert fit.E == pytest.approx(ref_law.E, abs=0.05)

    def test_refit_of_fitted_law_reaches_zero_objective(self, ref_law, small_cfg):
        fitted = fit_law(_grid_runs(ref_law, noise_sigma=0.01), "nested", small_cfg)
        exact = _grid_runs(fitted)
        refit = fit_law(exact, "nested", small_cfg)
        assert refit.fit_meta.objective <= 1e-8

    def test_deterministic(self, ref_law, small_cfg):
        runs = _grid_runs(ref_law, noise_sigma=0.01)
        a = fit_law(runs, "nested", small_cfg)
        b = fit_law(runs, "nested", small_cfg)
        assert (a.E, a.A, a.B, a.alpha, a.beta) == (b.E, b.A, b.B, b.alpha, b.beta)

    def test_fit_meta_reports_grid_size(self, ref_law, small_cfg):
        fit = fit_law(_grid_runs(ref_law), "nested", small_cfg)
        assert fit.fit_meta.n_starts == small_cfg.grid.n_starts == 192
        assert fit.fit_meta.n_points == 88

    def test_default_grid_size_is_4704(self):
        assert sl.StartGrid().n_starts == 4704

    def test_rejects_fewer_than_six_records(self, ref_law):
        runs = _grid_runs(ref_law)[:5]
        with pytest.raises(ValidationError):
            fit_law(runs, "nested")

    def test_rejects_single_model_size(self, ref_law, small_cfg):
        keys = [(10**7, 10**9 + i) for i in range(8)]
        runs = runs_from_law(ref_law, keys, DS, MT)
        with pytest.raises(ValidationError):
            fit_law(runs, "nested", small_cfg)

    def test_rejects_mixed_datasets(self, ref_law, small_cfg):
        keys = grid_keys(ref_law, flop_budgets())[:8]
        runs = runs_from_law(ref_law, keys[:4], DS, MT) + runs_from_law(
            ref_law, keys[4:], DatasetId("webtext-b"), MT
        )
        with pytest.raises(ValidationError):
            fit_law(runs, "nested", small_cfg)


class TestLawObjective:
    def test_gradient_matches_finite_differences(self, ref_law):
        runs = _grid_runs(ref_law, noise_sigma=0.01)
        n = np.array([r.n_params for r in runs], dtype=float)
        d = np.array([r.n_tokens for r in runs], dtype=float)
        y = np.array([r.loss for r in runs])
        rng = np.random.default_rng(1)
        for form in ("nested", "additive"):
            for _ in range(10):
                theta = np.array(
                    [
                        rng.uniform(0.1, 2.5),
                        rng.uniform(np.log(1e5), np.log(1e9)),
                        rng.uniform(np.log(1e7), np.log(1e11)),
                        rng.uniform(0.15, 0.8),
                        rng.uniform(0.15, 0.8),
                    ]
                )
                _, grad = law_objective(theta, n, d, y, form)
                fd = np.empty_like(grad)
                for i in range(5):
                    h = 1e-6 * max(abs(theta[i]), 1e-3)
                    hi, lo = theta.copy(), theta.copy()
                    hi[i] += h
                    lo[i] -= h
                    fd[i] = (
                        law_objective(hi, n, d, y, form)[0]
                        - law_objective(lo, n, d, y, form)[0]
                    ) / (2 * h)
                assert np.linalg.norm(grad - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-12)


class TestOptimalModelSize:
    def test_reference_budget_frozen_value(self, ref_law):
        got = optimal_model_size(ref_law, 4.84e19)
        assert got == pytest.approx(8.431343675986619e8, rel=1e-10)

    def test_matches_brute_force_frontier(self, ref_law):
        c = 1e20
        n_grid = np.geomspace(1e7, 1e11, 4001)
        losses = predict_loss(ref_law, n_grid, c / (6.0 * n_grid))
        brute = n_grid[np.argmin(losses)]
        assert optimal_model_size(ref_law, c) == pytest.approx(brute, rel=2e-3)

    def test_budget_exponent_is_half_when_exponents_match(self):
        law = ScalingLaw(form="nested", E=1.9, A=5e7, B=8e8, alpha=0.5, beta=0.5)
        ratio = optimal_model_size(law, 1e21) / optimal_model_size(law, 1e19)
        assert ratio == pytest.approx(100**0.5, rel=1e-12)

    def test_exponent_value_for_published_pair(self):
        # a = beta/(alpha+beta) for (0.46, 0.45) rounds to the familiar 0.5.
        law = ScalingLaw(form="nested", E=1.82, A=2.14e7, B=3.29e8, alpha=0.45, beta=0.46)
        a = np.log(optimal_model_size(law, 1e21) / optimal_model_size(law, 1e20)) / np.log(10)
        assert a == pytest.approx(0.46 / 0.91, rel=1e-10)
        assert abs(a - 0.505) < 0.001

    def test_scales_linearly_in_g_factor(self, ref_law):
        # N*(C) = (G*C/6)^a means doubling C multiplies N* by 2^a.
        a = 0.46 / (0.41 + 0.46)
        ratio = optimal_model_size(ref_law, 2e19) / optimal_model_size(ref_law, 1e19)
        assert ratio == pytest.approx(2**a, rel=1e-12)

    def test_additive_form_rejected(self):
        law = ScalingLaw(form="additive", E=1.8, A=2e7, B=3e8, alpha=0.45, beta=0.46)
        with pytest.raises(ValidationError):
            optimal_model_size(law, 1e20)

    def test_rejects_nonpositive_budget(self, ref_law):
        with pytest.raises(ValidationError):
            optimal_model_size(ref_law, 0.0)


class TestRSquared:
    def test_perfect_predictor_scores_one(self, ref_law):
        runs = _grid_runs(ref_law)
        assert r_squared(ref_law, runs) == pytest.approx(1.0, abs=1e-12)

    def test_mean_predictor_scores_zero(self, ref_law):
        runs = _grid_runs(ref_law)
        mean = np.mean([r.loss for r in runs])
        assert r_squared(lambda n, d: mean, runs) == pytest.approx(0.0, abs=1e-12)

    def test_skyline_regime(self, ref_law, small_cfg):
        runs = _grid_runs(ref_law, noise_sigma=0.01)
        fit = fit_law(runs, "nested", small_cfg)
        assert r_squared(fit, runs) >= 0.99

    def test_constant_losses_rejected(self):
        keys = [(10**7 * (i + 1), 10**9) for i in range(6)]
        runs = [
            sl.RunRecord(train_dataset=DS, n_params=n, n_tokens=d, metric=MT, loss=3.0)
            for n, d in keys
        ]
        with pytest.raises(ValidationError):
            r_squared(lambda n, d: 3.0, runs)


class TestDecayCurve:
    def test_round_trip(self):
        flops = np.geomspace(1e17, 1e20, 8)
        truth = DecayCurve(E=2.05, F=8.1e3, gamma=0.22)
        losses = predict_decay(truth, flops)
        fit = fit_decay_curve(flops, losses)
        assert fit.E == pytest.approx(truth.E, abs=1e-4)
        assert fit.gamma == pytest.approx(truth.gamma, abs=1e-4)
        assert np.log(fit.F) == pytest.approx(np.log(truth.F), rel=1e-4)

    def test_prediction_decreasing_in_compute(self):
        curve = DecayCurve(E=2.0, F=1e4, gamma=0.3)
        c = np.geomspace(1e16, 1e22, 30)
        assert np.all(np.diff(predict_decay(curve, c)) < 0)

    def test_rejects_fewer_than_four_budgets(self):
        flops = np.array([1e17, 1e18, 1e18, 1e17])
        losses = np.array([3.0, 2.8, 2.8, 3.0])
        with pytest.raises(ValidationError):
            fit_decay_curve(flops, losses)

    def test_curve_validation(self):
        with pytest.raises(ValidationError):
            DecayCurve(E=-0.1, F=1e4, gamma=0.3)
        with pytest.raises(ValidationError):
            DecayCurve(E=2.0, F=0.0, gamma=0.3)


class TestNumericalGuards:
    def test_overflow_params_raise_numerical_error(self):
        law = ScalingLaw(form="nested", E=1.0, A=1e60, B=1e60, alpha=2.9, beta=2.9)
        with pytest.raises(NumericalError):
            predict_loss(law, 1e-300 + 1e-301, 1.0)
