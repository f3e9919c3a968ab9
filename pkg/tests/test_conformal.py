import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autofuse.conformal import (
    AcquisitionCurve,
    ConformalCalibration,
    ConformalConfig,
    acquisition_curve,
    calibrate,
    coverage,
    fit_conformal,
    predict_set,
    predict_set_matrix,
    raps_score,
    raps_score_matrix,
)
from autofuse.exceptions import InvalidProbability, LengthMismatch
from autofuse.synthetic import EXCHANGEABLE_CELLS


class TestRapsScore:
    def test_hand_example_rank_one(self):
        assert raps_score([0.6, 0.3, 0.1], 0, lam=0.0, k_reg=1) == pytest.approx(0.6)

    def test_hand_example_rank_three_with_penalty(self):
        assert raps_score([0.6, 0.3, 0.1], 2, lam=0.1, k_reg=1) == pytest.approx(1.2)

    def test_one_hot_scores_one(self):
        assert raps_score([0.0, 1.0, 0.0], 1, lam=0.7, k_reg=1) == pytest.approx(1.0)

    def test_tie_break_by_class_index(self):
        # equal probabilities: class 0 ranks first, class 1 second
        p = [0.5, 0.5]
        assert raps_score(p, 0, lam=0.0, k_reg=1) == pytest.approx(0.5)
        assert raps_score(p, 1, lam=0.0, k_reg=1) == pytest.approx(1.0)

    def test_off_simplex_rejected(self):
        with pytest.raises(InvalidProbability):
            raps_score([0.9, 0.3], 0, lam=0.0, k_reg=1)

    def test_matrix_agrees_with_scalar(self, rng):
        P = rng.dirichlet(np.ones(4), size=20)
        S = raps_score_matrix(P, lam=0.05, k_reg=2)
        for i in range(20):
            for c in range(4):
                assert S[i, c] == pytest.approx(raps_score(P[i], c, 0.05, 2), abs=1e-12)


class TestCalibrate:
    def test_nine_scores(self):
        scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        assert calibrate(scores, alpha=0.1) == pytest.approx(0.9)

    def test_fallback_to_infinity(self):
        assert calibrate([0.5], alpha=0.1) == float("inf")

    def test_constant_scores(self):
        assert calibrate([0.42] * 25, alpha=0.1) == pytest.approx(0.42)

    def test_permutation_invariance(self, rng):
        scores = rng.random(100)
        tau = calibrate(scores, 0.15)
        assert calibrate(rng.permutation(scores), 0.15) == tau


class TestPredictSet:
    def _calib(self, tau, lam=0.0, k_reg=1):
        return ConformalCalibration(ConformalConfig(alpha=0.1, lam=lam, k_reg=k_reg), tau, 100)

    def test_hand_example(self):
        sets = predict_set([0.6, 0.3, 0.1], self._calib(0.95))
        assert sets.tolist() == [0, 1]

    def test_infinite_tau_gives_full_set(self):
        sets = predict_set([0.6, 0.3, 0.1], self._calib(float("inf")))
        assert sets.tolist() == [0, 1, 2]

    def test_one_hot_included_when_tau_at_least_one(self):
        sets = predict_set([0.0, 1.0, 0.0], self._calib(1.0, lam=0.3))
        assert 1 in sets.tolist()

    def test_nested_in_tau(self, rng):
        P = rng.dirichlet(np.ones(5), size=30)
        for tau1, tau2 in [(0.4, 0.8), (0.7, 1.2), (0.2, 2.0)]:
            small = predict_set_matrix(P, self._calib(tau1, lam=0.05, k_reg=2))
            large = predict_set_matrix(P, self._calib(tau2, lam=0.05, k_reg=2))
            assert not (small & ~large).any()

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_larger_lambda_never_enlarges_sets(self, seed):
        rng = np.random.default_rng(seed)
        P = rng.dirichlet(np.ones(4), size=8)
        tau = float(rng.uniform(0.3, 1.4))
        small_lam = predict_set_matrix(P, self._calib(tau, lam=0.01, k_reg=1))
        large_lam = predict_set_matrix(P, self._calib(tau, lam=0.5, k_reg=1))
        assert not (large_lam & ~small_lam).any()


class TestCoverage:
    def test_full_sets(self):
        sets = [np.arange(3)] * 10
        assert coverage(sets, np.random.default_rng(0).integers(0, 3, 10)) == 1.0

    def test_empty_sets(self):
        sets = [np.array([], dtype=int)] * 5
        assert coverage(sets, np.zeros(5, dtype=int)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            coverage([np.array([0])], np.array([0, 1]))

    def test_marginal_coverage_monte_carlo(self):
        """Split-conformal coverage concentrates at or above 1 - alpha."""
        covs = []
        for seed in range(10):
            rng = np.random.default_rng(seed)
            m = len(EXCHANGEABLE_CELLS)
            cells = rng.integers(0, m, size=900)
            P = np.stack([np.roll(EXCHANGEABLE_CELLS[c], c % 3) for c in cells])
            y = (rng.random(900)[:, None] > np.cumsum(P, axis=1)).sum(axis=1)
            calibration = fit_conformal(P[:300], y[:300], ConformalConfig(alpha=0.1))
            sets = predict_set_matrix(P[300:], calibration)
            covs.append(float(sets[np.arange(600), y[300:]].mean()))
        assert np.mean(covs) >= 0.88


class TestAcquisition:
    def _setup(self, n=300, seed=0):
        """Known ambiguous half: tabular is 50/50 on classes {2,3}."""
        rng = np.random.default_rng(seed)
        pair = rng.integers(0, 2, size=n)
        within = rng.integers(0, 2, size=n)
        y = 2 * pair + within
        P_tab = np.zeros((n, 4))
        for i in range(n):
            if pair[i] == 0:
                P_tab[i] = [0.94, 0.02, 0.02, 0.02]
                if within[i] == 1:
                    P_tab[i] = [0.02, 0.94, 0.02, 0.02]
            else:
                P_tab[i] = [0.02, 0.02, 0.48, 0.48]
        P_mm = np.full((n, 4), 0.02)
        P_mm[np.arange(n), y] = 0.94
        return P_tab, P_mm, y

    def test_endpoints_exact(self):
        P_tab, P_mm, y = self._setup()
        from autofuse.metrics import metric_fn

        acc = metric_fn("accuracy")
        for policy in ("uncertainty", "random"):
            curve = acquisition_curve(
                P_tab[:200], P_mm[:200], y[:200], P_tab[200:], y[200:],
                ConformalConfig(alpha=0.1), [0.0, 0.5, 1.0], policy=policy, seed=3,
            )
            assert curve.values[0] == acc(y[:200], P_tab[:200])
            assert curve.values[-1] == acc(y[:200], P_mm[:200])

    def test_uncertainty_policy_dominates_on_ambiguous_half(self):
        P_tab, P_mm, y = self._setup(n=600, seed=1)
        test = slice(0, 400)
        cal = slice(400, 600)
        config = ConformalConfig(alpha=0.1)
        curves = {}
        for policy in ("uncertainty", "random"):
            curves[policy] = acquisition_curve(
                P_tab[test], P_mm[test], y[test], P_tab[cal], y[cal],
                config, [0.0, 0.6, 1.0], policy=policy, seed=5,
            )
        base = curves["uncertainty"].values[0]
        full = curves["uncertainty"].values[-1]
        gain = full - base
        assert (curves["uncertainty"].values[1] - base) >= 0.95 * gain
        assert (curves["random"].values[1] - base) <= 0.75 * gain

    def test_fraction_grid_validation(self):
        with pytest.raises(ValueError):
            AcquisitionCurve(policy="uncertainty", fractions=[0.0, 0.5], values=[1, 2], metric="accuracy")
        with pytest.raises(ValueError):
            AcquisitionCurve(policy="uncertainty", fractions=[0.0, 0.6, 0.3, 1.0], values=[1, 2, 3, 4], metric="accuracy")


def test_config_validation():
    with pytest.raises(ValueError):
        ConformalConfig(alpha=0.0)
    with pytest.raises(ValueError):
        ConformalConfig(lam=-0.1)
    with pytest.raises(ValueError):
        ConformalConfig(k_reg=0)
    with pytest.raises(ValueError):
        ConformalConfig(randomized=True)
