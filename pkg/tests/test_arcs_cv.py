import numpy as np
import pytest

from arcs_cv import (CvConfig, CvControllerState, HypothesisMoments, alt_moments, arcs_cv_step, cv_error_bound,
                     null_moments, select_hypothesis)
from conftest import analytic_phase_diagram
from measurement import CrossValidationMatrix, MeasurementEnsemble, calibrate_background, measure_frame
from phase_diagram import LookupPolicy
from signal_model import Frame, devectorize

TAU = 0.1
SIGMA_B_SQ = (4.0 / 255.0) ** 2


def test_null_moments_count_neglected_background_entries():
    mu0, sigma0_sq = null_moments(10, 100, SIGMA_B_SQ)
    assert mu0 == pytest.approx(90 * SIGMA_B_SQ)
    assert sigma0_sq == pytest.approx(180 * SIGMA_B_SQ ** 2)


def test_alt_moments_constants_at_tau_one_tenth():
    mu, sigma_sq = alt_moments(1, 0, 1, 0.0, TAU)
    assert mu == pytest.approx(0.37)
    assert sigma_sq == pytest.approx(0.22222 - 0.37 ** 2, abs=1e-4)


def test_alt_moments_match_monte_carlo_with_nothing_retained():
    n, k, trials = 200, 20, 20_000
    rng = np.random.default_rng(5)
    energies = np.empty(trials)
    for trial in range(trials):
        magnitudes = rng.uniform(TAU, 1.0, size=k)
        noise = rng.normal(0.0, np.sqrt(SIGMA_B_SQ), size=n - k)
        energies[trial] = np.sum(magnitudes ** 2) + np.sum(noise ** 2)
    mu, sigma_sq = alt_moments(k, 0, n, SIGMA_B_SQ, TAU)
    assert np.mean(energies) == pytest.approx(mu, rel=0.01)
    assert np.var(energies) == pytest.approx(sigma_sq, rel=0.05)


def test_alt_moments_require_k_above_s_hat():
    with pytest.raises(ValueError):
        alt_moments(5, 5, 100, SIGMA_B_SQ, TAU)


def test_guard_returns_null_hypothesis_below_mu0():
    moments = HypothesisMoments.build(4, 100, SIGMA_B_SQ, TAU)
    assert select_hypothesis(0.5 * moments.mu0, moments) == 0


def test_selection_lands_near_the_matching_mean():
    moments = HypothesisMoments.build(0, 100, SIGMA_B_SQ, TAU)
    target = moments.mu[moments.k_values == 30][0]
    assert abs(select_hypothesis(target, moments) - 30) <= 2


def test_cv_config_needs_enough_rows():
    with pytest.raises(ValueError):
        CvConfig(0.5, 0.1, 40, TAU, SIGMA_B_SQ, 256)
    assert CvConfig.with_minimum_rows(0.5, 0.1, TAU, SIGMA_B_SQ, 256).rows == 52


def test_cv_bound_failure_rate_at_minimum_rows():
    rng = np.random.default_rng(2)
    f = rng.normal(size=64)
    f_hat = f + rng.normal(scale=0.3, size=64)
    error_sq = np.sum((f - f_hat) ** 2)
    failures = 0
    for seed in range(300):
        psi = CrossValidationMatrix(52, 64, seed)
        if cv_error_bound(psi.apply(f), psi, f_hat, 0.5) < error_sq:
            failures += 1
    assert failures / 300 <= 0.13


def _sparse_scene(n_side=16, sparsity=10, seed=0):
    rng = np.random.default_rng(seed)
    n = n_side * n_side
    background = np.full((n_side, n_side), 0.5)
    f = np.zeros(n)
    support = rng.choice(n, size=sparsity, replace=False)
    f[support] = rng.uniform(0.15, 0.45, size=sparsity) * rng.choice([-1.0, 1.0], size=sparsity)
    return background, f


def _controller(s_hat, n=256):
    config = CvConfig.with_minimum_rows(0.5, 0.1, TAU, SIGMA_B_SQ, n)
    return CvControllerState(s_hat=s_hat, phase_diagram=analytic_phase_diagram(n),
                             policy=LookupPolicy(tau_d=0.9, m_floor=52), config=config)


def _step(state, background, f):
    ensemble = MeasurementEnsemble('gaussian', f.size, seed=7)
    psi = CrossValidationMatrix(state.config.rows, f.size, seed=13)
    calibration = calibrate_background([Frame(background)], ensemble, psi)
    rows = state.rows_for_current()
    y, chi = measure_frame(ensemble.operator(rows), Frame(background + devectorize(f)), psi)
    return rows, arcs_cv_step(state, y, chi, calibration, ensemble, psi)


def test_step_keeps_a_correct_estimate():
    background, f = _sparse_scene()
    rows, result = _step(_controller(10), background, f)
    assert rows == 112
    assert result.diagnostics['k_star_star'] == 0
    assert result.s_hat_next == 10
    assert result.rows_next == 112
    np.testing.assert_allclose(result.f_hat, f, atol=1e-4)
    assert result.error is None


def test_step_from_zero_raises_the_estimate():
    background, f = _sparse_scene()
    rows, result = _step(_controller(0), background, f)
    assert rows == 52
    assert not np.any(result.f_hat)
    assert result.diagnostics['k_star_star'] > 0
    assert result.s_hat_next > 0


def test_step_on_background_only_frame_stays_at_zero():
    background, _ = _sparse_scene()
    rows, result = _step(_controller(0), background, np.zeros(256))
    assert result.diagnostics['k_star_star'] == 0
    assert result.s_hat_next == 0
    assert result.rows_next == 52


def test_alt_moments_over_estimate_when_the_largest_entries_are_retained():
    n, k, s_hat, trials = 200, 20, 10, 5_000
    rng = np.random.default_rng(6)
    energies = np.empty(trials)
    for trial in range(trials):
        magnitudes = np.sort(rng.uniform(TAU, 1.0, size=k))
        noise = rng.normal(0.0, np.sqrt(SIGMA_B_SQ), size=n - k)
        energies[trial] = np.sum(magnitudes[:k - s_hat] ** 2) + np.sum(noise ** 2)
    mu, _ = alt_moments(k, s_hat, n, SIGMA_B_SQ, TAU)
    assert np.mean(energies) < mu


def test_null_hypothesis_recounts_on_the_untruncated_estimate():
    # background variance large enough that the five dropped entries stay under mu0
    background, f = _sparse_scene()
    config = CvConfig(0.5, 0.1, 52, TAU, 0.009, 256)
    state = CvControllerState(s_hat=5, phase_diagram=analytic_phase_diagram(256),
                              policy=LookupPolicy(tau_d=0.9, m_floor=52), config=config)
    rows, result = _step(state, background, f)
    assert rows == 80
    assert result.diagnostics['k_star_star'] == 0
    assert np.count_nonzero(result.f_hat) == 5
    assert result.s_hat_next == 10
    assert result.rows_next == 112


def test_step_with_an_overestimate_comes_down_to_the_support():
    background, f = _sparse_scene()
    rows, result = _step(_controller(25), background, f)
    assert rows >= 160
    assert result.diagnostics['k_star_star'] == 0
    assert result.s_hat_next == 10
    assert result.rows_next == 112


def test_step_with_an_underestimate_moves_up():
    background, f = _sparse_scene()
    rows, result = _step(_controller(5), background, f)
    assert rows == 80
    assert result.diagnostics['k_star_star'] > 5
    assert result.s_hat_next > 5
    assert result.rows_next > 80


def test_cv_bound_holds_for_random_foregrounds():
    rng = np.random.default_rng(11)
    trials, rho = 1000, 0.1
    failures = 0
    for seed in range(trials):
        f = np.zeros(256)
        support = rng.choice(256, size=int(rng.integers(1, 60)), replace=False)
        f[support] = rng.uniform(TAU, 1.0, size=support.size) * rng.choice([-1.0, 1.0], size=support.size)
        f_hat = f.copy()
        f_hat[support[: support.size // 2]] = 0.0
        f_hat += rng.normal(scale=0.01, size=256)
        error_sq = np.sum((f - f_hat) ** 2)
        psi = CrossValidationMatrix(52, 256, seed)
        if cv_error_bound(psi.apply(f), psi, f_hat, 0.5) < error_sq:
            failures += 1
    assert failures / trials <= rho + 3 * np.sqrt(rho * (1 - rho) / trials)
