import math

import numpy as np
import pytest

from arcs_lrt import (LrtConfig, LrtControllerState, SparsityPmf, TemplateOutline, TrackDynamics, WarpParams,
                      arcs_lrt_step, blob_track, blob_tracks, block_center, discretize_pmf, downsample,
                      expected_cost, minimize_cost, predict_sparsity, recovery_constant, unscented_moments,
                      warp_area, warp_to_sparsity)
from conftest import analytic_phase_diagram
from measurement import MeasurementEnsemble, calibrate_background, measure_frame
from phase_diagram import LookupPolicy
from signal_model import Frame, devectorize

SIGMA_B_SQ = (4.0 / 255.0) ** 2


def _config(n=256, **overrides):
    values = dict(penalty=0.15, downsample_factor=2, tau=0.1, sigma_b_sq=SIGMA_B_SQ, ambient_dim=n)
    values.update(overrides)
    return LrtConfig(**values)


def test_recovery_constant_value_and_monotonicity():
    assert recovery_constant(0.25) == pytest.approx(1.67964, abs=1e-4)
    values = [recovery_constant(d) for d in (0.05, 0.1, 0.2, 0.3, 0.4)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        recovery_constant(0.5)


def test_warp_to_sparsity_examples():
    template = TemplateOutline()
    assert warp_to_sparsity(WarpParams(4, 3, 10, 20), template, 2) == 48
    assert warp_to_sparsity(WarpParams(1, 1, 0, 0), template, 1) == 1
    assert warp_to_sparsity(WarpParams(0, 3, 5, 5), template, 2) == 1
    assert warp_to_sparsity(WarpParams(4, 3, 10, 20), template, 2, mode='literal') == 200


def test_template_area_from_corners():
    assert TemplateOutline(((0, 0), (2, 0), (2, 3), (0, 3))).area == 6.0
    with pytest.raises(ValueError):
        TemplateOutline(((0, 0), (1, 1), (2, 2)))


def test_warp_area_rejects_unknown_mode():
    with pytest.raises(ValueError):
        warp_area(np.ones(4), TemplateOutline(), 1, mode='affine')


def test_downsample_block_means_and_centers():
    grid = np.arange(16, dtype=float).reshape(4, 4) / 16.0
    low = downsample(grid, 2)
    np.testing.assert_allclose(low.pixels, [[2.5 / 16, 4.5 / 16], [10.5 / 16, 12.5 / 16]])
    assert block_center(1, 2) == 1.5
    with pytest.raises(ValueError):
        downsample(grid, 3)


def test_blob_track_returns_bounding_box_of_largest_region():
    background = np.zeros((16, 16))
    frame = background.copy()
    frame[7:11, 5:8] = 0.3
    frame[0, 15] = 0.9
    assert blob_track(frame, background, 0.05) == WarpParams(3, 4, 5, 7)
    assert blob_track(background, background, 0.05) is None


def test_blob_tracks_returns_every_region():
    background = np.zeros((16, 16))
    frame = background.copy()
    frame[7:11, 5:8] = 0.3
    frame[0, 15] = 0.9
    frame[12:14, 10:15] = -0.2
    assert blob_tracks(frame, background, 0.05) == [WarpParams(1, 1, 15, 0), WarpParams(3, 4, 5, 7),
                                                    WarpParams(5, 2, 10, 12)]
    assert blob_tracks(background, background, 0.05) == []


def test_unscented_moments_against_monte_carlo():
    track = WarpParams(3.0, 3.0, 2.0, 2.5)
    dynamics = TrackDynamics()
    mean, variance = unscented_moments(track, dynamics, TemplateOutline(), 2)

    rng = np.random.default_rng(0)
    samples = rng.multivariate_normal(track.as_array(), dynamics.covariance, size=200_000)
    areas = 4.0 * np.abs(samples[:, 0] * samples[:, 1])
    assert mean == pytest.approx(np.mean(areas), rel=0.01)
    assert variance == pytest.approx(np.var(areas), rel=0.1)


def test_unscented_moments_track_monte_carlo_for_random_warps():
    dynamics = TrackDynamics()
    rng = np.random.default_rng(8)
    for _ in range(20):
        track = WarpParams(*rng.uniform(3.0, 10.0, size=2), *rng.uniform(0.0, 12.0, size=2))
        mean, variance = unscented_moments(track, dynamics, TemplateOutline(), 2)
        samples = rng.multivariate_normal(track.as_array(), dynamics.covariance, size=100_000)
        areas = 4.0 * np.abs(samples[:, 0] * samples[:, 1])
        assert mean == pytest.approx(np.mean(areas), rel=0.02)
        assert variance == pytest.approx(np.var(areas), rel=0.1)


def test_predicted_sparsity_adds_independent_tracks():
    state = LrtControllerState(s_hat=0, phase_diagram=analytic_phase_diagram(256), policy=LookupPolicy(),
                               config=_config())
    one = predict_sparsity([WarpParams(3, 3, 2, 2)], state)
    two = predict_sparsity([WarpParams(3, 3, 2, 2), WarpParams(3, 3, 2, 2)], state)
    assert two == pytest.approx((2 * one[0], 2 * one[1]))
    assert predict_sparsity([], state) == (0.0, 0.0)


def test_discretized_pmf_is_normalized():
    q = discretize_pmf(36.0, 25.0, 256)
    assert q.probabilities.sum() == pytest.approx(1.0)
    assert q.mean() == pytest.approx(36.0, abs=1e-6)
    assert np.array_equal(discretize_pmf(12.3, 0.0, 256).probabilities, SparsityPmf.point_mass(12, 256).probabilities)


def test_discretized_pmf_covers_zero_through_n():
    q = discretize_pmf(0.0, 4.0, 256)
    assert q.probabilities.size == 257
    assert q.probabilities[0] == pytest.approx(q.probabilities.max())
    assert q.probabilities[0] > 0.15


def test_minimize_cost_matches_exhaustive_search():
    cfg = _config()
    q = discretize_pmf(36.0, 304.0, 256)
    costs = [expected_cost(s, q, cfg) for s in range(1, 257)]
    chosen = minimize_cost(q, cfg)
    assert expected_cost(chosen, q, cfg) == pytest.approx(min(costs), rel=1e-9)


def test_minimize_cost_matches_exhaustive_search_on_random_pmfs():
    rng = np.random.default_rng(17)
    for trial in range(50):
        n = int(rng.choice([256, 1024, 1936]))
        cfg = _config(n=n, penalty=float(rng.uniform(0.01, 0.5)))
        if trial % 2:
            q = SparsityPmf(rng.dirichlet(np.full(n + 1, 0.05)))
        else:
            q = discretize_pmf(float(rng.uniform(1.0, 200.0)), float(rng.uniform(1.0, 400.0)), n)
        costs = [expected_cost(s, q, cfg) for s in range(1, n + 1)]
        assert minimize_cost(q, cfg) == int(np.argmin(costs)) + 1


def test_point_mass_cost_minimizer_matches_exhaustive_search():
    cfg = _config(penalty=0.01)
    q = SparsityPmf.point_mass(40, 256)
    costs = [expected_cost(s, q, cfg) for s in range(1, 257)]
    assert minimize_cost(q, cfg) == int(np.argmin(costs)) + 1


def test_expected_cost_domain():
    with pytest.raises(ValueError):
        expected_cost(0, SparsityPmf.point_mass(3, 16), _config(n=16))


def test_lrt_config_validation():
    with pytest.raises(ValueError):
        _config(n=250)
    with pytest.raises(ValueError):
        _config(downsample_factor=3)
    with pytest.raises(ValueError):
        _config(delta=0.5)
    assert _config().side_measurements == 64


def _scene(block=False):
    background = np.full((16, 16), 0.5)
    f = np.zeros((16, 16))
    if block:
        f[4:8, 6:10] = 0.3
    else:
        rng = np.random.default_rng(3)
        f.flat[rng.choice(256, size=10, replace=False)] = 0.3
    return background, f


def _run_step(s_hat, background, f, tracks):
    state = LrtControllerState(s_hat=s_hat, phase_diagram=analytic_phase_diagram(256),
                               policy=LookupPolicy(tau_d=0.9, m_floor=52), config=_config())
    ensemble = MeasurementEnsemble('gaussian', 256, seed=7)
    calibration = calibrate_background([Frame(background)], ensemble)
    rows = state.rows_for_current()
    frame = Frame(background + f)
    y, _ = measure_frame(ensemble.operator(rows), frame)
    result = arcs_lrt_step(state, y, downsample(frame, 2), downsample(background, 2), calibration,
                           ensemble, tracks=tracks)
    return state, result


def test_step_without_tracks_counts_the_decoded_foreground():
    background, f = _scene()
    _, result = _run_step(10, background, f, tracks=[])
    assert result.s_hat_next == 10
    assert result.diagnostics['track_count'] == 0
    assert math.isnan(result.diagnostics['mu_pred'])
    np.testing.assert_allclose(devectorize(result.f_hat), f, atol=1e-4)


def test_step_with_a_track_minimizes_the_predicted_cost():
    background, f = _scene(block=True)
    track = WarpParams(2, 2, 3, 2)
    state, result = _run_step(16, background, f, tracks=[track])
    mu, variance = predict_sparsity([track], state)
    assert result.s_hat_next == minimize_cost(discretize_pmf(mu, variance, 256), state.config)
    assert result.diagnostics['mu_pred'] == pytest.approx(16.0)


def test_step_uses_the_blob_tracker_when_no_tracks_are_given():
    background, f = _scene(block=True)
    _, result = _run_step(16, background, f, tracks=None)
    assert result.diagnostics['track_count'] == 1
    assert result.diagnostics['mu_pred'] == pytest.approx(16.0)


def test_step_tracks_every_object_the_blob_tracker_finds():
    background, f = _scene(block=True)
    f[10:14, 0:4] = -0.3
    state, result = _run_step(32, background, f, tracks=None)
    mu, variance = predict_sparsity([WarpParams(2, 2, 3, 2), WarpParams(2, 2, 0, 5)], state)
    assert result.diagnostics['track_count'] == 2
    assert result.diagnostics['mu_pred'] == pytest.approx(mu)
    assert mu == pytest.approx(32.0)
    assert result.s_hat_next == minimize_cost(discretize_pmf(mu, variance, 256), state.config)
