import math

import numpy as np
import pytest

from conftest import analytic_phase_diagram
from decoder import DecodeError, decode
from measurement import MeasurementEnsemble
from phase_diagram import (LookupPolicy, PhaseDiagram, PhaseLookupError, generate, load_phase_diagram, lookup,
                           lookup_or_clamp, max_sparsity_fraction, min_rows_theoretical, render_phase_diagram,
                           save_phase_diagram, success_probability_bound, uniform_grid)
from results_database import ResultsDatabase
from signal_model import sample_sparse_signal


def _threshold_diagram(n=100):
    m_grid = [0.25, 0.5, 0.75, 1.0]
    s_grid = [0.25, 0.5, 1.0]
    # rows: s/M, columns: M/n
    success = [[0.2, 0.95, 1.0, 1.0],
               [0.0, 0.5, 0.92, 1.0],
               [0.0, 0.0, 0.0, 0.95]]
    return PhaseDiagram('gaussian', n, m_grid, s_grid, success, trials=20)


def test_lookup_returns_floor_for_empty_foreground():
    assert lookup(_threshold_diagram(), 0, LookupPolicy(tau_d=0.9, m_floor=8)) == 8


def test_lookup_rounds_ratios_up_to_the_next_cell():
    pd = _threshold_diagram()
    policy = LookupPolicy(tau_d=0.9, m_floor=8)
    # s = 10 fits M = 50 at s/M = 0.2 → cell 0.25, success 0.95
    assert lookup(pd, 10, policy) == 50
    # s = 30: M = 50 gives 0.6 → cell 1.0 fails; M = 75 gives 0.4 → cell 0.5, 0.92
    assert lookup(pd, 30, policy) == 75
    assert lookup(pd, 80, policy) == 100


def test_lookup_respects_the_floor():
    assert lookup(_threshold_diagram(), 5, LookupPolicy(tau_d=0.9, m_floor=60)) == 60


def test_lookup_raises_when_nothing_qualifies():
    pd = _threshold_diagram()
    with pytest.raises(PhaseLookupError):
        lookup(pd, 60, LookupPolicy(tau_d=0.99, m_floor=8))
    assert lookup_or_clamp(pd, 60, LookupPolicy(tau_d=0.99, m_floor=8)) == 100
    assert lookup_or_clamp(pd, 500, LookupPolicy(tau_d=0.9, m_floor=8)) == 100


def test_lookup_is_monotone_in_sparsity(phase_diagram_256):
    policy = LookupPolicy(tau_d=0.9, m_floor=52)
    rows = [lookup_or_clamp(phase_diagram_256, s, policy) for s in range(0, 120)]
    assert all(a <= b for a, b in zip(rows, rows[1:]))
    assert rows[36] == 192


def test_phase_diagram_validates_grid():
    with pytest.raises(ValueError):
        PhaseDiagram('gaussian', 10, [0.5, 0.25], [1.0], [[1.0, 1.0]], trials=1)
    with pytest.raises(ValueError):
        PhaseDiagram('gaussian', 10, [0.5], [1.0], [[1.5]], trials=1)


def test_generate_small_diagram_and_resume(tmp_path):
    db = ResultsDatabase(str(tmp_path / 'cells.db'), quiet=True)
    kwargs = dict(m_over_n=[0.5, 1.0], s_over_m=[0.0625, 0.9], trials=5, seed=4, max_workers=2, cell_cache=db)
    seen = []
    pd = generate('gaussian', 64, on_cell=lambda i, j, rate, cached: seen.append(cached), **kwargs)

    assert pd.success.shape == (2, 2)
    assert pd.success[0, 0] >= 0.8        # M = 32, s = 2
    assert pd.success[1, 0] <= 0.2        # M = 32, s = 29
    assert pd.success[0, 1] == 1.0 and pd.success[1, 1] == 1.0   # M = n
    assert seen == [False] * 4

    seen.clear()
    again = generate('gaussian', 64, on_cell=lambda i, j, rate, cached: seen.append(cached), **kwargs)
    assert seen == [True] * 4
    np.testing.assert_array_equal(again.success, pd.success)


def test_generate_marks_excluded_cells_as_nan():
    pd = generate('gaussian', 16, m_over_n=[0.01, 1.0], s_over_m=[0.5], trials=1)
    assert math.isnan(pd.success[0, 0])
    assert pd.success[0, 1] == 1.0


def test_save_and_load_phase_diagram(tmp_path):
    pd = _threshold_diagram()
    pd.success[2, 0] = np.nan
    loaded = load_phase_diagram(save_phase_diagram(pd, tmp_path / 'pd.csv'))
    assert loaded.ambient_dim == 100 and loaded.trials == 20
    np.testing.assert_array_equal(loaded.m_over_n, pd.m_over_n)
    np.testing.assert_array_equal(loaded.success, pd.success)


def test_render_phase_diagram_writes_svg(tmp_path):
    path = render_phase_diagram(analytic_phase_diagram(64, grid_size=4), tmp_path / 'pd.svg')
    assert path.read_text(encoding='utf-8').lstrip().startswith('<?xml')


@pytest.mark.parametrize('delta', [0.1, 0.25, 0.4])
@pytest.mark.parametrize('sparsity', [1, 5, 20])
@pytest.mark.parametrize('tau_g', [0.5, 0.9, 0.99])
def test_theoretical_rows_meet_the_success_bound(delta, sparsity, tau_g):
    n = 10_000
    rows = min_rows_theoretical(delta, sparsity, n, tau_g)
    assert success_probability_bound(delta, rows, sparsity, n) >= tau_g
    assert success_probability_bound(delta, rows - 1, sparsity, n) < tau_g


def test_max_sparsity_fraction_near_one_thousandth():
    assert 0.0009 <= max_sparsity_fraction(math.sqrt(2.0) - 1.0) <= 0.0013


def test_bound_rejects_bad_delta():
    with pytest.raises(ValueError):
        success_probability_bound(1.0, 100, 1, 1000)


@pytest.fixture(scope='module')
def generated_128():
    return generate('gaussian', 128, m_over_n=uniform_grid(4), s_over_m=uniform_grid(8), trials=20, seed=2,
                    max_workers=4)


def test_generated_success_rises_with_measurements(generated_128):
    success = generated_128.success
    assert not np.any(np.isnan(success))
    assert np.all(success[:, -1] >= 0.95)
    # Monte Carlo noise of 20 trials allows small dips between neighbouring columns
    assert np.all(np.diff(success, axis=1) >= -0.25)
    assert np.all(success[:, -1] >= success[:, 0])
    assert success[0, 1] >= 0.9 and success[-1, 0] <= 0.1


def test_looked_up_rows_recover_fresh_signals(generated_128):
    policy = LookupPolicy(tau_d=0.9, m_floor=1)
    ensemble = MeasurementEnsemble('gaussian', 128, seed=2)
    rng = np.random.default_rng(21)
    rates = []
    for s_hat in rng.integers(2, 40, size=10):
        rows = lookup_or_clamp(generated_128, int(s_hat), policy)
        op = ensemble.operator(rows)
        successes = 0
        for _ in range(20):
            signal = sample_sparse_signal(0.1, int(s_hat), 128, rng)
            try:
                estimate = decode(op.apply(signal), op).estimate
            except DecodeError:
                continue
            if np.linalg.norm(estimate - signal) <= 1e-3 * np.linalg.norm(signal):
                successes += 1
        rates.append(successes / 20)
    assert np.mean(rates) >= 0.8
    assert min(rates) >= 0.6
