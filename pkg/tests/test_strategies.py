import numpy as np
import pytest

from arcs_lrt import TemplateOutline, WarpParams, discretize_pmf, minimize_cost, unscented_moments
from conftest import analytic_phase_diagram
from dataset_io import Dataset
from experiment_config import dynamics_from_config, lrt_config_from_config, policy_from_config
from experiment_orchestrator import build_dataset, run_oracle, run_strategy
from measurement import MeasurementEnsemble
from results_database import ResultsDatabase
from strategies import OracleStrategy

OBJECT_SPARSITY = 36


def _run(config, **kwargs):
    kwargs.setdefault('use_database', False)
    kwargs.setdefault('write_report', False)
    return run_strategy(config, phase_diagram=analytic_phase_diagram(256), **kwargs)


def test_synthetic_dataset_has_expected_sparsity(small_config):
    dataset = build_dataset(small_config)
    assert len(dataset) == 6 and dataset.ambient_dim == 256
    assert dataset.sparsities == [OBJECT_SPARSITY] * 6
    assert dataset.tracks[0] == [(3.0, 3.0, 2.0, 2.5)]


def test_oracle_uses_the_true_sparsity(small_config):
    metrics = run_oracle(small_config, phase_diagram=analytic_phase_diagram(256),
                         use_database=False, write_report=False)
    dataset = build_dataset(small_config)
    assert [m.s_hat for m in metrics] == [OBJECT_SPARSITY] * 6
    assert all(m.m_t == 192 and m.m_total == 192 for m in metrics)
    for m in metrics:
        assert m.error is None
        assert m.l2_error <= 1e-3 * np.linalg.norm(dataset.foregrounds[m.t])


def test_oracle_on_an_empty_scene_uses_the_floor(config_factory):
    config = config_factory(synthetic={'objects': []})
    metrics = run_oracle(config, phase_diagram=analytic_phase_diagram(256), use_database=False,
                         write_report=False)
    assert all(m.s_true == 0 and m.m_total == 52 for m in metrics)
    assert all(m.l2_error <= 1e-9 for m in metrics)


def test_arcs_cv_converges_from_a_high_initialization(config_factory):
    config = config_factory(strategy={'name': 'arcs_cv', 'initial_s_hat': int(2.5 * OBJECT_SPARSITY)})
    metrics = _run(config)
    assert metrics[0].s_hat == 90 and metrics[0].m_t == 256
    for m in metrics[-3:]:
        assert abs(m.s_hat - OBJECT_SPARSITY) <= 0.2 * OBJECT_SPARSITY
    assert all(m.m_total - m.m_t == 52 for m in metrics)


def test_arcs_cv_leaves_zero_after_the_first_frame(config_factory):
    metrics = _run(config_factory(strategy={'name': 'arcs_cv', 'initial_s_hat': 0}))
    assert metrics[0].s_hat == 0 and metrics[0].m_t == 52
    assert metrics[1].s_hat > 0


def test_arcs_lrt_with_manual_tracks_settles_after_one_frame(config_factory):
    config = config_factory(strategy={'name': 'arcs_lrt'}, arcs_lrt={'tracker': 'manual'})
    metrics = _run(config)

    mu, variance = unscented_moments(WarpParams(3.0, 3.0, 2.0, 2.5), dynamics_from_config(config),
                                     TemplateOutline(), 2)
    expected = minimize_cost(discretize_pmf(mu, variance, 256), lrt_config_from_config(config, 256))
    assert all(m.s_hat == expected for m in metrics[1:])
    assert all(m.m_total - m.m_t == 64 for m in metrics)
    assert all(m.diagnostics['track_count'] == 1 for m in metrics)


def test_arcs_lrt_blob_tracker_runs(config_factory):
    metrics = _run(config_factory(strategy={'name': 'arcs_lrt'}, arcs_lrt={'tracker': 'blob'}))
    assert len(metrics) == 6
    assert all(m.m_total >= m.m_t + 64 for m in metrics)


def test_runs_are_deterministic(config_factory, tmp_path):
    first = config_factory(output={'output_dir': str(tmp_path / 'a')})
    second = config_factory(output={'output_dir': str(tmp_path / 'b')})
    _run(first, write_report=True)
    _run(second, write_report=True)
    assert (tmp_path / 'a' / 'metrics.csv').read_bytes() == (tmp_path / 'b' / 'metrics.csv').read_bytes()
    for name in ('summary.csv', 'timing.csv', 'sparsity.svg', 'measurements.svg', 'l2_error.svg'):
        assert (tmp_path / 'a' / name).exists()


def test_runs_are_logged_in_the_database(small_config, tmp_path):
    db = ResultsDatabase(str(tmp_path / 'runs.db'), quiet=True)
    _run(small_config, db=db, use_database=True)
    runs = db.list_runs()
    assert len(runs) == 1
    run_id, strategy, status, frame_count = runs[0]
    assert (strategy, status, frame_count) == ('arcs_cv', 'completed', 6)
    assert db.get_run_summary(run_id)['mean_m_total'] > 52


def test_frames_override_truncates_the_run(config_factory):
    metrics = _run(config_factory(run={'frames': 2}))
    assert len(metrics) == 2


def _oracle(config, dataset, n=256):
    return OracleStrategy(config, dataset, MeasurementEnsemble('gaussian', dataset.ambient_dim, 7),
                          analytic_phase_diagram(n), policy_from_config(config))


def test_oracle_requires_ground_truth(small_config):
    dataset = build_dataset(small_config)
    with pytest.raises(ValueError):
        _oracle(small_config, Dataset(frames=dataset.frames, calibration_frames=dataset.calibration_frames))


def test_strategy_rejects_mismatched_phase_diagram(small_config):
    with pytest.raises(ValueError):
        _oracle(small_config, build_dataset(small_config), n=64)


def test_manual_tracker_requires_tracks(config_factory):
    config = config_factory(strategy={'name': 'arcs_lrt'}, arcs_lrt={'tracker': 'manual'})
    dataset = build_dataset(config)
    bare = Dataset(frames=dataset.frames, calibration_frames=dataset.calibration_frames,
                   sparsities=dataset.sparsities)
    with pytest.raises(ValueError):
        _run(config, dataset=bare)


def test_failing_frame_falls_back_to_full_rate(small_config):
    class Flaky(OracleStrategy):
        def process_frame(self, t, frame):
            if t == 1:
                raise RuntimeError("sensor glitch")
            return super().process_frame(t, frame)

    dataset = build_dataset(small_config)
    strategy = Flaky(small_config, dataset, MeasurementEnsemble('gaussian', 256, 7),
                     analytic_phase_diagram(256), policy_from_config(small_config))
    metrics = strategy.run(show_progress=False)
    assert metrics[1].m_t == 256
    assert metrics[1].error == "RuntimeError: sensor glitch"
    assert metrics[0].error is None and metrics[2].error is None


def _noisy_scene(config_factory, objects, frame_count, repeat, **sections):
    """32×32 scene with the default pixel noise, measured against an n = 1024 diagram"""
    return config_factory(synthetic={'side_length': 32, 'frame_count': frame_count, 'repeat': repeat,
                                     'noise_sigma': 1.0 / 255.0, 'objects': objects},
                          dataset={'calibration_frames': 8}, **sections)


def _run_1024(config):
    return run_strategy(config, phase_diagram=analytic_phase_diagram(1024), use_database=False,
                        write_report=False)


STEADY_OBJECT = [{'x': 9, 'y': 11, 'width': 6, 'height': 7}]
STEADY_SPARSITY = 42


@pytest.mark.parametrize('initial_s_hat', [0, int(2.5 * STEADY_SPARSITY)])
def test_arcs_cv_settles_on_a_noisy_repeated_frame(config_factory, initial_s_hat):
    config = _noisy_scene(config_factory, STEADY_OBJECT, 10, True,
                          strategy={'name': 'arcs_cv', 'initial_s_hat': initial_s_hat})
    metrics = _run_1024(config)
    assert all(m.s_true == STEADY_SPARSITY for m in metrics)
    assert metrics[0].s_hat == initial_s_hat
    for m in metrics[-3:]:
        assert abs(m.s_hat - STEADY_SPARSITY) <= 0.2 * STEADY_SPARSITY
        assert m.error is None


def test_arcs_lrt_settles_within_two_frames_on_a_noisy_repeated_frame(config_factory):
    config = _noisy_scene(config_factory, STEADY_OBJECT, 6, True,
                          strategy={'name': 'arcs_lrt'}, arcs_lrt={'tracker': 'manual'})
    metrics = _run_1024(config)
    mu, variance = unscented_moments(WarpParams(3.0, 3.5, 4.5, 5.5), dynamics_from_config(config),
                                     TemplateOutline(), 2)
    expected = minimize_cost(discretize_pmf(mu, variance, 1024), lrt_config_from_config(config, 1024))
    assert all(m.s_hat == expected for m in metrics[2:])
    assert all(m.m_total - m.m_t == 256 for m in metrics)


TWO_MOVING_OBJECTS = [{'x': 2, 'y': 4, 'width': 6, 'height': 6, 'vx': 1, 'vy': 0},
                      {'x': 14, 'y': 18, 'width': 5, 'height': 5, 'vx': 1, 'vy': 0}]


def test_strategy_ordering_on_a_moving_two_object_scene(config_factory):
    results = {}
    for name in ('oracle', 'arcs_cv', 'arcs_lrt'):
        config = _noisy_scene(config_factory, TWO_MOVING_OBJECTS, 12, False, strategy={'name': name})
        results[name] = _run_1024(config)

    assert all(m.s_true == 61 for m in results['oracle'])
    m_total = {name: np.mean([m.m_total for m in metrics]) for name, metrics in results.items()}
    l2 = {name: np.mean([m.l2_error for m in metrics]) for name, metrics in results.items()}

    assert m_total['oracle'] <= m_total['arcs_cv'] <= 2 * m_total['oracle']
    assert m_total['arcs_lrt'] >= 0.25 * 1024
    assert all(np.isfinite(value) for value in l2.values())
    assert l2['oracle'] <= l2['arcs_cv'] and l2['oracle'] <= l2['arcs_lrt']
