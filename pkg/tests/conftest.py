"""
Shared fixtures: small ensembles, noise-free synthetic scenes and an
analytic phase diagram so strategy runs skip the Monte Carlo generation
"""
import copy
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / 'src'))

from experiment_config import load_default_config  # noqa: E402
from measurement import MeasurementEnsemble  # noqa: E402
from phase_diagram import PhaseDiagram, uniform_grid  # noqa: E402


def analytic_phase_diagram(ambient_dim: int, slope: float = 0.3, kind: str = 'gaussian',
                           grid_size: int = 16) -> PhaseDiagram:
    """Success 1 where s/M <= slope·M/n, else 0"""
    grid = uniform_grid(grid_size)
    success = (grid[:, None] <= slope * grid[None, :]).astype(float)
    return PhaseDiagram(ensemble_kind=kind, ambient_dim=ambient_dim, m_over_n=grid,
                        s_over_m=grid, success=success, trials=1)


@pytest.fixture
def phase_diagram_256():
    return analytic_phase_diagram(256)


@pytest.fixture
def gaussian_64():
    return MeasurementEnsemble('gaussian', 64, seed=5)


@pytest.fixture
def small_config(tmp_path):
    """16×16 repeated-frame scene with one 6×6 object and no pixel noise"""
    config = load_default_config()
    config['synthetic'] = {
        'side_length': 16,
        'frame_count': 6,
        'repeat': True,
        'noise_sigma': 0.0,
        'objects': [{'x': 4, 'y': 5, 'width': 6, 'height': 6}],
    }
    config['dataset']['calibration_frames'] = 4
    config['run']['seed'] = 3
    config['output'] = {
        'output_dir': str(tmp_path / 'out'),
        'database_file': str(tmp_path / 'db' / 'results.db'),
        'show_progress': False,
    }
    return config


@pytest.fixture
def config_factory(small_config):
    def make(**sections):
        config = copy.deepcopy(small_config)
        for section, values in sections.items():
            config.setdefault(section, {}).update(values)
        return config
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
