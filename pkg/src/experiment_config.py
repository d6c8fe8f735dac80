#!/usr/bin/env python3
"""
Experiment Configuration
YAML configuration with built-in defaults,
command-line overrides and validation
"""
import copy
import math
import os
from typing import Dict, Optional

import numpy as np
import yaml

try:
    from arcs_cv import CvConfig
    from arcs_lrt import H_MODES, LrtConfig, TrackDynamics
    from decoder import SolverConfig
    from measurement import ENSEMBLE_KINDS, cv_row_count
    from phase_diagram import LookupPolicy
    from signal_model import ForegroundModel
except ImportError:
    from src.arcs_cv import CvConfig
    from src.arcs_lrt import H_MODES, LrtConfig, TrackDynamics
    from src.decoder import SolverConfig
    from src.measurement import ENSEMBLE_KINDS, cv_row_count
    from src.phase_diagram import LookupPolicy
    from src.signal_model import ForegroundModel

DEFAULT_CONFIG_PATH = 'config/config.yml'
STRATEGIES = ('oracle', 'arcs_cv', 'arcs_lrt')

_DEFAULTS = {
    'dataset': {
        'source': 'synthetic',
        'path': None,
        'calibration_frames': 30,
    },
    'synthetic': {
        'side_length': 32,
        'frame_count': 20,
        'repeat': False,
        'noise_sigma': 1.0 / 255.0,
        'objects': [
            {'x': 4, 'y': 6, 'width': 6, 'height': 6, 'vx': 1, 'vy': 0},
        ],
    },
    'model': {
        'tau': 0.1,
        'sigma_b_sq': (4.0 / 255.0) ** 2,
    },
    'ensemble': {
        'kind': 'gaussian',
        'seed': 7,
    },
    'solver': {
        'feasibility_tol': 1e-6,
        'max_iterations': 5000,
        'convergence_tol': 1e-9,
        'relative_tol': 1e-6,
        'rho': 1.0,
        'relaxation': 1.6,
    },
    'phase_diagram': {
        'path': None,
        'tau_d': 0.9,
        'm_floor': None,
        'grid_size': 16,
        'trials': 25,
        'tolerance': 1e-3,
        'seed': 11,
        'max_workers': 4,
    },
    'strategy': {
        'name': 'arcs_cv',
        'initial_s_hat': 0,
    },
    'arcs_cv': {
        'epsilon': 0.5,
        'rho': 0.1,
        'rows': None,
        'seed': 13,
    },
    'arcs_lrt': {
        'lambda': 0.15,
        'downsample_factor': 2,
        'sigma_diagonal': [1.0, 1.0, 3.0, 3.0],
        'delta': 0.25,
        'h_mode': 'geometric',
        'tracker': 'blob',
        'track_file': None,
        'tau_blob': 0.05,
    },
    'run': {
        'seed': 1,
        'frames': None,
    },
    'output': {
        'output_dir': 'results',
        'database_file': 'results/arcs_results.db',
        'show_progress': True,
    },
}


def load_default_config() -> Dict:
    """Fresh copy of the built-in defaults"""
    return copy.deepcopy(_DEFAULTS)


def deep_merge(base: Dict, override: Dict) -> Dict:
    """Recursively merge `override` into a copy of `base`"""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: Optional[str] = None, quiet: bool = False) -> Dict:
    """
    Defaults merged with a YAML file. An explicit path must exist; the
    default path is optional.
    """
    config_path = path or DEFAULT_CONFIG_PATH
    if not os.path.exists(config_path):
        if path:
            raise ValueError(f"Configuration file not found: {path}")
        if not quiet:
            print(f"📄 {config_path} not found, using default configuration")
        return load_default_config()
    with open(config_path, 'r', encoding='utf-8') as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ValueError(f"Invalid YAML in {config_path}: {e}")
    if not isinstance(data, dict):
        raise ValueError(f"{config_path} must contain a mapping at the top level")
    if not quiet:
        print(f"✓ Configuration loaded from {config_path}")
    return deep_merge(_DEFAULTS, data)


def apply_overrides(config: Dict, strategy: Optional[str] = None, frames: Optional[int] = None,
                    seed: Optional[int] = None, out: Optional[str] = None) -> Dict:
    """Command-line flags take precedence over file values"""
    config = copy.deepcopy(config)
    if strategy is not None:
        config.setdefault('strategy', {})['name'] = strategy
    if frames is not None:
        config.setdefault('run', {})['frames'] = frames
    if seed is not None:
        config.setdefault('run', {})['seed'] = seed
    if out is not None:
        config.setdefault('output', {})['output_dir'] = out
    return config


def _require(condition: bool, message: str):
    if not condition:
        raise ValueError(f"❌ Invalid configuration: {message}")


def validate_config(config: Dict) -> Dict:
    """Check ranges and strategy-specific groups; returns the config unchanged"""
    strategy = config.get('strategy', {}).get('name')
    _require(strategy in STRATEGIES, f"strategy.name must be one of {STRATEGIES}, got {strategy!r}")

    model = config.get('model', {})
    tau, sigma_b_sq = model.get('tau'), model.get('sigma_b_sq')
    _require(isinstance(tau, (int, float)) and 0 < tau < 1, "model.tau must lie in (0, 1)")
    _require(isinstance(sigma_b_sq, (int, float)) and 0 <= sigma_b_sq < tau ** 2,
             "model.sigma_b_sq must lie in [0, tau²)")

    ensemble = config.get('ensemble', {})
    _require(ensemble.get('kind') in ENSEMBLE_KINDS, f"ensemble.kind must be one of {ENSEMBLE_KINDS}")

    phase = config.get('phase_diagram', {})
    _require(0 < float(phase.get('tau_d', 0)) < 1, "phase_diagram.tau_d must lie in (0, 1)")
    _require(int(phase.get('grid_size', 0)) >= 1, "phase_diagram.grid_size must be positive")
    _require(int(phase.get('trials', 0)) >= 1, "phase_diagram.trials must be positive")

    dataset = config.get('dataset', {})
    _require(dataset.get('source') in ('synthetic', 'directory'), "dataset.source must be synthetic or directory")
    if dataset.get('source') == 'directory':
        _require(bool(dataset.get('path')), "dataset.path is required for directory datasets")
    _require(int(dataset.get('calibration_frames', 0)) >= 1, "dataset.calibration_frames must be at least 1")

    frames = config.get('run', {}).get('frames')
    _require(frames is None or int(frames) >= 1, "run.frames must be positive")

    if strategy == 'arcs_cv':
        cv = config.get('arcs_cv')
        _require(isinstance(cv, dict), "arcs_cv section is required for the arcs_cv strategy")
        _require(0 < float(cv.get('epsilon', 0)) < 1, "arcs_cv.epsilon must lie in (0, 1)")
        _require(0 < float(cv.get('rho', 0)) < 0.5, "arcs_cv.rho must lie in (0, 1/2)")
        rows = cv.get('rows')
        if rows is not None:
            _require(int(rows) >= cv_row_count(float(cv['epsilon']), float(cv['rho'])),
                     "arcs_cv.rows is below the required cross-validation row count")

    if strategy == 'arcs_lrt':
        lrt = config.get('arcs_lrt')
        _require(isinstance(lrt, dict), "arcs_lrt section is required for the arcs_lrt strategy")
        _require(float(lrt.get('lambda', 0)) > 0, "arcs_lrt.lambda must be positive")
        _require(int(lrt.get('downsample_factor', 0)) >= 1, "arcs_lrt.downsample_factor must be positive")
        _require(0 < float(lrt.get('delta', 0)) < math.sqrt(2) - 1, "arcs_lrt.delta must lie in (0, √2−1)")
        _require(lrt.get('h_mode') in H_MODES, f"arcs_lrt.h_mode must be one of {H_MODES}")
        _require(lrt.get('tracker') in ('blob', 'file', 'manual'), "arcs_lrt.tracker must be blob, file or manual")
        diagonal = lrt.get('sigma_diagonal', [])
        _require(len(diagonal) == 4 and all(float(v) >= 0 for v in diagonal),
                 "arcs_lrt.sigma_diagonal must hold 4 non-negative values")
        if lrt.get('tracker') == 'file':
            _require(bool(lrt.get('track_file')), "arcs_lrt.track_file is required for the file tracker")

    return config


def model_from_config(config: Dict) -> ForegroundModel:
    model = config.get('model', {})
    return ForegroundModel(tau=float(model.get('tau', 0.1)),
                           sigma_b_sq=float(model.get('sigma_b_sq', (4.0 / 255.0) ** 2)))


def solver_from_config(config: Dict) -> SolverConfig:
    return SolverConfig.from_dict(config.get('solver', {}))


def cv_rows_from_config(config: Dict) -> int:
    cv = config.get('arcs_cv', {})
    rows = cv.get('rows')
    return int(rows) if rows is not None else cv_row_count(float(cv.get('epsilon', 0.5)),
                                                         float(cv.get('rho', 0.1)))


def policy_from_config(config: Dict) -> LookupPolicy:
    """M_floor defaults to max(r, 8)"""
    phase = config.get('phase_diagram', {})
    floor = phase.get('m_floor')
    if floor is None:
        floor = max(cv_rows_from_config(config), 8)
    return LookupPolicy(tau_d=float(phase.get('tau_d', 0.9)), m_floor=int(floor))


def cv_config_from_config(config: Dict, ambient_dim: int) -> CvConfig:
    cv = config.get('arcs_cv', {})
    model = model_from_config(config)
    return CvConfig(epsilon=float(cv.get('epsilon', 0.5)), rho=float(cv.get('rho', 0.1)),
                    rows=cv_rows_from_config(config), tau=model.tau,
                    sigma_b_sq=model.sigma_b_sq, ambient_dim=ambient_dim)


def lrt_config_from_config(config: Dict, ambient_dim: int) -> LrtConfig:
    lrt = config.get('arcs_lrt', {})
    model = model_from_config(config)
    return LrtConfig(penalty=float(lrt.get('lambda', 0.15)),
                     downsample_factor=int(lrt.get('downsample_factor', 2)),
                     tau=model.tau, sigma_b_sq=model.sigma_b_sq, ambient_dim=ambient_dim,
                     delta=float(lrt.get('delta', 0.25)),
                     h_mode=lrt.get('h_mode', 'geometric'))


def dynamics_from_config(config: Dict) -> TrackDynamics:
    diagonal = config.get('arcs_lrt', {}).get('sigma_diagonal', [1.0, 1.0, 3.0, 3.0])
    return TrackDynamics(covariance=np.diag([float(v) for v in diagonal]))
