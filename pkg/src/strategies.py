#!/usr/bin/env python3
"""
Measurement-Rate Strategies
Oracle CS (true sparsity known), ARCS-CV (cross-validation feedback) and
ARCS-LRT (low-resolution tracking feedback)
"""
from typing import List, Optional

import numpy as np

try:
    from arcs_cv import CvControllerState, arcs_cv_step
    from arcs_lrt import LrtControllerState, WarpParams, arcs_lrt_step, downsample
    from base_strategy import BaseStrategy, FrameOutcome
    from decoder import DecodeError, decode
    from experiment_config import cv_config_from_config, dynamics_from_config, lrt_config_from_config
    from measurement import CrossValidationMatrix, calibrate_background, foreground_measurements, measure_frame
    from phase_diagram import lookup_or_clamp
except ImportError:
    from src.arcs_cv import CvControllerState, arcs_cv_step
    from src.arcs_lrt import LrtControllerState, WarpParams, arcs_lrt_step, downsample
    from src.base_strategy import BaseStrategy, FrameOutcome
    from src.decoder import DecodeError, decode
    from src.experiment_config import cv_config_from_config, dynamics_from_config, lrt_config_from_config
    from src.measurement import CrossValidationMatrix, calibrate_background, foreground_measurements, measure_frame
    from src.phase_diagram import lookup_or_clamp


class OracleStrategy(BaseStrategy):
    """Uses the true s_t to pick M_t; no side information"""

    name = 'oracle'

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.dataset.sparsities is None:
            raise ValueError("Oracle strategy needs ground-truth sparsities "
                             "(synthetic data or ground_truth.csv)")
        if len(self.dataset.sparsities) < len(self.dataset):
            raise ValueError("Ground truth covers fewer frames than the sequence")
        self._last_s = 0

    @property
    def overhead(self) -> int:
        return 0

    def current_s_hat(self) -> int:
        return self._last_s

    def process_frame(self, t: int, frame) -> FrameOutcome:
        s_true = int(self.dataset.sparsities[t])
        self._last_s = s_true
        rows = lookup_or_clamp(self.phase_diagram, s_true, self.policy)
        op = self.ensemble.operator(rows)
        y_t, _ = measure_frame(op, frame)
        xi = foreground_measurements(y_t, self.calibration, rows)
        try:
            result = decode(xi, op, self.solver_config)
        except DecodeError as e:
            return FrameOutcome(f_hat=np.zeros(self.dataset.ambient_dim), s_hat=s_true, rows=rows,
                                diagnostics={'decode_iters': e.result.iterations if e.result else 0},
                                error=str(e))
        return FrameOutcome(f_hat=result.estimate, s_hat=s_true, rows=rows,
                            diagnostics={'decode_iters': result.iterations})


class ArcsCvStrategy(BaseStrategy):
    """Cross-validation feedback: r extra projections per frame"""

    name = 'arcs_cv'

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        n = self.dataset.ambient_dim
        self.cv_config = cv_config_from_config(self.config, n)
        cv_seed = int(self.config.get('arcs_cv', {}).get('seed', 0))
        self.psi = CrossValidationMatrix(self.cv_config.rows, n, cv_seed)
        initial = int(self.config.get('strategy', {}).get('initial_s_hat', 0))
        self.state = CvControllerState(s_hat=min(max(initial, 0), n), phase_diagram=self.phase_diagram,
                                       policy=self.policy, config=self.cv_config)

    @property
    def overhead(self) -> int:
        return self.cv_config.rows

    def prepare(self):
        self.calibration = calibrate_background(self.dataset.calibration_frames, self.ensemble, self.psi)

    def current_s_hat(self) -> int:
        return self.state.s_hat

    def process_frame(self, t: int, frame) -> FrameOutcome:
        s_hat = self.state.s_hat
        rows = self.state.rows_for_current()
        op = self.ensemble.operator(rows)
        y_t, chi_t = measure_frame(op, frame, self.psi)
        step = arcs_cv_step(self.state, y_t, chi_t, self.calibration, self.ensemble,
                            self.psi, self.solver_config)
        self.state.s_hat = step.s_hat_next
        return FrameOutcome(f_hat=step.f_hat, s_hat=s_hat, rows=rows,
                            diagnostics=step.diagnostics, error=step.error)


class ArcsLrtStrategy(BaseStrategy):
    """Low-resolution tracking feedback: L² side measurements per frame"""

    name = 'arcs_lrt'

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        n = self.dataset.ambient_dim
        lrt = self.config.get('arcs_lrt', {})
        self.lrt_config = lrt_config_from_config(self.config, n)
        self.tracker = lrt.get('tracker', 'blob')
        if self.tracker in ('manual', 'file') and self.dataset.tracks is None:
            raise ValueError(f"The {self.tracker} tracker needs a track file for this dataset")
        initial = int(self.config.get('strategy', {}).get('initial_s_hat', 0))
        self.state = LrtControllerState(s_hat=min(max(initial, 0), n), phase_diagram=self.phase_diagram,
                                        policy=self.policy, config=self.lrt_config,
                                        dynamics=dynamics_from_config(self.config),
                                        tau_blob=float(lrt.get('tau_blob', 0.05)))
        self.background_lo = None

    @property
    def overhead(self) -> int:
        return self.lrt_config.side_measurements

    def prepare(self):
        super().prepare()
        mean_background = np.mean([frame.pixels for frame in self.dataset.calibration_frames], axis=0)
        self.background_lo = downsample(mean_background, self.lrt_config.downsample_factor)

    def current_s_hat(self) -> int:
        return self.state.s_hat

    def _tracks_at(self, t: int) -> Optional[List[WarpParams]]:
        if self.tracker == 'blob':
            return None
        frame_tracks = self.dataset.tracks[t] if t < len(self.dataset.tracks) else []
        return [WarpParams.from_sequence(p) for p in frame_tracks]

    def process_frame(self, t: int, frame) -> FrameOutcome:
        s_hat = self.state.s_hat
        rows = self.state.rows_for_current()
        op = self.ensemble.operator(rows)
        y_t, _ = measure_frame(op, frame)
        frame_lo = downsample(frame, self.lrt_config.downsample_factor)
        step = arcs_lrt_step(self.state, y_t, frame_lo, self.background_lo, self.calibration,
                             self.ensemble, self.solver_config, tracks=self._tracks_at(t))
        self.state.s_hat = step.s_hat_next
        return FrameOutcome(f_hat=step.f_hat, s_hat=s_hat, rows=rows,
                            diagnostics=step.diagnostics, error=step.error)


STRATEGY_CLASSES = {
    OracleStrategy.name: OracleStrategy,
    ArcsCvStrategy.name: ArcsCvStrategy,
    ArcsLrtStrategy.name: ArcsLrtStrategy,
}

