#!/usr/bin/env python3
"""
Base Strategy Abstract Class
Defines the per-frame interface shared by the oracle and the adaptive-rate
controllers, plus the sequential run loop, metrics and summary
"""
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, List, Optional

import numpy as np
from rich.live import Live

try:
    from dataset_io import Dataset
    from decoder import SolverConfig
    from measurement import BackgroundCalibration, MeasurementEnsemble, calibrate_background
    from phase_diagram import LookupPolicy, PhaseDiagram
    from progress_tracker import ProgressTracker
    from results_database import ResultsDatabase
except ImportError:
    from src.dataset_io import Dataset
    from src.decoder import SolverConfig
    from src.measurement import BackgroundCalibration, MeasurementEnsemble, calibrate_background
    from src.phase_diagram import LookupPolicy, PhaseDiagram
    from src.progress_tracker import ProgressTracker
    from src.results_database import ResultsDatabase


@dataclass
class FrameOutcome:
    """What a strategy produced for one frame"""

    f_hat: np.ndarray
    s_hat: int
    rows: int
    diagnostics: Dict = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class FrameMetrics:
    """One row of metrics.csv; m_total includes side-information overhead"""

    t: int
    s_true: Optional[int]
    s_hat: int
    m_t: int
    m_total: int
    l2_error: float
    wall_time: float = 0.0
    diagnostics: Dict = field(default_factory=dict)
    error: Optional[str] = None


class BaseStrategy(ABC):
    """
    Abstract base class for measurement-rate strategies. Subclasses decide
    ŝ_t and M_t, acquire and decode one frame at a time.
    """

    name = 'base'

    def __init__(self, config: dict, dataset: Dataset, ensemble: MeasurementEnsemble,
                 phase_diagram: PhaseDiagram, policy: LookupPolicy,
                 solver_config: Optional[SolverConfig] = None,
                 db: Optional[ResultsDatabase] = None,
                 progress_tracker: Optional[ProgressTracker] = None):
        """
        Initialize the strategy

        Args:
            config: Validated experiment configuration
            dataset: Frames, calibration frames and optional ground truth
            ensemble: Measurement ensemble shared with the calibration
            phase_diagram: Lookup table for M_t
            policy: Lookup policy (tau_d, M_floor)
            solver_config: Decoder settings
            db: Results database (runs are not logged when None)
            progress_tracker: Progress tracker (created if None)
        """
        if dataset.ambient_dim != ensemble.ambient_dim:
            raise ValueError(f"Dataset dimension {dataset.ambient_dim} does not match "
                             f"ensemble dimension {ensemble.ambient_dim}")
        if phase_diagram.ambient_dim != ensemble.ambient_dim:
            raise ValueError(f"Phase diagram was built for n = {phase_diagram.ambient_dim}, "
                             f"frames have n = {ensemble.ambient_dim}")
        self.config = config
        self.dataset = dataset
        self.ensemble = ensemble
        self.phase_diagram = phase_diagram
        self.policy = policy
        self.solver_config = solver_config or SolverConfig()
        self.db = db
        self.progress_tracker = progress_tracker
        self.calibration: Optional[BackgroundCalibration] = None

        self.start_time = None
        self.end_time = None

    @property
    @abstractmethod
    def overhead(self) -> int:
        """Side-information measurements added to every frame's M_t"""
        pass

    @abstractmethod
    def process_frame(self, t: int, frame) -> FrameOutcome:
        """
        Acquire and reconstruct frame t, then update the controller

        Args:
            t: Frame index
            frame: The high-resolution frame x_t

        Returns:
            FrameOutcome with f̂_t, the ŝ_t and M_t used for this frame
        """
        pass

    def prepare(self):
        """Compute the background calibration; subclasses add their side channels"""
        self.calibration = calibrate_background(self.dataset.calibration_frames, self.ensemble)

    def current_s_hat(self) -> int:
        return 0

    def _metrics_for(self, t: int, outcome: FrameOutcome, wall_time: float) -> FrameMetrics:
        reference = self.dataset.reference_foreground(t)
        s_true = self.dataset.sparsities[t] if self.dataset.sparsities is not None else None
        return FrameMetrics(t=t, s_true=s_true, s_hat=int(outcome.s_hat), m_t=int(outcome.rows),
                            m_total=int(outcome.rows) + self.overhead,
                            l2_error=float(np.linalg.norm(reference - outcome.f_hat)),
                            wall_time=wall_time, diagnostics=dict(outcome.diagnostics),
                            error=outcome.error)

    def _safe_process(self, t: int, frame) -> FrameOutcome:
        # Unexpected failures fall back to a full-rate frame with no estimate
        try:
            return self.process_frame(t, frame)
        except Exception as e:
            n = self.dataset.ambient_dim
            return FrameOutcome(f_hat=np.zeros(n), s_hat=self.current_s_hat(), rows=n,
                                error=f"{type(e).__name__}: {e}")

    def run(self, show_progress: bool = True) -> List[FrameMetrics]:
        """
        Process every frame in order and return the per-frame metrics
        """
        self.start_time = datetime.now()
        print(f"\n🚀 Running strategy: {self.name}")
        print(f"📊 Frames: {len(self.dataset)}  (n = {self.dataset.ambient_dim})")
        print(f"🎲 Ensemble: {self.ensemble.kind} (seed {self.ensemble.seed})")
        print(f"➕ Side-information overhead per frame: {self.overhead}")
        print()

        self.prepare()
        run_id = self.db.start_run(self.name, self.config) if self.db else None

        tracker = self.progress_tracker or ProgressTracker(title=self.name)
        self.progress_tracker = tracker
        tracker.initialize_progress_bar(len(self.dataset))

        metrics: List[FrameMetrics] = []
        live = Live(tracker.create_progress_panel(), refresh_per_second=2,
                    console=tracker.console) if show_progress else None
        if live:
            live.start()
        try:
            for t, frame in enumerate(self.dataset.frames):
                started = time.perf_counter()
                outcome = self._safe_process(t, frame)
                record = self._metrics_for(t, outcome, time.perf_counter() - started)
                metrics.append(record)

                if run_id is not None:
                    self.db.record_frame(run_id, t, record.s_true, record.s_hat, record.m_total,
                                         record.l2_error, record.wall_time, record.error)
                if record.error:
                    tracker.update_stat('items_failed')
                    tracker.update_stat('last_error', value=record.error)
                tracker.update_stat('current_rows', value=record.m_t)
                tracker.update_stat('current_s_hat', value=record.s_hat)
                tracker.update_stat('current_s_true', value='' if record.s_true is None else record.s_true)
                tracker.update_stat('last_l2_error', value=record.l2_error)
                tracker.update_stat('last_item', value=f"frame {t}")
                tracker.update_stat('items_done')
                if live:
                    live.update(tracker.create_progress_panel())
        except KeyboardInterrupt:
            if run_id is not None:
                self.db.finish_run(run_id, status='interrupted')
            raise
        finally:
            if live:
                live.stop()

        if run_id is not None:
            self.db.finish_run(run_id)
        self.end_time = datetime.now()
        self._print_final_summary(metrics)
        return metrics

    def _print_final_summary(self, metrics: List[FrameMetrics]):
        """Print final run summary"""
        duration = (self.end_time - self.start_time).total_seconds()
        n = self.dataset.ambient_dim
        mean_m = float(np.mean([m.m_total for m in metrics])) if metrics else 0.0
        mean_error = float(np.mean([m.l2_error for m in metrics])) if metrics else 0.0
        errors = sum(1 for m in metrics if m.error)

        print("\n" + "=" * 70)
        print(f"📊 {self.name.upper()} RUN COMPLETED")
        print("=" * 70)
        print(f"⏱️  Duration: {duration:.2f} seconds")
        print(f"🎞️  Frames: {len(metrics)}")
        print(f"📏 Average measurements: {mean_m:.1f} ({mean_m / n:.4f} of n)")
        print(f"📉 Average ℓ2 error: {mean_error:.4g}")
        print(f"❌ Frames with errors: {errors}")
        print("=" * 70 + "\n")
