#!/usr/bin/env python3
"""
Experiment Orchestrator
Prepares the dataset, ensemble, calibration and phase diagram, then selects
and runs the configured strategy and writes its report
"""
from pathlib import Path
from typing import Dict, List, Optional

from rich.live import Live

try:
    from base_strategy import FrameMetrics
    from dataset_io import Dataset, load_dataset
    from experiment_config import (apply_overrides, model_from_config, policy_from_config,
                                   solver_from_config, validate_config)
    from measurement import MeasurementEnsemble
    from phase_diagram import PhaseDiagram, cell_dimensions, generate, load_phase_diagram, save_phase_diagram, uniform_grid
    from progress_tracker import ProgressTracker
    from report_writer import emit_report
    from results_database import ResultsDatabase
    from signal_model import scene_from_dict, synthesize_sequence
    from strategies import STRATEGY_CLASSES
except ImportError:
    from src.base_strategy import FrameMetrics
    from src.dataset_io import Dataset, load_dataset
    from src.experiment_config import (apply_overrides, model_from_config, policy_from_config,
                                       solver_from_config, validate_config)
    from src.measurement import MeasurementEnsemble
    from src.phase_diagram import PhaseDiagram, cell_dimensions, generate, load_phase_diagram, save_phase_diagram, uniform_grid
    from src.progress_tracker import ProgressTracker
    from src.report_writer import emit_report
    from src.results_database import ResultsDatabase
    from src.signal_model import scene_from_dict, synthesize_sequence
    from src.strategies import STRATEGY_CLASSES


def build_dataset(config: Dict) -> Dataset:
    """Synthetic sequence or a directory of PGM frames, cut to run.frames"""
    dataset_cfg = config.get('dataset', {})
    calibration_frames = int(dataset_cfg.get('calibration_frames', 30))
    if dataset_cfg.get('source', 'synthetic') == 'synthetic':
        scene = scene_from_dict(config.get('synthetic', {}), model_from_config(config),
                                downsample_factor=int(config.get('arcs_lrt', {}).get('downsample_factor', 2)),
                                calibration_frames=calibration_frames)
        truth, frames, calibration = synthesize_sequence(scene, int(config.get('run', {}).get('seed', 0)))
        dataset = Dataset.from_synthetic(truth, frames, calibration)
    else:
        dataset = load_dataset(dataset_cfg['path'], calibration_count=calibration_frames,
                               track_file=config.get('arcs_lrt', {}).get('track_file'))
    return dataset.truncate(config.get('run', {}).get('frames'))


def generate_phase_diagram(config: Dict, ambient_dim: int, db: Optional[ResultsDatabase] = None,
                           show_progress: bool = True) -> PhaseDiagram:
    """
    Monte Carlo phase diagram with resumable cells and a live panel

    Args:
        config: Experiment configuration
        ambient_dim: n
        db: Results database used as the cell cache
        show_progress: Render the rich panel

    Returns:
        PhaseDiagram
    """
    phase = config.get('phase_diagram', {})
    grid = uniform_grid(int(phase.get('grid_size', 16)))
    kind = config.get('ensemble', {}).get('kind', 'gaussian')
    total = sum(1 for m in grid for s in grid if min(cell_dimensions(ambient_dim, m, s)) > 0)

    print(f"\n🚀 Generating {kind} phase diagram for n = {ambient_dim}")
    print(f"📊 Grid: {grid.size}×{grid.size}, {phase.get('trials', 25)} trials per cell")
    print(f"🧵 Workers: {phase.get('max_workers', 1)}")

    tracker = ProgressTracker(title="Phase diagram")
    tracker.initialize_progress_bar(total)
    live = Live(tracker.create_progress_panel(), refresh_per_second=2,
                console=tracker.console) if show_progress else None

    def on_cell(i, j, rate, from_cache):
        rows, sparsity = cell_dimensions(ambient_dim, grid[j], grid[i])
        tracker.update_stat('current_rows', value=rows)
        tracker.update_stat('current_s_hat', value=sparsity)
        tracker.update_stat('last_item', value=f"M={rows}, s={sparsity}: {rate:.2f}")
        if from_cache:
            tracker.update_stat('items_cached')
        tracker.update_stat('items_done')
        if live:
            live.update(tracker.create_progress_panel())

    if live:
        live.start()
    try:
        pd = generate(kind, ambient_dim, m_over_n=grid, s_over_m=grid,
                      trials=int(phase.get('trials', 25)),
                      tolerance=float(phase.get('tolerance', 1e-3)),
                      seed=int(phase.get('seed', 0)),
                      tau=model_from_config(config).tau,
                      solver_config=solver_from_config(config),
                      max_workers=int(phase.get('max_workers', 1)),
                      cell_cache=db, on_cell=on_cell)
    finally:
        if live:
            live.stop()
    print(f"✅ Phase diagram ready ({tracker.stats['items_cached']} cells reused from the database)")
    return pd


class ExperimentOrchestrator:
    """
    Coordinates dataset preparation, phase-diagram loading or generation and
    the execution of the selected strategy
    """

    def __init__(self, config: Dict, dataset: Optional[Dataset] = None,
                 phase_diagram: Optional[PhaseDiagram] = None,
                 db: Optional[ResultsDatabase] = None, use_database: bool = True):
        """
        Initialize the orchestrator

        Args:
            config: Experiment configuration (validated here)
            dataset: Pre-built dataset (built from config when None)
            phase_diagram: Pre-built phase diagram (loaded or generated when None)
            db: Results database (opened from output.database_file when None)
            use_database: Set False to skip run logging and cell caching
        """
        self.config = validate_config(config)
        self.output_dir = Path(config.get('output', {}).get('output_dir', 'results'))
        self.show_progress = bool(config.get('output', {}).get('show_progress', True))
        self.db = db
        if self.db is None and use_database:
            self.db = ResultsDatabase(config.get('output', {}).get('database_file', 'results/arcs_results.db'),
                                      quiet=True)
        self.dataset = dataset
        self.phase_diagram = phase_diagram
        self.ensemble = None

    def prepare_dataset(self) -> Dataset:
        if self.dataset is None:
            self.dataset = build_dataset(self.config)
        else:
            self.dataset = self.dataset.truncate(self.config.get('run', {}).get('frames'))
        print(f"✓ Dataset ready: {len(self.dataset)} frames of {self.dataset.side_length}×"
              f"{self.dataset.side_length}, {len(self.dataset.calibration_frames)} calibration frames")
        return self.dataset

    def prepare_phase_diagram(self, ambient_dim: int) -> PhaseDiagram:
        """Use the injected diagram, load phase_diagram.path, or generate and save one"""
        if self.phase_diagram is None:
            path = self.config.get('phase_diagram', {}).get('path')
            if path and Path(path).exists():
                self.phase_diagram = load_phase_diagram(path)
                print(f"✓ Phase diagram loaded from {path}")
            else:
                self.phase_diagram = generate_phase_diagram(self.config, ambient_dim, self.db, self.show_progress)
                target = Path(path) if path else self.output_dir / 'phase_diagram.csv'
                save_phase_diagram(self.phase_diagram, target)
                print(f"💾 Phase diagram saved to {target}")

        kind = self.config.get('ensemble', {}).get('kind', 'gaussian')
        if self.phase_diagram.ambient_dim != ambient_dim:
            raise ValueError(f"Phase diagram is for n = {self.phase_diagram.ambient_dim}, frames have n = {ambient_dim}")
        if self.phase_diagram.ensemble_kind != kind:
            print(f"⚠️  Phase diagram was built for {self.phase_diagram.ensemble_kind}, sensing with {kind}")
        return self.phase_diagram

    def create_strategy(self):
        """
        Create the configured strategy

        Returns:
            Strategy instance (OracleStrategy, ArcsCvStrategy or ArcsLrtStrategy)
        """
        dataset = self.prepare_dataset()
        n = dataset.ambient_dim
        ensemble_cfg = self.config.get('ensemble', {})
        self.ensemble = MeasurementEnsemble(ensemble_cfg.get('kind', 'gaussian'), n,
                                            int(ensemble_cfg.get('seed', 0)))
        pd = self.prepare_phase_diagram(n)
        name = self.config['strategy']['name']
        return STRATEGY_CLASSES[name](self.config, dataset, self.ensemble, pd,
                                      policy_from_config(self.config),
                                      solver_config=solver_from_config(self.config),
                                      db=self.db)

    def run(self, write_report: bool = True) -> List[FrameMetrics]:
        """
        Execute the selected strategy and write its report
        """
        print("=" * 70)
        print(f"🎞️  ADAPTIVE-RATE COMPRESSIVE SENSING - {self.config['strategy']['name']}")
        print("=" * 70)

        strategy = self.create_strategy()
        try:
            metrics = strategy.run(show_progress=self.show_progress)
        except KeyboardInterrupt:
            print("\n\n⚠️  Run interrupted by user")
            print("   Frames processed so far are in the results database")
            raise

        if write_report:
            files = emit_report(metrics, self.output_dir, label=strategy.name)
            print(f"💾 Report written to {self.output_dir} ({', '.join(sorted(files))})")
        return metrics


def run_strategy(config: Dict, dataset: Optional[Dataset] = None,
                 phase_diagram: Optional[PhaseDiagram] = None,
                 db: Optional[ResultsDatabase] = None, use_database: bool = True,
                 write_report: bool = True) -> List[FrameMetrics]:
    """Run config.strategy.name over the dataset"""
    orchestrator = ExperimentOrchestrator(config, dataset=dataset, phase_diagram=phase_diagram,
                                          db=db, use_database=use_database)
    return orchestrator.run(write_report=write_report)


def run_oracle(config: Dict, **kwargs) -> List[FrameMetrics]:
    """Oracle baseline: ŝ_t = s_t with no side information"""
    return run_strategy(apply_overrides(config, strategy='oracle'), **kwargs)
