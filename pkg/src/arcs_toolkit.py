#!/usr/bin/env python3
"""
Adaptive-Rate Compressive Sensing Toolkit v1.0.0
Command-line entry point: phase diagrams, synthetic data, background
calibration, strategy runs and reports
"""
import argparse
import sys
from pathlib import Path

if __name__ == "__main__":
    try:
        from dependency_installer import ensure_dependencies
    except ImportError:
        from src.dependency_installer import ensure_dependencies
    ensure_dependencies()

try:
    from dataset_io import save_dataset
    from experiment_config import (apply_overrides, cv_rows_from_config, load_config, model_from_config,
                                   policy_from_config, validate_config)
    from experiment_orchestrator import ExperimentOrchestrator, build_dataset, generate_phase_diagram
    from measurement import CrossValidationMatrix, MeasurementEnsemble, calibrate_background, save_calibration
    from phase_diagram import (PhaseLookupError, load_phase_diagram, lookup, render_phase_diagram,
                               save_phase_diagram)
    from report_writer import METRICS_FILE, emit_comparison_report, print_summary_table, read_metrics_csv, summarize
    from results_database import ResultsDatabase
    from signal_model import scene_from_dict, synthesize_sequence
except ImportError:
    from src.dataset_io import save_dataset
    from src.experiment_config import (apply_overrides, cv_rows_from_config, load_config, model_from_config,
                                       policy_from_config, validate_config)
    from src.experiment_orchestrator import ExperimentOrchestrator, build_dataset, generate_phase_diagram
    from src.measurement import CrossValidationMatrix, MeasurementEnsemble, calibrate_background, save_calibration
    from src.phase_diagram import (PhaseLookupError, load_phase_diagram, lookup, render_phase_diagram,
                                   save_phase_diagram)
    from src.report_writer import (METRICS_FILE, emit_comparison_report, print_summary_table, read_metrics_csv,
                                   summarize)
    from src.results_database import ResultsDatabase
    from src.signal_model import scene_from_dict, synthesize_sequence

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Bad command line or configuration"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', help='YAML configuration file (default: config/config.yml)')
    common.add_argument('--seed', type=int, help='Override run.seed (synthetic scene)')
    common.add_argument('--frames', type=int, help='Override run.frames')
    common.add_argument('--strategy', choices=['oracle', 'arcs_cv', 'arcs_lrt'], help='Override strategy.name')
    common.add_argument('--out', help='Override output.output_dir')
    common.add_argument('--no-progress', action='store_true', help='Disable the live progress panel')

    parser = _Parser(prog='arcs_toolkit',
                     description="Adaptive-rate compressive sensing for video foreground reconstruction")
    sub = parser.add_subparsers(dest='command')

    pd_parser = sub.add_parser('phase-diagram', help='Generate, query or render a phase diagram')
    pd_sub = pd_parser.add_subparsers(dest='pd_command')
    gen = pd_sub.add_parser('generate', help='Monte Carlo generation (resumable)', parents=[common])
    gen.add_argument('--ambient-dim', type=int, help='n (default: from the dataset)')
    gen.add_argument('--file', help='Output CSV (default: phase_diagram.path or <out>/phase_diagram.csv)')
    query = pd_sub.add_parser('query', help='Smallest M for a sparsity estimate', parents=[common])
    query.add_argument('s_hat', type=int)
    query.add_argument('--file', help='Phase diagram CSV (default: phase_diagram.path)')
    render = pd_sub.add_parser('render', help='SVG heatmap', parents=[common])
    render.add_argument('--file', help='Phase diagram CSV (default: phase_diagram.path)')
    render.add_argument('--svg', help='Output SVG (default: next to the CSV)')

    synth = sub.add_parser('synth', help='Write a synthetic dataset directory', parents=[common])
    synth.add_argument('directory')

    calibrate = sub.add_parser('calibrate', help='Measure the background calibration', parents=[common])
    calibrate.add_argument('--file', help='Output file (default: <out>/calibration.bin)')

    sub.add_parser('run', help='Run the configured strategy', parents=[common])

    report = sub.add_parser('report', help='Summaries and overlay charts for one or more runs', parents=[common])
    report.add_argument('runs', nargs='+', help='Run directories (or metrics.csv files), optionally label=path')
    report.add_argument('--db', action='store_true', help='Also list runs logged in the results database')
    return parser


def load_and_override(args) -> dict:
    try:
        config = load_config(args.config)
        config = apply_overrides(config, strategy=args.strategy, frames=args.frames,
                                 seed=args.seed, out=args.out)
        if args.no_progress:
            config['output']['show_progress'] = False
        return validate_config(config)
    except ValueError as e:
        raise UsageError(str(e))


def _diagram_path(config: dict, explicit) -> Path:
    if explicit:
        return Path(explicit)
    path = config.get('phase_diagram', {}).get('path')
    if path:
        return Path(path)
    return Path(config['output']['output_dir']) / 'phase_diagram.csv'


def cmd_phase_diagram(args, config: dict) -> int:
    if args.pd_command == 'generate':
        if args.ambient_dim:
            n = args.ambient_dim
        elif config['dataset']['source'] == 'synthetic':
            n = int(config['synthetic']['side_length']) ** 2
        else:
            n = build_dataset(config).ambient_dim
        db = ResultsDatabase(config['output']['database_file'], quiet=True)
        pd = generate_phase_diagram(config, n, db, config['output']['show_progress'])
        path = save_phase_diagram(pd, _diagram_path(config, args.file))
        svg = render_phase_diagram(pd, path.with_suffix('.svg'))
        print(f"💾 Phase diagram saved to {path} ({svg.name})")
        return EXIT_OK

    path = _diagram_path(config, args.file)
    if not path.exists():
        raise UsageError(f"Phase diagram file not found: {path}")
    pd = load_phase_diagram(path)
    if args.pd_command == 'query':
        policy = policy_from_config(config)
        try:
            rows = lookup(pd, args.s_hat, policy)
        except PhaseLookupError as e:
            print(f"⚠️  {e}; controllers clamp to M = n = {pd.ambient_dim}")
            return EXIT_RUNTIME
        print(f"📏 s_hat = {args.s_hat} → M = {rows} ({rows / pd.ambient_dim:.4f} of n)")
        return EXIT_OK
    if args.pd_command == 'render':
        svg = render_phase_diagram(pd, args.svg or path.with_suffix('.svg'))
        print(f"🖼️  Heatmap written to {svg}")
        return EXIT_OK
    raise UsageError("phase-diagram needs one of: generate, query, render")


def cmd_synth(args, config: dict) -> int:
    scene = scene_from_dict(config['synthetic'], model_from_config(config),
                            downsample_factor=int(config['arcs_lrt']['downsample_factor']),
                            calibration_frames=int(config['dataset']['calibration_frames']))
    truth, frames, calibration = synthesize_sequence(scene, int(config['run']['seed']))
    directory = save_dataset(args.directory, truth, frames, calibration)
    print(f"💾 {len(frames)} frames and {len(calibration)} calibration frames written to {directory}")
    print(f"📊 Sparsities: min {min(truth.sparsities)}, max {max(truth.sparsities)}")
    return EXIT_OK


def cmd_calibrate(args, config: dict) -> int:
    dataset = build_dataset(config)
    n = dataset.ambient_dim
    ensemble = MeasurementEnsemble(config['ensemble']['kind'], n, int(config['ensemble']['seed']))
    psi = None
    if config['strategy']['name'] == 'arcs_cv':
        psi = CrossValidationMatrix(cv_rows_from_config(config), n, int(config['arcs_cv']['seed']))
    calibration = calibrate_background(dataset.calibration_frames, ensemble, psi)
    path = save_calibration(calibration, args.file or Path(config['output']['output_dir']) / 'calibration.bin')
    print(f"💾 Calibration of {calibration.frame_count} frames written to {path} (r = {calibration.cv_rows})")
    return EXIT_OK


def cmd_run(args, config: dict) -> int:
    metrics = ExperimentOrchestrator(config).run()
    return EXIT_OK if metrics else EXIT_RUNTIME


def _metrics_path(entry: str):
    label, _, location = entry.rpartition('=')
    path = Path(location)
    if path.is_dir():
        path = path / METRICS_FILE
    return label or path.parent.name or 'run', path


def cmd_report(args, config: dict) -> int:
    runs = {}
    for entry in args.runs:
        label, path = _metrics_path(entry)
        if not path.exists():
            raise UsageError(f"Metrics file not found: {path}")
        runs[label] = read_metrics_csv(path)
    out_dir = Path(config['output']['output_dir'])
    files = emit_comparison_report(runs, out_dir)
    print_summary_table({label: summarize(rows) for label, rows in runs.items()})
    print(f"💾 Report written to {out_dir} ({', '.join(sorted(files))})")
    if args.db:
        db = ResultsDatabase(config['output']['database_file'], quiet=True)
        for run_id, strategy, status, frame_count in db.list_runs():
            print(f"   #{run_id} {strategy:9} {status:12} {frame_count} frames")
    return EXIT_OK


COMMANDS = {
    'phase-diagram': cmd_phase_diagram,
    'synth': cmd_synth,
    'calibrate': cmd_calibrate,
    'run': cmd_run,
    'report': cmd_report,
}


def main(argv=None) -> int:
    """
    Parse arguments and dispatch

    Returns:
        0 success, 1 usage or configuration error, 2 runtime failure
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        if args.command == 'phase-diagram' and args.pd_command is None:
            raise UsageError("phase-diagram needs one of: generate, query, render")
        config = load_and_override(args)
        return COMMANDS[args.command](args, config)
    except UsageError as e:
        print(f"❌ {e}")
        print(parser.format_usage().rstrip())
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("\n⚠️  Interrupted by user")
        return EXIT_RUNTIME
    except Exception as e:
        print(f"❌ {type(e).__name__}: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
