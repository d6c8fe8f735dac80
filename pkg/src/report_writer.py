#!/usr/bin/env python3
"""
Report Writer
Per-frame metrics CSV, run summaries, timings and SVG line charts for one
run or an overlay of several runs
"""
import csv
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from rich.console import Console
from rich.table import Table

try:
    from base_strategy import FrameMetrics
except ImportError:
    from src.base_strategy import FrameMetrics

BASE_COLUMNS = ['t', 's_true', 's_hat', 'M_t', 'M_total', 'l2_error']
METRICS_FILE = 'metrics.csv'
SUMMARY_FILE = 'summary.csv'
TIMING_FILE = 'timing.csv'


def format_value(value) -> str:
    """Stable text for CSV cells so reruns are byte-identical"""
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        if value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return repr(float(value))
    if hasattr(value, 'item'):
        return format_value(value.item())
    return str(value)


def metrics_rows(metrics: Sequence[FrameMetrics]) -> List[Dict]:
    rows = []
    for m in metrics:
        row = {'t': m.t, 's_true': m.s_true, 's_hat': m.s_hat, 'M_t': m.m_t,
               'M_total': m.m_total, 'l2_error': m.l2_error}
        row.update(m.diagnostics)
        row['error'] = m.error
        rows.append(row)
    return rows


def _columns(rows: List[Dict]) -> List[str]:
    extra = sorted({key for row in rows for key in row} - set(BASE_COLUMNS) - {'error'})
    return BASE_COLUMNS + extra + ['error']


def write_metrics_csv(metrics: Sequence[FrameMetrics], path) -> Path:
    """t, s_true, s_hat, M_t, M_total, l2_error, then strategy diagnostics and error"""
    path = Path(path)
    rows = metrics_rows(metrics)
    columns = _columns(rows)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(column)) for column in columns])
    return path


def _parse(text: str):
    if text == '':
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_metrics_csv(path) -> List[Dict]:
    """Rows of a metrics.csv with numbers parsed back"""
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for raw in csv.DictReader(f):
            row = {key: _parse(value) for key, value in raw.items() if key != 'error'}
            row['error'] = raw.get('error') or None
            rows.append(row)
    return rows


def summarize(rows: List[Dict]) -> Dict:
    """Exact arithmetic means of M_t, M_total and l2_error"""
    if not rows:
        raise ValueError("Cannot summarize an empty run")
    count = len(rows)
    return {
        'frames': count,
        'mean_M_t': math.fsum(float(row['M_t']) for row in rows) / count,
        'mean_M_total': math.fsum(float(row['M_total']) for row in rows) / count,
        'mean_l2_error': math.fsum(float(row['l2_error']) for row in rows) / count,
        'frame_errors': sum(1 for row in rows if row.get('error')),
    }


def write_summary_csv(summaries: Dict[str, Dict], path) -> Path:
    path = Path(path)
    columns = ['run', 'frames', 'mean_M_t', 'mean_M_total', 'mean_l2_error', 'frame_errors']
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for label, summary in summaries.items():
            writer.writerow([label] + [format_value(summary[column]) for column in columns[1:]])
    return path


def write_timing_csv(metrics: Sequence[FrameMetrics], path) -> Path:
    """Wall-clock seconds per frame, kept apart from the deterministic metrics"""
    path = Path(path)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['t', 'wall_time'])
        for m in metrics:
            writer.writerow([m.t, f"{m.wall_time:.6f}"])
    return path


def plot_series(series: Dict[str, List], path, ylabel: str, title: str) -> Path:
    """
    Static SVG line chart

    Args:
        series: label -> (t values, y values)
        path: Output file
        ylabel: Y-axis label
        title: Chart title
    """
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, (ts, values) in series.items():
        ax.plot(ts, values, marker='o', markersize=3, linewidth=1.2, label=label)
    ax.set_xlabel('frame t')
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return path


def _column(rows: List[Dict], key: str):
    ts = [row['t'] for row in rows if row.get(key) is not None]
    return ts, [row[key] for row in rows if row.get(key) is not None]


def write_charts(runs: Dict[str, List[Dict]], out_dir: Path) -> Dict[str, Path]:
    """Sparsity, measurement and error charts; several runs overlay"""
    sparsity = {}
    for label, rows in runs.items():
        sparsity[f"{label} ŝ_t"] = _column(rows, 's_hat')
    # Every run sees the same sequence, so one ground-truth curve suffices
    first = next(iter(runs.values()))
    truth = _column(first, 's_true')
    if truth[0]:
        sparsity['s_true'] = truth

    return {
        'sparsity': plot_series(sparsity, out_dir / 'sparsity.svg', 'sparsity', 'Estimated vs true sparsity'),
        'measurements': plot_series({label: _column(rows, 'M_total') for label, rows in runs.items()},
                                    out_dir / 'measurements.svg', 'M_total',
                                    'Measurements per frame (with side information)'),
        'l2_error': plot_series({label: _column(rows, 'l2_error') for label, rows in runs.items()},
                                out_dir / 'l2_error.svg', '‖f − f̂‖₂', 'Foreground reconstruction error'),
    }


def emit_report(metrics: Sequence[FrameMetrics], out_dir, label: str = 'run') -> Dict[str, Path]:
    """
    Write metrics.csv, summary.csv, timing.csv and the three charts

    Args:
        metrics: Per-frame metrics of one run
        out_dir: Output directory (created if missing)
        label: Run name used in summary.csv and chart legends

    Returns:
        Mapping of artifact name to path
    """
    if not metrics:
        raise ValueError("No metrics to report")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValueError(f"Cannot create output directory {out_dir}: {e}")

    rows = metrics_rows(metrics)
    files = {
        'metrics': write_metrics_csv(metrics, out_dir / METRICS_FILE),
        'summary': write_summary_csv({label: summarize(rows)}, out_dir / SUMMARY_FILE),
        'timing': write_timing_csv(metrics, out_dir / TIMING_FILE),
    }
    files.update(write_charts({label: rows}, out_dir))
    return files


def emit_comparison_report(runs: Dict[str, List[Dict]], out_dir) -> Dict[str, Path]:
    """Overlay charts and a joint summary.csv for several metrics.csv runs"""
    if not runs or any(not rows for rows in runs.values()):
        raise ValueError("Every run in a comparison needs at least one frame")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {'summary': write_summary_csv({label: summarize(rows) for label, rows in runs.items()},
                                          out_dir / SUMMARY_FILE)}
    files.update(write_charts(runs, out_dir))
    return files


def print_summary_table(summaries: Dict[str, Dict], ambient_dim: Optional[int] = None,
                        console: Optional[Console] = None):
    """Rich table with one row per run"""
    console = console or Console()
    table = Table(title="📊 Run summary", show_header=True, header_style="bold blue")
    table.add_column("Run", style="cyan")
    table.add_column("Frames", justify="right")
    table.add_column("Avg M_total", justify="right", style="green")
    if ambient_dim:
        table.add_column("M_total / n", justify="right", style="green")
    table.add_column("Avg ℓ2 error", justify="right", style="yellow")
    table.add_column("Errors", justify="right", style="red")
    for label, summary in summaries.items():
        cells = [label, str(summary['frames']), f"{summary['mean_M_total']:.1f}"]
        if ambient_dim:
            cells.append(f"{summary['mean_M_total'] / ambient_dim:.4f}")
        cells += [f"{summary['mean_l2_error']:.4g}", str(summary['frame_errors'])]
        table.add_row(*cells)
    console.print(table)
