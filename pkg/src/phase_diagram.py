#!/usr/bin/env python3
"""
Phase Diagrams
Monte Carlo success-probability grids over (M/n, s/M), the sparsity → M_t
lookup table and the Gaussian-construction theoretical bounds
"""
import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

import numpy as np

try:
    from decoder import DecodeError, SolverConfig, decode
    from measurement import MeasurementEnsemble
    from signal_model import sample_sparse_signal
except ImportError:
    from src.decoder import DecodeError, SolverConfig, decode
    from src.measurement import MeasurementEnsemble
    from src.signal_model import sample_sparse_signal

DEFAULT_GRID_SIZE = 16
DEFAULT_TRIALS = 25
DEFAULT_TOLERANCE = 1e-3


class PhaseLookupError(ValueError):
    """No grid cell reaches the required success probability"""


def uniform_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """size points k/size, k = 1..size"""
    if size < 1:
        raise ValueError("Grid size must be positive")
    return np.arange(1, size + 1) / float(size)


@dataclass
class PhaseDiagram:
    """
    success[i, j] is the recovery rate at s/M = s_over_m[i], M/n = m_over_n[j].
    NaN marks cells excluded from the grid (M = 0 or s = 0).
    """

    ensemble_kind: str
    ambient_dim: int
    m_over_n: np.ndarray
    s_over_m: np.ndarray
    success: np.ndarray
    trials: int
    tolerance: float = DEFAULT_TOLERANCE
    seed: int = 0

    def __post_init__(self):
        self.m_over_n = np.asarray(self.m_over_n, dtype=np.float64)
        self.s_over_m = np.asarray(self.s_over_m, dtype=np.float64)
        self.success = np.asarray(self.success, dtype=np.float64)
        for name, grid in (('m_over_n', self.m_over_n), ('s_over_m', self.s_over_m)):
            if grid.ndim != 1 or grid.size == 0:
                raise ValueError(f"{name} must be a non-empty 1-D grid")
            if np.any(grid <= 0) or np.any(grid > 1):
                raise ValueError(f"{name} values must lie in (0, 1]")
            if np.any(np.diff(grid) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        if self.success.shape != (self.s_over_m.size, self.m_over_n.size):
            raise ValueError(f"success grid has shape {self.success.shape}, expected "
                             f"{(self.s_over_m.size, self.m_over_n.size)}")
        finite = self.success[np.isfinite(self.success)]
        if np.any(finite < 0) or np.any(finite > 1):
            raise ValueError("Success probabilities must lie in [0, 1]")

    def rows_for_column(self, j: int) -> int:
        return cell_dimensions(self.ambient_dim, self.m_over_n[j], 1.0)[0]


def cell_dimensions(ambient_dim: int, m_ratio: float, s_ratio: float):
    """(M, s) for a grid cell: M = round(g·n), s = round(h·M)"""
    rows = int(round(m_ratio * ambient_dim))
    return rows, int(round(s_ratio * rows))


def diagram_key(ensemble_kind: str, ambient_dim: int, m_over_n: Sequence[float],
                s_over_m: Sequence[float], trials: int, tolerance: float, seed: int, tau: float) -> str:
    """Stable identifier for resuming a generation from the results database"""
    payload = json.dumps({'kind': ensemble_kind, 'n': int(ambient_dim),
                          'm': [float(v) for v in m_over_n], 's': [float(v) for v in s_over_m],
                          'trials': int(trials), 'tol': float(tolerance), 'seed': int(seed),
                          'tau': float(tau)}, sort_keys=True)
    return hashlib.sha1(payload.encode('utf-8')).hexdigest()


def run_cell(ensemble: MeasurementEnsemble, rows: int, sparsity: int, trials: int,
             tolerance: float, seed: int, cell_index: int, tau: float,
             solver_config: SolverConfig) -> float:
    """Success fraction of `trials` sense-and-decode experiments in one cell"""
    op = ensemble.operator(rows)
    n = ensemble.ambient_dim
    successes = 0
    for trial in range(trials):
        rng = np.random.default_rng([seed, cell_index, trial])
        signal = sample_sparse_signal(tau, sparsity, n, rng)
        try:
            result = decode(op.apply(signal), op, solver_config)
        except DecodeError:
            continue
        error = np.linalg.norm(result.estimate - signal) / np.linalg.norm(signal)
        if error <= tolerance:
            successes += 1
    return successes / trials


def generate(ensemble_kind: str, ambient_dim: int, m_over_n: Optional[Sequence[float]] = None,
             s_over_m: Optional[Sequence[float]] = None, trials: int = DEFAULT_TRIALS,
             tolerance: float = DEFAULT_TOLERANCE, seed: int = 0, tau: float = 0.1,
             solver_config: Optional[SolverConfig] = None, max_workers: int = 1,
             cell_cache=None, on_cell: Optional[Callable[[int, int, float, bool], None]] = None) -> PhaseDiagram:
    """
    Monte Carlo phase diagram.

    Args:
        ensemble_kind: 'gaussian' or 'fourier_permuted'
        ambient_dim: n
        m_over_n: Undersampling grid (default 16 uniform points)
        s_over_m: Sparsity grid (default 16 uniform points)
        trials: Signals per cell
        tolerance: Normalized ℓ2 error counted as success
        seed: Master seed; per-trial seeds are (seed, cell, trial)
        tau: Foreground threshold of the trial signals
        solver_config: Decoder configuration
        max_workers: Cells decoded in parallel
        cell_cache: Object with get_phase_cells(key) / save_phase_cell(key, i, j, rate)
        on_cell: Callback (i, j, rate, from_cache) after each cell

    Returns:
        PhaseDiagram
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    m_grid = uniform_grid() if m_over_n is None else np.asarray(m_over_n, dtype=np.float64)
    s_grid = uniform_grid() if s_over_m is None else np.asarray(s_over_m, dtype=np.float64)
    for grid in (m_grid, s_grid):
        if np.any(grid <= 0) or np.any(grid > 1):
            raise ValueError("Grid values must lie in (0, 1]")
    solver_config = solver_config or SolverConfig()

    success = np.full((s_grid.size, m_grid.size), np.nan)
    ensemble = MeasurementEnsemble(ensemble_kind, ambient_dim, seed)
    key = diagram_key(ensemble_kind, ambient_dim, m_grid, s_grid, trials, tolerance, seed, tau)
    cached: Dict = cell_cache.get_phase_cells(key) if cell_cache is not None else {}

    pending = []
    for j, m_ratio in enumerate(m_grid):
        for i, s_ratio in enumerate(s_grid):
            rows, sparsity = cell_dimensions(ambient_dim, m_ratio, s_ratio)
            if rows == 0 or sparsity == 0:
                continue
            if (i, j) in cached:
                success[i, j] = cached[(i, j)]
                if on_cell:
                    on_cell(i, j, success[i, j], True)
                continue
            pending.append((i, j, rows, sparsity))

    def work(item):
        i, j, rows, sparsity = item
        cell_index = j * s_grid.size + i
        return i, j, run_cell(ensemble, rows, sparsity, trials, tolerance, seed,
                              cell_index, tau, solver_config)

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        futures = [executor.submit(work, item) for item in pending]
        for future in as_completed(futures):
            i, j, rate = future.result()
            success[i, j] = rate
            if cell_cache is not None:
                cell_cache.save_phase_cell(key, i, j, rate)
            if on_cell:
                on_cell(i, j, rate, False)

    return PhaseDiagram(ensemble_kind=ensemble_kind, ambient_dim=ambient_dim, m_over_n=m_grid,
                        s_over_m=s_grid, success=success, trials=trials,
                        tolerance=tolerance, seed=seed)


@dataclass(frozen=True)
class LookupPolicy:
    tau_d: float = 0.9
    m_floor: int = 8

    def __post_init__(self):
        if not 0.0 < self.tau_d < 1.0:
            raise ValueError(f"tau_d must lie in (0, 1), got {self.tau_d}")
        if self.m_floor < 1:
            raise ValueError("m_floor must be at least 1")


def lookup(pd: PhaseDiagram, s_hat: int, policy: LookupPolicy) -> int:
    """
    Smallest grid M whose cell containing (M/n, ŝ/M), rounded up in both
    directions, reaches tau_d.

    Raises:
        PhaseLookupError: no column qualifies for this ŝ
    """
    if s_hat < 0:
        raise ValueError(f"s_hat must be non-negative, got {s_hat}")
    floor = min(policy.m_floor, pd.ambient_dim)
    if s_hat == 0:
        return floor
    for j in range(pd.m_over_n.size):
        rows = pd.rows_for_column(j)
        if rows < 1 or s_hat > rows:
            continue
        ratio = s_hat / rows
        i = int(np.searchsorted(pd.s_over_m, ratio - 1e-12, side='left'))
        if i >= pd.s_over_m.size:
            continue
        rate = pd.success[i, j]
        if np.isfinite(rate) and rate >= policy.tau_d:
            return max(rows, floor)
    raise PhaseLookupError(f"No phase-diagram cell reaches tau_d = {policy.tau_d} for s_hat = {s_hat}")


def lookup_or_clamp(pd: PhaseDiagram, s_hat: int, policy: LookupPolicy) -> int:
    """lookup, falling back to M = n when nothing qualifies"""
    try:
        return lookup(pd, min(s_hat, pd.ambient_dim), policy)
    except PhaseLookupError:
        return pd.ambient_dim


def _c0(x: float) -> float:
    return x * x / 4.0 - x ** 3 / 6.0


def _validate_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def success_probability_bound(delta: float, rows: int, sparsity: int, ambient_dim: int) -> float:
    """
    1 − 2·exp(−c0(δ/2)·M + s(log(e·n/s) + log(12/δ))), c0(x) = x²/4 − x³/6.
    Returned as evaluated; negative values are vacuous.
    """
    _validate_delta(delta)
    if sparsity < 1:
        raise ValueError("sparsity must be at least 1")
    exponent = -_c0(delta / 2.0) * rows + sparsity * (math.log(math.e * ambient_dim / sparsity)
                                                      + math.log(12.0 / delta))
    if exponent > 700.0:
        return -math.inf
    return 1.0 - 2.0 * math.exp(exponent)


def min_rows_theoretical(delta: float, sparsity: int, ambient_dim: int, tau_g: float) -> int:
    """Smallest integer M meeting the Gaussian-construction requirement for success probability tau_g"""
    _validate_delta(delta)
    if not 0.0 < tau_g < 1.0:
        raise ValueError(f"tau_g must lie in (0, 1), got {tau_g}")
    if sparsity < 1:
        raise ValueError("sparsity must be at least 1")
    numerator = (sparsity * (1.0 + math.log(ambient_dim / sparsity) + math.log(12.0 / delta))
                 + math.log(2.0 / (1.0 - tau_g)))
    rows = math.ceil(numerator / _c0(delta / 2.0))
    while success_probability_bound(delta, rows, sparsity, ambient_dim) < tau_g:
        rows += 1
    return rows


def sparsity_ratio_bound(delta: float, sparsity: int, ambient_dim: int, tau_g: float) -> float:
    """Lower bound on n/s implied by requiring M <= n"""
    _validate_delta(delta)
    denominator = _c0(delta / 2.0)
    first = (math.log(ambient_dim / sparsity) + math.log(2.0 / (1.0 - tau_g)) / sparsity) / denominator
    return first + (1.0 + math.log(12.0 / delta)) / denominator


def max_sparsity_fraction(delta: float) -> float:
    """Largest s/n allowed by the n/s bound's second term, at RIP order 2s"""
    _validate_delta(delta)
    return 0.5 * _c0(delta / 2.0) / (1.0 + math.log(12.0 / delta))


def save_phase_diagram(pd: PhaseDiagram, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        f.write(f"# ensemble={pd.ensemble_kind}\n")
        f.write(f"# n={pd.ambient_dim}\n")
        f.write(f"# trials={pd.trials}\n")
        f.write(f"# tolerance={pd.tolerance!r}\n")
        f.write(f"# seed={pd.seed}\n")
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['m_over_n', 's_over_m', 'success_rate'])
        for j, m_ratio in enumerate(pd.m_over_n):
            for i, s_ratio in enumerate(pd.s_over_m):
                writer.writerow([repr(float(m_ratio)), repr(float(s_ratio)), repr(float(pd.success[i, j]))])
    return path


def load_phase_diagram(path) -> PhaseDiagram:
    metadata = {}
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()
    body = []
    for line in lines:
        if line.startswith('#'):
            key, _, value = line[1:].strip().partition('=')
            metadata[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    for row in csv.DictReader(body):
        rows.append((float(row['m_over_n']), float(row['s_over_m']), float(row['success_rate'])))
    if not rows:
        raise ValueError(f"{path} contains no phase-diagram cells")
    m_grid = sorted({r[0] for r in rows})
    s_grid = sorted({r[1] for r in rows})
    success = np.full((len(s_grid), len(m_grid)), np.nan)
    m_index = {v: j for j, v in enumerate(m_grid)}
    s_index = {v: i for i, v in enumerate(s_grid)}
    for m_ratio, s_ratio, rate in rows:
        success[s_index[s_ratio], m_index[m_ratio]] = rate
    try:
        return PhaseDiagram(ensemble_kind=metadata.get('ensemble', 'gaussian'),
                            ambient_dim=int(metadata['n']), m_over_n=m_grid, s_over_m=s_grid,
                            success=success, trials=int(metadata.get('trials', 0)),
                            tolerance=float(metadata.get('tolerance', DEFAULT_TOLERANCE)),
                            seed=int(metadata.get('seed', 0)))
    except KeyError as e:
        raise ValueError(f"{path} is missing header field {e}")


def render_phase_diagram(pd: PhaseDiagram, path) -> Path:
    """Static SVG heatmap of success probability"""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 5))
    image = ax.imshow(np.nan_to_num(pd.success, nan=0.0), origin='lower', aspect='auto',
                      cmap='viridis', vmin=0.0, vmax=1.0,
                      extent=(0.0, float(pd.m_over_n[-1]), 0.0, float(pd.s_over_m[-1])))
    ax.set_xlabel('M / n')
    ax.set_ylabel('s / M')
    ax.set_title(f"{pd.ensemble_kind} phase diagram (n = {pd.ambient_dim}, {pd.trials} trials)")
    fig.colorbar(image, ax=ax, label='success probability')
    fig.tight_layout()
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return path
