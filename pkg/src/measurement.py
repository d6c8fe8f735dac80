#!/usr/bin/env python3
"""
Measurement Ensembles
Seeded Gaussian / permuted-Fourier ensembles, rescaled row-subset operators,
the cross-validation matrix and background calibration (beta, zeta)
"""
import math
import struct
import threading
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

try:
    from signal_model import vectorize
except ImportError:
    from src.signal_model import vectorize

ENSEMBLE_KINDS = ('gaussian', 'fourier_permuted')

CALIBRATION_MAGIC = b'ARCSCAL\x00'
CALIBRATION_VERSION = 1
# magic, version, kind code, n, r, ensemble seed, cv seed, J
_CALIBRATION_HEADER = struct.Struct('<8sHBQQqqQ')

_ROW_BLOCK = 256


class MeasurementEnsemble:
    """
    Full seeded ensemble Φ. Rows are regenerated on demand from
    (seed, row_index); only the row prefix actually used is cached.
    """

    def __init__(self, kind: str, ambient_dim: int, seed: int):
        if kind not in ENSEMBLE_KINDS:
            raise ValueError(f"Unknown ensemble kind '{kind}', expected one of {ENSEMBLE_KINDS}")
        if ambient_dim < 1:
            raise ValueError("ambient_dim must be positive")
        self.kind = kind
        self.ambient_dim = int(ambient_dim)
        self.seed = int(seed)
        self.row_permutation = None
        if kind == 'fourier_permuted':
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.ambient_dim]))
            self.row_permutation = rng.permutation(self.ambient_dim)

        self._row_cache = np.empty((0, self.ambient_dim), dtype=self.dtype)
        self._cache_lock = threading.Lock()
        self._operators: Dict[int, 'RowSubsetOperator'] = {}

    @property
    def is_complex(self) -> bool:
        return self.kind == 'fourier_permuted'

    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    def generate_row(self, row_index: int) -> np.ndarray:
        """Row `row_index` of Φ, bit-identical across calls"""
        if not 0 <= row_index < self.ambient_dim:
            raise ValueError(f"Row index {row_index} outside [0, {self.ambient_dim})")
        n = self.ambient_dim
        if self.is_complex:
            k = self.row_permutation[row_index]
            return np.exp(-2j * np.pi * k * np.arange(n) / n) / math.sqrt(n)
        bit_generator = np.random.Philox(np.random.SeedSequence([self.seed, row_index]))
        return np.random.Generator(bit_generator).normal(0.0, 1.0 / math.sqrt(n), size=n)

    def _generate_block(self, start: int, stop: int) -> np.ndarray:
        block = np.empty((stop - start, self.ambient_dim), dtype=self.dtype)
        for offset, row_index in enumerate(range(start, stop)):
            block[offset] = self.generate_row(row_index)
        return block

    def rows(self, count: int) -> np.ndarray:
        """Dense first `count` rows (read-only view of the prefix cache)"""
        if not 1 <= count <= self.ambient_dim:
            raise ValueError(f"Row count {count} outside [1, {self.ambient_dim}]")
        with self._cache_lock:
            cached = self._row_cache.shape[0]
            if count > cached:
                grown = np.vstack([self._row_cache, self._generate_block(cached, count)])
                grown.setflags(write=False)
                self._row_cache = grown
            return self._row_cache[:count]

    def apply_unscaled(self, x: np.ndarray, count: int) -> np.ndarray:
        """First `count` rows of Φ times x, without the √(n/M) rescale"""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.ambient_dim,):
            raise ValueError(f"Dimension mismatch: expected ({self.ambient_dim},), got {x.shape}")
        if self.is_complex:
            return np.fft.fft(x, norm='ortho')[self.row_permutation[:count]]
        return self.rows(count) @ x

    def measure_full(self, x: np.ndarray) -> np.ndarray:
        """Φx over all n rows, streamed in blocks so the full matrix is never held"""
        x = np.asarray(x, dtype=np.float64)
        if self.is_complex:
            return self.apply_unscaled(x, self.ambient_dim)
        result = np.empty(self.ambient_dim)
        with self._cache_lock:
            prefix = self._row_cache
        cached = prefix.shape[0]
        if cached:
            result[:cached] = prefix @ x
        for start in range(cached, self.ambient_dim, _ROW_BLOCK):
            stop = min(start + _ROW_BLOCK, self.ambient_dim)
            result[start:stop] = self._generate_block(start, stop) @ x
        return result

    def operator(self, rows: int) -> 'RowSubsetOperator':
        """Shared RowSubsetOperator for `rows` (keeps the decoder's factorizations)"""
        with self._cache_lock:
            op = self._operators.get(rows)
            if op is None:
                op = RowSubsetOperator(self, rows)
                self._operators[rows] = op
            return op


class RowSubsetOperator:
    """Φ_t = √(n/M_t) · (first M_t rows of Φ)"""

    def __init__(self, ensemble: MeasurementEnsemble, rows: int):
        if not 1 <= rows <= ensemble.ambient_dim:
            raise ValueError(f"M_t must lie in [1, {ensemble.ambient_dim}], got {rows}")
        self.ensemble = ensemble
        self.rows = int(rows)
        self.scale = math.sqrt(ensemble.ambient_dim / self.rows)

    @property
    def ambient_dim(self) -> int:
        return self.ensemble.ambient_dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Length-M_t measurement vector (complex for the Fourier ensemble)"""
        return self.scale * self.ensemble.apply_unscaled(x, self.rows)

    def dense(self) -> np.ndarray:
        return self.scale * self.ensemble.rows(self.rows)

    @cached_property
    def real_matrix(self) -> np.ndarray:
        """Unscaled constraint matrix with complex rows split into real and imaginary rows"""
        rows = self.ensemble.rows(self.rows)
        if self.ensemble.is_complex:
            return np.vstack([rows.real, rows.imag])
        return np.array(rows)

    def to_real(self, measurements: np.ndarray) -> np.ndarray:
        """Stack real/imaginary parts to match real_matrix (and undo the scale)"""
        measurements = np.asarray(measurements) / self.scale
        if self.ensemble.is_complex:
            return np.concatenate([measurements.real, measurements.imag])
        return measurements.astype(np.float64)


class CrossValidationMatrix:
    """Ψ: r×n Rademacher matrix with entries ±1/√r"""

    def __init__(self, rows: int, ambient_dim: int, seed: int):
        if rows < 1 or ambient_dim < 1:
            raise ValueError("CV matrix dimensions must be positive")
        self.rows = int(rows)
        self.ambient_dim = int(ambient_dim)
        self.seed = int(seed)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.rows, self.ambient_dim]))
        signs = rng.integers(0, 2, size=(self.rows, self.ambient_dim)) * 2 - 1
        self.matrix = signs.astype(np.float64) / math.sqrt(self.rows)
        self.matrix.setflags(write=False)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.ambient_dim,):
            raise ValueError(f"Dimension mismatch: expected ({self.ambient_dim},), got {x.shape}")
        return self.matrix @ x


def cv_row_count(epsilon: float, rho: float) -> int:
    """
    Smallest r with r >= 8 ε⁻² ln(1/(2ρ))

    Args:
        epsilon: Accuracy in (0, 1)
        rho: Confidence in (0, 1/2)
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < rho < 0.5:
        raise ValueError(f"rho must lie in (0, 1/2), got {rho}")
    bound = 8.0 / epsilon ** 2 * math.log(1.0 / (2.0 * rho))
    return max(1, math.ceil(bound - 1e-12))


@dataclass(frozen=True)
class BackgroundCalibration:
    """β = Φb over the full ensemble (unscaled) and ζ = Ψb"""

    beta: np.ndarray
    zeta: np.ndarray
    frame_count: int
    ensemble_kind: str = 'gaussian'
    ensemble_seed: int = 0
    cv_seed: int = 0

    @property
    def ambient_dim(self) -> int:
        return self.beta.shape[0]

    @property
    def cv_rows(self) -> int:
        return self.zeta.shape[0]


def calibrate_background(frames, ensemble: MeasurementEnsemble,
                         cv_matrix: Optional[CrossValidationMatrix] = None) -> BackgroundCalibration:
    """
    Average measurements of J background-only frames.

    Args:
        frames: Background-only frames
        ensemble: Full measurement ensemble
        cv_matrix: Cross-validation matrix (zeta is empty without one)

    Returns:
        BackgroundCalibration with unscaled β
    """
    frames = list(frames)
    if not frames:
        raise ValueError("Background calibration needs at least one frame")
    mean_background = np.mean([vectorize(frame) for frame in frames], axis=0)
    if mean_background.shape[0] != ensemble.ambient_dim:
        raise ValueError("Calibration frames do not match the ensemble dimension")
    return BackgroundCalibration(beta=ensemble.measure_full(mean_background),
                                 zeta=cv_matrix.apply(mean_background) if cv_matrix else np.zeros(0),
                                 frame_count=len(frames),
                                 ensemble_kind=ensemble.kind,
                                 ensemble_seed=ensemble.seed,
                                 cv_seed=cv_matrix.seed if cv_matrix else 0)


def foreground_measurements(y_t: np.ndarray, calibration: BackgroundCalibration, rows: int) -> np.ndarray:
    """ξ_t = y_t − √(n/M_t)·β[:M_t]"""
    if rows > calibration.beta.shape[0]:
        raise ValueError(f"M_t = {rows} exceeds the stored beta length {calibration.beta.shape[0]}")
    y_t = np.asarray(y_t)
    if y_t.shape != (rows,):
        raise ValueError(f"Expected {rows} measurements, got {y_t.shape}")
    scale = math.sqrt(calibration.ambient_dim / rows)
    return y_t - scale * calibration.beta[:rows]


def cv_foreground(chi_t: np.ndarray, calibration: BackgroundCalibration) -> np.ndarray:
    """γ_t = χ_t − ζ"""
    chi_t = np.asarray(chi_t, dtype=np.float64)
    if chi_t.shape != calibration.zeta.shape:
        raise ValueError("CV measurement length does not match the calibration")
    return chi_t - calibration.zeta


def measure_frame(op: RowSubsetOperator, frame, cv_matrix: Optional[CrossValidationMatrix] = None):
    """Simulated acquisition: (y_t, χ_t) for one frame (χ_t is None without Ψ)"""
    x = vectorize(frame)
    chi = cv_matrix.apply(x) if cv_matrix is not None else None
    return op.apply(x), chi


def estimate_rip_ratio(op: RowSubsetOperator, sparsity: int, trials: int, rng_seed) -> Tuple[float, float]:
    """
    Envelope of ‖Φ_t f‖²/‖f‖² over random s-sparse Gaussian f

    Returns:
        (min_ratio, max_ratio); max(1 - min, max - 1) lower-bounds δ_s
    """
    n = op.ambient_dim
    if not 1 <= sparsity <= n:
        raise ValueError(f"Sparsity {sparsity} outside [1, {n}]")
    rng = np.random.default_rng(rng_seed)
    ratios = np.empty(trials)
    for trial in range(trials):
        f = np.zeros(n)
        support = rng.choice(n, size=sparsity, replace=False)
        f[support] = rng.standard_normal(sparsity)
        ratios[trial] = np.sum(np.abs(op.apply(f)) ** 2) / np.sum(f ** 2)
    return float(ratios.min()), float(ratios.max())


def save_calibration(calibration: BackgroundCalibration, path) -> Path:
    """Binary file: header then β and ζ as little-endian float64 (complex β interleaved)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kind_code = ENSEMBLE_KINDS.index(calibration.ensemble_kind)
    header = _CALIBRATION_HEADER.pack(CALIBRATION_MAGIC, CALIBRATION_VERSION, kind_code,
                                      calibration.ambient_dim, calibration.cv_rows,
                                      calibration.ensemble_seed, calibration.cv_seed,
                                      calibration.frame_count)
    beta = calibration.beta
    if np.iscomplexobj(beta):
        beta = beta.astype('<c16').view('<f8')
    with open(path, 'wb') as f:
        f.write(header)
        f.write(np.ascontiguousarray(beta, dtype='<f8').tobytes())
        f.write(np.ascontiguousarray(calibration.zeta, dtype='<f8').tobytes())
    return path


def load_calibration(path) -> BackgroundCalibration:
    with open(path, 'rb') as f:
        data = f.read()
    if len(data) < _CALIBRATION_HEADER.size:
        raise ValueError(f"{path} is too short to be a calibration file")
    magic, version, kind_code, n, r, ensemble_seed, cv_seed, frame_count = \
        _CALIBRATION_HEADER.unpack_from(data)
    if magic != CALIBRATION_MAGIC:
        raise ValueError(f"{path} is not a calibration file")
    if version != CALIBRATION_VERSION:
        raise ValueError(f"Unsupported calibration version {version}")
    kind = ENSEMBLE_KINDS[kind_code]
    beta_len = 2 * n if kind == 'fourier_permuted' else n
    payload = np.frombuffer(data, dtype='<f8', offset=_CALIBRATION_HEADER.size)
    if payload.size != beta_len + r:
        raise ValueError(f"{path} payload length does not match its header")
    beta = payload[:beta_len].astype(np.float64)
    if kind == 'fourier_permuted':
        beta = beta.view(np.complex128)
    zeta = payload[beta_len:].astype(np.float64)
    return BackgroundCalibration(beta=beta.copy(), zeta=zeta, frame_count=frame_count,
                                 ensemble_kind=kind, ensemble_seed=ensemble_seed, cv_seed=cv_seed)
