#!/usr/bin/env python3
"""
ARCS-LRT Controller
Low-resolution side information: block downsampling, zero-skew affine
tracks with random-walk dynamics, warp → sparsity mapping, unscented
moment propagation, the penalized expected-error cost and a blob tracker
"""
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from filterpy.kalman import JulierSigmaPoints, unscented_transform
from scipy import ndimage
from scipy.optimize import minimize_scalar
from scipy.stats import norm

try:
    from arcs_cv import StepResult
    from decoder import DecodeError, SolverConfig, decode
    from measurement import BackgroundCalibration, MeasurementEnsemble, foreground_measurements
    from phase_diagram import LookupPolicy, PhaseDiagram, lookup_or_clamp
    from signal_model import Frame, threshold_count
except ImportError:
    from src.arcs_cv import StepResult
    from src.decoder import DecodeError, SolverConfig, decode
    from src.measurement import BackgroundCalibration, MeasurementEnsemble, foreground_measurements
    from src.phase_diagram import LookupPolicy, PhaseDiagram, lookup_or_clamp
    from src.signal_model import Frame, threshold_count

H_MODES = ('geometric', 'literal')
TRACK_DIM = 4
MAX_DELTA = math.sqrt(2.0) - 1.0


@dataclass(frozen=True)
class WarpParams:
    """(x-scale, y-scale, x-translation, y-translation) in low-resolution pixels"""

    p1: float
    p2: float
    p3: float
    p4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3, self.p4], dtype=np.float64)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> 'WarpParams':
        if len(values) != TRACK_DIM:
            raise ValueError(f"A warp has {TRACK_DIM} parameters, got {len(values)}")
        return cls(*(float(v) for v in values))

    @property
    def is_valid(self) -> bool:
        return self.p1 > 0 and self.p2 > 0


@dataclass(frozen=True)
class TrackDynamics:
    """Random walk p_t = p_{t-1} + η_t, η_t ~ N(0, Σ)"""

    covariance: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 3.0, 3.0]))

    def __post_init__(self):
        covariance = np.array(self.covariance, dtype=np.float64)
        if covariance.shape != (TRACK_DIM, TRACK_DIM):
            raise ValueError(f"Track covariance must be {TRACK_DIM}x{TRACK_DIM}")
        if not np.allclose(covariance, covariance.T):
            raise ValueError("Track covariance must be symmetric")
        object.__setattr__(self, 'covariance', covariance)


@dataclass(frozen=True)
class TemplateOutline:
    """Corner coordinates tracing the template outline"""

    corners: Tuple[Tuple[float, float], ...] = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))

    def __post_init__(self):
        if len(self.corners) < 3:
            raise ValueError("A template outline needs at least 3 corners")
        if self.shoelace_sum() == 0.0:
            raise ValueError("Degenerate template outline (zero area)")

    def shoelace_sum(self) -> float:
        corners = np.asarray(self.corners, dtype=np.float64)
        following = np.roll(corners, -1, axis=0)
        return float(np.sum(corners[:, 0] * following[:, 1] - corners[:, 1] * following[:, 0]))

    @property
    def area(self) -> float:
        return 0.5 * abs(self.shoelace_sum())


@dataclass
class SparsityPmf:
    """q(k) for k = 0..n"""

    probabilities: np.ndarray

    def __post_init__(self):
        probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if probabilities.ndim != 1 or probabilities.size < 1:
            raise ValueError("A sparsity pmf needs a 1-D support 0..n")
        if np.any(probabilities < 0) or abs(probabilities.sum() - 1.0) > 1e-12:
            raise ValueError("Sparsity pmf must be non-negative and sum to 1")
        self.probabilities = probabilities

    @property
    def ambient_dim(self) -> int:
        return self.probabilities.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probabilities.size)

    def mean(self) -> float:
        return float(np.dot(self.support, self.probabilities))

    @classmethod
    def point_mass(cls, k: int, ambient_dim: int) -> 'SparsityPmf':
        probabilities = np.zeros(ambient_dim + 1)
        probabilities[int(k)] = 1.0
        return cls(probabilities)


@dataclass(frozen=True)
class LrtConfig:
    penalty: float
    downsample_factor: int
    tau: float
    sigma_b_sq: float
    ambient_dim: int
    delta: float = 0.25
    h_mode: str = 'geometric'

    def __post_init__(self):
        side = math.isqrt(self.ambient_dim)
        if side * side != self.ambient_dim:
            raise ValueError("ambient_dim must be a square pixel count")
        if self.downsample_factor < 1 or side % self.downsample_factor:
            raise ValueError(f"Downsample factor {self.downsample_factor} must divide N = {side}")
        if self.penalty <= 0:
            raise ValueError("lambda must be positive")
        if not 0.0 < self.delta < MAX_DELTA:
            raise ValueError(f"delta must lie in (0, √2−1), got {self.delta}")
        if self.h_mode not in H_MODES:
            raise ValueError(f"h_mode must be one of {H_MODES}")

    @property
    def side_length(self) -> int:
        return math.isqrt(self.ambient_dim)

    @property
    def low_res_side(self) -> int:
        return self.side_length // self.downsample_factor

    @property
    def side_measurements(self) -> int:
        """L² low-resolution pixels acquired per frame"""
        return self.low_res_side ** 2


def downsample(frame_hi, factor: int) -> Frame:
    """
    Block means over D×D blocks. Low-res pixel centers map back to
    high-res coordinates as t_X = D·t_Z − (D−1)/2 (1-based).
    """
    pixels = frame_hi.pixels if isinstance(frame_hi, Frame) else np.asarray(frame_hi, dtype=np.float64)
    side = pixels.shape[0]
    if factor < 1 or side % factor:
        raise ValueError(f"Downsample factor {factor} does not divide N = {side}")
    low = side // factor
    return Frame(pixels.reshape(low, factor, low, factor).mean(axis=(1, 3)))


def block_center(low_res_coordinate: float, factor: int) -> float:
    return factor * low_res_coordinate - (factor - 1) / 2.0


def warp_area(p: np.ndarray, template: TemplateOutline, factor: int, mode: str = 'geometric') -> float:
    """Real-valued high-resolution area covered by the warped template"""
    p = np.asarray(p, dtype=np.float64)
    if mode == 'geometric':
        determinant = p[0] * p[1]
    elif mode == 'literal':
        determinant = p[0] * p[3] - p[1] * p[2]
    else:
        raise ValueError(f"h mode must be one of {H_MODES}")
    return factor ** 2 * abs(determinant) * template.area


def warp_to_sparsity(p: WarpParams, template: TemplateOutline, factor: int,
                     mode: str = 'geometric') -> int:
    """h(p) = ⌈area⌉, with zero area clamped to 1"""
    area = warp_area(p.as_array(), template, factor, mode)
    return max(1, math.ceil(area - 1e-9))


def _symmetric_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    scale = max(np.max(np.abs(eigenvalues)), 1.0)
    if np.min(eigenvalues) < -1e-10 * scale:
        raise ValueError("Track covariance is not positive semidefinite")
    root = np.sqrt(np.clip(eigenvalues, 0.0, None))
    return (eigenvectors * root) @ eigenvectors.T


def unscented_moments(p_prev: WarpParams, dynamics: TrackDynamics, template: TemplateOutline,
                      factor: int, mode: str = 'geometric') -> Tuple[float, float]:
    """
    Mean and variance of the predicted (pre-ceiling) area after one
    random-walk step, using 2·4+1 Julier sigma points with d + κ = 3.
    """
    points = JulierSigmaPoints(n=TRACK_DIM, kappa=3.0 - TRACK_DIM, sqrt_method=_symmetric_sqrt)
    sigmas = points.sigma_points(p_prev.as_array(), dynamics.covariance)
    areas = np.array([[warp_area(sigma, template, factor, mode)] for sigma in sigmas])
    mean, covariance = unscented_transform(areas, points.Wm, points.Wc)
    return float(mean[0]), float(max(covariance[0, 0], 0.0))


def discretize_pmf(mu: float, sigma_sq: float, ambient_dim: int) -> SparsityPmf:
    """Normal density sampled at k = 0..n and renormalized"""
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be non-negative")
    support = np.arange(ambient_dim + 1)
    if sigma_sq <= 1e-12:
        return SparsityPmf.point_mass(int(min(max(round(mu), 0), ambient_dim)), ambient_dim)
    log_density = norm.logpdf(support, loc=mu, scale=math.sqrt(sigma_sq))
    weights = np.exp(log_density - np.max(log_density))
    probabilities = weights / weights.sum()
    return SparsityPmf(probabilities / probabilities.sum())


def recovery_constant(delta: float) -> float:
    """C0 = (2 − (2 − √2)δ) / (1 − (1 − √2)δ), for δ in (0, √2 − 1)"""
    if not 0.0 < delta < MAX_DELTA:
        raise ValueError(f"delta must lie in (0, √2−1), got {delta}")
    root2 = math.sqrt(2.0)
    return (2.0 - (2.0 - root2) * delta) / (1.0 - (1.0 - root2) * delta)


class _CostModel:
    """Cost terms precomputed from q so any real ŝ in [1, n] costs O(1)"""

    def __init__(self, q: SparsityPmf, cfg: LrtConfig):
        self.n = q.ambient_dim
        self.cfg = cfg
        probabilities = q.probabilities
        self.cdf = np.cumsum(probabilities)
        self.first_moment = np.cumsum(np.arange(self.n + 1) * probabilities)
        self.c0 = recovery_constant(cfg.delta)
        self.noise_l1 = math.sqrt(2.0 / math.pi) * math.sqrt(cfg.sigma_b_sq)

    def __call__(self, s_hat: float) -> float:
        if s_hat <= 0:
            raise ValueError("The cost is undefined at s_hat = 0")
        n = self.n
        index = min(int(math.floor(s_hat)), n)
        mass_above = max(1.0 - self.cdf[index], 0.0)
        moment_above = self.first_moment[n] - self.first_moment[index]
        j0 = self.noise_l1 * (n - s_hat) * (1.0 - mass_above)
        j1 = ((1.0 + self.cfg.tau) / 2.0 * (moment_above - s_hat * mass_above)
              + self.noise_l1 * (n * mass_above - moment_above))
        return self.c0 / math.sqrt(s_hat) * (j0 + j1) + self.cfg.penalty * s_hat


def expected_cost(s_candidate: float, q: SparsityPmf, cfg: LrtConfig) -> float:
    """(C0/√ŝ)(J0 + J1) + λŝ"""
    if not 1 <= s_candidate <= q.ambient_dim:
        raise ValueError(f"s_candidate must lie in [1, {q.ambient_dim}], got {s_candidate}")
    return _CostModel(q, cfg)(s_candidate)


def minimize_cost(q: SparsityPmf, cfg: LrtConfig) -> int:
    """
    Bounded golden-section/parabolic search on the continuous relaxation,
    then the best integer within ±2 of the continuous minimizer.
    """
    n = q.ambient_dim
    if n < 1:
        raise ValueError("Sparsity pmf must cover at least k = 0..1")
    cost = _CostModel(q, cfg)
    if n == 1:
        return 1
    result = minimize_scalar(cost, bounds=(1.0, float(n)), method='bounded',
                             options={'xatol': 1e-6})
    center = float(result.x)
    low = max(1, int(math.floor(center)) - 2)
    high = min(n, int(math.ceil(center)) + 2)
    candidates = range(low, high + 1)
    values = [cost(float(s)) for s in candidates]
    return int(candidates[int(np.argmin(values))])


def _blob_labels(frame_lo, background_lo, tau_blob: float):
    frame = frame_lo.pixels if isinstance(frame_lo, Frame) else np.asarray(frame_lo, dtype=np.float64)
    background = background_lo.pixels if isinstance(background_lo, Frame) else np.asarray(background_lo)
    if frame.shape != background.shape:
        raise ValueError("Frame and background must have the same size")
    mask = np.abs(frame - background) >= tau_blob
    return ndimage.label(mask, structure=np.ones((3, 3), dtype=int))


def _box_warp(region) -> WarpParams:
    rows, cols = region
    return WarpParams(p1=float(cols.stop - cols.start), p2=float(rows.stop - rows.start),
                      p3=float(cols.start), p4=float(rows.start))


def blob_tracks(frame_lo, background_lo, tau_blob: float) -> List[WarpParams]:
    """
    Every 8-connected region of |frame − background| >= tau_blob, each as the
    warp of the unit-square template onto its bounding box, in label order.
    """
    labels, count = _blob_labels(frame_lo, background_lo, tau_blob)
    if count == 0:
        return []
    return [_box_warp(region) for region in ndimage.find_objects(labels)]


def blob_track(frame_lo, background_lo, tau_blob: float) -> Optional[WarpParams]:
    """Bounding-box warp of the largest region only, None on an empty mask"""
    labels, count = _blob_labels(frame_lo, background_lo, tau_blob)
    if count == 0:
        return None
    largest = int(np.argmax(np.bincount(labels.ravel())[1:]))
    return _box_warp(ndimage.find_objects(labels)[largest])


@dataclass
class LrtControllerState:
    s_hat: int
    phase_diagram: PhaseDiagram
    policy: LookupPolicy
    config: LrtConfig
    dynamics: TrackDynamics = field(default_factory=TrackDynamics)
    template: TemplateOutline = field(default_factory=TemplateOutline)
    tau_blob: float = 0.05

    def rows_for_current(self) -> int:
        return lookup_or_clamp(self.phase_diagram, self.s_hat, self.policy)


def predict_sparsity(tracks: Iterable[WarpParams], state: LrtControllerState) -> Tuple[float, float]:
    """Summed UT moments over independent tracks"""
    mu_total, var_total = 0.0, 0.0
    for track in tracks:
        mu, var = unscented_moments(track, state.dynamics, state.template,
                                    state.config.downsample_factor, state.config.h_mode)
        mu_total += mu
        var_total += var
    return mu_total, var_total


def arcs_lrt_step(state: LrtControllerState, y_t: np.ndarray, frame_lo_t, background_lo,
                  calibration: BackgroundCalibration, ensemble: MeasurementEnsemble,
                  solver_config: Optional[SolverConfig] = None,
                  tracks: Optional[List[WarpParams]] = None) -> StepResult:
    """
    One low-resolution-tracking step: decode f̂_t, obtain p_t, predict q_{t+1}
    and choose ŝ_{t+1} by minimizing the expected cost.

    Args:
        state: Controller state holding ŝ_t
        y_t: Measurements acquired with M_t rows
        frame_lo_t: L×L low-resolution frame
        background_lo: L×L low-resolution background
        calibration: Background calibration
        ensemble: Measurement ensemble
        solver_config: Decoder configuration
        tracks: Externally supplied tracks (None → blob tracker, [] → no track)

    Returns:
        StepResult; rows_next excludes the L² side measurements
    """
    cfg = state.config
    n = cfg.ambient_dim
    rows = len(y_t)
    op = ensemble.operator(rows)
    xi = foreground_measurements(y_t, calibration, rows)

    error = None
    decode_iters = 0
    try:
        result = decode(xi, op, solver_config)
        f_hat = result.estimate
        decode_iters = result.iterations
    except DecodeError as e:
        f_hat = np.zeros(n)
        error = str(e)
        decode_iters = e.result.iterations if e.result else 0

    if tracks is None:
        tracks = blob_tracks(frame_lo_t, background_lo, state.tau_blob)
    tracks = [track for track in tracks if track is not None]

    mu_pred = sigma_pred = math.nan
    if tracks:
        mu_pred, var_pred = predict_sparsity(tracks, state)
        sigma_pred = math.sqrt(var_pred)
        s_next = minimize_cost(discretize_pmf(mu_pred, var_pred, n), cfg)
    elif error is not None:
        s_next = min(2 * max(state.s_hat, 1), n)
    else:
        s_next = threshold_count(f_hat, cfg.tau)
    s_next = int(min(max(s_next, 0), n))

    return StepResult(f_hat=f_hat, s_hat_next=s_next,
                      rows_next=lookup_or_clamp(state.phase_diagram, s_next, state.policy),
                      diagnostics={'mu_pred': mu_pred, 'sigma_pred': sigma_pred,
                                   'decode_iters': decode_iters, 'track_count': len(tracks)},
                      error=error)
