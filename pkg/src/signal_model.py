#!/usr/bin/env python3
"""
Signal Model
Frames, column-major vectorization, the background + foreground model and
synthetic sequence generation with exact ground truth
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Frame:
    """Square N×N image with intensities in [0, 1], indexed as pixels[y, x]"""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.shape[0] != pixels.shape[1] or pixels.shape[0] < 1:
            raise ValueError(f"Frame must be a non-empty square grid, got shape {pixels.shape}")
        if not np.all(np.isfinite(pixels)) or pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ValueError("Frame intensities must lie in [0, 1]")
        pixels.setflags(write=False)
        object.__setattr__(self, 'pixels', pixels)

    @property
    def side_length(self) -> int:
        return self.pixels.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.pixels.size


def vectorize(frame) -> np.ndarray:
    """
    Column-major vectorization of a frame (or any square grid)

    Args:
        frame: Frame instance or a 2-D array

    Returns:
        Length-N² vector; column 0 first
    """
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    return pixels.flatten(order='F')


def devectorize(vector: np.ndarray, side_length: Optional[int] = None) -> np.ndarray:
    """
    Inverse of vectorize: returns the N×N grid (not validated as a Frame, so
    signed foreground vectors can be viewed too)
    """
    vector = np.asarray(vector)
    if side_length is None:
        side_length = math.isqrt(vector.size)
    if side_length * side_length != vector.size:
        raise ValueError(f"Vector of length {vector.size} is not an N×N image")
    return vector.reshape((side_length, side_length), order='F')


@dataclass(frozen=True)
class ForegroundModel:
    """Foreground threshold tau and background residual variance sigma_b_sq"""

    tau: float = 0.1
    sigma_b_sq: float = (4.0 / 255.0) ** 2

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.sigma_b_sq < 0.0:
            raise ValueError(f"sigma_b_sq must be non-negative, got {self.sigma_b_sq}")
        if self.sigma_b_sq >= self.tau ** 2:
            raise ValueError(
                f"sigma_b_sq ({self.sigma_b_sq:.3g}) must be smaller than tau² ({self.tau ** 2:.3g})")

    @property
    def sigma_b(self) -> float:
        return math.sqrt(self.sigma_b_sq)


def _check_support(support, dim: int) -> np.ndarray:
    support = np.unique(np.asarray(support, dtype=np.int64).ravel())
    if support.size and (support[0] < 0 or support[-1] >= dim):
        raise ValueError(f"Support indices must lie in [0, {dim - 1}]")
    return support


def foreground_magnitudes(tau: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Signed draws, uniform on [-1, -tau] ∪ [tau, 1]"""
    magnitudes = rng.uniform(tau, 1.0, size=count)
    signs = rng.choice(np.array([-1.0, 1.0]), size=count)
    return signs * magnitudes


def sample_foreground(model: ForegroundModel, support, dim: int, rng_seed,
                      noise_sigma: Optional[float] = None) -> np.ndarray:
    """
    Draw a foreground vector: uniform magnitudes in [tau, 1] on the support,
    zero-mean Gaussian residue elsewhere.

    Args:
        model: Foreground model (tau, sigma_b_sq)
        support: Iterable of 0-based pixel indices
        dim: Ambient dimension n
        rng_seed: Seed (int, sequence or SeedSequence)
        noise_sigma: Off-support standard deviation, defaults to model.sigma_b

    Returns:
        Length-n vector
    """
    support = _check_support(support, dim)
    rng = np.random.default_rng(rng_seed)
    sigma = model.sigma_b if noise_sigma is None else noise_sigma
    values = rng.normal(0.0, sigma, size=dim)
    values[support] = foreground_magnitudes(model.tau, support.size, rng)
    return values


def sample_sparse_signal(tau: float, sparsity: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly s-sparse signal with the foreground magnitude law and a random support"""
    if not 0 <= sparsity <= dim:
        raise ValueError(f"Sparsity {sparsity} outside [0, {dim}]")
    signal = np.zeros(dim)
    support = rng.choice(dim, size=sparsity, replace=False)
    signal[support] = foreground_magnitudes(tau, sparsity, rng)
    return signal


def threshold_count(values: np.ndarray, tau: float) -> int:
    """|{i : |v(i)| >= tau}|"""
    return int(np.count_nonzero(np.abs(values) >= tau))


@dataclass
class ObjectTrajectory:
    """Axis-aligned rectangle moving with constant velocity, present on [appear, disappear)"""

    x: float
    y: float
    width: int
    height: int
    vx: float = 0.0
    vy: float = 0.0
    appear: int = 0
    disappear: Optional[int] = None

    def is_present(self, t: int) -> bool:
        return t >= self.appear and (self.disappear is None or t < self.disappear)

    def box_at(self, t: int) -> Tuple[int, int, int, int]:
        """Unclipped (x, y, width, height) at frame t"""
        dt = t - self.appear
        return (int(round(self.x + self.vx * dt)), int(round(self.y + self.vy * dt)),
                self.width, self.height)

    @classmethod
    def from_dict(cls, data: Dict) -> 'ObjectTrajectory':
        width = int(data.get('width', 0))
        height = int(data.get('height', 0))
        if width <= 0 or height <= 0:
            raise ValueError(f"Object size must be positive, got {width}x{height}")
        return cls(x=float(data.get('x', 0)), y=float(data.get('y', 0)),
                   width=width, height=height,
                   vx=float(data.get('vx', 0.0)), vy=float(data.get('vy', 0.0)),
                   appear=int(data.get('appear', 0)),
                   disappear=data.get('disappear'))


@dataclass
class SceneConfig:
    """Description of a synthetic sequence"""

    side_length: int = 32
    frame_count: int = 20
    objects: List[ObjectTrajectory] = field(default_factory=list)
    model: ForegroundModel = field(default_factory=ForegroundModel)
    noise_sigma: float = 1.0 / 255.0
    repeat: bool = False
    calibration_frames: int = 30
    downsample_factor: int = 2

    def __post_init__(self):
        if self.side_length < 1 or self.frame_count < 1:
            raise ValueError("side_length and frame_count must be positive")
        if self.calibration_frames < 0:
            raise ValueError("calibration_frames must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.downsample_factor < 1 or self.side_length % self.downsample_factor:
            raise ValueError(
                f"downsample_factor {self.downsample_factor} must divide side_length {self.side_length}")


@dataclass
class GroundTruthSequence:
    """Background, per-frame foregrounds, supports, sparsities and visibility"""

    side_length: int
    background: np.ndarray
    foregrounds: List[np.ndarray]
    supports: List[np.ndarray]
    visible: List[bool]
    tracks: List[List[Tuple[float, float, float, float]]]

    @property
    def sparsities(self) -> List[int]:
        return [int(support.size) for support in self.supports]

    @property
    def frame_count(self) -> int:
        return len(self.foregrounds)


def clip_box(box: Tuple[int, int, int, int], side_length: int) -> Tuple[Tuple[int, int, int, int], bool]:
    """
    Clip (x, y, w, h) to the frame.

    Returns:
        ((x0, y0, x1, y1) half-open pixel bounds, fully_visible)
    """
    x, y, w, h = box
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, side_length), min(y + h, side_length)
    fully_visible = x0 == x and y0 == y and x1 == x + w and y1 == y + h
    return (x0, y0, max(x1, x0), max(y1, y0)), fully_visible


def synthesize_background(side_length: int, rng: np.random.Generator) -> np.ndarray:
    """
    Smooth two-tone texture: dark pixels in [0.03, 0.06], bright pixels in
    [0.94, 0.97]. Every pixel leaves at least 0.94 of intensity range on one side.
    """
    yy, xx = np.mgrid[0:side_length, 0:side_length] / float(side_length)
    fx, fy = rng.uniform(0.5, 2.0, size=2)
    phase_x, phase_y = rng.uniform(0.0, 2.0 * np.pi, size=2)
    pattern = np.sin(2 * np.pi * fx * xx + phase_x) * np.cos(2 * np.pi * fy * yy + phase_y)
    shade = 0.03 + 0.02 * np.abs(pattern) + rng.uniform(0.0, 0.01, size=pattern.shape)
    return np.where(pattern >= 0.0, shade, 1.0 - shade)


def _object_values(background: np.ndarray, tau: float, rng: np.random.Generator) -> np.ndarray:
    # |f| ~ U[tau, 1], signed toward the open side of each pixel; the frame clip
    # only trims draws above the 0.94 headroom, which stay above tau
    magnitudes = rng.uniform(tau, 1.0, size=background.shape)
    return np.where(background <= 0.5, magnitudes, -magnitudes)


def synthesize_sequence(scene: SceneConfig, rng_seed: int):
    """
    Generate frames x_t = f_t + b with exact ground truth.

    Args:
        scene: Scene description
        rng_seed: Master seed

    Returns:
        (GroundTruthSequence, frames, calibration_frames)
    """
    n_side = scene.side_length
    background_rng = np.random.default_rng([rng_seed, 0])
    background_img = synthesize_background(n_side, background_rng)
    background = vectorize(background_img)
    tau = scene.model.tau
    factor = scene.downsample_factor

    foregrounds, supports, visible, tracks, frames = [], [], [], [], []
    generated_count = 1 if scene.repeat else scene.frame_count

    for t in range(generated_count):
        rng = np.random.default_rng([rng_seed, 1, t])
        residue = rng.normal(0.0, scene.noise_sigma, size=(n_side, n_side))
        mask = np.zeros((n_side, n_side), dtype=bool)
        all_visible = True
        frame_tracks = []
        for obj in scene.objects:
            if not obj.is_present(t):
                continue
            (x0, y0, x1, y1), fully_visible = clip_box(obj.box_at(t), n_side)
            all_visible = all_visible and fully_visible
            mask[y0:y1, x0:x1] = True
            if fully_visible:
                x, y, w, h = obj.box_at(t)
                frame_tracks.append((w / factor, h / factor, x / factor, y / factor))

        foreground_img = residue.copy()
        foreground_img[mask] = _object_values(background_img[mask], tau, rng)
        image = np.clip(background_img + foreground_img, 0.0, 1.0)
        foreground = vectorize(image - background_img)

        frames.append(Frame(image))
        foregrounds.append(foreground)
        supports.append(np.flatnonzero(np.abs(foreground) >= tau))
        visible.append(all_visible)
        tracks.append(frame_tracks)

    if scene.repeat:
        frames = frames * scene.frame_count
        foregrounds = foregrounds * scene.frame_count
        supports = supports * scene.frame_count
        visible = visible * scene.frame_count
        tracks = tracks * scene.frame_count

    calibration = []
    for j in range(scene.calibration_frames):
        rng = np.random.default_rng([rng_seed, 2, j])
        residue = rng.normal(0.0, scene.noise_sigma, size=(n_side, n_side))
        calibration.append(Frame(np.clip(background_img + residue, 0.0, 1.0)))

    truth = GroundTruthSequence(side_length=n_side, background=background,
                                foregrounds=foregrounds, supports=supports,
                                visible=visible, tracks=tracks)
    return truth, frames, calibration


def scene_from_dict(data: Dict, model: ForegroundModel, downsample_factor: int = 2,
                    calibration_frames: int = 30) -> SceneConfig:
    """Build a SceneConfig from the `synthetic` config section"""
    objects = [ObjectTrajectory.from_dict(item) for item in data.get('objects', []) or []]
    return SceneConfig(side_length=int(data.get('side_length', 32)),
                       frame_count=int(data.get('frame_count', 20)),
                       objects=objects, model=model,
                       noise_sigma=float(data.get('noise_sigma', 1.0 / 255.0)),
                       repeat=bool(data.get('repeat', False)),
                       calibration_frames=calibration_frames,
                       downsample_factor=downsample_factor)
