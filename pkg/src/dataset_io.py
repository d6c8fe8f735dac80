#!/usr/bin/env python3
"""
Dataset I/O
PGM frames, ground-truth and track CSV files, and the Dataset container the
strategies consume (synthetic or loaded from a directory)
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

try:
    from signal_model import Frame, GroundTruthSequence, vectorize
except ImportError:
    from src.signal_model import Frame, GroundTruthSequence, vectorize

Track = Tuple[float, float, float, float]

FRAMES_DIR = 'frames'
CALIBRATION_DIR = 'calibration'
GROUND_TRUTH_FILE = 'ground_truth.csv'
TRACKS_FILE = 'tracks.csv'


def save_frame_pgm(frame: Frame, path) -> None:
    """Write a frame as binary PGM (P5, maxval 255)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.round(frame.pixels * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path, format='PPM')


def load_frame_pgm(path) -> Frame:
    """Read an 8-bit grayscale image and normalize to [0, 1]"""
    with Image.open(path) as image:
        data = np.asarray(image.convert('L'), dtype=np.float64)
    return Frame(data / 255.0)


def list_frame_files(directory) -> List[Path]:
    """PGM files in lexicographic order, which defines time"""
    return sorted(Path(directory).glob('*.pgm'))


def write_ground_truth_csv(path, sparsities: List[int], visible: List[bool]) -> None:
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['t', 's_true', 'visible'])
        for t, (s_true, is_visible) in enumerate(zip(sparsities, visible)):
            writer.writerow([t, s_true, int(bool(is_visible))])


def read_ground_truth_csv(path) -> Tuple[List[int], List[bool]]:
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for row in csv.DictReader(f):
            rows.append((int(row['t']), int(row['s_true']), row.get('visible', '1').strip() in ('1', 'true', 'True')))
    rows.sort()
    return [s for _, s, _ in rows], [v for _, _, v in rows]


def write_tracks_csv(path, tracks: List[List[Track]]) -> None:
    """One row per track; frames without any track get a `none` row"""
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['t', 'p1', 'p2', 'p3', 'p4'])
        for t, frame_tracks in enumerate(tracks):
            if not frame_tracks:
                writer.writerow([t, 'none', 'none', 'none', 'none'])
                continue
            for p in frame_tracks:
                writer.writerow([t] + [repr(float(v)) for v in p])


def read_tracks_csv(path, frame_count: Optional[int] = None) -> List[List[Track]]:
    """
    Read a track file; several rows may share a t

    Args:
        path: CSV path
        frame_count: Pad the result to this many frames

    Returns:
        Per-frame list of (p1, p2, p3, p4) tuples
    """
    by_frame = {}
    with open(path, 'r', encoding='utf-8') as f:
        for row in csv.DictReader(f):
            t = int(row['t'])
            values = [row.get(key, '').strip() for key in ('p1', 'p2', 'p3', 'p4')]
            frame_tracks = by_frame.setdefault(t, [])
            if any(v.lower() in ('none', '') for v in values):
                continue
            frame_tracks.append(tuple(float(v) for v in values))
    count = frame_count if frame_count is not None else (max(by_frame) + 1 if by_frame else 0)
    return [by_frame.get(t, []) for t in range(count)]


@dataclass
class Dataset:
    """Frames plus whatever ground truth is available"""

    frames: List[Frame]
    calibration_frames: List[Frame]
    foregrounds: Optional[List[np.ndarray]] = None
    sparsities: Optional[List[int]] = None
    visible: Optional[List[bool]] = None
    tracks: Optional[List[List[Track]]] = None
    background: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def side_length(self) -> int:
        return self.frames[0].side_length

    @property
    def ambient_dim(self) -> int:
        return self.frames[0].ambient_dim

    def __len__(self) -> int:
        return len(self.frames)

    def truncate(self, frame_count: Optional[int]) -> 'Dataset':
        """First `frame_count` frames (all when None)"""
        if frame_count is None or frame_count >= len(self.frames):
            return self

        def cut(items):
            return None if items is None else items[:frame_count]

        return Dataset(frames=self.frames[:frame_count],
                       calibration_frames=self.calibration_frames,
                       foregrounds=cut(self.foregrounds), sparsities=cut(self.sparsities),
                       visible=cut(self.visible), tracks=cut(self.tracks),
                       background=self.background)

    def reference_foreground(self, t: int) -> np.ndarray:
        """True f_t when known, else x_t minus the calibration mean"""
        if self.foregrounds is not None:
            return self.foregrounds[t]
        if self.background is None:
            raise ValueError("No ground-truth foreground and no calibration frames to estimate it")
        return vectorize(self.frames[t]) - self.background

    @classmethod
    def from_synthetic(cls, truth: GroundTruthSequence, frames: List[Frame],
                       calibration_frames: List[Frame]) -> 'Dataset':
        return cls(frames=list(frames), calibration_frames=list(calibration_frames),
                   foregrounds=truth.foregrounds, sparsities=truth.sparsities,
                   visible=truth.visible, tracks=truth.tracks,
                   background=truth.background)


def save_dataset(directory, truth: GroundTruthSequence, frames: List[Frame],
                 calibration_frames: List[Frame]) -> Path:
    """Write frames/, calibration/, ground_truth.csv and tracks.csv"""
    directory = Path(directory)
    for t, frame in enumerate(frames):
        save_frame_pgm(frame, directory / FRAMES_DIR / f"frame_{t:05d}.pgm")
    for j, frame in enumerate(calibration_frames):
        save_frame_pgm(frame, directory / CALIBRATION_DIR / f"background_{j:05d}.pgm")
    write_ground_truth_csv(directory / GROUND_TRUTH_FILE, truth.sparsities, truth.visible)
    write_tracks_csv(directory / TRACKS_FILE, truth.tracks)
    return directory


def load_dataset(directory, calibration_count: int = 30, track_file: Optional[str] = None) -> Dataset:
    """
    Load a dataset directory. When calibration/ is missing, the first
    `calibration_count` frames are treated as background-only and removed
    from the sequence.
    """
    directory = Path(directory)
    frame_dir = directory / FRAMES_DIR if (directory / FRAMES_DIR).is_dir() else directory
    frames = [load_frame_pgm(p) for p in list_frame_files(frame_dir)]
    if not frames:
        raise ValueError(f"No PGM frames found in {frame_dir}")

    calibration_dir = directory / CALIBRATION_DIR
    if calibration_dir.is_dir():
        calibration = [load_frame_pgm(p) for p in list_frame_files(calibration_dir)]
    else:
        if calibration_count >= len(frames):
            raise ValueError(f"Need more than {calibration_count} frames to split off calibration frames")
        calibration, frames = frames[:calibration_count], frames[calibration_count:]

    sparsities = visible = None
    gt_path = directory / GROUND_TRUTH_FILE
    if gt_path.exists():
        sparsities, visible = read_ground_truth_csv(gt_path)
        sparsities, visible = sparsities[:len(frames)], visible[:len(frames)]

    tracks = None
    track_path = Path(track_file) if track_file else directory / TRACKS_FILE
    if track_path.exists():
        tracks = read_tracks_csv(track_path, frame_count=len(frames))

    background = None
    if calibration:
        background = np.mean([vectorize(frame) for frame in calibration], axis=0)

    return Dataset(frames=frames, calibration_frames=calibration, sparsities=sparsities,
                   visible=visible, tracks=tracks, background=background)
