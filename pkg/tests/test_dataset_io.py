import numpy as np
import pytest

from dataset_io import (Dataset, load_dataset, load_frame_pgm, read_tracks_csv, save_dataset, save_frame_pgm,
                        write_tracks_csv)
from signal_model import Frame, ObjectTrajectory, SceneConfig, synthesize_sequence


def test_pgm_round_trip_is_exact_on_8bit_levels(tmp_path):
    levels = np.arange(16, dtype=np.float64).reshape(4, 4) * 17 / 255.0
    save_frame_pgm(Frame(levels), tmp_path / 'frame.pgm')
    assert (tmp_path / 'frame.pgm').read_bytes().startswith(b'P5')
    np.testing.assert_allclose(load_frame_pgm(tmp_path / 'frame.pgm').pixels, levels, atol=1e-12)


def test_tracks_csv_keeps_multiple_tracks_and_empty_frames(tmp_path):
    tracks = [[(1.0, 2.0, 3.0, 4.0), (5.0, 6.0, 7.0, 8.5)], [], [(1.5, 1.5, 0.0, 0.0)]]
    write_tracks_csv(tmp_path / 'tracks.csv', tracks)
    assert read_tracks_csv(tmp_path / 'tracks.csv') == tracks
    assert read_tracks_csv(tmp_path / 'tracks.csv', frame_count=5)[3:] == [[], []]


def test_save_and_load_dataset(tmp_path):
    scene = SceneConfig(side_length=8, frame_count=3, calibration_frames=2,
                        objects=[ObjectTrajectory(x=2, y=2, width=2, height=4)])
    truth, frames, calibration = synthesize_sequence(scene, rng_seed=1)
    save_dataset(tmp_path / 'seq', truth, frames, calibration)

    dataset = load_dataset(tmp_path / 'seq')
    assert len(dataset) == 3
    assert len(dataset.calibration_frames) == 2
    assert dataset.sparsities == truth.sparsities
    assert dataset.tracks == truth.tracks
    assert dataset.foregrounds is None
    assert dataset.reference_foreground(0).shape == (64,)


def test_load_dataset_splits_calibration_from_frames(tmp_path):
    for t in range(5):
        save_frame_pgm(Frame(np.full((4, 4), t / 10.0)), tmp_path / f'f{t:02d}.pgm')
    dataset = load_dataset(tmp_path, calibration_count=2)
    assert len(dataset) == 3
    assert len(dataset.calibration_frames) == 2
    np.testing.assert_allclose(dataset.background, np.full(16, round(0.05 * 255) / 255.0), atol=1e-2)


def test_load_dataset_needs_frames(tmp_path):
    with pytest.raises(ValueError):
        load_dataset(tmp_path)


def test_truncate_cuts_ground_truth_too():
    frames = [Frame(np.zeros((2, 2))) for _ in range(4)]
    dataset = Dataset(frames=frames, calibration_frames=frames[:1], sparsities=[0, 1, 2, 3],
                      tracks=[[], [], [], []])
    short = dataset.truncate(2)
    assert len(short) == 2
    assert short.sparsities == [0, 1]
    assert dataset.truncate(None) is dataset
