import numpy as np
import pytest
from PIL import Image

from backsub.data_io import (
    CDNET_CODES, DatasetLayout, FrameSequence, Label, decode_label_frame,
    frame_index, load_groundtruth, load_sequence, read_frame, read_mask,
    sample_indices, sort_frame_paths, write_frame, write_mask,
)


def _write_png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def _make_generic_dataset(root, n_frames=4, h=12, w=16, gray=False):
    rng = np.random.default_rng(7)
    frames = rng.integers(0, 256, size=(n_frames, h, w, 3), dtype=np.uint8)
    for t in range(n_frames):
        img = frames[t, :, :, 0] if gray else frames[t]
        _write_png(root / "seq" / "input" / f"in{t + 1:06d}.png", img)
        gt = np.zeros((h, w), dtype=np.uint8)
        gt[2:6, 3:9] = 255
        _write_png(root / "seq" / "groundtruth" / f"gt{t + 1:06d}.png", gt)
    return frames


def test_load_sequence_counts_and_range(tmp_path):
    frames = _make_generic_dataset(tmp_path, n_frames=5)
    layout = DatasetLayout(root=tmp_path)
    seq = load_sequence(layout, "seq")
    assert len(seq) == 5
    assert (seq.height, seq.width) == (12, 16)
    assert seq[0].dtype == np.float32
    assert seq[0].min() >= 0.0 and seq[0].max() <= 1.0
    np.testing.assert_allclose(seq[2], frames[2] / 255.0, atol=1e-7)


def test_load_sequence_single_frame(tmp_path):
    _make_generic_dataset(tmp_path, n_frames=1)
    seq = load_sequence(DatasetLayout(root=tmp_path), "seq")
    assert len(seq) == 1


def test_grayscale_replicated_to_three_channels(tmp_path):
    _make_generic_dataset(tmp_path, gray=True)
    seq = load_sequence(DatasetLayout(root=tmp_path), "seq")
    frame = seq[0]
    assert frame.shape[-1] == 3
    np.testing.assert_array_equal(frame[:, :, 0], frame[:, :, 1])
    np.testing.assert_array_equal(frame[:, :, 0], frame[:, :, 2])


def test_load_sequence_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_sequence(DatasetLayout(root=tmp_path), "nope")


def test_load_sequence_inconsistent_sizes(tmp_path):
    _write_png(tmp_path / "seq" / "input" / "in000001.png",
               np.zeros((8, 8, 3), dtype=np.uint8))
    _write_png(tmp_path / "seq" / "input" / "in000002.png",
               np.zeros((8, 9, 3), dtype=np.uint8))
    with pytest.raises(ValueError, match="inconsistent"):
        load_sequence(DatasetLayout(root=tmp_path), "seq")


def test_numeric_ordering_beats_lexicographic(tmp_path):
    # zero-padding is inconsistent on purpose: "in10" < "in9" as strings
    for idx in (9, 10, 1):
        _write_png(tmp_path / "seq" / "input" / f"in{idx}.png",
                   np.full((4, 4, 3), idx, dtype=np.uint8))
    seq = load_sequence(DatasetLayout(root=tmp_path), "seq")
    values = [int(round(seq[t][0, 0, 0] * 255)) for t in range(3)]
    assert values == [1, 9, 10]


def test_frame_index_uses_last_digit_run():
    assert frame_index("v2_frame_000123.png") == 123
    assert frame_index("in000001.jpg") == 1
    assert frame_index("noindex.png") is None


def test_sort_frame_paths_fallback_lexicographic(tmp_path):
    paths = [tmp_path / "b.png", tmp_path / "a.png"]
    assert [p.name for p in sort_frame_paths(paths)] == ["a.png", "b.png"]


def test_round_trip_quantization(tmp_path):
    frame = np.random.default_rng(0).uniform(0, 1, size=(6, 5, 3)).astype(np.float32)
    write_frame(frame, tmp_path / "f.png")
    back = read_frame(tmp_path / "f.png")
    assert np.abs(back - frame).max() <= 1.0 / 255.0 + 1e-7


def test_write_mask_round_trip(tmp_path):
    mask = np.zeros((9, 7), dtype=bool)
    mask[2:5, 1:4] = True
    write_mask(mask, tmp_path / "m.png")
    stored = np.asarray(Image.open(tmp_path / "m.png"))
    assert stored.dtype == np.uint8 and stored.ndim == 2
    assert set(np.unique(stored)) <= {0, 255}
    np.testing.assert_array_equal(read_mask(tmp_path / "m.png"), mask)


def test_write_mask_all_background_and_all_foreground(tmp_path):
    write_mask(np.zeros((4, 4), dtype=bool), tmp_path / "bg.png")
    write_mask(np.ones((4, 4), dtype=bool), tmp_path / "fg.png")
    assert np.asarray(Image.open(tmp_path / "bg.png")).max() == 0
    assert np.asarray(Image.open(tmp_path / "fg.png")).min() == 255


def test_write_mask_rejects_lossy_and_nonbinary(tmp_path):
    with pytest.raises(ValueError):
        write_mask(np.zeros((4, 4), dtype=bool), tmp_path / "m.jpg")
    with pytest.raises(ValueError):
        write_mask(np.full((4, 4), 7, dtype=np.uint8), tmp_path / "m.png")


def test_decode_cdnet_codes():
    raw = np.array([[0, 50], [85, 170], [255, 0]], dtype=np.uint8)
    decoded = decode_label_frame(raw, CDNET_CODES)
    assert decoded[0, 0] == Label.BACKGROUND
    assert decoded[0, 1] == Label.EXCLUDED      # shadow is not scored
    assert decoded[1, 0] == Label.OUT_OF_ROI
    assert decoded[1, 1] == Label.UNLABELED
    assert decoded[2, 0] == Label.FOREGROUND


def test_decode_is_pure_and_rejects_unknown_codes():
    raw = np.array([[0, 255]], dtype=np.uint8)
    a = decode_label_frame(raw, {0: Label.BACKGROUND, 255: Label.FOREGROUND})
    b = decode_label_frame(raw, {0: Label.BACKGROUND, 255: Label.FOREGROUND})
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError, match="unknown ground-truth codes"):
        decode_label_frame(np.array([[0, 17]], dtype=np.uint8),
                           {0: Label.BACKGROUND, 255: Label.FOREGROUND})


def test_decode_color_table_stopped_objects_excluded():
    raw = np.zeros((2, 2, 3), dtype=np.uint8)
    raw[0, 1] = (128, 128, 128)   # stopped object
    raw[1, 0] = (255, 0, 0)
    decoded = decode_label_frame(raw, {(0, 0, 0): Label.BACKGROUND,
                                       (128, 128, 128): Label.EXCLUDED,
                                       (255, 0, 0): Label.FOREGROUND})
    assert decoded[0, 0] == Label.BACKGROUND
    assert decoded[0, 1] == Label.EXCLUDED
    assert decoded[1, 0] == Label.FOREGROUND
    with pytest.raises(ValueError, match="unknown ground-truth colors"):
        decode_label_frame(np.full((1, 1, 3), 9, dtype=np.uint8),
                           {(0, 0, 0): Label.BACKGROUND})


def test_all_zero_groundtruth_is_all_background(tmp_path):
    _make_generic_dataset(tmp_path, n_frames=1)
    _write_png(tmp_path / "seq" / "groundtruth" / "gt000001.png",
               np.zeros((12, 16), dtype=np.uint8))
    labels = load_groundtruth(DatasetLayout(root=tmp_path), "seq")
    assert (labels[0] == Label.BACKGROUND).all()


def test_spatial_and_temporal_roi(tmp_path):
    h, w = 6, 8
    for t in (1, 2, 3):
        _write_png(tmp_path / "seq" / "input" / f"in{t:06d}.png",
                   np.zeros((h, w, 3), dtype=np.uint8))
        gt = np.zeros((h, w), dtype=np.uint8)
        gt[0, 0] = 255
        _write_png(tmp_path / "seq" / "groundtruth" / f"gt{t:06d}.png", gt)
    roi = np.zeros((h, w), dtype=np.uint8)
    roi[:, : w // 2] = 255
    _write_png(tmp_path / "seq" / "ROI.bmp", roi)
    (tmp_path / "seq" / "temporalROI.txt").write_text("2 3\n")
    layout = DatasetLayout(root=tmp_path, kind="cdnet",
                           label_codes={0: Label.BACKGROUND, 255: Label.FOREGROUND})
    labels = load_groundtruth(layout, "seq")
    assert (labels[0] == Label.UNLABELED).all()          # before temporal ROI
    assert labels[1][0, 0] == Label.FOREGROUND
    assert (labels[1][:, w // 2:] == Label.OUT_OF_ROI).all()


def test_sample_indices_identity_and_spacing():
    np.testing.assert_array_equal(sample_indices(480, 480), np.arange(480))
    np.testing.assert_array_equal(sample_indices(100, 480), np.arange(100))
    np.testing.assert_array_equal(sample_indices(960, 480), np.arange(480) * 2)


def test_sample_indices_strictly_increasing_in_range():
    for n, b in ((1, 1), (7, 3), (1000, 480), (481, 480), (999, 480)):
        idx = sample_indices(n, b)
        assert len(idx) == min(n, b)
        assert (np.diff(idx) > 0).all()
        assert idx[0] >= 0 and idx[-1] < n
    with pytest.raises(ValueError):
        sample_indices(0, 5)


def test_frame_sequence_from_array_and_batches():
    frames = np.random.default_rng(1).uniform(0, 1, (5, 4, 6, 3)).astype(np.float32)
    seq = FrameSequence.from_array(frames)
    np.testing.assert_array_equal(seq.get_batch([0, 3]), frames[[0, 3]])
    with pytest.raises(ValueError):
        FrameSequence.from_array(frames[..., :2])


def test_list_sequences_recurses_one_level(tmp_path):
    _write_png(tmp_path / "cat" / "vid" / "input" / "in000001.png",
               np.zeros((4, 4, 3), dtype=np.uint8))
    _write_png(tmp_path / "flat" / "input" / "in000001.png",
               np.zeros((4, 4, 3), dtype=np.uint8))
    layout = DatasetLayout(root=tmp_path)
    assert layout.list_sequences() == ["cat/vid", "flat"]
