"""Loading and writing of frame sequences, ground-truth labels and masks.

Conventions used across the package:

* a *frame* is a float32 array of shape ``(h, w, 3)`` with values in [0, 1];
* a *label frame* is a uint8 array of shape ``(h, w)`` holding :class:`Label` codes;
* a *mask* is a boolean array of shape ``(h, w)`` (foreground = True).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class Label(IntEnum):
    """Per-pixel ground-truth semantics."""

    BACKGROUND = 0
    FOREGROUND = 1
    EXCLUDED = 2
    OUT_OF_ROI = 3
    UNLABELED = 4


#: Labels that take part in confusion counting; everything else is skipped.
SCORED_LABELS = (Label.BACKGROUND, Label.FOREGROUND)

# Default ground-truth decoding tables per dataset family.  Keys are either
# stored gray codes (int) or stored RGB triples (tuple); tables are
# configurable per layout and must cover every code present in the files.
CDNET_CODES = {
    0: Label.BACKGROUND,
    50: Label.EXCLUDED,       # shadows are not scored
    85: Label.OUT_OF_ROI,
    170: Label.UNLABELED,
    255: Label.FOREGROUND,
}

BINARY_CODES = {0: Label.BACKGROUND, 255: Label.FOREGROUND}

LASIESTA_CODES = {
    (0, 0, 0): Label.BACKGROUND,
    (128, 128, 128): Label.EXCLUDED,  # stopped moving objects are not scored
    (255, 0, 0): Label.FOREGROUND,
    (0, 255, 0): Label.FOREGROUND,
    (0, 0, 255): Label.FOREGROUND,
    (255, 255, 0): Label.FOREGROUND,
    (255, 0, 255): Label.FOREGROUND,
    (0, 255, 255): Label.FOREGROUND,
    (255, 255, 255): Label.FOREGROUND,
}

_LAYOUT_DEFAULTS = {
    "generic": dict(input_subdir="input", gt_subdir="groundtruth",
                    roi_filename=None, temporal_roi_filename=None,
                    label_codes=BINARY_CODES),
    "cdnet": dict(input_subdir="input", gt_subdir="groundtruth",
                  roi_filename="ROI.bmp", temporal_roi_filename="temporalROI.txt",
                  label_codes=CDNET_CODES),
    "lasiesta": dict(input_subdir="", gt_subdir="{seq}-GT",
                     roi_filename=None, temporal_roi_filename=None,
                     label_codes=LASIESTA_CODES),
    "bmc": dict(input_subdir="input", gt_subdir="groundtruth",
                roi_filename=None, temporal_roi_filename=None,
                label_codes=BINARY_CODES),
}


@dataclass
class DatasetLayout:
    """Where a dataset keeps its frames and how its ground truth is encoded.

    ``kind`` selects path conventions and a default label-decoding table;
    every field can be overridden for nonstandard folder trees.  The
    ``gt_subdir`` value may contain a ``{seq}`` placeholder.
    """

    root: Path
    kind: str = "generic"
    input_subdir: str | None = None
    gt_subdir: str | None = None
    roi_filename: str | None = None
    temporal_roi_filename: str | None = None
    label_codes: dict = None
    temporal_roi: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in _LAYOUT_DEFAULTS:
            raise ValueError(f"unknown layout kind {self.kind!r}; "
                             f"expected one of {sorted(_LAYOUT_DEFAULTS)}")
        self.root = Path(self.root)
        defaults = _LAYOUT_DEFAULTS[self.kind]
        for name in ("input_subdir", "gt_subdir", "roi_filename",
                     "temporal_roi_filename", "label_codes"):
            if getattr(self, name) is None:
                setattr(self, name, defaults[name])

    def sequence_dir(self, sequence: str) -> Path:
        return self.root / sequence

    def input_dir(self, sequence: str) -> Path:
        base = self.sequence_dir(sequence)
        return base / self.input_subdir if self.input_subdir else base

    def groundtruth_dir(self, sequence: str) -> Path:
        sub = self.gt_subdir.format(seq=Path(sequence).name)
        return self.sequence_dir(sequence) / sub

    def list_sequences(self) -> list[str]:
        """Names of sequences under the root, recursing one level for
        category/video trees such as CDnet."""
        found = []
        for entry in sorted(self.root.iterdir()):
            if not entry.is_dir():
                continue
            if self.input_dir(entry.name).is_dir():
                found.append(entry.name)
            else:
                for sub in sorted(entry.iterdir()):
                    rel = f"{entry.name}/{sub.name}"
                    if sub.is_dir() and self.input_dir(rel).is_dir():
                        found.append(rel)
        return found

    def load_roi(self, sequence: str) -> np.ndarray | None:
        """Spatial region-of-interest mask (True = scored), if the layout has one."""
        if not self.roi_filename:
            return None
        path = self.sequence_dir(sequence) / self.roi_filename
        if not path.exists():
            # CDnet ships ROI.bmp for most videos and ROI.png for a few.
            alt = path.with_suffix(".png")
            if not alt.exists():
                return None
            path = alt
        raw = np.asarray(Image.open(path).convert("L"))
        return raw > 127

    def load_temporal_roi(self, sequence: str) -> tuple[int, int] | None:
        """Inclusive 1-based (first, last) scored frame indices, if defined."""
        if self.temporal_roi is not None:
            return self.temporal_roi
        if not self.temporal_roi_filename:
            return None
        path = self.sequence_dir(sequence) / self.temporal_roi_filename
        if not path.exists():
            return None
        first, last = path.read_text().split()[:2]
        return int(first), int(last)


class FrameSequence:
    """Ordered frames of one video or image set.

    Frames are either held in memory as one ``(N, h, w, 3)`` float32 array or
    decoded lazily from disk.  Read access is pure and safe from concurrent
    workers.
    """

    def __init__(self, source_id: str, height: int, width: int,
                 frames: np.ndarray | None = None,
                 paths: list[Path] | None = None):
        if frames is None and not paths:
            raise ValueError("a FrameSequence needs frames or paths")
        self.source_id = source_id
        self.height = height
        self.width = width
        self._frames = frames
        self._paths = list(paths) if paths else None

    @classmethod
    def from_array(cls, frames: np.ndarray, source_id: str = "memory") -> "FrameSequence":
        frames = np.asarray(frames, dtype=np.float32)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ValueError(f"expected (N, h, w, 3) frames, got {frames.shape}")
        if frames.shape[0] < 1:
            raise ValueError("a sequence needs at least one frame")
        return cls(source_id, frames.shape[1], frames.shape[2], frames=frames)

    @classmethod
    def from_paths(cls, paths: list[Path], source_id: str,
                   preload: bool | None = None) -> "FrameSequence":
        if not paths:
            raise ValueError("a sequence needs at least one frame")
        sizes = set()
        for p in paths:
            with Image.open(p) as img:
                sizes.add((img.height, img.width))
        if len(sizes) > 1:
            raise ValueError(f"inconsistent resolutions in {source_id}: {sorted(sizes)}")
        (h, w), = sizes
        seq = cls(source_id, h, w, paths=paths)
        if preload is None:
            preload = seq.nbytes_estimate <= 4 * 1024 ** 3
        if preload:
            seq.preload()
        return seq

    @property
    def nbytes_estimate(self) -> int:
        return len(self) * self.height * self.width * 3 * 4

    @property
    def paths(self) -> list[Path] | None:
        return self._paths

    def __len__(self) -> int:
        if self._frames is not None:
            return self._frames.shape[0]
        return len(self._paths)

    def __getitem__(self, index: int) -> np.ndarray:
        if self._frames is not None:
            return self._frames[index]
        return read_frame(self._paths[index])

    def get_batch(self, indices) -> np.ndarray:
        """Stack the requested frames into one (B, h, w, 3) array."""
        if self._frames is not None:
            return self._frames[np.asarray(indices)]
        return np.stack([self[int(i)] for i in indices])

    def preload(self) -> "FrameSequence":
        if self._frames is None:
            self._frames = np.stack([read_frame(p) for p in self._paths])
        return self


_LAST_DIGITS = re.compile(r"(\d+)(?!.*\d)")


def frame_index(path: Path) -> int | None:
    """Integer index embedded in a frame filename (last run of digits)."""
    match = _LAST_DIGITS.search(Path(path).stem)
    return int(match.group(1)) if match else None


def sort_frame_paths(paths) -> list[Path]:
    """Sort by the numeric index in the filename; benchmark folders zero-pad
    inconsistently so plain string order is wrong.  Falls back to name order
    when any file has no digits."""
    paths = [Path(p) for p in paths]
    if all(frame_index(p) is not None for p in paths):
        return sorted(paths, key=lambda p: (frame_index(p), p.name))
    return sorted(paths, key=lambda p: p.name)


def read_frame(path: Path) -> np.ndarray:
    """Decode an image file into a (h, w, 3) float32 frame in [0, 1].

    Grayscale sources are replicated to 3 identical channels.
    """
    with Image.open(path) as img:
        if img.mode not in ("RGB", "L"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return arr


def load_sequence(layout: DatasetLayout, sequence: str,
                  preload: bool | None = None) -> FrameSequence:
    """Load all frames of a sequence, sorted by their filename index."""
    directory = layout.input_dir(sequence)
    if not directory.is_dir():
        raise FileNotFoundError(f"no input directory at {directory}")
    paths = [p for p in directory.iterdir()
             if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    if not paths:
        raise FileNotFoundError(f"no decodable image files in {directory}")
    return FrameSequence.from_paths(sort_frame_paths(paths), sequence, preload=preload)


def decode_label_frame(raw: np.ndarray, codes: dict) -> np.ndarray:
    """Map stored ground-truth pixel codes to Label values.

    Pure function of the raw raster and the table; unknown codes raise rather
    than silently mapping to background.
    """
    keyed_by_color = any(isinstance(k, tuple) for k in codes)
    if keyed_by_color:
        if raw.ndim != 3 or raw.shape[-1] < 3:
            raise ValueError("color decoding table given but ground truth is single-channel")
        rgb = raw[:, :, :3].astype(np.uint32)
        packed = (rgb[:, :, 0] << 16) | (rgb[:, :, 1] << 8) | rgb[:, :, 2]
        lut = {(r << 16) | (g << 8) | b: int(label) for (r, g, b), label in codes.items()}
        out = np.full(packed.shape, 255, dtype=np.uint8)
        for key, label in lut.items():
            out[packed == key] = label
        if (out == 255).any():
            bad = np.unique(packed[out == 255])
            colors = [(int(v >> 16), int((v >> 8) & 255), int(v & 255)) for v in bad[:8]]
            raise ValueError(f"unknown ground-truth colors {colors}")
        return out
    if raw.ndim == 3:
        if not (raw == raw[:, :, :1]).all():
            raise ValueError("gray decoding table given but ground truth has distinct channels")
        raw = raw[:, :, 0]
    lut = np.full(256, 255, dtype=np.uint8)
    for code, label in codes.items():
        lut[code] = int(label)
    out = lut[raw]
    if (out == 255).any():
        bad = sorted(int(v) for v in np.unique(raw[out == 255]))
        raise ValueError(f"unknown ground-truth codes {bad}")
    return out


def load_groundtruth(layout: DatasetLayout, sequence: str) -> list[np.ndarray]:
    """Load label frames for a sequence, applying spatial and temporal ROI.

    Pixels outside the spatial ROI become OUT_OF_ROI; frames outside the
    temporal ROI become fully UNLABELED (they may still be used for training,
    just never for scoring).
    """
    directory = layout.groundtruth_dir(sequence)
    if not directory.is_dir():
        raise FileNotFoundError(f"no ground-truth directory at {directory}")
    paths = sort_frame_paths(p for p in directory.iterdir()
                             if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"no ground-truth files in {directory}")
    roi = layout.load_roi(sequence)
    temporal = layout.load_temporal_roi(sequence)
    labels = []
    for path in paths:
        raw = np.asarray(Image.open(path))
        frame = decode_label_frame(raw, layout.label_codes)
        index = frame_index(path)
        if temporal is not None and index is not None and not temporal[0] <= index <= temporal[1]:
            frame = np.full_like(frame, Label.UNLABELED)
        elif roi is not None:
            if roi.shape != frame.shape:
                raise ValueError(f"ROI shape {roi.shape} does not match "
                                 f"ground truth {frame.shape} for {sequence}")
            frame = frame.copy()
            frame[~roi] = Label.OUT_OF_ROI
        labels.append(frame)
    return labels


def write_mask(mask: np.ndarray, path: Path) -> None:
    """Write a binary mask as an 8-bit single-channel image, foreground=255.

    Only lossless formats are accepted so a round trip reproduces the mask.
    """
    path = Path(path)
    if path.suffix.lower() not in (".png", ".bmp"):
        raise ValueError(f"refusing lossy/unknown mask format {path.suffix!r}")
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.dtype != bool:
        values = np.unique(mask)
        if not np.isin(values, (0, 1, 255)).all():
            raise ValueError(f"mask is not binary (values {values[:8]})")
        mask = mask > 0
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


def read_mask(path: Path) -> np.ndarray:
    """Read a stored mask back as a boolean array (any method's output)."""
    return np.asarray(Image.open(path).convert("L")) > 127


def write_frame(frame: np.ndarray, path: Path) -> None:
    """Write a [0, 1] float frame as an 8-bit RGB image."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.round(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def sample_indices(n_frames: int, max_count: int, seed: int | None = None) -> np.ndarray:
    """Pick up to ``max_count`` frame indices evenly spaced over the sequence.

    Deterministic for fixed inputs; ``seed`` is accepted for interface
    stability but unused because the spacing is even, not random.
    """
    if n_frames < 1 or max_count < 1:
        raise ValueError("n_frames and max_count must be >= 1")
    if n_frames <= max_count:
        return np.arange(n_frames)
    return np.arange(max_count) * n_frames // max_count
