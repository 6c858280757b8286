"""Input validation helpers shared by the estimator, trainer and segmenter."""

from __future__ import annotations

import numpy as np

from .data_io import FrameSequence


def check_frames(X, copy: bool = False) -> np.ndarray:
    """Coerce frame input to a (N, h, w, 3) float32 array in [0, 1].

    Accepts a single (h, w, 3) frame, a (N, h, w) grayscale stack (replicated
    to 3 channels) or a (N, h, w, 3) stack.
    """
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[-1] == 3:
        arr = arr[None]
    elif arr.ndim == 3:
        arr = np.repeat(arr[..., None], 3, axis=-1)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ValueError(f"expected frames shaped (N, h, w, 3), got {np.shape(X)}")
    if arr.shape[0] < 1:
        raise ValueError("need at least one frame")
    if not np.isfinite(arr).all():
        raise ValueError("frames contain non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < -1e-6 or hi > 1 + 1e-6:
        raise ValueError(f"frame values must lie in [0, 1], got range [{lo}, {hi}]")
    if copy and arr is X:
        arr = arr.copy()
    return np.clip(arr, 0.0, 1.0)


def as_sequence(X) -> FrameSequence:
    """Accept a FrameSequence or any array accepted by check_frames."""
    if isinstance(X, FrameSequence):
        return X
    return FrameSequence.from_array(check_frames(X))


def check_mask(mask) -> np.ndarray:
    """Coerce a binary mask to a 2-D boolean array."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        values = np.unique(arr)
        if not np.isin(values, (0, 1, 255)).all():
            raise ValueError(f"mask is not binary (values {values[:8]})")
        arr = arr > 0
    return arr


def check_labels(y, n_frames: int | None = None) -> np.ndarray:
    """Coerce ground-truth labels to a (N, h, w) uint8 array of Label codes."""
    if isinstance(y, (list, tuple)):
        y = np.stack(y)
    arr = np.asarray(y)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"labels must be (N, h, w), got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 4:
        raise ValueError("label values must be Label codes in 0..4")
    if n_frames is not None and arr.shape[0] != n_frames:
        raise ValueError(f"expected {n_frames} label frames, got {arr.shape[0]}")
    return arr.astype(np.uint8)
