"""Foreground segmentation from trained-model outputs.

Per frame: reconstruct the background and the expected background noise,
derive a pixel-adaptive threshold from the frame's average illumination and
the noise map, apply the strict-inequality decision rule, then clean the
binary mask with a morphological closing and opening.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

from .arch import Autoencoder
from .data_io import FrameSequence
from .validation import check_mask

CLOSING_SIZE = 5
OPENING_SIZE = 7


@dataclass
class ThresholdParams:
    """Threshold = illumination_coef * mean illumination + noise_coef * noise map.

    noise_coef = 0 disables the noise-adaptive part (constant threshold).
    """

    illumination_coef: float = 96.0 / 255.0
    noise_coef: float = 7.0

    def __post_init__(self):
        if self.illumination_coef < 0 or self.noise_coef < 0:
            raise ValueError("threshold coefficients must be >= 0")


@dataclass
class SegmentationResult:
    """Everything the pipeline produced for one frame."""

    background: np.ndarray   # (h, w, 3) float32
    noise_map: np.ndarray    # (h, w) float32
    threshold: np.ndarray    # (h, w) float32
    raw_mask: np.ndarray     # (h, w) bool, before post-processing
    mask: np.ndarray         # (h, w) bool, final


def illumination(background: np.ndarray) -> float:
    """Average absolute pixel value over all channels of one background."""
    background = np.asarray(background)
    if background.ndim != 3 or background.shape[-1] != 3:
        raise ValueError(f"expected (h, w, 3) background, got {background.shape}")
    return float(np.abs(background).mean())


def threshold_map(illum: float, noise_map: np.ndarray,
                  params: ThresholdParams | None = None) -> np.ndarray:
    """Pixel thresholds: a global illumination term plus a local noise term."""
    params = params or ThresholdParams()
    noise_map = np.asarray(noise_map)
    if noise_map.min() < 0:
        raise ValueError("noise map must be non-negative")
    return params.illumination_coef * illum + params.noise_coef * noise_map


def raw_mask(l1_error: np.ndarray, threshold: np.ndarray) -> np.ndarray:
    """Foreground where the error strictly exceeds the threshold."""
    l1_error = np.asarray(l1_error)
    threshold = np.broadcast_to(np.asarray(threshold), l1_error.shape)
    return l1_error > threshold


def morph_close_open(mask: np.ndarray) -> np.ndarray:
    """5x5 closing then 7x7 opening, removing speckle and filling small holes.

    Out-of-image pixels read as background for both operators, so foreground
    cannot leak in from outside and blobs touching the border still need a
    full in-image core to survive the opening.
    """
    mask = check_mask(mask)
    closing = np.ones((CLOSING_SIZE, CLOSING_SIZE), dtype=bool)
    opening = np.ones((OPENING_SIZE, OPENING_SIZE), dtype=bool)
    out = ndimage.binary_dilation(mask, structure=closing, border_value=0)
    out = ndimage.binary_erosion(out, structure=closing, border_value=0)
    out = ndimage.binary_erosion(out, structure=opening, border_value=0)
    out = ndimage.binary_dilation(out, structure=opening, border_value=0)
    return out


def segment_batch(model: Autoencoder, frames: np.ndarray,
                  params: ThresholdParams | None = None,
                  postprocess: bool = True) -> list[SegmentationResult]:
    """Segment a (B, h, w, 3) batch of frames against the trained model."""
    params = params or ThresholdParams()
    model.eval()
    with torch.no_grad():
        tensor = torch.from_numpy(np.ascontiguousarray(frames.transpose(0, 3, 1, 2)))
        tensor = tensor.to(next(model.parameters()).device, next(model.parameters()).dtype)
        backgrounds, noise_maps = model.reconstruct(tensor)
        backgrounds = backgrounds.permute(0, 2, 3, 1).cpu().numpy()
        noise_maps = noise_maps.cpu().numpy()
    results = []
    for frame, background, noise in zip(frames, backgrounds, noise_maps):
        l1 = np.abs(background - frame).sum(axis=-1)
        tau = threshold_map(illumination(background), noise, params)
        raw = raw_mask(l1, tau)
        final = morph_close_open(raw) if postprocess else raw
        results.append(SegmentationResult(background=background, noise_map=noise,
                                          threshold=tau, raw_mask=raw, mask=final))
    return results


def iter_segmentation(model: Autoencoder, seq: FrameSequence,
                      params: ThresholdParams | None = None,
                      postprocess: bool = True, batch_size: int = 32):
    """Yield SegmentationResult per frame in order; frames are independent."""
    for start in range(0, len(seq), batch_size):
        batch = seq.get_batch(range(start, min(start + batch_size, len(seq))))
        yield from segment_batch(model, batch, params, postprocess)


def segment_sequence(model: Autoencoder, seq: FrameSequence,
                     params: ThresholdParams | None = None,
                     postprocess: bool = True,
                     batch_size: int = 32) -> list[SegmentationResult]:
    """Segment every frame of a sequence (see iter_segmentation for streaming)."""
    return list(iter_segmentation(model, seq, params, postprocess, batch_size))
