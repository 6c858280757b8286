"""Unsupervised detection of complex background changes.

A partially trained probe model reconstructs a sample of frames; if the
reconstructions disagree with their own temporal median (camera motion,
large appearance changes) the background is ruled complex and a wider model
with a longer schedule is warranted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .arch import Autoencoder
from .data_io import FrameSequence, sample_indices


@dataclass
class ComplexityParams:
    """Probe settings; soft_threshold and smoothing_divisor mirror LossParams."""

    complexity_threshold: float = 0.24
    probe_iters: int = 2000
    probe_frames: int = 480
    soft_threshold: float = 0.25
    smoothing_divisor: int = 75

    def __post_init__(self):
        if not 0 < self.complexity_threshold <= 1:
            raise ValueError("complexity_threshold must be in (0, 1]")
        if self.probe_iters < 1 or self.probe_frames < 1:
            raise ValueError("probe_iters and probe_frames must be >= 1")


@dataclass
class ComplexityVerdict:
    mean_soft_mask: float
    complexity: str  # "simple" | "complex"

    @property
    def is_complex(self) -> bool:
        return self.complexity == "complex"


def temporal_median(backgrounds: np.ndarray | list) -> np.ndarray:
    """Per-pixel, per-channel median over a stack of frames.

    Even counts use the lower order statistic (index (B-1)//2 of the sorted
    values) so the result is always a color that occurred in some frame.
    """
    stack = np.asarray(backgrounds)
    if stack.ndim == 3:
        stack = stack[None]
    if stack.shape[0] < 1:
        raise ValueError("temporal_median needs at least one frame")
    kth = (stack.shape[0] - 1) // 2
    return np.partition(stack, kth, axis=0)[kth]


def reconstruct_sample(model: Autoencoder, seq: FrameSequence,
                       indices: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Reconstructed backgrounds for the given frame indices, (B, h, w, 3)."""
    model.eval()
    outputs = []
    with torch.no_grad():
        for start in range(0, len(indices), batch_size):
            batch = seq.get_batch(indices[start:start + batch_size])
            tensor = torch.from_numpy(batch.transpose(0, 3, 1, 2)).contiguous()
            tensor = tensor.to(next(model.parameters()).device, next(model.parameters()).dtype)
            backgrounds, _ = model.reconstruct(tensor)
            outputs.append(backgrounds.permute(0, 2, 3, 1).cpu().numpy())
    return np.concatenate(outputs, axis=0)


def mean_soft_mask(reconstructions: np.ndarray, soft_threshold: float) -> float:
    """Average soft-mask score of reconstructions against their median."""
    median = temporal_median(reconstructions)
    l1 = np.abs(reconstructions - median[None]).sum(axis=-1)
    return float(np.tanh(l1 / soft_threshold).mean())


def assess_complexity(seq: FrameSequence, probe_model: Autoencoder,
                      params: ComplexityParams | None = None,
                      batch_size: int = 32) -> ComplexityVerdict:
    """Decide simple vs complex from probe reconstructions of sampled frames."""
    params = params or ComplexityParams()
    indices = sample_indices(len(seq), params.probe_frames)
    reconstructions = reconstruct_sample(probe_model, seq, indices, batch_size)
    score = mean_soft_mask(reconstructions, params.soft_threshold)
    verdict = "complex" if score > params.complexity_threshold else "simple"
    return ComplexityVerdict(mean_soft_mask=score, complexity=verdict)
