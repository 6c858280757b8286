"""Bootstrap-weighted reconstruction loss and background-noise loss.

All operations work on torch tensors and preserve the input dtype.  Gradient
contracts: the bootstrap weights are constants of the optimization (the mask
chain runs under no_grad), and the noise loss trains only the noise estimate,
never the reconstruction it is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass
class LossParams:
    """Hyperparameters of the loss stack.

    soft_threshold    scale of the error at which the soft mask saturates
    bootstrap_decay   exponential down-weighting rate of probable foreground
                      (0 disables bootstrapping: all weights become 1)
    smoothing_divisor mask smoothing window half-size is width // divisor
    """

    soft_threshold: float = 0.25
    bootstrap_decay: float = 6.0
    smoothing_divisor: int = 75

    def __post_init__(self):
        if self.soft_threshold <= 0:
            raise ValueError("soft_threshold must be > 0")
        if self.bootstrap_decay < 0:
            raise ValueError("bootstrap_decay must be >= 0")
        if int(self.smoothing_divisor) != self.smoothing_divisor or self.smoothing_divisor < 1:
            raise ValueError("smoothing_divisor must be an integer >= 1")
        self.smoothing_divisor = int(self.smoothing_divisor)


@dataclass
class LossBundle:
    """Intermediate rasters and scalar losses of one evaluation."""

    l1_error: torch.Tensor      # (N, h, w) in [0, 3]
    soft_mask: torch.Tensor     # (N, h, w) in [0, 1)
    smoothed_mask: torch.Tensor # (N, h, w) in [0, 1)
    weights: torch.Tensor       # (N, h, w) in (0, 1]
    rec_loss: torch.Tensor      # scalar
    noise_loss: torch.Tensor    # scalar
    total: torch.Tensor         # scalar, rec_loss + noise_loss


def pixel_l1(recon: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Per-pixel error: channel sum of absolute differences, shape (N, h, w)."""
    if recon.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(recon.shape)} vs {tuple(target.shape)}")
    if recon.shape[-3] != 3:
        raise ValueError("expected 3-channel (N, 3, h, w) inputs")
    return (recon - target).abs().sum(dim=-3)


def pixel_l2(recon: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Channel sum of squared differences; used only by the L2 ablation."""
    if recon.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(recon.shape)} vs {tuple(target.shape)}")
    return ((recon - target) ** 2).sum(dim=-3)


def soft_mask(l1_error: torch.Tensor, soft_threshold: float) -> torch.Tensor:
    """Differentiable foreground indicator tanh(error / threshold)."""
    return torch.tanh(l1_error / soft_threshold)


def smooth_mask(mask: torch.Tensor, smoothing_divisor: int) -> torch.Tensor:
    """Box-average the mask with a (2k+1)^2 window, k = width // divisor.

    The mask is replicate-padded so the divisor stays (2k+1)^2 at borders.
    Window taps accumulate in row-major window order, which keeps the result
    bit-identical to a scalar nested-loop evaluation at the same dtype.
    """
    k = mask.shape[-1] // int(smoothing_divisor)
    if k == 0:
        return mask.clone()
    h, w = mask.shape[-2], mask.shape[-1]
    padded = F.pad(mask.reshape(-1, 1, h, w), (k, k, k, k), mode="replicate")
    out = padded[..., 0:h, 0:w].clone()
    for di in range(2 * k + 1):
        for dj in range(2 * k + 1):
            if di == 0 and dj == 0:
                continue
            out += padded[..., di:di + h, dj:dj + w]
    return (out / float((2 * k + 1) ** 2)).reshape(mask.shape)


def bootstrap_weights(smoothed_mask: torch.Tensor, bootstrap_decay: float) -> torch.Tensor:
    """Per-pixel loss weights exp(-decay * smoothed mask), in [exp(-decay), 1]."""
    return torch.exp(-bootstrap_decay * smoothed_mask)


def reconstruction_loss(l1_error: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Weighted mean of the per-pixel errors; weights are held constant."""
    if l1_error.shape != weights.shape:
        raise ValueError(f"shape mismatch {tuple(l1_error.shape)} vs {tuple(weights.shape)}")
    return (weights.detach() * l1_error).mean()


def noise_loss(noise_pred: torch.Tensor, l1_error: torch.Tensor,
               weights: torch.Tensor) -> torch.Tensor:
    """Background-restricted regression of the noise estimate onto the error.

    Gradients flow only into the prediction: the weights and the error target
    are constants so noise estimation cannot degrade the reconstruction.
    """
    if noise_pred.shape != l1_error.shape:
        raise ValueError(f"shape mismatch {tuple(noise_pred.shape)} vs {tuple(l1_error.shape)}")
    return (weights.detach() * (noise_pred - l1_error.detach()).abs()).mean() / 3.0


def total_loss(recon: torch.Tensor, noise_pred: torch.Tensor,
               target: torch.Tensor, params: LossParams | None = None,
               squared_error: bool = False) -> LossBundle:
    """Full loss stack: error -> mask -> smoothing -> weights -> both losses.

    With ``squared_error`` the reconstruction term becomes a plain (unweighted)
    mean of channel-summed squared differences; the noise head still regresses
    the absolute error.
    """
    params = params or LossParams()
    l1 = pixel_l1(recon, target)
    with torch.no_grad():
        soft = soft_mask(l1, params.soft_threshold)
        smoothed = smooth_mask(soft, params.smoothing_divisor)
        if squared_error:
            weights = torch.ones_like(l1)
        else:
            weights = bootstrap_weights(smoothed, params.bootstrap_decay)
    if squared_error:
        rec = reconstruction_loss(pixel_l2(recon, target), weights)
    else:
        rec = reconstruction_loss(l1, weights)
    noise = noise_loss(noise_pred, l1, weights)
    return LossBundle(l1_error=l1, soft_mask=soft, smoothed_mask=smoothed,
                      weights=weights, rec_loss=rec, noise_loss=noise,
                      total=rec + noise)
