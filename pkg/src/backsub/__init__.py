"""Unsupervised background reconstruction and foreground segmentation.

A per-sequence convolutional autoencoder learns the background manifold with
a bootstrap-weighted reconstruction loss and a background-noise estimation
head; segmentation thresholds adapt per pixel to illumination and noise, and
masks are cleaned morphologically.  The :class:`BackgroundSubtractor`
estimator exposes the pipeline with a scikit-learn style fit/predict API.
"""

from .arch import ArchitectureSpec, Autoencoder, build_autoencoder, plan_architecture, positional_grids
from .complexity import ComplexityParams, ComplexityVerdict, assess_complexity, temporal_median
from .data_io import DatasetLayout, FrameSequence, Label, load_groundtruth, load_sequence, sample_indices, write_mask
from .estimator import BackgroundSubtractor
from .evaluator import ConfusionCounts, EvalReport, accumulate, aggregate, f_measure
from .losses import LossBundle, LossParams, bootstrap_weights, noise_loss, pixel_l1, reconstruction_loss, smooth_mask, soft_mask, total_loss
from .segmenter import SegmentationResult, ThresholdParams, illumination, morph_close_open, raw_mask, segment_sequence, threshold_map
from .synthetic import MovingBox, SyntheticScene, SyntheticSpec, generate, panning_crop
from .trainer import TrainConfig, TrainedModel, load_checkpoint, plan_iterations, probe, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "ArchitectureSpec", "Autoencoder", "BackgroundSubtractor", "ComplexityParams",
    "ComplexityVerdict", "ConfusionCounts", "DatasetLayout", "EvalReport",
    "FrameSequence", "Label", "LossBundle", "LossParams", "MovingBox",
    "SegmentationResult", "SyntheticScene", "SyntheticSpec", "ThresholdParams",
    "TrainConfig", "TrainedModel", "accumulate", "aggregate", "assess_complexity",
    "bootstrap_weights", "build_autoencoder", "f_measure", "generate",
    "illumination", "load_checkpoint", "load_groundtruth", "load_sequence",
    "morph_close_open", "noise_loss", "panning_crop", "pixel_l1",
    "plan_architecture", "plan_iterations", "positional_grids", "probe",
    "raw_mask", "reconstruction_loss", "sample_indices", "save_checkpoint",
    "segment_sequence", "smooth_mask", "soft_mask", "temporal_median",
    "threshold_map", "total_loss", "train", "write_mask",
]
