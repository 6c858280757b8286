"""Scikit-learn style estimator wrapping the training and segmentation pipeline.

``fit`` trains one model per sequence (the unsupervised setting: X is the
video, there is no y), after which ``predict`` yields foreground masks,
``transform`` yields reconstructed backgrounds and ``score`` computes the
F-measure against label frames.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import evaluator, segmenter, trainer
from .complexity import ComplexityParams
from .losses import LossParams
from .segmenter import ThresholdParams
from .validation import as_sequence, check_labels


class BackgroundSubtractor(BaseEstimator):
    """Per-sequence background reconstruction and foreground segmentation.

    Parameters mirror the pipeline defaults; see LossParams, ThresholdParams,
    ComplexityParams and TrainConfig for their meaning.  All parameters are
    stored verbatim so get_params/set_params/clone work as usual.

    Attributes set by fit: ``model_`` (the trained autoencoder), ``verdict_``
    (complexity decision), ``arch_spec_``, ``n_iterations_``.
    """

    def __init__(self, soft_threshold=0.25, bootstrap_decay=6.0,
                 smoothing_divisor=75, illumination_coef=96.0 / 255.0,
                 noise_coef=7.0, complexity_threshold=0.24, probe_iters=2000,
                 probe_frames=480, simple_iters=2500, complex_iters=24000,
                 complex_min_epochs=20, learning_rate=5e-4, batch_size=32,
                 lr_drop_fraction=0.8, preset="video", postprocess=True,
                 squared_error=False, device="cpu", seed=0, log_every=0):
        self.soft_threshold = soft_threshold
        self.bootstrap_decay = bootstrap_decay
        self.smoothing_divisor = smoothing_divisor
        self.illumination_coef = illumination_coef
        self.noise_coef = noise_coef
        self.complexity_threshold = complexity_threshold
        self.probe_iters = probe_iters
        self.probe_frames = probe_frames
        self.simple_iters = simple_iters
        self.complex_iters = complex_iters
        self.complex_min_epochs = complex_min_epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.lr_drop_fraction = lr_drop_fraction
        self.preset = preset
        self.postprocess = postprocess
        self.squared_error = squared_error
        self.device = device
        self.seed = seed
        self.log_every = log_every

    def _loss_params(self) -> LossParams:
        return LossParams(soft_threshold=self.soft_threshold,
                          bootstrap_decay=self.bootstrap_decay,
                          smoothing_divisor=self.smoothing_divisor)

    def _complexity_params(self) -> ComplexityParams:
        return ComplexityParams(complexity_threshold=self.complexity_threshold,
                                probe_iters=self.probe_iters,
                                probe_frames=self.probe_frames,
                                soft_threshold=self.soft_threshold,
                                smoothing_divisor=self.smoothing_divisor)

    def _threshold_params(self) -> ThresholdParams:
        return ThresholdParams(illumination_coef=self.illumination_coef,
                               noise_coef=self.noise_coef)

    def _train_config(self) -> trainer.TrainConfig:
        return trainer.TrainConfig(learning_rate=self.learning_rate,
                                   batch_size=self.batch_size,
                                   simple_iters=self.simple_iters,
                                   complex_iters=self.complex_iters,
                                   complex_min_epochs=self.complex_min_epochs,
                                   lr_drop_fraction=self.lr_drop_fraction,
                                   seed=self.seed, preset=self.preset,
                                   device=self.device,
                                   squared_error=self.squared_error,
                                   log_every=self.log_every,
                                   loss=self._loss_params(),
                                   complexity=self._complexity_params())

    def fit(self, X, y=None, log=None):
        """Train the per-sequence model; X is a FrameSequence or (N, h, w, 3)."""
        seq = as_sequence(X)
        result = trainer.train(seq, self._train_config(), log=log)
        self.model_ = result.model
        self.arch_spec_ = result.spec
        self.verdict_ = result.verdict
        self.n_iterations_ = result.iterations
        self.final_losses_ = result.final_losses
        self.input_shape_ = (seq.height, seq.width)
        return self

    def _check_input(self, X):
        check_is_fitted(self, "model_")
        seq = as_sequence(X)
        if (seq.height, seq.width) != self.input_shape_:
            raise ValueError(f"frames are {(seq.height, seq.width)} but the model "
                             f"was fitted on {self.input_shape_}")
        return seq

    def segment(self, X) -> list[segmenter.SegmentationResult]:
        """Full per-frame results (background, noise map, threshold, masks)."""
        seq = self._check_input(X)
        return segmenter.segment_sequence(self.model_, seq,
                                          self._threshold_params(),
                                          postprocess=self.postprocess,
                                          batch_size=self.batch_size)

    def predict(self, X) -> np.ndarray:
        """Foreground masks, shape (N, h, w) bool."""
        return np.stack([r.mask for r in self.segment(X)])

    def transform(self, X) -> np.ndarray:
        """Reconstructed backgrounds, shape (N, h, w, 3) float32."""
        seq = self._check_input(X)
        results = segmenter.segment_sequence(self.model_, seq,
                                             self._threshold_params(),
                                             postprocess=False,
                                             batch_size=self.batch_size)
        return np.stack([r.background for r in results])

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).predict(X)

    def score(self, X, y) -> float:
        """Sequence-level F-measure of predicted masks against label frames."""
        masks = self.predict(X)
        labels = check_labels(y, n_frames=masks.shape[0])
        counts = evaluator.ConfusionCounts()
        for mask, label in zip(masks, labels):
            evaluator.accumulate(mask, label, counts)
        value = evaluator.f_measure(counts)
        return float("nan") if value is None else value
