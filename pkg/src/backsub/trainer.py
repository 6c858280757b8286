"""Two-phase training of the background autoencoder.

Phase 1 trains a simple-complexity model for a fixed probe budget, after
which the sequence is judged simple or complex.  Simple sequences keep the
probe model (and its optimizer state) and finish a short schedule; complex
sequences discard it and retrain a wider model from scratch on a long
schedule with an epoch-count floor.  The learning rate drops once, by 10x,
at 80% of the active schedule.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .arch import ArchitectureSpec, Autoencoder, build_autoencoder, plan_architecture
from .complexity import ComplexityParams, ComplexityVerdict, assess_complexity
from .data_io import FrameSequence
from .losses import LossParams, total_loss


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 32
    simple_iters: int = 2500
    complex_iters: int = 24000
    complex_min_epochs: int = 20
    lr_drop_fraction: float = 0.8
    lr_drop_divisor: float = 10.0
    seed: int = 0
    preset: str = "video"
    device: str = "cpu"
    squared_error: bool = False
    log_every: int = 0
    loss: LossParams = field(default_factory=LossParams)
    complexity: ComplexityParams = field(default_factory=ComplexityParams)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.simple_iters < self.complexity.probe_iters:
            raise ValueError("simple_iters must be >= the probe iteration count")
        if not 0 < self.lr_drop_fraction <= 1:
            raise ValueError("lr_drop_fraction must be in (0, 1]")

    @classmethod
    def for_images(cls, **overrides) -> "TrainConfig":
        """Profile for non-video image sets: bigger batches, longer schedule."""
        params = dict(learning_rate=2e-3, batch_size=128, complex_iters=500_000)
        params.update(overrides)
        return cls(**params)


@dataclass
class TrainedModel:
    model: Autoencoder
    spec: ArchitectureSpec
    verdict: ComplexityVerdict
    iterations: int                 # steps run on the returned model
    probe_iterations: int
    final_losses: dict
    probe_discarded: bool


def plan_iterations(n_frames: int, verdict: ComplexityVerdict,
                    config: TrainConfig) -> int:
    """Total schedule length for the final model.

    Simple: the fixed short budget, inclusive of the probe steps already run.
    Complex: the long budget, floored at a minimum number of epochs so very
    long sequences still see every frame enough times.
    """
    if not verdict.is_complex:
        return config.simple_iters
    epochs_floor = config.complex_min_epochs * math.ceil(n_frames / config.batch_size)
    return max(config.complex_iters, epochs_floor)


class _EpochSampler:
    """Permutation stream over frame indices; batches never span epochs and
    the last partial batch of an epoch is kept."""

    def __init__(self, n_frames: int, batch_size: int, seed: int):
        self.n_frames = n_frames
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._queue: list[np.ndarray] = []

    def next_batch(self) -> np.ndarray:
        if not self._queue:
            order = self.rng.permutation(self.n_frames)
            self._queue = [order[i:i + self.batch_size]
                           for i in range(0, self.n_frames, self.batch_size)]
        return self._queue.pop(0)


def _learning_rate(step: int, total: int, config: TrainConfig) -> float:
    drop_at = int(config.lr_drop_fraction * total)
    if step >= drop_at:
        return config.learning_rate / config.lr_drop_divisor
    return config.learning_rate


def _run_steps(model, optimizer, sampler, seq, config, start, stop, total, log):
    device = torch.device(config.device)
    last = {}
    for step in range(start, stop):
        lr = _learning_rate(step, total, config)
        for group in optimizer.param_groups:
            group["lr"] = lr
        batch = seq.get_batch(sampler.next_batch())
        tensor = torch.from_numpy(batch.transpose(0, 3, 1, 2)).contiguous().to(device)
        backgrounds, noise_maps = model.reconstruct(tensor)
        bundle = total_loss(backgrounds, noise_maps, tensor, config.loss,
                            squared_error=config.squared_error)
        optimizer.zero_grad()
        bundle.total.backward()
        optimizer.step()
        last = {"iter": step + 1, "loss": float(bundle.total),
                "l_rec": float(bundle.rec_loss), "l_noise": float(bundle.noise_loss),
                "lr": lr}
        if log and config.log_every and (step + 1) % config.log_every == 0:
            log("iter={iter} loss={loss:.6f} l_rec={l_rec:.6f} "
                "l_noise={l_noise:.6f} lr={lr:g}".format(**last))
    return last


def _new_optimizer(model, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=config.learning_rate)


def _probe_phase(seq: FrameSequence, config: TrainConfig, log=None):
    """Phase 1: train a simple-preset model for the probe budget and judge it."""
    spec = plan_architecture(seq.height, seq.width, "simple", config.preset)
    model = build_autoencoder(spec, config.seed).to(config.device)
    model.train()
    optimizer = _new_optimizer(model, config)
    sampler = _EpochSampler(len(seq), config.batch_size, config.seed)
    # The probe runs under the prospective simple schedule so its lr drops
    # (if any fall this early) match a straight simple-path run.
    losses = _run_steps(model, optimizer, sampler, seq, config,
                        0, config.complexity.probe_iters, config.simple_iters, log)
    verdict = assess_complexity(seq, model, config.complexity, config.batch_size)
    model.train()
    return spec, model, optimizer, sampler, verdict, losses


def probe(seq: FrameSequence, config: TrainConfig | None = None,
          log=None) -> tuple[Autoencoder, ComplexityVerdict]:
    """Run only the probe phase; useful to inspect the complexity verdict."""
    config = config or TrainConfig()
    _, model, _, _, verdict, _ = _probe_phase(seq, config, log)
    model.eval()
    return model, verdict


def train(seq: FrameSequence, config: TrainConfig | None = None,
          log=None) -> TrainedModel:
    """Full two-phase training; deterministic for a fixed seed on CPU."""
    if len(seq) < 1:
        raise ValueError("cannot train on an empty sequence")
    config = config or TrainConfig()
    spec, model, optimizer, sampler, verdict, losses = _probe_phase(seq, config, log)
    total = plan_iterations(len(seq), verdict, config)
    probe_iters = config.complexity.probe_iters

    if verdict.is_complex:
        # Fresh wider model; the partially trained probe model is discarded
        # and the new build draws from an offset seed.
        spec = plan_architecture(seq.height, seq.width, "complex", config.preset)
        model = build_autoencoder(spec, config.seed + 1).to(config.device)
        model.train()
        optimizer = _new_optimizer(model, config)
        sampler = _EpochSampler(len(seq), config.batch_size, config.seed + 1)
        losses = _run_steps(model, optimizer, sampler, seq, config,
                            0, total, total, log)
        iterations = total
    else:
        losses = _run_steps(model, optimizer, sampler, seq, config,
                            probe_iters, total, total, log) or losses
        iterations = total

    model.eval()
    return TrainedModel(model=model, spec=spec, verdict=verdict,
                        iterations=iterations, probe_iterations=probe_iters,
                        final_losses=losses, probe_discarded=verdict.is_complex)


def _spec_digest(spec_dict: dict) -> str:
    return hashlib.sha256(json.dumps(spec_dict, sort_keys=True).encode()).hexdigest()


def save_checkpoint(model: Autoencoder, path, extra: dict | None = None) -> None:
    """Archive the architecture plan (as JSON text) plus the parameter blob.

    Checkpoints serve inference and warm restarts; optimizer state is not
    stored, so continued training restarts its moments.
    """
    spec_dict = model.spec.to_dict()
    payload = {
        "format": 1,
        "arch": json.dumps(spec_dict, sort_keys=True),
        "arch_sha256": _spec_digest(spec_dict),
        "state": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> Autoencoder:
    """Rebuild the exact architecture from a checkpoint and load its weights."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    spec_dict = json.loads(payload["arch"])
    if _spec_digest(spec_dict) != payload.get("arch_sha256"):
        raise ValueError(f"checkpoint {path} is corrupt: architecture hash mismatch")
    spec = ArchitectureSpec.from_dict(spec_dict)
    model = build_autoencoder(spec, seed=0)
    model.load_state_dict(payload["state"])
    model.eval()
    return model
