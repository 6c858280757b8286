"""Synthetic frame sequences with exact ground truth.

Desk-scale scenes for testing the whole pipeline without benchmark
downloads: a textured background (static, illumination drift or horizontal
panning), an optional per-pixel Gaussian noise field, and rectangular
foreground objects with deterministic motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import yaml
from scipy import ndimage

from .data_io import FrameSequence, Label, write_frame, write_mask

BACKGROUND_KINDS = ("static", "illumination-drift", "panning", "noise-field")


@dataclass
class MovingBox:
    """A rectangle of constant color moving with constant velocity."""

    height: int = 10
    width: int = 10
    color: tuple = (0.9, 0.1, 0.9)
    velocity: tuple = (1, 2)       # (dy, dx) pixels per frame
    start: tuple = (5, 5)          # (y, x) of the top-left corner at t=0
    motion: str = "bounce"         # "bounce" stays inside, "wrap" goes around

    def position(self, t: int, frame_h: int, frame_w: int) -> tuple[int, int]:
        ys = self.start[0] + self.velocity[0] * t
        xs = self.start[1] + self.velocity[1] * t
        if self.motion == "wrap":
            return ys % frame_h, xs % frame_w
        return (_bounce(ys, frame_h - self.height),
                _bounce(xs, frame_w - self.width))


def _bounce(value: int, limit: int) -> int:
    """Triangle-wave reflection of value into [0, limit]."""
    if limit <= 0:
        return 0
    period = 2 * limit
    value = value % period
    return value if value <= limit else period - value


@dataclass
class SyntheticSpec:
    """Parameters of one generated scene; deterministic per seed."""

    height: int = 64
    width: int = 64
    n_frames: int = 200
    background: str = "static"
    texture_low: float = 0.2       # background colors kept inside [0.2, 0.8]
    texture_high: float = 0.8      # so noise clipping stays negligible
    texture_scale: int = 9
    drift_amplitude: float = 0.15
    drift_period: int = 100
    pan_speed: int = 2
    pan_base_width: int | None = None
    noise_sigma: float = 0.0
    noise_ramp: tuple | None = None  # (low, high): sigma ramps along width
    objects: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if self.background not in BACKGROUND_KINDS:
            raise ValueError(f"unknown background kind {self.background!r}; "
                             f"expected one of {BACKGROUND_KINDS}")
        if self.background == "noise-field" and self.noise_ramp is None:
            self.noise_ramp = (0.0, 0.1)
        self.objects = [o if isinstance(o, MovingBox) else MovingBox(**o)
                        for o in self.objects]
        for box in self.objects:
            if box.height > self.height or box.width > self.width:
                raise ValueError("object larger than the frame")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticScene:
    """Generated sequence plus the exact ground truth behind it."""

    sequence: FrameSequence
    labels: list                    # per-frame (h, w) uint8 Label arrays
    true_backgrounds: np.ndarray    # (N, h, w, 3) before noise and objects
    sigma: np.ndarray               # (h, w) per-pixel noise level
    spec: SyntheticSpec


def smooth_texture(rng: np.random.Generator, height: int, width: int,
                   low: float, high: float, scale: int) -> np.ndarray:
    """Random smooth color field rescaled to [low, high] per channel.

    Smoothing wraps horizontally so panning crops stay seamless.
    """
    raw = rng.uniform(0.0, 1.0, size=(height, width, 3))
    smoothed = ndimage.uniform_filter(raw, size=(scale, scale, 1), mode="wrap")
    lo = smoothed.min(axis=(0, 1), keepdims=True)
    hi = smoothed.max(axis=(0, 1), keepdims=True)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    return (low + (high - low) * (smoothed - lo) / span).astype(np.float32)


def panning_crop(base: np.ndarray, t: int, speed: int,
                 width: int | None = None) -> np.ndarray:
    """Crop window translated horizontally by speed*t pixels, wrapping.

    Frame t equals frame t + base_width/speed whenever that period divides,
    and adjacent frames differ by a speed-pixel shift.
    """
    base = np.asarray(base)
    width = width if width is not None else base.shape[0]
    if width > base.shape[1]:
        raise ValueError(f"crop window ({width}) exceeds base width ({base.shape[1]})")
    offset = (speed * t) % base.shape[1]
    return np.roll(base, -offset, axis=1)[:, :width]


def sigma_raster(spec: SyntheticSpec) -> np.ndarray:
    if spec.noise_ramp is not None:
        low, high = spec.noise_ramp
        ramp = np.linspace(low, high, spec.width, dtype=np.float32)
        return np.broadcast_to(ramp[None, :], (spec.height, spec.width)).copy()
    return np.full((spec.height, spec.width), spec.noise_sigma, dtype=np.float32)


def generate(spec: SyntheticSpec) -> SyntheticScene:
    """Render frames = clip(background(t) + noise, 0, 1) with objects on top."""
    rng = np.random.default_rng(spec.seed)
    h, w, n = spec.height, spec.width, spec.n_frames
    if spec.background == "panning":
        base_w = spec.pan_base_width or 3 * w
        if base_w <= w:
            raise ValueError("pan base must be wider than the frame")
        base = smooth_texture(rng, h, base_w, spec.texture_low, spec.texture_high,
                              spec.texture_scale)
    else:
        base = smooth_texture(rng, h, w, spec.texture_low, spec.texture_high,
                              spec.texture_scale)

    backgrounds = np.empty((n, h, w, 3), dtype=np.float32)
    for t in range(n):
        if spec.background == "panning":
            backgrounds[t] = panning_crop(base, t, spec.pan_speed, width=w)
        elif spec.background == "illumination-drift":
            gain = 1.0 + spec.drift_amplitude * np.sin(2 * np.pi * t / spec.drift_period)
            backgrounds[t] = np.clip(base * gain, 0.0, 1.0)
        else:
            backgrounds[t] = base

    sigma = sigma_raster(spec)
    noise = rng.standard_normal((n, h, w, 3), dtype=np.float32) * sigma[None, :, :, None]
    frames = np.clip(backgrounds + noise, 0.0, 1.0)

    labels = [np.full((h, w), Label.BACKGROUND, dtype=np.uint8) for _ in range(n)]
    for t in range(n):
        for box in spec.objects:
            y, x = box.position(t, h, w)
            if box.motion == "wrap":
                rows = np.arange(y, y + box.height) % h
                cols = np.arange(x, x + box.width) % w
                frames[t][np.ix_(rows, cols)] = np.asarray(box.color, dtype=np.float32)
                labels[t][np.ix_(rows, cols)] = Label.FOREGROUND
            else:
                frames[t, y:y + box.height, x:x + box.width] = box.color
                labels[t][y:y + box.height, x:x + box.width] = Label.FOREGROUND

    sequence = FrameSequence.from_array(frames, source_id=f"synthetic-{spec.background}")
    return SyntheticScene(sequence=sequence, labels=labels,
                          true_backgrounds=backgrounds, sigma=sigma, spec=spec)


def spec_from_file(path: Path) -> SyntheticSpec:
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"synthetic spec file {path} must hold a mapping")
    return SyntheticSpec(**data)


def materialize(scene: SyntheticScene, root: Path, name: str = "synthetic") -> Path:
    """Write the scene in the generic dataset layout.

    Produces ``<root>/<name>/input/in%06d.png``, matching ``groundtruth/``
    masks, the clean backgrounds, the sigma raster and a spec echo.  Output is
    byte-identical for identical specs.
    """
    root = Path(root)
    seq_dir = root / name
    for t in range(len(scene.sequence)):
        write_frame(scene.sequence[t], seq_dir / "input" / f"in{t + 1:06d}.png")
        write_mask(scene.labels[t] == Label.FOREGROUND,
                   seq_dir / "groundtruth" / f"gt{t + 1:06d}.png")
        write_frame(scene.true_backgrounds[t],
                    seq_dir / "clean_background" / f"bg{t + 1:06d}.png")
    np.save(seq_dir / "sigma.npy", scene.sigma)
    (seq_dir / "spec.yaml").write_text(yaml.safe_dump(scene.spec.to_dict(), sort_keys=True))
    return seq_dir
