"""Planning and construction of the fully convolutional autoencoder.

The layer stack is a pure function of frame size, background complexity and
preset.  Video frames use kernel-5/stride-3 blocks whose depth and channel
widths depend on max(h, w); 64- and 128-pixel image presets use fixed
stride-2 stacks.  Every block input gets two fixed positional channels, and
the decoder mirrors the encoder's spatial sizes exactly via per-layer
output-size targets.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

PRESETS = ("video", "image64", "image128")
COMPLEXITIES = ("simple", "complex")

LATENT_CHANNELS = 16

# Channel widths per (complexity, encoder depth) for the video preset.
# Depth 5 covers max(h, w) <= 405, depth 6 covers 406..1000.  Lists include
# the input/latent ends: encoder (3, ..., 16), decoder (16, ..., 4).
VIDEO_CHANNELS = {
    ("simple", 5): ((3, 64, 160, 160, 32, 16), (16, 32, 256, 256, 144, 4)),
    ("simple", 6): ((3, 64, 160, 160, 160, 32, 16), (16, 32, 256, 512, 256, 144, 4)),
    ("complex", 5): ((3, 64, 160, 160, 16, 16), (16, 16, 640, 640, 144, 4)),
    ("complex", 6): ((3, 64, 160, 160, 160, 16, 16), (16, 16, 640, 1280, 640, 144, 4)),
}

VIDEO_DEPTH_BREAK = 405     # deeper stack above this max(h, w)
VIDEO_MAX_SIZE = 1000
VIDEO_MIN_SIZE = 8

# Fixed stacks for the non-video presets: (kernel, stride, padding) per layer
# plus the channel lists.  Encoder kernels shrink to 4x4 then 2x2 so the
# spatial size halves cleanly down to 1.
_IMAGE64_CONVS = ((5, 2, 2), (5, 2, 2), (5, 2, 2), (5, 2, 2), (4, 2, 1), (2, 1, 0))
_IMAGE64_ENC = (3, 64, 160, 320, 160, 16, 16)
_IMAGE64_DEC = (16, 16, 640, 1280, 640, 144, 4)

_IMAGE128_CONVS = ((5, 2, 2),) * 5 + ((4, 2, 1), (2, 1, 0))
_IMAGE128_ENC = (3, 64, 320, 640, 640, 320, 16, 16)
_IMAGE128_DEC = (16, 16, 320, 640, 1280, 640, 144, 4)


@dataclass(frozen=True)
class LayerPlan:
    """One convolution block of the encoder or decoder."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int
    in_hw: tuple[int, int]
    out_hw: tuple[int, int]
    output_padding: tuple[int, int] = (0, 0)   # decoder only
    normalized: bool = True                     # GroupNorm+CELU after the conv


@dataclass
class ArchitectureSpec:
    """Resolution- and complexity-dependent layer plan for the autoencoder."""

    preset: str
    complexity: str
    input_hw: tuple[int, int]
    encoder: list[LayerPlan]
    decoder: list[LayerPlan]
    latent_channels: int = LATENT_CHANNELS

    @property
    def encoder_channels(self) -> tuple[int, ...]:
        return (self.encoder[0].in_channels,) + tuple(l.out_channels for l in self.encoder)

    @property
    def decoder_channels(self) -> tuple[int, ...]:
        return (self.decoder[0].in_channels,) + tuple(l.out_channels for l in self.decoder)

    @property
    def latent_hw(self) -> tuple[int, int]:
        return self.encoder[-1].out_hw

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ArchitectureSpec":
        def _layer(entry):
            entry = dict(entry)
            for key in ("in_hw", "out_hw", "output_padding"):
                entry[key] = tuple(entry[key])
            return LayerPlan(**entry)

        return cls(
            preset=data["preset"],
            complexity=data["complexity"],
            input_hw=tuple(data["input_hw"]),
            encoder=[_layer(e) for e in data["encoder"]],
            decoder=[_layer(e) for e in data["decoder"]],
            latent_channels=data.get("latent_channels", LATENT_CHANNELS),
        )


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _plan_decoder(convs, channels, enc_sizes):
    """Mirror the encoder: layer i expands enc_sizes[L-i] to enc_sizes[L-i-1],
    using asymmetric output padding to undo the floor division exactly."""
    depth = len(convs)
    layers = []
    for i in range(depth):
        kernel, stride, padding = convs[depth - 1 - i]
        in_hw = enc_sizes[depth - i]
        out_hw = enc_sizes[depth - i - 1]
        output_padding = []
        for dim in range(2):
            base = (in_hw[dim] - 1) * stride - 2 * padding + kernel
            extra = out_hw[dim] - base
            if not 0 <= extra < stride:
                raise ValueError(
                    f"cannot reach decoder size {out_hw[dim]} from {in_hw[dim]} "
                    f"with kernel {kernel} stride {stride}")
            output_padding.append(extra)
        layers.append(LayerPlan(
            in_channels=channels[i], out_channels=channels[i + 1],
            kernel=kernel, stride=stride, padding=padding,
            in_hw=in_hw, out_hw=out_hw,
            output_padding=tuple(output_padding),
            normalized=i < depth - 1,   # final layer is conv -> sigmoid only
        ))
    return layers


def plan_architecture(height: int, width: int, complexity: str = "simple",
                      preset: str = "video") -> ArchitectureSpec:
    """Build the layer plan for the given frame size.

    Video preset: kernel-5/stride-3/padding-2 blocks, 5 of them when
    max(h, w) <= 405 and 6 up to 1000, with channel widths selected by the
    background complexity.  The stack also degrades gracefully below the
    benchmark range (down to 8 px) so small synthetic scenes train with the
    same machinery.

    Image presets: fixed stride-2 stacks for exactly 64x64 / 128x128 inputs;
    the complexity flag is recorded but does not change the stack.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    if complexity not in COMPLEXITIES:
        raise ValueError(f"unknown complexity {complexity!r}")
    if preset == "video":
        largest = max(height, width)
        if not VIDEO_MIN_SIZE <= largest <= VIDEO_MAX_SIZE:
            raise ValueError(f"video preset supports max(h, w) in "
                             f"[{VIDEO_MIN_SIZE}, {VIDEO_MAX_SIZE}], got {largest}")
        depth = 5 if largest <= VIDEO_DEPTH_BREAK else 6
        convs = ((5, 3, 2),) * depth
        enc_channels, dec_channels = VIDEO_CHANNELS[(complexity, depth)]
    elif preset == "image64":
        if (height, width) != (64, 64):
            raise ValueError(f"image64 preset requires 64x64 frames, got {height}x{width}")
        convs, enc_channels, dec_channels = _IMAGE64_CONVS, _IMAGE64_ENC, _IMAGE64_DEC
    else:
        if (height, width) != (128, 128):
            raise ValueError(f"image128 preset requires 128x128 frames, got {height}x{width}")
        convs, enc_channels, dec_channels = _IMAGE128_CONVS, _IMAGE128_ENC, _IMAGE128_DEC

    sizes = [(height, width)]
    for kernel, stride, padding in convs:
        h, w = sizes[-1]
        sizes.append((conv_output_size(h, kernel, stride, padding),
                      conv_output_size(w, kernel, stride, padding)))

    encoder = [LayerPlan(
        in_channels=enc_channels[i], out_channels=enc_channels[i + 1],
        kernel=convs[i][0], stride=convs[i][1], padding=convs[i][2],
        in_hw=sizes[i], out_hw=sizes[i + 1],
    ) for i in range(len(convs))]
    decoder = _plan_decoder(convs, dec_channels, sizes)
    return ArchitectureSpec(preset=preset, complexity=complexity,
                            input_hw=(height, width),
                            encoder=encoder, decoder=decoder)


def positional_grids(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Two constant rasters linear in the horizontal / vertical coordinate.

    Each spans [-1, 1] inclusive; a dimension of size 1 sits at the midpoint 0.
    """
    if height < 1 or width < 1:
        raise ValueError("grid size must be >= 1")
    xs = np.linspace(-1.0, 1.0, width, dtype=np.float32) if width > 1 \
        else np.zeros(1, dtype=np.float32)
    ys = np.linspace(-1.0, 1.0, height, dtype=np.float32) if height > 1 \
        else np.zeros(1, dtype=np.float32)
    horizontal = np.broadcast_to(xs[None, :], (height, width)).copy()
    vertical = np.broadcast_to(ys[:, None], (height, width)).copy()
    return horizontal, vertical


def group_count(channels: int) -> int:
    """Normalization groups: 8 where possible, capped by and dividing the
    channel count, else 1."""
    groups = min(8, channels)
    return groups if channels % groups == 0 else 1


class _Block(nn.Module):
    """Positional-channel concat, (transposed) conv, optional GroupNorm+CELU."""

    def __init__(self, plan: LayerPlan, transposed: bool):
        super().__init__()
        if transposed:
            self.conv = nn.ConvTranspose2d(
                plan.in_channels + 2, plan.out_channels, plan.kernel,
                stride=plan.stride, padding=plan.padding,
                output_padding=plan.output_padding)
        else:
            self.conv = nn.Conv2d(plan.in_channels + 2, plan.out_channels,
                                  plan.kernel, stride=plan.stride, padding=plan.padding)
        if plan.normalized:
            self.norm = nn.GroupNorm(group_count(plan.out_channels), plan.out_channels)
            self.act = nn.CELU()
        else:
            self.norm = self.act = None
        horizontal, vertical = positional_grids(*plan.in_hw)
        grids = torch.from_numpy(np.stack([horizontal, vertical]))
        self.register_buffer("grids", grids, persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pos = self.grids.expand(x.shape[0], -1, -1, -1)
        x = self.conv(torch.cat([x, pos], dim=1))
        if self.norm is not None:
            x = self.act(self.norm(x))
        return x


class Autoencoder(nn.Module):
    """Background-reconstruction autoencoder with a noise-estimation channel.

    ``forward`` returns the raw 4-channel sigmoid output; ``reconstruct``
    splits it into the 3-channel background and the 1-channel expected-error
    map.  There are no stochastic layers, so outputs are deterministic.
    """

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        self.spec = spec
        self.encoder = nn.ModuleList(_Block(p, transposed=False) for p in spec.encoder)
        self.decoder = nn.ModuleList(_Block(p, transposed=True) for p in spec.decoder)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = self.spec.input_hw
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2:] != (h, w):
            raise ValueError(f"expected input (B, 3, {h}, {w}), got {tuple(x.shape)}")
        for block in self.encoder:
            x = block(x)
        for block in self.decoder:
            x = block(x)
        return torch.sigmoid(x)

    def reconstruct(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Split the output into (backgrounds (B,3,h,w), noise maps (B,h,w))."""
        out = self.forward(x)
        return out[:, :3], out[:, 3]

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_autoencoder(spec: ArchitectureSpec, seed: int = 0) -> Autoencoder:
    """Instantiate the model with deterministic uniform fan-in initialization."""
    model = Autoencoder(spec)
    generator = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
            fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
            bound = 1.0 / float(fan_in) ** 0.5
            nn.init.uniform_(module.weight, -bound, bound, generator=generator)
            nn.init.uniform_(module.bias, -bound, bound, generator=generator)
        elif isinstance(module, nn.GroupNorm):
            nn.init.ones_(module.weight)
            nn.init.zeros_(module.bias)
    return model
