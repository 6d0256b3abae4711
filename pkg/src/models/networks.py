"""
Conditional CycleGAN networks over extended features.

The extended feature is a one-channel image (rows × frames). Generators are
GLU encoder / residual / pixel-shuffle decoder stacks that reproduce every
input row, label rows included; discriminators are patch classifiers ending
in a clamped sigmoid.
"""

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ..autodiff import Conv2d, DiffTensor, InstanceNorm, Module, glu, pixel_shuffle, silu
from ..errors import ShapeError
from .specs import DiscriminatorSpec, GeneratorSpec

SCORE_EPS = 1e-7
# one ulp inside (ε, 1−ε) so scores never sit on the bound
SCORE_LOW = float(np.nextafter(SCORE_EPS, 1.0))
SCORE_HIGH = float(np.nextafter(1.0 - SCORE_EPS, 0.0))


def _as_image_batch(x: DiffTensor, rows: int, name: str) -> Tuple[DiffTensor, bool]:
    squeezed = x.ndim == 3
    if squeezed:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"{name} expects a 1×R×T or B×1×R×T input, got shape {x.shape}")
    if x.shape[2] != rows:
        raise ShapeError(f"{name} expects {rows} rows, got {x.shape[2]}")
    return x, squeezed


class GatedConvBlock(Module):
    """conv → instance norm → GLU; the conv emits twice the output channels"""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int, padding: int, rng):
        self.conv = Conv2d(in_channels, 2 * out_channels, kernel_size, stride=stride, padding=padding, rng=rng)
        self.norm = InstanceNorm(2 * out_channels)

    def forward(self, x: DiffTensor) -> DiffTensor:
        return glu(self.norm(self.conv(x)))


class ResidualBlock(Module):
    def __init__(self, channels: int, rng):
        self.gated = GatedConvBlock(channels, channels, 3, 1, 1, rng)
        self.conv = Conv2d(channels, channels, 3, padding=1, rng=rng)
        self.norm = InstanceNorm(channels)

    def forward(self, x: DiffTensor) -> DiffTensor:
        return x + self.norm(self.conv(self.gated(x)))


class UpsampleBlock(Module):
    """conv → pixel shuffle ×2 → instance norm → SiLU"""

    def __init__(self, in_channels: int, out_channels: int, rng):
        self.conv = Conv2d(in_channels, 4 * out_channels, 3, padding=1, rng=rng)
        self.norm = InstanceNorm(out_channels)

    def forward(self, x: DiffTensor) -> DiffTensor:
        return silu(self.norm(pixel_shuffle(self.conv(x), 2)))


class Generator(Module):
    def __init__(self, spec: GeneratorSpec, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.spec = spec
        self.rows = spec.rows()
        base = spec.base_channels
        self.stem = Conv2d(1, 2 * base, 5, padding=2, rng=rng)

        channels = base
        self.down = []
        for _ in range(spec.n_downsample):
            self.down.append(GatedConvBlock(channels, 2 * channels, 3, 2, 1, rng))
            channels *= 2
        self.residual = [ResidualBlock(channels, rng) for _ in range(spec.n_residual_blocks)]
        self.up = []
        for _ in range(spec.n_downsample):
            self.up.append(UpsampleBlock(channels, channels // 2, rng))
            channels //= 2
        self.head = Conv2d(channels, 1, 5, padding=2, rng=rng)

    def forward(self, x: DiffTensor) -> DiffTensor:
        x, squeezed = _as_image_batch(x, self.rows, "generator")
        rows, frames = x.shape[2], x.shape[3]
        factor = self.spec.downsample_factor
        pad_rows = -rows % factor
        pad_frames = -frames % factor
        if pad_rows or pad_frames:
            x = x.pad(((0, 0), (0, 0), (0, pad_rows), (0, pad_frames)))

        h = glu(self.stem(x))
        for block in self.down:
            h = block(h)
        for block in self.residual:
            h = block(h)
        for block in self.up:
            h = block(h)
        out = self.head(h)

        if pad_rows or pad_frames:
            out = out[:, :, :rows, :frames]
        return out.reshape(out.shape[1:]) if squeezed else out


class Discriminator(Module):
    def __init__(self, spec: DiscriminatorSpec, rng: Optional[np.random.Generator] = None):
        rng = rng or np.random.default_rng(0)
        self.spec = spec
        self.rows = spec.rows()
        self.blocks = []
        in_channels = 1
        for layer in range(spec.n_layers):
            out_channels = spec.base_channels * 2 ** layer
            self.blocks.append(GatedConvBlock(in_channels, out_channels, 3, 2, 1, rng))
            in_channels = out_channels
        self.head = Conv2d(in_channels, 1, 3, padding=1, rng=rng)

    def logits(self, x: DiffTensor) -> DiffTensor:
        x, _ = _as_image_batch(x, self.rows, "discriminator")
        for block in self.blocks:
            x = block(x)
        return self.head(x)

    def forward(self, x: DiffTensor) -> DiffTensor:
        """B×1×H'×W' patch scores in the open interval (ε, 1−ε)"""
        return self.logits(x).sigmoid().clip(SCORE_LOW, SCORE_HIGH)


def score_grid_shape(spec: DiscriminatorSpec, rows: int, frames: int) -> Tuple[int, int]:
    """Patch grid of a discriminator; each stride-2 block halves with ceiling"""
    for _ in range(spec.n_layers):
        rows, frames = math.ceil(rows / 2), math.ceil(frames / 2)
    return rows, frames


@dataclass
class ModelSet:
    """The four networks of one experiment"""

    G_YS: Generator
    G_SY: Generator
    D_S: Discriminator
    D_Y: Discriminator

    @classmethod
    def build(cls, generator: GeneratorSpec, discriminator: DiscriminatorSpec, seed: int = 0) -> "ModelSet":
        rng = np.random.default_rng(seed)
        return cls(
            G_YS=Generator(generator, rng),
            G_SY=Generator(generator, rng),
            D_S=Discriminator(discriminator, rng),
            D_Y=Discriminator(discriminator, rng),
        )

    def named_models(self) -> Dict[str, Module]:
        return OrderedDict([("G_YS", self.G_YS), ("G_SY", self.G_SY), ("D_S", self.D_S), ("D_Y", self.D_Y)])

    @property
    def generators(self) -> Tuple[Generator, Generator]:
        return self.G_YS, self.G_SY

    @property
    def discriminators(self) -> Tuple[Discriminator, Discriminator]:
        return self.D_S, self.D_Y
