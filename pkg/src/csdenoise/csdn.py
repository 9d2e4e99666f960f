"""Denoising networks: EDSR- and CARN-style backbones in which the second
convolution of every residual block may be a class-specific convolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .autodiff import Tensor, no_grad
from .csconv import CsConv2d
from .errors import ConfigError, ShapeError
from .modules import Conv2d, Module, ModuleList, PReLU


@dataclass
class CsdnConfig:
    arch: str = "edsr"
    num_blocks: int = 16
    num_features: int = 16
    use_csconv: bool = True
    num_classes: int = 72
    global_residual: str = "feature"  # "feature" (EDSR convention) or "image"

    def __post_init__(self):
        if self.arch not in ("edsr", "carn"):
            raise ConfigError(f"arch must be 'edsr' or 'carn', got {self.arch!r}")
        if self.num_blocks < 1 or self.num_features < 1:
            raise ConfigError("num_blocks and num_features must be >= 1")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.arch == "carn" and self.num_features % 2:
            raise ConfigError("carn needs an even feature count (grouped convs)")
        if self.global_residual not in ("feature", "image"):
            raise ConfigError(f"unknown global_residual {self.global_residual!r}")


def _second_conv(cfg: CsdnConfig, rng) -> Module:
    f = cfg.num_features
    if cfg.use_csconv:
        return CsConv2d(cfg.num_classes, f, f, 3, rng=rng)
    return Conv2d(f, f, 3, rng=rng)


class _ResidualBlock(Module):
    """conv3x3 -> PReLU -> (CSConv or conv)3x3, plus identity skip."""

    def __init__(self, cfg: CsdnConfig, rng, grouped_first: bool = False):
        super().__init__()
        f = cfg.num_features
        self.conv1 = Conv2d(f, f, 3, groups=2 if grouped_first else 1, rng=rng)
        self.act = PReLU(f)
        self.conv2 = _second_conv(cfg, rng)
        self.uses_classes = cfg.use_csconv

    def forward(self, x: Tensor, classes=None) -> Tensor:
        y = self.act(self.conv1(x))
        if self.uses_classes:
            y = self.conv2(y, classes)
        else:
            y = self.conv2(y)
        return x + y

    def flops_per_pixel(self) -> float:
        f = self.act.channels
        return (
            self.conv1.flops_per_pixel()
            + self.act.flops_per_pixel()
            + self.conv2.flops_per_pixel()
            + f  # skip add
        )


class EdsrNet(Module):
    """1-layer encoder, serial residual blocks, long skip, 1-layer decoder."""

    kind = "csdn"

    def __init__(self, cfg: CsdnConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        f = cfg.num_features
        self.config = cfg
        self.head = Conv2d(1, f, 3, rng=rng)
        self.blocks = ModuleList(
            _ResidualBlock(cfg, rng) for _ in range(cfg.num_blocks)
        )
        self.tail = Conv2d(f, 1, 3, rng=rng)

    def forward(self, x: Tensor, classes=None) -> Tensor:
        if self.config.use_csconv and classes is None:
            raise ConfigError("this network dispatches on a class map; none given")
        y0 = self.head(x)
        y = y0
        for block in self.blocks:
            y = block(y, classes)
        if self.config.global_residual == "feature":
            return self.tail(y + y0)
        return self.tail(y) + x

    def flops_layers(self):
        f = self.config.num_features
        rows = [("head", self.head.flops_per_pixel(), 1.0)]
        rows += [
            (f"block.{i}", b.flops_per_pixel(), 1.0) for i, b in enumerate(self.blocks)
        ]
        rows.append(("long_skip", float(f if self.config.global_residual == "feature" else 1), 1.0))
        rows.append(("tail", self.tail.flops_per_pixel(), 1.0))
        return rows


class _CascadeBlock(Module):
    """Three grouped residual blocks chained through 1x1 fusion convs."""

    def __init__(self, cfg: CsdnConfig, rng):
        super().__init__()
        f = cfg.num_features
        self.blocks = ModuleList(
            _ResidualBlock(cfg, rng, grouped_first=True) for _ in range(3)
        )
        self.fusions = ModuleList(Conv2d(2 * f, f, 1, rng=rng) for _ in range(3))

    def forward(self, x: Tensor, classes=None) -> Tensor:
        out = x
        for block, fuse in zip(self.blocks, self.fusions):
            b = block(out, classes)
            out = fuse(F.concat_channels([out, b]))
        return out

    def flops_per_pixel(self) -> float:
        return sum(b.flops_per_pixel() for b in self.blocks) + sum(
            f.flops_per_pixel() for f in self.fusions
        )


class CarnNet(Module):
    """Three cascading blocks with running 1x1 fusion, local and global."""

    kind = "csdn"

    def __init__(self, cfg: CsdnConfig, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        f = cfg.num_features
        self.config = cfg
        self.head = Conv2d(1, f, 3, rng=rng)
        self.cascades = ModuleList(_CascadeBlock(cfg, rng) for _ in range(3))
        self.global_fusions = ModuleList(Conv2d(2 * f, f, 1, rng=rng) for _ in range(3))
        self.tail = Conv2d(f, 1, 3, rng=rng)

    def forward(self, x: Tensor, classes=None) -> Tensor:
        if self.config.use_csconv and classes is None:
            raise ConfigError("this network dispatches on a class map; none given")
        out = self.head(x)
        for cascade, fuse in zip(self.cascades, self.global_fusions):
            b = cascade(out, classes)
            out = fuse(F.concat_channels([out, b]))
        return self.tail(out)

    def flops_layers(self):
        rows = [("head", self.head.flops_per_pixel(), 1.0)]
        for i, (cascade, fuse) in enumerate(zip(self.cascades, self.global_fusions)):
            rows.append((f"cascade.{i}", cascade.flops_per_pixel(), 1.0))
            rows.append((f"global_fusion.{i}", fuse.flops_per_pixel(), 1.0))
        rows.append(("tail", self.tail.flops_per_pixel(), 1.0))
        return rows


def build_cs_edsr(cfg: CsdnConfig | None = None, seed: int = 0) -> EdsrNet:
    cfg = cfg if cfg is not None else CsdnConfig(arch="edsr")
    if cfg.arch != "edsr":
        raise ConfigError(f"build_cs_edsr got arch {cfg.arch!r}")
    return EdsrNet(cfg, np.random.default_rng(seed))


def build_cs_carn(cfg: CsdnConfig | None = None, seed: int = 0) -> CarnNet:
    cfg = cfg if cfg is not None else CsdnConfig(arch="carn")
    if cfg.arch != "carn":
        raise ConfigError(f"build_cs_carn got arch {cfg.arch!r}")
    return CarnNet(cfg, np.random.default_rng(seed))


def build_csdn(cfg: CsdnConfig, seed: int = 0):
    return build_cs_edsr(cfg, seed) if cfg.arch == "edsr" else build_cs_carn(cfg, seed)


def csdn_forward(net, noisy: np.ndarray, classes=None) -> np.ndarray:
    """Denoise one image outside the training graph. Output is not clipped."""
    noisy = np.asarray(noisy, dtype=np.float64)
    if noisy.ndim != 2:
        raise ShapeError(f"expected (H, W) image, got {noisy.shape}")
    with no_grad():
        out = net.forward(Tensor(noisy[None, None]), classes)
    return out.data[0, 0]


def csdn_loss(estimate: Tensor, clean: Tensor) -> Tensor:
    """Mean absolute error between the estimate and the ground truth."""
    return F.l1_loss(estimate, clean)
