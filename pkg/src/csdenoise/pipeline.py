"""Data synthesis, two-stage training protocol, and evaluation.

Stage one trains the classification network against statistics measured
on clean patches; stage two freezes it and trains the denoiser under a
chosen pixel classifier (network prediction, or structure-tensor
analysis of the noisy or clean patch).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .csdn import CsdnConfig, build_csdn, csdn_forward, csdn_loss
from .errors import ConfigError, ShapeError
from .gradient_stats import (
    HashConfig,
    compute_class_map,
    compute_stats,
    normalize_stats,
)
from .metrics import psnr, ssim
from .optim import Adam, StepDecay
from .pcn import PcnConfig, build_pcn, pcn_class_map, pcn_loss

CLASSIFIER_MODES = ("pcn", "raisr-noisy", "raisr-clean")


@dataclass
class TrainConfig:
    sigma: float = 25.0
    batch_size: int = 4
    patch_size: int = 96
    epochs: int = 100
    steps_per_epoch: int = 50
    learning_rate: float = 1e-4
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if min(self.batch_size, self.patch_size, self.epochs, self.steps_per_epoch) < 1:
            raise ConfigError("batch/patch/epochs/steps must all be >= 1")


# -- data ----------------------------------------------------------------------


def add_awgn(img: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Additive white Gaussian noise with std sigma in 8-bit units, unclipped."""
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    return img + rng.normal(0.0, sigma / 255.0, size=img.shape)


def augment_patch(patch: np.ndarray, transform_id: int) -> np.ndarray:
    """Apply one of the 8 dihedral transforms; id 0 is the identity."""
    if not 0 <= transform_id <= 7:
        raise ConfigError(f"transform_id must be in 0..7, got {transform_id}")
    patch = np.asarray(patch)
    quarter_turns = transform_id % 4
    if patch.shape[0] != patch.shape[1] and quarter_turns % 2 == 1:
        raise ShapeError(
            f"quarter-turn rotation needs a square patch, got {patch.shape}"
        )
    out = np.fliplr(patch) if transform_id >= 4 else patch
    return np.rot90(out, quarter_turns).copy()


def _check_images(images, patch_size: int | None = None):
    images = [np.asarray(im, dtype=np.float64) for im in images]
    if not images:
        raise ConfigError("no images given")
    for i, im in enumerate(images):
        if im.ndim != 2:
            raise ShapeError(f"image {i} is not 2-D: {im.shape}")
        if patch_size is not None and min(im.shape) < patch_size:
            raise ConfigError(
                f"image {i} ({im.shape}) is smaller than patch size {patch_size}"
            )
    return images


def sample_clean_patch(images, patch_size: int, rng: np.random.Generator) -> np.ndarray:
    img = images[int(rng.integers(len(images)))]
    top = int(rng.integers(img.shape[0] - patch_size + 1))
    left = int(rng.integers(img.shape[1] - patch_size + 1))
    patch = img[top : top + patch_size, left : left + patch_size]
    return augment_patch(patch, int(rng.integers(8)))


# -- classification front-end ---------------------------------------------------


def classify_for_denoiser(noisy: np.ndarray, clean: np.ndarray | None,
                          mode: str, pcn=None, hash_cfg: HashConfig | None = None):
    """Class map for a patch under one of the classifier modes."""
    hash_cfg = hash_cfg if hash_cfg is not None else HashConfig()
    if mode == "pcn":
        if pcn is None:
            raise ConfigError("classifier mode 'pcn' needs a trained network")
        _, cmap = pcn_class_map(pcn, noisy, hash_cfg)
    elif mode == "raisr-noisy":
        _, cmap = compute_class_map(noisy, hash_cfg)
    elif mode == "raisr-clean":
        if clean is None:
            raise ConfigError("classifier mode 'raisr-clean' needs the clean image")
        _, cmap = compute_class_map(clean, hash_cfg)
    else:
        raise ConfigError(f"unknown classifier mode {mode!r}; pick from {CLASSIFIER_MODES}")
    return cmap


# -- stage one: classification network -------------------------------------------


def train_pcn(images, cfg: TrainConfig, pcn_cfg: PcnConfig | None = None):
    """Train the classification network on clean-image statistics targets.

    Returns (network, per-epoch mean loss history).
    """
    pcn_cfg = pcn_cfg if pcn_cfg is not None else PcnConfig()
    images = _check_images(images, cfg.patch_size)
    div = 2 ** (pcn_cfg.num_scales - 1)
    if cfg.patch_size % div:
        raise ConfigError(
            f"patch size {cfg.patch_size} must be divisible by {div} "
            f"for {pcn_cfg.num_scales} scales"
        )
    rng = np.random.default_rng(cfg.seed)
    net = build_pcn(pcn_cfg, seed=cfg.seed)
    opt = Adam(net.parameters(), learning_rate=cfg.learning_rate)
    sched = StepDecay(cfg.learning_rate, cfg.lr_decay_factor, cfg.lr_decay_every)

    history = []
    for epoch in range(cfg.epochs):
        opt.learning_rate = sched.rate_for_epoch(epoch)
        losses = []
        for _ in range(cfg.steps_per_epoch):
            noisy_batch = np.empty((cfg.batch_size, 1, cfg.patch_size, cfg.patch_size))
            target_batch = np.empty((cfg.batch_size, 3, cfg.patch_size, cfg.patch_size))
            for b in range(cfg.batch_size):
                clean = sample_clean_patch(images, cfg.patch_size, rng)
                target_batch[b] = normalize_stats(compute_stats(clean))
                noisy_batch[b, 0] = add_awgn(clean, cfg.sigma, rng)
            pred = net(Tensor(noisy_batch))
            loss = pcn_loss(pred, Tensor(target_batch))
            net.zero_grads()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    net.zero_grads()
    return net, history


# -- stage two: denoiser ----------------------------------------------------------


def train_csdn(images, cfg: TrainConfig, csdn_cfg: CsdnConfig | None = None,
               classifier: str = "raisr-noisy", pcn=None,
               hash_cfg: HashConfig | None = None):
    """Train the denoiser with the classification front-end frozen.

    Returns (network, per-epoch mean loss history).
    """
    csdn_cfg = csdn_cfg if csdn_cfg is not None else CsdnConfig()
    hash_cfg = hash_cfg if hash_cfg is not None else HashConfig()
    if classifier not in CLASSIFIER_MODES:
        raise ConfigError(
            f"unknown classifier mode {classifier!r}; pick from {CLASSIFIER_MODES}"
        )
    if classifier == "pcn" and pcn is None:
        raise ConfigError("classifier mode 'pcn' needs a trained network")
    if csdn_cfg.use_csconv and hash_cfg.num_classes != csdn_cfg.num_classes:
        raise ConfigError(
            f"hash produces {hash_cfg.num_classes} classes but the filter bank "
            f"holds {csdn_cfg.num_classes}"
        )
    images = _check_images(images, cfg.patch_size)
    rng = np.random.default_rng(cfg.seed)
    net = build_csdn(csdn_cfg, seed=cfg.seed)
    opt = Adam(net.parameters(), learning_rate=cfg.learning_rate)
    sched = StepDecay(cfg.learning_rate, cfg.lr_decay_factor, cfg.lr_decay_every)

    history = []
    for epoch in range(cfg.epochs):
        opt.learning_rate = sched.rate_for_epoch(epoch)
        losses = []
        for _ in range(cfg.steps_per_epoch):
            clean_batch = np.empty((cfg.batch_size, 1, cfg.patch_size, cfg.patch_size))
            noisy_batch = np.empty_like(clean_batch)
            class_batch = (
                np.empty((cfg.batch_size, cfg.patch_size, cfg.patch_size), dtype=np.int64)
                if csdn_cfg.use_csconv
                else None
            )
            for b in range(cfg.batch_size):
                clean = sample_clean_patch(images, cfg.patch_size, rng)
                noisy = add_awgn(clean, cfg.sigma, rng)
                clean_batch[b, 0] = clean
                noisy_batch[b, 0] = noisy
                if class_batch is not None:
                    cmap = classify_for_denoiser(noisy, clean, classifier, pcn, hash_cfg)
                    class_batch[b] = cmap.indices
            pred = net(Tensor(noisy_batch), class_batch)
            loss = csdn_loss(pred, Tensor(clean_batch))
            net.zero_grads()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    net.zero_grads()
    return net, history


# -- evaluation --------------------------------------------------------------------


def evaluate(net, images, sigma: float, seed: int = 0, classifier: str = "raisr-noisy",
             pcn=None, hash_cfg: HashConfig | None = None, names=None):
    """Corrupt, classify, denoise and score each image.

    ``net=None`` scores the identity denoiser (output = noisy input).
    Returns (per-image row dicts, summary dict with mean metrics).
    """
    images = _check_images(images)
    hash_cfg = hash_cfg if hash_cfg is not None else HashConfig()
    if net is not None and net.config.use_csconv and (
        hash_cfg.num_classes != net.config.num_classes
    ):
        raise ConfigError(
            f"hash produces {hash_cfg.num_classes} classes but the filter bank "
            f"holds {net.config.num_classes}"
        )
    if names is None:
        names = [f"image{i:03d}" for i in range(len(images))]
    rng = np.random.default_rng(seed)
    rows = []
    for name, clean in zip(names, images):
        noisy = add_awgn(clean, sigma, rng)
        if net is None:
            restored = noisy
        else:
            classes = None
            if net.config.use_csconv:
                classes = classify_for_denoiser(
                    noisy, clean, classifier, pcn, hash_cfg
                ).indices
            restored = csdn_forward(net, noisy, classes)
        restored = np.clip(restored, 0.0, 1.0)
        noisy_clipped = np.clip(noisy, 0.0, 1.0)
        rows.append(
            {
                "image": name,
                "sigma": float(sigma),
                "psnr_noisy": psnr(noisy_clipped, clean),
                "psnr": psnr(restored, clean),
                "ssim": ssim(restored, clean),
            }
        )
    summary = {
        "mean_psnr_noisy": float(np.mean([r["psnr_noisy"] for r in rows])),
        "mean_psnr": float(np.mean([r["psnr"] for r in rows])),
        "mean_ssim": float(np.mean([r["ssim"] for r in rows])),
    }
    return rows, summary


def write_report_csv(rows, summary, path):
    """Machine-readable results: image, sigma, psnr_noisy, psnr, ssim."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "sigma", "psnr_noisy", "psnr", "ssim"])
        for r in rows:
            writer.writerow(
                [r["image"], r["sigma"], f"{r['psnr_noisy']:.4f}",
                 f"{r['psnr']:.4f}", f"{r['ssim']:.4f}"]
            )
        writer.writerow(
            ["mean", rows[0]["sigma"] if rows else "",
             f"{summary['mean_psnr_noisy']:.4f}", f"{summary['mean_psnr']:.4f}",
             f"{summary['mean_ssim']:.4f}"]
        )


def format_report(rows, summary, header: str = "") -> str:
    """Plain-text results table, with an optional config-echo header."""
    lines = []
    if header:
        lines.extend(f"# {ln}" for ln in header.splitlines())
    lines.append(f"{'image':<16s} {'sigma':>6s} {'psnr_noisy':>11s} {'psnr':>8s} {'ssim':>7s}")
    for r in rows:
        lines.append(
            f"{r['image']:<16s} {r['sigma']:>6.1f} {r['psnr_noisy']:>11.2f} "
            f"{r['psnr']:>8.2f} {r['ssim']:>7.4f}"
        )
    lines.append(
        f"{'mean':<16s} {'':>6s} {summary['mean_psnr_noisy']:>11.2f} "
        f"{summary['mean_psnr']:>8.2f} {summary['mean_ssim']:>7.4f}"
    )
    return "\n".join(lines)
