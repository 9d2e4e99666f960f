"""Class-specific convolution: per-pixel kernel selection from a filter bank.

Each output pixel is convolved with the kernel stack chosen by its class
index (1..M). Implementation gathers pixels by class and runs one dense
matmul per class present, which keeps the arithmetic identical to an
ordinary convolution applied pixel-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, _result
from .errors import ConfigError, DispatchError, ShapeError
from .functional import _col2im, _im2col
from .modules import Module, kaiming_uniform


@dataclass
class ClassMap:
    """Per-pixel class indices in 1..M for one image."""

    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices)
        if self.indices.ndim != 2:
            raise ShapeError(f"class map must be (H, W), got {self.indices.shape}")
        if not np.issubdtype(self.indices.dtype, np.integer):
            raise ShapeError("class map must hold integers")

    @property
    def shape(self):
        return self.indices.shape


class FilterBank:
    """M stacks of convolution weights sharing one (C_out, C_in, K, K) shape.

    Stacks are stored concatenated along the output-channel axis so the
    whole bank is a single trainable tensor.
    """

    def __init__(self, kernels: Tensor, num_classes: int, biases: Tensor | None = None):
        if num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {num_classes}")
        if kernels.data.ndim != 4 or kernels.shape[0] % num_classes:
            raise ShapeError(
                f"bank kernels must stack {num_classes} classes on axis 0, "
                f"got shape {kernels.shape}"
            )
        k = kernels.shape[2]
        if k != kernels.shape[3] or k % 2 == 0:
            raise ConfigError(f"kernel size must be odd and square, got {kernels.shape[2:]}")
        self.kernels = kernels
        self.num_classes = num_classes
        self.biases = biases
        if biases is not None and biases.data.shape != (1, kernels.shape[0], 1, 1):
            raise ShapeError(
                f"bank biases must be (1, {kernels.shape[0]}, 1, 1), got {biases.shape}"
            )

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0] // self.num_classes

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[2]

    def class_kernel(self, index: int) -> np.ndarray:
        """Weights of class ``index`` (1-based) as (C_out, C_in, K, K)."""
        c = self.out_channels
        return self.kernels.data[(index - 1) * c : index * c]

    def class_bias(self, index: int) -> np.ndarray | None:
        if self.biases is None:
            return None
        c = self.out_channels
        return self.biases.data.reshape(-1)[(index - 1) * c : index * c]

    @classmethod
    def from_stacks(cls, stacks, biases=None, requires_grad: bool = True) -> "FilterBank":
        """Build from a sequence of M (C_out, C_in, K, K) arrays."""
        arrs = [np.asarray(s, dtype=np.float64) for s in stacks]
        ref = arrs[0].shape
        if any(a.shape != ref for a in arrs):
            raise ShapeError("all bank stacks must share one shape")
        kern = Tensor(np.concatenate(arrs, axis=0), requires_grad=requires_grad)
        bias_t = None
        if biases is not None:
            flat = np.concatenate([np.asarray(b, dtype=np.float64).reshape(-1) for b in biases])
            if flat.size != kern.shape[0]:
                raise ShapeError("bank biases must supply C_out values per class")
            bias_t = Tensor(flat.reshape(1, -1, 1, 1), requires_grad=requires_grad)
        return cls(kern, len(arrs), bias_t)

    @classmethod
    def shared(cls, base_kernel, num_classes: int, base_bias=None,
               requires_grad: bool = True) -> "FilterBank":
        """Tile one kernel stack M times (the shared-weight starting point)."""
        base = np.asarray(base_kernel, dtype=np.float64)
        return cls.from_stacks(
            [base] * num_classes,
            None if base_bias is None else [base_bias] * num_classes,
            requires_grad=requires_grad,
        )


def _flat_classes(classes, n: int, h: int, w: int, num_classes: int) -> np.ndarray:
    """Validate and broadcast class indices to (N, H*W) int64."""
    if isinstance(classes, ClassMap):
        idx = classes.indices
    else:
        idx = np.asarray(classes)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("class indices must be integers")
    if idx.ndim == 2:
        if idx.shape != (h, w):
            raise ShapeError(f"class map {idx.shape} does not match feature {h}x{w}")
        idx = np.broadcast_to(idx, (n, h, w))
    elif idx.ndim == 3:
        if idx.shape != (n, h, w):
            raise ShapeError(f"class maps {idx.shape} do not match batch ({n},{h},{w})")
    else:
        raise ShapeError(f"class indices must be (H,W) or (N,H,W), got {idx.shape}")
    lo, hi = int(idx.min()), int(idx.max())
    if lo < 1 or hi > num_classes:
        raise DispatchError(
            f"class indices span {lo}..{hi}, outside the bank's 1..{num_classes}"
        )
    return idx.reshape(n, h * w).astype(np.int64)


def _gather_by_class(cls_flat: np.ndarray):
    """Yield (class index, batch indices, pixel indices) for classes present."""
    for i in np.unique(cls_flat):
        n_idx, p_idx = np.nonzero(cls_flat == i)
        yield int(i), n_idx, p_idx


def csconv_forward(q: Tensor, classes, bank: FilterBank) -> Tensor:
    """Differentiable convolution with per-pixel kernel selection.

    Chooses the kernel (and bias) of ``classes[pixel]`` at every output
    location; zero padding keeps spatial extents.
    """
    n, c_in, h, w = q.shape
    if c_in != bank.in_channels:
        raise ShapeError(f"input has {c_in} channels, bank expects {bank.in_channels}")
    k = bank.kernel_size
    c_out = bank.out_channels
    kk = k * k
    cls_flat = _flat_classes(classes, n, h, w, bank.num_classes)

    cols = _im2col(q.data, k).reshape(n, c_in * kk, h * w)
    wmat = bank.kernels.data.reshape(bank.num_classes, c_out, c_in * kk)
    bias_flat = None if bank.biases is None else bank.biases.data.reshape(-1)

    out = np.zeros((n, c_out, h * w))
    groups = list(_gather_by_class(cls_flat))
    for i, n_idx, p_idx in groups:
        sel = cols[n_idx, :, p_idx]  # (n_sel, C_in*KK)
        res = sel @ wmat[i - 1].T
        if bias_flat is not None:
            res = res + bias_flat[(i - 1) * c_out : i * c_out]
        out[n_idx, :, p_idx] = res

    parents = [q, bank.kernels]
    if bank.biases is not None:
        parents.append(bank.biases)

    def bw(grad):
        gq, gk, gb = _csconv_backward_arrays(
            grad, cols, cls_flat, bank, groups, n, c_in, h, w,
            need_input_grad=q.requires_grad,
        )
        if q.requires_grad:
            q._accumulate(gq)
        if bank.kernels.requires_grad:
            bank.kernels._accumulate(gk)
        if bank.biases is not None and bank.biases.requires_grad:
            bank.biases._accumulate(gb)

    return _result(out.reshape(n, c_out, h, w), tuple(parents), bw)


def _csconv_backward_arrays(grad_out, cols, cls_flat, bank, groups,
                            n, c_in, h, w, need_input_grad=True):
    k = bank.kernel_size
    c_out = bank.out_channels
    kk = k * k
    go = grad_out.reshape(n, c_out, h * w)
    wmat = bank.kernels.data.reshape(bank.num_classes, c_out, c_in * kk)

    gk = np.zeros_like(bank.kernels.data)
    gkmat = gk.reshape(bank.num_classes, c_out, c_in * kk)
    gb = None if bank.biases is None else np.zeros_like(bank.biases.data)
    gcols = np.zeros((n, c_in * kk, h * w)) if need_input_grad else None

    for i, n_idx, p_idx in groups:
        g_sel = go[n_idx, :, p_idx]  # (n_sel, C_out)
        sel = cols[n_idx, :, p_idx]
        gkmat[i - 1] += g_sel.T @ sel
        if gb is not None:
            gb.reshape(-1)[(i - 1) * c_out : i * c_out] += g_sel.sum(axis=0)
        if need_input_grad:
            gcols[n_idx, :, p_idx] = g_sel @ wmat[i - 1]

    gq = None
    if need_input_grad:
        gq = _col2im(gcols.reshape(n, c_in, kk, h * w), k, h, w)
    return gq, gk, gb


def csconv_backward(grad_out, q: Tensor, classes, bank: FilterBank):
    """Standalone adjoint: returns (grad_q, grad_kernels, grad_biases).

    Kernel stacks of classes absent from the map receive exactly zero.
    """
    n, c_in, h, w = q.shape
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (n, bank.out_channels, h, w):
        raise ShapeError(
            f"grad_out {grad_out.shape} does not match output "
            f"({n},{bank.out_channels},{h},{w})"
        )
    k = bank.kernel_size
    cls_flat = _flat_classes(classes, n, h, w, bank.num_classes)
    cols = _im2col(q.data, k).reshape(n, c_in * k * k, h * w)
    groups = list(_gather_by_class(cls_flat))
    return _csconv_backward_arrays(grad_out, cols, cls_flat, bank, groups, n, c_in, h, w)


class CsConv2d(Module):
    """Trainable class-specific convolution layer.

    All M stacks start from one shared random draw so training begins at
    the plain-convolution baseline and only diverges through per-class
    gradients.
    """

    def __init__(self, num_classes, in_channels, out_channels, kernel_size,
                 bias=True, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel_size * kernel_size
        base = kaiming_uniform(
            rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in
        )
        bank = FilterBank.shared(
            base, num_classes,
            base_bias=np.zeros(out_channels) if bias else None,
        )
        self.kernels = bank.kernels
        if bank.biases is not None:
            self.biases = bank.biases
        self.bank = bank
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.num_classes = num_classes

    def forward(self, x: Tensor, classes) -> Tensor:
        return csconv_forward(x, classes, self.bank)

    def flops_per_pixel(self) -> float:
        # counted like the plain conv it replaces; class lookup is free
        k = self.kernel_size
        return 2.0 * k * k * self.in_channels * self.out_channels
