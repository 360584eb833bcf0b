"""Differentiable layer primitives.

Each layer is a thin value object over its parameter tensors with an explicit
`forward` and `backward`. Backward passes return a `LayerGrads` carrying the
parameter gradients (same shapes as the parameters) plus the gradient with
respect to the layer input, so the network module can chain them without an
autograd graph.

Conventions baked in here:

* Convolution is valid-mode cross-correlation, stride 1, no padding. Learned
  kernels make this equivalent to flipped-kernel convolution up to a flip,
  which the oracle tests apply explicitly.
* Max pooling is 2x2 on the spatial axes only, ceil mode: a trailing odd row
  or column forms a partial window. Ties break to the first element in scan
  order, which fixes the backward routing.
* PReLU uses its negative-branch slope at exactly x == 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ShapeError
from .rng import RngState
from .tensor import Tensor, xavier_init


@dataclass(frozen=True)
class LayerGrads:
    """Parameter gradients keyed by parameter name, plus the input gradient."""

    params: dict[str, Tensor]
    grad_input: Tensor


class Conv3dLayer:
    """3D convolution over [in_ch, t, h, w] inputs.

    kernel: [out_ch, in_ch, kt, kh, kw]; bias: [out_ch].
    Output extents follow valid-mode arithmetic: t-kt+1, h-kh+1, w-kw+1.
    """

    def __init__(self, kernel: Tensor, bias: Tensor):
        if kernel.ndim != 5:
            raise ShapeError(f"conv kernel must have rank 5, got {kernel.shape}")
        if bias.shape != (kernel.shape[0],):
            raise ShapeError(f"conv bias shape {bias.shape} != ({kernel.shape[0]},)")
        self.kernel = kernel
        self.bias = bias

    @classmethod
    def initialize(cls, out_ch: int, in_ch: int, kt: int, kh: int, kw: int,
                   rng: RngState, dtype=np.float32) -> "Conv3dLayer":
        """Xavier-initialized kernel, zero bias."""
        receptive = kt * kh * kw
        kernel = xavier_init((out_ch, in_ch, kt, kh, kw),
                             fan_in=in_ch * receptive, fan_out=out_ch * receptive,
                             rng=rng, dtype=dtype)
        bias = Tensor(np.zeros(out_ch, dtype=dtype))
        return cls(kernel, bias)

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def kernel_extents(self) -> tuple[int, int, int]:
        return self.kernel.shape[2:]

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4:
            raise ShapeError(f"conv input must have rank 4, got {x.shape}")
        if x.shape[0] != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} input channels, got {x.shape[0]}")
        kt, kh, kw = self.kernel_extents
        if x.shape[1] < kt or x.shape[2] < kh or x.shape[3] < kw:
            raise ShapeError(
                f"input {x.shape} is smaller than kernel ({kt},{kh},{kw}) in some dimension")

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        out = backend.conv3d_forward(x.numpy(), self.kernel.numpy(), self.bias.numpy())
        return Tensor._wrap(out)

    def backward(self, x: Tensor, grad_out: Tensor) -> LayerGrads:
        self._check_input(x)
        kt, kh, kw = self.kernel_extents
        expect = (self.out_channels, x.shape[1] - kt + 1, x.shape[2] - kh + 1, x.shape[3] - kw + 1)
        if grad_out.shape != expect:
            raise ShapeError(f"grad_out shape {grad_out.shape} != forward output shape {expect}")
        gk, gb, gx = backend.conv3d_backward(x.numpy(), self.kernel.numpy(), grad_out.numpy())
        return LayerGrads(params={"kernel": Tensor._wrap(gk), "bias": Tensor._wrap(gb)},
                          grad_input=Tensor._wrap(gx))


class PReluLayer:
    """Per-channel parametric ReLU: y = x if x > 0 else slope[c] * x.

    The channel axis is axis 0 of the input. Slopes are learnable; pass the
    gradients to the optimizer or drop them to keep slopes frozen.
    """

    def __init__(self, slope: Tensor):
        if slope.ndim != 1:
            raise ShapeError(f"prelu slope must have rank 1, got {slope.shape}")
        self.slope = slope

    @classmethod
    def initialize(cls, channels: int, value: float = 0.01, dtype=np.float32) -> "PReluLayer":
        return cls(Tensor(np.full(channels, value, dtype=dtype)))

    def _slope_bcast(self, x: Tensor) -> np.ndarray:
        if x.shape[0] != self.slope.shape[0]:
            raise ShapeError(f"prelu has {self.slope.shape[0]} slopes but input has {x.shape[0]} channels")
        return self.slope.numpy().reshape((-1,) + (1,) * (x.ndim - 1))

    def forward(self, x: Tensor) -> Tensor:
        a = self._slope_bcast(x)
        xv = x.numpy()
        return Tensor._wrap(np.where(xv > 0, xv, a * xv))

    def backward(self, x: Tensor, grad_out: Tensor) -> LayerGrads:
        if grad_out.shape != x.shape:
            raise ShapeError(f"grad_out shape {grad_out.shape} != input shape {x.shape}")
        a = self._slope_bcast(x)
        xv, gv = x.numpy(), grad_out.numpy()
        grad_in = np.where(xv > 0, gv, a * gv)
        neg = np.where(xv > 0, 0.0, gv * xv)
        grad_slope = neg.reshape(x.shape[0], -1).sum(axis=1).astype(x.dtype, copy=False)
        return LayerGrads(params={"slope": Tensor._wrap(grad_slope)},
                          grad_input=Tensor._wrap(grad_in))


@dataclass(frozen=True)
class ArgmaxIndices:
    """Routing record from a pooling forward pass.

    `flat` holds, for every pooled output cell, the argmax position within
    the input's flattened h*w plane; `input_shape` pins the pass it came from.
    """

    input_shape: tuple[int, int, int, int]
    flat: np.ndarray  # int64 [c, t, h_out, w_out]


class MaxPoolLayer:
    """2x2 spatial max pooling, ceil mode, time axis untouched."""

    pool_h = 2
    pool_w = 2

    def forward(self, x: Tensor) -> tuple[Tensor, ArgmaxIndices]:
        if x.ndim != 4:
            raise ShapeError(f"pool input must have rank 4, got {x.shape}")
        c, t, h, w = x.shape
        ho, wo = -(-h // 2), -(-w // 2)
        xv = x.numpy()
        padded = np.full((c, t, ho * 2, wo * 2), -np.inf, dtype=x.dtype)
        padded[:, :, :h, :w] = xv
        # [c,t,ho,2,wo,2] -> [c,t,ho,wo,2,2]: window cells in scan order, so
        # argmax's first-occurrence rule is the tie-break contract.
        win = padded.reshape(c, t, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
        flatwin = win.reshape(c, t, ho, wo, 4)
        local = flatwin.argmax(axis=-1)
        rows = (np.arange(ho) * 2)[None, None, :, None] + local // 2
        cols = (np.arange(wo) * 2)[None, None, None, :] + local % 2
        out = np.take_along_axis(flatwin, local[..., None], axis=-1)[..., 0]
        idx = ArgmaxIndices(input_shape=(c, t, h, w), flat=(rows * w + cols).astype(np.int64))
        return Tensor._wrap(np.ascontiguousarray(out)), idx

    def backward(self, indices: ArgmaxIndices, grad_out: Tensor) -> Tensor:
        c, t, h, w = indices.input_shape
        if grad_out.shape != indices.flat.shape:
            raise ShapeError(
                f"grad_out shape {grad_out.shape} does not match pooled shape {indices.flat.shape}")
        grad = np.zeros((c, t, h * w), dtype=grad_out.dtype)
        ci, ti = np.meshgrid(np.arange(c), np.arange(t), indexing="ij")
        ci = ci[:, :, None, None]
        ti = ti[:, :, None, None]
        np.add.at(grad, (ci, ti, indices.flat), grad_out.numpy())
        return Tensor._wrap(grad.reshape(c, t, h, w))


class DenseLayer:
    """Fully connected map y = W x + b for rank-1 inputs."""

    def __init__(self, weights: Tensor, bias: Tensor):
        if weights.ndim != 2:
            raise ShapeError(f"dense weights must have rank 2, got {weights.shape}")
        if bias.shape != (weights.shape[0],):
            raise ShapeError(f"dense bias shape {bias.shape} != ({weights.shape[0]},)")
        self.weights = weights
        self.bias = bias

    @classmethod
    def initialize(cls, out_features: int, in_features: int, rng: RngState,
                   dtype=np.float32) -> "DenseLayer":
        weights = xavier_init((out_features, in_features), fan_in=in_features,
                              fan_out=out_features, rng=rng, dtype=dtype)
        bias = Tensor(np.zeros(out_features, dtype=dtype))
        return cls(weights, bias)

    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 1 or x.shape[0] != self.weights.shape[1]:
            raise ShapeError(
                f"dense expects input of shape ({self.weights.shape[1]},), got {x.shape}")

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        return Tensor._wrap(self.weights.numpy() @ x.numpy() + self.bias.numpy())

    def backward(self, x: Tensor, grad_out: Tensor) -> LayerGrads:
        self._check_input(x)
        if grad_out.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"grad_out shape {grad_out.shape} != ({self.weights.shape[0]},)")
        g = grad_out.numpy()
        return LayerGrads(
            params={"weights": Tensor._wrap(np.outer(g, x.numpy())),
                    "bias": Tensor(g)},
            grad_input=Tensor._wrap(self.weights.numpy().T @ g),
        )


def flatten(x: Tensor) -> Tensor:
    """Row-major flattening to a rank-1 tensor; reshape restores the original exactly."""
    return x.reshape((x.size,))
