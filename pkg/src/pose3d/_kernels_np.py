"""Vectorized numpy implementations of the convolution hot kernels.

This is the fallback backend used when the compiled extension is not
available (and the reference the extension is benchmarked against). It
trades memory for speed: the forward pass materializes tensordot operands
from a strided window view, which is fine at desk scale.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid-mode 3D cross-correlation over (time, height, width).

    x: [in_ch, t, h, w]; kernel: [out_ch, in_ch, kt, kh, kw]; bias: [out_ch].
    Returns [out_ch, t-kt+1, h-kh+1, w-kw+1].
    """
    kt, kh, kw = kernel.shape[2:]
    windows = sliding_window_view(x, (kt, kh, kw), axis=(1, 2, 3))
    out = np.tensordot(kernel, windows, axes=[(1, 2, 3, 4), (0, 4, 5, 6)])
    out += bias[:, None, None, None]
    return np.ascontiguousarray(out)


def conv3d_backward(x: np.ndarray, kernel: np.ndarray,
                    grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the valid-mode cross-correlation.

    Returns (grad_kernel, grad_bias, grad_x) for upstream gradient
    grad_out of shape [out_ch, t', h', w'].
    """
    kt, kh, kw = kernel.shape[2:]
    grad_bias = np.ascontiguousarray(grad_out.sum(axis=(1, 2, 3)))

    windows = sliding_window_view(x, (kt, kh, kw), axis=(1, 2, 3))
    # [o,t',h',w'] x [c,t',h',w',kt,kh,kw] -> [o,c,kt,kh,kw]
    grad_kernel = np.tensordot(grad_out, windows, axes=[(1, 2, 3), (1, 2, 3)])

    # grad_x is the full correlation of grad_out with the flipped kernel.
    pad = ((0, 0), (kt - 1, kt - 1), (kh - 1, kh - 1), (kw - 1, kw - 1))
    gpad = np.pad(grad_out, pad)
    gwin = sliding_window_view(gpad, (kt, kh, kw), axis=(1, 2, 3))
    kflip = kernel[:, :, ::-1, ::-1, ::-1]
    # [o,t,h,w,kt,kh,kw] x [o,c,kt,kh,kw] -> [t,h,w,c]
    grad_x = np.tensordot(gwin, kflip, axes=[(0, 4, 5, 6), (0, 2, 3, 4)])
    grad_x = np.ascontiguousarray(np.moveaxis(grad_x, 3, 0))
    return np.ascontiguousarray(grad_kernel), grad_bias, grad_x
