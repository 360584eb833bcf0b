# cython: language_level=3
"""Compiled hot kernels: valid-mode 3D cross-correlation forward/backward.

Loops are ordered so the innermost loop runs contiguously along the width
axis of both operands (axpy/dot shapes the C compiler can vectorize), with
the kernel scalar hoisted. Single-threaded for bit-stable determinism.
Supports float32 and float64 buffers; inputs may be read-only arrays.
"""

import numpy as np

cimport cython

ctypedef fused real:
    float
    double


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _conv3d_forward_impl(const real[:, :, :, ::1] x,
                               const real[:, :, :, :, ::1] kernel,
                               const real[::1] bias,
                               real[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t O = kernel.shape[0], C = kernel.shape[1]
    cdef Py_ssize_t KT = kernel.shape[2], KH = kernel.shape[3], KW = kernel.shape[4]
    cdef Py_ssize_t OT = out.shape[1], OH = out.shape[2], OW = out.shape[3]
    cdef Py_ssize_t o, c, i, j, k, m, n, l
    cdef real kv
    cdef const real* xrow
    cdef real* orow

    for o in range(O):
        for i in range(OT):
            for j in range(OH):
                orow = &out[o, i, j, 0]
                for k in range(OW):
                    orow[k] = bias[o]
        for c in range(C):
            for m in range(KT):
                for n in range(KH):
                    for l in range(KW):
                        kv = kernel[o, c, m, n, l]
                        if kv == 0:
                            continue
                        for i in range(OT):
                            for j in range(OH):
                                xrow = &x[c, i + m, j + n, l]
                                orow = &out[o, i, j, 0]
                                for k in range(OW):
                                    orow[k] = orow[k] + kv * xrow[k]


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _conv3d_backward_impl(const real[:, :, :, ::1] x,
                                const real[:, :, :, :, ::1] kernel,
                                const real[:, :, :, ::1] grad_out,
                                real[:, :, :, :, ::1] grad_kernel,
                                real[::1] grad_bias,
                                real[:, :, :, ::1] grad_x) noexcept nogil:
    cdef Py_ssize_t O = kernel.shape[0], C = kernel.shape[1]
    cdef Py_ssize_t KT = kernel.shape[2], KH = kernel.shape[3], KW = kernel.shape[4]
    cdef Py_ssize_t OT = grad_out.shape[1], OH = grad_out.shape[2], OW = grad_out.shape[3]
    cdef Py_ssize_t o, c, i, j, k, m, n, l
    cdef real acc, kv
    cdef const real* grow
    cdef const real* xrow
    cdef real* gxrow

    for o in range(O):
        acc = 0
        for i in range(OT):
            for j in range(OH):
                grow = &grad_out[o, i, j, 0]
                for k in range(OW):
                    acc = acc + grow[k]
        grad_bias[o] = acc

    for o in range(O):
        for c in range(C):
            for m in range(KT):
                for n in range(KH):
                    for l in range(KW):
                        acc = 0
                        for i in range(OT):
                            for j in range(OH):
                                grow = &grad_out[o, i, j, 0]
                                xrow = &x[c, i + m, j + n, l]
                                for k in range(OW):
                                    acc = acc + grow[k] * xrow[k]
                        grad_kernel[o, c, m, n, l] = acc

    for o in range(O):
        for c in range(C):
            for m in range(KT):
                for n in range(KH):
                    for l in range(KW):
                        kv = kernel[o, c, m, n, l]
                        if kv == 0:
                            continue
                        for i in range(OT):
                            for j in range(OH):
                                grow = &grad_out[o, i, j, 0]
                                gxrow = &grad_x[c, i + m, j + n, l]
                                for k in range(OW):
                                    gxrow[k] = gxrow[k] + kv * grow[k]


def conv3d_forward(x, kernel, bias):
    """Valid-mode 3D cross-correlation; see the numpy backend for the contract."""
    cdef Py_ssize_t ot = x.shape[1] - kernel.shape[2] + 1
    cdef Py_ssize_t oh = x.shape[2] - kernel.shape[3] + 1
    cdef Py_ssize_t ow = x.shape[3] - kernel.shape[4] + 1
    out = np.empty((kernel.shape[0], ot, oh, ow), dtype=x.dtype)
    if x.dtype == np.float64:
        _conv3d_forward_impl[double](x, kernel, bias, out)
    else:
        _conv3d_forward_impl[float](x, kernel, bias, out)
    return out


def conv3d_backward(x, kernel, grad_out):
    """Gradients (grad_kernel, grad_bias, grad_x) of the forward kernel."""
    grad_kernel = np.zeros_like(kernel, subok=False)
    grad_bias = np.zeros(kernel.shape[0], dtype=kernel.dtype)
    grad_x = np.zeros_like(x, subok=False)
    if x.dtype == np.float64:
        _conv3d_backward_impl[double](x, kernel, grad_out, grad_kernel, grad_bias, grad_x)
    else:
        _conv3d_backward_impl[float](x, kernel, grad_out, grad_kernel, grad_bias, grad_x)
    return grad_kernel, grad_bias, grad_x
