"""Dense N-dimensional tensor substrate.

Every value flowing through the engine is a `Tensor`: an immutable,
row-major, C-contiguous float array (float64 for verification, float32 for
training speed). Storage is a numpy array frozen after construction, so
tensors are safe to share across threads and operations never mutate their
inputs.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .errors import AxisError, ShapeError
from .rng import RngState

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def _validate_shape(shape: Sequence[int]) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ShapeError("tensor rank must be >= 1 (empty shape)")
    for s in shape:
        if s < 1:
            raise ShapeError(f"all extents must be >= 1, got shape {shape}")
    return shape


class Tensor:
    """Immutable dense array with row-major layout.

    Element (i0, ..., in-1) lives at flat offset sum(i_k * stride_k) with
    row-major strides; `data` exposes exactly that flat view.
    """

    __slots__ = ("_a",)

    def __init__(self, values, dtype=None):
        arr = np.array(values, order="C", copy=True)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64, copy=False)
        if arr.dtype not in FLOAT_DTYPES:
            raise ShapeError(f"unsupported dtype {arr.dtype}; use float32 or float64")
        _validate_shape(arr.shape)
        arr.setflags(write=False)
        self._a = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt an array without copying. Internal fast path; the caller
        must hand over ownership (no writers may remain)."""
        if arr.dtype not in FLOAT_DTYPES:
            raise ShapeError(f"unsupported dtype {arr.dtype}")
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        _validate_shape(arr.shape)
        arr.setflags(write=False)
        t = object.__new__(cls)
        t._a = arr
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def ndim(self) -> int:
        return self._a.ndim

    @property
    def size(self) -> int:
        return self._a.size

    @property
    def dtype(self) -> np.dtype:
        return self._a.dtype

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the elements (read-only)."""
        return self._a.reshape(-1)

    def numpy(self) -> np.ndarray:
        """Read-only ndarray view of the underlying storage."""
        return self._a

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        shape = _validate_shape(shape)
        if math.prod(shape) != self.size:
            raise ShapeError(f"cannot reshape {self.shape} (size {self.size}) to {shape}")
        return Tensor._wrap(self._a.reshape(shape))

    def astype(self, dtype) -> "Tensor":
        dtype = np.dtype(dtype)
        if dtype == self._a.dtype:
            return self
        return Tensor._wrap(self._a.astype(dtype))

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._a.reshape(-1)[0])

    def __getitem__(self, idx):
        return self._a[idx]

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype.name})"


def tensor_new(shape: Sequence[int], fill: float = 0.0, dtype=np.float64) -> Tensor:
    """New tensor of `shape` with every element equal to `fill`."""
    shape = _validate_shape(shape)
    return Tensor._wrap(np.full(shape, fill, dtype=dtype))


_ELEMENTWISE_OPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(a: Tensor, b: Tensor, op: str) -> Tensor:
    """Elementwise add/sub/mul of two same-shape tensors."""
    if op not in _ELEMENTWISE_OPS:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE_OPS)}")
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op}: shape mismatch {a.shape} vs {b.shape}")
    return Tensor._wrap(_ELEMENTWISE_OPS[op](a.numpy(), b.numpy()))


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "mul")


def scale(a: Tensor, factor: float) -> Tensor:
    """a * scalar. Plumbing for optimizers; keeps dtype."""
    return Tensor._wrap(a.numpy() * float(factor))


def reduce_mean(a: Tensor, axes: Iterable[int]) -> Tensor:
    """Arithmetic mean over the named axes; remaining axes keep their order.

    Reducing every axis yields a shape-[1] tensor (rank stays >= 1).
    An empty axis list returns an identity copy.
    """
    axes = [int(ax) for ax in axes]
    seen = set()
    for ax in axes:
        if ax < 0 or ax >= a.ndim:
            raise AxisError(f"axis {ax} out of range for rank {a.ndim}")
        if ax in seen:
            raise AxisError(f"duplicate axis {ax}")
        seen.add(ax)
    if not axes:
        return Tensor(a.numpy())
    out = a.numpy().mean(axis=tuple(axes))
    if out.ndim == 0:
        out = out.reshape(1)
    return Tensor._wrap(np.ascontiguousarray(out))


def xavier_init(shape: Sequence[int], fan_in: int, fan_out: int, rng: RngState,
                dtype=np.float64) -> Tensor:
    """Weights drawn i.i.d. uniform on [-b, b) with b = sqrt(6 / (fan_in + fan_out)).

    Draws are generated in float64 from `rng` and then cast, so a given seed
    produces the same tensor regardless of target dtype rounding order.
    """
    shape = _validate_shape(shape)
    if fan_in < 1 or fan_out < 1:
        raise ShapeError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    vals = rng.uniform(size=math.prod(shape), low=-bound, high=bound)
    return Tensor._wrap(vals.reshape(shape).astype(dtype, copy=False))
