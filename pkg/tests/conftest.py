import numpy as np
import pytest

from pose3d.tensor import Tensor


def rel_err(a: float, b: float) -> float:
    """|a - b| relative to the larger magnitude, floored at 1 so near-zero
    pairs compare absolutely."""
    return abs(a - b) / max(1.0, abs(a), abs(b))


def finite_difference(loss_fn, arr: np.ndarray, h: float = 1e-5,
                      indices=None) -> np.ndarray:
    """Central finite differences of scalar loss_fn(ndarray) at every
    coordinate (or the listed flat indices)."""
    flat = arr.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = np.zeros(arr.shape).reshape(-1)
    for i in idx:
        up = flat.copy()
        dn = flat.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (loss_fn(up.reshape(arr.shape)) - loss_fn(dn.reshape(arr.shape))) / (2 * h)
    return out.reshape(arr.shape)


def assert_grad_close(analytic: np.ndarray, fd: np.ndarray, tol: float = 1e-4,
                      indices=None):
    a = analytic.reshape(-1)
    f = fd.reshape(-1)
    idx = range(a.size) if indices is None else indices
    for i in idx:
        err = rel_err(a[i], f[i])
        assert err < tol, f"grad mismatch at flat index {i}: analytic {a[i]}, fd {f[i]}, rel {err}"


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


def t64(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64))
