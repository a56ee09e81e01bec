"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x):
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    # (N, Ci, H, W, 3, 3)
    return sliding_window_view(xp, (3, 3), axis=(2, 3))


def conv3x3_forward(x, w, b):
    """3x3 convolution, stride 1, zero padding 1. x is (N, Ci, H, W)."""
    if w.shape[1] != x.shape[1] or w.shape[2:] != (3, 3) or b.shape[0] != w.shape[0]:
        raise ValueError("conv3x3_forward: weight/bias shape does not match input")
    y = np.einsum("nihwyx,oiyx->nohw", _windows(x), w, optimize=True)
    y += b[None, :, None, None]
    return np.ascontiguousarray(y, dtype=x.dtype)


def conv3x3_backward(x, w, gy):
    """Gradients of conv3x3_forward: returns (grad_input, grad_weight, grad_bias)."""
    if gy.shape != (x.shape[0], w.shape[0]) + x.shape[2:]:
        raise ValueError("conv3x3_backward: output gradient shape mismatch")
    gb = gy.sum(axis=(0, 2, 3))
    gw = np.einsum("nihwyx,nohw->oiyx", _windows(x), gy, optimize=True)
    # full correlation of gy with the flipped kernel
    w_flip = w[:, :, ::-1, ::-1]
    gx = np.einsum("nohwyx,oiyx->nihw", _windows(gy), w_flip, optimize=True)
    dt = x.dtype
    return (np.ascontiguousarray(gx, dtype=dt), np.ascontiguousarray(gw, dtype=dt),
            np.ascontiguousarray(gb, dtype=dt))


def min_sq_dists(a, b, chunk=2048):
    """For each point in ``a`` the squared Euclidean distance to the nearest point of ``b``."""
    if len(b) == 0:
        raise ValueError("min_sq_dists: empty target set")
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    out = np.empty(len(a), dtype=np.int64)
    for start in range(0, len(a), chunk):
        d = a[start:start + chunk, None, :] - b[None, :, :]
        out[start:start + chunk] = (d * d).sum(axis=2).min(axis=1)
    return out
