"""Pure NumPy 3x3 'same' convolution kernels (float64, NCHW).

Same contract as the compiled ``_conv`` extension.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _patches(x):
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return sliding_window_view(xp, (3, 3), axis=(2, 3))  # B, C, H, W, 3, 3


def conv3x3_forward(x, w, b):
    y = np.tensordot(_patches(x), w, axes=([1, 4, 5], [1, 2, 3]))  # B, H, W, Co
    y += b
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv3x3_backward(x, w, gy):
    gb = gy.sum(axis=(0, 2, 3))
    gw = np.tensordot(gy, _patches(x), axes=([0, 2, 3], [0, 2, 3]))
    flipped = w[:, :, ::-1, ::-1]
    gx = np.tensordot(_patches(gy), flipped, axes=([1, 4, 5], [0, 2, 3]))  # B, H, W, Ci
    return np.ascontiguousarray(gx.transpose(0, 3, 1, 2)), gw, gb
