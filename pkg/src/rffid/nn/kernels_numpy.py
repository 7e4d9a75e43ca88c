"""numpy fallback for the hot convolution/pooling kernels.

Same contracts as the compiled extension ``rffid.nn._kernels``: float64
C-contiguous arrays, NCHW layout, 3x3 kernels with stride 1 and zero padding
1, 2x2 max pooling with stride 2 breaking ties toward the first element in
row-major block order.

Convolutions are evaluated as nine shifted (B*H*W, C) x (C, O) BLAS
contractions, one per kernel tap, which avoids materializing im2col windows.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    batch, _, height, width = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    acc = np.empty((batch, height, width, w.shape[0]))
    acc[:] = b
    for kh in range(3):
        for kw in range(3):
            shifted = padded[:, :, kh : kh + height, kw : kw + width]
            acc += np.tensordot(shifted, w[:, :, kh, kw], axes=([1], [1]))
    return np.ascontiguousarray(acc.transpose(0, 3, 1, 2))


def conv3x3_backward(
    x: np.ndarray, w: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    batch, _, height, width = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dy_padded = np.pad(dy, ((0, 0), (0, 0), (1, 1), (1, 1)))

    dw = np.empty((w.shape[0], w.shape[1], 3, 3))
    dx_acc = np.zeros((batch, height, width, w.shape[1]))
    for kh in range(3):
        for kw in range(3):
            x_shifted = padded[:, :, kh : kh + height, kw : kw + width]
            dw[:, :, kh, kw] = np.tensordot(dy, x_shifted, axes=([0, 2, 3], [0, 2, 3]))
            dy_shifted = dy_padded[:, :, kh : kh + height, kw : kw + width]
            dx_acc += np.tensordot(
                dy_shifted, w[:, :, 2 - kh, 2 - kw], axes=([1], [0])
            )
    db = dy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dx_acc.transpose(0, 3, 1, 2)), dw, db


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    batch, channels, height, width = x.shape
    oh, ow = height // 2, width // 2
    blocks = x[:, :, : 2 * oh, : 2 * ow].reshape(batch, channels, oh, 2, ow, 2)
    candidates = np.stack(
        [
            blocks[:, :, :, 0, :, 0],
            blocks[:, :, :, 0, :, 1],
            blocks[:, :, :, 1, :, 0],
            blocks[:, :, :, 1, :, 1],
        ],
        axis=-1,
    )
    idx = np.argmax(candidates, axis=-1).astype(np.uint8)
    y = np.take_along_axis(candidates, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2x2_backward(
    idx: np.ndarray, dy: np.ndarray, height: int, width: int
) -> np.ndarray:
    batch, channels, oh, ow = dy.shape
    dx = np.zeros((batch, channels, height, width))
    rows = 2 * np.arange(oh)[None, None, :, None] + (idx >> 1)
    cols = 2 * np.arange(ow)[None, None, None, :] + (idx & 1)
    bb = np.arange(batch)[:, None, None, None]
    cc = np.arange(channels)[None, :, None, None]
    # pooled blocks are disjoint, so plain fancy assignment cannot collide
    dx[bb, cc, rows, cols] = dy
    return dx
