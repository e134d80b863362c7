"""Functional NHWC layers with explicit backward passes.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
consumes that cache. Arithmetic runs in the dtype of the inputs, so the whole
engine switches to float64 by passing float64 parameters and data.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# cap on im2col scratch per chunk, in bytes
_COLS_BUDGET = 1 << 28


class NumericFault(FloatingPointError):
    """A NaN or Inf appeared in activations or loss."""


def _im2col(xp: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    # (n, h, w, c, k, k) -> (n*h*w, k*k*c) in (ky, kx, c) order
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    n, c = xp.shape[0], xp.shape[3]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * h * w, k * k * c)


def _chunks(n: int, per_sample_bytes: int):
    step = max(1, _COLS_BUDGET // max(per_sample_bytes, 1))
    for i in range(0, n, step):
        yield slice(i, min(n, i + step))


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Stride-1 'same' convolution (cross-correlation) of NHWC ``x``.

    ``weight`` has shape ``(k, k, c_in, c_out)`` with odd ``k``; the input is
    zero-padded by ``(k - 1) / 2`` on every side so ``h`` and ``w`` are kept.
    """
    k, k2, c_in, c_out = weight.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"kernel must be square and odd, got {k}x{k2}")
    if x.ndim != 4 or x.shape[3] != c_in:
        raise ValueError(f"input {x.shape} does not match kernel input channels {c_in}")
    n, h, w, _ = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    wmat = weight.reshape(k * k * c_in, c_out)
    out = np.empty((n, h, w, c_out), dtype=np.result_type(x, weight))
    for sl in _chunks(n, h * w * k * k * c_in * x.itemsize):
        m = sl.stop - sl.start
        out[sl] = (_im2col(xp[sl], k, h, w) @ wmat).reshape(m, h, w, c_out)
    out += bias
    return out


def conv2d_forward(x, weight, bias):
    return conv2d(x, weight, bias), (x, weight)


def conv2d_backward(dout: np.ndarray, cache, need_dx: bool = True):
    """Gradients ``(dx, dweight, dbias)``; ``dx`` is None when not needed."""
    x, weight = cache
    k, _, c_in, c_out = weight.shape
    n, h, w, _ = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    dw = np.zeros((k * k * c_in, c_out), dtype=dout.dtype)
    for sl in _chunks(n, h * w * k * k * c_in * x.itemsize):
        cols = _im2col(xp[sl], k, h, w)
        dw += cols.T @ dout[sl].reshape(-1, c_out)
    db = dout.sum(axis=(0, 1, 2))
    dx = None
    if need_dx:
        # input gradient is a 'same' correlation with the flipped, transposed kernel
        flipped = weight[::-1, ::-1].transpose(0, 1, 3, 2)
        dx = conv2d(dout, np.ascontiguousarray(flipped), np.zeros(c_in, dtype=dout.dtype))
    return dx, dw.reshape(weight.shape), db


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    return dout * (out > 0)


def maxpool2x2_forward(x: np.ndarray):
    """2x2 stride-2 max pooling; an odd trailing row/column is dropped."""
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ValueError(f"cannot pool a {h}x{w} map")
    blocks = (x[:, :2 * h2, :2 * w2]
              .reshape(n, h2, 2, w2, 2, c)
              .transpose(0, 1, 3, 5, 2, 4)
              .reshape(n, h2, w2, c, 4))
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg)


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    return maxpool2x2_forward(x)[0]


def maxpool2x2_backward(dout: np.ndarray, cache) -> np.ndarray:
    shape, arg = cache
    n, h, w, c = shape
    h2, w2 = h // 2, w // 2
    blocks = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[:, :2 * h2, :2 * w2] = (blocks.reshape(n, h2, w2, c, 2, 2)
                               .transpose(0, 1, 4, 2, 5, 3)
                               .reshape(n, 2 * h2, 2 * w2, c))
    return dx


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x @ weight + bias


def dense_backward(dout, x, weight):
    return dout @ weight.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels):
    """Mean cross-entropy over the batch and the softmax probabilities.

    Returns ``(loss, probs, dlogits)`` where ``dlogits`` is the gradient of the
    mean loss, ``(probs - onehot) / n``.
    """
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels))
    n, n_cls = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"{labels.shape[0]} labels for {n} logit rows")
    if labels.min() < 0 or labels.max() >= n_cls:
        raise ValueError(f"label outside [0, {n_cls})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    logp = z[np.arange(n), labels] - log_norm
    probs = np.exp(z - log_norm[:, None])
    loss = float(-logp.mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1
    dlogits /= n
    return loss, probs, dlogits
