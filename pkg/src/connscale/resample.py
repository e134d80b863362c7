"""Nearest-neighbour and bilinear upscaling of connectivity tensors.

Both modes use the half-pixel (pixel-centre) convention on the two spatial
axes and leave the trailing band axis untouched. Output pixel ``u`` maps to
source coordinate ``(u + 0.5) / r``; nearest takes its floor, bilinear blends
around ``(u + 0.5) / r - 0.5`` clamped to ``[0, C - 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUPPORTED_FACTORS = (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
MODES = ("nearest", "bilinear")


@dataclass(frozen=True)
class UpscaleConfig:
    factor: float = 1.0
    mode: str = "nearest"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.factor >= 1.0:
            raise ValueError(f"factor must be >= 1, got {self.factor}")

    def output_size(self, n: int) -> int:
        return output_size(n, self.factor)

    def apply(self, tensor: np.ndarray) -> np.ndarray:
        return upscale(tensor, self.factor, self.mode)


def output_size(n: int, r: float) -> int:
    size = n * r
    if abs(size - round(size)) > 1e-9:
        raise ValueError(f"{n} x {r} = {size} is not an integral output size")
    return int(round(size))


def nearest_index(n_out: int, n_in: int, r: float) -> np.ndarray:
    """Source row for every output row under the half-pixel floor rule."""
    u = np.arange(n_out, dtype=np.float64)
    idx = np.floor((u + 0.5) / r).astype(np.intp)
    return np.clip(idx, 0, n_in - 1)


def bilinear_weights(n_out: int, n_in: int, r: float):
    """Lower source index, upper source index and blend weight per output row."""
    u = np.arange(n_out, dtype=np.float64)
    s = np.clip((u + 0.5) / r - 0.5, 0.0, n_in - 1)
    lo = np.floor(s).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, s - lo


def _as3d(tensor):
    t = np.asarray(tensor)
    if t.ndim == 2:
        return t[:, :, None], True
    if t.ndim != 3:
        raise ValueError(f"expected H x W or H x W x B, got shape {t.shape}")
    return t, False


def upscale_nearest(tensor, r: float) -> np.ndarray:
    """Block-replicate ``tensor`` by factor ``r``; the value set never grows."""
    t, squeeze = _as3d(tensor)
    h_out, w_out = output_size(t.shape[0], r), output_size(t.shape[1], r)
    if r == 1.0:
        out = t.copy()
    else:
        rows = nearest_index(h_out, t.shape[0], r)
        cols = nearest_index(w_out, t.shape[1], r)
        out = t[rows][:, cols]
    return out[:, :, 0] if squeeze else out


def _lerp_axis(t: np.ndarray, axis: int, n_out: int, r: float) -> np.ndarray:
    lo, hi, w = bilinear_weights(n_out, t.shape[axis], r)
    a = np.take(t, lo, axis=axis)
    b = np.take(t, hi, axis=axis)
    shape = [1] * t.ndim
    shape[axis] = n_out
    # a + w*(b - a) keeps equal neighbours exact
    return a + w.reshape(shape).astype(t.dtype) * (b - a)


def upscale_bilinear(tensor, r: float) -> np.ndarray:
    """Separable bilinear upscaling, clamped to each band's input range."""
    t, squeeze = _as3d(tensor)
    h_out, w_out = output_size(t.shape[0], r), output_size(t.shape[1], r)
    if r == 1.0:
        out = t.copy()
    else:
        out = _lerp_axis(_lerp_axis(t, 0, h_out, r), 1, w_out, r)
        lo = t.min(axis=(0, 1))
        hi = t.max(axis=(0, 1))
        np.clip(out, lo, hi, out=out)
    return out[:, :, 0] if squeeze else out


def upscale(tensor, r: float, mode: str = "nearest") -> np.ndarray:
    if mode == "nearest":
        return upscale_nearest(tensor, r)
    if mode == "bilinear":
        return upscale_bilinear(tensor, r)
    raise ValueError(f"unknown interpolation mode {mode!r}")


def factor_tag(r: float) -> str:
    """Filename/seed friendly factor token, e.g. ``2.5 -> '2p5'``."""
    whole, frac = divmod(round(r * 10), 10)
    return f"{whole}p{frac}" if frac else f"{whole}"


def is_supported(r: float) -> bool:
    return any(math.isclose(r, f) for f in SUPPORTED_FACTORS)
