"""Activation maps, Grad-CAM, row profiles and feature export.

Grad-CAM here weights each channel of a convolution layer's (post-ReLU)
output by the spatial mean of the class logit's gradient with respect to that
channel, sums, and applies ReLU. The default target is the first convolution
(layer 2), where the effect of input upscaling is most visible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .nn.model import CONV_LAYERS, ModelConfig, backward, forward
from .resample import nearest_index


@dataclass
class ActivationMap:
    layer: int
    maps: np.ndarray  # h x w x channels
    source: object = None

    @property
    def grayscale(self) -> np.ndarray:
        """Per-pixel mean across channels."""
        return self.maps.mean(axis=-1)


@dataclass
class GradCamMap:
    layer: int
    class_idx: int
    raw: np.ndarray
    peak: float  # max of ``raw`` before normalization

    @property
    def normalized(self) -> np.ndarray:
        return self.raw / self.peak if self.peak > 0 else np.zeros_like(self.raw)


def _check_layer(layer: int) -> None:
    if layer not in CONV_LAYERS:
        raise ValueError(f"layer {layer} is not a convolution layer; choose from {CONV_LAYERS}")


def _single(sample: np.ndarray) -> np.ndarray:
    sample = np.asarray(sample)
    if sample.ndim == 3:
        return sample[None]
    if sample.ndim != 4 or sample.shape[0] != 1:
        raise ValueError("expected one sample (H x W x B)")
    return sample


def capture_activation(params: dict, sample: np.ndarray, config: ModelConfig, layer: int = 2,
                       source=None) -> ActivationMap:
    """Exact forward activations of a post-ReLU convolution layer for one sample."""
    _check_layer(layer)
    _, cache = forward(params, _single(sample), config, keep=True)
    return ActivationMap(layer, cache.acts[layer][0], source)


def weighted_activation_map(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """``ReLU(sum_c mean_hw(grad_c) * act_c)`` for h x w x c arrays."""
    weights = gradients.mean(axis=(0, 1))
    return np.maximum(activations @ weights, 0.0)


def grad_cam(params: dict, sample: np.ndarray, config: ModelConfig, class_idx: int,
             layer: int = 2) -> GradCamMap:
    """Grad-CAM of the pre-softmax logit ``class_idx`` at a convolution layer."""
    _check_layer(layer)
    if not 0 <= class_idx < config.n_classes:
        raise ValueError(f"class {class_idx} outside [0, {config.n_classes})")
    logits, cache = forward(params, _single(sample), config, keep=True)
    seed = np.zeros_like(logits)
    seed[0, class_idx] = 1.0
    _, dacts = backward(params, cache, seed, stop_at=layer)
    raw = weighted_activation_map(cache.acts[layer][0], dacts[layer][0])
    return GradCamMap(layer, class_idx, raw, float(raw.max()))


def row_profile(image: np.ndarray, row: int) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("row profiles are taken from a 2-D map")
    if not 0 <= row < image.shape[0]:
        raise ValueError(f"row {row} outside [0, {image.shape[0]})")
    return image[row].copy()


def paired_profiles(original: np.ndarray, upscaled_input: np.ndarray, activation: ActivationMap,
                    source_row: int, factor: float, band: int = 0):
    """Input and channel-mean activation rows for one row of the original matrix.

    ``source_row`` indexes the un-upscaled C x C matrix; the matching row of
    the upscaled input and activation map is the first output row that the
    nearest-neighbour mapping assigns to it. Returns
    ``(upscaled_row_index, input_row, activation_row)``.
    """
    c = original.shape[0]
    n_out = upscaled_input.shape[0]
    if not 0 <= source_row < c:
        raise ValueError(f"row {source_row} outside [0, {c})")
    idx = np.nonzero(nearest_index(n_out, c, factor) == source_row)[0]
    u = int(idx[0])
    return u, row_profile(upscaled_input[:, :, band], u), row_profile(activation.grayscale, u)


def export_features(params: dict, x: np.ndarray, y, config: ModelConfig, batch_size: int = 64):
    """Layer-11 (penultimate, post-ReLU) features for every sample, with labels."""
    feats = []
    for i in range(0, len(x), batch_size):
        _, cache = forward(params, x[i:i + batch_size], config, keep=True)
        feats.append(cache.acts[11])
    feats = np.concatenate(feats) if feats else np.zeros((0, config.dense_width))
    return feats, np.asarray(y)


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def write_features_csv(path, features: np.ndarray, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(features.shape[1])] + ["label"])
        for row, lab in zip(features, labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM, max-normalized (an all-zero or negative map writes black)."""
    image = np.asarray(image, dtype=np.float64)
    peak = image.max() if image.size else 0.0
    scaled = np.zeros(image.shape) if peak <= 0 else np.clip(image / peak, 0.0, 1.0)
    pixels = np.round(scaled * 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    blob = open(path, "rb").read()
    parts = blob.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][:w * h], dtype=np.uint8).reshape(h, w)


def write_matrix_csv(path, image: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(image):
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


def write_profile_csv(path, series: np.ndarray, name: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position", name])
        for i, v in enumerate(series):
            w.writerow([i, repr(float(v))])
