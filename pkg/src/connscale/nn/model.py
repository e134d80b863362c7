"""The upscaled-connectivity CNN: six 'same' convolutions, three poolings, two dense layers.

Layers are numbered 1 to 12. Layer 1 is the fixed upsampling (applied during
dataset materialization); 2/3, 5/6 and 8/9 are ReLU convolutions, 4/7/10 are
2x2 max-pools, 11 is a ReLU dense layer and 12 produces the class logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..resample import SUPPORTED_FACTORS, UpscaleConfig, output_size
from . import layers as L

CONV_LAYERS = (2, 3, 5, 6, 8, 9)
POOL_LAYERS = (4, 7, 10)
DENSE_LAYERS = (11, 12)
DEFAULT_WIDTHS = (32, 64, 128, 256, 256, 256)


@dataclass(frozen=True)
class ModelConfig:
    kernel_size: int = 3
    factor: float = 1.0
    mode: str = "nearest"
    n_channels: int = 32
    n_bands: int = 10
    n_classes: int = 40
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    dense_width: int = 256

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.kernel_size}")
        if len(self.widths) != len(CONV_LAYERS):
            raise ValueError("need one width per convolution layer")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        UpscaleConfig(self.factor, self.mode)
        side = self.input_size
        for _ in POOL_LAYERS:
            side //= 2
            if side < 1:
                raise ValueError(f"input side {self.input_size} is too small for three 2x2 poolings")

    @property
    def upscale(self) -> UpscaleConfig:
        return UpscaleConfig(self.factor, self.mode)

    @property
    def input_size(self) -> int:
        return output_size(self.n_channels, self.factor)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.input_size, self.input_size, self.n_bands)

    def layer_shapes(self) -> dict[int, tuple[int, ...]]:
        """Per-sample output shape of layers 1-12."""
        s = self.input_size
        w = self.widths
        shapes = {1: (s, s, self.n_bands), 2: (s, s, w[0]), 3: (s, s, w[1])}
        s //= 2
        shapes.update({4: (s, s, w[1]), 5: (s, s, w[2]), 6: (s, s, w[3])})
        s //= 2
        shapes.update({7: (s, s, w[3]), 8: (s, s, w[4]), 9: (s, s, w[5])})
        s //= 2
        shapes.update({10: (s, s, w[5]), 11: (self.dense_width,), 12: (self.n_classes,)})
        return shapes

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        c_in = self.n_bands
        k = self.kernel_size
        for layer, c_out in zip(CONV_LAYERS, self.widths):
            shapes[f"conv{layer}.w"] = (k, k, c_in, c_out)
            shapes[f"conv{layer}.b"] = (c_out,)
            c_in = c_out
        flat = int(np.prod(self.layer_shapes()[10]))
        shapes["dense11.w"] = (flat, self.dense_width)
        shapes["dense11.b"] = (self.dense_width,)
        shapes["dense12.w"] = (self.dense_width, self.n_classes)
        shapes["dense12.b"] = (self.n_classes,)
        return shapes

    @classmethod
    def grid(cls, **kw):
        """Every (factor, kernel) pair of the sweep, holding the other fields fixed."""
        return [cls(kernel_size=k, factor=r, **kw) for r in SUPPORTED_FACTORS for k in (3, 5, 7)]


LOGIT_INIT_GAIN = 0.1


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """He-normal weights (std ``sqrt(2 / fan_in)``) and zero biases.

    The logit layer has no ReLU behind it and is drawn with std
    ``LOGIT_INIT_GAIN * sqrt(1 / fan_in)`` so the untrained model starts close
    to uniform class probabilities.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[:-1]))
        std = LOGIT_INIT_GAIN * np.sqrt(1.0 / fan_in) if name == "dense12.w" else np.sqrt(2.0 / fan_in)
        params[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return params


def check_params(params: dict, config: ModelConfig) -> None:
    for name, shape in config.param_shapes().items():
        if name not in params:
            raise ValueError(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ValueError(f"{name} has shape {params[name].shape}, config implies {shape}")


@dataclass
class ForwardCache:
    acts: dict[int, np.ndarray] = field(default_factory=dict)
    caches: dict[int, object] = field(default_factory=dict)
    logits: np.ndarray | None = None


def forward(params: dict, x: np.ndarray, config: ModelConfig, keep: bool = False):
    """Logits for a batch ``x`` of shape ``n x 32r x 32r x B``.

    With ``keep=True`` also returns a :class:`ForwardCache` holding every
    layer's output (``cache.acts[layer]``) for backward passes and diagnostics.
    """
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != config.input_shape:
        raise ValueError(f"batch shape {x.shape[1:]} does not match model input {config.input_shape}")
    dtype = params["conv2.w"].dtype
    h = x.astype(dtype, copy=False)
    cache = ForwardCache()
    cache.acts[1] = h
    for layer in range(2, 13):
        if layer in CONV_LAYERS:
            z, c = L.conv2d_forward(h, params[f"conv{layer}.w"], params[f"conv{layer}.b"])
            h = L.relu(z)
        elif layer in POOL_LAYERS:
            h, c = L.maxpool2x2_forward(h)
        elif layer == 11:
            flat = h.reshape(h.shape[0], -1)
            h = L.relu(L.dense(flat, params["dense11.w"], params["dense11.b"]))
            c = flat
        else:
            c = h
            h = L.dense(h, params["dense12.w"], params["dense12.b"])
        if not np.all(np.isfinite(h)):
            raise L.NumericFault(f"non-finite activation at layer {layer}")
        if keep:
            cache.acts[layer] = h
            cache.caches[layer] = c
    cache.logits = h
    return (h, cache) if keep else h


def backward(params: dict, cache: ForwardCache, dlogits: np.ndarray, stop_at: int = 2):
    """Parameter gradients given d(objective)/d(logits).

    Also returns the gradients with respect to each layer's output,
    ``dacts[layer]``, down to layer ``stop_at``. Gradients of parameters in
    layers below ``stop_at`` are not computed.
    """
    grads: dict[str, np.ndarray] = {}
    dacts: dict[int, np.ndarray] = {12: dlogits}
    d = dlogits
    for layer in range(12, stop_at - 1, -1):
        c = cache.caches[layer]
        out = cache.acts[layer]
        if layer == 12:
            d, grads["dense12.w"], grads["dense12.b"] = L.dense_backward(d, c, params["dense12.w"])
        elif layer == 11:
            d = L.relu_backward(d, out)
            d, grads["dense11.w"], grads["dense11.b"] = L.dense_backward(d, c, params["dense11.w"])
            d = d.reshape(cache.acts[10].shape)
        elif layer in POOL_LAYERS:
            d = L.maxpool2x2_backward(d, c)
        else:
            d = L.relu_backward(d, out)
            d, grads[f"conv{layer}.w"], grads[f"conv{layer}.b"] = L.conv2d_backward(
                d, c, need_dx=layer > stop_at)
        if layer - 1 >= stop_at:
            dacts[layer - 1] = d
    return grads, dacts


def loss_and_grads(params: dict, x: np.ndarray, labels, config: ModelConfig):
    """Mean cross-entropy over the batch and its exact parameter gradients."""
    logits, cache = forward(params, x, config, keep=True)
    loss, _, dlogits = L.softmax_cross_entropy(logits, labels)
    if not np.isfinite(loss):
        raise L.NumericFault("non-finite loss")
    grads, _ = backward(params, cache, dlogits)
    return loss, grads


def predict(params: dict, x: np.ndarray, config: ModelConfig, batch_size: int = 64) -> np.ndarray:
    """Logits for ``x`` evaluated in fixed-size batches."""
    out = [forward(params, x[i:i + batch_size], config) for i in range(0, len(x), batch_size)]
    if not out:
        return np.zeros((0, config.n_classes))
    return np.concatenate(out)
