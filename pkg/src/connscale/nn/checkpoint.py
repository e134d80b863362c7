"""Model checkpoints.

Layout: one ASCII header line ``CONNCKPT <key=value ...>`` echoing the model
configuration, format version and creation seed; then every parameter as
little-endian float32 in :meth:`ModelConfig.param_shapes` order; then an ASCII
trailer line ``CRC32 <hex>`` over the payload bytes.
"""

from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np

from .model import ModelConfig, check_params

MAGIC = "CONNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict, config: ModelConfig, seed: int = 0) -> None:
    check_params(params, config)
    fields = {
        "version": VERSION,
        "kernel_size": config.kernel_size,
        "factor": repr(float(config.factor)),
        "mode": config.mode,
        "n_channels": config.n_channels,
        "n_bands": config.n_bands,
        "n_classes": config.n_classes,
        "widths": ",".join(str(w) for w in config.widths),
        "dense_width": config.dense_width,
        "seed": seed,
    }
    header = MAGIC + " " + " ".join(f"{k}={v}" for k, v in fields.items()) + "\n"
    payload = b"".join(np.ascontiguousarray(params[name], dtype="<f4").tobytes()
                       for name in config.param_shapes())
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)
        fh.write(f"CRC32 {zlib.crc32(payload):08x}\n".encode("ascii"))


def load_checkpoint(path, dtype=np.float32) -> tuple[dict, ModelConfig, int]:
    """Return ``(params, config, seed)``; raises :class:`CheckpointError` on corruption."""
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    tokens = blob[:nl].decode("ascii", errors="replace").split() if nl > 0 else []
    if not tokens or tokens[0] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    meta = dict(t.split("=", 1) for t in tokens[1:])
    if int(meta.get("version", -1)) != VERSION:
        raise CheckpointError(f"{path}: unsupported version {meta.get('version')}")
    config = ModelConfig(
        kernel_size=int(meta["kernel_size"]), factor=float(meta["factor"]), mode=meta["mode"],
        n_channels=int(meta["n_channels"]), n_bands=int(meta["n_bands"]),
        n_classes=int(meta["n_classes"]), widths=tuple(int(w) for w in meta["widths"].split(",")),
        dense_width=int(meta["dense_width"]))
    shapes = config.param_shapes()
    size = 4 * sum(int(np.prod(s)) for s in shapes.values())
    payload = blob[nl + 1:nl + 1 + size]
    trailer = blob[nl + 1 + size:].decode("ascii", errors="replace").split()
    if len(payload) != size or len(trailer) != 2 or trailer[0] != "CRC32":
        raise CheckpointError(f"{path}: truncated checkpoint")
    if int(trailer[1], 16) != zlib.crc32(payload):
        raise CheckpointError(f"{path}: checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f4")
    params, off = {}, 0
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        params[name] = flat[off:off + n].reshape(shape).astype(dtype)
        off += n
    return params, config, int(meta.get("seed", 0))
