"""Pearson-correlation connectivity tensors with electrode reordering.

Tensors are stored channels x channels x bands. The on-disk layout
(``CONNT1``) is band-major then row-major float32 after an ASCII header
``CONNT1 <C> <B>``; an optional ``crc32=<hex>`` token guards cache files.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .signal_io import BandStack

TENSOR_MAGIC = "CONNT1"

# Channel order of the preprocessed DEAP files.
DEAP_CHANNELS = (
    "Fp1", "AF3", "F3", "F7", "FC5", "FC1", "C3", "T7", "CP5", "CP1", "P3", "P7", "PO3", "O1",
    "Oz", "Pz", "Fp2", "AF4", "Fz", "F4", "F8", "FC6", "FC2", "Cz", "C4", "T8", "CP6", "CP2",
    "P4", "P8", "PO4", "O2",
)
# Approximate distance-restricted arrangement: left hemisphere front-to-back,
# midline, right hemisphere front-to-back.
DISTANCE_RESTRICTED_32 = (
    "Fp1", "AF3", "F7", "F3", "FC5", "FC1", "T7", "C3", "CP5", "CP1", "P7", "P3", "PO3", "O1",
    "Fz", "Cz", "Pz", "Oz",
    "Fp2", "AF4", "F8", "F4", "FC6", "FC2", "T8", "C4", "CP6", "CP2", "P8", "P4", "PO4", "O2",
)


@dataclass(frozen=True)
class ElectrodeOrdering:
    """Ordered channel labels; row/column ``i`` of a tensor is ``order[i]``."""

    order: tuple[str, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        if len(set(self.order)) != len(self.order):
            raise ValueError("ordering repeats a channel label")

    def __len__(self):
        return len(self.order)

    @property
    def ordering_id(self) -> str:
        return f"{self.name}:{zlib.crc32(','.join(self.order).encode()):08x}"

    def indices_in(self, labels: Sequence[str]) -> np.ndarray:
        """Positions of ``order`` within ``labels``; raises on label-set mismatch."""
        if set(labels) != set(self.order) or len(labels) != len(self.order):
            missing = sorted(set(labels) ^ set(self.order))
            raise ValueError(f"ordering and channel set differ: {missing}")
        pos = {lab: i for i, lab in enumerate(labels)}
        return np.array([pos[lab] for lab in self.order], dtype=np.intp)

    @classmethod
    def identity(cls, labels: Sequence[str]) -> "ElectrodeOrdering":
        return cls(tuple(labels), "identity")

    @classmethod
    def default_for(cls, labels: Sequence[str]) -> "ElectrodeOrdering":
        """Distance-restricted order for DEAP's 32 labels, identity for anything else."""
        if set(labels) == set(DISTANCE_RESTRICTED_32) and len(labels) == 32:
            return cls(DISTANCE_RESTRICTED_32, "distance_restricted")
        return cls.identity(labels)

    @classmethod
    def from_file(cls, path) -> "ElectrodeOrdering":
        labels = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        return cls(tuple(labels), Path(path).stem)


@dataclass
class ConnectivityTensor:
    data: np.ndarray  # C x C x B
    ordering: ElectrodeOrdering
    segment: object = None
    n_flat: int = 0  # channel-band slices with zero variance in the window

    @property
    def ordering_id(self) -> str:
        return self.ordering.ordering_id

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_bands(self) -> int:
        return self.data.shape[2]


def pearson(x, y) -> float:
    """Correlation with population (1/T) statistics; 0.0 when either series is flat."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"series must be 1-D of equal length, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(np.dot(xc, xc))
    vy = float(np.dot(yc, yc))
    if vx == 0.0 or vy == 0.0:
        return 0.0
    r = float(np.dot(xc, yc)) / np.sqrt(vx * vy)
    return min(1.0, max(-1.0, r))


def correlation_matrix(windowed: np.ndarray) -> tuple[np.ndarray, int]:
    """PCC matrix of a channels x T block plus the number of flat channels.

    The upper triangle is computed once and mirrored, and the diagonal is set
    to exactly 1 (0 for flat channels), so the result is exactly symmetric.
    """
    xc = windowed - windowed.mean(axis=1, keepdims=True)
    var = np.einsum("ct,ct->c", xc, xc)
    flat = var == 0.0
    cov = xc @ xc.T
    denom = np.sqrt(np.outer(var, var))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), 0.0)
    np.clip(r, -1.0, 1.0, out=r)
    upper = np.triu(r, 1)
    out = upper + upper.T
    np.fill_diagonal(out, np.where(flat, 0.0, 1.0))
    return out, int(flat.sum())


def build_connectivity(stack: BandStack, start: int, length: int,
                       ordering: ElectrodeOrdering | None = None) -> ConnectivityTensor:
    """Per-band PCC over samples ``[start, start + length)`` in ordering order."""
    n = stack.data.shape[2]
    if start < 0 or length < 2 or start + length > n:
        raise ValueError(f"window [{start}, {start + length}) outside [0, {n})")
    if ordering is None:
        ordering = ElectrodeOrdering.identity(stack.channel_labels)
    idx = ordering.indices_in(stack.channel_labels)
    window = stack.data[:, idx, start:start + length]
    c = len(idx)
    out = np.empty((c, c, window.shape[0]))
    n_flat = 0
    for b in range(window.shape[0]):
        out[:, :, b], flat = correlation_matrix(window[b])
        n_flat += flat
    return ConnectivityTensor(out, ordering, (stack.session_ref, start, length), n_flat)


def reorder(tensor: ConnectivityTensor, new: ElectrodeOrdering) -> ConnectivityTensor:
    """Permute rows and columns together into ``new`` order."""
    p = new.indices_in(tensor.ordering.order)
    data = tensor.data[p][:, p]
    return ConnectivityTensor(data, new, tensor.segment, tensor.n_flat)


def write_tensor(path, data: np.ndarray, checksum: bool = False) -> None:
    """Write a C x C x B array in CONNT1 layout."""
    c, c2, b = data.shape
    if c != c2:
        raise ValueError(f"tensor must be square per band, got {data.shape}")
    payload = np.ascontiguousarray(np.transpose(data, (2, 0, 1)), dtype="<f4").tobytes()
    header = f"{TENSOR_MAGIC} {c} {b}"
    if checksum:
        header += f" crc32={zlib.crc32(payload):08x}"
    with open(path, "wb") as fh:
        fh.write((header + "\n").encode("ascii"))
        fh.write(payload)


def read_tensor(path) -> np.ndarray:
    """Read a CONNT1 file as a float32 C x C x B array; raises ValueError if corrupt."""
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    tokens = blob[:nl].decode("ascii", errors="replace").split() if nl > 0 else []
    if len(tokens) not in (3, 4) or tokens[0] != TENSOR_MAGIC:
        raise ValueError(f"{path}: not a {TENSOR_MAGIC} file")
    c, b = int(tokens[1]), int(tokens[2])
    payload = blob[nl + 1:]
    if len(payload) != 4 * c * c * b:
        raise ValueError(f"{path}: payload size mismatch")
    if len(tokens) == 4:
        if not tokens[3].startswith("crc32=") or int(tokens[3][6:], 16) != zlib.crc32(payload):
            raise ValueError(f"{path}: checksum mismatch")
    arr = np.frombuffer(payload, dtype="<f4").reshape(b, c, c)
    return np.ascontiguousarray(np.transpose(arr, (1, 2, 0)))
