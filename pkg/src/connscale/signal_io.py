"""Recording I/O, synthetic recordings and sub-band decomposition.

Two on-disk recording formats are supported:

``raw_f32``
    One ASCII header line ``CONN1 <C> <S> <rate_hz> <participant> <trial> <label>``
    followed by ``C*S`` little-endian float32 values, channel-major. Channel
    labels live in an optional sidecar ``<path>.channels`` (one label per line).

``csv``
    First row holds the channel labels, every following row one sample across
    channels. Metadata (``participant``, ``trial``, ``label``, ``sample_rate_hz``)
    sits in a sidecar ``<path>.meta`` of ``key=value`` lines.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal

FILTER_ORDER = 4
RAW_MAGIC = "CONN1"


class RecordingFormatError(ValueError):
    """A recording file does not parse under its declared format."""


class FilterError(ValueError):
    """A band cannot be applied to the given signal."""


@dataclass(frozen=True)
class BandDefinition:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if self.low_hz < 0:
            raise ValueError(f"band {self.name!r}: low edge must be >= 0, got {self.low_hz}")
        if not self.high_hz > self.low_hz:
            raise ValueError(f"band {self.name!r}: high edge {self.high_hz} must exceed low edge {self.low_hz}")


DEFAULT_BANDS: tuple[BandDefinition, ...] = (
    BandDefinition("delta", 0.0, 3.0),
    BandDefinition("theta", 4.0, 7.0),
    BandDefinition("low_alpha", 8.0, 9.5),
    BandDefinition("high_alpha", 10.5, 12.0),
    BandDefinition("alpha", 8.0, 12.0),
    BandDefinition("low_beta", 13.0, 16.0),
    BandDefinition("mid_beta", 17.0, 20.0),
    BandDefinition("high_beta", 21.0, 29.0),
    BandDefinition("beta", 13.0, 29.0),
    BandDefinition("gamma", 30.0, 50.0),
)


def _default_labels(n: int) -> list[str]:
    return [f"ch{i:02d}" for i in range(n)]


@dataclass
class RecordingSession:
    """One participant-trial multichannel EEG record (channels x samples)."""

    participant_id: int
    trial_id: int
    label: int
    data: np.ndarray
    sample_rate_hz: float = 128.0
    channel_labels: list[str] = field(default_factory=list)
    n_classes: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] < 1:
            raise ValueError(f"data must be a channels x samples matrix, got shape {data.shape}")
        self.data = data
        if not self.channel_labels:
            self.channel_labels = _default_labels(data.shape[0])
        self.channel_labels = list(self.channel_labels)
        if len(self.channel_labels) != data.shape[0]:
            raise ValueError(f"{len(self.channel_labels)} channel labels for {data.shape[0]} channels")
        if len(set(self.channel_labels)) != len(self.channel_labels):
            raise ValueError("channel labels must be unique")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.label < 0 or (self.n_classes is not None and self.label >= self.n_classes):
            raise ValueError(f"label {self.label} outside [0, {self.n_classes})")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def key(self) -> tuple[int, int]:
        return (self.participant_id, self.trial_id)


@dataclass
class BandStack:
    """Band-filtered copies of one session, shaped bands x channels x samples."""

    session_ref: tuple[int, int]
    bands: list[BandDefinition]
    data: np.ndarray
    channel_labels: list[str]
    sample_rate_hz: float
    label: int

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != len(self.bands):
            raise ValueError(f"stack shape {self.data.shape} does not match {len(self.bands)} bands")


@dataclass(frozen=True)
class SyntheticSpec:
    n_participants: int = 4
    n_trials_per_participant: int = 32
    n_classes: int = 8
    duration_s: float = 20.0
    sample_rate_hz: float = 128.0
    n_channels: int = 8
    coupling_strength: float = 0.8
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_participants", "n_trials_per_participant", "n_classes", "n_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_channels < 2:
            raise ValueError("at least two channels are needed to plant a coupled pair")
        if self.n_trials_per_participant % self.n_classes:
            raise ValueError("n_trials_per_participant must be divisible by n_classes")
        if not self.duration_s > 0 or not self.sample_rate_hz > 0:
            raise ValueError("duration and sample rate must be positive")
        if not 0.0 <= self.coupling_strength <= 1.0:
            raise ValueError("coupling_strength must lie in [0, 1]")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _read_sidecar_labels(path: Path, n_channels: int) -> list[str]:
    side = path.with_name(path.name + ".channels")
    if not side.exists():
        return _default_labels(n_channels)
    labels = [ln.strip() for ln in side.read_text().splitlines() if ln.strip()]
    if len(labels) != n_channels:
        raise RecordingFormatError(f"{side}: {len(labels)} labels for {n_channels} channels")
    return labels


def _load_raw(path: Path) -> RecordingSession:
    blob = path.read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise RecordingFormatError(f"{path}: missing header line")
    tokens = blob[:nl].decode("ascii", errors="replace").split()
    if len(tokens) != 7 or tokens[0] != RAW_MAGIC:
        raise RecordingFormatError(f"{path}: malformed header {blob[:nl]!r}")
    try:
        n_ch, n_s = int(tokens[1]), int(tokens[2])
        rate = float(tokens[3])
        participant, trial, label = (int(t) for t in tokens[4:7])
    except ValueError as exc:
        raise RecordingFormatError(f"{path}: malformed header field ({exc})") from None
    if n_ch < 1 or n_s < 1:
        raise RecordingFormatError(f"{path}: header declares {n_ch} channels x {n_s} samples")
    payload = blob[nl + 1:]
    expected = 4 * n_ch * n_s
    if len(payload) != expected:
        raise RecordingFormatError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected} ({n_ch}x{n_s} float32)")
    values = np.frombuffer(payload, dtype="<f4").reshape(n_ch, n_s)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        c, s = bad[0]
        raise RecordingFormatError(f"{path}: non-finite value at channel {c}, sample {s}")
    return RecordingSession(participant, trial, label, values.astype(np.float64), rate,
                            _read_sidecar_labels(path, n_ch))


def _read_meta(path: Path) -> dict[str, str]:
    side = path.with_name(path.name + ".meta")
    if not side.exists():
        raise RecordingFormatError(f"{path}: missing metadata sidecar {side.name}")
    meta = {}
    for lineno, line in enumerate(side.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise RecordingFormatError(f"{side}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        meta[k.strip()] = v.strip()
    return meta


def _load_csv(path: Path) -> RecordingSession:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RecordingFormatError(f"{path}: empty file")
    labels = [c.strip() for c in rows[0]]
    n_ch = len(labels)
    samples = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != n_ch:
            raise RecordingFormatError(
                f"{path}:{lineno}: ragged channel rows ({len(row)} values, {n_ch} channels)")
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise RecordingFormatError(f"{path}:{lineno}: {exc}") from None
        for col, v in enumerate(vals):
            if not math.isfinite(v):
                raise RecordingFormatError(f"{path}:{lineno}: non-finite value in channel {labels[col]}")
        samples.append(vals)
    if not samples:
        raise RecordingFormatError(f"{path}: no samples")
    meta = _read_meta(path)
    try:
        return RecordingSession(int(meta["participant"]), int(meta["trial"]), int(meta["label"]),
                                np.array(samples, dtype=np.float64).T,
                                float(meta.get("sample_rate_hz", 128.0)), labels)
    except KeyError as exc:
        raise RecordingFormatError(f"{path}: metadata lacks {exc.args[0]!r}") from None


def load_recording(path, format: str = "raw_f32") -> RecordingSession:
    """Read one session from ``path``; raises :class:`RecordingFormatError` on bad input."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format == "raw_f32":
        return _load_raw(path)
    if format == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown recording format {format!r}")


def write_recording(session: RecordingSession, path, format: str = "raw_f32") -> None:
    """Write ``session`` in the given format, including its sidecar file.

    ``raw_f32`` stores float32, so data that is not float32-representable is rounded.
    """
    path = Path(path)
    if format == "raw_f32":
        header = (f"{RAW_MAGIC} {session.n_channels} {session.n_samples} {session.sample_rate_hz!r} "
                  f"{session.participant_id} {session.trial_id} {session.label}\n")
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(session.data.astype("<f4").tobytes())
        path.with_name(path.name + ".channels").write_text("\n".join(session.channel_labels) + "\n")
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(session.channel_labels)
            for row in session.data.T:
                w.writerow([repr(float(v)) for v in row])
        path.with_name(path.name + ".meta").write_text(
            f"participant={session.participant_id}\ntrial={session.trial_id}\n"
            f"label={session.label}\nsample_rate_hz={session.sample_rate_hz!r}\n")
    else:
        raise ValueError(f"unknown recording format {format!r}")


def load_band_file(path) -> list[BandDefinition]:
    """Parse a band override file: one ``name low high`` triple per line."""
    bands = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'name low high'")
        try:
            bands.append(BandDefinition(parts[0], float(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not bands:
        raise ValueError(f"{path}: no bands defined")
    return bands


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def class_patterns(spec: SyntheticSpec) -> list[list[tuple[int, int, float]]]:
    """Planted (channel_i, channel_k, frequency_hz) triples for every class.

    Each class couples ``max(1, C // 4)`` disjoint channel pairs; patterns are
    drawn from ``spec.seed`` and are distinct between classes whenever the
    channel count allows it.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5EED]))
    n_pairs = max(1, spec.n_channels // 4)
    f_hi = min(45.0, 0.4 * spec.sample_rate_hz)
    patterns, seen = [], set()
    for _ in range(spec.n_classes):
        for _attempt in range(100):
            perm = rng.permutation(spec.n_channels)
            pairs = tuple(sorted(tuple(sorted((int(perm[2 * j]), int(perm[2 * j + 1]))))
                                 for j in range(n_pairs)))
            if pairs not in seen:
                break
        seen.add(pairs)
        freqs = rng.uniform(4.0, f_hi, size=n_pairs)
        patterns.append([(i, k, float(f)) for (i, k), f in zip(pairs, freqs)])
    return patterns


def generate_synthetic(spec: SyntheticSpec) -> list[RecordingSession]:
    """Recordings whose planted channel couplings make PCC matrices class-separable.

    Every planted pair shares a unit-RMS sinusoid (random phase per trial)
    mixed as ``sqrt(c) * latent + sqrt(1 - c) * sigma * noise``; all other
    channels carry independent white noise of scale ``sigma``.
    """
    patterns = class_patterns(spec)
    n = spec.n_samples
    t = np.arange(n) / spec.sample_rate_hz
    c = spec.coupling_strength
    sessions = []
    for p in range(spec.n_participants):
        for trial in range(spec.n_trials_per_participant):
            label = trial % spec.n_classes
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, p, trial]))
            data = spec.noise_sigma * rng.standard_normal((spec.n_channels, n))
            for i, k, freq in patterns[label]:
                phase = rng.uniform(0.0, 2.0 * np.pi)
                latent = math.sqrt(2.0) * np.sin(2.0 * np.pi * freq * t + phase)
                for ch in (i, k):
                    data[ch] = math.sqrt(c) * latent + math.sqrt(1.0 - c) * data[ch]
            sessions.append(RecordingSession(p, trial, label, data, spec.sample_rate_hz,
                                             n_classes=spec.n_classes))
    return sessions


# ---------------------------------------------------------------------------
# filtering
# ---------------------------------------------------------------------------

def _check_band(band: BandDefinition, rate: float) -> float:
    nyq = rate / 2.0
    if band.high_hz > nyq:
        raise FilterError(f"band {band.name!r} ({band.low_hz}-{band.high_hz} Hz) exceeds Nyquist {nyq} Hz")
    return nyq


@functools.lru_cache(maxsize=256)
def _design(low: float, high: float, rate: float):
    nyq = rate / 2.0
    if low <= 0 and high >= nyq:
        return None
    if low <= 0:
        return signal.butter(FILTER_ORDER, high / nyq, btype="lowpass", output="sos")
    if high >= nyq:
        return signal.butter(FILTER_ORDER, low / nyq, btype="highpass", output="sos")
    return signal.butter(FILTER_ORDER, [low / nyq, high / nyq], btype="bandpass", output="sos")


@functools.lru_cache(maxsize=256)
def _warmup(low: float, high: float, rate: float) -> int:
    sos = _design(low, high, rate)
    if sos is None:
        return 0
    n = int(60 * rate)
    impulse = np.zeros(n)
    impulse[0] = 1.0
    energy = np.cumsum(signal.sosfilt(sos, impulse) ** 2)
    # samples until all but 1e-8 of the impulse-response energy has passed
    return int(np.searchsorted(energy, energy[-1] * (1.0 - 1e-8))) + 1


def warmup_length(band: BandDefinition, sample_rate_hz: float) -> int:
    """Reflect-padding length used on each side; also the minimum usable signal length."""
    _check_band(band, sample_rate_hz)
    return _warmup(float(band.low_hz), float(band.high_hz), float(sample_rate_hz))


def bandpass(x, band: BandDefinition, sample_rate_hz: float) -> np.ndarray:
    """Zero-phase Butterworth filtering of ``x`` along its last axis.

    A 4th-order section cascade is run forward and backward after reflect
    padding by :func:`warmup_length` samples on both ends; ``low_hz == 0``
    gives a low-pass and a band spanning ``[0, nyquist]`` passes the input.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_band(band, sample_rate_hz)
    sos = _design(float(band.low_hz), float(band.high_hz), float(sample_rate_hz))
    if sos is None:
        return x.copy()
    pad = warmup_length(band, sample_rate_hz)
    n = x.shape[-1]
    if n <= pad:
        raise FilterError(f"band {band.name!r} needs at least {pad + 1} samples, got {n}")
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, pad)]
    xp = np.pad(x, widths, mode="reflect")
    y = signal.sosfiltfilt(sos, xp, axis=-1, padtype=None)
    return np.ascontiguousarray(y[..., pad:pad + n])


def decompose_bands(session: RecordingSession,
                    bands: Sequence[BandDefinition] | None = None) -> BandStack:
    """Filter every channel of ``session`` into each band, in list order."""
    bands = list(DEFAULT_BANDS if bands is None else bands)
    out = np.empty((len(bands), session.n_channels, session.n_samples))
    for b, band in enumerate(bands):
        out[b] = bandpass(session.data, band, session.sample_rate_hz)
    return BandStack(session.key, bands, out, list(session.channel_labels),
                     session.sample_rate_hz, session.label)


def band_set_digest(bands: Iterable[BandDefinition]) -> str:
    """Stable text identity of a band list (used in cache keys)."""
    return ";".join(f"{b.name}:{b.low_hz!r}:{b.high_hz!r}" for b in bands)
