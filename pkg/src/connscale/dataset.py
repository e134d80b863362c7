"""Overlapping segmentation and leak-free split plans.

Segments are fixed-length windows enumerated with a fixed step. Two segments
of the same trial overlap iff their starts differ by less than the window
length; no training segment may overlap the test or validation segment of
its trial.

Fold test positions sit on a quarter grid over segment indices: for fold
``f`` of ``n`` folds and ``m`` segments the test segment index is
``floor(f * (m - 1) / n + 1/2)``. For 60 s trials at 128 Hz that gives
starts of 0, 14.5, 28.5 and 43 s.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .connectivity import ElectrodeOrdering, build_connectivity, read_tensor, write_tensor
from .resample import UpscaleConfig
from .signal_io import BandStack, band_set_digest

WINDOW_S = 3.0
STEP_S = 0.5
ROLES = ("train", "validation", "test", "excluded")


@dataclass(frozen=True)
class TrialInfo:
    participant_id: int
    trial_id: int
    n_samples: int
    label: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.participant_id, self.trial_id)

    @classmethod
    def of(cls, session) -> "TrialInfo":
        return cls(session.participant_id, session.trial_id, session.n_samples, session.label)


@dataclass(frozen=True, order=True)
class SegmentIndex:
    participant_id: int
    trial_id: int
    start_sample: int
    window_samples: int = 384
    label: int = 0

    @property
    def key(self) -> tuple[int, int]:
        return (self.participant_id, self.trial_id)

    def overlaps(self, other: "SegmentIndex") -> bool:
        return self.key == other.key and abs(self.start_sample - other.start_sample) < self.window_samples


@dataclass
class SplitPlan:
    fold_id: int
    test: list[SegmentIndex]
    validation: list[SegmentIndex]
    train: list[SegmentIndex]
    excluded: list[SegmentIndex] = field(default_factory=list)
    seed: int = 0

    def role(self, name: str) -> list[SegmentIndex]:
        if name not in ROLES:
            raise ValueError(f"unknown role {name!r}")
        return getattr(self, name)

    def counts(self) -> dict[str, int]:
        return {r: len(self.role(r)) for r in ROLES}


def window_samples(sample_rate_hz: float, seconds: float = WINDOW_S) -> int:
    return int(round(seconds * sample_rate_hz))


def enumerate_segments(trial_len: int, window: int, step: int) -> list[int]:
    """Start offsets ``0, step, 2*step, ...`` of every window that fits the trial."""
    if step < 1:
        raise ValueError("step must be >= 1")
    if window < 1 or window > trial_len:
        raise ValueError(f"window {window} does not fit a trial of {trial_len} samples")
    return list(range(0, trial_len - window + 1, step))


def _trial_rng(seed: int, trial: TrialInfo, fold: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        [seed & 0xFFFFFFFFFFFFFFFF, trial.participant_id, trial.trial_id, fold]))


def _as_pick_map(picks, trials: Sequence[TrialInfo]) -> dict:
    if picks is None:
        return {}
    if isinstance(picks, Mapping):
        return dict(picks)
    picks = list(picks)
    if len(picks) != len(trials):
        raise ValueError(f"{len(picks)} picks for {len(trials)} trials")
    return {t.key: p for t, p in zip(trials, picks)}


def make_split(trials: Sequence[TrialInfo], test_pick, seed: int = 0, *, fold_id: int = 0,
               window: int = 384, step: int = 64, val_pick=None) -> SplitPlan:
    """Split every trial into one test, one validation and many training segments.

    ``test_pick`` (and the optional ``val_pick``) give per-trial start offsets,
    either as a mapping keyed by ``(participant, trial)`` or a sequence aligned
    with ``trials``. Without ``val_pick`` the validation segment is drawn
    uniformly from segments that do not overlap the test segment.
    """
    tests = _as_pick_map(test_pick, trials)
    vals = _as_pick_map(val_pick, trials)
    plan = SplitPlan(fold_id, [], [], [], [], seed)
    for trial in trials:
        starts = enumerate_segments(trial.n_samples, window, step)
        valid = set(starts)
        t0 = tests.get(trial.key)
        if t0 not in valid:
            raise ValueError(f"trial {trial.key}: test start {t0} is not an enumerated segment")
        if trial.key in vals:
            v0 = vals[trial.key]
            if v0 not in valid or abs(v0 - t0) < window:
                raise ValueError(f"trial {trial.key}: validation start {v0} invalid or overlapping test")
        else:
            candidates = [s for s in starts if abs(s - t0) >= window]
            if not candidates:
                raise ValueError(f"trial {trial.key}: no validation segment avoids the test segment")
            v0 = candidates[int(_trial_rng(seed, trial, fold_id).integers(len(candidates)))]

        def seg(s, _t=trial):
            return SegmentIndex(_t.participant_id, _t.trial_id, s, window, _t.label)

        plan.test.append(seg(t0))
        plan.validation.append(seg(v0))
        for s in starts:
            if s in (t0, v0):
                continue
            if abs(s - t0) < window or abs(s - v0) < window:
                plan.excluded.append(seg(s))
            else:
                plan.train.append(seg(s))
    return plan


def fold_test_starts(trial_len: int, n_folds: int, window: int, step: int,
                     distance_min: int | None = None) -> list[int]:
    """Quarter-grid test starts for one trial, checked against ``distance_min``."""
    if distance_min is None:
        distance_min = 2 * window
    if distance_min < window:
        raise ValueError("distance_min must be at least one window so fold test sets never overlap")
    starts = enumerate_segments(trial_len, window, step)
    m = len(starts)
    picks = [starts[(2 * f * (m - 1) + n_folds) // (2 * n_folds)] for f in range(n_folds)]
    for a, b in zip(picks, picks[1:]):
        if b - a < distance_min:
            raise ValueError(
                f"cannot place {n_folds} test segments {distance_min} samples apart in {trial_len} samples")
    return picks


def make_folds(trials: Sequence[TrialInfo], n_folds: int = 4, seed: int = 0, *, window: int = 384,
               step: int = 64, distance_min: int | None = None) -> list[SplitPlan]:
    """One :func:`make_split` per fold, each with its own quarter-grid test segment."""
    if n_folds < 1:
        raise ValueError("n_folds must be >= 1")
    grids = {t.key: fold_test_starts(t.n_samples, n_folds, window, step, distance_min) for t in trials}
    return [make_split(trials, {k: g[f] for k, g in grids.items()}, seed, fold_id=f,
                       window=window, step=step) for f in range(n_folds)]


def check_plan(plan: SplitPlan, trials: Sequence[TrialInfo] | None = None, step: int = 64) -> None:
    """Raise AssertionError if the plan leaks or, given ``trials``, loses segments."""
    held = {}
    for s in plan.test + plan.validation:
        held.setdefault(s.key, []).append(s)
    for t in plan.train:
        for s in held.get(t.key, ()):
            if t.overlaps(s):
                raise AssertionError(f"train segment {t} overlaps held-out {s}")
    all_segs = plan.train + plan.excluded + plan.test + plan.validation
    if len(set(all_segs)) != len(all_segs):
        raise AssertionError("roles are not disjoint")
    if trials is None or not plan.test:
        return
    window = plan.test[0].window_samples
    per_trial: dict = {}
    for s in all_segs:
        per_trial[s.key] = per_trial.get(s.key, 0) + 1
    for t in trials:
        expected = len(enumerate_segments(t.n_samples, window, step))
        if per_trial.get(t.key, 0) != expected:
            raise AssertionError(f"trial {t.key}: count identity violated")


# ---------------------------------------------------------------------------
# plan files
# ---------------------------------------------------------------------------

def write_plans(path, plans: Iterable[SplitPlan]) -> None:
    """Write ``fold role participant trial start label`` records, one per line."""
    plans = list(plans)
    window = plans[0].test[0].window_samples if plans and plans[0].test else 384
    lines = [f"# window={window} seed={plans[0].seed if plans else 0}"]
    for plan in plans:
        for role in ROLES:
            for s in plan.role(role):
                lines.append(f"{plan.fold_id} {role} {s.participant_id} {s.trial_id} {s.start_sample} {s.label}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_plans(path) -> list[SplitPlan]:
    window, seed = 384, 0
    plans: dict[int, SplitPlan] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                k, _, v = tok.partition("=")
                if k == "window":
                    window = int(v)
                elif k == "seed":
                    seed = int(v)
            continue
        parts = line.split()
        if len(parts) != 6 or parts[1] not in ROLES:
            raise ValueError(f"{path}:{lineno}: malformed plan record")
        fold, role = int(parts[0]), parts[1]
        p, t, start, label = (int(x) for x in parts[2:])
        plan = plans.setdefault(fold, SplitPlan(fold, [], [], [], [], seed))
        plan.role(role).append(SegmentIndex(p, t, start, window, label))
    return [plans[k] for k in sorted(plans)]


# ---------------------------------------------------------------------------
# materialization
# ---------------------------------------------------------------------------

def cache_key(seg: SegmentIndex, ordering_id: str, bands_digest: str, upscale: UpscaleConfig) -> str:
    text = (f"{seg.participant_id}|{seg.trial_id}|{seg.start_sample}|{seg.window_samples}|"
            f"{ordering_id}|{bands_digest}|{upscale.factor!r}|{upscale.mode}")
    return hashlib.sha256(text.encode()).hexdigest()


def segment_tensor(seg: SegmentIndex, stack: BandStack, ordering: ElectrodeOrdering | None,
                   upscale: UpscaleConfig, dtype=np.float32) -> np.ndarray:
    """Connectivity over one segment, upscaled, as an H x W x B array."""
    tensor = build_connectivity(stack, seg.start_sample, seg.window_samples, ordering)
    return upscale.apply(tensor.data).astype(dtype)


def _stack_for(seg: SegmentIndex, stacks: Mapping[tuple[int, int], BandStack]) -> BandStack:
    try:
        return stacks[seg.key]
    except KeyError:
        raise KeyError(f"no session loaded for participant {seg.participant_id}, trial {seg.trial_id}") from None


def connectivity_batch(segments: Sequence[SegmentIndex], stacks: Mapping[tuple[int, int], BandStack],
                       ordering: ElectrodeOrdering | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Un-upscaled float64 tensors ``n x C x C x B`` and labels for ``segments``."""
    xs = [build_connectivity(_stack_for(s, stacks), s.start_sample, s.window_samples, ordering).data
          for s in segments]
    labels = np.asarray([s.label for s in segments], dtype=np.int64)
    if not xs:
        return np.zeros((0, 0, 0, 0)), labels
    return np.stack(xs), labels


def upscale_batch(base: np.ndarray, upscale: UpscaleConfig, dtype=np.float32) -> np.ndarray:
    """Apply ``upscale`` to every tensor of a batch from :func:`connectivity_batch`."""
    if len(base) == 0:
        return np.zeros((0, 0, 0, 0), dtype=dtype)
    return np.stack([upscale.apply(t).astype(dtype) for t in base])


def materialize(segments: Sequence[SegmentIndex], stacks: Mapping[tuple[int, int], BandStack],
                upscale: UpscaleConfig, ordering: ElectrodeOrdering | None = None,
                cache_dir=None, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``(tensor, label)`` pairs for ``segments`` into ``(X, y)``.

    ``X`` has shape ``n x H x W x B``. With ``cache_dir`` each tensor is read
    from (or written to) a checksummed CONNT1 file named by its key digest;
    unreadable or corrupt cache entries are recomputed. Cached tensors are
    float32, so caching requires ``dtype=float32``.
    """
    if not segments:
        return np.zeros((0, 0, 0, 0), dtype=dtype), np.zeros(0, dtype=np.int64)
    if cache_dir is not None:
        if np.dtype(dtype) != np.float32:
            raise ValueError("the tensor cache stores float32 only")
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
    xs, ys = [], []
    for seg in segments:
        stack = _stack_for(seg, stacks)
        order = ordering if ordering is not None else ElectrodeOrdering.identity(stack.channel_labels)
        if cache_dir is None:
            x = segment_tensor(seg, stack, order, upscale, dtype)
        else:
            path = cache_dir / (cache_key(seg, order.ordering_id, band_set_digest(stack.bands), upscale) + ".connt")
            x = None
            if path.exists():
                try:
                    x = read_tensor(path)
                except ValueError:
                    x = None
            if x is None:
                x = segment_tensor(seg, stack, order, upscale, np.float32)
                tmp = path.with_suffix(f".tmp{id(x)}")
                write_tensor(tmp, x, checksum=True)
                tmp.replace(path)
        xs.append(x)
        ys.append(seg.label)
    return np.stack(xs), np.asarray(ys, dtype=np.int64)
