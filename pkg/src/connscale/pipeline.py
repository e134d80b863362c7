"""End-to-end helpers: sessions to fold tensors, single runs and the factor x kernel x mode sweep."""

from __future__ import annotations

import concurrent.futures as cf
import csv
import io
import logging
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .connectivity import ElectrodeOrdering
from .dataset import (SplitPlan, TrialInfo, connectivity_batch, make_folds, materialize,
                      upscale_batch, window_samples)
from .nn import ModelConfig, TrainConfig, TrainingDiverged, evaluate, train
from .resample import MODES, SUPPORTED_FACTORS, UpscaleConfig
from .signal_io import BandDefinition, BandStack, RecordingSession, decompose_bands, load_recording

log = logging.getLogger(__name__)

RECORDING_SUFFIX = {"raw_f32": ".conn", "csv": ".csv"}


def load_directory(directory, format: str = "raw_f32", n_classes: int | None = None
                   ) -> list[RecordingSession]:
    """Every recording in ``directory`` with the format's suffix, sorted by (participant, trial)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"data directory {directory} does not exist")
    sessions = [load_recording(p, format) for p in sorted(directory.glob("*" + RECORDING_SUFFIX[format]))]
    if not sessions:
        raise FileNotFoundError(f"no {format} recordings in {directory}")
    if n_classes is not None:
        for s in sessions:
            if s.label >= n_classes:
                raise ValueError(f"session {s.key} has label {s.label} >= {n_classes} classes")
    keys = [s.key for s in sessions]
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate (participant, trial) in data directory")
    return sorted(sessions, key=lambda s: s.key)


def recording_name(session: RecordingSession, format: str = "raw_f32") -> str:
    return f"p{session.participant_id:03d}_t{session.trial_id:03d}{RECORDING_SUFFIX[format]}"


def build_stacks(sessions: Sequence[RecordingSession],
                 bands: Sequence[BandDefinition] | None = None) -> dict[tuple[int, int], BandStack]:
    """Filter each session once; segments are windowed from the filtered trial."""
    return {s.key: decompose_bands(s, bands) for s in sessions}


@dataclass
class FoldTensors:
    """Un-upscaled tensors for the three roles of one fold."""

    fold_id: int
    base: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def role(self, name: str, upscale: UpscaleConfig, dtype=np.float32):
        x, y = self.base[name]
        return upscale_batch(x, upscale, dtype), y


def fold_tensors(plan: SplitPlan, stacks, ordering: ElectrodeOrdering | None = None) -> FoldTensors:
    ft = FoldTensors(plan.fold_id)
    for role in ("train", "validation", "test"):
        ft.base[role] = connectivity_batch(plan.role(role), stacks, ordering)
    return ft


def derive_seed(*parts) -> int:
    """64-bit seed from integers and strings, independent of call order."""
    words = [p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in parts]
    words = [w & 0xFFFFFFFFFFFFFFFF for w in words]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def plans_for(sessions, n_folds=4, seed=0, sample_rate_hz=128.0, distance_min=None):
    trials = [TrialInfo.of(s) for s in sessions]
    win = window_samples(sample_rate_hz)
    step = window_samples(sample_rate_hz, 0.5)
    return make_folds(trials, n_folds, seed, window=win, step=step, distance_min=distance_min)


def train_fold(plan: SplitPlan, stacks, model_cfg: ModelConfig, train_cfg: TrainConfig,
               ordering=None, cache_dir=None):
    """Materialize one fold at the model's upscaling and train; returns ``(params, report, data)``."""
    up = model_cfg.upscale
    data = {role: materialize(plan.role(role), stacks, up, ordering, cache_dir)
            for role in ("train", "validation", "test")}
    params, report = train(model_cfg, train_cfg, data["train"], data["validation"])
    return params, report, data


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

SWEEP_HEADER = ["factor", "kernel", "mode", "folds", "mean_accuracy", "fold_accuracies",
                "epochs", "status"]


@dataclass(frozen=True)
class SweepCell:
    factor: float
    kernel: int
    mode: str


def sweep_grid(factors=SUPPORTED_FACTORS, kernels=(3, 5, 7), modes=MODES) -> list[SweepCell]:
    return [SweepCell(float(r), int(k), m) for m in modes for r in factors for k in kernels]


def cell_seed(seed: int, cell: SweepCell) -> int:
    return derive_seed(seed, int(round(cell.factor * 10)), cell.kernel, cell.mode)


def run_cell(cell: SweepCell, folds: Sequence[FoldTensors], base_model: ModelConfig,
             base_train: TrainConfig, seed: int) -> list:
    """Train and test one grid cell on every fold; returns a CSV row."""
    model_cfg = replace(base_model, kernel_size=cell.kernel, factor=cell.factor, mode=cell.mode)
    up = model_cfg.upscale
    accs, epochs, status = [], [], "ok"
    for ft in folds:
        tc = replace(base_train, seed=derive_seed(cell_seed(seed, cell), ft.fold_id))
        try:
            params, report = train(model_cfg, tc, ft.role("train", up), ft.role("validation", up))
        except TrainingDiverged as exc:
            status = "diverged"
            epochs.append(exc.report.n_epochs if exc.report else 0)
            continue
        x_te, y_te = ft.role("test", up)
        accs.append(evaluate(params, x_te, y_te, model_cfg).accuracy)
        epochs.append(report.n_epochs)
        if report.stop_reason == "time_budget":
            status = "time_budget"
    mean = repr(float(np.mean(accs))) if accs else "nan"
    return [repr(cell.factor), cell.kernel, cell.mode, len(folds), mean,
            ";".join(repr(a) for a in accs), ";".join(str(e) for e in epochs), status]


_WORKER: dict = {}


def _init_worker(folds, base_model, base_train, seed):
    _WORKER.update(folds=folds, model=base_model, train=base_train, seed=seed)


def _worker_cell(cell):
    return run_cell(cell, _WORKER["folds"], _WORKER["model"], _WORKER["train"], _WORKER["seed"])


def run_sweep(cells: Sequence[SweepCell], folds: Sequence[FoldTensors], base_model: ModelConfig,
              base_train: TrainConfig, seed: int, workers: int = 1) -> list[list]:
    """Rows in ``cells`` order; the worker count never changes the results."""
    if workers <= 1:
        rows = []
        for i, cell in enumerate(cells):
            log.info("sweep cell %d/%d: r=%s k=%d %s", i + 1, len(cells), cell.factor, cell.kernel, cell.mode)
            rows.append(run_cell(cell, folds, base_model, base_train, seed))
        return rows
    with cf.ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                initargs=(list(folds), base_model, base_train, seed)) as pool:
        return list(pool.map(_worker_cell, cells))


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    w.writerows(rows)
    return buf.getvalue()
