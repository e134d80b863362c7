import numpy as np
import pytest

from connscale.config import ConfigError, parse_config
from connscale.nn import ModelConfig, TrainConfig
from connscale.pipeline import (FoldTensors, SweepCell, cell_seed, derive_seed, load_directory,
                                recording_name, run_cell, sweep_grid)
from connscale.signal_io import RecordingSession, write_recording


def test_grid_sizes():
    assert len(sweep_grid()) == 42
    assert len(sweep_grid(factors=(1.0,))) == 6
    assert len({(c.factor, c.kernel, c.mode) for c in sweep_grid()}) == 42


def test_seeds_are_stable_and_distinct():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert derive_seed(1, "a") != derive_seed(1, "b")
    seeds = {cell_seed(0, c) for c in sweep_grid()}
    assert len(seeds) == 42


def _tensors(n, seed):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    return rng.uniform(-1, 1, (n, 8, 8, 2)), y


def test_run_cell_records_divergence():
    x, y = _tensors(8, 0)
    x[:] = np.inf
    ft = FoldTensors(0, {"train": (x, y), "validation": (x, y), "test": (x, y)})
    base = ModelConfig(n_channels=8, n_bands=2, n_classes=2, widths=(2,) * 6, dense_width=4)
    with np.errstate(all="ignore"):
        row = run_cell(SweepCell(2.0, 3, "nearest"), [ft], base, TrainConfig(max_epochs=1, max_retries=1), 0)
    assert row[-1] == "diverged" and row[4] == "nan"


def test_run_cell_row_layout():
    ft = FoldTensors(0, {r: _tensors(6, i) for i, r in enumerate(("train", "validation", "test"))})
    base = ModelConfig(n_channels=8, n_bands=2, n_classes=2, widths=(2,) * 6, dense_width=4)
    row = run_cell(SweepCell(1.5, 5, "bilinear"), [ft, ft], base, TrainConfig(max_epochs=1), 0)
    assert row[:4] == ["1.5", 5, "bilinear", 2] and row[-1] == "ok"
    assert len(row[5].split(";")) == 2 and row[6] == "1;1"


def test_load_directory(tmp_path):
    for t in (1, 0):
        s = RecordingSession(2, t, t, np.zeros((2, 10)))
        write_recording(s, tmp_path / recording_name(s))
    assert [s.key for s in load_directory(tmp_path)] == [(2, 0), (2, 1)]
    with pytest.raises(ValueError, match="label"):
        load_directory(tmp_path, n_classes=1)
    with pytest.raises(FileNotFoundError):
        load_directory(tmp_path / "nope")
    with pytest.raises(FileNotFoundError, match="no csv"):
        load_directory(tmp_path, "csv")


@pytest.mark.parametrize("text,match", [
    ("[data]\nsource = web\n", "source"),
    ("[data]\nsource = directory\n", "directory is required"),
    ("[data]\nband_file = missing.txt\n", "does not exist"),
    ("[sweep]\nkernels = 4\n", "odd"),
    ("[sweep]\nfactors = 0.5\n", "factor"),
    ("[run]\nthreads = 0\n", "threads"),
    ("[synthetic]\nn_trials_per_participant = 5\n", "divisible"),
])
def test_config_validation(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, tmp_path).validate()
