"""Experiment configuration files.

INI-style ``key = value`` under section headers. Every key is declared in
:data:`SCHEMA`; unknown sections or keys are errors, so a config file is a
complete, diff-able record of a run. Example::

    [data]
    source = synthetic

    [synthetic]
    n_classes = 8
    coupling_strength = 0.8

    [upscale]
    factor = 3.0
    mode = nearest

    [model]
    kernel_size = 3

    [train]
    max_epochs = 40
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .connectivity import ElectrodeOrdering
from .nn import ModelConfig, TrainConfig
from .resample import MODES, SUPPORTED_FACTORS, UpscaleConfig
from .signal_io import BandDefinition, SyntheticSpec, load_band_file


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _strs(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_str(text):
    return text.strip() or None


SCHEMA = {
    "data": {
        "source": (str, "synthetic"),
        "directory": (_opt_str, None),
        "format": (str, "raw_f32"),
        "n_classes": (int, 0),
        "band_file": (_opt_str, None),
        "ordering_file": (_opt_str, None),
    },
    "synthetic": {
        "n_participants": (int, 4),
        "n_trials_per_participant": (int, 32),
        "n_classes": (int, 8),
        "duration_s": (float, 20.0),
        "sample_rate_hz": (float, 128.0),
        "n_channels": (int, 8),
        "coupling_strength": (float, 0.8),
        "noise_sigma": (float, 1.0),
        "seed": (int, 0),
    },
    "split": {
        "n_folds": (int, 4),
        "distance_min_s": (float, 6.0),
        "plan_file": (_opt_str, None),
    },
    "upscale": {
        "factor": (float, 3.0),
        "mode": (str, "nearest"),
    },
    "model": {
        "kernel_size": (int, 3),
        "widths": (_ints, ModelConfig().widths),
        "dense_width": (int, 256),
    },
    "train": {
        "lr0": (float, 1e-4),
        "beta1": (float, 0.9),
        "beta2": (float, 0.999),
        "eps": (float, 1e-8),
        "step_size": (int, 10),
        "gamma": (float, 0.8),
        "batch_size": (int, 64),
        "patience": (int, 20),
        "max_epochs": (int, 200),
        "max_retries": (int, 3),
        "stop_at_accuracy": (_opt_float, None),
        "time_budget_s": (_opt_float, None),
    },
    "run": {
        "seed": (int, 0),
        "folds": (_ints, ()),  # empty: every fold
        "out_dir": (str, "runs"),
        "cache_dir": (_opt_str, None),
        "threads": (int, 1),
    },
    "sweep": {
        "factors": (_floats, SUPPORTED_FACTORS),
        "kernels": (_ints, (3, 5, 7)),
        "modes": (_strs, MODES),
        "max_epochs": (int, 10),
    },
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def get(self, section: str, key: str):
        return self.values[section][key]

    def path(self, section: str, key: str) -> Path | None:
        v = self.get(section, key)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def seed(self) -> int:
        return self.get("run", "seed")

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(**self.values["synthetic"])

    def bands(self) -> list[BandDefinition] | None:
        p = self.path("data", "band_file")
        return load_band_file(p) if p else None

    def ordering(self) -> ElectrodeOrdering | None:
        p = self.path("data", "ordering_file")
        return ElectrodeOrdering.from_file(p) if p else None

    def upscale(self) -> UpscaleConfig:
        return UpscaleConfig(self.get("upscale", "factor"), self.get("upscale", "mode"))

    def n_channels(self) -> int:
        return self.get("synthetic", "n_channels")

    def model_config(self, n_channels: int, n_bands: int, n_classes: int) -> ModelConfig:
        m = self.values["model"]
        return ModelConfig(kernel_size=m["kernel_size"], factor=self.get("upscale", "factor"),
                           mode=self.get("upscale", "mode"), n_channels=n_channels, n_bands=n_bands,
                           n_classes=n_classes, widths=tuple(m["widths"]), dense_width=m["dense_width"])

    def train_config(self, seed: int | None = None, max_epochs: int | None = None) -> TrainConfig:
        t = dict(self.values["train"])
        if max_epochs is not None:
            t["max_epochs"] = max_epochs
        return TrainConfig(seed=self.seed if seed is None else seed, **t)

    def validate(self) -> None:
        """Check every value against the consuming module before any work starts."""
        d = self.values["data"]
        if d["source"] not in ("synthetic", "directory"):
            raise ConfigError("data.source must be 'synthetic' or 'directory'")
        if d["format"] not in ("raw_f32", "csv"):
            raise ConfigError("data.format must be 'raw_f32' or 'csv'")
        if d["source"] == "directory" and not d["directory"]:
            raise ConfigError("data.directory is required when data.source = directory")
        for sec, key in (("data", "band_file"), ("data", "ordering_file"), ("split", "plan_file")):
            p = self.path(sec, key)
            if p is not None and not p.exists():
                raise ConfigError(f"{sec}.{key}: {p} does not exist")
        try:
            self.synthetic_spec()
            self.upscale()
            bands = self.bands()
            self.model_config(self.n_channels(), len(bands) if bands else 10, 2)
            self.train_config()
            for r in self.get("sweep", "factors"):
                UpscaleConfig(r, "nearest")
            for m in self.get("sweep", "modes"):
                UpscaleConfig(1.0, m)
            for k in self.get("sweep", "kernels"):
                if k < 1 or k % 2 == 0:
                    raise ValueError(f"sweep kernel {k} must be odd")
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        if self.get("split", "n_folds") < 1:
            raise ConfigError("split.n_folds must be >= 1")
        for f in self.get("run", "folds"):
            if not 0 <= f < self.get("split", "n_folds"):
                raise ConfigError(f"run.folds contains {f}, outside [0, {self.get('split', 'n_folds')})")
        if self.get("run", "threads") < 1:
            raise ConfigError("run.threads must be >= 1")
        if self.get("sweep", "max_epochs") < 1:
            raise ConfigError("sweep.max_epochs must be >= 1")


def default_config() -> RunConfig:
    return RunConfig({sec: {k: default for k, (_, default) in keys.items()} for sec, keys in SCHEMA.items()})


def parse_config(text: str, base_dir=None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = default_config()
    if base_dir is not None:
        cfg.base_dir = Path(base_dir)
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            conv = SCHEMA[section][key][0]
            try:
                cfg.values[section][key] = conv(raw)
            except ValueError:
                raise ConfigError(f"{section}.{key}: cannot parse {raw!r}") from None
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return default_config()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(), path.parent)


def dump_config(cfg: RunConfig) -> str:
    """Render every key (defaults included) in schema order."""
    def fmt(v):
        if isinstance(v, tuple):
            return ",".join(str(x) for x in v)
        return "" if v is None else str(v)

    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {fmt(cfg.values[sec][k])}" for k in keys)
        lines.append("")
    return "\n".join(lines)
