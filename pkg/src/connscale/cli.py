"""Command-line entry point: ``connscale {synth,split,train,eval,sweep,explain}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import explain as X
from .config import ConfigError, RunConfig, load_config
from .dataset import materialize, read_plans, write_plans
from .nn import (CONV_LAYERS, CheckpointError, TrainingDiverged, evaluate, forward, load_checkpoint,
                 save_checkpoint, train)
from .pipeline import (build_stacks, fold_tensors, load_directory, plans_for, recording_name,
                       run_sweep, sweep_csv, sweep_grid)
from .signal_io import FilterError, RecordingFormatError, generate_synthetic, write_recording

log = logging.getLogger("connscale")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.values["run"]["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.values["run"]["threads"] = args.threads
    cfg.validate()
    return cfg


def _sessions(cfg: RunConfig):
    if cfg.get("data", "source") == "synthetic":
        spec = cfg.synthetic_spec()
        return generate_synthetic(spec), spec.n_classes
    n_classes = cfg.get("data", "n_classes") or None
    sessions = load_directory(cfg.path("data", "directory"), cfg.get("data", "format"), n_classes)
    return sessions, n_classes or max(s.label for s in sessions) + 1


def _plans(cfg: RunConfig, sessions, plan_path=None):
    plan_path = plan_path or cfg.path("split", "plan_file")
    if plan_path is not None:
        if not Path(plan_path).exists():
            raise FileNotFoundError(f"plan file {plan_path} does not exist")
        return read_plans(plan_path)
    rate = sessions[0].sample_rate_hz
    return plans_for(sessions, cfg.get("split", "n_folds"), cfg.seed, rate,
                     int(round(cfg.get("split", "distance_min_s") * rate)))


def _plan_for_fold(plans, fold):
    for p in plans:
        if p.fold_id == fold:
            return p
    raise UsageError(f"fold {fold} not in plan (have {[p.fold_id for p in plans]})")


def _require_out(args):
    if not args.out:
        raise UsageError(f"{args.command} needs --out")
    return Path(args.out)


def _fold(args) -> int:
    return 0 if args.fold is None else args.fold


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    out = _require_out(args)
    cfg = _config(args)
    spec = cfg.synthetic_spec()
    fmt = cfg.get("data", "format")
    sessions = generate_synthetic(spec)
    out.mkdir(parents=True, exist_ok=True)
    for s in sessions:
        write_recording(s, out / recording_name(s, fmt), fmt)
    log.info("wrote %d recordings to %s", len(sessions), out)
    return EXIT_OK


def cmd_split(args):
    out = _require_out(args)
    cfg = _config(args)
    if args.data is not None:
        cfg.values["data"].update(source="directory", directory=str(Path(args.data).resolve()))
    sessions, _ = _sessions(cfg)
    plans = _plans(cfg, sessions)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_plans(out, plans)
    for p in plans:
        log.info("fold %d: %s", p.fold_id, p.counts())
    return EXIT_OK


def _fold_dir(cfg, args, fold):
    return Path(args.out or cfg.get("run", "out_dir")) / f"fold{fold}"


def cmd_train(args):
    cfg = _config(args)
    sessions, n_classes = _sessions(cfg)
    plans = _plans(cfg, sessions, args.plan)
    fold = _fold(args)
    plan = _plan_for_fold(plans, fold)
    stacks = build_stacks(sessions, cfg.bands())
    n_bands = len(next(iter(stacks.values())).bands)
    model_cfg = cfg.model_config(sessions[0].n_channels, n_bands, n_classes)
    tc = cfg.train_config()
    up = model_cfg.upscale
    cache = cfg.path("run", "cache_dir")
    ordering = cfg.ordering()
    tr = materialize(plan.train, stacks, up, ordering, cache)
    va = materialize(plan.validation, stacks, up, ordering, cache)
    params, report = train(model_cfg, tc, tr, va)
    out = _fold_dir(cfg, args, fold)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.ckpt", params, model_cfg, report.seed_used)
    report.write_csv(out / "train_report.csv")
    report.write_json(out / "train_summary.json")
    log.info("fold %d: %s", fold, report.summary())
    return EXIT_OK


def cmd_eval(args):
    cfg = _config(args)
    params, model_cfg, _ = load_checkpoint(args.checkpoint)
    fold = _fold(args)
    sessions, _ = _sessions(cfg)
    plan = _plan_for_fold(_plans(cfg, sessions, args.plan), fold)
    stacks = build_stacks(sessions, cfg.bands())
    x, y = materialize(plan.test, stacks, model_cfg.upscale, cfg.ordering(), cfg.path("run", "cache_dir"))
    res = evaluate(params, x, y, model_cfg)
    metrics = {
        "fold": fold,
        "accuracy": res.accuracy,
        "n": res.n,
        "loss": res.loss,
        "confusion": res.confusion.tolist(),
        "model": {"kernel_size": model_cfg.kernel_size, "factor": model_cfg.factor,
                  "mode": model_cfg.mode, "n_classes": model_cfg.n_classes},
    }
    out = Path(args.out or _fold_dir(cfg, args, fold) / "metrics.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out, metrics)
    if args.features:
        feats, labels = X.export_features(params, x, y, model_cfg)
        X.write_features_csv(out.with_name("features.csv"), feats, labels)
    print(json.dumps({"fold": fold, "accuracy": res.accuracy, "n": res.n}))
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    sessions, n_classes = _sessions(cfg)
    plans = _plans(cfg, sessions)
    stacks = build_stacks(sessions, cfg.bands())
    n_bands = len(next(iter(stacks.values())).bands)
    fold_ids = cfg.get("run", "folds") or range(cfg.get("split", "n_folds"))
    if args.fold is not None:
        fold_ids = (args.fold,)
    folds = [fold_tensors(_plan_for_fold(plans, f), stacks, cfg.ordering()) for f in fold_ids]
    base_model = cfg.model_config(sessions[0].n_channels, n_bands, n_classes)
    base_train = cfg.train_config(max_epochs=cfg.get("sweep", "max_epochs"))
    cells = sweep_grid(cfg.get("sweep", "factors"), cfg.get("sweep", "kernels"), cfg.get("sweep", "modes"))
    for cell in cells:  # every cell must be buildable before any training starts
        replace(base_model, kernel_size=cell.kernel, factor=cell.factor, mode=cell.mode)
    rows = run_sweep(cells, folds, base_model, base_train, cfg.seed, cfg.get("run", "threads"))
    out = Path(args.out or cfg.get("run", "out_dir"))
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(rows))
    log.info("wrote %d sweep rows to %s", len(rows), out / "sweep.csv")
    return EXIT_OK


def _parse_selector(text):
    parts = text.split(":")
    if len(parts) != 3 or parts[1] not in ("train", "validation", "test") \
            or not (parts[0].isdigit() and parts[2].isdigit()):
        raise UsageError(f"sample selector {text!r} must look like FOLD:ROLE:INDEX")
    return int(parts[0]), parts[1], int(parts[2])


def cmd_explain(args):
    if args.layer not in CONV_LAYERS:
        raise UsageError(f"--layer must be one of {CONV_LAYERS}")
    fold, role, index = _parse_selector(args.sample)
    if args.fold is not None:
        fold = args.fold
    cfg = _config(args)
    params, model_cfg, _ = load_checkpoint(args.checkpoint)
    if args.class_idx is not None and not 0 <= args.class_idx < model_cfg.n_classes:
        raise UsageError(f"--class must lie in [0, {model_cfg.n_classes})")
    if not 0 <= args.band < model_cfg.n_bands:
        raise UsageError(f"--band must lie in [0, {model_cfg.n_bands})")
    sessions, _ = _sessions(cfg)
    plan = _plan_for_fold(_plans(cfg, sessions, args.plan), fold)
    segs = plan.role(role)
    if not 0 <= index < len(segs):
        raise UsageError(f"sample index {index} outside [0, {len(segs)}) for {role}")
    seg = segs[index]
    stacks = build_stacks([s for s in sessions if s.key == seg.key], cfg.bands())
    (base,), _ = materialize([seg], stacks, replace(model_cfg.upscale, factor=1.0), cfg.ordering(), None,
                             np.float64)
    x, _ = materialize([seg], stacks, model_cfg.upscale, cfg.ordering())
    sample = x[0]
    cls = args.class_idx
    if cls is None:
        cls = int(np.argmax(forward(params, sample, model_cfg)[0]))
    row = model_cfg.n_channels // 2 if args.row is None else args.row
    if not 0 <= row < model_cfg.n_channels:
        raise UsageError(f"--row must lie in [0, {model_cfg.n_channels})")
    act = X.capture_activation(params, sample, model_cfg, args.layer, seg)
    cam = X.grad_cam(params, sample, model_cfg, cls, args.layer)
    if args.layer == CONV_LAYERS[0]:
        u, in_row, act_row = X.paired_profiles(base, sample, act, row, model_cfg.factor, args.band)
    else:
        u = row
        in_row = X.row_profile(base[:, :, args.band], row)
        act_row = X.row_profile(act.grayscale, min(row, act.maps.shape[0] - 1))
    out = Path(args.out or cfg.get("run", "out_dir")) / "explain"
    out.mkdir(parents=True, exist_ok=True)
    stem = f"f{fold}_{role}{index}_L{args.layer}_c{cls}"
    X.write_pgm(out / f"{stem}_activation.pgm", act.grayscale)
    X.write_pgm(out / f"{stem}_gradcam.pgm", cam.normalized)
    with open(out / f"{stem}_profile.csv", "w") as fh:
        fh.write("position,input,activation\n")
        n = max(len(in_row), len(act_row))
        for i in range(n):
            a = repr(float(in_row[i])) if i < len(in_row) else ""
            b = repr(float(act_row[i])) if i < len(act_row) else ""
            fh.write(f"{i},{a},{b}\n")
    if args.raw_csv:
        X.write_matrix_csv(out / f"{stem}_activation.csv", act.grayscale)
        X.write_matrix_csv(out / f"{stem}_gradcam.csv", cam.raw)
    log.info("explain: class %d, row %d (upscaled row %d), outputs in %s", cls, row, u, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config file (INI key = value)")
    common.add_argument("--seed", type=int, help="global seed (overrides run.seed)")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--fold", type=int, help="fold id (train/eval default 0; sweep: only this fold)")
    common.add_argument("--threads", type=int, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="connscale", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write synthetic recordings")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", parents=[common], help="build fold plans")
    p.add_argument("--data", help="recording directory (overrides data.directory)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train one fold")
    p.add_argument("--plan", help="plan file (default: built from config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="test a checkpoint on one fold")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--plan")
    p.add_argument("--features", action="store_true", help="also export penultimate features as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="factor x kernel x mode accuracy grid")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("explain", parents=[common], help="activation, Grad-CAM and row profiles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--plan")
    p.add_argument("--sample", default="0:test:0", help="FOLD:ROLE:INDEX (--fold overrides FOLD)")
    p.add_argument("--layer", type=int, default=2)
    p.add_argument("--class", dest="class_idx", type=int, help="target class (default: predicted)")
    p.add_argument("--row", type=int, help="row of the original matrix (default: C // 2)")
    p.add_argument("--band", type=int, default=0, help="band plotted in the input profile")
    p.add_argument("--raw-csv", action="store_true", help="also write raw activation/Grad-CAM CSVs")
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"connscale {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"connscale {args.command}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FileNotFoundError, RecordingFormatError, FilterError, CheckpointError, KeyError,
            ValueError) as exc:
        print(f"connscale {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
