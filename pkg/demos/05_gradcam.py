"""
Activations and Grad-CAM
=========================

Train briefly, then look at what the first convolution responds to and where
the class evidence sits. Images are written as PGM files to a temp directory.
"""

import tempfile
from pathlib import Path

import numpy as np

from connscale.dataset import TrialInfo, make_folds, materialize
from connscale.explain import capture_activation, grad_cam, paired_profiles, write_pgm
from connscale.nn import ModelConfig, TrainConfig, forward, train
from connscale.pipeline import build_stacks
from connscale.resample import UpscaleConfig
from connscale.signal_io import SyntheticSpec, generate_synthetic

spec = SyntheticSpec(n_participants=1, n_trials_per_participant=8, n_classes=2, duration_s=12.0)
sessions = generate_synthetic(spec)
stacks = build_stacks(sessions)
plan = make_folds([TrialInfo.of(s) for s in sessions], n_folds=2, seed=0, distance_min=384)[0]
cfg = ModelConfig(factor=2.0, n_channels=8, n_classes=2, widths=(8,) * 6, dense_width=16)
tr = materialize(plan.train, stacks, cfg.upscale)
va = materialize(plan.validation, stacks, cfg.upscale)
params, report = train(cfg, TrainConfig(lr0=3e-3, batch_size=32, max_epochs=15), tr, va)
print(f"best validation accuracy {max(report.val_acc):.3f}")

# one validation sample and its predicted class
x, label = va[0][0], va[1][0]
pred = int(np.argmax(forward(params, x, cfg)))
print(f"label {label}, predicted {pred}")

act = capture_activation(params, x, cfg, layer=2)
cam = grad_cam(params, x, cfg, pred, layer=2)
print("activation map", act.grayscale.shape, " Grad-CAM peak", f"{cam.peak:.3g}")

# row 3 of the original 8x8 matrix, before and after the first convolution
base = materialize([plan.validation[0]], stacks, UpscaleConfig(1.0))[0][0]
u, in_row, act_row = paired_profiles(base, x, act, source_row=3, factor=cfg.factor)
print(f"upscaled row {u}\n  input      {np.round(in_row, 2)}\n  activation {np.round(act_row, 2)}")

out = Path(tempfile.mkdtemp(prefix="connscale_"))
write_pgm(out / "activation.pgm", act.grayscale)
write_pgm(out / "gradcam.pgm", cam.normalized)
print("images in", out)
