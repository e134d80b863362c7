"""
Training a narrow network on synthetic data
============================================

A scaled-down run of the full pipeline: synthetic trials, one fold, 2x
nearest upscaling and a network with narrow layers so it trains in seconds.
"""

from connscale.dataset import TrialInfo, make_folds, materialize
from connscale.nn import ModelConfig, TrainConfig, evaluate, train
from connscale.pipeline import build_stacks
from connscale.signal_io import SyntheticSpec, generate_synthetic

spec = SyntheticSpec(n_participants=2, n_trials_per_participant=16, n_classes=4, duration_s=12.0)
sessions = generate_synthetic(spec)
stacks = build_stacks(sessions)
plan = make_folds([TrialInfo.of(s) for s in sessions], n_folds=2, seed=0, distance_min=384)[0]

cfg = ModelConfig(kernel_size=3, factor=2.0, mode="nearest", n_channels=8, n_bands=10, n_classes=4,
                  widths=(8, 8, 16, 16, 16, 16), dense_width=32)
data = {role: materialize(plan.role(role), stacks, cfg.upscale) for role in ("train", "validation", "test")}
print({role: x.shape for role, (x, _) in data.items()})

params, report = train(cfg, TrainConfig(lr0=1e-3, batch_size=32, max_epochs=15, seed=0),
                       data["train"], data["validation"])
for e in range(report.n_epochs):
    print(f"epoch {e:2d}  lr {report.lr[e]:.1e}  train {report.train_loss[e]:.3f}  "
          f"val {report.val_loss[e]:.3f}  acc {report.val_acc[e]:.3f}")
print("stopped:", report.stop_reason, "best epoch:", report.best_epoch)

res = evaluate(params, *data["test"], cfg)
print(f"test accuracy {res.accuracy:.3f} on {res.n} segments\nconfusion:\n{res.confusion}")
