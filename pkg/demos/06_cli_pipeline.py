"""
The command-line pipeline
==========================

The same steps through the ``connscale`` CLI: synthesize recordings, build
fold plans, train, evaluate and explain. Equivalent shell commands are shown
alongside each call.
"""

import tempfile
from pathlib import Path

from connscale.cli import main

work = Path(tempfile.mkdtemp(prefix="connscale_cli_"))
config = work / "run.ini"
config.write_text("""
[data]
source = directory
directory = data

[synthetic]
n_participants = 1
n_trials_per_participant = 8
n_classes = 2
duration_s = 12

[split]
n_folds = 2
distance_min_s = 3

[upscale]
factor = 2.0

[model]
widths = 8,8,8,8,8,8
dense_width = 16

[train]
lr0 = 0.003
batch_size = 32
max_epochs = 15
""")


def run(*argv):
    print("$ connscale", " ".join(argv))
    code = main(list(argv))
    print("  exit", code)


# connscale synth --config run.ini --out data
run("synth", "--config", str(config), "--out", str(work / "data"))
# connscale split --config run.ini --data data --out plans.txt
run("split", "--config", str(config), "--data", str(work / "data"), "--out", str(work / "plans.txt"))
# connscale train --config run.ini --plan plans.txt --fold 0 --out runs
run("train", "--config", str(config), "--plan", str(work / "plans.txt"), "--fold", "0", "--out", str(work / "runs"))
ckpt = str(work / "runs" / "fold0" / "model.ckpt")
run("eval", "--config", str(config), "--checkpoint", ckpt, "--plan", str(work / "plans.txt"), "--fold", "0",
    "--out", str(work / "runs" / "fold0" / "metrics.json"))
run("explain", "--config", str(config), "--checkpoint", ckpt, "--plan", str(work / "plans.txt"),
    "--sample", "0:test:0", "--out", str(work / "runs"))

for path in sorted(work.rglob("*")):
    if path.is_file() and "data" not in path.parts:
        print(path.relative_to(work))
