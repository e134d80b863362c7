"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test records a PASS/FAIL verdict line; the lines are printed together in
the terminal summary (see conftest.py) so ``pytest -v`` output carries them.
"""

import contextlib
import math
import time

import numpy as np
import pytest

from connscale.cli import main
from connscale.connectivity import build_connectivity
from connscale.dataset import (SegmentIndex, TrialInfo, check_plan, enumerate_segments, make_folds,
                               make_split, materialize)
from connscale.explain import grad_cam, weighted_activation_map
from connscale.nn import (AdamState, ModelConfig, TrainConfig, adam_step, evaluate, forward,
                          init_params, loss_and_grads, step_lr, train)
from connscale.nn import layers as L
from connscale.pipeline import build_stacks
from connscale.resample import SUPPORTED_FACTORS, upscale
from connscale.signal_io import DEFAULT_BANDS, BandStack, SyntheticSpec, generate_synthetic

VERDICTS: dict[int, str] = {}


@contextlib.contextmanager
def criterion(n, title):
    t0 = time.perf_counter()
    detail = {}
    try:
        yield detail
    except BaseException:
        VERDICTS[n] = f"FAIL  [{n:2d}] {title} ({time.perf_counter() - t0:.1f}s) {detail.get('msg', '')}"
        raise
    VERDICTS[n] = f"PASS  [{n:2d}] {title} ({time.perf_counter() - t0:.1f}s) {detail.get('msg', '')}"


# --- 1 ----------------------------------------------------------------------

def test_01_segmentation_arithmetic():
    with criterion(1, "segmentation arithmetic") as d:
        trials = [TrialInfo(p, t, 60 * 128, t % 40) for p in range(32) for t in range(40)]
        assert len(enumerate_segments(7680, 384, 64)) == 115
        plan = make_split(trials, [3648] * len(trials), fold_id=0, val_pick=[1280] * len(trials))
        c = plan.counts()
        d["msg"] = f"train/val/test = {c['train']}/{c['validation']}/{c['test']}"
        assert (c["train"], c["validation"], c["test"]) == (119_040, 1_280, 1_280)
        assert sum(c.values()) == 115 * 1280


# --- 2 ----------------------------------------------------------------------

def _brute_leaks(plan):
    held = plan.test + plan.validation
    return sum(1 for t in plan.train for h in held
               if t.key == h.key and abs(t.start_sample - h.start_sample) < t.window_samples)


def test_02_leak_freedom():
    with criterion(2, "leak-freedom over 1000 random plans") as d:
        rng = np.random.default_rng(2024)
        leaks = 0
        for i in range(1000):
            window = int(rng.choice([64, 128, 384]))
            step = int(rng.choice([16, 32, 64]))
            trials = [TrialInfo(int(rng.integers(5)), j, int(rng.integers(3 * window, 12 * window)),
                                int(rng.integers(4))) for j in range(int(rng.integers(1, 6)))]
            picks = [int(rng.choice(enumerate_segments(t.n_samples, window, step))) for t in trials]
            plan = make_split(trials, picks, seed=int(rng.integers(2**31)), fold_id=i % 4,
                              window=window, step=step)
            leaks += _brute_leaks(plan)
            for t in trials:
                n = sum(1 for role in ("train", "validation", "test", "excluded")
                        for s in plan.role(role) if s.key == t.key)
                assert n == len(enumerate_segments(t.n_samples, window, step))
            check_plan(plan, trials, step)
        d["msg"] = f"{leaks} overlapping pairs"
        assert leaks == 0


# --- 3 ----------------------------------------------------------------------

def naive_pcc(x, y):
    mx, my = x.mean(), y.mean()
    num = np.sum((x - mx) * (y - my))
    den = math.sqrt(np.sum((x - mx) ** 2) * np.sum((y - my) ** 2))
    return num / den


def test_03_pcc_oracle():
    with criterion(3, "PCC oracle equivalence and properties") as d:
        rng = np.random.default_rng(3)
        worst = 0.0
        for case in range(1000):
            c, b, t = int(rng.integers(4, 9)), int(rng.integers(1, 4)), int(rng.integers(16, 400))
            data = rng.normal(size=(b, c, t)) * rng.uniform(0.1, 50, (1, c, 1))
            stack = BandStack(("r", case), list(DEFAULT_BANDS[:b]), data, [f"c{i}" for i in range(c)], 128.0, 0)
            start = int(rng.integers(0, t // 4))
            length = t - start
            m = build_connectivity(stack, start, length).data
            for band in range(b):
                w = data[band, :, start:]
                for i in range(c):
                    for k in range(i + 1, c):
                        worst = max(worst, abs(m[i, k, band] - naive_pcc(w[i], w[k])))
            assert np.array_equal(m, m.transpose(1, 0, 2))
            assert np.all(np.diagonal(m, axis1=0, axis2=1) == 1.0)
            assert np.all(np.abs(m) <= 1.0)
            scale = rng.uniform(0.01, 100, (1, c, 1))
            shifted = BandStack(stack.session_ref, stack.bands, data * scale + rng.uniform(-100, 100, (1, c, 1)),
                                stack.channel_labels, 128.0, 0)
            m2 = build_connectivity(shifted, start, length).data
            assert np.abs(m2 - m).max() <= 1e-12
        d["msg"] = f"max |build - naive| = {worst:.2e}"
        assert worst <= 1e-12


# --- 4 ----------------------------------------------------------------------

def ref_pixel(m, r, u, v, mode):
    n = m.shape[0]
    if mode == "nearest":
        return m[min(math.floor((u + 0.5) / r), n - 1), min(math.floor((v + 0.5) / r), n - 1)]

    def c(q):
        s = min(max((q + 0.5) / r - 0.5, 0.0), n - 1)
        i = math.floor(s)
        return i, min(i + 1, n - 1), s - i

    i0, i1, a = c(u)
    j0, j1, bw = c(v)
    return ((1 - a) * (1 - bw) * m[i0, j0] + (1 - a) * bw * m[i0, j1]
            + a * (1 - bw) * m[i1, j0] + a * bw * m[i1, j1])


def test_04_interpolation_contracts():
    with criterion(4, "interpolation contracts") as d:
        rng = np.random.default_rng(4)
        worst = 0.0
        for mode in ("nearest", "bilinear"):
            m = rng.uniform(-1, 1, (8, 8, 3))
            assert upscale(m, 1.0, mode).tobytes() == m.tobytes()
            for r in SUPPORTED_FACTORS:
                for _ in range(3):
                    m = rng.uniform(-1, 1, (8, 8))
                    out = upscale(m, r, mode)
                    n_out = round(8 * r)
                    assert out.shape == (n_out, n_out)
                    ref = np.array([[ref_pixel(m, r, u, v, mode) for v in range(n_out)] for u in range(n_out)])
                    worst = max(worst, float(np.abs(out - ref).max()))
                    assert m.min() <= out.min() and out.max() <= m.max()
                if mode == "bilinear":
                    assert np.all(upscale(np.full((8, 8), 0.3), r, mode) == 0.3)
        for r in (2, 3, 4):
            m = rng.uniform(-1, 1, (8, 8))
            assert np.array_equal(upscale(m, r, "nearest"), np.kron(m, np.ones((r, r))))
        d["msg"] = f"max |impl - per-pixel reference| = {worst:.2e}"
        assert worst <= 1e-12


# --- 5 ----------------------------------------------------------------------

def test_05_table_shapes():
    with criterion(5, "layer shapes for 21 (r, k) combinations") as d:
        x_cache = {}
        for cfg in ModelConfig.grid():
            params = init_params(cfg, 0)
            x = x_cache.setdefault(cfg.factor, np.random.default_rng(5).uniform(
                -1, 1, (1,) + cfg.input_shape).astype(np.float32))
            logits, cache = forward(params, x, cfg, keep=True)
            s = 32 * cfg.factor
            expected = {1: (s, s, 10), 2: (s, s, 32), 3: (s, s, 64), 4: (s // 2, s // 2, 64),
                        5: (s // 2, s // 2, 128), 6: (s // 2, s // 2, 256), 7: (s // 4, s // 4, 256),
                        8: (s // 4, s // 4, 256), 9: (s // 4, s // 4, 256), 10: (s // 8, s // 8, 256),
                        11: (256,), 12: (40,)}
            for layer, shape in expected.items():
                assert cache.acts[layer].shape[1:] == tuple(int(v) for v in shape), (cfg, layer)
            if (cfg.factor, cfg.kernel_size) == (3.0, 3):
                assert cache.acts[7].shape[1:] == (24, 24, 256) and logits.shape == (1, 40)
        d["msg"] = "21/21 configurations match"


# --- 6 ----------------------------------------------------------------------

def test_06_gradient_check():
    with criterion(6, "finite-difference gradient check (float64)") as d:
        cfg = ModelConfig(kernel_size=3, factor=1.0)
        worst = {}
        for trial in range(5):
            rng = np.random.default_rng(100 + trial)
            p = init_params(cfg, trial, np.float64)
            for k in p:
                if k.endswith(".b"):
                    p[k] = rng.normal(0, 0.05, p[k].shape)
            x = np.clip(rng.normal(0, 0.4, (1,) + cfg.input_shape), -1, 1)
            y = np.array([rng.integers(40)])
            _, g = loss_and_grads(p, x, y, cfg)
            for name in p:
                flat, gf = p[name].reshape(-1), g[name].reshape(-1)
                for j in rng.choice(flat.size, min(6, flat.size), replace=False):
                    old, h = flat[j], 1e-5
                    flat[j] = old + h
                    lp = L.softmax_cross_entropy(forward(p, x, cfg), y)[0]
                    flat[j] = old - h
                    lm = L.softmax_cross_entropy(forward(p, x, cfg), y)[0]
                    flat[j] = old
                    num = (lp - lm) / (2 * h)
                    err = abs(gf[j] - num) / max(abs(gf[j]), abs(num), 1e-6)
                    worst[name] = max(worst.get(name, 0.0), err)
        name = max(worst, key=worst.get)
        d["msg"] = f"{len(worst)} tensors, max rel err {worst[name]:.2e} ({name})"
        assert len(worst) == 16 and worst[name] < 1e-4


# --- 7 ----------------------------------------------------------------------

def test_07_optimizer_schedule():
    with criterion(7, "lr schedule and Adam convergence") as d:
        for e in range(200):
            assert step_lr(e) == 1e-4 * 0.8 ** math.floor(e / 10)
        assert TrainConfig().lr(0) == TrainConfig().lr(9) == 1e-4
        p = {"x": np.array([1.0])}
        st = AdamState()
        for _ in range(100):
            adam_step(p, {"x": 2 * p["x"]}, st, 0.1)
        d["msg"] = f"|x| after 100 steps = {abs(p['x'][0]):.3g}"
        assert abs(p["x"][0]) < 0.1


# --- 8 ----------------------------------------------------------------------

@pytest.mark.slow
def test_08_end_to_end_learning():
    with criterion(8, "synthetic end-to-end learning (r=3, k=3, nearest)") as d:
        spec = SyntheticSpec()  # 8 classes, coupling 0.8
        sessions = generate_synthetic(spec)
        stacks = build_stacks(sessions)
        trials = [TrialInfo.of(s) for s in sessions]
        plan = make_folds(trials, 4, seed=0, distance_min=384)[0]
        cfg = ModelConfig(kernel_size=3, factor=3.0, mode="nearest", n_channels=spec.n_channels,
                          n_bands=10, n_classes=spec.n_classes)
        tr = materialize(plan.train, stacks, cfg.upscale)
        va = materialize(plan.validation, stacks, cfg.upscale)
        untrained = evaluate(init_params(cfg, 0), *va, cfg).accuracy
        tc = TrainConfig(max_epochs=40, stop_at_accuracy=0.9, seed=0)
        params, rep = train(cfg, tc, tr, va)
        best = max(rep.val_acc)
        d["msg"] = (f"untrained {untrained:.3f}, best val acc {best:.3f} after {rep.n_epochs} epochs "
                    f"({len(tr[1])} train / {len(va[1])} val)")
        assert untrained <= 0.15
        assert best >= 0.9 and rep.n_epochs <= 40


# --- 9 ----------------------------------------------------------------------

SWEEP_CFG = """
[synthetic]
n_participants = 1
n_trials_per_participant = 4
n_classes = 2
duration_s = 12
n_channels = 8

[split]
n_folds = 2
distance_min_s = 3

[run]
folds = 0

[train]
batch_size = 64

[sweep]
max_epochs = 1
"""


@pytest.mark.slow
def test_09_sweep_reproducibility(tmp_path):
    with criterion(9, "42-cell sweep, byte-identical reruns and parallel run") as d:
        cfg = tmp_path / "sweep.ini"
        cfg.write_text(SWEEP_CFG)
        outs = []
        for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
            out = tmp_path / name
            assert main(["sweep", "--config", str(cfg), "--seed", "7", "--threads", threads,
                         "--out", str(out)]) == 0
            outs.append((out / "sweep.csv").read_bytes())
        rows = outs[0].decode().splitlines()[1:]
        d["msg"] = f"{len(rows)} rows, identical: {outs[0] == outs[1]}, parallel identical: {outs[0] == outs[2]}"
        assert len(rows) == 42
        assert outs[0] == outs[1] == outs[2]


# --- 10 ---------------------------------------------------------------------

def test_10_gradcam_properties():
    with criterion(10, "Grad-CAM properties") as d:
        cfg = ModelConfig(n_channels=8, n_bands=3, n_classes=6, widths=(6, 6, 8, 8, 8, 8), dense_width=12)
        rng = np.random.default_rng(10)
        params = init_params(cfg, 10, np.float64)
        for k in params:
            if k.endswith(".b"):
                params[k] = rng.normal(0, 0.1, params[k].shape)
        for _ in range(100):
            x = rng.uniform(-1, 1, cfg.input_shape)
            cam = grad_cam(params, x, cfg, int(rng.integers(6)), layer=int(rng.choice([2, 3, 5, 6, 8, 9])))
            assert cam.raw.min() >= 0.0
        zeroed = dict(params, **{"dense12.w": np.zeros_like(params["dense12.w"])})
        for layer in (2, 9):
            assert not grad_cam(zeroed, x, cfg, 0, layer).raw.any()

        # closed form: logit = alpha * max(A9[..., 0]); layer 9 is 2x2, so the map is alpha/4 * A9[..., 0]
        alpha = 1.7
        p = dict(params)
        p["conv9.b"] = params["conv9.b"].copy()
        p["conv9.b"][0] = 0.5
        p["dense11.w"] = np.zeros_like(params["dense11.w"])
        p["dense11.w"][0, 0] = 1.0
        p["dense11.b"] = np.zeros_like(params["dense11.b"])
        p["dense12.w"] = np.zeros_like(params["dense12.w"])
        p["dense12.w"][0, 3] = alpha
        p["dense12.b"] = np.zeros_like(params["dense12.b"])
        x = rng.uniform(-1, 1, cfg.input_shape)
        _, cache = forward(p, x, cfg, keep=True)
        a9 = cache.acts[9][0, :, :, 0]
        assert a9.shape == (2, 2) and a9.max() > 0
        expected = alpha / 4 * a9
        err = float(np.abs(grad_cam(p, x, cfg, 3, layer=9).raw - expected).max())
        # core: a constant gradient on one channel reproduces that channel scaled
        acts = rng.uniform(0, 1, (5, 5, 4))
        grads = np.zeros_like(acts)
        grads[..., 2] = alpha / 25
        err = max(err, float(np.abs(weighted_activation_map(acts, grads) - alpha / 25 * acts[..., 2]).max()))
        d["msg"] = f"100 pairs non-negative, zeroed head -> zero map, closed-form err {err:.1e}"
        assert err <= 1e-6
