"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The SNN criteria share one module-scoped training run (2 000 windows, T=8 and
T=32, same seed and epochs). Run with ``pytest tests/test_acceptance.py -v``.
"""

import json
import math
import time

import numpy as np
import pytest

from ttpercept import cli
from ttpercept.events import LOG_EPS, disk_image, generate_events
from ttpercept.ewand import WandGeometry, bundle_adjust, detect_markers, initialize_extrinsics, random_wand_poses, simulate_wand_capture
from ttpercept.ewand.problem import CalibrationProblem
from ttpercept.geometry import Rotation, default_rig
from ttpercept.snn import NetworkConfig, SpikingNet, compare_loss_activity, evaluate, synthesize_event_dataset, train
from ttpercept.snn.gradcheck import surrogate_gradient_check
from ttpercept.spindoe import default_pattern, estimate_spin_from_images, random_axes, spin_sweep, summarize_sweep, synthesize_spin_images

# SNN run shared by criteria 5-7
SNN_SAMPLES = 2000
SNN_EPOCHS = 6
SNN_LR = 1e-3
SNN_BETA = 1.0
COMPARE_EPOCHS = SNN_EPOCHS


@pytest.fixture
def verdict(capsys):
    """Print one acceptance line past pytest's capture, then assert."""

    def _verdict(n, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return _verdict


def center_errors(rig, truth):
    return [float(np.linalg.norm(a.pose.center - b.pose.center)) for a, b in zip(rig.cameras, truth.gauge_aligned().cameras)]


def calibrate(n_poses, noise_px, seed):
    rig = default_rig()
    rng = np.random.default_rng(seed)
    cap = simulate_wand_capture(rig, WandGeometry(), random_wand_poses(n_poses, rng), noise_px=noise_px, rng=rng, with_events=False)
    problem = CalibrationProblem(rig, detect_markers(cap), WandGeometry())
    return bundle_adjust(problem, initialize_extrinsics(problem)), rig


# --- 1: spin envelope -----------------------------------------------------------------

def test_spin_envelope(verdict):
    t = time.perf_counter()
    pattern = default_pattern()
    axes = random_axes(20, np.random.default_rng(0))
    low = summarize_sweep(spin_sweep(pattern, np.linspace(5, 170, 12), axes, seed=0), fps=350.0)
    high = summarize_sweep(spin_sweep(pattern, [180.0, 190.0, 200.0], axes, seed=1), fps=350.0)
    elapsed = time.perf_counter() - t
    accurate = low["accurate_fraction"] >= 0.95
    flagged = high["flagged_fraction"] == 1.0
    verdict(
        1, accurate and flagged and elapsed < 120,
        f"accurate {low['accurate_within_limit']}/{low['runs_within_limit']} (need >= 95%), "
        f"flagged >= 180 rps {high['flagged_above_limit']}/{high['runs_above_limit']} (need all), {elapsed:.0f} s",
    )


# --- 2: spin damping --------------------------------------------------------------------

def test_spin_damping(verdict):
    t = time.perf_counter()
    pattern = default_pattern()
    k_true = 0.091
    found = {}
    for noise, tol in ((0.0, 0.10), (1.0, 0.30)):
        rng = np.random.default_rng(7)
        imgs, _ = synthesize_spin_images(
            pattern, (0.3, -0.5, 0.8), 60.0, fps=350.0, n_frames=350, damping=k_true,
            start=Rotation.random(rng), orientation_noise_deg=noise, rng=rng,
        )
        k = estimate_spin_from_images(imgs, pattern).damping
        found[noise] = (k, abs(k - k_true) / k_true <= tol)
    elapsed = time.perf_counter() - t
    verdict(
        2, all(ok for _, ok in found.values()) and elapsed < 60,
        f"k noiseless {found[0.0][0]:.4f}, k 1 deg noise {found[1.0][0]:.4f} (true {k_true}), {elapsed:.0f} s",
    )


# --- 3, 4: calibration ------------------------------------------------------------------

def test_calibration_exact(verdict):
    t = time.perf_counter()
    res, rig = calibrate(50, 0.0, seed=1)
    elapsed = time.perf_counter() - t
    mae = max(m for m, _ in res.mae.values())
    center = max(center_errors(res.rig, rig))
    verdict(3, mae <= 1e-4 and center <= 1e-4 and elapsed < 30, f"max MAE {mae:.2e} px, max center error {center:.2e} m, {elapsed:.1f} s")


def test_calibration_noise(verdict):
    t = time.perf_counter()
    sigma = 0.3
    res, _ = calibrate(200, sigma, seed=2)
    elapsed = time.perf_counter() - t
    # mean norm of a 2D isotropic Gaussian offset
    expected = sigma * math.sqrt(math.pi / 2)
    means = [m for m, _ in res.mae.values()]
    ok = all(0.2 <= m <= 0.5 and abs(m - expected) <= 0.15 * expected for m in means)
    verdict(4, ok and elapsed < 120, f"MAE {min(means):.3f}..{max(means):.3f} px, expected {expected:.3f}, {elapsed:.0f} s")


# --- 5, 6, 7: spiking network -----------------------------------------------------------

@pytest.fixture(scope="module")
def snn_run():
    t = time.perf_counter()
    data = synthesize_event_dataset(SNN_SAMPLES, seed=0)
    train_idx, test_idx = data.split(0.2)
    nets = {}
    for steps in (8, 32):
        cfg = NetworkConfig(steps=steps, beta=SNN_BETA, seed=0)
        nets[steps] = train(cfg, data, train_idx, SNN_EPOCHS, SNN_LR).net
    elapsed = time.perf_counter() - t
    reports = {steps: evaluate(net, data, test_idx) for steps, net in nets.items()}
    return data, train_idx, test_idx, nets, reports, elapsed


def test_snn_accuracy(verdict, snn_run):
    _, _, _, _, reports, elapsed = snn_run
    e8, e32 = reports[8].mean_error, reports[32].mean_error
    verdict(
        5, e32 <= 2.0 and e32 <= e8 and elapsed < 20 * 60,
        f"held-out error T=32 {e32:.2f} px (need <= 2.0), T=8 {e8:.2f} px, data + training {elapsed / 60:.1f} min",
    )


def test_snn_synops_monotone(verdict, snn_run):
    data, _, test_idx, nets, reports, _ = snn_run
    # the same trained weights driven by the same events binned into 8, 16 and 32 steps
    base = nets[32]
    ops = {}
    for steps in (8, 16, 32):
        net = SpikingNet(base.config.with_steps(steps))
        net.load_state_dict(base.state_dict())
        ops[steps] = evaluate(net, data, test_idx).mean_synops
    ok = ops[8] < ops[16] < ops[32]
    verdict(
        6, ok,
        f"SynOps per window {ops[8]:.3e} < {ops[16]:.3e} < {ops[32]:.3e}; "
        f"separately trained T=8 {reports[8].mean_synops:.3e}, T=32 {reports[32].mean_synops:.3e}",
    )


def test_snn_loss_activity(verdict, snn_run):
    data, train_idx, test_idx, _, _, _ = snn_run
    cfg = NetworkConfig(steps=8, beta=SNN_BETA, seed=0)
    rep = compare_loss_activity(cfg, data, train_idx, test_idx, epochs=COMPARE_EPOCHS, lr=SNN_LR)
    ratio = rep["synops_ratio_ce_over_mse"]
    verdict(
        7, ratio > 1.0 and rep["reproduced"] is True,
        f"SynOps CE {rep['ce']['synops']:.3e} / MSE {rep['mse']['synops']:.3e} = {ratio:.3f}, "
        f"{'reproduced' if rep['reproduced'] else 'not reproduced'}",
    )


# --- 8: surrogate gradient ----------------------------------------------------------------

def test_surrogate_gradient(verdict):
    errors = surrogate_gradient_check(draws=100, seed=0)
    verdict(8, len(errors) == 100 and errors.max() < 1e-4, f"max relative error {errors.max():.2e} over {len(errors)} draws")


# --- 9: event model ---------------------------------------------------------------------

def test_event_model_properties(verdict):
    C = 0.2
    static = np.full((16, 16), 0.4)
    n_static = len(generate_events([(0, static), (1000, static), (2000, static)], C))

    lo = np.full((4, 4), 0.3)
    hi = (lo + LOG_EPS) * math.exp(2 * C) - LOG_EPS
    step = generate_events([(0, lo), (1000, hi)], C)
    per_pixel = np.bincount(step.y * 4 + step.x, minlength=16)

    # a moving ball; doubling sweep so every larger threshold is a multiple of the smaller
    frames = [(i * 1000, disk_image(64, 48, (12.0 + 3.0 * i, 24.0), 8.0, 1.0, 0.2)) for i in range(12)]
    sweep = [0.05, 0.1, 0.2, 0.4, 0.8]
    counts = [len(generate_events(frames, c)) for c in sweep]
    ok = n_static == 0 and (per_pixel == 2).all() and all(a >= b for a, b in zip(counts, counts[1:]))
    verdict(9, ok, f"static {n_static}, 2C step {per_pixel.min()}..{per_pixel.max()} per pixel, counts over C {sweep}: {counts}")


# --- 10: determinism ---------------------------------------------------------------------

def data_files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != cli.MANIFEST_NAME}


def test_cli_manifest_determinism(verdict, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        "[simulate]\ntrajectories = 1\nduration = 0.03\n"
        "[events]\nsamples = 16\n"
        "[calibrate]\nposes = 20\nnoise_px = 0.3\n"
        "[spin]\nrates = [40, 190]\naxes = 2\n"
        "[snn]\nsteps = [8, 16]\nepochs = 1\nhidden = 32\nbatch = 8\ncompare_epochs = 1\n"
    )
    data = tmp_path / "first" / "events"
    weights = tmp_path / "first" / "snn_train"
    runs = [
        ("simulate", ["simulate"]),
        ("events", ["events"]),
        ("calibrate", ["calibrate"]),
        ("spin", ["spin"]),
        ("snn_train", ["snn", "train", "--data", data]),
        ("snn_eval", ["snn", "eval", "--data", data, "--weights-dir", weights]),
        ("snn_compare", ["snn", "compare", "--data", data]),
        ("report", ["report", "--source", tmp_path / "first" / "calibrate"]),
    ]
    failed = []
    for name, argv in runs:
        first, second = tmp_path / "first" / name, tmp_path / "second" / name
        code = cli.main([str(a) for a in ["--quiet", "--seed", 3, "--config", cfg, "--out", first, *argv]])
        replay = cli.main(["--quiet", "--manifest", str(first / cli.MANIFEST_NAME), "--out", str(second)])
        manifest = json.loads((first / cli.MANIFEST_NAME).read_text())
        if code != 0 or replay != 0 or not data_files(first) or data_files(first) != data_files(second):
            failed.append(name)
        elif set(manifest["outputs"]) != set(data_files(first)):
            failed.append(name + " (manifest)")
    verdict(10, not failed, f"{len(runs) - len(failed)}/{len(runs)} subcommands byte-identical on replay" + (f", differing: {failed}" if failed else ""))

