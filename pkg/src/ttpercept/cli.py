"""Command-line entry point.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 configuration
error, 4 a module reported a domain error (for example a calibration that cannot
be initialised), 5 an input file could not be read or parsed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import re
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, TTPerceptError

MANIFEST_NAME = "run_manifest.json"
TABLE2_HEADER = ["time_steps", "error_px_mean", "error_px_std", "synops_per_forward", "samples", "networks"]
LOSS_HEADER = ["loss", "synops", "px_error", "spikes_l1", "spikes_l2", "spikes_l3", "spikes_l4"]
WEIGHTS_RE = re.compile(r"weights_T(\d+)\.snnw$")


class Run:
    """Output directory, seed and log switch shared by all subcommands."""

    def __init__(self, out: Path, seed: int, quiet: bool):
        self.out = out
        self.seed = seed
        self.quiet = quiet
        self.outputs: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def say(self, text: str) -> None:
        if not self.quiet:
            print(text)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


# --- simulate ----------------------------------------------------------------------

def _launch(rng: np.random.Generator, speed: Sequence[float], spin: Sequence[float]):
    from .physics import BallState

    p = np.array([rng.uniform(-1.3, -1.0), rng.uniform(-0.4, 0.4), rng.uniform(0.2, 0.45)])
    v = np.array([rng.uniform(*speed), rng.uniform(-0.6, 0.6), rng.uniform(0.0, 1.5)])
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return BallState(0.0, p, v, axis * rng.uniform(*spin) * 2 * math.pi)


def cmd_simulate(run: Run, cfg: dict) -> None:
    from .events import EventStream, merge_streams, write_events
    from .geometry import default_rig, project_points
    from .physics import PhysicsParams, simulate, write_trajectory
    from .snn.data import ball_events
    from .spindoe import default_pattern, synthesize_spin_images

    c = cfg["simulate"]
    if c["trajectories"] <= 0:
        raise ConfigError("[simulate] trajectories: must be positive")
    if len(c["speed"]) != 2 or len(c["spin_rps"]) != 2:
        raise ConfigError("[simulate] speed and spin_rps are [low, high] pairs")
    params = PhysicsParams()
    rig = default_rig()
    pattern = default_pattern()
    duration_us = int(round(c["duration"] * 1e6))
    for i in range(c["trajectories"]):
        rng = np.random.default_rng([run.seed, i])
        init = _launch(rng, c["speed"], c["spin_rps"])
        traj = simulate(init, params, c["duration"], 1e-3)
        write_trajectory(traj, run.path(f"traj_{i:03d}.csv"))
        if c["events"]:
            pos = np.array([s.position for s in traj])
            for cam in rig.cameras:
                if cam.kind != "event":
                    continue
                K = cam.intrinsics
                uv, front = project_points(pos, cam)
                chunks = [EventStream.empty(K.width, K.height)]
                if front.all() and np.all((uv > 0) & (uv < [K.width, K.height])):
                    for t0 in range(0, duration_us, c["chunk_us"]):
                        chunks.append(ball_events(traj, cam, t0, min(t0 + c["chunk_us"], duration_us), c["contrast"], params.radius))
                write_events(merge_streams(chunks), run.path(f"events_{i:03d}_{cam.name}.evs"))
        if c["images"]:
            n = max(3, int(c["duration"] * c["image_fps"]))
            imgs, truth = synthesize_spin_images(
                pattern, init.omega / max(np.linalg.norm(init.omega), 1e-12), init.spin_rps,
                fps=c["image_fps"], n_frames=n, damping=params.spin_damping, resolution=c["image_resolution"],
            )
            np.savez(
                run.path(f"images_{i:03d}.npz"),
                t=np.array([im.t for im in imgs]),
                images=np.stack([im.pixels for im in imgs]).astype(np.float32),
                orientation_wxyz=np.array([r.q for r in truth]),
            )
        run.say(f"trajectory {i}: {len(traj)} states, spin {init.spin_rps:.1f} rps")


# --- events ------------------------------------------------------------------------

def cmd_events(run: Run, cfg: dict) -> None:
    from .geometry import default_rig
    from .snn import synthesize_event_dataset

    c = cfg["events"]
    rig = default_rig()
    if c["camera"] not in rig.names:
        raise ConfigError(f"[events] camera: no camera named {c['camera']!r}")
    cam = rig[rig.names.index(c["camera"])]
    if cam.kind != "event":
        raise ConfigError(f"[events] camera: {c['camera']} is not an event camera")
    data = synthesize_event_dataset(c["samples"], run.seed, cam, c["window_us"], c["contrast"], c["noise_rate_hz"])
    data.save(run.path("dataset.npz"))
    n_ev = [len(w.t) for w in data.windows]
    run.say(f"{len(data)} windows, {np.mean(n_ev):.0f} events per window on average")


# --- calibrate ---------------------------------------------------------------------

def cmd_calibrate(run: Run, cfg: dict, args) -> None:
    from .ewand import (
        CalibrationProblem,
        WandGeometry,
        bundle_adjust,
        detect_markers,
        initialize_extrinsics,
        load_wand,
        random_wand_poses,
        read_detections,
        save_wand,
        simulate_wand_capture,
        write_detections,
        write_mae_table,
    )
    from .geometry import Rig, default_rig, load_rig, save_rig

    c = cfg["calibrate"]
    if c["localization"] not in ("blob", "events"):
        raise ConfigError("[calibrate] localization: must be 'blob' or 'events'")
    rig = _read_input(load_rig, args.rig) if args.rig else default_rig()
    if args.gauge:
        if args.gauge not in rig.names:
            raise ConfigError(f"--gauge: no camera named {args.gauge!r}")
        rig = Rig(rig.cameras, rig.names.index(args.gauge))
    wand = _read_input(load_wand, args.wand) if args.wand else WandGeometry()
    truth = None
    if args.detections:
        detections = _read_input(read_detections, args.detections)
    else:
        rng = np.random.default_rng(run.seed)
        poses = random_wand_poses(c["poses"], rng)
        cap = simulate_wand_capture(rig, wand, poses, noise_px=c["noise_px"], rng=rng, with_events=c["localization"] == "events")
        detections = detect_markers(cap, c["localization"])
        write_detections(detections, run.path("detections.csv"))
        save_rig(rig, run.path("rig_truth.json"))
        truth = rig
    save_wand(wand, run.path("wand.json"))
    problem = CalibrationProblem(rig, detections, wand)
    res = bundle_adjust(problem, initialize_extrinsics(problem), huber_delta=c["huber_px"], max_iterations=c["max_iterations"])
    save_rig(res.rig, run.path("rig_calibrated.json"))
    write_mae_table(res.mae, res.rig.names, run.path("mae.csv"))
    _csv(
        run.path("wand_poses.csv"), ["t", "px", "py", "pz", "ux", "uy", "uz"],
        [[repr(t)] + [repr(float(v)) for v in (*p.point, *p.direction)] for t, p in zip(res.sample_times, res.wand_poses)],
    )
    summary = {"converged": res.converged, "iterations": res.iterations, "samples": len(res.sample_times)}
    if truth is not None:
        aligned = truth.gauge_aligned()
        summary["camera_center_error_m"] = {
            a.name: float(np.linalg.norm(a.pose.center - b.pose.center)) for a, b in zip(res.rig.cameras, aligned.cameras)
        }
    _write_json(run.path("calibration.json"), summary)
    run.say("camera      mean_px   std_px")
    for name in res.rig.names:
        m, s = res.mae[name]
        run.say(f"{name:10s} {m:8.4f} {s:8.4f}")


# --- spin --------------------------------------------------------------------------

def cmd_spin(run: Run, cfg: dict) -> None:
    from .spindoe import default_pattern, random_axes, spin_sweep, summarize_sweep, write_sweep

    c = cfg["spin"]
    if c["rates"]:
        rates = list(c["rates"])
    elif c["rate_count"] > 0:
        rates = list(np.linspace(c["rate_min"], c["rate_max"], c["rate_count"]))
    else:
        rates = []
    if not rates:
        raise ConfigError("[spin] rates: the sweep is empty")
    if any(not 0 < r <= 250 for r in rates):
        raise ConfigError("[spin] rates: every rate must lie in (0, 250] rps")
    if c["axes"] <= 0:
        raise ConfigError("[spin] axes: must be positive")
    axes = random_axes(c["axes"], np.random.default_rng(run.seed))
    rows = spin_sweep(default_pattern(), rates, axes, c["fps"], c["resolution"], c["frames"], seed=run.seed)
    write_sweep(rows, run.path("spin_sweep.csv"))
    summary = summarize_sweep(rows, c["fps"])
    _write_json(run.path("spin_summary.json"), summary)
    run.say(
        f"{summary['accurate_within_limit']}/{summary['runs_within_limit']} runs within {summary['limit_rps']:.0f} rps accurate, "
        f"{summary['flagged_above_limit']}/{summary['runs_above_limit']} above it flagged"
    )


# --- snn ---------------------------------------------------------------------------

def _dataset(args):
    from .snn import EventDataset

    if not args.data:
        raise ConfigError("--data: a dataset directory or .npz file is required")
    p = Path(args.data)
    if p.is_dir():
        p = p / "dataset.npz"
    return _read_input(EventDataset.load, p)


def _net_config(c: dict, steps: int, seed: int):
    from .snn import NetworkConfig

    try:
        return NetworkConfig(
            conv1=tuple(c["conv1"]), conv2=tuple(c["conv2"]), hidden=c["hidden"], steps=steps,
            threshold=c["threshold"], beta=c["beta"], seed=seed,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[snn]: {exc}") from None


def _check_schedule(c: dict) -> None:
    from .snn.train import SCHEDULES

    if c["schedule"] not in SCHEDULES:
        raise ConfigError(f"[snn] schedule: must be one of {', '.join(SCHEDULES)}")


def _split(data, c: dict):
    if not 0 < c["test_fraction"] < 1:
        raise ConfigError("[snn] test_fraction: must lie in (0, 1)")
    return data.split(c["test_fraction"])


def cmd_snn_train(run: Run, cfg: dict, args) -> None:
    from .snn import save_weights, train, write_log

    c = cfg["snn"]
    if c["loss"] not in ("mse", "ce"):
        raise ConfigError("[snn] loss: must be 'mse' or 'ce'")
    _check_schedule(c)
    data = _dataset(args)
    tr, _ = _split(data, c)
    for steps in c["steps"]:
        if steps <= 0 or data.window_us % steps:
            raise ConfigError(f"[snn] steps: {steps} does not divide the {data.window_us} us window")
        config = _net_config(c, steps, run.seed)
        res = train(
            config, data, tr, c["epochs"], c["lr"], c["batch"], c["loss"], schedule=c["schedule"],
            progress=lambda row, s=steps: run.say(f"T={s} epoch {row['epoch']}: loss {row['loss']:.5f} px {row['px_error']:.2f}"),
        )
        save_weights(res.net, run.path(f"weights_T{steps}.snnw"))
        write_log(res.log, run.path(f"train_log_T{steps}.csv"))


def _weights_files(args, run: Run) -> list[Path]:
    if args.weights:
        return [Path(w) for w in args.weights]
    search = Path(args.weights_dir) if args.weights_dir else run.out
    found = [p for p in search.iterdir() if WEIGHTS_RE.search(p.name)]
    if not found:
        raise ConfigError(f"--weights: no weights_T*.snnw files in {search}")
    return sorted(found, key=lambda p: int(WEIGHTS_RE.search(p.name).group(1)))


def cmd_snn_eval(run: Run, cfg: dict, args) -> None:
    from .snn import evaluate, load_weights

    c = cfg["snn"]
    data = _dataset(args)
    _, te = _split(data, c)
    by_steps: dict[int, list] = {}
    for path in _weights_files(args, run):
        net = _read_input(load_weights, path)
        by_steps.setdefault(net.config.steps, []).append(net)
    rows = []
    for steps in sorted(by_steps):
        rep = evaluate(by_steps[steps], data, te)
        rows.append([steps, _fmt(rep.mean_error), _fmt(rep.std_error), _fmt(rep.mean_synops), rep.n_samples, rep.n_networks])
        run.say(f"T={steps:3d}  error {rep.mean_error:.3f} +- {rep.std_error:.3f} px  SynOps {rep.mean_synops:.3e}")
    _csv(run.path("table2.csv"), TABLE2_HEADER, rows)


def cmd_snn_compare(run: Run, cfg: dict, args) -> None:
    from .snn import compare_loss_activity

    c = cfg["snn"]
    _check_schedule(c)
    data = _dataset(args)
    tr, te = _split(data, c)
    config = _net_config(c, c["compare_steps"], run.seed)
    rep = compare_loss_activity(config, data, tr, te, c["compare_epochs"], c["lr"], c["batch"], c["schedule"])
    rows = [
        [loss, _fmt(rep[loss]["synops"]), _fmt(rep[loss]["px_error"])] + [_fmt(v) for v in rep[loss]["spikes"]]
        for loss in ("mse", "ce")
    ]
    _csv(run.path("loss_activity.csv"), LOSS_HEADER, rows)
    _write_json(run.path("loss_activity.json"), rep)
    verdict = "reproduced" if rep["reproduced"] else "NOT reproduced"
    run.say(f"SynOps CE/MSE = {rep['synops_ratio_ce_over_mse']:.3f} ({verdict})")


# --- report ------------------------------------------------------------------------

def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(run: Run, cfg: dict, args) -> None:
    src = Path(args.source) if args.source else run.out
    lines = []
    if (src / "mae.csv").exists():
        lines += ["Reprojection error (MAE) in pixels", "camera      mean +- std"]
        for r in _read_csv(src / "mae.csv"):
            lines.append(f"{r['camera']:10s}  {float(r['mean_px']):.3f} +- {float(r['std_px']):.3f}")
        lines.append("")
    if (src / "table2.csv").exists():
        lines += ["SNN detection", "T    error [px]        SynOps"]
        for r in _read_csv(src / "table2.csv"):
            lines.append(f"{int(r['time_steps']):<4d} {float(r['error_px_mean']):.2f} +- {float(r['error_px_std']):.2f}   {float(r['synops_per_forward']):.3e}")
        lines.append("")
    if (src / "loss_activity.json").exists():
        rep = json.loads((src / "loss_activity.json").read_text())
        lines += [
            "Loss and activity",
            f"MSE SynOps {rep['mse']['synops']:.3e}, CE SynOps {rep['ce']['synops']:.3e}, "
            f"ratio {rep['synops_ratio_ce_over_mse']:.3f}, {'reproduced' if rep['reproduced'] else 'not reproduced'}",
            "",
        ]
    if (src / "spin_summary.json").exists():
        s = json.loads((src / "spin_summary.json").read_text())
        lines += [
            "Spin sweep",
            f"accurate below {s['limit_rps']:.0f} rps: {s['accurate_within_limit']}/{s['runs_within_limit']}, "
            f"flagged above: {s['flagged_above_limit']}/{s['runs_above_limit']}",
            "",
        ]
    if not lines:
        raise ConfigError(f"--source: no result files in {src}")
    run.path("report.txt").write_text("\n".join(lines))
    run.say("\n".join(lines).rstrip())


# --- plumbing ----------------------------------------------------------------------

def _read_input(reader, path):
    try:
        return reader(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


class InputError(Exception):
    pass


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(None), help="random seed (default: 0)")
    parser.add_argument("--out", default=d("."), help="output directory (default: current directory)")
    parser.add_argument("--config", default=d(None), help="TOML run configuration")
    parser.add_argument("--quiet", action="store_true", default=d(False), help="no progress output")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    p = argparse.ArgumentParser(prog="ttpercept", description="Table-tennis perception toolkit on synthetic data.")
    _global_flags(p, suppress=False)
    p.add_argument("--manifest", help="replay the run recorded in this manifest")
    p.add_argument("--version", action="version", version=f"ttpercept {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.add_parser("simulate", parents=[common], help="ball flights, event streams and spin images")
    sub.add_parser("events", parents=[common], help="event-window dataset for the detector")
    cal = sub.add_parser("calibrate", parents=[common], help="wand calibration of the camera rig")
    cal.add_argument("--detections", help="marker detections CSV (default: simulate a capture)")
    cal.add_argument("--wand", help="wand geometry JSON")
    cal.add_argument("--rig", help="rig JSON supplying intrinsics")
    cal.add_argument("--gauge", help="name of the camera that fixes the world frame")
    sub.add_parser("spin", parents=[common], help="spin-rate sweep of the image pipeline")
    snn = sub.add_parser("snn", help="spiking detector")
    snn_sub = snn.add_subparsers(dest="snn_command", metavar="action")
    for name, text in (("train", "train one network per time-step count"), ("eval", "held-out error and SynOps"), ("compare", "MSE vs cross-entropy activity")):
        sp = snn_sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--data", help="dataset directory or .npz")
        if name == "eval":
            sp.add_argument("--weights", nargs="+", help="weights files")
            sp.add_argument("--weights-dir", help="directory with weights_T*.snnw (default: --out)")
    rep = sub.add_parser("report", parents=[common], help="tables from result files")
    rep.add_argument("--source", help="directory with results (default: --out)")
    return p


SECTIONS = {"simulate": "simulate", "events": "events", "calibrate": "calibrate", "spin": "spin", "snn": "snn", "report": None}


def _dispatch(args, run: Run) -> None:
    section = SECTIONS[args.command]
    cfg = load_config(args.config, (section,) if section else ())
    if args.command == "simulate":
        cmd_simulate(run, cfg)
    elif args.command == "events":
        cmd_events(run, cfg)
    elif args.command == "calibrate":
        cmd_calibrate(run, cfg, args)
    elif args.command == "spin":
        cmd_spin(run, cfg)
    elif args.command == "report":
        cmd_report(run, cfg, args)
    else:
        {"train": cmd_snn_train, "eval": cmd_snn_eval, "compare": cmd_snn_compare}[args.snn_command](run, cfg, args)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _strip_out(argv: Sequence[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--out":
            skip = True
        elif not a.startswith("--out="):
            out.append(a)
    return out


def _write_manifest(run: Run, args, argv: Sequence[str]) -> None:
    config_text = Path(args.config).read_bytes() if args.config else b""
    manifest = {
        "subcommand": args.command if args.command != "snn" else f"snn {args.snn_command}",
        "argv": _strip_out(argv),
        "config": args.config,
        "config_sha256": hashlib.sha256(config_text).hexdigest(),
        "seed": run.seed,
        "out": str(run.out),
        "version": __version__,
        "outputs": {p.name: _sha256(p) for p in sorted(set(run.outputs))},
        "created_unix": time.time(),
    }
    _write_json(run.out / MANIFEST_NAME, manifest)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.manifest:
        try:
            recorded = json.loads(Path(args.manifest).read_text())["argv"]
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: cannot read manifest {args.manifest}: {exc}", file=sys.stderr)
            return 5
        argv = ["--out", args.out] + list(recorded)
        args = parser.parse_args(argv)
    if args.command is None or (args.command == "snn" and args.snn_command is None):
        parser.print_usage(sys.stderr)
        print("error: a command is required", file=sys.stderr)
        return 2
    run = Run(Path(args.out), 0 if args.seed is None else args.seed, args.quiet)
    try:
        _dispatch(args, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 5
    except TTPerceptError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    _write_manifest(run, args, argv)
    return 0


if __name__ == "__main__":
    sys.exit(main())
