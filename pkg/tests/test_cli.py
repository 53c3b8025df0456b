import csv
import json

import pytest

from ttpercept import cli
from ttpercept.config import parse_config
from ttpercept.errors import ConfigError
from ttpercept.events import read_events
from ttpercept.physics import read_trajectory
from ttpercept.snn import EventDataset


def run(*argv):
    return cli.main([str(a) for a in argv])


def data_files(d):
    """Every output except the manifest, whose creation time differs between runs."""
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != cli.MANIFEST_NAME}


def write(path, text):
    path.write_text(text)
    return path


# --- config ------------------------------------------------------------------------


def test_config_defaults_and_coercion():
    cfg = parse_config("[spin]\nrates = [5, 50]\nfps = 350\n", ("spin", "snn"))
    assert cfg["spin"]["rates"] == [5.0, 50.0] and isinstance(cfg["spin"]["fps"], float)
    assert cfg["snn"]["steps"] == [8, 16, 32]
    assert parse_config("[snn]\nsteps = 16\n", ("snn",))["snn"]["steps"] == [16]


@pytest.mark.parametrize(
    "text,needle",
    [
        ("[simulate]\nduration = 0.1\n", "trajectories"),
        ("[spin]\nfsp = 3\n", "fsp"),
        ("[spin]\nfps = 'fast'\n", "fps"),
        ("[calibrate]\nposes = true\n", "poses"),
        ("[bogus]\na = 1\n", "bogus"),
        ("[spin\n", "line 1"),
    ],
)
def test_config_errors_name_the_field(text, needle):
    section = "simulate" if "simulate" in text else "spin" if "spin" in text else "calibrate"
    with pytest.raises(ConfigError, match=needle):
        parse_config(text, (section,))


# --- exit codes --------------------------------------------------------------------


def test_unknown_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run("nonsense")
    assert exc.value.code == 2
    assert run() == 2
    assert run("snn") == 2


def test_missing_required_field_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "c.toml", "[simulate]\nduration = 0.1\n")
    assert run("--out", tmp_path / "o", "--config", cfg, "simulate") == 3
    assert "trajectories" in capsys.readouterr().err


def test_unreadable_input_exit_code(tmp_path, capsys):
    assert run("calibrate", "--out", tmp_path, "--detections", tmp_path / "missing.csv") == 5


def test_domain_error_exit_code(tmp_path):
    # a single wand pose cannot initialise the rig
    cfg = write(tmp_path / "c.toml", "[calibrate]\nposes = 1\n")
    assert run("calibrate", "--quiet", "--out", tmp_path / "o", "--config", cfg) == 4


# --- simulate ----------------------------------------------------------------------


def test_simulate_minimal_and_reproducible(tmp_path):
    cfg = write(tmp_path / "c.toml", "[simulate]\ntrajectories = 1\nduration = 0.05\n")
    for name in ("a", "b"):
        assert run("--quiet", "--seed", 4, "--out", tmp_path / name, "--config", cfg, "simulate") == 0
    a = data_files(tmp_path / "a")
    assert sorted(a) == ["events_000_event_0.evs", "events_000_event_1.evs", "images_000.npz", "traj_000.csv"]
    assert a == data_files(tmp_path / "b")
    traj = read_trajectory(tmp_path / "a" / "traj_000.csv")
    assert traj[-1].t == pytest.approx(0.05)
    assert len(read_events(tmp_path / "a" / "events_000_event_0.evs")) > 0
    manifest = json.loads((tmp_path / "a" / cli.MANIFEST_NAME).read_text())
    assert manifest["subcommand"] == "simulate" and manifest["seed"] == 4
    assert set(manifest["outputs"]) == set(a)


def test_manifest_replay_is_byte_identical(tmp_path):
    cfg = write(tmp_path / "c.toml", "[simulate]\ntrajectories = 1\nduration = 0.03\nimages = false\n")
    assert run("--quiet", "--seed", 9, "--out", tmp_path / "a", "--config", cfg, "simulate") == 0
    assert run("--manifest", tmp_path / "a" / cli.MANIFEST_NAME, "--out", tmp_path / "b") == 0
    assert data_files(tmp_path / "a") == data_files(tmp_path / "b")


# --- events and snn ----------------------------------------------------------------


@pytest.fixture(scope="module")
def snn_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("snn")
    cfg = write(d / "c.toml", "[events]\nsamples = 20\n[snn]\nsteps = [8, 16]\nepochs = 1\nhidden = 32\nbatch = 8\ncompare_epochs = 1\n")
    assert run("--quiet", "--out", d / "data", "--config", cfg, "events") == 0
    assert run("snn", "train", "--quiet", "--out", d / "train", "--config", cfg, "--data", d / "data") == 0
    return d, cfg


def test_events_dataset(snn_dir):
    d, _ = snn_dir
    data = EventDataset.load(d / "data" / "dataset.npz")
    assert len(data) == 20 and data.window_us == 8000


def test_snn_train_and_eval_table(snn_dir):
    d, cfg = snn_dir
    names = sorted(p.name for p in (d / "train").iterdir())
    assert "weights_T8.snnw" in names and "train_log_T16.csv" in names
    assert run("snn", "eval", "--quiet", "--out", d / "eval", "--config", cfg, "--data", d / "data", "--weights-dir", d / "train") == 0
    with open(d / "eval" / "table2.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["time_steps"]) for r in rows] == [8, 16]
    assert list(rows[0]) == cli.TABLE2_HEADER
    assert all(float(r["error_px_mean"]) >= 0 for r in rows)


def test_snn_eval_three_rows(snn_dir, tmp_path):
    d, _ = snn_dir
    cfg = write(tmp_path / "c.toml", "[snn]\nsteps = [8, 16, 32]\nepochs = 1\nhidden = 16\nbatch = 8\n")
    assert run("snn", "train", "--quiet", "--out", tmp_path / "w", "--config", cfg, "--data", d / "data") == 0
    assert run("snn", "eval", "--quiet", "--out", tmp_path / "w", "--config", cfg, "--data", d / "data") == 0
    lines = (tmp_path / "w" / "table2.csv").read_text().splitlines()
    assert len(lines) == 4 and [line.split(",")[0] for line in lines[1:]] == ["8", "16", "32"]


def test_snn_train_is_byte_identical(snn_dir, tmp_path):
    d, cfg = snn_dir
    assert run("snn", "train", "--quiet", "--out", tmp_path / "again", "--config", cfg, "--data", d / "data") == 0
    assert data_files(d / "train") == data_files(tmp_path / "again")


def test_snn_compare_and_report(snn_dir, tmp_path):
    d, cfg = snn_dir
    assert run("snn", "compare", "--quiet", "--out", tmp_path, "--config", cfg, "--data", d / "data") == 0
    rep = json.loads((tmp_path / "loss_activity.json").read_text())
    assert rep["synops_ratio_ce_over_mse"] == pytest.approx(rep["ce"]["synops"] / rep["mse"]["synops"])
    assert run("report", "--quiet", "--out", tmp_path) == 0
    assert "ratio" in (tmp_path / "report.txt").read_text()


def test_snn_requires_data(tmp_path):
    assert run("snn", "train", "--quiet", "--out", tmp_path) == 3


def test_snn_unknown_schedule(snn_dir, tmp_path):
    d, _ = snn_dir
    cfg = write(tmp_path / "c.toml", "[snn]\nschedule = 'step'\n")
    assert run("snn", "train", "--quiet", "--out", tmp_path, "--config", cfg, "--data", d / "data") == 3


# --- calibrate, spin, report -------------------------------------------------------


def test_calibrate_report_has_six_rows(tmp_path):
    assert run("calibrate", "--quiet", "--out", tmp_path / "a") == 0
    with open(tmp_path / "a" / "mae.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 and set(rows[0]) == {"camera", "mean_px", "std_px"}
    assert all(float(r["mean_px"]) <= 1e-4 for r in rows)
    summary = json.loads((tmp_path / "a" / "calibration.json").read_text())
    assert max(summary["camera_center_error_m"].values()) <= 1e-4
    # recalibrating from the written detections with another gauge camera
    assert run("calibrate", "--quiet", "--out", tmp_path / "b", "--detections", tmp_path / "a" / "detections.csv", "--gauge", "event_0") == 0
    rig = json.loads((tmp_path / "b" / "rig_calibrated.json").read_text())
    assert rig["gauge"] == 4
    assert run("report", "--quiet", "--out", tmp_path / "a") == 0
    assert "frame_0" in (tmp_path / "a" / "report.txt").read_text()


def test_calibrate_unknown_gauge(tmp_path):
    assert run("calibrate", "--quiet", "--out", tmp_path, "--gauge", "nope") == 3


def test_spin_sweep_outputs(tmp_path):
    cfg = write(tmp_path / "c.toml", "[spin]\nrates = [30, 200]\naxes = 2\n")
    assert run("spin", "--quiet", "--out", tmp_path / "a", "--config", cfg) == 0
    assert run("spin", "--quiet", "--out", tmp_path / "b", "--config", cfg) == 0
    assert data_files(tmp_path / "a") == data_files(tmp_path / "b")
    with open(tmp_path / "a" / "spin_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    low = [r for r in rows if float(r["rate_rps"]) == 30]
    assert all(float(r["rate_error_pct"]) < 2 for r in low)
    summary = json.loads((tmp_path / "a" / "spin_summary.json").read_text())
    assert summary["runs_within_limit"] == 2 and summary["runs_above_limit"] == 2


@pytest.mark.parametrize("text", ["[spin]\nrate_count = 0\n", "[spin]\nrates = [300]\n", "[spin]\nrates = [-5]\n"])
def test_spin_bad_sweep(tmp_path, text):
    cfg = write(tmp_path / "c.toml", text)
    assert run("spin", "--quiet", "--out", tmp_path / "o", "--config", cfg) == 3


def test_report_without_results(tmp_path):
    assert run("report", "--quiet", "--out", tmp_path) == 3


def test_rig_json_gauge_field(tmp_path):
    assert run("calibrate", "--quiet", "--out", tmp_path) == 0
    rig = json.loads((tmp_path / "rig_truth.json").read_text())
    assert len(rig["cameras"]) == 6 and rig["gauge"] == 0
