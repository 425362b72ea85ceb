"""CLI surface: commands, exit codes, artifact layout, and reruns."""

import json
import os

import pytest

from regen_tad.cli import EXIT_CONFIG, EXIT_DATA, main
from regen_tad.runconfig import ConfigError, parse_config_text

TINY_PIPELINE_CONFIG = """
# tiny end-to-end configuration for fast tests
seed = 5
scenario.dgp = iid-gaussian
scenario.t = 160
scenario.p = 5
pipeline.window_length = 10
pipeline.horizon = 3
pipeline.train_rows = 100
pipeline.calibration_rows = 130
backbone.conv_layers = 1
backbone.conv_filters = 6
backbone.embed_dim = 12
backbone.n_heads = 2
backbone.ff_width = 12
backbone.lstm_hidden = 4
backbone.latent_dim = 8
backbone.refine_hidden = 12
backbone.epochs = 3
purify.epochs = 2
purify.max_iterations = 1
decision.mode = rank
decision.alpha = 0.1
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(TINY_PIPELINE_CONFIG)
    return str(path)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


# -- config parsing ------------------------------------------------------------

def test_parse_config_round_trip():
    values = parse_config_text(TINY_PIPELINE_CONFIG)
    assert values["seed"] == 5
    assert values["scenario.dgp"] == "iid-gaussian"
    assert values["decision.alpha"] == 0.1


def test_unknown_key_rejected_with_name():
    with pytest.raises(ConfigError) as err:
        parse_config_text("scenario.dpg = iid-gaussian\n")
    assert "scenario.dpg" in str(err.value)


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("seed = 1\nseed = 2\n")


def test_list_values():
    values = parse_config_text("scoring.weights = 1, 1, 1, 1, 1, 1\nexperiment.gammas = 0.01,0.05\n")
    assert values["scoring.weights"] == [1.0] * 6
    assert values["experiment.gammas"] == [0.01, 0.05]


# -- simulate --------------------------------------------------------------------

def test_simulate_writes_files(tmp_path, config_file):
    out = tmp_path / "sim"
    code = main(["simulate", "--config", config_file, "--out", str(out)])
    assert code == 0
    assert sorted(os.listdir(out)) == ["manifest.json", "panel.csv", "truth.json"]
    with open(out / "panel.csv") as fh:
        header = fh.readline().strip().split(",")
    assert len(header) == 5
    assert sum(1 for _ in open(out / "panel.csv")) == 161


def test_simulate_deterministic_bytes(tmp_path, config_file):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", config_file, "--out", str(out1)]) == 0
    assert main(["simulate", "--config", config_file, "--out", str(out2)]) == 0
    assert read(out1 / "panel.csv") == read(out2 / "panel.csv")
    assert read(out1 / "truth.json") == read(out2 / "truth.json")


def test_simulate_bad_config_key_exit_2(tmp_path, config_file):
    bad = tmp_path / "bad.cfg"
    bad.write_text(TINY_PIPELINE_CONFIG + "\nscenario.bogus = 1\n")
    code = main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x")])
    assert code == EXIT_CONFIG


# -- detect -----------------------------------------------------------------------

@pytest.fixture
def sim_dir(tmp_path, config_file):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", config_file, "--out", str(out)]) == 0
    return out


def test_detect_writes_all_artifacts(tmp_path, config_file, sim_dir):
    out = tmp_path / "det"
    code = main([
        "detect", "--config", config_file, "--panel", str(sim_dir / "panel.csv"),
        "--out", str(out),
    ])
    assert code == 0
    names = sorted(os.listdir(out))
    assert names == [
        "attribution.json",
        "calibration.npz",
        "checkpoint.npz",
        "detections.csv",
        "detections_summary.json",
        "manifest.json",
        "scores.csv",
        "timings.csv",
    ]
    manifest = json.loads(read(out / "manifest.json"))
    assert manifest["status"] == "complete"
    assert "calibration_hash" in manifest
    with open(out / "scores.csv") as fh:
        header = fh.readline().strip().split(",")
    assert header[:3] == ["index", "s1", "s2"]
    assert "S_smoothed" in header


def test_detect_rank_mode_flag_count(tmp_path, config_file, sim_dir):
    out = tmp_path / "det"
    assert main([
        "detect", "--config", config_file, "--panel", str(sim_dir / "panel.csv"),
        "--out", str(out),
    ]) == 0
    summary = json.loads(read(out / "detections_summary.json"))
    assert summary["flagged"] == 3  # ceil(0.1 * 30)


def test_detect_rerun_byte_identical(tmp_path, config_file, sim_dir):
    out1, out2 = tmp_path / "d1", tmp_path / "d2"
    for out in (out1, out2):
        assert main([
            "detect", "--config", config_file, "--panel", str(sim_dir / "panel.csv"),
            "--out", str(out),
        ]) == 0
    for name in ("scores.csv", "detections.csv", "attribution.json", "manifest.json"):
        assert read(out1 / name) == read(out2 / name), name


def test_detect_missing_panel_exit_3(tmp_path, config_file):
    code = main([
        "detect", "--config", config_file, "--panel", str(tmp_path / "missing.csv"),
        "--out", str(tmp_path / "out"),
    ])
    assert code == EXIT_DATA


def test_detect_split_violation_exit_3(tmp_path, config_file, sim_dir):
    bad = tmp_path / "bad.cfg"
    bad.write_text(TINY_PIPELINE_CONFIG.replace("pipeline.train_rows = 100", "pipeline.train_rows = 150"))
    code = main([
        "detect", "--config", str(bad), "--panel", str(sim_dir / "panel.csv"),
        "--out", str(tmp_path / "out"),
    ])
    assert code == EXIT_DATA


def test_detect_mode_override(tmp_path, config_file, sim_dir):
    out = tmp_path / "det_thr"
    assert main([
        "detect", "--config", config_file, "--panel", str(sim_dir / "panel.csv"),
        "--out", str(out), "--mode", "threshold",
    ]) == 0
    summary = json.loads(read(out / "detections_summary.json"))
    assert summary["config"]["decision.mode"] == "threshold"


# -- attribute ----------------------------------------------------------------------

def test_attribute_roundtrip(tmp_path, config_file, sim_dir):
    det = tmp_path / "det"
    assert main([
        "detect", "--config", config_file, "--panel", str(sim_dir / "panel.csv"),
        "--out", str(det),
    ]) == 0
    out = tmp_path / "attr"
    code = main([
        "attribute", "--config", config_file, "--panel", str(sim_dir / "panel.csv"),
        "--run", str(det), "--out", str(out),
    ])
    assert code == 0
    redone = json.loads(read(out / "attribution.json"))
    original = json.loads(read(det / "attribution.json"))
    assert redone == original


# -- benchmark ----------------------------------------------------------------------

def test_benchmark_structural_smoke(tmp_path, config_file):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        TINY_PIPELINE_CONFIG
        + "\nexperiment.suites = structural"
        + "\nexperiment.mechanisms = mean-shift"
        + "\nexperiment.gammas = 0.08"
        + "\nexperiment.placements = tail"
        + "\nexperiment.replications = 2\n"
    )
    out = tmp_path / "bench"
    assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    suite = out / "structural"
    assert sorted(os.listdir(suite)) == ["overall.csv", "results.csv", "summary.csv", "timings.csv"]
    with open(suite / "results.csv") as fh:
        rows = fh.read().strip().splitlines()
    assert len(rows) == 3  # header + 2 replications
    manifest = json.loads(read(out / "manifest.json"))
    assert manifest["status"] == "complete"
    assert manifest["artifacts"] == ["structural"]


def test_benchmark_clean_fpr_table_shape(tmp_path, config_file):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        TINY_PIPELINE_CONFIG
        + "\nexperiment.suites = clean-fpr"
        + "\nexperiment.dgps = iid-gaussian, var1"
        + "\nexperiment.replications = 1\n"
    )
    out = tmp_path / "bench"
    assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    with open(out / "clean-fpr" / "fpr_by_dgp.csv") as fh:
        rows = fh.read().strip().splitlines()
    assert rows[0] == "dgp,n_replications,fpr"
    assert [r.split(",")[0] for r in rows[1:]] == ["iid-gaussian", "var1", "overall"]


def test_benchmark_aggregate_csvs_deterministic(tmp_path, config_file):
    cfg = tmp_path / "bench.cfg"
    cfg.write_text(
        TINY_PIPELINE_CONFIG
        + "\nexperiment.suites = structural"
        + "\nexperiment.mechanisms = mean-shift"
        + "\nexperiment.gammas = 0.08"
        + "\nexperiment.replications = 1\n"
    )
    out1, out2 = tmp_path / "b1", tmp_path / "b2"
    for out in (out1, out2):
        assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    for name in ("results.csv", "summary.csv", "overall.csv"):
        assert read(out1 / "structural" / name) == read(out2 / "structural" / name)


def test_simulate_mechanism_none_literal(tmp_path):
    cfg = tmp_path / "none.cfg"
    cfg.write_text(TINY_PIPELINE_CONFIG + "\nscenario.mechanism = none\nscenario.gamma = 0.1\n")
    out = tmp_path / "sim_none"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    truth = json.loads((out / "truth.json").read_text())
    assert truth["anomalous_rows"] == []
