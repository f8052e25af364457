"""End-to-end command line checks: config plumbing, artifact layout,
manifests, and repeatability. Commands run in-process via main(argv)."""

import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from subpgd import LinearClassifier, save_model
from subpgd.cli import main as cli_main


def run_cli(argv):
    try:
        return cli_main([str(a) for a in argv])
    except SystemExit as e:
        return e.code


def write_config(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f)
    return str(path)


SYNTH = {"kind": "synthetic", "n": 8, "per_class": 30, "separation": 1.2,
         "seed": 1}


@pytest.fixture
def linear_ckpt(tmp_path):
    rng = np.random.default_rng(3)
    model = LinearClassifier(w=rng.standard_normal(8), b=0.1)
    path = tmp_path / "linear.npz"
    save_model(model, path)
    return str(path)


# ---------------------------------------------------------------------------
# config plumbing

def test_cli_missing_config_file(tmp_path, capsys):
    assert run_cli(["train", "--config", tmp_path / "nope.json"]) == 2
    assert "config file not found" in capsys.readouterr().err


def test_cli_invalid_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run_cli(["train", "--config", p]) == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_cli_rejects_unknown_top_level_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {
        "dataset": SYNTH, "model": {"kind": "linear"}, "train": {},
        "typo_key": 1})
    assert run_cli(["train", "--config", cfg]) == 2
    assert "unknown top-level keys: typo_key" in capsys.readouterr().err


def test_cli_rejects_unknown_section_key(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {
        "dataset": {**SYNTH, "epsilon": 0.1},
        "model": {"kind": "linear"}, "train": {}})
    assert run_cli(["train", "--config", cfg]) == 2
    assert "unknown keys: epsilon" in capsys.readouterr().err


def test_cli_rejects_missing_section(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"model": {"kind": "linear"}})
    assert run_cli(["train", "--config", cfg]) == 2
    assert "missing the 'dataset' section" in capsys.readouterr().err


def test_cli_set_requires_key_value(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {
        "dataset": SYNTH, "model": {"kind": "linear"}, "train": {}})
    assert run_cli(["train", "--config", cfg, "--set", "oops"]) == 2
    assert "--set expects key=value" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train

def test_cli_train_linear_writes_artifacts(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "c.json", {
        "out_dir": str(out), "dataset": SYNTH,
        "model": {"kind": "linear"},
        "train": {"epochs": 5, "lr": 0.5, "seed": 0}})
    assert run_cli(["train", "--config", cfg]) == 0
    assert (out / "model.npz").exists()
    doc = json.loads((out / "train-manifest.json").read_text())
    assert doc["command"] == "train"
    assert doc["outputs"] == [str(out / "model.npz")]
    assert doc["extra"]["best_accuracy"] > 0.9
    assert "wall_clock_s" in doc


def test_cli_train_mlp_with_val_fraction_and_overrides(tmp_path):
    out = tmp_path / "out"
    cfg = write_config(tmp_path / "c.json", {
        "out_dir": str(out), "dataset": SYNTH,
        "model": {"kind": "mlp", "hidden": [8], "seed": 0},
        "train": {"epochs": 2, "lr": 0.1, "seed": 0, "val_fraction": 0.25}})
    assert run_cli(["train", "--config", cfg,
                    "--set", "train.epochs=4",
                    "--set", "model.hidden=[6]"]) == 0
    doc = json.loads((out / "train-manifest.json").read_text())
    # overrides land in the recorded config
    assert doc["config"]["train"]["epochs"] == 4
    assert doc["config"]["model"]["hidden"] == [6]
    assert doc["extra"]["epochs_run"] == 4


def test_cli_train_unknown_model_kind(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {
        "out_dir": str(tmp_path / "o"), "dataset": SYNTH,
        "model": {"kind": "transformer"}, "train": {}})
    assert run_cli(["train", "--config", cfg]) == 2
    assert "unknown model kind" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# attack

def attack_config(tmp_path, ckpt, **attack):
    out = tmp_path / "out"
    body = {"epsilon": 0.4, "d": 4, "steps": 5, "p": "inf", "seed": 2}
    body.update(attack)
    return write_config(tmp_path / "a.json", {
        "out_dir": str(out), "dataset": SYNTH, "checkpoint": ckpt,
        "attack": body}), out


def test_cli_attack_prints_trace_and_writes_manifest(tmp_path, linear_ckpt,
                                                     capsys):
    cfg, out = attack_config(tmp_path, linear_ckpt)
    assert run_cli(["attack", "--config", cfg]) == 0
    got = capsys.readouterr().out
    assert "step,loss,norm,support" in got
    assert "# success=" in got
    trace = (out / "attack-trace.csv").read_text().strip().splitlines()
    assert trace[0] == "step,loss,norm,support"
    assert len(trace) == 1 + 5
    doc = json.loads((out / "attack-manifest.json").read_text())
    assert doc["command"] == "attack"
    assert "success" in doc["extra"]


def test_cli_attack_requires_checkpoint(tmp_path, capsys):
    cfg = write_config(tmp_path / "a.json", {
        "dataset": SYNTH, "attack": {"epsilon": 0.1, "d": 2}})
    assert run_cli(["attack", "--config", cfg]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_cli_attack_index_out_of_range(tmp_path, linear_ckpt, capsys):
    cfg, _ = attack_config(tmp_path, linear_ckpt, index=10_000)
    assert run_cli(["attack", "--config", cfg]) == 2
    assert "out of range" in capsys.readouterr().err


def test_cli_attack_grassmannian_needs_l2(tmp_path, linear_ckpt, capsys):
    cfg, _ = attack_config(tmp_path, linear_ckpt, sampler="grassmannian")
    assert run_cli(["attack", "--config", cfg]) == 2
    assert "requires p = 2" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# sweep and plot

def sweep_config(tmp_path, ckpt, out_name="out", **sweep):
    out = tmp_path / out_name
    body = {"p": "inf", "eps": {"lo": 0.05, "hi": 0.5, "k": 3},
            "d_grid": [2, 5, 8], "steps": 4, "seed": 6}
    body.update(sweep)
    return write_config(tmp_path / f"{out_name}.json", {
        "out_dir": str(out), "dataset": SYNTH, "checkpoint": ckpt,
        "sweep": body}), out


def test_cli_sweep_writes_csv_svg_manifest(tmp_path, linear_ckpt):
    cfg, out = sweep_config(tmp_path, linear_ckpt)
    assert run_cli(["sweep", "--config", cfg]) == 0
    assert (out / "sweep-pgd-pinf.csv").exists()
    assert (out / "sweep-pgd-pinf-none.svg").exists()
    assert (out / "sweep-pgd-pinf-power.svg").exists()
    doc = json.loads((out / "sweep-pgd-pinf-manifest.json").read_text())
    assert set(doc["extra"]["collapse_scores"]) == {"none", "power"}
    assert len(doc["extra"]["fingerprint"]) == 16


def test_cli_sweep_repeat_is_byte_identical(tmp_path, linear_ckpt):
    cfg_a, out_a = sweep_config(tmp_path, linear_ckpt, out_name="a")
    cfg_b, out_b = sweep_config(tmp_path, linear_ckpt, out_name="b")
    assert run_cli(["sweep", "--config", cfg_a]) == 0
    assert run_cli(["sweep", "--config", cfg_b]) == 0
    a = (out_a / "sweep-pgd-pinf.csv").read_bytes()
    b = (out_b / "sweep-pgd-pinf.csv").read_bytes()
    assert a == b


def test_cli_sweep_eps_list_and_oracle_mode(tmp_path, linear_ckpt):
    cfg, out = sweep_config(tmp_path, linear_ckpt, eps=[0.1, 0.3],
                            mode="oracle")
    assert run_cli(["sweep", "--config", cfg]) == 0
    assert (out / "sweep-oracle-pinf.csv").exists()


def test_cli_sweep_rejects_unknown_eps_keys(tmp_path, linear_ckpt, capsys):
    cfg, _ = sweep_config(tmp_path, linear_ckpt,
                          eps={"lo": 0.1, "hi": 0.5, "k": 3, "base": 10})
    assert run_cli(["sweep", "--config", cfg]) == 2
    assert "unknown keys: base" in capsys.readouterr().err


def test_cli_sweep_rejects_oversized_d(tmp_path, linear_ckpt, capsys):
    cfg, _ = sweep_config(tmp_path, linear_ckpt, d_grid=[2, 64])
    assert run_cli(["sweep", "--config", cfg]) == 2
    assert "d grid reaches" in capsys.readouterr().err


def test_cli_plot_rerenders_from_csv(tmp_path, linear_ckpt):
    cfg, out = sweep_config(tmp_path, linear_ckpt)
    assert run_cli(["sweep", "--config", cfg]) == 0
    svg = tmp_path / "replot.svg"
    assert run_cli(["plot", "--csv", out / "sweep-pgd-pinf.csv",
                    "--out", svg, "--ambient-dim", 8,
                    "--title", "replotted"]) == 0
    root = ET.parse(svg).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 3


# ---------------------------------------------------------------------------
# verify

def test_cli_verify_quantiles_suite(tmp_path, capsys):
    report = tmp_path / "report.json"
    assert run_cli(["verify", "--suite", "quantiles", "--out", report]) == 0
    doc = json.loads(report.read_text())
    assert doc["all_pass"] is True
    assert all(c["pass"] for c in doc["checks"])
    assert "[ok ]" in capsys.readouterr().err


def test_cli_verify_scaling_exact_suite(tmp_path):
    report = tmp_path / "report.json"
    assert run_cli(["verify", "--suite", "scaling-exact", "--out", report]) == 0
    doc = json.loads(report.read_text())
    assert doc["all_pass"] is True
