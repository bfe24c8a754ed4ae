import csv
import json

import numpy as np
import pytest
import yaml

from occgan.cli import main
from occgan.data import synth_frames, write_idx, write_pgm, AnomalySpec
from occgan.experiment import ConfigError, parse_config

BLOBS = {
    "dataset": {"kind": "blobs", "n": 300, "dim": 8},
    "model": {"latent_dim": 2, "g_hidden": [16], "d_hidden": [12]},
    "phase1": {"batch_size": 32, "eta": 1.25, "max_epochs": 20},
    "phase2": {"iterations": 40, "log_every": 10, "batch_size": 16, "probe_size": 32},
    "baseline": {"epochs": 2},
    "seed": 0,
}


def write_config(tmp_path, cfg, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("train")
    cfg = write_config(tmp, BLOBS)
    out = tmp / "run"
    code = main(["train", "--config", str(cfg), "--out", str(out)])
    return code, cfg, out


def test_train_writes_artifacts(trained):
    code, _, out = trained
    assert code == 0
    for name in ("g_old.ckpt", "g_new.ckpt", "d.ckpt", "phase1_trace.csv", "phase2_trace.csv",
                 "scores.csv", "report.json", "manifest.json"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    for key in ("config_hash", "seed", "git_revision", "eta_achieved", "p_burn_in"):
        assert key in manifest
    rows = read_csv(out / "phase1_trace.csv")
    assert list(rows[0]) == ["iteration", "l_r_live", "l_r_old", "l_r_new", "ratio", "event"]


def test_rerun_reproduces_reports_byte_for_byte(trained, tmp_path):
    _, cfg, out = trained
    again = tmp_path / "again"
    assert main(["train", "--config", str(cfg), "--out", str(again)]) == 0
    for name in ("report.json", "scores.csv", "phase2_trace.csv", "g_new.ckpt", "d.ckpt"):
        assert (out / name).read_bytes() == (again / name).read_bytes(), name
    m1 = json.loads((out / "manifest.json").read_text())
    m2 = json.loads((again / "manifest.json").read_text())
    assert (m1["g_new_hash"], m1["d_hash"]) == (m2["g_new_hash"], m2["d_hash"])


def test_eval_twice_is_identical(trained):
    _, cfg, out = trained
    assert main(["eval", "--config", str(cfg), "--run", str(out)]) == 0
    first = (out / "eval_report_proposed.json").read_bytes()
    assert main(["eval", "--config", str(cfg), "--run", str(out)]) == 0
    assert (out / "eval_report_proposed.json").read_bytes() == first
    assert json.loads(first)["mode"] == "proposed"


def test_eval_rejects_architecture_mismatch(trained, tmp_path):
    _, _, out = trained
    other = dict(BLOBS, model={"latent_dim": 3, "g_hidden": [16], "d_hidden": [12]})
    cfg = write_config(tmp_path, other, "other.yaml")
    assert main(["eval", "--config", str(cfg), "--run", str(out)]) == 1


def test_baseline_and_proposed_reports_keyed_by_mode(tmp_path):
    cfg = write_config(tmp_path, BLOBS)
    for mode in ("proposed", "baseline"):
        assert main(["train", "--config", str(cfg), "--mode", mode, "--out", str(tmp_path / mode)]) == 0
        report = json.loads((tmp_path / mode / "report.json").read_text())
        assert report["mode"] == mode and set(report["metrics"]) == {"auc", "eer", "f1", "acc"}
    base = json.loads((tmp_path / "baseline" / "manifest.json").read_text())
    prop = json.loads((tmp_path / "proposed" / "manifest.json").read_text())
    assert base["config_hash"] != prop["config_hash"]


def test_score_unlabeled_input(trained, tmp_path):
    _, cfg, out = trained
    x = (np.random.default_rng(0).uniform(size=(5, 2, 4)) * 255).astype(np.uint8)
    idx = tmp_path / "inputs-idx3-ubyte"
    write_idx(idx, x, compress=False)
    target = tmp_path / "scored.csv"
    assert main(["score", "--config", str(cfg), "--run", str(out), "--input", str(idx), "--out", str(target)]) == 0
    rows = read_csv(target)
    assert len(rows) == 5 and all(r["label"] == "" for r in rows)
    assert all(0.0 < float(r["score"]) < 1.0 for r in rows)


def test_missing_path_names_the_field(tmp_path, capsys):
    cfg = write_config(tmp_path, {"dataset": {"kind": "idx"}})
    assert main(["train", "--config", str(cfg)]) == 1
    assert "dataset" in capsys.readouterr().err
    with pytest.raises(ConfigError) as info:
        parse_config({"dataset": {"kind": "csv", "path": "x.csv"}, "phase1": {"eta": 0.5, "colour": 1}})
    text = "\n".join(info.value.errors)
    assert "schema_path" in text and "colour" in text


def test_unreached_eta_exits_with_artifacts(tmp_path):
    cfg = write_config(tmp_path, dict(BLOBS, phase1={"batch_size": 32, "eta": 1e6, "max_epochs": 3}))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 3
    assert (out / "manifest.json").exists() and (out / "g_new.ckpt").exists()


def test_ablation_grid(tmp_path):
    cfg = write_config(tmp_path, BLOBS)
    out = tmp_path / "abl"
    assert main(["ablate", "--config", str(cfg), "--seeds", "0,1", "--out", str(out)]) == 0
    rows = read_csv(out / "ablation.csv")
    combos = {r["configuration"] for r in rows}
    assert {"Xn+Xo", "X+Xn+Xo", "X+Xn+Pn", "X+Xn+Xo+Po", "X+Xn+Pn+Po", "full"} <= combos
    assert len(rows) == 2 * len(combos)
    for seed in ("0", "1"):
        hashes = {(r["g_old_hash"], r["g_new_hash"]) for r in rows if r["seed"] == seed}
        assert len(hashes) == 1


def test_sweep_command(tmp_path):
    cfg = write_config(tmp_path, BLOBS)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--axis", "outlier_ratio", "--values", "0.1,0.5",
                 "--out", str(out)]) == 0
    rows = read_csv(out / "sweep.csv")
    assert [r["axis_value"] for r in rows] == ["0.1", "0.5"]
    assert (out / "manifest.json").exists()


def write_clip(directory, n, anomaly, seed):
    directory.mkdir()
    frames, _ = synth_frames(n, anomaly, np.random.default_rng(seed), height=90, width=135)
    for i, f in enumerate(frames):
        write_pgm(directory / f"{i:03d}.pgm", f)


def test_unlabeled_frames_pseudo_dump_and_frame_scoring(tmp_path):
    write_clip(tmp_path / "train", 8, None, 0)
    write_clip(tmp_path / "test", 6, AnomalySpec(3, 6), 1)
    frames_cfg = {
        "dataset": {"kind": "frames", "path": str(tmp_path / "train"), "test_path": str(tmp_path / "test")},
        "model": {"latent_dim": 4, "g_hidden": [16], "d_hidden": [8]},
        "phase1": {"batch_size": 16, "max_epochs": 5},
        "phase2": {"iterations": 10, "log_every": 5, "batch_size": 8, "probe_size": 8},
    }
    cfg = write_config(tmp_path, frames_cfg)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) in (0, 3)
    assert main(["eval", "--config", str(cfg), "--run", str(out)]) == 0
    report = json.loads((out / "eval_report_proposed.json").read_text())
    assert report["metrics"] is None and "labels absent" in report["notice"]
    rows = read_csv(out / "eval_scores_proposed.csv")
    assert len(rows) == 6 and all(r["label"] == "" for r in rows)
    assert main(["pseudo", "dump", "--config", str(cfg), "--run", str(out), "--count", "3"]) == 0
    assert len(list((out / "pseudo").glob("po_*.pgm"))) == 3
    assert len(list((out / "pseudo").glob("pn_*.pgm"))) == 3
    target = tmp_path / "frames.csv"
    assert main(["score", "--config", str(cfg), "--run", str(out), "--input", str(tmp_path / "test"),
                 "--out", str(target)]) == 0
    assert [r["sample_id"] for r in read_csv(target)] == [f"{i:03d}" for i in range(6)]
