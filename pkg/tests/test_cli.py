import csv
import json
import os
import shutil

import numpy as np
import pytest

from vspam import cli, gabor
from vspam.bundle import read_bundle, read_manifest

SMALL = {
    "image_size": 16, "levels": 3, "orientations": 4, "n_train": 80, "n_valid": 12,
    "n_database": 40, "n_voxels": 4, "candidate_levels": [1, 2], "screen_k": 30, "n_lambda": 12,
    "top_k": 3, "b_grid": [1, 5, 20], "mc_b": [5], "mc_draws": 2000, "sweep_thresholds": [0.0, 0.2],
    "rf_grid": 4, "probe_frequencies": [1, 2, 4], "probe_orientations": 4,
    "contrast_values": [0.0, 1.0, 2.0], "n_noise": 2, "bold_images": 6, "bold_repeats": 3, "seed": 3,
}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.json"
    cfg.write_text(json.dumps(SMALL))
    out = root / "out"
    assert run("gen", "--config", cfg, "--out", out) == 0
    assert run("fit", "--config", cfg, "--out", out) == 0
    return cfg, out


def read_csv(path):
    with open(path) as fh:
        return [row for row in csv.reader(fh) if not row[0].startswith("#")]


def test_gen_outputs(workdir):
    cfg, out = workdir
    manifest = read_manifest(out / "features")
    entries = {e["name"]: e for e in manifest["arrays"]}
    assert entries["train"]["rows"] == SMALL["n_train"]
    assert entries["train"]["cols"] == gabor.bank_size(3, 4) == 84
    assert entries["database"]["rows"] == SMALL["n_database"]
    assert entries["train"]["tags"]["transform"] == "raw"
    assert len(json.loads((out / "population.json").read_text())) == 4


def test_gen_is_byte_identical(workdir, tmp_path):
    cfg, out = workdir
    assert run("gen", "--config", cfg, "--out", tmp_path) == 0
    for sub in ("stimuli", "features", "responses"):
        for name in os.listdir(out / sub):
            assert (out / sub / name).read_bytes() == (tmp_path / sub / name).read_bytes()


def test_fit_outputs(workdir):
    cfg, out = workdir
    for kind in ("sqrtX", "log1psqrtX", "vspam"):
        assert len(os.listdir(out / "models" / kind)) == 4
        path = read_csv(out / "paths" / kind / "voxel_0000.csv")
        assert path[0] == ["lambda", "rss", "df", "bic"]
    report = read_csv(out / "encoding_report_all.csv")
    header = report[0]
    for col in ("train_r2_sqrtX", "pred_r2_vspam", "diff_vspam_minus_sqrtX", "ratio_vspam_over_sqrtX"):
        assert col in header
    assert len(report) == 5


def test_parallel_fit_matches_sequential(workdir, tmp_path):
    cfg, out = workdir
    shutil.copytree(out, tmp_path / "o", ignore=shutil.ignore_patterns("models", "paths"))
    assert run("fit", "--config", cfg, "--out", tmp_path / "o", "--kind", "vspam", "--jobs", 2) == 0
    for name in os.listdir(out / "models" / "vspam"):
        assert (out / "models" / "vspam" / name).read_text() == \
            (tmp_path / "o" / "models" / "vspam" / name).read_text()


def test_predict(workdir):
    cfg, out = workdir
    assert run("predict", "--config", cfg, "--out", out, "--kind", "sqrtX", "--on", "valid") == 0
    pred = read_bundle(out / "predictions" / "valid")["sqrtX"][0]
    assert pred.shape == (SMALL["n_valid"], 4)


def test_decode(workdir):
    cfg, out = workdir
    assert run("decode", "--config", cfg, "--out", out, "--kind", "vspam") == 0
    rows = read_csv(out / "decode" / "vspam_curve.csv")
    assert rows[0] == ["b", "average_error", "mc_error", "mc_se"]
    b = [int(r[0]) for r in rows[1:]]
    err = np.array([float(r[1]) for r in rows[1:]])
    assert b[-1] == SMALL["n_database"]
    assert np.all((err >= 0) & (err <= 1)) and np.all(np.diff(err) >= 0)
    for r in rows[1:]:
        if r[2] != "":
            assert abs(float(r[2]) - float(r[1])) <= 3 * float(r[3]) + 1e-12
    pairs = read_csv(out / "decode" / "vspam_pairs.csv")
    assert len(pairs) == SMALL["n_valid"] + 1
    sweep = read_csv(out / "decode" / "vspam_sweep.csv")
    assert sweep[0] == ["rule", "value", "n_voxels", "error_at_N"]


def test_tune(workdir):
    cfg, out = workdir
    model = out / "models" / "vspam" / "voxel_0000.json"
    assert run("tune", model, "--config", cfg, "--out", out) == 0
    rf = read_csv(out / "tune" / "voxel_0000_rf.csv")
    assert len(rf) == 1 + 16
    orifreq = read_csv(out / "tune" / "voxel_0000_orifreq.csv")
    assert len(orifreq) == 1 + 3 * 4
    contrast = read_csv(out / "tune" / "voxel_0000_contrast.csv")
    assert len(contrast) == 1 + 3


def test_tune_intercept_only(workdir, tmp_path):
    cfg, out = workdir
    d = json.loads((out / "models" / "sqrtX" / "voxel_0000.json").read_text())
    d["terms"]["coefficients"] = [0.0] * len(d["terms"]["coefficients"])
    path = tmp_path / "flat.json"
    path.write_text(json.dumps(d))
    assert run("tune", path, "--config", cfg, "--out", tmp_path) == 0
    for name in ("rf", "orifreq", "contrast"):
        values = {r[-1] for r in read_csv(tmp_path / "tune" / f"flat_{name}.csv")[1:]}
        assert len(values) == 1 and float(values.pop()) == pytest.approx(d["intercept"])
    d["kind"] = "cubic"
    path.write_text(json.dumps(d))
    assert run("tune", path, "--config", cfg, "--out", tmp_path) == 2


def test_bold_round_trip(workdir, tmp_path, capsys):
    cfg, _ = workdir
    for _ in range(2):
        assert run("bold", "sim", "--config", cfg, "--out", tmp_path) == 0
        first = (tmp_path / "bold" / "series" / "series.f64").read_bytes()
    assert (tmp_path / "bold" / "series" / "series.f64").read_bytes() == first
    capsys.readouterr()
    assert run("bold", "fit", "--config", cfg, "--out", tmp_path) == 0
    text = capsys.readouterr().out
    corr = float(text.split("amplitude correlation ")[1].split(",")[0])
    assert corr > 0.999
    sched = (tmp_path / "bold" / "schedule.json").read_text()
    from vspam.bold import EventSchedule
    assert EventSchedule.from_json(sched).to_json() == sched


def test_exit_codes(workdir, tmp_path):
    cfg, out = workdir
    assert run("gen", "--config", cfg, "--out", tmp_path / "x", "--set", "n_train=5") == 2
    assert run("gen", "--config", cfg, "--set", "no_such_key=1") == 2
    assert run("gen", "--config", tmp_path / "missing.json") == 3
    assert run("fit", "--config", cfg, "--out", tmp_path / "empty") == 3
    bad = tmp_path / "bad"
    shutil.copytree(out, bad, ignore=shutil.ignore_patterns("models", "paths"))
    with open(bad / "features" / "train.f64", "r+b") as fh:
        fh.truncate(16)
    assert run("fit", "--config", cfg, "--out", bad) == 3
    strict = tmp_path / "strict"
    shutil.copytree(out, strict, ignore=shutil.ignore_patterns("models", "paths"))
    assert run("fit", "--config", cfg, "--out", strict, "--kind", "vspam",
               "--set", "max_cycles=1", "--strict") == 4
