import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from dirfocus.cli import main
from dirfocus.experiment import ExperimentConfig, run_experiment

SYNTH = {"n_subjects": 5, "trials_per_subject": 14, "trial_seconds": 2.0, "eeg_pattern": "side", "keep_audio": True}
MODEL = {"kind": "SpEegCnn", "hidden": 8, "cnn_kernels": 3}
TRAIN = {"max_epochs": 2}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "synth.json"
    cfg.write_text(json.dumps(SYNTH))
    data = root / "data"
    assert main(["synth", "--config", str(cfg), "--seed", "1", "--out", str(data)]) == 0
    return data


def _run_config(tmp_path, dataset, **extra):
    cfg = {"name": "t", "dataset": str(dataset), "label_paradigm": "Binary2", "model": MODEL,
           "train": TRAIN, "eval": {"n_boot": 1000}, **extra}
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    return path


def test_synth_refuses_overwrite(dataset):
    assert main(["synth", "--out", str(dataset)]) == 1


def test_spectrum_idempotent_and_force(dataset, capsys):
    assert main(["spectrum", str(dataset)]) == 0
    manifest = json.loads((dataset / "manifest.json").read_text())
    files = [e["spectrum_file"] for e in manifest["trials"]]
    first = (dataset / files[0]).read_bytes()
    capsys.readouterr()
    assert main(["spectrum", str(dataset)]) == 0
    assert "0 written" in capsys.readouterr().out
    assert main(["spectrum", str(dataset), "--force"]) == 0
    assert f"{len(files)} written" in capsys.readouterr().out
    forced = (dataset / files[0]).read_bytes()
    # recomputed from the stored float32 audio: close to the synth spectrum
    np.testing.assert_allclose(np.frombuffer(forced, "<f8"), np.frombuffer(first, "<f8"), rtol=1e-3)
    assert main(["spectrum", str(dataset), "--force"]) == 0
    assert (dataset / files[0]).read_bytes() == forced


def test_spectrum_separate_output(dataset, tmp_path):
    out = tmp_path / "spectra"
    assert main(["spectrum", str(dataset), "--out", str(out)]) == 0
    index = json.loads((out / "spectra.json").read_text())
    assert len(index["spectra"]) == 5 * 14


def test_run_deterministic_resume_and_report(dataset, tmp_path):
    cfg = _run_config(tmp_path, dataset)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    ra = (a / "results.json").read_bytes()
    assert ra == (b / "results.json").read_bytes()
    res = json.loads(ra)
    assert len(res["folds"]) == 5 and all(f["model"]["test_reads"] == 1 for f in res["folds"])
    assert (a / "results.csv").is_file()

    # resume after losing two folds and the summary
    (a / "results.json").unlink()
    for k in (1, 3):
        (a / "folds" / f"fold_{k:02d}.json").unlink()
    assert main(["run", "--config", str(cfg), "--out", str(a), "--resume"]) == 0
    assert (a / "results.json").read_bytes() == ra

    rep = tmp_path / "report"
    assert main(["report", str(a), "--out", str(rep)]) == 0
    for name in ("report.csv", "report.json", "accuracy_vs_nclass.svg"):
        assert (rep / name).is_file()


def test_parallel_matches_serial(dataset, tmp_path):
    cfg = ExperimentConfig.from_json(_run_config(tmp_path, dataset))
    serial = run_experiment(cfg, tmp_path / "s", jobs=1)
    parallel = run_experiment(cfg, tmp_path / "p", jobs=2)
    assert json.dumps(serial, sort_keys=True) == json.dumps(parallel, sort_keys=True)


def test_missing_dataset(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"dataset": str(tmp_path / "nope")}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "manifest.json" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, dataset):
    cfg = _run_config(tmp_path, dataset, learning_rate=1)
    assert main(["run", "--config", str(cfg)]) == 2


def test_report_with_no_results(tmp_path):
    assert main(["report", str(tmp_path / "*.json")]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dirfocus", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "spectrum" in proc.stdout
    if shutil.which("dirfocus"):
        assert subprocess.run(["dirfocus", "--help"], capture_output=True).returncode == 0
