import hashlib
import json
import os

import pytest

from sweepsense.cli import DEFAULTS, UsageError, main, resolve
from sweepsense.datasets import read_dataset
from sweepsense.nn import build_reference_model, load_weights, save_weights


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    path = str(d / "c8.dswp")
    assert main(["gen", "--preset", "chunk8", "--n-records", "900", "--seed", "3", "--out", path]) == 0
    return path


def test_gen_outputs(corpus):
    ds = read_dataset(corpus)
    assert ds.chunk_len == 32 and ds.num_classes == 9
    assert all(95 <= c <= 105 for c in ds.class_counts())
    run = json.load(open(corpus + ".run.json"))
    assert run["command"] == "gen" and run["settings"]["seed"] == 3
    assert os.path.exists(corpus + ".json")


def test_gen_same_seed_same_hash(tmp_path, corpus):
    again = str(tmp_path / "again.dswp")
    assert main(["gen", "--preset", "chunk8", "--n-records", "900", "--seed", "3", "--out", again]) == 0
    assert sha(again) == sha(corpus)


def test_train_lr_zero_and_rerun(tmp_path, corpus):
    w0 = str(tmp_path / "w0.json")
    assert main(["train", "--dataset", corpus, "--lr", "0", "--epochs", "2", "--seed", "4",
                 "--out-weights", w0]) == 0
    init = build_reference_model(32, 9, seed=4)
    loaded = load_weights(w0)
    for k, v in init.get_weights().items():
        assert (loaded.get_weights()[k] == v).all()
    assert os.path.exists(tmp_path / "history.csv")
    w1, w2 = str(tmp_path / "w1.json"), str(tmp_path / "w2.json")
    for w in (w1, w2):
        assert main(["train", "--dataset", corpus, "--epochs", "2", "--seed", "4", "--out-weights", w,
                     "--history", str(tmp_path / "h.csv")]) == 0
    assert sha(w1) == sha(w2)
    assert json.load(open(w1 + ".run.json"))["settings"]["epochs"] == 2


def test_eval_writes_confusion(tmp_path, corpus):
    w = str(tmp_path / "w.json")
    assert main(["train", "--dataset", corpus, "--epochs", "3", "--out-weights", w]) == 0
    out = tmp_path / "ev"
    assert main(["eval", "--weights", w, "--dataset", corpus, "--out-dir", str(out)]) == 0
    rows = open(out / "confusion.csv").read().splitlines()
    assert len(rows) == 10 and rows[0].endswith(",clean")
    metrics = json.load(open(out / "metrics.json"))
    assert metrics["total"] == 135


def test_sweep_and_bench(tmp_path):
    w = str(tmp_path / "w.json")
    save_weights(build_reference_model(32, 9, seed=0), w)
    out = tmp_path / "sw"
    assert main(["sweep", "--weights", w, "--duration-s", "0.02", "--max-rate", "--out-dir", str(out)]) == 0
    stats = json.load(open(out / "stats.json"))
    assert stats["decoded"] == stats["produced"] == 195
    lines = open(out / "reports.csv").read().splitlines()
    assert lines[0] == "capture_id,located_subcarrier,chunk_argmax,latency_us"
    assert len(lines) == 1 + stats["sensed"]
    assert json.load(open(out / "sweep.run.json"))["settings"]["g"] == 8

    bo = tmp_path / "bench"
    assert main(["bench", "--weights", w, "--reps", "100", "--sweep-reps", "5", "--g-values", "4,8",
                 "--out-dir", str(bo)]) == 0
    rows = open(bo / "bench.csv").read().splitlines()
    assert len(rows) == 1 + 4
    assert len(json.load(open(bo / "realtime.json"))["rows"]) == 2


def test_sweep_file_source(tmp_path):
    import numpy as np

    w = str(tmp_path / "w.json")
    save_weights(build_reference_model(32, 9, seed=0), w)
    iq = tmp_path / "iq.f32"
    np.zeros(2 * 2048, "<f4").tofile(iq)
    out = tmp_path / "o"
    assert main(["sweep", "--weights", w, "--source", "file", "--iq-file", str(iq), "--max-rate",
                 "--report-format", "jsonl", "--out-dir", str(out)]) == 0
    assert len(open(out / "reports.jsonl").read().splitlines()) == 2


def test_invalid_combinations_write_nothing(tmp_path, corpus):
    w = str(tmp_path / "w.json")
    save_weights(build_reference_model(32, 9, seed=0), w)
    cases = [
        ["gen", "--g", "3", "--out", str(tmp_path / "x.dswp")],
        ["gen", "--snr-min", "30", "--snr-max", "10", "--out", str(tmp_path / "x.dswp")],
        ["train", "--dataset", corpus, "--chunk-bins", "64", "--out-weights", str(tmp_path / "x.json")],
        ["train", "--dataset", corpus, "--patience", "0", "--out-weights", str(tmp_path / "x.json")],
        ["sweep", "--weights", w, "--g", "4", "--out-dir", str(tmp_path / "x")],
        ["sweep", "--weights", w, "--source", "file", "--out-dir", str(tmp_path / "x")],
        ["sweep", "--weights", w, "--iq-file", corpus, "--out-dir", str(tmp_path / "x")],
        ["bench", "--reps", "10", "--out-dir", str(tmp_path / "x")],
        ["bench", "--g-values", "3", "--out-dir", str(tmp_path / "x")],
        ["gen", "--bogus-flag"],
        ["gen", "--preset", "nope"],
    ]
    before = sorted(os.listdir(tmp_path))
    for argv in cases:
        assert main(argv) == 1, argv
    assert sorted(os.listdir(tmp_path)) == before


def test_io_errors_exit_2(tmp_path):
    assert main(["train", "--dataset", str(tmp_path / "missing.dswp")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["eval", "--weights", str(bad), "--dataset", str(bad)]) == 2
    junk = tmp_path / "junk.dswp"
    junk.write_bytes(b"DSWP\x01")
    assert main(["train", "--dataset", str(junk)]) == 2


def test_missing_required_setting():
    assert main(["eval"]) == 1


def test_resolution_order(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"seed": 5, "gen": {"n_records": 123}, "train": {"lr": 0.5}}))
    env = {"DEEPSWEEP_SEED": "9"}
    assert resolve("gen", {}, None, env)["seed"] == 9
    got = resolve("gen", {}, str(cfg_file), env)
    assert got["seed"] == 5 and got["n_records"] == 123
    assert resolve("gen", {"seed": 1}, str(cfg_file), env)["seed"] == 1
    assert resolve("train", {}, str(cfg_file), {})["lr"] == 0.5
    assert resolve("eval", {}, str(cfg_file), env) == DEFAULTS["eval"]
    with pytest.raises(UsageError):
        resolve("gen", {}, None, {"DEEPSWEEP_SEED": "abc"})
    cfg_file.write_text(json.dumps({"gen": {"colour": 1}}))
    with pytest.raises(UsageError):
        resolve("gen", {}, str(cfg_file), {})


def test_config_file_and_env_via_main(tmp_path, monkeypatch):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"gen": {"n_records": 180, "preset": "fullband8"}}))
    monkeypatch.setenv("DEEPSWEEP_SEED", "12")
    out = str(tmp_path / "d.dswp")
    assert main(["--config", str(cfg_file), "gen", "--out", out]) == 0
    settings = json.load(open(out + ".run.json"))["settings"]
    assert settings["seed"] == 12 and settings["n_records"] == 180
    # the echoed settings reproduce the same file
    cfg_file.write_text(json.dumps({"gen": dict(settings, out=str(tmp_path / "e.dswp"))}))
    monkeypatch.delenv("DEEPSWEEP_SEED")
    assert main(["--config", str(cfg_file), "gen"]) == 0
    assert sha(out) == sha(tmp_path / "e.dswp")
