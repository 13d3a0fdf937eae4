import json

import numpy as np
import pytest

from csiid.checkpoint import IntegrityError, load_checkpoint, save_checkpoint
from csiid.cli import main
from csiid.model import DualBranchTransformer, TransformerConfig

FAST = [
    "--synth.duration_s=30",
    "--synth.classes=3",
    "--model.d_model=8",
    "--model.heads=2",
    "--model.d_ff=16",
    "--train.max_epochs=4",
    "--train.patience=2",
]


def _grid(path):
    return np.loadtxt(path, delimiter=",", skiprows=1)[:, 1:]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--run-dir", str(root / "synth"), "--synth.empty_room=true", *FAST]) == 0
    return root


@pytest.fixture(scope="module")
def trained(corpus):
    run = corpus / "train"
    assert main(["train", str(corpus / "synth" / "manifest.csv"), "--run-dir", str(run), *FAST]) == 0
    return run


# checkpoint format


def test_checkpoint_round_trip(tmp_path):
    model = DualBranchTransformer(TransformerConfig(window=6, subcarriers=3, classes=2, d_model=4, heads=2, d_ff=8))
    save_checkpoint(tmp_path / "m.csim", model, {"a": 1})
    cfg, params = load_checkpoint(tmp_path / "m.csim")
    assert cfg == {"a": 1}
    assert list(params) == [n for n, _ in model.named_parameters()]
    for name, p in model.named_parameters():
        np.testing.assert_array_equal(params[name], p.data.astype(np.float32))


def test_checkpoint_corruption_detected(tmp_path):
    model = DualBranchTransformer(TransformerConfig(window=6, subcarriers=3, classes=2, d_model=4, heads=2, d_ff=8))
    path = tmp_path / "m.csim"
    save_checkpoint(path, model, {})
    blob = bytearray(path.read_bytes())
    blob[-10] ^= 1
    path.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError, match="checkpoint integrity"):
        load_checkpoint(path)
    path.write_bytes(b"junk")
    with pytest.raises(IntegrityError):
        load_checkpoint(path)


# synth


def test_synth_default_writes_six_logs(tmp_path):
    assert main(["synth", "--run-dir", str(tmp_path / "a"), "--synth.duration_s=2"]) == 0
    assert len(list((tmp_path / "a").glob("class_*.log"))) == 6
    assert len((tmp_path / "a" / "manifest.csv").read_text().splitlines()) == 6
    assert main(["synth", "--run-dir", str(tmp_path / "b"), "--synth.duration_s=2"]) == 0
    for f in (tmp_path / "a").glob("*.log"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_synth_class_count_override(tmp_path):
    assert main(["synth", "--run-dir", str(tmp_path), "--synth.classes=2", "--synth.duration_s=2"]) == 0
    assert sorted(p.name for p in tmp_path.glob("*.log")) == ["class_0.log", "class_1.log"]


def test_timestamped_run_dir_and_config_echo(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--synth.duration_s=1", "--synth.classes=2", "--seed=9"]) == 0
    (run,) = list(tmp_path.iterdir())
    assert run.name.startswith("synth-")
    text = (run / "config.txt").read_text()
    assert "seed=9\n" in text and "synth.classes=2\n" in text
    assert "seed: 9" in capsys.readouterr().out


def test_config_file_then_flags(tmp_path):
    (tmp_path / "c.txt").write_text("# comment\nsynth.classes = 3\nsynth.duration_s=1\n")
    assert main(["synth", "--run-dir", str(tmp_path / "r"), "--config", str(tmp_path / "c.txt"), "--synth.classes=2"]) == 0
    assert len(list((tmp_path / "r").glob("*.log"))) == 2


# ingest


def test_ingest_reports(corpus, capsys):
    run = corpus / "ingest"
    assert main(["ingest", str(corpus / "synth" / "class_0.log"), "--run-dir", str(run)]) == 0
    doc = json.loads((run / "summary.json").read_text())
    assert doc["records"] == 3000 and doc["K"] == 52 and doc["gaps"] == []
    assert (run / "report.txt").exists()


# train / eval


def test_train_outputs(trained):
    for name in ("history.csv", "checkpoint.csim", "metrics.json", "table.txt", "confusion.png", "history.png", "config.txt"):
        assert (trained / name).is_file(), name
    doc = json.loads((trained / "metrics.json").read_text())
    for key in ("accuracy", "macro_f1", "macro_precision", "macro_recall", "confusion", "epochs_run", "best_epoch", "seed"):
        assert key in doc
    assert np.array(doc["confusion"]).shape == (3, 3)


def test_eval_reproduces_training_metrics(corpus, trained):
    run = corpus / "eval"
    code = main(["eval", str(trained / "checkpoint.csim"), str(corpus / "synth" / "manifest.csv"), "--run-dir", str(run)])
    assert code == 0
    a = json.loads((trained / "metrics.json").read_text())
    b = json.loads((run / "metrics.json").read_text())
    for key in ("accuracy", "macro_f1", "macro_precision", "macro_recall", "confusion"):
        assert a[key] == b[key]


def test_mlp_metrics_schema(corpus):
    run = corpus / "mlp"
    assert main(["train", str(corpus / "synth" / "manifest.csv"), "--run-dir", str(run), "--model.type=mlp", *FAST]) == 0
    doc = json.loads((run / "metrics.json").read_text())
    assert doc["model"] == "mlp"
    assert 0.0 <= doc["accuracy"] <= 1.0


def test_preprocess_writes_cache(corpus):
    run = corpus / "pre"
    assert main(["preprocess", str(corpus / "synth" / "manifest.csv"), "--run-dir", str(run), *FAST]) == 0
    doc = json.loads((run / "summary.json").read_text())
    assert doc["windows"] == {"train": 60, "val": 6, "test": 15}
    assert (run / "dataset.csiw").read_bytes()[:4] == b"CSIW"


# error paths


def test_missing_manifest_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert main(["train", str(missing), "--run-dir", str(tmp_path / "r")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_unknown_key_exit_2(tmp_path, capsys):
    assert main(["synth", "--run-dir", str(tmp_path), "--synth.bogus=1"]) == 2
    assert "synth.bogus" in capsys.readouterr().err


def test_bad_value_exit_2(tmp_path):
    assert main(["synth", "--run-dir", str(tmp_path), "--synth.classes=many"]) == 2
    assert main(["synth", "--run-dir", str(tmp_path), "--synth.classes=1"]) == 2


def test_subcarrier_mismatch_exit_3(corpus, trained, capsys):
    narrow = corpus / "narrow"
    assert main(["synth", "--run-dir", str(narrow), "--synth.subcarriers=26", *FAST]) == 0
    code = main(["eval", str(trained / "checkpoint.csim"), str(narrow / "manifest.csv"), "--run-dir", str(corpus / "e3")])
    assert code == 3
    assert "52" in capsys.readouterr().err


def test_corrupted_checkpoint_exit_4(corpus, trained, tmp_path, capsys):
    bad = tmp_path / "bad.csim"
    blob = bytearray((trained / "checkpoint.csim").read_bytes())
    blob[-1] ^= 0xFF
    bad.write_bytes(bytes(blob))
    code = main(["eval", str(bad), str(corpus / "synth" / "manifest.csv"), "--run-dir", str(tmp_path / "r")])
    assert code == 4
    assert "checkpoint integrity" in capsys.readouterr().err


# heatmap


def test_heatmap_two_seconds(corpus):
    run = corpus / "heat"
    assert main(["heatmap", str(corpus / "synth" / "class_0.log"), "--run-dir", str(run)]) == 0
    assert _grid(run / "grid.csv").shape == (200, 52)
    assert (run / "grid.pgm").read_bytes()[:2] == b"P5"
    assert (run / "heatmap.png").is_file()


def test_heatmap_span_beyond_session_exit_2(corpus):
    code = main(["heatmap", str(corpus / "synth" / "class_0.log"), "--run-dir", str(corpus / "h2"), "--heatmap.span_s=100"])
    assert code == 2


def test_heatmap_empty_room_varies_less(corpus):
    variances = {}
    for name in ("class_0", "empty_room"):
        run = corpus / f"h_{name}"
        args = ["heatmap", str(corpus / "synth" / f"{name}.log"), "--run-dir", str(run)]
        args += ["--heatmap.stage=preprocessed", "--heatmap.span_s=10", "--heatmap.png=false"]
        assert main(args) == 0
        variances[name] = _grid(run / "grid.csv").var(axis=0).mean()
    assert variances["empty_room"] < variances["class_0"]
