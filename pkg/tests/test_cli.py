import json

import pytest

from freqmix.cli import main
from freqmix.data import read_manifest


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--count", "3", "--domains", "2",
                 "--val-fraction", "0.34", "--seed", "1"]) == 0
    return out


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--manifest", str(dataset / "manifest.tsv"), "--out", str(out),
                 "--epochs", "2"]) == 0
    return out


def test_synth_outputs(dataset):
    recs = read_manifest(dataset / "manifest.tsv")
    assert len(recs) == 6
    assert [r.split for r in recs] == ["train", "train", "val", "test", "test", "test"]
    assert len(list((dataset / "images").glob("*.png"))) == 6
    assert (dataset / "resolved_config.txt").exists()


def test_synth_reproducible(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--count", "2", "--seed", "4"]) == 0
    for f in (tmp_path / "a" / "images").glob("*.png"):
        assert f.read_bytes() == (tmp_path / "b" / "images" / f.name).read_bytes()


@pytest.mark.parametrize("argv", [["--count", "0"], ["--domains", "0"], ["--set", "synth.bogus=1"]])
def test_synth_usage_errors(tmp_path, argv):
    assert main(["synth", "--out", str(tmp_path)] + argv) == 2


def test_augment_file_counts(dataset, tmp_path):
    out = tmp_path / "aug"
    assert main(["augment", "--manifest", str(dataset / "manifest.tsv"), "--out", str(out)]) == 0
    pngs = [p for p in out.glob("*.png") if p.name != "augment_preview.png"]
    # per image: anchor + 3 views + 6 ordered mixes
    assert len(pngs) == 2 * (1 + 3 + 6)
    rows = (out / "augment_manifest.tsv").read_text().splitlines()
    assert len(rows) == 1 + 20
    assert (out / "augment_preview.png").exists()


def test_augment_deterministic(dataset, tmp_path):
    for name in ("a", "b"):
        assert main(["augment", "--manifest", str(dataset / "manifest.tsv"),
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "augment_manifest.tsv").read_text() == \
        (tmp_path / "b" / "augment_manifest.tsv").read_text()
    for f in (tmp_path / "a").glob("*_mix_*.png"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_augment_refuses_one_view(dataset, tmp_path):
    assert main(["augment", "--manifest", str(dataset / "manifest.tsv"), "--out", str(tmp_path),
                 "--views", "1"]) == 2


def test_train_outputs(trained):
    lines = (trained / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == 2
    for name in ("best.pt", "last.pt", "training_curves.png", "resolved_config.txt"):
        assert (trained / name).exists()
    assert "train.total_epochs = 2" in (trained / "resolved_config.txt").read_text()


def test_train_ablation_flags(dataset, tmp_path):
    assert main(["train", "--manifest", str(dataset / "manifest.tsv"), "--out", str(tmp_path),
                 "--epochs", "2", "--no-ssl", "--no-att", "--no-fmaug"]) == 0
    text = (tmp_path / "resolved_config.txt").read_text()
    assert "train.use_ssl = False" in text and "train.use_att = False" in text
    record = json.loads((tmp_path / "train_log.jsonl").read_text().splitlines()[0])
    assert record["objective"] == "alpha*L_seg"


def test_train_resume(dataset, tmp_path):
    manifest = str(dataset / "manifest.tsv")
    assert main(["train", "--manifest", manifest, "--out", str(tmp_path / "full"), "--epochs", "3"]) == 0
    part = tmp_path / "part"
    assert main(["train", "--manifest", manifest, "--out", str(part), "--epochs", "3",
                 "--stop-after", "0"]) == 0
    assert len((part / "train_log.jsonl").read_text().splitlines()) == 1
    assert main(["train", "--manifest", manifest, "--out", str(part),
                 "--resume", str(part / "last.pt")]) == 0
    assert (part / "train_log.jsonl").read_text() == (tmp_path / "full" / "train_log.jsonl").read_text()


def test_train_paper_preset_config(dataset, tmp_path):
    # the paper-scale preset resolves; training is only run at desk scale here
    assert main(["train", "--manifest", str(dataset / "manifest.tsv"), "--out", str(tmp_path),
                 "--preset", "paper", "--size", "64", "--set", "model.depth=4",
                 "--set", "train.radius_range=(5, 31)", "--epochs", "2"]) == 0
    text = (tmp_path / "resolved_config.txt").read_text()
    assert "train.base_lr = 0.001" in text


def test_train_usage_errors(dataset, tmp_path):
    manifest = str(dataset / "manifest.tsv")
    assert main(["train", "--manifest", manifest, "--out", str(tmp_path), "--epochs", "1"]) == 2
    assert main(["train", "--manifest", manifest, "--out", str(tmp_path),
                 "--set", "train.total_epochs=9"]) == 2


def test_eval_outputs(dataset, trained, tmp_path):
    assert main(["eval", "--checkpoint", str(trained / "best.pt"),
                 "--manifest", str(dataset / "manifest.tsv"), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "eval_report.tsv").read_text().splitlines()
    assert rows[0] == "id\tdomain\tdice\tmcc"
    assert len(rows) == 1 + 3 + 1 and rows[-1].startswith("MEAN")
    summary = json.loads((tmp_path / "eval_summary.json").read_text())
    assert summary["count"] == 3
    assert 0 <= summary["mean_dice"] <= 1
    assert (tmp_path / "eval_scores.png").exists()


def test_eval_errors(dataset, trained, tmp_path):
    manifest = str(dataset / "manifest.tsv")
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.pt"), "--manifest", manifest,
                 "--out", str(tmp_path)]) == 2
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    assert main(["eval", "--checkpoint", str(trained / "best.pt"), "--manifest", str(empty),
                 "--out", str(tmp_path)]) == 2


def test_analyze_outputs(dataset, tmp_path):
    assert main(["analyze", "--manifest", str(dataset / "manifest.tsv"), "--out", str(tmp_path)]) == 0
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert set(verdict["conditions"]) == {"raw", "uniform_hp", "discriminative_hp"}
    assert verdict["h1"]["inter_distance"] in ("decrease", "no decrease")
    assert verdict["radius_range"] == [5, 31]
    rows = (tmp_path / "projection.tsv").read_text().splitlines()
    assert len(rows) == 1 + 3 * 6
    assert (tmp_path / "projection.png").exists()


def test_analyze_single_domain(tmp_path):
    data = tmp_path / "one"
    assert main(["synth", "--out", str(data), "--count", "2"]) == 0
    assert main(["analyze", "--manifest", str(data / "manifest.tsv"), "--out", str(tmp_path / "a")]) == 2
