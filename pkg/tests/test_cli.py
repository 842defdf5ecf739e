import json

import pytest

from han_affect import synth
from han_affect.cli import main


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = out / "spec.json"
    spec.write_text(json.dumps(dict(n_per_class=10, turns=[2, 4], tokens=[3, 6], base_vocab=40,
                                    words_per_category=5, topic_vocab=5)))
    assert main(["synth", "--spec", str(spec), "--out", str(out / "data")]) == 0
    return out / "data"


def _lexica(d):
    args = []
    for name, _ in synth.TOY_LEXICA:
        args += ["--lexicon", str(d / f"{name}.tsv")]
    return args


TINY = ["--hidden", "4", "--attn-dim", "4", "--embed-dim", "5", "--max-epochs", "2"]


def test_synth_outputs(corpus_dir):
    assert (corpus_dir / "corpus.jsonl").is_file() and (corpus_dir / "liwc.tsv").is_file()


def test_gradcheck(tmp_path, capsys):
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "gradcheck.json").read_text())
    assert report["passed"] and report["max_relative_error"] < 1e-4
    assert "config_hash" in report and report["seed"] == 0
    assert "max relative error" in capsys.readouterr().out


def test_cv_svm_table(corpus_dir, tmp_path, capsys):
    rc = main(["cv", "--corpus", str(corpus_dir / "corpus.jsonl"), "--model", "svm", "--view", "client",
               "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "cv_report.txt").read_text().strip().splitlines()
    assert len(lines) == 2 + 5 + 1 and lines[-1].split()[0] == "mean"
    report = json.loads((tmp_path / "cv_report.json").read_text())
    assert len(report["folds"]) == 5 and report["seed"] == 0 and len(report["config_hash"]) == 16
    assert (tmp_path / "cv_report.timing.json").is_file()


def test_missing_lexicon_for_han_l(corpus_dir, tmp_path, capsys):
    rc = main(["cv", "--corpus", str(corpus_dir / "corpus.jsonl"), "--model", "han_l", "--out", str(tmp_path)])
    assert rc == 2
    assert "lexica" in capsys.readouterr().err
    rc = main(["cv", "--corpus", str(corpus_dir / "corpus.jsonl"), "--model", "han_l",
               "--lexicon", str(tmp_path / "nope.tsv"), "--out", str(tmp_path)])
    assert rc == 2


def test_invalid_config_field(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"patience": 0}))
    assert main(["gradcheck", "--config", str(cfg)]) == 2
    assert "patience" in capsys.readouterr().err
    cfg.write_text(json.dumps({"colour": "blue"}))
    assert main(["gradcheck", "--config", str(cfg)]) == 2


def test_runtime_failure_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert main(["analyze", "--corpus", str(bad)]) == 1
    assert "line 1" in capsys.readouterr().err


def test_analyze(corpus_dir, tmp_path):
    assert main(["analyze", "--corpus", str(corpus_dir / "corpus.jsonl"), *_lexica(corpus_dir),
                 "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "analysis.json").read_text())
    assert set(report["class_vocab"]) == {"depressed", "not_depressed"}
    assert "Affective category occurrence" in (tmp_path / "analysis.txt").read_text()


def test_train_then_eval(corpus_dir, tmp_path):
    corpus = str(corpus_dir / "corpus.jsonl")
    assert main(["train", "--corpus", corpus, "--model", "han_ls", *_lexica(corpus_dir), *TINY,
                 "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "train_report.json").read_text())
    assert report["model"] == "han_ls" and 1 <= report["best_epoch"] <= 2
    assert main(["eval", "--corpus", corpus, "--checkpoint", str(tmp_path / "checkpoint.json"),
                 "--out", str(tmp_path)]) == 0
    metrics = json.loads((tmp_path / "eval_report.json").read_text())["metrics"]
    assert 0 <= metrics["macro_f1"] <= 1


def test_seed_precedence(corpus_dir, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 1, "model": "svm", "view": "client",
                               "corpus": str(corpus_dir / "corpus.jsonl")}))
    monkeypatch.setenv("HAN_AFFECT_SEED", "2")
    assert main(["cv", "--config", str(cfg), "--out", str(tmp_path / "env")]) == 0
    assert json.loads((tmp_path / "env" / "cv_report.json").read_text())["seed"] == 2
    assert main(["cv", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "flag")]) == 0
    assert json.loads((tmp_path / "flag" / "cv_report.json").read_text())["seed"] == 3
