import json

import numpy as np
import pandas as pd
import pytest

from synth import make_corpus, write_corpus_csv
from tweetframe.cli import main
from tweetframe.llm.client import ResponseCache
from tweetframe.llm.prompts import PromptSpec, build_prompt

FAST = ["--set", "model_name=scratch:tiny", "--set", "max_epochs=1", "--set", "batch_size=32",
        "--set", "learning_rate=0.003", "--set", "device=cpu", "--set", "max_length=32"]


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """ingest -> restore-ids -> split on a synthetic corpus; returns the working directory."""
    root = tmp_path_factory.mktemp("cli")
    corpus = make_corpus(900, seed=11, years=range(2012, 2022))
    write_corpus_csv(corpus, root / "raw.csv")
    labeled = corpus.iloc[:700]
    rng = np.random.default_rng(0)
    mb = labeled["label"].to_numpy().copy()
    flip = rng.random(len(mb)) < 0.1
    mb[flip] = mb[flip] % 3 + 1
    pd.DataFrame({
        "text": labeled["text"].str.upper(),  # case differences must still match exactly
        "label_ar": labeled["label"],
        "label_mb": mb,
        "year": labeled["created_at"].str[:4],
    }).to_csv(root / "labeled.csv", index=False)
    assert main(["ingest", "--corpus", str(root / "raw.csv"), "--out", str(root / "ingest")]) == 0
    assert main(["restore-ids", "--labeled", str(root / "labeled.csv"),
                 "--corpus", str(root / "ingest" / "corpus.csv"), "--out", str(root / "restore")]) == 0
    assert main(["split", "--labels", str(root / "restore" / "label_set.csv"), "--seed", "7",
                 "--out", str(root / "split")]) == 0
    return root


class TestDispatch:
    def test_unknown_command(self, capsys):
        assert main(["foo"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_no_command(self, capsys):
        assert main([]) == 2
        assert "usage" in capsys.readouterr().err

    def test_missing_required_option(self, tmp_path):
        assert main(["split", "--out", str(tmp_path)]) == 2

    def test_config_error_exits_one(self, tmp_path):
        labels = tmp_path / "l.csv"
        labels.write_text("tweet_id,text,label_ar,label_mb,year\n1,a,1,1,2015\n")
        code = main(["split", "--labels", str(labels), "--set", "batch_size=0", "--out", str(tmp_path / "o")])
        assert code == 1
        assert "batch_size must be positive" in _manifest(tmp_path / "o")["status"]

    def test_unknown_config_key(self, tmp_path):
        code = main(["split", "--labels", "x.csv", "--set", "colour=red", "--out", str(tmp_path)])
        assert code == 1
        assert "colour" in _manifest(tmp_path)["status"]


class TestEvaluate:
    def test_identical_files(self, tmp_path):
        frame = pd.DataFrame({"tweet_id": ["1", "2", "3", "4"], "label": [1, 2, 3, 3]})
        frame.to_csv(tmp_path / "p.csv", index=False)
        frame.to_csv(tmp_path / "g.csv", index=False)
        out = tmp_path / "eval"
        assert main(["evaluate", "--pred", str(tmp_path / "p.csv"), "--gold", str(tmp_path / "g.csv"),
                     "--out", str(out)]) == 0
        assert json.loads((out / "metrics.json").read_text())["accuracy"] == 1.0
        manifest = _manifest(out)
        assert manifest["status"] == "ok"
        assert len(manifest["inputs"]) == 2
        assert (out / "confusion.csv").exists()
        assert (out / "log.jsonl").read_text().strip()

    def test_missing_files_is_usage_error(self, tmp_path):
        assert main(["evaluate", "--out", str(tmp_path)]) == 2

    def test_agreement(self, pipeline, tmp_path):
        out = tmp_path / "agree"
        assert main(["evaluate", "--agreement", "--labels", str(pipeline / "restore" / "label_set.csv"),
                     "--out", str(out)]) == 0
        rep = json.loads((out / "agreement.json").read_text())
        assert 0.8 < rep["percent_agreement"] < 1.0


class TestPipeline:
    def test_outputs_and_manifests(self, pipeline):
        for step, files in {"ingest": ["corpus.csv", "row_errors.csv"],
                            "restore": ["label_set.csv", "review.jsonl", "discarded.csv"],
                            "split": ["splits.json", "split_sizes.json", "config.json"]}.items():
            out = pipeline / step
            assert _manifest(out)["status"] == "ok"
            for name in files:
                assert (out / name).exists(), f"{step}/{name}"

    def test_restore_matches_everything(self, pipeline):
        summary = json.loads((pipeline / "restore" / "restore_summary.json").read_text())
        assert summary["matched"] == summary["records"] == 700

    def test_split_sizes(self, pipeline):
        sizes = json.loads((pipeline / "split" / "split_sizes.json").read_text())
        assert sizes["TEST"] + sizes["TRAIN"] == sizes["LABEL"] == 700
        assert _manifest(pipeline / "split")["seed"] == 7

    def test_split_byte_identical(self, pipeline, tmp_path):
        out = tmp_path / "again"
        assert main(["split", "--labels", str(pipeline / "restore" / "label_set.csv"), "--seed", "7",
                     "--out", str(out)]) == 0
        assert (out / "splits.json").read_bytes() == (pipeline / "split" / "splits.json").read_bytes()

    @pytest.mark.parametrize("model", ["logreg", "gbtree"])
    def test_baseline_train(self, pipeline, tmp_path, model):
        out = tmp_path / model
        assert main(["train", "--labels", str(pipeline / "restore" / "label_set.csv"),
                     "--splits", str(pipeline / "split" / "splits.json"), "--model", model, "--out", str(out)]) == 0
        assert json.loads((out / "metrics.json").read_text())["model"] == model

    def test_label_all_then_stats(self, pipeline, tmp_path):
        out = tmp_path / "label_all"
        assert main(["label-all", "--labels", str(pipeline / "restore" / "label_set.csv"),
                     "--splits", str(pipeline / "split" / "splits.json"),
                     "--corpus", str(pipeline / "ingest" / "corpus.csv"), "--out", str(out), *FAST]) == 0
        labeled = pd.read_csv(out / "labeled_corpus.csv")
        assert len(labeled) == 900
        assert set(labeled["source"]) == {"expert", "model"}
        assert labeled["label"].isin([1, 2, 3]).all()

        stats = tmp_path / "stats"
        assert main(["stats", "--labeled", str(out / "labeled_corpus.csv"),
                     "--corpus", str(pipeline / "ingest" / "corpus.csv"),
                     "--group-by", "none", "--no-images", "--out", str(stats)]) == 0
        agg = pd.read_csv(stats / "labels_overall.csv")
        assert agg["total"].sum() == 900

    def test_self_train(self, pipeline, tmp_path):
        out = tmp_path / "self"
        code = main(["self-train", "--labels", str(pipeline / "restore" / "label_set.csv"),
                     "--splits", str(pipeline / "split" / "splits.json"),
                     "--corpus", str(pipeline / "ingest" / "corpus.csv"), "--out", str(out), *FAST,
                     "--set", "max_iterations=2", "--set", "threshold_start=0.75"])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert 1 <= summary["iterations"] <= 2
        lines = (out / "iterations.jsonl").read_text().splitlines()
        assert len(lines) == summary["iterations"]
        assert (out / "labeled_pool.csv").exists()

    def test_stats_needs_dates(self, tmp_path):
        (tmp_path / "l.csv").write_text("tweet_id,label\n1,1\n")
        assert main(["stats", "--labeled", str(tmp_path / "l.csv"), "--out", str(tmp_path / "o")]) == 2


class TestLlmCommands:
    def test_classify_from_cache(self, pipeline, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        labels = pd.read_csv(pipeline / "restore" / "label_set.csv", dtype={"tweet_id": str})
        spec = PromptSpec("confidence")
        cache = ResponseCache(tmp_path / "cache.jsonl")
        confs = {1: "90,10", 2: "10,90", 3: "5,5"}
        for row in labels.itertuples():
            cache.put("gpt-4o", build_prompt(spec, row.text), confs[row.label_ar])
        out = tmp_path / "llm"
        code = main(["llm-classify", "--labels", str(pipeline / "restore" / "label_set.csv"),
                     "--mode", "confidence", "--cache", str(tmp_path / "cache.jsonl"), "--out", str(out)])
        assert code == 0
        assert json.loads((out / "metrics.json").read_text())["metrics"]["accuracy"] == 1.0
        assert pd.read_csv(out / "unclassified.csv").empty

        grid = tmp_path / "grid"
        assert main(["llm-grid", "--labels", str(pipeline / "restore" / "label_set.csv"),
                     "--responses", str(out / "responses.csv"), "--out", str(grid)]) == 0
        best = json.loads((grid / "grid_best.json").read_text())
        # implicit Other confidence is 90 for class 3 and 0 otherwise, so the lowest k already separates
        assert best["best_k_accuracy"] == 1.0
        assert len(pd.read_csv(grid / "grid.csv")) == 100

    def test_missing_key_fails(self, pipeline, tmp_path, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)
        monkeypatch.delenv("TWEETFRAME_LLM_CACHE", raising=False)
        code = main(["llm-classify", "--labels", str(pipeline / "restore" / "label_set.csv"),
                     "--retries", "0", "--out", str(tmp_path)])
        assert code == 1
        assert "AuthError" in _manifest(tmp_path)["status"]
