import itertools
import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweetframe.config import ModelConfig
from tweetframe.models.trainer import Prediction
from tweetframe.selftrain import (
    SelfTrainError,
    ThresholdSchedule,
    compute_class_weights,
    export_labeled_pool,
    next_threshold,
    run_self_training,
    select_pseudo_labels,
)


def vec(label: int, conf: float) -> np.ndarray:
    v = np.full(3, (1 - conf) / 2)
    v[label - 1] = conf
    return v


def pred(tid, label, conf):
    return Prediction(tid, label, vec(label, conf))


class TableScorer:
    """Fixed confidence per text; unknown texts get a confident class-1 vector."""

    def __init__(self, table):
        self.table = table

    def predict(self, texts):
        return np.array([vec(*self.table.get(t, (1, 0.99))) for t in texts])


class RecordingTrainer:
    def __init__(self, table):
        self.table = table
        self.calls = []

    def __call__(self, pool, weights, iteration):
        self.calls.append((iteration, sorted(pool["tweet_id"]), weights))
        return TableScorer(self.table)


def frames(unlabeled_texts):
    label = pd.DataFrame({"tweet_id": ["L1", "L2", "L3"], "text": ["l1", "l2", "l3"], "label": [1, 2, 3]})
    test = pd.DataFrame({"tweet_id": ["T1", "T2"], "text": ["t1", "t2"], "label": [1, 2]})
    unlabel = pd.DataFrame({"tweet_id": [t.upper() for t in unlabeled_texts], "text": list(unlabeled_texts)})
    return label, unlabel, test


CFG = ModelConfig(max_iterations=20)


class TestSchedule:
    @pytest.mark.parametrize("current,admitted,expected", [
        (1.0, True, 0.95),
        (0.95, False, 0.85),
        (0.72, True, 0.70),
        (0.72, False, 0.70),
        (0.70, False, 0.70),
    ])
    def test_next(self, current, admitted, expected):
        assert next_threshold(ThresholdSchedule(current), admitted).current == pytest.approx(expected)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ThresholdSchedule(current=0.5)
        with pytest.raises(ValueError):
            ThresholdSchedule(step=0)

    @given(st.lists(st.booleans(), max_size=30))
    def test_monotone_and_floored(self, admitted):
        s = ThresholdSchedule()
        seen = [s.current]
        for a in admitted:
            s = next_threshold(s, a)
            seen.append(s.current)
        assert all(b <= a for a, b in zip(seen, seen[1:]))
        assert min(seen) >= 0.7

    def test_reaches_exact_grid_values(self):
        s = ThresholdSchedule()
        for _ in range(6):
            s = next_threshold(s, True)
        assert s.current == 0.7


class TestClassWeights:
    def test_balanced(self):
        assert compute_class_weights([1, 2, 3] * 4) == {1: 1.0, 2: 1.0, 3: 1.0}

    def test_table_supports(self):
        labels = [1] * 1337 + [2] * 743 + [3] * 1387
        w = compute_class_weights(labels)
        for c, n in ((1, 1337), (2, 743), (3, 1387)):
            assert w[c] == pytest.approx(3467 / (3 * n), abs=1e-12)
        assert [round(w[c], 3) for c in (1, 2, 3)] == [0.864, 1.555, 0.833]

    def test_scale_invariant(self):
        labels = [1, 1, 2, 3, 3, 3]
        assert compute_class_weights(labels) == pytest.approx(compute_class_weights(labels * 2))

    def test_missing_class(self):
        with pytest.raises(SelfTrainError):
            compute_class_weights([1, 1, 2])


class TestSelect:
    PREDS = [pred("A", 1, 0.97), pred("B", 2, 0.91), pred("C", 3, 0.80)]

    def test_threshold_filter(self):
        batch = select_pseudo_labels(self.PREDS, ThresholdSchedule(0.95))
        assert [e[0] for e in batch.entries] == ["A"]

    def test_per_class_overrides(self):
        batch = select_pseudo_labels(self.PREDS, ThresholdSchedule(0.95, per_class_overrides={1: 0.85, 3: 0.75}))
        assert [e[0] for e in batch.entries] == ["A", "C"]

    def test_quota_brute_force(self):
        rng = np.random.default_rng(0)
        confs = 0.99 + rng.random(100) * 0.009
        preds = [pred(f"u{i:03d}", 1, float(c)) for i, c in enumerate(confs)]
        batch = select_pseudo_labels(preds, ThresholdSchedule(0.95), quotas={1: 10})
        expected = [f"u{i:03d}" for i in sorted(range(100), key=lambda i: (-confs[i], i))[:10]]
        assert [e[0] for e in batch.entries] == expected

    def test_already_admitted_skipped(self):
        batch = select_pseudo_labels(self.PREDS, ThresholdSchedule(0.7), already_admitted={"A"})
        assert {e[0] for e in batch.entries} == {"B", "C"}
        assert batch.class_distribution == {1: 0.0, 2: 0.5, 3: 0.5}

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from([1, 2, 3]), st.floats(0.34, 1.0)), max_size=10),
           st.sampled_from([1.0, 0.95, 0.9, 0.8, 0.7]),
           st.dictionaries(st.sampled_from([1, 2, 3]), st.integers(0, 4)))
    def test_exhaustive_soundness(self, items, c, quotas):
        preds = [pred(f"u{i}", lab, conf) for i, (lab, conf) in enumerate(items)]
        batch = select_pseudo_labels(preds, ThresholdSchedule(c), quotas=quotas or None)
        for tid, lab, conf in batch.entries:
            assert conf >= c
        counts = batch.counts()
        for lab in (1, 2, 3):
            eligible = [p for p in preds if p.label == lab and p.score >= c]
            cap = quotas.get(lab, len(eligible)) if quotas else len(eligible)
            assert counts[lab] == min(cap, len(eligible))
            admitted = {e[0] for e in batch.entries if e[1] == lab}
            rejected = [p for p in eligible if p.tweet_id not in admitted]
            if admitted and rejected:
                assert min(e[2] for e in batch.entries if e[1] == lab) >= max(p.score for p in rejected)


class TestLoop:
    TABLE = {"u1": (1, 0.99), "u2": (2, 0.96), "u3": (3, 0.90), "u4": (1, 0.80), "u5": (2, 0.60)}

    def test_hand_simulated_trace(self, tmp_path):
        label, unlabel, test = frames(["u1", "u2", "u3", "u4", "u5"])
        trainer = RecordingTrainer(self.TABLE)
        _, state = run_self_training(label, unlabel, test, CFG, trainer, out_dir=tmp_path)
        hist = state.history
        assert [h.threshold for h in hist] == pytest.approx([1.0, 0.9, 0.85, 0.75, 0.7])
        assert [h.admitted_per_class for h in hist] == [
            {1: 0, 2: 0, 3: 0}, {1: 1, 2: 1, 3: 1}, {1: 0, 2: 0, 3: 0}, {1: 1, 2: 0, 3: 0}, {1: 0, 2: 0, 3: 0},
        ]
        assert [h.retrained for h in hist] == [True, False, True, False, True]
        assert [c[0] for c in trainer.calls] == [1, 3, 5]
        assert trainer.calls[1][1] == ["L1", "L2", "L3", "U1", "U2", "U3"]
        assert sorted(state.unlabeled_pool["tweet_id"]) == ["U5"]
        pseudo = state.labeled_pool[state.labeled_pool["source"] == "pseudo"]
        assert dict(zip(pseudo["tweet_id"], pseudo["label"])) == {"U1": 1, "U2": 2, "U3": 3, "U4": 1}
        lines = (tmp_path / "iterations.jsonl").read_text().splitlines()
        assert [json.loads(x)["threshold"] for x in lines] == pytest.approx([1.0, 0.9, 0.85, 0.75, 0.7])
        assert set(json.loads(lines[0])) >= {"iteration", "threshold", "admitted_per_class",
                                            "mean_confidence_per_class", "pool_sizes", "test_metrics"}

    def test_never_confident(self):
        label, unlabel, test = frames(["a", "b", "c"])
        table = {t: (2, 0.60) for t in "abc"}
        _, state = run_self_training(label, unlabel, test, CFG, RecordingTrainer(table))
        assert [h.threshold for h in state.history] == pytest.approx([1.0, 0.9, 0.8, 0.7])
        assert len(state.labeled_pool) == 3
        assert all(sum(h.admitted_per_class.values()) == 0 for h in state.history)

    def test_pool_conservation_and_no_leak(self):
        texts = [f"x{i}" for i in range(8)]
        rng = np.random.default_rng(4)
        table = {t: (int(rng.integers(1, 4)), float(rng.choice([0.99, 0.93, 0.88, 0.74, 0.5]))) for t in texts}
        label, unlabel, test = frames(texts)
        _, state = run_self_training(label, unlabel, test, CFG, RecordingTrainer(table))
        ids = set(state.labeled_pool["tweet_id"]) | set(state.unlabeled_pool["tweet_id"])
        assert ids == set(label["tweet_id"]) | set(unlabel["tweet_id"])
        assert not set(test["tweet_id"]) & set(state.labeled_pool["tweet_id"])
        sizes = [h.pool_sizes["labeled"] for h in state.history]
        assert sizes == sorted(sizes)
        expert = state.labeled_pool[state.labeled_pool["source"] == "expert"]
        assert list(expert["label"]) == [1, 2, 3]

    def test_quota_in_loop(self):
        texts = [f"q{i}" for i in range(6)]
        table = {t: (1, 0.99 - i * 0.001) for i, t in enumerate(texts)}
        label, unlabel, test = frames(texts)
        _, state = run_self_training(label, unlabel, test, CFG.replace(threshold_start=0.95), RecordingTrainer(table),
                                     quotas={1: 2})
        assert state.history[0].admitted_per_class[1] == 2
        first = state.labeled_pool[state.labeled_pool["source"] == "pseudo"]["tweet_id"].tolist()[:2]
        assert first == ["Q0", "Q1"]

    def test_class_weights_passed(self):
        label, unlabel, test = frames(["a"])
        trainer = RecordingTrainer({"a": (1, 0.5)})
        run_self_training(label, unlabel, test, CFG.replace(class_weighting=True), trainer)
        assert trainer.calls[0][2] == {1: 1.0, 2: 1.0, 3: 1.0}

    def test_test_overlap_rejected(self):
        label, unlabel, test = frames(["a"])
        test = pd.concat([test, label.iloc[:1]])
        with pytest.raises(SelfTrainError):
            run_self_training(label, unlabel, test, CFG, RecordingTrainer({}))

    def test_training_failure_keeps_history(self):
        label, unlabel, test = frames(["a", "b"])
        calls = itertools.count()

        def flaky(pool, weights, it):
            if next(calls) == 1:
                raise RuntimeError("out of memory")
            return TableScorer({"a": (1, 0.99), "b": (1, 0.99)})

        with pytest.raises(SelfTrainError) as info:
            run_self_training(label, unlabel, test, CFG.replace(threshold_start=0.95), flaky, quotas={1: 1})
        assert len(info.value.state.history) == 1

    def test_max_iterations(self):
        label, unlabel, test = frames([f"m{i}" for i in range(10)])
        table = {f"m{i}": (1, 0.99) for i in range(10)}
        _, state = run_self_training(label, unlabel, test, CFG.replace(max_iterations=2, threshold_start=0.95),
                                     RecordingTrainer(table), quotas={1: 1})
        assert len(state.history) == 2

    def test_export(self, tmp_path):
        label, unlabel, test = frames(["u1", "u5"])
        _, state = run_self_training(label, unlabel, test, CFG, RecordingTrainer(self.TABLE))
        export_labeled_pool(state, tmp_path / "pool.csv")
        out = pd.read_csv(tmp_path / "pool.csv", dtype={"tweet_id": str})
        assert list(out.columns) == ["tweet_id", "label", "confidence", "source"]
        assert set(out["source"]) == {"expert", "pseudo"}

    def test_best_on_validate(self):
        label, unlabel, test = frames(["u1"])
        with pytest.raises(SelfTrainError):
            run_self_training(label, unlabel, test, CFG.replace(select_best_on="validate"), RecordingTrainer({}))
        best, state = run_self_training(label, unlabel, test, CFG.replace(select_best_on="validate"),
                                        RecordingTrainer(self.TABLE), validate_set=test)
        assert state.best_iteration is not None
