"""Iterative pseudo-labeling over the unlabeled pool.

Each iteration trains on the labeled pool (expert labels plus admitted
pseudo-labels), scores the unlabeled pool, admits predictions whose
confidence clears the current threshold, and lowers the threshold.  The
trainer is injected so the state machine can be exercised with a mock
scorer.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
import pandas as pd

from tweetframe.config import ModelConfig
from tweetframe.labels import LABELS
from tweetframe.metrics import MetricsReport, classification_report
from tweetframe.models.trainer import Prediction

log = logging.getLogger(__name__)


class SelfTrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class ThresholdSchedule:
    current: float = 1.0
    step: float = 0.05
    floor: float = 0.7
    per_class_overrides: Mapping[int, float] | None = None

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("threshold step must be positive")
        if not self.floor <= self.current <= 1.0:
            raise ValueError(f"threshold {self.current} outside [{self.floor}, 1.0]")

    def threshold_for(self, label: int) -> float:
        if self.per_class_overrides and label in self.per_class_overrides:
            return self.per_class_overrides[label]
        return self.current

    @property
    def at_floor(self) -> bool:
        return self.current <= self.floor


def next_threshold(sched: ThresholdSchedule, any_admitted: bool) -> ThresholdSchedule:
    """Lower c by one step, or by two when the last round admitted nothing; never below the floor."""
    drop = sched.step if any_admitted else 2 * sched.step
    return replace(sched, current=max(sched.floor, round(sched.current - drop, 10)))


def compute_class_weights(labels: Sequence[int]) -> dict[int, float]:
    """Inverse-frequency weights n / (3 * support_c); they average to 1 over examples."""
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    weights = {}
    for c in LABELS:
        support = int(np.sum(labels == c))
        if support == 0:
            raise SelfTrainError(f"class {c} has no examples; cannot compute class weights")
        weights[c] = n / (len(LABELS) * support)
    return weights


@dataclass
class PseudoLabelBatch:
    entries: list[tuple[str, int, float]]  # (tweet_id, label, confidence)
    iteration: int
    class_distribution: dict[int, float]

    def __len__(self) -> int:
        return len(self.entries)

    def counts(self) -> dict[int, int]:
        return {c: sum(1 for _, lab, _ in self.entries if lab == c) for c in LABELS}


def select_pseudo_labels(
    preds: Sequence[Prediction],
    sched: ThresholdSchedule,
    quotas: Mapping[int, int] | None = None,
    already_admitted: set[str] | frozenset[str] = frozenset(),
    iteration: int = 0,
) -> PseudoLabelBatch:
    """Admit predictions at or above their class threshold, most confident first, up to each quota."""
    by_class: dict[int, list[tuple[str, int, float]]] = {c: [] for c in LABELS}
    for p in preds:
        if p.tweet_id in already_admitted:
            continue
        conf = p.score
        if conf >= sched.threshold_for(p.label):
            by_class[p.label].append((p.tweet_id, p.label, conf))
    entries = []
    for c in LABELS:
        ranked = sorted(by_class[c], key=lambda e: (-e[2], str(e[0])))
        if quotas is not None and c in quotas:
            ranked = ranked[: max(0, int(quotas[c]))]
        entries.extend(ranked)
    total = len(entries)
    dist = {c: (sum(1 for e in entries if e[1] == c) / total if total else 0.0) for c in LABELS}
    return PseudoLabelBatch(entries, iteration, dist)


class Scorer(Protocol):
    def predict(self, texts: Sequence[str]) -> np.ndarray:
        """Confidence vectors (n, 3)."""


# trainer(labeled pool frame with text/label, class weights, iteration) -> Scorer
Trainer = Callable[[pd.DataFrame, "dict[int, float] | None", int], Scorer]


@dataclass
class IterationRecord:
    iteration: int
    threshold: float
    admitted_per_class: dict[int, int]
    mean_confidence_per_class: dict[int, float | None]
    pool_sizes: dict[str, int]
    test_metrics: MetricsReport | None
    validate_metrics: MetricsReport | None = None
    retrained: bool = True

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "threshold": self.threshold,
            "admitted_per_class": {str(k): v for k, v in self.admitted_per_class.items()},
            "mean_confidence_per_class": {str(k): v for k, v in self.mean_confidence_per_class.items()},
            "pool_sizes": self.pool_sizes,
            "test_metrics": self.test_metrics.to_dict() if self.test_metrics else None,
            "validate_metrics": self.validate_metrics.to_dict() if self.validate_metrics else None,
            "retrained": self.retrained,
        }


@dataclass
class SelfTrainState:
    labeled_pool: pd.DataFrame  # tweet_id, text, label, confidence, source
    unlabeled_pool: pd.DataFrame  # tweet_id, text
    iteration: int = 0
    history: list[IterationRecord] = field(default_factory=list)
    best_iteration: int | None = None

    def check_invariants(self, test_ids: set[str], all_ids: set[str]) -> None:
        labeled = set(self.labeled_pool["tweet_id"])
        unlabeled = set(self.unlabeled_pool["tweet_id"])
        if labeled & unlabeled:
            raise SelfTrainError("labeled and unlabeled pools overlap")
        if labeled & test_ids:
            raise SelfTrainError("TEST tweets leaked into the labeled pool")
        if labeled | unlabeled != all_ids:
            raise SelfTrainError("pool union changed")


def _mean_conf(batch: PseudoLabelBatch) -> dict[int, float | None]:
    out = {}
    for c in LABELS:
        confs = [conf for _, lab, conf in batch.entries if lab == c]
        out[c] = float(np.mean(confs)) if confs else None
    return out


def run_self_training(
    label_set: pd.DataFrame,
    unlabel_set: pd.DataFrame,
    test_set: pd.DataFrame,
    cfg: ModelConfig,
    trainer: Trainer,
    sched: ThresholdSchedule | None = None,
    quotas: Mapping[int, int] | None = None,
    validate_set: pd.DataFrame | None = None,
    out_dir: str | Path | None = None,
) -> tuple[Scorer, SelfTrainState]:
    """Pseudo-labeling loop; returns the best iteration's scorer and the full state.

    ``label_set`` / ``validate_set`` / ``test_set`` need ``tweet_id``,
    ``text`` and ``label``; ``unlabel_set`` needs ``tweet_id`` and ``text``.
    The loop ends when the unlabeled pool is empty, ``cfg.max_iterations``
    is reached, or a round at the floor admits nothing.  When a round
    admits nothing the pool is unchanged, so the previous model and its
    scores are reused at the lowered threshold instead of retraining.
    """
    sched = sched or ThresholdSchedule(cfg.threshold_start, cfg.threshold_step, cfg.threshold_floor)
    test_ids = set(test_set["tweet_id"])
    if test_ids & set(label_set["tweet_id"]) or test_ids & set(unlabel_set["tweet_id"]):
        raise SelfTrainError("TEST must be disjoint from the labeled and unlabeled sets")
    if set(label_set["tweet_id"]) & set(unlabel_set["tweet_id"]):
        raise SelfTrainError("labeled and unlabeled sets overlap")
    if cfg.select_best_on == "validate" and validate_set is None:
        raise SelfTrainError("select_best_on=validate needs a validation set")

    state = SelfTrainState(
        labeled_pool=label_set[["tweet_id", "text", "label"]].assign(confidence=1.0, source="expert"),
        unlabeled_pool=unlabel_set[["tweet_id", "text"]].reset_index(drop=True),
    )
    all_ids = set(state.labeled_pool["tweet_id"]) | set(state.unlabeled_pool["tweet_id"])
    rng = np.random.default_rng(cfg.global_seed)
    log_path = Path(out_dir) / "iterations.jsonl" if out_dir else None
    if log_path:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text("")

    best_model, best_score = None, -np.inf
    model, preds, pool_changed = None, None, True
    while True:
        state.iteration += 1
        it = state.iteration
        if pool_changed:
            weights = compute_class_weights(state.labeled_pool["label"]) if cfg.class_weighting else None
            try:
                model = trainer(state.labeled_pool, weights, it)
            except Exception as exc:
                log.error("training failed at iteration %d: %s", it, exc)
                err = SelfTrainError(f"training failed at iteration {it}; history preserved")
                err.state = state
                raise err from exc
            test_report = classification_report(np.asarray(model.predict(list(test_set["text"]))).argmax(1) + 1,
                                                 test_set["label"].to_numpy())
            val_report = None
            if validate_set is not None:
                val_report = classification_report(
                    np.asarray(model.predict(list(validate_set["text"]))).argmax(1) + 1,
                    validate_set["label"].to_numpy())
            pool = state.unlabeled_pool
            if cfg.score_sample and len(pool) > cfg.score_sample:
                pool = pool.iloc[np.sort(rng.choice(len(pool), cfg.score_sample, replace=False))]
            probs = np.asarray(model.predict(list(pool["text"]))) if len(pool) else np.zeros((0, 3))
            preds = [Prediction(tid, int(p.argmax()) + 1, p) for tid, p in zip(pool["tweet_id"], probs)]
            selector = (val_report if cfg.select_best_on == "validate" else test_report).macro_f1
            if selector > best_score:
                best_model, best_score, state.best_iteration = model, selector, it

        batch = select_pseudo_labels(preds, sched, quotas, iteration=it)
        admitted_ids = {e[0] for e in batch.entries}
        record = IterationRecord(
            iteration=it,
            threshold=sched.current,
            admitted_per_class=batch.counts(),
            mean_confidence_per_class=_mean_conf(batch),
            pool_sizes={"labeled": len(state.labeled_pool), "unlabeled": len(state.unlabeled_pool)},
            test_metrics=test_report,
            validate_metrics=val_report,
            retrained=pool_changed,
        )
        state.history.append(record)
        if log_path:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        log.info("iteration %d threshold %.2f admitted %s", it, sched.current, record.admitted_per_class)

        if admitted_ids:
            rows = state.unlabeled_pool[state.unlabeled_pool["tweet_id"].isin(admitted_ids)]
            info = {tid: (lab, conf) for tid, lab, conf in batch.entries}
            added = rows.assign(
                label=[info[t][0] for t in rows["tweet_id"]],
                confidence=[info[t][1] for t in rows["tweet_id"]],
                source="pseudo",
            )
            state.labeled_pool = pd.concat([state.labeled_pool, added], ignore_index=True)
            state.unlabeled_pool = state.unlabeled_pool[~state.unlabeled_pool["tweet_id"].isin(admitted_ids)]
            state.unlabeled_pool = state.unlabeled_pool.reset_index(drop=True)
        state.check_invariants(test_ids, all_ids)
        pool_changed = bool(admitted_ids)

        if not admitted_ids and sched.at_floor:
            break
        if len(state.unlabeled_pool) == 0 or it >= cfg.max_iterations:
            break
        sched = next_threshold(sched, bool(admitted_ids))
    return best_model, state


def export_labeled_pool(state: SelfTrainState, path: str | Path) -> None:
    """CSV of tweet_id, label, confidence, source (expert or pseudo)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tweet_id", "label", "confidence", "source"])
        for row in state.labeled_pool.itertuples(index=False):
            w.writerow([row.tweet_id, int(row.label), f"{float(row.confidence):.6f}", row.source])


class TransformerTrainer:
    """Trainer for ``run_self_training`` backed by ``run_trial``.

    Expert rows of the pool are split once into fit/validate (validate is
    kept clean of pseudo-labels); pseudo-labeled rows always go to fit.
    """

    def __init__(self, cfg: ModelConfig, validate: pd.DataFrame, out_dir: str | Path | None = None):
        self.cfg = cfg
        self.validate = validate
        self.out_dir = Path(out_dir) if out_dir else None
        self._last_encoder: Path | None = None
        if not cfg.retrain_from_scratch and self.out_dir is None:
            raise SelfTrainError("incremental retraining needs an output directory for checkpoints")

    def __call__(self, pool: pd.DataFrame, weights, iteration: int):
        from tweetframe.models.trainer import run_trial

        val_ids = set(self.validate["tweet_id"])
        fit = pool[~pool["tweet_id"].isin(val_ids)]
        run_dir = self.out_dir / f"iteration_{iteration:02d}" if self.out_dir else None
        cfg = self.cfg
        if not cfg.retrain_from_scratch and self._last_encoder is not None:
            # incremental: continue from the previous iteration's encoder, fresh head
            cfg = cfg.replace(model_name=str(self._last_encoder))
        result = run_trial(fit, self.validate, None, cfg, trial_index=0, class_weights=weights,
                           out_dir=run_dir)
        if run_dir is not None:
            self._last_encoder = run_dir / "trial_000" / "best" / "encoder"
        return _ModelScorer(result.model)


class _ModelScorer:
    def __init__(self, model):
        self.model = model

    def predict(self, texts: Sequence[str]) -> np.ndarray:
        return self.model.predict_proba(texts)
