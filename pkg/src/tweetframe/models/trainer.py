"""Fine-tuning trials, prediction, and multi-trial experiment runs."""

from __future__ import annotations

import json
import logging
import random
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from tweetframe.config import ModelConfig
from tweetframe.corpus import Tweet
from tweetframe.labels import LABELS
from tweetframe.metrics import MetricsReport, classification_report
from tweetframe.models.encoder import Encoder, TweetClassifier, load_encoder, prepare_text, resolve_device
from tweetframe.models.optim import DecoupledAdamW
from tweetframe.partition import PartitionError, SplitManifest, fold_set_from, label_column, subset

log = logging.getLogger(__name__)

COMPARE_COLUMNS = {"ar": "label_ar", "mb": "label_mb"}
SUMMARY_METRICS = ("accuracy", "macro_f1", "weighted_f1")


class FrozenEncoderError(RuntimeError):
    """Encoder weights are not receiving gradients; fine-tuning would only fit the head."""


@dataclass(frozen=True)
class Prediction:
    tweet_id: str | None
    label: int
    confidence: np.ndarray  # softmax over (problem, solution, other)

    @property
    def score(self) -> float:
        """Confidence of the predicted label."""
        return float(self.confidence[self.label - 1])


class EarlyStopping:
    """Stop once the monitored score has not strictly improved for ``patience`` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_score = -np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record ``score`` for ``epoch``; return True when training should halt."""
        if score > self.best_score:
            self.best_score, self.best_epoch, self.bad_epochs = score, epoch, 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def _tokenize(tokenizer, texts: Sequence[str], max_length: int, device: torch.device):
    enc = tokenizer(list(texts), padding=True, truncation=True, max_length=max_length, return_tensors="pt")
    return enc["input_ids"].to(device), enc["attention_mask"].to(device)


@dataclass
class TrainedModel:
    classifier: TweetClassifier
    tokenizer: object
    config: ModelConfig
    encoder_name: str
    hidden_size: int
    device: torch.device = field(default_factory=lambda: torch.device("cpu"))

    @property
    def variant(self) -> str:
        return Encoder(self.classifier.encoder, self.tokenizer, self.hidden_size, self.encoder_name).variant

    @torch.no_grad()
    def scores(self, texts: Sequence[str], batch_size: int | None = None) -> np.ndarray:
        """Raw head scores (n, 3) with dropout disabled."""
        self.classifier.eval()
        batch_size = batch_size or self.config.eval_batch_size
        texts = [prepare_text(t, self.config.strip_urls) for t in texts]
        out = np.zeros((len(texts), len(LABELS)), dtype=np.float64)
        order = np.argsort([len(t) for t in texts], kind="stable")
        for start in range(0, len(texts), batch_size):
            idx = order[start:start + batch_size]
            ids, mask = _tokenize(self.tokenizer, [texts[i] for i in idx], self.config.max_length, self.device)
            out[idx] = self.classifier(ids, mask).double().cpu().numpy()
        return out

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        from tweetframe.models.mathops import softmax

        if len(texts) == 0:
            return np.zeros((0, len(LABELS)))
        return softmax(self.scores(texts))

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.classifier.encoder.save_pretrained(directory / "encoder")
        self.tokenizer.save_pretrained(directory / "encoder")
        torch.save(self.classifier.head.state_dict(), directory / "head.pt")
        meta = {"config": self.config.to_dict(), "encoder_name": self.encoder_name, "hidden_size": self.hidden_size}
        (directory / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return directory

    @classmethod
    def load(cls, directory: str | Path, device: str = "auto") -> "TrainedModel":
        from tweetframe.models.encoder import load_encoder as _load

        directory = Path(directory)
        meta = json.loads((directory / "model.json").read_text())
        cfg = ModelConfig(**meta["config"])
        enc = _load(str(directory / "encoder"), max_length=cfg.max_length)
        clf = TweetClassifier(enc.model, enc.hidden_size, cfg.dropout_p)
        clf.head.load_state_dict(torch.load(directory / "head.pt", map_location="cpu"))
        dev = resolve_device(device)
        clf.to(dev).eval()
        return cls(clf, enc.tokenizer, cfg, meta["encoder_name"], enc.hidden_size, dev)


def predict_batch(model: TrainedModel, tweets: Sequence[Tweet | str]) -> list[Prediction]:
    """Label and confidence vector per tweet; deterministic for a fixed model."""
    if len(tweets) == 0:
        return []
    texts = [t.text if isinstance(t, Tweet) else str(t) for t in tweets]
    ids = [t.tweet_id if isinstance(t, Tweet) else None for t in tweets]
    probs = model.predict_proba(texts)
    labels = probs.argmax(axis=1) + 1
    return [Prediction(i, int(lab), p) for i, lab, p in zip(ids, labels, probs)]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    validation: MetricsReport
    seconds: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "train_loss": self.train_loss, "seconds": self.seconds,
                "validation": self.validation.to_dict()}


@dataclass
class TrialResult:
    trial_index: int
    seed: int
    best_epoch: int
    halted_epoch: int
    history: list[EpochRecord]
    test_report: MetricsReport | None
    test_reports: dict[str, MetricsReport] = field(default_factory=dict)
    test_predictions: list[Prediction] = field(default_factory=list)
    model: TrainedModel | None = field(default=None, repr=False)

    @property
    def validation_history(self) -> list[MetricsReport]:
        return [r.validation for r in self.history]

    def summary(self) -> dict:
        return {
            "trial_index": self.trial_index,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "halted_epoch": self.halted_epoch,
            "test": {k: v.to_dict() for k, v in self.test_reports.items()},
        }


def _check_examples(frame: pd.DataFrame, name: str, label_col: str) -> None:
    if frame is None or len(frame) == 0:
        raise ValueError(f"{name} set is empty")
    missing = {"text", label_col} - set(frame.columns)
    if missing:
        raise ValueError(f"{name} set lacks columns {sorted(missing)}")
    bad = ~frame[label_col].isin(LABELS)
    if bad.any():
        raise ValueError(f"{name} set has labels outside {LABELS}")


def _encoder_has_gradient(clf: TweetClassifier) -> bool:
    return any(p.grad is not None and bool(torch.any(p.grad != 0)) for p in clf.encoder.parameters())


def run_trial(
    fit: pd.DataFrame,
    validate: pd.DataFrame,
    test: pd.DataFrame | None,
    cfg: ModelConfig,
    trial_index: int = 0,
    label_col: str = "label",
    class_weights: dict[int, float] | None = None,
    out_dir: str | Path | None = None,
    check_disjoint: bool = True,
    keep_model: bool = True,
) -> TrialResult:
    """Fine-tune encoder + head on ``fit`` with early stopping on ``validate`` macro F1.

    Frames need ``text`` and ``label_col`` (codes 1..3).  The test frame
    may also carry ``label_ar`` / ``label_mb``; reports against every
    present coder column are returned in ``test_reports``.
    """
    _check_examples(fit, "fit", label_col)
    _check_examples(validate, "validate", label_col)
    if test is not None:
        _check_examples(test, "test", label_col)
    if check_disjoint and "tweet_id" in fit.columns:
        fit_ids = set(fit["tweet_id"])
        for name, other in (("validate", validate), ("test", test)):
            if other is not None and "tweet_id" in other.columns and fit_ids & set(other["tweet_id"]):
                raise PartitionError(f"fit and {name} sets overlap")
    seed = cfg.global_seed + trial_index
    seed_everything(seed)
    device = resolve_device(cfg.device)

    fit_texts = [prepare_text(t, cfg.strip_urls) for t in fit["text"]]
    encoder = load_encoder(cfg.model_name, texts=fit_texts, max_length=cfg.max_length)
    clf = TweetClassifier(encoder.model, encoder.hidden_size, cfg.dropout_p).to(device)
    if not any(p.requires_grad for p in clf.encoder.parameters()):
        raise FrozenEncoderError("encoder parameters do not require gradients")
    model = TrainedModel(clf, encoder.tokenizer, cfg, encoder.name, encoder.hidden_size, device)
    optimizer = DecoupledAdamW(clf.parameters(), lr=cfg.learning_rate, weight_decay=cfg.decay_lambda)

    targets = torch.tensor(fit[label_col].to_numpy(dtype=np.int64) - 1)
    weights = None
    if class_weights is not None:
        weights = torch.tensor([class_weights[c] for c in LABELS], dtype=torch.float32, device=device)
    gen = torch.Generator().manual_seed(seed)
    trial_dir = Path(out_dir) / f"trial_{trial_index:03d}" if out_dir else None
    if trial_dir:
        trial_dir.mkdir(parents=True, exist_ok=True)
        (trial_dir / "history.jsonl").write_text("")

    stopper = EarlyStopping(cfg.stopping_patience)
    history: list[EpochRecord] = []
    best_state = None
    gradient_checked = False
    val_gold = validate[label_col].to_numpy()
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        clf.train()
        order = torch.randperm(len(fit_texts), generator=gen).tolist()
        batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        total_loss = 0.0
        optimizer.zero_grad()
        for b, idx in enumerate(batches, start=1):
            ids, mask = _tokenize(encoder.tokenizer, [fit_texts[i] for i in idx], cfg.max_length, device)
            y = targets[idx].to(device)
            per_example = F.cross_entropy(clf(ids, mask), y, reduction="none")
            if weights is not None:
                per_example = per_example * weights[y]
            loss = per_example.mean()
            (loss / cfg.accumulate_grad_batches).backward()
            total_loss += loss.item() * len(idx)
            if not gradient_checked:
                if not _encoder_has_gradient(clf):
                    raise FrozenEncoderError("encoder received no gradient on the first batch")
                gradient_checked = True
            if b % cfg.accumulate_grad_batches == 0 or b == len(batches):
                optimizer.step()
                optimizer.zero_grad()
        val_pred = model.predict_proba(list(validate["text"])).argmax(axis=1) + 1
        report = classification_report(val_pred, val_gold)
        record = EpochRecord(epoch, total_loss / len(fit_texts), report, time.perf_counter() - started)
        history.append(record)
        if trial_dir:
            with open(trial_dir / "history.jsonl", "a") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        log.info("trial %d epoch %d loss %.4f val acc %.4f macro-F1 %.4f", trial_index, epoch,
                 record.train_loss, report.accuracy, report.macro_f1)
        improved = report.macro_f1 > stopper.best_score
        halt = stopper.update(epoch, report.macro_f1)
        if improved:
            best_state = {k: v.detach().to("cpu", copy=True) for k, v in clf.state_dict().items()}
        if halt:
            break
    clf.load_state_dict(best_state)
    clf.eval()

    result = TrialResult(trial_index, seed, stopper.best_epoch, epoch, history, None)
    if test is not None:
        texts = list(test["text"])
        ids = list(test["tweet_id"]) if "tweet_id" in test.columns else [None] * len(texts)
        probs = model.predict_proba(texts)
        pred = probs.argmax(axis=1) + 1
        result.test_predictions = [Prediction(i, int(l), p) for i, l, p in zip(ids, pred, probs)]
        result.test_report = classification_report(pred, test[label_col].to_numpy())
        result.test_reports["label"] = result.test_report
        for coder, col in COMPARE_COLUMNS.items():
            if col in test.columns:
                result.test_reports[coder] = classification_report(pred, test[col].to_numpy())
    if trial_dir:
        model.save(trial_dir / "best")
        (trial_dir / "result.json").write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    if keep_model:
        result.model = model
    return result


# -- experiments ---------------------------------------------------------------------


def training_frame(label_set: pd.DataFrame, manifest: SplitManifest, source: str) -> pd.DataFrame:
    """Rows of ``manifest`` with a ``label`` column taken from the configured coder."""
    frame = subset(label_set, manifest)
    return frame.assign(label=frame[label_column(source)].astype(int))


@dataclass
class ExperimentReport:
    mode: str
    runs: list[dict]
    aggregate: dict[str, dict[str, dict[str, float]]]

    def to_dict(self) -> dict:
        return {"mode": self.mode, "runs": self.runs, "aggregate": self.aggregate}


def aggregate_runs(results: Sequence[TrialResult]) -> dict[str, dict[str, dict[str, float]]]:
    """Mean and sample standard deviation per coder and metric (std is 0 for one run)."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    coders = sorted({c for r in results for c in r.test_reports})
    for coder in coders:
        out[coder] = {}
        for metric in SUMMARY_METRICS:
            values = [getattr(r.test_reports[coder], metric) for r in results if coder in r.test_reports]
            std = statistics.stdev(values) if len(values) > 1 else 0.0
            out[coder][metric] = {"mean": statistics.fmean(values), "std": std, "n": len(values)}
    return out


TrialRunner = Callable[..., TrialResult]


def run_experiment(
    mode: str,
    cfg: ModelConfig,
    splits: dict[str, SplitManifest],
    label_set: pd.DataFrame,
    out_dir: str | Path | None = None,
    trial_runner: TrialRunner = run_trial,
) -> ExperimentReport:
    """Run ``cfg.trials`` holdout trials, or trials x folds cross-validation runs."""
    if mode not in ("holdout", "cross_validation"):
        raise ValueError(f"unknown experiment mode {mode!r}")
    source = cfg.label_source
    jobs: list[tuple[int, int | None, SplitManifest, SplitManifest, SplitManifest]] = []
    if mode == "holdout":
        fit_name, val_name = ("FIT_AGREE", "VALIDATE_AGREE") if source == "agree-only" else ("FIT", "VALIDATE")
        for name in (fit_name, val_name, "TEST"):
            if name not in splits:
                raise PartitionError(f"missing split {name}")
        for t in range(cfg.trials):
            jobs.append((t, None, splits[fit_name], splits[val_name], splits["TEST"]))
    else:
        folds = fold_set_from(splits)
        if folds.k != cfg.cross_val_folds:
            log.warning("split bundle has %d folds, config asks for %d", folds.k, cfg.cross_val_folds)
        for t in range(cfg.trials):
            for f, fold in enumerate(folds.folds):
                jobs.append((t, f, fold.cross_fit, fold.cross_validate, fold.cross_test))

    results, runs = [], []
    for t, f, fit_m, val_m, test_m in jobs:
        fit = training_frame(label_set, fit_m, source)
        val = training_frame(label_set, val_m, source)
        test = training_frame(label_set, test_m, source)
        run_dir = None
        if out_dir is not None:
            run_dir = Path(out_dir) / (f"fold_{f}" if f is not None else "holdout")
        result = trial_runner(fit, val, test, cfg, trial_index=t, out_dir=run_dir, keep_model=False)
        results.append(result)
        runs.append({"trial": t, "fold": f, **result.summary()})
    report = ExperimentReport(mode, runs, aggregate_runs(results))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "experiment.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report
