"""Evaluation math: confusion matrices, F1 averages, and coder agreement.

Rows of every confusion matrix are the true label and columns the predicted
label, both ordered Problem, Solution, Other.  Empty denominators resolve to
0 and are recorded in ``flags`` rather than raising.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from tweetframe.labels import LABELS, NUM_LABELS

WEIGHT_SCHEMES = ("linear", "quadratic")


def _as_labels(values: Sequence[int], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).ravel()
    bad = ~np.isin(arr, LABELS)
    if bad.any():
        raise ValueError(f"{name} contains labels outside {LABELS}: {sorted(set(arr[bad].tolist()))}")
    return arr


def _paired(a: Sequence[int], b: Sequence[int], names=("pred", "gold")) -> tuple[np.ndarray, np.ndarray]:
    x = _as_labels(a, names[0])
    y = _as_labels(b, names[1])
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {names[0]} has {x.size} labels, {names[1]} has {y.size}")
    if x.size == 0:
        raise ValueError("cannot evaluate an empty labeling")
    return x, y


def confusion_matrix(pred: Sequence[int], gold: Sequence[int]) -> np.ndarray:
    """3x3 count matrix with ``cm[r, c]`` = #(gold == r+1 and pred == c+1)."""
    p, g = _paired(pred, gold)
    flat = (g - 1) * NUM_LABELS + (p - 1)
    return np.bincount(flat, minlength=NUM_LABELS * NUM_LABELS).reshape(NUM_LABELS, NUM_LABELS)


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    per_class: dict[int, ClassScores]
    confusion: np.ndarray
    n: int
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": {str(k): asdict(v) for k, v in self.per_class.items()},
            "confusion": self.confusion.tolist(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            accuracy=d["accuracy"],
            macro_f1=d["macro_f1"],
            weighted_f1=d["weighted_f1"],
            per_class={int(k): ClassScores(**v) for k, v in d["per_class"].items()},
            confusion=np.asarray(d["confusion"], dtype=np.int64),
            n=d["n"],
            flags=list(d.get("flags", [])),
        )

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text


def _safe_div(num: float, den: float) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def report_from_confusion(cm: np.ndarray) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    n = int(cm.sum())
    flags: list[str] = []
    per_class: dict[int, ClassScores] = {}
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    for i, label in enumerate(LABELS):
        tp = int(cm[i, i])
        if support[i] == 0 and predicted[i] == 0:
            flags.append(f"class {label} absent from both pred and gold")
        precision, p0 = _safe_div(tp, int(predicted[i]))
        recall, r0 = _safe_div(tp, int(support[i]))
        f1, f0 = _safe_div(2 * precision * recall, precision + recall)
        if p0:
            flags.append(f"class {label} precision undefined (no predictions), set to 0")
        if r0:
            flags.append(f"class {label} recall undefined (no support), set to 0")
        if f0 and not (p0 and r0):
            flags.append(f"class {label} f1 undefined (P+R=0), set to 0")
        per_class[label] = ClassScores(precision, recall, f1, int(support[i]))
    f1s = np.array([per_class[c].f1 for c in LABELS])
    macro = float(f1s.mean())
    weighted = float((support / n) @ f1s) if n else 0.0
    accuracy = float(np.trace(cm) / n) if n else 0.0
    return MetricsReport(accuracy, macro, weighted, per_class, cm, n, flags)


def classification_report(pred: Sequence[int], gold: Sequence[int]) -> MetricsReport:
    return report_from_confusion(confusion_matrix(pred, gold))


def write_confusion_csv(cm: np.ndarray, path: str | Path) -> None:
    names = ["problem", "solution", "other"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gold\\pred", *names])
        for name, row in zip(names, np.asarray(cm).tolist()):
            w.writerow([name, *row])


# -- agreement -----------------------------------------------------------------


def percent_agreement(a: Sequence[int], b: Sequence[int]) -> float:
    x, y = _paired(a, b, ("a", "b"))
    return float(np.mean(x == y))


def _kappa_from_matrix(observed: np.ndarray, weights: np.ndarray) -> tuple[float, bool]:
    n = observed.sum()
    obs = observed / n
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0))
    disagree_obs = float((weights * obs).sum())
    disagree_exp = float((weights * expected).sum())
    if disagree_exp == 0.0:
        # chance disagreement is zero: both raters constant on the same class
        return (1.0 if disagree_obs == 0.0 else 0.0), True
    return 1.0 - disagree_obs / disagree_exp, False


def _weight_matrix(scheme: str | None) -> np.ndarray:
    idx = np.arange(NUM_LABELS)
    dist = np.abs(idx[:, None] - idx[None, :]) / (NUM_LABELS - 1)
    if scheme is None:
        return (dist > 0).astype(float)
    if scheme == "linear":
        return dist
    if scheme == "quadratic":
        return dist**2
    raise ValueError(f"unknown weighting {scheme!r}; expected one of {WEIGHT_SCHEMES}")


def cohen_kappa(a: Sequence[int], b: Sequence[int]) -> float:
    """Unweighted Cohen's kappa, (p_o - p_e) / (1 - p_e).

    When both raters use a single identical class (p_e = 1) the value is
    1.0 if they agree everywhere and 0.0 otherwise.
    """
    x, y = _paired(a, b, ("a", "b"))
    return _kappa_from_matrix(confusion_matrix(y, x).astype(float), _weight_matrix(None))[0]


def weighted_kappa(a: Sequence[int], b: Sequence[int], weights: str = "linear") -> float:
    x, y = _paired(a, b, ("a", "b"))
    return _kappa_from_matrix(confusion_matrix(y, x).astype(float), _weight_matrix(weights))[0]


@dataclass
class AgreementReport:
    percent_agreement: float
    kappa: float
    weighted_kappa: float
    n: int
    weights: str = "linear"
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def agreement_report(a: Sequence[int], b: Sequence[int], weights: str = "linear") -> AgreementReport:
    x, y = _paired(a, b, ("a", "b"))
    observed = confusion_matrix(y, x).astype(float)
    kappa, degenerate = _kappa_from_matrix(observed, _weight_matrix(None))
    wkappa, wdegenerate = _kappa_from_matrix(observed, _weight_matrix(weights))
    flags = []
    if degenerate:
        flags.append("kappa degenerate: chance agreement is 1")
    if wdegenerate:
        flags.append("weighted kappa degenerate: expected weighted disagreement is 0")
    return AgreementReport(float(np.mean(x == y)), kappa, wkappa, int(x.size), weights, flags)
