"""Response parsing and the k-threshold decision rule.

Direct responses
    optional opening wrappers  ``[ ( " ' * #`` and "Class"/"Category" words,
    then a single digit 1-3 not followed by another digit or a decimal
    point, then optional closing punctuation; whatever follows is the
    explanation (outer square brackets removed).

Confidence responses
    optional wrappers, a number, optional ``%``, a comma, a number,
    optional ``%``; whatever follows is the explanation.  Each number must
    lie in [0, 100].  A pair summing above 100 is rescaled proportionally
    to sum to 100 and flagged.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from tweetframe.labels import Category
from tweetframe.metrics import classification_report


class ParseFailure(ValueError):
    """The response does not follow the expected format."""


@dataclass(frozen=True)
class DirectParse:
    label: Category
    explanation: str | None = None


class ConfidenceParse(NamedTuple):
    conf1: float
    conf2: float
    conf3: float
    rescaled: bool = False
    explanation: str | None = None

    @property
    def confs(self) -> tuple[float, float, float]:
        return (self.conf1, self.conf2, self.conf3)


_LEAD = r"^\s*(?:[\[\(\"'*#`]\s*)*(?:(?:class|category|label)\s*[:#]?\s*)?"
_DIRECT = re.compile(_LEAD + r"([1-3])(?![0-9]|\.[0-9])\s*[\]\)\"'*`.:,;\-]*\s*(.*)$", re.I | re.S)
_NUM = r"(\d+(?:\.\d+)?)\s*%?"
_CONF = re.compile(_LEAD + _NUM + r"\s*,\s*" + _NUM + r"(?![0-9])\s*[\]\)\"'*`.:;\-]*\s*(.*)$", re.I | re.S)


def _explanation(rest: str) -> str | None:
    rest = rest.strip()
    if rest.startswith("[") and rest.endswith("]"):
        rest = rest[1:-1].strip()
    return rest or None


def parse_direct(raw: str) -> DirectParse:
    m = _DIRECT.match(raw or "")
    if not m:
        raise ParseFailure(f"no leading label 1-3 in {raw!r}")
    return DirectParse(Category(int(m.group(1))), _explanation(m.group(2)))


def parse_confidence(raw: str) -> ConfidenceParse:
    m = _CONF.match(raw or "")
    if not m:
        raise ParseFailure(f"expected CONF1,CONF2 in {raw!r}")
    c1, c2 = float(m.group(1)), float(m.group(2))
    if re.match(r"\s*,\s*\d", m.group(3)):
        raise ParseFailure(f"more than two confidences in {raw!r}")
    if c1 > 100 or c2 > 100:
        raise ParseFailure(f"confidence outside [0, 100] in {raw!r}")
    rescaled = c1 + c2 > 100
    if rescaled:
        total = c1 + c2
        c1, c2 = 100 * c1 / total, 100 * c2 / total
    c3 = max(0.0, 100.0 - c1 - c2)
    return ConfidenceParse(c1, c2, c3, rescaled, _explanation(m.group(3)))


def decide_k_threshold(confs: Sequence[float], k: float, tie_break: Category = Category.PROBLEM) -> Category:
    """Other when implicit class-3 confidence exceeds k, else the larger of classes 1 and 2."""
    c1, c2, c3 = (float(c) for c in confs[:3])
    if c3 > k:
        return Category.OTHER
    if c1 == c2:
        return Category(tie_break)
    return Category.PROBLEM if c1 > c2 else Category.SOLUTION


K_GRID = tuple(float(k) for k in range(1, 101))


@dataclass
class GridSearchResult:
    best_k_accuracy: float
    best_k_macro_f1: float
    curve: list[dict]

    def best(self, metric: str) -> float:
        return {"accuracy": self.best_k_accuracy, "macro_f1": self.best_k_macro_f1}[metric]


def grid_search_k(
    scored: Sequence[tuple[Sequence[float], int]],
    k_values: Sequence[float] = K_GRID,
    tie_break: Category = Category.PROBLEM,
) -> GridSearchResult:
    """Evaluate every k; the best k per metric is the lowest one attaining the maximum."""
    if not scored:
        raise ValueError("grid search needs at least one scored example")
    gold = np.array([int(g) for _, g in scored])
    curve = []
    for k in k_values:
        pred = [int(decide_k_threshold(c, k, tie_break)) for c, _ in scored]
        rep = classification_report(pred, gold)
        curve.append({
            "k": float(k),
            "accuracy": rep.accuracy,
            "macro_f1": rep.macro_f1,
            "weighted_f1": rep.weighted_f1,
            **{f"f1_{c}": rep.per_class[c].f1 for c in rep.per_class},
            **{f"precision_{c}": rep.per_class[c].precision for c in rep.per_class},
            **{f"recall_{c}": rep.per_class[c].recall for c in rep.per_class},
        })
    acc = np.array([row["accuracy"] for row in curve])
    mf1 = np.array([row["macro_f1"] for row in curve])
    return GridSearchResult(curve[int(np.argmax(acc))]["k"], curve[int(np.argmax(mf1))]["k"], curve)
