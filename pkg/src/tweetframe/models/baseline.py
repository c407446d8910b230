"""Year + author baselines: multinomial logistic regression and gradient-boosted trees."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from tweetframe.corpus import Tweet, year_of
from tweetframe.labels import LABELS
from tweetframe.metrics import classification_report

log = logging.getLogger(__name__)

YEAR_RANGE = (2008, 2023)
UNKNOWN = "<unk>"

LOGREG_GRID = {"C": [0.01, 0.1, 1.0, 10.0]}
GBTREE_GRID = {"max_depth": [2, 4, 6], "n_estimators": [100, 300]}


@dataclass(frozen=True)
class AuthorIndex:
    authors: tuple[str, ...]

    @classmethod
    def build(cls, author_ids: Sequence) -> "AuthorIndex":
        return cls(tuple(sorted({str(a) for a in author_ids})))

    def __len__(self) -> int:
        return len(self.authors) + 1  # last slot is the unknown bucket

    def position(self, author_id) -> int:
        lookup = getattr(self, "_lookup", None)
        if lookup is None:
            lookup = {a: i for i, a in enumerate(self.authors)}
            object.__setattr__(self, "_lookup", lookup)
        return lookup.get(str(author_id), len(self.authors))


def normalized_year(year: int, span: tuple[int, int] = YEAR_RANGE) -> float:
    lo, hi = span
    return (year - lo) / (hi - lo)


def featurize_baseline(tweet: Tweet, index: AuthorIndex, span: tuple[int, int] = YEAR_RANGE) -> np.ndarray:
    """[min-max normalized year] followed by a one-hot author vector with an unknown slot."""
    vec = np.zeros(1 + len(index))
    year = tweet.year
    vec[0] = normalized_year(year, span) if year is not None else 0.0
    vec[1 + index.position(tweet.author_id)] = 1.0
    return vec


def featurize_frame(frame: pd.DataFrame, index: AuthorIndex, span: tuple[int, int] = YEAR_RANGE) -> np.ndarray:
    years = frame["year"] if "year" in frame.columns else frame["created_at"].map(year_of)
    x = np.zeros((len(frame), 1 + len(index)))
    x[:, 0] = [normalized_year(int(y), span) if pd.notna(y) else 0.0 for y in years]
    cols = [1 + index.position(a) for a in frame["author_id"]]
    x[np.arange(len(frame)), cols] = 1.0
    return x


class BaselineClassifier:
    def __init__(self, kind: str, model, index: AuthorIndex, classes: np.ndarray, params: dict):
        self.kind = kind
        self.model = model
        self.index = index
        self.classes = classes  # category codes the estimator saw, in its column order
        self.params = params

    def predict_proba(self, frame: pd.DataFrame) -> np.ndarray:
        raw = self.model.predict_proba(featurize_frame(frame, self.index))
        out = np.zeros((len(frame), len(LABELS)))
        out[:, self.classes - 1] = raw
        return out

    def predict(self, frame: pd.DataFrame) -> np.ndarray:
        return self.predict_proba(frame).argmax(axis=1) + 1


def _make_estimator(kind: str, params: dict, seed: int):
    if kind == "logreg":
        from sklearn.linear_model import LogisticRegression

        return LogisticRegression(max_iter=2000, **params)
    if kind == "gbtree":
        from xgboost import XGBClassifier

        return XGBClassifier(learning_rate=0.1, random_state=seed, n_jobs=1, tree_method="hist", **params)
    raise ValueError(f"unknown baseline kind {kind!r}")


def train_baseline(
    kind: str,
    fit: pd.DataFrame,
    validate: pd.DataFrame | None = None,
    label_col: str = "label",
    params: dict | None = None,
    seed: int = 2025,
) -> BaselineClassifier:
    """Fit a baseline on year + author features.

    Without explicit ``params`` a small grid is searched, keeping the
    setting with the best macro F1 on ``validate``.
    """
    if len(fit) == 0:
        raise ValueError("empty fit set")
    y = fit[label_col].to_numpy(dtype=int)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("single-class fit set")
    index = AuthorIndex.build(fit["author_id"])
    x = featurize_frame(fit, index)
    encoded = np.searchsorted(classes, y)

    grid = LOGREG_GRID if kind == "logreg" else GBTREE_GRID
    if params is not None:
        candidates = [params]
    elif validate is None or len(validate) == 0:
        candidates = [{k: v[len(v) // 2] for k, v in grid.items()}]
    else:
        candidates = [dict(zip(grid, combo)) for combo in itertools.product(*grid.values())]

    best, best_score = None, -1.0
    for cand in candidates:
        est = _make_estimator(kind, cand, seed).fit(x, encoded)
        clf = BaselineClassifier(kind, est, index, classes, cand)
        if len(candidates) == 1:
            return clf
        score = classification_report(clf.predict(validate), validate[label_col].to_numpy()).macro_f1
        log.debug("%s %s validate macro-F1 %.4f", kind, cand, score)
        if score > best_score:
            best, best_score = clf, score
    log.info("%s baseline selected %s (validate macro-F1 %.4f)", kind, best.params, best_score)
    return best
