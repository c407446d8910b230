"""Seeded, reproducible data splits over the labeled set.

All functions take the LABEL frame (one row per tweet with ``tweet_id`` and
label columns) and return ``SplitManifest`` objects naming member ids.
Member ids are sorted before shuffling so results depend only on the set
of ids, the labels, and the seed, never on input row order.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)

LABEL_SOURCES = ("ar", "mb", "agree-only")
TEST_YEARS = range(2012, 2022)


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class SplitManifest:
    name: str
    member_ids: tuple[str, ...]
    seed: int
    parent: str | None = None

    def __len__(self) -> int:
        return len(self.member_ids)

    def to_dict(self) -> dict:
        return {"name": self.name, "seed": self.seed, "parent": self.parent, "member_ids": list(self.member_ids)}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(d["name"], tuple(str(i) for i in d["member_ids"]), int(d["seed"]), d.get("parent"))


class Fold(NamedTuple):
    cross_fit: SplitManifest
    cross_validate: SplitManifest
    cross_test: SplitManifest


@dataclass
class FoldSet:
    k: int
    folds: list[Fold] = field(default_factory=list)


def derive_seed(global_seed: int, tag: str) -> int:
    """Stable per-operation seed: same (seed, tag) gives the same value on every platform."""
    ss = np.random.SeedSequence([int(global_seed) & 0xFFFFFFFF, zlib.crc32(tag.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def label_column(source: str) -> str:
    if source not in LABEL_SOURCES:
        raise PartitionError(f"label source must be one of {LABEL_SOURCES}, got {source!r}")
    return "label_mb" if source == "mb" else "label_ar"


def subset(frame: pd.DataFrame, manifest: SplitManifest) -> pd.DataFrame:
    """Rows of ``frame`` belonging to ``manifest``, in manifest order."""
    indexed = frame.set_index("tweet_id", drop=False)
    missing = [i for i in manifest.member_ids if i not in indexed.index]
    if missing:
        raise PartitionError(f"{manifest.name}: {len(missing)} ids not in frame, e.g. {missing[:3]}")
    return indexed.loc[list(manifest.member_ids)].reset_index(drop=True)


def carve_test(
    label_set: pd.DataFrame,
    per_year: int = 50,
    years: Sequence[int] = TEST_YEARS,
    seed: int = 2025,
    year_column: str = "year",
) -> tuple[SplitManifest, SplitManifest]:
    """Sample ``per_year`` tweets from each year into TEST; the rest is TRAIN."""
    years = list(years)
    if not years:
        raise PartitionError("empty year range for TEST carving")
    if per_year < 0:
        raise PartitionError("per_year must be non-negative")
    rng = _rng(seed)
    chosen: list[str] = []
    year_values = pd.to_numeric(label_set[year_column], errors="coerce")
    for year in years:
        pool = np.sort(label_set.loc[year_values == year, "tweet_id"].astype(str).to_numpy())
        take = min(per_year, pool.size)
        if take < per_year:
            log.warning("year %d has %d labeled tweets, fewer than %d; taking all", year, pool.size, per_year)
        chosen.extend(rng.choice(pool, size=take, replace=False).tolist() if take else [])
    test_ids = set(chosen)
    test = SplitManifest("TEST", tuple(chosen), seed, "LABEL")
    train = SplitManifest(
        "TRAIN", tuple(sorted(i for i in label_set["tweet_id"].astype(str) if i not in test_ids)), seed, "LABEL"
    )
    return test, train


def fixed_test(label_set: pd.DataFrame, test_ids: Sequence[str], seed: int = 0) -> tuple[SplitManifest, SplitManifest]:
    """TEST/TRAIN from a given id list instead of a fresh carve."""
    wanted = {str(i) for i in test_ids}
    ids = label_set["tweet_id"].astype(str)
    test = SplitManifest("TEST", tuple(sorted(i for i in ids if i in wanted)), seed, "LABEL")
    unknown = wanted - set(test.member_ids)
    if unknown:
        log.warning("%d requested TEST ids are not in LABEL", len(unknown))
    train = SplitManifest("TRAIN", tuple(sorted(i for i in ids if i not in wanted)), seed, "LABEL")
    return test, train


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Integer counts summing to ``total`` closest to ``total * f``; ties go to the earlier slot."""
    quotas = [Fraction(f).limit_denominator(10**9) * total for f in fractions]
    counts = [int(q) for q in quotas]
    leftover = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _check_fractions(fractions: Sequence[float]) -> None:
    if not fractions or any(f <= 0 for f in fractions):
        raise PartitionError("fractions must all be > 0")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise PartitionError(f"fractions sum to {sum(fractions)}, expected 1")


def stratified_split(
    frame: pd.DataFrame,
    fractions: Sequence[float],
    names: Sequence[str],
    seed: int,
    stratify_on: str = "label_ar",
    parent: str | None = None,
) -> list[SplitManifest]:
    """Split ``frame`` so every class is divided by ``fractions`` (largest remainder)."""
    _check_fractions(fractions)
    if len(names) != len(fractions):
        raise PartitionError("need one name per fraction")
    rng = _rng(seed)
    buckets: list[list[str]] = [[] for _ in fractions]
    labels = frame[stratify_on]
    for cls in sorted(labels.unique().tolist()):
        ids = np.sort(frame.loc[labels == cls, "tweet_id"].astype(str).to_numpy())
        if ids.size < len(fractions):
            raise PartitionError(f"class {cls} has {ids.size} items, fewer than the {len(fractions)} output splits")
        ids = ids[rng.permutation(ids.size)]
        start = 0
        for bucket, count in zip(buckets, largest_remainder(ids.size, fractions)):
            bucket.extend(ids[start:start + count].tolist())
            start += count
    out = []
    for name, bucket in zip(names, buckets):
        order = rng.permutation(len(bucket))
        out.append(SplitManifest(name, tuple(bucket[i] for i in order), seed, parent))
    return out


def agreement_subset(train: pd.DataFrame, name: str = "TRAIN_AGREE", seed: int = 0,
                     parent: str | None = "TRAIN") -> SplitManifest:
    """Tweets where both coders gave the same label."""
    agree = train["label_ar"].astype(int) == train["label_mb"].astype(int)
    return SplitManifest(name, tuple(sorted(train.loc[agree, "tweet_id"].astype(str))), seed, parent)


def make_kfold(
    label_set: pd.DataFrame,
    k: int = 7,
    fit_fraction: float = 0.8,
    seed: int = 2025,
    stratify_on: str = "label_ar",
    stratify_folds: bool = True,
    parent: str = "LABEL",
) -> FoldSet:
    """k disjoint CROSS_TEST folds covering the set, each remainder split into CROSS_FIT/CROSS_VALIDATE."""
    n = len(label_set)
    if k < 2:
        raise PartitionError("k must be at least 2")
    if k > n:
        raise PartitionError(f"k={k} exceeds the {n} available examples")
    if not 0 < fit_fraction < 1:
        raise PartitionError("fit_fraction must be in (0, 1)")
    rng = _rng(seed)
    ids = label_set["tweet_id"].astype(str).to_numpy()
    if stratify_folds:
        # shuffle within class, lay classes end to end, deal round-robin
        labels = label_set[stratify_on].to_numpy()
        ordered: list[str] = []
        for cls in sorted(set(labels.tolist())):
            members = np.sort(ids[labels == cls])
            ordered.extend(members[rng.permutation(members.size)].tolist())
    else:
        members = np.sort(ids)
        ordered = members[rng.permutation(members.size)].tolist()
    assignment: list[list[str]] = [[] for _ in range(k)]
    for pos, tid in enumerate(ordered):
        assignment[pos % k].append(tid)

    indexed = label_set.assign(tweet_id=label_set["tweet_id"].astype(str))
    folds = []
    for f in range(k):
        test_ids = set(assignment[f])
        rest = indexed[~indexed["tweet_id"].isin(test_ids)]
        fit, val = stratified_split(
            rest, [fit_fraction, 1 - fit_fraction], [f"CROSS_FIT[{f}]", f"CROSS_VALIDATE[{f}]"],
            seed=derive_seed(seed, f"fold{f}"), stratify_on=stratify_on, parent=f"CROSS_TRAIN[{f}]",
        )
        test = SplitManifest(f"CROSS_TEST[{f}]", tuple(assignment[f]), seed, parent)
        folds.append(Fold(fit, val, test))
    return FoldSet(k, folds)


def build_split_tree(
    label_set: pd.DataFrame,
    global_seed: int = 2025,
    k: int = 7,
    test_ids: Sequence[str] | None = None,
    stratify_on: str = "label_ar",
    stratify_folds: bool = True,
) -> dict[str, SplitManifest]:
    """Every partition of the labeled set, keyed by manifest name."""
    label_set = label_set.assign(tweet_id=label_set["tweet_id"].astype(str))
    if test_ids is not None:
        test, train = fixed_test(label_set, test_ids, seed=global_seed)
    else:
        test, train = carve_test(label_set, seed=derive_seed(global_seed, "test"))
    if not train.member_ids:
        raise PartitionError("TEST takes every labeled tweet; TRAIN would be empty")
    splits = {"LABEL": SplitManifest("LABEL", tuple(sorted(label_set["tweet_id"])), global_seed), "TEST": test, "TRAIN": train}
    train_frame = subset(label_set, train)
    agree = agreement_subset(train_frame, seed=global_seed)
    splits["TRAIN_AGREE"] = agree
    for m in stratified_split(train_frame, [0.6, 0.2, 0.2], ["DEV_FIT", "DEV_VALIDATE", "DEV_TEST"],
                              seed=derive_seed(global_seed, "dev"), stratify_on=stratify_on, parent="TRAIN"):
        splits[m.name] = m
    for m in stratified_split(train_frame, [0.8, 0.2], ["FIT", "VALIDATE"],
                              seed=derive_seed(global_seed, "eval"), stratify_on=stratify_on, parent="TRAIN"):
        splits[m.name] = m
    agree_frame = subset(label_set, agree)
    for m in stratified_split(agree_frame, [0.8, 0.2], ["FIT_AGREE", "VALIDATE_AGREE"],
                              seed=derive_seed(global_seed, "agree"), stratify_on=stratify_on,
                              parent="TRAIN_AGREE"):
        splits[m.name] = m
    folds = make_kfold(label_set, k=k, seed=derive_seed(global_seed, "kfold"),
                       stratify_on=stratify_on, stratify_folds=stratify_folds)
    for fold in folds.folds:
        for m in fold:
            splits[m.name] = m
    return splits


def fold_set_from(splits: dict[str, SplitManifest]) -> FoldSet:
    k = sum(1 for name in splits if name.startswith("CROSS_TEST["))
    if k == 0:
        raise PartitionError("no cross-validation folds in split bundle")
    folds = [Fold(splits[f"CROSS_FIT[{f}]"], splits[f"CROSS_VALIDATE[{f}]"], splits[f"CROSS_TEST[{f}]"])
             for f in range(k)]
    return FoldSet(k, folds)


def save_splits(splits: dict[str, SplitManifest], path: str | Path) -> None:
    payload = {"splits": [m.to_dict() for m in splits.values()]}
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_splits(path: str | Path) -> dict[str, SplitManifest]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {d["name"]: SplitManifest.from_dict(d) for d in data["splits"]}
