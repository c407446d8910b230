"""Corpus ingestion, ID restoration for the expert-labeled file, and label validation."""

from __future__ import annotations

import csv
import json
import logging
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np
import pandas as pd
from rapidfuzz import process
from rapidfuzz.distance import Levenshtein

from tweetframe.labels import LABELS

log = logging.getLogger(__name__)

CORPUS_FIELDS = ("tweet_id", "text", "author_id", "created_at")
LABELED_FIELDS = ("text", "label_ar", "label_mb", "year")
CORPUS_SPAN = ("2008-01", "2023-02")
LABEL_COLUMNS = [
    "tweet_id", "text", "author_id", "created_at", "year",
    "label_ar", "label_mb", "match_score", "record_index",
]

_DATE_RE = re.compile(r"^\s*(\d{4})(?:-(\d{1,2})(?:-(\d{1,2}))?)?")


class CorpusError(Exception):
    """Fatal ingestion or matching problem."""


def parse_posted_at(value: str) -> tuple[int, int | None, int | None]:
    """Split an ISO-8601 date (or timestamp) into (year, month, day); month/day may be absent."""
    m = _DATE_RE.match(str(value))
    if not m:
        raise ValueError(f"unparseable date {value!r}")
    year = int(m.group(1))
    month = int(m.group(2)) if m.group(2) else None
    day = int(m.group(3)) if m.group(3) else None
    if month is not None:
        date(year, month, day or 1)
    return year, month, day


def year_of(value) -> int | None:
    try:
        return parse_posted_at(value)[0]
    except ValueError:
        return None


@dataclass(frozen=True)
class Tweet:
    tweet_id: str
    text: str
    author_id: str = ""
    posted_at: str = ""

    @property
    def year(self) -> int | None:
        return year_of(self.posted_at)


@dataclass(frozen=True)
class RowError:
    line: int
    reason: str
    tweet_id: str | None = None


@dataclass
class Corpus:
    """Tweets held column-wise; ``frame`` is indexed by position with a tweet_id column."""

    frame: pd.DataFrame
    errors: list[RowError] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[Tweet]:
        for row in self.frame.itertuples(index=False):
            yield Tweet(row.tweet_id, row.text, row.author_id, row.created_at)

    @classmethod
    def from_tweets(cls, tweets: Iterable[Tweet]) -> "Corpus":
        rows = [
            {"tweet_id": t.tweet_id, "text": t.text, "author_id": str(t.author_id), "created_at": t.posted_at}
            for t in tweets
        ]
        frame = pd.DataFrame(rows, columns=list(CORPUS_FIELDS))
        if frame["tweet_id"].duplicated().any():
            raise CorpusError("duplicate tweet_id in tweet list")
        return cls(frame)

    def tweet_at(self, pos: int) -> Tweet:
        row = self.frame.iloc[pos]
        return Tweet(row["tweet_id"], row["text"], row["author_id"], row["created_at"])

    def ids(self) -> set[str]:
        return set(self.frame["tweet_id"])


def _month_key(year: int, month: int | None) -> str:
    return f"{year:04d}-{month or 1:02d}"


def _iter_rows(path: Path, fmt: str) -> Iterator[tuple[int, dict | None, str | None]]:
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = [f for f in CORPUS_FIELDS if f not in (reader.fieldnames or [])]
            if missing:
                raise CorpusError(f"{path}: missing columns {missing}")
            start = 2
            for row in reader:
                yield start, row, None
                start = reader.line_num + 1
    else:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    yield lineno, None, f"invalid JSON: {exc.msg}"
                    continue
                if not isinstance(obj, dict):
                    yield lineno, None, "row is not an object"
                    continue
                yield lineno, obj, None


def ingest_corpus(
    path: str | Path,
    format: str | None = None,
    span: tuple[str, str] | None = CORPUS_SPAN,
) -> Corpus:
    """Read a CSV or JSONL corpus file.

    Rows with missing fields, empty text, bad dates, or a tweet_id already
    seen are skipped and reported in ``Corpus.errors`` with their line
    number.  An unreadable file raises ``CorpusError``.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "json":
        fmt = "jsonl"
    if fmt not in ("csv", "jsonl"):
        raise CorpusError(f"unsupported corpus format {fmt!r}")
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")

    columns: dict[str, list[str]] = {f: [] for f in CORPUS_FIELDS}
    seen: set[str] = set()
    errors: list[RowError] = []
    try:
        for lineno, row, problem in _iter_rows(path, fmt):
            if problem:
                errors.append(RowError(lineno, problem))
                continue
            missing = [f for f in CORPUS_FIELDS if row.get(f) in (None, "")]
            tid = None if row.get("tweet_id") in (None, "") else str(row["tweet_id"]).strip()
            if missing:
                errors.append(RowError(lineno, f"missing required field(s) {missing}", tid))
                continue
            text = str(row["text"])
            if not text.strip():
                errors.append(RowError(lineno, "empty text", tid))
                continue
            created = str(row["created_at"]).strip()
            try:
                year, month, _ = parse_posted_at(created)
            except ValueError as exc:
                errors.append(RowError(lineno, str(exc), tid))
                continue
            if span is not None and not (span[0] <= _month_key(year, month) <= span[1]):
                errors.append(RowError(lineno, f"date {created} outside {span[0]}..{span[1]}", tid))
                continue
            if tid in seen:
                errors.append(RowError(lineno, f"duplicate tweet_id {tid}", tid))
                continue
            seen.add(tid)
            columns["tweet_id"].append(tid)
            columns["text"].append(text)
            columns["author_id"].append(str(row["author_id"]).strip())
            columns["created_at"].append(created)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc

    frame = pd.DataFrame(columns)
    log.info("ingested %d tweets from %s (%d rows rejected)", len(frame), path, len(errors))
    for err in errors[:20]:
        log.warning("line %d: %s", err.line, err.reason)
    return Corpus(frame, errors)


_ISO_LANG = re.compile(r"^[a-z]{2,3}$")


def filter_language(
    corpus: Corpus,
    keep: str = "en",
    detector: Callable[[str], str] | str | None = None,
) -> Corpus:
    """Keep tweets whose detected language equals ``keep``.

    ``detector=None`` is pass-through (the distributed corpus is already
    English-only).  ``"langdetect"`` uses the optional langdetect package;
    any callable ``text -> code`` may be supplied.
    """
    if not _ISO_LANG.match(keep or ""):
        raise ValueError(f"invalid ISO language code {keep!r}")
    if detector is None:
        return corpus
    if detector == "langdetect":
        try:
            from langdetect import DetectorFactory, detect
        except ImportError as exc:
            raise CorpusError(
                "language filtering requested but langdetect is not installed; "
                "run `pip install langdetect` or pass a detector callable"
            ) from exc
        DetectorFactory.seed = 0

        def detector(text: str) -> str:  # noqa: F811
            try:
                return detect(text)
            except Exception:
                return "unknown"

    if not callable(detector):
        raise CorpusError(f"unknown language detector {detector!r}")
    mask = corpus.frame["text"].map(lambda t: detector(t) == keep)
    kept = corpus.frame[mask.astype(bool)].reset_index(drop=True)
    log.info("language filter %s kept %d of %d tweets", keep, len(kept), len(corpus))
    return Corpus(kept, list(corpus.errors))


# -- ID restoration ----------------------------------------------------------------

_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Case-fold and collapse whitespace; the form compared during matching."""
    return _WS.sub(" ", str(text).casefold()).strip()


def similarity(a: str, b: str) -> float:
    """Levenshtein similarity on normalized text: 1 - distance / max(len)."""
    return Levenshtein.normalized_similarity(normalize_text(a), normalize_text(b))


@dataclass(frozen=True)
class RawLabeledRecord:
    text: str
    label_ar: int
    label_mb: int
    source_year: int | None = None


@dataclass(frozen=True)
class LabeledExample:
    tweet: Tweet
    label_ar: int
    label_mb: int
    match_score: float
    record_index: int = -1


@dataclass(frozen=True)
class ReviewItem:
    record_index: int
    record: RawLabeledRecord
    candidates: tuple[tuple[str, float], ...]
    reason: str  # "fuzzy" (threshold <= score < 1) or "tie"


@dataclass(frozen=True)
class Discarded:
    record_index: int
    record: RawLabeledRecord
    best_score: float
    best_tweet_id: str | None


class RestoreResult(NamedTuple):
    matched: list[LabeledExample]
    review_queue: list[ReviewItem]
    discarded: list[Discarded]


def load_labeled_file(path: str | Path) -> list[RawLabeledRecord]:
    """Read the expert CSV (text, label_ar, label_mb, year); codes are not validated here."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in LABELED_FIELDS if c not in df.columns]
    if missing:
        raise CorpusError(f"{path}: missing columns {missing}")
    records = []
    for i, row in enumerate(df.itertuples(index=False), start=2):
        try:
            ar, mb = int(row.label_ar), int(row.label_mb)
        except ValueError as exc:
            raise CorpusError(f"{path} line {i}: non-integer label code") from exc
        year = int(row.year) if str(row.year).strip() else None
        records.append(RawLabeledRecord(row.text, ar, mb, year))
    return records


class _Matcher:
    def __init__(self, corpus: Corpus, threshold: float, restrict_to_year: bool):
        self.corpus = corpus
        self.threshold = threshold
        self.restrict_to_year = restrict_to_year
        frame = corpus.frame
        self.ids = frame["tweet_id"].tolist()
        self.norm = [normalize_text(t) for t in frame["text"]]
        self.years = [year_of(d) for d in frame["created_at"]]
        self.exact: dict[str, list[int]] = defaultdict(list)
        by_year: dict[int | None, list[int]] = defaultdict(list)
        for pos, (text, year) in enumerate(zip(self.norm, self.years)):
            self.exact[text].append(pos)
            by_year[year].append(pos)
        self.by_year = {y: (p, [self.norm[i] for i in p]) for y, p in by_year.items()}

    def _scope(self, year: int | None) -> tuple[list[int] | None, list[str]]:
        if self.restrict_to_year and year is not None and year in self.by_year:
            return self.by_year[year]
        return None, self.norm

    def match(self, index: int, rec: RawLabeledRecord):
        query = normalize_text(rec.text)
        hits = self.exact.get(query, [])
        if hits:
            if self.restrict_to_year and rec.source_year is not None and len(hits) > 1:
                narrowed = [h for h in hits if self.years[h] == rec.source_year]
                hits = narrowed or hits
            if len(hits) == 1:
                return "matched", LabeledExample(self.corpus.tweet_at(hits[0]), rec.label_ar, rec.label_mb, 1.0, index)
            cands = tuple(sorted((self.ids[h], 1.0) for h in hits))
            return "review", ReviewItem(index, rec, cands, "tie")

        positions, choices = self._scope(rec.source_year)
        if not choices:
            return "discarded", Discarded(index, rec, 0.0, None)
        scores = process.cdist([query], choices, scorer=Levenshtein.normalized_similarity,
                               processor=None, dtype=np.float64)[0]
        score = float(scores.max())
        local = np.flatnonzero(scores == score)
        tied = [positions[j] if positions is not None else int(j) for j in local]
        if score < self.threshold:
            return "discarded", Discarded(index, rec, score, self.ids[tied[0]])
        reason = "tie" if len(tied) > 1 else "fuzzy"
        cands = tuple(sorted((self.ids[p], score) for p in tied))
        return "review", ReviewItem(index, rec, cands, reason)


def restore_ids(
    raw: Sequence[RawLabeledRecord],
    corpus: Corpus,
    threshold: float = 0.80,
    restrict_to_year: bool = True,
    workers: int = 1,
) -> RestoreResult:
    """Match each labeled record to its best corpus tweet.

    Score 1.0 (identical normalized text, unique) is accepted outright;
    ``threshold <= score < 1`` and any tie for the best score go to the
    review queue; anything lower is discarded.  Output order follows the
    input order regardless of ``workers``.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    if len(corpus) == 0:
        raise CorpusError("cannot restore ids against an empty corpus")
    matcher = _Matcher(corpus, threshold, restrict_to_year)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda ir: matcher.match(*ir), enumerate(raw)))
    else:
        outcomes = [matcher.match(i, rec) for i, rec in enumerate(raw)]
    result = RestoreResult([], [], [])
    for kind, item in outcomes:
        getattr(result, {"matched": "matched", "review": "review_queue", "discarded": "discarded"}[kind]).append(item)
    log.info(
        "restore_ids: %d exact, %d for review, %d discarded",
        len(result.matched), len(result.review_queue), len(result.discarded),
    )
    return result


def write_review_manifest(queue: Sequence[ReviewItem], path: str | Path) -> None:
    """One JSONL line per (record, candidate) with decision "pending" for a human to edit."""
    with open(path, "w", encoding="utf-8") as fh:
        for item in queue:
            for tid, score in item.candidates:
                fh.write(json.dumps({
                    "record_index": item.record_index,
                    "candidate_tweet_id": tid,
                    "score": score,
                    "decision": "pending",
                    "reason": item.reason,
                    "record_text": item.record.text,
                }, ensure_ascii=False) + "\n")


def read_review_manifest(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def apply_review_decisions(
    queue: Sequence[ReviewItem],
    decisions: Sequence[dict],
    corpus: Corpus,
    accept_all: bool = False,
) -> tuple[list[LabeledExample], list[ReviewItem]]:
    """Resolve the review queue from a decision manifest.

    Returns (accepted examples, still unresolved items).  ``accept_all``
    accepts every non-tie candidate, for runs where review was done
    out-of-band.  A record with more than one accepted candidate is an error.
    """
    by_record: dict[int, list[dict]] = defaultdict(list)
    for d in decisions:
        if d.get("decision") not in ("accept", "reject", "pending"):
            raise CorpusError(f"bad decision {d.get('decision')!r} for record {d.get('record_index')}")
        by_record[int(d["record_index"])].append(d)
    pos_of = {tid: i for i, tid in enumerate(corpus.frame["tweet_id"])}
    accepted, unresolved = [], []
    for item in queue:
        chosen = [d for d in by_record.get(item.record_index, []) if d["decision"] == "accept"]
        if accept_all and not chosen and item.reason != "tie":
            chosen = [{"candidate_tweet_id": tid, "score": s} for tid, s in item.candidates]
        if len(chosen) > 1:
            raise CorpusError(f"record {item.record_index}: {len(chosen)} candidates accepted")
        if not chosen:
            unresolved.append(item)
            continue
        tid = str(chosen[0]["candidate_tweet_id"])
        if tid not in pos_of:
            raise CorpusError(f"record {item.record_index}: accepted tweet {tid} not in corpus")
        tweet = corpus.tweet_at(pos_of[tid])
        accepted.append(LabeledExample(tweet, item.record.label_ar, item.record.label_mb,
                                       float(chosen[0]["score"]), item.record_index))
    return accepted, unresolved


def validate_labels(candidates: Sequence[LabeledExample]) -> pd.DataFrame:
    """Drop examples with any coder label outside {1,2,3}; return the LABEL frame."""
    rows = []
    for ex in candidates:
        bad = [code for code in (ex.label_ar, ex.label_mb) if code not in LABELS]
        if bad:
            log.warning("removed record %d (tweet %s): invalid code %d",
                        ex.record_index, ex.tweet.tweet_id, bad[0])
            continue
        rows.append({
            "tweet_id": ex.tweet.tweet_id,
            "text": ex.tweet.text,
            "author_id": ex.tweet.author_id,
            "created_at": ex.tweet.posted_at,
            "year": ex.tweet.year,
            "label_ar": int(ex.label_ar),
            "label_mb": int(ex.label_mb),
            "match_score": float(ex.match_score),
            "record_index": ex.record_index,
        })
    frame = pd.DataFrame(rows, columns=LABEL_COLUMNS)
    if frame["tweet_id"].duplicated().any():
        dups = frame.loc[frame["tweet_id"].duplicated(), "tweet_id"].tolist()
        log.warning("%d labeled records map to an already-labeled tweet: %s", len(dups), dups[:10])
    return frame


def read_label_set(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"tweet_id": str, "author_id": str, "created_at": str, "text": str},
                        keep_default_na=False)
    missing = [c for c in ("tweet_id", "text", "label_ar", "label_mb") if c not in frame.columns]
    if missing:
        raise CorpusError(f"{path}: missing columns {missing}")
    if "year" not in frame.columns:
        frame["year"] = [year_of(d) for d in frame.get("created_at", [""] * len(frame))]
    return frame


def write_label_set(frame: pd.DataFrame, path: str | Path) -> None:
    frame.to_csv(path, index=False)


def unlabeled_pool(corpus: Corpus, label_set: pd.DataFrame) -> pd.DataFrame:
    """UNLABEL: corpus tweets whose id is not in LABEL."""
    mask = ~corpus.frame["tweet_id"].isin(set(label_set["tweet_id"]))
    return corpus.frame[mask].reset_index(drop=True)
