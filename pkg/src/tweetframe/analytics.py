"""Monthly label aggregates joined with author metadata, plus figure exports."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from tweetframe.corpus import CORPUS_SPAN, parse_posted_at
from tweetframe.labels import LABELS

log = logging.getLogger(__name__)

METADATA_FIELDS = ("author_id", "party", "gender", "race", "state")
GROUPINGS = ("party", "gender", "race", "none")
UNKNOWN_GROUP = "unknown"
ALL_GROUP = "all"

_PARTY = {
    "d": "D", "dem": "D", "democrat": "D", "democratic": "D",
    "r": "R", "rep": "R", "republican": "R", "gop": "R",
    "i": "I", "ind": "I", "independent": "I",
}

COUNT_COLUMNS = [f"count_{c}" for c in LABELS]
PROP_COLUMNS = [f"prop_{c}" for c in LABELS]
AGGREGATE_COLUMNS = ["month", "group", *COUNT_COLUMNS, "total", *PROP_COLUMNS]


class MetadataError(ValueError):
    pass


def normalize_party(value: str) -> str:
    return _PARTY.get(str(value).strip().lower(), "other")


def load_metadata(path: str | Path) -> pd.DataFrame:
    """Author table indexed by author_id; duplicate ids are fatal."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in METADATA_FIELDS if c not in frame.columns]
    if missing:
        raise MetadataError(f"metadata file lacks column(s): {', '.join(missing)}")
    frame = frame[list(METADATA_FIELDS)].copy()
    frame["author_id"] = frame["author_id"].str.strip()
    dup = frame["author_id"][frame["author_id"].duplicated()]
    if len(dup):
        raise MetadataError(f"duplicate author_id {dup.iloc[0]!r} in metadata")
    frame["party"] = frame["party"].map(normalize_party)
    return frame.set_index("author_id")


def month_range(span: tuple[str, str] = CORPUS_SPAN) -> list[str]:
    return [str(p) for p in pd.period_range(span[0], span[1], freq="M")]


def _month_of(value) -> str | None:
    try:
        year, month, _ = parse_posted_at(value)
    except ValueError:
        return None
    if month is None:
        return None
    return f"{year:04d}-{month:02d}"


def unknown_authors(labeled: pd.DataFrame, metadata: pd.DataFrame) -> list[str]:
    authors = labeled["author_id"].astype(str)
    return sorted(set(authors[~authors.isin(metadata.index)]))


def aggregate_monthly(
    labeled: pd.DataFrame,
    metadata: pd.DataFrame | None = None,
    group_by: str = "party",
    span: tuple[str, str] = CORPUS_SPAN,
    label_col: str = "label",
) -> pd.DataFrame:
    """Per (month, group) category counts and within-group proportions.

    ``labeled`` needs author_id, created_at, and ``label_col``.  Every month
    in ``span`` appears for every group, zero-filled.  Rows whose date has
    no parseable month or falls outside the span are dropped and logged.
    """
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}, got {group_by!r}")
    months = month_range(span)
    frame = labeled[["author_id", "created_at", label_col]].copy()
    frame["month"] = frame["created_at"].map(_month_of)
    bad = frame["month"].isna() | ~frame["month"].isin(months)
    for idx in frame.index[bad]:
        log.warning("excluded row %s: date %r outside monthly span", idx, frame.at[idx, "created_at"])
    frame = frame[~bad].copy()

    if group_by == "none":
        frame["group"] = ALL_GROUP
    else:
        if metadata is None:
            raise ValueError(f"grouping by {group_by} needs author metadata")
        lookup = metadata[group_by]
        authors = frame["author_id"].astype(str)
        frame["group"] = authors.map(lookup).fillna(UNKNOWN_GROUP)
        frame.loc[frame["group"].astype(str).str.strip() == "", "group"] = UNKNOWN_GROUP
        missing = sorted(set(authors[~authors.isin(lookup.index)]))
        if missing:
            log.warning("%d author(s) absent from metadata, grouped as %s: %s",
                        len(missing), UNKNOWN_GROUP, ", ".join(missing))

    counts = (
        frame.groupby(["month", "group", label_col]).size()
        .unstack(label_col, fill_value=0)
        .reindex(columns=list(LABELS), fill_value=0)
    )
    counts.columns = COUNT_COLUMNS
    groups = sorted(frame["group"].unique())
    full = pd.MultiIndex.from_product([months, groups], names=["month", "group"])
    counts = counts.reindex(full, fill_value=0).astype(int)
    counts["total"] = counts[COUNT_COLUMNS].sum(axis=1)
    denom = counts["total"].where(counts["total"] > 0)
    for cc, pc in zip(COUNT_COLUMNS, PROP_COLUMNS):
        counts[pc] = (counts[cc] / denom).fillna(0.0)
    return counts.reset_index()[AGGREGATE_COLUMNS]


FIGURES = {
    "party": ("fig4_party_counts", "fig5_party_labels"),
    "gender": (None, "fig6_gender_labels"),
    "race": (None, "fig6_race_labels"),
    "none": (None, "labels_overall"),
}


def _write_csv(frame: pd.DataFrame, columns: Sequence[str], path: Path) -> None:
    if frame.empty:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(columns)
    else:
        frame[list(columns)].to_csv(path, index=False)


def _plot_counts(agg: pd.DataFrame, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    wide = agg.pivot(index="month", columns="group", values="total")
    fig, ax = plt.subplots(figsize=(12, 4))
    wide.plot(ax=ax, linewidth=1)
    ax.set_ylabel("tweets per month")
    ax.set_xlabel("")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_proportions(agg: pd.DataFrame, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = list(dict.fromkeys(agg["group"]))
    fig, axes = plt.subplots(len(groups), 1, figsize=(12, 2.6 * len(groups)), sharex=True, squeeze=False)
    names = {1: "problem", 2: "solution", 3: "other"}
    for ax, g in zip(axes[:, 0], groups):
        sub = agg[agg["group"] == g].set_index("month")[PROP_COLUMNS]
        ax.stackplot(range(len(sub)), *(sub[c] for c in PROP_COLUMNS),
                     labels=[names[c] for c in LABELS])
        ax.set_ylim(0, 1)
        ax.set_title(str(g), fontsize=9)
        ticks = list(range(0, len(sub), 12))
        ax.set_xticks(ticks)
        ax.set_xticklabels([sub.index[i][:4] for i in ticks], fontsize=7)
    axes[0, 0].legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_figures(
    aggregates: pd.DataFrame,
    out_dir: str | Path,
    group_by: str = "party",
    images: bool = True,
) -> list[Path]:
    """Tidy CSV per figure (the contract) plus optional PNG renderings."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts_name, props_name = FIGURES[group_by]
    written: list[Path] = []
    if counts_name:
        p = out / f"{counts_name}.csv"
        _write_csv(aggregates, ["month", "group", "total"], p)
        written.append(p)
        if images and not aggregates.empty:
            written.append(out / f"{counts_name}.png")
            _plot_counts(aggregates, written[-1])
    p = out / f"{props_name}.csv"
    _write_csv(aggregates, AGGREGATE_COLUMNS, p)
    written.append(p)
    if aggregates.empty:
        log.warning("no rows to plot for grouping %s; wrote header-only CSV", group_by)
    elif images:
        written.append(out / f"{props_name}.png")
        _plot_proportions(aggregates, written[-1])
    return written
