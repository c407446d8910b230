"""Command-line entry point.

Every command writes its outputs into ``--out`` together with a
``manifest.json`` (command, config digest, input digests, seed, timing,
outputs) and a ``log.jsonl`` of structured log records.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from tweetframe import __version__
from tweetframe.config import ModelConfig, load_config

log = logging.getLogger("tweetframe")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config_digest: str | None
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None
    status: str = "running"
    version: str = __version__

    def add_input(self, path: str | Path | None) -> None:
        if path is not None and Path(path).is_file():
            self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: str | Path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


class JsonLineHandler(logging.Handler):
    def __init__(self, path: Path):
        super().__init__()
        self._fh = open(path, "a", encoding="utf-8")

    def emit(self, record: logging.LogRecord) -> None:
        entry = {
            "time": datetime.fromtimestamp(record.created, timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        self._fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()
        super().close()


# ---------------------------------------------------------------------------
# shared helpers


def _config(args) -> ModelConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"global_seed={args.seed}")
    return load_config(args.config, overrides)


def _labels(args, ctx: "Context") -> pd.DataFrame:
    from tweetframe.corpus import read_label_set

    ctx.manifest.add_input(args.labels)
    return read_label_set(args.labels)


def _splits(args, ctx: "Context"):
    from tweetframe.partition import load_splits

    ctx.manifest.add_input(args.splits)
    return load_splits(args.splits)


def _corpus_frame(path: str, ctx: "Context") -> pd.DataFrame:
    ctx.manifest.add_input(path)
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class Context:
    out: Path
    manifest: RunManifest
    cfg: ModelConfig | None


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args, ctx: Context) -> None:
    from tweetframe.corpus import filter_language, ingest_corpus

    ctx.manifest.add_input(args.corpus)
    corpus = ingest_corpus(args.corpus, format=args.format)
    if args.lang:
        corpus = filter_language(corpus, keep=args.lang, detector=args.detector)
    corpus.frame.to_csv(ctx.manifest.add_output(ctx.out / "corpus.csv"), index=False)
    pd.DataFrame([asdict(e) for e in corpus.errors], columns=["line", "reason", "tweet_id"]).to_csv(
        ctx.manifest.add_output(ctx.out / "row_errors.csv"), index=False)
    log.info("kept %d tweets, %d row errors", len(corpus), len(corpus.errors))


def cmd_restore_ids(args, ctx: Context) -> None:
    from tweetframe.corpus import (
        Corpus,
        apply_review_decisions,
        load_labeled_file,
        read_review_manifest,
        restore_ids,
        validate_labels,
        write_label_set,
        write_review_manifest,
    )

    ctx.manifest.add_input(args.labeled)
    raw = load_labeled_file(args.labeled)
    corpus = Corpus(_corpus_frame(args.corpus, ctx))
    result = restore_ids(raw, corpus, threshold=args.threshold, restrict_to_year=not args.any_year,
                         workers=args.workers)
    matched = list(result.matched)
    pending = result.review_queue
    if args.decisions or args.accept_all:
        decisions = []
        if args.decisions:
            ctx.manifest.add_input(args.decisions)
            decisions = read_review_manifest(args.decisions)
        accepted, pending = apply_review_decisions(pending, decisions, corpus, accept_all=args.accept_all)
        matched.extend(accepted)
    write_review_manifest(pending, ctx.manifest.add_output(ctx.out / "review.jsonl"))
    pd.DataFrame([{"record_index": d.record_index, "best_score": d.best_score, "text": d.record.text}
                  for d in result.discarded], columns=["record_index", "best_score", "text"]).to_csv(
        ctx.manifest.add_output(ctx.out / "discarded.csv"), index=False)
    frame = validate_labels(matched)
    write_label_set(frame, ctx.manifest.add_output(ctx.out / "label_set.csv"))
    summary = {"records": len(raw), "matched": len(frame), "pending_review": len(pending),
               "discarded": len(result.discarded)}
    _write_json(summary, ctx.manifest.add_output(ctx.out / "restore_summary.json"))
    log.info("restore-ids: %s", summary)


def cmd_split(args, ctx: Context) -> None:
    from tweetframe.partition import build_split_tree, save_splits

    label_set = _labels(args, ctx)
    test_ids = None
    if args.test_ids:
        ctx.manifest.add_input(args.test_ids)
        test_ids = [line.strip() for line in Path(args.test_ids).read_text().splitlines() if line.strip()]
    splits = build_split_tree(label_set, global_seed=ctx.cfg.global_seed, k=ctx.cfg.cross_val_folds,
                              test_ids=test_ids)
    save_splits(splits, ctx.manifest.add_output(ctx.out / "splits.json"))
    sizes = {name: len(m.member_ids) for name, m in splits.items()}
    _write_json(sizes, ctx.manifest.add_output(ctx.out / "split_sizes.json"))
    log.info("split sizes: TEST=%d TRAIN=%d TRAIN_AGREE=%d", sizes["TEST"], sizes["TRAIN"], sizes["TRAIN_AGREE"])


def _run_baseline(args, ctx: Context, label_set, splits) -> None:
    from tweetframe.metrics import classification_report
    from tweetframe.models.baseline import train_baseline
    from tweetframe.models.trainer import training_frame

    fit = training_frame(label_set, splits["FIT"], ctx.cfg.label_source)
    val = training_frame(label_set, splits["VALIDATE"], ctx.cfg.label_source)
    test = training_frame(label_set, splits["TEST"], ctx.cfg.label_source)

    clf = train_baseline(args.model, fit, val, seed=ctx.cfg.global_seed)
    report = classification_report(clf.predict(test), test["label"].to_numpy())
    out = {"model": args.model, "params": clf.params, "test": report.to_dict()}
    _write_json(out, ctx.manifest.add_output(ctx.out / "metrics.json"))
    log.info("%s test accuracy %.4f macro-F1 %.4f", args.model, report.accuracy, report.macro_f1)


def _experiment(mode: str) -> Callable:
    def run(args, ctx: Context) -> None:
        from tweetframe.models.trainer import run_experiment

        label_set = _labels(args, ctx)
        splits = _splits(args, ctx)
        if mode == "holdout" and args.model != "transformer":
            _run_baseline(args, ctx, label_set, splits)
            return
        report = run_experiment(mode, ctx.cfg, splits, label_set, out_dir=ctx.out)
        ctx.manifest.add_output(ctx.out / "experiment.json")
        for coder, metrics in report.aggregate.items():
            log.info("%s: %s", coder, {m: round(v["mean"], 4) for m, v in metrics.items()})
    return run


def _self_training_sets(label_set, splits, cfg):
    from tweetframe.models.trainer import training_frame

    train_name = "TRAIN_AGREE" if cfg.label_source == "agree-only" else "TRAIN"
    val_name = "VALIDATE_AGREE" if cfg.label_source == "agree-only" else "VALIDATE"
    train = training_frame(label_set, splits[train_name], cfg.label_source)
    validate = training_frame(label_set, splits[val_name], cfg.label_source)
    test = training_frame(label_set, splits["TEST"], cfg.label_source)
    return train, validate, test


def cmd_self_train(args, ctx: Context) -> None:
    from tweetframe.selftrain import TransformerTrainer, export_labeled_pool, run_self_training

    label_set = _labels(args, ctx)
    splits = _splits(args, ctx)
    corpus = _corpus_frame(args.corpus, ctx)
    train, validate, test = _self_training_sets(label_set, splits, ctx.cfg)
    unlabel = corpus[~corpus["tweet_id"].isin(set(label_set["tweet_id"].astype(str)))]
    trainer = TransformerTrainer(ctx.cfg, validate, out_dir=ctx.out)
    best, state = run_self_training(train, unlabel, test, ctx.cfg, trainer,
                                    validate_set=validate, out_dir=ctx.out)
    ctx.manifest.add_output(ctx.out / "iterations.jsonl")
    export_labeled_pool(state, ctx.manifest.add_output(ctx.out / "labeled_pool.csv"))
    if best is not None and hasattr(best, "model"):
        best.model.save(ctx.manifest.add_output(ctx.out / "best_model"))
    best_rec = next((r for r in state.history if r.iteration == state.best_iteration), None)
    _write_json({
        "best_iteration": state.best_iteration,
        "iterations": len(state.history),
        "pseudo_labels": int((state.labeled_pool["source"] == "pseudo").sum()),
        "best_test": best_rec.test_metrics.to_dict() if best_rec and best_rec.test_metrics else None,
    }, ctx.manifest.add_output(ctx.out / "summary.json"))


def _endpoint(args):
    from tweetframe.llm.client import LlmEndpoint

    return LlmEndpoint(base_url=args.base_url, model=args.llm_model, api_key_env=args.api_key_env,
                       timeout=args.timeout, max_retries=args.retries, concurrency=args.concurrency)


def _gold_lookup(label_set: pd.DataFrame, source: str) -> dict[str, int]:
    from tweetframe.partition import label_column

    col = label_column(source)
    return dict(zip(label_set["tweet_id"].astype(str), label_set[col].astype(int)))


def cmd_llm_classify(args, ctx: Context) -> None:
    from tweetframe.corpus import Tweet
    from tweetframe.llm.client import ResponseCache, classify_remote, write_responses, write_unclassified
    from tweetframe.llm.parsing import decide_k_threshold
    from tweetframe.llm.prompts import PromptSpec
    from tweetframe.metrics import classification_report
    from tweetframe.partition import subset

    label_set = _labels(args, ctx)
    frame = label_set
    if args.splits:
        frame = subset(label_set, _splits(args, ctx)[args.split])
    tweets = [Tweet(str(r.tweet_id), r.text) for r in frame.itertuples(index=False)]
    spec = PromptSpec(args.mode, args.explanation)
    cache_path = args.cache or os.environ.get("TWEETFRAME_LLM_CACHE") or str(ctx.out / "llm_cache.jsonl")
    responses = classify_remote(tweets, spec, _endpoint(args), cache=ResponseCache(cache_path))
    ctx.manifest.add_output(cache_path)
    write_responses(responses, spec, ctx.manifest.add_output(ctx.out / "responses.csv"))
    n_bad = write_unclassified(responses, ctx.manifest.add_output(ctx.out / "unclassified.csv"))
    gold = _gold_lookup(label_set, ctx.cfg.label_source)
    done = [r for r in responses if r.classified]
    if spec.mode == "direct":
        pred = [int(r.parsed.label) for r in done]
    else:
        pred = [int(decide_k_threshold(r.parsed.confs, args.k)) for r in done]
    if done:
        report = classification_report(pred, [gold[r.tweet_id] for r in done])
        payload = {"mode": spec.key, "k": args.k if spec.mode == "confidence" else None,
                   "unclassified": n_bad, "metrics": report.to_dict()}
        _write_json(payload, ctx.manifest.add_output(ctx.out / "metrics.json"))
        log.info("%s: accuracy %.4f macro-F1 %.4f (%d unclassified)", spec.key, report.accuracy,
                 report.macro_f1, n_bad)


def cmd_llm_grid(args, ctx: Context) -> None:
    from tweetframe.llm.parsing import grid_search_k

    label_set = _labels(args, ctx)
    ctx.manifest.add_input(args.responses)
    resp = pd.read_csv(args.responses, dtype={"tweet_id": str}, keep_default_na=False)
    if "conf1" not in resp.columns:
        raise ValueError(f"{args.responses} holds no confidence-mode responses")
    resp = resp[resp["conf1"].astype(str) != ""]
    gold = _gold_lookup(label_set, ctx.cfg.label_source)
    scored = [((float(r.conf1), float(r.conf2), float(r.conf3)), gold[r.tweet_id])
              for r in resp.itertuples(index=False) if r.tweet_id in gold]
    result = grid_search_k(scored)
    pd.DataFrame(result.curve).to_csv(ctx.manifest.add_output(ctx.out / "grid.csv"), index=False)
    _write_json({"best_k_accuracy": result.best_k_accuracy, "best_k_macro_f1": result.best_k_macro_f1,
                 "n": len(scored)}, ctx.manifest.add_output(ctx.out / "grid_best.json"))
    log.info("best k: accuracy %.0f, macro-F1 %.0f", result.best_k_accuracy, result.best_k_macro_f1)


def _read_labels_csv(path: str, col: str) -> pd.Series:
    frame = pd.read_csv(path, dtype={"tweet_id": str})
    if col not in frame.columns:
        raise ValueError(f"{path} has no column {col!r}")
    if "tweet_id" in frame.columns:
        return frame.set_index("tweet_id")[col].astype(int)
    return frame[col].astype(int)


def cmd_evaluate(args, ctx: Context) -> None:
    from tweetframe.metrics import agreement_report, classification_report, write_confusion_csv

    if args.agreement:
        label_set = _labels(args, ctx)
        rep = agreement_report(label_set["label_ar"].astype(int), label_set["label_mb"].astype(int),
                               weights=args.weights)
        _write_json(rep.to_dict(), ctx.manifest.add_output(ctx.out / "agreement.json"))
        log.info("agreement %.4f kappa %.4f weighted kappa %.4f", rep.percent_agreement, rep.kappa,
                 rep.weighted_kappa)
        return
    if not (args.pred and args.gold):
        raise UsageError("evaluate needs --pred and --gold, or --agreement with --labels")
    for p in (args.pred, args.gold):
        ctx.manifest.add_input(p)
    pred = _read_labels_csv(args.pred, args.pred_col)
    gold = _read_labels_csv(args.gold, args.gold_col)
    if isinstance(pred.index, pd.RangeIndex) or isinstance(gold.index, pd.RangeIndex):
        pairs = pd.DataFrame({"pred": pred.to_numpy(), "gold": gold.to_numpy()}) if len(pred) == len(gold) else None
        if pairs is None:
            raise ValueError("prediction and gold files differ in length and carry no tweet_id")
    else:
        pairs = pd.concat([pred.rename("pred"), gold.rename("gold")], axis=1, join="inner")
        if len(pairs) < len(gold):
            log.warning("%d gold tweets have no prediction", len(gold) - len(pairs))
    report = classification_report(pairs["pred"].to_numpy(), pairs["gold"].to_numpy())
    report.to_json(ctx.manifest.add_output(ctx.out / "metrics.json"))
    write_confusion_csv(report.confusion, ctx.manifest.add_output(ctx.out / "confusion.csv"))
    log.info("accuracy %.4f macro-F1 %.4f weighted-F1 %.4f", report.accuracy, report.macro_f1,
             report.weighted_f1)


def cmd_label_all(args, ctx: Context) -> None:
    from tweetframe.models.trainer import run_trial
    from tweetframe.partition import label_column

    label_set = _labels(args, ctx)
    splits = _splits(args, ctx)
    corpus = _corpus_frame(args.corpus, ctx)
    train, validate, test = _self_training_sets(label_set, splits, ctx.cfg)
    fit = train[~train["tweet_id"].isin(set(validate["tweet_id"]))]
    result = run_trial(fit, validate, test, ctx.cfg, out_dir=ctx.out / "training")
    result.model.save(ctx.manifest.add_output(ctx.out / "model"))
    unlabel = corpus[~corpus["tweet_id"].isin(set(label_set["tweet_id"].astype(str)))]
    probs = result.model.predict_proba(list(unlabel["text"])) if len(unlabel) else np.zeros((0, 3))
    col = label_column(ctx.cfg.label_source)
    expert = label_set[label_set[col].isin([1, 2, 3])]
    rows = pd.concat([
        pd.DataFrame({"tweet_id": expert["tweet_id"].astype(str), "label": expert[col].astype(int),
                      "confidence": 1.0, "source": "expert"}),
        pd.DataFrame({"tweet_id": unlabel["tweet_id"], "label": probs.argmax(1) + 1,
                      "confidence": probs.max(1) if len(probs) else [], "source": "model"}),
    ], ignore_index=True)
    rows["confident"] = rows["confidence"] >= args.min_confidence
    rows["confidence"] = rows["confidence"].round(6)
    rows.to_csv(ctx.manifest.add_output(ctx.out / "labeled_corpus.csv"), index=False)
    if result.test_report is not None:
        result.test_report.to_json(ctx.manifest.add_output(ctx.out / "test_metrics.json"))
    log.info("labeled %d tweets (%d by model, %d above %.2f)", len(rows), len(unlabel),
             int(rows["confident"].sum()), args.min_confidence)


def cmd_stats(args, ctx: Context) -> None:
    from tweetframe.analytics import aggregate_monthly, emit_figures, load_metadata, unknown_authors

    ctx.manifest.add_input(args.labeled)
    labeled = pd.read_csv(args.labeled, dtype={"tweet_id": str, "author_id": str}, keep_default_na=False)
    if not {"author_id", "created_at"} <= set(labeled.columns):
        if not args.corpus:
            raise UsageError("labeled file lacks author_id/created_at; pass --corpus to join them")
        corpus = _corpus_frame(args.corpus, ctx)[["tweet_id", "author_id", "created_at"]]
        labeled = labeled.drop(columns=[c for c in ("author_id", "created_at") if c in labeled.columns])
        labeled = labeled.merge(corpus, on="tweet_id", how="left").fillna({"created_at": "", "author_id": ""})
    if args.confident_only and "confident" in labeled.columns:
        labeled = labeled[labeled["confident"].astype(str).str.lower() == "true"]
    metadata = None
    if args.metadata:
        ctx.manifest.add_input(args.metadata)
        metadata = load_metadata(args.metadata)
        missing = unknown_authors(labeled, metadata)
        pd.Series(missing, name="author_id").to_csv(ctx.manifest.add_output(ctx.out / "unknown_authors.csv"),
                                                    index=False)
    groupings = args.group_by or (["party", "gender", "race", "none"] if metadata is not None else ["none"])
    for g in groupings:
        agg = aggregate_monthly(labeled, metadata, group_by=g)
        for p in emit_figures(agg, ctx.out, group_by=g, images=not args.no_images):
            ctx.manifest.add_output(p)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--log-level", default="INFO")
    if config:
        p.add_argument("--config", help="YAML file of config keys")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
        p.add_argument("--seed", type=int, help="shorthand for --set global_seed=N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tweetframe", description="Problem/solution framing of tweets.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="read and clean the raw corpus")
    _common(p, config=False)
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"])
    p.add_argument("--lang", help="keep only this ISO language code")
    p.add_argument("--detector", default="langdetect")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("restore-ids", help="match labeled records to corpus tweets")
    _common(p, config=False)
    p.add_argument("--labeled", required=True)
    p.add_argument("--corpus", required=True, help="cleaned corpus.csv from ingest")
    p.add_argument("--threshold", type=float, default=0.80)
    p.add_argument("--any-year", action="store_true", help="do not restrict candidates to the record's year")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--decisions", help="review.jsonl with accept/reject decisions")
    p.add_argument("--accept-all", action="store_true", help="accept every pending best candidate")
    p.set_defaults(func=cmd_restore_ids)

    p = sub.add_parser("split", help="build the split tree")
    _common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--test-ids", help="file with one TEST tweet_id per line")
    p.set_defaults(func=cmd_split)

    for name, mode in (("train", "holdout"), ("cross-validate", "cross_validation")):
        p = sub.add_parser(name, help=f"{mode.replace('_', ' ')} experiment")
        _common(p)
        p.add_argument("--labels", required=True)
        p.add_argument("--splits", required=True)
        if mode == "holdout":
            p.add_argument("--model", choices=["transformer", "logreg", "gbtree"], default="transformer")
        else:
            p.set_defaults(model="transformer")
        p.set_defaults(func=_experiment(mode))

    p = sub.add_parser("self-train", help="pseudo-labeling loop over the unlabeled pool")
    _common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_self_train)

    p = sub.add_parser("llm-classify", help="classify tweets with a remote LLM")
    _common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--splits")
    p.add_argument("--split", default="TEST")
    p.add_argument("--mode", choices=["direct", "confidence"], default="direct")
    p.add_argument("--explanation", action="store_true")
    p.add_argument("--k", type=float, default=5.0, help="class-3 threshold for confidence mode")
    p.add_argument("--base-url", default=os.environ.get("TWEETFRAME_LLM_URL", "https://api.openai.com/v1"))
    p.add_argument("--llm-model", default="gpt-4o")
    p.add_argument("--api-key-env", default="LLM_API_KEY")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--retries", type=int, default=5)
    p.add_argument("--concurrency", type=int, default=4)
    p.add_argument("--cache")
    p.set_defaults(func=cmd_llm_classify)

    p = sub.add_parser("llm-grid", help="grid search of the class-3 threshold")
    _common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--responses", required=True, help="responses.csv from a confidence-mode run")
    p.set_defaults(func=cmd_llm_grid)

    p = sub.add_parser("evaluate", help="score predictions or coder agreement")
    _common(p)
    p.add_argument("--pred")
    p.add_argument("--gold")
    p.add_argument("--pred-col", default="label")
    p.add_argument("--gold-col", default="label")
    p.add_argument("--agreement", action="store_true")
    p.add_argument("--labels")
    p.add_argument("--weights", choices=["linear", "quadratic"], default="linear")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("label-all", help="train, then label the whole unlabeled pool")
    _common(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--min-confidence", type=float, default=0.7)
    p.set_defaults(func=cmd_label_all)

    p = sub.add_parser("stats", help="monthly aggregates and figures")
    _common(p, config=False)
    p.add_argument("--labeled", required=True)
    p.add_argument("--corpus")
    p.add_argument("--metadata")
    p.add_argument("--group-by", action="append", choices=["party", "gender", "race", "none"])
    p.add_argument("--confident-only", action="store_true")
    p.add_argument("--no-images", action="store_true")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    root = logging.getLogger()
    handler = JsonLineHandler(out / "log.jsonl")
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    old_level = root.level
    root.setLevel(args.log_level.upper())
    root.addHandler(handler)
    root.addHandler(console)
    manifest = RunManifest(args.command, argv, None, None)
    status = EXIT_OK
    try:
        cfg = _config(args) if hasattr(args, "config") else None
        if cfg is not None:
            manifest.config_digest = cfg.digest()
            manifest.seed = cfg.global_seed
            _write_json(cfg.to_dict(), out / "config.json")
            manifest.add_output(out / "config.json")
        start = time.perf_counter()
        args.func(args, Context(out, manifest, cfg))
        log.info("%s finished in %.1fs", args.command, time.perf_counter() - start)
        manifest.status = "ok"
    except UsageError as exc:
        print(f"tweetframe {args.command}: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        manifest.status = f"usage error: {exc}"
        status = EXIT_USAGE
    except Exception as exc:  # every failure maps to exit 1
        log.error("%s failed: %s: %s", args.command, type(exc).__name__, exc)
        manifest.status = f"error: {type(exc).__name__}: {exc}"
        status = EXIT_RUNTIME
    finally:
        manifest.finished_at = _now()
        manifest.write(out)
        root.removeHandler(handler)
        root.removeHandler(console)
        root.setLevel(old_level)
        handler.close()
    return status


if __name__ == "__main__":
    sys.exit(main())
