"""Command-line entry point: clean, stats, embed, neighbors, train, eval, classify, query."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import classifier as clf
from . import corpus, embedding, mining

log = logging.getLogger("reportminer")

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "out": "out",
    "arch": "lstm",
    "min_count": 1,
    "stats.bucket_width": 50,
    "stats.top_k": 50,
    "stats.ngram_k": 10,
    "embed.window": 3,
    "embed.dim": 300,
    "embed.negatives": 64,
    "embed.batch": 128,
    "embed.lr": 1.0,
    "embed.epochs": 15,
    "embed.noise_power": 1.0,
    "train.lr": 0.1,
    "train.epochs": 50,
    "train.batch": 32,
    "train.fine_tune": False,
    "train.folds": 5,
    "train.fraction": 0.8,
}


class UsageError(Exception):
    pass


def _coerce(key: str, raw: str):
    default = DEFAULTS.get(key)
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise UsageError(f"config key {key}: cannot parse {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict[str, object]:
    """``key = value`` lines; ``#`` starts a comment line."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        if key not in DEFAULTS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def format_config(cfg: dict[str, object]) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n"
                   for k, v in sorted(cfg.items()))


def resolve_config(args) -> dict[str, object]:
    """Defaults, then the config file, then command-line flags."""
    cfg = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            cfg.update(parse_config_text(Path(config_path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise UsageError(f"cannot read config {config_path}: {exc.strerror}") from None
    for item in getattr(args, "set", []):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in DEFAULTS:
            raise UsageError(f"--set expects a known key=value, got {item!r}")
        cfg[key] = _coerce(key, value.strip())
    for key in ("seed", "out", "arch"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if int(cfg["seed"]) < 0:
        raise UsageError("seed must be >= 0")
    if cfg["arch"] not in clf.KINDS:
        raise UsageError(f"unknown architecture {cfg['arch']!r}")
    return cfg


def embedding_config(cfg) -> embedding.EmbeddingConfig:
    return embedding.EmbeddingConfig(
        window=cfg["embed.window"], dim=cfg["embed.dim"], negatives=cfg["embed.negatives"],
        batch=cfg["embed.batch"], lr=cfg["embed.lr"], epochs=cfg["embed.epochs"],
        seed=cfg["seed"], noise_power=cfg["embed.noise_power"])


def classifier_config(cfg) -> clf.ClassifierConfig:
    return clf.ClassifierConfig(lr=cfg["train.lr"], epochs=cfg["train.epochs"],
                                batch=cfg["train.batch"], seed=cfg["seed"],
                                fine_tune=cfg["train.fine_tune"])


def _require(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return p


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands

def clean_report(report: corpus.Report) -> corpus.Report:
    """Clean each line separately so line breaks still mark sentence ends."""
    lines = [corpus.clean_text(line) for line in report.text.split("\n")]
    return dataclasses.replace(report, text="\n".join(line for line in lines if line))


def cmd_clean(args, cfg):
    reports = corpus.ingest_reports(_require(args.input))
    out = Path(args.output) if args.output else _out_dir(cfg) / "cleaned.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    corpus.write_reports([clean_report(r) for r in reports], out)
    log.info("cleaned %d reports -> %s", len(reports), out)


def cmd_stats(args, cfg):
    reports = corpus.ingest_reports(_require(args.input))
    stats = corpus.corpus_stats(reports, cfg["stats.bucket_width"], cfg["stats.top_k"])
    raw_t, raw_v = corpus.raw_token_stats(reports)
    sentences = corpus.corpus_sentences(reports)
    result = stats.to_json()
    result["raw_token_count"] = raw_t
    result["raw_vocab_size"] = raw_v
    result["ngrams"] = {str(n): [[g, c] for g, c in corpus.top_ngrams(sentences, n, cfg["stats.ngram_k"])]
                        for n in (3, 4)}
    _emit(result)


def cmd_embed(args, cfg):
    reports = corpus.ingest_reports(_require(args.input))
    sentences = corpus.corpus_sentences(reports)
    vocab = corpus.build_vocabulary(sentences, cfg["min_count"])
    model, trace = embedding.train_embeddings(sentences, vocab, embedding_config(cfg))
    out = _out_dir(cfg)
    embedding.save_embeddings(model, out / "embeddings.txt")
    embedding.save_checkpoint(model, out / "embeddings.rmemb")
    trace.to_csv(out / "loss_trace.csv")
    log.info("embedded V=%d d=%d, final epoch loss %.4f", vocab.size, model.dim,
             trace.epoch_means[-1])


def cmd_neighbors(args, cfg):
    model = embedding.load_embeddings(_require(args.embeddings))
    try:
        result = embedding.nearest_neighbors(model, args.token, args.n)
    except KeyError:
        raise UsageError(f"token not in vocabulary: {args.token!r}") from None
    _emit([[t, s] for t, s in result])


def cmd_train(args, cfg):
    data, _ = clf.load_labeled(_require(args.labeled))
    model = embedding.load_embeddings(_require(args.embeddings))
    config = classifier_config(cfg)
    kind = cfg["arch"]
    train, test = clf.split_train_test(data, cfg["train.fraction"], cfg["seed"])
    trained = clf.train_classifier(train, kind, model, config)
    holdout = clf.evaluate(trained, test)
    out = _out_dir(cfg)
    clf.save_classifier(trained, out / f"classifier-{kind}.rmnet", args.embeddings)
    report = holdout.to_json()
    if cfg["train.folds"] >= 2:
        cv = clf.kfold_cv(data, kind, model, cfg["train.folds"], config)
        report["fold_accuracies"] = cv.fold_accuracies
        report["mean_fold_accuracy"] = cv.mean_fold_accuracy
        report["cv_confusion"] = cv.confusion.astype(int).tolist()
    report["architecture"] = kind
    _write_json(out / f"eval-{kind}.json", report)
    log.info("%s held-out accuracy %.4f", kind, holdout.accuracy)


def cmd_eval(args, cfg):
    trained = clf.load_classifier(_require(args.checkpoint))
    data, _ = clf.load_labeled(_require(args.labeled))
    _emit(clf.evaluate(trained, data).to_json())


def cmd_classify(args, cfg):
    reports = corpus.ingest_reports(_require(args.input))
    trained = clf.load_classifier(_require(args.checkpoint))
    timelines = mining.classify_corpus(reports, trained, npt_only=args.npt_only)
    out = Path(args.output) if args.output else _out_dir(cfg) / "timelines.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    mining.export_timelines(timelines, out)
    log.info("classified %d wells -> %s", len(timelines), out)


def cmd_query(args, cfg):
    q = args.query
    if q == "summary":
        _emit(mining.field_summary(corpus.ingest_reports(_require(args.input))).to_json())
    elif q == "regression":
        summary = mining.field_summary(corpus.ingest_reports(_require(args.input)))
        xs, ys = mining.regression_points(summary, npt_wells_only=not args.all_wells)
        fit = mining.fit_regression(xs, ys)
        _emit({"slope": fit.slope, "intercept": fit.intercept, "r": fit.r,
               "points": [[x, y] for x, y in zip(xs, ys)]})
    else:
        timelines = mining.load_timelines(_require(args.input))
        if q == "rank-wells":
            _emit([[w, c] for w, c in mining.rank_problematic_wells(timelines, args.top)])
        elif q == "operator-behavior":
            try:
                _emit(mining.operator_behavior(timelines, args.well))
            except KeyError:
                raise UsageError(f"unknown well {args.well!r}") from None
        elif q == "sequences":
            matches = mining.find_sequences(timelines, args.antecedent, args.consequent,
                                            args.horizon, args.antecedent_filter,
                                            args.consequent_filter)
            index = {t.well_id: t for t in timelines}
            _emit([m.to_json(index) for m in matches])
        elif q == "labels":
            _emit(mining.label_distribution(timelines))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="global seed (>= 0)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--arch", choices=clf.KINDS, help="classifier architecture")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--print-config", action="store_true",
                        help="print the resolved config and exit")

    parser = argparse.ArgumentParser(prog="reportminer", parents=[common],
                                     description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("clean", parents=[common], help="apply the regex cleaner to reports")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics and n-grams as JSON")
    p.add_argument("input")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("embed", parents=[common], help="train skip-gram word vectors")
    p.add_argument("input")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("neighbors", parents=[common], help="nearest words by cosine similarity")
    p.add_argument("embeddings")
    p.add_argument("token")
    p.add_argument("-n", type=int, default=10)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("train", parents=[common], help="train and evaluate a sentence classifier")
    p.add_argument("labeled")
    p.add_argument("--embeddings", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on labeled data")
    p.add_argument("checkpoint")
    p.add_argument("labeled")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", parents=[common], help="label every report sentence")
    p.add_argument("input")
    p.add_argument("checkpoint")
    p.add_argument("--npt-only", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("query", parents=[common], help="analytics over reports or timelines")
    qsub = p.add_subparsers(dest="query", required=True, metavar="QUERY")
    q = qsub.add_parser("summary", parents=[common], help="well counts and performance estimate")
    q.add_argument("input", help="reports JSONL")
    q = qsub.add_parser("regression", parents=[common], help="NPT days vs report count")
    q.add_argument("input", help="reports JSONL")
    q.add_argument("--all-wells", action="store_true", help="include wells without NPT")
    q = qsub.add_parser("rank-wells", parents=[common], help="wells by EVENT count")
    q.add_argument("input", help="timelines JSONL")
    q.add_argument("--top", type=int)
    q = qsub.add_parser("operator-behavior", parents=[common], help="label shares per operator")
    q.add_argument("input", help="timelines JSONL")
    q.add_argument("--well", required=True)
    q = qsub.add_parser("sequences", parents=[common], help="antecedent -> consequent matches")
    q.add_argument("input", help="timelines JSONL")
    q.add_argument("--antecedent", default="SYMPTOM", choices=clf.LABELS)
    q.add_argument("--consequent", default="ACTION", choices=clf.LABELS)
    q.add_argument("--horizon", type=int, default=1)
    q.add_argument("--antecedent-filter")
    q.add_argument("--consequent-filter")
    q = qsub.add_parser("labels", parents=[common], help="EVENT/SYMPTOM/ACTION proportions")
    q.add_argument("input", help="timelines JSONL")
    p.set_defaults(func=cmd_query)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("REPORTMINER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if getattr(args, "print_config", False):
            sys.stdout.write(format_config(cfg))
            return 0
        args.func(args, cfg)
    except UsageError as exc:
        print(f"reportminer: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"reportminer: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
