"""Command-line entry point: ``season <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from .corpus import Vocabulary, build_vocab, load_corpus, save_corpus, tokenize
from .decode import generate
from .errors import InputError, MissingReference
from .evaluation import evaluate, load_predictions
from .experiments import (
    SUITES, format_table, run_ablation, threshold_table, training_eval,
)
from .metrics import fragment_stats
from .model import load_checkpoint
from .salience import (
    DEFAULT_GRID, ThresholdSpec, greedy_threshold_search, label_corpus, percentile_cutoffs,
    proxy_eval, salience_stats,
)
from .synthetic import make_corpus
from .train import build_model, train

log = logging.getLogger("season")

LOG_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}


# ---------------------------------------------------------------- helpers

def _add_overrides(parser):
    group = parser.add_argument_group("config overrides (section.key VALUE)")
    for section, cls in cfgmod.ALL_SECTIONS.items():
        for name, default in cfgmod.field_defaults(cls).items():
            group.add_argument(f"--{section}.{name}", dest=f"{section}.{name}", metavar="V",
                               default=None, help=f"default: {default}")


def _common(parser, corpus=True):
    parser.add_argument("--config", help="INI file with [model], [train], [decode], [labels]")
    if corpus:
        parser.add_argument("--corpus", required=True, help="JSONL corpus")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    _add_overrides(parser)


def _run_config(args) -> cfgmod.RunConfig:
    values = cfgmod.read_ini(args.config) if getattr(args, "config", None) else {}
    for section in cfgmod.ALL_SECTIONS:
        for name in cfgmod.field_defaults(cfgmod.ALL_SECTIONS[section]):
            v = getattr(args, f"{section}.{name}", None)
            if v is not None:
                values.setdefault(section, {})[name] = v
    return cfgmod.build(values, args.seed)


def _prepare_out(args, config):
    os.makedirs(args.out, exist_ok=True)
    cfgmod.write_ini(config, os.path.join(args.out, "config.ini"))


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _write_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def _thresholds(config) -> ThresholdSpec:
    if config.labels.thresholds:
        return ThresholdSpec.load(config.labels.thresholds)
    return ThresholdSpec(config.labels.percentile_list())


def _ensure_labeled(docs, config):
    """Keep existing labels; otherwise label with the configured thresholds."""
    if all(d.degrees is not None for d in docs):
        spec = _thresholds(config)
        if not spec.cutoffs:
            pooled = [s for d in docs for s in (d.salience_scores or [])]
            if pooled:
                spec.cutoffs = percentile_cutoffs(pooled, spec.percentiles)
        return docs, spec
    return label_corpus(docs, thresholds=_thresholds(config))


# ---------------------------------------------------------------- commands

def cmd_synth(args):
    docs = make_corpus(args.n_docs, seed=args.seed or 0, prefix=args.prefix)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, args.name)
    save_corpus(docs, path)
    print(f"wrote {len(docs)} documents to {path}")


def cmd_label(args):
    config = _run_config(args)
    _prepare_out(args, config)
    docs = load_corpus(args.corpus)
    labeled, spec = label_corpus(docs, thresholds=_thresholds(config))
    save_corpus(labeled, os.path.join(args.out, "labeled.jsonl"))
    spec.save(os.path.join(args.out, "thresholds.json"))
    stats = salience_stats(labeled, spec)
    _write_json(stats, os.path.join(args.out, "label_stats.json"))
    fractions = ", ".join(f"L{k}={f:.3f}" for k, f in enumerate(stats["degree_fractions"], 1))
    print(f"labeled {len(labeled)} documents, {stats['n_sentences']} sentences: {fractions}")


def cmd_search_thresholds(args):
    config = _run_config(args)
    _prepare_out(args, config)
    docs = load_corpus(args.corpus)
    labeled, _ = label_corpus(docs, thresholds=_thresholds(config))
    scores = [s for d in labeled for s in d.salience_scores]
    grid = [float(x) for x in args.grid.split(",")] if args.grid else list(DEFAULT_GRID)
    if args.eval_mode is None:
        # training a model per candidate needs held-out references
        args.eval_mode = "train" if args.val_corpus else "proxy"
        log.info("threshold search eval mode: %s", args.eval_mode)
    if args.eval_mode == "proxy":
        eval_fn = proxy_eval(labeled)
    else:
        if not args.val_corpus:
            raise InputError("--eval-mode train needs --val-corpus")
        eval_fn = training_eval(labeled, load_corpus(args.val_corpus), config.model,
                                config.train, config.decode, config.seed)
    steps = greedy_threshold_search(scores, eval_fn, grid, args.max_degrees)
    table = threshold_table(steps)
    _write_json({"eval_mode": args.eval_mode, "grid": grid, "rows": table,
                 "candidates": [{str(k): v for k, v in s.candidates.items()} for s in steps]},
                os.path.join(args.out, "threshold_search.json"))
    for s in steps:
        s.spec.save(os.path.join(args.out, f"thresholds_L{s.spec.n_degrees}.json"))
    print(f"{'L':>2}  {'percentiles':<24} value")
    for row in table:
        print(f"{row['n_degrees']:>2}  {str(row['percentiles']):<24} {row['value']:.4f}")


def cmd_train(args):
    config = _run_config(args)
    _prepare_out(args, config)
    docs, spec = _ensure_labeled(load_corpus(args.corpus), config)
    val = load_corpus(args.val_corpus) if args.val_corpus else None
    spec.save(os.path.join(args.out, "thresholds.json"))
    if args.resume:
        model, tokens, _, _ = load_checkpoint(args.resume)
        vocab = Vocabulary(tokens)
    else:
        vocab = build_vocab(docs, config.labels.vocab_size)
        mcfg = dataclasses.replace(config.model, n_degrees=spec.n_degrees)
        model = build_model(vocab, mcfg, config.seed, config.train.max_src, config.train.max_tgt)
    vocab.save(os.path.join(args.out, "vocab.txt"))
    result = train(docs, val, model, vocab, config.train, args.out, config.decode,
                   resume_from=args.resume, epochs=args.epochs)
    last = result.history[-1] if result.history else {}
    print(json.dumps({"epochs": result.state.epoch, "steps": result.state.step, **last}))


def cmd_generate(args):
    config = _run_config(args)
    _prepare_out(args, config)
    model, tokens, _, _ = load_checkpoint(args.checkpoint)
    if tokens is None:
        raise InputError(f"{args.checkpoint} has no vocabulary")
    docs = load_corpus(args.corpus)
    spec = None
    if config.decode.estimation == "gold":
        spec = _thresholds(config)
        beside = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "thresholds.json")
        if not config.labels.thresholds and os.path.exists(beside):
            spec = ThresholdSpec.load(beside)
    if spec is not None and not spec.cutoffs and any(d.degrees is None for d in docs):
        raise MissingReference("gold estimation on unlabeled documents needs a thresholds file "
                               "with cutoffs (--labels.thresholds)")
    records = generate(model, Vocabulary(tokens), docs, config.decode, spec,
                       config.train.max_src, with_probs=args.with_probs)
    path = os.path.join(args.out, "generated.jsonl")
    _write_jsonl(records, path)
    print(f"wrote {len(records)} summaries to {path}")


def cmd_evaluate(args):
    os.makedirs(args.out, exist_ok=True)
    report = evaluate(load_predictions(args.predictions), load_corpus(args.corpus))
    _write_json(report.to_json(), os.path.join(args.out, "evaluation.json"))
    r = report.rouge
    print(f"R-1 {100 * r['rouge1']:.2f}  R-2 {100 * r['rouge2']:.2f}  "
          f"R-L {100 * r['rougeL']:.2f}  avg len {report.avg_length:.1f}")
    for s in report.density_splits:
        print(f"  density split {s['split']} (n={s['n_documents']}): "
              f"R-L {100 * s['rouge']['rougeL']:.2f}")


def cmd_stats(args):
    os.makedirs(args.out, exist_ok=True)
    docs = load_corpus(args.corpus)
    report = {}
    if all(d.degrees is not None for d in docs):
        report["salience"] = salience_stats(docs)
    cov, dens = [], []
    for d in docs:
        ref = tokenize(d.summary)
        if ref:
            s = fragment_stats(tokenize(d.article), ref)
            cov.append(s.coverage)
            dens.append(s.density)
    if cov:
        report["abstractiveness"] = {"coverage_mean": float(np.mean(cov)),
                                     "density_mean": float(np.mean(dens)),
                                     "n_documents": len(cov)}
    _write_json(report, os.path.join(args.out, "stats.json"))
    print(json.dumps(report.get("abstractiveness", {})))
    if "salience" in report:
        print("degree fractions:", [round(f, 4) for f in report["salience"]["degree_fractions"]])


def cmd_ablate(args):
    config = _run_config(args)
    _prepare_out(args, config)
    seeds = [int(s) for s in args.seeds.split(",")]
    train_docs = load_corpus(args.corpus)
    test_docs = load_corpus(args.test_corpus)

    def progress(name, seed, scores):
        log.info("%s seed %d: R-L %.4f", name, seed, scores["rougeL"])

    result = run_ablation(args.suite, train_docs, test_docs, config.model, config.train,
                          config.decode, seeds, config.labels.percentile_list(), progress)
    _write_json(result.to_json(), os.path.join(args.out, f"ablation_{args.suite}.json"))
    print(format_table(result.summary))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="season", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="score sentences and assign salience degrees")
    _common(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("search-thresholds", help="greedy search over degree fractions")
    _common(p)
    p.add_argument("--grid", help="comma-separated fractions (default 0.05..0.95)")
    p.add_argument("--max-degrees", type=int, default=3)
    p.add_argument("--eval-mode", choices=("proxy", "train"),
                   help="default: train when --val-corpus is given, otherwise proxy")
    p.add_argument("--val-corpus")
    p.set_defaults(func=cmd_search_thresholds)

    p = sub.add_parser("train", help="train a model")
    _common(p)
    p.add_argument("--val-corpus")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--epochs", type=int, help="train this many more epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="summarize a corpus with a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--with-probs", action="store_true", help="include degree distributions")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="ROUGE and density splits of generated summaries")
    p.add_argument("--predictions", required=True, help="generated.jsonl")
    p.add_argument("--corpus", required=True, help="reference corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="salience and abstractiveness statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("ablate", help="run an ablation suite over several seeds")
    _common(p)
    p.add_argument("--test-corpus", required=True)
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-docs", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="doc")
    p.add_argument("--name", default="corpus.jsonl")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("SEASON_LOG", "info").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
