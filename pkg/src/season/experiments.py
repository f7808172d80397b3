"""Ablation suites and model-based evaluation for threshold search."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import RawDocument, build_vocab
from .decode import DecodeConfig, evaluate_model
from .model import ModelConfig
from .salience import label_corpus
from .train import TrainConfig, build_model, train

log = logging.getLogger(__name__)

SUITES = ("mtl_only", "no_saca", "gold_guidance", "hard_vs_soft", "tau_sweep", "alpha_sweep",
          "smoothing")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)
TAU_SWEEP = (0.25, 0.5, 1.0)
ALPHA_SWEEP = (0.5, 1.0, 1.5)


@dataclass
class Variant:
    """One row of an ablation table: overrides for each config section."""

    name: str
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    decode: dict = field(default_factory=dict)

    def training_key(self):
        return (tuple(sorted(self.model.items())), tuple(sorted(self.train.items())))


def suite_variants(suite: str) -> list[Variant]:
    if suite == "mtl_only":
        return [Variant("full"),
                Variant("mtl_only", model={"saca": False}),
                Variant("no_mtl", model={"saca": False}, train={"alpha": 0.0})]
    if suite == "no_saca":
        return [Variant("full"), Variant("no_saca", model={"saca": False})]
    if suite == "gold_guidance":
        return [Variant("soft"), Variant("gold", decode={"estimation": "gold"})]
    if suite == "hard_vs_soft":
        return [Variant("soft"), Variant("hard", decode={"estimation": "hard"})]
    if suite == "tau_sweep":
        return [Variant(f"tau={t}", decode={"tau": t}) for t in TAU_SWEEP]
    if suite == "alpha_sweep":
        return [Variant(f"alpha={a}", train={"alpha": a}) for a in ALPHA_SWEEP]
    if suite == "smoothing":
        return [Variant("adjacent"), Variant("uniform", train={"smoothing": "uniform"})]
    raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


@dataclass
class AblationResult:
    suite: str
    seeds: list[int]
    per_seed: dict[str, list[dict]]
    summary: list[dict]

    def to_json(self):
        return {"suite": self.suite, "seeds": self.seeds, "per_seed": self.per_seed,
                "summary": self.summary}


def _replace(obj, changes):
    return dataclasses.replace(obj, **changes) if changes else dataclasses.replace(obj)


def fit_and_score(train_docs: list[RawDocument], test_docs: list[RawDocument],
                  model_config: ModelConfig, train_config: TrainConfig,
                  decode_configs: dict[str, DecodeConfig], seed: int,
                  percentiles=None, vocab_size: int = 50_000) -> dict[str, dict]:
    """Label, train one model and score it under several decoding setups."""
    percentiles = percentiles or [0.15, 0.5]
    labeled, spec = label_corpus(train_docs, percentiles)
    vocab = build_vocab(labeled, vocab_size)
    tcfg = _replace(train_config, {"seed": seed})
    mcfg = _replace(model_config, {"n_degrees": spec.n_degrees})
    model = build_model(vocab, mcfg, seed, tcfg.max_src, tcfg.max_tgt)
    result = train(labeled, None, model, vocab, tcfg)
    scores = {}
    for name, dcfg in decode_configs.items():
        scores[name] = evaluate_model(result.model, vocab, test_docs, dcfg, tcfg.max_src, spec)
    return scores


def run_ablation(suite: str, train_docs: list[RawDocument], test_docs: list[RawDocument],
                 model_config: ModelConfig, train_config: TrainConfig,
                 decode_config: DecodeConfig, seeds=DEFAULT_SEEDS, percentiles=None,
                 progress=None) -> AblationResult:
    """Run every variant of ``suite`` on every seed.

    Variants that differ only in decoding share one trained model per seed.
    The summary holds mean and (population) standard deviation over seeds.
    """
    variants = suite_variants(suite)
    groups: dict = {}
    for v in variants:
        groups.setdefault(v.training_key(), []).append(v)
    per_seed = {v.name: [] for v in variants}
    for seed in seeds:
        for members in groups.values():
            head = members[0]
            decode_cfgs = {v.name: _replace(decode_config, v.decode) for v in members}
            scores = fit_and_score(train_docs, test_docs, _replace(model_config, head.model),
                                   _replace(train_config, head.train), decode_cfgs, seed,
                                   percentiles)
            for name, s in scores.items():
                per_seed[name].append({"seed": seed, **s})
                if progress:
                    progress(name, seed, s)
    summary = []
    for v in variants:
        row = {"variant": v.name}
        for k in ("rouge1", "rouge2", "rougeL"):
            vals = np.array([r[k] for r in per_seed[v.name]])
            row[f"{k}_mean"] = float(vals.mean())
            row[f"{k}_std"] = float(vals.std())
        summary.append(row)
    return AblationResult(suite, list(seeds), per_seed, summary)


def format_table(rows: list[dict]) -> str:
    lines = [f"{'variant':<12} {'R-1':>15} {'R-2':>15} {'R-L':>15}"]
    for r in rows:
        cells = [f"{100 * r[k + '_mean']:6.2f} ± {100 * r[k + '_std']:5.2f}"
                 for k in ("rouge1", "rouge2", "rougeL")]
        lines.append(f"{r['variant']:<12} " + " ".join(f"{c:>15}" for c in cells))
    return "\n".join(lines)


def training_eval(train_docs: list[RawDocument], val_docs: list[RawDocument],
                  model_config: ModelConfig, train_config: TrainConfig,
                  decode_config: DecodeConfig, seed: int = 0):
    """Threshold-search evaluator that trains a model per candidate labeling.

    Returns a callable mapping a percentile tuple to validation ROUGE-L with
    predicted (soft) guidance.
    """
    cache = {}

    def evaluate(percentiles):
        key = tuple(percentiles)
        if key not in cache:
            scores = fit_and_score(train_docs, val_docs, model_config, train_config,
                                   {"soft": _replace(decode_config, {"estimation": "soft"})},
                                   seed, list(key))
            cache[key] = scores["soft"]["rougeL"]
            log.info("percentiles %s -> val ROUGE-L %.4f", list(key), cache[key])
        return cache[key]

    return evaluate


def threshold_table(steps) -> list[dict]:
    """Rows ``{n_degrees, percentiles, cutoffs, value}`` for a search trace."""
    return [{"n_degrees": s.spec.n_degrees, "percentiles": s.spec.percentiles,
             "cutoffs": s.spec.cutoffs, "value": s.value if math.isfinite(s.value) else None}
            for s in steps]

