"""Losses, optimizer and the multi-task training loop."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .corpus import RawDocument, Vocabulary, encode_document
from .errors import MissingLabels, NonFiniteGradient
from .model import Batch, ModelConfig, SeasonModel, load_checkpoint, make_batch
from .salience import smooth_labels
from .tensor import Tensor

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass
class TrainConfig:
    alpha: float = 1.5
    beta: float = 0.2
    smoothing: str = "adjacent"
    lr: float = 3e-4
    warmup_steps: int = 200
    weight_decay: float = 0.01
    clip_norm: float = 0.1
    adam_b1: float = 0.9
    adam_b2: float = 0.99
    adam_eps: float = 1e-8
    epochs: int = 300
    batch_size: int = 8
    seed: int = 0
    max_src: int = 512
    max_tgt: int = 128
    eval_every: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")


# ---------------------------------------------------------------- losses

def loss_cls(degree_probs, targets, mask=None) -> Tensor:
    """Cross-entropy of degree distributions against (smoothed) targets.

    Averaged over the real sentences of each document, then over documents.
    Shapes: (B, N, L) or (N, L); ``mask`` marks real sentences.
    """
    probs = T.as_tensor(degree_probs)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.ndim == 2:
        probs = T.reshape(probs, (1,) + probs.shape)
        targets = targets[None]
        mask = None if mask is None else np.asarray(mask)[None]
    if mask is None:
        mask = np.ones(probs.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    counts = mask.sum(axis=1)
    weights = targets * (mask / np.maximum(counts, 1)[:, None])[:, :, None]
    logp = T.log(probs, clamp=LOG_CLAMP)
    per_doc_total = T.sum(logp * weights)
    return per_doc_total * (-1.0 / probs.shape[0])


def loss_lm(token_logits, target_ids, mask=None) -> Tensor:
    """Mean token negative log-likelihood per document, then over documents.

    Positions where ``mask`` is false (padding) count in neither sum nor length.
    """
    logits = T.as_tensor(token_logits)
    target_ids = np.asarray(target_ids, dtype=np.int64)
    if logits.ndim == 2:
        logits = T.reshape(logits, (1,) + logits.shape)
        target_ids = target_ids[None]
        mask = None if mask is None else np.asarray(mask)[None]
    if mask is None:
        mask = np.ones(target_ids.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    B, Tt, V = logits.shape
    logp = T.log_softmax(logits, axis=-1)
    onehot = np.zeros((B, Tt, V))
    np.put_along_axis(onehot, target_ids[..., None], 1.0, axis=-1)
    weights = onehot * (mask / np.maximum(mask.sum(axis=1), 1)[:, None])[:, :, None]
    return T.sum(logp * weights) * (-1.0 / B)


def loss_total(lm, cls, alpha):
    return lm + cls * alpha


def smoothed_targets(degrees: np.ndarray, n_degrees: int, beta: float,
                     mode: str = "adjacent") -> np.ndarray:
    """(B, N, L) targets; padded sentences (degree 0) get all-zero rows."""
    table = np.array([smooth_labels(g, n_degrees, beta, mode) for g in range(1, n_degrees + 1)])
    out = np.zeros(degrees.shape + (n_degrees,))
    real = degrees > 0
    out[real] = table[degrees[real] - 1]
    return out


@dataclass
class StepLosses:
    total: Tensor
    lm: float
    cls: float
    correct: int
    n_sentences: int


def batch_losses(model: SeasonModel, batch: Batch, config: TrainConfig, rng=None) -> StepLosses:
    """LM loss under gold guidance plus alpha times the classification loss
    on smoothed degree targets, for one batch."""
    if batch.degrees is None:
        raise MissingLabels("batch has no salience degrees")
    enc = model.encode(batch, rng)
    token_sal, _ = model.guidance(enc, "gold", degrees=batch.degrees)
    logits = model.decode(batch.tgt_in, enc, token_sal, rng)
    lm = loss_lm(logits, batch.tgt_out, batch.tgt_mask)
    probs = model.salience_probs(enc, model.config.tau_train)
    targets = smoothed_targets(batch.degrees, model.config.n_degrees, config.beta, config.smoothing)
    cls = loss_cls(probs, targets, batch.sent_mask)
    pred = np.argmax(probs.data, axis=-1) + 1
    correct = int(((pred == batch.degrees) & batch.sent_mask).sum())
    return StepLosses(loss_total(lm, cls, config.alpha), lm.item(), cls.item(), correct,
                      int(batch.sent_mask.sum()))


# ---------------------------------------------------------------- optimizer

@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    rng_state: dict | None = None
    best_metric: float = -math.inf


def learning_rate(step: int, config: TrainConfig) -> float:
    """Linear warmup to ``lr`` over ``warmup_steps``, constant afterwards."""
    if config.warmup_steps <= 0:
        return config.lr
    return config.lr * min(step / config.warmup_steps, 1.0)


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> tuple[dict, float]:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > clip_norm:
        scale = clip_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def optimizer_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: TrainState,
                   config: TrainConfig, decay=None) -> float:
    """One AdamW update with global-norm clipping; returns the pre-clip norm.

    ``decay(name)`` decides whether decoupled weight decay applies.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
    grads, norm = clip_gradients(grads, config.clip_norm)
    state.step += 1
    lr = learning_rate(state.step, config)
    b1, b2 = config.adam_b1, config.adam_b2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if config.weight_decay and (decay is None or decay(name)):
            p.data -= lr * config.weight_decay * p.data
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
    return norm


# ---------------------------------------------------------------- data

def encode_labeled(docs: list[RawDocument], vocab: Vocabulary, config: TrainConfig):
    """Encode documents and truncate their degree lists to the kept sentences."""
    encoded, degrees = [], []
    for d in docs:
        if d.degrees is None:
            raise MissingLabels(f"document {d.id!r} has no salience degrees")
        e = encode_document(d, vocab, config.max_src, config.max_tgt)
        encoded.append(e)
        degrees.append(list(d.degrees[: e.n_sentences]))
    return encoded, degrees


def length_batches(encoded, batch_size: int) -> list[list[int]]:
    """Group indices of similar source length into batches."""
    order = sorted(range(len(encoded)), key=lambda i: (len(encoded[i].input_ids), i))
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


# ---------------------------------------------------------------- loop

@dataclass
class TrainResult:
    model: SeasonModel
    history: list[dict]
    state: TrainState


def train(corpus: list[RawDocument], val_corpus: list[RawDocument] | None, model: SeasonModel,
          vocab: Vocabulary, config: TrainConfig, out_dir=None, decode_config=None,
          resume_from=None, epochs: int | None = None, callback=None) -> TrainResult:
    """Multi-task training with gold guidance.

    Writes ``metrics.jsonl``, ``last.npz`` and ``best.npz`` under ``out_dir``
    when given. Best is judged by validation ROUGE-L when a validation corpus
    is available, otherwise by the lowest total training loss.
    """
    from .decode import DecodeConfig, evaluate_model

    encoded, degrees = encode_labeled(corpus, vocab, config)
    batches = length_batches(encoded, config.batch_size)
    state = TrainState()
    rng = np.random.default_rng(config.seed)
    if resume_from is not None:
        model, state = _restore(resume_from)
        rng.bit_generator.state = state.rng_state
    decode_config = decode_config or DecodeConfig()
    history = []
    metrics_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_fh = open(os.path.join(out_dir, "metrics.jsonl"), "a" if resume_from else "w",
                          encoding="utf-8")
    last_epoch = config.epochs if epochs is None else state.epoch + epochs
    try:
        while state.epoch < last_epoch:
            t0 = time.perf_counter()
            sums = {"lm": 0.0, "cls": 0.0, "total": 0.0}
            correct = n_sent = 0
            for bi in rng.permutation(len(batches)):
                idx = batches[bi]
                batch = make_batch([encoded[i] for i in idx], [degrees[i] for i in idx])
                losses = batch_losses(model, batch, config, rng)
                for p in model.params.values():
                    p.grad = None
                T.backward(losses.total)
                grads = {k: p.grad for k, p in model.params.items() if p.grad is not None}
                optimizer_step(model.params, grads, state, config, decay=_decay_rule)
                w = len(idx)
                sums["lm"] += losses.lm * w
                sums["cls"] += losses.cls * w
                sums["total"] += losses.total.item() * w
                correct += losses.correct
                n_sent += losses.n_sentences
            state.epoch += 1
            n = len(encoded)
            record = {
                "epoch": state.epoch,
                "loss_lm": sums["lm"] / n,
                "loss_cls": sums["cls"] / n,
                "loss_total": sums["total"] / n,
                "cls_accuracy": correct / max(n_sent, 1),
                "val_rouge1": None, "val_rouge2": None, "val_rougeL": None,
            }
            due = val_corpus and config.eval_every > 0 and (
                state.epoch % config.eval_every == 0 or state.epoch == last_epoch)
            if due:
                scores = evaluate_model(model, vocab, val_corpus, decode_config, config.max_src)
                record.update(val_rouge1=scores["rouge1"], val_rouge2=scores["rouge2"],
                              val_rougeL=scores["rougeL"])
            history.append(record)
            log.info("epoch %d lm=%.4f cls=%.4f acc=%.3f (%.1fs)", state.epoch, record["loss_lm"],
                     record["loss_cls"], record["cls_accuracy"], time.perf_counter() - t0)
            state.rng_state = rng.bit_generator.state
            metric = record["val_rougeL"] if val_corpus else -record["loss_total"]
            if out_dir is not None:
                metrics_fh.write(json.dumps(record) + "\n")
                metrics_fh.flush()
                if metric is not None and metric > state.best_metric:
                    state.best_metric = metric
                    save_training_checkpoint(os.path.join(out_dir, "best.npz"), model, vocab,
                                             state, config)
                save_training_checkpoint(os.path.join(out_dir, "last.npz"), model, vocab, state,
                                         config)
            elif metric is not None and metric > state.best_metric:
                state.best_metric = metric
            if callback is not None:
                callback(record, model, state)
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return TrainResult(model, history, state)


def _decay_rule(name):
    from .model import is_decayed
    return is_decayed(name)


def save_training_checkpoint(path, model: SeasonModel, vocab, state: TrainState,
                             config: TrainConfig):
    arrays = {}
    for k in state.m:
        arrays[f"m/{k}"] = state.m[k]
        arrays[f"v/{k}"] = state.v[k]
    extra = {
        "train_config": asdict(config),
        "train_state": {"step": state.step, "epoch": state.epoch,
                        "best_metric": state.best_metric if math.isfinite(state.best_metric)
                        else None,
                        "rng_state": state.rng_state},
    }
    model.save(path, vocab, extra=extra, arrays=arrays)


def _restore(path):
    model, _, extra, arrays = load_checkpoint(path)
    ts = extra.get("train_state") or {}
    state = TrainState(step=ts.get("step", 0), epoch=ts.get("epoch", 0),
                       rng_state=ts.get("rng_state"))
    best = ts.get("best_metric")
    state.best_metric = -math.inf if best is None else best
    for k, v in arrays.items():
        kind, name = k.split("/", 1)
        (state.m if kind == "m" else state.v)[name] = v
    return model, state


def build_model(vocab: Vocabulary, config: ModelConfig | None = None, seed: int = 0,
                max_src: int = 512, max_tgt: int = 128) -> SeasonModel:
    config = config or ModelConfig()
    config.vocab_size = len(vocab)
    config.max_positions = max(config.max_positions, max_src, max_tgt)
    return SeasonModel(config, seed=seed)
