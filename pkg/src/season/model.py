"""Pre-norm Transformer encoder-decoder with salience-aware cross-attention.

The encoder reads a document in which every sentence is prefixed by a SENT
marker; the marker states feed a small classifier over salience degrees. The
decoder's cross-attention adds per-token salience embeddings to the keys
(never to the values), so guidance changes where the decoder looks but not
what it reads.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .corpus import PAD, EncodedDocument
from .errors import SequenceTooLong
from .tensor import Tensor, no_grad

CHECKPOINT_FORMAT = "season-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    vocab_size: int = 0
    d_model: int = 128
    n_heads: int = 4
    n_enc_layers: int = 3
    n_dec_layers: int = 3
    ffn_dim: int = 512
    n_degrees: int = 3
    # temperature of the classifier softmax inside the training loss;
    # the inference-time sharpening lives in DecodeConfig.tau
    tau_train: float = 1.0
    dropout: float = 0.1
    max_positions: int = 512
    saca: bool = True
    init_std: float = 0.02

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.tau_train <= 0:
            raise ValueError("tau_train must be positive")
        if self.n_degrees < 2:
            raise ValueError("n_degrees must be >= 2")


@dataclass
class Batch:
    """Padded numpy views of a list of encoded documents."""

    src_ids: np.ndarray          # (B, S)
    src_mask: np.ndarray         # (B, S) true at real tokens
    sent_index: np.ndarray       # (B, S) 1-based, 0 at padding
    marker_positions: np.ndarray  # (B, N)
    sent_mask: np.ndarray        # (B, N)
    tgt_in: np.ndarray           # (B, T)
    tgt_out: np.ndarray          # (B, T)
    tgt_mask: np.ndarray         # (B, T)
    degrees: np.ndarray | None = None  # (B, N) 1-based, 0 at padding
    ids: list = field(default_factory=list)

    def __len__(self):
        return self.src_ids.shape[0]


def make_batch(docs: list[EncodedDocument], degrees: list[list[int]] | None = None) -> Batch:
    B = len(docs)
    S = max(len(d.input_ids) for d in docs)
    N = max(d.n_sentences for d in docs)
    Tt = max(len(d.target_ids) for d in docs) - 1
    src = np.full((B, S), PAD, dtype=np.int64)
    sidx = np.zeros((B, S), dtype=np.int64)
    markers = np.zeros((B, N), dtype=np.int64)
    smask = np.zeros((B, N), dtype=bool)
    tin = np.full((B, Tt), PAD, dtype=np.int64)
    tout = np.full((B, Tt), PAD, dtype=np.int64)
    tmask = np.zeros((B, Tt), dtype=bool)
    deg = np.zeros((B, N), dtype=np.int64) if degrees is not None else None
    for b, d in enumerate(docs):
        n = len(d.input_ids)
        src[b, :n] = d.input_ids
        sidx[b, :n] = d.sent_index
        markers[b, :d.n_sentences] = d.marker_positions
        smask[b, :d.n_sentences] = True
        t = len(d.target_ids) - 1
        tin[b, :t] = d.target_ids[:-1]
        tout[b, :t] = d.target_ids[1:]
        tmask[b, :t] = True
        if deg is not None:
            deg[b, :d.n_sentences] = degrees[b][:d.n_sentences]
    return Batch(src, src != PAD, sidx, markers, smask, tin, tout, tmask, deg,
                 [d.id for d in docs])


@dataclass
class EncoderOutput:
    token_states: Tensor      # (B, S, d)
    sentence_states: Tensor   # (B, N, d)
    src_mask: np.ndarray      # (B, S)
    sent_index: np.ndarray    # (B, S)
    sent_mask: np.ndarray     # (B, N)


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Normal(0, init_std) weights; zero biases and salience embeddings."""
    rng = np.random.default_rng(seed)
    d, f, L = config.d_model, config.ffn_dim, config.n_degrees
    params: dict[str, Tensor] = {}

    def normal(name, *shape):
        params[name] = T.parameter(rng.normal(0.0, config.init_std, shape), name)

    def zeros(name, *shape):
        params[name] = T.parameter(np.zeros(shape), name)

    def ones(name, *shape):
        params[name] = T.parameter(np.ones(shape), name)

    def norm(prefix):
        ones(f"{prefix}.g", d)
        zeros(f"{prefix}.b", d)

    def attn(prefix):
        for proj in ("q", "k", "v", "o"):
            normal(f"{prefix}.w{proj}", d, d)
            zeros(f"{prefix}.b{proj}", d)

    def ffn(prefix):
        normal(f"{prefix}.w1", d, f)
        zeros(f"{prefix}.b1", f)
        normal(f"{prefix}.w2", f, d)
        zeros(f"{prefix}.b2", d)

    normal("tok_emb", config.vocab_size, d)
    normal("pos_emb", config.max_positions, d)
    for i in range(config.n_enc_layers):
        norm(f"enc.{i}.ln1")
        attn(f"enc.{i}.attn")
        norm(f"enc.{i}.ln2")
        ffn(f"enc.{i}.ffn")
    norm("enc.ln")
    for i in range(config.n_dec_layers):
        norm(f"dec.{i}.ln1")
        attn(f"dec.{i}.self")
        norm(f"dec.{i}.ln2")
        attn(f"dec.{i}.cross")
        norm(f"dec.{i}.ln3")
        ffn(f"dec.{i}.ffn")
    norm("dec.ln")
    normal("cls.w", d, L)
    zeros("cls.b", L)
    zeros("sal_emb", L, d)
    return params


def is_decayed(name: str) -> bool:
    """Weight decay skips biases and layer-norm parameters."""
    leaf = name.rsplit(".", 1)[-1]
    if ".ln" in name or name.startswith("enc.ln") or name.startswith("dec.ln"):
        return False
    return not leaf.startswith("b")


# ---------------------------------------------------------------- pure ops

def multihead_attention(p, prefix, q_in, k_in, v_in, mask, n_heads, rng=None, rate=0.0):
    """Scaled dot-product attention; ``mask`` is true where attending is allowed."""
    B, Tq, d = q_in.shape
    dh = d // n_heads

    def heads(x, proj):
        y = x @ p[f"{prefix}.w{proj}"] + p[f"{prefix}.b{proj}"]
        return T.transpose(T.reshape(y, (y.shape[0], y.shape[1], n_heads, dh)), (0, 2, 1, 3))

    q, k, v = heads(q_in, "q"), heads(k_in, "k"), heads(v_in, "v")
    scores = (q @ T.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    scores = T.masked_fill(scores, ~mask, -np.inf)
    probs = T.softmax(scores, axis=-1)
    ctx = T.transpose(probs @ v, (0, 2, 1, 3))
    ctx = T.reshape(ctx, (ctx.shape[0], Tq, d))
    return T.dropout(ctx @ p[f"{prefix}.wo"] + p[f"{prefix}.bo"], rate, rng)


def saca_cross_attention(p, prefix, queries, enc: EncoderOutput, token_salience, n_heads,
                         rng=None, rate=0.0):
    """Cross-attention with keys = encoder states + salience, values = encoder states."""
    keys = enc.token_states if token_salience is None else enc.token_states + token_salience
    mask = enc.src_mask[:, None, None, :]
    return multihead_attention(p, prefix, queries, keys, enc.token_states, mask, n_heads, rng, rate)


def _ln(p, prefix, x):
    return T.layer_norm(x, p[f"{prefix}.g"], p[f"{prefix}.b"])


def _ffn(p, prefix, x, rng, rate):
    h = T.gelu(x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"])
    return T.dropout(h @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"], rate, rng)


def salience_probs(sentence_states, p, tau):
    """Row-wise softmax over degrees of (w_l . h + b_l) / tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    logits = sentence_states @ p["cls.w"] + p["cls.b"]
    return T.softmax(logits, axis=-1, temperature=tau)


def salience_embedding_soft(degree_probs, p):
    """Expected salience embedding under the degree distribution."""
    return T.as_tensor(degree_probs) @ p["sal_emb"]


def hard_degrees(degree_probs) -> np.ndarray:
    """1-based argmax degree; ties go to the more salient (smaller) degree."""
    data = degree_probs.data if isinstance(degree_probs, Tensor) else np.asarray(degree_probs)
    return np.argmax(data, axis=-1) + 1


def salience_embedding_hard(degree_probs, p):
    return salience_embedding_gold(hard_degrees(degree_probs), p)


def salience_embedding_gold(degrees, p):
    """Embedding rows for 1-based degrees; 0 (padding) maps to row 1 and is masked later."""
    idx = np.maximum(np.asarray(degrees, dtype=np.int64) - 1, 0)
    return T.embedding(p["sal_emb"], idx)


def broadcast_salience(sentence_embeddings, sent_index):
    """Copy each sentence's embedding onto its tokens; padding gets zeros.

    ``sentence_embeddings`` is (B, N, d) and ``sent_index`` (B, S) holds
    1-based sentence ids with 0 at padding.
    """
    sent_index = np.asarray(sent_index, dtype=np.int64)
    if sentence_embeddings.ndim == 2:
        return broadcast_salience(T.reshape(sentence_embeddings, (1,) + sentence_embeddings.shape),
                                  sent_index[None])[0]
    B, N, d = sentence_embeddings.shape
    padded = T.concat([T.Tensor(np.zeros((B, 1, d))), sentence_embeddings], axis=1)
    rows = np.arange(B)[:, None]
    return padded[rows, sent_index]


# ---------------------------------------------------------------- model

class SeasonModel:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor] | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)
        self.embed_scale = math.sqrt(config.d_model)

    def parameters(self):
        return self.params

    def _embed(self, ids, rng):
        ids = np.asarray(ids)
        if ids.shape[1] > self.config.max_positions:
            raise SequenceTooLong(
                f"sequence length {ids.shape[1]} exceeds max_positions {self.config.max_positions}")
        p = self.params
        x = T.embedding(p["tok_emb"], ids) * self.embed_scale + p["pos_emb"][: ids.shape[1]]
        return T.dropout(x, self.config.dropout, rng)

    def encode(self, batch: Batch, rng=None) -> EncoderOutput:
        c, p = self.config, self.params
        rate = c.dropout if rng is not None else 0.0
        x = self._embed(batch.src_ids, rng)
        mask = batch.src_mask[:, None, None, :]
        for i in range(c.n_enc_layers):
            h = _ln(p, f"enc.{i}.ln1", x)
            x = x + multihead_attention(p, f"enc.{i}.attn", h, h, h, mask, c.n_heads, rng, rate)
            x = x + _ffn(p, f"enc.{i}.ffn", _ln(p, f"enc.{i}.ln2", x), rng, rate)
        states = _ln(p, "enc.ln", x)
        rows = np.arange(len(batch))[:, None]
        sentences = states[rows, batch.marker_positions]
        return EncoderOutput(states, sentences, batch.src_mask, batch.sent_index, batch.sent_mask)

    def salience_probs(self, enc: EncoderOutput, tau: float):
        return salience_probs(enc.sentence_states, self.params, tau)

    def guidance(self, enc: EncoderOutput, estimation: str, tau: float = 0.5, degrees=None):
        """Token-level salience ζ(x) for the decoder, plus the degree distribution.

        ``estimation`` is ``soft`` (expectation), ``hard`` (argmax) or
        ``gold`` (given ``degrees``).
        """
        probs = self.salience_probs(enc, tau)
        if estimation == "soft":
            sent = salience_embedding_soft(probs, self.params)
        elif estimation == "hard":
            sent = salience_embedding_hard(probs, self.params)
        elif estimation == "gold":
            if degrees is None:
                raise ValueError("gold estimation needs degrees")
            sent = salience_embedding_gold(degrees, self.params)
        else:
            raise ValueError(f"unknown estimation {estimation!r}")
        return broadcast_salience(sent, enc.sent_index), probs

    def decode(self, tgt_in, enc: EncoderOutput, token_salience, rng=None):
        """Teacher-forced logits (B, T, V) for every target position."""
        c, p = self.config, self.params
        rate = c.dropout if rng is not None else 0.0
        if not c.saca:
            token_salience = None
        y = self._embed(tgt_in, rng)
        Tt = y.shape[1]
        causal = np.tril(np.ones((Tt, Tt), dtype=bool))[None, None]
        for i in range(c.n_dec_layers):
            h = _ln(p, f"dec.{i}.ln1", y)
            y = y + multihead_attention(p, f"dec.{i}.self", h, h, h, causal, c.n_heads, rng, rate)
            h = _ln(p, f"dec.{i}.ln2", y)
            y = y + saca_cross_attention(p, f"dec.{i}.cross", h, enc, token_salience, c.n_heads,
                                         rng, rate)
            y = y + _ffn(p, f"dec.{i}.ffn", _ln(p, f"dec.{i}.ln3", y), rng, rate)
        y = _ln(p, "dec.ln", y)
        return y @ T.transpose(p["tok_emb"], (1, 0))

    def decode_step(self, prefixes, enc: EncoderOutput, token_salience) -> np.ndarray:
        """Next-token logits (K, V) for K prefixes over one encoded document."""
        with no_grad():
            logits = self.decode(np.asarray(prefixes), enc, token_salience)
        return logits.data[:, -1, :]

    # ------------------------------------------------------------ persistence

    def save(self, path, vocab=None, extra: dict | None = None, arrays: dict | None = None):
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model_config": asdict(self.config),
            "parameters": {k: list(v.shape) for k, v in self.params.items()},
            "vocab": list(vocab.tokens) if vocab is not None else None,
            "extra": extra or {},
        }
        payload = {f"param/{k}": v.data for k, v in self.params.items()}
        for k, v in (arrays or {}).items():
            payload[f"array/{k}"] = v
        payload["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **payload)


def load_checkpoint(path):
    """Returns ``(model, vocab_tokens, extra, arrays)``."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(z["__meta__"].tobytes().decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a season checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        params = {}
        for name, shape in meta["parameters"].items():
            data = np.array(z[f"param/{name}"], dtype=np.float64)
            if list(data.shape) != shape:
                raise ValueError(f"parameter {name} has shape {data.shape}, expected {shape}")
            params[name] = T.parameter(data, name)
        arrays = {k[len("array/"):]: np.array(z[k]) for k in z.files if k.startswith("array/")}
    config = ModelConfig(**meta["model_config"])
    return SeasonModel(config, params), meta.get("vocab"), meta.get("extra", {}), arrays
