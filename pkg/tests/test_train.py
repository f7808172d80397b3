import math

import numpy as np
import pytest

from season import tensor as T
from season.corpus import build_vocab
from season.decode import DecodeConfig
from season.errors import MissingLabels, NonFiniteGradient
from season.model import ModelConfig, make_batch
from season.salience import label_corpus
from season.synthetic import make_corpus
from season.train import (
    TrainConfig, TrainState, batch_losses, build_model, clip_gradients, encode_labeled,
    learning_rate, length_batches, loss_cls, loss_lm, optimizer_step, smoothed_targets, train,
)


def tiny(vocab, **kw):
    base = dict(d_model=16, n_heads=2, n_enc_layers=1, n_dec_layers=1, ffn_dim=32, dropout=0.0)
    cfg = ModelConfig(**{**base, **kw})
    return build_model(vocab, cfg, seed=0, max_src=128, max_tgt=32)


@pytest.fixture(scope="module")
def data():
    docs, _ = label_corpus(make_corpus(12, seed=9))
    return docs, build_vocab(docs, 1000)


class TestLosses:
    def test_cls_hand_computed(self):
        probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1]])
        targets = np.array([[0.8, 0.2, 0.0], [0.1, 0.8, 0.1]])
        want = -(0.8 * math.log(0.7) + 0.2 * math.log(0.2)
                 + 0.1 * math.log(0.1) + 0.8 * math.log(0.8) + 0.1 * math.log(0.1)) / 2
        assert loss_cls(probs, targets).item() == pytest.approx(want)

    def test_cls_ignores_padding(self):
        probs = np.array([[[0.5, 0.5], [0.01, 0.99]]])
        targets = np.array([[[1.0, 0.0], [1.0, 0.0]]])
        got = loss_cls(probs, targets, np.array([[True, False]])).item()
        assert got == pytest.approx(math.log(2))

    def test_cls_clamps_zero_probability(self):
        assert math.isfinite(loss_cls(np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]])).item())

    def test_lm_hand_computed(self):
        logits = np.log(np.array([[[0.5, 0.25, 0.25], [0.1, 0.1, 0.8], [0.3, 0.3, 0.4]]]))
        got = loss_lm(logits, np.array([[0, 2, 1]]), np.array([[True, True, False]])).item()
        assert got == pytest.approx(-(math.log(0.5) + math.log(0.8)) / 2)

    def test_smoothed_targets(self):
        out = smoothed_targets(np.array([[1, 3, 0]]), 3, 0.2)
        np.testing.assert_allclose(out[0], [[0.8, 0.2, 0], [0, 0.2, 0.8], [0, 0, 0]])

    def test_batch_losses_need_labels(self, data):
        docs, vocab = data
        model = tiny(vocab)
        enc, _ = encode_labeled(docs[:2], vocab, TrainConfig())
        with pytest.raises(MissingLabels):
            batch_losses(model, make_batch(enc), TrainConfig())

    def test_total_combines_with_alpha(self, data):
        docs, vocab = data
        model = tiny(vocab)
        enc, deg = encode_labeled(docs[:3], vocab, TrainConfig())
        for alpha in (0.0, 1.5):
            s = batch_losses(model, make_batch(enc, deg), TrainConfig(alpha=alpha))
            assert s.total.item() == pytest.approx(s.lm + alpha * s.cls)


class TestOptimizer:
    def test_warmup(self):
        c = TrainConfig(lr=1e-3, warmup_steps=10)
        assert learning_rate(5, c) == pytest.approx(5e-4)
        assert learning_rate(10, c) == learning_rate(500, c) == 1e-3
        assert learning_rate(3, TrainConfig(warmup_steps=0)) == TrainConfig().lr

    def test_clip(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        clipped, norm = clip_gradients(grads, 1.0)
        assert norm == 5.0
        assert math.sqrt(sum(float((g ** 2).sum()) for g in clipped.values())) == pytest.approx(1)
        same, _ = clip_gradients(grads, 10.0)
        assert same["a"][0] == 3.0

    def test_adamw_against_reference(self):
        rng = np.random.default_rng(0)
        c = TrainConfig(lr=0.01, warmup_steps=0, clip_norm=1e9, weight_decay=0.1)
        w0, b0 = rng.normal(size=3), rng.normal(size=3)
        params = {"w": T.parameter(w0.copy()), "b": T.parameter(b0.copy())}
        state = TrainState()
        m = {k: np.zeros(3) for k in params}
        v = {k: np.zeros(3) for k in params}
        ref = {"w": w0.copy(), "b": b0.copy()}
        for t in range(1, 6):
            grads = {k: rng.normal(size=3) for k in params}
            optimizer_step(params, grads, state, c, decay=lambda n: n == "w")
            for k, g in grads.items():
                m[k] = 0.9 * m[k] + 0.1 * g
                v[k] = 0.99 * v[k] + 0.01 * g * g
                if k == "w":
                    ref[k] = ref[k] - 0.01 * 0.1 * ref[k]
                ref[k] = ref[k] - 0.01 * (m[k] / (1 - 0.9 ** t)) / (
                    np.sqrt(v[k] / (1 - 0.99 ** t)) + 1e-8)
        for k in params:
            np.testing.assert_allclose(params[k].data, ref[k], rtol=1e-12)

    def test_non_finite_names_parameter(self):
        params = {"enc.0.ffn.w1": T.parameter(np.zeros(2))}
        with pytest.raises(NonFiniteGradient, match="enc.0.ffn.w1"):
            optimizer_step(params, {"enc.0.ffn.w1": np.array([np.nan, 0.0])}, TrainState(),
                           TrainConfig())

    @pytest.mark.parametrize("kw", [{"alpha": -1}, {"beta": 1.0}, {"clip_norm": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestLoop:
    def test_length_batches_cover_everything(self, data):
        docs, vocab = data
        enc, _ = encode_labeled(docs, vocab, TrainConfig())
        batches = length_batches(enc, 5)
        assert sorted(i for b in batches for i in b) == list(range(len(docs)))
        assert max(len(b) for b in batches) == 5
        lengths = [len(enc[i].input_ids) for b in batches for i in b]
        assert lengths == sorted(lengths)

    def test_loss_decreases(self, data):
        docs, vocab = data
        cfg = TrainConfig(epochs=50, warmup_steps=20, lr=1e-3, batch_size=4)
        hist = train(docs, None, tiny(vocab), vocab, cfg).history
        assert hist[-1]["loss_total"] < hist[0]["loss_total"]

    def test_resume_matches_uninterrupted(self, data, tmp_path):
        docs, vocab = data
        cfg = TrainConfig(epochs=3, warmup_steps=4, batch_size=4)
        full = train(docs, None, tiny(vocab, dropout=0.1), vocab, cfg, out_dir=tmp_path / "a")
        train(docs, None, tiny(vocab, dropout=0.1), vocab, cfg, out_dir=tmp_path / "b", epochs=2)
        resumed = train(docs, None, None, vocab, cfg, out_dir=tmp_path / "b",
                        resume_from=tmp_path / "b" / "last.npz", epochs=1)
        assert resumed.state.epoch == 3
        assert resumed.history[-1] == full.history[-1]
        for k, p in full.model.params.items():
            np.testing.assert_array_equal(p.data, resumed.model.params[k].data)

    def test_validation_metrics_logged(self, data):
        docs, vocab = data
        cfg = TrainConfig(epochs=2, eval_every=2, batch_size=6)
        dec = DecodeConfig(beam_size=1, min_len=1, max_len=5)
        hist = train(docs, docs[:2], tiny(vocab), vocab, cfg, decode_config=dec).history
        assert hist[0]["val_rougeL"] is None
        assert 0.0 <= hist[1]["val_rougeL"] <= 1.0
