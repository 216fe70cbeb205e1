import math

import numpy as np
import pytest

from keyvec.gradcheck import COMPOSED_EPS, stable_tiny_model
from keyvec.nn import ParamStore, Tape, finite_difference_check
from keyvec.reader import ModelConfig, Reader, reader_loss


def tiny_cfg(**kw):
    defaults = dict(vocab_size=20, word_dim=4, filter_widths=(1, 2), filters_per_width=3,
                    lstm_hidden=3, doc_dim=4)
    defaults.update(kw)
    return ModelConfig(**defaults)


def make_reader(cfg=None, seed=0, dtype=np.float64):
    cfg = cfg or tiny_cfg()
    store = ParamStore(seed=seed, dtype=dtype)
    return Reader(cfg, store), store


class TestModelConfig:
    def test_defaults_give_150_dim_sentences(self):
        cfg = ModelConfig(vocab_size=100)
        assert cfg.sent_dim == 150
        assert cfg.filters_per_width * len(cfg.filter_widths) == cfg.sent_dim

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(vocab_size=1)
        with pytest.raises(ValueError):
            ModelConfig(vocab_size=10, filter_widths=(2, 1))
        with pytest.raises(ValueError):
            ModelConfig(vocab_size=10, conv_activation="gelu")

    def test_dict_roundtrip(self):
        cfg = tiny_cfg()
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestEncodeSentence:
    def test_output_dim_is_sent_dim_default_config(self):
        reader, _ = make_reader(ModelConfig(vocab_size=60), dtype=np.float32)
        for length in (1, 2, 5, 30):
            out = reader.encode_sentence(Tape(), list(range(2, 2 + length)))
            assert out.data.shape == (150,)

    def test_zero_filters_give_zero_vector(self):
        reader, store = make_reader()
        for w in reader.cfg.filter_widths:
            store.value(f"reader.conv{w}.w")[...] = 0.0
            store.value(f"reader.conv{w}.b")[...] = 0.0
        out = reader.encode_sentence(Tape(), [2, 3, 4])
        np.testing.assert_array_equal(out.data, np.zeros(reader.cfg.sent_dim))

    def test_single_token_padded_not_error(self):
        cfg = tiny_cfg(filter_widths=(1, 2, 3), filters_per_width=2)
        reader, _ = make_reader(cfg)
        out = reader.encode_sentence(Tape(), [5])
        assert out.data.shape == (cfg.sent_dim,)


class TestContextualize:
    def test_single_sentence_dims(self):
        reader, _ = make_reader()
        tape = Tape()
        states = reader.contextualize(tape, [reader.encode_sentence(tape, [2, 3])])
        assert len(states) == 1
        assert states[0].data.shape == (2 * reader.cfg.lstm_hidden,)

    def test_zero_lstm_params_give_zero_states(self):
        reader, store = make_reader()
        for direction in ("fw", "bw"):
            for part in ("wx", "wh", "b"):
                store.value(f"reader.lstm_{direction}.{part}")[...] = 0.0
        tape = Tape()
        sents = [reader.encode_sentence(tape, [2, 3]), reader.encode_sentence(tape, [4])]
        states = reader.contextualize(tape, sents)
        for h in states:
            np.testing.assert_array_equal(h.data, np.zeros(2 * reader.cfg.lstm_hidden))

    def test_reversal_swaps_halves_with_tied_directions(self):
        """With identical forward/backward parameter blocks, reversing the
        input makes the forward half at i equal the backward half at N-1-i.
        """
        reader, store = make_reader()
        for part in ("wx", "wh", "b"):
            store.value(f"reader.lstm_bw.{part}")[...] = store.value(f"reader.lstm_fw.{part}")
        rng = np.random.default_rng(4)
        h = reader.cfg.lstm_hidden
        embs = [rng.normal(size=reader.cfg.sent_dim) for _ in range(4)]
        tape = Tape()
        states = reader.contextualize(tape, [tape.leaf(e) for e in embs])
        rev_states = reader.contextualize(tape, [tape.leaf(e) for e in reversed(embs)])
        n = len(embs)
        for i in range(n):
            np.testing.assert_array_equal(
                rev_states[n - 1 - i].data[:h], states[i].data[h:]
            )


class TestSalience:
    def test_zero_weights_give_half(self):
        reader, store = make_reader()
        store.value("reader.salience.w")[...] = 0.0
        tape = Tape()
        states = reader.contextualize(tape, [reader.encode_sentence(tape, [2, 3, 4])])
        probs = reader.salience(tape, states)
        np.testing.assert_array_equal(probs.data, [0.5])

    def test_large_bias_saturates_toward_one(self):
        reader, store = make_reader()
        store.value("reader.salience.w")[...] = 0.0
        store.value("reader.salience.b")[...] = 10.0
        tape = Tape()
        states = reader.contextualize(tape, [reader.encode_sentence(tape, [2])])
        assert reader.salience(tape, states).data[0] > 0.99

    def test_monotone_in_bias(self):
        reader, store = make_reader(seed=3)
        tape = Tape()
        sents = [reader.encode_sentence(tape, [2, 5, 9]), reader.encode_sentence(tape, [7])]
        states = reader.contextualize(tape, sents)
        before = reader.salience(Tape(), states).data.copy()
        store.value("reader.salience.b")[...] += 0.75
        after = reader.salience(Tape(), states).data
        assert np.all(after > before)

    def test_probabilities_strictly_inside_unit_interval(self):
        reader, _ = make_reader(seed=8)
        tape = Tape()
        sents = [reader.encode_sentence(tape, [2, 3, 4, 5]) for _ in range(5)]
        probs = reader.salience(tape, reader.contextualize(tape, sents))
        assert np.all(probs.data > 0.0) and np.all(probs.data < 1.0)


class TestReaderLoss:
    def loss_value(self, probs, salient):
        tape = Tape()
        return float(reader_loss(tape, tape.leaf(np.asarray(probs)), salient, len(probs)).data)

    def test_uniform_probs_single_salient(self):
        assert self.loss_value([0.5, 0.5], {0}) == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_confident_correct_prediction_near_zero(self):
        # -(ln 0.999 + ln 0.999) = 0.002001...
        value = self.loss_value([0.999, 0.001], {0})
        assert value == pytest.approx(0.002001, abs=1e-5)
        assert value < 0.01

    def test_all_salient_closed_form(self):
        assert self.loss_value([0.5] * 3, {0, 1, 2}) == pytest.approx(3 * math.log(2), abs=1e-12)

    def test_finite_under_saturation(self):
        assert math.isfinite(self.loss_value([1.0, 0.0], {1}))

    def test_minimized_when_probs_match_labels(self):
        near_perfect = self.loss_value([1.0 - 1e-9, 1e-9], {0})
        assert near_perfect < self.loss_value([0.9, 0.1], {0}) < self.loss_value([0.5, 0.5], {0})

    def test_invalid_index_rejected(self):
        with pytest.raises(ValueError):
            self.loss_value([0.5, 0.5], {2})


def test_reader_loss_end_to_end_gradient():
    """Finite differences through CNN -> BiLSTM -> salience -> NLL."""
    worst = 0.0
    for seed in range(5):
        cfg, store, reader, _, doc, example = stable_tiny_model(seed)

        def loss(tape):
            sents = [reader.encode_sentence(tape, s) for s in doc.sentences]
            states = reader.contextualize(tape, sents)
            probs = reader.salience(tape, states)
            return reader_loss(tape, probs, example.salient, doc.num_sentences)

        reader_names = [n for n in store.names() if n.startswith("reader.")]
        worst = max(worst, finite_difference_check(loss, store, eps=COMPOSED_EPS,
                                                   names=reader_names))
    assert worst < 1e-4
