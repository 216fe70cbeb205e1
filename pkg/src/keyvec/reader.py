"""Reader network: sentence encoding, cross-sentence context, salience.

A sentence becomes a fixed-length embedding via width-grouped convolutions
with max-pooling over positions; a bidirectional LSTM then contextualizes
the sentence embeddings, and a logistic layer turns each contextual state
into the probability that the sentence is salient.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .errors import EmptyDocumentError
from .nn import ParamStore, Tape, Var


@dataclass(frozen=True)
class ModelConfig:
    """Network dimensions. Defaults give 150-dim sentence embeddings
    (3 widths x 50 filters) and 100-dim document embeddings.
    """

    vocab_size: int
    word_dim: int = 100
    filter_widths: tuple[int, ...] = (1, 2, 3)
    filters_per_width: int = 50
    lstm_hidden: int = 100
    doc_dim: int = 100
    conv_activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "filter_widths", tuple(self.filter_widths))
        if self.vocab_size < 2:
            raise ValueError("vocab_size must include PAD and UNK")
        for field in ("word_dim", "filters_per_width", "lstm_hidden", "doc_dim"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1")
        widths = self.filter_widths
        if not widths or any(w < 1 for w in widths) or list(widths) != sorted(set(widths)):
            raise ValueError("filter_widths must be strictly increasing positive ints")
        if self.conv_activation not in ("relu", "tanh"):
            raise ValueError("conv_activation must be 'relu' or 'tanh'")

    @property
    def sent_dim(self) -> int:
        return self.filters_per_width * len(self.filter_widths)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_widths"] = list(self.filter_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["filter_widths"] = tuple(d["filter_widths"])
        return cls(**d)


class Reader:
    """Owns the word embeddings, convolution banks, BiLSTM and salience head.

    Parameters are registered in (or rebound from) `store` under stable
    names, so construction against a loaded checkpoint reuses its tensors.
    """

    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        self.store = store
        s, h = cfg.sent_dim, cfg.lstm_hidden
        store.get_or_create("reader.embed", (cfg.vocab_size, cfg.word_dim), nn.uniform(0.05))
        for w in cfg.filter_widths:
            store.get_or_create(
                f"reader.conv{w}.w",
                (cfg.filters_per_width, w, cfg.word_dim),
                nn.glorot(w * cfg.word_dim, cfg.filters_per_width),
            )
            store.get_or_create(f"reader.conv{w}.b", (cfg.filters_per_width,), nn.zeros())
        for direction in ("fw", "bw"):
            store.get_or_create(f"reader.lstm_{direction}.wx", (4 * h, s), nn.glorot(s, h))
            store.get_or_create(f"reader.lstm_{direction}.wh", (4 * h, h), nn.glorot(h, h))
            store.get_or_create(f"reader.lstm_{direction}.b", (4 * h,), nn.lstm_bias(h))
        store.get_or_create("reader.salience.w", (2 * h,), nn.glorot(2 * h, 1))
        store.get_or_create("reader.salience.b", (1,), nn.zeros())

    def encode_sentence(self, tape: Tape, token_ids) -> Var:
        """Sentence embedding of dimension cfg.sent_dim, any input length >= 1."""
        if len(token_ids) < 1:
            raise EmptyDocumentError("cannot encode an empty sentence")
        words = tape.embedding_lookup(self.store.var("reader.embed"), token_ids)
        pooled = [
            tape.conv1d_maxpool(
                words,
                self.store.var(f"reader.conv{w}.w"),
                self.store.var(f"reader.conv{w}.b"),
                activation=self.cfg.conv_activation,
            )
            for w in self.cfg.filter_widths
        ]
        return tape.concat(pooled)

    def _scan(self, tape: Tape, sent_embs: list[Var], direction: str) -> list[Var]:
        h = tape.leaf(np.zeros(self.cfg.lstm_hidden, dtype=self.store.dtype))
        c = tape.leaf(np.zeros(self.cfg.lstm_hidden, dtype=self.store.dtype))
        wx = self.store.var(f"reader.lstm_{direction}.wx")
        wh = self.store.var(f"reader.lstm_{direction}.wh")
        b = self.store.var(f"reader.lstm_{direction}.b")
        order = range(len(sent_embs)) if direction == "fw" else reversed(range(len(sent_embs)))
        states: list[Var | None] = [None] * len(sent_embs)
        for i in order:
            h, c = tape.lstm_step(sent_embs[i], h, c, wx, wh, b)
            states[i] = h
        return states

    def contextualize(self, tape: Tape, sent_embs: list[Var]) -> list[Var]:
        """Per-sentence contextual states: forward and backward LSTM outputs
        concatenated, both scans starting from zero states.
        """
        if not sent_embs:
            raise EmptyDocumentError("contextualize needs at least one sentence")
        fw = self._scan(tape, sent_embs, "fw")
        bw = self._scan(tape, sent_embs, "bw")
        return [tape.concat([f, b]) for f, b in zip(fw, bw)]

    def salience(self, tape: Tape, states: list[Var]) -> Var:
        """Per-sentence salience probabilities, shape [N], each in (0, 1)."""
        stacked = tape.stack_rows(states)
        scores = tape.linear_rows(
            stacked, self.store.var("reader.salience.w"), self.store.var("reader.salience.b")
        )
        return tape.sigmoid(scores)


def reader_loss(tape: Tape, probs: Var, salient, num_sentences: int) -> Var:
    """Negative log likelihood of the salient/non-salient split.

    `salient` holds 0-based sentence indices; an empty set labels every
    sentence non-salient.
    """
    targets = np.zeros(num_sentences)
    for idx in salient:
        if not 0 <= idx < num_sentences:
            raise ValueError(f"salient index {idx} outside 0..{num_sentences - 1}")
        targets[idx] = 1.0
    return tape.binary_nll(probs, targets)
