"""Encoder network: salience-weighted pooling and keyword prediction.

The document embedding is a tanh projection of the convex combination of
contextual sentence states, weighted by normalized salience probabilities.
A full-vocabulary softmax head scores how well the embedding predicts the
document's keywords.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import EmptyKeywordSetError
from .nn import ParamStore, Tape, Var
from .reader import ModelConfig, Reader


class Encoder:
    def __init__(self, cfg: ModelConfig, store: ParamStore):
        self.cfg = cfg
        self.store = store
        two_h = 2 * cfg.lstm_hidden
        store.get_or_create("encoder.pool.w", (cfg.doc_dim, two_h), nn.glorot(two_h, cfg.doc_dim))
        store.get_or_create("encoder.pool.b", (cfg.doc_dim,), nn.zeros())
        store.get_or_create("encoder.out.w", (cfg.vocab_size, cfg.doc_dim),
                            nn.glorot(cfg.doc_dim, cfg.vocab_size))
        store.get_or_create("encoder.out.b", (cfg.vocab_size,), nn.zeros())

    def pool_document(self, tape: Tape, states: list[Var], probs: Var) -> Var:
        """tanh(W (sum_i a_i h_i) + b) with a_i = p_i / sum_j p_j.

        The weights are scale-invariant in `probs`: multiplying every
        probability by a positive constant leaves the embedding unchanged.
        """
        if len(states) != probs.data.shape[0] or not states:
            raise ValueError("states and probabilities must align and be non-empty")
        weights = tape.normalize_sum(probs)
        pooled = tape.weighted_sum(weights, tape.stack_rows(states))
        projected = tape.linear(
            pooled, self.store.var("encoder.pool.w"), self.store.var("encoder.pool.b")
        )
        return tape.tanh(projected)

    def keyword_logits(self, tape: Tape, doc_emb: Var) -> Var:
        """Unnormalized keyword scores over the whole vocabulary."""
        return tape.linear(
            doc_emb, self.store.var("encoder.out.w"), self.store.var("encoder.out.b")
        )

    def keyword_loss(self, tape: Tape, doc_emb: Var, keywords) -> Var:
        """Summed -log softmax probability of each keyword id."""
        if not keywords:
            raise EmptyKeywordSetError("keyword loss needs at least one keyword")
        return tape.softmax_nll(self.keyword_logits(tape, doc_emb), keywords)


def embed_document(reader: Reader, encoder: Encoder, doc) -> tuple[np.ndarray, np.ndarray]:
    """Single feed-forward run: returns (document embedding, salience vector).

    Deterministic for fixed parameters; no iterative inference.
    """
    tape = Tape()
    sents = [reader.encode_sentence(tape, s) for s in doc.sentences]
    states = reader.contextualize(tape, sents)
    probs = reader.salience(tape, states)
    emb = encoder.pool_document(tape, states, probs)
    return emb.data.copy(), probs.data.copy()


def write_embeddings(rows, path) -> None:
    """JSON Lines `{"id", "embedding", "salience"}`, one document per line."""
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, emb, salience in rows:
            obj = {
                "id": doc_id,
                "embedding": [float(x) for x in emb],
                "salience": [float(x) for x in salience],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_embeddings(path) -> dict[str, np.ndarray]:
    import json

    index: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            index[obj["id"]] = np.asarray(obj["embedding"], dtype=np.float64)
    return index
