"""Shared fixtures: the planted-topic corpus and a model trained on it.

Training is session-scoped (about half a minute) and reused by the overfit,
retrieval and clustering acceptance tests.
"""

from __future__ import annotations

import time
from types import SimpleNamespace

import pytest

from keyvec.corpus import build_vocabulary, compute_tfidf, encode_document
from keyvec.encoder import embed_document
from keyvec.reader import ModelConfig
from keyvec.supervision import SupervisionConfig, build_training_set
from keyvec.synth import make_planted_corpus, planted_qrels
from keyvec.train import TrainConfig, build_model, train


@pytest.fixture(scope="session")
def planted():
    raw_docs, raw_queries = make_planted_corpus(seed=7)
    vocab = build_vocabulary(raw_docs)
    docs = [encode_document(vocab, r) for r in raw_docs]
    tfidf = compute_tfidf(docs)
    examples, dropped = build_training_set(docs, SupervisionConfig(), tfidf)
    return SimpleNamespace(
        raw_docs=raw_docs,
        raw_queries=raw_queries,
        vocab=vocab,
        docs=docs,
        doc_map={d.id: d for d in docs},
        tfidf=tfidf,
        examples=examples,
        dropped=dropped,
        qrels=planted_qrels(raw_queries, raw_docs),
        labels={d.id: d.label for d in docs},
    )


@pytest.fixture(scope="session")
def trained(planted):
    cfg = ModelConfig(vocab_size=planted.vocab.size)
    start = time.perf_counter()
    ckpt, stats = train(
        planted.docs, planted.examples, planted.vocab, cfg, TrainConfig(epochs=60, seed=0)
    )
    train_seconds = time.perf_counter() - start
    reader, encoder = build_model(ckpt)
    index = {d.id: embed_document(reader, encoder, d)[0] for d in planted.docs}
    query_embs = {
        q.id: embed_document(reader, encoder, encode_document(planted.vocab, q))[0]
        for q in planted.raw_queries
    }
    return SimpleNamespace(
        ckpt=ckpt,
        stats=stats,
        reader=reader,
        encoder=encoder,
        index=index,
        query_embs=query_embs,
        train_seconds=train_seconds,
        epochs=60,
    )
