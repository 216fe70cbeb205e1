"""Synthetic planted-topic corpora for end-to-end checks and demos.

Each document mixes noise sentences drawn from a shared noise vocabulary
with a few sentences drawn from its topic's private vocabulary; the summary
is a copy of the topic sentences. Topic and noise vocabularies are disjoint,
so the label generator provably marks exactly the topic sentences salient
and picks topic words as keywords.
"""

from __future__ import annotations

import numpy as np

from .corpus import RawDocument


def make_planted_corpus(
    seed: int = 0,
    num_topics: int = 8,
    docs_per_topic: int = 10,
    noise_sentences: int = 6,
    topic_sentences: int = 2,
    sentence_len: int = 8,
    topic_vocab: int = 1,
    noise_vocab: int = 490,
    queries_per_topic: int = 1,
) -> tuple[list[RawDocument], list[RawDocument]]:
    """Returns (corpus documents, held-out query documents).

    Corpus documents carry summaries and topic labels. Query documents are
    held-out documents from the same generative process (fresh noise and
    topic sentences, no summary), labeled for building relevance judgments.

    The tiny per-topic vocabulary keeps each summary's keyword set small,
    which keeps the keyword softmax floor (|keywords| * ln |keywords| per
    document) far below the initial loss — training can then drive the
    total loss to a small fraction of its starting value.
    """
    rng = np.random.default_rng(seed)
    topics = [
        [f"topic{t:02d}word{j:02d}" for j in range(topic_vocab)] for t in range(num_topics)
    ]
    noise = [f"noise{j:03d}" for j in range(noise_vocab)]

    def sentence(pool) -> str:
        return " ".join(rng.choice(pool, size=sentence_len))

    def planted_doc(doc_id: str, label: str, pool, with_summary: bool) -> RawDocument:
        topical = [sentence(pool) for _ in range(topic_sentences)]
        noisy = [sentence(noise) for _ in range(noise_sentences)]
        total = topic_sentences + noise_sentences
        slots = set(rng.choice(total, size=topic_sentences, replace=False).tolist())
        sentences: list[str] = []
        ti = ni = 0
        for pos in range(total):
            if pos in slots:
                sentences.append(topical[ti])
                ti += 1
            else:
                sentences.append(noisy[ni])
                ni += 1
        return RawDocument(
            id=doc_id,
            sentences=tuple(sentences),
            summary=tuple(topical) if with_summary else None,
            label=label,
        )

    docs = []
    queries = []
    for t in range(num_topics):
        label = f"topic{t:02d}"
        for d in range(docs_per_topic):
            docs.append(planted_doc(f"{label}-doc{d:02d}", label, topics[t], True))
        for q in range(queries_per_topic):
            queries.append(planted_doc(f"{label}-query{q:02d}", label, topics[t], False))
    return docs, queries


def planted_qrels(queries, docs) -> dict[str, set[str]]:
    """Relevance judgments: a corpus document is relevant to a query iff labels match."""
    by_label: dict[str, set[str]] = {}
    for doc in docs:
        by_label.setdefault(doc.label, set()).add(doc.id)
    return {q.id: set(by_label.get(q.label, set())) for q in queries}


def planted_salient_indices(doc: RawDocument) -> set[int]:
    """Ground-truth salient positions: sentences that appear in the summary."""
    summary = set(doc.summary or ())
    return {i for i, s in enumerate(doc.sentences) if s in summary}
