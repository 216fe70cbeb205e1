"""Surrogate training labels from gold summaries.

For every document that carries a summary we derive
  * the salient sentence set: sentences whose best TF-IDF cosine similarity
    to any summary sentence clears a threshold, ranked by score and capped;
  * the keyword set: the highest-weighted TF-IDF words of the summary.

The sentence similarity is deliberately pluggable (`sim_fn`): the default
TF-IDF cosine is deterministic and dependency-free, and a learned similarity
model can be dropped in without touching the selection logic.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

from .corpus import Document, TfIdfModel, Vocabulary, tfidf_vector
from .errors import MissingSummaryError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupervisionConfig:
    top_k: int = 10
    sim_threshold: float = 0.3
    num_keywords: int = 30

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        # thresholds above 1 are allowed and simply select nothing
        if self.sim_threshold < 0.0:
            raise ValueError("sim_threshold must be non-negative")
        if self.num_keywords < 1:
            raise ValueError("num_keywords must be >= 1")


@dataclass(frozen=True)
class TrainingExample:
    """Per-document labels: salient sentence indices (0-based) and keyword ids."""

    doc_id: str
    salient: frozenset[int]
    keywords: frozenset[int]


def sentence_similarity(a, b, tfidf: TfIdfModel) -> float:
    """Cosine similarity of the TF-IDF vectors of two token-id sequences.

    Returns 0.0 when either vector has zero norm.
    """
    va = tfidf_vector(tfidf, a)
    vb = tfidf_vector(tfidf, b)
    if len(vb) < len(va):
        va, vb = vb, va
    dot = sum(w * vb.get(t, 0.0) for t, w in va.items())
    na = math.sqrt(sum(w * w for w in va.values()))
    nb = math.sqrt(sum(w * w for w in vb.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def select_salient_sentences(doc: Document, cfg: SupervisionConfig, tfidf: TfIdfModel,
                             sim_fn=sentence_similarity) -> set[int]:
    """Indices of the sentences most similar to the summary.

    A sentence's score is its best similarity against any summary sentence.
    Sentences scoring below cfg.sim_threshold are dropped; the rest are
    ranked by score (ties: earlier sentence first) and capped at cfg.top_k.
    The result may be empty.
    """
    if not doc.summary:
        raise MissingSummaryError(f"document {doc.id!r} has no summary")
    scores = []
    for idx, sent in enumerate(doc.sentences):
        score = max(sim_fn(sent, ref, tfidf) for ref in doc.summary)
        if score >= cfg.sim_threshold:
            scores.append((-score, idx))
    scores.sort()
    return {idx for _, idx in scores[: cfg.top_k]}


def select_keywords(doc: Document, cfg: SupervisionConfig, tfidf: TfIdfModel) -> set[int]:
    """Top TF-IDF word ids of the concatenated summary; zero weights excluded.

    Ties for the last slot go to the smaller word id.
    """
    if not doc.summary:
        raise MissingSummaryError(f"document {doc.id!r} has no summary")
    tokens = [w for sent in doc.summary for w in sent]
    weights = tfidf_vector(tfidf, tokens)
    ranked = sorted(
        ((w, weight) for w, weight in weights.items() if weight > 0.0),
        key=lambda item: (-item[1], item[0]),
    )
    return {w for w, _ in ranked[: cfg.num_keywords]}


def build_training_set(docs, cfg: SupervisionConfig, tfidf: TfIdfModel,
                       sim_fn=sentence_similarity) -> tuple[list[TrainingExample], int]:
    """One example per document with a summary.

    Documents whose salient set and keyword set are both empty are dropped;
    the second return value counts them.
    """
    examples = []
    dropped = 0
    for doc in docs:
        if not doc.summary:
            continue
        salient = select_salient_sentences(doc, cfg, tfidf, sim_fn=sim_fn)
        keywords = select_keywords(doc, cfg, tfidf)
        if not salient and not keywords:
            dropped += 1
            continue
        examples.append(
            TrainingExample(doc_id=doc.id, salient=frozenset(salient), keywords=frozenset(keywords))
        )
    if dropped:
        log.warning("dropped %d document(s) with empty salient and keyword sets", dropped)
    return examples, dropped


# --- labels file I/O -------------------------------------------------------


def write_labels(examples, vocab: Vocabulary, path) -> None:
    """JSON Lines, keywords spelled out as words for inspectability."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            obj = {
                "doc_id": ex.doc_id,
                "salient": sorted(ex.salient),
                "keywords": sorted(vocab.word_of[w] for w in ex.keywords),
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_labels(path, vocab: Vocabulary) -> list[TrainingExample]:
    examples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            keywords = frozenset(vocab.id_of[w] for w in obj["keywords"] if w in vocab)
            examples.append(
                TrainingExample(
                    doc_id=obj["doc_id"],
                    salient=frozenset(int(i) for i in obj["salient"]),
                    keywords=keywords,
                )
            )
    return examples
