"""Retrieval and clustering evaluation.

Retrieval: cosine ranking with P@k, MAP (TREC convention: un-retrieved
relevants count against the average) and MRR. Clustering: Lloyd's k-means
with k-means++ seeding and restart selection, scored by pairwise F1,
V-measure and the Adjusted Rand Index.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatchError,
    EmptyIndexError,
    LabelMismatchError,
    QueryWithoutRelevantsError,
    TooFewPointsError,
)


@dataclass(frozen=True)
class RankedList:
    """Retrieval results for one query: document ids with non-increasing scores."""

    query_id: str
    doc_ids: tuple[str, ...]
    scores: tuple[float, ...]


@dataclass(frozen=True)
class Clustering:
    assignment: dict[str, int]
    k: int


def cosine(a, b) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"cosine: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def retrieve(query_id: str, query_emb, index: dict[str, np.ndarray], k: int) -> RankedList:
    """Top-k index entries by cosine similarity, ties broken by ascending doc id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index:
        raise EmptyIndexError("retrieval index is empty")
    scored = sorted(
        ((doc_id, cosine(query_emb, emb)) for doc_id, emb in index.items()),
        key=lambda item: (-item[1], item[0]),
    )[:k]
    return RankedList(
        query_id=query_id,
        doc_ids=tuple(d for d, _ in scored),
        scores=tuple(s for _, s in scored),
    )


def precision_at_k(run: RankedList, relevant: set[str], k: int) -> float:
    """|top-k hits| / k; the denominator stays k even for short runs."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for d in run.doc_ids[:k] if d in relevant)
    return hits / k


def average_precision(run: RankedList, relevant: set[str]) -> float:
    """Mean of precision-at-hit-ranks, normalized by the total relevant count."""
    if not relevant:
        raise QueryWithoutRelevantsError(f"query {run.query_id!r} has no relevant documents")
    hits = 0
    total = 0.0
    for rank, doc_id in enumerate(run.doc_ids, start=1):
        if doc_id in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def reciprocal_rank(run: RankedList, relevant: set[str]) -> float:
    if not relevant:
        raise QueryWithoutRelevantsError(f"query {run.query_id!r} has no relevant documents")
    for rank, doc_id in enumerate(run.doc_ids, start=1):
        if doc_id in relevant:
            return 1.0 / rank
    return 0.0


def _check_qrels(runs: list[RankedList], qrels: dict[str, set[str]]) -> None:
    for run in runs:
        if not qrels.get(run.query_id):
            raise QueryWithoutRelevantsError(f"query {run.query_id!r} has no relevant documents")


def mean_average_precision(runs: list[RankedList], qrels: dict[str, set[str]]) -> float:
    _check_qrels(runs, qrels)
    return sum(average_precision(r, qrels[r.query_id]) for r in runs) / len(runs)


def mean_reciprocal_rank(runs: list[RankedList], qrels: dict[str, set[str]]) -> float:
    _check_qrels(runs, qrels)
    return sum(reciprocal_rank(r, qrels[r.query_id]) for r in runs) / len(runs)


def mean_precision_at_k(runs: list[RankedList], qrels: dict[str, set[str]], k: int) -> float:
    _check_qrels(runs, qrels)
    return sum(precision_at_k(r, qrels[r.query_id], k) for r in runs) / len(runs)


# --- k-means ----------------------------------------------------------------


def _kmeans_once(points: np.ndarray, k: int, rng: np.random.Generator,
                 max_iters: int) -> tuple[np.ndarray, float]:
    n = points.shape[0]
    # k-means++ seeding
    centers = np.empty((k, points.shape[1]), dtype=points.dtype)
    first = int(rng.integers(n))
    centers[0] = points[first]
    dist2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = dist2.sum()
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=dist2 / total))
        centers[j] = points[pick]
        dist2 = np.minimum(dist2, ((points - centers[j]) ** 2).sum(axis=1))

    assign = np.full(n, -1, dtype=np.intp)
    for _ in range(max_iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        # re-seed empty clusters at the point farthest from its center
        point_d2 = d2[np.arange(n), new_assign].copy()
        for j in range(k):
            if not np.any(new_assign == j):
                far = int(point_d2.argmax())
                centers[j] = points[far]
                new_assign[far] = j
                point_d2[far] = 0.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            centers[j] = points[assign == j].mean(axis=0)
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    wcss = float(d2[np.arange(n), assign].sum())
    return assign, wcss


def kmeans(embeddings: dict[str, np.ndarray], k: int, seed: int = 0,
           max_iters: int = 100, restarts: int = 10, normalize: bool = False) -> Clustering:
    """Best-of-restarts Lloyd's algorithm over the embedding map.

    Deterministic for a fixed seed: restarts use seeds (seed, r) and ties in
    within-cluster sum of squares keep the earliest restart.
    """
    ids = sorted(embeddings)
    n = len(ids)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise TooFewPointsError(f"k={k} clusters requested for {n} points")
    points = np.stack([np.asarray(embeddings[i], dtype=np.float64) for i in ids])
    if normalize:
        norms = np.linalg.norm(points, axis=1, keepdims=True)
        points = points / np.where(norms == 0.0, 1.0, norms)
    best: tuple[float, np.ndarray] | None = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        assign, wcss = _kmeans_once(points, k, rng, max_iters)
        if best is None or wcss < best[0]:
            best = (wcss, assign)
    return Clustering(assignment=dict(zip(ids, best[1].tolist())), k=k)


# --- clustering metrics ------------------------------------------------------


def _contingency(pred: Clustering, truth: dict[str, str]):
    if set(pred.assignment) != set(truth):
        raise LabelMismatchError("clustering and ground truth cover different documents")
    table: Counter[tuple[int, str]] = Counter()
    pred_sizes: Counter[int] = Counter()
    true_sizes: Counter[str] = Counter()
    for doc_id, cluster in pred.assignment.items():
        label = truth[doc_id]
        table[(cluster, label)] += 1
        pred_sizes[cluster] += 1
        true_sizes[label] += 1
    return table, pred_sizes, true_sizes, len(pred.assignment)


def _comb2(x: int) -> int:
    return x * (x - 1) // 2


def pairwise_f1(pred: Clustering, truth: dict[str, str]) -> float:
    """F1 over same-cluster pair decisions (pair-counting clustering F1)."""
    table, pred_sizes, true_sizes, _ = _contingency(pred, truth)
    tp = sum(_comb2(c) for c in table.values())
    pred_pairs = sum(_comb2(c) for c in pred_sizes.values())
    true_pairs = sum(_comb2(c) for c in true_sizes.values())
    if pred_pairs == 0 and true_pairs == 0:
        return 1.0
    if pred_pairs == 0 or true_pairs == 0:
        return 0.0
    precision = tp / pred_pairs
    recall = tp / true_pairs
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def v_measure(pred: Clustering, truth: dict[str, str]) -> float:
    """Harmonic mean of homogeneity and completeness (natural logs)."""
    table, pred_sizes, true_sizes, n = _contingency(pred, truth)
    h_true = -sum((c / n) * math.log(c / n) for c in true_sizes.values())
    h_pred = -sum((c / n) * math.log(c / n) for c in pred_sizes.values())
    h_true_given_pred = -sum(
        (c / n) * math.log(c / pred_sizes[cluster]) for (cluster, _), c in table.items()
    )
    h_pred_given_true = -sum(
        (c / n) * math.log(c / true_sizes[label]) for (_, label), c in table.items()
    )
    homogeneity = 1.0 if h_true == 0.0 else 1.0 - h_true_given_pred / h_true
    completeness = 1.0 if h_pred == 0.0 else 1.0 - h_pred_given_true / h_pred
    if homogeneity + completeness == 0.0:
        return 0.0
    return 2.0 * homogeneity * completeness / (homogeneity + completeness)


def adjusted_rand_index(pred: Clustering, truth: dict[str, str]) -> float:
    """Rand index adjusted for chance under the permutation model."""
    table, pred_sizes, true_sizes, n = _contingency(pred, truth)
    sum_cells = sum(_comb2(c) for c in table.values())
    sum_pred = sum(_comb2(c) for c in pred_sizes.values())
    sum_true = sum(_comb2(c) for c in true_sizes.values())
    total_pairs = _comb2(n)
    if total_pairs == 0:
        return 1.0
    expected = sum_pred * sum_true / total_pairs
    maximum = (sum_pred + sum_true) / 2.0
    if maximum == expected:
        return 1.0
    return (sum_cells - expected) / (maximum - expected)


def cluster_sizes(pred: Clustering) -> list[int]:
    sizes = [0] * pred.k
    for cluster in pred.assignment.values():
        sizes[cluster] += 1
    return sizes


# --- file formats ------------------------------------------------------------


def write_run_file(runs: list[RankedList], path) -> None:
    """`query_id<TAB>doc_id<TAB>rank<TAB>score` rows, queries in given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for run in runs:
            for rank, (doc_id, score) in enumerate(zip(run.doc_ids, run.scores), start=1):
                fh.write(f"{run.query_id}\t{doc_id}\t{rank}\t{score!r}\n")


def read_run_file(path) -> list[RankedList]:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            query_id, doc_id, rank, score = line.rstrip("\n").split("\t")
            if query_id not in rows:
                rows[query_id] = []
                order.append(query_id)
            rows[query_id].append((int(rank), doc_id, float(score)))
    runs = []
    for query_id in order:
        entries = sorted(rows[query_id])
        runs.append(
            RankedList(
                query_id=query_id,
                doc_ids=tuple(d for _, d, _ in entries),
                scores=tuple(s for _, _, s in entries),
            )
        )
    return runs


def write_qrels(qrels: dict[str, set[str]], all_docs: dict[str, set[str]] | None, path) -> None:
    """`query_id<TAB>doc_id<TAB>relevance` rows; only positive rows are required."""
    with open(path, "w", encoding="utf-8") as fh:
        for query_id in sorted(qrels):
            for doc_id in sorted(qrels[query_id]):
                fh.write(f"{query_id}\t{doc_id}\t1\n")
            if all_docs is not None:
                for doc_id in sorted(all_docs.get(query_id, set()) - qrels[query_id]):
                    fh.write(f"{query_id}\t{doc_id}\t0\n")


def read_qrels(path) -> dict[str, set[str]]:
    qrels: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            query_id, doc_id, rel = line.rstrip("\n").split("\t")
            qrels.setdefault(query_id, set())
            if int(rel) > 0:
                qrels[query_id].add(doc_id)
    return qrels


def clustering_report(pred: Clustering, truth: dict[str, str]) -> dict:
    return {
        "k": pred.k,
        "num_docs": len(pred.assignment),
        "f1": pairwise_f1(pred, truth),
        "v_measure": v_measure(pred, truth),
        "ari": adjusted_rand_index(pred, truth),
        "cluster_sizes": cluster_sizes(pred),
    }


def write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
