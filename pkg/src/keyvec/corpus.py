"""Corpus ingestion: tokenization, vocabulary, encoded documents, TF-IDF statistics.

Input corpora are JSON Lines, one document per line:

    {"id": "...", "sentences": ["...", ...],
     "summary": ["...", ...],   # optional
     "label": "..."}            # optional

Sentence segmentation happens upstream; this module only tokenizes within
sentences.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass

from .errors import CorpusFormatError, EmptyDocumentError

PAD_ID = 0
UNK_ID = 1
PAD_WORD = "<pad>"
UNK_WORD = "<unk>"

# Lowercase alphanumeric runs; everything else separates tokens.
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase `text` and split it into maximal alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bidirectional word <-> id mapping with reserved PAD and UNK entries."""

    def __init__(self, words: list[str], freqs: list[int]):
        if words[:2] != [PAD_WORD, UNK_WORD]:
            raise ValueError("vocabulary must start with PAD and UNK")
        if len(words) != len(freqs):
            raise ValueError("words and freqs must align")
        self.word_of = list(words)
        self.freq_of = list(freqs)
        self.id_of = {w: i for i, w in enumerate(words)}
        if len(self.id_of) != len(words):
            raise ValueError("duplicate words in vocabulary")

    @property
    def size(self) -> int:
        return len(self.word_of)

    def encode(self, tokens: list[str]) -> list[int]:
        """Map tokens to ids, sending out-of-vocabulary tokens to UNK."""
        get = self.id_of.get
        return [get(t, UNK_ID) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.word_of[i] for i in ids]

    def __contains__(self, word: str) -> bool:
        return word in self.id_of

    def save(self, path) -> None:
        """Write one `word<TAB>frequency` line per entry, in id order."""
        with open(path, "w", encoding="utf-8") as fh:
            for word, freq in zip(self.word_of, self.freq_of):
                fh.write(f"{word}\t{freq}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words, freqs = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    word, freq = line.split("\t")
                    freqs.append(int(freq))
                except ValueError as exc:
                    raise CorpusFormatError(f"{path}:{lineno}: bad vocabulary line") from exc
                words.append(word)
        return cls(words, freqs)


@dataclass(frozen=True)
class RawDocument:
    """A document as read from the corpus file, before encoding."""

    id: str
    sentences: tuple[str, ...]
    summary: tuple[str, ...] | None = None
    label: str | None = None


@dataclass(frozen=True)
class Document:
    """An encoded document: sentences as token-id tuples.

    Every sentence is non-empty; `summary` is None when the raw document had
    no summary (or its summary tokenized to nothing).
    """

    id: str
    sentences: tuple[tuple[int, ...], ...]
    summary: tuple[tuple[int, ...], ...] | None = None
    label: str | None = None

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)


def build_vocabulary(raw_docs, min_count: int = 1, max_size: int = 100_000) -> Vocabulary:
    """Count tokens over all sentences and summaries, keep words with
    frequency >= min_count ordered by descending frequency then ascending
    word, and cap the total size (PAD/UNK included) at max_size.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if max_size < 2:
        raise ValueError("max_size must leave room for PAD and UNK")
    counts: Counter[str] = Counter()
    for raw in raw_docs:
        for sent in raw.sentences:
            counts.update(tokenize(sent))
        for sent in raw.summary or ():
            counts.update(tokenize(sent))
    kept = [w for w, c in counts.items() if c >= min_count]
    kept.sort(key=lambda w: (-counts[w], w))
    kept = kept[: max_size - 2]
    words = [PAD_WORD, UNK_WORD] + kept
    freqs = [0, 0] + [counts[w] for w in kept]
    return Vocabulary(words, freqs)


def encode_document(vocab: Vocabulary, raw: RawDocument) -> Document:
    """Encode a raw document, dropping sentences that tokenize to nothing.

    Raises EmptyDocumentError when no non-empty sentence remains.
    """
    sentences = []
    for sent in raw.sentences:
        ids = vocab.encode(tokenize(sent))
        if ids:
            sentences.append(tuple(ids))
    if not sentences:
        raise EmptyDocumentError(f"document {raw.id!r} has no non-empty sentence")
    summary = None
    if raw.summary is not None:
        enc = [tuple(vocab.encode(tokenize(s))) for s in raw.summary]
        enc = [s for s in enc if s]
        if enc:
            summary = tuple(enc)
    return Document(id=raw.id, sentences=tuple(sentences), summary=summary, label=raw.label)


class TfIdfModel:
    """Document frequencies over an encoded corpus.

    idf(w) = ln(num_docs / doc_freq(w)), with doc_freq clamped to >= 1 so
    unseen words get the maximum idf of ln(num_docs).
    """

    def __init__(self, doc_freq: dict[int, int], num_docs: int):
        if num_docs < 1:
            raise ValueError("num_docs must be >= 1")
        self.doc_freq = dict(doc_freq)
        self.num_docs = num_docs

    def idf(self, word_id: int) -> float:
        df = max(self.doc_freq.get(word_id, 0), 1)
        return math.log(self.num_docs / df)

    def save(self, path) -> None:
        payload = {
            "num_docs": self.num_docs,
            "doc_freq": {str(w): c for w, c in sorted(self.doc_freq.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TfIdfModel":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        doc_freq = {int(w): int(c) for w, c in payload["doc_freq"].items()}
        return cls(doc_freq, int(payload["num_docs"]))


def compute_tfidf(docs) -> TfIdfModel:
    """Count, per word id, how many documents' body sentences contain it."""
    docs = list(docs)
    if not docs:
        raise ValueError("cannot compute TF-IDF over an empty corpus")
    doc_freq: Counter[int] = Counter()
    for doc in docs:
        seen = {w for sent in doc.sentences for w in sent}
        seen.discard(PAD_ID)
        seen.discard(UNK_ID)
        doc_freq.update(seen)
    return TfIdfModel(dict(doc_freq), len(docs))


def tfidf_vector(model: TfIdfModel, token_ids) -> dict[int, float]:
    """Sparse tf*idf weights for one token sequence; PAD/UNK are excluded.

    Words present in the input but occurring in every document keep an
    explicit zero weight.
    """
    tf = Counter(w for w in token_ids if w not in (PAD_ID, UNK_ID))
    return {w: c * model.idf(w) for w, c in tf.items()}


# --- corpus file I/O -------------------------------------------------------


def read_raw_corpus(path) -> list[RawDocument]:
    """Parse a JSON Lines corpus, reporting offending line numbers.

    Raises CorpusFormatError on malformed lines or duplicate document ids.
    """
    docs: list[RawDocument] = []
    seen: dict[str, int] = {}
    duplicates = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            if "id" not in obj or not isinstance(obj["id"], str):
                raise CorpusFormatError(f"{path}:{lineno}: missing string field 'id'")
            if "sentences" not in obj:
                raise CorpusFormatError(f"{path}:{lineno}: missing field 'sentences'")
            sentences = obj["sentences"]
            if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
                raise CorpusFormatError(f"{path}:{lineno}: 'sentences' must be a list of strings")
            summary = obj.get("summary")
            if summary is not None and (
                not isinstance(summary, list) or not all(isinstance(s, str) for s in summary)
            ):
                raise CorpusFormatError(f"{path}:{lineno}: 'summary' must be a list of strings")
            label = obj.get("label")
            if label is not None and not isinstance(label, str):
                raise CorpusFormatError(f"{path}:{lineno}: 'label' must be a string")
            if obj["id"] in seen:
                duplicates.append((obj["id"], seen[obj["id"]], lineno))
            else:
                seen[obj["id"]] = lineno
            docs.append(
                RawDocument(
                    id=obj["id"],
                    sentences=tuple(sentences),
                    summary=tuple(summary) if summary is not None else None,
                    label=label,
                )
            )
    if duplicates:
        listing = ", ".join(f"{d!r} (lines {a} and {b})" for d, a, b in duplicates)
        raise CorpusFormatError(f"{path}: duplicate document ids: {listing}")
    return docs


def write_raw_corpus(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            obj = {"id": doc.id, "sentences": list(doc.sentences)}
            if doc.summary is not None:
                obj["summary"] = list(doc.summary)
            if doc.label is not None:
                obj["label"] = doc.label
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_encoded_corpus(docs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            obj = {"id": doc.id, "sentences": [list(s) for s in doc.sentences]}
            if doc.summary is not None:
                obj["summary"] = [list(s) for s in doc.summary]
            if doc.label is not None:
                obj["label"] = doc.label
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_encoded_corpus(path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                summary = obj.get("summary")
                docs.append(
                    Document(
                        id=obj["id"],
                        sentences=tuple(tuple(int(w) for w in s) for s in obj["sentences"]),
                        summary=tuple(tuple(int(w) for w in s) for s in summary)
                        if summary is not None
                        else None,
                        label=obj.get("label"),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad encoded document") from exc
    return docs
