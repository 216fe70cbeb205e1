"""Joint training of Reader and Encoder, plus checkpoint serialization.

One document is one SGD update: forward, joint loss (weighted sum of the
salience likelihood and the keyword likelihood), backward, clipped step.
Fixed seed + single thread gives bitwise-reproducible checkpoints.

Checkpoint container format: magic "KVEC", u32 version, u32 tensor count,
then per tensor a u16-length UTF-8 name, u8 rank, u32 dims and the row-major
float32 payload, all little-endian, closed by a CRC32 of everything before
it. The model config and vocabulary travel in sidecar files.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Document, Vocabulary
from .encoder import Encoder
from .errors import CorruptFileError, EmptyTrainingSetError, FormatVersionMismatchError
from .nn import ParamStore, Tape, Var, sgd_step
from .reader import ModelConfig, Reader, reader_loss
from .supervision import TrainingExample

CHECKPOINT_MAGIC = b"KVEC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float = 0.1
    lr_decay: float = 0.95
    clip_norm: float = 5.0
    seed: int = 0
    lambda_read: float = 1.0
    lambda_enc: float = 1.0
    shuffle: bool = True
    freeze_embeddings: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.lambda_read < 0 or self.lambda_enc < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    reader_loss: float
    enc_loss: float
    salience_acc: float
    keyword_recall: float


@dataclass
class Checkpoint:
    config: ModelConfig
    store: ParamStore
    vocab: Vocabulary
    version: int = CHECKPOINT_VERSION


def build_model(ckpt: Checkpoint) -> tuple[Reader, Encoder]:
    """Bind Reader/Encoder to the checkpoint's parameter store."""
    return Reader(ckpt.config, ckpt.store), Encoder(ckpt.config, ckpt.store)


def document_forward(tape: Tape, reader: Reader, encoder: Encoder, doc: Document):
    """Full forward pass; returns (salience probs, document embedding, keyword logits)."""
    sents = [reader.encode_sentence(tape, s) for s in doc.sentences]
    states = reader.contextualize(tape, sents)
    probs = reader.salience(tape, states)
    emb = encoder.pool_document(tape, states, probs)
    logits = encoder.keyword_logits(tape, emb)
    return probs, emb, logits


def joint_loss(tape: Tape, reader: Reader, encoder: Encoder, doc: Document,
               example: TrainingExample, lambda_read: float = 1.0,
               lambda_enc: float = 1.0) -> Var:
    """lambda_read * salience NLL + lambda_enc * keyword NLL for one document.

    The keyword term is omitted when the example has no keywords.
    """
    probs, _, logits = document_forward(tape, reader, encoder, doc)
    loss = tape.scale(reader_loss(tape, probs, example.salient, doc.num_sentences), lambda_read)
    if example.keywords:
        loss = tape.add(loss, tape.scale(tape.softmax_nll(logits, example.keywords), lambda_enc))
    return loss


def recall_at_k(logits: np.ndarray, keywords, k: int) -> float:
    """Fraction of true keywords ranked in the top-k logits."""
    if not keywords:
        return 0.0
    top = np.argsort(-logits, kind="stable")[:k]
    return len(set(top.tolist()) & set(keywords)) / len(keywords)


def train(docs, examples: list[TrainingExample], vocab: Vocabulary,
          model_cfg: ModelConfig, train_cfg: TrainConfig,
          on_epoch=None) -> tuple[Checkpoint, list[EpochStats]]:
    """Run SGD over the training set; returns the checkpoint and per-epoch stats.

    `docs` is any iterable of Documents (or a mapping id -> Document). Epoch
    stats aggregate the forward passes as made during the epoch: mean per-doc
    losses, sentence-level salience accuracy at threshold 0.5, and mean
    keyword recall at |keywords| per document.
    """
    doc_map = docs if isinstance(docs, dict) else {d.id: d for d in docs}
    if not examples:
        raise EmptyTrainingSetError("no training examples")
    missing = [ex.doc_id for ex in examples if ex.doc_id not in doc_map]
    if missing:
        raise ValueError(f"examples reference unknown documents: {missing[:5]}")
    if model_cfg.vocab_size != vocab.size:
        raise ValueError(
            f"model vocab_size {model_cfg.vocab_size} != vocabulary size {vocab.size}"
        )

    store = ParamStore(seed=train_cfg.seed, dtype=np.float32)
    reader = Reader(model_cfg, store)
    encoder = Encoder(model_cfg, store)
    if train_cfg.freeze_embeddings:
        store.freeze("reader.embed")
    order_rng = np.random.default_rng(train_cfg.seed)

    stats: list[EpochStats] = []
    n = len(examples)
    for epoch in range(train_cfg.epochs):
        lr = train_cfg.learning_rate * train_cfg.lr_decay**epoch
        order = order_rng.permutation(n) if train_cfg.shuffle else np.arange(n)
        read_total = 0.0
        enc_total = 0.0
        enc_count = 0
        sent_correct = 0
        sent_total = 0
        recall_total = 0.0
        for idx in order:
            ex = examples[int(idx)]
            doc = doc_map[ex.doc_id]
            tape = Tape()
            probs, _, logits = document_forward(tape, reader, encoder, doc)
            rloss = reader_loss(tape, probs, ex.salient, doc.num_sentences)
            loss = tape.scale(rloss, train_cfg.lambda_read)
            if ex.keywords:
                kloss = tape.softmax_nll(logits, ex.keywords)
                loss = tape.add(loss, tape.scale(kloss, train_cfg.lambda_enc))
                enc_total += float(kloss.data)
                enc_count += 1
                recall_total += recall_at_k(logits.data, ex.keywords, len(ex.keywords))
            read_total += float(rloss.data)
            predicted = probs.data > 0.5
            targets = np.zeros(doc.num_sentences, dtype=bool)
            targets[list(ex.salient)] = True
            sent_correct += int((predicted == targets).sum())
            sent_total += doc.num_sentences
            tape.backward(loss)
            sgd_step(store, lr, train_cfg.clip_norm)
        epoch_stats = EpochStats(
            epoch=epoch + 1,
            reader_loss=read_total / n,
            enc_loss=enc_total / enc_count if enc_count else 0.0,
            salience_acc=sent_correct / sent_total,
            keyword_recall=recall_total / enc_count if enc_count else 0.0,
        )
        stats.append(epoch_stats)
        if on_epoch is not None:
            on_epoch(epoch_stats)

    return Checkpoint(config=model_cfg, store=store, vocab=vocab), stats


def write_training_log(stats: list[EpochStats], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,reader_loss,enc_loss,salience_acc,keyword_recall\n")
        for s in stats:
            fh.write(
                f"{s.epoch},{s.reader_loss:.6f},{s.enc_loss:.6f},"
                f"{s.salience_acc:.6f},{s.keyword_recall:.6f}\n"
            )


# --- checkpoint serialization ----------------------------------------------


def _config_path(path: Path) -> Path:
    return path.with_name(path.name + ".config.json")


def _vocab_path(path: Path) -> Path:
    return path.with_name(path.name + ".vocab.txt")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Write the tensor container plus config/vocabulary sidecars.

    Round-trips float32 stores bitwise; float64 stores are cast to float32
    on write (the container payload is always 4-byte floats).
    """
    path = Path(path)
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", ckpt.version)
    names = ckpt.store.names()
    buf += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(ckpt.store.value(name), dtype="<f4")
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            buf += struct.pack("<I", dim)
        buf += arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    path.write_bytes(bytes(buf))

    import json

    with open(_config_path(path), "w", encoding="utf-8") as fh:
        json.dump({"model": ckpt.config.to_dict(), "version": ckpt.version}, fh, sort_keys=True)
        fh.write("\n")
    ckpt.vocab.save(_vocab_path(path))


class _Cursor:
    def __init__(self, data: bytes, label: str):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFileError(f"{self.label}: truncated checkpoint")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint written by save_checkpoint.

    Raises CorruptFileError on truncation/bad magic/bad CRC and
    FormatVersionMismatchError on an unsupported version.
    """
    import json

    path = Path(path)
    data = path.read_bytes()
    cur = _Cursor(data, str(path))
    if cur.take(4) != CHECKPOINT_MAGIC:
        raise CorruptFileError(f"{path}: not a checkpoint file")
    version = cur.u32()
    if version != CHECKPOINT_VERSION:
        raise FormatVersionMismatchError(f"{path}: format version {version} unsupported")
    count = cur.u32()
    store = ParamStore(seed=0, dtype=np.float32)
    for _ in range(count):
        name = cur.take(cur.u16()).decode("utf-8")
        rank = cur.u8()
        shape = tuple(cur.u32() for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        payload = cur.take(4 * size)
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
        store.add(name, arr)
    crc_stored = cur.u32()
    if cur.pos != len(data):
        raise CorruptFileError(f"{path}: trailing bytes after checksum")
    if crc_stored != (zlib.crc32(data[:-4]) & 0xFFFFFFFF):
        raise CorruptFileError(f"{path}: checksum mismatch")

    with open(_config_path(path), encoding="utf-8") as fh:
        meta = json.load(fh)
    config = ModelConfig.from_dict(meta["model"])
    vocab = Vocabulary.load(_vocab_path(path))
    return Checkpoint(config=config, store=store, vocab=vocab, version=version)
