"""Command-line pipelines: synth, ingest, label, train, embed, retrieve,
cluster, eval, gradcheck.

Every command is a pure function of its inputs, flags and seed; a manifest
recording the command, resolved options, input digests and seed is written
next to each command's primary output. Exit codes: 0 ok, 1 internal error,
2 bad input, 3 empty/degenerate data, 4 gradient check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, corpus, errors, evaluation, gradcheck, supervision, synth
from .encoder import embed_document, read_embeddings, write_embeddings
from .reader import ModelConfig
from .train import (
    TrainConfig,
    build_model,
    load_checkpoint,
    save_checkpoint,
    train,
    write_training_log,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_GRADCHECK = 4

_DEGENERATE = (
    errors.EmptyDocumentError,
    errors.MissingSummaryError,
    errors.EmptyTrainingSetError,
    errors.EmptyKeywordSetError,
    errors.EmptyIndexError,
    errors.QueryWithoutRelevantsError,
    errors.TooFewPointsError,
    errors.LabelMismatchError,
)


# --- option plumbing ---------------------------------------------------------


class Options:
    """Declares options so that config-file values sit between CLI flags and
    defaults: flag beats config key beats default. Config keys are the long
    flag names without the leading dashes.
    """

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.specs: dict[str, tuple] = {}

    def add(self, flag: str, *, type=str, default=None, help: str = "", action=None):
        key = flag.lstrip("-")
        dest = key.replace("-", "_")
        if action == "store_true":
            self.parser.add_argument(flag, dest=dest, action="store_const", const=True,
                                     default=None, help=help)
            self.specs[key] = (dest, _parse_bool, False)
        else:
            self.parser.add_argument(flag, dest=dest, type=type, default=None, help=help)
            self.specs[key] = (dest, type, default)
        return self

    def resolve(self, args, config: dict[str, str]) -> dict:
        resolved = {}
        for key, (dest, cast, default) in self.specs.items():
            value = getattr(args, dest)
            if value is None and key in config:
                value = cast(config[key])
            if value is None:
                value = default
            resolved[key] = value
        return resolved


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _parse_widths(text) -> tuple[int, ...]:
    if isinstance(text, tuple):
        return text
    return tuple(int(w) for w in str(text).split(","))


def read_config_file(path) -> dict[str, str]:
    """Flat `key=value` lines; blank lines and #-comments ignored."""
    config: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise errors.CorpusFormatError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            config[key.strip()] = value.strip()
    return config


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(primary_output: Path, command: str, resolved: dict,
                   inputs: list[Path], seed: int) -> None:
    """`<output>.manifest.json` beside file outputs, `manifest.json` inside
    directory outputs.
    """
    payload = {
        "command": command,
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(resolved.items())},
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "seed": seed,
        "version": __version__,
    }
    primary_output = Path(primary_output)
    if primary_output.is_dir():
        target = primary_output / "manifest.json"
    else:
        target = primary_output.with_name(primary_output.name + ".manifest.json")
    evaluation.write_json(payload, target)


# --- subcommands -------------------------------------------------------------


def cmd_synth(args, config) -> int:
    o = args._options.resolve(args, config)
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    docs, queries = synth.make_planted_corpus(
        seed=o["seed"],
        num_topics=o["topics"],
        docs_per_topic=o["docs-per-topic"],
        noise_sentences=o["noise-sentences"],
        topic_sentences=o["topic-sentences"],
        sentence_len=o["sentence-len"],
        topic_vocab=o["topic-vocab"],
        noise_vocab=o["noise-vocab"],
        queries_per_topic=o["queries-per-topic"],
    )
    corpus.write_raw_corpus(docs, out / "corpus.jsonl")
    corpus.write_raw_corpus(queries, out / "queries.jsonl")
    evaluation.write_qrels(synth.planted_qrels(queries, docs), None, out / "qrels.tsv")
    write_manifest(out, "synth", o, [], o["seed"])
    print(f"wrote {len(docs)} documents, {len(queries)} queries to {out}")
    return EXIT_OK


def cmd_ingest(args, config) -> int:
    o = args._options.resolve(args, config)
    raw_docs = corpus.read_raw_corpus(o["input"])
    if not raw_docs:
        raise errors.EmptyTrainingSetError(f"{o['input']}: no documents")
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    vocab = corpus.build_vocabulary(raw_docs, min_count=o["min-count"], max_size=o["max-vocab"])
    docs = [corpus.encode_document(vocab, raw) for raw in raw_docs]
    tfidf = corpus.compute_tfidf(docs)
    vocab.save(out / "vocab.txt")
    corpus.write_encoded_corpus(docs, out / "corpus.enc.jsonl")
    tfidf.save(out / "tfidf.json")
    write_manifest(out, "ingest", o, [Path(o["input"])], o["seed"])
    print(f"ingested {len(docs)} documents, vocabulary size {vocab.size}")
    return EXIT_OK


def _load_corpus_dir(path) -> tuple[corpus.Vocabulary, list[corpus.Document], corpus.TfIdfModel]:
    path = Path(path)
    vocab = corpus.Vocabulary.load(path / "vocab.txt")
    docs = corpus.read_encoded_corpus(path / "corpus.enc.jsonl")
    tfidf = corpus.TfIdfModel.load(path / "tfidf.json")
    return vocab, docs, tfidf


def cmd_label(args, config) -> int:
    o = args._options.resolve(args, config)
    vocab, docs, tfidf = _load_corpus_dir(o["corpus"])
    with_summaries = [d for d in docs if d.summary]
    if not with_summaries:
        raise errors.EmptyTrainingSetError("no document has a summary; cannot generate labels")
    cfg = supervision.SupervisionConfig(
        top_k=o["top-k"], sim_threshold=o["threshold"], num_keywords=o["keywords"]
    )
    examples, dropped = supervision.build_training_set(docs, cfg, tfidf)
    out = Path(o["out"])
    supervision.write_labels(examples, vocab, out)
    corpus_dir = Path(o["corpus"])
    write_manifest(
        out, "label", o,
        [corpus_dir / "vocab.txt", corpus_dir / "corpus.enc.jsonl", corpus_dir / "tfidf.json"],
        o["seed"],
    )
    if examples:
        mean_salient = sum(len(e.salient) for e in examples) / len(examples)
        mean_keywords = sum(len(e.keywords) for e in examples) / len(examples)
    else:
        mean_salient = mean_keywords = 0.0
    print(
        f"labeled {len(examples)} documents (dropped {dropped}); "
        f"mean salient {mean_salient:.2f}, mean keywords {mean_keywords:.2f}"
    )
    if examples and all(not e.salient for e in examples):
        print("warning: every salient set is empty (threshold too high?)", file=sys.stderr)
    return EXIT_OK


def cmd_train(args, config) -> int:
    o = args._options.resolve(args, config)
    vocab, docs, _ = _load_corpus_dir(o["corpus"])
    examples = supervision.read_labels(o["labels"], vocab)
    model_cfg = ModelConfig(
        vocab_size=vocab.size,
        word_dim=o["word-dim"],
        filter_widths=_parse_widths(o["filter-widths"]),
        filters_per_width=o["filters-per-width"],
        lstm_hidden=o["lstm-hidden"],
        doc_dim=o["doc-dim"],
        conv_activation=o["conv-activation"],
    )
    train_cfg = TrainConfig(
        epochs=o["epochs"],
        learning_rate=o["learning-rate"],
        lr_decay=o["lr-decay"],
        clip_norm=o["clip-norm"],
        seed=o["seed"],
        lambda_read=o["lambda-read"],
        lambda_enc=o["lambda-enc"],
        shuffle=not o["no-shuffle"],
        freeze_embeddings=o["freeze-embeddings"],
    )
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    log_every = o["log-every"]

    def report(s):
        if log_every and (s.epoch % log_every == 0 or s.epoch == 1):
            print(
                f"epoch {s.epoch}: reader={s.reader_loss:.4f} enc={s.enc_loss:.4f} "
                f"acc={s.salience_acc:.3f} recall={s.keyword_recall:.3f}",
                flush=True,
            )

    ckpt, stats = train(docs, examples, vocab, model_cfg, train_cfg, on_epoch=report)
    save_checkpoint(ckpt, out / "model.kvec")
    write_training_log(stats, out / "train_log.csv")
    corpus_dir = Path(o["corpus"])
    write_manifest(
        out, "train", o,
        [corpus_dir / "vocab.txt", corpus_dir / "corpus.enc.jsonl", Path(o["labels"])],
        o["seed"],
    )
    final = stats[-1]
    print(
        f"trained {train_cfg.epochs} epochs: reader_loss={final.reader_loss:.4f} "
        f"enc_loss={final.enc_loss:.4f} salience_acc={final.salience_acc:.3f} "
        f"keyword_recall={final.keyword_recall:.3f}"
    )
    return EXIT_OK


def cmd_embed(args, config) -> int:
    o = args._options.resolve(args, config)
    ckpt = load_checkpoint(o["ckpt"])
    reader, encoder = build_model(ckpt)
    raw_docs = corpus.read_raw_corpus(o["input"])
    if not raw_docs:
        raise errors.EmptyTrainingSetError(f"{o['input']}: no documents")
    docs = [corpus.encode_document(ckpt.vocab, raw) for raw in raw_docs]

    def one(doc):
        emb, salience = embed_document(reader, encoder, doc)
        return doc.id, emb, salience

    threads = o["threads"]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, docs))
    else:
        rows = [one(doc) for doc in docs]
    out = Path(o["out"])
    write_embeddings(rows, out)
    write_manifest(out, "embed", o, [Path(o["ckpt"]), Path(o["input"])], o["seed"])
    print(f"embedded {len(rows)} documents -> {out}")
    return EXIT_OK


def cmd_retrieve(args, config) -> int:
    o = args._options.resolve(args, config)
    index = read_embeddings(o["index"])
    queries = read_embeddings(o["queries"])
    if not queries:
        raise errors.EmptyTrainingSetError(f"{o['queries']}: no query embeddings")
    items = sorted(queries.items())

    def one(item):
        qid, emb = item
        return evaluation.retrieve(qid, emb, index, o["k"])

    threads = o["threads"]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(one, items))
    else:
        runs = [one(item) for item in items]
    out = Path(o["out"])
    evaluation.write_run_file(runs, out)
    write_manifest(out, "retrieve", o, [Path(o["index"]), Path(o["queries"])], o["seed"])
    print(f"retrieved top-{o['k']} for {len(runs)} queries -> {out}")
    return EXIT_OK


def cmd_eval(args, config) -> int:
    o = args._options.resolve(args, config)
    runs = evaluation.read_run_file(o["run"])
    qrels = evaluation.read_qrels(o["qrels"])
    if not runs:
        raise errors.EmptyTrainingSetError(f"{o['run']}: empty run file")
    metrics = {
        "k": o["k"],
        "num_queries": len(runs),
        "p_at_k": evaluation.mean_precision_at_k(runs, qrels, o["k"]),
        "map": evaluation.mean_average_precision(runs, qrels),
        "mrr": evaluation.mean_reciprocal_rank(runs, qrels),
    }
    out = Path(o["out"])
    evaluation.write_json(metrics, out)
    write_manifest(out, "eval", o, [Path(o["run"]), Path(o["qrels"])], o["seed"])
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_cluster(args, config) -> int:
    o = args._options.resolve(args, config)
    embeddings = read_embeddings(o["embeddings"])
    raw_docs = corpus.read_raw_corpus(o["corpus"])
    truth = {d.id: d.label for d in raw_docs if d.label is not None and d.id in embeddings}
    if not truth:
        raise errors.EmptyTrainingSetError("no labeled documents among the embeddings")
    covered = {i: embeddings[i] for i in truth}
    k = o["k"] if o["k"] else len(set(truth.values()))
    pred = evaluation.kmeans(
        covered, k=k, seed=o["seed"], restarts=o["restarts"], normalize=o["normalize"]
    )
    report = evaluation.clustering_report(pred, truth)
    out = Path(o["out"])
    evaluation.write_json(report, out)
    write_manifest(out, "cluster", o, [Path(o["embeddings"]), Path(o["corpus"])], o["seed"])
    print(json.dumps({m: report[m] for m in ("k", "f1", "v_measure", "ari")}, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args, config) -> int:
    o = args._options.resolve(args, config)
    results = gradcheck.run_all(cases=o["cases"], base_seed=o["seed"])
    failed = False
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        failed = failed or not r.ok
        print(f"{r.name:20s} max_rel_err={r.max_err:.3e} tol={r.tol:g} {status}")
    if o["out"]:
        payload = {
            r.name: {"max_rel_err": r.max_err, "tol": r.tol, "cases": r.cases, "ok": r.ok}
            for r in results
        }
        evaluation.write_json(payload, Path(o["out"]))
    return EXIT_GRADCHECK if failed else EXIT_OK


# --- parser ------------------------------------------------------------------


def _common(options: Options):
    options.add("--seed", type=int, default=0, help="RNG seed")
    options.add("--threads", type=int, default=1, help="worker threads where supported")
    options.add("--config", type=str, default=None, help="flat key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="keyvec", description=__doc__)
    parser.add_argument("--version", action="version", version=f"keyvec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        o = Options(p)
        p.set_defaults(func=fn, _options=o)
        _common(o)
        return o

    o = command("synth", cmd_synth, "generate a planted-topic corpus")
    o.add("--out", default="synth", help="output directory")
    o.add("--topics", type=int, default=8)
    o.add("--docs-per-topic", type=int, default=10)
    o.add("--noise-sentences", type=int, default=6)
    o.add("--topic-sentences", type=int, default=2)
    o.add("--sentence-len", type=int, default=8)
    o.add("--topic-vocab", type=int, default=1)
    o.add("--noise-vocab", type=int, default=490)
    o.add("--queries-per-topic", type=int, default=1)

    o = command("ingest", cmd_ingest, "tokenize, build vocabulary and TF-IDF stats")
    o.add("--input", help="raw corpus JSONL")
    o.add("--out", default="corpus", help="output directory")
    o.add("--min-count", type=int, default=1)
    o.add("--max-vocab", type=int, default=100_000)

    o = command("label", cmd_label, "generate salient-sentence and keyword labels")
    o.add("--corpus", help="ingested corpus directory")
    o.add("--out", default="labels.jsonl")
    o.add("--top-k", type=int, default=10)
    o.add("--threshold", type=float, default=0.3)
    o.add("--keywords", type=int, default=30)

    o = command("train", cmd_train, "train the model on generated labels")
    o.add("--corpus", help="ingested corpus directory")
    o.add("--labels", help="labels JSONL from `label`")
    o.add("--out", default="run", help="output directory")
    o.add("--epochs", type=int, default=200)
    o.add("--learning-rate", type=float, default=0.1)
    o.add("--lr-decay", type=float, default=0.95)
    o.add("--clip-norm", type=float, default=5.0)
    o.add("--lambda-read", type=float, default=1.0)
    o.add("--lambda-enc", type=float, default=1.0)
    o.add("--no-shuffle", action="store_true")
    o.add("--freeze-embeddings", action="store_true")
    o.add("--word-dim", type=int, default=100)
    o.add("--filter-widths", type=_parse_widths, default=(1, 2, 3))
    o.add("--filters-per-width", type=int, default=50)
    o.add("--lstm-hidden", type=int, default=100)
    o.add("--doc-dim", type=int, default=100)
    o.add("--conv-activation", default="relu")
    o.add("--log-every", type=int, default=0, help="print stats every N epochs")

    o = command("embed", cmd_embed, "embed raw documents with a trained model")
    o.add("--ckpt", help="checkpoint path")
    o.add("--input", help="raw documents JSONL")
    o.add("--out", default="embeddings.jsonl")

    o = command("retrieve", cmd_retrieve, "rank index documents for each query")
    o.add("--index", help="index embeddings JSONL")
    o.add("--queries", help="query embeddings JSONL")
    o.add("--k", type=int, default=10)
    o.add("--out", default="run.tsv")

    o = command("eval", cmd_eval, "score a run file against qrels")
    o.add("--run", help="run file from `retrieve`")
    o.add("--qrels", help="qrels TSV")
    o.add("--k", type=int, default=10)
    o.add("--out", default="metrics.json")

    o = command("cluster", cmd_cluster, "k-means + clustering metrics")
    o.add("--embeddings", help="embeddings JSONL")
    o.add("--corpus", help="raw corpus JSONL carrying labels")
    o.add("--k", type=int, default=0, help="clusters; 0 = number of distinct labels")
    o.add("--restarts", type=int, default=10)
    o.add("--normalize", action="store_true", help="L2-normalize before clustering")
    o.add("--out", default="clustering.json")

    o = command("gradcheck", cmd_gradcheck, "finite-difference gradient verification")
    o.add("--cases", type=int, default=5)
    o.add("--out", default=None, help="optional JSON report path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = read_config_file(args.config) if args.config else {}
        missing = [
            name for name in ("input", "corpus", "labels", "ckpt", "index",
                              "queries", "run", "qrels", "embeddings")
            if hasattr(args, name) and getattr(args, name) is None and name not in config
        ]
        if missing:
            print(f"error: missing required --{missing[0]}", file=sys.stderr)
            return EXIT_BAD_INPUT
        return args.func(args, config)
    except _DEGENERATE as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (errors.KeyVecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
