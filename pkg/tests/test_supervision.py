import pytest

from keyvec.corpus import (
    RawDocument,
    build_vocabulary,
    compute_tfidf,
    encode_document,
)
from keyvec.errors import MissingSummaryError
from keyvec.supervision import (
    SupervisionConfig,
    build_training_set,
    read_labels,
    select_keywords,
    select_salient_sentences,
    sentence_similarity,
    write_labels,
)


def corpus_from(texts_per_doc):
    raws = [
        RawDocument(id=str(i), sentences=tuple(sents))
        for i, sents in enumerate(texts_per_doc)
    ]
    vocab = build_vocabulary(raws)
    docs = [encode_document(vocab, r) for r in raws]
    return vocab, docs, compute_tfidf(docs)


class TestSentenceSimilarity:
    def setup_method(self):
        # a, b in doc 0; c, d in doc 1 -> every word has idf ln(2)
        self.vocab, self.docs, self.tfidf = corpus_from([["a b"], ["c d"]])

    def enc(self, text):
        return self.vocab.encode(text.split())

    def test_identical_sentences(self):
        assert sentence_similarity(self.enc("a b"), self.enc("a b"), self.tfidf) == pytest.approx(1.0)

    def test_disjoint_vocabulary(self):
        assert sentence_similarity(self.enc("a b"), self.enc("c d"), self.tfidf) == 0.0

    def test_hand_computed_half(self):
        # idf(a)=idf(b)=idf(c)=ln 2: cos = ln2^2 / (ln2*sqrt2)^2 = 0.5
        assert sentence_similarity(self.enc("a b"), self.enc("b c"), self.tfidf) == pytest.approx(0.5)

    def test_zero_vector_similarity_is_zero(self):
        vocab, docs, tfidf = corpus_from([["common x"], ["common y"]])
        common = vocab.encode(["common"])
        assert sentence_similarity(common, common, tfidf) == 0.0

    def test_symmetric_and_bounded(self):
        pairs = [("a b", "b c"), ("a", "a b"), ("c d", "d"), ("a b", "c")]
        for s1, s2 in pairs:
            left = sentence_similarity(self.enc(s1), self.enc(s2), self.tfidf)
            right = sentence_similarity(self.enc(s2), self.enc(s1), self.tfidf)
            assert left == pytest.approx(right)
            assert 0.0 <= left <= 1.0 + 1e-12


class TestSelectSalient:
    def test_verbatim_summary_sentence_selected(self):
        raws = [
            RawDocument(id="0", sentences=("alpha beta", "noise words"),
                        summary=("alpha beta",)),
            RawDocument(id="1", sentences=("other stuff",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        selected = select_salient_sentences(docs[0], SupervisionConfig(), tfidf)
        assert 0 in selected and 1 not in selected

    def test_no_overlap_gives_empty_set(self):
        raws = [
            RawDocument(id="0", sentences=("aa bb",), summary=("cc dd",)),
            RawDocument(id="1", sentences=("ee ff",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        assert select_salient_sentences(docs[0], SupervisionConfig(), tfidf) == set()

    def test_ties_truncate_to_earliest_indices(self):
        sentences = tuple(["alpha beta"] * 12)
        raws = [
            RawDocument(id="0", sentences=sentences, summary=("alpha beta",)),
            RawDocument(id="1", sentences=("gamma delta",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        selected = select_salient_sentences(docs[0], SupervisionConfig(top_k=10), tfidf)
        assert selected == set(range(10))

    def test_missing_summary_raises(self):
        vocab, docs, tfidf = corpus_from([["a b"], ["c d"]])
        with pytest.raises(MissingSummaryError):
            select_salient_sentences(docs[0], SupervisionConfig(), tfidf)

    def test_threshold_monotonicity(self):
        raws = [
            RawDocument(id="0", sentences=("alpha beta", "alpha other", "unrelated xx"),
                        summary=("alpha beta",)),
            RawDocument(id="1", sentences=("other unrelated",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        previous = None
        for threshold in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
            current = select_salient_sentences(
                docs[0], SupervisionConfig(sim_threshold=threshold), tfidf
            )
            assert len(current) <= 10
            if previous is not None:
                assert current <= previous
            previous = current


class TestSelectKeywords:
    def test_fewer_candidates_than_budget(self):
        raws = [
            RawDocument(id="0", sentences=("v w x y z",), summary=("v w x y z",)),
            RawDocument(id="1", sentences=("aa bb",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        keywords = select_keywords(docs[0], SupervisionConfig(num_keywords=30), tfidf)
        assert keywords == {vocab.id_of[w] for w in "v w x y z".split()}

    def test_zero_weight_words_excluded(self):
        # summary words occur in every document -> idf 0 -> empty set
        raws = [
            RawDocument(id="0", sentences=("common words",), summary=("common words",)),
            RawDocument(id="1", sentences=("common words",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        assert select_keywords(docs[0], SupervisionConfig(), tfidf) == set()

    def test_tie_for_last_slot_goes_to_smaller_id(self):
        # p and q have identical tf and idf; only one slot
        raws = [
            RawDocument(id="0", sentences=("p q",), summary=("p q",)),
            RawDocument(id="1", sentences=("zz yy",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        keywords = select_keywords(docs[0], SupervisionConfig(num_keywords=1), tfidf)
        assert keywords == {min(vocab.id_of["p"], vocab.id_of["q"])}

    def test_invariant_under_summary_sentence_permutation(self):
        raws = [
            RawDocument(id="0", sentences=("s1 s2", "s3"), summary=("s1 s2", "s3 s4")),
            RawDocument(id="1", sentences=("other thing",)),
        ]
        vocab = build_vocabulary(raws)
        doc = encode_document(vocab, raws[0])
        flipped = encode_document(
            vocab, RawDocument(id="0", sentences=raws[0].sentences,
                               summary=tuple(reversed(raws[0].summary)))
        )
        tfidf = compute_tfidf([doc, encode_document(vocab, raws[1])])
        cfg = SupervisionConfig()
        assert select_keywords(doc, cfg, tfidf) == select_keywords(flipped, cfg, tfidf)


class TestBuildTrainingSet:
    def test_no_summaries_gives_empty_set(self):
        vocab, docs, tfidf = corpus_from([["a b"], ["c d"]])
        examples, dropped = build_training_set(docs, SupervisionConfig(), tfidf)
        assert examples == [] and dropped == 0

    def test_passthrough_fields(self):
        raws = [
            RawDocument(id="keep", sentences=("noise one", "alpha beta"),
                        summary=("alpha beta",)),
            RawDocument(id="other", sentences=("filler text",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        examples, dropped = build_training_set(docs, SupervisionConfig(), tfidf)
        assert dropped == 0
        assert len(examples) == 1
        ex = examples[0]
        assert ex.doc_id == "keep"
        assert ex.salient == {1}
        assert ex.keywords == {vocab.id_of["alpha"], vocab.id_of["beta"]}

    def test_mixed_corpus_filtered(self):
        raws = [
            RawDocument(id="0", sentences=("alpha beta",), summary=("alpha beta",)),
            RawDocument(id="1", sentences=("gamma delta",), summary=("gamma delta",)),
            RawDocument(id="2", sentences=("no summary here",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        examples, _ = build_training_set(docs, SupervisionConfig(), tfidf)
        assert [e.doc_id for e in examples] == ["0", "1"]

    def test_degenerate_documents_dropped_and_counted(self):
        # summary words occur everywhere: zero idf -> no keywords, no salient
        raws = [
            RawDocument(id="0", sentences=("xx common",), summary=("common",)),
            RawDocument(id="1", sentences=("common zz",)),
            RawDocument(id="2", sentences=("common ww",)),
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        tfidf = compute_tfidf(docs)
        examples, dropped = build_training_set(docs, SupervisionConfig(), tfidf)
        assert examples == [] and dropped == 1

    def test_labels_file_roundtrip(self, tmp_path, planted):
        path = tmp_path / "labels.jsonl"
        write_labels(planted.examples, planted.vocab, path)
        loaded = read_labels(path, planted.vocab)
        assert loaded == planted.examples


class TestPlantedCorpusLabels:
    def test_every_planted_doc_gets_nonempty_salient_set(self, planted):
        assert planted.dropped == 0
        assert len(planted.examples) == len(planted.docs)
        assert all(ex.salient for ex in planted.examples)

    def test_salient_sets_match_planted_positions(self, planted):
        from keyvec.synth import planted_salient_indices

        by_id = {ex.doc_id: ex for ex in planted.examples}
        for raw in planted.raw_docs:
            assert set(by_id[raw.id].salient) == planted_salient_indices(raw)

    def test_top_k_one_caps_sets(self, planted):
        cfg = SupervisionConfig(top_k=1)
        for doc in planted.docs[:10]:
            assert len(select_salient_sentences(doc, cfg, planted.tfidf)) <= 1

    def test_threshold_above_max_cosine_empties_sets(self, planted):
        cfg = SupervisionConfig(sim_threshold=1.01)
        for doc in planted.docs[:10]:
            assert select_salient_sentences(doc, cfg, planted.tfidf) == set()
