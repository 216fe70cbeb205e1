import math

import numpy as np
import pytest

from keyvec.corpus import (
    PAD_ID,
    PAD_WORD,
    UNK_ID,
    UNK_WORD,
    RawDocument,
    TfIdfModel,
    Vocabulary,
    build_vocabulary,
    compute_tfidf,
    encode_document,
    read_raw_corpus,
    tfidf_vector,
    tokenize,
)
from keyvec.errors import CorpusFormatError, EmptyDocumentError


def raw(doc_id, sentences, summary=None, label=None):
    return RawDocument(id=doc_id, sentences=tuple(sentences),
                       summary=tuple(summary) if summary else None, label=label)


class TestTokenize:
    def test_basic(self):
        assert tokenize("Deep Learning!") == ["deep", "learning"]

    def test_empty(self):
        assert tokenize("") == []

    def test_alnum_runs(self):
        assert tokenize("word2vec, 2013") == ["word2vec", "2013"]

    def test_idempotent_on_own_output(self):
        for text in ("Hello, World!", "a-b_c d", "x  y\tz", "3.14 isn't 42"):
            once = tokenize(text)
            assert tokenize(" ".join(once)) == once


class TestVocabulary:
    def test_ordering_frequency_then_lexicographic(self):
        vocab = build_vocabulary([raw("1", ["a a b"]), raw("2", ["a c"])])
        assert vocab.word_of == [PAD_WORD, UNK_WORD, "a", "b", "c"]

    def test_min_count(self):
        vocab = build_vocabulary([raw("1", ["a a b"]), raw("2", ["a c"])], min_count=2)
        assert vocab.word_of == [PAD_WORD, UNK_WORD, "a"]

    def test_tie_broken_lexicographically(self):
        vocab = build_vocabulary([raw("1", ["x y"]), raw("2", ["y x"])])
        assert vocab.word_of == [PAD_WORD, UNK_WORD, "x", "y"]

    def test_max_size_caps_total(self):
        vocab = build_vocabulary([raw("1", ["a a b"]), raw("2", ["a c"])], max_size=4)
        assert vocab.word_of == [PAD_WORD, UNK_WORD, "a", "b"]

    def test_specials_present_and_distinct(self):
        vocab = build_vocabulary([raw("1", ["a"])])
        assert vocab.id_of[PAD_WORD] == PAD_ID
        assert vocab.id_of[UNK_WORD] == UNK_ID
        assert PAD_ID != UNK_ID

    def test_ids_inverse_of_words(self):
        vocab = build_vocabulary([raw("1", ["the quick brown fox jumps"])])
        for word, idx in vocab.id_of.items():
            assert vocab.word_of[idx] == word
        assert all(i < vocab.size for i in vocab.encode(["quick", "zzz"]))

    def test_encode_decode_roundtrip_in_vocab(self):
        vocab = build_vocabulary([raw("1", ["alpha beta gamma"])])
        tokens = ["alpha", "gamma", "beta"]
        assert vocab.decode(vocab.encode(tokens)) == tokens

    def test_summary_tokens_counted(self):
        vocab = build_vocabulary([raw("1", ["a"], summary=["b b b"])])
        assert "b" in vocab.id_of

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_vocabulary([raw("1", ["a a b"]), raw("2", ["a c"])])
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.word_of == vocab.word_of
        assert loaded.freq_of == vocab.freq_of


class TestEncodeDocument:
    def setup_method(self):
        self.vocab = build_vocabulary([raw("1", ["a b"])])

    def test_unk_mapping(self):
        doc = encode_document(self.vocab, raw("d", ["a b", "zzz"]))
        a, b = self.vocab.id_of["a"], self.vocab.id_of["b"]
        assert doc.sentences == ((a, b), (UNK_ID,))

    def test_all_empty_is_error(self):
        with pytest.raises(EmptyDocumentError):
            encode_document(self.vocab, raw("d", ["", ""]))

    def test_identity_case(self):
        doc = encode_document(self.vocab, raw("d", ["a"]))
        assert doc.sentences == ((self.vocab.id_of["a"],),)

    def test_empty_sentences_dropped(self):
        doc = encode_document(self.vocab, raw("d", ["", "a", "!!"]))
        assert doc.sentences == ((self.vocab.id_of["a"],),)

    def test_summary_encoded_or_absent(self):
        doc = encode_document(self.vocab, raw("d", ["a"], summary=["b"]))
        assert doc.summary == ((self.vocab.id_of["b"],),)
        doc = encode_document(self.vocab, raw("d", ["a"], summary=["", "?"]))
        assert doc.summary is None


class TestTfIdf:
    def setup_method(self):
        self.vocab = build_vocabulary([raw("1", ["a a b"]), raw("2", ["a c"])])
        self.docs = [
            encode_document(self.vocab, raw("1", ["a a b"])),
            encode_document(self.vocab, raw("2", ["a c"])),
        ]
        self.model = compute_tfidf(self.docs)

    def test_hand_computed_idf(self):
        a, b = self.vocab.id_of["a"], self.vocab.id_of["b"]
        assert self.model.idf(a) == 0.0
        assert self.model.idf(b) == pytest.approx(math.log(2), abs=1e-12)

    def test_single_document_corpus(self):
        model = compute_tfidf(self.docs[:1])
        for w in set(self.docs[0].sentences[0]):
            assert model.idf(w) == 0.0

    def test_absent_word_clamped(self):
        assert self.model.idf(9999) == pytest.approx(math.log(2))

    def test_idf_bounds(self):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(30)]
        raws = [
            raw(str(i), [" ".join(rng.choice(words, size=5))])
            for i in range(10)
        ]
        vocab = build_vocabulary(raws)
        docs = [encode_document(vocab, r) for r in raws]
        model = compute_tfidf(docs)
        for w in range(2, vocab.size):
            assert 0.0 <= model.idf(w) <= math.log(model.num_docs) + 1e-12

    def test_tfidf_vector_hand_computed(self):
        a, b = self.vocab.id_of["a"], self.vocab.id_of["b"]
        vec = tfidf_vector(self.model, [a, a, b])
        assert vec == {a: 0.0, b: pytest.approx(math.log(2))}

    def test_tfidf_vector_empty_input(self):
        assert tfidf_vector(self.model, []) == {}

    def test_tfidf_vector_unk_excluded(self):
        assert tfidf_vector(self.model, [UNK_ID, UNK_ID, PAD_ID]) == {}

    def test_weights_nonnegative_zero_iff(self):
        a, c = self.vocab.id_of["a"], self.vocab.id_of["c"]
        vec = tfidf_vector(self.model, [a, c, c])
        assert all(w >= 0.0 for w in vec.values())
        assert vec[a] == 0.0 and vec[c] > 0.0

    def test_save_load_roundtrip(self, tmp_path):
        path = tmp_path / "tfidf.json"
        self.model.save(path)
        loaded = TfIdfModel.load(path)
        assert loaded.num_docs == self.model.num_docs
        assert loaded.doc_freq == self.model.doc_freq


class TestCorpusFile:
    def test_read_valid(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id": "1", "sentences": ["a b"]}\n'
            '{"id": "2", "sentences": ["c"], "summary": ["c"], "label": "x"}\n'
            '{"id": "3", "sentences": ["d"]}\n'
        )
        docs = read_raw_corpus(path)
        assert [d.id for d in docs] == ["1", "2", "3"]
        assert docs[1].label == "x"

    def test_missing_sentences_reports_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "1", "sentences": ["a"]}\n{"id": "2"}\n')
        with pytest.raises(CorpusFormatError, match=":2"):
            read_raw_corpus(path)

    def test_bad_json_reports_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "1", "sentences": ["a"]}\nnot json\n')
        with pytest.raises(CorpusFormatError, match=":2"):
            read_raw_corpus(path)

    def test_duplicate_ids_listed(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            '{"id": "dup", "sentences": ["a"]}\n{"id": "dup", "sentences": ["b"]}\n'
        )
        with pytest.raises(CorpusFormatError, match="dup"):
            read_raw_corpus(path)
