import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import C, T, make_session
from han_affect.corpus import (
    PAD,
    UNK,
    CorpusError,
    Label,
    Speaker,
    View,
    build_vocabulary,
    clean_transcript,
    dump_session_jsonl,
    load_embeddings,
    parse_session_jsonl,
    select_view,
    tokenize,
)


def _line(**kw):
    obj = {"id": "s", "label": "depressed", "phq8": None, "summary": None, "turns": [{"speaker": "client", "text": "hi"}]}
    obj.update(kw)
    return json.dumps(obj)


class TestCleanTranscript:
    def test_speaker_tag_and_bracketed_note(self):
        assert clean_transcript("CLIENT: I feel [sighs] tired") == "I feel tired"

    def test_empty(self):
        assert clean_transcript("") == ""

    def test_nothing_to_remove(self):
        assert clean_transcript("hello there") == "hello there"

    def test_parenthesised_note_and_whitespace(self):
        assert clean_transcript("Therapist:  so (laughs)   okay") == "so okay"

    def test_colon_inside_text_is_kept(self):
        assert clean_transcript("it was 10:30 then") == "it was 10:30 then"


class TestTokenize:
    def test_sentence(self):
        assert tokenize("I feel sad.") == ["i", "feel", "sad", "."]

    def test_single_word(self):
        assert tokenize("OK") == ["ok"]

    def test_internal_apostrophe(self):
        assert tokenize("don't!") == ["don't", "!"]

    @given(st.text(alphabet=st.sampled_from("ab'c .,!?-D"), max_size=40))
    def test_idempotent_on_joined_tokens(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once


class TestParse:
    def test_order_preserved(self):
        data = _line(id="a") + "\n" + _line(id="b") + "\n"
        assert [s.id for s in parse_session_jsonl(data.encode())] == ["a", "b"]

    def test_unknown_speaker_names_line(self):
        data = _line(id="a") + "\n" + _line(turns=[{"speaker": "X", "text": "hi"}])
        with pytest.raises(CorpusError, match="line 2"):
            parse_session_jsonl(data)

    def test_malformed_json_names_line(self):
        with pytest.raises(CorpusError, match="line 1"):
            parse_session_jsonl("{not json")

    def test_turn_cleaning_to_empty_is_dropped(self):
        turns = [{"speaker": "therapist", "text": "[pause]"}, {"speaker": "client", "text": "Client: fine."}]
        (s,) = parse_session_jsonl(_line(turns=turns))
        assert [(t.speaker, t.tokens) for t in s.turns] == [(Speaker.CLIENT, ("fine", "."))]

    def test_missing_label_when_required(self):
        with pytest.raises(CorpusError, match="no label"):
            parse_session_jsonl(_line(label=None))
        (s,) = parse_session_jsonl(_line(label=None), require_labels=False)
        assert s.label is None

    @pytest.mark.parametrize("phq8,expected", [(9, Label.NOT_DEPRESSED), (10, Label.DEPRESSED), (24, Label.DEPRESSED)])
    def test_phq8_binarised(self, phq8, expected):
        (s,) = parse_session_jsonl(_line(label=None, phq8=phq8))
        assert s.label is expected

    def test_phq8_threshold_configurable(self):
        (s,) = parse_session_jsonl(_line(label=None, phq8=9), phq8_threshold=5)
        assert s.label is Label.DEPRESSED

    def test_summary_tokenised(self):
        (s,) = parse_session_jsonl(_line(summary="Work Stress."))
        assert s.summary == ("work", "stress", ".")

    def test_deterministic(self):
        data = (_line(id="a") + "\n" + _line(id="b", summary="x y")).encode()
        assert parse_session_jsonl(data) == parse_session_jsonl(data)

    def test_round_trip(self):
        sessions = [make_session("a", [(T, "how are you ?"), (C, "don't know")], Label.DEPRESSED, "low mood")]
        assert parse_session_jsonl(dump_session_jsonl(sessions)) == sessions


class TestSelectView:
    session = make_session("s", [(T, "a"), (C, "b"), (C, "c"), (T, "d")])

    def test_client(self):
        v = select_view(self.session, View.CLIENT)
        assert [t.tokens for t in v.turns] == [("b",), ("c",)]

    def test_both_is_identity(self):
        assert select_view(self.session, View.BOTH) is self.session

    def test_empty_view(self):
        only_t = make_session("t", [(T, "a")])
        with pytest.raises(CorpusError, match="empty view"):
            select_view(only_t, "client")

    def test_views_partition_turns(self):
        c = select_view(self.session, "client").turns
        t = select_view(self.session, "therapist").turns
        assert sorted(c + t, key=repr) == sorted(self.session.turns, key=repr)


class TestVocabulary:
    def test_min_count(self):
        vocab = build_vocabulary([make_session("s", [(C, "a a b")])], min_count=2)
        assert vocab.itos == ("<pad>", "<unk>", "a")

    def test_min_count_one_keeps_all(self):
        vocab = build_vocabulary([make_session("s", [(C, "a b")])])
        assert set(vocab.words) == {"a", "b"}

    def test_deterministic_indices(self):
        corpus = [make_session("s", [(C, "z y y x")], summary="w")]
        assert build_vocabulary(corpus).itos == build_vocabulary(corpus).itos

    def test_round_trip_and_unknown(self):
        vocab = build_vocabulary([make_session("s", [(C, "a b c")])])
        for i in range(2, len(vocab)):
            assert vocab.index(vocab.token(i)) == i
        assert vocab.index("never-seen") == UNK
        assert (PAD, UNK) == (0, 1)

    def test_empty_corpus(self):
        with pytest.raises(CorpusError):
            build_vocabulary([])


class TestEmbeddings:
    def _vocab(self):
        return build_vocabulary([make_session("s", [(C, "a b c")])])

    def test_copy_pad_and_coverage(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 2 3\nzzz 4 5 6\nc 7 8 9\n")
        vocab = self._vocab()
        table = load_embeddings(path, vocab, dim=3)
        np.testing.assert_array_equal(table.matrix[vocab.index("a")], [1, 2, 3])
        np.testing.assert_array_equal(table.matrix[vocab.index("c")], [7, 8, 9])
        np.testing.assert_array_equal(table.matrix[PAD], 0.0)
        assert table.coverage == 2 / 3

    def test_dimension_mismatch_names_line(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("a 1 2 3\nb 1 2\n")
        with pytest.raises(CorpusError, match=":2:"):
            load_embeddings(path, self._vocab(), dim=3)
