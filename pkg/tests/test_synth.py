import math
import warnings

import pytest

from han_affect import synth
from han_affect.analysis import category_occurrence
from han_affect.corpus import Label, Speaker, dump_session_jsonl, parse_session_jsonl
from han_affect.lexicon import stack_lexica


def _small(**kw):
    opts = dict(n_per_class=4, turns=(2, 4), tokens=(3, 6), base_vocab=30, words_per_category=5, topic_vocab=5)
    opts.update(kw)
    return synth.SynthSpec(**opts)


def test_same_seed_byte_identical(tmp_path):
    a = synth.write_corpus(synth.generate(_small(seed=4)), tmp_path / "a")
    b = synth.write_corpus(synth.generate(_small(seed=4)), tmp_path / "b")
    for pa, pb in zip([a["corpus"], *a["lexica"], a["spec"]], [b["corpus"], *b["lexica"], b["spec"]]):
        assert open(pa, "rb").read() == open(pb, "rb").read()
    c = synth.generate(_small(seed=5))
    assert dump_session_jsonl(c.sessions) != open(a["corpus"]).read()


def test_toy_lexicon_dimensions():
    corpus = synth.generate(_small())
    assert [lex.dim for lex in corpus.lexica] == [1, 1, 1, 4, 19, 73]
    assert stack_lexica(corpus.lexica).total_dim == 99


def _rates(label_rate_pairs, n_per_class, turns, tokens):
    rates = {w: {c: 0.0 for c in synth.CATEGORIES} for w in ("depressed", "not_depressed")}
    for who, value in label_rate_pairs.items():
        rates[who]["negative"] = value
    return _small(n_per_class=n_per_class, turns=(turns, turns), tokens=(tokens, tokens), client_rates=rates)


def _client_fraction(corpus, label, category):
    stack = stack_lexica(corpus.lexica)
    col = synth.CATEGORY_COLUMNS[category]
    occ = category_occurrence(corpus.sessions, stack, [col])
    return occ[label][f"{col[0]}:{col[1]}"]


def test_empirical_rates_close_to_spec():
    spec = _rates({"depressed": 0.2, "not_depressed": 0.05}, n_per_class=100, turns=50, tokens=20)
    corpus = synth.generate(spec)
    assert len(corpus.sessions) == 200
    assert abs(_client_fraction(corpus, Label.DEPRESSED, "negative").fraction_of_tokens - 0.2) <= 0.02
    assert abs(_client_fraction(corpus, Label.NOT_DEPRESSED, "negative").fraction_of_tokens - 0.05) <= 0.02


def test_rate_zero_gives_no_tokens():
    spec = _rates({"depressed": 0.2, "not_depressed": 0.0}, n_per_class=10, turns=6, tokens=10)
    corpus = synth.generate(spec)
    assert _client_fraction(corpus, Label.NOT_DEPRESSED, "negative").occurrences == 0


def test_default_rates_within_three_standard_errors():
    spec = synth.SynthSpec(n_per_class=60)
    corpus = synth.generate(spec)
    stack = stack_lexica(corpus.lexica)
    cols = list(synth.CATEGORY_COLUMNS.values())
    occ = category_occurrence(corpus.sessions, stack, cols)
    n_tokens = {label: sum(len(t.tokens) for s in corpus.sessions if s.label is label
                           for t in s.turns if t.speaker is Speaker.CLIENT) for label in Label}
    for label in Label:
        for cat, (lex, col) in synth.CATEGORY_COLUMNS.items():
            p = spec.client_rates[label.wire][cat]
            se = math.sqrt(p * (1 - p) / n_tokens[label])
            assert abs(occ[label][f"{lex}:{col}"].fraction_of_tokens - p) <= 3 * se + 1e-12


def test_therapist_turns_class_neutral():
    corpus = synth.generate(synth.SynthSpec(n_per_class=40))
    stack = stack_lexica(corpus.lexica)
    col = synth.CATEGORY_COLUMNS["negative"]
    occ = category_occurrence(corpus.sessions, stack, [col], speakers=(Speaker.THERAPIST,))
    key = f"{col[0]}:{col[1]}"
    assert abs(occ[Label.DEPRESSED][key].fraction_of_tokens - occ[Label.NOT_DEPRESSED][key].fraction_of_tokens) < 0.01


def test_round_trip_through_parser():
    corpus = synth.generate(_small())
    assert parse_session_jsonl(dump_session_jsonl(corpus.sessions)) == corpus.sessions


def test_summaries_are_topic_words():
    corpus = synth.generate(_small())
    topic = set(corpus.words["topic"])
    assert all(s.summary and set(s.summary) <= topic for s in corpus.sessions)


def test_identical_rates_warn_when_separability_requested():
    same = {c: 0.05 for c in synth.CATEGORIES}
    spec = _small(client_rates={"depressed": dict(same), "not_depressed": dict(same)}, require_separable=True)
    with pytest.warns(UserWarning, match="not separable"):
        synth.generate(spec)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        synth.generate(_small(require_separable=True))


@pytest.mark.parametrize("bad", [dict(turns=(3, 2)), dict(n_per_class=0),
                                 dict(client_rates={"depressed": {"negative": 1.5}, "not_depressed": {}})])
def test_invalid_spec(bad):
    with pytest.raises(ValueError):
        _small(**bad)
