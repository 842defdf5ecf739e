"""Synthetic therapy-session corpora with class-dependent affective word rates.

Client turns of each class draw affective tokens at configurable per-category
rates; therapist turns use the same rates for both classes. Six toy lexica
with the dimensions of the real affective lexicon stack annotate the
generated words.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Label, Session, Speaker, Turn, dump_session_jsonl
from .lexicon import Lexicon, write_lexicon

CATEGORIES = ("positive", "negative", "sadness", "anxiety")

MPQA_CATEGORIES = ("positive", "negative", "strongsubj", "weaksubj")
EMOLEX_CATEGORIES = (
    "anger", "anticipation", "disgust", "fear", "joy", "negative", "positive", "sadness", "surprise", "trust",
    "anger_intensity", "anticipation_intensity", "disgust_intensity", "fear_intensity", "joy_intensity",
    "sadness_intensity", "surprise_intensity", "trust_intensity", "valence",
)
LIWC_CATEGORIES = (
    "function", "pronoun", "ppron", "i", "we", "you", "shehe", "they", "ipron", "article",
    "prep", "auxverb", "adverb", "conj", "negate", "verb", "adj", "compare", "interrog", "number",
    "quant", "affect", "posemo", "negemo", "anx", "anger", "sad", "social", "family", "friend",
    "female", "male", "cogproc", "insight", "cause", "discrep", "tentat", "certain", "differ", "percept",
    "see", "hear", "feel", "bio", "body", "health", "sexual", "ingest", "drives", "affiliation",
    "achieve", "power", "reward", "risk", "focuspast", "focuspresent", "focusfuture", "relativ", "motion", "space",
    "time", "work", "leisure", "home", "money", "relig", "death", "informal", "swear", "netspeak",
    "assent", "nonflu", "filler",
)
# Order fixes the stacked layout: dims 1, 1, 1, 4, 19, 73 (total 99).
TOY_LEXICA = (
    ("afinn", ("score",)),
    ("semeval15", ("score",)),
    ("bingliu", ("polarity",)),
    ("mpqa", MPQA_CATEGORIES),
    ("emolex", EMOLEX_CATEGORIES),
    ("liwc", LIWC_CATEGORIES),
)

# analysis mapping from affect category to stacked lexicon column
CATEGORY_COLUMNS = {
    "positive": ("liwc", "posemo"),
    "negative": ("liwc", "negemo"),
    "sadness": ("liwc", "sad"),
    "anxiety": ("liwc", "anx"),
}

_NEUTRAL_LIWC = [c for c in LIWC_CATEGORIES if c not in ("affect", "posemo", "negemo", "anx", "anger", "sad")]
_ONSETS = "b c d f g h j k l m n p r s t v w z br dr fl gr kl pl st tr".split()
_VOWELS = "a e i o u ai ou".split()


def _default_rates() -> dict[str, dict[str, float]]:
    return {
        "depressed": {"positive": 0.04, "negative": 0.15, "sadness": 0.02, "anxiety": 0.075},
        "not_depressed": {"positive": 0.05, "negative": 0.03, "sadness": 0.02, "anxiety": 0.015},
    }


def _default_therapist_rates() -> dict[str, float]:
    return {"positive": 0.03, "negative": 0.01, "sadness": 0.0, "anxiety": 0.0}


@dataclass
class SynthSpec:
    n_per_class: int = 200
    turns: tuple[int, int] = (6, 12)
    tokens: tuple[int, int] = (6, 14)
    base_vocab: int = 400
    words_per_category: int = 40
    topic_vocab: int = 30
    summary_tokens: tuple[int, int] = (3, 6)
    client_rates: dict[str, dict[str, float]] = field(default_factory=_default_rates)
    therapist_rates: dict[str, float] = field(default_factory=_default_therapist_rates)
    seed: int = 0
    require_separable: bool = False

    def __post_init__(self) -> None:
        self.turns = tuple(self.turns)
        self.tokens = tuple(self.tokens)
        self.summary_tokens = tuple(self.summary_tokens)
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be positive")
        for name in ("turns", "tokens", "summary_tokens"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} range must satisfy 1 <= low <= high, got {(lo, hi)}")
        for name in ("base_vocab", "words_per_category", "topic_vocab"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if set(self.client_rates) != {"depressed", "not_depressed"}:
            raise ValueError("client_rates needs exactly 'depressed' and 'not_depressed'")
        for who, rates in [*self.client_rates.items(), ("therapist", self.therapist_rates)]:
            unknown = set(rates) - set(CATEGORIES)
            if unknown:
                raise ValueError(f"{who}: unknown categories {sorted(unknown)}")
            if any(not 0.0 <= r <= 1.0 for r in rates.values()) or sum(rates.values()) > 1.0:
                raise ValueError(f"{who}: rates must lie in [0, 1] and sum to at most 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)


@dataclass
class SynthCorpus:
    sessions: list[Session]
    lexica: list[Lexicon]
    words: dict[str, list[str]]
    spec: SynthSpec


def _make_words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        syllables = rng.integers(2, 4)
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def _vec(lex_idx: int, rng: np.random.Generator, category: str | None) -> np.ndarray:
    name, cats = TOY_LEXICA[lex_idx]
    v = np.zeros(len(cats))
    sign = {"positive": 1.0, "negative": -1.0, "sadness": -1.0, "anxiety": -1.0}.get(category or "", 0.0)
    if name == "afinn":
        v[0] = sign * rng.integers(1, 4)
    elif name == "semeval15":
        v[0] = round(sign * rng.uniform(0.2, 0.9), 3)
    elif name == "bingliu":
        v[0] = sign
    elif name == "mpqa":
        v[0 if sign > 0 else 1] = 1.0
        v[2 if rng.random() < 0.5 else 3] = 1.0
    elif name == "emolex":
        idx = {c: i for i, c in enumerate(cats)}
        v[idx["positive" if sign > 0 else "negative"]] = 1.0
        emotion = {
            "positive": rng.choice(["joy", "trust", "anticipation"]),
            "negative": rng.choice(["anger", "disgust"]),
            "sadness": "sadness",
            "anxiety": "fear",
        }[category]
        v[idx[emotion]] = 1.0
        v[idx[f"{emotion}_intensity"]] = round(rng.uniform(0.3, 1.0), 3)
        v[idx["valence"]] = round(0.5 + 0.4 * sign * rng.uniform(0.5, 1.0), 3)
    elif name == "liwc":
        idx = {c: i for i, c in enumerate(cats)}
        v[idx["affect"]] = 1.0
        v[idx[{"positive": "posemo", "negative": "negemo", "sadness": "sad", "anxiety": "anx"}[category]]] = 1.0
    return v


def _build_lexica(rng: np.random.Generator, words: dict[str, list[str]]) -> list[Lexicon]:
    entries: list[dict[str, np.ndarray]] = [{} for _ in TOY_LEXICA]
    for category in CATEGORIES:
        for w in words[category]:
            for li in range(len(TOY_LEXICA)):
                # sentiment lexica each cover a random share of the affective words
                if TOY_LEXICA[li][0] != "liwc" and rng.random() < 0.3:
                    continue
                entries[li][w] = _vec(li, rng, category)
    liwc = len(TOY_LEXICA) - 1
    for w in words["base"]:
        if rng.random() < 0.25:
            v = np.zeros(len(LIWC_CATEGORIES))
            for c in rng.choice(_NEUTRAL_LIWC, size=rng.integers(1, 3), replace=False):
                v[LIWC_CATEGORIES.index(c)] = 1.0
            entries[liwc][w] = v
    return [Lexicon(name, len(cats), tuple(cats), entries[i]) for i, (name, cats) in enumerate(TOY_LEXICA)]


def _sample_tokens(rng: np.random.Generator, n: int, rates: dict[str, float], words: dict[str, list[str]]) -> list[str]:
    cats = [c for c in CATEGORIES if rates.get(c, 0.0) > 0]
    edges = np.cumsum([rates[c] for c in cats])
    out = []
    for u in rng.random(n):
        k = int(np.searchsorted(edges, u, side="right"))
        pool = words[cats[k]] if k < len(cats) else words["base"]
        out.append(pool[rng.integers(len(pool))])
    return out


def generate(spec: SynthSpec | None = None) -> SynthCorpus:
    spec = spec or SynthSpec()
    rng = np.random.default_rng([spec.seed, 0])
    taken: set[str] = set()
    words = {"base": _make_words(rng, spec.base_vocab, taken)}
    for c in CATEGORIES:
        words[c] = _make_words(rng, spec.words_per_category, taken)
    words["topic"] = _make_words(rng, spec.topic_vocab, taken)
    lexica = _build_lexica(rng, words)

    cr = spec.client_rates
    if spec.require_separable and all(
        cr["depressed"].get(c, 0.0) == cr["not_depressed"].get(c, 0.0) for c in CATEGORIES
    ):
        warnings.warn("client rates are identical for both classes; classes are not separable", stacklevel=2)

    sessions = []
    for i in range(spec.n_per_class):
        for label in (Label.DEPRESSED, Label.NOT_DEPRESSED):
            srng = np.random.default_rng([spec.seed, 1, int(label), i])
            n_turns = int(srng.integers(spec.turns[0], spec.turns[1] + 1))
            turns = []
            for k in range(n_turns):
                speaker = Speaker.THERAPIST if k % 2 == 0 else Speaker.CLIENT
                rates = cr[label.wire] if speaker is Speaker.CLIENT else spec.therapist_rates
                n_tok = int(srng.integers(spec.tokens[0], spec.tokens[1] + 1))
                turns.append(Turn(speaker, tuple(_sample_tokens(srng, n_tok, rates, words))))
            n_sum = int(srng.integers(spec.summary_tokens[0], spec.summary_tokens[1] + 1))
            summary = tuple(words["topic"][j] for j in srng.integers(len(words["topic"]), size=n_sum))
            sessions.append(Session(f"synth-{label.wire}-{i:04d}", tuple(turns), summary, label))
    return SynthCorpus(sessions, lexica, words, spec)


def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> dict[str, object]:
    """Write corpus.jsonl, one TSV per toy lexicon and spec.json; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus_path = out / "corpus.jsonl"
    corpus_path.write_text(dump_session_jsonl(corpus.sessions), encoding="utf-8")
    lex_paths = []
    for lex in corpus.lexica:
        p = out / f"{lex.name}.tsv"
        write_lexicon(lex, p)
        lex_paths.append(str(p))
    spec_path = out / "spec.json"
    spec_path.write_text(json.dumps(asdict(corpus.spec), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"corpus": str(corpus_path), "lexica": lex_paths, "spec": str(spec_path)}
