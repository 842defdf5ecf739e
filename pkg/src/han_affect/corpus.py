"""Sessions, transcript cleaning, tokenisation, vocabulary and embeddings."""

from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
DEFAULT_PHQ8_THRESHOLD = 10


class CorpusError(ValueError):
    pass


class Speaker(str, enum.Enum):
    THERAPIST = "therapist"
    CLIENT = "client"


class Label(enum.IntEnum):
    NOT_DEPRESSED = 0
    DEPRESSED = 1

    @property
    def wire(self) -> str:
        return "depressed" if self is Label.DEPRESSED else "not_depressed"

    @classmethod
    def from_wire(cls, value: str) -> "Label":
        try:
            return {"depressed": cls.DEPRESSED, "not_depressed": cls.NOT_DEPRESSED}[value]
        except KeyError:
            raise CorpusError(f"unknown label {value!r}") from None


class View(str, enum.Enum):
    CLIENT = "client"
    THERAPIST = "therapist"
    BOTH = "both"


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class Session:
    id: str
    turns: tuple[Turn, ...]
    summary: tuple[str, ...] | None = None
    label: Label | None = None

    def __post_init__(self) -> None:
        if not self.turns:
            raise CorpusError(f"session {self.id!r} has no turns")


# ---------------------------------------------------------------------------
# Cleaning and tokenisation
# ---------------------------------------------------------------------------

_SPEAKER_PREFIX = re.compile(r"^[ \t]*[A-Za-z][\w.'-]*(?:[ \t][A-Za-z][\w.'-]*)?[ \t]*:(?=\s|$)", re.MULTILINE)
_BRACKETED = re.compile(r"\[[^\]]*\]|\([^)]*\)")
_TOKEN = re.compile(r"\w+(?:'\w+)*|[^\w\s]")


def clean_transcript(raw_turn_text: str) -> str:
    """Strip ``NAME:`` prefixes at line starts and ``[...]``/``(...)`` notes."""
    text = _SPEAKER_PREFIX.sub("", raw_turn_text)
    text = _BRACKETED.sub(" ", text)
    return " ".join(text.split())


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _tokens_of(text: str) -> list[str]:
    return tokenize(clean_transcript(text))


# ---------------------------------------------------------------------------
# JSONL ingestion
# ---------------------------------------------------------------------------


def _parse_label(obj: dict, lineno: int, require_labels: bool, phq8_threshold: int) -> Label | None:
    raw = obj.get("label")
    if raw is not None:
        try:
            return Label.from_wire(raw)
        except CorpusError as e:
            raise CorpusError(f"line {lineno}: {e}") from None
    phq8 = obj.get("phq8")
    if phq8 is not None:
        if isinstance(phq8, bool) or not isinstance(phq8, int):
            raise CorpusError(f"line {lineno}: phq8 must be an integer, got {phq8!r}")
        return Label.DEPRESSED if phq8 >= phq8_threshold else Label.NOT_DEPRESSED
    if require_labels:
        raise CorpusError(f"line {lineno}: session has no label")
    return None


def parse_session_jsonl(
    data: bytes | str,
    require_labels: bool = True,
    phq8_threshold: int = DEFAULT_PHQ8_THRESHOLD,
) -> list[Session]:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    sessions = []
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"line {lineno}: malformed JSON ({e.msg})") from None
        if not isinstance(obj, dict):
            raise CorpusError(f"line {lineno}: expected a JSON object")
        sid = obj.get("id")
        if not isinstance(sid, str):
            raise CorpusError(f"line {lineno}: missing string field 'id'")
        raw_turns = obj.get("turns")
        if not isinstance(raw_turns, list):
            raise CorpusError(f"line {lineno}: missing list field 'turns'")
        turns = []
        for t in raw_turns:
            if not isinstance(t, dict) or not isinstance(t.get("text"), str):
                raise CorpusError(f"line {lineno}: each turn needs 'speaker' and string 'text'")
            try:
                speaker = Speaker(t.get("speaker"))
            except ValueError:
                raise CorpusError(f"line {lineno}: unknown speaker {t.get('speaker')!r}") from None
            tokens = _tokens_of(t["text"])
            if tokens:
                turns.append(Turn(speaker, tuple(tokens)))
        if not turns:
            raise CorpusError(f"line {lineno}: session {sid!r} has no non-empty turns")
        summary = obj.get("summary")
        if summary is not None:
            if not isinstance(summary, str):
                raise CorpusError(f"line {lineno}: summary must be a string or null")
            summary = tuple(_tokens_of(summary)) or None
        label = _parse_label(obj, lineno, require_labels, phq8_threshold)
        sessions.append(Session(sid, tuple(turns), summary, label))
    return sessions


def read_sessions(path: str | Path, **kwargs) -> list[Session]:
    return parse_session_jsonl(Path(path).read_bytes(), **kwargs)


def session_to_json(session: Session) -> dict:
    return {
        "id": session.id,
        "label": None if session.label is None else session.label.wire,
        "phq8": None,
        "summary": None if session.summary is None else " ".join(session.summary),
        "turns": [{"speaker": t.speaker.value, "text": " ".join(t.tokens)} for t in session.turns],
    }


def dump_session_jsonl(sessions: Iterable[Session]) -> str:
    return "".join(json.dumps(session_to_json(s), ensure_ascii=False) + "\n" for s in sessions)


# ---------------------------------------------------------------------------
# Views
# ---------------------------------------------------------------------------


def select_view(session: Session, view: View | str) -> Session:
    view = View(view)
    if view is View.BOTH:
        return session
    speaker = Speaker(view.value)
    turns = tuple(t for t in session.turns if t.speaker is speaker)
    if not turns:
        raise CorpusError(f"empty view: session {session.id!r} has no {speaker.value} turns")
    return replace(session, turns=turns)


# ---------------------------------------------------------------------------
# Vocabulary and embeddings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    itos: tuple[str, ...]
    stoi: dict[str, int] = field(repr=False, compare=False)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Vocabulary":
        itos = (PAD_TOKEN, UNK_TOKEN, *tokens)
        stoi = {t: i for i, t in enumerate(itos)}
        if len(stoi) != len(itos):
            raise CorpusError("duplicate tokens in vocabulary")
        return cls(itos, stoi)

    def __len__(self) -> int:
        return len(self.itos)

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, i: int) -> str:
        return self.itos[i]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    @property
    def words(self) -> tuple[str, ...]:
        return self.itos[2:]


def iter_tokens(sessions: Iterable[Session], include_summary: bool = True) -> Iterable[str]:
    for s in sessions:
        for t in s.turns:
            yield from t.tokens
        if include_summary and s.summary:
            yield from s.summary


def build_vocabulary(sessions: Sequence[Session], min_count: int = 1) -> Vocabulary:
    """Tokens with frequency >= min_count, ordered by descending count then lexically."""
    if min_count < 1:
        raise CorpusError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(iter_tokens(sessions))
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary.from_tokens(kept)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: bool = False
    coverage: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def random_embeddings(vocab: Vocabulary, dim: int = 300, seed: int = 0, trainable: bool = False) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), dim))
    matrix[PAD] = 0.0
    return EmbeddingTable(matrix, trainable, 0.0)


def load_embeddings(
    path: str | Path, vocab: Vocabulary, dim: int = 300, seed: int = 0, trainable: bool = False
) -> EmbeddingTable:
    """Fill vocabulary rows from a ``token v1 .. v_dim`` text file.

    Tokens missing from the file keep a uniform(-0.05, 0.05) initialisation.
    """
    table = random_embeddings(vocab, dim, seed, trainable)
    matched: set[int] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise CorpusError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
            i = vocab.stoi.get(parts[0])
            if i is None or i in (PAD, UNK) or i in matched:
                continue
            try:
                table.matrix[i] = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-numeric embedding value") from None
            matched.add(i)
    n_words = len(vocab) - 2
    table.coverage = len(matched) / n_words if n_words else 0.0
    return table
