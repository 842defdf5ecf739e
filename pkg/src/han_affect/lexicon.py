"""Affective lexica in a normalised TSV format, stacked into one annotation space."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Vocabulary


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    name: str
    dim: int
    categories: tuple[str, ...]
    entries: dict[str, np.ndarray] = field(compare=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise LexiconError(f"lexicon {self.name!r}: dim must be positive")
        if len(self.categories) != self.dim:
            raise LexiconError(f"lexicon {self.name!r}: {len(self.categories)} category names for dim {self.dim}")
        for word, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise LexiconError(f"lexicon {self.name!r}: entry {word!r} has shape {vec.shape}")
            if word != word.lower():
                raise LexiconError(f"lexicon {self.name!r}: entry {word!r} is not lowercase")

    def __len__(self) -> int:
        return len(self.entries)

    def category_index(self, category: str) -> int:
        try:
            return self.categories.index(category)
        except ValueError:
            raise LexiconError(f"lexicon {self.name!r} has no category {category!r}") from None


def parse_lexicon(text: str, source: str = "<string>") -> Lexicon:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise LexiconError(f"{source}:1: header must start with '#name<TAB>dim'")
    header = lines[0][1:].split("\t")
    try:
        name, dim = header[0], int(header[1])
    except (IndexError, ValueError):
        raise LexiconError(f"{source}:1: header must be '#name<TAB>dim<TAB>categories...'") from None
    categories = tuple(header[2:])
    if len(categories) != dim:
        raise LexiconError(f"{source}:1: header declares dim {dim} but names {len(categories)} categories")
    entries: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        row = line.split("\t")
        if len(row) != dim + 1:
            raise LexiconError(f"{source}:{lineno}: expected {dim + 1} fields, found {len(row)}")
        word = row[0].strip().lower()
        if word in entries:
            raise LexiconError(f"{source}:{lineno}: duplicate word {word!r}")
        try:
            entries[word] = np.array(row[1:], dtype=np.float64)
        except ValueError:
            raise LexiconError(f"{source}:{lineno}: non-numeric value") from None
    return Lexicon(name, dim, categories, entries)


def load_lexicon(path: str | Path) -> Lexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"), str(path))


def format_lexicon(lex: Lexicon) -> str:
    out = ["#" + "\t".join([lex.name, str(lex.dim), *lex.categories])]
    for word in sorted(lex.entries):
        out.append("\t".join([word, *(repr(float(v)) for v in lex.entries[word])]))
    return "\n".join(out) + "\n"


def write_lexicon(lex: Lexicon, path: str | Path) -> None:
    Path(path).write_text(format_lexicon(lex), encoding="utf-8")


@dataclass(frozen=True)
class LexiconStack:
    lexica: tuple[Lexicon, ...]
    offsets: tuple[int, ...]
    total_dim: int
    _table: dict[str, np.ndarray] = field(repr=False, compare=False)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lex.name for lex in self.lexica)

    def lexicon(self, name: str) -> Lexicon:
        for lex in self.lexica:
            if lex.name == name:
                return lex
        raise LexiconError(f"no lexicon named {name!r} in stack")

    def column(self, lexicon: str, category: str) -> int:
        """Index of ``lexicon``/``category`` inside the stacked vector."""
        i = self.names.index(self.lexicon(lexicon).name)
        return self.offsets[i] + self.lexica[i].category_index(category)


def _max_abs_scaled(lex: Lexicon) -> Lexicon:
    if not lex.entries:
        return lex
    scale = np.max(np.abs(np.stack(list(lex.entries.values()))), axis=0)
    scale[scale == 0] = 1.0
    return Lexicon(lex.name, lex.dim, lex.categories, {w: v / scale for w, v in lex.entries.items()})


def stack_lexica(lexica: Sequence[Lexicon], scale: bool = False) -> LexiconStack:
    """Concatenate lexica in the given order.

    With ``scale`` every dimension is divided by its largest absolute value,
    which maps it into [-1, 1] and keeps missing annotations at zero.
    """
    if not lexica:
        raise LexiconError("need at least one lexicon")
    names = [lex.name for lex in lexica]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise LexiconError(f"duplicate lexicon names: {dupes}")
    if scale:
        lexica = [_max_abs_scaled(lex) for lex in lexica]
    offsets = tuple(int(x) for x in np.cumsum([0] + [lex.dim for lex in lexica[:-1]]))
    total = sum(lex.dim for lex in lexica)
    table: dict[str, np.ndarray] = {}
    for lex, off in zip(lexica, offsets):
        for word, vec in lex.entries.items():
            row = table.get(word)
            if row is None:
                row = table[word] = np.zeros(total)
            row[off : off + lex.dim] = vec
    return LexiconStack(tuple(lexica), offsets, total, table)


def context_vector(stack: LexiconStack, word: str) -> np.ndarray:
    row = stack._table.get(word)
    return np.zeros(stack.total_dim) if row is None else row.copy()


def context_matrix(stack: LexiconStack, tokens: Iterable[str]) -> np.ndarray:
    tokens = list(tokens)
    out = np.zeros((len(tokens), stack.total_dim))
    for i, w in enumerate(tokens):
        row = stack._table.get(w)
        if row is not None:
            out[i] = row
    return out


@dataclass(frozen=True)
class Coverage:
    covered_count: int
    fraction: float
    per_lexicon: dict[str, int]


def coverage(stack: LexiconStack, vocab: Vocabulary) -> Coverage:
    """Vocabulary words with a non-zero context vector, plus per-lexicon membership counts."""
    words = vocab.words
    covered = sum(1 for w in words if w in stack._table and np.any(stack._table[w] != 0))
    per = {lex.name: sum(1 for w in words if w in lex.entries) for lex in stack.lexica}
    return Coverage(covered, covered / len(words) if words else 0.0, per)
