"""Corpus statistics: turn lengths, per-class vocabularies and affective word usage."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import Label, Session, Speaker
from .lexicon import LexiconStack

CLIENT_ONLY = (Speaker.CLIENT,)

Category = tuple[str, str]  # (lexicon name, category name)


@dataclass
class TurnStats:
    avg_turns_per_session: float
    avg_tokens_per_turn: float
    avg_tokens_client: float
    avg_tokens_therapist: float
    no_client_turns: bool = False
    no_therapist_turns: bool = False


def turn_stats(corpus: Sequence[Session]) -> TurnStats:
    if not corpus:
        raise ValueError("turn_stats needs a non-empty corpus")
    n_turns = sum(len(s.turns) for s in corpus)
    lengths = {sp: [len(t.tokens) for s in corpus for t in s.turns if t.speaker is sp] for sp in Speaker}
    total_tokens = sum(sum(v) for v in lengths.values())

    def avg(xs: list[int]) -> float:
        return sum(xs) / len(xs) if xs else 0.0

    return TurnStats(
        avg_turns_per_session=n_turns / len(corpus),
        avg_tokens_per_turn=total_tokens / n_turns,
        avg_tokens_client=avg(lengths[Speaker.CLIENT]),
        avg_tokens_therapist=avg(lengths[Speaker.THERAPIST]),
        no_client_turns=not lengths[Speaker.CLIENT],
        no_therapist_turns=not lengths[Speaker.THERAPIST],
    )


def _columns(stack: LexiconStack, categories: Iterable[Category]) -> dict[str, int]:
    return {f"{lex}:{cat}": stack.column(lex, cat) for lex, cat in categories}


def _class_tokens(corpus: Sequence[Session], speakers: Sequence[Speaker]) -> dict[Label, dict]:
    out: dict[Label, dict] = {}
    for s in corpus:
        if s.label is None:
            continue
        entry = out.setdefault(s.label, {"samples": 0, "turns": 0, "counts": Counter()})
        entry["samples"] += 1
        for t in s.turns:
            if t.speaker in speakers:
                entry["turns"] += 1
                entry["counts"].update(t.tokens)
    return out


def _value(stack: LexiconStack, word: str, col: int) -> float:
    row = stack._table.get(word)
    return 0.0 if row is None else float(row[col])


@dataclass
class ClassVocab:
    samples: int
    total_turns: int
    vocab_size: int
    affective_word_count: int
    affective_fraction: float


def class_vocab_stats(
    corpus: Sequence[Session],
    stack: LexiconStack,
    affect_categories: Sequence[Category],
    speakers: Sequence[Speaker] = CLIENT_ONLY,
) -> dict[Label, ClassVocab]:
    """Per-class vocabulary size and the share of it marked by any affect category."""
    cols = list(_columns(stack, affect_categories).values())
    stats = {}
    for label, entry in sorted(_class_tokens(corpus, speakers).items()):
        vocab = entry["counts"].keys()
        affective = sum(1 for w in vocab if any(_value(stack, w, c) != 0 for c in cols))
        stats[label] = ClassVocab(
            samples=entry["samples"],
            total_turns=entry["turns"],
            vocab_size=len(vocab),
            affective_word_count=affective,
            affective_fraction=affective / len(vocab) if vocab else 0.0,
        )
    return stats


@dataclass
class Occurrence:
    occurrences: int
    fraction_of_tokens: float


def category_occurrence(
    corpus: Sequence[Session],
    stack: LexiconStack,
    categories: Sequence[Category],
    speakers: Sequence[Speaker] = CLIENT_ONLY,
) -> dict[Label, dict[str, Occurrence]]:
    """Token occurrences (with multiplicity) per category, over the class's token total."""
    cols = _columns(stack, categories)
    stats = {}
    for label, entry in sorted(_class_tokens(corpus, speakers).items()):
        counts: Counter = entry["counts"]
        total = sum(counts.values())
        per = {}
        for key, col in cols.items():
            occ = sum(c for w, c in counts.items() if _value(stack, w, col) != 0)
            per[key] = Occurrence(occ, occ / total if total else 0.0)
        stats[label] = per
    return stats


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def analysis_report(
    corpus: Sequence[Session],
    stack: LexiconStack | None,
    categories: Mapping[str, Category],
    speakers: Sequence[Speaker] = CLIENT_ONLY,
) -> dict:
    report: dict = {"turn_stats": asdict(turn_stats(corpus)), "speakers": [s.value for s in speakers]}
    if stack is not None and categories:
        cats = list(categories.values())
        names = {f"{lex}:{cat}": name for name, (lex, cat) in categories.items()}
        report["class_vocab"] = {
            label.wire: asdict(v) for label, v in class_vocab_stats(corpus, stack, cats, speakers).items()
        }
        report["category_occurrence"] = {
            label.wire: {names[k]: asdict(o) for k, o in per.items()}
            for label, per in category_occurrence(corpus, stack, cats, speakers).items()
        }
    return report


def format_report(report: dict) -> str:
    ts = report["turn_stats"]
    rows = [
        ("Average number of turns/session", f"{ts['avg_turns_per_session']:.1f}"),
        ("Average number of tokens in turns", f"{ts['avg_tokens_per_turn']:.1f}"),
        ("Average number of tokens in client turns", f"{ts['avg_tokens_client']:.1f}"),
        ("Average number of tokens in therapist turns", f"{ts['avg_tokens_therapist']:.1f}"),
    ]
    width = max(len(r[0]) for r in rows)
    out = ["Dialogue turn statistics", "-" * (width + 10)]
    out += [f"{name:<{width}}  {value:>8}" for name, value in rows]
    if ts["no_therapist_turns"]:
        out.append("warning: corpus has no therapist turns")
    if ts["no_client_turns"]:
        out.append("warning: corpus has no client turns")

    if "class_vocab" in report:
        classes = [c for c in ("depressed", "not_depressed") if c in report["class_vocab"]]
        cv = report["class_vocab"]
        table = [
            ("Samples", [str(cv[c]["samples"]) for c in classes]),
            ("Total turns", [str(cv[c]["total_turns"]) for c in classes]),
            ("Vocabulary size", [str(cv[c]["vocab_size"]) for c in classes]),
            ("Number of affective words", [str(cv[c]["affective_word_count"]) for c in classes]),
            ("Percentage of affective words", [f"{100 * cv[c]['affective_fraction']:.2f}%" for c in classes]),
        ]
        out += ["", _grid("Vocabulary use per class", classes, table)]
        occ = report["category_occurrence"]
        cats = list(next(iter(occ.values())).keys()) if occ else []
        table = [(cat, [f"{100 * occ[c][cat]['fraction_of_tokens']:.2f}%" for c in classes]) for cat in cats]
        out += ["", _grid("Affective category occurrence", classes, table)]
    return "\n".join(out) + "\n"


def _grid(title: str, classes: list[str], rows: list[tuple[str, list[str]]]) -> str:
    width = max([len(r[0]) for r in rows] + [8])
    colw = max([len(c) for c in classes] + [10])
    lines = [title, f"{'':<{width}}  " + "  ".join(f"{c:>{colw}}" for c in classes)]
    for name, values in rows:
        lines.append(f"{name:<{width}}  " + "  ".join(f"{v:>{colw}}" for v in values))
    return "\n".join(lines)

