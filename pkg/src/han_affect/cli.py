"""Command-line entry point: ``han-affect {synth,analyze,train,cv,eval,gradcheck}``.

Each command reads an optional JSON config; command-line flags override it,
and ``HAN_AFFECT_SEED`` overrides the configured seed (a ``--seed`` flag still
wins). Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import analysis, model, synth
from .corpus import CorpusError, Speaker, View, build_vocabulary, random_embeddings, read_sessions, select_view
from .lexicon import LexiconError, LexiconStack, load_lexicon, stack_lexica
from .model import ModelError, encode_session, forward, init_params, loss_and_grads, predict
from .nn import grad_check
from .training import (
    ConfigError,
    TrainConfig,
    TrainingError,
    config_hash,
    evaluate,
    fit_han,
    fit_svm,
    format_cv_table,
    kfold_split,
    run_cv,
)

log = logging.getLogger("han_affect")

GRADCHECK_TOLERANCE = 1e-4
_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    corpus: str | None = None
    embeddings: str | None = None
    lexica: list[str] = field(default_factory=list)
    scale_lexica: bool = False
    output_dir: str = "runs"
    phq8_threshold: int = 10
    speakers: str = "client"
    categories: dict[str, list[str]] = field(default_factory=lambda: {k: list(v) for k, v in synth.CATEGORY_COLUMNS.items()})

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        d = dict(d)
        train_kwargs = {k: d.pop(k) for k in list(d) if k in _TRAIN_FIELDS}
        known = {f.name for f in fields(cls)} - {"train"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        cfg = cls(train=TrainConfig(**train_kwargs), **d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.lexica, list) or not all(isinstance(p, str) for p in self.lexica):
            raise ConfigError("lexica: expected a list of file paths")
        if self.train.model in ("han_l", "han_ls") and not self.lexica:
            raise ConfigError(f"lexica: model {self.train.model} needs at least one lexicon path")
        for p in self.lexica:
            if not Path(p).is_file():
                raise ConfigError(f"lexica: file not found: {p}")
        if self.corpus is not None and not Path(self.corpus).is_file():
            raise ConfigError(f"corpus: file not found: {self.corpus}")
        if self.embeddings is not None and not Path(self.embeddings).is_file():
            raise ConfigError(f"embeddings: file not found: {self.embeddings}")
        if self.speakers not in ("client", "therapist", "both"):
            raise ConfigError(f"speakers: expected client, therapist or both, got {self.speakers!r}")
        for name, pair in self.categories.items():
            if not (isinstance(pair, (list, tuple)) and len(pair) == 2 and all(isinstance(x, str) for x in pair)):
                raise ConfigError(f"categories.{name}: expected [lexicon, category]")

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "train"}
        d.update(asdict(self.train))
        return d

    def require_corpus(self) -> str:
        if self.corpus is None:
            raise ConfigError("corpus: a corpus path is required for this command")
        return self.corpus

    def speaker_set(self) -> tuple[Speaker, ...]:
        return tuple(Speaker) if self.speakers == "both" else (Speaker(self.speakers),)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _load_stack(cfg: RunConfig) -> LexiconStack | None:
    if not cfg.lexica:
        return None
    return stack_lexica([load_lexicon(p) for p in cfg.lexica], scale=cfg.scale_lexica)


def _load_corpus(cfg: RunConfig, require_labels: bool = True):
    return read_sessions(cfg.require_corpus(), require_labels=require_labels, phq8_threshold=cfg.phq8_threshold)


def _stamp(report: dict, cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    return {"config": d, "config_hash": config_hash(d), "seed": cfg.train.seed, **report}


def _emit(report: dict, text: str, out_dir: Path | None, stem: str) -> None:
    payload = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{stem}.json").write_text(payload, encoding="utf-8")
        (out_dir / f"{stem}.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    sys.stdout.write(payload)


def _write_timing(out_dir: Path, stem: str, seconds: float) -> None:
    # wall-clock lives beside the report so the report itself stays reproducible
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.timing.json").write_text(json.dumps({"wall_clock_seconds": seconds}) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args: argparse.Namespace) -> int:
    spec_dict = json.loads(Path(args.spec).read_text(encoding="utf-8")) if args.spec else {}
    if args.seed is not None or "HAN_AFFECT_SEED" in os.environ:
        spec_dict["seed"] = cfg.train.seed
    try:
        spec = synth.SynthSpec.from_dict(spec_dict)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"synth spec: {e}") from None
    out = Path(args.out or cfg.output_dir)
    paths = synth.write_corpus(synth.generate(spec), out)
    sys.stdout.write(json.dumps(paths, indent=2) + "\n")
    return 0


def cmd_analyze(cfg: RunConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg, require_labels=False)
    stack = _load_stack(cfg)
    cats = {k: tuple(v) for k, v in cfg.categories.items()} if stack is not None else {}
    report = _stamp(analysis.analysis_report(corpus, stack, cats, cfg.speaker_set()), cfg)
    _emit(report, analysis.format_report(report), Path(args.out) if args.out else None, "analysis")
    return 0


def cmd_cv(cfg: RunConfig, args: argparse.Namespace) -> int:
    corpus = _load_corpus(cfg)
    start = time.perf_counter()
    report = run_cv(corpus, cfg.train, _load_stack(cfg), cfg.embeddings)
    elapsed = time.perf_counter() - start
    report = _stamp({k: v for k, v in report.items() if k not in ("config", "config_hash", "seed")}, cfg)
    out = Path(args.out or cfg.output_dir)
    _emit(report, format_cv_table(report), out, "cv_report")
    _write_timing(out, "cv_report", elapsed)
    return 0


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    """Train on folds-1 parts of a stratified split, early-stop on the held-out part."""
    tc = cfg.train
    corpus = [select_view(s, tc.view) for s in _load_corpus(cfg)]
    by_id = {s.id: s for s in corpus}
    fold = kfold_split(corpus, tc.folds, tc.seed).folds[0]
    train = [by_id[i] for i in fold.train_ids]
    val = [by_id[i] for i in fold.val_ids]
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if tc.model == "svm":
        result = fit_svm(train, val, tc, tc.seed)
        report = {"model": "svm", "metrics": result["metrics"].to_dict()}
    else:
        result = fit_han(train, val, tc, _load_stack(cfg), cfg.embeddings, tc.seed)
        ckpt = out / "checkpoint.json"
        model.save_checkpoint(ckpt, result["params"], result["config"], result["vocab"], {"lexica": cfg.lexica})
        report = {
            "model": tc.model,
            "checkpoint": str(ckpt),
            "best_epoch": result["best_epoch"],
            "history": [asdict(h) for h in result["history"]],
            "embedding_coverage": result["embedding_coverage"],
            "metrics": result["metrics"].to_dict(),
        }
    _write_timing(out, "train_report", time.perf_counter() - start)
    report = _stamp(report, cfg)
    m = report["metrics"]
    _emit(report, f"{tc.model}: macro-F1 {m['macro_f1']:.3f}  UAR {m['uar']:.3f}\n", out, "train_report")
    return 0


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    params, mcfg, vocab, extra = model.load_checkpoint(args.checkpoint)
    lexica = cfg.lexica or extra.get("lexica", [])
    stack = stack_lexica([load_lexicon(p) for p in lexica], scale=cfg.scale_lexica) if mcfg.conditioning else None
    corpus = [select_view(s, cfg.train.view) for s in _load_corpus(cfg)]
    encoded = [encode_session(s, vocab, mcfg, stack) for s in corpus]
    preds = [int(predict(forward(e, params, mcfg))) for e in encoded]
    metrics = evaluate(preds, [e.label for e in encoded])
    report = _stamp({"checkpoint": str(args.checkpoint), "metrics": metrics.to_dict()}, cfg)
    text = f"macro-F1 {metrics.macro_f1:.3f}  UAR {metrics.uar:.3f}  confusion {metrics.confusion}\n"
    _emit(report, text, Path(args.out) if args.out else None, "eval_report")
    return 0


def toy_gradcheck(seed: int = 0, samples: int = 10) -> float:
    """Max relative gradient error of the full HAN+L+S loss on a 3-session toy corpus."""
    spec = synth.SynthSpec(n_per_class=2, turns=(5, 7), tokens=(3, 6), base_vocab=12, words_per_category=3,
                           topic_vocab=4, summary_tokens=(2, 3), seed=seed)
    toy = synth.generate(spec)
    sessions = toy.sessions[:3]
    stack = stack_lexica(toy.lexica)
    vocab = build_vocabulary(sessions)
    cfg = model.HanConfig.for_variant("han_ls", context_dim=stack.total_dim, hidden=3, attn_dim=4,
                                      embed_dim=5, dropout=0.0, train_embeddings=True)
    rng = np.random.default_rng(seed)
    emb = random_embeddings(vocab, cfg.embed_dim, seed).matrix * 10
    params = init_params(cfg, emb, rng)
    encoded = [encode_session(s, vocab, cfg, stack) for s in sessions]
    weights = model.class_weight_vector([e.label for e in encoded])

    def total_loss() -> float:
        return sum(model.loss(forward(e, params, cfg), e.label, weights) for e in encoded)

    trainable = params.trainable(cfg)
    analytic = {k: np.zeros_like(v) for k, v in trainable.items()}
    for e in encoded:
        _, g = loss_and_grads(e, params, cfg, weights)
        for k, v in g.trainable(cfg).items():
            analytic[k] += v
    return grad_check(total_loss, trainable, analytic, samples=samples, h=1e-5, seed=seed)


def cmd_gradcheck(cfg: RunConfig, args: argparse.Namespace) -> int:
    start = time.perf_counter()
    err = toy_gradcheck(cfg.train.seed, args.samples)
    ok = err < GRADCHECK_TOLERANCE
    report = _stamp({"variant": "han_ls", "max_relative_error": err, "tolerance": GRADCHECK_TOLERANCE, "passed": ok}, cfg)
    text = f"max relative error {err:.3e} ({'ok' if ok else 'FAILED'}, tolerance {GRADCHECK_TOLERANCE:g}, {time.perf_counter() - start:.1f}s)\n"
    _emit(report, text, Path(args.out) if args.out else None, "gradcheck")
    return 0 if ok else 1


COMMANDS = {
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "cv": cmd_cv,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="han-affect", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "synth":
            p.add_argument("--spec", help="JSON SynthSpec overrides")
            continue
        p.add_argument("--corpus")
        p.add_argument("--lexicon", action="append", dest="lexica", help="lexicon TSV (repeatable, in stack order)")
        p.add_argument("--embeddings")
        if name == "analyze":
            p.add_argument("--speakers", choices=["client", "therapist", "both"])
        if name in ("train", "cv", "eval"):
            p.add_argument("--view", choices=[v.value for v in View])
        if name in ("train", "cv"):
            p.add_argument("--model", choices=["svm", *model.VARIANTS])
            p.add_argument("--max-epochs", type=int)
            p.add_argument("--patience", type=int)
            p.add_argument("--folds", type=int)
            p.add_argument("--hidden", type=int)
            p.add_argument("--attn-dim", type=int)
            p.add_argument("--embed-dim", type=int)
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
        if name == "gradcheck":
            p.add_argument("--samples", type=int, default=10, help="coordinates sampled per parameter array")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    d: dict[str, Any] = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"config: cannot read {args.config}: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
    env_seed = os.environ.get("HAN_AFFECT_SEED")
    if env_seed is not None:
        try:
            d["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"HAN_AFFECT_SEED: expected an integer, got {env_seed!r}") from None
    for key in ("seed", "corpus", "lexica", "embeddings", "speakers", "view", "model", "max_epochs",
                "patience", "folds", "hidden", "attn_dim", "embed_dim"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    try:
        return RunConfig.from_dict(d)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as e:
        sys.stderr.write(f"invalid configuration: {e}\n")
        return 2
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        sys.stderr.write(f"invalid configuration: {e}\n")
        return 2
    except (CorpusError, LexiconError, ModelError, TrainingError, ValueError, OSError, FloatingPointError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
