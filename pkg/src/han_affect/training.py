"""Training loop, early stopping, stratified k-fold CV and classification metrics."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baseline
from .corpus import (
    Label,
    Session,
    Vocabulary,
    View,
    build_vocabulary,
    load_embeddings,
    random_embeddings,
    select_view,
)
from .lexicon import LexiconStack
from .model import (
    VARIANTS,
    EncodedSession,
    HanConfig,
    HanParams,
    class_weight_vector,
    encode_session,
    forward,
    init_params,
    loss,
    loss_and_grads,
    predict,
)
from .nn import Adam

log = logging.getLogger(__name__)

MODELS = ("svm", *VARIANTS)


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    model: str = "han"
    view: str = "both"
    max_epochs: int = 40
    lr: float = 1e-3
    dropout: float = 0.2
    patience: int = 5
    seed: int = 0
    folds: int = 5
    hidden: int = 300
    attn_dim: int = 300
    embed_dim: int = 300
    min_count: int = 1
    class_weights: bool = True
    train_embeddings: bool = False
    max_turn_tokens: int = 200
    max_turns: int = 400
    svm_c: float = 1.0
    svm_epochs: int = 20

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model: expected one of {MODELS}, got {self.model!r}")
        try:
            View(self.view)
        except ValueError:
            raise ConfigError(f"view: expected client, therapist or both, got {self.view!r}") from None
        positive = ("max_epochs", "patience", "hidden", "attn_dim", "embed_dim", "min_count",
                    "max_turn_tokens", "max_turns", "svm_epochs")
        for name in positive:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name}: expected a positive integer, got {value!r}")
        if isinstance(self.folds, bool) or not isinstance(self.folds, int) or self.folds < 2:
            raise ConfigError(f"folds: expected an integer >= 2, got {self.folds!r}")
        if not (isinstance(self.lr, (int, float)) and self.lr > 0):
            raise ConfigError(f"lr: expected a positive number, got {self.lr!r}")
        if not (isinstance(self.dropout, (int, float)) and 0 <= self.dropout < 1):
            raise ConfigError(f"dropout: expected a number in [0, 1), got {self.dropout!r}")
        if not (isinstance(self.svm_c, (int, float)) and self.svm_c > 0):
            raise ConfigError(f"svm_c: expected a positive number, got {self.svm_c!r}")

    def han_config(self, context_dim: int = 0) -> HanConfig:
        return HanConfig.for_variant(
            self.model,
            context_dim=context_dim,
            hidden=self.hidden,
            attn_dim=self.attn_dim,
            dropout=self.dropout,
            embed_dim=self.embed_dim,
            max_turn_tokens=self.max_turn_tokens,
            max_turns=self.max_turns,
            train_embeddings=self.train_embeddings,
        )


def config_hash(obj: dict) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class Metrics:
    confusion: list[list[int]]  # rows: true class, columns: predicted class
    precision: list[float]
    recall: list[float]
    f1: list[float]
    macro_f1: float
    uar: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(preds: Sequence[int], labels: Sequence[int], classes: int = 2) -> Metrics:
    if len(preds) != len(labels):
        raise ValueError(f"{len(preds)} predictions for {len(labels)} labels")
    if not labels:
        raise ValueError("cannot evaluate an empty prediction set")
    cm = np.zeros((classes, classes), dtype=int)
    np.add.at(cm, (np.asarray(labels, dtype=int), np.asarray(preds, dtype=int)), 1)
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0)
    true_tot = cm.sum(axis=1)
    precision = np.divide(tp, pred_tot, out=np.zeros(classes), where=pred_tot > 0)
    recall = np.divide(tp, true_tot, out=np.zeros(classes), where=true_tot > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(classes), where=denom > 0)
    return Metrics(
        confusion=cm.tolist(),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        macro_f1=float(f1.mean()),
        uar=float(recall.mean()),
    )


# ---------------------------------------------------------------------------
# Fold planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fold:
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]


def kfold_split(corpus: Sequence[Session], k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified k-fold plan: every session is validated exactly once."""
    if k < 2:
        raise ValueError("k must be at least 2")
    ids = [s.id for s in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("session ids must be unique")
    by_class: dict[int, list[str]] = {}
    for s in corpus:
        if s.label is None:
            raise ValueError(f"session {s.id!r} has no label")
        by_class.setdefault(int(s.label), []).append(s.id)
    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    offset = 0
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < k:
            raise ValueError(f"class {Label(label).wire} has {len(members)} samples, fewer than k={k}")
        for j, i in enumerate(rng.permutation(len(members))):
            assignment[members[i]] = (offset + j) % k
        offset += len(members)
    folds = []
    for f in range(k):
        val = tuple(i for i in ids if assignment[i] == f)
        train = tuple(i for i in ids if assignment[i] != f)
        folds.append(Fold(train, val))
    return FoldPlan(tuple(folds))


# ---------------------------------------------------------------------------
# HAN training
# ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


class EarlyStopping:
    """Keeps the snapshot with the lowest validation loss."""

    def __init__(self, patience: int) -> None:
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.best_state = None
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float, snapshot=None) -> bool:
        """Record an epoch; returns True when training should stop."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_state = snapshot() if callable(snapshot) else snapshot
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def mean_loss(data: Sequence[EncodedSession], params: HanParams, config: HanConfig, class_weights=None) -> float:
    return float(np.mean([loss(forward(e, params, config), e.label, class_weights) for e in data]))


def train_one(
    params: HanParams,
    config: HanConfig,
    train: Sequence[EncodedSession],
    val: Sequence[EncodedSession],
    tc: TrainConfig,
    seed: int | None = None,
) -> tuple[HanParams, list[EpochRecord], int]:
    """Per-sample Adam training with early stopping on validation loss.

    Returns the best parameters, the epoch history and the best epoch.
    ``params`` is updated in place and ends at the last trained epoch.
    """
    if {e.id for e in train} & {e.id for e in val}:
        raise TrainingError("train and validation sets overlap")
    seed = tc.seed if seed is None else seed
    cw = class_weight_vector([e.label for e in train], config.classes) if tc.class_weights else None
    trainable = params.trainable(config)
    opt = Adam(trainable, lr=tc.lr)
    stopper = EarlyStopping(tc.patience)
    history = []
    for epoch in range(1, tc.max_epochs + 1):
        rng = np.random.default_rng([seed, epoch])
        total = 0.0
        for i in rng.permutation(len(train)):
            try:
                value, grads = loss_and_grads(train[i], params, config, cw, True, rng)
                opt.step(grads.trainable(config))
            except FloatingPointError as e:
                raise TrainingError(f"epoch {epoch}, session {train[i].id!r}: {e}") from None
            total += value
        val_loss = mean_loss(val, params, config, cw)
        if not np.isfinite(val_loss):
            raise TrainingError(f"epoch {epoch}: non-finite validation loss")
        history.append(EpochRecord(epoch, total / len(train), val_loss))
        log.debug("epoch %d train %.4f val %.4f", epoch, total / len(train), val_loss)
        if stopper.update(epoch, val_loss, params.copy):
            break
    return stopper.best_state, history, stopper.best_epoch


# ---------------------------------------------------------------------------
# Per-fold pipeline
# ---------------------------------------------------------------------------


@dataclass
class PreparedFold:
    vocab: Vocabulary
    config: HanConfig
    embedding: np.ndarray
    embedding_coverage: float
    train: list[EncodedSession]
    val: list[EncodedSession]


def prepare_fold(
    train: Sequence[Session],
    val: Sequence[Session],
    tc: TrainConfig,
    stack: LexiconStack | None = None,
    embeddings_path: str | Path | None = None,
    seed: int = 0,
) -> PreparedFold:
    """Vocabulary and embeddings come from the training split only."""
    needs_stack = VARIANTS[tc.model][0]
    if needs_stack and stack is None:
        raise ConfigError(f"model {tc.model} needs a lexicon stack")
    config = tc.han_config(stack.total_dim if needs_stack else 0)
    vocab = build_vocabulary(train, tc.min_count)
    if embeddings_path is None:
        table = random_embeddings(vocab, tc.embed_dim, seed, tc.train_embeddings)
    else:
        table = load_embeddings(embeddings_path, vocab, tc.embed_dim, seed, tc.train_embeddings)
    st = stack if needs_stack else None
    return PreparedFold(
        vocab,
        config,
        table.matrix,
        table.coverage,
        [encode_session(s, vocab, config, st) for s in train],
        [encode_session(s, vocab, config, st) for s in val],
    )


def fit_han(
    train: Sequence[Session],
    val: Sequence[Session],
    tc: TrainConfig,
    stack: LexiconStack | None = None,
    embeddings_path: str | Path | None = None,
    seed: int = 0,
) -> dict:
    fold = prepare_fold(train, val, tc, stack, embeddings_path, seed)
    params = init_params(fold.config, fold.embedding, np.random.default_rng(seed))
    best, history, best_epoch = train_one(params, fold.config, fold.train, fold.val, tc, seed)
    preds = [int(predict(forward(e, best, fold.config))) for e in fold.val]
    return {
        "params": best,
        "config": fold.config,
        "vocab": fold.vocab,
        "history": history,
        "best_epoch": best_epoch,
        "embedding_coverage": fold.embedding_coverage,
        "preds": preds,
        "metrics": evaluate(preds, [e.label for e in fold.val]),
    }


def fit_svm(train: Sequence[Session], val: Sequence[Session], tc: TrainConfig, seed: int = 0) -> dict:
    tfidf = baseline.tfidf_fit(train)
    X_train = baseline.tfidf_transform_many(tfidf, train)
    svm = baseline.svm_train(X_train, [int(s.label) for s in train], tc.svm_c, tc.svm_epochs, seed)
    preds = [int(p) for p in baseline.svm_predict(svm, baseline.tfidf_transform_many(tfidf, val))]
    return {
        "tfidf": tfidf,
        "svm": svm,
        "preds": preds,
        "metrics": evaluate(preds, [int(s.label) for s in val]),
    }


def _mean_std(values: list[float]) -> dict:
    a = np.asarray(values, dtype=float)
    return {"mean": float(a.mean()), "std": float(a.std())}


def run_cv(
    corpus: Sequence[Session],
    tc: TrainConfig,
    stack: LexiconStack | None = None,
    embeddings_path: str | Path | None = None,
) -> dict:
    """k-fold cross-validation; returns a JSON-serialisable, deterministic report."""
    sessions = [select_view(s, tc.view) for s in corpus]
    by_id = {s.id: s for s in sessions}
    plan = kfold_split(sessions, tc.folds, tc.seed)
    rows = []
    for f, fold in enumerate(plan.folds):
        train = [by_id[i] for i in fold.train_ids]
        val = [by_id[i] for i in fold.val_ids]
        seed = derive_seed(tc.seed, f)
        row = {"fold": f, "n_train": len(train), "n_val": len(val)}
        if tc.model == "svm":
            result = fit_svm(train, val, tc, seed)
        else:
            result = fit_han(train, val, tc, stack, embeddings_path, seed)
            row["best_epoch"] = result["best_epoch"]
            row["epochs_run"] = len(result["history"])
            row["vocab_size"] = len(result["vocab"])
        row["metrics"] = result["metrics"].to_dict()
        log.info("fold %d: macro-F1 %.3f UAR %.3f", f, row["metrics"]["macro_f1"], row["metrics"]["uar"])
        rows.append(row)
    cfg = asdict(tc)
    return {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": tc.seed,
        "model": tc.model,
        "view": tc.view,
        "folds": rows,
        "aggregate": {
            "macro_f1": _mean_std([r["metrics"]["macro_f1"] for r in rows]),
            "uar": _mean_std([r["metrics"]["uar"] for r in rows]),
        },
    }


def format_cv_table(report: dict) -> str:
    lines = [f"model={report['model']} view={report['view']} seed={report['seed']} config={report['config_hash']}"]
    lines.append(f"{'fold':>6}  {'macro-F1':>8}  {'UAR':>6}")
    for r in report["folds"]:
        lines.append(f"{r['fold']:>6}  {r['metrics']['macro_f1']:>8.3f}  {r['metrics']['uar']:>6.3f}")
    agg = report["aggregate"]
    lines.append(
        f"{'mean':>6}  {agg['macro_f1']['mean']:>8.3f}  {agg['uar']['mean']:>6.3f}"
        f"   (std {agg['macro_f1']['std']:.3f} / {agg['uar']['std']:.3f})"
    )
    return "\n".join(lines) + "\n"
