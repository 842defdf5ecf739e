"""Tf-Idf features with a linear SVM trained by stochastic subgradient descent."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Label, Session


def session_tokens(session: Session) -> list[str]:
    return [tok for turn in session.turns for tok in turn.tokens]


@dataclass
class TfIdfModel:
    vocab: dict[str, int]
    df: np.ndarray
    idf: np.ndarray
    n_docs: int


def tfidf_fit(corpus: Sequence[Session]) -> TfIdfModel:
    """Smoothed idf: ln((1 + N) / (1 + df)) + 1."""
    if not corpus:
        raise ValueError("cannot fit tf-idf on an empty corpus")
    df_counts: Counter[str] = Counter()
    for s in corpus:
        df_counts.update(set(session_tokens(s)))
    terms = sorted(df_counts)
    vocab = {t: i for i, t in enumerate(terms)}
    df = np.array([df_counts[t] for t in terms], dtype=float)
    n = len(corpus)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    return TfIdfModel(vocab, df, idf, n)


def tfidf_transform(model: TfIdfModel, session: Session) -> sp.csr_matrix:
    """Raw-count tf times idf, L2-normalised; tokens unseen at fit time are ignored."""
    counts = Counter(t for t in session_tokens(session) if t in model.vocab)
    cols = np.array(sorted(model.vocab[t] for t in counts), dtype=np.intp)
    inv = {model.vocab[t]: c for t, c in counts.items()}
    vals = np.array([inv[c] for c in cols], dtype=float) * model.idf[cols]
    norm = np.linalg.norm(vals)
    if norm > 0:
        vals /= norm
    return sp.csr_matrix((vals, cols, [0, len(cols)]), shape=(1, len(model.vocab)))


def tfidf_transform_many(model: TfIdfModel, corpus: Sequence[Session]) -> sp.csr_matrix:
    if not corpus:
        return sp.csr_matrix((0, len(model.vocab)))
    return sp.vstack([tfidf_transform(model, s) for s in corpus], format="csr")


@dataclass
class LinearSvm:
    w: np.ndarray
    b: float
    C: float
    # objective of the kept iterate after each epoch
    objectives: list[float] = field(default_factory=list)

    def decision(self, X) -> np.ndarray:
        return np.asarray(X @ self.w).ravel() + self.b


def _signed(labels: Sequence[int]) -> np.ndarray:
    y = np.asarray(labels, dtype=int)
    return np.where(y == int(Label.DEPRESSED), 1.0, -1.0)


def svm_objective(model: LinearSvm, X, labels: Sequence[int]) -> float:
    """(1/2)|w|^2 + C * sum of hinge losses; the bias counts as a weight."""
    y = _signed(labels)
    hinge = np.maximum(0.0, 1.0 - y * model.decision(X))
    return 0.5 * (float(model.w @ model.w) + model.b**2) + model.C * float(hinge.sum())


def svm_train(X, labels: Sequence[int], C: float = 1.0, epochs: int = 20, seed: int = 0) -> LinearSvm:
    """Pegasos-style training with step 1/(lambda t), lambda = 1/(C n).

    The bias is handled as a weight on a constant feature, so it is
    regularised together with w. Subgradient steps do not decrease the
    objective monotonically, so the best end-of-epoch iterate is kept.
    """
    y = _signed(labels)
    if len(np.unique(y)) < 2:
        raise ValueError("svm_train needs both classes in the training set")
    X = sp.csr_matrix(X, dtype=float)
    n, d = X.shape
    lam = 1.0 / (C * n)
    w = np.zeros(d + 1)
    rng = np.random.default_rng(seed)
    indptr, indices, data = X.indptr, X.indices, X.data
    radius = 1.0 / np.sqrt(lam)
    t = 0
    best = LinearSvm(w[:d].copy(), float(w[d]), C)
    best_obj = svm_objective(best, X, labels)
    history = []
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            cols = indices[indptr[i] : indptr[i + 1]]
            vals = data[indptr[i] : indptr[i + 1]]
            margin = y[i] * (w[cols] @ vals + w[d])
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w[cols] += eta * y[i] * vals
                w[d] += eta * y[i]
            norm = np.linalg.norm(w)
            if norm > radius:
                w *= radius / norm
        current = LinearSvm(w[:d].copy(), float(w[d]), C)
        obj = svm_objective(current, X, labels)
        if obj < best_obj:
            best, best_obj = current, obj
        history.append(best_obj)
    best.objectives = history
    return best


def svm_predict(model: LinearSvm, X) -> np.ndarray:
    """Positive side is DEPRESSED; a zero score falls to NOT_DEPRESSED."""
    scores = model.decision(X)
    return np.where(scores > 0, int(Label.DEPRESSED), int(Label.NOT_DEPRESSED))
