"""Hierarchical attention network variants: HAN, HAN+L, HAN+S, HAN+L+S."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .corpus import PAD, Label, Session, Vocabulary
from .lexicon import LexiconStack, context_matrix
from .nn import (
    AttnParams,
    GruParams,
    ParamGroup,
    attention_backward,
    attention_forward,
    bigru_backward,
    bigru_forward,
    check_finite,
    cross_entropy,
    dense,
    dropout,
    softmax,
)

CHECKPOINT_FORMAT = "han-affect-checkpoint"
CHECKPOINT_VERSION = 1

VARIANTS = {
    "han": (False, False),
    "han_l": (True, False),
    "han_s": (False, True),
    "han_ls": (True, True),
}


class ModelError(ValueError):
    pass


@dataclass
class HanConfig:
    conditioning: bool = False
    summary: bool = False
    hidden: int = 300
    attn_dim: int = 300
    dropout: float = 0.2
    context_dim: int = 0
    classes: int = 2
    embed_dim: int = 300
    max_turn_tokens: int = 200
    max_turns: int = 400
    train_embeddings: bool = False
    # "identity" feeds embeddings straight to word attention (test harness only)
    word_encoder: str = "bigru"

    def __post_init__(self) -> None:
        if self.conditioning != (self.context_dim > 0):
            raise ModelError("conditioning must be enabled exactly when context_dim > 0")
        if self.word_encoder not in ("bigru", "identity"):
            raise ModelError(f"unknown word_encoder {self.word_encoder!r}")
        for name in ("hidden", "attn_dim", "classes", "embed_dim", "max_turn_tokens", "max_turns"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must lie in [0, 1)")

    @classmethod
    def for_variant(cls, variant: str, context_dim: int = 0, **kwargs: Any) -> "HanConfig":
        try:
            cond, summ = VARIANTS[variant]
        except KeyError:
            raise ModelError(f"unknown HAN variant {variant!r}") from None
        return cls(conditioning=cond, summary=summ, context_dim=context_dim if cond else 0, **kwargs)

    @property
    def word_state_dim(self) -> int:
        return 2 * self.hidden if self.word_encoder == "bigru" else self.embed_dim

    @property
    def turn_input_dim(self) -> int:
        """Width of each turn representation t_k."""
        return self.word_state_dim + self.context_dim

    @property
    def classifier_input_dim(self) -> int:
        return 2 * self.hidden + (self.turn_input_dim if self.summary else 0)


@dataclass
class HanParams(ParamGroup):
    embedding: np.ndarray
    word_fwd: GruParams
    word_bwd: GruParams
    word_attn: AttnParams
    turn_fwd: GruParams
    turn_bwd: GruParams
    turn_attn: AttnParams
    W_c: np.ndarray
    b_c: np.ndarray

    def trainable(self, config: HanConfig) -> dict[str, np.ndarray]:
        named = dict(self.named())
        if not config.train_embeddings:
            del named["embedding"]
        if config.word_encoder != "bigru":
            named = {k: v for k, v in named.items() if not k.startswith(("word_fwd.", "word_bwd."))}
        return named


def init_params(config: HanConfig, embedding: np.ndarray, rng: np.random.Generator) -> HanParams:
    if embedding.shape[1] != config.embed_dim:
        raise ModelError(f"embedding dim {embedding.shape[1]} != config.embed_dim {config.embed_dim}")
    H = config.hidden
    M = config.turn_input_dim
    F = config.classifier_input_dim
    bound = np.sqrt(6.0 / (F + config.classes))
    return HanParams(
        embedding=embedding.copy(),
        word_fwd=GruParams.init(config.embed_dim, H, rng),
        word_bwd=GruParams.init(config.embed_dim, H, rng),
        word_attn=AttnParams.init(M, config.attn_dim, rng),
        turn_fwd=GruParams.init(M, H, rng),
        turn_bwd=GruParams.init(M, H, rng),
        turn_attn=AttnParams.init(2 * H, config.attn_dim, rng),
        W_c=rng.uniform(-bound, bound, size=(config.classes, F)),
        b_c=np.zeros(config.classes),
    )


def zero_params(config: HanConfig, embedding: np.ndarray) -> HanParams:
    H = config.hidden
    M = config.turn_input_dim
    return HanParams(
        embedding=embedding.copy(),
        word_fwd=GruParams.zeros(config.embed_dim, H),
        word_bwd=GruParams.zeros(config.embed_dim, H),
        word_attn=AttnParams.zeros(M, config.attn_dim),
        turn_fwd=GruParams.zeros(M, H),
        turn_bwd=GruParams.zeros(M, H),
        turn_attn=AttnParams.zeros(2 * H, config.attn_dim),
        W_c=np.zeros((config.classes, config.classifier_input_dim)),
        b_c=np.zeros(config.classes),
    )


# ---------------------------------------------------------------------------
# Encoding sessions into padded index arrays
# ---------------------------------------------------------------------------


@dataclass
class EncodedSession:
    id: str
    ids: np.ndarray  # (rows, T) token indices; the summary, if any, is the last row
    lengths: np.ndarray
    n_turns: int
    context: np.ndarray | None  # (rows, T, L)
    label: int | None

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.ids.shape[1])[None, :] < self.lengths[:, None]


def encode_session(
    session: Session, vocab: Vocabulary, config: HanConfig, stack: LexiconStack | None = None
) -> EncodedSession:
    rows = [list(t.tokens[: config.max_turn_tokens]) for t in session.turns[: config.max_turns]]
    if not rows:
        raise ModelError(f"session {session.id!r} is empty")
    n_turns = len(rows)
    if config.summary:
        if not session.summary:
            raise ModelError(f"session {session.id!r} has no summary but the model uses summaries")
        rows.append(list(session.summary[: config.max_turn_tokens]))
    T = max(len(r) for r in rows)
    ids = np.full((len(rows), T), PAD, dtype=np.intp)
    lengths = np.array([len(r) for r in rows], dtype=np.intp)
    for i, r in enumerate(rows):
        ids[i, : len(r)] = vocab.encode(r)
    context = None
    if config.conditioning:
        if stack is None or stack.total_dim != config.context_dim:
            raise ModelError("conditioning needs a lexicon stack with total_dim == config.context_dim")
        context = np.zeros((len(rows), T, stack.total_dim))
        for i, r in enumerate(rows):
            context[i, : len(r)] = context_matrix(stack, r)
    label = None if session.label is None else int(session.label)
    return EncodedSession(session.id, ids, lengths, n_turns, context, label)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardTrace:
    logits: np.ndarray
    word_attention: list[np.ndarray]
    turn_attention: np.ndarray
    turn_reps: np.ndarray  # t_k, one row per turn
    turn_states: np.ndarray  # u_k, turn-level encoder states that r pools
    session_rep: np.ndarray  # r
    summary_rep: np.ndarray | None  # o_t
    word_states: np.ndarray  # rows attended at word level, (rows, T, M)
    word_mask: np.ndarray
    padded_word_attention: np.ndarray  # (rows, T), zeros on padding
    _cache: dict = field(default_factory=dict, repr=False)


def forward(
    enc: EncodedSession,
    params: HanParams,
    config: HanConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    K = enc.n_turns
    mask = enc.mask
    E = params.embedding[enc.ids]
    if config.word_encoder == "bigru":
        Hw, c_word = bigru_forward(E, enc.lengths, params.word_fwd, params.word_bwd)
    else:
        Hw, c_word = E, None
    Hw_d, keep_w = dropout(Hw, config.dropout, rng, train_mode)
    Hc = np.concatenate([Hw_d, enc.context], axis=-1) if config.conditioning else Hw_d
    alpha_w, pooled, c_wattn = attention_forward(Hc, params.word_attn, mask)

    t = pooled[:K]
    U, c_turn = bigru_forward(t[None], np.array([K]), params.turn_fwd, params.turn_bwd)
    U_d, keep_u = dropout(U, config.dropout, rng, train_mode)
    tau, r, c_tattn = attention_forward(U_d, params.turn_attn)
    r = r[0]

    o_t = pooled[K] if config.summary else None
    feat = np.concatenate([o_t, r]) if config.summary else r
    logits = check_finite(dense(feat, params.W_c, params.b_c), "logits")
    return ForwardTrace(
        logits=logits,
        word_attention=[alpha_w[i, : enc.lengths[i]] for i in range(K)],
        turn_attention=tau[0],
        turn_reps=t,
        turn_states=U_d[0],
        session_rep=r,
        summary_rep=o_t,
        word_states=Hc,
        word_mask=mask,
        padded_word_attention=alpha_w,
        _cache=dict(
            enc=enc, pooled_shape=pooled.shape, c_word=c_word, keep_w=keep_w, c_wattn=c_wattn,
            c_turn=c_turn, keep_u=keep_u, c_tattn=c_tattn, feat=feat,
        ),
    )


def class_weight_vector(labels: list[int], classes: int = 2) -> np.ndarray:
    """Inverse-frequency weights n / (classes * n_c); absent classes get weight 1."""
    counts = np.bincount(np.asarray(labels, dtype=int), minlength=classes).astype(float)
    n = counts.sum()
    return np.where(counts > 0, n / (classes * np.maximum(counts, 1)), 1.0)


def loss(trace: ForwardTrace, label: int, class_weights: np.ndarray | None = None) -> float:
    w = 1.0 if class_weights is None else float(class_weights[label])
    return w * cross_entropy(softmax(trace.logits), label)


def predict(trace: ForwardTrace) -> Label:
    # argmax returns the first maximum, so a tie resolves to NOT_DEPRESSED
    return Label(int(np.argmax(trace.logits)))


def backward(
    trace: ForwardTrace,
    label: int,
    params: HanParams,
    config: HanConfig,
    class_weights: np.ndarray | None = None,
) -> HanParams:
    """Gradients of :func:`loss` with respect to every parameter."""
    c = trace._cache
    enc: EncodedSession = c["enc"]
    K = enc.n_turns
    H = config.hidden
    w = 1.0 if class_weights is None else float(class_weights[label])

    g = _grad_container(params, config)
    dlogits = softmax(trace.logits)
    dlogits[label] -= 1.0
    dlogits *= w
    g.W_c += np.outer(dlogits, c["feat"])
    g.b_c += dlogits
    dfeat = dlogits @ params.W_c

    dpooled = np.zeros(c["pooled_shape"])
    if config.summary:
        dpooled[K] = dfeat[: config.turn_input_dim]
    dr = dfeat[-2 * H :]
    dU = attention_backward(dr[None], c["c_tattn"], params.turn_attn, g.turn_attn)
    if c["keep_u"] is not None:
        dU = dU * c["keep_u"]
    dpooled[:K] += bigru_backward(dU, c["c_turn"], params.turn_fwd, params.turn_bwd, g.turn_fwd, g.turn_bwd)[0]

    dHc = attention_backward(dpooled, c["c_wattn"], params.word_attn, g.word_attn)
    dHw = dHc[..., : config.word_state_dim]
    if c["keep_w"] is not None:
        dHw = dHw * c["keep_w"]
    if config.word_encoder == "bigru":
        dE = bigru_backward(dHw, c["c_word"], params.word_fwd, params.word_bwd, g.word_fwd, g.word_bwd)
    else:
        dE = dHw
    if config.train_embeddings:
        np.add.at(g.embedding, enc.ids, dE)
        g.embedding[PAD] = 0.0
    return g


def _grad_container(params: HanParams, config: HanConfig) -> HanParams:
    emb = params.embedding
    params.embedding = np.zeros((0, 0)) if not config.train_embeddings else emb
    try:
        g = params.zeros_like()
    finally:
        params.embedding = emb
    return g


def loss_and_grads(
    enc: EncodedSession,
    params: HanParams,
    config: HanConfig,
    class_weights: np.ndarray | None = None,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, HanParams]:
    if enc.label is None:
        raise ModelError(f"session {enc.id!r} has no label")
    trace = forward(enc, params, config, train_mode, rng)
    value = loss(trace, enc.label, class_weights)
    if not np.isfinite(value):
        raise FloatingPointError(f"non-finite loss on session {enc.id!r}")
    return value, backward(trace, enc.label, params, config, class_weights)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, params: HanParams, config: HanConfig, vocab: Vocabulary, extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "vocab": list(vocab.words),
        "params": {name: {"shape": list(a.shape), "data": a.ravel().tolist()} for name, a in params.named()},
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[HanParams, HanConfig, Vocabulary, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
    config = HanConfig(**doc["config"])
    vocab = Vocabulary.from_tokens(doc["vocab"])
    arrays = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
    params = zero_params(config, arrays["embedding"])
    for name, a in params.named():
        if name not in arrays or arrays[name].shape != a.shape:
            raise ModelError(f"{path}: parameter {name} missing or misshaped")
        a[...] = arrays[name]
    return params, config, vocab, doc.get("extra", {})
