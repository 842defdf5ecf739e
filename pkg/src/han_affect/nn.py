"""Small differentiable core for the hierarchical attention network.

Everything is float64 numpy. Forward functions return a cache object that the
matching ``*_backward`` function consumes; parameter gradients are accumulated
into a zero-initialised parameter container of the same type.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Callable, Iterator, Mapping

import numpy as np

MASK_FILL = -1e9


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class ParamGroup:
    """Mixin for dataclasses whose fields are arrays or nested groups."""

    def named(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for f in fields(self):  # type: ignore[arg-type]
            value = getattr(self, f.name)
            name = f"{prefix}{f.name}"
            if isinstance(value, ParamGroup):
                yield from value.named(name + ".")
            elif isinstance(value, np.ndarray):
                yield name, value

    def zeros_like(self):
        kwargs = {}
        for f in fields(self):  # type: ignore[arg-type]
            value = getattr(self, f.name)
            if isinstance(value, ParamGroup):
                kwargs[f.name] = value.zeros_like()
            elif isinstance(value, np.ndarray):
                kwargs[f.name] = np.zeros_like(value)
            else:
                kwargs[f.name] = value
        return type(self)(**kwargs)

    def copy(self):
        kwargs = {}
        for f in fields(self):  # type: ignore[arg-type]
            value = getattr(self, f.name)
            if isinstance(value, (ParamGroup, np.ndarray)):
                kwargs[f.name] = value.copy()
            else:
                kwargs[f.name] = value
        return type(self)(**kwargs)


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------


@dataclass
class GruParams(ParamGroup):
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def hidden(self) -> int:
        return self.U_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng: np.random.Generator) -> "GruParams":
        k = 1.0 / np.sqrt(hidden)
        w = [_uniform(rng, (hidden, input_dim), k) for _ in range(3)]
        u = [_uniform(rng, (hidden, hidden), k) for _ in range(3)]
        b = [_uniform(rng, (hidden,), k) for _ in range(3)]
        return cls(*w, *u, *b)

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "GruParams":
        w = [np.zeros((hidden, input_dim)) for _ in range(3)]
        u = [np.zeros((hidden, hidden)) for _ in range(3)]
        b = [np.zeros(hidden) for _ in range(3)]
        return cls(*w, *u, *b)

    def validate(self) -> None:
        H, D = self.hidden, self.input_dim
        for name in ("W_z", "W_r", "W_h"):
            if getattr(self, name).shape != (H, D):
                raise ValueError(f"{name} must be {H}x{D}, got {getattr(self, name).shape}")
        for name in ("U_z", "U_r", "U_h"):
            if getattr(self, name).shape != (H, H):
                raise ValueError(f"{name} must be {H}x{H}, got {getattr(self, name).shape}")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (H,):
                raise ValueError(f"{name} must have length {H}, got {getattr(self, name).shape}")


def gru_cell(x: np.ndarray, h_prev: np.ndarray, p: GruParams) -> np.ndarray:
    """One GRU step: h_t = (1 - z) * h_prev + z * tanh(W_h x + U_h (r * h_prev) + b_h)."""
    p.validate()
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape[-1] != p.input_dim or h_prev.shape[-1] != p.hidden:
        raise ValueError(
            f"gru_cell expects x[..., {p.input_dim}] and h[..., {p.hidden}], "
            f"got {x.shape} and {h_prev.shape}"
        )
    z = sigmoid(x @ p.W_z.T + h_prev @ p.U_z.T + p.b_z)
    r = sigmoid(x @ p.W_r.T + h_prev @ p.U_r.T + p.b_r)
    n = np.tanh(x @ p.W_h.T + (r * h_prev) @ p.U_h.T + p.b_h)
    return (1.0 - z) * h_prev + z * n


@dataclass
class _GruCache:
    X: np.ndarray  # (G, B, T, D)
    W: np.ndarray  # (G, 3H, D)
    U_zr: np.ndarray  # (G, 2H, H)
    U_h: np.ndarray  # (G, H, H)
    h_prev: np.ndarray  # (T, G, B, H)
    z: np.ndarray
    r: np.ndarray
    n: np.ndarray


def _stack(ps: list[GruParams]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    W = np.stack([np.concatenate([p.W_z, p.W_r, p.W_h]) for p in ps])
    b = np.stack([np.concatenate([p.b_z, p.b_r, p.b_h]) for p in ps])
    U_zr = np.stack([np.concatenate([p.U_z, p.U_r]) for p in ps])
    U_h = np.stack([p.U_h for p in ps])
    return W, b, U_zr, U_h


def _gru_scan(X: np.ndarray, ps: list[GruParams]) -> tuple[np.ndarray, _GruCache]:
    # G independent GRUs (one per entry of ps) scanned together over X (G, B, T, D).
    G, B, T, D = X.shape
    H = ps[0].hidden
    for p in ps:
        if p.input_dim != D:
            raise ValueError(f"input dim {D} does not match GRU input dim {p.input_dim}")
    W, b, U_zr, U_h = _stack(ps)
    XW = (X.reshape(G, B * T, D) @ W.transpose(0, 2, 1) + b[:, None, :]).reshape(G, B, T, 3 * H)
    U_zr_T = U_zr.transpose(0, 2, 1)
    U_h_T = U_h.transpose(0, 2, 1)

    hs = np.empty((T, G, B, H))
    h_prev = np.empty((T, G, B, H))
    zs = np.empty((T, G, B, H))
    rs = np.empty((T, G, B, H))
    ns = np.empty((T, G, B, H))
    h = np.zeros((G, B, H))
    for t in range(T):
        xw = XW[:, :, t]
        zr = sigmoid(xw[..., : 2 * H] + h @ U_zr_T)
        z = zr[..., :H]
        r = zr[..., H:]
        n = np.tanh(xw[..., 2 * H :] + (r * h) @ U_h_T)
        h_prev[t] = h
        h = h + z * (n - h)
        hs[t] = h
        zs[t] = z
        rs[t] = r
        ns[t] = n
    return hs.transpose(1, 2, 0, 3), _GruCache(X, W, U_zr, U_h, h_prev, zs, rs, ns)


def _gru_scan_backward(dout: np.ndarray, cache: _GruCache, grads: list[GruParams]) -> np.ndarray:
    X = cache.X
    G, B, T, D = X.shape
    H = cache.U_h.shape[-1]
    U_zr, U_h = cache.U_zr, cache.U_h
    dA = np.empty((T, G, B, 3 * H))
    dU_zr = np.zeros_like(U_zr)
    dU_h = np.zeros_like(U_h)
    dh_next = np.zeros((G, B, H))
    dout_t = dout.transpose(2, 0, 1, 3)
    for t in range(T - 1, -1, -1):
        h_prev, z, r, n = cache.h_prev[t], cache.z[t], cache.r[t], cache.n[t]
        dh = dout_t[t] + dh_next
        dz = dh * (n - h_prev)
        da_h = dh * z * (1.0 - n * n)
        dh_prev = dh * (1.0 - z)
        dU_h += da_h.transpose(0, 2, 1) @ (r * h_prev)
        d_rh = da_h @ U_h
        dh_prev += d_rh * r
        da_zr = np.concatenate([dz * z * (1.0 - z), d_rh * h_prev * r * (1.0 - r)], axis=-1)
        dU_zr += da_zr.transpose(0, 2, 1) @ h_prev
        dh_prev += da_zr @ U_zr
        dA[t, ..., : 2 * H] = da_zr
        dA[t, ..., 2 * H :] = da_h
        dh_next = dh_prev
    dA_flat = dA.transpose(1, 2, 0, 3).reshape(G, B * T, 3 * H)
    dW = dA_flat.transpose(0, 2, 1) @ X.reshape(G, B * T, D)
    db = dA_flat.sum(axis=1)
    for gi, g in enumerate(grads):
        g.W_z += dW[gi, :H]
        g.W_r += dW[gi, H : 2 * H]
        g.W_h += dW[gi, 2 * H :]
        g.b_z += db[gi, :H]
        g.b_r += db[gi, H : 2 * H]
        g.b_h += db[gi, 2 * H :]
        g.U_z += dU_zr[gi, :H]
        g.U_r += dU_zr[gi, H:]
        g.U_h += dU_h[gi]
    return (dA_flat @ cache.W).reshape(G, B, T, D)


def gru_sequence(X: np.ndarray, p: GruParams) -> tuple[np.ndarray, _GruCache]:
    """Run a GRU over a batch ``X`` of shape (B, T, D) from zero state."""
    out, cache = _gru_scan(X[None], [p])
    return out[0], cache


def gru_sequence_backward(dout: np.ndarray, cache: _GruCache, p: GruParams, grads: GruParams) -> np.ndarray:
    """Backprop through :func:`gru_sequence`; accumulates into ``grads`` and returns dX."""
    return _gru_scan_backward(dout[None], cache, [grads])[0]


def _reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    # Reverses each row within its valid length; padding stays at the end.
    t = np.arange(T)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


@dataclass
class _BiGruCache:
    rev: np.ndarray
    scan: _GruCache


def bigru_forward(
    X: np.ndarray, lengths: np.ndarray, fwd: GruParams, bwd: GruParams
) -> tuple[np.ndarray, _BiGruCache]:
    """Bidirectional GRU over right-padded batch (B, T, D); returns (B, T, 2H)."""
    B, T, _ = X.shape
    if T == 0:
        raise ValueError("bigru_encode needs at least one time step")
    rev = _reverse_index(np.asarray(lengths), T)
    rows = np.arange(B)[:, None]
    out, cache = _gru_scan(np.stack([X, X[rows, rev]]), [fwd, bwd])
    return np.concatenate([out[0], out[1][rows, rev]], axis=-1), _BiGruCache(rev, cache)


def bigru_backward(
    dout: np.ndarray,
    cache: _BiGruCache,
    fwd: GruParams,
    bwd: GruParams,
    gfwd: GruParams,
    gbwd: GruParams,
) -> np.ndarray:
    H = fwd.hidden
    B = dout.shape[0]
    rows = np.arange(B)[:, None]
    d = np.stack([dout[..., :H], dout[..., H:][rows, cache.rev]])
    dX = _gru_scan_backward(d, cache.scan, [gfwd, gbwd])
    return dX[0] + dX[1][rows, cache.rev]


def bigru_encode(X: np.ndarray, fwd: GruParams, bwd: GruParams) -> np.ndarray:
    """Encode a single sequence X (T, D) into (T, 2H) states, zero initial state both ways."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"bigru_encode expects a non-empty (T, D) matrix, got shape {X.shape}")
    fwd.validate()
    bwd.validate()
    out, _ = bigru_forward(X[None], np.array([X.shape[0]]), fwd, bwd)
    return out[0]


# ---------------------------------------------------------------------------
# Attention pooling
# ---------------------------------------------------------------------------


@dataclass
class AttnParams(ParamGroup):
    """Additive scorer g(h) = v_a . tanh(W_a h + b_a)."""

    W_a: np.ndarray
    b_a: np.ndarray
    v_a: np.ndarray

    @classmethod
    def init(cls, input_dim: int, attn_dim: int, rng: np.random.Generator) -> "AttnParams":
        bound = np.sqrt(6.0 / (input_dim + attn_dim))
        return cls(
            _uniform(rng, (attn_dim, input_dim), bound),
            np.zeros(attn_dim),
            _uniform(rng, (attn_dim,), 1.0 / np.sqrt(attn_dim)),
        )

    @classmethod
    def zeros(cls, input_dim: int, attn_dim: int) -> "AttnParams":
        return cls(np.zeros((attn_dim, input_dim)), np.zeros(attn_dim), np.zeros(attn_dim))


@dataclass
class _AttnCache:
    H: np.ndarray
    S: np.ndarray
    alpha: np.ndarray


def masked_softmax(scores: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is not None:
        scores = np.where(mask, scores, MASK_FILL)
    alpha = softmax(scores, axis=-1)
    if mask is not None:
        alpha = np.where(mask, alpha, 0.0)
    return alpha


def attention_forward(
    H: np.ndarray, p: AttnParams, mask: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, _AttnCache]:
    """Batched attention pooling over H (B, T, M) with boolean mask (B, T)."""
    if H.shape[-1] != p.W_a.shape[1]:
        raise ValueError(f"attention expects rows of width {p.W_a.shape[1]}, got {H.shape[-1]}")
    if mask is not None and not np.all(mask.any(axis=-1)):
        raise ValueError("attention over a sequence whose rows are all masked")
    S = np.tanh(H @ p.W_a.T + p.b_a)
    alpha = masked_softmax(S @ p.v_a, mask)
    pooled = np.einsum("bt,btm->bm", alpha, H)
    return alpha, pooled, _AttnCache(H, S, alpha)


def attention_backward(dpooled: np.ndarray, cache: _AttnCache, p: AttnParams, grads: AttnParams) -> np.ndarray:
    H, S, alpha = cache.H, cache.S, cache.alpha
    B, T, M = H.shape
    A = S.shape[-1]
    dH = alpha[..., None] * dpooled[:, None, :]
    dalpha = np.einsum("btm,bm->bt", H, dpooled)
    dgamma = alpha * (dalpha - np.sum(alpha * dalpha, axis=-1, keepdims=True))
    grads.v_a += np.einsum("bt,bta->a", dgamma, S)
    dpre = (dgamma[..., None] * p.v_a) * (1.0 - S * S)
    dpre_flat = dpre.reshape(B * T, A)
    grads.W_a += dpre_flat.T @ H.reshape(B * T, M)
    grads.b_a += dpre_flat.sum(axis=0)
    dH += dpre @ p.W_a
    return dH


def attention_pool(
    H: np.ndarray, p: AttnParams, mask: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Attention pooling of rows H (T, M); returns (weights, pooled).

    ``mask`` is a boolean (T,) array, False for padding rows; padded rows get
    weight exactly zero.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] == 0:
        raise ValueError(f"attention_pool expects a non-empty (T, M) matrix, got {H.shape}")
    m = None if mask is None else np.asarray(mask, dtype=bool)[None]
    alpha, pooled, _ = attention_forward(H[None], p, m)
    return alpha[0], pooled[0]


def conditioned_attention_pool(
    H: np.ndarray, C: np.ndarray, p: AttnParams, mask: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Attention over rows [h_i || c_i]; pooled output keeps the context block."""
    H = np.asarray(H, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if C.ndim == 1 and C.size == 0:
        C = np.zeros((H.shape[0], 0))
    if H.shape[0] != C.shape[0]:
        raise ValueError(f"row count mismatch: H has {H.shape[0]} rows, C has {C.shape[0]}")
    return attention_pool(np.concatenate([H, C], axis=1), p, mask)


# ---------------------------------------------------------------------------
# Dense, softmax, loss, dropout
# ---------------------------------------------------------------------------


def dense(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ValueError(f"dense shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    return x @ W.T + b


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    return float(-np.log(max(float(probs[label]), 1e-12)))


def dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator | None, train_mode: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout. Returns the output and the scaled keep-mask (None when inactive)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train_mode or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, param: np.ndarray, **hyper: float) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), **hyper)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """Bias-corrected Adam update, applied to ``param`` in place."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ValueError(f"shape mismatch: param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    check_finite(grad, "gradient")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    param -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return param


@dataclass
class Adam:
    """Adam over a named set of parameter arrays."""

    params: Mapping[str, np.ndarray]
    lr: float = 1e-3
    states: dict[str, AdamState] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, p in self.params.items():
            self.states[name] = AdamState.for_param(p, lr=self.lr)

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            adam_step(p, grads[name], self.states[name])


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(1e-8, abs(a) + abs(n))


def grad_check(
    loss_fn: Callable[[], float],
    params: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    samples: int = 20,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between ``analytic`` and central differences.

    ``params`` are perturbed in place, so ``loss_fn`` must read them. Up to
    ``samples`` random coordinates are drawn from every parameter array.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        if flat.size == 0:
            continue
        idx = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        g = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            worst = max(worst, relative_error(float(g[i]), (up - down) / (2.0 * h)))
    return worst
