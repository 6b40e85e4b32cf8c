"""Parallel LSTMs with typing attention: forward pass, loss and exact gradients.

Parameters live in a flat ``dict`` of named numpy arrays so that the
optimizer, the checkpoint format and the gradient check can all treat them
uniformly. Block names::

    embed.<h>.W  (out, in)        embed.<h>.b  (out,)
    lstm.<l>.W   (K, H + in, 4H)  lstm.<l>.b   (K, 4H)    gate order i, f, c, o
    attention.v  (H,)
    head.W       (H,)             head.b       (1,)

The K sub-LSTMs are stored stacked along the leading axis and evaluated
together; the embedding stack is shared by all of them.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, softmax

from ..exceptions import NumericalError, ValidationError
from ..validation import as_rng

PROB_EPS = 1e-12


@dataclass(frozen=True)
class NetworkConfig:
    n_inputs: int = 12
    n_types: int = 6
    hidden_size: int = 64
    embed_sizes: tuple = (32,)
    n_layers: int = 1
    dropout: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "embed_sizes", tuple(int(e) for e in self.embed_sizes))
        if min(self.n_inputs, self.n_types, self.hidden_size, self.n_layers) < 1:
            raise ValidationError("network sizes must be positive")
        if any(e < 1 for e in self.embed_sizes):
            raise ValidationError("embedding sizes must be positive")
        if not 0 <= self.dropout < 1:
            raise ValidationError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def embed_dim(self):
        return self.embed_sizes[-1] if self.embed_sizes else self.n_inputs

    def to_dict(self):
        d = asdict(self)
        d["embed_sizes"] = list(self.embed_sizes)
        return d

    def block_shapes(self):
        shapes = {}
        prev = self.n_inputs
        for h, e in enumerate(self.embed_sizes):
            shapes[f"embed.{h}.W"] = (e, prev)
            shapes[f"embed.{h}.b"] = (e,)
            prev = e
        H, K = self.hidden_size, self.n_types
        for layer in range(self.n_layers):
            shapes[f"lstm.{layer}.W"] = (K, H + prev, 4 * H)
            shapes[f"lstm.{layer}.b"] = (K, 4 * H)
            prev = H
        shapes["attention.v"] = (H,)
        shapes["head.W"] = (H,)
        shapes["head.b"] = (1,)
        return shapes


def init_params(config, seed=0):
    """Uniform ``±1/sqrt(fan_in)`` initialization with forget-gate bias +1."""
    rng = as_rng(seed)
    H = config.hidden_size
    params = {}
    for name, shape in config.block_shapes().items():
        if name.startswith("embed") and name.endswith(".W"):
            fan_in = shape[1]
        elif name.startswith("embed"):
            fan_in = params[name[:-1] + "W"].shape[1]
        elif name.startswith("lstm") and name.endswith(".W"):
            fan_in = shape[1]
        elif name.startswith("lstm"):
            fan_in = params[name[:-1] + "W"].shape[1]
        else:
            fan_in = H
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
        if name.startswith("lstm") and name.endswith(".b"):
            params[name][:, H:2 * H] += 1.0
    return params


def check_params(params, config):
    for name, shape in config.block_shapes().items():
        if name not in params:
            raise ValidationError(f"parameter block {name!r} is missing")
        if tuple(params[name].shape) != shape:
            raise ValidationError(
                f"parameter block {name!r} has shape {params[name].shape}, expected {shape}")
        if not np.all(np.isfinite(params[name])):
            raise NumericalError(f"parameter block {name!r} is not finite", block=name)


def _dropout_mask(rng, shape, rate):
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


# --------------------------------------------------------------------------
# building blocks

def embed_day(layers, a_t, dropout=0.0, training=False, rng=None):
    """Embed one day (or a batch of days) with ``ReLU(W Dropout(e) + b)`` layers.

    ``layers`` is a sequence of ``(W, b)`` pairs with ``W`` of shape (out, in).
    """
    e = np.asarray(a_t, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        raise ValidationError("embedding input must be finite")
    rng = as_rng(rng) if training and dropout > 0 else None
    for W, b in layers:
        if e.shape[-1] != W.shape[1]:
            raise ValidationError(f"embedding layer expects {W.shape[1]} inputs, got {e.shape[-1]}")
        if rng is not None:
            e = e * _dropout_mask(rng, e.shape, dropout)
        e = np.maximum(e @ W.T + b, 0.0)
    return e


def _lstm_layer(W, b, X, H):
    """One layer for K stacked cells.

    ``X`` is (n, T, in) when shared by every cell, else (K, n, T, in).
    Returns the hidden sequence (K, n, T, H) and a cache for the backward pass.
    """
    K = W.shape[0]
    Wh, Wx = W[:, :H], W[:, H:]
    if X.ndim == 3:
        n, T, _ = X.shape
        Zx = np.einsum("nti,kij->kntj", X, Wx)
    else:
        _, n, T, _ = X.shape
        Zx = np.einsum("knti,kij->kntj", X, Wx)
    Zx += b[:, None, None, :]
    hs = np.zeros((K, n, T + 1, H))
    cs = np.zeros((K, n, T + 1, H))
    acts = np.empty((K, n, T, 4 * H))
    for t in range(T):
        z = Zx[:, :, t] + np.matmul(hs[:, :, t], Wh)
        a = acts[:, :, t]
        a[..., :2 * H] = expit(z[..., :2 * H])
        a[..., 2 * H:3 * H] = np.tanh(z[..., 2 * H:3 * H])
        a[..., 3 * H:] = expit(z[..., 3 * H:])
        i, f, g, o = a[..., :H], a[..., H:2 * H], a[..., 2 * H:3 * H], a[..., 3 * H:]
        cs[:, :, t + 1] = f * cs[:, :, t] + i * g
        hs[:, :, t + 1] = o * np.tanh(cs[:, :, t + 1])
    return hs[:, :, 1:], (X, hs, cs, acts)


def _lstm_layer_backward(W, dHs, cache, H):
    X, hs, cs, acts = cache
    K, n, T, _ = dHs.shape
    Wh_T = W[:, :H].transpose(0, 2, 1)
    dZ = np.empty((K, n, T, 4 * H))
    dh_next = np.zeros((K, n, H))
    dc_next = np.zeros((K, n, H))
    for t in range(T - 1, -1, -1):
        a = acts[:, :, t]
        i, f, g, o = a[..., :H], a[..., H:2 * H], a[..., 2 * H:3 * H], a[..., 3 * H:]
        tc = np.tanh(cs[:, :, t + 1])
        dh = dHs[:, :, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dZ[:, :, t]
        dz[..., :H] = dc * g * i * (1.0 - i)
        dz[..., H:2 * H] = dc * cs[:, :, t] * f * (1.0 - f)
        dz[..., 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[..., 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = np.matmul(dz, Wh_T)
    dW = np.empty_like(W)
    dW[:, :H] = np.einsum("knth,kntj->khj", hs[:, :, :-1], dZ)
    if X.ndim == 3:
        dW[:, H:] = np.einsum("nti,kntj->kij", X, dZ)
        dX = np.einsum("kntj,kij->nti", dZ, W[:, H:])
    else:
        dW[:, H:] = np.einsum("knti,kntj->kij", X, dZ)
        dX = np.einsum("kntj,kij->knti", dZ, W[:, H:])
    return dW, dZ.sum(axis=(1, 2)), dX


def lstm_forward(layers, inputs, dropout=0.0, training=False, rng=None):
    """Run a (possibly multi-layer) LSTM from ``h_0 = c_0 = 0``.

    ``layers`` is a sequence of ``(W, b)`` with ``W`` of shape (H + in, 4H)
    acting on ``[h_{t-1}, x_t]`` and gates ordered i, f, c, o. ``inputs`` is
    (T, in) or (n, T, in). Returns ``(h_T, hidden_sequence)`` of the top layer.
    Dropout is applied between layers when training.
    """
    X = np.asarray(inputs, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[1] < 1:
        raise ValidationError("lstm_forward needs a non-empty (T, in) or (n, T, in) sequence")
    rng = as_rng(rng) if training and dropout > 0 else None
    for depth, (W, b) in enumerate(layers):
        H = W.shape[1] // 4
        if W.shape[0] != H + X.shape[-1]:
            raise ValidationError(f"LSTM layer {depth} expects {W.shape[0] - H} inputs, got {X.shape[-1]}")
        if depth and rng is not None:
            X = X * _dropout_mask(rng, X.shape, dropout)
        Hs, _ = _lstm_layer(W[None], b[None], X, H)
        X = Hs[0]
    if single:
        return X[0, -1], X[0]
    return X[:, -1], X


def typed_attention(v, S):
    """Attention over K typed sequences ``S`` (K, H) or (n, K, H).

    Returns ``(w, u)`` with ``w = softmax(S v)`` and ``u = sum_k w_k s_k``.
    """
    S = np.asarray(S, dtype=np.float64)
    w = softmax(S @ v, axis=-1)
    u = np.einsum("...k,...kh->...h", w, S)
    return w, u


def loss(yhat, w, y, Q, lam):
    """Summed joint loss ``(l, l_c, l_t)`` with ``l = l_c + lam * l_t``."""
    yc = np.clip(yhat, PROB_EPS, 1.0 - PROB_EPS)
    wc = np.clip(w, PROB_EPS, 1.0 - PROB_EPS)
    lc = float(-np.sum(y * np.log(yc) + (1.0 - y) * np.log(1.0 - yc)))
    lt = float(-np.sum(Q * np.log(wc))) if Q is not None else 0.0
    return lc + lam * lt, lc, lt


# --------------------------------------------------------------------------
# whole network

def prepare_inputs(X, window):
    """(n, D, T) counts to the network's (n, d, D) log1p day sequence."""
    if X.shape[2] < window:
        raise ValidationError(f"series hold {X.shape[2]} days, window needs {window}")
    return np.log1p(X[:, :, :window]).transpose(0, 2, 1)


def forward(params, config, A, training=False, rng=None):
    """Forward pass over prepared inputs ``A`` (n, d, D).

    Returns ``(yhat, w, cache)``; ``w`` is (n, K).
    """
    H = config.hidden_size
    drop = config.dropout if training else 0.0
    if drop > 0:
        rng = as_rng(rng)
    cache = {"embed": [], "lstm": [], "masks": []}
    e = A
    for h in range(len(config.embed_sizes)):
        mask = _dropout_mask(rng, e.shape, drop) if drop > 0 else None
        x_in = e * mask if mask is not None else e
        e = np.maximum(x_in @ params[f"embed.{h}.W"].T + params[f"embed.{h}.b"], 0.0)
        cache["embed"].append((x_in, mask, e))
    X = e
    for layer in range(config.n_layers):
        mask = None
        if layer and drop > 0:
            mask = _dropout_mask(rng, X.shape, drop)
            X = X * mask
        Hs, lc = _lstm_layer(params[f"lstm.{layer}.W"], params[f"lstm.{layer}.b"], X, H)
        cache["lstm"].append((lc, mask))
        X = Hs
    S = X[:, :, -1].transpose(1, 0, 2)  # (n, K, H)
    w, u = typed_attention(params["attention.v"], S)
    yhat = expit(u @ params["head.W"] + params["head.b"][0])
    cache.update(S=S, w=w, u=u, yhat=yhat, T=A.shape[1])
    return yhat, w, cache


def backward(params, config, cache, y, Q, lam):
    """Exact gradients of the summed joint loss for a cached forward pass."""
    H = config.hidden_size
    S, w, u, yhat = cache["S"], cache["w"], cache["u"], cache["yhat"]
    grads = {}

    inside = (yhat > PROB_EPS) & (yhat < 1.0 - PROB_EPS)
    dz = np.where(inside, yhat - y, 0.0)
    grads["head.W"] = u.T @ dz
    grads["head.b"] = np.array([dz.sum()])
    du = dz[:, None] * params["head.W"][None, :]

    dw = np.einsum("nkh,nh->nk", S, du)
    if Q is not None and lam != 0:
        w_in = (w > PROB_EPS) & (w < 1.0 - PROB_EPS)
        dw -= lam * np.where(w_in, Q / np.clip(w, PROB_EPS, None), 0.0)
    dscore = w * (dw - np.sum(w * dw, axis=1, keepdims=True))
    grads["attention.v"] = np.einsum("nk,nkh->h", dscore, S)
    dS = w[:, :, None] * du[:, None, :] + dscore[:, :, None] * params["attention.v"]

    K, n = S.shape[1], S.shape[0]
    dX = np.zeros((K, n, cache["T"], H))
    dX[:, :, -1] = dS.transpose(1, 0, 2)
    for layer in range(config.n_layers - 1, -1, -1):
        lc, mask = cache["lstm"][layer]
        W = params[f"lstm.{layer}.W"]
        grads[f"lstm.{layer}.W"], grads[f"lstm.{layer}.b"], dX = _lstm_layer_backward(W, dX, lc, H)
        if mask is not None:
            dX = dX * mask

    de = dX  # (n, d, E), already summed over the K cells
    for h in range(len(config.embed_sizes) - 1, -1, -1):
        x_in, mask, e = cache["embed"][h]
        dpre = de * (e > 0)
        grads[f"embed.{h}.W"] = np.einsum("nte,nti->ei", dpre, x_in)
        grads[f"embed.{h}.b"] = dpre.sum(axis=(0, 1))
        de = dpre @ params[f"embed.{h}.W"]
        if mask is not None:
            de = de * mask

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter block {name!r}", block=name)
    return grads


def loss_and_grads(params, config, A, y, Q, lam, training=False, rng=None):
    yhat, w, cache = forward(params, config, A, training=training, rng=rng)
    total, lc, lt = loss(yhat, w, y, Q, lam)
    if not np.isfinite(total):
        raise NumericalError("loss is not finite", block="loss")
    return (total, lc, lt), backward(params, config, cache, y, Q, lam)
