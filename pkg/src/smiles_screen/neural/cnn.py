"""One-layer CNN over one-hot 2-character symbols with max-over-time pooling.

The convolution of a one-hot sequence with a ``(r, V, K)`` filter bank is a
sum of ``r`` row lookups, which is how the batched path computes it.
:func:`cnn_forward_onehot` does the same thing with explicit matrices.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..features import Vocabulary
from .optim import Params

PAD = Vocabulary.PAD


class NumericalError(FloatingPointError):
    pass


def init_cnn(vocab_size: int, regions=(5, 3), n_filters: int = 64, rng: np.random.Generator | None = None,
             scale: float = 0.1) -> Params:
    rng = rng or np.random.default_rng(0)
    params: Params = {}
    for r in regions:
        W = rng.normal(0.0, scale, size=(r, vocab_size, n_filters))
        W[:, PAD, :] = 0.0
        params[f"W{r}"] = W
        params[f"b{r}"] = np.zeros(n_filters)
    width = n_filters * len(regions)
    params["w_out"] = rng.normal(0.0, 1.0 / np.sqrt(width), size=width)
    params["b_out"] = np.zeros(())
    return params


def regions_of(params: Params) -> list[int]:
    return [int(k[1:]) for k in params if k.startswith("W")]


def _valid_mask(lengths: np.ndarray, n_pos: int, r: int) -> np.ndarray:
    # window t is valid if it lies inside the sequence; a too-short sequence keeps window 0
    last = np.maximum(lengths - r, 0)
    return np.arange(n_pos)[None, :] <= last[:, None]


def cnn_forward(params: Params, ids: np.ndarray, lengths: np.ndarray):
    """Batched forward pass.

    ``ids`` is ``(B, L)`` padded with ``<pad>``; returns ``(probs, cache)``.
    """
    regions = regions_of(params)
    rmax = max(regions)
    if ids.shape[1] < rmax:
        ids = np.pad(ids, ((0, 0), (0, rmax - ids.shape[1])), constant_values=PAD)
    B, L = ids.shape
    real = (ids != PAD)[:, :, None]
    pooled, caches = [], []
    for r in regions:
        W, b = params[f"W{r}"], params[f"b{r}"]
        n_pos = L - r + 1
        conv = np.broadcast_to(b, (B, n_pos, b.shape[0])).copy()
        for j in range(r):
            conv += W[j][ids[:, j : j + n_pos]] * real[:, j : j + n_pos]
        act = np.maximum(conv, 0.0)
        valid = _valid_mask(lengths, n_pos, r)
        masked = np.where(valid[:, :, None], act, -np.inf)
        arg = np.argmax(masked, axis=1)  # (B, K); lowest index on ties
        pooled.append(np.take_along_axis(act, arg[:, None, :], axis=1)[:, 0, :])
        caches.append((r, arg, np.take_along_axis(conv, arg[:, None, :], axis=1)[:, 0, :]))
    h = np.concatenate(pooled, axis=1)
    logit = h @ params["w_out"] + params["b_out"]
    if not np.all(np.isfinite(logit)):
        raise NumericalError("non-finite CNN activations; learning rate too high?")
    probs = expit(logit)
    return probs, (ids, h, caches)


def cnn_backward(params: Params, cache, probs: np.ndarray, y: np.ndarray) -> Params:
    """Gradients of mean binary cross-entropy. Max-pooling routes to the argmax window."""
    ids, h, caches = cache
    B = len(y)
    dlogit = (probs - y) / B
    grads: Params = {"w_out": h.T @ dlogit, "b_out": np.asarray(dlogit.sum())}
    dh = dlogit[:, None] * params["w_out"][None, :]
    col = 0
    rows = np.arange(B)[:, None]
    for r, arg, conv_at in caches:
        K = arg.shape[1]
        g = dh[:, col : col + K] * (conv_at > 0)
        col += K
        grads[f"b{r}"] = g.sum(axis=0)
        dW = np.zeros_like(params[f"W{r}"])
        kk = np.broadcast_to(np.arange(K)[None, :], arg.shape)
        for j in range(r):
            sym = ids[rows, arg + j]
            np.add.at(dW[j], (sym, kk), g)
        dW[:, PAD, :] = 0.0
        grads[f"W{r}"] = dW
    return grads


def cnn_loss(params: Params, ids, lengths, y) -> float:
    p, _ = cnn_forward(params, ids, lengths)
    p = np.clip(p, 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def cnn_forward_onehot(X: np.ndarray, params: Params) -> float:
    """Single-sequence forward pass on an explicit ``(L, V)`` one-hot matrix."""
    regions = regions_of(params)
    rmax = max(regions)
    length = len(X)
    if length < rmax:
        X = np.vstack([X, np.zeros((rmax - length, X.shape[1]))])
    feats = []
    for r in regions:
        W, b = params[f"W{r}"], params[f"b{r}"]
        n_pos = len(X) - r + 1
        conv = np.array([b + sum(X[t + j] @ W[j] for j in range(r)) for t in range(n_pos)])
        act = np.maximum(conv, 0.0)[: max(length - r, 0) + 1]
        feats.append(act.max(axis=0))
    logit = np.concatenate(feats) @ params["w_out"] + params["b_out"]
    return float(expit(logit))
