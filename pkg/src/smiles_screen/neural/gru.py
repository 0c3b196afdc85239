"""GRU recurrence with full backpropagation through time, and the many-to-one classifier."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .optim import Params

GATES = ("z", "r", "n")


def init_gru_core(n_in: int, embed_dim: int, hidden: int, rng: np.random.Generator, prefix: str = "") -> Params:
    p: Params = {f"{prefix}E": rng.normal(0.0, 0.1, size=(n_in, embed_dim))}
    for g in GATES:
        p[f"{prefix}W{g}"] = rng.normal(0.0, 1.0 / np.sqrt(embed_dim), size=(embed_dim, hidden))
        q, _ = np.linalg.qr(rng.normal(size=(hidden, hidden)))
        p[f"{prefix}U{g}"] = q
        p[f"{prefix}b{g}"] = np.zeros(hidden)
    return p


def gru_core_forward(params: Params, ids: np.ndarray, mask: np.ndarray, prefix: str = ""):
    """Run the recurrence over ``ids`` ``(B, T)``; ``mask`` marks real steps.

    At masked steps the state is carried unchanged, so the state after the
    last step is the state after each sequence's own last symbol.
    Returns the stacked states ``(T, B, H)`` and a cache for the backward pass.
    """
    E = params[f"{prefix}E"]
    Wz, Wr, Wn = (params[f"{prefix}W{g}"] for g in GATES)
    Uz, Ur, Un = (params[f"{prefix}U{g}"] for g in GATES)
    bz, br, bn = (params[f"{prefix}b{g}"] for g in GATES)
    B, T = ids.shape
    H = Uz.shape[0]
    h = np.zeros((B, H))
    states = np.empty((T, B, H))
    steps = []
    for t in range(T):
        x = E[ids[:, t]]
        z = expit(x @ Wz + h @ Uz + bz)
        r = expit(x @ Wr + h @ Ur + br)
        n = np.tanh(x @ Wn + (r * h) @ Un + bn)
        h_new = (1.0 - z) * n + z * h
        m = mask[:, t][:, None]
        steps.append((x, h, z, r, n))
        h = np.where(m, h_new, h)
        states[t] = h
    return states, (ids, mask, steps)


def gru_core_backward(params: Params, cache, d_states: np.ndarray, prefix: str = "") -> Params:
    """Backpropagate ``d_states`` (gradient on every step's output state) through time."""
    ids, mask, steps = cache
    Wz, Wr, Wn = (params[f"{prefix}W{g}"] for g in GATES)
    Uz, Ur, Un = (params[f"{prefix}U{g}"] for g in GATES)
    grads: Params = {f"{prefix}E": np.zeros_like(params[f"{prefix}E"])}
    for g in GATES:
        for kind in "WUb":
            grads[f"{prefix}{kind}{g}"] = np.zeros_like(params[f"{prefix}{kind}{g}"])
    dh = np.zeros_like(d_states[0])
    for t in range(len(steps) - 1, -1, -1):
        x, h_prev, z, r, n = steps[t]
        dh = dh + d_states[t]
        m = mask[:, t][:, None].astype(np.float64)
        dnew = dh * m
        carry = dh * (1.0 - m)
        dn = dnew * (1.0 - z)
        dz = dnew * (h_prev - n)
        dh_prev = dnew * z
        dn_pre = dn * (1.0 - n * n)
        rh = r * h_prev
        grads[f"{prefix}Wn"] += x.T @ dn_pre
        grads[f"{prefix}Un"] += rh.T @ dn_pre
        grads[f"{prefix}bn"] += dn_pre.sum(axis=0)
        drh = dn_pre @ Un.T
        dr = drh * h_prev
        dh_prev += drh * r
        dz_pre = dz * z * (1.0 - z)
        dr_pre = dr * r * (1.0 - r)
        grads[f"{prefix}Wz"] += x.T @ dz_pre
        grads[f"{prefix}Uz"] += h_prev.T @ dz_pre
        grads[f"{prefix}bz"] += dz_pre.sum(axis=0)
        grads[f"{prefix}Wr"] += x.T @ dr_pre
        grads[f"{prefix}Ur"] += h_prev.T @ dr_pre
        grads[f"{prefix}br"] += dr_pre.sum(axis=0)
        dh_prev += dz_pre @ Uz.T + dr_pre @ Ur.T
        dx = dz_pre @ Wz.T + dr_pre @ Wr.T + dn_pre @ Wn.T
        np.add.at(grads[f"{prefix}E"], ids[:, t], dx)
        dh = dh_prev + carry
    return grads


# --------------------------------------------------------------------------
# many-to-one classifier


def init_gru_classifier(vocab_size: int, embed_dim: int = 32, hidden: int = 64,
                        rng: np.random.Generator | None = None) -> Params:
    rng = rng or np.random.default_rng(0)
    p = init_gru_core(vocab_size, embed_dim, hidden, rng)
    p["w_out"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden)
    p["b_out"] = np.zeros(())
    return p


def _mask(ids: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    return np.arange(ids.shape[1])[None, :] < lengths[:, None]


def gru_forward(params: Params, ids: np.ndarray, lengths: np.ndarray):
    states, core = gru_core_forward(params, ids, _mask(ids, lengths))
    h_last = states[-1]
    probs = expit(h_last @ params["w_out"] + params["b_out"])
    return probs, (states, core)


def gru_backward(params: Params, cache, probs: np.ndarray, y: np.ndarray) -> Params:
    states, core = cache
    B = len(y)
    dlogit = (probs - y) / B
    h_last = states[-1]
    d_states = np.zeros_like(states)
    d_states[-1] = dlogit[:, None] * params["w_out"][None, :]
    grads = gru_core_backward(params, core, d_states)
    grads["w_out"] = h_last.T @ dlogit
    grads["b_out"] = np.asarray(dlogit.sum())
    return grads
