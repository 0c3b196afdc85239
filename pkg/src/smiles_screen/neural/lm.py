"""Class-conditional GRU language models and the logistic stacker on their log-likelihoods."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax

from .gru import gru_core_backward, gru_core_forward, init_gru_core
from .optim import Params


def init_lm(vocab_size: int, embed_dim: int = 32, hidden: int = 64, rng: np.random.Generator | None = None) -> Params:
    """Input alphabet is the vocabulary plus BOS; output alphabet the vocabulary plus EOS.

    Both extra symbols live at index ``vocab_size``.
    """
    rng = rng or np.random.default_rng(0)
    p = init_gru_core(vocab_size + 1, embed_dim, hidden, rng)
    p["Wo"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, vocab_size + 1))
    p["bo"] = np.zeros(vocab_size + 1)
    return p


def lm_batch(seqs, vocab_size: int):
    """Inputs ``[BOS, s1..sn]`` and targets ``[s1..sn, EOS]`` padded into arrays."""
    T = max(len(s) for s in seqs) + 1
    B = len(seqs)
    inputs = np.full((B, T), vocab_size, dtype=np.int64)
    targets = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=bool)
    for i, s in enumerate(seqs):
        n = len(s)
        inputs[i, 1 : n + 1] = s
        targets[i, :n] = s
        targets[i, n] = vocab_size
        mask[i, : n + 1] = True
    return inputs, targets, mask


def lm_forward(params: Params, inputs, targets, mask):
    """Per-step log-probabilities of the targets ``(B, T)`` (zero at masked steps)."""
    states, core = gru_core_forward(params, inputs, mask)
    logits = states @ params["Wo"] + params["bo"]  # (T, B, V+1)
    logp = log_softmax(logits, axis=-1)
    tgt = targets.T
    picked = np.take_along_axis(logp, tgt[:, :, None], axis=2)[:, :, 0].T
    picked = np.where(mask, picked, 0.0)
    return picked, (states, core, logp)


def lm_softmax(params: Params, inputs, mask) -> np.ndarray:
    states, _ = gru_core_forward(params, inputs, mask)
    return np.exp(log_softmax(states @ params["Wo"] + params["bo"], axis=-1))


def lm_loss_and_grads(params: Params, inputs, targets, mask) -> tuple[float, Params]:
    """Mean next-symbol cross-entropy per real step, with exact gradients."""
    picked, (states, core, logp) = lm_forward(params, inputs, targets, mask)
    n_steps = mask.sum()
    loss = float(-picked.sum() / n_steps)
    dlogits = np.exp(logp)  # (T, B, V+1)
    tgt = targets.T
    np.put_along_axis(dlogits, tgt[:, :, None], np.take_along_axis(dlogits, tgt[:, :, None], axis=2) - 1.0, axis=2)
    dlogits *= mask.T[:, :, None] / n_steps
    grads = gru_core_backward(params, core, dlogits @ params["Wo"].T)
    grads["Wo"] = np.einsum("tbh,tbv->hv", states, dlogits)
    grads["bo"] = dlogits.sum(axis=(0, 1))
    return loss, grads


def lm_loglik(params: Params, seqs, vocab_size: int) -> np.ndarray:
    """Sum of log next-symbol probabilities per sequence, EOS included."""
    inputs, targets, mask = lm_batch(seqs, vocab_size)
    picked, _ = lm_forward(params, inputs, targets, mask)
    return picked.sum(axis=1)


# --------------------------------------------------------------------------
# logistic stacker


class LogisticStacker:
    """L2-regularised logistic regression by damped Newton steps.

    Every accepted step lowers the training objective (step halving), and
    the objective after each iteration is kept in ``loss_history_``.
    """

    def __init__(self, l2: float = 1e-4, max_iter: int = 100, tol: float = 1e-10):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol

    def _design(self, F: np.ndarray) -> np.ndarray:
        Z = (F - self.mean_) / self.scale_
        return np.hstack([Z, np.ones((len(Z), 1))])

    def _objective(self, X, y, w) -> float:
        z = X @ w
        nll = np.mean(np.logaddexp(0.0, z) - y * z)
        return float(nll + 0.5 * self.l2 * np.sum(w[:-1] ** 2))

    def fit(self, F, y):
        F = np.asarray(F, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if len(np.unique(y)) < 2:
            raise ValueError("stacker needs both classes")
        self.mean_ = F.mean(axis=0)
        self.scale_ = np.where(F.std(axis=0) > 1e-12, F.std(axis=0), 1.0)
        X = self._design(F)
        n, d = X.shape
        w = np.zeros(d)
        reg = np.full(d, self.l2)
        reg[-1] = 0.0
        obj = self._objective(X, y, w)
        self.loss_history_ = [obj]
        for _ in range(self.max_iter):
            p = expit(X @ w)
            g = X.T @ (p - y) / n + reg * w
            Hm = (X.T * (p * (1 - p))) @ X / n + np.diag(reg) + 1e-12 * np.eye(d)
            step = np.linalg.solve(Hm, g)
            t = 1.0
            while t > 1e-12:
                w_new = w - t * step
                new_obj = self._objective(X, y, w_new)
                if new_obj <= obj:
                    break
                t /= 2
            else:
                break
            done = obj - new_obj < self.tol
            w, obj = w_new, new_obj
            self.loss_history_.append(obj)
            if done:
                break
        self.coef_ = w
        return self

    def predict_proba(self, F) -> np.ndarray:
        return expit(self._design(np.asarray(F, dtype=np.float64)) @ self.coef_)

    def get_state(self):
        return {"l2": self.l2}, {"mean": self.mean_, "scale": self.scale_, "coef": self.coef_}

    @classmethod
    def from_state(cls, meta, arrays):
        self = cls(meta["l2"])
        self.mean_, self.scale_, self.coef_ = arrays["mean"], arrays["scale"], arrays["coef"]
        return self


def stacker_features(ll_active: np.ndarray, ll_inactive: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=np.float64)
    return np.column_stack([ll_active / lengths, ll_inactive / lengths, lengths])
