"""Trainable sequence classifiers: CNN, GRU and the RNNLM pair with a logistic stacker.

All three consume SMILES strings, encode them as 2-character symbol
sequences and, when an :class:`AugmentConfig` is given, train on freshly
sampled random writings every epoch and average predicted probabilities
over several writings at prediction time.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..augment import AugmentConfig, random_smiles
from ..features import MAX_SEQ_LEN, Vocabulary, pad_batch, symbol_encode
from ..metrics import log_loss
from ..smiles_core import Molecule, canonical_smiles, parse_smiles
from ..splits import stratified_holdout
from .cnn import NumericalError, cnn_backward, cnn_forward, init_cnn
from .gru import gru_backward, gru_forward, init_gru_classifier
from .lm import LogisticStacker, init_lm, lm_batch, lm_loglik, lm_loss_and_grads, stacker_features
from .optim import Params, clip_by_global_norm, make_optimizer

log = logging.getLogger(__name__)

_PREDICT_STREAM = 7919


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    seed: int = 0
    clip_norm: float = 5.0
    val_fraction: float = 0.1

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.epochs, self.patience) <= 0:
            raise ValueError("training settings must be positive")


class TrainingDiverged(FloatingPointError):
    pass


def _check_finite(loss: float, grads: Params, config) -> None:
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise TrainingDiverged(f"non-finite loss or gradient; config: {config}")


class _SequenceModel:
    kind = "sequence"

    def __init__(self, train: TrainConfig | None = None, augment: AugmentConfig | None = None,
                 stride: int = 1, max_len: int = MAX_SEQ_LEN):
        self.train = train or TrainConfig()
        self.augment = augment
        self.stride = stride
        self.max_len = max_len
        self.truncated_ = 0

    # ---- text handling

    def _writings(self, mols: list[Molecule], n: int, rng: np.random.Generator) -> list[str]:
        if self.augment is None:
            return [canonical_smiles(m) for m in mols for _ in range(n)]
        return [random_smiles(m, rng) for m in mols for _ in range(n)]

    def _encode(self, texts: list[str]) -> list[tuple[int, ...]]:
        return [symbol_encode(t, self.stride, self.vocab_).symbols for t in texts]

    def _fit_vocab(self, mols: list[Molecule], rng: np.random.Generator) -> None:
        vocab = Vocabulary()
        n = self.augment.train_walks_per_molecule if self.augment else 0
        for m in mols:
            symbol_encode(canonical_smiles(m), self.stride, vocab)
            for _ in range(n):
                symbol_encode(random_smiles(m, rng), self.stride, vocab)
        self.vocab_ = vocab.freeze()

    def _batch(self, seqs):
        ids, lengths, trunc = pad_batch(seqs, self.max_len)
        self.truncated_ += trunc
        return ids, lengths

    def _rngs(self):
        return [np.random.default_rng(s) for s in np.random.SeedSequence(self.train.seed).spawn(5)]

    # ---- subclass hooks

    def _init_params(self, vocab_size: int, rng) -> Params:
        raise NotImplementedError

    def _loss_grads(self, params: Params, ids, lengths, y) -> tuple[float, Params]:
        raise NotImplementedError

    def _forward(self, params: Params, ids, lengths) -> np.ndarray:
        raise NotImplementedError

    # ---- training

    def _train_walks(self) -> int:
        return self.augment.train_walks_per_molecule if self.augment else 1

    def _predict_walks(self) -> int:
        return self.augment.predict_walks_per_molecule if self.augment else 1

    def fit(self, smiles, y):
        y = np.asarray(y, dtype=np.float64)
        mols = [s if isinstance(s, Molecule) else parse_smiles(s) for s in smiles]
        r_init, r_aug, r_shuffle, r_split, r_val = self._rngs()
        tr, va = stratified_holdout(y.astype(int), self.train.val_fraction, r_split)
        tr_mols = [mols[i] for i in tr]
        self._fit_vocab(tr_mols, r_aug)
        self.params_ = self._init_params(len(self.vocab_), r_init)

        n_val = self._predict_walks()
        val_seqs = self._encode(self._writings([mols[i] for i in va], n_val, r_val))
        y_val = y[va]

        opt = make_optimizer(self.train.optimizer, self.train.lr)
        best = (np.inf, -1, copy.deepcopy(self.params_))
        wait = 0
        self.history_ = []
        k = self._train_walks()
        for epoch in range(self.train.epochs):
            seqs = self._encode(self._writings(tr_mols, k, r_aug))
            labels = np.repeat(y[tr], k)
            order = r_shuffle.permutation(len(seqs))
            losses = []
            for s in range(0, len(order), self.train.batch_size):
                idx = order[s : s + self.train.batch_size]
                ids, lengths = self._batch([seqs[i] for i in idx])
                loss, grads = self._loss_grads(self.params_, ids, lengths, labels[idx])
                _check_finite(loss, grads, self.train)
                clip_by_global_norm(grads, self.train.clip_norm)
                opt.step(self.params_, grads)
                losses.append(loss)
            p_val = self._predict_seqs(self.params_, val_seqs).reshape(-1, n_val).mean(axis=1)
            val_loss = log_loss(p_val, y_val)
            self.history_.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_loss": val_loss})
            if val_loss < best[0]:
                best = (val_loss, epoch, copy.deepcopy(self.params_))
                wait = 0
            else:
                wait += 1
                if wait >= self.train.patience:
                    break
        self.best_epoch_ = best[1]
        self.params_ = best[2]
        return self

    # ---- prediction

    def _predict_seqs(self, params: Params, seqs, batch: int = 256) -> np.ndarray:
        out = np.empty(len(seqs))
        order = np.argsort([len(s) for s in seqs], kind="stable")
        for s in range(0, len(order), batch):
            idx = order[s : s + batch]
            ids, lengths = self._batch([seqs[i] for i in idx])
            out[idx] = self._forward(params, ids, lengths)
        return out

    def predict_texts(self, texts: list[str]) -> np.ndarray:
        """Probability for each string exactly as written (no re-walking)."""
        return self._predict_seqs(self.params_, self._encode(list(texts)))

    def predict_proba(self, smiles, n_walks: int | None = None, seed: int | None = None) -> np.ndarray:
        """Mean probability over ``n_walks`` random writings of each molecule."""
        n = n_walks or self._predict_walks()
        mols = [s if isinstance(s, Molecule) else parse_smiles(s) for s in smiles]
        rng = np.random.default_rng([self.train.seed if seed is None else seed, _PREDICT_STREAM])
        texts = self._writings(mols, n, rng)
        return self.predict_texts(texts).reshape(len(mols), n).mean(axis=1)

    # ---- persistence

    def _meta(self) -> dict:
        return {"train": asdict(self.train), "augment": asdict(self.augment) if self.augment else None,
                "stride": self.stride, "max_len": self.max_len, "vocab": self.vocab_.dumps(),
                "vocab_ref": self.vocab_.ref}

    def get_state(self):
        return self._meta(), dict(self.params_)

    @classmethod
    def _restore_common(cls, meta):
        train = TrainConfig(**meta["train"])
        augment = AugmentConfig(**meta["augment"]) if meta["augment"] else None
        return train, augment

    @classmethod
    def from_state(cls, meta, arrays):
        train, augment = cls._restore_common(meta)
        self = cls(train=train, augment=augment, stride=meta["stride"], max_len=meta["max_len"],
                   **meta.get("arch", {}))
        self.vocab_ = Vocabulary.loads(meta["vocab"])
        self.params_ = {k: np.array(v) for k, v in arrays.items()}
        return self


class CnnClassifier(_SequenceModel):
    kind = "cnn"

    def __init__(self, train=None, augment=None, stride=1, max_len=MAX_SEQ_LEN, regions=(5, 3), n_filters=64):
        super().__init__(train, augment, stride, max_len)
        self.regions = tuple(regions)
        self.n_filters = n_filters

    def _init_params(self, vocab_size, rng):
        return init_cnn(vocab_size, self.regions, self.n_filters, rng)

    def _loss_grads(self, params, ids, lengths, y):
        probs, cache = cnn_forward(params, ids, lengths)
        p = np.clip(probs, 1e-15, 1 - 1e-15)
        loss = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
        return loss, cnn_backward(params, cache, probs, y)

    def _forward(self, params, ids, lengths):
        return cnn_forward(params, ids, lengths)[0]

    def _meta(self):
        meta = super()._meta()
        meta["arch"] = {"regions": list(self.regions), "n_filters": self.n_filters}
        return meta


class GruClassifier(_SequenceModel):
    kind = "gru"

    def __init__(self, train=None, augment=None, stride=1, max_len=MAX_SEQ_LEN, embed_dim=32, hidden=64):
        super().__init__(train, augment, stride, max_len)
        self.embed_dim = embed_dim
        self.hidden = hidden

    def _init_params(self, vocab_size, rng):
        return init_gru_classifier(vocab_size, self.embed_dim, self.hidden, rng)

    def _loss_grads(self, params, ids, lengths, y):
        probs, cache = gru_forward(params, ids, lengths)
        p = np.clip(probs, 1e-15, 1 - 1e-15)
        loss = float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
        return loss, gru_backward(params, cache, probs, y)

    def _forward(self, params, ids, lengths):
        return gru_forward(params, ids, lengths)[0]

    def _meta(self):
        meta = super()._meta()
        meta["arch"] = {"embed_dim": self.embed_dim, "hidden": self.hidden}
        return meta


# --------------------------------------------------------------------------
# RNN language-model classification


def lm_fit(seqs, vocab_size: int, train: TrainConfig, embed_dim: int = 32, hidden: int = 64,
           resample=None, val_seqs=None) -> tuple[Params, list[float]]:
    """Fit a next-symbol GRU language model on the sequences of one class.

    ``resample`` (optional) returns a fresh list of training sequences for
    each epoch; early stopping uses ``val_seqs`` when given, else the
    training loss.
    """
    if len(seqs) < 10:
        raise ValueError("language model needs at least 10 training sequences")
    r_init, r_shuffle = [np.random.default_rng(s) for s in np.random.SeedSequence(train.seed).spawn(2)]
    params = init_lm(vocab_size, embed_dim, hidden, r_init)
    opt = make_optimizer(train.optimizer, train.lr)
    best = (np.inf, copy.deepcopy(params))
    wait = 0
    history = []
    for epoch in range(train.epochs):
        data = resample() if resample is not None else seqs
        order = r_shuffle.permutation(len(data))
        losses = []
        for s in range(0, len(order), train.batch_size):
            batch = [data[i] for i in order[s : s + train.batch_size]]
            loss, grads = lm_loss_and_grads(params, *lm_batch(batch, vocab_size))
            _check_finite(loss, grads, train)
            clip_by_global_norm(grads, train.clip_norm)
            opt.step(params, grads)
            losses.append(loss)
        if val_seqs:
            score = float(-lm_loglik(params, val_seqs, vocab_size).sum() / sum(len(s) + 1 for s in val_seqs))
        else:
            score = float(np.mean(losses))
        history.append(score)
        if score < best[0]:
            best = (score, copy.deepcopy(params))
            wait = 0
        else:
            wait += 1
            if wait >= train.patience:
                break
    return best[1], history


class RnnlmClassifier(_SequenceModel):
    """Two class-conditional language models; a logistic stacker on their per-symbol log-likelihoods."""

    kind = "rnnlm"

    def __init__(self, train=None, augment=None, stride=1, max_len=MAX_SEQ_LEN, embed_dim=32, hidden=64):
        super().__init__(train, augment, stride, max_len)
        self.embed_dim = embed_dim
        self.hidden = hidden

    def _truncate(self, seqs):
        out = []
        for s in seqs:
            if len(s) > self.max_len:
                self.truncated_ += 1
                s = s[: self.max_len]
            out.append(s)
        return out

    def fit(self, smiles, y):
        y = np.asarray(y, dtype=np.int64)
        if len(np.unique(y)) < 2:
            raise ValueError("RNNLM classification needs both classes in the training fold")
        mols = [s if isinstance(s, Molecule) else parse_smiles(s) for s in smiles]
        r_init, r_aug, _, r_split, r_val = self._rngs()
        self._fit_vocab(mols, r_aug)
        V = len(self.vocab_)
        k = self._train_walks()
        self.lms_ = {}
        self.lm_history_ = {}
        for cls in (1, 0):
            members = [mols[i] for i in np.flatnonzero(y == cls)]
            tr, va = stratified_holdout(np.zeros(len(members), dtype=int), self.train.val_fraction, r_split)
            tr_m = [members[i] for i in tr]
            va_m = [members[i] for i in va]
            sub = TrainConfig(**{**asdict(self.train), "seed": int(r_init.integers(2**31))})

            def resample(tr_m=tr_m):
                return self._truncate(self._encode(self._writings(tr_m, k, r_aug)))

            val = self._truncate(self._encode(self._writings(va_m, 1, r_val))) if va_m else None
            params, hist = lm_fit(resample(), V, sub, self.embed_dim, self.hidden, resample, val)
            self.lms_[cls] = params
            self.lm_history_[cls] = hist
        texts = self._writings(mols, 1, r_aug)
        self.stacker_ = LogisticStacker().fit(self._features(self._truncate(self._encode(texts))), y)
        self.params_ = {}
        return self

    def _features(self, seqs) -> np.ndarray:
        V = len(self.vocab_)
        ll1 = np.empty(len(seqs))
        ll0 = np.empty(len(seqs))
        order = np.argsort([len(s) for s in seqs], kind="stable")
        for s in range(0, len(order), 256):
            idx = order[s : s + 256]
            batch = [seqs[i] for i in idx]
            ll1[idx] = lm_loglik(self.lms_[1], batch, V)
            ll0[idx] = lm_loglik(self.lms_[0], batch, V)
        lengths = np.array([len(s) + 1 for s in seqs])
        return stacker_features(ll1, ll0, lengths)

    def predict_texts(self, texts):
        seqs = self._truncate(self._encode(list(texts)))
        return self.stacker_.predict_proba(self._features(seqs))

    def _meta(self):
        meta = super()._meta()
        meta["arch"] = {"embed_dim": self.embed_dim, "hidden": self.hidden}
        meta["stacker"] = self.stacker_.get_state()[0]
        return meta

    def get_state(self):
        arrays = {}
        for cls, params in self.lms_.items():
            arrays.update({f"lm{cls}_{k}": v for k, v in params.items()})
        arrays.update({f"stacker_{k}": v for k, v in self.stacker_.get_state()[1].items()})
        return self._meta(), arrays

    @classmethod
    def from_state(cls, meta, arrays):
        train, augment = cls._restore_common(meta)
        self = cls(train=train, augment=augment, stride=meta["stride"], max_len=meta["max_len"], **meta["arch"])
        self.vocab_ = Vocabulary.loads(meta["vocab"])
        self.lms_ = {c: {k[len(f"lm{c}_"):]: np.array(v) for k, v in arrays.items() if k.startswith(f"lm{c}_")}
                     for c in (0, 1)}
        self.stacker_ = LogisticStacker.from_state(
            meta["stacker"], {k[len("stacker_"):]: v for k, v in arrays.items() if k.startswith("stacker_")})
        self.params_ = {}
        return self


__all__ = ["CnnClassifier", "GruClassifier", "NumericalError", "RnnlmClassifier", "TrainConfig",
           "TrainingDiverged", "lm_fit"]
