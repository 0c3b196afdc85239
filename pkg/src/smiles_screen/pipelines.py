"""Model factories: every model kind behind ``fit(smiles, y)`` / ``predict_proba(smiles)``."""

from __future__ import annotations

import numpy as np

from .augment import AugmentConfig
from .classical import BernoulliNB, JaccardSVM, RandomForest
from .features import NGramFeaturizer, Vocabulary
from .neural.models import CnnClassifier, GruClassifier, RnnlmClassifier, TrainConfig
from .smiles_core import canonicalize

NGRAM_KINDS = ("svm", "nb", "rf", "dummy")
SEQUENCE_KINDS = ("cnn", "gru", "rnnlm")
MODEL_KINDS = NGRAM_KINDS + SEQUENCE_KINDS

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "svm": {"C": [0.1, 1.0, 10.0, 100.0]},
    "nb": {"alpha": [0.5, 1.0]},
    "rf": {"n_trees": [100, 200], "min_leaf": [1, 2]},
    "cnn": {"lr": [1e-3, 3e-4], "n_filters": [32, 64]},
    "gru": {"lr": [1e-3, 3e-4], "hidden": [32, 64]},
    "rnnlm": {"lr": [1e-3, 3e-4], "hidden": [32, 64]},
    "dummy": {},
}

DEFAULT_SETTINGS: dict[str, object] = {
    "outer_k": 5,
    "inner_k": 5,
    "ngram_lo": 1,
    "ngram_hi": 4,
    "stride": 1,
    "augment": True,
    "train_walks": 10,
    "predict_walks": 20,
    "optimizer": "adam",
    "lr": 1e-3,
    "batch_size": 32,
    "epochs": 100,
    "patience": 10,
    "clip_norm": 5.0,
    "val_fraction": 0.1,
    "regions": (5, 3),
    "n_filters": 64,
    "embed_dim": 32,
    "hidden": 64,
    "C": 1.0,
    "alpha": 1.0,
    "n_trees": 200,
    "min_leaf": 2,
}


class ConstantModel:
    """Predicts the training base rate for every sample."""

    kind = "dummy"

    def fit(self, X, y):
        self.rate_ = float(np.mean(y))
        return self

    def predict_proba(self, X):
        return np.full(X.shape[0], self.rate_)

    def get_state(self):
        return {"rate": self.rate_}, {}

    @classmethod
    def from_state(cls, meta, arrays):
        self = cls()
        self.rate_ = meta["rate"]
        return self


class NGramPipeline:
    """Canonical SMILES -> n-gram featurizer (fitted on training data only) -> classifier."""

    def __init__(self, model, featurizer: NGramFeaturizer):
        self.model = model
        self.featurizer = featurizer
        self.kind = model.kind

    def fit(self, smiles, y):
        canon = [canonicalize(s) for s in smiles]
        self.featurizer.fit(canon)
        self.model.fit(self.featurizer.matrix(canon), np.asarray(y))
        return self

    def predict_proba(self, smiles):
        return self.model.predict_proba(self.featurizer.matrix([canonicalize(s) for s in smiles]))

    def get_state(self):
        meta, arrays = self.model.get_state()
        f = self.featurizer
        meta = {"model": meta, "featurizer": {"n_range": list(f.n_range), "mode": f.mode, "unit": f.unit,
                                              "stride": f.stride, "vocab": f.vocab.dumps()},
                "vocab_ref": f.vocab.ref}
        return meta, arrays

    @classmethod
    def from_state(cls, kind, meta, arrays):
        fm = meta["featurizer"]
        featurizer = NGramFeaturizer(tuple(fm["n_range"]), fm["mode"], fm["unit"], fm["stride"])
        featurizer.vocab = Vocabulary.loads(fm["vocab"])
        return cls(_NGRAM_CLASSES[kind].from_state(meta["model"], arrays), featurizer)


_NGRAM_CLASSES = {"svm": JaccardSVM, "nb": BernoulliNB, "rf": RandomForest, "dummy": ConstantModel}
_SEQUENCE_CLASSES = {"cnn": CnnClassifier, "gru": GruClassifier, "rnnlm": RnnlmClassifier}


def make_estimator(kind: str, settings: dict, representation: str, seed: int):
    """Build an unfitted estimator for ``kind`` from merged settings."""
    s = {**DEFAULT_SETTINGS, **settings}
    if kind in NGRAM_KINDS:
        mode = "set" if kind == "svm" else "count"
        unit = "token" if representation == "ngram" else "symbol"
        featurizer = NGramFeaturizer((int(s["ngram_lo"]), int(s["ngram_hi"])), mode, unit, int(s["stride"]))
        if kind == "svm":
            model = JaccardSVM(float(s["C"]), seed=seed)
        elif kind == "nb":
            model = BernoulliNB(float(s["alpha"]))
        elif kind == "rf":
            model = RandomForest(int(s["n_trees"]), int(s["min_leaf"]), seed=seed)
        else:
            model = ConstantModel()
        return NGramPipeline(model, featurizer)
    if kind in SEQUENCE_KINDS:
        if representation != "symbols":
            raise ValueError(f"{kind} works on the 'symbols' representation only")
        train = TrainConfig(str(s["optimizer"]), float(s["lr"]), int(s["batch_size"]), int(s["epochs"]),
                            int(s["patience"]), seed, float(s["clip_norm"]), float(s["val_fraction"]))
        augment = None
        if s["augment"]:
            augment = AugmentConfig(int(s["train_walks"]), int(s["predict_walks"]), seed)
        common = dict(train=train, augment=augment, stride=int(s["stride"]))
        if kind == "cnn":
            return CnnClassifier(**common, regions=tuple(int(r) for r in s["regions"]), n_filters=int(s["n_filters"]))
        cls = _SEQUENCE_CLASSES[kind]
        return cls(**common, embed_dim=int(s["embed_dim"]), hidden=int(s["hidden"]))
    raise ValueError(f"unknown model kind {kind!r}")


def default_representation(kind: str) -> str:
    return "symbols" if kind in SEQUENCE_KINDS else "ngram"
