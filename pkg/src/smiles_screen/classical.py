"""Non-neural classifiers on n-gram features: Jaccard-kernel SVM, Bernoulli NB, random forest."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import sparse
from scipy.special import expit, logsumexp

from .features import NGramSet
from .splits import fold_indices, stratified_assignment


class ProbClassifier(Protocol):
    def fit(self, X, y) -> "ProbClassifier": ...

    def predict_proba(self, X) -> np.ndarray: ...


def _check_binary(y, allow_single: bool = False) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if len(y) == 0:
        raise ValueError("no training samples")
    if not allow_single and len(np.unique(y)) < 2:
        raise ValueError("training labels contain a single class")
    return y


# --------------------------------------------------------------------------
# Jaccard kernel


def jaccard_kernel(a: NGramSet, b: NGramSet) -> float:
    if a.vocabulary_ref != b.vocabulary_ref:
        raise ValueError("n-gram sets come from different vocabularies")
    inter = len(a.keys & b.keys)
    union = len(a) + len(b) - inter
    return 1.0 if union == 0 else inter / union


def jaccard_gram(X, Y=None) -> np.ndarray:
    """Pairwise Jaccard similarity between rows of sparse matrices (nonzero = member)."""
    X = sparse.csr_matrix(X, dtype=np.float64, copy=True)
    X.data[:] = 1.0
    if Y is None:
        Y = X
    else:
        Y = sparse.csr_matrix(Y, dtype=np.float64, copy=True)
        Y.data[:] = 1.0
    inter = np.asarray((X @ Y.T).todense())
    sx = np.asarray(X.sum(axis=1)).ravel()
    sy = np.asarray(Y.sum(axis=1)).ravel()
    union = sx[:, None] + sy[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        K = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)
    return K


# --------------------------------------------------------------------------
# SVM dual solver


@dataclass
class DualSolution:
    alpha: np.ndarray
    rho: float
    kkt_gap: float
    iterations: int

    def objective(self, K: np.ndarray, y_pm: np.ndarray) -> float:
        """Dual objective ``sum(a) - 1/2 a'Qa`` (to be maximised)."""
        ay = self.alpha * y_pm
        return float(self.alpha.sum() - 0.5 * ay @ K @ ay)


_TAU = 1e-12


def smo_solve(K: np.ndarray, y_pm: np.ndarray, C: float, tol: float = 1e-3, max_iter: int | None = None) -> DualSolution:
    """Soft-margin SVM dual by sequential pairwise optimisation.

    Working pairs are picked with second-order information (maximal
    violating ``i``, then the ``j`` with the largest guaranteed decrease).
    Stops once the maximal KKT violation drops below ``tol``.
    """
    n = len(y_pm)
    y = y_pm.astype(np.float64)
    Q = (y[:, None] * y[None, :]) * K
    QD = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    max_iter = max_iter or max(10_000_000, 100 * n)
    pos = y > 0
    it = 0
    gap = math.inf
    while it < max_iter:
        up = np.where(pos, alpha < C, alpha > 0)  # may increase y*alpha
        low = np.where(pos, alpha > 0, alpha < C)
        score = -y * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        cand = np.where(up, score, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        gmin = np.min(np.where(low, score, np.inf))
        gap = gmax - gmin
        if gap < tol:
            break
        b = gmax - score
        ok = low & (b > 0)
        quad = QD[i] + QD - 2.0 * y * y[i] * Q[i]
        quad = np.where(quad > 0, quad, _TAU)
        obj = np.where(ok, -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))
        if not ok[j]:
            break
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            qc = QD[i] + QD[j] + 2.0 * Q[i, j]
            qc = qc if qc > 0 else _TAU
            delta = (-G[i] - G[j]) / qc
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            qc = QD[i] + QD[j] - 2.0 * Q[i, j]
            qc = qc if qc > 0 else _TAU
            delta = (G[i] - G[j]) / qc
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        alpha[i], alpha[j] = ni, nj
        G += Q[i] * (ni - ai) + Q[j] * (nj - aj)
        it += 1

    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub_mask = (at_upper & ~pos) | (at_lower & pos)
        lb_mask = (at_upper & pos) | (at_lower & ~pos)
        ub = yG[ub_mask].min() if ub_mask.any() else math.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -math.inf
        rho = float((ub + lb) / 2)
    return DualSolution(alpha, rho, float(gap), it)


def platt_fit(decision: np.ndarray, y: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Sigmoid ``1 / (1 + exp(A f + B))`` fitted by Newton's method with backtracking.

    Targets are smoothed toward the class priors to avoid overfitting.
    """
    f = np.asarray(decision, dtype=np.float64)
    y = np.asarray(y)
    n1 = int((y == 1).sum())
    n0 = len(y) - n1
    t = np.where(y == 1, (n1 + 1.0) / (n1 + 2.0), 1.0 / (n0 + 2.0))
    A, B = 0.0, math.log((n0 + 1.0) / (n1 + 1.0))

    def loss(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))), (t - 1) * z + np.log1p(np.exp(-np.abs(z))))))

    fval = loss(A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = np.where(z >= 0, np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))), 1 / (1 + np.exp(-np.abs(z))))
        q = 1 - p
        d2 = p * q
        h11 = 1e-12 + float(np.sum(f * f * d2))
        h22 = 1e-12 + float(np.sum(d2))
        h21 = float(np.sum(f * d2))
        d1 = t - p
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = loss(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2
        else:
            break
    return A, B


def platt_proba(decision: np.ndarray, A: float, B: float) -> np.ndarray:
    p = expit(-(np.asarray(decision) * A + B))
    # keep strictly inside (0, 1)
    return np.clip(p, 1e-15, 1 - 1e-15)


@dataclass
class SvmModel:
    support: np.ndarray  # indices into the training set
    dual_coef: np.ndarray  # alpha_i * y_i for the support samples
    rho: float
    platt_a: float
    platt_b: float
    C: float
    kkt_gap: float

    def decision(self, K_rows: np.ndarray) -> np.ndarray:
        """Decision values from kernel rows against the support samples."""
        return K_rows @ self.dual_coef - self.rho

    def proba(self, K_rows: np.ndarray) -> np.ndarray:
        return platt_proba(self.decision(K_rows), self.platt_a, self.platt_b)


def _dual_model(K, y, C, tol):
    y_pm = np.where(y == 1, 1.0, -1.0)
    sol = smo_solve(K, y_pm, C, tol)
    sv = np.flatnonzero(sol.alpha > 0)
    return sol, sv, (sol.alpha * y_pm)[sv]


def svm_fit(gram: np.ndarray, labels, C: float = 1.0, tol: float = 1e-3, calib_folds: int = 3, seed: int = 0) -> SvmModel:
    """Train on a precomputed Gram matrix, then Platt-calibrate on out-of-fold decision values."""
    y = _check_binary(labels)
    if C <= 0:
        raise ValueError("C must be positive")
    K = np.asarray(gram, dtype=np.float64)
    sol, sv, coef = _dual_model(K, y, C, tol)

    counts = np.bincount(y, minlength=2)
    if counts.min() >= calib_folds:
        oof = np.empty(len(y))
        assignment = stratified_assignment(y, calib_folds, seed)
        for f in range(calib_folds):
            tr, te = fold_indices(assignment, f)
            s_f, sv_f, c_f = _dual_model(K[np.ix_(tr, tr)], y[tr], C, tol)
            oof[te] = K[np.ix_(te, tr[sv_f])] @ c_f - s_f.rho
    else:
        oof = K[:, sv] @ coef - sol.rho
    A, B = platt_fit(oof, y)
    return SvmModel(sv, coef, sol.rho, A, B, C, sol.kkt_gap)


class JaccardSVM:
    """SVM with the Jaccard kernel on binary n-gram rows."""

    kind = "svm"

    def __init__(self, C: float = 1.0, tol: float = 1e-3, seed: int = 0):
        self.C = C
        self.tol = tol
        self.seed = seed

    def fit(self, X, y):
        X = sparse.csr_matrix(X)
        self.model_ = svm_fit(jaccard_gram(X), y, self.C, self.tol, seed=self.seed)
        self.support_rows_ = X[self.model_.support]
        return self

    def decision_function(self, X) -> np.ndarray:
        return self.model_.decision(jaccard_gram(X, self.support_rows_))

    def predict_proba(self, X) -> np.ndarray:
        return self.model_.proba(jaccard_gram(X, self.support_rows_))

    def get_state(self):
        m = self.model_
        rows = sparse.csr_matrix(self.support_rows_)
        meta = {"C": self.C, "tol": self.tol, "seed": self.seed, "rho": m.rho, "platt_a": m.platt_a,
                "platt_b": m.platt_b, "kkt_gap": m.kkt_gap, "n_features": rows.shape[1]}
        arrays = {"support": m.support, "dual_coef": m.dual_coef, "sv_indptr": rows.indptr,
                  "sv_indices": rows.indices, "sv_data": rows.data}
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        self = cls(meta["C"], meta["tol"], meta["seed"])
        self.model_ = SvmModel(arrays["support"], arrays["dual_coef"], meta["rho"], meta["platt_a"],
                               meta["platt_b"], meta["C"], meta["kkt_gap"])
        n_sv = len(arrays["sv_indptr"]) - 1
        self.support_rows_ = sparse.csr_matrix(
            (arrays["sv_data"], arrays["sv_indices"], arrays["sv_indptr"]), shape=(n_sv, meta["n_features"]))
        return self


# --------------------------------------------------------------------------
# Bernoulli naive Bayes


class BernoulliNB:
    kind = "nb"

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def fit(self, X, y):
        y = _check_binary(y)
        Xb = (sparse.csr_matrix(X) > 0).astype(np.float64)
        counts = np.bincount(y, minlength=2).astype(np.float64)
        self.class_log_prior_ = np.log(counts / counts.sum())
        present = np.vstack([np.asarray(Xb[y == c].sum(axis=0)).ravel() for c in (0, 1)])
        prob = (present + self.alpha) / (counts[:, None] + 2 * self.alpha)
        self.log_p_ = np.log(prob)
        self.log_q_ = np.log1p(-prob)
        return self

    def joint_log_likelihood(self, X) -> np.ndarray:
        Xb = (sparse.csr_matrix(X) > 0).astype(np.float64)
        base = self.class_log_prior_ + self.log_q_.sum(axis=1)
        return np.asarray(Xb @ (self.log_p_ - self.log_q_).T) + base

    def predict_proba(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        return np.exp(jll[:, 1] - logsumexp(jll, axis=1))

    def get_state(self):
        return {"alpha": self.alpha}, {"class_log_prior": self.class_log_prior_, "log_p": self.log_p_, "log_q": self.log_q_}

    @classmethod
    def from_state(cls, meta, arrays):
        self = cls(meta["alpha"])
        self.class_log_prior_ = arrays["class_log_prior"]
        self.log_p_ = arrays["log_p"]
        self.log_q_ = arrays["log_q"]
        return self


# --------------------------------------------------------------------------
# random forest


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # positive-class frequency at each node

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


def _best_split(Xn: np.ndarray, yn: np.ndarray, wn: np.ndarray, features: np.ndarray, min_leaf: int):
    """Best Gini split over ``features`` for the node samples.

    Returns ``(gain, feature, threshold)`` or ``None``. Ties keep the lowest
    feature index, then the lowest threshold.
    """
    sub = Xn[:, features]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    w = wn[order]
    wp = (wn * yn)[order]
    cw = np.cumsum(w, axis=0)[:-1]
    cp = np.cumsum(wp, axis=0)[:-1]
    total_w = wn.sum()
    total_p = (wn * yn).sum()
    valid = (xs[1:] > xs[:-1]) & (cw >= min_leaf) & (total_w - cw >= min_leaf)
    if not valid.any():
        return None
    rw = total_w - cw
    rp = total_p - cp
    with np.errstate(invalid="ignore", divide="ignore"):
        gini_l = 1 - (cp / cw) ** 2 - (1 - cp / cw) ** 2
        gini_r = 1 - (rp / rw) ** 2 - (1 - rp / rw) ** 2
    p = total_p / total_w
    parent = 1 - p * p - (1 - p) * (1 - p)
    gain = parent - (cw * gini_l + rw * gini_r) / total_w
    gain = np.where(valid, gain, -np.inf)
    best = gain.max()
    if not best > 1e-12:
        return None
    rows, cols = np.nonzero(gain >= best - 1e-12)
    # lowest feature index, then lowest threshold position
    pick = min(zip(features[cols], rows, cols))
    f, r, c = pick
    thr = (xs[r, c] + xs[r + 1, c]) / 2.0
    return best, int(f), float(thr)


def grow_tree(X: np.ndarray, y: np.ndarray, weights: np.ndarray, max_features: int, min_leaf: int,
              rng: np.random.Generator) -> Tree:
    n_features = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        w = weights[idx]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float((w * y[idx]).sum() / w.sum()))
        return len(feature) - 1

    root_idx = np.flatnonzero(weights > 0)
    stack = [(new_node(root_idx), root_idx)]
    while stack:
        node, idx = stack.pop()
        v = value[node]
        if v in (0.0, 1.0) or weights[idx].sum() < 2 * min_leaf:
            continue
        Xn = X[idx]
        # candidate features: first `max_features` non-constant ones in a random order
        perm = rng.permutation(n_features)
        chosen: list[int] = []
        for start in range(0, n_features, 4 * max_features):
            block = perm[start : start + 4 * max_features]
            cols = Xn[:, block]
            nonconst = block[cols.max(axis=0) > cols.min(axis=0)]
            chosen.extend(nonconst[: max_features - len(chosen)].tolist())
            if len(chosen) >= max_features:
                break
        if not chosen:
            continue
        split = _best_split(Xn, y[idx], weights[idx], np.array(sorted(chosen)), min_leaf)
        if split is None:
            continue
        _, f, thr = split
        mask = Xn[:, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        ln = new_node(li)
        rn = new_node(ri)
        left[node], right[node] = ln, rn
        stack.append((rn, ri))
        stack.append((ln, li))
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value))


class RandomForest:
    kind = "rf"

    def __init__(self, n_trees: int = 200, min_leaf: int = 2, seed: int = 0):
        self.n_trees = n_trees
        self.min_leaf = min_leaf
        self.seed = seed

    def fit(self, X, y):
        # a one-class forest is legal and predicts that class everywhere
        y = _check_binary(y, allow_single=True).astype(np.float64)
        X = np.asarray(sparse.csr_matrix(X).todense(), dtype=np.float64)
        n, F = X.shape
        max_features = max(1, int(math.sqrt(F)))
        rng = np.random.default_rng(self.seed)
        self.trees_ = []
        for _ in range(self.n_trees):
            boot = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
            self.trees_.append(grow_tree(X, y, boot, max_features, self.min_leaf, rng))
        self.n_features_ = F
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(sparse.csr_matrix(X).todense(), dtype=np.float64)
        return np.mean([t.predict(X) for t in self.trees_], axis=0)

    def get_state(self):
        meta = {"n_trees": self.n_trees, "min_leaf": self.min_leaf, "seed": self.seed, "n_features": self.n_features_}
        arrays = {}
        for k, t in enumerate(self.trees_):
            for name in ("feature", "threshold", "left", "right", "value"):
                arrays[f"tree{k}_{name}"] = getattr(t, name)
        return meta, arrays

    @classmethod
    def from_state(cls, meta, arrays):
        self = cls(meta["n_trees"], meta["min_leaf"], meta["seed"])
        self.n_features_ = meta["n_features"]
        self.trees_ = [
            Tree(*(arrays[f"tree{k}_{name}"] for name in ("feature", "threshold", "left", "right", "value")))
            for k in range(meta["n_trees"])
        ]
        return self
