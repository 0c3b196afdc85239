from __future__ import annotations

import numpy as np

EPS = 1e-15


def log_loss(probabilities, labels) -> float:
    """Mean binary cross-entropy with probabilities clamped to ``[1e-15, 1 - 1e-15]``."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("probabilities must lie in [0, 1]")
    p = np.clip(p, EPS, 1 - EPS)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def accuracy(probabilities, labels, threshold: float = 0.5) -> float:
    p = np.asarray(probabilities)
    y = np.asarray(labels)
    return float(np.mean((p > threshold).astype(int) == y))
