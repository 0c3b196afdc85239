from __future__ import annotations

from typing import Sequence

import numpy as np


def stratified_assignment(labels: Sequence[int], k: int, seed: int | np.random.SeedSequence) -> np.ndarray:
    """Fold index per sample.

    Each class is shuffled with ``seed`` and dealt round-robin into ``k``
    folds; dealing continues where the previous class stopped so total fold
    sizes stay balanced too.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    assignment = np.full(len(labels), -1, dtype=np.int64)
    offset = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            raise ValueError(f"class {cls} has {len(members)} members, fewer than k={k}")
        members = members[rng.permutation(len(members))]
        assignment[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return assignment


def fold_indices(assignment: np.ndarray, fold: int) -> tuple[np.ndarray, np.ndarray]:
    return np.flatnonzero(assignment != fold), np.flatnonzero(assignment == fold)


def stratified_holdout(labels: Sequence[int], fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Split off roughly ``fraction`` of each class (at least one per class)."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    held = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        n = max(1, int(round(fraction * len(members)))) if len(members) > 1 else 0
        held.extend(members[:n].tolist())
    held_mask = np.zeros(len(labels), dtype=bool)
    held_mask[held] = True
    return np.flatnonzero(~held_mask), np.flatnonzero(held_mask)
