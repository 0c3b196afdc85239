"""Randomised SMILES writings of a molecule (walk-based data augmentation)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .smiles_core import Molecule, WalkOrder, write_smiles


@dataclass(frozen=True)
class AugmentConfig:
    train_walks_per_molecule: int = 10
    predict_walks_per_molecule: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.train_walks_per_molecule < 1 or self.predict_walks_per_molecule < 1:
            raise ValueError("walk counts must be >= 1")


def random_walk(m: Molecule, rng: np.random.Generator) -> WalkOrder:
    """Uniform start atom, independently shuffled neighbour lists."""
    start = int(rng.integers(len(m.atoms)))
    order = []
    for adj in m.adjacency:
        if len(adj) < 2:
            order.append(adj)
        else:
            order.append(tuple(adj[k] for k in rng.permutation(len(adj))))
    return WalkOrder(start, tuple(order))


def random_smiles(m: Molecule, rng: np.random.Generator) -> str:
    return write_smiles(m, random_walk(m, rng))


def enumerate_smiles(m: Molecule, n: int, rng: np.random.Generator) -> list[str]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return [random_smiles(m, rng) for _ in range(n)]


def all_writings(m: Molecule) -> set[str]:
    """Every string reachable by some walk. Exponential; small molecules only."""
    from itertools import permutations, product

    out = set()
    per_atom = [list(permutations(adj)) for adj in m.adjacency]
    for start in range(len(m.atoms)):
        for order in product(*per_atom):
            out.add(write_smiles(m, WalkOrder(start, tuple(order))))
    return out
