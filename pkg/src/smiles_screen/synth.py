"""Random molecule generators for property tests and synthetic screening corpora."""

from __future__ import annotations

import numpy as np

from .smiles_core import Atom, Bond, BondOrder, Molecule, canonical_smiles

_PLAIN = ["C"] * 10 + ["N"] * 3 + ["O"] * 3 + ["S", "P", "B", "F", "Cl", "Br", "I", "*"]
_AROMATIC = ["C"] * 6 + ["N", "N", "O", "S", "P", "B"]
_EXOTIC = ["Na", "K", "Fe", "Se", "Zn", "Si", "Mg", "Li"]


def _random_atom(rng: np.random.Generator) -> Atom:
    u = rng.random()
    if u < 0.25:
        return Atom(str(rng.choice(_AROMATIC)), aromatic=True)
    if u < 0.85:
        return Atom(str(rng.choice(_PLAIN)))
    # bracket atom with a random mix of decorations
    if rng.random() < 0.3:
        element, aromatic = str(rng.choice(_EXOTIC)), False
    elif rng.random() < 0.3:
        element, aromatic = str(rng.choice(_AROMATIC)), True
    else:
        element, aromatic = str(rng.choice(_PLAIN)), False
    charge = int(rng.choice([0, 0, 1, -1, 2, -2, 3]))
    isotope = int(rng.integers(1, 250)) if rng.random() < 0.2 else None
    hcount = int(rng.integers(0, 4))
    return Atom(element, aromatic, charge, isotope, hcount, bracket=True)


def _random_order(rng: np.random.Generator, a: Atom, b: Atom) -> BondOrder:
    if a.aromatic and b.aromatic:
        return BondOrder.AROMATIC if rng.random() < 0.8 else BondOrder.SINGLE
    u = rng.random()
    if u < 0.7:
        return BondOrder.SINGLE
    if u < 0.88:
        return BondOrder.DOUBLE
    if u < 0.97:
        return BondOrder.TRIPLE
    return BondOrder.AROMATIC


def random_molecule(
    rng: np.random.Generator,
    min_atoms: int = 5,
    max_atoms: int = 60,
    ring_rate: float = 0.12,
) -> Molecule:
    """A random connected graph: a random tree plus a few ring-forming edges.

    No chemical sense is intended; the generator only has to exercise the
    grammar (branches, rings, charges, isotopes, every bond order).
    """
    n = int(rng.integers(min_atoms, max_atoms + 1))
    atoms = [_random_atom(rng) for _ in range(n)]
    pairs: set[tuple[int, int]] = set()
    bonds: list[Bond] = []
    for i in range(1, n):
        j = int(rng.integers(max(0, i - 6), i)) if rng.random() < 0.8 else int(rng.integers(0, i))
        pairs.add((j, i))
        bonds.append(Bond(j, i, _random_order(rng, atoms[j], atoms[i])))
    n_rings = int(rng.binomial(n, ring_rate)) if n >= 3 else 0
    for _ in range(n_rings):
        i, j = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
        if (i, j) in pairs:
            continue
        pairs.add((i, j))
        bonds.append(Bond(i, j, _random_order(rng, atoms[i], atoms[j])))
    return Molecule(tuple(atoms), tuple(bonds))


def random_carbon_molecule(rng: np.random.Generator, max_carbons: int = 25) -> Molecule:
    """Mostly-carbon molecule with hetero substituents and a few rings."""
    n_c = int(rng.integers(1, max_carbons + 1))
    n_het = int(rng.integers(0, max(1, n_c // 2) + 1))
    atoms: list[Atom] = []
    for _ in range(n_c):
        atoms.append(Atom("C", aromatic=bool(rng.random() < 0.2)))
    for _ in range(n_het):
        atoms.append(Atom(str(rng.choice(["N", "O", "S", "F", "Cl"]))))
    order = rng.permutation(len(atoms))
    atoms = [atoms[k] for k in order]
    bonds: list[Bond] = []
    pairs: set[tuple[int, int]] = set()
    for i in range(1, len(atoms)):
        j = int(rng.integers(0, i))
        pairs.add((j, i))
        bonds.append(Bond(j, i, BondOrder.SINGLE))
    for _ in range(int(rng.integers(0, 4))):
        if len(atoms) < 4:
            break
        i, j = sorted(int(x) for x in rng.choice(len(atoms), size=2, replace=False))
        if (i, j) not in pairs:
            pairs.add((i, j))
            bonds.append(Bond(i, j, BondOrder.SINGLE))
    return Molecule(tuple(atoms), tuple(bonds))


# --------------------------------------------------------------------------
# drug-like molecules with a planted activity motif


class _Builder:
    def __init__(self):
        self.atoms: list[Atom] = []
        self.bonds: list[Bond] = []

    def atom(self, element: str, aromatic: bool = False) -> int:
        self.atoms.append(Atom(element, aromatic))
        return len(self.atoms) - 1

    def bond(self, i: int, j: int, order: BondOrder = BondOrder.SINGLE) -> None:
        self.bonds.append(Bond(i, j, order))

    def ring(self, elements: list[str], aromatic: bool) -> list[int]:
        idx = [self.atom(e, aromatic) for e in elements]
        order = BondOrder.AROMATIC if aromatic else BondOrder.SINGLE
        for a, b in zip(idx, idx[1:] + idx[:1]):
            self.bond(a, b, order)
        return idx

    def chain(self, anchor: int, elements: list[str]) -> int:
        prev = anchor
        for e in elements:
            cur = self.atom(e)
            self.bond(prev, cur)
            prev = cur
        return prev

    def free_valence(self, i: int) -> int:
        cap = {"C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1}[self.atoms[i].element]
        if self.atoms[i].aromatic:
            cap -= 1
        used = 0
        for b in self.bonds:
            if i in (b.begin, b.end):
                used += {BondOrder.SINGLE: 1, BondOrder.DOUBLE: 2, BondOrder.TRIPLE: 3, BondOrder.AROMATIC: 1}[b.order]
        return cap - used

    def open_sites(self) -> list[int]:
        return [i for i, a in enumerate(self.atoms) if a.element == "C" and self.free_valence(i) > 0]

    def molecule(self) -> Molecule:
        return Molecule(tuple(self.atoms), tuple(self.bonds))


_RINGS = [
    (["C"] * 6, True),
    (["C"] * 6, True),
    (["C", "C", "N", "C", "C", "C"], True),
    (["C", "C", "C", "C", "C", "C"], False),
    (["C", "C", "N", "C", "C"], False),
    (["C", "C", "O", "C", "C"], False),
    (["C", "C", "C", "C", "S"], True),
]

_SUBSTITUENTS = [["F"], ["Cl"], ["O"], ["N"], ["C"], ["C", "C"], ["O", "C"], ["C", "O"], ["N", "C"]]


def _attach(b: _Builder, rng: np.random.Generator, element_chain: list[str]) -> int | None:
    sites = b.open_sites()
    if not sites:
        return None
    site = int(rng.choice(sites))
    return b.chain(site, element_chain)


def has_motif(m: Molecule) -> bool:
    """True when some sulfur is singly bonded to a carbon that is triple-bonded to nitrogen."""
    for s, atom in enumerate(m.atoms):
        if atom.element != "S":
            continue
        for c in m.adjacency[s]:
            if m.atoms[c].element != "C" or m.bond_order(s, c) != BondOrder.SINGLE:
                continue
            for nb in m.adjacency[c]:
                if m.atoms[nb].element == "N" and m.bond_order(c, nb) == BondOrder.TRIPLE:
                    return True
    return False


MOTIF_TOKENS = ("S", "C", "#", "N")


def drug_like_molecule(rng: np.random.Generator, active: bool) -> Molecule:
    """Ring scaffold plus substituents; actives carry an S-C#N group.

    Inactives (and some actives) carry decoys that share parts of the motif:
    nitriles on carbon and thioethers.
    """
    b = _Builder()
    elements, aromatic = _RINGS[int(rng.integers(len(_RINGS)))]
    core = b.ring(list(elements), aromatic)
    for _ in range(int(rng.integers(0, 3))):
        linker = _attach(b, rng, ["C"] * int(rng.integers(0, 3)) + (["N"] if rng.random() < 0.3 else []))
        if linker is None:
            break
        elements, aromatic = _RINGS[int(rng.integers(len(_RINGS)))]
        ring = b.ring(list(elements), aromatic)
        b.bond(linker if linker is not None else core[0], ring[0])
    for _ in range(int(rng.integers(1, 5))):
        _attach(b, rng, list(_SUBSTITUENTS[int(rng.integers(len(_SUBSTITUENTS)))]))
    if rng.random() < 0.25:
        site = _attach(b, rng, ["C", "O"])
        if site is not None:
            b.bond(site - 1, b.atom("O"), BondOrder.DOUBLE)
    # decoys: nitrile on carbon, sulfur in a chain
    if rng.random() < 0.45:
        c = _attach(b, rng, ["C"])
        if c is not None:
            b.bond(c, b.atom("N"), BondOrder.TRIPLE)
    if rng.random() < 0.45:
        _attach(b, rng, ["S", "C"] if rng.random() < 0.5 else ["C", "S"])
    if active:
        s = _attach(b, rng, ["S", "C"])
        if s is not None:
            b.bond(s, b.atom("N"), BondOrder.TRIPLE)
    return b.molecule()


def planted_motif_corpus(n: int, seed: int, active_fraction: float = 1 / 3) -> list[tuple[str, int]]:
    """``n`` canonical SMILES with labels; label is 1 iff the S-C#N motif is present."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        m = drug_like_molecule(rng, active=bool(rng.random() < active_fraction))
        out.append((canonical_smiles(m), int(has_motif(m))))
    return out
