"""SMILES lexing, parsing, writing, canonical ranking and graph isomorphism.

Only a practical subset of the grammar is handled: organic-subset atoms,
lowercase aromatic atoms, bracket atoms, the bond symbols ``- = # : / \\``,
ring closures (``0``-``9`` and ``%nn``) and branches. Stereo markers are
read and dropped, ``.`` (multi-fragment input) is rejected.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

ORGANIC = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I", "*"})
AROMATIC_ELEMENTS = frozenset({"B", "C", "N", "O", "P", "S"})
_DIGITS = "0123456789"
_BOND_CHARS = "-=#:/\\"
_MAX_RING_LABEL = 99


class BondOrder(enum.IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4


_BOND_SYMBOL_ORDER = {
    "-": BondOrder.SINGLE,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
}
_ORDER_SYMBOL = {
    BondOrder.SINGLE: "-",
    BondOrder.DOUBLE: "=",
    BondOrder.TRIPLE: "#",
    BondOrder.AROMATIC: ":",
}

DIAGNOSTIC_KINDS = (
    "unexpected_char",
    "unclosed_ring",
    "unclosed_branch",
    "unclosed_bracket",
    "bond_conflict",
    "empty_input",
    "multi_fragment",
)


@dataclass(frozen=True)
class ParseDiagnostic:
    position: int
    message: str
    kind: str

    def __str__(self) -> str:
        return f"ERROR {self.position}: {self.kind}: {self.message}"


class SmilesError(ValueError):
    """Raised for malformed SMILES; carries a :class:`ParseDiagnostic`."""

    def __init__(self, diagnostic: ParseDiagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic

    @property
    def position(self) -> int:
        return self.diagnostic.position

    @property
    def kind(self) -> str:
        return self.diagnostic.kind


def _fail(position: int, kind: str, message: str) -> SmilesError:
    return SmilesError(ParseDiagnostic(position, message, kind))


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    charge: int = 0
    isotope: int | None = None
    explicit_h: int | None = None
    bracket: bool = False

    def __post_init__(self):
        if self.aromatic and self.element not in AROMATIC_ELEMENTS:
            raise ValueError(f"element {self.element!r} cannot be aromatic")
        if self.bracket:
            if self.explicit_h is None or self.explicit_h < 0:
                raise ValueError("bracket atoms carry a non-negative hydrogen count")
            if self.isotope is not None and self.isotope <= 0:
                raise ValueError("isotope must be positive")
        else:
            if self.element not in ORGANIC:
                raise ValueError(f"{self.element!r} must be written in brackets")
            if self.charge or self.isotope is not None or self.explicit_h is not None:
                raise ValueError("charge, isotope and H count require a bracket atom")

    def invariant(self) -> tuple:
        """Sortable tuple of every attribute that takes part in graph equality."""
        return (
            self.element,
            self.aromatic,
            self.charge,
            self.isotope or 0,
            -1 if self.explicit_h is None else self.explicit_h,
            self.bracket,
        )


@dataclass(frozen=True)
class Bond:
    begin: int
    end: int
    order: BondOrder = BondOrder.SINGLE

    @property
    def endpoints(self) -> frozenset[int]:
        return frozenset((self.begin, self.end))


@dataclass(frozen=True, eq=False)
class Molecule:
    """Connected, attributed, undirected molecular graph.

    ``adjacency[i]`` lists neighbours in bond-insertion order, which for
    parsed molecules is the order they were met while reading the string.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...] = ()
    adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    _orders: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "bonds", tuple(self.bonds))
        n = len(self.atoms)
        if n == 0:
            raise ValueError("a molecule needs at least one atom")
        adj: list[list[int]] = [[] for _ in range(n)]
        orders: dict[tuple[int, int], BondOrder] = {}
        for b in self.bonds:
            i, j = b.begin, b.end
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"bad bond endpoints {i}-{j}")
            key = (min(i, j), max(i, j))
            if key in orders:
                raise ValueError(f"duplicate bond {i}-{j}")
            orders[key] = BondOrder(b.order)
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "adjacency", tuple(tuple(a) for a in adj))
        object.__setattr__(self, "_orders", orders)
        if _component_size(self.adjacency, 0) != n:
            raise ValueError("molecule graph is not connected")

    def __len__(self) -> int:
        return len(self.atoms)

    def bond_order(self, i: int, j: int) -> BondOrder:
        return self._orders[(i, j) if i < j else (j, i)]

    def has_bond(self, i: int, j: int) -> bool:
        return ((i, j) if i < j else (j, i)) in self._orders

    def relabel(self, perm: Sequence[int]) -> "Molecule":
        """Return the same graph with atom ``i`` moved to position ``perm[i]``."""
        n = len(self.atoms)
        if sorted(perm) != list(range(n)):
            raise ValueError("perm must be a permutation of atom indices")
        atoms: list[Atom | None] = [None] * n
        for i, a in enumerate(self.atoms):
            atoms[perm[i]] = a
        bonds = [Bond(perm[b.begin], perm[b.end], b.order) for b in self.bonds]
        return Molecule(tuple(atoms), tuple(bonds))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Molecule):
            return NotImplemented
        return self.atoms == other.atoms and self._orders == other._orders

    def __hash__(self) -> int:
        return hash((self.atoms, frozenset(self._orders.items())))


def _component_size(adjacency, start: int) -> int:
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for b in adjacency[a]:
            if b not in seen:
                seen.add(b)
                stack.append(b)
    return len(seen)


# --------------------------------------------------------------------------
# lexer


@dataclass(frozen=True)
class Token:
    text: str
    kind: str  # atom, bracket_atom, bond, ring_closure, branch_open, branch_close, dot
    start: int


def lex(text: str, start: int = 0, stop: int | None = None) -> list[Token]:
    """Split ``text[start:stop]`` into tokens; offsets refer to ``text``."""
    stop = len(text) if stop is None else stop
    tokens: list[Token] = []
    i = start
    while i < stop:
        c = text[i]
        if c == "[":
            j = text.find("]", i + 1, stop)
            if j < 0:
                raise _fail(i, "unclosed_bracket", "'[' without matching ']'")
            tokens.append(Token(text[i : j + 1], "bracket_atom", i))
            i = j + 1
        elif c in "CB" and i + 1 < stop and text[i : i + 2] in ("Cl", "Br"):
            tokens.append(Token(text[i : i + 2], "atom", i))
            i += 2
        elif c in ORGANIC or c in "bcnops":
            tokens.append(Token(c, "atom", i))
            i += 1
        elif c in _BOND_CHARS:
            tokens.append(Token(c, "bond", i))
            i += 1
        elif c in _DIGITS:
            tokens.append(Token(c, "ring_closure", i))
            i += 1
        elif c == "%":
            if i + 2 < stop and text[i + 1] in _DIGITS and text[i + 2] in _DIGITS:
                tokens.append(Token(text[i : i + 3], "ring_closure", i))
                i += 3
            else:
                raise _fail(i, "unexpected_char", "'%' must be followed by two digits")
        elif c == "(":
            tokens.append(Token(c, "branch_open", i))
            i += 1
        elif c == ")":
            tokens.append(Token(c, "branch_close", i))
            i += 1
        elif c == ".":
            tokens.append(Token(c, "dot", i))
            i += 1
        else:
            raise _fail(i, "unexpected_char", f"unexpected character {c!r}")
    return tokens


def _parse_bracket(token: Token) -> Atom:
    """Decode ``[isotope? element chirality? Hcount? charge?]``."""
    s = token.text
    pos = 1
    end = len(s) - 1

    def err(p: int, msg: str) -> SmilesError:
        return _fail(token.start + p, "unexpected_char", msg)

    isotope = None
    q = pos
    while q < end and s[q] in _DIGITS:
        q += 1
    if q > pos:
        if s[pos] == "0" or q - pos > 3:
            raise err(pos, "isotope must be a positive integer of at most 3 digits")
        isotope = int(s[pos:q])
        pos = q

    if pos >= end:
        raise err(pos, "bracket atom lacks an element symbol")
    c = s[pos]
    aromatic = False
    if c == "*":
        element = "*"
        pos += 1
    elif "A" <= c <= "Z":
        if pos + 1 < end and "a" <= s[pos + 1] <= "z":
            element = s[pos : pos + 2]
            pos += 2
        else:
            element = c
            pos += 1
    elif c in "bcnops":
        element = c.upper()
        aromatic = True
        pos += 1
    else:
        raise err(pos, f"unexpected character {c!r} in bracket atom")

    if pos < end and s[pos] == "@":
        pos += 1
        if pos < end and s[pos] == "@":
            pos += 1

    hcount = 0
    if pos < end and s[pos] == "H":
        pos += 1
        q = pos
        while q < end and s[q] in _DIGITS:
            q += 1
        if q - pos > 2:
            raise err(pos, "hydrogen count too large")
        hcount = int(s[pos:q]) if q > pos else 1
        pos = q

    charge = 0
    if pos < end and s[pos] in "+-":
        sign = 1 if s[pos] == "+" else -1
        pos += 1
        if pos < end and s[pos] == s[pos - 1]:
            q = pos
            while q < end and s[q] == s[pos]:
                q += 1
            charge = sign * (q - pos + 1)
            pos = q
        else:
            q = pos
            while q < end and s[q] in _DIGITS:
                q += 1
            if q - pos > 2:
                raise err(pos, "charge magnitude too large")
            charge = sign * (int(s[pos:q]) if q > pos else 1)
            pos = q

    if pos != end:
        raise err(pos, f"unexpected character {s[pos]!r} in bracket atom")
    return Atom(element, aromatic, charge, isotope, hcount, bracket=True)


def _organic_atom(text: str) -> Atom:
    if text in ("b", "c", "n", "o", "p", "s"):
        return Atom(text.upper(), aromatic=True)
    return Atom(text)


def _ring_label(text: str) -> int:
    return int(text[1:]) if text.startswith("%") else int(text)


def _default_order(a: Atom, b: Atom) -> BondOrder:
    return BondOrder.AROMATIC if a.aromatic and b.aromatic else BondOrder.SINGLE


def parse_smiles(text: str) -> Molecule:
    """Parse a single-fragment SMILES string.

    Atoms are numbered in reading order. Raises :class:`SmilesError` with an
    exact character offset for malformed input.
    """
    start = 0
    stop = len(text)
    while start < stop and text[start].isspace():
        start += 1
    while stop > start and text[stop - 1].isspace():
        stop -= 1
    if start == stop:
        raise _fail(0, "empty_input", "empty SMILES")

    tokens = lex(text, start, stop)
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    bonded: set[tuple[int, int]] = set()
    prev: int | None = None
    pending: tuple[BondOrder, int] | None = None
    branches: list[tuple[int, int]] = []
    rings: dict[int, tuple[int, BondOrder | None, int]] = {}
    last_kind = None

    def add_bond(i: int, j: int, order: BondOrder, pos: int):
        key = (min(i, j), max(i, j))
        if i == j or key in bonded:
            raise _fail(pos, "bond_conflict", f"atoms {i} and {j} would be bonded twice")
        bonded.add(key)
        bonds.append(Bond(i, j, order))

    for tok in tokens:
        kind = tok.kind
        if kind in ("atom", "bracket_atom"):
            atom = _parse_bracket(tok) if kind == "bracket_atom" else _organic_atom(tok.text)
            idx = len(atoms)
            atoms.append(atom)
            if prev is not None:
                order = pending[0] if pending else _default_order(atoms[prev], atom)
                add_bond(prev, idx, order, tok.start)
            pending = None
            prev = idx
        elif kind == "bond":
            if prev is None or pending is not None:
                raise _fail(tok.start, "unexpected_char", f"bond {tok.text!r} out of place")
            pending = (_BOND_SYMBOL_ORDER[tok.text], tok.start)
        elif kind == "ring_closure":
            if prev is None:
                raise _fail(tok.start, "unexpected_char", "ring closure before any atom")
            if last_kind == "branch_open":
                raise _fail(tok.start, "unexpected_char", "ring closure at the start of a branch")
            label = _ring_label(tok.text)
            order = pending[0] if pending else None
            if label in rings:
                opener, open_order, _ = rings.pop(label)
                if order is not None and open_order is not None and order != open_order:
                    raise _fail(tok.start, "bond_conflict", f"ring {label} bond orders disagree")
                order = order or open_order or _default_order(atoms[opener], atoms[prev])
                add_bond(opener, prev, order, tok.start)
            else:
                rings[label] = (prev, order, tok.start)
            pending = None
        elif kind == "branch_open":
            if prev is None or pending is not None or last_kind == "branch_open":
                raise _fail(tok.start, "unexpected_char", "'(' out of place")
            branches.append((prev, tok.start))
        elif kind == "branch_close":
            if not branches or pending is not None or last_kind == "branch_open":
                raise _fail(tok.start, "unexpected_char", "')' out of place")
            prev = branches.pop()[0]
        else:
            raise _fail(tok.start, "multi_fragment", "multi-fragment SMILES are not supported")
        last_kind = kind

    if pending is not None:
        raise _fail(stop, "unexpected_char", "SMILES ends with a dangling bond")
    if branches:
        raise _fail(branches[-1][1], "unclosed_branch", "'(' never closed")
    if rings:
        pos = min(p for _, _, p in rings.values())
        raise _fail(pos, "unclosed_ring", "ring closure never closed")
    return Molecule(tuple(atoms), tuple(bonds))


def try_parse(text: str) -> Molecule | ParseDiagnostic:
    """Like :func:`parse_smiles` but returns the diagnostic instead of raising."""
    try:
        return parse_smiles(text)
    except SmilesError as exc:
        return exc.diagnostic


# --------------------------------------------------------------------------
# writer


@dataclass(frozen=True)
class WalkOrder:
    start_atom: int
    neighbor_order: tuple[tuple[int, ...], ...]

    def validate(self, m: Molecule) -> None:
        if not 0 <= self.start_atom < len(m.atoms):
            raise ValueError(f"start atom {self.start_atom} out of range")
        if len(self.neighbor_order) != len(m.atoms):
            raise ValueError("walk must give a neighbour order for every atom")
        for i, (order, adj) in enumerate(zip(self.neighbor_order, m.adjacency)):
            if sorted(order) != sorted(adj):
                raise ValueError(f"neighbour order of atom {i} is not a permutation of its neighbours")


def natural_walk(m: Molecule, start: int = 0) -> WalkOrder:
    return WalkOrder(start, m.adjacency)


def atom_smiles(atom: Atom) -> str:
    if not atom.bracket:
        return atom.element.lower() if atom.aromatic else atom.element
    parts = ["["]
    if atom.isotope is not None:
        parts.append(str(atom.isotope))
    parts.append(atom.element.lower() if atom.aromatic else atom.element)
    if atom.explicit_h:
        parts.append("H" if atom.explicit_h == 1 else f"H{atom.explicit_h}")
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        mag = abs(atom.charge)
        parts.append(sign if mag == 1 else f"{sign}{mag}")
    parts.append("]")
    return "".join(parts)


def _bond_symbol(m: Molecule, i: int, j: int) -> str:
    order = m.bond_order(i, j)
    if order == _default_order(m.atoms[i], m.atoms[j]):
        return ""
    return _ORDER_SYMBOL[order]


def _label_text(label: int) -> str:
    return str(label) if label < 10 else f"%{label:02d}"


def write_smiles(m: Molecule, walk: WalkOrder) -> str:
    """Write ``m`` along the depth-first walk ``walk``.

    Ring-closure labels are allocated smallest-free-first; bond symbols are
    emitted only where the parser's default would differ.
    """
    walk.validate(m)
    n = len(m.atoms)
    parent = [-1] * n
    seen = [False] * n
    children: list[list[int]] = [[] for _ in range(n)]
    ring_open: list[list[int]] = [[] for _ in range(n)]  # ancestor -> descendants
    ring_close: list[list[int]] = [[] for _ in range(n)]  # descendant -> ancestors
    recorded: set[tuple[int, int]] = set()

    start = walk.start_atom
    seen[start] = True
    stack = [(start, iter(walk.neighbor_order[start]))]
    while stack:
        a, it = stack[-1]
        for nb in it:
            if nb == parent[a]:
                continue
            if seen[nb]:
                key = (min(a, nb), max(a, nb))
                if key not in recorded:
                    recorded.add(key)
                    ring_open[nb].append(a)
                    ring_close[a].append(nb)
                continue
            seen[nb] = True
            parent[nb] = a
            children[a].append(nb)
            stack.append((nb, iter(walk.neighbor_order[nb])))
            break
        else:
            stack.pop()

    # ring openings at an ancestor follow the walk's neighbour order
    for a in range(n):
        if len(ring_open[a]) > 1:
            rank = {b: k for k, b in enumerate(walk.neighbor_order[a])}
            ring_open[a].sort(key=rank.__getitem__)

    out: list[str] = []
    free = list(range(1, _MAX_RING_LABEL + 1))
    held: dict[tuple[int, int], int] = {}
    work: list[tuple[str, int, str]] = [("atom", start, "")]
    while work:
        what, a, text = work.pop()
        if what == "text":
            out.append(text)
            continue
        out.append(text)
        out.append(atom_smiles(m.atoms[a]))
        closing = [held.pop((anc, a)) for anc in ring_close[a]]
        for label in closing:
            out.append(_label_text(label))
        for desc in ring_open[a]:
            if not free:
                raise ValueError("more than 99 simultaneously open rings")
            free.sort()
            label = free.pop(0)
            held[(a, desc)] = label
            out.append(_bond_symbol(m, a, desc) + _label_text(label))
        free.extend(closing)
        kids = children[a]
        if kids:
            last = kids[-1]
            work.append(("atom", last, _bond_symbol(m, a, last)))
            for k in reversed(kids[:-1]):
                work.append(("text", -1, ")"))
                work.append(("atom", k, _bond_symbol(m, a, k)))
                work.append(("text", -1, "("))
    return "".join(out)


# --------------------------------------------------------------------------
# canonical ranking


def _dense_ranks(keys: Sequence) -> list[int]:
    order = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [order[k] for k in keys]


def _edge_lists(m: Molecule) -> list[list[tuple[int, int]]]:
    return [[(int(m.bond_order(i, j)), j) for j in m.adjacency[i]] for i in range(len(m.atoms))]


def _refine(ranks: list[int], edges: list[list[tuple[int, int]]]) -> list[int]:
    """Iterate neighbourhood refinement until the partition stops splitting."""
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((o, ranks[j]) for o, j in edges[i])))
            for i in range(len(ranks))
        ]
        new = _dense_ranks(keys)
        k = len(set(new))
        if k == n_classes:
            return new
        ranks, n_classes = new, k


def refined_classes(m: Molecule) -> list[int]:
    """Stable refinement classes before any tie-breaking."""
    edges = _edge_lists(m)
    initial = [a.invariant() + (len(m.adjacency[i]),) for i, a in enumerate(m.atoms)]
    return _refine(_dense_ranks(initial), edges)


def canonical_ranks(m: Molecule) -> list[int]:
    """Permutation-invariant atom ranks 0..n-1.

    Ties left after refinement are broken by splitting off the lowest-index
    atom of the lowest tied class and refining again.
    """
    edges = _edge_lists(m)
    ranks = refined_classes(m)
    n = len(ranks)
    while len(set(ranks)) < n:
        counts: dict[int, int] = defaultdict(int)
        for r in ranks:
            counts[r] += 1
        tied = min(r for r, c in counts.items() if c > 1)
        chosen = ranks.index(tied)
        keys = [2 * r - (1 if i == chosen else 0) for i, r in enumerate(ranks)]
        ranks = _refine(_dense_ranks(keys), edges)
    return ranks


def canonical_walk(m: Molecule, ranks: Sequence[int] | None = None) -> WalkOrder:
    ranks = canonical_ranks(m) if ranks is None else ranks
    start = min(range(len(ranks)), key=ranks.__getitem__)
    order = tuple(tuple(sorted(adj, key=ranks.__getitem__)) for adj in m.adjacency)
    return WalkOrder(start, order)


def canonical_smiles(m: Molecule) -> str:
    return write_smiles(m, canonical_walk(m))


def canonicalize(text: str) -> str:
    return canonical_smiles(parse_smiles(text))


# --------------------------------------------------------------------------
# isomorphism


def is_isomorphic(a: Molecule, b: Molecule) -> bool:
    """Exact attributed-graph isomorphism (atoms and bond orders).

    Colours come from joint refinement of the disjoint union, then a
    backtracking search maps atoms of ``a`` onto same-coloured atoms of ``b``.
    """
    na, nb = len(a.atoms), len(b.atoms)
    if na != nb or len(a.bonds) != len(b.bonds):
        return False
    edges = _edge_lists(a) + [[(o, j + na) for o, j in e] for e in _edge_lists(b)]
    initial = [x.invariant() + (len(a.adjacency[i]),) for i, x in enumerate(a.atoms)]
    initial += [x.invariant() + (len(b.adjacency[i]),) for i, x in enumerate(b.atoms)]
    colors = _refine(_dense_ranks(initial), edges)
    ca, cb = colors[:na], colors[na:]
    if sorted(ca) != sorted(cb):
        return False

    by_color: dict[int, list[int]] = defaultdict(list)
    for j, c in enumerate(cb):
        by_color[c].append(j)

    # BFS order from the atom in the rarest colour class keeps candidates local
    start = min(range(na), key=lambda i: (len(by_color[ca[i]]), i))
    order = [start]
    anchor = [-1]
    pos_of = {start: 0}
    head = 0
    while head < len(order):
        x = order[head]
        head += 1
        for y in a.adjacency[x]:
            if y not in pos_of:
                pos_of[y] = len(order)
                order.append(y)
                anchor.append(x)

    mapping = [-1] * na
    used = [False] * nb

    def candidates(k: int) -> list[int]:
        x = order[k]
        if anchor[k] < 0:
            pool = by_color[ca[x]]
        else:
            pool = [j for j in b.adjacency[mapping[anchor[k]]] if cb[j] == ca[x]]
        return [j for j in pool if not used[j] and _consistent(x, j)]

    def _consistent(x: int, j: int) -> bool:
        mapped = 0
        for y in a.adjacency[x]:
            my = mapping[y]
            if my < 0:
                continue
            mapped += 1
            if not b.has_bond(j, my) or b.bond_order(j, my) != a.bond_order(x, y):
                return False
        images = sum(1 for q in b.adjacency[j] if used[q])
        return images == mapped

    stack: list[list[int]] = [candidates(0)]
    while stack:
        k = len(stack) - 1
        x = order[k]
        if mapping[x] >= 0:
            used[mapping[x]] = False
            mapping[x] = -1
        if not stack[-1]:
            stack.pop()
            continue
        j = stack[-1].pop()
        mapping[x] = j
        used[j] = True
        if k + 1 == na:
            return True
        stack.append(candidates(k + 1))
    return False


def iter_smiles_lines(lines: Iterable[str]) -> Iterable[tuple[int, str]]:
    """Yield ``(line_number, text)`` for non-blank lines."""
    for n, line in enumerate(lines, start=1):
        text = line.strip()
        if text:
            yield n, text
