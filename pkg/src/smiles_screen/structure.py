"""Longest carbon chain and the chain-distance "diameter" statistic."""

from __future__ import annotations

import io
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .smiles_core import Molecule, SmilesError, iter_smiles_lines, parse_smiles

MAX_CARBONS = 60


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class ChainResult:
    chain: tuple[int, ...]
    length: int
    diameter: int


def _carbon_adjacency(m: Molecule) -> dict[int, list[int]]:
    carbons = [i for i, a in enumerate(m.atoms) if a.element == "C"]
    cset = set(carbons)
    return {i: [j for j in m.adjacency[i] if j in cset] for i in carbons}


def _reachable(adj: dict[int, list[int]], start: int, blocked: set[int]) -> int:
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if b not in seen and b not in blocked:
                seen.add(b)
                stack.append(b)
    return len(seen)


def longest_carbon_paths(m: Molecule) -> list[tuple[int, ...]]:
    """All maximum-length simple paths in the carbon subgraph.

    Each path is reported once, in its lexicographically smaller orientation.
    Exhaustive DFS, pruned by the number of carbons still reachable.
    """
    adj = _carbon_adjacency(m)
    if len(adj) > MAX_CARBONS:
        raise StructureError(f"{len(adj)} carbons exceeds the exhaustive-search cap of {MAX_CARBONS}")
    if not adj:
        return []
    best = 0
    found: set[tuple[int, ...]] = set()
    path: list[int] = []
    on_path: set[int] = set()

    def extend(atom: int) -> None:
        nonlocal best
        path.append(atom)
        on_path.add(atom)
        if len(path) > best:
            best = len(path)
            found.clear()
        if len(path) == best:
            t = tuple(path)
            found.add(min(t, t[::-1]))
        for nb in adj[atom]:
            if nb not in on_path and len(path) + _reachable(adj, nb, on_path) >= best:
                extend(nb)
        path.pop()
        on_path.discard(atom)

    for s in sorted(adj):
        extend(s)
    return sorted(found)


def distance_to_set(m: Molecule, sources: Iterable[int]) -> list[int]:
    """Hop distance from every atom to the nearest atom in ``sources``."""
    dist = [-1] * len(m.atoms)
    queue = deque()
    for s in sources:
        dist[s] = 0
        queue.append(s)
    while queue:
        a = queue.popleft()
        for b in m.adjacency[a]:
            if dist[b] < 0:
                dist[b] = dist[a] + 1
                queue.append(b)
    return dist


def chain_result(m: Molecule) -> ChainResult:
    paths = longest_carbon_paths(m)
    if not paths:
        raise StructureError("molecule has no carbon atoms; diameter is undefined")
    best = min((max(distance_to_set(m, p)), p) for p in paths)
    return ChainResult(best[1], len(best[1]), best[0])


def longest_carbon_chain(m: Molecule) -> list[int]:
    """Longest carbon path; ties go to the smallest diameter, then lexicographic order.

    Carbon-free molecules give an empty list.
    """
    if not any(a.element == "C" for a in m.atoms):
        return []
    return list(chain_result(m).chain)


def diameter(m: Molecule) -> int:
    return chain_result(m).diameter


@dataclass
class DiameterReport:
    rows: list[tuple[str, int, int]] = field(default_factory=list)
    skipped: list[tuple[int, str, str]] = field(default_factory=list)

    @property
    def values(self) -> list[int]:
        return [d for _, _, d in self.rows]

    @property
    def minimum(self) -> int | None:
        return min(self.values) if self.rows else None

    @property
    def maximum(self) -> int | None:
        return max(self.values) if self.rows else None

    @property
    def mean(self) -> float | None:
        return sum(self.values) / len(self.rows) if self.rows else None

    def histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(self.values).items()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("smiles,chain_len,diameter\n")
        for s, n, d in self.rows:
            buf.write(f"{s},{n},{d}\n")
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"molecules: {len(self.rows)}", f"skipped: {len(self.skipped)}"]
        if self.rows:
            lines.append(f"min: {self.minimum}  max: {self.maximum}  mean: {self.mean:.3f}")
            hist = self.histogram()
            width = max(hist.values())
            for d, c in hist.items():
                bar = "#" * max(1, round(40 * c / width))
                lines.append(f"{d:>3} | {bar} {c}")
        return "\n".join(lines)


def diameter_report(lines: Sequence[str] | Iterable[str]) -> DiameterReport:
    """Diameter over a SMILES corpus. Bad lines are counted, not fatal."""
    report = DiameterReport()
    for lineno, text in iter_smiles_lines(lines):
        smiles = text.split()[0]
        try:
            res = chain_result(parse_smiles(smiles))
        except (SmilesError, StructureError) as exc:
            report.skipped.append((lineno, smiles, str(exc)))
            continue
        report.rows.append((smiles, res.length, res.diameter))
    return report
