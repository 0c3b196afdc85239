"""Featurisation of SMILES text: tokens, n-gram sets/bags and 2-character symbol sequences."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .smiles_core import SmilesError, Token, lex, _fail

TOKEN_KINDS = ("atom", "bracket_atom", "bond", "ring_closure", "branch_open", "branch_close")
PAD_CHAR = "·"
MAX_SEQ_LEN = 250


def tokenize(text: str) -> list[Token]:
    """Lex a SMILES string; joining the token texts gives ``text`` back."""
    tokens = lex(text)
    for tok in tokens:
        if tok.kind == "dot":
            raise _fail(tok.start, "multi_fragment", "multi-fragment SMILES are not supported")
    return tokens


def token_texts(text: str) -> list[str]:
    return [t.text for t in tokenize(text)]


class Vocabulary:
    """Symbol to index map with ``<unk>`` at 0 and ``<pad>`` at 1."""

    UNK = 0
    PAD = 1
    SPECIALS = ("<unk>", "<pad>")

    def __init__(self, symbols: Iterable[str] = ()):
        self._symbols: list[str] = list(self.SPECIALS)
        self._index = {s: i for i, s in enumerate(self._symbols)}
        self.frozen = False
        self._ref: str | None = None
        for s in symbols:
            self.add(s)

    def __len__(self) -> int:
        return len(self._symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def add(self, symbol: str) -> int:
        if symbol in self._index:
            return self._index[symbol]
        if self.frozen:
            raise ValueError("vocabulary is frozen")
        if "\t" in symbol or "\n" in symbol:
            raise ValueError("symbols may not contain tabs or newlines")
        self._index[symbol] = len(self._symbols)
        self._symbols.append(symbol)
        return self._index[symbol]

    def index(self, symbol: str) -> int:
        """Index of ``symbol``; unseen symbols are added unless frozen, then map to UNK."""
        i = self._index.get(symbol)
        if i is not None:
            return i
        return self.UNK if self.frozen else self.add(symbol)

    def symbol(self, index: int) -> str:
        return self._symbols[index]

    def freeze(self) -> "Vocabulary":
        self.frozen = True
        return self

    @property
    def ref(self) -> str:
        """Content hash; stable once frozen."""
        if self._ref is not None:
            return self._ref
        ref = hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()[:16]
        if self.frozen:
            self._ref = ref
        return ref

    def dumps(self) -> str:
        return "".join(f"{s}\t{i}\n" for i, s in enumerate(self._symbols))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        rows = [line.split("\t") for line in text.splitlines() if line]
        rows.sort(key=lambda r: int(r[1]))
        if [int(r[1]) for r in rows] != list(range(len(rows))) or tuple(r[0] for r in rows[:2]) != cls.SPECIALS:
            raise ValueError("malformed vocabulary file")
        vocab = cls(r[0] for r in rows[2:])
        return vocab.freeze()

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# n-grams


@dataclass(frozen=True)
class NGramSet:
    grams: dict[int, int]  # vocabulary index -> count (always 1 in set mode)
    vocabulary_ref: str
    mode: str = "set"

    def __len__(self) -> int:
        return len(self.grams)

    @property
    def keys(self) -> frozenset[int]:
        return frozenset(self.grams)


def ngrams(units: Sequence[str], n_range: tuple[int, int]) -> list[str]:
    lo, hi = n_range
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid n-gram range {n_range}")
    out = []
    for n in range(lo, hi + 1):
        for i in range(len(units) - n + 1):
            out.append(" ".join(units[i : i + n]))
    return out


def ngram_featurize(
    tokens: Sequence[Token] | Sequence[str],
    n_range: tuple[int, int] = (1, 4),
    mode: str = "set",
    vocab: Vocabulary | None = None,
) -> NGramSet:
    """Contiguous n-grams of ``tokens`` mapped through ``vocab``.

    With an unfrozen vocabulary new grams are added (fitting); with a frozen
    one they fall into ``<unk>``.
    """
    if mode not in ("set", "count"):
        raise ValueError("mode must be 'set' or 'count'")
    if vocab is None:
        vocab = Vocabulary()
    units = [t.text if isinstance(t, Token) else t for t in tokens]
    counts: dict[int, int] = {}
    for g in ngrams(units, n_range):
        i = vocab.index(g)
        counts[i] = counts.get(i, 0) + 1
    if mode == "set":
        counts = dict.fromkeys(counts, 1)
    return NGramSet(counts, vocab.ref, mode)


def symbol_windows(text: str, stride: int = 1) -> list[str]:
    """2-character windows; a lone trailing character is padded with ``PAD_CHAR``."""
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    if not text:
        raise ValueError("empty text")
    if len(text) == 1:
        return [text + PAD_CHAR]
    out = [text[i : i + 2] for i in range(0, len(text) - 1, stride)]
    if stride == 2 and len(text) % 2:
        out.append(text[-1] + PAD_CHAR)
    return out


@dataclass(frozen=True)
class SymbolSeq:
    symbols: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)


def symbol_encode(text: str, stride: int = 1, vocab: Vocabulary | None = None) -> SymbolSeq:
    vocab = Vocabulary() if vocab is None else vocab
    return SymbolSeq(tuple(vocab.index(s) for s in symbol_windows(text, stride)))


def one_hot(seq: SymbolSeq | Sequence[int], vocab_size: int) -> np.ndarray:
    """``(L, V)`` indicator matrix; rows for ``<pad>`` stay zero."""
    idx = np.asarray(seq.symbols if isinstance(seq, SymbolSeq) else seq, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= vocab_size):
        raise IndexError("symbol index outside vocabulary")
    out = np.zeros((len(idx), vocab_size))
    rows = np.nonzero(idx != Vocabulary.PAD)[0]
    out[rows, idx[rows]] = 1.0
    return out


def pad_batch(
    seqs: Sequence[Sequence[int]], max_len: int = MAX_SEQ_LEN, min_len: int = 1
) -> tuple[np.ndarray, np.ndarray, int]:
    """Right-pad to a common length. Returns ``(ids, lengths, n_truncated)``."""
    lengths = np.array([min(len(s), max_len) for s in seqs], dtype=np.int64)
    truncated = sum(1 for s in seqs if len(s) > max_len)
    width = max(int(lengths.max()) if len(seqs) else 0, min_len)
    ids = np.full((len(seqs), width), Vocabulary.PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : lengths[i]] = s[: lengths[i]]
    return ids, lengths, truncated


# --------------------------------------------------------------------------
# featurisers used by the model pipelines


class NGramFeaturizer:
    """Fits a frozen n-gram vocabulary on training SMILES and maps SMILES to sparse rows.

    ``unit`` selects what the grams are built from: lexer tokens or
    overlapping 2-character symbols.
    """

    def __init__(self, n_range=(1, 4), mode="set", unit="token", stride=1):
        if unit not in ("token", "symbol"):
            raise ValueError("unit must be 'token' or 'symbol'")
        self.n_range = tuple(n_range)
        self.mode = mode
        self.unit = unit
        self.stride = stride
        self.vocab: Vocabulary | None = None

    def _units(self, smiles: str) -> list[str]:
        if self.unit == "token":
            return token_texts(smiles)
        return symbol_windows(smiles, self.stride)

    def fit(self, smiles: Iterable[str]) -> "NGramFeaturizer":
        vocab = Vocabulary()
        for s in smiles:
            ngram_featurize(self._units(s), self.n_range, self.mode, vocab)
        self.vocab = vocab.freeze()
        return self

    def transform(self, smiles: Iterable[str]) -> list[NGramSet]:
        if self.vocab is None:
            raise RuntimeError("featurizer is not fitted")
        return [ngram_featurize(self._units(s), self.n_range, self.mode, self.vocab) for s in smiles]

    def matrix(self, smiles: Iterable[str]) -> sparse.csr_matrix:
        return to_csr(self.transform(smiles), len(self.vocab))


def to_csr(sets: Sequence[NGramSet], n_features: int) -> sparse.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for s in sets:
        for k in sorted(s.grams):
            indices.append(k)
            data.append(float(s.grams[k]))
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(sets), n_features),
    )


def export_triplets(sets: Sequence[NGramSet]) -> str:
    """Sparse ``row,col,value`` CSV of a feature matrix, for debugging."""
    buf = io.StringIO()
    buf.write("row,col,value\n")
    for r, s in enumerate(sets):
        for k in sorted(s.grams):
            buf.write(f"{r},{k},{s.grams[k]}\n")
    return buf.getvalue()


__all__ = [
    "NGramFeaturizer",
    "NGramSet",
    "SmilesError",
    "SymbolSeq",
    "Vocabulary",
    "export_triplets",
    "ngram_featurize",
    "one_hot",
    "pad_batch",
    "symbol_encode",
    "symbol_windows",
    "to_csr",
    "tokenize",
]
