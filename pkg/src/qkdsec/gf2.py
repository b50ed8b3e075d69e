"""Linear algebra over GF(2) for reconciliation and privacy amplification.

Bit vectors are written as strings of ``'0'``/``'1'`` with index 0 leftmost.
Internally, elimination works on Python ints where bit ``i`` of a vector sits
at position ``n - 1 - i``, so the integer value of ``"100"`` is 4.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, InfeasibleError, RankError


@dataclass(frozen=True)
class BitVector:
    """Immutable length-N binary string."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits:
            raise DimensionError("bit vector must have positive length")
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"bits must be 0 or 1, got {self.bits!r}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_str(cls, text: str) -> "BitVector":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a bit string: {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def from_int(cls, value: int, n: int) -> "BitVector":
        if value < 0 or value >> n:
            raise ValueError(f"{value} does not fit in {n} bits")
        return cls(tuple((value >> (n - 1 - i)) & 1 for i in range(n)))

    @classmethod
    def zeros(cls, n: int) -> "BitVector":
        return cls((0,) * n)

    @classmethod
    def random(cls, n: int, rng) -> "BitVector":
        rng = np.random.default_rng(rng)
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=n)))

    @property
    def length(self) -> int:
        return len(self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def __str__(self) -> str:
        return "".join(map(str, self.bits))

    def __xor__(self, other: "BitVector") -> "BitVector":
        _check_lengths(self, other)
        return BitVector(tuple(a ^ b for a, b in zip(self.bits, other.bits)))

    def to_int(self) -> int:
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value

    def to_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    def weight(self) -> int:
        return sum(self.bits)


def _check_lengths(v: BitVector, w: BitVector) -> None:
    if len(v) != len(w):
        raise DimensionError(f"length mismatch: {len(v)} != {len(w)}")


@dataclass(frozen=True)
class VectorSet:
    """Ordered list of equal-length bit vectors.

    ``kind`` is a free tag; the protocol code uses ``"V"`` for hash vectors and
    ``"W"`` for parity vectors. ``n`` is stored separately so that an empty set
    still knows its ambient dimension.
    """

    vectors: tuple[BitVector, ...]
    n: int
    kind: Optional[str] = None

    def __post_init__(self):
        vectors = tuple(self.vectors)
        for v in vectors:
            if len(v) != self.n:
                raise DimensionError(f"vector {v} has length {len(v)}, expected {self.n}")
        object.__setattr__(self, "vectors", vectors)

    @classmethod
    def of(cls, vectors: Iterable[BitVector | str], n: Optional[int] = None,
           kind: Optional[str] = None) -> "VectorSet":
        vs = tuple(BitVector.from_str(v) if isinstance(v, str) else v for v in vectors)
        if n is None:
            if not vs:
                raise DimensionError("empty vector set needs an explicit n")
            n = len(vs[0])
        return cls(vs, n, kind)

    def __len__(self) -> int:
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    def __getitem__(self, i) -> BitVector:
        return self.vectors[i]

    def to_matrix(self) -> np.ndarray:
        """Rows are the vectors; shape ``(len(self), n)``."""
        if not self.vectors:
            return np.zeros((0, self.n), dtype=np.uint8)
        return np.array([v.bits for v in self.vectors], dtype=np.uint8)

    def to_text(self) -> str:
        return "".join(f"{v}\n" for v in self.vectors)

    @classmethod
    def from_text(cls, text: str, n: Optional[int] = None,
                  kind: Optional[str] = None) -> "VectorSet":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        return cls.of(lines, n=n, kind=kind)


def _distinct_rows(m: np.ndarray) -> int:
    if m.shape[1] <= 62:
        keys = m.astype(np.int64) @ (np.int64(1) << np.arange(m.shape[1] - 1, -1, -1, dtype=np.int64))
        return np.unique(keys).size
    return len(np.unique(m, axis=0))


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Finite set of candidate strings sharing one outcome label.

    Members are held as a ``(k, n)`` uint8 matrix of unique rows so that
    parity checks over large sets stay vectorised.
    """

    members: np.ndarray
    label: object = None

    def __post_init__(self):
        m = np.asarray(self.members, dtype=np.uint8)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise DimensionError("candidate set needs at least one member of positive length")
        if np.any(m > 1):
            raise ValueError("members must be binary")
        if _distinct_rows(m) != len(m):
            raise ValueError("candidate members must be distinct")
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    @classmethod
    def from_vectors(cls, vectors: Iterable[BitVector | str], label=None) -> "CandidateSet":
        vs = [BitVector.from_str(v) if isinstance(v, str) else v for v in vectors]
        if not vs:
            raise DimensionError("candidate set must be nonempty")
        n = len(vs[0])
        for v in vs:
            if len(v) != n:
                raise DimensionError("candidate members must share a length")
        return cls(np.array(sorted({v.bits for v in vs}), dtype=np.uint8), label)

    @property
    def n(self) -> int:
        return self.members.shape[1]

    def __len__(self) -> int:
        return self.members.shape[0]

    def __contains__(self, v: BitVector) -> bool:
        return bool(np.any(np.all(self.members == v.to_array(), axis=1)))

    def __iter__(self):
        for row in self.members:
            yield BitVector(tuple(int(b) for b in row))


def dot(v: BitVector, w: BitVector) -> int:
    """Scalar product over GF(2)."""
    _check_lengths(v, w)
    return sum(a & b for a, b in zip(v.bits, w.bits)) & 1


def _ints(vectors: Iterable[BitVector]) -> list[int]:
    return [v.to_int() for v in vectors]


def _insert(basis: dict[int, int], x: int) -> bool:
    """Add ``x`` to an xor-basis keyed by leading bit; False if ``x`` is dependent."""
    while x:
        top = x.bit_length() - 1
        if top not in basis:
            basis[top] = x
            return True
        x ^= basis[top]
    return False


def rank(vectors: VectorSet | Iterable[BitVector]) -> int:
    basis: dict[int, int] = {}
    return sum(_insert(basis, x) for x in _ints(vectors))


def random_li_set(n: int, count: int, rng, kind: Optional[str] = "V") -> VectorSet:
    """Draw ``count`` linearly independent vectors of length ``n``.

    Uniform vectors are drawn one at a time and rejected whenever they fall in
    the span of those already accepted, which yields the uniform distribution
    over linearly independent sequences.
    """
    if count > n:
        raise InfeasibleError(f"cannot pick {count} independent vectors in dimension {n}")
    if count < 0 or n < 1:
        raise ValueError("need n >= 1 and count >= 0")
    rng = np.random.default_rng(rng)
    basis: dict[int, int] = {}
    out = []
    while len(out) < count:
        bits = rng.integers(0, 2, size=n)
        v = BitVector(tuple(int(b) for b in bits))
        if _insert(basis, v.to_int()):
            out.append(v)
    return VectorSet(tuple(out), n, kind)


def _rref(mat: np.ndarray) -> tuple[np.ndarray, list[int]]:
    a = mat.copy() % 2
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(a[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        hits = np.nonzero(a[:, c])[0]
        for i in hits:
            if i != r:
                a[i] ^= a[r]
        pivots.append(c)
        r += 1
    return a[:r], pivots


def dual_set(w: VectorSet, kind: Optional[str] = "V") -> VectorSet:
    """Basis of the space orthogonal to every vector of ``w``."""
    n, m = w.n, len(w)
    if rank(w) != m:
        raise RankError("parity vectors must be linearly independent")
    if m >= n:
        raise InfeasibleError(f"{m} parity vectors leave no room in dimension {n}")
    reduced, pivots = _rref(w.to_matrix())
    free = [c for c in range(n) if c not in pivots]
    out = []
    for f in free:
        v = np.zeros(n, dtype=np.uint8)
        v[f] = 1
        for row, pc in zip(reduced, pivots):
            v[pc] = row[f]
        out.append(BitVector(tuple(int(b) for b in v)))
    return VectorSet(tuple(out), n, kind)


def parities(members: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Parity of every row of ``members`` against every row of ``w``; shape ``(k, m)``."""
    return (members.astype(np.int64) @ w.T.astype(np.int64)) & 1


def hash_recover(t: CandidateSet,
                 checks: Sequence[tuple[BitVector, int]]) -> Optional[BitVector]:
    """Identify the member of ``t`` consistent with all parity checks.

    Returns ``None`` when no member or more than one member matches; both
    count as recovery failure.
    """
    if not checks:
        matches = t.members
    else:
        for w, _ in checks:
            if len(w) != t.n:
                raise DimensionError(f"parity vector length {len(w)} != {t.n}")
        w = np.array([c[0].bits for c in checks], dtype=np.uint8)
        p = np.array([int(c[1]) & 1 for c in checks], dtype=np.int64)
        ok = np.all(parities(t.members, w) == p, axis=1)
        matches = t.members[ok]
    if matches.shape[0] != 1:
        return None
    return BitVector(tuple(int(b) for b in matches[0]))
