"""Shared sparse containers: id maps, ratings, friendship graph, user-pair matrices.

Every container is immutable once built; the backing numpy arrays are flagged
read-only so accidental in-place edits fail loudly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DuplicateRecordError, ValidationError

RATING_MIN = 1.0
RATING_MAX = 5.0


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IdMap:
    """Bijection between external identifiers and dense indices ``0..len-1``."""

    external: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {ext: i for i, ext in enumerate(self.external)}
        if len(index) != len(self.external):
            raise ValidationError("IdMap external ids must be unique")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_ids(cls, ids: Iterable[Hashable]) -> "IdMap":
        """Dense ids are assigned in sorted order of the external ids."""
        return cls(tuple(sorted(set(ids))))

    def __len__(self):
        return len(self.external)

    def __contains__(self, ext):
        return ext in self._index

    def to_dense(self, ext) -> int:
        return self._index[ext]

    def to_external(self, idx: int):
        return self.external[idx]

    def dense_array(self, exts: Sequence) -> np.ndarray:
        return np.fromiter((self._index[e] for e in exts), dtype=np.int64, count=len(exts))

    def subset(self, keep: np.ndarray) -> "IdMap":
        """Restrict to the dense indices flagged in boolean mask ``keep``.

        Order is preserved, so the result is still sorted by external id.
        """
        return IdMap(tuple(e for e, k in zip(self.external, keep) if k))


class SparseRatings:
    """User x item rating matrix stored as canonical (user, item)-sorted COO arrays."""

    __slots__ = ("n", "m", "users", "items", "values", "_csr", "_csc")

    def __init__(self, n, m, users, items, values):
        users = np.asarray(users, dtype=np.int64).reshape(-1)
        items = np.asarray(items, dtype=np.int64).reshape(-1)
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if not (len(users) == len(items) == len(values)):
            raise ValidationError("users, items and values must have equal length")
        if n < 0 or m < 0:
            raise ValidationError("n and m must be non-negative")
        if len(users):
            if users.min() < 0 or users.max() >= n:
                raise ValidationError("user index out of range")
            if items.min() < 0 or items.max() >= m:
                raise ValidationError("item index out of range")
            if not np.all(np.isfinite(values)) or values.min() < RATING_MIN or values.max() > RATING_MAX:
                raise ValidationError(f"ratings must lie in [{RATING_MIN:g}, {RATING_MAX:g}]")
        order = np.lexsort((items, users))
        users, items, values = users[order], items[order], values[order]
        if len(users) > 1:
            dup = (users[1:] == users[:-1]) & (items[1:] == items[:-1])
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise DuplicateRecordError(int(users[k]), int(items[k]))
        self.n = int(n)
        self.m = int(m)
        self.users = _frozen(users, np.int64)
        self.items = _frozen(items, np.int64)
        self.values = _frozen(values, np.float64)
        self._csr = None
        self._csc = None

    def __len__(self):
        return len(self.values)

    @property
    def nnz(self):
        return len(self.values)

    def __repr__(self):
        return f"SparseRatings(n={self.n}, m={self.m}, nnz={self.nnz})"

    def __eq__(self, other):
        if not isinstance(other, SparseRatings):
            return NotImplemented
        return (
            self.n == other.n
            and self.m == other.m
            and np.array_equal(self.users, other.users)
            and np.array_equal(self.items, other.items)
            and np.array_equal(self.values, other.values)
        )

    def by_user(self) -> sp.csr_matrix:
        """Row adjacency: row ``i`` holds user ``i``'s rated items."""
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.values, (self.users, self.items)), shape=(self.n, self.m)
            )
        return self._csr

    def by_item(self) -> sp.csc_matrix:
        if self._csc is None:
            self._csc = self.by_user().tocsc()
        return self._csc

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.m)

    def select(self, mask) -> "SparseRatings":
        """Entries where ``mask`` is true, in the same (n, m) index space."""
        mask = np.asarray(mask)
        return SparseRatings(self.n, self.m, self.users[mask], self.items[mask], self.values[mask])

    def entries(self):
        for u, i, r in zip(self.users.tolist(), self.items.tolist(), self.values.tolist()):
            yield u, i, r


class SocialGraph:
    """Undirected friendship graph; ``edges`` holds each pair once with a < b."""

    __slots__ = ("n", "edges", "_adj")

    def __init__(self, n, edges):
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if (e[:, 0] == e[:, 1]).any():
                k = int(np.flatnonzero(e[:, 0] == e[:, 1])[0])
                raise ValidationError(f"self-loop on user {int(e[k, 0])}")
            if e.min() < 0 or e.max() >= n:
                raise ValidationError("edge endpoint out of range")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        self.n = int(n)
        self.edges = e.copy()
        self.edges.setflags(write=False)
        self._adj = None

    def __len__(self):
        return len(self.edges)

    def __repr__(self):
        return f"SocialGraph(n={self.n}, edges={len(self.edges)})"

    def __eq__(self, other):
        if not isinstance(other, SocialGraph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency matrix."""
        if self._adj is None:
            a, b = self.edges[:, 0], self.edges[:, 1]
            rows = np.concatenate([a, b])
            cols = np.concatenate([b, a])
            self._adj = sp.csr_matrix(
                (np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n)
            )
        return self._adj

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n)

    def neighbors(self, i) -> np.ndarray:
        adj = self.adjacency()
        return adj.indices[adj.indptr[i]:adj.indptr[i + 1]]

    def has_edge(self, i, j) -> bool:
        a, b = min(i, j), max(i, j)
        keys = self.edges[:, 0] * self.n + self.edges[:, 1]
        k = np.searchsorted(keys, a * self.n + b)
        return bool(k < len(keys) and keys[k] == a * self.n + b)

    def as_pairs(self) -> "UserPairMatrix":
        """The matrix G with both orientations of every edge set to 1."""
        a, b = self.edges[:, 0], self.edges[:, 1]
        return UserPairMatrix.symmetric(self.n, a, b, np.ones(len(a)))


class UserPairMatrix:
    """Sparse real-valued matrix over ordered user pairs.

    Used for the interaction strengths, the congruity matrix, user similarity
    and the closeness weights alike. Absent pairs read as 0; explicit zeros and
    the diagonal are never stored. Entries are kept sorted by (row, col).
    """

    __slots__ = ("n", "rows", "cols", "vals", "_keys")

    def __init__(self, n, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        vals = np.asarray(vals, dtype=np.float64).reshape(-1)
        if not (len(rows) == len(cols) == len(vals)):
            raise ValidationError("rows, cols and vals must have equal length")
        if len(rows):
            if min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n:
                raise ValidationError("pair index out of range")
            if (rows == cols).any():
                raise ValidationError("diagonal entries are not allowed in a UserPairMatrix")
            if not np.all(np.isfinite(vals)):
                raise ValidationError("pair values must be finite")
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        keys = rows * n + cols
        if len(keys) > 1 and (keys[1:] == keys[:-1]).any():
            k = int(np.flatnonzero(keys[1:] == keys[:-1])[0])
            raise ValidationError(f"duplicate pair ({int(rows[k])}, {int(cols[k])})")
        self.n = int(n)
        self.rows = _frozen(rows, np.int64)
        self.cols = _frozen(cols, np.int64)
        self.vals = _frozen(vals, np.float64)
        self._keys = _frozen(keys, np.int64)

    @classmethod
    def empty(cls, n) -> "UserPairMatrix":
        return cls(n, [], [], [])

    @classmethod
    def symmetric(cls, n, a, b, vals) -> "UserPairMatrix":
        """Build from one orientation per pair, mirroring every entry."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        return cls(n, np.concatenate([a, b]), np.concatenate([b, a]), np.concatenate([vals, vals]))

    @classmethod
    def from_sparse(cls, mat) -> "UserPairMatrix":
        coo = sp.coo_matrix(mat)
        off = coo.row != coo.col
        return cls(coo.shape[0], coo.row[off], coo.col[off], coo.data[off])

    def __len__(self):
        return len(self.vals)

    @property
    def nnz(self):
        return len(self.vals)

    def __repr__(self):
        return f"UserPairMatrix(n={self.n}, nnz={self.nnz})"

    def __eq__(self, other):
        if not isinstance(other, UserPairMatrix):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.vals, other.vals)
        )

    def get(self, i, j) -> float:
        key = i * self.n + j
        k = np.searchsorted(self._keys, key)
        if k < len(self._keys) and self._keys[k] == key:
            return float(self.vals[k])
        return 0.0

    def lookup(self, rows, cols) -> np.ndarray:
        """Vectorised :meth:`get`."""
        keys = np.asarray(rows, dtype=np.int64) * self.n + np.asarray(cols, dtype=np.int64)
        k = np.searchsorted(self._keys, keys)
        k_clip = np.minimum(k, max(len(self._keys) - 1, 0))
        out = np.zeros(len(keys))
        if len(self._keys):
            hit = self._keys[k_clip] == keys
            out[hit] = self.vals[k_clip[hit]]
        return out

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n, self.n))

    def neighbors(self, i) -> np.ndarray:
        """Row support of user ``i`` (the neighbour set used in the closeness sum)."""
        lo, hi = np.searchsorted(self.rows, [i, i + 1])
        return self.cols[lo:hi]

    def is_symmetric(self) -> bool:
        t = UserPairMatrix(self.n, self.cols, self.rows, self.vals)
        return np.array_equal(t.rows, self.rows) and np.array_equal(t.cols, self.cols) and np.array_equal(
            t.vals, self.vals
        )

    def upper(self):
        """Entries with row < col as ``(a, b, vals)``; the full content if symmetric."""
        m = self.rows < self.cols
        return self.rows[m], self.cols[m], self.vals[m]


@dataclass(frozen=True)
class HelpfulnessEvents:
    """Dense-index helpfulness ratings: ``rater`` scored a review by ``author``."""

    n: int
    rater: np.ndarray
    author: np.ndarray
    score: np.ndarray

    def __post_init__(self):
        for name in ("rater", "author", "score"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int64))
        if not (len(self.rater) == len(self.author) == len(self.score)):
            raise ValidationError("event arrays must have equal length")
        if len(self.rater):
            if (self.rater == self.author).any():
                raise ValidationError("rater and author must differ")
            if self.score.min() < 1 or self.score.max() > 5:
                raise ValidationError("helpfulness scores must lie in 1..5")

    def __len__(self):
        return len(self.score)


@dataclass(frozen=True)
class Dataset:
    """A preprocessed, densely indexed corpus."""

    ratings: SparseRatings
    graph: SocialGraph
    users: IdMap
    items: IdMap
    events: HelpfulnessEvents | None = None

    @property
    def n(self):
        return self.ratings.n

    @property
    def m(self):
        return self.ratings.m


def remap_ids(records):
    """Densify ``(user, item, rating)`` records with external ids.

    Returns ``(user_map, item_map, ratings)``. Dense ids follow sorted external
    id order, so the output is independent of record order. A repeated
    (user, item) pair raises :class:`DuplicateRecordError` naming the pair.
    """
    records = list(records)
    seen = set()
    for u, i, _ in records:
        if (u, i) in seen:
            raise DuplicateRecordError(u, i)
        seen.add((u, i))
    user_map = IdMap.from_ids(r[0] for r in records)
    item_map = IdMap.from_ids(r[1] for r in records)
    users = user_map.dense_array([r[0] for r in records])
    items = item_map.dense_array([r[1] for r in records])
    values = np.array([float(r[2]) for r in records], dtype=np.float64)
    ratings = SparseRatings(len(user_map), len(item_map), users, items, values)
    return user_map, item_map, ratings
