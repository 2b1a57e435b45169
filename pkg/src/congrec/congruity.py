"""Interaction counting, the congruity matrix, pair taxonomy and rating cosine similarity."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import HelpfulnessEvents, IdMap, SocialGraph, SparseRatings, UserPairMatrix
from .errors import ConfigurationError

POSITIVE_SCORES = frozenset({4, 5})
NEGATIVE_SCORES = frozenset({1, 2})

CLAMPED = "clamped"
BOUNDED = "bounded"


@dataclass(frozen=True)
class InteractionCounts:
    """Pooled positive/negative tallies per unordered pair ``a < b``."""

    n: int
    a: np.ndarray
    b: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def __len__(self):
        return len(self.a)

    def get(self, i, j):
        """``(p, n)`` for the pair, in either orientation."""
        lo, hi = min(i, j), max(i, j)
        hit = np.flatnonzero((self.a == lo) & (self.b == hi))
        if len(hit) == 0:
            return 0, 0
        return int(self.pos[hit[0]]), int(self.neg[hit[0]])


@dataclass(frozen=True)
class StrengthFunction:
    """Map an interaction count to a strength in [0, 1].

    ``clamped`` is ``max(0, 1 - 1/log(x+1))`` for x >= 1 and 0 at x = 0; it
    is zero up to x = e - 1 under the natural log. ``bounded`` is
    ``1 - 1/(1 + log(1+x))``, which needs no clamp. Both are nondecreasing,
    start at 0 and tend to 1.
    """

    variant: str = CLAMPED
    log_base: float = math.e

    def __post_init__(self):
        if self.variant not in (CLAMPED, BOUNDED):
            raise ConfigurationError(f"unknown strength variant {self.variant!r}; use 'clamped' or 'bounded'")
        if not self.log_base > 1.0:
            raise ConfigurationError("log_base must exceed 1")

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if np.any(x < 0):
            raise ValueError("interaction counts must be non-negative")
        lg = np.log1p(x) / math.log(self.log_base)
        with np.errstate(divide="ignore"):
            if self.variant == CLAMPED:
                out = np.where(x > 0, np.maximum(0.0, 1.0 - 1.0 / np.where(x > 0, lg, 1.0)), 0.0)
            else:
                out = 1.0 - 1.0 / (1.0 + lg)
        return out if out.ndim else float(out)


def strength(g: StrengthFunction, x):
    return g(x)


def count_interactions(events: HelpfulnessEvents, positive=POSITIVE_SCORES,
                       negative=NEGATIVE_SCORES) -> InteractionCounts:
    """Tally positive and negative helpfulness ratings per unordered user pair.

    Both directions (i rating j, j rating i) count towards the same pair.
    Scores in neither set are neutral and ignored.
    """
    positive, negative = frozenset(positive), frozenset(negative)
    if positive & negative:
        raise ConfigurationError("positive and negative score sets overlap")
    n = events.n
    lo = np.minimum(events.rater, events.author)
    hi = np.maximum(events.rater, events.author)
    is_pos = np.isin(events.score, list(positive))
    is_neg = np.isin(events.score, list(negative))
    live = is_pos | is_neg
    keys = lo[live] * n + hi[live]
    uniq, inv = np.unique(keys, return_inverse=True)
    pos = np.bincount(inv, weights=is_pos[live], minlength=len(uniq)).astype(np.int64)
    neg = np.bincount(inv, weights=is_neg[live], minlength=len(uniq)).astype(np.int64)
    return InteractionCounts(n, uniq // max(n, 1), uniq % max(n, 1), pos, neg)


@dataclass(frozen=True)
class Congruity:
    """P, N and C = P - N as symmetric user-pair matrices."""

    positive: UserPairMatrix
    negative: UserPairMatrix
    congruity: UserPairMatrix


def build_congruity(counts: InteractionCounts, g: StrengthFunction | None = None) -> Congruity:
    g = g or StrengthFunction()
    p = np.atleast_1d(g(counts.pos))
    q = np.atleast_1d(g(counts.neg))
    n = counts.n
    return Congruity(
        UserPairMatrix.symmetric(n, counts.a, counts.b, p),
        UserPairMatrix.symmetric(n, counts.a, counts.b, q),
        UserPairMatrix.symmetric(n, counts.a, counts.b, p - q),
    )


def congruity_matrix(events: HelpfulnessEvents, g: StrengthFunction | None = None,
                     positive=POSITIVE_SCORES, negative=NEGATIVE_SCORES) -> UserPairMatrix:
    return build_congruity(count_interactions(events, positive, negative), g).congruity


@dataclass(frozen=True)
class PairTaxonomy:
    friends_congruent: int
    friends_incongruent: int
    strangers_congruent: int
    strangers_incongruent: int

    @property
    def total(self):
        return (self.friends_congruent + self.friends_incongruent
                + self.strangers_congruent + self.strangers_incongruent)


def pair_taxonomy(C: UserPairMatrix, G: SocialGraph) -> PairTaxonomy:
    """Split all n(n-1)/2 unordered pairs by friendship and by C > 0."""
    if C.n != G.n:
        raise ValueError("C and G must cover the same users")
    n = C.n
    total = n * (n - 1) // 2
    a, b, v = C.upper()
    congruent = int(np.count_nonzero(v > 0))
    friend_c = C.lookup(G.edges[:, 0], G.edges[:, 1]) if len(G) else np.zeros(0)
    fc = int(np.count_nonzero(friend_c > 0))
    fi = len(G) - fc
    sc = congruent - fc
    return PairTaxonomy(fc, fi, sc, total - fc - fi - sc)


def _row_norms(csr):
    return np.sqrt(np.asarray(csr.multiply(csr).sum(axis=1)).ravel())


def cosine_user_similarity(ratings: SparseRatings) -> UserPairMatrix:
    """Cosine of users' rating vectors; pairs without a co-rated item are absent."""
    R = ratings.by_user()
    norms = _row_norms(R)
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    Rn = sp.diags(inv) @ R
    S = sp.triu(Rn @ Rn.T, k=1).tocoo()
    # mirror the upper triangle so S is exactly symmetric
    return UserPairMatrix.symmetric(ratings.n, S.row, S.col, np.clip(S.data, 0.0, 1.0))


def pair_cosine(ratings: SparseRatings, a, b) -> np.ndarray:
    """Cosine similarity for the specific user pairs ``(a[k], b[k])``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if len(a) == 0:
        return np.zeros(0)
    R = ratings.by_user()
    norms = _row_norms(R)
    dots = np.asarray(R[a].multiply(R[b]).sum(axis=1)).ravel()
    denom = norms[a] * norms[b]
    return np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)


def write_congruity(path, counts: InteractionCounts, g: StrengthFunction | None = None,
                    users: IdMap | None = None):
    """Audit export ``user_a,user_b,p,n,c``, one row per counted pair."""
    g = g or StrengthFunction()
    c = np.atleast_1d(g(counts.pos)) - np.atleast_1d(g(counts.neg))
    name = (lambda i: users.to_external(i)) if users is not None else (lambda i: i)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("user_a", "user_b", "p", "n", "c"))
        for a, b, p, q, cv in zip(counts.a.tolist(), counts.b.tolist(), counts.pos.tolist(),
                                  counts.neg.tolist(), c.tolist()):
            w.writerow((name(a), name(b), p, q, repr(cv)))
