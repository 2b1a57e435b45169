"""Welch's two-sample t-test and the two congruity hypothesis tests."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .congruity import pair_cosine
from .data import SocialGraph, SparseRatings, UserPairMatrix
from .errors import DegenerateSampleError, SampleTooSmallError, ValidationError

TWO_SIDED = "two-sided"
GREATER = "greater"
TAILS = (TWO_SIDED, GREATER)

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAXIT = 100_000


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a, b, x, xc=None):
    """Regularized incomplete beta ``I_x(a, b)``.

    ``xc`` may carry ``1 - x`` computed without cancellation by the caller.
    """
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if xc is None:
        xc = 1.0 - x
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    log_front = (a * math.log(x) + b * math.log(xc)
                 + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, xc) / b


def student_t_sf(t, df):
    """Upper tail ``P(T > t)`` of Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValueError("df must be positive")
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    if t == 0.0:
        return 0.5
    t2 = t * t
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))
    return tail if t > 0 else 1.0 - tail


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    tail: str
    n_a: int
    n_b: int
    mean_a: float = math.nan
    mean_b: float = math.nan

    def rejected(self, alpha=0.01) -> bool:
        return self.p_value < alpha


def welch_t_test(a, b, tail=TWO_SIDED) -> TTestResult:
    """Unequal-variance two-sample t-test of ``mean(a)`` against ``mean(b)``.

    ``tail="greater"`` tests H1: mean(a) > mean(b). When both samples are
    constant but their means differ the statistic is infinite and the degrees
    of freedom fall back to ``n_a + n_b - 2``.
    """
    if tail not in TAILS:
        raise ValueError(f"tail must be one of {TAILS}")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise SampleTooSmallError(f"each sample needs at least 2 values (got {na} and {nb})")
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    if se2 == 0.0:
        if ma == mb:
            raise DegenerateSampleError("both samples are constant with equal means; the hypothesis is not rejectable")
        t = math.copysign(math.inf, ma - mb)
        df = float(na + nb - 2)
    else:
        t = (ma - mb) / math.sqrt(se2)
        # variance shares keep df finite when the squared variances underflow
        wa, wb = qa / se2, qb / se2
        df = 1.0 / (wa * wa / (na - 1) + wb * wb / (nb - 1))
    if tail == GREATER:
        p = student_t_sf(t, df)
    else:
        p = min(1.0, 2.0 * student_t_sf(abs(t), df))
    return TTestResult(t, df, p, tail, na, nb, ma, mb)


@dataclass(frozen=True)
class AnalysisResult:
    name: str
    test: TTestResult
    sample_a: np.ndarray
    sample_b: np.ndarray


def friend_min_max(C: UserPairMatrix, G: SocialGraph):
    """Per-user min and max of C over friends, for users with at least one friend.

    Friends with no stored congruity contribute 0.
    """
    if C.n != G.n:
        raise ValidationError("C and G must cover the same users")
    A = G.as_pairs()
    if A.nnz == 0:
        return np.zeros(0), np.zeros(0)
    c = C.lookup(A.rows, A.cols)
    _, start = np.unique(A.rows, return_index=True)
    return np.minimum.reduceat(c, start), np.maximum.reduceat(c, start)


def friend_congruence_test(C: UserPairMatrix, G: SocialGraph) -> AnalysisResult:
    """Two-sided test of whether friends' congruity minima and maxima differ.

    A rejection means a user's friends are not uniformly congruent with them.
    """
    c_min, c_max = friend_min_max(C, G)
    if len(c_min) == 0:
        raise ValidationError("no user has a friend")
    return AnalysisResult("friends_congruent", welch_t_test(c_min, c_max, TWO_SIDED), c_min, c_max)


def sample_incongruent_partners(C: UserPairMatrix, anchors, seed) -> np.ndarray:
    """For each anchor user draw one user ``k != anchor`` with ``C[anchor, k] <= 0``.

    Draw ``p`` consumes the ``p``-th double of ``numpy.random.default_rng(seed)``
    and is uniform over the anchor's qualifying users, so any slice of the
    anchors can be evaluated independently by advancing the generator.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    u = np.random.default_rng(seed).random(len(anchors))
    out = np.empty(len(anchors), dtype=np.int64)
    n = C.n
    for i in np.unique(anchors):
        sel = np.flatnonzero(anchors == i)
        lo, hi = np.searchsorted(C.rows, [i, i + 1])
        pos = C.cols[lo:hi][C.vals[lo:hi] > 0]
        excluded = np.unique(np.append(pos, i))
        allowed = n - len(excluded)
        if allowed <= 0:
            raise ValidationError(f"user {i} has no incongruent user to sample")
        r = np.minimum((u[sel] * allowed).astype(np.int64), allowed - 1)
        # r-th element of the complement of a sorted excluded set
        shifted = excluded - np.arange(len(excluded))
        out[sel] = r + np.searchsorted(shifted, r, side="right")
    return out


def congruity_preference_test(C: UserPairMatrix, ratings: SparseRatings, seed=0) -> AnalysisResult:
    """One-sided test that congruent pairs have more similar ratings than random incongruent ones.

    Each unordered pair ``i < j`` with ``C_ij > 0`` contributes one value to
    each sample: cos(i, j) and cos(i, k) for a seeded uniform draw ``k``
    among users incongruent with ``i``.
    """
    if C.n != ratings.n:
        raise ValidationError("C and ratings must cover the same users")
    a, b, v = C.upper()
    pos = v > 0
    a, b = a[pos], b[pos]
    if len(a) == 0:
        raise ValidationError("no pair of users has positive congruity")
    k = sample_incongruent_partners(C, a, seed)
    cp = pair_cosine(ratings, a, b)
    cr = pair_cosine(ratings, a, k)
    return AnalysisResult("congruity_preference", welch_t_test(cp, cr, GREATER), cp, cr)


REPORT_HEADER = ("test_name", "t", "df", "p", "n_a", "n_b", "alpha", "rejected")


def report_row(res: AnalysisResult, alpha=0.01):
    t = res.test
    return (res.name, repr(t.t_statistic), repr(t.degrees_of_freedom), repr(t.p_value),
            t.n_a, t.n_b, repr(alpha), str(t.rejected(alpha)).lower())


def write_analysis_report(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        w.writerows(rows)
