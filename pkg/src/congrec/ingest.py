"""CSV loaders and the iterative preprocessing filter.

File schemas (UTF-8, header row required)::

    ratings      user_id,item_id,rating          rating an integer 1..5
    trust        user_id,friend_id               undirected; either orientation
    helpfulness  rater_id,author_id,score        score an integer 1..5
    report       external_id,dense_id,n_ratings,n_friends
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, HelpfulnessEvents, IdMap, SocialGraph, SparseRatings
from .errors import (
    DuplicateRecordError,
    EmptyAfterPreprocessingError,
    ParseError,
    ValidationError,
)

log = logging.getLogger(__name__)

RATINGS_HEADER = ("user_id", "item_id", "rating")
TRUST_HEADER = ("user_id", "friend_id")
HELPFULNESS_HEADER = ("rater_id", "author_id", "score")
REPORT_HEADER = ("external_id", "dense_id", "n_ratings", "n_friends")

MIN_USER_RATINGS = 3
MIN_ITEM_RATINGS = 3
MIN_USER_FRIENDS = 1


@dataclass(frozen=True)
class RatingRecord:
    user: str
    item: str
    rating: int


@dataclass(frozen=True)
class HelpfulnessEvent:
    rater: str
    author: str
    score: int


def _rows(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip() for c in first) != header:
            raise ParseError(path, 1, f"expected header {','.join(header)!r}, got {first!r}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [c.strip() for c in row]


def _score(path, line, text, what):
    try:
        value = int(text)
    except ValueError:
        raise ParseError(path, line, f"{what} {text!r} is not an integer") from None
    if not 1 <= value <= 5:
        raise ValidationError(f"{path}:{line}: {what} {value} outside 1..5")
    return value


def load_ratings(path) -> list[RatingRecord]:
    out = []
    for line, (user, item, rating) in _rows(path, RATINGS_HEADER):
        if not user or not item:
            raise ParseError(path, line, "empty identifier")
        out.append(RatingRecord(user, item, _score(path, line, rating, "rating")))
    return out


def load_social(path) -> list[tuple[str, str]]:
    """Friendship pairs, symmetrised and deduplicated, each as (min, max)."""
    pairs = set()
    for line, (a, b) in _rows(path, TRUST_HEADER):
        if not a or not b:
            raise ParseError(path, line, "empty identifier")
        if a == b:
            raise ValidationError(f"{path}:{line}: self-loop for user {a!r}")
        pairs.add((a, b) if a < b else (b, a))
    return sorted(pairs)


def load_helpfulness(path) -> list[HelpfulnessEvent]:
    out = []
    for line, (rater, author, score) in _rows(path, HELPFULNESS_HEADER):
        if not rater or not author:
            raise ParseError(path, line, "empty identifier")
        if rater == author:
            raise ValidationError(f"{path}:{line}: user {rater!r} rated their own review")
        out.append(HelpfulnessEvent(rater, author, _score(path, line, score, "score")))
    return out


@dataclass(frozen=True)
class PreprocessResult:
    dataset: Dataset
    passes: int
    dropped_users: int
    dropped_items: int

    def report_rows(self):
        ds = self.dataset
        n_ratings = ds.ratings.user_degrees()
        n_friends = ds.graph.degrees()
        for i, ext in enumerate(ds.users.external):
            yield ext, i, int(n_ratings[i]), int(n_friends[i])


def preprocess(ratings, social, events=None) -> PreprocessResult:
    """Drop users/items with fewer than 3 ratings and users with no friends.

    ``ratings`` is a sequence of :class:`RatingRecord` (or 3-tuples) and
    ``social`` a sequence of external-id pairs. Removal cascades: the filters
    are re-applied until nothing changes, so every surviving user has at
    least 3 ratings and 1 friend among survivors and every surviving item has
    at least 3 ratings from survivors. Helpfulness events touching removed
    users are dropped afterwards; they play no part in the filter itself.
    """
    recs = [(r[0], r[1], r[2]) if not isinstance(r, RatingRecord) else (r.user, r.item, r.rating)
            for r in ratings]
    social = [tuple(p) for p in social]

    all_users = IdMap.from_ids([r[0] for r in recs] + [u for p in social for u in p])
    all_items = IdMap.from_ids(r[1] for r in recs)
    n0, m0 = len(all_users), len(all_items)

    ru = all_users.dense_array([r[0] for r in recs])
    ri = all_items.dense_array([r[1] for r in recs])
    rv = np.array([float(r[2]) for r in recs], dtype=np.float64)
    keys = ru * max(m0, 1) + ri
    if len(np.unique(keys)) != len(keys):
        order = np.argsort(keys, kind="stable")
        k = order[np.flatnonzero(keys[order][1:] == keys[order][:-1])[0]]
        raise DuplicateRecordError(recs[k][0], recs[k][1])
    ea = all_users.dense_array([p[0] for p in social])
    eb = all_users.dense_array([p[1] for p in social])
    if len(ea) and (ea == eb).any():
        raise ValidationError("self-loop in friendship pairs")

    user_ok = np.ones(n0, dtype=bool)
    item_ok = np.ones(m0, dtype=bool)
    passes = 0
    while True:
        passes += 1
        r_live = user_ok[ru] & item_ok[ri]
        e_live = user_ok[ea] & user_ok[eb]
        u_cnt = np.bincount(ru[r_live], minlength=n0)
        i_cnt = np.bincount(ri[r_live], minlength=m0)
        f_cnt = np.bincount(np.concatenate([ea[e_live], eb[e_live]]), minlength=n0)
        new_user_ok = user_ok & (u_cnt >= MIN_USER_RATINGS) & (f_cnt >= MIN_USER_FRIENDS)
        new_item_ok = item_ok & (i_cnt >= MIN_ITEM_RATINGS)
        if np.array_equal(new_user_ok, user_ok) and np.array_equal(new_item_ok, item_ok):
            break
        user_ok, item_ok = new_user_ok, new_item_ok

    if not user_ok.any() or not item_ok.any():
        raise EmptyAfterPreprocessingError(
            f"no users or items survive preprocessing ({n0} users, {m0} items in input)"
        )

    users = all_users.subset(user_ok)
    items = all_items.subset(item_ok)
    new_u = np.cumsum(user_ok) - 1
    new_i = np.cumsum(item_ok) - 1
    r_live = user_ok[ru] & item_ok[ri]
    e_live = user_ok[ea] & user_ok[eb]
    sr = SparseRatings(len(users), len(items), new_u[ru[r_live]], new_i[ri[r_live]], rv[r_live])
    graph = SocialGraph(len(users), np.stack([new_u[ea[e_live]], new_u[eb[e_live]]], axis=1))

    dense_events = None
    if events is not None:
        dense_events = densify_events(events, users)

    log.info(
        "preprocess: %d -> %d users, %d -> %d items, %d ratings, %d edges in %d passes",
        n0, len(users), m0, len(items), sr.nnz, len(graph), passes,
    )
    return PreprocessResult(
        Dataset(sr, graph, users, items, dense_events),
        passes=passes,
        dropped_users=n0 - len(users),
        dropped_items=m0 - len(items),
    )


def densify_events(events, users: IdMap) -> HelpfulnessEvents:
    """Map events onto dense user ids, discarding those that touch unknown users."""
    kept = [(users.to_dense(e.rater), users.to_dense(e.author), e.score)
            for e in events if e.rater in users and e.author in users]
    arr = np.array(kept, dtype=np.int64).reshape(-1, 3)
    return HelpfulnessEvents(len(users), arr[:, 0], arr[:, 1], arr[:, 2])


def load_dataset(ratings_path, trust_path, helpfulness_path=None) -> PreprocessResult:
    events = load_helpfulness(helpfulness_path) if helpfulness_path is not None else None
    return preprocess(load_ratings(ratings_path), load_social(trust_path), events)


def _write(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_dataset(ds: Dataset, out_dir):
    """Write a dataset back out in the three input schemas (external ids)."""
    out_dir = Path(out_dir)
    ue, ie = ds.users.external, ds.items.external
    _write(out_dir / "ratings.csv", RATINGS_HEADER,
           ((ue[u], ie[i], int(r)) for u, i, r in ds.ratings.entries()))
    _write(out_dir / "trust.csv", TRUST_HEADER,
           ((ue[a], ue[b]) for a, b in ds.graph.edges.tolist()))
    if ds.events is not None:
        ev = ds.events
        _write(out_dir / "helpfulness.csv", HELPFULNESS_HEADER,
               ((ue[a], ue[b], s) for a, b, s in zip(ev.rater.tolist(), ev.author.tolist(), ev.score.tolist())))


def write_report(result: PreprocessResult, path):
    _write(path, REPORT_HEADER, result.report_rows())
