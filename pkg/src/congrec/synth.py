"""Planted-cluster synthetic corpora for desk-scale verification.

Users and items get latent vectors whose first coordinate is a fixed offset
and whose remaining ``d - 1`` "taste" coordinates are drawn around a small
number of cluster centres. Ratings are ``U* . V*`` (so the noiseless rating
matrix has rank exactly ``d``) plus Gaussian noise, rounded and clipped to
1..5. Helpfulness events and friendships are sampled from the cosine between
users' taste vectors.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .ingest import (
    HELPFULNESS_HEADER,
    RATINGS_HEADER,
    TRUST_HEADER,
    HelpfulnessEvent,
    RatingRecord,
    _write,
    preprocess,
)


@dataclass(frozen=True)
class SynthParams:
    n: int = 200
    m: int = 150
    d: int = 5
    congruity_density: float = 0.1
    friend_density: float = 0.015
    noise_sigma: float = 0.3
    seed: int = 0
    n_clusters: int = 4
    cluster_spread: float = 0.35
    observe_density: float = 0.12
    cluster_affinity: float = 3.0
    events_per_pair: float = 6.0
    friend_sharpness: float = 4.0
    congruity_sharpness: float = 3.0
    congruity_signal: float = 1.0
    rating_spread: float = 1.0
    integer_ratings: bool = True

    def __post_init__(self):
        for name in ("n", "m", "d", "seed", "n_clusters"):
            v = getattr(self, name)
            if int(v) != v:
                raise ConfigurationError(f"{name} must be an integer")
            object.__setattr__(self, name, int(v))

    def validate(self):
        if self.n < 2 or self.m < 1 or self.d < 2:
            raise ConfigurationError("need n >= 2, m >= 1 and d >= 2")
        for name in ("congruity_density", "friend_density", "observe_density"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v} is not a density in [0, 1]")
        if self.observe_density == 0.0:
            raise ConfigurationError("observe_density must be positive")
        if self.noise_sigma < 0 or self.cluster_spread < 0 or self.rating_spread <= 0:
            raise ConfigurationError("noise_sigma and cluster_spread must be >= 0, rating_spread > 0")
        if not -1.0 <= self.congruity_signal <= 1.0:
            raise ConfigurationError("congruity_signal must lie in [-1, 1]")
        if self.n_clusters < 1 or self.events_per_pair <= 0:
            raise ConfigurationError("n_clusters and events_per_pair must be positive")


@dataclass
class SyntheticData:
    params: SynthParams
    ratings: list
    social: list
    events: list
    user_latent: np.ndarray = field(repr=False)
    item_latent: np.ndarray = field(repr=False)
    user_cluster: np.ndarray = field(repr=False)

    def preprocess(self):
        return preprocess(self.ratings, self.social, self.events)

    def write(self, out_dir):
        """Emit ratings.csv, trust.csv, helpfulness.csv and manifest.json."""
        if not self.params.integer_ratings:
            raise ConfigurationError("only integer ratings can be written in the ratings schema")
        out = Path(out_dir)
        _write(out / "ratings.csv", RATINGS_HEADER, ((r.user, r.item, r.rating) for r in self.ratings))
        _write(out / "trust.csv", TRUST_HEADER, self.social)
        _write(out / "helpfulness.csv", HELPFULNESS_HEADER, ((e.rater, e.author, e.score) for e in self.events))
        manifest = {"generator": "congrec.synth", "params": asdict(self.params),
                    "counts": {"ratings": len(self.ratings), "friendships": len(self.social),
                               "helpfulness": len(self.events)}}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return out


def _cos(A, B):
    na = np.linalg.norm(A, axis=-1)
    nb = np.linalg.norm(B, axis=-1)
    return np.einsum("...i,...i->...", A, B) / np.maximum(na * nb, 1e-12)


def _uid(i, n):
    return f"u{i:0{len(str(n - 1))}d}"


def _iid(j, m):
    return f"i{j:0{len(str(m - 1))}d}"


def low_rank_ratings(n, m, rank, seed=0, max_condition=4.0):
    """Dense ``n x m`` matrix of exact rank ``rank`` with every entry in [1, 5].

    Users and items are split into ``rank`` near-equal groups and the rating
    of a (user, item) pair is the entry of a random ``rank x rank`` block
    matrix for their groups. The block matrix is redrawn until its condition
    number is at most ``max_condition``. Returns ``(R, U, V)`` with
    ``R = U @ V.T``.
    """
    rng = np.random.default_rng(seed)
    while True:
        block = rng.uniform(1.0, 5.0, size=(rank, rank))
        if np.linalg.cond(block) <= max_condition:
            break
    gu = rng.permutation(np.arange(n) % rank)
    gv = rng.permutation(np.arange(m) % rank)
    U = np.eye(rank)[gu] @ block
    V = np.eye(rank)[gv]
    return U @ V.T, U, V


def generate_synthetic(n=200, m=150, d=5, congruity_density=0.1, friend_density=0.015,
                       noise_sigma=0.3, seed=0, **extra) -> SyntheticData:
    """Sample a planted-cluster corpus; see :class:`SynthParams` for the knobs.

    * congruity: ``congruity_density`` of all user pairs get ~``events_per_pair``
      helpfulness events, pairs weighted by ``exp(congruity_sharpness * cos)``
      (cos = taste cosine). Each event is positive with probability
      ``(1 + congruity_signal * cos) / 2``, otherwise negative, so ``p - n``
      tracks the cosine. ``congruity_signal = congruity_sharpness = 0``
      makes congruity independent of the ratings.
    * friendships: ``friend_density`` of all pairs, drawn without replacement
      with weight ``exp(friend_sharpness * cos)``.
    """
    p = SynthParams(n, m, d, congruity_density, friend_density, noise_sigma, seed, **extra)
    p.validate()
    rng = np.random.default_rng(p.seed)
    k = p.d - 1

    centres = rng.normal(size=(p.n_clusters, k))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    uc = rng.integers(p.n_clusters, size=p.n)
    ic = rng.integers(p.n_clusters, size=p.m)
    taste_u = centres[uc] + p.cluster_spread * rng.normal(size=(p.n, k)) / np.sqrt(k)
    taste_v = centres[ic] + p.cluster_spread * rng.normal(size=(p.m, k)) / np.sqrt(k)

    raw = taste_u @ taste_v.T
    scale = p.rating_spread / max(raw.std(), 1e-12)
    U = np.hstack([np.full((p.n, 1), np.sqrt(3.0)), taste_u * np.sqrt(scale)])
    V = np.hstack([np.full((p.m, 1), np.sqrt(3.0)), taste_v * np.sqrt(scale)])

    # observation mask: items of the user's own cluster are `cluster_affinity` times likelier
    w = np.where(uc[:, None] == ic[None, :], p.cluster_affinity, 1.0)
    if p.observe_density >= 1.0:
        prob = np.ones_like(w)
    else:
        prob = np.minimum(1.0, w * p.observe_density * (p.n * p.m) / w.sum())
    mask = rng.random((p.n, p.m)) < prob

    full = U @ V.T + p.noise_sigma * rng.normal(size=(p.n, p.m))
    if p.integer_ratings:
        full = np.rint(full)
    full = np.clip(full, 1.0, 5.0)
    ui, ij = np.nonzero(mask)
    ratings = [RatingRecord(_uid(a, p.n), _iid(b, p.m), int(v) if p.integer_ratings else float(v))
               for a, b, v in zip(ui.tolist(), ij.tolist(), full[ui, ij].tolist())]

    ia, ib = np.triu_indices(p.n, k=1)
    cos = _cos(taste_u[ia], taste_u[ib])
    n_pairs = len(ia)

    n_friend = int(round(p.friend_density * n_pairs))
    fw = np.exp(p.friend_sharpness * cos)
    friends = rng.choice(n_pairs, size=n_friend, replace=False, p=fw / fw.sum()) if n_friend else []
    social = sorted((_uid(ia[t], p.n), _uid(ib[t], p.n)) for t in np.sort(friends).tolist())

    n_cong = int(round(p.congruity_density * n_pairs))
    cw = np.exp(p.congruity_sharpness * cos)
    cong = np.sort(rng.choice(n_pairs, size=n_cong, replace=False, p=cw / cw.sum())) if n_cong else []
    events = []
    for t in cong:
        a, b, c = int(ia[t]), int(ib[t]), float(cos[t])
        count = 1 + rng.poisson(p.events_per_pair - 1) if p.events_per_pair > 1 else 1
        positive = rng.random(count) < (1.0 + p.congruity_signal * c) / 2.0
        flip = rng.random(count) < 0.5
        scores = np.where(positive, rng.integers(4, 6, size=count), rng.integers(1, 3, size=count))
        for pos_, f, s in zip(positive, flip.tolist(), scores.tolist()):
            rater, author = (b, a) if f else (a, b)
            events.append(HelpfulnessEvent(_uid(rater, p.n), _uid(author, p.n), int(s)))

    return SyntheticData(p, ratings, social, events, U, V, uc)
