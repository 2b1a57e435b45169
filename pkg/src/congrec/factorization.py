"""Latent-factor rating model with a pairwise user-closeness regularizer.

The objective minimised by :func:`train` is::

    J(U, V) = sum_(i,j) observed (R_ij - U_i . V_j)^2
              + gamma * sum_i sum_(k in T_i) L_ik ||U_i - U_k||^2
              + lambda * (||U||_F^2 + ||V||_F^2)

where ``L`` is a :class:`~congrec.data.UserPairMatrix` and ``T_i`` its row
support. The five model families differ only in how ``L`` is built, see
:func:`build_closeness`.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .data import SocialGraph, SparseRatings, UserPairMatrix
from .errors import ConfigurationError, DivergenceError, ValidationError

log = logging.getLogger(__name__)

MF, SMF, SOREG, CR, CSRR = "mf", "smf", "soreg", "cr", "csrr"
VARIANTS = (MF, SMF, SOREG, CR, CSRR)

FULL, OUTGOING = "full", "outgoing"
GRADIENT_MODES = (FULL, OUTGOING)


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters for gradient-descent training.

    ``lam``, ``gamma`` and ``d`` default to the values reported for Epinions.
    The learning rate, iteration budget, tolerance and initialisation scale
    were never reported; their defaults here are our own.
    """

    d: int = 15
    lam: float = 0.01
    gamma: float = 100.0
    delta: float = 0.3
    learning_rate: float = 1e-4
    max_iters: int = 500
    tol: float = 1e-5
    seed: int = 0
    init_scale: float = 0.1
    gradient_mode: str = FULL
    clamp_predictions: bool = False
    clamp_closeness_nonnegative: bool = False

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ConfigurationError("d must be a positive integer")
        if self.lam < 0 or self.gamma < 0:
            raise ConfigurationError("lam and gamma must be non-negative")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigurationError("delta must lie in [0, 1]")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be non-negative")
        if self.tol < 0:
            raise ConfigurationError("tol must be non-negative")
        if self.init_scale < 0:
            raise ConfigurationError("init_scale must be non-negative")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigurationError(f"gradient_mode must be one of {GRADIENT_MODES}")

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ClosenessSpec:
    """Which closeness family to use and the matrices it is built from."""

    variant: str
    congruity: UserPairMatrix | None = None
    similarity: UserPairMatrix | None = None
    graph: SocialGraph | None = None

    _needs = {
        MF: (),
        SMF: ("similarity",),
        SOREG: ("similarity", "graph"),
        CR: ("congruity",),
        CSRR: ("congruity", "graph"),
    }

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; valid: {', '.join(VARIANTS)}")
        missing = [k for k in self._needs[self.variant] if getattr(self, k) is None]
        if missing:
            raise ConfigurationError(f"variant {self.variant!r} requires {', '.join(missing)}")

    def build(self, delta=0.3, clamp_nonnegative=False) -> UserPairMatrix:
        return build_closeness(self, delta=delta, clamp_nonnegative=clamp_nonnegative)


def _union_pairs(n, *mats):
    keys = np.unique(np.concatenate([m.rows * n + m.cols for m in mats]))
    return keys // max(n, 1), keys % max(n, 1)


def build_closeness(spec: ClosenessSpec, delta=0.3, clamp_nonnegative=False) -> UserPairMatrix:
    """Closeness weights ``L`` for the requested family.

    ========  ==========================================================
    mf        empty
    smf       L = S
    soreg     L = S on friend pairs only
    cr        L = C (may be negative)
    csrr      L = delta * G + (1 - delta) * (C + 1) / 2 on pairs that are
              friends or carry a stored congruity value
    ========  ==========================================================

    Pairs whose weight comes out exactly 0 are not neighbours. With
    ``clamp_nonnegative`` negative weights are dropped as well.
    """
    v = spec.variant
    if v == MF:
        n = next((x.n for x in (spec.congruity, spec.similarity) if x is not None), 0)
        if spec.graph is not None:
            n = spec.graph.n
        return UserPairMatrix.empty(n)
    if v == SMF:
        L = spec.similarity
    elif v == SOREG:
        G = spec.graph.as_pairs()
        _check_n(spec.similarity, G)
        s = spec.similarity.lookup(G.rows, G.cols)
        L = UserPairMatrix(G.n, G.rows, G.cols, s)
    elif v == CR:
        L = spec.congruity
    else:
        if not 0.0 <= delta <= 1.0:
            raise ConfigurationError("delta must lie in [0, 1]")
        C = spec.congruity
        G = spec.graph.as_pairs()
        _check_n(C, G)
        r, c = _union_pairs(C.n, C, G)
        w = delta * G.lookup(r, c) + (1.0 - delta) * (C.lookup(r, c) + 1.0) / 2.0
        L = UserPairMatrix(C.n, r, c, w)
    if clamp_nonnegative and (L.vals < 0).any():
        keep = L.vals > 0
        L = UserPairMatrix(L.n, L.rows[keep], L.cols[keep], L.vals[keep])
    return L


def _check_n(a, b):
    if a.n != b.n:
        raise ConfigurationError(f"user count mismatch ({a.n} vs {b.n})")


@dataclass(frozen=True)
class FactorModel:
    U: np.ndarray
    V: np.ndarray
    variant: str = MF
    config_hash: str = ""

    @property
    def n(self):
        return self.U.shape[0]

    @property
    def m(self):
        return self.V.shape[0]

    @property
    def d(self):
        return self.U.shape[1]

    def predict(self, user, item, clamp=False) -> float:
        return predict(self, user, item, clamp)

    def predict_many(self, users, items, clamp=False) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        out = np.einsum("ij,ij->i", self.U[users], self.V[items])
        return np.clip(out, 1.0, 5.0) if clamp else out


def predict(model: FactorModel, user: int, item: int, clamp=False) -> float:
    """``U_user . V_item``, optionally clipped to the rating scale [1, 5]."""
    if not 0 <= user < model.n:
        raise IndexError(f"user {user} out of range for {model.n} users")
    if not 0 <= item < model.m:
        raise IndexError(f"item {item} out of range for {model.m} items")
    r = float(model.U[user] @ model.V[item])
    return min(max(r, 1.0), 5.0) if clamp else r


def _pair_arrays(L: UserPairMatrix | None):
    if L is None:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    return L.rows, L.cols, L.vals


def objective(model, ratings: SparseRatings, L: UserPairMatrix | None, lam, gamma, backend=None) -> float:
    U, V = _factors(model)
    prow, pcol, pw = _pair_arrays(L)
    sse, close, reg = kernels.objective_terms(U, V, ratings.users, ratings.items, ratings.values,
                                              prow, pcol, pw, backend=backend)
    return sse + gamma * close + lam * reg


def gradient(model, ratings: SparseRatings, L: UserPairMatrix | None, lam, gamma, mode=FULL, backend=None):
    """Half gradients ``(0.5 dJ/dU, 0.5 dJ/dV)``.

    In ``outgoing`` mode the closeness contribution to ``U_i`` is only the
    outgoing sum ``gamma * sum_k L_ik (U_i - U_k)``. ``full`` mode also adds
    the incoming terms ``gamma * sum_(k: i in T_k) L_ki (U_i - U_k)`` and is
    the exact gradient of :func:`objective`.
    """
    if mode not in GRADIENT_MODES:
        raise ConfigurationError(f"gradient mode must be one of {GRADIENT_MODES}")
    U, V = _factors(model)
    prow, pcol, pw = _pair_arrays(L)
    return kernels.half_gradient(U, V, ratings.users, ratings.items, ratings.values,
                                 prow, pcol, pw, lam, gamma, mode == FULL, backend=backend)


def _factors(model):
    if isinstance(model, FactorModel):
        return model.U, model.V
    U, V = model
    return np.asarray(U, dtype=np.float64), np.asarray(V, dtype=np.float64)


@dataclass
class TrainResult:
    model: FactorModel
    objectives: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.objectives) - 1

    def trace_rows(self):
        prev = None
        for it, obj in enumerate(self.objectives):
            rel = "" if prev is None else (prev - obj) / abs(prev) if prev != 0 else 0.0
            yield it, obj, rel
            prev = obj


def init_factors(n, m, d, init_scale, seed):
    rng = np.random.default_rng(seed)
    U = rng.normal(0.0, init_scale, size=(n, d))
    V = rng.normal(0.0, init_scale, size=(m, d))
    return U, V


def train(ratings: SparseRatings, closeness, config: TrainConfig, backend=None,
          variant=None) -> TrainResult:
    """Full-batch fixed-step gradient descent.

    ``closeness`` is a :class:`ClosenessSpec`, a prebuilt ``UserPairMatrix``
    or ``None`` for plain factorization. Stops once the relative objective
    change is below ``config.tol`` in magnitude or after ``config.max_iters``
    steps.
    Raises :class:`DivergenceError` as soon as a factor entry or the
    objective stops being finite.
    """
    if isinstance(closeness, ClosenessSpec):
        variant = variant or closeness.variant
        L = closeness.build(config.delta, config.clamp_closeness_nonnegative)
    else:
        L = closeness
        if L is not None and config.clamp_closeness_nonnegative and (L.vals < 0).any():
            keep = L.vals > 0
            L = UserPairMatrix(L.n, L.rows[keep], L.cols[keep], L.vals[keep])
    variant = variant or (MF if L is None or L.nnz == 0 else CR)
    if L is not None and L.nnz and L.n != ratings.n:
        raise ValidationError(f"closeness covers {L.n} users but ratings cover {ratings.n}")
    gamma = float(config.gamma)
    if L is not None and (L.nnz == 0 or gamma == 0.0):
        L = None
    prow, pcol, pw = _pair_arrays(L)
    rows, cols, vals = ratings.users, ratings.items, ratings.values
    full = config.gradient_mode == FULL
    lam, lr = float(config.lam), float(config.learning_rate)

    U, V = init_factors(ratings.n, ratings.m, config.d, config.init_scale, config.seed)

    def J(U, V):
        sse, close, reg = kernels.objective_terms(U, V, rows, cols, vals, prow, pcol, pw, backend=backend)
        return sse + gamma * close + lam * reg

    prev = J(U, V)
    objectives = [prev]
    converged = False
    for it in range(1, config.max_iters + 1):
        dU, dV = kernels.half_gradient(U, V, rows, cols, vals, prow, pcol, pw, lam, gamma, full,
                                       backend=backend)
        U = U - lr * dU
        V = V - lr * dV
        cur = J(U, V)
        if not (math.isfinite(cur) and np.isfinite(U).all() and np.isfinite(V).all()):
            raise DivergenceError(it)
        objectives.append(cur)
        rel = (prev - cur) / abs(prev) if prev != 0 else 0.0
        prev = cur
        # an increase larger than tol is not convergence; keep going so divergence surfaces
        if abs(rel) < config.tol:
            converged = True
            break

    log.debug("train %s: %d iterations, objective %.6g", variant, len(objectives) - 1, prev)
    return TrainResult(FactorModel(U, V, variant, config.digest()), objectives, converged)


# ---------------------------------------------------------- persistence ----

MAGIC = b"CONGREC-MODEL 1\n"


def save_model(model: FactorModel, path):
    """Write ``model`` to ``path``.

    Layout: the magic line ``CONGREC-MODEL 1``, one line of JSON with keys
    ``n, m, d, variant, config_hash``, then U and V as little-endian float64
    in row-major order, U first.
    """
    header = {"n": model.n, "m": model.m, "d": model.d, "variant": model.variant,
              "config_hash": model.config_hash}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(model.U, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.V, dtype="<f8").tobytes())


def load_model(path) -> FactorModel:
    with Path(path).open("rb") as fh:
        if fh.readline() != MAGIC:
            raise ValidationError(f"{path}: not a congrec model file")
        h = json.loads(fh.readline())
        n, m, d = h["n"], h["m"], h["d"]
        body = fh.read()
    if len(body) != 8 * d * (n + m):
        raise ValidationError(f"{path}: truncated model body")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return FactorModel(flat[: n * d].reshape(n, d).copy(), flat[n * d:].reshape(m, d).copy(),
                       h["variant"], h["config_hash"])


def write_trace(result: TrainResult, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iter", "objective", "delta_rel"))
        for it, obj, rel in result.trace_rows():
            w.writerow((it, repr(obj), rel if rel == "" else repr(rel)))
