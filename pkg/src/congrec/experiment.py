"""Train/test protocol, error metrics, method comparison and the CSRR ablation."""
from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .congruity import congruity_matrix, cosine_user_similarity
from .data import Dataset, SparseRatings
from .errors import (
    ConfigurationError,
    DegenerateSampleError,
    DivergenceError,
    SampleTooSmallError,
    ValidationError,
)
from .factorization import CR, CSRR, SMF, SOREG, VARIANTS, ClosenessSpec, FactorModel, TrainConfig, train
from .stats import TWO_SIDED, welch_t_test

log = logging.getLogger(__name__)

METRICS = ("rmse", "mae")
ABLATIONS = ("csrr", "csrr-s", "csrr-c", "csrr-cs")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError("train_fraction must lie strictly between 0 and 1")


def split(ratings: SparseRatings, spec: SplitSpec):
    """Random train/test partition of the rating entries.

    ``round(x * total)`` entries (halves round up) go to training. Both parts
    keep the full (n, m) index space.
    """
    total = ratings.nnz
    k = int(math.floor(spec.train_fraction * total + 0.5))
    if k == 0 or k == total:
        raise ValidationError(
            f"train fraction {spec.train_fraction} of {total} ratings leaves an empty train or test set"
        )
    perm = np.random.default_rng(spec.seed).permutation(total)
    mask = np.zeros(total, dtype=bool)
    mask[perm[:k]] = True
    return ratings.select(mask), ratings.select(~mask)


def _errors(model: FactorModel, test: SparseRatings, clamp=False):
    if test.nnz == 0:
        raise ValidationError("cannot evaluate on an empty test set")
    return model.predict_many(test.users, test.items, clamp) - test.values


def rmse(model: FactorModel, test: SparseRatings, clamp=False) -> float:
    e = _errors(model, test, clamp)
    return math.sqrt(float(e @ e) / len(e))


def mae(model: FactorModel, test: SparseRatings, clamp=False) -> float:
    e = _errors(model, test, clamp)
    return float(np.abs(e).sum()) / len(e)


def drop_cold_start(train_part: SparseRatings, test: SparseRatings) -> SparseRatings:
    """Test entries whose user and item both appear in ``train_part``."""
    seen_u = train_part.user_degrees() > 0
    seen_i = train_part.item_degrees() > 0
    return test.select(seen_u[test.users] & seen_i[test.items])


def derive_seed(base_seed, train_fraction, run, stream) -> int:
    """Per-run seed: hash of ``(base_seed, round(1e4 * fraction), run, stream)``.

    Stream 0 drives the split, stream 1 the factor initialisation. Every
    method in a run shares both, so methods see the same split and start.
    """
    key = [int(base_seed), int(round(train_fraction * 10_000)), int(run), int(stream)]
    return int(np.random.SeedSequence(key).generate_state(1, np.uint32)[0])


@dataclass(frozen=True)
class Method:
    """A named model: a closeness variant plus the training config it runs with."""

    name: str
    variant: str
    config: TrainConfig

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; valid: {', '.join(VARIANTS)}")


def comparison_methods(names, base: TrainConfig | None = None, configs=None) -> list[Method]:
    """Resolve method names (mf, smf, soreg, cr, csrr) to :class:`Method` objects."""
    base = base or TrainConfig()
    configs = configs or {}
    out = []
    for name in names:
        key = name.lower()
        if key not in VARIANTS:
            raise ConfigurationError(f"unknown method {name!r}; valid methods: {', '.join(VARIANTS)}")
        out.append(Method(key, key, configs.get(key, base)))
    return out


def ablation_methods(base: TrainConfig | None = None, delta=0.3) -> list[Method]:
    base = base or TrainConfig()
    return [
        Method("csrr", CSRR, base.with_(delta=delta)),
        Method("csrr-s", CSRR, base.with_(delta=0.0)),
        Method("csrr-c", CSRR, base.with_(delta=1.0)),
        Method("csrr-cs", CSRR, base.with_(delta=delta, gamma=0.0)),
    ]


@dataclass
class RunOutcome:
    method: str
    train_fraction: float
    run: int
    rmse: float = math.nan
    mae: float = math.nan
    error: str = ""
    objectives: list = field(default_factory=list)

    @property
    def failed(self):
        return bool(self.error)


def _one_run(dataset: Dataset, C, methods, fraction, run, base_seed, exclude_cold_start, keep_traces):
    train_part, test = split(dataset.ratings, SplitSpec(fraction, derive_seed(base_seed, fraction, run, 0)))
    if exclude_cold_start:
        test = drop_cold_start(train_part, test)
    init_seed = derive_seed(base_seed, fraction, run, 1)
    S = None
    if any(m.variant in (SMF, SOREG) for m in methods):
        S = cosine_user_similarity(train_part)
    out = []
    for m in methods:
        cfg = m.config.with_(seed=init_seed)
        spec = ClosenessSpec(
            m.variant,
            congruity=C if m.variant in (CR, CSRR) else None,
            similarity=S if m.variant in (SMF, SOREG) else None,
            graph=dataset.graph if m.variant in (SOREG, CSRR) else None,
        )
        try:
            res = train(train_part, spec, cfg)
        except DivergenceError as exc:
            out.append(RunOutcome(m.name, fraction, run, error=str(exc)))
            continue
        out.append(RunOutcome(m.name, fraction, run, rmse(res.model, test), mae(res.model, test),
                              objectives=res.objectives if keep_traces else []))
    return out


def _one_run_star(args):
    return _one_run(*args)


@dataclass
class ComparisonReport:
    methods: list
    fractions: list
    runs: int
    outcomes: list

    def samples(self, method, fraction, metric):
        return np.array([getattr(o, metric) for o in self.outcomes
                         if o.method == method and o.train_fraction == fraction and not o.failed])

    @property
    def failures(self):
        return [o for o in self.outcomes if o.failed]

    def summary_rows(self):
        """``(method, train_fraction, metric, mean, std, runs)``; std is the sample std."""
        for f in self.fractions:
            for m in self.methods:
                for metric in METRICS:
                    s = self.samples(m, f, metric)
                    mean = float(s.mean()) if len(s) else math.nan
                    std = float(s.std(ddof=1)) if len(s) > 1 else math.nan
                    yield m, f, metric, mean, std, len(s)

    def mean(self, method, fraction, metric):
        return float(self.samples(method, fraction, metric).mean())

    def pairwise(self, method_a, method_b, fraction, metric) -> float:
        """Two-sided Welch p-value between two methods' per-run samples.

        Identical constant samples cannot be told apart and give p = 1.
        Fewer than two successful runs on either side give NaN.
        """
        a = self.samples(method_a, fraction, metric)
        b = self.samples(method_b, fraction, metric)
        try:
            return welch_t_test(a, b, TWO_SIDED).p_value
        except DegenerateSampleError:
            return 1.0
        except SampleTooSmallError:
            return math.nan

    def pairwise_rows(self):
        for f in self.fractions:
            for a, b in combinations(self.methods, 2):
                for metric in METRICS:
                    yield a, b, metric, self.pairwise(a, b, f, metric), f

    def trace(self, method, fraction, run):
        for o in self.outcomes:
            if (o.method, o.train_fraction, o.run) == (method, fraction, run):
                return o.objectives
        raise KeyError((method, fraction, run))


def run_methods(dataset: Dataset, methods, fractions, runs, base_seed=0, congruity=None, jobs=1,
                exclude_cold_start=False, keep_traces=False) -> ComparisonReport:
    """Evaluate every method over ``runs`` seeded re-splits per train fraction.

    Runs may execute in parallel (``jobs > 1``); outcomes are merged in
    (fraction, run, method) order so the report does not depend on scheduling.
    Diverged runs are kept as failures, excluded from the aggregates and
    reported through :mod:`warnings`.
    """
    if runs < 2:
        raise ConfigurationError("runs must be at least 2")
    fractions = [float(f) for f in fractions]
    for f in fractions:
        SplitSpec(f)
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigurationError("duplicate method names")
    C = congruity
    if C is None and any(m.variant in (CR, CSRR) for m in methods):
        if dataset.events is None:
            raise ConfigurationError("congruity-based methods need helpfulness events")
        C = congruity_matrix(dataset.events)
    tasks = [(dataset, C, methods, f, r, base_seed, exclude_cold_start, keep_traces)
             for f in fractions for r in range(runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run_star, tasks))
    else:
        results = [_one_run_star(t) for t in tasks]
    outcomes = [o for batch in results for o in batch]
    report = ComparisonReport(names, fractions, runs, outcomes)
    for o in report.failures:
        warnings.warn(f"run {o.run} of {o.method} at x={o.train_fraction} failed: {o.error}", RuntimeWarning)
    return report


def run_comparison(dataset: Dataset, methods=("mf", "cr"), fractions=(0.9,), runs=20, base_seed=0,
                   configs=None, base_config: TrainConfig | None = None, congruity=None, jobs=1,
                   exclude_cold_start=False, keep_traces=False) -> ComparisonReport:
    return run_methods(dataset, comparison_methods(methods, base_config, configs), fractions, runs,
                       base_seed, congruity, jobs, exclude_cold_start, keep_traces)


def run_ablation(dataset: Dataset, delta=0.3, fractions=(0.9,), runs=20, base_seed=0,
                 config: TrainConfig | None = None, congruity=None, jobs=1,
                 exclude_cold_start=False, keep_traces=False) -> ComparisonReport:
    """CSRR with ``delta`` against CSRR-S (delta=0), CSRR-C (delta=1) and CSRR-CS (gamma=0)."""
    return run_methods(dataset, ablation_methods(config, delta), fractions, runs, base_seed,
                       congruity, jobs, exclude_cold_start, keep_traces)


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def write_report(report: ComparisonReport, out_dir, prefix="comparison"):
    """Write ``<prefix>.csv``, ``<prefix>_pairwise.csv`` and ``<prefix>_plot.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    def dump(name, header, rows):
        p = out_dir / name
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
        paths[name] = p

    dump(f"{prefix}.csv", ("method", "train_fraction", "metric", "mean", "std", "runs"), report.summary_rows())
    dump(f"{prefix}_pairwise.csv", ("method_a", "method_b", "metric", "p_value", "train_fraction"),
         report.pairwise_rows())
    dump(f"{prefix}_plot.csv", ("method", "train_fraction", "run", "metric", "value"),
         ((o.method, o.train_fraction, o.run, metric, getattr(o, metric))
          for o in report.outcomes if not o.failed for metric in METRICS))
    if report.failures:
        dump(f"{prefix}_failures.csv", ("method", "train_fraction", "run", "error"),
             ((o.method, o.train_fraction, o.run, o.error) for o in report.failures))
    return paths
