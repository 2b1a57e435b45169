"""``congrec`` command-line entry point.

Exit codes: 0 success, 1 runtime failure (for example divergence), 2 usage
or configuration error, bad input files included.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .congruity import (
    StrengthFunction,
    build_congruity,
    count_interactions,
    cosine_user_similarity,
    pair_taxonomy,
    write_congruity,
)
from .errors import CongrecError, ConfigurationError, ParseError, ValidationError
from .experiment import (
    SplitSpec,
    derive_seed,
    drop_cold_start,
    mae,
    rmse,
    run_ablation,
    run_comparison,
    split,
    write_report,
)
from .factorization import CR, CSRR, SMF, SOREG, VARIANTS, ClosenessSpec, load_model, save_model, train, write_trace
from .ingest import load_dataset, write_dataset
from .ingest import write_report as write_preprocess_report
from .stats import congruity_preference_test, friend_congruence_test, report_row, write_analysis_report
from .synth import generate_synthetic

log = logging.getLogger("congrec")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

_HELP = {
    "ratings": "ratings CSV (user_id,item_id,rating)",
    "trust": "trust CSV (user_id,friend_id)",
    "helpfulness": "helpfulness CSV (rater_id,author_id,score)",
    "out_dir": "output directory",
    "model": "model file (default: OUT_DIR/model.bin)",
    "report": "also write the retained-user report",
    "variant": "closeness variant: mf, smf, soreg, cr or csrr",
    "d": "latent dimension",
    "lam": "L2 weight on U and V",
    "gamma": "closeness weight",
    "delta": "friendship share of the CSRR blend",
    "learning_rate": "gradient-descent step size",
    "max_iters": "iteration budget",
    "tol": "stop when the relative objective decrease falls below this",
    "init_scale": "std of the Gaussian factor initialisation",
    "gradient_mode": "full (exact) or outgoing (outgoing closeness terms only)",
    "clamp_predictions": "clip predictions to [1, 5] when evaluating",
    "clamp_closeness_nonnegative": "drop negative closeness weights",
    "train_fraction": "training share x for train/evaluate",
    "fractions": "comma-separated training shares for compare/ablate",
    "methods": "comma-separated methods for compare",
    "runs": "seeded re-splits per training share",
    "base_seed": "root of all randomness",
    "jobs": "worker processes for compare/ablate",
    "exclude_cold_start": "drop test entries whose user or item is absent from training",
    "alpha": "significance level for analyze",
    "positive_scores": "helpfulness scores counted as positive",
    "negative_scores": "helpfulness scores counted as negative",
    "g_variant": "interaction strength: clamped or bounded",
    "log_base": "logarithm base of the strength function",
    "synth_n": "synthetic users",
    "synth_m": "synthetic items",
    "synth_d": "synthetic latent rank",
    "congruity_density": "share of synthetic user pairs with helpfulness events",
    "friend_density": "share of synthetic user pairs that are friends",
    "noise_sigma": "rating noise std for synth",
}


def _converter(key):
    def conv(text):
        try:
            return cfgmod.parse_value(key, text)
        except ConfigurationError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    conv.__name__ = key
    return conv


def _config_parent():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="flat key = value config file")
    p.add_argument("--dump-config", metavar="FILE", help="write the effective config to FILE")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    g = p.add_argument_group("configuration (flags > CONGREC_* env > --config file > defaults)")
    for key in cfgmod.FIELDS:
        flag = "--" + key.replace("_", "-")
        default = getattr(cfgmod.RunConfig(), key)
        text = f"{_HELP[key]} (default: {cfgmod.format_value(default)})"
        if isinstance(default, bool):
            g.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None, help=text)
        else:
            g.add_argument(flag, dest=key, type=_converter(key), default=None,
                           metavar=key.upper(), help=text)
    return p


COMMANDS = {
    "preprocess": "filter ratings/trust to the fixpoint and write dense CSVs",
    "congruity": "write per-pair interaction counts and congruity",
    "analyze": "pair taxonomy and the two congruity t-tests",
    "train": "fit one model on a seeded split",
    "evaluate": "RMSE/MAE of a saved model on its held-out split",
    "compare": "repeated-split comparison of several methods",
    "ablate": "CSRR against its three ablations",
    "synth": "write a planted-cluster synthetic corpus",
}


def build_parser():
    parent = _config_parent()
    parser = argparse.ArgumentParser(prog="congrec", description="Congruity-regularized matrix factorization.",
                                     epilog="exit codes: 0 success, 1 runtime failure, 2 usage/config error")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in COMMANDS.items():
        sub.add_parser(name, parents=[parent], help=text, description=text)
    return parser


# ------------------------------------------------------------- helpers ----

def _require(path, what):
    if not path:
        raise ConfigurationError(f"--{what} is required")
    if not Path(path).is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def _load(cfg, need_helpfulness=False):
    _require(cfg.ratings, "ratings")
    _require(cfg.trust, "trust")
    hp = None
    if cfg.helpfulness or need_helpfulness:
        hp = _require(cfg.helpfulness, "helpfulness")
    return load_dataset(cfg.ratings, cfg.trust, hp)


def _strength(cfg):
    return StrengthFunction(cfg.g_variant, cfg.log_base)


def _counts(cfg, ds):
    if ds.events is None:
        raise ConfigurationError("this command needs --helpfulness")
    return count_interactions(ds.events, cfg.positive_scores, cfg.negative_scores)


def _congruity(cfg, ds):
    return build_congruity(_counts(cfg, ds), _strength(cfg)).congruity


def _out(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _split(cfg, ds):
    spec = SplitSpec(cfg.train_fraction, derive_seed(cfg.base_seed, cfg.train_fraction, 0, 0))
    return split(ds.ratings, spec)


def _model_path(cfg):
    return Path(cfg.model) if cfg.model else Path(cfg.out_dir) / "model.bin"


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ------------------------------------------------------------ commands ----

def cmd_preprocess(cfg):
    res = _load(cfg)
    out = _out(cfg)
    write_dataset(res.dataset, out)
    if cfg.report:
        write_preprocess_report(res, out / "retained_users.csv")
    ds = res.dataset
    print(f"kept {ds.n} users, {ds.m} items, {ds.ratings.nnz} ratings after {res.passes} passes")
    return EXIT_OK


def cmd_congruity(cfg):
    ds = _load(cfg, need_helpfulness=True).dataset
    out = _out(cfg)
    counts = _counts(cfg, ds)
    write_congruity(out / "congruity.csv", counts, _strength(cfg), ds.users)
    print(f"wrote {len(counts.a)} pairs to {out / 'congruity.csv'}")
    return EXIT_OK


def cmd_analyze(cfg):
    ds = _load(cfg, need_helpfulness=True).dataset
    out = _out(cfg)
    C = _congruity(cfg, ds)
    tax = pair_taxonomy(C, ds.graph)
    _write_rows(out / "taxonomy.csv", ("pair_type", "count"), [
        ("friends_congruent", tax.friends_congruent),
        ("friends_incongruent", tax.friends_incongruent),
        ("strangers_congruent", tax.strangers_congruent),
        ("strangers_incongruent", tax.strangers_incongruent),
    ])
    results = [friend_congruence_test(C, ds.graph),
               congruity_preference_test(C, ds.ratings, seed=cfg.base_seed)]
    write_analysis_report(out / "analysis.csv", [report_row(r, cfg.alpha) for r in results])
    for r in results:
        verdict = "rejected" if r.test.rejected(cfg.alpha) else "not rejected"
        print(f"{r.name}: t={r.test.t_statistic:.4g} p={r.test.p_value:.4g} ({verdict} at alpha={cfg.alpha})")
    return EXIT_OK


def cmd_train(cfg):
    ds = _load(cfg, need_helpfulness=cfg.variant in (CR, CSRR)).dataset
    train_part, _ = _split(cfg, ds)
    v = cfg.variant
    spec = ClosenessSpec(
        v,
        congruity=_congruity(cfg, ds) if v in (CR, CSRR) else None,
        similarity=cosine_user_similarity(train_part) if v in (SMF, SOREG) else None,
        graph=ds.graph if v in (SOREG, CSRR) else None,
    )
    tc = cfg.train_config(seed=derive_seed(cfg.base_seed, cfg.train_fraction, 0, 1))
    res = train(train_part, spec, tc, variant=v)
    out = _out(cfg)
    save_model(res.model, _model_path(cfg))
    write_trace(res, out / "trace.csv")
    state = "converged" if res.converged else "stopped at max_iters"
    print(f"{v}: {res.iterations} iterations ({state}), objective {res.objectives[-1]:.6g}")
    return EXIT_OK


def cmd_evaluate(cfg):
    ds = _load(cfg).dataset
    path = _model_path(cfg)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    model = load_model(path)
    if (model.n, model.m) != (ds.n, ds.m):
        raise ValidationError(f"model is {model.n}x{model.m} but the dataset is {ds.n}x{ds.m}")
    train_part, test = _split(cfg, ds)
    if cfg.exclude_cold_start:
        test = drop_cold_start(train_part, test)
    r = rmse(model, test, cfg.clamp_predictions)
    a = mae(model, test, cfg.clamp_predictions)
    out = _out(cfg)
    _write_rows(out / "metrics.csv", ("metric", "value"),
                [("rmse", repr(r)), ("mae", repr(a)), ("n_test", test.nnz)])
    print(f"rmse={r:.6f} mae={a:.6f} on {test.nnz} held-out ratings")
    return EXIT_OK


def _needs_events(variants):
    return any(v in (CR, CSRR) for v in variants)


def _print_summary(report):
    for m, f, metric, mean, std, n in report.summary_rows():
        print(f"{m:8s} x={f:<5g} {metric}={mean:.4f} +- {std:.4f} ({n} runs)")


def cmd_compare(cfg):
    bad = [m for m in cfg.methods if m.lower() not in VARIANTS]
    if bad or not cfg.methods:
        raise ConfigurationError(f"unknown method(s) {', '.join(bad) or '(none)'}; valid methods: {', '.join(VARIANTS)}")
    ds = _load(cfg, need_helpfulness=_needs_events([m.lower() for m in cfg.methods])).dataset
    C = _congruity(cfg, ds) if ds.events is not None else None
    report = run_comparison(ds, cfg.methods, cfg.fractions, cfg.runs, cfg.base_seed,
                            base_config=cfg.train_config(), congruity=C, jobs=cfg.jobs,
                            exclude_cold_start=cfg.exclude_cold_start)
    write_report(report, _out(cfg), "comparison")
    _print_summary(report)
    return EXIT_OK


def cmd_ablate(cfg):
    ds = _load(cfg, need_helpfulness=True).dataset
    report = run_ablation(ds, cfg.delta, cfg.fractions, cfg.runs, cfg.base_seed, config=cfg.train_config(),
                          congruity=_congruity(cfg, ds), jobs=cfg.jobs,
                          exclude_cold_start=cfg.exclude_cold_start)
    write_report(report, _out(cfg), "ablation")
    _print_summary(report)
    return EXIT_OK


def cmd_synth(cfg):
    data = generate_synthetic(cfg.synth_n, cfg.synth_m, cfg.synth_d, cfg.congruity_density,
                              cfg.friend_density, cfg.noise_sigma, cfg.base_seed)
    out = data.write(_out(cfg))
    print(f"wrote {len(data.ratings)} ratings, {len(data.social)} friendships and "
          f"{len(data.events)} helpfulness events to {out}")
    return EXIT_OK


HANDLERS = {
    "preprocess": cmd_preprocess,
    "congruity": cmd_congruity,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    flags = {k: getattr(args, k) for k in cfgmod.FIELDS}
    try:
        cfg = cfgmod.resolve(args.config, flags)
        if args.dump_config:
            Path(args.dump_config).write_text(cfg.to_text(), encoding="utf-8")
        return HANDLERS[args.command](cfg)
    except (ConfigurationError, FileNotFoundError, ParseError, ValidationError) as exc:
        print(f"congrec {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CongrecError, ArithmeticError) as exc:
        print(f"congrec {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
