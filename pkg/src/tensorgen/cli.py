"""Command line interface: ``fit``, ``sample``, ``evaluate`` and ``sweep``.

Exit codes:
  0  success
  1  unexpected internal error
  2  input error (bad flags, unreadable or malformed files, shape mismatches)
  3  numerical failure (rank deficiency, deflation or completion failure)
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    DEFAULT_TOP_K,
    BinaryDataset,
    binarize_code_list,
    load_code_list,
    load_csv,
    split_holdout,
    write_csv,
)
from .errors import InputError, NumericalError, TensorGenError
from .evaluate import DEFAULT_TEST_FRACTION, METRIC_COLUMNS, classifier_two_sample_test, format_metric
from .forest import ForestSettings
from .model import (
    BaselineModel,
    NaiveBayesModel,
    fit_baseline,
    load_model,
    log_likelihood,
    sample,
    sample_baseline,
    save_model,
)
from .pipeline import FitOptions, fit_tensorgen

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

SWEEP_HEADER = ("k",) + METRIC_COLUMNS + ("holdout_loglik", "seed")

log = logging.getLogger("tensorgen")


# -- argument parsing -------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _features_per_split(text):
    return text if text == "sqrt" else _positive_int(text)


def _bandwidth(text):
    return text if text == "median" else float(text)


def _add_input(p):
    p.add_argument("--input", required=True, help="dense 0/1 CSV or record_id,code list")
    p.add_argument("--format", choices=("csv", "codelist"), default="csv")
    p.add_argument("--top-k", type=_positive_int, default=DEFAULT_TOP_K,
                   help="codes kept when binarizing a code list (default 100)")


def _add_fit_options(p):
    p.add_argument("--holdout-fraction", type=float, default=0.2)
    p.add_argument("--restarts", type=_positive_int, default=10)
    p.add_argument("--power-iters", type=_positive_int, default=100)
    p.add_argument("--completion-iters", type=_positive_int, default=50)
    p.add_argument("--em-max-iters", type=int, default=100)
    p.add_argument("--em-rel-tol", type=float, default=1e-6)


def _add_forest_options(p):
    p.add_argument("--n-trees", type=_positive_int, default=200)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=_positive_int, default=1)
    p.add_argument("--features-per-split", type=_features_per_split, default="sqrt")
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--bandwidth", type=_bandwidth, default="median",
                   help="MMD kernel bandwidth, or 'median' for the median heuristic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tensorgen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=_positive_int, default=1)
        p.add_argument("--config", default=None, help="JSON file of option defaults; flags win")

    p = sub.add_parser("fit", help="learn a naive Bayes model and write model.nbm")
    _add_input(p)
    p.add_argument("--k", type=_positive_int, required=True)
    _add_fit_options(p)
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", help="draw synthetic rows from a model file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="naive Bayes .nbm file")
    src.add_argument("--baseline", help="first-moment baseline .nbm file")
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--out", required=True, help="output CSV")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="compare a real and a synthetic CSV")
    p.add_argument("--real", required=True)
    p.add_argument("--synth", required=True)
    _add_forest_options(p)
    p.add_argument("--out", default=None, help="report CSV (default: stdout)")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="fit, sample and evaluate over several k")
    _add_input(p)
    p.add_argument("--k", type=_positive_int, nargs="+", required=True, dest="k")
    p.add_argument("--m", type=_positive_int, default=None,
                   help="synthetic rows per model (default: holdout size)")
    _add_fit_options(p)
    _add_forest_options(p)
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in subparsers), None)
    if known.config and command:
        path = Path(known.config)
        if not path.is_file():
            raise InputError(f"no such config file: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise InputError(f"{path}: expected a JSON object")
        sub = subparsers[command]
        dests = {action.dest for action in sub._actions} - {"help", "config"}
        unknown = sorted(set(cfg) - dests)
        if unknown:
            raise InputError(f"{path}: unknown option(s) {', '.join(unknown)}")
        # file values become defaults, so explicit flags still win
        sub.set_defaults(**cfg)
        for action in sub._actions:
            if action.dest in cfg:
                action.required = False
    return parser.parse_args(argv)


# -- helpers ------------------------------------------------------------------

def _load_input(args) -> BinaryDataset:
    if args.format == "codelist":
        return binarize_code_list(load_code_list(args.input), args.top_k)
    return load_csv(args.input)


def _fit_options(args) -> FitOptions:
    return FitOptions(
        restarts=args.restarts,
        power_iters=args.power_iters,
        completion_iters=args.completion_iters,
        em_max_iters=args.em_max_iters,
        em_rel_tol=args.em_rel_tol,
    )


def _forest_settings(args) -> ForestSettings:
    return ForestSettings(
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        features_per_split=args.features_per_split,
        seed=args.seed,
    )


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(args, out_dir: Path) -> None:
    # thread count and output location do not change results, so they stay
    # out of the manifest and runs stay byte-comparable
    skip = {"func", "threads", "out"}
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    _write_json(out_dir / "manifest.json", {"tensorgen_version": __version__, "options": opts})


def baseline_as_mixture(base: BaselineModel) -> NaiveBayesModel:
    return NaiveBayesModel([1.0], base.freqs[:, None], base.feature_names)


def _check_same_features(real: BinaryDataset, synth: BinaryDataset) -> None:
    if real.feature_names == synth.feature_names:
        return
    for i, (a, b) in enumerate(zip(real.feature_names, synth.feature_names)):
        if a != b:
            raise InputError(f"headers differ at column {i}: real has {a!r}, synthetic has {b!r}")
    longer, which = (
        (real, "real") if real.n_cols > synth.n_cols else (synth, "synthetic")
    )
    extra = longer.feature_names[min(real.n_cols, synth.n_cols)]
    raise InputError(f"headers differ: feature {extra!r} only in the {which} file")


# -- subcommands --------------------------------------------------------------

def cmd_fit(args) -> int:
    data = _load_input(args)
    train, holdout = split_holdout(data, args.holdout_fraction, args.seed)
    result = fit_tensorgen(train, args.k, args.seed, _fit_options(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out / "model.nbm")
    save_model(fit_baseline(train), out / "baseline.nbm")
    write_csv(train, out / "train.csv")
    write_csv(holdout, out / "holdout.csv")
    holdout_ll = log_likelihood(result.model, holdout)
    _write_json(
        out / "fit_report.json",
        {
            "k": args.k,
            "seed": args.seed,
            "n_train": train.n_rows,
            "n_holdout": holdout.n_rows,
            "n_features": train.n_cols,
            "holdout_loglik": holdout_ll,
            "holdout_loglik_per_row": holdout_ll / holdout.n_rows,
            "em": result.em_report.as_dict(),
        },
    )
    _manifest(args, out)
    log.info("fit k=%d: holdout log-likelihood %.6g per row", args.k, holdout_ll / holdout.n_rows)
    return EXIT_OK


def cmd_sample(args) -> int:
    path = args.model or args.baseline
    model = load_model(path)
    if args.model and not isinstance(model, NaiveBayesModel):
        raise InputError(f"{path} is not a naive Bayes model file")
    if args.baseline and not isinstance(model, BaselineModel):
        raise InputError(f"{path} is not a baseline model file")
    if isinstance(model, NaiveBayesModel):
        synth = sample(model, args.m, args.seed, n_jobs=args.threads)
    else:
        synth = sample_baseline(model, args.m, args.seed, n_jobs=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(synth, out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    real = load_csv(args.real)
    synth = load_csv(args.synth)
    _check_same_features(real, synth)
    report = classifier_two_sample_test(
        real, synth, _forest_settings(args), args.test_fraction, args.seed,
        n_jobs=args.threads, bandwidth=args.bandwidth,
    )
    rows = [list(report.HEADER), report.csv_row()]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    else:
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    data = _load_input(args)
    train, holdout = split_holdout(data, args.holdout_fraction, args.seed)
    m = args.m or holdout.n_rows
    settings = _forest_settings(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def evaluate(synth, ll, label):
        rep = classifier_two_sample_test(
            holdout, synth, settings, args.test_fraction, args.seed,
            n_jobs=args.threads, bandwidth=args.bandwidth,
        )
        return [label] + [format_metric(getattr(rep, c)) for c in METRIC_COLUMNS] + [
            format_metric(ll), str(args.seed)
        ]

    base = fit_baseline(train)
    rows = [evaluate(sample_baseline(base, m, args.seed, args.threads),
                     log_likelihood(baseline_as_mixture(base), holdout), "baseline")]
    for k in sorted(set(args.k)):
        try:
            result = fit_tensorgen(train, k, args.seed, _fit_options(args))
        except NumericalError as exc:
            log.warning("k=%d too large for this dataset: %s", k, exc)
            rows.append([str(k)] + ["nan"] * (len(SWEEP_HEADER) - 2) + [str(args.seed)])
            continue
        save_model(result.model, out / f"model_k{k}.nbm")
        synth = sample(result.model, m, args.seed, args.threads)
        rows.append(evaluate(synth, log_likelihood(result.model, holdout), str(k)))
        log.info("k=%d done", k)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        w.writerows(rows)
    _manifest(args, out)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args = parse_args(argv)
        return args.func(args)
    except InputError as exc:
        log.error("%s", _describe(exc))
        return EXIT_INPUT
    except NumericalError as exc:
        log.error("%s", _describe(exc))
        return EXIT_NUMERICAL
    except TensorGenError as exc:
        log.error("%s", _describe(exc))
        return EXIT_INTERNAL
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


def _describe(exc) -> str:
    stage = getattr(exc, "stage", None)
    return f"{stage}: {exc}" if stage else str(exc)


if __name__ == "__main__":
    sys.exit(main())
