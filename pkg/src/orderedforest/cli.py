"""Command-line interface: ``orderedforest <command> [options]``.

Commands: ``train``, ``predict``, ``margins``, ``simulate`` and
``crossval``. Each run prints a header with the package version, seed,
thread count and a hash of the resolved options. Options may also come from
a JSON file given with ``--config``; explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import warnings

import numpy as np

from . import __version__
from . import simulation as sim
from .data import load_covariates, load_csv
from .effects import marginal_effects
from .errors import NotInferenceReady, OrderedForestError
from .estimators import NAMES as ESTIMATOR_NAMES
from .estimators import make_estimators
from .forest import ForestParams
from .metrics import cross_validate, score
from .ologit import OlogitModel, fit_ologit, ologit_marginal_effects
from .ordered import fit, load_model, save_model


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _common(p):
    p.add_argument("--seed", type=int, help="random seed (generated and printed when absent)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--config", help="JSON file of option defaults; flags override it")


def _forest_options(p):
    p.add_argument("--trees", type=int, default=1000)
    p.add_argument("--mtry", type=int, help="covariates tried per split (default ceil(sqrt(p)))")
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--fraction", type=float,
                   help="subsample share per tree (default 0.5 honest, 1.0 bootstrap)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orderedforest",
                                     description="Ordered Forest estimation and benchmarking.")
    parser.add_argument("--version", action="version", version=f"orderedforest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on a CSV file")
    p.add_argument("data", help="training CSV with a header row")
    p.add_argument("--y", required=True, help="outcome column")
    p.add_argument("--out", default="model.json", help="model file to write")
    p.add_argument("--model", choices=("ordered", "multinomial", "ologit"), default="ordered")
    p.add_argument("--honest", action="store_true")
    p.add_argument("--inference", action="store_true",
                   help="keep what weight-based standard errors need (ordered only)")
    p.add_argument("--categorical", default="", help="comma-separated categorical columns")
    p.add_argument("--oob", action="store_true", help="print out-of-bag accuracy")
    _forest_options(p)
    _common(p)

    p = sub.add_parser("predict", help="class probabilities for a CSV file")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--out", help="CSV to write (default stdout)")
    _common(p)

    p = sub.add_parser("margins", help="marginal effects table")
    p.add_argument("model")
    p.add_argument("data", help="CSV whose rows define the evaluation points")
    p.add_argument("--at", choices=("mean", "all"), default="mean",
                   help="'mean': at the covariate means; 'all': mean of effects over rows")
    p.add_argument("--inference", action="store_true", help="add standard errors and p-values")
    p.add_argument("--out", help="CSV to write")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo comparison on simulated designs")
    p.add_argument("--list", action="store_true", help="list the 72 designs and exit")
    p.add_argument("--dgp", help="comma-separated design ids or names (e.g. 1,complex9)")
    p.add_argument("--classes", type=int, choices=sim.CLASS_COUNTS,
                   help="class count of a design given by flags")
    p.add_argument("--high-dim", action="store_true")
    for flag in ("noise", "nonlinear", "multicollinear", "random-thresholds"):
        p.add_argument(f"--{flag}", action="store_true")
    p.add_argument("--estimators", default="ologit,ordered")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--train-n", type=int, default=200)
    p.add_argument("--test-n", type=int, default=10_000)
    p.add_argument("--out", help="results CSV to write")
    _forest_options(p)
    _common(p)

    p = sub.add_parser("crossval", help="repeated k-fold cross-validation on a CSV file")
    p.add_argument("data")
    p.add_argument("--y", required=True)
    p.add_argument("--estimators", default="ologit,ordered")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--categorical", default="")
    p.add_argument("--out", help="score CSV to write")
    _forest_options(p)
    _common(p)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from the ``--config`` file, if any."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(doc, dict):
        parser.error("config must be a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            parser.error(f"unknown config key {key!r} for {args.command}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _resolve(args) -> dict:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2 ** 31))
    if args.threads < 1:
        raise ValueError("--threads must be at least 1")
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("config",)}
    return resolved


def _header(resolved) -> str:
    blob = json.dumps({k: v for k, v in resolved.items() if k != "threads"},
                      sort_keys=True, default=str)
    digest = hashlib.sha256(blob.encode()).hexdigest()[:12]
    return (f"# orderedforest {__version__} command={resolved['command']} "
            f"seed={resolved['seed']} threads={resolved['threads']} config={digest}")


def _params(args, honest=False) -> ForestParams:
    return ForestParams(n_trees=args.trees, mtry=args.mtry, min_leaf=args.min_leaf,
                        honest=honest, subsample_fraction=args.fraction, seed=args.seed,
                        n_jobs=args.threads)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)


def cmd_train(args):
    data = load_csv(args.data, args.y, _csv_list(args.categorical))
    counts = np.bincount(data.y, minlength=data.M + 1)[1:]
    print(f"observations={data.N} covariates={data.p} classes={data.M}")
    print("class counts: " + ", ".join(f"{v}:{c}" for v, c in zip(data.label_values, counts)))
    if args.model == "ologit":
        if args.inference or args.honest:
            raise ValueError("--honest and --inference apply to forest models only")
        model = fit_ologit(data)
        print(f"ordered logit: loglik={model.loglik:.6f} iterations={model.n_iter} "
              f"converged={model.converged}")
    else:
        params = _params(args, honest=args.honest)
        model = fit(data, params, variant=args.model, inference=args.inference)
        print(f"{args.model} forest: trees={params.n_trees} mtry={params.resolve_mtry(data.p)} "
              f"min_leaf={params.min_leaf} honest={params.honest} "
              f"inference_ready={model.inference_ready}")
        if args.oob:
            if model.inference_ready:
                print("out-of-bag accuracy is not available for inference models")
            else:
                rep = score(data.y, model.predict_proba(data.X, oob=True))
                print(f"out-of-bag ARPS={rep.arps:.6f} AMSE={rep.amse:.6f}")
    save_model(model, args.out)
    print(f"wrote {args.out}")


def _model_columns(model):
    return model.train_meta.col_names


def cmd_predict(args):
    model = load_model(args.model)
    X = load_covariates(args.data, _model_columns(model))
    P = model.predict_proba(X)
    labels = model.label_values or tuple(range(1, model.M + 1))
    rows = [["row", *(f"prob_{v}" for v in labels), "predicted"]]
    for i, prow in enumerate(P):
        rows.append([i + 1, *(repr(float(v)) for v in prow), labels[int(np.argmax(prow))]])
    _emit(_rows_to_csv(rows), args.out)


def _rows_to_csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_margins(args):
    model = load_model(args.model)
    X = load_covariates(args.data, _model_columns(model))
    eval_kind = "at_mean" if args.at == "mean" else "mean"
    if isinstance(model, OlogitModel):
        if args.inference:
            raise NotInferenceReady("standard errors are available for Ordered Forest models only")
        table = ologit_marginal_effects(model, X, eval_kind)
    else:
        table = marginal_effects(model, X, eval_kind, with_inference=args.inference)
    print(table.format())
    if args.out:
        table.to_csv(args.out)
        print(f"wrote {args.out}")


def _designs(args):
    if args.dgp:
        return [sim.get_dgp(k) for k in _csv_list(args.dgp)]
    if args.classes is None:
        raise ValueError("give --dgp or --classes with design flags")
    cfg = sim.DgpConfig(n_classes=args.classes, high_dim=args.high_dim, noise=args.noise,
                        nonlinear=args.nonlinear, multicollinear=args.multicollinear,
                        random_thresholds=args.random_thresholds)
    for c in sim.enumerate_dgps():
        if c.n_classes == cfg.n_classes and c.high_dim == cfg.high_dim and c.flags() == cfg.flags():
            return [c]
    return [cfg]


def cmd_simulate(args):
    if args.list:
        print("id,name,classes,high_dim,noise,nonlinear,multicollinear,random_thresholds")
        for c in sim.enumerate_dgps():
            f = c.flags()
            print(",".join(str(v) for v in (c.dgp_id, c.name, c.n_classes, int(c.high_dim),
                                             *(int(f[k]) for k in sim.FLAGS))))
        return
    names = _csv_list(args.estimators)
    unknown = [n for n in names if n not in ESTIMATOR_NAMES]
    if unknown:
        raise ValueError(f"unknown estimators: {', '.join(unknown)}")
    designs = _designs(args)
    for c in designs:
        if c.high_dim and "ologit" in names:
            print(f"warning: ordered logit skipped for high-dimensional design {c.name}",
                  file=sys.stderr)
    estimators = make_estimators(names, _params(args))
    results = sim.run_experiment(designs, estimators, R=args.reps, n_train=args.train_n,
                                 n_test=args.test_n, seed=args.seed)
    _emit(results.to_csv(), args.out)


def cmd_crossval(args):
    data = load_csv(args.data, args.y, _csv_list(args.categorical))
    names = _csv_list(args.estimators)
    unknown = [n for n in names if n not in ESTIMATOR_NAMES]
    if unknown:
        raise ValueError(f"unknown estimators: {', '.join(unknown)}")
    result = cross_validate(data, make_estimators(names, _params(args)), k=args.folds,
                            repeats=args.repeats, seed=args.seed)
    _emit(result.to_csv(dataset_name=args.data), args.out)


COMMANDS = {"train": cmd_train, "predict": cmd_predict, "margins": cmd_margins,
            "simulate": cmd_simulate, "crossval": cmd_crossval}


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        resolved = _resolve(args)
    except ValueError as exc:
        parser.error(str(exc))
    print(_header(resolved))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](args)
    except (OrderedForestError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
