"""Command-line interface: ``rpsubspace <subcommand> [options]``.

Exit codes: 0 success, 2 invalid arguments, 3 solver non-convergence,
4 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import bounds, experiments
from .data import ParseError, generate_union, load_matrix, save_matrix, split
from .randproj import DENSE, RECIPES, CancelableTemplate, generate, issue_template, match_template, \
    project_dataset, reissue_template
from .sparserep import DEFAULT_MAX_ITER, DEFAULT_TOL, Dictionary, SolverError, src_classify_batch

EXIT_OK, EXIT_ARGS, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("rpsubspace")


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    """Comma list ``30,60,90`` or range ``start:stop:step`` (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (int(t) for t in text.split(":"))
            return list(range(start, stop + 1, step))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers or start:stop:step, got {text!r}") from None


def _synthetic(text):
    """``n=1024,K=10,d=5,count=40`` -> keyword arguments for generate_union."""
    keys = {"n": "n", "K": "K", "d": "dims", "count": "counts", "scale": "coeff_scale"}
    out = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        if key.strip() not in keys:
            raise argparse.ArgumentTypeError(f"unknown synthetic key {key!r}; use {sorted(keys)}")
        out[keys[key.strip()]] = float(value) if key.strip() == "scale" else int(value)
    missing = {"n", "K", "dims", "counts"} - set(out)
    if missing:
        raise argparse.ArgumentTypeError(f"synthetic spec lacks {sorted(missing)}")
    return out


def _emit(text, args):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dataset(args):
    if args.input:
        return load_matrix(args.input)
    if args.synthetic:
        return generate_union(seed=args.seed, **args.synthetic)
    raise ValueError("give --input <file> or --synthetic <spec>")


def cmd_gen_data(args):
    X = generate_union(args.n, args.K, args.dims, args.counts, seed=args.seed,
                       coeff_scale=args.coeff_scale, orthogonal=args.orthogonal)
    if args.out:
        save_matrix(X, args.out)
    else:
        for row, label in zip(X.vectors, X.labels):
            sys.stdout.write(",".join(repr(float(v)) for v in row) + f",{label}\n")


def cmd_reject(args):
    config = experiments.RejectionConfig(
        n=args.n, m_grid=tuple(args.m_grid), trials=args.trials, eps=tuple(args.eps),
        gamma_targets=tuple(args.gamma), mode=args.mode, master_seed=args.seed,
        length_range=tuple(args.lengths), recipe=args.recipe)
    report = experiments.rejection_curve(config, workers=args.workers)
    _emit(report.render(args.format), args)


def cmd_bench(args):
    X = _dataset(args)
    report = experiments.structure_benchmark(
        X, args.dims, methods=args.methods, split_fraction=args.split, seed=args.seed,
        recipe=args.recipe, repeats=args.repeats, timing=not args.omit_timing,
        tol=args.tol, max_iter=args.max_iter, workers=args.workers)
    _emit(report.render(args.format), args)


def cmd_classify(args):
    if args.train:
        train, test = load_matrix(args.train), load_matrix(args.test or args.train)
    else:
        train, test = split(_dataset(args), args.split, args.seed)
    if args.dim:
        R = generate(train.dim, args.dim, args.recipe, args.seed)
        train, test = project_dataset(R, train), project_dataset(R, test)
    D = Dictionary(train.vectors.T, train.labels)
    chunks = [test.vectors[i:i + 64] for i in range(0, test.size, 64)]
    results = experiments.parallel_map(
        lambda Y: src_classify_batch(D, Y, args.tol, args.max_iter, args.sigma), chunks, args.workers)
    rows = []
    for (labels, codes), start in zip(results, range(0, test.size, 64)):
        for j, (pred, code) in enumerate(zip(labels, codes)):
            i = start + j
            rows.append({"index": i, "label": int(test.labels[i]), "predicted": int(pred),
                         "l1_norm": float(code.objective), "iterations": code.iterations})
    acc = float(np.mean([r["label"] == r["predicted"] for r in rows]))
    cfg = {"dim": args.dim, "recipe": args.recipe, "seed": args.seed, "tol": args.tol,
           "max_iter": args.max_iter, "sigma": args.sigma}
    report = experiments.ExperimentReport("classify", cfg, rows, {"accuracy": acc, "seed": args.seed})
    _emit(report.render(args.format), args)


def cmd_bounds(args):
    rows = []

    def add(quantity, value, **extra):
        rows.append({"quantity": quantity, "value": value, **extra})

    for mode in (bounds.PAPER_LITERAL, bounds.EXACT_INVERSION):
        m = bounds.min_projection_dim(args.N, args.eps, args.delta, mode)
        add("min_projection_dim", m, mode=mode,
            achieved_prob=bounds.multiclass_success_prob(args.N, m, args.eps))
    if args.m:
        add("jl_success_prob", bounds.jl_success_prob(args.m, args.eps))
        add("multiclass_success_prob", bounds.multiclass_success_prob(args.N, args.m, args.eps))
    if args.gamma is not None:
        iv = bounds.cosine_interval(args.gamma, args.eps, args.m)
        add("cosine_interval_lo", iv.lo, mode=iv.case)
        add("cosine_interval_hi", iv.hi, mode=iv.case)
        if iv.success_prob is not None:
            add("cosine_interval_prob", iv.success_prob, mode=iv.case)
        if args.gamma >= 0:
            add("projected_margin_bound", bounds.projected_margin_bound(args.gamma, args.eps))
    if args.d:
        add("recommended_dim_for_subspace", bounds.recommended_dim_for_subspace(args.d))
    cfg = {"N": args.N, "eps": args.eps, "delta": args.delta, "m": args.m, "gamma": args.gamma, "d": args.d}
    _emit(experiments.ExperimentReport("bounds", cfg, rows).render(args.format), args)


def cmd_attack(args):
    report = experiments.attack_demo(args.n, args.m, args.count, seed=args.seed,
                                     subspace_dim=args.subspace_dim, recipe=args.recipe)
    _emit(report.render(args.format), args)


def _vector(path):
    try:
        v = np.loadtxt(path, delimiter=",", ndmin=1, dtype=np.float64)
    except ValueError as exc:
        raise ParseError(str(exc), path=path) from None
    if v.ndim != 1:
        raise ParseError("expected a single feature vector", path=path)
    return v


def _read_template(path):
    with open(path) as fh:
        try:
            return CancelableTemplate.from_dict(json.load(fh))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"not a template document: {exc}", path=path) from None


def cmd_template(args):
    if args.action == "issue":
        t = issue_template(_vector(args.vector), args.subject, args.seed, args.m, args.recipe)
    elif args.action == "reissue":
        prev = _read_template(args.template)
        t = reissue_template(_vector(args.vector), prev.subject, args.new_seed, prev.m, prev.recipe, previous=prev)
    else:
        t = _read_template(args.template)
        score = match_template(t, _vector(args.vector))
        row = {"subject": t.subject, "seed": t.seed, "score": score,
               "accepted": bool(score >= args.threshold)}
        report = experiments.ExperimentReport("match", {"threshold": args.threshold}, [row])
        _emit(report.render(args.format), args)
        return
    _emit(json.dumps(t.to_dict(), indent=2, sort_keys=True) + "\n", args)


def _common():
    # defaults suppressed so values given before the subcommand survive
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="write the report here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    p.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker threads")
    p.add_argument("--omit-timing", action="store_true", default=argparse.SUPPRESS,
                   help="leave wall-clock columns out so reports are reproducible byte for byte")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _solver_opts(p):
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--recipe", choices=RECIPES, default=DENSE)


def _data_opts(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--input", help="dataset file (.csv or raw .f64)")
    g.add_argument("--synthetic", type=_synthetic, help="e.g. n=1024,K=10,d=5,count=40")
    p.add_argument("--split", type=float, default=0.5, help="training fraction")


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="rpsubspace", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--omit-timing", action="store_true")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="sample a union-of-subspaces dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--dims", type=_ints, required=True)
    p.add_argument("--counts", type=_ints, required=True)
    p.add_argument("--coeff-scale", type=float, default=1.0)
    p.add_argument("--orthogonal", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("reject", parents=[common], help="rejection probability sweep")
    p.add_argument("--mode", choices=experiments.MODES, default=experiments.COSINE)
    p.add_argument("--eps", type=_floats, default=[0.1, 0.3])
    p.add_argument("--gamma", type=_floats,
                   default=list(experiments.ACUTE_TARGETS + experiments.OBTUSE_TARGETS))
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--m-grid", type=_ints, default=list(experiments.DEFAULT_M_GRID))
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--lengths", type=_floats, default=[1.0, 10.0], help="lo,hi of the uniform length draw")
    p.add_argument("--recipe", choices=RECIPES, default=DENSE)
    p.set_defaults(func=cmd_reject)

    p = sub.add_parser("bench", parents=[common], help="RP vs PCA reduction time and SRC accuracy")
    p.add_argument("--dims", type=_ints, required=True)
    p.add_argument("--methods", type=lambda s: [t for t in s.split(",") if t], default=["rp", "pca"])
    p.add_argument("--repeats", type=int, default=5)
    _data_opts(p)
    _solver_opts(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("classify", parents=[common], help="SRC on a dataset, optionally after RP")
    p.add_argument("--train", help="training file; with --test, skips the split")
    p.add_argument("--test")
    p.add_argument("--dim", type=int, help="project to this dimension first")
    p.add_argument("--sigma", type=float, default=0.0, help="noise radius of the relaxed constraint")
    _data_opts(p)
    _solver_opts(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bounds", parents=[common], help="evaluate the closed-form bounds")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.95)
    p.add_argument("--m", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--d", type=int)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("attack", parents=[common], help="pseudo-inverse reconstruction attack")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--subspace-dim", type=int)
    p.add_argument("--recipe", choices=RECIPES, default=DENSE)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("template", parents=[common], help="issue, reissue or match cancelable templates")
    p.add_argument("action", choices=("issue", "reissue", "match"))
    p.add_argument("--vector", required=True, help="comma-separated feature vector file")
    p.add_argument("--template", help="stored template JSON (reissue, match)")
    p.add_argument("--subject", default="subject")
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--new-seed", type=int)
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--recipe", choices=RECIPES, default=DENSE)
    p.set_defaults(func=cmd_template)
    return parser


def _check_template_args(args, parser):
    if args.command != "template":
        return
    if args.action in ("reissue", "match") and not args.template:
        parser.error(f"template {args.action} needs --template")
    if args.action == "reissue" and args.new_seed is None:
        parser.error("template reissue needs --new-seed")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_template_args(args, parser)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except SolverError as exc:
        print(f"rpsubspace: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ParseError, OSError) as exc:
        print(f"rpsubspace: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"rpsubspace: invalid argument: {exc}", file=sys.stderr)
        return EXIT_ARGS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
