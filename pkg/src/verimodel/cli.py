"""Command-line interface: ``verimodel <subcommand> --help`` for details.

Exit codes: 0 success, 2 bad configuration or arguments, 3 parse or
validation failure, 4 runtime limit reached (truncation, solver budget,
fuel), 5 fitting or assessment failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import doe
from .features import extract_features
from .frontend import ParseError, parse_expr, parse_program, validate
from .ir import Binary, format_program
from .modeling import (
    ArityMismatch,
    DegreesOfFreedomTooSmall,
    EmptyDataset,
    GPConfig,
    RankDeficient,
    TooFewRows,
    TrainTestOverlap,
    assess,
    fit_linear,
    load_model,
    prediction_interval,
    read_csv,
    save_model,
    split,
    symbolic_regression,
)
from .optimizer import PASS_NAMES, OptConfig, run_passes
from .pipeline import (
    EXIT_CONFIG,
    EXIT_FIT,
    EXIT_LIMIT,
    EXIT_OK,
    EXIT_PARSE,
    RESPONSES,
    atomic_write,
    config_from_dict,
    csv_text,
    observation_columns,
    observations_csv,
    run_experiment,
    run_experiments,
    derive_seed,
    run_pipeline,
)
from .solver import Atom, BudgetExceeded, Constraint, decide
from .symbols import load_spec
from .symexec import Limits

SEED_ENV = "VERIMODEL_SEED"
_FIT_ERRORS = (RankDeficient, TooFewRows, DegreesOfFreedomTooSmall, EmptyDataset, TrainTestOverlap, ArityMismatch)


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def env_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise CliError(EXIT_CONFIG, f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _resolve_seed(arg):
    if arg is not None:
        return arg
    env = env_seed()
    return 0 if env is None else env


# -- shared loading -------------------------------------------------------------


def _load_program(path, optimize: bool = True, config: OptConfig = OptConfig()):
    try:
        source = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    try:
        program = parse_program(source)
    except ParseError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc}") from exc
    diags = validate(program)
    if diags:
        raise CliError(EXIT_PARSE, "\n".join(f"{path}: {d}" for d in diags))
    return run_passes(program, config).program if optimize else program


def _load_spec(path, program):
    try:
        return load_spec(path, program.entry_function)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc}") from exc


def _limits(args) -> Limits:
    base = {}
    if getattr(args, "limits", None):
        try:
            base = json.loads(Path(args.limits).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise CliError(EXIT_CONFIG, f"limits file: {exc}") from exc
    for key in ("max_paths", "max_depth", "max_loop_iterations", "split_cap"):
        v = getattr(args, key, None)
        if v is not None:
            base[key] = v
    try:
        return Limits(**base)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"limits: {exc}") from exc


def _add_limit_flags(p):
    p.add_argument("--limits", help="JSON file with Limits fields")
    p.add_argument("--max-paths", type=int, dest="max_paths")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--max-loop-iterations", type=int, dest="max_loop_iterations")
    p.add_argument("--split-cap", type=int, dest="split_cap")


def _passes(text):
    if text is None:
        return PASS_NAMES
    names = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [p for p in names if p not in PASS_NAMES]
    if bad:
        raise CliError(EXIT_CONFIG, f"unknown passes {bad}; choose from {', '.join(PASS_NAMES)}")
    return names


def _write_csv(out, text: str) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


# -- subcommands ----------------------------------------------------------------


def cmd_analyze(args) -> int:
    program = _load_program(args.file, optimize=not args.raw)
    spec = _load_spec(args.spec, program)
    fv = extract_features(program.entry_function, spec).as_dict()
    w = csv.writer(sys.stdout, lineterminator="\n")
    if not args.no_header:
        w.writerow(list(fv))
    w.writerow(list(fv.values()))
    return EXIT_OK


def cmd_optimize(args) -> int:
    program = _load_program(args.file, optimize=False)
    cfg = OptConfig(_passes(args.passes), args.max_body_copies, args.max_depth)
    res = run_passes(program, cfg)
    sys.stdout.write(format_program(res.program))
    for name, before, after in res.trace:
        print(f"{name}: {before} -> {after}", file=sys.stderr)
    for note in res.notes:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def parse_query(text: str):
    """Domain lines ``x in lo..hi``; every other non-blank, non-comment
    line is one relation such as ``x * y == 12``."""
    domains, atoms = {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split("//", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) == 3 and parts[1] == "in" and ".." in parts[2]:
            lo, hi = parts[2].split("..", 1)
            try:
                domains[parts[0]] = (int(lo), int(hi))
            except ValueError:
                raise CliError(EXIT_PARSE, f"line {lineno}: bad domain {parts[2]!r}") from None
            continue
        try:
            e = parse_expr(line)
        except ParseError as exc:
            raise CliError(EXIT_PARSE, f"line {lineno}: {exc}") from exc
        if not (isinstance(e, Binary) and e.op in ("<", "<=", ">", ">=", "==", "!=")):
            raise CliError(EXIT_PARSE, f"line {lineno}: expected a relation, got {line!r}")
        atoms.append(Atom.make(e.left, e.op, e.right))
    return domains, atoms


def cmd_solve(args) -> int:
    try:
        text = Path(args.query).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    domains, atoms = parse_query(text)
    c = Constraint(tuple(atoms))
    missing = sorted(set(c.variables()) - set(domains))
    if missing:
        raise CliError(EXIT_PARSE, f"no domain for variables: {', '.join(missing)}")
    try:
        res = decide(c, domains, split_cap=args.split_cap)
    except BudgetExceeded as exc:
        print(f"unknown: {exc}")
        return EXIT_LIMIT
    print(res.status)
    if res.sat:
        for name in sorted(res.witness):
            print(f"{name} = {res.witness[name]}")
    print(f"# propagation_steps={res.propagation_steps} splits={res.splits}", file=sys.stderr)
    return EXIT_OK


def _existing_rows(path):
    if not path or not Path(path).exists():
        return None, []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    return (rows[0], rows[1:]) if rows else (None, [])


def cmd_run(args) -> int:
    program = _load_program(args.file, optimize=not args.raw)
    spec = _load_spec(args.spec, program)
    limits = _limits(args)
    header, rows = _existing_rows(args.out)
    cols = observation_columns([], args.deterministic)
    if header is not None and header != cols:
        raise CliError(EXIT_CONFIG, f"{args.out}: existing header does not match the observation schema")
    run_index = len(rows)
    row = run_experiment(doe.Experiment(run_index, program, spec, limits))
    values = [row[c] for c in cols]
    if args.out:
        prefix = Path(args.out).read_text(encoding="utf-8") if header is not None else csv_text(cols, [])
        atomic_write(args.out, prefix + csv_text(cols, [values]).split("\n", 1)[1])
    print(",".join(cols))
    print(",".join(str(v) for v in values))
    return EXIT_OK if row["status"] == "ok" else EXIT_LIMIT


def cmd_design(args) -> int:
    factors = _factors(args.factors)
    try:
        d = doe.make_design(factors, args.kind)
    except (doe.TooManyFactors, doe.InvalidFraction, ValueError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    if args.replicates > 1:
        d = d.replicate(args.replicates)
    _write_csv(args.out, d.to_csv())
    return EXIT_OK


def _factors(path):
    try:
        return doe.load_factors(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"factors file {path}: {exc}") from exc


def _read_design(path, factors) -> doe.DesignMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = [f.name for f in factors]
    if not rows or rows[0][1:] != names:
        raise CliError(EXIT_CONFIG, f"{path}: header must be run_index,{','.join(names)}")
    coded = np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int8)
    if coded.size and not np.all(np.abs(coded) == 1):
        raise CliError(EXIT_CONFIG, f"{path}: coded levels must be -1 or +1")
    return doe.DesignMatrix(tuple(factors), coded.reshape(len(rows) - 1, len(names)), "user")


def cmd_run_design(args) -> int:
    program = _load_program(args.file, optimize=not args.raw)
    spec = _load_spec(args.spec, program)
    factors = _factors(args.factors)
    if args.design:
        design = _read_design(args.design, factors)
    else:
        try:
            design = doe.make_design(factors, args.kind)
        except ValueError as exc:
            raise CliError(EXIT_CONFIG, str(exc)) from exc
    variants = tuple(_load_program(v, optimize=not args.raw) for v in args.variant or ())
    template = doe.Template(program, spec, _limits(args), variants)
    try:
        experiments = doe.instantiate(design, template)
    except doe.UnresolvableFactor as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    rows = run_experiments(experiments, args.jobs)
    _write_csv(args.out, observations_csv(rows, [f.name for f in factors], args.deterministic))
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_LIMIT


def _dataset(path, response, features):
    try:
        return read_csv(path, response, features.split(",") if features else None)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"{path}: {exc}") from exc


def cmd_fit(args) -> int:
    data = _dataset(args.data, args.response, args.features)
    seed = _resolve_seed(args.seed)
    if args.test_fraction:
        data, _ = split(data, args.test_fraction, derive_seed(seed, "split"))
    if args.kind == "linear":
        model = fit_linear(data, args.log_response, seed)
    else:
        cfg = GPConfig(population=args.population, generations=args.generations, seed=seed)
        model = symbolic_regression(data, cfg)
    save_model(model, args.out)
    print(model.formula(args.response))
    return EXIT_OK


def cmd_assess(args) -> int:
    model = _model(args.model)
    data = _dataset(args.data, model.response, ",".join(model.feature_names))
    if args.exclude_train:
        keep = [i for i, r in enumerate(data.row_ids) if r not in set(model.train_rows)]
        data = data.take(keep)
    rep = assess(model, data, args.alpha)
    text = json.dumps(rep.to_json(), indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write(args.out, text)
    print(f"MAPE {rep.mape:.6g}  RMSE {rep.rmse:.6g}  R2 {rep.r_squared:.6g}"
          + (f"  coverage {rep.coverage:.6g}" if rep.coverage is not None else ""))
    return EXIT_OK


def _model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_CONFIG, f"{path}: {exc}") from exc


def cmd_predict(args) -> int:
    model = _model(args.model)
    raw = next(csv.reader([args.features]))
    try:
        x = [float(v) for v in raw]
    except ValueError:
        raise CliError(EXIT_CONFIG, f"features must be numbers, got {args.features!r}") from None
    y = model.predict(x)
    print(f"{y:.17g}")
    if model.kind == "linear" and model.dof >= 1 and model.xtx_inv is not None:
        lo, hi = prediction_interval(model, x, args.alpha)
        print(f"interval {lo:.17g} {hi:.17g}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    overrides = {
        "program": args.program, "spec": args.spec, "factors": args.factors, "design": args.design,
        "fit": args.fit, "response": args.response, "test_fraction": args.test_fraction,
        "alpha": args.alpha, "out": args.out, "jobs": args.jobs, "ranking": args.ranking,
        "seed": args.seed, "replicates": args.replicates,
        "deterministic": True if args.deterministic else None,
        "log_response": True if args.log_response else None,
    }
    lim = {k: getattr(args, k) for k in ("max_paths", "max_depth", "max_loop_iterations", "split_cap")
           if getattr(args, k) is not None}
    if lim:
        overrides["limits"] = lim
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
        if args.seed is None and "seed" not in raw:
            overrides["seed"] = env_seed()
        cfg = config_from_dict(raw, Path(args.config).parent if args.config else None, overrides)
    except (OSError, ValueError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"config: {exc}") from exc
    result = run_pipeline(cfg)
    if result.error is not None:
        print(f"error: {result.error}", file=sys.stderr)
        return result.exit_code
    print((result.out_dir / "report.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="verimodel", description=__doc__.split("\n")[0],
                                epilog=__doc__.split("\n\n", 1)[1],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("analyze", help="print the static feature vector of a program as CSV")
    s.add_argument("file")
    s.add_argument("--spec", required=True)
    s.add_argument("--raw", action="store_true", help="skip optimization before analysis")
    s.add_argument("--no-header", action="store_true")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("optimize", help="print optimized source; pass trace goes to stderr")
    s.add_argument("file")
    s.add_argument("--passes", help=f"comma-separated subset of {','.join(PASS_NAMES)}")
    s.add_argument("--max-body-copies", type=int, default=16)
    s.add_argument("--max-depth", type=int, default=4, help="maximum inlining depth")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("solve", help="decide a query file (lines 'x in lo..hi' and relations)")
    s.add_argument("query")
    s.add_argument("--split-cap", type=int, default=10**6)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("run", help="symbolically execute a program and append one observation row")
    s.add_argument("file")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", help="observation CSV to append to")
    s.add_argument("--raw", action="store_true", help="skip optimization")
    s.add_argument("--deterministic", action="store_true", help="omit the wall_time_ns column")
    _add_limit_flags(s)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("design", help="emit a two-level design matrix as CSV")
    s.add_argument("--factors", required=True)
    s.add_argument("--kind", default="full", help="full, pb or frac:<p>")
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--out", help="output CSV (default stdout)")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("run-design", help="run every row of a design and write observations")
    s.add_argument("file")
    s.add_argument("--spec", required=True)
    s.add_argument("--factors", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--design", help="design CSV from 'verimodel design'")
    g.add_argument("--kind", default="full", help="build the design instead: full, pb or frac:<p>")
    s.add_argument("--variant", action="append", help="program variant for static-feature factors")
    s.add_argument("--out", help="observation CSV (default stdout)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--raw", action="store_true", help="skip optimization")
    s.add_argument("--deterministic", action="store_true", help="omit the wall_time_ns column")
    _add_limit_flags(s)
    s.set_defaults(func=cmd_run_design)

    s = sub.add_parser("fit", help="fit a linear or symbolic-regression model to a CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--response", default="deterministic_cost")
    s.add_argument("--features", help="comma-separated feature columns (default: all numeric)")
    s.add_argument("--kind", choices=("linear", "gp"), default="linear")
    s.add_argument("--log-response", action="store_true")
    s.add_argument("--test-fraction", type=float, default=0.0,
                   help="hold out this fraction (seeded) and fit on the rest")
    s.add_argument("--seed", type=int, help=f"defaults to ${SEED_ENV}, then 0")
    s.add_argument("--population", type=int, default=500)
    s.add_argument("--generations", type=int, default=100)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("assess", help="score a model on held-out rows")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--exclude-train", action="store_true",
                   help="drop rows the model was trained on instead of rejecting them")
    s.add_argument("--out", help="write the JSON report here")
    s.set_defaults(func=cmd_assess)

    s = sub.add_parser("predict", help="evaluate a model at one feature point")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True, help="one CSV row of feature values in model order")
    s.add_argument("--alpha", type=float, default=0.05)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("pipeline", help="run the full pipeline from a config file")
    s.add_argument("--config")
    s.add_argument("--program")
    s.add_argument("--spec")
    s.add_argument("--factors")
    s.add_argument("--design")
    s.add_argument("--replicates", type=int)
    s.add_argument("--fit", choices=("linear", "gp"))
    s.add_argument("--log-response", action="store_true")
    s.add_argument("--response", choices=RESPONSES)
    s.add_argument("--test-fraction", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--seed", type=int, help=f"overrides the config; ${SEED_ENV} is the fallback")
    s.add_argument("--out")
    s.add_argument("--ranking", help="corpus-level ranking CSV to update")
    s.add_argument("--jobs", type=int)
    s.add_argument("--deterministic", action="store_true", help="omit wall_time_ns from observations")
    s.add_argument("--max-paths", type=int, dest="max_paths")
    s.add_argument("--max-depth", type=int, dest="max_depth")
    s.add_argument("--max-loop-iterations", type=int, dest="max_loop_iterations")
    s.add_argument("--split-cap", type=int, dest="split_cap")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except _FIT_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FIT
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT


if __name__ == "__main__":
    sys.exit(main())
