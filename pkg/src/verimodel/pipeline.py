"""End-to-end pipeline: optimize, extract features, design, run, screen,
fit and assess, writing every artifact atomically."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import doe
from .features import extract_features
from .frontend import ParseError, parse_program, validate
from .modeling import (
    Dataset,
    GPConfig,
    assess,
    dumps_model,
    fit_linear,
    split,
    symbolic_regression,
)
from .modeling.linear import INTERCEPT, check_rank
from .optimizer import OptConfig, run_passes
from .symbols import SymbolSpec, load_spec
from .symexec import Limits, execute

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_LIMIT = 4
EXIT_FIT = 5

RESPONSES = ("wall_time_ns", "deterministic_cost", "paths_completed", "queries", "propagation_steps_total")
STAGES = ("optimize", "features", "design", "instantiate", "run", "screen", "fit", "assess")


class StageError(Exception):
    """A pipeline failure tagged with the stage it happened in."""

    def __init__(self, stage: str, exit_code: int, message: str):
        self.stage = stage
        self.exit_code = exit_code
        super().__init__(f"[{stage}] {message}")


def derive_seed(seed: int, stage: str) -> int:
    """Per-stage seed: first 8 bytes of sha256("<seed>:<stage>"), as a
    non-negative 63-bit integer."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def atomic_write(path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- configuration --------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    program: str
    spec: str
    factors: str
    design: str = "full"
    replicates: int = 1
    limits: Limits = Limits()
    optimizer: OptConfig = OptConfig()
    fit: str = "linear"
    log_response: bool = False
    gp: GPConfig = GPConfig()
    response: str = "deterministic_cost"
    screen_threshold: Optional[float] = 0.0
    screen_top_k: Optional[int] = None
    test_fraction: float = 0.25
    alpha: float = 0.05
    seed: int = 0
    out: str = "verimodel-out"
    jobs: int = 1
    deterministic: bool = False
    nominal: dict = field(default_factory=dict)
    ranking: Optional[str] = None

    def check(self) -> None:
        if self.fit not in ("linear", "gp"):
            raise ValueError(f"fit must be 'linear' or 'gp', got {self.fit!r}")
        if self.response not in RESPONSES:
            raise ValueError(f"unknown response {self.response!r}")
        if self.deterministic and self.response == "wall_time_ns":
            raise ValueError("--deterministic drops wall_time_ns, which is the chosen response")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.jobs < 1 or self.replicates < 1:
            raise ValueError("jobs and replicates must be >= 1")
        if (self.screen_threshold is None) == (self.screen_top_k is None):
            raise ValueError("give exactly one of screen_threshold or screen_top_k")
        for name in ("program", "spec", "factors"):
            if not Path(getattr(self, name)).is_file():
                raise FileNotFoundError(f"{name} file not found: {getattr(self, name)}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["optimizer"]["passes"] = list(self.optimizer.passes)
        d["gp"]["init_depth"] = list(self.gp.init_depth)
        return d


_NESTED = {"limits": Limits, "optimizer": OptConfig, "gp": GPConfig}


def config_from_dict(data: dict, base_dir=None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Build a config from parsed JSON plus flag overrides.

    Relative paths in the file resolve against ``base_dir`` (the config
    file's directory); override paths are taken as given.
    """
    data = dict(data)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "screen" in data:
        raise ValueError("use screen_threshold or screen_top_k")
    for key in ("program", "spec", "factors", "out", "ranking"):
        if data.get(key) is not None and base_dir is not None and not os.path.isabs(data[key]):
            data[key] = str(Path(base_dir) / data[key])
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key, cls in _NESTED.items():
        sub = dict(data.get(key) or {})
        sub.update(overrides.pop(key, {}) or {})
        if key == "optimizer" and "passes" in sub:
            sub["passes"] = tuple(sub["passes"])
        if key == "gp" and "init_depth" in sub:
            sub["init_depth"] = tuple(sub["init_depth"])
        data[key] = cls(**sub)
    if "screen_top_k" in overrides:
        data["screen_threshold"] = None
    elif "screen_threshold" in overrides:
        data["screen_top_k"] = None
    elif data.get("screen_top_k") is not None and "screen_threshold" not in data:
        data["screen_threshold"] = None
    data.update(overrides)
    missing = [k for k in ("program", "spec", "factors") if not data.get(k)]
    if missing:
        raise ValueError(f"config lacks required keys: {missing}")
    return PipelineConfig(**data)


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    return config_from_dict(data, path.parent, overrides)


# -- running experiments --------------------------------------------------------


def observation_columns(factor_names, deterministic: bool) -> list:
    responses = [r for r in RESPONSES if not (deterministic and r == "wall_time_ns")]
    return ["run_index"] + list(factor_names) + responses + ["status"]


def run_experiment(exp: doe.Experiment) -> dict:
    """Execute one experiment; failures become a status, never an exception."""
    row = {"run_index": exp.run_index, **exp.settings}
    try:
        rep = execute(exp.program, exp.spec, exp.limits)
    except Exception as exc:  # noqa: BLE001 - recorded as the row status
        row.update({r: "" for r in RESPONSES})
        row["status"] = f"error:{type(exc).__name__}"
        return row
    row.update(
        wall_time_ns=rep.wall_time_ns,
        deterministic_cost=rep.deterministic_cost,
        paths_completed=rep.stats.paths_completed,
        queries=rep.stats.queries,
        propagation_steps_total=rep.stats.propagation_steps_total,
        status="truncated" if rep.truncated else "ok",
    )
    return row


def run_experiments(experiments, jobs: int = 1) -> list:
    """Run experiments, in parallel when ``jobs > 1``; rows come back sorted
    by run_index regardless of completion order."""
    if jobs > 1 and len(experiments) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_experiment, experiments))
    else:
        rows = [run_experiment(e) for e in experiments]
    return sorted(rows, key=lambda r: r["run_index"])


def observations_csv(rows, factor_names, deterministic: bool) -> str:
    cols = observation_columns(factor_names, deterministic)
    return csv_text(cols, [[r[c] for c in cols] for r in rows])


def observations_dataset(rows, features, response: str) -> Dataset:
    ok = [r for r in rows if r["status"] == "ok"]
    X = np.array([[float(r[f]) for f in features] for r in ok], dtype=float).reshape(len(ok), len(features))
    y = np.array([float(r[response]) for r in ok])
    return Dataset(tuple(features), X, y, response, tuple(r["run_index"] for r in ok))


# -- reporting ------------------------------------------------------------------

RANKING_COLUMNS = ["function", "program", "response", "predicted", "mape", "rmse", "r_squared_test", "seed"]


def report(assessment, model, response: str = "cost", nominal: Optional[dict] = None,
           function: str = "", program: str = "") -> tuple:
    """Human-readable summary plus one ranking row.

    The ranking row's ``predicted`` value is the model evaluated at the
    function's nominal feature point (missing features default to 0).
    """
    nominal = nominal or {}
    lines = [f"function: {function}" if function else None,
             f"model: {model.formula(response)}"]
    if model.kind == "linear":
        lines.append(f"intercept: {model.intercept:.6g}")
        for n, c in zip(model.feature_names, model.coefficients):
            lines.append(f"coefficient {n}: {c:.6g}")
        lines.append(f"residual_std: {model.residual_std:.6g}  r_squared_train: {model.r_squared:.6g}")
    else:
        lines.append(f"expression: {model.expression}")
        lines.append(f"nodes: {model.node_count}  train_mse: {model.mse:.6g}  generations: {model.generations}")
    lines.append(f"test rows: {len(assessment.test_rows)}  train rows: {len(assessment.train_rows)}")
    lines.append(f"MAPE: {assessment.mape:.6g}  RMSE: {assessment.rmse:.6g}  R2_test: {assessment.r_squared:.6g}")
    if assessment.coverage is not None:
        lines.append(f"interval coverage (alpha={assessment.alpha}): {assessment.coverage:.6g}")
    lines.append(f"seed: {assessment.seed}")
    point = [float(nominal.get(n, 0.0)) for n in model.feature_names]
    predicted = float(model.predict(point))
    lines.append(f"predicted {response} at nominal point: {predicted:.6g}")
    row = {
        "function": function, "program": program, "response": response, "predicted": predicted,
        "mape": assessment.mape, "rmse": assessment.rmse, "r_squared_test": assessment.r_squared,
        "seed": assessment.seed,
    }
    return "\n".join(l for l in lines if l is not None) + "\n", row


def init_ranking(path) -> None:
    """Create a header-only ranking file if none exists."""
    if not Path(path).exists():
        atomic_write(path, csv_text(RANKING_COLUMNS, []))


def update_ranking(path, row: dict) -> list:
    """Insert or replace ``row`` (keyed by function and program) and keep
    the file sorted by predicted value, largest first."""
    init_ranking(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh)
                if (r["function"], r["program"]) != (row["function"], row["program"])]
    rows.append({k: row[k] for k in RANKING_COLUMNS})
    rows.sort(key=lambda r: (-float(r["predicted"]), r["function"], r["program"]))
    atomic_write(path, csv_text(RANKING_COLUMNS, [[r[c] for c in RANKING_COLUMNS] for r in rows]))
    return rows


# -- the pipeline ---------------------------------------------------------------


@dataclass
class PipelineResult:
    exit_code: int
    out_dir: Optional[Path] = None
    artifacts: dict = field(default_factory=dict)
    error: Optional[StageError] = None
    model: object = None
    assessment: object = None
    selected: list = field(default_factory=list)


def _stage(name: str, code: int, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - rewrapped with stage tag
        raise StageError(name, code, f"{type(exc).__name__}: {exc}") from exc


def _parse(cfg: PipelineConfig):
    try:
        program = parse_program(Path(cfg.program).read_text(encoding="utf-8"))
    except ParseError as exc:
        raise StageError("optimize", EXIT_PARSE, f"{cfg.program}: {exc}") from exc
    diags = validate(program)
    if diags:
        raise StageError("optimize", EXIT_PARSE, "; ".join(str(d) for d in diags))
    return program


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Run every stage; on failure return the stage-tagged error and keep
    whatever artifacts earlier stages already wrote."""
    result = PipelineResult(EXIT_OK)
    try:
        _run(cfg, result)
    except StageError as exc:
        result.exit_code = exc.exit_code
        result.error = exc
    return result


def _run(cfg: PipelineConfig, result: PipelineResult) -> None:
    _stage("config", EXIT_CONFIG, cfg.check)
    factors = _stage("config", EXIT_CONFIG, doe.load_factors, cfg.factors)
    source = _parse(cfg)
    spec = None
    try:
        spec = load_spec(cfg.spec, source.entry_function)
    except (ValueError, KeyError) as exc:
        raise StageError("config", EXIT_PARSE, f"{cfg.spec}: {exc}") from exc
    except OSError as exc:
        raise StageError("config", EXIT_CONFIG, f"{cfg.spec}: {exc}") from exc

    out = Path(cfg.out)
    result.out_dir = out
    written = result.artifacts

    def emit(name: str, text: str) -> None:
        path = out / name
        atomic_write(path, text)
        written[name] = path

    # optimize
    opt = _stage("optimize", EXIT_CONFIG, run_passes, source, cfg.optimizer)
    program = opt.program
    fn = program.entry_function

    # features of the template
    base = _stage("features", EXIT_PARSE, extract_features, fn, spec)

    # design
    design = _stage("design", EXIT_CONFIG, doe.make_design, factors, cfg.design)
    if cfg.replicates > 1:
        design = design.replicate(cfg.replicates)
    emit("design.csv", design.to_csv())

    # instantiate
    template = doe.Template(program, spec, cfg.limits)
    experiments = _stage("instantiate", EXIT_CONFIG, doe.instantiate, design, template)
    feats = [extract_features(e.program.entry_function, e.spec).as_dict() for e in experiments]
    cols = list(base.as_dict())
    for fv in feats:
        cols += [c for c in fv if c not in cols]
    emit("features.csv", csv_text(["run_index"] + cols,
                                  [[e.run_index] + [fv.get(c, "") for c in cols] for e, fv in zip(experiments, feats)]))

    # run
    names = [f.name for f in factors]
    rows = run_experiments(experiments, cfg.jobs)
    emit("observations.csv", observations_csv(rows, names, cfg.deterministic))
    bad = [r for r in rows if r["status"] != "ok"]
    if bad:
        statuses = sorted({r["status"] for r in bad})
        raise StageError("run", EXIT_LIMIT, f"{len(bad)} of {len(rows)} runs did not complete: {', '.join(statuses)}")

    # screen
    responses = [float(r[cfg.response]) for r in rows]
    effects = _stage("screen", EXIT_FIT, doe.main_effects, design, responses)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        selected = doe.screen(effects, threshold=cfg.screen_threshold, top_k=cfg.screen_top_k)
    result.selected = selected
    emit("effects.csv", csv_text(["factor", "effect", "selected"],
                                 [[n, effects[n], int(n in selected)] for n in names]))

    # fit
    data = observations_dataset(rows, selected, cfg.response)
    _stage("fit", EXIT_FIT, check_rank, np.column_stack([np.ones(len(data)), data.X]),
           (INTERCEPT,) + data.feature_names)
    train, test = _stage("fit", EXIT_FIT, split, data, cfg.test_fraction, derive_seed(cfg.seed, "split"))
    if cfg.fit == "linear":
        model = _stage("fit", EXIT_FIT, fit_linear, train, cfg.log_response, cfg.seed)
    else:
        gp_cfg = replace(cfg.gp, seed=derive_seed(cfg.seed, "fit") % (2**32))
        model = _stage("fit", EXIT_FIT, symbolic_regression, train, gp_cfg)
        model.seed = cfg.seed
    result.model = model
    emit("model.json", dumps_model(model))

    # assess
    assessment = _stage("assess", EXIT_FIT, assess, model, test, cfg.alpha, cfg.seed)
    result.assessment = assessment
    emit("assessment.json", json.dumps(assessment.to_json(), indent=2, sort_keys=True) + "\n")
    nominal = cfg.nominal or {f.name: (f.low + f.high) / 2 for f in factors}
    text, row = report(assessment, model, cfg.response, nominal, fn.name, Path(cfg.program).name)
    emit("report.txt", text)
    ranking = Path(cfg.ranking) if cfg.ranking else out / "ranking.csv"
    update_ranking(ranking, row)
    written[ranking.name] = ranking
    manifest = {
        "seed": cfg.seed,
        "stage_seeds": {s: derive_seed(cfg.seed, s) for s in ("split", "fit")},
        "config": {k: v for k, v in cfg.to_json().items() if k not in ("out", "ranking", "jobs")},
        "optimizer_trace": [list(t) for t in opt.trace],
        "optimizer_notes": [str(n) for n in opt.notes],
        "selected_factors": selected,
        "artifacts": sorted(written),
    }
    emit("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
