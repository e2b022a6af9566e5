import csv
import json
import shutil

import numpy as np
import pytest

from verimodel import CORPUS_DIR
from verimodel.doe import Factor
from verimodel.modeling import AssessmentReport, LinearModel
from verimodel.pipeline import (
    EXIT_CONFIG,
    EXIT_FIT,
    EXIT_LIMIT,
    EXIT_OK,
    EXIT_PARSE,
    RANKING_COLUMNS,
    PipelineConfig,
    atomic_write,
    derive_seed,
    init_ranking,
    load_config,
    report,
    run_pipeline,
    update_ranking,
)
from verimodel.symexec import Limits


@pytest.fixture
def corpus(tmp_path):
    for name in ("loopsum.mc", "loopsum.spec.json", "loopsum.factors.json", "loopsum.pipeline.json"):
        shutil.copy(CORPUS_DIR / name, tmp_path / name)
    return tmp_path


def config(corpus, **kw):
    base = dict(program=str(corpus / "loopsum.mc"), spec=str(corpus / "loopsum.spec.json"),
                factors=str(corpus / "loopsum.factors.json"), seed=7, out=str(corpus / "out"),
                deterministic=True)
    base.update(kw)
    return PipelineConfig(**base)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_loopsum_end_to_end(corpus):
    res = run_pipeline(config(corpus))
    assert res.exit_code == EXIT_OK, res.error
    out = corpus / "out"
    obs = read_rows(out / "observations.csv")
    assert len(obs) == 8
    assert [int(r["run_index"]) for r in obs] == list(range(8))
    assert all(r["status"] == "ok" for r in obs)
    assert "wall_time_ns" not in obs[0]
    for name in ("design.csv", "features.csv", "effects.csv", "model.json", "assessment.json",
                 "report.txt", "ranking.csv", "manifest.json"):
        assert (out / name).is_file(), name
    assert res.selected == ["c_value", "n_width", "a_size"]
    assert res.assessment.mape < 0.05
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["stage_seeds"]["split"] == derive_seed(7, "split")


def test_observations_match_design(corpus):
    run_pipeline(config(corpus))
    design = read_rows(corpus / "out" / "design.csv")
    obs = read_rows(corpus / "out" / "observations.csv")
    levels = {"c_value": (2, 8), "n_width": (2, 6), "a_size": (4, 16)}
    for d, o in zip(design, obs):
        for f, (lo, hi) in levels.items():
            assert int(o[f]) == (hi if d[f] == "1" else lo)


def test_reproducible_bytes(corpus):
    a = run_pipeline(config(corpus, out=str(corpus / "a")))
    b = run_pipeline(config(corpus, out=str(corpus / "b"), jobs=3))
    assert a.exit_code == b.exit_code == EXIT_OK
    for name in a.artifacts:
        assert (corpus / "a" / name).read_bytes() == (corpus / "b" / name).read_bytes(), name


def test_config_file_resolves_relative_paths(corpus):
    cfg = load_config(corpus / "loopsum.pipeline.json", {"deterministic": True})
    assert cfg.program == str(corpus / "loopsum.mc") and cfg.out == str(corpus / "loopsum-out")
    assert run_pipeline(cfg).exit_code == EXIT_OK


def test_missing_spec_is_config_error_without_artifacts(corpus):
    res = run_pipeline(config(corpus, spec=str(corpus / "nope.json")))
    assert res.exit_code == EXIT_CONFIG and res.error.stage == "config"
    assert not (corpus / "out").exists()


def test_parse_error(corpus):
    (corpus / "bad.mc").write_text("fn f(x) { return x + ; }")
    res = run_pipeline(config(corpus, program=str(corpus / "bad.mc")))
    assert res.exit_code == EXIT_PARSE


def test_path_limit_keeps_observations(corpus):
    res = run_pipeline(config(corpus, limits=Limits(max_paths=5)))
    assert res.exit_code == EXIT_LIMIT and res.error.stage == "run"
    obs = read_rows(corpus / "out" / "observations.csv")
    assert len(obs) == 8 and {r["status"] for r in obs} == {"truncated"}
    assert not (corpus / "out" / "model.json").exists()


def test_aliased_factor_is_fit_error_naming_columns(corpus):
    factors = json.loads((corpus / "loopsum.factors.json").read_text())["factors"]
    factors.append({"name": "k_width", "source": "domain-width", "target": "k", "low": 8, "high": 64})
    (corpus / "alias.json").write_text(json.dumps(factors))
    # quarter fraction of 4 factors: the last generated column repeats the first
    res = run_pipeline(config(corpus, factors=str(corpus / "alias.json"), design="frac:2"))
    assert res.exit_code == EXIT_FIT and res.error.stage == "fit"
    assert "k_width" in str(res.error) and "c_value" in str(res.error)


def test_duplicate_factor_rejected(corpus):
    factors = json.loads((corpus / "loopsum.factors.json").read_text())["factors"]
    factors.append(dict(factors[0], name="again"))
    (corpus / "dup.json").write_text(json.dumps(factors))
    assert run_pipeline(config(corpus, factors=str(corpus / "dup.json"))).exit_code == EXIT_CONFIG


def test_gp_fit(corpus):
    from verimodel.modeling import GPConfig
    res = run_pipeline(config(corpus, fit="gp", gp=GPConfig(population=100, generations=10)))
    assert res.exit_code == EXIT_OK
    assert json.loads((corpus / "out" / "model.json").read_text())["kind"] == "expression"


def test_derive_seed_is_stable_and_stage_specific():
    assert derive_seed(7, "split") == derive_seed(7, "split")
    assert derive_seed(7, "split") != derive_seed(7, "fit") != derive_seed(8, "fit")
    assert 0 <= derive_seed(7, "fit") < 2 ** 63


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write(tmp_path / "x" / "f.txt", "a\n")
    atomic_write(tmp_path / "x" / "f.txt", "b\n")
    assert [p.name for p in (tmp_path / "x").iterdir()] == ["f.txt"]
    assert (tmp_path / "x" / "f.txt").read_bytes() == b"b\n"


# -- report and ranking ---------------------------------------------------------


def _assessment(seed=0):
    return AssessmentReport((0, 1), (2,), seed, 0.01, 0.5, 0.9, 0.05, 1.0, (0.5,), (10.0,))


def test_report_formula_text():
    model = LinearModel(1.0, (2.0,), ("x",), 10, 0.1, 0.99, np.eye(2))
    text, row = report(_assessment(), model, "cost", {"x": 3})
    assert "cost ≈ 1 + 2·x" in text
    assert row["predicted"] == 7.0 and list(row) == RANKING_COLUMNS


def test_empty_ranking_is_header_only(tmp_path):
    init_ranking(tmp_path / "rank.csv")
    assert (tmp_path / "rank.csv").read_text() == ",".join(RANKING_COLUMNS) + "\n"


def test_ranking_sorted_descending(tmp_path):
    path = tmp_path / "rank.csv"
    cheap = LinearModel(1.0, (1.0,), ("x",), 10, 0.1, 0.99, np.eye(2))
    costly = LinearModel(100.0, (5.0,), ("x",), 10, 0.1, 0.99, np.eye(2))
    _, r1 = report(_assessment(), cheap, "cost", {"x": 2}, "cheap", "p.mc")
    _, r2 = report(_assessment(), costly, "cost", {"x": 2}, "costly", "p.mc")
    update_ranking(path, r1)
    update_ranking(path, r2)
    rows = read_rows(path)
    assert [r["function"] for r in rows] == ["costly", "cheap"]
    assert float(rows[0]["predicted"]) == 110.0
    update_ranking(path, r1)
    assert len(read_rows(path)) == 2


def test_ranking_across_two_pipeline_runs(corpus):
    ranking = str(corpus / "rank.csv")
    assert run_pipeline(config(corpus, ranking=ranking, out=str(corpus / "a"))).exit_code == EXIT_OK
    (corpus / "other.mc").write_text((corpus / "loopsum.mc").read_text().replace("fn loopsum", "fn other")
                                     .replace("s = s + j;", "s = s + j; s = s * 2; s = s - 1;"))
    res = run_pipeline(config(corpus, ranking=ranking, out=str(corpus / "b"), program=str(corpus / "other.mc")))
    assert res.exit_code == EXIT_OK
    rows = read_rows(ranking)
    assert {r["function"] for r in rows} == {"loopsum", "other"}
    preds = [float(r["predicted"]) for r in rows]
    assert preds == sorted(preds, reverse=True)
