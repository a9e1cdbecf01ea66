import json

import pandas as pd
import pytest

import cli
from cli import ExperimentConfig, Report, SuiteOutcome, build_config, emit, explain, main, run
from errors import ConfigError, InputError, LevyError, SuiteError


def _run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path), "--stamp", "fixed"])


def _report(tmp_path, suite):
    return Report.from_dict(json.loads((tmp_path / f"{suite}.json").read_text(encoding="utf-8")))


# ── configuration ──────────────────────────────────

def test_suite_defaults_and_overrides():
    config = build_config("prop1", overrides={"instances": 3})
    assert config.n_max == 256
    assert config.J == 256
    assert config.chaos == "random"
    assert config.instances == 3
    assert build_config("seq-lemma", {"s_values": [1, 2]}).s_values == (1, 2)


def test_unknown_fields_are_rejected():
    with pytest.raises(ConfigError) as info:
        build_config("density", {"bogus": 1})
    assert info.value.field == "bogus"
    with pytest.raises(ConfigError):
        build_config("no-such-suite")


@pytest.mark.parametrize("overrides, field", [
    ({"n_max": 0}, "n_max"),
    ({"eps": 0.0}, "eps"),
    ({"basis": "legendre"}, "basis"),
    ({"connection": "monopole"}, "connection"),
    ({"path_file": "missing.json"}, "path_file"),
    ({"tol": -1.0}, "tol"),
])
def test_validation_points_at_the_field(overrides, field):
    with pytest.raises(ConfigError) as info:
        build_config("verify-gf", overrides=overrides).validate()
    assert info.value.field == field


def test_suite_specific_validation():
    with pytest.raises(ConfigError):
        build_config("verify-thm1", overrides={"steps": 1000}).validate()
    with pytest.raises(ConfigError):
        build_config("verify-thm1", overrides={"steps": 64, "dirs": 4}).validate()
    with pytest.raises(ConfigError):
        build_config("verify-main", overrides={"n_max": 20}).validate()
    with pytest.raises(ConfigError):
        build_config("prop2", overrides={"n_max": 4}).validate()


def test_environment_defaults(monkeypatch, tmp_path):
    monkeypatch.setenv("LEVY_OUTPUT_DIR", str(tmp_path))
    monkeypatch.setenv("LEVY_STAMP", "fixed")
    config = ExperimentConfig(suite="catalog")
    assert config.output_dir == str(tmp_path)
    assert config.stamp == "fixed"


def test_explain_lists_ranges():
    text = explain("density")
    assert "n_max" in text and "16" in text
    assert "integers in [1, 1000000]" in text


# ── reports ────────────────────────────────────────

def test_density_report(tmp_path):
    report = run(build_config("density", overrides={"step_fn": "one", "stamp": "fixed"}))
    assert report.verdict == "pass"
    assert all(v == 0.0 for v in report.scalars["defects"].values())
    assert report.wall_clock == 0.0
    assert len(report.series) == 16
    assert "verdict: pass" in report.to_text()


def test_json_round_trip(tmp_path):
    report = run(build_config("density", overrides={"stamp": "fixed", "n_max": 8}))
    path = emit(report, "json", tmp_path)
    assert Report.from_dict(json.loads(path.read_text(encoding="utf-8"))) == report
    with pytest.raises(InputError):
        Report.from_dict({**report.to_dict(), "schema": "report_v0"})


def test_csv_has_one_row_per_n(tmp_path):
    report = run(build_config("density", overrides={"stamp": "fixed", "n_max": 12}))
    frame = pd.read_csv(emit(report, "csv", tmp_path))
    assert list(frame.columns) == cli.CSV_COLUMNS
    assert len(frame) == 12
    assert frame["N"].tolist() == list(range(1, 13))


def test_fixed_stamp_is_reproducible(tmp_path):
    config = build_config("verify-main", overrides={"stamp": "fixed", "n_max": 8, "J": 8})
    assert run(config).to_json() == run(config).to_json()


def test_unknown_format(tmp_path):
    report = run(build_config("catalog", overrides={"stamp": "fixed"}))
    with pytest.raises(ConfigError):
        emit(report, "xml", tmp_path)


def test_module_errors_become_suite_errors(monkeypatch):
    def broken(config):
        raise LevyError("integrator gave up")

    monkeypatch.setitem(cli.SUITES, "catalog", broken)
    with pytest.raises(SuiteError) as info:
        run(build_config("catalog"))
    assert info.value.suite == "catalog"


# ── command line ───────────────────────────────────

def test_main_verify_main_passes(tmp_path, capsys):
    assert _run(tmp_path, "verify-main", "--chaos", "diagonal") == 0
    assert "verdict: pass" in capsys.readouterr().out
    report = _report(tmp_path, "verify-main")
    assert report.scalars["max_gap"] <= 1e-10 * 16
    assert len(report.series) == 16


def test_main_seq_lemma_and_catalog(tmp_path):
    assert _run(tmp_path, "seq-lemma", "--nmax", "2000", "--s", "1", "2", "--tol", "0.05") == 0
    assert _run(tmp_path, "catalog") == 0
    assert "quadratic-abelian" in _report(tmp_path, "catalog").scalars["connections"]


def test_main_reads_a_toml_file(tmp_path):
    cfg = tmp_path / "density.toml"
    cfg.write_text('n_max = 8\nstep_fn = "one"\nbasis = "cosine"\n', encoding="utf-8")
    assert _run(tmp_path, "density", "--config", str(cfg)) == 0
    inputs = _report(tmp_path, "density").inputs
    assert inputs["n_max"] == 8 and inputs["basis"] == "cosine"


def test_main_text_and_csv_formats(tmp_path):
    assert _run(tmp_path, "density", "--nmax", "10", "--step-fn", "one", "--format", "text") == 0
    assert "verdict: pass" in (tmp_path / "density.txt").read_text(encoding="utf-8")
    assert _run(tmp_path, "density", "--nmax", "10", "--step-fn", "one", "--format", "csv") == 0
    assert len(pd.read_csv(tmp_path / "density.csv")) == 10


@pytest.mark.parametrize("argv", [
    ["density", "--nmax", "0"],
    ["density", "--nmax", "many"],
    ["no-such-suite"],
    ["verify-main", "--nmax", "20"],
])
def test_configuration_errors_exit_64(tmp_path, argv, capsys):
    assert _run(tmp_path, *argv) == 64
    assert "configuration error" in capsys.readouterr().err


def test_unknown_field_in_a_file_exits_64(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"bogus": 1}), encoding="utf-8")
    assert _run(tmp_path, "density", "--config", str(cfg)) == 64


def test_explain_flag(capsys):
    assert main(["verify-gf", "--explain"]) == 0
    assert "n_max" in capsys.readouterr().out


@pytest.mark.parametrize("verdict, code", [("pass", 0), ("fail", 1), ("inconclusive", 2)])
def test_exit_codes_follow_the_verdict(tmp_path, monkeypatch, verdict, code):
    monkeypatch.setitem(cli.SUITES, "catalog", lambda config: SuiteOutcome(verdict, "stub", {}, {}))
    assert _run(tmp_path, "catalog") == code


def test_suite_error_exits_1(tmp_path, monkeypatch, capsys):
    def broken(config):
        raise LevyError("integrator gave up")

    monkeypatch.setitem(cli.SUITES, "catalog", broken)
    assert _run(tmp_path, "catalog") == 1
    assert "suite error" in capsys.readouterr().err


def test_main_verify_gf_on_a_yang_mills_solution(tmp_path):
    assert _run(tmp_path, "verify-gf", "--connection", "constant-abelian", "--path", "small") == 0
    scalars = _report(tmp_path, "verify-gf").scalars
    assert scalars["gap"] <= 1e-3
    assert scalars["rhs"] == [0.0, 0.0]


def test_main_verify_gf_reports_the_convergence_rate(tmp_path):
    code = _run(tmp_path, "verify-gf")
    report = _report(tmp_path, "verify-gf")
    assert report.tolerances["gap"] == pytest.approx(2e-2)
    if report.scalars["gap"] > report.tolerances["gap"]:
        assert code == 2
        assert report.verdict == "inconclusive"
        assert report.scalars["n_needed"] > 200
    assert 0.7 <= report.scalars["order"] <= 1.5


def test_verify_gf_explanation_covers_the_path_amplitude():
    text = explain("verify-gf")
    assert "c²/N" in text
    assert "'small'" in text


def test_prop1_runs_at_full_truncation(tmp_path):
    assert _run(tmp_path, "prop1", "--instances", "3") == 0
    report = _report(tmp_path, "prop1")
    assert report.inputs["J"] == 256
    assert report.scalars["max_slope"] <= 0.5
    assert report.scalars["C"] > 0
