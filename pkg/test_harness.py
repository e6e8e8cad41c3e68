# test_harness.py
import csv
import json

import pytest

from cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from conftest import EXPERIMENTS, MINIMAL, synthetic_experiment
from exceptions import ConfigError, ContractError, RunFailure, SizingError, SpecValidationError
from execution import register_executor, run_synthetic
from harness import (
    emit_report,
    load_bundle,
    load_experiment,
    parse_experiment_config,
    render_runs_table,
    render_summary,
    report_schema,
    resolve_workers,
    run_experiment,
    simulate,
    verify_digest,
)
from oracle import exact_ate, universe_from_seeds
from schemas import Design, MetricSpec, ReportDocument


def test_tutorial_config_parses():
    spec = load_experiment(str(EXPERIMENTS / "tutorial.yaml"))
    assert spec.S == 200
    assert spec.design == Design.paired


@pytest.mark.parametrize("name", ["tutorial", "synthetic", "heterogeneity", "oracle_toy"])
def test_shipped_experiments_are_valid(name):
    assert load_experiment(str(EXPERIMENTS / f"{name}.yaml")).name == name


def test_misspelled_key_is_named():
    with pytest.raises(ConfigError) as info:
        parse_experiment_config(MINIMAL.replace("design: paired", "desing: paired"))
    assert "desing" in str(info.value)
    assert info.value.line == 3


def test_missing_master_seed_is_an_error():
    with pytest.raises(ConfigError) as info:
        parse_experiment_config(MINIMAL.replace("master_seed: 3\n", ""))
    assert "master_seed" in str(info.value)


def test_yaml_syntax_error_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_experiment_config("name: x\nS: [1, 2\n")
    assert info.value.line is not None


def test_unquoted_yes_is_not_a_method_value():
    with pytest.raises(ConfigError):
        parse_experiment_config(MINIMAL.replace('values: ["a", "b"]', "values: [yes, no]"))


def test_population_violations_surface():
    with pytest.raises(SpecValidationError):
        parse_experiment_config(MINIMAL.replace("treatment: A", "treatment: Z"))


def test_executor_checks():
    with pytest.raises(ConfigError):
        parse_experiment_config(MINIMAL.replace("synthetic_surface", "nope"))
    with pytest.raises(ConfigError):
        parse_experiment_config(MINIMAL.split("synthetic:")[0])
    with pytest.raises(ConfigError):
        parse_experiment_config(MINIMAL.replace("executor_id: synthetic_surface", "executor_id: text_pipeline"))


def test_sampled_designs_need_two_systems():
    with pytest.raises(ConfigError):
        parse_experiment_config(MINIMAL.replace("S: 4", "S: 1"))


def test_ground_truth_recovery():
    spec = load_experiment(str(EXPERIMENTS / "synthetic.yaml"))
    report = run_experiment(spec).report
    assert len(report.ites) == 500
    assert all(ite == pytest.approx(0.05, abs=1e-12) for ite in report.ites)
    assert abs(report.ate - 0.05) <= 3 * report.standard_error + 1e-12
    assert sum(report.ites) / len(report.ites) == pytest.approx(report.ate, abs=1e-12)


def test_ground_truth_coverage_over_replications():
    summary = simulate(synthetic_experiment(S=500), replications=300, progress=False)
    assert summary.exact_ate == pytest.approx(0.05)
    assert summary.coverage_3se >= 0.99


def test_heterogeneity_calibration():
    spec = load_experiment(str(EXPERIMENTS / "heterogeneity.yaml"))
    summary = simulate(spec, progress=False)
    lo, hi = summary.calibration_interval
    assert summary.replications == 400
    assert summary.exact_ate == pytest.approx(0.0, abs=1e-12)
    assert lo <= summary.system_rejection_rate <= hi
    assert summary.baseline_rejection_rate > 0.15


def test_reports_are_byte_identical_across_runs_and_workers(tmp_path):
    spec = synthetic_experiment(S=30)
    emit_report(run_experiment(spec, workers=1), tmp_path / "a")
    emit_report(run_experiment(spec, workers=1), tmp_path / "b")
    emit_report(run_experiment(spec, workers=3), tmp_path / "c")
    for name in ("report.json", "runs.csv"):
        first = (tmp_path / "a" / name).read_bytes()
        assert first == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()


def test_exhaustive_design_routes_to_the_oracle():
    spec = synthetic_experiment(design="exhaustive", S=1, treatment_split_sd=0.02)
    bundle = run_experiment(spec)
    population = spec.population
    universe = universe_from_seeds(population.data_source.n_docs, population.split_policy, range(1, 6))
    exact = exact_ate(population, "synthetic_surface", universe, MetricSpec(), params=spec.synthetic,
                      master_seed=spec.master_seed)
    assert bundle.report.design == Design.exhaustive
    assert bundle.report.ate == pytest.approx(exact, abs=1e-12)
    assert len(bundle.runs) == 2 * 24 * 5


def test_runs_table_shape(tmp_path):
    paired = run_experiment(synthetic_experiment(S=6))
    _, runs_path = emit_report(paired, tmp_path / "paired")
    with open(runs_path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["system_id", "arm", "v1", "v2", "v3", "method", "split_seed", "N", "M", "mean_loss", "degenerate"]
    assert len(rows) - 1 == 12

    independent = run_experiment(synthetic_experiment(S=20, design="independent"))
    report_path, runs_path = emit_report(independent, tmp_path / "independent")
    assert len(runs_path.read_text().splitlines()) - 1 == 20
    assert '"ites"' not in report_path.read_text()


def test_report_validates_and_reloads(tmp_path):
    bundle = run_experiment(synthetic_experiment(S=8))
    report_path, _ = emit_report(bundle, tmp_path)
    document = ReportDocument.model_validate_json(report_path.read_text())
    assert document.report.ate == bundle.report.ate
    assert json.loads(report_path.read_text())["report"]["ate"] == bundle.report.ate
    reloaded = load_bundle(tmp_path)
    assert reloaded.report == bundle.report
    assert [r.mean_loss for r in reloaded.runs] == [r.mean_loss for r in bundle.runs]
    assert "report" in report_schema()["properties"]


def test_tampered_report_fails_digest(tmp_path):
    report_path, _ = emit_report(run_experiment(synthetic_experiment(S=4)), tmp_path)
    report_path.write_text(report_path.read_text().replace('"name": "synthetic-test"', '"name": "edited"'))
    with pytest.raises(ContractError):
        load_bundle(tmp_path)


def test_digest_and_summary(tmp_path):
    bundle = run_experiment(synthetic_experiment(S=8))
    report_path, runs_path = emit_report(bundle, tmp_path)
    text = report_path.read_text()
    assert verify_digest(text)
    assert not verify_digest(text.replace('"name": "synthetic-test"', '"name": "edited"'))
    assert runs_path.read_text() == render_runs_table(bundle)
    summary = render_summary(bundle)
    assert summary.startswith("experiment     synthetic-test (paired")
    assert "runs           16 rows" in summary
    assert "best treatment" in summary and "best control" in summary


def test_executor_failure_writes_partial_manifest(tmp_path):
    def broken(armed, pool, metric, params):
        if armed.base.system_id == 3:
            raise RuntimeError("disk on fire")
        return [0.1], False

    register_executor("broken-test", broken)
    spec = synthetic_experiment(S=4)
    spec = spec.model_copy(update={"population": spec.population.model_copy(update={"executor_id": "broken-test"})})
    with pytest.raises(RunFailure) as info:
        run_experiment(spec, directory=tmp_path)
    manifest = json.loads((tmp_path / "partial_manifest.json").read_text())
    assert manifest["failed"] == {"system_id": 3, "arm": "treatment"}
    assert len(manifest["completed"]) == 4
    assert info.value.manifest_path.endswith("partial_manifest.json")


@pytest.mark.parametrize("S", [2, 3, 4])
def test_small_independent_designs_report_or_stop_before_running(S):
    calls = []

    def counting(armed, pool, metric, params):
        calls.append(armed.base.system_id)
        return run_synthetic(armed, params), False

    register_executor("counting-test", counting)
    outcomes = set()
    for master_seed in range(20):
        spec = synthetic_experiment(S=S, design="independent", master_seed=master_seed)
        spec = spec.model_copy(update={"population": spec.population.model_copy(update={"executor_id": "counting-test"})})
        calls.clear()
        try:
            report = run_experiment(spec).report
        except SizingError as e:
            assert "arm empty" in str(e)
            assert calls == []
            outcomes.add("refused")
            continue
        outcomes.add("reported")
        assert len(calls) == S
        assert report.ege_A.S + report.ege_B.S == S
        if min(report.ege_A.S, report.ege_B.S) < 2:
            assert report.confidence_interval is None
            assert any(note.startswith("confidence_interval omitted") for note in report.notes)
        else:
            assert report.confidence_interval is not None
        assert (report.test_result is None) == (S < 3)
    assert "reported" in outcomes
    if S == 2:
        assert "refused" in outcomes


def test_workers_environment_override(monkeypatch):
    spec = synthetic_experiment()
    assert resolve_workers(spec) == 1
    monkeypatch.setenv("EGE_HARNESS_WORKERS", "3")
    assert resolve_workers(spec) == 3
    assert resolve_workers(spec, workers=2) == 2


def test_cli_exit_codes(tmp_path, capsys):
    config = tmp_path / "minimal.yaml"
    config.write_text(MINIMAL)
    out = tmp_path / "out"
    assert main(["validate", str(config)]) == EXIT_OK
    assert main(["run", str(config), "--out", str(out)]) == EXIT_OK
    assert (out / "report.json").exists() and (out / "runs.csv").exists()
    assert main(["report", str(out)]) == EXIT_OK
    assert main(["schema"]) == EXIT_OK

    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL.replace("design: paired", "desing: paired"))
    assert main(["validate", str(bad)]) == EXIT_INVALID
    assert main(["oracle", str(config), "--out", str(tmp_path / "o"), "--budget", "1"]) == EXIT_RUNTIME
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_RUNTIME
