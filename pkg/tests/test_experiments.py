import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import main
from models.exceptions import ConfigError, InfeasibleError
from simulation.config import config_from_dict, load_config, row_seed
from simulation.experiments import (
    DEFAULT_STEP_LABEL,
    run_concentration,
    run_experiment,
    run_kappa_table,
    run_phase_transition,
    run_rip_sweep,
    run_tails,
)
from simulation.reporting import CSV_COLUMNS, csv_text, separation_record, write_report

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
SEPARATION_FIXTURE = Path(__file__).resolve().parent / "fixtures" / "phase_separation.json"


def _config(**values):
    values.setdefault("jobs", 1)
    return config_from_dict(values)


def test_kappa_table():
    config = _config(
        experiment="kappa",
        families=["rademacher", "spherical", "gaussian"],
        n_list=[4, 5, 10],
        samples=400_000,
    )
    report = run_kappa_table(config)
    rows = report.rows.set_index(["family", "n"])
    assert len(rows) == 9
    assert rows.loc[("rademacher", 4), "kappa_analytic"] == pytest.approx(4 / 3, abs=1e-12)
    assert rows.loc[("spherical", 10), "kappa_analytic"] == pytest.approx(10 / 9, abs=1e-12)
    assert rows.loc[("gaussian", 5), "kappa_analytic"] == pytest.approx(5 / 6, abs=1e-12)
    assert (report.rows["rel_gap"] < 0.01).all()


def test_rip_sweep_rows_and_monotonicity():
    config = _config(experiment="rip", family="spherical", mode="both", n=4, N=20, s_list=[1, 2, 3])
    report = run_rip_sweep(config)
    frame = report.rows
    assert list(frame.columns) == CSV_COLUMNS["rip"]
    assert set(frame["mode"]) == {"centered", "uncentered"}
    assert (frame["method"] == "exact").all()
    for _, group in frame.groupby("mode"):
        deltas = group.sort_values("s")["delta"].to_numpy()
        assert all(b >= a - 1e-12 for a, b in zip(deltas, deltas[1:]))
    centered = frame[frame["mode"] == "centered"]
    assert centered.loc[centered["s"] == 1, "delta"].iloc[0] == pytest.approx(0.0, abs=1e-10)
    assert (frame["sparsity_budget"] >= 1).all()
    assert frame["theory_bound"].notna().all()


def test_rip_sweep_downgrades_without_strict():
    config = _config(
        experiment="rip", n=4, N=40, s_list=[10], rip={"enumeration_budget": 1000, "restarts": 3}
    )
    report = run_rip_sweep(config)
    row = report.rows.iloc[0]
    assert row["method"] == "greedy"
    assert bool(row["downgraded"])
    assert report.metadata["downgraded_rows"] == 1
    with pytest.raises(InfeasibleError):
        run_rip_sweep(config, strict=True)


def test_rip_csv_is_deterministic_across_jobs():
    config = _config(experiment="rip", n=4, N=16, s_list=[1, 2], mode="both", seed=3)
    first = csv_text(run_rip_sweep(config))
    second = csv_text(run_rip_sweep(replace(config, jobs=2)))
    assert first == second


def test_phase_transition_small():
    config = _config(
        experiment="phase", family="spherical", mode="both", n=4, N=24, s_list=[1, 24], trials=20
    )
    report = run_phase_transition(config)
    summary = report.summary.set_index(["mode", "s"])
    assert summary.loc[("centered", 1), "success_rate"] == 1.0
    assert summary.loc[("centered", 24), "success_rate"] == 0.0
    assert summary.loc[("uncentered", 24), "success_rate"] == 0.0
    assert report.metadata["solver"] == "IHT (library choice)"
    assert report.metadata["step"] == DEFAULT_STEP_LABEL
    assert "pilot" not in report.metadata
    info = report.metadata["separation"]["4"]
    assert info["centered_rate"] >= info["uncentered_rate"]
    # trials are paired across modes
    seeds = report.rows.groupby("mode")["seed"].apply(list)
    assert seeds["centered"] == seeds["uncentered"]
    assert list(report.rows.columns) == CSV_COLUMNS["phase"]


def test_phase_transition_with_fista():
    config = _config(
        experiment="phase", n=6, N=20, s_list=[1], trials=20, solver={"name": "fista"}
    )
    report = run_phase_transition(config)
    assert report.metadata["solver"] == "FISTA-LASSO (library choice)"
    assert report.summary["success_rate"].iloc[0] == 1.0


def test_concentration_report():
    config = _config(
        experiment="conc", family="rademacher", n_list=[4, 8], N=32, trials=10, t_grid=[0.25, 0.5]
    )
    report = run_concentration(config)
    assert (report.rows["frequency"] == 0.0).all()
    assert (report.rows["family"] == "rademacher").all()
    assert list(report.rows.columns) == CSV_COLUMNS["conc"]


def test_tails_report():
    config = _config(
        experiment="tails", family="gaussian", n_list=[4, 8], samples=20_000, t_grid=[0.5, 1.0, 2.0, 4.0]
    )
    report = run_tails(config)
    assert list(report.rows.columns) == CSV_COLUMNS["tails"]
    assert len(report.details) == 2
    assert len(report.details[0]["hanson_wright_bound"]) == 4
    assert report.metadata["raw_second_moment_growth"] > 1.0
    assert report.metadata["psi1_ratio"] >= 1.0


def test_write_report(tmp_path, capsys):
    config = _config(experiment="rip", n=4, N=16, s_list=[1, 2], output=str(tmp_path / "out" / "rip"))
    report = run_experiment(config)
    reporter = write_report(report)
    assert reporter.csv_file.exists() and reporter.summary_file.exists()
    frame = pd.read_csv(reporter.csv_file)
    assert list(frame.columns) == CSV_COLUMNS["rip"]
    payload = json.loads(reporter.json_file.read_text())
    assert payload["config_hash"] == report.config_hash
    assert payload["experiment"] == "rip"
    assert len(payload["rows"]) == len(frame)
    assert "CSV:" in capsys.readouterr().out


def test_report_json_has_no_nan(tmp_path):
    config = _config(
        experiment="conc", family="spherical", n_list=[4], N=16, trials=3, output=str(tmp_path / "conc")
    )
    reporter = write_report(run_concentration(config), echo=False)
    text = reporter.json_file.read_text()
    assert "NaN" not in text
    assert json.loads(text)["rows"][0]["identity_error"] is None


def test_cli_runs_and_maps_errors(tmp_path):
    out = str(tmp_path / "kappa")
    config = tmp_path / "kappa.yaml"
    config.write_text("experiment: kappa\nfamilies: [rademacher]\nn_list: [4]\nsamples: 1000\n")
    assert main.main(["kappa", "--config", str(config), "--out", out, "--jobs", "1"]) == 0
    assert Path(out + ".csv").exists()

    # config describes a different experiment than the subcommand
    assert main.main(["rip", "--config", str(config), "--out", out]) == 2

    strict = tmp_path / "strict.yaml"
    strict.write_text(
        "experiment: rip\nn: 4\nN: 40\ns_list: [10]\nrip:\n  enumeration_budget: 1000\n"
    )
    assert main.main(["rip", "--config", str(strict), "--out", out, "--strict"]) == 3

    # bound constants are checked before any computation
    bad_bound = tmp_path / "bound.yaml"
    bad_bound.write_text("experiment: rip\nn: 4\nN: 16\ns_list: [1]\nbound:\n  theta_prime: 1.5\n")
    assert main.main(["rip", "--config", str(bad_bound), "--out", out]) == 2


def _pilot_config(**values):
    return _config(
        experiment="phase",
        family="spherical",
        mode="both",
        n=4,
        N=24,
        s_list=[1, 6],
        trials=20,
        solver={"pilot_steps": [None, 0.5], "pilot_trials": 4},
        **values,
    )


def test_phase_pilot_picks_the_widest_gap():
    report = run_phase_transition(_pilot_config())
    pilot = report.metadata["pilot"]
    assert [record["step"] for record in pilot] == [DEFAULT_STEP_LABEL, 0.5]
    best = max(pilot, key=lambda record: record["separation"])
    assert report.metadata["step"] == best["step"]
    # the main sweep keeps its own problems
    first = report.rows.iloc[0]
    assert (first["mode"], first["s"]) == ("centered", 1)
    assert first["seed"] == row_seed(0, "phase", 4, 1, 0)
    assert len(report.rows) == 2 * 2 * 20


def test_separation_record_is_reproducible():
    first = separation_record(run_phase_transition(_pilot_config()))
    second = separation_record(run_phase_transition(_pilot_config(jobs=2)))
    assert first == second
    assert first["sweep"]["n"] == [4]
    assert first["sweep"]["pilot_steps"] == [None, 0.5]
    assert set(first["separation"]["4"]) == {
        "s_star", "separation", "centered_rate", "uncentered_rate"
    }
    kappa_report = run_kappa_table(
        _config(experiment="kappa", families=["rademacher"], samples=100)
    )
    with pytest.raises(ConfigError):
        separation_record(kappa_report)


def test_cli_writes_separation_record(tmp_path):
    config = tmp_path / "phase.yaml"
    config.write_text(
        "experiment: phase\nmode: both\nn: 4\nN: 24\ns_list: [1, 6]\ntrials: 20\n"
        "solver:\n  pilot_steps: [null, 0.5]\n  pilot_trials: 4\n"
    )
    golden = tmp_path / "fixtures" / "separation.json"
    argv = ["phase", "--config", str(config), "--out", str(tmp_path / "phase"), "--jobs", "1"]
    assert main.main(argv + ["--golden", str(golden)]) == 0
    record = json.loads(golden.read_text())
    assert record["sweep"]["trials"] == 20
    assert record["step"] in (DEFAULT_STEP_LABEL, 0.5)


def test_rip_sweep_uses_eig_crossover():
    base = dict(experiment="rip", family="gaussian", n=4, N=16, s_list=[3], mode="both")
    dense = run_rip_sweep(_config(**base)).rows
    lanczos = run_rip_sweep(_config(rip={"eig_crossover": 2}, **base)).rows
    np.testing.assert_allclose(lanczos["delta"], dense["delta"], atol=1e-8)


@pytest.mark.slow
def test_kappa_acceptance():
    config = replace(load_config(CONFIG_DIR / "kappa.yaml"), samples=400_000)
    report = run_kappa_table(config)
    assert len(report.rows) == 12
    assert (report.rows["rel_gap"] < 0.01).all()


@pytest.mark.slow
def test_concentration_acceptance():
    report = run_concentration(load_config(CONFIG_DIR / "conc.yaml"))
    freq = report.rows.sort_values("n")["frequency"].to_numpy()
    assert all(b <= a for a, b in zip(freq, freq[1:]))
    assert report.metadata["max_identity_error"] <= 1e-10


@pytest.mark.slow
def test_tails_acceptance():
    report = run_tails(load_config(CONFIG_DIR / "tails.yaml"))
    assert report.metadata["psi1_ratio"] < 2.0
    raw = report.rows.sort_values("n")["raw_second_moment"].to_numpy()
    assert np.all(np.diff(raw) > 0)


@pytest.mark.slow
def test_phase_separation_acceptance():
    report = run_phase_transition(load_config(CONFIG_DIR / "phase.yaml"))
    record = separation_record(report)
    golden = json.loads(SEPARATION_FIXTURE.read_text())
    assert record["sweep"] == golden["sweep"]
    assert record["separation"]["12"]["separation"] >= 0.30
    if golden["separation"] is not None:
        # recorded with: main.py phase --config configs/phase.yaml --golden <fixture>
        assert record["step"] == golden["step"]
        assert record["separation"] == golden["separation"]
