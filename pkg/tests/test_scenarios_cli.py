"""Scenario configs, runners, plots, and the command-line surface."""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from roughmetric import field_io_write, make_domain, sample_scalar
from roughmetric.cli import main
from roughmetric.families import enveloped_pole_scalar, oscillation_metric
from roughmetric.plotting import PlotError, PlotSeries, emit_plot
from roughmetric.scenarios import (
    SCENARIO_IDS,
    ConfigError,
    config_from_json,
    config_json_text,
    default_config,
    describe,
    list_scenarios,
)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_round_trip(tmp_path):
    config = default_config("S2", output_dir=str(tmp_path / "out"))
    path = tmp_path / "config.json"
    path.write_text(config_json_text(config))
    assert config_from_json(path) == config


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"scenario": "S1", "rech": 3}))
    with pytest.raises(ConfigError):
        config_from_json(path)


def test_config_requires_scenario(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"tolerance": 0.02}))
    with pytest.raises(ConfigError):
        config_from_json(path)
    path.write_text(json.dumps({"scenario": "S9"}))
    with pytest.raises(ConfigError):
        config_from_json(path)


def test_config_defaults_fill_omissions(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"scenario": "S3", "tolerance": 0.05}))
    config = config_from_json(path)
    assert config.tolerance == 0.05
    assert config.lambda_schedule == default_config("S3").lambda_schedule


def test_default_config_unknown_scenario():
    with pytest.raises(ConfigError):
        default_config("S6")


# ---------------------------------------------------------------------------
# listing and describing
# ---------------------------------------------------------------------------


def test_list_scenarios_entries():
    entries = list_scenarios()
    assert tuple(sid for sid, _ in entries) == SCENARIO_IDS == (
        "S1",
        "S2",
        "S3",
        "S4",
        "S5",
    )
    assert all(text.strip() for _, text in entries)


def test_describe_names_the_claim():
    text = describe("S2")
    # the description states the mathematical content being checked
    assert "distance" in text.lower()
    assert "atom" in text.lower()
    assert '"scenario": "S2"' in text
    with pytest.raises(ConfigError):
        describe("S9")


# ---------------------------------------------------------------------------
# plotting
# ---------------------------------------------------------------------------


def test_emit_plot_svg_parses(tmp_path):
    path = tmp_path / "plot.svg"
    series = [PlotSeries("pair", np.array([1.0, 2.0]), np.array([3.0, 1.5]))]
    emit_plot(series, path, title="t", xlabel="x", ylabel="y")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    body = path.read_text()
    assert "<path" in body


def test_emit_plot_deterministic_bytes(tmp_path):
    series = [
        PlotSeries("a", np.arange(5.0), np.arange(5.0) ** 2),
        PlotSeries("b", np.arange(5.0), np.arange(5.0) + 0.5),
    ]
    first = tmp_path / "one.svg"
    second = tmp_path / "two.svg"
    emit_plot(series, first, title="same", xlabel="x", ylabel="y", logy=True)
    emit_plot(series, second, title="same", xlabel="x", ylabel="y", logy=True)
    assert first.read_bytes() == second.read_bytes()


def test_emit_plot_many_series(tmp_path):
    series = [
        PlotSeries(f"k={k}", np.arange(4.0), (k + 1.0) / (np.arange(4.0) + 1.0))
        for k in range(8)
    ]
    path = tmp_path / "many.svg"
    emit_plot(series, path, title="family", xlabel="r", ylabel="v")
    ET.parse(path)


def test_emit_plot_validation(tmp_path):
    path = tmp_path / "bad.svg"
    with pytest.raises(PlotError):
        emit_plot([], path, title="t", xlabel="x", ylabel="y")
    with pytest.raises(PlotError):
        emit_plot(
            [PlotSeries("m", np.array([1.0, 2.0]), np.array([1.0]))],
            path,
            title="t",
            xlabel="x",
            ylabel="y",
        )
    with pytest.raises(PlotError):
        emit_plot(
            [PlotSeries("e", np.array([]), np.array([]))],
            path,
            title="t",
            xlabel="x",
            ylabel="y",
        )
    with pytest.raises(PlotError):
        emit_plot(
            [PlotSeries("n", np.array([1.0, 2.0]), np.array([1.0, np.nan]))],
            path,
            title="t",
            xlabel="x",
            ylabel="y",
        )


# ---------------------------------------------------------------------------
# scenario outputs
# ---------------------------------------------------------------------------


def test_scenario_artifacts_on_disk(s5_run):
    summary, _, outdir = s5_run
    assert summary.passed
    payload = json.loads((outdir / "summary.json").read_text())
    assert payload["scenario"] == "S5"
    assert payload["incomplete"] is False
    assert all(payload["verdicts"].values())
    assert (outdir / "timings.json").exists()
    csvs = list((outdir / "tables").glob("*.csv"))
    svgs = list((outdir / "plots").glob("*.svg"))
    assert csvs and all(p.stat().st_size > 0 for p in csvs)
    assert svgs and all(p.stat().st_size > 0 for p in svgs)


def test_scenario_verdicts_match_stage_records(s5_run):
    # the serialized verdict must be recomputable from the stage payload
    _, _, outdir = s5_run
    payload = json.loads((outdir / "summary.json").read_text())
    stage = payload["stages"]["euclidean_limit"]
    recomputed = stage["final_deviation"] <= stage["tol"] + stage["metrication_allowance"]
    assert payload["verdicts"]["euclidean_limit"] == recomputed
    averages = payload["stages"]["pointwise_averages"]
    assert payload["verdicts"]["pointwise_ae"] == (averages["converged_fraction"] == 1.0)


def test_scenario_config_echo_is_exact(s5_run):
    _, _, outdir = s5_run
    payload = json.loads((outdir / "summary.json").read_text())
    expected = json.loads(config_json_text(default_config("S5", output_dir=str(outdir))))
    assert payload["config"] == expected


# ---------------------------------------------------------------------------
# command-line exit codes
# ---------------------------------------------------------------------------


def test_cli_list_and_describe(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "S3" in out
    assert main(["describe", "S9"]) == 1


def test_cli_run_verdict_failure(tmp_path):
    config = {
        "scenario": "S1",
        "output_dir": str(tmp_path / "out"),
        "domain_resolution": 64,
        "sequence_length": 3,
        "landmark_count": 5,
        "tolerance": 1e-9,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    assert main(["run", "--config", str(path)]) == 2
    payload = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert payload["incomplete"] is False
    assert not payload["verdicts"]["continuous_limit"]


def test_cli_run_execution_error(tmp_path):
    # threshold below the integral-smallness floor: the cover stage raises,
    # the summary records the failure, and the exit code distinguishes it
    config = {
        "scenario": "S4",
        "output_dir": str(tmp_path / "out"),
        "cover_threshold": 0.2,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    assert main(["run", "--config", str(path)]) == 1
    payload = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert payload["incomplete"] is True
    assert "smallness" in payload["error"]


def test_cli_run_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 1


# ---------------------------------------------------------------------------
# one-shot field tools
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def field_files(tmp_path_factory):
    base = tmp_path_factory.mktemp("fields")
    dom = make_domain("torus", 2, 2.0, 128)
    scalar = enveloped_pole_scalar(dom, (1.0, 1.0), a=0.5)
    metric = oscillation_metric(dom, 3)
    dom3 = make_domain("box", 3, 2.0, 24)

    def gen(x, y, z):
        r2 = (x - 1.0) ** 2 + (y - 1.0) ** 2 + (z - 1.0) ** 2
        return (2.0 / (1.0 + r2)) ** 0.5

    factor = sample_scalar(dom3, gen)
    paths = {
        "scalar": base / "pole.rmf",
        "metric": base / "osc.rmf",
        "factor": base / "factor.rmf",
    }
    field_io_write(scalar, paths["scalar"])
    field_io_write(metric, paths["metric"])
    field_io_write(factor, paths["factor"])
    return paths


def test_cli_dist(field_files, capsys):
    rc = main(
        [
            "dist",
            "--metric",
            str(field_files["metric"]),
            "--from",
            "0.25,0.25",
            "--to",
            "1.5,1.0",
            "--reach",
            "2",
        ]
    )
    assert rc == 0
    assert "distance" in capsys.readouterr().out


def test_cli_dist_type_mismatch(field_files):
    assert (
        main(
            [
                "dist",
                "--metric",
                str(field_files["scalar"]),
                "--from",
                "0.25,0.25",
                "--to",
                "1.5,1.0",
            ]
        )
        == 1
    )


def test_cli_dist_bad_point(field_files):
    rc = main(
        ["dist", "--metric", str(field_files["metric"]), "--from", "0.5", "--to", "1,1"]
    )
    assert rc == 1


def test_cli_sobolev(field_files, capsys):
    assert main(["sobolev", "--field", str(field_files["scalar"]), "--p", "1.5"]) == 0
    out = capsys.readouterr().out
    assert "W^{1,p}" in out or "norm" in out.lower()


def test_cli_cover(field_files, capsys):
    assert main(["cover", "--field", str(field_files["scalar"]), "--t", "1.0"]) == 0
    assert "content" in capsys.readouterr().out.lower()


def test_cli_curvature(field_files, tmp_path, capsys):
    out_path = tmp_path / "R.rmf"
    rc = main(
        ["curvature", "--factor", str(field_files["factor"]), "--out", str(out_path)]
    )
    assert rc == 0
    assert out_path.exists()
    text = capsys.readouterr().out
    assert "energy" in text.lower()
    # a 2d scalar is not a valid conformal factor
    assert main(["curvature", "--factor", str(field_files["scalar"])]) == 1
