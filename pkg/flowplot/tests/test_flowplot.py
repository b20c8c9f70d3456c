"""flowplot against real artifacts produced by the graphflow CLI."""

import json
import shutil
import subprocess

import numpy as np
import pytest

cli = pytest.importorskip("flowplot.cli")

GRAPHFLOW = shutil.which("graphflow")
pytestmark = pytest.mark.skipif(GRAPHFLOW is None,
                                reason="graphflow CLI not installed")


@pytest.fixture(scope="session")
def smoothing_artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoothing")
    cfg = out / "config.json"
    cfg.write_text(json.dumps({"N": 64, "t_end": 0.02, "record_every": 10}))
    subprocess.run([GRAPHFLOW, "experiment", "smoothing",
                    "--config", str(cfg), "--out", str(out)], check=True)
    return out


@pytest.fixture(scope="session")
def circle_artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("circle")
    cfg = out / "config.json"
    cfg.write_text(json.dumps({
        "generator": {"kind": "circle", "parameters": {"R0": 1.0, "N": 128},
                      "seed": 0},
        "flow": {"scheme": "rk4", "cfl_safety": 0.5, "t_end": 0.1,
                 "record_every": 10},
        "monitors": [{"name": "tubular_check"}],
    }))
    subprocess.run([GRAPHFLOW, "run", "--config", str(cfg),
                    "--out", str(out)], check=True)
    return out


@pytest.mark.parametrize("kind", cli.KINDS)
@pytest.mark.parametrize("ext", [".png", ".svg"])
def test_all_kinds_from_smoothing_artifacts(smoothing_artifacts, tmp_path,
                                            kind, ext):
    out = tmp_path / f"{kind}{ext}"
    code = cli.main(["--series", str(smoothing_artifacts / "series.csv"),
                     "--report", str(smoothing_artifacts / "report.json"),
                     "--kind", kind, "--out", str(out)])
    assert code == 0
    assert out.exists() and out.stat().st_size > 0


def test_circle_hausdorff_below_envelope(circle_artifacts, tmp_path):
    series = cli.read_series(circle_artifacts / "series.csv")
    t, d = series["t"], series["hausdorff_to_init"]
    positive = t > 0.0
    assert np.all(d[positive] < np.sqrt(2.0 * t[positive]))
    out = tmp_path / "envelope.png"
    assert cli.main(["--series", str(circle_artifacts / "series.csv"),
                     "--report", str(circle_artifacts / "report.json"),
                     "--kind", "hausdorff_envelope",
                     "--out", str(out)]) == 0
    assert out.exists()


def test_smoothing_a2_plateau_is_flat(smoothing_artifacts):
    """Mollified data flows smoothly at first: sup |A|^2 is roughly flat
    over the early plateau, far from the 1/t decay envelope."""
    series = cli.read_series(smoothing_artifacts / "series.csv")
    t, a2 = series["t"], series["max_A2"]
    keep = (t > 0.0) & (a2 > 0.0)
    t, a2 = t[keep], a2[keep]
    early = t <= t[0] * 4.0
    assert early.sum() >= 2
    spread = np.log10(a2[early].max() / a2[early].min())
    assert spread < 0.5  # decades; a 1/t decay would give ~0.6 per quadrupling


def test_empty_series_errors_without_output(tmp_path):
    series = tmp_path / "series.csv"
    series.write_text("t,min_star_omega,max_A2,max_H,hausdorff_to_init,"
                      "min_delta\n")
    out = tmp_path / "plot.png"
    code = cli.main(["--series", str(series), "--kind", "A2_times_t",
                     "--out", str(out)])
    assert code == cli.EXIT_DATA
    assert not out.exists()


def test_schema_mismatch_errors(tmp_path):
    bad_series = tmp_path / "series.csv"
    bad_series.write_text("x,y\n1,2\n")
    out = tmp_path / "plot.png"
    assert cli.main(["--series", str(bad_series), "--kind", "A2_times_t",
                     "--out", str(out)]) == cli.EXIT_DATA

    bad_report = tmp_path / "report.json"
    bad_report.write_text(json.dumps({"schema_version": 99}))
    assert cli.main(["--report", str(bad_report),
                     "--kind", "residual_convergence",
                     "--out", str(out)]) == cli.EXIT_DATA
    assert not out.exists()


def test_usage_errors(tmp_path):
    assert cli.main(["--kind", "nonsense",
                     "--out", str(tmp_path / "x.png")]) == cli.EXIT_USAGE
    assert cli.main(["--kind", "A2_times_t",
                     "--out", str(tmp_path / "x.pdf")]) == cli.EXIT_USAGE


def test_missing_required_input_is_data_error(tmp_path):
    assert cli.main(["--kind", "star_omega_vs_t",
                     "--out", str(tmp_path / "x.png")]) == cli.EXIT_DATA
