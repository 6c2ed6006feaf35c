import importlib.resources as resources
import json

import pytest
from click.testing import CliRunner

from surfcalc.cli_runner import main


def scenario_path(name):
    return str(resources.files("surfcalc") / "scenarios" / name)


@pytest.fixture()
def runner():
    return CliRunner()


def test_version(runner):
    out = runner.invoke(main, ["version"])
    assert out.exit_code == 0
    assert out.output.strip()


def test_list_builtins(runner):
    out = runner.invoke(main, ["list-builtins"])
    assert out.exit_code == 0
    for word in ("sphere", "torus", "dilation", "quadratic",
                 "verify-geometry", "conservation-report"):
        assert word in out.output


def test_run_identities_scenario(runner, tmp_path):
    out_dir = tmp_path / "out"
    out = runner.invoke(main, ["run", scenario_path("sphere_identities.cfg"),
                               "--out", str(out_dir)])
    assert out.exit_code == 0, out.output
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["pass"] is True
    assert set(summary["suites"]) == {"verify-geometry", "verify-identities",
                                      "residuals"}
    for suite, data in summary["suites"].items():
        assert data["pass"] is True
        assert (out_dir / f"{suite}.csv").exists()


def test_suite_override(runner, tmp_path):
    out_dir = tmp_path / "out"
    out = runner.invoke(main, ["run", scenario_path("sphere_identities.cfg"),
                               "--suite", "verify-geometry",
                               "--out", str(out_dir)])
    assert out.exit_code == 0, out.output
    summary = json.loads((out_dir / "summary.json").read_text())
    assert list(summary["suites"]) == ["verify-geometry"]


def test_run_transport_scenario(runner, tmp_path):
    out_dir = tmp_path / "out"
    out = runner.invoke(main, ["run", scenario_path("dilating_sphere_mass.cfg"),
                               "--out", str(out_dir)])
    assert out.exit_code == 0, out.output
    assert (out_dir / "transport_mass.csv").exists()


def test_repeated_runs_are_identical(runner, tmp_path):
    """Bundled scenarios are deterministic: repeated runs give byte-identical
    summaries."""
    texts = []
    for k in range(2):
        out_dir = tmp_path / f"out{k}"
        out = runner.invoke(main, ["run", scenario_path("sphere_identities.cfg"),
                                   "--out", str(out_dir)])
        assert out.exit_code == 0, out.output
        texts.append((out_dir / "summary.json").read_bytes())
    assert texts[0] == texts[1]


def test_malformed_scenario_fails_cleanly(runner, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("name = broken\nsuite = transport\n")
    out = runner.invoke(main, ["run", str(bad), "--out", str(tmp_path / "o")])
    assert out.exit_code != 0
    assert "surface.kind" in out.output


def test_unknown_suite_rejected(runner, tmp_path):
    out = runner.invoke(main, ["run", scenario_path("sphere_identities.cfg"),
                               "--suite", "warp",
                               "--out", str(tmp_path / "o")])
    assert out.exit_code != 0
    assert "unknown suite" in out.output


def test_failing_check_sets_exit_code(runner, tmp_path):
    strict = tmp_path / "strict.cfg"
    strict.write_text(
        "name = strict\nsuite = verify-geometry\nsurface.kind = sphere\n"
        "tol.area = 1e-15\n")
    out = runner.invoke(main, ["run", str(strict),
                               "--out", str(tmp_path / "o")])
    assert out.exit_code == 1
    assert "FAIL" in out.output
