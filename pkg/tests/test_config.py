import importlib.resources as resources

import pytest

from surfcalc.config import ConfigError, load_scenario, parse_config


def write(tmp_path, text, name="scn.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


GOOD = """\
# comment line
name = demo
suite = transport, verify-geometry
surface.kind = sphere
surface.R = 1.5
motion.kind = dilation
fields.rho0 = 1 + 0.3*x3
resolution = 32, 64
dt = 0.01
T = 0.2
tol.mass = 1e-9
seed = 3
"""


def test_parse_config_basics():
    entries = parse_config(GOOD)
    assert entries["name"] == ("demo", 2)
    assert entries["surface.R"] == ("1.5", 5)


def test_parse_config_errors():
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config("name demo")
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config("a = 1\na = 2")
    with pytest.raises(ConfigError, match="empty key"):
        parse_config("= 1")


def test_scenario_accessors(tmp_path, rng):
    scn = load_scenario(write(tmp_path, GOOD))
    assert scn.name == "demo"
    assert scn.suites() == ["transport", "verify-geometry"]
    assert scn.get_float("surface.R") == 1.5
    assert scn.resolution() == (32, 64)
    assert scn.time_window() == (0.01, 0.2)
    assert scn.seed() == 3
    assert scn.tolerance("mass", 1e-6) == 1e-9
    assert scn.tolerance("other", 1e-6) == 1e-6
    atlas = scn.build_surface()
    assert len(atlas.charts) == 2
    motion = scn.build_motion()
    assert motion.name == "dilation"
    rho0 = scn.get_scalar_field("fields.rho0")
    import numpy as np
    x = rng.uniform(-1, 1, (3, 5))
    assert np.allclose(rho0.value(x), 1 + 0.3 * x[2])


def test_missing_name(tmp_path):
    with pytest.raises(ConfigError, match="name"):
        load_scenario(write(tmp_path, "suite = transport\n"))


def test_unknown_suite(tmp_path):
    scn = load_scenario(write(tmp_path, "name = x\nsuite = warp\n"))
    with pytest.raises(ConfigError, match="unknown suite"):
        scn.suites()


def test_bad_values(tmp_path):
    scn = load_scenario(write(
        tmp_path, "name = x\nsurface.kind = sphere\nsurface.R = big\n"
                  "fields.f = sin(\nfields.v = x1, x2\n"))
    with pytest.raises(ConfigError, match="must be a number"):
        scn.build_surface()
    with pytest.raises(ConfigError, match="bad expression"):
        scn.get_scalar_field("fields.f")
    with pytest.raises(ConfigError, match="3 comma-separated"):
        scn.get_vector_field("fields.v")


def test_missing_required_key(tmp_path):
    scn = load_scenario(write(tmp_path, "name = x\n"))
    with pytest.raises(ConfigError, match="surface.kind"):
        scn.build_surface()


def test_law_builders(tmp_path):
    scn = load_scenario(write(
        tmp_path, "name = x\npressure.kind = power\npressure.gamma = 1.4\n"
                  "flux.kind = linear\nflux.kappa = 2.0\n"))
    law = scn.build_pressure_law()
    assert law.name == "power"
    flux = scn.build_flux_law()
    assert flux.density(1.0) == pytest.approx(2.0)


def test_bundled_scenarios_load_and_validate():
    root = resources.files("surfcalc") / "scenarios"
    names = sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))
    assert "sphere_identities.cfg" in names
    assert "dilating_sphere_mass.cfg" in names
    for name in names:
        scn = load_scenario(str(root / name))
        assert scn.suites()
        scn.build_surface()
        scn.build_motion()
