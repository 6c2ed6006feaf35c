import math

import numpy as np
import pytest

from surfcalc.fluid_models import CoefficientFields, pressure_law_builtin
from surfcalc.pde_solvers import (FluxLaw, GridField, StabilityViolation,
                                  SurfaceGridSolver, flux_law_builtin,
                                  step_barotropic_tangential, step_diffusion,
                                  step_heat, write_csv)


@pytest.fixture(scope="module")
def solver(sphere):
    return SurfaceGridSolver(sphere, resolution=(32, 64))


def test_flux_laws():
    z = np.linspace(0.1, 3.0, 20)
    lin = flux_law_builtin("linear", kappa=2.0)
    assert np.allclose(lin.density(z), 2.0 * z)
    assert np.allclose(lin.deriv(z), 2.0)
    quad = flux_law_builtin("quadratic")
    assert np.allclose(quad.deriv(z), 2.0 * z)
    assert FluxLaw("z^2 + 0.5*z").fd_consistency(z) <= 1e-7
    with pytest.raises(KeyError):
        flux_law_builtin("cubic")


def test_solver_integrates_area(solver):
    ones = [np.ones(solver.resolution) for _ in solver.charts]
    area = solver.integrate(ones, 0.0)
    assert abs(area - 4 * math.pi) / (4 * math.pi) <= 1e-5


def test_stability_guard(solver):
    bound = solver.check_parabolic_dt(1e-5, 1.0)
    assert bound > 1e-5
    with pytest.raises(StabilityViolation):
        solver.check_parabolic_dt(10.0 * bound, 1.0)


def test_heat_decay_short(solver):
    # theta = exp(-2 t) x3 solves the surface heat equation on the unit sphere
    coeffs = CoefficientFields(F=("0", "0", "0"), Q_theta=0.0)
    flux = flux_law_builtin("linear")
    xs = solver.positions(0.0)
    field = GridField([x[2].copy() for x in xs], 0.0)
    dt = 5e-4
    for _ in range(100):
        field = step_heat(solver, field, coeffs, flux, dt)
    scale = math.exp(-2.0 * field.t)
    err = max(np.max(np.abs(field.values[m] - scale * xs[m][2]))
              for m in range(len(xs)))
    assert err / scale <= 1e-3


def test_diffusion_budget_and_profile(solver):
    # unit source: C = 1 + t + 0.5 exp(-2 t) x3, total grows by 4 pi t
    coeffs = CoefficientFields(Q_C=1.0)
    flux = flux_law_builtin("linear")
    xs = solver.positions(0.0)
    field = GridField([1.0 + 0.5 * x[2] for x in xs], 0.0)
    mass0 = solver.integrate(field.values, 0.0)
    dt = 5e-4
    for _ in range(100):
        field = step_diffusion(solver, field, coeffs, flux, dt)
    mass = solver.integrate(field.values, field.t)
    assert abs(mass - mass0 - 4 * math.pi * field.t) <= 5e-6
    exact = [1.0 + field.t + 0.5 * math.exp(-2 * field.t) * x[2] for x in xs]
    err = max(np.max(np.abs(field.values[m] - exact[m]))
              for m in range(len(xs)))
    assert err <= 1e-3


def test_barotropic_step_conserves_mass(solver):
    law = pressure_law_builtin("quadratic")
    states = solver.metric(0.0)
    vals = []
    for m, st in enumerate(states):
        x = solver.interior(m, st.x)
        P = solver.interior(m, st.P)
        v0 = np.stack([-0.3 * x[1], 0.3 * x[0], np.zeros_like(x[0])])
        vt = np.einsum("ij...,j...->i...", P, v0)
        rho = 2.0 + 0.2 * x[2]
        vals.append(np.concatenate([rho[None], vt]))
    field = GridField(vals, 0.0)
    mass0 = solver.integrate([v[0] for v in field.values], 0.0)
    for _ in range(50):
        field = step_barotropic_tangential(solver, field, law, 2e-4)
    mass = solver.integrate([v[0] for v in field.values], field.t)
    assert abs(mass - mass0) / abs(mass0) <= 1e-6
    # velocity stays tangential (re-projected every stage)
    for m, st in enumerate(solver.metric(field.t)):
        n = solver.interior(m, st.n)
        vn = np.einsum("i...,i...->...", field.values[m][1:], n)
        assert np.max(np.abs(vn)) <= 1e-12


def test_write_csv(tmp_path):
    path = tmp_path / "series.csv"
    write_csv(path, ("t", "value"), [(0.0, 1.0), (0.5, 1.0 / 3.0)])
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,value"
    assert float(lines[2].split(",")[1]) == 1.0 / 3.0
