import math

import numpy as np
import pytest

from surfcalc.chart_geometry import QuadratureRule
from surfcalc.evolving_surface import motion_builtin
from surfcalc.fields import ScalarField, VectorField, random_scalar_field, \
    random_vector_field
from surfcalc.fluid_models import pressure_law_builtin
from surfcalc.pde_solvers import flux_law_builtin
from surfcalc.variational_checks import (DegenerateGradient, VariationField,
                                         action_integral,
                                         check_action_variation,
                                         check_dissipation_work_variation,
                                         check_flux_variation,
                                         jacobian_variation_residual,
                                         tangential_pairing_residual,
                                         time_window_variation, varied_atlas)


def test_time_window_variation_vanishes_at_endpoints(sphere, sphere_rule_fast):
    var = time_window_variation(("x1", "-x3", "0.5"), T=0.4)
    assert var.initial_residual(sphere, sphere_rule_fast, t0=0.0) <= 1e-14
    assert var.initial_residual(sphere, sphere_rule_fast, t0=0.4) <= 1e-13
    mid = var.initial_residual(sphere, sphere_rule_fast, t0=0.2)
    assert mid > 1e-3


def test_varied_atlas_displaces_positions(sphere):
    var = VariationField(("x3", "0", "x1"))
    eps = 1e-2
    moved = varied_atlas(sphere, var, eps)
    chart0, chartV = sphere.charts[0], moved.charts[0]
    X1, X2 = np.array([0.3]), np.array([1.2])
    base = chart0.position(X1, X2, 0.0)
    shifted = chartV.position(X1, X2, 0.0)
    z = np.stack([base[2], np.zeros_like(base[0]), base[0]])
    assert np.allclose(shifted, base + eps * z)


def test_translation_action_oracle(torus, torus_rule):
    # constant speed, invariant area element: A = -|c|^2/2 * area * T
    motion = motion_builtin("translation", c=(0.3, -0.2, 0.1))
    T = 0.5
    a = action_integral(torus, motion, 1.0, T, rule=torus_rule, nt=16)
    area = 4 * math.pi ** 2 * 2.0 * 0.5
    exact = -0.5 * (0.3 ** 2 + 0.2 ** 2 + 0.1 ** 2) * area * T
    assert abs(a - exact) / abs(exact) <= 1e-10


def test_static_action_is_zero(torus, torus_rule):
    a = action_integral(torus, motion_builtin("static"), 1.0, 0.5,
                        rule=torus_rule, nt=8)
    assert abs(a) <= 1e-12


def test_dilating_sphere_barotropic_action_oracle(sphere, sphere_rule):
    """Closed-form action of the dilating unit sphere with unit initial
    density and a quadratic pressure law:
    -4 pi (T/2 + 1/(1+T) - 1)."""
    motion = motion_builtin("dilation")
    law = pressure_law_builtin("quadratic")
    T = 0.4
    a = action_integral(sphere, motion, 1.0, T, law=law,
                        rule=sphere_rule, nt=64)
    exact = -4 * math.pi * (T / 2 + 1.0 / (1 + T) - 1.0)
    assert abs(a - exact) / abs(exact) <= 1e-8


def test_action_variation_ladder_on_torus(torus, torus_rule):
    motion = motion_builtin("dilation")
    law = pressure_law_builtin("quadratic")
    T = 0.4
    var = time_window_variation(
        ("0.9*x3*x1 + 0.6*x1", "-0.6*x1 + 0.3*x3", "0.6*x3 + 0.3*x2*x2"), T)
    rep = check_action_variation(torus, motion, var, rho0=1.0, T=T, law=law,
                                 rule=torus_rule, nt=20)
    assert not rep["floor_limited"]
    assert abs(rep["slope"] - 2.0) <= 0.1
    assert rep["extrapolated_error"] <= 1e-6
    # errors decrease along the ladder
    assert rep["errors"][0] > rep["errors"][-1]


def test_dissipation_work_variation(sphere, sphere_rule, rng):
    v = VectorField(("x2*x3", "sin(x1)", "x1*x1 - 0.3*x2"))
    phi = VariationField(("0.4*x3 + x1*x2", "cos(x2)", "0.2 - x1"))
    rep = check_dissipation_work_variation(
        v, "x3*x1 + 1", 1.0, 0.5, "2 + 0.5*x3",
        ("0.1", "-0.2*x3", "0.3*x2"), phi, sphere, rule=sphere_rule)
    assert rep["error"] <= 1e-7


def test_pressure_only_work_variation(sphere, sphere_rule):
    """With no viscosity, unit tension, and no force, the variation reduces
    to the curvature term: checked at tight tolerance on the dense rule."""
    phi = VariationField(("0.4*x3 + x1*x2", "cos(x2)", "0.2 - x1"))
    rep = check_dissipation_work_variation(
        ("0", "0", "0"), 1.0, 0.0, 0.0, 1.0, ("0", "0", "0"),
        phi, sphere, rule=sphere_rule)
    assert rep["error"] <= 1e-8


def test_tangential_variation(sphere, sphere_rule):
    phi = VariationField(("-x2", "x1", "0"), tangential=True)
    rep = check_dissipation_work_variation(
        ("x2*x3", "sin(x1)", "x1*x1"), "x3", 1.0, 0.5, 1.0,
        ("0.1", "0", "0"), phi, sphere, rule=sphere_rule)
    assert rep["tangency_residual"] <= 1e-12
    assert rep["error"] <= 1e-7


def test_flux_variation_linear_is_exact(torus, torus_rule):
    rep = check_flux_variation("x3", flux_law_builtin("linear"),
                               "0.5*x1 + x2*x3", torus, rule=torus_rule)
    assert rep["linear"]
    assert max(rep["errors"]) <= 1e-8
    assert rep["kernel_gradient_residual"] <= 1e-10


def test_flux_variation_nonlinear_slope(torus, torus_rule):
    rep = check_flux_variation("x1 + 2*x3", flux_law_builtin("quadratic"),
                               "0.5*x1 + x2*x3", torus, rule=torus_rule)
    assert not rep["linear"]
    assert abs(rep["slope"] - 2.0) <= 0.1
    assert rep["extrapolated_error"] <= 1e-6


def test_flux_variation_degenerate_gradient(torus, torus_rule):
    with pytest.raises(DegenerateGradient):
        check_flux_variation(1.0, flux_law_builtin("quadratic"), "x1",
                             torus, rule=torus_rule)


def test_jacobian_variation_identity(sphere):
    motion = motion_builtin("dilation")
    var = time_window_variation(
        ("0.9*x3*x1 + 0.6*x1", "-0.6*x1 + 0.3*x3", "0.6*x3 + 0.3*x2*x2"), 0.4)
    res = jacobian_variation_residual(sphere, motion, var, t=0.2)
    assert res <= 1e-7


def test_tangential_pairing(sphere, sphere_rule_fast, rng):
    f = random_vector_field(rng)
    z = random_vector_field(rng)
    assert tangential_pairing_residual(f, z, sphere,
                                       sphere_rule_fast) <= 1e-10
