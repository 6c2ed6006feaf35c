"""Scenario orchestration: verification suites, simulations, and reports.

``surfcalc run <scenario.cfg>`` executes the suites named in the scenario
(or in ``--suite``), writes a deterministic ``summary.json`` plus per-suite
CSVs into the output directory, and exits 0 exactly when every check passed
its tolerance.  Checks whose signal sits below the quadrature floor are
reported as inconclusive and do not fail the run.
"""

from __future__ import annotations

import json
import math
import os

import click
import numpy as np

from . import __version__
from .chart_geometry import QuadratureRule, default_rule, integrate, metric_at
from .config import ConfigError, load_scenario
from .evolving_surface import (FlowState, advance_flow, dilation_density,
                               integrate_grid, jacobian_rate_check,
                               moving_atlas, transport_scalar,
                               transport_theorem_check, transported_density)
from .fields import (ScalarField, as_scalar_field, as_vector_field,
                     random_scalar_field, random_vector_field)
from .fluid_models import (CoefficientFields, FluidFields, residual_conservative,
                           residual_full, thermo_quantities)
from .pde_solvers import (GridField, SurfaceGridSolver, flux_law_builtin,
                          step_barotropic_tangential, step_diffusion,
                          step_heat, write_csv)
from .surface_ops import (div_matrix_dual, identity_residuals, stress_dual)
from .variational_checks import (VariationField, check_action_variation,
                                 check_dissipation_work_variation,
                                 check_energy_representations,
                                 check_flux_variation,
                                 jacobian_variation_residual,
                                 tangential_pairing_residual,
                                 time_window_variation)

__all__ = ["main"]


# -- check bookkeeping ------------------------------------------------------------


def _row(name, value, tolerance, passed=None, inconclusive=False, **extra):
    if passed is None:
        passed = bool(value <= tolerance)
    row = {"check": name, "value": float(value), "tolerance": float(tolerance),
           "pass": bool(passed or inconclusive)}
    if inconclusive:
        row["inconclusive"] = True
    row.update(extra)
    return row


def _rule_for(scn, atlas):
    quad = scn.quadrature()
    if quad is None:
        return default_rule(atlas)
    return QuadratureRule(atlas, order=quad[0], periodic_order=quad[1])


def _random_nodes(atlas, rng, count):
    """Uniform random chart coordinates per chart."""
    out = []
    for chart in atlas.charts:
        (lo1, hi1), (lo2, hi2) = chart.domain
        out.append(np.stack([rng.uniform(lo1, hi1, count),
                             rng.uniform(lo2, hi2, count)]))
    return out


_AREA_ORACLES = {
    "sphere": lambda scn: 4.0 * math.pi * scn.get_float("surface.R", 1.0) ** 2,
    "torus": lambda scn: (4.0 * math.pi ** 2 * scn.get_float("surface.R", 2.0)
                          * scn.get_float("surface.r", 0.5)),
}


# -- suites -------------------------------------------------------------------------


def suite_verify_geometry(scn, rng):
    atlas = scn.build_surface()
    rule = _rule_for(scn, atlas)
    kind = scn.get("surface.kind")
    rows = []

    area = integrate(as_scalar_field(1.0), atlas, rule)
    if kind in _AREA_ORACLES:
        oracle = _AREA_ORACLES[kind](scn)
        rows.append(_row("area_relative_error", abs(area - oracle) / oracle,
                         scn.tolerance("area", 1e-8), area=area, oracle=oracle))

    worst_proj = 0.0
    worst_curv = 0.0
    all_nodes = _random_nodes(atlas, rng, scn.get_int("samples", 1000))
    for chart, nodes in zip(atlas.charts, all_nodes):
        st = metric_at(chart, nodes)
        # tangential projector rebuilt from the metric and tangent basis
        P_from_metric = np.einsum("ab...,ai...,bj...->ij...",
                                  st.inv_gram, st.g, st.g)
        worst_proj = max(worst_proj, float(np.max(np.abs(st.P - P_from_metric))))
        if kind == "sphere":
            R = scn.get_float("surface.R", 1.0)
            worst_curv = max(worst_curv, float(np.max(np.abs(st.H + 2.0 / R))))
    rows.append(_row("metric_projector_identity", worst_proj,
                     scn.tolerance("projection", 1e-10)))
    if kind == "sphere":
        rows.append(_row("mean_curvature_error", worst_curv,
                         scn.tolerance("curvature", 1e-8)))
    return rows, {}


def suite_verify_identities(scn, rng):
    atlas = scn.build_surface()
    motion = scn.build_motion()
    samples = scn.get_int("samples", 400)
    families = scn.get_int("families", 5)
    t_eval = scn.get_float("t", 0.3)
    tol = scn.tolerance("identity", 1e-9)

    worst = {}
    for _ in range(families):
        f = random_scalar_field(rng, time_dependent=True)
        v = random_vector_field(rng, time_dependent=True)
        phi = random_vector_field(rng)
        g = random_scalar_field(rng)
        mu = ScalarField(1.0 + random_scalar_field(rng, 0.3).expr)
        lam = ScalarField(1.0 + random_scalar_field(rng, 0.3).expr)
        for m, chart in enumerate(atlas.charts):
            nodes = _random_nodes(atlas, rng, samples)[m]
            frame = chart.frame(nodes[0], nodes[1], t_eval)
            res = identity_residuals(frame, f, v, phi, g, mu, lam)
            for key, val in res.items():
                worst[key] = max(worst.get(key, 0.0), val)
    # material-derivative commutation on the moving charts
    if motion.transform is not None:
        mov = moving_atlas(atlas, motion)
        f = random_scalar_field(rng, time_dependent=True)
        for m, chart in enumerate(mov.charts):
            nodes = _random_nodes(atlas, rng, samples)[m]
            frame = chart.frame(nodes[0], nodes[1], t_eval)
            res = identity_residuals(frame, f, motion.velocity,
                                     motion_velocity=motion.velocity)
            for key in ("transport_commutation_scalar",
                        "transport_commutation_momentum"):
                worst[key] = max(worst.get(key, 0.0), res[key])
    rows = [_row(key, val, tol) for key, val in sorted(worst.items())]
    return rows, {}


def suite_transport(scn, rng):
    atlas = scn.build_surface()
    motion = scn.build_motion()
    dt, T = scn.time_window()
    steps = max(1, round(T / dt))
    res = scn.resolution()
    rho0 = scn.get_scalar_field("fields.rho0", as_scalar_field(1.0))

    state = FlowState.create(atlas, resolution=res, rho0=rho0)
    mass0 = integrate_grid(state, values=transported_density(state))
    series = [(0.0, mass0)]
    checkpoints = max(1, steps // 10)
    cur = state
    done = 0
    while done < steps:
        n = min(checkpoints, steps - done)
        cur = advance_flow(cur, motion, dt, steps=n)
        done += n
        series.append((cur.t, integrate_grid(cur, values=transported_density(cur))))
    drift = max(abs(m - mass0) for _, m in series) / max(1.0, abs(mass0))

    jac = jacobian_rate_check(cur, motion)
    f_test = scn.get_scalar_field("fields.test", ScalarField("1 + 0.3*x3"))
    thm = transport_theorem_check(cur, motion, f_test)

    rows = [
        _row("mass_drift", drift, scn.tolerance("mass", 1e-8)),
        _row("jacobian_rate_residual", jac, scn.tolerance("jacobian", 1e-6)),
        _row("transport_theorem_residual", thm, scn.tolerance("transport", 1e-6)),
    ]
    csvs = {"transport_mass": (("t", "mass"), series)}
    return rows, csvs


def _scenario_fields(scn, rng):
    """Fluid state and coefficients from the scenario, randomized defaults."""
    fields = FluidFields(
        rho=scn.get_scalar_field(
            "fields.rho", ScalarField(2.0 + random_scalar_field(rng, 0.2).expr)),
        v=scn.get_vector_field("fields.v", random_vector_field(
            rng, time_dependent=True)),
        sigma=scn.get_scalar_field("fields.sigma", random_scalar_field(rng)),
        e=scn.get_scalar_field(
            "fields.e", ScalarField(1.0 + random_scalar_field(rng, 0.3).expr)),
        theta=scn.get_scalar_field(
            "fields.theta", ScalarField(2.0 + random_scalar_field(rng, 0.3).expr)),
        C=scn.get_scalar_field("fields.C", random_scalar_field(rng)),
    )
    coeffs = CoefficientFields(
        mu=scn.get_scalar_field("coeffs.mu", as_scalar_field(1.0)),
        lam=scn.get_scalar_field("coeffs.lam", as_scalar_field(0.5)),
        kappa=scn.get_scalar_field("coeffs.kappa", as_scalar_field(1.0)),
        nu=scn.get_scalar_field("coeffs.nu", as_scalar_field(1.0)),
        F=scn.get_vector_field("coeffs.F", random_vector_field(rng)),
        Q_theta=scn.get_scalar_field("coeffs.Q_theta", random_scalar_field(rng)),
        Q_C=scn.get_scalar_field("coeffs.Q_C", random_scalar_field(rng)),
    )
    return fields, coeffs


def suite_residuals(scn, rng):
    """Structural consistency of the residual evaluators on arbitrary fields:
    the conservative-form residuals must be exact combinations of the
    advective-form ones, and entropy production must be nonnegative."""
    atlas = scn.build_surface()
    samples = scn.get_int("samples", 300)
    t_eval = scn.get_float("t", 0.3)
    tol = scn.tolerance("equivalence", 1e-9)
    fields, coeffs = _scenario_fields(scn, rng)

    worst = {"mass": 0.0, "momentum": 0.0, "energy": 0.0, "concentration": 0.0}
    production_min = np.inf
    for m, chart in enumerate(atlas.charts):
        nodes = _random_nodes(atlas, rng, samples)[m]
        frame = chart.frame(nodes[0], nodes[1], t_eval)
        st = frame.metric()
        full = residual_full(fields, coeffs, frame)
        cons = residual_conservative(fields, coeffs, frame)
        vval = fields.v.value(st.x, t_eval)
        ke = 0.5 * np.einsum("i...,i...->...", vval, vval)
        evals = fields.e.value(st.x, t_eval)
        worst["mass"] = max(worst["mass"], float(np.max(np.abs(
            cons["mass"] - full["mass"]))))
        worst["momentum"] = max(worst["momentum"], float(np.max(np.abs(
            cons["momentum_vec"] - (full["momentum_vec"]
                                    + vval * full["mass"])))))
        worst["energy"] = max(worst["energy"], float(np.max(np.abs(
            cons["energy"] - ((ke + evals) * full["mass"]
                              + np.einsum("i...,i...->...", vval,
                                          full["momentum_vec"])
                              + full["energy"])))))
        worst["concentration"] = max(worst["concentration"], float(np.max(
            np.abs(cons["concentration"] - full["concentration"]))))
        thermo = thermo_quantities(fields, coeffs, frame)
        production_min = min(production_min,
                             float(np.min(thermo["entropy_production"])))

    rows = [_row(f"conservative_equivalence_{k}", v, tol)
            for k, v in sorted(worst.items())]
    rows.append(_row("entropy_production_min", -production_min,
                     scn.tolerance("entropy", 1e-12),
                     production_min=production_min))
    return rows, {}


def suite_simulate_heat(scn, rng):
    atlas = scn.build_surface()
    res = scn.resolution("resolution", (32, 64))
    dt, T = scn.time_window()
    flux = scn.build_flux_law() or flux_law_builtin("linear")
    coeffs = CoefficientFields(F=("0", "0", "0"), Q_theta=0.0)
    solver = SurfaceGridSolver(atlas, res)
    xs = solver.positions(0.0)
    field = GridField([x[2].copy() for x in xs], 0.0)
    steps = max(1, round(T / dt))
    series = []
    for k in range(steps):
        field = step_heat(solver, field, coeffs, flux, dt)
        if (k + 1) % max(1, steps // 10) == 0 or k == steps - 1:
            exact = [math.exp(-2.0 * field.t) * x[2] for x in xs]
            err = max(float(np.max(np.abs(field.values[m] - exact[m])))
                      for m in range(len(xs)))
            rel = err / max(abs(math.exp(-2.0 * field.t)), 1e-30)
            series.append((field.t, rel))
    rows = [_row("heat_decay_relative_error", series[-1][1],
                 scn.tolerance("heat_decay", 1e-3))]
    return rows, {"heat_error": (("t", "relative_error"), series)}


def suite_simulate_diffusion(scn, rng):
    atlas = scn.build_surface()
    res = scn.resolution("resolution", (32, 64))
    dt, T = scn.time_window()
    flux = scn.build_flux_law() or flux_law_builtin("linear")
    coeffs = CoefficientFields(Q_C=scn.get_scalar_field(
        "coeffs.Q_C", as_scalar_field(1.0)))
    solver = SurfaceGridSolver(atlas, res)
    xs = solver.positions(0.0)
    field = GridField([1.0 + 0.5 * x[2] for x in xs], 0.0)
    mass0 = solver.integrate(field.values, 0.0)
    steps = max(1, round(T / dt))
    series = [(0.0, mass0, 0.0)]
    for k in range(steps):
        field = step_diffusion(solver, field, coeffs, flux, dt)
        if (k + 1) % max(1, steps // 10) == 0 or k == steps - 1:
            mass = solver.integrate(field.values, field.t)
            exact = [1.0 + field.t + 0.5 * math.exp(-2.0 * field.t) * x[2]
                     for x in xs]
            err = max(float(np.max(np.abs(field.values[m] - exact[m])))
                      for m in range(len(xs)))
            series.append((field.t, mass, err))
    budget = abs(series[-1][1] - mass0 - 4.0 * math.pi * field.t)
    rows = [
        _row("species_budget_error", budget / max(1.0, abs(mass0)),
             scn.tolerance("budget", 1e-6)),
        _row("diffusion_relative_error", series[-1][2],
             scn.tolerance("diffusion", 1e-3)),
    ]
    return rows, {"diffusion_mass": (("t", "mass", "max_error"), series)}


def suite_simulate_barotropic(scn, rng):
    atlas = scn.build_surface()
    res = scn.resolution("resolution", (32, 64))
    dt, T = scn.time_window()
    law = scn.build_pressure_law()
    if law is None:
        raise ConfigError(f"{scn.source}: simulate-barotropic needs pressure.kind")
    solver = SurfaceGridSolver(atlas, res)
    states = solver.metric(0.0)
    vals = []
    rho0 = scn.get_scalar_field("fields.rho0", ScalarField("2 + 0.2*x3"))
    v0 = scn.get_vector_field("fields.v0", as_vector_field(("-x2", "x1", "0")))
    for m, st in enumerate(states):
        x = solver.interior(m, st.x)
        P = solver.interior(m, st.P)
        vt = np.einsum("ij...,j...->i...", P, v0.value(x, 0.0))
        vals.append(np.concatenate([rho0.value(x, 0.0)[None], vt]))
    field = GridField(vals, 0.0)
    mass0 = solver.integrate([v[0] for v in field.values], 0.0)
    steps = max(1, round(T / dt))
    series = [(0.0, mass0)]
    for k in range(steps):
        field = step_barotropic_tangential(solver, field, law, dt)
        if (k + 1) % max(1, steps // 10) == 0 or k == steps - 1:
            series.append((field.t,
                           solver.integrate([v[0] for v in field.values],
                                            field.t)))
    drift = max(abs(m - mass0) for _, m in series) / max(1.0, abs(mass0))
    rows = [_row("barotropic_mass_drift", drift, scn.tolerance("mass", 1e-8))]
    return rows, {"barotropic_mass": (("t", "mass"), series)}


def suite_check_variations(scn, rng):
    atlas = scn.build_surface()
    motion = scn.build_motion()
    rule = _rule_for(scn, atlas)
    law = scn.build_pressure_law()
    flux = scn.build_flux_law() or flux_law_builtin("quadratic")
    T = scn.get_float("T", 0.4)
    nt = scn.get_int("nt", 20)
    eps = scn.eps_ladder()

    zdir = scn.get_vector_field("variation.z", as_vector_field(
        ("0.9*x3*x1 + 0.6*x1", "-0.6*x1 + 0.3*x3", "0.6*x3 + 0.3*x2*x2")))
    var = time_window_variation(zdir, T)
    phi = VariationField(scn.get_vector_field("variation.phi", as_vector_field(
        ("0.4*x3 + x1*x2", "cos(x2)", "0.2 - x1"))))

    rows = []
    rows.append(_row("variation_initial_residual",
                     var.initial_residual(atlas, rule),
                     scn.tolerance("initial", 1e-12)))

    rep = check_action_variation(atlas, motion, var, rho0=1.0, T=T, law=law,
                                 eps_list=eps, rule=rule, nt=nt)
    slope = rep["slope"]
    rows.append(_row("action_variation_slope",
                     abs((slope if slope is not None else 2.0) - 2.0),
                     scn.tolerance("slope", 0.1),
                     inconclusive=rep["floor_limited"], slope=slope))
    rows.append(_row("action_variation_extrapolated",
                     rep["extrapolated_error"],
                     scn.tolerance("extrapolated", 1e-6),
                     analytic=rep["analytic"]))

    fields, _ = _scenario_fields(scn, rng)
    drep = check_dissipation_work_variation(
        fields.v, fields.sigma, 1.0, 0.5, fields.rho,
        scn.get_vector_field("coeffs.F", as_vector_field(("0.1", "0", "-0.2"))),
        phi, atlas, rule=rule, t=scn.get_float("t", 0.0))
    rows.append(_row("dissipation_work_variation", drep["error"],
                     scn.tolerance("dissipation", 1e-7)))

    lin = check_flux_variation("x3", flux_law_builtin("linear"), "0.5*x1 + x2*x3",
                               atlas, rule=rule)
    rows.append(_row("flux_variation_linear", max(lin["errors"]),
                     scn.tolerance("flux_linear", 1e-8)))
    rows.append(_row("flux_kernel_gradient", lin["kernel_gradient_residual"],
                     scn.tolerance("kernel", 1e-10)))
    nl = check_flux_variation("x1 + 2*x3", flux, "0.5*x1 + x2*x3",
                              atlas, rule=rule, eps_list=eps)
    nslope = nl["slope"]
    rows.append(_row("flux_variation_nonlinear_slope",
                     abs((nslope if nslope is not None else 2.0) - 2.0),
                     scn.tolerance("slope", 0.1),
                     inconclusive=nl["floor_limited"], slope=nslope))

    rows.append(_row("jacobian_variation_identity",
                     jacobian_variation_residual(atlas, motion, var,
                                                 t=0.5 * T),
                     scn.tolerance("jacobian_variation", 1e-7)))
    rows.append(_row("tangential_pairing", tangential_pairing_residual(
        fields.v, zdir, atlas, rule), scn.tolerance("pairing", 1e-10)))
    return rows, {}


def suite_check_representations(scn, rng):
    atlas = scn.build_surface()
    motion = scn.build_motion()
    if motion.name not in ("dilation", "static"):
        raise ConfigError(f"{scn.source}: check-representations needs the "
                          "dilation or static motion (the exact transported "
                          "density must be available in closed form)")
    rule = _rule_for(scn, atlas)
    law = scn.build_pressure_law()
    flux = scn.build_flux_law()
    t_eval = scn.get_float("t", 0.3)
    draws = scn.get_int("draws", 3)
    tol = scn.tolerance("representation", 1e-7)

    worst = {}
    for _ in range(draws):
        rho0 = ScalarField(2.0 + random_scalar_field(rng, 0.2).expr)
        rho = (dilation_density(rho0) if motion.name == "dilation" else rho0)
        fields = FluidFields(
            rho=rho, v=motion.velocity,
            sigma=random_scalar_field(rng),
            e=ScalarField(1.0 + random_scalar_field(rng, 0.3).expr),
            theta=random_scalar_field(rng), C=random_scalar_field(rng))
        coeffs = CoefficientFields(mu=1.0, lam=0.5, kappa=1.2, nu=0.8,
                                   F=random_vector_field(rng))
        rep = check_energy_representations(atlas, motion, fields, coeffs,
                                           t=t_eval, law=law, flux=flux,
                                           rule=rule)
        for name, pair in rep.items():
            worst[name] = max(worst.get(name, 0.0), pair["rel_mismatch"])
    rows = [_row(f"representation_{name}", val, tol)
            for name, val in sorted(worst.items())]
    return rows, {}


def suite_conservation_report(scn, rng):
    """Conserved-integral drifts along an exactly transported state, plus the
    closed-surface vanishing of the integrated stress divergence."""
    atlas = scn.build_surface()
    motion = scn.build_motion()
    dt, T = scn.time_window()
    res = scn.resolution()
    steps = max(1, round(T / dt))
    rho0 = scn.get_scalar_field("fields.rho0", ScalarField("2 + 0.3*x3"))
    C0 = scn.get_scalar_field("fields.C0", ScalarField("1 + 0.2*x1"))
    e0 = scn.get_float("fields.e0", 0.7)
    vel = motion.velocity

    state = FlowState.create(atlas, resolution=res, rho0=rho0)
    rows_ts = []
    snaps = []
    cur = state
    ncheck = min(10, steps)
    for k in range(ncheck + 1):
        if k > 0:
            n = steps // ncheck + (1 if k <= steps % ncheck else 0)
            cur = advance_flow(cur, motion, dt, steps=n)
        rho = transported_density(cur)
        conc = transport_scalar(cur, C0)
        vv = [vel.value(x, cur.t) for x in cur.x]
        mass = integrate_grid(cur, values=rho)
        mom = [integrate_grid(cur, values=[r * v[i] for r, v in zip(rho, vv)])
               for i in range(3)]
        eA = integrate_grid(cur, values=[
            r * (0.5 * np.einsum("i...,i...->...", v, v) + e0)
            for r, v in zip(rho, vv)])
        cint = integrate_grid(cur, values=conc)
        ang = []
        for i in range(3):
            j, l = (i + 1) % 3, (i + 2) % 3
            ang.append(integrate_grid(cur, values=[
                x[j] * r * v[l] - x[l] * r * v[j]
                for x, r, v in zip(cur.x, rho, vv)]))
        rows_ts.append((cur.t, mass, *mom, eA, cint, *ang))
        snaps.append(rows_ts[-1])

    arr = np.asarray(rows_ts)
    names = ("mass", "momentum_x", "momentum_y", "momentum_z",
             "energy", "concentration", "angular_x", "angular_y", "angular_z")
    tol = scn.tolerance("drift", 1e-6)
    rows = []
    for k, name in enumerate(names):
        col = arr[:, 1 + k]
        drift = float(np.max(np.abs(col - col[0]))) / max(1.0,
                                                          float(np.max(np.abs(col))))
        rows.append(_row(f"drift_{name}", drift, tol))

    # integrated surface-stress divergence vanishes on a closed surface
    rule = _rule_for(scn, atlas)
    worst = 0.0
    for _ in range(scn.get_int("stress_draws", 3)):
        v = random_vector_field(rng)
        sig = random_scalar_field(rng)
        total = np.zeros(3)
        for chart, (X, w, psi) in zip(atlas.charts, rule.nodes):
            frame = chart.frame(X[0], X[1], 0.0)
            st = frame.metric()
            S = stress_dual(v, sig, 1.0, 0.5, frame)[0]
            divS = div_matrix_dual(S, frame)
            total += np.sum(w * psi * st.sqrtJ
                            * np.stack([np.broadcast_to(r, frame.shape)
                                        for r in divS]), axis=1)
        worst = max(worst, float(np.max(np.abs(total))))
    rows.append(_row("stress_divergence_integral", worst,
                     scn.tolerance("stress", 1e-7)))

    header = ("t",) + names
    return rows, {"conservation": (header, rows_ts)}


_SUITE_FUNCS = {
    "verify-geometry": suite_verify_geometry,
    "verify-identities": suite_verify_identities,
    "transport": suite_transport,
    "residuals": suite_residuals,
    "simulate-heat": suite_simulate_heat,
    "simulate-diffusion": suite_simulate_diffusion,
    "simulate-barotropic": suite_simulate_barotropic,
    "check-variations": suite_check_variations,
    "check-representations": suite_check_representations,
    "conservation-report": suite_conservation_report,
}


# -- CLI ----------------------------------------------------------------------------


@click.group()
def main():
    """Verification suites and simulations on evolving closed surfaces."""


@main.command("run")
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--suite", "suite_override", default=None,
              help="Run only this suite (overrides the scenario).")
@click.option("--out", "out_dir", default=None,
              help="Output directory (default: <scenario name>_out).")
def run(scenario_file, suite_override, out_dir):
    """Execute the suites of a scenario file; exit 0 iff all checks pass."""
    try:
        scn = load_scenario(scenario_file)
        suites = [suite_override] if suite_override else scn.suites()
        for s in suites:
            if s not in _SUITE_FUNCS:
                raise ConfigError(f"unknown suite {s!r}; "
                                  f"known: {sorted(_SUITE_FUNCS)}")
    except ConfigError as exc:
        raise click.ClickException(str(exc))

    out_dir = out_dir or scn.get("out", f"{scn.name}_out")
    os.makedirs(out_dir, exist_ok=True)

    summary = {"scenario": scn.name, "seed": scn.seed(), "suites": {}}
    all_pass = True
    for s in suites:
        rng = np.random.default_rng(scn.seed())
        try:
            rows, csvs = _SUITE_FUNCS[s](scn, rng)
        except ConfigError as exc:
            raise click.ClickException(str(exc))
        except Exception as exc:
            raise click.ClickException(
                f"scenario {scn.name!r}, suite {s!r}: "
                f"{type(exc).__name__}: {exc}")
        ok = all(r["pass"] for r in rows)
        all_pass = all_pass and ok
        summary["suites"][s] = {"pass": ok, "checks": rows}
        _write_check_csv(os.path.join(out_dir, f"{s}.csv"), rows)
        for name, (header, data) in csvs.items():
            write_csv(os.path.join(out_dir, f"{name}.csv"), header, data)
        status = "PASS" if ok else "FAIL"
        click.echo(f"[{status}] {s}: {len(rows)} checks")
        for r in rows:
            mark = "ok" if r["pass"] else "FAIL"
            note = " (inconclusive)" if r.get("inconclusive") else ""
            click.echo(f"    {mark:4s} {r['check']}: {r['value']:.3e} "
                       f"<= {r['tolerance']:.1e}{note}")

    summary["pass"] = all_pass
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    raise SystemExit(0 if all_pass else 1)


def _write_check_csv(path, rows):
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(("check", "value", "tolerance", "pass"))
        for r in rows:
            wr.writerow((r["check"], repr(r["value"]),
                         repr(r["tolerance"]), r["pass"]))


@main.command("list-builtins")
def list_builtins():
    """Print the built-in surfaces, motions, and closure laws."""
    click.echo("surfaces:")
    click.echo("  sphere(R=1.0)       two overlapping band charts")
    click.echo("  torus(R=2.0, r=0.5) one doubly periodic chart")
    click.echo("  plane(extent=1.0)   single flat test chart")
    click.echo("motions:")
    click.echo("  static")
    click.echo("  translation(c=(0.3, -0.2, 0.1))")
    click.echo("  rotation(rate=0.7)")
    click.echo("  dilation            v = x/(1+t)")
    click.echo("pressure laws:")
    click.echo("  linear(a=1.0)       p = a*r")
    click.echo("  quadratic(a=1.0)    p = a*r^2")
    click.echo("  power(a=1.0, gamma=1.4)")
    click.echo("flux laws:")
    click.echo("  linear(kappa=1.0)   e_J = kappa*z")
    click.echo("  quadratic           e_J = z^2")
    click.echo("suites:")
    for name in sorted(_SUITE_FUNCS):
        click.echo(f"  {name}")


@main.command("version")
def version():
    """Print the package version."""
    click.echo(__version__)


if __name__ == "__main__":
    main()
