"""Flow-map evolution, Jacobian dynamics, and exact scalar transport.

Material points are carried on fixed reference grids (one uniform grid per
chart) by classical RK4 on ``dx/dt = v(x, t)``.  The area Jacobian is
recomputed from the advanced grid by 4th-order finite differences in the
chart coordinates, so it stays consistent with the grid quadrature.  The
continuity equation is then solved exactly through the conserved-variable
representation ``f = (f0 * sqrtJ0 + accumulated source) / sqrtJ``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .chart_geometry import Chart, ChartAtlas
from .expressions import parse_expr
from .fields import as_scalar_field, as_vector_field

__all__ = [
    "JacobianCollapse",
    "MotionLaw",
    "dilation_density",
    "motion_builtin",
    "moving_atlas",
    "FlowState",
    "GridGeometry",
    "advance_flow",
    "fd_derivative",
    "jacobian_rate_check",
    "transport_scalar",
    "transported_density",
    "transport_theorem_check",
    "integrate_grid",
    "integrate_grid_vector",
]

_EPS_J = 1e-14
_CHART_VARS = ("X1", "X2", "t")


class JacobianCollapse(RuntimeError):
    """The area Jacobian became non-positive: the surface degenerated."""


# -- motions -------------------------------------------------------------------


class MotionLaw:
    """A prescribed total velocity, with an exact moving-chart builder when
    the motion has a closed form (translation, rotation, dilation, static).

    ``tangential_part`` optionally carries the tangential component ``u`` of
    a decomposed velocity ``v = u + w``.
    """

    def __init__(self, velocity, kind="prescribed-analytic", transform=None,
                 name="custom", tangential_part=None):
        self.velocity = as_vector_field(velocity)
        self.kind = kind
        self.transform = transform  # param expr list -> moved param expr list
        self.name = name
        self.tangential_part = (as_vector_field(tangential_part)
                                if tangential_part is not None else None)

    def moving_chart(self, chart):
        """Exact time-dependent version of ``chart`` under this motion."""
        if self.transform is None:
            return None
        return Chart(self.transform(chart.param), chart.domain, chart.periodic,
                     chart.orientation, chart.pou_bump, chart.invert,
                     chart.name + "+" + self.name)


def _static_motion():
    return MotionLaw(["0", "0", "0"], kind="rigid", transform=lambda p: list(p),
                     name="static")


def _translation_motion(c=(0.3, -0.2, 0.1)):
    c = [float(ci) for ci in c]
    vel = [str(ci) for ci in c]

    def transform(param):
        return [p + ci * parse_expr("t", _CHART_VARS) for p, ci in zip(param, c)]

    return MotionLaw(vel, kind="rigid", transform=transform, name="translation")


def _rotation_motion(rate=0.7):
    w = float(rate)
    vel = [f"-{w}*x2", f"{w}*x1", "0"]
    cw = parse_expr(f"cos({w}*t)", _CHART_VARS)
    sw = parse_expr(f"sin({w}*t)", _CHART_VARS)

    def transform(param):
        p0, p1, p2 = param
        return [cw * p0 - sw * p1, sw * p0 + cw * p1, p2]

    return MotionLaw(vel, kind="rigid", transform=transform, name="rotation")


def _dilation_motion():
    vel = ["x1/(1+t)", "x2/(1+t)", "x3/(1+t)"]
    scale = parse_expr("1+t", _CHART_VARS)

    def transform(param):
        return [scale * p for p in param]

    return MotionLaw(vel, kind="dilation", transform=transform, name="dilation")


def dilation_density(rho0):
    """Exact transported density of the canonical dilation flow.

    For ``v = x/(1+t)`` the area element scales by ``(1+t)^2`` and material
    points by ``(1+t)``, so the continuity equation is solved in closed form
    by ``rho(x, t) = rho0(x/(1+t)) / (1+t)^2``.  Needs an expression-backed
    initial density.
    """
    from .expressions import substitute
    from .fields import ScalarField, as_scalar_field

    rho0 = as_scalar_field(rho0)
    if not isinstance(rho0, ScalarField):
        raise TypeError("dilation_density needs an expression-backed density")
    vars_t = ("x1", "x2", "x3", "t")
    expr = rho0.expr
    for name in ("x1", "x2", "x3"):
        expr = substitute(expr, name, parse_expr(f"{name}/(1+t)", vars_t))
    inv = parse_expr("1/(1+t)", vars_t)
    return ScalarField(expr * inv * inv)


_MOTIONS = {
    "static": _static_motion,
    "translation": _translation_motion,
    "rotation": _rotation_motion,
    "dilation": _dilation_motion,
}


def motion_builtin(name, **params):
    """Look up a built-in motion: static, translation, rotation, dilation."""
    if name not in _MOTIONS:
        raise KeyError(f"unknown motion {name!r}; known: {sorted(_MOTIONS)}")
    return _MOTIONS[name](**params)


def moving_atlas(atlas, motion):
    """Atlas whose charts carry the exact closed-form motion (if available)."""
    charts = [motion.moving_chart(ch) for ch in atlas.charts]
    if any(c is None for c in charts):
        raise ValueError(f"motion {motion.name!r} has no closed-form chart map")
    return ChartAtlas(charts, name=atlas.name + "+" + motion.name)


# -- finite differences on uniform chart grids --------------------------------

# 4th-order first derivative: central interior, one-sided at bounded edges.
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def fd_derivative(arr, axis, h, periodic):
    """4th-order first derivative of nodal data along ``axis`` (spacing h)."""
    a = np.moveaxis(np.asarray(arr, dtype=float), axis, 0)
    out = np.empty_like(a)
    if periodic:
        out[:] = (8.0 * (np.roll(a, -1, 0) - np.roll(a, 1, 0))
                  - (np.roll(a, -2, 0) - np.roll(a, 2, 0))) / (12.0 * h)
    else:
        out[2:-2] = (8.0 * (a[3:-1] - a[1:-3]) - (a[4:] - a[:-4])) / (12.0 * h)
        out[0] = np.tensordot(_EDGE0, a[:5], axes=(0, 0)) / h
        out[1] = np.tensordot(_EDGE1, a[:5], axes=(0, 0)) / h
        out[-1] = -np.tensordot(_EDGE0, a[-5:][::-1], axes=(0, 0)) / h
        out[-2] = -np.tensordot(_EDGE1, a[-5:][::-1], axes=(0, 0)) / h
    return np.moveaxis(out, 0, axis)


@dataclass
class GridGeometry:
    """Numeric metric data derived from nodal positions by FD in the chart."""

    g: np.ndarray          # (2, 3, n1, n2) tangent basis
    gram: np.ndarray       # (2, 2, n1, n2)
    inv_gram: np.ndarray   # (2, 2, n1, n2)
    J: np.ndarray          # (n1, n2)
    sqrtJ: np.ndarray      # (n1, n2)
    n: np.ndarray          # (3, n1, n2) unit normal
    P: np.ndarray          # (3, 3, n1, n2) tangential projector


def _chart_grid(chart, shape):
    """Uniform reference grid, spacings, and trapezoid weights for a chart."""
    axes, hs, ws = [], [], []
    for (lo, hi), per, n in zip(chart.domain, chart.periodic, shape):
        if per:
            h = (hi - lo) / n
            xs = lo + h * np.arange(n)
            w = np.full(n, h)
        else:
            h = (hi - lo) / (n - 1)
            xs = lo + h * np.arange(n)
            w = np.full(n, h)
            w[0] = w[-1] = 0.5 * h
        axes.append(xs)
        hs.append(h)
        ws.append(w)
    X1, X2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    return np.stack([X1, X2]), tuple(hs), np.outer(ws[0], ws[1])


def _geometry_from_positions(x, hs, periodic, orientation):
    g = np.stack([fd_derivative(x, 1 + a, hs[a], periodic[a]) for a in range(2)])
    gram = np.einsum("ai...,bi...->ab...", g, g)
    J = gram[0, 0] * gram[1, 1] - gram[0, 1] * gram[1, 0]
    if np.any(J <= _EPS_J):
        raise JacobianCollapse("grid Jacobian non-positive")
    sqrtJ = np.sqrt(J)
    inv_gram = np.empty_like(gram)
    inv_gram[0, 0] = gram[1, 1] / J
    inv_gram[1, 1] = gram[0, 0] / J
    inv_gram[0, 1] = -gram[0, 1] / J
    inv_gram[1, 0] = -gram[1, 0] / J
    nvec = orientation * np.cross(g[0], g[1], axisa=0, axisb=0, axisc=0) / sqrtJ
    P = np.eye(3)[:, :, None, None] - nvec[:, None] * nvec[None, :]
    return GridGeometry(g=g, gram=gram, inv_gram=inv_gram, J=J, sqrtJ=sqrtJ,
                        n=nvec, P=P)


# -- flow state ----------------------------------------------------------------


@dataclass
class FlowState:
    """Material-point grids for an atlas, advanced in time by RK4.

    ``sources`` maps a name to ``(field, accumulators)`` where the
    accumulators hold per-chart values of the time integral of
    ``field * sqrtJ`` along each trajectory, advanced with the same RK4
    stages as the flow itself.
    """

    atlas: ChartAtlas
    t: float
    X: list                # per chart: (2, n1, n2) reference coordinates
    x: list                # per chart: (3, n1, n2) material positions
    hs: list               # per chart: (h1, h2)
    w: list                # per chart: (n1, n2) chart-coordinate weights
    psi: list              # per chart: (n1, n2) partition-of-unity values
    sqrtJ0: list           # per chart: (n1, n2) initial area element
    rho0_tilde: list       # per chart: (n1, n2) reference density weights
    sources: dict = field(default_factory=dict)

    @classmethod
    def create(cls, atlas, resolution=(48, 96), rho0=1.0, t0=0.0):
        rho0 = as_scalar_field(rho0)
        X, x, hs, w, psi, sJ0, r0t = [], [], [], [], [], [], []
        for m, chart in enumerate(atlas.charts):
            Xm, hsm, wm = _chart_grid(chart, resolution)
            xm = chart.position(Xm[0], Xm[1], t0)
            geo = _geometry_from_positions(xm, hsm, chart.periodic, chart.orientation)
            X.append(Xm)
            x.append(xm)
            hs.append(hsm)
            w.append(wm)
            psi.append(atlas.pou(m, Xm[0], Xm[1]))
            sJ0.append(geo.sqrtJ)
            r0t.append(rho0.value(xm, t0) * geo.sqrtJ)
        return cls(atlas=atlas, t=t0, X=X, x=x, hs=hs, w=w, psi=psi,
                   sqrtJ0=sJ0, rho0_tilde=r0t)

    def track_source(self, name, field_expr):
        """Register a source whose integral of ``F * sqrtJ`` is accumulated."""
        f = as_scalar_field(field_expr)
        self.sources[name] = (f, [np.zeros_like(s) for s in self.sqrtJ0])

    def geometry(self, m):
        """Grid-derived metric data for chart ``m`` at the current time."""
        chart = self.atlas.charts[m]
        return _geometry_from_positions(self.x[m], self.hs[m], chart.periodic,
                                        chart.orientation)

    def copy(self):
        out = copy.copy(self)
        out.x = [xm.copy() for xm in self.x]
        out.sources = {k: (f, [a.copy() for a in acc])
                       for k, (f, acc) in self.sources.items()}
        return out


def _source_rates(state, xs, t):
    """Rates F(x,t)*sqrtJ for every tracked source at stage positions."""
    rates = {}
    for name, (f, _) in state.sources.items():
        per_chart = []
        for m, chart in enumerate(state.atlas.charts):
            geo = _geometry_from_positions(xs[m], state.hs[m], chart.periodic,
                                           chart.orientation)
            per_chart.append(f.value(xs[m], t) * geo.sqrtJ)
        rates[name] = per_chart
    return rates


def advance_flow(state, motion, dt, steps=1):
    """Advance the flow-map grids by ``steps`` classical RK4 steps of ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    vel = motion.velocity
    out = state.copy()
    for _ in range(steps):
        t = out.t
        k1 = [vel.value(xm, t) for xm in out.x]
        s1 = _source_rates(out, out.x, t)
        x2 = [xm + 0.5 * dt * km for xm, km in zip(out.x, k1)]
        k2 = [vel.value(xm, t + 0.5 * dt) for xm in x2]
        s2 = _source_rates(out, x2, t + 0.5 * dt)
        x3 = [xm + 0.5 * dt * km for xm, km in zip(out.x, k2)]
        k3 = [vel.value(xm, t + 0.5 * dt) for xm in x3]
        s3 = _source_rates(out, x3, t + 0.5 * dt)
        x4 = [xm + dt * km for xm, km in zip(out.x, k3)]
        k4 = [vel.value(xm, t + dt) for xm in x4]
        s4 = _source_rates(out, x4, t + dt)
        out.x = [xm + (dt / 6.0) * (a + 2 * b + 2 * c + d)
                 for xm, a, b, c, d in zip(out.x, k1, k2, k3, k4)]
        for name, (f, acc) in out.sources.items():
            for m in range(len(acc)):
                acc[m] += (dt / 6.0) * (s1[name][m] + 2 * s2[name][m]
                                        + 2 * s3[name][m] + s4[name][m])
        out.t = t + dt
        for m in range(len(out.x)):
            out.geometry(m)  # raises JacobianCollapse on degeneration
    return out


# -- transported scalars and integrals ----------------------------------------


def transport_scalar(state, f0, source_name=None):
    """Exact transported scalar at the current grid: per-chart nodal arrays.

    Solves ``D_t f + (div v) f = F`` along the flow:
    ``f = (f0(x(0)) sqrtJ(0) + integral of F sqrtJ) / sqrtJ(t)``.
    """
    f0 = as_scalar_field(f0)
    out = []
    for m in range(len(state.x)):
        geo = state.geometry(m)
        num = f0.value(_initial_positions(state, m), 0.0) * state.sqrtJ0[m]
        if source_name is not None:
            num = num + state.sources[source_name][1][m]
        out.append(num / geo.sqrtJ)
    return out


def _initial_positions(state, m):
    chart = state.atlas.charts[m]
    return chart.position(state.X[m][0], state.X[m][1], 0.0)


def transported_density(state):
    """Exact density: reference weights divided by the current area element."""
    return [state.rho0_tilde[m] / state.geometry(m).sqrtJ
            for m in range(len(state.x))]


def integrate_grid(state, values=None, field_expr=None):
    """Surface integral over the grid: trapezoid weights, pou, area element.

    ``values`` gives nodal arrays per chart; alternatively ``field_expr`` is
    an ambient field evaluated at the material points.
    """
    total = 0.0
    for m in range(len(state.x)):
        geo = state.geometry(m)
        if values is not None:
            vals = values[m]
        else:
            vals = as_scalar_field(field_expr).value(state.x[m], state.t)
        total += float(np.sum(state.w[m] * state.psi[m] * vals * geo.sqrtJ))
    return total


def integrate_grid_vector(state, values):
    return np.array([
        integrate_grid(state, values=[v[i] for v in values]) for i in range(3)
    ])


# -- checks --------------------------------------------------------------------


def _div_tangent_grid(state, m, geo, vec_nodal):
    """Chart-form surface divergence of nodal ambient vectors on chart m."""
    chart = state.atlas.charts[m]
    dv = np.stack([fd_derivative(vec_nodal, 1 + a, state.hs[m][a],
                                 chart.periodic[a]) for a in range(2)])
    # g^{ab} g_a . dvec/dX_b
    return np.einsum("ab...,ai...,bi...->...", geo.inv_gram, geo.g, dv)


def jacobian_rate_check(state, motion, dt_probe=1e-3):
    """Max residual of d(sqrtJ)/dt = (div v) sqrtJ at the grid nodes.

    The time derivative is a central difference of the grid-derived area
    element across two short RK4 probe steps; the divergence side is
    evaluated in chart form from the same grid.
    """
    fwd = advance_flow(state, motion, dt_probe)
    bwd = _advance_signed(state, motion, -dt_probe)
    worst = 0.0
    for m in range(len(state.x)):
        geo = state.geometry(m)
        dsJ = (fwd.geometry(m).sqrtJ - bwd.geometry(m).sqrtJ) / (2.0 * dt_probe)
        vval = motion.velocity.value(state.x[m], state.t)
        div_v = _div_tangent_grid(state, m, geo, vval)
        worst = max(worst, float(np.max(np.abs(dsJ - div_v * geo.sqrtJ))))
    return worst


def _advance_signed(state, motion, dt):
    """RK4 step that tolerates a negative dt (used by probe differences)."""
    if dt > 0:
        return advance_flow(state, motion, dt)
    vel = motion.velocity
    out = state.copy()
    t = out.t
    k1 = [vel.value(xm, t) for xm in out.x]
    x2 = [xm + 0.5 * dt * km for xm, km in zip(out.x, k1)]
    k2 = [vel.value(xm, t + 0.5 * dt) for xm in x2]
    x3 = [xm + 0.5 * dt * km for xm, km in zip(out.x, k2)]
    k3 = [vel.value(xm, t + 0.5 * dt) for xm in x3]
    x4 = [xm + dt * km for xm, km in zip(out.x, k3)]
    k4 = [vel.value(xm, t + dt) for xm in x4]
    out.x = [xm + (dt / 6.0) * (a + 2 * b + 2 * c + d)
             for xm, a, b, c, d in zip(out.x, k1, k2, k3, k4)]
    out.t = t + dt
    return out


def transport_theorem_check(state, motion, f, mask=None, dt_probe=1e-3):
    """Relative residual of d/dt (integral of f) = integral of D_t f + f div v.

    ``mask`` is an optional smooth weight attached to material points
    (a function of the reference coordinates), restricting the integral to a
    subregion carried by the flow.
    """
    f = as_scalar_field(f)
    masks = _nodal_mask(state, mask)

    def weighted_integral(st):
        total = 0.0
        for m in range(len(st.x)):
            geo = st.geometry(m)
            vals = f.value(st.x[m], st.t)
            total += float(np.sum(st.w[m] * st.psi[m] * masks[m] * vals * geo.sqrtJ))
        return total

    fwd = advance_flow(state, motion, dt_probe)
    bwd = _advance_signed(state, motion, -dt_probe)
    lhs = (weighted_integral(fwd) - weighted_integral(bwd)) / (2.0 * dt_probe)

    rhs = 0.0
    for m in range(len(state.x)):
        geo = state.geometry(m)
        xm, t = state.x[m], state.t
        vval = motion.velocity.value(xm, t)
        Dt_f = f.dt(xm, t) + np.einsum("i...,i...->...", vval, f.grad(xm, t))
        div_v = _div_tangent_grid(state, m, geo, vval)
        integrand = Dt_f + f.value(xm, t) * div_v
        rhs += float(np.sum(state.w[m] * state.psi[m] * masks[m]
                            * integrand * geo.sqrtJ))
    scale = max(1.0, abs(lhs), abs(rhs))
    return abs(lhs - rhs) / scale


def _nodal_mask(state, mask):
    if mask is None:
        return [np.ones_like(w) for w in state.w]
    return [np.asarray(mask(state.X[m][0], state.X[m][1]), dtype=float)
            for m in range(len(state.x))]
