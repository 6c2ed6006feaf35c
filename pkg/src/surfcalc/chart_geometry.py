"""Chart atlases, pointwise metric data, and surface quadrature.

A closed surface is represented by one or more parametrized charts with a
smooth partition of unity.  All pointwise geometry (tangent basis, Gram
matrix and its inverse, area Jacobian, unit normal, tangential projector,
mean curvature) is derived from the parametrization by exact differentiation
of its expression tree, evaluated with dual numbers so chart-coordinate
derivatives of composed quantities come along for free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import partial_of, value_of
from .expressions import Expr, parse_expr

__all__ = [
    "SingularMetric",
    "OutOfDomain",
    "Chart",
    "ChartAtlas",
    "ChartFrame",
    "MetricState",
    "QuadratureRule",
    "default_rule",
    "metric_at",
    "mean_curvature_at",
    "integrate",
    "integrate_vector",
    "plane_chart",
    "sphere_atlas",
    "torus_atlas",
    "builtin_surface",
]

_EPS_J = 1e-14
_CHART_VARS = ("X1", "X2", "t")


class SingularMetric(RuntimeError):
    """The Gram determinant dropped to (or below) zero: degenerate chart."""


class OutOfDomain(ValueError):
    """A chart coordinate lies outside the chart's domain."""


def smooth_bump(lo, hi):
    """A C-infinity bump supported on (lo, hi), peaking at the midpoint.

    Built from exp(-beta / ((s - lo)(hi - s))); beta is chosen so the peak
    value is exp(-1).  All derivatives vanish at the endpoints, which keeps
    quadrature and stencil errors from the partition of unity negligible.
    """
    beta = ((hi - lo) / 2.0) ** 2

    def bump(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = (s > lo) & (s < hi)
        si = s[inside]
        out[inside] = np.exp(-beta / ((si - lo) * (hi - si)))
        return out

    return bump


class Chart:
    """One parametrized patch of a surface.

    Parameters
    ----------
    param:
        Three expressions (or strings) in ``X1, X2`` and optionally ``t``
        mapping chart coordinates to ambient points.
    domain:
        ``((x1lo, x1hi), (x2lo, x2hi))`` rectangle of valid coordinates.
    periodic:
        Per-direction periodicity flags.
    orientation:
        +1 or -1; fixes the normal as ``orientation * (g1 x g2)/|g1 x g2|``.
    pou_bump:
        Nonnegative smooth weight ``b(X1, X2)`` used (after atlas-level
        normalization) as the partition-of-unity factor.  ``None`` means 1.
    invert:
        Optional callable mapping ambient points ``(3, ...)`` at the reference
        time to chart coordinates ``(X1, X2)``; needed for weight
        normalization and cross-chart interpolation on multi-chart atlases.
    """

    def __init__(self, param, domain, periodic=(False, False), orientation=1,
                 pou_bump=None, invert=None, name="chart"):
        self.param = [p if isinstance(p, Expr) else parse_expr(p, _CHART_VARS)
                      for p in param]
        self.domain = tuple((float(a), float(b)) for a, b in domain)
        self.periodic = tuple(periodic)
        self.orientation = int(orientation)
        self.pou_bump = pou_bump
        self.invert = invert
        self.name = name
        # exact first partials of the parametrization
        self._dparam = {v: [p.diff(v) for p in self.param] for v in _CHART_VARS}

    def contains(self, X1, X2, margin=0.0):
        ok = np.ones(np.shape(np.asarray(X1)), dtype=bool)
        for coords, (lo, hi), per in zip((X1, X2), self.domain, self.periodic):
            if not per:
                c = np.asarray(coords)
                ok &= (c >= lo - margin) & (c <= hi + margin)
        return ok

    def bump_at(self, X1, X2):
        if self.pou_bump is None:
            return np.ones(np.broadcast(np.asarray(X1), np.asarray(X2)).shape)
        return self.pou_bump(X1, X2)

    def position(self, X1, X2, t=0.0):
        env = {"X1": X1, "X2": X2, "t": t}
        return np.stack([np.broadcast_to(p.evaluate(env),
                                         np.broadcast(np.asarray(X1), np.asarray(X2)).shape)
                         for p in self.param]).astype(float)

    def frame(self, X1, X2, t=0.0, check_domain=True):
        """Dual-number geometric frame at the given coordinates."""
        if check_domain and not np.all(self.contains(X1, X2, margin=1e-12)):
            raise OutOfDomain(f"coordinates outside chart {self.name!r}")
        return ChartFrame(self, X1, X2, t)


@dataclass
class MetricState:
    """Numeric pointwise geometry package (arrays broadcast over points)."""

    x: np.ndarray           # ambient position, (3, ...)
    g: np.ndarray           # tangent basis, (2, 3, ...)
    gram: np.ndarray        # g_ab, (2, 2, ...)
    inv_gram: np.ndarray    # g^ab, (2, 2, ...)
    J: np.ndarray           # det(gram), (...)
    sqrtJ: np.ndarray       # area element, (...)
    n: np.ndarray           # unit normal, (3, ...)
    P: np.ndarray           # tangential projector, (3, 3, ...)
    H: np.ndarray           # mean curvature = -div_G n, (...)


class ChartFrame:
    """Dual-valued geometry of one chart at given coordinates.

    Every quantity is a dual number seeded on ``X1, X2, t``, so one more
    chart-coordinate (or time) derivative of anything assembled from the
    frame can be read off its dual parts.
    """

    def __init__(self, chart, X1, X2, t=0.0):
        self.chart = chart
        shape = np.broadcast(np.asarray(X1, dtype=float),
                             np.asarray(X2, dtype=float)).shape
        self.shape = shape
        X1 = np.broadcast_to(np.asarray(X1, dtype=float), shape)
        X2 = np.broadcast_to(np.asarray(X2, dtype=float), shape)
        self.t = t
        env = {"X1": ad.seed("X1", X1), "X2": ad.seed("X2", X2),
               "t": ad.seed("t", t)}
        self.x = [p.evaluate(env) for p in chart.param]
        self.g = [[e.evaluate(env) for e in chart._dparam[v]] for v in ("X1", "X2")]
        # Gram matrix, inverse, area Jacobian (all dual)
        g = self.g
        self.gram = [[_dot3(g[a], g[b]) for b in range(2)] for a in range(2)]
        det = self.gram[0][0] * self.gram[1][1] - self.gram[0][1] * self.gram[1][0]
        self.J = det
        Jval = value_of(det)
        if np.any(np.asarray(Jval) <= _EPS_J):
            raise SingularMetric("Gram determinant non-positive: degenerate chart")
        self.sqrtJ = ad.sqrt(det)
        inv = 1.0 / det
        self.inv_gram = [[self.gram[1][1] * inv, -self.gram[0][1] * inv],
                         [-self.gram[1][0] * inv, self.gram[0][0] * inv]]
        # unit normal via g1 x g2 (its norm is sqrt(J)), orientation applied
        cx = _cross3(g[0], g[1])
        s = float(chart.orientation)
        self.n = [s * c / self.sqrtJ for c in cx]
        # tangential projector P = I - n n^T
        self.P = [[(1.0 if i == j else 0.0) - self.n[i] * self.n[j]
                   for j in range(3)] for i in range(3)]

    # -- derived quantities ---------------------------------------------------

    def dual_div_tangent(self, f):
        """Chart-form surface divergence of a dual 3-vector: g^ab g_a . df/dX_b.

        Returns plain values (one dual-derivative level is consumed).
        """
        out = 0.0
        for a in range(2):
            for b in range(2):
                gab = value_of(self.inv_gram[a][b])
                for i in range(3):
                    out = out + gab * value_of(self.g[a][i]) * partial_of(
                        f[i], _CHART_VARS[b], like=value_of(self.x[0]))
        return out

    @property
    def H(self):
        """Mean curvature -div_G n (values)."""
        return -self.dual_div_tangent(self.n)

    def metric(self):
        """Snapshot the frame into a plain-array MetricState."""
        val = value_of
        x = np.stack([np.broadcast_to(val(c), self.shape) for c in self.x]).astype(float)
        g = np.stack([np.stack([np.broadcast_to(val(c), self.shape)
                                for c in row]).astype(float) for row in self.g])
        gram = np.stack([np.stack([np.broadcast_to(val(self.gram[a][b]), self.shape)
                                   for b in range(2)]) for a in range(2)]).astype(float)
        inv_gram = np.stack([np.stack([np.broadcast_to(val(self.inv_gram[a][b]), self.shape)
                                       for b in range(2)]) for a in range(2)]).astype(float)
        J = np.broadcast_to(val(self.J), self.shape).astype(float)
        n = np.stack([np.broadcast_to(val(c), self.shape) for c in self.n]).astype(float)
        P = np.stack([np.stack([np.broadcast_to(val(self.P[i][j]), self.shape)
                                for j in range(3)]) for i in range(3)]).astype(float)
        H = np.broadcast_to(self.H, self.shape).astype(float)
        return MetricState(x=x, g=g, gram=gram, inv_gram=inv_gram, J=J,
                           sqrtJ=np.sqrt(J), n=n, P=P, H=H)

    # -- field composition ----------------------------------------------------

    def eval_scalar(self, f):
        """Evaluate an ambient scalar field on the (dual) surface points."""
        return f(self.x[0], self.x[1], self.x[2], ad.seed("t", self.t))

    def eval_ambient_partial(self, f, var):
        """Evaluate an ambient partial d f/d var on the (dual) surface points."""
        return f.d(var)(self.x[0], self.x[1], self.x[2], ad.seed("t", self.t))


def _dot3(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _cross3(a, b):
    return [a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0]]


def metric_at(chart, X, t=0.0):
    """Complete pointwise geometry of ``chart`` at coordinates ``X``."""
    X = np.asarray(X, dtype=float)
    return chart.frame(X[0], X[1], t).metric()


def mean_curvature_at(chart, X, t=0.0):
    X = np.asarray(X, dtype=float)
    return chart.frame(X[0], X[1], t).H


# -- atlases ------------------------------------------------------------------


class ChartAtlas:
    """A set of charts with normalized partition-of-unity weights."""

    def __init__(self, charts, name="surface"):
        self.charts = list(charts)
        self.name = name

    def pou(self, m, X1, X2, t=0.0):
        """Normalized weight of chart ``m`` at its own coordinates.

        Weights are attached to reference coordinates: normalization uses the
        reference (t=0) configuration, so they ride along with material
        points under any later motion.
        """
        chart = self.charts[m]
        own = chart.bump_at(X1, X2)
        if len(self.charts) == 1:
            return own
        total = np.array(own, dtype=float, copy=True)
        p = chart.position(X1, X2, 0.0)
        for k, other in enumerate(self.charts):
            if k == m:
                continue
            if other.invert is None:
                raise ValueError(
                    f"chart {other.name!r} needs an inverse map for pou normalization")
            Y1, Y2 = other.invert(p)
            total += other.bump_at(Y1, Y2)
        if np.any(total <= 0):
            raise ValueError("partition-of-unity bumps do not cover the surface")
        return own / total

    def validate_orientation(self, samples=200, seed=0):
        """On star-shaped surfaces, check normals point away from the centroid."""
        rng = np.random.default_rng(seed)
        for chart in self.charts:
            (lo1, hi1), (lo2, hi2) = chart.domain
            X1 = rng.uniform(lo1, hi1, samples)
            X2 = rng.uniform(lo2, hi2, samples)
            st = metric_at(chart, np.stack([X1, X2]))
            centroid = np.zeros(3)
            radial = np.einsum("ik,ik->k", st.n, st.x - centroid[:, None])
            if np.any(radial <= 0):
                return False
        return True


def plane_chart(extent=1.0):
    chart = Chart(["X1", "X2", "0"],
                  domain=((-extent, extent), (-extent, extent)),
                  orientation=1, name="plane")
    return ChartAtlas([chart], name="plane")


# Sphere: two rotated latitude-longitude bands.  Each chart omits its poles;
# the other chart's band covers them.  The worst-covered points sit at
# colatitude pi/4 in both charts, well inside both bump supports.
_SPH_GRID_MARGIN = 0.5    # band edge (colatitude) actually gridded/valid
_SPH_POU_MARGIN = 0.65    # bump support edge; 0 weight outside


def _sphere_param(R, rotated):
    base = ("sin(X1)*cos(X2)", "sin(X1)*sin(X2)", "cos(X1)")
    u = [parse_expr(s, _CHART_VARS) for s in base]
    if rotated:
        # rotate about the y-axis: (u1,u2,u3) -> (u3, u2, -u1); poles go to +-x
        u = [u[2], u[1], -1.0 * u[0]]
    return [R * c for c in u]


def _sphere_invert(R, rotated):
    def invert(p):
        q = np.asarray(p, dtype=float) / R
        if rotated:
            q = np.stack([-q[2], q[1], q[0]])
        X1 = np.arccos(np.clip(q[2], -1.0, 1.0))
        X2 = np.mod(np.arctan2(q[1], q[0]), 2.0 * math.pi)
        return X1, X2

    return invert


def sphere_atlas(R=1.0):
    lo, hi = _SPH_GRID_MARGIN, math.pi - _SPH_GRID_MARGIN
    bump1d = smooth_bump(_SPH_POU_MARGIN, math.pi - _SPH_POU_MARGIN)

    def bump(X1, X2):
        return bump1d(X1)

    charts = []
    for rotated, name in ((False, "sphere-band-z"), (True, "sphere-band-x")):
        charts.append(Chart(
            _sphere_param(R, rotated),
            domain=((lo, hi), (0.0, 2.0 * math.pi)),
            periodic=(False, True),
            orientation=1,
            pou_bump=bump,
            invert=_sphere_invert(R, rotated),
            name=name,
        ))
    return ChartAtlas(charts, name=f"sphere(R={R})")


def torus_atlas(R=2.0, r=0.5):
    param = [f"({R} + {r}*cos(X2))*cos(X1)",
             f"({R} + {r}*cos(X2))*sin(X1)",
             f"{r}*sin(X2)"]
    chart = Chart(param,
                  domain=((0.0, 2.0 * math.pi), (0.0, 2.0 * math.pi)),
                  periodic=(True, True), orientation=1, name="torus")
    return ChartAtlas([chart], name=f"torus(R={R},r={r})")


def builtin_surface(spec_name, **params):
    """Look up a built-in surface: ``plane``, ``sphere``, or ``torus``."""
    table = {"plane": plane_chart, "sphere": sphere_atlas, "torus": torus_atlas}
    if spec_name not in table:
        raise KeyError(f"unknown surface {spec_name!r}; known: {sorted(table)}")
    return table[spec_name](**params)


# -- quadrature ---------------------------------------------------------------


class QuadratureRule:
    """Tensor-product nodes per chart: Gauss-Legendre in bounded directions,
    uniform (trapezoid/midpoint) nodes in periodic directions.

    ``nodes[m]`` is ``(X, w, psi)`` for chart ``m``: coordinates ``(2, N)``,
    weights ``(N,)``, and normalized partition-of-unity values ``(N,)``.
    """

    def __init__(self, atlas, order=32, periodic_order=64):
        self.atlas = atlas
        self.order = order
        self.nodes = []
        for m, chart in enumerate(atlas.charts):
            axes = []
            for d, ((lo, hi), per) in enumerate(zip(chart.domain, chart.periodic)):
                if per:
                    k = periodic_order
                    xs = lo + (hi - lo) * (np.arange(k) + 0.5) / k
                    ws = np.full(k, (hi - lo) / k)
                else:
                    xs, ws = np.polynomial.legendre.leggauss(order)
                    xs = 0.5 * (hi - lo) * xs + 0.5 * (hi + lo)
                    ws = 0.5 * (hi - lo) * ws
                axes.append((xs, ws))
            X1, X2 = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
            W = np.outer(axes[0][1], axes[1][1])
            X = np.stack([X1.ravel(), X2.ravel()])
            w = W.ravel()
            if np.any(w <= 0):
                raise ValueError("quadrature weights must be positive")
            psi = atlas.pou(m, X[0], X[1])
            self.nodes.append((X, w, psi))


def default_rule(atlas):
    """Reference quadrature rule sized for near machine-precision integrals.

    Multi-chart atlases pay for the smooth partition of unity with
    root-exponential (rather than spectral) convergence, so they get a much
    denser rule; single periodic charts converge spectrally and stay cheap.
    """
    if len(atlas.charts) > 1:
        return QuadratureRule(atlas, order=160, periodic_order=384)
    return QuadratureRule(atlas, order=48, periodic_order=96)


def _field_values(field, x, t):
    if hasattr(field, "value"):
        return field.value(x, t)
    if callable(field):
        return field(x, t)
    from .fields import as_scalar_field
    return as_scalar_field(field).value(x, t)


def integrate(field, atlas, rule, t=0.0):
    """Surface integral of a scalar field at time ``t``."""
    total = 0.0
    for chart, (X, w, psi) in zip(atlas.charts, rule.nodes):
        st = metric_at(chart, X, t)
        total += float(np.sum(w * psi * _field_values(field, st.x, t) * st.sqrtJ))
    return total


def integrate_vector(field, atlas, rule, t=0.0):
    """Surface integral of a 3-vector field at time ``t``."""
    total = np.zeros(3)
    for chart, (X, w, psi) in zip(atlas.charts, rule.nodes):
        st = metric_at(chart, X, t)
        vals = _field_values(field, st.x, t)
        total += np.sum(w * psi * np.asarray(vals) * st.sqrtJ, axis=1)
    return total
