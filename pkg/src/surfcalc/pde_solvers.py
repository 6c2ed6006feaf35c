"""Method-of-lines solvers on chart grids: generalized heat and diffusion
equations (Lagrangian, conserved-variable form) and the tangential barotropic
system on a static surface, plus conservation-law tracking.

Spatial discretization is the divergence-form chart Laplacian
``(1/sqrtJ) d_a ( sqrtJ g^{ab} e_J'(|grad|^2) d_b f )`` built from nested
4th-order first-derivative stencils.  Bounded chart directions carry four
ghost rows filled by bicubic interpolation from the partner chart (sphere
atlas); after every step, overlap nodes are blended with partition-of-unity
weights so the charts stay consistent.  Time integration is classical RK4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .evolving_surface import fd_derivative
from .expressions import parse_expr
from .fields import as_scalar_field, as_vector_field

__all__ = [
    "StabilityViolation",
    "FluxLaw",
    "flux_law_builtin",
    "GridField",
    "SurfaceGridSolver",
    "step_heat",
    "step_diffusion",
    "step_barotropic_tangential",
    "conservation_report",
    "write_csv",
]

_PAD = 4
_RK4_REAL_LIMIT = 2.78
_D1_GAIN_SQ = 1.89  # max |symbol|^2 of the 4th-order first-derivative stencil


class StabilityViolation(RuntimeError):
    """The requested dt exceeds the explicit parabolic stability bound."""


class FluxLaw:
    """Scalar flux density e_J(z) of the squared tangential gradient.

    The flux is ``q = e_J'(|grad f|^2) grad f``; expression-backed in ``z``
    so the derivative is exact.
    """

    def __init__(self, e_expr, name="custom"):
        if isinstance(e_expr, str):
            e_expr = parse_expr(e_expr, ("z",))
        self.e_expr = e_expr
        self.d_expr = e_expr.diff("z")
        self.name = name

    def density(self, z):
        return self.e_expr.evaluate({"z": z})

    def deriv(self, z):
        return self.d_expr.evaluate({"z": z})

    def fd_consistency(self, z, h=1e-6):
        z = np.asarray(z, dtype=float)
        fd = (self.density(z + h) - self.density(z - h)) / (2.0 * h)
        return float(np.max(np.abs(fd - self.deriv(z))))


_FLUX_LAWS = {
    "linear": lambda kappa=1.0: FluxLaw(f"{kappa}*z", name="linear"),
    "quadratic": lambda: FluxLaw("z^2", name="quadratic"),
}


def flux_law_builtin(name, **params):
    if name not in _FLUX_LAWS:
        raise KeyError(f"unknown flux law {name!r}; known: {sorted(_FLUX_LAWS)}")
    return _FLUX_LAWS[name](**params)


@dataclass
class GridField:
    """Per-chart nodal values of one evolving scalar (or stacked components)."""

    values: list
    t: float

    def copy(self):
        return GridField([v.copy() for v in self.values], self.t)


# -- interpolation helpers -------------------------------------------------------


def _lagrange_cubic_weights(s):
    """Weights of 4-point cubic Lagrange interpolation at offset s in [1, 2]
    from the first node (nodes at 0, 1, 2, 3)."""
    w = np.empty(4)
    pts = (0.0, 1.0, 2.0, 3.0)
    for k in range(4):
        num = 1.0
        for j in range(4):
            if j != k:
                num *= (s - pts[j]) / (pts[k] - pts[j])
        w[k] = num
    return w


def _interp_matrix(axes, periodic, shape, targets):
    """Sparse bicubic interpolation from a uniform chart grid to targets.

    ``axes`` are the 1-D node coordinates, ``targets`` an (N, 2) array of
    chart coordinates.  Returns a CSR matrix of shape (N, n1*n2).
    """
    n1, n2 = shape
    rows, cols, vals = [], [], []
    h = [axes[0][1] - axes[0][0], axes[1][1] - axes[1][0]]
    for r, (y1, y2) in enumerate(targets):
        idx = []
        wgt = []
        for d, (y, ax, per, n) in enumerate(
                zip((y1, y2), axes, periodic, (n1, n2))):
            pos = (y - ax[0]) / h[d]
            j0 = int(np.floor(pos)) - 1
            if per:
                s = pos - j0
                ids = [(j0 + k) % n for k in range(4)]
            else:
                j0 = min(max(j0, 0), n - 4)
                s = pos - j0
                ids = [j0 + k for k in range(4)]
            idx.append(ids)
            wgt.append(_lagrange_cubic_weights(s))
        for a in range(4):
            for b in range(4):
                rows.append(r)
                cols.append(idx[0][a] * n2 + idx[1][b])
                vals.append(wgt[0][a] * wgt[1][b])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(targets), n1 * n2))


# -- the grid solver --------------------------------------------------------------


class SurfaceGridSolver:
    """Discrete operators for one atlas at a fixed per-chart resolution.

    Charts may carry closed-form motion (time-dependent parametrizations);
    all metric data is evaluated analytically on the padded grids and cached
    per time level.  Bounded directions are only supported on multi-chart
    atlases (ghost data comes from the partner chart).
    """

    def __init__(self, atlas, resolution=(64, 128)):
        self.atlas = atlas
        self.resolution = tuple(resolution)
        self.charts = atlas.charts
        self.axes = []       # per chart: (xs1, xs2) interior node coordinates
        self.haxes = []      # per chart: (h1, h2)
        self.pads = []       # per chart: (p1, p2)
        self.Xpad = []       # per chart: (2, n1p, n2p) padded coordinates
        self.weights = []    # per chart: (n1, n2) quadrature weights
        self.psi = []        # per chart: (n1, n2) partition of unity
        for m, chart in enumerate(self.charts):
            axs, hs = [], []
            pads = []
            for (lo, hi), per, n in zip(chart.domain, chart.periodic,
                                        self.resolution):
                if per:
                    h = (hi - lo) / n
                    axs.append(lo + h * np.arange(n))
                    pads.append(0)
                else:
                    if len(self.charts) < 2:
                        raise ValueError(
                            "bounded chart directions need a partner chart")
                    h = (hi - lo) / (n - 1)
                    axs.append(lo + h * np.arange(n))
                    pads.append(_PAD)
                hs.append(h)
            self.axes.append(tuple(axs))
            self.haxes.append(tuple(hs))
            self.pads.append(tuple(pads))
            pax = [np.concatenate([axs[d][0] + hs[d] * np.arange(-pads[d], 0),
                                   axs[d],
                                   axs[d][-1] + hs[d] * np.arange(1, pads[d] + 1)])
                   for d in range(2)]
            X1, X2 = np.meshgrid(pax[0], pax[1], indexing="ij")
            self.Xpad.append(np.stack([X1, X2]))
            w = [None, None]
            for d in range(2):
                n = self.resolution[d]
                if chart.periodic[d]:
                    w[d] = np.full(n, hs[d])
                else:
                    w[d] = np.full(n, hs[d])
                    w[d][0] = w[d][-1] = 0.5 * hs[d]
            self.weights.append(np.outer(w[0], w[1]))
            Xi = self.Xpad[m][:, pads[0]:pads[0] + self.resolution[0], :]
            self.psi.append(atlas.pou(m, Xi[0], Xi[1]))
        self._build_couplers()
        self._metric_cache = {}

    # -- cross-chart coupling ----------------------------------------------------

    def _build_couplers(self):
        """Ghost-fill and overlap-blend sparse operators (reference coords)."""
        self.ghost_ops = []   # per chart: None or (partner, csr, ghost_slices)
        self.blend_ops = []   # per chart: None or (partner, csr)
        if len(self.charts) < 2:
            self.ghost_ops = [None] * len(self.charts)
            self.blend_ops = [None] * len(self.charts)
            return
        for m, chart in enumerate(self.charts):
            partner = 1 - m
            other = self.charts[partner]
            p1, p2 = self.pads[m]
            if p2 != 0:
                raise ValueError("padding in a periodic direction is unsupported")
            Xp = self.Xpad[m]
            n1, n2 = self.resolution
            ghost_rows = list(range(p1)) + list(range(p1 + n1, 2 * p1 + n1))
            targets = []
            for i in ghost_rows:
                pos = chart.position(Xp[0][i], Xp[1][i], 0.0)
                Y1, Y2 = other.invert(pos)
                targets.extend(np.stack([Y1, Y2], axis=-1))
            op = _interp_matrix(self.axes[partner], other.periodic,
                                self.resolution, np.asarray(targets))
            self.ghost_ops.append((partner, op, ghost_rows))
            # blend rows: interior nodes where our pou weight is below 1
            psi = self.psi[m]
            need = np.argwhere(psi < 1.0 - 1e-13)
            pts = np.stack([self.axes[m][0][need[:, 0]],
                            self.axes[m][1][need[:, 1]]])
            pos = chart.position(pts[0], pts[1], 0.0)
            Y1, Y2 = other.invert(pos)
            bop = _interp_matrix(self.axes[partner], other.periodic,
                                 self.resolution,
                                 np.stack([Y1, Y2], axis=-1))
            self.blend_ops.append((partner, bop, need))

    def fill_ghosts(self, values):
        """Padded per-chart arrays with ghost rows interpolated cross-chart."""
        out = []
        for m in range(len(self.charts)):
            p1, p2 = self.pads[m]
            n1, n2 = self.resolution
            pad = np.zeros((n1 + 2 * p1, n2 + 2 * p2))
            pad[p1:p1 + n1, p2:p2 + n2 if p2 else None] = values[m]
            if self.ghost_ops[m] is not None:
                partner, op, rows = self.ghost_ops[m]
                ghost = (op @ values[partner].ravel()).reshape(len(rows), n2)
                for k, i in enumerate(rows):
                    pad[i] = ghost[k]
            out.append(pad)
        return out

    def blend(self, values):
        """Partition-of-unity average of overlapping chart values (in place)."""
        if len(self.charts) < 2:
            return values
        interped = []
        for m in range(len(self.charts)):
            partner, bop, need = self.blend_ops[m]
            interped.append((bop @ values[partner].ravel(), need))
        for m in range(len(self.charts)):
            vals, need = interped[m]
            psi = self.psi[m][need[:, 0], need[:, 1]]
            own = values[m][need[:, 0], need[:, 1]]
            values[m][need[:, 0], need[:, 1]] = psi * own + (1.0 - psi) * vals
        return values

    # -- metric data ---------------------------------------------------------------

    def metric(self, t):
        """Padded metric snapshots per chart at time ``t`` (cached)."""
        key = float(t)
        if key not in self._metric_cache:
            states = []
            for m, chart in enumerate(self.charts):
                Xp = self.Xpad[m]
                states.append(chart.frame(Xp[0], Xp[1], t,
                                          check_domain=False).metric())
            if len(self._metric_cache) > 8:
                self._metric_cache.clear()
            self._metric_cache[key] = states
        return self._metric_cache[key]

    def positions(self, t):
        """Interior material positions per chart at time ``t``."""
        out = []
        for m, st in enumerate(self.metric(t)):
            p1, p2 = self.pads[m]
            n1, n2 = self.resolution
            out.append(st.x[:, p1:p1 + n1, p2:p2 + n2 if p2 else None])
        return out

    def interior(self, m, padded):
        p1, p2 = self.pads[m]
        n1, n2 = self.resolution
        return padded[..., p1:p1 + n1, p2:p2 + n2 if p2 else None]

    # -- spatial operators -----------------------------------------------------------

    def _d(self, m, arr, axis):
        per = self.charts[m].periodic[axis] and self.pads[m][axis] == 0
        return fd_derivative(arr, arr.ndim - 2 + axis, self.haxes[m][axis], per)

    def grad_chart(self, m, padded):
        """Chart-coordinate derivatives (2, ...) of a padded array."""
        return np.stack([self._d(m, padded, 0), self._d(m, padded, 1)])

    def flux_divergence(self, values, t, flux, coef=1.0):
        """Interior values of div_G(coef * e_J'(|grad f|^2) grad f) per chart.

        ``coef`` may be a scalar or an ambient scalar field.
        """
        pads = self.fill_ghosts(values)
        states = self.metric(t)
        coef_f = as_scalar_field(coef)
        out = []
        for m in range(len(self.charts)):
            st = states[m]
            df = self.grad_chart(m, pads[m])
            # |grad f|^2 = g^{ab} f,a f,b
            z = np.einsum("ab...,a...,b...->...", st.inv_gram, df, df)
            cval = coef_f.value(st.x, t)
            scale = st.sqrtJ * cval * flux.deriv(z)
            Fa = scale * np.einsum("ab...,b...->a...", st.inv_gram, df)
            div = (self._d(m, Fa[0], 0) + self._d(m, Fa[1], 1)) / st.sqrtJ
            out.append(self.interior(m, div))
        return out

    def grad_tangent(self, m, padded, st):
        """Tangential gradient (3, ...) of a padded array on chart m."""
        df = self.grad_chart(m, padded)
        return np.einsum("ab...,ai...,b...->i...", st.inv_gram, st.g, df)

    def div_tangent(self, m, padded_vec, st):
        """Surface divergence of padded ambient vectors (3, ...) on chart m."""
        dv = np.stack([self._d(m, padded_vec, 0), self._d(m, padded_vec, 1)])
        return np.einsum("ab...,ai...,bi...->...", st.inv_gram, st.g, dv)

    # -- stability ---------------------------------------------------------------------

    def check_parabolic_dt(self, dt, max_coef, t=0.0):
        """Raise StabilityViolation if dt exceeds the RK4 parabolic bound."""
        lam = 0.0
        for m, st in enumerate(self.metric(t)):
            h1, h2 = self.haxes[m]
            lam = max(lam, float(np.max(
                _D1_GAIN_SQ * (st.inv_gram[0, 0] / h1 ** 2
                               + st.inv_gram[1, 1] / h2 ** 2))))
        bound = _RK4_REAL_LIMIT / (lam * max_coef) if lam * max_coef > 0 else np.inf
        if dt > bound:
            raise StabilityViolation(
                f"dt={dt:g} exceeds explicit stability bound {bound:g}")
        return bound

    # -- integrals ----------------------------------------------------------------------

    def integrate(self, values, t):
        """Surface integral of interior nodal values at time ``t``."""
        total = 0.0
        for m, st in enumerate(self.metric(t)):
            sj = self.interior(m, st.sqrtJ)
            total += float(np.sum(self.weights[m] * self.psi[m]
                                  * values[m] * sj))
        return total


# -- time steppers -------------------------------------------------------------------


def _rk4(field, rhs, dt):
    """One classical RK4 step of d(values)/dt = rhs(values, t)."""
    y, t = field.values, field.t
    k1 = rhs(y, t)
    k2 = rhs([a + 0.5 * dt * b for a, b in zip(y, k1)], t + 0.5 * dt)
    k3 = rhs([a + 0.5 * dt * b for a, b in zip(y, k2)], t + 0.5 * dt)
    k4 = rhs([a + dt * b for a, b in zip(y, k3)], t + dt)
    vals = [a + (dt / 6.0) * (p + 2 * q + 2 * r + s)
            for a, p, q, r, s in zip(y, k1, k2, k3, k4)]
    return GridField(vals, t + dt)


def _transported_rho(solver, rho0, t):
    """Exact density rho0(x(0)) sqrtJ(0)/sqrtJ(t) at the interior nodes."""
    rho0 = as_scalar_field(rho0)
    st0 = solver.metric(0.0)
    st = solver.metric(t)
    out = []
    for m in range(len(solver.charts)):
        sj0 = solver.interior(m, st0[m].sqrtJ)
        sj = solver.interior(m, st[m].sqrtJ)
        x0 = solver.interior(m, st0[m].x)
        out.append(rho0.value(x0, 0.0) * sj0 / sj)
    return out


def step_heat(solver, field, coeffs, flux, dt, rho0=1.0, check_stability=True):
    """One RK4 step of the generalized heat equation in Lagrangian form.

    ``field`` holds the product (specific heat * temperature) at the nodes;
    the density is the exact transported one.  The right-hand side is
    ``(div_G q + rho Q_theta + F1) / rho`` at fixed reference coordinates.
    """
    c = coeffs
    if check_stability:
        vals0 = field.values
        states = solver.metric(field.t)
        zmax = 0.0
        pads = solver.fill_ghosts(vals0)
        for m, st in enumerate(states):
            df = solver.grad_chart(m, pads[m])
            z = np.einsum("ab...,a...,b...->...", st.inv_gram, df, df)
            zmax = max(zmax, float(np.max(z)))
        rho_now = _transported_rho(solver, rho0, field.t)
        coef = float(np.max(np.abs(flux.deriv(np.linspace(0.0, max(zmax, 1e-30), 8)))))
        cth_min = min(float(np.min(np.abs(c.C_theta.value(
            solver.positions(field.t)[m], field.t)))) for m in range(len(rho_now)))
        rho_min = min(float(np.min(r)) for r in rho_now)
        solver.check_parabolic_dt(dt, coef / max(rho_min * cth_min, 1e-30), field.t)

    def rhs(vals, t):
        rho = _transported_rho(solver, rho0, t)
        if any(np.min(r) <= 0 for r in rho):
            raise StabilityViolation("transported density became non-positive")
        xs = solver.positions(t)
        cth = [c.C_theta.value(xs[m], t) for m in range(len(vals))]
        theta = [v / cm for v, cm in zip(vals, cth)]
        div = solver.flux_divergence(theta, t, flux)
        return [(div[m] + rho[m] * c.Q_theta.value(xs[m], t)
                 + c.F1.value(xs[m], t)) / rho[m] for m in range(len(vals))]

    out = _rk4(field, rhs, dt)
    out.values = solver.blend(out.values)
    return out


def step_diffusion(solver, field, coeffs, flux, dt, check_stability=True):
    """One RK4 step of the generalized diffusion equation.

    ``field`` holds the concentration C; internally the conserved variable
    C*sqrtJ is advanced at fixed reference coordinates, which realizes the
    (div v)C transport term exactly.
    """
    c = coeffs
    if check_stability:
        coef = float(np.max(np.abs(flux.deriv(np.array([0.0, 1.0])))))
        solver.check_parabolic_dt(dt, max(coef, 1e-30), field.t)

    st_t = solver.metric(field.t)
    W = [field.values[m] * solver.interior(m, st_t[m].sqrtJ)
         for m in range(len(field.values))]

    def rhs(wvals, t):
        states = solver.metric(t)
        sj = [solver.interior(m, states[m].sqrtJ) for m in range(len(wvals))]
        conc = [w / s for w, s in zip(wvals, sj)]
        div = solver.flux_divergence(conc, t, flux)
        xs = solver.positions(t)
        return [sj[m] * (div[m] + c.Q_C.value(xs[m], t)
                         + c.F2.value(xs[m], t)) for m in range(len(wvals))]

    stepped = _rk4(GridField(W, field.t), rhs, dt)
    st_new = solver.metric(stepped.t)
    vals = [stepped.values[m] / solver.interior(m, st_new[m].sqrtJ)
            for m in range(len(W))]
    out = GridField(solver.blend(vals), stepped.t)
    return out


def step_barotropic_tangential(solver, field, law, dt):
    """One RK4 step of the tangential barotropic system on a static surface.

    ``field.values[m]`` stacks (rho, v1, v2, v3) as a (4, n1, n2) array; the
    velocity is re-projected onto the tangent space after every stage.
    """
    from .fluid_models import NonpositiveDensity

    states = solver.metric(field.t)
    P = [solver.interior(m, st.P) for m, st in enumerate(states)]

    def project(vals):
        for m in range(len(vals)):
            vals[m][1:] = np.einsum("ij...,j...->i...", P[m], vals[m][1:])
        return vals

    def rhs(vals, t):
        vals = [v.copy() for v in vals]
        project(vals)
        rho_v = [v[0] for v in vals]
        if any(np.min(r) <= 0 for r in rho_v):
            raise NonpositiveDensity("barotropic density became non-positive")
        out = []
        # pad each component separately
        comp_pads = [solver.fill_ghosts([v[k] for v in vals])
                     for k in range(4)]
        for m, st in enumerate(states):
            sti = st
            rho_pad = comp_pads[0][m]
            v_pad = np.stack([comp_pads[k][m] for k in range(1, 4)])
            grad_rho = solver.grad_tangent(m, rho_pad, sti)
            peff_pad = law.effective(np.maximum(rho_pad, 1e-12))
            grad_p = solver.grad_tangent(m, peff_pad, sti)
            div_v = solver.div_tangent(m, v_pad, sti)
            # tangential advection (v, grad_t) of each quantity
            vint = solver.interior(m, v_pad)
            rho_i = solver.interior(m, rho_pad)
            drho = -np.einsum("i...,i...->...",
                              vint, solver.interior(m, grad_rho)) \
                - solver.interior(m, div_v) * rho_i
            dv = np.empty_like(vint)
            for i in range(3):
                gvi = solver.grad_tangent(m, v_pad[i], sti)
                dv[i] = -np.einsum("i...,i...->...",
                                   vint, solver.interior(m, gvi))
            dv -= solver.interior(m, grad_p) / rho_i
            Pm = P[m]
            dv = np.einsum("ij...,j...->i...", Pm, dv)
            out.append(np.concatenate([drho[None], dv]))
        return out

    stepped = _rk4(field, rhs, dt)
    project(stepped.values)
    blended = [solver.blend([v[k] for v in stepped.values]) for k in range(4)]
    stepped.values = [np.stack([blended[k][m] for k in range(4)])
                      for m in range(len(stepped.values))]
    project(stepped.values)
    return stepped


# -- conservation tracking --------------------------------------------------------


def conservation_report(solver, snapshots):
    """Time series of the conserved integrals from stored snapshots.

    ``snapshots`` is a list of ``(t, nodal)`` where ``nodal`` maps quantity
    names (``rho``, ``rho_v`` (3,...), ``e_A``, ``C``) to per-chart interior
    arrays.  Returns (rows, drift) where each row is
    (t, mass, momentum xyz, energy, concentration, angular momentum xyz)
    and drift maps each tracked quantity to its max relative drift.
    """
    rows = []
    for t, nodal in snapshots:
        xs = solver.positions(t)
        mass = solver.integrate(nodal["rho"], t)
        mom = [solver.integrate([rv[i] for rv in nodal["rho_v"]], t)
               for i in range(3)]
        ener = solver.integrate(nodal["e_A"], t)
        conc = solver.integrate(nodal["C"], t)
        ang = []
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            vals = [xs[m][j] * nodal["rho_v"][m][k]
                    - xs[m][k] * nodal["rho_v"][m][j]
                    for m in range(len(xs))]
            ang.append(solver.integrate(vals, t))
        rows.append((t, mass, *mom, ener, conc, *ang))
    arr = np.asarray(rows)
    drift = {}
    names = ("mass", "momentum_x", "momentum_y", "momentum_z",
             "energy", "concentration", "angular_x", "angular_y", "angular_z")
    for k, name in enumerate(names):
        col = arr[:, 1 + k]
        scale = max(1.0, float(np.max(np.abs(col))))
        drift[name] = float(np.max(np.abs(col - col[0]))) / scale
    return rows, drift


def write_csv(path, header, rows):
    """Write a simple CSV time series with full float precision."""
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) for v in row])
