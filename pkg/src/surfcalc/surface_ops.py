"""Pointwise surface differential operators and tensor constructions.

Every operator exists in two independent forms that are cross-checked in the
test-suite:

* an **ambient** form built from the tangential projector applied to plain
  space derivatives of the field, and
* a **chart** form built from chart-coordinate derivatives and the inverse
  Gram matrix (evaluated through dual numbers on a :class:`ChartFrame`).

The chart form survives one extra differentiation (its outputs are dual), so
second-level operators such as the divergence of the surface stress tensor
are assembled through it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Dual, partial_of, value_of
from .chart_geometry import ChartFrame
from .fields import as_scalar_field, as_vector_field

__all__ = [
    "SurfaceTensors",
    "surface_gradient",
    "surface_divergence_vec",
    "surface_divergence_vec_chart",
    "surface_divergence_mat",
    "surface_laplacian",
    "strain_and_stress",
    "identity_residuals",
    "ibp_residuals",
    "grad_scalar_dual",
    "div_vector_dual",
    "div_matrix_dual",
    "stress_dual",
    "dissipation_density_dual",
]

_AMBIENT = ("x1", "x2", "x3")


# -- ambient forms (plain MetricState + analytic/FD field derivatives) --------


def surface_gradient(f, metric, t=0.0):
    """Tangential gradient P (grad f) at the metric's points; shape (3, ...)."""
    f = as_scalar_field(f)
    g = f.grad(metric.x, t)
    return np.einsum("ij...,j...->i...", metric.P, g)


def surface_divergence_vec(v, metric, t=0.0):
    """Surface divergence of an ambient vector field, projector form."""
    v = as_vector_field(v)
    jac = v.jacobian(metric.x, t)  # jac[i, j] = d v_i / d x_j
    return np.einsum("ij...,ij...->...", metric.P, jac)


def surface_divergence_mat(M, metric, t=0.0):
    """Row-wise surface divergence of an ambient 3x3 matrix field."""
    jac = M.jacobian(metric.x, t)  # jac[i, j, k] = d M_ij / d x_k
    return np.einsum("jk...,ijk...->i...", metric.P, jac)


# -- chart (dual) forms --------------------------------------------------------


def _tangential_partial(frame, q, i):
    """Value of the i-th tangential derivative of a dual surface quantity q."""
    out = 0.0
    for a in range(2):
        for b in range(2):
            out = out + (value_of(frame.inv_gram[a][b]) * value_of(frame.g[a][i])
                         * partial_of(q, ("X1", "X2")[b], like=value_of(frame.x[0])))
    return out


def grad_scalar_dual(f, frame):
    """Tangential gradient of an ambient scalar on a frame; dual 3-vector."""
    f = as_scalar_field(f)
    df = [frame.eval_ambient_partial(f, v) for v in _AMBIENT]
    return [sum(frame.P[i][j] * df[j] for j in range(3)) for i in range(3)]


def div_vector_dual(F, frame):
    """Surface divergence of a dual 3-vector quantity; returns plain values."""
    return frame.dual_div_tangent(F)


def div_matrix_dual(M, frame):
    """Row-wise surface divergence of a dual 3x3 quantity; values (3, ...)."""
    return np.stack([
        sum(_tangential_partial(frame, M[i][j], j) for j in range(3))
        for i in range(3)
    ])


def surface_divergence_vec_chart(v, frame):
    """Chart-form divergence of an ambient vector field (cross-check twin)."""
    v = as_vector_field(v)
    F = [frame.eval_scalar(c) for c in v.comp]
    return div_vector_dual(F, frame)


def surface_laplacian(f, frame):
    """Laplace-Beltrami of an ambient scalar field: div of tangential grad."""
    return div_vector_dual(grad_scalar_dual(f, frame), frame)


# -- strain and stress ---------------------------------------------------------


def _jac_dual(v, frame):
    """Dual ambient Jacobian dv_i/dx_j composed on the surface."""
    return [[frame.eval_ambient_partial(v.comp[i], var) for var in _AMBIENT]
            for i in range(3)]


def _sym(M):
    return [[0.5 * (M[i][j] + M[j][i]) for j in range(3)] for i in range(3)]


def _matmul(A, B):
    return [[sum(A[i][k] * B[k][j] for k in range(3)) for j in range(3)]
            for i in range(3)]


def _contract(A, B):
    return sum(A[i][j] * B[i][j] for i in range(3) for j in range(3))


def strain_dual(v, frame):
    """Dual strain tensors of an ambient vector field on a frame.

    Returns ``(D, Dtan, Dproj, divv)``: the plain strain, the tangential
    strain built from projected derivatives, the doubly-projected strain,
    and the surface divergence (all dual, ready for one more derivative).
    """
    v = as_vector_field(v)
    jac = _jac_dual(v, frame)
    P = frame.P
    D = _sym(jac)
    # tangential gradient entries: (grad_t v_i)_j = P_jk dv_i/dx_k
    gradt = [[sum(P[j][k] * jac[i][k] for k in range(3)) for j in range(3)]
             for i in range(3)]
    Dtan = _sym(gradt)
    Dproj = _matmul(P, _matmul(D, P))
    divv = sum(P[i][j] * jac[i][j] for i in range(3) for j in range(3))
    return D, Dtan, Dproj, divv


def stress_dual(v, sigma, mu, lam, frame):
    """Dual surface stress 2*mu*Dproj + lam*divv*P - sigma*P and helpers."""
    sigma = as_scalar_field(sigma)
    mu = as_scalar_field(mu)
    lam = as_scalar_field(lam)
    D, Dtan, Dproj, divv = strain_dual(v, frame)
    mu_d = frame.eval_scalar(mu)
    lam_d = frame.eval_scalar(lam)
    sig_d = frame.eval_scalar(sigma)
    P = frame.P
    S = [[2.0 * mu_d * Dproj[i][j] + (lam_d * divv - sig_d) * P[i][j]
          for j in range(3)] for i in range(3)]
    return S, D, Dtan, Dproj, divv, mu_d, lam_d, sig_d


def dissipation_density_dual(v, mu, lam, frame):
    """Viscous dissipation 2*mu*|Dproj|^2 + lam*(div v)^2 (dual scalar)."""
    _, _, Dproj, divv = strain_dual(v, frame)
    mu_d = frame.eval_scalar(as_scalar_field(mu))
    lam_d = frame.eval_scalar(as_scalar_field(lam))
    return 2.0 * mu_d * _contract(Dproj, Dproj) + lam_d * divv * divv


@dataclass
class SurfaceTensors:
    """Numeric pointwise tensor package for a velocity/pressure state."""

    grad_sigma: np.ndarray      # tangential gradient of the pressure, (3, ...)
    div_v: np.ndarray           # surface divergence of v, (...)
    D: np.ndarray               # plain strain, (3, 3, ...)
    D_tan: np.ndarray           # tangential strain, (3, 3, ...)
    D_proj: np.ndarray          # doubly-projected strain, (3, 3, ...)
    S: np.ndarray               # surface stress, (3, 3, ...)
    e_dissipation: np.ndarray   # 2 mu |D_proj|^2 + lam |div v|^2, (...)
    e_density: np.ndarray       # half of the above (energy density), (...)


def _mat_values(M, shape):
    return np.stack([np.stack([np.broadcast_to(value_of(M[i][j]), shape)
                               for j in range(3)]) for i in range(3)]).astype(float)


def strain_and_stress(v, sigma, mu, lam, frame):
    """All strain/stress tensors of ``v`` with pressure ``sigma`` on a frame."""
    S, D, Dtan, Dproj, divv, mu_d, lam_d, sig_d = stress_dual(v, sigma, mu, lam, frame)
    shape = frame.shape
    Dp = _mat_values(Dproj, shape)
    dv = np.broadcast_to(value_of(divv), shape).astype(float)
    ed = (2.0 * np.broadcast_to(value_of(mu_d), shape) * np.einsum("ij...,ij...->...", Dp, Dp)
          + np.broadcast_to(value_of(lam_d), shape) * dv * dv)
    gs = np.stack([np.broadcast_to(value_of(c), shape)
                   for c in grad_scalar_dual(sigma, frame)]).astype(float)
    return SurfaceTensors(
        grad_sigma=gs,
        div_v=dv,
        D=_mat_values(D, shape),
        D_tan=_mat_values(Dtan, shape),
        D_proj=Dp,
        S=_mat_values(S, shape),
        e_dissipation=ed,
        e_density=0.5 * ed,
    )


# -- identity residual kernel ----------------------------------------------


def _maxabs(x):
    return float(np.max(np.abs(np.asarray(x, dtype=float))))


def identity_residuals(frame, f, v, phi=None, g=None, mu=None, lam=None,
                       motion_velocity=None):
    """Pointwise residuals of the tangential-calculus identities on a frame.

    ``f, g, mu, lam`` are scalar fields, ``v, phi`` vector fields.  If
    ``motion_velocity`` is supplied (and the frame's chart moves with it),
    the two material-derivative commutation identities are included.
    Returns a dict of max-abs residuals.
    """
    f = as_scalar_field(f)
    v = as_vector_field(v)
    phi = as_vector_field(phi) if phi is not None else v
    g = as_scalar_field(g if g is not None else 1.0)
    mu = as_scalar_field(mu if mu is not None else 1.0)
    lam = as_scalar_field(lam if lam is not None else 1.0)

    P = frame.P
    nvec = frame.n
    res = {}

    # gradient tangency
    gf = grad_scalar_dual(f, frame)
    proj_gf = [sum(P[i][j] * gf[j] for j in range(3)) for i in range(3)]
    res["projected_gradient_idempotent"] = _maxabs(
        [value_of(proj_gf[i] - gf[i]) for i in range(3)])
    res["gradient_tangency"] = _maxabs(
        value_of(sum(nvec[i] * gf[i] for i in range(3))))

    # divergence of f times the projector: grad f + f H n
    f_d = frame.eval_scalar(f)
    fP = [[f_d * P[i][j] for j in range(3)] for i in range(3)]
    div_fP = div_matrix_dual(fP, frame)
    H = frame.H
    nval = np.stack([np.broadcast_to(value_of(c), frame.shape) for c in nvec])
    gfval = np.stack([np.broadcast_to(value_of(c), frame.shape) for c in gf])
    fval = np.broadcast_to(value_of(f_d), frame.shape)
    res["projector_divergence"] = _maxabs(div_fP - (gfval + fval * H * nval))
    Pval = np.stack([np.stack([np.broadcast_to(value_of(P[i][j]), frame.shape)
                               for j in range(3)]) for i in range(3)])
    res["projector_divergence_tangential"] = _maxabs(
        np.einsum("ij...,j...->i...", Pval, div_fP) - gfval)

    # divergence of (f P v): grad f . v + f H (n.v) + f div v
    v_d = [frame.eval_scalar(c) for c in v.comp]
    fPv = [sum(fP[i][j] * v_d[j] for j in range(3)) for i in range(3)]
    div_fPv = div_vector_dual(fPv, frame)
    divv_val = value_of(surface_divergence_vec_chart(v, frame))
    vval = np.stack([np.broadcast_to(value_of(c), frame.shape) for c in v_d])
    res["projector_product_divergence"] = _maxabs(
        div_fPv - (np.einsum("i...,i...->...", gfval, vval)
                   + fval * H * np.einsum("i...,i...->...", nval, vval)
                   + fval * divv_val))

    # advection split: (v,grad)f = (v,grad_t)f + (v.n)(n,grad)f
    df = [value_of(frame.eval_ambient_partial(f, var)) for var in _AMBIENT]
    full_adv = sum(vval[i] * df[i] for i in range(3))
    tang_adv = np.einsum("i...,i...->...", vval, gfval)
    vn = np.einsum("i...,i...->...", vval, nval)
    ndf = sum(nval[i] * df[i] for i in range(3))
    res["advection_split"] = _maxabs(full_adv - (tang_adv + vn * ndf))

    # strain equivalences
    S, D, Dtan, Dproj, divv, mu_d, lam_d, g_d = stress_dual(v, g, mu, lam, frame)
    PDP = _matmul(P, _matmul(D, P))
    PDtP = _matmul(P, _matmul(Dtan, P))
    res["projected_strain_equivalence"] = _maxabs(
        [[value_of(PDP[i][j] - PDtP[i][j]) for j in range(3)] for i in range(3)])

    _, Dtan_phi, Dproj_phi, _ = strain_dual(phi, frame)
    res["strain_contraction_equivalence"] = _maxabs(
        value_of(_contract(Dproj, Dproj_phi) - _contract(Dproj, Dtan_phi)))

    # product rules for the viscous and dilational fluxes and the stress
    muDproj = [[mu_d * Dproj[i][j] for j in range(3)] for i in range(3)]
    muDv = [sum(muDproj[i][j] * v_d[j] for j in range(3)) for i in range(3)]
    lhs = value_of(div_vector_dual(muDv, frame))
    div_muD = div_matrix_dual(muDproj, frame)
    rhs = (np.einsum("i...,i...->...", div_muD, vval)
           + value_of(mu_d) * value_of(_contract(Dproj, Dproj)))
    res["viscous_flux_product_rule"] = _maxabs(lhs - rhs)

    lamP = [[lam_d * divv * P[i][j] for j in range(3)] for i in range(3)]
    lamPv = [sum(lamP[i][j] * v_d[j] for j in range(3)) for i in range(3)]
    lhs = value_of(div_vector_dual(lamPv, frame))
    div_lamP = div_matrix_dual(lamP, frame)
    rhs = (np.einsum("i...,i...->...", div_lamP, vval)
           + value_of(lam_d) * value_of(divv) ** 2)
    res["dilational_flux_product_rule"] = _maxabs(lhs - rhs)

    Sv = [sum(S[i][j] * v_d[j] for j in range(3)) for i in range(3)]
    lhs = value_of(div_vector_dual(Sv, frame))
    div_S = div_matrix_dual(S, frame)
    rhs = (np.einsum("i...,i...->...", div_S, vval)
           + value_of(2.0 * mu_d * _contract(Dproj, Dproj)
                      + lam_d * divv * divv - g_d * divv))
    res["stress_power_decomposition"] = _maxabs(lhs - rhs)

    res["stress_contraction"] = _maxabs(value_of(
        _contract(S, Dproj)
        - (2.0 * mu_d * _contract(Dproj, Dproj) + lam_d * divv * divv - g_d * divv)))

    # material-derivative commutation (needs a chart moving with the velocity)
    if motion_velocity is not None:
        w = as_vector_field(motion_velocity)
        res.update(_material_residuals(frame, f, w))
    return res


def _material_residuals(frame, f, v):
    """Commutation identities between material derivatives and transport terms."""
    shape = frame.shape
    x = [value_of(c) for c in frame.x]
    xarr = np.stack([np.broadcast_to(c, shape) for c in x])
    t = frame.t
    vval = v.value(xarr, t)
    # consistency: the chart must move with v
    xt = np.stack([np.broadcast_to(partial_of(frame.x[i], "t", like=x[0]), shape)
                   for i in range(3)])
    res = {"chart_velocity_consistency": _maxabs(xt - vval)}

    nval = np.stack([np.broadcast_to(value_of(c), shape) for c in frame.n])
    Pval = np.stack([np.stack([np.broadcast_to(value_of(frame.P[i][j]), shape)
                               for j in range(3)]) for i in range(3)])

    fval = f.value(xarr, t)
    gradf = f.grad(xarr, t)
    ft = f.dt(xarr, t)
    Dt_f = ft + np.einsum("i...,i...->...", vval, gradf)
    vn = np.einsum("i...,i...->...", vval, nval)
    DtN_f = ft + vn * np.einsum("i...,i...->...", nval, gradf)

    # divergence terms through the dual route
    f_d = frame.eval_scalar(f)
    v_d = [frame.eval_scalar(c) for c in v.comp]
    div_fv = value_of(div_vector_dual([f_d * v_d[i] for i in range(3)], frame))
    divv = value_of(div_vector_dual(v_d, frame))
    res["transport_commutation_scalar"] = _maxabs(
        (DtN_f + div_fv) - (Dt_f + divv * fval))

    # momentum version: DtN(f v) + div(f v x v) = {Dt f + (div v) f} v + f Dt v
    jac = v.jacobian(xarr, t)
    vt = v.dt(xarr, t)
    Dt_v = vt + np.einsum("j...,ij...->i...", vval, jac)
    lhs = []
    for i in range(3):
        grad_fvi = fval * jac[i] + vval[i] * gradf
        dt_fvi = ft * vval[i] + fval * vt[i]
        dtn = dt_fvi + vn * np.einsum("j...,j...->...", nval, grad_fvi)
        row = [f_d * v_d[i] * v_d[j] for j in range(3)]
        div_row = value_of(div_vector_dual(row, frame))
        lhs.append(dtn + div_row)
    lhs = np.stack(lhs)
    rhs = (Dt_f + divv * fval) * vval + fval * Dt_v
    res["transport_commutation_momentum"] = _maxabs(lhs - rhs)
    return res


# -- integration by parts ----------------------------------------------------


def ibp_residuals(f, phi, atlas, rule, t=0.0, m=0):
    """Residuals of the two closed-surface integration-by-parts identities.

    Returns ``(r_component, r_divergence)`` where the first uses component
    ``m`` of the tangential derivative against ``phi``'s m-th component used
    as a scalar ``g``, and the second pairs ``f`` with the divergence of
    ``phi``.
    """
    f = as_scalar_field(f)
    phi = as_vector_field(phi)
    g = phi.comp[m]

    acc_comp = 0.0
    acc_div = 0.0
    for chart, (X, w, psi) in zip(atlas.charts, rule.nodes):
        frame = chart.frame(X[0], X[1], t)
        st = frame.metric()
        wgt = w * psi * st.sqrtJ
        gf = np.stack([np.broadcast_to(value_of(c), frame.shape)
                       for c in grad_scalar_dual(f, frame)])
        gg = np.stack([np.broadcast_to(value_of(c), frame.shape)
                       for c in grad_scalar_dual(g, frame)])
        fv = f.value(st.x, t)
        gv = g.value(st.x, t)
        H = st.H
        acc_comp += np.sum(wgt * (gf[m] * gv + fv * gg[m] + H * st.n[m] * fv * gv))
        phi_d = [frame.eval_scalar(c) for c in phi.comp]
        divphi = value_of(div_vector_dual(phi_d, frame))
        phival = phi.value(st.x, t)
        flux = np.einsum("i...,i...->...", gf + fv * H * st.n, phival)
        acc_div += np.sum(wgt * (fv * divphi + flux))
    return float(abs(acc_comp)), float(abs(acc_div))
