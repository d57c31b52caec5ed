"""Leray projection, Stokes solves, the inverse Stokes operator and its
dual norm, and the variable-viscosity symmetric-gradient operator.

The constant-viscosity Stokes system  -lap(u) + grad(p) = f, div(u) = 0
is solved by a pressure-Schur (Uzawa) conjugate-gradient iteration whose
inner vector-Laplacian inverse is an exact sine-transform solve (no-slip)
or an FFT solve (periodic).  The variable-viscosity system replaces the
inner inverse by a preconditioned CG on the symmetric-gradient operator

    A_nu w = -div(nu D w),   D w = (grad w + grad w^T) / 2,

which is assembled in strain/transpose form so it is symmetric positive
definite to round-off: diagonal strain entries are sampled at cells with
cell-centered nu, the off-diagonal entry at nodes with harmonically
averaged nu.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import potential as pot
from ._transforms import solve_scalar_poisson, solve_u_component, solve_v_component
from .errors import ConvergenceError
from .fields import (
    Grid,
    MacVectorField,
    ScalarField,
    _node_weights,
    divergence,
    face_inner,
    gradient_to_faces,
    l2,
    mac_h1_semi,
    mac_l2,
    mean,
    node_harmonic_average,
    sym_grad_components,
)

logger = logging.getLogger(__name__)

__all__ = [
    "StokesSolution",
    "leray_project",
    "stokes_solve",
    "inverse_stokes",
    "dual_norm_sharp",
    "stokes_var_solve",
    "vector_laplacian",
    "apply_viscous_stress",
    "viscous_helmholtz_solve",
]


@dataclass
class StokesSolution:
    u: MacVectorField
    p: ScalarField
    residual: float


# ---------------------------------------------------------------------------
# component-wise vector Laplacian (odd tangential ghosts at walls)


def vector_laplacian(w: MacVectorField) -> MacVectorField:
    g = w.grid
    hx2, hy2 = g.hx**2, g.hy**2
    if g.periodic:
        uu, vv = w.u[:-1, :], w.v[:, :-1]
        lu = (
            (np.roll(uu, -1, 0) - 2 * uu + np.roll(uu, 1, 0)) / hx2
            + (np.roll(uu, -1, 1) - 2 * uu + np.roll(uu, 1, 1)) / hy2
        )
        lv = (
            (np.roll(vv, -1, 0) - 2 * vv + np.roll(vv, 1, 0)) / hx2
            + (np.roll(vv, -1, 1) - 2 * vv + np.roll(vv, 1, 1)) / hy2
        )
        out = MacVectorField.zeros(g)
        out.u[:-1, :] = lu
        out.v[:, :-1] = lv
        out.u[-1, :] = out.u[0, :]
        out.v[:, -1] = out.v[:, 0]
        return out
    # no-slip: boundary normal faces are constrained to zero; tangential
    # ghosts reflect oddly so the wall velocity vanishes
    ug = np.pad(w.u, ((0, 0), (1, 1)))
    ug[:, 0] = -w.u[:, 0]
    ug[:, -1] = -w.u[:, -1]
    lu = np.zeros_like(w.u)
    lu[1:-1, :] = (w.u[2:, :] - 2 * w.u[1:-1, :] + w.u[:-2, :]) / hx2 + (
        ug[1:-1, 2:] - 2 * ug[1:-1, 1:-1] + ug[1:-1, :-2]
    ) / hy2
    vg = np.pad(w.v, ((1, 1), (0, 0)))
    vg[0, :] = -w.v[0, :]
    vg[-1, :] = -w.v[-1, :]
    lv = np.zeros_like(w.v)
    lv[:, 1:-1] = (vg[2:, 1:-1] - 2 * vg[1:-1, 1:-1] + vg[:-2, 1:-1]) / hx2 + (
        w.v[:, 2:] - 2 * w.v[:, 1:-1] + w.v[:, :-2]
    ) / hy2
    return MacVectorField(w.grid, lu, lv)


def _inv_laplacian(g: Grid, w: MacVectorField, zero_mean: bool) -> MacVectorField:
    u = solve_u_component(g, w.u, 0.0, 1.0, zero_mean=zero_mean)
    v = solve_v_component(g, w.v, 0.0, 1.0, zero_mean=zero_mean)
    return MacVectorField(g, u, v)


def _demean_components(w: MacVectorField) -> MacVectorField:
    """Remove per-component means (periodic-mode nullspace of -lap)."""
    g = w.grid
    mu = float(np.mean(w.u[:-1, :]))
    mv = float(np.mean(w.v[:, :-1]))
    if max(abs(mu), abs(mv)) > 1e-13 * max(1.0, mac_l2(w)):
        logger.debug("removed velocity-component means (%.3e, %.3e)", mu, mv)
    out = w.copy()
    out.u -= mu
    out.v -= mv
    return out


# ---------------------------------------------------------------------------
# Leray projection


def leray_project(w: MacVectorField) -> MacVectorField:
    """w minus the face gradient of the pressure potential of div(w).

    Annihilates discrete gradients, is idempotent, and preserves the
    no-penetration boundary faces exactly.
    """
    g = w.grid
    # laplace(q) = div(w): the fast solver inverts -laplace, so negate
    q = solve_scalar_poisson(g, -divergence(w).values)
    gq = gradient_to_faces(ScalarField(g, q))
    return MacVectorField(g, w.u - gq.u, w.v - gq.v)


# ---------------------------------------------------------------------------
# Uzawa pressure-Schur iteration


def _schur_cg(g: Grid, ainv, f: MacVectorField, rel_tol: float, max_iter: int):
    """Solve div(ainv(grad p)) = div(ainv(f)) for mean-zero p by CG on the
    (negated, SPD) Schur complement."""
    rhs = -divergence(ainv(f)).values.ravel()
    n = g.nx * g.ny

    def smat(pflat):
        p = ScalarField(g, pflat.reshape(g.nx, g.ny))
        return -divergence(ainv(gradient_to_faces(p))).values.ravel()

    op = LinearOperator((n, n), matvec=smat)
    p, info = cg(op, rhs, rtol=rel_tol, atol=0.0, maxiter=max_iter)
    if info != 0:
        raise ConvergenceError(f"Uzawa pressure CG failed (info={info})")
    pf = ScalarField(g, p.reshape(g.nx, g.ny))
    pf = ScalarField(g, pf.values - mean(pf))
    return pf


def _neg_laplacian(w: MacVectorField) -> MacVectorField:
    lw = vector_laplacian(w)
    return MacVectorField(w.grid, -lw.u, -lw.v)


def _momentum_residual(applyA, u: MacVectorField, p: ScalarField, f: MacVectorField) -> float:
    gp = gradient_to_faces(p)
    au = applyA(u)
    r = MacVectorField(u.grid, f.u - au.u - gp.u, f.v - au.v - gp.v)
    scale = max(mac_l2(f), 1e-300)
    return mac_l2(r) / scale


def stokes_solve(
    f: MacVectorField, rel_tol: float = 1e-12, max_iter: int = 600
) -> StokesSolution:
    """Solve -lap(u) + grad(p) = f, div(u) = 0 with no-slip or periodic
    boundary handling; the pressure is returned mean-zero.

    In periodic mode the per-component means of f (which admit no steady
    response) are removed; the solve is then an exact transform solve.
    """
    g = f.grid
    if g.periodic:
        fd = _demean_components(f)
        p = ScalarField(g, -solve_scalar_poisson(g, divergence(fd).values))
        gp = gradient_to_faces(p)
        rhs = MacVectorField(g, fd.u - gp.u, fd.v - gp.v)
        u = _inv_laplacian(g, rhs, zero_mean=True)
        return StokesSolution(u=u, p=p, residual=_momentum_residual(_neg_laplacian, u, p, fd))

    def ainv(w):
        return _inv_laplacian(g, w, zero_mean=False)

    p = _schur_cg(g, ainv, f, rel_tol, max_iter)
    gp = gradient_to_faces(p)
    u = ainv(MacVectorField(g, f.u - gp.u, f.v - gp.v))
    return StokesSolution(u=u, p=p, residual=_momentum_residual(_neg_laplacian, u, p, f))


def inverse_stokes(f: MacVectorField) -> MacVectorField:
    """Velocity of the Stokes solve of the Leray projection of f."""
    return stokes_solve(leray_project(f)).u


def dual_norm_sharp(f: MacVectorField) -> float:
    """Dual norm |grad A^{-1} f| of (the solenoidal part of) f."""
    return mac_h1_semi(inverse_stokes(f))


# ---------------------------------------------------------------------------
# variable-viscosity symmetric-gradient operator


def apply_viscous_stress(w: MacVectorField, nu_cells: np.ndarray) -> MacVectorField:
    """-div(nu D w) in strain/transpose form (SPD to round-off).

    The returned field represents the operator acting on free faces;
    constrained boundary faces carry zeros (duplicates synced in periodic
    mode).
    """
    g = w.grid
    hx, hy = g.hx, g.hy
    dxx, dyy, dxy = sym_grad_components(w)
    nu_n = node_harmonic_average(g, nu_cells)
    wx, wy = _node_weights(g)
    axx = nu_cells * dxx
    ayy = nu_cells * dyy
    b = 2.0 * nu_n * (wx[:, None] * wy[None, :]) * dxy

    out = MacVectorField.zeros(g)
    if g.periodic:
        out.u[:-1, :] = (np.roll(axx, 1, 0) - axx) / hx + (b - np.roll(b, -1, 1)) / (2 * hy)
        out.v[:, :-1] = (np.roll(ayy, 1, 1) - ayy) / hy + (b - np.roll(b, -1, 0)) / (2 * hx)
        out.u[-1, :] = out.u[0, :]
        out.v[:, -1] = out.v[:, 0]
        return out
    # wall nodes enter the strain with doubled sensitivity (odd ghosts)
    b_u = b.copy()
    b_u[:, 0] *= 2.0
    b_u[:, -1] *= 2.0
    out.u[1:-1, :] = (axx[:-1, :] - axx[1:, :]) / hx + (
        b_u[1:-1, :-1] - b_u[1:-1, 1:]
    ) / (2 * hy)
    b_v = b.copy()
    b_v[0, :] *= 2.0
    b_v[-1, :] *= 2.0
    out.v[:, 1:-1] = (ayy[:, :-1] - ayy[:, 1:]) / hy + (
        b_v[:-1, 1:-1] - b_v[1:, 1:-1]
    ) / (2 * hx)
    return out


def _pack(g: Grid, w: MacVectorField) -> np.ndarray:
    if g.periodic:
        return np.concatenate([w.u[:-1, :].ravel(), w.v[:, :-1].ravel()])
    return np.concatenate([w.u.ravel(), w.v.ravel()])


def _unpack(g: Grid, x: np.ndarray) -> MacVectorField:
    if g.periodic:
        nu_ = g.nx * g.ny
        w = MacVectorField.zeros(g)
        w.u[:-1, :] = x[:nu_].reshape(g.nx, g.ny)
        w.v[:, :-1] = x[nu_:].reshape(g.nx, g.ny)
        w.u[-1, :] = w.u[0, :]
        w.v[:, -1] = w.v[:, 0]
        return w
    nu_ = (g.nx + 1) * g.ny
    u = x[:nu_].reshape(g.nx + 1, g.ny)
    v = x[nu_:].reshape(g.nx, g.ny + 1)
    return MacVectorField(g, u, v)


def viscous_helmholtz_solve(
    rhs: MacVectorField,
    nu_cells: np.ndarray,
    c0: float,
    rel_tol: float = 1e-11,
    max_iter: int = 400,
    x0: MacVectorField | None = None,
) -> MacVectorField:
    """Solve (c0 I - div(nu D .)) w = rhs by preconditioned CG.

    The preconditioner is the constant-coefficient operator
    (c0 + (nu_bar/2)(-lap))^{-1} applied per component by fast transforms.
    For c0 = 0 in periodic mode the constant nullspace is projected out.
    """
    g = rhs.grid
    nu_bar = 0.5 * float(np.min(nu_cells) + np.max(nu_cells))
    deflate = g.periodic and c0 == 0.0

    def matvec(x):
        w = _unpack(g, x)
        out = apply_viscous_stress(w, nu_cells)
        if c0 != 0.0:
            out.u += c0 * w.u
            out.v += c0 * w.v
        if g.periodic:
            out.u[-1, :] = out.u[0, :]
            out.v[:, -1] = out.v[:, 0]
        return _pack(g, out)

    def prec(x):
        w = _unpack(g, x)
        pu = solve_u_component(g, w.u, c0, 0.5 * nu_bar, zero_mean=deflate)
        pv = solve_v_component(g, w.v, c0, 0.5 * nu_bar, zero_mean=deflate)
        return _pack(g, MacVectorField(g, pu, pv))

    b = _demean_components(rhs) if deflate else rhs
    bx = _pack(g, b)
    n = bx.size
    op = LinearOperator((n, n), matvec=matvec)
    pm = LinearOperator((n, n), matvec=prec)
    x0v = None if x0 is None else _pack(g, x0)
    x, info = cg(op, bx, x0=x0v, rtol=rel_tol, atol=0.0, maxiter=max_iter, M=pm)
    if info != 0:
        raise ConvergenceError(f"viscous CG failed (info={info})")
    return _unpack(g, x)


def stokes_var_solve(
    f: MacVectorField,
    phi: ScalarField,
    visc: pot.ViscositySpec,
    rel_tol: float = 1e-10,
    max_iter: int = 300,
) -> StokesSolution:
    """Solve -div(nu(phi) D u) + grad(pi) = f, div(u) = 0.

    Uzawa CG on the pressure with inner preconditioned-CG viscous solves.
    Reduces to the constant-viscosity solve (with the half-Laplacian
    factor) when nu(phi) is constant.
    """
    g = f.grid
    nu_cells = np.asarray(pot.nu(visc, phi.values))
    inner_tol = min(1e-12, rel_tol * 1e-2)

    def ainv(w):
        return viscous_helmholtz_solve(
            w, nu_cells, 0.0, rel_tol=inner_tol, max_iter=10 * max_iter
        )

    fd = _demean_components(f) if g.periodic else f
    p = _schur_cg(g, ainv, fd, rel_tol, max_iter)
    gp = gradient_to_faces(p)
    u = ainv(MacVectorField(g, fd.u - gp.u, fd.v - gp.v))
    res = _momentum_residual(lambda w: apply_viscous_stress(w, nu_cells), u, p, fd)
    return StokesSolution(u=u, p=p, residual=res)
