"""Fast transform-based solves for the constant-coefficient operators.

The mirror-ghost Neumann Laplacian on cell centers is diagonalized exactly
by the type-II cosine transform; the periodic one by the FFT.  The no-slip
velocity-component Laplacians (Dirichlet on the normal boundary faces, odd
reflection across walls for the tangential direction) are diagonalized by
type-I / type-II sine transforms.  Everything here is an exact direct
solve of the corresponding 5-point system, not an approximation.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, dst, idctn, idst, irfft2, rfft2

from .fields import Grid

__all__ = [
    "scalar_laplacian_symbol",
    "solve_scalar_symbol",
    "solve_scalar_helmholtz",
    "solve_scalar_poisson",
    "solve_u_component",
    "solve_v_component",
]


def _lam_neumann(n: int, h: float) -> np.ndarray:
    k = np.arange(n)
    return (2.0 - 2.0 * np.cos(np.pi * k / n)) / h**2


def _lam_periodic(n: int, h: float) -> np.ndarray:
    k = np.arange(n)
    return (2.0 - 2.0 * np.cos(2.0 * np.pi * k / n)) / h**2


def _lam_dirichlet_faces(n: int, h: float) -> np.ndarray:
    # interior faces 1..n-1, modes sin(pi m i / n)
    m = np.arange(1, n)
    return (2.0 - 2.0 * np.cos(np.pi * m / n)) / h**2


def _lam_odd_cells(n: int, h: float) -> np.ndarray:
    # cell-centered with odd wall reflection, modes sin(pi m (j+1/2) / n)
    m = np.arange(1, n + 1)
    return (2.0 - 2.0 * np.cos(np.pi * m / n)) / h**2


def scalar_laplacian_symbol(grid: Grid) -> np.ndarray:
    """Eigenvalues of -laplace on cell centers, shaped for the transform."""
    if grid.periodic:
        lx = _lam_periodic(grid.nx, grid.hx)
        ly = _lam_periodic(grid.ny, grid.hy)[: grid.ny // 2 + 1]
    else:
        lx = _lam_neumann(grid.nx, grid.hx)
        ly = _lam_neumann(grid.ny, grid.hy)
    return lx[:, None] + ly[None, :]


def solve_scalar_symbol(grid: Grid, rhs: np.ndarray, denom_fn, zero_mean: bool = False):
    """Solve op(u) = rhs where op has symbol denom_fn(lambda) in the
    eigenbasis of -laplace.  With zero_mean the constant mode is projected
    out of both rhs and solution (denominator there may vanish)."""
    lam = scalar_laplacian_symbol(grid)
    denom = denom_fn(lam)
    if grid.periodic:
        fh = rfft2(rhs)
        if zero_mean:
            fh[0, 0] = 0.0
            denom = denom.copy()
            denom[0, 0] = 1.0
        return irfft2(fh / denom, s=rhs.shape)
    fh = dctn(rhs, type=2, norm="ortho")
    if zero_mean:
        fh[0, 0] = 0.0
        denom = denom.copy()
        denom[0, 0] = 1.0
    return idctn(fh / denom, type=2, norm="ortho")


def solve_scalar_poisson(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Mean-zero u with -laplace(u) = rhs - mean(rhs)."""
    return solve_scalar_symbol(grid, rhs, lambda lam: lam, zero_mean=True)


def solve_scalar_helmholtz(grid: Grid, rhs: np.ndarray, lam0: float) -> np.ndarray:
    """u with (-laplace + lam0 I) u = rhs, lam0 > 0."""
    return solve_scalar_symbol(grid, rhs, lambda lam: lam + lam0)


def _solve_sine(arr, types, lams, c0, coef):
    th = dst(arr, type=types[0], axis=0, norm="ortho")
    th = dst(th, type=types[1], axis=1, norm="ortho")
    th /= c0 + coef * (lams[0][:, None] + lams[1][None, :])
    th = idst(th, type=types[1], axis=1, norm="ortho")
    return idst(th, type=types[0], axis=0, norm="ortho")


def _solve_fft2(arr, lams, c0, coef, zero_mean):
    fh = rfft2(arr)
    denom = c0 + coef * (lams[0][:, None] + lams[1][None, :])
    if zero_mean:
        fh[0, 0] = 0.0
        denom = denom.copy()
        denom[0, 0] = 1.0
    return irfft2(fh / denom, s=arr.shape)


def solve_u_component(grid: Grid, rhs_u: np.ndarray, c0: float, coef: float,
                      zero_mean: bool = False) -> np.ndarray:
    """Solve (c0 + coef (-Lap_u)) x = rhs for an x-face array.

    No-slip: Dirichlet zeros at the boundary faces, odd reflection in y.
    Boundary rows of the result are exact zeros; in periodic mode the
    duplicated face is synced.
    """
    g = grid
    out = np.zeros_like(rhs_u)
    if g.periodic:
        lx = _lam_periodic(g.nx, g.hx)
        ly = _lam_periodic(g.ny, g.hy)[: g.ny // 2 + 1]
        out[:-1, :] = _solve_fft2(rhs_u[:-1, :], (lx, ly), c0, coef, zero_mean)
        out[-1, :] = out[0, :]
        return out
    lx = _lam_dirichlet_faces(g.nx, g.hx)
    ly = _lam_odd_cells(g.ny, g.hy)
    out[1:-1, :] = _solve_sine(rhs_u[1:-1, :], (1, 2), (lx, ly), c0, coef)
    return out


def solve_v_component(grid: Grid, rhs_v: np.ndarray, c0: float, coef: float,
                      zero_mean: bool = False) -> np.ndarray:
    g = grid
    out = np.zeros_like(rhs_v)
    if g.periodic:
        lx = _lam_periodic(g.nx, g.hx)
        ly = _lam_periodic(g.ny, g.hy)[: g.ny // 2 + 1]
        out[:, :-1] = _solve_fft2(rhs_v[:, :-1], (lx, ly), c0, coef, zero_mean)
        out[:, -1] = out[:, 0]
        return out
    lx = _lam_odd_cells(g.nx, g.hx)
    ly = _lam_dirichlet_faces(g.ny, g.hy)
    out[:, 1:-1] = _solve_sine(rhs_v[:, 1:-1], (2, 1), (lx, ly), c0, coef)
    return out
