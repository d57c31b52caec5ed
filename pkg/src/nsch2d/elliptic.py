"""Neumann operators, dual norm, the logarithmic Neumann problem, and the
initial-datum preparation procedure.

``solve_neumann_poisson`` and ``solve_helmholtz`` are exact direct solves
of the discrete 5-point systems via fast cosine/Fourier transforms.  The
nonlinear problem  -lap(u) + F'(u) = f  is solved by a damped Newton
iteration whose iterates are confined to (-1, 1) by a
fraction-to-the-boundary rule; the converged solution satisfies the
discrete maximum principle  max|F'(u)| <= max|f|  exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import potential as pot
from ._transforms import solve_scalar_helmholtz, solve_scalar_poisson, solve_scalar_symbol
from .errors import ConvergenceError
from .fields import ScalarField, h1_semi, l2, laplace, linf, mean

logger = logging.getLogger(__name__)

__all__ = [
    "NeumannSolverConfig",
    "PreparedDatum",
    "solve_neumann_poisson",
    "dual_norm_star",
    "solve_helmholtz",
    "truncate",
    "solve_log_neumann",
    "prepare_initial_datum",
]


@dataclass(frozen=True)
class NeumannSolverConfig:
    rel_tol: float = 1e-10
    max_iter: int = 400
    newton_tol: float = 1e-11
    newton_max: int = 60
    safeguard_margin: float = 0.05

    def __post_init__(self):
        if not (0 < self.rel_tol < 1 and 0 < self.newton_tol < 1):
            raise ValueError("tolerances must lie in (0, 1)")
        if not (0 < self.safeguard_margin < 1):
            raise ValueError("safeguard_margin must lie in (0, 1)")


@dataclass(frozen=True)
class PreparedDatum:
    """Truncated-and-resolved initial phase field.

    phi0k solves  -lap(phi0k) + F'(phi0k) = clamp(mu_tilde0, +-k)  and is
    uniformly separated from +-1 by sep_delta = 1 - max|phi0k| > 0.
    """

    phi0k: ScalarField
    mu_tilde0k: ScalarField
    k: float
    sep_delta: float


def solve_neumann_poisson(f: ScalarField) -> ScalarField:
    """Unique mean-zero u with laplace(u) = -(f - mean(f)).

    The input mean is subtracted (and logged when non-negligible): the
    operator inverts only on mean-zero data.
    """
    m = mean(f)
    if abs(m) > 1e-12 * max(1.0, linf(f)):
        logger.debug("solve_neumann_poisson: removed mean %.3e from rhs", m)
    u = solve_scalar_poisson(f.grid, f.values)
    return ScalarField(f.grid, u)


def dual_norm_star(f: ScalarField) -> float:
    """H^-1-type dual norm |grad A0^{-1} f| of mean-zero data."""
    return h1_semi(solve_neumann_poisson(f))


def solve_helmholtz(f: ScalarField, lam: float) -> ScalarField:
    """u with -laplace(u) + lam u = f, lam > 0 (no mean restriction)."""
    if lam <= 0:
        raise ValueError(f"helmholtz shift must be positive, got {lam}")
    return ScalarField(f.grid, solve_scalar_helmholtz(f.grid, f.values, lam))


def truncate(f: ScalarField, k: float) -> ScalarField:
    """Pointwise clamp to [-k, k]."""
    if k <= 0:
        raise ValueError(f"truncation level must be positive, got {k}")
    return ScalarField(f.grid, np.clip(f.values, -k, k))


def _interior_bound(spec: pot.PotentialSpec, fmax: float) -> float:
    """Largest b < 1 with theta * atanh(b) <= fmax, nudged down so the
    maximum principle holds exactly in floating point."""
    b = min(np.tanh(fmax / spec.theta), np.nextafter(1.0, 0.0))
    while b > 0 and pot.dF(spec, b) > fmax:
        b = np.nextafter(b, 0.0)
    return b


def _fraction_to_boundary(u: np.ndarray, du: np.ndarray, margin: float) -> float:
    """Largest step t <= 1 with |u + t du| <= 1 - margin (1 - |u|)."""
    hi = (1.0 - u) * (1.0 - margin)  # allowed increase
    lo = (1.0 + u) * (1.0 - margin)  # allowed decrease
    with np.errstate(divide="ignore"):
        t_up = np.where(du > 0, hi / np.where(du > 0, du, 1.0), np.inf)
        t_dn = np.where(du < 0, lo / np.where(du < 0, -du, 1.0), np.inf)
    return float(min(1.0, t_up.min(), t_dn.min()))


def solve_log_neumann(
    f: ScalarField,
    spec: pot.PotentialSpec,
    cfg: NeumannSolverConfig = NeumannSolverConfig(),
    u0: ScalarField | None = None,
) -> ScalarField:
    """Solve -laplace(u) + F'(u) = f by a safeguarded Newton iteration.

    In exact-potential mode the iterates never leave (-1, 1) and the
    converged solution obeys max|F'(u)| <= max|f| exactly (the monotone
    problem's maximum principle, applied as a final projection onto the
    interval that provably contains the solution).  By monotonicity the
    solution is unique, so the optional initial guess u0 only affects the
    iteration count.
    """
    g = f.grid
    n = g.nx * g.ny
    exact = spec.eps == 0.0
    u = np.zeros((g.nx, g.ny)) if u0 is None else u0.values.copy()
    fv = f.values

    def residual(uv: np.ndarray) -> np.ndarray:
        uf = ScalarField(g, uv)
        return -laplace(uf).values + np.asarray(pot.dF(spec, uv)) - fv

    r = residual(u)
    r0 = np.linalg.norm(r)
    tol = cfg.newton_tol * max(r0, 1.0e-30) + 1e-16 * np.linalg.norm(fv)

    for _ in range(cfg.newton_max):
        rn = np.linalg.norm(r)
        if rn <= tol:
            break
        c = np.asarray(pot.d2F(spec, u))
        cbar = float(np.mean(c))

        def jmat(x):
            xf = ScalarField(g, x.reshape(g.nx, g.ny))
            out = -laplace(xf).values + c * xf.values
            return out.ravel()

        def prec(x):
            return solve_scalar_symbol(
                g, x.reshape(g.nx, g.ny), lambda lam: lam + cbar
            ).ravel()

        op = LinearOperator((n, n), matvec=jmat)
        pm = LinearOperator((n, n), matvec=prec)
        du, info = cg(op, -r.ravel(), rtol=min(1e-8, cfg.rel_tol * 1e2),
                      atol=0.0, maxiter=cfg.max_iter, M=pm)
        if info != 0:
            raise ConvergenceError(
                f"inner CG failed (info={info}) in the logarithmic Neumann solve",
                residual=float(rn),
            )
        du = du.reshape(g.nx, g.ny)

        t = _fraction_to_boundary(u, du, cfg.safeguard_margin) if exact else 1.0
        # residual backtracking: halve until the step is a descent step
        accepted = False
        for _ in range(30):
            cand = u + t * du
            rc = residual(cand)
            if np.linalg.norm(rc) <= (1.0 - 1e-4 * t) * rn or np.linalg.norm(rc) <= tol:
                u, r = cand, rc
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise ConvergenceError(
                "Newton backtracking stalled in the logarithmic Neumann solve",
                residual=float(rn),
            )
    else:
        raise ConvergenceError(
            f"Newton did not converge in {cfg.newton_max} iterations "
            f"(residual {np.linalg.norm(r):.3e}, tol {tol:.3e})",
            residual=float(np.linalg.norm(r)),
        )

    if exact:
        b = _interior_bound(spec, linf(f))
        u = np.clip(u, -b, b)
    return ScalarField(g, u)


def prepare_initial_datum(
    phi0: ScalarField,
    k: float,
    spec: pot.PotentialSpec,
    cfg: NeumannSolverConfig = NeumannSolverConfig(),
) -> PreparedDatum:
    """Truncate the chemical source of phi0 at level k and re-solve.

    Computes mu_tilde0 = -lap(phi0) + F'(phi0), clamps it to [-k, k] and
    solves the logarithmic Neumann problem, which yields a datum with
    max|F'(phi0k)| <= k and hence a strictly positive separation from +-1.
    """
    if k <= 0:
        raise ValueError(f"truncation level must be positive, got {k}")
    if spec.eps == 0.0 and linf(phi0) >= 1.0:
        raise ValueError(
            "initial datum must satisfy |phi0| < 1 pointwise for the exact potential"
        )
    if abs(mean(phi0)) >= 1.0:
        raise ValueError(f"initial mean must lie in (-1, 1), got {mean(phi0)}")

    mu_tilde0 = ScalarField(
        phi0.grid, -laplace(phi0).values + np.asarray(pot.dF(spec, phi0.values))
    )
    mu_tilde0k = truncate(mu_tilde0, k)
    phi0k = solve_log_neumann(mu_tilde0k, spec, cfg)

    sep_delta = 1.0 - linf(phi0k)
    if sep_delta <= 0.0:
        raise ConvergenceError("prepared datum failed to separate from +-1")
    m = mean(phi0k)
    if abs(m) >= 1.0:
        raise ConvergenceError(
            f"prepared datum has non-admissible mean {m}; increase the truncation level"
        )
    return PreparedDatum(phi0k=phi0k, mu_tilde0k=mu_tilde0k, k=float(k), sep_delta=sep_delta)
