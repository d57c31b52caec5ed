"""Logarithmic double-well potential, its regularization family, and the
concentration-dependent viscosity blend.

The free-energy density is split as  psi(z) = F(z) - (theta0/2) z**2  where

    F(z) = (theta/2) * ((1+z) ln(1+z) + (1-z) ln(1-z))

is the convex logarithmic part, defined on (-1, 1) and singular at +-1.
For ``eps > 0`` the convex part is replaced by its quadratic Taylor
extension about +-(1-eps), which is C^2 on all of R and keeps
F_eps'' >= theta.  ``eps = 0`` selects the exact potential; callers are then
responsible for staying strictly inside (-1, 1).

All operations are pure functions of immutable specs and accept scalars or
numpy arrays; they never mutate their inputs and are safe to call from any
number of threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PotentialSpec",
    "ViscositySpec",
    "PotentialDomainError",
    "CheckResult",
    "AssumptionReport",
    "F",
    "dF",
    "d2F",
    "psi",
    "dpsi",
    "d2psi",
    "nu",
    "nu_prime",
    "verify_assumptions",
]


class PotentialDomainError(ValueError):
    """Raised when the exact logarithmic potential is evaluated at |z| >= 1."""


@dataclass(frozen=True)
class PotentialSpec:
    """Parameters of the (possibly regularized) logarithmic potential.

    theta  : temperature parameter of the convex logarithmic part.
    theta0 : critical-temperature parameter of the concave quadratic part.
    eps    : regularization width; 0 means the exact singular potential.

    Requires 0 < theta < theta0 (so alpha = theta0 - theta > 0) and
    0 <= eps < 1.  The monotonicity width gamma of F'' near +-1 is a
    documented assumption only: for the logarithmic F, F'' = theta/(1-z^2)
    is automatically monotone on each half-interval.
    """

    theta: float = 1.0
    theta0: float = 2.0
    eps: float = 0.0
    alpha: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.theta < self.theta0):
            raise ValueError(
                f"need 0 < theta < theta0, got theta={self.theta}, theta0={self.theta0}"
            )
        if not (0.0 <= self.eps < 1.0):
            raise ValueError(f"need 0 <= eps < 1, got eps={self.eps}")
        object.__setattr__(self, "alpha", self.theta0 - self.theta)


@dataclass(frozen=True)
class ViscositySpec:
    """Linear viscosity blend nu(z) = nu1 (1+z)/2 + nu2 (1-z)/2 on [-1, 1].

    Outside [-1, 1] the blend is extended so that nu is C^2, constant for
    |z| >= 1 + smoothing width, and globally positive:  the slope ramps to
    zero over [1, 1+s] via a cubic smoothstep (so nu itself is a quartic
    there).  The ramp overshoots the endpoint value by |nu1-nu2| s/4; when
    the fluids are strongly mismatched, s is shrunk so the lower bound
    stays above min(nu1, nu2)/2.

    nu_star and nu_upper are the derived global bounds with
    0 < 2 nu_star <= nu(z) <= nu_upper for every real z.
    """

    nu1: float = 1.0
    nu2: float = 1.0
    smoothing: float = 0.1
    nu_star: float = field(init=False)
    nu_upper: float = field(init=False)

    def __post_init__(self):
        if self.nu1 <= 0 or self.nu2 <= 0:
            raise ValueError(f"viscosities must be positive, got {self.nu1}, {self.nu2}")
        if not (0.0 < self.smoothing <= 1.0):
            raise ValueError(f"smoothing width must be in (0, 1], got {self.smoothing}")
        nu_min, nu_max = min(self.nu1, self.nu2), max(self.nu1, self.nu2)
        over = 0.25 * self._s_eff() * abs(self.nu1 - self.nu2)
        object.__setattr__(self, "nu_star", 0.5 * (nu_min - over))
        object.__setattr__(self, "nu_upper", nu_max + over)

    def _s_eff(self) -> float:
        # cap the overshoot (slope * s / 2) at min(nu1,nu2)/2 so nu stays positive
        slope = 0.5 * abs(self.nu1 - self.nu2)
        if slope == 0.0:
            return self.smoothing
        return min(self.smoothing, min(self.nu1, self.nu2) / slope)


def _split_eps_regions(spec: PotentialSpec, z: np.ndarray):
    zc = 1.0 - spec.eps
    return z > zc, z < -zc


def _check_domain(spec: PotentialSpec, z: np.ndarray) -> None:
    if spec.eps == 0.0 and np.any(np.abs(z) >= 1.0):
        raise PotentialDomainError(
            "exact logarithmic potential requires |z| < 1 "
            f"(max |z| = {float(np.max(np.abs(z)))!r})"
        )


def _as_result(z_in, out):
    return float(out) if np.isscalar(z_in) or np.ndim(z_in) == 0 else out


def F(spec: PotentialSpec, z) -> float | np.ndarray:
    """Convex logarithmic part (or its quadratic extension for eps > 0).

    F(0) = 0 and F is even; raises PotentialDomainError for |z| >= 1 in
    exact mode.
    """
    za = np.asarray(z, dtype=float)
    _check_domain(spec, za)
    th = spec.theta
    if spec.eps == 0.0:
        out = 0.5 * th * ((1 + za) * np.log1p(za) + (1 - za) * np.log1p(-za))
        return _as_result(z, out)
    zc = 1.0 - spec.eps
    hi, lo = _split_eps_regions(spec, za)
    zin = np.clip(za, -zc, zc)
    out = 0.5 * th * ((1 + zin) * np.log1p(zin) + (1 - zin) * np.log1p(-zin))
    f0 = 0.5 * th * ((1 + zc) * np.log1p(zc) + (1 - zc) * np.log1p(-zc))
    f1 = 0.5 * th * (np.log1p(zc) - np.log1p(-zc))
    f2 = th / (1.0 - zc * zc)
    d_hi = za - zc
    d_lo = za + zc
    out = np.where(hi, f0 + f1 * d_hi + 0.5 * f2 * d_hi**2, out)
    out = np.where(lo, f0 - f1 * d_lo + 0.5 * f2 * d_lo**2, out)
    return _as_result(z, out)


def dF(spec: PotentialSpec, z) -> float | np.ndarray:
    """First derivative of F: (theta/2) ln((1+z)/(1-z)), extended linearly
    with slope F''(1-eps) beyond the junctions when eps > 0."""
    za = np.asarray(z, dtype=float)
    _check_domain(spec, za)
    th = spec.theta
    if spec.eps == 0.0:
        out = 0.5 * th * (np.log1p(za) - np.log1p(-za))
        return _as_result(z, out)
    zc = 1.0 - spec.eps
    hi, lo = _split_eps_regions(spec, za)
    zin = np.clip(za, -zc, zc)
    out = 0.5 * th * (np.log1p(zin) - np.log1p(-zin))
    f1 = 0.5 * th * (np.log1p(zc) - np.log1p(-zc))
    f2 = th / (1.0 - zc * zc)
    out = np.where(hi, f1 + f2 * (za - zc), out)
    out = np.where(lo, -f1 + f2 * (za + zc), out)
    return _as_result(z, out)


def d2F(spec: PotentialSpec, z) -> float | np.ndarray:
    """Second derivative of F: theta/(1-z^2), constant outside the
    junctions when eps > 0.  Bounded below by theta everywhere."""
    za = np.asarray(z, dtype=float)
    _check_domain(spec, za)
    th = spec.theta
    if spec.eps == 0.0:
        out = th / (1.0 - za * za)
        return _as_result(z, out)
    zc = 1.0 - spec.eps
    zin = np.clip(za, -zc, zc)
    out = th / (1.0 - zin * zin)
    return _as_result(z, out)


def psi(spec: PotentialSpec, z) -> float | np.ndarray:
    """Full double-well density psi = F - (theta0/2) z^2."""
    za = np.asarray(z, dtype=float)
    out = F(spec, za) - 0.5 * spec.theta0 * za * za
    return _as_result(z, out)


def dpsi(spec: PotentialSpec, z) -> float | np.ndarray:
    za = np.asarray(z, dtype=float)
    out = dF(spec, za) - spec.theta0 * za
    return _as_result(z, out)


def d2psi(spec: PotentialSpec, z) -> float | np.ndarray:
    """psi''; for eps > 0 it is bounded in [-alpha, F''(1-eps) - theta0]."""
    za = np.asarray(z, dtype=float)
    out = d2F(spec, za) - spec.theta0
    return _as_result(z, out)


def _nu_half(visc: ViscositySpec, t: np.ndarray) -> np.ndarray:
    """Extension profile for t = |z| >= 0 of the z >= 0 branch rooted at
    nu(0), expressed as integral of the ramped slope."""
    s = visc._s_eff()
    # slope of nu towards z = +1 is (nu1 - nu2)/2
    m = 0.5 * (visc.nu1 - visc.nu2)
    lin = np.minimum(t, 1.0)
    out = m * lin
    # on [1, 1+s]: slope falls as cubic smoothstep; integral of 1-3r^2+2r^3
    r = np.clip((t - 1.0) / s, 0.0, 1.0)
    out = out + m * s * (r - r**3 + 0.5 * r**4)
    return out


def nu(visc: ViscositySpec, z) -> float | np.ndarray:
    """Concentration-dependent viscosity, defined for all real z.

    Exactly the linear blend on [-1, 1]; constant for |z| >= 1 + s.
    """
    za = np.asarray(z, dtype=float)
    base = 0.5 * (visc.nu1 + visc.nu2)
    out = base + np.sign(za) * _nu_half(visc, np.abs(za))
    return _as_result(z, out)


def nu_prime(visc: ViscositySpec, z) -> float | np.ndarray:
    """First derivative of the extended viscosity (continuous, bounded)."""
    za = np.asarray(z, dtype=float)
    s = visc._s_eff()
    m = 0.5 * (visc.nu1 - visc.nu2)
    t = np.abs(za)
    r = np.clip((t - 1.0) / s, 0.0, 1.0)
    ramp = np.where(t <= 1.0, 1.0, 1.0 - 3.0 * r**2 + 2.0 * r**3)
    out = m * ramp
    return _as_result(z, out)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AssumptionReport:
    checks: tuple[CheckResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = [
            f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in self.checks
        ]
        return "\n".join(lines)


def _smallest_growth_constant(spec: PotentialSpec, z: np.ndarray) -> float:
    """Smallest sampled C with F''(z) <= C exp(C |F'(z)|) on the sample."""
    f1 = np.abs(dF(spec, z))
    f2 = d2F(spec, z)

    def ok(c: float) -> bool:
        return bool(np.all(np.log(f2) <= np.log(c) + c * f1))

    lo, hi = 1e-3, 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > 1e6:
            return np.inf
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def verify_assumptions(
    spec_args: tuple[float, float, float] | PotentialSpec,
    visc: ViscositySpec,
    n_samples: int = 4001,
) -> AssumptionReport:
    """Sampled verification of the structural assumptions on psi and nu.

    Pure diagnostic: failures are reported, never raised.  Accepts raw
    (theta, theta0, eps) so that ill-ordered temperatures can be reported
    rather than rejected at spec construction.
    """
    checks: list[CheckResult] = []
    if isinstance(spec_args, PotentialSpec):
        theta, theta0, eps = spec_args.theta, spec_args.theta0, spec_args.eps
    else:
        theta, theta0, eps = spec_args

    alpha_ok = 0.0 < theta < theta0
    checks.append(
        CheckResult(
            "alpha_positive",
            alpha_ok,
            f"theta0 - theta = {theta0 - theta:.6g}",
        )
    )
    if not alpha_ok:
        checks.append(CheckResult("remaining_checks", False, "skipped: invalid spec"))
        return AssumptionReport(tuple(checks))

    spec = PotentialSpec(theta=theta, theta0=theta0, eps=eps)
    z = np.linspace(-0.999, 0.999, n_samples)
    zw = np.linspace(-3.0, 3.0, n_samples) if eps > 0 else z

    f2 = d2F(spec, zw)
    checks.append(
        CheckResult(
            "convexity_F_dd_ge_theta",
            bool(np.all(f2 >= spec.theta * (1 - 1e-12))),
            f"min F'' = {float(np.min(f2)):.6g} vs theta = {spec.theta}",
        )
    )

    # convexity of F'' itself: sampled second differences on the logarithmic
    # region (the quadratic extension of F_eps deliberately flattens F'')
    zi = z if eps == 0 else np.linspace(-(1 - eps) * 0.999, (1 - eps) * 0.999, n_samples)
    fe = d2F(spec, zi)
    second = fe[:-2] - 2 * fe[1:-1] + fe[2:]
    checks.append(
        CheckResult(
            "F_dd_convex",
            bool(np.all(second >= -1e-9 * np.maximum(1.0, np.abs(fe[1:-1])))),
            f"min second difference = {float(np.min(second)):.3g}",
        )
    )

    c_found = _smallest_growth_constant(spec, z if eps == 0 else np.clip(zw, -0.999, 0.999))
    checks.append(
        CheckResult(
            "growth_F_dd_le_C_exp_C_F_d",
            np.isfinite(c_found),
            f"smallest sampled C = {c_found:.6g}",
        )
    )

    if eps > 0:
        p2 = d2psi(spec, zw)
        checks.append(
            CheckResult(
                "regularized_psi_dd_bounds",
                bool(np.all(p2 >= -spec.alpha - 1e-12) and np.all(np.isfinite(p2))),
                f"psi'' in [{float(np.min(p2)):.6g}, {float(np.max(p2)):.6g}], "
                f"-alpha = {-spec.alpha}",
            )
        )
        zin = np.linspace(-1.0, 1.0, n_samples)
        exact = PotentialSpec(theta=theta, theta0=theta0, eps=0.0)
        gap = psi(exact, np.clip(zin, -1 + 1e-12, 1 - 1e-12)) - psi(spec, zin)
        checks.append(
            CheckResult(
                "regularized_below_exact",
                bool(np.all(gap >= -1e-10)),
                f"min (psi - psi_eps) = {float(np.min(gap)):.3g}",
            )
        )

    zv = np.linspace(-4.0, 4.0, n_samples)
    nv = nu(visc, zv)
    bounds_ok = bool(
        np.all(nv >= 2 * visc.nu_star - 1e-12) and np.all(nv <= visc.nu_upper + 1e-12)
    )
    checks.append(
        CheckResult(
            "viscosity_bounds",
            bounds_ok and visc.nu_star > 0,
            f"nu in [{float(np.min(nv)):.6g}, {float(np.max(nv)):.6g}], "
            f"2 nu_star = {2 * visc.nu_star:.6g}, nu_upper = {visc.nu_upper:.6g}",
        )
    )

    # C^2 smoothness: first derivative continuous, FD second derivative bounded
    dz = zv[1] - zv[0]
    np_fd = (nu(visc, zv + dz) - nu(visc, zv - dz)) / (2 * dz)
    err1 = np.max(np.abs(np_fd - nu_prime(visc, zv)))
    fd2 = (nu(visc, zv + dz) - 2 * nv + nu(visc, zv - dz)) / dz**2
    scale = max(1.0, abs(visc.nu1 - visc.nu2))
    s_eff = visc._s_eff()
    checks.append(
        CheckResult(
            "viscosity_smoothness",
            bool(
                err1 <= 2 * scale * dz**2 / s_eff**2 + 1e-12
                and np.all(np.abs(fd2) <= 2 * scale / s_eff)
            ),
            f"max |nu' - fd| = {err1:.3g}, max |fd2| = {float(np.max(np.abs(fd2))):.6g}",
        )
    )

    return AssumptionReport(tuple(checks))
