"""Uniform 2D grid, cell-centered scalar fields, MAC staggered vector fields,
and the discrete differential operators and norms used throughout.

Conventions
-----------
Cells are indexed ``[i, j]`` with ``i`` the x index; cell centers sit at
``((i+1/2) hx, (j+1/2) hy)``.  A MAC vector field stores the x component
``u`` on x faces (shape ``(nx+1, ny)``, face i at ``x = i hx``) and the y
component ``v`` on y faces (shape ``(nx, ny+1)``).

Boundary modes:

* ``neumann_noslip`` -- scalars get mirror ghosts (zero normal derivative);
  velocity normal components on boundary faces are exactly zero, and
  tangential components reflect oddly across walls (zero wall velocity).
* ``periodic`` -- everything wraps; the last face row/column duplicates the
  first (``u[nx] == u[0]``, ``v[:, ny] == v[:, 0]``).

All operators return new fields and never mutate inputs.  ``laplace`` is
literally ``divergence(gradient_to_faces(f))`` so the compatibility
``div o grad == laplace`` holds by construction, and the discrete
summation-by-parts identity

    inner(gradient_to_faces(f), w) == -inner(f, divergence(w))

holds exactly whenever the boundary fluxes of ``w`` vanish.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "BoundaryMode",
    "Grid",
    "ScalarField",
    "MacVectorField",
    "laplace",
    "gradient_to_faces",
    "divergence",
    "advect_scalar",
    "l2",
    "linf",
    "mean",
    "h1_semi",
    "cell_inner",
    "face_inner",
    "mac_l2",
    "mac_h1_semi",
    "weighted_sym_grad_l2",
    "sym_grad_components",
    "node_harmonic_average",
    "random_smooth_scalar",
    "save_field",
    "load_field",
]


class BoundaryMode(str, Enum):
    NEUMANN_NOSLIP = "neumann_noslip"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0
    bc: BoundaryMode = BoundaryMode.NEUMANN_NOSLIP

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs nx, ny >= 4, got {self.nx} x {self.ny}")
        if self.Lx <= 0 or self.Ly <= 0:
            raise ValueError(f"domain lengths must be positive, got {self.Lx}, {self.Ly}")
        object.__setattr__(self, "bc", BoundaryMode(self.bc))

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def periodic(self) -> bool:
        return self.bc is BoundaryMode.PERIODIC

    # coordinate helpers (1d arrays; broadcast as x[:, None], y[None, :])
    def xc(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    def yc(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    def xf(self) -> np.ndarray:
        return np.arange(self.nx + 1) * self.hx

    def yf(self) -> np.ndarray:
        return np.arange(self.ny + 1) * self.hy


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(
                f"scalar field shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field contains non-finite values")

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    @classmethod
    def full(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full((grid.nx, grid.ny), float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        vals = fn(grid.xc()[:, None], grid.yc()[None, :])
        return cls(grid, np.broadcast_to(vals, (grid.nx, grid.ny)).copy())

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class MacVectorField:
    grid: Grid
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        nx, ny = self.grid.nx, self.grid.ny
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != (nx + 1, ny) or self.v.shape != (nx, ny + 1):
            raise ValueError(
                f"MAC shapes {self.u.shape}, {self.v.shape} do not match grid: "
                f"expected ({nx + 1}, {ny}) and ({nx}, {ny + 1})"
            )
        enforce_mac_bc(self)

    @classmethod
    def zeros(cls, grid: Grid) -> "MacVectorField":
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))

    @classmethod
    def from_functions(cls, grid: Grid, fu, fv) -> "MacVectorField":
        u = np.broadcast_to(
            fu(grid.xf()[:, None], grid.yc()[None, :]), (grid.nx + 1, grid.ny)
        ).copy()
        v = np.broadcast_to(
            fv(grid.xc()[:, None], grid.yf()[None, :]), (grid.nx, grid.ny + 1)
        ).copy()
        return cls(grid, u, v)

    def copy(self) -> "MacVectorField":
        return MacVectorField(self.grid, self.u.copy(), self.v.copy())


def enforce_mac_bc(w: MacVectorField) -> MacVectorField:
    """Zero boundary normal faces (no penetration) or sync duplicated faces."""
    if w.grid.periodic:
        w.u[-1, :] = w.u[0, :]
        w.v[:, -1] = w.v[:, 0]
    else:
        w.u[0, :] = 0.0
        w.u[-1, :] = 0.0
        w.v[:, 0] = 0.0
        w.v[:, -1] = 0.0
    return w


# ---------------------------------------------------------------------------
# differential operators


def gradient_to_faces(f: ScalarField) -> MacVectorField:
    """Centered face gradient; Neumann boundary faces carry exact zeros."""
    g = f.grid
    a = f.values
    u = np.zeros((g.nx + 1, g.ny))
    v = np.zeros((g.nx, g.ny + 1))
    u[1:-1, :] = (a[1:, :] - a[:-1, :]) / g.hx
    v[:, 1:-1] = (a[:, 1:] - a[:, :-1]) / g.hy
    if g.periodic:
        u[0, :] = (a[0, :] - a[-1, :]) / g.hx
        u[-1, :] = u[0, :]
        v[:, 0] = (a[:, 0] - a[:, -1]) / g.hy
        v[:, -1] = v[:, 0]
    return MacVectorField(g, u, v)


def divergence(w: MacVectorField) -> ScalarField:
    """Conservative cell divergence of face fluxes."""
    g = w.grid
    d = (w.u[1:, :] - w.u[:-1, :]) / g.hx + (w.v[:, 1:] - w.v[:, :-1]) / g.hy
    return ScalarField(g, d)


def laplace(f: ScalarField) -> ScalarField:
    """Five-point Laplacian; mirror ghosts in Neumann mode, wrap in periodic.

    Implemented as divergence(gradient_to_faces(f)) so operator
    compatibility is exact.
    """
    return divergence(gradient_to_faces(f))


def _face_average_x(f: ScalarField) -> np.ndarray:
    g = f.grid
    a = f.values
    fx = np.empty((g.nx + 1, g.ny))
    fx[1:-1, :] = 0.5 * (a[1:, :] + a[:-1, :])
    if g.periodic:
        fx[0, :] = 0.5 * (a[0, :] + a[-1, :])
        fx[-1, :] = fx[0, :]
    else:
        # mirror ghost: face value equals the adjacent cell
        fx[0, :] = a[0, :]
        fx[-1, :] = a[-1, :]
    return fx


def _face_average_y(f: ScalarField) -> np.ndarray:
    g = f.grid
    a = f.values
    fy = np.empty((g.nx, g.ny + 1))
    fy[:, 1:-1] = 0.5 * (a[:, 1:] + a[:, :-1])
    if g.periodic:
        fy[:, 0] = 0.5 * (a[:, 0] + a[:, -1])
        fy[:, -1] = fy[:, 0]
    else:
        fy[:, 0] = a[:, 0]
        fy[:, -1] = a[:, -1]
    return fy


def advect_scalar(w: MacVectorField, f: ScalarField) -> ScalarField:
    """div(w f) with f averaged to faces (conservative transport form).

    The discrete integral of the output is exactly the boundary flux, which
    vanishes in both boundary modes, so sum(advect) * cell_area == 0 to
    round-off and the transported quantity is conserved.
    """
    g = f.grid
    flux = MacVectorField(g, w.u * _face_average_x(f), w.v * _face_average_y(f))
    return divergence(flux)


# ---------------------------------------------------------------------------
# inner products and norms (midpoint quadrature)


def cell_inner(a: ScalarField, b: ScalarField) -> float:
    return float(np.vdot(a.values, b.values)) * a.grid.cell_area


def l2(f: ScalarField) -> float:
    return float(np.sqrt(cell_inner(f, f)))


def linf(f) -> float:
    if isinstance(f, MacVectorField):
        return float(max(np.max(np.abs(f.u)), np.max(np.abs(f.v))))
    return float(np.max(np.abs(f.values)))


def mean(f: ScalarField) -> float:
    return float(np.sum(f.values)) * f.grid.cell_area / (f.grid.Lx * f.grid.Ly)


def _xface_weights(g: Grid) -> np.ndarray:
    w = np.ones(g.nx + 1)
    if g.periodic:
        w[-1] = 0.0
    else:
        w[0] = 0.5
        w[-1] = 0.5
    return w


def _yface_weights(g: Grid) -> np.ndarray:
    w = np.ones(g.ny + 1)
    if g.periodic:
        w[-1] = 0.0
    else:
        w[0] = 0.5
        w[-1] = 0.5
    return w


def face_inner(a: MacVectorField, b: MacVectorField) -> float:
    """L2 pairing of face fields; duplicated periodic faces counted once,
    boundary faces at walls carry half cells."""
    g = a.grid
    sx = np.sum((a.u * b.u) * _xface_weights(g)[:, None])
    sy = np.sum((a.v * b.v) * _yface_weights(g)[None, :])
    return float(sx + sy) * g.cell_area


def mac_l2(w: MacVectorField) -> float:
    return float(np.sqrt(face_inner(w, w)))


def h1_semi(f: ScalarField) -> float:
    """|grad f| in L2, via the face gradient and the face quadrature."""
    return mac_l2(gradient_to_faces(f))


def _node_weights(g: Grid) -> tuple[np.ndarray, np.ndarray]:
    if g.periodic:
        return np.ones(g.nx), np.ones(g.ny)
    wx = np.ones(g.nx + 1)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(g.ny + 1)
    wy[0] = wy[-1] = 0.5
    return wx, wy


def _du_dy_nodes(w: MacVectorField) -> np.ndarray:
    g = w.grid
    if g.periodic:
        uu = w.u[:-1, :]
        return (uu - np.roll(uu, 1, axis=1)) / g.hy
    out = np.empty((g.nx + 1, g.ny + 1))
    out[:, 1:-1] = (w.u[:, 1:] - w.u[:, :-1]) / g.hy
    # odd wall reflection: tangential velocity vanishes at walls
    out[:, 0] = 2.0 * w.u[:, 0] / g.hy
    out[:, -1] = -2.0 * w.u[:, -1] / g.hy
    return out


def _dv_dx_nodes(w: MacVectorField) -> np.ndarray:
    g = w.grid
    if g.periodic:
        vv = w.v[:, :-1]
        return (vv - np.roll(vv, 1, axis=0)) / g.hx
    out = np.empty((g.nx + 1, g.ny + 1))
    out[1:-1, :] = (w.v[1:, :] - w.v[:-1, :]) / g.hx
    out[0, :] = 2.0 * w.v[0, :] / g.hx
    out[-1, :] = -2.0 * w.v[-1, :] / g.hx
    return out


def sym_grad_components(w: MacVectorField) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Dw)_xx and (Dw)_yy at cell centers, (Dw)_xy at nodes."""
    g = w.grid
    dxx = (w.u[1:, :] - w.u[:-1, :]) / g.hx
    dyy = (w.v[:, 1:] - w.v[:, :-1]) / g.hy
    dxy = 0.5 * (_du_dy_nodes(w) + _dv_dx_nodes(w))
    return dxx, dyy, dxy


def mac_h1_semi(w: MacVectorField) -> float:
    """|grad w| in L2 for a MAC field.

    Diagonal derivative entries live at cells, off-diagonal at nodes (wall
    nodes half weight); with the odd-reflection ghosts this quadrature is
    exactly the Dirichlet energy of the discrete vector Laplacian.
    """
    g = w.grid
    dxx = (w.u[1:, :] - w.u[:-1, :]) / g.hx
    dyy = (w.v[:, 1:] - w.v[:, :-1]) / g.hy
    duy = _du_dy_nodes(w)
    dvx = _dv_dx_nodes(w)
    wx, wy = _node_weights(g)
    qn = wx[:, None] * wy[None, :]
    total = np.sum(dxx**2) + np.sum(dyy**2) + np.sum((duy**2 + dvx**2) * qn)
    return float(np.sqrt(total * g.cell_area))


def node_harmonic_average(g: Grid, cells: np.ndarray) -> np.ndarray:
    """Harmonic average of a positive cell field to nodes.

    At walls the available neighbors are edge-replicated, which reduces to
    the 2-point (edges) and 1-point (corners) harmonic means.
    """
    inv = 1.0 / np.asarray(cells, dtype=float)
    if g.periodic:
        pad = np.pad(inv, ((1, 0), (1, 0)), mode="wrap")
        s = pad[:-1, :-1] + pad[1:, :-1] + pad[:-1, 1:] + pad[1:, 1:]
        return 4.0 / s
    pad = np.pad(inv, 1, mode="edge")
    s = pad[:-1, :-1] + pad[1:, :-1] + pad[:-1, 1:] + pad[1:, 1:]
    return 4.0 / s


def weighted_sym_grad_l2(w: MacVectorField, nu_cells: np.ndarray) -> float:
    """|sqrt(nu) D w| in L2 with cell-sampled nu (EI dissipation norm).

    nu is taken at cell centers for the diagonal strain entries and
    harmonically averaged to nodes for the off-diagonal entry.
    """
    g = w.grid
    dxx, dyy, dxy = sym_grad_components(w)
    nu_n = node_harmonic_average(g, nu_cells)
    wx, wy = _node_weights(g)
    qn = wx[:, None] * wy[None, :]
    total = np.sum(nu_cells * (dxx**2 + dyy**2)) + 2.0 * np.sum(nu_n * dxy**2 * qn)
    return float(np.sqrt(total * g.cell_area))


def random_smooth_scalar(
    grid: Grid,
    seed: int,
    amplitude: float = 1.0,
    mean_value: float = 0.0,
    kmax: int = 8,
) -> ScalarField:
    """Seeded smooth random field: a low-mode trigonometric sum normalized
    to the requested max amplitude, with the discrete mean set exactly.

    Uses the counter-based Philox generator and a fixed mode ordering, so
    the result is platform-reproducible.  Basis functions respect the
    boundary mode (pure cosines under Neumann, phased waves when periodic).
    """
    rng = np.random.Generator(np.random.Philox(seed))
    x = grid.xc()[:, None] / grid.Lx
    y = grid.yc()[None, :] / grid.Ly
    out = np.zeros((grid.nx, grid.ny))
    sigma = max(1.0, kmax / 2.0)
    for mx in range(kmax + 1):
        for my in range(kmax + 1):
            if mx == 0 and my == 0:
                continue
            a = rng.standard_normal() * np.exp(-0.5 * (mx**2 + my**2) / sigma**2)
            if grid.periodic:
                px, py = rng.uniform(0, 2 * np.pi, size=2)
                out += a * np.cos(2 * np.pi * mx * x + px) * np.cos(2 * np.pi * my * y + py)
            else:
                out += a * np.cos(np.pi * mx * x) * np.cos(np.pi * my * y)
    peak = np.max(np.abs(out))
    if peak == 0.0:
        raise ValueError("degenerate random field (all coefficients vanished)")
    out *= amplitude / peak
    f = ScalarField(grid, out)
    out += mean_value - mean(f)
    return ScalarField(grid, out)


# ---------------------------------------------------------------------------
# snapshot format: flat little-endian float64, row-major, JSON sidecar


def save_field(path_prefix, grid: Grid, values: np.ndarray, kind: str, time: float) -> None:
    path = Path(path_prefix)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(values, dtype="<f8")
    path.with_suffix(".bin").write_bytes(arr.tobytes(order="C"))
    meta = {
        "nx": grid.nx,
        "ny": grid.ny,
        "Lx": grid.Lx,
        "Ly": grid.Ly,
        "bc": grid.bc.value,
        "kind": kind,
        "time": time,
    }
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


_KIND_SHAPES = {
    "phi": lambda nx, ny: (nx, ny),
    "mu": lambda nx, ny: (nx, ny),
    "pressure": lambda nx, ny: (nx, ny),
    "u": lambda nx, ny: (nx + 1, ny),
    "v": lambda nx, ny: (nx, ny + 1),
}


def load_field(path_prefix) -> tuple[Grid, np.ndarray, str, float]:
    path = Path(path_prefix)
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = Grid(meta["nx"], meta["ny"], meta["Lx"], meta["Ly"], BoundaryMode(meta["bc"]))
    shape = _KIND_SHAPES[meta["kind"]](grid.nx, grid.ny)
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    values = raw.reshape(shape).astype(float)
    return grid, values, meta["kind"], float(meta["time"])
