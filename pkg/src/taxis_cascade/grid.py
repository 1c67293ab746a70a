"""Cell-centered rectangular grid and its discrete operators.

Fields are plain 2D numpy arrays of shape (ny, nx), one value per cell
center, row-major with x varying fastest.  All operators close the domain
with mirror ghost cells, i.e. zero normal flux through the boundary, and the
diffusion/taxis operators are written in conservative face-flux form so the
global sum of any divergence vanishes up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from taxis_cascade.errors import DomainError, StructuralError

CARRIER_FLOOR = -1e-12


@lru_cache(maxsize=32)
def _cached_centers(nx, ny, hx, hy):
    x = (np.arange(nx) + 0.5) * hx
    y = (np.arange(ny) + 0.5) * hy
    X, Y = np.meshgrid(x, y)
    X.setflags(write=False)
    Y.setflags(write=False)
    return X, Y


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular mesh of nx-by-ny cells on [0, Lx] x [0, Ly]."""

    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise StructuralError(f"need at least 4x4 cells, got {self.nx}x{self.ny}")
        if not (self.Lx > 0 and self.Ly > 0):
            raise StructuralError("domain side lengths must be positive")

    @property
    def hx(self) -> float:
        return self.Lx / self.nx

    @property
    def hy(self) -> float:
        return self.Ly / self.ny

    @property
    def h_min(self) -> float:
        return min(self.hx, self.hy)

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hy

    @property
    def volume(self) -> float:
        """Total domain measure |Omega|."""
        return self.Lx * self.Ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrids (X, Y) of cell-center coordinates, shape (ny, nx); read-only."""
        return _cached_centers(self.nx, self.ny, self.hx, self.hy)

    def check_conforms(self, *fields: np.ndarray) -> None:
        for phi in fields:
            if np.shape(phi) != self.shape:
                raise StructuralError(
                    f"field shape {np.shape(phi)} does not conform to grid {self.shape}"
                )

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def _face_gradients(phi: np.ndarray, g: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Interior face-normal differences: x-faces (ny, nx-1), y-faces (ny-1, nx)."""
    gx = (phi[:, 1:] - phi[:, :-1]) / g.hx
    gy = (phi[1:, :] - phi[:-1, :]) / g.hy
    return gx, gy


def _flux_divergence(fx: np.ndarray, fy: np.ndarray, g: Grid) -> np.ndarray:
    """Divergence from interior face fluxes (+x / +y through each face).

    Cell i gains its right-face flux and loses its left-face flux, divided by
    the cell width; boundary faces carry zero flux.
    """
    div = np.zeros((g.ny, g.nx))
    div[:, :-1] += fx / g.hx
    div[:, 1:] -= fx / g.hx
    div[:-1, :] += fy / g.hy
    div[1:, :] -= fy / g.hy
    return div


def laplacian(phi: np.ndarray, g: Grid) -> np.ndarray:
    """Five-point Neumann Laplacian in conservative face-flux form.

    Mirror ghost cells make every boundary-normal flux identically zero, so
    constants are discretely harmonic and the cell-volume-weighted sum of the
    result telescopes to zero.
    """
    g.check_conforms(phi)
    gx, gy = _face_gradients(phi, g)
    return _flux_divergence(gx, gy, g)


def taxis_divergence(carrier: np.ndarray, potential: np.ndarray, g: Grid) -> np.ndarray:
    """Conservative upwind discretization of div(carrier * grad potential).

    Each interior face carries flux carrier_up * (potential jump)/h where the
    carrier is taken from the upstream cell relative to the face gradient
    (transport runs up the potential gradient).  Boundary faces carry zero
    flux.  With a constant carrier this reduces bitwise to carrier times
    ``laplacian``.
    """
    g.check_conforms(carrier, potential)
    cmin = float(np.min(carrier))
    if cmin < CARRIER_FLOOR:
        raise DomainError(f"carrier has negative entries (min {cmin:.3e})")
    gx, gy = _face_gradients(potential, g)
    cx = np.where(gx > 0.0, carrier[:, :-1], carrier[:, 1:])
    cy = np.where(gy > 0.0, carrier[:-1, :], carrier[1:, :])
    return _flux_divergence(cx * gx, cy * gy, g)


def max_face_gradient(phi: np.ndarray, g: Grid) -> float:
    """Largest face-normal difference magnitude over all interior faces."""
    gx, gy = _face_gradients(phi, g)
    mx = float(np.max(np.abs(gx))) if gx.size else 0.0
    my = float(np.max(np.abs(gy))) if gy.size else 0.0
    return max(mx, my)


def integrate(phi: np.ndarray, g: Grid) -> float:
    """Midpoint-rule integral over the domain (exact for linears)."""
    g.check_conforms(phi)
    return float(np.sum(phi)) * g.cell_volume


def norm_lp(phi: np.ndarray, g: Grid, p: float) -> float:
    if p < 1:
        raise DomainError(f"Lp norm needs p >= 1, got {p}")
    g.check_conforms(phi)
    return float(np.sum(np.abs(phi) ** p) * g.cell_volume) ** (1.0 / p)


def norm_linf(phi: np.ndarray) -> float:
    return float(np.max(np.abs(phi)))


def _second_difference(phi: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Second difference along one axis, stencil shifted one-sided at the boundary."""
    d = np.empty_like(phi)
    p = np.moveaxis(phi, axis, 0)
    out = np.moveaxis(d, axis, 0)
    out[1:-1] = (p[2:] - 2.0 * p[1:-1] + p[:-2]) / h**2
    out[0] = (p[0] - 2.0 * p[1] + p[2]) / h**2
    out[-1] = (p[-1] - 2.0 * p[-2] + p[-3]) / h**2
    return d


def seminorm_w2p(phi: np.ndarray, g: Grid, p: float) -> float:
    """Discrete second-derivative seminorm (all of D_xx, D_yy, D_xy in Lp).

    Straight second differences per axis with one-sided closure at the
    boundary; the mixed derivative is centered four-point in the interior and
    degrades to one-sided at the edges.  Monitor-grade accuracy.
    """
    if p < 1:
        raise DomainError(f"seminorm needs p >= 1, got {p}")
    g.check_conforms(phi)
    dxx = _second_difference(phi, g.hx, axis=1)
    dyy = _second_difference(phi, g.hy, axis=0)
    dxy = np.gradient(np.gradient(phi, g.hx, axis=1), g.hy, axis=0)
    total = np.abs(dxx) ** p + np.abs(dyy) ** p + np.abs(dxy) ** p
    return float(np.sum(total) * g.cell_volume) ** (1.0 / p)


# --- FLD1 snapshot files ------------------------------------------------
#
# One ASCII header line "FLD1 nx ny Lx Ly t\n", then nx*ny little-endian
# float64 values, row-major (x fastest).


def write_field(path, phi: np.ndarray, g: Grid, t: float) -> None:
    g.check_conforms(phi)
    header = f"FLD1 {g.nx} {g.ny} {g.Lx!r} {g.Ly!r} {float(t)!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(phi, dtype="<f8").tobytes())


def read_field(path) -> tuple[np.ndarray, Grid, float]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii")
        parts = header.split()
        if len(parts) != 6 or parts[0] != "FLD1":
            raise StructuralError(f"{path}: not an FLD1 file (header {header!r})")
        nx, ny = int(parts[1]), int(parts[2])
        g = Grid(nx, ny, float(parts[3]), float(parts[4]))
        t = float(parts[5])
        raw = fh.read(8 * nx * ny)
        if len(raw) != 8 * nx * ny:
            raise StructuralError(f"{path}: truncated payload")
        phi = np.frombuffer(raw, dtype="<f8").reshape(ny, nx).copy()
    return phi, g, t
