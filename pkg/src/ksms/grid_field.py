"""Cell-centered rectangular grid and the discrete calculus built on it.

Fields live at cell centers and are stored as (ny, nx) float arrays in C
order, so the flat index of cell (i, j) is i + nx*j.  All boundary
conditions are zero-flux: boundary faces carry gradient 0, which is the
ghost-cell reflection closure.  With that closure the discrete cosines
cos(k pi x / lx) sampled at cell centers are exact eigenvectors of the
Laplacian and the discrete divergence theorem holds to round-off.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError


class FaceData(NamedTuple):
    """Values on cell faces: x has shape (ny, nx+1), y has shape (ny+1, nx).

    Index (j, i) of x is the face between cells (i-1, j) and (i, j);
    i = 0 and i = nx are the physical walls.
    """

    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor-product grid of nx*ny cells on [0, lx] x [0, ly]."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ConfigError(f"need at least 3 cells per axis, got {self.nx}x{self.ny}")
        if not (self.lx > 0.0 and self.ly > 0.0):
            raise ConfigError(f"domain lengths must be positive, got {self.lx}, {self.ly}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    def xcenters(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    def ycenters(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    def cell_centers(self):
        """Return (X, Y), each shaped (ny, nx)."""
        return np.meshgrid(self.xcenters(), self.ycenters())


def as_field(values, g: Grid2D) -> np.ndarray:
    """Coerce to a (ny, nx) float64 array; accepts flat length nx*ny input."""
    f = np.asarray(values, dtype=np.float64)
    if f.shape == g.shape:
        return f
    if f.shape == (g.ncells,):
        return f.reshape(g.shape)
    raise ConfigError(f"field shape {f.shape} does not match grid {g.nx}x{g.ny}")


def integrate(f, g: Grid2D) -> float:
    """Midpoint quadrature of f over the domain: hx*hy * sum of cell values."""
    return g.cell_area * float(np.sum(as_field(f, g)))


def face_gradients(f, g: Grid2D) -> FaceData:
    """Two-point normal gradients on faces; boundary faces are 0 (zero flux)."""
    f = as_field(f, g)
    gx = np.zeros((g.ny, g.nx + 1))
    gy = np.zeros((g.ny + 1, g.nx))
    gx[:, 1:-1] = np.diff(f, axis=1) / g.hx
    gy[1:-1, :] = np.diff(f, axis=0) / g.hy
    return FaceData(gx, gy)


def face_means(f, g: Grid2D) -> FaceData:
    """Arithmetic two-cell means on faces; walls take the adjacent cell value."""
    f = as_field(f, g)
    mx = np.empty((g.ny, g.nx + 1))
    my = np.empty((g.ny + 1, g.nx))
    mx[:, 1:-1] = 0.5 * (f[:, 1:] + f[:, :-1])
    mx[:, 0] = f[:, 0]
    mx[:, -1] = f[:, -1]
    my[1:-1, :] = 0.5 * (f[1:, :] + f[:-1, :])
    my[0, :] = f[0, :]
    my[-1, :] = f[-1, :]
    return FaceData(mx, my)


def face_divergence(flux: FaceData, g: Grid2D) -> np.ndarray:
    """Cell-wise divergence of face fluxes oriented in +x / +y."""
    return np.diff(flux.x, axis=1) / g.hx + np.diff(flux.y, axis=0) / g.hy


def laplacian_neumann(f, g: Grid2D) -> np.ndarray:
    """Five-point Laplacian with zero-flux walls, as divergence of face gradients.

    integrate(laplacian_neumann(f)) telescopes to 0 exactly, and
    cos(k pi x / lx) at cell centers is an eigenvector with eigenvalue
    -(4/hx^2) sin^2(k pi hx / (2 lx)).
    """
    return face_divergence(face_gradients(f, g), g)
