"""Quasi-static signal equation: (I - L) v = u with zero-flux walls.

The operator is symmetric positive definite with spectrum in
[1, 1 + 8/h^2], so conjugate gradients converge unconditionally; the
M-matrix structure gives a discrete maximum principle, which is what
caps ||v - 1|| by ||u - 1|| along a run.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, SolverError
from .grid_field import Grid2D, as_field
from .kernels import cg_screened_poisson, mg_cg_screened_poisson

_COARSE_SWEEPS = 20  # symmetric Gauss-Seidel pairs on the coarsest level
_levels_cache = {}


def _mg_levels(g: Grid2D):
    """Level geometry for the V-cycle, or None when the grid cannot coarsen.

    Halves both directions while they stay even and at least 4 cells wide;
    a single level would make the preconditioner pure smoothing, so that
    case falls back to the Jacobi driver instead.
    """
    key = (g.nx, g.ny, g.hx, g.hy)
    hit = _levels_cache.get(key)
    if hit is not None or key in _levels_cache:
        return hit
    nxs, nys, hxs, hys = [g.nx], [g.ny], [g.hx], [g.hy]
    while (nxs[-1] % 2 == 0 and nys[-1] % 2 == 0
           and nxs[-1] >= 8 and nys[-1] >= 8):
        nxs.append(nxs[-1] // 2)
        nys.append(nys[-1] // 2)
        hxs.append(hxs[-1] * 2.0)
        hys.append(hys[-1] * 2.0)
    if len(nxs) == 1:
        _levels_cache[key] = None
        return None
    offs = np.zeros(len(nxs), dtype=np.int64)
    for l in range(1, len(nxs)):
        offs[l] = offs[l - 1] + nxs[l - 1] * nys[l - 1]
    meta = (
        np.asarray(nxs, dtype=np.int64),
        np.asarray(nys, dtype=np.int64),
        offs,
        np.asarray([1.0 / (h * h) for h in hxs]),
        np.asarray([1.0 / (h * h) for h in hys]),
    )
    _levels_cache[key] = meta
    return meta


@dataclass
class EllipticSolveOptions:
    tol: float = 1e-10
    max_iter: Optional[int] = None  # None -> 10 * (nx + ny) at solve time
    warm_start: bool = True

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0):
            raise ConfigError(f"solver.tol must be in (0, 1), got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigError(f"solver.max_iter must be >= 1, got {self.max_iter}")

    def resolved_max_iter(self, g: Grid2D) -> int:
        return self.max_iter if self.max_iter is not None else 10 * (g.nx + g.ny)


def solve_screened_poisson(u, g: Grid2D, opts: EllipticSolveOptions = None,
                           v_prev=None, return_info: bool = False):
    """Solve (I - L) v = u; returns v, or (v, residual, iterations).

    The previous signal field is the warm start when given; otherwise u
    itself is the initial guess (right mean, roughly right shape).
    """
    if opts is None:
        opts = EllipticSolveOptions()
    u = as_field(u, g)
    if not np.all(np.isfinite(u)):
        raise ValueError("elliptic right-hand side contains non-finite values")
    if opts.warm_start and v_prev is not None:
        v0 = as_field(v_prev, g)
    else:
        v0 = u
    meta = _mg_levels(g)
    if meta is not None:
        nxs, nys, offs, axs, ays = meta
        v, res, iters, converged = mg_cg_screened_poisson(
            u, v0, opts.tol, opts.resolved_max_iter(g), g.cell_area,
            nxs, nys, offs, axs, ays, _COARSE_SWEEPS,
        )
    else:
        v, res, iters, converged = cg_screened_poisson(
            u, v0, g.hx, g.hy, opts.tol, opts.resolved_max_iter(g), g.cell_area
        )
    if not converged:
        raise SolverError(
            f"CG stalled at residual {res:.3e} after {iters} iterations",
            residual=res, iterations=iters,
        )
    if return_info:
        return v, res, iters
    return v
