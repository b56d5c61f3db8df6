"""Shared oracles for the test suite, kept independent of the library paths.

The dense matrix builder probes the compiled stencil column by column, so
elliptic results can be checked against numpy.linalg.solve with no shared
code beyond the operator application itself.
"""

import numpy as np

from ksms.grid_field import Grid2D
from ksms.kernels import apply_screened


def dense_screened_matrix(g: Grid2D) -> np.ndarray:
    """(I - L) as a dense matrix in the flat ordering idx = i + nx*j."""
    n = g.ncells
    a = np.zeros((n, n))
    e = np.zeros(g.shape)
    out = np.empty(g.shape)
    for idx in range(n):
        e.flat[idx] = 1.0
        apply_screened(e, g.hx, g.hy, out)
        a[:, idx] = out.ravel()
        e.flat[idx] = 0.0
    return a


def dense_ratio_max(log_ratio_fn, v_max=20.0, n=10**6):
    """Dense-sampling sup of exp(log_ratio) over [0, v_max]."""
    vs = np.linspace(0.0, v_max, n)
    vals = np.exp(log_ratio_fn(vs))
    i = int(np.argmax(vals))
    return float(vals[i]), float(vs[i])


def restrict_average(u_fine: np.ndarray) -> np.ndarray:
    """Coarsen a field by averaging 2x2 cell blocks (conservative)."""
    ny, nx = u_fine.shape
    assert ny % 2 == 0 and nx % 2 == 0
    return 0.25 * (u_fine[0::2, 0::2] + u_fine[0::2, 1::2]
                   + u_fine[1::2, 0::2] + u_fine[1::2, 1::2])
