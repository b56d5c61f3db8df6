"""Compiled kernels for the per-step hot loop.

Two conjugate-gradient drivers for (I - L) v = b live here: a plain
Jacobi-preconditioned one (reference, used on grids too small or odd to
coarsen) and one preconditioned by a symmetric geometric V-cycle, which
keeps the iteration count flat in the grid size.  The V-cycle uses
red-black Gauss-Seidel smoothing with the color order reversed on the
way up, four-cell averaging down, piecewise-constant correction up, and
the operator rediscretized on every level, so the preconditioner stays
symmetric positive definite and plain CG applies.

Missing wall neighbors are dropped via masked coefficients hoisted to
row scope, keeping every inner loop branch-free.  All reductions are
sequential loops: results are bitwise reproducible regardless of thread
or process count.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def apply_screened(v, hx, hy, out):
    """out = (I - L) v, with L the five-point Laplacian with zero-flux walls."""
    ny, nx = v.shape
    ax = 1.0 / (hx * hx)
    ay = 1.0 / (hy * hy)
    for j in range(ny):
        jd = 1 if j > 0 else 0
        ju = 1 if j < ny - 1 else 0
        ayd = ay * jd
        ayu = ay * ju
        dy = 1.0 + ayd + ayu
        c = v[j, 0]
        out[j, 0] = (dy + ax) * c - ax * v[j, 1] \
            - ayd * v[j - jd, 0] - ayu * v[j + ju, 0]
        for i in range(1, nx - 1):
            c = v[j, i]
            out[j, i] = (dy + 2.0 * ax) * c - ax * (v[j, i - 1] + v[j, i + 1]) \
                - ayd * v[j - jd, i] - ayu * v[j + ju, i]
        c = v[j, nx - 1]
        out[j, nx - 1] = (dy + ax) * c - ax * v[j, nx - 2] \
            - ayd * v[j - jd, nx - 1] - ayu * v[j + ju, nx - 1]


@njit(cache=True)
def _gs2d(x, b, ax, ay, color):
    """One in-place Gauss-Seidel pass over cells with (i + j) % 2 == color."""
    ny, nx = x.shape
    for j in range(ny):
        jd = 1 if j > 0 else 0
        ju = 1 if j < ny - 1 else 0
        ayd = ay * jd
        ayu = ay * ju
        dy = 1.0 + ayd + ayu
        inv_edge = 1.0 / (dy + ax)
        inv_int = 1.0 / (dy + 2.0 * ax)
        i0 = (color + j) % 2
        if i0 == 0:
            x[j, 0] = (b[j, 0] + ax * x[j, 1]
                       + ayd * x[j - jd, 0] + ayu * x[j + ju, 0]) * inv_edge
            i0 = 2
        for i in range(i0, nx - 1, 2):
            x[j, i] = (b[j, i] + ax * (x[j, i - 1] + x[j, i + 1])
                       + ayd * x[j - jd, i] + ayu * x[j + ju, i]) * inv_int
        if (nx - 1 + j) % 2 == color:
            i = nx - 1
            x[j, i] = (b[j, i] + ax * x[j, i - 1]
                       + ayd * x[j - jd, i] + ayu * x[j + ju, i]) * inv_edge


@njit(cache=True)
def _resid2d(x, b, r, ax, ay):
    """r = b - (I - L) x."""
    ny, nx = x.shape
    for j in range(ny):
        jd = 1 if j > 0 else 0
        ju = 1 if j < ny - 1 else 0
        ayd = ay * jd
        ayu = ay * ju
        dy = 1.0 + ayd + ayu
        r[j, 0] = b[j, 0] - ((dy + ax) * x[j, 0] - ax * x[j, 1]
                             - ayd * x[j - jd, 0] - ayu * x[j + ju, 0])
        for i in range(1, nx - 1):
            r[j, i] = b[j, i] - ((dy + 2.0 * ax) * x[j, i]
                                 - ax * (x[j, i - 1] + x[j, i + 1])
                                 - ayd * x[j - jd, i] - ayu * x[j + ju, i])
        i = nx - 1
        r[j, i] = b[j, i] - ((dy + ax) * x[j, i] - ax * x[j, i - 1]
                             - ayd * x[j - jd, i] - ayu * x[j + ju, i])


@njit(cache=True)
def _vcycle(xw, bw, rw, nxs, nys, offs, axs, ays, coarse_sweeps):
    """One symmetric V(1,1) cycle on the flat multilevel workspace."""
    nlev = nxs.shape[0]
    for l in range(nlev - 1):
        nx, ny = nxs[l], nys[l]
        off = offs[l]
        n = nx * ny
        x = xw[off:off + n].reshape(ny, nx)
        b = bw[off:off + n].reshape(ny, nx)
        r = rw[off:off + n].reshape(ny, nx)
        ax, ay = axs[l], ays[l]
        _gs2d(x, b, ax, ay, 0)
        _gs2d(x, b, ax, ay, 1)
        _resid2d(x, b, r, ax, ay)
        # restrict the residual by four-cell averaging; start coarse at zero
        nxc, nyc = nxs[l + 1], nys[l + 1]
        offc = offs[l + 1]
        nc = nxc * nyc
        bc = bw[offc:offc + nc].reshape(nyc, nxc)
        xc = xw[offc:offc + nc].reshape(nyc, nxc)
        for jc in range(nyc):
            jf = 2 * jc
            for ic in range(nxc):
                if_ = 2 * ic
                bc[jc, ic] = 0.25 * (r[jf, if_] + r[jf, if_ + 1]
                                     + r[jf + 1, if_] + r[jf + 1, if_ + 1])
                xc[jc, ic] = 0.0
    lc = nlev - 1
    nx, ny = nxs[lc], nys[lc]
    off = offs[lc]
    n = nx * ny
    x = xw[off:off + n].reshape(ny, nx)
    b = bw[off:off + n].reshape(ny, nx)
    ax, ay = axs[lc], ays[lc]
    for _ in range(coarse_sweeps):
        _gs2d(x, b, ax, ay, 0)
        _gs2d(x, b, ax, ay, 1)
        _gs2d(x, b, ax, ay, 1)
        _gs2d(x, b, ax, ay, 0)
    for l in range(nlev - 2, -1, -1):
        nx, ny = nxs[l], nys[l]
        off = offs[l]
        n = nx * ny
        x = xw[off:off + n].reshape(ny, nx)
        b = bw[off:off + n].reshape(ny, nx)
        nxc, nyc = nxs[l + 1], nys[l + 1]
        offc = offs[l + 1]
        nc = nxc * nyc
        xc = xw[offc:offc + nc].reshape(nyc, nxc)
        # piecewise-constant correction: each fine cell inherits its parent
        for jc in range(nyc):
            jf = 2 * jc
            for ic in range(nxc):
                c = xc[jc, ic]
                if_ = 2 * ic
                x[jf, if_] += c
                x[jf, if_ + 1] += c
                x[jf + 1, if_] += c
                x[jf + 1, if_ + 1] += c
        # post-smooth with colors reversed: the adjoint of the pre-smoother
        _gs2d(x, b, axs[l], ays[l], 1)
        _gs2d(x, b, axs[l], ays[l], 0)


@njit(cache=True)
def mg_cg_screened_poisson(b, v0, tol, max_iter, cell_area,
                           nxs, nys, offs, axs, ays, coarse_sweeps):
    """CG on (I - L) v = b with one V-cycle as the preconditioner.

    Level geometry comes precomputed: nxs/nys/offs index a flat workspace
    holding every level back to back; axs/ays are the 1/h^2 factors per
    level.  Stopping matches the plain CG driver exactly: area-scaled
    residual norm down to tol times the norm of b.
    """
    ny, nx = b.shape
    hx = 1.0 / np.sqrt(axs[0])
    hy = 1.0 / np.sqrt(ays[0])
    nlev = nxs.shape[0]
    total = offs[nlev - 1] + nxs[nlev - 1] * nys[nlev - 1]
    n0 = nx * ny
    xw = np.zeros(total)
    bw = np.zeros(total)
    rw = np.zeros(total)
    z = xw[0:n0].reshape(ny, nx)   # V-cycle output doubles as z = M^-1 r
    bwf = bw[0:n0].reshape(ny, nx)

    v = v0.copy()
    r = np.empty((ny, nx))
    p = np.empty((ny, nx))
    ap = np.empty((ny, nx))

    apply_screened(v, hx, hy, ap)
    bnorm2 = 0.0
    rnorm2 = 0.0
    for j in range(ny):
        for i in range(nx):
            rij = b[j, i] - ap[j, i]
            r[j, i] = rij
            rnorm2 += rij * rij
            bnorm2 += b[j, i] * b[j, i]
    thr2 = tol * tol * bnorm2
    if bnorm2 == 0.0:
        thr2 = tol * tol
    if rnorm2 <= thr2:
        return v, np.sqrt(cell_area * rnorm2), 0, True

    for j in range(ny):
        for i in range(nx):
            bwf[j, i] = r[j, i]
    _vcycle(xw, bw, rw, nxs, nys, offs, axs, ays, coarse_sweeps)
    rz = 0.0
    for j in range(ny):
        for i in range(nx):
            zij = z[j, i]
            p[j, i] = zij
            rz += r[j, i] * zij

    it = 0
    while it < max_iter:
        it += 1
        apply_screened(p, hx, hy, ap)
        pap = 0.0
        for j in range(ny):
            for i in range(nx):
                pap += p[j, i] * ap[j, i]
        alpha = rz / pap
        rnorm2 = 0.0
        for j in range(ny):
            for i in range(nx):
                v[j, i] += alpha * p[j, i]
                r[j, i] -= alpha * ap[j, i]
                rnorm2 += r[j, i] * r[j, i]
        if rnorm2 <= thr2:
            return v, np.sqrt(cell_area * rnorm2), it, True
        for j in range(ny):
            for i in range(nx):
                bwf[j, i] = r[j, i]
                z[j, i] = 0.0
        _vcycle(xw, bw, rw, nxs, nys, offs, axs, ays, coarse_sweeps)
        rz_new = 0.0
        for j in range(ny):
            for i in range(nx):
                rz_new += r[j, i] * z[j, i]
        beta = rz_new / rz
        rz = rz_new
        for j in range(ny):
            for i in range(nx):
                p[j, i] = z[j, i] + beta * p[j, i]
    return v, np.sqrt(cell_area * rnorm2), it, False


@njit(cache=True)
def cg_screened_poisson(b, v0, hx, hy, tol, max_iter, cell_area):
    """Jacobi-preconditioned CG for (I - L) v = b, warm-started at v0.

    Reference driver; also the fallback when the grid cannot be coarsened.
    Returns (v, residual_norm, iterations, converged).
    """
    ny, nx = b.shape
    ax = 1.0 / (hx * hx)
    ay = 1.0 / (hy * hy)

    diag = np.empty((ny, nx))
    for j in range(ny):
        for i in range(nx):
            d = 1.0
            if i > 0:
                d += ax
            if i < nx - 1:
                d += ax
            if j > 0:
                d += ay
            if j < ny - 1:
                d += ay
            diag[j, i] = d

    v = v0.copy()
    r = np.empty((ny, nx))
    ap = np.empty((ny, nx))
    apply_screened(v, hx, hy, ap)
    bnorm2 = 0.0
    rnorm2 = 0.0
    for j in range(ny):
        for i in range(nx):
            rij = b[j, i] - ap[j, i]
            r[j, i] = rij
            rnorm2 += rij * rij
            bnorm2 += b[j, i] * b[j, i]
    thr2 = tol * tol * bnorm2
    if bnorm2 == 0.0:
        thr2 = tol * tol
    if rnorm2 <= thr2:
        return v, np.sqrt(cell_area * rnorm2), 0, True

    z = np.empty((ny, nx))
    p = np.empty((ny, nx))
    rz = 0.0
    for j in range(ny):
        for i in range(nx):
            z[j, i] = r[j, i] / diag[j, i]
            p[j, i] = z[j, i]
            rz += r[j, i] * z[j, i]

    it = 0
    while it < max_iter:
        it += 1
        apply_screened(p, hx, hy, ap)
        pap = 0.0
        for j in range(ny):
            for i in range(nx):
                pap += p[j, i] * ap[j, i]
        alpha = rz / pap
        rnorm2 = 0.0
        for j in range(ny):
            for i in range(nx):
                v[j, i] += alpha * p[j, i]
                r[j, i] -= alpha * ap[j, i]
                rnorm2 += r[j, i] * r[j, i]
        if rnorm2 <= thr2:
            return v, np.sqrt(cell_area * rnorm2), it, True
        rz_new = 0.0
        for j in range(ny):
            for i in range(nx):
                z[j, i] = r[j, i] / diag[j, i]
                rz_new += r[j, i] * z[j, i]
        beta = rz_new / rz
        rz = rz_new
        for j in range(ny):
            for i in range(nx):
                p[j, i] = z[j, i] + beta * p[j, i]
    return v, np.sqrt(cell_area * rnorm2), it, False
