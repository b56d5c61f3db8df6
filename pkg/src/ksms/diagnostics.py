"""Monitored functionals: Lyapunov energy, dissipation split, decay fits.

The energy E = int(u - 1 - ln u) is nonnegative and vanishes only at the
homogeneous state u = 1.  Its drop along a run splits into a gradient
part I1 and a quadratic part I2; the split uses the same face gradients
as the flux assembly, so the discrete energy identity closes to O(dt)
plus the elliptic solver residual instead of drifting with an unrelated
quadrature.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError, FitError
from .grid_field import Grid2D, as_field, face_gradients, face_means, integrate
from .motility import MotilitySpec, compute_k0

# diagnostics.csv contract: fixed column order, 17 significant digits.
CSV_COLUMNS = (
    "t", "dt_used", "mass", "u_min", "u_max", "v_min", "v_max", "E",
    "l2_u", "l2_v", "cross", "linf_u", "linf_v", "grad_v_l2",
    "diss_gamma", "diss_cross",
)

SANDWICH_EXCLUDE = 1e-12  # cells this close to u = 1 are 0/0 in the ratio


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    dt_used: float
    mass: float
    u_min: float
    u_max: float
    v_min: float
    v_max: float
    E: float
    l2_u: float
    l2_v: float
    cross: float
    linf_u: float
    linf_v: float
    grad_v_l2: float
    diss_gamma: float
    diss_cross: float


@dataclass
class DiagnosticsSeries:
    """Records sampled along one run, plus why the run stopped."""

    records: list
    stop_reason: str = "t_end"

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        if name not in CSV_COLUMNS:
            raise ConfigError(f"unknown diagnostics column {name!r}")
        return np.array([getattr(r, name) for r in self.records])

    @property
    def last(self) -> DiagnosticsRecord:
        return self.records[-1]


@dataclass(frozen=True)
class StabilityCheck:
    """Feasibility of the growth-vs-drift condition mu > K0/16."""

    k0: float
    mu: float
    feasible: bool
    delta_chosen: float
    threshold: float


@dataclass(frozen=True)
class DissipationReport:
    i1: float
    i2: float
    lt2_residual: float
    diss_gamma: float
    diss_cross: float
    grad_v_l2: float
    l2_u: float
    l2_v: float
    cross: float


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]
    quantity: str


def lyapunov_E(u, g: Grid2D) -> float:
    """E = int(u - 1 - ln u) >= 0; computed via log1p for accuracy near 1."""
    u = as_field(u, g)
    if np.min(u) <= 0.0:
        j, i = np.unravel_index(int(np.argmin(u)), u.shape)
        raise ValueError(
            f"energy needs u > 0; cell (i={i}, j={j}) has u = {u[j, i]}"
        )
    w = u - 1.0
    return g.cell_area * float(np.sum(w - np.log1p(w)))


def _face_split(state, spec: MotilitySpec, g: Grid2D):
    """Gradient-quadrature pieces shared by the record and the dissipation split."""
    u, v = state.u, state.v
    gux, guy = face_gradients(u, g)
    gvx, gvy = face_gradients(v, g)
    vfx, vfy = face_means(v, g)
    ca = g.cell_area

    grad_v_l2 = ca * (float(np.sum(gvx ** 2)) + float(np.sum(gvy ** 2)))

    # interior faces only; wall faces carry zero gradient and no flux
    gxu, gxv = gux[:, 1:-1], gvx[:, 1:-1]
    gyu, gyv = guy[1:-1, :], gvy[1:-1, :]
    gam_x = np.asarray(spec.gamma(vfx[:, 1:-1]))
    gam_y = np.asarray(spec.gamma(vfy[1:-1, :]))
    chi_x = np.asarray(spec.chi(vfx[:, 1:-1]))
    chi_y = np.asarray(spec.chi(vfy[1:-1, :]))

    ulr_x = u[:, :-1] * u[:, 1:]
    ulr_y = u[:-1, :] * u[1:, :]
    up_x = np.where(chi_x * gxv > 0.0, u[:, :-1], u[:, 1:])
    up_y = np.where(chi_y * gyv > 0.0, u[:-1, :], u[1:, :])

    diss_gamma = ca * (
        float(np.sum(gam_x * gxu ** 2 / ulr_x)) + float(np.sum(gam_y * gyu ** 2 / ulr_y))
    )
    diss_cross = ca * (
        float(np.sum(chi_x * gxu * gxv * up_x / ulr_x))
        + float(np.sum(chi_y * gyu * gyv * up_y / ulr_y))
    )
    return grad_v_l2, diss_gamma, diss_cross


def compute_record(state, spec: MotilitySpec, g: Grid2D, dt_used: float) -> DiagnosticsRecord:
    u, v = state.u, state.v
    du = u - 1.0
    dv = v - 1.0
    grad_v_l2, diss_gamma, diss_cross = _face_split(state, spec, g)
    return DiagnosticsRecord(
        t=float(state.t),
        dt_used=float(dt_used),
        mass=integrate(u, g),
        u_min=float(np.min(u)),
        u_max=float(np.max(u)),
        v_min=float(np.min(v)),
        v_max=float(np.max(v)),
        E=lyapunov_E(u, g),
        l2_u=integrate(du ** 2, g),
        l2_v=integrate(dv ** 2, g),
        cross=integrate(du * dv, g),
        linf_u=float(np.max(np.abs(du))),
        linf_v=float(np.max(np.abs(dv))),
        grad_v_l2=grad_v_l2,
        diss_gamma=diss_gamma,
        diss_cross=diss_cross,
    )


def dissipation_terms(state, spec: MotilitySpec, delta: float, g: Grid2D,
                      mu: float) -> DissipationReport:
    """Split the energy derivative into I1 (gradients) and I2 (quadratics).

    Also reports the weak-form residual grad_v_l2 + l2_v - cross, which
    vanishes for the exact elliptic solution; whatever is left is the
    solver residual leaking into the identity.
    """
    u, v = state.u, state.v
    if np.min(u) <= 0.0:
        raise ValueError("dissipation split needs u > 0")
    du = u - 1.0
    dv = v - 1.0
    l2_u = integrate(du ** 2, g)
    l2_v = integrate(dv ** 2, g)
    cross = integrate(du * dv, g)
    grad_v_l2, diss_gamma, diss_cross = _face_split(state, spec, g)
    i1 = -diss_gamma - delta * grad_v_l2 + diss_cross
    i2 = -mu * l2_u - delta * l2_v + delta * cross
    return DissipationReport(
        i1=i1, i2=i2,
        lt2_residual=grad_v_l2 + l2_v - cross,
        diss_gamma=diss_gamma, diss_cross=diss_cross, grad_v_l2=grad_v_l2,
        l2_u=l2_u, l2_v=l2_v, cross=cross,
    )


def stability_from_k0(k0: float, mu: float) -> StabilityCheck:
    """Threshold arithmetic: feasible iff mu > k0/16; delta from the midpoint.

    The admissible damping weights form the interval [k0/4, 4 mu), nonempty
    exactly above the threshold; the midpoint satisfies both endpoints with
    room to spare.
    """
    if mu < 0.0:
        raise ConfigError(f"mu must be >= 0, got {mu}")
    threshold = k0 / 16.0
    feasible = mu > threshold
    delta = (k0 / 4.0 + 4.0 * mu) / 2.0 if feasible else math.nan
    return StabilityCheck(k0=k0, mu=mu, feasible=feasible,
                          delta_chosen=delta, threshold=threshold)


def check_stability(spec: MotilitySpec, mu: float, v_max: float = 20.0,
                    n: int = 2000) -> StabilityCheck:
    report = compute_k0(spec, v_max=v_max, n=n)
    return stability_from_k0(report.k0_estimate, mu)


def sandwich_check(u) -> Tuple[float, float]:
    """Min and max of (u - 1 - ln u) / (u - 1)^2 over cells with u away from 1.

    Requires u in (1/2, 3/2) entrywise; the ratio then sits in [2/9, 2].
    If every cell is within SANDWICH_EXCLUDE of 1 the Taylor limit 1/2 is
    returned for both ends.
    """
    u = np.asarray(u, dtype=np.float64)
    if np.min(u) <= 0.5 or np.max(u) >= 1.5:
        raise ValueError(
            f"sandwich ratio needs u in (1/2, 3/2); range is [{np.min(u)}, {np.max(u)}]"
        )
    w = u - 1.0
    mask = np.abs(w) >= SANDWICH_EXCLUDE
    if not np.any(mask):
        return 0.5, 0.5
    w = w[mask]
    ratio = (w - np.log1p(w)) / w ** 2
    return float(np.min(ratio)), float(np.max(ratio))


def fit_decay_rate(series, window_fraction: float = 0.5,
                   quantity: str = "E") -> DecayFit:
    """Least-squares exponential rate over the tail of a (t, value) series.

    The fitted window is the last window_fraction of the time span; the
    rate is minus the slope of the line through (t, ln value).
    """
    if not (0.0 < window_fraction <= 1.0):
        raise ConfigError(f"window_fraction must be in (0, 1], got {window_fraction}")
    if isinstance(series, tuple) and len(series) == 2:
        t = np.asarray(series[0], dtype=np.float64)
        vals = np.asarray(series[1], dtype=np.float64)
    else:
        arr = np.asarray(series, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ConfigError("series must be (t, value) pairs or a pair of arrays")
        t, vals = arr[:, 0], arr[:, 1]
    if t.size != vals.size:
        raise ConfigError("time and value arrays differ in length")
    if t.size < 20:
        raise FitError(f"need >= 20 samples to fit a rate, got {t.size}")
    if np.any(np.diff(t) < 0.0):
        raise ConfigError("sample times must be non-decreasing")

    span = t[-1] - t[0]
    t_lo = t[-1] - window_fraction * span
    mask = t >= t_lo - 1e-15 * max(1.0, abs(span))
    tw, vw = t[mask], vals[mask]
    if tw.size < 10:
        raise FitError(f"fit window holds {tw.size} samples, need >= 10")
    if np.any(vw <= 0.0):
        raise FitError("nonpositive values in fit window: converged below measurable")

    y = np.log(vw)
    slope, intercept = np.polyfit(tw, y, 1)
    yhat = slope * tw + intercept
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return DecayFit(rate=float(-slope), intercept=float(intercept), r_squared=r2,
                    window=(float(tw[0]), float(tw[-1])), quantity=quantity)


def entry_index(series: DiagnosticsSeries) -> Optional[int]:
    """First sample index from which u stays in (1/2, 3/2) for good."""
    u_min = series.column("u_min")
    u_max = series.column("u_max")
    inside = (u_min > 0.5) & (u_max < 1.5)
    if not inside[-1]:
        return None
    bad = np.nonzero(~inside)[0]
    return int(bad[-1]) + 1 if bad.size else 0


def lyapunov_monotone(series: DiagnosticsSeries, tol_scale: float = 1e-9) -> bool:
    """Is E non-increasing (to tolerance) once u has entered (1/2, 3/2)?

    False when the run never settles into the window; the theory says
    nothing there.
    """
    k = entry_index(series)
    if k is None:
        return False
    e = series.column("E")[k:]
    if e.size < 2:
        return True
    return bool(np.all(np.diff(e) <= tol_scale * (1.0 + e[:-1])))


def format_value(x: float) -> str:
    """17 significant digits: round-trip exact for 64-bit floats."""
    return f"{x:.16e}"


def csv_header() -> str:
    return ",".join(CSV_COLUMNS)


def record_row(rec: DiagnosticsRecord) -> str:
    return ",".join(format_value(getattr(rec, c)) for c in CSV_COLUMNS)


def write_diagnostics_csv(series: DiagnosticsSeries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(csv_header() + "\n")
        for rec in series.records:
            fh.write(record_row(rec) + "\n")


def read_diagnostics_csv(path):
    """Parse a diagnostics CSV back into {column: array}; header decides names."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise ConfigError(f"{path}: empty diagnostics file")
        names = header.split(",")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise ConfigError(f"{path}:{lineno}: expected {len(names)} columns")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return {name: data[:, k] for k, name in enumerate(names)}
