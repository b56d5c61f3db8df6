"""Explicit conservative stepping of the density equation.

The update is in flux form: every face carries
F = gamma(v_face) * du/dn - u_upwind * chi(v_face) * dv/dn, so mass moves
only between neighbors and the logistic term is the sole source.  The
pair (u, v) = (1, 1) is an exact discrete fixed point, and donor-cell
upwinding keeps u positive under the CFL bound; a step that still loses
positivity is rejected and retried at half the dt, never clamped.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics, snapshot_io
from .elliptic_solver import EllipticSolveOptions, solve_screened_poisson
from .errors import BlowupGuardError, ConfigError, ModelValidityError, StepCollapseError
from .grid_field import FaceData, Grid2D, face_divergence, face_gradients, face_means
from .motility import MotilitySpec, validate_h1

log = logging.getLogger("ksms")

U_FLOOR = 1e-8          # initial conditions never start below this
BLOWUP_FACTOR = 100.0   # abort when ||u||_inf exceeds this multiple of its start


@dataclass
class SimState:
    u: np.ndarray
    v: np.ndarray
    t: float
    step: int = 0
    v_running_max: float = 0.0


@dataclass
class StepControl:
    safety: float = 0.4
    dt_max: float = 1.0
    dt_min: float = 1e-10
    integrator: str = "heun"
    positivity_policy: str = "reject_and_halve"

    def __post_init__(self):
        if not (0.0 < self.safety <= 1.0):
            raise ConfigError(f"time.safety must be in (0, 1], got {self.safety}")
        if not (0.0 < self.dt_min < self.dt_max):
            raise ConfigError(
                f"need 0 < dt_min < dt_max, got dt_min={self.dt_min}, dt_max={self.dt_max}"
            )
        if self.integrator not in ("euler", "heun"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        if self.positivity_policy != "reject_and_halve":
            raise ConfigError(f"unknown positivity policy {self.positivity_policy!r}")


def _face_coefficients(v, spec: MotilitySpec, g: Grid2D):
    """Diffusivity and drift velocity on faces; gamma must stay positive."""
    vfx, vfy = face_means(v, g)
    gam = FaceData(np.asarray(spec.gamma(vfx)), np.asarray(spec.gamma(vfy)))
    gmin = min(float(np.min(gam.x)), float(np.min(gam.y)))
    if not (np.all(np.isfinite(gam.x)) and np.all(np.isfinite(gam.y))) or gmin <= 0.0:
        raise ModelValidityError(
            f"gamma(v) left (0, inf) on a face (min {gmin}); v range "
            f"[{float(np.min(v))}, {float(np.max(v))}]"
        )
    gvx, gvy = face_gradients(v, g)
    w = FaceData(np.asarray(spec.chi(vfx)) * gvx, np.asarray(spec.chi(vfy)) * gvy)
    if not (np.all(np.isfinite(w.x)) and np.all(np.isfinite(w.y))):
        raise ModelValidityError("chi(v) * grad v is not finite on a face")
    return gam, w


def _rhs_from_coeffs(u, gam: FaceData, w: FaceData, mu: float, g: Grid2D) -> np.ndarray:
    gux, guy = face_gradients(u, g)
    fx = gam.x * gux    # wall faces stay exactly zero: the gradients are zero there
    fy = gam.y * guy
    up_x = np.where(w.x[:, 1:-1] > 0.0, u[:, :-1], u[:, 1:])
    up_y = np.where(w.y[1:-1, :] > 0.0, u[:-1, :], u[1:, :])
    fx[:, 1:-1] -= up_x * w.x[:, 1:-1]
    fy[1:-1, :] -= up_y * w.y[1:-1, :]
    return face_divergence(FaceData(fx, fy), g) + mu * u * (1.0 - u)


def compute_rhs(state: SimState, spec: MotilitySpec, mu: float, g: Grid2D) -> np.ndarray:
    """Divergence of face fluxes plus the logistic source mu*u*(1-u)."""
    gam, w = _face_coefficients(state.v, spec, g)
    return _rhs_from_coeffs(state.u, gam, w, mu, g)


def _dt_from_coeffs(state: SimState, gam: FaceData, w: FaceData, mu: float,
                    g: Grid2D, ctl: StepControl) -> float:
    gmax = max(float(np.max(gam.x)), float(np.max(gam.y)))
    wmax = max(float(np.max(np.abs(w.x))), float(np.max(np.abs(w.y))))
    hmin = min(g.hx, g.hy)
    dt = hmin * hmin / (4.0 * gmax)
    if wmax > 0.0:
        dt = min(dt, hmin / wmax)
    if mu > 0.0:
        dt = min(dt, 1.0 / (mu * max(1.0, float(np.max(state.u)))))
    dt *= ctl.safety
    if dt < ctl.dt_min:
        raise StepCollapseError(
            f"stable dt {dt:.3e} fell below dt_min {ctl.dt_min:.3e} at t={state.t:.6f}",
            state=state, dt=dt,
        )
    return min(dt, ctl.dt_max)


def stable_dt(state: SimState, spec: MotilitySpec, mu: float, g: Grid2D,
              ctl: StepControl) -> float:
    """safety * min(diffusive, advective, reaction) bound, capped at dt_max.

    Falling below dt_min is an error, not a silent continuation: it means
    the explicit scheme cannot resolve the state it was handed.
    """
    gam, w = _face_coefficients(state.v, spec, g)
    return _dt_from_coeffs(state, gam, w, mu, g, ctl)


def _advance(state: SimState, f1, dt: float, spec, mu, g, ctl, opts):
    """One trial update at fixed dt; None signals a positivity rejection."""
    if ctl.integrator == "euler":
        u_new = state.u + dt * f1
        if np.min(u_new) <= 0.0:
            return None
        v_new = solve_screened_poisson(u_new, g, opts, v_prev=state.v)
    else:
        u_star = state.u + dt * f1
        if np.min(u_star) <= 0.0:
            return None
        v_star = solve_screened_poisson(u_star, g, opts, v_prev=state.v)
        f2 = compute_rhs(SimState(u_star, v_star, state.t + dt), spec, mu, g)
        u_new = state.u + 0.5 * dt * (f1 + f2)
        if np.min(u_new) <= 0.0:
            return None
        v_new = solve_screened_poisson(u_new, g, opts, v_prev=v_star)
    return SimState(
        u=u_new, v=v_new, t=state.t + dt, step=state.step + 1,
        v_running_max=max(state.v_running_max, float(np.max(v_new))),
    )


def step(state: SimState, spec: MotilitySpec, mu: float, g: Grid2D,
         ctl: StepControl, opts: EllipticSolveOptions = None,
         dt_limit: float = None) -> SimState:
    """Advance one accepted step; dt_limit shortens it to land on a sample time."""
    if opts is None:
        opts = EllipticSolveOptions()
    gam, w = _face_coefficients(state.v, spec, g)   # shared by dt bound and f1
    dt = _dt_from_coeffs(state, gam, w, mu, g, ctl)
    if dt_limit is not None:
        dt = min(dt, dt_limit)
    f1 = _rhs_from_coeffs(state.u, gam, w, mu, g)
    while True:
        trial = _advance(state, f1, dt, spec, mu, g, ctl, opts)
        if trial is not None:
            return trial
        dt *= 0.5
        if dt < ctl.dt_min:
            raise StepCollapseError(
                f"positivity rejections drove dt below dt_min at t={state.t:.6f}",
                state=state, dt=dt,
            )


def initial_condition(kind: str, amplitude: float, modes, seed: int,
                      g: Grid2D) -> np.ndarray:
    """Initial density menu; every variant is floored at U_FLOOR > 0."""
    X, Y = g.cell_centers()
    if kind == "constant":
        if not amplitude > 0.0:
            raise ConfigError(f"constant initial value must be > 0, got {amplitude}")
        u0 = np.full(g.shape, float(amplitude))
    elif kind == "cosine":
        if not (0.0 <= amplitude < 1.0):
            raise ConfigError(f"cosine amplitude must be in [0, 1), got {amplitude}")
        kx, ky = modes
        u0 = 1.0 + amplitude * np.cos(kx * math.pi * X / g.lx) * np.cos(ky * math.pi * Y / g.ly)
    elif kind == "random":
        if not (0.0 <= amplitude < 1.0):
            raise ConfigError(f"random amplitude must be in [0, 1), got {amplitude}")
        rng = np.random.default_rng(int(seed))
        u0 = 1.0 + amplitude * (2.0 * rng.random(g.shape) - 1.0)
    elif kind == "gaussian":
        if not amplitude > -1.0:
            raise ConfigError(f"gaussian amplitude must be > -1, got {amplitude}")
        sig = min(g.lx, g.ly) / 8.0
        r2 = (X - 0.5 * g.lx) ** 2 + (Y - 0.5 * g.ly) ** 2
        u0 = 1.0 + amplitude * np.exp(-r2 / (2.0 * sig * sig))
    else:
        raise ConfigError(f"unknown initial condition kind {kind!r}")
    return np.maximum(u0, U_FLOOR)


def run(config, out_dir=None):
    """Integrate a validated config from t=0; returns (state, DiagnosticsSeries).

    Diagnostics are appended to <out>/diagnostics.csv and flushed per
    sample, so an aborted run still leaves its partial record behind.
    Stops at t_end, or earlier once ||u-1||_inf stays below conv_tol for
    conv_patience consecutive samples.
    """
    g = config.build_grid()
    spec = config.build_motility()
    ctl = config.build_step_control()
    opts = config.build_solver_options()
    mu = config.model.mu
    out = config.output

    u0 = initial_condition(config.ic.kind, config.ic.amplitude, config.ic.modes,
                           config.ic.seed, g)
    v0 = solve_screened_poisson(u0, g, opts)
    state = SimState(u=u0, v=v0, t=0.0, step=0, v_running_max=float(np.max(v0)))

    probe = max(1.0, 4.0 * state.v_running_max)
    h1 = validate_h1(spec, v_max=probe)
    if not h1.gamma_positive:
        raise ModelValidityError(
            f"motility fails positivity on [0, {probe:.3g}]: gamma_min={h1.gamma_min}"
        )
    if h1.boundedness_flag != "verified_on_interval":
        log.warning("chi^2/gamma looks unbounded on [0, %.3g]; proceeding anyway", probe)

    guard = BLOWUP_FACTOR * float(np.max(u0))
    target_dir = Path(out_dir if out_dir is not None else out.dir)
    target_dir.mkdir(parents=True, exist_ok=True)

    records = []
    stop_reason = "t_end"
    streak = 0
    t_end = config.time.t_end
    every = out.every
    tiny = 1e-12 * max(1.0, t_end)

    def snap_path(k):
        return target_dir / f"snapshot_{k:05d}.ksms"

    with open(target_dir / "diagnostics.csv", "w", encoding="utf-8") as fh:
        fh.write(diagnostics.csv_header() + "\n")

        def sample(st, dt_used, k):
            nonlocal streak
            rec = diagnostics.compute_record(st, spec, g, dt_used)
            records.append(rec)
            fh.write(diagnostics.record_row(rec) + "\n")
            fh.flush()
            streak = streak + 1 if rec.linf_u < out.conv_tol else 0
            if out.snapshots:
                snapshot_io.write_snapshot(st, g, snap_path(k))
            return rec

        rec = sample(state, 0.0, 0)
        k = 0
        while state.t < t_end - tiny:
            if streak >= out.conv_patience:
                stop_reason = "converged"
                break
            k += 1
            target = min(k * every, t_end)
            last_dt = 0.0
            while state.t < target - tiny:
                t_before = state.t
                state = step(state, spec, mu, g, ctl, opts,
                             dt_limit=target - state.t)
                last_dt = state.t - t_before
            rec = sample(state, last_dt, k)
            if rec.u_max > guard:
                raise BlowupGuardError(
                    f"||u||_inf = {rec.u_max:.3e} exceeded {BLOWUP_FACTOR:.0f}x its "
                    f"initial value at t={state.t:.6f}"
                )
        else:
            if streak >= out.conv_patience:
                stop_reason = "converged"

    series = diagnostics.DiagnosticsSeries(records=records, stop_reason=stop_reason)
    log.info("run finished: t=%.6f, steps=%d, stop=%s, linf_u=%.3e",
             state.t, state.step, stop_reason, records[-1].linf_u)
    return state, series
