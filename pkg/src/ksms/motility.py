"""Motility pairs (gamma, chi) and the boundedness constant K0.

A MotilitySpec bundles evaluators for the diffusivity gamma(v), its
derivative, and the drift coefficient chi(v).  The admissibility
requirements are gamma(v) > 0 and a finite K0 = sup over v >= 0 of
chi(v)^2 / gamma(v); K0 feeds the growth threshold mu > K0/16 that
separates the proven-convergence regime from terra incognita.

Families whose gamma has a closed-form logarithm carry it along, so the
ratio chi^2/gamma can be formed in log space.  That matters for the
double-exponential family, where gamma underflows to 0.0 long before the
ratio itself stops being representable.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, ModelValidityError

GOLDEN_TOL = 1e-10
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class MotilitySpec:
    """Immutable motility pair; evaluators are vectorized over v."""

    family: str
    params: dict = field(default_factory=dict)
    gamma_fn: Callable = None
    dgamma_fn: Callable = None
    chi_fn: Callable = None
    log_gamma_fn: Optional[Callable] = None
    alpha: Optional[float] = None

    def gamma(self, v):
        return self.gamma_fn(np.asarray(v, dtype=np.float64))

    def dgamma(self, v):
        return self.dgamma_fn(np.asarray(v, dtype=np.float64))

    def chi(self, v):
        return self.chi_fn(np.asarray(v, dtype=np.float64))

    def log_gamma(self, v):
        if self.log_gamma_fn is None:
            raise ValueError(f"family {self.family} has no closed-form log gamma")
        return self.log_gamma_fn(np.asarray(v, dtype=np.float64))

    @property
    def has_log_gamma(self) -> bool:
        return self.log_gamma_fn is not None


@dataclass(frozen=True)
class H1Report:
    """Admissibility probe of a motility pair on [0, v_max]."""

    gamma_min: float
    gamma_max: float
    k0_estimate: float
    sup_location: float
    boundedness_flag: str  # "verified_on_interval" or "suspect_unbounded"
    gamma_positive: bool
    v_max: float
    n: int

    @property
    def passed(self) -> bool:
        return self.gamma_positive and self.boundedness_flag == "verified_on_interval"


def exp_decay(lam: float = 1.0) -> MotilitySpec:
    """gamma(v) = exp(-lam*v), chi = 0; pair it with an alpha via ks_pair."""
    if not (np.isfinite(lam) and lam > 0.0):
        raise ConfigError(f"exp_decay rate must be positive and finite, got {lam}")
    return MotilitySpec(
        family="exp_decay",
        params={"lambda": lam},
        gamma_fn=lambda v: np.exp(-lam * v),
        dgamma_fn=lambda v: -lam * np.exp(-lam * v),
        chi_fn=lambda v: np.zeros_like(np.asarray(v, dtype=np.float64)),
        log_gamma_fn=lambda v: -lam * v,
    )


def double_exp() -> MotilitySpec:
    """gamma(v) = exp(-exp(v)); decays so fast that log-space handling is a must."""
    return MotilitySpec(
        family="double_exp",
        params={},
        gamma_fn=lambda v: np.exp(-np.exp(v)),
        dgamma_fn=lambda v: -np.exp(v - np.exp(v)),
        chi_fn=lambda v: np.zeros_like(np.asarray(v, dtype=np.float64)),
        log_gamma_fn=lambda v: -np.exp(v),
    )


def power_law(c0: float = 1.0, k: float = 1.0, v0_shift: float = 1.0) -> MotilitySpec:
    """gamma(v) = c0 / (v0_shift + v)^k.

    v0_shift = 0 reproduces the singular power law; it is only usable when v
    stays strictly positive, which the runtime guards check face by face.
    """
    if not (np.isfinite(c0) and c0 > 0.0):
        raise ConfigError(f"power_law c0 must be positive, got {c0}")
    if not (np.isfinite(k) and k >= 0.0):
        raise ConfigError(f"power_law exponent must be >= 0, got {k}")
    if not (np.isfinite(v0_shift) and v0_shift >= 0.0):
        raise ConfigError(f"power_law v0_shift must be >= 0, got {v0_shift}")
    return MotilitySpec(
        family="power_law",
        params={"c0": c0, "k": k, "v0_shift": v0_shift},
        gamma_fn=lambda v: c0 * (v0_shift + v) ** (-k),
        dgamma_fn=lambda v: -c0 * k * (v0_shift + v) ** (-k - 1.0),
        chi_fn=lambda v: np.zeros_like(np.asarray(v, dtype=np.float64)),
        log_gamma_fn=lambda v: math.log(c0) - k * np.log(v0_shift + v),
    )


def constant(gamma0: float = 1.0, chi0: float = 0.0) -> MotilitySpec:
    """Constant diffusivity gamma0 > 0 and constant drift coefficient chi0."""
    if not (np.isfinite(gamma0) and gamma0 > 0.0):
        raise ConfigError(f"constant gamma0 must be positive, got {gamma0}")
    if not np.isfinite(chi0):
        raise ConfigError(f"constant chi0 must be finite, got {chi0}")
    return MotilitySpec(
        family="constant",
        params={"gamma0": gamma0, "chi0": chi0},
        gamma_fn=lambda v: np.full_like(np.asarray(v, dtype=np.float64), gamma0),
        dgamma_fn=lambda v: np.zeros_like(np.asarray(v, dtype=np.float64)),
        chi_fn=lambda v: np.full_like(np.asarray(v, dtype=np.float64), chi0),
        log_gamma_fn=lambda v: np.full_like(np.asarray(v, dtype=np.float64), math.log(gamma0)),
    )


def custom_table(v_samples, gamma_samples, chi_samples=None) -> MotilitySpec:
    """Piecewise-linear pair from tabulated samples; clamped outside the table.

    Only piecewise smooth, so it is excluded from theory-verification runs;
    the derivative is the interpolated table gradient.
    """
    vs = np.asarray(v_samples, dtype=np.float64)
    gs = np.asarray(gamma_samples, dtype=np.float64)
    if vs.ndim != 1 or vs.size < 2 or np.any(np.diff(vs) <= 0.0):
        raise ConfigError("custom_table needs >= 2 strictly increasing v samples")
    if gs.shape != vs.shape:
        raise ConfigError("custom_table gamma samples must match v samples")
    if not np.all(np.isfinite(gs)) or np.any(gs <= 0.0):
        raise ConfigError("custom_table gamma samples must be finite and positive")
    if chi_samples is None:
        cs = np.zeros_like(vs)
    else:
        cs = np.asarray(chi_samples, dtype=np.float64)
        if cs.shape != vs.shape or not np.all(np.isfinite(cs)):
            raise ConfigError("custom_table chi samples must be finite and match v samples")
    dgs = np.gradient(gs, vs)
    return MotilitySpec(
        family="custom_table",
        params={"n_samples": int(vs.size)},
        gamma_fn=lambda v: np.interp(v, vs, gs),
        dgamma_fn=lambda v: np.interp(v, vs, dgs),
        chi_fn=lambda v: np.interp(v, vs, cs),
        log_gamma_fn=None,
    )


def ks_pair(base: MotilitySpec, alpha: float) -> MotilitySpec:
    """Tie the drift to the diffusivity: chi(v) = (alpha - 1) * gamma'(v).

    alpha = 1 gives pure signal-dependent diffusion; alpha = 0 gives
    chi = -gamma', the aggregation-by-slowdown coupling.
    """
    if not np.isfinite(alpha):
        raise ConfigError(f"alpha must be finite, got {alpha}")
    dg = base.dgamma_fn
    return MotilitySpec(
        family=f"ks_pair({base.family})",
        params=dict(base.params, alpha=alpha),
        gamma_fn=base.gamma_fn,
        dgamma_fn=base.dgamma_fn,
        chi_fn=lambda v: (alpha - 1.0) * dg(v),
        log_gamma_fn=base.log_gamma_fn,
        alpha=alpha,
    )


def evaluate(spec: MotilitySpec, v: float):
    """Evaluate (gamma, gamma', chi) at a single v >= 0, with validity checks."""
    v = float(v)
    if v < 0.0:
        raise ValueError(f"motility evaluated at negative v = {v}")
    g = float(spec.gamma(v))
    dg = float(spec.dgamma(v))
    c = float(spec.chi(v))
    if not (np.isfinite(g) and np.isfinite(dg) and np.isfinite(c)):
        raise ModelValidityError(f"non-finite motility values at v = {v}: {(g, dg, c)}")
    if g <= 0.0:
        raise ModelValidityError(f"gamma(v) = {g} <= 0 at v = {v} (underflow or invalid pair)")
    return g, dg, c


def _ratio_values(spec: MotilitySpec, v):
    """chi^2/gamma, formed in log space when the family supports it."""
    v = np.asarray(v, dtype=np.float64)
    c = spec.chi_fn(v)
    if spec.has_log_gamma:
        lg = spec.log_gamma_fn(v)
        with np.errstate(divide="ignore"):
            return np.exp(2.0 * np.log(np.abs(c)) - lg)
    g = spec.gamma_fn(v)
    g = np.atleast_1d(np.asarray(g, dtype=np.float64))
    bad = ~np.isfinite(g) | (g <= 0.0)
    if np.any(bad):
        vb = float(np.atleast_1d(v)[np.argmax(bad)])
        raise ModelValidityError(f"gamma <= 0 or non-finite at v = {vb}")
    return np.asarray(c) ** 2 / g


def _golden_max(f, a: float, b: float, tol: float = GOLDEN_TOL):
    """Golden-section maximization on [a, b]; returns (argmax, max)."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def compute_k0(spec: MotilitySpec, v_max: float = 20.0, n: int = 2000) -> H1Report:
    """Estimate K0 = sup of chi^2/gamma on [0, v_max].

    Uniform scan on n+1 points, then golden-section refinement around the
    grid argmax.  The flag turns suspect when the maximum sits at the right
    endpoint and the ratio is still climbing over the last tenth of the
    interval, i.e. the sup is probably not on [0, v_max] at all.
    """
    if not (np.isfinite(v_max) and v_max > 0.0):
        raise ConfigError(f"v_max must be positive, got {v_max}")
    if n < 1000:
        raise ConfigError(f"need n >= 1000 scan points, got {n}")
    vs = np.linspace(0.0, v_max, n + 1)
    ratio = np.asarray(_ratio_values(spec, vs))
    if not np.all(np.isfinite(ratio)):
        vb = float(vs[np.argmax(~np.isfinite(ratio))])
        raise ModelValidityError(f"chi^2/gamma not finite at v = {vb}")
    gvals = np.asarray(spec.gamma_fn(vs), dtype=np.float64)

    i = int(np.argmax(ratio))
    a = vs[max(i - 1, 0)]
    b = vs[min(i + 1, n)]
    scalar_ratio = lambda x: float(_ratio_values(spec, np.asarray([x]))[0])
    loc, val = _golden_max(scalar_ratio, float(a), float(b))
    if val >= ratio[i]:
        k0, sup_at = float(val), float(loc)
    else:
        k0, sup_at = float(ratio[i]), float(vs[i])

    suspect = i == n and ratio[n] > ratio[int(0.9 * n)]
    return H1Report(
        gamma_min=float(np.min(gvals)),
        gamma_max=float(np.max(gvals)),
        k0_estimate=k0,
        sup_location=sup_at,
        boundedness_flag="suspect_unbounded" if suspect else "verified_on_interval",
        gamma_positive=True,
        v_max=float(v_max),
        n=int(n),
    )


def validate_h1(spec: MotilitySpec, v_max: float = 20.0, n: int = 2000) -> H1Report:
    """Non-throwing admissibility probe; failures come back in the report."""
    try:
        return compute_k0(spec, v_max=v_max, n=n)
    except ModelValidityError:
        vs = np.linspace(0.0, v_max, n + 1)
        with np.errstate(all="ignore"):
            gvals = np.asarray(spec.gamma_fn(vs), dtype=np.float64)
        finite = gvals[np.isfinite(gvals)]
        return H1Report(
            gamma_min=float(np.min(finite)) if finite.size else math.nan,
            gamma_max=float(np.max(finite)) if finite.size else math.nan,
            k0_estimate=math.nan,
            sup_location=math.nan,
            boundedness_flag="suspect_unbounded",
            gamma_positive=False,
            v_max=float(v_max),
            n=int(n),
        )
