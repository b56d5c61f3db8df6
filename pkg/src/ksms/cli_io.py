"""Configuration grammar, validation, and the command-line surface.

Configs are line-oriented ``section.key = value`` text with ``#``
comments; unknown keys are rejected with their line number, and an empty
file is a complete, valid configuration.  Exit codes: 0 success, 1
validation problem, 2 runtime failure.
"""

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .elliptic_solver import EllipticSolveOptions
from .errors import ConfigError, KsmsError, SnapshotFormatError
from .grid_field import Grid2D
from .motility import compute_k0, constant, double_exp, exp_decay, ks_pair, power_law
from .snapshot_io import read_snapshot, write_snapshot  # re-exported file format API
from .time_stepper import StepControl, initial_condition

log = logging.getLogger("ksms")

_FAMILIES = ("exp_decay", "double_exp", "power_law", "constant")
_IC_KINDS = ("constant", "cosine", "random", "gaussian")
_INTEGRATORS = ("euler", "heun")


@dataclass
class GridConfig:
    nx: int = 64
    ny: int = 64
    lx: float = 4.0
    ly: float = 4.0


@dataclass
class ModelConfig:
    mu: float = 1.0


@dataclass
class MotilityConfig:
    family: str = "exp_decay"
    alpha: float = 0.0
    lam: float = 1.0       # config key motility.lambda; attribute renamed, keyword
    c0: float = 1.0
    k: float = 1.0
    v0_shift: float = 1.0
    gamma0: float = 1.0
    chi0: float = 0.0


@dataclass
class ICConfig:
    kind: str = "cosine"
    amplitude: float = 0.5
    seed: int = 12345
    modes: tuple = (2, 2)


@dataclass
class TimeConfig:
    t_end: float = 40.0
    safety: float = 0.4
    dt_max: float = 1.0
    dt_min: float = 1e-10
    integrator: str = "heun"


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = None   # None -> 10 * (nx + ny), resolved against the grid


@dataclass
class OutputConfig:
    dir: str = "out"
    every: float = 0.25
    snapshots: bool = False
    conv_tol: float = 1e-6
    conv_patience: int = 5


@dataclass
class SimConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    motility: MotilityConfig = field(default_factory=MotilityConfig)
    ic: ICConfig = field(default_factory=ICConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def build_grid(self) -> Grid2D:
        return Grid2D(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)

    def build_motility(self):
        m = self.motility
        if m.family == "constant":
            return constant(m.gamma0, m.chi0)
        if m.family == "exp_decay":
            base = exp_decay(m.lam)
        elif m.family == "double_exp":
            base = double_exp()
        elif m.family == "power_law":
            base = power_law(m.c0, m.k, m.v0_shift)
        else:
            raise ConfigError(f"unknown motility.family {m.family!r}")
        return ks_pair(base, m.alpha)

    def build_step_control(self) -> StepControl:
        t = self.time
        return StepControl(safety=t.safety, dt_max=t.dt_max, dt_min=t.dt_min,
                           integrator=t.integrator)

    def build_solver_options(self) -> EllipticSolveOptions:
        return EllipticSolveOptions(tol=self.solver.tol, max_iter=self.solver.max_iter)

    def to_text(self) -> str:
        """Fully resolved key = value dump; parses back to this config."""
        lines = []
        for key, spec in KEY_SPECS.items():
            val = _get_by_key(self, key)
            if key == "solver.max_iter" and val is None:
                val = self.build_solver_options().resolved_max_iter(self.build_grid())
            lines.append(f"{key} = {_format_value(val, spec[0])}")
        return "\n".join(lines) + "\n"


# key -> (type tag, attribute path, validator, description of the constraint)
KEY_SPECS = {
    "grid.nx": ("int", ("grid", "nx"), lambda v: v >= 3, ">= 3"),
    "grid.ny": ("int", ("grid", "ny"), lambda v: v >= 3, ">= 3"),
    "grid.lx": ("float", ("grid", "lx"), lambda v: v > 0.0, "> 0"),
    "grid.ly": ("float", ("grid", "ly"), lambda v: v > 0.0, "> 0"),
    "model.mu": ("float", ("model", "mu"), lambda v: v >= 0.0, ">= 0"),
    "motility.family": ("str", ("motility", "family"), lambda v: v in _FAMILIES,
                        f"one of {', '.join(_FAMILIES)}"),
    "motility.alpha": ("float", ("motility", "alpha"), lambda v: True, "finite"),
    "motility.lambda": ("float", ("motility", "lam"), lambda v: v > 0.0, "> 0"),
    "motility.c0": ("float", ("motility", "c0"), lambda v: v > 0.0, "> 0"),
    "motility.k": ("float", ("motility", "k"), lambda v: v >= 0.0, ">= 0"),
    "motility.v0_shift": ("float", ("motility", "v0_shift"), lambda v: v >= 0.0, ">= 0"),
    "motility.gamma0": ("float", ("motility", "gamma0"), lambda v: v > 0.0, "> 0"),
    "motility.chi0": ("float", ("motility", "chi0"), lambda v: True, "finite"),
    "ic.kind": ("str", ("ic", "kind"), lambda v: v in _IC_KINDS,
                f"one of {', '.join(_IC_KINDS)}"),
    "ic.amplitude": ("float", ("ic", "amplitude"), lambda v: True,
                     "range depends on ic.kind"),
    "ic.seed": ("int", ("ic", "seed"), lambda v: v >= 0, ">= 0"),
    "ic.modes": ("intpair", ("ic", "modes"), lambda v: v[0] >= 0 and v[1] >= 0,
                 "two integers >= 0"),
    "time.t_end": ("float", ("time", "t_end"), lambda v: v > 0.0, "> 0"),
    "time.safety": ("float", ("time", "safety"), lambda v: 0.0 < v <= 1.0, "in (0, 1]"),
    "time.dt_max": ("float", ("time", "dt_max"), lambda v: v > 0.0, "> 0"),
    "time.dt_min": ("float", ("time", "dt_min"), lambda v: v > 0.0, "> 0"),
    "time.integrator": ("str", ("time", "integrator"), lambda v: v in _INTEGRATORS,
                        f"one of {', '.join(_INTEGRATORS)}"),
    "solver.tol": ("float", ("solver", "tol"), lambda v: 0.0 < v < 1.0, "in (0, 1)"),
    "solver.max_iter": ("int", ("solver", "max_iter"), lambda v: v >= 1, ">= 1"),
    "output.dir": ("str", ("output", "dir"), lambda v: len(v) > 0, "non-empty"),
    "output.every": ("float", ("output", "every"), lambda v: v > 0.0, "> 0"),
    "output.snapshots": ("bool", ("output", "snapshots"), lambda v: True, "true/false"),
    "output.conv_tol": ("float", ("output", "conv_tol"), lambda v: v > 0.0, "> 0"),
    "output.conv_patience": ("int", ("output", "conv_patience"), lambda v: v >= 1, ">= 1"),
}


def _get_by_key(cfg: SimConfig, key: str):
    section, attr = KEY_SPECS[key][1]
    return getattr(getattr(cfg, section), attr)


def _set_by_key(cfg: SimConfig, key: str, value):
    section, attr = KEY_SPECS[key][1]
    setattr(getattr(cfg, section), attr, value)


def _format_value(val, tag: str) -> str:
    if tag == "bool":
        return "true" if val else "false"
    if tag == "intpair":
        return f"{val[0]},{val[1]}"
    if tag == "float":
        return repr(float(val))
    return str(val)


def parse_value(key: str, raw: str, lineno=None):
    """Parse and range-check one value; raw is the text right of '='."""
    where = f" at line {lineno}" if lineno is not None else ""
    tag, _, ok, constraint = KEY_SPECS[key]
    raw = raw.strip()
    try:
        if tag == "int":
            val = int(raw)
        elif tag == "float":
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError("not finite")
        elif tag == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError("expected true or false")
            val = low == "true"
        elif tag == "intpair":
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) != 2:
                raise ValueError("expected two comma-separated integers")
            val = (int(parts[0]), int(parts[1]))
        else:
            val = raw
    except ValueError as exc:
        raise ConfigError(f"{key}{where}: cannot parse {raw!r} as {tag} ({exc})") from None
    if not ok(val):
        raise ConfigError(f"{key}{where}: value {raw!r} out of range, must be {constraint}")
    return val


def tokenize_config(text: str):
    """Yield (lineno, key, raw_value) for each assignment line."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = body.split("=", 1)
        yield lineno, key.strip(), raw


def build_config(overrides: dict) -> SimConfig:
    """Assemble and cross-validate a config from {key: parsed value}."""
    cfg = SimConfig()
    for key, value in overrides.items():
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key {key!r}")
        _set_by_key(cfg, key, value)
    # force every derived object through its own validation
    g = cfg.build_grid()
    cfg.build_motility()
    cfg.build_step_control()
    cfg.build_solver_options()
    initial_condition(cfg.ic.kind, cfg.ic.amplitude, cfg.ic.modes, cfg.ic.seed,
                      Grid2D(3, 3, g.lx, g.ly))  # cheap stand-in grid, same checks
    return cfg


def parse_config(text: str, collect_defaults: list = None) -> SimConfig:
    """Parse config text; defaults fill every unset key and are logged."""
    overrides = {}
    for lineno, key, raw in tokenize_config(text):
        if key not in KEY_SPECS:
            raise ConfigError(f"unknown config key {key!r} at line {lineno}")
        if key in overrides:
            raise ConfigError(f"duplicate key {key!r} at line {lineno}")
        overrides[key] = parse_value(key, raw, lineno)
    cfg = build_config(overrides)
    for key, spec in KEY_SPECS.items():
        if key not in overrides:
            val = _get_by_key(cfg, key)
            if key == "solver.max_iter" and val is None:
                shown = f"10*(nx+ny) = {cfg.build_solver_options().resolved_max_iter(cfg.build_grid())}"
            else:
                shown = _format_value(val, spec[0])
            log.info("default %s = %s", key, shown)
            if collect_defaults is not None:
                collect_defaults.append((key, shown))
    return cfg


def load_config(path, collect_defaults: list = None) -> SimConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, collect_defaults)


class _Parser(argparse.ArgumentParser):
    # usage mistakes are validation errors: exit 1, not argparse's default 2
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ksms", description="Chemotaxis simulator with signal-dependent motility")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("run", help="simulate a config; writes diagnostics.csv")
    q.add_argument("config")
    q.add_argument("--out", help="override output.dir")

    q = sub.add_parser("sweep", help="run a parameter sweep plan; writes regime_map.csv")
    q.add_argument("plan")

    q = sub.add_parser("fit", help="fit an exponential decay rate from a diagnostics CSV")
    q.add_argument("csv")
    q.add_argument("--quantity", default="E", choices=("E", "l2_u", "linf_u", "linf_v"))
    q.add_argument("--window-fraction", type=float, default=0.5)

    q = sub.add_parser("k0", help="report the motility admissibility probe")
    q.add_argument("config")
    q.add_argument("--v-max", type=float, default=20.0)
    q.add_argument("--n", type=int, default=2000)

    q = sub.add_parser("check-config", help="validate a config and echo the defaults used")
    q.add_argument("config")
    return p


def _cmd_run(args) -> int:
    from .time_stepper import run

    cfg = load_config(args.config)
    state, series = run(cfg, out_dir=args.out)
    out = Path(args.out if args.out else cfg.output.dir)
    rec = series.last
    print(f"stopped: {series.stop_reason} at t = {rec.t:.6f} after {state.step} steps")
    print(f"linf_u = {rec.linf_u:.6e}  mass = {rec.mass:.6e}  E = {rec.E:.6e}")
    print(f"diagnostics: {out / 'diagnostics.csv'}")
    return 0


def _cmd_sweep(args) -> int:
    from .sweep import load_plan, run_sweep

    plan = load_plan(args.plan)
    entries = run_sweep(plan)
    counts = {}
    for e in entries:
        counts[e.classification] = counts.get(e.classification, 0) + 1
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))
    print(f"{len(entries)} runs ({summary})")
    print(f"regime map: {Path(plan.dir) / 'regime_map.csv'}")
    return 0


def _cmd_fit(args) -> int:
    from .diagnostics import fit_decay_rate, read_diagnostics_csv

    data = read_diagnostics_csv(args.csv)
    if "t" not in data or args.quantity not in data:
        raise ConfigError(f"{args.csv}: needs columns 't' and {args.quantity!r}")
    fit = fit_decay_rate((data["t"], data[args.quantity]),
                         window_fraction=args.window_fraction,
                         quantity=args.quantity)
    print(f"quantity    {fit.quantity}")
    print(f"rate        {fit.rate:.12e}")
    print(f"intercept   {fit.intercept:.12e}")
    print(f"r_squared   {fit.r_squared:.12f}")
    print(f"window      [{fit.window[0]:.6f}, {fit.window[1]:.6f}]")
    return 0


def _cmd_k0(args) -> int:
    cfg = load_config(args.config)
    spec = cfg.build_motility()
    report = compute_k0(spec, v_max=args.v_max, n=args.n)
    mu = cfg.model.mu
    threshold = report.k0_estimate / 16.0
    print(f"family           {spec.family}")
    print(f"gamma range      [{report.gamma_min:.6e}, {report.gamma_max:.6e}] on [0, {report.v_max:g}]")
    print(f"k0_estimate      {report.k0_estimate:.12e}")
    print(f"sup_location     {report.sup_location:.12e}")
    print(f"boundedness      {report.boundedness_flag}")
    print(f"threshold k0/16  {threshold:.12e}")
    print(f"mu = {mu:g} is {'above' if mu > threshold else 'NOT above'} the threshold")
    return 0


def _cmd_check_config(args) -> int:
    defaults = []
    load_config(args.config, collect_defaults=defaults)
    print(f"{args.config}: valid")
    for key, shown in defaults:
        print(f"default {key} = {shown}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "fit": _cmd_fit,
    "k0": _cmd_k0,
    "check-config": _cmd_check_config,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ConfigError, SnapshotFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KsmsError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
