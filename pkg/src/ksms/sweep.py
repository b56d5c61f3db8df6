"""Parameter sweeps probing the growth threshold, with a regime map as output.

A plan is the same key = value grammar as a config, plus sweep.* keys:
``sweep.axis.<config.key>`` lists values for one axis, ``sweep.seeds``
replicates every point across initial-condition seeds, and
``sweep.parallelism`` bounds the worker pool.  Outputs are deterministic
functions of the configs alone: rows are sorted by parameter value before
writing, and the wall-time column is recorded as nan (measured times go
to the log) so the map file is byte-identical at any parallelism.
"""

import itertools
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .cli_io import KEY_SPECS, build_config, parse_value, tokenize_config
from .diagnostics import DiagnosticsSeries, fit_decay_rate, lyapunov_monotone
from .errors import ConfigError, FitError, KsmsError
from .motility import compute_k0

log = logging.getLogger("ksms")

_REGIME_COLUMNS = ("k0", "threshold", "classification", "final_linf_u",
                   "e_rate", "e_monotone", "wall_seconds")


@dataclass
class SweepPlan:
    axes: list                      # [(config key, [values])], sorted by key
    seeds: list = field(default_factory=list)
    parallelism: int = 1
    dir: str = "sweep_out"
    base_overrides: dict = field(default_factory=dict)


@dataclass
class RegimeEntry:
    parameters: dict                # swept key -> value, including ic.seed
    k0: float
    threshold: float
    classification: str             # converged | non_converged_bounded | aborted
    final_linf_u: float
    e_rate: float
    e_monotone: bool
    wall_seconds: float             # measured; logged, persisted as nan


def parse_plan(text: str) -> SweepPlan:
    axes = {}
    seeds = []
    parallelism = 1
    out_dir = "sweep_out"
    base = {}
    for lineno, key, raw in tokenize_config(text):
        if key.startswith("sweep.axis."):
            target = key[len("sweep.axis."):]
            if target not in KEY_SPECS:
                raise ConfigError(f"unknown swept key {target!r} at line {lineno}")
            if KEY_SPECS[target][0] == "intpair":
                raise ConfigError(f"{target} cannot be swept (line {lineno})")
            vals = [parse_value(target, p, lineno) for p in raw.split(",")]
            if not vals:
                raise ConfigError(f"empty axis {target!r} at line {lineno}")
            axes[target] = vals
        elif key == "sweep.seeds":
            try:
                seeds = [int(p.strip()) for p in raw.split(",")]
            except ValueError:
                raise ConfigError(f"sweep.seeds at line {lineno}: expected integers") from None
            if not seeds or any(s < 0 for s in seeds):
                raise ConfigError(f"sweep.seeds at line {lineno}: need >= 0 integers")
        elif key == "sweep.parallelism":
            try:
                parallelism = int(raw)
            except ValueError:
                raise ConfigError(f"sweep.parallelism at line {lineno}: expected integer") from None
            if parallelism < 1:
                raise ConfigError("sweep.parallelism must be >= 1")
        elif key == "sweep.dir":
            out_dir = raw.strip()
        elif key.startswith("sweep."):
            raise ConfigError(f"unknown sweep key {key!r} at line {lineno}")
        else:
            if key not in KEY_SPECS:
                raise ConfigError(f"unknown config key {key!r} at line {lineno}")
            base[key] = parse_value(key, raw, lineno)
    if not axes and not seeds:
        raise ConfigError("plan defines no sweep.axis.* and no sweep.seeds")
    if not seeds:
        seeds = [base.get("ic.seed", 12345)]
    return SweepPlan(axes=sorted(axes.items()), seeds=seeds,
                     parallelism=parallelism, dir=out_dir, base_overrides=base)


def load_plan(path) -> SweepPlan:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read plan {path}: {exc}") from None
    return parse_plan(text)


def swept_keys(plan: SweepPlan) -> list:
    return [key for key, _ in plan.axes] + ["ic.seed"]


def expand(plan: SweepPlan):
    """Cartesian product of axes x seeds -> validated configs.

    Every point gets its own run directory under plan.dir, numbered in
    product order, so naming never depends on execution schedule.  Any
    invalid point aborts the whole expansion.
    """
    keys = [key for key, _ in plan.axes]
    value_lists = [vals for _, vals in plan.axes]
    points = list(itertools.product(*value_lists)) if keys else [()]
    configs = []
    problems = []
    idx = 0
    for combo in points:
        for seed in plan.seeds:
            overrides = dict(plan.base_overrides)
            overrides.update(zip(keys, combo))
            overrides["ic.seed"] = seed
            overrides["output.dir"] = str(Path(plan.dir) / f"run_{idx:04d}")
            try:
                configs.append(build_config(overrides))
            except ConfigError as exc:
                problems.append(f"point {dict(zip(keys, combo))}, seed {seed}: {exc}")
            idx += 1
    if problems:
        raise ConfigError("sweep expansion failed:\n  " + "\n  ".join(problems))
    return configs


def classify(series: DiagnosticsSeries, conv_tol: float) -> str:
    """Completed series only; aborted runs never produce a series."""
    if series.last.linf_u < conv_tol:
        return "converged"
    return "non_converged_bounded"


def _run_one(task):
    """Worker: run one config, reduce it to a RegimeEntry. Must stay picklable."""
    from .cli_io import _get_by_key          # local import keeps fork cheap
    from .time_stepper import run

    cfg, keys = task
    params = {key: _get_by_key(cfg, key) for key in keys}
    run_dir = Path(cfg.output.dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.to_text(), encoding="utf-8")

    try:
        report = compute_k0(cfg.build_motility(), v_max=20.0, n=2000)
        k0 = report.k0_estimate
    except KsmsError:
        k0 = math.nan

    t0 = time.perf_counter()
    try:
        _, series = run(cfg)
        classification = classify(series, cfg.output.conv_tol)
        final_linf = series.last.linf_u
        e_mono = lyapunov_monotone(series)
        try:
            fit = fit_decay_rate((series.column("t"), series.column("E")))
            e_rate = fit.rate
        except FitError:
            e_rate = math.nan
    except KsmsError as exc:
        log.warning("run %s aborted: %s", run_dir.name, exc)
        classification = "aborted"
        final_linf = math.nan
        e_rate = math.nan
        e_mono = False
    wall = time.perf_counter() - t0
    return RegimeEntry(parameters=params, k0=k0, threshold=k0 / 16.0,
                       classification=classification, final_linf_u=final_linf,
                       e_rate=e_rate, e_monotone=e_mono, wall_seconds=wall)


def _sort_key(entry: RegimeEntry, keys):
    return tuple(entry.parameters[k] for k in keys)


def _format_param(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, int):
        return str(val)
    if isinstance(val, float):
        return f"{val:.16e}"
    return str(val)


def write_regime_map(entries, keys, path) -> None:
    """One sorted row per run; wall_seconds intentionally written as nan."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(list(keys) + list(_REGIME_COLUMNS)) + "\n")
        for e in sorted(entries, key=lambda x: _sort_key(x, keys)):
            cells = [_format_param(e.parameters[k]) for k in keys]
            cells += [f"{e.k0:.16e}", f"{e.threshold:.16e}", e.classification,
                      f"{e.final_linf_u:.16e}", f"{e.e_rate:.16e}",
                      "true" if e.e_monotone else "false", "nan"]
            fh.write(",".join(cells) + "\n")


def run_sweep(plan: SweepPlan):
    """Execute every point, then assemble regime_map.csv under plan.dir."""
    configs = expand(plan)
    keys = swept_keys(plan)
    Path(plan.dir).mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, keys) for cfg in configs]
    if plan.parallelism == 1:
        entries = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=plan.parallelism) as pool:
            entries = list(pool.map(_run_one, tasks))
    for e in entries:
        log.info("point %s: %s in %.1fs", e.parameters, e.classification, e.wall_seconds)
    write_regime_map(entries, keys, Path(plan.dir) / "regime_map.csv")
    return entries
