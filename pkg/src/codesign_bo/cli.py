"""Command-line front end.

Runs are described by a TOML file; every key is optional and unknown keys are
rejected. The resolved configuration is written next to the outputs. See the
README for the full key list.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import tomli_w

from .bayesopt import BoConfig, ConvergenceCriterion, Objective, OptimizationError, optimize
from .codesign import CoDesignConfig, InnerConfig, IterationWindow, inner_loop_optimize, plant_seed, run_codesign
from .domain import BoxDomain
from .econ import EconParams, economies_report
from .gp import FitConfig
from .plantsim import (
    ControlParams,
    PlantParams,
    SimConfig,
    SyntheticQuadratic,
    WindModel,
    episode_cost,
    evaluate_performance_index,
    run_episode,
)

log = logging.getLogger("codesign_bo")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_PARSE = 4
EXIT_INVALID = 5

MODES = ("codesign", "bo", "batch-bo", "econ", "simulate")
OBJECTIVES = ("plantsim", "synthetic-quadratic", "quadratic", "branin")


class ConfigError(ValueError):
    """Invalid configuration; ``exit_code`` tells the CLI how to exit."""

    def __init__(self, message: str, exit_code: int = EXIT_INVALID):
        super().__init__(message)
        self.exit_code = exit_code


# ---------------------------------------------------------------------------
# Configuration schema
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSection:
    lower: tuple[float, ...] = ()
    upper: tuple[float, ...] = ()


@dataclass(frozen=True)
class ConvergenceSection:
    epsilon: float = 1e-3
    window: int = 2
    min_evaluations: int = -1  # -1: mode default
    budget: int = -1  # -1: mode default


@dataclass(frozen=True)
class InnerSection:
    control_lower: float = -0.2
    control_upper: float = 0.35
    max_windows: int = 20
    epsilon: float = 1e-3
    window: int = 2
    min_evaluations: int = 8


@dataclass(frozen=True)
class WindowSection:
    settle: float = 60.0
    performance: float = 120.0
    update: float = 0.0


@dataclass(frozen=True)
class GpSection:
    n_restarts: int = 8
    fit_noise: bool = False
    noise_variance: float = 1e-6
    lengthscale_min: float = 5e-2
    lengthscale_max: float = 1e3
    screen_per_dim: int = 2048
    refine_starts: int = 5
    refine_iterations: int = 200


@dataclass(frozen=True)
class PlantSection:
    cm_offset_bounds: tuple[float, float] = (-0.5, 0.5)
    stab_area_bounds: tuple[float, float] = (0.5, 2.0)


@dataclass(frozen=True)
class SimulateSection:
    cm_offset: float = 0.0
    stab_area: float = 1.25
    pitch_setpoint: float = 0.05
    settle: float = 60.0
    duration: float = 120.0
    dt: float = 0.01


@dataclass(frozen=True)
class WindSection:
    enabled: bool = True
    v_base: float = 0.606
    v_x0: float = 0.0866
    v_y0: float = 0.065
    v_z0: float = 0.0087
    omega_dist: float = 2.0 * math.pi


@dataclass(frozen=True)
class WeightsSection:
    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0


@dataclass(frozen=True)
class SyntheticSection:
    plant_opt: tuple[float, float] = (0.4, 0.6)
    control_opt: float = 0.5
    slope: tuple[float, float] = (0.4, -0.3)


@dataclass(frozen=True)
class EconSection:
    c_eng: float = 30.0
    c_recharge: float = 240.0
    c_wrecharge: float = 2400.0
    c_lost_time: float = 1200.0
    t_print: float = 12.0
    t_3dfins: float = 4.0
    t_lead: float = 5.0
    t_setup: float = 30.0
    t_reconfig: float = 5.0
    t_exp: float = 1200.0
    m: int = 1
    m_prime: int = 2
    scenarios: tuple[tuple[int, int], ...] = ((1, 8), (3, 6), (4, 5))


@dataclass(frozen=True)
class RunConfig:
    mode: str = "codesign"
    objective: str = "plantsim"
    seed: int = 0
    batch_size: int = 1
    workers: int = 1
    output_dir: str = "results"
    domain: DomainSection = DomainSection()
    convergence: ConvergenceSection = ConvergenceSection()
    inner: InnerSection = InnerSection()
    window: WindowSection = WindowSection()
    gp: GpSection = GpSection()
    plant: PlantSection = PlantSection()
    simulate: SimulateSection = SimulateSection()
    wind: WindSection = WindSection()
    weights: WeightsSection = WeightsSection()
    synthetic: SyntheticSection = SyntheticSection()
    econ: EconSection = EconSection()


# ---------------------------------------------------------------------------
# Strict dict <-> dataclass conversion
# ---------------------------------------------------------------------------


def _coerce(value, hint, key: str):
    origin = typing.get_origin(hint)
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        args = typing.get_args(hint)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{key}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{key}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(v, a, f"{key}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    raise TypeError(f"unsupported config type {hint}")  # pragma: no cover


def _build(cls, data, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: expected a table")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key '{prefix}{key}'")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            kwargs[f.name] = _build(hint, data[f.name], f"{prefix}{f.name}.")
        else:
            kwargs[f.name] = _coerce(data[f.name], hint, f"{prefix}{f.name}")
    return cls(**kwargs)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    return obj


def config_from_dict(data: dict) -> RunConfig:
    """Validated, fully resolved config from a parsed TOML table."""
    return resolve(_build(RunConfig, data))


def config_to_toml(config: RunConfig) -> str:
    return tomli_w.dumps(_to_plain(config))


def load_config(path) -> RunConfig:
    """Read a TOML run configuration, checking keys and types only."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", EXIT_MISSING)
    try:
        data = tomllib.loads(path.read_text())
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", EXIT_PARSE) from exc
    return _build(RunConfig, data)


def parse_config(path) -> RunConfig:
    """Read, validate and resolve a TOML run configuration."""
    return resolve(load_config(path))


def _objective_domain(cfg: RunConfig) -> tuple[tuple[float, ...], tuple[float, ...]]:
    p = cfg.plant
    joint = (
        (p.cm_offset_bounds[0], p.stab_area_bounds[0], cfg.inner.control_lower),
        (p.cm_offset_bounds[1], p.stab_area_bounds[1], cfg.inner.control_upper),
    )
    return {
        "plantsim": joint,
        "synthetic-quadratic": joint,
        "quadratic": ((0.0,), (1.0,)),
        "branin": ((-5.0, 0.0), (10.0, 15.0)),
    }[cfg.objective]


def resolve(cfg: RunConfig) -> RunConfig:
    """Fill mode-dependent defaults and check every invariant."""
    if cfg.mode not in MODES:
        raise ConfigError(f"mode: must be one of {', '.join(MODES)}, got {cfg.mode!r}")
    if cfg.objective not in OBJECTIVES:
        raise ConfigError(f"objective: must be one of {', '.join(OBJECTIVES)}, got {cfg.objective!r}")
    if cfg.mode == "codesign" and cfg.objective not in ("plantsim", "synthetic-quadratic"):
        raise ConfigError("objective: codesign mode needs 'plantsim' or 'synthetic-quadratic'")
    if cfg.batch_size < 1:
        raise ConfigError(f"batch_size: must be >= 1, got {cfg.batch_size}")
    if cfg.workers < 1:
        raise ConfigError(f"workers: must be >= 1, got {cfg.workers}")
    if cfg.seed < 0:
        raise ConfigError("seed: must be >= 0")

    conv = cfg.convergence
    if conv.min_evaluations == -1:
        conv = replace(conv, min_evaluations=12 if cfg.mode == "codesign" else 0)
    if conv.budget == -1:
        conv = replace(conv, budget=60 if cfg.mode == "codesign" else 100)
    if not conv.epsilon > 0:
        raise ConfigError("convergence.epsilon: must be > 0")
    if conv.window < 1:
        raise ConfigError("convergence.window: must be >= 1")
    if conv.min_evaluations < 0:
        raise ConfigError("convergence.min_evaluations: must be >= 0")
    if conv.budget < 0:
        raise ConfigError("convergence.budget: must be >= 0")

    dom = cfg.domain
    if not dom.lower and not dom.upper:
        lo, hi = _objective_domain(cfg)
        dom = DomainSection(tuple(lo), tuple(hi))
    if len(dom.lower) != len(dom.upper):
        raise ConfigError(
            f"domain: lower has {len(dom.lower)} entries but upper has {len(dom.upper)}"
        )
    for d, (a, b) in enumerate(zip(dom.lower, dom.upper)):
        if not a < b:
            raise ConfigError(f"domain.lower[{d}]: lower ({a}) must be < upper ({b}) in dimension {d}")
    expected = len(_objective_domain(cfg)[0]) if cfg.objective != "quadratic" else None
    if cfg.mode in ("bo", "batch-bo") and expected is not None and len(dom.lower) != expected:
        raise ConfigError(f"domain: objective {cfg.objective!r} needs {expected} dimensions")

    for name, (a, b) in (("plant.cm_offset_bounds", cfg.plant.cm_offset_bounds), ("plant.stab_area_bounds", cfg.plant.stab_area_bounds)):
        if not a < b:
            raise ConfigError(f"{name}: lower ({a}) must be < upper ({b})")
    if cfg.plant.stab_area_bounds[0] <= 0:
        raise ConfigError("plant.stab_area_bounds: stabiliser area must be > 0")
    inn = cfg.inner
    if not inn.control_lower < inn.control_upper:
        raise ConfigError(
            f"inner.control_lower: lower ({inn.control_lower}) must be < upper ({inn.control_upper})"
        )
    if inn.max_windows < 3:
        raise ConfigError("inner.max_windows: must be >= 3")
    if not inn.epsilon > 0:
        raise ConfigError("inner.epsilon: must be > 0")
    if inn.window < 1:
        raise ConfigError("inner.window: must be >= 1")
    if inn.min_evaluations < 0:
        raise ConfigError("inner.min_evaluations: must be >= 0")
    w = cfg.window
    if not w.settle > 0:
        raise ConfigError("window.settle: must be > 0")
    if not w.performance > 0:
        raise ConfigError("window.performance: must be > 0")
    if w.update < 0:
        raise ConfigError("window.update: must be >= 0")
    g = cfg.gp
    if g.n_restarts < 1:
        raise ConfigError("gp.n_restarts: must be >= 1")
    if not g.noise_variance > 0:
        raise ConfigError("gp.noise_variance: must be > 0")
    if not 0 < g.lengthscale_min < g.lengthscale_max:
        raise ConfigError("gp.lengthscale_min: must satisfy 0 < lengthscale_min < lengthscale_max")
    for name in ("screen_per_dim", "refine_starts", "refine_iterations"):
        if getattr(g, name) < 1:
            raise ConfigError(f"gp.{name}: must be >= 1")
    s = cfg.simulate
    if not s.stab_area > 0:
        raise ConfigError("simulate.stab_area: must be > 0")
    if not (s.settle >= 0 and s.duration > 0):
        raise ConfigError("simulate.duration: must be > 0 (and settle >= 0)")
    if not 0 < s.dt <= 0.05:
        raise ConfigError("simulate.dt: must lie in (0, 0.05]")
    if not cfg.wind.v_base > 0:
        raise ConfigError("wind.v_base: must be > 0")
    if not cfg.wind.omega_dist >= 0:
        raise ConfigError("wind.omega_dist: must be >= 0")
    for k in ("k1", "k2", "k3"):
        if getattr(cfg.weights, k) < 0:
            raise ConfigError(f"weights.{k}: must be >= 0")
    e = cfg.econ
    for f in fields(EconSection):
        if f.name == "scenarios":
            continue
        if getattr(e, f.name) < 0:
            raise ConfigError(f"econ.{f.name}: must be nonnegative")
    if not e.scenarios:
        raise ConfigError("econ.scenarios: at least one [n_per_batch, n_convergence] pair is required")
    for i, (n, k) in enumerate(e.scenarios):
        if n < 1 or k < 1:
            raise ConfigError(f"econ.scenarios[{i}]: entries must be >= 1")
    return replace(cfg, convergence=conv, domain=dom)


# ---------------------------------------------------------------------------
# Translation to library objects
# ---------------------------------------------------------------------------


def _bo_config(cfg: RunConfig) -> BoConfig:
    g = cfg.gp
    from .acquisition import SearchConfig

    return BoConfig(
        fit=FitConfig(
            n_restarts=g.n_restarts,
            noise_variance=None if g.fit_noise else g.noise_variance,
            lengthscale_bounds=(g.lengthscale_min, g.lengthscale_max),
        ),
        search=SearchConfig(
            screen_per_dim=g.screen_per_dim, n_starts=g.refine_starts, max_iter=g.refine_iterations
        ),
        seed=cfg.seed,
        workers=cfg.workers,
    )


def _sim_config(cfg: RunConfig, dt: float = 0.01) -> SimConfig:
    w = cfg.wind
    wind = WindModel(w.v_base, w.v_x0, w.v_y0, w.v_z0, w.omega_dist, enabled=w.enabled)
    synthetic = None
    if cfg.objective == "synthetic-quadratic":
        s = cfg.synthetic
        synthetic = SyntheticQuadratic(s.plant_opt, s.control_opt, s.slope)
    return SimConfig(
        wind=wind,
        dt=dt,
        weights=(cfg.weights.k1, cfg.weights.k2, cfg.weights.k3),
        synthetic=synthetic,
        plant_bounds=(cfg.plant.cm_offset_bounds, cfg.plant.stab_area_bounds),
        control_bounds=(cfg.inner.control_lower, cfg.inner.control_upper),
    )


def codesign_config(cfg: RunConfig) -> CoDesignConfig:
    inn = cfg.inner
    bo = _bo_config(cfg)
    inner = InnerConfig(
        control_bounds=(inn.control_lower, inn.control_upper),
        window=IterationWindow(cfg.window.settle, cfg.window.performance, cfg.window.update),
        max_windows=inn.max_windows,
        criterion=ConvergenceCriterion(inn.epsilon, inn.window, inn.min_evaluations),
        bo=replace(bo, workers=1),
        sim=_sim_config(cfg),
    )
    c = cfg.convergence
    return CoDesignConfig(
        plant_bounds=(cfg.plant.cm_offset_bounds, cfg.plant.stab_area_bounds),
        n_b=cfg.batch_size,
        outer_budget=c.budget,
        criterion=ConvergenceCriterion(c.epsilon, c.window, c.min_evaluations),
        bo=bo,
        inner=inner,
        seed=cfg.seed,
    )


def _branin(x: np.ndarray) -> float:
    a, b, c = 1.0, 5.1 / (4 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * math.pi)
    x1, x2 = x
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * math.cos(x1) + s


def build_objective(cfg: RunConfig) -> Objective:
    """Reward-to-maximise for the ``bo`` / ``batch-bo`` modes."""
    domain = BoxDomain(cfg.domain.lower, cfg.domain.upper)
    if cfg.objective == "quadratic":
        return Objective(lambda x: -float(np.sum((domain.to_unit(x) - 0.3) ** 2)), domain, "quadratic")
    if cfg.objective == "branin":
        return Objective(lambda x: -_branin(x), domain, "branin")
    sim = _sim_config(cfg)
    w = cfg.window

    def joint(x: np.ndarray) -> float:
        plant = PlantParams(float(x[0]), float(x[1]))
        return -episode_cost(plant, ControlParams(float(x[2])), w.settle, w.performance, cfg.seed, sim)

    return Objective(joint, domain, cfg.objective)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(path: Path, rows: list[dict], header: list[str] | None = None) -> None:
    header = header or (list(rows[0]) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


SUMMARY_FIELDS = [
    "mode", "objective", "seed", "batch_size", "best_point", "best_cost",
    "iterations", "evaluations", "stop_reason",
]


def write_summary(out: Path, cfg: RunConfig, best_point, best_cost, iterations, evaluations, stop_reason) -> dict:
    row = {
        "mode": cfg.mode,
        "objective": cfg.objective,
        "seed": cfg.seed,
        "batch_size": cfg.batch_size,
        "best_point": " ".join(repr(float(v)) for v in best_point),
        "best_cost": float(best_cost),
        "iterations": iterations,
        "evaluations": evaluations,
        "stop_reason": stop_reason,
    }
    write_rows(out / "summary.csv", [row], SUMMARY_FIELDS)
    return row


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------


def run_mode_codesign(cfg: RunConfig, out: Path) -> dict:
    cd = codesign_config(cfg)
    result = run_codesign(cd)
    result.outer_trace.write_csv(out / "outer_trace.csv")
    inner_rows = []
    for key, trace in result.inner_traces.items():
        for row in trace.rows():
            row = {k: v for k, v in row.items() if k != "timestamp"}
            inner_rows.append({"cm_offset": key[0], "stab_area": key[1], **row})
    write_rows(out / "inner_traces.csv", inner_rows)
    write_rows(out / "convergence.csv", result.convergence_rows())
    # time series of the best plant's inner loop (set-point steps and tracking)
    inner = replace(cd.resolved_inner(), keep_history=True)
    best = inner_loop_optimize(result.best_plant, inner, plant_seed(cd.seed, result.best_plant))
    if best.history is not None and len(best.history):
        best.history.write_csv(out / "timeseries.csv")
    point = [*result.best_plant.as_array(), result.best_control.pitch_setpoint]
    print(
        f"best plant: cm_offset={result.best_plant.cm_offset:.4f} m, "
        f"stab_area={result.best_plant.stab_area:.4f} m^2; "
        f"pitch set-point={result.best_control.pitch_setpoint:.4f} rad; J={result.best_cost:.6g}"
    )
    print(f"outer iterations: {result.outer_iterations} ({result.outer_trace.stop_reason})")
    return write_summary(
        out, cfg, point, result.best_cost, result.outer_iterations,
        result.outer_trace.n_evaluations, result.outer_trace.stop_reason,
    )


def run_mode_bo(cfg: RunConfig, out: Path) -> dict:
    objective = build_objective(cfg)
    c = cfg.convergence
    trace = optimize(
        objective,
        n_b=cfg.batch_size,
        criterion=ConvergenceCriterion(c.epsilon, c.window, c.min_evaluations),
        budget=c.budget,
        config=_bo_config(cfg),
    )
    trace.write_csv(out / "trace.csv")
    write_rows(
        out / "convergence.csv",
        [{"iteration": r.iteration, "evaluations": len(r.rewards), "incumbent": r.incumbent} for r in trace.records],
    )
    print(f"best point: {np.array2string(trace.best_point, precision=5)}; reward={trace.best_reward:.6g}")
    print(f"iterations: {trace.n_iterations} ({trace.stop_reason})")
    return write_summary(
        out, cfg, trace.best_point, -trace.best_reward, trace.n_iterations, trace.n_evaluations, trace.stop_reason
    )


def run_mode_econ(cfg: RunConfig, out: Path) -> dict:
    e = cfg.econ
    params = EconParams(**{f.name: getattr(e, f.name) for f in fields(EconSection) if f.name != "scenarios"})
    report = economies_report(params, e.scenarios)
    rows = [
        {
            "n_per_batch": r.n_per_batch,
            "n_convergence": r.n_convergence,
            "c_3d": r.c_3d,
            "c_3dfins": r.c_3dfins,
            "c_lead": r.c_lead,
            "c_wchannel": r.c_wchannel,
            "per_batch_total": r.per_batch_total,
            "campaign_total": r.campaign_total,
        }
        for r in report.rows
    ]
    write_rows(out / "cost_table.csv", rows)
    print(report.table())
    last = report.rows[-1]
    return write_summary(
        out, cfg, [last.n_per_batch], last.campaign_total, len(report.rows), len(report.rows),
        "monotone_decreasing" if report.monotone_decreasing else "not_monotone",
    )


def run_mode_simulate(cfg: RunConfig, out: Path) -> dict:
    s = cfg.simulate
    plant = PlantParams(s.cm_offset, s.stab_area)
    sim = _sim_config(cfg, dt=s.dt)
    hist = run_episode(plant, ControlParams(s.pitch_setpoint), s.settle + s.duration, cfg.seed, sim)
    hist.write_csv(out / "timeseries.csv")
    if hist.diverged:
        raise RuntimeError("simulation diverged")
    t_end = float(hist.time[-1])
    cost = evaluate_performance_index(hist, sim.weights, (t_end - s.duration, t_end))
    print(f"J over [{t_end - s.duration:g}, {t_end:g}] s = {cost:.10g}")
    return write_summary(out, cfg, [s.cm_offset, s.stab_area, s.pitch_setpoint], cost, 1, 1, "completed")


def run_report(out: Path) -> int:
    summary = out / "summary.csv"
    if not summary.is_file():
        print(f"error: no summary.csv in {out}", file=sys.stderr)
        return EXIT_MISSING
    with summary.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        width = max(len(k) for k in row)
        for k, v in row.items():
            print(f"{k:<{width}}  {v}")
    conv = out / "convergence.csv"
    if conv.is_file():
        with conv.open(newline="") as fh:
            crow = list(csv.DictReader(fh))
        print(f"convergence records: {len(crow)} (see {conv})")
    return EXIT_OK


def run(cfg: RunConfig) -> int:
    """Execute a resolved config; writes outputs under ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.toml").write_text(config_to_toml(cfg))
    handler = {
        "codesign": run_mode_codesign,
        "bo": run_mode_bo,
        "batch-bo": run_mode_bo,
        "econ": run_mode_econ,
        "simulate": run_mode_simulate,
    }[cfg.mode]
    handler(cfg, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codesign-bo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("codesign", "nested plant/controller co-design"),
        ("bo", "standalone (batch) Bayesian optimisation"),
        ("econ", "experimental campaign cost table"),
        ("simulate", "single closed-loop episode"),
        ("report", "print the summary of a finished run"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="TOML run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        if name != "report":
            p.add_argument("--seed", type=int, help="random seed (overrides seed)")
            p.add_argument("--batch-size", type=int, help="batch size n_b (overrides batch_size)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            if args.out is None and args.config is None:
                print("error: report needs --out or --config", file=sys.stderr)
                return EXIT_USAGE
            out = args.out if args.out is not None else Path(parse_config(args.config).output_dir)
            return run_report(out)

        cfg = load_config(args.config) if args.config is not None else RunConfig()
        mode = args.command
        if mode == "bo":
            mode = "batch-bo" if cfg.mode == "batch-bo" else "bo"
        overrides = {"mode": mode}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.batch_size is not None:
            overrides["batch_size"] = args.batch_size
        if args.out is not None:
            overrides["output_dir"] = str(args.out)
        if mode in ("bo", "batch-bo") and args.config is None:
            overrides["objective"] = "quadratic"
        cfg = resolve(replace(cfg, **overrides))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    try:
        return run(cfg)
    except OptimizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
