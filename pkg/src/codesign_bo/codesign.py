"""Nested plant/controller co-design.

The outer loop runs batch BO over plant parameters. Each outer evaluation is
a complete inner BO run over the pitch set-point, carried out on a single
continuously running simulator: every inner evaluation is one iteration
window (settle, then measure) with the new set-point applied.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .bayesopt import (
    BoConfig,
    ConvergenceCriterion,
    Evaluation,
    Objective,
    OptimizationTrace,
    optimize,
)
from .domain import BoxDomain
from .plantsim import ControlParams, PlantParams, SimConfig, SimHistory, make_simulator

log = logging.getLogger(__name__)

FAILURE_FLAG = "diverged"
INITIAL_PENALTY = 1e6
PENALTY_FACTOR = 10.0

__all__ = [
    "CoDesignConfig",
    "CoDesignResult",
    "ControlParams",
    "InnerConfig",
    "InnerResult",
    "IterationWindow",
    "PlantParams",
    "inner_loop_optimize",
    "run_codesign",
]


@dataclass(frozen=True)
class IterationWindow:
    """Simulated-time layout of one inner iteration (seconds).

    ``update_duration`` is the time spent computing the next set-point; in
    simulation it costs wall-clock only, so the default is 0.
    """

    settle_duration: float = 60.0
    performance_duration: float = 120.0
    update_duration: float = 0.0

    def __post_init__(self) -> None:
        if not self.settle_duration > 0:
            raise ValueError("settle_duration must be > 0")
        if not self.performance_duration > 0:
            raise ValueError("performance_duration must be > 0")
        if self.update_duration < 0:
            raise ValueError("update_duration must be >= 0")


@dataclass(frozen=True)
class InnerConfig:
    """Inner-loop settings. ``max_windows`` counts the initial design too."""

    control_bounds: tuple[float, float] = (-0.2, 0.35)
    window: IterationWindow = IterationWindow()
    max_windows: int = 20
    criterion: ConvergenceCriterion = ConvergenceCriterion(1e-3, 2, min_evaluations=8)
    bo: BoConfig = BoConfig()
    sim: SimConfig = SimConfig()
    keep_history: bool = False

    def __post_init__(self) -> None:
        lo, hi = self.control_bounds
        if not lo < hi:
            raise ValueError(f"control_bounds: lower ({lo}) must be < upper ({hi})")
        if self.max_windows <= self.bo.n_init:
            raise ValueError("max_windows must exceed the initial design size")

    @property
    def domain(self) -> BoxDomain:
        return BoxDomain((self.control_bounds[0],), (self.control_bounds[1],))


@dataclass(frozen=True)
class InnerResult:
    plant: PlantParams
    best_control: ControlParams
    reward: float
    trace: OptimizationTrace
    failed_windows: int = 0
    history: object = None


def plant_seed(base_seed: int, plant: PlantParams) -> int:
    """Seed for the inner loop of ``plant``: a hash of the base seed and the plant's bytes."""
    words = np.frombuffer(plant.as_array().astype(np.float64).tobytes(), dtype=np.uint32)
    return int(np.random.SeedSequence([int(base_seed), *words.tolist()]).generate_state(1)[0])


class _WindowObjective:
    """Evaluates one iteration window per call on a persistent simulator."""

    def __init__(self, plant: PlantParams, config: InnerConfig, seed: int):
        self.config = config
        self.sim = make_simulator(plant, config.sim, seed, keep_history=config.keep_history)
        self.worst_cost = -math.inf
        self.failures = 0

    def penalty(self) -> float:
        if math.isfinite(self.worst_cost) and self.worst_cost > 0:
            return -PENALTY_FACTOR * self.worst_cost
        return -INITIAL_PENALTY

    def __call__(self, x: np.ndarray) -> Evaluation:
        w = self.config.window
        theta_sp = float(x[0])
        res = self.sim.run_window(theta_sp, w.settle_duration, w.performance_duration)
        if res.diverged or not math.isfinite(res.cost):
            self.failures += 1
            log.warning("window diverged at pitch set-point %.4f; simulator reset", theta_sp)
            self.sim.reset(theta_sp)
            return Evaluation(self.penalty(), FAILURE_FLAG)
        self.worst_cost = max(self.worst_cost, res.cost)
        return Evaluation(-res.cost)


def inner_loop_optimize(plant: PlantParams, config: InnerConfig = InnerConfig(), seed: int = 0) -> InnerResult:
    """Sequential BO over the pitch set-point for one plant.

    Returns the best set-point, its reward ``-J`` and the inner trace.
    """
    (c0, c1), (a0, a1) = config.sim.plant_bounds
    if not (c0 <= plant.cm_offset <= c1 and a0 <= plant.stab_area <= a1):
        raise ValueError(f"plant {plant} lies outside the plant bounds")
    evaluator = _WindowObjective(plant, config, seed)
    objective = Objective(evaluator, config.domain, name=f"inner{tuple(plant.as_array())}")
    trace = optimize(
        objective,
        n_b=1,
        criterion=config.criterion,
        budget=config.max_windows - config.bo.n_init,
        config=replace(config.bo, seed=seed),
    )
    history = None
    if config.keep_history:
        history = SimHistory.concatenate(evaluator.sim.history)
    return InnerResult(
        plant=plant,
        best_control=ControlParams(float(trace.best_point[0])),
        reward=trace.best_reward,
        trace=trace,
        failed_windows=evaluator.failures,
        history=history,
    )


@dataclass(frozen=True)
class CoDesignConfig:
    """Outer-loop settings. ``outer_budget`` counts outer evaluations after the initial design."""

    plant_bounds: tuple[tuple[float, float], tuple[float, float]] = ((-0.5, 0.5), (0.5, 2.0))
    n_b: int = 1
    outer_budget: int = 60
    criterion: ConvergenceCriterion = ConvergenceCriterion(1e-3, 2, min_evaluations=12)
    bo: BoConfig = BoConfig()
    inner: InnerConfig = InnerConfig()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_b < 1:
            raise ValueError("n_b must be >= 1")
        for d, (lo, hi) in enumerate(self.plant_bounds):
            if not lo < hi:
                raise ValueError(f"plant_bounds[{d}]: lower ({lo}) must be < upper ({hi})")
        if self.outer_budget < 0:
            raise ValueError("outer_budget must be >= 0")

    @property
    def domain(self) -> BoxDomain:
        return BoxDomain(tuple(b[0] for b in self.plant_bounds), tuple(b[1] for b in self.plant_bounds))

    def resolved_inner(self) -> InnerConfig:
        """Inner config whose simulator shares this run's plant and control bounds."""
        sim = replace(
            self.inner.sim,
            plant_bounds=tuple(tuple(b) for b in self.plant_bounds),
            control_bounds=tuple(self.inner.control_bounds),
        )
        return replace(self.inner, sim=sim)


@dataclass
class CoDesignResult:
    best_plant: PlantParams
    best_control: ControlParams
    best_cost: float
    outer_trace: OptimizationTrace
    inner_traces: dict[tuple[float, float], OptimizationTrace] = field(default_factory=dict)
    inner_results: dict[tuple[float, float], InnerResult] = field(default_factory=dict)

    @property
    def outer_iterations(self) -> int:
        return self.outer_trace.n_iterations

    def convergence_rows(self) -> list[dict]:
        """One row per outer evaluation: plant, best control, cost and running best cost."""
        rows = []
        best = math.inf
        for rec in self.outer_trace.records:
            for k, (p, r) in enumerate(zip(rec.points, rec.rewards)):
                inner = self.inner_results.get(tuple(p))
                best = min(best, -r)
                rows.append(
                    {
                        "iteration": rec.iteration,
                        "batch_index": k,
                        "cm_offset": p[0],
                        "stab_area": p[1],
                        "pitch_setpoint": inner.best_control.pitch_setpoint if inner else float("nan"),
                        "cost": -r,
                        "best_cost": best,
                    }
                )
        return rows


def run_codesign(config: CoDesignConfig = CoDesignConfig()) -> CoDesignResult:
    """Outer batch BO over the plant; each plant is scored by a full inner BO run."""
    inner_cfg = config.resolved_inner()
    results: dict[tuple[float, float], InnerResult] = {}
    lock = threading.Lock()

    def evaluate_plant(x: np.ndarray) -> Evaluation:
        plant = PlantParams.from_array(x)
        res = inner_loop_optimize(plant, inner_cfg, plant_seed(config.seed, plant))
        with lock:
            results[tuple(float(v) for v in x)] = res
        flag = FAILURE_FLAG if res.failed_windows and res.failed_windows >= res.trace.n_evaluations else ""
        return Evaluation(res.reward, flag)

    objective = Objective(evaluate_plant, config.domain, name="plant")
    outer = optimize(
        objective,
        n_b=config.n_b,
        criterion=config.criterion,
        budget=config.outer_budget,
        config=replace(config.bo, seed=config.seed),
    )
    best_key = max(results, key=lambda k: results[k].reward)
    best = results[best_key]
    return CoDesignResult(
        best_plant=best.plant,
        best_control=best.best_control,
        best_cost=-best.reward,
        outer_trace=outer,
        inner_traces={k: r.trace for k, r in results.items()},
        inner_results=results,
    )
