"""Sequential and batch Bayesian-optimisation loops with stall-based convergence."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .acquisition import AcquisitionSurface, SearchConfig, search_surface
from .batch import select_batch
from .domain import BoxDomain, initial_design
from .gp import Dataset, FitConfig, FitFailureError, Hyperparameters, NumericDegeneracyError, fit

log = logging.getLogger(__name__)

TRACE_FIELDS_HEAD = ("iteration", "batch_index")
TRACE_FIELDS_TAIL = ("reward", "incumbent", "timestamp")


@dataclass(frozen=True)
class ConvergenceCriterion:
    """Stop when the last ``window`` increments of the incumbent are all below ``epsilon``.

    ``min_evaluations`` is a guard applied by the optimisation loops: the
    test is not consulted until the dataset holds at least that many points.
    The default of 0 leaves the plain stall test.
    """

    epsilon: float = 1e-3
    window: int = 2
    min_evaluations: int = 0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.min_evaluations < 0:
            raise ValueError("min_evaluations must be >= 0")


def check_convergence(incumbents: Sequence[float], criterion: ConvergenceCriterion) -> bool:
    """True iff ``|R_i - R_{i-j}| < eps`` for ``j = 1..window`` at the latest index ``i``."""
    n = criterion.window
    if len(incumbents) <= n:
        return False
    last = incumbents[-1]
    return all(abs(last - incumbents[-1 - j]) < criterion.epsilon for j in range(1, n + 1))


@dataclass(frozen=True)
class Evaluation:
    """Objective value plus an optional flag (e.g. ``"diverged"``)."""

    reward: float
    flag: str = ""


@dataclass
class Objective:
    """Black-box reward to maximise over a box."""

    evaluator: Callable[[np.ndarray], "float | Evaluation"]
    domain: BoxDomain
    name: str = "objective"

    def __call__(self, x) -> Evaluation:
        out = self.evaluator(np.asarray(x, dtype=float))
        if not isinstance(out, Evaluation):
            out = Evaluation(float(out))
        if not np.isfinite(out.reward):
            raise ValueError(f"objective {self.name!r} returned non-finite reward {out.reward}")
        return out


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    points: tuple[tuple[float, ...], ...]
    rewards: tuple[float, ...]
    incumbent: float
    hyper: Hyperparameters | None = None
    converged: bool = False
    degenerate: bool = False
    flags: tuple[str, ...] = ()
    timings: dict = field(default_factory=dict, compare=False)
    timestamps: tuple[float, ...] = field(default=(), compare=False)


@dataclass
class OptimizationTrace:
    """Per-iteration history. Iteration 0 holds the initial design."""

    objective_name: str
    dim: int
    batch_size: int
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""
    error: str | None = None

    @property
    def n_iterations(self) -> int:
        return sum(1 for r in self.records if r.iteration > 0)

    @property
    def n_evaluations(self) -> int:
        return sum(len(r.rewards) for r in self.records)

    @property
    def incumbents(self) -> list[float]:
        return [r.incumbent for r in self.records if r.iteration > 0]

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"

    def all_points(self) -> np.ndarray:
        pts = [p for r in self.records for p in r.points]
        return np.asarray(pts, dtype=float).reshape(-1, self.dim)

    def all_rewards(self) -> np.ndarray:
        return np.asarray([v for r in self.records for v in r.rewards], dtype=float)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.all_rewards()))

    @property
    def best_point(self) -> np.ndarray:
        return self.all_points()[self.best_index]

    @property
    def best_reward(self) -> float:
        return float(self.all_rewards()[self.best_index])

    def rows(self) -> list[dict]:
        """One row per evaluation, in evaluation order."""
        out = []
        running = -np.inf
        for rec in self.records:
            stamps = rec.timestamps or (float("nan"),) * len(rec.rewards)
            for k, (p, r, ts) in enumerate(zip(rec.points, rec.rewards, stamps)):
                running = max(running, r)
                row = {"iteration": rec.iteration, "batch_index": k}
                row.update({f"x{i}": v for i, v in enumerate(p)})
                row.update({"reward": r, "incumbent": running, "timestamp": ts})
                out.append(row)
        return out

    def field_names(self) -> list[str]:
        return [*TRACE_FIELDS_HEAD, *(f"x{i}" for i in range(self.dim)), *TRACE_FIELDS_TAIL]

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.field_names(), lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_trace_csv(path) -> list[dict]:
    """Parse a trace file written by :meth:`OptimizationTrace.write_csv`."""
    with Path(path).open(newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append(
                {
                    k: (int(v) if k in TRACE_FIELDS_HEAD else float(v))
                    for k, v in row.items()
                }
            )
    return rows


class OptimizationError(RuntimeError):
    """Loop aborted; ``trace`` holds everything recorded before the failure."""

    def __init__(self, message: str, trace: OptimizationTrace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class BoConfig:
    """Loop settings shared by the sequential and batch optimisers.

    The default GP pins the noise at 1e-6 (normalised units) because the
    objectives here are deterministic simulators. ``epsilon`` of the
    convergence criterion is measured in standardised reward units when
    ``standardized_epsilon`` is set.
    """

    fit: FitConfig = FitConfig(noise_variance=1e-6)
    search: SearchConfig = SearchConfig()
    seed: int = 0
    workers: int = 1
    n_init: int = 2
    standardized_epsilon: bool = True


def _iteration_seeds(seed: int, iteration: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence([int(seed), int(iteration)]).generate_state(2)
    return int(a), int(b)


def initial_dataset(objective: Objective, n: int = 2, seed: int = 0) -> tuple[Dataset, IterationRecord]:
    """Evaluate ``n`` seeded Sobol points; returns the data and its trace record."""
    X = initial_design(objective.domain, n, seed)
    evals, stamps = [], []
    for x in X:
        evals.append(objective(x))
        stamps.append(time.time())
    rewards = [e.reward for e in evals]
    rec = IterationRecord(
        iteration=0,
        points=tuple(tuple(float(v) for v in x) for x in X),
        rewards=tuple(rewards),
        incumbent=max(rewards),
        flags=tuple(e.flag for e in evals),
        timestamps=tuple(stamps),
    )
    return Dataset(X, rewards), rec


def _init_record(init: Dataset) -> IterationRecord:
    return IterationRecord(
        iteration=0,
        points=tuple(tuple(float(v) for v in x) for x in init.inputs),
        rewards=tuple(float(r) for r in init.rewards),
        incumbent=init.best_reward,
        flags=("",) * init.size,
    )


def _evaluate_all(objective: Objective, X: np.ndarray, workers: int) -> tuple[list[Evaluation], list[float]]:
    def one(x):
        e = objective(x)
        return e, time.time()

    if workers > 1 and len(X) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, X))
    else:
        results = [one(x) for x in X]
    return [r[0] for r in results], [r[1] for r in results]


def _scaled(incumbents: list[float], rewards: np.ndarray, enabled: bool) -> list[float]:
    if not enabled:
        return incumbents
    s = float(np.std(rewards))
    if not np.isfinite(s) or s <= 0:
        s = 1.0
    return [v / s for v in incumbents]


def _run(
    objective: Objective,
    init: Dataset,
    n_b: int,
    criterion: ConvergenceCriterion,
    budget: int,
    config: BoConfig,
    use_batch: bool,
    init_record: IterationRecord | None,
) -> OptimizationTrace:
    if init.size < 2:
        raise ValueError("the initial dataset needs at least 2 evaluated points")
    if n_b < 1:
        raise ValueError("n_b must be >= 1")
    domain = objective.domain
    trace = OptimizationTrace(objective.name, domain.dim, n_b)
    trace.records.append(init_record or _init_record(init))
    data = init
    used = 0
    iteration = 0
    while True:
        if used >= budget:
            trace.stop_reason = "budget_exhausted"
            break
        iteration += 1
        fit_seed, search_seed = _iteration_seeds(config.seed, iteration)
        k = min(n_b, budget - used)
        t0 = time.perf_counter()
        try:
            model = fit(data, replace(config.fit, domain=domain, seed=fit_seed))
        except (FitFailureError, NumericDegeneracyError) as exc:
            trace.stop_reason = "fit_failed"
            trace.error = str(exc)
            raise OptimizationError(f"GP fit failed at iteration {iteration}: {exc}", trace) from exc
        t1 = time.perf_counter()
        search = config.search.with_seed(search_seed)
        if use_batch:
            batch = select_batch(model, domain, k, search, iteration=iteration)
            X, degenerate = batch.elements, batch.degenerate
        else:
            res = search_surface(AcquisitionSurface.from_model(model), domain, search)
            X, degenerate = res.point[None, :], res.degenerate
        t2 = time.perf_counter()
        try:
            evals, stamps = _evaluate_all(objective, X, config.workers)
        except Exception as exc:
            trace.stop_reason = "evaluation_failed"
            trace.error = f"{type(exc).__name__}: {exc}"
            raise OptimizationError(
                f"objective {objective.name!r} failed at iteration {iteration}: {exc}", trace
            ) from exc
        t3 = time.perf_counter()
        rewards = [e.reward for e in evals]
        data = data.extend(X, rewards)
        used += len(rewards)
        incumbent = data.best_reward
        incumbents = trace.incumbents + [incumbent]
        converged = data.size >= criterion.min_evaluations and check_convergence(
            _scaled(incumbents, data.rewards, config.standardized_epsilon), criterion
        )
        trace.records.append(
            IterationRecord(
                iteration=iteration,
                points=tuple(tuple(float(v) for v in x) for x in X),
                rewards=tuple(rewards),
                incumbent=incumbent,
                hyper=model.hyper,
                converged=converged,
                degenerate=degenerate,
                flags=tuple(e.flag for e in evals),
                timings={"fit": t1 - t0, "acquisition": t2 - t1, "evaluation": t3 - t2},
                timestamps=tuple(stamps),
            )
        )
        log.debug("%s it=%d best=%.6g", objective.name, iteration, incumbent)
        if converged:
            trace.stop_reason = "converged"
            break
    return trace


def run_sequential_bo(
    objective: Objective,
    init: Dataset,
    criterion: ConvergenceCriterion = ConvergenceCriterion(),
    budget: int = 100,
    config: BoConfig = BoConfig(),
    init_record: IterationRecord | None = None,
) -> OptimizationTrace:
    """Generic BO: fit, maximise EI, evaluate one point, repeat.

    ``budget`` counts evaluations beyond the initial design.
    """
    return _run(objective, init, 1, criterion, budget, config, False, init_record)


def run_batch_bo(
    objective: Objective,
    init: Dataset,
    n_b: int,
    criterion: ConvergenceCriterion = ConvergenceCriterion(),
    budget: int = 100,
    config: BoConfig = BoConfig(),
    init_record: IterationRecord | None = None,
) -> OptimizationTrace:
    """Batch BO with local penalisation; one GP fit per batch of ``n_b`` evaluations.

    The final batch is truncated if fewer than ``n_b`` evaluations remain in
    the budget. With ``workers > 1`` the batch is evaluated concurrently.
    """
    return _run(objective, init, n_b, criterion, budget, config, True, init_record)


def optimize(
    objective: Objective,
    n_b: int = 1,
    criterion: ConvergenceCriterion = ConvergenceCriterion(),
    budget: int = 100,
    config: BoConfig = BoConfig(),
) -> OptimizationTrace:
    """Initial design plus the appropriate loop."""
    init, rec = initial_dataset(objective, config.n_init, config.seed)
    if n_b == 1:
        return run_sequential_bo(objective, init, criterion, budget, config, rec)
    return run_batch_bo(objective, init, n_b, criterion, budget, config, rec)
