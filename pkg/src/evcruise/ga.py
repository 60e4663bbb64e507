"""Real-coded genetic algorithm for PID gain tuning.

Fitness is the reciprocal of the closed-loop tracking MSE.  Each generation
keeps its elite unchanged and fills the rest with tournament-selected,
blend-crossed, Gaussian-mutated offspring.  Random streams are keyed on
``(seed, *stream, generation)`` so evaluation order never affects results.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .harness import Scenario, SimulationError, batch_mse, run_closed_loop, step_scenario
from .pid import Gains
from .plant import VehicleParams
from .table import GainTable

log = logging.getLogger(__name__)

HISTORY_HEADER = ("generation", "best_fitness", "mean_fitness")
GAINS_HEADER = ("kp", "ki", "kd")

# Operating ranges the gain table may cover
V_REF_RANGE = (0.0, 30.0)
THETA_RANGE = (math.radians(-10.0), math.radians(10.0))
V_W_RANGE = (-10.0, 15.0)


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    generations: int = 30
    elite_fraction: float = 0.05
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.1
    gain_lower_bounds: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gain_upper_bounds: tuple[float, float, float] = (1000.0, 10.0, 200.0)
    rng_seed: int = 0
    fitness_cap: float = 1e12

    def __post_init__(self):
        lo = tuple(float(x) for x in self.gain_lower_bounds)
        hi = tuple(float(x) for x in self.gain_upper_bounds)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("gain bounds need three entries each")
        if any(a > b for a, b in zip(lo, hi)) or min(lo) < 0:
            raise ValueError(f"invalid gain bounds {lo} .. {hi}")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.elite_fraction * self.population_size < 1 or self.elite_fraction > 1:
            raise ValueError("elite_fraction must keep at least one elite")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.mutation_sigma < 0:
            raise ValueError("mutation_sigma must be non-negative")
        object.__setattr__(self, "gain_lower_bounds", lo)
        object.__setattr__(self, "gain_upper_bounds", hi)

    @property
    def n_elite(self) -> int:
        return int(math.floor(self.elite_fraction * self.population_size + 1e-9))

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.gain_lower_bounds)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.gain_upper_bounds)


@dataclass
class Chromosome:
    gains: Gains
    fitness: float | None = None


@dataclass
class OptimizeResult:
    best: Gains
    best_fitness: float
    history: list[tuple[int, float, float]] = field(default_factory=list)


Evaluator = Callable[[Gains], float]


def generation_rng(cfg: GaConfig, generation: int, stream: tuple[int, ...] = ()) -> np.random.Generator:
    return np.random.default_rng([cfg.rng_seed, *stream, generation])


def _clip(cfg: GaConfig, genes: np.ndarray) -> Gains:
    return Gains.from_array(np.clip(genes, cfg.lower, cfg.upper))


def init_population(cfg: GaConfig, rng: np.random.Generator | None = None) -> list[Chromosome]:
    rng = rng if rng is not None else generation_rng(cfg, 0)
    genes = rng.uniform(cfg.lower, cfg.upper, size=(cfg.population_size, 3))
    return [Chromosome(_clip(cfg, g)) for g in genes]


def fitness_from_mse(mse: float, cap: float = 1e12) -> float:
    if mse == 0:
        return cap
    return min(1.0 / mse, cap)


def evaluate(
    c: Chromosome | Gains,
    scenario: Scenario,
    params: VehicleParams,
    ts: float,
    duration: float | None = None,
    cap: float = 1e12,
) -> float:
    """Fitness of one gain triplet on a closed-loop run; failed runs score 0."""
    gains = c.gains if isinstance(c, Chromosome) else c
    if duration is not None:
        scenario = replace(scenario, duration_s=duration)
    if scenario.duration_s / ts < 1:
        raise ValueError("scenario must span at least one control step")
    try:
        record = run_closed_loop(gains, scenario, params, ts)
    except SimulationError as exc:
        log.debug("chromosome %s unfit: %s", gains, exc)
        return 0.0
    mse = record.mse
    if not math.isfinite(mse):
        return 0.0
    return fitness_from_mse(mse, cap)


@dataclass(frozen=True)
class ScenarioEvaluator:
    """Fitness on one scenario.  ``many`` simulates a whole batch at once;
    calling it on a single triplet goes through the same path."""

    scenario: Scenario
    params: VehicleParams
    ts: float
    cap: float = 1e12

    def many(self, gains: list[Gains]) -> list[float]:
        if not gains:
            return []
        mse = batch_mse(gains, self.scenario, self.params, self.ts)
        return [0.0 if not math.isfinite(m) else fitness_from_mse(float(m), self.cap) for m in mse]

    def __call__(self, gains: Gains) -> float:
        return self.many([gains])[0]


def scenario_evaluator(scenario: Scenario, params: VehicleParams, ts: float, cap: float = 1e12) -> Evaluator:
    return ScenarioEvaluator(scenario, params, ts, cap)


def _rank(population: list[Chromosome]) -> list[int]:
    # best first; equal fitness keeps the lower index first
    return sorted(range(len(population)), key=lambda i: (-population[i].fitness, i))


def tournament(population: list[Chromosome], rng: np.random.Generator) -> int:
    i, j = rng.choice(len(population), size=2, replace=False)
    fi, fj = population[i].fitness, population[j].fitness
    if fi > fj or (fi == fj and i < j):
        return int(i)
    return int(j)


def select_parents(
    population: list[Chromosome], cfg: GaConfig, rng: np.random.Generator
) -> tuple[list[Chromosome], list[Chromosome]]:
    """Split into the elite (passed on unchanged) and a mating pool.

    The pool holds enough tournament winners to breed the rest of the next
    generation, two parents per pair of children.
    """
    if any(c.fitness is None for c in population):
        raise ValueError("population must be evaluated before selection")
    order = _rank(population)
    elites = [population[i] for i in order[: cfg.n_elite]]
    n_children = len(population) - len(elites)
    n_parents = 2 * math.ceil(n_children / 2)
    parents = [population[tournament(population, rng)] for _ in range(n_parents)]
    return elites, parents


def crossover(a: Gains, b: Gains, rng: np.random.Generator, cfg: GaConfig) -> tuple[Gains, Gains]:
    """Whole-arithmetic blend with a single uniform weight."""
    ga, gb = a.as_array(), b.as_array()
    if rng.random() >= cfg.crossover_rate:
        return a, b
    lam = rng.random()
    lo, hi = np.minimum(ga, gb), np.maximum(ga, gb)
    c1 = np.clip(lam * ga + (1 - lam) * gb, lo, hi)
    c2 = np.clip((1 - lam) * ga + lam * gb, lo, hi)
    return _clip(cfg, c1), _clip(cfg, c2)


def mutate(g: Gains, rng: np.random.Generator, cfg: GaConfig) -> Gains:
    genes = g.as_array()
    hit = rng.random(3) < cfg.mutation_rate
    noise = rng.normal(0.0, 1.0, 3) * cfg.mutation_sigma * (cfg.upper - cfg.lower)
    if not hit.any() or cfg.mutation_sigma == 0:
        return g
    return _clip(cfg, np.where(hit, genes + noise, genes))


def _evaluate_all(chromosomes: list[Chromosome], evaluator: Evaluator, map_fn) -> None:
    pending = [c for c in chromosomes if c.fitness is None]
    if map_fn is map and hasattr(evaluator, "many"):
        results = evaluator.many([c.gains for c in pending])
    else:
        results = map_fn(evaluator, [c.gains for c in pending])
    for c, f in zip(pending, results):
        c.fitness = float(f)


def _breed(population: list[Chromosome], cfg: GaConfig, rng: np.random.Generator) -> tuple[list, list]:
    elites, parents = select_parents(population, cfg, rng)
    children: list[Chromosome] = []
    for a, b in zip(parents[::2], parents[1::2]):
        for g in crossover(a.gains, b.gains, rng, cfg):
            children.append(Chromosome(mutate(g, rng, cfg)))
    return list(elites), children[: len(population) - len(elites)]


def evolve(
    population: list[Chromosome],
    cfg: GaConfig,
    evaluator: Evaluator,
    rng: np.random.Generator,
    map_fn=map,
) -> list[Chromosome]:
    """Breed and evaluate the next generation; the elite is kept verbatim."""
    elites, children = _breed(population, cfg, rng)
    _evaluate_all(children, evaluator, map_fn)
    return elites + children


def ga_steps(cfg: GaConfig, stream: tuple[int, ...] = ()):
    """The GA as a generator that hands out work instead of evaluating.

    Each ``yield`` produces the list of unevaluated chromosomes; the caller
    fills in their ``fitness`` and resumes with ``next``.  The generator
    returns the final ``OptimizeResult``.  This lets several independent
    runs share batched evaluations.
    """
    population = init_population(cfg, generation_rng(cfg, 0, stream))
    yield population
    history = [_summary(0, population)]
    for gen in range(1, cfg.generations + 1):
        elites, children = _breed(population, cfg, generation_rng(cfg, gen, stream))
        yield children
        population = elites + children
        history.append(_summary(gen, population))
        log.debug("generation %d best %.6g", gen, history[-1][1])
    best = population[_rank(population)[0]]
    return OptimizeResult(best.gains, best.fitness, history)


def _drive(run, evaluate_batch):
    """Advance one ``ga_steps`` generator to completion."""
    try:
        while True:
            evaluate_batch(next(run))
    except StopIteration as stop:
        return stop.value


def optimize(
    cfg: GaConfig,
    evaluator: Evaluator,
    map_fn=map,
    stream: tuple[int, ...] = (),
) -> OptimizeResult:
    """Run the full GA and return the best triplet with its fitness history.

    ``history`` has one ``(generation, best, mean)`` row per generation,
    starting with the random initial population as generation 0.
    """
    return _drive(ga_steps(cfg, stream), lambda batch: _evaluate_all(batch, evaluator, map_fn))


def _summary(gen: int, population: list[Chromosome]) -> tuple[int, float, float]:
    fitness = [c.fitness for c in population]
    return gen, max(fitness), float(np.mean(fitness))


# ---------------------------------------------------------------- gain table


@dataclass(frozen=True)
class GridSpec:
    v_ref: tuple[float, ...]
    theta: tuple[float, ...]
    v_w: tuple[float, ...]

    def __post_init__(self):
        for name, (lo, hi) in (("v_ref", V_REF_RANGE), ("theta", THETA_RANGE), ("v_w", V_W_RANGE)):
            axis = tuple(float(x) for x in getattr(self, name))
            if not axis:
                raise ValueError(f"grid axis {name} is empty")
            if any(b <= a for a, b in zip(axis, axis[1:])):
                raise ValueError(f"grid axis {name} must be strictly increasing")
            if axis[0] < lo - 1e-12 or axis[-1] > hi + 1e-12:
                raise ValueError(f"grid axis {name} leaves the range [{lo}, {hi}]")
            object.__setattr__(self, name, axis)

    def nodes(self) -> Iterable[tuple[tuple[int, int, int], tuple[float, float, float]]]:
        for idx in product(range(len(self.v_ref)), range(len(self.theta)), range(len(self.v_w))):
            yield idx, (self.v_ref[idx[0]], self.theta[idx[1]], self.v_w[idx[2]])


def node_scenarios(grid: GridSpec, duration: float = 20.0, step_time: float = 1.0) -> list:
    """Step to each node's set-point under its constant slope and wind."""
    return [
        (idx, step_scenario(v, th, w, step_time=step_time, duration=duration, label="node"))
        for idx, (v, th, w) in grid.nodes()
    ]


def build_gain_table(
    cfg: GaConfig,
    grid: GridSpec,
    params: VehicleParams,
    ts: float = 0.01,
    duration: float = 20.0,
    step_time: float = 1.0,
    map_fn=map,
) -> GainTable:
    """Tune one triplet per grid node on a step to that node's set-point
    under its constant slope and wind.

    Node ``n`` draws from random stream ``(seed, n, generation)``, so its
    result does not depend on the rest of the grid.  With the default
    ``map_fn`` all node GAs advance together and share one batched
    simulation per generation.  Nodes whose optimization raises are left
    as NaN and listed in ``table.failures``.
    """
    shape = (len(grid.v_ref), len(grid.theta), len(grid.v_w))
    cells = np.full((*shape, 3), np.nan)
    nodes = node_scenarios(grid, duration, step_time)
    results: dict[tuple[int, int, int], OptimizeResult] = {}
    if map_fn is map:
        try:
            jobs = [(sc, (n,)) for n, (_, sc) in enumerate(nodes)]
            results = {idx: r for (idx, _), r in zip(nodes, optimize_many(cfg, jobs, params, ts))}
        except Exception as exc:  # isolate the offending node below
            log.warning("batched grid tuning failed (%s); retrying node by node", exc)
    failures = []
    for n, (idx, sc) in enumerate(nodes):
        if idx not in results:
            try:
                evaluator = scenario_evaluator(sc, params, ts, cfg.fitness_cap)
                results[idx] = optimize(cfg, evaluator, map_fn, stream=(n,))
            except Exception as exc:  # recorded, the rest of the grid still runs
                log.error("node %s (%s) failed: %s", idx, sc.label, exc)
                failures.append(idx)
                continue
        cells[idx] = results[idx].best.as_array()
        log.info("node %s -> %s", idx, results[idx].best)
    return GainTable(grid.v_ref, grid.theta, grid.v_w, cells, failures)


def optimize_many(
    cfg: GaConfig, jobs: list[tuple[Scenario, tuple[int, ...]]], params: VehicleParams, ts: float
) -> list[OptimizeResult]:
    """Independent GA runs, one per ``(scenario, stream)`` job, advanced in
    lockstep so each generation is one batched simulation.

    Every result equals ``optimize(cfg, scenario_evaluator(sc, ...),
    stream=stream)``.  All scenarios must share one duration.
    """
    runs = [ga_steps(cfg, stream) for _, stream in jobs]
    results: list[OptimizeResult | None] = [None] * len(runs)
    live = set(range(len(runs)))
    while live:
        batch = []  # (job index, chromosome)
        for n in sorted(live):
            try:
                batch.extend((n, c) for c in next(runs[n]))
            except StopIteration as stop:
                results[n] = stop.value
                live.discard(n)
        if not batch:
            continue
        mse = batch_mse([c.gains for _, c in batch], [jobs[n][0] for n, _ in batch], params, ts)
        for (_, c), m in zip(batch, mse):
            c.fitness = 0.0 if not math.isfinite(m) else fitness_from_mse(float(m), cfg.fitness_cap)
    return results


# ---------------------------------------------------------------- CSV I/O


def write_history(history, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_HEADER)
        for gen, best, mean in history:
            writer.writerow([gen, repr(float(best)), repr(float(mean))])


def read_history(path) -> list[tuple[int, float, float]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != HISTORY_HEADER:
            raise ValueError("unexpected fitness history header")
        return [(int(r[0]), float(r[1]), float(r[2])) for r in reader if r]


def write_gains(g: Gains, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GAINS_HEADER)
        writer.writerow([repr(float(x)) for x in g.as_array()])


def read_gains(path) -> Gains:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != GAINS_HEADER:
            raise ValueError("unexpected gains header")
        row = next(reader)
    return Gains.from_array([float(x) for x in row])
