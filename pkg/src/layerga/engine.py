"""Generational loop: initialize, then crossover -> mutation -> selection -> evaluation.

Two orderings are supported.  The default follows the literal procedure:
selection happens after crossover and mutation but *before* the new
individuals are measured, so roulette weights come from the fitness each
individual carries over from its lineage (an offspring inherits the fitness
of the parent that contributed its l_start block).  Setting
``evaluate_before_selection`` instead measures every variant first and
selects on fresh fitness, the conventional GA ordering.

Reproducibility contract: one random stream per purpose (init, pairing,
crossover, mutation, selection), spawned deterministically from the run
seed.  Evaluation consumes no randomness, so single-threaded and parallel
evaluation produce byte-identical reports.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from layerga.evaluation import (
    CachingEvaluator,
    EvaluationFailed,
    Evaluator,
    EvaluatorError,
    FitnessParams,
    fitness,
)
from layerga.genome import BitGenome, GenomeLayout, Window, decode, random_genome
from layerga.operators import (
    OperatorParams,
    exchange_blocks,
    exchange_mask,
    fitness_to_weights,
    mutate,
    pair_population,
    roulette_indices,
)

CHECKPOINT_FORMAT = "layerga-checkpoint/1"
_STREAMS = ("init", "pairing", "crossover", "mutation", "selection")

TERMINATION_MAX_GENERATIONS = "max-generations"
TERMINATION_STAGNATION = "stagnation"


@dataclass
class RunConfig:
    population_size: int = 50
    max_generations: int = 15
    q_m: float = 0.05
    q_c: float = 0.2
    gamma: float = 0.005
    l_max: int = 156
    seed: int = 0
    elitism: bool = False
    stagnation_window: int | None = None
    evaluate_before_selection: bool = False
    jobs: int = 1
    cache: bool = True
    evaluator: str | None = None
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        self.operator_params  # validates q_m / q_c ranges
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.stagnation_window is not None and self.stagnation_window < 1:
            raise ValueError("stagnation_window must be >= 1 when set")

    @property
    def layout(self) -> GenomeLayout:
        return GenomeLayout(l_max=self.l_max)

    @property
    def operator_params(self) -> OperatorParams:
        return OperatorParams(q_m=self.q_m, q_c=self.q_c, elitism=self.elitism)

    @property
    def fitness_params(self) -> FitnessParams:
        return FitnessParams(gamma=self.gamma)


@dataclass(frozen=True)
class Individual:
    genome: BitGenome
    window: Window
    accuracy: float
    fitness: float

    def to_record(self) -> dict:
        return {
            "genome": self.genome,
            "l_start": self.window.l_start,
            "l_end": self.window.l_end,
            "accuracy": self.accuracy,
            "fitness": self.fitness,
        }


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    max_acc: float
    min_acc: float
    avg_acc: float
    best_l_start: int
    best_l_end: int
    best_fitness: float

    def to_record(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunReport:
    config: RunConfig
    generations: list[GenerationStats]
    populations: list[list[Individual]]
    best: Individual | None
    total_evaluations: int
    cache_hits: int
    failed_evaluations: int
    termination: str
    complete: bool = True

    def to_json(self) -> str:
        payload = {
            "config": dataclasses.asdict(self.config),
            "generations": [s.to_record() for s in self.generations],
            "best": self.best.to_record() if self.best else None,
            "total_evaluations": self.total_evaluations,
            "cache_hits": self.cache_hits,
            "failed_evaluations": self.failed_evaluations,
            "termination": self.termination,
            "complete": self.complete,
        }
        return json.dumps(payload, indent=2) + "\n"


class RunAborted(RuntimeError):
    """The evaluator backend failed; ``partial_report`` holds what completed."""

    def __init__(self, cause: EvaluatorError, partial_report: RunReport):
        super().__init__(str(cause))
        self.cause = cause
        self.partial_report = partial_report


def compute_stats(generation: int, population: Sequence[Individual]) -> GenerationStats:
    """Per-generation accuracy spread plus the window of the fittest individual."""
    accuracies = [ind.accuracy for ind in population]
    best = max(population, key=lambda ind: ind.fitness)
    return GenerationStats(
        generation=generation,
        max_acc=max(accuracies),
        min_acc=min(accuracies),
        avg_acc=sum(accuracies) / len(accuracies),
        best_l_start=best.window.l_start,
        best_l_end=best.window.l_end,
        best_fitness=best.fitness,
    )


def check_stop(history: Sequence[GenerationStats], config: RunConfig) -> str | None:
    """Return a termination reason once the run should stop, else None."""
    if not history:
        return None
    if len(history) >= config.max_generations:
        return TERMINATION_MAX_GENERATIONS
    if config.stagnation_window is not None:
        best = -math.inf
        last_improvement = 0
        for index, stats in enumerate(history, start=1):
            if stats.best_fitness > best:
                best = stats.best_fitness
                last_improvement = index
        if len(history) - last_improvement >= config.stagnation_window:
            return TERMINATION_STAGNATION
    return None


class _Rngs:
    """One generator per purpose, all spawned from the run seed."""

    def __init__(self, generators: dict[str, np.random.Generator]):
        self._generators = generators

    @classmethod
    def from_seed(cls, seed: int) -> "_Rngs":
        children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
        return cls(
            {
                name: np.random.Generator(np.random.PCG64(child))
                for name, child in zip(_STREAMS, children)
            }
        )

    def __getattr__(self, name: str) -> np.random.Generator:
        try:
            return self._generators[name]
        except KeyError as exc:
            raise AttributeError(name) from exc

    def capture(self) -> dict[str, dict]:
        return {name: gen.bit_generator.state for name, gen in self._generators.items()}

    @classmethod
    def restore(cls, states: dict[str, dict]) -> "_Rngs":
        generators = {}
        for name in _STREAMS:
            bit_gen = np.random.PCG64()
            bit_gen.state = states[name]
            generators[name] = np.random.Generator(bit_gen)
        return cls(generators)


@dataclass
class _RunState:
    config: RunConfig
    evaluator: Evaluator
    rngs: _Rngs
    population: list[Individual] = field(default_factory=list)
    history: list[GenerationStats] = field(default_factory=list)
    populations: list[list[Individual]] = field(default_factory=list)
    best: Individual | None = None
    evaluations: int = 0
    failed: int = 0

    @property
    def cache(self) -> CachingEvaluator | None:
        return self.evaluator if isinstance(self.evaluator, CachingEvaluator) else None


def _wrap_evaluator(config: RunConfig, evaluator: Evaluator) -> Evaluator:
    if config.cache and evaluator.deterministic and not isinstance(evaluator, CachingEvaluator):
        return CachingEvaluator(evaluator)
    return evaluator


def _evaluate_genomes(state: _RunState, genomes: Sequence[BitGenome]) -> list[Individual]:
    config = state.config
    layout = config.layout
    params = config.fitness_params
    windows = [decode(g, layout) for g in genomes]
    outcomes = state.evaluator.evaluate_many(windows, jobs=config.jobs)

    # Per-request failures get one retry; survivors score 0.0 so the
    # population size stays fixed without inventing an accuracy.
    failed_at = [i for i, out in enumerate(outcomes) if isinstance(out, EvaluationFailed)]
    if failed_at:
        retried = state.evaluator.evaluate_many(
            [windows[i] for i in failed_at], jobs=config.jobs
        )
        for i, out in zip(failed_at, retried):
            outcomes[i] = out

    if state.cache is None:
        state.evaluations += len(windows) + len(failed_at)

    individuals = []
    for genome, window, out in zip(genomes, windows, outcomes):
        if isinstance(out, EvaluationFailed):
            state.failed += 1
            accuracy = 0.0
        else:
            accuracy = out
        individuals.append(
            Individual(genome, window, accuracy, fitness(accuracy, window, params))
        )
    # Every measured individual competes for best-of-run, including variants
    # that evaluate_before_selection measures but selection then drops.
    for ind in individuals:
        if state.best is None or ind.fitness > state.best.fitness:
            state.best = ind
    return individuals


def _best_of(population: Sequence[Individual]) -> Individual:
    return max(population, key=lambda ind: ind.fitness)


def _vary(state: _RunState) -> list[tuple[BitGenome, float]]:
    """Crossover then mutation; each variant keeps its lineage fitness."""
    config = state.config
    layout = config.layout
    pop = state.population
    pairs, leftover = pair_population(len(pop), state.rngs.pairing)
    n_blocks = layout.total_bits // layout.bits_per_param

    candidates: list[tuple[BitGenome, float]] = []
    for i, j in pairs:
        a, b = pop[i], pop[j]
        mask = exchange_mask(n_blocks, config.q_c, state.rngs.crossover)
        child_a, child_b = exchange_blocks(a.genome, b.genome, mask, layout)
        # The parent contributing the first (l_start) block lends its fitness.
        fitness_a = (b if mask[0] else a).fitness
        fitness_b = (a if mask[0] else b).fitness
        candidates.append((child_a, fitness_a))
        candidates.append((child_b, fitness_b))
    if leftover is not None:
        candidates.append((pop[leftover].genome, pop[leftover].fitness))

    return [
        (mutate(genome, config.q_m, state.rngs.mutation), carried)
        for genome, carried in candidates
    ]


def step_generation(state: _RunState) -> tuple[list[Individual], GenerationStats]:
    """Produce and evaluate the next generation from an evaluated population."""
    config = state.config
    m = config.population_size
    previous_best = _best_of(state.population)
    candidates = _vary(state)

    if config.evaluate_before_selection:
        evaluated = _evaluate_genomes(state, [genome for genome, _ in candidates])
        weights = fitness_to_weights([ind.fitness for ind in evaluated])
        chosen = roulette_indices(weights, m, state.rngs.selection)
        population = [evaluated[i] for i in chosen]
        if config.elitism:
            population[0] = previous_best
    else:
        weights = fitness_to_weights([carried for _, carried in candidates])
        chosen = roulette_indices(weights, m, state.rngs.selection)
        genomes = [candidates[i][0] for i in chosen]
        if config.elitism:
            genomes[0] = previous_best.genome
        population = _evaluate_genomes(state, genomes)

    stats = compute_stats(len(state.history) + 1, population)
    return population, stats


def _record_generation(state: _RunState, population: list[Individual], stats: GenerationStats) -> None:
    state.population = population
    state.populations.append(population)
    state.history.append(stats)
    if state.config.out_dir:
        save_checkpoint(os.path.join(state.config.out_dir, "checkpoint.json"), state)


def _build_report(state: _RunState, termination: str, complete: bool) -> RunReport:
    cache = state.cache
    return RunReport(
        config=state.config,
        generations=list(state.history),
        populations=[list(p) for p in state.populations],
        best=state.best,
        total_evaluations=cache.misses if cache else state.evaluations,
        cache_hits=cache.hits if cache else 0,
        failed_evaluations=state.failed,
        termination=termination,
        complete=complete,
    )


def _run_loop(state: _RunState) -> RunReport:
    config = state.config
    try:
        if not state.history:
            genomes = [
                random_genome(state.rngs.init, config.layout)
                for _ in range(config.population_size)
            ]
            population = _evaluate_genomes(state, genomes)
            _record_generation(state, population, compute_stats(1, population))
        while True:
            reason = check_stop(state.history, config)
            if reason is not None:
                return _build_report(state, reason, complete=True)
            population, stats = step_generation(state)
            _record_generation(state, population, stats)
    except EvaluatorError as exc:
        partial = _build_report(state, f"incomplete: {exc}", complete=False)
        raise RunAborted(exc, partial) from exc


def run(config: RunConfig, evaluator: Evaluator) -> RunReport:
    """Execute a full genetic run; deterministic given seed and evaluator."""
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)
    state = _RunState(
        config=config,
        evaluator=_wrap_evaluator(config, evaluator),
        rngs=_Rngs.from_seed(config.seed),
    )
    return _run_loop(state)


# ---------------------------------------------------------------------------
# Checkpoints and resume
# ---------------------------------------------------------------------------


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(text)
    os.replace(tmp, path)


def save_checkpoint(path: str, state: _RunState) -> None:
    cache = state.cache
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": dataclasses.asdict(state.config),
        "generation": len(state.history),
        "rng_state": state.rngs.capture(),
        "population": [ind.to_record() for ind in state.population],
        "history": [s.to_record() for s in state.history],
        "populations": [[ind.to_record() for ind in pop] for pop in state.populations],
        "best": state.best.to_record() if state.best else None,
        "counters": {"evaluations": state.evaluations, "failed": state.failed},
        "cache": (
            {
                "entries": [[s, e, acc] for (s, e), acc in sorted(cache.snapshot().items())],
                "hits": cache.hits,
                "misses": cache.misses,
            }
            if cache
            else None
        ),
    }
    _atomic_write(path, json.dumps(payload) + "\n")


def _individual_from_record(record: dict) -> Individual:
    return Individual(
        genome=record["genome"],
        window=Window(record["l_start"], record["l_end"]),
        accuracy=record["accuracy"],
        fitness=record["fitness"],
    )


def load_checkpoint(path: str) -> dict:
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    return payload


def resume(
    checkpoint_path: str,
    evaluator: Evaluator,
    max_generations: int | None = None,
    out_dir: str | None = None,
    jobs: int | None = None,
) -> RunReport:
    """Continue a checkpointed run until its stopping criterion."""
    payload = load_checkpoint(checkpoint_path)
    config_fields = dict(payload["config"])
    if max_generations is not None:
        config_fields["max_generations"] = max_generations
    if out_dir is not None:
        config_fields["out_dir"] = out_dir
    if jobs is not None:
        config_fields["jobs"] = jobs
    config = RunConfig(**config_fields)
    if config.out_dir:
        os.makedirs(config.out_dir, exist_ok=True)

    state = _RunState(
        config=config,
        evaluator=_wrap_evaluator(config, evaluator),
        rngs=_Rngs.restore(payload["rng_state"]),
        population=[_individual_from_record(r) for r in payload["population"]],
        history=[GenerationStats(**r) for r in payload["history"]],
        populations=[
            [_individual_from_record(r) for r in pop] for pop in payload["populations"]
        ],
        best=_individual_from_record(payload["best"]) if payload["best"] else None,
        evaluations=payload["counters"]["evaluations"],
        failed=payload["counters"]["failed"],
    )
    cache_payload = payload.get("cache")
    if state.cache is not None and cache_payload is not None:
        state.cache.restore(
            {(s, e): acc for s, e, acc in cache_payload["entries"]},
            hits=cache_payload["hits"],
            misses=cache_payload["misses"],
        )
    return _run_loop(state)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

GENERATIONS_HEADER = "gen,max,min,avg,best_l_start,best_l_end"


def format_generations_csv(stats: Sequence[GenerationStats]) -> str:
    lines = [GENERATIONS_HEADER]
    for s in stats:
        lines.append(
            f"{s.generation},{s.max_acc:.4f},{s.min_acc:.4f},{s.avg_acc:.4f},"
            f"{s.best_l_start},{s.best_l_end}"
        )
    return "\n".join(lines) + "\n"


def write_outputs(report: RunReport, out_dir: str) -> None:
    """Emit generations.csv, population.jsonl and report.json."""
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(
        os.path.join(out_dir, "generations.csv"),
        format_generations_csv(report.generations),
    )
    lines = []
    for gen_index, population in enumerate(report.populations, start=1):
        for ind in population:
            lines.append(json.dumps({"gen": gen_index, **ind.to_record()}))
    _atomic_write(os.path.join(out_dir, "population.jsonl"), "\n".join(lines) + "\n")
    _atomic_write(os.path.join(out_dir, "report.json"), report.to_json())
