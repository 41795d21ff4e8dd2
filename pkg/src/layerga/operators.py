"""Genetic operators: bit-flip mutation, block crossover, roulette selection.

Crossover exchanges whole parameter blocks (the 8-bit l_start and l_end
fields) rather than arbitrary bit ranges, so a useful bound survives
recombination intact.  Selection follows the fitness-proportional rule
``P_j = F_j / sum(F)``; when any fitness is non-positive the whole vector is
shifted by ``-min(F) + SHIFT_EPSILON`` first, which keeps the ordering while
making every probability valid.

All operators are pure given their random generator; callers that need
reproducible parallel runs hand each operator its own stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, TypeVar

import numpy as np

from layerga.genome import BitGenome, GenomeLayout, MalformedGenomeError, validate_genome

T = TypeVar("T")

# Added to a shifted fitness vector so the worst individual keeps a tiny,
# non-zero survival probability.
SHIFT_EPSILON = 1e-6


class EmptyPopulationError(ValueError):
    """Selection was asked for zero survivors."""


@dataclass(frozen=True)
class OperatorParams:
    """Per-bit mutation probability, per-block exchange probability, elitism."""

    q_m: float = 0.05
    q_c: float = 0.2
    elitism: bool = False

    def __post_init__(self) -> None:
        for name in ("q_m", "q_c"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


def mutate(genome: BitGenome, q_m: float, rng: np.random.Generator) -> BitGenome:
    """Flip every bit independently with probability ``q_m``."""
    flips = rng.random(len(genome)) < q_m
    if not flips.any():
        return genome
    return "".join(
        ("1" if c == "0" else "0") if flip else c for c, flip in zip(genome, flips)
    )


def exchange_mask(n_blocks: int, q_c: float, rng: np.random.Generator) -> tuple[bool, ...]:
    """Decide independently for each block whether the pair exchanges it."""
    return tuple(bool(x) for x in rng.random(n_blocks) < q_c)


def exchange_blocks(
    a: BitGenome, b: BitGenome, mask: Sequence[bool], layout: GenomeLayout
) -> tuple[BitGenome, BitGenome]:
    """Swap the masked parameter blocks between two genomes."""
    validate_genome(a, layout)
    validate_genome(b, layout)
    k = layout.bits_per_param
    child_a: list[str] = []
    child_b: list[str] = []
    for i, swapped in enumerate(mask):
        block_a, block_b = a[i * k : (i + 1) * k], b[i * k : (i + 1) * k]
        if swapped:
            block_a, block_b = block_b, block_a
        child_a.append(block_a)
        child_b.append(block_b)
    return "".join(child_a), "".join(child_b)


def crossover(
    a: BitGenome, b: BitGenome, q_c: float, rng: np.random.Generator, layout: GenomeLayout
) -> tuple[BitGenome, BitGenome]:
    """Exchange each corresponding parameter block with probability ``q_c``."""
    if len(a) != len(b):
        raise MalformedGenomeError(
            f"crossover requires equal-length genomes, got {len(a)} and {len(b)}"
        )
    n_blocks = layout.total_bits // layout.bits_per_param
    return exchange_blocks(a, b, exchange_mask(n_blocks, q_c, rng), layout)


def pair_population(
    size: int, rng: np.random.Generator
) -> tuple[list[tuple[int, int]], int | None]:
    """Shuffle indices 0..size-1 and pair adjacent ones.

    Returns the disjoint index pairs plus the leftover index when ``size``
    is odd (that individual passes through crossover untouched).
    """
    if size < 1:
        raise EmptyPopulationError("cannot pair an empty population")
    order = [int(i) for i in rng.permutation(size)]
    pairs = [(order[i], order[i + 1]) for i in range(0, size - 1, 2)]
    leftover = order[-1] if size % 2 else None
    return pairs, leftover


def fitness_to_weights(fitness: Sequence[float]) -> np.ndarray:
    """Normalize fitness values into survival probabilities.

    Strictly positive vectors divide by their sum directly; otherwise every
    value is shifted by ``-min(fitness) + SHIFT_EPSILON`` first.
    """
    values = np.asarray(fitness, dtype=float)
    if values.size == 0:
        raise EmptyPopulationError("cannot derive weights from an empty fitness vector")
    low = values.min()
    if low <= 0.0:
        values = values + (-low + SHIFT_EPSILON)
    total = values.sum()
    if total <= 0.0:
        raise RuntimeError("selection weights collapsed to zero after shift")
    return values / total


def roulette_indices(
    weights: np.ndarray, m: int, rng: np.random.Generator
) -> list[int]:
    """Draw ``m`` population indices with replacement according to ``weights``."""
    if m < 1:
        raise EmptyPopulationError("selection must produce at least one survivor")
    draws = rng.choice(len(weights), size=m, replace=True, p=weights)
    return [int(i) for i in draws]


def select(
    pop: Sequence[T],
    weights: np.ndarray,
    m: int,
    rng: np.random.Generator,
    elitism: bool = False,
) -> list[T]:
    """Roulette-select ``m`` individuals; elitism forces one copy of the best."""
    if len(pop) != len(weights):
        raise ValueError("weights must align one-to-one with the population")
    chosen = roulette_indices(weights, m, rng)
    if elitism:
        chosen[0] = int(np.argmax(weights))
    return [pop[i] for i in chosen]
