"""Brute-force enumeration of every window, the ground truth for GA runs.

Restricting the trainable block to one contiguous window collapses the
per-layer trainability space to the windows with 0 <= l_start <= l_end <=
l_max, which is small enough to enumerate exhaustively and compare the GA
against.  Lookup tables are enumerated over their own (measured) domain
instead, since windows outside it have no ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

from layerga.evaluation import (
    AccuracyTable,
    EvaluationFailed,
    EvaluationResult,
    Evaluator,
    EvaluatorFailure,
    FitnessParams,
)
from layerga.genome import Window


@dataclass
class OracleReport:
    best: EvaluationResult
    total_configurations: int
    table: list[EvaluationResult] | None = None

    @property
    def best_window(self) -> Window:
        return self.best.window

    @property
    def best_accuracy(self) -> float:
        return self.best.accuracy

    @property
    def best_fitness(self) -> float:
        return self.best.fitness

    def to_record(self) -> dict:
        return {
            "best_l_start": self.best.window.l_start,
            "best_l_end": self.best.window.l_end,
            "best_accuracy": self.best.accuracy,
            "best_fitness": self.best.fitness,
            "total_configurations": self.total_configurations,
        }


def space_size(l_max: int) -> int:
    """Number of windows with 0 <= l_start <= l_end <= l_max."""
    if l_max < 0:
        raise ValueError("l_max must be >= 0")
    return (l_max + 1) * (l_max + 2) // 2


def all_windows(l_max: int) -> list[Window]:
    """Every window in lexicographic (l_start, l_end) order."""
    return [Window(s, e) for s in range(l_max + 1) for e in range(s, l_max + 1)]


def _best_of(results: list[EvaluationResult]) -> EvaluationResult:
    best = results[0]
    for result in results[1:]:
        # Strict > keeps the first (lexicographically smallest) argmax.
        if result.fitness > best.fitness:
            best = result
    return best


def enumerate_best(
    evaluator: Evaluator,
    gamma: float,
    l_max: int,
    full_table: bool = False,
    jobs: int = 1,
) -> OracleReport:
    """Evaluate every window once and return the fitness argmax.

    Ties break toward the lexicographically smallest (l_start, l_end), so
    repeated runs against a deterministic evaluator are identical.
    """
    if not evaluator.deterministic:
        raise ValueError("enumeration requires a deterministic evaluator")
    params = FitnessParams(gamma=gamma)
    windows = all_windows(l_max)
    outcomes = evaluator.evaluate_many(windows, jobs=jobs)

    results: list[EvaluationResult] = []
    for window, outcome in zip(windows, outcomes):
        if isinstance(outcome, EvaluationFailed):
            raise EvaluatorFailure(
                f"evaluation failed for window ({window.l_start}, {window.l_end}): {outcome}"
            )
        results.append(EvaluationResult.measure(window, outcome, params))

    return OracleReport(
        best=_best_of(results),
        total_configurations=len(results),
        table=results if full_table else None,
    )


def enumerate_table(
    table: AccuracyTable, gamma: float, full_table: bool = False
) -> OracleReport:
    """Fitness argmax over exactly the windows a lookup table has measured."""
    if not table.entries:
        raise EvaluatorFailure("accuracy table is empty; nothing to enumerate")
    params = FitnessParams(gamma=gamma)
    results = [
        EvaluationResult.measure(Window(s, e), accuracy, params)
        for (s, e), accuracy in sorted(table.entries.items())
    ]
    return OracleReport(
        best=_best_of(results),
        total_configurations=len(results),
        table=results if full_table else None,
    )


def format_table_csv(report: OracleReport) -> str:
    if report.table is None:
        raise ValueError("oracle report was built without the full table")
    lines = ["l_start,l_end,accuracy,fitness"]
    for result in report.table:
        lines.append(
            f"{result.window.l_start},{result.window.l_end},"
            f"{result.accuracy!r},{result.fitness!r}"
        )
    return "\n".join(lines) + "\n"
