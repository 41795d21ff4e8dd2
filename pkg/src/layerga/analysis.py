"""Per-layer gradient characterization from dump files.

Input is a CSV of node-level gradient observations (``layer,category,value``,
one row per node per sample, at whatever granularity the producer chose).
The analyzer groups rows by (layer, category) and reports max, mean and sum
per group, ranks layers by aggregate magnitude, and flags layers where two
categories accumulate gradient sums of strictly opposite sign -- the
candidate classification cue.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

GRADIENTS_HEADER = ("layer", "category", "value")
SUMMARY_STATS = ("max", "mean", "sum")


class GradientParseError(ValueError):
    """Gradient dump file is malformed; message names the offending line."""


class EmptyInputError(ValueError):
    """No gradient records to analyze."""


class UnknownCategoryError(ValueError):
    """Requested category label does not appear in the data."""


@dataclass(frozen=True)
class GradientRecord:
    layer: int
    category: str
    value: float


@dataclass(frozen=True)
class LayerSummary:
    layer: int
    category: str
    max_value: float
    mean_value: float
    sum_value: float
    count: int

    def stat(self, name: str) -> float:
        if name == "max":
            return self.max_value
        if name == "mean":
            return self.mean_value
        if name == "sum":
            return self.sum_value
        raise ValueError(f"unknown stat {name!r}; choose from {SUMMARY_STATS}")


@dataclass(frozen=True)
class OppositionFinding:
    layer: int
    sum_a: float
    sum_b: float
    flagged: bool

    def to_record(self) -> dict:
        return {
            "layer": self.layer,
            "sum_a": self.sum_a,
            "sum_b": self.sum_b,
            "flagged": self.flagged,
        }


def load_gradients(path: str) -> list[GradientRecord]:
    """Parse a gradient dump, rejecting malformed rows by line number."""
    records: list[GradientRecord] = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != GRADIENTS_HEADER:
            raise GradientParseError(
                f"{path}: line 1: expected header {','.join(GRADIENTS_HEADER)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise GradientParseError(
                    f"{path}: line {lineno}: expected 3 columns, got {len(row)}"
                )
            try:
                layer = int(row[0])
            except ValueError as exc:
                raise GradientParseError(
                    f"{path}: line {lineno}: layer {row[0]!r} is not an integer"
                ) from exc
            if layer < 0:
                raise GradientParseError(f"{path}: line {lineno}: layer {layer} is negative")
            category = row[1].strip()
            if not category:
                raise GradientParseError(f"{path}: line {lineno}: empty category")
            try:
                value = float(row[2])
            except ValueError as exc:
                raise GradientParseError(
                    f"{path}: line {lineno}: value {row[2]!r} is not numeric"
                ) from exc
            records.append(GradientRecord(layer, category, value))
    return records


def summarize(records: Iterable[GradientRecord]) -> list[LayerSummary]:
    """Exact grouped aggregates per (layer, category), sorted by that key."""
    groups: dict[tuple[int, str], list[float]] = {}
    for record in records:
        groups.setdefault((record.layer, record.category), []).append(record.value)
    if not groups:
        raise EmptyInputError("no gradient records to summarize")
    summaries = []
    for (layer, category), values in sorted(groups.items()):
        summaries.append(
            LayerSummary(
                layer=layer,
                category=category,
                max_value=max(values),
                mean_value=sum(values) / len(values),
                sum_value=sum(values),
                count=len(values),
            )
        )
    return summaries


def _sums_by_layer(
    summaries: Sequence[LayerSummary], category: str
) -> dict[int, float]:
    return {s.layer: s.sum_value for s in summaries if s.category == category}


def sign_opposition(
    summaries: Sequence[LayerSummary],
    category_a: str,
    category_b: str,
    threshold: float = 0.0,
) -> tuple[list[OppositionFinding], list[int]]:
    """Flag layers whose two category sums have strictly opposite signs.

    Both magnitudes must also reach ``threshold``.  Returns the findings for
    comparable layers plus the layers skipped for missing a category.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    available = sorted({s.category for s in summaries})
    for label in (category_a, category_b):
        if label not in available:
            raise UnknownCategoryError(
                f"category {label!r} not in data; available: {available}"
            )
    sums_a = _sums_by_layer(summaries, category_a)
    sums_b = _sums_by_layer(summaries, category_b)
    layers = sorted({s.layer for s in summaries})

    findings: list[OppositionFinding] = []
    skipped: list[int] = []
    for layer in layers:
        if layer not in sums_a or layer not in sums_b:
            skipped.append(layer)
            continue
        sum_a, sum_b = sums_a[layer], sums_b[layer]
        flagged = (sum_a * sum_b < 0) and min(abs(sum_a), abs(sum_b)) >= threshold
        findings.append(OppositionFinding(layer, sum_a, sum_b, flagged))
    return findings, skipped


def top_magnitude_layers(
    summaries: Sequence[LayerSummary], stat: str, k: int
) -> list[int]:
    """Rank layers by the largest absolute ``stat`` over their categories.

    Descending magnitude, ties toward the smaller layer index; asking for
    more layers than exist returns them all.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    magnitude: dict[int, float] = {}
    for summary in summaries:
        value = abs(summary.stat(stat))
        layer = summary.layer
        if layer not in magnitude or value > magnitude[layer]:
            magnitude[layer] = value
    ranked = sorted(magnitude.items(), key=lambda item: (-item[1], item[0]))
    return [layer for layer, _ in ranked[:k]]


def format_summary_csv(summaries: Sequence[LayerSummary]) -> str:
    lines = ["layer,category,max,mean,sum,count"]
    for s in summaries:
        lines.append(
            f"{s.layer},{s.category},{s.max_value!r},{s.mean_value!r},{s.sum_value!r},{s.count}"
        )
    return "\n".join(lines) + "\n"


def format_findings_jsonl(findings: Sequence[OppositionFinding]) -> str:
    return "\n".join(json.dumps(f.to_record()) for f in findings) + "\n"
