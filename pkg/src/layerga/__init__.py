"""Genetic search over trainable-layer windows of a transfer network.

The costly accuracy measurement (actually fine-tuning a network) is kept
behind a pluggable evaluator interface; synthetic landscapes, lookup tables
and external worker processes all satisfy it.
"""

from layerga.genome import BitGenome, GenomeLayout, MalformedGenomeError, Window
from layerga.evaluation import (
    AccuracyTable,
    CachingEvaluator,
    EvaluationResult,
    Evaluator,
    ExternalEvaluator,
    FitnessParams,
    SyntheticEvaluator,
    SyntheticLandscape,
    TableEvaluator,
    fitness,
    make_evaluator,
)
from layerga.engine import GenerationStats, Individual, RunConfig, RunReport, run
from layerga.oracle import OracleReport, enumerate_best, enumerate_table, space_size

__version__ = "0.1.0"

__all__ = [
    "AccuracyTable",
    "BitGenome",
    "CachingEvaluator",
    "EvaluationResult",
    "Evaluator",
    "ExternalEvaluator",
    "FitnessParams",
    "GenerationStats",
    "GenomeLayout",
    "Individual",
    "MalformedGenomeError",
    "OracleReport",
    "RunConfig",
    "RunReport",
    "SyntheticEvaluator",
    "SyntheticLandscape",
    "TableEvaluator",
    "Window",
    "enumerate_best",
    "enumerate_table",
    "fitness",
    "make_evaluator",
    "run",
    "space_size",
]
