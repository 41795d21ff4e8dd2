import math

import pytest
from hypothesis import given, settings, strategies as st

from layerga.evaluation import (
    AccuracyTable,
    AccuracyValidationError,
    CachingEvaluator,
    EvaluationFailed,
    EvaluationResult,
    Evaluator,
    EvaluatorSpecError,
    FitnessParams,
    MissingEntryError,
    SyntheticEvaluator,
    SyntheticLandscape,
    TableEvaluator,
    fitness,
    make_evaluator,
    synthetic_accuracy,
    table_accuracy,
)
from layerga.genome import Window

from conftest import FIXTURE_TABLE_ROWS


class CountingEvaluator(Evaluator):
    """Synthetic inner that counts real evaluations."""

    def __init__(self, landscape=SyntheticLandscape.flat()):
        self.inner = SyntheticEvaluator(landscape)
        self.calls = 0

    def evaluate(self, window):
        self.calls += 1
        return self.inner.evaluate(window)


class FlakyEvaluator(Evaluator):
    """Fails the first call for each window, then succeeds."""

    def __init__(self):
        self.seen = set()
        self.calls = 0

    def evaluate(self, window):
        self.calls += 1
        key = (window.l_start, window.l_end)
        if key not in self.seen:
            self.seen.add(key)
            raise EvaluationFailed("first attempt fails", window)
        return 0.25


def test_fitness_params_reject_negative_gamma():
    with pytest.raises(ValueError):
        FitnessParams(gamma=-0.1)


def test_fitness_table_one_row():
    assert abs(fitness(0.92, Window(131, 133), FitnessParams()) - 0.91) < 1e-12


def test_fitness_zero_span_pays_no_penalty():
    assert fitness(0.5, Window(10, 10), FitnessParams()) == 0.5


def test_fitness_widest_window_goes_negative():
    assert abs(fitness(0.47, Window(0, 156), FitnessParams()) - (-0.31)) < 1e-12


@given(st.integers(0, 156), st.integers(0, 156), st.floats(0, 1))
def test_fitness_decreases_in_span_with_slope_gamma(a, b, accuracy):
    params = FitnessParams()
    window = Window(min(a, b), max(a, b))
    value = fitness(accuracy, window, params)
    assert abs((accuracy - value) - params.gamma * window.span) < 1e-12


def test_fitness_rejects_out_of_range_accuracy():
    with pytest.raises(AccuracyValidationError):
        fitness(1.2, Window(0, 0), FitnessParams())


def test_evaluation_result_measure_is_consistent_with_fitness():
    params = FitnessParams()
    result = EvaluationResult.measure(Window(131, 133), 0.92, params)
    assert result.fitness == fitness(0.92, Window(131, 133), params)
    with pytest.raises(AccuracyValidationError):
        EvaluationResult.measure(Window(0, 0), -0.1, params)


def test_landscape_validation():
    with pytest.raises(ValueError):
        SyntheticLandscape(base=0.6, amplitudes=(0.5,))
    with pytest.raises(ValueError):
        SyntheticLandscape(sigma=0.0)
    with pytest.raises(ValueError):
        SyntheticLandscape(kind="weird")
    with pytest.raises(ValueError):
        SyntheticLandscape(centers=((1, 2), (3, 4)), amplitudes=(0.4,))


def test_synthetic_peak_value():
    land = SyntheticLandscape.unimodal()
    assert abs(synthetic_accuracy(Window(129, 151), land) - 0.97) < 1e-12


def test_synthetic_flat_landscape():
    land = SyntheticLandscape.unimodal(amplitude=0.0)
    assert synthetic_accuracy(Window(129, 151), land) == 0.5


def test_synthetic_far_window_decays_to_base():
    land = SyntheticLandscape.unimodal()
    expected = 0.5 + 0.47 * math.exp(-(129**2 + 5**2) / 200.0)
    value = synthetic_accuracy(Window(0, 156), land)
    assert value == expected
    assert abs(value - 0.5) < 1e-12


@given(st.integers(-10, 10), st.integers(-10, 10))
def test_synthetic_symmetry_through_center(d1, d2):
    land = SyntheticLandscape.unimodal(center=(60.0, 100.0))
    plus = Window(60 + d1, 100 + d2)
    minus = Window(60 - d1, 100 - d2)
    assert synthetic_accuracy(plus, land) == synthetic_accuracy(minus, land)


def test_table_from_csv_is_bit_exact(table_csv):
    table = AccuracyTable.from_csv(table_csv)
    for l_start, l_end, accuracy in FIXTURE_TABLE_ROWS:
        assert table_accuracy(Window(l_start, l_end), table) == accuracy


def test_table_lookup_example(table_csv):
    table = AccuracyTable.from_csv(table_csv)
    assert table_accuracy(Window(131, 133), table) == 0.92


def test_table_missing_entry_is_an_error():
    with pytest.raises(MissingEntryError, match=r"\(1, 2\)"):
        table_accuracy(Window(1, 2), AccuracyTable())


def test_table_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("start,end,acc\n1,2,0.5\n")
    with pytest.raises(ValueError, match="header"):
        AccuracyTable.from_csv(str(path))


def test_table_rejects_bad_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("l_start,l_end,accuracy\n1,2,high\n")
    with pytest.raises(ValueError, match="line 2"):
        AccuracyTable.from_csv(str(path))
    path.write_text("l_start,l_end,accuracy\n1,2,1.5\n")
    with pytest.raises(ValueError, match="outside"):
        AccuracyTable.from_csv(str(path))


def test_cache_memoizes_repeated_window():
    counting = CountingEvaluator()
    cached = CachingEvaluator(counting)
    first = cached.evaluate(Window(129, 151))
    second = cached.evaluate(Window(129, 151))
    assert first == second
    assert counting.calls == 1
    assert cached.hits == 1 and cached.misses == 1


def test_cache_distinct_windows_both_evaluated():
    counting = CountingEvaluator()
    cached = CachingEvaluator(counting)
    cached.evaluate(Window(129, 151))
    cached.evaluate(Window(130, 151))
    assert counting.calls == 2


def test_cache_batch_counts_thirty_inner_evaluations():
    counting = CountingEvaluator()
    cached = CachingEvaluator(counting)
    seen = [Window(s, s + 1) for s in range(20)]
    cached.evaluate_many(seen)
    assert counting.calls == 20
    fresh = [Window(s, s + 1) for s in range(20, 50)]
    outcomes = cached.evaluate_many(seen + fresh)
    assert len(outcomes) == 50
    assert counting.calls == 50  # exactly 30 new inner evaluations
    assert cached.hits == 20 and cached.misses == 50


def test_cache_requires_deterministic_inner():
    nondet = SyntheticEvaluator(SyntheticLandscape.flat())
    nondet.deterministic = False
    with pytest.raises(ValueError):
        CachingEvaluator(nondet)


def test_cache_does_not_cache_errors():
    flaky = FlakyEvaluator()
    cached = CachingEvaluator(flaky)
    outcome = cached.evaluate_many([Window(3, 4)])[0]
    assert isinstance(outcome, EvaluationFailed)
    assert cached.evaluate(Window(3, 4)) == 0.25
    assert flaky.calls == 2


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30))
def test_cache_is_observationally_equivalent_to_inner(calls):
    landscape = SyntheticLandscape.unimodal(center=(3.0, 3.0), sigma=2.0)
    plain = SyntheticEvaluator(landscape)
    cached = CachingEvaluator(SyntheticEvaluator(landscape))
    for a, b in calls:
        window = Window(min(a, b), max(a, b))
        assert cached.evaluate(window) == plain.evaluate(window)


def test_evaluate_many_parallel_matches_serial():
    evaluator = SyntheticEvaluator(SyntheticLandscape.unimodal())
    windows = [Window(s, s + 10) for s in range(0, 140, 7)]
    assert evaluator.evaluate_many(windows, jobs=4) == evaluator.evaluate_many(windows)


def test_make_evaluator_synthetic_presets():
    assert make_evaluator("synthetic:unimodal").evaluate(Window(129, 151)) == pytest.approx(0.97, abs=1e-12)
    assert make_evaluator("synthetic:flat").evaluate(Window(3, 7)) == 0.5
    bimodal = make_evaluator("synthetic:bimodal")
    assert bimodal.evaluate(Window(40, 70)) > 0.8


def test_make_evaluator_table(table_csv):
    evaluator = make_evaluator(f"table:{table_csv}")
    assert evaluator.evaluate(Window(147, 151)) == 0.95


def test_make_evaluator_rejects_bad_selectors():
    with pytest.raises(EvaluatorSpecError):
        make_evaluator("synthetic")
    with pytest.raises(EvaluatorSpecError):
        make_evaluator("synthetic:hilly")
    with pytest.raises(EvaluatorSpecError):
        make_evaluator("magic:thing")


def test_make_evaluator_missing_table_file():
    with pytest.raises(FileNotFoundError):
        make_evaluator("table:does-not-exist.csv")
