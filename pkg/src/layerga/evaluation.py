"""Accuracy evaluators and the fitness rule.

Fitness is ``accuracy - gamma * (l_end - l_start)``: measured accuracy minus
a small penalty per trainable layer.  The span deliberately excludes the
``+1`` for a single-layer window; a zero-span window pays no penalty.

Accuracy itself comes from a pluggable backend:

* :class:`SyntheticEvaluator` -- closed-form Gaussian landscapes standing in
  for real fine-tuning runs.
* :class:`TableEvaluator` -- exact lookup of previously measured accuracies.
  Missing windows are hard errors; interpolating would fabricate data on a
  landscape known to be non-monotone.
* :class:`ExternalEvaluator` -- line-delimited JSON protocol
  ``layerga-eval/1`` against a worker subprocess, so a real training job can
  plug in without touching the engine.
* :class:`CachingEvaluator` -- memoizes any deterministic backend on the
  repaired window, since distinct genomes decoding to one window are a
  single training job.

Every backend validates accuracies into [0, 1] before they reach selection.
"""

from __future__ import annotations

import csv
import json
import math
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from layerga.genome import Window

PROTOCOL_NAME = "layerga-eval/1"


class EvaluatorError(Exception):
    """Base for unrecoverable evaluator problems; aborts the run."""


class ProtocolError(EvaluatorError):
    """Worker emitted something the wire protocol does not allow."""


class EvaluatorFailure(EvaluatorError):
    """Worker/backend stopped serving (stream closed, bad exit, missing ids)."""


class AccuracyValidationError(EvaluatorError):
    """Backend produced an accuracy outside [0, 1]."""


class MissingEntryError(EvaluatorError):
    """Lookup table has no entry for the requested window."""


class EvaluationFailed(Exception):
    """One window's evaluation failed; other windows are unaffected.

    The engine retries these once and then scores the individual 0.0.
    """

    def __init__(self, message: str, window: Window | None = None):
        super().__init__(message)
        self.window = window


@dataclass(frozen=True)
class FitnessParams:
    """Weight of the trainable-layer count in the fitness rule."""

    gamma: float = 0.005

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


def fitness(accuracy: float, window: Window, params: FitnessParams) -> float:
    """Accuracy minus ``gamma`` per layer of window span."""
    if not 0.0 <= accuracy <= 1.0:
        raise AccuracyValidationError(f"accuracy {accuracy} outside [0, 1]")
    return accuracy - params.gamma * (window.l_end - window.l_start)


def _validated(accuracy: float, window: Window) -> float:
    acc = float(accuracy)
    if not (0.0 <= acc <= 1.0) or math.isnan(acc):
        raise AccuracyValidationError(
            f"accuracy {accuracy!r} for window ({window.l_start}, {window.l_end}) outside [0, 1]"
        )
    return acc


@dataclass(frozen=True)
class EvaluationResult:
    """One measured window with its derived fitness."""

    window: Window
    accuracy: float
    fitness: float

    @classmethod
    def measure(cls, window: Window, accuracy: float, params: FitnessParams) -> "EvaluationResult":
        return cls(window, accuracy, fitness(accuracy, window, params))


# ---------------------------------------------------------------------------
# Synthetic landscapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticLandscape:
    """Sum of isotropic Gaussian peaks over (l_start, l_end) space.

    The default unimodal calibration peaks at 0.97 for window (129, 151),
    the converged optimum of the reference transfer task, and decays to the
    0.5 base far from it.
    """

    kind: str = "unimodal"
    centers: tuple[tuple[float, float], ...] = ((129.0, 151.0),)
    base: float = 0.5
    amplitudes: tuple[float, ...] = (0.47,)
    sigma: float = 10.0

    def __post_init__(self) -> None:
        if self.kind not in ("unimodal", "bimodal"):
            raise ValueError(f"unknown landscape kind {self.kind!r}")
        if len(self.centers) != len(self.amplitudes):
            raise ValueError("need one amplitude per center")
        if not self.centers:
            raise ValueError("landscape needs at least one center")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.base < 0:
            raise ValueError(f"base must be >= 0, got {self.base}")
        if self.base + max(self.amplitudes) > 1.0:
            raise ValueError("base + max amplitude must stay <= 1")

    @classmethod
    def unimodal(
        cls,
        center: tuple[float, float] = (129.0, 151.0),
        base: float = 0.5,
        amplitude: float = 0.47,
        sigma: float = 10.0,
    ) -> "SyntheticLandscape":
        return cls("unimodal", (center,), base, (amplitude,), sigma)

    @classmethod
    def flat(cls, base: float = 0.5) -> "SyntheticLandscape":
        return cls("unimodal", ((129.0, 151.0),), base, (0.0,), 10.0)

    @classmethod
    def bimodal(cls) -> "SyntheticLandscape":
        return cls(
            "bimodal",
            ((129.0, 151.0), (40.0, 70.0)),
            0.5,
            (0.47, 0.35),
            10.0,
        )


def synthetic_accuracy(window: Window, land: SyntheticLandscape) -> float:
    """Evaluate the landscape at the window, clamped into [0, 1]."""
    acc = land.base
    two_sigma_sq = 2.0 * land.sigma * land.sigma
    for (a, b), amp in zip(land.centers, land.amplitudes):
        d2 = (window.l_start - a) ** 2 + (window.l_end - b) ** 2
        acc += amp * math.exp(-d2 / two_sigma_sq)
    return min(1.0, max(0.0, acc))


# ---------------------------------------------------------------------------
# Lookup tables
# ---------------------------------------------------------------------------

TABLE_HEADER = ("l_start", "l_end", "accuracy")


@dataclass
class AccuracyTable:
    """Measured accuracies keyed by window bounds."""

    entries: dict[tuple[int, int], float] = field(default_factory=dict)
    deterministic: bool = True

    @classmethod
    def from_csv(cls, path: str) -> "AccuracyTable":
        entries: dict[tuple[int, int], float] = {}
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != TABLE_HEADER:
                raise ValueError(
                    f"{path}: expected header {','.join(TABLE_HEADER)}, got {header}"
                )
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    start, end, acc = int(row[0]), int(row[1]), float(row[2])
                except (ValueError, IndexError) as exc:
                    raise ValueError(f"{path}: line {lineno}: bad row {row!r}") from exc
                window = Window(start, end)  # validates bounds
                if not 0.0 <= acc <= 1.0:
                    raise ValueError(f"{path}: line {lineno}: accuracy {acc} outside [0, 1]")
                entries[(window.l_start, window.l_end)] = acc
        return cls(entries=entries)


def table_accuracy(window: Window, table: AccuracyTable) -> float:
    """Exact-match lookup; no interpolation."""
    key = (window.l_start, window.l_end)
    if key not in table.entries:
        raise MissingEntryError(f"no measured accuracy for window {key}")
    return table.entries[key]


# ---------------------------------------------------------------------------
# Evaluator interface
# ---------------------------------------------------------------------------


class Evaluator:
    """Maps a window to an accuracy in [0, 1].

    ``deterministic`` backends always return the same accuracy for the same
    window, which is what makes caching and brute-force enumeration sound.
    """

    deterministic: bool = True

    def evaluate(self, window: Window) -> float:
        raise NotImplementedError

    def evaluate_many(self, windows: Sequence[Window], jobs: int = 1) -> list:
        """Evaluate a batch; each slot is an accuracy or an EvaluationFailed.

        Unrecoverable backend errors propagate instead of filling slots.
        """
        if jobs > 1 and len(windows) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(self._one, w) for w in windows]
                return [f.result() for f in futures]
        return [self._one(w) for w in windows]

    def _one(self, window: Window):
        try:
            return self.evaluate(window)
        except EvaluationFailed as failed:
            return failed

    def close(self) -> None:
        pass

    def __enter__(self) -> "Evaluator":
        return self

    def __exit__(self, *exc) -> None:
        # Teardown must not mask the failure that ended the block; callers
        # who care about a clean worker exit call close() directly.
        try:
            self.close()
        except EvaluatorError:
            pass


class SyntheticEvaluator(Evaluator):
    def __init__(self, landscape: SyntheticLandscape):
        self.landscape = landscape

    def evaluate(self, window: Window) -> float:
        return _validated(synthetic_accuracy(window, self.landscape), window)


class TableEvaluator(Evaluator):
    def __init__(self, table: AccuracyTable):
        self.table = table
        self.deterministic = table.deterministic

    def evaluate(self, window: Window) -> float:
        return _validated(table_accuracy(window, self.table), window)


class CachingEvaluator(Evaluator):
    """Memoizes a deterministic inner evaluator on the repaired window."""

    def __init__(self, inner: Evaluator):
        if not inner.deterministic:
            raise ValueError("caching requires a deterministic inner evaluator")
        self.inner = inner
        self._cache: dict[tuple[int, int], float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def evaluate(self, window: Window) -> float:
        key = (window.l_start, window.l_end)
        with self._lock:
            if key in self._cache:
                self.hits += 1
                return self._cache[key]
        value = self.inner.evaluate(window)  # errors are not cached
        with self._lock:
            self.misses += 1
            self._cache[key] = value
        return value

    def evaluate_many(self, windows: Sequence[Window], jobs: int = 1) -> list:
        # Dedupe before dispatch so hit/miss counts stay deterministic under
        # parallel evaluation.
        keys = [(w.l_start, w.l_end) for w in windows]
        with self._lock:
            missing: list[Window] = []
            seen: set[tuple[int, int]] = set()
            for window, key in zip(windows, keys):
                if key not in self._cache and key not in seen:
                    seen.add(key)
                    missing.append(window)
        outcomes = self.inner.evaluate_many(missing, jobs=jobs) if missing else []
        fresh: dict[tuple[int, int], object] = {}
        with self._lock:
            for window, outcome in zip(missing, outcomes):
                key = (window.l_start, window.l_end)
                fresh[key] = outcome
                if isinstance(outcome, float):
                    self._cache[key] = outcome
            self.misses += len(missing)
            self.hits += len(windows) - len(missing)
            return [self._cache.get(key, fresh.get(key)) for key in keys]

    def snapshot(self) -> dict[tuple[int, int], float]:
        with self._lock:
            return dict(self._cache)

    def restore(self, entries: dict[tuple[int, int], float], hits: int, misses: int) -> None:
        with self._lock:
            self._cache = dict(entries)
            self.hits = hits
            self.misses = misses

    def close(self) -> None:
        self.inner.close()


# ---------------------------------------------------------------------------
# External worker protocol
# ---------------------------------------------------------------------------


class ExternalSession:
    """One worker subprocess speaking ``layerga-eval/1`` over stdin/stdout.

    Writes are serialized and responses demultiplexed by request id, so
    concurrent callers and out-of-order workers are both fine.
    """

    def __init__(self, command: str | Sequence[str], shutdown_timeout: float = 30.0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._shutdown_timeout = shutdown_timeout
        self._write_lock = threading.Lock()
        self._read_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._pending: dict[int, dict] = {}
        self._outstanding: set[int] = set()
        self._next_id = 0
        self._closed = False
        self.deterministic = self._handshake()

    def _handshake(self) -> bool:
        line = self._proc.stdout.readline()
        if not line:
            raise EvaluatorFailure("worker exited before sending its handshake")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"handshake is not valid JSON: {line!r}") from exc
        if not isinstance(obj, dict) or obj.get("protocol") != PROTOCOL_NAME:
            raise ProtocolError(f"worker does not speak {PROTOCOL_NAME}: {line!r}")
        if not isinstance(obj.get("deterministic"), bool):
            raise ProtocolError(f"handshake lacks a boolean 'deterministic': {line!r}")
        return obj["deterministic"]

    def submit(self, window: Window) -> int:
        with self._write_lock:
            rid = self._next_id
            self._next_id += 1
            with self._state_lock:
                self._outstanding.add(rid)
            payload = {"id": rid, "l_start": window.l_start, "l_end": window.l_end}
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError) as exc:
                raise EvaluatorFailure("worker closed its input stream") from exc
        return rid

    def _read_one(self) -> None:
        line = self._proc.stdout.readline()
        if not line:
            with self._state_lock:
                missing = sorted(self._outstanding)
            raise EvaluatorFailure(
                f"worker stream closed with unanswered request ids {missing}"
            )
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed response line: {line!r}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), int):
            raise ProtocolError(f"response lacks an integer id: {line!r}")
        rid = obj["id"]
        with self._state_lock:
            if rid not in self._outstanding:
                raise ProtocolError(f"response for unknown request id {rid}")
            self._outstanding.discard(rid)
            self._pending[rid] = obj

    def collect(self, rid: int, window: Window) -> float:
        while True:
            with self._state_lock:
                obj = self._pending.pop(rid, None)
            if obj is not None:
                break
            with self._read_lock:
                with self._state_lock:
                    if rid in self._pending:
                        continue
                self._read_one()
        if "error" in obj:
            raise EvaluationFailed(str(obj["error"]), window)
        accuracy = obj.get("accuracy")
        if not isinstance(accuracy, (int, float)) or isinstance(accuracy, bool):
            raise ProtocolError(f"response carries neither accuracy nor error: {obj}")
        return _validated(accuracy, window)

    def close(self) -> int:
        """Close the worker's input and wait for a clean exit."""
        if self._closed:
            return self._proc.returncode
        self._closed = True
        try:
            self._proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass
        try:
            status = self._proc.wait(timeout=self._shutdown_timeout)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
            self._proc.stdout.close()
            raise EvaluatorFailure(
                f"worker ignored input close for {self._shutdown_timeout}s and was killed"
            ) from None
        self._proc.stdout.close()
        if status != 0:
            raise EvaluatorFailure(f"worker exited with status {status}")
        return status


def external_evaluate(
    batch: Sequence[tuple[int, Window]], session: ExternalSession
) -> dict[int, object]:
    """Evaluate a batch over one session; failures stay per-request.

    Returns ``{caller_id: accuracy | EvaluationFailed}``.  Protocol and
    stream failures propagate because the whole session is unusable then.
    """
    submitted = [(cid, window, session.submit(window)) for cid, window in batch]
    results: dict[int, object] = {}
    for cid, window, rid in submitted:
        try:
            results[cid] = session.collect(rid, window)
        except EvaluationFailed as failed:
            results[cid] = failed
    return results


class ExternalEvaluator(Evaluator):
    """Evaluator backed by a worker subprocess."""

    def __init__(self, command: str | Sequence[str]):
        self.command = command
        self.session = ExternalSession(command)
        self.deterministic = self.session.deterministic

    def evaluate(self, window: Window) -> float:
        rid = self.session.submit(window)
        return self.session.collect(rid, window)

    def evaluate_many(self, windows: Sequence[Window], jobs: int = 1) -> list:
        # Pipelined batch I/O: write every request, then match responses by
        # id.  Worker-side ordering is irrelevant.
        batch = list(enumerate(windows))
        results = external_evaluate(batch, self.session)
        return [results[i] for i in range(len(windows))]

    def close(self) -> None:
        self.session.close()


# ---------------------------------------------------------------------------
# Evaluator selector
# ---------------------------------------------------------------------------


class EvaluatorSpecError(ValueError):
    """The --evaluator selector string is not well formed."""


_SYNTHETIC_PRESETS = {
    "unimodal": SyntheticLandscape.unimodal,
    "flat": SyntheticLandscape.flat,
    "bimodal": SyntheticLandscape.bimodal,
}


def make_evaluator(spec: str) -> Evaluator:
    """Build an evaluator from a ``scheme:argument`` selector.

    ``synthetic:<unimodal|flat|bimodal>``, ``table:<csv path>`` or
    ``external:<worker command>``.
    """
    scheme, sep, arg = spec.partition(":")
    if not sep or not arg:
        raise EvaluatorSpecError(
            f"evaluator selector must look like scheme:argument, got {spec!r}"
        )
    if scheme == "synthetic":
        preset = _SYNTHETIC_PRESETS.get(arg)
        if preset is None:
            raise EvaluatorSpecError(
                f"unknown synthetic landscape {arg!r}; choose from "
                f"{sorted(_SYNTHETIC_PRESETS)}"
            )
        return SyntheticEvaluator(preset())
    if scheme == "table":
        return TableEvaluator(AccuracyTable.from_csv(arg))
    if scheme == "external":
        return ExternalEvaluator(arg)
    raise EvaluatorSpecError(
        f"unknown evaluator scheme {scheme!r}; choose synthetic, table or external"
    )
