"""Request loop for the ``layerga-eval/1`` protocol.

One JSON object per line, UTF-8.  The worker speaks first::

    {"protocol": "layerga-eval/1", "deterministic": true}

then answers every request ``{"id": N, "l_start": S, "l_end": E}`` with
``{"id": N, "accuracy": A}``, or ``{"id": N, "error": "..."}`` when the
request cannot be served (id -1 when even the id is unreadable).  Closing
the worker's input ends the loop; exit status 0 means every received
request was answered.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import IO

from layerga_pyeval.landscape import PRESETS, Landscape, WorkerConfig, train_hook

PROTOCOL = "layerga-eval/1"


def _parse_request(line: str) -> tuple[int, int, int]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ValueError("request must be a JSON object")
    rid = obj.get("id")
    if not isinstance(rid, int) or isinstance(rid, bool):
        raise ValueError("request lacks an integer id")
    for key in ("l_start", "l_end"):
        value = obj.get(key)
        if not isinstance(value, int) or isinstance(value, bool):
            raise _RequestError(rid, f"field {key!r} must be an integer")
    return rid, obj["l_start"], obj["l_end"]


class _RequestError(Exception):
    def __init__(self, rid: int, message: str):
        super().__init__(message)
        self.rid = rid


def _emit(output: IO[str], payload: dict) -> None:
    output.write(json.dumps(payload) + "\n")
    output.flush()


def serve(config: WorkerConfig, input_stream: IO[str], output_stream: IO[str]) -> int:
    """Answer requests until the input stream closes; returns the exit status."""
    _emit(output_stream, {"protocol": PROTOCOL, "deterministic": config.deterministic})
    for line in input_stream:
        if not line.strip():
            continue
        try:
            rid, l_start, l_end = _parse_request(line)
        except _RequestError as exc:
            _emit(output_stream, {"id": exc.rid, "error": str(exc)})
            continue
        except ValueError as exc:
            _emit(output_stream, {"id": -1, "error": str(exc)})
            continue
        if config.latency_ms > 0:
            time.sleep(config.latency_ms / 1000.0)
        _emit(output_stream, {"id": rid, "accuracy": train_hook(config, l_start, l_end)})
    return 0


def _config_from_args(args: argparse.Namespace) -> WorkerConfig:
    landscape = PRESETS[args.landscape]
    overrides = {}
    if args.center is not None:
        a, _, b = args.center.partition(",")
        overrides["centers"] = ((float(a), float(b)),)
    if args.base is not None:
        overrides["base"] = args.base
    if args.amp is not None:
        overrides["amplitudes"] = (args.amp,)
    if args.sigma is not None:
        overrides["sigma"] = args.sigma
    if overrides:
        landscape = Landscape(
            centers=overrides.get("centers", landscape.centers),
            base=overrides.get("base", landscape.base),
            amplitudes=overrides.get("amplitudes", landscape.amplitudes),
            sigma=overrides.get("sigma", landscape.sigma),
        )
    return WorkerConfig(landscape=landscape, latency_ms=args.latency_ms)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="layerga-pyeval",
        description="Reference layerga-eval/1 accuracy worker",
    )
    parser.add_argument("--landscape", choices=sorted(PRESETS), default="unimodal")
    parser.add_argument("--center", default=None, metavar="A,B",
                        help="override the (single) peak location")
    parser.add_argument("--base", type=float, default=None)
    parser.add_argument("--amp", type=float, default=None)
    parser.add_argument("--sigma", type=float, default=None)
    parser.add_argument("--latency-ms", type=float, default=0.0,
                        help="artificial delay per request, for timeout testing")
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
    except ValueError as exc:
        print(f"layerga-pyeval: {exc}", file=sys.stderr)
        return 2
    return serve(config, sys.stdin, sys.stdout)


if __name__ == "__main__":
    sys.exit(main())
