import io
import json
import math
import subprocess
import sys

import pytest

from layerga_pyeval.landscape import PRESETS, Landscape, WorkerConfig, train_hook
from layerga_pyeval.worker import PROTOCOL, main, serve


def run_serve(requests, config=WorkerConfig()):
    stdin = io.StringIO("".join(json.dumps(r) + "\n" if isinstance(r, dict) else r for r in requests))
    stdout = io.StringIO()
    status = serve(config, stdin, stdout)
    lines = stdout.getvalue().splitlines()
    return status, [json.loads(line) for line in lines]


def test_handshake_is_first_line_and_input_close_ends_cleanly():
    status, lines = run_serve([])
    assert status == 0
    assert lines == [{"protocol": PROTOCOL, "deterministic": True}]


def test_center_request_returns_peak_accuracy():
    status, lines = run_serve([{"id": 1, "l_start": 129, "l_end": 151}])
    assert status == 0
    assert lines[1]["id"] == 1
    assert abs(lines[1]["accuracy"] - 0.97) < 1e-12


def test_flat_landscape_answers_base_everywhere():
    config = WorkerConfig(landscape=PRESETS["flat"])
    _, lines = run_serve(
        [{"id": i, "l_start": w[0], "l_end": w[1]} for i, w in enumerate([(0, 0), (129, 151), (0, 156)])],
        config,
    )
    assert [r["accuracy"] for r in lines[1:]] == [0.5, 0.5, 0.5]


def test_far_window_decays_to_base():
    _, lines = run_serve([{"id": 0, "l_start": 0, "l_end": 156}])
    expected = 0.5 + 0.47 * math.exp(-(129**2 + 5**2) / 200.0)
    assert abs(lines[1]["accuracy"] - expected) < 1e-15
    assert abs(lines[1]["accuracy"] - 0.5) < 1e-12


def test_malformed_json_yields_error_object_and_worker_continues():
    status, lines = run_serve(["{bad\n", {"id": 2, "l_start": 129, "l_end": 151}])
    assert status == 0
    assert lines[1]["id"] == -1
    assert "error" in lines[1]
    assert abs(lines[2]["accuracy"] - 0.97) < 1e-12


def test_bad_field_reports_the_request_id():
    _, lines = run_serve([{"id": 7, "l_start": "x", "l_end": 3}])
    assert lines[1] == {"id": 7, "error": "field 'l_start' must be an integer"}


def test_missing_id_reports_minus_one():
    _, lines = run_serve([{"l_start": 1, "l_end": 2}])
    assert lines[1]["id"] == -1


def test_blank_lines_are_ignored():
    status, lines = run_serve(["\n", {"id": 0, "l_start": 10, "l_end": 10}, "\n"])
    assert status == 0
    assert len(lines) == 2


def test_responses_match_requests_one_to_one():
    requests = [{"id": i, "l_start": i, "l_end": i + 3} for i in range(20)]
    _, lines = run_serve(requests)
    assert [r["id"] for r in lines[1:]] == list(range(20))
    for r in lines[1:]:
        assert 0.0 <= r["accuracy"] <= 1.0


def test_train_hook_delegates_to_landscape():
    config = WorkerConfig()
    assert train_hook(config, 129, 151) == config.landscape.accuracy(129, 151)
    flat = WorkerConfig(landscape=Landscape(amplitudes=(0.0,)))
    assert train_hook(flat, 40, 90) == 0.5


def test_landscape_validation():
    with pytest.raises(ValueError):
        Landscape(base=0.6, amplitudes=(0.5,))
    with pytest.raises(ValueError):
        Landscape(sigma=0.0)
    with pytest.raises(ValueError):
        Landscape(centers=(), amplitudes=())


def test_cli_rejects_invalid_overrides():
    assert main(["--base", "0.9", "--amp", "0.5"]) == 2


def test_subprocess_end_to_end_exits_zero():
    proc = subprocess.Popen(
        [sys.executable, "-m", "layerga_pyeval", "--landscape", "unimodal"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
    )
    out, _ = proc.communicate(json.dumps({"id": 5, "l_start": 129, "l_end": 151}) + "\n")
    lines = [json.loads(l) for l in out.splitlines()]
    assert proc.returncode == 0
    assert lines[0]["protocol"] == PROTOCOL
    assert lines[1]["id"] == 5
    assert abs(lines[1]["accuracy"] - 0.97) < 1e-12


def test_latency_flag_still_serves():
    config = WorkerConfig(latency_ms=1.0)
    status, lines = run_serve([{"id": 0, "l_start": 129, "l_end": 151}], config)
    assert status == 0 and len(lines) == 2
