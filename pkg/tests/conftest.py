import sys
import textwrap

import numpy as np
import pytest

from layerga.genome import GenomeLayout


@pytest.fixture
def layout():
    return GenomeLayout()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


FIXTURE_TABLE_ROWS = [(131, 133, 0.92), (147, 151, 0.95), (129, 151, 0.97)]


@pytest.fixture
def table_csv(tmp_path):
    path = tmp_path / "fixture3.csv"
    lines = ["l_start,l_end,accuracy"]
    lines += [f"{s},{e},{a}" for s, e, a in FIXTURE_TABLE_ROWS]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_worker_script(tmp_path, body, name="worker.py"):
    """Materialize a small protocol worker and return its argv."""
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return [sys.executable, str(path)]


HANDSHAKE = '{"protocol": "layerga-eval/1", "deterministic": true}'

# Answers every request with accuracy l_start/1000, in order.
PLAIN_WORKER = f"""
    import json, sys
    print('{HANDSHAKE}', flush=True)
    for line in sys.stdin:
        req = json.loads(line)
        print(json.dumps({{"id": req["id"], "accuracy": req["l_start"] / 1000.0}}), flush=True)
"""

# Buffers pairs of requests and answers them in reversed order.
OUT_OF_ORDER_WORKER = f"""
    import json, sys
    print('{HANDSHAKE}', flush=True)
    buffered = []
    def drain():
        for req in reversed(buffered):
            print(json.dumps({{"id": req["id"], "accuracy": req["l_start"] / 1000.0}}), flush=True)
        buffered.clear()
    for line in sys.stdin:
        buffered.append(json.loads(line))
        if len(buffered) == 2:
            drain()
    drain()
"""

# Fails window (5, 5) with a per-request error object, serves the rest.
ERRORING_WORKER = f"""
    import json, sys
    print('{HANDSHAKE}', flush=True)
    for line in sys.stdin:
        req = json.loads(line)
        if req["l_start"] == 5 and req["l_end"] == 5:
            print(json.dumps({{"id": req["id"], "error": "oom"}}), flush=True)
        else:
            print(json.dumps({{"id": req["id"], "accuracy": 0.5}}), flush=True)
"""
