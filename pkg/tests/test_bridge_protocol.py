"""Wire-protocol conformance against scripted stub bridges."""

import sys
import textwrap

import numpy as np
import pytest

from seqswarm.bridge import (BridgeClient, BridgeRemoteError, BridgeTimeout,
                             BridgeUnavailable, ProtocolViolation,
                             BridgeEvaluator, validate_bridge)
from seqswarm.scorers import SsComposition

GOOD_STUB = """
import json, sys
print(json.dumps({"protocol": 1}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    n = len(req["sequence"])
    coords = [[i * 3.8, (i % 2) * 0.7, 0.0] for i in range(n)]
    resp = {
        "id": req["id"],
        "total_energy": -1.5 * n,
        "energy_terms": {"contact": -1.0 * n, "reference": -0.5 * n},
        "ss": "L" * n,
        "ca_coords": coords,
    }
    if "frequencies" in req["need"]:
        k = req.get("anm", {}).get("k", 6)
        resp["frequencies"] = [round((i + 1) / k, 6) for i in range(k)]
    print(json.dumps(resp), flush=True)
"""


def write_stub(tmp_path, body, name="stub.py"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return f"{sys.executable} {path}"


def mutate_stub(replacement: str) -> str:
    """A stub that answers like GOOD_STUB but with one field corrupted."""
    return GOOD_STUB.replace("print(json.dumps(resp), flush=True)", replacement)


def test_happy_path(tmp_path):
    info = validate_bridge(write_stub(tmp_path, GOOD_STUB), timeout=10.0)
    assert info["protocol"] == 1
    assert info["round_trip_ms"] >= 0.0


def test_missing_handshake(tmp_path):
    stub = write_stub(tmp_path, """
    import json, sys
    for line in sys.stdin:
        req = json.loads(line)
        print(json.dumps({"id": req["id"], "error": "nope"}), flush=True)
    """)
    with pytest.raises(ProtocolViolation, match="missing handshake"):
        validate_bridge(stub, timeout=1.5)


def test_non_json_handshake(tmp_path):
    stub = write_stub(tmp_path, "print('warming up...', flush=True)\n" + GOOD_STUB)
    with pytest.raises(ProtocolViolation, match="missing handshake"):
        validate_bridge(stub, timeout=5.0)


def test_wrong_protocol_version(tmp_path):
    stub = write_stub(tmp_path, GOOD_STUB.replace('{"protocol": 1}', '{"protocol": 99}'))
    with pytest.raises(ProtocolViolation, match="protocol version"):
        validate_bridge(stub, timeout=10.0)


def test_non_json_response(tmp_path):
    stub = write_stub(tmp_path, mutate_stub('print("garbage", flush=True)'))
    with pytest.raises(ProtocolViolation, match="not valid JSON"):
        validate_bridge(stub, timeout=10.0)


def test_id_mismatch(tmp_path):
    stub = write_stub(tmp_path, mutate_stub(
        'resp["id"] = "wrong"; print(json.dumps(resp), flush=True)'))
    with pytest.raises(ProtocolViolation, match="id"):
        validate_bridge(stub, timeout=10.0)


def test_wrong_length_ss(tmp_path):
    stub = write_stub(tmp_path, mutate_stub(
        'resp["ss"] = resp["ss"] + "L"; print(json.dumps(resp), flush=True)'))
    with pytest.raises(ProtocolViolation, match="ss has length"):
        validate_bridge(stub, timeout=10.0)


def test_bad_coords_shape(tmp_path):
    stub = write_stub(tmp_path, mutate_stub(
        'resp["ca_coords"] = [[0.0, 0.0]] * len(resp["ss"]); print(json.dumps(resp), flush=True)'))
    with pytest.raises(ProtocolViolation, match="ca_coords"):
        validate_bridge(stub, timeout=10.0)


def test_missing_energy(tmp_path):
    stub = write_stub(tmp_path, mutate_stub(
        'del resp["total_energy"]; print(json.dumps(resp), flush=True)'))
    with pytest.raises(ProtocolViolation, match="total_energy"):
        validate_bridge(stub, timeout=10.0)


def test_silent_bridge_times_out(tmp_path):
    stub = write_stub(tmp_path, """
    import json, sys, time
    print(json.dumps({"protocol": 1}), flush=True)
    for line in sys.stdin:
        time.sleep(60)
    """)
    with pytest.raises(BridgeTimeout):
        validate_bridge(stub, timeout=1.0)


def test_error_response_surfaces(tmp_path):
    stub = write_stub(tmp_path, mutate_stub(
        'print(json.dumps({"id": req["id"], "error": "fold blew up"}), flush=True)'))
    client = BridgeClient(stub, timeout=10.0)
    try:
        with pytest.raises(BridgeRemoteError, match="fold blew up"):
            client.request("ACDEF", ["energy", "ss", "coords"])
    finally:
        client.close()


def test_unavailable_command():
    with pytest.raises(BridgeUnavailable):
        BridgeClient("/nonexistent/bridge-binary", timeout=1.0)


def test_evaluator_through_stub(tmp_path):
    evaluator = BridgeEvaluator(write_stub(tmp_path, GOOD_STUB),
                                SsComposition("L" * 5), timeout=10.0)
    try:
        result = evaluator.evaluate("ACDEF")
    finally:
        evaluator.close()
    assert result.total_energy == pytest.approx(-7.5)
    assert result.ss_string == "L" * 5
    assert result.objective_score == 1.0  # recomputed locally from returned ss
    assert result.ca_coords.shape == (5, 3)
    assert np.all(np.isfinite(result.ca_coords))


def test_degenerate_coords_fail_iteration_not_campaign(tmp_path):
    from pathlib import Path

    from seqswarm.agents import KeepPolicy
    from seqswarm.core import DesignObjective, parse_sequence
    from seqswarm.engine import ExternalEvaluatorConfig, RunConfig, run_campaign

    stub = write_stub(tmp_path, mutate_stub(
        'resp["ca_coords"] = [[1.0, 2.0, 3.0]] * len(resp["ss"]); '
        'print(json.dumps(resp), flush=True)'), "degenerate.py")
    config = RunConfig(
        objective=DesignObjective("coil", "stay loose", SsComposition("L" * 5)),
        start_sequence=parse_sequence("ACDEF"),
        output_path=Path(tmp_path / "t.jsonl"),
        iterations=7, seed=1, policy=KeepPolicy(),
        evaluator=ExternalEvaluatorConfig(command=stub, timeout=10.0))
    result = run_campaign(config, clock=lambda: 0.0)
    assert not result.complete  # every iteration fails, budget-capped at 5
    assert all(r.failed and "coordinates" in r.error for r in result.records)


def test_unsorted_frequencies_rejected(tmp_path):
    stub = write_stub(tmp_path, mutate_stub(
        'resp["frequencies"] = [1.0, 0.5]; print(json.dumps(resp), flush=True)'))
    client = BridgeClient(stub, timeout=10.0)
    try:
        resp = client.request("ACDEF", ["energy", "ss", "coords", "frequencies"],
                              anm={"cutoff": 15.0, "k": 2})
        from seqswarm.bridge import validate_response
        with pytest.raises(ProtocolViolation, match="ascending"):
            validate_response(resp, 5, ["energy", "ss", "coords", "frequencies"])
    finally:
        client.close()
