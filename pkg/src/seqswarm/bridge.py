"""Client side of the external evaluator wire protocol.

The bridge is any subprocess speaking line-delimited JSON on stdin/stdout:
it announces {"protocol": 1} on startup, then answers one request per line.

    request:  {"id", "sequence", "need": [...], "anm": {"cutoff", "k"}}
    response: {"id", "total_energy", "energy_terms", "ss", "ca_coords",
               "frequencies"?} or {"id"?, "error": "..."}

Responses are validated against the evaluation-result invariants before
use, and the objective score is always recomputed locally.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import shlex
import subprocess
import threading
import time
import uuid

import numpy as np

from .evaluation import EvaluationError, EvaluationResult, SS_LABELS
from .scorers import ScorerSpec, needs_frequencies, objective_score

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1


class BridgeUnavailable(EvaluationError):
    """The bridge process could not be started or has exited."""


class BridgeTimeout(EvaluationError):
    """The bridge did not answer within the configured timeout."""


class ProtocolViolation(EvaluationError):
    """The bridge answered, but the payload breaks the protocol contract."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class BridgeRemoteError(EvaluationError):
    """The bridge reported a per-request error; the iteration fails, the loop continues."""


class BridgeClient:
    """One subprocess bridge connection; strictly one request in flight."""

    def __init__(self, command: str | list[str], timeout: float = 30.0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1)
        except OSError as exc:
            raise BridgeUnavailable(f"cannot start bridge {argv!r}: {exc}") from exc
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._handshake()

    def _pump(self):
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _read_line(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise BridgeTimeout(f"no reply within {self.timeout}s")
        if line is None:
            raise BridgeUnavailable("bridge closed its output stream")
        return line

    def _handshake(self):
        try:
            line = self._read_line()
        except BridgeTimeout:
            raise ProtocolViolation(
                f"missing handshake: bridge produced no output within {self.timeout}s")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolViolation("missing handshake: first line is not JSON")
        if not isinstance(msg, dict) or "protocol" not in msg:
            raise ProtocolViolation("missing handshake: no protocol field")
        if msg["protocol"] != PROTOCOL_VERSION:
            raise ProtocolViolation(f"unsupported protocol version {msg['protocol']!r}")

    def request(self, sequence: str, need: list[str],
                anm: dict | None = None) -> dict:
        if self._proc.poll() is not None:
            raise BridgeUnavailable("bridge process has exited")
        req_id = uuid.uuid4().hex
        payload = {"id": req_id, "sequence": sequence, "need": need,
                   "anm": anm or {"cutoff": 15.0, "k": 6}}
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeUnavailable(f"bridge stdin closed: {exc}") from exc

        line = self._read_line()
        try:
            resp = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolViolation("response is not valid JSON")
        if not isinstance(resp, dict):
            raise ProtocolViolation("response is not an object")
        if "error" in resp:
            raise BridgeRemoteError(str(resp["error"]))
        if resp.get("id") != req_id:
            raise ProtocolViolation(f"response id {resp.get('id')!r} does not match request")
        return resp

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()


def validate_response(resp: dict, n: int, need: list[str]) -> None:
    """Enforce the evaluation-result invariants on a raw bridge response."""
    if "energy" in need:
        if not isinstance(resp.get("total_energy"), (int, float)) \
                or not math.isfinite(resp["total_energy"]):
            raise ProtocolViolation("total_energy missing or not a finite number")
        terms = resp.get("energy_terms")
        if not isinstance(terms, dict) or not all(
                isinstance(v, (int, float)) and math.isfinite(v) for v in terms.values()):
            raise ProtocolViolation("energy_terms missing or not a number map")
    if "ss" in need:
        ss = resp.get("ss")
        if not isinstance(ss, str) or len(ss) != n:
            raise ProtocolViolation(f"ss has length {len(ss) if isinstance(ss, str) else 'n/a'}, expected {n}")
        if any(c not in SS_LABELS for c in ss):
            raise ProtocolViolation("ss contains labels outside H/E/L")
    if "coords" in need:
        coords = resp.get("ca_coords")
        try:
            arr = np.asarray(coords, dtype=float)
        except (TypeError, ValueError):
            raise ProtocolViolation("ca_coords is not numeric")
        if arr.shape != (n, 3) or not np.all(np.isfinite(arr)):
            raise ProtocolViolation(f"ca_coords has shape {arr.shape}, expected ({n}, 3)")
    if "frequencies" in need:
        freqs = resp.get("frequencies")
        if not isinstance(freqs, list) or not freqs:
            raise ProtocolViolation("frequencies missing")
        if any(not isinstance(f, (int, float)) or not (0.0 < f <= 1.0) for f in freqs):
            raise ProtocolViolation("frequencies must lie in (0, 1]")
        if list(freqs) != sorted(freqs):
            raise ProtocolViolation("frequencies must be ascending")


class BridgeEvaluator:
    """Evaluator backed by a bridge subprocess; plugs into the engine unchanged."""

    def __init__(self, command: str | list[str], scorer: ScorerSpec,
                 timeout: float = 30.0):
        self.scorer = scorer
        self.client = BridgeClient(command, timeout=timeout)

    def evaluate(self, sequence) -> EvaluationResult:
        seq = str(sequence)
        need = ["energy", "ss", "coords"]
        anm = None
        if needs_frequencies(self.scorer):
            need.append("frequencies")
            anm = {"cutoff": self.scorer.cutoff, "k": len(self.scorer.target)}
        resp = self.client.request(seq, need, anm)
        validate_response(resp, len(seq), need)

        coords = np.asarray(resp["ca_coords"], dtype=float)
        frequencies = tuple(resp["frequencies"]) if "frequencies" in need else None
        score = objective_score(self.scorer, seq, ss_string=resp["ss"],
                                ca_coords=coords, frequencies=frequencies,
                                energy_terms=resp["energy_terms"])
        return EvaluationResult(
            total_energy=float(resp["total_energy"]),
            energy_terms={k: float(v) for k, v in resp["energy_terms"].items()},
            ss_string=resp["ss"], ca_coords=coords,
            objective_score=score, frequencies=frequencies)

    def close(self):
        self.client.close()


def validate_bridge(command: str | list[str], timeout: float = 10.0) -> dict:
    """Handshake plus one scripted round-trip; returns protocol and timing info.

    Raises BridgeUnavailable / ProtocolViolation / BridgeTimeout on failure.
    """
    probe = "ACDEFGHIKL"
    client = BridgeClient(command, timeout=timeout)
    try:
        start = time.monotonic()
        resp = client.request(probe, ["energy", "ss", "coords"])
        elapsed_ms = (time.monotonic() - start) * 1000.0
        validate_response(resp, len(probe), ["energy", "ss", "coords"])
    finally:
        client.close()
    return {"protocol": PROTOCOL_VERSION, "round_trip_ms": elapsed_ms,
            "sequence": probe}
