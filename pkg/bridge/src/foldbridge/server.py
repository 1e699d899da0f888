"""The protocol loop: line-delimited JSON requests on stdin, one response per line.

Startup emits the handshake {"protocol": 1}. Per-request failures become
{"id": ..., "error": ...} responses and the loop continues; only stream
loss ends the process. Requests are handled strictly serially.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import backends
from .backends import BackendError

PROTOCOL_VERSION = 1

VALID_SEQUENCE = set("ACDEFGHIKLMNPQRSTVWY")
KNOWN_NEEDS = {"energy", "ss", "coords", "frequencies"}


@dataclass
class BridgeConfig:
    fold_backend: str = "mock"        # mock | external | none
    energy_backend: str = "mock"      # mock | external
    ss_backend: str = "derive"        # derive | external
    fold_command: str = ""
    energy_command: str = ""
    ss_command: str = ""
    working_dir: Path = field(default_factory=lambda: Path("foldbridge-work"))
    call_timeout: float = 120.0

    def resolve(self) -> "BridgeConfig":
        """Downgrade external backends whose tools are not installed."""
        if self.fold_backend == "external" and not backends.command_available(self.fold_command):
            backends.warn(f"fold command {self.fold_command!r} not found; using mock fold")
            self.fold_backend = "mock"
        if self.energy_backend == "external" and not backends.command_available(self.energy_command):
            backends.warn(f"energy command {self.energy_command!r} not found; using mock energy")
            self.energy_backend = "mock"
        if self.ss_backend == "external" and not backends.command_available(self.ss_command):
            backends.warn(f"ss command {self.ss_command!r} not found; deriving ss from coordinates")
            self.ss_backend = "derive"
        return self


def handle_request(req: dict, config: BridgeConfig) -> dict:
    """Answer one request dict; raises nothing (errors become error objects)."""
    req_id = req.get("id")
    try:
        sequence = req.get("sequence")
        if not isinstance(sequence, str) or not sequence:
            raise BackendError("request has no sequence")
        if any(c not in VALID_SEQUENCE for c in sequence):
            raise BackendError("sequence contains non-canonical residues")
        need = req.get("need") or []
        unknown = set(need) - KNOWN_NEEDS
        if unknown:
            raise BackendError(f"unknown need entries: {sorted(unknown)}")

        if config.fold_backend == "none":
            coords = None
            pdb_path = None
        elif config.fold_backend == "external":
            coords = backends.external_fold(sequence, config.fold_command,
                                            config.working_dir, config.call_timeout)
            tag = hashlib.sha256(sequence.encode()).hexdigest()[:12]
            pdb_path = config.working_dir / f"{tag}.pdb"
        else:
            coords = backends.mock_fold(sequence)
            pdb_path = None
        if coords is not None and len(coords) != len(sequence):
            raise BackendError(f"fold returned {len(coords)} residues for "
                               f"{len(sequence)}-residue sequence")

        resp: dict = {"id": req_id}

        if "coords" in need or "ss" in need or "frequencies" in need or "energy" in need:
            if coords is None and ("coords" in need or "frequencies" in need):
                raise BackendError("frequencies unavailable: no coordinates backend"
                                   if "frequencies" in need
                                   else "coords unavailable: no coordinates backend")

        if "coords" in need:
            resp["ca_coords"] = [[float(x) for x in row] for row in coords]

        if "ss" in need:
            if config.ss_backend == "external" and pdb_path is not None:
                resp["ss"] = backends.external_ss(pdb_path, config.ss_command,
                                                  config.call_timeout, len(sequence))
            else:
                if coords is None:
                    raise BackendError("ss unavailable: no coordinates backend")
                resp["ss"] = backends.ss_from_coords(coords)

        if "energy" in need:
            if config.energy_backend == "external" and pdb_path is not None:
                total, terms = backends.external_energy(
                    pdb_path, config.energy_command, config.call_timeout)
            else:
                if coords is None:
                    raise BackendError("energy unavailable: no coordinates backend")
                total, terms = backends.mock_energy(sequence, coords)
            resp["total_energy"] = total
            resp["energy_terms"] = terms

        if "frequencies" in need:
            anm = req.get("anm") or {}
            cutoff = float(anm.get("cutoff", 15.0))
            k = int(anm.get("k", 6))
            resp["frequencies"] = backends.mode_frequencies(coords, cutoff, k)

        return resp
    except BackendError as exc:
        return {"id": req_id, "error": str(exc)}
    except Exception as exc:  # keep the loop alive on anything unexpected
        return {"id": req_id, "error": f"internal: {exc}"}


def serve(config: BridgeConfig, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    config = config.resolve()

    def emit(obj: dict) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    emit({"protocol": PROTOCOL_VERSION})
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise ValueError("request is not an object")
        except ValueError as exc:
            emit({"id": None, "error": f"parse: {exc}"})
            continue
        emit(handle_request(req, config))
    return 0
