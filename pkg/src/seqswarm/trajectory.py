"""Append-only campaign trajectory files.

Line-delimited JSON: a header line, one self-contained record per
iteration, a memory snapshot every 8 iterations, and (only when a campaign
dies early) a terminal status line. Every line is flushed as written so an
interrupted campaign can resume without losing completed records.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

MEMORY_SNAPSHOT_EVERY = 8


class CorruptTrajectory(ValueError):
    def __init__(self, line: int, detail: str = ""):
        super().__init__(f"corrupt trajectory at line {line}" + (f": {detail}" if detail else ""))
        self.line = line


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class TrajectoryWriter:
    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a" if append else "w")

    def write_line(self, obj: dict) -> None:
        self._fh.write(_dumps(obj) + "\n")
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class TrajectoryData:
    header: dict
    records: list[dict] = field(default_factory=list)
    memory_snapshots: dict[int, dict] = field(default_factory=dict)
    terminated: dict | None = None


def read_trajectory(path) -> TrajectoryData:
    """Strict reader: raises CorruptTrajectory (with the line number) on any bad line."""
    path = Path(path)
    data: TrajectoryData | None = None
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            if raw and not raw.endswith("\n"):
                raise CorruptTrajectory(line_no, "truncated final line")
            stripped = raw.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise CorruptTrajectory(line_no, str(exc))
            if line_no == 1:
                if "config_hash" not in obj:
                    raise CorruptTrajectory(line_no, "first line is not a header")
                data = TrajectoryData(header=obj)
                continue
            if data is None:
                raise CorruptTrajectory(line_no, "missing header")
            if "iteration" in obj:
                data.records.append(obj)
            elif "memory_at" in obj:
                data.memory_snapshots[int(obj["memory_at"])] = obj
            elif "terminated" in obj:
                data.terminated = obj
            else:
                raise CorruptTrajectory(line_no, "unrecognized line type")
    if data is None:
        raise CorruptTrajectory(1, "empty file")
    return data


def prepare_resume(path) -> TrajectoryData:
    """Tolerant reader for resuming: drops a trailing partial line and any
    terminal status line (records are never touched), rewriting the file
    only when such a tail exists."""
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    keep = blob
    if blob and not blob.endswith(b"\n"):
        cut = blob.rfind(b"\n") + 1
        keep = blob[:cut]

    lines = keep.splitlines(keepends=True)
    while lines:
        try:
            obj = json.loads(lines[-1])
        except json.JSONDecodeError:
            lines.pop()
            continue
        if isinstance(obj, dict) and "terminated" in obj:
            lines.pop()
            continue
        break
    cleaned = b"".join(lines)
    if cleaned != blob:
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(cleaned)
        os.replace(tmp, path)
    return read_trajectory(path)
