"""Plain-text FASTA reading and writing."""

from __future__ import annotations

import logging
from pathlib import Path

from .tables import ALPHABET_SET

log = logging.getLogger(__name__)


def read_fasta(path) -> list[tuple[str, str]]:
    """Read (header, sequence) pairs; sequences are uppercased, unvalidated."""
    records: list[tuple[str, str]] = []
    header = None
    chunks: list[str] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if header is not None:
                    records.append((header, "".join(chunks).upper()))
                header = line[1:].strip()
                chunks = []
            else:
                if header is None:
                    raise ValueError(f"{path}: sequence data before first header")
                chunks.append(line)
    if header is not None:
        records.append((header, "".join(chunks).upper()))
    return records


def canonical_records(records, source: str = "") -> list[tuple[str, str]]:
    """Drop records containing non-canonical residues (X, B, Z, U, ...), logging each skip."""
    kept = []
    for header, seq in records:
        bad = next((ch for ch in seq if ch not in ALPHABET_SET), None)
        if bad is not None or not seq:
            log.warning("skipping %s%r: non-canonical residue %r",
                        f"{source}:" if source else "", header, bad)
            continue
        kept.append((header, seq))
    return kept


def write_fasta(path, records, width: int = 60) -> None:
    """Write (header, sequence) pairs with lines wrapped at `width` columns."""
    path = Path(path)
    with open(path, "w") as fh:
        for header, seq in records:
            fh.write(f">{header}\n")
            for i in range(0, len(seq), width):
                fh.write(seq[i:i + width] + "\n")
