"""Per-position agent context built from the last accepted structure.

Each agent sees its linear sequence neighbors, spatial contacts from the
Cα distance matrix, a contact-number exposure class, and its
secondary-structure label. Before any structure exists (iteration 1) a
sentinel snapshot stands in: no spatial neighbors, all exposure
Intermediate, all labels L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ProteinSequence
from .memory import MemoryDigest

BURIED = "Buried"
INTERMEDIATE = "Intermediate"
EXPOSED = "Exposed"

DEFAULT_LINEAR_RADIUS = 2
DEFAULT_SPATIAL_CUTOFF = 8.0

# contact-number exposure rule: neighbors within 10 Å, buried > 14, exposed < 9
_EXPOSURE_SHELL = 10.0
_BURIED_MIN = 14
_EXPOSED_MAX = 9


class MissingCoordinates(ValueError):
    """The evaluation carries no structure to build a snapshot from."""


class DegenerateStructure(ValueError):
    """Two residues share (numerically) the same coordinates."""


@dataclass(frozen=True)
class StructureSnapshot:
    """Immutable geometric view of one evaluated structure."""

    ca_coords: np.ndarray | None
    distance_matrix: np.ndarray | None
    ss_string: str
    exposure: tuple[str, ...]
    sentinel: bool = False

    def __post_init__(self):
        if len(self.exposure) != len(self.ss_string):
            raise ValueError("exposure and ss_string lengths differ")
        if self.sentinel:
            return
        if self.ca_coords is None or self.distance_matrix is None:
            raise MissingCoordinates("non-sentinel snapshot requires coordinates")
        for arr in (self.ca_coords, self.distance_matrix):
            np.asarray(arr).flags.writeable = False

    @property
    def n(self) -> int:
        return len(self.ss_string)


def sentinel_snapshot(n: int) -> StructureSnapshot:
    """The no-structure-yet stand-in used before the first fold."""
    return StructureSnapshot(
        ca_coords=None, distance_matrix=None,
        ss_string="L" * n, exposure=(INTERMEDIATE,) * n, sentinel=True)


def _exposure_class(contacts: int) -> str:
    if contacts > _BURIED_MIN:
        return BURIED
    if contacts < _EXPOSED_MAX:
        return EXPOSED
    return INTERMEDIATE


def build_snapshot(evaluation) -> StructureSnapshot:
    """Repackage an EvaluationResult into the geometric snapshot agents read."""
    if evaluation.ca_coords is None:
        raise MissingCoordinates("evaluation carries no coordinates")
    coords = np.asarray(evaluation.ca_coords, dtype=float)
    n = coords.shape[0]
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)

    off_diag = d[~np.eye(n, dtype=bool)]
    if n > 1 and float(off_diag.min()) < 1e-6:
        raise DegenerateStructure("two residues share coordinates")

    shell_counts = np.sum((d < _EXPOSURE_SHELL) & (d > 0.0), axis=1)
    exposure = tuple(_exposure_class(int(c)) for c in shell_counts)
    return StructureSnapshot(
        ca_coords=coords, distance_matrix=d,
        ss_string=evaluation.ss_string, exposure=exposure)


@dataclass(frozen=True)
class ResidueContext:
    """Everything one agent sees about its position."""

    position: int
    current: str
    linear_neighbors: tuple[tuple[int, str], ...]   # (offset, residue)
    spatial_neighbors: tuple[tuple[int, float], ...]  # (index, distance Å), ascending
    exposure: str
    ss_label: str
    ss_window: str
    memory_digest: MemoryDigest
    from_sentinel: bool = False


def residue_context(snapshot: StructureSnapshot, sequence: ProteinSequence,
                    i: int, r: int = DEFAULT_LINEAR_RADIUS,
                    cutoff: float = DEFAULT_SPATIAL_CUTOFF,
                    digest: MemoryDigest | None = None) -> ResidueContext:
    """Assemble the context for position i.

    Linear neighbors cover offsets -r..-1 and +1..+r, clipped at the chain
    ends. Spatial neighbors are contacts under `cutoff` excluding the linear
    window (|j - i| > r), sorted by distance.
    """
    n = sequence.n
    if not 0 <= i < n:
        raise IndexError(f"position {i} out of range for n={n}")
    if r < 1:
        raise ValueError("linear radius must be >= 1")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")

    linear = tuple(
        (off, sequence[i + off])
        for off in range(-r, r + 1)
        if off != 0 and 0 <= i + off < n
    )

    spatial: tuple[tuple[int, float], ...] = ()
    if not snapshot.sentinel:
        d = snapshot.distance_matrix
        hits = [
            (j, float(d[i, j]))
            for j in range(n)
            if abs(j - i) > r and d[i, j] < cutoff
        ]
        hits.sort(key=lambda t: (t[1], t[0]))
        spatial = tuple(hits)

    lo, hi = max(0, i - r), min(n, i + r + 1)
    return ResidueContext(
        position=i,
        current=sequence[i],
        linear_neighbors=linear,
        spatial_neighbors=spatial,
        exposure=snapshot.exposure[i],
        ss_label=snapshot.ss_string[i],
        ss_window=snapshot.ss_string[lo:hi],
        memory_digest=digest if digest is not None else MemoryDigest.empty(i),
        from_sentinel=snapshot.sentinel,
    )


_THREE_TO_ONE = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
}


def read_pdb_ca(path) -> tuple[str, np.ndarray]:
    """Read Cα coordinates (and the one-letter sequence) from PDB ATOM records."""
    letters: list[str] = []
    coords: list[list[float]] = []
    with open(path) as fh:
        for line in fh:
            if not line.startswith("ATOM"):
                continue
            if line[12:16].strip() != "CA":
                continue
            res = line[17:20].strip()
            letters.append(_THREE_TO_ONE.get(res, "X"))
            coords.append([float(line[30:38]), float(line[38:46]), float(line[46:54])])
    if not coords:
        raise ValueError(f"{path}: no Cα ATOM records found")
    return "".join(letters), np.asarray(coords)
