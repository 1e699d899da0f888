"""Domain types shared by every other module.

A design campaign works on a fixed-length sequence over the 20 standard
amino acids; search is substitution-only, so length never changes once a
campaign starts. Everything here is an immutable value and safe to share
between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator

from .tables import ALPHABET, ALPHABET_SET

if TYPE_CHECKING:
    from .evaluation import EvaluationResult
    from .scorers import ScorerSpec

AMINO_ACIDS = ALPHABET


class InvalidResidue(ValueError):
    """A character outside the 20-letter alphabet (including B, Z, X, U)."""

    def __init__(self, position: int, char: str):
        super().__init__(f"invalid residue {char!r} at position {position}")
        self.position = position
        self.char = char


class LengthMismatch(ValueError):
    """Two sequences of different length were combined; they belong to different campaigns."""


@dataclass(frozen=True)
class ProteinSequence:
    """Fixed-length sequence over the standard amino-acid alphabet."""

    residues: str

    def __post_init__(self):
        for i, ch in enumerate(self.residues):
            if ch not in ALPHABET_SET:
                raise InvalidResidue(i, ch)
        if len(self.residues) < 2:
            raise ValueError("sequence must have at least 2 residues")

    @property
    def n(self) -> int:
        return len(self.residues)

    def __len__(self) -> int:
        return len(self.residues)

    def __iter__(self) -> Iterator[str]:
        return iter(self.residues)

    def __getitem__(self, i: int) -> str:
        return self.residues[i]

    def __str__(self) -> str:
        return self.residues


def parse_sequence(text: str) -> ProteinSequence:
    """Parse one-letter residue text, case-insensitive, into a ProteinSequence.

    Raises InvalidResidue (with the offending position and character) on any
    letter outside the canonical alphabet.
    """
    cleaned = text.strip().upper()
    if not cleaned:
        raise ValueError("empty sequence text")
    for i, ch in enumerate(cleaned):
        if ch not in ALPHABET_SET:
            raise InvalidResidue(i, ch)
    return ProteinSequence(cleaned)


def render(seq: ProteinSequence) -> str:
    """Inverse of parse_sequence."""
    return seq.residues


def hamming(a, b) -> int:
    """Number of differing positions between two equal-length sequences."""
    sa, sb = str(a), str(b)
    if len(sa) != len(sb):
        raise LengthMismatch(f"length {len(sa)} vs {len(sb)}")
    return sum(x != y for x, y in zip(sa, sb))


@dataclass(frozen=True)
class DesignObjective:
    """What the campaign optimizes: free text shown to agents plus a scorer spec."""

    name: str
    prompt_text: str
    scorer: "ScorerSpec"

    def __post_init__(self):
        if not self.name or not self.prompt_text:
            raise ValueError("objective name and prompt_text must be non-empty")


@dataclass(frozen=True)
class Proposal:
    """One agent's output: a single-residue substitution with its rationale.

    fallback marks proposals synthesized after a transport or parse failure;
    those always re-propose the current residue.
    """

    position: int
    proposed_value: str
    reasoning: str
    fallback: bool = False

    def __post_init__(self):
        if self.proposed_value not in ALPHABET_SET:
            raise InvalidResidue(self.position, self.proposed_value)
        if self.position < 0:
            raise ValueError("position must be >= 0")


def apply_proposals(seq: ProteinSequence, proposals: list[Proposal]) -> ProteinSequence:
    """Assemble the next candidate sequence from one proposal per position."""
    if len(proposals) != seq.n:
        raise ValueError(f"need {seq.n} proposals, got {len(proposals)}")
    residues = list(seq.residues)
    for p in proposals:
        if not 0 <= p.position < seq.n:
            raise ValueError(f"proposal position {p.position} out of range")
        residues[p.position] = p.proposed_value
    return ProteinSequence("".join(residues))


@dataclass(frozen=True)
class IterationRecord:
    """One loop step: the candidate, its evaluation, and the accept decision.

    evaluation is None when the evaluator failed; such iterations consume
    budget but leave the campaign state untouched.
    """

    iteration: int
    proposed_sequence: ProteinSequence
    evaluation: "EvaluationResult | None"
    accepted: bool
    current_best: ProteinSequence
    wall_time_ms: float
    changed_positions: tuple[int, ...] = field(default=())
    fallback_positions: tuple[int, ...] = field(default=())
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.evaluation is None
