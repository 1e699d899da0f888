"""seqswarm: position-per-agent swarm engine for protein sequence design."""

from .core import (DesignObjective, InvalidResidue, IterationRecord,
                   LengthMismatch, Proposal, ProteinSequence, hamming,
                   parse_sequence)
from .engine import (RunConfig, accept_decision, resume_campaign,
                     run_campaign)
from .evaluation import EvaluationResult, evaluate_builtin

__version__ = "0.1.0"

__all__ = [
    "DesignObjective", "EvaluationResult", "InvalidResidue",
    "IterationRecord", "LengthMismatch", "Proposal", "ProteinSequence",
    "RunConfig", "accept_decision", "evaluate_builtin", "hamming",
    "parse_sequence", "resume_campaign", "run_campaign", "__version__",
]
