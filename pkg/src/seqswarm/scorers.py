"""Objective scorers: map a sequence plus evaluation facts to a score in [0, 1].

Each scorer is a small frozen dataclass; `objective_score` dispatches on the
concrete type. Scorer specs serialize to tagged dicts for config files and
trajectory headers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import LengthMismatch
from .tables import METAL_COORDINATING, primary_class, resolve_class


class MissingField(ValueError):
    """The evaluation result lacks a field this scorer needs."""

    def __init__(self, name: str):
        super().__init__(f"scorer requires evaluation field {name!r}")
        self.name = name


@dataclass(frozen=True)
class SsComposition:
    """Match a per-position secondary-structure target; '.' positions are don't-care."""

    target: str

    def __post_init__(self):
        if not self.target or any(c not in "HEL." for c in self.target):
            raise ValueError("target must be a non-empty string over H/E/L/.")


@dataclass(frozen=True)
class FrequencySpectrum:
    """Match a target normalized vibrational-mode spectrum (cosine similarity)."""

    target: tuple[float, ...]
    cutoff: float = 15.0
    gamma: float = 1.0

    def __post_init__(self):
        if len(self.target) == 0:
            raise ValueError("target spectrum must be non-empty")
        if any(not (0.0 < t <= 1.0) for t in self.target):
            raise ValueError("target spectrum values must lie in (0, 1]")
        object.__setattr__(self, "target", tuple(float(t) for t in self.target))


@dataclass(frozen=True)
class PatternRule:
    """Residue at position i must belong to classes[i mod period].

    Classes are given as named classes ("hydrophobic") or literal letter sets
    ("G", "ACD"); names are kept for serialization and resolved lazily.
    """

    period: int
    classes: tuple[str, ...]

    def __post_init__(self):
        if self.period < 1 or len(self.classes) != self.period:
            raise ValueError("classes length must equal period (>= 1)")
        object.__setattr__(self, "classes", tuple(self.classes))
        for c in self.classes:
            resolve_class(c)  # fail fast on unknown class names

    def class_sets(self) -> tuple[frozenset[str], ...]:
        return tuple(resolve_class(c) for c in self.classes)


@dataclass(frozen=True)
class LocalSymmetry:
    """Interior residues whose left and right neighbors share a residue class."""


@dataclass(frozen=True)
class MetalPocket:
    """Reward metal-coordinating residues (C/H/M/D/E) forming a tight pocket."""

    min_coordinating: int = 4

    def __post_init__(self):
        if self.min_coordinating < 1:
            raise ValueError("min_coordinating must be >= 1")


ScorerSpec = SsComposition | FrequencySpectrum | PatternRule | LocalSymmetry | MetalPocket


def frequency_score(freqs, target) -> tuple[float, float]:
    """Cosine similarity and mean squared error between two positive spectra.

    The cosine is computed as sqrt(dot(f,t)^2 / (dot(f,f) * dot(t,t))) so that
    a spectrum compared against itself scores exactly 1.0.
    """
    f = np.asarray(freqs, dtype=float)
    t = np.asarray(target, dtype=float)
    if f.shape != t.shape:
        raise LengthMismatch(f"spectrum length {f.shape} vs target {t.shape}")
    if np.any(f <= 0) or np.any(t <= 0):
        raise ValueError("spectra must be strictly positive")
    ft = float(np.dot(f, t))
    cosine = math.sqrt(min(1.0, (ft * ft) / (float(np.dot(f, f)) * float(np.dot(t, t)))))
    mse = float(np.mean((f - t) ** 2))
    return cosine, mse


def _pocket_bonus(coordinating_idx: list[int], ca_coords, radius: float = 12.0) -> float:
    # 1.0 when some 4 coordinating residues sit mutually within `radius`, else 0.8
    if len(coordinating_idx) < 4:
        return 0.8
    coords = np.asarray(ca_coords, dtype=float)
    pts = coords[coordinating_idx]
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    close = d < radius
    for quad in itertools.combinations(range(len(coordinating_idx)), 4):
        if all(close[a, b] for a, b in itertools.combinations(quad, 2)):
            return 1.0
    return 0.8


def objective_score(spec: ScorerSpec, sequence, *, ss_string: str | None = None,
                    ca_coords=None, frequencies=None,
                    energy_terms: dict | None = None) -> float:
    """Score a sequence against a scorer spec using the supplied evaluation facts.

    Raises MissingField when a needed fact was not supplied.
    """
    seq = str(sequence)
    n = len(seq)

    if isinstance(spec, SsComposition):
        if ss_string is None:
            raise MissingField("ss_string")
        if len(spec.target) != len(ss_string):
            raise LengthMismatch(f"target length {len(spec.target)} vs ss {len(ss_string)}")
        constrained = [(t, s) for t, s in zip(spec.target, ss_string) if t != "."]
        if not constrained:
            return 1.0
        return sum(t == s for t, s in constrained) / len(constrained)

    if isinstance(spec, FrequencySpectrum):
        if frequencies is None:
            raise MissingField("frequencies")
        cosine, _ = frequency_score(frequencies, spec.target)
        return max(0.0, cosine)

    if isinstance(spec, PatternRule):
        sets = spec.class_sets()
        return sum(seq[i] in sets[i % spec.period] for i in range(n)) / n

    if isinstance(spec, LocalSymmetry):
        interior = range(1, n - 1)
        if not interior:
            return 0.0  # no interior positions, no symmetry evidence
        return sum(
            primary_class(seq[i - 1]) == primary_class(seq[i + 1]) for i in interior
        ) / len(interior)

    if isinstance(spec, MetalPocket):
        if ca_coords is None:
            raise MissingField("ca_coords")
        idx = [i for i, aa in enumerate(seq) if aa in METAL_COORDINATING]
        base = min(1.0, len(idx) / spec.min_coordinating)
        return base * _pocket_bonus(idx, ca_coords)

    raise TypeError(f"unknown scorer spec {type(spec).__name__}")


def needs_frequencies(spec: ScorerSpec) -> bool:
    return isinstance(spec, FrequencySpectrum)


def scorer_to_dict(spec: ScorerSpec) -> dict:
    if isinstance(spec, SsComposition):
        return {"type": "ss_composition", "target": spec.target}
    if isinstance(spec, FrequencySpectrum):
        return {"type": "frequency_spectrum", "target": list(spec.target),
                "cutoff": spec.cutoff, "gamma": spec.gamma}
    if isinstance(spec, PatternRule):
        return {"type": "pattern_rule", "period": spec.period, "classes": list(spec.classes)}
    if isinstance(spec, LocalSymmetry):
        return {"type": "local_symmetry"}
    if isinstance(spec, MetalPocket):
        return {"type": "metal_pocket", "min_coordinating": spec.min_coordinating}
    raise TypeError(f"unknown scorer spec {type(spec).__name__}")


def scorer_from_dict(d: dict) -> ScorerSpec:
    kind = d.get("type")
    if kind == "ss_composition":
        return SsComposition(target=d["target"])
    if kind == "frequency_spectrum":
        return FrequencySpectrum(target=tuple(d["target"]),
                                 cutoff=float(d.get("cutoff", 15.0)),
                                 gamma=float(d.get("gamma", 1.0)))
    if kind == "pattern_rule":
        return PatternRule(period=int(d["period"]), classes=tuple(d["classes"]))
    if kind == "local_symmetry":
        return LocalSymmetry()
    if kind == "metal_pocket":
        return MetalPocket(min_coordinating=int(d.get("min_coordinating", 4)))
    raise ValueError(f"unknown scorer type {kind!r}")
