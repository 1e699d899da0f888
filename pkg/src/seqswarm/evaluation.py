"""Built-in structure evaluation.

This is a deliberately lightweight stand-in for a real fold-and-score
pipeline: a propensity-vote secondary-structure assignment, an idealized
Cα backbone, and a residue-class contact energy. It keeps the engine fully
deterministic and network-free; production-grade structures and energies
require attaching a real pipeline over the bridge protocol
(see `seqswarm.bridge`).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import anm as anm_mod
from .core import ProteinSequence
from .scorers import (FrequencySpectrum, ScorerSpec, needs_frequencies,
                      objective_score)
from .tables import PROPENSITY, REFERENCE_ENERGY, primary_class

SS_LABELS = "HEL"

# propensity-vote thresholds and minimum run lengths
_VOTE_THRESHOLD = 1.03
_MIN_RUN = {"H": 4, "E": 3}

# idealized geometry constants (Å, degrees)
_HELIX_RISE = 1.5
_HELIX_RADIUS = 2.3
_HELIX_TWIST = math.radians(100.0)  # 3.6 residues per turn
_STRAND_RISE = 3.5
_STRAND_ZIG = math.radians(10.0)
_STEP = 3.8
_CLASH_DIST = 3.2
_CONTACT_DIST = 8.0
_MIN_SEQ_SEP = 3


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    """Fold-derived facts about one sequence; lower total_energy is better."""

    total_energy: float
    energy_terms: dict[str, float]
    ss_string: str
    ca_coords: np.ndarray | None
    objective_score: float
    frequencies: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (0.0 <= self.objective_score <= 1.0):
            raise ValueError(f"objective_score {self.objective_score} outside [0, 1]")
        if any(c not in SS_LABELS for c in self.ss_string):
            raise ValueError("ss_string must be over H/E/L")
        if self.ca_coords is not None:
            coords = np.asarray(self.ca_coords, dtype=float)
            if coords.shape != (len(self.ss_string), 3):
                raise ValueError(f"ca_coords shape {coords.shape} != ({len(self.ss_string)}, 3)")
            coords.flags.writeable = False
            object.__setattr__(self, "ca_coords", coords)
        if self.frequencies is not None:
            freqs = tuple(float(f) for f in self.frequencies)
            if any(not (0.0 < f <= 1.0) for f in freqs):
                raise ValueError("frequencies must lie in (0, 1]")
            if list(freqs) != sorted(freqs):
                raise ValueError("frequencies must be ascending")
            object.__setattr__(self, "frequencies", freqs)

    def __eq__(self, other):
        if not isinstance(other, EvaluationResult):
            return NotImplemented
        coords_eq = (
            (self.ca_coords is None and other.ca_coords is None)
            or (self.ca_coords is not None and other.ca_coords is not None
                and np.array_equal(self.ca_coords, other.ca_coords))
        )
        return (coords_eq
                and self.total_energy == other.total_energy
                and self.energy_terms == other.energy_terms
                and self.ss_string == other.ss_string
                and self.objective_score == other.objective_score
                and self.frequencies == other.frequencies)


def assign_ss(sequence) -> str:
    """Per-residue H/E/L labels from a smoothed propensity vote.

    Window-5 means of helix and sheet propensity decide each label; a label
    needs its mean above 1.03 and above the competing mean. Helix runs
    shorter than 4 and sheet runs shorter than 3 are demoted to loop.
    """
    seq = str(sequence)
    n = len(seq)
    helix = [PROPENSITY["H"][aa] for aa in seq]
    sheet = [PROPENSITY["E"][aa] for aa in seq]

    raw = []
    for i in range(n):
        lo, hi = max(0, i - 2), min(n, i + 3)
        h = sum(helix[lo:hi]) / (hi - lo)
        e = sum(sheet[lo:hi]) / (hi - lo)
        if h > _VOTE_THRESHOLD and h > e:
            raw.append("H")
        elif e > _VOTE_THRESHOLD and e > h:
            raw.append("E")
        else:
            raw.append("L")

    # demote too-short runs
    labels = raw[:]
    i = 0
    while i < n:
        j = i
        while j < n and raw[j] == raw[i]:
            j += 1
        if raw[i] in _MIN_RUN and (j - i) < _MIN_RUN[raw[i]]:
            for t in range(i, j):
                labels[t] = "L"
        i = j
    return "".join(labels)


def _rotation_to(direction: np.ndarray) -> np.ndarray:
    """Rotation matrix taking the +z axis onto `direction` (unit)."""
    z = np.array([0.0, 0.0, 1.0])
    d = direction / np.linalg.norm(direction)
    v = np.cross(z, d)
    c = float(np.dot(z, d))
    if np.linalg.norm(v) < 1e-12:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * (1.0 / (1.0 + c))


def _random_unit(rng) -> np.ndarray:
    while True:
        v = rng.normal(size=3)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            return v / norm


def _segment_local(label: str, m: int) -> np.ndarray:
    """Local coordinates of a run of m residues with one SS label, axis +z."""
    if label == "H":
        t = np.arange(m)
        return np.stack([
            _HELIX_RADIUS * np.cos(_HELIX_TWIST * t),
            _HELIX_RADIUS * np.sin(_HELIX_TWIST * t),
            _HELIX_RISE * t,
        ], axis=1)
    if label == "E":
        t = np.arange(m)
        amp = _STRAND_RISE * math.tan(_STRAND_ZIG) / 2.0
        return np.stack([
            amp * np.where(t % 2 == 0, 1.0, -1.0),
            np.zeros(m),
            _STRAND_RISE * t,
        ], axis=1)
    # loop: lazily built by the caller (needs global self-avoidance)
    raise AssertionError("loop segments are walked, not templated")


def build_backbone(sequence, ss_string: str) -> np.ndarray:
    """Idealized Cα trace for a sequence with known H/E/L labels.

    Helix runs follow 3.6-residue/turn geometry (1.5 Å rise, 2.3 Å radius),
    strand runs extend at 3.5 Å rise with a ±10° zig-zag, and loop runs take
    a deterministic self-avoiding walk with 3.8 Å steps seeded by a hash of
    the sequence. Consecutive Cα distances stay within 3.8 ± 0.4 Å.
    """
    seq = str(sequence)
    n = len(seq)
    if len(ss_string) != n:
        raise ValueError("sequence and ss_string lengths differ")

    seed = int.from_bytes(hashlib.sha256(seq.encode()).digest()[:8], "big")
    rng = np.random.default_rng(seed)

    points: list[np.ndarray] = []
    direction = np.array([0.0, 0.0, 1.0])

    def place_segment(local: np.ndarray):
        nonlocal direction
        rot = _rotation_to(direction)
        shifted = (local - local[0]) @ rot.T
        if points:
            start = points[-1] + direction * _STEP
        else:
            start = np.zeros(3)
        for p in shifted:
            points.append(start + p)
        if len(shifted) >= 2:
            seg_dir = shifted[-1] - shifted[-2]
            direction = seg_dir / np.linalg.norm(seg_dir)

    def walk_segment(m: int):
        nonlocal direction
        for _ in range(m):
            if not points:
                points.append(np.zeros(3))
                continue
            best, best_clearance = None, -1.0
            prior = np.asarray(points[:-1]) if len(points) > 1 else None
            for _attempt in range(50):
                # deflect the current heading by 20-75 degrees at random azimuth
                axis = _random_unit(rng)
                perp = axis - direction * float(np.dot(axis, direction))
                norm = np.linalg.norm(perp)
                if norm < 1e-9:
                    continue
                perp /= norm
                angle = rng.uniform(math.radians(20), math.radians(75))
                new_dir = direction * math.cos(angle) + perp * math.sin(angle)
                candidate = points[-1] + new_dir * _STEP
                clearance = (float(np.min(np.linalg.norm(prior - candidate, axis=1)))
                             if prior is not None else np.inf)
                if clearance >= 3.4:
                    points.append(candidate)
                    direction = new_dir
                    break
                if clearance > best_clearance:
                    best, best_clearance = (candidate, new_dir), clearance
            else:
                candidate, new_dir = best  # crowded: take the most distant option
                points.append(candidate)
                direction = new_dir

    i = 0
    while i < n:
        j = i
        while j < n and ss_string[j] == ss_string[i]:
            j += 1
        label, m = ss_string[i], j - i
        if label == "L":
            walk_segment(m)
        else:
            place_segment(_segment_local(label, m))
        # bend between segments so successive runs do not stay collinear
        if j < n:
            axis = _random_unit(rng)
            perp = axis - direction * float(np.dot(axis, direction))
            norm = np.linalg.norm(perp)
            if norm > 1e-9:
                perp /= norm
                bend = rng.uniform(math.radians(30), math.radians(80))
                direction = direction * math.cos(bend) + perp * math.sin(bend)
        i = j

    return np.asarray(points)


def _pair_weight(a: str, b: str) -> float:
    ca, cb = primary_class(a), primary_class(b)
    hydro_a, hydro_b = ca == "hydrophobic", cb == "hydrophobic"
    if hydro_a and hydro_b:
        return -1.0
    if hydro_a != hydro_b:
        return 0.3
    charges = {"positive": 1, "negative": -1}
    if ca in charges and cb in charges:
        return -0.5 if charges[ca] != charges[cb] else 0.5
    return 0.0


def contact_energy(sequence, ca_coords) -> tuple[float, dict[str, float]]:
    """Residue-class contact energy over the Cα trace; lower is better.

    Pairs at sequence separation >= 3 and distance < 8 Å contribute a class
    weight (hydrophobic pairs favorable); any pair closer than 3.2 Å adds a
    flat clash penalty; a per-residue reference term is always added.
    """
    seq = str(sequence)
    coords = np.asarray(ca_coords, dtype=float)
    n = len(seq)
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)

    contact = 0.0
    clash = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] < _CLASH_DIST:
                clash += 10.0
            if j - i >= _MIN_SEQ_SEP and d[i, j] < _CONTACT_DIST:
                contact += _pair_weight(seq[i], seq[j])
    reference = sum(REFERENCE_ENERGY[aa] for aa in seq)

    terms = {"contact": contact, "clash": clash, "reference": reference}
    return contact + clash + reference, terms


class EvaluationError(Exception):
    """Base for anything that aborts one sequence evaluation."""


class BuiltinEvaluator:
    """Deterministic offline evaluator composing SS, backbone, energy, and scoring."""

    def __init__(self, scorer: ScorerSpec):
        self.scorer = scorer

    def evaluate(self, sequence: ProteinSequence) -> EvaluationResult:
        ss = assign_ss(sequence)
        coords = build_backbone(sequence, ss)
        total, terms = contact_energy(sequence, coords)

        frequencies = None
        if needs_frequencies(self.scorer):
            spec: FrequencySpectrum = self.scorer
            frequencies = anm_mod.anm_frequencies(
                coords, cutoff=spec.cutoff, gamma=spec.gamma, k=len(spec.target))
        score = objective_score(self.scorer, sequence, ss_string=ss,
                                ca_coords=coords, frequencies=frequencies,
                                energy_terms=terms)
        return EvaluationResult(
            total_energy=total, energy_terms=terms, ss_string=ss,
            ca_coords=coords, objective_score=score, frequencies=frequencies)

    def close(self):
        pass


def evaluate_builtin(sequence, scorer: ScorerSpec) -> EvaluationResult:
    """One-shot convenience wrapper around BuiltinEvaluator."""
    return BuiltinEvaluator(scorer).evaluate(sequence)
