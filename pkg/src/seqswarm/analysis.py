"""Post-hoc sequence-space analysis.

Sequences (from campaign trajectories or FASTA corpora) become
22-dimensional feature vectors: 20 amino-acid composition fractions, the
average molecular weight per residue, and the aromatic fraction. After
variance/correlation pruning, the vectors feed the t-SNE embedding and the
neighbor-joining tree; separate helpers export Hamming matrices, logo
counts, and convergence series as plot-ready CSV.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import InvalidResidue, LengthMismatch
from .fasta import canonical_records, read_fasta
from .njtree import TreeNode, newick, nj_tree
from .tables import ALPHABET, ALPHABET_SET, AVERAGE_RESIDUE_MASS, CLASSES, WATER_MASS
from .trajectory import read_trajectory
from .tsne import TooFewRows, TsneResult, tsne

log = logging.getLogger(__name__)

VARIANCE_THRESHOLD = 1e-7
CORRELATION_THRESHOLD = 0.95
NJ_SUBSAMPLE_LIMIT = 1000

FEATURE_NAMES = [f"comp_{aa}" for aa in ALPHABET] + ["mol_weight", "aromaticity"]


class EmptyInput(ValueError):
    pass


class DegenerateMatrix(ValueError):
    """Preprocessing removed every feature dimension."""


@dataclass(frozen=True)
class FeatureVector:
    """22 numeric features of one sequence plus its provenance label."""

    composition: tuple[float, ...]
    mol_weight: float
    aromaticity: float
    source_label: str = ""

    def values(self) -> np.ndarray:
        return np.array([*self.composition, self.mol_weight, self.aromaticity])


def features(sequence, source_label: str = "") -> FeatureVector:
    """Feature vector of one sequence (plain strings of length >= 1 accepted)."""
    seq = str(sequence)
    if not seq:
        raise EmptyInput("empty sequence")
    for i, ch in enumerate(seq):
        if ch not in ALPHABET_SET:
            raise InvalidResidue(i, ch)
    n = len(seq)
    composition = tuple(seq.count(aa) / n for aa in ALPHABET)
    mol_weight = (sum(AVERAGE_RESIDUE_MASS[aa] for aa in seq) + WATER_MASS) / n
    aromatic = sum(seq.count(aa) for aa in CLASSES["aromatic"]) / n
    return FeatureVector(composition=composition, mol_weight=mol_weight,
                         aromaticity=aromatic, source_label=source_label)


@dataclass
class FeatureMatrix:
    matrix: np.ndarray                  # rows x all original dims
    labels: list[str]
    kept_dims: list[int]                # indices into the original dims
    feature_names: list[str]

    @classmethod
    def from_sequences(cls, labeled_sequences) -> "FeatureMatrix":
        vectors = [features(seq, label) for label, seq in labeled_sequences]
        if not vectors:
            raise EmptyInput("no sequences")
        return cls(matrix=np.stack([v.values() for v in vectors]),
                   labels=[v.source_label for v in vectors],
                   kept_dims=list(range(len(FEATURE_NAMES))),
                   feature_names=list(FEATURE_NAMES))

    @classmethod
    def from_matrix(cls, matrix, labels=None, feature_names=None) -> "FeatureMatrix":
        matrix = np.asarray(matrix, dtype=float)
        n, d = matrix.shape
        return cls(matrix=matrix,
                   labels=list(labels) if labels else [""] * n,
                   kept_dims=list(range(d)),
                   feature_names=list(feature_names) if feature_names
                   else [f"f{i}" for i in range(d)])

    def kept(self) -> np.ndarray:
        return self.matrix[:, self.kept_dims]


def preprocess(fm: FeatureMatrix) -> FeatureMatrix:
    """Drop near-zero-variance dims, then the later member of any highly
    correlated pair (|Pearson r| >= 0.95), scanning in fixed dimension order."""
    if fm.matrix.shape[0] < 2:
        raise ValueError("preprocessing needs at least 2 rows")
    variances = fm.matrix.var(axis=0)
    kept = [i for i in fm.kept_dims if variances[i] >= VARIANCE_THRESHOLD]

    dropped: set[int] = set()
    for a_idx in range(len(kept)):
        if kept[a_idx] in dropped:
            continue
        for b_idx in range(a_idx + 1, len(kept)):
            if kept[b_idx] in dropped:
                continue
            a, b = fm.matrix[:, kept[a_idx]], fm.matrix[:, kept[b_idx]]
            with np.errstate(invalid="ignore"):
                r = np.corrcoef(a, b)[0, 1]
            if np.isfinite(r) and abs(r) >= CORRELATION_THRESHOLD:
                dropped.add(kept[b_idx])
    kept = [i for i in kept if i not in dropped]
    if not kept:
        raise DegenerateMatrix("all feature dimensions were dropped")
    return FeatureMatrix(matrix=fm.matrix, labels=fm.labels, kept_dims=kept,
                         feature_names=fm.feature_names)


def euclidean_distances(fm: FeatureMatrix) -> np.ndarray:
    """Pairwise Euclidean distances over the kept dimensions."""
    X = fm.kept()
    n = X.shape[0]
    d = np.zeros((n, n))
    for i in range(n):
        diff = X[i + 1:] - X[i]
        row = np.sqrt(np.sum(diff * diff, axis=1))
        d[i, i + 1:] = row
        d[i + 1:, i] = row
    return d


def embed(fm: FeatureMatrix, perplexity_cap: float = 30.0, max_iter: int = 1000,
          seed: int = 0) -> TsneResult:
    if fm.matrix.shape[0] < 4:
        raise TooFewRows(f"need at least 4 rows, got {fm.matrix.shape[0]}")
    return tsne(fm.kept(), perplexity_cap=perplexity_cap, max_iter=max_iter,
                seed=seed)


def subsample_indices(n: int, limit: int = NJ_SUBSAMPLE_LIMIT, seed: int = 0) -> list[int]:
    """Deterministic seeded subsample to `limit`, preserving original order."""
    if n <= limit:
        return list(range(n))
    rng = np.random.default_rng(seed)
    picked = rng.choice(n, size=limit, replace=False)
    return sorted(int(i) for i in picked)


def feature_tree(fm: FeatureMatrix, seed: int = 0,
                 limit: int = NJ_SUBSAMPLE_LIMIT) -> tuple[TreeNode, list[int]]:
    """NJ tree on feature-space Euclidean distances, subsampled when large.

    Leaf names are '<label>|<row index>'; the tree is rooted at the first
    kept sequence. Returns (tree, kept row indices).
    """
    idx = subsample_indices(fm.matrix.shape[0], limit=limit, seed=seed)
    sub = FeatureMatrix(matrix=fm.matrix[idx], labels=[fm.labels[i] for i in idx],
                        kept_dims=fm.kept_dims, feature_names=fm.feature_names)
    dist = euclidean_distances(sub)
    names = [_leaf_name(fm.labels[i], i) for i in idx]
    return nj_tree(dist, names=names), idx


def _leaf_name(label: str, index: int) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in label)
    return f"{safe}|{index}" if safe else f"seq|{index}"


def hamming_matrix(sequences) -> np.ndarray:
    """Pairwise Hamming distances over an ordered sequence list."""
    seqs = [str(s) for s in sequences]
    if not seqs:
        raise EmptyInput("no sequences")
    n0 = len(seqs[0])
    if any(len(s) != n0 for s in seqs):
        raise LengthMismatch("sequences have differing lengths")
    arr = np.array([list(s) for s in seqs])
    m = len(seqs)
    out = np.zeros((m, m), dtype=int)
    for i in range(m):
        out[i] = np.sum(arr != arr[i], axis=1)
    return out


def logo_counts(sequences) -> np.ndarray:
    """Per-position amino-acid counts: (sequence length) x 20 matrix."""
    seqs = [str(s) for s in sequences]
    if not seqs:
        raise EmptyInput("no sequences")
    n0 = len(seqs[0])
    if any(len(s) != n0 for s in seqs):
        raise LengthMismatch("sequences have differing lengths")
    index = {aa: k for k, aa in enumerate(ALPHABET)}
    counts = np.zeros((n0, len(ALPHABET)), dtype=int)
    for s in seqs:
        for pos, aa in enumerate(s):
            counts[pos, index[aa]] += 1
    return counts


def convergence_series(path) -> list[tuple[int, float | None, float | None, bool]]:
    """(iteration, total_energy, objective_score, accepted) per record."""
    data = read_trajectory(path)
    return [(rec["iteration"], rec["total_energy"], rec["objective_score"],
             rec["accepted"]) for rec in data.records]


# ----- input loading --------------------------------------------------------

def trajectory_sequences(path, deduplicate: bool = False) -> list[str]:
    """Per-iteration proposed sequences of a trajectory, optionally de-duplicated
    (first occurrence kept)."""
    data = read_trajectory(path)
    seqs = [rec["proposed_sequence"] for rec in data.records]
    if deduplicate:
        seen = set()
        unique = []
        for s in seqs:
            if s not in seen:
                seen.add(s)
                unique.append(s)
        return unique
    return seqs


def load_source(path, label: str, deduplicate: bool = True) -> list[tuple[str, str]]:
    """Load (label, sequence) pairs from a trajectory file or a FASTA corpus.

    Trajectories are recognized by their header line; FASTA records with
    non-canonical residues are skipped with a logged warning.
    """
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    if first.startswith(">"):
        records = canonical_records(read_fasta(path), source=str(path))
        seqs = [seq for _, seq in records]
        if deduplicate:
            seen = set()
            seqs = [s for s in seqs if not (s in seen or seen.add(s))]
        return [(label, s) for s in seqs]
    return [(label, s) for s in trajectory_sequences(path, deduplicate=deduplicate)]


# ----- CSV / Newick output --------------------------------------------------

def _write_with_header(path, header_meta: dict, write_body) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        meta = " ".join(f"{k}={v}" for k, v in header_meta.items())
        fh.write(f"# seqswarm {meta}\n")
        write_body(fh)


def write_embedding_csv(path, result: TsneResult, labels: list[str],
                        meta: dict) -> None:
    def body(fh):
        writer = csv.writer(fh)
        writer.writerow(["label", "tsne1", "tsne2"])
        for label, (x, y) in zip(labels, result.embedding):
            writer.writerow([label, f"{x:.6f}", f"{y:.6f}"])

    _write_with_header(path, meta, body)


def write_matrix_csv(path, matrix: np.ndarray, meta: dict) -> None:
    def body(fh):
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow(list(row))

    _write_with_header(path, meta, body)


def write_logo_csv(path, counts: np.ndarray, meta: dict) -> None:
    def body(fh):
        writer = csv.writer(fh)
        writer.writerow(["position", *ALPHABET])
        for pos, row in enumerate(counts):
            writer.writerow([pos, *row.tolist()])

    _write_with_header(path, meta, body)


def write_convergence_csv(path, rows, meta: dict) -> None:
    def body(fh):
        writer = csv.writer(fh)
        writer.writerow(["iteration", "total_energy", "objective_score", "accepted"])
        for iteration, energy, score, accepted in rows:
            writer.writerow([
                iteration,
                "" if energy is None else energy,
                "" if score is None else score,
                accepted,
            ])

    _write_with_header(path, meta, body)


def write_newick(path, tree: TreeNode, meta: dict) -> None:
    def body(fh):
        fh.write(newick(tree) + "\n")

    _write_with_header(path, meta, body)
