"""Fold, energy, and secondary-structure backends.

Each backend either shells out to a third-party tool through a configurable
command template or produces deterministic synthetic results (mock mode).
Mock results are a pure function of the sequence, so repeated requests are
bit-identical and the bridge is usable without any scientific software.
"""

from __future__ import annotations

import hashlib
import math
import shlex
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np


class BackendError(Exception):
    """Turned into a per-request protocol error; the serve loop continues."""


_THREE_TO_ONE = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
}


def command_available(template: str) -> bool:
    if not template.strip():
        return False
    executable = shlex.split(template)[0]
    return shutil.which(executable) is not None


def warn(message: str) -> None:
    print(f"foldbridge: {message}", file=sys.stderr, flush=True)


# ----- mock fold -------------------------------------------------------------

def mock_fold(sequence: str) -> np.ndarray:
    """Deterministic pseudo-fold: a perturbed 3.8 Å-step spiral seeded by the sequence."""
    seed = int.from_bytes(hashlib.sha256(sequence.encode()).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    n = len(sequence)
    coords = np.zeros((n, 3))
    twist = math.radians(100.0) + rng.uniform(-0.2, 0.2)
    radius = 2.3 + rng.uniform(-0.3, 0.3)
    rise = 1.5 + rng.uniform(-0.2, 0.2)
    for i in range(n):
        coords[i] = (radius * math.cos(twist * i),
                     radius * math.sin(twist * i),
                     rise * i)
    coords += rng.normal(scale=0.15, size=(n, 3))
    return coords


def external_fold(sequence: str, template: str, workdir: Path,
                  timeout: float) -> np.ndarray:
    """Run a folding command; template gets {fasta} and {pdb} substituted."""
    workdir.mkdir(parents=True, exist_ok=True)
    tag = hashlib.sha256(sequence.encode()).hexdigest()[:12]
    fasta = workdir / f"{tag}.fasta"
    pdb = workdir / f"{tag}.pdb"
    fasta.write_text(f">query\n{sequence}\n")
    argv = [part.format(fasta=fasta, pdb=pdb) for part in shlex.split(template)]
    try:
        subprocess.run(argv, check=True, timeout=timeout,
                       capture_output=True, text=True)
    except (subprocess.SubprocessError, OSError) as exc:
        raise BackendError(f"fold command failed: {exc}")
    if not pdb.exists():
        raise BackendError(f"fold command produced no PDB at {pdb}")
    return read_pdb_ca(pdb)


def read_pdb_ca(path) -> np.ndarray:
    coords = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("ATOM") and line[12:16].strip() == "CA":
                coords.append([float(line[30:38]), float(line[38:46]),
                               float(line[46:54])])
    if not coords:
        raise BackendError(f"{path}: no Cα records")
    return np.asarray(coords)


# ----- energy ----------------------------------------------------------------

_HYDROPHOBIC = set("AVLIMFWC")


def mock_energy(sequence: str, coords: np.ndarray) -> tuple[float, dict[str, float]]:
    """Deterministic contact-count score; lower for compact hydrophobic-rich folds."""
    n = len(sequence)
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=-1)
    contact = 0.0
    for i in range(n):
        for j in range(i + 3, n):
            if d[i, j] < 8.0:
                favorable = sequence[i] in _HYDROPHOBIC and sequence[j] in _HYDROPHOBIC
                contact += -0.8 if favorable else -0.1
    compactness = -0.05 * n + 0.01 * float(d.max())
    terms = {"contact": contact, "compactness": compactness}
    return contact + compactness, terms


def external_energy(pdb_path: Path, template: str,
                    timeout: float) -> tuple[float, dict[str, float]]:
    """Run a scoring command printing a single number; template gets {pdb}."""
    argv = [part.format(pdb=pdb_path) for part in shlex.split(template)]
    try:
        proc = subprocess.run(argv, check=True, timeout=timeout,
                              capture_output=True, text=True)
        total = float(proc.stdout.strip().split()[-1])
    except (subprocess.SubprocessError, OSError, ValueError, IndexError) as exc:
        raise BackendError(f"energy command failed: {exc}")
    return total, {"external_total": total}


# ----- secondary structure ---------------------------------------------------

def ss_from_coords(coords: np.ndarray) -> str:
    """Three-state labels from Cα(i)..Cα(i+3) distances.

    A canonical helix puts residue i+3 about 5 Å away; an extended strand
    about 10 Å. Runs shorter than 4 (H) or 3 (E) fall back to loop.
    """
    n = len(coords)
    if n < 4:
        return "L" * n
    raw = []
    for i in range(n):
        if i + 3 < n:
            span = float(np.linalg.norm(coords[i + 3] - coords[i]))
        else:
            span = float(np.linalg.norm(coords[n - 1] - coords[max(0, n - 4)]))
        if span < 6.5:
            raw.append("H")
        elif span > 9.5:
            raw.append("E")
        else:
            raw.append("L")
    labels = raw[:]
    minimum = {"H": 4, "E": 3}
    i = 0
    while i < n:
        j = i
        while j < n and raw[j] == raw[i]:
            j += 1
        if raw[i] in minimum and (j - i) < minimum[raw[i]]:
            for t in range(i, j):
                labels[t] = "L"
        i = j
    return "".join(labels)


def external_ss(pdb_path: Path, template: str, timeout: float, n: int) -> str:
    """Run an SS-assignment command printing one H/E/L-per-residue line."""
    argv = [part.format(pdb=pdb_path) for part in shlex.split(template)]
    try:
        proc = subprocess.run(argv, check=True, timeout=timeout,
                              capture_output=True, text=True)
    except (subprocess.SubprocessError, OSError) as exc:
        raise BackendError(f"ss command failed: {exc}")
    ss = proc.stdout.strip().splitlines()[-1].strip() if proc.stdout.strip() else ""
    ss = "".join("H" if c in "HGI" else "E" if c in "EB" else "L" for c in ss)
    if len(ss) != n:
        raise BackendError(f"ss command returned {len(ss)} labels for {n} residues")
    return ss


# ----- normal modes ----------------------------------------------------------

def mode_frequencies(coords: np.ndarray, cutoff: float, k: int) -> list[float]:
    """Normalized low-mode frequencies from a uniform-spring elastic network."""
    n = len(coords)
    if n < 4:
        raise BackendError("need at least 4 residues for mode analysis")
    hessian = np.zeros((3 * n, 3 * n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            rij = coords[j] - coords[i]
            d2 = float(rij @ rij)
            if d2 >= cutoff * cutoff or d2 == 0.0:
                continue
            block = -np.outer(rij, rij) / d2
            hessian[3 * i:3 * i + 3, 3 * j:3 * j + 3] += block
            hessian[3 * i:3 * i + 3, 3 * i:3 * i + 3] -= block
    eigenvalues = np.linalg.eigvalsh(hessian)
    zeros = int(np.sum(eigenvalues < 1e-8))
    if zeros > 6:
        raise BackendError("disconnected structure under the mode cutoff")
    nontrivial = eigenvalues[zeros:]
    if len(nontrivial) < k:
        raise BackendError(f"only {len(nontrivial)} non-trivial modes, requested {k}")
    freqs = np.sqrt(nontrivial[:k])
    freqs = freqs / freqs[-1]
    return [float(f) for f in freqs]
