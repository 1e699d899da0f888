"""Anisotropic network model normal-mode frequencies from a Cα trace.

The model connects every Cα pair closer than a cutoff with a uniform
spring. Mode frequencies are the square roots of the Hessian eigenvalues;
the six smallest eigenvalues of any connected single chain are the
rigid-body translations and rotations and are numerically zero.
"""

from __future__ import annotations

import numpy as np

RIGID_BODY_TOL = 1e-8


class DisconnectedStructure(ValueError):
    """More than six near-zero modes: the contact network is not a single connected body."""


class InsufficientModes(ValueError):
    """Fewer non-trivial modes exist than were requested."""


def anm_hessian(ca_coords, cutoff: float = 15.0, gamma: float = 1.0) -> np.ndarray:
    """Build the 3n x 3n ANM Hessian for a Cα trace.

    Off-diagonal 3x3 block for a contacting pair (i, j):
        H_ij = -(gamma / d_ij^2) * outer(r_j - r_i, r_j - r_i)
    Diagonal blocks make every row sum to zero.
    """
    coords = np.asarray(ca_coords, dtype=float)
    n = coords.shape[0]
    diffs = coords[None, :, :] - coords[:, None, :]          # (n, n, 3), row i -> r_j - r_i
    d2 = np.einsum("ijk,ijk->ij", diffs, diffs)
    contact = (d2 < cutoff * cutoff) & (d2 > 0.0)

    blocks = np.zeros((n, n, 3, 3))
    ii, jj = np.nonzero(contact)
    blocks[ii, jj] = -gamma * np.einsum(
        "pk,pl->pkl", diffs[ii, jj], diffs[ii, jj]
    ) / d2[ii, jj][:, None, None]
    # diagonal blocks: negative sum of the row's off-diagonal blocks
    blocks[np.arange(n), np.arange(n)] = -blocks.sum(axis=1)

    return blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)


def anm_frequencies(ca_coords, cutoff: float = 15.0, gamma: float = 1.0,
                    k: int = 6) -> tuple[float, ...]:
    """Normalized frequencies of the k lowest non-trivial ANM modes.

    Eigenvalues are sorted ascending, the six rigid-body modes
    (eigenvalue < 1e-8) are skipped, and the square roots of the next k
    eigenvalues are divided by their largest member, so the result is
    ascending, positive, and ends exactly at 1.0.

    Raises DisconnectedStructure if more than six near-zero modes appear,
    and InsufficientModes if fewer than k non-trivial modes exist.
    """
    coords = np.asarray(ca_coords, dtype=float)
    n = coords.shape[0]
    if n < 4:
        raise ValueError(f"need at least 4 residues, got {n}")
    if k < 1:
        raise ValueError("k must be >= 1")

    hessian = anm_hessian(coords, cutoff=cutoff, gamma=gamma)
    eigenvalues = np.linalg.eigvalsh(hessian)

    zero_count = int(np.sum(eigenvalues < RIGID_BODY_TOL))
    if zero_count > 6:
        raise DisconnectedStructure(
            f"{zero_count} near-zero modes; structure is not connected under cutoff {cutoff}"
        )
    nontrivial = eigenvalues[zero_count:]
    if len(nontrivial) < k:
        raise InsufficientModes(f"only {len(nontrivial)} non-trivial modes, requested {k}")

    freqs = np.sqrt(nontrivial[:k])
    freqs = freqs / freqs[-1]
    return tuple(float(f) for f in freqs)
