"""Exact t-SNE with the classic gradient-descent schedule.

Minimizes the Kullback-Leibler divergence between pairwise similarities in
feature space (Gaussian kernels calibrated per point to a target
perplexity) and in the 2D embedding (Student-t kernel). The optimizer uses
early exaggeration, a momentum switch, and per-parameter gains; the KL
objective against the unexaggerated P is tracked every iteration so
convergence can be audited at fixed checkpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


class TooFewRows(ValueError):
    """t-SNE needs at least 4 rows."""


def effective_perplexity(n_rows: int, cap: float = 30.0) -> float:
    """min(cap, floor((N - 1) / 3)): keeps the kernel solvable for small N."""
    return min(cap, float((n_rows - 1) // 3))


def _entropy_and_probs(dist_row: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    p = np.exp(-dist_row * beta)
    sum_p = max(p.sum(), _EPS)
    h = math.log(sum_p) + beta * float(np.dot(dist_row, p)) / sum_p
    return h, p / sum_p

def _conditional_probs(sq_dists: np.ndarray, perplexity: float,
                       tol: float = 1e-5, max_steps: int = 50) -> np.ndarray:
    """Per-row binary search for the kernel width matching log-perplexity."""
    n = sq_dists.shape[0]
    target = math.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        row = np.delete(sq_dists[i], i)
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        h, probs = _entropy_and_probs(row, beta)
        for _ in range(max_steps):
            if abs(h - target) < tol:
                break
            if h > target:
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
            h, probs = _entropy_and_probs(row, beta)
        P[i, np.arange(n) != i] = probs
    return P


def _joint_probs(X: np.ndarray, perplexity: float) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    sq_dists = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    cond = _conditional_probs(sq_dists, perplexity)
    P = (cond + cond.T) / (2.0 * X.shape[0])
    return np.maximum(P, _EPS)


def _student_q(Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sq = np.sum(Y * Y, axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T), 0.0))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), _EPS)
    return Q, num


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


@dataclass
class TsneResult:
    embedding: np.ndarray
    effective_perplexity: float
    kl_history: list[float]

    @property
    def final_kl(self) -> float:
        return self.kl_history[-1]


def tsne(X, perplexity_cap: float = 30.0, max_iter: int = 1000, seed: int = 0,
         learning_rate: float = 200.0, early_exaggeration: float = 12.0,
         exaggeration_iters: int = 250, momentum_switch: int = 250,
         initial_momentum: float = 0.5, final_momentum: float = 0.8,
         min_gain: float = 0.01) -> TsneResult:
    """Embed rows of X into 2D.

    The effective perplexity is min(perplexity_cap, floor((N - 1) / 3)).
    Initialization draws from N(0, 1e-4) per coordinate with the given seed.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 4:
        raise TooFewRows(f"need at least 4 rows, got {n}")

    perplexity = effective_perplexity(n, perplexity_cap)
    P = _joint_probs(X, max(perplexity, 1.0))

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)

    P_ex = P * early_exaggeration
    kl_history: list[float] = []

    for it in range(1, max_iter + 1):
        P_eff = P_ex if it <= exaggeration_iters else P
        momentum = initial_momentum if it <= momentum_switch else final_momentum

        Q, num = _student_q(Y)
        # grad_i = 4 * sum_j (p_ij - q_ij) * num_ij * (y_i - y_j)
        W = (P_eff - Q) * num
        grad = 4.0 * ((np.diag(W.sum(axis=1)) - W) @ Y)

        inc = np.sign(grad) != np.sign(update)
        gains = np.where(inc, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, min_gain)
        update = momentum * update - learning_rate * (gains * grad)
        Y = Y + update
        Y = Y - Y.mean(axis=0)

        kl_history.append(kl_divergence(P, Q))

    if not np.all(np.isfinite(Y)):
        raise FloatingPointError("t-SNE produced non-finite coordinates")
    return TsneResult(embedding=Y, effective_perplexity=perplexity,
                      kl_history=kl_history)
