import numpy as np
import pytest

from seqswarm.tables import ALPHABET


def random_sequence(rng, n: int) -> str:
    return "".join(ALPHABET[i] for i in rng.integers(0, len(ALPHABET), n))


def random_walk_coords(rng, n: int, step: float = 3.8, jitter: float = 0.4) -> np.ndarray:
    """Connected, non-collinear 3D chain; every consecutive pair ~step apart."""
    points = [np.zeros(3)]
    direction = np.array([1.0, 0.0, 0.0])
    for _ in range(n - 1):
        kick = rng.normal(size=3)
        kick /= np.linalg.norm(kick)
        direction = 0.8 * direction + 0.6 * kick
        direction /= np.linalg.norm(direction)
        points.append(points[-1] + direction * step + rng.normal(scale=jitter, size=3))
    return np.asarray(points)


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)
