import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "cograca",
    deadline=None,
    derandomize=True,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("cograca")


def finite_difference(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a
    time. Slow; keep inputs small."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        g[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return float(
        np.linalg.norm(analytic - numeric) / (np.linalg.norm(numeric) + 1e-12)
    )


def random_connectivity(rng: np.random.Generator, n: int) -> np.ndarray:
    """A valid correlation-like matrix: symmetric, unit diagonal, entries in
    [-1, 1]."""
    raw = rng.uniform(-0.9, 0.9, size=(n, n))
    mat = (raw + raw.T) / 2
    np.fill_diagonal(mat, 1.0)
    return mat


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
