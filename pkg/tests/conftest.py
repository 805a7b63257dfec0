import numpy as np
import pytest

from cartoboost import TrainConfig, fit


@pytest.fixture(scope="session")
def separable_toy():
    """200 linearly separable 2-D points, two classes with a wide margin."""
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-2.0, 0.5, (100, 2)), rng.normal(2.0, 0.5, (100, 2))])
    y = np.array([0] * 100 + [1] * 100, dtype=np.int64)
    return X, y


@pytest.fixture(scope="session")
def separable_model(separable_toy):
    X, y = separable_toy
    return fit(X, y, None, TrainConfig(num_iterations=50, learning_rate=0.1, max_depth=3))


def random_dataset(rng, n, d, k):
    X = rng.normal(0.0, 1.0, (n, d))
    y = rng.integers(0, k, n)
    # every class appears at least once
    y[:k] = np.arange(k)
    return X, y.astype(np.int64)


def random_model(rng, n=30, d=3, k=2, iterations=5, depth=3):
    X, y = random_dataset(rng, n, d, k)
    cfg = TrainConfig(num_iterations=iterations, learning_rate=0.3, max_depth=depth,
                      seed=int(rng.integers(2**31)))
    return fit(X, y, None, cfg), X, y
