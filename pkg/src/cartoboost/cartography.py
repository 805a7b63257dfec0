"""Per-instance training-dynamics metrics over the iterations of a fitted ensemble."""

from dataclasses import dataclass

import numpy as np

from . import gbdt
from .gbdt import Ensemble


@dataclass
class TrainingDynamics:
    """Confidence, variability, correctness and their product, one value per instance.

    ``mu`` is the mean probability assigned to the instance's own label
    across iterations, ``sigma`` its population standard deviation (divisor
    equal to the iteration count), ``correctness`` the fraction of
    iterations whose argmax prediction matches the label, and ``product``
    is ``correctness * mu``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    correctness: np.ndarray
    product: np.ndarray
    num_iterations: int

    def __len__(self) -> int:
        return len(self.mu)


def compute_dynamics(model: Ensemble, X, y) -> TrainingDynamics:
    """Collect the four per-instance metrics in a single sweep over tree groups."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("shape mismatch: labels do not align with feature rows")
    if X.shape[1] < model.n_features:
        raise ValueError("shape mismatch: fewer feature columns than the model expects")

    n = X.shape[0]
    t_count = model.num_iterations
    scores = np.empty((t_count, n))
    correct = np.empty((t_count, n), dtype=bool)
    raw = np.tile(model.base_score, (n, 1))
    rows = np.arange(n)
    for i, group in enumerate(model.trees):
        for c, tree in enumerate(group):
            raw[:, c] += tree.predict(X)
        if model.k_classes == 2:
            p1 = gbdt._sigmoid(raw[:, 0])
            scores[i] = np.where(y == 1, p1, 1.0 - p1)
            correct[i] = (raw[:, 0] > 0) == (y == 1)
        else:
            probs = gbdt._softmax(raw)
            scores[i] = probs[rows, y]
            correct[i] = np.argmax(raw, axis=1) == y

    mu = scores.mean(axis=0)
    sigma = np.sqrt(np.mean((scores - mu) ** 2, axis=0))
    correctness = correct.sum(axis=0) / t_count
    return TrainingDynamics(
        mu=mu,
        sigma=sigma,
        correctness=correctness,
        product=correctness * mu,
        num_iterations=t_count,
    )


def dynamics_to_report(dyn: TrainingDynamics, y, ids, dataset_id="", weights=None, flags=None):
    """Package dynamics (plus optional learned weights/flags) as a CartographyReport."""
    from .data_io import CartographyPoint, CartographyReport

    if len(dyn) == 0:
        raise ValueError("empty dynamics")
    y = np.asarray(y)
    ids = np.asarray(ids)
    if y.shape != (len(dyn),) or ids.shape != (len(dyn),):
        raise ValueError("shape mismatch: labels/ids do not align with dynamics")
    points = []
    for j in range(len(dyn)):
        points.append(
            CartographyPoint(
                id=int(ids[j]),
                mu=float(dyn.mu[j]),
                sigma=float(dyn.sigma[j]),
                correctness=float(dyn.correctness[j]),
                product=float(dyn.product[j]),
                label=int(y[j]),
                weight=None if weights is None else float(weights[j]),
                flagged=None if flags is None else bool(flags[j]),
            )
        )
    return CartographyReport(
        dataset_id=str(dataset_id),
        num_iterations=dyn.num_iterations,
        points=points,
    )
