"""Noisy-instance detectors built on training dynamics.

Detection routes:
  * threshold the confidence-correctness product of a single fitted model;
  * iterative weight learning: retrain with per-instance weights that lose
    ``1 - product`` each round and clip to [0, 1], then threshold the final
    weights (noisy rows sink towards 0);
  * an automatic threshold at the histogram valley between the two modes of
    a score distribution;
  * simple confidence heuristics over the final model's probabilities.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import gbdt
from .cartography import compute_dynamics
from .data_io import _atomic_write
from .gbdt import TrainConfig

logger = logging.getLogger(__name__)

FLAG_IF_BELOW = "below"
FLAG_IF_ABOVE = "above"

VALLEY_BINS = 50
VALLEY_SMOOTH_WINDOW = 3
VALLEY_MIN_VALUES = 20

DEFAULT_ROUNDS = 10
DEFAULT_LOW_PROBABILITY = 0.55
DEFAULT_SHORT_CONFIDENCE = 0.05
DEFAULT_LONG_CONFIDENCE = 0.95

# Weight learning needs each round's model to saturate: with full Newton
# steps the easy instances' label probabilities reach 1.0 and their weights
# stop moving, which is what makes the final distribution bimodal. The
# iteration count is high enough that one early misprediction costs an
# instance less than 0.01 weight per round.
DEFAULT_WEIGHT_LEARNING_CFG = TrainConfig(
    num_iterations=200, learning_rate=1.0, max_depth=8, l2_reg=1.0
)


class WeightCollapseError(RuntimeError):
    pass


@dataclass
class WeightTrajectory:
    """Per-instance weights after each learning round; rows never increase."""

    weights: np.ndarray  # (rounds, n)

    @property
    def rounds(self) -> int:
        return self.weights.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.weights[-1]


@dataclass
class DetectionResult:
    flags: np.ndarray
    score_name: str
    scores: np.ndarray
    threshold: float
    direction: str

    def recompute_flags(self) -> np.ndarray:
        if self.direction == FLAG_IF_BELOW:
            return self.scores < self.threshold
        return self.scores > self.threshold


def _threshold_result(scores, score_name, threshold, direction) -> DetectionResult:
    scores = np.asarray(scores, dtype=np.float64)
    if direction == FLAG_IF_BELOW:
        flags = scores < threshold
    else:
        flags = scores > threshold
    return DetectionResult(
        flags=flags,
        score_name=score_name,
        scores=scores,
        threshold=float(threshold),
        direction=direction,
    )


def _check_unit_threshold(threshold: float) -> None:
    if not (0.0 <= threshold <= 1.0):
        raise ValueError("threshold must lie in [0, 1]")


def detect_by_product(dyn, threshold: float) -> DetectionResult:
    """Flag instances whose confidence-correctness product falls below ``threshold``."""
    _check_unit_threshold(threshold)
    return _threshold_result(dyn.product, "product", threshold, FLAG_IF_BELOW)


def detect_by_weight(traj: WeightTrajectory, threshold: float) -> DetectionResult:
    """Flag instances whose final learned weight falls below ``threshold``."""
    _check_unit_threshold(threshold)
    return _threshold_result(traj.final, "weight", threshold, FLAG_IF_BELOW)


def learn_weights(X, y, base_cfg: TrainConfig = None, rounds: int = DEFAULT_ROUNDS,
                  *, initial_weight: float = 1.0, k_classes=None) -> WeightTrajectory:
    """Iteratively reweight instances by how well the model learns them.

    Each round trains a fresh ensemble under the current weights, computes
    training dynamics for every instance (zero-weight rows included), and
    applies ``w <- clip(w - (1 - product), 0, 1)``. Rows at weight 0 are
    excluded from training by the engine but keep being scored, so weights
    are monotonically non-increasing across rounds.

    The classical initialisation at 1/n collapses every weight to zero in
    one round at realistic n; the default starts all weights at 1.0 and
    ``initial_weight`` exposes the knob.
    """
    if base_cfg is None:
        base_cfg = DEFAULT_WEIGHT_LEARNING_CFG
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not (0.0 < initial_weight <= 1.0):
        raise ValueError("initial_weight must lie in (0, 1]")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    k = int(k_classes) if k_classes is not None else int(y.max()) + 1

    w = np.full(n, float(initial_weight))
    history = np.empty((rounds, n))
    for r in range(rounds):
        model = gbdt.fit(X, y, w, base_cfg, k_classes=k)
        dyn = compute_dynamics(model, X, y)
        w = np.clip(w - (1.0 - dyn.product), 0.0, 1.0)
        history[r] = w
        if not (w > 0).any():
            raise WeightCollapseError(
                "weight collapse - lower learning pressure (all weights reached 0 "
                f"in round {r + 1}; consider a larger initial_weight)"
            )
    return WeightTrajectory(weights=history)


def _plateau_peaks(smoothed: np.ndarray):
    """Local maxima of a smoothed histogram, plateau runs collapsed to their centre."""
    peaks = []
    i = 0
    nbins = len(smoothed)
    while i < nbins:
        j = i
        while j + 1 < nbins and smoothed[j + 1] == smoothed[i]:
            j += 1
        left_ok = i == 0 or smoothed[i - 1] < smoothed[i]
        right_ok = j == nbins - 1 or smoothed[j + 1] < smoothed[i]
        if left_ok and right_ok:
            peaks.append(((i + j) // 2, smoothed[i]))
        i = j + 1
    return peaks


def auto_valley_threshold(values, *, return_info: bool = False):
    """Threshold at the histogram valley between the two dominant modes.

    Builds a 50-bin histogram over [0, 1], smooths it with a 3-bin moving
    average, finds the two highest local maxima and returns the centre of
    the lowest smoothed bin strictly between them (middle bin on ties).
    Unimodal inputs fall back to the 10th percentile of the values.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < VALLEY_MIN_VALUES:
        raise ValueError("too few values: need at least 20")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ValueError("values must lie in [0, 1]")

    hist, _ = np.histogram(values, bins=VALLEY_BINS, range=(0.0, 1.0))
    half = VALLEY_SMOOTH_WINDOW // 2
    smoothed = np.array([
        hist[max(0, i - half): i + half + 1].mean() for i in range(VALLEY_BINS)
    ])
    peaks = sorted(_plateau_peaks(smoothed), key=lambda t: (-t[1], t[0]))
    if len(peaks) < 2:
        threshold = float(np.percentile(values, 10))
        logger.warning("unimodal fallback: valley undefined, using 10th percentile")
        info = {"fallback": "unimodal", "threshold": threshold}
        return (threshold, info) if return_info else threshold

    (b1, _), (b2, _) = peaks[:2]
    lo, hi = min(b1, b2), max(b1, b2)
    between = smoothed[lo + 1: hi]
    ties = np.nonzero(between == between.min())[0]
    valley = lo + 1 + int(ties[len(ties) // 2])
    threshold = (valley + 0.5) / VALLEY_BINS
    info = {"fallback": None, "threshold": threshold,
            "peak_bins": [int(lo), int(hi)], "valley_bin": int(valley)}
    return (threshold, info) if return_info else threshold


def heuristic_low_probability(probs, y, threshold: float = DEFAULT_LOW_PROBABILITY) -> DetectionResult:
    """Doubt rows where the model's top-class probability stays low."""
    probs = np.asarray(probs, dtype=np.float64)
    return _threshold_result(probs.max(axis=1), "low_probability", threshold, FLAG_IF_BELOW)


def heuristic_short_confidence(probs, y, threshold: float = DEFAULT_SHORT_CONFIDENCE) -> DetectionResult:
    """Doubt rows whose own label earns almost no probability."""
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    own = probs[np.arange(len(y)), y]
    return _threshold_result(own, "short_confidence", threshold, FLAG_IF_BELOW)


def heuristic_long_confidence(probs, y, threshold: float = DEFAULT_LONG_CONFIDENCE) -> DetectionResult:
    """Doubt rows where some wrong label earns overwhelming probability."""
    probs = np.asarray(probs, dtype=np.float64).copy()
    y = np.asarray(y, dtype=np.int64)
    probs[np.arange(len(y)), y] = -np.inf
    return _threshold_result(probs.max(axis=1), "long_confidence", threshold, FLAG_IF_ABOVE)


def validation_threshold_search(train, validation, scores_source, candidates,
                                metric: str, cheap_cfg: TrainConfig) -> float:
    """Pick, from ``candidates``, the removal threshold that scores best on validation.

    ``scores_source`` is a TrainingDynamics (its product is thresholded) or a
    WeightTrajectory (its final weights are). Candidates whose cleaning
    leaves fewer instances than classes, or drops a class entirely, score
    -inf. Ties resolve to the smaller threshold.
    """
    from .evaluation import classification_metric

    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if hasattr(scores_source, "product"):
        scores = np.asarray(scores_source.product)
    elif hasattr(scores_source, "final"):
        scores = np.asarray(scores_source.final)
    else:
        scores = np.asarray(scores_source, dtype=np.float64)

    k = train.k_classes
    best_t, best_v = None, -np.inf
    for t in sorted(candidates):
        _check_unit_threshold(t)
        keep = scores >= t
        kept_y = train.y[keep]
        if keep.sum() < k or len(np.unique(kept_y)) < k:
            value = -np.inf
        else:
            model = gbdt.fit(train.X[keep], kept_y, None, cheap_cfg, k_classes=k)
            value = classification_metric(model, validation, metric)
        if value > best_v:
            best_t, best_v = t, value
    if best_t is None:
        best_t = sorted(candidates)[0]
    return float(best_t)


# ---------------------------------------------------------------------------
# Flags persistence: CSV of (id, score, flag) + JSON header sidecar
# ---------------------------------------------------------------------------

def flags_csv_text(result: DetectionResult, ids) -> str:
    lines = ["id,score,flag"]
    for i, s, f in zip(ids, result.scores, result.flags):
        lines.append(f"{int(i)},{repr(float(s))},{1 if f else 0}")
    return "\n".join(lines) + "\n"


def flags_header(result: DetectionResult, config_digest: str) -> dict:
    return {
        "score_name": result.score_name,
        "threshold": result.threshold,
        "direction": result.direction,
        "flagged_count": int(result.flags.sum()),
        "config_digest": config_digest,
    }


def config_digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def save_flags(result: DetectionResult, ids, prefix: str, digest: str = "") -> tuple:
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    csv_path = f"{prefix}.flags.csv"
    header_path = f"{prefix}.flags.json"
    _atomic_write(csv_path, flags_csv_text(result, ids))
    _atomic_write(
        header_path,
        json.dumps(flags_header(result, digest), sort_keys=True, indent=1) + "\n",
    )
    return csv_path, header_path


def load_flags(csv_path: str):
    """Return (ids, scores, flags) from a flags CSV."""
    ids, scores, flags = [], [], []
    with open(csv_path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "id,score,flag":
            raise ValueError(f"{csv_path}: not a flags file")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b, c = line.split(",")
            ids.append(int(a))
            scores.append(float(b))
            flags.append(c == "1")
    return np.array(ids, dtype=np.int64), np.array(scores), np.array(flags, dtype=bool)
