"""Weighted gradient-boosted regression trees with prediction at any iteration.

The booster fits one regression tree per iteration for binary targets
(logistic loss) and one tree per class per iteration for multiclass targets
(softmax loss). Trees are grown with exact greedy splits over sorted feature
values and Newton leaf values, so training is deterministic for a fixed
input regardless of thread count.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised when a serialized model cannot be decoded."""


@dataclass(frozen=True)
class TrainConfig:
    num_iterations: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    min_child_weight: float = 1e-3
    l2_reg: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_iterations < 1:
            raise ValueError("num_iterations must be >= 1")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_child_weight < 0:
            raise ValueError("min_child_weight must be >= 0")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be >= 0")


@dataclass
class Tree:
    """Flat-array binary regression tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def single_leaf(cls, value: float) -> "Tree":
        return cls(
            feature=np.array([-1], dtype=np.int32),
            threshold=np.zeros(1),
            left=np.array([-1], dtype=np.int32),
            right=np.array([-1], dtype=np.int32),
            value=np.array([float(value)]),
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int32)
        pending = np.nonzero(self.feature[idx] >= 0)[0]
        while pending.size:
            nodes = idx[pending]
            go_left = X[pending, self.feature[nodes]] <= self.threshold[nodes]
            idx[pending] = np.where(go_left, self.left[nodes], self.right[nodes])
            pending = pending[self.feature[idx[pending]] >= 0]
        return self.value[idx]


@dataclass
class Ensemble:
    """Boosted model: ``num_iterations`` groups of 1 (binary) or K trees."""

    trees: list
    base_score: np.ndarray
    config: TrainConfig
    k_classes: int
    n_features: int

    @property
    def num_iterations(self) -> int:
        return len(self.trees)

    @property
    def n_outputs(self) -> int:
        return 1 if self.k_classes == 2 else self.k_classes


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(raw: np.ndarray) -> np.ndarray:
    z = raw - raw.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class _TreeBuilder:
    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def leaf(self, value: float) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return node

    def split(self, feat: int, thr: float) -> int:
        node = len(self.feature)
        self.feature.append(int(feat))
        self.threshold.append(float(thr))
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return node

    def build(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            value=np.array(self.value),
        )


def _scan_features(X, gw, hw, srt_block, features, min_child_weight, l2_reg):
    """Best split over a block of features, scanned in one vectorized pass.

    ``srt_block`` stacks each feature's sorted row order, shape (f, m).
    Returns (gain, feature, threshold, split position) or None. Ties take
    the lowest feature index, then the lowest threshold, which the
    feature-major argmax delivers for free.
    """
    if srt_block.shape[1] < 2:
        return None
    values = X[srt_block, features[:, None]]
    cg = np.cumsum(gw[srt_block], axis=1)
    ch = np.cumsum(hw[srt_block], axis=1)
    gl, hl = cg[:, :-1], ch[:, :-1]
    gt, ht = cg[:, -1:], ch[:, -1:]
    gr, hr = gt - gl, ht - hl
    valid = (
        (values[:, :-1] != values[:, 1:])
        & (hl >= min_child_weight)
        & (hr >= min_child_weight)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (
            gl * gl / (hl + l2_reg) + gr * gr / (hr + l2_reg) - gt * gt / (ht + l2_reg)
        )
    gain[~valid] = -np.inf
    flat = int(np.argmax(gain))
    row, pos = divmod(flat, gain.shape[1])
    best = gain[row, pos]
    if not best > 0.0:
        return None
    return float(best), int(features[row]), float(values[row, pos]), int(pos)


def _grow_tree(X, gw, hw, sorted_block, cfg, executor, feature_chunks):
    builder = _TreeBuilder()
    scratch = np.zeros(X.shape[0], dtype=bool)
    lam = cfg.l2_reg
    lr = cfg.learning_rate

    all_features = np.arange(X.shape[1])

    def scan(block):
        if executor is None or len(feature_chunks) == 1:
            return _scan_features(X, gw, hw, block, all_features,
                                  cfg.min_child_weight, lam)
        # fixed feature chunks reduced in order: identical result for any
        # worker count
        parts = executor.map(
            lambda chunk: _scan_features(X, gw, hw, block[chunk], chunk,
                                         cfg.min_child_weight, lam),
            feature_chunks,
        )
        best = None
        for part in parts:
            if part is not None and (best is None or part[0] > best[0]):
                best = part
        return best

    def grow(block, depth):
        rows = block[0]
        g_sum = float(gw[rows].sum())
        h_sum = float(hw[rows].sum())
        denom = h_sum + lam
        leaf_value = -lr * g_sum / denom if denom > 0 else 0.0
        if depth >= cfg.max_depth or rows.size < 2:
            return builder.leaf(leaf_value)

        best = scan(block)
        if best is None:
            return builder.leaf(leaf_value)

        _, best_f, thr, pos = best
        left_rows = block[best_f, : pos + 1]
        scratch[left_rows] = True
        in_left = scratch[block]
        scratch[left_rows] = False
        m_left = pos + 1
        left_block = block[in_left].reshape(block.shape[0], m_left)
        right_block = block[~in_left].reshape(block.shape[0], block.shape[1] - m_left)

        node = builder.split(best_f, thr)
        builder.left[node] = grow(left_block, depth + 1)
        builder.right[node] = grow(right_block, depth + 1)
        return node

    grow(sorted_block, 0)
    return builder.build()


def _validate_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError("feature matrix must be 2-D and non-empty")
    if not np.isfinite(X).all():
        raise ValueError("feature matrix contains non-finite values")
    return X


def fit(X, y, w=None, cfg: TrainConfig = TrainConfig(), *, k_classes=None, n_jobs=1) -> Ensemble:
    """Train a boosted ensemble on (X, y) with per-instance weights.

    Rows with weight exactly 0 are removed before any tree is built, so the
    result is identical to fitting on the nonzero-weight subset. Remaining
    weights are rescaled to mean 1, which makes the fit invariant to a
    global weight rescaling. ``k_classes`` overrides the class count
    inferred from the surviving labels (needed when a class may be absent
    from the weighted subset).
    """
    cfg.validate()
    X = _validate_matrix(X)
    n, d = X.shape
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (n,):
        raise ValueError("labels must be a length-n vector")
    if w is None:
        w = np.ones(n)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError("weights must be a length-n vector")
    if (w < 0).any() or (w > 1).any():
        raise ValueError("weights must lie in [0, 1]")

    active = w > 0
    if not active.any():
        raise ValueError("empty effective training set")
    Xa, ya, wa = X[active], y[active], w[active]
    classes = np.unique(ya)
    if classes.size < 2:
        raise ValueError("degenerate labels")
    if ya.min() < 0:
        raise ValueError("labels must be non-negative class indices")
    k = int(k_classes) if k_classes is not None else int(ya.max()) + 1
    if k < 2 or ya.max() >= k:
        raise ValueError("labels exceed the declared class count")

    wn = wa / wa.mean()
    n_out = 1 if k == 2 else k
    if k == 2:
        p1 = float(np.average(ya == 1, weights=wn))
        p1 = min(max(p1, 1e-12), 1 - 1e-12)
        base = np.array([math.log(p1 / (1.0 - p1))])
    else:
        priors = np.array([np.average(ya == c, weights=wn) for c in range(k)])
        base = np.log(np.clip(priors, 1e-12, None))

    sorted_block = np.stack(
        [np.argsort(Xa[:, f], kind="stable").astype(np.int32) for f in range(d)]
    )
    raw = np.tile(base, (Xa.shape[0], 1))
    onehot = None if k == 2 else np.eye(k)[ya]
    y_bin = None if k != 2 else (ya == 1).astype(np.float64)

    executor = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    feature_chunks = np.array_split(np.arange(d), min(n_jobs, d)) if n_jobs > 1 else [np.arange(d)]
    try:
        groups = []
        for _ in range(cfg.num_iterations):
            if k == 2:
                p = _sigmoid(raw[:, 0])
                grad = p - y_bin
                hess = p * (1.0 - p)
                tree = _grow_tree(Xa, wn * grad, wn * hess, sorted_block, cfg,
                                  executor, feature_chunks)
                raw[:, 0] += tree.predict(Xa)
                groups.append([tree])
            else:
                probs = _softmax(raw)
                group = []
                for c in range(k):
                    grad = probs[:, c] - onehot[:, c]
                    hess = probs[:, c] * (1.0 - probs[:, c])
                    group.append(
                        _grow_tree(Xa, wn * grad, wn * hess, sorted_block, cfg,
                                   executor, feature_chunks)
                    )
                for c, tree in enumerate(group):
                    raw[:, c] += tree.predict(Xa)
                groups.append(group)
    finally:
        if executor is not None:
            executor.shutdown()

    return Ensemble(trees=groups, base_score=base, config=cfg, k_classes=k, n_features=d)


def _check_inputs(model: Ensemble, X: np.ndarray, iteration: int) -> np.ndarray:
    X = _validate_matrix(X)
    if X.shape[1] < model.n_features:
        raise ValueError("shape mismatch: fewer feature columns than the model expects")
    if not (1 <= iteration <= model.num_iterations):
        raise ValueError("iteration out of range")
    return X


def _raw_scores(model: Ensemble, X: np.ndarray, iteration: int) -> np.ndarray:
    raw = np.tile(model.base_score, (X.shape[0], 1))
    for group in model.trees[:iteration]:
        for c, tree in enumerate(group):
            raw[:, c] += tree.predict(X)
    return raw


def _link(model: Ensemble, raw: np.ndarray) -> np.ndarray:
    if model.k_classes == 2:
        p1 = _sigmoid(raw[:, 0])
        return np.column_stack([1.0 - p1, p1])
    return _softmax(raw)


def predict_proba_at(model: Ensemble, X, iteration: int) -> np.ndarray:
    """Class probabilities using only the first ``iteration`` tree groups."""
    X = _check_inputs(model, X, iteration)
    return _link(model, _raw_scores(model, X, iteration))


def predict_proba(model: Ensemble, X) -> np.ndarray:
    return predict_proba_at(model, X, model.num_iterations)


def predict(model: Ensemble, X) -> np.ndarray:
    return np.argmax(predict_proba(model, X), axis=1)


def staged_scores(model: Ensemble, X, y) -> np.ndarray:
    """(T, n) matrix: probability of each row's own label at every iteration.

    One accumulation sweep over the tree groups; the link function is
    evaluated once per iteration, never from scratch.
    """
    X = _check_inputs(model, X, model.num_iterations)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ValueError("shape mismatch: labels do not align with rows")
    if y.min() < 0 or y.max() >= model.k_classes:
        raise ValueError("shape mismatch: label outside the model's classes")

    out = np.empty((model.num_iterations, X.shape[0]))
    raw = np.tile(model.base_score, (X.shape[0], 1))
    rows = np.arange(X.shape[0])
    for i, group in enumerate(model.trees):
        for c, tree in enumerate(group):
            raw[:, c] += tree.predict(X)
        if model.k_classes == 2:
            p1 = _sigmoid(raw[:, 0])
            out[i] = np.where(y == 1, p1, 1.0 - p1)
        else:
            out[i] = _softmax(raw)[rows, y]
    return out


def staged_predictions(model: Ensemble, X) -> np.ndarray:
    """(T, n) matrix of argmax class indices; ties go to the lower class."""
    X = _check_inputs(model, X, model.num_iterations)
    out = np.empty((model.num_iterations, X.shape[0]), dtype=np.int64)
    raw = np.tile(model.base_score, (X.shape[0], 1))
    for i, group in enumerate(model.trees):
        for c, tree in enumerate(group):
            raw[:, c] += tree.predict(X)
        if model.k_classes == 2:
            out[i] = (raw[:, 0] > 0).astype(np.int64)
        else:
            out[i] = np.argmax(raw, axis=1)
    return out


def weighted_log_loss(model: Ensemble, X, y, w, iteration: int) -> float:
    """Weighted mean negative log-probability of the true labels at ``iteration``."""
    probs = predict_proba_at(model, X, iteration)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    p_true = probs[np.arange(len(y)), y]
    p_true = np.clip(p_true, 1e-15, 1.0 - 1e-15)
    return float(np.sum(w * -np.log(p_true)) / np.sum(w))


def _node_to_dict(tree: Tree, i: int) -> dict:
    if tree.feature[i] < 0:
        return {"leaf": float(tree.value[i])}
    return {
        "feat": int(tree.feature[i]),
        "thr": float(tree.threshold[i]),
        "left": _node_to_dict(tree, int(tree.left[i])),
        "right": _node_to_dict(tree, int(tree.right[i])),
    }


def _node_from_dict(obj, builder: _TreeBuilder) -> int:
    if not isinstance(obj, dict):
        raise ModelFormatError("corrupt model file: malformed tree node")
    if "leaf" in obj:
        return builder.leaf(float(obj["leaf"]))
    try:
        node = builder.split(int(obj["feat"]), float(obj["thr"]))
        builder.left[node] = _node_from_dict(obj["left"], builder)
        builder.right[node] = _node_from_dict(obj["right"], builder)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
    return node


def serialize(model: Ensemble) -> bytes:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "k_classes": model.k_classes,
        "n_features": model.n_features,
        "base_score": [float(b) for b in model.base_score],
        "config": {
            "num_iterations": model.config.num_iterations,
            "learning_rate": model.config.learning_rate,
            "max_depth": model.config.max_depth,
            "min_child_weight": model.config.min_child_weight,
            "l2_reg": model.config.l2_reg,
            "seed": model.config.seed,
        },
        "iterations": [
            [_node_to_dict(tree, 0) for tree in group] for group in model.trees
        ],
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def deserialize(data: bytes) -> Ensemble:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("corrupt model file: not a model document")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"corrupt model file: unsupported format_version {version!r}"
        )
    try:
        cfg = TrainConfig(**doc["config"])
        k = int(doc["k_classes"])
        n_features = int(doc["n_features"])
        base = np.array([float(b) for b in doc["base_score"]])
        groups = []
        for group in doc["iterations"]:
            trees = []
            for node_obj in group:
                builder = _TreeBuilder()
                _node_from_dict(node_obj, builder)
                trees.append(builder.build())
            groups.append(trees)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"corrupt model file: {exc}") from exc
    n_out = 1 if k == 2 else k
    if base.shape != (n_out,) or any(len(g) != n_out for g in groups):
        raise ModelFormatError("corrupt model file: inconsistent tree group shape")
    return Ensemble(trees=groups, base_score=base, config=cfg, k_classes=k, n_features=n_features)


def save_model(model: Ensemble, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_model(path) -> Ensemble:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
