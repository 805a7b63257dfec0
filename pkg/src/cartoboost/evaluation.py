"""Detection/classification metrics and the end-to-end experiment harness.

An experiment follows the controlled protocol: generate or load a clean
dataset, split it stratified, corrupt only the train and validation parts,
train a baseline on the noisy data, then let each detector clean the train
part and retrain, scoring everything on the untouched test part.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import detection as det
from . import gbdt
from .cartography import compute_dynamics
from .data_io import ColumnSchema, Dataset, _atomic_write, apply_encoding, fit_encoding, load_dataset, save_dataset
from .gbdt import TrainConfig
from .noise import SplitSpec, gen_binary_synthetic, gen_multiclass_synthetic, inject, stratified_split

METHODS = (
    "product_threshold",
    "weight_threshold",
    "low_probability",
    "short_confidence",
    "long_confidence",
)


@dataclass
class DetectionScore:
    fpr: float
    fnr: float
    precision: float
    recall: float

    def to_dict(self) -> dict:
        return {"fpr": self.fpr, "fnr": self.fnr,
                "precision": self.precision, "recall": self.recall}


@dataclass
class ClassificationScore:
    precision: float = None
    recall: float = None
    f1: float = None
    f1_macro: float = None
    prauc: float = None

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "f1_macro": self.f1_macro, "prauc": self.prauc}


def detection_score(flags, truth_mask) -> DetectionScore:
    """FPR/FNR plus precision/recall where a positive means a noisy label."""
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth_mask, dtype=bool)
    if flags.shape != truth.shape:
        raise ValueError("flags and truth mask have different lengths")
    if truth.all() or not truth.any():
        raise ValueError("undefined rate: truth mask needs both classes")
    tp = int((flags & truth).sum())
    fp = int((flags & ~truth).sum())
    tn = int((~flags & ~truth).sum())
    fn = int((~flags & truth).sum())
    return DetectionScore(
        fpr=fp / (tn + fp),
        fnr=fn / (tp + fn),
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
    )


def _binary_prf(y_true, y_pred, positive):
    tp = int(((y_pred == positive) & (y_true == positive)).sum())
    fp = int(((y_pred == positive) & (y_true != positive)).sum())
    fn = int(((y_pred != positive) & (y_true == positive)).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def classification_score(y_true, y_pred, scores=None, *, k_classes=None,
                         positive_class: int = 1) -> ClassificationScore:
    """Binary precision/recall/f1 (+PRAUC from scores); macro-f1 over all classes.

    Classes absent from both ``y_true`` and ``y_pred`` contribute an f1 of 0
    to the macro average.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("prediction length mismatch")
    k = int(k_classes) if k_classes is not None else int(max(y_true.max(), y_pred.max())) + 1

    f1s = [_binary_prf(y_true, y_pred, c)[2] for c in range(k)]
    out = ClassificationScore(f1_macro=float(np.mean(f1s)))
    if k == 2:
        precision, recall, f1 = _binary_prf(y_true, y_pred, positive_class)
        out.precision, out.recall, out.f1 = precision, recall, f1
        if scores is not None:
            out.prauc = pr_auc(y_true == positive_class, scores)
    return out


def pr_auc(y_true, scores) -> float:
    """Area under the precision-recall curve by the step-wise rule.

    Thresholds sweep the distinct score values in decreasing order (tied
    scores enter together); the area is the sum of precision times recall
    increment, with no interpolation between points.
    """
    y = np.asarray(y_true, dtype=bool)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValueError("scores length mismatch")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise ValueError("undefined PRAUC: need both classes in y_true")

    order = np.argsort(-s, kind="stable")
    ys = y[order]
    ss = s[order]
    group_last = np.nonzero(np.diff(ss))[0]
    group_last = np.append(group_last, ss.size - 1)
    tp = np.cumsum(ys)[group_last]
    predicted = group_last + 1
    precision = tp / predicted
    recall = tp / n_pos
    d_recall = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(precision * d_recall))


def classification_metric(model, validation, metric: str) -> float:
    """Score a fitted model on a validation dataset with one named metric."""
    probs = gbdt.predict_proba(model, validation.X)
    if metric == "f1_macro":
        pred = np.argmax(probs, axis=1)
        return classification_score(
            validation.y, pred, k_classes=validation.k_classes
        ).f1_macro
    if metric == "prauc":
        pos = validation.schema.positive_class
        return pr_auc(validation.y == pos, probs[:, pos])
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class SearchSpace:
    iterations: tuple = (50, 300)
    learning_rate: tuple = (0.03, 0.3)
    max_depth: tuple = (3, 8)
    l2_reg: tuple = (0.1, 10.0)


def random_search_tune(train, validation, budget: int, metric: str,
                       space: SearchSpace = SearchSpace(), seed: int = 0) -> TrainConfig:
    """Seeded uniform random search over the hyperparameter space; best-on-validation wins."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    best_cfg, best_value = None, -np.inf
    for _ in range(budget):
        cfg = TrainConfig(
            num_iterations=int(rng.integers(space.iterations[0], space.iterations[1] + 1)),
            learning_rate=float(np.exp(rng.uniform(*np.log(space.learning_rate)))),
            max_depth=int(rng.integers(space.max_depth[0], space.max_depth[1] + 1)),
            l2_reg=float(np.exp(rng.uniform(*np.log(space.l2_reg)))),
            seed=int(seed),
        )
        model = gbdt.fit(train.X, train.y, None, cfg, k_classes=train.k_classes)
        value = classification_metric(model, validation, metric)
        if value > best_value:
            best_cfg, best_value = cfg, value
    return best_cfg


# ---------------------------------------------------------------------------
# Experiment harness
# ---------------------------------------------------------------------------

@dataclass
class MethodReport:
    method: str
    status: str = "ok"
    error: str = None
    threshold: float = None
    removed: int = None
    detection: DetectionScore = None
    classification: ClassificationScore = None
    config_digest: str = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "status": self.status,
            "error": self.error,
            "threshold": self.threshold,
            "removed": self.removed,
            "detection": None if self.detection is None else self.detection.to_dict(),
            "classification": None
            if self.classification is None
            else self.classification.to_dict(),
            "config_digest": self.config_digest,
        }


@dataclass
class ExperimentReport:
    dataset_id: str
    n: int
    k_classes: int
    noise_kind: str
    rate: float
    tune_budget: int
    seeds: dict
    noisy_classification: ClassificationScore
    noisy_config_digest: str
    methods: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "n": self.n,
            "k_classes": self.k_classes,
            "noise_kind": self.noise_kind,
            "rate": self.rate,
            "tune_budget": self.tune_budget,
            "seeds": self.seeds,
            "noisy_classification": self.noisy_classification.to_dict(),
            "noisy_config_digest": self.noisy_config_digest,
            "methods": [m.to_dict() for m in self.methods],
            "artifacts": self.artifacts,
        }

    def method(self, name: str) -> MethodReport:
        for m in self.methods:
            if m.method == name:
                return m
        raise KeyError(name)


def _stage_seeds(seed: int, methods) -> dict:
    names = ["generate", "split", "noise_train", "noise_validation", "tune_noisy"]
    names += [f"tune_{m}" for m in methods]
    names += [f"detect_{m}" for m in methods]
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(names))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(names, children)}


def _resolve_dataset(dataset, n, seed):
    if isinstance(dataset, Dataset):
        return dataset, dataset.provenance.get("generator", "custom")
    if dataset == "binary":
        return gen_binary_synthetic(n or 15100, seed), "binary"
    if dataset == "multiclass":
        return gen_multiclass_synthetic(n or 16500, seed), "multiclass"
    return load_dataset(dataset), os.path.basename(str(dataset))


def _encoded_dataset(part: Dataset, matrix: np.ndarray) -> Dataset:
    schema = ColumnSchema.numeric(
        [f"e{i}" for i in range(matrix.shape[1])],
        target=part.schema.target,
        target_classes=part.schema.target_classes,
    )
    schema.positive_label = part.schema.positive_label
    return Dataset(
        X=matrix, y=part.y, schema=schema, ids=part.ids, noise_mask=part.noise_mask
    )


def run_experiment(dataset, noise_kind, rate, methods, seed, tune_budget,
                   out_dir, *, n=None, nnar_k: int = None, nnar_p: float = 0.5,
                   rounds: int = det.DEFAULT_ROUNDS, fractions=(0.8, 0.1, 0.1),
                   weight_cfg: TrainConfig = None, space: SearchSpace = SearchSpace()) -> ExperimentReport:
    """Run the full protocol for one (dataset, noise kind, rate) cell.

    Every stage is seeded from ``seed`` and its artifacts are persisted
    under ``out_dir``; rerunning with the same arguments reproduces all
    files byte-for-byte. The members of ``methods`` must come from
    ``METHODS``; a method whose cleaning degenerates is reported as failed
    without aborting the rest.
    """
    methods = list(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    os.makedirs(out_dir, exist_ok=True)
    seeds = _stage_seeds(seed, methods)
    ds, dataset_id = _resolve_dataset(dataset, n, seeds["generate"])
    k = ds.k_classes
    metric = "prauc" if k == 2 else "f1_macro"
    if weight_cfg is None:
        weight_cfg = det.DEFAULT_WEIGHT_LEARNING_CFG
    if nnar_k is None:
        # the neighbourhood must widen with the corruption target, otherwise
        # pair exchange saturates the boundary bands and inverts them locally
        nnar_k = max(10, int(np.ceil(66.7 * float(rate or 0.0))))

    train, validation, test = stratified_split(ds, SplitSpec(tuple(fractions), seeds["split"]))

    view = fit_encoding(train)
    enc_train = view.matrix
    enc_val = apply_encoding(view, validation).matrix
    enc_test = apply_encoding(view, test).matrix

    if noise_kind is not None and rate > 0:
        train = inject(train, noise_kind, rate, seeds["noise_train"],
                       k=nnar_k, p=nnar_p, features=enc_train)
        validation = inject(validation, noise_kind, rate, seeds["noise_validation"],
                            k=nnar_k, p=nnar_p, features=enc_val)

    etrain = _encoded_dataset(train, enc_train)
    evalidation = _encoded_dataset(validation, enc_val)
    etest = _encoded_dataset(test, enc_test)

    artifacts = {}
    for name, part in (("train", train), ("validation", validation), ("test", test)):
        save_dataset(part, os.path.join(out_dir, name))
        artifacts[name] = f"{name}.csv"

    noisy_cfg = random_search_tune(etrain, evalidation, tune_budget, metric,
                                   space, seeds["tune_noisy"])
    noisy_model = gbdt.fit(etrain.X, etrain.y, None, noisy_cfg, k_classes=k)
    noisy_digest = det.config_digest(noisy_cfg.__dict__)

    def score_on_test(model) -> ClassificationScore:
        probs = gbdt.predict_proba(model, etest.X)
        pred = np.argmax(probs, axis=1)
        pos = etest.schema.positive_class
        return classification_score(
            etest.y, pred,
            scores=probs[:, pos] if k == 2 else None,
            k_classes=k, positive_class=pos,
        )

    report = ExperimentReport(
        dataset_id=dataset_id,
        n=ds.n,
        k_classes=k,
        noise_kind=noise_kind if rate and rate > 0 else None,
        rate=float(rate or 0.0),
        tune_budget=tune_budget,
        seeds=seeds,
        noisy_classification=score_on_test(noisy_model),
        noisy_config_digest=noisy_digest,
        artifacts=artifacts,
    )

    if report.noise_kind is None:
        _persist_report(report, out_dir)
        return report

    noisy_probs = None
    for method in methods:
        entry = MethodReport(method=method)
        report.methods.append(entry)
        try:
            if method == "product_threshold":
                dyn = compute_dynamics(noisy_model, etrain.X, etrain.y)
                threshold = det.auto_valley_threshold(dyn.product)
                result = det.detect_by_product(dyn, threshold)
            elif method == "weight_threshold":
                traj = det.learn_weights(etrain.X, etrain.y, weight_cfg, rounds, k_classes=k)
                threshold = det.auto_valley_threshold(traj.final)
                result = det.detect_by_weight(traj, threshold)
            else:
                if noisy_probs is None:
                    noisy_probs = gbdt.predict_proba(noisy_model, etrain.X)
                if method == "low_probability":
                    result = det.heuristic_low_probability(noisy_probs, etrain.y)
                elif method == "short_confidence":
                    result = det.heuristic_short_confidence(noisy_probs, etrain.y)
                else:
                    result = det.heuristic_long_confidence(noisy_probs, etrain.y)
                threshold = result.threshold

            entry.threshold = float(threshold)
            entry.removed = int(result.flags.sum())
            entry.detection = detection_score(result.flags, train.noise_mask)
            det.save_flags(result, train.ids, os.path.join(out_dir, f"flags_{method}"),
                           det.config_digest({"method": method, "threshold": threshold}))
            artifacts[f"flags_{method}"] = f"flags_{method}.flags.csv"

            cleaned = etrain.without(result.flags)
            if cleaned.n < k or len(np.unique(cleaned.y)) < k:
                raise ValueError("cleaning removed an entire class")
            cfg = random_search_tune(cleaned, evalidation, tune_budget, metric,
                                     space, seeds[f"tune_{method}"])
            entry.config_digest = det.config_digest(cfg.__dict__)
            model = gbdt.fit(cleaned.X, cleaned.y, None, cfg, k_classes=k)
            entry.classification = score_on_test(model)
        except Exception as exc:  # degrade to a reported failure, keep the sweep alive
            entry.status = "failed"
            entry.error = str(exc)

    _persist_report(report, out_dir)
    return report


def _persist_report(report: ExperimentReport, out_dir: str) -> None:
    path = os.path.join(out_dir, "report.json")
    _atomic_write(path, json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n")
    report.artifacts["report"] = "report.json"


def reports_to_csv(reports, path: str) -> None:
    """Flatten experiment reports into one table row per (noise, rate, method)."""
    cols = ["dataset", "noise", "rate", "method", "status", "threshold", "removed",
            "fpr", "fnr", "det_precision", "det_recall",
            "precision", "recall", "f1", "f1_macro", "prauc"]

    def fmt(value):
        return "" if value is None else (repr(value) if isinstance(value, float) else str(value))

    lines = [",".join(cols)]
    for rep in reports:
        base = [rep.dataset_id, rep.noise_kind or "none", repr(rep.rate)]
        noisy = rep.noisy_classification
        lines.append(",".join(
            base + ["noisy_baseline", "ok", "", "", "", "", "", ""]
            + [fmt(noisy.precision), fmt(noisy.recall), fmt(noisy.f1),
               fmt(noisy.f1_macro), fmt(noisy.prauc)]
        ))
        for m in rep.methods:
            d = m.detection
            c = m.classification
            lines.append(",".join(
                base + [m.method, m.status, fmt(m.threshold), fmt(m.removed)]
                + ([fmt(d.fpr), fmt(d.fnr), fmt(d.precision), fmt(d.recall)]
                   if d else ["", "", "", ""])
                + ([fmt(c.precision), fmt(c.recall), fmt(c.f1), fmt(c.f1_macro), fmt(c.prauc)]
                   if c else ["", "", "", "", ""])
            ))
    _atomic_write(path, "\n".join(lines) + "\n")
