"""Synthetic dataset generators, label-noise injectors, and stratified splitting.

Two noise models are provided. NCAR flips a seeded random subset of labels
independently of the features; NNAR exchanges labels between nearby
instances of different classes, which concentrates the corruption along
class boundaries. Both record an exact ground-truth mask of corrupted rows.
"""

from dataclasses import dataclass

import numpy as np

from .data_io import ColumnSchema, Dataset

NNAR_MAX_PASSES = 100
NCAR_ATTEMPT_BUDGET_FACTOR = 100


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def validate(self):
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ValueError("fractions must be three positive values")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")


def _largest_remainder_counts(total: int, fractions) -> np.ndarray:
    exact = np.array(fractions) * total
    counts = np.floor(exact).astype(np.int64)
    order = np.argsort(-(exact - counts), kind="stable")
    for i in range(total - counts.sum()):
        counts[order[i % len(fractions)]] += 1
    return counts


def _moons(rng, n0: int, n1: int, noise: float, center, scale=1.0):
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    pts = np.vstack([upper, lower]) * scale
    pts += rng.normal(0.0, noise, pts.shape)
    return pts + np.asarray(center)


def _circles(rng, n0: int, n1: int, noise: float, center, radius=1.0, factor=0.5):
    t0 = rng.uniform(0.0, 2 * np.pi, n0)
    t1 = rng.uniform(0.0, 2 * np.pi, n1)
    outer = radius * np.column_stack([np.cos(t0), np.sin(t0)])
    inner = radius * factor * np.column_stack([np.cos(t1), np.sin(t1)])
    pts = np.vstack([outer, inner])
    pts += rng.normal(0.0, noise, pts.shape)
    return pts + np.asarray(center)


def _blob(rng, n: int, center, std: float):
    return rng.normal(0.0, std, (n, 2)) + np.asarray(center)


def _class_counts(n: int, fractions) -> np.ndarray:
    counts = _largest_remainder_counts(n, fractions)
    # generators promise strictly decreasing class counts
    for k in range(1, len(counts)):
        while counts[k] >= counts[k - 1]:
            counts[k] -= 1
            counts[0] += 1
    return counts


def _stripe_columns(rng, col_specs, reach, gap):
    """Tall columns of alternating single-class stripes with sharp boundaries.

    ``col_specs`` is a list of per-column stripe lists [(class, count), ...].
    Stripe width is ``reach`` times the local 10-nearest-neighbour radius,
    so the fraction of points adjacent to a class boundary follows directly
    from ``reach``. Boundaries sit at fixed axis-aligned x positions, so
    trees resolve them within the first boosting iterations; columns are
    separated by ``gap`` units of empty space.
    """
    pts, ys = [], []
    x_edge = 0.0
    for stripes in col_specs:
        total = sum(c for _, c in stripes)
        if total == 0:
            continue
        height = max(2.0, min(8.0, total / 160.0))
        for cls, cnt in stripes:
            if cnt == 0:
                continue
            width = reach * reach * 10.0 * height / (np.pi * cnt)
            x = rng.uniform(x_edge, x_edge + width, cnt)
            yy = rng.uniform(-height / 2, height / 2, cnt)
            pts.append(np.column_stack([x, yy]))
            ys.append(np.full(cnt, cls))
            x_edge += width
        x_edge += gap
    return np.vstack(pts), np.concatenate(ys).astype(np.int64)


N_PATCH_COLUMNS = 6
STRIPES_PER_COLUMN = 4
PATCH_GAP = 1.5
# stripe width in units of the 10-NN radius: at 1.35 nearly every field
# point has cross-class neighbours, which keeps label exchange feasible at
# high rates
PATCH_REACH = 1.35


def gen_binary_synthetic(n: int, seed: int) -> Dataset:
    """2-D binary set at roughly 2:1 imbalance: moons, circles, blobs and
    a field of boundary-pair patches."""
    if n < 100:
        raise ValueError("too small: need at least 100 instances")
    rng = np.random.default_rng(seed)
    counts = _class_counts(n, (2.0 / 3.0, 1.0 / 3.0))

    n_cols = N_PATCH_COLUMNS
    field_total = int(round(0.64 * n))
    field1 = min(field_total // 2, int(counts[1]) - 2 * n_cols)
    field0 = field_total - field1
    per_col1 = _largest_remainder_counts(field1, [1.0 / n_cols] * n_cols)
    per_col0 = _largest_remainder_counts(field0, [1.0 / n_cols] * n_cols)
    col_specs = []
    half = STRIPES_PER_COLUMN // 2
    for i in range(n_cols):
        ones = _largest_remainder_counts(int(per_col1[i]), [1.0 / half] * half)
        zeros = _largest_remainder_counts(int(per_col0[i]), [1.0 / half] * half)
        seq = []
        for j in range(half):
            seq.append((0, int(zeros[j])))
            seq.append((1, int(ones[j])))
        col_specs.append(seq if i % 2 == 0 else seq[::-1])

    shares = (0.45, 0.3, 0.25)
    c0 = _largest_remainder_counts(int(counts[0]) - field0, shares)
    c1 = _largest_remainder_counts(int(counts[1]) - field1, shares)

    moons = _moons(rng, c0[0], c1[0], noise=0.30, center=(0.0, 0.0), scale=1.4)
    circles = _circles(rng, c0[1], c1[1], noise=0.18, center=(4.2, 0.3),
                       radius=1.3, factor=0.68)
    blob0 = _blob(rng, c0[2], center=(-2.6, 2.6), std=0.55)
    blob1 = _blob(rng, c1[2], center=(-2.05, 2.14), std=0.50)
    patch_x, patch_y = _stripe_columns(rng, col_specs, PATCH_REACH, PATCH_GAP)
    patch_x = patch_x + np.array([-48.0, -6.0])

    X = np.vstack([moons, circles, blob0, blob1, patch_x])
    y = np.concatenate([
        np.zeros(c0[0]), np.ones(c1[0]),
        np.zeros(c0[1]), np.ones(c1[1]),
        np.zeros(c0[2]), np.ones(c1[2]),
        patch_y,
    ]).astype(np.int64)
    perm = rng.permutation(n)
    X, y = X[perm], y[perm]

    return Dataset(
        X=X,
        y=y,
        schema=ColumnSchema.numeric(["f0", "f1"]),
        ids=np.arange(n),
        provenance={
            "generator": "binary_synthetic",
            "seed": int(seed),
            "n": int(n),
            "components": {"moons": 0.162, "circles": 0.108, "blobs": 0.09,
                           "boundary_stripe_clusters": 0.64},
            "class_fractions": [2.0 / 3.0, 1.0 / 3.0],
        },
    )


# each multiclass patch pairs two classes; cycle covers all six pairs
_MULTI_PAIR_CYCLE = [(0, 1), (2, 3), (1, 2), (0, 3), (0, 2), (1, 3)]


def gen_multiclass_synthetic(n: int, seed: int) -> Dataset:
    """2-D four-class set with strictly decreasing class counts."""
    if n < 100:
        raise ValueError("too small: need at least 100 instances")
    rng = np.random.default_rng(seed)
    counts = _class_counts(n, (0.36, 0.28, 0.21, 0.15))

    n_patches = N_PATCH_COLUMNS
    patch_total = int(round(0.4 * n))
    per_patch = _largest_remainder_counts(patch_total, [1.0 / n_patches] * n_patches)
    col_specs = []
    patched = np.zeros(4, dtype=np.int64)
    for i in range(n_patches):
        a, b = _MULTI_PAIR_CYCLE[i % len(_MULTI_PAIR_CYCLE)]
        n_a = int(per_patch[i]) // 2
        n_b = int(per_patch[i]) - n_a
        col_specs.append([(a, n_a), (b, n_b)])
        patched[a] += n_a
        patched[b] += n_b

    rest = counts - patched
    if (rest < 2).any():
        raise ValueError("too small: class budget exhausted by patches")
    # classes 0/1 share a moon pair, 2/3 a circle pair; every class gets a blob
    blob_n = [int(round(r * 0.4)) for r in rest]
    shape_n = [int(r) - b for r, b in zip(rest, blob_n)]

    moons = _moons(rng, shape_n[0], shape_n[1], noise=0.17, center=(0.0, 0.0), scale=1.5)
    circles = _circles(rng, shape_n[2], shape_n[3], noise=0.10, center=(4.6, 0.2),
                       radius=1.4, factor=0.55)
    blobs = [
        _blob(rng, blob_n[0], center=(-2.8, 2.4), std=0.55),
        _blob(rng, blob_n[1], center=(-1.9, 1.5), std=0.50),
        _blob(rng, blob_n[2], center=(1.2, 3.2), std=0.50),
        _blob(rng, blob_n[3], center=(2.2, 2.7), std=0.45),
    ]
    patch_x, patch_y = _stripe_columns(rng, col_specs, PATCH_REACH, PATCH_GAP)
    patch_x = patch_x + np.array([-48.0, -6.0])

    X = np.vstack([moons, circles] + blobs + [patch_x])
    y = np.concatenate([
        np.zeros(shape_n[0]), np.ones(shape_n[1]),
        np.full(shape_n[2], 2), np.full(shape_n[3], 3),
        np.zeros(blob_n[0]), np.ones(blob_n[1]),
        np.full(blob_n[2], 2), np.full(blob_n[3], 3),
        patch_y,
    ]).astype(np.int64)
    perm = rng.permutation(n)
    X, y = X[perm], y[perm]

    return Dataset(
        X=X,
        y=y,
        schema=ColumnSchema.numeric(["f0", "f1"], target_classes=["0", "1", "2", "3"]),
        ids=np.arange(n),
        provenance={
            "generator": "multiclass_synthetic",
            "seed": int(seed),
            "n": int(n),
            "class_fractions": [0.36, 0.28, 0.21, 0.15],
        },
    )


def _check_rate(rate: float) -> None:
    if not (0.0 < rate <= 0.5):
        raise ValueError("invalid rate: must lie in (0, 0.5]")


def _require_clean(ds: Dataset) -> None:
    if ds.noise_mask is not None:
        raise ValueError("dataset already carries a noise mask")


def inject_ncar(ds: Dataset, rate: float, seed: int) -> Dataset:
    """Flip exactly round(rate * n) labels completely at random.

    Binary labels flip to the other class. Multiclass labels move to a
    uniformly chosen different class, rejecting any move that would break
    the strictly descending class-count order of the clean dataset.
    """
    _check_rate(rate)
    _require_clean(ds)
    rng = np.random.default_rng(seed)
    n = ds.n
    target = int(round(rate * n))
    y = ds.y.copy()
    mask = np.zeros(n, dtype=bool)
    k = ds.k_classes

    if k == 2:
        picks = rng.choice(n, size=target, replace=False)
        y[picks] = 1 - y[picks]
        mask[picks] = True
    else:
        counts = np.bincount(y, minlength=k).astype(np.int64)
        rank = np.argsort(-counts, kind="stable")
        budget = NCAR_ATTEMPT_BUDGET_FACTOR * n
        corrupted = 0
        attempts = 0
        while corrupted < target:
            if attempts >= budget:
                raise ValueError("rate incompatible with count-order constraint")
            attempts += 1
            j = int(rng.integers(n))
            if mask[j]:
                continue
            new_label = int(rng.integers(k - 1))
            if new_label >= y[j]:
                new_label += 1
            counts[y[j]] -= 1
            counts[new_label] += 1
            ordered = all(
                counts[rank[i]] > counts[rank[i + 1]] for i in range(k - 1)
            )
            if not ordered:
                counts[y[j]] += 1
                counts[new_label] -= 1
                continue
            y[j] = new_label
            mask[j] = True
            corrupted += 1

    out = Dataset(
        X=ds.X,
        y=y,
        schema=ds.schema,
        ids=ds.ids,
        noise_mask=mask,
        provenance={**ds.provenance,
                    "noise": {"kind": "ncar", "rate": float(rate), "seed": int(seed),
                              "corrupted": int(mask.sum())}},
    )
    return out


def knn_table(X: np.ndarray, k: int, block: int = 2048) -> np.ndarray:
    """Exact k-nearest-neighbour indices (self excluded), Euclidean, blockwise."""
    n = X.shape[0]
    if k >= n:
        raise ValueError("k must be smaller than the instance count")
    sq = np.sum(X * X, axis=1)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (X[start:stop] @ X.T)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        part = np.argpartition(d2, k, axis=1)[:, :k]
        # order the k candidates by (distance, index) for determinism
        rows = np.arange(stop - start)[:, None]
        cand_d = d2[rows, part]
        order = np.lexsort((part, cand_d), axis=1)
        out[start:stop] = part[rows, order]
    return out


def inject_nnar(ds: Dataset, rate: float, k: int = 10, p: float = 0.5,
                seed: int = 0, features: np.ndarray = None) -> Dataset:
    """Exchange labels between near neighbours of different classes.

    Each pass visits uncorrupted instances in random order; an instance
    with differently-labelled original neighbours swaps labels with one of
    them with probability ``p``, and both rows are marked noisy. Passes
    repeat until round(rate * n) rows are corrupted (rounded down to an
    even count, since corruption happens in pairs). ``features`` overrides
    the distance space, e.g. with an encoded view of the dataset.
    """
    _check_rate(rate)
    _require_clean(ds)
    if not (0.0 < p <= 1.0):
        raise ValueError("swap probability must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    n = ds.n
    space = ds.X if features is None else np.asarray(features, dtype=np.float64)
    if space.shape[0] != n:
        raise ValueError("distance features do not align with dataset rows")
    neighbors = knn_table(space, k)
    y_orig = ds.y
    diff = y_orig[neighbors] != y_orig[:, None]
    if not diff.any(axis=1).any():
        raise ValueError("NNAR infeasible: no differently-labelled pair in any neighbourhood")

    target = int(round(rate * n))
    target -= target % 2
    y = y_orig.copy()
    mask = np.zeros(n, dtype=bool)
    pairs = []
    corrupted = 0
    for _ in range(NNAR_MAX_PASSES):
        if corrupted >= target:
            break
        for j in rng.permutation(n):
            if corrupted >= target:
                break
            if mask[j]:
                continue
            cand = neighbors[j][diff[j] & ~mask[neighbors[j]]]
            if cand.size == 0:
                continue
            if rng.random() >= p:
                continue
            partner = int(cand[rng.integers(cand.size)])
            y[j], y[partner] = y[partner], y[j]
            mask[j] = mask[partner] = True
            pairs.append((int(j), partner))
            corrupted += 2
    if corrupted < target:
        raise ValueError("NNAR did not converge: corruption target not reached")

    return Dataset(
        X=ds.X,
        y=y,
        schema=ds.schema,
        ids=ds.ids,
        noise_mask=mask,
        provenance={**ds.provenance,
                    "noise": {"kind": "nnar", "rate": float(rate), "k": int(k),
                              "p": float(p), "seed": int(seed),
                              "corrupted": int(mask.sum()),
                              "pairs": [[a, b] for a, b in pairs]}},
    )


def inject(ds: Dataset, kind: str, rate: float, seed: int, k: int = 10,
           p: float = 0.5, features: np.ndarray = None) -> Dataset:
    if kind == "ncar":
        return inject_ncar(ds, rate, seed)
    if kind == "nnar":
        return inject_nnar(ds, rate, k=k, p=p, seed=seed, features=features)
    raise ValueError(f"unknown noise kind {kind!r}")


def stratified_split(ds: Dataset, spec: SplitSpec):
    """Split into (train, validation, test) preserving per-class proportions."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    classes = np.unique(ds.y)
    parts = [[], [], []]
    for c in classes:
        members = np.nonzero(ds.y == c)[0]
        if members.size < 3:
            raise ValueError(f"class too small to stratify: class {c} has {members.size} rows")
        members = members[rng.permutation(members.size)]
        counts = _largest_remainder_counts(members.size, spec.fractions)
        stops = np.cumsum(counts)
        parts[0].append(members[: stops[0]])
        parts[1].append(members[stops[0]: stops[1]])
        parts[2].append(members[stops[1]:])
    out = []
    for i, name in enumerate(("train", "validation", "test")):
        idx = np.sort(np.concatenate(parts[i]))
        sub = ds.subset(idx)
        sub.provenance = {**ds.provenance,
                          "split": {"part": name, "fractions": list(spec.fractions),
                                    "seed": int(spec.seed)}}
        out.append(sub)
    return tuple(out)
