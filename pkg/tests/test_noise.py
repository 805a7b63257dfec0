import numpy as np
import pytest

from cartoboost import (
    SplitSpec,
    gen_binary_synthetic,
    gen_multiclass_synthetic,
    inject_ncar,
    inject_nnar,
    stratified_split,
)
from cartoboost.data_io import ColumnSchema, Dataset
from cartoboost.noise import knn_table


@pytest.fixture(scope="module")
def binary_small():
    return gen_binary_synthetic(2000, seed=5)


@pytest.fixture(scope="module")
def multiclass_small():
    return gen_multiclass_synthetic(2400, seed=5)


class TestGenerators:
    def test_binary_paper_shape(self):
        ds = gen_binary_synthetic(15100, seed=7)
        assert ds.X.shape == (15100, 2)
        assert set(np.unique(ds.y)) == {0, 1}

    def test_binary_determinism(self):
        a = gen_binary_synthetic(500, seed=3)
        b = gen_binary_synthetic(500, seed=3)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.y, b.y)
        assert not np.array_equal(a.X, gen_binary_synthetic(500, seed=4).X)

    def test_binary_imbalance_band(self, binary_small):
        frac = (binary_small.y == 1).mean()
        assert 0.25 <= frac <= 0.45

    def test_binary_too_small(self):
        with pytest.raises(ValueError, match="too small"):
            gen_binary_synthetic(50, seed=0)

    def test_multiclass_paper_shape(self):
        ds = gen_multiclass_synthetic(16500, seed=7)
        assert ds.X.shape == (16500, 2)
        assert ds.k_classes == 4

    def test_multiclass_counts_strictly_decreasing(self, multiclass_small):
        counts = np.bincount(multiclass_small.y, minlength=4)
        assert (np.diff(counts) < 0).all()

    def test_multiclass_determinism(self):
        a = gen_multiclass_synthetic(600, seed=9)
        b = gen_multiclass_synthetic(600, seed=9)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)

    def test_ids_unique_and_stable(self, binary_small):
        assert np.array_equal(binary_small.ids, np.arange(binary_small.n))


class TestNcar:
    def test_exact_count(self, binary_small):
        for rate in (0.1, 0.2, 0.37):
            noisy = inject_ncar(binary_small, rate, seed=1)
            assert noisy.noise_mask.sum() == round(rate * binary_small.n)

    def test_small_count_exact(self):
        ds = gen_binary_synthetic(100, seed=1).subset(np.arange(10))
        noisy = inject_ncar(ds, 0.2, seed=0)
        assert noisy.noise_mask.sum() == 2

    def test_binary_flip_identity(self, binary_small):
        noisy = inject_ncar(binary_small, 0.15, seed=2)
        m = noisy.noise_mask
        assert np.array_equal(noisy.y[m], 1 - binary_small.y[m])
        assert np.array_equal(noisy.y[~m], binary_small.y[~m])

    def test_features_ids_schema_untouched(self, binary_small):
        noisy = inject_ncar(binary_small, 0.1, seed=3)
        assert noisy.X is binary_small.X or np.array_equal(noisy.X, binary_small.X)
        assert np.array_equal(noisy.ids, binary_small.ids)
        assert noisy.schema is binary_small.schema

    def test_multiclass_rank_order_preserved(self):
        ds = gen_multiclass_synthetic(16500, seed=7)
        before = np.bincount(ds.y, minlength=4)
        noisy = inject_ncar(ds, 0.3, seed=11)
        after = np.bincount(noisy.y, minlength=4)
        assert np.array_equal(np.argsort(-before, kind="stable"),
                              np.argsort(-after, kind="stable"))
        assert (np.diff(after[np.argsort(-before, kind="stable")]) < 0).all()
        assert noisy.noise_mask.sum() == round(0.3 * ds.n)

    def test_multiclass_changed_rows_change_class(self, multiclass_small):
        noisy = inject_ncar(multiclass_small, 0.2, seed=4)
        m = noisy.noise_mask
        assert (noisy.y[m] != multiclass_small.y[m]).all()

    def test_invalid_rate(self, binary_small):
        for rate in (0.0, -0.1, 0.51, 0.7):
            with pytest.raises(ValueError, match="invalid rate"):
                inject_ncar(binary_small, rate, seed=0)

    def test_rejects_already_masked(self, binary_small):
        noisy = inject_ncar(binary_small, 0.1, seed=0)
        with pytest.raises(ValueError, match="noise mask"):
            inject_ncar(noisy, 0.1, seed=0)

    def test_determinism(self, binary_small):
        a = inject_ncar(binary_small, 0.1, seed=8)
        b = inject_ncar(binary_small, 0.1, seed=8)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.noise_mask, b.noise_mask)


class TestNnar:
    def test_count_even_and_near_target(self, binary_small):
        noisy = inject_nnar(binary_small, 0.1, k=10, p=0.5, seed=4)
        count = int(noisy.noise_mask.sum())
        target = round(0.1 * binary_small.n)
        assert count % 2 == 0
        assert abs(count - target) <= 1

    def test_pairs_validate_against_independent_knn(self, binary_small):
        from scipy.spatial import cKDTree

        noisy = inject_nnar(binary_small, 0.1, k=10, p=0.5, seed=4)
        pairs = noisy.provenance["noise"]["pairs"]
        assert len(pairs) * 2 == int(noisy.noise_mask.sum())
        tree = cKDTree(binary_small.X)
        _, nearest = tree.query(binary_small.X, k=11)
        for a, b in pairs:
            assert b in nearest[a][1:]  # partner within initiator's 10-NN
            assert binary_small.y[a] != binary_small.y[b]
            assert noisy.noise_mask[a] and noisy.noise_mask[b]

    def test_labels_exchanged(self, binary_small):
        noisy = inject_nnar(binary_small, 0.1, k=10, p=0.5, seed=4)
        for a, b in noisy.provenance["noise"]["pairs"]:
            assert noisy.y[a] == binary_small.y[b]
            assert noisy.y[b] == binary_small.y[a]

    def test_infeasible_on_separated_blobs(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal(0.0, 0.3, (300, 2)), rng.normal(50.0, 0.3, (300, 2))])
        ds = Dataset(X=X, y=np.array([0] * 300 + [1] * 300),
                     schema=ColumnSchema.numeric(["f0", "f1"]),
                     ids=np.arange(600))
        with pytest.raises(ValueError, match="NNAR infeasible"):
            inject_nnar(ds, 0.1, k=5, p=0.5, seed=0)

    def test_non_convergence_when_capacity_too_small(self):
        # one adjacent cross-label pair only; rate demands far more
        rng = np.random.default_rng(1)
        left = rng.normal(0.0, 0.2, (200, 2))
        right = rng.normal(40.0, 0.2, (198, 2))
        bridge = np.array([[20.0, 0.0], [20.1, 0.0]])
        X = np.vstack([left, bridge[:1], right, bridge[1:]])
        y = np.array([0] * 201 + [1] * 199)
        ds = Dataset(X=X, y=y, schema=ColumnSchema.numeric(["f0", "f1"]),
                     ids=np.arange(400))
        with pytest.raises(ValueError, match="NNAR did not converge"):
            inject_nnar(ds, 0.5, k=3, p=0.5, seed=0)

    def test_feature_override_changes_distances(self, binary_small):
        # a permuted feature space changes the neighbourhoods and thus the pairs
        base = inject_nnar(binary_small, 0.1, k=10, p=0.5, seed=4)
        scrambled = inject_nnar(binary_small, 0.1, k=10, p=0.5, seed=4,
                                features=binary_small.X[::-1].copy())
        assert base.provenance["noise"]["pairs"] != scrambled.provenance["noise"]["pairs"]

    def test_determinism(self, binary_small):
        a = inject_nnar(binary_small, 0.1, k=10, p=0.5, seed=9)
        b = inject_nnar(binary_small, 0.1, k=10, p=0.5, seed=9)
        assert np.array_equal(a.y, b.y)
        assert a.provenance["noise"]["pairs"] == b.provenance["noise"]["pairs"]


class TestKnnTable:
    def test_matches_scipy(self, binary_small):
        from scipy.spatial import cKDTree

        table = knn_table(binary_small.X, 5)
        tree = cKDTree(binary_small.X)
        dists, nearest = tree.query(binary_small.X, k=6)
        mine = np.sort(table, axis=1)
        scipys = np.sort(nearest[:, 1:], axis=1)
        # allow tie permutations: compare distance multisets row-wise
        diffs = binary_small.X[:, None, :] - binary_small.X[table]
        d_mine = np.sort(np.sqrt((diffs ** 2).sum(-1)), axis=1)
        assert np.allclose(d_mine, np.sort(dists[:, 1:], axis=1), atol=1e-9)
        assert (mine == scipys).mean() > 0.999

    def test_blockwise_equals_single_block(self, binary_small):
        a = knn_table(binary_small.X, 4, block=64)
        b = knn_table(binary_small.X, 4, block=10_000)
        assert np.array_equal(a, b)


class TestStratifiedSplit:
    def test_paper_split_sizes(self):
        ds = gen_binary_synthetic(15100, seed=7)
        train, validation, test = stratified_split(ds, SplitSpec((0.8, 0.1, 0.1), 1))
        assert abs(train.n - 12080) <= 1
        assert abs(validation.n - 1510) <= 1
        assert abs(test.n - 1510) <= 1
        assert train.n + validation.n + test.n == ds.n

    def test_breast_cancer_style_split(self):
        ds = gen_binary_synthetic(569, seed=7)
        train, validation, test = stratified_split(
            ds, SplitSpec((0.67, 0.165, 0.165), 1))
        assert abs(train.n - 381) <= 2
        assert abs(validation.n - 94) <= 2
        assert abs(test.n - 94) <= 2

    def test_per_class_proportions(self, multiclass_small):
        spec = SplitSpec((0.8, 0.1, 0.1), 2)
        parts = stratified_split(multiclass_small, spec)
        for frac, part in zip(spec.fractions, parts):
            for c in range(4):
                expected = frac * (multiclass_small.y == c).sum()
                assert abs((part.y == c).sum() - expected) <= 1

    def test_partition_is_exact(self, binary_small):
        parts = stratified_split(binary_small, SplitSpec((0.6, 0.2, 0.2), 3))
        all_ids = np.concatenate([p.ids for p in parts])
        assert np.array_equal(np.sort(all_ids), np.sort(binary_small.ids))

    def test_single_class_dataset_splits(self):
        ds = Dataset(X=np.random.default_rng(0).normal(size=(30, 2)),
                     y=np.zeros(30, dtype=int),
                     schema=ColumnSchema.numeric(["f0", "f1"], target_classes=["0"]),
                     ids=np.arange(30))
        parts = stratified_split(ds, SplitSpec((0.5, 0.25, 0.25), 0))
        assert [p.n for p in parts] == [15, 8, 7] or [p.n for p in parts] == [15, 7, 8]

    def test_class_too_small(self):
        ds = Dataset(X=np.zeros((5, 1)), y=np.array([0, 0, 0, 1, 1]),
                     schema=ColumnSchema.numeric(["f0"]), ids=np.arange(5))
        with pytest.raises(ValueError, match="class too small to stratify"):
            stratified_split(ds, SplitSpec((0.34, 0.33, 0.33), 0))

    def test_determinism(self, binary_small):
        a = stratified_split(binary_small, SplitSpec((0.8, 0.1, 0.1), 5))
        b = stratified_split(binary_small, SplitSpec((0.8, 0.1, 0.1), 5))
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.ids, pb.ids)

    def test_invalid_fractions(self, binary_small):
        with pytest.raises(ValueError):
            stratified_split(binary_small, SplitSpec((0.5, 0.5, 0.5), 0))
