import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cartoboost import (
    TrainConfig,
    TrainingDynamics,
    WeightCollapseError,
    WeightTrajectory,
    auto_valley_threshold,
    detect_by_product,
    detect_by_weight,
    detection_score,
    gen_binary_synthetic,
    heuristic_long_confidence,
    heuristic_low_probability,
    heuristic_short_confidence,
    inject_ncar,
    learn_weights,
    stratified_split,
    validation_threshold_search,
)
from cartoboost.detection import FLAG_IF_ABOVE, FLAG_IF_BELOW, flags_csv_text, load_flags, save_flags
from cartoboost.noise import SplitSpec


def make_dynamics(product):
    product = np.asarray(product, dtype=np.float64)
    return TrainingDynamics(
        mu=np.sqrt(product), sigma=np.zeros_like(product),
        correctness=np.sqrt(product), product=product, num_iterations=10,
    )


class TestThresholdDetectors:
    def test_product_basic(self):
        result = detect_by_product(make_dynamics([0.9, 0.1, 0.5]), 0.3)
        assert result.flags.tolist() == [False, True, False]
        assert result.direction == FLAG_IF_BELOW
        assert result.score_name == "product"

    def test_product_zero_threshold_flags_nothing(self):
        result = detect_by_product(make_dynamics([0.0, 0.5, 1.0]), 0.0)
        assert not result.flags.any()

    def test_product_threshold_one_flags_all_below_one(self):
        result = detect_by_product(make_dynamics([0.0, 0.999, 1.0]), 1.0)
        assert result.flags.tolist() == [True, True, False]

    def test_threshold_range_enforced(self):
        dyn = make_dynamics([0.5])
        for bad in (-0.1, 1.1):
            with pytest.raises(ValueError, match="threshold"):
                detect_by_product(dyn, bad)
            with pytest.raises(ValueError, match="threshold"):
                detect_by_weight(WeightTrajectory(np.array([[0.5]])), bad)

    def test_weight_basic(self):
        traj = WeightTrajectory(np.array([[1.0, 0.0, 0.7]]))
        result = detect_by_weight(traj, 0.5)
        assert result.flags.tolist() == [False, True, False]

    def test_weight_zero_threshold_flags_nothing(self):
        traj = WeightTrajectory(np.array([[1.0, 0.0, 0.7]]))
        assert not detect_by_weight(traj, 0.0).flags.any()

    def test_self_consistency_and_idempotence(self):
        result = detect_by_product(make_dynamics([0.9, 0.1, 0.5, 0.3]), 0.4)
        assert np.array_equal(result.recompute_flags(), result.flags)
        again = detect_by_product(make_dynamics([0.9, 0.1, 0.5, 0.3]), 0.4)
        assert np.array_equal(again.flags, result.flags)


@pytest.fixture(scope="module")
def noisy_toy():
    ds = gen_binary_synthetic(1200, seed=5)
    return inject_ncar(ds, 0.1, seed=2)


@pytest.fixture(scope="module")
def toy_trajectory(noisy_toy):
    cfg = TrainConfig(num_iterations=60, learning_rate=1.0, max_depth=6)
    return learn_weights(noisy_toy.X, noisy_toy.y, cfg, 6)


class TestLearnWeights:
    def test_trajectory_shape_and_range(self, toy_trajectory, noisy_toy):
        assert toy_trajectory.weights.shape == (6, noisy_toy.n)
        assert toy_trajectory.rounds == 6
        assert toy_trajectory.weights.min() >= 0.0
        assert toy_trajectory.weights.max() <= 1.0

    def test_weights_non_increasing(self, toy_trajectory):
        diffs = np.diff(toy_trajectory.weights, axis=0)
        assert (diffs <= 0.0).all()

    def test_noisy_sink_below_clean(self, toy_trajectory, noisy_toy):
        final = toy_trajectory.final
        mask = noisy_toy.noise_mask
        assert final[mask].mean() < 0.5 < final[~mask].mean()

    def test_instant_zero_for_hopeless_instance(self, noisy_toy):
        # product 0 in round one clips the weight straight to zero
        cfg = TrainConfig(num_iterations=30, learning_rate=1.0, max_depth=5)
        traj = learn_weights(noisy_toy.X, noisy_toy.y, cfg, 1)
        from cartoboost import compute_dynamics, fit

        model = fit(noisy_toy.X, noisy_toy.y, None, cfg, k_classes=2)
        dyn = compute_dynamics(model, noisy_toy.X, noisy_toy.y)
        hopeless = dyn.product == 0.0
        assert hopeless.any()
        assert (traj.final[hopeless] == 0.0).all()

    def test_perfect_instances_keep_unit_weight(self, separable_toy):
        X, y = separable_toy
        cfg = TrainConfig(num_iterations=40, learning_rate=1.0, max_depth=3, l2_reg=0.1)
        traj = learn_weights(X, y, cfg, 3)
        assert (traj.final > 0.9).mean() > 0.95

    def test_weight_collapse_raises(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(120, 2))
        y = rng.integers(0, 2, 120)  # unlearnable labels
        cfg = TrainConfig(num_iterations=20, learning_rate=0.05, max_depth=2)
        with pytest.raises(WeightCollapseError, match="weight collapse"):
            learn_weights(X, y, cfg, 10, initial_weight=0.01)

    def test_invalid_rounds(self, noisy_toy):
        with pytest.raises(ValueError, match="rounds"):
            learn_weights(noisy_toy.X, noisy_toy.y, TrainConfig(), 0)


class TestAutoValleyThreshold:
    def test_bimodal_sample(self):
        rng = np.random.default_rng(0)
        values = np.clip(np.concatenate([
            rng.normal(0.05, 0.03, 500), rng.normal(0.95, 0.03, 1500)
        ]), 0, 1)
        thr = auto_valley_threshold(values)
        assert 0.2 < thr < 0.8

    def test_separates_modes(self):
        rng = np.random.default_rng(1)
        lo = np.clip(rng.normal(0.1, 0.05, 400), 0, 1)
        hi = np.clip(rng.normal(0.9, 0.05, 600), 0, 1)
        thr = auto_valley_threshold(np.concatenate([lo, hi]))
        assert (lo < thr).mean() > 0.98
        assert (hi >= thr).mean() > 0.98

    def test_identical_values_fallback(self):
        thr, info = auto_valley_threshold(np.full(50, 0.7), return_info=True)
        assert thr == pytest.approx(0.7)
        assert info["fallback"] == "unimodal"

    def test_unimodal_fallback_tenth_percentile(self):
        # one flat plateau of occupied bins: a single peak, no valley
        values = np.linspace(0.3, 0.7, 500)
        thr, info = auto_valley_threshold(values, return_info=True)
        assert info["fallback"] == "unimodal"
        assert thr == pytest.approx(np.percentile(values, 10))

    def test_mirror_symmetry(self):
        rng = np.random.default_rng(3)
        values = np.clip(np.concatenate([
            rng.normal(0.2, 0.05, 700), rng.normal(0.8, 0.05, 700)
        ]), 0, 1)
        a = auto_valley_threshold(values)
        b = auto_valley_threshold(1.0 - values)
        assert abs((a + b) - 1.0) <= 1.0 / 50 + 1e-9

    def test_too_few_values(self):
        with pytest.raises(ValueError, match="too few values"):
            auto_valley_threshold(np.linspace(0, 1, 19))

    def test_out_of_range_values(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            auto_valley_threshold(np.linspace(-0.5, 0.5, 30))


class TestHeuristics:
    def test_low_probability(self):
        probs = np.array([[0.99, 0.01], [0.54, 0.46], [0.55, 0.45]])
        y = np.array([0, 0, 0])
        result = heuristic_low_probability(probs, y)
        assert result.flags.tolist() == [False, True, False]  # strict below 0.55
        assert result.direction == FLAG_IF_BELOW
        assert result.threshold == 0.55

    def test_low_probability_custom_threshold(self):
        probs = np.array([[0.7, 0.3]])
        assert heuristic_low_probability(probs, np.array([0]), threshold=0.8).flags[0]

    def test_short_confidence(self):
        probs = np.array([[0.96, 0.04], [0.5, 0.5], [0.03, 0.97]])
        y = np.array([1, 1, 0])
        result = heuristic_short_confidence(probs, y)
        assert result.flags.tolist() == [True, False, True]
        assert result.threshold == 0.05

    def test_long_confidence(self):
        probs = np.array([[0.04, 0.96], [0.5, 0.5], [0.96, 0.04]])
        y = np.array([0, 0, 0])
        result = heuristic_long_confidence(probs, y)
        assert result.flags.tolist() == [True, False, False]
        assert result.direction == FLAG_IF_ABOVE

    def test_midpoint_flags_nothing(self):
        probs = np.array([[0.5, 0.5]])
        y = np.array([1])
        assert not heuristic_short_confidence(probs, y).flags[0]
        assert not heuristic_long_confidence(probs, y).flags[0]
        assert heuristic_low_probability(probs, y).flags[0]  # 0.5 < 0.55


@pytest.fixture(scope="module")
def split_noisy():
    ds = gen_binary_synthetic(1500, seed=6)
    train, validation, _ = stratified_split(ds, SplitSpec((0.7, 0.15, 0.15), 1))
    return inject_ncar(train, 0.1, seed=3), validation


class TestValidationThresholdSearch:
    def test_single_candidate_returned(self, split_noisy):
        train, validation = split_noisy
        dyn = make_dynamics(np.linspace(0, 1, train.n))
        cheap = TrainConfig(num_iterations=10, max_depth=3)
        assert validation_threshold_search(train, validation, dyn, [0.25],
                                           "prauc", cheap) == 0.25

    def test_class_deleting_candidate_never_selected(self, split_noisy):
        train, validation = split_noisy
        # product 0 for every class-1 instance: threshold 0.9 would erase the class
        product = np.where(train.y == 1, 0.0, 1.0)
        dyn = make_dynamics(product)
        cheap = TrainConfig(num_iterations=10, max_depth=3)
        best = validation_threshold_search(train, validation, dyn, [0.5, 0.9],
                                           "prauc", cheap)
        assert best == 0.5

    def test_empty_candidates_rejected(self, split_noisy):
        train, validation = split_noisy
        with pytest.raises(ValueError, match="candidates"):
            validation_threshold_search(train, validation, make_dynamics([1.0]),
                                        [], "prauc", TrainConfig(num_iterations=5))

    def test_detects_better_than_extreme_candidates(self, split_noisy):
        train, validation = split_noisy
        cfg = TrainConfig(num_iterations=60, learning_rate=1.0, max_depth=6)
        traj = learn_weights(train.X, train.y, cfg, 6)
        cheap = TrainConfig(num_iterations=20, max_depth=3)
        best = validation_threshold_search(train, validation, traj,
                                           [0.05, 0.5, 0.95], "prauc", cheap)
        mask = train.noise_mask

        def fnr(threshold):
            flags = traj.final < threshold
            return detection_score(flags, mask).fnr

        assert fnr(best) <= max(fnr(0.05), fnr(0.95))


class TestFlagsPersistence:
    def test_round_trip(self, tmp_path):
        result = detect_by_product(make_dynamics([0.9, 0.2, 0.4]), 0.3)
        ids = np.array([7, 8, 9])
        csv_path, header_path = save_flags(result, ids, str(tmp_path / "out"), "abc")
        got_ids, got_scores, got_flags = load_flags(csv_path)
        assert np.array_equal(got_ids, ids)
        assert np.array_equal(got_scores, result.scores)
        assert np.array_equal(got_flags, result.flags)

    def test_csv_text_is_stable(self):
        result = detect_by_product(make_dynamics([0.25]), 0.5)
        text = flags_csv_text(result, [3])
        assert text == "id,score,flag\n3,0.25,1\n"

    def test_load_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="not a flags file"):
            load_flags(str(path))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60),
       st.floats(0, 1))
def test_detection_flags_always_consistent(scores, threshold):
    result = detect_by_product(make_dynamics(scores), threshold)
    assert np.array_equal(result.flags, np.asarray(scores) < threshold)
