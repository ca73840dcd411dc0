import numpy as np
import pytest

from services.stute import compute_weights, km_estimator, stute_order


def test_uncensored_weights_are_uniform():
    w = compute_weights([3.0, 1.0, 2.0, 5.0], [1, 1, 1, 1])
    np.testing.assert_array_equal(w.weights, np.full(4, 0.25))
    np.testing.assert_array_equal(w.order, [1, 2, 0, 3])


def test_hand_telescoped_example():
    w = compute_weights([1.0, 2.0, 3.0], [1, 0, 1])
    np.testing.assert_allclose(w.weights, [1 / 3, 0.0, 2 / 3], atol=1e-15)


def test_single_censored_observation():
    assert compute_weights([2.0], [0]).weights.tolist() == [0.0]
    assert compute_weights([2.0], [0], redistribute_last=True).weights.tolist() == [1.0]


def test_last_censored_leaves_mass_unassigned():
    w = compute_weights([1.0, 2.0, 3.0], [1, 1, 0])
    assert w.total < 1.0
    redistributed = compute_weights([1.0, 2.0, 3.0], [1, 1, 0], redistribute_last=True)
    assert redistributed.total == pytest.approx(1.0)


def test_events_precede_censorings_at_ties():
    order = stute_order([2.0, 2.0, 1.0, 2.0], [0, 1, 1, 1])
    np.testing.assert_array_equal(order, [2, 1, 3, 0])


def test_per_observation_restores_input_order():
    times = np.array([3.0, 1.0, 2.0])
    w = compute_weights(times, [1, 1, 1])
    assert w.per_observation()[1] == pytest.approx(1 / 3)


def test_km_equivalence_on_random_samples(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 201))
        # tiempos discretos para forzar empates
        times = rng.integers(1, 15, n).astype(float)
        deltas = rng.binomial(1, 0.6, n)
        w = compute_weights(times, deltas)
        km = km_estimator(times, deltas)
        jumps = dict(zip(km.jump_times, km.jumps()))
        sorted_times = times[w.order]
        sorted_deltas = deltas[w.order]
        for t in np.unique(sorted_times[sorted_deltas == 1]):
            mass = w.weights[(sorted_times == t) & (sorted_deltas == 1)].sum()
            assert mass == pytest.approx(jumps[t], abs=1e-12)


def test_each_event_weight_is_its_km_jump(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 201))
        times = rng.exponential(size=n) + 0.01
        deltas = rng.binomial(1, 0.7, n)
        w = compute_weights(times, deltas)
        km = km_estimator(times, deltas)
        events = deltas[w.order] == 1
        jump_at = dict(zip(km.jump_times, km.jumps()))
        expected = np.array([jump_at[t] for t in times[w.order][events]])
        np.testing.assert_allclose(w.weights[events], expected, rtol=0, atol=1e-12)
        assert np.all(w.weights[~events] == 0.0)


def test_uncensored_weights_are_exactly_one_over_n(rng):
    for n in rng.integers(1, 201, 50):
        w = compute_weights(rng.exponential(size=n) + 0.01, np.ones(n, dtype=int))
        assert np.all(w.weights == 1.0 / n)


def test_scale_invariance(rng):
    times = rng.exponential(size=50) + 0.01
    deltas = rng.binomial(1, 0.7, 50)
    np.testing.assert_array_equal(compute_weights(times, deltas).weights, compute_weights(7.5 * times, deltas).weights)


def test_total_mass_nonincreasing_when_event_becomes_censored(rng):
    times = rng.exponential(size=30) + 0.01
    deltas = np.ones(30, dtype=int)
    previous = compute_weights(times, deltas).total
    for i in rng.permutation(30):
        deltas[i] = 0
        total = compute_weights(times, deltas).total
        assert total <= previous + 1e-12
        previous = total


def test_km_without_censoring_drops_by_quarter():
    km = km_estimator([4.0, 1.0, 3.0, 2.0], [1, 1, 1, 1])
    np.testing.assert_allclose(km([0.5, 1.0, 2.5, 4.0]), [1.0, 0.75, 0.5, 0.0])


def test_km_all_censored_is_flat():
    km = km_estimator([1.0, 2.0, 3.0], [0, 0, 0])
    np.testing.assert_array_equal(km([0.0, 1.5, 3.0]), [1.0, 1.0, 1.0])


def test_invalid_inputs():
    with pytest.raises(ValueError):
        compute_weights([], [])
    with pytest.raises(ValueError):
        compute_weights([1.0, 0.0], [1, 1])
    with pytest.raises(ValueError):
        km_estimator([], [])
