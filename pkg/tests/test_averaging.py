import numpy as np
import pytest

from pfopt.averaging import AverageTracker


def brute_force_average(xs, etas):
    """Store-everything oracle: argmax_t sum_{i<t} eta_i / eta_t, earliest tie."""
    etas = np.asarray(etas)
    prefix = np.concatenate([[0.0], np.cumsum(etas)[:-1]])
    ratios = prefix / etas
    best = -np.inf
    tau = None
    for t, ratio in enumerate(ratios):
        if ratio > best and ratio > 0.0:
            best, tau = ratio, t
    if tau is None:
        return None, None
    weights = etas[:tau]
    x_bar = (weights[:, None] * np.asarray(xs)[:tau]).sum(axis=0) / weights.sum()
    return tau, x_bar


def test_constant_eta_gives_plain_mean():
    # T steps plus the closing observation at the final iterate: the last
    # candidate ratio is T, so tau = T and the snapshot is the mean of the
    # first T iterates.
    rng = np.random.default_rng(0)
    T, d = 20, 4
    xs = rng.standard_normal((T + 1, d))
    tracker = AverageTracker(d)
    for x in xs:
        tracker.observe(x, 0.3)
    tau, x_bar = tracker.current_average()
    assert tau == T
    np.testing.assert_allclose(x_bar, xs[:T].mean(axis=0), atol=1e-14)


def test_ratio_tie_keeps_earliest():
    xs = [np.array([1.0]), np.array([2.0]), np.array([3.0])]
    tracker = AverageTracker(1)
    for x, eta in zip(xs, [1.0, 1.0, 2.0]):
        tracker.observe(x, eta)
    tau, x_bar = tracker.current_average()
    assert tau == 1
    np.testing.assert_allclose(x_bar, [1.0])


def test_query_before_candidate_is_error():
    tracker = AverageTracker(2)
    with pytest.raises(RuntimeError):
        tracker.current_average()
    tracker.observe(np.zeros(2), 1.0)
    with pytest.raises(RuntimeError):
        tracker.current_average()
    tracker.observe(np.ones(2), 1.0)
    tau, _ = tracker.current_average()
    assert tau == 1


def test_snapshot_frozen_without_strict_improvement():
    tracker = AverageTracker(1)
    tracker.observe(np.array([5.0]), 1.0)
    tracker.observe(np.array([9.0]), 1.0)   # candidate ratio 1 -> tau=1, snapshot=[5]
    tau, x_bar = tracker.current_average()
    tracker.observe(np.array([7.0]), 4.0)   # ratio 2/4 < 1: no improvement
    tau2, x_bar2 = tracker.current_average()
    assert (tau, tau2) == (1, 1)
    np.testing.assert_array_equal(x_bar, x_bar2)


def test_rejects_bad_eta_and_shape():
    tracker = AverageTracker(2)
    with pytest.raises(ValueError):
        tracker.observe(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        tracker.observe(np.zeros(3), 1.0)


def test_best_ratio_nondecreasing():
    rng = np.random.default_rng(3)
    tracker = AverageTracker(3)
    last = tracker.best_ratio
    for _ in range(500):
        tracker.observe(rng.standard_normal(3), 10 ** rng.uniform(-3, 1))
        assert tracker.best_ratio >= last
        last = tracker.best_ratio


def test_matches_brute_force_on_random_streams():
    rng = np.random.default_rng(42)
    for trial in range(40):
        n = int(10 ** rng.uniform(0.5, 3))
        d = int(rng.integers(1, 50))
        xs = rng.standard_normal((n, d))
        etas = 10 ** rng.uniform(-4, 1, size=n)
        tracker = AverageTracker(d)
        for x, eta in zip(xs, etas):
            tracker.observe(x, eta)
        tau_ref, xbar_ref = brute_force_average(xs, etas)
        if tau_ref is None:
            with pytest.raises(RuntimeError):
                tracker.current_average()
            continue
        tau, x_bar = tracker.current_average()
        assert tau == tau_ref
        np.testing.assert_allclose(x_bar, xbar_ref, atol=1e-12)
