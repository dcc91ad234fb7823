import numpy as np
import pytest

from orthoqr.hsic import HsicConfig, gaussian_gram, hsic_estimate, median_bandwidth


def brute_force(a, b, sigma_a, sigma_b):
    n = len(a)
    K = np.array([[np.exp(-(x - z) ** 2 / (2 * sigma_a**2)) for z in a] for x in a])
    Q = np.array([[np.exp(-(x - z) ** 2 / (2 * sigma_b**2)) for z in b] for x in b])
    H = np.eye(n) - np.ones((n, n)) / n
    return np.trace(K @ H @ Q @ H) / n**2


def test_median_bandwidth_hand_values():
    assert median_bandwidth([0.0, 2.0]) == 2.0
    assert median_bandwidth([1.0, 1.0, 1.0]) == 1.0
    assert median_bandwidth([0.0, 1.0, 3.0]) == 2.0


def test_median_bandwidth_needs_two_values():
    with pytest.raises(ValueError):
        median_bandwidth([1.0])


def test_gaussian_gram_values():
    G = gaussian_gram([0.0, 1.0], sigma=1.0)
    np.testing.assert_allclose(np.diag(G), [1.0, 1.0])
    assert G[0, 1] == pytest.approx(np.exp(-0.5))


def test_constant_second_argument_gives_zero():
    a = np.random.default_rng(0).normal(size=10)
    assert hsic_estimate(a, np.full(10, 0.7)) == pytest.approx(0.0, abs=1e-14)


def test_two_point_hand_instance():
    # a = b = [0, 1]; median-heuristic sigma = 1 for both
    expected = brute_force([0.0, 1.0], [0.0, 1.0], 1.0, 1.0)
    assert hsic_estimate([0.0, 1.0], [0.0, 1.0]) == pytest.approx(expected, abs=1e-12)


def test_matches_brute_force_on_random_small_inputs():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        a = rng.normal(size=n)
        b = rng.normal(size=n)
        sa, sb = median_bandwidth(a), median_bandwidth(b)
        got = hsic_estimate(a, b, HsicConfig(sigma_a=sa, sigma_b=sb))
        assert got == pytest.approx(brute_force(a, b, sa, sb), abs=1e-10)


def test_symmetry_and_permutation_equivariance():
    rng = np.random.default_rng(2)
    a = rng.normal(size=30)
    b = rng.normal(size=30)
    assert hsic_estimate(a, b) == pytest.approx(hsic_estimate(b, a), abs=1e-12)
    perm = rng.permutation(30)
    assert hsic_estimate(a[perm], b[perm]) == pytest.approx(hsic_estimate(a, b), abs=1e-12)


def test_length_mismatch_and_tiny_input_rejected():
    with pytest.raises(ValueError):
        hsic_estimate(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        hsic_estimate([1.0], [1.0])


def test_independent_samples_fall_below_permutation_null():
    rng = np.random.default_rng(3)
    n = 500
    hits = 0
    trials = 20
    for _ in range(trials):
        a = rng.normal(size=n)
        b = rng.normal(size=n)
        config = HsicConfig(median_bandwidth(a), median_bandwidth(b))
        observed = hsic_estimate(a, b, config)
        null = [hsic_estimate(a, rng.permutation(b), config) for _ in range(40)]
        if observed <= np.quantile(null, 0.99):
            hits += 1
    assert hits >= int(0.9 * trials)
