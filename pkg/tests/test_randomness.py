import math

import numpy as np
import pytest

from dpsketch.randomness import (
    GeometricLevelHash,
    NoiseContext,
    PolyHashFamily,
    SignHash,
    boost_count,
    even_independence,
    laplace_sample,
    median_boost,
)


class TestLaplace:
    def test_noise_off_is_zero(self):
        ctx = NoiseContext(123, noise_off=True)
        assert all(laplace_sample(ctx, b) == 0.0 for b in (0.1, 1.0, 50.0))

    def test_replay_identical(self):
        a = NoiseContext(99)
        b = NoiseContext(99)
        assert [a.laplace(2.0) for _ in range(64)] == [b.laplace(2.0) for _ in range(64)]

    def test_mean_near_zero(self):
        ctx = NoiseContext(7)
        draws = ctx.laplace(1.0, size=1_000_000)
        assert abs(draws.mean()) < 0.01

    def test_variance_matches(self):
        # Var(Lap(b)) = 2 b^2
        ctx = NoiseContext(8)
        draws = ctx.laplace(2.0, size=1_000_000)
        assert abs(draws.var() - 8.0) <= 0.05 * 8.0

    def test_bad_scale(self):
        ctx = NoiseContext(0)
        with pytest.raises(ValueError):
            ctx.laplace(0.0)
        with pytest.raises(ValueError):
            ctx.laplace(-1.0)

    def test_keyed_is_order_independent(self):
        a = NoiseContext(5)
        first = a.keyed_laplace(("x", 3), 1.0)
        a.laplace(1.0)
        a.keyed_laplace(("y", 0), 1.0)
        assert a.keyed_laplace(("x", 3), 1.0) == first

    def test_draw_counter_advances(self):
        ctx = NoiseContext(1)
        ctx.laplace(1.0)
        ctx.laplace(1.0, size=10)
        assert ctx.draw_counter == 11


class TestPolyHash:
    def test_deterministic(self):
        h1 = PolyHashFamily(4, 97, seed=11)
        h2 = PolyHashFamily(4, 97, seed=11)
        assert [h1(x) for x in range(100)] == [h2(x) for x in range(100)]

    def test_pairwise_collision_rate(self):
        m = 64
        rng = np.random.default_rng(0)
        trials = 20_000
        collisions = 0
        h = PolyHashFamily(2, m, seed=3)
        pairs = rng.integers(0, 1 << 40, size=(trials, 2))
        for x, y in pairs:
            if x != y and h(int(x)) == h(int(y)):
                collisions += 1
        rate = collisions / trials
        sigma = math.sqrt((1 / m) * (1 - 1 / m) / trials)
        assert abs(rate - 1 / m) <= 3 * sigma + 1e-6

    def test_range(self):
        h = PolyHashFamily(3, 10, seed=2)
        assert all(0 <= h(x) < 10 for x in range(1000))


class TestSignHash:
    def test_values(self):
        g = SignHash(seed=4)
        assert set(g(x) for x in range(200)) <= {-1, 1}

    def test_mean_product_near_zero(self):
        g = SignHash(seed=5)
        rng = np.random.default_rng(1)
        pairs = rng.integers(0, 1 << 40, size=(100_000, 2))
        vals = [g(int(x)) * g(int(y)) for x, y in pairs if x != y]
        mean = float(np.mean(vals))
        assert abs(mean) <= 3 / math.sqrt(len(vals))


class TestGeometricLevelHash:
    def test_deterministic(self):
        g = GeometricLevelHash(8, 6, seed=7)
        assert [g.level(x) for x in range(50)] == [g.level(x) for x in range(50)]

    def test_level_one_fraction(self):
        g = GeometricLevelHash(8, 6, seed=13)
        hits = sum(1 for x in range(100_000) if g.level(x) == 1)
        assert abs(hits / 100_000 - 0.5) <= 0.015

    def test_bottom_fraction(self):
        g = GeometricLevelHash(8, 6, seed=17)
        drops = sum(1 for x in range(100_000) if g.level(x) is None)
        assert abs(drops / 100_000 - 2**-8) <= 0.002

    def test_all_level_marginals(self):
        g = GeometricLevelHash(6, 6, seed=23)
        counts = {}
        N = 200_000
        for x in range(N):
            counts[g.level(x)] = counts.get(g.level(x), 0) + 1
        for i in range(1, 7):
            p = 2.0**-i
            sigma = math.sqrt(p * (1 - p) / N)
            assert abs(counts.get(i, 0) / N - p) <= 4 * sigma + 1e-4


class TestMedianBoost:
    def test_odd(self):
        assert median_boost([3, 1, 2]) == 2

    def test_even_lower_median(self):
        assert median_boost([1, 2, 3, 4]) == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            median_boost([])

    def test_chernoff_boost(self):
        # 51 copies each good w.p. 2/3: the median is good in >= 1-e^(-51/48)
        # of trials (Chernoff); verified by Monte-Carlo with margin
        rng = np.random.default_rng(42)
        trials = 4000
        bad = 0
        for _ in range(trials):
            # "good" draws in [0,1], "bad" far away at 10
            good_mask = rng.random(51) < 2 / 3
            vals = np.where(good_mask, rng.random(51), 10.0)
            if median_boost(list(vals)) > 1.0:
                bad += 1
        bound = math.exp(-51 / 48)
        assert bad / trials <= bound


class TestBoostCount:
    def test_reference_values(self):
        assert boost_count(1 / math.e) == 50
        assert boost_count(0.05) == 150
        assert boost_count(0.49) == 36

    def test_range_enforced(self):
        for xi in (0.0, 0.5, 0.7, -1.0):
            with pytest.raises(ValueError):
                boost_count(xi)


class TestEvenIndependence:
    def test_rounds_up_to_even(self):
        assert even_independence(3.2) == 4
        assert even_independence(4.0) == 4
        assert even_independence(4.1) == 6
        assert even_independence(1.0) == 4


class TestNoiseContextChildren:
    def test_children_are_independent_and_stable(self):
        ctx = NoiseContext(77)
        a1 = ctx.child("copy", 0).laplace(1.0)
        a2 = ctx.child("copy", 0).laplace(1.0)
        b = ctx.child("copy", 1).laplace(1.0)
        assert a1 == a2
        assert a1 != b

    def test_noise_off_propagates(self):
        ctx = NoiseContext(77, noise_off=True)
        assert ctx.child("x").laplace(1.0) == 0.0
