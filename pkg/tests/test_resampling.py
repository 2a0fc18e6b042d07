"""Capped importance-resampling tests.

Statistical behavior is checked against the plain-python oracle in
oracles.py (different RNG family, separately written loop); structural
behavior (cap exactness, support, sizes, determinism) is checked directly.
"""

from collections import Counter

import numpy as np
import pytest

from scenespec import (
    BoundingBox,
    ResamplingConfig,
    Sample,
    WeightedSample,
    importance_resample,
)
from oracles import resample_by_hand


def _weighted_set(weights, label="obj"):
    """One WeightedSample per weight; frame index doubles as identity key."""
    out = []
    for i, w in enumerate(weights):
        box = BoundingBox(u=5 * i, v=3 * i, w=4 + i % 3, h=4 + i % 5)
        out.append(WeightedSample(Sample(box=box, label=label, score=0.9, frame=i), float(w)))
    return out


def _counts(dataset, n):
    c = np.zeros(n, dtype=np.int64)
    for s in dataset.samples:
        c[s.frame] += 1
    return c


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="draw_count"):
            ResamplingConfig(draw_count=-1)
        with pytest.raises(ValueError, match="max_copies"):
            ResamplingConfig(max_copies=0)

    def test_default_draw_count_is_pool_size(self):
        weighted = _weighted_set([0.1] * 10)
        ds = importance_resample(weighted, ResamplingConfig(seed=1))
        assert len(ds) == 10


class TestInputValidation:
    def test_empty_pool(self):
        with pytest.raises(ValueError, match="empty weighted set"):
            importance_resample([], ResamplingConfig())

    def test_unnormalized_weights(self):
        weighted = _weighted_set([0.4, 0.4])
        with pytest.raises(ValueError, match="must be normalized"):
            importance_resample(weighted, ResamplingConfig())

    def test_tolerance_allows_float_noise(self):
        weights = [1.0 / 7] * 7  # sums to 1 only within float error
        importance_resample(_weighted_set(weights), ResamplingConfig(seed=3))


class TestStructure:
    def test_single_sample_capped_at_two(self):
        """One sample with all the weight: the cap stops the draw loop after
        two copies no matter how many draws were requested."""
        weighted = _weighted_set([1.0])
        ds = importance_resample(weighted, ResamplingConfig(draw_count=50, seed=0))
        assert len(ds) == 2
        assert ds.samples[0] is ds.samples[1]

    def test_zero_weight_never_drawn(self):
        weighted = _weighted_set([1.0, 0.0])
        for seed in range(30):
            ds = importance_resample(weighted, ResamplingConfig(draw_count=2, seed=seed))
            assert all(s.frame == 0 for s in ds.samples)

    def test_zero_draws(self):
        ds = importance_resample(_weighted_set([1.0]), ResamplingConfig(draw_count=0))
        assert len(ds) == 0

    def test_iteration_recorded(self):
        ds = importance_resample(_weighted_set([1.0]), ResamplingConfig(seed=1), iteration=3)
        assert ds.iteration == 3

    def test_cap_exact_on_random_pools(self):
        """No identity ever exceeds max_copies, for caps 1 through 4."""
        rng = np.random.default_rng(42)
        for trial in range(60):
            n = int(rng.integers(2, 25))
            raw = rng.uniform(0.0, 1.0, n)
            raw[rng.random(n) < 0.25] = 0.0
            if raw.sum() == 0.0:
                raw[0] = 1.0
            weighted = _weighted_set(raw / raw.sum())
            cap = int(rng.integers(1, 5))
            cfg = ResamplingConfig(draw_count=3 * n, max_copies=cap, seed=trial)
            ds = importance_resample(weighted, cfg, iteration=1)
            assert max(ds.multiplicities().values(), default=0) <= cap

    def test_support_is_subset_of_positive_weights(self):
        rng = np.random.default_rng(7)
        for trial in range(40):
            raw = rng.uniform(0.0, 1.0, 12)
            raw[rng.random(12) < 0.4] = 0.0
            if raw.sum() == 0.0:
                raw[3] = 1.0
            weights = raw / raw.sum()
            weighted = _weighted_set(weights)
            ds = importance_resample(weighted, ResamplingConfig(draw_count=20, seed=trial))
            positive = {i for i, w in enumerate(weights) if w > 0}
            assert {s.frame for s in ds.samples} <= positive

    def test_size_is_min_of_draws_and_capped_pool(self):
        """With distinct identities the dataset size is exactly
        min(draw_count, max_copies * number of positive weights)."""
        rng = np.random.default_rng(11)
        for trial in range(40):
            n = int(rng.integers(1, 15))
            raw = rng.uniform(0.1, 1.0, n)
            raw[rng.random(n) < 0.3] = 0.0
            if raw.sum() == 0.0:
                raw[0] = 1.0
            weights = raw / raw.sum()
            positive = int(np.count_nonzero(weights))
            draws = int(rng.integers(0, 4 * n + 2))
            cap = int(rng.integers(1, 4))
            cfg = ResamplingConfig(draw_count=draws, max_copies=cap, seed=trial)
            ds = importance_resample(_weighted_set(weights), cfg)
            assert len(ds) == min(draws, cap * positive)

    def test_shared_identity_shares_the_cap(self):
        """Two pool entries with the same (frame, box, label) but different
        scores count toward one budget: at most two copies combined."""
        box = BoundingBox(0, 0, 5, 5)
        a = Sample(box=box, label="car", score=0.9, frame=0)
        b = Sample(box=box, label="car", score=0.4, frame=0)
        weighted = [WeightedSample(a, 0.5), WeightedSample(b, 0.5)]
        for seed in range(20):
            ds = importance_resample(weighted, ResamplingConfig(draw_count=10, seed=seed))
            assert len(ds) == 2
            assert ds.multiplicities()[a.identity()] == 2


class TestDeterminism:
    def test_same_seed_same_dataset(self):
        rng = np.random.default_rng(5)
        raw = rng.uniform(0.1, 1.0, 30)
        weighted = _weighted_set(raw / raw.sum())
        cfg = ResamplingConfig(draw_count=40, seed=123)
        a = importance_resample(weighted, cfg, iteration=2)
        b = importance_resample(weighted, cfg, iteration=2)
        assert a == b

    def test_different_seeds_differ(self):
        raw = np.ones(50)
        weighted = _weighted_set(raw / raw.sum())
        a = importance_resample(weighted, ResamplingConfig(draw_count=50, seed=0))
        b = importance_resample(weighted, ResamplingConfig(draw_count=50, seed=1))
        assert a != b


class TestDistribution:
    def _compare_to_oracle(self, weights, draw_count, max_copies, trials, impl_base, oracle_base):
        """Accumulate per-index counts from both processes and require every
        per-index total to agree within 3 sigma (empirical variances)."""
        n = len(weights)
        weighted = _weighted_set(weights)
        identities = [w.sample.identity() for w in weighted]
        sums = np.zeros((2, n))
        sqs = np.zeros((2, n))
        for t in range(trials):
            cfg = ResamplingConfig(draw_count=draw_count, max_copies=max_copies, seed=impl_base + t)
            c = _counts(importance_resample(weighted, cfg), n)
            sums[0] += c
            sqs[0] += c * c
            drawn = resample_by_hand(weights, identities, draw_count, max_copies, oracle_base + t)
            c = np.bincount(np.asarray(drawn, dtype=np.int64), minlength=n)
            sums[1] += c
            sqs[1] += c * c
        var = sqs / trials - (sums / trials) ** 2
        sigma = np.sqrt(trials * (var[0] + var[1]))
        live = sigma > 0
        z = np.zeros(n)
        z[live] = (sums[0, live] - sums[1, live]) / sigma[live]
        # Indices where both processes produced constant counts must agree
        # exactly (typically zero-weight entries, never drawn).
        np.testing.assert_array_equal(sums[0, ~live], sums[1, ~live])
        return np.max(np.abs(z))

    def test_matches_oracle_with_cap_engaged(self):
        """Skewed weights, cap 2, more draws than the pool supports without
        removals: the removal/renormalize path shapes the distribution."""
        weights = [0.4, 0.3, 0.2, 0.06, 0.04, 0.0]
        mz = self._compare_to_oracle(
            weights, draw_count=8, max_copies=2, trials=3000, impl_base=10_000, oracle_base=20_000
        )
        assert mz < 3.0

    def test_matches_oracle_without_cap_pressure(self):
        """A huge cap never triggers removals, so the draws are plain
        multinomial; frequencies must still match the oracle."""
        weights = [0.5, 0.25, 0.15, 0.1]
        mz = self._compare_to_oracle(
            weights, draw_count=6, max_copies=10**6, trials=3000, impl_base=30_000, oracle_base=40_000
        )
        assert mz < 3.0

    def test_monotone_in_weight(self):
        """Across many seeds, a heavier sample is drawn at least as often as
        a lighter one (monotonicity survives the cap)."""
        weights = [0.4, 0.3, 0.2, 0.1]
        weighted = _weighted_set(weights)
        totals = np.zeros(4, dtype=np.int64)
        for seed in range(2000):
            cfg = ResamplingConfig(draw_count=4, max_copies=2, seed=seed)
            totals += _counts(importance_resample(weighted, cfg), 4)
        assert totals[0] > totals[1] > totals[2] > totals[3]
