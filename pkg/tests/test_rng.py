import collections

import pytest
from hypothesis import given, strategies as st

from fleet_census.rng import SplitMix64, derive_seed, mix64

# Published SplitMix64 reference outputs for seed 0 and seed
# 0x9E3779B97F4A7C15 (e.g. the test vectors shipped with the xoshiro
# reference code). Frozen here so the generator can never silently drift.
SEED0_FIRST5 = [
    0xE220A8397B1DCDAF,
    0x6E789E6AA1B965F4,
    0x06C45D188009454F,
    0xF88BB8A8724C81EC,
    0x1B39896A51A8749B,
]


def test_seed0_reference_vector():
    gen = SplitMix64(0)
    assert [gen.next_u64() for _ in range(5)] == SEED0_FIRST5


def test_streams_are_reproducible():
    a = SplitMix64(123456789)
    b = SplitMix64(123456789)
    assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]


def test_below_rejects_nonpositive():
    with pytest.raises(ValueError):
        SplitMix64(1).below(0)


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=1, max_value=10_000))
def test_below_in_range(seed, n):
    assert 0 <= SplitMix64(seed).below(n) < n


def test_below_is_roughly_uniform():
    gen = SplitMix64(42)
    counts = collections.Counter(gen.below(8) for _ in range(80_000))
    for value in range(8):
        assert 9_300 < counts[value] < 10_700


@given(st.integers(min_value=0, max_value=2**64 - 1), st.integers(min_value=0, max_value=50))
def test_shuffle_is_permutation(seed, n):
    items = list(range(n))
    SplitMix64(seed).shuffle(items)
    assert sorted(items) == list(range(n))


@given(
    st.integers(min_value=0, max_value=2**64 - 1),
    st.integers(min_value=0, max_value=40),
    st.integers(min_value=0, max_value=40),
)
def test_sample_without_replacement(seed, n, k):
    items = list(range(n))
    if k > n:
        with pytest.raises(ValueError):
            SplitMix64(seed).sample(items, k)
        return
    picked = SplitMix64(seed).sample(items, k)
    assert len(picked) == k
    assert len(set(picked)) == k
    assert set(picked) <= set(items)
    assert items == list(range(n))  # input untouched


def test_sample_matches_prefix_of_partial_shuffle():
    # sample(k) must equal the first k positions of sample(n) for equal seeds,
    # a direct consequence of the bottom-up partial Fisher-Yates definition.
    items = list(range(20))
    full = SplitMix64(7).sample(items, 20)
    head = SplitMix64(7).sample(items, 5)
    assert full[:5] == head


def test_uniform_in_unit_interval():
    gen = SplitMix64(9)
    values = [gen.uniform() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in values)


def test_derive_seed_separates_streams():
    s = 99
    seeds = {
        derive_seed(s, "balance", 0),
        derive_seed(s, "balance", 1),
        derive_seed(s, "split", 0),
        derive_seed(s, "balance0"),  # token boundary must matter
    }
    assert len(seeds) == 4


def test_derive_seed_is_stable():
    # Frozen value: recomputed by hand from the FNV-1a + mix64 recipe.
    h = 0xCBF29CE484222325
    for byte in b"split":
        h = ((h ^ byte) * 0x100000001B3) & ((1 << 64) - 1)
    h = (h * 0x100000001B3) & ((1 << 64) - 1)
    assert derive_seed(5, "split") == mix64(h ^ 5)
