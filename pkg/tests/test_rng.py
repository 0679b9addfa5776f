import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from exclusion import rng

MASK = 2**64 - 1


def splitmix64(state, count):
    # textbook SplitMix64 in plain integers
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_reference_vector():
    assert splitmix64(1234567, 2) == [6457827717110365317, 3203168211198807973]


@given(key=st.integers(0, MASK), k=st.integers(0, 50))
def test_uniform_is_splitmix_stream(key, k):
    expected = splitmix64(key, k + 1)[-1] >> 11
    assert rng.uniform(np.uint64(key), k) == expected / 2**53


def test_uniforms_range_and_law():
    u = rng.uniforms(np.uint64(99), 100_000)
    assert u.min() >= 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_derive_separates_streams():
    keys = {int(rng.derive(np.uint64(5), i)) for i in range(10_000)}
    assert len(keys) == 10_000
    assert int(rng.derive(np.uint64(5), 0)) != int(rng.derive(np.uint64(6), 0))


def test_exponential_mean():
    key = rng.derive(np.uint64(3), 0)
    draws = np.array([rng.exponential(key, k, 2.5) for k in range(50_000)])
    assert stats.kstest(draws, "expon", args=(0, 1 / 2.5)).pvalue > 1e-3


def test_zigzag():
    assert [int(rng.zigzag(x)) for x in (0, -1, 1, -2, 2)] == [0, 1, 2, 3, 4]


def test_check_seed():
    assert rng.check_seed(2**64 - 1) == np.uint64(2**64 - 1)
    with pytest.raises(ValueError):
        rng.check_seed(-1)
    with pytest.raises(ValueError):
        rng.check_seed(2**64)
    with pytest.raises(TypeError):
        rng.check_seed(1.5)
    with pytest.raises(TypeError):
        rng.check_seed(True)


def test_replica_seed_is_derive():
    assert rng.replica_seed(10, 3) == int(rng.derive(np.uint64(10), 3))
    assert isinstance(rng.replica_seed(10, 3), int)
