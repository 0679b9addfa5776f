import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from exclusion.clocks import (
    EventLog,
    TimeInterval,
    read_event_log,
    sample_event_log,
    site_events,
    time_reverse,
    time_shift,
    write_event_log,
)
from exclusion.errors import ConfigurationError
from exclusion.validation import pooled_chisquare

from fields import chain, from_matrix, random_directed, random_symmetric


def one_edge_log(times, horizon=2.0):
    return EventLog(2, horizon, [[0, 1]], times, [0] * len(times), directed=False)


def edge_counts(log):
    return np.diff(log.edge_ptr)


def test_zero_rate_edge_is_empty():
    f = from_matrix([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    log = sample_event_log(f, 5.0, seed=1)
    assert len(log.edges) == 1
    log = sample_event_log(f, 5.0, seed=1, directed=True)
    assert {tuple(e) for e in log.edges} == {(0, 1), (1, 0)}
    assert all(2 not in e for e in log.edges)


def test_poisson_mean_count():
    f = from_matrix([[0, 2.0], [2.0, 0]])
    counts = np.array([sample_event_log(f, 3.0, seed=s).n_events for s in range(10_000)])
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - 6.0) < 3 * se


def test_sampling_is_deterministic(rng):
    f = random_symmetric(rng, 8, 0.5)
    a = sample_event_log(f, 4.0, seed=99)
    b = sample_event_log(f, 4.0, seed=99)
    assert a == b
    np.testing.assert_array_equal(a.site_time, b.site_time)
    assert sample_event_log(f, 4.0, seed=100) != a


def test_per_edge_stream_independent_of_window():
    # edge e uses its own stream, so adding sites after it leaves its times unchanged
    small = sample_event_log(chain(3), 5.0, seed=4)
    big = sample_event_log(chain(6), 5.0, seed=4)
    for e in range(2):
        np.testing.assert_array_equal(small.edge_times(e), big.edge_times(e))


def test_asymmetric_field_needs_directed_log():
    f = from_matrix([[0, 1], [2, 0]])
    with pytest.raises(ConfigurationError):
        sample_event_log(f, 1.0, seed=0, directed=False)
    log = sample_event_log(f, 1.0, seed=0)
    assert log.directed


def test_site_events_examples():
    assert site_events(one_edge_log([]), 0, TimeInterval(0, 1)) == []
    log = one_edge_log([0.5])
    assert site_events(log, 0, TimeInterval(0, 1)) == [(0.5, 1, 0)]
    assert site_events(log, 1, TimeInterval(0, 1)) == [(0.5, 0, 0)]
    assert site_events(log, 0, TimeInterval(0.6, 1)) == []
    assert site_events(log, 0, TimeInterval(0, 0.5, closed_upper=False)) == []


def test_site_events_orientation():
    log = EventLog(2, 1.0, [[0, 1], [1, 0]], [0.2, 0.4], [0, 1], directed=True)
    assert site_events(log, 0, TimeInterval(0, 1)) == [(0.2, 1, 1), (0.4, 1, -1)]
    assert site_events(log, 1, TimeInterval(0, 1)) == [(0.2, 0, -1), (0.4, 0, 1)]


def test_time_interval():
    w = TimeInterval(0.0, 1.0, closed_lower=False)
    assert 0.0 not in w and 1.0 in w and 0.5 in w
    with pytest.raises(ValueError):
        TimeInterval(1.0, 0.0)


def test_time_shift_examples():
    log = one_edge_log([0.3, 1.2])
    assert time_shift(log, 0) == log
    shifted = time_shift(log, 1.0)
    np.testing.assert_allclose(shifted.edge_times(0), [0.2], rtol=1e-15)
    assert shifted.horizon == 1.0
    end = time_shift(log, 2.0)
    assert end.n_events == 0 and end.horizon == 0.0
    with pytest.raises(ValueError):
        time_shift(log, 2.5)


def test_time_reverse_examples():
    rev = time_reverse(one_edge_log([0.3, 1.2]), 2.0)
    np.testing.assert_allclose(rev.edge_times(0), [0.8, 1.7], rtol=1e-15)
    empty = one_edge_log([])
    assert time_reverse(empty) == empty
    with pytest.raises(ValueError):
        time_reverse(empty, 3.0)


def test_tie_break_keeps_times_distinct():
    log = EventLog(3, 1.0, [[0, 1], [1, 2]], [0.5, 0.5, 0.5], [1, 0, 0], directed=False)
    log.check_regularity()
    # edge 0 sorts first at the collision, edge 1 is nudged past it
    assert log.times[0] == 0.5 and log.edge_of[0] == 0
    assert np.all(np.diff(log.times) > 0)
    assert np.all(log.times - 0.5 < 1e-15)


def test_log_validation():
    with pytest.raises(ValueError):
        EventLog(2, 1.0, [[1, 0]], [], [], directed=False)
    with pytest.raises(ValueError):
        EventLog(2, 1.0, [[0, 1]], [1.5], [0], directed=False)
    with pytest.raises(ValueError):
        EventLog(2, 1.0, [[0, 1]], [0.5], [3], directed=False)


@given(seed=st.integers(0, 2**63), horizon=st.floats(0.1, 5.0), directed=st.booleans())
def test_regularity_after_every_transform(seed, horizon, directed):
    g = np.random.default_rng(seed % 2**32)
    f = random_directed(g, 6) if directed else random_symmetric(g, 6, 0.6)
    log = sample_event_log(f, horizon, seed)
    log.check_regularity()
    assert np.all(log.times > 0) and np.all(log.times <= horizon)
    s, t = sorted(g.uniform(0, horizon, size=2))
    for other in (time_shift(log, s), time_reverse(log), time_shift(time_shift(log, s), t - s)):
        other.check_regularity()
    twice = time_reverse(time_reverse(log))
    np.testing.assert_array_equal(twice.edge_of, log.edge_of)
    np.testing.assert_allclose(twice.times, log.times, rtol=0, atol=4 * np.spacing(horizon))
    a = time_shift(time_shift(log, s), t - s)
    b = time_shift(log, t)
    np.testing.assert_array_equal(a.edge_of, b.edge_of)
    np.testing.assert_allclose(a.times, b.times, rtol=0, atol=4 * np.spacing(horizon))


def test_reverse_is_involution_on_dyadic_times():
    times = [0.25, 0.5, 1.125, 1.75]
    log = EventLog(3, 2.0, [[0, 1], [1, 2]], times, [0, 1, 0, 1], directed=False)
    assert time_reverse(time_reverse(log)) == log
    assert time_shift(time_shift(log, 0.25), 0.5) == time_shift(log, 0.75)


def test_site_index_matches_edges(rng):
    log = sample_event_log(random_symmetric(rng, 10, 0.4), 3.0, seed=5)
    for x in range(log.n_sites):
        times, partners, _ = log.site_slice(x)
        expected = []
        for e, (a, b) in enumerate(log.edges):
            if x in (a, b):
                expected += [(t, b if a == x else a) for t in log.edge_times(e)]
        assert sorted(expected) == list(zip(times.tolist(), partners.tolist()))


def test_reflection_invariance_counts():
    f = from_matrix([[0, 2.0], [2.0, 0]])
    counts = np.array([edge_counts(time_reverse(sample_event_log(f, 3.0, seed=s)))[0] for s in range(10_000)])
    k = np.arange(counts.max() + 1)
    observed = np.bincount(counts, minlength=k.size).astype(float)
    expected = stats.poisson.pmf(k, 6.0) * counts.size
    expected[-1] += stats.poisson.sf(k[-1], 6.0) * counts.size
    _, _, p = pooled_chisquare(observed, expected)
    assert p > 1e-3


@pytest.mark.parametrize("directed", [False, True])
def test_export_roundtrip(tmp_path, rng, directed):
    f = random_directed(rng, 5) if directed else random_symmetric(rng, 5, 0.7)
    log = sample_event_log(f, 2.5, seed=17)
    path = tmp_path / "log.txt"
    write_event_log(log, path)
    again = read_event_log(path)
    assert again == log
    np.testing.assert_array_equal(again.intensities, log.intensities)
    first = next(line for line in path.read_text().splitlines() if not line.startswith("#"))
    assert len(first.split()) == 4
