import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exclusion import rng as crng
from exclusion.environment import EnvironmentSpec, build_mott_env, symmetrize
from exclusion.percolation import (
    cluster_sizes,
    cluster_stats,
    distance_bound,
    open_probability,
    sample_percolation_graph,
    scan_t0,
    verify_domination,
)
from exclusion.sep_harris import components
from exclusion.validation import pooled_chisquare

from fields import chain, from_matrix, random_symmetric
from oracles import cluster_law_bruteforce, total_variation


def complete(n, rate):
    m = np.full((n, n), rate)
    np.fill_diagonal(m, 0)
    return from_matrix(m)


def open_set(graph):
    return {tuple(e) for e in graph.edges.tolist()}


def test_open_probability_examples():
    assert open_probability(1.0, math.log(2)) == pytest.approx(0.5, abs=1e-16)
    assert open_probability(2.0, 1.0) == pytest.approx(1 - math.exp(-2), rel=1e-15)
    assert open_probability(1e300, 1.0) == 1.0
    assert open_probability(3.0, 0.0) == 0.0


def test_sample_examples():
    f = complete(4, 1.0)
    assert open_set(sample_percolation_graph(f, 0.0, seed=1)) == set()
    huge = complete(4, 1e12)
    assert len(open_set(sample_percolation_graph(huge, 1.0, seed=1))) == 6
    assert sample_percolation_graph(f, 0.7, 3).edges.tolist() == sample_percolation_graph(f, 0.7, 3).edges.tolist()


def test_asymmetric_field_rejected():
    with pytest.raises(ValueError):
        sample_percolation_graph(from_matrix([[0, 1], [2, 0]]), 1.0, 0)
    with pytest.raises(ValueError):
        verify_domination(from_matrix([[0, 1], [2, 0]]), lambda p, q: 1.0)


def test_half_probability_frequency():
    f = chain(2, 1.0)
    opened = np.mean([len(sample_percolation_graph(f, math.log(2), s).edges) for s in range(20_000)])
    assert abs(opened - 0.5) < 4 * math.sqrt(0.25 / 20_000)


def test_pair_independence():
    f = from_matrix([[0, 0.4, 1.1], [0.4, 0, 2.0], [1.1, 2.0, 0]])
    t0 = 0.6
    n = 100_000
    probs = open_probability(np.array([0.4, 1.1, 2.0]), t0)
    pairs = [(0, 1), (0, 2), (1, 2)]
    counts = np.zeros(8)
    for s in range(n):
        edges = open_set(sample_percolation_graph(f, t0, crng.replica_seed(1234, s)))
        code = sum(1 << i for i, p in enumerate(pairs) if p in edges)
        counts[code] += 1
    expected = np.array([
        np.prod([probs[i] if code >> i & 1 else 1 - probs[i] for i in range(3)]) for code in range(8)
    ])
    _, _, p = pooled_chisquare(counts, expected * n)
    assert p > 1e-3


def test_batch_replica_matches_single_graph():
    f = random_symmetric(np.random.default_rng(2), 7, 0.7)
    origin_sizes, max_sizes = cluster_sizes(f, [0.3, 0.9], 2, 10, seed=55)
    for i in range(10):
        for k, t0 in enumerate((0.3, 0.9)):
            part = components(sample_percolation_graph(f, t0, crng.replica_seed(55, i)))
            assert origin_sizes[i, k] == part.sizes[part.labels[2]]
            assert max_sizes[i, k] == part.sizes.max()


@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0.0, 2.0), b=st.floats(0.0, 2.0))
def test_monotone_in_t0(seed, a, b):
    lo, hi = sorted((a, b))
    f = random_symmetric(np.random.default_rng(seed), 8, 0.5)
    assert open_set(sample_percolation_graph(f, lo, seed)) <= open_set(sample_percolation_graph(f, hi, seed))
    sizes, biggest = cluster_sizes(f, np.linspace(0, 2, 6), 0, 20, seed)
    assert np.all(np.diff(sizes, axis=1) >= 0) and np.all(np.diff(biggest, axis=1) >= 0)


def test_complete_three_sites():
    f = complete(3, math.log(2))
    stats_ = cluster_stats(f, 1.0, 0, 100_000, seed=8)
    law = stats_.distribution()
    assert total_variation(law, {1: 0.25, 2: 0.25, 3: 0.5}) < 0.01
    assert cluster_law_bruteforce(3, [(0, 1), (0, 2), (1, 2)], [0.5] * 3, 0) == pytest.approx({1: 0.25, 2: 0.25, 3: 0.5})
    assert sum(law.values()) == pytest.approx(1.0)
    assert np.all(stats_.origin_sizes >= 1) and np.all(stats_.max_sizes >= stats_.origin_sizes)


@pytest.mark.parametrize("n", [4, 6])
def test_bruteforce_equivalence(n):
    f = random_symmetric(np.random.default_rng(n), n, 0.8)
    x, y, c, _ = f.undirected_edges()
    pairs = list(zip(x.tolist(), y.tolist()))
    exact = cluster_law_bruteforce(n, pairs, open_probability(c, 0.7).tolist(), 1)
    law = cluster_stats(f, 0.7, 1, 100_000, seed=31).distribution()
    assert total_variation(law, exact) < 0.01


def test_chain_isolated_origin():
    p = 0.3
    f = chain(41, -math.log(1 - p))
    law = cluster_stats(f, 1.0, 20, 100_000, seed=6).distribution()
    assert abs(law[1] - 0.49) < 4 * math.sqrt(0.49 * 0.51 / 100_000)


def test_zero_field():
    f = from_matrix(np.zeros((5, 5)))
    assert cluster_stats(f, 3.0, 2, 100, seed=0).distribution() == {1: 1.0}
    res = scan_t0(f, [0.5, 1.0, 2.0], size_threshold=1, replicas=100)
    assert res.recommended == 2.0 and res.subcritical_found
    assert all(row.p_exceed == 0 for row in res.rows)


def test_scan_enormous_rate_is_honest():
    m = np.zeros((4, 4))
    m[0, 1] = m[1, 0] = 1e9
    res = scan_t0(from_matrix(m), [1e-3, 1e-2, 1.0], size_threshold=1, replicas=500)
    assert all(row.p_exceed == 1.0 for row in res.rows)
    assert res.recommended is None and not res.subcritical_found


def test_scan_default_threshold_warns(tmp_path):
    f = chain(40, 1.0)
    with pytest.warns(RuntimeWarning):
        res = scan_t0(f, [0.1, 0.5, 3.0], replicas=2000, seed=4)
    assert res.size_threshold == 10
    p = [row.p_exceed for row in res.rows]
    assert p == sorted(p)
    path = tmp_path / "scan.csv"
    res.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t0,replicas,mean_cluster,p_exceed,stderr"
    assert len(lines) == 4
    with pytest.raises(ValueError):
        scan_t0(f, [], size_threshold=3)


def test_chain_mean_cluster():
    f = chain(301, 2.0)
    p = 1 - math.exp(-2)
    s = cluster_stats(f, 1.0, 150, 100_000, seed=2026)
    assert abs(s.mean - (1 + p) / (1 - p)) < 3 * s.stderr


def test_verify_domination_examples():
    bound = distance_bound(lambda r: 2 * np.exp(-r))
    mott = symmetrize(build_mott_env(EnvironmentSpec("mott", box_side=15.0, mark_bound=1.0, seed=3)))
    ok, bad = verify_domination(mott, bound)
    assert ok and bad == []
    ok, bad = verify_domination(complete(3, 3.0), lambda p, q: np.full(len(p), 2.0))
    assert not ok
    assert [(x, y) for x, y, _, _ in bad] == [(0, 1), (0, 2), (1, 2)]
    f = random_symmetric(np.random.default_rng(0), 6, 0.7)
    dense = f.dense()
    index = {tuple(p): i for i, p in enumerate(f.positions.tolist())}

    def itself(p, q):
        return np.array([dense[index[tuple(a)], index[tuple(b)]] for a, b in zip(p.tolist(), q.tolist())])

    assert verify_domination(f, itself) == (True, [])


def test_scan_no_warning_with_threshold():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        scan_t0(chain(10), [0.1], size_threshold=3, replicas=10)
