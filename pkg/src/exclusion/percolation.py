"""Static percolation check for the windowed Harris construction.

Each unordered pair ``{x, y}`` of a symmetrised field is open independently
with probability ``1 - exp(-c[x, y] * t0)``.  Subcriticality of this graph
(only finite clusters) is what the windowed construction needs; on a finite
window we estimate the probability that some cluster exceeds a size
threshold.

All functions here take the symmetrised field (see
:func:`exclusion.environment.symmetrize`) and use its entries as the pair
rates.  Pair ``p`` (canonical order ``x < y``) of replica ``i`` is open iff
``U < 1 - exp(-c t0)`` with ``U = uniform(derive(replica_seed(seed, i), p), 0)``,
so one uniform per pair is shared across every ``t0``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numba as nb
import numpy as np

from . import rng
from .environment import RateField, format_float
from .sep_harris import WindowGraph, _find, _union

DEFAULT_TARGET = 1e-3


def _pairs(field: RateField):
    if not field.symmetric:
        raise ValueError("percolation needs a symmetric field; pass symmetrize(field)")
    x, y, c, _ = field.undirected_edges()
    return np.stack([x, y], axis=1), c


def open_probability(rate, t0):
    """``1 - exp(-rate * t0)``."""
    return -np.expm1(-np.asarray(rate, dtype=float) * t0)


@nb.njit(cache=True)
def _pair_uniforms(key, n_pairs):
    out = np.empty(n_pairs)
    for p in range(n_pairs):
        out[p] = rng.uniform(rng.derive(key, p), 0)
    return out


def sample_percolation_graph(field: RateField, t0, seed) -> WindowGraph:
    """One sample of the percolation graph of ``field`` at time scale ``t0``."""
    if t0 < 0:
        raise ValueError("t0 must be >= 0")
    pairs, c = _pairs(field)
    u = _pair_uniforms(rng.check_seed(seed), len(pairs))
    open_ = u < open_probability(c, t0)
    return WindowGraph(field.n_sites, pairs[open_], 0, float(t0))


@nb.njit(cache=True, parallel=True)
def _cluster_batch(master, replicas, n, pairs, probs, origin):
    # probs has shape (G, P): one row per t0, coupled through shared uniforms
    g = probs.shape[0]
    origin_size = np.empty((replicas, g), dtype=np.int64)
    max_size = np.empty((replicas, g), dtype=np.int64)
    for r in nb.prange(replicas):
        key = rng.derive(master, np.uint64(r))
        u = _pair_uniforms(key, pairs.shape[0])
        parent = np.arange(n)
        size = np.ones(n, dtype=np.int64)
        for k in range(g):
            for s in range(n):
                parent[s] = s
                size[s] = 1
            biggest = 1
            for p in range(pairs.shape[0]):
                if u[p] < probs[k, p]:
                    root = _union(parent, size, pairs[p, 0], pairs[p, 1])
                    if size[root] > biggest:
                        biggest = size[root]
            origin_size[r, k] = size[_find(parent, origin)]
            max_size[r, k] = biggest
    return origin_size, max_size


def cluster_sizes(field: RateField, t0_grid, origin, replicas, seed):
    """Origin-cluster and largest-cluster sizes, each of shape ``(replicas, len(t0_grid))``."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    pairs, c = _pairs(field)
    grid = np.atleast_1d(np.asarray(t0_grid, dtype=float))
    probs = open_probability(c[None, :], grid[:, None])
    return _cluster_batch(
        rng.check_seed(seed), int(replicas), field.n_sites, np.ascontiguousarray(pairs),
        np.ascontiguousarray(probs), int(origin),
    )


@dataclass(frozen=True)
class ClusterStats:
    origin_sizes: np.ndarray
    max_sizes: np.ndarray

    @property
    def replicas(self) -> int:
        return self.origin_sizes.size

    def distribution(self) -> dict:
        """Empirical law of the origin-cluster size, ``{k: P(|C_0| = k)}``."""
        values, counts = np.unique(self.origin_sizes, return_counts=True)
        return {int(k): c / self.replicas for k, c in zip(values, counts)}

    @property
    def mean(self) -> float:
        return float(self.origin_sizes.mean())

    @property
    def stderr(self) -> float:
        if self.replicas < 2:
            return float("nan")
        return float(self.origin_sizes.std(ddof=1) / np.sqrt(self.replicas))


def cluster_stats(field: RateField, t0, origin, replicas, seed) -> ClusterStats:
    origin_sizes, max_sizes = cluster_sizes(field, [t0], origin, replicas, seed)
    return ClusterStats(origin_sizes[:, 0], max_sizes[:, 0])


def central_site(field: RateField) -> int:
    """Site closest to the centroid of the window."""
    centre = field.positions.mean(axis=0)
    return int(np.argmin(np.linalg.norm(field.positions - centre, axis=1)))


@dataclass(frozen=True)
class ScanRow:
    t0: float
    replicas: int
    mean_cluster: float
    p_exceed: float
    stderr: float


@dataclass(frozen=True)
class ScanResult:
    rows: list
    size_threshold: int
    target: float
    recommended: Optional[float]

    @property
    def subcritical_found(self) -> bool:
        return self.recommended is not None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t0", "replicas", "mean_cluster", "p_exceed", "stderr"])
            for row in self.rows:
                w.writerow([
                    format_float(row.t0), row.replicas, format_float(row.mean_cluster),
                    format_float(row.p_exceed), format_float(row.stderr),
                ])


def scan_t0(field: RateField, t0_grid, size_threshold=None, replicas=1000, seed=0,
            target=DEFAULT_TARGET, origin=None) -> ScanResult:
    """Estimate ``P(largest cluster > size_threshold)`` along ``t0_grid``.

    The recommendation is the largest grid value whose estimate is below
    ``target``; ``recommended is None`` when no grid point qualifies.
    """
    grid = np.asarray(t0_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("t0 grid must be nonempty")
    if np.any(np.diff(grid) < 0) or grid[0] < 0:
        raise ValueError("t0 grid must be sorted and nonnegative")
    if size_threshold is None:
        size_threshold = max(1, field.n_sites // 4)
        warnings.warn(
            f"default size threshold {size_threshold} (window/4); finite-window boundary "
            "effects may bias exceedance estimates",
            RuntimeWarning,
            stacklevel=2,
        )
    if origin is None:
        origin = central_site(field)
    origin_sizes, max_sizes = cluster_sizes(field, grid, origin, replicas, seed)
    rows = []
    recommended = None
    for k, t0 in enumerate(grid):
        exceed = max_sizes[:, k] > size_threshold
        p = float(exceed.mean())
        stderr = float(np.sqrt(p * (1 - p) / replicas))
        rows.append(ScanRow(float(t0), int(replicas), float(origin_sizes[:, k].mean()), p, stderr))
        if p < target:
            recommended = float(t0)
    return ScanResult(rows, int(size_threshold), float(target), recommended)


def distance_bound(kernel: Callable[[np.ndarray], np.ndarray]):
    """Pair bound ``(p, q) -> kernel(|p - q|)`` for position arrays."""
    return lambda p, q: kernel(np.linalg.norm(np.asarray(p) - np.asarray(q), axis=-1))


def verify_domination(field: RateField, bound):
    """Check ``c[x, y] <= bound(pos_x, pos_y)`` for every pair ``x != y``.

    Returns ``(ok, violations)`` where each violation is
    ``(x, y, rate, bound_value)``.
    """
    if not field.symmetric:
        raise ValueError("domination is checked on a symmetric field; pass symmetrize(field)")
    n = field.n_sites
    x, y = np.triu_indices(n, k=1)
    rates = np.asarray(field.rates[x, y]).ravel() if x.size else np.empty(0)
    limits = np.asarray(bound(field.positions[x], field.positions[y]), dtype=float)
    bad = np.flatnonzero(rates > limits)
    violations = [(int(x[i]), int(y[i]), float(rates[i]), float(limits[i])) for i in bad]
    return not violations, violations
