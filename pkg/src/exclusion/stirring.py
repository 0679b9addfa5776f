"""Symmetric exclusion via the stirring construction and its backward trace.

For an undirected event log, the backward trace from ``(x, t)`` repeatedly
jumps to the partner of the most recent earlier event at the current site
(the first look-up includes time ``t`` itself, later ones are strict).  The
configuration at time ``t`` started from ``sigma`` is ``sigma`` composed with
the trace map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba as nb
import numpy as np

from . import rng
from .clocks import EventLog, _stream_next, _stream_open, log_edges
from .environment import RateField
from .errors import ExplosionError


class _Explosion:
    """Cemetery value of a trace that did not terminate."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "EXPLOSION"


EXPLOSION = _Explosion()


@dataclass(frozen=True)
class TraceResult:
    terminal: object
    steps: int
    visited: Optional[tuple] = None
    times: Optional[tuple] = None

    @property
    def exploded(self) -> bool:
        return self.terminal is EXPLOSION


@nb.njit(cache=True)
def _trace(ptr, stime, spartner, x, t, cap):
    cur = x
    bound = t
    steps = 0
    while True:
        lo = ptr[cur]
        hi = ptr[cur + 1]
        if steps == 0:
            j = np.searchsorted(stime[lo:hi], bound, side="right") - 1
        else:
            j = np.searchsorted(stime[lo:hi], bound, side="left") - 1
        if j < 0:
            return cur, steps
        if steps == cap:
            return -1, steps
        steps += 1
        bound = stime[lo + j]
        cur = spartner[lo + j]


@nb.njit(cache=True)
def _trace_path(ptr, stime, spartner, x, t, cap):
    visited = [x]
    times = [t]
    cur = x
    bound = t
    steps = 0
    while True:
        lo = ptr[cur]
        hi = ptr[cur + 1]
        if steps == 0:
            j = np.searchsorted(stime[lo:hi], bound, side="right") - 1
        else:
            j = np.searchsorted(stime[lo:hi], bound, side="left") - 1
        if j < 0:
            return cur, steps, visited, times
        if steps == cap:
            return -1, steps, visited, times
        steps += 1
        bound = stime[lo + j]
        cur = spartner[lo + j]
        visited.append(cur)
        times.append(bound)


@nb.njit(cache=True)
def _trace_all(ptr, stime, spartner, n, t, cap):
    out = np.empty(n, dtype=np.int64)
    for x in range(n):
        out[x] = _trace(ptr, stime, spartner, x, t, cap)[0]
    return out


def default_step_cap(log: EventLog) -> int:
    return max(1, 10 * log.n_events)


def _check_time(log, t):
    if not 0 <= t <= log.horizon:
        raise ValueError(f"time {t} outside [0, {log.horizon}]")


def _check_undirected(log):
    if log.directed:
        raise ValueError("the stirring construction needs an undirected (symmetric) log")


def trace_back(log: EventLog, x, t, step_cap=None, record=False) -> TraceResult:
    """Terminal site of the backward trace from ``(x, t)``.

    With ``record=True`` the visited sites ``(x, x_1, x_2, ...)`` and the
    times ``(t, t_1, t_2, ...)`` are returned as well.  A trace exceeding
    ``step_cap`` moves ends in :data:`EXPLOSION`.
    """
    _check_time(log, t)
    cap = default_step_cap(log) if step_cap is None else int(step_cap)
    if cap < 1:
        raise ValueError("step_cap must be >= 1")
    args = (log.site_ptr, log.site_time, log.site_partner, int(x), float(t), cap)
    if record:
        term, steps, visited, times = _trace_path(*args)
        visited, times = tuple(int(v) for v in visited), tuple(float(s) for s in times)
    else:
        term, steps = _trace(*args)
        visited = times = None
    terminal = EXPLOSION if term < 0 else int(term)
    return TraceResult(terminal, int(steps), visited, times)


def stirring_permutation(log: EventLog, t, step_cap=None) -> np.ndarray:
    """Array ``p`` with ``p[x]`` the terminal of the trace from ``(x, t)``."""
    _check_time(log, t)
    cap = default_step_cap(log) if step_cap is None else int(step_cap)
    perm = _trace_all(log.site_ptr, log.site_time, log.site_partner, log.n_sites, float(t), cap)
    bad = np.flatnonzero(perm < 0)
    if bad.size:
        raise ExplosionError(int(bad[0]), cap)
    return perm


def as_configuration(sigma, n_sites=None) -> np.ndarray:
    sigma = np.asarray(sigma)
    if sigma.ndim != 1 or (n_sites is not None and sigma.size != n_sites):
        raise ValueError(f"configuration must be a vector of length {n_sites}")
    if not np.all((sigma == 0) | (sigma == 1)):
        raise ValueError("configuration entries must be 0 or 1")
    return sigma.astype(np.int8)


def evolve_ssep(log: EventLog, sigma, t, step_cap=None) -> np.ndarray:
    """Configuration ``eta_t(x) = sigma(X_t^x)``."""
    _check_undirected(log)
    sigma = as_configuration(sigma, log.n_sites)
    return sigma[stirring_permutation(log, t, step_cap)]


def sample_path_ssep(log: EventLog, sigma, grid, step_cap=None) -> np.ndarray:
    """Configurations at the (sorted) grid times, one row per time."""
    _check_undirected(log)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    sigma = as_configuration(sigma, log.n_sites)
    out = np.empty((grid.size, log.n_sites), dtype=np.int8)
    for i, t in enumerate(grid):
        out[i] = sigma[stirring_permutation(log, t, step_cap)]
    return out


@nb.njit(cache=True)
def _stream_terminals(key, n, edges, intensities, t):
    # Forward swaps over the merged clock stream: origin[x] is the site whose
    # content sits at x, which by bijectivity is the trace terminal from (x, t).
    origin = np.arange(n)
    ht, he, size, ekeys, counts = _stream_open(key, intensities, t)
    prev = -np.inf
    while size > 0:
        s, e, size = _stream_next(ht, he, size, ekeys, counts, intensities, t)
        if s <= prev:
            s = np.nextafter(prev, np.inf)
        if s > t:
            break
        prev = s
        a = edges[e, 0]
        b = edges[e, 1]
        origin[a], origin[b] = origin[b], origin[a]
    return origin


@nb.njit(cache=True, parallel=True)
def _terminals_batch(master, start, replicas, n, edges, intensities, t):
    out = np.empty((replicas, n), dtype=np.int64)
    for r in nb.prange(replicas):
        key = rng.derive(master, start + np.uint64(r))
        out[r] = _stream_terminals(key, n, edges, intensities, t)
    return out


def trace_terminals(field: RateField, t, replicas, seed, start=0) -> np.ndarray:
    """Trace terminals for ``replicas`` independent logs, shape ``(replicas, n)``.

    Row ``i`` equals ``stirring_permutation(sample_event_log(field, t,
    rng.replica_seed(seed, start + i)), t)``.  The batch path merges the edge
    clocks lazily and replays swaps forward, which yields the same map without
    materialising the log.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if not t > 0:
        return np.tile(np.arange(field.n_sites), (replicas, 1))
    edges, intensities, _ = log_edges(field, directed=False)
    return _terminals_batch(
        rng.check_seed(seed), np.uint64(start), int(replicas), field.n_sites,
        np.ascontiguousarray(edges), np.ascontiguousarray(intensities, dtype=float), float(t),
    )


def simulate_ssep(field: RateField, sigma, t, replicas, seed, start=0) -> np.ndarray:
    """Final configurations of ``replicas`` stirring runs, shape ``(replicas, n)``."""
    sigma = as_configuration(sigma, field.n_sites)
    return sigma[trace_terminals(field, t, replicas, seed, start)]
