"""Exclusion process with directed rates via windowed Harris percolation.

Time is cut into windows ``(r t0, (r+1) t0]``.  In each window the sites
joined by an edge that rings inside the window form a graph; its connected
components are replayed independently, each in chronological order, moving a
particle from ``x`` to ``y`` at a ring of the clock ``(x, y)`` whenever ``x``
is occupied and ``y`` is empty just before.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import rng
from .clocks import EventLog, _sample_events, log_edges
from .environment import RateField
from .errors import ComponentBlowup
from .stirring import as_configuration

DEFAULT_COMPONENT_CAP = 10**4

_OK = 0
_BLOWUP = 1


@dataclass(frozen=True)
class WindowGraph:
    """Undirected graph on the window sites; ``edges`` rows are ``x < y``, sorted."""

    n_sites: int
    edges: np.ndarray
    r: int = 0
    t0: float = math.inf


@dataclass(frozen=True)
class ComponentPartition:
    """``labels[x]`` is the component id of ``x``; ids are numbered by smallest member."""

    labels: np.ndarray
    sizes: np.ndarray

    @property
    def n_components(self) -> int:
        return self.sizes.size

    def members(self, label) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def _check_window(log, r, t0):
    if r < 0 or not t0 > 0:
        raise ValueError("need r >= 0 and t0 > 0")
    if (r + 1) * t0 > log.horizon * (1 + 1e-12):
        raise ValueError(f"window ({r * t0}, {(r + 1) * t0}] exceeds horizon {log.horizon}")


def build_window_graph(log: EventLog, r, t0) -> WindowGraph:
    """Edges ``{x, y}`` whose clock ``(x, y)`` or ``(y, x)`` rings in ``(r t0, (r+1) t0]``."""
    _check_window(log, r, t0)
    keep = (log.times > r * t0) & (log.times <= (r + 1) * t0)
    pairs = np.sort(log.edges[np.unique(log.edge_of[keep])], axis=1)
    pairs = np.unique(pairs, axis=0) if pairs.size else np.empty((0, 2), dtype=np.int64)
    return WindowGraph(log.n_sites, pairs, int(r), float(t0))


def components(graph: WindowGraph) -> ComponentPartition:
    n = graph.n_sites
    e = graph.edges
    adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, raw = connected_components(adj, directed=False)
    # relabel by first appearance so ids are canonical
    _, first = np.unique(raw, return_index=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(np.argsort(first))] = np.arange(first.size)
    labels = rank[raw]
    return ComponentPartition(labels, np.bincount(labels))


@nb.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@nb.njit(cache=True)
def _union(parent, size, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return ra
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return ra


@nb.njit(cache=True)
def _sep_replay(n, edges, times, edge_of, sigma, t, t0, cap, priority):
    """Windowed component replay.  Returns (eta, status, window, size).

    ``priority`` orders components inside a window: a component is processed
    at the rank of the smallest priority among its sites.
    """
    eta = sigma.copy()
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    comp_key = np.empty(n, dtype=np.int64)
    m = times.size
    i = 0
    r = 0
    while r * t0 < t:
        hi = (r + 1) * t0
        j = i
        while j < m and times[j] <= hi:
            j += 1
        # union over every ring of the window, including those after t
        for k in range(i, j):
            e = edge_of[k]
            root = _union(parent, size, edges[e, 0], edges[e, 1])
            if size[root] > cap:
                return eta, _BLOWUP, r, size[root]
        stop = i
        while stop < j and times[stop] <= t:
            stop += 1
        if stop > i:
            for k in range(i, j):
                e = edge_of[k]
                comp_key[_find(parent, edges[e, 0])] = n
            for k in range(i, j):
                e = edge_of[k]
                for end in range(2):
                    s = edges[e, end]
                    root = _find(parent, s)
                    if priority[s] < comp_key[root]:
                        comp_key[root] = priority[s]
            keys = np.empty(stop - i, dtype=np.int64)
            for k in range(i, stop):
                keys[k - i] = comp_key[_find(parent, edges[edge_of[k], 0])]
            order = np.argsort(keys, kind="mergesort")
            for q in range(order.size):
                k = i + order[q]
                e = edge_of[k]
                x = edges[e, 0]
                y = edges[e, 1]
                if eta[x] == 1 and eta[y] == 0:
                    eta[x] = 0
                    eta[y] = 1
        for k in range(i, j):
            e = edge_of[k]
            for end in range(2):
                s = edges[e, end]
                parent[s] = s
                size[s] = 1
        i = j
        r += 1
    return eta, _OK, r, 0


def _check_directed(log):
    if not log.directed:
        raise ValueError("the Harris construction needs a directed log (sample with directed=True)")


def evolve_sep(log: EventLog, sigma, t, t0, component_cap=DEFAULT_COMPONENT_CAP, order=None) -> np.ndarray:
    """Configuration at time ``t`` by the windowed component replay.

    ``order`` is an optional permutation of the sites fixing the order in
    which components of a window are processed (default: by smallest site).
    Raises :class:`ComponentBlowup` when a window component exceeds
    ``component_cap`` sites.
    """
    _check_directed(log)
    if not 0 <= t <= log.horizon:
        raise ValueError(f"time {t} outside [0, {log.horizon}]")
    if not t0 > 0:
        raise ValueError("t0 must be > 0")
    sigma = as_configuration(sigma, log.n_sites)
    priority = np.arange(log.n_sites) if order is None else np.argsort(np.asarray(order))
    eta, status, window, size = _sep_replay(
        log.n_sites, log.edges, log.times, log.edge_of, sigma, float(t), float(t0),
        int(component_cap), priority.astype(np.int64),
    )
    if status == _BLOWUP:
        raise ComponentBlowup(int(window), int(size), int(component_cap))
    return eta


def sample_path_sep(log: EventLog, sigma, grid, t0, component_cap=DEFAULT_COMPONENT_CAP) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    return np.array([evolve_sep(log, sigma, t, t0, component_cap) for t in grid], dtype=np.int8).reshape(
        grid.size, log.n_sites
    )


def global_replay(log: EventLog, sigma, t) -> np.ndarray:
    """Reference evolution: every ring up to ``t`` in global time order, no windows."""
    _check_directed(log)
    eta = as_configuration(sigma, log.n_sites).copy()
    for s, x, y in log.events():
        if s > t:
            break
        if eta[x] == 1 and eta[y] == 0:
            eta[x], eta[y] = 0, 1
    return eta


def dependency_set(log: EventLog, x, r, t0) -> set:
    """Sites whose initial occupation can influence ``x`` during window ``r``.

    Start from the component of ``x`` in window ``r`` and repeatedly replace
    the current set by the union of the components of its sites in the
    previous window, down to window 0.
    """
    _check_window(log, r, t0)
    current = {int(x)}
    for w in range(r, -1, -1):
        part = components(build_window_graph(log, w, t0))
        labels = {int(part.labels[y]) for y in current}
        current = {int(s) for s in np.flatnonzero(np.isin(part.labels, list(labels)))}
    return current


@nb.njit(cache=True, parallel=True)
def _sep_batch(master, start, replicas, n, edges, intensities, sigma, t, t0, cap):
    out = np.empty((replicas, n), dtype=np.int8)
    status = np.zeros(replicas, dtype=np.int64)
    worst = np.zeros(replicas, dtype=np.int64)
    priority = np.arange(n)
    for r in nb.prange(replicas):
        key = rng.derive(master, start + np.uint64(r))
        times, edge_of = _sample_events(key, intensities, t)
        eta, st, _, sz = _sep_replay(n, edges, times, edge_of, sigma, t, t0, cap, priority)
        out[r] = eta
        status[r] = st
        worst[r] = sz
    return out, status, worst


def simulate_sep(field: RateField, sigma, t, t0, replicas, seed, start=0,
                 component_cap=DEFAULT_COMPONENT_CAP) -> np.ndarray:
    """Final configurations of ``replicas`` Harris runs, shape ``(replicas, n)``.

    Row ``i`` equals ``evolve_sep(sample_event_log(field, t, rng.replica_seed(
    seed, start + i), directed=True), sigma, t, t0)``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    sigma = as_configuration(sigma, field.n_sites)
    if not t > 0:
        return np.tile(sigma, (replicas, 1))
    edges, intensities, _ = log_edges(field, directed=True)
    out, status, worst = _sep_batch(
        rng.check_seed(seed), np.uint64(start), int(replicas), field.n_sites,
        np.ascontiguousarray(edges), np.ascontiguousarray(intensities, dtype=float),
        sigma, float(t), float(t0), int(component_cap),
    )
    blown = np.flatnonzero(status == _BLOWUP)
    if blown.size:
        raise ComponentBlowup(-1, int(worst[blown[0]]), int(component_cap))
    return out
