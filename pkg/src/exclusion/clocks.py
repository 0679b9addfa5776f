"""Poisson event logs driving the graphical constructions.

An :class:`EventLog` stores, for every edge of a finite window, the sorted
jump times of an independent Poisson clock on ``(0, T]``.  Edges are
unordered pairs ``x < y`` when the log drives the stirring process and
ordered pairs ``(x, y)`` when it drives the exclusion process with
directed rates.

Canonical edge order: lexicographic in ``(x, y)``.  Edge ``e`` of a log
sampled with seed ``s`` uses the random stream ``rng.derive(s, e)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from . import rng
from .environment import RateField, format_float
from .errors import ConfigurationError

UNDIRECTED = 0
OUTGOING = 1
INCOMING = -1


@dataclass(frozen=True)
class TimeInterval:
    """Interval of times with explicit endpoint flags (closed by default)."""

    lower: float
    upper: float
    closed_lower: bool = True
    closed_upper: bool = True

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"interval lower {self.lower} exceeds upper {self.upper}")

    def mask(self, times):
        times = np.asarray(times)
        lo = times >= self.lower if self.closed_lower else times > self.lower
        hi = times <= self.upper if self.closed_upper else times < self.upper
        return lo & hi

    def __contains__(self, time):
        return bool(self.mask(np.array([time]))[0])


@nb.njit(cache=True)
def _tie_break(times, horizon):
    # Enforce strictly increasing global order; returns the number of kept events.
    m = times.size
    for i in range(1, m):
        if times[i] <= times[i - 1]:
            times[i] = np.nextafter(times[i - 1], np.inf)
    while m > 0 and times[m - 1] > horizon:
        m -= 1
    return m


@nb.njit(cache=True)
def _sample_events(key, intensities, horizon):
    """Global event stream of one log: times sorted, edge index per event."""
    cap = 16
    times = np.empty(cap)
    edge_of = np.empty(cap, dtype=np.int64)
    m = 0
    for e in range(intensities.size):
        c = intensities[e]
        if c <= 0.0:
            continue
        ekey = rng.derive(key, e)
        t = 0.0
        k = 0
        while True:
            t += rng.exponential(ekey, k, c)
            k += 1
            if t > horizon:
                break
            if m == cap:
                cap *= 2
                nt = np.empty(cap)
                ne = np.empty(cap, dtype=np.int64)
                nt[:m] = times[:m]
                ne[:m] = edge_of[:m]
                times = nt
                edge_of = ne
            times[m] = t
            edge_of[m] = e
            m += 1
    order = np.argsort(times[:m], kind="mergesort")
    times = times[:m][order]
    edge_of = edge_of[:m][order]
    m = _tie_break(times, horizon)
    return times[:m], edge_of[:m]


@nb.njit(cache=True)
def _heap_less(ht, he, i, j):
    return ht[i] < ht[j] or (ht[i] == ht[j] and he[i] < he[j])


@nb.njit(cache=True)
def _heap_swap(ht, he, i, j):
    ht[i], ht[j] = ht[j], ht[i]
    he[i], he[j] = he[j], he[i]


@nb.njit(cache=True)
def _heap_down(ht, he, size, i):
    while True:
        left = 2 * i + 1
        if left >= size:
            return
        best = left
        if left + 1 < size and _heap_less(ht, he, left + 1, left):
            best = left + 1
        if not _heap_less(ht, he, best, i):
            return
        _heap_swap(ht, he, best, i)
        i = best


@nb.njit(cache=True)
def _stream_open(key, intensities, horizon):
    """Lazy k-way merge of the per-edge clocks; same events and order as ``_sample_events``.

    Returns the heap state ``(ht, he, size, ekeys, counts)`` for ``_stream_next``.
    """
    n_edges = intensities.size
    ht = np.empty(n_edges)
    he = np.empty(n_edges, dtype=np.int64)
    ekeys = np.empty(n_edges, dtype=np.uint64)
    counts = np.zeros(n_edges, dtype=np.int64)
    size = 0
    for e in range(n_edges):
        c = intensities[e]
        if c <= 0.0:
            continue
        ekeys[e] = rng.derive(key, e)
        first = rng.exponential(ekeys[e], 0, c)
        counts[e] = 1
        if first <= horizon:
            ht[size] = first
            he[size] = e
            size += 1
    for i in range(size // 2 - 1, -1, -1):
        _heap_down(ht, he, size, i)
    return ht, he, size, ekeys, counts


@nb.njit(cache=True)
def _stream_next(ht, he, size, ekeys, counts, intensities, horizon):
    """Pop the earliest raw event and refill its edge; returns ``(time, edge, size)``."""
    if size == 0:
        return np.inf, -1, 0
    t = ht[0]
    e = he[0]
    nxt = t + rng.exponential(ekeys[e], counts[e], intensities[e])
    counts[e] += 1
    if nxt <= horizon:
        ht[0] = nxt
    else:
        size -= 1
        ht[0] = ht[size]
        he[0] = he[size]
    _heap_down(ht, he, size, 0)
    return t, e, size


@nb.njit(cache=True)
def _site_index(n_sites, edges, times, edge_of, directed):
    """Per-site merged index (CSR): time, partner, orientation, edge of each event."""
    counts = np.zeros(n_sites + 1, dtype=np.int64)
    for i in range(times.size):
        e = edge_of[i]
        counts[edges[e, 0] + 1] += 1
        counts[edges[e, 1] + 1] += 1
    ptr = np.cumsum(counts)
    fill = ptr[:-1].copy()
    total = ptr[-1]
    s_time = np.empty(total)
    s_partner = np.empty(total, dtype=np.int64)
    s_orient = np.empty(total, dtype=np.int64)
    s_edge = np.empty(total, dtype=np.int64)
    for i in range(times.size):
        e = edge_of[i]
        a = edges[e, 0]
        b = edges[e, 1]
        j = fill[a]
        s_time[j] = times[i]
        s_partner[j] = b
        s_orient[j] = 1 if directed else 0
        s_edge[j] = e
        fill[a] += 1
        j = fill[b]
        s_time[j] = times[i]
        s_partner[j] = a
        s_orient[j] = -1 if directed else 0
        s_edge[j] = e
        fill[b] += 1
    return ptr, s_time, s_partner, s_orient, s_edge


def _readonly(*arrays):
    for a in arrays:
        a.flags.writeable = False


class EventLog:
    """Jump times of the edge clocks of a finite window on ``(0, horizon]``.

    Parameters
    ----------
    n_sites : int
    horizon : float
    edges : array_like, shape (E, 2)
        Canonically ordered edges; for undirected logs each row has ``x < y``.
    times, edge_of : array_like
        The global event stream: event ``i`` rings edge ``edge_of[i]`` at
        ``times[i]``.  It is sorted here; ties are broken by nudging the later
        event up by one ulp.
    directed : bool
    intensities : array_like, optional
        Clock rates per edge (informational, used for export and diagnostics).
    """

    def __init__(self, n_sites, horizon, edges, times, edge_of, directed, intensities=None):
        horizon = float(horizon)
        if not horizon >= 0:
            raise ValueError("horizon must be >= 0")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        times = np.array(times, dtype=float)
        edge_of = np.array(edge_of, dtype=np.int64)
        if times.shape != edge_of.shape:
            raise ValueError("times and edge_of must have equal length")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n_sites or np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("edges must join distinct sites of the window")
            if not directed and np.any(edges[:, 0] > edges[:, 1]):
                raise ValueError("undirected edges must be stored as x < y")
            keys = edges[:, 0] * n_sites + edges[:, 1]
            if np.any(np.diff(keys) <= 0):
                raise ValueError("edges must be distinct and in lexicographic order")
        if edge_of.size and (edge_of.min() < 0 or edge_of.max() >= len(edges)):
            raise ValueError("edge_of refers to an unknown edge")
        if times.size and (times.min() < 0 or times.max() > horizon):
            raise ValueError("event times must lie in [0, horizon]")
        order = np.lexsort((edge_of, times))
        times, edge_of = times[order], edge_of[order]
        m = _tie_break(times, horizon)
        times, edge_of = times[:m], edge_of[:m]

        self.n_sites = int(n_sites)
        self.horizon = horizon
        self.directed = bool(directed)
        self.edges = edges
        self.times = times
        self.edge_of = edge_of
        self.intensities = (
            np.full(len(edges), np.nan) if intensities is None else np.array(intensities, dtype=float)
        )
        (self.site_ptr, self.site_time, self.site_partner, self.site_orient, self.site_edge) = _site_index(
            self.n_sites, edges, times, edge_of, self.directed
        )
        by_edge = np.argsort(edge_of, kind="stable")
        self.edge_ptr = np.concatenate([[0], np.cumsum(np.bincount(edge_of, minlength=len(edges)))])
        self.edge_events = by_edge
        self._edge_lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
        _readonly(
            self.edges, self.times, self.edge_of, self.intensities, self.site_ptr, self.site_time,
            self.site_partner, self.site_orient, self.site_edge, self.edge_ptr, self.edge_events,
        )

    @property
    def n_events(self) -> int:
        return self.times.size

    def edge_index(self, x, y) -> int:
        """Index of the edge joining ``x`` and ``y`` (orientation matters for directed logs)."""
        if not self.directed and x > y:
            x, y = y, x
        return self._edge_lookup[(int(x), int(y))]

    def edge_times(self, e) -> np.ndarray:
        """Sorted jump times of edge ``e``."""
        return self.times[self.edge_events[self.edge_ptr[e] : self.edge_ptr[e + 1]]]

    def site_slice(self, x):
        lo, hi = self.site_ptr[x], self.site_ptr[x + 1]
        return self.site_time[lo:hi], self.site_partner[lo:hi], self.site_orient[lo:hi]

    def events(self):
        """Iterate ``(time, x, y)`` over the global stream in time order."""
        for t, e in zip(self.times, self.edge_of):
            yield float(t), int(self.edges[e, 0]), int(self.edges[e, 1])

    def with_events(self, times, edge_of, horizon=None) -> "EventLog":
        return EventLog(
            self.n_sites, self.horizon if horizon is None else horizon, self.edges, times, edge_of,
            self.directed, self.intensities,
        )

    def check_regularity(self) -> None:
        """Assert the path-regularity properties: strictly increasing per edge,
        distinct across edges, finite counts, index consistent with the stream."""
        assert np.all(np.diff(self.times) > 0), "event times are not globally distinct"
        for e in range(len(self.edges)):
            assert np.all(np.diff(self.edge_times(e)) > 0)
        rebuilt = _site_index(self.n_sites, self.edges, self.times, self.edge_of, self.directed)
        current = (self.site_ptr, self.site_time, self.site_partner, self.site_orient, self.site_edge)
        for a, b in zip(rebuilt, current):
            assert np.array_equal(a, b), "per-site index inconsistent with the event stream"

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return (
            self.n_sites == other.n_sites
            and self.horizon == other.horizon
            and self.directed == other.directed
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.edge_of, other.edge_of)
        )

    __hash__ = None

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return (
            f"EventLog({kind}, n_sites={self.n_sites}, edges={len(self.edges)}, "
            f"events={self.n_events}, horizon={self.horizon})"
        )


def log_edges(field: RateField, directed=None):
    """Canonical edges and clock intensities used to drive ``field``.

    Undirected logs need a symmetric field and use intensity ``c[x, y]``;
    directed logs use every ordered pair with ``c[x, y] > 0``.
    """
    if directed is None:
        directed = not field.symmetric
    if directed:
        src, dst, rate = field.triples()
        return np.stack([src, dst], axis=1), rate, True
    if not field.symmetric:
        raise ConfigurationError("an undirected log needs a symmetric rate field")
    x, y, fwd, _ = field.undirected_edges()
    return np.stack([x, y], axis=1), fwd, False


def sample_event_log(field: RateField, horizon, seed, directed=None) -> EventLog:
    """Independent Poisson clocks on every edge of ``field`` over ``(0, horizon]``.

    The result is a deterministic function of ``(field, horizon, seed, directed)``.
    """
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    key = rng.check_seed(seed)
    edges, intensities, directed = log_edges(field, directed)
    times, edge_of = _sample_events(key, np.ascontiguousarray(intensities, dtype=float), float(horizon))
    return EventLog(field.n_sites, horizon, edges, times, edge_of, directed, intensities)


def site_events(log: EventLog, x, window: TimeInterval):
    """Events touching ``x`` inside ``window`` as ``(time, partner, orientation)``.

    Orientation is ``+1`` when ``x`` is the source of a directed edge, ``-1``
    when it is the target and ``0`` for undirected edges.
    """
    times, partners, orient = log.site_slice(x)
    keep = window.mask(times)
    return [(float(t), int(p), int(o)) for t, p, o in zip(times[keep], partners[keep], orient[keep])]


def time_shift(log: EventLog, t) -> EventLog:
    """Events strictly after ``t``, moved back by ``t``; horizon ``T - t``."""
    if not 0 <= t <= log.horizon:
        raise ValueError(f"shift {t} outside [0, {log.horizon}]")
    if t == 0:
        return log
    keep = log.times > t
    return log.with_events(log.times[keep] - t, log.edge_of[keep], horizon=log.horizon - t)


def time_reverse(log: EventLog, horizon=None) -> EventLog:
    """Map every jump time ``s`` to ``T - s``."""
    horizon = log.horizon if horizon is None else float(horizon)
    if horizon != log.horizon:
        raise ValueError(f"reversal horizon {horizon} differs from log horizon {log.horizon}")
    return log.with_events(horizon - log.times, log.edge_of)


def write_event_log(log: EventLog, path) -> None:
    """One line per event: ``time x y orientation`` (1 directed, 0 undirected).

    Header comments carry the horizon, the window size and the full edge list
    with intensities, so that re-reading gives an equal log.
    """
    orient = 1 if log.directed else 0
    with open(path, "w") as fh:
        fh.write(f"# horizon {format_float(log.horizon)}\n")
        fh.write(f"# sites {log.n_sites}\n")
        fh.write(f"# directed {orient}\n")
        for (a, b), c in zip(log.edges, log.intensities):
            fh.write(f"# edge {a} {b} {format_float(c)}\n")
        for t, a, b in log.events():
            fh.write(f"{format_float(t)} {a} {b} {orient}\n")


def read_event_log(path) -> EventLog:
    header = {}
    edges, intensities, rows = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "#":
                if parts[1] == "edge":
                    edges.append((int(parts[2]), int(parts[3])))
                    intensities.append(float(parts[4]))
                else:
                    header[parts[1]] = parts[2]
            else:
                rows.append((float(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])))
    try:
        horizon = float(header["horizon"])
        n_sites = int(header["sites"])
        directed = header["directed"] == "1"
    except KeyError as exc:
        raise ConfigurationError(f"event-log file {path} lacks header field {exc}") from exc
    if not edges:
        pairs = sorted({(a, b) if directed or a < b else (b, a) for _, a, b, _ in rows})
        edges, intensities = pairs, None
    lookup = {pair: i for i, pair in enumerate(edges)}
    times = [r[0] for r in rows]
    edge_of = [lookup[(a, b) if directed or a < b else (b, a)] for _, a, b, _ in rows]
    return EventLog(n_sites, horizon, edges, times, edge_of, directed, intensities)
