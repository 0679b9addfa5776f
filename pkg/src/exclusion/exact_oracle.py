"""Exact finite-state reference for small windows.

States of ``{0,1}^S`` are bitmasks: site ``i`` is bit ``i``.  Generators are
assembled from the jump rates and exponentiated by uniformization, which
keeps transition matrices nonnegative and stochastic by construction.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .environment import RateField
from .errors import CapacityError

MAX_SITES = 20
DENSE_MAX_SITES = 12
DEFAULT_TOL = 1e-12
# uniformization pieces are kept at Poisson mean <= this, then squared/chained
_MAX_PIECE_MEAN = 16.0


def swap(eta, x, y) -> np.ndarray:
    """Configuration with the occupations of ``x`` and ``y`` exchanged."""
    if x == y:
        raise ValueError("swap needs two distinct sites")
    out = np.array(eta, copy=True)
    out[x], out[y] = out[y], out[x]
    return out


def state_of(eta) -> int:
    eta = np.asarray(eta)
    return int(np.sum(eta.astype(np.int64) << np.arange(eta.size, dtype=np.int64)))


def configuration_of(state, n_sites) -> np.ndarray:
    return ((int(state) >> np.arange(n_sites)) & 1).astype(np.int8)


def occupations(states, n_sites) -> np.ndarray:
    """Matrix ``(len(states), n_sites)`` of occupation bits."""
    states = np.asarray(states, dtype=np.int64)
    return ((states[:, None] >> np.arange(n_sites)) & 1).astype(np.int8)


def sector_states(n_sites, particles) -> np.ndarray:
    """Sorted bitmasks of all states with the given particle number."""
    masks = [sum(1 << i for i in combo) for combo in itertools.combinations(range(n_sites), particles)]
    return np.array(sorted(masks), dtype=np.int64)


class GeneratorMatrix:
    """Generator on a set of states (all of ``{0,1}^S`` or one particle sector).

    ``matrix`` is a dense array for windows of at most 12 sites and a CSR
    matrix above that.  Rows and columns follow ``states`` (sorted bitmasks).
    """

    def __init__(self, n_sites, states, matrix):
        self.n_sites = n_sites
        self.states = states
        self.matrix = matrix

    @property
    def size(self) -> int:
        return self.states.size

    @property
    def is_dense(self) -> bool:
        return isinstance(self.matrix, np.ndarray)

    def dense(self) -> np.ndarray:
        return self.matrix if self.is_dense else self.matrix.toarray()

    def index_of(self, state) -> int:
        i = int(np.searchsorted(self.states, state))
        if i >= self.size or self.states[i] != state:
            raise KeyError(f"state {state:#b} not in this generator's state set")
        return i

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy() if self.is_dense else self.matrix.diagonal()

    def apply(self, values) -> np.ndarray:
        """``L F`` for a state function given as a vector over ``states``."""
        return np.asarray(self.matrix @ np.asarray(values, dtype=float)).ravel()

    def equals(self, other: "GeneratorMatrix") -> bool:
        """Exact entrywise equality."""
        return (
            self.n_sites == other.n_sites
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.dense(), other.dense())
        )


def _check_capacity(n):
    if n > MAX_SITES:
        raise CapacityError(f"exact enumeration supports at most {MAX_SITES} sites, got {n}")


def _state_set(n, sector):
    if sector is None:
        return np.arange(1 << n, dtype=np.int64)
    if not 0 <= sector <= n:
        raise ValueError(f"sector must lie in [0, {n}]")
    return sector_states(n, sector)


def _assemble(n, states, rows, cols, vals, dense=None) -> GeneratorMatrix:
    size = states.size
    if dense is None:
        dense = n <= DENSE_MAX_SITES
    off = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    off.sum_duplicates()
    off.sort_indices()
    # row sums in column order, so every storage and assembly route agrees bit for bit
    diag = np.zeros(size)
    filled = np.flatnonzero(np.diff(off.indptr))
    if filled.size:
        diag[filled] = -np.add.reduceat(off.data, off.indptr[filled])
    if dense:
        mat = off.toarray()
        mat[np.arange(size), np.arange(size)] = diag
    else:
        mat = (off + sp.diags(diag)).tocsr()
        mat.sort_indices()
    return GeneratorMatrix(n, states, mat)


def _transitions(states, x, y, rate, require):
    bx = (states >> x) & 1
    by = (states >> y) & 1
    ok = require(bx, by)
    src = np.flatnonzero(ok)
    target = states[ok] ^ ((1 << x) | (1 << y))
    return src, target, np.full(src.size, rate)


def build_generator_sep(field: RateField, sector: Optional[int] = None, dense=None) -> GeneratorMatrix:
    """Exclusion generator: rate ``c[x, y]`` from ``eta`` to ``eta^{x,y}`` when
    ``x`` is occupied and ``y`` empty, for every ordered pair."""
    n = field.n_sites
    _check_capacity(n)
    states = _state_set(n, sector)
    rows, cols, vals = [], [], []
    for x, y, c in zip(*field.triples()):
        src, target, v = _transitions(states, int(x), int(y), c, lambda bx, by: (bx == 1) & (by == 0))
        rows.append(src)
        cols.append(target)
        vals.append(v)
    return _finish(n, states, rows, cols, vals, dense)


def build_generator_stirring(field: RateField, sector: Optional[int] = None, dense=None) -> GeneratorMatrix:
    """Stirring generator: rate ``c[x, y]`` from ``eta`` to ``eta^{x,y}`` for
    every unordered pair whose occupations differ."""
    if not field.symmetric:
        raise ValueError("the stirring generator needs a symmetric field")
    n = field.n_sites
    _check_capacity(n)
    states = _state_set(n, sector)
    rows, cols, vals = [], [], []
    x_all, y_all, c_all, _ = field.undirected_edges()
    for x, y, c in zip(x_all, y_all, c_all):
        src, target, v = _transitions(states, int(x), int(y), c, lambda bx, by: bx != by)
        rows.append(src)
        cols.append(target)
        vals.append(v)
    return _finish(n, states, rows, cols, vals, dense)


def _finish(n, states, rows, cols, vals, dense):
    if rows:
        rows = np.concatenate(rows)
        targets = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows = targets = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    cols = np.searchsorted(states, targets)
    return _assemble(n, states, rows, cols, vals, dense)


def single_particle_generator(field: RateField) -> np.ndarray:
    """Random-walk generator: ``c[x, y]`` off the diagonal, ``-c_x`` on it."""
    q = field.dense()
    q[np.diag_indices_from(q)] = -field.totals
    return q


def _pieces(rate, t):
    """Number of equal pieces of ``t`` so each has Poisson mean <= _MAX_PIECE_MEAN (a power of 2)."""
    mean = rate * t
    if mean <= _MAX_PIECE_MEAN:
        return 0
    return int(math.ceil(math.log2(mean / _MAX_PIECE_MEAN)))


def _poisson_weights(mean, tol):
    weights = [math.exp(-mean)]
    total = weights[0]
    j = 0
    while 1.0 - total >= tol:
        j += 1
        weights.append(weights[-1] * mean / j)
        total += weights[-1]
        if j > 10_000:
            break
    # renormalise the truncated weights so rows stay stochastic
    return [w / total for w in weights]


def _check_args(t, tol):
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")


def uniformize(q, t, tol=DEFAULT_TOL) -> np.ndarray:
    """``exp(t Q)`` for a dense generator ``Q`` by uniformization.

    Long times are split into ``2**k`` pieces whose results are squared back.
    """
    _check_args(t, tol)
    q = np.asarray(q, dtype=float)
    size = q.shape[0]
    rate = float(np.max(-np.diag(q))) if size else 0.0
    if rate == 0.0 or t == 0:
        return np.eye(size)
    k = _pieces(rate, t)
    tau = t / 2**k
    step = np.eye(size) + q / rate
    weights = _poisson_weights(rate * tau, tol / 2**k)
    power = np.eye(size)
    out = weights[0] * power
    for w in weights[1:]:
        power = power @ step
        out += w * power
    for _ in range(k):
        out = out @ out
    return out


def transition_matrix(generator: GeneratorMatrix, t, tol=DEFAULT_TOL) -> np.ndarray:
    """Dense ``exp(t L)`` over the generator's states."""
    _check_args(t, tol)
    if not generator.is_dense:
        raise CapacityError("transition_matrix is dense-only; use evolve_distribution for large windows")
    return uniformize(generator.matrix, t, tol)


def _chain(generator, vector, t, tol, left):
    _check_args(t, tol)
    mat = generator.matrix
    diag = generator.diagonal()
    rate = float(np.max(-diag)) if diag.size else 0.0
    v = np.asarray(vector, dtype=float).copy()
    if rate == 0.0 or t == 0:
        return v
    pieces = 2 ** _pieces(rate, t)
    tau = t / pieces
    weights = _poisson_weights(rate * tau, tol / pieces)
    step = (sp.identity(generator.size, format="csr") + sp.csr_matrix(mat) / rate)
    if left:
        step = step.T.tocsr()
    for _ in range(pieces):
        term = v
        acc = weights[0] * term
        for w in weights[1:]:
            term = step @ term
            acc = acc + w * term
        v = acc
    return v


def evolve_distribution(generator: GeneratorMatrix, p0, t, tol=DEFAULT_TOL) -> np.ndarray:
    """Law at time ``t`` (row vector ``p0 exp(t L)``), sparse-friendly."""
    return _chain(generator, p0, t, tol, left=True)


def semigroup_apply(generator: GeneratorMatrix, values, t, tol=DEFAULT_TOL) -> np.ndarray:
    """``S(t) F = exp(t L) F`` for a state function ``F`` given over ``states``."""
    return _chain(generator, values, t, tol, left=False)


def rw_semigroup(field: RateField, t, tol=DEFAULT_TOL) -> np.ndarray:
    """Single-particle transition matrix ``P_t`` over the window sites."""
    return uniformize(single_particle_generator(field), t, tol)


def tilde_L(field: RateField, f) -> np.ndarray:
    """``sum_y c[x, y] (f(y) - f(x))`` for every site ``x``."""
    f = np.asarray(f, dtype=float)
    src, dst, c = field.triples()
    return np.bincount(src, weights=c * (f[dst] - f[src]), minlength=field.n_sites)


def apply_generator(generator: GeneratorMatrix, values, state) -> float:
    """``(L F)(eta)``; ``values`` is ``F`` over ``generator.states``, ``state`` a
    bitmask or a configuration vector."""
    if not isinstance(state, (int, np.integer)):
        state = state_of(state)
    i = generator.index_of(int(state))
    row = generator.matrix[i]
    if generator.is_dense:
        return float(row @ np.asarray(values, dtype=float))
    return float((row @ np.asarray(values, dtype=float))[0])


def state_function(generator: GeneratorMatrix, func) -> np.ndarray:
    """Tabulate ``func(configuration)`` over the generator's states."""
    occ = occupations(generator.states, generator.n_sites)
    return np.array([func(row) for row in occ], dtype=float)
