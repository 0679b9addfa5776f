"""Rate fields (environments) on finite site windows.

A :class:`RateField` holds the directed jump rates ``c[x, y]`` between the
sites of a finite window.  Constructors cover nearest-neighbour lattices with
constant or i.i.d. conductances, rates given by a kernel of the distance on a
Poisson point process, and Mott variable-range hopping on a marked Poisson
point process.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numba as nb
import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from . import rng
from .errors import ConfigurationError, EmptyWindowError

KINDS = ("lattice-constant", "lattice-iid", "ppp-kernel", "mott")
DISTRIBUTIONS = ("pareto", "uniform", "exponential")


class RateField:
    """Directed jump rates on a finite window of sites.

    Parameters
    ----------
    positions : array_like, shape (n, d)
        Site coordinates; row ``i`` is the position of site ``i``.
    rates : sparse matrix or array, shape (n, n)
        ``rates[x, y]`` is the rate of a jump from ``x`` to ``y``.
    marks : array_like, optional
        One real mark per site (energies for Mott fields).

    The object is treated as immutable: the stored arrays are flagged
    read-only and every transformation returns a new field.
    """

    def __init__(self, positions, rates, marks=None):
        positions = np.array(positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        n = positions.shape[0]
        if n == 0:
            raise EmptyWindowError("a rate field needs at least one site")
        mat = sp.csr_matrix(rates, dtype=float, copy=True)
        if mat.shape != (n, n):
            raise ConfigurationError(f"rate matrix shape {mat.shape} does not match {n} sites")
        if not np.all(np.isfinite(mat.data)) or np.any(mat.data < 0):
            raise ConfigurationError("rates must be finite and nonnegative")
        if np.any(mat.diagonal() != 0):
            raise ConfigurationError("self-rates c[x, x] must be zero")
        mat.eliminate_zeros()
        mat.sort_indices()
        mat.data.flags.writeable = False
        positions.flags.writeable = False
        self.positions = positions
        self.rates = mat
        if marks is not None:
            marks = np.array(marks, dtype=float)
            if marks.shape != (n,):
                raise ConfigurationError("need exactly one mark per site")
            marks.flags.writeable = False
        self.marks = marks
        self.symmetric = (mat != mat.T).nnz == 0
        self._triples = None

    @classmethod
    def from_triples(cls, positions, src, dst, rate, marks=None):
        positions = np.asarray(positions, dtype=float)
        n = positions.shape[0]
        mat = sp.coo_matrix((np.asarray(rate, float), (np.asarray(src), np.asarray(dst))), shape=(n, n))
        return cls(positions, mat, marks)

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def totals(self) -> np.ndarray:
        """Row sums ``c_x = sum_y c[x, y]``."""
        return np.asarray(self.rates.sum(axis=1)).ravel()

    def rate(self, x, y) -> float:
        return float(self.rates[x, y])

    def dense(self) -> np.ndarray:
        return self.rates.toarray()

    def triples(self):
        """Nonzero directed rates as ``(src, dst, rate)`` arrays in row-major order."""
        if self._triples is None:
            mat = self.rates
            src = np.repeat(np.arange(self.n_sites, dtype=np.int64), np.diff(mat.indptr))
            self._triples = (src, mat.indices.astype(np.int64), np.array(mat.data))
        src, dst, rate = self._triples
        return src.copy(), dst.copy(), rate.copy()

    def undirected_edges(self):
        """Pairs ``x < y`` with ``c[x, y] + c[y, x] > 0`` and the two directed rates.

        Returns ``(x, y, c[x, y], c[y, x])`` sorted lexicographically in ``(x, y)``.
        """
        src, dst, rate = self.triples()
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        keys, inverse = np.unique(lo * self.n_sites + hi, return_inverse=True)
        fwd = np.zeros(keys.size)
        bwd = np.zeros(keys.size)
        up = src < dst
        fwd[inverse[up]] = rate[up]
        bwd[inverse[~up]] = rate[~up]
        return keys // self.n_sites, keys % self.n_sites, fwd, bwd

    def restrict(self, sites) -> "RateField":
        """Sub-field on ``sites`` (renumbered 0..k-1 in the given order)."""
        idx = np.asarray(sites, dtype=np.int64)
        marks = None if self.marks is None else self.marks[idx]
        return RateField(self.positions[idx], self.rates[idx][:, idx], marks)

    def scaled(self, factor) -> "RateField":
        return RateField(self.positions, self.rates * float(factor), self.marks)

    def __eq__(self, other):
        if not isinstance(other, RateField):
            return NotImplemented
        if self.positions.shape != other.positions.shape:
            return False
        same_marks = (self.marks is None and other.marks is None) or (
            self.marks is not None and other.marks is not None and np.array_equal(self.marks, other.marks)
        )
        a, b = self.rates, other.rates
        return (
            same_marks
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    __hash__ = None

    def __repr__(self):
        return (
            f"RateField(n_sites={self.n_sites}, dim={self.dim}, "
            f"nonzero={self.rates.nnz}, symmetric={self.symmetric})"
        )


@dataclass(frozen=True)
class EnvironmentSpec:
    """Parameters of a random or deterministic environment.

    ``radius`` sets the lattice window ``[-radius, radius]^dim``; ``box_side``
    sets the point-process window ``[0, box_side]^dim``.
    """

    kind: str
    dim: int = 1
    radius: Optional[int] = None
    box_side: Optional[float] = None
    rate: float = 1.0
    distribution: str = "pareto"
    alpha: float = 0.5
    scale: float = 1.0
    low: float = 0.0
    high: float = 1.0
    mean: float = 1.0
    intensity: float = 1.0
    mark_bound: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown environment kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")
        rng.check_seed(self.seed)
        if self.kind.startswith("lattice"):
            if self.radius is None or self.radius < 1:
                raise ConfigurationError("lattice environments need radius >= 1")
            if self.kind == "lattice-constant" and not (self.rate >= 0 and math.isfinite(self.rate)):
                raise ConfigurationError("constant rate must be finite and >= 0")
            if self.kind == "lattice-iid":
                self._check_distribution()
        else:
            if self.box_side is None or not self.box_side > 0:
                raise ConfigurationError("point-process environments need box_side > 0")
            if not self.intensity > 0:
                raise ConfigurationError("intensity must be > 0")
            if self.kind == "mott" and not self.mark_bound >= 0:
                raise ConfigurationError("mark_bound must be >= 0")

    def _check_distribution(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigurationError(
                f"unknown distribution {self.distribution!r}; expected one of {DISTRIBUTIONS}"
            )
        if self.distribution == "pareto" and not (self.alpha > 0 and self.scale > 0):
            raise ConfigurationError("pareto needs alpha > 0 and scale > 0")
        if self.distribution == "uniform" and not (0 <= self.low <= self.high < math.inf):
            raise ConfigurationError("uniform needs 0 <= low <= high < inf")
        if self.distribution == "exponential" and not self.mean > 0:
            raise ConfigurationError("exponential needs mean > 0")


def lattice_sites(dim, radius):
    """Integer points of ``[-radius, radius]^dim`` in lexicographic order."""
    axis = np.arange(-radius, radius + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _lattice_edges(dim, radius):
    """Nearest-neighbour edges ``(i, j, direction)`` with ``site j = site i + e_direction``."""
    side = 2 * radius + 1
    idx = np.arange(side**dim).reshape((side,) * dim)
    src, dst, dirs = [], [], []
    for d in range(dim):
        lo = [slice(None)] * dim
        hi = [slice(None)] * dim
        lo[d] = slice(0, side - 1)
        hi[d] = slice(1, side)
        src.append(idx[tuple(lo)].ravel())
        dst.append(idx[tuple(hi)].ravel())
        dirs.append(np.full(src[-1].size, d))
    return np.concatenate(src), np.concatenate(dst), np.concatenate(dirs).astype(np.int64)


@nb.njit(cache=True)
def _edge_uniforms(seed, coords, dirs):
    # One uniform per undirected lattice edge, keyed by (direction, lower endpoint),
    # so nested windows share the values of their common edges.
    out = np.empty(dirs.size)
    for i in range(dirs.size):
        key = rng.derive(seed, dirs[i])
        for j in range(coords.shape[1]):
            key = rng.derive(key, rng.zigzag(coords[i, j]))
        out[i] = rng.uniform(key, 0)
    return out


def _conductances(spec, u):
    if spec.distribution == "pareto":
        return spec.scale * (1.0 - u) ** (-1.0 / spec.alpha)
    if spec.distribution == "uniform":
        return spec.low + (spec.high - spec.low) * u
    return -spec.mean * np.log1p(-u)


def build_lattice_env(spec: EnvironmentSpec) -> RateField:
    """Nearest-neighbour field on ``Z^dim`` restricted to the spec's window.

    For ``lattice-iid`` each undirected edge gets one conductance, assigned to
    both directions.  The draw for an edge depends only on the seed and the
    edge's lattice coordinates, so growing the radius keeps existing edges.
    """
    if spec.kind not in ("lattice-constant", "lattice-iid"):
        raise ConfigurationError(f"build_lattice_env cannot build kind {spec.kind!r}")
    coords = lattice_sites(spec.dim, spec.radius)
    src, dst, dirs = _lattice_edges(spec.dim, spec.radius)
    if spec.kind == "lattice-constant":
        values = np.full(src.size, float(spec.rate))
    else:
        u = _edge_uniforms(rng.check_seed(spec.seed), coords[src], dirs)
        values = _conductances(spec, u)
    n = coords.shape[0]
    mat = sp.coo_matrix(
        (np.concatenate([values, values]), (np.concatenate([src, dst]), np.concatenate([dst, src]))),
        shape=(n, n),
    )
    return RateField(coords.astype(float), mat)


def sample_ppp(spec: EnvironmentSpec, generator: np.random.Generator):
    """Homogeneous Poisson points in ``[0, box_side]^dim``: Poisson count, then uniform positions."""
    volume = spec.box_side**spec.dim
    count = generator.poisson(spec.intensity * volume)
    if count == 0:
        raise EmptyWindowError(f"Poisson point process sampled no points (seed {spec.seed})")
    return generator.uniform(0.0, spec.box_side, size=(count, spec.dim))


def kernel_field(positions, kernel: Callable[[np.ndarray], np.ndarray]) -> RateField:
    """Field with ``c[x, y] = kernel(|x - y|)`` for all ordered pairs of distinct sites."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    dist = cdist(positions, positions)
    off = ~np.eye(dist.shape[0], dtype=bool)
    values = np.asarray(kernel(dist[off]), dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ConfigurationError("kernel must be finite and nonnegative")
    order = np.argsort(dist[off], kind="stable")
    if np.any(np.diff(values[order]) > 0):
        raise ConfigurationError("kernel must be nonincreasing in the distance")
    rates = np.zeros_like(dist)
    rates[off] = values
    return RateField(positions, rates)


def build_ppp_env(spec: EnvironmentSpec, kernel: Callable[[np.ndarray], np.ndarray]) -> RateField:
    if spec.kind != "ppp-kernel":
        raise ConfigurationError(f"build_ppp_env cannot build kind {spec.kind!r}")
    generator = np.random.default_rng(int(spec.seed))
    return kernel_field(sample_ppp(spec, generator), kernel)


def mott_field(positions, marks) -> RateField:
    """Mott variable-range hopping rates ``exp(-|x_i - x_j| - max(E_j - E_i, 0))``."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    marks = np.asarray(marks, dtype=float)
    dist = cdist(positions, positions)
    barrier = np.maximum(marks[None, :] - marks[:, None], 0.0)
    rates = np.exp(-dist - barrier)
    np.fill_diagonal(rates, 0.0)
    return RateField(positions, rates, marks)


def build_mott_env(spec: EnvironmentSpec) -> RateField:
    if spec.kind != "mott":
        raise ConfigurationError(f"build_mott_env cannot build kind {spec.kind!r}")
    generator = np.random.default_rng(int(spec.seed))
    positions = sample_ppp(spec, generator)
    marks = generator.uniform(-spec.mark_bound, spec.mark_bound, size=positions.shape[0])
    return mott_field(positions, marks)


def exp_kernel(amplitude=1.0):
    """``g(r) = amplitude * exp(-r)``."""
    return lambda r: amplitude * np.exp(-np.asarray(r, dtype=float))


def build_env(spec: EnvironmentSpec, kernel=None) -> RateField:
    """Dispatch on ``spec.kind``; ``ppp-kernel`` defaults to ``g(r) = exp(-r)``."""
    if spec.kind.startswith("lattice"):
        return build_lattice_env(spec)
    if spec.kind == "ppp-kernel":
        return build_ppp_env(spec, kernel or exp_kernel(1.0))
    return build_mott_env(spec)


def central_sites(field: RateField, k) -> np.ndarray:
    """Indices of the ``k`` sites closest to the window centroid, in site order."""
    if not 1 <= k <= field.n_sites:
        raise ConfigurationError(f"cannot keep {k} of {field.n_sites} sites")
    centre = field.positions.mean(axis=0)
    dist = np.linalg.norm(field.positions - centre, axis=1)
    return np.sort(np.argsort(dist, kind="stable")[:k])


@dataclass(frozen=True)
class C1Report:
    totals: np.ndarray
    flagged: np.ndarray


def check_c1(field: RateField, warn_threshold: Optional[float] = None) -> C1Report:
    """Row sums ``c_x``; sites above ``warn_threshold`` are flagged with a warning."""
    totals = field.totals
    if warn_threshold is None:
        flagged = np.empty(0, dtype=np.int64)
    else:
        flagged = np.flatnonzero(totals > warn_threshold)
        if flagged.size:
            warnings.warn(
                f"{flagged.size} site(s) with total rate above {warn_threshold}; "
                f"largest c_x = {totals.max():.6g}",
                RuntimeWarning,
                stacklevel=2,
            )
    return C1Report(totals, flagged)


def check_liggett(field: RateField) -> float:
    """``max_x sum_{y != x} max(c[x, y], c[y, x])`` over the window."""
    both = field.rates.maximum(field.rates.T)
    return float(np.asarray(both.sum(axis=1)).max())


def symmetrize(field: RateField) -> RateField:
    """The field ``c[x, y] + c[y, x]``; its ``totals`` are the symmetrised row sums."""
    return RateField(field.positions, field.rates + field.rates.T, field.marks)


def format_float(value) -> str:
    return format(float(value), ".17g")


def write_rate_field(field: RateField, path) -> None:
    """Plain-text table: ``n dim``, one line per site, one line per nonzero rate."""
    with open(path, "w") as fh:
        fh.write(f"{field.n_sites} {field.dim}\n")
        for i in range(field.n_sites):
            cols = [str(i)] + [format_float(v) for v in field.positions[i]]
            if field.marks is not None:
                cols.append(format_float(field.marks[i]))
            fh.write(" ".join(cols) + "\n")
        for x, y, c in zip(*field.triples()):
            fh.write(f"{x} {y} {format_float(c)}\n")


def read_rate_field(path) -> RateField:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        n, dim = int(lines[0][0]), int(lines[0][1])
        site_rows = lines[1 : 1 + n]
        positions = np.empty((n, dim))
        marks = [] if site_rows and len(site_rows[0]) == dim + 2 else None
        for row in site_rows:
            i = int(row[0])
            positions[i] = [float(v) for v in row[1 : 1 + dim]]
            if marks is not None:
                marks.append((i, float(row[1 + dim])))
        if marks is not None:
            marks = [m for _, m in sorted(marks)]
        triples = np.array([[float(v) for v in row] for row in lines[1 + n :]]).reshape(-1, 3)
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"malformed rate-field file {path}: {exc}") from exc
    return RateField.from_triples(
        positions, triples[:, 0].astype(np.int64), triples[:, 1].astype(np.int64), triples[:, 2], marks
    )
