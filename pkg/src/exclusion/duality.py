"""Density-field duality for the stirring process.

The generator applied to ``pi(f) = sum_x f(x) eta(x)`` is again linear in
``eta``: ``L pi(f) = sum_x eta(x) (L~ f)(x)`` with ``L~`` the random-walk
generator.  Consequences checked here: the exact identity on small windows,
``E[eta_t(x)] = (P_t sigma)(x)`` by Monte Carlo, and the mean-zero property of
``pi_t(f) - pi_0(f) - int_0^t sum_x eta_s(x) (L~ f)(x) ds``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from . import rng
from .clocks import _sample_events, log_edges
from .environment import RateField
from .exact_oracle import apply_generator, build_generator_stirring, occupations, rw_semigroup, tilde_L
from .stirring import as_configuration, simulate_ssep

DEFAULT_CHUNK = 50_000


def empirical_integral(eta, f) -> float:
    """``sum_x f(x) eta(x)``."""
    eta = np.asarray(eta)
    f = np.asarray(f, dtype=float)
    return float(np.sum(f[eta == 1]))


def check_duality_identity(field: RateField, f, eta):
    """Both sides of ``L pi(f) (eta) = sum_x eta(x) (L~ f)(x)``.

    The left side goes through the assembled stirring generator, the right
    side through the single-particle formula.
    """
    eta = as_configuration(eta, field.n_sites)
    f = np.asarray(f, dtype=float)
    gen = build_generator_stirring(field, sector=int(eta.sum()))
    occ = occupations(gen.states, field.n_sites)
    values = occ @ f
    left = apply_generator(gen, values, eta)
    right = float(np.dot(eta, tilde_L(field, f)))
    return left, right


@dataclass(frozen=True)
class SelfDualityResult:
    estimate: np.ndarray
    stderr: np.ndarray
    oracle: np.ndarray
    replicas: int

    @property
    def null_stderr(self) -> np.ndarray:
        """Standard error of the mean if the oracle value is the true mean."""
        p = np.clip(self.oracle, 0.0, 1.0)
        return np.sqrt(p * (1 - p) / self.replicas)

    @property
    def zscore(self) -> np.ndarray:
        # the sample error collapses to 0 at sites that never flipped, so the
        # test statistic uses the error under the oracle mean
        diff = self.estimate - self.oracle
        se = self.null_stderr
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, diff / se, np.where(np.abs(diff) <= 1e-12, 0.0, np.inf))
        return z


def site_means(field, sigma, t, replicas, seed, chunk=DEFAULT_CHUNK):
    """Monte Carlo mean and standard error of ``eta_t(x)`` for every site."""
    total = np.zeros(field.n_sites)
    done = 0
    while done < replicas:
        size = min(chunk, replicas - done)
        total += simulate_ssep(field, sigma, t, size, seed, start=done).sum(axis=0)
        done += size
    mean = total / replicas
    # occupations are Bernoulli, so the sample variance follows from the mean
    var = mean * (1 - mean) * replicas / max(replicas - 1, 1)
    return mean, np.sqrt(var / replicas)


def self_duality_mc(field: RateField, sigma, t, replicas, seed, x=None) -> SelfDualityResult:
    """Compare ``E[eta_t(x)]`` from stirring runs with ``(P_t sigma)(x)``.

    With ``x=None`` all sites are reported.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    sigma = as_configuration(sigma, field.n_sites)
    mean, stderr = site_means(field, sigma, t, replicas, seed)
    oracle = rw_semigroup(field, t) @ sigma.astype(float)
    if x is not None:
        mean, stderr, oracle = mean[[x]], stderr[[x]], oracle[[x]]
    return SelfDualityResult(mean, stderr, oracle, int(replicas))


@nb.njit(cache=True)
def _dynkin_path(n, edges, times, edge_of, sigma, lf, f, t, h):
    # Forward swap replay of the stirring log; integrates sum_x eta(x) lf(x)
    # exactly between events (h <= 0) or by left-endpoint sums on the grid kh.
    eta = sigma.copy()
    g = 0.0
    for x in range(n):
        if eta[x] == 1:
            g += lf[x]
    start = 0.0
    for x in range(n):
        if eta[x] == 1:
            start += f[x]
    integral = 0.0
    if h <= 0:
        last = 0.0
        for k in range(times.size):
            s = times[k]
            if s > t:
                break
            integral += g * (s - last)
            last = s
            a = edges[edge_of[k], 0]
            b = edges[edge_of[k], 1]
            if eta[a] != eta[b]:
                eta[a], eta[b] = eta[b], eta[a]
                g = 0.0
                for x in range(n):
                    if eta[x] == 1:
                        g += lf[x]
        integral += g * (t - last)
    else:
        steps = int(round(t / h))
        k = 0
        for j in range(steps):
            s = j * h
            while k < times.size and times[k] <= s:
                a = edges[edge_of[k], 0]
                b = edges[edge_of[k], 1]
                eta[a], eta[b] = eta[b], eta[a]
                k += 1
            g = 0.0
            for x in range(n):
                if eta[x] == 1:
                    g += lf[x]
            integral += h * g
        while k < times.size and times[k] <= t:
            a = edges[edge_of[k], 0]
            b = edges[edge_of[k], 1]
            eta[a], eta[b] = eta[b], eta[a]
            k += 1
    end = 0.0
    for x in range(n):
        if eta[x] == 1:
            end += f[x]
    return end - start - integral


@nb.njit(cache=True, parallel=True)
def _dynkin_batch(master, start, replicas, n, edges, intensities, sigma, lf, f, t, h):
    out = np.empty(replicas)
    for r in nb.prange(replicas):
        key = rng.derive(master, start + np.uint64(r))
        times, edge_of = _sample_events(key, intensities, t)
        out[r] = _dynkin_path(n, edges, times, edge_of, sigma, lf, f, t, h)
    return out


def dynkin_samples(field: RateField, sigma, f, t, replicas, seed, h=None, start=0) -> np.ndarray:
    """Per-replica values of the Dynkin martingale at time ``t``.

    ``h=None`` integrates exactly between events; otherwise ``h`` must divide
    ``t`` and a left-endpoint grid sum is used.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    sigma = as_configuration(sigma, field.n_sites)
    f = np.asarray(f, dtype=float)
    if h is None:
        h = 0.0
    else:
        steps = t / h
        if not h > 0 or abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"quadrature step {h} must divide t = {t}")
    edges, intensities, _ = log_edges(field, directed=False)
    return _dynkin_batch(
        rng.check_seed(seed), np.uint64(start), int(replicas), field.n_sites,
        np.ascontiguousarray(edges), np.ascontiguousarray(intensities, dtype=float),
        sigma, tilde_L(field, f), f, float(t), float(h),
    )


def dynkin_check(field: RateField, sigma, f, t, replicas, seed, h=None):
    """Sample mean and standard error of the Dynkin martingale at ``t``."""
    m = dynkin_samples(field, sigma, f, t, replicas, seed, h)
    stderr = float(m.std(ddof=1) / np.sqrt(m.size)) if m.size > 1 else float("nan")
    return float(m.mean()), stderr
