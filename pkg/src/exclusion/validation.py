"""Monte Carlo versus exact-law comparisons shared by the CLI and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .environment import RateField
from .exact_oracle import build_generator_sep, build_generator_stirring, evolve_distribution, state_of
from .sep_harris import simulate_sep
from .stirring import as_configuration, simulate_ssep


@dataclass(frozen=True)
class LawComparison:
    states: np.ndarray
    empirical: np.ndarray
    exact: np.ndarray
    replicas: int
    total_variation: float
    chi2: float
    dof: int
    pvalue: float


def pooled_chisquare(counts, expected, min_expected=5.0):
    """Chi-square test after pooling cells with expected count below ``min_expected``."""
    counts = np.asarray(counts, dtype=float)
    expected = np.asarray(expected, dtype=float)
    big = expected >= min_expected
    obs = list(counts[big])
    exp = list(expected[big])
    if np.any(~big):
        obs.append(counts[~big].sum())
        exp.append(expected[~big].sum())
    obs, exp = np.array(obs), np.array(exp)
    exp *= obs.sum() / exp.sum()
    if obs.size < 2:
        return 0.0, 0, 1.0
    chi2, p = stats.chisquare(obs, exp)
    return float(chi2), int(obs.size - 1), float(p)


def simulate(field: RateField, sigma, t, replicas, seed, process="ssep", t0=None, start=0,
             component_cap=10**4):
    if process == "ssep":
        return simulate_ssep(field, sigma, t, replicas, seed, start=start)
    if process == "sep":
        return simulate_sep(field, sigma, t, t0 if t0 is not None else t, replicas, seed, start=start,
                            component_cap=component_cap)
    raise ValueError(f"unknown process {process!r}")


def compare_law(field: RateField, sigma, t, replicas, seed, process="ssep", t0=None) -> LawComparison:
    """Empirical law of ``eta_t`` from graphical runs against ``sigma exp(t L)``.

    The comparison is restricted to the particle-number sector of ``sigma``,
    which both dynamics preserve.
    """
    sigma = as_configuration(sigma, field.n_sites)
    sector = int(sigma.sum())
    build = build_generator_stirring if process == "ssep" else build_generator_sep
    gen = build(field, sector=sector)
    p0 = np.zeros(gen.size)
    p0[gen.index_of(state_of(sigma))] = 1.0
    exact = np.clip(evolve_distribution(gen, p0, t), 0.0, None)
    exact /= exact.sum()
    configs = simulate(field, sigma, t, replicas, seed, process, t0)
    codes = configs.astype(np.int64) @ (1 << np.arange(field.n_sites, dtype=np.int64))
    idx = np.searchsorted(gen.states, codes)
    if np.any(gen.states[np.minimum(idx, gen.size - 1)] != codes):
        raise AssertionError("simulated configuration left the particle-number sector")
    counts = np.bincount(idx, minlength=gen.size)
    empirical = counts / replicas
    tv = 0.5 * float(np.abs(empirical - exact).sum())
    chi2, dof, p = pooled_chisquare(counts, exact * replicas)
    return LawComparison(gen.states, empirical, exact, int(replicas), tv, chi2, dof, p)
