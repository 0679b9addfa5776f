"""Batch front end.

Usage::

    exclusion --config run.ini [--seed N] [--out DIR] [--threads N]

The config is an INI file.  ``[run]`` selects the command and shared
parameters, ``[environment]`` describes the rate field, ``[initial]`` the
starting configuration and ``[function]`` a site function ``f`` as
``site:value`` pairs.  Exit status: 0 success, 1 a check failed, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import platform
import re
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numba
import numpy as np
import scipy

from . import __version__
from .environment import (
    EnvironmentSpec,
    RateField,
    build_env,
    central_sites,
    check_c1,
    check_liggett,
    exp_kernel,
    format_float,
    read_rate_field,
    symmetrize,
    write_rate_field,
)
from .errors import CapacityError, ComponentBlowup, ConfigurationError, ExplosionError
from .exact_oracle import (
    apply_generator,
    build_generator_sep,
    build_generator_stirring,
    occupations,
)
from .duality import check_duality_identity, dynkin_check, self_duality_mc
from .percolation import scan_t0
from .rng import UINT64_MAX
from .validation import compare_law, simulate

COMMANDS = ("env", "simulate", "oracle-compare", "duality", "percolation-scan", "generator-check")
EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int
    env: Optional[EnvironmentSpec]
    env_file: Optional[str]
    kernel_amplitude: float
    keep_sites: Optional[int]
    process: str = "ssep"
    horizon: float = 1.0
    t0: Optional[float] = None
    grid: list = dc_field(default_factory=list)
    replicas: int = 1000
    out: str = "out"
    sigma: str = "step"
    function: dict = dc_field(default_factory=dict)
    tolerances: dict = dc_field(default_factory=dict)
    size_threshold: Optional[int] = None
    component_cap: int = 10**4
    quadrature_step: Optional[float] = None
    raw: dict = dc_field(default_factory=dict)


class _Locator:
    """Maps ``(section, key)`` to the config line that defines it."""

    def __init__(self, path, text):
        self.path = path
        self.lines = {}
        section = None
        for num, line in enumerate(text.splitlines(), start=1):
            m = re.match(r"\s*\[([^\]]+)\]", line)
            if m:
                section = m.group(1).strip()
                continue
            m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
            if m and section:
                self.lines[(section, m.group(1).strip().lower())] = num

    def error(self, section, key, message):
        line = self.lines.get((section, key))
        where = f"{self.path}:{line}" if line else f"{self.path}: [{section}] {key}"
        return UsageError(f"{where}: {message}")


def _get(cp, loc, section, key, conv, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise UsageError(f"{loc.path}: missing required key [{section}] {key}")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise loc.error(section, key, f"cannot parse {raw!r}: {exc}") from exc


def _float_list(raw):
    return [float(v) for v in raw.replace(",", " ").split()]


def _function(raw):
    out = {}
    for item in raw.replace(";", ",").split(","):
        if item.strip():
            site, value = item.split(":")
            out[int(site)] = float(value)
    return out


def _uint64(raw):
    value = int(raw, 0)
    if not 0 <= value <= UINT64_MAX:
        raise ValueError("seed must lie in [0, 2**64)")
    return value


def load_config(path, seed_override=None, out_override=None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"{path}: cannot read config: {exc}") from exc
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from exc
    loc = _Locator(path, text)
    if not cp.has_section("run"):
        raise UsageError(f"{path}: missing [run] section")
    command = _get(cp, loc, "run", "command", str, required=True).strip()
    if command not in COMMANDS:
        raise loc.error("run", "command", f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    seed = seed_override if seed_override is not None else _get(cp, loc, "run", "seed", _uint64)
    if seed is None:
        raise UsageError(f"{path}: a seed is mandatory ([run] seed or --seed)")

    env = env_file = None
    keep = amplitude = None
    if cp.has_section("environment"):
        env_file = _get(cp, loc, "environment", "file", str)
        keep = _get(cp, loc, "environment", "keep_sites", int)
        amplitude = _get(cp, loc, "environment", "kernel_amplitude", float, 1.0)
        if env_file is None:
            spec_keys = {
                "kind": str, "dim": int, "radius": int, "box_side": float, "rate": float,
                "distribution": str, "alpha": float, "scale": float, "low": float, "high": float,
                "mean": float, "intensity": float, "mark_bound": float,
            }
            kwargs = {}
            for key, conv in spec_keys.items():
                value = _get(cp, loc, "environment", key, conv)
                if value is not None:
                    kwargs[key] = value.strip() if isinstance(value, str) else value
            if "kind" not in kwargs:
                raise UsageError(f"{path}: [environment] needs kind or file")
            env_seed = _get(cp, loc, "environment", "seed", _uint64, seed)
            try:
                env = EnvironmentSpec(seed=env_seed, **kwargs)
            except ConfigurationError as exc:
                raise loc.error("environment", "kind", str(exc)) from exc
    else:
        raise UsageError(f"{path}: missing [environment] section")

    cfg = RunConfig(
        command=command, seed=seed, env=env, env_file=env_file,
        kernel_amplitude=amplitude if amplitude is not None else 1.0, keep_sites=keep,
    )
    cfg.process = _get(cp, loc, "run", "process", str, "ssep").strip()
    if cfg.process not in ("ssep", "sep"):
        raise loc.error("run", "process", f"process must be ssep or sep, got {cfg.process!r}")
    cfg.horizon = _get(cp, loc, "run", "horizon", float, 1.0)
    if not cfg.horizon >= 0:
        raise loc.error("run", "horizon", "horizon must be ≥ 0")
    cfg.t0 = _get(cp, loc, "run", "t0", float)
    if cfg.t0 is not None and not cfg.t0 > 0:
        raise loc.error("run", "t0", "t0 must be > 0")
    cfg.grid = _get(cp, loc, "run", "grid", _float_list, [])
    if any(b < a for a, b in zip(cfg.grid, cfg.grid[1:])):
        raise loc.error("run", "grid", "grid must be sorted")
    cfg.replicas = _get(cp, loc, "run", "replicas", int, 1000)
    if cfg.replicas < 1 and command != "env" and command != "generator-check":
        raise loc.error("run", "replicas", "replicas must be ≥ 1")
    cfg.out = out_override or _get(cp, loc, "run", "output", str, "out")
    cfg.size_threshold = _get(cp, loc, "run", "size_threshold", int)
    cfg.component_cap = _get(cp, loc, "run", "component_cap", int, 10**4)
    cfg.quadrature_step = _get(cp, loc, "run", "quadrature_step", float)
    cfg.tolerances = {
        "z_max": _get(cp, loc, "tolerances", "z_max", float, 4.0),
        "tv_max": _get(cp, loc, "tolerances", "tv_max", float, 0.01),
        "p_min": _get(cp, loc, "tolerances", "p_min", float, 1e-3),
        "identity_rel": _get(cp, loc, "tolerances", "identity_rel", float, 1e-12),
        "exceed_target": _get(cp, loc, "tolerances", "exceed_target", float, 1e-3),
    }
    if cp.has_section("initial"):
        cfg.sigma = _get(cp, loc, "initial", "sigma", str, "step").strip()
    if cp.has_section("function"):
        cfg.function = _get(cp, loc, "function", "f", _function, {})
    cfg.raw = {s: dict(cp.items(s)) for s in cp.sections()}
    cfg.raw.setdefault("run", {})["seed"] = str(seed)
    return cfg


def make_field(cfg: RunConfig) -> RateField:
    if cfg.env_file is not None:
        field = read_rate_field(cfg.env_file)
    else:
        field = build_env(cfg.env, exp_kernel(cfg.kernel_amplitude))
    if cfg.keep_sites is not None:
        field = field.restrict(central_sites(field, cfg.keep_sites))
    return field


def make_sigma(spec: str, n: int) -> np.ndarray:
    named = {
        "step": lambda: (np.arange(n) < n // 2),
        "alternating": lambda: (np.arange(n) % 2 == 0),
        "full": lambda: np.ones(n, bool),
        "empty": lambda: np.zeros(n, bool),
    }
    if spec in named:
        return named[spec]().astype(np.int8)
    values = [int(v) for v in spec.replace(",", " ").split()]
    if len(values) != n or any(v not in (0, 1) for v in values):
        raise UsageError(f"initial sigma must be one of {sorted(named)} or {n} zeros/ones")
    return np.array(values, dtype=np.int8)


def make_function(cfg: RunConfig, n: int) -> np.ndarray:
    f = np.zeros(n)
    for site, value in cfg.function.items():
        if not 0 <= site < n:
            raise UsageError(f"[function] site {site} outside the window of {n} sites")
        f[site] = value
    return f


class _Report:
    def __init__(self, out_dir: Path, cfg: RunConfig):
        self.out_dir = out_dir
        self.cfg = cfg
        self.files = []

    def csv(self, name, header, rows):
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)
        return path


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _seed_cols(cfg, count, start=0):
    return [cfg.seed, start, count]


SEED_HEADER = ["master_seed", "replica_start", "replica_count"]


def _cmd_env(cfg, field, report):
    write_rate_field(field, report.out_dir / "rate_field.txt")
    report.files.append("rate_field.txt")
    c1 = check_c1(field)
    sym = symmetrize(field)
    rows = [[i, c1.totals[i], sym.totals[i]] + _seed_cols(cfg, 0) for i in range(field.n_sites)]
    report.csv("sites.csv", ["site", "c_x", "c_s_x"] + SEED_HEADER, rows)
    summary = {
        "n_sites": field.n_sites,
        "symmetric": bool(field.symmetric),
        "max_c_x": float(c1.totals.max()),
        "liggett_sup": check_liggett(field),
    }
    return EXIT_OK, summary


def _cmd_simulate(cfg, field, report):
    sigma = make_sigma(cfg.sigma, field.n_sites)
    grid = cfg.grid or [cfg.horizon]
    rows = []
    for t in grid:
        configs = simulate(field, sigma, t, cfg.replicas, cfg.seed, cfg.process, cfg.t0,
                           component_cap=cfg.component_cap)
        mean = configs.mean(axis=0)
        stderr = configs.std(axis=0, ddof=1) / math.sqrt(cfg.replicas) if cfg.replicas > 1 else np.full(
            field.n_sites, np.nan
        )
        for x in range(field.n_sites):
            rows.append([t, x, mean[x], stderr[x]] + _seed_cols(cfg, cfg.replicas))
    report.csv("occupation.csv", ["time", "site", "mean", "stderr"] + SEED_HEADER, rows)
    return EXIT_OK, {"times": grid, "process": cfg.process}


def _cmd_oracle_compare(cfg, field, report):
    sigma = make_sigma(cfg.sigma, field.n_sites)
    cmp = compare_law(field, sigma, cfg.horizon, cfg.replicas, cfg.seed, cfg.process, cfg.t0)
    rows = [
        [int(s), cmp.empirical[i], cmp.exact[i]] + _seed_cols(cfg, cfg.replicas)
        for i, s in enumerate(cmp.states)
    ]
    report.csv("law.csv", ["state", "empirical", "exact"] + SEED_HEADER, rows)
    ok = cmp.total_variation < cfg.tolerances["tv_max"] and cmp.pvalue > cfg.tolerances["p_min"]
    summary = {"total_variation": cmp.total_variation, "chi2": cmp.chi2, "dof": cmp.dof, "pvalue": cmp.pvalue}
    return (EXIT_OK if ok else EXIT_CHECK), summary


def _cmd_duality(cfg, field, report):
    sigma = make_sigma(cfg.sigma, field.n_sites)
    f = make_function(cfg, field.n_sites)
    ok = True
    summary = {}
    if field.n_sites <= 20:
        lhs, rhs = check_duality_identity(field, f, sigma)
        err = abs(lhs - rhs)
        ok &= err <= cfg.tolerances["identity_rel"] * max(1.0, abs(lhs))
        report.csv("identity.csv", ["lhs", "rhs", "abs_err"] + SEED_HEADER, [[lhs, rhs, err] + _seed_cols(cfg, 0)])
        summary["identity_abs_err"] = err
    res = self_duality_mc(field, sigma, cfg.horizon, cfg.replicas, cfg.seed)
    z = res.zscore
    rows = [
        [x, res.estimate[x], res.stderr[x], res.oracle[x], z[x]] + _seed_cols(cfg, cfg.replicas)
        for x in range(field.n_sites)
    ]
    report.csv("self_duality.csv", ["site", "estimate", "stderr", "oracle", "z_score"] + SEED_HEADER, rows)
    max_z = float(np.max(np.abs(z)))
    ok &= max_z < cfg.tolerances["z_max"]
    mean, stderr = dynkin_check(field, sigma, f, cfg.horizon, cfg.replicas, cfg.seed, cfg.quadrature_step)
    dz = abs(mean) / stderr if stderr > 0 else (0.0 if mean == 0 else math.inf)
    report.csv("dynkin.csv", ["estimate", "stderr", "oracle", "z_score"] + SEED_HEADER,
               [[mean, stderr, 0.0, dz] + _seed_cols(cfg, cfg.replicas)])
    summary.update({"max_abs_z": max_z, "dynkin_z": dz})
    return (EXIT_OK if ok else EXIT_CHECK), summary


def _cmd_percolation(cfg, field, report):
    grid = cfg.grid or [cfg.t0 or 1.0]
    sym = field if field.symmetric else symmetrize(field)
    res = scan_t0(sym, grid, cfg.size_threshold, cfg.replicas, cfg.seed, cfg.tolerances["exceed_target"])
    path = report.out_dir / "scan.csv"
    rows = [[r.t0, r.replicas, r.mean_cluster, r.p_exceed, r.stderr] + _seed_cols(cfg, r.replicas) for r in res.rows]
    report.csv(path.name, ["t0", "replicas", "mean_cluster", "p_exceed", "stderr"] + SEED_HEADER, rows)
    summary = {"recommended_t0": res.recommended, "size_threshold": res.size_threshold}
    if res.recommended is None:
        summary["report"] = "NoSubcriticalT0"
        return EXIT_CHECK, summary
    return EXIT_OK, summary


def _cmd_generator_check(cfg, field, report):
    sep = build_generator_sep(field)
    ok = True
    summary = {"states": sep.size}
    rows = []
    row_sums = np.abs(sep.dense().sum(axis=1)).max() if sep.is_dense else float(
        np.abs(np.asarray(sep.matrix.sum(axis=1))).max()
    )
    ok &= row_sums <= 1e-12
    rows.append(["sep_row_sums", row_sums, 0.0, row_sums] + _seed_cols(cfg, 0))
    if field.symmetric:
        stir = build_generator_stirring(field)
        diff = float(np.abs(sep.dense() - stir.dense()).max())
        ok &= diff == 0.0
        rows.append(["sep_vs_stirring", diff, 0.0, diff] + _seed_cols(cfg, 0))
    # direct evaluation of the exclusion sum on one configuration per state
    occ = occupations(sep.states, field.n_sites)
    values = np.random.default_rng(cfg.seed).normal(size=sep.size)
    worst = 0.0
    src, dst, rate = field.triples()
    for i in range(min(sep.size, 256)):
        direct = 0.0
        eta = occ[i]
        for x, y, c in zip(src, dst, rate):
            if eta[x] == 1 and eta[y] == 0:
                direct += c * (values[sep.index_of(int(sep.states[i]) ^ (1 << int(x)) ^ (1 << int(y)))] - values[i])
        worst = max(worst, abs(apply_generator(sep, values, int(sep.states[i])) - direct))
    ok &= worst <= 1e-12 * max(1.0, float(np.abs(values).max()) * float(rate.sum() if rate.size else 1.0))
    rows.append(["apply_vs_sum", worst, 0.0, worst] + _seed_cols(cfg, 0))
    report.csv("generator.csv", ["check", "lhs", "rhs", "abs_err"] + SEED_HEADER, rows)
    summary["ok"] = bool(ok)
    return (EXIT_OK if ok else EXIT_CHECK), summary


_DISPATCH = {
    "env": _cmd_env,
    "simulate": _cmd_simulate,
    "oracle-compare": _cmd_oracle_compare,
    "duality": _cmd_duality,
    "percolation-scan": _cmd_percolation,
    "generator-check": _cmd_generator_check,
}


def run(cfg: RunConfig) -> int:
    """Execute one configured pipeline; returns the exit status."""
    started = time.time()
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = _Report(out_dir, cfg)
    try:
        field = make_field(cfg)
        status, summary = _DISPATCH[cfg.command](cfg, field, report)
    except (ComponentBlowup, ExplosionError) as exc:
        status, summary = EXIT_CHECK, {"error": type(exc).__name__, "message": str(exc)}
    manifest = {
        "command": cfg.command,
        "config": cfg.raw,
        "seed": {"master": str(cfg.seed), "replicas": cfg.replicas, "derivation": "derive(master, replica)"},
        "versions": {
            "exclusion": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
        "outputs": report.files,
        "status": status,
        "summary": _jsonable(summary),
        "wall_time_s": time.time() - started,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="exclusion", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="INI run configuration")
    parser.add_argument("--seed", help="master seed (unsigned 64-bit), overrides the config")
    parser.add_argument("--out", help="output directory, overrides the config")
    parser.add_argument("--threads", type=int, help="worker threads for replica loops")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        seed = None
        if args.seed is not None:
            try:
                seed = _uint64(args.seed)
            except ValueError as exc:
                raise UsageError(f"--seed: {exc}") from exc
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be ≥ 1")
            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        cfg = load_config(args.config, seed, args.out)
        return run(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, CapacityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
