"""Batch experiment runner.

Reads a TOML (or JSON) experiment description, fans replicates out over
worker processes, folds results into mergeable accumulators in a fixed
block order (so the output is byte-identical for any worker count),
writes a machine summary (JSON, schema_version 1), a human verdict
file, optional raw dumps, and exits 0 even when a statistical verdict
fails; only configuration or runtime errors produce nonzero exits.

Raw CSV columns:
  random-walk kinds      replicate, y_bar, t, Y
  height samples         replicate, x, t, sigma
  brownian-current       replicate, y, t, Y
  hammersley-tightness   n, replicate, Y, normalizer
  fbm-sample             one row per draw, one column per grid time
  hopf-lax-map           x, u, shock, minimizers
"""

from __future__ import annotations

import argparse
import json
import math
import pickle
import sys
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import hammersley as ham
from .kernel import JumpKernel
from .limits import CovKernel, sample_limit_process, transport_solution
from .profiles import Profile, packed_step, flat, gaussian_bump, linear, smoothstep
from .rng import TAG_BROWNIAN, TAG_LIMIT, TAG_WALKS, stream
from .stats import (
    EnsembleSummary,
    covariance_report,
    format_table,
    hydro_error,
    independence_test,
    scaling_exponent,
    transported_fluctuation_check,
)
from .walks import SimConfig, simulate_brownian_current, simulate_replicate

SCHEMA_VERSION = 1
BLOCK_SIZE = 32

KINDS = (
    "rw-covariance",
    "rw-scaling",
    "rw-independence",
    "rw-hydro",
    "brownian-current",
    "fbm-sample",
    "hammersley-tightness",
    "hopf-lax-map",
)


class ConfigError(ValueError):
    """Invalid experiment configuration; names the failing field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


# --- config parsing -------------------------------------------------------

def _require(cfg: dict, field: str, types, cond=None, msg: str = ""):
    if field not in cfg:
        raise ConfigError(field, "missing")
    val = cfg[field]
    if not isinstance(val, types):
        raise ConfigError(field, f"expected {types}, got {type(val).__name__}")
    if cond is not None and not cond(val):
        raise ConfigError(field, msg or "invalid value")
    return val


def parse_kernel(obj) -> JumpKernel:
    if not isinstance(obj, list) or not obj:
        raise ConfigError("kernel", "expected a nonempty list of {step, prob} pairs")
    pairs = []
    for item in obj:
        if isinstance(item, dict):
            if "step" not in item or "prob" not in item:
                raise ConfigError("kernel", f"pair {item} needs 'step' and 'prob'")
            pairs.append((item["step"], item["prob"]))
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            pairs.append((item[0], item[1]))
        else:
            raise ConfigError("kernel", f"cannot parse pair {item!r}")
    try:
        return JumpKernel.from_pairs(pairs)
    except ValueError as exc:
        raise ConfigError("kernel", str(exc)) from exc


def parse_profile(obj) -> Profile:
    if not isinstance(obj, dict) or "form" not in obj:
        raise ConfigError("profile", "expected a table with a 'form' entry")
    form = obj["form"]
    v0 = obj.get("v0", "match")
    if v0 == "match":
        v0_arg = None
    elif isinstance(v0, (int, float)):
        v0_arg = float(v0)
    elif isinstance(v0, dict) and "scaled" in v0:
        factor = float(v0["scaled"])
        v0_arg = ("scaled", factor)
    else:
        raise ConfigError("profile.v0", f"expected 'match', a number, or {{scaled = f}}, got {v0!r}")
    try:
        if form == "flat":
            prof = flat()
        elif form == "linear":
            prof = linear(float(obj.get("slope", 1.0)), v0=None)
        elif form == "smoothstep":
            prof = smoothstep(
                float(obj.get("y_lo", 0.0)), float(obj.get("y_hi", 1.0)),
                float(obj.get("height", 1.0)), v0=None,
            )
        elif form == "gaussian-bump":
            prof = gaussian_bump(
                float(obj.get("center", 0.0)), float(obj.get("width", 1.0)),
                float(obj.get("amplitude", 1.0)), float(obj.get("baseline", 0.0)), v0=None,
            )
        elif form == "packed":
            return packed_step()
        else:
            raise ConfigError("profile.form", f"unknown form {form!r}")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("profile", str(exc)) from exc
    if v0_arg is None:
        return prof
    if isinstance(v0_arg, tuple):
        factor = v0_arg[1]
        rho = prof.rho0
        return Profile(prof.u0, prof.rho0, lambda y: factor * np.asarray(rho(y)), prof.rho_max, prof.domain_sup, prof.name)
    return Profile(prof.u0, prof.rho0, lambda y: np.full_like(np.asarray(y, dtype=float), v0_arg), prof.rho_max, prof.domain_sup, prof.name)


def load_config(path: Path) -> dict:
    text = Path(path).read_bytes()
    if str(path).endswith(".json"):
        return json.loads(text)
    return tomllib.loads(text.decode())


# --- deterministic block runner -------------------------------------------

_RUNTIME = None


def _init_worker(config: dict):
    global _RUNTIME
    _RUNTIME = build_runtime(config)


def _run_block(bounds: tuple[int, int]):
    lo, hi = bounds
    return [_RUNTIME.replicate(i) for i in range(lo, hi)]


def run_indexed(config: dict, total: int, fold, state, workers: int, checkpoint: Path | None = None):
    """Run ``total`` replicates, folding payloads in index order.

    Replicate i's randomness depends only on (seed, i), and folding is
    sequential over fixed-size blocks, so the final state is independent
    of worker count and scheduling.  A checkpoint stores (next block,
    folded state) after every block; resuming skips completed blocks.
    """
    blocks = [(lo, min(lo + BLOCK_SIZE, total)) for lo in range(0, total, BLOCK_SIZE)]
    start_block = 0
    if checkpoint is not None and Path(checkpoint).exists():
        with open(checkpoint, "rb") as fh:
            start_block, state = pickle.load(fh)
    todo = blocks[start_block:]
    if not todo:
        return state

    def save(block_idx, st):
        if checkpoint is not None:
            tmp = Path(str(checkpoint) + ".tmp")
            with open(tmp, "wb") as fh:
                pickle.dump((block_idx, st), fh)
            tmp.replace(checkpoint)

    if workers <= 1:
        _init_worker(config)
        for bi, bounds in enumerate(todo, start=start_block):
            for payload in _run_block(bounds):
                state = fold(state, payload)
            save(bi + 1, state)
    else:
        ctx = get_context("fork")
        with ctx.Pool(workers, initializer=_init_worker, initargs=(config,)) as pool:
            for bi, payloads in enumerate(pool.imap(_run_block, todo), start=start_block):
                for payload in payloads:
                    state = fold(state, payload)
                save(bi + 1, state)
    return state


# --- runtimes: map replicate index -> payload ------------------------------

@dataclass
class _WalkRuntime:
    sim_configs: list[SimConfig]
    per_n: int
    seed: int

    def replicate(self, i: int):
        n_idx, r = divmod(i, self.per_n)
        cfg = self.sim_configs[n_idx]
        path = simulate_replicate(cfg, stream(self.seed, TAG_WALKS, cfg.n, r))
        return n_idx, path.currents, path.heights


@dataclass
class _BrownianRuntime:
    lam: float
    y: float
    grid: tuple[float, ...]
    halfwidth: float
    seed: int

    def replicate(self, i: int):
        path = simulate_brownian_current(
            self.lam, self.y, self.grid, self.halfwidth, stream(self.seed, TAG_BROWNIAN, i)
        )
        return 0, path.currents, None


@dataclass
class _HamRuntime:
    profile: Profile
    x: float
    t: float
    ns: list[int]
    per_n: int
    seed: int
    ic_law: str
    solution: ham.HopfLaxSolution

    def replicate(self, i: int):
        n_idx, r = divmod(i, self.per_n)
        n = self.ns[n_idx]
        y = ham.tightness_replicate(self.profile, self.x, self.t, n, self.seed, r, self.solution, self.ic_law)
        return n_idx, y


def build_runtime(config: dict):
    kind = config["kind"]
    seed = int(config["seed"])
    if kind in ("rw-covariance", "rw-scaling", "rw-independence", "rw-hydro"):
        kernel = parse_kernel(config["kernel"])
        profile = parse_profile(config["profile"])
        grid = tuple(float(t) for t in config["time_grid"])
        bases = tuple(float(y) for y in config.get("base_points", [0.0]))
        heights = tuple(float(x) for x in config.get("height_points", []))
        cfgs = [
            SimConfig(
                n=int(n), kernel=kernel, profile=profile, ic_law=config.get("ic_law", "poisson"),
                time_grid=grid, base_points=bases,
                window_radius=config.get("window_radius"), height_points=heights,
            )
            for n in config["n"]
        ]
        return _WalkRuntime(cfgs, int(config["replicates"]), seed)
    if kind == "brownian-current":
        grid = tuple(float(t) for t in config["time_grid"])
        halfwidth = float(config.get(
            "window_halfwidth", 8.0 * math.sqrt(grid[-1]) + 2.0
        ))
        return _BrownianRuntime(float(config["lam"]), float(config.get("y", 0.0)), grid, halfwidth, seed)
    if kind == "hammersley-tightness":
        profile = parse_profile(config.get("profile", {"form": "packed"}))
        x, t = float(config["x"]), float(config["t"])
        solution = ham.hopf_lax(profile, x, t)
        return _HamRuntime(
            profile, x, t, [int(n) for n in config["n"]], int(config["replicates"]),
            seed, config.get("ic_law", "packed"), solution,
        )
    raise ConfigError("kind", f"kind {kind!r} does not fan out replicates")


# --- experiment drivers ----------------------------------------------------

_REQUIRED_FIELDS = {
    "rw-covariance": ("kernel", "profile", "time_grid", "n"),
    "rw-scaling": ("kernel", "profile", "time_grid", "n"),
    "rw-independence": ("kernel", "profile", "time_grid", "n", "base_points"),
    "rw-hydro": ("kernel", "profile", "time_grid", "n", "base_points", "height_points"),
    "brownian-current": ("time_grid", "lam"),
    "fbm-sample": ("time_grid",),
    "hammersley-tightness": ("x", "t", "n"),
    "hopf-lax-map": ("profile", "t"),
}


def _validate_common(config: dict):
    kind = _require(config, "kind", str, lambda k: k in KINDS, f"must be one of {KINDS}")
    _require(config, "seed", int, lambda s: s >= 0, "must be a non-negative integer")
    if kind not in ("hopf-lax-map", "fbm-sample"):
        _require(config, "replicates", int, lambda r: r >= 1, "must be >= 1")
    for fname in _REQUIRED_FIELDS[kind]:
        if fname not in config:
            raise ConfigError(fname, "missing")
    return kind


def _checked_runtime(config: dict):
    """Build the runtime, converting validation failures to config errors."""
    try:
        return build_runtime(config)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("(derived)", str(exc)) from exc


def _walk_fold(state, payload):
    n_idx, currents, hts = payload
    state["summaries"][n_idx].acc.add(np.asarray(currents).reshape(-1))
    if hts is not None:
        state["heights"][n_idx].append(np.asarray(hts))
    return state


def _walk_summaries(config: dict, workers: int, checkpoint):
    """Shared fan-out for the random-walk kinds; returns per-n summaries."""
    runtime = _checked_runtime(config)
    ns = [c.n for c in runtime.sim_configs]
    state = {
        "summaries": [EnsembleSummary(c.n, c.base_points, c.time_grid) for c in runtime.sim_configs],
        "heights": [[] for _ in ns],
    }
    state = run_indexed(config, len(ns) * int(config["replicates"]), _walk_fold, state, workers, checkpoint)
    return runtime, state["summaries"], state["heights"]


def _verdict(name: str, passed: bool, details: str) -> dict:
    return {"criterion": name, "passed": bool(passed), "details": details}


def _window_report(runtime: _WalkRuntime) -> list[dict]:
    """Window geometry and truncation bias per n; flags oversized leakage."""
    out = []
    for cfg in runtime.sim_configs:
        bias = cfg.truncation_bias()
        out.append({
            "n": cfg.n, "radius": cfg.radius, "window": list(cfg.window),
            "truncation_bias": bias, "bias_annotated": bool(bias > 1e-6),
        })
    return out


def run_rw_covariance(config, workers, checkpoint, raw_sink):
    runtime, summaries, _ = _walk_summaries(config, workers, checkpoint)
    budget = int(config.get("allowed_exceedances", 1))
    z_limit = float(config.get("z_limit", 3.0))
    results, verdicts = [], []
    n_exceed = 0
    total_cells = 0
    all_rows = []
    for cfg, summary in zip(runtime.sim_configs, summaries):
        raw_sink.currents(summary)
        for b_idx, ybar in enumerate(cfg.base_points):
            rho = float(np.asarray(cfg.profile.rho0(ybar)))
            v = float(np.asarray(cfg.profile.v0(ybar)))
            kern = CovKernel.general(rho, v, cfg.kernel.second_moment)
            rows = covariance_report(summary, kern, b_idx)
            all_rows.extend(rows)
            total_cells += len(rows)
            n_exceed += sum(1 for r in rows if abs(r.z) > z_limit)
            results.append({
                "n": cfg.n, "base_point": ybar, "rho0": rho, "v0": v,
                "kappa2": cfg.kernel.second_moment,
                "cells": [r.__dict__ for r in rows],
            })
    raw_sink.cov_table(all_rows)
    verdicts.append(_verdict(
        "covariance-within-se",
        n_exceed <= budget,
        f"{n_exceed} of {total_cells} cells beyond {z_limit} SE (budget {budget})",
    ))
    return {"tables": results, "windows": _window_report(runtime), "table_text": format_table(all_rows)}, verdicts


def run_rw_scaling(config, workers, checkpoint, raw_sink):
    runtime, summaries, _ = _walk_summaries(config, workers, checkpoint)
    t_star = float(config.get("t_star", config["time_grid"][-1]))
    lo, hi = config.get("slope_band", [0.22, 0.28])
    ns, sds = [], []
    for cfg, summary in zip(runtime.sim_configs, summaries):
        raw_sink.currents(summary)
        ti = summary.time_grid.index(t_star)
        c = summary.cell(0, ti)
        ns.append(cfg.n)
        sds.append(float(np.sqrt(max(summary.acc.cov()[c, c], 0.0))))
    slope, stderr = scaling_exponent(ns, sds)
    verdicts = [_verdict(
        "scaling-exponent",
        lo <= slope <= hi,
        f"slope {slope:.4f} +- {stderr:.4f}, band [{lo}, {hi}]",
    )]
    return {"ns": ns, "sds": sds, "slope": slope, "stderr": stderr,
            "windows": _window_report(runtime)}, verdicts


def run_rw_independence(config, workers, checkpoint, raw_sink):
    runtime, summaries, _ = _walk_summaries(config, workers, checkpoint)
    z_limit = float(config.get("z_limit", 3.0))
    summary = summaries[0]
    raw_sink.currents(summary)
    report = independence_test(summary)
    verdicts = [_verdict(
        "cross-characteristic-independence",
        report.max_abs_z <= z_limit,
        f"max |corr| {report.max_abs_corr:.4f}, max |corr|/SE {report.max_abs_z:.2f} (limit {z_limit})",
    )]
    return {
        "pairs": [p.__dict__ for p in report.pairs],
        "max_abs_corr": report.max_abs_corr,
        "max_abs_z": report.max_abs_z,
        "windows": _window_report(runtime),
    }, verdicts


def run_rw_hydro(config, workers, checkpoint, raw_sink):
    runtime, summaries, heights = _walk_summaries(config, workers, checkpoint)
    x = float(config["height_points"][0])
    t = float(config.get("t_star", config["time_grid"][-1]))
    slope_max = float(config.get("slope_max", -0.4))
    ratio_tol = float(config.get("ratio_tol", 0.2))
    ns, errors = [], []
    for cfg, summary, hts in zip(runtime.sim_configs, summaries, heights):
        raw_sink.currents(summary)
        raw_sink.heights(cfg, hts)
        ti = summary.time_grid.index(t)
        u_val = transport_solution(cfg.profile, cfg.kernel.drift, x, t)
        errs = [abs(h[0, ti] / cfg.n - u_val) for h in hts]
        ns.append(cfg.n)
        errors.append(float(np.mean(errs)))
    slope, stderr = hydro_error(ns, errors)
    check = transported_fluctuation_check(summaries, t)
    ratio_ok = all(
        abs(r / e - 1.0) <= ratio_tol for r, e in zip(check.ratios, check.expected_ratios)
    )
    verdicts = [
        _verdict("hydro-error-decay", slope <= slope_max, f"slope {slope:.4f} +- {stderr:.4f} (need <= {slope_max})"),
        _verdict(
            "transported-residual-ratio",
            ratio_ok,
            f"ratios {[round(r, 4) for r in check.ratios]} vs expected {[round(e, 4) for e in check.expected_ratios]} (tol {ratio_tol:.0%})",
        ),
    ]
    return {
        "ns": ns, "mean_abs_errors": errors, "slope": slope, "stderr": stderr,
        "residual_sds": list(check.residual_sds), "ratios": list(check.ratios),
        "expected_ratios": list(check.expected_ratios),
        "windows": _window_report(runtime),
    }, verdicts


def _brownian_fold(summary, payload):
    _, currents, _ = payload
    summary.acc.add(np.asarray(currents).reshape(-1))
    return summary


def run_brownian(config, workers, checkpoint, raw_sink):
    runtime = _checked_runtime(config)
    grid = runtime.grid
    summary = EnsembleSummary(1, (runtime.y,), grid)
    summary = run_indexed(config, int(config["replicates"]), _brownian_fold, summary, workers, checkpoint)
    raw_sink.currents(summary)
    kern = CovKernel.brownian(runtime.lam)
    emp = summary.acc.cov()
    se = summary.acc.cov_jackknife_se()
    z_limit = float(config.get("z_limit", 3.0))
    cells, worst = [], 0.0
    for i in range(len(grid)):
        for j in range(i, len(grid)):
            theo = kern.cov(grid[i], grid[j])
            z = (emp[i, j] - theo) / se[i, j]
            worst = max(worst, abs(z))
            cells.append({
                "s": grid[i], "t": grid[j], "empirical": float(emp[i, j]),
                "theoretical": float(theo), "se": float(se[i, j]), "z": float(z),
            })
    verdicts = [_verdict(
        "brownian-current-covariance", worst <= z_limit,
        f"worst |z| {worst:.2f} over {len(cells)} cells (limit {z_limit})",
    )]
    return {"lam": runtime.lam, "cells": cells}, verdicts


def run_fbm_sample(config, workers, checkpoint, raw_sink):
    grid = tuple(float(t) for t in config["time_grid"])
    draws = int(config.get("draws", 100_000))
    variant = config.get("variant", {"equilibrium": {"rho": 1.0, "kappa2": 1.0}})
    try:
        if "equilibrium" in variant:
            kern = CovKernel.equilibrium(**variant["equilibrium"])
        elif "general" in variant:
            kern = CovKernel.general(**variant["general"])
        elif "deterministic_ic" in variant:
            kern = CovKernel.deterministic_ic(**variant["deterministic_ic"])
        elif "brownian" in variant:
            kern = CovKernel.brownian(**variant["brownian"])
        else:
            raise ConfigError("variant", f"unknown covariance variant {variant!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("variant", str(exc)) from exc
    samples = sample_limit_process(kern, grid, stream(int(config["seed"]), TAG_LIMIT), size=draws)
    raw_sink.matrix("samples", samples, header=[f"t={t}" for t in grid])
    raw_sink.kernel_table(kern, grid)
    emp = np.cov(samples, rowvar=False, bias=True) if draws > 1 else np.zeros((len(grid), len(grid)))
    emp = np.atleast_2d(emp)
    theo = kern.gram(grid)
    tol = float(config.get("entry_tol", 0.02))
    scale = max(float(np.max(np.abs(theo))), 1e-300)
    worst = float(np.max(np.abs(emp - theo)) / scale)
    verdicts = [_verdict(
        "fbm-empirical-covariance", worst <= tol,
        f"worst entry error {worst:.2%} of max |K| (tol {tol:.0%})",
    )]
    results = {
        "grid": list(grid), "draws": draws,
        "empirical": emp.tolist(), "theoretical": theo.tolist(),
        "first_draw": samples[0].tolist(),
    }
    if 1.0 in grid and 4.0 in grid and kern.cov(1.0, 1.0) > 0:
        i1, i4 = grid.index(1.0), grid.index(4.0)
        ratio = float(emp[i4, i4] / emp[i1, i1])
        ratio_tol = float(config.get("ratio_tol", 0.03))
        verdicts.append(_verdict(
            "fbm-self-similarity", abs(ratio / 2.0 - 1.0) <= ratio_tol,
            f"Var Z(4)/Var Z(1) = {ratio:.4f}, target 2 (tol {ratio_tol:.0%})",
        ))
        results["var_ratio_4_1"] = ratio
    return results, verdicts


def _ham_fold(values, payload):
    n_idx, y = payload
    values[n_idx].append(float(y))
    return values


def run_hammersley(config, workers, checkpoint, raw_sink):
    runtime = _checked_runtime(config)
    per_n = runtime.per_n
    values: list[list[float]] = [[] for _ in runtime.ns]
    values = run_indexed(config, len(runtime.ns) * per_n, _ham_fold, values, workers, checkpoint)
    result = ham.TightnessResult(
        tuple(runtime.ns), runtime.x, runtime.t,
        tuple(np.array(v) for v in values),
        tuple(n ** (1.0 / 3.0) * math.log(n) for n in runtime.ns),
    )
    raw_sink.hammersley(result)
    sd_ratio_factor = float(config.get("sd_ratio_factor", 1.5))
    sds = result.sd_over_cube_root()
    sd_ok = max(sds) / min(sds) <= sd_ratio_factor
    q = float(config.get("quantile", 0.99))
    p99 = result.normalized_quantile(q)
    boot_rng = stream(int(config["seed"]), 99)
    ses = [
        ham.bootstrap_percentile_se(np.abs(v) / norm, q, boot_rng)
        for v, norm in zip(result.values, result.normalizers)
    ]
    mono_ok = all(
        p99[i + 1] <= p99[i] + 2.0 * math.hypot(ses[i], ses[i + 1])
        for i in range(len(p99) - 1)
    )
    verdicts = [
        _verdict("tightness-sd-scale", sd_ok,
                 f"SD/n^(1/3) = {[round(s, 4) for s in sds]}, max/min {max(sds)/min(sds):.3f} (limit {sd_ratio_factor})"),
        _verdict("tightness-quantile-monotone", mono_ok,
                 f"q{q:g} of |Y|/(n^(1/3) log n) = {[round(p, 4) for p in p99]} with boot SEs {[round(s, 4) for s in ses]}"),
    ]
    return {
        "ns": list(runtime.ns), "sd_over_cube_root": list(sds),
        "normalized_quantiles": list(p99), "bootstrap_ses": list(ses),
        "means": [float(np.mean(v)) for v in result.values],
    }, verdicts


def run_hopf_lax_map(config, workers, checkpoint, raw_sink):
    profile = parse_profile(config["profile"])
    t = float(config["t"])
    x_lo, x_hi = (float(v) for v in config.get("x_range", [0.0, 1.0]))
    count = int(config.get("x_count", 101))
    rows = []
    for x in np.linspace(x_lo, x_hi, count):
        sol = ham.hopf_lax(profile, float(x), t)
        rows.append({
            "x": float(x), "u": sol.u, "shock": sol.shock,
            "minimizers": list(sol.minimizers),
        })
    raw_sink.hopf_lax(rows)
    n_shock = sum(1 for r in rows if r["shock"])
    return {"t": t, "rows": rows}, [
        _verdict("hopf-lax-map", True, f"{count} points solved, {n_shock} shocks")
    ]


RUNNERS = {
    "rw-covariance": run_rw_covariance,
    "rw-scaling": run_rw_scaling,
    "rw-independence": run_rw_independence,
    "rw-hydro": run_rw_hydro,
    "brownian-current": run_brownian,
    "fbm-sample": run_fbm_sample,
    "hammersley-tightness": run_hammersley,
    "hopf-lax-map": run_hopf_lax_map,
}


# --- raw output ------------------------------------------------------------

class RawSink:
    """Optional raw dumps; CSV by default, binary columnar as .npz."""

    def __init__(self, out_dir: Path | None, fmt: str = "csv"):
        self.out_dir = out_dir
        self.fmt = fmt

    def _write_rows(self, name: str, header: list[str], rows):
        if self.out_dir is None:
            return
        if self.fmt == "npz":
            cols = list(zip(*rows)) if rows else [[] for _ in header]
            np.savez_compressed(
                self.out_dir / f"{name}.npz",
                **{h: np.asarray(c) for h, c in zip(header, cols)},
            )
        else:
            with open(self.out_dir / f"{name}.csv", "w") as fh:
                fh.write(",".join(header) + "\n")
                for row in rows:
                    fh.write(",".join(str(v) for v in row) + "\n")

    def currents(self, summary: EnsembleSummary):
        if self.out_dir is None:
            return
        rows = []
        raw = summary.acc.raw
        for r in range(raw.shape[0]):
            for a, ybar in enumerate(summary.base_points):
                for i, t in enumerate(summary.time_grid):
                    rows.append((r, ybar, t, int(raw[r, summary.cell(a, i)])))
        self._write_rows(f"raw_currents_n{summary.n}", ["replicate", "y_bar", "t", "Y"], rows)

    def heights(self, cfg: SimConfig, hts):
        if self.out_dir is None or not hts:
            return
        rows = []
        for r, h in enumerate(hts):
            for j, x in enumerate(cfg.height_points):
                for i, t in enumerate(cfg.time_grid):
                    rows.append((r, x, t, int(h[j, i])))
        self._write_rows(f"raw_heights_n{cfg.n}", ["replicate", "x", "t", "sigma"], rows)

    def hammersley(self, result):
        if self.out_dir is None:
            return
        rows = []
        for n, vals, norm in zip(result.ns, result.values, result.normalizers):
            for r, y in enumerate(vals):
                rows.append((n, r, float(y), norm))
        self._write_rows("raw_tightness", ["n", "replicate", "Y", "normalizer"], rows)

    def matrix(self, name: str, arr: np.ndarray, header: list[str]):
        if self.out_dir is None:
            return
        self._write_rows(name, header, [tuple(row) for row in np.atleast_2d(arr)])

    def cov_table(self, rows):
        if self.out_dir is None:
            return
        self._write_rows(
            "covariance_table", ["y_bar", "s", "t", "empirical", "theoretical", "se", "z"],
            [(r.base_point, r.s, r.t, r.empirical, r.theoretical, r.se, r.z) for r in rows],
        )

    def kernel_table(self, kern, grid):
        if self.out_dir is None:
            return
        rows = [(s, t, kern.cov(s, t)) for s in grid for t in grid]
        self._write_rows("kernel_table", ["s", "t", "K"], rows)

    def hopf_lax(self, rows):
        if self.out_dir is None:
            return
        self._write_rows(
            "hopf_lax_map", ["x", "u", "shock", "minimizers"],
            [(r["x"], r["u"], int(r["shock"]), ";".join(f"{m:.12g}" for m in r["minimizers"])) for r in rows],
        )


# --- entry point -----------------------------------------------------------

def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    return obj


def run(config: dict, workers: int = 1, out_dir: Path | None = None, raw: bool = False, raw_format: str = "csv", checkpoint: Path | None = None) -> dict:
    """Execute one experiment; returns the summary dict (also written to disk)."""
    kind = _validate_common(config)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    sink = RawSink(out_dir if raw else None, raw_format)
    results, verdicts = RUNNERS[kind](config, workers, checkpoint, sink)
    table_text = results.pop("table_text", None)
    if out_dir is not None and table_text is not None:
        (out_dir / "covariance_table.txt").write_text(table_text + "\n")
    summary = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": _to_jsonable(config),
        "results": _to_jsonable(results),
        "verdicts": verdicts,
        "all_passed": all(v["passed"] for v in verdicts),
    }
    if out_dir is not None:
        (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
        lines = [
            f"{'PASS' if v['passed'] else 'FAIL'}  {v['criterion']}: {v['details']}"
            for v in verdicts
        ]
        (out_dir / "verdict.txt").write_text("\n".join(lines) + "\n")
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="charcurrent",
        description="Run a current-fluctuation experiment described by a TOML/JSON config.",
        epilog=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("config", type=Path, help="experiment config (.toml or .json)")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--replicates", type=int, default=None, help="override replicate count")
    parser.add_argument("--workers", type=int, default=1, help="worker processes (results identical for any count)")
    parser.add_argument("--out", type=Path, default=None, help="output directory (default: alongside config)")
    parser.add_argument("--raw", action="store_true", help="also dump raw per-replicate data")
    parser.add_argument("--raw-format", choices=["csv", "npz"], default="csv")
    parser.add_argument("--checkpoint", type=Path, default=None, help="block checkpoint file for resumable runs")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load config: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        config["seed"] = args.seed
    if args.replicates is not None:
        config["replicates"] = args.replicates
    out_dir = args.out if args.out is not None else args.config.parent / "out"

    try:
        summary = run(
            config, workers=args.workers, out_dir=out_dir,
            raw=args.raw, raw_format=args.raw_format, checkpoint=args.checkpoint,
        )
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for v in summary["verdicts"]:
        print(f"{'PASS' if v['passed'] else 'FAIL'}  {v['criterion']}: {v['details']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
