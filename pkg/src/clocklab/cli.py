"""Experiment runner: `clocklab run <config>`.

The config file is TOML (JSON with a ``.json`` extension is accepted) with
top-level keys ``experiment``, ``seed``, ``threads``, ``out``, ``format``
and a ``[grid]`` table. Each grid value is a scalar or a list; lists
expand to a cartesian product in declared key order and every point
becomes one output record. Command-line flags override config fields.

Experiments
-----------
simulate            loop ensemble -> stationary report + bound margins
verify-gaussian     loop ensemble vs the exact Gaussian-model predictions
bounds              exact Gaussian-model values vs the two stationary bounds
optimize            closed-form optimal interrogation time + balance check
allan               simplified stability statistic vs its prediction
estimation-bounds   single-shot bound family and its ordering
qfi                 quantum Fisher information of named reference families

Records are emitted as CSV (header row, stable column order, shortest
round-trip decimal floats) or JSON (``schema_version`` field, one object
per record). Booleans render as true/false, not-applicable fields as
``na`` (CSV) or null (JSON). Output is byte-identical for identical
(config, seed), independent of the thread count.

Exit status: 0 when every per-record check passed, 1 when any check
failed or a module raised, 2 for config/usage errors.
"""

import argparse
import itertools
import json
import math
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analytic, clockloop, estimation, noise, quantum

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "simulate",
    "verify-gaussian",
    "bounds",
    "optimize",
    "allan",
    "estimation-bounds",
    "qfi",
)


class ConfigError(ValueError):
    """Configuration problem, reported with its field path."""


# ---------------------------------------------------------------------------
# config parsing

_PARAMS = {
    "T": ("float", lambda v: v > 0, "must be > 0"),
    "zeta": ("float", lambda v: abs(v) < 1, "|zeta| < 1 required"),
    "fisher_info": ("float", lambda v: v > 0, "must be > 0"),
    "readout_variance": ("float", lambda v: v >= 0, "must be >= 0"),
    "noise": (
        "str",
        lambda v: v in ("none", "brownian", "power_law"),
        "must be one of none, brownian, power_law",
    ),
    "diffusion": ("float", lambda v: v >= 0, "must be >= 0"),
    "amplitude": ("float", lambda v: v >= 0, "must be >= 0"),
    "exponent": ("float", lambda v: v >= 0, "must be >= 0 to be sampleable"),
    "n_cycles": ("int", lambda v: v >= 1, "must be >= 1"),
    "n_trajectories": ("int", lambda v: v >= 1, "must be >= 1"),
    "burn_in": ("int", lambda v: v >= 0, "must be >= 0"),
    "max_lag": ("int", lambda v: v >= 1, "must be >= 1"),
    "y0": ("float", lambda v: np.isfinite(v), "must be finite"),
    "prior_variance": ("float", lambda v: v > 0, "must be > 0"),
    "alpha": ("float", lambda v: v > -1, "must be > -1"),
    "beta": ("float", lambda v: v > 0, "must be > 0"),
    "fisher_coefficient": ("float", lambda v: v > 0, "must be > 0"),
    "allan_amplitude": ("float", lambda v: v > 0, "must be > 0"),
    "family": (
        "str",
        lambda v: v in ("ghz", "plus", "ramsey"),
        "must be one of ghz, plus, ramsey",
    ),
    "n_spins": ("int", lambda v: 1 <= v <= 12, "must be between 1 and 12"),
    "interrogation_time": ("float", lambda v: v > 0, "must be > 0"),
    "omega0": ("float", lambda v: v > 0, "must be > 0"),
}

_SIM_KEYS = frozenset(
    {
        "T",
        "zeta",
        "fisher_info",
        "readout_variance",
        "noise",
        "diffusion",
        "amplitude",
        "exponent",
        "n_cycles",
        "n_trajectories",
        "burn_in",
        "max_lag",
        "y0",
    }
)

# experiment -> (allowed grid keys, required grid keys)
_EXPERIMENT_KEYS = {
    "simulate": (_SIM_KEYS, frozenset({"zeta", "fisher_info"})),
    "verify-gaussian": (
        frozenset(
            {
                "T",
                "zeta",
                "fisher_info",
                "diffusion",
                "n_cycles",
                "n_trajectories",
                "burn_in",
                "max_lag",
            }
        ),
        frozenset({"zeta", "fisher_info", "diffusion"}),
    ),
    "bounds": (
        frozenset({"T", "zeta", "fisher_info", "diffusion"}),
        frozenset({"zeta", "fisher_info", "diffusion"}),
    ),
    "optimize": (
        frozenset({"alpha", "beta", "zeta", "fisher_coefficient", "allan_amplitude"}),
        frozenset({"alpha", "zeta", "fisher_coefficient", "allan_amplitude"}),
    ),
    "allan": (
        _SIM_KEYS - {"max_lag", "y0"},
        frozenset({"zeta", "fisher_info"}),
    ),
    "estimation-bounds": (
        frozenset({"zeta", "fisher_info", "prior_variance"}),
        frozenset({"zeta", "fisher_info"}),
    ),
    "qfi": (
        frozenset({"family", "n_spins", "interrogation_time", "omega0"}),
        frozenset({"family"}),
    ),
}

_DEFAULTS = {
    "T": 1.0,
    "readout_variance": 0.0,
    "y0": 0.0,
    "n_cycles": 20_000,
    "n_trajectories": 64,
    "max_lag": 50,
    "prior_variance": 1.0,
    "n_spins": 1,
}

_TOP_KEYS = frozenset({"experiment", "seed", "threads", "out", "format", "grid"})


def _load_raw(path):
    try:
        with open(path, "rb") as fh:
            if path.endswith(".json"):
                return json.load(fh)
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _check_scalar(key, value):
    kind, accept, message = _PARAMS[key]
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"grid.{key}: expected a string, got {value!r}")
    elif kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"grid.{key}: expected an integer, got {value!r}")
    else:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"grid.{key}: expected a number, got {value!r}")
        value = float(value)
    if not accept(value):
        raise ConfigError(f"grid.{key}: {message} (got {value!r})")
    return value


def _expand_grid(experiment, grid):
    allowed, required = _EXPERIMENT_KEYS[experiment]
    for key in grid:
        if key not in _PARAMS:
            raise ConfigError(f"grid.{key}: unknown parameter")
        if key not in allowed:
            raise ConfigError(
                f"grid.{key}: not a parameter of experiment {experiment!r}"
            )
    for key in sorted(required):
        if key not in grid:
            raise ConfigError(f"grid.{key}: required for experiment {experiment!r}")
    axes = []
    for key, value in grid.items():
        if isinstance(value, list):
            if not value:
                raise ConfigError(f"grid.{key}: empty list")
            axes.append([(key, _check_scalar(key, v)) for v in value])
        else:
            axes.append([(key, _check_scalar(key, value))])
    defaults = {k: v for k, v in _DEFAULTS.items() if k in allowed}
    points = []
    for combo in itertools.product(*axes):
        point = dict(defaults)
        point.update(dict(combo))
        points.append(point)
    return points


def _noise_model(point, where):
    kind = point.get("noise")
    if kind is None:
        kind = "brownian" if point.get("diffusion", 0.0) > 0 else "none"
    if kind == "none":
        return noise.ZERO
    if kind == "brownian":
        if "diffusion" not in point:
            raise ConfigError(f"{where}: brownian noise requires grid.diffusion")
        return noise.Brownian(point["diffusion"])
    for key in ("amplitude", "exponent"):
        if key not in point:
            raise ConfigError(f"{where}: power_law noise requires grid.{key}")
    return noise.PowerLawAdditive(point["amplitude"], point["exponent"])


def _prevalidate(experiment, points):
    """Enforce module invariants at parse time, with grid-point context."""
    for i, point in enumerate(points):
        where = f"grid point {i}"
        try:
            if experiment in ("simulate", "allan"):
                _noise_model(point, where)
            if experiment == "optimize":
                _optimizer_input(point)
            if experiment == "qfi" and point["family"] == "ramsey":
                for key in ("interrogation_time", "omega0"):
                    if key not in point:
                        raise ConfigError(
                            f"{where}: ramsey family requires grid.{key}"
                        )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc


def parse_config(path, seed=None, threads=None, out=None, fmt=None):
    """Parse and validate a config file; keyword overrides win.

    Returns a dict with experiment, seed, threads, out, fmt and the
    expanded list of grid points.
    """
    raw = _load_raw(path)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a table")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"{key}: unknown top-level key")
    experiment = raw.get("experiment")
    if experiment is None:
        raise ConfigError("experiment: required")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            f"experiment: unknown kind {experiment!r}; "
            f"expected one of {', '.join(EXPERIMENTS)}"
        )

    if seed is None:
        seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed: must fit in 64 bits")

    if threads is None:
        threads = raw.get("threads")
    if threads is None:
        env = os.environ.get("CLOCKLAB_THREADS")
        if env is not None:
            try:
                threads = int(env)
            except ValueError as exc:
                raise ConfigError(f"CLOCKLAB_THREADS: {env!r} is not an integer") from exc
    if threads is None:
        threads = 1
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ConfigError(f"threads: expected a positive integer, got {threads!r}")

    if fmt is None:
        fmt = raw.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format: expected csv or json, got {fmt!r}")

    if out is None:
        out = raw.get("out", f"results.{fmt}")
    if not isinstance(out, str) or not out:
        raise ConfigError(f"out: expected a non-empty path, got {out!r}")

    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid: must be a table of parameter values")
    points = _expand_grid(experiment, grid)
    _prevalidate(experiment, points)
    return {
        "experiment": experiment,
        "seed": seed,
        "threads": threads,
        "out": out,
        "fmt": fmt,
        "points": points,
    }


# ---------------------------------------------------------------------------
# experiment runners: point -> ordered record dict; *_ok fields are the
# acceptance-flagged checks that drive the exit status

def _loop_ensemble(point, seed, base_index, model):
    spec = clockloop.ClockSpec(
        T=point["T"],
        noise_model=model,
        reference=clockloop.GaussianReference(
            point["fisher_info"], point.get("readout_variance", 0.0)
        ),
        estimator=estimation.scaled_identity_estimator(point["zeta"]),
        y0=point.get("y0", 0.0),
    )
    trajectories = clockloop.run_ensemble(
        spec, point["n_cycles"], point["n_trajectories"], seed, base_index=base_index
    )
    return spec, trajectories


def _simulate_ensemble(point, seed, base_index, model):
    spec, trajectories = _loop_ensemble(point, seed, base_index, model)
    report = clockloop.pool_stats(
        trajectories, burn_in=point.get("burn_in"), max_lag=point["max_lag"]
    )
    return spec, trajectories, report


def _run_simulate(point, seed, base_index):
    model = _noise_model(point, "noise")
    spec, _, report = _simulate_ensemble(point, seed, base_index, model)
    margins = clockloop.bound_check(report, spec, point["fisher_info"])
    mean_zero_ok = abs(report.mean_y) <= 4.0 * report.mean_y_err
    gst_ok = margins["gst_margin"] >= -3.0 * margins["gst_margin_err"]
    cwfrw_ok = margins["cwfrw_margin"] >= -3.0 * margins["cwfrw_margin_err"]
    return {
        "T": point["T"],
        "zeta": point["zeta"],
        "fisher_info": point["fisher_info"],
        "readout_variance": point["readout_variance"],
        "noise": type(model).__name__,
        "sigma2_lo": noise.moments(model, point["T"]).sigma2_lo,
        "n_cycles": point["n_cycles"],
        "n_trajectories": point["n_trajectories"],
        "burn_in": report.burn_in,
        "sigma2": report.sigma2,
        "sigma2_err": report.sigma2_err,
        "zeta_hat": report.zeta_hat,
        "zeta_hat_err": report.zeta_hat_err,
        "clock_diffusion": report.clock_diffusion,
        "clock_diffusion_err": report.clock_diffusion_err,
        "clock_diffusion_block": report.clock_diffusion_block,
        "clock_diffusion_block_err": report.clock_diffusion_block_err,
        "sigma2_lo_hat": report.sigma2_lo_hat,
        "alpha_hat": report.alpha_hat,
        "beta_hat": report.beta_hat,
        "mean_y": report.mean_y,
        "mean_y_err": report.mean_y_err,
        "dick_gap": report.dick_gap,
        "dick_gap_err": report.dick_gap_err,
        "gst_bound": margins["gst_bound"],
        "gst_margin": margins["gst_margin"],
        "cwfrw_bound": margins["cwfrw_bound"],
        "cwfrw_margin": margins["cwfrw_margin"],
        "mean_zero_ok": bool(mean_zero_ok),
        "gst_ok": bool(gst_ok),
        "cwfrw_ok": bool(cwfrw_ok),
    }


def _run_verify_gaussian(point, seed, base_index):
    params = analytic.GaussianClockParams(
        f0=point["fisher_info"],
        diffusion=point["diffusion"],
        zeta=point["zeta"],
        T=point["T"],
    )
    model = noise.Brownian(point["diffusion"])
    spec, _, report = _simulate_ensemble(point, seed, base_index, model)
    sigma2_pred = analytic.stationary_variance(params)
    diffusion_pred = analytic.stationary_clock_diffusion(params)
    variance_ok = abs(report.sigma2 - sigma2_pred) <= 3.0 * report.sigma2_err
    diffusion_ok = (
        abs(report.clock_diffusion - diffusion_pred)
        <= 3.0 * report.clock_diffusion_err
    )
    mean_zero_ok = abs(report.mean_y) <= 4.0 * report.mean_y_err
    return {
        "T": point["T"],
        "zeta": point["zeta"],
        "fisher_info": point["fisher_info"],
        "diffusion": point["diffusion"],
        "n_cycles": point["n_cycles"],
        "n_trajectories": point["n_trajectories"],
        "burn_in": report.burn_in,
        "sigma2": report.sigma2,
        "sigma2_err": report.sigma2_err,
        "sigma2_pred": sigma2_pred,
        "clock_diffusion": report.clock_diffusion,
        "clock_diffusion_err": report.clock_diffusion_err,
        "clock_diffusion_pred": diffusion_pred,
        "zeta_hat": report.zeta_hat,
        "zeta_hat_err": report.zeta_hat_err,
        "mean_y": report.mean_y,
        "mean_y_err": report.mean_y_err,
        "variance_ok": bool(variance_ok),
        "diffusion_ok": bool(diffusion_ok),
        "mean_zero_ok": bool(mean_zero_ok),
    }


def _run_bounds(point, seed, base_index):
    params = analytic.GaussianClockParams(
        f0=point["fisher_info"],
        diffusion=point["diffusion"],
        zeta=point["zeta"],
        T=point["T"],
    )
    sigma2 = analytic.stationary_variance(params)
    diffusion = analytic.stationary_clock_diffusion(params)
    s2lo = params.sigma2_lo
    alpha, beta = (1.0, 3.0) if s2lo > 0 else (0.0, 0.0)
    gst = analytic.gst_bound(
        point["fisher_info"], s2lo, alpha, beta, point["zeta"]
    )
    cwfrw = analytic.cwfrw_bound(
        point["fisher_info"], s2lo, beta, point["zeta"], point["T"]
    )
    gst_margin = sigma2 - gst
    cwfrw_margin = diffusion - cwfrw
    return {
        "T": point["T"],
        "zeta": point["zeta"],
        "fisher_info": point["fisher_info"],
        "diffusion": point["diffusion"],
        "sigma2": sigma2,
        "gst_bound": gst,
        "gst_margin": gst_margin,
        "clock_diffusion": diffusion,
        "cwfrw_bound": cwfrw,
        "cwfrw_margin": cwfrw_margin,
        "gst_ok": bool(gst_margin >= -1e-12),
        "cwfrw_ok": bool(cwfrw_margin >= -1e-12),
    }


def _optimizer_input(point):
    if "beta" in point:
        return analytic.OptimizerInput(
            alpha=point["alpha"],
            beta=point["beta"],
            zeta=point["zeta"],
            fisher_coefficient=point["fisher_coefficient"],
            allan_amplitude=point["allan_amplitude"],
        )
    return analytic.OptimizerInput.for_power_law(
        alpha=point["alpha"],
        zeta=point["zeta"],
        fisher_coefficient=point["fisher_coefficient"],
        allan_amplitude=point["allan_amplitude"],
    )


def _run_optimize(point, seed, base_index):
    inp = _optimizer_input(point)
    result = analytic.optimal_interrogation_time(inp)
    inv_fisher = inp.fisher_coefficient / result["t_star"] ** 2
    balance_ok = result["balance_residual"] <= 1e-10 * inv_fisher
    search_ok = (
        abs(result["t_star_search"] - result["t_star"]) <= 1e-8 * result["t_star"]
    )
    return {
        "alpha": inp.alpha,
        "beta": inp.beta,
        "zeta": inp.zeta,
        "fisher_coefficient": inp.fisher_coefficient,
        "allan_amplitude": inp.allan_amplitude,
        "t_star": result["t_star"],
        "t_star_search": result["t_star_search"],
        "min_diffusion": result["min_diffusion"],
        "balance_residual": result["balance_residual"],
        "balance_ok": bool(balance_ok),
        "search_ok": bool(search_ok),
    }


def _run_allan(point, seed, base_index):
    model = _noise_model(point, "noise")
    _, trajectories = _loop_ensemble(point, seed, base_index, model)
    values = [
        clockloop.allan_simplified(t, burn_in=point.get("burn_in"))
        for t in trajectories
    ]
    if len(values) >= 2:
        vals = np.array([v for v, _ in values])
        value = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    else:
        value, stderr = values[0]
    if isinstance(model, noise.Brownian):
        params = analytic.GaussianClockParams(
            f0=point["fisher_info"],
            diffusion=model.diffusion,
            zeta=point["zeta"],
            T=point["T"],
        )
        predicted = point["T"] * (
            analytic.stationary_variance(params) + params.sigma2_lo
        )
        ok = abs(value - predicted) <= 3.0 * stderr
    else:
        predicted = None
        ok = None
    return {
        "T": point["T"],
        "zeta": point["zeta"],
        "fisher_info": point["fisher_info"],
        "noise": type(model).__name__,
        "sigma2_lo": noise.moments(model, point["T"]).sigma2_lo,
        "n_cycles": point["n_cycles"],
        "n_trajectories": point["n_trajectories"],
        "allan": value,
        "allan_err": stderr,
        "allan_pred": predicted,
        "allan_ok": ok,
    }


_PAIR_CACHE = {}
_PAIR_LOCK = threading.Lock()


def _gaussian_pair(fisher_info, prior_variance):
    """Shared (prior, family) objects so zeta grids reuse the quadratures."""
    key = (float(fisher_info), float(prior_variance))
    with _PAIR_LOCK:
        if key not in _PAIR_CACHE:
            _PAIR_CACHE[key] = (
                estimation.GaussianPrior(0.0, prior_variance),
                estimation.gaussian_location_family(1.0 / fisher_info),
            )
        return _PAIR_CACHE[key]


def _run_estimation_bounds(point, seed, base_index):
    prior, family = _gaussian_pair(point["fisher_info"], point["prior_variance"])
    zeta = point["zeta"]
    cr_unbiased = estimation.cr_bound_unbiased(prior, family)
    cr_zeta = estimation.cr_bound_zeta(prior, family, zeta)
    cr_correlated = estimation.cr_bound_correlated(prior, family, zeta)
    van_trees = estimation.van_trees_bound(prior, family)
    # Gaussian prior: tilde q = q, so the correlated bound cannot exceed
    # the zeta bound and van Trees is its exact minimum over zeta.
    hierarchy_ok = (
        van_trees <= cr_correlated + 1e-9 and cr_correlated <= cr_zeta + 1e-9
    )
    return {
        "zeta": zeta,
        "fisher_info": point["fisher_info"],
        "prior_variance": point["prior_variance"],
        "cr_unbiased": cr_unbiased,
        "cr_zeta": cr_zeta,
        "cr_correlated": cr_correlated,
        "van_trees": van_trees,
        "hierarchy_ok": bool(hierarchy_ok),
    }


def _run_qfi(point, seed, base_index):
    kind = point["family"]
    if kind == "ramsey":
        family, _ = quantum.ramsey_family(
            point["interrogation_time"], point["omega0"]
        )
        expected = (point["interrogation_time"] * point["omega0"]) ** 2
        n_spins = None
    else:
        n_spins = point["n_spins"]
        state = (
            quantum.ghz_state(n_spins) if kind == "ghz" else quantum.plus_state(n_spins)
        )
        family = quantum.hamiltonian_family(quantum.collective_sz(n_spins), state)
        expected = 4.0 * n_spins**2 if kind == "ghz" else 4.0 * n_spins
    value = quantum.qfi(family)
    value_hamiltonian = quantum.qfi_hamiltonian(family)
    tol = 1e-8 * max(1.0, expected)
    return {
        "family": kind,
        "n_spins": n_spins,
        "interrogation_time": point.get("interrogation_time"),
        "omega0": point.get("omega0"),
        "qfi": value,
        "qfi_hamiltonian": value_hamiltonian,
        "qfi_expected": expected,
        "qfi_ok": bool(abs(value - value_hamiltonian) <= tol),
        "exact_ok": bool(abs(value_hamiltonian - expected) <= tol),
    }


_RUNNERS = {
    "simulate": _run_simulate,
    "verify-gaussian": _run_verify_gaussian,
    "bounds": _run_bounds,
    "optimize": _run_optimize,
    "allan": _run_allan,
    "estimation-bounds": _run_estimation_bounds,
    "qfi": _run_qfi,
}


def execute(config):
    """Run every grid point of a parsed config; returns records in grid order.

    Randomness for point i derives from (seed, i << 32 + trajectory), so
    the result is independent of the worker count.
    """
    runner = _RUNNERS[config["experiment"]]
    seed = config["seed"]
    points = config["points"]

    def one(i):
        try:
            return runner(points[i], seed, i << 32)
        except ConfigError:
            raise
        except Exception as exc:
            summary = ", ".join(f"{k}={v}" for k, v in sorted(points[i].items()))
            raise RuntimeError(f"grid point {i} ({summary}): {exc}") from exc

    if config["threads"] == 1 or len(points) <= 1:
        return [one(i) for i in range(len(points))]
    with ThreadPoolExecutor(max_workers=config["threads"]) as pool:
        futures = [pool.submit(one, i) for i in range(len(points))]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# serialization

def _csv_cell(value):
    if value is None:
        return "na"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "na"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def _json_cell(value):
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return str(value)


def emit(records, fmt, experiment):
    """Serialize records to a CSV or JSON string (stable column order)."""
    if fmt == "csv":
        if not records:
            return "experiment\n"
        keys = list(records[0].keys())
        lines = [",".join(["experiment"] + keys)]
        for record in records:
            lines.append(
                ",".join([experiment] + [_csv_cell(record[k]) for k in keys])
            )
        return "\n".join(lines) + "\n"
    payload = {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "records": [
            {k: _json_cell(v) for k, v in record.items()} for record in records
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def _failures(records):
    count = 0
    for record in records:
        for key, value in record.items():
            if key.endswith("_ok") and value is False:
                count += 1
    return count


def run(config_path, seed=None, threads=None, out=None, fmt=None):
    """Execute a config file end to end.

    Returns (exit_code, output_path, records); exit_code is 1 when any
    per-record check failed, else 0. Raises ConfigError for bad configs
    and RuntimeError (with grid-point context) for module failures.
    """
    config = parse_config(config_path, seed=seed, threads=threads, out=out, fmt=fmt)
    records = execute(config)
    text = emit(records, config["fmt"], config["experiment"])
    try:
        with open(config["out"], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"out: {config['out']}: {exc.strerror or exc}") from exc
    return (1 if _failures(records) else 0), config["out"], records


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="clocklab",
        description="Run clock-simulation experiments from a config file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="execute an experiment config")
    run_parser.add_argument("config", help="TOML (or .json) experiment config")
    run_parser.add_argument("--seed", type=int, default=None, help="master seed")
    run_parser.add_argument(
        "--threads", type=int, default=None, help="worker threads for grid points"
    )
    run_parser.add_argument("--out", default=None, help="output file path")
    run_parser.add_argument(
        "--format", dest="fmt", choices=("csv", "json"), default=None
    )
    args = parser.parse_args(argv)

    try:
        code, out_path, records = run(
            args.config,
            seed=args.seed,
            threads=args.threads,
            out=args.out,
            fmt=args.fmt,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    n_fail = _failures(records)
    status = f", {n_fail} checks failed" if n_fail else ""
    print(f"wrote {len(records)} records to {out_path}{status}")
    return code


if __name__ == "__main__":
    sys.exit(main())
