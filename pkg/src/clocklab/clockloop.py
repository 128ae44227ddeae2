"""Synchronization loop: simulate the disciplined oscillator error

    y_{n+1} = y_n + (K_T y - y)_n - estimate(outcome at ybar_n)

and extract its stationary statistics (variance, autocovariance,
clock-time diffusion, empirical noise exponents) with trajectory-level
standard errors.

Randomness is counter based: trajectory j of a run with master seed s
draws from an independent Philox stream keyed (s, base_index + j), so
ensembles are reproducible and mergeable regardless of scheduling. A
batch of trajectories is advanced through the recurrence with elementwise
vector operations, which leaves every trajectory bit-identical to a
single-trajectory run on its own stream.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analytic, estimation, noise, quantum

DEFAULT_MAX_LAG = 50
STABILITY_GUARD = 1e6


class InstabilityError(RuntimeError):
    """Raised when the loop error leaves the configured guard band."""


def derive_stream(seed, index):
    """Independent Philox stream for (master seed, stream index)."""
    mask = (1 << 64) - 1
    key = np.array([seed & mask, index & mask], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class GaussianReference:
    """Position readout of the Gaussian wave-packet reference.

    Outcomes are Normal(phi, 1/fisher_info + readout_variance). A
    positive readout_variance models a deliberately degraded measurement:
    the state family keeps Fisher information fisher_info while the
    outcome channel delivers less. fisher_info may be inf for an exact
    (noise-free) readout.
    """

    fisher_info: float
    readout_variance: float = 0.0
    primitive: str = field(default="normal", init=False, repr=False)

    def __post_init__(self):
        if not self.fisher_info > 0:
            raise ValueError("fisher_info must be > 0")
        if self.readout_variance < 0:
            raise ValueError("readout_variance must be >= 0")

    @property
    def outcome_variance(self):
        base = 0.0 if math.isinf(self.fisher_info) else 1.0 / self.fisher_info
        return base + self.readout_variance

    def outcomes(self, phis, draws):
        return phis + math.sqrt(self.outcome_variance) * draws

    def outcome_family(self):
        if self.outcome_variance == 0.0:
            raise ValueError("deterministic readout has no outcome density")
        return estimation.gaussian_location_family(self.outcome_variance)


@dataclass(frozen=True)
class RamseyReference:
    """Single-qubit Ramsey interrogation with excited/ground outcomes.

    The excited-state probability is cos^2(T omega0 phi / 2); outcome 1.0
    marks the excited state.
    """

    interrogation_time: float
    omega0: float
    primitive: str = field(default="uniform", init=False, repr=False)

    def __post_init__(self):
        if not self.interrogation_time > 0 or not self.omega0 > 0:
            raise ValueError("interrogation_time and omega0 must be > 0")

    @property
    def fisher_info(self):
        return (self.interrogation_time * self.omega0) ** 2

    def outcomes(self, phis, draws):
        p = quantum.ramsey_excited_probability(
            self.interrogation_time, self.omega0, phis
        )
        return (draws < p).astype(float)

    def outcome_family(self):
        return estimation.bernoulli_family(
            lambda p: quantum.ramsey_excited_probability(
                self.interrogation_time, self.omega0, p
            )
        )


@dataclass(frozen=True)
class ClockSpec:
    """Loop configuration: cycle length, noise model, reference channel,
    estimator with a declared bias parameter, and initial error."""

    T: float
    noise_model: object
    reference: object
    estimator: estimation.Estimator
    y0: float = 0.0
    guard: float = STABILITY_GUARD

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be > 0")
        z = self.estimator.declared_zeta
        if z is None:
            raise ValueError("loop estimators must declare zeta")
        if not abs(z) < 1:
            raise ValueError(
                "|zeta| < 1 is the stability condition for the feedback loop"
            )
        if not self.guard > 0:
            raise ValueError("guard must be > 0")

    @property
    def zeta(self):
        return self.estimator.declared_zeta


@dataclass(frozen=True)
class Trajectory:
    """Recorded loop realization.

    y has n_cycles + 1 entries (cycle-start errors, including the final
    state); ybar and phihat have one entry per cycle. seed_info is
    (master seed, stream index) when the trajectory came from a derived
    stream, else None.
    """

    spec: ClockSpec
    y: np.ndarray
    ybar: np.ndarray
    phihat: np.ndarray
    seed_info: Optional[tuple] = None

    @property
    def n_cycles(self):
        return len(self.ybar)

    def default_burn_in(self):
        z = abs(self.spec.zeta)
        return int(max(1000, math.ceil(20.0 / (1.0 - z))))


def _draw_primitives(reference, n_cycles, rng):
    if reference.primitive == "normal":
        return rng.standard_normal(n_cycles)
    if reference.primitive == "uniform":
        return rng.random(n_cycles)
    raise ValueError(f"unknown primitive {reference.primitive!r}")


def _run_batch(spec, n_cycles, rngs, seed_infos):
    m = len(rngs)
    chol = noise.cholesky_2x2(spec.noise_model.cycle_covariance(spec.T))
    zs = np.stack([rng.standard_normal((n_cycles, 2)) for rng in rngs])
    prim = np.stack([_draw_primitives(spec.reference, n_cycles, rng) for rng in rngs])
    end = chol[0, 0] * zs[:, :, 0]
    avg = chol[1, 0] * zs[:, :, 0] + chol[1, 1] * zs[:, :, 1]

    y = np.empty((m, n_cycles + 1))
    ybar = np.empty((m, n_cycles))
    phihat = np.empty((m, n_cycles))
    current = np.full(m, float(spec.y0))
    y[:, 0] = current
    emap = spec.estimator.map
    for n in range(n_cycles):
        yb = current + avg[:, n]
        out = spec.reference.outcomes(yb, prim[:, n])
        ph = np.asarray(emap(out), dtype=float)
        current = current + end[:, n] - ph
        if np.max(np.abs(current)) > spec.guard:
            raise InstabilityError(
                f"|y| exceeded guard {spec.guard} at cycle {n + 1}; "
                "check the estimator and |zeta| < 1"
            )
        ybar[:, n] = yb
        phihat[:, n] = ph
        y[:, n + 1] = current

    return [
        Trajectory(
            spec=spec,
            y=y[i].copy(),
            ybar=ybar[i].copy(),
            phihat=phihat[i].copy(),
            seed_info=seed_infos[i],
        )
        for i in range(m)
    ]


def run_trajectory(spec, n_cycles, rng):
    """Simulate one trajectory of the loop.

    Per cycle: draw the joint noise increments, form ybar, sample the
    reference outcome at ybar, apply the estimator, and update
    y <- y + end_increment - estimate.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    return _run_batch(spec, n_cycles, [rng], [None])[0]


def run_ensemble(spec, n_cycles, n_trajectories, seed, base_index=0, batch_size=256):
    """Simulate independent trajectories on derived streams.

    Trajectory j uses the Philox stream keyed (seed, base_index + j); the
    result does not depend on batching.
    """
    if n_cycles < 1 or n_trajectories < 1:
        raise ValueError("n_cycles and n_trajectories must be >= 1")
    out = []
    for start in range(0, n_trajectories, batch_size):
        count = min(batch_size, n_trajectories - start)
        idx = [base_index + start + j for j in range(count)]
        rngs = [derive_stream(seed, i) for i in idx]
        infos = [(seed, i) for i in idx]
        out.extend(_run_batch(spec, n_cycles, rngs, infos))
    return out


@dataclass(frozen=True)
class StationaryReport:
    """Pooled stationary statistics with jackknife standard errors.

    clock_diffusion comes from the truncated autocovariance sum of ybar;
    clock_diffusion_block is the independent block-variance estimate.
    alpha_hat and beta_hat are NaN when the noise averages vanish.
    dick_gap is clock_diffusion minus the clock-time prediction evaluated
    at the empirical variance and noise moments.
    """

    sigma2: float
    sigma2_err: float
    gamma: np.ndarray
    gamma_err: np.ndarray
    gamma_ybar: np.ndarray
    gamma_ybar_err: np.ndarray
    zeta_hat: float
    zeta_hat_err: float
    clock_diffusion: float
    clock_diffusion_err: float
    clock_diffusion_block: float
    clock_diffusion_block_err: float
    sigma2_lo_hat: float
    sigma2_lo_err: float
    alpha_hat: float
    alpha_err: float
    beta_hat: float
    beta_err: float
    mean_y: float
    mean_y_err: float
    dick_gap: float
    dick_gap_err: float
    T: float
    zeta: float
    n_units: int
    n_cycles_used: int
    burn_in: int
    max_lag: int


def _autocov(x, max_lag):
    """Biased (1/N) autocovariance for lags 0..max_lag."""
    n = len(x)
    c = x - x.mean()
    out = np.empty(max_lag + 1)
    for h in range(max_lag + 1):
        out[h] = np.dot(c[: n - h], c[h:]) / n
    return out


def _unit_stats(y_block, ybar_block, phihat_block, T, max_lag):
    """Raw statistics of one unit (trajectory or segment), post burn-in.

    y_block has one more entry than ybar_block/phihat_block.
    """
    n = len(ybar_block)
    if n < 2 * (max_lag + 1):
        raise ValueError("unit too short for the requested max_lag")
    yser = y_block[:-1]
    endinc = np.diff(y_block) + phihat_block
    avginc = ybar_block - yser

    gamma_y = _autocov(yser, max_lag)
    gamma_yb = _autocov(ybar_block, max_lag)
    # mean centering biases each lag by -sum(gamma)/n; over 2*max_lag+1
    # terms that compounds to a -(2*max_lag+1)/n factor, corrected here
    d_sum = T * (gamma_yb[0] + 2.0 * gamma_yb[1:].sum())
    d_sum *= n / (n - (2.0 * max_lag + 1.0))

    block_len = max(64, len(ybar_block) // 16)
    if len(ybar_block) < 2 * block_len:
        block_len = max(1, len(ybar_block) // 2)
    n_blocks = len(ybar_block) // block_len
    sums = ybar_block[: n_blocks * block_len].reshape(n_blocks, block_len).sum(axis=1)
    # ddof=1: with ~16 blocks the 1/n divisor would bias the variance low
    d_block = T * float(np.var(sums, ddof=1)) / block_len

    return {
        "mean_y": float(yser.mean()),
        "gamma_y": gamma_y,
        "gamma_yb": gamma_yb,
        "d_sum": float(d_sum),
        "d_block": float(d_block),
        "s2_lo": float(np.mean(avginc**2)),
        "m_ea": float(np.mean(endinc * avginc)),
        "m_ee": float(np.mean(endinc**2)),
    }


def _dick_from_values(sigma2, zeta, sigma2_lo, alpha, T):
    base = T * sigma2 * (1.0 + zeta) / (1.0 - zeta)
    if sigma2_lo <= 1e-300:
        return base
    return base + T * sigma2_lo * (1.0 + alpha + zeta) / (1.0 - zeta)


def _derive(pooled, T, zeta):
    gamma_y = pooled["gamma_y"]
    s2_lo = pooled["s2_lo"]
    if s2_lo > 1e-300:
        alpha_hat = 2.0 * pooled["m_ea"] / s2_lo - 2.0
        beta_hat = pooled["m_ee"] / s2_lo
    else:
        alpha_hat = float("nan")
        beta_hat = float("nan")
    sigma2 = gamma_y[0]
    dick = _dick_from_values(sigma2, zeta, s2_lo, alpha_hat, T)
    return {
        "sigma2": sigma2,
        "gamma": gamma_y,
        "gamma_ybar": pooled["gamma_yb"],
        "zeta_hat": gamma_y[1] / gamma_y[0],
        "clock_diffusion": pooled["d_sum"],
        "clock_diffusion_block": pooled["d_block"],
        "sigma2_lo_hat": s2_lo,
        "alpha_hat": alpha_hat,
        "beta_hat": beta_hat,
        "mean_y": pooled["mean_y"],
        "dick_gap": pooled["d_sum"] - dick,
    }


def _mean_rows(rows, skip=None):
    keys = rows[0].keys()
    out = {}
    for k in keys:
        vals = [r[k] for i, r in enumerate(rows) if i != skip]
        out[k] = (
            np.mean(np.stack(vals), axis=0)
            if isinstance(vals[0], np.ndarray)
            else float(np.mean(vals))
        )
    return out


def _report_from_rows(rows, T, zeta, n_cycles_used, burn_in, max_lag):
    m = len(rows)
    point = _derive(_mean_rows(rows), T, zeta)
    errs = {}
    if m >= 2:
        loo = [_derive(_mean_rows(rows, skip=i), T, zeta) for i in range(m)]
        for k in point:
            vals = np.stack([np.atleast_1d(np.asarray(d[k], dtype=float)) for d in loo])
            center = vals.mean(axis=0)
            var = (m - 1) / m * np.sum((vals - center) ** 2, axis=0)
            err = np.sqrt(var)
            errs[k] = err if err.size > 1 else float(err[0])
    else:
        for k in point:
            v = np.asarray(point[k])
            errs[k] = np.full(v.shape, np.nan) if v.size > 1 else float("nan")
    return StationaryReport(
        sigma2=point["sigma2"],
        sigma2_err=errs["sigma2"],
        gamma=point["gamma"],
        gamma_err=errs["gamma"],
        gamma_ybar=point["gamma_ybar"],
        gamma_ybar_err=errs["gamma_ybar"],
        zeta_hat=point["zeta_hat"],
        zeta_hat_err=errs["zeta_hat"],
        clock_diffusion=point["clock_diffusion"],
        clock_diffusion_err=errs["clock_diffusion"],
        clock_diffusion_block=point["clock_diffusion_block"],
        clock_diffusion_block_err=errs["clock_diffusion_block"],
        sigma2_lo_hat=point["sigma2_lo_hat"],
        sigma2_lo_err=errs["sigma2_lo_hat"],
        alpha_hat=point["alpha_hat"],
        alpha_err=errs["alpha_hat"],
        beta_hat=point["beta_hat"],
        beta_err=errs["beta_hat"],
        mean_y=point["mean_y"],
        mean_y_err=errs["mean_y"],
        dick_gap=point["dick_gap"],
        dick_gap_err=errs["dick_gap"],
        T=T,
        zeta=zeta,
        n_units=m,
        n_cycles_used=n_cycles_used,
        burn_in=burn_in,
        max_lag=max_lag,
    )


def _resolve_burn_in(traj, burn_in):
    if burn_in is None:
        burn_in = traj.default_burn_in()
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    if burn_in >= traj.n_cycles:
        raise ValueError(
            f"burn_in {burn_in} must be smaller than n_cycles {traj.n_cycles}"
        )
    return burn_in


def stationary_stats(traj, burn_in=None, max_lag=DEFAULT_MAX_LAG, n_segments=32):
    """Stationary statistics of one trajectory.

    The post-burn-in series is split into n_segments equal segments that
    act as pseudo-independent units for jackknife standard errors; each
    segment must span at least 2*(max_lag + 1) cycles.
    """
    burn_in = _resolve_burn_in(traj, burn_in)
    length = traj.n_cycles - burn_in
    seg = length // n_segments
    if seg < 2 * (max_lag + 1):
        raise ValueError(
            "trajectory too short for the requested max_lag/segment count"
        )
    rows = []
    for i in range(n_segments):
        lo = burn_in + i * seg
        hi = lo + seg
        rows.append(
            _unit_stats(
                traj.y[lo : hi + 1],
                traj.ybar[lo:hi],
                traj.phihat[lo:hi],
                traj.spec.T,
                max_lag,
            )
        )
    return _report_from_rows(
        rows, traj.spec.T, traj.spec.zeta, n_segments * seg, burn_in, max_lag
    )


def pool_stats(trajectories, burn_in=None, max_lag=DEFAULT_MAX_LAG):
    """Pooled stationary statistics across an ensemble.

    Each trajectory is one jackknife unit; point estimates average the
    per-trajectory raw moments before forming ratios.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    T = trajectories[0].spec.T
    zeta = trajectories[0].spec.zeta
    for t in trajectories[1:]:
        if t.spec.T != T or t.spec.zeta != zeta:
            raise ValueError("trajectories must share T and zeta to be pooled")
    burn_in = _resolve_burn_in(trajectories[0], burn_in)
    rows = []
    used = 0
    for t in trajectories:
        if burn_in >= t.n_cycles:
            raise ValueError("burn_in must be smaller than every n_cycles")
        rows.append(
            _unit_stats(t.y[burn_in:], t.ybar[burn_in:], t.phihat[burn_in:], T, max_lag)
        )
        used += t.n_cycles - burn_in
    return _report_from_rows(rows, T, zeta, used, burn_in, max_lag)


def supermartingale_check(trajectories, burn_in=None):
    """Least-squares regression of y_{n+1} on y_n post burn-in.

    Accepts one trajectory or a list; returns slope/intercept with
    standard errors and the residual rms. For a zeta-biased loop the
    slope estimates zeta and the intercept is 0.
    """
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    xs, ys = [], []
    for t in trajectories:
        b = _resolve_burn_in(t, burn_in)
        xs.append(t.y[b:-1])
        ys.append(t.y[b + 1 :])
    x = np.concatenate(xs)
    ynext = np.concatenate(ys)
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 cycle pairs")
    xc = x - x.mean()
    slope = float(np.dot(xc, ynext) / np.dot(xc, xc))
    intercept = float(ynext.mean() - slope * x.mean())
    resid = ynext - slope * x - intercept
    s2 = float(np.dot(resid, resid) / (n - 2))
    slope_err = math.sqrt(s2 / float(np.dot(xc, xc)))
    intercept_err = math.sqrt(s2 * (1.0 / n + x.mean() ** 2 / float(np.dot(xc, xc))))
    return {
        "slope": slope,
        "slope_err": slope_err,
        "intercept": intercept,
        "intercept_err": intercept_err,
        "residual_rms": math.sqrt(s2),
        "n_pairs": n,
    }


def allan_simplified(x, T=None, burn_in=None, n_batches=32):
    """Simplified oscillator-stability statistic T * mean(ybar^2).

    ``x`` is a Trajectory (cycle averages post burn-in; batch-means
    standard error) or a plain array of independent cycle averages
    (i.i.d. standard error). Returns (value, stderr).
    """
    if isinstance(x, Trajectory):
        if T is None:
            T = x.spec.T
        b = _resolve_burn_in(x, burn_in)
        series = x.ybar[b:]
        usable = len(series) // n_batches * n_batches
        if usable < n_batches:
            raise ValueError("trajectory too short for batch means")
        batches = series[:usable].reshape(n_batches, -1)
        vals = T * np.mean(batches**2, axis=1)
        return float(vals.mean()), float(vals.std() / math.sqrt(n_batches))
    arr = np.asarray(x, dtype=float)
    if T is None:
        raise ValueError("T is required for plain cycle-average samples")
    sq = T * arr**2
    return float(sq.mean()), float(sq.std() / math.sqrt(len(arr)))


def dick_prediction(sigma2, zeta, moments, T):
    """Clock-time diffusion T(sigma2 (1+z)/(1-z) + sigma2_lo (1+alpha+z)/(1-z)).

    ``moments`` is a NoiseMoments; the oscillator term is dropped when
    sigma2_lo = 0 (alpha/beta markers are then irrelevant).
    """
    if not abs(zeta) < 1:
        raise ValueError("|zeta| < 1 required")
    return _dick_from_values(sigma2, zeta, moments.sigma2_lo, moments.alpha, T)


def bound_check(report, spec, fisher_t):
    """Margins of the stationary bounds for a simulated clock.

    fisher_t is the reference-family (quantum) Fisher information; both
    margins must be >= -3 standard errors for a valid clock.
    """
    m = noise.moments(spec.noise_model, spec.T)
    s2lo = m.sigma2_lo
    alpha = 0.0 if s2lo == 0.0 else m.alpha
    beta = 0.0 if s2lo == 0.0 else m.beta
    z = spec.zeta
    gst = analytic.gst_bound(fisher_t, s2lo, alpha, beta, z)
    cw = analytic.cwfrw_bound(fisher_t, s2lo, beta, z, spec.T)
    return {
        "gst_bound": gst,
        "gst_margin": report.sigma2 - gst,
        "gst_margin_err": report.sigma2_err,
        "cwfrw_bound": cw,
        "cwfrw_margin": report.clock_diffusion - cw,
        "cwfrw_margin_err": report.clock_diffusion_err,
    }


def edoca_closed_form(sigma2, zeta, n_terms):
    """Exact second moment of the partial sum of an exponentially
    correlated sequence: E[(sum_{i=0}^{N} X_i)^2] with Cov(X_i, X_j) =
    sigma2 * zeta^|i-j|.
    """
    if not abs(zeta) < 1:
        raise ValueError("|zeta| < 1 required")
    if n_terms < 0:
        raise ValueError("n_terms must be >= 0")
    n = int(n_terms)
    if n == 0 or zeta == 0.0:
        return (n + 1) * sigma2
    tail = 1.0 + zeta * (zeta**n - 1.0) / ((1.0 - zeta) * n)
    return (n + 1) * sigma2 + 2.0 * n * sigma2 * zeta / (1.0 - zeta) * tail
