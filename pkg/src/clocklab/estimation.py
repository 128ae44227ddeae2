"""Classical estimation layer: outcome families, estimators, priors,
Fisher information, and the Cramer-Rao family of lower bounds, including
the correlation-aware bound built from the reweighted prior q-tilde.

Outcome families are one-dimensional. Continuous densities must broadcast
over numpy arrays in both the outcome and parameter arguments; samplers
take an array of parameter values and return one outcome per entry.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

TAIL_STDS = 10.0          # truncation of line integrals, in standard deviations
QUAD_ABS_TOL = 1e-10
BAYES_GRID_NODES = 2048   # accuracy bottleneck for optimal_estimator
BAYES_GRID_STDS = 8.0
AFFINITY_TOL = 1e-2       # Monte Carlo noise floor at 1e5 samples per node

# Memo tables for prior/family integrals that are reused across bias
# parameters (the integrals do not depend on zeta). Keyed by object
# identity; values keep strong references so ids stay valid.
_PRIOR_FAMILY_MEMO = {}


def _memoized(tag, prior, family, compute):
    key = (tag, id(prior), id(family))
    hit = _PRIOR_FAMILY_MEMO.get(key)
    if hit is not None and hit[0] is prior and hit[1] is family:
        return hit[2]
    value = compute()
    _PRIOR_FAMILY_MEMO[key] = (prior, family, value)
    return value


@dataclass(frozen=True)
class OutcomeFamily:
    """Parametric family of measurement outcomes p(outcome | phi).

    density(outcomes, phis) -> probability density (or mass, when
    ``outcomes`` is set) broadcasting over both arguments.
    sampler(phis, rng) -> one outcome per parameter value.
    support is the outcome interval; ``outcomes`` lists the discrete
    outcome values for finite families and is None otherwise.
    location/scale give the typical outcome location and spread at a
    parameter value and steer quadrature truncation on the full line.
    """

    density: Callable
    sampler: Callable
    support: tuple = (-np.inf, np.inf)
    outcomes: Optional[tuple] = None
    location: Optional[Callable] = None
    scale: Optional[Callable] = None


@dataclass(frozen=True)
class Estimator:
    """Outcome-to-estimate map with an optionally declared bias parameter."""

    map: Callable
    declared_zeta: Optional[float] = None


@dataclass(frozen=True)
class GaussianPrior:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("prior variance must be > 0")

    @property
    def std(self):
        return math.sqrt(self.variance)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-((x - self.mean) ** 2) / (2.0 * self.variance)) / (
            math.sqrt(2.0 * math.pi) * self.std
        )

    def sample(self, n, rng):
        return rng.normal(self.mean, self.std, n)

    def second_moment(self):
        return self.variance + self.mean**2


@dataclass(frozen=True)
class GridPrior:
    """Discrete prior: point masses ``weights`` at ``nodes``."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D and equal length")
        if np.any(weights < 0):
            raise ValueError("weights must be >= 0")
        total = weights.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights / total)
        if not self.variance > 0:
            raise ValueError("prior variance must be > 0")

    @property
    def mean(self):
        return float(np.dot(self.weights, self.nodes))

    @property
    def variance(self):
        return float(np.dot(self.weights, (self.nodes - self.mean) ** 2))

    @property
    def std(self):
        return math.sqrt(self.variance)

    def sample(self, n, rng):
        return rng.choice(self.nodes, size=n, p=self.weights)

    def second_moment(self):
        return float(np.dot(self.weights, self.nodes**2))

    def spacing(self):
        """Uniform node spacing; raises if the grid is not uniform."""
        d = np.diff(self.nodes)
        if d.size == 0 or not np.allclose(d, d[0], rtol=1e-8, atol=0):
            raise ValueError("grid prior nodes must be uniformly spaced here")
        return float(d[0])


@dataclass(frozen=True)
class GridDensity:
    """Density values tabulated on a grid of parameter values."""

    nodes: np.ndarray
    density: np.ndarray


def uniform_grid_prior(lo, hi, n=2048):
    """Uniform prior on [lo, hi] as cell-centered point masses."""
    if not hi > lo:
        raise ValueError("need hi > lo")
    edges = np.linspace(lo, hi, n + 1)
    nodes = 0.5 * (edges[:-1] + edges[1:])
    return GridPrior(nodes, np.full(n, 1.0 / n))


def gaussian_mean_map_family(mean_map, variance):
    """Family N(mean_map(phi), variance); mean_map must vectorize."""
    if not variance > 0:
        raise ValueError("variance must be > 0")
    sd = math.sqrt(variance)

    def density(a, phis):
        a = np.asarray(a, dtype=float)
        m = mean_map(np.asarray(phis, dtype=float))
        return np.exp(-((a - m) ** 2) / (2.0 * variance)) / (
            math.sqrt(2.0 * math.pi) * sd
        )

    def sampler(phis, rng):
        phis = np.asarray(phis, dtype=float)
        return mean_map(phis) + sd * rng.standard_normal(phis.shape)

    return OutcomeFamily(
        density=density,
        sampler=sampler,
        support=(-np.inf, np.inf),
        location=lambda phi: float(mean_map(np.asarray(phi, dtype=float))),
        scale=lambda phi: sd,
    )


def gaussian_location_family(variance):
    """Family N(phi, variance)."""
    return gaussian_mean_map_family(lambda p: p, variance)


def bernoulli_family(prob_fn):
    """Binary-outcome family: outcome 1.0 with probability prob_fn(phi)."""

    def density(a, phis):
        a = np.asarray(a, dtype=float)
        p = np.clip(prob_fn(np.asarray(phis, dtype=float)), 0.0, 1.0)
        return np.where(a == 1.0, p, 1.0 - p)

    def sampler(phis, rng):
        phis = np.asarray(phis, dtype=float)
        p = np.clip(prob_fn(phis), 0.0, 1.0)
        return (rng.random(phis.shape) < p).astype(float)

    return OutcomeFamily(
        density=density,
        sampler=sampler,
        support=(0.0, 1.0),
        outcomes=(0.0, 1.0),
    )


def identity_estimator():
    return Estimator(map=lambda a: np.asarray(a, dtype=float), declared_zeta=0.0)


def scaled_identity_estimator(zeta):
    """Estimator (1 - zeta) * outcome; zeta-biased for location families."""
    return Estimator(
        map=lambda a: (1.0 - zeta) * np.asarray(a, dtype=float),
        declared_zeta=float(zeta),
    )


def _diff_step(phi):
    return max(1e-5, 1e-5 * abs(phi))


def _line_limits(family, phi):
    lo, hi = family.support
    if np.isfinite(lo) and np.isfinite(hi):
        return lo, hi
    if family.location is not None and family.scale is not None:
        c = family.location(phi)
        s = family.scale(phi)
        return c - TAIL_STDS * s, c + TAIL_STDS * s
    return lo, hi


def fisher_information(family, phi):
    """Classical Fisher information F(phi) = E[(d/dphi log p)^2].

    The parameter derivative uses central differences with step
    h = max(1e-5, 1e-5|phi|); the result must agree with the doubled-step
    value within 1e-6 relative or a numerical error is raised. For
    continuous families the outcome integral is adaptive quadrature with
    absolute tolerance 1e-10, truncated at 10 family scales on the line.
    """
    h = _diff_step(phi)
    f_h = _fisher_fixed_step(family, phi, h)
    f_2h = _fisher_fixed_step(family, phi, 2.0 * h)
    scale = max(abs(f_h), abs(f_2h))
    if scale > 1e-12 and abs(f_h - f_2h) > 1e-6 * scale:
        raise RuntimeError(
            f"Fisher information derivative check failed at phi={phi}: "
            f"step h gives {f_h!r}, step 2h gives {f_2h!r}"
        )
    return max((4.0 * f_h - f_2h) / 3.0, 0.0)


def _fisher_fixed_step(family, phi, h):
    if family.outcomes is not None:
        a = np.asarray(family.outcomes, dtype=float)
        p = np.asarray(family.density(a, phi), dtype=float)
        dp = (
            np.asarray(family.density(a, phi + h), dtype=float)
            - np.asarray(family.density(a, phi - h), dtype=float)
        ) / (2.0 * h)
        keep = p > 1e-14
        return float(np.sum(dp[keep] ** 2 / p[keep]))

    def integrand(a):
        p = float(family.density(a, phi))
        if p <= 0.0:
            return 0.0
        pp = float(family.density(a, phi + h))
        pm = float(family.density(a, phi - h))
        if pp <= 0.0 or pm <= 0.0:
            return 0.0
        dlog = (math.log(pp) - math.log(pm)) / (2.0 * h)
        return dlog * dlog * p

    lo, hi = _line_limits(family, phi)
    value, err = quad(integrand, lo, hi, epsabs=QUAD_ABS_TOL, epsrel=1e-9, limit=300)
    if not np.isfinite(value) or err > max(1e-6, 1e-6 * abs(value)):
        raise RuntimeError(
            f"Fisher information quadrature did not converge at phi={phi}: "
            f"value={value!r}, error estimate={err!r}"
        )
    return value


def _prior_limits(prior):
    return prior.mean - TAIL_STDS * prior.std, prior.mean + TAIL_STDS * prior.std


def cr_bound_unbiased(prior, family):
    """E[1/F(phi)] under the prior; +inf if F vanishes on prior mass."""
    return _memoized(
        "inv_fisher", prior, family, lambda: _mean_inverse_fisher(prior, family)
    )


def _mean_inverse_fisher(prior, family):
    if isinstance(prior, GridPrior):
        keep = prior.weights > 0
        fs = np.array(
            [fisher_information(family, p) for p in prior.nodes[keep]]
        )
        if np.any(fs < 1e-12):
            return math.inf
        return float(np.dot(prior.weights[keep], 1.0 / fs))
    lo, hi = _prior_limits(prior)
    scan = np.linspace(lo, hi, 65)
    if any(fisher_information(family, p) < 1e-12 for p in scan):
        return math.inf
    value, _ = quad(
        lambda p: prior.density(p) / fisher_information(family, p),
        lo,
        hi,
        epsabs=QUAD_ABS_TOL,
        epsrel=1e-9,
        limit=300,
    )
    return float(value)


def cr_bound_zeta(prior, family, zeta):
    """Lower bound (1-zeta)^2 E[1/F] + zeta^2 E[phi^2] for zeta-biased strategies."""
    base = cr_bound_unbiased(prior, family)
    penalty = zeta**2 * prior.second_moment()
    if math.isinf(base):
        return math.inf if zeta != 1.0 else penalty
    return (1.0 - zeta) ** 2 * base + penalty


def tilde_q(prior, nodes=None):
    """Reweighted prior q~(phi) = int_phi^inf (s - mean) q(s) ds / variance.

    Gaussian priors are integrated by adaptive quadrature node by node;
    grid priors use reverse cumulative sums with half weight at the
    boundary node (midpoint rule). Returns density values on the grid.
    """
    if isinstance(prior, GridPrior):
        centered = prior.nodes - prior.mean
        mass = centered * prior.weights
        # sum over nodes strictly above, plus half of the boundary node;
        # weights are cell masses, so the sum is already the integral
        upper = np.cumsum(mass[::-1])[::-1] - 0.5 * mass
        values = upper / prior.variance
        return GridDensity(prior.nodes.copy(), np.maximum(values, 0.0))

    if nodes is None:
        nodes = np.linspace(
            prior.mean - BAYES_GRID_STDS * prior.std,
            prior.mean + BAYES_GRID_STDS * prior.std,
            BAYES_GRID_NODES,
        )
    else:
        nodes = np.asarray(nodes, dtype=float)
    hi = prior.mean + TAIL_STDS * prior.std
    values = np.empty(nodes.shape)
    for i, p in enumerate(nodes):
        out = quad(
            lambda s: (s - prior.mean) * prior.density(s),
            min(p, hi),
            hi,
            epsabs=1e-13,
            epsrel=1e-11,
            limit=300,
            full_output=1,
        )
        values[i] = out[0] / prior.variance
    return GridDensity(nodes, np.maximum(values, 0.0))


def average_fisher_information(prior, family):
    """F~ = int F(phi) q~(phi)^2 / q(phi) dphi for the correlated bound."""
    return _memoized(
        "avg_fisher", prior, family, lambda: _average_fisher(prior, family)
    )


def _average_fisher(prior, family):
    if isinstance(prior, GridPrior):
        dx = prior.spacing()
        tq = tilde_q(prior)
        total = 0.0
        for node, w, tv in zip(prior.nodes, prior.weights, tq.density):
            if w <= 1e-300:
                if abs(tv) > 1e-12:
                    raise ValueError(
                        "q~ has mass where the grid prior vanishes; "
                        "average Fisher information undefined"
                    )
                continue
            total += fisher_information(family, node) * tv**2 * dx**2 / w
        return float(total)

    hi = prior.mean + TAIL_STDS * prior.std
    lo = prior.mean - TAIL_STDS * prior.std

    def tilde_at(p):
        out = quad(
            lambda s: (s - prior.mean) * prior.density(s),
            p,
            hi,
            epsabs=1e-16,
            epsrel=1e-10,
            limit=300,
            full_output=1,
        )
        return out[0] / prior.variance

    def integrand(p):
        q = prior.density(p)
        if q <= 1e-280:
            return 0.0
        tv = tilde_at(p)
        return fisher_information(family, p) * tv * tv / q

    value, _ = quad(integrand, lo, hi, epsabs=QUAD_ABS_TOL, epsrel=1e-8, limit=300)
    return float(value)


def cr_bound_correlated(prior, family, zeta):
    """Correlated-strategy lower bound (1-zeta)^2/F~ + zeta^2 E[phi^2].

    Requires a zero-mean prior.
    """
    if abs(prior.mean) > 1e-12 * max(1.0, prior.std):
        raise ValueError("correlated bound requires a zero-mean prior")
    f_avg = average_fisher_information(prior, family)
    penalty = zeta**2 * prior.second_moment()
    if f_avg == 0.0:
        return math.inf if zeta != 1.0 else penalty
    return (1.0 - zeta) ** 2 / f_avg + penalty


def van_trees_bound(prior, family):
    """Bayesian bound 1/(F~ + 1/E[phi^2]); the zeta-minimum of the
    correlated bound."""
    if abs(prior.mean) > 1e-12 * max(1.0, prior.std):
        raise ValueError("van Trees clone requires a zero-mean prior")
    f_avg = average_fisher_information(prior, family)
    return 1.0 / (f_avg + 1.0 / prior.second_moment())


def optimal_estimator(family, prior):
    """Posterior-mean estimator on a Bayes grid.

    The grid spans 8 prior standard deviations with 2048 nodes (grid
    priors use their own nodes), which is the accuracy bottleneck of this
    construction. Outcomes whose posterior mass underflows raise a
    numerical error rather than extrapolating.
    """
    if isinstance(prior, GridPrior):
        nodes = prior.nodes
        weights = prior.weights
    else:
        nodes = np.linspace(
            prior.mean - BAYES_GRID_STDS * prior.std,
            prior.mean + BAYES_GRID_STDS * prior.std,
            BAYES_GRID_NODES,
        )
        weights = prior.density(nodes)
        weights = weights / weights.sum()
    wn = weights * nodes

    def posterior_mean(alphas):
        arr = np.asarray(alphas, dtype=float)
        scalar = arr.ndim == 0
        flat = np.atleast_1d(arr).ravel()
        out = np.empty(flat.shape)
        chunk = max(1, int(2_000_000 // max(len(nodes), 1)))
        for start in range(0, len(flat), chunk):
            piece = flat[start : start + chunk]
            like = np.asarray(family.density(piece[:, None], nodes[None, :]))
            denom = like @ weights
            if np.any(denom < 1e-300):
                bad = piece[np.argmin(denom)]
                raise RuntimeError(
                    f"posterior mass underflow for outcome {bad!r}; "
                    "outcome lies too far outside the prior grid"
                )
            out[start : start + chunk] = (like @ wn) / denom
        out = out.reshape(np.atleast_1d(arr).shape)
        return float(out[0]) if scalar else out

    return Estimator(map=posterior_mean, declared_zeta=None)


def check_bias(family, estimator, phis, rng, n_samples=100_000):
    """Fit E[estimate | phi] = (1 - zeta) phi over Monte Carlo node means.

    phis must contain at least three distinct values including 0. Returns
    the fitted zeta, the through-origin slope, an affinity flag (relative
    fit residual below 1e-2), and the per-node means and standard errors.
    """
    phis = np.asarray(phis, dtype=float)
    if np.unique(phis).size < 3:
        raise ValueError("phis must contain at least 3 distinct values")
    if not np.any(np.abs(phis) < 1e-12):
        raise ValueError("phis must include 0")
    means = np.empty(phis.shape)
    errs = np.empty(phis.shape)
    sq = 0.0
    for i, p in enumerate(phis):
        outs = family.sampler(np.full(n_samples, p), rng)
        est = np.asarray(estimator.map(outs), dtype=float)
        means[i] = est.mean()
        errs[i] = est.std() / math.sqrt(n_samples)
        sq += float(np.mean(est**2))
    w = 1.0 / np.maximum(errs, 1e-15) ** 2
    denom = float(np.sum(w * phis * phis))
    slope = float(np.sum(w * phis * means) / denom) if denom > 0 else 0.0
    resid = math.sqrt(float(np.mean((means - slope * phis) ** 2)))
    scale = math.sqrt(sq / len(phis))
    rel = resid / max(scale, 1e-12)
    return {
        "zeta": 1.0 - slope,
        "slope": slope,
        "is_affine": bool(rel < AFFINITY_TOL),
        "rel_residual": rel,
        "phis": phis,
        "means": means,
        "stderrs": errs,
    }


def estimation_cost(family, estimator, prior, n_samples, rng):
    """Monte Carlo mean squared error of a strategy under a prior.

    Returns the cost with its standard error, the empirical bias ratio
    zeta_hat = E[(phi - phi_hat) phi]/E[phi^2], and the empirical second
    moment of the parameter.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    phis = prior.sample(n_samples, rng)
    outs = family.sampler(phis, rng)
    est = np.asarray(estimator.map(outs), dtype=float)
    sqerr = (phis - est) ** 2
    m2 = float(np.mean(phis**2))
    return {
        "cost": float(np.mean(sqerr)),
        "stderr": float(np.std(sqerr) / math.sqrt(n_samples)),
        "zeta_hat": float(np.mean((phis - est) * phis) / m2),
        "second_moment": m2,
    }
