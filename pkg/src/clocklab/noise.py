"""Local-oscillator noise models.

Each model is a continuous-time martingale K_t acting on the oscillator's
relative frequency error.  A synchronization cycle of length T needs the
joint law of the end increment (K_T y - y) and the cycle-averaged
increment (ybar - y); both are Gaussian here and are sampled exactly from
their 2x2 covariance, with no time-stepping error.

Convention: Brownian motion is normalized so that Var(B_t) = 2*D*t.  All
derived constants (sigma2_lo = 2DT/3, beta = 3) follow this convention.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Brownian:
    """Brownian frequency noise, Var(B_t) = 2*diffusion*t.

    diffusion = 0 gives the exactly noiseless oscillator.
    """

    diffusion: float

    def __post_init__(self):
        if self.diffusion < 0:
            raise ValueError("diffusion must be >= 0")

    def cycle_covariance(self, T):
        """Covariance of (K_T y - y, ybar - y) over one cycle of length T."""
        _check_period(T)
        d = self.diffusion
        return np.array([[2.0 * d * T, d * T], [d * T, 2.0 * d * T / 3.0]])

    def end_variance(self, t):
        """Var(K_t y - y)."""
        if t < 0:
            raise ValueError("t must be >= 0")
        return 2.0 * self.diffusion * t

    def path_increment_variances(self, T, n_steps):
        """Variances of the independent increments on a uniform grid."""
        dt = T / n_steps
        return np.full(n_steps, 2.0 * self.diffusion * dt)


@dataclass(frozen=True)
class PowerLawAdditive:
    """Additive martingale noise with power-law Allan variance.

    K_t y = y + int_0^t f(s) dW_s with f(s) = c * s^((exponent-1)/2) and c
    fixed so that sigma2_lo(T) = amplitude * T^exponent.  The exponent must
    exceed -1 for the moment formulas to make sense; sampling additionally
    requires exponent >= 0, because for exponent in (-1, 0) the would-be
    cycle covariance has negative determinant and no such process exists.
    exponent = 0 is the degenerate limit where the end and averaged
    increments coincide (a single jump at t = 0+).
    """

    amplitude: float
    exponent: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if self.exponent <= -1:
            raise ValueError("exponent must be > -1")

    def cycle_covariance(self, T):
        """Covariance of (K_T y - y, ybar - y) over one cycle of length T.

        Closed form from the kernel integrals: with a = exponent and
        s2 = amplitude * T^a,

            Var(end) = s2 * (a+1)(a+2)/2
            Var(avg) = s2
            Cov      = s2 * (a+2)/2

        The determinant is s2^2 * a(a+2)/4, so the matrix is a valid
        covariance only for a >= 0; sampling enforces that.
        """
        _check_period(T)
        self._check_samplable()
        a = self.exponent
        s2 = self.amplitude * T**a
        return np.array(
            [
                [s2 * (a + 1.0) * (a + 2.0) / 2.0, s2 * (a + 2.0) / 2.0],
                [s2 * (a + 2.0) / 2.0, s2],
            ]
        )

    def end_variance(self, t):
        """Var(K_t y - y) = amplitude * (a+1)(a+2)/2 * t^a."""
        if t < 0:
            raise ValueError("t must be >= 0")
        a = self.exponent
        return self.amplitude * (a + 1.0) * (a + 2.0) / 2.0 * t**a

    def path_increment_variances(self, T, n_steps):
        """Variances of the independent increments on a uniform grid.

        Exact: each increment of int f dW over [t_k, t_{k+1}] is Gaussian
        with variance c^2 (t_{k+1}^a - t_k^a)/a; at a = 0 all the variance
        sits in the first step.
        """
        self._check_samplable()
        a = self.exponent
        if a == 0.0:
            var = np.zeros(n_steps)
            var[0] = self.amplitude
            return var
        t = np.linspace(0.0, T, n_steps + 1)
        # c^2/a = amplitude*(a+1)(a+2)/2
        return self.amplitude * (a + 1.0) * (a + 2.0) / 2.0 * np.diff(t**a)

    def _check_samplable(self):
        if self.exponent < 0:
            raise ValueError(
                "power-law noise with exponent in (-1, 0) has no valid "
                "cycle covariance (negative determinant); sampling requires "
                "exponent >= 0"
            )


ZERO = Brownian(0.0)


@dataclass(frozen=True)
class CycleIncrement:
    """One joint sample of (K_T y - y, ybar - y) for a cycle."""

    end_minus_start: float
    avg_minus_start: float


@dataclass(frozen=True)
class NoiseMoments:
    """Analytic moment metadata of a noise model at cycle length T.

    sigma2_lo is E[(ybar - y)^2]; alpha solves the time-averaged
    mean-square equation (1/T) int_0^T E[(K_s y - y)^2] ds
    = sigma2_lo*(alpha+2)/2; beta = E[(K_T y - y)^2] / sigma2_lo.
    alpha and beta are NaN markers when sigma2_lo = 0.
    """

    sigma2_lo: float
    alpha: float
    beta: float


def _check_period(T):
    if not T > 0:
        raise ValueError("cycle length T must be > 0")


def cholesky_2x2(cov):
    """Lower Cholesky factor of a 2x2 covariance, clipping tiny negatives.

    Handles the degenerate (rank-deficient) matrices that arise for zero
    noise and for the power-law exponent-0 case.
    """
    c00, c01, c11 = cov[0, 0], cov[0, 1], cov[1, 1]
    l00 = np.sqrt(max(c00, 0.0))
    l10 = c01 / l00 if l00 > 0.0 else 0.0
    l11 = np.sqrt(max(c11 - l10 * l10, 0.0))
    return np.array([[l00, 0.0], [l10, l11]])


def sample_cycle(model, T, rng):
    """Draw one exact joint sample of the cycle increments.

    Parameters
    ----------
    model : Brownian or PowerLawAdditive
    T : float
        Cycle length, > 0.
    rng : numpy.random.Generator

    Returns
    -------
    CycleIncrement
    """
    end, avg = sample_cycles(model, T, 1, rng)
    return CycleIncrement(float(end[0]), float(avg[0]))


def sample_cycles(model, T, n, rng):
    """Vectorized form of sample_cycle: n independent cycles.

    Returns (end_minus_start, avg_minus_start) arrays of shape (n,).
    """
    _check_period(T)
    L = cholesky_2x2(model.cycle_covariance(T))
    z = rng.standard_normal((n, 2))
    end = L[0, 0] * z[:, 0]
    avg = L[1, 0] * z[:, 0] + L[1, 1] * z[:, 1]
    return end, avg


def moments(model, T):
    """Analytic NoiseMoments of a model at cycle length T."""
    _check_period(T)
    if isinstance(model, Brownian):
        if model.diffusion == 0.0:
            return NoiseMoments(0.0, float("nan"), float("nan"))
        return NoiseMoments(2.0 * model.diffusion * T / 3.0, 1.0, 3.0)
    if isinstance(model, PowerLawAdditive):
        if model.amplitude == 0.0:
            return NoiseMoments(0.0, float("nan"), float("nan"))
        a = model.exponent
        return NoiseMoments(
            model.amplitude * T**a, a, (a + 1.0) * (a + 2.0) / 2.0
        )
    raise TypeError(f"unknown noise model {model!r}")


def estimate_moments(model, T, n_samples, rng):
    """Monte Carlo estimate of NoiseMoments from exact cycle samples.

    Uses the martingale identity (1/T) int_0^T E[(K_s y - y)^2] ds
    = E[(K_T y - y)(ybar - y)], so alpha-hat and beta-hat need only the
    cycle increments:

        alpha_hat = 2*mean(end*avg)/mean(avg^2) - 2
        beta_hat  = mean(end^2)/mean(avg^2)

    Returns
    -------
    (NoiseMoments, dict)
        Point estimates and delta-method standard errors keyed
        'sigma2_lo', 'alpha', 'beta'.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    end, avg = sample_cycles(model, T, n_samples, rng)
    aa = avg * avg
    ee = end * end
    ea = end * avg
    m_aa = float(np.mean(aa))
    m_ee = float(np.mean(ee))
    m_ea = float(np.mean(ea))
    errs = {"sigma2_lo": float(np.std(aa) / np.sqrt(n_samples))}
    if m_aa == 0.0:
        est = NoiseMoments(0.0, float("nan"), float("nan"))
        errs["alpha"] = float("nan")
        errs["beta"] = float("nan")
        return est, errs
    alpha_hat = 2.0 * m_ea / m_aa - 2.0
    beta_hat = m_ee / m_aa
    errs["alpha"] = 2.0 * _ratio_stderr(ea, aa, n_samples)
    errs["beta"] = _ratio_stderr(ee, aa, n_samples)
    return NoiseMoments(m_aa, alpha_hat, beta_hat), errs


def _ratio_stderr(num, den, n):
    """Delta-method standard error of mean(num)/mean(den)."""
    mn, md = np.mean(num), np.mean(den)
    r = mn / md
    resid = num - r * den
    return float(np.std(resid) / (md * np.sqrt(n)))


def sample_path(model, y0, T, n_steps, rng):
    """Discrete path of K_{k*T/n_steps} y0 for k = 0..n_steps.

    Increment distributions are exact on the grid, so the endpoint agrees
    in law with sample_cycle for every n_steps; the path average converges
    to the averaged cycle increment as n_steps grows.
    """
    _check_period(T)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    var = model.path_increment_variances(T, n_steps)
    steps = rng.standard_normal(n_steps) * np.sqrt(var)
    path = np.empty(n_steps + 1)
    path[0] = y0
    path[1:] = y0 + np.cumsum(steps)
    return path
