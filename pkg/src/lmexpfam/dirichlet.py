"""Dirichlet maximum likelihood: objective, starting values, FPI and sampler.

The optimizer works on the natural parameters ``theta = alpha - 1``; the
domain is ``alpha > 0``.  Score and Hessian are identical in ``alpha`` and
``theta`` since the map is a shift.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .composition import as_composition
from .errors import DomainError, InsufficientData, NumericalError
from .optim import FitOptions, FitResult, StopReason, check_stop, maximize
from .special import digamma, inv_digamma, trigamma

logger = logging.getLogger(__name__)

_UNDERFLOW = 1e-300


@dataclass(frozen=True)
class DirichletSuffStats:
    n: int
    log_means: np.ndarray

    @classmethod
    def from_data(cls, data):
        y = as_composition(data)
        return cls(n=y.shape[0], log_means=np.log(y).mean(axis=0))

    @property
    def K(self):
        return self.log_means.shape[0]


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if not np.all(alpha > 0):
        raise DomainError("Dirichlet parameters must be positive")
    return alpha


def _stats(data_or_stats):
    if isinstance(data_or_stats, DirichletSuffStats):
        return data_or_stats
    return DirichletSuffStats.from_data(data_or_stats)


def dirichlet_loglik(alpha, stats):
    alpha = _check_alpha(alpha)
    n = stats.n
    return float(
        n * gammaln(alpha.sum())
        - n * gammaln(alpha).sum()
        + n * np.dot(alpha - 1.0, stats.log_means)
    )


def dirichlet_score(alpha, stats):
    alpha = _check_alpha(alpha)
    return stats.n * (digamma(alpha.sum()) - digamma(alpha) + stats.log_means)


def dirichlet_hessian(alpha, n):
    """``n [psi'(sum alpha) 11' - diag(psi'(alpha))]``; does not depend on data."""
    alpha = _check_alpha(alpha)
    K = alpha.shape[0]
    H = np.full((K, K), trigamma(alpha.sum()))
    H[np.diag_indices(K)] -= trigamma(alpha)
    return n * H


class DirichletObjective:
    """Dirichlet log-likelihood in the natural parameters ``theta = alpha - 1``."""

    def __init__(self, stats):
        self.stats = stats

    def in_domain(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(np.isfinite(theta)) and np.all(theta + 1.0 > 0))

    def loglik(self, theta):
        return dirichlet_loglik(np.asarray(theta) + 1.0, self.stats)

    def score(self, theta):
        return dirichlet_score(np.asarray(theta) + 1.0, self.stats)

    def hessian(self, theta):
        return dirichlet_hessian(np.asarray(theta) + 1.0, self.stats.n)


def fit_dirichlet(data, alpha0, opts=None):
    """Run :func:`maximize` on Dirichlet data; ``theta_hat`` holds ``alpha - 1``."""
    stats = _stats(data)
    alpha0 = np.asarray(alpha0, dtype=float)
    return maximize(DirichletObjective(stats), alpha0 - 1.0, opts)


def alpha_hat(result):
    return result.theta_hat + 1.0


# -- starting values --------------------------------------------------------

def _moments(data):
    y = as_composition(data)
    if y.shape[0] < 2:
        raise InsufficientData("at least two observations are required")
    m = y.mean(axis=0)
    v = y.var(axis=0, ddof=1)
    return y, m, v


def init_moments(data):
    """Method of moments from the first component's mean and variance.

    May return non-positive values; callers must check the domain.
    """
    _, m, v = _moments(data)
    precision = m[0] * (1.0 - m[0]) / v[0] - 1.0
    return m * precision


def init_dishon(data):
    """Moments with the precision averaged over all components."""
    _, m, v = _moments(data)
    precision = np.mean(m * (1.0 - m) / v - 1.0)
    return m * precision


def init_ronning(data):
    """Constant vector equal to the smallest observed proportion."""
    y, _, _ = _moments(data)
    return np.full(y.shape[1], y.min())


def init_wicker(data):
    """Precision ``(K-1) / (2 sum_k m_k ln(m_k / g_k))``, ``g_k`` the geometric mean."""
    y, m, _ = _moments(data)
    K = y.shape[1]
    log_g = np.log(y).mean(axis=0)
    spread = np.sum(m * (np.log(m) - log_g))
    return m * (0.5 * (K - 1) / spread)


INITIALIZERS = {
    "Moments": init_moments,
    "Dishon": init_dishon,
    "Ronning": init_ronning,
    "Wicker": init_wicker,
}


# -- fixed-point baseline ---------------------------------------------------

def fpi_fit(data, alpha0, opts=None):
    """Fixed-point iteration ``psi(alpha_k) <- psi(sum alpha) + mean ln y_k``.

    Uses the same stopping rules as :func:`maximize`, applied to the natural
    parameters.  ``gamma_trace`` is empty.
    """
    opts = opts or FitOptions()
    stats = _stats(data)
    obj = DirichletObjective(stats)
    alpha = np.array(alpha0, dtype=float)
    if not np.all(alpha > 0):
        raise DomainError("starting point is outside the domain")
    logliks = [dirichlet_loglik(alpha, stats)]
    n_iter = 0
    while True:
        target = digamma(alpha.sum()) + stats.log_means
        try:
            alpha_new = inv_digamma(target)
        except NumericalError:
            logger.debug("digamma inversion failed at iteration %d", n_iter)
            raise
        n_iter += 1
        s = dirichlet_score(alpha_new, stats)
        logliks.append(dirichlet_loglik(alpha_new, stats))
        reason = check_stop(s, alpha_new - 1.0, alpha - 1.0, n_iter, opts)
        step, origin = alpha_new - alpha, alpha - 1.0
        alpha = alpha_new
        if reason is not StopReason.CONTINUE:
            theta = alpha - 1.0
            return FitResult(
                theta_hat=theta,
                converged=reason in (StopReason.SCORE_SMALL, StopReason.STEP_SMALL)
                and obj.in_domain(theta),
                stop_reason=reason,
                n_iter=n_iter,
                final_score_norm=float(np.linalg.norm(s)),
                gamma_trace=[],
                loglik_trace=logliks,
                last_step_norm=float(np.linalg.norm(step)),
                last_origin_norm=float(np.linalg.norm(origin)),
            )


# -- simulation -------------------------------------------------------------

def sample_dirichlet(alpha, n, seed=None, max_redraws=1000):
    """Draw ``n`` rows as normalized independent gamma variates.

    Rows with a gamma draw below 1e-300 are redrawn.
    """
    alpha = _check_alpha(alpha)
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    g = rng.gamma(alpha, size=(n, alpha.shape[0]))
    for _ in range(max_redraws):
        bad = np.any(g < _UNDERFLOW, axis=1)
        if not bad.any():
            return g / g.sum(axis=1, keepdims=True)
        g[bad] = rng.gamma(alpha, size=(int(bad.sum()), alpha.shape[0]))
    raise NumericalError("could not draw rows free of underflow")


def draw_alpha_uniform_band(total, K, rng, half_width=2.0):
    """Parameters uniform on ``[total/K - half_width, total/K + half_width]``."""
    center = total / K
    return rng.uniform(center - half_width, center + half_width, size=K)
