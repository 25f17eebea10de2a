"""Aitchison distribution on the simplex.

Density with respect to Lebesgue measure on the first K-1 coordinates:

    f(y) = exp{ sum_i (alpha_i - 1) ln y_i
                - 1/2 sum_{i<j} beta_ij (ln y_i - ln y_j)^2 } / c(alpha, beta)

The sufficient statistic is ``T(y) = (ln y_1..ln y_K, -1/2 (ln y_i - ln y_j)^2
for i < j)`` and the natural parameter is ``theta = (alpha - 1, beta)``,
packed as ``(alpha_1..alpha_K, beta_12, beta_13, .., beta_{K-1,K})``.

``c`` has no closed form.  It is computed in additive log-ratio coordinates
``z`` (last component as reference) where the integrand becomes
``exp g(z)`` with

    g(z) = sum_i alpha_i ln y_i(z) - 1/2 z' B z,

``B`` being the weighted graph Laplacian of ``beta`` with the reference row
and column removed.  A tensor Gauss-Hermite rule is centred at the mode of
``g`` and scaled by the Cholesky factor of ``(-hess g)^{-1}``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from .composition import alr, alr_inv, as_composition
from .errors import DomainError, ImproperDensity, InitFailure
from .optim import FitOptions, maximize

logger = logging.getLogger(__name__)

MAX_QUAD_DIM = 6
MODE_MAXITER = 100
MODE_GTOL = 1e-10

__all__ = [
    "AitchisonParams", "AitchisonSuffStats", "QuadratureGrid", "PartitionMoments",
    "AitchisonObjective", "n_params", "dim_from_n_params", "default_quad_order",
    "log_partition", "aitchison_loglik", "aitchison_score", "aitchison_hessian",
    "aitchison_log_density", "init_from_aln", "sample_aitchison", "fit_aitchison",
    "alr", "alr_inv",
]


def n_params(K):
    return K * (K + 1) // 2


def dim_from_n_params(m):
    K = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if n_params(K) != m:
        raise ValueError(f"{m} is not a valid packed Aitchison parameter length")
    return K


def default_quad_order(K):
    return 10 if K <= 4 else 8


def _triu(K):
    return np.triu_indices(K, k=1)


@dataclass(frozen=True)
class AitchisonParams:
    alpha: np.ndarray
    beta: np.ndarray  # upper-triangle values, row-major, length K(K-1)/2

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        K = alpha.shape[0]
        if beta.ndim == 2:
            beta = beta[_triu(K)]
        if beta.shape != (K * (K - 1) // 2,):
            raise ValueError("beta must hold K(K-1)/2 upper-triangular values")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def K(self):
        return self.alpha.shape[0]

    @property
    def packed(self):
        return np.concatenate([self.alpha, self.beta])

    @property
    def natural(self):
        return np.concatenate([self.alpha - 1.0, self.beta])

    @classmethod
    def from_packed(cls, packed):
        packed = np.asarray(packed, dtype=float)
        K = dim_from_n_params(packed.shape[0])
        return cls(packed[:K], packed[K:])

    @classmethod
    def from_natural(cls, theta):
        theta = np.asarray(theta, dtype=float)
        K = dim_from_n_params(theta.shape[0])
        return cls(theta[:K] + 1.0, theta[K:])

    def beta_matrix(self):
        K = self.K
        M = np.zeros((K, K))
        M[_triu(K)] = self.beta
        return M + M.T

    def laplacian(self):
        M = self.beta_matrix()
        return np.diag(M.sum(axis=1)) - M


def _sufficient_stats(logy):
    """Per-row ``T(y)`` from ``ln y`` (n x K) -> n x K(K+1)/2."""
    iu, ju = _triu(logy.shape[1])
    quad = -0.5 * (logy[:, iu] - logy[:, ju]) ** 2
    return np.concatenate([logy, quad], axis=1)


@dataclass(frozen=True)
class AitchisonSuffStats:
    n: int
    U: np.ndarray
    V: np.ndarray
    center: np.ndarray  # alr (last reference) sample mean, used to seed the mode search

    @classmethod
    def from_data(cls, data):
        y = as_composition(data)
        T = _sufficient_stats(np.log(y))
        K = y.shape[1]
        return cls(
            n=y.shape[0], U=T[:, :K].sum(axis=0), V=T[:, K:].sum(axis=0),
            center=alr(y).mean(axis=0),
        )

    @property
    def K(self):
        return self.U.shape[0]

    @property
    def packed(self):
        return np.concatenate([self.U, self.V])


@dataclass(frozen=True)
class QuadratureGrid:
    order: int
    dim: int
    center: np.ndarray
    scale: np.ndarray  # lower-triangular, scale @ scale.T = (-hess g)^{-1}
    nodes: np.ndarray  # (order**dim, dim) points in z
    log_weights: np.ndarray  # includes the exp(x'x) and Jacobian factors


@dataclass(frozen=True)
class PartitionMoments:
    log_c: float
    mean_T: np.ndarray
    cov_T: np.ndarray
    grid: QuadratureGrid = None


@lru_cache(maxsize=32)
def _gh_tensor(order, dim):
    x, w = np.polynomial.hermite.hermgauss(order)
    X = np.array(list(itertools.product(x, repeat=dim)))
    logw = np.log(w)
    LW = np.array([sum(c) for c in itertools.product(logw, repeat=dim)])
    LW = LW + np.sum(X * X, axis=1)
    X.setflags(write=False)
    LW.setflags(write=False)
    return X, LW


def _log_y(Z):
    """``ln y`` for alr coordinates ``Z`` (m x d), reference last."""
    full = np.concatenate([Z, np.zeros((Z.shape[0], 1))], axis=1)
    return full - logsumexp(full, axis=1, keepdims=True)


def _log_integrand(Z, alpha, B):
    logy = _log_y(Z)
    return logy @ alpha - 0.5 * np.einsum("mi,ij,mj->m", Z, B, Z)


def _grad_hess(z, alpha, B):
    d = z.shape[0]
    logy = _log_y(z[None, :])[0]
    y = np.exp(logy[:d])
    S = alpha.sum()
    grad = alpha[:d] - S * y - B @ z
    hess = -S * (np.diag(y) - np.outer(y, y)) - B
    return grad, hess


def _check_admissible(alpha, B):
    """Reject parameters whose integrand does not decay along every ray."""
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(B))):
        raise ImproperDensity("non-finite parameters")
    scale = max(1.0, float(np.max(np.abs(B))))
    evals, evecs = np.linalg.eigh(B)
    tol = 1e-10 * scale
    if evals[0] < -tol:
        raise ImproperDensity("quadratic term grows along some direction")
    if evals[0] > tol:
        return
    # semidefinite: the linear part must decay along the null space of B
    null = evecs[:, evals <= tol]
    S = alpha.sum()
    rng = np.random.default_rng(12345)
    dirs = np.concatenate([null.T, -null.T, rng.standard_normal((512, null.shape[1])) @ null.T])
    full = np.concatenate([dirs, np.zeros((dirs.shape[0], 1))], axis=1)
    h = full @ alpha - S * np.maximum(0.0, full.max(axis=1))
    if np.any(h >= -1e-12 * np.linalg.norm(full, axis=1)):
        raise ImproperDensity("integrand does not decay along a flat direction")


def _find_mode(alpha, B, start):
    z = np.array(start, dtype=float)
    g = _log_integrand(z[None, :], alpha, B)[0]
    gtol = MODE_GTOL * (1.0 + np.abs(alpha).sum() + np.abs(B).sum())
    for _ in range(MODE_MAXITER):
        grad, hess = _grad_hess(z, alpha, B)
        if np.linalg.norm(grad) <= gtol:
            break
        tau = 0.0
        while True:
            try:
                step = cho_solve(cho_factor(-hess + tau * np.eye(len(z))), grad)
                break
            except LinAlgError:
                tau = max(2.0 * tau, 1e-8 * (1.0 + np.abs(hess).max()))
                if tau > 1e12:
                    raise ImproperDensity("mode search failed to find an ascent direction")
        t = 1.0
        while True:
            z_new = z + t * step
            g_new = _log_integrand(z_new[None, :], alpha, B)[0]
            if np.isfinite(g_new) and g_new >= g + 1e-4 * t * (grad @ step):
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            # no further ascent possible at working precision
            break
        z, g = z_new, g_new
    grad, hess = _grad_hess(z, alpha, B)
    if not np.linalg.norm(grad) <= 1e3 * gtol:
        raise ImproperDensity("mode search did not converge")
    try:
        factor = cho_factor(-hess, lower=True)
    except LinAlgError as exc:
        raise ImproperDensity("log-integrand is not concave at its mode") from exc
    return z, hess, factor


def log_partition(params, quad_order=None, center=None):
    """Log normalizing constant with ``E[T]`` and ``Cov[T]`` from one node pass.

    Raises
    ------
    ImproperDensity
        If the density is not normalizable or the quadrature is non-finite.
    """
    if not isinstance(params, AitchisonParams):
        params = AitchisonParams.from_packed(params)
    K = params.K
    d = K - 1
    if d > MAX_QUAD_DIM:
        raise ValueError(f"tensor quadrature is limited to K - 1 <= {MAX_QUAD_DIM}")
    order = default_quad_order(K) if quad_order is None else int(quad_order)
    if order < 3:
        raise ValueError("quad_order must be at least 3")
    alpha = params.alpha
    B = params.laplacian()[:d, :d]
    _check_admissible(alpha, B)
    start = np.zeros(d) if center is None else center
    mode, hess, _ = _find_mode(alpha, B, start)
    try:
        cov_local = np.linalg.inv(-hess)
        scale = np.linalg.cholesky(0.5 * (cov_local + cov_local.T))
    except np.linalg.LinAlgError as exc:
        raise ImproperDensity("singular curvature at the mode") from exc

    X, LW = _gh_tensor(order, d)
    Zn = mode + np.sqrt(2.0) * X @ scale.T
    log_jac = 0.5 * d * np.log(2.0) + np.sum(np.log(np.diag(scale)))
    logf = _log_integrand(Zn, alpha, B)
    terms = LW + logf
    log_c = float(logsumexp(terms) + log_jac)
    if not np.isfinite(log_c):
        raise ImproperDensity("non-finite log-partition")
    p = np.exp(terms - logsumexp(terms))
    T = _sufficient_stats(_log_y(Zn))
    mean_T = p @ T
    dev = T - mean_T
    cov_T = (dev * p[:, None]).T @ dev
    cov_T = 0.5 * (cov_T + cov_T.T)
    if not (np.all(np.isfinite(mean_T)) and np.all(np.isfinite(cov_T))):
        raise ImproperDensity("non-finite moments")
    grid = QuadratureGrid(order, d, mode, scale, Zn, LW + log_jac)
    return PartitionMoments(log_c, mean_T, cov_T, grid)


def aitchison_log_density(params, y):
    """Unnormalized log-density ``sum (alpha-1) ln y - 1/2 sum beta (ln y_i - ln y_j)^2``."""
    logy = np.log(np.atleast_2d(np.asarray(y, dtype=float)))
    return _sufficient_stats(logy) @ params.natural


def aitchison_loglik(params, stats, quad_order=None, moments=None):
    m = moments or log_partition(params, quad_order, stats.center)
    return float(-stats.n * m.log_c + params.natural @ stats.packed)


def aitchison_score(params, stats, quad_order=None, moments=None):
    m = moments or log_partition(params, quad_order, stats.center)
    return stats.packed - stats.n * m.mean_T


def aitchison_hessian(params, stats, quad_order=None, moments=None):
    m = moments or log_partition(params, quad_order, stats.center)
    return -stats.n * m.cov_T


class AitchisonObjective:
    """Aitchison log-likelihood in the packed natural parameters.

    The last few quadrature results are cached so that the optimizer's
    loglik/score/hessian calls at one point share a single node pass.
    """

    def __init__(self, stats, quad_order=None):
        self.stats = stats
        self.quad_order = default_quad_order(stats.K) if quad_order is None else quad_order
        self._cache = {}

    def moments(self, theta):
        theta = np.asarray(theta, dtype=float)
        key = theta.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            try:
                hit = log_partition(
                    AitchisonParams.from_natural(theta), self.quad_order, self.stats.center
                )
            except ImproperDensity as exc:
                hit = exc
            if len(self._cache) >= 4:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = hit
        if isinstance(hit, ImproperDensity):
            raise hit
        return hit

    def in_domain(self, theta):
        try:
            self.moments(theta)
        except ImproperDensity:
            return False
        return True

    def loglik(self, theta):
        m = self.moments(theta)
        return float(-self.stats.n * m.log_c + np.asarray(theta) @ self.stats.packed)

    def score(self, theta):
        return self.stats.packed - self.stats.n * self.moments(theta).mean_T

    def hessian(self, theta):
        return -self.stats.n * self.moments(theta).cov_T


def fit_aitchison(data, params0, opts=None, quad_order=None):
    """Maximize the Aitchison likelihood; ``theta_hat`` is ``(alpha - 1, beta)``."""
    stats = data if isinstance(data, AitchisonSuffStats) else AitchisonSuffStats.from_data(data)
    obj = AitchisonObjective(stats, quad_order)
    return maximize(obj, params0.natural, opts or FitOptions())


def init_from_aln(data, ref_index=None):
    """Aitchison parameters matching the additive logistic normal fit.

    With ``mu`` and ``Sigma`` the mean and (maximum likelihood) covariance of
    the alr-transformed data and ``Omega = Sigma^{-1}``, the ALN log-density
    equals the Aitchison one up to a constant when

        beta_ij = -Omega_ij             (i, j != ref)
        beta_i,ref = sum_j Omega_ij
        alpha_i = (Omega mu)_i          (i != ref),   alpha_ref = -sum alpha_i
    """
    y = as_composition(data)
    n, K = y.shape
    if n < K:
        raise InitFailure(f"need at least K={K} observations for a full-rank covariance")
    ref = K - 1 if ref_index is None else ref_index - 1
    z = alr(y, ref_index)
    mu = z.mean(axis=0)
    sigma = np.cov(z, rowvar=False, bias=True).reshape(K - 1, K - 1)
    try:
        omega = cho_solve(cho_factor(sigma), np.eye(K - 1))
    except (LinAlgError, ValueError) as exc:
        raise InitFailure("alr sample covariance is not positive definite") from exc
    omega = 0.5 * (omega + omega.T)
    others = [i for i in range(K) if i != ref]
    alpha = np.empty(K)
    alpha[others] = omega @ mu
    alpha[ref] = -alpha[others].sum()
    M = np.zeros((K, K))
    M[np.ix_(others, others)] = -omega
    M[others, ref] = omega.sum(axis=1)
    M[ref, others] = M[others, ref]
    M[np.diag_indices(K)] = 0.0
    return AitchisonParams(alpha, M[_triu(K)])


def sample_aitchison(params, n, seed=None, burn_in=2000, thin=10, quad_order=None):
    """Random-walk Metropolis draws in alr coordinates (reference last).

    The proposal is Gaussian with covariance ``2.38^2 / d`` times the local
    inverse curvature at the mode, where the chain also starts.
    """
    if not isinstance(params, AitchisonParams):
        params = AitchisonParams.from_packed(params)
    moments = log_partition(params, quad_order or 5)
    d = params.K - 1
    alpha = params.alpha
    B = params.laplacian()[:d, :d]
    chol = moments.grid.scale * (2.38 / np.sqrt(d))
    rng = np.random.default_rng(seed)
    z = moments.grid.center.copy()
    logf = _log_integrand(z[None, :], alpha, B)[0]
    total = burn_in + n * thin
    proposals = rng.standard_normal((total, d)) @ chol.T
    log_u = np.log(rng.uniform(size=total))
    out = np.empty((n, d))
    accepted = 0
    for t in range(total):
        cand = z + proposals[t]
        logf_c = _log_integrand(cand[None, :], alpha, B)[0]
        if log_u[t] < logf_c - logf:
            z, logf = cand, logf_c
            accepted += 1
        k = t - burn_in
        if k >= 0 and (k + 1) % thin == 0:
            out[k // thin] = z
    logger.info("Aitchison sampler acceptance rate %.3f", accepted / total)
    return alr_inv(out)
