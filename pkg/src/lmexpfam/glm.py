"""Multivariate generalized linear models with the natural link.

With ``theta_i = Z_i beta`` the score, Fisher information and the IRLS
working variate take their simplest forms:

    s(beta) = sum_i Z_i' (w_i / phi) [y_i - grad b(Z_i beta)]
    F(beta) = sum_i Z_i' (w_i / phi) hess b(Z_i beta) Z_i

and the Hessian of the log-likelihood is exactly ``-F``.  The dispersion
``phi`` and the weights ``w_i`` are known constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh
from scipy.special import gammaln

from .errors import DomainError, InvalidMatrix, LinearAlgebraFailure
from .optim import FitOptions, PenaltyKind, fixed_gamma_step, maximize
from .special import digamma, trigamma


@dataclass(frozen=True)
class ExpFamily:
    """Log-partition function ``b`` of a K-dimensional natural exponential family."""

    name: str
    b: Callable[[np.ndarray], float]
    grad_b: Callable[[np.ndarray], np.ndarray]
    hess_b: Callable[[np.ndarray], np.ndarray]
    in_domain: Callable[[np.ndarray], bool] = field(
        default=lambda theta: bool(np.all(np.isfinite(theta)))
    )


def poisson_family():
    return ExpFamily(
        "poisson",
        b=lambda t: float(np.exp(t).sum()),
        grad_b=lambda t: np.exp(t),
        hess_b=lambda t: np.diag(np.exp(t)),
    )


def gaussian_family():
    """Unit-variance normal; ``b(theta) = theta' theta / 2``."""
    return ExpFamily(
        "gaussian",
        b=lambda t: 0.5 * float(np.dot(t, t)),
        grad_b=lambda t: np.asarray(t, dtype=float).copy(),
        hess_b=lambda t: np.eye(np.size(t)),
    )


def dirichlet_family():
    """Dirichlet with sufficient statistic ``ln y`` and ``theta = alpha - 1``."""

    def b(t):
        a = np.asarray(t) + 1.0
        return float(gammaln(a).sum() - gammaln(a.sum()))

    def grad_b(t):
        a = np.asarray(t) + 1.0
        return digamma(a) - digamma(a.sum())

    def hess_b(t):
        a = np.asarray(t) + 1.0
        return np.diag(trigamma(a)) - trigamma(a.sum())

    return ExpFamily(
        "dirichlet", b, grad_b, hess_b,
        in_domain=lambda t: bool(np.all(np.isfinite(t)) and np.all(np.asarray(t) > -1.0)),
    )


@dataclass(frozen=True)
class GlmModel:
    """Design blocks ``Z`` (n x K x p), responses ``y`` (n x K) and weights."""

    Z: np.ndarray
    y: np.ndarray
    family: ExpFamily
    weights: np.ndarray = None
    phi: float = 1.0

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if Z.ndim == 2:
            Z = Z[:, None, :]
        if y.ndim == 1:
            y = y[:, None]
        if Z.shape[:2] != y.shape:
            raise ValueError(f"design blocks {Z.shape} do not match responses {y.shape}")
        w = np.ones(y.shape[0]) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (y.shape[0],) or not np.all(w > 0):
            raise ValueError("weights must be n positive scalars")
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", w)

    @classmethod
    def identity_design(cls, y, family, weights=None, phi=1.0):
        """Every ``Z_i = I_K``, so ``beta`` is the common natural parameter."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n, K = y.shape
        return cls(np.broadcast_to(np.eye(K), (n, K, K)).copy(), y, family, weights, phi)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.Z.shape[2]

    def natural_params(self, beta):
        return np.einsum("ikp,p->ik", self.Z, np.asarray(beta, dtype=float))

    def _thetas(self, beta):
        thetas = self.natural_params(beta)
        for t in thetas:
            if not self.family.in_domain(t):
                raise DomainError("linear predictor outside the natural parameter space")
        return thetas

    @property
    def _scale(self):
        return self.weights / self.phi


def glm_loglik(model, beta):
    thetas = model._thetas(beta)
    per_obs = np.einsum("ik,ik->i", model.y, thetas) - np.array(
        [model.family.b(t) for t in thetas]
    )
    return float(np.dot(model._scale, per_obs))


def glm_score(model, beta):
    thetas = model._thetas(beta)
    resid = model.y - np.array([model.family.grad_b(t) for t in thetas])
    return np.einsum("i,ikp,ik->p", model._scale, model.Z, resid)


def glm_fisher(model, beta):
    thetas = model._thetas(beta)
    hb = np.array([model.family.hess_b(t) for t in thetas])
    return np.einsum("i,ikp,ikl,ilq->pq", model._scale, model.Z, hb, model.Z)


def irls_step(model, beta):
    """One iteratively reweighted least squares update.

    Solves ``(Z'WZ) beta' = Z'W u`` with the working variate
    ``u_i = Z_i beta + D_i^{-1} (y_i - mu_i)``; under the natural link
    ``D_i = hess b(theta_i)`` and ``W_i = (w_i / phi) hess b(theta_i)``.
    """
    beta = np.asarray(beta, dtype=float)
    thetas = model._thetas(beta)
    fam = model.family
    W = []
    u = []
    for t, yi, c in zip(thetas, model.y, model._scale):
        D = fam.hess_b(t)
        try:
            u.append(t + np.linalg.solve(D, yi - fam.grad_b(t)))
        except np.linalg.LinAlgError as exc:
            raise LinearAlgebraFailure(str(exc)) from exc
        W.append(c * D)
    W = np.array(W)
    u = np.array(u)
    ZtWZ = np.einsum("ikp,ikl,ilq->pq", model.Z, W, model.Z)
    ZtWu = np.einsum("ikp,ikl,il->p", model.Z, W, u)
    try:
        return cho_solve(cho_factor(ZtWZ), ZtWu)
    except (LinAlgError, ValueError) as exc:
        raise LinearAlgebraFailure(f"singular Fisher information: {exc}") from exc


class GlmObjective:
    def __init__(self, model):
        self.model = model

    def in_domain(self, beta):
        try:
            self.model._thetas(beta)
        except DomainError:
            return False
        return bool(np.all(np.isfinite(beta)))

    def loglik(self, beta):
        return glm_loglik(self.model, beta)

    def score(self, beta):
        return glm_score(self.model, beta)

    def hessian(self, beta):
        return -glm_fisher(self.model, beta)


def glm_fit(model, beta0, opts=None):
    return maximize(GlmObjective(model), beta0, opts or FitOptions())


def iteration_map_rate(H, P, gamma):
    """Spectral radius of ``I - (H + gamma P)^{-1} H``.

    This is the local linear rate of the fixed-damping iteration at the
    maximum.  The eigenvalues are those of the symmetric-definite pencil
    ``(-gamma P, -(H + gamma P))`` and lie in (0, 1).

    Raises
    ------
    InvalidMatrix
        If ``H`` is not symmetric negative definite, ``P`` is not a negative
        diagonal matrix or ``gamma <= 0``.
    """
    H = np.asarray(H, dtype=float)
    P = np.asarray(P, dtype=float)
    if not gamma > 0:
        raise InvalidMatrix("gamma must be positive")
    if H.shape != P.shape or H.shape[0] != H.shape[1]:
        raise InvalidMatrix("H and P must be square matrices of equal size")
    if np.max(np.abs(H - H.T)) > 1e-10 * max(1.0, np.max(np.abs(H))):
        raise InvalidMatrix("H is not symmetric")
    if np.any(P - np.diag(np.diag(P))) or not np.all(np.diag(P) < 0):
        raise InvalidMatrix("P must be diagonal with negative entries")
    try:
        cho_factor(-H)
    except LinAlgError as exc:
        raise InvalidMatrix("H is not negative definite") from exc
    lam = eigh(-gamma * P, -(H + gamma * P), eigvals_only=True)
    return float(np.max(np.abs(lam)))


def measure_contraction(obj, theta_hat, gamma, kind=PenaltyKind.DIAG_HESSIAN,
                        n_dirs=20, n_steps=30, n_last=10, radius=1e-3, seed=0,
                        floor=1e-10):
    """Empirical local contraction of the fixed-damping iteration map.

    Starts at ``theta_hat + radius * u`` for ``n_dirs`` random unit vectors,
    applies the map ``n_steps`` times and takes the geometric mean of the
    last ``n_last`` error ratios.  Ratios whose errors sit below
    ``floor * (1 + |theta_hat|)`` are dropped as rounding noise.  Returns the
    largest estimate over directions.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    rng = np.random.default_rng(seed)
    noise = floor * (1.0 + np.linalg.norm(theta_hat))
    worst = 0.0
    for _ in range(n_dirs):
        u = rng.standard_normal(theta_hat.shape)
        theta = theta_hat + radius * u / np.linalg.norm(u)
        errs = [np.linalg.norm(theta - theta_hat)]
        for _ in range(n_steps):
            theta = fixed_gamma_step(obj, theta, gamma, kind)
            errs.append(np.linalg.norm(theta - theta_hat))
        errs = np.array(errs)
        ratios = [errs[t + 1] / errs[t] for t in range(n_steps) if errs[t + 1] > noise]
        ratios = ratios[-n_last:]
        if len(ratios) < 3:
            raise ValueError("too few ratios above the noise floor; lower radius or n_steps")
        worst = max(worst, float(np.exp(np.mean(np.log(ratios)))))
    return worst
