"""Penalized Newton maximizer with adaptive Levenberg-Marquardt damping.

The iteration is

    theta <- theta - (H + gamma * P)^{-1} s

with ``H`` the Hessian and ``s`` the score of the log-likelihood, ``P`` a
negative definite diagonal penalty and ``gamma > 0`` a damping parameter
driven by the gain ratio of each step.  Setting ``gamma = 0`` gives plain
Newton-Raphson, which is also available as a baseline.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.linalg import lapack

from .errors import (
    DegenerateCurvature,
    DegenerateGain,
    DomainError,
    LinearAlgebraFailure,
)

logger = logging.getLogger(__name__)

GAMMA0 = 1.0
MAX_DOUBLINGS = 50
_GAIN_DEN_FLOOR = 1e-30


@runtime_checkable
class Objective(Protocol):
    """Log-likelihood bundle consumed by :func:`maximize`."""

    def loglik(self, theta: np.ndarray) -> float: ...

    def score(self, theta: np.ndarray) -> np.ndarray: ...

    def hessian(self, theta: np.ndarray) -> np.ndarray: ...

    def in_domain(self, theta: np.ndarray) -> bool: ...


class PenaltyKind(str, enum.Enum):
    NEG_IDENTITY = "NegIdentity"
    DIAG_HESSIAN = "DiagHessian"


class Algorithm(str, enum.Enum):
    LM_ADAPTIVE = "LMAdaptive"
    LM_FIXED = "LMFixed"
    NEWTON_RAPHSON = "NewtonRaphson"


class StopReason(str, enum.Enum):
    SCORE_SMALL = "ScoreSmall"
    STEP_SMALL = "StepSmall"
    MAX_ITER = "MaxIter"
    LINALG_FAILURE = "LinearAlgebraFailure"
    LEFT_DOMAIN = "LeftDomain"
    CONTINUE = "Continue"


@dataclass(frozen=True)
class FitOptions:
    """Tolerances and algorithm choice for :func:`maximize`.

    ``fixed_gamma`` is only read when ``algorithm`` is ``LMFixed``.
    """

    eps1: float = 1e-8
    eps2: float = 1e-8
    maxit: int = 1000
    penalty_kind: PenaltyKind = PenaltyKind.DIAG_HESSIAN
    algorithm: Algorithm = Algorithm.LM_ADAPTIVE
    fixed_gamma: float = 1.0

    def __post_init__(self):
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise ValueError("eps1 and eps2 must be positive")
        if self.maxit < 1:
            raise ValueError("maxit must be at least 1")
        if not self.fixed_gamma > 0:
            raise ValueError("fixed_gamma must be positive")
        object.__setattr__(self, "penalty_kind", PenaltyKind(self.penalty_kind))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))


@dataclass
class DampingState:
    gamma: float = GAMMA0
    rho: float = float("nan")


@dataclass
class FitResult:
    theta_hat: np.ndarray
    converged: bool
    stop_reason: StopReason
    n_iter: int
    final_score_norm: float
    gamma_trace: list = field(default_factory=list)
    loglik_trace: list = field(default_factory=list)
    # size of the last attempted step and of the point it started from
    last_step_norm: float = float("nan")
    last_origin_norm: float = float("nan")

    @property
    def final_loglik(self) -> float:
        return self.loglik_trace[-1] if self.loglik_trace else float("nan")


def penalty_matrix(H, kind=PenaltyKind.DIAG_HESSIAN):
    """Diagonal penalty ``P``: ``-I`` or the diagonal of ``H``.

    Raises
    ------
    DegenerateCurvature
        For the diagonal-Hessian kind when some ``H[k, k] >= 0``.
    """
    H = np.asarray(H, dtype=float)
    kind = PenaltyKind(kind)
    if kind is PenaltyKind.NEG_IDENTITY:
        return -np.eye(H.shape[0])
    d = np.diag(H).copy()
    if not np.all(d < 0):
        bad = np.flatnonzero(~(d < 0))
        raise DegenerateCurvature(
            f"Hessian diagonal not negative at coordinates {bad.tolist()}"
        )
    return np.diag(d)


def solve_penalized_step(H, P, gamma, s):
    """Return ``-(H + gamma P)^{-1} s`` via a Cholesky factor of ``-(H + gamma P)``."""
    if not gamma >= 0:
        raise ValueError("gamma must be non-negative")
    A = -(np.asarray(H, dtype=float) + gamma * np.asarray(P, dtype=float))
    if not np.all(np.isfinite(A)):
        raise LinearAlgebraFailure("non-finite damped Hessian")
    # only the lower triangle is read
    L, info = lapack.dpotrf(A, lower=1, clean=0)
    if info != 0:
        raise LinearAlgebraFailure(f"damped Hessian is not negative definite (potrf info={info})")
    # A x = s  <=>  (H + gamma P) x = -s
    x, info = lapack.dpotrs(L, np.asarray(s, dtype=float), lower=1)
    if info != 0:
        raise LinearAlgebraFailure(f"triangular solve failed (potrs info={info})")
    return x


def gain_ratio(l_new, l_old, delta, H, fallback):
    """Actual over predicted log-likelihood change for the step ``delta``.

    The prediction is the quadratic term ``-0.5 delta' H delta``.  When it is
    numerically zero the damped matrix ``fallback`` (``H + gamma P``) takes
    the place of ``H``.
    """
    delta = np.asarray(delta, dtype=float)
    floor = _GAIN_DEN_FLOOR * (1.0 + abs(l_old))
    den = -0.5 * delta @ np.asarray(H) @ delta
    if abs(den) < floor:
        den = -0.5 * delta @ np.asarray(fallback) @ delta
        if abs(den) < floor:
            raise DegenerateGain("predicted change is zero for both matrices")
    return (l_new - l_old) / den


def update_damping(gamma, rho):
    if rho > 0:
        return gamma * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
    return 2.0 * gamma


def _step_small(theta_new, theta_old, eps2):
    return np.linalg.norm(theta_new - theta_old) < eps2 * (np.linalg.norm(theta_old) + eps2)


def check_stop(s, theta_new, theta_old, iter, opts):
    """Stop decision after an iteration, in priority order score, step, count."""
    if np.linalg.norm(s) < opts.eps1:
        return StopReason.SCORE_SMALL
    if _step_small(np.asarray(theta_new), np.asarray(theta_old), opts.eps2):
        return StopReason.STEP_SMALL
    if iter >= opts.maxit:
        return StopReason.MAX_ITER
    return StopReason.CONTINUE


def _finish(obj, theta, reason, n_iter, s, gammas, logliks, step=None, origin=None):
    converged = reason in (StopReason.SCORE_SMALL, StopReason.STEP_SMALL) and bool(
        obj.in_domain(theta)
    )
    return FitResult(
        theta_hat=np.array(theta, dtype=float),
        converged=converged,
        stop_reason=reason,
        n_iter=n_iter,
        final_score_norm=float(np.linalg.norm(s)),
        gamma_trace=gammas,
        loglik_trace=logliks,
        last_step_norm=float("nan") if step is None else float(np.linalg.norm(step)),
        last_origin_norm=float("nan") if origin is None else float(np.linalg.norm(origin)),
    )


def _safe_loglik(obj, theta):
    """Log-likelihood at ``theta`` or ``None`` when ``theta`` is inadmissible."""
    try:
        if not obj.in_domain(theta):
            return None
        val = float(obj.loglik(theta))
    except DomainError:
        return None
    return val if np.isfinite(val) else None


def maximize(obj, theta0, opts=None):
    """Maximize ``obj.loglik`` starting from ``theta0``.

    ``LMAdaptive`` and ``LMFixed`` only accept candidates that stay in the
    domain and have a positive gain ratio; a rejected candidate doubles the
    damping and the step is recomputed from the same point.  ``LMFixed``
    returns to its base damping after every accepted step.  Newton-Raphson
    takes every step as is and stops with ``LeftDomain`` when a step leaves
    the domain.

    Raises
    ------
    DomainError
        If ``theta0`` is not in the domain of ``obj``.
    """
    opts = opts or FitOptions()
    theta = np.array(theta0, dtype=float)
    if not obj.in_domain(theta):
        raise DomainError("starting point is outside the domain")
    if opts.algorithm is Algorithm.NEWTON_RAPHSON:
        return _newton_raphson(obj, theta, opts)

    adaptive = opts.algorithm is Algorithm.LM_ADAPTIVE
    base_gamma = GAMMA0 if adaptive else opts.fixed_gamma
    state = DampingState(gamma=base_gamma)
    l_old = float(obj.loglik(theta))
    s = np.asarray(obj.score(theta), dtype=float)
    gammas = [state.gamma]
    logliks = [l_old]
    if np.linalg.norm(s) < opts.eps1:
        return _finish(obj, theta, StopReason.SCORE_SMALL, 0, s, gammas, logliks)

    n_iter = 0
    while True:
        H = np.asarray(obj.hessian(theta), dtype=float)
        try:
            P = penalty_matrix(H, opts.penalty_kind)
        except DegenerateCurvature:
            logger.debug("degenerate curvature at iteration %d", n_iter)
            return _finish(obj, theta, StopReason.LINALG_FAILURE, n_iter, s, gammas, logliks)

        doublings = 0
        while True:
            gamma = state.gamma
            try:
                delta = solve_penalized_step(H, P, gamma, s)
            except LinearAlgebraFailure:
                delta = None
            if delta is not None:
                cand = theta + delta
                l_new = _safe_loglik(obj, cand)
                if l_new is not None:
                    try:
                        state.rho = gain_ratio(l_new, l_old, delta, H, H + gamma * P)
                    except DegenerateGain:
                        state.rho = 0.0
                    if state.rho > 0:
                        break
                if _step_small(cand, theta, opts.eps2):
                    # rejected step already below the step tolerance
                    return _finish(obj, theta, StopReason.STEP_SMALL, n_iter, s, gammas, logliks,
                                   delta, theta)
            doublings += 1
            if doublings > MAX_DOUBLINGS:
                return _finish(obj, theta, StopReason.LINALG_FAILURE, n_iter, s, gammas, logliks)
            state.gamma = 2.0 * gamma

        n_iter += 1
        theta_old, theta = theta, cand
        l_old = l_new
        s = np.asarray(obj.score(theta), dtype=float)
        state.gamma = update_damping(state.gamma, state.rho) if adaptive else base_gamma
        gammas.append(state.gamma)
        logliks.append(l_new)
        reason = check_stop(s, theta, theta_old, n_iter, opts)
        if reason is not StopReason.CONTINUE:
            return _finish(obj, theta, reason, n_iter, s, gammas, logliks,
                           theta - theta_old, theta_old)


def newton_step(H, s):
    """Plain Newton-Raphson step ``-H^{-1} s``."""
    try:
        return -np.linalg.solve(H, s)
    except np.linalg.LinAlgError as exc:
        raise LinearAlgebraFailure(str(exc)) from exc


def _newton_raphson(obj, theta, opts):
    l_old = float(obj.loglik(theta))
    s = np.asarray(obj.score(theta), dtype=float)
    logliks = [l_old]
    if np.linalg.norm(s) < opts.eps1:
        return _finish(obj, theta, StopReason.SCORE_SMALL, 0, s, [], logliks)
    n_iter = 0
    while True:
        H = np.asarray(obj.hessian(theta), dtype=float)
        try:
            delta = newton_step(H, s)
        except LinearAlgebraFailure:
            return _finish(obj, theta, StopReason.LINALG_FAILURE, n_iter, s, [], logliks)
        if not np.all(np.isfinite(delta)):
            return _finish(obj, theta, StopReason.LINALG_FAILURE, n_iter, s, [], logliks)
        cand = theta + delta
        n_iter += 1
        l_new = _safe_loglik(obj, cand)
        if l_new is None:
            return _finish(obj, theta, StopReason.LEFT_DOMAIN, n_iter, s, [], logliks)
        theta_old, theta = theta, cand
        s = np.asarray(obj.score(theta), dtype=float)
        logliks.append(l_new)
        reason = check_stop(s, theta, theta_old, n_iter, opts)
        if reason is not StopReason.CONTINUE:
            return _finish(obj, theta, reason, n_iter, s, [], logliks, theta - theta_old, theta_old)


def fixed_gamma_step(obj, theta, gamma, kind=PenaltyKind.DIAG_HESSIAN):
    """One application of the undamped-controller iteration map ``M(theta)``."""
    H = np.asarray(obj.hessian(theta), dtype=float)
    P = penalty_matrix(H, kind)
    return theta + solve_penalized_step(H, P, gamma, obj.score(theta))
