import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmexpfam.errors import DegenerateCurvature, DegenerateGain, DomainError, LinearAlgebraFailure
from lmexpfam.optim import (
    MAX_DOUBLINGS,
    Algorithm,
    FitOptions,
    Objective,
    PenaltyKind,
    StopReason,
    check_stop,
    gain_ratio,
    maximize,
    newton_step,
    penalty_matrix,
    solve_penalized_step,
    update_damping,
)


class Quadratic:
    """``l(theta) = -1/2 (theta - c)' A (theta - c)`` with ``A`` positive definite."""

    def __init__(self, A, c):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.c = np.atleast_1d(np.asarray(c, dtype=float))

    def in_domain(self, theta):
        return bool(np.all(np.isfinite(theta)))

    def loglik(self, theta):
        d = theta - self.c
        return -0.5 * float(d @ self.A @ d)

    def score(self, theta):
        return -self.A @ (theta - self.c)

    def hessian(self, theta):
        return -self.A


class LogBarrier:
    """``l(theta) = sum(ln theta - theta)`` on ``theta > 0``; maximum at ones."""

    def in_domain(self, theta):
        return bool(np.all(theta > 0))

    def loglik(self, theta):
        if not self.in_domain(theta):
            raise DomainError("theta must be positive")
        return float(np.sum(np.log(theta) - theta))

    def score(self, theta):
        return 1.0 / theta - 1.0

    def hessian(self, theta):
        return np.diag(-1.0 / theta**2)


class Flat:
    """Concave but with a vanishing Hessian far out: ``l = -sqrt(1 + theta^2)``."""

    def in_domain(self, theta):
        return True

    def loglik(self, theta):
        return -float(np.sqrt(1 + theta @ theta))

    def score(self, theta):
        return -theta / np.sqrt(1 + theta @ theta)

    def hessian(self, theta):
        r = np.sqrt(1 + theta @ theta)
        return -(np.eye(theta.size) / r - np.outer(theta, theta) / r**3)


def test_objectives_satisfy_protocol():
    assert isinstance(Quadratic(1.0, 0.0), Objective)
    assert isinstance(LogBarrier(), Objective)


# penalty_matrix

def test_penalty_diag_hessian():
    assert np.array_equal(penalty_matrix(np.diag([-2.0, -3.0])), np.diag([-2.0, -3.0]))
    H = np.array([[-2.0, 0.5], [0.5, -1.0]])
    assert np.array_equal(penalty_matrix(H, PenaltyKind.DIAG_HESSIAN), np.diag([-2.0, -1.0]))


def test_penalty_neg_identity():
    H = np.array([[-5.0, 1, 0], [1, -2, 0.3], [0, 0.3, -1]])
    assert np.array_equal(penalty_matrix(H, PenaltyKind.NEG_IDENTITY), -np.eye(3))


def test_penalty_rejects_nonnegative_diagonal():
    with pytest.raises(DegenerateCurvature):
        penalty_matrix(np.diag([-1.0, 0.0]))


# solve_penalized_step

def test_step_examples():
    assert np.allclose(solve_penalized_step(-np.eye(2), -np.eye(2), 1.0, np.array([2.0, 0.0])),
                       [1.0, 0.0])
    H = np.diag([-4.0, -1.0])
    assert np.allclose(solve_penalized_step(H, penalty_matrix(H), 1.0, np.array([8.0, 2.0])),
                       [1.0, 1.0])


def test_step_residual(rng):
    for _ in range(20):
        d = int(rng.integers(2, 12))
        M = rng.standard_normal((d, d))
        H = -(M @ M.T + 0.1 * np.eye(d))
        s = rng.standard_normal(d)
        gamma = float(rng.uniform(0.01, 10))
        P = penalty_matrix(H)
        delta = solve_penalized_step(H, P, gamma, s)
        assert np.linalg.norm((H + gamma * P) @ delta + s) <= 1e-10 * (np.linalg.norm(s) + 1)


def test_step_small_gamma_is_newton():
    H = np.array([[-3.0, 1.0], [1.0, -2.0]])
    s = np.array([0.3, -1.2])
    assert np.allclose(solve_penalized_step(H, penalty_matrix(H), 1e-14, s),
                       newton_step(H, s), rtol=1e-12)


def test_step_rejects_indefinite():
    with pytest.raises(LinearAlgebraFailure):
        solve_penalized_step(np.diag([-1.0, 2.0]), -np.eye(2), 0.5, np.ones(2))


# gain_ratio

def test_gain_ratio_quadratic_newton_step():
    obj = Quadratic([[2.0, 0.3], [0.3, 1.0]], [1.0, -2.0])
    theta = np.array([4.0, 4.0])
    H, s = obj.hessian(theta), obj.score(theta)
    delta = newton_step(H, s)
    rho = gain_ratio(obj.loglik(theta + delta), obj.loglik(theta), delta, H, H)
    assert rho == pytest.approx(1.0, abs=1e-12)


def test_gain_ratio_signs():
    H = -np.eye(2)
    delta = np.array([0.1, 0.2])
    assert gain_ratio(1.0, 1.0, delta, H, H) == 0.0
    assert gain_ratio(0.5, 1.0, delta, H, H) < 0


def test_gain_ratio_fallback_and_degenerate():
    delta = np.array([1e-20, 0.0])
    H = -np.eye(2)
    fallback = -1e30 * np.eye(2)
    # primary denominator 5e-41 is below the floor; fallback gives 5e-11
    assert gain_ratio(1e-11, 0.0, delta, H, fallback) == pytest.approx(0.2)
    with pytest.raises(DegenerateGain):
        gain_ratio(0.0, 0.0, delta, H, H)


# update_damping

def test_update_examples():
    assert update_damping(1.0, 1.0) == pytest.approx(1 / 3)
    assert update_damping(1.0, 0.5) == pytest.approx(1.0)
    assert update_damping(3.0, -0.2) == 6.0
    assert update_damping(3.0, 0.0) == 6.0


@given(st.floats(min_value=1e-8, max_value=1e8), st.floats(min_value=-10, max_value=10))
def test_update_positive(gamma, rho):
    assert update_damping(gamma, rho) > 0


def test_update_continuous_on_grid():
    for rho in np.linspace(-1, 2, 301):
        if abs(rho) < 1e-5:
            continue  # the controller switches branches at rho = 0
        assert abs(update_damping(1.0, rho + 1e-6) - update_damping(1.0, rho)) < 1e-4


# check_stop

def test_check_stop_examples():
    opts = FitOptions()
    t = np.array([1.0, 2.0])
    assert check_stop(np.zeros(2), t + 1, t, 1, opts) is StopReason.SCORE_SMALL
    assert check_stop(np.ones(2), t, t, 1, opts) is StopReason.STEP_SMALL
    assert check_stop(np.ones(2), t + 1, t, 1000, opts) is StopReason.MAX_ITER
    assert check_stop(np.ones(2), t + 1, t, 999, opts) is StopReason.CONTINUE


def test_check_stop_priority():
    opts = FitOptions(maxit=1)
    t = np.ones(3)
    assert check_stop(np.zeros(3), t, t, 1, opts) is StopReason.SCORE_SMALL
    assert check_stop(np.ones(3), t, t, 1, opts) is StopReason.STEP_SMALL


def test_options_validation():
    with pytest.raises(ValueError):
        FitOptions(eps1=0)
    with pytest.raises(ValueError):
        FitOptions(maxit=0)
    assert FitOptions(algorithm="LMFixed").algorithm is Algorithm.LM_FIXED


# maximize

# LMFixed(1) with the diagonal penalty contracts at rate 1/2 here, so the
# relative-step test stops about one step (2e-8) short of the maximum.
_HALF_RATE = pytest.mark.xfail(strict=True, reason="linear rate 1/2 meets step tolerance 3e-8")


@pytest.mark.parametrize("algorithm", list(Algorithm))
@pytest.mark.parametrize("kind", list(PenaltyKind))
def test_one_dimensional_quadratic(algorithm, kind, request):
    if algorithm is Algorithm.LM_FIXED and kind is PenaltyKind.DIAG_HESSIAN:
        request.applymarker(_HALF_RATE)
    obj = Quadratic([[2.0]], [3.0])
    res = maximize(obj, np.array([0.0]), FitOptions(algorithm=algorithm, penalty_kind=kind))
    assert res.converged
    assert res.theta_hat[0] == pytest.approx(3.0, abs=1e-8)


def test_newton_one_step_on_quadratic():
    obj = Quadratic([[2.0, 0.5], [0.5, 1.0]], [1.0, -1.0])
    res = maximize(obj, np.zeros(2), FitOptions(algorithm=Algorithm.NEWTON_RAPHSON))
    assert res.n_iter == 1
    assert res.stop_reason is StopReason.SCORE_SMALL
    assert res.gamma_trace == []


def test_lm_traces():
    res = maximize(LogBarrier(), np.array([10.0, 0.05, 3.0]))
    assert res.converged
    assert np.allclose(res.theta_hat, 1.0, atol=1e-8)
    assert res.gamma_trace[0] == 1.0
    assert all(g > 0 for g in res.gamma_trace)
    assert len(res.gamma_trace) == res.n_iter + 1
    assert np.all(np.diff(res.loglik_trace) >= 0)


def test_newton_leaves_domain_where_lm_converges():
    start = np.array([10.0])
    nr = maximize(LogBarrier(), start, FitOptions(algorithm=Algorithm.NEWTON_RAPHSON))
    assert nr.stop_reason is StopReason.LEFT_DOMAIN
    assert not nr.converged
    lm = maximize(LogBarrier(), start)
    assert lm.converged and lm.theta_hat[0] == pytest.approx(1.0)


def test_start_outside_domain():
    with pytest.raises(DomainError):
        maximize(LogBarrier(), np.array([-1.0]))


def test_start_at_maximum():
    res = maximize(LogBarrier(), np.ones(2))
    assert res.n_iter == 0 and res.stop_reason is StopReason.SCORE_SMALL and res.converged


def test_maxit_stop():
    res = maximize(LogBarrier(), np.array([50.0]), FitOptions(maxit=2))
    assert res.stop_reason is StopReason.MAX_ITER
    assert res.n_iter == 2 and not res.converged


def test_fixed_gamma_keeps_base_damping():
    res = maximize(LogBarrier(), np.array([0.2, 4.0]),
                   FitOptions(algorithm=Algorithm.LM_FIXED, fixed_gamma=0.5))
    assert res.converged
    assert set(res.gamma_trace) == {0.5}


def test_flat_objective_evaporation_is_controlled():
    # Newton overshoots on the flat tails; the adaptive controller does not
    start = np.array([3.0, -2.0])
    lm = maximize(Flat(), start)
    assert lm.converged and np.allclose(lm.theta_hat, 0.0, atol=1e-7)
    nr = maximize(Flat(), start, FitOptions(algorithm=Algorithm.NEWTON_RAPHSON, maxit=50))
    assert not nr.converged


def test_repeated_rejection_reports_linalg_failure():
    class Decreasing(Quadratic):
        # claims ascent along the score but the loglik never improves
        def loglik(self, theta):
            return -float(np.sum(theta**2)) - 1e3 * float(np.sum(np.abs(theta - 1.0)) > 0)

        def score(self, theta):
            return np.ones_like(theta)

    obj = Decreasing(np.eye(1), [0.0])
    res = maximize(obj, np.array([1.0]), FitOptions(eps2=1e-300))
    assert res.stop_reason is StopReason.LINALG_FAILURE
    assert not res.converged
    assert MAX_DOUBLINGS == 50


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_random_quadratics_all_algorithms_agree(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    M = rng.standard_normal((d, d))
    obj = Quadratic(M @ M.T + 0.5 * np.eye(d), rng.standard_normal(d) * 5)
    for alg in Algorithm:
        res = maximize(obj, np.zeros(d), FitOptions(algorithm=alg))
        assert res.converged
        assert np.allclose(res.theta_hat, obj.c, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_reduction_property(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 8))
    M = rng.standard_normal((d, d))
    H = -(M @ M.T + 0.1 * np.eye(d))
    s = rng.standard_normal(d)
    for kind in PenaltyKind:
        lm = solve_penalized_step(H, penalty_matrix(H, kind), 1e-12, s)
        nr = newton_step(H, s)
        assert np.linalg.norm(lm - nr) <= 1e-8 * np.linalg.norm(nr)
