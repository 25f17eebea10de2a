"""Digamma, trigamma and inverse digamma for positive real arguments.

Both functions shift the argument upward with the recurrences

    psi(x)  = psi(x + 1) - 1/x
    psi'(x) = psi'(x + 1) + 1/x**2

until it exceeds ``_ASYMPTOTIC_FROM`` and then apply the Bernoulli-number
asymptotic series.  Truncation error at the switch point is below 1e-13.
"""

import math

import numpy as np

from .errors import NumericalError

EULER_GAMMA = 0.57721566490153286061

_ASYMPTOTIC_FROM = 6.0

# B_{2k} / (2k) for k = 1..7
_PSI_COEFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_{2k} for k = 1..7
_TRIGAMMA_COEFS = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


def _prepare(x):
    x = np.asarray(x, dtype=float)
    if not (x > 0).all():
        raise ValueError("digamma/trigamma are only implemented for x > 0")
    return x


def _shift_up(x, with_psi, with_tri):
    """Shift ``x`` above the asymptotic threshold, accumulating corrections."""
    psi_acc = 0.0
    tri_acc = 0.0
    small = x < _ASYMPTOTIC_FROM
    if small.any():
        x = x.copy()
        while True:
            inv = np.where(small, 1.0 / x, 0.0)
            if with_psi:
                psi_acc = psi_acc - inv
            if with_tri:
                tri_acc = tri_acc + inv * inv
            x = x + small
            small = x < _ASYMPTOTIC_FROM
            if not small.any():
                break
    return x, psi_acc, tri_acc


def _psi_series(x):
    inv2 = 1.0 / (x * x)
    series = _PSI_COEFS[-1] * inv2
    for c in _PSI_COEFS[-2::-1]:
        series = (series + c) * inv2
    return np.log(x) - 0.5 / x - series


def _tri_series(x):
    inv = 1.0 / x
    inv2 = inv * inv
    series = _TRIGAMMA_COEFS[-1] * inv2
    for c in _TRIGAMMA_COEFS[-2::-1]:
        series = (series + c) * inv2
    return inv + 0.5 * inv2 + series * inv


def _out(v, scalar):
    return float(v) if scalar else v


def _digamma_scalar(x):
    if not x > 0:
        raise ValueError("digamma/trigamma are only implemented for x > 0")
    acc = 0.0
    while x < _ASYMPTOTIC_FROM:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for c in reversed(_PSI_COEFS):
        series = (series + c) * inv2
    return acc + math.log(x) - 0.5 / x - series


def _trigamma_scalar(x):
    if not x > 0:
        raise ValueError("digamma/trigamma are only implemented for x > 0")
    acc = 0.0
    while x < _ASYMPTOTIC_FROM:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    for c in reversed(_TRIGAMMA_COEFS):
        series = (series + c) * inv2
    return acc + inv + 0.5 * inv2 + series * inv


def digamma(x):
    """Logarithmic derivative of the gamma function, for ``x > 0``."""
    scalar = np.ndim(x) == 0
    if scalar:
        return _digamma_scalar(float(x))
    x, acc, _ = _shift_up(_prepare(x), True, False)
    return _out(acc + _psi_series(x), scalar)


def trigamma(x):
    """First derivative of :func:`digamma`, for ``x > 0``."""
    scalar = np.ndim(x) == 0
    if scalar:
        return _trigamma_scalar(float(x))
    x, _, acc = _shift_up(_prepare(x), False, True)
    return _out(acc + _tri_series(x), scalar)


def digamma_trigamma(x):
    """Both functions from a single shift pass."""
    scalar = np.ndim(x) == 0
    x, pacc, tacc = _shift_up(_prepare(x), True, True)
    return _out(pacc + _psi_series(x), scalar), _out(tacc + _tri_series(x), scalar)


def inv_digamma(y, tol=1e-14, maxiter=50):
    """Solve ``digamma(x) = y`` for ``x > 0`` by Newton's method.

    Starts from ``exp(y) + 0.5`` when ``y >= -2.22`` and from
    ``-1 / (y + EULER_GAMMA)`` otherwise, which keeps every Newton iterate
    positive.

    Raises
    ------
    NumericalError
        If the iteration produces a non-positive or non-finite value or
        fails to converge within ``maxiter`` steps.
    """
    scalar = np.ndim(y) == 0
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NumericalError("inverse digamma of a non-finite value")
    x = np.where(y >= -2.22, np.exp(np.minimum(y, 700.0)) + 0.5,
                 -1.0 / (y + EULER_GAMMA))
    for _ in range(maxiter):
        psi, tri = digamma_trigamma(x)
        step = (psi - y) / tri
        x_new = x - step
        if np.any(~(x_new > 0)) or not np.all(np.isfinite(x_new)):
            raise NumericalError("inverse digamma left the positive axis")
        done = np.all(np.abs(step) <= tol * x_new)
        x = x_new
        if done:
            return float(x) if scalar else x
    raise NumericalError(f"inverse digamma did not converge in {maxiter} steps")
