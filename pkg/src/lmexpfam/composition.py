"""Helpers for compositional data: validation, closure and log-ratios."""

import numpy as np

from .errors import DataError, DomainError

CLOSURE_TOL = 1e-12


def closure(x):
    """Divide each row of a positive matrix by its sum."""
    x = np.asarray(x, dtype=float)
    return x / x.sum(axis=-1, keepdims=True)


def as_composition(data, check_sums=True):
    """Validate an ``n x K`` matrix of strictly positive rows summing to one.

    Returns the data as a float array.  Raises :class:`DataError` otherwise.
    """
    y = np.atleast_2d(np.asarray(data, dtype=float))
    if y.ndim != 2 or y.shape[1] < 2:
        raise DataError("composition data must be an n x K matrix with K >= 2")
    if not np.all(np.isfinite(y)):
        raise DataError("composition data contains non-finite values")
    bad = np.argwhere(~(y > 0))
    if bad.size:
        r, c = bad[0]
        raise DataError(
            f"non-positive entry {y[r, c]!r} at row {r + 1}, column {c + 1}",
            row=int(r) + 1, column=int(c) + 1,
        )
    if check_sums:
        err = np.abs(y.sum(axis=1) - 1.0)
        if np.any(err > 1e-9):
            r = int(np.argmax(err))
            raise DataError(f"row {r + 1} does not sum to one", row=r + 1)
    return y


def _ref_column(K, ref_index):
    # ref_index is 1-based; None means the last component
    if ref_index is None:
        return K - 1
    if not 1 <= ref_index <= K:
        raise ValueError(f"ref_index must be in 1..{K}, got {ref_index}")
    return ref_index - 1


def alr(data, ref_index=None):
    """Additive log-ratio transform ``z_ri = ln(y_ri / y_r,ref)``.

    ``ref_index`` is 1-based and defaults to the last component.  The
    reference column is dropped, so the result is ``n x (K-1)``.
    """
    y = np.atleast_2d(np.asarray(data, dtype=float))
    if np.any(~(y > 0)):
        raise DomainError("alr requires strictly positive entries")
    ref = _ref_column(y.shape[1], ref_index)
    logy = np.log(y)
    z = logy - logy[:, [ref]]
    return np.delete(z, ref, axis=1)


def alr_inv(z, ref_index=None):
    """Inverse of :func:`alr`; rows are returned closed to sum one."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    K = z.shape[1] + 1
    ref = _ref_column(K, ref_index)
    full = np.insert(z, ref, 0.0, axis=1)
    full -= full.max(axis=1, keepdims=True)
    e = np.exp(full)
    return e / e.sum(axis=1, keepdims=True)
