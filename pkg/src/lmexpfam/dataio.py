"""Reading compositional CSV files."""

import csv

import numpy as np

from .composition import closure
from .errors import DataError


def parse_zero_policy(policy):
    """``"reject"`` or ``"replace:<delta>"`` -> ``(kind, delta)``."""
    if isinstance(policy, tuple):
        return policy
    text = str(policy).strip().lower()
    if text == "reject":
        return ("reject", None)
    if text.startswith("replace"):
        _, _, value = text.partition(":")
        delta = float(value) if value else 1e-6
        if not delta > 0:
            raise ValueError("replacement value must be positive")
        return ("replace", delta)
    raise ValueError(f"unknown zero policy {policy!r}")


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_composition_csv(path, delimiter=",", header=None, zero_policy="reject"):
    """Load an ``n x K`` composition matrix and close every row.

    Parameters
    ----------
    path : str or Path
        One observation per row, numeric columns.
    delimiter : str
        Field separator.
    header : bool or None
        Whether the first row holds column names.  ``None`` detects it from
        the presence of non-numeric fields.
    zero_policy : str or tuple
        ``"reject"`` raises on any non-positive entry; ``"replace:<delta>"``
        substitutes ``delta`` and re-closes the row.

    Returns
    -------
    y : ndarray
        Rows summing to one.
    names : list of str or None
        Column names when a header was present.
    """
    kind, delta = parse_zero_policy(zero_policy)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if any(f.strip() for f in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    names = None
    if header is None:
        header = not all(_is_number(f) for f in rows[0])
    if header:
        names = [f.strip() for f in rows[0]]
        rows = rows[1:]
        first_line = 2
    else:
        first_line = 1
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} fields, expected {width}", row=line)
        for j, field in enumerate(row):
            try:
                values[i, j] = float(field)
            except ValueError:
                raise DataError(
                    f"{path}: row {line}, column {j + 1}: cannot parse {field!r}",
                    row=line, column=j + 1,
                ) from None
    if not np.all(np.isfinite(values)):
        i, j = np.argwhere(~np.isfinite(values))[0]
        raise DataError(f"{path}: row {first_line + i}, column {j + 1}: non-finite value",
                        row=int(first_line + i), column=int(j + 1))
    bad = values <= 0
    if bad.any():
        if kind == "reject":
            i, j = np.argwhere(bad)[0]
            raise DataError(
                f"{path}: row {first_line + i}, column {j + 1}: non-positive value "
                f"{float(values[i, j])!r} (zero policy is reject)",
                row=int(first_line + i), column=int(j + 1),
            )
        # delta is a proportion of the closed row
        values = np.where(bad, delta, closure(np.where(bad, 0.0, values)))
    return closure(values), names
