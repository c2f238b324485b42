"""Result comparison used by tests, the acceptance suite and ``bench``.

Floats compare with a relative tolerance because partial sums are added in
a different order by different engines and cluster sizes; everything else
must match exactly.
"""
from __future__ import annotations

import math
from typing import Iterable, Optional

FLOAT_REL_TOL = 1e-9
FLOAT_ABS_TOL = 1e-9


def values_close(a, b, rel: float = FLOAT_REL_TOL, abs_tol: float = FLOAT_ABS_TOL) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        if a is None or b is None:
            return a is b
        if math.isnan(a) or math.isnan(b):
            return math.isnan(a) and math.isnan(b)
        return math.isclose(a, b, rel_tol=rel, abs_tol=abs_tol)
    return a == b


def rows_close(a: tuple, b: tuple, rel: float = FLOAT_REL_TOL) -> bool:
    return len(a) == len(b) and all(values_close(x, y, rel) for x, y in zip(a, b))


def _sort_key(row: tuple):
    # None sorts first; floats are rounded so near-equal rows land together
    return tuple((v is not None, round(v, 6) if isinstance(v, float) else v) for v in row)


def first_difference(actual: Iterable, expected: Iterable, ordered: bool = False,
                     rel: float = FLOAT_REL_TOL) -> Optional[str]:
    """None when the row lists match, else a description of the first mismatch.

    Unordered comparison treats both sides as multisets.
    """
    a, b = list(actual), list(expected)
    if len(a) != len(b):
        return f"row count {len(a)} != {len(b)}"
    if not ordered:
        a, b = sorted(a, key=_sort_key), sorted(b, key=_sort_key)
    for i, (x, y) in enumerate(zip(a, b)):
        if not rows_close(x, y, rel):
            return f"row {i}: {x!r} != {y!r}"
    return None


def results_match(actual, expected, ordered: bool = False, rel: float = FLOAT_REL_TOL) -> bool:
    return first_difference(actual, expected, ordered, rel) is None
