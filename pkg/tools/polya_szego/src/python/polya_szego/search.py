"""One-dimensional maximization helpers."""

import math
from collections.abc import Callable
from typing import Tuple

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0


def golden_section_max(
    f: Callable[[float], float], a: float, b: float, tol: float
) -> Tuple[float, float]:
    """Golden-section search for the maximum of a unimodal f on [a, b].

    Returns:
        Tuple of (argmax, max_value); the bracket is shrunk until its
        width is at most tol
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, f(x)

    steps = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    for _ in range(max(steps - 1, 0)):
        h *= INV_PHI
        if fc > fd:
            b, d, fd = d, c, fc
            c = a + INV_PHI_SQUARE * h
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * h
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def bisect_sign_change(
    g: Callable[[float], float], a: float, b: float, tol: float
) -> float:
    """Root of a decreasing g with g(a) >= 0 >= g(b), by bisection to tol."""
    while b - a > tol:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if g(m) > 0.0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)
