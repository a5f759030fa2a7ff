"""Gamma function evaluated in-repo (no special-function dependency).

Lanczos approximation with g = 7 and a 9-term series, plus the reflection
formula for arguments below 1/2.  On the range this package needs,
(0, 3], the relative error is below 1e-13 (empirically ~1e-15).
"""

from __future__ import annotations

import math

# Godfrey's g=7, n=9 coefficient set; accurate to ~15 significant digits
# for real positive arguments.
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


def gamma(x: float) -> float:
    """Return Gamma(x) for x > 0.

    Raises
    ------
    ValueError
        If ``x <= 0`` (or is NaN); poles and the negative axis are outside
        the supported domain.
    """
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"gamma requires a positive argument, got {x!r}")
    if x < 0.5:
        # reflection keeps the series argument in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    z = x - 1.0
    series = _LANCZOS_COEFFS[0]
    for i, c in enumerate(_LANCZOS_COEFFS[1:], start=1):
        series += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _SQRT_TWO_PI * t ** (z + 0.5) * math.exp(-t) * series
