"""Extended-real arithmetic used by scores and relative scores.

Values are plain floats; ``math.inf`` and ``-math.inf`` are the two
infinities. The helpers here replace the IEEE behaviour in the two places
where it would produce NaN:

* a difference of equal infinities is taken as 0 (a prior and posterior that
  both put zero mass on the truth leave the score unchanged);
* an infinite score weighted by zero probability contributes 0.
"""

import math

INF = math.inf

ExtendedReal = float


def xsub(a, b):
    """``a - b`` with ``inf - inf = 0`` and ``(-inf) - (-inf) = 0``."""
    if math.isinf(a) and math.isinf(b) and (a > 0) == (b > 0):
        return 0.0
    return a - b


def xweighted(prob, value):
    """``prob * value`` with ``0 * (+-inf) = 0``."""
    if prob == 0:
        return 0.0
    return float(prob) * value


def xexpect(probs, values):
    """Expectation of ``values`` under ``probs`` skipping zero-mass points."""
    total = 0.0
    for p, v in zip(probs, values):
        total += xweighted(p, v)
    return total
