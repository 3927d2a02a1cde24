"""Principal branch of the Lambert W function on the nonnegative reals.

Only the w >= 0 branch is ever needed here: the constant-residual power
solver inverts x = w*exp(w) for x >= 0.  A hand-rolled Halley iteration
keeps this dependency-free and lets the test suite check it against an
independent bisection.
"""

import math

__all__ = ["lambert_w0"]


def lambert_w0(x: float) -> float:
    """Solve w*exp(w) = x for the principal branch, x >= 0.

    Starts from ln(1+x), which brackets the root within ~0.7 everywhere
    on [0, inf), and polishes with Halley steps until the update stalls
    at machine precision (a handful of iterations in practice).

    Raises ValueError for negative or NaN input.
    """
    if not x >= 0.0:
        raise ValueError(f"lambert_w0 requires x >= 0, got {x!r}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf
    if x > 1e300:
        # w*exp(w) overflows near the float ceiling; use the log form
        return _w0_from_ln(math.log(x))
    w = math.log1p(x)
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        # Halley update for f(w) = w e^w - x
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * (w + 1.0))
        step = f / denom
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


def _w0_from_ln(ln_x: float) -> float:
    """Solve w + ln(w) = ln_x, i.e. W0(exp(ln_x)), for ln_x >= 1.

    Lets callers evaluate W0 of arguments far beyond float range (the
    constant-residual solver needs W0(e^{c/eps}) for small eps).
    """
    if not ln_x >= 1.0:
        raise ValueError(f"log-form evaluation requires ln_x >= 1, got {ln_x!r}")
    w = ln_x - math.log(ln_x)
    for _ in range(64):
        g = w + math.log(w) - ln_x
        gp = 1.0 + 1.0 / w
        # Halley update; g'' = -1/w^2
        step = 2.0 * g * gp / (2.0 * gp * gp + g / (w * w))
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w
