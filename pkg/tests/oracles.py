"""Slow-but-simple reference implementations used only by the tests.

Everything here deliberately avoids the library's own algorithms:
roots come from bisection, integrals from adaptive Simpson.  These are
the yardsticks the fast code is measured against.
"""

import math


def bisect_root(f, lo, hi, tol=1e-15, max_iter=200):
    """Root of f on [lo, hi]; f(lo) and f(hi) must differ in sign."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0 or (hi - lo) <= tol * max(1.0, abs(mid)):
            return mid
        if (fmid > 0) == (fhi > 0):
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def lambert_w_bisect(x, tol=1e-15):
    """Principal-branch w with w * e^w = x, for x >= 0, by pure bisection."""
    if x < 0:
        raise ValueError("nonnegative arguments only")
    if x == 0.0:
        return 0.0
    return bisect_root(lambda w: w * math.exp(w) - x, 0.0, max(1.0, x), tol=tol)


def solve_const_residual_bisect(noise_power, target_snir, pmax, epsilon,
                                tol=1e-15):
    """Power floor for the constant-leftover model, found by bisection.

    Solves pmin = g*(n0 + eps*beta/2) with beta = (2/g)*ln((pmax-eps)/(pmin-eps)),
    i.e. F(pmin) = pmin - g*n0 - eps*ln((pmax-eps)/(pmin-eps)) = 0.
    The search runs in u = ln(pmin - eps) so the bracket stays well
    conditioned even when pmin hugs eps.
    """
    span = pmax - epsilon
    if span <= 0:
        raise ValueError("epsilon must stay below pmax")
    ln_span = math.log(span)

    def f(u):
        return epsilon + math.exp(u) - target_snir * noise_power \
            - epsilon * (ln_span - u)

    u = bisect_root(f, ln_span - 80.0, ln_span, tol=tol)
    pmin = epsilon + math.exp(u)
    beta = (2.0 / target_snir) * (ln_span - u)
    return pmin, beta


def adaptive_simpson(f, a, b, tol=1e-11, max_depth=50):
    """Adaptive Simpson quadrature with Richardson acceptance (abs tol)."""
    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        flmid, frmid = f(lmid), f(rmid)
        left = simpson(lo, mid, flo, flmid, fmid)
        right = simpson(mid, hi, fmid, frmid, fhi)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        half = 0.5 * eps
        return (recurse(lo, mid, flo, flmid, fmid, left, half, depth + 1)
                + recurse(mid, hi, fmid, frmid, fhi, right, half, depth + 1))

    fa, fb = f(a), f(b)
    mid = 0.5 * (a + b)
    fmid = f(mid)
    whole = simpson(a, b, fa, fmid, fb)
    return recurse(a, b, fa, fmid, fb, whole, tol, 0)
