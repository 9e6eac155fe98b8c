"""Adaptive Simpson quadrature for smooth scalar integrands."""

from .exceptions import OracleError


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=40):
    """Integrate ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Intervals are bisected until the Richardson error estimate of each
    piece falls below its share of ``tol``; the accepted pieces carry the
    extrapolated value.

    Returns
    -------
    (value, error_estimate)

    Raises
    ------
    OracleError
        If an interval still fails the test at ``max_depth``.
    """
    if a == b:
        return 0.0, 0.0
    if a > b:
        val, err = adaptive_simpson(f, b, a, tol, max_depth)
        return -val, err

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    error = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl = f(0.5 * (lo + mid))
        fr = f(0.5 * (mid + hi))
        left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi)
        delta = left + right - s
        if abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
            error += abs(delta) / 15.0
            continue
        if depth >= max_depth:
            raise OracleError(f"adaptive Simpson exceeded depth {max_depth} on [{lo}, {hi}]")
        stack.append((mid, hi, fmid, fr, fhi, right, 0.5 * eps, depth + 1))
        stack.append((lo, mid, flo, fl, fmid, left, 0.5 * eps, depth + 1))
    return total, error
