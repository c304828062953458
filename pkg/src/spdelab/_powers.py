"""Iterated antiderivatives of the Riesz power |x|^-beta.

``power_antiderivative(x, beta, k)`` returns P_k with P_0(x) = |x|^-beta and
P_k' = P_{k-1}, normalised so that P_k(0) = 0 for k >= 1. Parity alternates:
P_k is even for even k and odd for odd k.

Double integrals of the kernel over intervals reduce to second differences of
P_2, which is how every interval-interval covariance in the package is
evaluated. Differences of large, nearly equal values lose digits, so the
evaluation is carried out in extended precision.
"""

import numpy as np


def power_antiderivative(x, beta, k):
    x = np.asarray(x, dtype=np.longdouble)
    b = np.longdouble(beta)
    denom = np.longdouble(1)
    for i in range(1, k + 1):
        denom *= i - b
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        val = np.where(ax > 0, ax ** (k - b), np.longdouble(0) if k > 0 else np.inf) / denom
    if k % 2:
        val = np.sign(x) * val
    return val


def interval_pair_integral(a1, a2, b1, b2, beta):
    """Integral of |y - z|^-beta over y in [a1, a2], z in [b1, b2]."""
    F = lambda x: power_antiderivative(x, beta, 2)
    return F(np.asarray(a2) - b1) - F(np.asarray(a1) - b1) - F(np.asarray(a2) - b2) + F(np.asarray(a1) - b2)


def second_difference(x, step, beta, k):
    """P_k(x + step) + P_k(x - step) - 2 P_k(x)."""
    x = np.asarray(x, dtype=np.longdouble)
    step = np.longdouble(step)
    return (power_antiderivative(x + step, beta, k) + power_antiderivative(x - step, beta, k)
            - 2 * power_antiderivative(x, beta, k))
