"""Green kernels of the 1-D heat and wave operators and the integrals built on them.

The heat kernel is that of ``d/dt - Laplacian/2``, i.e. the centered Gaussian
density with variance ``t``. The wave kernel is ``1/2`` on the light cone
``|x| <= t``. Each closed form here has a quadrature counterpart, and
:func:`identity_suite` checks one against the other.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate, special

from spdelab._powers import second_difference
from spdelab.errors import (
    BadTimeOrder,
    NonFiniteIntegrand,
    NonpositiveTime,
    QuadratureFailure,
)

DEFAULT_TOL_1D = 1e-10
DEFAULT_TOL_2D = 1e-7


@dataclass(frozen=True)
class IntegralResult:
    value: float
    abs_error_estimate: float
    evaluations: int

    def __float__(self):
        return float(self.value)


class _Counted:
    """Wraps an integrand, counting calls and rejecting non-finite values."""

    def __init__(self, f):
        self.f = f
        self.calls = 0

    def __call__(self, *args):
        self.calls += 1
        v = self.f(*args)
        if not np.isfinite(v):
            raise NonFiniteIntegrand(f"integrand returned {v!r} at {args!r}")
        return v


def quad_1d(f, a, b, tol=DEFAULT_TOL_1D, points=None, weight=None, wvar=None, limit=200, rtol=0.0):
    """Adaptive 1-D quadrature with error target ``max(tol, rtol * |value|)``.

    Thin wrapper over ``scipy.integrate.quad``; ``weight``/``wvar`` select its
    algebraic-singularity rules for integrands like ``(x - a)**-beta``.

    Raises
    ------
    QuadratureFailure
        If the reported error estimate exceeds the target.
    """
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    if not tol > 0:
        raise ValueError("tol must be positive")
    g = _Counted(f)
    kw = {"epsabs": tol, "epsrel": rtol, "limit": limit, "full_output": 1}
    if weight is not None:
        kw.update(weight=weight, wvar=wvar)
    elif points is not None:
        pts = [p for p in points if a < p < b]
        if pts:
            kw["points"] = pts
    out = integrate.quad(g, a, b, **kw)
    value, err = out[0], out[1]
    if not np.isfinite(value):
        raise NonFiniteIntegrand(f"quadrature returned {value!r}")
    if err > max(tol, rtol * abs(value)):
        raise QuadratureFailure(f"error estimate {err:.3e} exceeds tolerance {tol:.1e} on [{a}, {b}]")
    return IntegralResult(float(value), float(err), g.calls)


def quad_2d(f, rect, tol=DEFAULT_TOL_2D):
    """Adaptive quadrature of ``f(x, y)`` over ``rect = (x0, x1, y0, y1)``."""
    x0, x1, y0, y1 = rect
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate rectangle {rect}")
    g = _Counted(lambda y, x: f(x, y))
    value, err = integrate.dblquad(g, x0, x1, y0, y1, epsabs=tol, epsrel=0.0)
    if not np.isfinite(value):
        raise NonFiniteIntegrand(f"quadrature returned {value!r}")
    if err > tol:
        raise QuadratureFailure(f"error estimate {err:.3e} exceeds tolerance {tol:.1e}")
    return IntegralResult(float(value), float(err), g.calls)


# -- kernels -------------------------------------------------------------------

def heat_kernel(t, x, d=1):
    """Gaussian density ``exp(-|x|^2 / 2t) / (2 pi t)^(d/2)``.

    ``x`` is a scalar (its absolute value is used as the norm) or, for
    ``d > 1``, an array whose last axis holds the coordinates.
    """
    if not t > 0:
        raise NonpositiveTime(f"heat kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=float)
    r2 = x * x if d == 1 else np.sum(x * x, axis=-1)
    out = np.exp(-r2 / (2 * t)) / (2 * math.pi * t) ** (d / 2)
    return float(out) if np.ndim(out) == 0 else out


def wave_kernel(t, x):
    """``1/2`` inside the light cone ``|x| <= t``, else 0."""
    if not t > 0:
        raise NonpositiveTime(f"wave kernel needs t > 0, got {t}")
    out = np.where(np.abs(x) <= t, 0.5, 0.0)
    return float(out) if out.ndim == 0 else out


def heat_semigroup_residual(t, s, w, perturb=0.0):
    """``|int G(t, w-y) G(s, y) dy - G(t+s, w)|`` by quadrature.

    The product is a Gaussian in ``y`` centred at ``w s/(t+s)``; the
    integration window covers 40 of its standard deviations. ``perturb`` is
    added to every kernel value and exists only to exercise failure paths.
    """
    if not (t > 0 and s > 0):
        raise NonpositiveTime("semigroup residual needs t, s > 0")

    def G(tt, x):
        return heat_kernel(tt, x) + perturb

    centre = w * s / (t + s)
    width = 40 * math.sqrt(t * s / (t + s))
    res = quad_1d(lambda y: G(t, w - y) * G(s, y), centre - width, centre + width,
                  tol=1e-12, points=[centre])
    return IntegralResult(abs(res.value - G(t + s, w)), res.abs_error_estimate, res.evaluations)


def _check_order(t, s):
    if not 0 <= s < t:
        raise BadTimeOrder(f"need 0 <= s < t, got s={s}, t={t}")


def heat_ball_kernel(t, s, y, R):
    """Mass of ``G(t-s, . - y)`` on ``[-R, R]``."""
    _check_order(t, s)
    sd = math.sqrt(t - s)
    y = np.asarray(y, dtype=float)
    out = special.ndtr((R - y) / sd) - special.ndtr((-R - y) / sd)
    return float(out) if out.ndim == 0 else out


def wave_ball_kernel(t, s, y, R):
    """Integral of ``G1(t-s, x - y)`` over ``x`` in ``[-R, R]``."""
    _check_order(t, s)
    tau = t - s
    y = np.asarray(y, dtype=float)
    out = 0.5 * np.clip(np.minimum(y + tau, R) - np.maximum(y - tau, -R), 0.0, None)
    return float(out) if out.ndim == 0 else out


def wave_overlap_integral(tau, delta):
    """``int G1(tau, a-y) G1(tau, b-y) dy`` for ``|a-b| = delta``: ``(2 tau - delta)^+ / 4``."""
    out = 0.25 * np.clip(2 * np.asarray(tau, dtype=float) - np.abs(delta), 0.0, None)
    return float(out) if out.ndim == 0 else out


def wave_colored_overlap_exact(tau, delta, beta):
    """Closed form of :func:`wave_colored_overlap`.

    The double integral of ``|y - z|^-beta`` over two intervals of length
    ``2 tau`` whose centres are ``delta`` apart, times ``1/4``.
    """
    val = 0.25 * second_difference(np.abs(delta), 2 * np.asarray(tau, dtype=float), beta, 2)
    out = val.astype(float)
    return float(out) if out.ndim == 0 else out


def wave_colored_overlap(tau, delta, beta, tol=DEFAULT_TOL_1D):
    """``int int G1(tau, a-y) G1(tau, b-z) |y-z|^-beta dy dz`` with ``delta = |a-b|``.

    Substituting ``v = y - z - delta`` collapses the double integral to
    ``1/4 int_{-2tau}^{2tau} (2tau - |v|) |delta + v|^-beta dv``. The
    integrand is piecewise linear times a power, singular at ``v = -delta``
    (if inside the window), and is integrated piecewise with algebraic
    weights there.
    """
    if not tau > 0:
        raise NonpositiveTime(f"tau must be positive, got {tau}")
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    delta = abs(float(delta))
    w = 2.0 * tau
    tri = lambda v: w - abs(v)
    knots = sorted({-w, 0.0, w} | ({-delta} if delta < w else set()))
    total, err, calls = 0.0, 0.0, 0
    for lo, hi in zip(knots[:-1], knots[1:]):
        if hi <= lo:
            continue
        if hi == -delta:
            r = quad_1d(tri, lo, hi, tol=tol, weight="alg", wvar=(0.0, -beta))
        elif lo == -delta:
            r = quad_1d(tri, lo, hi, tol=tol, weight="alg", wvar=(-beta, 0.0))
        else:
            r = quad_1d(lambda v: tri(v) * abs(delta + v) ** (-beta), lo, hi, tol=tol)
        total += r.value
        err += r.abs_error_estimate
        calls += r.evaluations
    return IntegralResult(0.25 * total, 0.25 * err, calls)


def heat_colored_cov_exact(tau, w, beta):
    """Closed form of :func:`heat_colored_cov_integrand`.

    With ``sd = sqrt(2 tau)``::

        E|w - sd Z|^-beta = sd^-beta 2^(-beta/2) Gamma((1-beta)/2) / sqrt(pi)
                            * 1F1(beta/2; 1/2; -w^2 / (2 sd^2))
    """
    sd2 = 2.0 * np.asarray(tau, dtype=float)
    w = np.asarray(w, dtype=float)
    c = 2.0 ** (-beta / 2) * special.gamma((1 - beta) / 2) / math.sqrt(math.pi)
    out = c * sd2 ** (-beta / 2) * special.hyp1f1(beta / 2, 0.5, -w * w / (2 * sd2))
    return float(out) if out.ndim == 0 else out


def heat_colored_cov_integrand(tau, w, beta, tol=DEFAULT_TOL_1D):
    """``E|w - sqrt(2 tau) Z|^-beta`` for standard normal ``Z`` by quadrature.

    After scaling, the integral is ``sd^-beta int phi(z) |z0 - z|^-beta dz``
    with ``z0 = w / sd``. The unit neighbourhoods on both sides of ``z0``
    use algebraic-weight rules; the rest is a smooth Gaussian integral
    truncated at 40 standard deviations.
    """
    if not tau > 0:
        raise NonpositiveTime(f"tau must be positive, got {tau}")
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    sd = math.sqrt(2.0 * tau)
    z0 = float(w) / sd
    phi = lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    lo, hi = min(-40.0, z0 - 2.0), max(40.0, z0 + 2.0)
    pieces = [
        (lo, z0 - 1.0, None), (z0 - 1.0, z0, (0.0, -beta)),
        (z0, z0 + 1.0, (-beta, 0.0)), (z0 + 1.0, hi, None),
    ]
    total, err, calls = 0.0, 0.0, 0
    for a, b, wvar in pieces:
        if wvar is None:
            r = quad_1d(lambda z: phi(z) * abs(z0 - z) ** (-beta), a, b, tol=tol * 0.25,
                        points=[0.0])
        else:
            r = quad_1d(phi, a, b, tol=tol * 0.25, weight="alg", wvar=wvar)
        total += r.value
        err += r.abs_error_estimate
        calls += r.evaluations
    scale = sd ** (-beta)
    return IntegralResult(scale * total, scale * err, calls)


# -- identity suite ------------------------------------------------------------

@dataclass(frozen=True)
class IdentityCheck:
    name: str
    max_residual: float
    tolerance: float
    cases: int

    def __post_init__(self):
        object.__setattr__(self, "max_residual", float(self.max_residual))

    @property
    def passed(self):
        return bool(self.max_residual < self.tolerance)


def _indicator_overlap_quad(tau, delta):
    # product of two light-cone indicators (each 1/2), integrated piecewise
    f = lambda y: wave_kernel(tau, y) * wave_kernel(tau, y - delta)
    knots = sorted({-tau, tau, delta - tau, delta + tau})
    lo, hi = knots[0] - 1.0, knots[-1] + 1.0
    return quad_1d(f, lo, hi, tol=1e-13, points=knots).value


def identity_suite(perturb=0.0, seed=20240611):
    """Run the kernel identities and return a list of :class:`IdentityCheck`.

    ``perturb`` shifts the heat kernel inside the semigroup check, so a
    nonzero value must make that check fail.
    """
    checks = []

    grid_ts = np.linspace(0.01, 2.0, 5)
    grid_w = np.linspace(-5.0, 5.0, 5)
    worst = max(heat_semigroup_residual(t, s, w, perturb=perturb).value
                for t in grid_ts for s in grid_ts for w in grid_w)
    checks.append(IdentityCheck("heat semigroup", worst, 1e-8, 125))

    rng = np.random.default_rng(seed)
    taus = rng.uniform(0.05, 3.0, 100)
    deltas = rng.uniform(0.0, 6.0, 100)
    worst = max(abs(wave_overlap_integral(t, d) - _indicator_overlap_quad(t, d))
                for t, d in zip(taus, deltas))
    checks.append(IdentityCheck("wave overlap vs quadrature", worst, 1e-10, 100))

    taus = rng.uniform(0.1, 2.0, 20)
    deltas = rng.uniform(0.0, 5.0, 20)
    betas = rng.uniform(0.1, 0.9, 20)
    lam = 2.0
    worst = 0.0
    for t, d, b in zip(taus, deltas, betas):
        base = wave_colored_overlap(t, d, b).value
        scaled = wave_colored_overlap(lam * t, lam * d, b).value
        worst = max(worst, abs(scaled / (lam ** (2 - b) * base) - 1.0))
    checks.append(IdentityCheck("wave colored overlap scaling", worst, 1e-6, 20))

    worst = max(abs(wave_colored_overlap(t, d, b).value - wave_colored_overlap_exact(t, d, b))
                / wave_colored_overlap_exact(t, d, b)
                for t, d, b in zip(taus, deltas, betas))
    checks.append(IdentityCheck("wave colored overlap closed form", worst, 1e-8, 20))

    ws = rng.uniform(-4.0, 4.0, 20)
    taus = rng.uniform(0.02, 2.0, 20)
    worst = max(abs(heat_colored_cov_integrand(t, w, b).value / heat_colored_cov_exact(t, w, b) - 1.0)
                for t, w, b in zip(taus, ws, betas))
    checks.append(IdentityCheck("heat colored integrand closed form", worst, 1e-8, 20))

    ys = rng.uniform(-3.0, 3.0, 20)
    Rs = rng.uniform(0.2, 3.0, 20)
    worst = 0.0
    for y, R in zip(ys, Rs):
        q = quad_1d(lambda x: heat_kernel(0.5, x - y), -R, R, tol=1e-13).value
        worst = max(worst, abs(q - heat_ball_kernel(1.0, 0.5, y, R)))
    checks.append(IdentityCheck("heat ball kernel vs quadrature", worst, 1e-10, 20))
    return checks
