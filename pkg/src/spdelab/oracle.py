"""Exact second-order theory for additive noise (sigma identically 1).

With constant noise coefficient the solution is a Gaussian field,
``u(t, x) - 1 = int int G(t-s, x-y) W(ds, dy)``, and all moments follow
from its spatial covariance

    C(w) = Cov(u(t, x), u(t, x + w)).

Everything here is built from ``C``: the variance of the spatial integral
over ``[-R, R]``, its covariance with a point value, and the 2x2 Gaussian
law of the normalised pair.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy import special

from spdelab._powers import power_antiderivative
from spdelab.errors import NonpositiveTime
from spdelab.grid_noise import WHITE, CovarianceModel
from spdelab.kernels import (
    heat_colored_cov_exact,
    heat_colored_cov_integrand,
    heat_kernel,
    quad_1d,
    wave_colored_overlap,
    wave_overlap_integral,
)

# heat covariances are below 1e-80 of their peak beyond this many sqrt(t)
_HEAT_SUPPORT = 40.0


@dataclass(frozen=True)
class ModelTag:
    equation: str
    noise: CovarianceModel = WHITE

    def __post_init__(self):
        if self.equation not in ("heat", "wave"):
            raise ValueError(f"equation must be 'heat' or 'wave', got {self.equation!r}")

    @property
    def beta(self):
        return self.noise.beta

    def describe(self):
        return f"{self.equation}/{self.noise.describe()}"


HEAT_WHITE = ModelTag("heat")
WAVE_WHITE = ModelTag("wave")


def heat_riesz(alpha):
    return ModelTag("heat", CovarianceModel(float(alpha)))


def wave_riesz(alpha):
    return ModelTag("wave", CovarianceModel(float(alpha)))


def _check_t(t):
    if not t > 0:
        raise NonpositiveTime(f"t must be positive, got {t}")


def _heat_white_cov(t, w):
    # int_0^t G(2s, w) ds in closed form
    w = abs(w)
    return (math.sqrt(t / math.pi) * math.exp(-w * w / (4 * t))
            - 0.5 * w * special.erfc(w / (2 * math.sqrt(t))))


def _heat_riesz_cov(t, w, beta):
    w = abs(w)
    if w == 0.0:
        c = 2.0 ** (-beta) * special.gamma((1 - beta) / 2) / math.sqrt(math.pi)
        return c * t ** (1 - beta / 2) / (1 - beta / 2)
    # s = u^2 turns the s^(-beta/2) behaviour above the layer s ~ w^2 into a
    # bounded integrand; the layer itself sits near u ~ w
    pts = [w * f for f in (1 / 8, 1 / 4, 1 / 2, 1.0, 2.0)]
    f = lambda u: 2 * u * heat_colored_cov_exact(u * u, w, beta)
    return quad_1d(f, 0.0, math.sqrt(t), tol=1e-15, rtol=1e-11, points=pts, limit=400).value


def _wave_white_cov(t, w):
    r = max(0.0, 2 * t - abs(w))
    return r * r / 16


def _wave_riesz_cov(t, w, beta):
    # int_0^t (1/4)[P2(w+2s) + P2(w-2s) - 2 P2(w)] ds
    w = np.longdouble(abs(w))
    t = np.longdouble(t)
    P3 = lambda x: power_antiderivative(x, beta, 3)
    P2 = lambda x: power_antiderivative(x, beta, 2)
    return float((P3(w + 2 * t) - P3(w - 2 * t)) / 8 - t * P2(w) / 2)


def pointwise_cov(model, t, w, method="closed"):
    """``Cov(u(t, x), u(t, x + w))`` for sigma identically 1.

    ``method="closed"`` uses the closed forms (with one 1-D quadrature over
    time for colored heat); ``method="quad"`` integrates the kernel
    identities over time by quadrature and serves as the cross-check.
    """
    _check_t(t)
    beta = model.beta
    white = model.noise.is_white
    if method == "closed":
        if model.equation == "heat":
            return _heat_white_cov(t, w) if white else _heat_riesz_cov(t, w, beta)
        return _wave_white_cov(t, w) if white else _wave_riesz_cov(t, w, beta)
    if method != "quad":
        raise ValueError(f"unknown method {method!r}")
    w = abs(float(w))
    if model.equation == "heat":
        if white:
            f = lambda s: heat_kernel(2 * s, w)
        else:
            f = lambda s: heat_colored_cov_integrand(s, w, beta, tol=1e-12).value
        return quad_1d(f, 0.0, t, tol=1e-11, limit=400).value
    if white:
        f = lambda s: wave_overlap_integral(s, w)
        return quad_1d(f, 0.0, t, tol=1e-12, points=[w / 2]).value
    f = lambda s: wave_colored_overlap(s, w, beta, tol=1e-12).value
    return quad_1d(f, 0.0, t, tol=1e-11, points=[w / 2]).value


def _cov_breaks(model, t):
    # points where C(h) is not smooth
    return [0.0] if model.equation == "heat" else [0.0, 2 * t]


def _cov_reach(model, t):
    """Distance beyond which ``C`` is negligible, or inf for long-range noise."""
    if not model.noise.is_white:
        return math.inf
    return _HEAT_SUPPORT * math.sqrt(t) if model.equation == "heat" else 2 * t


def _integrate_cov(model, t, weight, a, b):
    reach = _cov_reach(model, t)
    a, b = max(a, -reach), min(b, reach)
    if b <= a:
        return 0.0
    f = lambda h: weight(h) * pointwise_cov(model, t, h)
    pts = _cov_breaks(model, t) + [-p for p in _cov_breaks(model, t)]
    res = quad_1d(f, a, b, tol=1e-14, rtol=1e-10, points=pts, limit=1000)
    return res.value


@lru_cache(maxsize=4096)
def sigma_R_exact(model, t, R):
    """Standard deviation of ``int_{-R}^{R} (u(t, x) - 1) dx`` for sigma identically 1.

    Uses ``Var = 2 int_0^{2R} (2R - h) C(h) dh``.
    """
    _check_t(t)
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    var = 2.0 * _integrate_cov(model, t, lambda h: 2 * R - h, 0.0, 2 * R)
    return math.sqrt(var)


@lru_cache(maxsize=4096)
def window_cov(model, t, R, x0):
    """``Cov(int_{-R}^{R} u(t, x) dx, u(t, x0)) = int_{-R}^{R} C(x - x0) dx``."""
    _check_t(t)
    return _integrate_cov(model, t, lambda h: 1.0, -R - x0, R - x0)


def cov_FRu_exact(model, t, R, x0):
    """Covariance of the normalised average ``F_R`` with ``u(t, x0)``."""
    return window_cov(model, t, R, x0) / sigma_R_exact(model, t, R)


def white_limit(model, t):
    """``int C(h) dh``: the R -> infinity limit of ``sigma_R * cov_FRu`` for white noise.

    Heat gives ``t``; wave gives ``t^3 / 3``.
    """
    if not model.noise.is_white:
        raise ValueError("the limit is finite only for white noise")
    return t if model.equation == "heat" else t ** 3 / 3


@dataclass(frozen=True)
class JointLaw2:
    """Gaussian law of ``(F_R(t), u(t, x0))``, mean ``(0, 1)``, covariance ``cov``."""

    cov: np.ndarray
    model: ModelTag
    t: float
    R: float
    x0: float

    @property
    def rho(self):
        return float(self.cov[0, 1])

    @property
    def correlation(self):
        return float(self.cov[0, 1] / math.sqrt(self.cov[0, 0] * self.cov[1, 1]))

    @property
    def point_variance(self):
        return float(self.cov[1, 1])

    def product(self):
        """The law with the same marginals and zero correlation."""
        cov = np.diag(np.diag(self.cov))
        cov.setflags(write=False)
        return JointLaw2(cov, self.model, self.t, self.R, self.x0)

    def sample(self, n, rng):
        """``n`` draws of ``(F_R, u(t, x0))`` as an (n, 2) array."""
        L = np.linalg.cholesky(self.cov)
        out = rng.standard_normal((n, 2)) @ L.T
        out[:, 1] += 1.0
        return out


def joint_gaussian_law(model, t, R, x0):
    """Exact 2x2 law ``[[1, rho], [rho, v]]`` with ``v = C(0)``."""
    rho = cov_FRu_exact(model, t, R, x0)
    v = pointwise_cov(model, t, 0.0)
    cov = np.array([[1.0, rho], [rho, v]])
    cov.setflags(write=False)
    return JointLaw2(cov, model, float(t), float(R), float(x0))


def gaussian_w1(s1, s2):
    """W1 between ``N(0, s1^2)`` and ``N(0, s2^2)``: ``|s1 - s2| sqrt(2/pi)``."""
    if s1 < 0 or s2 < 0:
        raise ValueError("standard deviations must be nonnegative")
    return abs(s1 - s2) * math.sqrt(2 / math.pi)
