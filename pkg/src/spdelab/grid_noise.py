"""Space-time lattices and seeded Gaussian noise increments.

The spatial grid is periodic with ``cell_count`` points ``x_j = -L + j*dx``.
Two noise models are supported: space-time white noise, and noise that is
white in time with spatial covariance given by the Riesz kernel
``|x|^-(1-alpha)``. They are separate code paths; no ``alpha -> 0`` limit is
ever taken.

Every random draw is addressed by ``(master_seed, replica_index,
step_index)``. The triple is the key and counter of a Philox stream, so any
slice can be regenerated in isolation, in any order, on any thread.
"""

from dataclasses import dataclass
from functools import lru_cache
import logging
import math

import numpy as np
from scipy import fft as sfft, special

from spdelab._powers import interval_pair_integral, power_antiderivative
from spdelab.errors import (
    DomainTooSmall,
    NegativeSpectrumClipped,
    NonIntegerCount,
    StabilityViolation,
    ZeroFrequency,
)

log = logging.getLogger(__name__)

EQUATIONS = ("heat", "wave")
HEAT_CFL_MARGIN = 0.9
HEAT_TAIL_SIGMAS = 6.0
CLIP_TOLERANCE = 1e-6

_UINT64 = (1 << 64) - 1
# fourth Philox counter word separates independent uses of the same key
NOISE_STREAM = 0
PERMUTATION_STREAM = 1
SAMPLING_STREAM = 2


@dataclass(frozen=True)
class CovarianceModel:
    """White noise when ``alpha`` is None, Riesz noise with exponent ``alpha`` otherwise."""

    alpha: float | None = None

    def __post_init__(self):
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"Riesz alpha must lie in (0, 1) in one dimension, got {self.alpha}")

    @property
    def is_white(self):
        return self.alpha is None

    @property
    def beta(self):
        """Decay exponent of the spatial covariance; 1 means white."""
        return 1.0 if self.alpha is None else 1.0 - self.alpha

    def describe(self):
        return "white" if self.alpha is None else f"riesz(alpha={self.alpha!r})"


WHITE = CovarianceModel()


def riesz(alpha):
    return CovarianceModel(float(alpha))


@dataclass(frozen=True)
class GridSpec:
    half_width: float
    cell_width: float
    horizon: float
    step: float
    radius: float
    observation_point: float
    cell_count: int
    step_count: int
    equation: str

    @property
    def x(self):
        return -self.half_width + self.cell_width * np.arange(self.cell_count)

    @property
    def times(self):
        return self.step * np.arange(self.step_count + 1)

    def time_index(self, t):
        """Index n with n*dt == t, or None when t is not on the time grid."""
        n = t / self.step
        k = int(round(n))
        if abs(n - k) > 1e-9 * max(1.0, abs(n)) or not 0 <= k <= self.step_count:
            return None
        return k

    def nearest_index(self, x0):
        return int(round((x0 + self.half_width) / self.cell_width)) % self.cell_count

    def as_dict(self):
        return {
            "equation": self.equation, "half_width": self.half_width,
            "cell_width": self.cell_width, "horizon": self.horizon, "step": self.step,
            "radius": self.radius, "observation_point": self.observation_point,
            "cell_count": self.cell_count, "step_count": self.step_count,
        }


def _as_count(value, what):
    k = int(round(value))
    if k <= 0 or abs(value - k) > 1e-9 * max(1.0, abs(value)):
        raise NonIntegerCount(f"{what} = {value!r} is not an integer")
    return k


def required_half_width(equation, horizon, radius, x0):
    if equation == "wave":
        return radius + horizon + abs(x0)
    return radius + abs(x0) + HEAT_TAIL_SIGMAS * math.sqrt(2.0 * horizon)


def build_grid(L, dx, T, dt, R, x0, equation):
    """Validate lattice parameters and return a :class:`GridSpec`.

    Heat grids need ``dt <= 0.9 * dx**2 / 2`` and a Gaussian-tail margin
    ``L >= R + |x0| + 6*sqrt(2T)``. Wave grids need ``dt == dx`` and
    ``L >= R + T + |x0|`` so that the boundary never reaches the observed
    region.
    """
    if equation not in EQUATIONS:
        raise ValueError(f"equation must be one of {EQUATIONS}, got {equation!r}")
    for name, v in (("L", L), ("dx", dx), ("T", T), ("dt", dt), ("R", R)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v!r}")
    cells = _as_count(2 * L / dx, "2L/dx")
    if cells % 2:
        raise NonIntegerCount(f"cell count {cells} must be even")
    steps = _as_count(T / dt, "T/dt")
    if equation == "heat":
        if dt > HEAT_CFL_MARGIN * dx * dx / 2 * (1 + 1e-12):
            raise StabilityViolation(
                f"explicit heat scheme needs dt <= {HEAT_CFL_MARGIN}*dx^2/2 = "
                f"{HEAT_CFL_MARGIN * dx * dx / 2:.6g}, got dt = {dt:.6g}")
    elif abs(dt - dx) > 1e-12 * dx:
        raise StabilityViolation(f"wave scheme runs on characteristics, dt must equal dx ({dt} != {dx})")
    need = required_half_width(equation, T, R, x0)
    if L < need * (1 - 1e-12):
        raise DomainTooSmall(f"half-width {L} below required {need:.6g} for {equation}")
    return GridSpec(float(L), float(dx), float(T), float(dt), float(R), float(x0),
                    cells, steps, equation)


def fit_grid(equation, dx, T, R, x0=0.0):
    """Smallest valid grid for the given resolution, horizon and radius.

    The half-width is rounded up to a multiple of ``dx`` and, for heat, the
    time step is the largest divisor of ``T`` under the stability bound.
    """
    if not (dx > 0 and T > 0 and R > 0):
        raise ValueError(f"dx, T and R must be positive, got {dx}, {T}, {R}")
    L = math.ceil(required_half_width(equation, T, R, x0) / dx - 1e-9) * dx
    if equation == "heat":
        dt = T / math.ceil(T / (HEAT_CFL_MARGIN * dx * dx / 2) - 1e-9)
    else:
        dt = dx
    return build_grid(L, dx, T, dt, R, x0, equation)


# -- seeding -----------------------------------------------------------------

@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replica_index: int
    step_index: int


def stream(master_seed, replica_index, step_index, purpose=NOISE_STREAM):
    """Generator for one addressed substream.

    Philox is a keyed bijection on its counter, so the key
    ``(master_seed, replica_index)`` with counter words ``(step_index,
    purpose)`` gives reproducible, non-overlapping streams.
    """
    key = np.array([master_seed & _UINT64, replica_index & _UINT64], dtype=np.uint64)
    counter = np.array([0, 0, step_index & _UINT64, purpose], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def standard_normals(master_seed, replicas, step_index, size):
    """(len(replicas), size) block; row i is the stream of ``replicas[i]``."""
    out = np.empty((len(replicas), size))
    for i, r in enumerate(replicas):
        stream(master_seed, int(r), step_index).standard_normal(size, out=out[i])
    return out


@dataclass(frozen=True)
class NoiseSlice:
    step_index: int
    values: np.ndarray


# -- white noise ---------------------------------------------------------------

def white_slice(grid, seed_spec):
    """Cell increments W([t_n, t_n+dt] x cell_j), independent N(0, dt*dx)."""
    z = stream(seed_spec.master_seed, seed_spec.replica_index, seed_spec.step_index).standard_normal(grid.cell_count)
    return NoiseSlice(seed_spec.step_index, z * math.sqrt(grid.step * grid.cell_width))


# -- Riesz noise ---------------------------------------------------------------

def riesz_spectrum(alpha, xi):
    """Spectral density S with |x|^-(1-alpha) = int S(xi) exp(i xi x) d xi.

    S(xi) = Gamma(alpha) cos(pi alpha / 2) / pi * |xi|^-alpha.
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(xi == 0):
        raise ZeroFrequency("Riesz spectral density is singular at xi = 0")
    c = special.gamma(alpha) * math.cos(math.pi * alpha / 2) / math.pi
    out = c * np.abs(xi) ** (-alpha)
    return float(out) if out.ndim == 0 else out


def cell_avg_riesz(alpha, dx, lag):
    """Riesz covariance averaged over two cells of width dx, ``lag`` cells apart.

    Equals dx^-2 times the double integral of |y - z|^-(1-alpha) over the two
    cells, evaluated as a second difference of the kernel's second
    antiderivative (exact, no quadrature).
    """
    beta = 1.0 - alpha
    lag = np.abs(np.asarray(lag, dtype=float))
    u = lag.astype(np.longdouble)
    val = (power_antiderivative(u + 1, beta, 2) + power_antiderivative(u - 1, beta, 2)
           - 2 * power_antiderivative(u, beta, 2))
    out = (val * np.longdouble(dx) ** (-beta)).astype(float)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CirculantRoot:
    """Square root of a circulant embedding spectrum, ready for FFT synthesis."""

    root: np.ndarray  # rfft-domain, shape (M//2+1,) or (M//2+1, k, k)
    size: int
    clipped_mass: float
    total_mass: float


def _rfft_multiplicity(M):
    # interior frequencies appear twice in the full spectrum
    w = np.full(M // 2 + 1, 2.0)
    w[0] = 1.0
    if M % 2 == 0:
        w[-1] = 1.0
    return w


def _check_clip(clipped, total):
    if clipped > CLIP_TOLERANCE * total:
        raise NegativeSpectrumClipped(clipped, total)
    if clipped > 0:
        log.info("circulant embedding: clipped negative mass %.3e of %.3e", clipped, total)


def embedding_size(cell_count):
    """Smallest FFT-friendly circulant size of at least twice the grid length."""
    return sfft.next_fast_len(2 * cell_count, real=True)


@lru_cache(maxsize=32)
def riesz_embedding(alpha, dx, cell_count):
    """Circulant embedding (size about 2N) of the cell-averaged Riesz covariance."""
    M = embedding_size(cell_count)
    m = np.arange(M)
    c = cell_avg_riesz(alpha, dx, np.minimum(m, M - m))
    lam = sfft.rfft(c).real
    neg = lam < 0
    w = _rfft_multiplicity(M)
    clipped = 0.0 + float(-(w * lam)[neg].sum())
    total = float((w * np.abs(lam)).sum())
    _check_clip(clipped, total)
    root = np.sqrt(np.where(neg, 0.0, lam))
    root.setflags(write=False)
    return CirculantRoot(root, M, clipped, total)


def riesz_from_normals(z, grid, alpha):
    """Map standard normals of shape (..., M) to cell-averaged Riesz increments."""
    emb = riesz_embedding(alpha, grid.cell_width, grid.cell_count)
    x = sfft.irfft(emb.root * sfft.rfft(z, axis=-1), n=emb.size, axis=-1)
    return x[..., :grid.cell_count] * math.sqrt(grid.step)


def colored_slice(grid, alpha, seed_spec):
    """Cell-averaged Riesz increments with covariance dt * k_alpha(lag).

    Values are W([t_n, t_n+dt] x cell_j) / dx, synthesised by spectral
    sampling of a circulant embedding on a domain twice the grid length.
    """
    emb = riesz_embedding(alpha, grid.cell_width, grid.cell_count)
    z = stream(seed_spec.master_seed, seed_spec.replica_index, seed_spec.step_index).standard_normal(emb.size)
    return NoiseSlice(seed_spec.step_index, riesz_from_normals(z, grid, alpha))


# -- wave slabs -----------------------------------------------------------------
#
# With dt == dx the two diagonals of each cell-by-slab square split it into
# four triangles: bottom, top, left and right. Characteristic diamonds of the
# wave lattice are unions of such triangles, so simulating the four triangle
# integrals per cell gives the diamond integrals exactly.

BOTTOM, TOP, LEFT, RIGHT = range(4)

# cross-sections (lo, hi) at local time tau within a slab of height h, as
# affine functions (p*h + q*tau); first half tau < h/2, second half tau > h/2
_SECTIONS = (
    {BOTTOM: ((0, 1), (1, -1)), LEFT: ((0, 0), (0, 1)), RIGHT: ((1, -1), (1, 0))},
    {TOP: ((1, -1), (0, 1)), LEFT: ((0, 0), (1, -1)), RIGHT: ((0, 1), (1, 0))},
)


def _affine_power_integral(p, q, t0, t1, beta):
    # integral over tau in [t0, t1] of P_2(p + q tau)
    if q == 0:
        return power_antiderivative(p, beta, 2) * np.longdouble(t1 - t0)
    return (power_antiderivative(p + q * np.longdouble(t1), beta, 3)
            - power_antiderivative(p + q * np.longdouble(t0), beta, 3)) / q


def triangle_covariance(h, beta, lags):
    """Cov(X_a(m), X_b(0)) for the four triangle integrals, shape (len(lags), 4, 4).

    X_a(m) is the Riesz-noise integral over triangle ``a`` of cell ``m``.
    """
    lags = np.asarray(lags)
    out = np.zeros((lags.size, 4, 4), dtype=np.longdouble)
    hl = np.longdouble(h)
    for half, (t0, t1) in enumerate(((0.0, h / 2), (h / 2, h))):
        sec = _SECTIONS[half]
        for a, (a_lo, a_hi) in sec.items():
            for b, (b_lo, b_hi) in sec.items():
                off = lags.astype(np.longdouble) * hl
                total = np.zeros(lags.size, dtype=np.longdouble)
                for (ea, eb, sgn) in ((a_hi, b_lo, 1), (a_lo, b_lo, -1), (a_hi, b_hi, -1), (a_lo, b_hi, 1)):
                    p = off + (ea[0] - eb[0]) * hl
                    q = ea[1] - eb[1]
                    total += sgn * _affine_power_integral(p, q, t0, t1, beta)
                out[:, a, b] += total
    return out.astype(float)


@lru_cache(maxsize=16)
def triangle_embedding(alpha, h, cell_count):
    """Principal square root of the 4-variate circulant spectrum of triangle noise."""
    M = embedding_size(cell_count)
    m = np.arange(M)
    lag = np.where(m <= M // 2, m, m - M)
    G = triangle_covariance(h, 1.0 - alpha, lag)
    S = sfft.fft(G, axis=0)[: M // 2 + 1]
    S = 0.5 * (S + np.conj(np.swapaxes(S, 1, 2)))
    lam, V = np.linalg.eigh(S)
    neg = lam < 0
    w = _rfft_multiplicity(M)
    clipped = 0.0 + float(-(w[:, None] * np.where(neg, lam, 0.0)).sum())
    total = float((w[:, None] * np.abs(lam)).sum())
    _check_clip(clipped, total)
    root = (V * np.sqrt(np.where(neg, 0.0, lam))[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))
    # stored as (a, b, frequency) for the synthesis loop
    root = np.ascontiguousarray(np.moveaxis(root, 0, -1))
    root.setflags(write=False)
    return CirculantRoot(root, M, clipped, total)


def triangle_from_normals(z, grid, covariance):
    """Map standard normals to triangle integrals, shape (..., 4, N).

    White noise needs ``z`` of shape (..., 4, N); Riesz noise (..., 4, M)
    with M the embedding size.
    """
    h = grid.cell_width
    if covariance.is_white:
        return z * (h / 2.0)
    emb = triangle_embedding(covariance.alpha, h, grid.cell_count)
    Z = sfft.rfft(z, axis=-1)
    Y = np.empty_like(Z)
    for a in range(4):
        acc = emb.root[a, 0] * Z[..., 0, :]
        for b in range(1, 4):
            acc += emb.root[a, b] * Z[..., b, :]
        Y[..., a, :] = acc
    return sfft.irfft(Y, n=emb.size, axis=-1)[..., :grid.cell_count]


def triangle_normals_size(grid, covariance):
    return 4 * (grid.cell_count if covariance.is_white else embedding_size(grid.cell_count))


def triangle_slab(grid, covariance, seed_spec):
    """Noise integrals over the four triangles of every cell in one slab.

    Cells are [x_j, x_j + dx]; the result has shape (4, N) ordered bottom,
    top, left, right. White triangles are independent N(0, dx^2/4).
    """
    size = triangle_normals_size(grid, covariance)
    z = stream(seed_spec.master_seed, seed_spec.replica_index, seed_spec.step_index).standard_normal(size)
    return triangle_from_normals(z.reshape(4, -1), grid, covariance)
