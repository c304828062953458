"""Explicit solvers for the 1-D stochastic heat and wave equations.

Both equations start from ``u(0, x) = 1`` (and zero initial velocity for the
wave equation) and are driven by ``sigma(u) W(dt, dx)``.

Heat, ``du = u_xx/2 dt + sigma(u) dW``, uses forward Euler in time and
central differences in space. The noise enters as cell-averaged increments
``W([t_n, t_n + dt] x cell_j) / dx``.

Wave, ``u_tt = u_xx + sigma(u) dW``, uses the characteristic lattice
``dt = dx = h``. Each grid cell times each time slab is cut by its two
diagonals into four triangles, and the noise integral over every triangle is
simulated exactly. The update

    u[n+1, j] = u[n, j+1] + u[n, j-1] - u[n-1, j]
                + (sigma(u[n-1, j]) lower[n-1, j] + sigma(u[n, j]) upper[n, j]) / 2

adds the noise over the characteristic diamond below ``(t_{n+1}, x_j)``.
With constant sigma this reproduces the mild solution exactly at the grid
nodes.

Ensembles are computed in fixed chunks of replicas. Each replica draws its
noise from its own counter-based stream, so the result does not depend on
chunk scheduling or thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import hashlib
import json
import math

import numpy as np

from spdelab import grid_noise as gn
from spdelab.errors import NaNDetected, OffGridTime, OutOfDomain, StabilityViolation

BOUNDARIES = ("periodic", "dirichlet")
CHUNK = 250


# -- noise coefficients ----------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    c: float = 1.0

    def __call__(self, u):
        return np.full_like(u, self.c)

    @property
    def lipschitz_constant(self):
        return 0.0

    def describe(self):
        return f"constant({self.c!r})"


@dataclass(frozen=True)
class Affine:
    """``a + b u``."""

    a: float
    b: float

    def __call__(self, u):
        return self.a + self.b * u

    @property
    def lipschitz_constant(self):
        return abs(self.b)

    def describe(self):
        return f"affine({self.a!r},{self.b!r})"


@dataclass(frozen=True)
class SmoothBounded:
    """``c0 + c1 sin(u)``."""

    c0: float
    c1: float

    def __call__(self, u):
        return self.c0 + self.c1 * np.sin(u)

    @property
    def lipschitz_constant(self):
        return abs(self.c1)

    def describe(self):
        return f"smooth({self.c0!r},{self.c1!r})"


def parse_sigma(text):
    """Parse ``constant(c)``, ``affine(a,b)`` or ``smooth(c0,c1)``."""
    text = text.strip().lower().replace(" ", "")
    name, _, rest = text.partition("(")
    if not rest.endswith(")"):
        raise ValueError(f"cannot parse sigma {text!r}")
    args = [float(v) for v in rest[:-1].split(",") if v]
    kinds = {"constant": (Constant, 1), "affine": (Affine, 2), "smooth": (SmoothBounded, 2)}
    if name not in kinds or len(args) != kinds[name][1]:
        raise ValueError(f"cannot parse sigma {text!r}")
    return kinds[name][0](*args)


def is_additive_unit(sigma):
    return isinstance(sigma, Constant) and sigma.c == 1.0


# -- configuration and results ----------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    grid: gn.GridSpec
    noise: gn.CovarianceModel = gn.WHITE
    sigma: object = Constant(1.0)
    boundary: str = "periodic"

    def __post_init__(self):
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")

    def as_dict(self):
        return {"grid": self.grid.as_dict(), "noise": self.noise.describe(),
                "sigma": self.sigma.describe(), "boundary": self.boundary}

    @property
    def config_hash(self):
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class SolutionField:
    values: np.ndarray  # (step_count + 1, cell_count)
    grid: gn.GridSpec
    config_hash: str
    master_seed: int
    replica_index: int


@dataclass(frozen=True)
class ObservationPair:
    a_R: float
    u0: float


@dataclass(frozen=True)
class SampleSet:
    """Replicas of ``(int_{-R}^{R} (u(t,x) - 1) dx, u(t, x0))``."""

    a: np.ndarray
    u0: np.ndarray
    R: float
    t: float
    x0: float
    master_seed: int
    config_hash: str

    @property
    def n(self):
        return len(self.a)

    @property
    def pairs(self):
        return [ObservationPair(float(x), float(y)) for x, y in zip(self.a, self.u0)]


# -- observation ------------------------------------------------------------------

def window_weights(grid, R):
    """Weights ``w`` with ``w @ u`` equal to the integral over ``[-R, R]`` of the
    piecewise-linear interpolant of ``u`` (trapezoid rule with interpolated ends).
    """
    if R + 0.0 > grid.half_width - grid.cell_width * (1 - 1e-9):
        raise OutOfDomain(f"window [-{R}, {R}] does not fit in half-width {grid.half_width}")
    x = grid.x
    h = grid.cell_width
    left, right = x[:-1], x[1:]
    p = np.clip(left, -R, R)
    q = np.clip(right, -R, R)
    # integral over [p, q] of the hat functions anchored at left and right nodes
    wl = ((right - p) ** 2 - (right - q) ** 2) / (2 * h)
    wr = ((q - left) ** 2 - (p - left) ** 2) / (2 * h)
    w = np.zeros(grid.cell_count)
    w[:-1] += wl
    w[1:] += wr
    return w


def _window_slice(weights):
    nz = np.flatnonzero(weights)
    return slice(int(nz[0]), int(nz[-1]) + 1)


def _check_point(grid, x0, R):
    if abs(x0) > grid.half_width - grid.cell_width:
        raise OutOfDomain(f"x0 = {x0} outside the grid")
    if R + abs(x0) > grid.half_width:
        raise OutOfDomain(f"R + |x0| = {R + abs(x0)} exceeds half-width {grid.half_width}")


def _step_of(grid, t):
    n = grid.time_index(t)
    if n is None:
        raise OffGridTime(f"t = {t} is not a multiple of dt = {grid.step} within [0, {grid.horizon}]")
    return n


def observe(field, t, R, x0):
    """Trapezoid integral of ``u(t, .) - 1`` over ``[-R, R]`` and ``u(t, x0)``.

    ``x0`` snaps to the nearest grid point.
    """
    grid = field.grid
    n = _step_of(grid, t)
    _check_point(grid, x0, R)
    w = window_weights(grid, R)
    row = field.values[n]
    sl = _window_slice(w)
    a = float(np.dot(row[sl] - 1.0, w[sl]))
    return ObservationPair(a, float(row[grid.nearest_index(x0)]))


# -- time stepping ----------------------------------------------------------------

def _check_config(config, equation):
    g = config.grid
    if g.equation != equation:
        raise ValueError(f"config grid is for {g.equation}, not {equation}")
    if equation == "heat" and g.step > gn.HEAT_CFL_MARGIN * g.cell_width ** 2 / 2 * (1 + 1e-12):
        raise StabilityViolation("heat step above stability bound")
    if equation == "wave" and abs(g.step - g.cell_width) > 1e-12 * g.cell_width:
        raise StabilityViolation("wave step must equal cell width")


def _sigma_times(sigma, u, noise):
    if isinstance(sigma, Constant):
        return noise if sigma.c == 1.0 else sigma.c * noise
    return sigma(u) * noise


def _guard(u, step, replicas):
    if not np.isfinite(u).all():
        bad = int(np.flatnonzero(~np.isfinite(u).all(axis=1))[0])
        raise NaNDetected(step, int(replicas[bad]))


def _heat_noise(config, master_seed, replicas, n):
    g = config.grid
    if config.noise.is_white:
        z = gn.standard_normals(master_seed, replicas, n, g.cell_count)
        # increment / dx, with increment ~ N(0, dt dx)
        return z * math.sqrt(g.step / g.cell_width)
    z = gn.standard_normals(master_seed, replicas, n, gn.embedding_size(g.cell_count))
    return gn.riesz_from_normals(z, g, config.noise.alpha)


def _heat_batch(config, master_seed, replicas, keep_steps):
    g = config.grid
    r = g.step / (2 * g.cell_width ** 2)
    u = np.ones((len(replicas), g.cell_count))
    kept = {0: u.copy()} if 0 in keep_steps else {}
    dirichlet = config.boundary == "dirichlet"
    for n in range(g.step_count):
        xi = _heat_noise(config, master_seed, replicas, n)
        lap = np.roll(u, -1, axis=1) + np.roll(u, 1, axis=1) - 2 * u
        u = u + r * lap + _sigma_times(config.sigma, u, xi)
        if dirichlet:
            u[:, 0] = 1.0
            u[:, -1] = 1.0
        _guard(u, n + 1, replicas)
        if n + 1 in keep_steps:
            kept[n + 1] = u.copy()
    return kept


def _wave_noise(config, master_seed, replicas, n, mask):
    g = config.grid
    size = gn.triangle_normals_size(g, config.noise)
    z = gn.standard_normals(master_seed, replicas, n, size).reshape(len(replicas), 4, -1)
    tri = gn.triangle_from_normals(z, g, config.noise)
    if mask is not None:
        tri = tri * mask
    B, T, Lf, Rt = tri[:, 0], tri[:, 1], tri[:, 2], tri[:, 3]
    # node j collects triangles of cells j-1 and j
    upper = B + Lf + np.roll(B + Rt, 1, axis=1)
    lower = T + Lf + np.roll(T + Rt, 1, axis=1)
    return upper, lower


def _wave_batch(config, master_seed, replicas, keep_steps, mask=None):
    g = config.grid
    sigma = config.sigma
    dirichlet = config.boundary == "dirichlet"
    prev = np.ones((len(replicas), g.cell_count))
    kept = {0: prev.copy()} if 0 in keep_steps else {}
    if g.step_count == 0:
        return kept
    upper, lower_prev = _wave_noise(config, master_seed, replicas, 0, mask)
    cur = prev + 0.5 * _sigma_times(sigma, prev, upper)
    if dirichlet:
        cur[:, 0] = cur[:, -1] = 1.0
    _guard(cur, 1, replicas)
    if 1 in keep_steps:
        kept[1] = cur.copy()
    for n in range(1, g.step_count):
        upper, lower = _wave_noise(config, master_seed, replicas, n, mask)
        nxt = (np.roll(cur, -1, axis=1) + np.roll(cur, 1, axis=1) - prev
               + 0.5 * (_sigma_times(sigma, prev, lower_prev) + _sigma_times(sigma, cur, upper)))
        if dirichlet:
            nxt[:, 0] = nxt[:, -1] = 1.0
        _guard(nxt, n + 1, replicas)
        prev, cur, lower_prev = cur, nxt, lower
        if n + 1 in keep_steps:
            kept[n + 1] = cur.copy()
    return kept


def _field(config, master_seed, replica_index, batch, **kw):
    g = config.grid
    kept = batch(config, master_seed, np.array([replica_index]), set(range(g.step_count + 1)), **kw)
    values = np.stack([kept[n][0] for n in range(g.step_count + 1)])
    return SolutionField(values, g, config.config_hash, master_seed, replica_index)


def solve_heat_1d(config, replica_index, master_seed=0):
    """Simulate one heat replica; returns every time row."""
    _check_config(config, "heat")
    return _field(config, master_seed, replica_index, _heat_batch)


def cone_mask(grid, x0, t):
    """Cells whose centres lie within distance ``t`` of ``x0``."""
    centres = grid.x + grid.cell_width / 2
    return (np.abs(centres - x0) <= t).astype(float)


def solve_wave_1d(config, replica_index, master_seed=0, noise_mask=None):
    """Simulate one wave replica; returns every time row.

    ``noise_mask`` (one weight per cell) multiplies the triangle noise of
    every slab, e.g. :func:`cone_mask` to switch off noise outside a light
    cone.
    """
    _check_config(config, "wave")
    mask = None if noise_mask is None else np.asarray(noise_mask, dtype=float)
    return _field(config, master_seed, replica_index, _wave_batch, mask=mask)


# -- exact moments of the discrete schemes -----------------------------------------

@dataclass(frozen=True)
class SchemeMoments:
    """Exact second moments of the discrete observation pair under additive noise."""

    var_a: float
    cov_a_u0: float
    var_u0: float


def _heat_noise_cov_apply(config, v):
    g = config.grid
    if config.noise.is_white:
        return v * (g.step / g.cell_width)
    # cell-averaged Riesz increments: Toeplitz covariance dt * k(|i - j|)
    N = g.cell_count
    k = gn.cell_avg_riesz(config.noise.alpha, g.cell_width, np.arange(N))
    c = np.concatenate([k, [0.0], k[:0:-1]])
    return g.step * np.fft.irfft(np.fft.rfft(c) * np.fft.rfft(v, n=2 * N), n=2 * N)[:N]


def scheme_moments(config, t, R, x0):
    """Exact ``Var(a_R)``, ``Cov(a_R, u0)`` and ``Var(u0)`` of the discrete scheme.

    Only for ``sigma = constant(1)`` and periodic boundaries, where the scheme
    is linear in the noise. Heat moments come from propagating the two linear
    functionals backwards through the explicit stencil. The wave lattice is
    exact at the nodes, so its moments are quadratic forms of the continuum
    covariance evaluated on the grid.
    """
    if not is_additive_unit(config.sigma):
        raise ValueError("scheme moments need sigma = constant(1)")
    g = config.grid
    n_obs = _step_of(g, t)
    _check_point(g, x0, R)
    w = window_weights(g, R)
    e = np.zeros(g.cell_count)
    e[g.nearest_index(x0)] = 1.0
    if g.equation == "wave":
        from spdelab import oracle
        model = oracle.ModelTag("wave", config.noise)
        lags = np.arange(g.cell_count) * g.cell_width
        c = np.array([oracle.pointwise_cov(model, t, h) for h in lags])
        C = c[np.abs(np.subtract.outer(np.arange(g.cell_count), np.arange(g.cell_count)))]
        return SchemeMoments(float(w @ C @ w), float(w @ C @ e), float(e @ C @ e))
    r = g.step / (2 * g.cell_width ** 2)
    va = cae = ve = 0.0
    a, b = w, e
    for _ in range(n_obs):
        Sa, Sb = _heat_noise_cov_apply(config, a), _heat_noise_cov_apply(config, b)
        va += a @ Sa
        cae += a @ Sb
        ve += b @ Sb
        a = a + r * (np.roll(a, 1) + np.roll(a, -1) - 2 * a)
        b = b + r * (np.roll(b, 1) + np.roll(b, -1) - 2 * b)
    return SchemeMoments(float(va), float(cae), float(ve))


# -- ensembles ----------------------------------------------------------------------

def run_ensemble(config, n, R_list, t, master_seed, x0=None, threads=1, first_replica=0):
    """Solve ``n`` replicas once each and observe every radius in ``R_list``.

    Returns ``{R: SampleSet}``. Replica ``i`` always uses the noise streams
    of ``(master_seed, first_replica + i)``; results are assembled by
    replica index.
    """
    g = config.grid
    x0 = g.observation_point if x0 is None else x0
    step = _step_of(g, t)
    R_list = [float(R) for R in R_list]
    for R in R_list:
        _check_point(g, x0, R)
    equation = g.equation
    _check_config(config, equation)
    batch = _heat_batch if equation == "heat" else _wave_batch
    weights = [window_weights(g, R) for R in R_list]
    slices = [_window_slice(w) for w in weights]
    j0 = g.nearest_index(x0)
    a = np.zeros((len(R_list), n))
    u0 = np.zeros(n)

    def work(start):
        stop = min(n, start + CHUNK)
        replicas = np.arange(start, stop) + first_replica
        u = batch(config, master_seed, replicas, {step})[step]
        for k, (w, sl) in enumerate(zip(weights, slices)):
            a[k, start:stop] = np.einsum("bj,j->b", u[:, sl] - 1.0, w[sl])
        u0[start:stop] = u[:, j0]

    starts = range(0, n, CHUNK)
    if threads > 1 and n > CHUNK:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    return {R: SampleSet(a[k].copy(), u0.copy(), R, float(t), float(x0), master_seed,
                         config.config_hash) for k, R in enumerate(R_list)}
