"""Estimators that turn ensembles into distances, dependence measures and rates.

Wasserstein-1 distances are computed from sorted samples: against the
standard normal via its quantiles at ``(i - 1/2)/n``, between two empirical
laws by matching order statistics, and for 2-D laws by slicing along 64
fixed directions. Dependence is measured with the distance covariance and
tested by permutation.
"""

from dataclasses import dataclass
from functools import lru_cache
import math
import warnings

import numpy as np
from scipy import special

from spdelab.errors import (
    EmptySample,
    LengthMismatch,
    NonpositiveValue,
    TooFewPoints,
    TooFewSamples,
    ZeroVariance,
)
from spdelab.grid_noise import PERMUTATION_STREAM, SAMPLING_STREAM, stream

SLICE_COUNT = 64
MIN_W1_SAMPLES = 100
MIN_JOINT_SAMPLES = 500
MIN_PERMUTATIONS = 199


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    point_count: int
    residual_max: float


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    statistic: float
    p_value: float
    n_permutations: int
    seed: int


@dataclass(frozen=True)
class OracleSigma:
    value: float


class EmpiricalSigma:
    pass


def standardize(sample_set, mode):
    """Return an (n, 2) array of ``(a_R / sigma_R, u0)``.

    ``mode`` is :class:`OracleSigma` (a known ``sigma_R``) or
    :class:`EmpiricalSigma` (the sample standard deviation, ``ddof=1``).
    """
    a = np.asarray(sample_set.a, dtype=float)
    if a.size == 0:
        raise EmptySample("no replicas to standardise")
    if isinstance(mode, OracleSigma):
        if not mode.value > 0:
            raise ZeroVariance(f"oracle sigma must be positive, got {mode.value}")
        s = mode.value
    else:
        if a.size < 2:
            raise TooFewSamples("empirical sigma needs at least 2 replicas")
        s = float(np.std(a, ddof=1))
        if not s > 0:
            raise ZeroVariance("spatial integral has zero sample variance")
    return np.column_stack([a / s, np.asarray(sample_set.u0, dtype=float)])


def normal_quantile_grid(n):
    return special.ndtri((np.arange(1, n + 1) - 0.5) / n)


def w1_to_std_normal(samples):
    """``mean |x_(i) - Phi^-1((i - 1/2)/n)|`` over the sorted sample."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < MIN_W1_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_W1_SAMPLES} samples, got {x.size}")
    return float(np.mean(np.abs(x - normal_quantile_grid(x.size))))


def w1_empirical_pair(a, b):
    """W1 between two empirical laws with the same number of atoms."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise EmptySample("empty samples")
    return float(np.mean(np.abs(a - b)))


def slice_directions(m=SLICE_COUNT):
    theta = math.pi * (np.arange(m) + 0.5) / m
    return np.column_stack([np.cos(theta), np.sin(theta)])


def sliced_w1(p, q, m=SLICE_COUNT):
    """Average over ``m`` fixed directions of the 1-D W1 between projections."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise LengthMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    d = slice_directions(m)
    P = np.sort(p @ d.T, axis=0)
    Q = np.sort(q @ d.T, axis=0)
    return float(np.mean(np.abs(P - Q)))


class ProductResample:
    """Reference law built by permuting the second column with a seeded permutation."""

    def __init__(self, seed=0):
        self.seed = seed

    def draw(self, pairs):
        rng = stream(self.seed, 0, 0, SAMPLING_STREAM)
        out = pairs.copy()
        out[:, 1] = pairs[rng.permutation(len(pairs)), 1]
        return out


def w1_joint_vs_product(pairs, reference, seed=0):
    """Sliced W1 between the observed pairs and a reference law.

    ``reference`` is either a :class:`ProductResample` or a Gaussian law
    with a ``sample(n, rng)`` method (for example
    ``oracle.JointLaw2.product()``), in which case ``n`` exact draws with
    the given ``seed`` are compared.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("pairs must have shape (n, 2)")
    if len(pairs) < MIN_JOINT_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_JOINT_SAMPLES} pairs, got {len(pairs)}")
    if isinstance(reference, ProductResample):
        ref = reference.draw(pairs)
    else:
        ref = reference.sample(len(pairs), stream(seed, 0, 0, SAMPLING_STREAM))
    return sliced_w1(pairs, ref)


def _columns(x, y):
    x = np.ascontiguousarray(np.asarray(x, dtype=float).ravel())
    y = np.ascontiguousarray(np.asarray(y, dtype=float).ravel())
    if x.size != y.size:
        raise LengthMismatch(f"lengths differ: {x.size} vs {y.size}")
    return x, y


@lru_cache(maxsize=1)
def _dcor():
    # dcor pulls in numba: slow to import and noisy about its threading layer
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        import dcor
    return dcor


def distance_covariance(x, y):
    """Sample distance covariance (square root of the V-statistic) of two 1-D samples.

    Uses the O(n log n) algorithm for univariate samples from ``dcor``.
    """
    x, y = _columns(x, y)
    if x.size == 0:
        raise EmptySample("empty samples")
    return float(_dcor().distance_covariance(x, y, method="mergesort"))


def independence_test(x, y, n_perm=MIN_PERMUTATIONS, seed=0):
    """Permutation test of independence based on the distance covariance.

    Pairs are first put in a canonical order (sorted by ``x``, then ``y``),
    so the p-value does not depend on how the sample was listed.
    Permutation ``k`` comes from its own counter-based stream of ``seed``.
    The p-value is ``(1 + #{stat_k >= stat}) / (n_perm + 1)``.
    """
    x, y = _columns(x, y)
    if x.size < MIN_W1_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_W1_SAMPLES} pairs, got {x.size}")
    if n_perm < MIN_PERMUTATIONS:
        raise TooFewSamples(f"need at least {MIN_PERMUTATIONS} permutations, got {n_perm}")
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    observed = distance_covariance(x, y)
    exceed = 0
    for k in range(n_perm):
        perm = stream(seed, k, 0, PERMUTATION_STREAM).permutation(x.size)
        if distance_covariance(x, y[perm]) >= observed:
            exceed += 1
    return TestResult(observed, (1 + exceed) / (n_perm + 1), n_perm, seed)


def loglog_fit(points):
    """Least-squares line through ``(log R, log value)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 3:
        raise TooFewPoints(f"need at least 3 points, got {len(pts)}")
    if np.any(pts <= 0):
        raise NonpositiveValue("log-log fit needs positive radii and values")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), min(1.0, max(0.0, r2)), len(pts),
                   float(np.max(np.abs(resid))))


# -- estimator noise floors -------------------------------------------------------

def null_statistics(kind, n, reps, seed=0):
    """Replicates of an estimator under its null hypothesis.

    ``kind="marginal"``: :func:`w1_to_std_normal` of ``n`` standard normals.
    ``kind="sliced"``: :func:`w1_joint_vs_product` of ``n`` independent
    standard normal pairs against their product resample.
    """
    out = np.empty(reps)
    for r in range(reps):
        rng = stream(seed, r, n, SAMPLING_STREAM)
        if kind == "marginal":
            out[r] = w1_to_std_normal(rng.standard_normal(n))
        elif kind == "sliced":
            out[r] = w1_joint_vs_product(rng.standard_normal((n, 2)), ProductResample(seed + r))
        else:
            raise ValueError(f"unknown kind {kind!r}")
    return out


def measure_noise_floor(kind, n, reps=200, seed=0, quantile=0.95):
    """Upper ``quantile`` of :func:`null_statistics`."""
    return float(np.quantile(null_statistics(kind, n, reps, seed), quantile))


# 95% quantiles over 200 null replicates (seed 0), from measure_noise_floor
NOISE_FLOORS = {
    "marginal": {2000: 0.04242350539435545, 4000: 0.03366448897479361,
                 5000: 0.03127310440095646, 10000: 0.019854641669332235},
    "sliced": {2000: 0.025992388315518984, 4000: 0.018719443978655177,
               5000: 0.016609250526042372, 10000: 0.012462683147912218},
}


def noise_floor(kind, n):
    """Frozen floor at the nearest calibrated size, scaled by ``sqrt(n0 / n)``."""
    table = NOISE_FLOORS[kind]
    n0 = min(table, key=lambda k: abs(math.log(k / n)))
    return table[n0] * math.sqrt(n0 / n)
