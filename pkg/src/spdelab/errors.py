"""Exception types raised across the package.

All of them derive from :class:`SpdelabError`, itself a ``ValueError``, so
callers that only care about bad input can catch ``ValueError``.
"""


class SpdelabError(ValueError):
    pass


# grid and noise
class StabilityViolation(SpdelabError):
    pass


class DomainTooSmall(SpdelabError):
    pass


class NonIntegerCount(SpdelabError):
    pass


class ZeroFrequency(SpdelabError):
    pass


class NegativeSpectrumClipped(SpdelabError):
    def __init__(self, clipped_mass, total_mass):
        self.clipped_mass = clipped_mass
        self.total_mass = total_mass
        super().__init__(
            f"circulant embedding has negative mass {clipped_mass:.3e} "
            f"({clipped_mass / total_mass:.3e} of total)"
        )


# kernels and quadrature
class QuadratureFailure(SpdelabError):
    pass


class NonFiniteIntegrand(SpdelabError):
    pass


class NonpositiveTime(SpdelabError):
    pass


class BadTimeOrder(SpdelabError):
    pass


# solver
class NaNDetected(SpdelabError):
    def __init__(self, step_index, replica_index=None):
        self.step_index = step_index
        self.replica_index = replica_index
        where = f" (replica {replica_index})" if replica_index is not None else ""
        super().__init__(f"non-finite value at step {step_index}{where}")


class OffGridTime(SpdelabError):
    pass


class OutOfDomain(SpdelabError):
    pass


# statistics
class EmptySample(SpdelabError):
    pass


class ZeroVariance(SpdelabError):
    pass


class TooFewSamples(SpdelabError):
    pass


class LengthMismatch(SpdelabError):
    pass


class NonpositiveValue(SpdelabError):
    pass


class TooFewPoints(SpdelabError):
    pass


# experiments
class ConfigError(SpdelabError):
    pass


class NonAdditiveSigma(ConfigError):
    pass
