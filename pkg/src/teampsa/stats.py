"""Special functions and distributions used by the proficiency metrics.

Only what the metrics need: the complementary error function, Gaussian
densities, and the asymptotic Kolmogorov distribution.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

# Series terms smaller than this are dropped. Fixed so p-values are
# reproducible bit-for-bit under one floating-point model.
SERIES_CUTOFF = 1e-16

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NormalParams:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError(f"variance must be > 0, got {self.variance}")


def erfc(x):
    """Complementary error function, scalar or elementwise on arrays."""
    if np.ndim(x) == 0:
        return math.erfc(float(x))
    return special.erfc(np.asarray(x, dtype=float))


def normal_logpdf(x, params):
    return -0.5 * (_LOG_2PI + math.log(params.variance)) - (
        (x - params.mean) ** 2 / (2.0 * params.variance)
    )


def normal_pdf(x, params):
    return math.exp(normal_logpdf(x, params))


def normal_cdf(x, params):
    return 0.5 * erfc(-(x - params.mean) / math.sqrt(2.0 * params.variance))


def gaussian_logpdf(x, mean, variance):
    """Vectorised ``log N(x; mean, variance)`` over matching arrays."""
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise DomainError("variance must be > 0")
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG_2PI + np.log(variance)) - (x - mean) ** 2 / (2.0 * variance)


def kolmogorov_sf(lam):
    """Survival function of the limiting Kolmogorov distribution.

    ``P(K > lam) = 2 * sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lam^2)``.

    The alternating series converges slowly for small ``lam``; below 1 the
    equivalent theta-function form of the CDF is summed instead. Both sums
    stop at the first term below :data:`SERIES_CUTOFF`.
    """
    lam = float(lam)
    if lam < 0 or math.isnan(lam):
        raise DomainError(f"lambda must be >= 0, got {lam}")
    if lam == 0.0:
        return 1.0
    if lam < 1.0:
        a = -(math.pi ** 2) / (8.0 * lam * lam)
        total = 0.0
        k = 1
        while True:
            term = math.exp(a * (2 * k - 1) ** 2)
            total += term
            if term < SERIES_CUTOFF:
                break
            k += 1
        cdf = math.sqrt(2.0 * math.pi) / lam * total
        return min(1.0, max(0.0, 1.0 - cdf))
    a = -2.0 * lam * lam
    total = 0.0
    sign = 1.0
    k = 1
    while True:
        term = math.exp(a * k * k)
        total += sign * term
        if term < SERIES_CUTOFF:
            break
        sign = -sign
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def kolmogorov_cdf(lam):
    return 1.0 - kolmogorov_sf(lam)


def kolmogorov_quantile(alpha, tol=1e-12):
    """Return ``gamma`` with ``kolmogorov_sf(gamma) == alpha`` (upper quantile).

    Solved by bisection; ``sf`` is monotone so the bracket [0, 10] always
    contains the root for ``0 < alpha < 1``.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    lo, hi = 0.0, 10.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if kolmogorov_sf(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
