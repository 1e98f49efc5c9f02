"""Log-t distribution of true particle areas.

``log A`` follows a Student-t law with location ``mu``, scale ``sigma`` and
``nu`` degrees of freedom; ``nu = inf`` is the log-normal limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _random

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class LogTParams:
    mu: float
    sigma: float
    nu: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu!r}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu!r}")

    def rescaled(self, pixel_area: float) -> "LogTParams":
        """Same law expressed for ``A / pixel_area``."""
        return LogTParams(self.mu - math.log(pixel_area), self.sigma, self.nu)


def _std_logpdf(z, nu):
    if math.isinf(nu):
        return -0.5 * z * z - _LOG_SQRT_2PI
    return (
        special.gammaln(0.5 * (nu + 1))
        - special.gammaln(0.5 * nu)
        - 0.5 * math.log(nu * math.pi)
        - 0.5 * (nu + 1) * np.log1p(z * z / nu)
    )


def std_cdf(z, nu):
    """CDF of the standard Student-t (normal when ``nu`` is infinite)."""
    if math.isinf(nu):
        return special.ndtr(z)
    return special.stdtr(nu, z)


def logt_logpdf(a, params: LogTParams):
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("log-t density is defined for positive areas only")
    log_a = np.log(a)
    z = (log_a - params.mu) / params.sigma
    return _std_logpdf(z, params.nu) - math.log(params.sigma) - log_a


def logt_density(a, params: LogTParams):
    """Density of ``A`` including the ``1/A`` Jacobian.

    Evaluated in log space; the Gamma-function ratio overflows for large
    ``nu`` if formed directly.
    """
    out = np.exp(logt_logpdf(a, params))
    return float(out) if out.ndim == 0 else out


def logt_cdf(a, params: LogTParams):
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        z = (np.log(np.where(a > 0, a, 0.0)) - params.mu) / params.sigma
    out = np.where(a > 0, std_cdf(z, params.nu), 0.0)
    return float(out) if out.ndim == 0 else out


def logt_sample(params: LogTParams, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. areas ``exp(mu + sigma * T)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = _random.stream(seed, _random.SAMPLE)
    return sample_with(rng, params, n)


def sample_with(rng: np.random.Generator, params: LogTParams, n: int) -> np.ndarray:
    if math.isinf(params.nu):
        t = rng.standard_normal(n)
    else:
        t = rng.standard_t(params.nu, n)
    return np.exp(params.mu + params.sigma * t)
