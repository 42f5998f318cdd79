"""Generalized Extreme Value distribution.

Shape convention: ``eps > 0`` is the Frechet-type (heavy upper tail),
``eps < 0`` the Weibull-type (bounded above) and ``eps == 0`` the Gumbel
case.  Note this is the opposite sign of ``scipy.stats.genextreme``'s ``c``.

The scalar-facing functions take a :class:`GevParams`; the ``*_array``
helpers skip validation and broadcast over numpy arrays for use in the
samplers and likelihood code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import gammaln

from .errors import ParameterDomainError

#: Shapes with ``abs(eps)`` below this use the Gumbel formulas.
GUMBEL_TOL = 1e-9

EULER_GAMMA = 0.57721566490153286061


@dataclass(frozen=True)
class GevParams:
    """Location, scale and shape of one GEV distribution."""

    mu: float
    sigma: float
    eps: float

    def __post_init__(self):
        for name in ("mu", "sigma", "eps"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise ParameterDomainError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterDomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.sigma <= 0:
            raise ParameterDomainError(f"sigma must be positive, got {self.sigma}")

    @property
    def is_gumbel(self) -> bool:
        return abs(self.eps) < GUMBEL_TOL

    @property
    def family(self) -> str:
        """Name of the limiting family selected by the sign of the shape."""
        if self.is_gumbel:
            return "Gumbel"
        return "Frechet" if self.eps > 0 else "Weibull"

    def shifted(self, delta: float) -> "GevParams":
        return GevParams(self.mu + delta, self.sigma, self.eps)


@dataclass(frozen=True)
class SupportInterval:
    lower: float
    upper: float

    def __contains__(self, x: float) -> bool:
        return self.lower < x < self.upper


def _check_params(params) -> GevParams:
    if not isinstance(params, GevParams):
        raise ParameterDomainError(f"expected GevParams, got {type(params).__name__}")
    return params


def _scalar_or_array(out: np.ndarray, x):
    if np.ndim(x) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# array kernels (no validation)


def log_pdf_array(x: ArrayLike, mu: ArrayLike, sigma: float, eps: float) -> np.ndarray:
    """Log density, broadcasting over ``x`` and ``mu``; ``-inf`` off support."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        z = (x - mu) / sigma
        if abs(eps) < GUMBEL_TOL:
            out = -math.log(sigma) - z - np.exp(-z)
            return np.where(np.isnan(out), -np.inf, out)
        t = eps * z
        inside = t > -1.0
        log_t = np.log1p(np.where(inside, t, 0.0))
        out = -math.log(sigma) - (1.0 + 1.0 / eps) * log_t - np.exp(-log_t / eps)
    return np.where(inside & ~np.isnan(out), out, -np.inf)


def cdf_array(x: ArrayLike, mu: ArrayLike, sigma: float, eps: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        z = (x - mu) / sigma
        if abs(eps) < GUMBEL_TOL:
            return np.exp(-np.exp(-z))
        t = eps * z
        inside = t > -1.0
        log_t = np.log1p(np.where(inside, t, 0.0))
        out = np.exp(-np.exp(-log_t / eps))
    # Outside the support: below the lower end for eps > 0, above the upper end for eps < 0.
    return np.where(inside, out, 0.0 if eps > 0 else 1.0)


def quantile_array(p: ArrayLike, mu: ArrayLike, sigma: ArrayLike, eps: ArrayLike) -> np.ndarray:
    """Quantile with per-element parameters (``eps`` may be an array)."""
    p = np.asarray(p, dtype=float)
    eps = np.asarray(eps, dtype=float)
    log_y = np.log(-np.log(p))
    gumbel = np.abs(eps) < GUMBEL_TOL
    safe_eps = np.where(gumbel, 1.0, eps)
    # mu + sigma/eps * (y**-eps - 1), written with expm1 to stay accurate as eps -> 0
    frechet_weibull = np.expm1(-safe_eps * log_y) / safe_eps
    return mu + sigma * np.where(gumbel, -log_y, frechet_weibull)


def return_level_array(mu: ArrayLike, sigma: ArrayLike, eps: ArrayLike, k: float) -> np.ndarray:
    if not k > 1:
        raise ParameterDomainError(f"return period k must exceed 1, got {k}")
    return quantile_array(1.0 - 1.0 / k, mu, sigma, eps)


# ---------------------------------------------------------------------------
# public scalar-oriented API


def cdf(params: GevParams, x):
    """Distribution function; exactly 0 below and 1 above the support."""
    p = _check_params(params)
    return _scalar_or_array(cdf_array(x, p.mu, p.sigma, p.eps), x)


def log_pdf(params: GevParams, x):
    """Log density, ``-inf`` outside (and on the boundary of) the support."""
    p = _check_params(params)
    return _scalar_or_array(log_pdf_array(x, p.mu, p.sigma, p.eps), x)


def quantile(params: GevParams, p):
    """Inverse of :func:`cdf` for probabilities strictly inside (0, 1)."""
    params = _check_params(params)
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise ParameterDomainError(f"probability must lie in (0, 1), got {p}")
    return _scalar_or_array(quantile_array(arr, params.mu, params.sigma, params.eps), p)


def return_level(params: GevParams, k) -> float:
    """Level exceeded by one block maximum with probability ``1/k``."""
    params = _check_params(params)
    arr = np.asarray(k, dtype=float)
    if np.any(~(arr > 1)) or np.any(~np.isfinite(arr)):
        raise ParameterDomainError(f"return period k must be finite and exceed 1, got {k}")
    return _scalar_or_array(quantile_array(1.0 - 1.0 / arr, params.mu, params.sigma, params.eps), k)


def support(params: GevParams) -> SupportInterval:
    p = _check_params(params)
    if p.is_gumbel:
        return SupportInterval(-math.inf, math.inf)
    end = p.mu - p.sigma / p.eps
    if p.eps > 0:
        return SupportInterval(end, math.inf)
    return SupportInterval(-math.inf, end)


def mean(params: GevParams) -> float:
    """Expected value; ``inf`` when ``eps >= 1`` (the mean does not exist)."""
    p = _check_params(params)
    if p.is_gumbel:
        return p.mu + p.sigma * EULER_GAMMA
    if p.eps >= 1:
        return math.inf
    gamma_term = math.exp(gammaln(1.0 - p.eps))
    return p.mu + p.sigma * (gamma_term - 1.0) / p.eps


def sample(params: GevParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` values by inverse transform of uniform variates."""
    p = _check_params(params)
    if n < 0:
        raise ParameterDomainError(f"sample size must be non-negative, got {n}")
    u = rng.random(n)
    # Generator.random is [0, 1); the quantile needs an open interval.
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    return quantile_array(u, p.mu, p.sigma, p.eps)
