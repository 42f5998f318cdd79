"""Independent checks: maximum likelihood fitting and synthetic panels.

The MLE here shares only the GEV density with the Bayesian path; it is
used to cross-check posterior means and as the comparison point for
Wald/delta-method confidence intervals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .blocks import BlockSeries
from .errors import DataError, ParameterDomainError
from .gev import GevParams, log_pdf_array, return_level_array, sample

Z95 = 1.959963984540054
MIN_MLE_SIZE = 10


@dataclass
class MleFit:
    params: GevParams
    log_likelihood_at_max: float
    covariance: np.ndarray  # order: mu, sigma, eps
    ci95: dict[str, tuple[float, float]]
    converged: bool
    boundary: bool = False
    message: str = ""
    n: int = 0

    def return_level_ci(self, k: float) -> tuple[float, float, float]:
        """Point estimate and delta-method 95% interval for the return level."""
        point = float(return_level_array(self.params.mu, self.params.sigma, self.params.eps, k))
        grad = _return_level_gradient(self.params, k)
        var = float(grad @ self.covariance @ grad)
        if not (math.isfinite(var) and var >= 0):
            return point, math.nan, math.nan
        half = Z95 * math.sqrt(var)
        return point, point - half, point + half

    def to_dict(self, ks=()) -> dict:
        d = {
            "mu": self.params.mu,
            "sigma": self.params.sigma,
            "eps": self.params.eps,
            "log_likelihood": self.log_likelihood_at_max,
            "covariance": [[_finite_or_none(v) for v in row] for row in self.covariance],
            "ci95": {k: [_finite_or_none(a), _finite_or_none(b)] for k, (a, b) in self.ci95.items()},
            "converged": self.converged,
            "boundary": self.boundary,
            "message": self.message,
            "n": self.n,
        }
        if ks:
            d["return_levels"] = {}
            for k in ks:
                point, lo, hi = self.return_level_ci(k)
                d["return_levels"][f"{k:g}"] = {"estimate": point, "lower95": _finite_or_none(lo),
                                                 "upper95": _finite_or_none(hi)}
        return d

    def to_json(self, ks=()) -> str:
        return json.dumps(self.to_dict(ks), indent=2, sort_keys=True) + "\n"


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _return_level_gradient(p: GevParams, k: float, h: float = 1e-6) -> np.ndarray:
    theta = np.array([p.mu, p.sigma, p.eps])
    grad = np.empty(3)
    for i in range(3):
        step = h * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        grad[i] = (return_level_array(*up, k) - return_level_array(*dn, k)) / (2 * step)
    return grad


def _negloglik(theta, x):
    mu, log_sigma, eps = theta
    sigma = math.exp(min(log_sigma, 700.0))
    if not (sigma > 0 and math.isfinite(eps)):
        return 1e300
    val = -float(np.sum(log_pdf_array(x, mu, sigma, eps)))
    return val if math.isfinite(val) else 1e300


def _loglik_natural(theta, x) -> float:
    mu, sigma, eps = theta
    if sigma <= 0:
        return -math.inf
    return float(np.sum(log_pdf_array(x, mu, sigma, eps)))


def numerical_hessian(f, theta, rel_step: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian of a scalar function."""
    theta = np.asarray(theta, dtype=float)
    d = len(theta)
    h = rel_step * np.maximum(1.0, np.abs(theta))
    H = np.empty((d, d))
    f0 = f(theta)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (f(theta + ei) - 2 * f0 + f(theta - ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(theta + ei + ej) - f(theta + ei - ej)
                                 - f(theta - ei + ej) + f(theta - ei - ej)) / (4 * h[i] * h[j])
    return H


def _moment_start(x: np.ndarray) -> tuple[float, float]:
    sd = float(np.std(x, ddof=1))
    sigma = sd * math.sqrt(6) / math.pi
    return float(np.mean(x)) - 0.5772156649 * sigma, sigma


def mle_fit(bs, max_starts: int | None = None) -> MleFit:
    """Fixed-location GEV maximum likelihood by Nelder-Mead from several starts.

    Starts are the Gumbel moment estimates with shape 0, -0.1 and 0.1.
    The covariance is the inverse of the observed information, computed by
    finite differences in (mu, sigma, eps) at the optimum.
    """
    x = bs.values if isinstance(bs, BlockSeries) else np.asarray(bs, dtype=float)
    if len(x) < MIN_MLE_SIZE:
        raise DataError(f"maximum likelihood needs at least {MIN_MLE_SIZE} maxima, got {len(x)}")
    mu0, sigma0 = _moment_start(x)
    if not sigma0 > 0:
        sigma0 = max(abs(float(np.mean(x))), 1.0) * 1e-3
    starts = [(mu0, math.log(sigma0), e) for e in (0.0, -0.1, 0.1)][:max_starts]

    best = None
    for start in starts:
        res = optimize.minimize(_negloglik, np.array(start), args=(x,), method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000, "maxfev": 8000})
        if best is None or res.fun < best.fun:
            best = res
    mu, log_sigma, eps = best.x
    sigma = math.exp(log_sigma)
    converged = bool(best.success and best.fun < 1e299)
    message = str(best.message)
    try:
        params = GevParams(mu, sigma, eps)
    except ParameterDomainError as exc:
        nan3 = np.full((3, 3), np.nan)
        return MleFit(GevParams(mu0, max(sigma0, 1e-12), 0.0), -math.inf, nan3,
                      {}, False, True, f"invalid optimum: {exc}", len(x))

    theta = np.array([mu, sigma, eps])
    H = numerical_hessian(lambda t: _loglik_natural(t, x), theta)
    boundary = False
    # eps <= -1 gives an unbounded likelihood at the upper end; treat as a boundary solution.
    if eps <= -1.0 or not np.all(np.isfinite(H)):
        boundary = True
    cov = np.full((3, 3), np.nan)
    if not boundary:
        try:
            info = -H
            eig = np.linalg.eigvalsh(info)
            if eig.min() <= 0:
                boundary = True
            else:
                cov = np.linalg.inv(info)
                cov = 0.5 * (cov + cov.T)
        except np.linalg.LinAlgError:
            boundary = True
    if boundary:
        converged = False
        message = (message + "; " if message else "") + "information matrix not positive definite (boundary or degenerate data)"
    ci = {}
    for i, name in enumerate(("mu", "sigma", "eps")):
        se = math.sqrt(cov[i, i]) if np.isfinite(cov[i, i]) else math.nan
        ci[name] = (float(theta[i] - Z95 * se), float(theta[i] + Z95 * se))
    return MleFit(params, -float(best.fun), cov, ci, converged, boundary, message, len(x))


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticPanel:
    data: BlockSeries
    truth: dict
    seed: int
    deltas: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"truth": self.truth, "deltas": self.deltas, "seed": self.seed,
                "groups": len(self.deltas), "n": len(self.data)}


def simulate_panel(truth, groups: int, per_group: int, seed: int) -> SyntheticPanel:
    """Draw ``delta_g ~ N(0, tau^2)`` per group, then GEV(mu + delta_g, sigma, eps)
    values by inverse transform.

    ``truth`` is a mapping (or 4-sequence) with ``mu``, ``sigma``, ``eps``,
    ``tau``.  Records carry a ``group`` tag (``g01``, ``g02``, ...).
    """
    if isinstance(truth, dict):
        mu, sigma, eps, tau = (float(truth[k]) for k in ("mu", "sigma", "eps", "tau"))
    else:
        mu, sigma, eps, tau = (float(v) for v in truth)
    if groups < 1 or per_group < 1:
        raise DataError(f"need at least one group and one record per group, got {groups}x{per_group}")
    if tau < 0:
        raise ParameterDomainError(f"tau must be non-negative, got {tau}")
    rng = np.random.default_rng(seed)
    width = max(2, len(str(groups)))
    labels = [f"g{g + 1:0{width}d}" for g in range(groups)]
    deltas = tau * rng.standard_normal(groups) if tau > 0 else np.zeros(groups)
    values, tags, blocks = [], [], []
    for g, (lab, d) in enumerate(zip(labels, deltas)):
        values.extend(sample(GevParams(mu + d, sigma, eps), per_group, rng).tolist())
        tags.extend([lab] * per_group)
        blocks.extend(f"{lab}-{i + 1:04d}" for i in range(per_group))
    bs = BlockSeries.from_values(values, tags={"group": tags}, labels=blocks)
    return SyntheticPanel(bs, {"mu": mu, "sigma": sigma, "eps": eps, "tau": tau}, seed,
                          {lab: float(d) for lab, d in zip(labels, deltas)})
