"""Fixed- and random-location GEV models: priors, likelihood, posterior.

In random mode every record ``i`` belonging to group ``g(i)`` is GEV with
location ``mu + delta[g(i)]`` and shared ``sigma``, ``eps``; the group
effects are ``delta_g ~ N(0, tau**2)``.  The effects are kept as explicit
latent variables rather than integrated out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .blocks import BlockSeries
from .errors import ModelError
from .gev import log_pdf_array

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


def normal_logpdf(x, mean: float, sd: float):
    with np.errstate(over="ignore"):
        z = (np.asarray(x, dtype=float) - mean) / sd
        return -0.5 * z * z - math.log(sd) - LOG_SQRT_2PI


def half_normal_logpdf(x: float, scale: float) -> float:
    if x < 0:
        return -math.inf
    z = x / scale
    return LOG_2 - 0.5 * z * z - math.log(scale) - LOG_SQRT_2PI


@dataclass(frozen=True)
class PriorSpec:
    """Normal priors on mu, log(sigma) and eps; half-normal on tau."""

    mu_mean: float
    mu_sd: float
    log_sigma_mean: float
    log_sigma_sd: float
    eps_mean: float = 0.0
    eps_sd: float = 1.0
    tau_scale: float | None = None

    def __post_init__(self):
        for name in ("mu_sd", "log_sigma_sd", "eps_sd", "tau_scale"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ModelError(f"prior {name} must be a positive finite number, got {v}")
        for name in ("mu_mean", "log_sigma_mean", "eps_mean"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"prior {name} must be finite")

    @classmethod
    def default(cls, data: BlockSeries, group_tag: str | None = None) -> "PriorSpec":
        """Diffuse priors scaled to the data.

        ``mu ~ N(mean, (10 sd)^2)``, ``log sigma ~ N(log sd, 10^2)``,
        ``eps ~ N(0, 1)`` and, with a grouping tag,
        ``tau ~ HalfNormal(2 * sd of group means)``.
        """
        x = data.values
        if len(x) < 2:
            raise ModelError("need at least two maxima to set default priors")
        sd = float(np.std(x, ddof=1))
        if not sd > 0:
            raise ModelError("maxima have zero spread; cannot scale default priors")
        tau_scale = None
        if group_tag is not None:
            means = [float(np.mean(v)) for v in _group_values(data, group_tag).values()]
            spread = float(np.std(means, ddof=1)) if len(means) > 1 else 0.0
            # Identical group means would give a degenerate prior; fall back to the data scale.
            tau_scale = 2.0 * (spread if spread > 0 else sd)
        return cls(float(np.mean(x)), 10.0 * sd, math.log(sd), 10.0, 0.0, 1.0, tau_scale)

    def with_overrides(self, **overrides) -> "PriorSpec":
        unknown = set(overrides) - set(self.__dataclass_fields__)
        if unknown:
            raise ModelError(f"unknown prior settings: {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})


def _group_values(data: BlockSeries, tag: str) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for rec in data.records:
        out.setdefault(rec.group_tags[tag], []).append(rec.maximum)
    return out


@dataclass(frozen=True)
class ModelSpec:
    """Data plus location structure and priors.

    ``location_mode`` is ``"fixed"`` or ``"random"``; random mode needs a
    ``group_tag`` present on the data with at least two distinct values.
    Leaving ``priors`` as None selects :meth:`PriorSpec.default`.
    """

    data: BlockSeries
    location_mode: str = "fixed"
    group_tag: str | None = None
    priors: PriorSpec | None = None
    groups: tuple[str, ...] = field(init=False, default=())
    group_index: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.location_mode not in ("fixed", "random"):
            raise ModelError(f"location_mode must be 'fixed' or 'random', got {self.location_mode!r}")
        if len(self.data) == 0:
            raise ModelError("model data is empty")
        if self.location_mode == "random":
            if not self.group_tag:
                raise ModelError("random location mode requires a group tag")
            if self.group_tag not in self.data.tag_names:
                raise ModelError(f"group tag {self.group_tag!r} not found in data (tags: {self.data.tag_names})")
            labels = self.data.tag_values(self.group_tag)
            groups = tuple(dict.fromkeys(labels))
            if len(groups) < 2:
                raise ModelError(f"random mode needs at least 2 groups of {self.group_tag!r}, found {len(groups)}")
            lookup = {g: i for i, g in enumerate(groups)}
            object.__setattr__(self, "groups", groups)
            object.__setattr__(self, "group_index", np.array([lookup[g] for g in labels], dtype=np.intp))
        elif self.group_tag is not None:
            object.__setattr__(self, "group_tag", None)
        if self.priors is None:
            object.__setattr__(self, "priors", PriorSpec.default(self.data, self.group_tag))
        elif self.location_mode == "random" and self.priors.tau_scale is None:
            default = PriorSpec.default(self.data, self.group_tag)
            object.__setattr__(self, "priors", replace(self.priors, tau_scale=default.tau_scale))

    @property
    def is_random(self) -> bool:
        return self.location_mode == "random"

    @property
    def n_groups(self) -> int:
        return len(self.groups)


@dataclass
class ParamState:
    mu: float
    log_sigma: float
    eps: float
    tau: float | None = None
    deltas: dict[str, float] | None = None

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)


def _delta_vector(spec: ModelSpec, state: ParamState) -> np.ndarray | None:
    if not spec.is_random:
        if state.deltas:
            raise ModelError("fixed-location model given group effects")
        return None
    if state.deltas is None or state.tau is None:
        raise ModelError("random-location model needs tau and deltas")
    if set(state.deltas) != set(spec.groups):
        missing = sorted(set(spec.groups) - set(state.deltas))
        extra = sorted(set(state.deltas) - set(spec.groups))
        raise ModelError(f"delta keys do not match groups (missing {missing}, unexpected {extra})")
    return np.array([state.deltas[g] for g in spec.groups], dtype=float)


def log_likelihood(spec: ModelSpec, state: ParamState) -> float:
    """Sum of GEV log densities at each record's (possibly shifted) location."""
    deltas = _delta_vector(spec, state)
    x = spec.data.values
    loc = state.mu if deltas is None else state.mu + deltas[spec.group_index]
    return float(np.sum(log_pdf_array(x, loc, state.sigma, state.eps)))


def log_prior(spec: ModelSpec, state: ParamState) -> float:
    deltas = _delta_vector(spec, state)
    pr = spec.priors
    lp = float(normal_logpdf(state.mu, pr.mu_mean, pr.mu_sd)
               + normal_logpdf(state.log_sigma, pr.log_sigma_mean, pr.log_sigma_sd)
               + normal_logpdf(state.eps, pr.eps_mean, pr.eps_sd))
    if deltas is None:
        return lp
    if not state.tau > 0:
        return -math.inf
    return lp + half_normal_logpdf(state.tau, pr.tau_scale) + float(np.sum(normal_logpdf(deltas, 0.0, state.tau)))


def log_posterior(spec: ModelSpec, state: ParamState) -> float:
    lp = log_prior(spec, state)
    if lp == -math.inf:
        return lp
    return lp + log_likelihood(spec, state)
