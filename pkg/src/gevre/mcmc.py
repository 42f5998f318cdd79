"""Adaptive random-walk Metropolis-within-Gibbs sampler for the GEV models.

Each iteration updates, in order, the scalar blocks ``mu``, ``log_sigma``
and ``eps``; then, for random-location models, ``log_tau``, every group
effect ``delta_g`` and finally a joint shift ``(mu + c, delta - c)``.
Proposal standard deviations are tuned on the log scale every
``adapt_window`` iterations during burn-in and frozen afterwards.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InitializationError, ModelError, SummaryError
from .gev import log_pdf_array
from .model import LOG_SQRT_2PI, ModelSpec, ParamState, half_normal_logpdf, log_posterior

INIT_RETRIES = 20


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 20000
    burn_in: int = 4000
    thin: int = 5
    seed: int = 0
    chains: int = 1
    adapt_window: int = 50
    target_accept: float = 0.44

    def __post_init__(self):
        if self.iterations < 1:
            raise ModelError(f"iterations must be positive, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ModelError(f"burn_in must satisfy 0 <= burn_in < iterations, got {self.burn_in}")
        if self.thin < 1:
            raise ModelError(f"thin must be at least 1, got {self.thin}")
        if self.chains < 1:
            raise ModelError(f"chains must be at least 1, got {self.chains}")
        if self.adapt_window < 1:
            raise ModelError(f"adapt_window must be at least 1, got {self.adapt_window}")
        if not 0 < self.target_accept < 1:
            raise ModelError(f"target_accept must lie in (0, 1), got {self.target_accept}")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass(frozen=True)
class ChainDraws:
    """Retained posterior draws, one row per kept iteration."""

    parameter_names: tuple[str, ...]
    draws: np.ndarray
    acceptance_rates: dict[str, float] = field(default_factory=dict)
    seed_used: int = 0
    proposal_scales: dict[str, float] = field(default_factory=dict)
    burn_in_scales: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        if draws.ndim != 2 or draws.shape[1] != len(self.parameter_names):
            raise SummaryError(f"draws shape {draws.shape} does not match {len(self.parameter_names)} parameters")
        draws.setflags(write=False)
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "parameter_names", tuple(self.parameter_names))

    def __len__(self):
        return self.draws.shape[0]

    def __contains__(self, name: str) -> bool:
        return name in self.parameter_names

    def column(self, name: str) -> np.ndarray:
        try:
            return self.draws[:, self.parameter_names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    @property
    def group_labels(self) -> list[str]:
        return [n[6:-1] for n in self.parameter_names if n.startswith("delta[")]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.parameter_names)
            for row in self.draws:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ChainDraws":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header:
                raise SummaryError(f"{path}: empty chain file")
            rows = []
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise SummaryError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise SummaryError(f"{path}:{reader.line_num}: non-numeric draw")
        return cls(tuple(header), np.array(rows, dtype=float).reshape(len(rows), len(header)))


def delta_name(group: str) -> str:
    return f"delta[{group}]"


# ---------------------------------------------------------------------------
# sampler


class _Target:
    """Vectorised log-density pieces over the working parameters."""

    def __init__(self, spec: ModelSpec, use_likelihood: bool):
        self.spec = spec
        self.x = spec.data.values
        self.pr = spec.priors
        self.use_likelihood = use_likelihood
        self.idx = spec.group_index
        self.G = spec.n_groups

    def record_loglik(self, mu, log_sigma, eps, deltas):
        loc = mu if deltas is None else mu + deltas[self.idx]
        return log_pdf_array(self.x, loc, math.exp(log_sigma), eps)

    def loglik(self, mu, log_sigma, eps, deltas) -> tuple[float, np.ndarray | None]:
        """Total log-likelihood and, in random mode, per-group sums."""
        if not self.use_likelihood:
            return 0.0, (np.zeros(self.G) if deltas is not None else None)
        terms = self.record_loglik(mu, log_sigma, eps, deltas)
        if deltas is None:
            return float(np.sum(terms)), None
        per_group = np.bincount(self.idx, weights=terms, minlength=self.G)
        return float(np.sum(per_group)), per_group

    def prior_mu(self, mu):
        return -0.5 * ((mu - self.pr.mu_mean) / self.pr.mu_sd) ** 2

    def prior_log_sigma(self, ls):
        return -0.5 * ((ls - self.pr.log_sigma_mean) / self.pr.log_sigma_sd) ** 2

    def prior_eps(self, eps):
        return -0.5 * ((eps - self.pr.eps_mean) / self.pr.eps_sd) ** 2

    @staticmethod
    def delta_terms(deltas, tau):
        z = deltas / tau
        return -0.5 * z * z - math.log(tau) - LOG_SQRT_2PI


def _initial_state(target: _Target, spec: ModelSpec) -> ParamState:
    x = target.x
    with np.errstate(over="ignore"):
        sd = float(np.std(x, ddof=1)) if len(x) > 1 else 1.0
    if not sd > 0:
        sd = 1.0
    state = ParamState(float(np.mean(x)), math.log(sd), 0.1)
    if spec.is_random:
        means = np.bincount(spec.group_index, weights=x, minlength=spec.n_groups) / np.bincount(spec.group_index)
        spread = float(np.std(means, ddof=1))
        state.tau = 0.5 * spread if spread > 0 else 0.5 * sd
        state.deltas = {g: 0.0 for g in spec.groups}
    for _ in range(INIT_RETRIES):
        lp = log_posterior(spec, state) if target.use_likelihood else 0.0
        if math.isfinite(lp):
            return state
        state.eps *= 0.5
    state.eps = 0.0
    if math.isfinite(log_posterior(spec, state)):
        return state
    raise InitializationError(
        f"no finite log-posterior after {INIT_RETRIES} retries "
        f"(data range [{x.min():.6g}, {x.max():.6g}], mu={state.mu:.6g}, sigma={state.sigma:.6g})"
    )


def run_chain(spec: ModelSpec, config: McmcConfig, rng: np.random.Generator | None = None,
              *, use_likelihood: bool = True) -> ChainDraws:
    """Sample the posterior of ``spec``.

    ``rng`` defaults to a generator seeded with ``config.seed``.  With
    ``use_likelihood=False`` the chain targets the prior alone, which is
    useful for checking the sampler against known moments.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    target = _Target(spec, use_likelihood)
    init = _initial_state(target, spec)
    random_mode = spec.is_random
    G = spec.n_groups

    mu, ls, eps = init.mu, init.log_sigma, init.eps
    deltas = np.array([init.deltas[g] for g in spec.groups]) if random_mode else None
    tau = init.tau if random_mode else None
    ll, ll_group = target.loglik(mu, ls, eps, deltas)

    sd = math.exp(init.log_sigma)
    n = len(target.x)
    # Starting proposal scales; adaptation corrects them during burn-in.
    scalar_blocks = ["mu", "log_sigma", "eps"] + (["log_tau", "shift"] if random_mode else [])
    log_scale = {
        "mu": math.log(2.0 * sd / math.sqrt(n)),
        "log_sigma": math.log(0.1),
        "eps": math.log(0.05),
        "log_tau": math.log(0.3),
        "shift": math.log(max(sd, 1e-12)),
    }
    delta_log_scale = np.full(G, math.log(0.5 * sd)) if random_mode else None
    # acceptance counts per adaptation window; after burn-in they accumulate
    window_acc = {b: 0 for b in scalar_blocks}
    window_delta = np.zeros(G) if random_mode else None
    window_start = 0
    burn_in_scales = _scales(log_scale, scalar_blocks, delta_log_scale, spec) if config.burn_in == 0 else {}

    names = ["mu", "sigma", "eps"]
    if random_mode:
        names += ["tau", "tau2"] + [delta_name(g) for g in spec.groups]
    out = np.empty((config.retained, len(names)))
    kept = 0
    adapt_round = 0

    def accept(log_ratio: float) -> bool:
        return log_ratio >= 0 or rng.random() < math.exp(log_ratio)

    for t in range(config.iterations):
        # location
        prop = mu + math.exp(log_scale["mu"]) * rng.standard_normal()
        new_ll, new_g = target.loglik(prop, ls, eps, deltas)
        if accept(new_ll - ll + target.prior_mu(prop) - target.prior_mu(mu)):
            mu, ll, ll_group = prop, new_ll, new_g
            window_acc["mu"] += 1

        # log scale
        prop = ls + math.exp(log_scale["log_sigma"]) * rng.standard_normal()
        new_ll, new_g = target.loglik(mu, prop, eps, deltas)
        if accept(new_ll - ll + target.prior_log_sigma(prop) - target.prior_log_sigma(ls)):
            ls, ll, ll_group = prop, new_ll, new_g
            window_acc["log_sigma"] += 1

        # shape
        prop = eps + math.exp(log_scale["eps"]) * rng.standard_normal()
        new_ll, new_g = target.loglik(mu, ls, prop, deltas)
        if accept(new_ll - ll + target.prior_eps(prop) - target.prior_eps(eps)):
            eps, ll, ll_group = prop, new_ll, new_g
            window_acc["eps"] += 1

        if random_mode:
            # tau on the log scale; "+ log tau" is the Jacobian of that transform
            log_tau = math.log(tau)
            prop_log = log_tau + math.exp(log_scale["log_tau"]) * rng.standard_normal()
            prop_tau = math.exp(prop_log)
            cur = half_normal_logpdf(tau, spec.priors.tau_scale) + float(np.sum(target.delta_terms(deltas, tau))) + log_tau
            new = half_normal_logpdf(prop_tau, spec.priors.tau_scale) + float(np.sum(target.delta_terms(deltas, prop_tau))) + prop_log
            if accept(new - cur):
                tau = prop_tau
                window_acc["log_tau"] += 1

            # The delta_g are conditionally independent given the rest, so one
            # vectorised sweep equals G sequential scalar updates.
            prop_d = deltas + np.exp(delta_log_scale) * rng.standard_normal(G)
            _, new_g = target.loglik(mu, ls, eps, prop_d)
            log_ratio = (new_g - ll_group) + target.delta_terms(prop_d, tau) - target.delta_terms(deltas, tau)
            with np.errstate(invalid="ignore", divide="ignore"):
                take = np.log(rng.random(G)) < log_ratio
            deltas = np.where(take, prop_d, deltas)
            ll_group = np.where(take, new_g, ll_group)
            ll = float(np.sum(ll_group))
            window_delta += take

            # joint shift along the mu/delta ridge
            c = math.exp(log_scale["shift"]) * rng.standard_normal()
            pm, pd = mu + c, deltas - c
            new_ll, new_g = target.loglik(pm, ls, eps, pd)
            log_ratio = (new_ll - ll + target.prior_mu(pm) - target.prior_mu(mu)
                         + float(np.sum(target.delta_terms(pd, tau)) - np.sum(target.delta_terms(deltas, tau))))
            if accept(log_ratio):
                mu, deltas, ll, ll_group = pm, pd, new_ll, new_g
                window_acc["shift"] += 1

        step = t + 1
        if step <= config.burn_in:
            if step % config.adapt_window == 0 or step == config.burn_in:
                width = step - window_start
                window_start = step
                adapt_round += 1
                gain = min(1.0, adapt_round ** -0.5)
                for b in scalar_blocks:
                    log_scale[b] += gain * (window_acc[b] / width - config.target_accept)
                    window_acc[b] = 0
                if random_mode:
                    delta_log_scale += gain * (window_delta / width - config.target_accept)
                    window_delta[:] = 0
            if step == config.burn_in:
                burn_in_scales = _scales(log_scale, scalar_blocks, delta_log_scale, spec)
            continue

        if (step - config.burn_in) % config.thin == 0:
            row = [mu, math.exp(ls), eps]
            if random_mode:
                row += [tau, tau * tau]
                row.extend(deltas.tolist())
            out[kept] = row
            kept += 1

    n_post = config.iterations - config.burn_in
    rates = {b: window_acc[b] / n_post for b in scalar_blocks}
    if random_mode:
        for g, a in zip(spec.groups, window_delta):
            rates[delta_name(g)] = float(a) / n_post
    return ChainDraws(tuple(names), out[:kept], rates, config.seed,
                      _scales(log_scale, scalar_blocks, delta_log_scale, spec), burn_in_scales)


def _scales(log_scale, blocks, delta_log_scale, spec) -> dict[str, float]:
    out = {b: math.exp(log_scale[b]) for b in blocks}
    if delta_log_scale is not None:
        for g, s in zip(spec.groups, delta_log_scale):
            out[delta_name(g)] = float(math.exp(s))
    return out


def run_chains(spec: ModelSpec, config: McmcConfig, *, use_likelihood: bool = True) -> list[ChainDraws]:
    """Independent chains on streams spawned from ``config.seed``."""
    if config.chains == 1:
        return [run_chain(spec, config, use_likelihood=use_likelihood)]
    children = np.random.SeedSequence(config.seed).spawn(config.chains)
    return [run_chain(spec, config, np.random.default_rng(c), use_likelihood=use_likelihood) for c in children]


# ---------------------------------------------------------------------------
# summaries and diagnostics


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    sd: float
    lower95: float
    upper95: float
    ess: float


def effective_sample_size(x) -> float:
    """ESS with Geyer's initial positive sequence truncation.

    Returns ``nan`` for a constant chain.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    xc = x - x.mean()
    if not np.any(xc):
        return math.nan
    spec = np.fft.rfft(xc, 2 * n)
    acov = np.fft.irfft(spec * np.conj(spec), 2 * n)[:n]
    rho = acov / acov[0]
    m = n // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m:2]
    nonpos = np.flatnonzero(pairs <= 0)
    stop = nonpos[0] if len(nonpos) else m
    tau = -1.0 + 2.0 * float(np.sum(pairs[:stop]))
    if tau <= 0:
        return float(n)
    return n / tau


def summarize_array(x) -> ParamSummary:
    x = np.asarray(x, dtype=float)
    if len(x) < 10:
        raise SummaryError(f"need at least 10 retained draws to summarize, got {len(x)}")
    if np.all(x == x[0]):
        # avoid rounding noise in the mean and sd of a constant chain
        c = float(x[0])
        return ParamSummary(c, 0.0, c, c, float(len(x)))
    lo, hi = np.quantile(x, [0.025, 0.975])
    ess = effective_sample_size(x)
    return ParamSummary(float(x.mean()), float(x.std(ddof=1)), float(lo), float(hi),
                        float(len(x)) if math.isnan(ess) else ess)


def summarize(draws: ChainDraws) -> dict[str, ParamSummary]:
    """Posterior mean, sd, equal-tail 95% interval and ESS per parameter."""
    if len(draws) < 10:
        raise SummaryError(f"need at least 10 retained draws to summarize, got {len(draws)}")
    return {name: summarize_array(draws.draws[:, j]) for j, name in enumerate(draws.parameter_names)}


def geweke_z(x, first: float = 0.1, last: float = 0.5) -> float:
    """Difference of early and late segment means in standard-error units."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    a, b = x[: int(first * n)], x[n - int(last * n):]

    def var_of_mean(seg):
        ess = effective_sample_size(seg)
        if math.isnan(ess):
            return 0.0
        return float(np.var(seg, ddof=1)) / ess

    denom = math.sqrt(var_of_mean(a) + var_of_mean(b))
    diff = float(a.mean() - b.mean())
    if denom == 0:
        return 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return diff / denom


@dataclass
class Diagnostics:
    ess: dict[str, float | None]
    geweke: dict[str, float | None]
    acceptance_rates: dict[str, float]
    degenerate: list[str]
    warnings: list[str]

    def to_dict(self) -> dict:
        return {
            "ess": self.ess,
            "geweke_z": self.geweke,
            "acceptance_rates": self.acceptance_rates,
            "degenerate": self.degenerate,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def diagnostics(draws: ChainDraws, geweke_limit: float = 3.0) -> Diagnostics:
    """Per-parameter ESS and Geweke scores; problems become warnings."""
    if len(draws) < 100:
        raise SummaryError(f"need at least 100 retained draws for diagnostics, got {len(draws)}")
    ess, gz, degenerate, warnings = {}, {}, [], []
    for j, name in enumerate(draws.parameter_names):
        col = draws.draws[:, j]
        if np.all(col == col[0]):
            degenerate.append(name)
            ess[name] = None
            gz[name] = None
            warnings.append(f"{name}: degenerate chain (zero variance)")
            continue
        ess[name] = effective_sample_size(col)
        z = geweke_z(col)
        gz[name] = z
        if abs(z) > geweke_limit:
            warnings.append(f"{name}: Geweke |z| = {abs(z):.2f} exceeds {geweke_limit:g}")
    return Diagnostics(ess, gz, dict(draws.acceptance_rates), degenerate, warnings)
