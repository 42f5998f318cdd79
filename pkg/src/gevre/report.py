"""Return-level posteriors, credible bounds and percentile annotations."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .blocks import BlockSeries, empirical_percentile
from .errors import ReportError
from .gev import return_level_array
from .mcmc import ChainDraws, ParamSummary, delta_name, summarize_array

POPULATION = "population"


def return_level_posterior(draws: ChainDraws, k: float, scope: str = POPULATION) -> np.ndarray:
    """Per-draw return level.

    ``scope`` is ``"population"`` (group effect set to zero) or a group
    label, in which case each draw's ``mu + delta_g`` is used.
    """
    if not k > 1:
        raise ReportError(f"return period k must exceed 1, got {k}")
    missing = [c for c in ("mu", "sigma", "eps") if c not in draws]
    if missing:
        raise ReportError(f"chain is missing columns {missing}")
    mu = draws.column("mu")
    if scope != POPULATION:
        name = delta_name(scope)
        if name not in draws:
            raise ReportError(f"chain has no group effect column {name!r}")
        mu = mu + draws.column(name)
    return return_level_array(mu, draws.column("sigma"), draws.column("eps"), k)


@dataclass(frozen=True)
class ReturnLevelReport:
    k: float
    estimate: float
    sd: float
    lower95: float
    upper95: float
    percentile_of: dict[str, float]
    scope: str = POPULATION
    n_blocks: int = 0
    ess: float = math.nan
    extrapolation: bool = False
    maxima: tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("maxima")
        d["ess"] = None if math.isnan(self.ess) else self.ess
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_report(rk_draws, bs: BlockSeries, k: float, scope: str = POPULATION) -> ReturnLevelReport:
    """Summarize return-level draws and annotate each statistic with its
    empirical percentile among the observed maxima."""
    rk = np.asarray(rk_draws, dtype=float)
    if rk.size == 0:
        raise ReportError("no return-level draws to summarize")
    if rk.size >= 10:
        s = summarize_array(rk)
    else:
        s = ParamSummary(float(rk.mean()), float(rk.std(ddof=1)) if rk.size > 1 else 0.0,
                         float(np.quantile(rk, 0.025)), float(np.quantile(rk, 0.975)), float(rk.size))
    pct = {
        "lower": empirical_percentile(s.lower95, bs),
        "estimate": empirical_percentile(s.mean, bs),
        "upper": empirical_percentile(s.upper95, bs),
    }
    return ReturnLevelReport(
        k=float(k), estimate=s.mean, sd=s.sd, lower95=s.lower95, upper95=s.upper95,
        percentile_of=pct, scope=scope, n_blocks=len(bs), ess=s.ess,
        extrapolation=k > 10 * len(bs), maxima=tuple(bs.values.tolist()),
    )


def data_percentile(maxima, target_percentile: float) -> float:
    """Value at ``target_percentile`` of the maxima (linear interpolation)."""
    data = maxima.values if isinstance(maxima, BlockSeries) else np.asarray(maxima, dtype=float)
    return float(np.percentile(data, target_percentile))


def coverage_check(report: ReturnLevelReport, target_percentile: float = 90.0,
                   maxima=None) -> tuple[bool, str]:
    """Does the credible interval contain the observed ``target_percentile``?

    The maxima default to those the report was built against.
    """
    data = report.maxima if maxima is None else maxima
    if data is None or len(data) == 0:
        raise ReportError("coverage check needs the observed maxima")
    value = data_percentile(data, target_percentile)
    inside = report.lower95 <= value <= report.upper95
    verb = "lies within" if inside else "lies outside"
    line = (f"{target_percentile:g}th percentile of the maxima ({value:.2f}) {verb} "
            f"the 95% interval for R^{report.k:g} [{report.lower95:.2f}, {report.upper95:.2f}]")
    return inside, line


# ---------------------------------------------------------------------------
# formatting


def _cell(value: float, pct: float | None = None) -> str:
    if pct is None:
        return f"{value:.2f}"
    return f"{value:.2f} {pct:.0f}%"


def format_reports(reports: list[ReturnLevelReport], title: str = "") -> str:
    """Aligned table: estimate, sd and bounds, each annotated with the
    percentage of observed maxima at or below it."""
    cols = ["Scope", "k", "Estimate", "Std. dev.", "95% lower", "95% upper"]
    rows = []
    for r in reports:
        p = r.percentile_of
        rows.append([r.scope, f"{r.k:g}", _cell(r.estimate, p["estimate"]), f"{r.sd:.2f}",
                     _cell(r.lower95, p["lower"]), _cell(r.upper95, p["upper"])])
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(cols)]
    lines = [title] if title else []
    lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cols, widths))))
    for row in rows:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
    lines.append("Percentages: share of observed block maxima at or below the value.")
    flagged = [r for r in reports if r.extrapolation]
    if flagged:
        lines.append(f"Warning: k exceeds 10x the number of blocks for {len(flagged)} row(s); extrapolation.")
    return "\n".join(lines) + "\n"


def format_posterior_table(summary: dict[str, ParamSummary], model_name: str = "Model",
                           extra: dict[str, ParamSummary] | None = None) -> str:
    """Parameter table with columns estimate, sd and 95% bounds.

    ``tau`` is omitted in favour of ``tau2``; group effects are listed last.
    """
    rows = dict(summary)
    rows.pop("tau", None)
    if extra:
        rows.update(extra)
    order = [n for n in ("eps", "mu", "sigma", "tau2") if n in rows]
    order += [n for n in rows if n not in order and not n.startswith("delta[")]
    order += [n for n in rows if n.startswith("delta[")]
    header = f"{'Model':<12}{'Parameter':<20}{'Estimate':>10}{'Std. dev.':>11}{'95% lower':>11}{'95% upper':>11}{'ESS':>9}"
    lines = [header]
    for i, name in enumerate(order):
        s = rows[name]
        lines.append(f"{model_name if i == 0 else '':<12}{name:<20}{s.mean:>10.2f}{s.sd:>11.2f}"
                     f"{s.lower95:>11.2f}{s.upper95:>11.2f}{s.ess:>9.0f}")
    return "\n".join(lines) + "\n"


def write_rk_draws(rk, path: str | Path, k: float) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"R{k:g}"])
        for v in rk:
            w.writerow([repr(float(v))])
