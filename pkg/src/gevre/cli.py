"""Command-line interface.

Subcommands: ``blocks``, ``fit``, ``returns``, ``simulate``, ``mle`` and
``replicate-study``.  Settings may also come from a flat ``key=value``
file given with ``--config``; explicit flags win.  Each run writes
``manifest.txt`` to its output directory, in the same ``key=value``
format, so ``gevre <command> --config <out>/manifest.txt`` replays it.

Exit status: 0 success, 1 usage, 2 data error, 3 numerical or
initialization error.  Failures print one line ``error[CODE]: message``
to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .blocks import (
    extract_block_maxima,
    format_summary,
    percent_change,
    read_blocks_csv,
    read_series_csv,
    summarize,
    write_blocks_csv,
)
from .errors import DataError, GevreError
from .gev import return_level_array
from .mcmc import ChainDraws, McmcConfig, diagnostics, run_chain, summarize as summarize_draws, summarize_array
from .model import ModelSpec, PriorSpec
from .oracle import mle_fit, simulate_panel
from .report import (
    POPULATION,
    build_report,
    format_posterior_table,
    format_reports,
    return_level_posterior,
    write_rk_draws,
)


class UsageError(GevreError):
    code = "USAGE"
    exit_status = 1


@dataclass(frozen=True)
class Option:
    key: str
    type: type
    default: object
    help: str
    repeat: bool = False


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise UsageError(f"not a boolean: {text!r}")


PRIOR_OPTIONS = [
    Option("mu_mean", float, None, "prior mean of mu (default: sample mean)"),
    Option("mu_sd", float, None, "prior sd of mu (default: 10 x sample sd)"),
    Option("log_sigma_mean", float, None, "prior mean of log sigma (default: log sample sd)"),
    Option("log_sigma_sd", float, None, "prior sd of log sigma (default: 10)"),
    Option("eps_mean", float, None, "prior mean of eps (default: 0)"),
    Option("eps_sd", float, None, "prior sd of eps (default: 1)"),
    Option("tau_scale", float, None, "half-normal scale of tau (default: 2 x sd of group means)"),
]

MCMC_OPTIONS = [
    Option("iterations", int, 20000, "total MCMC iterations"),
    Option("burn_in", int, 4000, "iterations discarded (and used for adaptation)"),
    Option("thin", int, 5, "keep every n-th post-burn-in draw"),
    Option("adapt_window", int, 50, "iterations between proposal-scale updates"),
    Option("target_accept", float, 0.44, "target acceptance rate per block"),
]

TRUTH_OPTIONS = [
    Option("mu", float, 18.0, "true location"),
    Option("sigma", float, 3.0, "true scale"),
    Option("eps", float, 0.1, "true shape"),
    Option("tau", float, 0.0, "true sd of the group effects"),
    Option("groups", int, 1, "number of groups"),
    Option("per_group", int, 100, "records per group"),
]

COMMANDS: dict[str, tuple[str, list[Option]]] = {
    "blocks": ("extract block maxima from a raw series CSV", [
        Option("input", str, None, "CSV with columns date,value or series,date,value"),
        Option("rule", str, "year", "block rule: year, month or size:N"),
        Option("kind", str, "max", "max or min"),
        Option("drop_partial", _bool, False, "drop partial first/last blocks"),
        Option("prices", _bool, False, "input holds prices; convert to simple daily percent change first"),
        Option("by", str, "series", "tag used to group the summary table"),
        Option("out", str, "out", "output directory"),
    ]),
    "fit": ("fit a fixed- or random-location GEV model by MCMC", [
        Option("input", str, None, "block maxima CSV (block,<tags...>,maximum)"),
        Option("mode", str, "fixed", "location mode: fixed or random"),
        Option("group_tag", str, None, "tag defining the random-effect groups"),
        *MCMC_OPTIONS,
        Option("seed", int, 0, "random seed"),
        Option("k", float, [10.0], "return period (repeatable)", repeat=True),
        *PRIOR_OPTIONS,
        Option("out", str, "out", "output directory"),
    ]),
    "returns": ("return-level reports from a chain CSV", [
        Option("chain", str, None, "chain CSV written by fit"),
        Option("input", str, None, "block maxima CSV used for percentile annotations"),
        Option("k", float, [10.0], "return period (repeatable)", repeat=True),
        Option("per_group", _bool, False, "also report each group (random-location chains)"),
        Option("out", str, "out", "output directory"),
    ]),
    "simulate": ("simulate a random-location GEV panel", [
        *TRUTH_OPTIONS,
        Option("seed", int, 0, "random seed"),
        Option("out", str, "out", "output directory"),
    ]),
    "mle": ("maximum likelihood fit of the fixed-location model", [
        Option("input", str, None, "block maxima CSV"),
        Option("k", float, [10.0], "return period (repeatable)", repeat=True),
        Option("out", str, "out", "output directory"),
    ]),
    "replicate-study": ("simulate-and-fit replicates, checking interval coverage", [
        *TRUTH_OPTIONS,
        Option("mode", str, "random", "location mode used for fitting"),
        Option("replicates", int, 10, "number of replicates"),
        Option("workers", int, 1, "concurrent worker processes"),
        *MCMC_OPTIONS,
        Option("seed", int, 0, "random seed"),
        Option("k", float, [10.0], "return period (repeatable)", repeat=True),
        Option("out", str, "out", "output directory"),
    ]),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gevre", description="Block-maxima GEV analysis with random location effects.")
    parser.add_argument("--version", action="version", version=f"gevre {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    for name, (help_text, options) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key=value settings file (flags override it)")
        for opt in options:
            flag = "--" + opt.key.replace("_", "-")
            text = opt.help
            if opt.default is not None and "default" not in text:
                text += f" (default: {_show(opt.default)})"
            kwargs = {"dest": opt.key, "default": None, "help": text}
            if opt.type is _bool:
                kwargs.update(nargs="?", const="true", type=str)
            elif opt.repeat:
                kwargs.update(action="append", type=opt.type)
            else:
                kwargs.update(type=opt.type)
            p.add_argument(flag, **kwargs)
    return parser


def _show(v) -> str:
    if isinstance(v, list):
        return ",".join(f"{x:g}" for x in v)
    return str(v)


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (in increasing priority)."""
    options = COMMANDS[command][1]
    config = read_config(args.config) if getattr(args, "config", None) else {}
    known = {o.key for o in options} | {"command", "gevre_version"}
    unknown = sorted(set(config) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    if config.get("command", command) != command:
        raise UsageError(f"config was written for {config['command']!r}, not {command!r}")
    settings = {}
    for opt in options:
        flag_value = getattr(args, opt.key)
        if flag_value is not None:
            value = flag_value
        elif opt.key in config:
            value = config[opt.key]
        else:
            value = opt.default
        if value is None:
            settings[opt.key] = None
            continue
        try:
            if opt.repeat:
                items = value.split(",") if isinstance(value, str) else value
                settings[opt.key] = [opt.type(v) for v in items if str(v).strip()]
            else:
                settings[opt.key] = opt.type(value)
        except (TypeError, ValueError):
            raise UsageError(f"bad value for {opt.key}: {value!r}")
    if "k" in settings:
        for k in settings["k"]:
            if not (math.isfinite(k) and k > 1):
                raise UsageError(f"return period k must exceed 1, got {k:g}")
    return settings


def _require(settings: dict, *keys: str) -> None:
    for key in keys:
        if settings.get(key) in (None, ""):
            raise UsageError(f"missing required setting --{key.replace('_', '-')}")


def write_manifest(out: Path, command: str, settings: dict, extra: dict | None = None) -> None:
    lines = ["# gevre run manifest; replay with: gevre %s --config manifest.txt" % command,
             f"command={command}", f"gevre_version={__version__}"]
    for opt in COMMANDS[command][1]:
        if opt.key == "out":
            continue
        v = settings.get(opt.key)
        if v is None:
            continue
        lines.append(f"{opt.key}={_show(v) if isinstance(v, list) else _fmt(v)}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}: {value}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _outdir(settings: dict) -> Path:
    out = Path(settings["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror}")
    return out


def _k_name(k: float) -> str:
    return f"{k:g}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_blocks(s: dict) -> int:
    _require(s, "input")
    if s["kind"] not in ("max", "min"):
        raise UsageError(f"--kind must be max or min, got {s['kind']!r}")
    series = read_series_csv(s["input"])
    bs = None
    for raw in series:
        if s["prices"]:
            raw = percent_change(raw)
        part = extract_block_maxima(raw, s["rule"], s["kind"], drop_partial=s["drop_partial"])
        bs = part if bs is None else bs.concat(part)
    if len(bs) == 0:
        raise DataError("no blocks extracted")
    out = _outdir(s)
    write_blocks_csv(bs, out / "blocks.csv")
    by = s["by"] if s["by"] in bs.tag_names else None
    text = format_summary(summarize(bs, by), by)
    tally = bs.tally
    notes = []
    if tally.empty_blocks:
        notes.append(f"empty blocks skipped: {tally.empty_blocks}")
    if tally.partial_blocks:
        action = "dropped" if tally.dropped_partial else "kept"
        notes.append(f"partial blocks {action}: {', '.join(tally.partial_blocks)}")
    if notes:
        text += "\n".join(notes) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    write_manifest(out, "blocks", s)
    sys.stdout.write(text)
    return 0


def _model_spec(s: dict, bs) -> ModelSpec:
    mode = s["mode"]
    if mode not in ("fixed", "random"):
        raise UsageError(f"--mode must be fixed or random, got {mode!r}")
    group_tag = s.get("group_tag") if mode == "random" else None
    if mode == "random" and not group_tag:
        raise UsageError("--mode random needs --group-tag")
    overrides = {o.key: s[o.key] for o in PRIOR_OPTIONS if s.get(o.key) is not None}
    spec = ModelSpec(bs, mode, group_tag)
    if overrides:
        spec = ModelSpec(bs, mode, group_tag, spec.priors.with_overrides(**overrides))
    return spec


def _mcmc_config(s: dict, seed: int | None = None) -> McmcConfig:
    return McmcConfig(iterations=s["iterations"], burn_in=s["burn_in"], thin=s["thin"],
                      seed=s["seed"] if seed is None else seed,
                      adapt_window=s["adapt_window"], target_accept=s["target_accept"])


def cmd_fit(s: dict) -> int:
    _require(s, "input")
    bs = read_blocks_csv(s["input"])
    spec = _model_spec(s, bs)
    config = _mcmc_config(s)
    draws = run_chain(spec, config)
    out = _outdir(s)
    draws.to_csv(out / "chain.csv")
    summary = summarize_draws(draws)
    extra = {f"R^{_k_name(k)}": summarize_array(return_level_posterior(draws, k)) for k in s["k"]}
    title = "Model: " + ("fixed location" if not spec.is_random else f"random location by {spec.group_tag}")
    table = title + "\n" + format_posterior_table(summary, "fixed" if not spec.is_random else "random", extra)
    (out / "summary.txt").write_text(table, encoding="utf-8")
    diag = diagnostics(draws).to_dict() if len(draws) >= 100 else {
        "warnings": [f"only {len(draws)} retained draws; diagnostics need 100"],
        "acceptance_rates": draws.acceptance_rates}
    diag["retained"] = len(draws)
    diag["proposal_scales"] = draws.proposal_scales
    diag["priors"] = {k: v for k, v in vars(spec.priors).items() if v is not None}
    (out / "diagnostics.json").write_text(json.dumps(_jsonable(diag), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, "fit", s)
    sys.stdout.write(table)
    for w in diag.get("warnings", []):
        sys.stderr.write(f"warning: {w}\n")
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def cmd_returns(s: dict) -> int:
    _require(s, "chain", "input")
    try:
        draws = ChainDraws.from_csv(s["chain"])
    except OSError as exc:
        raise DataError(f"cannot read {s['chain']}: {exc.strerror}")
    bs = read_blocks_csv(s["input"])
    scopes = [POPULATION]
    if s["per_group"]:
        if not draws.group_labels:
            raise DataError("--per-group needs a random-location chain with delta[...] columns")
        scopes += draws.group_labels
    out = _outdir(s)
    text = ""
    for k in s["k"]:
        reports = []
        for scope in scopes:
            rk = return_level_posterior(draws, k, scope)
            reports.append(build_report(rk, bs, k, scope))
            suffix = "" if scope == POPULATION else f"_{scope}"
            write_rk_draws(rk, out / f"rk_draws_k{_k_name(k)}{suffix}.csv", k)
        table = format_reports(reports, f"Return level R^{_k_name(k)}")
        (out / f"report_k{_k_name(k)}.txt").write_text(table, encoding="utf-8")
        payload = [_jsonable(r.to_dict()) for r in reports]
        (out / f"report_k{_k_name(k)}.json").write_text(
            json.dumps(payload if len(payload) > 1 else payload[0], indent=2, sort_keys=True) + "\n", encoding="utf-8")
        text += table
    write_manifest(out, "returns", s)
    sys.stdout.write(text)
    return 0


def cmd_simulate(s: dict) -> int:
    panel = simulate_panel({k: s[k] for k in ("mu", "sigma", "eps", "tau")}, s["groups"], s["per_group"], s["seed"])
    out = _outdir(s)
    write_blocks_csv(panel.data, out / "panel.csv")
    (out / "truth.json").write_text(json.dumps(panel.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, "simulate", s)
    sys.stdout.write(f"wrote {len(panel.data)} records in {s['groups']} group(s) to {out / 'panel.csv'}\n")
    return 0


def cmd_mle(s: dict) -> int:
    _require(s, "input")
    bs = read_blocks_csv(s["input"])
    fit = mle_fit(bs)
    out = _outdir(s)
    text = fit.to_json(s["k"])
    (out / "mle.json").write_text(text, encoding="utf-8")
    write_manifest(out, "mle", s)
    sys.stdout.write(text)
    return 0


def _replicate(args) -> list[dict]:
    index, s, sim_seed, mcmc_seed = args
    truth = {k: s[k] for k in ("mu", "sigma", "eps", "tau")}
    panel = simulate_panel(truth, s["groups"], s["per_group"], sim_seed)
    mode = s["mode"]
    spec = ModelSpec(panel.data, mode, "group" if mode == "random" else None)
    draws = run_chain(spec, _mcmc_config(s, mcmc_seed))
    summary = summarize_draws(draws)
    targets = {"mu": truth["mu"], "sigma": truth["sigma"], "eps": truth["eps"]}
    if mode == "random":
        targets["tau2"] = truth["tau"] ** 2
    rows = []
    for name, true in targets.items():
        ps = summary[name]
        rows.append(_row(index, sim_seed, mcmc_seed, name, true, ps))
    for k in s["k"]:
        true = float(return_level_array(truth["mu"], truth["sigma"], truth["eps"], k))
        ps = summarize_array(return_level_posterior(draws, k))
        rows.append(_row(index, sim_seed, mcmc_seed, f"R{_k_name(k)}", true, ps))
    return rows


def _row(index, sim_seed, mcmc_seed, name, true, ps) -> dict:
    return {"replicate": index, "sim_seed": sim_seed, "mcmc_seed": mcmc_seed, "parameter": name,
            "truth": true, "mean": ps.mean, "sd": ps.sd, "lower95": ps.lower95, "upper95": ps.upper95,
            "covered": ps.lower95 <= true <= ps.upper95}


def replicate_seeds(seed: int, replicates: int) -> list[tuple[int, int]]:
    """Per-replicate (simulation, MCMC) seeds derived from one run seed."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(replicates):
        sim, mc = child.generate_state(2, dtype=np.uint32)
        out.append((int(sim), int(mc)))
    return out


def run_replicate_study(s: dict) -> list[dict]:
    jobs = [(i + 1, s, sim, mc) for i, (sim, mc) in enumerate(replicate_seeds(s["seed"], s["replicates"]))]
    if s.get("workers", 1) > 1:
        with ProcessPoolExecutor(max_workers=s["workers"]) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]
    return [row for rows in results for row in rows]


def cmd_replicate_study(s: dict) -> int:
    if s["replicates"] < 1:
        raise UsageError("--replicates must be at least 1")
    if s["mode"] == "random" and s["groups"] < 2:
        raise UsageError("random-location replicates need --groups >= 2")
    rows = run_replicate_study(s)
    out = _outdir(s)
    fields = list(rows[0])
    with open(out / "replicates.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    coverage: dict[str, list[int]] = {}
    for r in rows:
        c = coverage.setdefault(r["parameter"], [0, 0])
        c[0] += int(r["covered"])
        c[1] += 1
    lines = [f"{'Parameter':<12}{'Covered':>10}{'Replicates':>12}"]
    lines += [f"{p:<12}{c:>10d}{n:>12d}" for p, (c, n) in coverage.items()]
    text = "\n".join(lines) + "\n"
    (out / "coverage.txt").write_text(text, encoding="utf-8")
    (out / "study.json").write_text(json.dumps({p: {"covered": c, "replicates": n} for p, (c, n) in coverage.items()},
                                               indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, "replicate-study", s)
    sys.stdout.write(text)
    return 0


HANDLERS = {
    "blocks": cmd_blocks,
    "fit": cmd_fit,
    "returns": cmd_returns,
    "simulate": cmd_simulate,
    "mle": cmd_mle,
    "replicate-study": cmd_replicate_study,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            raise UsageError("no command given")
        settings = resolve(args.command, args)
        return HANDLERS[args.command](settings)
    except GevreError as exc:
        sys.stderr.write(f"error[{exc.code}]: {' '.join(str(exc).split())}\n")
        return exc.exit_status
    except OSError as exc:
        sys.stderr.write(f"error[IO]: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
