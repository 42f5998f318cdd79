"""Block-maxima extraction, summaries and empirical percentiles."""

from __future__ import annotations

import calendar
import csv
import datetime as dt
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

#: Minimum fraction of a calendar block spanned by observations before a
#: first or last block is flagged as partial.
PARTIAL_COVERAGE = 0.9


@dataclass(frozen=True)
class RawSeries:
    """One labelled daily (or irregular) time series."""

    dates: tuple[dt.date, ...]
    values: np.ndarray
    label: str = "series"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", values)
        if len(self.dates) != len(values):
            raise DataError(f"{self.label}: {len(self.dates)} dates but {len(values)} values")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{self.label}: values must be finite")
        for a, b in zip(self.dates, self.dates[1:]):
            if not b > a:
                raise DataError(f"{self.label}: dates must be strictly increasing ({a} then {b})")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class BlockRecord:
    maximum: float
    block_label: str
    group_tags: dict[str, str]


@dataclass
class BlockTally:
    """Bookkeeping from extraction: blocks omitted or flagged."""

    empty_blocks: int = 0
    partial_blocks: list[str] = field(default_factory=list)
    dropped_partial: bool = False

    def merge(self, other: "BlockTally") -> "BlockTally":
        return BlockTally(
            self.empty_blocks + other.empty_blocks,
            self.partial_blocks + other.partial_blocks,
            self.dropped_partial or other.dropped_partial,
        )


@dataclass(frozen=True)
class BlockSeries:
    records: tuple[BlockRecord, ...]
    kind: str = "max"
    tally: BlockTally = field(default_factory=BlockTally, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.kind not in ("max", "min"):
            raise DataError(f"extremum kind must be 'max' or 'min', got {self.kind!r}")
        if self.records:
            names = set(self.records[0].group_tags)
            for rec in self.records[1:]:
                if set(rec.group_tags) != names:
                    raise DataError(f"block {rec.block_label!r} has tags {sorted(rec.group_tags)}, expected {sorted(names)}")

    def __len__(self):
        return len(self.records)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.maximum for r in self.records], dtype=float)

    @property
    def labels(self) -> list[str]:
        return [r.block_label for r in self.records]

    @property
    def tag_names(self) -> list[str]:
        return list(self.records[0].group_tags) if self.records else []

    def tag_values(self, name: str) -> list[str]:
        if name not in self.tag_names:
            raise DataError(f"tag {name!r} not present; available tags: {self.tag_names}")
        return [r.group_tags[name] for r in self.records]

    def concat(self, other: "BlockSeries") -> "BlockSeries":
        if len(self) and len(other) and self.kind != other.kind:
            raise DataError("cannot concatenate block series of different kinds")
        kind = self.kind if len(self) else other.kind
        return BlockSeries(self.records + other.records, kind, self.tally.merge(other.tally))

    @classmethod
    def from_values(cls, values: Iterable[float], tags: dict[str, Sequence[str]] | None = None,
                    labels: Sequence[str] | None = None, kind: str = "max") -> "BlockSeries":
        """Build a series from bare numbers, e.g. for simulations and tests."""
        values = [float(v) for v in values]
        tags = tags or {}
        if labels is None:
            labels = [f"b{i + 1:04d}" for i in range(len(values))]
        records = [
            BlockRecord(v, str(lab), {name: str(tv[i]) for name, tv in tags.items()})
            for i, (v, lab) in enumerate(zip(values, labels))
        ]
        return cls(tuple(records), kind)


# ---------------------------------------------------------------------------
# block rules


def parse_rule(rule: str) -> tuple[str, int]:
    """``year``, ``month`` or ``size:N`` -> (name, N)."""
    rule = rule.strip().lower()
    if rule in ("year", "calendar-year"):
        return "year", 0
    if rule in ("month", "calendar-month"):
        return "month", 0
    if rule.startswith("size:"):
        try:
            n = int(rule[5:])
        except ValueError:
            raise DataError(f"bad block size in rule {rule!r}")
        if n < 1:
            raise DataError(f"block size must be positive, got {n}")
        return "size", n
    raise DataError(f"unknown block rule {rule!r}; use year, month or size:N")


def _month_span(year: int, month: int) -> tuple[dt.date, dt.date]:
    last = calendar.monthrange(year, month)[1]
    return dt.date(year, month, 1), dt.date(year, month, last)


def _calendar_keys(first: dt.date, last: dt.date, rule: str) -> list[tuple[int, int]]:
    if rule == "year":
        return [(y, 0) for y in range(first.year, last.year + 1)]
    keys = []
    y, m = first.year, first.month
    while (y, m) <= (last.year, last.month):
        keys.append((y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return keys


def extract_block_maxima(series: RawSeries, rule: str = "year", kind: str = "max",
                         drop_partial: bool = False) -> BlockSeries:
    """Split ``series`` into blocks and keep each block's extreme value.

    Parameters
    ----------
    series : RawSeries
        Input observations, non-empty.
    rule : str
        ``"year"``, ``"month"`` or ``"size:N"`` (consecutive runs of N
        observations).
    kind : {"max", "min"}
        Minima are extracted as the negated maxima of the negated series.
    drop_partial : bool
        Drop first/last blocks whose observations cover less than
        ``PARTIAL_COVERAGE`` of the block (otherwise they are kept and
        listed in the tally).

    Returns
    -------
    BlockSeries
        One record per non-empty block, tagged with ``series`` and
        ``year`` (plus ``month`` for the monthly rule).  The tally counts
        calendar blocks without observations and lists partial blocks.
    """
    if kind not in ("max", "min"):
        raise DataError(f"extremum kind must be 'max' or 'min', got {kind!r}")
    if len(series) == 0:
        raise DataError(f"{series.label}: empty series")
    name, size = parse_rule(rule)
    sign = 1.0 if kind == "max" else -1.0
    values = sign * series.values
    dates = series.dates
    tally = BlockTally(dropped_partial=drop_partial)
    records: list[BlockRecord] = []

    if name == "size":
        n_blocks = math.ceil(len(values) / size)
        for b in range(n_blocks):
            chunk = values[b * size:(b + 1) * size]
            label = dates[b * size].isoformat()
            if len(chunk) < size:
                tally.partial_blocks.append(label)
                if drop_partial:
                    continue
            tags = {"series": series.label, "year": str(dates[b * size].year)}
            records.append(BlockRecord(sign * float(chunk.max()), label, tags))
        return BlockSeries(tuple(records), kind, tally)

    buckets: OrderedDict[tuple[int, int], list[int]] = OrderedDict(
        (key, []) for key in _calendar_keys(dates[0], dates[-1], name)
    )
    for i, d in enumerate(dates):
        buckets[(d.year, d.month if name == "month" else 0)].append(i)

    keys = list(buckets)
    for pos, (key, idx) in enumerate(buckets.items()):
        year, month = key
        if not idx:
            tally.empty_blocks += 1
            continue
        if name == "year":
            label = f"{year}"
            start, end = dt.date(year, 1, 1), dt.date(year, 12, 31)
            tags = {"series": series.label, "year": str(year)}
        else:
            label = f"{year}-{month:02d}"
            start, end = _month_span(year, month)
            tags = {"series": series.label, "year": str(year), "month": calendar.month_name[month]}
        if pos in (0, len(keys) - 1):
            covered = (dates[idx[-1]] - dates[idx[0]]).days + 1
            if covered < PARTIAL_COVERAGE * ((end - start).days + 1):
                tally.partial_blocks.append(label)
                if drop_partial:
                    continue
        block = values[idx]
        records.append(BlockRecord(sign * float(block.max()), label, tags))
    return BlockSeries(tuple(records), kind, tally)


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class GroupSummary:
    group: str
    count: int
    mean: float
    sd: float | None  # None when the group has a single record


def summarize(bs: BlockSeries, by: str | None = None) -> list[GroupSummary]:
    """Count, mean and sample sd (n-1) per value of tag ``by``, then overall."""
    if len(bs) == 0:
        raise DataError("cannot summarize an empty block series")
    values = bs.values
    groups: OrderedDict[str, list[float]] = OrderedDict()
    if by is not None:
        for v, g in zip(values, bs.tag_values(by)):
            groups.setdefault(g, []).append(v)
    groups["all"] = list(values)
    out = []
    for g, vals in groups.items():
        arr = np.asarray(vals)
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else None
        out.append(GroupSummary(g, len(arr), float(arr.mean()), sd))
    return out


def format_summary(rows: list[GroupSummary], by: str | None = None) -> str:
    head = by.capitalize() if by else "Group"
    lines = [f"{head:<16}{'Blocks':>8}{'Mean':>10}{'Std. dev.':>12}"]
    for r in rows:
        sd = "n/a" if r.sd is None else f"{r.sd:.2f}"
        lines.append(f"{r.group:<16}{r.count:>8d}{r.mean:>10.2f}{sd:>12}")
    return "\n".join(lines) + "\n"


def empirical_percentile(value: float, bs) -> float:
    """Percent of block maxima less than or equal to ``value`` (unrounded)."""
    data = bs.values if isinstance(bs, BlockSeries) else np.asarray(bs, dtype=float)
    if len(data) == 0:
        raise DataError("empirical percentile of an empty sample")
    return 100.0 * np.count_nonzero(data <= value) / len(data)


def percent_change(series: RawSeries) -> RawSeries:
    """Simple daily percent change ``100 * (v_t / v_{t-1} - 1)``.

    This is a convenience for price series; it assumes simple (not log)
    returns between consecutive observations.
    """
    if len(series) < 2:
        raise DataError(f"{series.label}: need at least two prices for returns")
    prices = series.values
    if np.any(prices[:-1] == 0):
        raise DataError(f"{series.label}: zero price, percent change undefined")
    return RawSeries(series.dates[1:], 100.0 * (prices[1:] / prices[:-1] - 1.0), series.label)


# ---------------------------------------------------------------------------
# CSV I/O


def _parse_date(text: str, where: str) -> dt.date:
    text = text.strip()
    try:
        return dt.date.fromisoformat(text[:10])
    except ValueError:
        raise DataError(f"{where}: bad ISO-8601 date {text!r}")


def _parse_float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{where}: bad numeric value {text!r}")
    if not math.isfinite(v):
        raise DataError(f"{where}: non-finite value {text!r}")
    return v


def read_series_csv(path: str | Path, label: str | None = None) -> list[RawSeries]:
    """Read ``date,value`` or ``series,date,value`` CSV into raw series.

    Rows of one series need not be contiguous but must have distinct dates;
    they are sorted by date.
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        cols = [h.strip().lower() for h in header]
        if cols == ["date", "value"]:
            multi = False
        elif cols == ["series", "date", "value"]:
            multi = True
        else:
            raise DataError(f"{path}:1: expected header 'date,value' or 'series,date,value', got {','.join(header)!r}")
        data: OrderedDict[str, list[tuple[dt.date, float, int]]] = OrderedDict()
        default = label or path.stem
        for row in reader:
            lineno = reader.line_num
            where = f"{path}:{lineno}"
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols):
                raise DataError(f"{where}: expected {len(cols)} fields, got {len(row)}")
            if multi:
                name, d, v = row[0].strip(), row[1], row[2]
                if not name:
                    raise DataError(f"{where}: empty series name")
            else:
                name, d, v = default, row[0], row[1]
            data.setdefault(name, []).append((_parse_date(d, where), _parse_float(v, where), lineno))
    if not data:
        raise DataError(f"{path}: no data rows")
    out = []
    for name, rows in data.items():
        rows.sort(key=lambda r: r[0])
        for a, b in zip(rows, rows[1:]):
            if a[0] == b[0]:
                raise DataError(f"{path}:{b[2]}: duplicate date {b[0]} in series {name!r}")
        out.append(RawSeries(tuple(r[0] for r in rows), np.array([r[1] for r in rows]), name))
    return out


def write_blocks_csv(bs: BlockSeries, path: str | Path) -> None:
    """Write ``block,<tags...>,maximum`` (column named ``minimum`` for minima)."""
    tags = bs.tag_names
    value_col = "maximum" if bs.kind == "max" else "minimum"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["block", *tags, value_col])
        for r in bs.records:
            w.writerow([r.block_label, *(r.group_tags[t] for t in tags), repr(r.maximum)])


def read_blocks_csv(path: str | Path) -> BlockSeries:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "block" or header[-1] not in ("maximum", "minimum"):
            raise DataError(f"{path}:1: expected header 'block,<tags...>,maximum', got {','.join(header)!r}")
        kind = "max" if header[-1] == "maximum" else "min"
        tags = header[1:-1]
        records = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            where = f"{path}:{reader.line_num}"
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            records.append(BlockRecord(_parse_float(row[-1], where), row[0],
                                       {t: row[i + 1] for i, t in enumerate(tags)}))
    if not records:
        raise DataError(f"{path}: no block rows")
    return BlockSeries(tuple(records), kind)
