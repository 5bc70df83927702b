"""Panel CSV input/output, quote filters and the daily empirical VV/LV pipeline."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .harness import (
    DAYS_PER_YEAR,
    OPTION_SERIES,
    WindowInput,
    WindowRejected,
    window_estimators,
    window_series,
    worker_count,
)
from .panel import OptionPanel, TenorSlice

log = logging.getLogger(__name__)

PANEL_COLUMNS = ["date", "time", "tenor_days", "strike", "bid", "ask", "forward"]
OUTPUT_COLUMNS = ["date", "estimator", "estimate", "avar", "ci_low", "ci_high", "k_n", "flags"]
OPTION_ESTIMATORS = tuple(f"{kind}_{s}" for kind in ("VV", "LV") for s in OPTION_SERIES)
KEY_DIGITS = 6


@dataclass(frozen=True)
class FilterConfig:
    min_bid: float = 0.0  # bids must be strictly above this
    max_ask_bid_ratio: float = 10.0
    max_near_money_gap: float = 5.0
    near_money_count: int = 3
    max_edge_ratio: float = 0.025
    min_tenor_days: float = 2.0
    max_tenor_days: float = 16.0
    min_tenor_gap_days: float = 3.0
    exclude_dates: tuple = ()
    sampling_minutes: float = 5.0
    steps_per_day: int = 78  # delta_n = 1 / (252 * steps_per_day)

    @property
    def delta_n(self) -> float:
        return 1.0 / (DAYS_PER_YEAR * self.steps_per_day)


@dataclass
class AuditLog:
    """Every applied filter, keyed by reason, with enough context to replay it."""

    entries: list = field(default_factory=list)

    def add(self, reason: str, **ctx):
        self.entries.append({"reason": reason, **ctx})

    def counts(self) -> dict:
        out = defaultdict(int)
        for e in self.entries:
            out[e["reason"]] += 1
        return dict(out)


@dataclass
class DayPanels:
    date: str
    times: list
    panels: list  # OptionPanel per timestamp with slices (short, long); filtered ones are empty
    tenor_keys: tuple


# -- writing -------------------------------------------------------------------------


def minutes_to_clock(minutes: float) -> str:
    h, m = divmod(int(round(minutes)), 60)
    return f"{h:02d}:{m:02d}"


def clock_to_minutes(text: str) -> float:
    parts = text.strip().split(":")
    if len(parts) not in (2, 3):
        raise ValueError(f"bad time {text!r}")
    h, m = int(parts[0]), int(parts[1])
    s = float(parts[2]) if len(parts) == 3 else 0.0
    return h * 60 + m + s / 60.0


def write_panels_csv(path, date: str, panels, tenor_days, start_minutes: float = 570.0,
                     sampling_minutes: float = 5.0) -> None:
    """One row per quote; bid and ask both carry the price so the mid reproduces it exactly.

    ``tenor_days[j]`` lists the tenor (in days) of each slice of ``panels[j]``.
    """
    if hasattr(path, "write"):
        _write_panel_rows(path, date, panels, tenor_days, start_minutes, sampling_minutes)
        return
    with open(path, "w", newline="") as fh:
        _write_panel_rows(fh, date, panels, tenor_days, start_minutes, sampling_minutes)


def _write_panel_rows(fh, date, panels, tenor_days, start_minutes, sampling_minutes):
    w = csv.writer(fh)
    w.writerow(PANEL_COLUMNS)
    for j, (panel, days) in enumerate(zip(panels, tenor_days)):
        clock = minutes_to_clock(start_minutes + j * sampling_minutes)
        for sl, d in zip(panel.slices, days):
            for k, p in zip(sl.strikes, sl.prices):
                w.writerow([date, clock, repr(float(d)), repr(float(k)), repr(float(p)),
                            repr(float(p)), repr(float(panel.forward))])


# -- reading and filtering ---------------------------------------------------------------


@dataclass
class _Quote:
    strike: float
    bid: float
    ask: float
    side: str | None

    @property
    def mid(self) -> float:
        return (self.bid + self.ask) / 2.0


def _read_rows(path: Path, audit: AuditLog):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(PANEL_COLUMNS) - {"forward"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                fwd_text = (row.get("forward") or "").strip()
                yield {
                    "date": row["date"].strip(),
                    "minutes": clock_to_minutes(row["time"]),
                    "time": row["time"].strip(),
                    "tenor_days": float(row["tenor_days"]),
                    "strike": float(row["strike"]),
                    "bid": float(row["bid"]),
                    "ask": float(row["ask"]),
                    "forward": float(fwd_text) if fwd_text else None,
                    "side": (row.get("side") or "").strip().lower() or None,
                }
            except (ValueError, TypeError, AttributeError) as exc:
                audit.add("malformed_row", file=str(path), line=lineno, error=str(exc))
                log.warning("%s:%d: skipping malformed row (%s)", path, lineno, exc)


def synthetic_forward(quotes, count: int = 3) -> float:
    """Put-call parity forward K + C - P (zero rates), median over the strikes where |C - P| is smallest."""
    calls = {q.strike: q.mid for q in quotes if q.side == "call"}
    puts = {q.strike: q.mid for q in quotes if q.side == "put"}
    common = sorted(set(calls) & set(puts), key=lambda k: abs(calls[k] - puts[k]))
    if not common:
        raise ValueError("no strike quoted on both sides")
    return float(np.median([k + calls[k] - puts[k] for k in common[:count]]))


def otm_slice(quotes, forward: float, tenor_days: float) -> TenorSlice:
    """Out-of-the-money quotes: puts at strikes <= forward, calls above."""
    by_strike = {}
    for q in quotes:
        if q.side is not None and q.side != ("put" if q.strike <= forward else "call"):
            continue
        by_strike[q.strike] = q.mid
    ks = np.array(sorted(by_strike))
    return TenorSlice(tenor_days / DAYS_PER_YEAR, ks, np.array([by_strike[k] for k in ks]))


def near_money_gap(strikes, forward: float, count: int = 3) -> float:
    """Largest strike gap among the ``count`` nearest puts and calls around the forward."""
    ks = np.asarray(strikes)
    below = ks[ks <= forward][-count:]
    above = ks[ks > forward][:count]
    near = np.concatenate([below, above])
    if len(near) < 2:
        return math.inf
    return float(np.max(np.diff(near)))


def edge_ratio(prices) -> float:
    p = np.asarray(prices)
    return float(max(p[0], p[-1]) / p.max())


def quote_passes(bid: float, ask: float, cfg: FilterConfig) -> str:
    """Empty string if the quote survives the bid filters, otherwise the reason."""
    if not bid > cfg.min_bid:
        return "zero_bid"
    if not ask / bid < cfg.max_ask_bid_ratio:
        return "wide_spread"
    return ""


def maturity_passes(sl: TenorSlice, forward: float, cfg: FilterConfig) -> str:
    if len(sl) < 3:
        return "too_few_strikes"
    if near_money_gap(sl.strikes, forward, cfg.near_money_count) > cfg.max_near_money_gap:
        return "near_money_gap"
    if edge_ratio(sl.prices) > cfg.max_edge_ratio:
        return "edge_ratio"
    return ""


def select_tenor_pair(tenor_days, cfg: FilterConfig):
    """Shortest admissible tenor and the shortest one at least the minimum gap longer."""
    ok = sorted(t for t in tenor_days if cfg.min_tenor_days <= t <= cfg.max_tenor_days)
    for i, t in enumerate(ok):
        for t2 in ok[i + 1:]:
            if t2 - t >= cfg.min_tenor_gap_days:
                return t, t2
    return None


def expiry_key(tenor_days: float, minutes_elapsed: float, cfg: FilterConfig) -> float:
    """Tenor plus elapsed business time, constant for one expiry through the day."""
    elapsed = minutes_elapsed / cfg.sampling_minutes / cfg.steps_per_day
    return round(tenor_days + elapsed, KEY_DIGITS)


def ingest_panels(csv_dir, cfg: FilterConfig = FilterConfig(), audit: AuditLog | None = None):
    """Read every ``*.csv`` under ``csv_dir`` and yield filtered two-tenor days in date order."""
    audit = audit if audit is not None else AuditLog()
    paths = sorted(Path(csv_dir).glob("*.csv")) if Path(csv_dir).is_dir() else [Path(csv_dir)]
    # date -> minutes -> tenor_days -> quotes
    book = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    forwards = defaultdict(dict)
    clocks = {}
    for path in paths:
        for r in _read_rows(path, audit):
            if r["date"] in cfg.exclude_dates:
                continue
            why = quote_passes(r["bid"], r["ask"], cfg)
            if why:
                audit.add(why, date=r["date"], time=r["time"], tenor_days=r["tenor_days"], strike=r["strike"])
                continue
            book[r["date"]][r["minutes"]][r["tenor_days"]].append(_Quote(r["strike"], r["bid"], r["ask"], r["side"]))
            clocks[(r["date"], r["minutes"])] = r["time"]
            if r["forward"] is not None:
                forwards[r["date"]][r["minutes"]] = r["forward"]
    for date in cfg.exclude_dates:
        audit.add("excluded_date", date=date)

    for date in sorted(book):
        day = _assemble_day(date, book[date], forwards[date], clocks, cfg, audit)
        if day is not None:
            yield day


def _assemble_day(date, by_time, fwd_by_time, clocks, cfg, audit):
    times = sorted(by_time)
    t0 = times[0]
    # forwards: quoted, else parity-implied from the nearest-expiry quotes at that time
    fwd = {}
    for m in times:
        if m in fwd_by_time:
            fwd[m] = fwd_by_time[m]
            continue
        try:
            first = min(by_time[m])
            fwd[m] = synthetic_forward(by_time[m][first])
        except ValueError:
            audit.add("no_forward", date=date, time=clocks[(date, m)])
    times = [m for m in times if m in fwd]
    if len(times) < 5:
        audit.add("day_skipped", date=date, detail="fewer than five usable timestamps")
        return None
    keys0 = {expiry_key(d, 0.0, cfg): d for d in by_time[times[0]]}
    pair = select_tenor_pair(sorted(keys0.values()), cfg)
    if pair is None:
        audit.add("day_skipped", date=date, detail="no admissible tenor pair")
        log.info("%s: no admissible tenor pair", date)
        return None
    key_pair = tuple(expiry_key(d, 0.0, cfg) for d in pair)
    panels = []
    for m in times:
        slices = []
        for key, d0 in zip(key_pair, pair):
            match = [d for d in by_time[m] if expiry_key(d, m - t0, cfg) == key]
            sl, why = None, "missing_maturity"
            if match:
                d = match[0]
                sl = otm_slice(by_time[m][d], fwd[m], d)
                why = maturity_passes(sl, fwd[m], cfg)
            if why:
                audit.add(why, date=date, time=clocks[(date, m)], expiry=key)
                # keep the tenor so the two-tenor weights stay defined; no quotes means missing
                elapsed = (m - t0) / cfg.sampling_minutes / cfg.steps_per_day
                sl = TenorSlice((d0 - elapsed) / DAYS_PER_YEAR, np.array([]), np.array([]))
            sl.expiry_key = key
            slices.append(sl)
        panels.append(OptionPanel(m, fwd[m], slices, fwd[m]))
    return DayPanels(date, [clocks[(date, m)] for m in times], panels, key_pair)


# -- daily estimation --------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalConfig:
    transform: str = "log"
    mesh: float = 2.5
    truncation: str = "empirical"
    level: float = 0.95
    history_days: int = 3
    ma_window: int = 5


def day_window(day: DayPanels, delta_n: float) -> WindowInput:
    """WindowInput for a day; filtered-out maturities appear as quote-less slices."""
    return WindowInput(np.array([p.forward for p in day.panels]), [p.slices[0] for p in day.panels],
                       [p.slices[1] for p in day.panels], delta_n)


def _day_series(args):
    day, delta_n, ecfg = args
    try:
        return window_series(day_window(day, delta_n), ecfg.transform, ecfg.mesh), ""
    except WindowRejected as exc:
        return None, str(exc)


@dataclass
class EmpiricalResult:
    rows: list  # dicts in OUTPUT_COLUMNS order
    daily: dict  # estimator -> list of (date, estimate)
    moving_average: dict  # estimator -> list of (date, value)


def moving_average(values, window: int = 5):
    """Trailing mean over the last ``window`` entries, ignoring NaN."""
    v = np.asarray(values, dtype=float)
    out = np.full(len(v), np.nan)
    for i in range(len(v)):
        chunk = v[max(0, i - window + 1):i + 1]
        chunk = chunk[np.isfinite(chunk)]
        if len(chunk):
            out[i] = chunk.mean()
    return out


def _flags(res) -> str:
    parts = []
    if res.diagnostics.get("avar_floored"):
        parts.append("avar_floored")
    if res.diagnostics.get("truncated"):
        parts.append(f"truncated={res.diagnostics['truncated']}")
    if res.diagnostics.get("missing"):
        parts.append(f"missing={res.diagnostics['missing']}")
    return ";".join(parts)


def run_empirical(csv_dir, filters: FilterConfig = FilterConfig(), ecfg: EmpiricalConfig = EmpiricalConfig(),
                  out_csv=None, plot_dir=None, workers: int | None = None,
                  audit: AuditLog | None = None) -> EmpiricalResult:
    """Daily VV/LV estimates with 5-day moving averages.

    Spot-variance series are built per day (in parallel); the estimators then run in
    date order so the truncation threshold can draw on the previous days.
    """
    audit = audit if audit is not None else AuditLog()
    days = list(ingest_panels(csv_dir, filters, audit))
    jobs = [(d, filters.delta_n, ecfg) for d in days]
    n = min(worker_count(workers), max(1, len(jobs)))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            series = list(pool.map(_day_series, jobs))
    else:
        series = [_day_series(j) for j in jobs]

    rows = []
    daily = {name: [] for name in OPTION_ESTIMATORS}
    history = {name: [] for name in OPTION_SERIES}
    for day, (ws, reason) in zip(days, series):
        est = None
        if ws is not None:
            hist = {k: v[:ecfg.history_days] for k, v in history.items()}
            try:
                est = window_estimators(ws, ecfg.truncation, ecfg.level, hist)
            except WindowRejected as exc:
                reason = str(exc)
            for name in OPTION_SERIES:
                history[name].insert(0, ws.increments(name))
        for name in OPTION_ESTIMATORS:
            if est is None:
                rows.append({"date": day.date, "estimator": name, "estimate": math.nan, "avar": math.nan,
                             "ci_low": math.nan, "ci_high": math.nan, "k_n": len(day.panels) - 1,
                             "flags": f"rejected:{reason}"})
                daily[name].append((day.date, math.nan))
                continue
            r = est.results[name]
            rows.append({"date": day.date, "estimator": name, "estimate": r.estimate, "avar": r.avar,
                         "ci_low": r.ci_low, "ci_high": r.ci_high, "k_n": r.k_n, "flags": _flags(r)})
            daily[name].append((day.date, r.estimate))
    ma = {name: list(zip([d for d, _ in s], moving_average([v for _, v in s], ecfg.ma_window)))
          for name, s in daily.items()}
    result = EmpiricalResult(rows, daily, ma)
    if out_csv:
        write_output_csv(rows, out_csv)
    if plot_dir:
        write_plot_data(result, plot_dir)
    return result


def write_output_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=OUTPUT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_plot_data(result: EmpiricalResult, plot_dir) -> list:
    """One x/y CSV per estimator: date, daily estimate, 5-day moving average."""
    out = Path(plot_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, series in result.daily.items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "y_ma"])
            for (d, v), (_, m) in zip(series, result.moving_average[name]):
                w.writerow([d, repr(float(v)), repr(float(m))])
        written.append(path)
    return written
