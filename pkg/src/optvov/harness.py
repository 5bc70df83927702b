"""Scenario configuration, the shared window estimator, and the Monte Carlo driver."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimators as est
from .blackscholes import implied_vol, interpolate_slice
from .charfn import apply_transform, estimate_cf, select_u, spot_variance, transform_derivative, two_tenor_combine
from .panel import OptionPanel, TenorSlice, otm_side
from .params import ModelParams, named_case
from .pricing import build_strike_grid, get_pricer, observe_panel
from .simulate import make_rng, simulate_path, stationary_variance_quantile

DAYS_PER_YEAR = 252
WORKERS_ENV = "OPTVOV_WORKERS"
MAX_MISSING_FRACTION = 0.10

OPTION_SERIES = ("T", "Tp", "TTp")
ESTIMATORS = ("VV_T", "VV_Tp", "VV_TTp", "VV_ret", "LV_T", "LV_Tp", "LV_TTp", "LV_ret")


class WindowRejected(RuntimeError):
    """Raised when a window has too many invalid spot-variance estimates."""


@dataclass(frozen=True)
class ScenarioConfig:
    case: str = "M"
    # optional overrides of the named case
    theta_v: float | None = None
    kappa_v: float | None = None
    sigma_v: float | None = None
    rho: float | None = None
    jumps: bool = True
    v0_quantile: float = 0.5
    v0: float | None = None  # explicit starting variance, takes precedence over the quantile
    x0: float = 2500.0
    k_n: int = 80
    steps_per_day: int = 80  # delta_n = 1 / (252 * steps_per_day)
    tenor_short_days: float = 3.0  # at the start of the window
    tenor_long_days: float = 6.0
    noise_scale: float = 0.015
    strike_step: float = 5.0
    price_threshold: float = 0.075
    mesh: float = 2.5
    transform: str = "log"
    truncation: str = "infinite"  # "infinite", "empirical" or a number
    level: float = 0.95
    l_n: int = 72
    substeps: int = 10
    replications: int = 1000
    base_seed: int = 20240101

    def __post_init__(self):
        if not self.tenor_long_days > self.tenor_short_days > 0:
            raise ValueError("need tenor_long_days > tenor_short_days > 0")
        if self.k_n < 4:
            raise ValueError("k_n must be at least 4")
        # the short option must still be alive at the end of the window
        if self.k_n / self.steps_per_day >= self.tenor_short_days:
            raise ValueError("k_n * delta_n must be below the short tenor")
        if self.truncation not in ("infinite", "empirical"):
            float(self.truncation)
        if self.replications < 1:
            raise ValueError("replications must be positive")

    @property
    def delta_n(self) -> float:
        return 1.0 / (DAYS_PER_YEAR * self.steps_per_day)

    @property
    def tenor_short(self) -> float:
        return self.tenor_short_days / DAYS_PER_YEAR

    @property
    def tenor_long(self) -> float:
        return self.tenor_long_days / DAYS_PER_YEAR

    def params(self) -> ModelParams:
        p = named_case(self.case)
        kw = {k: getattr(self, k) for k in ("theta_v", "kappa_v", "sigma_v", "rho") if getattr(self, k) is not None}
        p = p.with_(x0=self.x0, **kw)
        return p if self.jumps else p.without_jumps()

    def start_variance(self) -> float:
        if self.v0 is not None:
            return float(self.v0)
        return stationary_variance_quantile(self.params(), self.v0_quantile)

    def tenor_days(self, j: int) -> tuple[float, float]:
        """Short and long tenors (in days) at observation j = 0..k_n of the window."""
        elapsed = j / self.steps_per_day
        return self.tenor_short_days - elapsed, self.tenor_long_days - elapsed

    def with_(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- key=value config files ---------------------------------------------------------


def _parse_value(name: str, text: str):
    f = {f.name: f for f in dataclasses.fields(ScenarioConfig)}[name]
    text = text.strip()
    default = f.default
    if text.lower() in ("none", "") and default is None:
        return None
    kind = type(default) if default is not None else float
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    return kind(text)


def parse_config_items(items: dict) -> dict:
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    out = {}
    for key, value in items.items():
        key = key.strip().replace("-", "_")
        if key not in known:
            raise KeyError(f"unknown config key {key!r}")
        out[key] = value if not isinstance(value, str) else _parse_value(key, value)
    return out


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    items = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        items[k.strip()] = v.strip()
    return items


def load_config(path=None, overrides: dict | None = None) -> ScenarioConfig:
    items = read_config_file(path) if path else {}
    items.update(overrides or {})
    return ScenarioConfig(**parse_config_items(items))


def write_config(cfg: ScenarioConfig, path) -> None:
    lines = [f"{k} = {'none' if v is None else v}" for k, v in dataclasses.asdict(cfg).items()]
    Path(path).write_text("\n".join(lines) + "\n")


# -- truth -----------------------------------------------------------------------------


def ground_truth(params: ModelParams, v0: float, transform: str = "log") -> tuple[float, float]:
    """Spot VV and LV of F(V) at variance v0."""
    fp = transform_derivative(v0, transform)
    half_lev = params.rho * params.sigma_v / 2.0
    half_orth = math.sqrt(1.0 - params.rho**2) * params.sigma_v / 2.0
    vv = 4.0 * v0 * fp**2 * (half_lev**2 + half_orth**2)
    lv = 2.0 * v0 * fp * half_lev
    return float(vv), float(lv)


# -- shared window estimation ---------------------------------------------------------


@dataclass
class WindowInput:
    """Observed quotes over one window: entry j of each list is observation time j (oldest first)."""

    forwards: np.ndarray
    short: list[TenorSlice]
    long: list[TenorSlice]
    delta_n: float

    def __post_init__(self):
        self.forwards = np.asarray(self.forwards, dtype=float)
        if not (len(self.forwards) == len(self.short) == len(self.long)):
            raise ValueError("forwards and slices must align")

    @property
    def k_n(self) -> int:
        return len(self.forwards) - 1


@dataclass
class WindowEstimates:
    results: dict  # name -> VVLVResult
    u_short: float
    u_long: float
    series: dict  # "T", "Tp", "TTp" -> transformed spot variances, oldest first
    diagnostics: dict = field(default_factory=dict)


def _dense_slices(inp: WindowInput, mesh: float):
    """IV-invert every quote in one batch, then interpolate each slice onto the mesh."""
    all_slices = [s for pair in zip(inp.short, inp.long) for s in pair]
    fwd = np.repeat(inp.forwards, 2)
    sizes = [len(s) for s in all_slices]
    prices = np.concatenate([s.prices for s in all_slices])
    strikes = np.concatenate([s.strikes for s in all_slices])
    tenors = np.concatenate([np.full(n, s.tenor) for n, s in zip(sizes, all_slices)])
    fwds = np.repeat(fwd, sizes)
    vols = implied_vol(prices, fwds, strikes, tenors, otm_side(strikes, fwds), errors="nan")
    out, dropped, atm = [], 0, []
    pos = 0
    for s, f, n in zip(all_slices, fwd, sizes):
        v = vols[pos:pos + n]
        pos += n
        try:
            dense, nd, a = interpolate_slice(s, f, mesh, vols=v)
        except ValueError:
            dense, nd, a = None, n, math.nan
        out.append(dense)
        atm.append(a)
        dropped += nd
    return out[0::2], out[1::2], atm[0::2], dropped


def resolve_truncation(mode, increments, delta_n, history=()) -> float:
    """Numeric threshold for one increment series; ``history`` holds prior days' increments."""
    if mode in (None, "infinite"):
        return math.inf
    if mode == "empirical":
        return est.truncation_threshold([increments, *history], delta_n)
    return float(mode)


def _increments(series: np.ndarray) -> np.ndarray:
    # element i-1 holds V(t_{i-1}) - V(t_i) with t_i the i-th time counted back from the window end
    return np.diff(series)[::-1]


@dataclass
class WindowSeries:
    """Transformed spot-variance series of one window (oldest first) and the price path."""

    series: dict  # "T", "Tp", "TTp" -> array
    log_forwards: np.ndarray
    delta_n: float
    u_short: float
    u_long: float
    diagnostics: dict = field(default_factory=dict)

    def increments(self, name: str) -> np.ndarray:
        return _increments(self.series[name])


def window_series(inp: WindowInput, transform: str = "log", mesh: float = 2.5) -> WindowSeries:
    """Densify the quotes, pick u at the first time point and recover every spot variance."""
    dense_s, dense_l, atm_s, dropped = _dense_slices(inp, mesh)
    if dense_s[0] is None or dense_l[0] is None or not atm_s[0] > 0:
        raise WindowRejected("no valid quotes at the first observation time")
    f0 = inp.forwards[0]
    u_s = select_u(dense_s[0].strikes, dense_s[0].prices, f0, dense_s[0].tenor, atm_s[0])
    u_l = select_u(dense_l[0].strikes, dense_l[0].prices, f0, dense_l[0].tenor, atm_s[0])
    n = len(inp.forwards)
    v_t = np.full(n, np.nan)
    v_t_ul = np.full(n, np.nan)
    v_tp = np.full(n, np.nan)
    t_s = np.array([s.tenor for s in inp.short])
    t_l = np.array([s.tenor for s in inp.long])
    for j in range(n):
        f = inp.forwards[j]
        if dense_s[j] is not None:
            sl = dense_s[j]
            cf = estimate_cf(sl.strikes, sl.prices, f, sl.tenor, np.array([u_s, u_l]))
            s2, ok = spot_variance(cf)
            vals = np.where(ok & ((s2 > 0) | (transform == "identity")), s2, np.nan)
            with np.errstate(invalid="ignore", divide="ignore"):
                v_t[j], v_t_ul[j] = apply_transform(vals, transform)
        if dense_l[j] is not None:
            sl = dense_l[j]
            s2, ok = spot_variance(estimate_cf(sl.strikes, sl.prices, f, sl.tenor, u_l))
            if ok and (s2 > 0 or transform == "identity"):
                v_tp[j] = apply_transform(s2, transform)
    v_ttp = two_tenor_combine(v_t_ul, v_tp, t_s, t_l)
    series = {"T": v_t, "Tp": v_tp, "TTp": v_ttp}
    diag = {"dropped_quotes": dropped, "u_short": u_s, "u_long": u_l}
    return WindowSeries(series, np.log(inp.forwards), inp.delta_n, u_s, u_l, diag)


def window_estimators(ws: WindowSeries, truncation="infinite", level: float = 0.95,
                      history: dict | None = None,
                      max_missing: float = MAX_MISSING_FRACTION) -> WindowEstimates:
    """VV/LV with feasible CIs for every option-based series of a window.

    ``history`` maps a series name to prior days' increments (most recent first) for
    the empirical truncation threshold.
    """
    dx = _increments(ws.log_forwards)
    results, diag = {}, dict(ws.diagnostics)
    history = history or {}
    for name in OPTION_SERIES:
        d = ws.increments(name)
        miss = float(np.isnan(d).mean())
        diag[f"missing_{name}"] = miss
        if miss > max_missing:
            raise WindowRejected(f"{miss:.0%} of the {name} increments are missing")
        ups = resolve_truncation(truncation, d, ws.delta_n, history.get(name, ()))
        inc = est.IncrementSeries(ws.delta_n, d, dx)
        results[f"VV_{name}"] = est.estimate_vv(inc, ups, level)
        results[f"LV_{name}"] = est.estimate_lv(inc, ups, level)
        diag[f"increments_{name}"] = d
    return WindowEstimates(results, ws.u_short, ws.u_long, ws.series, diag)


def estimate_window(inp: WindowInput, transform: str = "log", mesh: float = 2.5,
                    truncation="infinite", level: float = 0.95, history: dict | None = None,
                    max_missing: float = MAX_MISSING_FRACTION) -> WindowEstimates:
    """Option-based VV/LV for one window; used identically by simulation and CSV input."""
    return window_estimators(window_series(inp, transform, mesh), truncation, level, history, max_missing)


# -- simulation --------------------------------------------------------------------------


def simulate_window(cfg: ScenarioConfig, rep_index: int):
    """Simulate one window's path and noisy two-tenor panels.

    Returns ``(path, panels)``; panels are oldest first, with true and observed quotes.
    """
    params = cfg.params()
    v0 = cfg.start_variance()
    ss = np.random.SeedSequence([cfg.base_seed, rep_index])
    path_seed, noise_seed = ss.spawn(2)
    horizon = cfg.k_n * cfg.delta_n
    path = simulate_path(params, v0, horizon, cfg.k_n * cfg.l_n, cfg.substeps, seed=path_seed, x0=cfg.x0)
    pricer = get_pricer(params, cfg.strike_step)
    noise_rng = make_rng(noise_seed)
    panels = []
    for j in range(cfg.k_n + 1):
        i = j * cfg.l_n
        spot = math.exp(path.log_price[i])
        v = float(path.variance[i])
        days_s, days_l = cfg.tenor_days(j)
        slices = []
        for days in (days_s, days_l):
            sl = build_strike_grid(params, spot, v, days / DAYS_PER_YEAR, cfg.strike_step,
                                   cfg.price_threshold, pricer)
            sl.expiry_key = days + j / cfg.steps_per_day
            slices.append(sl)
        true_panel = OptionPanel(j * cfg.delta_n, spot, slices,
                                 meta={"variance": v, "tenor_days": (days_s, days_l)})
        panels.append(observe_panel(true_panel, cfg.noise_scale, noise_rng))
    return path, panels


def window_input(panels, delta_n) -> WindowInput:
    return WindowInput(np.array([p.forward for p in panels]), [p.slices[0] for p in panels],
                       [p.slices[1] for p in panels], delta_n)


def return_based(cfg: ScenarioConfig, path, transform: str, truncation="infinite"):
    """Return-based VV/LV from fine returns, with u chosen from RV and BV over the window."""
    k, l = cfg.k_n, cfg.l_n
    fine = cfg.delta_n / l
    r = np.diff(path.log_price)
    rv, bv = est.rv_bv(r, fine)
    u = est.select_u_ret(rv, bv)
    blocks = r.reshape(k, l)
    # t_i = window end - i delta_n uses the block ending there
    s2 = np.array([est.return_spot_vol(blocks[k - 1 - i], u, fine) for i in range(k)])
    with np.errstate(invalid="ignore", divide="ignore"):
        v_hat = apply_transform(np.where(s2 > 0, s2, np.nan), transform)
    x_times = path.log_price[::l][::-1]
    ups = resolve_truncation(truncation, v_hat[:-1] - v_hat[1:], cfg.delta_n)
    vv = est.vv_ret(v_hat, cfg.delta_n, k, ups)
    lv = est.lv_ret(v_hat, x_times, cfg.delta_n, k, ups)
    return vv, lv, u


@dataclass
class ReplicationResult:
    rep_index: int
    truth: tuple  # (vv, lv)
    estimates: dict  # name -> (estimate, avar, ci_low, ci_high)
    rejected: str = ""
    u: tuple = (math.nan, math.nan, math.nan)

    def to_rows(self):
        for name in ESTIMATORS:
            e, a, lo, hi = self.estimates.get(name, (math.nan,) * 4)
            truth = self.truth[0] if name.startswith("VV") else self.truth[1]
            yield {"rep": self.rep_index, "estimator": name, "estimate": e, "avar": a,
                   "ci_low": lo, "ci_high": hi, "truth": truth, "rejected": self.rejected}


def run_replication(cfg: ScenarioConfig, rep_index: int) -> ReplicationResult:
    params = cfg.params()
    v0 = cfg.start_variance()
    truth = ground_truth(params, v0, cfg.transform)
    path, panels = simulate_window(cfg, rep_index)
    out = {}
    u = [math.nan] * 3
    rejected = ""
    try:
        w = estimate_window(window_input(panels, cfg.delta_n), cfg.transform, cfg.mesh,
                            cfg.truncation, cfg.level)
        for name, r in w.results.items():
            out[name] = (r.estimate, r.avar, r.ci_low, r.ci_high)
        u[0], u[1] = w.u_short, w.u_long
    except WindowRejected as exc:
        rejected = str(exc)
    vv, lv, u[2] = return_based(cfg, path, cfg.transform, cfg.truncation)
    out["VV_ret"] = (vv, math.nan, math.nan, math.nan)
    out["LV_ret"] = (lv, math.nan, math.nan, math.nan)
    return ReplicationResult(rep_index, truth, out, rejected, tuple(u))


# -- Monte Carlo summary ---------------------------------------------------------------


@dataclass
class EstimatorSummary:
    bias: float
    std: float
    rmse: float
    coverage: float
    n: int


@dataclass
class McSummary:
    rows: dict  # estimator -> EstimatorSummary
    truth: tuple
    replications: int
    rejected: int

    def format(self) -> str:
        lines = [f"truth VV={self.truth[0]:.6g} LV={self.truth[1]:.6g}  "
                 f"replications={self.replications} rejected={self.rejected}",
                 f"{'estimator':<8} {'bias':>8} {'std':>8} {'rmse':>8} {'cover':>6}"]
        for name, s in self.rows.items():
            lines.append(f"{name:<8} {s.bias:8.3f} {s.std:8.3f} {s.rmse:8.3f} {s.coverage:6.3f}")
        return "\n".join(lines)


def summarize(results: list[ReplicationResult]) -> McSummary:
    results = sorted(results, key=lambda r: r.rep_index)
    kept = [r for r in results if not r.rejected]
    truth = results[0].truth
    rows = {}
    for name in ESTIMATORS:
        t = truth[0] if name.startswith("VV") else truth[1]
        data = np.array([r.estimates[name] for r in kept if name in r.estimates], dtype=float).reshape(-1, 4)
        data = data[np.isfinite(data[:, 0])]
        if not len(data) or t == 0:
            rows[name] = EstimatorSummary(math.nan, math.nan, math.nan, math.nan, len(data))
            continue
        err = (data[:, 0] - t) / t
        bias = float(err.mean())
        std = float(err.std())
        rmse = float(np.sqrt(np.mean(err**2)))
        if np.all(np.isfinite(data[:, 2:])):
            cov = float(np.mean((data[:, 2] <= t) & (t <= data[:, 3])))
        else:
            cov = math.nan
        rows[name] = EstimatorSummary(bias, std, rmse, cov, len(data))
    return McSummary(rows, truth, len(results), len(results) - len(kept))


def _replicate_chunk(args):
    cfg, idx = args
    return [run_replication(cfg, i) for i in idx]


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def _cache_path(cache_dir, cfg: ScenarioConfig) -> Path:
    return Path(cache_dir) / f"mc-{cfg.digest()}.json"


def _load_cached(path: Path):
    data = json.loads(path.read_text())
    return [ReplicationResult(d["rep_index"], tuple(d["truth"]),
                              {k: tuple(v) for k, v in d["estimates"].items()},
                              d["rejected"], tuple(d["u"])) for d in data]


def run_mc(cfg: ScenarioConfig, workers: int | None = None, out_csv=None, cache_dir=None,
           progress=None) -> tuple[McSummary, list[ReplicationResult]]:
    """All replications of one scenario, merged in replication order."""
    cache = _cache_path(cache_dir, cfg) if cache_dir else None
    if cache is not None and cache.exists():
        results = _load_cached(cache)
    else:
        n = worker_count(workers)
        idx = list(range(cfg.replications))
        if n == 1:
            results = []
            for i in idx:
                results.append(run_replication(cfg, i))
                if progress:
                    progress(i + 1, cfg.replications)
        else:
            chunks = [idx[i::n * 4] for i in range(n * 4)]
            with ProcessPoolExecutor(max_workers=n) as pool:
                parts = list(pool.map(_replicate_chunk, [(cfg, c) for c in chunks if c]))
            results = sorted((r for p in parts for r in p), key=lambda r: r.rep_index)
        if cache is not None:
            cache.parent.mkdir(parents=True, exist_ok=True)
            cache.write_text(json.dumps([dataclasses.asdict(r) for r in results]))
    if out_csv:
        write_replications_csv(results, out_csv)
    return summarize(results), results


def write_replications_csv(results, path) -> None:
    cols = ["rep", "estimator", "estimate", "avar", "ci_low", "ci_high", "truth", "rejected"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in results:
            for row in r.to_rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
