"""Command-line entry point: ``optvov {mc,replication,empirical,truth,price-panel}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

from . import empirical as emp
from .harness import (
    ESTIMATORS,
    ScenarioConfig,
    ground_truth,
    load_config,
    run_mc,
    run_replication,
)
from .pricing import build_strike_grid, observe_panel
from .panel import OptionPanel

EXIT_CODES = {"config": 2, "input": 3, "numerical": 4, "internal": 1}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value scenario file")
    g = p.add_argument_group("scenario overrides")
    for f in dataclasses.fields(ScenarioConfig):
        g.add_argument("--" + f.name.replace("_", "-"), dest=f"cfg_{f.name}", metavar="VALUE")


def _scenario(args) -> ScenarioConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    try:
        return load_config(args.config, overrides)
    except FileNotFoundError as exc:
        raise CliError("input", str(exc)) from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError("config", str(exc)) from exc


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _emit(obj) -> None:
    print(json.dumps(_jsonable(obj), indent=2))


def cmd_mc(args) -> None:
    cfg = _scenario(args)
    summary, results = run_mc(cfg, workers=args.workers, out_csv=args.out, cache_dir=args.cache_dir)
    print(summary.format())
    if args.emit_plot_data:
        out = Path(args.emit_plot_data)
        out.mkdir(parents=True, exist_ok=True)
        for name in ESTIMATORS:
            with open(out / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x", "y"])
                for r in results:
                    e = r.estimates[name][0]
                    t = r.truth[0] if name.startswith("VV") else r.truth[1]
                    w.writerow([r.rep_index, repr((e - t) / t) if t else "nan"])
    if args.json:
        _emit({name: dataclasses.asdict(s) for name, s in summary.rows.items()})


def cmd_replication(args) -> None:
    cfg = _scenario(args)
    r = run_replication(cfg, args.rep)
    _emit({"rep": r.rep_index, "truth": {"vv": r.truth[0], "lv": r.truth[1]}, "rejected": r.rejected,
           "u": {"short": r.u[0], "long": r.u[1], "returns": r.u[2]},
           "estimates": {k: dict(zip(("estimate", "avar", "ci_low", "ci_high"), v))
                         for k, v in r.estimates.items()}})


def cmd_truth(args) -> None:
    cfg = _scenario(args)
    v0 = cfg.start_variance()
    vv, lv = ground_truth(cfg.params(), v0, cfg.transform)
    _emit({"case": cfg.case, "v0": v0, "transform": cfg.transform, "vv": vv, "lv": lv})


def cmd_price_panel(args) -> None:
    cfg = _scenario(args)
    params = cfg.params()
    v = cfg.start_variance()
    days = [float(d) for d in args.tenor_days.split(",")]
    slices = [build_strike_grid(params, cfg.x0, v, d / 252, cfg.strike_step, cfg.price_threshold)
              for d in sorted(days)]
    panel = OptionPanel(0.0, cfg.x0, slices)
    if cfg.noise_scale > 0:
        panel = observe_panel(panel, cfg.noise_scale, seed=(cfg.base_seed, 0))
    out = args.out or "-"
    emp.write_panels_csv(sys.stdout if out == "-" else out, args.date, [panel], [sorted(days)])


def cmd_empirical(args) -> None:
    try:
        filters = emp.FilterConfig(
            steps_per_day=args.steps_per_day,
            exclude_dates=tuple(d for d in (args.exclude_dates or "").split(",") if d),
        )
        ecfg = emp.EmpiricalConfig(transform=args.transform, truncation=args.truncation,
                                   mesh=args.mesh, level=args.level)
    except ValueError as exc:
        raise CliError("config", str(exc)) from exc
    if not Path(args.csv_dir).exists():
        raise CliError("input", f"no such file or directory: {args.csv_dir}")
    audit = emp.AuditLog()
    res = emp.run_empirical(args.csv_dir, filters, ecfg, out_csv=args.out, plot_dir=args.emit_plot_data,
                            workers=args.workers, audit=audit)
    if not args.out:
        w = csv.DictWriter(sys.stdout, fieldnames=emp.OUTPUT_COLUMNS)
        w.writeheader()
        for r in res.rows:
            w.writerow(r)
    if args.audit:
        Path(args.audit).write_text(json.dumps(audit.entries, indent=1, default=str))
    print(json.dumps({"filters": audit.counts()}), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="optvov", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mc", help="Monte Carlo bias/STD/RMSE table for one scenario")
    _add_config_flags(p)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="per-replication CSV")
    p.add_argument("--cache-dir")
    p.add_argument("--emit-plot-data", metavar="DIR")
    p.add_argument("--json", action="store_true", help="also print the summary as JSON")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("replication", help="estimates from a single replication")
    _add_config_flags(p)
    p.add_argument("--rep", type=int, default=0)
    p.set_defaults(func=cmd_replication)

    p = sub.add_parser("truth", help="true VV and LV for a scenario")
    _add_config_flags(p)
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("price-panel", help="write a model option panel in the panel CSV schema")
    _add_config_flags(p)
    p.add_argument("--tenor-days", default="3,6")
    p.add_argument("--date", default="2000-01-03")
    p.add_argument("--out")
    p.set_defaults(func=cmd_price_panel)

    p = sub.add_parser("empirical", help="daily estimates from panel CSV files")
    p.add_argument("csv_dir")
    p.add_argument("--out")
    p.add_argument("--emit-plot-data", metavar="DIR")
    p.add_argument("--audit", help="write the filter audit log as JSON")
    p.add_argument("--steps-per-day", type=int, default=78)
    p.add_argument("--exclude-dates", help="comma-separated dates to skip")
    p.add_argument("--transform", default="log")
    p.add_argument("--truncation", default="empirical")
    p.add_argument("--mesh", type=float, default=2.5)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_empirical)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        return _fail(exc.category, str(exc))
    except FileNotFoundError as exc:
        return _fail("input", str(exc))
    except (ValueError, KeyError) as exc:
        return _fail("input" if args.command == "empirical" else "config", str(exc))
    except RuntimeError as exc:
        return _fail("numerical", str(exc))
    return 0


def _fail(category: str, message: str) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
