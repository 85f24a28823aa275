"""Command line: ``qoc run|sweep|audit --config FILE``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from qoc.accuracy import BudgetError, audit_design, audit_summary, write_audit_csv
from qoc.config import build_cases, build_mcmc, build_protocol, load_config, q_options
from qoc.parallel import default_workers
from qoc.registry import get_design, oc_range
from qoc.streams import MAX_SEED

log = logging.getLogger("qoc")

RESULT_COLUMNS = ("design", "scenario_id", "engine", "oc", "estimate", "se", "R")
RUNTIME_COLUMNS = ("design", "scenario_id", "engine", "R", "seconds")


class ConfigError(Exception):
    pass


class NumericalFailure(Exception):
    def __init__(self, scenario_id, err):
        super().__init__(f"numerical failure in scenario {scenario_id!r}: {err}")
        self.scenario_id = scenario_id


def _stamp():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_csv(path, columns, rows, stamp=True):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if stamp:
            fh.write(f"# generated {_stamp()}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def _run_engine(design, engine, proto, scen, R, seed, workers, mcmc, opts, sid):
    entry = get_design(design)
    try:
        if engine == "q":
            return entry.q(proto, scen, R, seed, workers, opts)
        return entry.mc(proto, scen, R, seed, workers, mcmc)
    except (ArithmeticError, np.linalg.LinAlgError) as err:
        raise NumericalFailure(sid, err) from err
    except ValueError as err:
        raise ConfigError(f"scenario {sid!r}: {err}") from err


def _engines(cfg):
    return ("q", "mc") if cfg.engine == "both" else (cfg.engine,)


def _build(cfg):
    try:
        return build_cases(cfg)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err


def execute_run(cfg, workers):
    """All (scenario, engine) results: rows for results.csv and runtime rows."""
    cases = _build(cfg)
    mcmc, opts = build_mcmc(cfg), q_options(cfg)
    rows, runtime = [], []
    for i, (sid, (proto, scen)) in enumerate(cases.items()):
        for engine in _engines(cfg):
            R = cfg.replicates.q if engine == "q" else cfg.replicates.mc
            seed = (cfg.seed + 2 * i + (engine == "mc")) % MAX_SEED
            t0 = time.perf_counter()
            res = _run_engine(cfg.design, engine, proto, scen, R, seed, workers, mcmc, opts, sid)
            seconds = time.perf_counter() - t0
            for name, est in res.items():
                lo, hi = oc_range(cfg.design, proto, name)
                if not (np.isfinite(est.estimate) and lo - 1e-9 <= est.estimate <= hi + 1e-9):
                    raise NumericalFailure(sid, f"{name}={est.estimate} outside [{lo}, {hi}]")
                rows.append({"design": cfg.design, "scenario_id": sid, "engine": engine, "oc": name,
                             "estimate": float(est.estimate), "se": float(est.se), "R": est.replicates})
            runtime.append({"design": cfg.design, "scenario_id": sid, "engine": engine, "R": R,
                            "seconds": float(seconds)})
            log.info("%s %s done in %.2fs", sid, engine, seconds)
    return rows, runtime


def _speedups(runtime):
    per = {}
    for r in runtime:
        per.setdefault(r["scenario_id"], {})[r["engine"]] = r["seconds"] / r["R"]
    return {sid: v["mc"] / v["q"] for sid, v in per.items() if "q" in v and "mc" in v and v["q"] > 0}


def cmd_run(cfg, out, workers):
    from qoc.plotting import plot_comparison

    rows, runtime = execute_run(cfg, workers)
    write_csv(out / "results.csv", RESULT_COLUMNS, rows)
    write_csv(out / "runtime.csv", RUNTIME_COLUMNS, runtime)
    summary = {"design": cfg.design, "label": cfg.label, "seed": cfg.seed, "results": rows,
               "runtime": runtime, "per_replicate_speedup": _speedups(runtime)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    plot_comparison(rows, out / "comparison.png")
    return summary


def _set_path(block, path, value):
    obj = block
    keys = path.split(".")
    for k in keys[:-1]:
        obj = obj[int(k)] if isinstance(obj, list) else obj[k]
    last = keys[-1]
    if isinstance(obj, list):
        obj[int(last)] = value
    else:
        obj[last] = value


SIZE_FIELDS = {"single_arm": ("n",), "two_arm": ("n0", "n1"), "multistage": None,
               "external_data": ("n_total",), "bar": ("n_total",)}


def _sweep_cases(cfg, sw, value):
    if sw.axis == "n":
        names = SIZE_FIELDS[cfg.design]
        if names is None:
            raise ConfigError("n sweeps are not supported for staged two-arm protocols")
        n = int(value)
        over = {names[0]: n} if len(names) == 1 else {names[0]: n // 2, names[1]: n - n // 2}
        if sw.sequence is not None:
            seq = sw.sequence
            proto = build_protocol(cfg.design, cfg.protocol, over)
            return {f"n{n}": (proto, (seq.base, seq.base + seq.a / np.sqrt(n)))}
        sub = cfg.model_copy(deep=True)
        for b in sub.scenarios:
            b.protocol = dict(b.protocol) | over
        sub.sequence = None
        return _build(sub)
    if sw.axis == "scenario":
        if not sw.field:
            raise ConfigError("scenario sweeps need a field path such as 'rates.1'")
        sub = cfg.model_copy(deep=True)
        blocks = []
        for b in sub.scenarios:
            raw = b.model_dump()
            try:
                _set_path(raw, sw.field, float(value))
            except (KeyError, IndexError, TypeError, ValueError) as err:
                raise ConfigError(f"cannot set scenario field {sw.field!r}: {err}") from err
            blocks.append(type(b).model_validate(raw))
        sub.scenarios = blocks
        sub.sequence = None
        return _build(sub)
    raise ConfigError(f"unsupported sweep axis {sw.axis!r}")


def execute_sweep(cfg, workers):
    """Long-format sweep rows and ``(x, y, series)`` plot points."""
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("config has no sweep block")
    if sw.axis == "budget":
        return _budget_sweep(cfg, workers)
    mcmc, opts = build_mcmc(cfg), q_options(cfg)
    rows, points = [], []
    for j, value in enumerate(sw.values):
        cases = _sweep_cases(cfg, sw, value)
        multi = len(cases) > 1
        for i, (sid, (proto, scen)) in enumerate(cases.items()):
            for engine in _engines(cfg):
                R = cfg.replicates.q if engine == "q" else cfg.replicates.mc
                seed = (cfg.seed + 2 * (j * len(cases) + i) + (engine == "mc")) % MAX_SEED
                res = _run_engine(cfg.design, engine, proto, scen, R, seed, workers, mcmc, opts, sid)
                for name, est in res.items():
                    series = f"{engine}:{name}" + (f":{sid}" if multi else "")
                    rows.append({"x": float(value), "series": series, "scenario_id": sid,
                                 "estimate": float(est.estimate), "se": float(est.se), "R": est.replicates})
                    points.append((float(value), float(est.estimate), series))
            exact = get_design(cfg.design).exact
            if exact is not None:
                for name, val in exact(proto, scen).items():
                    series = f"exact:{name}" + (f":{sid}" if multi else "")
                    rows.append({"x": float(value), "series": series, "scenario_id": sid,
                                 "estimate": float(val), "se": 0.0, "R": 0})
                    points.append((float(value), float(val), series))
    return rows, points


def _budget_sweep(cfg, workers):
    """RMSE against the exact OC as a function of the wall-clock budget per estimate.

    Replicate counts follow from a timed pilot; budgets too small for a single
    replicate of an engine produce no point for that engine.
    """
    entry = get_design(cfg.design)
    if entry.exact is None:
        raise ConfigError("budget sweeps need a design with an exact oracle (single_arm, two_arm)")
    sw = cfg.sweep
    cases = _build(cfg)
    sid, (proto, scen) = next(iter(cases.items()))
    truth = entry.exact(proto, scen)
    name = next(iter(truth))
    rows, points = [], []
    for engine in _engines(cfg):
        pilot_R = 2000 if engine == "q" else 20
        t0 = time.perf_counter()
        _run_engine(cfg.design, engine, proto, scen, pilot_R, cfg.seed, 1, None, None, sid)
        per = (time.perf_counter() - t0) / pilot_R
        for j, budget in enumerate(sw.values):
            R = int(budget // per)
            if R < 1:
                continue
            errs = []
            for k in range(sw.repeats):
                seed = (cfg.seed + 1 + j * sw.repeats + k) % MAX_SEED
                est = _run_engine(cfg.design, engine, proto, scen, R, seed, workers, None, None, sid)[name]
                errs.append(est.estimate - truth[name])
            rmse = float(np.sqrt(np.mean(np.square(errs))))
            series = f"{engine}:rmse"
            rows.append({"x": float(budget), "series": series, "scenario_id": sid,
                         "estimate": rmse, "se": 0.0, "R": R})
            points.append((float(budget), rmse, series))
    return rows, points


def cmd_sweep(cfg, out, workers):
    from qoc.plotting import plot_series

    rows, points = execute_sweep(cfg, workers)
    write_csv(out / "sweep.csv", ("x", "series", "scenario_id", "estimate", "se", "R"), rows)
    write_csv(out / "plot_data.csv", ("x", "y", "series"),
              [{"x": x, "y": y, "series": s} for x, y, s in points])
    xlabel = {"n": "sample size", "scenario": cfg.sweep.field or "scenario value",
              "budget": "budget (s)"}[cfg.sweep.axis]
    plot_series(points, out / "sweep.png", xlabel=xlabel, ylabel="RMSE" if cfg.sweep.axis == "budget" else "OC")
    return {"rows": len(rows)}


def cmd_audit(cfg, out, workers):
    from qoc.plotting import plot_audit

    if cfg.engine != "both":
        raise ConfigError("audit requires both engines (engine = 'both')")
    a = cfg.audit
    if a is None:
        raise ConfigError("config has no audit block")
    cases = _build(cfg)
    if len(cases) < 3:
        raise ConfigError("audit needs at least 3 scenarios")
    R_mc = a.R_mc if a.mc_budget is None else None
    try:
        fit, records = audit_design(cfg.design, cases, a.R_q, cfg.seed, R_mc=R_mc, mc_budget=a.mc_budget,
                                    oc=a.oc, workers=workers, cfg=build_mcmc(cfg), prior_scale=a.tau_prior_scale)
    except BudgetError as err:
        raise ConfigError(str(err)) from err
    except (ArithmeticError, np.linalg.LinAlgError) as err:
        raise NumericalFailure("audit", err) from err
    write_audit_csv(out / "audit.csv", records, header=f"generated {_stamp()}")
    summary = audit_summary(fit, records)
    (out / "audit.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    plot_audit(records, fit, out / "audit.png")
    return summary


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "audit": cmd_audit}


def build_parser():
    p = argparse.ArgumentParser(prog="qoc", description="Operating characteristics of clinical trial designs.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True)
    p.add_argument("--engine", choices=("q", "mc", "both"))
    p.add_argument("--replicates", type=int, help="replicates for every requested engine")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _apply_overrides(cfg, args):
    upd = {}
    if args.engine:
        upd["engine"] = args.engine
    if args.seed is not None:
        upd["seed"] = args.seed
    if args.out:
        upd["out"] = args.out
    data = cfg.model_dump(by_alias=True) | upd
    if args.replicates is not None:
        data["replicates"] = {"q": args.replicates, "mc": args.replicates}
    return type(cfg).model_validate(data)


def _format_validation(err):
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "\n".join(lines)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ValidationError as err:
        print(f"invalid config {args.config}:\n{_format_validation(err)}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as err:
        print(f"invalid JSON in {args.config}: line {err.lineno}, column {err.colno}: {err.msg}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"cannot read config: {err}", file=sys.stderr)
        return 2
    workers = args.threads if args.threads else default_workers()
    if workers < 1:
        print("--threads must be positive", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    os.makedirs(out, exist_ok=True)
    try:
        summary = COMMANDS[args.command](cfg, out, workers)
    except ConfigError as err:
        print(f"invalid config: {err}", file=sys.stderr)
        return 2
    except NumericalFailure as err:
        print(str(err), file=sys.stderr)
        return 3
    if args.command == "audit":
        print(f"delta={summary['delta']:.5f} tau={summary['tau']:.5f} records={summary['n_records']}")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
