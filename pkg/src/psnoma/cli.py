"""Command-line front end: optimization sweeps, capacity regions, rate curves, FER.

One config file (JSON or TOML) drives every subcommand::

    [scenario]            # OSNR-space scenario ...
    n_users = 2
    M = 8
    backoff_db = 6.0
    # ... or users = [{h = 1e-5}, ...] with P_max, P_rN, sigma

    [solver]              # any SolverConfig field (rates as "3/4" strings)
    [sweep]               # osnr = [..] or osnr_start / osnr_stop / osnr_step
    [region]              # osnr, backoffs
    [sim]                 # block_bits, min_errors, max_frames, max_iters,
                          # target_rate, points, gs_spacings, gs_rate, noiseless

Every CSV starts with a ``# ...`` manifest line. Rows are sorted by their
keys, so the output does not depend on ``--jobs``.
"""

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from ._validation import InfeasibleError
from .channel import NomaScenario, scenario_from_dict
from .curves import (CURVE_FIELDS, REGION_FIELDS, SCHEMES, curve_rows, osnr_grid,
                     region_points, solve_scheme)
from .operating import (LINK_SCHEMES, OperatingPoint, design_point, gs_point,
                        sim_config)
from .optimizer import SolverConfig
from .sim import REPORT_FIELDS, fer_monte_carlo

SECTIONS = {
    "scenario": {"n_users", "M", "backoff_db", "sigma", "users", "P_max", "P_rN"},
    "solver": {"gamma_s", "delta_tol", "root_tol", "max_iter", "max_rounds", "rates",
               "r_bf", "grid_points", "starts"},
    "sweep": {"osnr", "osnr_start", "osnr_stop", "osnr_step"},
    "region": {"osnr", "backoffs"},
    "sim": {"block_bits", "min_errors", "max_frames", "max_iters", "target_rate",
            "points", "gs_spacings", "gs_rate", "noiseless"},
}
OPTIMIZE_FIELDS = ("osnr_db", "user", "scheme", "feasible", "R_fec", "delta", "T",
                   "R_sdt", "pmf")
FER_FIELDS = ("scheme",) + REPORT_FIELDS


class ConfigError(ValueError):
    pass


def load_config(path):
    """Parse and validate a JSON or TOML config; errors name the offending field."""
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        if str(path).endswith(".toml"):
            data = tomllib.loads(raw.decode())
        else:
            data = json.loads(raw)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    for name, section in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{name}]")
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: [{name}] must be a table")
        extra = sorted(set(section) - SECTIONS[name])
        if extra:
            raise ConfigError(f"{path}: unknown field {name}.{extra[0]}")
    return data


def solver_config(conf):
    kw = dict(conf.get("solver", {}))
    if "rates" in kw:
        kw["rates"] = tuple(Fraction(str(r)) for r in kw["rates"])
    if "starts" in kw:
        kw["starts"] = tuple(kw["starts"])
    try:
        return SolverConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[solver]: {exc}") from exc


def base_scenario(conf):
    """Scenario of the config with ``sigma`` as given (OSNR applied later)."""
    sc = conf.get("scenario", {})
    try:
        if "users" in sc:
            return scenario_from_dict({"users": sc["users"], "M": sc.get("M", 8),
                                       "sigma": sc.get("sigma", 1.0),
                                       "P_max": sc["P_max"], "P_rN": sc["P_rN"]})
        return NomaScenario.from_osnr(0.0, int(sc.get("n_users", 2)), int(sc.get("M", 8)),
                                      float(sc.get("backoff_db", 6.0)),
                                      float(sc.get("sigma", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"[scenario]: missing field {exc.args[0]}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[scenario]: {exc}") from exc


def at_osnr(scenario, osnr_db):
    """Same power plan with the noise set so that ``P_r1 / sigma = osnr``."""
    return scenario.with_sigma(scenario.received[0] / 10.0 ** (osnr_db / 10.0))


def parse_osnrs(text):
    """``"2,4,6"`` or ``"start:stop:step"`` (inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            return osnr_grid(start, stop, step)
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --osnr value {text!r}") from exc


def osnr_list(args, conf, default):
    if args.osnr:
        return parse_osnrs(args.osnr)
    sw = conf.get("sweep", {})
    if "osnr" in sw:
        return [float(x) for x in sw["osnr"]]
    if "osnr_start" in sw:
        return osnr_grid(sw["osnr_start"], sw["osnr_stop"], sw.get("osnr_step", 1.0))
    return default


def schemes_of(args, allowed, default):
    names = args.scheme.split(",") if args.scheme else list(default)
    for s in names:
        if s not in allowed:
            raise ConfigError(f"unknown scheme {s!r}; expected one of {', '.join(allowed)}")
    return names


def run_map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def manifest(args, outputs, started):
    return (f"psnoma {__version__} command={args.command} config={args.config} "
            f"seed={args.seed} outputs={','.join(outputs)} "
            f"wall_s={time.time() - started:.1f}")


def write_csv(path, fields, rows, header):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {header}\n")
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(r[k]) for k in fields})


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=str)
        fh.write("\n")


def _optimize_point(task):
    scenario, osnr, scheme, cfg = task
    scn = at_osnr(scenario, osnr)
    records = []
    for j, res in enumerate(solve_scheme(scn, scheme, cfg)):
        if res is None:
            records.append({"osnr_db": osnr, "user": j + 1, "scheme": scheme,
                            "feasible": False, "R_fec": "", "delta": None,
                            "T": 0.0, "R_sdt": 0.0, "pmf": []})
            continue
        rec = res.to_record()
        rec.update(osnr_db=osnr, feasible=True, scheme=scheme,
                   amplitude_ratio=[float(x) for x in
                                    res.constellation().amplitudes / scn.received[j]])
        records.append(rec)
    return records


def cmd_optimize(args, conf):
    scenario = base_scenario(conf)
    cfg = solver_config(conf)
    schemes = schemes_of(args, ("proposed", "pcm", "uniform"), ("proposed",))
    tasks = [(scenario, o, s, cfg) for s in schemes for o in osnr_list(args, conf, [6.0])]
    records = [r for rs in run_map(_optimize_point, tasks, args.jobs) for r in rs]
    records.sort(key=lambda r: (r["scheme"], r["osnr_db"], r["user"]))
    return {"optimize.csv": (OPTIMIZE_FIELDS, records), "optimize.json": records}


def _curve_point(task):
    scenario, osnr, scheme, cfg = task
    return curve_rows(at_osnr(scenario, osnr), scheme, cfg)


def cmd_rate_curve(args, conf):
    scenario = base_scenario(conf)
    cfg = solver_config(conf)
    schemes = schemes_of(args, SCHEMES, ("proposed", "uniform", "capacity"))
    grid = osnr_list(args, conf, osnr_grid(0.0, 20.0, 2.0))
    tasks = [(scenario, o, s, cfg) for s in schemes for o in grid]
    rows = [r for rs in run_map(_curve_point, tasks, args.jobs) for r in rs]
    for r in rows:
        r["osnr_db"] = round(r["osnr_db"], 9)
    order = {s: k for k, s in enumerate(schemes)}
    rows.sort(key=lambda r: (order[r["scheme"]], r["osnr_db"],
                             r["user"] if r["user"] != "sum" else math.inf))
    return {"rate_curve.csv": (CURVE_FIELDS, rows)}


def _region_point(task):
    osnr, M, c, scheme, cfg = task
    (r1, r2), = region_points(osnr, M, [c], scheme, cfg)
    return {"scheme": scheme, "osnr_db": osnr, "backoff_db": c, "R1": r1, "R2": r2}


def cmd_capacity_region(args, conf):
    scenario = base_scenario(conf)
    if scenario.n_users != 2:
        raise ConfigError("capacity-region needs exactly 2 users")
    cfg = solver_config(conf)
    reg = conf.get("region", {})
    osnr = parse_osnrs(args.osnr)[0] if args.osnr else float(reg.get("osnr", 6.0))
    backoffs = [float(c) for c in reg.get("backoffs", osnr_grid(0.0, 24.0, 1.0))]
    schemes = schemes_of(args, SCHEMES, ("capacity", "proposed", "uniform-capacity"))
    tasks = [(osnr, scenario.M, c, s, cfg) for s in schemes for c in backoffs]
    rows = run_map(_region_point, tasks, args.jobs)
    order = {s: k for k, s in enumerate(schemes)}
    rows.sort(key=lambda r: (order[r["scheme"]], r["backoff_db"]))
    return {"capacity_region.csv": (REGION_FIELDS, rows)}


def operating_points(scheme, conf, scenario, cfg):
    """Per-user operating points for ``scheme`` from the config or by design."""
    sim = conf.get("sim", {})
    n, M = scenario.n_users, scenario.M
    records = sim.get("points", [])
    if isinstance(records, str):
        try:
            with open(records) as fh:
                records = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"sim.points: cannot load {records}: {exc}") from exc
        records = records.get("records", records) if isinstance(records, dict) else records
    given = [OperatingPoint.from_dict(d) for d in records
             if d.get("scheme") == scheme and d.get("feasible", True)]
    if given:
        if sorted(p.user for p in given) != list(range(n)):
            raise ConfigError(f"sim.points needs exactly one {scheme} point per user")
        return given
    if scheme == "gs-fixed":
        if "gs_spacings" not in sim or "gs_rate" not in sim:
            raise ConfigError("gs-fixed needs sim.gs_spacings (one list per user) and sim.gs_rate")
        if len(sim["gs_spacings"]) != n:
            raise ConfigError(f"sim.gs_spacings needs {n} lists")
        return [gs_point(j, sp, Fraction(str(sim["gs_rate"])))
                for j, sp in enumerate(sim["gs_spacings"])]
    target = float(sim.get("target_rate", 1.0))
    try:
        return [design_point(j, scheme, target, n, M, scenario.backoff_db, cfg)
                for j in range(n)]
    except InfeasibleError as exc:
        raise ConfigError(f"cannot design {scheme} operating points: {exc}") from exc


def _fer_point(task):
    scheme, points, osnr, n, M, c, kw, noiseless = task
    cfg = sim_config(points, osnr, n, M, c, **kw)
    if noiseless:
        cfg.sigma = 0.0
    reports = fer_monte_carlo(cfg)
    rows = []
    for rep in reports:
        row = rep.row()
        row.update(scheme=scheme, osnr_db=osnr)
        rows.append(row)
    return rows


def cmd_fer(args, conf):
    scenario = base_scenario(conf)
    cfg = solver_config(conf)
    sim = conf.get("sim", {})
    schemes = schemes_of(args, LINK_SCHEMES, ("proposed", "pcm", "uniform"))
    kw = {"block_bits": int(sim.get("block_bits", 6480)),
          "min_errors": int(sim.get("min_errors", 50)),
          "max_frames": int(sim.get("max_frames", 2000)),
          "max_iters": int(sim.get("max_iters", 50)),
          "seed": args.seed, "genie_sic": args.genie_sic}
    grid = osnr_list(args, conf, [6.0, 8.0, 10.0, 12.0])
    points = {s: operating_points(s, conf, scenario, cfg) for s in schemes}
    tasks = [(s, points[s], o, scenario.n_users, scenario.M, scenario.backoff_db,
              kw, bool(sim.get("noiseless", False))) for s in schemes for o in grid]
    rows = [r for rs in run_map(_fer_point, tasks, args.jobs) for r in rs]
    order = {s: k for k, s in enumerate(schemes)}
    rows.sort(key=lambda r: (order[r["scheme"]], r["osnr_db"], r["user"]))
    detail = [p.to_dict() for s in schemes for p in points[s]]
    return {"fer.csv": (FER_FIELDS, rows), "operating_points.json": detail}


COMMANDS = {"optimize": cmd_optimize, "capacity-region": cmd_capacity_region,
            "rate-curve": cmd_rate_curve, "fer": cmd_fer}


def build_parser():
    parser = argparse.ArgumentParser(prog="psnoma", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"psnoma {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON or TOML config file")
        p.add_argument("--osnr", help="OSNR list in dB: '2,4,6' or 'start:stop:step'")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--out-dir", default=".")
        p.add_argument("--scheme", help="comma-separated scheme names")
        p.add_argument("--genie-sic", action="store_true",
                       help="cancel the transmitted frames instead of the decisions")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        conf = load_config(args.config)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        outputs = COMMANDS[args.command](args, conf)
        os.makedirs(args.out_dir, exist_ok=True)
        names = sorted(outputs)
        header = manifest(args, names, started)
        for name in names:
            path = os.path.join(args.out_dir, name)
            if name.endswith(".csv"):
                write_csv(path, *outputs[name], header)
            else:
                write_json(path, {"manifest": header, "records": outputs[name]})
    except ConfigError as exc:
        print(f"psnoma: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"psnoma: error: {exc}", file=sys.stderr)
        return 3
    for name in names:
        print(os.path.join(args.out_dir, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
