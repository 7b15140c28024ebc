"""Command-line front end: ``ymsw evolve | stationary | verify | decay``.

Exit codes: 0 pass, 1 a check failed, 2 usage or configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import re
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import load_config
from .decay import (PointwiseObserver, TimeSeries, check_local_energy_decay, check_morawetz_ratio,
                    check_pointwise_decay, compare_runs, fit_power_law, pointwise_series)
from .errors import ConfigError, DomainError, NumericalError
from .evolve import EvolutionAborted, EvolutionConfig, plan_steps, run
from .functionals import (IDENTITY_TERMS, EnergyObserver, IdentityObserver, LocalEnergyObserver,
                          MorawetzAccumulator, MorawetzObserver, NullLine, NullLineObserver, SnapshotObserver,
                          geometric_energies, multiplier_identity_residual, scalar_energy)
from .grid import InitialDataSpec, build_grid, make_initial_data, write_state_file
from .stationary import ShootingConfig, export_profile, find_a_n
from .verify import (HorizonWeight, MorawetzWeights, check_g_positivity, check_horizon_weight,
                     check_multiplier_weights, check_pos_inequality, find_admissible_parameters)

log = logging.getLogger("ymsw")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
CSV_VERSION = 1

DEFAULT_PARAMS = (40.0, 0.01, 0.25)


# File formats ------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, schema: str, columns: Sequence[str], rows) -> None:
    """First line ``# schema=<name>/<version>``, then a header, then shortest round-trip floats."""
    out = [f"# schema={schema}/{CSV_VERSION}", ",".join(columns)]
    out += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(out) + "\n")


def read_csv(path: Path, schema: str, str_columns: Sequence[str] = ()) -> dict:
    """Columns of a CSV written by ``write_csv`` (floats unless listed in ``str_columns``)."""
    if not path.is_file():
        raise ConfigError(f"missing series file: {path}")
    lines = path.read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# schema="):
        raise ConfigError(f"{path}: missing '# schema=' line")
    name, _, ver = lines[0][len("# schema="):].partition("/")
    if name != schema or ver != str(CSV_VERSION):
        raise ConfigError(f"{path}: schema {lines[0][2:]!r}, expected {schema}/{CSV_VERSION}")
    cols = lines[1].split(",")
    data = {c: [] for c in cols}
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split(",")
        if len(parts) != len(cols):
            raise ConfigError(f"{path}:{lineno}: expected {len(cols)} fields, got {len(parts)}")
        for c, p in zip(cols, parts):
            data[c].append(p if c in str_columns else float(p))
    return {c: (v if c in str_columns else np.array(v, dtype=float)) for c, v in data.items()}


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n")


def _column_name(term: str) -> str:
    return re.sub(r"[^0-9A-Za-z]+", "_", term).strip("_")


IDENTITY_COLUMNS = tuple(_column_name(t) for t in IDENTITY_TERMS)


def load_null_record(path) -> dict:
    """``series_null.csv`` back into the ``NullLineObserver.record()`` layout."""
    data = read_csv(Path(path), "series_null", str_columns=("family",))
    fam = np.array(data["family"])
    out = {}
    for f, v in sorted(set(zip(data["family"], data["value"].tolist()))):
        sel = (fam == f) & (data["value"] == v)
        out[NullLine(f, v).label()] = np.column_stack([data[c][sel] for c in ("t", "x", "W", "Pi", "Wp")])
    return out


def load_identity_record(path) -> dict:
    """``series_identity.csv`` back into the ``IdentityObserver.record()`` layout."""
    data = read_csv(Path(path), "series_identity")
    return {"t": data["t"], "values": np.column_stack([data[c] for c in IDENTITY_COLUMNS])}


# evolve -------------------------------------------------------------------------

def _normalizers(e_dt, e_K, e_sharp):
    e1 = math.sqrt(e_dt + e_K)
    e2 = math.sqrt((e_dt + e_K + 1.0) ** 2 + e_sharp)
    return e1, e2


def cmd_evolve(config_path: str, out: Optional[str] = None) -> int:
    cfg = load_config(config_path)
    m = cfg["mass"]
    grid = build_grid(cfg["grid.x_min"], cfg["grid.x_max"], cfg["grid.n"], m)
    spec = InitialDataSpec(kind=cfg["initial.kind"], sign=cfg["initial.sign"], base=cfg["initial.base"],
                           amplitude=cfg["initial.amplitude"], center=cfg["initial.center"],
                           width=cfg["initial.width"], mode=cfg["initial.mode"], n=cfg["initial.n"],
                           path=cfg["initial.path"] or None)
    econf = EvolutionConfig(cfl_ratio=cfg["evolution.cfl"], t_end=cfg["evolution.t_end"],
                            observer_stride=cfg["evolution.stride"],
                            boundary_mode=cfg["evolution.boundary_mode"],
                            integrator=cfg["evolution.integrator"], window=cfg["evolution.window"],
                            support_margin=cfg["evolution.support_margin"])
    stationary = find_a_n(spec.n, m=m) if spec.kind == "stationary" else None
    init = make_initial_data(spec, grid, stationary)
    hweight = HorizonWeight(r1=cfg["horizon.r1"] * m, m=m, profile=cfg["horizon.profile"],
                            kappa=cfg["horizon.kappa"])

    observers = []
    if cfg["observers.energy"]:
        observers.append(EnergyObserver())
    locals_ = []
    for x1, x2 in cfg["observers.local"]:
        obs = LocalEnergyObserver(x1, x2)
        obs.name = f"local[{x1!r},{x2!r}]"
        locals_.append(obs)
    observers += locals_
    if cfg["observers.morawetz"]:
        observers.append(MorawetzObserver())
    null_obs = None
    if cfg["observers.null_lines"]:
        null_obs = NullLineObserver([NullLine(f, v) for f, v in cfg["observers.null_lines"]])
        observers.append(null_obs)
    id_obs = None
    if cfg["observers.identity"]:
        id_obs = IdentityObserver(MorawetzWeights(cfg["observers.identity_a"] * m, cfg["observers.identity_delta"]))
        observers.append(id_obs)
    snap_obs = None
    if cfg["observers.snapshots"]:
        steps, dt = plan_steps(grid, econf)
        cadence = dt * econf.observer_stride
        for t in cfg["observers.snapshots"]:
            k = t / cadence
            if not (0 <= t <= econf.t_end and abs(k - round(k)) < 1e-6):
                raise ConfigError(f"snapshot time {t!r} is not an observation time (multiples of {cadence!r} "
                                  f"up to t_end)")
        snap_obs = SnapshotObserver(cfg["observers.snapshots"])
        observers.append(snap_obs)
    pw_obs = None
    if cfg["observers.pointwise"]:
        pw_obs = PointwiseObserver(bin_width=cfg["observers.pointwise_bin"] * m,
                                   margin=cfg["observers.pointwise_margin"] * m)
        observers.append(pw_obs)

    e0 = scalar_energy(init, grid)
    geo = geometric_energies(init, grid, hweight)
    outdir = Path(out if out is not None else cfg["output.dir"])
    try:
        result = run(init, grid, econf, observers)
    except EvolutionAborted as exc:
        outdir.mkdir(parents=True, exist_ok=True)
        write_state_file(outdir / "state_abort.dat", exc.state, grid)
        raise
    outdir.mkdir(parents=True, exist_ok=True)
    final = result.final
    e1 = scalar_energy(final, grid)
    drift = abs(e1.total - e0.total) / e0.total if e0.total > 0 else abs(e1.total - e0.total)

    write_state_file(outdir / "state_final.dat", final, grid)
    rec = result.records
    max_drift = drift
    if "energy" in rec:
        vals = rec["energy"]["values"]
        write_csv(outdir / "series_energy.csv", "series_energy", ("t", "kinetic", "gradient", "potential", "total"),
                  [(t, v.kinetic, v.gradient, v.potential, v.total) for t, v in zip(rec["energy"]["t"], vals)])
        tot = np.array([v.total for v in vals])
        if e0.total > 0:
            max_drift = float(np.max(np.abs(tot - e0.total)) / e0.total)
    if locals_:
        rows = []
        for obs in locals_:
            rows += [(t, obs.x1, obs.x2, v) for t, v in zip(obs.times, obs.values)]
        write_csv(outdir / "series_local.csv", "series_local", ("t", "x1", "x2", "total"), rows)
    if "morawetz" in rec:
        acc = MorawetzAccumulator.from_series(rec["morawetz"]["t"], rec["morawetz"]["values"])
        write_csv(outdir / "series_morawetz.csv", "series_morawetz", ("t", "bulk", "cumulative"),
                  zip(acc.t, acc.bulk, acc.cumulative))
    if null_obs is not None:
        rows = []
        for ln in null_obs.lines:
            rows += [(ln.family, ln.value, *row) for row in null_obs.samples[ln]]
        write_csv(outdir / "series_null.csv", "series_null", ("family", "value", "t", "x", "W", "Pi", "Wp"), rows)
    if snap_obs is not None:
        for t, st in sorted(snap_obs.states.items()):
            write_state_file(outdir / f"snapshot_t{t!r}.dat", st, grid)
    identity_summary = None
    if id_obs is not None:
        rows = [(t, *v) for t, v in zip(id_obs.times, id_obs.values)]
        write_csv(outdir / "series_identity.csv", "series_identity", ("t",) + IDENTITY_COLUMNS, rows)
        if len(id_obs.times) >= 5:
            res = multiplier_identity_residual(id_obs.record())
            scale = max(float(np.max(np.abs(v))) for v in res.terms.values())
            identity_summary = {"max_residual": float(np.max(np.abs(res.residual))), "term_scale": scale}
    if pw_obs is not None:
        for name, rows in pw_obs.record().items():
            write_csv(outdir / f"series_{name}.csv", f"series_{name}", ("v", "w", "r", "Q"),
                      zip(rows["v"], rows["w"], rows["r"], rows["Q"]))

    E1, E2 = _normalizers(geo.e_dt, geo.e_K, geo.e_sharp)
    summary = {
        "config": {k: v for k, v in cfg.items() if k != "output.dir"},
        "mass": m,
        "t_end": final.t,
        "steps": result.steps,
        "dt": result.dt,
        "initial": {"energy": e0.total, "kinetic": e0.kinetic, "gradient": e0.gradient,
                    "potential": e0.potential, "tail_bound": e0.tail_bound,
                    "E_dt": geo.e_dt, "E_K": geo.e_K, "E_H": geo.e_H, "E_sharp": geo.e_sharp,
                    "E1": E1, "E2": E2},
        "final": {"energy": e1.total},
        "energy_drift": drift,
        "max_energy_drift": max_drift,
        "identity": identity_summary,
        "metadata": {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(), "version": __version__,
                     "wall_time": result.wall_time},
    }
    if stationary is not None:
        summary["stationary"] = {"n": stationary.n, "a_n": stationary.a_n}
    write_json(outdir / "summary.json", summary)
    log.info("evolve: drift %.3e, outputs in %s", drift, outdir)
    print(f"energy drift {drift:.3e}; outputs in {outdir}")
    return EXIT_OK


# stationary -----------------------------------------------------------------------

def cmd_stationary(n: int, mass: float, bracket=None, out: str = ".", grid_spec=None) -> int:
    if n < 1:
        raise ConfigError("--n must be >= 1")
    if not mass > 0:
        raise ConfigError("--mass must be positive")
    cfg = ShootingConfig() if bracket is None else ShootingConfig(bracket=tuple(bracket))
    start = time.perf_counter()
    sol = find_a_n(n, cfg, mass)
    payload = {"n": n, "mass": mass, "a_n": sol.a_n, "bracket": list(sol.bracket), "energy": sol.energy,
               "energy_tail_bound": sol.energy_tail_bound, "zero_count": sol.zero_count,
               "zeros_x": sol._shot.zeros_x.tolist(), "iterations": sol.iterations}
    if n >= 2:
        prev = find_a_n(n - 1, ShootingConfig(), mass)
        payload["a_prev"] = prev.a_n
        if not sol.a_n < prev.a_n:
            raise NumericalError(f"threshold ordering violated: a_{n}={sol.a_n!r} >= a_{n - 1}={prev.a_n!r}")
    if sol.zero_count != n:
        raise NumericalError(f"profile for n={n} has {sol.zero_count} zeros")
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    x_min, x_max, npts = grid_spec if grid_spec is not None else (-100.0 * mass, 100.0 * mass, 2001)
    export_profile(sol, build_grid(x_min, x_max, int(npts), mass), outdir / f"stationary_{n}.dat")
    payload["runtime"] = time.perf_counter() - start
    write_json(outdir / f"stationary_{n}.json", payload)
    print(f"a_{n} = {sol.a_n!r}  energy = {sol.energy!r}  zeros = {sol.zero_count}")
    return EXIT_OK


# verify -----------------------------------------------------------------------------

def cmd_verify(mass: float = 1.0, params=None, search: bool = False, out: str = ".",
               horizon_profile: str = "lapse", r1: float = 2.1, kappa: float = 6.0) -> int:
    if not mass > 0:
        raise ConfigError("--mass must be positive")
    start = time.perf_counter()
    reports = [check_g_positivity(mass), check_pos_inequality(mass)]
    found = None
    if search:
        res = find_admissible_parameters(mass)
        found = {"found": res.found, "a": res.a, "delta": res.delta, "eps": res.eps, "tried": res.tried,
                 "constants": res.constants}
        reports += res.reports
    else:
        a, delta, eps = params if params is not None else DEFAULT_PARAMS
        reports += check_multiplier_weights(a * mass, delta, eps, mass)
    reports += check_horizon_weight(r1 * mass, mass, profile=horizon_profile, kappa=kappa)
    ok = all(r.passed for r in reports)
    payload = {"mass": mass, "pass": ok, "search": found, "reports": [r.to_json() for r in reports],
               "runtime": time.perf_counter() - start}
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_json(outdir / "verify_report.json", payload)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.id}: min margin {r.min_margin:.6g} at {r.argmin:.6g}")
    return EXIT_OK if ok else EXIT_FAIL


# decay -------------------------------------------------------------------------------

def _load_run(path: Path) -> dict:
    f = path / "summary.json"
    if not f.is_file():
        raise ConfigError(f"missing run summary: {f}")
    return json.loads(f.read_text())


def _scaled(values, normalizer):
    return values / normalizer if normalizer != 0 else np.zeros_like(values)


def _local_reports(run_dir: Path, summary: dict) -> list:
    data = read_csv(run_dir / "series_local.csv", "series_local")
    norm = summary["initial"]["E_dt"] + summary["initial"]["E_K"]
    out = []
    for x1, x2 in sorted(set(zip(data["x1"].tolist(), data["x2"].tolist()))):
        sel = (data["x1"] == x1) & (data["x2"] == x2)
        ser = TimeSeries(data["t"][sel], data["total"][sel], f"local[{x1!r},{x2!r}]")
        rep = check_local_energy_decay(ser, norm, m=summary["mass"], id_=f"local_energy[{x1!r},{x2!r}]")
        t_end = float(ser.parameter[-1])
        try:
            fit = fit_power_law(ser, (0.5 * t_end, t_end))
            rep.extra["fit"] = {"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual,
                                "window": list(fit.window)}
        except ValueError as exc:
            rep.extra["fit"] = {"skipped": str(exc)}
        out.append((rep, (ser.parameter, ser.value, _scaled(ser.parameter * ser.value, norm))))
    return out


def _pointwise_reports(run_dir: Path, summary: dict) -> list:
    init = summary["initial"]
    out = []
    for name, norm in (("pointwise", init["E1"]), ("pointwise_w", init["E1"]), ("pointwise_horizon", init["E2"])):
        data = read_csv(run_dir / f"series_{name}.csv", f"series_{name}")
        data["family"] = "w" if name == "pointwise_w" else "v"
        data["t"] = 0.5 * (data["v"] + data["w"])
        ser = pointwise_series(data, name)
        rep = check_pointwise_decay(ser, norm, id_=name, t_end=summary["t_end"])
        weighted = np.sqrt(np.maximum(1.0, ser.parameter)) * ser.value
        out.append((rep, (ser.parameter, ser.value, _scaled(weighted, norm))))
    return out


def _morawetz_reports(run_dir: Path, summary: dict) -> list:
    data = read_csv(run_dir / "series_morawetz.csv", "series_morawetz")
    ser = TimeSeries(data["t"], data["cumulative"], "morawetz")
    e0 = summary["initial"]["energy"]
    return [(check_morawetz_ratio(ser, e0), (ser.parameter, ser.value, _scaled(ser.value, e0)))]


_BOUNDS = {"local": _local_reports, "pointwise": _pointwise_reports, "morawetz": _morawetz_reports}


def _table_name(report_id: str) -> str:
    return "fit_" + _column_name(report_id) + ".csv"


def cmd_decay(input_dir: str, bound: str = "all", baseline: Optional[str] = None, out: Optional[str] = None) -> int:
    run_dir = Path(input_dir)
    summary = _load_run(run_dir)
    kinds = list(_BOUNDS) if bound == "all" else [bound]
    found = []
    for k in kinds:
        found += _BOUNDS[k](run_dir, summary)
    reports = [rep for rep, _ in found]
    if baseline is not None:
        base_dir = Path(baseline)
        base_summary = _load_run(base_dir)
        base = {r.id: r for k in kinds for r, _ in _BOUNDS[k](base_dir, base_summary)}
        reports = [compare_runs(base[r.id], r) if r.id in base else r for r in reports]
    ok = all(r.passed for r in reports)
    outdir = Path(out) if out is not None else run_dir
    outdir.mkdir(parents=True, exist_ok=True)
    for rep, (param, value, weighted) in zip(reports, (tab for _, tab in found)):
        rep.extra["table"] = _table_name(rep.id)
        write_csv(outdir / rep.extra["table"], "fit_table", ("parameter", "value", "weighted_value"),
                  zip(param, value, weighted))
    payload = {"input": str(run_dir), "baseline": baseline, "pass": ok, "reports": [r.to_json() for r in reports]}
    write_json(outdir / "decay_report.json", payload)
    for r in reports:
        ch = "n/a" if r.relative_change is None else f"{r.relative_change:.3%}"
        print(f"{'PASS' if r.passed else 'FAIL'} {r.id}: C_emp={r.c_emp:.6g} change={ch}")
    return EXIT_OK if ok else EXIT_FAIL


# entry point ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ymsw", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("evolve", help="evolve initial data from a config file")
    e.add_argument("config")
    e.add_argument("--out", help="output directory (overrides output.dir)")

    s = sub.add_parser("stationary", help="shoot for the n-th static solution")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--mass", type=float, default=1.0)
    s.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--grid", type=float, nargs=3, metavar=("X_MIN", "X_MAX", "N"),
                   help="grid for the exported profile (default -100m 100m 2001)")
    s.add_argument("--out", default=".")

    v = sub.add_parser("verify", help="dense-sampling checks of the multiplier inequalities")
    v.add_argument("--mass", type=float, default=1.0)
    v.add_argument("--params", type=float, nargs=3, metavar=("A", "DELTA", "EPS"),
                   help="a (units of m), delta, eps; default 40 0.01 0.25")
    v.add_argument("--search", action="store_true", help="search for admissible (a, delta, eps)")
    v.add_argument("--horizon-profile", choices=("lapse", "tortoise"), default="lapse")
    v.add_argument("--r1", type=float, default=2.1, help="horizon weight radius in units of m")
    v.add_argument("--kappa", type=float, default=6.0)
    v.add_argument("--out", default=".")

    d = sub.add_parser("decay", help="decay checks on a finished run")
    d.add_argument("--input", required=True)
    d.add_argument("--bound", choices=("local", "pointwise", "morawetz", "all"), default="all")
    d.add_argument("--baseline", help="run directory with half the final time, for the doubling comparison")
    d.add_argument("--out")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "evolve":
            return cmd_evolve(args.config, args.out)
        if args.command == "stationary":
            return cmd_stationary(args.n, args.mass, args.bracket, args.out, args.grid)
        if args.command == "verify":
            return cmd_verify(args.mass, args.params, args.search, args.out, args.horizon_profile,
                              args.r1, args.kappa)
        return cmd_decay(args.input, args.bound, args.baseline, args.out)
    except (ConfigError, DomainError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if "bracket" in str(exc):
            print("advice: widen --bracket so that it contains the requested threshold", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
