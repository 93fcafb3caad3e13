"""Command-line entry point: ``nvdnp <command> [--config FILE] [overrides]``."""

from __future__ import annotations

import argparse
import copy
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import io
from .estimation import (COMPONENTS, CalibrationError, ExperimentTrace, FitError,
                         GridBoundaryError, calibrate_angle, calibrate_field,
                         default_c_grid, estimate_cperp, scan_cperp)
from .evolution import (DegenerateSteadyStateError, InvariantError, RELAX_TIME_US,
                        dnp_sequence)
from .hamiltonian import FieldConfig
from .sweeps import BASE_WINDOW_US, N_TIMES, default_workers, ionization_scan, power_scan, steady_scan

log = logging.getLogger("nvdnp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "simulate": {"field": {"b_gauss": 348.0, "theta_deg": 1.5},
                 "time": {"start": 0.0, "stop": 20.0, "count": 50}},
    "steady-scan": {"scan": {"b_grid": {"start": 200.0, "stop": 520.0, "step": 10.0},
                             "thetas": [0.0, 1.0, 1.5, 2.0, 2.5, 3.0]}},
    "fit-cperp": {"scan": {"c_grid": default_c_grid().tolist(), "refine": True,
                           "components": list(COMPONENTS)}},
    "calibrate": {},
    "power-scan": {"field": {"b_gauss": 249.0, "theta_deg": 2.1},
                   "scan": {"w_grid": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
                            "window_us": BASE_WINDOW_US, "n_times": N_TIMES}},
    "ionization-scan": {"scan": {"gamma_grid": [0.0, 1.0, 5.0, 10.0, 20.0],
                                 "b_grid": [150.0, 450.0], "theta_deg": 1.7,
                                 "window_us": None, "n_times": N_TIMES}},
    "synth": {"field": {"b_gauss": 348.0, "theta_deg": 1.5},
              "time": {"start": 0.0, "stop": 20.0, "count": 41},
              "noise": {"sigma": 0.02}},
}


# argument parsing ------------------------------------------------------------------

def _grid_arg(text: str):
    """``start:stop:step`` or a comma list."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("range grids are start:stop:step")
        start, stop, step = (float(x) for x in parts)
        return {"start": start, "stop": stop, "step": step}
    return [float(x) for x in text.split(",") if x.strip()]


def _set_arg(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config (or a previous run's JSON sidecar)")
    p.add_argument("--out", help="output CSV path; the JSON record goes next to it")
    p.add_argument("--workers", type=int, help="process count (default: $NVDNP_WORKERS or 1)")
    p.add_argument("--set", dest="sets", action="append", type=_set_arg, default=[],
                   metavar="KEY=VALUE", help="dotted override, e.g. rates.epsilon=0")
    p.add_argument("--b-gauss", type=float)
    p.add_argument("--theta-deg", type=float)
    p.add_argument("--c-perp", type=float, help="transverse excited-state hyperfine, MHz")
    p.add_argument("--w", type=float, help="pump parameter")
    p.add_argument("--gamma-ion", type=float, help="ionization rate, MHz")
    p.add_argument("--relax-time", type=float, help="dark interval before the swap, us")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvdnp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="polarization transfer trace after the swap")
    _common(p)
    p.add_argument("--t-start", type=float)
    p.add_argument("--t-stop", type=float)
    p.add_argument("--t-count", type=int)
    p.add_argument("--times", type=_grid_arg, help="explicit time grid in us")

    p = sub.add_parser("steady-scan", help="steady-state populations over (B, theta)")
    _common(p)
    p.add_argument("--b-grid", type=_grid_arg)
    p.add_argument("--thetas", type=_grid_arg)

    p = sub.add_parser("fit-cperp", help="estimate C_perp from measured traces")
    _common(p)
    p.add_argument("inputs", nargs="*", help="trace CSV files")
    p.add_argument("--c-grid", type=_grid_arg)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--components", help="comma list from plus1,zero")

    p = sub.add_parser("calibrate", help="field magnitude and angle from ODMR lines")
    _common(p)
    p.add_argument("--nu-plus", type=float, help="upper ground transition, MHz")
    p.add_argument("--nu-minus", type=float, help="lower ground transition, MHz")
    p.add_argument("--steady", help="CSV of b_gauss, p_plus1_inf, p_zero_inf")

    p = sub.add_parser("power-scan", help="rise times versus pump parameter")
    _common(p)
    p.add_argument("--w-grid", type=_grid_arg)

    p = sub.add_parser("ionization-scan", help="rise times versus ionization rate")
    _common(p)
    p.add_argument("--gamma-grid", type=_grid_arg)
    p.add_argument("--b-grid", type=_grid_arg)

    p = sub.add_parser("synth", help="write a noisy synthetic trace file")
    _common(p)
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--t-start", type=float)
    p.add_argument("--t-stop", type=float)
    p.add_argument("--t-count", type=int)
    return parser


def _put(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise io.ConfigError(f"cannot set {dotted}: {k} is not a section")
    node[keys[-1]] = value


def _time_override(cfg: dict, args) -> None:
    if getattr(args, "times", None) is not None:
        cfg["time"] = args.times
        return
    for attr, key in (("t_start", "start"), ("t_stop", "stop"), ("t_count", "count")):
        v = getattr(args, attr, None)
        if v is not None:
            if not isinstance(cfg.get("time"), dict) or "values" in cfg["time"]:
                cfg["time"] = {}
            cfg["time"][key] = v


def resolve_config(args) -> dict:
    """Defaults < config file < flags."""
    cfg = io.merge({"system": {}, "rates": {}}, copy.deepcopy(DEFAULTS[args.command]))
    if args.config:
        cfg = io.merge(cfg, copy.deepcopy(io.load_config(args.config)))
    flags = {
        "field.b_gauss": args.b_gauss, "field.theta_deg": args.theta_deg,
        "system.c_perp": args.c_perp, "rates.w": args.w, "rates.gamma_ion": args.gamma_ion,
        "relax_time_us": args.relax_time, "workers": args.workers, "output": args.out,
    }
    extra = {
        "steady-scan": {"scan.b_grid": "b_grid", "scan.thetas": "thetas"},
        "fit-cperp": {"scan.c_grid": "c_grid"},
        "calibrate": {"nu_plus_mhz": "nu_plus", "nu_minus_mhz": "nu_minus",
                      "steady_file": "steady"},
        "power-scan": {"scan.w_grid": "w_grid"},
        "ionization-scan": {"scan.gamma_grid": "gamma_grid", "scan.b_grid": "b_grid"},
        "synth": {"noise.sigma": "sigma", "seed": "seed"},
    }.get(args.command, {})
    for key, attr in extra.items():
        flags[key] = getattr(args, attr, None)
    for key, value in flags.items():
        if value is not None:
            _put(cfg, key, value)
    if args.command == "fit-cperp":
        if args.inputs:
            cfg["inputs"] = list(args.inputs)
        if args.no_refine:
            _put(cfg, "scan.refine", False)
        if args.components:
            _put(cfg, "scan.components", [c.strip() for c in args.components.split(",")])
    _time_override(cfg, args)
    for key, value in args.sets:
        _put(cfg, key, value)
    cfg.setdefault("relax_time_us", RELAX_TIME_US)
    cfg.setdefault("output", f"{args.command.replace('-', '_')}.csv")
    if cfg.get("workers") is None:
        cfg["workers"] = default_workers()
    if int(cfg["workers"]) < 1:
        raise io.ConfigError("workers must be >= 1")
    return io.resolved(cfg)


# commands -------------------------------------------------------------------------

def cmd_simulate(cfg: dict, rec: io.ResultRecord) -> int:
    p, r, f = io.system_from(cfg), io.rates_from(cfg), io.field_from(cfg)
    t = io.time_grid_from(cfg)
    trace = dnp_sequence(p, f, r, t, relax_time=float(cfg["relax_time_us"]))
    io.write_csv(cfg["output"], ("t_us", "p_plus1", "p_zero", "p_minus1"),
                 zip(trace.times, trace.p_plus1, trace.p_zero, trace.p_minus1))
    rec.outputs = {"csv": str(cfg["output"]), "rows": len(t)}
    return EXIT_OK


def cmd_steady_scan(cfg: dict, rec: io.ResultRecord) -> int:
    p, r = io.system_from(cfg), io.rates_from(cfg)
    b = io.grid_from(cfg["scan"].get("b_grid"), "b")
    th = io.grid_from(cfg["scan"].get("thetas"), "theta")
    for x in th:
        FieldConfig(b[0], x)  # validate before the sweep
    for x in b:
        FieldConfig(x, th[0])
    rows = steady_scan(p, r, b, th, workers=int(cfg["workers"]))
    io.write_csv(cfg["output"], ("b_gauss", "theta_deg", "p_plus1", "p_zero", "p_minus1"), rows)
    rec.outputs = {"csv": str(cfg["output"]), "rows": len(rows)}
    return EXIT_OK


def cmd_fit_cperp(cfg: dict, rec: io.ResultRecord) -> int:
    p, r = io.system_from(cfg), io.rates_from(cfg)
    inputs = cfg.get("inputs") or []
    if not inputs:
        raise io.ConfigError("fit-cperp needs at least one trace file")
    scan = cfg["scan"]
    grid = io.grid_from(scan.get("c_grid"), "c_perp")
    comps = tuple(scan.get("components") or COMPONENTS)
    bad = [c for c in comps if c not in COMPONENTS]
    if bad:
        raise io.ConfigError(f"unknown components {bad}; choose from {COMPONENTS}")
    if len(grid) < 5:
        raise io.ConfigError("c_perp grid needs at least 5 points")
    jobs = []
    for item in inputs:
        # an input is a path, or {path, components} to restrict one file
        if isinstance(item, dict):
            path, own = item.get("path"), tuple(item.get("components") or comps)
            if path is None or any(c not in COMPONENTS for c in own):
                raise io.ConfigError(f"bad input entry {item!r}")
        else:
            path, own = item, comps
        jobs.append((path, own, io.read_trace_csv(path)))
    scans = []
    for path, own, data in jobs:
        res = scan_cperp(data, p, r, grid, bool(scan.get("refine", True)), own,
                         float(cfg["relax_time_us"]), label=Path(path).stem)
        for s in res.values():
            for c, msg in s.errors.items():
                log.warning("%s: simulation failed at C_perp=%g: %s", s.label, c, msg)
        scans += list(res.values())
    rows = [(s.label, s.component, s.field.b, s.field.theta, c, x)
            for s in scans for c, x in zip(s.c_perp, s.chi2)]
    io.write_csv(cfg["output"], ("label", "component", "b_gauss", "theta_deg", "c_perp_mhz",
                                 "chi2"), rows)
    rec.outputs = {"csv": str(cfg["output"])}
    try:
        est = estimate_cperp(scans)
    except GridBoundaryError as exc:
        rec.outputs["warning"] = str(exc)
        log.warning("boundary minimum: %s", exc)
        return EXIT_USAGE
    rec.outputs["estimate"] = {k: v for k, v in est.as_dict().items() if k != "scans"}
    print(f"C_perp = {est.c_perp_best:.3f} +/- {est.uncertainty:.3f} MHz "
          f"({len(est.minima)} scans)")
    return EXIT_OK


def cmd_calibrate(cfg: dict, rec: io.ResultRecord) -> int:
    p, r = io.system_from(cfg), io.rates_from(cfg)
    nu_p, nu_m = cfg.get("nu_plus_mhz"), cfg.get("nu_minus_mhz")
    steady_file = cfg.get("steady_file")
    if (nu_p is None) != (nu_m is None):
        raise io.ConfigError("give both nu_plus and nu_minus")
    if nu_p is None and steady_file is None:
        raise io.ConfigError("calibrate needs (nu_plus, nu_minus) and/or a steady-state file")
    out: dict = {}
    rows = []
    b = None
    if nu_p is not None:
        f1 = calibrate_field(float(nu_p), float(nu_m), p)
        b = f1.b
        out["stage1"] = {"b_gauss": f1.b, "theta_deg": f1.theta}
        out["b_gauss"], out["theta_deg"], out["theta_stage"] = f1.b, f1.theta, "stage1"
        rows.append(("stage1", f1.b, f1.theta))
    if steady_file is not None:
        data = io.read_steady_csv(steady_file)
        theta = calibrate_angle(data, p, r)
        out["stage2"] = {"theta_deg": theta}
        out["theta_deg"], out["theta_stage"] = theta, "stage2"
        if b is None:
            b = float(np.mean([row[0] for row in data]))
        out["b_gauss"] = b
        rows.append(("stage2", b, theta))
    io.write_csv(cfg["output"], ("stage", "b_gauss", "theta_deg"), rows)
    rec.outputs = {"csv": str(cfg["output"]), **out}
    print(f"B = {out['b_gauss']:.4f} G, theta = {out['theta_deg']:.4f} deg ({out['theta_stage']})")
    return EXIT_OK


def cmd_power_scan(cfg: dict, rec: io.ResultRecord) -> int:
    p, r, f = io.system_from(cfg), io.rates_from(cfg), io.field_from(cfg)
    scan = cfg["scan"]
    w = io.grid_from(scan.get("w_grid"), "w")
    if any(x <= 0 for x in w):
        raise io.ConfigError("pump parameters must be positive")
    rows = power_scan(p, f, r, w, float(scan.get("window_us", BASE_WINDOW_US)),
                      int(scan.get("n_times", N_TIMES)), workers=int(cfg["workers"]))
    io.write_csv(cfg["output"], ("w", "tau_plus1_us", "tau_zero_us", "tau_minus1_us"), rows)
    rec.outputs = {"csv": str(cfg["output"]), "rows": len(rows)}
    return EXIT_OK


def cmd_ionization_scan(cfg: dict, rec: io.ResultRecord) -> int:
    p, r = io.system_from(cfg), io.rates_from(cfg)
    scan = cfg["scan"]
    g = io.grid_from(scan.get("gamma_grid"), "gamma_ion")
    b = io.grid_from(scan.get("b_grid"), "b")
    if any(x < 0 for x in g):
        raise io.ConfigError("ionization rates must be >= 0")
    window = scan.get("window_us")
    rows = ionization_scan(p, r, g, b, theta=float(scan.get("theta_deg", 1.7)),
                           window=None if window is None else float(window),
                           n_times=int(scan.get("n_times", N_TIMES)),
                           workers=int(cfg["workers"]))
    io.write_csv(cfg["output"], ("gamma_ion_mhz", "b_gauss", "tau_plus1_us"), rows)
    rec.outputs = {"csv": str(cfg["output"]), "rows": len(rows)}
    return EXIT_OK


def cmd_synth(cfg: dict, rec: io.ResultRecord) -> int:
    p, r, f = io.system_from(cfg), io.rates_from(cfg), io.field_from(cfg)
    t = np.asarray(io.time_grid_from(cfg))
    sigma = float(cfg.get("noise", {}).get("sigma", 0.0))
    if sigma < 0:
        raise io.ConfigError("noise.sigma must be >= 0")
    cfg.setdefault("seed", 0)
    rng = np.random.default_rng(int(cfg["seed"]))
    trace = dnp_sequence(p, f, r, t, relax_time=float(cfg["relax_time_us"]))
    noisy = [np.clip(y + sigma * rng.standard_normal(t.size), 0.0, 1.0)
             for y in (trace.p_plus1, trace.p_zero)]
    data = ExperimentTrace(f, t, noisy[0], noisy[1],
                           np.full(t.size, sigma) if sigma > 0 else None)
    io.write_trace_csv(cfg["output"], data)
    rec.outputs = {"csv": str(cfg["output"]), "rows": int(t.size)}
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "steady-scan": cmd_steady_scan, "fit-cperp": cmd_fit_cperp,
    "calibrate": cmd_calibrate, "power-scan": cmd_power_scan,
    "ionization-scan": cmd_ionization_scan, "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        rec = io.ResultRecord(args.command, cfg)
        code = COMMANDS[args.command](cfg, rec)
    except (io.ConfigError, CalibrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantError, DegenerateSteadyStateError, FitError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    rec.finish().write(io.sidecar_path(cfg["output"]))
    return code


if __name__ == "__main__":
    sys.exit(main())
