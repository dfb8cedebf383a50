"""Command-line front end.

Subcommands::

    example   run a built-in preset end to end (certify, simulate, check)
    certify   certificate report for a parameter file and a schedule file
    simulate  trajectory CSV for a preset or a term-based system file
    schedule  window counts, ADT / reverse-ADT checks, window-count band
    export    write a preset's parameter, schedule and system files

Exit codes: 0 success, 1 input/output or parse error, 2 a check failed or
the certificate was not granted, 3 the simulation diverged.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .certificate import (
    D3,
    D4,
    CertificateParams,
    certify,
    classify_case,
    window_count_bounds,
)
from .core import HistoryFunction
from .integrator import DivergenceError, SimConfig, simulate, write_trajectory_csv
from .lyapunov import (
    check_envelope,
    check_final_bound,
    envelope,
    norm_bound,
    w_series,
    write_diagnostic_csv,
)
from .presets import PRESET_NAMES, certify_preset, get_preset, system_from_dict, system_to_dict
from .schedule import (
    AdtParams,
    check_adt,
    check_reverse_adt,
    schedule_from_dict,
    window_counts,
)

EXIT_OK, EXIT_IO, EXIT_CHECK, EXIT_DIVERGED = 0, 1, 2, 3


class InputError(Exception):
    """Unreadable or malformed input file."""


def _load_yaml(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise InputError(f"{path}: YAML parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a mapping at the top level")
    return data


def _build(path: str, what: str, fn, data):
    try:
        return fn(data)
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc.args[0]!r} in {what}") from exc
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid {what}: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(payload), indent=2)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def _override(params: CertificateParams, lam, mu) -> CertificateParams:
    d = params.to_dict()
    if lam is not None:
        d["lam"] = lam
    if mu is not None:
        d["mu"] = mu
    return CertificateParams(**d)


# --- subcommands ---------------------------------------------------------------


def cmd_example(args) -> int:
    preset = get_preset(args.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = certify_preset(preset, args.lam, args.mu)
    params = report.params
    payload = {"preset": preset.name, "certificate": report.to_dict(),
               "derivation": preset.derivation, "reference": preset.reference,
               "flags": preset.flags, "checks": {}}
    failed = [] if report.certified else ["certificate"]

    step = args.step
    try:
        traj = simulate(preset.system, preset.schedule, preset.initial, preset.t0,
                        SimConfig(step, preset.horizon))
    except DivergenceError as exc:
        payload["checks"]["simulation"] = f"diverged at t = {exc.t}"
        _emit(payload, str(out / "report.json"))
        print(f"divergence at t = {exc.t}", file=sys.stderr)
        return EXIT_DIVERGED
    write_trajectory_csv(traj, out / "trajectory.csv")

    sigma = report.sigma_result.sigma
    ws = w_series(preset.pair, traj)
    if sigma is not None:
        env = check_envelope(preset.pair, traj, preset.schedule, sigma, params.c, args.tol, ws=ws)
        payload["checks"]["envelope"] = vars(env)
        if not env.holds:
            failed.append("envelope")
        bounds = envelope(ws, preset.schedule, preset.t0, sigma, params.c)
    else:
        bounds = (np.full(ws.t.size, np.nan), np.full(ws.t.size, np.nan))
    mu = report.mu_used
    if mu is not None and math.isfinite(mu):
        fb = check_final_bound(preset.pair, traj, mu, params.lam, args.tol, ws=ws)
        payload["checks"]["final_bound"] = vars(fb)
        if not fb.holds:
            failed.append("final_bound")
        nb = norm_bound(ws, preset.pair, preset.t0, mu, params.lam)
    else:
        nb = np.full(ws.t.size, np.nan)
    write_diagnostic_csv(out / "diagnostics.csv", ws, bounds, nb)

    x0 = float(np.linalg.norm(preset.initial.current))
    xf = float(np.linalg.norm(traj.states[-1]))
    payload["checks"]["decay_ratio"] = xf / x0 if x0 else 0.0
    payload["failed"] = failed
    _emit(payload, str(out / "report.json"))
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_certify(args) -> int:
    pdata = _load_yaml(args.params)
    sdata = _load_yaml(args.schedule)
    params = _build(args.params, "certificate parameters", CertificateParams.from_dict,
                    pdata.get("params", pdata))
    sched = _build(args.schedule, "schedule", schedule_from_dict, sdata)
    params = _override(params, args.lam, args.mu)
    horizon = args.horizon
    if horizon is None:
        horizon = sched.horizon if math.isfinite(sched.horizon) else args.t0 + 20 * sched.period
    report = certify(params, sched, args.t0, horizon)
    _emit({"horizon": horizon, **report.to_dict()}, args.out)
    return EXIT_OK if report.certified else EXIT_CHECK


def cmd_simulate(args) -> int:
    if args.preset:
        preset = get_preset(args.preset)
        system, sched, phi, t0 = preset.system, preset.schedule, preset.initial, preset.t0
        t_end = args.t_end if args.t_end is not None else preset.horizon
    else:
        if not args.system:
            raise InputError("simulate needs --preset or --system")
        sdata = _load_yaml(args.system)
        system = _build(args.system, "system", system_from_dict, sdata)
        sched = None
        t0 = float(sdata.get("t0", 0.0))
        t_end = args.t_end if args.t_end is not None else sdata.get("t_end")
        if t_end is None:
            raise InputError(f"{args.system}: no t_end given (field 't_end' or --t-end)")
        init = sdata.get("initial", [0.0] * system.dimension)
        phi = _build(args.system, "initial history",
                     lambda v: HistoryFunction.constant(v, system.tau), init)
    if args.schedule:
        sched = _build(args.schedule, "schedule", schedule_from_dict, _load_yaml(args.schedule))
    if args.initial is not None:
        try:
            vals = [float(v) for v in args.initial.split(",")]
        except ValueError as exc:
            raise InputError(f"--initial: {exc}") from exc
        phi = HistoryFunction.constant(vals, system.tau)
    try:
        traj = simulate(system, sched, phi, t0, SimConfig(args.step, float(t_end), args.stride))
    except DivergenceError as exc:
        print(f"divergence at t = {exc.t}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_trajectory_csv(traj, args.out)
    print(f"wrote {args.out}: {int(traj.solution_mask().sum())} nodes, "
          f"{traj.impulse_times.size} impulses, final |x| = {np.linalg.norm(traj.states[-1]):.6g}")
    return EXIT_OK


def cmd_schedule(args) -> int:
    sched = _build(args.file, "schedule", schedule_from_dict, _load_yaml(args.file))
    horizon = args.horizon
    if horizon is None:
        horizon = sched.horizon if math.isfinite(sched.horizon) else args.t0 + 20 * sched.period
    payload: dict = {"horizon": horizon}
    code = EXIT_OK
    if args.analysis == "windows":
        if args.tau is None:
            raise InputError("windows analysis needs --tau")
        wc = window_counts(sched, args.tau, horizon)
        payload.update(counts=[{"k": k, "count": n} for k, n in wc.counts],
                       supremum=wc.supremum, horizon_limited=wc.horizon_limited)
    else:
        if args.t_star is None or args.n_star is None:
            raise InputError(f"{args.analysis} analysis needs --t-star and --n-star")
        adt = AdtParams(args.t_star, args.n_star)
        check = check_adt if args.analysis == "adt" else check_reverse_adt
        v = check(sched, adt, args.t0, horizon)
        payload.update(holds=v.holds, worst_slack=v.worst_slack,
                       witness=v.witness._asdict() if v.witness else None,
                       horizon_limited=v.horizon_limited)
        if not v.holds:
            code = EXIT_CHECK
    if args.params and args.sigma is not None and args.t_star is not None and args.n_star is not None:
        pdata = _load_yaml(args.params)
        params = _build(args.params, "certificate parameters", CertificateParams.from_dict,
                        pdata.get("params", pdata))
        if classify_case(params.c, params.rho1, params.rho2, params.kappa, params.tau) in (D3, D4):
            lo, hi, empty = window_count_bounds(params, args.sigma, AdtParams(args.t_star, args.n_star))
            payload["window_band"] = {"lower": lo, "upper": hi, "empty": empty}
    _emit(payload, args.out)
    return code


def cmd_export(args) -> int:
    preset = get_preset(args.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {k: v for k, v in preset.params.to_dict().items() if v is not None}
    system = system_to_dict(preset.system)
    system["initial"] = preset.initial.current.tolist()
    system["t_end"] = preset.horizon
    for name, data in (("params.yaml", {"params": params}),
                       ("schedule.yaml", preset.schedule.to_dict()),
                       ("system.yaml", system)):
        (out / name).write_text(yaml.safe_dump(data, sort_keys=False))
    print(f"wrote params.yaml, schedule.yaml, system.yaml to {out}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delayed-impulses", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("example", help="run a built-in preset end to end")
    p.add_argument("name", choices=PRESET_NAMES)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--tol", type=float, default=0.05, help="relative tolerance of runtime checks")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("certify", help="certificate for parameter and schedule files")
    p.add_argument("params")
    p.add_argument("schedule")
    p.add_argument("--horizon", type=float)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="simulate and write a trajectory CSV")
    p.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--system", help="YAML system file built from linear terms")
    p.add_argument("--schedule", help="YAML schedule file (overrides the preset's)")
    p.add_argument("--initial", help="constant initial history, comma separated")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", default="trajectory.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("schedule", help="analyze an impulse schedule")
    p.add_argument("file")
    p.add_argument("analysis", choices=("adt", "reverse", "windows"))
    p.add_argument("--tau", type=float)
    p.add_argument("--t-star", dest="t_star", type=float)
    p.add_argument("--n-star", dest="n_star", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--params", help="certificate parameters, for the window-count band")
    p.add_argument("--sigma", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("export", help="write a preset's input files")
    p.add_argument("name", choices=PRESET_NAMES)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
