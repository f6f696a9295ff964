"""Command-line interface: ``timeopt {optimize,sweep,baseline,verify,selftest}``.

Exit codes: 0 success, 1 optimizer non-convergence or failed check,
2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_all
from .gates import TargetGate, parse_angle, parse_gate
from .grape import (
    OptimizationConfig,
    achieved_fidelity,
    default_slices,
    functional_label,
    optimize,
    resolve_functional,
)
from .io import (
    format_couplings,
    parse_couplings,
    read_config_file,
    read_pulse_file,
    run_manifest,
    write_curve,
    write_pulse_file,
    write_trace,
)
from .spin import DEFAULT_UMAX, SpinSystem, make_topology
from .sweep import MinimalTimeNotFound, SweepConfig, format_report, minimal_time, speedup_report

log = logging.getLogger("timeopt")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

FAMILY_OF = {"qft": "qft", "cn_not": "cn_not"}


class UsageError(Exception):
    pass


def _parse_J(text: str, kind: str):
    """Scalar coupling, comma list of per-edge values, or ``l-m:J`` edge list."""
    text = text.strip()
    if ":" in text:
        return parse_couplings(text.replace(",", " "))
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) == 1:
        return float(parts[0])
    if kind == "custom":
        raise UsageError("custom topology needs --J as an edge list like '0-1:1.0,1-2:0.5'")
    return [float(p) for p in parts]


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value file; flags given on the command line win")
    p.add_argument("--gate", help="qft, cn_not, toffoli, swap:0,1, cnot:0,1, cphase:pi/2,0,1, zzz:0.5, ...")
    p.add_argument("--topology", choices=["chain", "complete", "cycle", "star", "custom"])
    p.add_argument("--n", type=int)
    p.add_argument("--J", dest="J", help="coupling: scalar, per-edge list, or l-m:J edge list")
    p.add_argument("--slices", type=int, help="number of piecewise-constant slices M")
    p.add_argument("--functional", help="psu | su | su:auto | su:p<k> | su:<angle>")
    p.add_argument("--umax", type=float, help="control amplitude bound in rad per 1/J (default 50*2*pi)")
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--method", choices=["lbfgs", "gradient"])
    p.add_argument("--target", type=float, help="fidelity target (default 0.99999)")
    p.add_argument("--workers", type=int, help="parallel processes for restarts")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


DEFAULTS = {
    "topology": "chain",
    "J": "1.0",
    "functional": "psu",
    "umax": DEFAULT_UMAX,
    "restarts": 20,
    "seed": 0,
    "max_iter": 5000,
    "method": "lbfgs",
    "target": 0.99999,
    "workers": 1,
    "warm_start": True,
    "t_step": 0.01,
    "coarse_step": 0.1,
}
CASTS = {
    "n": int,
    "slices": int,
    "restarts": int,
    "seed": int,
    "max_iter": int,
    "workers": int,
    "umax": float,
    "target": float,
    "time": float,
    "t_start": float,
    "t_stop": float,
    "t_step": float,
    "coarse_step": float,
    "warm_start": lambda s: str(s).lower() in ("1", "true", "yes", "on"),
}


def _settings(args) -> dict:
    """Merge defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            merged.update(read_config_file(args.config))
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "cmd", "func", "verbose"):
            merged[key] = value
    out = {}
    for key, value in merged.items():
        try:
            out[key] = CASTS[key](value) if key in CASTS else value
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc
    return out


def _build(s: dict) -> tuple[SpinSystem, TargetGate, OptimizationConfig]:
    if s.get("gate") is None or s.get("n") is None:
        raise UsageError("--gate and --n are required")
    try:
        graph = make_topology(s["topology"], s["n"], _parse_J(str(s["J"]), s["topology"]))
        system = SpinSystem(graph, s["umax"])
        gate = parse_gate(s["gate"], s["n"])
        config = OptimizationConfig(
            functional=s["functional"],
            max_iterations=s["max_iter"],
            fidelity_target=s["target"],
            seed=s["seed"],
            restarts=s["restarts"],
            method=s["method"],
            workers=s["workers"],
        )
        resolve_functional(config.functional, gate)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    return system, gate, config


def _header(system, gate, result, settings, wall_time) -> dict:
    kind, phase = result.functional, result.phase
    header = {
        "gate": gate.spec(),
        "n": system.n,
        "topology": system.graph.kind,
        "couplings": format_couplings(system.graph),
        "umax": repr(float(system.amplitude_bound)),
        "T": repr(float(result.sequence.T)),
        "M": result.sequence.M,
        "functional": kind,
        "phase": None if phase is None else repr(float(phase)),
        "seed": result.seed,
        "fidelity": repr(float(result.fidelity)),
        "converged": int(result.converged),
        "iterations": result.iterations,
    }
    manifest = run_manifest(settings, seeds=[settings.get("seed", 0)], wall_time=wall_time)
    header.update({f"manifest.{k}": v for k, v in manifest.items()})
    return header


def _outdir(settings) -> Path | None:
    if not settings.get("out"):
        return None
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_optimize(args) -> int:
    s = _settings(args)
    if s.get("time") is None:
        raise UsageError("--time is required")
    system, gate, config = _build(s)
    T = s["time"]
    M = s.get("slices") or default_slices(T, system.graph.j_ref)
    t0 = time.perf_counter()
    res = optimize(system, gate, T, M, config)
    wall = time.perf_counter() - t0
    print(
        f"{gate.spec()} n={system.n} {system.graph.kind} T={T} M={M} {functional_label(res.functional, res.phase)}: "
        f"F={res.fidelity:.8f} after {res.iterations} iterations (restart {res.restart}, {res.status})"
    )
    out = _outdir(s)
    if out:
        header = _header(system, gate, res, s, wall)
        write_pulse_file(out / "pulses.csv", res.sequence, header)
        write_trace(out / "trace.csv", res.trace, {k: v for k, v in header.items() if k.startswith("manifest.")})
        print(f"wrote {out / 'pulses.csv'} and {out / 'trace.csv'}")
    return EXIT_OK if res.converged else EXIT_FAIL


def cmd_sweep(args) -> int:
    s = _settings(args)
    for key in ("t_start", "t_stop"):
        if s.get(key) is None:
            raise UsageError(f"--{key.replace('_', '-')} is required")
    system, gate, config = _build(s)
    try:
        sweep = SweepConfig(
            t_start=s["t_start"],
            t_stop=s["t_stop"],
            t_step=s["t_step"],
            coarse_step=s["coarse_step"],
            restarts=s["restarts"],
            warm_start=s["warm_start"],
            slices=s.get("slices"),
            optimization=config,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    t0 = time.perf_counter()
    try:
        tau, result = minimal_time(system, gate, sweep)
    except MinimalTimeNotFound as exc:
        tau, result = None, exc.sweep
        print(str(exc))
    wall = time.perf_counter() - t0

    for p in result.points:
        flag = "  (optimizer miss)" if p.flagged else ""
        print(f"T={p.T:.2f}  F={p.best_F:.8f}  deficit={1 - p.best_F:.2e}  restarts={p.restarts_used}{flag}")
    if tau is not None:
        print(f"minimal time tau* = {tau:.2f} / J")
        family = FAMILY_OF.get(gate.name)
        if family:
            rows, notices = speedup_report(family, system.graph.kind, system.n, tau)
            if rows or notices:
                print(format_report(rows, notices))

    out = _outdir(s)
    if out:
        manifest = {f"manifest.{k}": v for k, v in run_manifest(s, [s["seed"]], wall).items()}
        head = {"gate": gate.spec(), "n": system.n, "topology": system.graph.kind,
                "functional": s["functional"], "tau": None if tau is None else f"{tau:.2f}", **manifest}
        write_curve(out / "curve.csv", result.rows(), head)
        if tau is not None:
            best = result.at(tau).result
            write_pulse_file(out / "pulses.csv", best.sequence, _header(system, gate, best, s, wall))
        print(f"wrote results to {out}")
    return EXIT_OK if tau is not None else EXIT_FAIL


def cmd_baseline(args) -> int:
    if args.result:
        _, header = read_pulse_file(args.result)
        family = header.get("gate", "").split(":")[0]
        topology = header.get("topology", "")
        n = int(header.get("n", 0))
        tau = round(float(header["T"]), 2)
    else:
        if None in (args.family, args.topology, args.n, args.tau):
            raise UsageError("give a result file or all of --family, --topology, --n, --tau")
        family, topology, n, tau = args.family, args.topology, args.n, args.tau
    rows, notices = speedup_report(family, topology, n, tau)
    print(format_report(rows, notices))
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        seq, header = read_pulse_file(args.file)
        n = int(header["n"])
        graph = make_topology("custom", n, parse_couplings(header["couplings"]))
        system = SpinSystem(graph, float(header["umax"]))
        gate = parse_gate(header["gate"], n)
        kind = header.get("functional", "psu")
        phase = None if header.get("phase", "none") == "none" else parse_angle(header["phase"])
        stored = float(header["fidelity"])
    except (KeyError, ValueError, OSError) as exc:
        raise UsageError(f"cannot read {args.file}: {exc}") from exc
    F = achieved_fidelity(seq, system, gate, kind, phase)
    diff = abs(F - stored)
    ok = diff <= args.tol and seq.check_bound(system.amplitude_bound)
    print(f"re-simulated F = {F:.12f}, stored F = {stored:.12f}, |diff| = {diff:.2e} -> {'OK' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_selftest(args) -> int:
    ok = True
    for name, passed, detail in run_all():
        ok &= passed
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timeopt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"timeopt {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("optimize", help="single optimization at fixed total time")
    _common(p)
    p.add_argument("--time", type=float, help="total duration T in 1/J")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="descending duration sweep and minimal-time estimate")
    _common(p)
    p.add_argument("--t-start", dest="t_start", type=float)
    p.add_argument("--t-stop", dest="t_stop", type=float)
    p.add_argument("--t-step", dest="t_step", type=float)
    p.add_argument("--coarse-step", dest="coarse_step", type=float)
    p.add_argument("--no-warm-start", dest="warm_start", action="store_const", const=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", help="standard-decomposition times and speed-ups")
    p.add_argument("result", nargs="?", help="pulse-sequence file whose T is taken as tau*")
    p.add_argument("--family", choices=["qft", "cn_not"])
    p.add_argument("--topology", choices=["chain", "complete"])
    p.add_argument("--n", type=int)
    p.add_argument("--tau", type=float)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("verify", help="re-simulate a pulse-sequence file")
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("selftest", help="run the numerical invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"timeopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
