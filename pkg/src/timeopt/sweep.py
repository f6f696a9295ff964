"""Duration sweeps, minimal-time estimates and speed-up reports."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .gates import REPORTED_SPEEDUPS, SOURCES_FOR, NoBaseline, TargetGate, baseline_time
from .grape import OptimizationConfig, OptimizationResult, PulseSequence, default_slices, optimize
from .spin import SpinSystem

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepConfig:
    """Grid and budget for a duration sweep (times in 1/J).

    ``restarts`` counts every start per grid point, the warm start included.
    A descent stops after ``patience`` consecutive failures below the
    smallest success seen so far.
    """

    t_start: float
    t_stop: float
    t_step: float = 0.01
    coarse_step: float = 0.1
    restarts: int = 20
    warm_start: bool = True
    slices: int | None = None
    patience: int = 2
    optimization: OptimizationConfig = field(default_factory=OptimizationConfig)

    def __post_init__(self):
        if not (self.t_start > 0 and self.t_step > 0 and self.coarse_step > 0):
            raise ValueError("t_start, t_step and coarse_step must be positive")
        if self.t_stop < self.t_start:
            raise ValueError("t_stop must not be below t_start")
        if self.restarts < 1 or self.patience < 1:
            raise ValueError("restarts and patience must be >= 1")

    @property
    def fidelity_target(self) -> float:
        return self.optimization.fidelity_target


@dataclass
class SweepPoint:
    T: float
    best_F: float
    converged: bool
    restarts_used: int
    result: OptimizationResult = field(repr=False)
    flagged: bool = False

    def row(self) -> dict:
        return {
            "T": f"{self.T:.4f}",
            "best_F": repr(float(self.best_F)),
            "deficit": repr(float(1.0 - self.best_F)),
            "restarts_used": self.restarts_used,
            "converged": int(self.converged),
        }


@dataclass
class SweepResult:
    points: list[SweepPoint]
    fidelity_target: float

    def __post_init__(self):
        self.points.sort(key=lambda p: p.T)
        tau = self.tau
        for p in self.points:
            # failures above the smallest success are stochastic optimizer misses
            p.flagged = tau is not None and p.T >= tau and not p.converged

    @property
    def tau(self) -> float | None:
        """Smallest grid time reaching the fidelity target."""
        ok = [p.T for p in self.points if p.converged]
        return min(ok) if ok else None

    @property
    def best(self) -> SweepPoint:
        return max(self.points, key=lambda p: (p.best_F, -p.T))

    def at(self, T: float) -> SweepPoint:
        for p in self.points:
            if math.isclose(p.T, T, abs_tol=1e-9):
                return p
        raise KeyError(T)

    def envelope(self) -> np.ndarray:
        """Best-known fidelity up to each grid time (running max in ascending T)."""
        return np.maximum.accumulate([p.best_F for p in self.points])

    def rows(self) -> list[dict]:
        return [p.row() for p in self.points]


class MinimalTimeNotFound(RuntimeError):
    def __init__(self, message: str, sweep: SweepResult):
        super().__init__(message)
        self.sweep = sweep


def descending_grid(t_start: float, t_stop: float, step: float) -> list[float]:
    """``t_stop, t_stop - step, ...`` down to ``t_start``, on exact decimal steps."""
    n = int(math.floor((t_stop - t_start) / step + 1e-9))
    return [round(t_stop - k * step, 10) for k in range(n + 1)]


def _point_seed(seed: int, T: float) -> int:
    ss = np.random.SeedSequence([seed, int(round(T * 10000))])
    return int(ss.generate_state(1)[0])


def _run_point(system, gate, T, M, sweep: SweepConfig, warm: PulseSequence | None) -> SweepPoint:
    opt = replace(sweep.optimization, restarts=sweep.restarts, seed=_point_seed(sweep.optimization.seed, T))
    initial = warm.rescaled(T) if (warm is not None and sweep.warm_start) else None
    res = optimize(system, gate, T, M, opt, initial=initial)
    log.info("T=%.4f F=%.8f restarts=%d converged=%s", T, res.fidelity, len(res.restart_fidelities), res.converged)
    return SweepPoint(T, res.fidelity, res.converged, len(res.restart_fidelities), res)


def _descend(system, gate, grid, M, sweep, warm=None, stop_early=True) -> list[SweepPoint]:
    points: list[SweepPoint] = []
    misses = 0
    seen_success = False
    for T in grid:
        p = _run_point(system, gate, T, M, sweep, warm)
        points.append(p)
        warm = p.result.sequence
        if p.converged:
            seen_success = True
            misses = 0
        else:
            misses += 1
            if stop_early and seen_success and misses >= sweep.patience:
                break
    return points


def fidelity_curve(system: SpinSystem, gate: TargetGate, sweep: SweepConfig, grid_step: float | None = None) -> SweepResult:
    """Best fidelity at every grid time, descending from ``t_stop``.

    Each point warm-starts from the previous point's best sequence, squeezed
    to the new duration, and adds fresh random restarts. The whole grid is
    evaluated.
    """
    step = grid_step or sweep.t_step
    grid = descending_grid(sweep.t_start, sweep.t_stop, step)
    M = sweep.slices or default_slices(sweep.t_stop, system.graph.j_ref)
    return SweepResult(_descend(system, gate, grid, M, sweep, stop_early=False), sweep.fidelity_target)


def minimal_time(system: SpinSystem, gate: TargetGate, sweep: SweepConfig) -> tuple[float, SweepResult]:
    """Smallest grid time reaching the target, rounded to 0.01/J.

    A coarse descent at ``coarse_step`` brackets the crossing; the interval
    below the smallest coarse success is then refined at ``t_step``.

    Raises
    ------
    MinimalTimeNotFound
        If no grid point reaches the target; the exception carries the sweep.
    """
    M = sweep.slices or default_slices(sweep.t_stop, system.graph.j_ref)
    coarse = _descend(system, gate, descending_grid(sweep.t_start, sweep.t_stop, sweep.coarse_step), M, sweep)
    hits = [p for p in coarse if p.converged]
    if not hits:
        best = max(coarse, key=lambda p: p.best_F)
        raise MinimalTimeNotFound(
            f"no grid time reached F >= {sweep.fidelity_target}; best F={best.best_F:.8f} at T={best.T}",
            SweepResult(coarse, sweep.fidelity_target),
        )
    anchor = min(hits, key=lambda p: p.T)
    lo = max(sweep.t_start, anchor.T - sweep.coarse_step + sweep.t_step)
    fine_grid = [T for T in descending_grid(lo, anchor.T, sweep.t_step) if T < anchor.T - 1e-9]
    fine = _descend(system, gate, fine_grid, M, sweep, warm=anchor.result.sequence)
    result = SweepResult(coarse + fine, sweep.fidelity_target)
    return round(result.tau, 2), result


def speedup_report(family: str, topology: str, n: int, tau: float) -> tuple[list[dict], list[str]]:
    """Baseline-over-achieved time ratios, rounded to two decimals.

    Returns the table rows and notices for sources without a baseline.
    """
    rows, notices = [], []
    for source in SOURCES_FOR.get((family, topology), ()):
        try:
            base = baseline_time(family, source, n)
        except NoBaseline:
            notices.append(f"no {source} baseline for {family} on {topology} with n={n}")
            continue
        printed = REPORTED_SPEEDUPS.get((family, source), {}).get(n)
        rows.append(
            {
                "family": family,
                "topology": topology,
                "n": n,
                "source": source,
                "baseline": base,
                "tau": tau,
                "speedup": round(base / tau, 2),
                "reported_speedup": printed,
            }
        )
    if not rows and not notices:
        notices.append(f"no baselines known for {family} on {topology}")
    return rows, notices


def format_report(rows: list[dict], notices: list[str] = ()) -> str:
    head = f"{'qubits':>6}  {'source':<15}{'baseline [1/J]':>15}{'tau [1/J]':>11}{'speed-up':>10}{'reported':>10}"
    lines = [head, "-" * len(head)]
    for r in rows:
        rep = "" if r["reported_speedup"] is None else f"{r['reported_speedup']:.2f}"
        lines.append(
            f"{r['n']:>6}  {r['source']:<15}{r['baseline']:>15.2f}{r['tau']:>11.2f}{r['speedup']:>10.2f}{rep:>10}"
        )
    lines.extend(f"note: {m}" for m in notices)
    return "\n".join(lines)
