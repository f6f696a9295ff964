"""Gradient-flow optimal control of piecewise-constant pulse sequences.

One iteration propagates the slice unitaries forward from the identity and
the adjoint backward from ``lambda(T) = -U_G``, forms the exact gradient of
the chosen trace functional with respect to every slice amplitude, and takes
a projected ascent step with backtracking.

Two functionals are available:

``su``
    ``Re tr(W^dagger U(T)) / N`` with ``W = e^{i phi} U_G`` the special-unitary
    representative of the gate for a fixed global phase ``phi``.
``psu``
    ``|tr(U_G^dagger U(T))|^2 / N^2``, blind to the global phase. Its gradient
    is assembled from two single-system traces, never from ``U^* (x) U``.

The reported trace fidelity is ``Re tr(W^dagger U) / N`` for ``su`` and
``|tr(U_G^dagger U)| / N`` for ``psu``.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .gates import TargetGate, phase_family, parse_angle
from .linalg import divided_difference_kernel, expm_from_eigh
from .spin import SpinSystem

log = logging.getLogger(__name__)

SU = "su"
PSU = "psu"


@dataclass(frozen=True)
class PulseSequence:
    """Piecewise-constant controls: ``M`` slices of ``2n`` amplitudes each."""

    durations: np.ndarray
    amplitudes: np.ndarray
    T: float | None = None

    def __post_init__(self):
        d = np.array(self.durations, dtype=float).reshape(-1)
        a = np.array(self.amplitudes, dtype=float)
        if a.ndim != 2 or a.shape[0] != d.shape[0]:
            raise ValueError(f"amplitudes shape {a.shape} does not match {d.shape[0]} slices")
        if np.any(d < 0) or not np.all(np.isfinite(d)) or not np.all(np.isfinite(a)):
            raise ValueError("durations must be finite and non-negative, amplitudes finite")
        total = float(d.sum())
        if self.T is not None and not math.isclose(self.T, total, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"durations sum to {total}, not T={self.T}")
        d.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "durations", d)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "T", total if self.T is None else float(self.T))

    @classmethod
    def uniform(cls, T: float, amplitudes: np.ndarray) -> "PulseSequence":
        a = np.asarray(amplitudes, dtype=float)
        M = a.shape[0]
        return cls(np.full(M, T / M), a, T)

    @property
    def M(self) -> int:
        return self.durations.shape[0]

    @property
    def n_controls(self) -> int:
        return self.amplitudes.shape[1]

    def rescaled(self, T: float) -> "PulseSequence":
        """Same amplitudes with every slice stretched to total duration ``T``."""
        return PulseSequence(self.durations * (T / self.T), self.amplitudes, T)

    def with_amplitudes(self, amplitudes: np.ndarray) -> "PulseSequence":
        return PulseSequence(self.durations, amplitudes, self.T)

    def check_bound(self, bound: float) -> bool:
        return bool(np.abs(self.amplitudes).max(initial=0.0) <= bound * (1 + 1e-12))


def default_slices(T: float, j_ref: float = 1.0) -> int:
    return max(20, math.ceil(40 * T * j_ref))


def resolve_functional(functional: str, gate: TargetGate) -> tuple[str, float | None]:
    """Turn ``psu``, ``su``, ``su:auto``, ``su:p<k>`` or ``su:<angle>`` into ``(kind, phase)``.

    Bare ``su`` takes the gate's own fixed phase (0 unless set). ``su:auto`` is
    the smallest admissible phase ``phi0``; ``su:p<k>`` the ``k``-th member of
    the phase family.
    """
    kind, _, arg = functional.strip().lower().partition(":")
    if kind == PSU:
        if arg:
            raise ValueError("psu takes no phase argument")
        return PSU, None
    if kind != SU:
        raise ValueError(f"unknown functional {functional!r}")
    if not arg:
        return SU, float(gate.phase or 0.0)
    if arg == "auto":
        return SU, phase_family(gate).phi0
    if arg.startswith("p") and arg[1:].isdigit():
        phases = phase_family(gate).phases
        k = int(arg[1:])
        if k >= len(phases):
            raise ValueError(f"phase index {k} out of range for N={len(phases)}")
        return SU, phases[k]
    return SU, parse_angle(arg)


def functional_label(kind: str, phase: float | None) -> str:
    return PSU if kind == PSU else f"su:{float(phase)!r}"


# ---------------------------------------------------------------------------
# propagation


def _target_matrix(gate: TargetGate | np.ndarray, phase: float | None) -> np.ndarray:
    U = gate.matrix if isinstance(gate, TargetGate) else np.asarray(gate, dtype=complex)
    if phase:
        return np.exp(1j * phase) * U
    return U


def _slice_spectra(seq: PulseSequence, system: SpinSystem):
    H = system.hamiltonians(seq.amplitudes)
    w, V = np.linalg.eigh(H)
    U = expm_from_eigh(w, V, seq.durations)
    return w, V, U


def _cumulative(steps: np.ndarray) -> np.ndarray:
    M, N, _ = steps.shape
    out = np.empty((M + 1, N, N), dtype=complex)
    out[0] = np.eye(N)
    for k in range(M):
        out[k + 1] = steps[k] @ out[k]
    return out


def forward_propagate(seq: PulseSequence, system: SpinSystem) -> np.ndarray:
    """``U(t_0) = 1, U(t_1), ..., U(t_M)`` as an ``(M + 1, N, N)`` array."""
    _, _, steps = _slice_spectra(seq, system)
    return _cumulative(steps)


def final_unitary(seq: PulseSequence, system: SpinSystem) -> np.ndarray:
    return forward_propagate(seq, system)[-1]


def backward_propagate(seq: PulseSequence, system: SpinSystem, target) -> np.ndarray:
    """Adjoint ``lambda(t_0), ..., lambda(t_M)`` with ``lambda(T) = -U_G``.

    ``target`` is a :class:`TargetGate` (its matrix is used as is) or a bare
    matrix; ``lambda(t_{k-1}) = U_k^dagger lambda(t_k)``.
    """
    W = _target_matrix(target, None)
    _, _, steps = _slice_spectra(seq, system)
    M = seq.M
    lam = np.empty((M + 1,) + W.shape, dtype=complex)
    lam[M] = -W
    for k in range(M, 0, -1):
        lam[k - 1] = steps[k - 1].conj().T @ lam[k]
    return lam


# ---------------------------------------------------------------------------
# functionals


def fidelity_su(U: np.ndarray, target, phase: float | None = None) -> float:
    """``Re tr(W^dagger U) / N`` with ``W = e^{i phase} U_G``.

    With ``phase=None`` a :class:`TargetGate` contributes its own fixed phase.
    """
    if phase is None and isinstance(target, TargetGate):
        phase = target.phase
    W = _target_matrix(target, phase)
    return float(np.vdot(W, U).real / W.shape[0])


def fidelity_psu(U: np.ndarray, target) -> float:
    """``|tr(U_G^dagger U)|^2 / N^2``; its square root is the trace fidelity."""
    W = _target_matrix(target, None)
    return float(abs(np.vdot(W, U)) ** 2 / W.shape[0] ** 2)


def trace_fidelity(U: np.ndarray, target, kind: str, phase: float | None = None) -> float:
    if kind == PSU:
        return math.sqrt(fidelity_psu(U, target))
    return fidelity_su(U, target, 0.0 if phase is None else phase)


class _Evaluation:
    """Forward pass for one amplitude array; the gradient is computed on demand."""

    __slots__ = ("seq", "w", "V", "steps", "fwd", "overlap", "value")

    def __init__(self, seq: PulseSequence, system: SpinSystem, W: np.ndarray, kind: str):
        self.seq = seq
        self.w, self.V, self.steps = _slice_spectra(seq, system)
        self.fwd = _cumulative(self.steps)
        N = W.shape[0]
        self.overlap = np.vdot(W, self.fwd[-1])
        if kind == PSU:
            self.value = float(abs(self.overlap) ** 2 / N**2)
        else:
            self.value = float(self.overlap.real / N)

    def gradient(self, system: SpinSystem, W: np.ndarray, kind: str) -> np.ndarray:
        """Exact gradient of the objective for every slice amplitude.

        With ``X_k = W^dagger U_M ... U_{k+1}`` and ``B_k = U(t_{k-1}) X_k`` the
        overlap ``g = tr(W^dagger U(T))`` changes by ``tr(B_k dU_k)`` along
        control ``j``, where ``dU_k`` is the spectral Frechet derivative of
        ``exp(-i H_k dt_k)`` in direction ``H_j``.
        """
        seq, steps, V = self.seq, self.steps, self.V
        M, N = seq.M, W.shape[0]
        X = np.empty((M, N, N), dtype=complex)
        acc = W.conj().T
        for k in range(M - 1, -1, -1):
            X[k] = acc
            acc = acc @ steps[k]
        Vh = V.conj().swapaxes(-1, -2)
        Bt = Vh @ (self.fwd[:-1] @ X) @ V
        C = Bt.swapaxes(-1, -2) * divided_difference_kernel(self.w, seq.durations)
        # sum_ab C_ab (V^dag H_j V)_ab = sum_cd (V C^T V^dag)_dc (H_j)_cd
        D = V @ C.swapaxes(-1, -2) @ Vh
        dg = D.reshape(M, N * N) @ system.controls.swapaxes(-1, -2).reshape(-1, N * N).T
        if kind == PSU:
            return 2.0 * (np.conj(self.overlap) * dg).real / N**2
        return dg.real / N


def _value_and_gradient(seq: PulseSequence, system: SpinSystem, W: np.ndarray, kind: str):
    ev = _Evaluation(seq, system, W, kind)
    return ev.value, ev.gradient(system, W, kind), ev.fwd[-1]


def gradient_su(seq: PulseSequence, system: SpinSystem, target, phase: float | None = None) -> np.ndarray:
    """Exact ``d fidelity_su / d u_j^(k)`` as an ``(M, 2n)`` array."""
    if phase is None and isinstance(target, TargetGate):
        phase = target.phase
    return _value_and_gradient(seq, system, _target_matrix(target, phase), SU)[1]


def gradient_psu(seq: PulseSequence, system: SpinSystem, target) -> np.ndarray:
    """Exact ``d fidelity_psu / d u_j^(k)`` as an ``(M, 2n)`` array."""
    return _value_and_gradient(seq, system, _target_matrix(target, None), PSU)[1]


def gradient_first_order(seq: PulseSequence, system: SpinSystem, target, kind: str, phase: float | None = None):
    """Small-slice approximation of the gradient from the adjoint trajectory.

    ``su``: ``-Im tr(lambda^dagger H_j U) dt / N``;
    ``psu``: ``2 Im(tr(lambda^dagger H_j U) conj(tr(lambda^dagger U))) dt / N^2``,
    both evaluated at the slice end ``t_k``. Converges to the exact gradient as
    the slices shrink.
    """
    W = _target_matrix(target, phase if kind == SU else None)
    if kind == SU and phase is None and isinstance(target, TargetGate):
        W = _target_matrix(target, target.phase)
    U = forward_propagate(seq, system)[1:]
    lam = backward_propagate(seq, system, W)[1:]
    N = W.shape[0]
    lam_h = lam.conj().swapaxes(-1, -2)
    a = np.einsum("kab,jbc,kca->kj", lam_h, system.controls, U)
    dt = seq.durations[:, None]
    if kind == SU:
        return -a.imag * dt / N
    b = np.einsum("kab,kba->k", lam_h, U)[:, None]
    return 2.0 * (a * np.conj(b)).imag * dt / N**2


# ---------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class OptimizationConfig:
    """Settings for :func:`optimize`.

    ``method="gradient"`` steps along the plain gradient with an adaptive
    step ``alpha`` (halved on a failed trial, doubled after a success);
    ``step_size`` is its initial value, and ``None`` sizes the first trial to
    move the largest amplitude by ``init_fraction`` of the bound.
    ``method="lbfgs"`` rescales the same gradient with a limited-memory
    curvature estimate of ``memory`` pairs and backtracks from a unit step.
    """

    functional: str = PSU
    method: str = "lbfgs"
    memory: int = 20
    max_iterations: int = 5000
    fidelity_target: float = 0.99999
    step_size: float | None = None
    backtrack: float = 0.5
    max_line_search: int = 30
    grad_tol: float = 1e-10
    seed: int = 0
    restarts: int = 1
    init_fraction: float = 0.1
    stop_on_success: bool = True
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.fidelity_target <= 1:
            raise ValueError("fidelity_target must lie in (0, 1]")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.method not in ("gradient", "lbfgs"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.restarts < 1 or self.max_iterations < 0:
            raise ValueError("need restarts >= 1 and max_iterations >= 0")


@dataclass
class OptimizationResult:
    sequence: PulseSequence
    fidelity: float
    iterations: int
    trace: list[float]
    wall_time: float
    converged: bool
    functional: str
    phase: float | None
    seed: int
    restart: int = 0
    restart_fidelities: list[float] = field(default_factory=list)
    status: str = ""

    @property
    def label(self) -> str:
        return functional_label(self.functional, self.phase)


def _two_loop(g: np.ndarray, memory) -> np.ndarray:
    """Limited-memory inverse-Hessian estimate applied to the ascent direction ``g``."""
    q = g.copy()
    coefs = []
    for s_k, y_k, rho in reversed(memory):
        a = rho * (s_k @ q)
        coefs.append(a)
        q -= a * y_k
    s_k, y_k, _ = memory[-1]
    q *= (s_k @ y_k) / (y_k @ y_k)
    for (s_k, y_k, rho), a in zip(memory, reversed(coefs)):
        b = rho * (y_k @ q)
        q += (a - b) * s_k
    return q


def _ascend(system, W, kind, seq0, config, u_max, seed, restart) -> OptimizationResult:
    """One projected ascent run from ``seq0``.

    Trial points are clipped to the amplitude box and accepted only if they
    raise the objective, so the fidelity trace never decreases.
    """
    t0 = time.perf_counter()

    def fid(value):
        return math.sqrt(max(value, 0.0)) if kind == PSU else value

    shape = seq0.amplitudes.shape
    ev = _Evaluation(seq0, system, W, kind)
    grad = ev.gradient(system, W, kind).ravel()
    trace = [fid(ev.value)]
    alpha = config.step_size
    memory: deque = deque(maxlen=config.memory)
    status = "max_iterations"
    it = 0
    while True:
        if trace[-1] >= config.fidelity_target:
            status = "target"
            break
        if it >= config.max_iterations:
            break
        x = ev.seq.amplitudes.ravel()
        # Components pinned at the box and pushing outward cannot move.
        free = ~(((x >= u_max) & (grad > 0)) | ((x <= -u_max) & (grad < 0)))
        g_free = np.where(free, grad, 0.0)
        if np.linalg.norm(g_free) < config.grad_tol:
            status = "gradient"
            break

        quasi = config.method == "lbfgs" and len(memory) > 0
        if quasi:
            d = np.where(free, _two_loop(g_free, memory), 0.0)
            if d @ g_free <= 0:
                memory.clear()
                quasi = False
        if not quasi:
            d = g_free
            if alpha is None:
                alpha = config.init_fraction * u_max / np.abs(d).max()
        step = 1.0 if quasi else alpha

        accepted = None
        for _ in range(config.max_line_search):
            amps = np.clip(x + step * d, -u_max, u_max).reshape(shape)
            cand = _Evaluation(ev.seq.with_amplitudes(amps), system, W, kind)
            if cand.value > ev.value:
                accepted = cand
                break
            step *= config.backtrack
        if accepted is None:
            if quasi:
                memory.clear()
                continue
            status = "line_search"
            break

        new_grad = accepted.gradient(system, W, kind).ravel()
        if config.method == "lbfgs":
            s_k = accepted.seq.amplitudes.ravel() - x
            y_k = grad - new_grad  # gradient change of the minimized -objective
            sy = s_k @ y_k
            if sy > 1e-12 * np.linalg.norm(s_k) * np.linalg.norm(y_k):
                memory.append((s_k, y_k, 1.0 / sy))
        if not quasi:
            alpha = step / config.backtrack
        ev, grad = accepted, new_grad
        it += 1
        trace.append(fid(ev.value))

    return OptimizationResult(
        sequence=ev.seq,
        fidelity=trace[-1],
        iterations=it,
        trace=trace,
        wall_time=time.perf_counter() - t0,
        converged=trace[-1] >= config.fidelity_target,
        functional=kind,
        phase=None,
        seed=seed,
        restart=restart,
        status=status,
    )


def _run_restart(args):
    system, W, kind, phase, seq0, config, restart, seed = args
    u_max = system.amplitude_bound
    res = _ascend(system, W, kind, seq0, config, u_max, seed, restart)
    res.phase = phase
    return res


def random_sequence(T: float, M: int, system: SpinSystem, rng: np.random.Generator, fraction: float = 0.1):
    u0 = fraction * system.amplitude_bound
    return PulseSequence.uniform(T, rng.uniform(-u0, u0, size=(M, system.n_controls)))


def _pick(results: list[OptimizationResult]) -> OptimizationResult:
    # Deterministic reduction: first converged restart, else the best fidelity.
    for r in results:
        if r.converged:
            return r
    return max(results, key=lambda r: (r.fidelity, -r.restart))


def optimize(
    system: SpinSystem,
    gate: TargetGate,
    T: float,
    M: int | None = None,
    config: OptimizationConfig | None = None,
    initial: PulseSequence | None = None,
) -> OptimizationResult:
    """Search for controls realizing ``gate`` in total time ``T``.

    Restart 0 starts from ``initial`` when given (rescaled to ``T`` if
    needed); every other restart draws amplitudes uniformly from
    ``[-f u_max, f u_max]`` with ``f = config.init_fraction``. Restart seeds
    are spawned from ``config.seed`` so results are reproducible. Failure to
    reach the target is reported through ``converged``, not an exception.
    """
    config = config or OptimizationConfig()
    if not T > 0:
        raise ValueError("total time must be positive")
    if gate.n != system.n:
        raise ValueError(f"gate acts on {gate.n} qubits, system has {system.n}")
    kind, phase = resolve_functional(config.functional, gate)
    if M is None:
        M = initial.M if initial is not None else default_slices(T, system.graph.j_ref)
    if M < 1:
        raise ValueError("need at least one slice")
    W = _target_matrix(gate, phase if kind == SU else None)

    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    jobs = []
    for r, ss in enumerate(seeds):
        if r == 0 and initial is not None:
            seq0 = initial if math.isclose(initial.T, T) else initial.rescaled(T)
            seq0 = seq0.with_amplitudes(np.clip(seq0.amplitudes, -system.amplitude_bound, system.amplitude_bound))
        else:
            seq0 = random_sequence(T, M, system, np.random.default_rng(ss), config.init_fraction)
        jobs.append((system, W, kind, phase, seq0, config, r, int(ss.generate_state(1)[0])))

    t0 = time.perf_counter()
    results: list[OptimizationResult] = []
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_restart, jobs))
    else:
        for job in jobs:
            res = _run_restart(job)
            results.append(res)
            log.debug("restart %d: F=%.8f after %d iterations (%s)", res.restart, res.fidelity, res.iterations, res.status)
            if res.converged and config.stop_on_success:
                break

    best = _pick(results)
    best = replace(
        best,
        wall_time=time.perf_counter() - t0,
        restart_fidelities=[r.fidelity for r in results],
    )
    return best


def achieved_fidelity(seq: PulseSequence, system: SpinSystem, gate: TargetGate, kind: str, phase: float | None) -> float:
    """Re-simulate ``seq`` and evaluate the trace fidelity it reaches."""
    U = final_unitary(seq, system)
    return trace_fidelity(U, gate.matrix, kind, phase)
