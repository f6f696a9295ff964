"""Numerical self-checks run by ``timeopt selftest``.

Each check returns ``(name, passed, detail)``.
"""

from __future__ import annotations

import numpy as np

from .gates import phase_family, qft
from .grape import PulseSequence, fidelity_psu, fidelity_su, forward_propagate, gradient_psu, gradient_su
from .linalg import SZ, expm_i, kron, random_hermitian, random_unitary
from .spin import SpinSystem, make_topology


def finite_difference(f, u: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` over every entry of ``u``."""
    g = np.zeros_like(u)
    for idx in np.ndindex(u.shape):
        up = u.copy()
        dn = u.copy()
        up[idx] += eps
        dn[idx] -= eps
        g[idx] = (f(up) - f(dn)) / (2 * eps)
    return g


def random_problem(rng, n: int, M: int, T: float = 1.0, scale: float = 3.0):
    kind = "chain" if n < 3 else str(rng.choice(["chain", "complete"]))
    system = SpinSystem(make_topology(kind, n, 1.0))
    seq = PulseSequence.uniform(T, rng.uniform(-scale, scale, size=(M, 2 * n)))
    target = random_unitary(2**n, rng)
    return system, seq, target


def gradient_error(system, seq, target, kind: str, eps: float = 1e-6) -> float:
    """Relative max-norm error of the analytic gradient against central differences."""
    if kind == "psu":
        analytic = gradient_psu(seq, system, target)

        def f(u):
            return fidelity_psu(forward_propagate(seq.with_amplitudes(u), system)[-1], target)

    else:
        analytic = gradient_su(seq, system, target, 0.0)

        def f(u):
            return fidelity_su(forward_propagate(seq.with_amplitudes(u), system)[-1], target, 0.0)

    numeric = finite_difference(f, np.array(seq.amplitudes), eps)
    return float(np.abs(analytic - numeric).max() / max(np.abs(numeric).max(), 1e-12))


def check_gradients(samples: int = 10, seed: int = 0, tol: float = 1e-6):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(samples):
        n = (1, 2, 3)[i % 3]
        M = (1, 5, 20)[(i // 3) % 3]
        system, seq, target = random_problem(rng, n, M)
        for kind in ("su", "psu"):
            worst = max(worst, gradient_error(system, seq, target, kind))
    return "gradient vs finite differences", worst <= tol, f"max rel. error {worst:.2e} (tol {tol:g})"


def check_unitarity(samples: int = 200, seed: int = 1, tol: float = 1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(samples):
        N = 2 ** (1 + i % 4)
        U = expm_i(random_hermitian(N, rng), rng.uniform(0, 10))
        worst = max(worst, np.abs(U.conj().T @ U - np.eye(N)).max())
    return "expm_i unitarity", worst <= tol, f"max |U^dag U - 1| {worst:.2e}"


def check_zz_phase_identity(tol: float = 1e-12):
    lhs = expm_i(kron(SZ, SZ), np.pi / 2)
    local = kron(SZ, np.eye(2)) + kron(np.eye(2), SZ)
    rhs = np.exp(1j * np.pi / 2) * expm_i(local, np.pi / 2)
    err = np.abs(lhs - rhs).max()
    return "ZZ global-phase identity", err <= tol, f"max deviation {err:.2e}"


def check_doubled_system(samples: int = 100, seed: int = 2, tol: float = 1e-10):
    """``|tr(W^dag U)|^2`` equals ``Re tr`` on the doubled system ``U^* (x) U``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for N in (2, 4, 8):
        for _ in range(samples):
            U, W = random_unitary(N, rng), random_unitary(N, rng)
            phi2 = abs(np.trace(W.conj().T @ U)) ** 2
            phi1_doubled = np.trace(np.kron(W.conj(), W).conj().T @ np.kron(U.conj(), U)).real
            worst = max(worst, abs(phi2 - phi1_doubled))
    return "projective trace on doubled system", worst <= tol, f"max deviation {worst:.2e}"


def check_qft_phase(tol: float = 1e-10):
    phi0 = phase_family(qft(3)).phi0
    err = abs(phi0 - np.pi / 16)
    return "qft(3) smallest global phase = pi/16", err <= tol, f"phi0 = {phi0 / np.pi:.12f} pi"


def check_propagator_unitarity(seed: int = 3, tol: float = 1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in (1, 2, 3):
        system, seq, _ = random_problem(rng, n, 20, scale=50.0)
        Us = forward_propagate(seq, system)
        worst = max(worst, max(np.abs(U.conj().T @ U - np.eye(2**n)).max() for U in Us))
    return "forward propagators unitary", worst <= tol, f"max |U^dag U - 1| {worst:.2e}"


ALL_CHECKS = (
    check_gradients,
    check_unitarity,
    check_propagator_unitarity,
    check_zz_phase_identity,
    check_doubled_system,
    check_qft_phase,
)


def run_all():
    return [check() for check in ALL_CHECKS]
