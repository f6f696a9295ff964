"""Dense complex linear algebra for small qubit registers.

All operators are square numpy arrays of dimension ``N = 2**n``. Qubit 0 is
the most significant bit of a computational-basis index (big-endian), so
``embed(Z, [0], 2) == diag(1, 1, -1, -1)``.

Matrix exponentials of Hermitian generators go through an eigendecomposition
``H = V diag(w) V^dagger``; the same spectral data gives the directional
(Frechet) derivative via the divided-difference kernel.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"x": SX, "y": SY, "z": SZ}


def kron(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more matrices, left factor most significant."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    return reduce(np.kron, (np.asarray(op, dtype=complex) for op in ops))


def embed(op: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Place ``op`` on the listed qubits of an ``n``-qubit register.

    ``qubits[0]`` receives the most significant tensor factor of ``op``.
    The remaining qubits carry the identity.
    """
    op = np.asarray(op, dtype=complex)
    qubits = [int(q) for q in qubits]
    k = len(qubits)
    if len(set(qubits)) != k:
        raise ValueError(f"duplicate qubit index in {qubits}")
    if any(q < 0 or q >= n for q in qubits):
        raise ValueError(f"qubit index out of range for n={n}: {qubits}")
    if op.shape != (2**k, 2**k):
        raise ValueError(f"operator shape {op.shape} does not match {k} qubit(s)")

    rest = [q for q in range(n) if q not in qubits]
    full = np.kron(op, np.eye(2 ** (n - k), dtype=complex))
    # full acts on the ordering (qubits..., rest...); permute tensor axes back.
    order = qubits + rest
    perm = np.argsort(order)
    t = full.reshape([2] * (2 * n))
    t = t.transpose(list(perm) + [n + p for p in perm])
    return t.reshape(2**n, 2**n)


def is_hermitian(H: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    H = np.asarray(H)
    scale = max(np.abs(H).max(initial=0.0), 1.0)
    return bool(np.abs(H - H.conj().swapaxes(-1, -2)).max(initial=0.0) <= rtol * scale)


def is_unitary(U: np.ndarray, atol: float = 1e-10) -> bool:
    U = np.asarray(U)
    eye = np.eye(U.shape[-1])
    return bool(np.abs(U.conj().swapaxes(-1, -2) @ U - eye).max() <= atol)


def _check_hermitian(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise ValueError(f"expected square matrix, got shape {H.shape}")
    if not is_hermitian(H):
        raise ValueError("generator is not Hermitian within tolerance")
    return H


def eigh(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral decomposition of a (stack of) Hermitian matrices."""
    H = _check_hermitian(H)
    # Symmetrize so eigh sees an exactly Hermitian input.
    return np.linalg.eigh(0.5 * (H + H.conj().swapaxes(-1, -2)))


def expm_from_eigh(w: np.ndarray, V: np.ndarray, t) -> np.ndarray:
    """``exp(-i H t)`` from eigenpairs; broadcasts over leading axes."""
    t = np.asarray(t, dtype=float)[..., None]
    phases = np.exp(-1j * w * t)
    return (V * phases[..., None, :]) @ V.conj().swapaxes(-1, -2)


def expm_i(H: np.ndarray, t: float) -> np.ndarray:
    """Unitary propagator ``exp(-i H t)`` for Hermitian ``H``.

    Raises
    ------
    ValueError
        If ``H`` is not Hermitian to relative tolerance 1e-12.
    """
    w, V = eigh(H)
    return expm_from_eigh(w, V, t)


def divided_difference_kernel(w: np.ndarray, t) -> np.ndarray:
    """Kernel ``G[a, b]`` of the derivative of ``exp(-i w t)`` on eigenvalues.

    For ``w_a != w_b`` this is ``(e^{-i w_a t} - e^{-i w_b t}) / (w_a - w_b)``,
    and ``-i t e^{-i w_a t}`` on the diagonal. It is evaluated as
    ``-i t e^{-i m t} sinc(d t / 2)`` with ``m`` the mean and ``d`` the gap of
    the two eigenvalues, which is the same function without the cancellation
    that the plain quotient suffers for near-degenerate pairs.
    """
    w = np.asarray(w, dtype=float)
    t = np.asarray(t, dtype=float)[..., None, None]
    wa = w[..., :, None]
    wb = w[..., None, :]
    mean = 0.5 * (wa + wb)
    half_gap = 0.5 * (wa - wb) * t
    # np.sinc(x) = sin(pi x) / (pi x)
    return -1j * t * np.exp(-1j * mean * t) * np.sinc(half_gap / np.pi)


def dexpm_i(H: np.ndarray, V: np.ndarray, t: float) -> np.ndarray:
    """Directional derivative ``d/du exp(-i (H + u V) t)`` at ``u = 0``."""
    H = _check_hermitian(H)
    Vd = _check_hermitian(V)
    w, Q = eigh(H)
    G = divided_difference_kernel(w, t)
    Qh = Q.conj().T
    return Q @ (G * (Qh @ Vd @ Q)) @ Qh


def trace_inner(A: np.ndarray, B: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product ``tr(A^dagger B)``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return complex(np.vdot(A, B))


def random_unitary(N: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    Z = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def random_hermitian(N: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return scale * 0.5 * (A + A.conj().T)
