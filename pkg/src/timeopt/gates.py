"""Target gates, their global-phase families and standard-circuit baseline times."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .linalg import PAULI, SZ, embed, is_unitary, kron

PROJECTIVE = "projective"


@dataclass(frozen=True)
class TargetGate:
    """A named ``N x N`` unitary target.

    ``phase`` is the global phase ``phi`` of the special-unitary representative
    ``e^{i phi} matrix`` chased by the fixed-phase functional, or ``None`` when
    the gate is meant to be reached projectively.
    """

    name: str
    n: int
    matrix: np.ndarray = field(repr=False, compare=False)
    phase: float | None = 0.0
    params: tuple = ()

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2**self.n, 2**self.n):
            raise ValueError(f"{self.name}: matrix shape {m.shape} does not fit n={self.n}")
        if not is_unitary(m, atol=1e-12):
            raise ValueError(f"{self.name}: matrix is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return 2**self.n

    @property
    def phase_mode(self) -> str:
        return PROJECTIVE if self.phase is None else f"fixed_phase({self.phase!r})"

    def with_phase(self, phase: float | None) -> "TargetGate":
        return TargetGate(self.name, self.n, self.matrix, phase, self.params)

    def spec(self) -> str:
        """Round-trippable text form accepted by :func:`parse_gate`."""
        if not self.params:
            return self.name
        return f"{self.name}:" + ",".join(p if isinstance(p, str) else repr(p) for p in self.params)


def qft(n: int) -> TargetGate:
    """Quantum Fourier transform on ``n`` qubits as a plain DFT matrix.

    Entries are ``exp(-2 pi i j k / N) / sqrt(N)``; no output bit reversal.
    """
    if n < 1:
        raise ValueError("qft needs n >= 1")
    N = 2**n
    jk = np.outer(np.arange(N), np.arange(N)) % N
    return TargetGate("qft", n, np.exp(-2j * np.pi * jk / N) / np.sqrt(N))


def cn_not(n: int) -> TargetGate:
    """NOT on the last qubit controlled by all others (CNOT for n=2, Toffoli for n=3)."""
    if n < 2:
        raise ValueError("cn_not needs n >= 2")
    N = 2**n
    perm = np.arange(N)
    perm[[N - 2, N - 1]] = [N - 1, N - 2]
    return TargetGate("cn_not", n, np.eye(N, dtype=complex)[perm])


H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]
CNOT = np.eye(4, dtype=complex)[[0, 1, 3, 2]]


def _check_distinct(n, *qubits):
    if len(set(qubits)) != len(qubits) or any(q < 0 or q >= n for q in qubits):
        raise ValueError(f"invalid qubit indices {qubits} for n={n}")


def swap(l: int, m: int, n: int) -> TargetGate:
    _check_distinct(n, l, m)
    return TargetGate("swap", n, embed(SWAP, [l, m], n), params=(l, m))


def hadamard(l: int, n: int) -> TargetGate:
    _check_distinct(n, l)
    return TargetGate("hadamard", n, embed(H, [l], n), params=(l,))


def controlled_phase(theta: float, l: int, m: int, n: int) -> TargetGate:
    _check_distinct(n, l, m)
    cp = np.diag([1, 1, 1, np.exp(1j * theta)])
    return TargetGate("cphase", n, embed(cp, [l, m], n), params=(float(theta), l, m))


def cnot(l: int, m: int, n: int) -> TargetGate:
    """CNOT with control ``l`` and target ``m``."""
    _check_distinct(n, l, m)
    return TargetGate("cnot", n, embed(CNOT, [l, m], n), params=(l, m))


def trilinear_zzz(t: float, J: float = 1.0) -> TargetGate:
    """Three-body propagator ``exp(-i pi J t (1/2) Z Z Z)`` on three qubits."""
    zzz = np.diag(kron(SZ, SZ, SZ)).real
    return TargetGate("zzz", 3, np.diag(np.exp(-1j * np.pi * J * t * 0.5 * zzz)), params=(float(t), float(J)))


def named_gate(name: str, n: int, *args) -> TargetGate:
    builders = {
        "swap": swap,
        "hadamard": hadamard,
        "cphase": controlled_phase,
        "controlled_phase": controlled_phase,
        "cnot": cnot,
    }
    if name not in builders:
        raise ValueError(f"unknown gate {name!r}")
    return builders[name](*args, n=n)


def local_rotation(axis: str, angle: float, qubit: int, n: int) -> TargetGate:
    """``exp(-i angle sigma_axis / 2)`` on one qubit."""
    _check_distinct(n, qubit)
    s = PAULI[axis]
    R = np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * s
    return TargetGate("rot", n, embed(R, [qubit], n), params=(axis, float(angle), qubit))


def identity(n: int) -> TargetGate:
    return TargetGate("identity", n, np.eye(2**n, dtype=complex))


def parse_angle(text: str) -> float:
    """Parse a float or a multiple of pi such as ``pi/16``, ``3pi/4``, ``-0.5*pi``."""
    s = text.strip().replace(" ", "")
    m = re.fullmatch(r"([-+]?)([0-9.]*)\*?pi(?:/([0-9.]+))?", s)
    if m:
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = float(m.group(2)) if m.group(2) else 1.0
        den = float(m.group(3)) if m.group(3) else 1.0
        return sign * coef * np.pi / den
    return float(s)


def parse_gate(text: str, n: int) -> TargetGate:
    """Build a gate from text such as ``qft``, ``cn_not``, ``toffoli``, ``swap:0,1``,
    ``cphase:pi/2,0,1``, ``zzz:0.5``, ``identity``.
    """
    name, _, rest = text.strip().partition(":")
    args = [a for a in rest.split(",") if a.strip()] if rest else []
    name = name.lower()
    if name == "qft":
        return qft(n)
    if name in ("cn_not", "cnnot", "cnot_all"):
        return cn_not(n)
    if name == "toffoli":
        if n != 3:
            raise ValueError("toffoli needs n = 3")
        return cn_not(3)
    if name == "identity":
        return identity(n)
    if name == "zzz":
        if n != 3:
            raise ValueError("zzz needs n = 3")
        return trilinear_zzz(*(parse_angle(a) for a in args))
    if name == "rot":
        axis, angle, q = args
        return local_rotation(axis.strip(), parse_angle(angle), int(q), n)
    if name in ("cphase", "controlled_phase"):
        theta, l, m = args
        return controlled_phase(parse_angle(theta), int(l), int(m), n)
    if name == "cnot" and not args:
        return cnot(0, 1, n)
    return named_gate(name, n, *(int(a) for a in args))


@dataclass(frozen=True)
class PhaseFamily:
    phi0: float
    phases: tuple[float, ...]


def phase_family(gate: TargetGate | np.ndarray) -> PhaseFamily:
    """Global phases ``phi`` with ``det(e^{i phi} U) = 1``.

    ``phi0`` is the smallest non-negative one; the rest follow in steps of
    ``2 pi / N``.
    """
    U = gate.matrix if isinstance(gate, TargetGate) else np.asarray(gate)
    N = U.shape[0]
    # e^{i N phi} det U = 1  =>  N phi = -arg det U (mod 2 pi)
    a = (-np.angle(np.linalg.det(U))) % (2 * np.pi)
    if 2 * np.pi - a < 1e-9:
        a = 0.0
    phi0 = float(a / N)
    return PhaseFamily(phi0, tuple(float(phi0 + 2 * np.pi * p / N) for p in range(N)))


# Standard-circuit times in units of 1/J, stored verbatim.
BASELINES: dict[tuple[str, str], dict[int, float]] = {
    ("qft", "saito_Ln"): {2: 1.75, 3: 8.13, 4: 17.56, 5: 30.03, 6: 45.52},
    ("qft", "blais_Ln"): {2: 1.75, 3: 5.13, 4: 8.50, 5: 11.88, 6: 15.25},
    ("qft", "blais_special5"): {5: 8.81},
    ("cn_not", "barenco_Kn"): {2: 0.5, 3: 3.0, 4: 7.0, 5: 15.0, 6: 31.0},
}

# Shortest optimal-control times and printed speed-ups of the reference tables.
REPORTED_BEST: dict[tuple[str, str], dict[int, float]] = {
    ("qft", "chain"): {2: 1.25, 3: 2.05, 4: 3.15, 5: 4.44, 6: 5.43},
    ("cn_not", "complete"): {2: 0.50, 3: 1.01, 4: 1.90, 5: 3.37, 6: 4.59},
}
REPORTED_SPEEDUPS: dict[tuple[str, str], dict[int, float]] = {
    ("qft", "saito_Ln"): {2: 1.40, 3: 3.94, 4: 5.58, 5: 6.77, 6: 8.38},
    ("qft", "blais_Ln"): {2: 1.40, 3: 2.50, 4: 2.70, 5: 2.67, 6: 2.81},
    ("qft", "blais_special5"): {5: 1.98},
    ("cn_not", "barenco_Kn"): {2: 1.00, 3: 2.97, 4: 3.68, 5: 4.45, 6: 6.75},
}

SOURCES_FOR = {
    ("qft", "chain"): ("saito_Ln", "blais_Ln", "blais_special5"),
    ("qft", "complete"): ("formula_Kn",),
    ("cn_not", "complete"): ("barenco_Kn",),
}


class NoBaseline(KeyError):
    pass


def baseline_time(family: str, source: str, n: int) -> float:
    """Standard-decomposition time for ``family`` on ``n`` qubits, in 1/J.

    ``formula_Kn`` evaluates the complete-graph QFT time ``(n + 3) / 4``;
    every other source is a table lookup. Missing entries raise
    :class:`NoBaseline` rather than extrapolating.
    """
    if source == "formula_Kn":
        if family != "qft" or n < 1:
            raise NoBaseline(f"no baseline for ({family}, {source}, {n})")
        return (n + 3) / 4
    try:
        return BASELINES[(family, source)][n]
    except KeyError:
        raise NoBaseline(f"no baseline for ({family}, {source}, {n})") from None
