"""Ising-coupled qubit networks: coupling graphs, drift and local controls."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .linalg import PAULI, embed

TOPOLOGIES = ("chain", "complete", "cycle", "star", "custom")

# Default control bound, in rad per unit time when times are measured in 1/J.
DEFAULT_UMAX = 50 * 2 * np.pi


@dataclass(frozen=True)
class CouplingGraph:
    """Weighted undirected coupling graph on ``n`` qubits.

    ``edges`` holds ``(l, m, J)`` triples with ``l < m``, sorted.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]
    kind: str = "custom"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one qubit")
        seen = set()
        norm = []
        for l, m, J in self.edges:
            l, m = int(l), int(m)
            if l == m:
                raise ValueError(f"self-loop on qubit {l}")
            if not (0 <= l < self.n and 0 <= m < self.n):
                raise ValueError(f"edge ({l}, {m}) out of range for n={self.n}")
            key = (min(l, m), max(l, m))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append((key[0], key[1], float(J)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if not self.is_connected():
            raise ValueError(f"coupling graph is disconnected: {self.edges}")

    def is_connected(self) -> bool:
        adj = {q: set() for q in range(self.n)}
        for l, m, _ in self.edges:
            adj[l].add(m)
            adj[m].add(l)
        seen = {0}
        stack = [0]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.n

    @property
    def j_ref(self) -> float:
        """Reference coupling: the common value for uniform graphs, else the max |J|."""
        if not self.edges:
            return 1.0
        return max(abs(J) for _, _, J in self.edges)

    def relabel(self, perm: Sequence[int]) -> "CouplingGraph":
        """Graph with vertex ``q`` renamed to ``perm[q]``."""
        edges = [(perm[l], perm[m], J) for l, m, J in self.edges]
        return CouplingGraph(self.n, tuple(edges), "custom")


def make_topology(kind: str, n: int, J: float | Iterable = 1.0) -> CouplingGraph:
    """Build a named coupling topology.

    ``J`` is either a scalar (uniform coupling) or, for ``custom``, a list of
    ``(l, m, J_lm)`` triples. For the named kinds a list of per-edge values in
    canonical edge order is also accepted.
    """
    if kind not in TOPOLOGIES:
        raise ValueError(f"unknown topology {kind!r}; choose from {TOPOLOGIES}")
    if n < 1:
        raise ValueError("n must be >= 1")

    if kind == "custom":
        if np.isscalar(J):
            raise ValueError("custom topology needs an explicit (l, m, J) edge list")
        return CouplingGraph(n, tuple(tuple(e) for e in J), "custom")

    if kind == "chain":
        pairs = [(q, q + 1) for q in range(n - 1)]
    elif kind == "complete":
        pairs = list(combinations(range(n), 2))
    elif kind == "cycle":
        pairs = [(q, q + 1) for q in range(n - 1)]
        if n > 2:
            pairs.append((0, n - 1))
    else:
        pairs = [(0, m) for m in range(1, n)]

    if np.isscalar(J):
        values = [float(J)] * len(pairs)
    else:
        values = [float(v) for v in J]
        if len(values) != len(pairs):
            raise ValueError(f"{kind} on {n} qubits has {len(pairs)} edges, got {len(values)} couplings")
    return CouplingGraph(n, tuple((l, m, v) for (l, m), v in zip(pairs, values)), kind)


def zz_diagonal(n: int, l: int, m: int) -> np.ndarray:
    """Diagonal of sigma_z(l) sigma_z(m) as a real vector, big-endian basis."""
    idx = np.arange(2**n)
    bl = (idx >> (n - 1 - l)) & 1
    bm = (idx >> (n - 1 - m)) & 1
    return 1.0 - 2.0 * (bl ^ bm)


def drift_hamiltonian(graph: CouplingGraph) -> np.ndarray:
    """Weak-coupling Ising drift ``pi * sum J_lm (1/2) Z_l Z_m``."""
    n = graph.n
    diag = np.zeros(2**n)
    for l, m, J in graph.edges:
        diag += np.pi * J * 0.5 * zz_diagonal(n, l, m)
    return np.diag(diag).astype(complex)


def control_hamiltonians(n: int) -> np.ndarray:
    """Local controls ``(1/2) sigma_x``, ``(1/2) sigma_y`` on every qubit.

    Returned as a ``(2n, N, N)`` stack ordered q0x, q0y, q1x, q1y, ...
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ops = [0.5 * embed(PAULI[ax], [q], n) for q in range(n) for ax in ("x", "y")]
    return np.stack(ops)


def control_labels(n: int) -> list[str]:
    return [f"q{q}{ax}" for q in range(n) for ax in ("x", "y")]


@dataclass(frozen=True)
class SpinSystem:
    """Coupling graph plus its drift, local controls and amplitude bound."""

    graph: CouplingGraph
    amplitude_bound: float = DEFAULT_UMAX
    drift: np.ndarray = field(init=False, repr=False, compare=False)
    controls: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.amplitude_bound > 0:
            raise ValueError("amplitude bound must be positive")
        drift = drift_hamiltonian(self.graph)
        controls = control_hamiltonians(self.graph.n)
        drift.setflags(write=False)
        controls.setflags(write=False)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "controls", controls)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def dim(self) -> int:
        return 2**self.graph.n

    @property
    def n_controls(self) -> int:
        return 2 * self.graph.n

    @property
    def labels(self) -> list[str]:
        return control_labels(self.graph.n)

    def hamiltonians(self, amplitudes: np.ndarray) -> np.ndarray:
        """Slice Hamiltonians ``H_d + sum_j u_j H_j`` for a ``(M, 2n)`` amplitude array."""
        u = np.asarray(amplitudes, dtype=float)
        return self.drift + np.tensordot(u, self.controls, axes=([-1], [0]))


def lie_closure_dimension(generators: Sequence[np.ndarray], tol: float = 1e-9, max_depth: int = 50) -> int:
    """Real dimension of the Lie algebra generated by ``-i H`` for Hermitian ``H``.

    Brackets are taken between the current basis and every newly added
    element until no new direction appears.
    """
    basis: list[np.ndarray] = []  # orthonormal real vectors
    mats: list[np.ndarray] = []

    def add(A: np.ndarray) -> bool:
        v = np.concatenate([A.real.ravel(), A.imag.ravel()])
        for b in basis:
            v = v - (b @ v) * b
        norm = np.linalg.norm(v)
        if norm < tol:
            return False
        basis.append(v / norm)
        mats.append(A / norm)
        return True

    for H in generators:
        add(-1j * np.asarray(H, dtype=complex))
    frontier = list(mats)
    for _ in range(max_depth):
        new = []
        for A in frontier:
            for B in list(mats):
                C = A @ B - B @ A
                if add(C):
                    new.append(mats[-1])
        if not new:
            break
        frontier = new
    return len(basis)
