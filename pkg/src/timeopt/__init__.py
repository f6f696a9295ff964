"""Time-optimal synthesis of quantum gates on Ising-coupled qubit networks."""

__version__ = "0.1.0"

from .gates import TargetGate, cn_not, named_gate, phase_family, qft, trilinear_zzz, baseline_time
from .grape import OptimizationConfig, OptimizationResult, PulseSequence, optimize
from .spin import CouplingGraph, SpinSystem, make_topology

__all__ = [
    "CouplingGraph",
    "OptimizationConfig",
    "OptimizationResult",
    "PulseSequence",
    "SpinSystem",
    "TargetGate",
    "baseline_time",
    "cn_not",
    "make_topology",
    "named_gate",
    "optimize",
    "phase_family",
    "qft",
    "trilinear_zzz",
]
