import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from timeopt.checks import finite_difference, gradient_error, random_problem
from timeopt.gates import cn_not, identity, phase_family, qft
from timeopt.grape import (
    OptimizationConfig,
    PulseSequence,
    achieved_fidelity,
    backward_propagate,
    default_slices,
    fidelity_psu,
    fidelity_su,
    final_unitary,
    forward_propagate,
    gradient_first_order,
    gradient_psu,
    gradient_su,
    optimize,
    resolve_functional,
    trace_fidelity,
)
from timeopt.gates import TargetGate
from timeopt.linalg import SZ, expm_i, kron, random_unitary
from timeopt.spin import SpinSystem, make_topology


@pytest.fixture
def cnot_system():
    return SpinSystem(make_topology("complete", 2))


def test_forward_matches_scipy_product(rng):
    system, seq, _ = random_problem(rng, 2, 6)
    U = np.eye(4, dtype=complex)
    Hs = system.hamiltonians(seq.amplitudes)
    for H, dt in zip(Hs, seq.durations):
        U = scipy.linalg.expm(-1j * H * dt) @ U
    Us = forward_propagate(seq, system)
    assert Us.shape == (7, 4, 4)
    np.testing.assert_array_equal(Us[0], np.eye(4))
    np.testing.assert_allclose(Us[-1], U, atol=1e-11)


def test_drift_only_evolution_is_diagonal_phase():
    system = SpinSystem(make_topology("chain", 2))
    seq = PulseSequence.uniform(1.0, np.zeros((3, 4)))
    np.testing.assert_allclose(final_unitary(seq, system), np.diag(np.exp(-1j * np.pi / 2 * np.array([1, -1, -1, 1]))), atol=1e-13)


def test_adjoint_relation(rng):
    # lambda(t_k)^dagger U(t_k) is constant along the trajectory
    system, seq, target = random_problem(rng, 2, 8)
    U = forward_propagate(seq, system)
    lam = backward_propagate(seq, system, target)
    np.testing.assert_allclose(lam[-1], -target)
    vals = [np.trace(l.conj().T @ u) for l, u in zip(lam, U)]
    np.testing.assert_allclose(vals, vals[0], atol=1e-11)


@pytest.mark.parametrize("n,M", [(1, 1), (1, 5), (2, 5), (2, 20), (3, 5)])
@pytest.mark.parametrize("kind", ["su", "psu"])
def test_gradient_matches_finite_differences(rng, n, M, kind):
    system, seq, target = random_problem(rng, n, M)
    assert gradient_error(system, seq, target, kind) <= 1e-6


def test_gradient_su_with_phase(rng):
    system, seq, target = random_problem(rng, 2, 4)
    phi = 0.37

    def f(u):
        return fidelity_su(final_unitary(seq.with_amplitudes(u), system), target, phi)

    num = finite_difference(f, np.array(seq.amplitudes))
    np.testing.assert_allclose(gradient_su(seq, system, target, phi), num, atol=1e-8)


def test_first_order_gradient_converges(rng):
    system = SpinSystem(make_topology("chain", 2))
    target = random_unitary(4, rng)
    base = rng.uniform(-2, 2, size=(4, 4))
    errs = []
    for rep in (10, 40, 160):
        seq = PulseSequence.uniform(1.0, np.repeat(base, rep // 4, axis=0))
        for kind in ("su", "psu"):
            exact = gradient_su(seq, system, target, 0.0) if kind == "su" else gradient_psu(seq, system, target)
            approx = gradient_first_order(seq, system, target, kind, 0.0)
            errs.append(np.abs(exact - approx).max() / np.abs(exact).max())
    su_err, psu_err = errs[0::2], errs[1::2]
    assert su_err[2] < su_err[0] / 4 and psu_err[2] < psu_err[0] / 4
    assert max(su_err[2], psu_err[2]) < 0.05


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * np.pi))
def test_psu_is_phase_blind(seed, phi):
    rng = np.random.default_rng(seed)
    U, W = random_unitary(4, rng), random_unitary(4, rng)
    assert fidelity_psu(np.exp(1j * phi) * U, W) == pytest.approx(fidelity_psu(U, W), abs=1e-12)


def test_su_sees_phase(rng):
    U = random_unitary(4, rng)
    assert fidelity_su(U, U, 0.0) == pytest.approx(1.0)
    assert fidelity_su(U, U, np.pi) == pytest.approx(-1.0)
    assert fidelity_su(np.exp(0.3j) * U, U, 0.3) == pytest.approx(1.0)


def test_trace_fidelity_forms(rng):
    U = random_unitary(4, rng)
    V = np.exp(0.9j) * U
    assert trace_fidelity(V, U, "psu") == pytest.approx(1.0)
    assert trace_fidelity(V, U, "su", 0.0) == pytest.approx(np.cos(0.9))


def test_resolve_functional():
    g = qft(3)
    assert resolve_functional("psu", g) == ("psu", None)
    assert resolve_functional("su", g) == ("su", 0.0)
    assert resolve_functional("su:auto", g)[1] == pytest.approx(np.pi / 16)
    assert resolve_functional("su:p1", g)[1] == pytest.approx(np.pi / 16 + np.pi / 4)
    assert resolve_functional("su:pi/2", g)[1] == pytest.approx(np.pi / 2)
    for bad in ("psu:1", "foo", "su:p8"):
        with pytest.raises(ValueError):
            resolve_functional(bad, g)


def test_pulse_sequence_validation():
    seq = PulseSequence.uniform(1.0, np.zeros((4, 2)))
    assert seq.M == 4 and seq.T == 1.0
    assert seq.rescaled(0.5).durations.sum() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        PulseSequence(np.ones(3), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        PulseSequence(-np.ones(2), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        PulseSequence(np.ones(2), np.zeros((2, 2)), T=3.0)
    with pytest.raises(ValueError):
        seq.amplitudes[0, 0] = 1.0


def test_default_slices():
    assert default_slices(0.1) == 20
    assert default_slices(2.05) == 82
    assert default_slices(1.0, j_ref=2.0) == 80


def test_optimize_cnot_reaches_target(cnot_system):
    res = optimize(cnot_system, cn_not(2), 0.6, 24, OptimizationConfig(restarts=3, seed=1))
    assert res.converged
    assert res.fidelity >= 0.99999
    assert res.sequence.check_bound(cnot_system.amplitude_bound)
    assert achieved_fidelity(res.sequence, cnot_system, cn_not(2), "psu", None) == pytest.approx(res.fidelity, abs=1e-12)


@pytest.mark.parametrize("method", ["lbfgs", "gradient"])
def test_trace_monotone(cnot_system, method):
    cfg = OptimizationConfig(method=method, max_iterations=150, restarts=2, stop_on_success=False, seed=4)
    res = optimize(cnot_system, cn_not(2), 0.45, 20, cfg)
    assert np.all(np.diff(res.trace) >= 0)
    assert len(res.trace) == res.iterations + 1


def test_seed_determinism(cnot_system):
    cfg = OptimizationConfig(max_iterations=60, restarts=2, seed=7)
    a = optimize(cnot_system, cn_not(2), 0.5, 20, cfg)
    b = optimize(cnot_system, cn_not(2), 0.5, 20, cfg)
    np.testing.assert_array_equal(a.sequence.amplitudes, b.sequence.amplitudes)
    assert a.trace == b.trace
    c = optimize(cnot_system, cn_not(2), 0.5, 20, OptimizationConfig(max_iterations=60, restarts=2, seed=8))
    assert not np.array_equal(a.sequence.amplitudes, c.sequence.amplitudes)


def test_parallel_restarts_match_sequential(cnot_system):
    base = dict(max_iterations=40, restarts=3, seed=3, stop_on_success=False)
    a = optimize(cnot_system, cn_not(2), 0.5, 20, OptimizationConfig(**base))
    b = optimize(cnot_system, cn_not(2), 0.5, 20, OptimizationConfig(workers=2, **base))
    assert a.restart == b.restart
    assert a.restart_fidelities == b.restart_fidelities
    np.testing.assert_array_equal(a.sequence.amplitudes, b.sequence.amplitudes)


def test_amplitude_bound_respected():
    system = SpinSystem(make_topology("chain", 2), amplitude_bound=5.0)
    res = optimize(system, cn_not(2), 1.0, 20, OptimizationConfig(max_iterations=100, init_fraction=1.0))
    assert np.abs(res.sequence.amplitudes).max() <= 5.0


def test_warm_start_used_as_restart_zero(cnot_system):
    first = optimize(cnot_system, cn_not(2), 0.6, 24, OptimizationConfig(seed=2))
    again = optimize(cnot_system, cn_not(2), 0.6, None, OptimizationConfig(seed=99, max_iterations=0), initial=first.sequence)
    assert again.restart == 0
    assert again.fidelity == pytest.approx(first.fidelity, abs=1e-12)


def test_su_functional_hits_requested_phase(cnot_system):
    cfg = OptimizationConfig(functional="su:auto", restarts=4, seed=5)
    res = optimize(cnot_system, cn_not(2), 0.8, 32, cfg)
    assert res.converged
    assert res.phase == pytest.approx(phase_family(cn_not(2)).phi0)
    U = final_unitary(res.sequence, cnot_system)
    W = np.exp(1j * res.phase) * cn_not(2).matrix
    assert np.abs(U - W).max() < 1e-2


def test_identity_needs_refocusing():
    system = SpinSystem(make_topology("chain", 2))
    # drift alone already suffices for a very short window
    assert optimize(system, identity(2), 0.001, 20).iterations == 0
    # a pi pulse takes pi / u_max = 0.01, so the coupling cannot be undone in time
    short = optimize(system, identity(2), 0.01, 20, OptimizationConfig(max_iterations=300))
    assert not short.converged
    assert optimize(system, identity(2), 0.3, 20, OptimizationConfig(restarts=3)).converged


def test_optimize_argument_errors(cnot_system):
    with pytest.raises(ValueError):
        optimize(cnot_system, cn_not(2), 0.0)
    with pytest.raises(ValueError):
        optimize(cnot_system, qft(3), 1.0)
    with pytest.raises(ValueError):
        OptimizationConfig(method="newton")
    with pytest.raises(ValueError):
        OptimizationConfig(fidelity_target=1.5)


def test_identity_zero_coupling_converges_immediately():
    system = SpinSystem(make_topology("chain", 1))
    res = optimize(system, identity(1), 1.0, config=OptimizationConfig(), initial=PulseSequence.uniform(1.0, np.zeros((20, 2))))
    assert res.iterations == 0 and res.converged
    assert res.fidelity == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("phi", [0.3, np.pi, 4.0])
def test_psu_phase_invariance_of_gradient_and_trace(cnot_system, phi):
    gate = cn_not(2)
    shifted = TargetGate("cn_not", 2, np.exp(1j * phi) * gate.matrix)
    rng = np.random.default_rng(0)
    seq = PulseSequence.uniform(0.5, rng.uniform(-20, 20, size=(20, 4)))
    np.testing.assert_allclose(gradient_psu(seq, cnot_system, shifted), gradient_psu(seq, cnot_system, gate), atol=1e-12)
    cfg = OptimizationConfig(max_iterations=30)
    a = optimize(cnot_system, gate, 0.5, 20, cfg)
    b = optimize(cnot_system, shifted, 0.5, 20, cfg)
    np.testing.assert_allclose(a.trace, b.trace, atol=1e-12)


def zz_gate():
    return TargetGate("zz", 2, expm_i(kron(SZ, SZ), np.pi / 2))


def test_zz_gate_local_up_to_phase_under_psu():
    # exp(-i pi/2 ZZ) equals local z rotations times a global phase
    system = SpinSystem(make_topology("complete", 2), amplitude_bound=200 * 2 * np.pi)
    cfg = dict(restarts=5, max_iterations=2000, init_fraction=1.0)
    psu = optimize(system, zz_gate(), 0.01, 20, OptimizationConfig(functional="psu", **cfg))
    su = optimize(system, zz_gate(), 0.01, 20, OptimizationConfig(functional="su", **cfg))
    assert psu.converged
    assert su.fidelity < 0.99


def test_zz_gate_fixed_phase_needs_coupling_time():
    system = SpinSystem(make_topology("complete", 2))
    cfg = dict(restarts=5, max_iterations=2000, init_fraction=1.0)
    assert optimize(system, zz_gate(), 0.05, 20, OptimizationConfig(functional="psu", **cfg)).converged
    su = optimize(system, zz_gate(), 0.30, 20, OptimizationConfig(functional="su", **cfg))
    assert not su.converged
