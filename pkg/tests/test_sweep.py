import numpy as np
import pytest

from timeopt.gates import cn_not, identity, qft
from timeopt.grape import OptimizationConfig
from timeopt.spin import SpinSystem, make_topology
from timeopt.sweep import (
    MinimalTimeNotFound,
    SweepConfig,
    descending_grid,
    fidelity_curve,
    minimal_time,
)

FAST = OptimizationConfig(max_iterations=300)


@pytest.fixture(scope="module")
def k2():
    return SpinSystem(make_topology("complete", 2))


def test_descending_grid_exact_steps():
    assert descending_grid(0.5, 0.8, 0.1) == [0.8, 0.7, 0.6, 0.5]
    grid = descending_grid(1.0, 2.05, 0.01)
    assert grid[0] == 2.05 and grid[-1] == 1.0 and len(grid) == 106
    assert all(round(t, 2) == t for t in grid)


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(1.0, 0.5)
    with pytest.raises(ValueError):
        SweepConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        SweepConfig(0.5, 1.0, restarts=0)


def test_identity_curve_converges_everywhere():
    system = SpinSystem(make_topology("chain", 2))
    res = fidelity_curve(system, identity(2), SweepConfig(0.2, 0.4, restarts=2, optimization=FAST), grid_step=0.1)
    assert [p.T for p in res.points] == [0.2, 0.3, 0.4]
    assert all(p.converged for p in res.points)
    assert res.tau == 0.2


def test_cnot_minimal_time(k2):
    sweep = SweepConfig(0.4, 0.7, restarts=2, slices=28, optimization=FAST)
    tau, res = minimal_time(k2, cn_not(2), sweep)
    assert 0.5 <= tau <= 0.6
    assert round(tau, 2) == tau
    below = [p for p in res.points if p.T < tau]
    assert below and not any(p.converged for p in below)
    env = res.envelope()
    assert np.all(np.diff(env) >= 0)
    assert res.at(tau).converged
    rows = res.rows()
    assert set(rows[0]) == {"T", "best_F", "deficit", "restarts_used", "converged"}


def test_sweep_is_reproducible(k2):
    sweep = SweepConfig(0.5, 0.6, restarts=2, slices=24, optimization=FAST)
    a = fidelity_curve(k2, cn_not(2), sweep, grid_step=0.05)
    b = fidelity_curve(k2, cn_not(2), sweep, grid_step=0.05)
    assert [p.best_F for p in a.points] == [p.best_F for p in b.points]


def test_no_success_raises_with_partial_sweep(k2):
    sweep = SweepConfig(0.3, 0.4, restarts=1, slices=20, optimization=OptimizationConfig(max_iterations=50))
    with pytest.raises(MinimalTimeNotFound) as info:
        minimal_time(k2, cn_not(2), sweep)
    assert len(info.value.sweep.points) == 2
    assert info.value.sweep.tau is None


def test_misses_above_tau_are_flagged(k2):
    sweep = SweepConfig(0.5, 0.9, restarts=1, slices=24, warm_start=False,
                        optimization=OptimizationConfig(max_iterations=5))
    res = fidelity_curve(k2, cn_not(2), sweep, grid_step=0.2)
    for p in res.points:
        assert p.flagged == (res.tau is not None and p.T >= res.tau and not p.converged)


@pytest.mark.slow
@pytest.mark.parametrize(
    "topology,gate,t_start,t_stop,slices",
    [("complete", cn_not(2), 0.4, 0.7, 28), ("chain", qft(2), 1.1, 1.5, 60)],
    ids=["cnot-K2", "qft-L2"],
)
def test_warm_start_not_worse_than_cold(topology, gate, t_start, t_stop, slices):
    # same total restart budget, compared over five seeds
    system = SpinSystem(make_topology(topology, 2))
    taus = {True: [], False: []}
    for seed in range(5):
        for warm in (True, False):
            sweep = SweepConfig(t_start, t_stop, restarts=2, slices=slices, warm_start=warm,
                                optimization=OptimizationConfig(max_iterations=1000, seed=seed))
            try:
                tau = minimal_time(system, gate, sweep)[0]
            except MinimalTimeNotFound:
                tau = np.inf
            taus[warm].append(tau)
    print(f"warm {taus[True]} cold {taus[False]}")
    assert np.mean(taus[True]) <= np.mean(taus[False]) + 1e-9
