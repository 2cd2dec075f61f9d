import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.linalg import expm

from homsim import (EnsembleConfig, PropagatorConfig, SystemParams,
                    build_operator_set, detection_rates, equal_time_densities,
                    first_click_density, initial_state, joint_click_density,
                    joint_density_grid, lindblad_check, pair_probabilities,
                    propagate, run_ensemble)
from homsim.dynamics import decay_horizon
from homsim.hilbert import StateVector

P = SystemParams.symmetric(0.25, 0.5)


@pytest.fixture(scope="module")
def pp_weak():
    return pair_probabilities(P)


def test_density_vanishes_at_time_zero():
    for j1 in "ab":
        for j2 in "ab":
            assert joint_click_density(P, j1, j2, 0.0, 0.0) == 0.0


def test_density_rejects_reversed_times():
    with pytest.raises(ValueError):
        joint_click_density(P, "a", "a", 2.0, 1.0)


def test_equal_time_diagonal_matches_dynamics(ops_weak):
    # density(j1, j2; t, t) is the equal-time joint density per unit time^2
    h = build_operator_set(P).h_nh[2]
    for t in (2.0, 5.0):
        psi = expm(-1j * t * h) @ initial_state().amplitudes
        p2, p11 = equal_time_densities(ops_weak, StateVector(2, psi), 1.0)
        assert joint_click_density(P, "a", "a", t, t) == pytest.approx(p2, rel=1e-10)
        assert joint_click_density(P, "a", "b", t, t) == pytest.approx(p11, rel=1e-10)


def test_completeness(pp_weak):
    assert pp_weak.total + pp_weak.deficit == pytest.approx(1.0, abs=1e-4)
    assert pp_weak.no_click_deficit < 2e-6
    assert all(v >= 0 for v in pp_weak.probabilities.values())


def test_mirror_symmetry_of_pairs(pp_weak):
    p = pp_weak.probabilities
    assert p[("a", "a")] == pytest.approx(p[("b", "b")], rel=1e-10)
    assert p[("a", "b")] == pytest.approx(p[("b", "a")], rel=1e-10)
    wa = pp_weak.waiting_densities[("a", "a")]
    wb = pp_weak.waiting_densities[("b", "b")]
    assert np.abs(wa - wb).max() < 1e-10 * max(1.0, wa.max())


def test_grid_refinement(pp_weak):
    fine = pair_probabilities(P, step=0.025)
    for pair, v in pp_weak.probabilities.items():
        assert abs(v - fine.probabilities[pair]) < 1e-3


def test_first_click_density_normalizes():
    assert first_click_density(P, "a", 0.0) == 0.0
    ops = build_operator_set(P)
    t_max = decay_horizon(ops.h_nh[2], threshold=1e-6)
    ts = np.linspace(0.0, t_max, 2001)
    total = first_click_density(P, "a", ts) + first_click_density(P, "b", ts)
    integral = simpson(total, x=ts)
    assert integral == pytest.approx(1.0, abs=1e-4)


def test_first_click_density_equals_rates_on_propagated_state(ops_weak):
    h = build_operator_set(P).h_nh[2]
    from homsim import non_hermitian_hamiltonian

    hop = non_hermitian_hamiltonian(P, 2)
    for t in (1.0, 4.0, 9.0):
        v = propagate(hop, initial_state(), t, PropagatorConfig(dt=0.05))
        pa, pb = detection_rates(ops_weak, v)
        assert first_click_density(P, "a", t) == pytest.approx(pa, rel=1e-10)
        assert first_click_density(P, "b", t) == pytest.approx(pb, rel=1e-10)


def test_joint_density_grid_structure():
    times = np.arange(0.0, 8.0, 0.5)
    grid = joint_density_grid(P, times)
    daa = grid.densities[("a", "a")]
    dbb = grid.densities[("b", "b")]
    assert np.abs(daa - dbb).max() < 1e-12
    # strictly below the diagonal everything is zero
    for i in range(len(times)):
        for j in range(i):
            assert daa[i, j] == 0.0
    # spot-check one off-diagonal point against the direct composition
    v = joint_click_density(P, "a", "a", times[2], times[5])
    assert daa[2, 5] == pytest.approx(v, rel=1e-10)
    with pytest.raises(ValueError):
        joint_density_grid(P, np.array([0.0, 0.1, 0.5]))


def test_insufficient_horizon_warns():
    with pytest.warns(UserWarning, match="deficit"):
        pp = pair_probabilities(P, t_max=10.0)
    assert pp.no_click_deficit > 1e-6
    assert pp.total + pp.deficit == pytest.approx(1.0, abs=1e-4)


def test_waiting_density_matches_mc_split():
    """Sum of the ab and ba waiting-time densities reproduces the empirical
    different-detector histogram (exchange structure of the unraveling)."""
    pp = pair_probabilities(P)
    n_traj = 4000
    res = run_ensemble(P, EnsembleConfig(n_traj=n_traj, seed=31,
                                         jump_sampling="norm-threshold"))
    dts = np.array([r.clicks[1].time - r.clicks[0].time
                    for r in res if not r.censored
                    and r.clicks[0].detector != r.clicks[1].detector])
    wt = pp.waiting_densities[("a", "b")] + pp.waiting_densities[("b", "a")]
    tau = pp.tau_grid
    for lo, hi in ((0.0, 2.0), (2.0, 4.0), (4.0, 8.0), (8.0, 16.0)):
        m = (tau >= lo) & (tau <= hi)
        p_bin = np.trapezoid(wt[m], tau[m])
        counts = int(np.sum((dts >= lo) & (dts < hi)))
        sigma = np.sqrt(n_traj * p_bin * (1 - p_bin))
        assert abs(counts - n_traj * p_bin) < 3 * sigma + 2


def test_lindblad_diagnostics():
    # the one-excitation sector drains at ~0.09 kappa, so reaching the
    # vacuum takes many cavity lifetimes
    times = np.linspace(0.0, 100.0, 41)
    diag = lindblad_check(P, times)
    assert np.abs(diag.total_trace - 1.0).max() < 1e-8
    assert np.abs(diag.sector_traces[2] - diag.nojump_norm2).max() < 1e-6
    assert diag.sector_traces[0][-1] > 0.99
    tail = (diag.sector_traces[0][-1] + diag.sector_traces[1][-1]
            + diag.sector_traces[2][-1])
    assert tail == pytest.approx(1.0, abs=1e-8)
