import numpy as np
import pytest

from homsim import (BasisState, IntegratorError, PropagatorConfig,
                    SectorMismatchError, StateVector, SystemParams,
                    basis_vector, build_operator_set, decay_horizon,
                    density_scan, detection_rates, equal_time_densities,
                    equal_time_densities_from_amplitudes, index_of,
                    initial_state, mirror_state, non_hermitian_hamiltonian,
                    norm_squared, propagate)
from conftest import random_sector_state

P = SystemParams.symmetric(0.25, 0.5)
P0 = SystemParams(g_l=0.0, g_r=0.0, kappa=1.0, delta=0.5)


def test_dark_state_is_stationary():
    h = non_hermitian_hamiltonian(P0, 2)
    v = initial_state()
    # rk4 carries its O(dt^4) truncation error; expm is exact
    for method, tol in (("expm", 1e-12), ("rk4", 1e-6)):
        out = propagate(h, v, 7.3, PropagatorConfig(dt=0.05, method=method))
        assert norm_squared(out) == pytest.approx(1.0, abs=tol)
        overlap = abs(np.vdot(v.amplitudes, out.amplitudes))
        assert overlap == pytest.approx(1.0, abs=tol)


def test_single_photon_cascade_closed_form():
    """With decoupled atoms, a photon in mode 1 feeds mode 3 one-way:
    c1(t) = exp(-kappa t/2)  (so |c1|^2 = exp(-kappa t)),
    c3(t) = -kappa t exp(-kappa t/2)."""
    h = non_hermitian_hamiltonian(P0, 1)
    v = basis_vector(BasisState(0, 1, 0, 0, 0, 0))
    i1 = index_of(BasisState(0, 1, 0, 0, 0, 0))
    i3 = index_of(BasisState(0, 0, 0, 0, 1, 0))
    for t in (0.4, 1.0, 2.7):
        out = propagate(h, v, t, PropagatorConfig(dt=0.05))
        assert out.amplitudes[i1] == pytest.approx(np.exp(-t / 2), rel=1e-9)
        assert out.amplitudes[i3] == pytest.approx(-t * np.exp(-t / 2), rel=1e-9)
        assert abs(out.amplitudes[i1]) ** 2 == pytest.approx(np.exp(-t), rel=1e-9)
        others = np.delete(out.amplitudes, [i1, i3])
        assert np.abs(others).max() < 1e-12


def test_norm_derivative_equals_total_rate(ops_weak):
    h = non_hermitian_hamiltonian(P, 2)
    cfg = PropagatorConfig(dt=0.05)
    v = propagate(h, initial_state(), 3.0, cfg)
    eps = 1e-5
    n_plus = norm_squared(propagate(h, v, eps, PropagatorConfig(dt=eps)))
    n_minus = norm_squared(v)
    deriv = (n_plus - n_minus) / eps
    pa, pb = detection_rates(ops_weak, v)
    assert deriv == pytest.approx(-(pa + pb), rel=1e-4)


def test_expm_steps_compose():
    h = non_hermitian_hamiltonian(P, 2)
    cfg = PropagatorConfig(dt=0.1)
    v = initial_state()
    one = propagate(h, v, 3.5, cfg)
    two = propagate(h, propagate(h, v, 1.3, cfg), 2.2, cfg)
    assert np.abs(one.amplitudes - two.amplitudes).max() < 1e-12


def test_rk4_fourth_order_convergence():
    h = non_hermitian_hamiltonian(P, 2)
    exact = propagate(h, initial_state(), 2.0, PropagatorConfig(dt=0.5))
    err = []
    for dt in (0.2, 0.1):
        rk = propagate(h, initial_state(), 2.0, PropagatorConfig(dt=dt, method="rk4"))
        err.append(np.abs(rk.amplitudes - exact.amplitudes).max())
    ratio = err[0] / err[1]
    assert 10 < ratio < 22  # ~2^4 for a 4th-order method


def test_rk4_instability_raises():
    p5 = SystemParams.symmetric(5.0, 0.5)
    h = non_hermitian_hamiltonian(p5, 2)
    with pytest.raises(IntegratorError):
        propagate(h, initial_state(), 40.0, PropagatorConfig(dt=0.5, method="rk4"))


def test_propagate_sector_checks():
    h = non_hermitian_hamiltonian(P, 2)
    v1 = basis_vector(BasisState(0, 1, 0, 0, 0, 0))
    with pytest.raises(SectorMismatchError):
        propagate(h, v1, 1.0)
    with pytest.raises(ValueError):
        propagate(h, initial_state(), -1.0)
    out = propagate(h, initial_state(), 1.0)
    assert out.sector == 2


def test_detection_rate_examples(ops_weak):
    assert detection_rates(ops_weak, initial_state()) == (0.0, 0.0)
    v = basis_vector(BasisState(0, 1, 0, 0, 0, 0))
    pa, pb = detection_rates(ops_weak, v)
    assert pa == pytest.approx(1.0)
    assert pb == 0.0
    # constructive interference of the two modes feeding detector a
    amps = np.zeros(6, dtype=complex)
    amps[index_of(BasisState(0, 1, 0, 0, 0, 0))] = 1 / np.sqrt(2)
    amps[index_of(BasisState(0, 0, 0, 0, 1, 0))] = 1 / np.sqrt(2)
    v = StateVector(1, amps)
    pa, pb = detection_rates(ops_weak, v)
    assert pa == pytest.approx(2.0, rel=1e-12)
    assert pb == 0.0
    # brute-force cross-check <v|J^dag J|v>
    j = ops_weak.jump[("a", 1)]
    want = np.real(np.vdot(v.amplitudes, (j.conj().T @ j) @ v.amplitudes))
    assert pa == pytest.approx(want, rel=1e-12)


def test_detection_rates_reject_vacuum(ops_weak):
    with pytest.raises(SectorMismatchError):
        detection_rates(ops_weak, StateVector(0, np.ones(1)))


def test_equal_time_density_examples(ops_weak):
    delta_t = 0.1
    assert equal_time_densities(ops_weak, initial_state(), delta_t) == (0.0, 0.0)
    amps = np.zeros(19, dtype=complex)
    amps[14] = 1.0  # one photon in each of the two inward modes
    p2, p11 = equal_time_densities(ops_weak, StateVector(2, amps), delta_t)
    assert p2 == pytest.approx(4.0 * delta_t)
    assert p11 == 0.0
    amps = np.zeros(19, dtype=complex)
    amps[13] = 1.0  # both photons in the left cavity, one per mode
    p2, p11 = equal_time_densities(ops_weak, StateVector(2, amps), delta_t)
    assert p2 == 0.0
    assert p11 == pytest.approx(delta_t)


def test_equal_time_operator_vs_amplitude_forms(ops_weak, rng):
    for _ in range(25):
        v = StateVector(2, random_sector_state(rng, 19))
        a = equal_time_densities(ops_weak, v, 0.1)
        b = equal_time_densities_from_amplitudes(v, 1.0, 0.1)
        assert a[0] == pytest.approx(b[0], rel=1e-10, abs=1e-14)
        assert a[1] == pytest.approx(b[1], rel=1e-10, abs=1e-14)


def test_equal_time_requires_sector_two(ops_weak):
    with pytest.raises(SectorMismatchError):
        equal_time_densities(ops_weak, StateVector(1, np.ones(6)), 0.1)


def test_density_scan_zero_coupling_is_zero():
    trace = density_scan(P0, PropagatorConfig(dt=0.1), t_max=5.0)
    assert np.all(trace.p2 == 0)
    assert np.all(trace.p11 == 0)


def test_density_scan_weak_coupling_bunching():
    p = SystemParams.symmetric(0.1, 0.5)
    trace = density_scan(p, PropagatorConfig(dt=0.1), t_max=60.0)
    assert trace.p2.max() > 3 * trace.p11.max()
    assert np.all(trace.p2 >= 0) and np.all(trace.p11 >= 0)


def test_density_scan_norm_monotone():
    h = non_hermitian_hamiltonian(P, 2)
    cfg = PropagatorConfig(dt=0.1)
    v = initial_state()
    norms = [norm_squared(v)]
    for _ in range(100):
        v = propagate(h, v, cfg.dt, cfg)
        norms.append(norm_squared(v))
    assert np.all(np.diff(norms) <= 1e-12)


def test_no_jump_state_is_mirror_symmetric():
    h = non_hermitian_hamiltonian(P, 2)
    v = initial_state()
    for _ in range(40):
        v = propagate(h, v, 0.25, PropagatorConfig(dt=0.05))
        mv = mirror_state(v)
        assert np.abs(mv.amplitudes - v.amplitudes).max() < 1e-12


def test_density_trace_csv(tmp_path):
    trace = density_scan(P, PropagatorConfig(dt=0.1), t_max=2.0, delta_t=0.1)
    text = trace.to_csv()
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    assert lines[0] == "t,p2,p11"
    assert len(lines) == 1 + trace.times.size
    unscaled = trace.to_csv(per_unit_time=True)
    row = lines[5].split(",")
    row_u = [l for l in unscaled.splitlines() if not l.startswith("#")][5].split(",")
    assert float(row_u[1]) == pytest.approx(float(row[1]) / 0.1, rel=1e-12)


def test_decay_horizon_weak_coupling_reaches_threshold():
    ops = build_operator_set(P)
    t = decay_horizon(ops.h_nh[2], threshold=1e-4)
    assert 10 < t < 200
    # the threshold really is reached at that time
    h = non_hermitian_hamiltonian(P, 2)
    v = propagate(h, initial_state(), t, PropagatorConfig(dt=0.5))
    assert norm_squared(v) < 1e-4


def test_decay_horizon_stalls_on_dark_dynamics():
    ops = build_operator_set(P0)
    with pytest.warns(UserWarning, match="stalled"):
        t = decay_horizon(ops.h_nh[2], threshold=1e-4)
    assert t < 100
