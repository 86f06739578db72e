import math

import numpy as np
import pytest

from collapse_kaon.core import Flavor, MassState, PhysicalParams
from collapse_kaon.montecarlo import (Grid, Scheme, StepOverflowError, TrajectoryState, estimate,
                                      exact_characteristic_trajectory, exact_interference_factor,
                                      initial_packet, run_trajectories, step, summarize,
                                      trajectory_generator, trajectory_observables,
                                      wiener_increments)

SMALL = Grid(128)


def test_scheme_theta_mapping():
    assert [float(s.theta0) for s in Scheme] == [0.0, 0.5, 1.0, 0.5]
    assert Scheme.parse("midpoint-unitary") is Scheme.MIDPOINT_UNITARY
    with pytest.raises(ValueError):
        Scheme.parse("Heun")


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(64).points(1.0)
    with pytest.raises(ValueError):
        Grid(512, extent=5.0).points(1.0)
    x, dx = Grid(128).points(1.0)
    assert x.size == 128 and dx == pytest.approx(12 / 128)


def test_initial_packet_normalized():
    x, psi, dx = initial_packet(PhysicalParams(p_i=2.0), Grid())
    assert np.sum(np.abs(psi) ** 2) * dx == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("scheme,expected", [
    (Scheme.LEFT_POINT, lambda z: 1 + z**2),
    (Scheme.MIDPOINT_UNITARY, lambda z: 1.0 + 0 * z),
    (Scheme.RIGHT_POINT, lambda z: 1 / (1 + z**2)),
])
def test_single_step_multipliers(scheme, expected):
    p = PhysicalParams()
    state = TrajectoryState.initial(p, Flavor.K_S, SMALL)
    dt, dW = 1e-2, 0.3
    new = step(state, scheme, dW, dt, p)
    z = -p.m_S * dt + math.sqrt(p.lam) * p.m_S / p.m_0 * state.x * dW
    want = np.sum(expected(z) * np.abs(state.psi_S) ** 2) * state.dx
    assert new.component_norm2(MassState.S) == pytest.approx(want, rel=1e-12)


def test_mean_one_step_growth_matches_theta_convention():
    # E|1 + i z|^2 - 1 = lambda (m/m0)^2 <x^2> dt + O(dt^2): Ito growth at rate lambda m^2 alpha / 2
    p = PhysicalParams(m_S=1, m_L=1)
    dt = 1e-4
    state = TrajectoryState.initial(p, Flavor.K_S, SMALL)
    dW = trajectory_generator(1, 0).standard_normal(20000) * math.sqrt(dt)
    growth = np.mean([step(state, Scheme.LEFT_POINT, w, dt, p).component_norm2(MassState.S) - 1
                      for w in dW[:2000]]) / dt
    assert growth == pytest.approx(0.5 * p.lam * p.alpha, rel=0.1)


def test_step_overflow():
    p = PhysicalParams(lam=1e6)
    state = TrajectoryState.initial(p, Flavor.K_S, SMALL)
    with pytest.raises(StepOverflowError):
        step(state, Scheme.LEFT_POINT, 10.0, 1.0, p)


def test_kernel_matches_reference_stepper():
    p = PhysicalParams()
    dt, n = 1e-2, 30
    t = np.array([0.0, 0.1, 0.3])
    for scheme in (Scheme.LEFT_POINT, Scheme.MIDPOINT_UNITARY, Scheme.RIGHT_POINT):
        batch = run_trajectories(scheme, p, 2, dt, t, master_seed=9, grid=SMALL)
        for i in range(2):
            dW = wiener_increments(9, i, n, dt)
            state = TrajectoryState.initial(p, Flavor.K_S, SMALL)
            for k in range(n):
                state = step(state, scheme, dW[k], dt, p)
            assert batch.n_S[i, -1] == pytest.approx(state.component_norm2(MassState.S), rel=1e-10)


def test_midpoint_is_unitary_and_matches_exact_solution():
    p = PhysicalParams()
    dt, n = 1e-2, 200
    batch = run_trajectories(Scheme.MIDPOINT_UNITARY, p, 3, dt, [n * dt], master_seed=4, grid=SMALL)
    np.testing.assert_allclose(batch.n_S, 1.0, atol=1e-12)
    for i in range(3):
        W = wiener_increments(4, i, n, dt).sum()
        exact = exact_characteristic_trajectory(W, n * dt, p, SMALL)
        assert complex(exact["interference_re"], exact["interference_im"]) == \
            pytest.approx(batch.overlap[i, 0], abs=1e-9)


def test_ensemble_interference_matches_characteristic_function():
    p = PhysicalParams()
    t = np.array([20.0])
    want = np.exp(1j * p.delta_m * 20.0) * exact_interference_factor(p, 20.0)
    for scheme, dt in ((Scheme.MIDPOINT_UNITARY, 0.05), (Scheme.EXACT_CHARACTERISTIC, 20.0)):
        est = estimate(scheme, p, 4000, dt, t, master_seed=2, grid=SMALL)
        assert abs(est.mean["interference_re"][0] - want.real) < 4 * est.stderr["interference_re"][0]
        assert abs(est.mean["interference_im"][0] - want.imag) < 4 * est.stderr["interference_im"][0]


def test_initial_momentum_drops_out():
    t = np.array([0.0, 0.2])
    a = run_trajectories(Scheme.LEFT_POINT, PhysicalParams(), 4, 1e-2, t, 1, SMALL)
    b = run_trajectories(Scheme.LEFT_POINT, PhysicalParams(p_i=3.0), 4, 1e-2, t, 1, SMALL)
    np.testing.assert_allclose(a.n_S, b.n_S, rtol=1e-12)
    np.testing.assert_allclose(a.overlap, b.overlap, rtol=1e-12, atol=1e-15)


def test_strangeness_probabilities_sum_to_norm():
    p = PhysicalParams()
    batch = run_trajectories(Scheme.RIGHT_POINT, p, 8, 1e-2, np.linspace(0, 1, 5), 3, SMALL)
    obs = trajectory_observables(batch, p)
    np.testing.assert_allclose(obs["P_K0K0"] + obs["P_K0K0bar"], obs["norm2"], rtol=1e-13)


def test_results_independent_of_batching():
    p = PhysicalParams()
    t = np.array([0.0, 0.5])
    a = run_trajectories(Scheme.LEFT_POINT, p, 10, 1e-2, t, 7, SMALL, batch_size=3)
    b = run_trajectories(Scheme.LEFT_POINT, p, 10, 1e-2, t, 7, SMALL, batch_size=64)
    assert np.array_equal(a.n_S, b.n_S) and np.array_equal(a.overlap, b.overlap)


def test_streams_are_distinct_and_reproducible():
    a = wiener_increments(1, 0, 100, 1e-3)
    assert np.array_equal(a, wiener_increments(1, 0, 100, 1e-3))
    assert not np.array_equal(a, wiener_increments(1, 1, 100, 1e-3))
    assert not np.array_equal(a, wiener_increments(2, 0, 100, 1e-3))


def test_substeps_share_the_brownian_path():
    coarse = wiener_increments(5, 3, 50, 2e-3, substeps=2)
    fine = wiener_increments(5, 3, 100, 1e-3)
    np.testing.assert_allclose(coarse, fine.reshape(50, 2).sum(axis=1), rtol=1e-12)


def test_overflow_is_flagged_not_raised():
    p = PhysicalParams(lam=200.0)
    batch = run_trajectories(Scheme.LEFT_POINT, p, 16, 0.1, np.linspace(0, 5, 6), 0, SMALL)
    assert batch.failed.any()
    assert np.isnan(batch.n_S[batch.failed]).all()
    est = estimate(Scheme.LEFT_POINT, p, 16, 0.1, np.linspace(0, 5, 6), 0, SMALL)
    assert est.n_failed == int(batch.failed.sum())


def test_summarize():
    values = np.array([[1.0, 2.0], [3.0, np.nan], [5.0, 6.0]])
    mean, err = summarize(values)
    np.testing.assert_allclose(mean, [3.0, 4.0])
    np.testing.assert_allclose(err, [2.0, 2.0])
    mean, err = summarize(np.array([[1.0]]))
    assert mean[0] == 1.0 and math.isnan(err[0])


def test_t_grid_must_align_with_dt():
    with pytest.raises(ValueError):
        run_trajectories(Scheme.LEFT_POINT, PhysicalParams(), 1, 0.3, [0.0, 0.5], 0, SMALL)
