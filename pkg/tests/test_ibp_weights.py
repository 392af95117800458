import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from IBPLab.drift_models import DelayTerminalDrift, SineDrift, ZeroDrift
from IBPLab.errors import ConfigError, ConstraintError, DimensionError
from IBPLab.ibp_weights import (DelayDirection, DelayWeight, EigenDirection, HamDirection, HamiltonianWeight,
                                SemilinearWeight, check_ph_constraints, default_phi_psi, delay_gamma,
                                delay_ingredients, delay_perturbation, delay_weight, fh_bound, girsanov_density,
                                growth_factor, ham_h_theta, hamiltonian_weight, normalisation, semilinear_weight)
from IBPLab.rng import draw_noise_batch
from IBPLab.simulate import SimGrid, simulate_delay, simulate_hamiltonian, simulate_semilinear
from IBPLab.spectral_core import SigmaOperator, SpectralOperator


def test_growth_factor_branches():
    assert growth_factor(0.0, 2.0) == pytest.approx(2.0)
    assert growth_factor(1e-9, 1.0, 1.0) == pytest.approx(1.0 + 0.5e-9)
    assert growth_factor(-1.0, 1.0, 1.0) == pytest.approx(1.0 - math.exp(-1.0))


def test_normalisation_inverts_growth():
    assert normalisation(-1.0, 1.0) == pytest.approx(1.0 / (1.0 - math.exp(-1.0)))
    assert normalisation(-2.0, 0.5) * growth_factor(-2.0, 0.5, 0.5) == pytest.approx(1.0)


def test_zero_direction_rejected():
    op = SpectralOperator.from_values([1.0, 2.0])
    with pytest.raises(ConstraintError):
        EigenDirection(np.zeros(2), op)


def test_ou_weight_is_scaled_brownian_endpoint():
    op = SpectralOperator.from_values([1.0])
    sig = SigmaOperator.identity(1)
    grid = SimGrid(1.0, 64)
    noise = draw_noise_batch(3, 0, 16, grid.steps, 1, grid.dt)
    path = simulate_semilinear(np.zeros(1), op, sig, ZeroDrift(1), grid, noise)
    weight = semilinear_weight(path, np.ones(1), ZeroDrift(1), sig, 1.0, op=op)
    expected = noise.increments.sum(axis=(-2, -1)) / (1.0 - math.exp(-1.0))
    assert np.allclose(weight, expected)


def test_zero_direction_gives_zero_weight(sine_model):
    grid = SimGrid(1.0, 16)
    noise = draw_noise_batch(3, 0, 4, grid.steps, 3, grid.dt)
    path = sine_model.run(np.zeros(3), grid, noise, keep_path=True)
    weight = semilinear_weight(path, np.zeros(3), sine_model.drift, sine_model.sig, 1.0, op=sine_model.op)
    assert np.array_equal(weight, np.zeros(4))


def test_hook_and_replay_agree(sine_model):
    grid = SimGrid(1.0, 32)
    k = EigenDirection(np.array([1.0, 0.5, 0.0]), sine_model.op)
    noise = draw_noise_batch(8, 0, 6, grid.steps, 3, grid.dt)
    acc = SemilinearWeight(k, sine_model.drift, sine_model.sig, grid.T)
    path = sine_model.run(np.zeros(3), grid, noise, hooks=[acc], keep_path=True)
    replay = semilinear_weight(path, k, sine_model.drift, sine_model.sig, grid.T)
    assert np.allclose(acc.result(), replay)


def test_ou_second_moment_bound_is_exact():
    op = SpectralOperator.from_values([1.0])
    k = EigenDirection(np.ones(1), op)
    assert fh_bound(k, ZeroDrift(1), SigmaOperator.identity(1), 1.0) == \
        pytest.approx((1.0 - math.exp(-1.0)) ** -2)


@pytest.mark.slow
def test_ou_weight_second_moment_estimate():
    op = SpectralOperator.from_values([1.0])
    sig = SigmaOperator.identity(1)
    grid = SimGrid(1.0, 32)
    n = 20000
    noise = draw_noise_batch(17, 0, n, grid.steps, 1, grid.dt)
    acc = SemilinearWeight(EigenDirection(np.ones(1), op), ZeroDrift(1), sig, 1.0)
    simulate_semilinear(np.zeros(1), op, sig, ZeroDrift(1), grid, noise, hooks=[acc], keep_path=False)
    m2 = acc.result() ** 2
    se = m2.std(ddof=1) / math.sqrt(n)
    assert abs(m2.mean() - (1.0 - math.exp(-1.0)) ** -2) < 4.0 * se


def test_sine_bound_exceeds_zero_drift_bound():
    op = SpectralOperator.from_values([1.0, 4.0])
    k = EigenDirection(np.array([1.0, 0.0]), op)
    sig = SigmaOperator.identity(2)
    assert fh_bound(k, SineDrift(2, 0.5), sig, 1.0) > fh_bound(k, ZeroDrift(2), sig, 1.0)


@settings(max_examples=40, deadline=None)
@given(T=st.floats(0.2, 3.0), theta1=st.floats(-4.0, 4.0), theta2=st.floats(-4.0, 4.0))
def test_phi_psi_constraints_hold(T, theta1, theta2):
    residuals = check_ph_constraints(default_phi_psi(T, theta1, theta2))
    assert np.max(np.abs(residuals)) < 1e-10


def test_phi_psi_constraints_for_growing_and_decaying_modes():
    pp = default_phi_psi(1.5, -1.0, 2.0)
    assert np.max(np.abs(check_ph_constraints(pp))) < 1e-10
    assert pp.psi(1.5) == pytest.approx(1.0)
    assert pp.phi(0.75) > 0.0


@pytest.mark.parametrize("theta", [-3.0, -0.04, -1e-9, 0.0, 1e-9, 0.04, 0.2, 3.0])
def test_phi_normaliser_matches_quadrature(theta):
    T = 1.5
    pp = default_phi_psi(T, theta, 0.0)
    expected, _ = integrate.quad(lambda s: s * (T - s) * math.exp(theta * s), 0.0, T, epsabs=0.0, epsrel=1e-13)
    # phi(T/2) = e^{theta T} (T/2)^2 / int_0^T s (T - s) e^{theta s} ds
    assert (T / 2.0) ** 2 * math.exp(theta * T) / pp.phi(T / 2.0) == pytest.approx(expected, rel=1e-11)


def test_phi_psi_needs_positive_horizon():
    with pytest.raises(ConfigError):
        default_phi_psi(0.0, -1.0, -1.0)


def _ham_ingredients(steps=1024):
    op = SpectralOperator.from_values([1.0, 2.0])
    direction = HamDirection(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.eye(2), op)
    pp = default_phi_psi(1.0, direction.theta1, direction.theta2)
    return direction, ham_h_theta(pp, direction, SimGrid(1.0, steps))


def test_hamiltonian_direction_eigenvalues():
    direction, _ = _ham_ingredients()
    assert direction.theta1 == pytest.approx(-1.0)
    assert direction.theta2 == pytest.approx(-2.0)


def test_theta_reaches_direction_at_horizon():
    direction, ing = _ham_ingredients()
    x_end, y_end = ing.theta(1.0)
    assert np.allclose(x_end, direction.k1, atol=1e-8)
    assert np.allclose(y_end, direction.k2, atol=1e-8)
    assert np.allclose(ing.htilde(1.0), direction.k2, atol=1e-12)
    assert np.allclose(ing.theta_x_table[-1], direction.k1, atol=1e-5)
    assert np.allclose(ing.htilde_table[0], 0.0)


def test_non_eigen_direction_rejected():
    op = SpectralOperator.from_values([1.0, 2.0])
    with pytest.raises(ConstraintError):
        HamDirection(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.eye(2), op)


def test_phi_psi_for_wrong_eigenvalue_rejected():
    op = SpectralOperator.from_values([1.0, 2.0])
    direction = HamDirection(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.eye(2), op)
    with pytest.raises(ConstraintError):
        ham_h_theta(default_phi_psi(1.0, -3.0, -2.0), direction, SimGrid(1.0, 16))


def test_hamiltonian_weight_without_drift_is_hprime_sum():
    direction, ing = _ham_ingredients(steps=64)
    grid = SimGrid(1.0, 64)
    sig = SigmaOperator.identity(2)
    drift = ZeroDrift(4, 2)
    noise = draw_noise_batch(3, 0, 6, grid.steps, 2, grid.dt)
    acc = HamiltonianWeight(ing, drift, sig)
    path = simulate_hamiltonian((np.zeros(2), np.zeros(2)), direction.B, direction.op, sig, drift, grid, noise,
                                hooks=[acc])
    expected = np.einsum('jn,pjn->p', ing.hprime_table[:-1], noise.increments)
    assert np.allclose(hamiltonian_weight(path, ing, drift, sig, T=1.0), expected)
    assert np.allclose(acc.result(), expected)


def test_hamiltonian_weight_needs_matching_grid():
    direction, ing = _ham_ingredients(steps=32)
    grid = SimGrid(1.0, 16)
    drift = ZeroDrift(4, 2)
    noise = draw_noise_batch(3, 0, 2, grid.steps, 2, grid.dt)
    path = simulate_hamiltonian((np.zeros(2), np.zeros(2)), direction.B, direction.op, None, drift, grid, noise)
    with pytest.raises(DimensionError):
        hamiltonian_weight(path, ing, drift, SigmaOperator.identity(2))


def _delay_setup(steps=64):
    op = SpectralOperator.from_values([1.0])
    grid = SimGrid(1.0, steps)
    direction = DelayDirection(np.ones(1), 'ramp', 0.5, op)
    return op, grid, direction, delay_ingredients(direction, op, grid)


def test_delay_perturbation_profile():
    op, grid, direction, ing = _delay_setup()
    assert np.allclose(ing.perturbation(0.0), 0.0)
    assert np.allclose(ing.perturbation(1.0), direction.eta(0.0))
    left = ing.perturbation(0.5)
    assert np.allclose(left, direction.eta(-0.5))
    assert ing.perturbation_table.shape == (ing.m + 1 + grid.steps, 1)
    assert ing.gamma_table.shape == (grid.steps + 1, 1)
    assert np.isfinite(ing.theta_discrepancy())


@pytest.mark.parametrize("t", [0.2, 0.5, 0.8])
def test_perturbation_is_mild_solution_of_gamma(t):
    op = SpectralOperator.from_values([1.5])
    direction = DelayDirection(np.ones(1), 'exp', 0.5, op)
    gamma = delay_gamma(direction, op, 1.0, 0.5)
    perturbation = delay_perturbation(direction, op, 1.0, 0.5)
    value, _ = integrate.quad(lambda s: math.exp(-1.5 * (t - s)) * gamma(s)[0], 0.0, t,
                              points=[0.5] if t > 0.5 else None)
    assert perturbation(t)[0] == pytest.approx(value, rel=1e-7)


def test_delay_weight_hook_and_replay_agree():
    op, grid, direction, ing = _delay_setup()
    sig = SigmaOperator.identity(1)
    drift = DelayTerminalDrift(1, c=0.5, tau=0.5)
    noise = draw_noise_batch(2, 0, 5, grid.steps, 1, grid.dt)
    acc = DelayWeight(ing, drift, sig)
    path = simulate_delay(np.zeros(1), op, sig, drift, grid, 0.5, noise, hooks=[acc])
    assert np.allclose(acc.result(), delay_weight(path, ing, drift, sig, T=1.0))


def test_delay_horizon_must_exceed_lag():
    op = SpectralOperator.from_values([1.0])
    direction = DelayDirection(np.ones(1), 'ramp', 0.5, op)
    with pytest.raises(ConfigError):
        delay_ingredients(direction, op, SimGrid(0.5, 16))


def test_unknown_eta_profile():
    with pytest.raises(ConfigError):
        DelayDirection(np.ones(1), 'sawtooth', 0.5, SpectralOperator.from_values([1.0]))


def test_girsanov_density_without_shift_is_one():
    grid = SimGrid(1.0, 8)
    noise = draw_noise_batch(1, 0, 3, grid.steps, 2, grid.dt)
    result = girsanov_density(noise.increments, np.zeros((3, 9, 2)), SigmaOperator.identity(2), grid)
    assert np.array_equal(result.density, np.ones(3))
    assert not result.overflow


def test_girsanov_exponent_is_clamped():
    grid = SimGrid(1.0, 4)
    noise = draw_noise_batch(1, 0, 2, grid.steps, 1, grid.dt)
    result = girsanov_density(noise.increments, np.full((2, 5, 1), 1e3), SigmaOperator.identity(1), grid)
    assert result.overflow
    assert np.all(np.isfinite(result.density))


def test_girsanov_density_has_unit_mean():
    grid = SimGrid(1.0, 16)
    n = 20000
    noise = draw_noise_batch(99, 0, n, grid.steps, 1, grid.dt)
    xi = np.full((grid.steps + 1, 1), 0.5)
    density = girsanov_density(noise.increments, xi, SigmaOperator.identity(1), grid).density
    se = density.std(ddof=1) / math.sqrt(n)
    assert abs(density.mean() - 1.0) < 4.0 * se


def test_girsanov_quadrature_rule_checked():
    grid = SimGrid(1.0, 4)
    noise = draw_noise_batch(1, 0, 1, grid.steps, 1, grid.dt)
    with pytest.raises(ConfigError):
        girsanov_density(noise.increments, np.zeros((5, 1)), SigmaOperator.identity(1), grid, quadrature='simpson')
