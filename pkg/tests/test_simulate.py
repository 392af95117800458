import numpy as np
import pytest

from IBPLab.drift_models import DelayTerminalDrift, SineDrift, ZeroDrift
from IBPLab.errors import ConfigError, DimensionError, SimulationError
from IBPLab.ibp_weights import EigenDirection, semilinear_shift_table
from IBPLab.rng import draw_noise, draw_noise_batch
from IBPLab.simulate import (ModelBinding, NoisePath, Shift, SimGrid, delay_lag_steps, simulate_delay,
                             simulate_hamiltonian, simulate_semilinear)
from IBPLab.spectral_core import SigmaOperator, SpectralOperator


def test_grid_derives_dt():
    grid = SimGrid(2.0, 8)
    assert grid.dt == 0.25
    assert grid.times[-1] == pytest.approx(2.0)
    assert grid.refine(2).steps == 16


@pytest.mark.parametrize("T,steps", [(0.0, 4), (1.0, 0), (1.0, 2.5)])
def test_invalid_grid(T, steps):
    with pytest.raises(ConfigError):
        SimGrid(T, steps)


def test_coarsen_sums_increments():
    noise = draw_noise(3, 0, 8, 2, 0.125)
    coarse = noise.coarsen(2)
    assert coarse.steps == 4 and coarse.dt == 0.25
    assert np.allclose(coarse.increments[1], noise.increments[2] + noise.increments[3])
    assert np.allclose(coarse.brownian()[-1], noise.brownian()[-1])


def test_batch_shapes(sine_model, unit_grid):
    noise = draw_noise_batch(1, 0, 5, unit_grid.steps, 3, unit_grid.dt)
    path = sine_model.run(np.zeros(3), unit_grid, noise, keep_path=True)
    assert path.states.shape == (5, unit_grid.steps + 1, 3)
    assert path.final.shape == (5, 3)
    assert np.array_equal(path.states[:, -1], path.final)


def test_noiseless_decay_is_exact():
    op = SpectralOperator.from_values([1.0, 3.0])
    grid = SimGrid(1.0, 16)
    noise = NoisePath(np.zeros((16, 2)), grid.dt)
    path = simulate_semilinear([1.0, 2.0], op, None, ZeroDrift(2), grid, noise)
    assert np.allclose(path.final, np.exp([-1.0, -3.0]) * [1.0, 2.0], rtol=1e-12)


def test_constant_forcing_is_exact():
    op = SpectralOperator.from_values([2.0])
    grid = SimGrid(1.0, 10)
    noise = NoisePath(np.zeros((10, 1)), grid.dt)
    shift = Shift(1.0, np.full((11, 1), 3.0))
    path = simulate_semilinear([0.5], op, None, ZeroDrift(1), grid, noise, shift=shift)
    expected = np.exp(-2.0) * 0.5 + (1.0 - np.exp(-2.0)) / 2.0 * 3.0
    assert path.final[0] == pytest.approx(expected, rel=1e-12)


def test_shift_response_is_linear_on_shared_noise(sine_model):
    grid = SimGrid(1.0, 128)
    k = EigenDirection(np.array([0.7, 0.0, -0.2]), sine_model.op)
    table = semilinear_shift_table(k, grid)
    noise = draw_noise_batch(9, 0, 4, grid.steps, 3, grid.dt)
    base = sine_model.run(np.zeros(3), grid, noise, keep_path=True)
    for eps in (0.1, 0.01):
        shifted = sine_model.run(np.zeros(3), grid, noise, keep_path=True, shift=Shift(eps, table), base=base)
        assert np.allclose(shifted.final - base.final, eps * k.vector, atol=1e-12)


def test_ou_mean(ou_model):
    grid = SimGrid(1.0, 50)
    n = 4000
    noise = draw_noise_batch(123, 0, n, grid.steps, 1, grid.dt)
    final = ou_model.run(np.ones(1), grid, noise).final[:, 0]
    se = final.std(ddof=1) / np.sqrt(n)
    assert abs(final.mean() - np.exp(-1.0)) < 4.0 * se


def test_non_finite_state_raises(ou_model, unit_grid):
    noise = draw_noise(1, 0, unit_grid.steps, 1, unit_grid.dt)
    with pytest.raises(SimulationError) as info:
        ou_model.run(np.array([np.nan]), unit_grid, noise)
    assert info.value.step == 1


def test_noise_must_match_grid(ou_model, unit_grid):
    noise = draw_noise(1, 0, unit_grid.steps + 1, 1, unit_grid.dt)
    with pytest.raises(DimensionError):
        ou_model.run(np.zeros(1), unit_grid, noise)


def test_hooks_see_left_endpoints(ou_model, unit_grid):
    seen = []
    noise = draw_noise(1, 0, unit_grid.steps, 1, unit_grid.dt)
    path = ou_model.run(np.zeros(1), unit_grid, noise, keep_path=True,
                        hooks=[lambda j, t, x, dW: seen.append((j, t, x.copy()))])
    assert len(seen) == unit_grid.steps
    j, t, x = seen[10]
    assert t == pytest.approx(unit_grid.times[10])
    assert np.array_equal(x, path.states[10])


def test_hamiltonian_position_integrates_velocity():
    op = SpectralOperator.from_values([1.0])
    grid = SimGrid(1.0, 4)
    noise = NoisePath(np.zeros((4, 1)), grid.dt)
    path = simulate_hamiltonian((np.zeros(1), np.ones(1)), np.eye(1), op, None,
                                ZeroDrift(2, 1), grid, noise)
    y = np.exp(-grid.times)
    assert np.allclose(path.y_states[:, 0], y)
    assert path.x_final[0] == pytest.approx(grid.dt * np.sum(y[:-1]))
    assert path.states.shape == (5, 2)


def test_hamiltonian_binding_state_shape():
    op = SpectralOperator.from_values([1.0, 2.0])
    model = ModelBinding(kind='hamiltonian', op=op, sig=SigmaOperator.identity(2),
                         drift=ZeroDrift(4, 2))
    grid = SimGrid(1.0, 8)
    assert model.state_shape(grid) == (4,)
    noise = draw_noise_batch(0, 0, 3, 8, 2, grid.dt)
    final = model.final_state(model.run(np.zeros(4), grid, noise))
    assert final.shape == (3, 4)


def test_delay_lag_steps():
    assert delay_lag_steps(0.5, 1.0 / 1024) == 512
    with pytest.raises(ConfigError):
        delay_lag_steps(0.3, 0.25)
    with pytest.raises(ConfigError):
        delay_lag_steps(0.0, 0.25)


def test_delay_history_layout():
    op = SpectralOperator.from_values([1.0])
    grid = SimGrid(1.0, 8)
    noise = draw_noise_batch(4, 0, 2, 8, 1, grid.dt)
    drift = DelayTerminalDrift(1, c=0.5, tau=0.25)
    path = simulate_delay(lambda th: np.array([1.0 + th]), op, SigmaOperator.identity(1), drift,
                          grid, 0.25, noise)
    assert path.m == 2
    assert path.history.shape == (2, 11, 1)
    assert np.allclose(path.history[0, :3, 0], [0.75, 0.875, 1.0])
    assert path.final_segment().shape == (2, 3, 1)
    assert path.times[0] == pytest.approx(-0.25)


def test_delay_drift_tau_must_agree():
    op = SpectralOperator.from_values([1.0])
    grid = SimGrid(1.0, 8)
    noise = draw_noise(0, 0, 8, 1, grid.dt)
    with pytest.raises(ConfigError):
        simulate_delay(np.zeros(1), op, None, DelayTerminalDrift(1, 0.5, tau=0.5), grid, 0.25, noise)


def test_delay_with_current_state_drift_matches_semilinear():
    op = SpectralOperator.from_values([1.0])
    grid = SimGrid(1.0, 8)
    noise = draw_noise(5, 0, 8, 1, grid.dt)
    sig = SigmaOperator.identity(1)
    drift = SineDrift(1, 0.3)
    delay = simulate_delay(np.full(1, 0.2), op, sig, drift, grid, 0.25, noise)
    plain = simulate_semilinear(np.full(1, 0.2), op, sig, drift, grid, noise)
    assert np.allclose(delay.final, plain.final)
