import math

import numpy as np
import pytest
from scipy import integrate

from config_manager import load_config, validate_config
from IBPLab.errors import ConfigError
from IBPLab.harness import (EXPERIMENTS, gibbs_reference_drift, ibp_setup, invariant_samples,
                            linear_reference_system, run_contraction_experiment, run_fomin_experiment,
                            run_girsanov_experiment, run_ibp_experiment, run_invariance_experiment,
                            run_oracle_experiment, score_convergence)
from IBPLab.reports import dumps_report


@pytest.fixture
def ou_cfg(ou_settings):
    return validate_config(ou_settings)


def test_experiment_registry():
    assert set(EXPERIMENTS) == {'ibp', 'girsanov', 'invariance', 'fomin', 'contraction', 'oracle'}


def test_semilinear_setup_diagnostics(ou_cfg):
    setup = ibp_setup(ou_cfg)
    assert setup.diagnostics['fh_bound'] == pytest.approx((1.0 - math.exp(-1.0)) ** -2)
    assert setup.shift_table.shape == (ou_cfg.grid.steps + 1, 1)


def test_ou_identity_holds(ou_cfg):
    report = run_ibp_experiment(ou_cfg, workers=1)
    assert report.passed
    check = report.checks[0]
    assert check.label == 'x'
    assert check.lhs.mean == 1.0
    assert check.richardson_mean is not None
    # the Richardson companion halves the O(dt) bias
    assert abs(check.richardson_mean) < abs(check.paired.mean) + 3.0 * check.paired.se
    assert report.results['weight_zero_mean']
    variance = report.results['variance_reduction']['x']
    assert variance['var_paired'] <= variance['var_lhs'] + variance['var_rhs'] + 2.0 * math.sqrt(
        variance['var_lhs'] * variance['var_rhs'])


def test_report_independent_of_worker_count(ou_cfg):
    single = dumps_report(run_ibp_experiment(ou_cfg, workers=1))
    pooled = dumps_report(run_ibp_experiment(ou_cfg, workers=4))
    assert single == pooled


def test_environment_is_recorded(ou_cfg):
    env = run_contraction_experiment(ou_cfg).environment
    assert env['seed'] == ou_cfg.mc.seed
    assert env['config_hash'] == ou_cfg.hash
    assert env['dt'] == pytest.approx(1.0 / 32)


def test_girsanov_for_ou(ou_cfg):
    report = run_girsanov_experiment(ou_cfg, workers=2)
    results = report.results
    assert results['shift_pass']
    for entry in results['per_eps'].values():
        density = entry['density']
        assert abs(density['mean'] - 1.0) < 4.0 * density['se']
        assert entry['shift_constant'] < 1e-6
    convergence = results['score_convergence']
    assert convergence['eps_ratio'] == pytest.approx(0.5)
    assert convergence['slope_pass']
    assert convergence['slope'] == pytest.approx(1.0, abs=0.2)


def _score_defects(bias=0.0, order=1.0, count=4000):
    gen = np.random.default_rng(17)
    base = gen.standard_normal(count)
    base -= base.mean()
    curvature = gen.standard_normal(count)
    curvature -= curvature.mean()
    return {eps: eps ** order * base + eps ** 2 * curvature + bias for eps in (0.1, 0.05)}


def test_score_convergence_accepts_first_order_defect():
    result = score_convergence(_score_defects())
    assert result['pass'] and result['richardson_pass'] and result['slope_pass']
    assert result['eps_ratio'] == pytest.approx(0.5)
    assert result['slope'] == pytest.approx(1.0, abs=0.1)
    assert result['ratio'] == pytest.approx(0.5, abs=0.05)


def test_score_convergence_rejects_biased_defect():
    result = score_convergence(_score_defects(bias=0.05))
    assert not result['richardson_pass']
    assert not result['pass']


def test_score_convergence_rejects_non_vanishing_defect():
    result = score_convergence(_score_defects(order=0.0))
    assert result['richardson_pass']
    assert result['slope'] == pytest.approx(0.0, abs=0.1)
    assert not result['slope_pass'] and not result['pass']


def test_score_convergence_edge_cases():
    assert score_convergence({0.1: np.zeros(8)}) is None
    zero = score_convergence({0.1: np.zeros(8), 0.05: np.zeros(8)})
    assert zero['pass'] and zero['ratio'] is None


def test_linear_reference_for_ou(ou_cfg):
    F, S = linear_reference_system(ou_cfg)
    assert np.allclose(F, [[-1.0]]) and np.allclose(S, [[1.0]])
    samples, source, cov = invariant_samples(ou_cfg, 100, 1)
    assert source == 'reference'
    assert samples.shape == (100, 1)
    assert cov[0, 0] == pytest.approx(0.5)


def test_reference_source_needs_linear_model():
    cfg = validate_config({"operator": {"dim": 2}, "drift": {"name": "sine", "params": {"c": 0.5}},
                           "invariance": {"source": "reference"}})
    assert linear_reference_system(cfg) is None
    with pytest.raises(ConfigError):
        invariant_samples(cfg, 10, 0)


def _kinetic_settings(delta=0.5, scale=1.0, source='auto'):
    return {"model": "hamiltonian",
            "operator": {"dim": 1, "eigenvalues": {"values": [1.0]}},
            "sigma": {"scale": scale},
            "drift": {"name": "gibbs_gradient", "params": {"a": 2.0, "delta": delta}},
            "invariance": {"source": source},
            "functions": [{"outer": "square", "coordinates": [0], "label": "x^2"}]}


def test_gibbs_reference_for_nonlinear_kinetic_model():
    cfg = validate_config(_kinetic_settings())
    assert linear_reference_system(cfg) is None
    assert gibbs_reference_drift(cfg) is not None
    samples, source, cov = invariant_samples(cfg, 20000, 3)
    assert source == 'gibbs' and cov is None
    assert samples.shape == (20000, 2)
    x, y = samples[:, 0], samples[:, 1]

    # exp(-2V(x) + <Ay, y>) = exp(-2x^2 - cos x - y^2)
    def weight(s):
        return math.exp(-2.0 * s * s - math.cos(s))

    mass, _ = integrate.quad(weight, -np.inf, np.inf)
    second, _ = integrate.quad(lambda s: s * s * weight(s), -np.inf, np.inf)
    se = np.std(x ** 2) / math.sqrt(x.shape[0])
    assert abs(np.mean(x ** 2) - second / mass) < 5.0 * se
    assert abs(np.mean(x)) < 5.0 * np.std(x) / math.sqrt(x.shape[0])
    assert np.var(y) == pytest.approx(0.5, abs=0.03)


def test_gibbs_source_needs_unit_noise():
    cfg = validate_config(_kinetic_settings(scale=2.0, source='gibbs'))
    assert gibbs_reference_drift(cfg) is None
    with pytest.raises(ConfigError):
        invariant_samples(cfg, 10, 0)


def test_invariance_for_ou(ou_cfg):
    report = run_invariance_experiment(ou_cfg, workers=2)
    results = report.results
    assert results['source'] == 'reference'
    assert results['lyapunov_covariance'][0][0] == pytest.approx(0.5)
    assert results['lyapunov_residual'] < 1e-12
    assert results['covariance_pass']
    assert report.passed


def test_oracle_decides_kinetic_reference(config_path):
    report = run_oracle_experiment(load_config(config_path("kinetic.json")))
    assert report.passed
    verdict = report.results['verdict']
    assert verdict['derived_density_stationary'] and not verdict['quoted_density_stationary']


def test_oracle_needs_gibbs_drift(ou_cfg):
    with pytest.raises(ConfigError):
        run_oracle_experiment(ou_cfg)


def test_contraction_for_sine(config_path):
    report = run_contraction_experiment(load_config(config_path("sine.json")))
    assert report.passed
    assert report.results['rate'] == pytest.approx(0.5)
    assert report.results['worst_ratio'] <= 1.0


def test_fomin_rejects_hamiltonian(config_path):
    with pytest.raises(ConfigError):
        run_fomin_experiment(load_config(config_path("hamiltonian.json")))


@pytest.mark.slow
def test_fomin_for_ou(ou_cfg):
    report = run_fomin_experiment(ou_cfg.with_overrides(fomin={'steps': 64}), workers=2)
    assert report.passed
    entry = report.results['directions']['1']
    fomin = entry['reports']['x']
    assert fomin['estimate'] == 1.0
    assert fomin['pass_weight']
    # |mu(d_k x)| = 1 exceeds C |Ak| ||x|| = sqrt(1/2) / (e - 1)
    assert not fomin['pass_constant']
    assert entry['sum_constant'] == pytest.approx(1.0 / (math.e - 1.0))
    assert entry['form_energy']['x']['mean'] == 1.0


@pytest.mark.slow
def test_hamiltonian_run(config_path):
    cfg = load_config(config_path("hamiltonian.json")).with_overrides(
        grid={'steps': 64}, mc={'paths': 4000, 'progress': False})
    report = run_ibp_experiment(cfg, workers=2)
    diagnostics = report.results['diagnostics']
    assert diagnostics['theta_T_defect'] < 1e-8
    assert diagnostics['htilde_T_defect'] < 1e-8
    assert np.max(np.abs(diagnostics['ph_residuals'])) < 1e-8
    assert report.passed


@pytest.mark.slow
def test_delay_run(config_path):
    cfg = load_config(config_path("delay.json")).with_overrides(
        grid={'steps': 64}, mc={'paths': 4000, 'progress': False})
    report = run_ibp_experiment(cfg, workers=2)
    diagnostics = report.results['diagnostics']
    assert diagnostics['lag_steps'] == 32
    assert diagnostics['dissipativity_pair'] == [0.75, 0.25]
    assert report.passed


@pytest.mark.slow
def test_mollified_drift_converges(config_path):
    cfg = load_config(config_path("sine_mollified.json")).with_overrides(
        grid={'steps': 64}, mc={'paths': 2000, 'progress': False})
    report = run_ibp_experiment(cfg, workers=2)
    errors = report.results['mollifier_convergence']
    assert errors['0.001'] <= errors['0.01']
