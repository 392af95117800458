"""
IBPLab Harness Module
Experiment orchestration: builds weights and ingredients for a validated
configuration, runs the paired Monte Carlo estimators through the chunk
engine and applies the acceptance rules. Every run returns an
ExperimentReport whose numbers depend only on (config, seed).
"""

import math
import platform
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .drift_models import GibbsGradientDrift, LinearDrift, PositionDrift, ZeroDrift
from .engine import PairedSpec, paired_task, run_chunks
from .errors import ConfigError, OracleError
from .ibp_weights import (DelayDirection, DelayWeight, EigenDirection, HamDirection, HamiltonianWeight,
                          SemilinearWeight, check_ph_constraints, default_phi_psi, delay_ingredients,
                          delay_shift_integrand, fh_bound, girsanov_density, ham_h_theta,
                          hamiltonian_shift_integrand, semilinear_shift_integrand, semilinear_shift_table)
from .measures import (ErgodicSampler, GaussianReference, GibbsReference, MCReport, closability_chain_check,
                       contraction_check, evaluate_reference_candidates, fomin_check, fomin_eigen_bound,
                       fomin_sum_constant, form_energy, gibbs_drift_matrix, linear_phase_system, lyapunov_residual,
                       lyapunov_stationary_cov, mollifier_convergence, paired_report, sample_invariant,
                       stationarity_check)
from .reduction import PartialBuffer, summarize
from .rng import draw_noise, draw_noise_batch
from .simulate import ModelBinding, Shift, SimGrid
from .utils.logger import get_logger

logger = get_logger("harness")

# least log-log slope of the RMS score defect against eps
SCORE_MIN_SLOPE = 0.5
SCORE_RMS_FLOOR = 1e-12


@dataclass
class ExperimentReport:
    """Outcome of one experiment: named result sections plus the run environment."""
    experiment: str
    passed: bool
    results: Dict[str, Any]
    environment: Dict[str, Any]
    checks: List[MCReport] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            'experiment': self.experiment,
            'pass': self.passed,
            'checks': [c.as_dict() for c in self.checks],
            'results': self.results,
            'environment': self.environment,
        }


def _environment(cfg, **extra) -> Dict[str, Any]:
    env = {
        'seed': cfg.mc.seed,
        'paths': cfg.mc.paths,
        'chunk_paths': cfg.mc.chunk_paths,
        'steps': cfg.grid.steps,
        'dt': cfg.grid.dt,
        'T': cfg.grid.T,
        'model': cfg.model,
        'config_hash': cfg.hash,
        'ibplab_version': __version__,
        'numpy_version': np.__version__,
        'python': platform.python_version(),
    }
    env.update(extra)
    return env


@dataclass
class IBPSetup:
    """Everything the paired estimator needs on one grid."""
    weight_factory: Callable
    direction: np.ndarray
    shift_table: np.ndarray
    shift_integrand: Callable
    diagnostics: Dict[str, Any]
    ingredients: Any = None


def semilinear_setup(cfg, grid: SimGrid) -> IBPSetup:
    model = cfg.binding
    k = EigenDirection(cfg.direction, cfg.op)
    T = grid.T
    diagnostics: Dict[str, Any] = {'direction': k.vector.tolist()}
    try:
        diagnostics['fh_bound'] = fh_bound(k, model.drift, cfg.sig, T)
    except NotImplementedError:
        diagnostics['fh_bound'] = None
    return IBPSetup(weight_factory=lambda: SemilinearWeight(k, model.drift, cfg.sig, T),
                    direction=k.vector, shift_table=semilinear_shift_table(k, grid),
                    shift_integrand=semilinear_shift_integrand, diagnostics=diagnostics, ingredients=k)


def hamiltonian_setup(cfg, grid: SimGrid) -> IBPSetup:
    model = cfg.binding
    ham = cfg.hamiltonian
    direction = HamDirection(np.asarray(ham['k1']), np.asarray(ham['k2']), model.B, cfg.op)
    pp = default_phi_psi(grid.T, direction.theta1, direction.theta2)
    ingredients = ham_h_theta(pp, direction, grid)
    x_end, y_end = ingredients.theta(grid.T)
    diagnostics = {
        'theta1': direction.theta1,
        'theta2': direction.theta2,
        'ph_residuals': check_ph_constraints(pp).tolist(),
        'theta_T_defect': float(np.linalg.norm(np.concatenate([x_end - direction.k1, y_end - direction.k2]))),
        'htilde_T_defect': float(np.linalg.norm(ingredients.htilde(grid.T) - direction.k2)),
    }
    return IBPSetup(weight_factory=lambda: HamiltonianWeight(ingredients, model.drift, cfg.sig),
                    direction=direction.vector, shift_table=ingredients.hprime_table,
                    shift_integrand=hamiltonian_shift_integrand, diagnostics=diagnostics,
                    ingredients=ingredients)


def delay_setup(cfg, grid: SimGrid) -> IBPSetup:
    model = cfg.binding
    eta = cfg.delay['eta']
    direction = DelayDirection(np.asarray(eta['coefficients']), eta['profile'], cfg.delay['tau'], cfg.op)
    ingredients = delay_ingredients(direction, cfg.op, grid)
    _, eta_table, _, _ = direction.tables(grid.dt)
    diagnostics = {
        'tau': direction.tau,
        'lag_steps': ingredients.m,
        'eta_c1_norm': direction.c1_norm(grid.dt),
        'theta_vs_perturbation_sup': ingredients.theta_discrepancy(),
    }
    if hasattr(model.drift, 'dissipativity_pair'):
        l1, l2 = model.drift.dissipativity_pair(cfg.op)
        diagnostics['dissipativity_pair'] = [l1, l2]
    return IBPSetup(weight_factory=lambda: DelayWeight(ingredients, model.drift, cfg.sig),
                    direction=eta_table, shift_table=ingredients.gamma_table,
                    shift_integrand=delay_shift_integrand, diagnostics=diagnostics, ingredients=ingredients)


SETUPS = {
    'semilinear': semilinear_setup,
    'hamiltonian': hamiltonian_setup,
    'delay': delay_setup,
}


def ibp_setup(cfg, grid: Optional[SimGrid] = None) -> IBPSetup:
    return SETUPS[cfg.model](cfg, grid or cfg.grid)


def _paired_spec(cfg, grid: SimGrid, setup: IBPSetup, refine: int) -> PairedSpec:
    return PairedSpec(model=cfg.binding, grid=grid, weight_factory=setup.weight_factory,
                      direction=setup.direction, functions=cfg.functions, initial=cfg.initial,
                      lhs_at='final', refine=refine)


def run_ibp_experiment(cfg, workers: Optional[int] = None) -> ExperimentReport:
    """
    Paired check of P_T(d_k f) = E[f(X_T) M] for every configured test function.

    With ``mc.richardson`` the run is repeated at dt/2 on the same Brownian
    paths; the bias allowance is kappa dt with
    kappa = max(2 |mean(dt) - mean(dt/2)| / dt, kappa_min).
    """
    grid = cfg.grid
    mc, tol = cfg.mc, cfg.tolerances
    setup = ibp_setup(cfg, grid)
    refine = 2 if mc.richardson else 1
    logger.info(f"IBP experiment: model={cfg.model} n={cfg.op.dim} paths={mc.paths} steps={grid.steps}")
    reduced = run_chunks(paired_task(_paired_spec(cfg, grid, setup, refine), mc.seed), mc.paths,
                         mc.chunk_paths, workers, mc.progress, desc=f"ibp-{cfg.model}")
    fine_reduced = None
    if mc.richardson:
        fine_grid = grid.refine(2)
        fine_setup = ibp_setup(cfg, fine_grid)
        fine_reduced = run_chunks(paired_task(_paired_spec(cfg, fine_grid, fine_setup, 1), mc.seed), mc.paths,
                                  mc.chunk_paths, workers, mc.progress, desc=f"ibp-{cfg.model}-dt/2")

    checks = []
    for fn in cfg.functions:
        lhs, rhs = f"lhs:{fn.label}", f"rhs:{fn.label}"
        fine_mean = None
        kappa = tol.kappa_min
        if fine_reduced is not None:
            coarse_mean = reduced.paired(lhs, rhs).mean
            fine_mean = fine_reduced.paired(lhs, rhs).mean
            kappa = max(2.0 * abs(coarse_mean - fine_mean) / grid.dt, tol.kappa_min)
        checks.append(paired_report(fn.label, reduced, grid.dt, tol.z_max, kappa, fine_mean))

    weight = reduced['weight']
    weight_sq = summarize(reduced.columns['weight'] ** 2)
    weight_zero_mean = abs(weight.mean) <= tol.z_max * weight.se
    results = {
        'weight': weight.as_dict(),
        'weight_second_moment': weight_sq.as_dict(),
        'weight_zero_mean': weight_zero_mean,
        'variance_reduction': {
            fn.label: {
                'var_lhs': reduced[f"lhs:{fn.label}"].variance,
                'var_rhs': reduced[f"rhs:{fn.label}"].variance,
                'var_paired': reduced.paired(f"lhs:{fn.label}", f"rhs:{fn.label}").variance,
            } for fn in cfg.functions
        },
        'diagnostics': setup.diagnostics,
    }
    mollify = cfg.settings['drift'].get('mollify')
    if mollify and cfg.model == 'semilinear':
        eps = float(mollify['eps'])
        rough = ModelBinding(kind='semilinear', op=cfg.op, sig=cfg.sig, drift=cfg.drift.base)
        results['mollifier_convergence'] = {f"{e:g}": v for e, v in mollifier_convergence(
            rough, cfg.direction, [eps, eps / 10.0], grid, cfg.initial, paths=min(mc.paths, 256),
            seed=mc.seed, nodes=int(mollify.get('nodes', 21))).items()}
    passed = all(c.passed for c in checks) and weight_zero_mean
    for c in checks:
        logger.info(f"  {c.label}: mean={c.paired.mean:.4g} se={c.paired.se:.3g} z={c.z:.2f} pass={c.passed}")
    return ExperimentReport(experiment=f"ibp-{cfg.model}", passed=passed, results=results,
                            environment=_environment(cfg, richardson=mc.richardson), checks=checks)


def _shift_targets(cfg, setup: IBPSetup, grid: SimGrid):
    """Deterministic response of the state to a unit shift: (final target, nodewise target or None)."""
    if cfg.model == 'semilinear':
        return setup.direction, None
    if cfg.model == 'hamiltonian':
        return setup.direction, setup.ingredients.htilde_table
    return setup.direction, None


def score_convergence(scores: Dict[float, np.ndarray], z_max: float = 3.0,
                      min_slope: float = SCORE_MIN_SLOPE) -> Optional[Dict[str, Any]]:
    """
    Richardson over eps for the per-path score defect d_eps = (1 - R_eps)/eps - M.

    With r = eps_small / eps_big the extrapolated defect (d_small - r d_big) / (1 - r)
    must vanish within z_max SE, and the RMS defect must shrink at least like
    eps^min_slope between the two eps. Rounding-level defects skip the slope test.
    """
    if len(scores) < 2:
        return None
    ordered = sorted(scores, reverse=True)
    big, small = ordered[0], ordered[-1]
    r = small / big
    d_big = np.asarray(scores[big], dtype=float)
    d_small = np.asarray(scores[small], dtype=float)
    extrapolated = summarize((d_small - r * d_big) / (1.0 - r))
    rms_big = math.sqrt(math.fsum(d_big ** 2) / d_big.shape[0])
    rms_small = math.sqrt(math.fsum(d_small ** 2) / d_small.shape[0])
    ratio = rms_small / rms_big if rms_big > SCORE_RMS_FLOOR else None
    slope = math.log(ratio) / math.log(r) if ratio is not None and ratio > 0 else None
    richardson_ok = abs(extrapolated.mean) <= z_max * extrapolated.se + SCORE_RMS_FLOOR
    slope_ok = ratio is None or (slope is not None and slope >= min_slope)
    return {
        'richardson': extrapolated.as_dict(),
        'richardson_pass': richardson_ok,
        'rms': {f"{big:g}": rms_big, f"{small:g}": rms_small},
        'ratio': ratio,
        'eps_ratio': r,
        'slope': slope,
        'slope_pass': slope_ok,
        'pass': richardson_ok and slope_ok,
    }


def run_girsanov_experiment(cfg, workers: Optional[int] = None) -> ExperimentReport:
    """
    Shifted runs on shared noise for each eps in ``girsanov.eps``:
    E[R_eps] = 1, (1 - R_eps)/eps - M -> 0, and the deterministic shift
    identities (final-state response eps k, nodewise Y^eps - Y = eps h~,
    delay segment response eps eta) with defect / (eps dt) reported as C.
    """
    grid = cfg.grid
    model: ModelBinding = cfg.binding
    tol = cfg.tolerances
    setup = ibp_setup(cfg, grid)
    final_target, node_target = _shift_targets(cfg, setup, grid)
    eps_values = list(cfg.girsanov['eps'])
    paths = int(cfg.girsanov.get('paths') or cfg.mc.paths)
    seed = cfg.mc.seed
    shape = model.state_shape(grid)

    def task(start: int, stop: int) -> PartialBuffer:
        count = stop - start
        noise = draw_noise_batch(seed, start, count, grid.steps, model.noise_dim, grid.dt)
        x0 = np.broadcast_to(cfg.initial, (count,) + shape).copy()
        acc = setup.weight_factory()
        base = model.run(x0, grid, noise, hooks=[acc], keep_path=True)
        weight = np.broadcast_to(acc.result(), (count,)).astype(float)
        columns = {'weight': weight}
        for eps in eps_values:
            shifted = model.run(x0, grid, noise, keep_path=True, shift=Shift(eps, setup.shift_table), base=base)
            xi = setup.shift_integrand(base, shifted, setup.shift_table, model.drift, eps)
            density = girsanov_density(noise.increments, xi, cfg.sig, grid).density
            columns[f"R:{eps:g}"] = density
            columns[f"score:{eps:g}"] = (1.0 - density) / eps - weight
            diff = model.final_state(shifted) - model.final_state(base) - eps * final_target
            defect = np.abs(diff).reshape(count, -1).max(axis=-1)
            if node_target is not None:
                node_diff = shifted.y_states - base.y_states - eps * node_target
                defect = np.maximum(defect, np.abs(node_diff).reshape(count, -1).max(axis=-1))
            columns[f"defect:{eps:g}"] = defect
        return PartialBuffer(start, stop, columns)

    logger.info(f"Girsanov experiment: model={cfg.model} paths={paths} eps={eps_values}")
    reduced = run_chunks(task, paths, cfg.mc.chunk_paths, workers, cfg.mc.progress, desc="girsanov")

    per_eps = {}
    density_ok = True
    constants = []
    for eps in eps_values:
        R = reduced[f"R:{eps:g}"]
        score = reduced[f"score:{eps:g}"]
        C = float(np.max(reduced.columns[f"defect:{eps:g}"])) / (eps * grid.dt)
        ok = abs(R.mean - 1.0) <= tol.z_max * R.se
        density_ok = density_ok and ok
        constants.append(C)
        per_eps[f"{eps:g}"] = {'density': R.as_dict(), 'density_pass': ok, 'score': score.as_dict(),
                               'shift_constant': C}

    shift_ok = bool(np.all(np.isfinite(constants)))
    # rounding-level constants carry no spread information
    if len(constants) > 1 and max(constants) > 1e-8:
        spread = (max(constants) - min(constants)) / max(constants)
        shift_ok = shift_ok and spread <= 1e-3
    else:
        spread = 0.0
    convergence = score_convergence({eps: reduced.columns[f"score:{eps:g}"] for eps in eps_values}, tol.z_max)
    results = {'per_eps': per_eps, 'shift_constant_spread': spread, 'shift_pass': shift_ok,
               'score_convergence': convergence, 'weight': reduced['weight'].as_dict()}
    passed = density_ok and shift_ok and (convergence is None or convergence['pass'])
    return ExperimentReport(experiment=f"girsanov-{cfg.model}", passed=passed, results=results,
                            environment=_environment(cfg, paths=paths))


def linear_reference_system(cfg) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """(F, S) for configurations whose dynamics are linear, else None."""
    model = cfg.binding
    op, sig = cfg.op, cfg.sig
    drift = model.drift
    n = op.dim
    if model.kind == 'semilinear':
        if isinstance(drift, ZeroDrift):
            return op.matrix(), sig.matrix
        if isinstance(drift, LinearDrift):
            return op.matrix() + drift.matrix, sig.matrix
        return None
    if model.kind == 'hamiltonian':
        nx = model.position_dim
        base = drift.base if isinstance(drift, PositionDrift) else drift
        if isinstance(base, GibbsGradientDrift) and base.delta == 0.0 and nx == n:
            M = gibbs_drift_matrix(base)
        elif isinstance(base, ZeroDrift):
            M = np.zeros((n, nx + n))
        elif isinstance(base, LinearDrift):
            M = np.zeros((n, nx + n))
            M[:, :base.in_dim] = base.matrix
        else:
            return None
        return linear_phase_system(op, model.B, M, sig)
    return None


def gibbs_reference_drift(cfg) -> Optional[GibbsGradientDrift]:
    """
    The Gibbs drift of a kinetic configuration whose stationary law is
    exp(-2V(x) + <Ay, y>): B = I, sigma = I and at most two modes.
    """
    model = cfg.binding
    if model.kind != 'hamiltonian' or cfg.op.dim > 2:
        return None
    drift = model.drift.base if isinstance(model.drift, PositionDrift) else model.drift
    if not isinstance(drift, GibbsGradientDrift):
        return None
    n = cfg.op.dim
    if model.B.shape != (n, n) or not np.allclose(model.B, np.eye(n)):
        return None
    if not np.allclose(cfg.sig.matrix, np.eye(n)):
        return None
    return drift


def invariant_samples(cfg, count: int, seed: int) -> Tuple[np.ndarray, str, Optional[np.ndarray]]:
    """
    Samples of mu from the Lyapunov-validated Gaussian when available, then
    from the rejection-sampled Gibbs law, else from the ergodic sampler.
    """
    inv = cfg.invariance
    system = linear_reference_system(cfg)
    source = inv.get('source', 'auto')
    cov = None
    if system is not None:
        try:
            cov = lyapunov_stationary_cov(*system)
        except OracleError as exc:
            logger.warning(f"No Gaussian reference: {exc}")
    if source == 'reference' and cov is None:
        raise ConfigError("no linear Gaussian reference for this model", field="invariance.source")
    if cov is not None and source in ('auto', 'reference'):
        return GaussianReference(cov).sample(count, seed), 'reference', cov
    gibbs = gibbs_reference_drift(cfg) if source in ('auto', 'gibbs') else None
    if source == 'gibbs' and gibbs is None:
        raise ConfigError("the Gibbs reference needs a gibbs_gradient kinetic model with B = I, sigma = I, d <= 2",
                          field="invariance.source")
    if gibbs is not None:
        try:
            return GibbsReference(gibbs).sample(count, seed), 'gibbs', cov
        except OracleError as exc:
            if source == 'gibbs':
                raise ConfigError(str(exc), field="invariance.source") from exc
            logger.warning(f"No Gibbs reference: {exc}")
    if inv.get('burn_in') is None and inv.get('gap') is None:
        sampler = ErgodicSampler.with_defaults(cfg.binding, count, seed, dt=float(inv['dt']),
                                               chains=int(inv.get('chains', 256)))
    else:
        default = ErgodicSampler.with_defaults(cfg.binding, count, seed, dt=float(inv['dt']))
        sampler = ErgodicSampler(model=cfg.binding, burn_in=float(inv.get('burn_in') or default.burn_in),
                                 gap=float(inv.get('gap') or default.gap), count=count, seed=seed,
                                 dt=float(inv['dt']), chains=int(inv.get('chains', 256)))
    sampler.initial = cfg.initial
    return sample_invariant(sampler), 'sampler', cov


def run_invariance_experiment(cfg, workers: Optional[int] = None) -> ExperimentReport:
    """
    Stationarity of the invariant samples for every test function and, for
    linear dynamics, agreement of the Lyapunov covariance with the empirical
    covariance of the ergodic sampler.
    """
    inv, tol = cfg.invariance, cfg.tolerances
    count = int(inv['samples'])
    model = cfg.binding
    samples, source, cov = invariant_samples(cfg, count, cfg.mc.seed)
    t = float(inv['t'])
    steps = max(1, int(round(t / float(inv['dt']))))
    if model.kind == 'delay':
        lag = model.lag_steps(SimGrid(t, steps))
        if samples.shape[-2] != lag + 1:
            raise ConfigError("invariance.dt must be the sampler step for delay models", field="invariance.dt")

    results: Dict[str, Any] = {'source': source, 'samples': count}
    passed = True
    stationarity = {}
    for fn in cfg.functions:
        check = stationarity_check(samples, model, t, fn, seed=cfg.mc.seed + 1, steps=steps,
                                   chunk_paths=cfg.mc.chunk_paths, workers=workers)
        ok = abs(check.z) < tol.z_max
        passed = passed and ok
        stationarity[fn.label] = dict(check.as_dict(), **{'pass': ok})
    results['stationarity'] = stationarity

    if cov is not None:
        system = linear_reference_system(cfg)
        results['lyapunov_covariance'] = cov.tolist()
        results['lyapunov_residual'] = lyapunov_residual(*system, cov)
        sampler = ErgodicSampler.with_defaults(model, count, cfg.mc.seed + 2, dt=float(inv['dt']),
                                               chains=int(inv.get('chains', 256)))
        chain = sample_invariant(sampler)
        empirical = np.cov(chain.reshape(chain.shape[0], -1), rowvar=False)
        empirical = np.atleast_2d(empirical)
        rel = float(np.linalg.norm(empirical - cov) / np.linalg.norm(cov))
        cov_ok = rel <= float(inv.get('cov_rtol', 0.05))
        results['empirical_covariance'] = empirical.tolist()
        results['empirical_relative_error'] = rel
        results['covariance_pass'] = cov_ok
        passed = passed and cov_ok and results['lyapunov_residual'] < 1e-10 * max(1.0, np.linalg.norm(cov))
    return ExperimentReport(experiment="invariance", passed=passed, results=results,
                            environment=_environment(cfg, samples=count))


def run_fomin_experiment(cfg, workers: Optional[int] = None) -> ExperimentReport:
    """
    Fomin derivative bounds over the configured directions and test functions:
    the explicit-constant bound, the sum and per-eigendirection bounds, the
    weight (second-moment) bound, the chain identity for mu(d_k f) and the
    form energies mu((d_k f)^2).
    """
    if cfg.model != 'semilinear':
        raise ConfigError("Fomin experiments run on semilinear models", field="model")
    model = cfg.binding
    fom, tol = cfg.fomin, cfg.tolerances
    count = int(cfg.invariance['samples'])
    samples, source, _ = invariant_samples(cfg, count, cfg.mc.seed)
    T = fom.get('T')
    steps = int(fom.get('steps', 256))
    lip = model.drift.lipschitz_const
    results: Dict[str, Any] = {'source': source, 'samples': count, 'directions': {}}
    passed = True
    checks: List[MCReport] = []
    for coeffs in fom['directions']:
        k = EigenDirection(np.asarray(coeffs, dtype=float), cfg.op)
        key = ",".join(f"{c:g}" for c in coeffs)
        entry: Dict[str, Any] = {'reports': {}, 'form_energy': {}}
        for fn in cfg.functions:
            report = fomin_check(samples, model, k, fn, T=T, steps=steps, seed=cfg.mc.seed + 3,
                                 z_max=tol.z_max, chunk_paths=cfg.mc.chunk_paths, workers=workers)
            passed = passed and report.passed
            entry['reports'][fn.label] = report.as_dict()
            entry['form_energy'][fn.label] = form_energy(samples, fn, fn, k.vector).as_dict()
            closure = closability_chain_check(samples, model, T or 1.0 / cfg.op.lambda_min, k, fn, steps=steps,
                                              seed=cfg.mc.seed + 3, z_max=tol.z_max, kappa=tol.kappa_min,
                                              chunk_paths=cfg.mc.chunk_paths, workers=workers)
            checks.append(closure)
        if lip is not None:
            sum_c = fomin_sum_constant(cfg.op, cfg.sig, lip)
            entry['sum_constant'] = sum_c
            entry['eigen_bounds'] = {str(i): fomin_eigen_bound(cfg.op, cfg.sig, lip, int(i)) for i in k.active}
        results['directions'][key] = entry
    results['closability'] = [c.as_dict() for c in checks]
    passed = passed and all(c.passed for c in checks)
    return ExperimentReport(experiment="fomin", passed=passed, results=results,
                            environment=_environment(cfg, samples=count), checks=checks)


def run_contraction_experiment(cfg, workers: Optional[int] = None) -> ExperimentReport:
    """Synchronous-coupling contraction from the configured pair of starting points."""
    con = cfg.contraction
    model = cfg.binding
    grid = cfg.grid
    noise = draw_noise(cfg.mc.seed, 0, grid.steps, model.noise_dim, grid.dt)
    report = contraction_check(np.asarray(con['x0']), np.asarray(con['y0']), model, grid, noise,
                               kappa=float(con.get('kappa', 1.0)))
    results = dict(report.as_dict(), ratios=report.ratios.tolist())
    return ExperimentReport(experiment="contraction", passed=report.passed, results=results,
                            environment=_environment(cfg))


def run_oracle_experiment(cfg, workers: Optional[int] = None) -> ExperimentReport:
    """
    Decide the quoted kinetic reference densities. Needs a gibbs_gradient drift
    on a Hamiltonian model with B = I; passes when the independent oracles
    agree (Lyapunov residual and Fokker-Planck residual of the derived density).
    """
    model = cfg.binding
    drift = model.drift.base if isinstance(model.drift, PositionDrift) else model.drift
    if cfg.model != 'hamiltonian' or not isinstance(drift, GibbsGradientDrift):
        raise ConfigError("oracle runs need a hamiltonian model with the gibbs_gradient drift", field="drift.name")
    if not np.allclose(model.B, np.eye(cfg.op.dim)):
        raise ConfigError("oracle runs assume B = I", field="hamiltonian.B")
    orc = cfg.oracle
    report = evaluate_reference_candidates(cfg.op, drift, cfg.sig, points_per_axis=int(orc['points_per_axis']),
                                           half_width=float(orc['half_width']))
    passed = bool(report['verdict']['derived_density_stationary'])
    if 'lyapunov' in report:
        lyap = report['lyapunov']
        passed = passed and lyap['residual'] < 1e-10 and lyap['fp_residual_of_lyapunov_gaussian'] < 1e-8
    return ExperimentReport(experiment="oracle", passed=passed, results=report,
                            environment=_environment(cfg))


EXPERIMENTS = {
    'ibp': run_ibp_experiment,
    'girsanov': run_girsanov_experiment,
    'invariance': run_invariance_experiment,
    'fomin': run_fomin_experiment,
    'contraction': run_contraction_experiment,
    'oracle': run_oracle_experiment,
}
