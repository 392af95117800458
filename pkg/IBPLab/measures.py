"""
IBPLab Invariant Measures Module
Invariant-measure machinery: ergodic sampling, Gaussian and Gibbs references
with independent oracles (Lyapunov solver, stationary Fokker-Planck
residual), the stationarity and closability identities, Fomin derivative
bounds, form energies and the synchronous-coupling contraction test.

Reference densities quoted for the kinetic examples are hypotheses here:
``evaluate_reference_candidates`` decides them with the oracles before any
acceptance check relies on them.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import integrate, linalg

from .cylinder import CylinderFunction
from .drift_models import DriftModel, GibbsGradientDrift, LinearDrift, PositionDrift, mollify_directional
from .engine import PairedSpec, paired_task, run_chunks
from .errors import ConfigError, OracleError, SimulationError
from .ibp_weights import EigenDirection, SemilinearWeight, growth_factor, normalisation
from .reduction import PartialBuffer, Statistic, summarize
from .rng import draw_noise_batch, rng_for_path
from .simulate import ModelBinding, NoisePath, SimGrid, simulate_semilinear
from .spectral_core import SigmaOperator, SpectralOperator
from .utils.logger import get_logger

logger = get_logger("measures")

DEFAULT_CHAINS = 256


def dissipativity_constants(model: ModelBinding):
    """(c1, c2): c1 from <A(x-y), x-y> <= -c1|x-y|^2, c2 from the drift (None if unknown)."""
    c1 = model.op.lambda_min
    c2 = model.drift.dissipativity() if hasattr(model.drift, 'dissipativity') else None
    return c1, c2


@dataclass
class ErgodicSampler:
    """
    Draws approximately stationary states from ``chains`` independent chains.

    Attributes:
        model: model binding
        burn_in: model time discarded before the first sample
        gap: model time between consecutive samples of one chain
        count: number of samples wanted
        seed: base seed; chain c uses stream (seed, c, 'sampler')
        dt: integration step
        chains: number of chains advanced together
        initial: starting state (zeros by default)
    """
    model: ModelBinding
    burn_in: float
    gap: float
    count: int
    seed: int
    dt: float = 1e-2
    chains: int = DEFAULT_CHAINS
    initial: Optional[np.ndarray] = None

    @classmethod
    def with_defaults(cls, model: ModelBinding, count: int, seed: int, dt: float = 1e-2,
                      chains: int = DEFAULT_CHAINS) -> 'ErgodicSampler':
        """burn_in = 10/(c1+c2) when the dissipativity constants are known, else 10/lambda_1; gap = 1/lambda_1."""
        c1, c2 = dissipativity_constants(model)
        lam1 = model.op.lambda_min
        if c2 is not None and c1 + c2 > 0:
            burn_in = 10.0 / (c1 + c2)
        else:
            burn_in = 10.0 / lam1
        return cls(model=model, burn_in=burn_in, gap=1.0 / lam1, count=count, seed=seed, dt=dt, chains=chains)

    def _steps(self, horizon: float) -> int:
        return max(1, int(math.ceil(horizon / self.dt - 1e-9)))


def _advance(sampler: ErgodicSampler, state: np.ndarray, gens, horizon: float) -> np.ndarray:
    steps = sampler._steps(horizon)
    grid = SimGrid(steps * sampler.dt, steps)
    scale = math.sqrt(grid.dt)
    inc = np.stack([scale * g.standard_normal((steps, sampler.model.noise_dim)) for g in gens])
    noise = NoisePath(inc, grid.dt, sampler.seed, 0)
    path = sampler.model.run(state, grid, noise, keep_path=False)
    return sampler.model.final_state(path)


def sample_invariant(sampler: ErgodicSampler) -> np.ndarray:
    """
    ``count`` approximately stationary states (segments for delay models),
    chain-major order: sample r of chain c is row r * chains + c.
    """
    model = sampler.model
    c1, c2 = dissipativity_constants(model)
    if c2 is not None and c1 + c2 <= 0:
        logger.warning(f"Dissipativity margin c1+c2={c1 + c2:.3g} <= 0; stationarity not guaranteed")
    if model.kind == 'delay' and hasattr(model.drift, 'dissipativity_pair'):
        l1, l2 = model.drift.dissipativity_pair(model.op)
        if not l1 > l2:
            logger.warning(f"Delay dissipativity fails: lambda1'={l1:.3g} <= lambda2'={l2:.3g}")
    if sampler.gap <= 0 or sampler.count < 1:
        raise ConfigError("sampler needs gap > 0 and count >= 1", field="invariance")

    chains = max(1, min(sampler.chains, sampler.count))
    rounds = int(math.ceil(sampler.count / chains))
    gens = [rng_for_path(sampler.seed, c, 'sampler') for c in range(chains)]
    gap_grid = SimGrid(sampler.dt * sampler._steps(sampler.gap), sampler._steps(sampler.gap))
    shape = model.state_shape(gap_grid)
    if sampler.initial is None:
        state = np.zeros((chains,) + shape)
    else:
        state = np.broadcast_to(np.asarray(sampler.initial, dtype=float), (chains,) + shape).copy()

    try:
        state = _advance(sampler, state, gens, sampler.burn_in)
    except SimulationError as exc:
        raise SimulationError(f"divergence during burn-in: {exc}", step=exc.step, model=exc.model) from exc
    logger.debug(f"Burn-in of {sampler.burn_in:.3g} done for {chains} chains")

    samples = []
    for _ in range(rounds):
        state = _advance(sampler, state, gens, sampler.gap)
        samples.append(state.copy())
    return np.concatenate(samples, axis=0)[:sampler.count]


@dataclass
class GaussianReference:
    """Centered Gaussian reference N(0, covariance)."""
    covariance: np.ndarray
    mean: Optional[np.ndarray] = None

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        cov = 0.5 * (cov + cov.T)
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise OracleError("reference covariance is not positive definite")
        self.covariance = cov
        self.mean = np.zeros(cov.shape[0]) if self.mean is None else np.asarray(self.mean, dtype=float)

    @property
    def dim(self) -> int:
        return int(self.covariance.shape[0])

    def sample(self, count: int, seed: int) -> np.ndarray:
        chol = np.linalg.cholesky(self.covariance)
        gen = rng_for_path(seed, 0, 'auxiliary')
        return self.mean + gen.standard_normal((count, self.dim)) @ chol.T

    def log_density(self, z) -> np.ndarray:
        """Unnormalised log density -1/2 z^T C^{-1} z."""
        z = np.asarray(z, dtype=float) - self.mean
        prec = np.linalg.inv(self.covariance)
        return -0.5 * np.einsum('...i,ij,...j->...', z, prec, z)


def ou_stationary_covariance(op: SpectralOperator, sig: SigmaOperator) -> np.ndarray:
    """Stationary covariance of dX = AX dt + sigma dW: C_ij = (sigma sigma*)_ij / (lambda_i + lambda_j)."""
    cov = sig.matrix @ sig.matrix.T
    lam = op.eigenvalues
    return cov / (lam[:, None] + lam[None, :])


def exact_ou_transition(x, t: float, op: SpectralOperator, sig: SigmaOperator, seed: int,
                        path_index: int = 0) -> np.ndarray:
    """Exact sample of X(t) for dX = AX dt + sigma dW started at x (batched over x)."""
    x = np.asarray(x, dtype=float)
    lam = op.eigenvalues
    rate = lam[:, None] + lam[None, :]
    cov = (sig.matrix @ sig.matrix.T) * (-np.expm1(-rate * t)) / rate
    chol = np.linalg.cholesky(0.5 * (cov + cov.T) + 1e-300 * np.eye(op.dim))
    gen = rng_for_path(seed, path_index, 'auxiliary')
    z = gen.standard_normal(x.shape)
    return op.semigroup(t, x) + z @ chol.T


def lyapunov_stationary_cov(F, S) -> np.ndarray:
    """
    Solve F C + C F* + S S* = 0 by the vectorised (Kronecker) linear system.

    Raises:
        OracleError: F is not Hurwitz or the solution is not SPD
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    d = F.shape[0]
    if F.shape != (d, d) or S.shape[0] != d:
        raise OracleError(f"incompatible shapes F {F.shape}, S {S.shape}")
    spectrum = np.linalg.eigvals(F)
    if np.max(spectrum.real) >= 0:
        raise OracleError(f"drift matrix is not Hurwitz (max real part {np.max(spectrum.real):.3e})")
    eye = np.eye(d)
    system = np.kron(eye, F) + np.kron(F, eye)
    rhs = -(S @ S.T).reshape(-1, order='F')
    cov = np.linalg.solve(system, rhs).reshape(d, d, order='F')
    cov = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(cov)[0] <= 0:
        raise OracleError("Lyapunov solution is not positive definite")
    return cov


def lyapunov_residual(F, S, C) -> float:
    F, S, C = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (F, S, C))
    return float(np.linalg.norm(F @ C + C @ F.T + S @ S.T))


def linear_phase_system(op: SpectralOperator, B, drift_matrix, sig: SigmaOperator):
    """
    (F, S) of the linear kinetic system dX = BY dt, dY = (AY + M (X, Y)) dt + sigma dW,
    with M of shape (n, nx + n).
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    M = np.atleast_2d(np.asarray(drift_matrix, dtype=float))
    nx, n = B.shape
    F = np.zeros((nx + n, nx + n))
    F[:nx, nx:] = B
    F[nx:, :] = M
    F[nx:, nx:] += op.matrix()
    S = np.zeros((nx + n, n))
    S[nx:, :] = sig.matrix
    return F, S


def gibbs_drift_matrix(drift: GibbsGradientDrift) -> np.ndarray:
    """Matrix of b(x, y) = A^{-1} grad V(x) when V is quadratic (delta = 0)."""
    if drift.delta != 0.0:
        raise OracleError("the Gibbs drift is linear only for delta = 0")
    n = drift.in_dim
    M = np.zeros((n, 2 * n))
    M[:, :n] = np.diag(-drift.a / drift.op.eigenvalues)
    return M


class LogDensityCandidate:
    """Candidate stationary log-density G(x, y) on the phase space."""
    label = "candidate"

    def grad(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_y(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class GibbsCandidate(LogDensityCandidate):
    """G = -a V(x) + c <Ay, y> for the Gibbs-gradient drift."""

    def __init__(self, drift: GibbsGradientDrift, a: float, c: float, label: str = ""):
        self.drift = drift
        self.a = float(a)
        self.c = float(c)
        self.label = label or f"-{a:g}V(x)+{c:g}<Ay,y>"

    def value(self, z):
        n = self.drift.in_dim
        z = np.asarray(z, dtype=float)
        x, y = z[..., :n], z[..., n:]
        return -self.a * self.drift.potential(x) + self.c * np.sum(self.drift.op.apply(y) * y, axis=-1)

    def grad(self, z):
        n = self.drift.in_dim
        z = np.asarray(z, dtype=float)
        x, y = z[..., :n], z[..., n:]
        return np.concatenate([-self.a * self.drift.grad_potential(x), 2.0 * self.c * self.drift.op.apply(y)], axis=-1)

    def hess_y(self, z):
        n = self.drift.in_dim
        return np.broadcast_to(2.0 * self.c * self.drift.op.matrix(), np.shape(z)[:-1] + (n, n))


class GaussianCandidate(LogDensityCandidate):
    """G = -1/2 z^T C^{-1} z."""

    def __init__(self, covariance, ny: int, label: str = "gaussian"):
        self.precision = np.linalg.inv(np.atleast_2d(np.asarray(covariance, dtype=float)))
        self.ny = int(ny)
        self.label = label

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return -0.5 * np.einsum('...i,ij,...j->...', z, self.precision, z)

    def grad(self, z):
        return -np.asarray(z, dtype=float) @ self.precision.T

    def hess_y(self, z):
        block = -self.precision[-self.ny:, -self.ny:]
        return np.broadcast_to(block, np.shape(z)[:-1] + (self.ny, self.ny))


@dataclass
class KineticGenerator:
    """L = <By, grad_x> + <Ay + b(x, y), grad_y> + 1/2 tr(sigma sigma* D_y^2)."""
    op: SpectralOperator
    B: np.ndarray
    drift: DriftModel
    sig: SigmaOperator

    @property
    def nx(self) -> int:
        return int(np.atleast_2d(self.B).shape[0])

    def drift_field(self, z):
        nx = self.nx
        y = z[..., nx:]
        return np.concatenate([y @ np.atleast_2d(self.B).T, self.op.apply(y) + self.drift.eval(z)], axis=-1)

    def divergence(self, z):
        nx, n = self.nx, self.op.dim
        div = np.full(z.shape[:-1], -float(np.sum(self.op.eigenvalues)))
        for i in range(n):
            e = np.zeros(nx + n)
            e[nx + i] = 1.0
            div = div + self.drift.dderiv(z, e)[..., i]
        return div


def fp_residual(candidate: LogDensityCandidate, generator: KineticGenerator, half_width: float = 3.0,
                points_per_axis: int = 21, return_grid: bool = False):
    """
    max over a grid of |L* e^G| / e^G, the stationary Fokker-Planck residual
    of the candidate density, computed from analytic derivatives:

        -div(F) - F . grad G + 1/2 sum_ij Sigma_ij (d_ij G + d_i G d_j G)   (y-block)
    """
    nx, n = generator.nx, generator.op.dim
    if nx > 2 or n > 2:
        raise ConfigError("Fokker-Planck residual grids support at most 2 dimensions per block", field="oracle")
    axis = np.linspace(-half_width, half_width, points_per_axis)
    mesh = np.meshgrid(*([axis] * (nx + n)), indexing='ij')
    z = np.stack([m.reshape(-1) for m in mesh], axis=-1)

    field_ = generator.drift_field(z)
    grad = candidate.grad(z)
    gy = grad[..., nx:]
    hy = candidate.hess_y(z)
    diff = generator.sig.matrix @ generator.sig.matrix.T
    second = 0.5 * np.einsum('ij,...ij->...', diff, hy + gy[..., :, None] * gy[..., None, :])
    residual = -generator.divergence(z) - np.sum(field_ * grad, axis=-1) + second

    h = axis[1] - axis[0] if points_per_axis > 1 else half_width
    peclet = float(np.max(np.abs(field_)) * h / max(np.min(np.diag(diff)), 1e-300))
    if peclet > 2.0:
        logger.warning(f"Fokker-Planck grid Peclet number {peclet:.2f} > 2; grid may be too coarse")
    worst = float(np.max(np.abs(residual)))
    if return_grid:
        return worst, z, residual
    return worst


@dataclass
class GibbsReference:
    """
    Exact sampler for exp(-2V(x) + <Ay, y>): y ~ N(0, -(2A)^{-1}) and x by
    rejection from the Gaussian envelope N(0, 1/(2 a_i)) per coordinate.
    """
    drift: GibbsGradientDrift

    def __post_init__(self):
        if np.any(self.drift.a <= 0):
            raise OracleError("Gibbs reference needs a_i > 0")

    def sample(self, count: int, seed: int) -> np.ndarray:
        drift = self.drift
        n = drift.in_dim
        gen = rng_for_path(seed, 0, 'auxiliary')
        x = np.empty((count, n))
        sd = 1.0 / np.sqrt(2.0 * drift.a)
        d = drift.delta
        for i in range(n):
            filled = 0
            while filled < count:
                want = count - filled
                cand = sd[i] * gen.standard_normal(2 * want + 16)
                accept = gen.random(cand.shape[0]) < np.exp(-2.0 * d * np.cos(cand) - 2.0 * abs(d))
                keep = cand[accept][:want]
                x[filled:filled + keep.shape[0], i] = keep
                filled += keep.shape[0]
        y = gen.standard_normal((count, n)) / np.sqrt(2.0 * drift.op.eigenvalues)
        return np.concatenate([x, y], axis=-1)


def side_condition_integral(op: SpectralOperator, Q) -> float:
    """int_0^1 ||e^{tA} A^{-1} Q|| dt (the quadratic-potential example asks for < 1)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    lam = op.eigenvalues

    def integrand(t):
        return np.linalg.norm((np.exp(-lam * t) / -lam)[:, None] * Q, 2)

    value, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10)
    return float(value)


def evaluate_reference_candidates(op: SpectralOperator, drift: GibbsGradientDrift, sig: Optional[SigmaOperator] = None,
                                  points_per_axis: int = 21, half_width: float = 3.0) -> Dict[str, Any]:
    """
    Decide the quoted stationary densities of the kinetic Gibbs examples.

    Compares the quoted density exp(-V + (lambda/2)<Ay,y>) with the derived
    exp(-2V + <Ay,y>) through the Fokker-Planck residual, and, for quadratic
    V, the quoted product Gaussian N(Q^{-1}) x N(-A^{-1}) with the Lyapunov
    covariance.
    """
    n = op.dim
    sig = sig or SigmaOperator.identity(n)
    generator = KineticGenerator(op=op, B=np.eye(n), drift=PositionDrift(drift), sig=sig)
    lam = op.lambda_min
    quoted = GibbsCandidate(drift, a=1.0, c=0.5 * lam, label="quoted: -V(x)+(lambda/2)<Ay,y>")
    derived = GibbsCandidate(drift, a=2.0, c=1.0, label="derived: -2V(x)+<Ay,y>")
    report: Dict[str, Any] = {
        'fp_residual': {
            quoted.label: fp_residual(quoted, generator, half_width, points_per_axis),
            derived.label: fp_residual(derived, generator, half_width, points_per_axis),
        },
    }
    if drift.delta == 0.0:
        F, S = linear_phase_system(op, np.eye(n), gibbs_drift_matrix(drift), sig)
        cov = lyapunov_stationary_cov(F, S)
        Q = np.diag(drift.a)
        claimed = linalg.block_diag(np.linalg.inv(Q), np.diag(1.0 / op.eigenvalues))
        gauss = GaussianCandidate(cov, ny=n, label="lyapunov gaussian")
        report['lyapunov'] = {
            'covariance': cov.tolist(),
            'residual': lyapunov_residual(F, S, cov),
            'fp_residual_of_lyapunov_gaussian': fp_residual(gauss, generator, half_width, points_per_axis),
            'quoted_covariance': claimed.tolist(),
            'quoted_relative_error': float(np.linalg.norm(claimed - cov) / np.linalg.norm(cov)),
            'quoted_to_lyapunov_ratio': (np.diag(claimed) / np.diag(cov)).tolist(),
            'side_condition_integral': side_condition_integral(op, Q),
        }
        if report['lyapunov']['side_condition_integral'] >= 1.0:
            logger.warning("Side condition int_0^1 ||e^{tA} A^{-1} Q|| dt < 1 is violated")
    residuals = report['fp_residual']
    report['verdict'] = {
        'quoted_density_stationary': residuals[quoted.label] < 1e-8,
        'derived_density_stationary': residuals[derived.label] < 1e-8,
    }
    return report


@dataclass
class CheckResult:
    """Paired-difference estimate with its z-score."""
    mean: float
    se: float
    count: int
    z: float

    @classmethod
    def from_statistic(cls, stat: Statistic) -> 'CheckResult':
        if stat.se == 0.0:
            z = 0.0 if stat.mean == 0.0 else math.copysign(math.inf, stat.mean)
        else:
            z = stat.mean / stat.se
        return cls(mean=stat.mean, se=stat.se, count=stat.count, z=z)

    def as_dict(self) -> dict:
        return {'mean': self.mean, 'se': self.se, 'count': self.count, 'z': self.z}


def _eval_fn(fn: CylinderFunction, states, model: ModelBinding, grid: SimGrid):
    return fn.eval(states, grid.dt if model.kind == 'delay' else None)


def stationarity_check(samples, model: ModelBinding, t: float, f: CylinderFunction, seed: int = 0,
                       steps: Optional[int] = None, chunk_paths: int = 256, workers: Optional[int] = None) -> CheckResult:
    """Paired estimate of mean[f(x) - f(X^x(t))] over the samples with fresh noise."""
    samples = np.asarray(samples, dtype=float)
    grid = SimGrid(t, steps or max(1, int(round(t / 1e-2))))
    total = samples.shape[0]

    def task(start, stop):
        noise = draw_noise_batch(seed, start, stop - start, grid.steps, model.noise_dim, grid.dt)
        x0 = samples[start:stop]
        path = model.run(x0, grid, noise, keep_path=False)
        diff = _eval_fn(f, x0, model, grid) - _eval_fn(f, model.final_state(path), model, grid)
        return PartialBuffer(start, stop, {'diff': np.broadcast_to(diff, (stop - start,))})

    reduced = run_chunks(task, total, chunk_paths, workers)
    return CheckResult.from_statistic(reduced['diff'])


@dataclass
class MCReport:
    """Paired Monte Carlo comparison of two per-path columns."""
    label: str
    lhs: Statistic
    rhs: Statistic
    paired: Statistic
    z: float
    dt: float
    passed: bool
    richardson_mean: Optional[float] = None
    bias_allowance: float = 0.0

    def as_dict(self) -> dict:
        return {
            'label': self.label,
            'lhs': self.lhs.as_dict(),
            'rhs': self.rhs.as_dict(),
            'paired': self.paired.as_dict(),
            'z': self.z,
            'dt': self.dt,
            'richardson_paired_mean': self.richardson_mean,
            'bias_allowance': self.bias_allowance,
            'pass': self.passed,
        }


def paired_report(label: str, reduced, dt: float, z_max: float = 3.0, kappa: float = 0.0,
                  richardson_mean: Optional[float] = None) -> MCReport:
    """pass iff |paired mean| <= z_max SE + kappa dt."""
    lhs, rhs = reduced[f"lhs:{label}"], reduced[f"rhs:{label}"]
    paired = reduced.paired(f"lhs:{label}", f"rhs:{label}")
    check = CheckResult.from_statistic(paired)
    allowance = kappa * dt
    passed = abs(paired.mean) <= z_max * paired.se + allowance
    return MCReport(label=label, lhs=lhs, rhs=rhs, paired=paired, z=check.z, dt=dt, passed=passed,
                    richardson_mean=richardson_mean, bias_allowance=allowance)


def _semilinear_spec(samples, model: ModelBinding, T: float, k: EigenDirection, functions, steps: int,
                     refine: int = 1) -> PairedSpec:
    if model.kind != 'semilinear':
        raise ConfigError("closability and Fomin checks run on semilinear models", field="model")
    grid = SimGrid(T, steps)
    samples = np.asarray(samples, dtype=float)
    return PairedSpec(model=model, grid=grid,
                      weight_factory=lambda: SemilinearWeight(k, model.drift, model.sig, T),
                      direction=k.vector, functions=list(functions),
                      initial=lambda start, stop: samples[start:stop], lhs_at='initial', refine=refine)


def closability_chain_check(samples, model: ModelBinding, T: float, k: EigenDirection, f: CylinderFunction,
                            steps: int = 1024, seed: int = 0, z_max: float = 3.0, kappa: float = 0.0,
                            chunk_paths: int = 256, workers: Optional[int] = None) -> MCReport:
    """Paired MC of d_k f(x) - f(X^x(T)) M_{x,T} with x drawn from the samples."""
    spec = _semilinear_spec(samples, model, T, k, [f], steps)
    reduced = run_chunks(paired_task(spec, seed), np.asarray(samples).shape[0], chunk_paths, workers)
    return paired_report(f.label, reduced, spec.grid.dt, z_max, kappa)


def fomin_constant(A: SpectralOperator, sig: SigmaOperator, lip: float) -> float:
    """C = ||sigma^{-1}|| sqrt(alpha) / (e - 1) * (1 + (e - 1) ||db|| / lambda_1), alpha = sum 1/lambda_i."""
    e1 = math.e - 1.0
    return sig.inverse_norm() * math.sqrt(A.trace_inverse()) / e1 * (1.0 + e1 / A.lambda_min * lip)


def fomin_sum_constant(A: SpectralOperator, sig: SigmaOperator, lip: float) -> float:
    """(sum_i ||sigma^{-1}||^2 / (lambda_i (e-1)^2) (1 + (e-1) ||db|| / lambda_i)^2)^{1/2} <= C."""
    e1 = math.e - 1.0
    lam = A.eigenvalues
    terms = sig.inverse_norm() ** 2 / (lam * e1 ** 2) * (1.0 + e1 * lip / lam) ** 2
    return float(math.sqrt(np.sum(terms)))


def fomin_eigen_bound(A: SpectralOperator, sig: SigmaOperator, lip: float, i: int,
                      horizons: Optional[Sequence[float]] = None) -> float:
    """
    inf_T lam/(e^{lam T}-1) (int_0^T (||sigma^{-1}|| (1 + g(t) ||db||))^2 dt)^{1/2}
    for the eigen-direction e_i (lam = -lambda_i); multiply by |k| ||f||.
    """
    lam = -float(A.eigenvalues[i])
    inv = sig.inverse_norm()
    if horizons is None:
        horizons = np.geomspace(1e-2, 1e2, 81) / abs(lam)
    best = math.inf
    for T in horizons:
        value, _ = integrate.quad(lambda t: (inv * (1.0 + float(growth_factor(lam, t, T)) * lip)) ** 2,
                                  0.0, T, epsabs=1e-12, epsrel=1e-10)
        best = min(best, abs(normalisation(lam, T)) * math.sqrt(value))
    return best


@dataclass
class FominReport:
    """Fomin derivative check for one (k, f)."""
    direction: List[float]
    label: str
    estimate: float
    se: float
    l2_norm: float
    constant: float
    bound: float
    sum_bound: float
    weight_bound: float
    weight_second_moment: float
    passed_constant: bool
    passed_weight: bool

    @property
    def passed(self) -> bool:
        # the closed-constant bound is reported only; it is not a gate
        return self.passed_weight

    def as_dict(self) -> dict:
        return {
            'direction': self.direction, 'label': self.label, 'estimate': self.estimate, 'se': self.se,
            'l2_norm': self.l2_norm, 'constant': self.constant, 'bound': self.bound,
            'sum_bound': self.sum_bound, 'weight_bound': self.weight_bound,
            'weight_second_moment': self.weight_second_moment,
            'pass_constant': self.passed_constant, 'pass_weight': self.passed_weight, 'pass': self.passed,
        }


def fomin_check(samples, model: ModelBinding, k, f: CylinderFunction, T: Optional[float] = None,
                steps: int = 256, seed: int = 0, z_max: float = 3.0, chunk_paths: int = 256,
                workers: Optional[int] = None) -> FominReport:
    """
    |mu(d_k f)| against C |Ak| ||f||_{L2(mu)} and against the weight bound
    (E[M^2] mu(f^2))^{1/2}; passes iff the estimate is within z_max SE of the
    weight bound. Both comparisons are reported.
    """
    k_vec = np.asarray(k.vector if isinstance(k, EigenDirection) else k, dtype=float)
    direction = k if isinstance(k, EigenDirection) else EigenDirection(k_vec, model.op)
    lip = model.drift.lipschitz_const
    if lip is None:
        raise ConfigError("Fomin bounds need a Lipschitz drift", field="drift")
    T = T if T is not None else 1.0 / model.op.lambda_min
    spec = _semilinear_spec(samples, model, T, direction, [f], steps)
    reduced = run_chunks(paired_task(spec, seed), np.asarray(samples).shape[0], chunk_paths, workers)

    lhs = reduced[f"lhs:{f.label}"]
    f2 = reduced[f"f2:{f.label}"]
    m2 = summarize(reduced.columns['weight'] ** 2)
    l2 = math.sqrt(f2.mean)
    a_k = float(np.linalg.norm(model.op.apply(k_vec)))
    constant = fomin_constant(model.op, model.sig, lip)
    bound = constant * a_k * l2
    sum_bound = fomin_sum_constant(model.op, model.sig, lip) * a_k * l2
    weight_bound = math.sqrt((m2.mean + z_max * m2.se) * (f2.mean + z_max * f2.se))
    estimate = abs(lhs.mean)
    return FominReport(direction=k_vec.tolist(), label=f.label, estimate=estimate, se=lhs.se, l2_norm=l2,
                       constant=constant, bound=bound, sum_bound=sum_bound, weight_bound=weight_bound,
                       weight_second_moment=m2.mean,
                       passed_constant=estimate <= bound + z_max * lhs.se,
                       passed_weight=estimate <= weight_bound + z_max * lhs.se)


def form_energy(samples, f: CylinderFunction, g: CylinderFunction, k, dt: Optional[float] = None) -> Statistic:
    """MC estimate of mu((d_k f)(d_k g))."""
    samples = np.asarray(samples, dtype=float)
    k = np.asarray(k, dtype=float)
    values = f.dderiv(samples, k, dt) * g.dderiv(samples, k, dt)
    return summarize(np.broadcast_to(values, samples.shape[:1]))


@dataclass
class ContractionReport:
    rate: float
    kappa: float
    ratios: np.ndarray
    first_violation: Optional[int]
    worst_ratio: float

    @property
    def passed(self) -> bool:
        return self.first_violation is None

    def as_dict(self) -> dict:
        return {'rate': self.rate, 'kappa': self.kappa, 'first_violation': self.first_violation,
                'worst_ratio': self.worst_ratio, 'pass': self.passed}


def contraction_check(x0, y0, model: ModelBinding, grid: SimGrid, noise: NoisePath,
                      c1: Optional[float] = None, c2: Optional[float] = None, kappa: float = 1.0) -> ContractionReport:
    """
    Synchronous coupling: |X^x(t_j) - X^y(t_j)| <= e^{-(c1+c2) t_j} |x0 - y0| (1 + kappa dt)
    at every node, both paths driven by the same noise.
    """
    if model.kind != 'semilinear':
        raise ConfigError("contraction check runs on semilinear models", field="model")
    d1, d2 = dissipativity_constants(model)
    c1 = d1 if c1 is None else c1
    c2 = d2 if c2 is None else c2
    if c2 is None:
        raise ConfigError("drift has no known dissipativity constant c2", field="contraction")
    px = simulate_semilinear(x0, model.op, model.sig, model.drift, grid, noise)
    py = simulate_semilinear(y0, model.op, model.sig, model.drift, grid, noise)
    gap = np.linalg.norm(px.states - py.states, axis=-1)
    start = float(np.linalg.norm(np.asarray(x0, dtype=float) - np.asarray(y0, dtype=float)))
    envelope = np.exp(-(c1 + c2) * grid.times) * start * (1.0 + kappa * grid.dt)
    with np.errstate(divide='ignore', invalid='ignore'):
        ratios = np.where(envelope > 0, gap / envelope, np.where(gap > 0, np.inf, 0.0))
    bad = np.flatnonzero(gap > envelope * (1.0 + 1e-12) + 1e-300)
    first = int(bad[0]) if bad.size else None
    if first is not None:
        logger.warning(f"Contraction violated first at node {first} (t={grid.times[first]:.4g})")
    return ContractionReport(rate=c1 + c2, kappa=kappa, ratios=ratios, first_violation=first,
                             worst_ratio=float(np.max(ratios)))


def mollifier_convergence(model: ModelBinding, k, eps_values: Sequence[float], grid: SimGrid, x0,
                          paths: int, seed: int, nodes: int = 21) -> Dict[float, float]:
    """E|X_eps(T) - X(T)|^2 for the directionally mollified drift, shared noise."""
    noise = draw_noise_batch(seed, 0, paths, grid.steps, model.noise_dim, grid.dt)
    base = simulate_semilinear(x0, model.op, model.sig, model.drift, grid, noise, keep_path=False)
    result = {}
    for eps in eps_values:
        smooth = mollify_directional(model.drift, k, eps, nodes)
        path = simulate_semilinear(x0, model.op, model.sig, smooth, grid, noise, keep_path=False)
        result[float(eps)] = float(np.mean(np.sum((path.final - base.final) ** 2, axis=-1)))
    return result
