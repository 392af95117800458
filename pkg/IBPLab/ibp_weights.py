"""
IBPLab IBP Weights Module
Explicit integration-by-parts weights and their deterministic ingredients:

- semilinear: M_{x,T} = lam/(e^{lam T}-1) int <sigma^{-1}(k - g(t) d_k b(X)), dW>
- Hamiltonian: (phi, psi) pair, h', h~, Theta and the weight
  int <sigma^{-1}(h'(t) - d_{Theta(t)} b(Z)), dW>
- delay: Gamma, the mild perturbation D and the weight
  int <sigma^{-1}(Gamma(t) - d_{D_t} b(X_t)), dW>
- the Girsanov density R_eps of a shifted run.

Weights are Ito sums at left endpoints against the stored increments. Each
weight has an accumulator form (a simulation hook) so it can be built while
the path is simulated; the path-based functions replay a stored path
through the same accumulator. sigma^{-1} is used throughout; it coincides
with (sigma sigma*)^{-1/2} whenever sigma is symmetric positive definite.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .drift_models import DriftModel, SegmentDriftModel, _sup_sigma_norm_over_box, as_segment_drift
from .errors import ConfigError, ConstraintError, DimensionError
from .simulate import DelayPath, HamPath, PathSample, SimGrid, delay_lag_steps
from .spectral_core import SigmaOperator, SpectralOperator
from .utils.logger import get_logger

logger = get_logger("ibp_weights")

ZERO_LAMBDA_CUTOFF = 1e-12
SERIES_CUTOFF = 1e-6
PARABOLA_SERIES_CUTOFF = 0.2
PH_TOLERANCE = 1e-8
EXPONENT_CLAMP = 700.0


def growth_factor(lam: float, t, horizon: Optional[float] = None):
    """
    g(t) = (e^{lam t} - 1) / lam, with g(t) = t for lam = 0.

    The zero branch is taken when |lam| T < 1e-12 and the series
    t + lam t^2 / 2 below |lam| T < 1e-6.
    """
    t = np.asarray(t, dtype=float)
    scale = abs(lam) * (horizon if horizon is not None else float(np.max(np.abs(t)) if t.size else 0.0))
    if scale < ZERO_LAMBDA_CUTOFF:
        return t.copy()
    if scale < SERIES_CUTOFF:
        return t + 0.5 * lam * t ** 2
    return np.expm1(lam * t) / lam


def normalisation(lam: float, T: float) -> float:
    """lam / (e^{lam T} - 1) = 1 / g(T)."""
    return float(1.0 / growth_factor(lam, T, T))


@dataclass(frozen=True)
class EigenDirection:
    """
    Direction k = sum_i c_i e_i in H_{A,n}; each active e_i has A e_i = -lambda_i e_i.
    """
    coefficients: np.ndarray
    op: SpectralOperator

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coeffs.shape[0] != self.op.dim:
            raise DimensionError(f"direction has {coeffs.shape[0]} coefficients, operator has dim {self.op.dim}")
        if not np.any(coeffs != 0.0):
            raise ConstraintError("direction must have at least one nonzero coefficient")
        object.__setattr__(self, 'coefficients', coeffs)

    @classmethod
    def basis(cls, op: SpectralOperator, i: int, scale: float = 1.0) -> 'EigenDirection':
        coeffs = np.zeros(op.dim)
        coeffs[i] = scale
        return cls(coeffs, op)

    @property
    def vector(self) -> np.ndarray:
        return self.coefficients

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)

    def eigen_pairs(self):
        """(index, coefficient, lam) with lam the eigenvalue of A (negative)."""
        for i in self.active:
            yield int(i), float(self.coefficients[i]), -float(self.op.eigenvalues[i])

    def scaled(self, factor: float) -> 'EigenDirection':
        return EigenDirection(factor * self.coefficients, self.op)


def _unit(n: int, i: int) -> np.ndarray:
    e = np.zeros(n)
    e[i] = 1.0
    return e


class ItoAccumulator:
    """
    Left-point Ito sum sum_j <sigma^{-1} u_j, dW_j> where u_j is produced by
    ``integrand(j, t_j, state_j)``. Instances are simulation hooks.
    """

    def __init__(self, sig: SigmaOperator):
        self.sig = sig
        self.value = None
        self.quadratic = None

    def integrand(self, j: int, t: float, state: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, j: int, t: float, state: np.ndarray, dW: np.ndarray):
        pulled = self.sig.apply_inverse(self.integrand(j, t, state))
        term = np.sum(pulled * dW, axis=-1)
        sq = np.sum(pulled * pulled, axis=-1)
        if self.value is None:
            self.value = np.zeros(np.shape(term))
            self.quadratic = np.zeros(np.shape(term))
        self.value = self.value + term
        self.quadratic = self.quadratic + sq

    def result(self):
        return 0.0 if self.value is None else self.value


class SemilinearWeight(ItoAccumulator):
    """Accumulator for M_{x,T}, summed over the active eigen-components of k."""

    def __init__(self, k: EigenDirection, b: DriftModel, sig: SigmaOperator, T: float):
        super().__init__(sig)
        self.k = k
        self.b = b
        self.T = float(T)
        n = k.op.dim
        self._terms = []
        for i, coeff, lam in k.eigen_pairs():
            self._terms.append((coeff * normalisation(lam, self.T), lam, _unit(n, i)))

    def integrand(self, j, t, state):
        total = None
        for scale, lam, e_i in self._terms:
            g = float(growth_factor(lam, t, self.T))
            piece = scale * (e_i - g * self.b.dderiv(state, e_i))
            total = piece if total is None else total + piece
        return total


def _replay(accumulator: ItoAccumulator, states: np.ndarray, increments: np.ndarray, times: np.ndarray):
    if states is None:
        raise ConfigError("weight needs the stored path (simulate with keep_path=True)")
    for j in range(increments.shape[-2]):
        accumulator(j, times[j], states[..., j, :], increments[..., j, :])
    return accumulator.result()


def semilinear_weight(path: PathSample, k: Union[EigenDirection, np.ndarray], b: DriftModel,
                      sig: SigmaOperator, T: float, op: Optional[SpectralOperator] = None):
    """M_{x,T} for the stored path; k = 0 gives 0."""
    if not isinstance(k, EigenDirection):
        vec = np.asarray(k, dtype=float)
        if not np.any(vec != 0.0):
            return np.zeros(path.noise.batch_shape) if path.noise.batch_shape else 0.0
        if op is None:
            raise ConfigError("a raw direction vector needs the spectral operator")
        k = EigenDirection(vec, op)
    if not np.isclose(path.grid.T, T):
        raise ConfigError(f"path horizon {path.grid.T} differs from weight horizon {T}")
    acc = SemilinearWeight(k, b, sig, T)
    return _replay(acc, path.states, path.noise.increments, path.grid.times)


def semilinear_shift_table(k: EigenDirection, grid: SimGrid) -> np.ndarray:
    """Constant shift s(t) = sum_i c_i lam_i/(e^{lam_i T}-1) e_i whose response at T is k."""
    vec = np.zeros(k.op.dim)
    for i, coeff, lam in k.eigen_pairs():
        vec[i] = coeff * normalisation(lam, grid.T)
    return np.broadcast_to(vec, (grid.steps + 1, k.op.dim)).copy()


def fh_bound(k: EigenDirection, b: DriftModel, sig: SigmaOperator, T: float) -> float:
    """
    Upper bound for E|M_{x,T}|^2:
    (lam/(e^{lam T}-1))^2 int_0^T sup_x ||sigma^{-1}(k - g(t) d_k b(x))||^2 dt,
    combined over eigen-components by Minkowski.
    """
    n = k.op.dim
    root_total = 0.0
    for i, coeff, lam in k.eigen_pairs():
        e_i = _unit(n, i)
        lo, hi = b.derivative_box(e_i)

        def sup_sq(t, lam=lam, e_i=e_i, lo=lo, hi=hi):
            g = float(growth_factor(lam, t, T))
            return _sup_sigma_norm_over_box(sig, e_i - g * hi, e_i - g * lo) ** 2

        integral, _ = integrate.quad(sup_sq, 0.0, T, epsabs=1e-12, epsrel=1e-10, limit=200)
        root_total += abs(coeff) * abs(normalisation(lam, T)) * np.sqrt(integral)
    return float(root_total ** 2)


@dataclass
class PhiPsi:
    """Pair (phi, psi) on [0, T] with analytic derivatives."""
    T: float
    theta1: float
    theta2: float
    phi: Callable[[float], float]
    psi: Callable[[float], float]
    dphi: Callable[[float], float]
    dpsi: Callable[[float], float]


def _weighted_parabola_integral(T: float, theta: float) -> float:
    """int_0^T s (T - s) e^{theta s} ds = [e^{x}(x - 2) + x + 2] / theta^3 with x = theta T."""
    x = theta * T
    if abs(x) < PARABOLA_SERIES_CUTOFF:
        # e^{x}(x - 2) + x + 2 = sum_{n>=3} (n - 2) x^n / n!
        total = math.fsum((n - 2) * x ** (n - 3) / math.factorial(n) for n in range(3, 13))
        return float(T ** 3 * total)
    return float((np.exp(x) * (x - 2.0) + x + 2.0) / theta ** 3)


def default_phi_psi(T: float, theta1: float, theta2: float) -> PhiPsi:
    """
    phi(t) = e^{theta1 T} t (T - t) / int_0^T s (T - s) e^{theta1 s} ds,
    psi(t) = e^{theta2 (T - t)} / T * (3 t^2 / T - 2 t).
    """
    if not T > 0:
        raise ConfigError(f"T must be > 0, got {T}", field="grid.T")
    scale = np.exp(theta1 * T) / _weighted_parabola_integral(T, theta1)

    def phi(t):
        return scale * t * (T - t)

    def dphi(t):
        return scale * (T - 2.0 * t)

    def psi(t):
        return np.exp(theta2 * (T - t)) / T * (3.0 * t ** 2 / T - 2.0 * t)

    def dpsi(t):
        return np.exp(theta2 * (T - t)) / T * (6.0 * t / T - 2.0) - theta2 * psi(t)

    return PhiPsi(T=float(T), theta1=float(theta1), theta2=float(theta2),
                  phi=phi, psi=psi, dphi=dphi, dpsi=dpsi)


def check_ph_constraints(pp: PhiPsi) -> np.ndarray:
    """
    Residuals [phi(0), phi(T), psi(0), psi(T) - 1, int e^{theta2 t} psi,
    int phi e^{theta1 t} / e^{theta1 T} - 1]. The last defect is taken
    relative to e^{theta1 T} so the tolerance does not scale with it.
    """
    T = pp.T
    psi_int, _ = integrate.quad(lambda t: np.exp(pp.theta2 * t) * pp.psi(t), 0.0, T,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
    psi_scale, _ = integrate.quad(lambda t: abs(np.exp(pp.theta2 * t) * pp.psi(t)), 0.0, T,
                                  epsabs=1e-12, epsrel=1e-12, limit=200)
    phi_int, _ = integrate.quad(lambda t: pp.phi(t) * np.exp(pp.theta1 * (t - T)), 0.0, T,
                                epsabs=1e-12, epsrel=1e-12, limit=200)
    return np.array([
        pp.phi(0.0),
        pp.phi(T),
        pp.psi(0.0),
        pp.psi(T) - 1.0,
        psi_int / max(1.0, psi_scale),
        phi_int - 1.0,
    ], dtype=float)


def _eigen_value_of(op_diag: np.ndarray, v: np.ndarray, label: str) -> float:
    """Rayleigh quotient of diagonal A on v, verified to be an eigen-relation."""
    norm2 = float(v @ v)
    if norm2 == 0.0:
        return 0.0
    Av = op_diag * v
    theta = float(Av @ v) / norm2
    defect = np.linalg.norm(Av - theta * v)
    if defect > 1e-10 * max(1.0, np.linalg.norm(Av)):
        raise ConstraintError(f"{label} is not an eigenvector of A (defect {defect:.3e})")
    return theta


@dataclass(frozen=True)
class HamDirection:
    """
    k = (k1, k2) with A k2 = theta2 k2 and A u1 = theta1 u1, u1 = B*(BB*)^{-1} k1.
    """
    k1: np.ndarray
    k2: np.ndarray
    B: np.ndarray
    op: SpectralOperator
    theta1: float = field(init=False)
    theta2: float = field(init=False)
    u1: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        k1 = np.asarray(self.k1, dtype=float).reshape(-1)
        k2 = np.asarray(self.k2, dtype=float).reshape(-1)
        if B.shape != (k1.shape[0], self.op.dim) or k2.shape[0] != self.op.dim:
            raise DimensionError(f"incompatible shapes B {B.shape}, k1 {k1.shape}, k2 {k2.shape}")
        gram = B @ B.T
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            raise ConstraintError("BB* must have trivial kernel")
        u1 = B.T @ np.linalg.solve(gram, k1)
        diag = self.op.spectrum
        object.__setattr__(self, 'B', B)
        object.__setattr__(self, 'k1', k1)
        object.__setattr__(self, 'k2', k2)
        object.__setattr__(self, 'u1', u1)
        object.__setattr__(self, 'theta1', _eigen_value_of(diag, u1, "B*(BB*)^{-1} k1"))
        object.__setattr__(self, 'theta2', _eigen_value_of(diag, k2, "k2"))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.k1, self.k2])


@dataclass
class HamIngredients:
    """h', h~ and Theta as callables, plus their tables on the simulation grid."""
    pp: PhiPsi
    direction: HamDirection
    hprime: Callable[[float], np.ndarray]
    htilde: Callable[[float], np.ndarray]
    theta: Callable[[float], tuple]
    grid: SimGrid
    hprime_table: np.ndarray
    htilde_table: np.ndarray
    theta_x_table: np.ndarray

    @property
    def theta_table(self) -> np.ndarray:
        return np.concatenate([self.theta_x_table, self.htilde_table], axis=-1)


def ham_h_theta(pp: PhiPsi, direction: HamDirection, grid: Optional[SimGrid] = None) -> HamIngredients:
    """
    h'(t) = phi'(t) e^{theta1(t-T)} u1 + psi'(t) e^{theta2(t-T)} k2,
    h~(t) = phi(t) e^{theta1(t-T)} u1 + psi(t) e^{theta2(t-T)} k2,
    Theta(t) = (int_0^t B h~(s) ds, h~(t)).
    """
    residuals = check_ph_constraints(pp)
    if np.max(np.abs(residuals)) > PH_TOLERANCE:
        raise ConstraintError(f"(phi, psi) violates the endpoint/integral constraints: {residuals}")
    if abs(pp.theta1 - direction.theta1) > 1e-10 * max(1.0, abs(direction.theta1)) and np.any(direction.u1):
        raise ConstraintError(f"phi was built for theta1={pp.theta1}, direction has {direction.theta1}")
    if abs(pp.theta2 - direction.theta2) > 1e-10 * max(1.0, abs(direction.theta2)) and np.any(direction.k2):
        raise ConstraintError(f"psi was built for theta2={pp.theta2}, direction has {direction.theta2}")
    grid = grid or SimGrid(pp.T, 1024)
    if not np.isclose(grid.T, pp.T):
        raise ConfigError(f"grid horizon {grid.T} differs from (phi, psi) horizon {pp.T}")

    T, th1, th2 = pp.T, pp.theta1, pp.theta2
    u1, k2, B = direction.u1, direction.k2, direction.B
    Bu1, Bk2 = B @ u1, B @ k2

    def hprime(t):
        return pp.dphi(t) * np.exp(th1 * (t - T)) * u1 + pp.dpsi(t) * np.exp(th2 * (t - T)) * k2

    def htilde(t):
        return pp.phi(t) * np.exp(th1 * (t - T)) * u1 + pp.psi(t) * np.exp(th2 * (t - T)) * k2

    def theta(t):
        a, _ = integrate.quad(lambda r: pp.phi(r) * np.exp(th1 * (r - T)), 0.0, t,
                              epsabs=1e-13, epsrel=1e-12, limit=200)
        c, _ = integrate.quad(lambda r: pp.psi(r) * np.exp(th2 * (r - T)), 0.0, t,
                              epsabs=1e-13, epsrel=1e-12, limit=200)
        return a * Bu1 + c * Bk2, htilde(t)

    times = grid.times
    hprime_tab = np.array([hprime(t) for t in times])
    htilde_tab = np.array([htilde(t) for t in times])
    theta_x_tab = integrate.cumulative_trapezoid(htilde_tab @ B.T, times, axis=0, initial=0.0)
    return HamIngredients(pp=pp, direction=direction, hprime=hprime, htilde=htilde, theta=theta,
                          grid=grid, hprime_table=hprime_tab, htilde_table=htilde_tab,
                          theta_x_table=theta_x_tab)


class HamiltonianWeight(ItoAccumulator):
    """Accumulator for int <sigma^{-1}(h'(t) - d_{Theta(t)} b(Z)), dW>."""

    def __init__(self, ingredients: HamIngredients, b: DriftModel, sig: SigmaOperator):
        super().__init__(sig)
        self.hprime_table = ingredients.hprime_table
        self.theta_table = ingredients.theta_table
        self.b = b

    def integrand(self, j, t, state):
        return self.hprime_table[j] - self.b.dderiv(state, self.theta_table[j])


def hamiltonian_weight(path: HamPath, ingredients: HamIngredients, b: DriftModel, sig: SigmaOperator,
                       T: Optional[float] = None):
    """Weight of the Hamiltonian IBP identity for a stored path."""
    if T is not None and not np.isclose(T, path.grid.T):
        raise ConfigError(f"path horizon {path.grid.T} differs from weight horizon {T}")
    if ingredients.hprime_table.shape[0] != path.grid.steps + 1:
        raise DimensionError("ingredient tables are not on the path grid")
    acc = HamiltonianWeight(ingredients, b, sig)
    return _replay(acc, path.states, path.noise.increments, path.grid.times)


PROFILES = {
    'constant': (lambda th, tau: np.ones_like(th), lambda th, tau: np.zeros_like(th)),
    'ramp': (lambda th, tau: (th + tau) / tau, lambda th, tau: np.ones_like(th) / tau),
    'cosine': (lambda th, tau: np.cos(np.pi * th / tau), lambda th, tau: -np.pi / tau * np.sin(np.pi * th / tau)),
    'exp': (lambda th, tau: np.exp(th), lambda th, tau: np.exp(th)),
}


@dataclass
class DelayDirection:
    """
    eta(theta) = profile(theta) * coefficients on [-tau, 0], with eta' known analytically.

    Tables are on the grid theta_i = (i - m) dt, i = 0..m.
    """
    coefficients: np.ndarray
    profile: str
    tau: float
    op: SpectralOperator

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if self.coefficients.shape[0] != self.op.dim:
            raise DimensionError("eta coefficients must match the operator dimension")
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown eta profile '{self.profile}' (known: {', '.join(PROFILES)})",
                              field="delay.eta.profile")
        if not self.tau > 0:
            raise ConfigError("tau must be > 0", field="delay.tau")

    def eta(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        return PROFILES[self.profile][0](th, self.tau)[..., None] * self.coefficients

    def eta_prime(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        return PROFILES[self.profile][1](th, self.tau)[..., None] * self.coefficients

    def tables(self, dt: float):
        """(thetas, eta, eta', A eta) on the segment grid."""
        m = delay_lag_steps(self.tau, dt)
        thetas = (np.arange(m + 1) - m) * dt
        eta = self.eta(thetas)
        return thetas, eta, self.eta_prime(thetas), self.op.apply(eta)

    def c1_norm(self, dt: float) -> float:
        """int_{-tau}^0 (|A eta|^2 + |eta'|^2) d theta."""
        thetas, _, deta, a_eta = self.tables(dt)
        integrand = np.sum(a_eta ** 2, axis=-1) + np.sum(deta ** 2, axis=-1)
        return float(integrate.trapezoid(integrand, thetas))


def _check_horizon(T: float, tau: float):
    if not T > tau:
        raise ConfigError(f"delay IBP needs T > tau, got T={T}, tau={tau}", field="grid.T")


def delay_gamma(direction: DelayDirection, A: SpectralOperator, T: float, tau: float) -> Callable[[float], np.ndarray]:
    """
    Gamma(s) = e^{(s+tau-T)A} eta(-tau) / (T - tau) on [0, T - tau],
    eta'(s - T) - A eta(s - T) on (T - tau, T].
    """
    _check_horizon(T, tau)
    eta_start = direction.eta(-tau)
    lam = A.eigenvalues

    def gamma(s):
        if s <= T - tau:
            # s + tau - T <= 0: the factor is e^{-lam (s + tau - T)} >= 1
            return np.exp(-lam * (s + tau - T)) * eta_start / (T - tau)
        theta = s - T
        return direction.eta_prime(theta) - A.apply(direction.eta(theta))

    return gamma


def delay_perturbation(direction: DelayDirection, A: SpectralOperator, T: float, tau: float) -> Callable[[float], np.ndarray]:
    """
    Mild perturbation D(t) = int_0^{t+} e^{(t-s)A} Gamma(s) ds:
    0 for t <= 0, (t/(T-tau)) e^{(t+tau-T)A} eta(-tau) on (0, T-tau], eta(t - T) on [T-tau, T].
    """
    _check_horizon(T, tau)
    eta_start = direction.eta(-tau)
    lam = A.eigenvalues
    n = A.dim

    def perturbation(t):
        if t <= 0.0:
            return np.zeros(n)
        if t <= T - tau:
            return t / (T - tau) * np.exp(-lam * (t + tau - T)) * eta_start
        return direction.eta(t - T)

    return perturbation


@dataclass
class DelayIngredients:
    """Gamma on [0, T] and D on [-tau, T] tabulated on the delay path grid."""
    direction: DelayDirection
    gamma: Callable[[float], np.ndarray]
    perturbation: Callable[[float], np.ndarray]
    grid: SimGrid
    m: int
    gamma_table: np.ndarray
    perturbation_table: np.ndarray
    theta_table: np.ndarray

    def perturbation_segment(self, j: int) -> np.ndarray:
        return self.perturbation_table[j:j + self.m + 1]

    def theta_discrepancy(self) -> float:
        """sup_t |Theta(t) - D(t)| over [0, T]."""
        diff = self.theta_table - self.perturbation_table[self.m:]
        return float(np.max(np.linalg.norm(diff, axis=-1)))


def delay_theta_integral(gamma_table: np.ndarray, grid: SimGrid) -> np.ndarray:
    """Theta(t) = int_0^{t v 0} Gamma(s) ds on [0, T] by cumulative trapezoid."""
    return integrate.cumulative_trapezoid(gamma_table, grid.times, axis=0, initial=0.0)


def delay_ingredients(direction: DelayDirection, A: SpectralOperator, grid: SimGrid) -> DelayIngredients:
    tau = direction.tau
    m = delay_lag_steps(tau, grid.dt)
    gamma = delay_gamma(direction, A, grid.T, tau)
    perturbation = delay_perturbation(direction, A, grid.T, tau)
    gamma_tab = np.array([gamma(t) for t in grid.times])
    hist_times = (np.arange(m + 1 + grid.steps) - m) * grid.dt
    pert_tab = np.array([perturbation(t) for t in hist_times])
    return DelayIngredients(direction=direction, gamma=gamma, perturbation=perturbation, grid=grid, m=m,
                            gamma_table=gamma_tab, perturbation_table=pert_tab,
                            theta_table=delay_theta_integral(gamma_tab, grid))


class DelayWeight(ItoAccumulator):
    """Accumulator for int <sigma^{-1}(Gamma(t) - d_{D_t} b(X_t)), dW>."""

    def __init__(self, ingredients: DelayIngredients, b, sig: SigmaOperator):
        super().__init__(sig)
        self.ingredients = ingredients
        self.b = as_segment_drift(b)

    def integrand(self, j, t, segment):
        ing = self.ingredients
        return ing.gamma_table[j] - self.b.dderiv(segment, ing.perturbation_segment(j))


def delay_weight(path: DelayPath, ingredients: DelayIngredients, b, sig: SigmaOperator,
                 T: Optional[float] = None):
    """Weight of the delay IBP identity for a stored path."""
    if T is not None and not np.isclose(T, path.grid.T):
        raise ConfigError(f"path horizon {path.grid.T} differs from weight horizon {T}")
    if ingredients.m != path.m or ingredients.grid.steps != path.grid.steps:
        raise DimensionError("delay ingredients are not on the path grid")
    acc = DelayWeight(ingredients, b, sig)
    for j in range(path.grid.steps):
        acc(j, path.grid.times[j], path.segment(j), path.noise.increments[..., j, :])
    return acc.result()


@dataclass
class GirsanovResult:
    density: np.ndarray
    exponent: np.ndarray
    overflow: bool


def girsanov_density(noise_increments: np.ndarray, xi, sig: SigmaOperator, grid: SimGrid,
                     quadrature: str = 'trapezoid') -> GirsanovResult:
    """
    R = exp[-int <sigma^{-1} xi, dW> - 1/2 int |sigma^{-1} xi|^2 ds].

    ``xi`` is a table of shape (..., steps + 1, n) or a callable of t. The Ito
    term is a left-point sum; the quadratic-variation term uses the
    trapezoid rule (``quadrature='left'`` uses left points instead).
    """
    if callable(xi):
        xi = np.array([np.asarray(xi(t), dtype=float) for t in grid.times])
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-2] != grid.steps + 1:
        raise DimensionError(f"xi table must have {grid.steps + 1} rows, got {xi.shape}")
    pulled = sig.apply_inverse(xi)
    ito = np.sum(pulled[..., :-1, :] * noise_increments, axis=(-2, -1))
    sq = np.sum(pulled ** 2, axis=-1)
    if quadrature == 'trapezoid':
        qv = integrate.trapezoid(sq, dx=grid.dt, axis=-1)
    elif quadrature == 'left':
        qv = np.sum(sq[..., :-1], axis=-1) * grid.dt
    else:
        raise ConfigError(f"unknown quadrature '{quadrature}'")
    exponent = -ito - 0.5 * qv
    overflow = bool(np.any(np.abs(exponent) > EXPONENT_CLAMP))
    if overflow:
        logger.warning(f"Girsanov exponent clamped to +/-{EXPONENT_CLAMP}")
    density = np.exp(np.clip(exponent, -EXPONENT_CLAMP, EXPONENT_CLAMP))
    return GirsanovResult(density=density, exponent=exponent, overflow=overflow)


def hamiltonian_shift_integrand(base: HamPath, shifted: HamPath, hprime_table: np.ndarray,
                                b: DriftModel, eps: float) -> np.ndarray:
    """xi_eps(t_j) = eps h'(t_j) + b(Z_j) - b(Z^eps_j)."""
    return eps * hprime_table + b.eval(base.states) - b.eval(shifted.states)


def delay_shift_integrand(base: DelayPath, shifted: DelayPath, gamma_table: np.ndarray, b,
                          eps: float) -> np.ndarray:
    """xi_eps(t_j) = eps Gamma(t_j) + b(X_{t_j}) - b(X^eps_{t_j})."""
    b = as_segment_drift(b)
    steps = base.grid.steps
    rows = []
    for j in range(steps + 1):
        rows.append(b.eval(base.segment(j)) - b.eval(shifted.segment(j)))
    diff = np.stack(rows, axis=-2)
    return eps * gamma_table + diff


def semilinear_shift_integrand(base: PathSample, shifted: PathSample, shift_table: np.ndarray,
                               b: DriftModel, eps: float) -> np.ndarray:
    """xi_eps(t_j) = eps s(t_j) + b(X_j) - b(X^eps_j) for a shifted semilinear run."""
    return eps * shift_table + b.eval(base.states) - b.eval(shifted.states)
