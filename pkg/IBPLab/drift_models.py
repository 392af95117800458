"""
IBPLab Drift Models Module
Registry of drift nonlinearities b with analytic directional derivatives,
sigma-norm bounds for sup_x ||d_k b(x)||_sigma, and the directional
Gaussian mollifier b_eps.

State-space drifts act on arrays of shape (..., in_dim) and return
(..., out_dim). Segment drifts act on delay segments of shape
(..., m + 1, n) where index 0 is theta = -tau and index m is theta = 0.
"""

import itertools
from typing import Any, Callable, Dict, Optional

import numpy as np

from .errors import ConfigError, DimensionError
from .spectral_core import SigmaOperator, SpectralOperator
from .utils.logger import get_logger

logger = get_logger("drift_models")

DEFAULT_HERMITE_NODES = 21
_MAX_VERTEX_DIM = 12


def _sup_sigma_norm_over_box(sig: SigmaOperator, lo: np.ndarray, hi: np.ndarray) -> float:
    """sup of ||v||_sigma over the coordinate box lo <= v <= hi.

    The sigma-norm is convex, so the supremum sits on a vertex. Diagonal
    sigma separates per coordinate; small dense cases enumerate vertices;
    larger ones fall back to the operator-norm bound.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    corner = np.maximum(np.abs(lo), np.abs(hi))
    if sig.is_diagonal:
        return float(np.linalg.norm(corner / np.abs(sig.diag)))
    if lo.shape[0] <= _MAX_VERTEX_DIM:
        best = 0.0
        for choice in itertools.product((0, 1), repeat=lo.shape[0]):
            vertex = np.where(np.asarray(choice, dtype=bool), hi, lo)
            best = max(best, float(sig.norm(vertex)))
        return best
    return float(np.linalg.norm(sig.sqrt_cov_inv, 2) * np.linalg.norm(corner))


class DriftModel:
    """
    Drift b: H -> H with an analytic directional derivative.

    Subclasses implement ``eval`` and ``dderiv``. ``derivative_box`` returns
    coordinatewise bounds (lo, hi) of d_k b(x) over all x; the sigma bound is
    derived from it unless a subclass knows better.
    """
    name = "drift"

    def __init__(self, in_dim: int, out_dim: Optional[int] = None,
                 lipschitz_const: Optional[float] = None, metadata: Optional[Dict[str, Any]] = None):
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim if out_dim is not None else in_dim)
        self.lipschitz_const = lipschitz_const
        self.metadata = dict(metadata or {})

    @property
    def dim(self) -> int:
        return self.in_dim

    def _check(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if arr.shape[-1] != self.in_dim:
            raise DimensionError(f"{self.name}: expected input dimension {self.in_dim}, got {arr.shape}")
        return arr

    def eval(self, x) -> np.ndarray:
        raise NotImplementedError

    def dderiv(self, x, k) -> np.ndarray:
        raise NotImplementedError

    def derivative_box(self, k) -> tuple:
        raise NotImplementedError

    def sigma_dderiv_bound(self, k, sig: SigmaOperator) -> float:
        """Upper bound for sup_x ||d_k b(x)||_sigma."""
        lo, hi = self.derivative_box(np.asarray(k, dtype=float))
        return _sup_sigma_norm_over_box(sig, lo, hi)

    def dissipativity(self) -> Optional[float]:
        """Largest c2 with <b(x)-b(y), x-y> <= -c2 |x-y|^2, if known."""
        return None

    def __call__(self, x) -> np.ndarray:
        return self.eval(x)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(in_dim={self.in_dim}, out_dim={self.out_dim})"


class ZeroDrift(DriftModel):
    name = "zero"

    def __init__(self, in_dim: int, out_dim: Optional[int] = None):
        super().__init__(in_dim, out_dim, lipschitz_const=0.0)

    def eval(self, x):
        x = self._check(x)
        return np.zeros(x.shape[:-1] + (self.out_dim,))

    def dderiv(self, x, k):
        x = self._check(x)
        shape = np.broadcast_shapes(x.shape[:-1], np.shape(k)[:-1])
        return np.zeros(shape + (self.out_dim,))

    def derivative_box(self, k):
        return np.zeros(self.out_dim), np.zeros(self.out_dim)

    def dissipativity(self):
        return 0.0


class LinearDrift(DriftModel):
    """b(x) = M x for a fixed (out_dim x in_dim) matrix M."""
    name = "linear"

    def __init__(self, matrix):
        mat = np.atleast_2d(np.asarray(matrix, dtype=float))
        super().__init__(mat.shape[1], mat.shape[0], lipschitz_const=float(np.linalg.norm(mat, 2)))
        self.matrix = mat

    def eval(self, x):
        return self._check(x) @ self.matrix.T

    def dderiv(self, x, k):
        x = self._check(x)
        out = np.asarray(k, dtype=float) @ self.matrix.T
        return np.broadcast_to(out, np.broadcast_shapes(x.shape[:-1], out.shape[:-1]) + (self.out_dim,)).copy()

    def derivative_box(self, k):
        value = self.matrix @ np.asarray(k, dtype=float)
        return value, value

    def sigma_dderiv_bound(self, k, sig):
        return float(sig.norm(self.matrix @ np.asarray(k, dtype=float)))

    def dissipativity(self):
        if self.in_dim != self.out_dim:
            return None
        sym = 0.5 * (self.matrix + self.matrix.T)
        return float(-np.linalg.eigvalsh(sym)[-1])


class SineDrift(DriftModel):
    """b_i(x) = c sin(x_i)."""
    name = "sine"

    def __init__(self, dim: int, c: float = 1.0):
        super().__init__(dim, lipschitz_const=abs(float(c)))
        self.c = float(c)

    def eval(self, x):
        return self.c * np.sin(self._check(x))

    def dderiv(self, x, k):
        return self.c * np.cos(self._check(x)) * np.asarray(k, dtype=float)

    def derivative_box(self, k):
        bound = np.abs(self.c * k)
        return -bound, bound

    def dissipativity(self):
        return -abs(self.c)


class GibbsGradientDrift(DriftModel):
    """
    b(x) = A^{-1} grad V(x) with V(x) = sum_i (a_i x_i^2 / 2 + delta cos x_i).

    This is the position drift of the Gibbs-type Hamiltonian example; it is
    equally usable as a semilinear drift.
    """
    name = "gibbs_gradient"

    def __init__(self, op: SpectralOperator, a, delta: float = 0.0):
        n = op.dim
        a = np.broadcast_to(np.asarray(a, dtype=float), (n,)).copy()
        self.op = op
        self.a = a
        self.delta = float(delta)
        slope = (np.abs(a) + abs(self.delta)) / op.eigenvalues
        super().__init__(n, lipschitz_const=float(np.max(slope)))

    def potential(self, x) -> np.ndarray:
        x = self._check(x)
        return np.sum(0.5 * self.a * x ** 2 + self.delta * np.cos(x), axis=-1)

    def grad_potential(self, x) -> np.ndarray:
        x = self._check(x)
        return self.a * x - self.delta * np.sin(x)

    def laplacian_potential(self, x) -> np.ndarray:
        x = self._check(x)
        return np.sum(self.a - self.delta * np.cos(x), axis=-1)

    def eval(self, x):
        return -self.grad_potential(x) / self.op.eigenvalues

    def dderiv(self, x, k):
        x = self._check(x)
        return -(self.a - self.delta * np.cos(x)) * np.asarray(k, dtype=float) / self.op.eigenvalues

    def derivative_box(self, k):
        k = np.asarray(k, dtype=float)
        ends = np.stack([-(self.a - self.delta) * k, -(self.a + self.delta) * k]) / self.op.eigenvalues
        return ends.min(axis=0), ends.max(axis=0)

    def dissipativity(self):
        return float(np.min((self.a - abs(self.delta)) / self.op.eigenvalues))


class PositionDrift(DriftModel):
    """Lift b(x) on H to b(x, y) = b(x) on the phase space H x H."""

    def __init__(self, base: DriftModel):
        super().__init__(2 * base.in_dim, base.out_dim, lipschitz_const=base.lipschitz_const,
                         metadata=base.metadata)
        self.base = base
        self.name = f"{base.name}@position"

    def eval(self, z):
        z = self._check(z)
        return self.base.eval(z[..., :self.base.in_dim])

    def dderiv(self, z, dz):
        z = self._check(z)
        dz = np.asarray(dz, dtype=float)
        return self.base.dderiv(z[..., :self.base.in_dim], dz[..., :self.base.in_dim])

    def derivative_box(self, dz):
        return self.base.derivative_box(np.asarray(dz, dtype=float)[:self.base.in_dim])

    def sigma_dderiv_bound(self, dz, sig):
        return self.base.sigma_dderiv_bound(np.asarray(dz, dtype=float)[:self.base.in_dim], sig)


class MollifiedDrift(DriftModel):
    """
    b_eps(x) = (2 pi eps)^{-1/2} int b(x + r k) exp(-r^2 / (2 eps)) dr,
    evaluated by Gauss-Hermite quadrature.

    The derivative along k falls on the Gaussian kernel, so only evaluations
    of b are needed; components of a direction orthogonal to k are averaged
    through the base model's own dderiv.
    """

    def __init__(self, base: DriftModel, k, eps: float, nodes: int = DEFAULT_HERMITE_NODES):
        if eps <= 0:
            raise ConfigError(f"mollifier eps must be > 0, got {eps}", field="drift.mollify.eps")
        if nodes < 3:
            raise ConfigError(f"mollifier needs at least 3 nodes, got {nodes}", field="drift.mollify.nodes")
        k = np.asarray(k, dtype=float)
        if k.shape != (base.in_dim,):
            raise DimensionError(f"mollifier direction must have dimension {base.in_dim}")
        super().__init__(base.in_dim, base.out_dim, lipschitz_const=base.lipschitz_const,
                         metadata={**base.metadata, 'mollified': {'eps': eps, 'nodes': nodes}})
        self.base = base
        self.k = k
        self.eps = float(eps)
        self.nodes = int(nodes)
        self.name = f"{base.name}~eps={eps:g}"
        u, w = np.polynomial.hermite.hermgauss(self.nodes)
        self._shifts = np.sqrt(2.0 * self.eps) * u
        self._weights = w / np.sqrt(np.pi)
        self._kernel_weights = self._weights * self._shifts / self.eps
        self._k_norm2 = float(k @ k)

    def _samples(self, x):
        x = self._check(x)
        points = x[..., None, :] + self._shifts[:, None] * self.k
        return self.base.eval(points)

    def eval(self, x):
        return np.einsum('...jn,j->...n', self._samples(x), self._weights)

    def dderiv(self, x, d):
        x = self._check(x)
        d = np.asarray(d, dtype=float)
        if self._k_norm2 == 0.0:
            coeff = np.zeros(d.shape[:-1])
        else:
            coeff = (d @ self.k) / self._k_norm2
        along = np.einsum('...jn,j->...n', self._samples(x), self._kernel_weights)
        result = coeff[..., None] * along
        rest = d - coeff[..., None] * self.k
        if np.any(rest != 0.0):
            points = x[..., None, :] + self._shifts[:, None] * self.k
            result = result + np.einsum('...jn,j->...n',
                                        self.base.dderiv(points, rest[..., None, :]), self._weights)
        return result

    def derivative_box(self, k):
        return self.base.derivative_box(k)

    def sigma_dderiv_bound(self, k, sig):
        # averaging cannot increase the supremum
        return self.base.sigma_dderiv_bound(k, sig)

    def dissipativity(self):
        return self.base.dissipativity()


class SegmentDriftModel:
    """
    Drift b acting on delay segments xi with values in H.

    Segments are arrays (..., m + 1, n) on the uniform grid over [-tau, 0].
    """
    name = "segment"

    def __init__(self, dim: int, lipschitz_const: Optional[float] = None,
                 metadata: Optional[Dict[str, Any]] = None):
        self.dim = int(dim)
        self.lipschitz_const = lipschitz_const
        self.metadata = dict(metadata or {})

    def _check(self, seg) -> np.ndarray:
        arr = np.asarray(seg, dtype=float)
        if arr.ndim < 2 or arr.shape[-1] != self.dim:
            raise DimensionError(f"{self.name}: expected segment (..., m+1, {self.dim}), got {arr.shape}")
        return arr

    def eval(self, seg) -> np.ndarray:
        raise NotImplementedError

    def dderiv(self, seg, dseg) -> np.ndarray:
        raise NotImplementedError

    def sigma_dderiv_bound(self, dseg, sig: SigmaOperator) -> float:
        raise NotImplementedError

    def __call__(self, seg):
        return self.eval(seg)


class DelayTerminalDrift(SegmentDriftModel):
    """b(xi) = F(xi(-tau)) with F_i(x) = c tanh(x_i)."""
    name = "delay_terminal"

    def __init__(self, dim: int, c: float, tau: float):
        super().__init__(dim, lipschitz_const=abs(float(c)), metadata={'tau': float(tau)})
        self.c = float(c)
        self.tau = float(tau)

    def eval(self, seg):
        return self.c * np.tanh(self._check(seg)[..., 0, :])

    def dderiv(self, seg, dseg):
        lagged = self._check(seg)[..., 0, :]
        return self.c / np.cosh(lagged) ** 2 * np.asarray(dseg, dtype=float)[..., 0, :]

    def sigma_dderiv_bound(self, dseg, sig):
        lagged = np.asarray(dseg, dtype=float)
        if lagged.ndim == 2:
            lagged = lagged[0]
        # sech^2 ranges over (0, 1]
        end = self.c * lagged
        return _sup_sigma_norm_over_box(sig, np.minimum(0.0, end), np.maximum(0.0, end))

    def dissipativity_pair(self, op: SpectralOperator) -> tuple:
        """(lambda1', lambda2') with <x, Ax + F(y) - F(y')> <= -lambda1'|x|^2 + lambda2'|y-y'|^2."""
        half = 0.5 * abs(self.c)
        return op.lambda_min - half, half


class CurrentStateDrift(SegmentDriftModel):
    """Segment drift that only reads the present value: b(xi) = base(xi(0))."""

    def __init__(self, base: DriftModel):
        super().__init__(base.in_dim, lipschitz_const=base.lipschitz_const, metadata=base.metadata)
        self.base = base
        self.name = f"{base.name}@present"

    def eval(self, seg):
        return self.base.eval(self._check(seg)[..., -1, :])

    def dderiv(self, seg, dseg):
        return self.base.dderiv(self._check(seg)[..., -1, :], np.asarray(dseg, dtype=float)[..., -1, :])

    def sigma_dderiv_bound(self, dseg, sig):
        present = np.asarray(dseg, dtype=float)
        if present.ndim == 2:
            present = present[-1]
        return self.base.sigma_dderiv_bound(present, sig)


def _build_zero(params, n, op):
    return ZeroDrift(n)


def _build_linear(params, n, op):
    if 'matrix' in params:
        mat = np.asarray(params['matrix'], dtype=float)
    elif 'diag' in params:
        mat = np.diag(np.broadcast_to(np.asarray(params['diag'], dtype=float), (n,)))
    else:
        mat = float(params.get('scale', 0.0)) * np.eye(n)
    if mat.ndim != 2 or mat.shape[0] != n:
        raise ConfigError(f"linear drift matrix must have {n} rows, got {mat.shape}", field="drift.params.matrix")
    return LinearDrift(mat)


def _build_sine(params, n, op):
    return SineDrift(n, c=float(params.get('c', 1.0)))


def _build_gibbs(params, n, op):
    if op is None:
        raise ConfigError("gibbs_gradient needs the spectral operator A", field="drift")
    if op.dim != n:
        raise DimensionError(f"operator dimension {op.dim} does not match drift dimension {n}")
    return GibbsGradientDrift(op, a=params.get('a', 1.0), delta=float(params.get('delta', 0.0)))


def _build_delay_terminal(params, n, op):
    tau = params.get('tau')
    if tau is None or float(tau) <= 0.0:
        raise ConfigError("delay_terminal requires tau > 0", field="drift.params.tau")
    return DelayTerminalDrift(n, c=float(params.get('c', 1.0)), tau=float(tau))


DRIFT_REGISTRY: Dict[str, Callable] = {
    'zero': _build_zero,
    'linear': _build_linear,
    'sine': _build_sine,
    'gibbs_gradient': _build_gibbs,
    'delay_terminal': _build_delay_terminal,
}


def registry_get(name: str, params: Optional[Dict[str, Any]], n: int,
                 op: Optional[SpectralOperator] = None):
    """
    Build a registry drift.

    Args:
        name: one of DRIFT_REGISTRY
        params: model parameters (see DRIFT_REGISTRY builders)
        n: truncation dimension
        op: spectral operator, required by gibbs_gradient

    Returns:
        DriftModel, or SegmentDriftModel for delay_terminal
    """
    if name not in DRIFT_REGISTRY:
        raise ConfigError(f"unknown drift '{name}' (known: {', '.join(sorted(DRIFT_REGISTRY))})", field="drift.name")
    if n < 1:
        raise ConfigError("dimension must be positive", field="drift")
    model = DRIFT_REGISTRY[name](dict(params or {}), int(n), op)
    logger.debug(f"Built drift {model!r} from registry entry '{name}'")
    return model


def mollify_directional(b: DriftModel, k, eps: float, nodes: int = DEFAULT_HERMITE_NODES) -> MollifiedDrift:
    """Gaussian smoothing of b along the direction k with variance eps."""
    return MollifiedDrift(b, k, eps, nodes)


def as_segment_drift(model) -> SegmentDriftModel:
    """Accept either drift kind for delay runs; state drifts read xi(0)."""
    if isinstance(model, SegmentDriftModel):
        return model
    return CurrentStateDrift(model)
