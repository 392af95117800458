"""
IBPLab Cylinder Functions Module
Test functions f(x) = g(<v_1, x>, ..., <v_m, x>) with analytic first and
second directional derivatives. Segment variants read the delay segment at
fixed lags: u_j = <v_j, xi(theta_j)>.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError

OUTER_FUNCTIONS = ('constant', 'linear', 'product', 'sin', 'cos', 'gauss', 'square')
BOUNDED = ('constant', 'sin', 'cos', 'gauss')


def _outer(name: str, u: np.ndarray, scale: float):
    """Value, gradient (..., m) and Hessian (..., m, m) of the outer function at u."""
    m = u.shape[-1]
    if name == 'constant':
        value = np.full(u.shape[:-1], scale)
        return value, np.zeros_like(u), np.zeros(u.shape + (m,))
    if name == 'linear':
        value = scale * np.sum(u, axis=-1)
        return value, np.full_like(u, scale), np.zeros(u.shape + (m,))
    if name == 'square':
        value = scale * np.sum(u ** 2, axis=-1)
        hess = np.broadcast_to(2.0 * scale * np.eye(m), u.shape + (m,)).copy()
        return value, 2.0 * scale * u, hess
    if name == 'product':
        value = scale * np.prod(u, axis=-1)
        grad = np.empty_like(u)
        hess = np.zeros(u.shape + (m,))
        for j in range(m):
            grad[..., j] = scale * np.prod(np.delete(u, j, axis=-1), axis=-1)
            for l in range(m):
                if l != j:
                    hess[..., j, l] = scale * np.prod(np.delete(u, [j, l], axis=-1), axis=-1)
        return value, grad, hess
    s = np.sum(u, axis=-1)
    ones = np.ones(m)
    if name == 'sin':
        value = scale * np.sin(s)
        grad = (scale * np.cos(s))[..., None] * ones
        hess = (-scale * np.sin(s))[..., None, None] * np.ones((m, m))
        return value, grad, hess
    if name == 'cos':
        value = scale * np.cos(s)
        grad = (-scale * np.sin(s))[..., None] * ones
        hess = (-scale * np.cos(s))[..., None, None] * np.ones((m, m))
        return value, grad, hess
    if name == 'gauss':
        value = scale * np.exp(-0.5 * np.sum(u ** 2, axis=-1))
        grad = -u * value[..., None]
        hess = (u[..., :, None] * u[..., None, :] - np.eye(m)) * value[..., None, None]
        return value, grad, hess
    raise ConfigError(f"unknown outer function '{name}' (known: {', '.join(OUTER_FUNCTIONS)})")


@dataclass
class CylinderFunction:
    """
    f(x) = scale * g(<v_1, x>, ..., <v_m, x>).

    Attributes:
        outer: one of OUTER_FUNCTIONS
        vectors: projection vectors, shape (m, dim)
        thetas: optional lags in [-tau, 0]; when set f acts on segments
        scale: multiplies g
        label: display name used in reports
    """
    outer: str
    vectors: np.ndarray
    thetas: Optional[np.ndarray] = None
    scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.outer not in OUTER_FUNCTIONS:
            raise ConfigError(f"unknown outer function '{self.outer}'", field="functions.outer")
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if self.thetas is not None:
            self.thetas = np.asarray(self.thetas, dtype=float).reshape(-1)
            if self.thetas.shape[0] != self.vectors.shape[0]:
                raise ConfigError("one lag per projection vector is required", field="functions.thetas")
            if np.any(self.thetas > 0):
                raise ConfigError("segment lags must be <= 0", field="functions.thetas")
        if not self.label:
            self.label = f"{self.outer}[{self.vectors.shape[0]}]"

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def is_segment(self) -> bool:
        return self.thetas is not None

    @property
    def bounded(self) -> bool:
        return self.outer in BOUNDED

    def _lag_indices(self, m: int, dt: float) -> np.ndarray:
        idx = m + np.rint(self.thetas / dt).astype(int)
        if np.any(idx < 0):
            raise ConfigError("a lag reaches before -tau", field="functions.thetas")
        return idx

    def project(self, x, dt: Optional[float] = None) -> np.ndarray:
        """Projections u_j; segments need the grid step ``dt``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionError(f"{self.label}: expected dimension {self.dim}, got {x.shape}")
        if not self.is_segment:
            return x @ self.vectors.T
        if dt is None or x.ndim < 2:
            raise DimensionError(f"{self.label}: segment function needs a segment and dt")
        idx = self._lag_indices(x.shape[-2] - 1, dt)
        picked = x[..., idx, :]
        return np.sum(picked * self.vectors, axis=-1)

    def eval(self, x, dt: Optional[float] = None) -> np.ndarray:
        value, _, _ = _outer(self.outer, self.project(x, dt), self.scale)
        return value

    def dderiv(self, x, k, dt: Optional[float] = None) -> np.ndarray:
        """d_k f(x); for segments k is a direction segment of the same shape."""
        _, grad, _ = _outer(self.outer, self.project(x, dt), self.scale)
        return np.sum(grad * self.project(k, dt), axis=-1)

    def dderiv2(self, x, k, dt: Optional[float] = None) -> np.ndarray:
        """d_k^2 f(x)."""
        _, _, hess = _outer(self.outer, self.project(x, dt), self.scale)
        kk = self.project(k, dt)
        return np.einsum('...j,...jl,...l->...', kk, hess, kk)

    def __call__(self, x, dt: Optional[float] = None):
        return self.eval(x, dt)


def cylinder_from_spec(spec: Dict[str, Any], dim: int) -> CylinderFunction:
    """Build a function from its configuration entry."""
    outer = spec.get('outer')
    if outer is None:
        raise ConfigError("each test function needs 'outer'", field="functions")
    vectors = spec.get('vectors')
    if vectors is None:
        vectors = [np.eye(dim)[int(i)] for i in spec.get('coordinates', [0])]
    fn = CylinderFunction(outer=outer, vectors=np.asarray(vectors, dtype=float), thetas=spec.get('thetas'),
                          scale=float(spec.get('scale', 1.0)), label=spec.get('label', ''))
    if fn.dim != dim:
        raise ConfigError(f"test function '{fn.label}' has dimension {fn.dim}, model state has {dim}",
                          field="functions")
    return fn


def default_dictionary(dim: int, seed: int = 7) -> List[CylinderFunction]:
    """Five bounded and unbounded test functions over the state space."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    e0 = np.eye(dim)[0]
    two = np.vstack([e0, np.eye(dim)[min(1, dim - 1)]])
    return [
        CylinderFunction('linear', e0, label='x1'),
        CylinderFunction('sin', v, label='sin<v,x>'),
        CylinderFunction('cos', e0, label='cos x1'),
        CylinderFunction('gauss', two, label='gauss(x1,x2)'),
        CylinderFunction('product', two, label='x1*x2') if dim > 1 else CylinderFunction('square', e0, label='x1^2'),
    ]
