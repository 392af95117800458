"""
IBPLab Spectral Core Module
Finite spectral truncation H_{A,n}: the diagonal operator A, its semigroup
e^{tA}, and the noise operator sigma with the square-root structure the
weights need.

Everything is expressed in the eigenbasis {e_i} of A, so an HVector is just
an array of n coefficients. All functions accept batched input of shape
(..., n) and act on the last axis.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import ConfigError, ConstraintError, DimensionError

# Type alias: coefficients in the eigenbasis, last axis has length n.
HVector = np.ndarray

EIGEN_FLOOR = 1e-12


def as_hvector(x, dim: int) -> HVector:
    """Coerce ``x`` to a float array whose last axis has length ``dim``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise DimensionError(f"expected vector of dimension {dim}, got shape {arr.shape}")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpectralOperator:
    """
    Truncated negative-definite operator A with A e_i = -lambda_i e_i.

    Attributes:
        eigenvalues: lambda_1 <= ... <= lambda_n, all strictly positive
    """
    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        if lam.size == 0:
            raise ConfigError("at least one eigenvalue is required", field="operator")
        if np.any(~np.isfinite(lam)) or np.any(lam <= 0.0):
            raise ConfigError("eigenvalues of -A must be finite and > 0", field="operator")
        if np.any(np.diff(lam) < 0.0):
            raise ConfigError("eigenvalues must be sorted non-decreasing", field="operator")
        object.__setattr__(self, 'eigenvalues', _frozen(lam))

    @classmethod
    def from_values(cls, values: Sequence[float]) -> 'SpectralOperator':
        return cls(np.asarray(values, dtype=float))

    @classmethod
    def from_power_rule(cls, dim: int, p: float = 2.0, scale: float = 1.0) -> 'SpectralOperator':
        """lambda_i = scale * i^p for i = 1..dim."""
        if dim < 1:
            raise ConfigError("dim must be a positive integer", field="operator.dim")
        idx = np.arange(1, dim + 1, dtype=float)
        return cls(scale * idx ** p)

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def spectrum(self) -> np.ndarray:
        """Eigenvalues of A itself (negative)."""
        return -self.eigenvalues

    def matrix(self) -> np.ndarray:
        return np.diag(-self.eigenvalues)

    def apply(self, x) -> HVector:
        return -self.eigenvalues * as_hvector(x, self.dim)

    def apply_inverse(self, x) -> HVector:
        return -as_hvector(x, self.dim) / self.eigenvalues

    def semigroup_factors(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"semigroup time must be non-negative, got {t}")
        return np.exp(-self.eigenvalues * t)

    def semigroup(self, t: float, x) -> HVector:
        if t == 0:
            return np.array(as_hvector(x, self.dim), copy=True)
        return self.semigroup_factors(t) * as_hvector(x, self.dim)

    def convolution_factors(self, dt: float) -> np.ndarray:
        """Per-mode A^{-1}(e^{A dt} - I) = (1 - e^{-lambda dt}) / lambda."""
        if dt < 0:
            raise ValueError(f"step must be non-negative, got {dt}")
        return -np.expm1(-self.eigenvalues * dt) / self.eigenvalues

    def trace_inverse(self) -> float:
        """alpha = sum_i 1/lambda_i over the truncation."""
        return float(np.sum(1.0 / self.eigenvalues))


@dataclass(frozen=True)
class SigmaOperator:
    """
    Noise operator sigma in the eigenbasis of A.

    The square root sqrt(sigma sigma*), its inverse and sigma^{-1} are
    precomputed at construction. A diagonal sigma is stored as its diagonal
    and every product becomes elementwise.
    """
    matrix: np.ndarray
    diag: Optional[np.ndarray] = None
    sqrt_cov: np.ndarray = field(init=False, repr=False)
    sqrt_cov_inv: np.ndarray = field(init=False, repr=False)
    inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mat = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if mat.shape[0] != mat.shape[1]:
            raise DimensionError(f"sigma must be square, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ConfigError("sigma has non-finite entries", field="sigma")

        off_diag = mat - np.diag(np.diag(mat))
        diag = np.diag(mat).copy() if not np.any(off_diag) else None

        cov = mat @ mat.T
        evals, evecs = linalg.eigh(0.5 * (cov + cov.T))
        if evals[0] < EIGEN_FLOOR:
            raise ConstraintError(
                f"sigma sigma* is singular on the truncation (smallest eigenvalue {evals[0]:.3e})")
        root = np.sqrt(evals)
        sqrt_cov = (evecs * root) @ evecs.T
        sqrt_cov_inv = (evecs / root) @ evecs.T
        if diag is not None:
            inverse = np.diag(1.0 / diag)
        else:
            inverse = linalg.inv(mat)

        object.__setattr__(self, 'matrix', _frozen(mat))
        object.__setattr__(self, 'diag', None if diag is None else _frozen(diag))
        object.__setattr__(self, 'sqrt_cov', _frozen(sqrt_cov))
        object.__setattr__(self, 'sqrt_cov_inv', _frozen(sqrt_cov_inv))
        object.__setattr__(self, 'inverse', _frozen(inverse))

    @classmethod
    def from_diagonal(cls, values: Sequence[float]) -> 'SigmaOperator':
        return cls(np.diag(np.asarray(values, dtype=float).reshape(-1)))

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> 'SigmaOperator':
        return cls(scale * np.eye(dim))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def is_diagonal(self) -> bool:
        return self.diag is not None

    def apply(self, x) -> HVector:
        """sigma x, batched over leading axes."""
        x = as_hvector(x, self.dim)
        if self.diag is not None:
            return self.diag * x
        return x @ self.matrix.T

    def apply_inverse(self, x) -> HVector:
        """sigma^{-1} x; this is the map the weights pair against dW."""
        x = as_hvector(x, self.dim)
        if self.diag is not None:
            return x / self.diag
        return x @ self.inverse.T

    def apply_sqrt_cov(self, x) -> HVector:
        return as_hvector(x, self.dim) @ self.sqrt_cov.T

    def apply_sqrt_cov_inverse(self, x) -> HVector:
        return as_hvector(x, self.dim) @ self.sqrt_cov_inv.T

    def norm(self, x) -> np.ndarray:
        """sigma-norm |(sqrt(sigma sigma*))^{-1} x|; the infimum is attained."""
        if self.diag is not None:
            return np.linalg.norm(as_hvector(x, self.dim) / np.abs(self.diag), axis=-1)
        return np.linalg.norm(self.apply_sqrt_cov_inverse(x), axis=-1)

    def operator_norm(self) -> float:
        """Largest singular value of sigma."""
        return float(np.linalg.norm(self.matrix, 2))

    def inverse_norm(self) -> float:
        """||sigma^{-1}||, the factor entering the Fomin constant."""
        return float(np.linalg.norm(self.inverse, 2))


def apply_A(op: SpectralOperator, x) -> HVector:
    """Coordinate i of the result is -lambda_i * x_i."""
    return op.apply(x)


def semigroup_apply(op: SpectralOperator, t: float, x) -> HVector:
    """e^{tA} x; t = 0 returns x exactly."""
    return op.semigroup(t, x)


def sigma_norm(sig: SigmaOperator, x) -> float:
    """||x||_sigma for a single vector (batched input returns an array)."""
    value = sig.norm(x)
    return float(value) if np.ndim(value) == 0 else value
