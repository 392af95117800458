"""
IBPLab Simulation Module
Exponential-Euler path simulation for the semilinear, Hamiltonian and
delay model classes. Every path keeps the exact Brownian increments that
produced it; the weights are Ito sums against those same increments.

All simulators are batch-transparent: a NoisePath with increments of shape
(batch, steps, n) produces states of shape (batch, steps + 1, n).
Optional ``hooks`` are called as hook(j, t_j, state_j, dW_j) at the left
endpoint of every step, which lets weights be accumulated while the path
is being generated (``keep_path=False`` then drops the stored states).
"""

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .drift_models import DriftModel, SegmentDriftModel, as_segment_drift
from .errors import ConfigError, DimensionError, SimulationError
from .spectral_core import SigmaOperator, SpectralOperator
from .utils.logger import get_logger

logger = get_logger("simulate")

StepHook = Callable[[int, float, np.ndarray, np.ndarray], None]
TimeFunction = Union[Callable[[float], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SimGrid:
    """Uniform grid on [0, T]; dt is always derived as T / steps."""
    T: float
    steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"horizon T must be > 0, got {self.T}", field="grid.T")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps}", field="grid.steps")
        object.__setattr__(self, 'T', float(self.T))
        object.__setattr__(self, 'steps', int(self.steps))

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def refine(self, factor: int = 2) -> 'SimGrid':
        return SimGrid(self.T, self.steps * factor)


@dataclass(frozen=True)
class NoisePath:
    """
    Brownian increments dW_j ~ N(0, dt I), j = 0..steps-1.

    ``seed`` and ``path_index`` record provenance: the increments are a pure
    function of them (see IBPLab.rng). For a batch, ``path_index`` is the
    index of the first path.
    """
    increments: np.ndarray
    dt: float
    seed: Optional[int] = None
    path_index: Optional[int] = None

    @property
    def steps(self) -> int:
        return int(self.increments.shape[-2])

    @property
    def dim(self) -> int:
        return int(self.increments.shape[-1])

    @property
    def batch_shape(self) -> tuple:
        return tuple(self.increments.shape[:-2])

    def coarsen(self, factor: int = 2) -> 'NoisePath':
        """Sum consecutive increments; the coarse path is the same Brownian motion at step factor*dt."""
        if self.steps % factor:
            raise ConfigError(f"cannot coarsen {self.steps} steps by {factor}")
        shape = self.increments.shape[:-2] + (self.steps // factor, factor, self.dim)
        return NoisePath(self.increments.reshape(shape).sum(axis=-2), self.dt * factor,
                         self.seed, self.path_index)

    def brownian(self) -> np.ndarray:
        """W(t_j) for j = 0..steps."""
        zero = np.zeros(self.increments.shape[:-2] + (1, self.dim))
        return np.concatenate([zero, np.cumsum(self.increments, axis=-2)], axis=-2)


@dataclass(frozen=True)
class Shift:
    """Deterministic drift shift eps * s(t); ``values`` is a callable of t or a table on the grid."""
    eps: float
    values: TimeFunction

    def table(self, grid: SimGrid, dim: int) -> np.ndarray:
        if callable(self.values):
            tab = np.array([np.asarray(self.values(t), dtype=float) for t in grid.times])
        else:
            tab = np.asarray(self.values, dtype=float)
        if tab.shape != (grid.steps + 1, dim):
            raise DimensionError(f"shift table must have shape {(grid.steps + 1, dim)}, got {tab.shape}")
        return self.eps * tab


@dataclass
class PathSample:
    """Semilinear path X_j at the grid nodes plus the noise that drove it."""
    states: Optional[np.ndarray]
    final: np.ndarray
    noise: NoisePath
    grid: SimGrid
    shift: Optional[Shift] = None

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@dataclass
class HamPath:
    """Phase-space path Z_j = (X_j, Y_j); only the Y equation carries noise."""
    x_states: Optional[np.ndarray]
    y_states: Optional[np.ndarray]
    x_final: np.ndarray
    y_final: np.ndarray
    noise: NoisePath
    grid: SimGrid
    shift: Optional[Shift] = None

    @property
    def states(self) -> Optional[np.ndarray]:
        if self.x_states is None:
            return None
        return np.concatenate([self.x_states, self.y_states], axis=-1)

    @property
    def final(self) -> np.ndarray:
        return np.concatenate([self.x_final, self.y_final], axis=-1)


@dataclass
class DelayPath:
    """
    Delay path on the grid over [-tau, T]; history index i is time (i - m) dt.

    The segment X_t at grid node j is ``history[..., j:j + m + 1, :]``.
    """
    tau: float
    m: int
    history: np.ndarray
    noise: NoisePath
    grid: SimGrid
    shift: Optional[Shift] = None

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.history.shape[-2]) - self.m) * self.grid.dt

    def segment(self, j: int) -> np.ndarray:
        return self.history[..., j:j + self.m + 1, :]

    def final_segment(self) -> np.ndarray:
        return self.segment(self.grid.steps)

    @property
    def final(self) -> np.ndarray:
        return self.history[..., -1, :]


def _check_noise(noise: NoisePath, grid: SimGrid, dim: int):
    if noise.steps != grid.steps:
        raise DimensionError(f"noise has {noise.steps} increments, grid expects {grid.steps}")
    if noise.dim != dim:
        raise DimensionError(f"noise dimension {noise.dim} does not match state dimension {dim}")
    if not np.isclose(noise.dt, grid.dt, rtol=1e-12, atol=0.0):
        raise DimensionError(f"noise dt {noise.dt} does not match grid dt {grid.dt}")


def _noise_term(sig: Optional[SigmaOperator], dW: np.ndarray) -> np.ndarray:
    if sig is None:
        return np.zeros_like(dW)
    return sig.apply(dW)


def _guard(state: np.ndarray, step: int, model: str):
    if not np.all(np.isfinite(state)):
        raise SimulationError("non-finite state", step=step, model=model)


def _run_hooks(hooks: Sequence[StepHook], j: int, t: float, state: np.ndarray, dW: np.ndarray):
    for hook in hooks:
        hook(j, t, state, dW)


def simulate_semilinear(x0, A: SpectralOperator, sig: Optional[SigmaOperator], b: DriftModel,
                        grid: SimGrid, noise: NoisePath, shift: Optional[Shift] = None,
                        base: Optional[PathSample] = None, hooks: Iterable[StepHook] = (),
                        keep_path: bool = True) -> PathSample:
    """
    dX = {AX + b(X) + eps s(t)} dt + sigma dW by exponential Euler.

    X_{j+1} = e^{A dt} X_j + A^{-1}(e^{A dt} - I)[b(X_j) + eps s(t_j)] + sigma dW_j

    When ``base`` is given, b is evaluated on the base path instead, which
    makes X^eps - X exactly linear in eps at fixed noise.
    """
    n = A.dim
    if b.in_dim != n or b.out_dim != n:
        raise DimensionError(f"drift dimensions ({b.in_dim}, {b.out_dim}) do not match operator dimension {n}")
    if sig is not None and sig.dim != n:
        raise DimensionError(f"sigma dimension {sig.dim} does not match operator dimension {n}")
    _check_noise(noise, grid, n)
    if base is not None and base.states is None:
        raise ConfigError("base path must be stored (keep_path=True)")
    hooks = list(hooks)

    decay = A.semigroup_factors(grid.dt)
    conv = A.convolution_factors(grid.dt)
    shift_tab = shift.table(grid, n) if shift is not None else None
    times = grid.times

    x = np.broadcast_to(np.asarray(x0, dtype=float), noise.batch_shape + (n,)).copy()
    states = np.empty(noise.batch_shape + (grid.steps + 1, n)) if keep_path else None
    if keep_path:
        states[..., 0, :] = x

    for j in range(grid.steps):
        dW = noise.increments[..., j, :]
        if hooks:
            _run_hooks(hooks, j, times[j], x, dW)
        forcing = b.eval(base.states[..., j, :] if base is not None else x)
        if shift_tab is not None:
            forcing = forcing + shift_tab[j]
        x = decay * x + conv * forcing + _noise_term(sig, dW)
        _guard(x, j + 1, "semilinear")
        if keep_path:
            states[..., j + 1, :] = x

    return PathSample(states=states, final=x, noise=noise, grid=grid, shift=shift)


def simulate_hamiltonian(z0, B, A: SpectralOperator, sig: Optional[SigmaOperator], b: DriftModel,
                         grid: SimGrid, noise: NoisePath, shift: Optional[Shift] = None,
                         base: Optional[HamPath] = None, hooks: Iterable[StepHook] = (),
                         keep_path: bool = True) -> HamPath:
    """
    dX = BY dt, dY = {AY + b(X, Y) + eps h'(t)} dt + sigma dW.

    With a shift the drift is evaluated on the unshifted ``base`` path, so
    the perturbation is a deterministic function of the noise. Hooks receive
    the concatenated state (X_j, Y_j).
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = A.dim
    nx = B.shape[0]
    if B.shape[1] != n:
        raise DimensionError(f"B must map H (dim {n}) into H~, got shape {B.shape}")
    if b.in_dim != nx + n or b.out_dim != n:
        raise DimensionError(f"Hamiltonian drift must map dim {nx + n} to dim {n}, got ({b.in_dim}, {b.out_dim})")
    _check_noise(noise, grid, n)
    if shift is not None and shift.eps != 0.0:
        if base is None or base.x_states is None:
            raise ConfigError("a shifted Hamiltonian run needs the stored base path")
    hooks = list(hooks)

    x_init, y_init = z0
    decay = A.semigroup_factors(grid.dt)
    conv = A.convolution_factors(grid.dt)
    shift_tab = shift.table(grid, n) if shift is not None else None
    use_base = shift is not None and shift.eps != 0.0
    times = grid.times
    dt = grid.dt

    x = np.broadcast_to(np.asarray(x_init, dtype=float), noise.batch_shape + (nx,)).copy()
    y = np.broadcast_to(np.asarray(y_init, dtype=float), noise.batch_shape + (n,)).copy()
    xs = ys = None
    if keep_path:
        xs = np.empty(noise.batch_shape + (grid.steps + 1, nx))
        ys = np.empty(noise.batch_shape + (grid.steps + 1, n))
        xs[..., 0, :] = x
        ys[..., 0, :] = y

    for j in range(grid.steps):
        dW = noise.increments[..., j, :]
        z = np.concatenate([x, y], axis=-1)
        if hooks:
            _run_hooks(hooks, j, times[j], z, dW)
        if use_base:
            zb = np.concatenate([base.x_states[..., j, :], base.y_states[..., j, :]], axis=-1)
        else:
            zb = z
        forcing = b.eval(zb)
        if shift_tab is not None:
            forcing = forcing + shift_tab[j]
        x_next = x + dt * (y @ B.T)
        y = decay * y + conv * forcing + _noise_term(sig, dW)
        x = x_next
        _guard(x, j + 1, "hamiltonian")
        _guard(y, j + 1, "hamiltonian")
        if keep_path:
            xs[..., j + 1, :] = x
            ys[..., j + 1, :] = y

    return HamPath(x_states=xs, y_states=ys, x_final=x, y_final=y, noise=noise, grid=grid, shift=shift)


def delay_lag_steps(tau: float, dt: float) -> int:
    """Number of grid steps m with tau = m dt; tau must be an integer multiple of dt."""
    if not tau > 0:
        raise ConfigError(f"delay tau must be > 0, got {tau}", field="delay.tau")
    m = int(round(tau / dt))
    if m < 1 or abs(m * dt - tau) > 1e-9 * max(tau, 1.0):
        raise ConfigError(f"tau={tau} is not an integer multiple of dt={dt}", field="delay.tau")
    return m


def initial_segment(xi0, m: int, dt: float, dim: int) -> np.ndarray:
    """Tabulate an initial segment on the [-tau, 0] grid (callable, constant vector or table)."""
    if callable(xi0):
        thetas = (np.arange(m + 1) - m) * dt
        return np.array([np.asarray(xi0(th), dtype=float) for th in thetas]).reshape(m + 1, dim)
    arr = np.asarray(xi0, dtype=float)
    if arr.shape == (dim,) or arr.ndim == 0:
        return np.broadcast_to(arr, (m + 1, dim)).copy()
    if arr.shape[-2:] != (m + 1, dim):
        raise DimensionError(f"initial segment must have shape (..., {m + 1}, {dim}), got {arr.shape}")
    return arr


def simulate_delay(xi0, A: SpectralOperator, sig: Optional[SigmaOperator], b,
                   grid: SimGrid, tau: float, noise: NoisePath, shift: Optional[Shift] = None,
                   base: Optional[DelayPath] = None, hooks: Iterable[StepHook] = ()) -> DelayPath:
    """
    dX = {AX + b(X_t) + eps Gamma(t)} dt + sigma dW with X_0 = xi0 on [-tau, 0].

    Hooks receive the segment X_{t_j} of shape (..., m + 1, n). With a
    shift, b is evaluated on the segments of the unshifted ``base`` path.
    """
    b = as_segment_drift(b)
    n = A.dim
    if b.dim != n:
        raise DimensionError(f"segment drift dimension {b.dim} does not match operator dimension {n}")
    _check_noise(noise, grid, n)
    m = delay_lag_steps(tau, grid.dt)
    drift_tau = b.metadata.get('tau')
    if drift_tau is not None and abs(drift_tau - tau) > 1e-12:
        raise ConfigError(f"drift delay {drift_tau} differs from simulation tau {tau}", field="delay.tau")
    use_base = shift is not None and shift.eps != 0.0
    if use_base and (base is None or base.m != m):
        raise ConfigError("a shifted delay run needs the base path on the same grid")
    hooks = list(hooks)

    decay = A.semigroup_factors(grid.dt)
    conv = A.convolution_factors(grid.dt)
    shift_tab = shift.table(grid, n) if shift is not None else None
    times = grid.times

    seg0 = initial_segment(xi0, m, grid.dt, n)
    history = np.empty(noise.batch_shape + (m + 1 + grid.steps, n))
    history[..., :m + 1, :] = seg0

    for j in range(grid.steps):
        dW = noise.increments[..., j, :]
        segment = history[..., j:j + m + 1, :]
        if hooks:
            _run_hooks(hooks, j, times[j], segment, dW)
        source = base.history[..., j:j + m + 1, :] if use_base else segment
        forcing = b.eval(source)
        if shift_tab is not None:
            forcing = forcing + shift_tab[j]
        x = decay * history[..., j + m, :] + conv * forcing + _noise_term(sig, dW)
        _guard(x, j + 1, "delay")
        history[..., j + m + 1, :] = x

    return DelayPath(tau=float(tau), m=m, history=history, noise=noise, grid=grid, shift=shift)


@dataclass
class ModelBinding:
    """
    One of the three model classes with fixed coefficients.

    The state handed around by samplers and test functions is X (semilinear),
    the concatenation (X, Y) (hamiltonian) or the segment X_t (delay).
    """
    kind: str
    op: SpectralOperator
    sig: Optional[SigmaOperator]
    drift: Union[DriftModel, SegmentDriftModel]
    B: Optional[np.ndarray] = None
    tau: Optional[float] = None

    KINDS = ('semilinear', 'hamiltonian', 'delay')

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown model class '{self.kind}'", field="model")
        if self.kind == 'hamiltonian':
            self.B = np.eye(self.op.dim) if self.B is None else np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.kind == 'delay':
            if self.tau is None or not self.tau > 0:
                raise ConfigError("delay model needs tau > 0", field="delay.tau")
            self.drift = as_segment_drift(self.drift)

    @property
    def noise_dim(self) -> int:
        return self.op.dim

    @property
    def position_dim(self) -> int:
        return int(self.B.shape[0]) if self.kind == 'hamiltonian' else 0

    def lag_steps(self, grid: SimGrid) -> int:
        return delay_lag_steps(self.tau, grid.dt)

    def state_shape(self, grid: SimGrid) -> tuple:
        if self.kind == 'hamiltonian':
            return (self.position_dim + self.op.dim,)
        if self.kind == 'delay':
            return (self.lag_steps(grid) + 1, self.op.dim)
        return (self.op.dim,)

    def zero_state(self, grid: SimGrid) -> np.ndarray:
        return np.zeros(self.state_shape(grid))

    def run(self, initial, grid: SimGrid, noise: NoisePath, hooks: Iterable[StepHook] = (),
            keep_path: bool = False, shift: Optional[Shift] = None, base=None):
        """Simulate from ``initial`` (a state or a batch of states)."""
        if self.kind == 'semilinear':
            return simulate_semilinear(initial, self.op, self.sig, self.drift, grid, noise, shift=shift,
                                       base=base, hooks=hooks, keep_path=keep_path)
        if self.kind == 'hamiltonian':
            z = np.asarray(initial, dtype=float)
            nx = self.position_dim
            return simulate_hamiltonian((z[..., :nx], z[..., nx:]), self.B, self.op, self.sig, self.drift,
                                        grid, noise, shift=shift, base=base, hooks=hooks, keep_path=keep_path)
        return simulate_delay(initial, self.op, self.sig, self.drift, grid, self.tau, noise,
                              shift=shift, base=base, hooks=hooks)

    def final_state(self, path) -> np.ndarray:
        if self.kind == 'delay':
            return path.final_segment()
        return path.final
