"""
IBPLab Paired Monte Carlo Engine
Runs per-path work in fixed-size chunks on a thread pool. Chunk boundaries
depend only on the configured chunk size, every path draws from its own
counter-based stream, and the reducer sorts by path index, so results are
bitwise identical for any worker count.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import psutil
from tqdm import tqdm

from .cylinder import CylinderFunction
from .errors import ConfigError
from .ibp_weights import ItoAccumulator
from .reduction import PartialBuffer, Reduced, reduce_deterministic
from .rng import draw_noise_batch
from .simulate import ModelBinding, SimGrid
from .utils.logger import get_logger

logger = get_logger("engine")

THREADS_ENV = "IBPLAB_THREADS"
DEFAULT_CHUNK_PATHS = 256

ChunkTask = Callable[[int, int], PartialBuffer]


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: explicit request, then IBPLAB_THREADS, then physical cores."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={env!r}")
    return max(1, psutil.cpu_count(logical=False) or 1)


def run_chunks(task: ChunkTask, total: int, chunk_paths: int = DEFAULT_CHUNK_PATHS,
               workers: Optional[int] = None, progress: bool = False, desc: str = "paths") -> Reduced:
    """Evaluate ``task`` on [start, stop) chunks covering 0..total-1 and reduce in index order."""
    if total < 0:
        raise ConfigError(f"path count must be non-negative, got {total}", field="mc.paths")
    if chunk_paths < 1:
        raise ConfigError("chunk_paths must be positive", field="mc.chunk_paths")
    ranges = [(s, min(s + chunk_paths, total)) for s in range(0, total, chunk_paths)]
    workers = resolve_workers(workers)
    buffers: List[PartialBuffer] = []
    with tqdm(total=total, desc=desc, unit="path", disable=not progress, leave=False) as bar:
        if workers == 1 or len(ranges) <= 1:
            for start, stop in ranges:
                buffers.append(task(start, stop))
                bar.update(stop - start)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(task, start, stop) for start, stop in ranges]
                for fut, (start, stop) in zip(futures, ranges):
                    buffers.append(fut.result())
                    bar.update(stop - start)
    return reduce_deterministic(buffers)


@dataclass
class PairedSpec:
    """
    What one paired IBP evaluation needs.

    Attributes:
        model: the model binding to simulate
        grid: time grid
        weight_factory: builds a fresh weight accumulator for a chunk
        direction: direction k (vector, phase-space vector or segment table) for d_k f
        functions: test functions
        initial: callable (start, stop) -> batch of initial states, or one state
        lhs_at: 'final' evaluates d_k f at the terminal state (P_T(d_k f)),
            'initial' at the starting point (mu(d_k f) over sampled starts)
    """
    model: ModelBinding
    grid: SimGrid
    weight_factory: Callable[[], ItoAccumulator]
    direction: np.ndarray
    functions: Sequence[CylinderFunction]
    initial: object
    lhs_at: str = 'final'
    refine: int = 1


def _initial_batch(initial, start: int, stop: int, shape: tuple) -> np.ndarray:
    if callable(initial):
        batch = np.asarray(initial(start, stop), dtype=float)
    else:
        batch = np.asarray(initial, dtype=float)
    return np.broadcast_to(batch, (stop - start,) + shape).copy()


def paired_task(spec: PairedSpec, seed: int) -> ChunkTask:
    """
    Chunk evaluator for the paired IBP estimator: per path i the columns
    ``lhs:<f>`` = d_k f, ``rhs:<f>`` = f(X_T) M_i and ``weight`` = M_i.

    With ``refine`` > 1 the increments are drawn on the finer grid and summed,
    so runs at dt and dt/refine see the same Brownian motion.
    """
    if spec.lhs_at not in ('final', 'initial'):
        raise ConfigError(f"lhs_at must be 'final' or 'initial', got {spec.lhs_at}")
    model, grid = spec.model, spec.grid
    shape = model.state_shape(grid)
    dt_eval = grid.dt if model.kind == 'delay' else None

    def task(start: int, stop: int) -> PartialBuffer:
        count = stop - start
        fine = draw_noise_batch(seed, start, count, grid.steps * spec.refine, model.noise_dim,
                                grid.dt / spec.refine)
        noise = fine.coarsen(spec.refine) if spec.refine > 1 else fine
        x0 = _initial_batch(spec.initial, start, stop, shape)
        acc = spec.weight_factory()
        path = model.run(x0, grid, noise, hooks=[acc], keep_path=False)
        final = model.final_state(path)
        weight = np.broadcast_to(acc.result(), (count,)).astype(float)
        anchor = final if spec.lhs_at == 'final' else x0
        columns: Dict[str, np.ndarray] = {'weight': weight}
        for fn in spec.functions:
            columns[f"lhs:{fn.label}"] = np.broadcast_to(fn.dderiv(anchor, spec.direction, dt_eval), (count,))
            columns[f"rhs:{fn.label}"] = fn.eval(final, dt_eval) * weight
            columns[f"f2:{fn.label}"] = fn.eval(anchor, dt_eval) ** 2
        return PartialBuffer(start, stop, columns)

    return task
