"""
IBPLab Reduction Module
Deterministic reduction of per-path results. Workers hand back buffers
tagged with their path-index range; the reducer orders them by index and
sums with math.fsum (exactly rounded), so every statistic is independent of
how paths were split across workers.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

from .errors import ReductionError


@dataclass
class PartialBuffer:
    """Per-path columns for paths start..stop-1."""
    start: int
    stop: int
    columns: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.stop < self.start:
            raise ReductionError(f"invalid range [{self.start}, {self.stop})")
        for name, values in self.columns.items():
            values = np.asarray(values, dtype=float).reshape(-1)
            if values.shape[0] != self.stop - self.start:
                raise ReductionError(f"column '{name}' has {values.shape[0]} values for "
                                     f"range [{self.start}, {self.stop})")
            self.columns[name] = values

    @property
    def count(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class Statistic:
    """Sample mean, unbiased variance and standard error of one column."""
    count: int
    total: float
    mean: float
    variance: float
    se: float

    def as_dict(self) -> dict:
        return {'count': self.count, 'mean': self.mean, 'variance': self.variance, 'se': self.se}


def summarize(values) -> Statistic:
    values = np.asarray(values, dtype=float).reshape(-1)
    count = int(values.shape[0])
    if count == 0:
        return Statistic(0, 0.0, 0.0, 0.0, 0.0)
    total = math.fsum(values)
    mean = total / count
    if count > 1:
        variance = math.fsum((values - mean) ** 2) / (count - 1)
    else:
        variance = 0.0
    return Statistic(count, total, mean, variance, math.sqrt(variance / count))


@dataclass
class Reduced:
    """Columns concatenated in path-index order with their statistics."""
    columns: Dict[str, np.ndarray]
    stats: Dict[str, Statistic]
    count: int

    def __getitem__(self, name: str) -> Statistic:
        return self.stats[name]

    def paired(self, lhs: str, rhs: str) -> Statistic:
        return summarize(self.columns[lhs] - self.columns[rhs])


def reduce_deterministic(partials: Iterable[PartialBuffer]) -> Reduced:
    """Merge buffers in path-index order; overlapping ranges are an error."""
    buffers: List[PartialBuffer] = sorted((p for p in partials if p.count > 0), key=lambda p: p.start)
    for prev, nxt in zip(buffers, buffers[1:]):
        if nxt.start < prev.stop:
            raise ReductionError(f"path ranges [{prev.start}, {prev.stop}) and [{nxt.start}, {nxt.stop}) overlap")
    names: Optional[List[str]] = None
    for buf in buffers:
        keys = sorted(buf.columns)
        if names is None:
            names = keys
        elif keys != names:
            raise ReductionError(f"buffer columns {keys} differ from {names}")
    names = names or []
    columns = {name: np.concatenate([b.columns[name] for b in buffers]) if buffers else np.zeros(0)
               for name in names}
    stats = {name: summarize(values) for name, values in columns.items()}
    return Reduced(columns=columns, stats=stats, count=sum(b.count for b in buffers))
