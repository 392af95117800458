import numpy as np
import pytest

from IBPLab.errors import ReductionError
from IBPLab.reduction import PartialBuffer, reduce_deterministic, summarize


def test_fsum_keeps_small_terms():
    stat = summarize([1e16, 1.0, -1e16])
    assert stat.total == 1.0
    assert stat.mean == pytest.approx(1.0 / 3.0)


def test_empty_summary():
    stat = summarize([])
    assert stat.count == 0
    assert stat.mean == 0.0 and stat.se == 0.0


def test_single_value_has_zero_variance():
    stat = summarize([2.5])
    assert stat.variance == 0.0 and stat.se == 0.0


def test_buffers_are_ordered_by_index():
    values = np.arange(10, dtype=float) * 0.1
    parts = [PartialBuffer(s, s + 2, {'v': values[s:s + 2]}) for s in range(0, 10, 2)]
    forward = reduce_deterministic(parts)
    backward = reduce_deterministic(list(reversed(parts)))
    assert np.array_equal(forward.columns['v'], values)
    assert np.array_equal(backward.columns['v'], values)
    assert forward['v'] == backward['v']


def test_overlapping_ranges_rejected():
    parts = [PartialBuffer(0, 3, {'v': np.zeros(3)}), PartialBuffer(2, 4, {'v': np.zeros(2)})]
    with pytest.raises(ReductionError):
        reduce_deterministic(parts)


def test_column_length_checked():
    with pytest.raises(ReductionError):
        PartialBuffer(0, 3, {'v': np.zeros(2)})


def test_column_names_must_agree():
    parts = [PartialBuffer(0, 1, {'a': [1.0]}), PartialBuffer(1, 2, {'b': [1.0]})]
    with pytest.raises(ReductionError):
        reduce_deterministic(parts)


def test_paired_statistic():
    parts = [PartialBuffer(0, 3, {'lhs': [1.0, 2.0, 3.0], 'rhs': [1.0, 2.0, 2.0]})]
    reduced = reduce_deterministic(parts)
    paired = reduced.paired('lhs', 'rhs')
    assert paired.mean == pytest.approx(1.0 / 3.0)
    assert reduced.count == 3


def test_no_buffers():
    reduced = reduce_deterministic([])
    assert reduced.count == 0
    assert reduced.columns == {}
