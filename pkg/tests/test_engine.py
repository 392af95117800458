import numpy as np
import pytest

from IBPLab.cylinder import CylinderFunction
from IBPLab.engine import THREADS_ENV, PairedSpec, paired_task, resolve_workers, run_chunks
from IBPLab.errors import ConfigError
from IBPLab.ibp_weights import EigenDirection, SemilinearWeight
from IBPLab.reduction import PartialBuffer
from IBPLab.rng import draw_noise_batch
from IBPLab.simulate import SimGrid


def _noise_task(start, stop):
    noise = draw_noise_batch(5, start, stop - start, 16, 2, 1.0 / 16)
    return PartialBuffer(start, stop, {'w': noise.increments.sum(axis=(-2, -1))})


@pytest.mark.parametrize("chunk", [1, 7, 64])
def test_worker_count_does_not_change_results(chunk):
    single = run_chunks(_noise_task, 300, chunk, workers=1)
    pooled = run_chunks(_noise_task, 300, chunk, workers=4)
    assert np.array_equal(single.columns['w'], pooled.columns['w'])
    assert single['w'].mean == pooled['w'].mean


def test_chunk_size_keeps_per_path_values():
    small = run_chunks(_noise_task, 100, 3, workers=2)
    large = run_chunks(_noise_task, 100, 100, workers=2)
    assert np.array_equal(small.columns['w'], large.columns['w'])


def test_zero_paths_gives_empty_reduction():
    reduced = run_chunks(_noise_task, 0, 8, workers=1)
    assert reduced.count == 0


def test_invalid_chunk_size():
    with pytest.raises(ConfigError):
        run_chunks(_noise_task, 10, 0)


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.setenv(THREADS_ENV, "many")
    assert resolve_workers() >= 1


def test_paired_task_columns(ou_model):
    grid = SimGrid(1.0, 32)
    k = EigenDirection(np.ones(1), ou_model.op)
    fn = CylinderFunction('linear', np.ones(1), label='x')
    spec = PairedSpec(model=ou_model, grid=grid, weight_factory=lambda: SemilinearWeight(k, ou_model.drift,
                                                                                         ou_model.sig, 1.0),
                      direction=k.vector, functions=[fn], initial=np.zeros(1))
    buffer = paired_task(spec, seed=1)(0, 50)
    assert set(buffer.columns) == {'weight', 'lhs:x', 'rhs:x', 'f2:x'}
    assert np.all(buffer.columns['lhs:x'] == 1.0)
    assert buffer.columns['weight'].shape == (50,)


def test_paired_identity_for_ou(ou_model):
    grid = SimGrid(1.0, 32)
    k = EigenDirection(np.ones(1), ou_model.op)
    fn = CylinderFunction('linear', np.ones(1), label='x')
    spec = PairedSpec(model=ou_model, grid=grid, weight_factory=lambda: SemilinearWeight(k, ou_model.drift,
                                                                                         ou_model.sig, 1.0),
                      direction=k.vector, functions=[fn], initial=np.zeros(1))
    reduced = run_chunks(paired_task(spec, seed=3), 8000, 256, workers=2)
    rhs = reduced['rhs:x']
    # discretisation bias of the exponential Euler pair: dt / (1 - e^{-dt})
    expected = grid.dt / (1.0 - np.exp(-grid.dt))
    assert abs(rhs.mean - expected) < 4.0 * rhs.se


def test_refined_noise_is_shared(ou_model):
    grid = SimGrid(1.0, 8)
    k = EigenDirection(np.ones(1), ou_model.op)
    fn = CylinderFunction('linear', np.ones(1), label='x')
    common = dict(model=ou_model, weight_factory=lambda: SemilinearWeight(k, ou_model.drift, ou_model.sig, 1.0),
                  direction=k.vector, functions=[fn], initial=np.zeros(1))
    coarse = paired_task(PairedSpec(grid=grid, refine=2, **common), seed=4)(0, 10)
    fine = paired_task(PairedSpec(grid=grid.refine(2), **common), seed=4)(0, 10)
    # both weights are the scaled Brownian endpoint W_T
    assert np.allclose(coarse.columns['weight'], fine.columns['weight'])


def test_lhs_anchor_is_checked(ou_model):
    spec = PairedSpec(model=ou_model, grid=SimGrid(1.0, 4), weight_factory=lambda: None,
                      direction=np.ones(1), functions=[], initial=np.zeros(1), lhs_at='middle')
    with pytest.raises(ConfigError):
        paired_task(spec, seed=0)
