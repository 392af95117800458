import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from IBPLab.cylinder import CylinderFunction, cylinder_from_spec, default_dictionary
from IBPLab.errors import ConfigError, DimensionError

V = np.array([[1.0, 0.5, 0.0], [0.0, -1.0, 2.0]])


@pytest.mark.parametrize("outer", ['linear', 'square', 'product', 'sin', 'cos', 'gauss', 'constant'])
@settings(max_examples=20, deadline=None)
@given(x=st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3),
       k=st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
def test_derivatives_match_finite_differences(outer, x, k):
    fn = CylinderFunction(outer, V, scale=1.3)
    x, k = np.array(x), np.array(k)
    h = 1e-4
    first = (fn.eval(x + h * k) - fn.eval(x - h * k)) / (2.0 * h)
    second = (fn.eval(x + h * k) - 2.0 * fn.eval(x) + fn.eval(x - h * k)) / h ** 2
    assert fn.dderiv(x, k) == pytest.approx(first, abs=1e-6)
    assert fn.dderiv2(x, k) == pytest.approx(second, abs=1e-4)


def test_batched_evaluation():
    fn = CylinderFunction('product', V)
    xs = np.random.default_rng(1).normal(size=(6, 3))
    expected = (xs @ V[0]) * (xs @ V[1])
    assert np.allclose(fn.eval(xs), expected)
    assert fn(xs).shape == (6,)


def test_segment_function_reads_lags():
    fn = CylinderFunction('linear', np.array([[1.0], [2.0]]), thetas=[0.0, -0.5])
    seg = np.arange(5, dtype=float).reshape(5, 1)
    # m = 4, dt = 0.25: theta = 0 is index 4, theta = -0.5 is index 2
    assert fn.eval(seg, 0.25) == pytest.approx(4.0 + 2.0 * 2.0)
    dseg = np.ones((5, 1))
    assert fn.dderiv(seg, dseg, 0.25) == pytest.approx(3.0)


def test_segment_function_needs_dt():
    fn = CylinderFunction('linear', np.array([1.0]), thetas=[0.0])
    with pytest.raises(DimensionError):
        fn.eval(np.zeros((3, 1)))


def test_lag_before_segment_start():
    fn = CylinderFunction('linear', np.array([1.0]), thetas=[-1.0])
    with pytest.raises(ConfigError):
        fn.eval(np.zeros((3, 1)), 0.25)


@pytest.mark.parametrize("kwargs", [
    {'outer': 'tan', 'vectors': np.ones(2)},
    {'outer': 'sin', 'vectors': np.ones(2), 'thetas': [0.1]},
    {'outer': 'sin', 'vectors': np.ones((2, 2)), 'thetas': [0.0]},
])
def test_invalid_functions(kwargs):
    with pytest.raises(ConfigError):
        CylinderFunction(**kwargs)


def test_from_spec_uses_coordinates():
    fn = cylinder_from_spec({'outer': 'sin', 'coordinates': [1], 'label': 's'}, 3)
    assert np.array_equal(fn.vectors, [[0.0, 1.0, 0.0]])
    assert fn.label == 's' and fn.bounded


def test_from_spec_checks_dimension():
    with pytest.raises(ConfigError):
        cylinder_from_spec({'outer': 'sin', 'vectors': [[1.0, 0.0]]}, 3)


@pytest.mark.parametrize("dim", [1, 2, 4])
def test_default_dictionary(dim):
    functions = default_dictionary(dim)
    assert len(functions) == 5
    assert len({fn.label for fn in functions}) == 5
    assert all(fn.dim == dim for fn in functions)
