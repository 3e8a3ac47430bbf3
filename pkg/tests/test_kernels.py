import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aeroslosh import _recurrence_py, kernels

compiled = pytest.importorskip("aeroslosh._recurrence")


def test_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 5), st.integers(1, 9), st.integers(0, 2 ** 31))
def test_compiled_matches_python(T, B, H, seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(T, B, H))
    Ws = rng.normal(size=(H, H)) / np.sqrt(H)
    S_c = compiled.relu_forward(P, Ws)
    S_p = _recurrence_py.relu_forward(P, Ws)
    np.testing.assert_allclose(S_c, S_p, rtol=1e-12, atol=1e-14)
    G = rng.normal(size=(T, B, H))
    np.testing.assert_allclose(compiled.relu_backward(G, S_p, Ws),
                               _recurrence_py.relu_backward(G, S_p, Ws), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("impl", [compiled, _recurrence_py])
def test_shape_errors(impl):
    with pytest.raises(ValueError):
        impl.relu_forward(np.zeros((2, 1, 3)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        impl.relu_backward(np.zeros((2, 1, 3)), np.zeros((2, 1, 2)), np.zeros((3, 3)))


@pytest.mark.parametrize("impl", [compiled, _recurrence_py])
def test_inputs_not_modified(impl):
    rng = np.random.default_rng(0)
    P = rng.normal(size=(4, 2, 3))
    keep = P.copy()
    impl.relu_forward(P, np.eye(3))
    np.testing.assert_array_equal(P, keep)
