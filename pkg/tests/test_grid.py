import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ebsde import build_time_grid


def test_two_point_grid_is_forced():
    g = build_time_grid(1.0, 1, 2.0)
    assert np.array_equal(g.times, [0.0, 1.0])
    assert g.n_steps == 1


def test_equidistant_case():
    g = build_time_grid(1.0, 4, 1.0)
    assert np.allclose(g.times, [0.0, 0.25, 0.5, 0.75, 1.0], atol=1e-12)
    assert np.allclose(g.dt, 0.25, atol=1e-12)


def test_stretched_table_grid():
    g = build_time_grid(0.5, 500, 2.0)
    assert g.times[0] == 0.0
    assert g.times[-1] == 0.5
    assert g.times[1] == pytest.approx(0.5 * (1 / 500) ** 2, rel=1e-14)
    assert np.all(np.diff(g.dt) > 0)  # denser near zero


@pytest.mark.parametrize("T,N,gamma", [(0.0, 5, 2.0), (-1.0, 5, 2.0),
                                       (np.inf, 5, 2.0), (1.0, 0, 2.0),
                                       (1.0, 5, 0.5)])
def test_bad_arguments_rejected(T, N, gamma):
    with pytest.raises(ValueError):
        build_time_grid(T, N, gamma)


@settings(derandomize=True, max_examples=60)
@given(T=st.floats(1e-6, 1e3), N=st.integers(1, 400), gamma=st.floats(1.0, 5.0))
def test_grid_endpoints_and_monotonicity(T, N, gamma):
    g = build_time_grid(T, N, gamma)
    assert g.times[0] == 0.0
    assert g.times[-1] == T
    assert np.all(g.dt > 0)
    assert len(g.times) == N + 1
    if gamma == 1.0:
        assert np.allclose(g.dt, T / N, atol=1e-12 * max(1.0, T))
