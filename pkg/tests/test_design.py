import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multnoise.design import (
    InputSchedule,
    design_schedule,
    first_moment_regressor,
    min_horizon_first,
    min_horizon_second,
    rank_certificate_D,
    rank_certificate_Z,
    sample_input,
    second_moment_regressor,
    wishart,
)
from multnoise.moments import model_ops
from multnoise.system import simple_example_system


def test_horizon_bounds():
    assert min_horizon_first(2, 1) == 5
    assert min_horizon_second(2, 1) == 12
    assert min_horizon_second(8, 8) == 133185
    with pytest.raises(ValueError):
        min_horizon_first(0, 1)


@given(st.integers(1, 6), st.integers(1, 6))
def test_horizon_bounds_cover_unknowns(n, m):
    # ell columns must at least match the number of regressor rows
    assert min_horizon_first(n, m) >= n + m
    assert min_horizon_second(n, m) >= n * (n + 1) // 2 + m * (m + 1) // 2


def test_schedule_shapes_and_reproducibility():
    s1, s2 = design_schedule(3, 2, 10, seed=7), design_schedule(3, 2, 10, seed=7)
    assert s1.nus.shape == (10, 2) and s1.Ubars.shape == (10, 2, 2)
    assert np.array_equal(s1.nus, s2.nus) and np.array_equal(s1.Ubars, s2.Ubars)
    assert not np.array_equal(s1.nus, design_schedule(3, 2, 10, seed=8).nus)
    assert np.all(np.linalg.eigvalsh(s1.Ubars) >= -1e-12)
    assert not s1.nus.flags.writeable
    assert np.array_equal(s1.prefix(4).nus, s1.nus[:4])


def test_degenerate_design_raises_or_warns():
    with pytest.raises(ValueError, match="wishart_dof"):
        design_schedule(2, 2, 5, wishart_dof=1)
    with pytest.raises(ValueError, match="singular"):
        design_schedule(2, 1, 5, wishart_scale=[[0.0]])
    with pytest.warns(UserWarning):
        design_schedule(2, 2, 5, wishart_dof=1, allow_degenerate=True)


def test_schedule_validation():
    with pytest.raises(ValueError):
        InputSchedule(np.zeros((3, 1)), -np.ones((3, 1, 1)))
    with pytest.raises(ValueError):
        InputSchedule(np.full((2, 1), np.nan), np.zeros((2, 1, 1)))


def test_wishart_mean_and_support():
    rng = np.random.default_rng(3)
    scale = np.array([[0.2, 0.05], [0.05, 0.1]])
    draws = wishart(scale, 4, rng, 40_000)
    assert np.allclose(draws.mean(axis=0), 4 * scale, atol=0.01)
    assert np.all(np.linalg.eigvalsh(draws) >= -1e-12)


def test_sample_input_moments():
    sched = design_schedule(2, 2, 3, seed=1)
    rng = np.random.default_rng(0)
    u = np.array([sample_input(sched, 1, rng) for _ in range(40_000)])
    assert np.allclose(u.mean(axis=0), sched.nus[1], atol=0.02)
    assert np.allclose(np.cov(u.T), sched.Ubars[1], atol=0.03)
    with pytest.raises(IndexError):
        sample_input(sched, 3, rng)


def test_regressor_column_order():
    mu = np.arange(8.0).reshape(4, 2)
    nus = np.array([[10.0], [11.0], [12.0]])
    Z = first_moment_regressor(mu, nus)
    assert Z[:, 0].tolist() == [4.0, 5.0, 12.0]  # t = l-1 first
    assert Z[:, -1].tolist() == [0.0, 1.0, 10.0]
    D = second_moment_regressor(np.arange(12.0).reshape(4, 3), np.array([[1.0], [2.0], [3.0]]))
    assert D[:, 0].tolist() == [6.0, 7.0, 8.0, 3.0]


def test_certificates_full_rank_for_exciting_inputs():
    model = simple_example_system()
    sched = design_schedule(2, 1, 12, seed=1)
    cz = rank_certificate_Z(model.A, model.B, np.zeros(2), sched)
    cd = rank_certificate_D(model_ops(model), np.zeros(2), np.eye(2), sched)
    assert cz.full_rank and cz.required_rank == 3 and cz.min_singular_value > 0
    assert cd.full_rank and cd.required_rank == 4


def test_certificates_fail_without_excitation():
    model = simple_example_system()
    zero = InputSchedule(np.zeros((12, 1)), np.zeros((12, 1, 1)))
    assert not rank_certificate_Z(model.A, model.B, np.zeros(2), zero).full_rank
    assert not rank_certificate_D(model_ops(model), np.zeros(2), np.eye(2), zero).full_rank


def test_short_horizon_warns():
    model = simple_example_system()
    sched = design_schedule(2, 1, 4, seed=0)
    with pytest.warns(UserWarning, match="bound"):
        rank_certificate_Z(model.A, model.B, np.zeros(2), sched)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rank_certificate_Z(model.A, model.B, np.zeros(2), design_schedule(2, 1, 5, seed=0))
