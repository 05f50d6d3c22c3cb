from fractions import Fraction

import numpy as np
import pytest

from app.exceptions import DimensionError, DomainError, SolverBudgetError
from app.lasso_core import LassoInstance, support_from_threshold
from app.oracle1d import solution_1d
from app.solver import (
    GAP_ROUNDING_FACTOR,
    duality_gap,
    equicorrelation,
    exact_duality_gap,
    kkt_residuals,
    objective,
    solve,
    solve_library,
    solve_with,
)


def test_objective_has_no_half_factor():
    inst = LassoInstance(y=[1.0, 2.0], A=[[1.0, 0.0], [0.0, 1.0]], lam=0.5)
    # residual (0, 1), ||x||_1 = 1
    assert objective(inst, [1.0, 1.0]) == pytest.approx(1.0 + 0.5)
    with pytest.raises(DimensionError):
        objective(inst, [1.0])


def test_solve_matches_closed_form(demo_instance, demo_1d):
    sol = solve(demo_instance, 1e-12)
    assert sol.converged
    assert sol.gap_bound <= 1e-12
    np.testing.assert_allclose(sol.x, solution_1d(demo_1d), atol=1e-6)
    assert sol.x[1] == 0.0
    assert sol.kkt_inf < 1e-6


def test_solution_is_read_only(demo_instance):
    sol = solve(demo_instance, 1e-10)
    with pytest.raises(ValueError):
        sol.x[0] = 0.0


def test_gap_certifies_small_instances(small_instances):
    for inst in small_instances:
        sol = solve(inst, 1e-10, check_every=5)
        gap, primal, dual = duality_gap(inst, sol.x)
        assert gap <= 1e-10
        assert dual <= primal + 1e-12
        assert sol.kkt_inf < 1e-3


def test_duality_gap_includes_rounding_floor(demo_instance, demo_1d):
    gap, primal, dual = duality_gap(demo_instance, solution_1d(demo_1d))
    assert gap >= GAP_ROUNDING_FACTOR * (1.0 + 1.0)
    assert primal - dual < 1e-12


def test_exact_gap_agrees_with_float_gap(demo_instance):
    sol = solve(demo_instance, 1e-12)
    y_q = [Fraction(float(v)) for v in demo_instance.y]
    A_q = [[Fraction(float(v)) for v in row] for row in demo_instance.A]
    exact = exact_duality_gap(y_q, A_q, Fraction(float(demo_instance.lam)), sol.x)
    assert exact >= 0
    assert float(exact) <= sol.gap_bound


def test_exact_gap_of_zero_iterate():
    """At x = 0 with ||A^T y||_inf <= lambda/2 the gap is exactly zero."""
    gap = exact_duality_gap([Fraction(1, 10)], [[Fraction(1, 2)]], Fraction(1), [0.0])
    assert gap == 0


def test_agrees_with_library_backend(small_instances):
    for inst in small_instances:
        ref = solve(inst, 1e-12, check_every=5)
        lib = solve_library(inst, tol=1e-12, max_iter=100_000)
        assert objective(inst, lib.x) >= ref.objective - 1e-9
        assert objective(inst, lib.x) == pytest.approx(ref.objective, rel=1e-6, abs=1e-9)


def test_budget_exhaustion(rng):
    inst = LassoInstance(y=rng.standard_normal(4), A=rng.standard_normal((4, 6)), lam=0.05)
    with pytest.raises(SolverBudgetError) as info:
        solve(inst, 1e-30, max_sweeps=3)
    assert info.value.iterations == 3
    assert info.value.gap > 1e-30

    sol = solve(inst, 1e-30, max_sweeps=3, raise_on_budget=False)
    assert not sol.converged
    assert sol.iterations == 3


def test_zero_matrix_gives_zero_solution():
    inst = LassoInstance(y=[1.0, -2.0], A=np.zeros((2, 3)), lam=1.0)
    sol = solve(inst, 1e-12)
    assert sol.converged
    assert sol.iterations == 0
    assert np.all(sol.x == 0.0)


def test_large_lambda_gives_zero_solution(demo_instance):
    inst = LassoInstance(y=demo_instance.y, A=demo_instance.A, lam=10.0)
    sol = solve(inst, 1e-12)
    assert support_from_threshold(sol.x, 0.0).is_empty()


def test_invalid_arguments(demo_instance):
    with pytest.raises(DomainError):
        solve(demo_instance, 0.0)
    with pytest.raises(DomainError):
        solve(demo_instance, 1e-8, check_every=-1)
    with pytest.raises(DomainError):
        solve_with(demo_instance, backend="matlab")
    with pytest.raises(DomainError):
        equicorrelation(demo_instance, [0.0, 0.0], -1.0)


def test_kkt_and_equicorrelation_contain_support(small_instances):
    for inst in small_instances:
        sol = solve(inst, 1e-12, check_every=5)
        kkt_inf, corr = kkt_residuals(inst, sol.x)
        assert kkt_inf == pytest.approx(sol.kkt_inf)
        assert corr.shape == (inst.N,)
        support = support_from_threshold(sol.x, 0.0)
        equi = equicorrelation(inst, sol.x, 1e-4)
        assert set(support.indices) <= set(equi.indices.indices)


def test_solve_with_dispatch(demo_instance):
    ref = solve_with(demo_instance, backend="reference", gap_tol=1e-12)
    lib = solve_with(demo_instance, backend="library", library_tol=1e-12, max_sweeps=10_000)
    np.testing.assert_allclose(ref.x, lib.x, atol=1e-5)


def test_column_permutation_permutes_solution(small_instances, rng):
    for inst in small_instances:
        perm = rng.permutation(inst.N)
        sol = solve(inst, 1e-12, check_every=5)
        moved = solve(inst.permute_columns(perm), 1e-12, check_every=5)
        np.testing.assert_allclose(moved.x, sol.x[perm], atol=1e-4)
        assert abs(moved.objective - sol.objective) <= moved.gap_bound + sol.gap_bound + 1e-12


def test_no_grid_point_beats_the_certified_solution(rng):
    for _ in range(20):
        m, n = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        inst = LassoInstance(y=rng.standard_normal(m), A=rng.standard_normal((m, n)),
                             lam=float(rng.uniform(0.1, 1.0)))
        sol = solve(inst, 1e-12, check_every=5)
        radius = float(np.max(np.abs(sol.x))) + 1.0
        axis = np.linspace(-radius, radius, 401)
        grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
        values = np.sum((grid @ inst.A.T - inst.y) ** 2, axis=1) + inst.lam * np.sum(np.abs(grid), axis=1)
        assert sol.objective <= float(values.min()) + sol.gap_bound + 1e-12
