import math

import numpy as np
import pytest

from app.exceptions import DimensionError, DomainError, InvalidInstanceError, TieError
from app.lasso_core import LassoInstance, SupportSet, support_from_threshold
from app.oracle1d import (
    Instance1D,
    brute_force_stsp_1d,
    condition_1d,
    delta_gap,
    directed_support_change,
    solution_1d,
    stsp_1d,
    support_1d,
    z_epsilon,
    z_event,
)
from app.solver import solve


def _max_distance(first: Instance1D, second: Instance1D) -> float:
    return max(abs(first.y - second.y), float(np.max(np.abs(first.a - second.a))))


def test_instance_round_trip(demo_instance, demo_1d):
    back = Instance1D.from_instance(demo_instance)
    assert (back.y, back.a.tolist(), back.lam) == (demo_1d.y, demo_1d.a.tolist(), demo_1d.lam)
    inst = demo_1d.to_instance()
    assert isinstance(inst, LassoInstance)
    assert inst.A.shape == (1, 2)
    with pytest.raises(DimensionError):
        Instance1D.from_instance(LassoInstance(y=[1.0, 2.0], A=np.eye(2), lam=1.0))
    with pytest.raises(InvalidInstanceError):
        Instance1D(y=1.0, a=[1.0], lam=-1.0)


def test_support_rule(demo_1d):
    assert support_1d(demo_1d) == SupportSet.of(1)
    assert support_1d(Instance1D(y=1.0, a=[0.1, -0.7, 0.3], lam=0.01)) == SupportSet.of(2)
    assert support_1d(Instance1D(y=0.001, a=[0.9, 0.3], lam=0.01)).is_empty()
    with pytest.raises(TieError):
        support_1d(Instance1D(y=1.0, a=[0.5, -0.5], lam=0.01))


def test_closed_form_solution(demo_1d):
    x = solution_1d(demo_1d)
    assert x[0] == pytest.approx((0.9 - 0.005) / 0.81)
    assert x[1] == 0.0
    negative = solution_1d(Instance1D(y=-1.0, a=[0.9, 0.3], lam=0.01))
    assert negative[0] == pytest.approx(-(0.9 - 0.005) / 0.81)


def test_delta_gap():
    stat = delta_gap([0.9, -0.3, 0.5])
    assert stat.delta == pytest.approx(0.4)
    assert stat.argmax_index == 1
    with pytest.raises(DimensionError):
        delta_gap([1.0])


def test_stsp_singleton_regime(demo_1d):
    # delta/2 = 0.3 is smaller than the zero-boundary distance
    assert z_epsilon(demo_1d) > 0.3
    assert stsp_1d(demo_1d) == pytest.approx(0.3)
    assert condition_1d(demo_1d) == pytest.approx(1.0 / 0.3)


def test_stsp_zero_boundary_regime():
    inst = Instance1D(y=0.1, a=[2.0, 0.1], lam=0.1)
    eps_z = z_epsilon(inst)
    assert (2.0 - eps_z) * (0.1 - eps_z) == pytest.approx(0.05, abs=1e-12)
    assert stsp_1d(inst) == pytest.approx(eps_z)


def test_stsp_empty_regime():
    inst = Instance1D(y=0.001, a=[0.9, 0.3], lam=0.01)
    radius = stsp_1d(inst)
    assert (0.9 + radius) * (0.001 + radius) == pytest.approx(0.005, abs=1e-12)


def test_tie_is_ill_posed_only_with_nonempty_support():
    tied = Instance1D(y=1.0, a=[0.5, 0.5], lam=0.01)
    assert stsp_1d(tied) == 0.0
    assert math.isinf(condition_1d(tied))
    quiet = Instance1D(y=0.001, a=[0.5, 0.5], lam=0.01)
    assert stsp_1d(quiet) > 0


def test_single_column_uses_zero_boundary():
    inst = Instance1D(y=1.0, a=[0.9], lam=0.01)
    assert stsp_1d(inst) == pytest.approx(z_epsilon(inst))


def test_z_event_brackets_z_epsilon(demo_1d):
    eps_z = z_epsilon(demo_1d)
    assert z_event(demo_1d, 0.0)
    assert z_event(demo_1d, eps_z - 1e-9)
    assert not z_event(demo_1d, eps_z + 1e-9)
    assert z_epsilon(Instance1D(y=0.001, a=[0.9], lam=0.01)) == 0.0
    with pytest.raises(DomainError):
        z_event(demo_1d, -1.0)


def test_directed_change_swaps_leader(demo_1d):
    assert directed_support_change(demo_1d, 0.3) is None
    changed = directed_support_change(demo_1d, 0.31)
    assert _max_distance(changed, demo_1d) == pytest.approx(0.31)
    assert support_1d(changed) == SupportSet.of(2)


def test_directed_change_to_zero():
    inst = Instance1D(y=0.1, a=[2.0, 0.1], lam=0.1)
    radius = stsp_1d(inst) * 1.01
    changed = directed_support_change(inst, radius)
    assert _max_distance(changed, inst) <= radius + 1e-15
    assert support_1d(changed).is_empty()


def test_directed_change_from_empty():
    inst = Instance1D(y=0.001, a=[0.9, 0.3], lam=0.01)
    radius = stsp_1d(inst) * 1.01
    changed = directed_support_change(inst, radius)
    assert _max_distance(changed, inst) <= radius + 1e-15
    assert support_1d(changed) == SupportSet.of(1)


def test_brute_force_on_demo(demo_1d):
    assert brute_force_stsp_1d(demo_1d, n_directions=2000) == pytest.approx(0.3, rel=1e-6)


@pytest.mark.slow
def test_brute_force_agrees_with_closed_form():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        inst = Instance1D(y=float(rng.choice([-1.0, 1.0]) * rng.uniform(0.05, 2.0)),
                          a=rng.standard_normal(n), lam=float(rng.uniform(0.01, 1.0)))
        exact = stsp_1d(inst)
        found = brute_force_stsp_1d(inst, n_directions=10_000, seed=int(rng.integers(1 << 31)))
        assert found == pytest.approx(exact, rel=0.05)


def _random_instance(rng: np.random.Generator, min_columns: int = 1) -> Instance1D:
    n = int(rng.integers(min_columns, 7))
    return Instance1D(y=float(rng.uniform(-2.0, 2.0)), a=rng.standard_normal(n),
                      lam=float(rng.uniform(0.01, 1.0)))


def test_support_rule_agrees_with_solver():
    rng = np.random.default_rng(15)
    for _ in range(1000):
        inst = _random_instance(rng)
        sol = solve(inst.to_instance(), 1e-12)
        assert support_from_threshold(sol.x, 1e-9) == support_1d(inst)


def test_gap_and_zero_boundary_relation():
    """Below stsp every eps with z_event(eps) has delta >= 2 eps; above it, delta < 2 eps."""
    rng = np.random.default_rng(16)
    for _ in range(200):
        inst = _random_instance(rng, min_columns=2)
        if support_1d(inst).is_empty():
            continue
        stsp = stsp_1d(inst)
        delta = delta_gap(inst.a).delta
        for eps in stsp * np.array([0.1, 0.5, 0.99]):
            if z_event(inst, eps):
                assert delta >= 2.0 * eps
        for eps in stsp * np.array([1.01, 1.5, 3.0]):
            if z_event(inst, eps):
                assert delta < 2.0 * eps


def test_support_is_stable_inside_the_exact_radius():
    rng = np.random.default_rng(17)
    for _ in range(100):
        inst = _random_instance(rng)
        support = support_1d(inst)
        radius = 0.99 * stsp_1d(inst)
        for k in range(50):
            if k % 2 == 0:
                dy = radius * rng.choice([-1.0, 1.0])
                da = radius * rng.choice([-1.0, 1.0], size=inst.N)
            else:
                dy = rng.uniform(-radius, radius)
                da = rng.uniform(-radius, radius, size=inst.N)
            moved = Instance1D(y=inst.y + dy, a=inst.a + da, lam=inst.lam)
            assert support_1d(moved) == support
