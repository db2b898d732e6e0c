import numpy as np
import pytest

from onlinemep.geometry import Ball, Box
from onlinemep.oracle import solve_instantaneous
from onlinemep.problem import (builtin_separable, consistency_report, estimate_bounds, example1,
                               example2, expected_cost_example2, random_quadratic_instance)


def test_example1_shape_and_oracles(ex1):
    assert (ex1.n, ex1.m, ex1.h) == (6, 1, 1)
    # agent label 3 is index 2: d/dy [(3/2)(y^2 - x^2) - 3 (y - x) sin 0] at y = x = 1
    assert ex1.grad2_f(2, 0, np.array([1.0])) == pytest.approx([3.0])
    assert ex1.solution_path(0) == pytest.approx([0.0])
    rng = np.random.default_rng(1)
    for x, i, t in zip(rng.uniform(-2, 2, 200), rng.integers(0, 6, 200), rng.integers(0, 999, 200)):
        assert ex1.f_value(int(i), int(t), [x], [x]) == 0.0


def test_example1_constraint_variants():
    five = example1(constraint_count=5)
    x = np.array([1.3])
    assert np.array_equal(five.g(5, 4, x), [0.0])
    assert example1().g(5, 4, x)[0] == pytest.approx((np.sin(4) + 1) * 1.69 - 1.3)
    with pytest.raises(ValueError):
        example1(constraint_count=4)


def test_example2_shape_and_path(ex2):
    assert (ex2.n, ex2.m, ex2.h) == (5, 5, 1)
    assert ex2.solution_path(0) == pytest.approx([0, 5, 10, 15, 20])
    s = np.sin(7 / 6)
    assert ex2.solution_path(7)[0] == pytest.approx(abs(35 / 12 * s))


def test_example2_gradient_matches_expected_cost(ex2):
    rng = np.random.default_rng(2)
    h = 1e-5
    for _ in range(50):
        x = rng.uniform(0, 30, 5)
        i, t = int(rng.integers(0, 5)), int(rng.integers(0, 200))
        e = np.eye(5)[i]
        fd = (expected_cost_example2(i, t, x + h * e) - expected_cost_example2(i, t, x - h * e)) / (2 * h)
        assert ex2.grad2_f(i, t, x)[i] == pytest.approx(fd, abs=1e-6)
        assert ex2.f_value(i, t, x, x) == 0.0


def test_example2_monotone(ex2):
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        x, y = rng.uniform(0, 30, 5), rng.uniform(0, 30, 5)
        t = int(rng.integers(0, 500))
        assert (ex2.operator(t, x) - ex2.operator(t, y)) @ (x - y) >= 0


def test_example2_constraint_signs():
    x = np.full(5, 4.0)
    assert example2().g(0, 0, x) == pytest.approx([4.0 - 10.0])
    assert example2("paper").g(0, 0, x) == pytest.approx([4.0 + 10.0])
    with pytest.raises(ValueError):
        example2("other")


def test_consistency_of_builtins(ex1, ex2):
    for inst in (ex1, ex2, random_quadratic_instance(np.random.default_rng(0), 4, 3, 2)):
        rep = consistency_report(inst)
        assert rep.ok(), rep


def test_bounds_example1(ex1_bounds):
    assert ex1_bounds.kappa == 2.0
    # sup |i x - 3 sin t| over the box is 6 * 2 + 3 = 15 before inflation
    assert ex1_bounds.kappa1 >= 15.0
    assert ex1_bounds.kappa1 <= 1.1 * 15.0 + 1e-12
    # sup |sum-free g_i| = (1 + 1) * 4 + 2 = 10 at x = -2, sin t = 1, i = 6
    assert 9.0 <= ex1_bounds.kappa2 <= 11.0 + 1e-12
    assert all(v > 0 for v in (ex1_bounds.kappa3, ex1_bounds.L))


def test_bounds_deterministic_and_floored(ex1):
    assert estimate_bounds(ex1, seed=4) == estimate_bounds(ex1, seed=4)
    inst = builtin_separable(lambda i, t, x: float(x @ x), lambda i, t, x: 2 * x,
                             Ball(np.zeros(2), 1.0), n=3)
    b = estimate_bounds(inst)
    assert b.kappa2 == 1e-9 and b.kappa3 == 1e-9
    with pytest.raises(ValueError, match="1000"):
        estimate_bounds(inst, samples=10)


def test_bounds_reject_non_finite():
    inst = builtin_separable(lambda i, t, x: 0.0,
                             lambda i, t, x: np.array([np.nan if i == 1 else 0.0]),
                             Box([0.0], [1.0]), n=2)
    with pytest.raises(ValueError, match="agent 1"):
        estimate_bounds(inst)


def test_separable_origin_solution():
    inst = builtin_separable(lambda i, t, x: float(x @ x), lambda i, t, x: 2 * x,
                             Ball(np.zeros(2), 1.0), n=3)
    assert np.allclose(solve_instantaneous(inst, 0), 0.0, atol=1e-8)


def test_separable_example1_aggregate_minimizer():
    inst = builtin_separable(lambda i, t, x: 0.5 * (i + 1) * x[0] ** 2 - 3 * x[0] * np.sin(t),
                             lambda i, t, x: np.array([(i + 1) * x[0] - 3 * np.sin(t)]),
                             Box([-2.0], [2.0]), n=6)
    for t in (1, 2, 5):
        assert solve_instantaneous(inst, t) == pytest.approx([6 * np.sin(t) / 7], abs=1e-7)


def test_separable_linear_box_vertex():
    c = np.array([1.0, -2.0])
    inst = builtin_separable(lambda i, t, x: float(c @ x), lambda i, t, x: c,
                             Box(-np.ones(2), np.ones(2)), n=2)
    assert solve_instantaneous(inst, 0) == pytest.approx(-np.sign(c), abs=1e-7)


def test_instance_needs_two_agents():
    with pytest.raises(ValueError, match="2 agents"):
        builtin_separable(lambda i, t, x: 0.0, lambda i, t, x: np.zeros(1), Box([0.0], [1.0]), n=1)
