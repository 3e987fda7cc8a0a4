import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from tailbound.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_lp

INF = np.inf


def beale():
    # slack columns first so the initial basis is the classic cycling one
    A = np.array([[1, 0, 0, 0.25, -8, -1, 9],
                  [0, 1, 0, 0.5, -12, -0.5, 3],
                  [0, 0, 1, 0, 0, 1, 0]], float)
    b = np.array([0.0, 0.0, 1.0])
    c = -np.array([0, 0, 0, -0.75, 20, -0.5, 6], float)
    return c, A, b, np.zeros(7), np.full(7, INF)


@pytest.mark.parametrize("bland_after", [0, 5, 1000])
def test_beale_cycling_example_terminates(bland_after):
    res = solve_lp(*beale(), bland_after=bland_after)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(1.25, abs=1e-10)


def test_bounded_variables_and_duals():
    c = np.array([3.0, 2.0, 0.0])
    A = np.array([[1.0, 1.0, 1.0]])
    res = solve_lp(c, A, [4.0], [0, 0, 0], [1.5, INF, INF])
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, [1.5, 2.5, 0.0], atol=1e-12)
    assert res.objective == pytest.approx(9.5)
    assert res.duals[0] == pytest.approx(2.0)


def test_infeasible_reports_residual():
    res = solve_lp([1.0, 1.0], [[1.0, 1.0]], [5.0], [0, 0], [1, 1])
    assert res.status == INFEASIBLE
    assert res.infeasibility == pytest.approx(3.0)
    # a fresh zero-cost column [1] would reduce the residual: its phase-one reduced cost is positive
    assert 0.0 - res.duals @ np.array([1.0]) > 0


def test_unbounded_detected():
    res = solve_lp([1.0, 0.0], [[1.0, -1.0]], [0.0], [0, 0], [INF, INF])
    assert res.status == UNBOUNDED


def test_rejects_infinite_lower_bound():
    with pytest.raises(ValueError):
        solve_lp([1.0], [[1.0]], [1.0], [-INF], [INF])


@given(st.integers(0, 100_000))
def test_matches_highs_on_random_lps(seed):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 6)), int(rng.integers(2, 12))
    A = rng.normal(size=(m, n))
    x_feas = rng.uniform(0, 2, n)
    b = A @ x_feas
    ub = np.where(rng.random(n) < 0.5, rng.uniform(2, 4, n), INF)
    c = rng.normal(size=n)
    # keep it bounded: a box row on the total
    A = np.vstack([A, np.ones(n)])
    b = np.append(b, x_feas.sum() + 1.0)
    A = np.hstack([A, np.eye(m + 1)[:, -1:]])
    c = np.append(c, 0.0)
    ub = np.append(ub, INF)
    lb = np.zeros(n + 1)
    res = solve_lp(c, A, b, lb, ub)
    ref = linprog(-c, A_eq=A, b_eq=b, bounds=list(zip(lb, ub)), method="highs")
    assert res.status == OPTIMAL and ref.status == 0
    assert res.objective == pytest.approx(-ref.fun, rel=1e-7, abs=1e-8)
    np.testing.assert_allclose(A @ res.x, b, atol=1e-8)
    assert np.all(res.x >= lb - 1e-9) and np.all(res.x <= ub + 1e-9)
    # complementary slackness via reduced costs
    rc = c - A.T @ res.duals
    at_lb = res.x <= lb + 1e-9
    at_ub = res.x >= ub - 1e-9
    free = ~at_lb & ~at_ub
    assert np.all(np.abs(rc[free]) <= 1e-7)
    assert np.all(rc[at_lb & ~at_ub] <= 1e-7)
