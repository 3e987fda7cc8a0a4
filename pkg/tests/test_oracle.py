import math

import numpy as np
import pytest

from tailbound.constraints import ConstraintSet
from tailbound.geometry import AxisRectangle, RareEventBoundary, StaircaseAtom, rect_overlap_area, staircase_area
from tailbound.oracle import GridSpec, check_ou_density, grid_lp_bound, mc_probability, verify_report
from tailbound.presets import random_small_instance
from tailbound.solver import DiscreteMixture, recover_density, solve

INF = math.inf


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(10.0, 3)
    with pytest.raises(ValueError):
        GridSpec(0.0, 8)
    with pytest.raises(ValueError):
        GridSpec(10.0, 8, fine_extent=20.0)


def test_graded_offsets():
    off = GridSpec(1000.0, 40, fine_extent=6.0).offsets()
    assert off.size == 41 and off[0] == 0.0 and off[-1] == 1000.0
    assert np.all(np.diff(off) > 0)
    np.testing.assert_allclose(np.diff(off[:31]), 0.2)


def test_trivial_grid_bound():
    cs = ConstraintSet(0.0, 0.0, 1.0, 1.0, INF, INF, ())
    g = grid_lp_bound(cs, RareEventBoundary.constant(0.0, 0.0), 1.0, GridSpec(5.0, 8))
    assert g.value == pytest.approx(1.0)


def test_refinement_never_decreases_bound():
    for seed in range(20):
        cs, b = random_small_instance(seed)
        coarse = grid_lp_bound(cs, b, 1.0, GridSpec(10.0, 12))
        fine = grid_lp_bound(cs, b, 1.0, GridSpec(10.0, 24))
        if coarse.feasible:
            assert fine.feasible and fine.value >= coarse.value - 1e-9


def test_infeasible_grid_reported():
    from tailbound.constraints import MomentRow

    rows = (MomentRow(AxisRectangle(0.0, 1.0, 0.0, INF), 0.9, 1.0), MomentRow(AxisRectangle(2.0, INF, 0.0, INF), 0.5, 1.0))
    g = grid_lp_bound(ConstraintSet(0.0, 0.0, 1.0, 1.0, INF, INF, rows), RareEventBoundary.constant(0.0, 0.0),
                      1.0, GridSpec(5.0, 8))
    assert not g.feasible and g.value == -INF


def test_ou_check_examples():
    mix = DiscreteMixture([StaircaseAtom(0, 0, [1.0, 2.0], [0.5, 1.0])], np.array([1.0]))
    from tailbound.solver import SolveReport

    dens = recover_density(SolveReport(1.0, 1.0, mix, {}, {}))
    assert check_ou_density(dens, GridSpec(4.0, 32), 0.0, 0.0)
    assert check_ou_density(lambda x, y: np.ones_like(x), GridSpec(4.0, 8), 0.0, 0.0)

    def star(x, y):
        return np.exp(-np.maximum(np.arctan(y / x), np.arctan(x / y)) * (x + y))

    assert star(1.0, 2.0) < star(2.0, 2.0)
    assert not check_ou_density(star, GridSpec(2.0, 4), 1.0, 1.0)


def test_mc_rectangle_atom():
    a = StaircaseAtom(0, 0, [1.0], [2.0])
    est, se = mc_probability(DiscreteMixture([a], np.array([1.0])), AxisRectangle(0, 1, 0, 2), 10_000)
    assert est == 1.0 and se == 0.0


def test_mc_matches_closed_form_and_is_seeded():
    a = StaircaseAtom(0, 0, [1.0, 2.0, 0.5], [0.3, 1.0, 2.0])
    rect = AxisRectangle(0.5, 2.5, 0.2, 1.8)
    mix = DiscreteMixture([a], np.array([1.0]))
    est, se = mc_probability(mix, rect, 400_000, seed=3)
    exact = rect_overlap_area(a, rect) / staircase_area(a)
    assert abs(est - exact) <= 4 * se
    assert mc_probability(mix, rect, 400_000, seed=3) == (est, se)
    with pytest.raises(ValueError):
        mc_probability(mix, rect, 100)


def test_mc_unbiased_over_seeds():
    a = StaircaseAtom(0, 0, [1.0, 1.0], [1.0, 1.0])
    b = StaircaseAtom(0, 0, [3.0], [0.5])
    mix = DiscreteMixture([a, b], np.array([0.3, 0.7]))
    rect = AxisRectangle(0.5, 1.5, 0.0, 1.2)
    exact = 0.3 * rect_overlap_area(a, rect) / staircase_area(a) + 0.7 * rect_overlap_area(b, rect) / staircase_area(b)
    ests = [mc_probability(mix, rect, 10_000, seed=s)[0] for s in range(100)]
    pooled = math.sqrt(exact * (1 - exact) / (10_000 * 100))
    assert abs(np.mean(ests) - exact) < 2 * pooled


@pytest.fixture(scope="module")
def honest():
    cs, b = random_small_instance(2)
    return cs, b, solve(cs, b, 1, box_bound=10.0)


def test_verify_honest_report(honest):
    cs, b, rep = honest
    res = verify_report(rep, cs, b, mc_draws=200_000)
    assert res.feasible and res.ou_check and res.passed
    assert res.objective_error < 1e-9
    assert res.mc_z <= 4


def test_verify_perturbed_report(honest):
    cs, b, rep = honest
    rep.mixture.probs = rep.mixture.probs.copy()
    rep.mixture.probs[0] += 0.01
    res = verify_report(rep, cs, b, mc_draws=0)
    assert not res.feasible and not res.passed
    assert abs(res.residuals["normalization"]) == pytest.approx(0.01)
    rep.mixture.probs[0] -= 0.01
