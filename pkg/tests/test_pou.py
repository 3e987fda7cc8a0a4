import json
import math

import numpy as np
import pytest

from oracles import two_atom_pou_bound
from tailbound.errors import DegenerateAtomError, GeometryDomainError
from tailbound.oracle import verify_report
from tailbound.pou import (ConstantBand, PiecewiseBand, PouAtom, PouMixture, PouProblem, PouRow,
                           SamplerAndDensity, band_from_spec, desk_instance, evaluate_pou_column,
                           recover_1pou, solve_1pou)
from tailbound.solver import SolveReport

INF = math.inf


def problem(rows=(), uX1=INF, g1=0.0, g2=INF, L=100.0, c=1.0, d=2):
    return PouProblem(0.0, (-INF,) * (d - 1), c, c, uX1, tuple(rows), ConstantBand(g1), ConstantBand(g2), L)


def test_column_examples():
    p = problem(g1=1.0)
    col = evaluate_pou_column(p, PouAtom((2.0, 0.0)), 0.6)
    assert col.objective_coeff == pytest.approx(0.3)
    assert col.uX_coeff == pytest.approx(0.5)
    inside = PouRow(((0.0, 1.0), (-1.0, 1.0)), 0, 1)
    p = problem(rows=[inside])
    assert evaluate_pou_column(p, PouAtom((2.0, 0.5)), 1.0).row_coeffs[0] == pytest.approx(0.5)
    assert evaluate_pou_column(p, PouAtom((2.0, 3.0)), 1.0).row_coeffs[0] == 0.0


def test_column_rejects_atom_at_threshold():
    with pytest.raises(DegenerateAtomError):
        evaluate_pou_column(problem(), PouAtom((0.0, 0.0)), 1.0)


def test_problem_validation():
    with pytest.raises(GeometryDomainError):
        problem(g1=3.0, g2=2.0)
    with pytest.raises(GeometryDomainError):
        PouProblem(0.0, (-INF,), 1, 1, INF, (PouRow(((-1.0, 1.0), (-INF, INF)), 0, 1),),
                   ConstantBand(0.0), ConstantBand(INF))


def test_desk_instance_value_and_oracle():
    p = desk_instance()
    rep = solve_1pou(p)
    assert rep.value == pytest.approx(0.49, abs=0.01)
    brute = two_atom_pou_bound(p)
    assert rep.value >= brute - 1e-9
    assert rep.value == pytest.approx(brute, abs=2e-3)
    assert len(rep.mixture.atoms) <= p.n + 2


def test_desk_value_grows_with_box():
    values = [solve_1pou(desk_instance(L)).value for L in (10.0, 100.0, 1000.0)]
    # mass outside [0, 1] is at most 1 - 0.4975, which caps the bound as L grows
    assert values[0] < values[1] < values[2] <= 0.5025 + 1e-9


def test_no_rows_full_band_gives_c():
    rep = solve_1pou(problem(c=0.3))
    assert rep.value == pytest.approx(0.3)


def test_density_cap_floor_on_atoms():
    p = problem(uX1=0.1, g1=5.0, c=1.0)
    rep = solve_1pou(p)
    for a in rep.mixture.atoms:
        assert a.z[0] >= 1.0 / 0.1 - 1e-9


def test_three_dimensional_instance():
    row = PouRow(((0.0, 1.0), (-INF, 0.0), (-INF, INF)), 0.3, 0.4)
    p = PouProblem(0.0, (-INF, -INF), 1.0, 1.0, 2.0, (row,), ConstantBand(2.0), ConstantBand(INF), 50.0)
    rep = solve_1pou(p)
    assert rep.feasible and len(rep.mixture.atoms) <= 3
    assert verify_report(rep, p, mc_draws=100_000).passed


def test_piecewise_band():
    g1 = PiecewiseBand(((-INF, 0.0, 1.0), (0.0, 1.0, 1.0)))
    np.testing.assert_allclose(g1(np.array([[-2.0], [0.5], [3.0]])), [1.0, 1.5, 4.0])
    p = PouProblem(0.0, (0.0,), 1.0, 1.0, 1.0, (), g1, ConstantBand(INF), 20.0)
    rep = solve_1pou(p)
    assert 0 < rep.value < 1
    assert verify_report(rep, p, mc_draws=100_000).passed


def test_band_specs():
    assert band_from_spec("x10", 2.0).value == 2.0
    assert band_from_spec("inf", 2.0).value == INF
    assert band_from_spec(3, 2.0).value == 3.0
    pw = band_from_spec([{"x_b": 0, "slope": 1, "intercept": "inf"}], 0.0)
    assert math.isinf(pw(np.array([[1.0]]))[0])


def test_problem_json_round_trip():
    p = desk_instance()
    again = PouProblem.from_json(json.dumps(p.to_dict()))
    assert again.to_dict() == p.to_dict()
    doc = p.to_dict()
    del doc["lF"], doc["uF"]
    doc["c"] = 0.5
    assert PouProblem.from_dict(doc).lF == 0.5


def test_report_round_trip_keeps_points():
    rep = solve_1pou(desk_instance())
    again = SolveReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert isinstance(again.mixture, PouMixture)
    assert [a.z for a in again.mixture.atoms] == [a.z for a in rep.mixture.atoms]


def test_single_atom_sampler():
    dist = SamplerAndDensity(PouMixture([PouAtom((1.0, 0.0))], np.array([1.0])), 0.0)
    assert dist.marginal_density(0.5) == pytest.approx(1.0)
    assert dist.marginal_density(0.0) == pytest.approx(1.0)
    assert dist.marginal_density(1.5) == 0.0


def test_sampler_matches_closed_form_cdf():
    rep = solve_1pou(desk_instance())
    dist = recover_1pou(rep, desk_instance())
    x = np.sort(dist.sample(1_000_000, np.random.default_rng(4))[:, 0])
    emp = np.arange(1, x.size + 1) / x.size
    F = dist.marginal_cdf(x)
    assert np.max(np.abs(emp - F)) < 0.002
    grid = np.linspace(0.0, 100.0, 1001)
    dens = dist.marginal_density(grid)
    assert np.all(np.diff(dens) <= 1e-12)
    assert dist.marginal_density(1e-12) == pytest.approx(dist.marginal_density(0.0))


def test_verify_flags_tampering():
    p = desk_instance()
    rep = solve_1pou(p)
    assert verify_report(rep, p, mc_draws=100_000).passed
    rep.mixture.probs = rep.mixture.probs.copy()
    rep.mixture.probs[0] += 0.01
    res = verify_report(rep, p, mc_draws=0)
    assert not res.passed and any("normalization" in m for m in res.messages)


def test_report_flags_singular_tail():
    assert solve_1pou(desk_instance()).diagnostics["singular_tail"] is True
