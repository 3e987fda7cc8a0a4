"""Both kernel backends must agree; the numpy path is the reference semantics."""
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tailbound import kernels
from tailbound.geometry import RareEventBoundary, rects_array, AxisRectangle

INF = math.inf


@pytest.fixture(params=[True, False], ids=["numba", "numpy"])
def backend(request, monkeypatch):
    monkeypatch.setattr(kernels, "USE_NUMBA", request.param)
    return request.param


def both(fn):
    old = kernels.USE_NUMBA
    try:
        kernels.USE_NUMBA = True
        a = fn()
        kernels.USE_NUMBA = False
        b = fn()
    finally:
        kernels.USE_NUMBA = old
    return a, b


BOUNDARY = RareEventBoundary(((0.0, 1.5, -0.5), (1.0, -0.3, 2.0), (2.5, 0.0, INF)))
RECTS = rects_array([AxisRectangle(0.0, 1.2, 0.0, INF), AxisRectangle(0.3, INF, 0.5, 2.0),
                     AxisRectangle(0.7, 1.9, 0.2, 1.1)])


@given(st.floats(0, 3), st.floats(0, 3), st.floats(-1, 4))
def test_excess_scalar_matches_vector(a, b, v):
    a, b = min(a, b), max(a, b)
    bx, sl, ic = BOUNDARY.arrays()
    s, vec = both(lambda: kernels.excess_integral(a, b, v, 0.0, bx, sl, ic))
    arr = kernels.excess_integral(np.array([a]), np.array([b]), np.array([v]), 0.0, bx, sl, ic)[0]
    assert s == pytest.approx(vec, abs=1e-12) and s == pytest.approx(arr, abs=1e-12)


def test_excess_against_hand_integral():
    # pieces: 1.7 on (0.2, 1/3], 2.2 - 1.5x on (1/3, 1], 0.3(x - 1) on (1, 2.5], nothing after
    exact = 1.7 * (1 / 3 - 0.2) + 0.8 + 0.15 * 1.5 ** 2
    bx, sl, ic = BOUNDARY.arrays()
    got = both(lambda: kernels.excess_integral(0.2, 2.8, 1.7, 0.0, bx, sl, ic))
    assert got[0] == pytest.approx(exact, abs=1e-14) and got[1] == pytest.approx(exact, abs=1e-14)


@given(st.integers(1, 8), st.integers(0, 1000))
def test_staircase_eval_parity(k, seed):
    rng = np.random.default_rng(seed)
    z = rng.uniform(0.05, 1, k)
    w = rng.uniform(0, 1, k)
    w[0] += 0.05
    bx, sl, ic = BOUNDARY.arrays()
    a, b = both(lambda: kernels.staircase_eval(z, w, 0.0, 0.0, RECTS, bx, sl, ic))
    np.testing.assert_allclose(a[:4], b[:4], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(a[4], b[4], rtol=1e-12, atol=1e-14)


def test_dp_parity():
    rng = np.random.default_rng(2)
    bx, sl, ic = BOUNDARY.arrays()
    Xg = np.concatenate(([0.0], np.sort(rng.uniform(0, 4, 30))))
    Yg = np.concatenate(([0.0], np.sort(rng.uniform(0, 4, 25))))
    mu = rng.normal(0, 0.3, RECTS.shape[0])

    def run():
        F = kernels.dp_fill(Xg, Yg, 0.0, bx, sl, ic, RECTS, mu, 1.0, 0.2, 0.05)
        return F, kernels.dp_solve(F, Yg, 0.0, 0.1)

    (F1, (v1, h1)), (F2, (v2, h2)) = both(run)
    np.testing.assert_allclose(F1, F2, rtol=1e-12, atol=1e-13)
    assert v1 == pytest.approx(v2, rel=1e-12, abs=1e-13)
    np.testing.assert_array_equal(h1, h2)


def test_dp_solve_is_optimal_on_tiny_grid():
    # brute force over all non-increasing height profiles on 3 columns x 3 levels
    import itertools

    rng = np.random.default_rng(9)
    Yg = np.array([0.0, 1.0, 2.0, 3.0])
    F = rng.normal(0, 1, (3, 3))
    piX = 0.4
    val, heights = kernels.dp_solve(F, Yg, 0.0, piX)
    best = -np.inf
    for prof in itertools.product(range(-1, 3), repeat=3):
        active = [p for p in prof if p >= 0]
        if not active or prof[0] < 0:
            continue
        # non-increasing, columns beyond the staircase are a suffix
        cut = len(active)
        if any(p < 0 for p in prof[:cut]) or any(p >= 0 for p in prof[cut:]):
            continue
        if any(prof[i] < prof[i + 1] for i in range(cut - 1)):
            continue
        best = max(best, sum(F[i, prof[i]] for i in range(cut)) - piX * Yg[prof[0] + 1])
    assert val == pytest.approx(best, abs=1e-12)


def test_map_uniforms_parity_and_uniformity():
    edges = np.array([0.0, 1.0, 2.0, 0.0, 3.0])
    heights = np.array([2.0, 1.0, 0.5])
    offsets = np.array([0, 2, 3])
    cum_p = np.array([0.3, 1.0])
    cum_area = np.array([2 / 3, 1.0, 1.0])
    u = np.random.default_rng(0).random((200_000, 4))
    (x1, y1), (x2, y2) = both(lambda: kernels.map_uniforms(u, edges, heights, offsets, cum_p, cum_area, 0.0))
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_array_equal(y1, y2)
    first = u[:, 0] < 0.3
    # inside the first atom points land on the second step with probability 1/3
    assert np.mean(x1[first] > 1.0) == pytest.approx(1 / 3, abs=0.01)
    assert np.all(y1[x1 > 1.0] <= 1.0 + 1e-15)


def test_three_step_grid_parity():
    bx, sl, ic = RareEventBoundary.affine(2.0, 0.0, 0.0).arrays()
    a, b = both(lambda: kernels.three_step_grid(0.0, 1.0, 0.0, 2.0, 1.0, 0.0, bx, sl, ic, 64))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_params_round_trip():
    z = np.array([0.5, 2.0])
    w = np.array([1.0, 0.25])
    t = kernels.encode_params(z, w)
    z2, w2 = kernels.decode_params(t, 2, 1e-9, 100.0, 100.0)
    np.testing.assert_allclose(z2, z)
    np.testing.assert_allclose(w2, w)


SCRIPT = """
import json
from tailbound.presets import random_small_instance
from tailbound.solver import solve
cs, b = random_small_instance(4)
r = solve(cs, b, c_grid=1, box_bound=10.0)
print(json.dumps({"value": r.value}))
"""


@pytest.mark.parametrize("flag", ["0", "1"])
def test_env_flag_selects_backend_end_to_end(flag):
    env = dict(os.environ, TAILBOUND_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from tailbound import kernels; print(kernels.USE_NUMBA)\n" + SCRIPT],
                         env=env, capture_output=True, text=True, check=True).stdout.splitlines()
    assert out[0] == ("True" if flag == "1" else "False")
    value = json.loads(out[-1])["value"]
    from tailbound.presets import random_small_instance
    from tailbound.oracle import GridSpec, grid_lp_bound
    cs, b = random_small_instance(4)
    lower = grid_lp_bound(cs, b, 1.0, GridSpec(10.0, 48)).value
    assert lower <= value * (1 + 1e-9)
    assert value <= 1.0
