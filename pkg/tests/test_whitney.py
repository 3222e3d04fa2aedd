import math

import numpy as np
import pytest

from qfreq.acceptance import BUMP_PARAMS
from qfreq.kernels import available_backends
from qfreq.whitney import (
    GraphCurrent,
    ParameterError,
    WhitneyParams,
    best_plane_excess,
    bump_current,
    check_fine_cm,
    contained_in,
    excess_scale,
    height,
    neighbour_audit,
    refine,
    unoriented_excess,
)

ORIGIN = (0.0, 0.0, 0.0)


def tilted(s, n=257):
    return GraphCurrent.from_function(lambda x, y: s * x, n)


@pytest.fixture(scope="module")
def bump_forest():
    p = WhitneyParams(**BUMP_PARAMS)
    return refine(bump_current(), p, p.N0 + 3)


def test_params_validation():
    WhitneyParams(1.0, 1.0).validate()
    assert WhitneyParams.smallest_N0(4.0) == 10
    bad = [
        dict(Ce=0.0, Ch=1.0),
        dict(Ce=1.0, Ch=-1.0),
        dict(Ce=1.0, Ch=1.0, beta2=0.2),
        dict(Ce=1.0, Ch=1.0, delta2=0.2, beta2=0.8),
        dict(Ce=1.0, Ch=1.0, M0=3.0),
        dict(Ce=1.0, Ch=1.0, N0=9),
        dict(Ce=1.0, Ch=1.0, c_sigma=-1.0),
    ]
    for kw in bad:
        with pytest.raises(ParameterError):
            WhitneyParams(**kw).validate()


def test_thresholds_scale():
    p = WhitneyParams(2.0, 3.0)
    e, h = p.thresholds(10, 0.25)
    assert e == pytest.approx(2.0 * 0.25 * 2.0 ** (-10 * (2 - 2 / 16)))
    assert h == pytest.approx(3.0 * 0.5 * 2.0 ** (-10 * (1 + 1 / 4)))
    assert p.ball_radius(11) == pytest.approx(p.ball_radius(10) / 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        GraphCurrent(np.zeros((2, 100, 100)))
    with pytest.raises(ValueError):
        GraphCurrent(np.zeros((1, 5, 5)))
    with pytest.raises(ValueError):
        GraphCurrent(np.full((1, 17, 17), np.nan))
    z = np.stack([np.ones((17, 17)), np.zeros((17, 17))])
    assert np.all(GraphCurrent(z).heights[0] == 0)


def test_flat_excess_zero():
    c = GraphCurrent.from_function(lambda x, y: np.zeros(x.shape + (2,)))
    assert unoriented_excess(c, ORIGIN, 1.0) == 0
    assert height(c, ORIGIN, 1.0) == 0
    assert excess_scale(c) == 0
    assert excess_scale(c, c_sigma=0.1) == pytest.approx(0.01)


@pytest.mark.parametrize("s", [0.3, 1.0])
def test_tilted_excess_projection_oracle(s):
    c = tilted(s, 513)
    # squared distance between the tangent projection and the base plane projection
    n = np.array([-s, 0.0, 1.0]) / math.hypot(s, 1.0)
    P = np.eye(3) - np.outer(n, n)
    P0 = np.diag([1.0, 1.0, 0.0])
    oracle = 0.5 * np.sum((P - P0) ** 2)
    assert oracle == pytest.approx(s**2 / (1 + s**2))
    assert unoriented_excess(c, ORIGIN, 1.0) == pytest.approx(oracle, rel=0.01)
    assert unoriented_excess(c, ORIGIN, 1.0, normal=n) == pytest.approx(0.0, abs=1e-12)
    nu, E = best_plane_excess(c, ORIGIN, 1.0)
    assert E == pytest.approx(0.0, abs=1e-10)
    assert abs(nu @ n) == pytest.approx(1.0, abs=1e-10)


def test_best_plane_against_grid_search():
    s = 0.4
    c = GraphCurrent.from_function(lambda x, y: np.stack([s * x + 0.2 * y, 0.1 * x * y], -1))
    nu, E = best_plane_excess(c, (0.2, -0.3, 0.0), 1.2)
    grid = []
    for a in np.linspace(-1.0, 1.0, 81):
        for b in np.linspace(-1.0, 1.0, 81):
            grid.append(unoriented_excess(c, (0.2, -0.3, 0.0), 1.2, normal=(a, b, 1.0)))
    assert E <= min(grid) + 1e-12
    assert E == pytest.approx(min(grid), rel=0.02)
    assert E <= unoriented_excess(c, (0.2, -0.3, 0.0), 1.2)


def test_symmetric_sheets_pick_base_plane():
    s = 0.4
    c = GraphCurrent.from_function(lambda x, y: np.stack([s * x, -s * x], -1))
    nu, E = best_plane_excess(c, ORIGIN, 1.0)
    np.testing.assert_allclose(nu, [0, 0, 1], atol=1e-10)
    assert E == pytest.approx(2 * s**2 / (1 + s**2), rel=0.03)


def test_height_examples():
    c = GraphCurrent.from_function(lambda x, y: np.stack([0 * x, 0 * x + 0.5], -1))
    assert height(c, ORIGIN, 1.0) == pytest.approx(0.5)
    assert unoriented_excess(c, ORIGIN, 1.0) == 0
    for s in (0.3, 1.0):
        t = tilted(s)
        assert height(t, ORIGIN, 1.0) == pytest.approx(2 * s / math.hypot(1, s), abs=2 * t.h * (1 + s))
    with pytest.raises(ValueError):
        height(c, ORIGIN, 0.0)
    with pytest.raises(ValueError):
        best_plane_excess(c, (0.0, 0.0, 50.0), 1.0)


def test_flat_refine_is_empty():
    flat = GraphCurrent.from_function(lambda x, y: np.zeros(x.shape + (3,)))
    p = WhitneyParams(1.0, 1.0)
    f = refine(flat, p, p.N0 + 4)
    assert f.count() == 0 and f.gamma_mask().all()
    assert all(g.evaluated_cells == 0 for g in f.generations)


def test_refine_argument_errors():
    p = WhitneyParams(1.0, 1.0)
    with pytest.raises(ParameterError):
        refine(bump_current(), p, p.N0 - 1)
    assert refine(bump_current(n=9), p, p.N0).j_max == p.N0


def test_bump_forest_structure(bump_forest):
    f = bump_forest
    assert f.count() > 0 and f.count("We") + f.count("Wh") > 0
    assert f.father_rule_violations() == 0
    assert f.overlapping_pairs() == 0
    assert neighbour_audit(f) == 0
    mask = f.gamma_mask()
    assert mask[0, 0] and not mask.all()
    # stopped cubes stay near the bump: inside its radius plus the first ball radius
    cubes = f.cubes()
    reach = 0.5 + f.params.ball_radius(f.params.N0) + 0.1
    centre = cubes[:, :2] + cubes[:, 2:3] / 2
    assert np.all(np.hypot(centre[:, 0], centre[:, 1]) <= reach)


def test_bump_reproducible_and_backends(bump_forest):
    p = WhitneyParams(**BUMP_PARAMS)
    for b in available_backends():
        g = refine(bump_current(), p, p.N0 + 3, backend=b)
        assert g.records() == bump_forest.records()


def test_doubled_constants_shrink(bump_forest):
    p = WhitneyParams(**{k: 2 * v for k, v in BUMP_PARAMS.items()})
    d = refine(bump_current(), p, p.N0 + 3)
    assert contained_in(d, bump_forest)
    area = lambda f, cl: float(np.sum(f.cubes(cl)[:, 2] ** 2))
    assert area(d, ("We", "Wh")) <= area(bump_forest, ("We", "Wh", "Wn")) + 1e-12


def test_two_bumps_neighbours():
    def fn(x, y):
        top = np.zeros(x.shape + (2,))
        for cx in (-1.5, 1.5):
            top[..., 1] += np.maximum(0.4 - np.hypot(x - cx, y), 0.0)
        return top

    c = GraphCurrent.from_function(fn)
    p = WhitneyParams(**BUMP_PARAMS)
    f = refine(c, p, p.N0 + 3)
    assert f.count("Wn") > 0
    assert neighbour_audit(f) == 0 and f.overlapping_pairs() == 0
    cubes = f.cubes()
    xs = cubes[:, 0] + cubes[:, 2] / 2
    assert np.any(xs < 0) and np.any(xs > 0)


def test_fine_cm(bump_forest):
    assert check_fine_cm(bump_forest, []).passed
    far = check_fine_cm(bump_forest, [(3.5, 3.5)])
    assert far.passed and far.n_marks == 1
    x0, y0, side, _ = bump_forest.cubes()[0]
    rep = check_fine_cm(bump_forest, [(x0 + side / 2, y0 + side / 2)])
    assert not rep.passed
    assert any(v[5] == 0.0 for v in rep.violations)


def test_write_outputs(bump_forest, tmp_path):
    d1 = bump_forest.write(tmp_path / "a")
    d2 = bump_forest.write(tmp_path / "b")
    assert d1 == d2
    text = (tmp_path / "a" / "forest.csv").read_text().splitlines()
    assert text[0] == "j,ix,iy,class,x_L,y_L,ell,E_no,h"
    assert len(text) == bump_forest.count() + 1
    rows = (tmp_path / "a" / "gamma_mask.txt").read_text().split()
    assert len(rows) == bump_forest.axis.size
    s = bump_forest.summary()
    assert sum(g["We"] + g["Wh"] + g["Wn"] for g in s["generations"]) == bump_forest.count()
