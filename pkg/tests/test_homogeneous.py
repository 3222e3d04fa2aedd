import numpy as np
import pytest

from qfreq.fields import Mesh, SampledField, interpolate_nodal
from qfreq.frequency import profile
from qfreq.homogeneous import (
    ClassificationError,
    HarmonicPolynomial2D,
    HomogeneousSpec,
    SpecError,
    build_homogeneous,
    check_stationarity,
    classify_1d,
    components_of_nodal_partition,
    measured_frequency_is_integer,
    model_field,
    model_spec,
    optimal_1d_singular_point,
    read_spec,
    write_spec,
)
from qfreq.minimize import BoundaryTrace, SolveParams, solve
from qfreq.qspace import QPoint

UNIT = np.array([1.0, -1.0]) / np.sqrt(2)


def field_alpha(alpha, mesh, vector=UNIT):
    p = HarmonicPolynomial2D(alpha, 1.0, 0.0)
    return p, build_homogeneous(HomogeneousSpec.uniform(p, vector), mesh)


def test_polynomial_validation_and_values():
    with pytest.raises(SpecError):
        HarmonicPolynomial2D(0, 1.0, 0.0)
    with pytest.raises(SpecError):
        HarmonicPolynomial2D(2, 0.0, 0.0)
    p = HarmonicPolynomial2D(3, 0.3, -1.2)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 2))
    r, phi = np.hypot(*x.T), np.arctan2(x[:, 1], x[:, 0])
    np.testing.assert_allclose(p(x), r**3 * (0.3 * np.cos(3 * phi) - 1.2 * np.sin(3 * phi)), atol=1e-12)
    # harmonic: 5-point Laplacian of a cubic is exact
    h = 1e-2
    lap = sum(p(x + d) for d in ([h, 0], [-h, 0], [0, h], [0, -h])) - 4 * p(x)
    np.testing.assert_allclose(lap / h**2, 0.0, atol=1e-6)
    eps = 1e-6
    num = np.stack([(p(x + [eps, 0]) - p(x - [eps, 0])) / (2 * eps), (p(x + [0, eps]) - p(x - [0, eps])) / (2 * eps)], 1)
    np.testing.assert_allclose(p.gradient(x), num, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_nodal_components(alpha):
    part = components_of_nodal_partition(HarmonicPolynomial2D(alpha, 1.0, 0.0), Mesh.disk(129))
    assert part.n_plus == alpha and part.n_minus == alpha and part.consistent


def test_sector_labels_agree_with_flood_fill():
    m = Mesh.disk(129)
    p = HarmonicPolynomial2D(3, 1.0, 0.5)
    part = components_of_nodal_partition(p, m)
    jp, _ = p.sector(m.coords)
    for lab in range(1, 4):
        nodes = part.plus_labels == lab
        assert np.unique(jp[nodes]).size == 1


def test_spec_violations_named():
    p = HarmonicPolynomial2D(2, 1.0, 0.0)
    bad = HomogeneousSpec(p, [[1.0, 0.0], [1.0, -1.0]], [[1.0, -1.0], [1.0, -1.0]])
    msgs = bad.violations()
    assert any("zero-sum" in s and "+0" in s for s in msgs)
    assert any("transmission" in s for s in msgs)
    with pytest.raises(SpecError):
        build_homogeneous(bad, Mesh.disk(17))
    short = HomogeneousSpec(p, [[1.0, -1.0]], [[1.0, -1.0]])
    assert "need 2 vectors" in short.violations()[0]


def test_model_field_from_spec():
    m = Mesh.disk(33)
    f = model_field(m)
    x = m.coords[:, 0]
    np.testing.assert_allclose(f.values, np.sort(np.stack([x, -x], 1), axis=1), atol=1e-15)
    assert np.all(f.signs[x < 0] == -1) and np.all(f.signs[x > 0] == 1)
    assert f.zero_average


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_built_field_is_homogeneous(alpha):
    m = Mesh.disk(129)
    _, f = field_alpha(alpha, m)
    rng = np.random.default_rng(alpha)
    pts = rng.uniform(-0.35, 0.35, size=(200, 2))
    for lam in (1.5, 2.0):
        a = interpolate_nodal(m, f.values, pts)
        b = interpolate_nodal(m, f.values, lam * pts)
        # interpolation error is O(h^2 |D^2 u|); compare away from nothing special
        np.testing.assert_allclose(b, lam**alpha * a, atol=5e-3 * lam**alpha)


@pytest.mark.parametrize("alpha", [1, 2, 3])
def test_pos_minus_neg_recovers_polynomial(alpha):
    m = Mesh.disk(65)
    p, f = field_alpha(alpha, m)
    val = p(m.coords)
    norm = np.linalg.norm(f.values, axis=1)
    np.testing.assert_allclose(np.where(f.signs > 0, norm, -norm), val, atol=1e-12)


@pytest.mark.parametrize("alpha", [2, 3])
def test_integer_frequency(alpha):
    _, f = field_alpha(alpha, Mesh.disk(257))
    rep = measured_frequency_is_integer(f)
    assert rep.passed and rep.nearest == alpha


def test_integer_frequency_model_and_error():
    assert measured_frequency_is_integer(model_field(Mesh.disk(129))).nearest == 1
    m = Mesh.disk(33)
    z = SampledField(m, np.zeros((m.n_nodes, 2)), np.ones(m.n_nodes, np.int8))
    with pytest.raises(ValueError):
        measured_frequency_is_integer(z)


def test_frequency_constant_for_built_fields():
    _, f = field_alpha(2, Mesh.disk(257))
    I = profile(f, (0, 0), np.linspace(0.2, 0.8, 7)).I
    assert np.ptp(I) / I.mean() <= 0.01


def test_spec_file_roundtrip(tmp_path):
    p = HarmonicPolynomial2D(2, 0.5, 0.25)
    spec = HomogeneousSpec.uniform(p, UNIT)
    write_spec(spec, tmp_path / "s.txt")
    back = read_spec(tmp_path / "s.txt")
    assert back.p == p
    np.testing.assert_array_equal(back.plus, spec.plus)
    (tmp_path / "bad.txt").write_text("2 1.0 0.0\n+ 0 1 -1\n")
    with pytest.raises(SpecError):
        read_spec(tmp_path / "bad.txt")
    (tmp_path / "bad2.txt").write_text("1 1.0 0.0\n+ 0 1 0\n- 0 1 -1\n")
    with pytest.raises(SpecError):
        read_spec(tmp_path / "bad2.txt")


def test_classify_solved_1d():
    m = Mesh.interval(-1, 1, 201)
    tr = BoundaryTrace.from_endpoints(m, QPoint((2, -2), -1), QPoint((1, -1), 1))
    f, _ = solve(tr, m, SolveParams(tol=1e-12, max_sweeps=20000))
    c = classify_1d(f)
    assert c.singular_point == pytest.approx(1 / 3, abs=m.h)
    np.testing.assert_allclose(c.a, [-1.5, 1.5], atol=0.02)
    np.testing.assert_allclose(c.b, [-1.5, 1.5], atol=0.02)
    assert c.valid and c.residual <= 1e-4


def test_classify_no_sign_change_and_negative_controls():
    m = Mesh.interval(-1, 1, 41)
    x = m.coords[:, 0]
    f = SampledField(m, np.stack([x - 2, 2 - x], 1), np.ones(41, np.int8))
    assert classify_1d(f).singular_point is None
    # |a| = 2 |b|: valid zero sums but mismatched norms
    v = np.where((x > 0)[:, None], np.stack([2 * x, -2 * x], 1), np.stack([x, -x], 1))
    g = SampledField(m, v, np.where(x >= 0, 1, -1))
    c = classify_1d(g)
    assert c.zero_sum and not c.norms_match and not c.valid
    # two separate sign changes
    s = np.where(np.abs(x) < 0.5, 1, -1)
    h = SampledField(m, np.stack([np.abs(np.abs(x) - 0.5), -np.abs(np.abs(x) - 0.5)], 1), s)
    with pytest.raises(ClassificationError):
        classify_1d(h)


def test_classify_roundtrip_on_model():
    c = classify_1d(model_field(Mesh.interval(-1, 1, 101)))
    assert c.singular_point == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(c.a, [-1, 1], atol=1e-9)


def test_optimal_singular_point():
    x0, e = optimal_1d_singular_point(np.sqrt(8), np.sqrt(2))
    assert x0 == pytest.approx(1 / 3, abs=1e-6) and e == pytest.approx(9.0, abs=1e-9)


def test_stationarity():
    m1 = model_field(Mesh.interval(-1, 1, 101))
    assert check_stationarity(m1).energy_density_deviation <= 1e-9
    m = Mesh.disk(129)
    rep = check_stationarity(model_field(m))
    assert rep.laplacian_residual <= 1e-8 and rep.transmission_residual <= 10 * m.h
    _, f = field_alpha(2, m)
    assert check_stationarity(f).transmission_residual <= 20 * m.h
    p = HarmonicPolynomial2D(1, 1.0, 0.0)
    bad = HomogeneousSpec(p, [2 * UNIT], [UNIT])
    g = build_homogeneous(bad, m, validate=False)
    rep = check_stationarity(g)
    # |grad u+|^2 - |grad u-|^2 = (4 - 1) |A-|^2 |grad p|^2 = 3
    assert rep.transmission_mean == pytest.approx(3.0, rel=0.05)
