import numpy as np
import pytest

from qfreq.fields import (
    FieldFormatError,
    Mesh,
    SampledField,
    decompose,
    dirichlet_energy,
    field_from_function,
    lipschitz_estimate,
    read_field,
    write_field,
)
from qfreq.homogeneous import model_field
from qfreq.qspace import QPoint, gs_metric


def model_1d(n=201):
    m = Mesh.interval(-1.0, 1.0, n)
    return field_from_function(m, lambda c: (np.stack([c[:, 0], -c[:, 0]], 1), np.where(c[:, 0] >= 0, 1, -1)))


def const(mesh, v=(0.0, 0.0)):
    return SampledField(mesh, np.tile(v, (mesh.n_nodes, 1)), np.ones(mesh.n_nodes, np.int8))


def test_mesh_invariants():
    with pytest.raises(ValueError):
        Mesh.interval(0, 1, 2)
    d = Mesh.disk(33)
    assert d.kind == "disk" and d.dim == 2 and d.boundary.any()
    assert np.all(np.hypot(*d.coords.T) <= 1 + 1e-12)
    assert d.coarsened().shape[0] == 17
    s = Mesh.square(17, 2.0)
    assert s.h == pytest.approx(0.25) and s.n_nodes == 17 * 17


def test_decompose_examples():
    assert np.all(decompose(const(Mesh.interval(0, 1, 11))) == 0)
    f = model_1d(11)
    lab = decompose(f)
    x = f.mesh.coords[:, 0]
    assert np.all(lab[x > 1e-12] == 1) and np.all(lab[x < -1e-12] == -1) and lab[5] == 0
    m = Mesh.interval(0, 1, 11)
    g = SampledField(m, np.stack([np.zeros(11), np.ones(11)], 1), np.ones(11, np.int8))
    assert np.all(decompose(g) == 1)


def test_zero_set_matches_metric():
    f = model_field(Mesh.disk(33))
    lab = decompose(f)
    zero = np.array([gs_metric(p, QPoint.zero(f.q, np.mean(p.values))) == 0 for p in f.points()])
    assert np.array_equal(lab == 0, zero)


def test_energy_examples():
    assert dirichlet_energy(const(Mesh.interval(0, 1, 11), (1.0, 2.0))) == 0
    m = Mesh.interval(0, 1, 101)
    lin = field_from_function(m, lambda c: (c[:, :1], np.ones(len(c), int)))
    assert dirichlet_energy(lin) == pytest.approx(1.0, abs=1e-2)
    assert dirichlet_energy(model_1d()) == pytest.approx(4.0, abs=0.05)


def test_energy_sign_flip_scaling_additivity():
    f = model_field(Mesh.disk(33))
    e = dirichlet_energy(f)
    assert dirichlet_energy(f.sign_flipped()) == pytest.approx(e, rel=1e-12)
    assert dirichlet_energy(f.scaled(3.0)) == pytest.approx(9 * e, rel=1e-12)
    x = f.mesh.coords[:, 0]
    left, right = x < 0, x > 0
    # both halves share the x = 0 column; its own edges are counted twice
    mid = ~(left | right)
    total = dirichlet_energy(f, left | mid) + dirichlet_energy(f, right | mid) - dirichlet_energy(f, mid)
    assert total == pytest.approx(e, rel=1e-12)
    assert dirichlet_energy(f, np.zeros(f.mesh.n_nodes, bool)) == 0


def test_continuum_limit_2d():
    # u = Re z^2 has energy 2 pi on the unit disk
    for n, tol in ((129, 0.05), (257, 0.03)):
        m = Mesh.disk(n)
        f = field_from_function(m, lambda c: ((c[:, 0] ** 2 - c[:, 1] ** 2)[:, None], np.ones(len(c), int)))
        assert dirichlet_energy(f) == pytest.approx(2 * np.pi, rel=tol)


def test_lipschitz_examples():
    assert lipschitz_estimate(const(Mesh.interval(0, 1, 11))) == 0
    assert lipschitz_estimate(model_1d()) == pytest.approx(np.sqrt(2), rel=1e-9)
    m = Mesh.interval(0, 1, 51)
    f = field_from_function(m, lambda c: (3 * c[:, :1], np.ones(len(c), int)))
    assert lipschitz_estimate(f) == pytest.approx(3.0, rel=1e-9)


def test_zero_average_flag():
    m = Mesh.interval(0, 1, 5)
    with pytest.raises(ValueError):
        SampledField(m, np.ones((5, 2)), np.ones(5, np.int8), zero_average=True)


@pytest.mark.parametrize("mesh", [Mesh.interval(-1, 1, 9), Mesh.disk(17), Mesh.square(9)])
def test_field_file_roundtrip(tmp_path, mesh):
    rng = np.random.default_rng(0)
    f = SampledField(mesh, rng.normal(size=(mesh.n_nodes, 3)), rng.choice([-1, 1], mesh.n_nodes))
    p = tmp_path / "f.txt"
    write_field(f, p)
    g = read_field(p)
    assert g.mesh.same_geometry(f.mesh)
    assert g.equals(f)


def test_field_file_errors(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text("1 2 3 0.0 0.5\n0.0 +:0,0\n0.5 +:1,2,3\n1.0 +:0,0\n")
    with pytest.raises(FieldFormatError):
        read_field(p)
    p.write_text("1 2 3 0.0 0.5\n0.0 +:0,0\n")
    with pytest.raises(FieldFormatError):
        read_field(p)
    p.write_text("x y\n")
    with pytest.raises(FieldFormatError):
        read_field(p)
    # unsorted values are accepted and canonicalised
    p.write_text("1 2 3 0.0 0.5\n0.0 +:3,1\n0.5 -:2,2\n1.0 +:0,0\n")
    f = read_field(p)
    assert f.point(0) == QPoint((1, 3), 1) and f.point(1).sign == 1
