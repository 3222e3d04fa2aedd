import numpy as np
import pytest

from qfreq import kernels
from qfreq.fields import Mesh
from qfreq.frequency import model_trace
from qfreq.minimize import BoundaryTrace, solve
from qfreq.qspace import canonical_arrays

py = kernels.get_backend("python")
try:
    cy = kernels.get_backend("compiled")
except ImportError:  # extension not built
    cy = None

needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension unavailable")


def test_backend_selection():
    assert kernels.BACKEND in ("compiled", "python")
    assert kernels.get_backend() is kernels.get_backend(kernels.BACKEND)
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def _random_state(seed=0, n=33, q=3):
    m = Mesh.disk(n)
    rng = np.random.default_rng(seed)
    v, s = canonical_arrays(rng.normal(size=(m.n_nodes, q)), rng.choice([-1, 1], m.n_nodes))
    v[::7] = 0.25  # some collapsed nodes
    v, s = canonical_arrays(v, s)
    return m, np.ascontiguousarray(v), np.ascontiguousarray(s)


@needs_ext
def test_relax_nodes_equivalent():
    m, v, s = _random_state()
    nbr = np.ascontiguousarray(m.neighbors)
    for colour in (0, 1):
        nodes = np.ascontiguousarray(np.nonzero((m.color == colour) & ~m.boundary)[0].astype(np.int64))
        v1, s1 = v.copy(), s.copy()
        v2, s2 = v.copy(), s.copy()
        py.relax_nodes(v1, s1, nbr, nodes, 1e-12)
        cy.relax_nodes(v2, s2, nbr, nodes, 1e-12)
        np.testing.assert_allclose(v1, v2, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(s1, s2)


@needs_ext
def test_edge_energy_equivalent():
    m, v, s = _random_state(1)
    e = m.edges
    ea = np.ascontiguousarray(e[:, 0])
    eb = np.ascontiguousarray(e[:, 1])
    assert py.edge_energy(v, s, ea, eb) == pytest.approx(cy.edge_energy(v, s, ea, eb), rel=1e-12)


@needs_ext
def test_ball_kernels_equivalent():
    rng = np.random.default_rng(2)
    z = np.sort(rng.normal(scale=0.1, size=(2, 40, 40)), axis=0)
    gx, gy = np.gradient(z, 0.1, axis=1), np.gradient(z, 0.1, axis=2)
    px, py_, pz = rng.uniform(-1.5, 1.5, 25), rng.uniform(-1.5, 1.5, 25), rng.normal(scale=0.05, size=25)
    args = [np.ascontiguousarray(a) for a in (px, py_, pz, z, gx, gy)]
    o1, o2 = np.zeros((25, 7)), np.zeros((25, 7))
    h1 = py.ball_moments(*args, -2.0, -2.0, 0.1, 0.45, o1)
    h2 = cy.ball_moments(*args, -2.0, -2.0, 0.1, 0.45, o2)
    np.testing.assert_array_equal(np.asarray(h1), np.asarray(h2))
    np.testing.assert_allclose(o1, o2, rtol=1e-12, atol=1e-15)
    nrm = rng.normal(size=(25, 3))
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    n = [np.ascontiguousarray(nrm[:, k]) for k in range(3)]
    r1 = py.ball_extent(*args[:4], -2.0, -2.0, 0.1, 0.45, *n)
    r2 = cy.ball_extent(*args[:4], -2.0, -2.0, 0.1, 0.45, *n)
    for a, b in zip(r1, r2):
        np.testing.assert_allclose(np.asarray(a, float), np.asarray(b, float), rtol=1e-12, atol=1e-15)


@needs_ext
def test_solve_equivalent_across_backends():
    m = Mesh.disk(33)
    tr = BoundaryTrace.from_angular(m, model_trace)
    f1, r1 = solve(tr, m, backend="python")
    f2, r2 = solve(tr, m, backend="compiled")
    assert r1.energy == pytest.approx(r2.energy, rel=1e-10)
    assert f1.equals(f2, atol=1e-9)
    assert r1.backend == "python" and r2.backend == "compiled"
