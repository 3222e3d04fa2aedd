import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qfreq.qspace import (
    ClassicalQPoint,
    MultiplicityError,
    QPoint,
    canonical_arrays,
    eta,
    g_metric,
    g_metric_bruteforce,
    gs_metric,
    gs_sq_arrays,
    neg_part,
    ominus,
    pos_part,
)

reals = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def qpoints(draw, q=None):
    q = q or draw(st.integers(1, 4))
    vals = draw(st.lists(reals, min_size=q, max_size=q))
    return QPoint(tuple(vals), draw(st.sampled_from([1, -1])))


@st.composite
def triples(draw):
    q = draw(st.integers(1, 4))
    return tuple(draw(qpoints(q)) for _ in range(3))


def test_g_metric_examples():
    assert g_metric(ClassicalQPoint((0,)), ClassicalQPoint((0,))) == 0
    assert g_metric(ClassicalQPoint((0, 2)), ClassicalQPoint((1, 3))) == pytest.approx(math.sqrt(2))
    assert g_metric(ClassicalQPoint((-1, 0, 1)), ClassicalQPoint((1, 0, -1))) == 0


def test_multiplicity_mismatch():
    with pytest.raises(MultiplicityError):
        g_metric(ClassicalQPoint((0,)), ClassicalQPoint((0, 1)))
    with pytest.raises(MultiplicityError):
        gs_metric(QPoint((0,)), QPoint((0, 1)))


def test_gs_examples():
    a = QPoint((1, -1), 1)
    assert gs_metric(a, a) == 0
    assert gs_metric(a, QPoint((1, -1), -1)) == pytest.approx(2.0)
    assert gs_metric(QPoint((0, 0), 1), QPoint((0, 0), -1)) == 0


def test_canonical_collapse():
    p = QPoint((2, 2), -1)
    assert p.sign == 1
    assert QPoint((0, 0), -1) == QPoint((0, 0), 1)
    assert QPoint((3, 1), 1).values == (1.0, 3.0)


def test_eta_ominus_parts():
    assert eta(QPoint((1, -1))) == 0
    assert eta(QPoint((1, 3), -1)) == 2
    assert eta(QPoint((5,))) == 5
    assert ominus(QPoint((1, 3)), 2) == QPoint((-1, 1), 1)
    assert ominus(QPoint((2, 2), -1), 2) == QPoint((0, 0), 1)
    assert ominus(QPoint((0,)), 0) == QPoint((0,))
    a = QPoint((1, -1), 1)
    assert pos_part(a).values == (-1, 1) and neg_part(a).values == (0, 0)
    b = QPoint((2, 4), -1)
    assert pos_part(b).values == (3, 3) and neg_part(b).values == (2, 4)
    z = QPoint((0, 0), -1)
    assert pos_part(z) == neg_part(z) == ClassicalQPoint((0, 0))


def test_encoding_roundtrip():
    p = QPoint((0.1, -2.5, 3.0), -1)
    assert QPoint.parse(p.encode()) == p
    assert QPoint.parse("−:1,−1") == QPoint((1, -1), -1)
    for bad in ("1,2", "*:1", "+:"):
        with pytest.raises(ValueError):
            QPoint.parse(bad)


@given(st.integers(1, 5).flatmap(lambda q: st.tuples(st.lists(reals, min_size=q, max_size=q), st.lists(reals, min_size=q, max_size=q))))
def test_sorted_matching_is_optimal(pair):
    a, b = ClassicalQPoint(tuple(pair[0])), ClassicalQPoint(tuple(pair[1]))
    assert g_metric(a, b) == g_metric_bruteforce(a, b)


@given(triples())
def test_gs_metric_axioms(t):
    a, b, c = t
    assert gs_metric(a, b) == pytest.approx(gs_metric(b, a), abs=1e-12)
    assert gs_metric(a, a) == 0
    assert gs_metric(a, c) <= gs_metric(a, b) + gs_metric(b, c) + 1e-9


@given(qpoints())
def test_identity_of_indiscernibles(a):
    b = a.flipped()
    if gs_metric(a, b) == 0:
        assert a.is_collapsed() and a == b


@given(qpoints())
def test_eta_of_centred_is_zero(a):
    assert abs(eta(ominus(a, eta(a)))) <= 1e-12 * max(1.0, max(abs(v) for v in a.values))


@given(st.integers(1, 4).flatmap(lambda q: st.tuples(qpoints(q), qpoints(q))), reals)
def test_shift_invariance_same_sign(pair, c):
    a, b = pair
    b = QPoint(b.values, a.sign)
    if b.is_collapsed() or a.is_collapsed():
        return
    sa, sb = ominus(a, c), ominus(b, c)
    if sa.sign != sb.sign:
        return
    assert gs_metric(sa, sb) == pytest.approx(gs_metric(a, b), abs=1e-9)


def test_array_helpers_match_scalar():
    rng = np.random.default_rng(1)
    va = rng.normal(size=(50, 3))
    vb = rng.normal(size=(50, 3))
    va[0] = 0.5
    sa = rng.choice([-1, 1], 50)
    sb = rng.choice([-1, 1], 50)
    va, sa = canonical_arrays(va, sa)
    vb, sb = canonical_arrays(vb, sb)
    assert sa[0] == 1
    got = gs_sq_arrays(va, sa, vb, sb)
    want = [gs_metric(QPoint(tuple(x), int(s)), QPoint(tuple(y), int(t))) ** 2 for x, s, y, t in zip(va, sa, vb, sb)]
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)
