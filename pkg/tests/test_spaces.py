import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from imeasure.spaces import (
    NormedSpace,
    NormTag,
    Operator,
    Vector,
    dual_norm,
    norm,
    norming_functional,
    operator_norm,
    operator_norm_bounds,
    unit_ball_vertices,
    vector_norm,
)

TAGS = list(NormTag)
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_dual_is_an_involution():
    for tag in TAGS:
        assert tag.dual.dual is tag
    assert NormTag.SUM.dual is NormTag.MAX


def test_vector_norms():
    x = np.array([3.0, -4.0])
    assert vector_norm(x, NormTag.SUM) == 7.0
    assert vector_norm(x, NormTag.EUCLIDEAN) == 5.0
    assert vector_norm(x, NormTag.MAX) == 4.0
    v = Vector(NormedSpace(2, NormTag.SUM), x)
    assert norm(v) == 7.0
    assert dual_norm(v) == 4.0


def test_stacked_norms_work_along_last_axis():
    x = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(vector_norm(x, NormTag.MAX), [1.0, 3.0, 5.0])


def test_shape_validation():
    with pytest.raises(ValueError):
        Vector(NormedSpace(2), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        Operator(NormedSpace(2), NormedSpace(3), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        NormedSpace(0)


def test_values_are_read_only():
    v = Vector(NormedSpace(2), [1.0, 2.0])
    with pytest.raises(ValueError):
        v.coords[0] = 5.0


def test_operator_algebra():
    E = NormedSpace(2, NormTag.MAX)
    I = Operator.identity(E)
    x = Vector(E, [1.0, -2.0])
    assert (2 * I)(x) == Vector(E, [2.0, -4.0])
    assert (I + Operator.zero(E, E)) == I
    assert I.adjoint().domain == E.dual


def test_row_operator_from_max_to_sum():
    T = Operator(NormedSpace(2, NormTag.MAX), NormedSpace(1, NormTag.SUM), [[1.0, 1.0]])
    assert operator_norm(T) == 2.0


@pytest.mark.parametrize("dom,cod", list(itertools.product(TAGS, TAGS)))
def test_exact_operator_norm_matches_vertex_or_sampling_bound(dom, cod, rng):
    a = rng.standard_normal((3, 2))
    T = Operator(NormedSpace(2, dom), NormedSpace(3, cod), a)
    b = operator_norm_bounds(T)
    assert b.exact
    xs = rng.standard_normal((2000, 2))
    xs /= vector_norm(xs, dom)[:, None]
    sampled = vector_norm(xs @ a.T, cod).max()
    assert sampled <= b.upper * (1 + 1e-12)
    assert sampled >= 0.9 * b.upper


def test_large_domain_gives_bracket(rng):
    a = rng.standard_normal((25, 25))
    T = Operator(NormedSpace(25, NormTag.EUCLIDEAN), NormedSpace(25, NormTag.SUM), a)
    b = operator_norm_bounds(T)
    assert 0 < b.lower <= b.upper
    assert not b.exact


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(TAGS), st.sampled_from(TAGS),
       arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, 3, elements=finite))
def test_operator_norm_dominates_every_ratio(dom, cod, a, x):
    n = vector_norm(x, dom)
    if n == 0:
        return
    T = Operator(NormedSpace(3, dom), NormedSpace(2, cod), a)
    assert vector_norm(a @ x, cod) <= operator_norm(T) * n * (1 + 1e-12) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(TAGS), arrays(np.float64, 3, elements=finite))
def test_norming_functional(tag, y):
    s = norming_functional(y, tag)
    assert vector_norm(s, tag.dual) <= 1 + 1e-12
    assert s @ y == pytest.approx(vector_norm(y, tag), rel=1e-12, abs=1e-12)


def test_unit_ball_vertices():
    assert len(unit_ball_vertices(NormedSpace(3, NormTag.MAX))) == 8
    assert len(unit_ball_vertices(NormedSpace(3, NormTag.SUM))) == 6
    assert len(unit_ball_vertices(NormedSpace(1, NormTag.EUCLIDEAN))) == 2
    with pytest.raises(ValueError):
        unit_ball_vertices(NormedSpace(2, NormTag.EUCLIDEAN))
