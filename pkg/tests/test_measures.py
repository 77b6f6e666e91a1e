import math

import numpy as np
import pytest

from imeasure.measures import (
    TAIL,
    AtomicSpace,
    CapabilityError,
    DegenerateInstanceError,
    GeometricTail,
    MeasurableSet,
    OperatorMeasure,
    ScalarMeasure,
    certify_independent_convergence,
    control_measure,
    is_absolutely_continuous,
    measure_of,
    scalarize,
    semivariation,
    variation,
)
from imeasure.oracles import random_measure, random_space, semivariation_oracle
from imeasure.spaces import NormedSpace, NormTag, Operator, operator_norm

POLY = (NormTag.SUM, NormTag.MAX)


def geometric_scalar(coeff=1.0, ratio=0.5, head=()):
    S = NormedSpace(1, NormTag.SUM)
    space = AtomicSpace(tuple(f"h{i}" for i in range(len(head))), "geometric")
    h = np.array(head, dtype=float).reshape(-1, 1, 1)
    return OperatorMeasure(space, S, S, h, GeometricTail([[1.0]], coeff, ratio))


# --- sets -----------------------------------------------------------------

def test_cofinite_needs_a_tail():
    with pytest.raises(ValueError):
        MeasurableSet(AtomicSpace.of_size(2), (), cofinite=True)


def test_set_algebra_with_tail():
    space = AtomicSpace.of_size(3, tail=True)
    A = MeasurableSet(space, (0, 4))
    B = MeasurableSet(space, (1,), cofinite=True)
    assert A.complement().complement() == A
    assert A.union(B) == MeasurableSet(space, (1,), cofinite=True)
    assert A.intersection(B) == A
    assert A.issubset(B)
    assert 1 not in B and 7 in B
    assert MeasurableSet.empty(space).is_empty


def test_labels_must_be_distinct():
    with pytest.raises(ValueError):
        AtomicSpace(("a", "a"))


# --- measureOf --------------------------------------------------------------

def test_measure_of_examples(scalar_pair):
    space = scalar_pair.space
    assert measure_of(scalar_pair, MeasurableSet.whole(space)).entries[0, 0] == -1.0
    assert measure_of(scalar_pair, MeasurableSet.empty(space)).entries[0, 0] == 0.0


def test_geometric_tail_sums_to_one():
    mu = geometric_scalar()
    val = measure_of(mu, MeasurableSet.whole(mu.space)).entries[0, 0]
    partial = math.fsum(2.0**-k for k in range(1, 10_001))
    assert abs(val - 1.0) <= 1e-12
    assert abs(val - partial) <= 1e-12


def test_excluded_tail_atoms_are_subtracted():
    mu = geometric_scalar()
    # tail atoms are indices 0, 1, ...; drop the first two
    val = measure_of(mu, MeasurableSet(mu.space, (0, 1), cofinite=True)).entries[0, 0]
    assert val == pytest.approx(0.25, abs=1e-15)


def test_measure_is_additive_on_disjoint_sets(rng):
    mu = random_measure(rng, 5, NormedSpace(2), NormedSpace(3), tail=True)
    A = MeasurableSet(mu.space, (0, 2, 6))
    B = MeasurableSet(mu.space, (0, 2, 6), cofinite=True)
    total = measure_of(mu, MeasurableSet.whole(mu.space)).entries
    parts = measure_of(mu, A).entries + measure_of(mu, B).entries
    np.testing.assert_allclose(parts, total, atol=1e-12)


def test_space_mismatch_is_rejected(scalar_pair):
    with pytest.raises(ValueError):
        measure_of(scalar_pair, MeasurableSet.whole(AtomicSpace.of_size(2, tail=True)))


# --- certificate ----------------------------------------------------------

def test_certificate_examples(scalar_pair):
    assert certify_independent_convergence(scalar_pair).norm_sum == 3.0
    E = NormedSpace(2, NormTag.EUCLIDEAN)
    space = AtomicSpace((), "geometric")
    mu = OperatorMeasure(space, E, E, np.zeros((0, 2, 2)), GeometricTail(np.eye(2), 1.0, 0.5))
    assert certify_independent_convergence(mu).norm_sum == pytest.approx(1.0, abs=1e-15)
    zero = OperatorMeasure(AtomicSpace.of_size(2), E, E, np.zeros((2, 2, 2)))
    assert certify_independent_convergence(zero).norm_sum == 0.0


def test_truncation_index_is_minimal():
    mu = geometric_scalar(head=[1.0, 0.5])
    cert = certify_independent_convergence(mu)
    for budget in (1.0, 1e-3, 1e-9):
        n = cert.truncation_index(budget)
        assert cert.tail_bound(n) <= budget
        assert n == 0 or cert.tail_bound(n - 1) > budget


def test_independent_convergence_matches_sign_choices(rng):
    # unit vectors with ||T x|| = ||T|| and aligned signs realize the norm sum
    for _ in range(20):
        mu = random_measure(rng, 3, NormedSpace(1, NormTag.SUM), NormedSpace(1, NormTag.SUM))
        cert = certify_independent_convergence(mu)
        assert semivariation_oracle(mu, MeasurableSet.whole(mu.space)) == \
            pytest.approx(cert.norm_sum, rel=1e-12)


# --- semivariation and variation ------------------------------------------

def test_semivariation_examples(scalar_pair, diag_projections):
    whole = MeasurableSet.whole(scalar_pair.space)
    res = semivariation(scalar_pair, whole)
    assert (res.value, res.mode) == (3.0, "exact")
    assert semivariation(scalar_pair, MeasurableSet.empty(scalar_pair.space)).value == 0.0
    assert variation(scalar_pair, whole) == 3.0

    whole = MeasurableSet.whole(diag_projections.space)
    res = semivariation(diag_projections, whole)
    assert res.mode == "lowerBound"
    assert res.value == pytest.approx(math.sqrt(2), abs=1e-12)
    assert res.upper == 2.0
    assert variation(diag_projections, whole) == 2.0


def test_exact_enum_refuses_euclidean_pair(diag_projections):
    with pytest.raises(CapabilityError):
        semivariation(diag_projections, MeasurableSet.whole(diag_projections.space), "exact")


def test_exact_enum_uses_dual_vertices_when_only_F_is_polyhedral(rng):
    for _ in range(20):
        mu = random_measure(rng, 3, NormedSpace(2, NormTag.EUCLIDEAN), random_space(rng, 2, POLY))
        A = MeasurableSet.whole(mu.space)
        exact = semivariation(mu, A, "exact").value
        assert semivariation(mu, A, "alternating").value <= exact * (1 + 1e-12)
        assert semivariation_oracle(mu, A) <= exact * (1 + 1e-12)


def test_witness_attains_value(rng):
    mu = random_measure(rng, 3, NormedSpace(2, NormTag.MAX), NormedSpace(2, NormTag.SUM))
    A = MeasurableSet.whole(mu.space)
    res = semivariation(mu, A)
    s = sum(mu.atom_matrix(a) @ w.coords for a, w in zip(res.atoms, res.witness))
    assert np.abs(s).sum() == pytest.approx(res.value, rel=1e-12)


def test_tail_is_merged_into_one_block():
    mu = geometric_scalar(head=[1.0])
    res = semivariation(mu, MeasurableSet.whole(mu.space))
    assert res.atoms == [0, TAIL]
    assert res.value == pytest.approx(2.0, abs=1e-15)


def test_cofinite_semivariation_is_limit_of_finite_truncations(rng):
    E, F = NormedSpace(2, NormTag.MAX), NormedSpace(2, NormTag.SUM)
    mu = random_measure(rng, 2, E, F, tail=True)
    whole = semivariation(mu, MeasurableSet.whole(mu.space), "exact").value
    finite = [semivariation(mu, MeasurableSet(mu.space, tuple(range(n))), "exact").value
              for n in (3, 6, 12)]
    assert finite == sorted(finite)
    cert = certify_independent_convergence(mu)
    assert whole - finite[-1] <= cert.tail_bound(12) + 1e-12
    assert finite[-1] <= whole + 1e-12


def test_atom_norm_below_atom_semivariation(rng):
    for _ in range(30):
        mu = random_measure(rng, 2, random_space(rng), random_space(rng, 2, POLY))
        for i in range(2):
            single = MeasurableSet(mu.space, (i,))
            assert operator_norm(mu.atom(i)) <= semivariation(mu, single).value * (1 + 1e-12)


def test_alternating_within_bracket(rng):
    for _ in range(30):
        mu = random_measure(rng, 3, random_space(rng, 3), random_space(rng, 3))
        A = MeasurableSet.whole(mu.space)
        res = semivariation(mu, A, "alternating")
        assert res.value <= res.upper * (1 + 1e-12)
        try:
            exact = semivariation(mu, A, "exact").value
        except CapabilityError:
            continue
        assert res.value <= exact * (1 + 1e-12)


# --- control measure ---------------------------------------------------------

def test_control_measure_scalar_example(scalar_pair):
    cm = control_measure(scalar_pair, psi=[1.0])
    np.testing.assert_array_equal(cm.lam.weights, [1.0, 2.0])
    for idx in ((), (0,), (1,), (0, 1)):
        A = MeasurableSet(scalar_pair.space, idx)
        assert 0 <= cm.lam(A) <= semivariation(scalar_pair, A).value


def test_control_measure_diag_example(diag_projections):
    a, b = 0.6, -0.8
    cm = control_measure(diag_projections, psi=[a, b])
    np.testing.assert_allclose(cm.lam.weights, [abs(a), abs(b)])
    assert cm.lam(MeasurableSet.whole(diag_projections.space)) <= math.sqrt(2)


def test_zero_measure_has_zero_control():
    E = NormedSpace(2)
    mu = OperatorMeasure(AtomicSpace.of_size(3), E, E, np.zeros((3, 2, 2)))
    cm = control_measure(mu, seed=1)
    assert not np.any(cm.lam.weights)
    assert cm.delta(1e-3) > 0


def test_annihilating_functional_is_degenerate(diag_projections):
    with pytest.raises(DegenerateInstanceError):
        control_measure(diag_projections, psi=[1.0, 0.0])


def test_delta_guarantees_small_semivariation(rng):
    for seed in range(10):
        mu = random_measure(rng, 4, random_space(rng, 2, POLY), random_space(rng, 2, POLY),
                            tail=True)
        cm = control_measure(mu, seed=seed)
        for eps in (1e-1, 1e-3):
            d = cm.delta(eps)
            n = cm.certificate.truncation_index(eps)
            # the cofinite set beyond n is the largest set of small lambda
            beyond = MeasurableSet(mu.space, tuple(range(n)), cofinite=True)
            if cm.lam(beyond) <= d:
                assert semivariation(mu, beyond).value <= eps


def test_control_measure_is_seeded(rng):
    mu = random_measure(rng, 3, NormedSpace(2), NormedSpace(2))
    a, b = control_measure(mu, seed=7), control_measure(mu, seed=7)
    np.testing.assert_array_equal(a.psi.coords, b.psi.coords)


# --- absolute continuity and scalarization ---------------------------------

def test_absolute_continuity_examples(scalar):
    space = AtomicSpace.of_size(2)
    mu = OperatorMeasure(space, scalar, scalar, np.array([[[1.0]], [[0.0]]]))
    res = is_absolutely_continuous(mu, ScalarMeasure(space, [0.0, 1.0]))
    assert not res.answer
    assert res.witness == MeasurableSet(space, (0,))
    zero = OperatorMeasure(space, scalar, scalar, np.zeros((2, 1, 1)))
    assert is_absolutely_continuous(zero, ScalarMeasure(space, [0.0, 0.0])).answer


def test_tail_without_weight_breaks_continuity():
    mu = geometric_scalar(head=[1.0])
    res = is_absolutely_continuous(mu, ScalarMeasure(mu.space, [1.0]))
    assert not res.answer and res.witness.cofinite


def test_scalarize_examples():
    E = NormedSpace(2, NormTag.SUM)
    mu = OperatorMeasure(AtomicSpace.of_size(1), E, E, np.array([[[0.0, 1.0], [1.0, 0.0]]]))
    np.testing.assert_array_equal(scalarize(mu, [1.0, 0.0]).head[0], [[0.0, 1.0]])
    assert not np.any(scalarize(mu, [0.0, 0.0]).head)
    with pytest.raises(ValueError):
        scalarize(mu, [1.0])


def test_scalarized_semivariation_is_dominated(rng):
    for _ in range(30):
        E, F = random_space(rng, 2, POLY), random_space(rng, 2, POLY)
        mu = random_measure(rng, 3, E, F)
        psi = rng.standard_normal(F.dim)
        A = MeasurableSet.whole(mu.space)
        lhs = semivariation_oracle(scalarize(mu, psi), A)
        psi_norm = float(np.linalg.norm(psi, F.norm.dual.order))
        assert lhs <= psi_norm * semivariation(mu, A, "exact").value * (1 + 1e-12)


def test_from_operators():
    E = NormedSpace(2)
    mu = OperatorMeasure.from_operators([Operator.identity(E), Operator.zero(E, E)])
    assert mu.space.n_head == 2
    with pytest.raises(ValueError):
        OperatorMeasure.from_operators([])
