import math

import numpy as np
import pytest

from imeasure.closure import ConvexSetSpec, GridFunction, GridSpace, HullMode
from imeasure.integration import VectorFunction
from imeasure.measures import AtomicSpace, GeometricTail, MeasurableSet, OperatorMeasure, \
    control_measure
from imeasure.oracles import (
    GRID_SLACK,
    OracleRefusal,
    control_oracle,
    hull_distance_oracle,
    integral_oracle,
    random_function,
    random_measure,
    run_oracle_suite,
    semivariation_oracle,
    set_partitions,
)
from imeasure.spaces import NormedSpace, NormTag

BELL = [1, 1, 2, 5, 15, 52]


@pytest.mark.parametrize("n", range(6))
def test_partition_count(n):
    parts = list(set_partitions(range(n)))
    assert len(parts) == BELL[n]
    for p in parts:
        assert sorted(x for block in p for x in block) == list(range(n))


def test_semivariation_oracle_examples(scalar_pair, diag_projections):
    assert semivariation_oracle(scalar_pair, MeasurableSet.empty(scalar_pair.space)) == 0.0
    assert semivariation_oracle(scalar_pair, MeasurableSet.whole(scalar_pair.space)) == 3.0
    val = semivariation_oracle(diag_projections, MeasurableSet.whole(diag_projections.space))
    assert math.sqrt(2) / GRID_SLACK <= val <= math.sqrt(2) + 1e-12


def test_semivariation_oracle_guards(rng):
    E = NormedSpace(1, NormTag.SUM)
    mu = random_measure(rng, 5, E, E)
    with pytest.raises(OracleRefusal):
        semivariation_oracle(mu, MeasurableSet.whole(mu.space))
    mu = random_measure(rng, 2, NormedSpace(3), E)
    with pytest.raises(OracleRefusal):
        semivariation_oracle(mu, MeasurableSet.whole(mu.space))


def test_euclidean_single_atom_is_spectral_norm(rng):
    E = NormedSpace(2, NormTag.EUCLIDEAN)
    for _ in range(10):
        mu = random_measure(rng, 1, E, E)
        val = semivariation_oracle(mu, MeasurableSet.whole(mu.space))
        s = np.linalg.norm(mu.head[0], 2)
        assert s / GRID_SLACK <= val <= s * (1 + 1e-12)


def test_integral_oracle_zero_function(rng):
    mu = random_measure(rng, 3, NormedSpace(2), NormedSpace(2), tail=True)
    res = integral_oracle(mu, VectorFunction.zero(mu.space, mu.E))
    assert not np.any(res.order_values) and res.spread == 0.0


def test_integral_oracle_orders_agree(rng):
    for i in range(20):
        mu = random_measure(rng, 4, NormedSpace(2), NormedSpace(3), tail=True)
        res = integral_oracle(mu, random_function(rng, mu), seed=i)
        assert res.order_values.shape == (3, 3)
        assert res.spread <= 1e-12


def test_geometric_closed_form():
    S = NormedSpace(1, NormTag.SUM)
    mu = OperatorMeasure(AtomicSpace((), "geometric"), S, S, np.zeros((0, 1, 1)),
                         GeometricTail([[1.0]], 1.0, 0.5))
    res = integral_oracle(mu, VectorFunction.constant(mu.space, S, [1.0]))
    assert abs(res.value[0] - 1.0) <= 1e-10


def test_hull_oracle_examples():
    g = GridSpace((0, 1))
    E = NormedSpace(1, NormTag.SUM)
    gen = GridFunction(g, E, [1.0, -1.0])
    assert hull_distance_oracle(gen, ConvexSetSpec([gen])) == 0.0
    K = ConvexSetSpec([gen, GridFunction(g, E, [-1.0, 1.0])])
    assert hull_distance_oracle(GridFunction(g, E, [0.0, 0.0]), K) == 0.0


def test_hull_oracle_guard():
    g = GridSpace((0,))
    gens = [GridFunction.scalar(g, [float(i)]) for i in range(4)]
    with pytest.raises(OracleRefusal):
        hull_distance_oracle(gens[0], ConvexSetSpec(gens))
    with pytest.raises(OracleRefusal):
        hull_distance_oracle(gens[0], ConvexSetSpec(gens[:3], HullMode.SPAN))


def test_control_oracle_accepts_constructed_measure(rng):
    for seed in range(5):
        mu = random_measure(rng, 5, NormedSpace(2, NormTag.MAX), NormedSpace(2, NormTag.SUM),
                            tail=True)
        res = control_oracle(mu, control_measure(mu, seed=seed))
        assert res.ok
        assert res.n_sets == 2**5 * 5


def test_control_oracle_catches_an_inflated_measure(scalar_pair):
    cm = control_measure(scalar_pair, psi=[1.0])
    inflated = type(cm)(type(cm.lam)(cm.lam.space, 10 * cm.lam.weights), cm.psi,
                        cm.certificate)
    assert control_oracle(scalar_pair, inflated).domination_slack < 0


def test_suite_is_reproducible():
    a = run_oracle_suite(seed=3, count=3)
    b = run_oracle_suite(seed=3, count=3)
    assert a == b
    assert {r.operation for r in a} == {"semivariation-exact", "semivariation-euclidean",
                                        "integration", "control-measure", "closure-distance"}
    assert all(r.verdict == "PASS" for r in a)


def test_suite_rejects_unknown_operation():
    with pytest.raises(ValueError):
        run_oracle_suite(operations=["nope"])
