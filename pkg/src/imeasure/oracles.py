"""Brute-force reference computations used to check the optimized code paths.

Every oracle has a hard size guard and refuses larger inputs with
:class:`OracleRefusal` instead of subsampling.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .closure import ConvexSetSpec, GridFunction, GridSpace, HullMode, chebyshev_distance
from .integration import VectorFunction, integrate
from .measures import (
    AtomicSpace,
    ControlMeasure,
    GeometricTail,
    MeasurableSet,
    OperatorMeasure,
    TailKind,
    control_measure,
    is_absolutely_continuous,
    semivariation,
)
from .spaces import NormedSpace, NormTag, dual_vector_norm, is_polyhedral, norming_functional, \
    unit_ball_vertices, vector_norm

__all__ = [
    "OracleRefusal",
    "OracleReport",
    "IntegralOracleResult",
    "ControlOracleResult",
    "ANGLE_STEP",
    "GRID_SLACK",
    "set_partitions",
    "semivariation_oracle",
    "integral_oracle",
    "hull_distance_oracle",
    "control_oracle",
    "random_space",
    "random_measure",
    "random_function",
    "random_hull_instance",
    "run_oracle_suite",
]

MAX_ATOMS = 4
MAX_DIM_E = 2
ANGLE_STEP = 1e-3
# the polygon through grid points on the unit circle contains the disc of radius cos(step/2)
GRID_SLACK = 1.0 / math.cos(ANGLE_STEP / 2)
MAX_PRODUCT = 10**6
TRUNCATION = 10**4
HULL_STEP = 1e-3
MAX_GENERATORS = 3
MAX_HULL_CANDIDATES = 2 * 10**7
MAX_CONTROL_ATOMS = 12


class OracleRefusal(ValueError):
    """Instance exceeds an oracle's size guard."""


def set_partitions(items: Sequence) -> Iterator[list[list]]:
    """All partitions of ``items`` into nonempty blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first], *part]
        for i in range(len(part)):
            yield [*part[:i], [first, *part[i]], *part[i + 1:]]


# ---------------------------------------------------------------------------
# semivariation

def _ball_samples(E: NormedSpace) -> np.ndarray:
    if is_polyhedral(E):
        return unit_ball_vertices(E)
    theta = np.arange(0.0, 2 * math.pi, ANGLE_STEP)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def _brute_force(images: list[np.ndarray], F: NormedSpace) -> float:
    best = 0.0
    for combo in itertools.product(*[range(len(p)) for p in images]):
        acc = np.zeros(F.dim)
        for p, j in zip(images, combo):
            acc = acc + p[j]
        best = max(best, float(vector_norm(acc, F.norm)))
    return best


def _support_polygon(points: np.ndarray):
    """Hull vertices in counterclockwise order and the outward normal angle of each edge.

    Edge ``i`` runs from vertex ``i`` to vertex ``i + 1``.
    """
    pts = np.unique(points, axis=0)
    if len(pts) == 1:
        return pts, np.zeros(0)
    centered = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-12 * max(1.0, np.abs(pts).max())) < 2:
        u = centered[np.argmax(np.abs(centered).sum(axis=1))]
        t = centered @ u
        verts = np.stack([pts[np.argmin(t)], pts[np.argmax(t)]])
    else:
        try:
            verts = pts[ConvexHull(pts).vertices]
        except QhullError:
            return _support_polygon(pts[[0, -1]])
    d = np.roll(verts, -1, axis=0) - verts
    return verts, np.arctan2(-d[:, 0], d[:, 1])


def _max_norm_minkowski_2d(images: list[np.ndarray]) -> float:
    """Max Euclidean norm over the Minkowski sum of point sets in the plane.

    The maximum sits at a vertex of the summed hull.  Each vertex is the sum
    of the vertices that are extreme for one open arc of directions between
    consecutive edge normals.
    """
    polys = [_support_polygon(p) for p in images]
    angles = np.sort(np.concatenate([a for _, a in polys] + [np.zeros(1)]) % (2 * math.pi))
    mids = (angles + np.roll(angles, -1)) / 2
    mids[-1] = (angles[-1] + angles[0] + 2 * math.pi) / 2
    total = np.zeros((len(mids), 2))
    for verts, normals in polys:
        if not len(normals):
            total = total + verts[0]
            continue
        # vertex i+1 is extreme between normal i and normal i+1
        order = np.argsort(normals % (2 * math.pi))
        sorted_n = (normals % (2 * math.pi))[order]
        pos = np.searchsorted(sorted_n, mids % (2 * math.pi)) - 1
        edge = order[pos % len(order)]
        total = total + verts[(edge + 1) % len(verts)]
    return float(np.sqrt((total * total).sum(axis=1)).max())


def _max_norm_of_sums(images: list[np.ndarray], F: NormedSpace) -> float:
    """``max ||sum_i p_i||`` with each ``p_i`` taken from the point set ``images[i]``."""
    if math.prod(len(p) for p in images) <= MAX_PRODUCT:
        return _brute_force(images, F)
    if is_polyhedral(F):
        svs = unit_ball_vertices(F.dual)
        return float(max(sum(float((p @ s).max()) for p in images) for s in svs))
    if F.dim == 2:
        return _max_norm_minkowski_2d(images)
    raise OracleRefusal("Euclidean F of dimension above 2 with a Euclidean E is not supported")


def semivariation_oracle(mu: OperatorMeasure, A: MeasurableSet) -> float:
    """Maximize over every partition of ``A`` and unit-ball samples for each block.

    Polyhedral E uses the exact vertices; Euclidean E uses the unit circle at
    angular step ``ANGLE_STEP``, so the value is within a factor
    ``GRID_SLACK`` below the true supremum.  A merged tail counts as one atom.
    """
    labels, mats = mu.blocks(A)
    if len(labels) > MAX_ATOMS:
        raise OracleRefusal(f"semivariation oracle takes at most {MAX_ATOMS} atoms")
    if mu.E.dim > MAX_DIM_E:
        raise OracleRefusal(f"semivariation oracle takes dim E <= {MAX_DIM_E}")
    if not labels:
        return 0.0
    samples = _ball_samples(mu.E)
    best = 0.0
    for part in set_partitions(range(len(labels))):
        groups = []
        for block in part:
            g = np.zeros((mu.F.dim, mu.E.dim))
            for a in block:
                g = g + mats[a]
            groups.append(g)
        images = [samples @ g.T for g in groups]
        best = max(best, _max_norm_of_sums(images, mu.F))
    return best


# ---------------------------------------------------------------------------
# integration

@dataclass(frozen=True, eq=False)
class IntegralOracleResult:
    value: np.ndarray          # correctly rounded sum of the truncated series
    order_values: np.ndarray   # plain left-to-right sums, one row per random order
    spread: float              # largest disagreement between orders
    n_terms: int
    remainder_bound: float     # bound on the atoms dropped by truncation


def integral_oracle(mu: OperatorMeasure, f: VectorFunction, seed: int = 0,
                    n_terms: int = TRUNCATION, orders: int = 3) -> IntegralOracleResult:
    """Sum ``mu({a}) f(a)`` atom by atom, tail truncated after ``n_terms`` atoms."""
    if mu.space != f.space:
        raise ValueError("function and measure live on different spaces")
    contrib = [m @ x for m, x in zip(mu.head, f.head_values)]
    remainder = 0.0
    if mu.tail is not None:
        base = mu.tail.pattern @ f.tail_value
        contrib.extend(mu.tail.weight(k) * base for k in range(1, n_terms + 1))
        remainder = float(vector_norm(base, mu.F.norm)) * mu.tail.weight_from(n_terms + 1)
    c = np.array(contrib).reshape(-1, mu.F.dim)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(orders):
        perm = rng.permutation(len(c))
        rows.append(np.cumsum(c[perm], axis=0)[-1] if len(c) else np.zeros(mu.F.dim))
    rows = np.array(rows)
    exact = np.array([math.fsum(c[:, j]) for j in range(mu.F.dim)])
    spread = float(np.abs(rows[:, None, :] - rows[None, :, :]).max()) if len(c) else 0.0
    return IntegralOracleResult(exact, rows, spread, len(c), remainder)


# ---------------------------------------------------------------------------
# closure distance

def _simplex_grid(k: int, n: int) -> np.ndarray:
    if k == 1:
        return np.ones((1, 1))
    if k == 2:
        i = np.arange(n + 1)
        return np.stack([i / n, (n - i) / n], axis=1)
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    mask = i + j <= n
    i, j = i[mask], j[mask]
    return np.stack([i / n, j / n, (n - i - j) / n], axis=1)


def hull_distance_oracle(f: GridFunction, K: ConvexSetSpec, step: float = HULL_STEP,
                         box: float = 1.0) -> float:
    """Grid search over coefficients at spacing ``step``.

    HULL searches the simplex; SPAN and CONE search ``[-box, box]^k`` and
    ``[0, box]^k``.  The result is an upper bound on the distance.
    """
    k = len(K.generators)
    if k > MAX_GENERATORS:
        raise OracleRefusal(f"hull oracle takes at most {MAX_GENERATORS} generators")
    P, dim = f.values.shape
    if k == 0:
        return f.sup_norm() if K.mode is not HullMode.HULL else math.inf
    n = int(round(1 / step))
    if K.mode is HullMode.HULL:
        count = math.comb(n + k - 1, k - 1)
    else:
        per = int(round(box / step)) * (2 if K.mode is HullMode.SPAN else 1) + 1
        count = per**k
    if count > MAX_HULL_CANDIDATES:
        raise OracleRefusal("coefficient grid exceeds the oracle's size guard")
    if K.mode is HullMode.HULL:
        coeffs = _simplex_grid(k, n)
    else:
        lo = -box if K.mode is HullMode.SPAN else 0.0
        axis = np.linspace(lo, box, per)
        coeffs = np.array(list(itertools.product(axis, repeat=k))) if k > 1 else axis[:, None]
    G = np.stack([g.values for g in K.generators], axis=-1)  # (P, dim, k)
    best = math.inf
    chunk = max(1, 2**22 // max(P * dim, 1))
    for s in range(0, len(coeffs), chunk):
        c = coeffs[s:s + chunk]
        approx = np.einsum("pdk,ck->cpd", G, c)
        res = vector_norm(f.values[None] - approx, f.E.norm).max(axis=1)
        if K.radius_cap is not None:
            size = vector_norm(approx, f.E.norm).max(axis=1)
            res = np.where(size <= K.radius_cap, res, math.inf)
        best = min(best, float(res.min()))
    return best


# ---------------------------------------------------------------------------
# control measure

@dataclass(frozen=True, eq=False)
class ControlOracleResult:
    n_sets: int
    min_lambda: float
    domination_slack: float     # min over sets of ||mu||_A - lam(A) (lower bound side)
    ac_violations: list         # (eps, set) pairs breaking the delta table
    absolutely_continuous: bool

    @property
    def ok(self) -> bool:
        return (self.min_lambda >= 0 and self.domination_slack >= -1e-12
                and not self.ac_violations and self.absolutely_continuous)


def _oracle_sets(space: AtomicSpace, tail_depth: int = 3) -> Iterator[MeasurableSet]:
    n = space.n_head
    for mask in range(2**n):
        S = [i for i in range(n) if mask >> i & 1]
        yield MeasurableSet(space, tuple(S))
        if space.has_tail:
            yield MeasurableSet(space, tuple(S + [n]))
            for k in range(1, tail_depth + 1):
                # S together with tail atoms k, k+1, ...
                excluded = [i for i in range(n) if i not in S] + [n + j - 1 for j in range(1, k)]
                yield MeasurableSet(space, tuple(excluded), cofinite=True)


def _psi_witness(mu: OperatorMeasure, cm: ControlMeasure, A: MeasurableSet) -> float:
    """``||sum mu(a) x_a||`` for the ``x_a`` that norm ``psi o mu(a)``."""
    _, mats = mu.blocks(A)
    y = cm.psi.coords
    acc = np.zeros(mu.F.dim)
    for m in mats:
        acc = acc + m @ norming_functional(y @ m, mu.E.norm.dual)
    return float(vector_norm(acc, mu.F.norm))


def control_oracle(mu: OperatorMeasure, cm: ControlMeasure,
                   eps_values: Sequence[float] = (1e-1, 1e-2, 1e-3)) -> ControlOracleResult:
    """Check ``0 <= lam(A) <= ||mu||_A`` and the delta table on every enumerated set."""
    if mu.space.n_head > MAX_CONTROL_ATOMS:
        raise OracleRefusal(f"control oracle takes at most {MAX_CONTROL_ATOMS} atoms")
    table = cm.delta_table(eps_values)
    n_sets, min_lam, slack, bad = 0, math.inf, math.inf, []
    for A in _oracle_sets(mu.space):
        n_sets += 1
        lam = cm.lam(A)
        sv = semivariation(mu, A)
        lower = max(sv.value, _psi_witness(mu, cm, A))
        upper = sv.value if sv.exact else sv.upper
        min_lam = min(min_lam, lam)
        slack = min(slack, lower - lam)
        for eps, delta in table.items():
            if lam <= delta and upper > eps:
                bad.append((eps, A))
    ac = is_absolutely_continuous(mu, cm.lam).answer
    return ControlOracleResult(n_sets, min_lam, slack, bad, ac)


# ---------------------------------------------------------------------------
# random instances

_NORMS = (NormTag.SUM, NormTag.EUCLIDEAN, NormTag.MAX)


def random_space(rng: np.random.Generator, max_dim: int = 2,
                 norms: Sequence[NormTag] = _NORMS) -> NormedSpace:
    return NormedSpace(int(rng.integers(1, max_dim + 1)), norms[int(rng.integers(len(norms)))])


def random_measure(rng: np.random.Generator, n_atoms: int, E: NormedSpace, F: NormedSpace,
                   tail: bool = False, dyadic: bool = False) -> OperatorMeasure:
    """Random head operators; ``dyadic`` draws entries from ``{k/8 : |k| <= 16}``."""
    def draw(shape):
        if dyadic:
            return rng.integers(-16, 17, size=shape) / 8.0
        return rng.standard_normal(shape)

    space = AtomicSpace(tuple(f"a{i}" for i in range(n_atoms)),
                        TailKind.GEOMETRIC if tail else TailKind.NONE)
    gt = None
    if tail:
        pattern = draw((F.dim, E.dim))
        if not np.any(pattern):
            pattern[0, 0] = 1.0
        if dyadic:
            gt = GeometricTail(pattern, 0.5 ** int(rng.integers(0, 4)), 0.5)
        else:
            gt = GeometricTail(pattern, float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.1, 0.9)))
    return OperatorMeasure(space, E, F, draw((n_atoms, F.dim, E.dim)), gt)


def random_function(rng: np.random.Generator, mu: OperatorMeasure,
                    bound: float = 1.0) -> VectorFunction:
    """Random function with sup norm at most ``bound``."""
    def point():
        x = rng.standard_normal(mu.E.dim)
        n = float(vector_norm(x, mu.E.norm))
        return x * (bound * rng.uniform() / n) if n > 0 else x

    head = np.array([point() for _ in range(mu.space.n_head)]).reshape(-1, mu.E.dim)
    return VectorFunction(mu.space, mu.E, head, point() if mu.space.has_tail else None)


def random_hull_instance(rng: np.random.Generator, n_points: int = 4, n_generators: int = 3,
                         E: NormedSpace | None = None) -> tuple[GridFunction, ConvexSetSpec]:
    """Random target and hull of random generators on a labelled grid.

    Half the targets are convex combinations of the generators.
    """
    E = E or random_space(rng)
    grid = GridSpace(tuple(range(n_points)))
    gens = [GridFunction(grid, E, rng.uniform(-1, 1, (n_points, E.dim)))
            for _ in range(n_generators)]
    if rng.uniform() < 0.5:
        w = rng.dirichlet(np.ones(n_generators))
        values = sum(wi * g.values for wi, g in zip(w, gens))
    else:
        values = rng.uniform(-1.5, 1.5, (n_points, E.dim))
    return GridFunction(grid, E, values), ConvexSetSpec(tuple(gens), HullMode.HULL)


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class OracleReport:
    operation: str
    seed: int
    index: int
    digest: str
    optimized: float
    oracle: float
    discrepancy: float
    tolerance: float
    verdict: str


def _digest(instance) -> str:
    from .jsonio import dumps

    return hashlib.sha256(dumps(instance).encode()).hexdigest()


def _report(op, seed, index, instance, optimized, oracle, discrepancy, tolerance):
    verdict = "PASS" if discrepancy <= tolerance else "FAIL"
    return OracleReport(op, seed, index, _digest(instance), float(optimized), float(oracle),
                        float(discrepancy), float(tolerance), verdict)


def _instance_rng(seed: int, op: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, op, index])


def run_oracle_suite(seed: int = 0, count: int = 20,
                     operations: Sequence[str] | None = None) -> list[OracleReport]:
    """Paired runs of optimized code against the oracles.

    Instance ``i`` of operation number ``op`` is drawn from the generator
    seeded with ``[seed, op, i]``, so each report can be replayed alone.
    """
    from .jsonio import convex_set_to_json, function_to_json, measure_to_json, set_to_json

    ops = ["semivariation-exact", "semivariation-euclidean", "integration",
           "control-measure", "closure-distance"]
    wanted = ops if operations is None else list(operations)
    unknown = set(wanted) - set(ops)
    if unknown:
        raise ValueError(f"unknown oracle operations: {sorted(unknown)}")
    reports = []
    poly = (NormTag.SUM, NormTag.MAX)
    for op_id, op in enumerate(ops):
        if op not in wanted:
            continue
        for i in range(count):
            rng = _instance_rng(seed, op_id, i)
            if op == "semivariation-exact":
                mu = random_measure(rng, int(rng.integers(1, 4)), random_space(rng, 2, poly),
                                    random_space(rng, 2, poly), dyadic=True)
                A = MeasurableSet.whole(mu.space)
                opt = semivariation(mu, A, "exact").value
                orc = semivariation_oracle(mu, A)
                inst = {"measure": measure_to_json(mu), "set": set_to_json(A)}
                reports.append(_report(op, seed, i, inst, opt, orc, abs(opt - orc), 0.0))
            elif op == "semivariation-euclidean":
                euc = (NormTag.EUCLIDEAN,)
                mu = random_measure(rng, int(rng.integers(1, 4)), NormedSpace(2, NormTag.EUCLIDEAN),
                                    random_space(rng, 2, euc))
                A = MeasurableSet.whole(mu.space)
                opt = semivariation(mu, A, "alternating").value
                orc = semivariation_oracle(mu, A)
                # below the oracle by at most 1e-3, above it only within the grid slack
                disc = max(orc - opt, (opt - orc * GRID_SLACK) * 1e3 / max(orc, 1e-300))
                inst = {"measure": measure_to_json(mu), "set": set_to_json(A)}
                reports.append(_report(op, seed, i, inst, opt, orc, max(disc, 0.0), 1e-3))
            elif op == "integration":
                mu = random_measure(rng, int(rng.integers(1, 6)), random_space(rng),
                                    random_space(rng), tail=bool(rng.integers(2)))
                f = random_function(rng, mu)
                opt = integrate(mu, f).value.coords
                orc = integral_oracle(mu, f, seed=i)
                disc = float(vector_norm(opt - orc.value, mu.F.norm))
                tol = 1e-12 * max(1.0, float(np.abs(orc.value).max()))
                inst = {"measure": measure_to_json(mu), "function": function_to_json(f)}
                reports.append(_report(op, seed, i, inst, float(vector_norm(opt, mu.F.norm)),
                                       float(vector_norm(orc.value, mu.F.norm)),
                                       max(disc - orc.remainder_bound, orc.spread), tol))
            elif op == "control-measure":
                mu = random_measure(rng, int(rng.integers(1, 7)), random_space(rng, 2, poly),
                                    random_space(rng, 2, poly), tail=bool(rng.integers(2)))
                cm = control_measure(mu, seed=i)
                res = control_oracle(mu, cm)
                disc = max(0.0, -res.domination_slack, -res.min_lambda,
                           float(len(res.ac_violations)), 0.0 if res.absolutely_continuous else 1.0)
                inst = {"measure": measure_to_json(mu), "psi": cm.psi.coords}
                reports.append(_report(op, seed, i, inst, cm.lam(MeasurableSet.whole(mu.space)),
                                       semivariation(mu, MeasurableSet.whole(mu.space)).value,
                                       disc, 1e-12))
            else:
                f, K = random_hull_instance(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)))
                opt = chebyshev_distance(f, K).distance
                orc = hull_distance_oracle(f, K)
                inst = {"target": f.values, "set": convex_set_to_json(K), "E": f.E.norm.value}
                reports.append(_report(op, seed, i, inst, opt, orc, abs(opt - orc), 2e-3))
    return reports
