"""Convex-closure membership on finite grids.

A function on a grid is compared against a finitely generated convex set in
the sup-norm ``max_p ||f(p) - g(p)||_E``.  The distance is found by solving
the minimax problem and its dual; the dual solution is a family of
functionals, one per grid point, which separates ``f`` from the set whenever
the distance is positive.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import cvxpy as cp
import numpy as np
import sympy

from .spaces import NormedSpace, NormTag, dual_vector_norm, vector_norm

__all__ = [
    "GridSpace",
    "GridFunction",
    "HullMode",
    "ConvexSetSpec",
    "ChebyshevResult",
    "SeparationCertificate",
    "Inside",
    "ErrorCurve",
    "StepDemo",
    "NullPotentialInstance",
    "UnboundedReport",
    "chebyshev_distance",
    "separate",
    "certificate_slack",
    "nested_centers",
    "distance_basis_experiment",
    "step_function_demo",
    "metric_null_search",
    "unbounded_demo",
]

_CVX_NORM = {NormTag.SUM: 1, NormTag.EUCLIDEAN: 2, NormTag.MAX: "inf"}


@dataclass(frozen=True, eq=False)
class GridSpace:
    points: tuple
    metric: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if self.metric is None:
            return
        d = np.array(self.metric, dtype=float)
        n = len(self.points)
        if d.shape != (n, n):
            raise ValueError(f"metric must be {n}x{n}")
        if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.array_equal(d, d.T):
            raise ValueError("metric must be symmetric, nonnegative, zero on the diagonal")
        # exact for integer metrics; rounding slack for float ones
        slack = 0.0 if np.all(d == np.round(d)) else 1e-12 * max(1.0, float(d.max()))
        detour = (d[:, :, None] + d[None, :, :]).min(axis=1)
        if np.any(d > detour + slack):
            raise ValueError("metric violates the triangle inequality")
        d.setflags(write=False)
        object.__setattr__(self, "metric", d)

    @classmethod
    def interval(cls, points) -> "GridSpace":
        """Real points with the distance ``|s - t|``."""
        x = np.asarray(points, dtype=float)
        return cls(tuple(float(p) for p in x), np.abs(x[:, None] - x[None, :]))

    def __len__(self):
        return len(self.points)

    def distance_function(self, i: int) -> np.ndarray:
        if self.metric is None:
            raise ValueError("grid has no metric")
        return self.metric[i]


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: GridSpace
    E: NormedSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1 and self.E.dim == 1:
            v = v[:, None]
        if v.shape != (len(self.grid), self.E.dim):
            raise ValueError(f"need one value in R^{self.E.dim} per grid point")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def scalar(cls, grid: GridSpace, values) -> "GridFunction":
        return cls(grid, NormedSpace(1, NormTag.SUM), np.asarray(values, dtype=float)[:, None])

    def sup_norm(self) -> float:
        return float(vector_norm(self.values, self.E.norm).max())


class HullMode(enum.Enum):
    SPAN = "span"
    HULL = "hull"
    CONE = "cone"


@dataclass(frozen=True, eq=False)
class ConvexSetSpec:
    generators: tuple[GridFunction, ...]
    mode: HullMode = HullMode.HULL
    radius_cap: float | None = None

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "mode", HullMode(self.mode))
        if not gens and self.mode is HullMode.HULL:
            raise ValueError("the hull of no generators is empty")
        if gens:
            g0 = gens[0]
            if any(g.grid is not g0.grid and g.grid.points != g0.grid.points for g in gens):
                raise ValueError("generators must share one grid")
            if any(g.E != g0.E for g in gens):
                raise ValueError("generators must share E")
        if self.radius_cap is not None and not self.radius_cap > 0:
            raise ValueError("radius cap must be positive")

    def matrix(self, n_points: int, dim: int) -> np.ndarray:
        """Generators as columns of a ``(n_points * dim, k)`` matrix."""
        if not self.generators:
            return np.zeros((n_points * dim, 0))
        return np.stack([g.values.ravel() for g in self.generators], axis=1)


@dataclass(frozen=True, eq=False)
class ChebyshevResult:
    distance: float            # residual of the returned approximant
    lower: float               # certified by the dual functional
    coefficients: np.ndarray
    psi: np.ndarray            # dual functional, one E* vector per point
    psi_cap: np.ndarray        # part of psi charged to the radius cap
    k_value: float             # upper bound of psi over the set

    @property
    def gap(self) -> float:
        return self.distance - self.lower


def _residual(fv: np.ndarray, G: np.ndarray, c: np.ndarray, dim: int, tag: NormTag) -> float:
    support = np.nonzero(c)[0]
    approx = G[:, support] @ c[support] if len(support) else np.zeros(G.shape[0])
    return float(vector_norm((fv - approx).reshape(-1, dim), tag).max())


def _approx_sup(G, c, dim, tag) -> float:
    support = np.nonzero(c)[0]
    if not len(support):
        return 0.0
    return float(vector_norm((G[:, support] @ c[support]).reshape(-1, dim), tag).max())


def _feasible(c: np.ndarray, K: ConvexSetSpec, G, dim, tag) -> np.ndarray | None:
    """Repair rounding-level infeasibility of a coefficient vector, or reject it."""
    c = np.array(c, dtype=float)
    if K.mode is not HullMode.SPAN:
        c[c < 0] = 0.0
    if K.mode is HullMode.HULL:
        s = c.sum()
        if s <= 0:
            return None
        c = c / s
    if K.radius_cap is not None:
        size = _approx_sup(G, c, dim, tag)
        if size > K.radius_cap:
            if K.mode is HullMode.HULL:
                if size > K.radius_cap * (1 + 1e-9):
                    return None
            else:
                c = c * (K.radius_cap / size)
    return c


def _snap(c: np.ndarray, max_den: int = 1000) -> np.ndarray:
    return np.array([float(Fraction(float(x)).limit_denominator(max_den)) for x in c])


def _solve(problem: cp.Problem, strict: bool):
    # accuracy is judged by the certified gap, not by solver status
    opts = {"tol_gap_abs": 1e-12, "tol_gap_rel": 1e-12, "tol_feas": 1e-12} if strict else {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        try:
            problem.solve(solver=cp.CLARABEL, **opts)
        except cp.error.SolverError:
            problem.solve(solver=cp.SCS, eps=1e-10)


def _primal(fv, G, P, dim, K, tag, strict):
    k = G.shape[1]
    p = _CVX_NORM[tag]
    t = cp.Variable()
    cons = []
    if k:
        c = cp.Variable(k)
        approx = cp.reshape(G @ c, (P, dim), order="C")
    else:
        c = None
        approx = np.zeros((P, dim))
    cons.append(cp.norm(fv.reshape(P, dim) - approx, p, axis=1) <= t)
    if K.mode is not HullMode.SPAN and k:
        cons.append(c >= 0)
    if K.mode is HullMode.HULL:
        cons.append(cp.sum(c) == 1)
    if K.radius_cap is not None and k:
        cons.append(cp.norm(approx, p, axis=1) <= K.radius_cap)
    _solve(cp.Problem(cp.Minimize(t), cons), strict)
    return np.zeros(0) if c is None or c.value is None else np.asarray(c.value, dtype=float)


def _dual(fv, G, P, dim, K, tag, strict):
    pd = _CVX_NORM[tag.dual]
    psi = cp.Variable((P, dim))
    obj = cp.sum(cp.multiply(psi, fv.reshape(P, dim)))
    cons = [cp.sum(cp.norm(psi, pd, axis=1)) <= 1]
    psi1 = psi
    psi2 = None
    if K.radius_cap is not None:
        psi2 = cp.Variable((P, dim))
        psi1 = psi - psi2
        obj = obj - K.radius_cap * cp.sum(cp.norm(psi2, pd, axis=1))
    if G.shape[1]:
        inner = G.T @ cp.reshape(psi1, (P * dim,), order="C")
        if K.mode is HullMode.HULL:
            s = cp.Variable()
            cons.append(inner <= s)
            obj = obj - s
        elif K.mode is HullMode.SPAN:
            cons.append(inner == 0)
        else:
            cons.append(inner <= 0)
    _solve(cp.Problem(cp.Maximize(obj), cons), strict)
    if psi.value is None:
        return np.zeros((P, dim)), np.zeros((P, dim))
    v2 = np.zeros((P, dim)) if psi2 is None else np.asarray(psi2.value, dtype=float)
    return np.asarray(psi.value, dtype=float), v2


def _certify(fv, G, P, dim, K, tag, psi, psi2):
    """Turn an approximate dual solution into a valid lower bound on the distance."""
    psi = psi.ravel().copy()
    psi2 = psi2.ravel().copy()
    psi1 = psi - psi2
    k = G.shape[1]
    if k and K.mode is not HullMode.HULL:
        # force <psi1, g_j> = 0 (span) or <= 0 (cone) up to rounding
        if K.mode is HullMode.SPAN:
            cols = G
        else:
            cols = G[:, G.T @ psi1 > 0]
        if cols.shape[1]:
            u, s, _ = np.linalg.svd(cols, full_matrices=False)
            q = u[:, s > s.max() * 1e-12] if s.size and s.max() > 0 else u[:, :0]
            psi1 = psi1 - q @ (q.T @ psi1)
    psi = psi1 + psi2
    total = float(dual_vector_norm(psi.reshape(P, dim), tag).sum())
    if total > 1:
        psi, psi1, psi2 = psi / total, psi1 / total, psi2 / total
    f_value = float(psi @ fv)
    k_value = 0.0
    if k:
        inner = G.T @ psi1
        if K.mode is HullMode.HULL:
            k_value = float(inner.max())
    if K.radius_cap is not None:
        k_value += K.radius_cap * float(dual_vector_norm(psi2.reshape(P, dim), tag).sum())
    return psi.reshape(P, dim), psi2.reshape(P, dim), f_value, k_value


def chebyshev_distance(f: GridFunction, K: ConvexSetSpec, tol: float = 1e-8,
                       candidates: Sequence[np.ndarray] = ()) -> ChebyshevResult:
    """Sup-norm distance from ``f`` to ``K`` with a dual lower bound.

    The returned ``distance`` is the residual of ``coefficients``, evaluated
    directly; ``lower`` is certified by ``psi``.  Extra ``candidates``
    (coefficient vectors) compete with the solver's answer.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if K.generators and K.generators[0].E != f.E:
        raise ValueError("target and generators live in different spaces")
    P, dim, tag = len(f.grid), f.E.dim, f.E.norm
    fv = f.values.ravel()
    G = K.matrix(P, dim)
    k = G.shape[1]

    best = None
    for strict in (False, True):
        c_raw = _primal(fv, G, P, dim, K, tag, strict)
        pool = [c_raw, _snap(c_raw)] if k else [np.zeros(0)]
        if k and K.mode is HullMode.SPAN and K.radius_cap is None:
            pool.append(np.linalg.lstsq(G, fv, rcond=None)[0])
        pool.extend(np.asarray(c, dtype=float) for c in candidates)
        for c in pool:
            c = _feasible(c, K, G, dim, tag) if k else c
            if c is None:
                continue
            r = _residual(fv, G, c, dim, tag)
            if best is None or r < best[0]:
                best = (r, c)
        psi, psi2 = _dual(fv, G, P, dim, K, tag, strict)
        psi, psi2, f_value, k_value = _certify(fv, G, P, dim, K, tag, psi, psi2)
        lower = f_value - k_value
        if best[0] - lower <= tol:
            break
    distance, coeffs = best
    return ChebyshevResult(distance, min(lower, distance), coeffs, psi, psi2, k_value)


@dataclass(frozen=True, eq=False)
class SeparationCertificate:
    dual_vectors: np.ndarray   # one E* vector per grid point
    gap: float
    k_value: float
    f_value: float
    distance: float

    def apply(self, g: GridFunction) -> float:
        return float(np.sum(self.dual_vectors * g.values))


@dataclass(frozen=True)
class Inside:
    distance: float


def _test_points(K: ConvexSetSpec) -> list[np.ndarray]:
    """Points of ``K`` (within the cap) against which a certificate is checked."""
    pts = []
    R = K.radius_cap
    for g in K.generators:
        v = g.values
        size = g.sup_norm()
        if K.mode is HullMode.HULL:
            if R is None or size <= R:
                pts.append(v)
            continue
        if R is None:
            pts.extend([v, 2 * v, 10 * v])
            if K.mode is HullMode.SPAN:
                pts.extend([-v, -10 * v])
        elif size > 0:
            pts.append(v * (R / size))
            if K.mode is HullMode.SPAN:
                pts.append(-v * (R / size))
    if K.mode is not HullMode.HULL:
        pts.append(np.zeros_like(K.generators[0].values) if K.generators else None)
    return [p for p in pts if p is not None]


def certificate_slack(cert: SeparationCertificate, f: GridFunction, K: ConvexSetSpec,
                      extra: Sequence[np.ndarray] = ()) -> float:
    """``min over test points g of (<psi, f> - <psi, g>) - gap``; nonnegative when valid."""
    f_val = float(np.sum(cert.dual_vectors * f.values))
    pts = _test_points(K) + list(extra)
    if not pts:
        return f_val - cert.k_value - cert.gap
    return min(f_val - float(np.sum(cert.dual_vectors * g)) for g in pts) - cert.gap


def separate(f: GridFunction, K: ConvexSetSpec, tol: float = 1e-6):
    """Return :class:`Inside` if ``dist(f, K) <= tol``, else a verified separating functional."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    res = chebyshev_distance(f, K, tol=min(tol / 10, 1e-8))
    if res.distance <= tol:
        return Inside(res.distance)
    if res.lower <= 0:
        raise RuntimeError("solver could not certify a positive separation gap")
    cert = SeparationCertificate(res.psi, res.lower, res.k_value, res.lower + res.k_value,
                                 res.distance)
    G = K.matrix(len(f.grid), f.E.dim)
    approx = (G @ res.coefficients).reshape(f.values.shape) if G.shape[1] else None
    slack = certificate_slack(cert, f, K, [approx] if approx is not None else [])
    if slack < -1e-9:
        raise RuntimeError(f"certificate failed re-verification (slack {slack:.3g})")
    return cert


# ---------------------------------------------------------------------------
# span of distance functions on [0, 1]

def nested_centers(points: Sequence[float], k_max: int) -> list[int]:
    """Grid indices ordered so that every prefix of length ``>= 2`` is a center set.

    Starts with both endpoints, then repeatedly adds the grid point farthest
    from the chosen ones (lowest index on ties).
    """
    x = np.asarray(points, dtype=float)
    order = [int(np.argmin(x)), int(np.argmax(x))]
    gap = np.minimum(np.abs(x - x[order[0]]), np.abs(x - x[order[1]]))
    while len(order) < min(k_max, len(x)):
        j = int(np.argmax(gap))
        order.append(j)
        gap = np.minimum(gap, np.abs(x - x[j]))
    return order[:k_max]


@dataclass(frozen=True, eq=False)
class ErrorCurve:
    ks: list[int]
    errors: list[float]
    lowers: list[float]
    centers: list[int]

    @property
    def non_increasing(self) -> bool:
        return all(b <= a for a, b in zip(self.errors, self.errors[1:]))

    def rows(self):
        return list(zip(self.ks, self.errors))


def distance_basis_experiment(fine_grid: Sequence[float], center_counts: Sequence[int],
                              target, centers: Sequence[int] | None = None,
                              tol: float = 1e-8) -> ErrorCurve:
    """Chebyshev error of ``target`` against the span of ``d(c, .)``, for growing center sets.

    ``centers`` is an ordering of grid indices; the first ``k`` entries are the
    centers used for count ``k``.  By default :func:`nested_centers` is used.
    Each solve is seeded with the previous approximant, so the curve cannot
    increase.
    """
    grid = GridSpace.interval(fine_grid)
    x = np.asarray(grid.points)
    if isinstance(target, GridFunction):
        f = target
    elif callable(target):
        f = GridFunction.scalar(grid, target(x))
    else:
        f = GridFunction.scalar(grid, target)
    ks = sorted(int(k) for k in center_counts)
    if centers is None:
        centers = nested_centers(x, max(ks))
    centers = [int(c) for c in centers]
    if len(centers) < max(ks):
        raise ValueError("not enough centers for the requested counts")
    ends = {int(np.argmin(x)), int(np.argmax(x))}
    if min(ks) >= 2 and not ends <= set(centers[:2]) | set(centers[:min(ks)]):
        raise ValueError("center sets must include both endpoints")
    errors, lowers = [], []
    prev = None
    for k in ks:
        gens = [GridFunction.scalar(grid, grid.distance_function(c)) for c in centers[:k]]
        K = ConvexSetSpec(gens, HullMode.SPAN)
        cands = []
        if prev is not None:
            cands.append(np.concatenate([prev, np.zeros(k - len(prev))]))
        res = chebyshev_distance(f, K, tol=tol, candidates=cands)
        errors.append(res.distance)
        lowers.append(res.lower)
        prev = res.coefficients
    return ErrorCurve(ks, errors, lowers, centers[:max(ks)])


@dataclass(frozen=True, eq=False)
class StepDemo:
    x: float
    hs: list[float]
    functions: list[GridFunction]
    limit: np.ndarray
    uniform_bound: float
    converges_exactly: bool


def step_function_demo(x: float, hs: Sequence[float], grid: Sequence[float]) -> StepDemo:
    """Difference quotients ``(d(x+h, .) - d(x, .)) / h`` tending to the +-1 step at ``x``.

    Quotients are evaluated in exact rational arithmetic on the given floats.
    Once ``h <= t - x`` the quotient at ``t`` is exactly -1; for ``t <= x`` it
    is always exactly 1.
    """
    hs = [float(h) for h in hs]
    if any(h <= 0 for h in hs):
        raise ValueError("step sizes must be positive")
    if any(x + h > 1 for h in hs):
        raise ValueError("x + h must stay inside [0, 1]")
    t = np.asarray(grid, dtype=float)
    space = GridSpace(tuple(float(p) for p in t))
    fx = Fraction(x)
    ft = [Fraction(float(p)) for p in t]
    exact_vals = [[(abs(fx + Fraction(h) - s) - abs(fx - s)) / Fraction(h) for s in ft]
                  for h in hs]
    funcs = [GridFunction.scalar(space, [float(q) for q in row]) for row in exact_vals]
    limit = np.where(t <= x, 1.0, -1.0)
    bound = float(max(abs(q) for row in exact_vals for q in row))

    exact = True
    for j, s in enumerate(ft):
        for h, row in zip(hs, exact_vals):
            if s < fx and row[j] != 1:
                exact = False
            if s > fx and Fraction(h) <= s - fx and row[j] != -1:
                exact = False
    return StepDemo(x, hs, funcs, limit, bound, exact)


# ---------------------------------------------------------------------------
# finite metric spaces with two probability measures of equal potential

@dataclass(frozen=True, eq=False)
class NullPotentialInstance:
    metric: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    residual: float
    trial: int
    kernel: list[Fraction] = field(default_factory=list)


def _is_metric(d: np.ndarray) -> bool:
    return bool(np.all(d <= (d[:, :, None] + d[None, :, :]).min(axis=1)))


def _balanced_kernel(d: np.ndarray) -> list[Fraction] | None:
    """An exact nonzero ``w`` with ``d w = 0`` and ``sum w = 0``, if one exists."""
    n = d.shape[0]
    m = sympy.Matrix(np.vstack([d, np.ones((1, n), dtype=int)]).tolist())
    basis = m.nullspace()
    if not basis:
        return None
    w = basis[0]
    den = sympy.ilcm(*[sympy.fraction(sympy.nsimplify(v))[1] for v in w])
    return [Fraction(int(v * den)) for v in w]


def metric_null_search(n_max: int, trials: int, seed: int = 0,
                       max_entry: int = 9) -> NullPotentialInstance | None:
    """Random search for an integer metric carrying two probability measures ``mu != nu``
    with ``sum_t d(x, t) mu(t) = sum_t d(x, t) nu(t)`` for every ``x``.

    Returns the first hit (lowest trial index) or ``None`` when the budget runs out.
    """
    if n_max < 2:
        return None
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        n = int(rng.integers(2, n_max + 1))
        upper = np.triu(rng.integers(1, max_entry + 1, size=(n, n)), 1)
        d = upper + upper.T
        if not _is_metric(d):
            continue
        aug = np.vstack([d, np.ones((1, n))]).astype(float)
        if np.linalg.matrix_rank(aug) == n:
            continue
        w = _balanced_kernel(d)
        if w is None:
            continue
        # exact check before any floats are formed
        if any(sum(int(d[i, j]) * w[j] for j in range(n)) != 0 for i in range(n)):
            continue
        s = sum(v for v in w if v > 0)
        mu = np.array([float(v / s) if v > 0 else 0.0 for v in w])
        nu = np.array([float(-v / s) if v < 0 else 0.0 for v in w])
        residual = float(np.abs(d @ (mu - nu)).max())
        return NullPotentialInstance(d, mu, nu, residual, trial, w)
    return None


# ---------------------------------------------------------------------------
# an unbounded convex set whose restrictions are everything

@dataclass(frozen=True, eq=False)
class UnboundedReport:
    windows: list[int]
    ranks: list[int]
    max_residual: list[float]
    preimages: list[np.ndarray]   # per window: rows are preimages on points 1..W+1

    @property
    def full_rank(self) -> bool:
        return all(r == w for r, w in zip(self.ranks, self.windows))


def unbounded_demo(windows: Sequence[int]) -> UnboundedReport:
    """Restrictions of ``{u : sum_n u(n) / 2**n = 0}`` to windows ``{1..W}``.

    For each window point ``i`` the preimage is ``e_i`` plus the value
    ``-2**(W+1-i)`` at ``W+1``, which the defining functional annihilates;
    restricted to the window these preimages are the identity matrix.
    """
    ranks, residuals, pre = [], [], []
    for W in windows:
        W = int(W)
        if W < 1:
            raise ValueError("window sizes must be at least 1")
        u = np.zeros((W, W + 1))
        for i in range(1, W + 1):
            u[i - 1, i - 1] = 1.0
            u[i - 1, W] = -(2.0 ** (W + 1 - i))
        weights = 2.0 ** -np.arange(1, W + 2)
        res = np.abs(u @ weights)
        ranks.append(int(np.linalg.matrix_rank(u[:, :W])))
        residuals.append(float(res.max()))
        pre.append(u)
    return UnboundedReport(list(map(int, windows)), ranks, residuals, pre)
