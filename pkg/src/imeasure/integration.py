"""Integration of bounded functions against operator measures.

Functions on an atomic space are eventually constant: one value per explicit
atom and a single value shared by all tail atoms.  Against a geometric tail
the integral therefore has a closed form, and the error of stopping after
``N`` atoms is bounded by ``sup|f| * B_N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measures import (
    AtomicSpace,
    ConvergenceCertificate,
    OperatorMeasure,
    certify_independent_convergence,
    scalarize,
)
from .spaces import NormedSpace, NormTag, Vector, vector_norm

__all__ = [
    "VectorFunction",
    "FunctionSequence",
    "IntegralResult",
    "ConvergenceReport",
    "WeakConvergenceReport",
    "WeakStarConvergenceReport",
    "LinftyReport",
    "ConvergenceError",
    "integrate_simple",
    "integrate",
    "partial_integral",
    "weak_star_integrate",
    "verify_bnc",
    "verify_bwc",
    "verify_bwstarc",
    "tent",
    "linfty_counterexample",
    "linfty_instance",
]


class ConvergenceError(Exception):
    """The supplied sequence does not settle at some atom."""

    def __init__(self, message, atom=None, residuals=None):
        super().__init__(message)
        self.atom = atom
        self.residuals = residuals


@dataclass(frozen=True, eq=False)
class VectorFunction:
    space: AtomicSpace
    E: NormedSpace
    head_values: np.ndarray
    tail_value: np.ndarray | None = None

    def __post_init__(self):
        head = np.array(self.head_values, dtype=float)
        if head.size == 0:
            head = head.reshape(0, self.E.dim)
        if head.ndim == 1 and self.E.dim == 1:
            head = head[:, None]
        if head.shape != (self.space.n_head, self.E.dim):
            raise ValueError(f"function needs {self.space.n_head} values in R^{self.E.dim}")
        head.setflags(write=False)
        object.__setattr__(self, "head_values", head)
        tail = np.zeros(self.E.dim) if self.tail_value is None else \
            np.array(self.tail_value, dtype=float, ndmin=1)
        if tail.shape != (self.E.dim,):
            raise ValueError("tail value has the wrong dimension")
        if not self.space.has_tail and np.any(tail != 0):
            raise ValueError("tail value on a space without tail")
        tail.setflags(write=False)
        object.__setattr__(self, "tail_value", tail)

    @classmethod
    def constant(cls, space: AtomicSpace, E: NormedSpace, value) -> "VectorFunction":
        value = np.array(value, dtype=float, ndmin=1)
        head = np.tile(value, (space.n_head, 1))
        return cls(space, E, head, value if space.has_tail else None)

    @classmethod
    def zero(cls, space: AtomicSpace, E: NormedSpace) -> "VectorFunction":
        return cls(space, E, np.zeros((space.n_head, E.dim)))

    def value(self, i: int) -> np.ndarray:
        return self.head_values[i] if i < self.space.n_head else self.tail_value

    def sup_norm(self) -> float:
        vals = vector_norm(self.head_values, self.E.norm)
        tail = float(vector_norm(self.tail_value, self.E.norm)) if self.space.has_tail else 0.0
        return max([tail, *map(float, vals)])

    def __add__(self, other: "VectorFunction") -> "VectorFunction":
        return VectorFunction(self.space, self.E, self.head_values + other.head_values,
                              self.tail_value + other.tail_value)

    def __sub__(self, other: "VectorFunction") -> "VectorFunction":
        return self + other * -1.0

    def __mul__(self, alpha: float) -> "VectorFunction":
        return VectorFunction(self.space, self.E, alpha * self.head_values,
                              alpha * self.tail_value)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class FunctionSequence:
    terms: tuple[VectorFunction, ...]
    limit: VectorFunction
    bound: float

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("a sequence needs at least one term")
        object.__setattr__(self, "terms", terms)
        for i, f in enumerate((*terms, self.limit)):
            if f.space != self.limit.space or f.E != self.limit.E:
                raise ValueError("all terms must share the space and E of the limit")
            if f.sup_norm() > self.bound:
                which = "limit" if i == len(terms) else f"term {i + 1}"
                raise ValueError(f"{which} exceeds the declared uniform bound {self.bound}")

    def __len__(self):
        return len(self.terms)


@dataclass(frozen=True, eq=False)
class IntegralResult:
    value: Vector
    truncation_index: int
    error_bound: float


def _check_pair(mu: OperatorMeasure, f: VectorFunction):
    if mu.space != f.space:
        raise ValueError("function and measure live on different spaces")
    if mu.E.dim != f.E.dim:
        raise ValueError("function values do not lie in the measure's domain")


def _head_sum(mu: OperatorMeasure, f: VectorFunction) -> np.ndarray:
    acc = np.zeros(mu.F.dim)
    for m, x in zip(mu.head, f.head_values):
        acc = acc + m @ x
    return acc


def integrate_simple(mu: OperatorMeasure, f: VectorFunction) -> Vector:
    """``sum_a mu({a}) f(a)`` for functions that vanish on the tail."""
    _check_pair(mu, f)
    if mu.space.has_tail and np.any(f.tail_value != 0):
        raise ValueError("function is nonzero on the tail; use integrate()")
    return Vector(mu.F, _head_sum(mu, f))


def integrate(mu: OperatorMeasure, f: VectorFunction, tol: float = 1e-12,
              certificate: ConvergenceCertificate | None = None) -> IntegralResult:
    """Integral of ``f`` with a certified truncation bound.

    The returned value includes the tail in closed form.  ``truncation_index``
    is the least ``N`` for which the ``N``-atom partial sum is within
    ``error_bound <= tol`` of it.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_pair(mu, f)
    value = _head_sum(mu, f)
    if mu.tail is not None:
        value = value + mu.tail.weight_from(1) * (mu.tail.pattern @ f.tail_value)
    cert = certificate or certify_independent_convergence(mu)
    sup = f.sup_norm()
    if sup == 0:
        return IntegralResult(Vector(mu.F, value), 0, 0.0)
    n = cert.truncation_index(tol / sup)
    return IntegralResult(Vector(mu.F, value), n, sup * cert.tail_bound(n))


def partial_integral(mu: OperatorMeasure, f: VectorFunction, n: int) -> np.ndarray:
    """Sum over the first ``n`` atoms, head first, then tail atoms one by one."""
    _check_pair(mu, f)
    acc = np.zeros(mu.F.dim)
    for i in range(n):
        acc = acc + mu.atom_matrix(i) @ f.value(i)
    return acc


def weak_star_integrate(mu: OperatorMeasure, f: VectorFunction, v, tol: float = 1e-12) -> float:
    """Pairing of the weak* integral of ``f`` with ``v`` in the predual of F.

    Computed by scalarizing first: ``(int f dmu)(v) = int f dnu`` where
    ``nu(A) = <v, mu(A)(.)>``.
    """
    v = np.asarray(v.coords if isinstance(v, Vector) else v, dtype=float)
    if v.shape != (mu.F.dim,):
        raise ValueError("pairing vector has the wrong dimension")
    nu = scalarize(mu, v)
    return float(integrate(nu, f, tol).value.coords[0])


# ---------------------------------------------------------------------------
# bounded convergence verifiers

@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    m0: int                      # 1-based index into the sequence
    residuals: np.ndarray        # ||int f_m - int f|| for m = 1..M
    truncation_index: int        # atoms handled explicitly
    head_discrepancy: np.ndarray  # certified bound on the first N atoms, per m
    tail_budget: float           # bound on the contribution past N
    epsilon: float

    @property
    def holds(self) -> bool:
        return bool(np.all(self.residuals[self.m0 - 1:] <= self.epsilon))


def _discrepancies(seq: FunctionSequence, n_atoms: int) -> np.ndarray:
    """``||f_m(a) - f(a)||`` for the first ``n_atoms`` atoms, shape (M, n_atoms)."""
    lim = seq.limit
    out = np.empty((len(seq), n_atoms))
    for m, f in enumerate(seq.terms):
        for i in range(n_atoms):
            out[m, i] = vector_norm(f.value(i) - lim.value(i), lim.E.norm)
    return out


def _max_discrepancy(seq: FunctionSequence) -> float:
    lim = seq.limit
    best = 0.0
    for f in seq.terms:
        d = f - lim
        best = max(best, d.sup_norm())
    return best


def verify_bnc(mu: OperatorMeasure, seq: FunctionSequence, eps: float) -> ConvergenceReport:
    """Constructive bounded norm convergence for a uniformly bounded sequence.

    Choose ``N`` so that the atoms past ``N`` contribute at most ``eps/2``
    (the discrepancy there is at most ``max_m ||f_m - f|| <= 2C``), then find
    the first ``m0`` after which the weighted discrepancy on the first ``N``
    atoms stays below ``eps/2``.  Every residual from ``m0`` on is then at
    most ``eps``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    _check_pair(mu, seq.limit)
    cert = certify_independent_convergence(mu)
    dmax = _max_discrepancy(seq)
    if dmax > 2 * seq.bound:
        raise ValueError("discrepancy exceeds twice the uniform bound")
    n = cert.truncation_index(eps / (2 * dmax)) if dmax > 0 else 0
    tail_budget = dmax * cert.tail_bound(n)

    weights = np.array([cert.head_norms[i] if i < mu.space.n_head
                        else cert.tail_norm * mu.tail.weight(i - mu.space.n_head + 1)
                        for i in range(n)])
    disc = _discrepancies(seq, n)
    head = disc @ weights if n else np.zeros(len(seq))

    int_lim = integrate(mu, seq.limit).value.coords
    residuals = np.array([float(vector_norm(integrate(mu, f).value.coords - int_lim, mu.F.norm))
                          for f in seq.terms])

    bad = np.nonzero(head > eps / 2)[0]
    if len(bad) and bad[-1] == len(seq) - 1:
        worst = int(np.argmax(disc[-1] * weights))
        raise ConvergenceError(
            f"sequence has not settled at atom {mu.space.label(worst)!r}: weighted "
            f"discrepancy {head[-1]:.6g} > eps/2 at the last term",
            atom=worst, residuals=residuals)
    m0 = int(bad[-1]) + 2 if len(bad) else 1
    return ConvergenceReport(m0, residuals, n, head, tail_budget, eps)


@dataclass(frozen=True, eq=False)
class WeakConvergenceReport:
    m0: int
    residuals: np.ndarray              # max over dual basis functionals, per m
    coordinate_residuals: np.ndarray   # |<e_i, int f_m - int f>|, shape (M, dim F)
    coordinate_m0: list[int]
    norm_report: ConvergenceReport

    @property
    def holds(self) -> bool:
        return self.norm_report.holds and bool(
            np.all(self.residuals[self.m0 - 1:] <= self.norm_report.epsilon))


def _first_settled(col: np.ndarray, eps: float) -> int:
    bad = np.nonzero(col > eps)[0]
    return int(bad[-1]) + 2 if len(bad) else 1


def verify_bwc(mu: OperatorMeasure, seq: FunctionSequence, eps: float) -> WeakConvergenceReport:
    """Weak convergence of the integrals, tested against the dual basis of F.

    In finite dimensions weak and norm convergence coincide, so the index
    comes from :func:`verify_bnc`; ``|<e_i, y>| <= ||y||`` for every norm
    offered here.
    """
    norm_report = verify_bnc(mu, seq, eps)
    int_lim = integrate(mu, seq.limit).value.coords
    coords = np.array([np.abs(integrate(mu, f).value.coords - int_lim) for f in seq.terms])
    per = [_first_settled(coords[:, i], eps) for i in range(mu.F.dim)]
    return WeakConvergenceReport(norm_report.m0, coords.max(axis=1), coords, per, norm_report)


@dataclass(frozen=True, eq=False)
class WeakStarConvergenceReport:
    m0: list[int]                # one index per basis vector of the predual
    residuals: np.ndarray        # |pairing(int f_m - int f, v_i)|, shape (M, dim)
    reports: list[ConvergenceReport] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return all(r.holds for r in self.reports)


def verify_bwstarc(mu: OperatorMeasure, seq: FunctionSequence, eps: float,
                   predual: NormedSpace | None = None) -> WeakStarConvergenceReport:
    """Weak* convergence: each predual basis vector ``v`` is checked separately
    through the scalar measure ``<v, mu(.)(.)>``."""
    predual = predual or NormedSpace(mu.F.dim, mu.F.norm.dual)
    if predual.dim != mu.F.dim:
        raise ValueError("predual dimension does not match the measure's codomain")
    reports, cols = [], []
    for v in predual.basis():
        nu = scalarize(mu, v.coords)
        lim = weak_star_integrate(mu, seq.limit, v)
        cols.append([abs(weak_star_integrate(mu, f, v) - lim) for f in seq.terms])
        reports.append(verify_bnc(nu, seq, eps))
    return WeakStarConvergenceReport([r.m0 for r in reports], np.array(cols).T, reports)


# ---------------------------------------------------------------------------
# a bounded, pointwise null sequence whose images do not converge

def tent(k: int, n_nodes: int):
    """Continuous tent on [0, 1] peaking at ``1/k``, vanishing at every other node ``1/n``.

    Breakpoints sit midway between ``1/k`` and its neighbouring nodes.
    """
    if not 1 <= k <= n_nodes:
        raise ValueError("tent index out of range")
    peak = 1.0 / k
    left = 0.5 * (1.0 / (k + 1) + peak)
    if k == 1:
        xp, fp = [left, peak], [0.0, 1.0]
    else:
        xp, fp = [left, peak, 0.5 * (peak + 1.0 / (k - 1))], [0.0, 1.0, 0.0]

    def f(t):
        return np.interp(t, xp, fp, left=0.0, right=fp[-1])

    return f


@dataclass(frozen=True, eq=False)
class LinftyReport:
    nodes: np.ndarray
    images: np.ndarray       # row k: (f_k(1/n))_n
    gap_matrix: np.ndarray
    min_off_diagonal_gap: float


def linfty_counterexample(n: int) -> LinftyReport:
    """Evaluate ``T f = (f(1/n))_n`` on the tents; every image pair is a sup-distance 1 apart."""
    if n < 2:
        raise ValueError("need at least two nodes")
    nodes = 1.0 / np.arange(1, n + 1)
    images = np.array([tent(k, n)(nodes) for k in range(1, n + 1)])
    gaps = np.abs(images[:, None, :] - images[None, :, :]).max(axis=2)
    off = gaps[~np.eye(n, dtype=bool)]
    return LinftyReport(nodes, images, gaps, float(off.min()))


def linfty_instance(n: int) -> tuple[OperatorMeasure, FunctionSequence]:
    """The point-evaluation map as a measure on the nodes, with the tent sequence."""
    report = linfty_counterexample(n)
    scalar = NormedSpace(1, NormTag.SUM)
    F = NormedSpace(n, NormTag.MAX)
    space = AtomicSpace(tuple(f"1/{j}" for j in range(1, n + 1)))
    head = np.eye(n)[:, :, None]  # atom 1/j sends 1 to e_j
    mu = OperatorMeasure(space, scalar, F, head)
    terms = tuple(VectorFunction(space, scalar, row[:, None]) for row in report.images)
    seq = FunctionSequence(terms, VectorFunction.zero(space, scalar), 1.0)
    return mu, seq
