"""Operator-valued measures on atomic measurable spaces.

An atomic space has finitely many labelled atoms and, optionally, a
geometric tail of countably many further atoms.  Every measurable set is a
finite or cofinite set of atom indices, so a measure is fully described by
its value on each atom.  Head atoms are indexed ``0 .. N-1``; tail atom
``N + k - 1`` (``k >= 1``) carries the operator ``coeff * ratio**k * pattern``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .spaces import (
    NormedSpace,
    NormTag,
    Operator,
    Vector,
    dual_vector_norm,
    is_polyhedral,
    norming_functional,
    operator_norm_bounds,
    unit_ball_vertices,
    vector_norm,
)

__all__ = [
    "TailKind",
    "AtomicSpace",
    "MeasurableSet",
    "GeometricTail",
    "OperatorMeasure",
    "ScalarMeasure",
    "ConvergenceCertificate",
    "SemivariationMethod",
    "SemivariationResult",
    "ControlMeasure",
    "AbsoluteContinuity",
    "CapabilityError",
    "DegenerateInstanceError",
    "measure_of",
    "certify_independent_convergence",
    "semivariation",
    "variation",
    "control_measure",
    "is_absolutely_continuous",
    "scalarize",
    "TAIL",
]

MAX_ENUM_CANDIDATES = 10**7
TAIL = "tail"  # label of the merged tail block in witnesses


class CapabilityError(ValueError):
    """The requested method cannot handle this instance."""


class DegenerateInstanceError(RuntimeError):
    pass


class TailKind(enum.Enum):
    NONE = "none"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class AtomicSpace:
    atoms: tuple[str, ...]
    tail_kind: TailKind = TailKind.NONE

    def __post_init__(self):
        atoms = tuple(str(a) for a in self.atoms)
        if len(set(atoms)) != len(atoms):
            raise ValueError("atom labels must be distinct")
        object.__setattr__(self, "atoms", atoms)
        if not isinstance(self.tail_kind, TailKind):
            object.__setattr__(self, "tail_kind", TailKind(self.tail_kind))

    @classmethod
    def of_size(cls, n: int, tail: bool = False) -> "AtomicSpace":
        return cls(tuple(f"a{i}" for i in range(n)),
                   TailKind.GEOMETRIC if tail else TailKind.NONE)

    @property
    def n_head(self) -> int:
        return len(self.atoms)

    @property
    def has_tail(self) -> bool:
        return self.tail_kind is TailKind.GEOMETRIC

    def label(self, index: int) -> str:
        if index < self.n_head:
            return self.atoms[index]
        return f"tail[{index - self.n_head + 1}]"


@dataclass(frozen=True)
class MeasurableSet:
    """A finite set of atoms, or the complement of one (``cofinite=True``)."""

    base: AtomicSpace
    indices: tuple[int, ...] = ()
    cofinite: bool = False

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ValueError("atom indices must be distinct")
        if any(i < 0 for i in idx):
            raise ValueError("atom indices must be nonnegative")
        if not self.base.has_tail and any(i >= self.base.n_head for i in idx):
            raise ValueError("atom index out of range")
        if self.cofinite and not self.base.has_tail:
            raise ValueError("cofinite sets require a space with a geometric tail")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def empty(cls, base: AtomicSpace) -> "MeasurableSet":
        return cls(base, ())

    @classmethod
    def whole(cls, base: AtomicSpace) -> "MeasurableSet":
        if base.has_tail:
            return cls(base, (), cofinite=True)
        return cls(base, tuple(range(base.n_head)))

    @classmethod
    def finite(cls, base: AtomicSpace, indices: Iterable[int]) -> "MeasurableSet":
        return cls(base, tuple(indices))

    def __contains__(self, i: int) -> bool:
        return (i in self.indices) != self.cofinite

    @property
    def is_empty(self) -> bool:
        return not self.cofinite and not self.indices

    def head_indices(self) -> list[int]:
        return [i for i in range(self.base.n_head) if i in self]

    def complement(self) -> "MeasurableSet":
        if self.base.has_tail:
            return MeasurableSet(self.base, self.indices, not self.cofinite)
        rest = set(range(self.base.n_head)) - set(self.indices)
        return MeasurableSet(self.base, tuple(rest))

    def union(self, other: "MeasurableSet") -> "MeasurableSet":
        a, b = set(self.indices), set(other.indices)
        if self.cofinite and other.cofinite:
            return MeasurableSet(self.base, tuple(a & b), True)
        if self.cofinite:
            return MeasurableSet(self.base, tuple(a - b), True)
        if other.cofinite:
            return MeasurableSet(self.base, tuple(b - a), True)
        return MeasurableSet(self.base, tuple(a | b))

    def intersection(self, other: "MeasurableSet") -> "MeasurableSet":
        return self.complement().union(other.complement()).complement()

    def issubset(self, other: "MeasurableSet") -> bool:
        return self.intersection(other.complement()).is_empty


@dataclass(frozen=True, eq=False)
class GeometricTail:
    pattern: np.ndarray
    coeff: float
    ratio: float

    def __post_init__(self):
        pattern = np.array(self.pattern, dtype=float, ndmin=2)
        pattern.setflags(write=False)
        object.__setattr__(self, "pattern", pattern)
        if not self.coeff > 0:
            raise ValueError("tail coefficient must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError("tail ratio must lie in (0, 1)")

    def weight(self, k: int) -> float:
        """Scalar multiple of the pattern on tail atom ``k >= 1``."""
        return self.coeff * self.ratio**k

    def weight_from(self, k: int) -> float:
        """``sum_{j >= k} coeff * ratio**j``."""
        return self.coeff * self.ratio**k / (1.0 - self.ratio)


def _tail_weight_in(coeff: float, ratio: float, A: MeasurableSet) -> float:
    """``sum coeff * ratio**k`` over the tail atoms ``k`` of ``A``."""
    n = A.base.n_head
    ks = [i - n + 1 for i in A.indices if i >= n]
    if A.cofinite:
        total = coeff * ratio / (1.0 - ratio) - sum(coeff * ratio**k for k in ks)
        return max(total, 0.0)
    return sum(coeff * ratio**k for k in ks)


@dataclass(frozen=True, eq=False)
class OperatorMeasure:
    space: AtomicSpace
    E: NormedSpace
    F: NormedSpace
    head: np.ndarray
    tail: GeometricTail | None = None

    def __post_init__(self):
        head = np.array(self.head, dtype=float)
        if head.size == 0:
            head = head.reshape(0, self.F.dim, self.E.dim)
        if head.ndim != 3 or head.shape[1:] != (self.F.dim, self.E.dim):
            raise ValueError(f"head must have shape (N, {self.F.dim}, {self.E.dim}),"
                             f" got {head.shape}")
        if head.shape[0] != self.space.n_head:
            raise ValueError("one head operator is required per explicit atom")
        head.setflags(write=False)
        object.__setattr__(self, "head", head)
        if (self.tail is not None) != self.space.has_tail:
            raise ValueError("a tail is present iff the space has a geometric tail")
        if self.tail is not None and self.tail.pattern.shape != (self.F.dim, self.E.dim):
            raise ValueError("tail pattern shape does not match E and F")

    @classmethod
    def from_operators(cls, operators: Sequence[Operator], space: AtomicSpace | None = None,
                       tail: GeometricTail | None = None) -> "OperatorMeasure":
        if not operators:
            raise ValueError("at least one operator is required to infer E and F")
        E, F = operators[0].domain, operators[0].codomain
        if any(T.domain != E or T.codomain != F for T in operators):
            raise ValueError("all head operators must share E and F")
        space = space or AtomicSpace.of_size(len(operators), tail is not None)
        return cls(space, E, F, np.stack([T.entries for T in operators]), tail)

    def atom_matrix(self, i: int) -> np.ndarray:
        n = self.space.n_head
        if i < n:
            return self.head[i]
        if self.tail is None:
            raise IndexError(i)
        return self.tail.weight(i - n + 1) * self.tail.pattern

    def atom(self, i: int) -> Operator:
        return Operator(self.E, self.F, self.atom_matrix(i))

    def blocks(self, A: MeasurableSet) -> tuple[list, np.ndarray]:
        """Disjoint pieces of ``A`` on which ``mu`` is evaluated separately.

        Every atom of ``A`` becomes its own piece except that infinitely many
        tail atoms are merged into one.  Tail operators are positive multiples
        of one pattern, so the merge leaves semivariation and variation
        unchanged: a positive combination of unit balls is a scaled unit ball.
        """
        if A.base != self.space:
            raise ValueError("set and measure live on different spaces")
        labels: list = []
        mats = []
        n = self.space.n_head
        for i in A.head_indices():
            labels.append(i)
            mats.append(self.head[i])
        if self.tail is not None:
            if A.cofinite:
                w = _tail_weight_in(self.tail.coeff, self.tail.ratio, A)
                if w > 0:
                    labels.append(TAIL)
                    mats.append(w * self.tail.pattern)
            else:
                for i in A.indices:
                    if i >= n:
                        labels.append(i)
                        mats.append(self.atom_matrix(i))
        shape = (len(mats), self.F.dim, self.E.dim)
        return labels, (np.stack(mats) if mats else np.zeros(shape))


@dataclass(frozen=True, eq=False)
class ScalarMeasure:
    space: AtomicSpace
    weights: np.ndarray
    tail_coeff: float = 0.0
    tail_ratio: float = 0.5

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=1)
        if w.shape != (self.space.n_head,):
            raise ValueError("one weight is required per explicit atom")
        if np.any(w < 0) or self.tail_coeff < 0:
            raise ValueError("weights must be nonnegative")
        if self.tail_coeff > 0 and not self.space.has_tail:
            raise ValueError("tail weight on a space without tail")
        if not 0 < self.tail_ratio < 1:
            raise ValueError("tail ratio must lie in (0, 1)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def atom_weight(self, i: int) -> float:
        n = self.space.n_head
        if i < n:
            return float(self.weights[i])
        return self.tail_coeff * self.tail_ratio ** (i - n + 1)

    def __call__(self, A: MeasurableSet) -> float:
        total = sum(float(self.weights[i]) for i in A.head_indices())
        if self.tail_coeff > 0:
            total += _tail_weight_in(self.tail_coeff, self.tail_ratio, A)
        return total


def measure_of(mu: OperatorMeasure, A: MeasurableSet) -> Operator:
    _, mats = mu.blocks(A)
    return Operator(mu.E, mu.F, mats.sum(axis=0))


# ---------------------------------------------------------------------------
# independent convergence

@dataclass(frozen=True, eq=False)
class ConvergenceCertificate:
    """``norm_sum`` bounds ``sum ||T_n||``; ``tail_bound(N)`` bounds the rest after N atoms."""

    norm_sum: float
    head_norms: np.ndarray
    tail_norm: float = 0.0
    tail: GeometricTail | None = None

    def tail_bound(self, n: int) -> float:
        """``B_N = sum_{index >= N} ||T_index||`` (0-based atom indices)."""
        n_head = len(self.head_norms)
        pattern_sum = 0.0
        if self.tail is not None:
            k = max(n - n_head, 0) + 1
            pattern_sum = self.tail_norm * self.tail.weight_from(k)
        if n >= n_head:
            return pattern_sum
        return sum(float(x) for x in self.head_norms[n:]) + pattern_sum

    def truncation_index(self, budget: float) -> int:
        """Smallest ``N`` with ``tail_bound(N) <= budget``."""
        n_head = len(self.head_norms)
        for n in range(n_head + 1):
            if self.tail_bound(n) <= budget:
                return n
        # tail_bound(n_head + j) = tail_norm * coeff * r**(j+1) / (1-r)
        t = self.tail
        j = math.ceil(math.log(budget * (1 - t.ratio) / (self.tail_norm * t.coeff))
                      / math.log(t.ratio)) - 1
        j = max(j, 0)
        while self.tail_bound(n_head + j) > budget:
            j += 1
        while j > 0 and self.tail_bound(n_head + j - 1) <= budget:
            j -= 1
        return n_head + j


def certify_independent_convergence(mu: OperatorMeasure) -> ConvergenceCertificate:
    """Certify ``sum ||T_n|| < inf``, which in finite dimensions is independent convergence."""
    head_norms = np.array([operator_norm_bounds(mu.atom(i)).upper
                           for i in range(mu.space.n_head)])
    total = sum(float(x) for x in head_norms)
    tail_norm = 0.0
    if mu.tail is not None:
        tail_norm = operator_norm_bounds(Operator(mu.E, mu.F, mu.tail.pattern)).upper
        total += tail_norm * mu.tail.weight_from(1)
    return ConvergenceCertificate(total, head_norms, tail_norm, mu.tail)


# ---------------------------------------------------------------------------
# semivariation

class SemivariationMethod(enum.Enum):
    EXACT_ENUM = "exact"
    ALTERNATING = "alternating"
    AUTO = "auto"


@dataclass(frozen=True, eq=False)
class SemivariationResult:
    value: float
    upper: float
    mode: str  # "exact" or "lowerBound"
    witness: list[Vector] = field(default_factory=list)
    atoms: list = field(default_factory=list)

    @property
    def exact(self) -> bool:
        return self.mode == "exact"


def _block_norms(mats: np.ndarray, E: NormedSpace, F: NormedSpace) -> list[float]:
    return [operator_norm_bounds(Operator(E, F, m)).upper for m in mats]


def _primal_enumeration(mats, E, F):
    """Maximize over vertex choices of the E unit ball, one per block."""
    verts = unit_ball_vertices(E)
    images = np.einsum("aij,vj->avi", mats, verts)  # (blocks, vertices, dimF)
    n_blocks, k = images.shape[:2]
    total = k**n_blocks
    best, best_idx = -1.0, None
    chunk = 1 << 16
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, (k,) * n_blocks)
        acc = np.zeros((len(flat), F.dim))
        for a in range(n_blocks):
            acc = acc + images[a, idx[a]]
        vals = vector_norm(acc, F.norm)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best = float(vals[j])
            best_idx = [int(ix[j]) for ix in idx]
    return best, [verts[i] for i in best_idx]


def _vertex_count(space: NormedSpace) -> int:
    if space.dim == 1:
        return 2
    return 2 * space.dim if space.norm is NormTag.SUM else 2**space.dim


def _dual_vertices(F: NormedSpace) -> np.ndarray:
    return unit_ball_vertices(NormedSpace(F.dim, F.norm.dual))


def _dual_enumeration(mats, E, F):
    """``sup ||sum T_a x_a|| = max over dual vertices s of sum ||T_a^T s||_E*``."""
    svs = _dual_vertices(F)
    g = np.einsum("aij,si->saj", mats, svs)  # (vertices, blocks, dimE)
    per = dual_vector_norm(g, E.norm)
    vals = np.zeros(len(svs))
    for a in range(per.shape[1]):
        vals = vals + per[:, a]
    j = int(np.argmax(vals))
    xs = [norming_functional(g[j, a], E.norm.dual) for a in range(len(mats))]
    return float(vals[j]), xs


def _alternating(mats, E, F, tol, seed, starts, max_iter=10_000):
    rng = np.random.default_rng(seed)
    best, best_xs = -1.0, None
    # one start along the heaviest block's top singular direction, the rest random
    heavy = int(np.argmax([np.linalg.norm(m, 2) for m in mats]))
    u = np.linalg.svd(mats[heavy])[0][:, 0]
    inits = [u] + [rng.standard_normal(F.dim) for _ in range(max(starts - 1, 0))]
    for y in inits:
        dn = float(dual_vector_norm(y, F.norm))
        if dn > 0:
            y = y / dn
        prev = -np.inf
        for _ in range(max_iter):
            # each step cannot decrease ||s||: y norms the previous s
            xs = [norming_functional(m.T @ y, E.norm.dual) for m in mats]
            s = np.zeros(F.dim)
            for m, x in zip(mats, xs):
                s = s + m @ x
            val = float(vector_norm(s, F.norm))
            if val > best:
                best, best_xs = val, xs
            if val <= prev + tol:
                break
            prev = val
            y = norming_functional(s, F.norm)
    return best, best_xs


def semivariation(mu: OperatorMeasure, A: MeasurableSet,
                  method: SemivariationMethod | str = SemivariationMethod.AUTO,
                  tol: float = 1e-12, seed: int = 0, starts: int = 8) -> SemivariationResult:
    """Semivariation ``sup ||sum_a mu({a}) x_a||`` over unit vectors ``x_a``, ``a`` in ``A``.

    Partitions of ``A`` coarser than the atoms cannot do better, so the
    supremum is taken over the atoms of ``A`` (with the tail merged).

    EXACT_ENUM enumerates vertices of the E unit ball when it is polyhedral,
    or vertices of the dual F ball when F is polyhedral.  ALTERNATING is a
    multi-start ascent that only certifies a lower bound.  In every mode
    ``upper`` is the triangle-inequality bound (the variation of A).
    """
    method = SemivariationMethod(method)
    labels, mats = mu.blocks(A)
    if not labels:
        return SemivariationResult(0.0, 0.0, "exact", [], [])
    upper = sum(_block_norms(mats, mu.E, mu.F))
    E, F = mu.E, mu.F

    can_primal = is_polyhedral(E) and \
        _vertex_count(E) ** len(labels) <= MAX_ENUM_CANDIDATES
    Fd = NormedSpace(F.dim, F.norm.dual)
    can_dual = is_polyhedral(F) and _vertex_count(Fd) <= MAX_ENUM_CANDIDATES
    if method is not SemivariationMethod.ALTERNATING and (can_primal or can_dual):
        if can_primal:
            value, xs = _primal_enumeration(mats, E, F)
        else:
            value, xs = _dual_enumeration(mats, E, F)
        return SemivariationResult(value, max(value, upper), "exact",
                                   [Vector(E, x) for x in xs], labels)
    if method is SemivariationMethod.EXACT_ENUM:
        raise CapabilityError(
            "exact enumeration needs a polyhedral norm on E or F and a bounded vertex count")
    value, xs = _alternating(mats, E, F, tol, seed, starts)
    return SemivariationResult(value, max(value, upper), "lowerBound",
                               [Vector(E, x) for x in xs], labels)


def variation(mu: OperatorMeasure, A: MeasurableSet) -> float:
    """Sum of operator norms over the atoms of ``A`` (tail in closed form)."""
    _, mats = mu.blocks(A)
    return sum(_block_norms(mats, mu.E, mu.F))


# ---------------------------------------------------------------------------
# control measures and absolute continuity

@dataclass(frozen=True, eq=False)
class ControlMeasure:
    lam: ScalarMeasure
    psi: Vector
    certificate: ConvergenceCertificate
    attempts: int = 1

    def delta(self, eps: float) -> float:
        """A ``delta`` with ``lam(A) <= delta  =>  ||mu||_A <= eps``.

        Past ``N = truncation_index(eps)`` atoms the remaining variation is at
        most ``eps``.  Among the first ``N`` atoms every non-null one has
        positive weight, so half the least such weight keeps ``A`` clear of
        them.
        """
        if eps <= 0:
            raise ValueError("eps must be positive")
        n = self.certificate.truncation_index(eps)
        positive = [w for w in (self.lam.atom_weight(i) for i in range(n)) if w > 0]
        if not positive:
            return 1.0
        return 0.5 * min(positive)

    def delta_table(self, eps_values: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)
                    ) -> dict[float, float]:
        return {float(e): self.delta(e) for e in eps_values}


def control_measure(mu: OperatorMeasure, seed: int = 0, psi=None,
                    max_attempts: int = 100) -> ControlMeasure:
    """Control measure ``lam(A) = |psi o mu|(A)`` for a random unit functional ``psi``.

    The variation of the scalar measure ``psi o mu`` never exceeds the
    semivariation of ``mu``, so ``0 <= lam(A) <= ||mu||_A``.  ``psi`` is
    redrawn until no non-null atom is lost.
    """
    rng = np.random.default_rng(seed)
    Fd = mu.F.dual
    nonnull = [bool(np.any(m != 0)) for m in mu.head]
    tail_nonnull = mu.tail is not None and bool(np.any(mu.tail.pattern != 0))
    cert = certify_independent_convergence(mu)
    for attempt in range(1, max_attempts + 1):
        if psi is not None:
            y = np.asarray(psi.coords if isinstance(psi, Vector) else psi, dtype=float)
        else:
            y = rng.standard_normal(mu.F.dim)
            y = y / float(vector_norm(y, Fd.norm))
        weights = np.array([float(dual_vector_norm(y @ m, mu.E.norm)) for m in mu.head])
        tail_coeff = 0.0
        if mu.tail is not None:
            tail_coeff = mu.tail.coeff * float(dual_vector_norm(y @ mu.tail.pattern, mu.E.norm))
        ok = all(w > 0 for w, nn in zip(weights, nonnull) if nn)
        ok = ok and (tail_coeff > 0 or not tail_nonnull)
        if ok or psi is not None:
            if not ok:
                raise DegenerateInstanceError("the supplied functional annihilates a non-null atom")
            ratio = mu.tail.ratio if mu.tail is not None else 0.5
            lam = ScalarMeasure(mu.space, weights, tail_coeff, ratio)
            return ControlMeasure(lam, Vector(Fd, y), cert, attempt)
    raise DegenerateInstanceError(
        f"no admissible functional found in {max_attempts} draws")


@dataclass(frozen=True)
class AbsoluteContinuity:
    answer: bool
    witness: MeasurableSet | None = None


def is_absolutely_continuous(mu: OperatorMeasure, nu: ScalarMeasure) -> AbsoluteContinuity:
    """``mu << nu`` on an atomic space: ``mu`` vanishes on every ``nu``-null atom."""
    if mu.space != nu.space:
        raise ValueError("measures live on different spaces")
    bad = [i for i in range(mu.space.n_head)
           if nu.weights[i] == 0 and np.any(mu.head[i] != 0)]
    tail_bad = (mu.tail is not None and nu.tail_coeff == 0
                and bool(np.any(mu.tail.pattern != 0)))
    if tail_bad:
        good = [i for i in range(mu.space.n_head) if i not in bad]
        return AbsoluteContinuity(False, MeasurableSet(mu.space, tuple(good), cofinite=True))
    if bad:
        return AbsoluteContinuity(False, MeasurableSet(mu.space, tuple(bad)))
    return AbsoluteContinuity(True, None)


def scalarize(mu: OperatorMeasure, psi) -> OperatorMeasure:
    """Compose every value of ``mu`` with the functional ``psi`` on F."""
    y = np.asarray(psi.coords if isinstance(psi, Vector) else psi, dtype=float)
    if y.shape != (mu.F.dim,):
        raise ValueError(f"functional has {y.size} coordinates, F has dim {mu.F.dim}")
    head = np.einsum("i,aij->aj", y, mu.head)[:, None, :]
    tail = None
    if mu.tail is not None:
        tail = GeometricTail((y @ mu.tail.pattern)[None, :], mu.tail.coeff, mu.tail.ratio)
    return OperatorMeasure(mu.space, mu.E, NormedSpace(1, NormTag.SUM), head, tail)
