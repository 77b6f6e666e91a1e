"""Finite-dimensional real normed spaces, vectors and operators.

Three norms are supported: the sum norm (l1), the Euclidean norm (l2) and
the max norm (l-infinity).  Operators are stored as ``dim(F) x dim(E)``
matrices acting on coordinate vectors.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "NormTag",
    "NormedSpace",
    "Vector",
    "Operator",
    "OperatorNormBounds",
    "vector_norm",
    "dual_vector_norm",
    "norm",
    "dual_norm",
    "operator_norm",
    "operator_norm_bounds",
    "norming_functional",
    "unit_ball_vertices",
    "is_polyhedral",
]

# sign/vertex enumeration is exact but exponential; past this we bracket
MAX_SIGN_DIM = 20


class NormTag(enum.Enum):
    SUM = "sum"
    EUCLIDEAN = "euclidean"
    MAX = "max"

    @property
    def dual(self) -> "NormTag":
        if self is NormTag.SUM:
            return NormTag.MAX
        if self is NormTag.MAX:
            return NormTag.SUM
        return NormTag.EUCLIDEAN

    @property
    def order(self) -> float:
        return {NormTag.SUM: 1, NormTag.EUCLIDEAN: 2, NormTag.MAX: np.inf}[self]


@dataclass(frozen=True)
class NormedSpace:
    dim: int
    norm: NormTag = NormTag.EUCLIDEAN

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.dim!r}")
        if not isinstance(self.norm, NormTag):
            object.__setattr__(self, "norm", NormTag(self.norm))

    @property
    def dual(self) -> "NormedSpace":
        return NormedSpace(self.dim, self.norm.dual)

    def zeros(self) -> "Vector":
        return Vector(self, np.zeros(self.dim))

    def basis(self) -> list["Vector"]:
        return [Vector(self, row) for row in np.eye(self.dim)]


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Vector:
    space: NormedSpace
    coords: np.ndarray

    def __post_init__(self):
        coords = _frozen(self.coords, 1)
        if coords.shape != (self.space.dim,):
            raise ValueError(
                f"vector has {coords.size} coordinates, space has dim {self.space.dim}")
        object.__setattr__(self, "coords", coords)

    def __add__(self, other: "Vector") -> "Vector":
        return Vector(self.space, self.coords + other.coords)

    def __sub__(self, other: "Vector") -> "Vector":
        return Vector(self.space, self.coords - other.coords)

    def __mul__(self, alpha: float) -> "Vector":
        return Vector(self.space, alpha * self.coords)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vector) and self.space == other.space
                and np.array_equal(self.coords, other.coords))

    def __hash__(self):
        return hash((self.space, self.coords.tobytes()))


@dataclass(frozen=True, eq=False)
class Operator:
    """A linear map ``domain -> codomain`` held as a matrix."""

    domain: NormedSpace
    codomain: NormedSpace
    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen(self.entries, 2)
        expected = (self.codomain.dim, self.domain.dim)
        if entries.shape != expected:
            raise ValueError(f"operator matrix has shape {entries.shape}, expected {expected}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def zero(cls, domain: NormedSpace, codomain: NormedSpace) -> "Operator":
        return cls(domain, codomain, np.zeros((codomain.dim, domain.dim)))

    @classmethod
    def identity(cls, space: NormedSpace) -> "Operator":
        return cls(space, space, np.eye(space.dim))

    def apply(self, x: Vector) -> Vector:
        if x.space.dim != self.domain.dim:
            raise ValueError("vector does not live in the operator's domain")
        return Vector(self.codomain, self.entries @ x.coords)

    __call__ = apply

    def adjoint(self) -> "Operator":
        return Operator(self.codomain.dual, self.domain.dual, self.entries.T)

    def __add__(self, other: "Operator") -> "Operator":
        return Operator(self.domain, self.codomain, self.entries + other.entries)

    def __mul__(self, alpha: float) -> "Operator":
        return Operator(self.domain, self.codomain, alpha * self.entries)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return (isinstance(other, Operator) and self.domain == other.domain
                and self.codomain == other.codomain
                and np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash((self.domain, self.codomain, self.entries.tobytes()))


# ---------------------------------------------------------------------------
# Norms on raw coordinate arrays.  These accept stacks: the norm is taken
# along the last axis.

def vector_norm(x, tag: NormTag) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    if tag is NormTag.SUM:
        return np.abs(x).sum(axis=-1)
    if tag is NormTag.MAX:
        if x.shape[-1] == 0:
            return np.zeros(x.shape[:-1])
        return np.abs(x).max(axis=-1)
    return np.sqrt((x * x).sum(axis=-1))


def dual_vector_norm(x, tag: NormTag):
    return vector_norm(x, tag.dual)


def norm(v: Vector) -> float:
    return float(vector_norm(v.coords, v.space.norm))


def dual_norm(v: Vector) -> float:
    """Norm of ``v`` regarded as a functional on ``v.space``."""
    return float(dual_vector_norm(v.coords, v.space.norm))


def is_polyhedral(space: NormedSpace) -> bool:
    # in one dimension every norm has the unit ball [-1, 1]
    return space.norm is not NormTag.EUCLIDEAN or space.dim == 1


def unit_ball_vertices(space: NormedSpace) -> np.ndarray:
    """Extreme points of a polyhedral unit ball, one per row."""
    d = space.dim
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if space.norm is NormTag.SUM:
        eye = np.eye(d)
        return np.concatenate([eye, -eye])
    if space.norm is NormTag.MAX:
        return np.array(list(itertools.product((1.0, -1.0), repeat=d)))
    raise ValueError("the Euclidean unit ball has no finite vertex set")


def norming_functional(y, tag: NormTag) -> np.ndarray:
    """A functional ``s`` of dual norm <= 1 with ``<s, y> = ||y||``."""
    y = np.asarray(y, dtype=float)
    s = np.zeros_like(y)
    if tag is NormTag.SUM:
        s = np.sign(y)
    elif tag is NormTag.MAX:
        if y.size:
            i = int(np.argmax(np.abs(y)))
            s[i] = 1.0 if y[i] >= 0 else -1.0
    else:
        n = float(np.sqrt(y @ y))
        if n > 0:
            s = y / n
    return s


class OperatorNormBounds(NamedTuple):
    lower: float
    upper: float

    @property
    def exact(self) -> bool:
        return self.lower == self.upper


def _equivalence_constant(dim: int, src: NormTag, dst: NormTag) -> float:
    """Smallest ``c`` with ``||x||_dst <= c ||x||_src`` on R^dim."""
    p, q = src.order, dst.order
    if q >= p:
        return 1.0
    inv = lambda r: 0.0 if np.isinf(r) else 1.0 / r  # noqa: E731
    return float(dim ** (inv(q) - inv(p)))


def _exact_operator_norm(a: np.ndarray, dom: NormTag, cod: NormTag) -> float | None:
    m, n = a.shape
    if n == 1 or dom is NormTag.SUM:
        # unit ball of l1 is the hull of +-e_j; in dim 1 every ball is [-1, 1]
        return float(vector_norm(a.T, cod).max())
    if dom is NormTag.MAX:
        if n > MAX_SIGN_DIM:
            return None
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=n - 1)))
        signs = np.hstack([np.ones((len(signs), 1)), signs])
        return float(vector_norm(signs @ a.T, cod).max())
    # Euclidean domain
    if cod is NormTag.EUCLIDEAN:
        return float(np.linalg.norm(a, 2))
    if cod is NormTag.MAX or m == 1:
        return float(np.sqrt((a * a).sum(axis=1)).max())
    # l2 -> l1: ||Ax||_1 = max_s <s, Ax>, so the norm is max_s ||A^T s||_2
    if m > MAX_SIGN_DIM:
        return None
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=m - 1)))
    signs = np.hstack([np.ones((len(signs), 1)), signs])
    return float(np.sqrt(((signs @ a) ** 2).sum(axis=1)).max())


def operator_norm_bounds(T: Operator, seed: int = 0) -> OperatorNormBounds:
    """Bracket ``sup{||Tx|| : ||x|| <= 1}``; the bracket is tight when exact."""
    a = T.entries
    dom, cod = T.domain.norm, T.codomain.norm
    exact = _exact_operator_norm(a, dom, cod)
    if exact is not None:
        return OperatorNormBounds(exact, exact)
    # fall back to the Euclidean norm and equivalence constants
    n, m = T.domain.dim, T.codomain.dim
    spectral = float(np.linalg.norm(a, 2))
    upper = spectral * _equivalence_constant(n, dom, NormTag.EUCLIDEAN) \
        * _equivalence_constant(m, NormTag.EUCLIDEAN, cod)
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((256, n))
    _, _, vt = np.linalg.svd(a)
    xs = np.vstack([xs, vt[:1], np.sign(vt[:1])])
    xs = xs / vector_norm(xs, dom)[:, None]
    lower = float(vector_norm(xs @ a.T, cod).max())
    return OperatorNormBounds(lower, max(lower, upper))


def operator_norm(T: Operator) -> float:
    """Operator norm; when no exact rule applies, the certified upper bound."""
    return operator_norm_bounds(T).upper
