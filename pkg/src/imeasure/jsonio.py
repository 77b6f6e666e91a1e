"""JSON and CSV encoding of instances and reports.

Floats are written with 17 significant digits so that reports round-trip
and identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import fields, is_dataclass
from fractions import Fraction
from typing import Any

import numpy as np

from .closure import ConvexSetSpec, GridFunction, GridSpace, HullMode
from .integration import FunctionSequence, VectorFunction
from .measures import (
    AtomicSpace,
    GeometricTail,
    MeasurableSet,
    OperatorMeasure,
    ScalarMeasure,
    TailKind,
)
from .spaces import NormedSpace, NormTag, Vector

__all__ = [
    "InputError",
    "dumps",
    "to_csv",
    "parse_json",
    "space_from_json",
    "space_to_json",
    "atomic_space_from_json",
    "atomic_space_to_json",
    "measure_from_json",
    "measure_to_json",
    "set_from_json",
    "set_to_json",
    "function_from_json",
    "function_to_json",
    "sequence_from_json",
    "sequence_to_json",
    "grid_from_json",
    "grid_function_from_json",
    "convex_set_from_json",
    "convex_set_to_json",
]


class InputError(ValueError):
    """Input that does not match the expected schema."""


def _format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return json.dumps(str(x))
    return "%.16e" % x


def _plain(obj: Any) -> Any:
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Vector):
        return _plain(obj.coords)
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _emit(obj: Any, out: list[str]) -> None:
    if isinstance(obj, float):
        out.append(_format_float(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(k) + ": ")
            _emit(v, out)
        out.append("}")
    elif isinstance(obj, list):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _emit(v, out)
        out.append("]")
    else:
        out.append(json.dumps(obj))


def dumps(obj: Any) -> str:
    """Deterministic single-line JSON with 17-significant-digit floats."""
    out: list[str] = []
    _emit(_plain(obj), out)
    return "".join(out)


def to_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_float(float(v)) if isinstance(v, (float, np.floating))
                         else v for v in row])
    return buf.getvalue()


def parse_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: "
                         f"{exc.msg}") from exc


# ---------------------------------------------------------------------------
# schema helpers

def _get(obj: dict, key: str, default=...):
    if not isinstance(obj, dict):
        raise InputError(f"expected an object, got {type(obj).__name__}")
    if key not in obj:
        if default is ...:
            raise InputError(f"missing field {key!r}")
        return default
    return obj[key]


def _array(value, name: str, ndim: int | None = None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} must be a numeric array") from exc
    if ndim is not None and arr.ndim != ndim:
        raise InputError(f"{name} must be a {ndim}-dimensional array")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite numbers")
    return arr


def space_from_json(obj) -> NormedSpace:
    try:
        return NormedSpace(int(_get(obj, "dim")), NormTag(_get(obj, "norm", "euclidean")))
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad normed space: {exc}") from exc


def space_to_json(space: NormedSpace) -> dict:
    return {"dim": space.dim, "norm": space.norm.value}


def atomic_space_from_json(obj, n_head: int | None = None, tail: bool | None = None
                           ) -> AtomicSpace:
    """``{"atoms": [...], "tailKind": "none" | "geometric"}``."""
    try:
        atoms = _get(obj, "atoms", None)
        if atoms is None:
            atoms = [f"a{i}" for i in range(n_head or 0)]
        kind = _get(obj, "tailKind", None)
        if kind is None:
            kind = "geometric" if tail else "none"
        return AtomicSpace(tuple(atoms), TailKind(kind))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad atomic space: {exc}") from exc


def atomic_space_to_json(space: AtomicSpace) -> dict:
    return {"atoms": list(space.atoms), "tailKind": space.tail_kind.value}


def measure_from_json(obj) -> OperatorMeasure:
    """``{"space"?, "E", "F", "head": [[[...]]], "tail"?: {"pattern", "coeff", "ratio"}}``.

    Without ``"space"`` the atoms are labelled ``a0, a1, ...`` and the tail
    kind follows the presence of ``"tail"``.
    """
    E = space_from_json(_get(obj, "E"))
    F = space_from_json(_get(obj, "F"))
    head = _array(_get(obj, "head"), "head")
    if head.size == 0:
        head = head.reshape(0, F.dim, E.dim)
    if head.ndim != 3:
        raise InputError("head must be a list of matrices")
    tail_obj = _get(obj, "tail", None)
    space = atomic_space_from_json(_get(obj, "space", {}), head.shape[0], tail_obj is not None)
    try:
        tail = None
        if tail_obj is not None:
            tail = GeometricTail(_array(_get(tail_obj, "pattern"), "tail pattern", 2),
                                 float(_get(tail_obj, "coeff")), float(_get(tail_obj, "ratio")))
        return OperatorMeasure(space, E, F, head, tail)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad measure: {exc}") from exc


def measure_to_json(mu: OperatorMeasure) -> dict:
    out = {"space": atomic_space_to_json(mu.space), "E": space_to_json(mu.E),
           "F": space_to_json(mu.F), "head": mu.head.tolist()}
    if mu.tail is not None:
        out["tail"] = {"pattern": mu.tail.pattern.tolist(), "coeff": mu.tail.coeff,
                       "ratio": mu.tail.ratio}
    return out


def scalar_measure_from_json(obj, space: AtomicSpace) -> ScalarMeasure:
    """``{"weights": [...], "tailCoeff"?: c, "tailRatio"?: r}``."""
    try:
        return ScalarMeasure(space, _array(_get(obj, "weights"), "weights", 1),
                             float(_get(obj, "tailCoeff", 0.0)),
                             float(_get(obj, "tailRatio", 0.5)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad scalar measure: {exc}") from exc


def set_from_json(obj, space: AtomicSpace) -> MeasurableSet:
    """``{"kind": "finite" | "cofinite", "indices": [...]}``; ``"all"`` is the whole space."""
    if obj == "all":
        return MeasurableSet.whole(space)
    kind = _get(obj, "kind", "finite")
    if kind not in ("finite", "cofinite"):
        raise InputError(f"set kind must be 'finite' or 'cofinite', got {kind!r}")
    idx = _get(obj, "indices", [])
    if not isinstance(idx, list) or not all(isinstance(i, int) for i in idx):
        raise InputError("set indices must be a list of integers")
    try:
        return MeasurableSet(space, tuple(idx), kind == "cofinite")
    except ValueError as exc:
        raise InputError(f"bad set: {exc}") from exc


def set_to_json(A: MeasurableSet) -> dict:
    return {"kind": "cofinite" if A.cofinite else "finite", "indices": list(A.indices)}


def function_from_json(obj, space: AtomicSpace, E: NormedSpace) -> VectorFunction:
    """``{"head": [[...], ...], "tailValue"?: [...]}``."""
    head = _array(_get(obj, "head"), "function head")
    tail = _get(obj, "tailValue", None)
    try:
        return VectorFunction(space, E, head,
                              None if tail is None else _array(tail, "tailValue"))
    except ValueError as exc:
        raise InputError(f"bad function: {exc}") from exc


def function_to_json(f: VectorFunction) -> dict:
    out = {"head": f.head_values.tolist()}
    if f.space.has_tail:
        out["tailValue"] = f.tail_value.tolist()
    return out


def sequence_from_json(obj, space: AtomicSpace, E: NormedSpace) -> FunctionSequence:
    """``{"terms": [function, ...], "limit": function, "bound": C}``."""
    terms = _get(obj, "terms")
    if not isinstance(terms, list):
        raise InputError("terms must be a list")
    try:
        return FunctionSequence(tuple(function_from_json(t, space, E) for t in terms),
                                function_from_json(_get(obj, "limit"), space, E),
                                float(_get(obj, "bound")))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad sequence: {exc}") from exc


def sequence_to_json(seq: FunctionSequence) -> dict:
    return {"terms": [function_to_json(f) for f in seq.terms],
            "limit": function_to_json(seq.limit), "bound": seq.bound}


def grid_from_json(obj) -> GridSpace:
    """``{"points": [...], "metric"?: [[...]]}``; numeric points without a metric use ``|s - t|``."""
    points = _get(obj, "points")
    metric = _get(obj, "metric", None)
    try:
        if metric is None and all(isinstance(p, (int, float)) for p in points):
            return GridSpace.interval(points)
        return GridSpace(tuple(points), None if metric is None else _array(metric, "metric", 2))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad grid: {exc}") from exc


def grid_function_from_json(values, grid: GridSpace, E: NormedSpace) -> GridFunction:
    try:
        return GridFunction(grid, E, _array(values, "grid function"))
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad grid function: {exc}") from exc


def convex_set_from_json(obj, grid: GridSpace, E: NormedSpace) -> ConvexSetSpec:
    """``{"generators": [values, ...], "mode": "span"|"hull"|"cone", "radiusCap"?: R}``."""
    gens = _get(obj, "generators")
    if not isinstance(gens, list):
        raise InputError("generators must be a list")
    try:
        return ConvexSetSpec(tuple(grid_function_from_json(g, grid, E) for g in gens),
                             HullMode(_get(obj, "mode", "hull")),
                             _get(obj, "radiusCap", None))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad convex set: {exc}") from exc


def convex_set_to_json(K: ConvexSetSpec) -> dict:
    out = {"generators": [g.values.tolist() for g in K.generators], "mode": K.mode.value}
    if K.radius_cap is not None:
        out["radiusCap"] = K.radius_cap
    return out
