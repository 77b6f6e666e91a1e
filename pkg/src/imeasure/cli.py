"""Command-line interface.

Exit status: 0 on success, 1 when a verification fails or a property is
violated (a JSON witness is printed), 2 on invalid input.
"""

from __future__ import annotations

import argparse
import sys
from typing import Callable

import numpy as np

from . import closure, integration, jsonio, measures, oracles
from .jsonio import InputError, dumps

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


class _Outcome:
    def __init__(self, payload, code: int = EXIT_OK, csv: tuple | None = None):
        self.payload = payload
        self.code = code
        self.csv = csv  # (header, rows) for curve output


def _read_input(args) -> dict:
    if args.input in (None, "-"):
        text = sys.stdin.read()
    else:
        try:
            with open(args.input, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read {args.input}: {exc.strerror}") from exc
    data = jsonio.parse_json(text)
    if not isinstance(data, dict):
        raise InputError("top-level JSON value must be an object")
    return data


def _measure_and_set(data):
    mu = jsonio.measure_from_json(jsonio._get(data, "measure"))
    A = jsonio.set_from_json(data.get("set", "all"), mu.space)
    return mu, A


# ---------------------------------------------------------------------------
# commands

def cmd_semivar(args) -> _Outcome:
    mu, A = _measure_and_set(_read_input(args))
    method = args.method or "auto"
    try:
        res = measures.semivariation(mu, A, method, tol=args.tol, seed=args.seed)
    except measures.CapabilityError as exc:
        raise InputError(str(exc)) from exc
    return _Outcome({"value": res.value, "upper": res.upper, "mode": res.mode,
                     "atoms": [mu.space.label(a) if isinstance(a, int) else a for a in res.atoms],
                     "witness": [w.coords for w in res.witness]})


def cmd_variation(args) -> _Outcome:
    mu, A = _measure_and_set(_read_input(args))
    return _Outcome({"value": measures.variation(mu, A)})


def cmd_integrate(args) -> _Outcome:
    data = _read_input(args)
    mu = jsonio.measure_from_json(jsonio._get(data, "measure"))
    f = jsonio.function_from_json(jsonio._get(data, "function"), mu.space, mu.E)
    res = integration.integrate(mu, f, tol=args.tol)
    return _Outcome({"value": res.value.coords, "truncationIndex": res.truncation_index,
                     "errorBound": res.error_bound})


def cmd_control_measure(args) -> _Outcome:
    mu = jsonio.measure_from_json(jsonio._get(_read_input(args), "measure"))
    try:
        cm = measures.control_measure(mu, seed=args.seed)
    except measures.DegenerateInstanceError as exc:
        return _Outcome({"error": str(exc)}, EXIT_VIOLATION)
    table = cm.delta_table()
    return _Outcome({"weights": cm.lam.weights, "tailCoeff": cm.lam.tail_coeff,
                     "tailRatio": cm.lam.tail_ratio, "psi": cm.psi.coords,
                     "delta": [{"eps": e, "delta": d} for e, d in table.items()]})


def cmd_check_ac(args) -> _Outcome:
    data = _read_input(args)
    mu = jsonio.measure_from_json(jsonio._get(data, "measure"))
    nu = jsonio.scalar_measure_from_json(jsonio._get(data, "nu"), mu.space)
    res = measures.is_absolutely_continuous(mu, nu)
    if res.answer:
        return _Outcome({"absolutelyContinuous": True})
    return _Outcome({"absolutelyContinuous": False,
                     "witness": jsonio.set_to_json(res.witness)}, EXIT_VIOLATION)


def _sequence_input(args):
    data = _read_input(args)
    mu = jsonio.measure_from_json(jsonio._get(data, "measure"))
    seq = jsonio.sequence_from_json(jsonio._get(data, "sequence"), mu.space, mu.E)
    eps = float(data.get("epsilon", args.tol))
    if not eps > 0:
        raise InputError("epsilon must be positive")
    return mu, seq, eps


def _residual_rows(residuals):
    return ["m", "residual"], [(m, float(r)) for m, r in enumerate(residuals, start=1)]


def _divergence(mu, exc: integration.ConvergenceError) -> _Outcome:
    return _Outcome({"verified": False, "reason": str(exc),
                     "atom": mu.space.label(exc.atom) if exc.atom is not None else None,
                     "residuals": exc.residuals}, EXIT_VIOLATION,
                    csv=_residual_rows(exc.residuals))


def _bnc_payload(rep):
    return {"verified": rep.holds, "m0": rep.m0, "truncationIndex": rep.truncation_index,
            "epsilon": rep.epsilon, "tailBudget": rep.tail_budget, "residuals": rep.residuals}


def cmd_verify_bnc(args) -> _Outcome:
    mu, seq, eps = _sequence_input(args)
    try:
        rep = integration.verify_bnc(mu, seq, eps)
    except integration.ConvergenceError as exc:
        return _divergence(mu, exc)
    return _Outcome(_bnc_payload(rep), EXIT_OK if rep.holds else EXIT_VIOLATION,
                    csv=_residual_rows(rep.residuals))


def cmd_verify_bwc(args) -> _Outcome:
    mu, seq, eps = _sequence_input(args)
    try:
        rep = integration.verify_bwc(mu, seq, eps)
    except integration.ConvergenceError as exc:
        return _divergence(mu, exc)
    payload = _bnc_payload(rep.norm_report)
    payload.update(verified=rep.holds, m0=rep.m0, residuals=rep.residuals,
                   coordinateM0=rep.coordinate_m0)
    return _Outcome(payload, EXIT_OK if rep.holds else EXIT_VIOLATION,
                    csv=_residual_rows(rep.residuals))


def cmd_verify_bwstarc(args) -> _Outcome:
    mu, seq, eps = _sequence_input(args)
    try:
        rep = integration.verify_bwstarc(mu, seq, eps)
    except integration.ConvergenceError as exc:
        return _divergence(mu, exc)
    return _Outcome({"verified": rep.holds, "m0": rep.m0, "epsilon": eps,
                     "residuals": rep.residuals}, EXIT_OK if rep.holds else EXIT_VIOLATION,
                    csv=(["m"] + [f"residual_{i}" for i in range(rep.residuals.shape[1])],
                         [(m, *map(float, row)) for m, row in enumerate(rep.residuals, 1)]))


def cmd_linfty_demo(args) -> _Outcome:
    if args.n < 2:
        raise InputError("--n must be at least 2")
    if args.emit_instance:
        mu, seq = integration.linfty_instance(args.n)
        return _Outcome({"measure": jsonio.measure_to_json(mu),
                         "sequence": jsonio.sequence_to_json(seq), "epsilon": 0.5})
    rep = integration.linfty_counterexample(args.n)
    return _Outcome({"n": args.n, "minOffDiagonalGap": rep.min_off_diagonal_gap,
                     "uniformBound": float(np.abs(rep.images).max()),
                     "pointwiseNull": bool(np.all(np.tril(rep.images, -1) == 0)),
                     "images": rep.images})


def _closure_input(args):
    data = _read_input(args)
    grid = jsonio.grid_from_json(jsonio._get(data, "grid"))
    E = jsonio.space_from_json(data.get("E", {"dim": 1, "norm": "sum"}))
    f = jsonio.grid_function_from_json(jsonio._get(data, "target"), grid, E)
    K = jsonio.convex_set_from_json(jsonio._get(data, "set"), grid, E)
    return f, K


def cmd_closure_dist(args) -> _Outcome:
    f, K = _closure_input(args)
    res = closure.chebyshev_distance(f, K, tol=args.tol)
    return _Outcome({"distance": res.distance, "lower": res.lower,
                     "coefficients": res.coefficients})


def cmd_separate(args) -> _Outcome:
    f, K = _closure_input(args)
    res = closure.separate(f, K, tol=args.tol)
    if isinstance(res, closure.Inside):
        return _Outcome({"inside": True, "distance": res.distance})
    return _Outcome({"inside": False, "distance": res.distance, "gap": res.gap,
                     "kValue": res.k_value, "fValue": res.f_value,
                     "dualVectors": res.dual_vectors})


_TARGETS: dict[str, Callable] = {
    "square": lambda t: t * t,
    "one": np.ones_like,
    "abs-half": lambda t: np.abs(t - 0.5),
    "sin": lambda t: np.sin(2 * np.pi * t),
}


def cmd_distance_basis(args) -> _Outcome:
    grid = np.linspace(0.0, 1.0, args.m)
    ks = args.k or list(range(2, min(args.m, 128) + 1, 2))
    if min(ks) < 2 or max(ks) > args.m:
        raise InputError("center counts must lie in [2, m]")
    curve = closure.distance_basis_experiment(grid, ks, _TARGETS[args.target])
    rows = curve.rows()
    code = EXIT_OK if curve.non_increasing else EXIT_VIOLATION
    return _Outcome({"target": args.target, "m": args.m, "nonIncreasing": curve.non_increasing,
                     "curve": [{"k": k, "error": e} for k, e in rows]},
                    code, csv=(["k", "error"], rows))


def cmd_metric_null_search(args) -> _Outcome:
    if args.n_max < 2:
        raise InputError("--n-max must be at least 2")
    inst = closure.metric_null_search(args.n_max, args.trials, seed=args.seed)
    if inst is None:
        return _Outcome({"status": "NOT_FOUND", "trials": args.trials})
    return _Outcome({"status": "FOUND", "trial": inst.trial, "metric": inst.metric,
                     "mu": inst.mu, "nu": inst.nu, "residual": inst.residual})


def cmd_ubd_demo(args) -> _Outcome:
    windows = args.windows or list(range(1, 11))
    if min(windows) < 1:
        raise InputError("window sizes must be at least 1")
    rep = closure.unbounded_demo(windows)
    ok = rep.full_rank and max(rep.max_residual) <= 1e-15
    return _Outcome({"windows": rep.windows, "ranks": rep.ranks,
                     "maxResidual": rep.max_residual, "fullRank": rep.full_rank},
                    EXIT_OK if ok else EXIT_VIOLATION)


def cmd_oracle_suite(args) -> _Outcome:
    reports = oracles.run_oracle_suite(args.seed, args.count, args.ops)
    failed = any(r.verdict != "PASS" for r in reports)
    return _Outcome(reports, EXIT_VIOLATION if failed else EXIT_OK)


# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-6)
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--input", help="JSON instance file (default: stdin)")

    parser = argparse.ArgumentParser(prog="imeasure", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("semivar", cmd_semivar, "semivariation of a set")
    p.add_argument("--method", choices=("auto", "exact", "alternating"))
    add("variation", cmd_variation, "variation of a set")
    add("integrate", cmd_integrate, "integral of a bounded function")
    add("control-measure", cmd_control_measure, "control measure and delta table")
    add("check-ac", cmd_check_ac, "absolute continuity against a scalar measure")
    add("verify-bnc", cmd_verify_bnc, "bounded convergence of integrals in norm")
    add("verify-bwc", cmd_verify_bwc, "bounded convergence, weak topology")
    add("verify-bwstarc", cmd_verify_bwstarc, "bounded convergence, weak* topology")
    p = add("linfty-demo", cmd_linfty_demo, "tent sequence under point evaluation")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--emit-instance", action="store_true",
                   help="print the instance as verify-bnc input instead")
    add("closure-dist", cmd_closure_dist, "sup-norm distance to a convex set")
    add("separate", cmd_separate, "separating functional or INSIDE")
    p = add("distance-basis", cmd_distance_basis, "error curve for spans of distance functions")
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--k", type=int, nargs="+")
    p.add_argument("--target", choices=sorted(_TARGETS), default="square")
    p = add("metric-null-search", cmd_metric_null_search, "search for equal-potential pairs")
    p.add_argument("--n-max", type=int, default=6)
    p.add_argument("--trials", type=int, default=100_000)
    p = add("ubd-demo", cmd_ubd_demo, "restriction ranks of an unbounded convex set")
    p.add_argument("--windows", type=int, nargs="+")
    p = add("oracle-suite", cmd_oracle_suite, "paired runs against brute-force oracles")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--ops", nargs="+")
    return parser


def _render(outcome: _Outcome, fmt: str) -> str:
    if fmt == "csv":
        if outcome.csv is None:
            raise InputError("this command has no CSV output")
        return jsonio.to_csv(*outcome.csv)
    if isinstance(outcome.payload, list):
        return "".join(dumps(r) + "\n" for r in outcome.payload)
    return dumps(outcome.payload) + "\n"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        outcome = args.func(args)
        text = _render(outcome, args.format)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # includes oracle refusals and constructor validation
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return outcome.code
