"""Command-line front end.

Exit codes: 0 success, 1 verification found a failure, 2 solver error,
3 invalid input. Errors are written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import apmp as _apmp
from .dimacs import write_dimacs
from .energy import (
    BRUTE_FORCE_MAX_VARS,
    Energy,
    brute_force_map,
    dumps_energy,
    energy_from_dict,
    evaluate,
    random_instance,
)
from .equivalence import check_trace, dumps_report, verification_instances, verify
from .errors import APMPError, DimensionMismatch, InvalidEnergy, TooLarge
from .flow import maxflow_solve
from .messages import run_strict_mp

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2, 3
METHODS = ("apmp", "maxflow", "strictmp", "bruteforce")

log = logging.getLogger("apmp")


class InputError(Exception):
    pass


def read_energy(source: str, canonicalize_input=False) -> Energy:
    """Load from a path, ``-`` for stdin, or an inline JSON document."""
    if source.lstrip().startswith("{"):
        text = source
    elif source == "-":
        text = sys.stdin.read()
    else:
        try:
            with open(source) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError("energy document must be a JSON object")
    return energy_from_dict(doc, canonicalize_input)


def _num(v):
    v = float(v)
    return int(v) if v.is_integer() else v


def solve(e: Energy, method="apmp", phase2_mode="fast", max_rounds=1000) -> dict:
    if method == "apmp":
        r = _apmp.apmp_solve(e, phase2_mode=phase2_mode)
        labels, iterations, converged = r.labels, r.iterations, True
    elif method == "maxflow":
        r = maxflow_solve(e)
        labels, iterations, converged = r.labels, len(r.augmentations), True
    elif method == "strictmp":
        r = run_strict_mp(e, max_rounds=max_rounds)
        labels, iterations, converged = r.labels, r.rounds, r.converged
    elif method == "bruteforce":
        if e.num_vars > BRUTE_FORCE_MAX_VARS:
            raise TooLarge(f"bruteforce is capped at {BRUTE_FORCE_MAX_VARS} variables, got {e.num_vars}")
        labels, _ = brute_force_map(e)
        iterations, converged = 1 << e.num_vars, True
    else:
        raise ValueError(f"unknown method {method!r}")
    return {
        "assignment": [int(v) for v in labels],
        "energy": _num(evaluate(e, labels)),
        "method": method,
        "iterations": int(iterations),
        "converged": bool(converged),
    }


def trace_records(e: Energy, phase2_mode="fast"):
    p1 = _apmp.phase1_run(e)
    const = e.theta_const
    for it, (sched, delta) in enumerate(p1.trace, start=1):
        const += sched.f
        yield {
            "phase": 1,
            "iter": it,
            "path": ["s", *[int(v) for v in sched.path.vars], "t"],
            "f": _num(sched.f),
            "delta": delta.to_dict(e),
            "theta_const_so_far": _num(const),
        }
    p2 = _apmp.phase2_run(e, p1.state, mode=phase2_mode)
    for r, change in enumerate(p2.max_changes, start=1):
        yield {"phase": 2, "round": r, "max_change": _num(change),
               "fixed_point": r == len(p2.max_changes)}


def _render_text(doc: dict) -> str:
    return "\n".join(f"{k}: {' '.join(map(str, v)) if isinstance(v, list) else v}" for k, v in doc.items())


def _emit(doc, fmt):
    print(_render_text(doc) if fmt == "text" else json.dumps(doc, sort_keys=True))


def cmd_solve(args) -> int:
    e = read_energy(args.input, args.canonicalize)
    if args.dimacs_out:
        write_dimacs(e, args.dimacs_out)
    doc = solve(e, args.method, args.phase2_mode, args.max_rounds)
    _emit(doc, args.format)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.trace:
        if not args.input:
            raise InputError("--trace needs the energy it was recorded on")
        e = read_energy(args.input, args.canonicalize)
        try:
            with open(args.trace) as fh:
                records = [json.loads(line) for line in fh if line.strip()]
            mismatch = check_trace(e, records)
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"unreadable trace: {exc}") from exc
        doc = {"instances": 1, "iterations_total": sum(r.get("phase", 1) == 1 for r in records),
               "mismatches": [] if mismatch is None else [mismatch.to_dict()]}
        doc["ok"] = mismatch is None
    else:
        if args.n_random < 0 or args.n < 1:
            raise ValueError("--n-random must be >= 0 and --n >= 1")
        energies = list(verification_instances(args.n_random, args.n, args.seed))
        if args.input:
            energies.insert(0, (args.input, read_energy(args.input, args.canonicalize)))
        doc = verify(energies)
    print(dumps_report(doc) if args.format == "json" else _render_text(
        {k: (len(v) if isinstance(v, list) else v) for k, v in doc.items()}))
    return EXIT_OK if doc["ok"] else EXIT_VERIFY_FAILED


def cmd_generate(args) -> int:
    e = random_instance(args.n, args.density, args.max_unary, args.max_pairwise, seed=args.seed)
    if args.dimacs_out:
        write_dimacs(e, args.dimacs_out)
    print(dumps_energy(e))
    return EXIT_OK


def cmd_trace(args) -> int:
    e = read_energy(args.input, args.canonicalize)
    for rec in trace_records(e, args.phase2_mode):
        print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="apmp",
        description="Augmenting-paths max-product for binary submodular energies.",
        epilog="exit codes: 0 ok, 1 verification failed, 2 solver error, 3 invalid input. "
        "Set APMP_LOG=DEBUG for per-iteration logging on stderr.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True):
        if needs_input:
            sp.add_argument("input", help="energy JSON file, '-' for stdin, or inline JSON")
        sp.add_argument("--canonicalize", action="store_true",
                        help="accept non-canonical input and convert it")
        sp.add_argument("--format", choices=("json", "text"), default="json")

    s = sub.add_parser("solve", help="minimize an energy")
    common(s)
    s.add_argument("--method", choices=METHODS, default="apmp")
    s.add_argument("--phase2-mode", choices=("strict", "fast"), default="fast")
    s.add_argument("--max-rounds", type=int, default=1000, help="round limit for strictmp")
    s.add_argument("--dimacs-out", help="also write the s-t network in DIMACS format")
    s.add_argument("--seed", type=int, default=0, help="accepted for interface symmetry; solvers are deterministic")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="lockstep Theorem-1 and optimality checks")
    v.add_argument("input", nargs="?", help="optional energy to include (or to replay --trace on)")
    v.add_argument("--trace", help="JSONL trace to check against the max-flow oracle")
    v.add_argument("--n-random", type=int, default=200)
    v.add_argument("--n", type=int, default=10, help="maximum variables per random instance")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--canonicalize", action="store_true")
    v.add_argument("--format", choices=("json", "text"), default="json")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("generate", help="print a seeded random energy")
    g.add_argument("--n", type=int, default=6)
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-unary", type=int, default=10)
    g.add_argument("--max-pairwise", type=int, default=10)
    g.add_argument("--dimacs-out")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("trace", help="print the Phase-1 trace and Phase-2 rounds as JSONL")
    common(t)
    t.add_argument("--phase2-mode", choices=("strict", "fast"), default="fast")
    t.set_defaults(func=cmd_trace)
    return p


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    level = os.environ.get("APMP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, InvalidEnergy, DimensionMismatch, TooLarge, ValueError) as exc:
        return _fail(EXIT_INPUT, exc)
    except APMPError as exc:
        return _fail(EXIT_SOLVER, exc)


if __name__ == "__main__":
    sys.exit(main())
