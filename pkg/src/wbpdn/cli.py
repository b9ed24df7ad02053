"""``wbpdn`` command-line entry point.

Subcommands: gen, solve, ric, certify, verify, sweep. Every subcommand takes
``--config FILE`` (a JSON object keyed by flag name, e.g. ``{"lambda": 0.1}``);
flags given on the command line override file values.

Exit status: 0 success, 1 violated assertion, 2 input error, 3 resource error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bounds import applicable_cases, case_estimate, theorem_bound
from .errors import CertificateError, InputError, ResourceError
from .formats import (
    atomic_write,
    dumps_document,
    dumps_instance,
    loads_instance,
    read_matrix_text,
)
from .harness import DEFAULT_SLACK, SweepSpec, emit_report, run_sweep, verify_lemma2
from .model import MATRIX_KINDS, generate_instance, random_matrix
from .ripcert import DEFAULT_CAP, check_condition, ric_exact
from .solver import SolverConfig, solve

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_RESOURCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: error: {message}")


def _lam_value(text: str):
    if text in ("eps", "eps/sqrt(k)"):
        return text
    return float(text)


def _add_shape(p, lam_rules: bool = False):
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--w", type=float)
    p.add_argument("--lambda", dest="lam", type=_lam_value if lam_rules else float)
    p.add_argument("--eps", type=float)


def _add_common(p, output: bool = True):
    p.add_argument("--config", help="JSON document supplying default flag values")
    if output:
        p.add_argument("-o", "--output", help="output path (atomic write); stdout if omitted")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wbpdn", description="Weighted BPDN recovery with partially known support.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a random instance bundle")
    _add_shape(p)
    p.add_argument("-s", "--seed", type=int)
    p.add_argument("--amplitude", choices=("sign", "gaussian"))
    p.add_argument("--matrix", dest="matrix_kind", choices=MATRIX_KINDS)
    p.add_argument("--mix", type=float)
    _add_common(p)

    p = sub.add_parser("solve", help="solve an instance bundle")
    p.add_argument("input")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--step-rule", choices=("fixed", "backtracking"))
    _add_common(p)

    p = sub.add_parser("ric", help="exact restricted isometry constant of a matrix file")
    p.add_argument("input")
    p.add_argument("--k", type=float)
    p.add_argument("--cap", type=int)
    _add_common(p)

    p = sub.add_parser("certify", help="recovery condition and all error bounds for a bundle")
    p.add_argument("input")
    p.add_argument("--t", type=float)
    p.add_argument("--cap", type=int)
    p.add_argument("--star-rule", choices=("argmin", "argmax"))
    _add_common(p)

    p = sub.add_parser("verify", help="run a lemma or theorem campaign")
    p.add_argument("--kind", choices=("theorem", "lemma2"))
    _add_shape(p, lam_rules=True)
    p.add_argument("--t", type=float)
    p.add_argument("--g", type=float)
    p.add_argument("-s", "--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--cap", type=int)
    p.add_argument("--slack", type=float)
    p.add_argument("--matrix", dest="matrix_kind", choices=MATRIX_KINDS)
    p.add_argument("--mix", type=float)
    p.add_argument("-f", "--format", choices=("rows", "document"))
    _add_common(p)

    p = sub.add_parser("sweep", help="run a sweep described by a JSON spec document")
    p.add_argument("spec")
    p.add_argument("-s", "--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--cap", type=int)
    p.add_argument("--slack", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("-f", "--format", choices=("rows", "document"))
    _add_common(p)
    return parser


_DEFAULTS = {
    "gen": {"amplitude": "sign", "matrix_kind": "gaussian", "mix": 0.0},
    "solve": {"max_iterations": SolverConfig().max_iterations, "step_rule": "fixed"},
    "ric": {"cap": DEFAULT_CAP},
    "certify": {"cap": DEFAULT_CAP, "star_rule": "argmin"},
    "verify": {
        "kind": "theorem", "trials": 10, "cap": DEFAULT_CAP, "slack": DEFAULT_SLACK, "g": 1.0,
        "matrix_kind": None, "mix": 0.0, "format": "document",
    },
    "sweep": {"format": "document"},
}
_REQUIRED = {
    "gen": ("m", "n", "k", "rho", "alpha", "w", "lam", "eps", "seed"),
    "ric": ("k",),
    "certify": ("t",),
    "verify": ("m", "n", "k", "seed", "t"),
    "sweep": (),
}
_FLAG_ALIASES = {"lambda": "lam", "matrix": "matrix_kind", "max-iterations": "max_iterations", "step-rule": "step_rule", "star-rule": "star_rule"}


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    values = dict(_DEFAULTS.get(args.command, {}))
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise InputError("config document must be a JSON object")
        for key, val in doc.items():
            key = _FLAG_ALIASES.get(key, key.replace("-", "_"))
            if not hasattr(args, key):
                raise InputError(f"config key {key!r} is not a flag of '{args.command}'")
            values[key] = val
    for key, val in vars(args).items():
        if val is not None or key not in values:
            values[key] = val
    missing = [k for k in _REQUIRED.get(args.command, ()) if values.get(k) is None]
    if args.command == "verify" and values.get("kind") == "theorem":
        missing += [k for k in ("rho", "alpha", "w", "lam", "eps") if values.get(k) is None]
    if missing:
        flags = ", ".join("--" + ("lambda" if k == "lam" else k.replace("_", "-")) for k in missing)
        raise InputError(f"{args.command}: missing required flags: {flags}")
    return argparse.Namespace(**values)


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        atomic_write(output, text)
    else:
        sys.stdout.write(text)


def _cmd_gen(a) -> int:
    inst = generate_instance(
        a.m, a.n, a.k, a.rho, a.alpha, a.w, a.lam, a.eps, a.seed,
        amplitude=a.amplitude, matrix_kind=a.matrix_kind, mix=a.mix,
    )
    _emit(dumps_instance(inst), a.output)
    return EXIT_OK


def _cmd_solve(a) -> int:
    inst = loads_instance(Path(a.input).read_text())
    cfg = SolverConfig(max_iterations=a.max_iterations, step_rule=a.step_rule)
    out = solve(inst, cfg)
    doc = {
        "format": "wbpdn-outcome",
        "version": 1,
        "inputs": {"bundle": a.input, "w": inst.w, "lambda": inst.lam, "eps": inst.eps, "k": inst.k, "seed": inst.seed},
        "config": {
            "max_iterations": cfg.max_iterations,
            "objective_tolerance": cfg.objective_tolerance,
            "kkt_tolerance": cfg.kkt_tolerance,
            "step_rule": cfg.step_rule,
            "restart": cfg.restart,
        },
        **out.to_dict(),
    }
    _emit(dumps_document(doc), a.output)
    return EXIT_OK


def _cmd_ric(a) -> int:
    A = read_matrix_text(Path(a.input).read_text())
    est = ric_exact(A, a.k, a.cap)
    doc = {"format": "wbpdn-ric", "version": 1, "inputs": {"matrix": a.input, "k": a.k, "cap": a.cap}, **est.to_dict()}
    _emit(dumps_document(doc), a.output)
    return EXIT_OK


def certificate_report(inst, t: float, cap: int = DEFAULT_CAP, star_rule: str = "argmin") -> dict:
    """Condition, theorem constants and every applicable case estimate for one instance."""
    m, n = inst.A.shape
    cond = check_condition(inst.A, inst.k, t, inst.prior, inst.w, cap)
    doc = {
        "format": "wbpdn-certificate",
        "version": 1,
        "inputs": {
            "m": m, "n": n, "k": inst.k, "w": inst.w, "alpha": inst.prior.alpha, "rho": inst.prior.rho,
            "t": t, "lambda": inst.lam, "eps": inst.eps, "seed": inst.seed, "cap": cap, "star_rule": star_rule,
        },
        "condition": cond.to_dict(),
        "theorem": None,
        "cases": [],
    }
    if cond.satisfied:
        doc["theorem"] = theorem_bound(inst, t, cond.delta).to_dict()
        doc["cases"] = [case_estimate(c, inst, t, cond.delta, star_rule).to_dict() for c in applicable_cases(inst)]
    else:
        doc["theorem_note"] = "recovery condition not satisfied; no bound is claimed"
    return doc


def _cmd_certify(a) -> int:
    inst = loads_instance(Path(a.input).read_text())
    _emit(dumps_document(certificate_report(inst, a.t, a.cap, a.star_rule)), a.output)
    return EXIT_OK


def _cmd_verify(a) -> int:
    if a.kind == "lemma2":
        # The lemma is vacuous once delta_{tk} >= 1; tight frames keep small
        # subsets conditioned well enough for the check to say something.
        a.matrix_kind = a.matrix_kind or "tight_frame"
        rng = np.random.default_rng(a.seed)
        A = random_matrix(a.matrix_kind, a.m, a.n, rng, a.mix)
        est = ric_exact(A, a.t * a.k, a.cap)
        margin = verify_lemma2(A, a.t, a.g, a.k, a.trials, a.seed, est.delta, a.cap)
        doc = {
            "format": "wbpdn-lemma2",
            "version": 1,
            "inputs": {"m": a.m, "n": a.n, "k": a.k, "t": a.t, "g": a.g, "trials": a.trials, "seed": a.seed,
                       "matrix_kind": a.matrix_kind, "mix": a.mix, "slack": a.slack},
            "ric": est.to_dict(),
            "min_margin": margin,
            "held": margin >= -a.slack,
        }
        _emit(dumps_document(doc), a.output)
        return EXIT_OK if doc["held"] else EXIT_VIOLATION
    a.matrix_kind = a.matrix_kind or "near_orthogonal"
    spec = SweepSpec(
        m=a.m, n=a.n, k=a.k, rho=a.rho, alpha=a.alpha, w=a.w, lam=a.lam, eps=a.eps, t=a.t,
        trials=a.trials, base_seed=a.seed, slack=a.slack, cap=a.cap, matrix_kind=a.matrix_kind, mix=a.mix,
    )
    report = run_sweep(spec)
    _emit(emit_report(report, a.format), a.output)
    return EXIT_VIOLATION if report.violations else EXIT_OK


def _cmd_sweep(a) -> int:
    try:
        doc = json.loads(Path(a.spec).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"sweep spec {a.spec} is not valid JSON: {exc}") from None
    for flag, key in (("seed", "base_seed"), ("trials", "trials"), ("cap", "cap"), ("slack", "slack")):
        if getattr(a, flag, None) is not None:
            doc[key] = getattr(a, flag)
    if "base_seed" not in doc:
        raise InputError("sweep: a seed is required (--seed or 'base_seed' in the spec)")
    report = run_sweep(SweepSpec.from_dict(doc), getattr(a, "workers", None))
    _emit(emit_report(report, a.format), a.output)
    return EXIT_VIOLATION if report.violations else EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "solve": _cmd_solve,
    "ric": _cmd_ric,
    "certify": _cmd_certify,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def dispatch(argv: Sequence[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_INPUT
        args = _merge_config(args)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except InputError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except CertificateError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except ResourceError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RESOURCE
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
