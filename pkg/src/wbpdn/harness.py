"""Randomized verification of the recovery inequalities on solved instances.

Margins are always ``RHS - LHS``: nonnegative means the inequality held.
Solutions are numerical, so a margin counts as a violation only below
``-slack * (1 + |LHS|)``, and only on trials whose KKT residual is at most
``kkt_gate``; other trials are recorded but never asserted on.

Seed splitting for sweeps: the instance seed of trial ``j`` in cell ``c`` is
the first 32-bit word of ``SeedSequence([base_seed, 1, c, j])``; its
measurement matrix comes from ``SeedSequence([base_seed, 0, j, m, n])``, so
cells that differ only in prior, noise or ``t`` share matrices.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .bounds import (
    applicable_cases,
    case_estimate,
    compute_betas,
    compute_d,
    compute_eta,
    compute_theta,
    theorem_bound,
)
from .errors import InputError, ResourceError, WbpdnError
from .model import ProblemInstance, best_k_term, generate_instance
from .ripcert import DEFAULT_CAP, check_condition, effective_order, ric_exact
from .solver import SolveOutcome, SolverConfig, solve

__all__ = [
    "Lemma1Margins",
    "TrialRecord",
    "SweepSpec",
    "CellSummary",
    "VerificationReport",
    "DEFAULT_SLACK",
    "KKT_GATE",
    "verify_lemma1",
    "verify_lemma2",
    "lemma2_margin",
    "verify_theorem",
    "derive_seeds",
    "run_sweep",
    "emit_report",
    "parse_report",
    "ROW_COLUMNS",
]

DEFAULT_SLACK = 1e-6
KKT_GATE = 1e-8


def _top_norm(h: np.ndarray, s: int) -> float:
    s = min(max(s, 1), h.size)
    return float(np.linalg.norm(best_k_term(h, s)[0]))


class Lemma1Margins(NamedTuple):
    """Margins of the two residual inequalities.

    The energy inequality bounds ``||Ah||^2 - 2 eps ||Ah||``; the cone
    inequality bounds ``||h_{E^c}||_1``. Both right-hand sides involve the
    tail ``eta`` and ``theta sqrt(k) ||h_max(dk)||_2``.
    """

    energy_margin: float
    cone_margin: float
    energy_lhs: float
    cone_lhs: float

    def held(self, slack: float = DEFAULT_SLACK) -> bool:
        return self.energy_margin >= -slack * (1 + abs(self.energy_lhs)) and self.cone_margin >= -slack * (1 + abs(self.cone_lhs))


def verify_lemma1(inst: ProblemInstance, outcome: SolveOutcome) -> Optional[Lemma1Margins]:
    """Evaluate both residual inequalities for ``h = x_opt - x_true``.

    Returns None (skip) for a non-converged outcome. ``||h_max(dk)||`` uses
    the ``ceil(d k)`` largest entries of ``h``.
    """
    if not outcome.converged:
        return None
    A, lam, eps, k, w = inst.A, inst.lam, inst.eps, inst.k, inst.w
    p = inst.prior
    d = compute_d(w, p.alpha, p.rho)
    theta = compute_theta(w, p.alpha, p.rho)
    h = outcome.solution - inst.truth
    nAh = float(np.linalg.norm(A @ h))
    eta = compute_eta(inst.truth, p, w)
    h_top = _top_norm(h, effective_order(d * k))
    off_E = np.ones(h.size, dtype=bool)
    off_E[list(p.true_support)] = False
    h_Ec = float(np.abs(h[off_E]).sum())
    sk = math.sqrt(k)

    energy_lhs = nAh**2 - 2.0 * eps * nAh
    energy_rhs = 4.0 * lam * eta + 2.0 * theta * sk * lam * h_top - 2.0 * lam * h_Ec
    cone_rhs = 2.0 * eta + theta * sk * h_top + (eps / lam) * nAh
    return Lemma1Margins(energy_rhs - energy_lhs, cone_rhs - h_Ec, energy_lhs, h_Ec)


def lemma2_margin(A: np.ndarray, h: np.ndarray, S: Sequence[int], t: float, g: float, k: int, delta: float) -> float:
    """``beta1 ||Ah|| + beta2 / sqrt((t - g) k) * ||h_{S^c}||_1 - ||h_S||_2``."""
    bp = compute_betas(delta)
    in_S = np.zeros(h.size, dtype=bool)
    in_S[list(S)] = True
    rhs = bp.beta1 * np.linalg.norm(A @ h) + bp.beta2 / math.sqrt((t - g) * k) * np.abs(h[~in_S]).sum()
    return float(rhs - np.linalg.norm(h[in_S]))


def verify_lemma2(
    A,
    t: float,
    g: float,
    k: int,
    trials: int,
    seed: int,
    delta: Optional[float] = None,
    cap: int = DEFAULT_CAP,
) -> float:
    """Minimum margin of the RIC null-space inequality over random ``(h, S)`` draws.

    Draws rotate through dense Gaussian vectors, sparse vectors, null-space
    directions of ``A`` (where ``||Ah||`` vanishes), vectors concentrated on
    ``S``, and least-singular directions of a random ``ceil(tk)``-column
    block (small ``||Ah||`` with ``h`` still sparse); ``S`` is random or the
    top-``gk`` set of ``h`` on alternate draws. Each ``h`` is scaled to unit norm. ``delta`` defaults to the exact
    ``delta_{tk}``.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    if not (g >= 1 and t > g):
        raise InputError(f"need t > g >= 1, got t={t}, g={g}")
    size = g * k
    if abs(size - round(size)) > 1e-9 or not 1 <= round(size) <= n:
        raise InputError(f"|S| = g k = {size} must be an integer in [1, {n}]")
    size = int(round(size))
    if delta is None:
        delta = ric_exact(A, t * k, cap).delta
    if not delta < 1:
        raise InputError(f"delta_tk = {delta} >= 1; the inequality needs delta < 1")

    rng = np.random.default_rng(seed)
    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-12 * max(sv.max(), 1.0)))
    null = vt[rank:]
    block = effective_order(t * k)
    worst = math.inf
    for i in range(trials):
        kind = i % 5
        if kind == 0:
            h = rng.standard_normal(n)
        elif kind == 1:
            h = np.zeros(n)
            supp = rng.choice(n, size=rng.integers(1, n + 1), replace=False)
            h[supp] = rng.standard_normal(supp.size)
        elif kind == 2 and null.shape[0] > 0:
            h = rng.standard_normal(null.shape[0]) @ null + 1e-3 * rng.standard_normal(n) * rng.integers(0, 2)
        elif kind == 3 or block > n:
            h = 1e-2 * rng.standard_normal(n)
            h[rng.choice(n, size=size, replace=False)] += rng.standard_normal(size)
        else:
            T = rng.choice(n, size=block, replace=False)
            h = np.zeros(n)
            h[T] = np.linalg.svd(A[:, T])[2][-1]
        nh = np.linalg.norm(h)
        if nh == 0:
            continue
        h = h / nh
        if (i // 5) % 2:
            S = best_k_term(h, size)[1]
        else:
            S = rng.choice(n, size=size, replace=False)
        worst = min(worst, lemma2_margin(A, h, S, t, g, k, delta))
    return worst


@dataclass
class TrialRecord:
    seed: Optional[int]
    matrix_seed: Optional[int]
    m: int
    n: int
    k: int
    rho: float
    alpha: float
    w: float
    lam: float
    eps: float
    t: float
    converged: bool = False
    iterations: int = 0
    kkt_residual: Optional[float] = None
    eligible: bool = False
    recovery_error: Optional[float] = None
    delta: Optional[float] = None
    threshold: Optional[float] = None
    condition_satisfied: bool = False
    bound_value: Optional[float] = None
    case1_bound: Optional[float] = None
    case2_bound: Optional[float] = None
    case3_bound: Optional[float] = None
    lemma1_energy_margin: Optional[float] = None
    lemma1_cone_margin: Optional[float] = None
    lemma1_energy_lhs: Optional[float] = None
    lemma1_cone_lhs: Optional[float] = None
    lemma2_margin: Optional[float] = None
    violation: bool = False
    note: str = ""

    @property
    def error_ratio(self) -> Optional[float]:
        if self.recovery_error is None or not self.bound_value:
            return None
        return self.recovery_error / self.bound_value


ROW_COLUMNS = tuple(f.name for f in fields(TrialRecord))


def verify_theorem(
    inst: ProblemInstance,
    t: float,
    slack: float = DEFAULT_SLACK,
    config: SolverConfig = SolverConfig(),
    cap: int = DEFAULT_CAP,
    kkt_gate: float = KKT_GATE,
    star_rule: str = "argmin",
) -> TrialRecord:
    """Solve, certify the RIC condition exactly, and compare the error with every bound.

    Bounds are asserted (``violation``) only on eligible trials: converged
    with a KKT residual at most ``kkt_gate``, and certified.
    """
    m, n = inst.A.shape
    p = inst.prior
    rec = TrialRecord(
        inst.seed, inst.generator.get("matrix_seed"), m, n, inst.k,
        p.rho, p.alpha, inst.w, inst.lam, inst.eps, float(t),
    )
    notes = []
    out = solve(inst, config)
    rec.converged, rec.iterations, rec.kkt_residual = out.converged, out.iterations, out.kkt_residual
    rec.eligible = out.converged and out.kkt_residual <= kkt_gate
    h = out.solution - inst.truth
    rec.recovery_error = float(np.linalg.norm(h))

    lm = verify_lemma1(inst, out)
    if lm is not None:
        rec.lemma1_energy_margin, rec.lemma1_cone_margin, rec.lemma1_energy_lhs, rec.lemma1_cone_lhs = lm
        if rec.eligible and not lm.held(slack):
            rec.violation = True
            notes.append("lemma1")

    try:
        cond = check_condition(inst.A, inst.k, t, p, inst.w, cap)
    except ResourceError as exc:
        notes.append(f"resource: {exc}")
        rec.note = "; ".join(notes)
        return rec
    except InputError as exc:
        notes.append(f"input: {exc}")
        rec.note = "; ".join(notes)
        return rec
    rec.delta, rec.threshold, rec.condition_satisfied = cond.delta, cond.threshold, cond.satisfied

    if cond.delta < 1 and rec.converged:
        S = best_k_term(h, inst.k)[1]
        rec.lemma2_margin = lemma2_margin(inst.A, h, S, t, 1.0, inst.k, cond.delta)
        if rec.eligible and rec.lemma2_margin < -slack * (1 + float(np.linalg.norm(h[list(S)]))):
            rec.violation = True
            notes.append("lemma2")

    if cond.satisfied:
        bc = theorem_bound(inst, t, cond.delta)
        rec.bound_value = bc.bound_value
        if rec.eligible and rec.recovery_error > bc.bound_value * (1 + slack):
            rec.violation = True
            notes.append("theorem")
        for c in applicable_cases(inst):
            ce = case_estimate(c, inst, t, cond.delta, star_rule)
            if not ce.applicable:
                continue
            setattr(rec, f"case{c}_bound", ce.bound_value)
            if rec.eligible and rec.recovery_error > ce.bound_value * (1 + slack):
                rec.violation = True
                notes.append(f"case{c}")
    rec.note = "; ".join(notes)
    return rec


_GRID_KEYS = ("m", "n", "k", "rho", "alpha", "w", "lam", "eps", "t")
_LAM_RULES = ("eps", "eps/sqrt(k)")


def _tuple(v) -> tuple:
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return (v,)


@dataclass(frozen=True)
class SweepSpec:
    """Parameter grids and campaign settings.

    ``lam`` entries may be numbers or the strings ``"eps"`` and
    ``"eps/sqrt(k)"``, which tie lambda to the cell's noise level.
    """

    m: tuple = (28,)
    n: tuple = (32,)
    k: tuple = (1,)
    rho: tuple = (1.0,)
    alpha: tuple = (1.0,)
    w: tuple = (1.0,)
    lam: tuple = (0.1,)
    eps: tuple = (0.1,)
    t: tuple = (2.0,)
    trials: int = 1
    base_seed: int = 0
    slack: float = DEFAULT_SLACK
    kkt_gate: float = KKT_GATE
    matrix_kind: str = "near_orthogonal"
    mix: float = 0.0
    amplitude: str = "sign"
    cap: int = DEFAULT_CAP
    star_rule: str = "argmin"
    max_iterations: int = 200_000

    def __post_init__(self):
        for key in _GRID_KEYS:
            grid = _tuple(getattr(self, key))
            if not grid:
                raise InputError(f"grid {key!r} is empty")
            object.__setattr__(self, key, grid)
        for v in self.lam:
            if isinstance(v, str) and v not in _LAM_RULES:
                raise InputError(f"unknown lambda rule {v!r}; use a number or one of {_LAM_RULES}")
        if self.trials < 1:
            raise InputError("trials must be >= 1")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SweepSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown sweep keys: {sorted(unknown)}")
        return cls(**dict(doc))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def cells(self) -> list[dict]:
        return [dict(zip(_GRID_KEYS, combo)) for combo in itertools.product(*(getattr(self, k) for k in _GRID_KEYS))]


def derive_seeds(base_seed: int, cell_index: int, trial: int, m: int, n: int) -> tuple[int, int]:
    """Return ``(instance_seed, matrix_seed)`` for one sweep trial."""
    inst_seed = np.random.SeedSequence([base_seed, 1, cell_index, trial]).generate_state(1)[0]
    mat_seed = np.random.SeedSequence([base_seed, 0, trial, m, n]).generate_state(1)[0]
    return int(inst_seed), int(mat_seed)


def _resolve_lam(lam, eps: float, k: int) -> float:
    if lam == "eps":
        return eps
    if lam == "eps/sqrt(k)":
        return eps / math.sqrt(k)
    return float(lam)


def _run_trial(args) -> TrialRecord:
    spec, cell_index, cell, trial = args
    m, n, k = int(cell["m"]), int(cell["n"]), int(cell["k"])
    eps = float(cell["eps"])
    lam = _resolve_lam(cell["lam"], eps, k)
    seed, mseed = derive_seeds(spec.base_seed, cell_index, trial, m, n)
    try:
        inst = generate_instance(
            m, n, k, cell["rho"], cell["alpha"], cell["w"], lam, eps, seed,
            amplitude=spec.amplitude, matrix_kind=spec.matrix_kind, mix=spec.mix, matrix_seed=mseed,
        )
        return verify_theorem(
            inst, cell["t"], spec.slack, SolverConfig(max_iterations=spec.max_iterations),
            spec.cap, spec.kkt_gate, spec.star_rule,
        )
    except WbpdnError as exc:
        return TrialRecord(
            seed, mseed, m, n, k, float(cell["rho"]), float(cell["alpha"]), float(cell["w"]),
            lam, eps, float(cell["t"]), note=f"error: {exc}",
        )


@dataclass
class CellSummary:
    cell_index: int
    params: dict
    trials: int = 0
    converged: int = 0
    eligible: int = 0
    certified: int = 0
    min_energy_margin: Optional[float] = None
    min_cone_margin: Optional[float] = None
    min_lemma2_margin: Optional[float] = None
    max_error_ratio: Optional[float] = None
    max_case_ratio: Optional[float] = None
    violations: int = 0
    errors: int = 0


def _min(a, b):
    return b if a is None else (a if b is None else min(a, b))


def _max(a, b):
    return b if a is None else (a if b is None else max(a, b))


def _summarize(cell_index: int, params: dict, records: Sequence[TrialRecord]) -> CellSummary:
    cs = CellSummary(cell_index, params)
    for r in records:
        cs.trials += 1
        cs.converged += r.converged
        cs.eligible += r.eligible
        cs.violations += r.violation
        cs.errors += r.note.startswith(("error", "resource", "input"))
        if r.eligible:
            cs.min_energy_margin = _min(cs.min_energy_margin, r.lemma1_energy_margin)
            cs.min_cone_margin = _min(cs.min_cone_margin, r.lemma1_cone_margin)
            cs.min_lemma2_margin = _min(cs.min_lemma2_margin, r.lemma2_margin)
        if r.condition_satisfied:
            cs.certified += 1
            if r.eligible:
                cs.max_error_ratio = _max(cs.max_error_ratio, r.error_ratio)
                for c in (r.case1_bound, r.case2_bound, r.case3_bound):
                    if c:
                        cs.max_case_ratio = _max(cs.max_case_ratio, r.recovery_error / c)
    return cs


@dataclass
class VerificationReport:
    spec: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)
    records: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(r.violation for r in self.records)

    def to_dict(self) -> dict:
        return {
            "format": "wbpdn-report",
            "version": 1,
            "spec": self.spec,
            "violations": self.violations,
            "cells": [asdict(c) for c in self.cells],
            "records": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "VerificationReport":
        if doc.get("format") != "wbpdn-report":
            raise InputError("not a verification report document")
        return cls(
            dict(doc.get("spec", {})),
            [CellSummary(**c) for c in doc.get("cells", [])],
            [TrialRecord(**r) for r in doc.get("records", [])],
        )


def _worker_count(workers: Optional[int]) -> int:
    if workers is None:
        workers = int(os.environ.get("WBPDN_WORKERS", "1") or 1)
    return max(1, workers)


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> VerificationReport:
    """Run every ``(cell, trial)`` and fold the records in grid order.

    Trials are independent, so ``workers > 1`` (or ``WBPDN_WORKERS``) runs
    them in a process pool without changing the report.
    """
    cells = spec.cells()
    tasks = [(spec, ci, cell, j) for ci, cell in enumerate(cells) for j in range(spec.trials)]
    nw = _worker_count(workers)
    if nw > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            records = list(ex.map(_run_trial, tasks, chunksize=max(1, len(tasks) // (4 * nw))))
    else:
        records = [_run_trial(t) for t in tasks]
    summaries = []
    for ci, cell in enumerate(cells):
        chunk = records[ci * spec.trials:(ci + 1) * spec.trials]
        summaries.append(_summarize(ci, cell, chunk))
    return VerificationReport(spec.to_dict(), summaries, records)


_BOOL_COLS = {f.name for f in fields(TrialRecord) if f.type in ("bool",)}
_INT_COLS = {f.name for f in fields(TrialRecord) if f.type in ("int", "Optional[int]")}
_STR_COLS = {"note"}


def _cell_text(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _parse_cell(name: str, text: str):
    if name in _STR_COLS:
        return text
    if text == "":
        return None
    if name in _BOOL_COLS:
        return text == "true"
    if name in _INT_COLS:
        return int(text)
    return float(text)


def emit_report(report: VerificationReport, fmt: str = "document") -> str:
    """Serialize as ``"rows"`` (CSV of trial records, header first) or ``"document"`` (JSON)."""
    if fmt == "rows":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(ROW_COLUMNS)
        for r in report.records:
            wr.writerow([_cell_text(getattr(r, c)) for c in ROW_COLUMNS])
        return buf.getvalue()
    if fmt == "document":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    raise InputError(f"unknown report format {fmt!r}")


def parse_report(text: str, fmt: str = "document") -> VerificationReport:
    """Inverse of :func:`emit_report`; rows input yields a report with records only."""
    if fmt == "rows":
        rd = csv.reader(io.StringIO(text))
        header = next(rd, None)
        if header is None or tuple(header) != ROW_COLUMNS:
            raise InputError("rows header does not match the documented column order")
        return VerificationReport(records=[TrialRecord(**{c: _parse_cell(c, v) for c, v in zip(ROW_COLUMNS, row)}) for row in rd])
    if fmt == "document":
        try:
            return VerificationReport.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InputError(f"report is not valid JSON: {exc}") from None
    raise InputError(f"unknown report format {fmt!r}")
