"""Weighted BPDN solvers and first-order optimality checks.

The problem is ``min ||x||_{w,1} + ||b - Ax||^2 / (2 lam)``. The smooth part
has Lipschitz gradient with constant ``sigma_max(A)^2 / lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .model import ProblemInstance, WeightProfile, as_signal, objective_value

__all__ = [
    "SolverConfig",
    "SolveOutcome",
    "prox_weighted_l1",
    "spectral_norm_sq",
    "kkt_residual",
    "solve",
    "reference_solve",
]


@dataclass(frozen=True)
class SolverConfig:
    """Options for :func:`solve`.

    Convergence needs both a relative objective change below
    ``objective_tolerance`` across ``window`` iterations and a KKT residual
    below ``kkt_tolerance``.
    """

    max_iterations: int = 200_000
    objective_tolerance: float = 1e-12
    kkt_tolerance: float = 1e-9
    step_rule: str = "fixed"
    restart: bool = True
    window: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InputError("max_iterations must be >= 1")
        if not (self.objective_tolerance > 0 and self.kkt_tolerance > 0):
            raise InputError("tolerances must be positive")
        if self.step_rule not in ("fixed", "backtracking"):
            raise InputError(f"unknown step rule {self.step_rule!r}")
        if self.window < 1:
            raise InputError("window must be >= 1")


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    solution: np.ndarray
    iterations: int
    final_objective: float
    kkt_residual: float
    converged: bool
    objective_trace: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "solution": self.solution.tolist(),
            "iterations": self.iterations,
            "final_objective": self.final_objective,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
        }


def prox_weighted_l1(u, tau: float, profile: WeightProfile) -> np.ndarray:
    """Soft-thresholding with per-coordinate thresholds ``tau * weights``."""
    u = np.asarray(u, dtype=float)
    if not tau > 0:
        raise InputError(f"tau must be positive, got {tau}")
    if u.shape != profile.weights.shape:
        raise InputError(f"length mismatch: u has {u.size}, weights have {profile.weights.size}")
    return np.sign(u) * np.maximum(np.abs(u) - tau * profile.weights, 0.0)


def spectral_norm_sq(A: np.ndarray, tol: float = 1e-10, max_iter: int = 1000) -> float:
    """Largest eigenvalue of ``A^T A`` by power iteration."""
    n = A.shape[1]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    val = 0.0
    for _ in range(max_iter):
        u = A.T @ (A @ v)
        new = float(np.linalg.norm(u))
        if new == 0.0:
            return 0.0
        v = u / new
        if abs(new - val) <= tol * new:
            val = new
            break
        val = new
    return val


def _check_dims(x, inst: ProblemInstance) -> np.ndarray:
    x = as_signal(x)
    if x.size != inst.A.shape[1]:
        raise InputError(f"x has length {x.size}, expected {inst.A.shape[1]}")
    return x


def kkt_residual(x, inst: ProblemInstance) -> float:
    """Largest violation of ``A^T (b - Ax) in lam * w * d|x|``; zero exactly at a minimizer."""
    x = _check_dims(x, inst)
    g = inst.A.T @ (inst.b - inst.A @ x)
    lw = inst.lam * inst.weights
    nz = x != 0
    viol = np.where(nz, np.abs(g - lw * np.sign(x)), np.maximum(np.abs(g) - lw, 0.0))
    return float(viol.max())


def _finite(v, where: str):
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite value encountered in {where}")


def solve(inst: ProblemInstance, config: SolverConfig = SolverConfig()) -> SolveOutcome:
    """Accelerated proximal gradient (FISTA) with adaptive restart.

    With ``config.restart`` the momentum is reset whenever the gradient
    restart test fires, and any step that would raise the objective is
    rejected in favour of a plain proximal-gradient step from the current
    iterate, so the objective trace is nonincreasing. Starting from zero,
    the returned objective never exceeds that of the zero vector.
    """
    A, b, lam, prof = inst.A, inst.b, inst.lam, inst.profile
    n = A.shape[1]
    Atb = A.T @ b
    if config.step_rule == "fixed":
        L = spectral_norm_sq(A) / lam
    else:
        # cheap lower estimate; backtracking raises it as needed
        L = float(np.max(np.sum(A * A, axis=0))) / lam
    if L == 0.0:
        L = 1.0
    _finite(L, "step size")

    def smooth(v):
        r = b - A @ v
        return float(r @ r) / (2.0 * lam)

    def grad(v):
        return (A.T @ (A @ v) - Atb) / lam

    x = np.zeros(n)
    y = x
    tk = 1.0
    F = objective_value(x, inst)
    best_x, best_F = x, F
    trace = [F]
    converged = False
    kkt = math.inf
    it = 0
    from_x = True
    while it < config.max_iterations:
        it += 1
        gy = grad(y)
        if config.step_rule == "fixed":
            x_new = prox_weighted_l1(y - gy / L, 1.0 / L, prof)
        else:
            fy = smooth(y)
            while True:
                x_new = prox_weighted_l1(y - gy / L, 1.0 / L, prof)
                dx = x_new - y
                # the allowance absorbs rounding once steps reach ulp scale
                slack = 16 * np.finfo(float).eps * max(1.0, abs(fy))
                if smooth(x_new) <= fy + gy @ dx + 0.5 * L * (dx @ dx) + slack:
                    break
                L *= 2.0
        _finite(x_new, "solve")
        F_new = objective_value(x_new, inst)

        if config.restart and F_new > F and not from_x:
            # reject and restart momentum; the retry from x is a plain prox-gradient step
            tk, y = 1.0, x
            from_x = True
            trace.append(F)
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
            if config.restart and (y - x_new) @ (x_new - x) > 0:
                t_next, y = 1.0, x_new
                from_x = True
            else:
                y = x_new + ((tk - 1.0) / t_next) * (x_new - x)
                from_x = False
            tk = t_next
            x, F = x_new, F_new
            trace.append(F)
            if F < best_F:
                best_x, best_F = x, F

        if it >= config.window:
            ref = trace[-1 - config.window]
            if abs(ref - trace[-1]) <= config.objective_tolerance * max(1.0, abs(trace[-1])):
                kkt = kkt_residual(x, inst)
                if kkt <= config.kkt_tolerance:
                    converged = True
                    break

    if not config.restart and best_F < F:
        x, F = best_x, best_F
    if not converged:
        kkt = kkt_residual(x, inst)
    return SolveOutcome(x, it, F, kkt, converged, tuple(trace))


def reference_solve(inst: ProblemInstance, budget: int = 200_000, kkt_tolerance: float = 1e-9) -> SolveOutcome:
    """Plain proximal gradient (ISTA) with fixed step ``lam / sigma_max(A)^2``.

    Slow but algorithmically distinct from :func:`solve`. The Lipschitz
    constant comes from a full SVD, not power iteration.

    The map is deterministic, so once an iterate repeats bit-for-bit
    (a fixed point, or a rounding-level orbit of period <= ``_ORBIT``) the
    rest of the budget is predictable: the loop stops and returns the
    iterate the full budget would end on. ``iterations`` counts the steps
    actually taken.
    """
    if budget < 1:
        raise InputError("budget must be >= 1")
    A, b, lam, prof = inst.A, inst.b, inst.lam, inst.profile
    sigma = float(np.linalg.norm(A, 2))
    step = lam / sigma**2 if sigma > 0 else 1.0
    x = np.zeros(A.shape[1])
    trace = [objective_value(x, inst)]
    recent = [x]
    it = 0
    for it in range(1, budget + 1):
        x = prox_weighted_l1(x + (step / lam) * (A.T @ (b - A @ x)), step, prof)
        _finite(x, "reference_solve")
        trace.append(objective_value(x, inst))
        period = next((p for p in range(1, len(recent) + 1) if np.array_equal(recent[-p], x)), None)
        if period is not None:
            remaining = budget - it
            x = recent[len(recent) - period + remaining % period] if remaining % period else x
            break
        recent.append(x)
        if len(recent) > _ORBIT:
            recent.pop(0)
    kkt = kkt_residual(x, inst)
    return SolveOutcome(x, it, objective_value(x, inst), kkt, kkt <= kkt_tolerance, tuple(trace))


_ORBIT = 8
