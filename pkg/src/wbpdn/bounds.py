"""Closed-form constants and error bounds for weighted BPDN recovery.

Notation follows the usual weighted-l1 analysis with a support estimate:
``d`` and ``theta`` measure how much the prior ``(w, alpha, rho)`` enlarges
the effective sparsity, ``beta1``/``beta2`` are the RIC-dependent factors,
and ``eta`` is the best-k-term tail of the true signal in the weighted norm.
Formulas are evaluated in double precision in the order they are written.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import CertificateError, InputError
from .model import ProblemInstance, SupportPrior, as_signal
from .ripcert import condition_threshold

__all__ = [
    "GeometryParams",
    "BetaPair",
    "BoundConstants",
    "CaseEstimate",
    "compute_d",
    "compute_theta",
    "geometry",
    "compute_eta",
    "compute_betas",
    "beta_sharp_bounds",
    "f_polynomials",
    "theorem_bound",
    "case_estimate",
    "applicable_cases",
    "CASE_RELATION_TOL",
]

CASE_RELATION_TOL = 1e-12


def _check_prior_scalars(w, alpha, rho):
    if not 0.0 <= w <= 1.0:
        raise InputError(f"w must lie in [0, 1], got {w}")
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")
    if rho < 0:
        raise InputError(f"rho must be >= 0, got {rho}")


def compute_d(w: float, alpha: float, rho: float) -> float:
    """Size factor ``d``: ``1 - alpha rho + max(alpha, 1 - alpha) rho`` for ``w < 1``, else 1."""
    _check_prior_scalars(w, alpha, rho)
    if w == 1.0:
        return 1.0
    return 1.0 - alpha * rho + max(alpha, 1.0 - alpha) * rho


def compute_theta(w: float, alpha: float, rho: float) -> float:
    """``theta = w + (1 - w) sqrt(1 + rho - 2 alpha rho)``."""
    _check_prior_scalars(w, alpha, rho)
    rad = 1.0 + rho - 2.0 * alpha * rho
    if rad < 0:
        raise InputError(f"1 + rho - 2 alpha rho = {rad} < 0 for alpha={alpha}, rho={rho}")
    return w + (1.0 - w) * math.sqrt(rad)


@dataclass(frozen=True)
class GeometryParams:
    d: float
    theta: float
    r: float
    r1: float
    t: float
    w: float
    alpha: float
    rho: float


def geometry(w: float, alpha: float, rho: float, t: float) -> GeometryParams:
    """Bundle ``d``, ``theta``, ``r = sqrt(t - d)`` and ``r1 = sqrt(t - 1)``."""
    d = compute_d(w, alpha, rho)
    theta = compute_theta(w, alpha, rho)
    if not t > d:
        raise InputError(f"need t > d, got t={t}, d={d}")
    return GeometryParams(d, theta, math.sqrt(t - d), math.sqrt(t - 1.0), float(t), float(w), float(alpha), float(rho))


def compute_eta(truth, prior: SupportPrior, w: float) -> float:
    """Tail term ``w ||x_{E^c}||_1 + (1 - w) ||x_{K^c & E^c}||_1``."""
    x = as_signal(truth, name="truth")
    off_E = np.ones(x.size, dtype=bool)
    off_E[list(prior.true_support)] = False
    off_both = off_E.copy()
    off_both[list(prior.estimate_set)] = False
    return float(w * np.abs(x[off_E]).sum() + (1.0 - w) * np.abs(x[off_both]).sum())


@dataclass(frozen=True)
class BetaPair:
    beta1: float
    beta2: float
    delta: float
    beta1_sharp: Optional[float] = None
    beta2_sharp: Optional[float] = None


def beta_sharp_bounds(t: float, d: float, theta: float) -> tuple[float, float]:
    """Values of ``beta1`` and ``beta2`` at the largest admissible RIC."""
    if not t > d:
        raise InputError(f"need t > d, got t={t}, d={d}")
    if not theta**2 > 0:
        raise InputError(f"sharp beta bounds are undefined for theta = {theta!r} (theta^2 is 0)")
    s = t - d + theta**2
    beta1_sharp = (2.0 / theta**2) * s**0.75 * math.sqrt(math.sqrt(s) + math.sqrt(t - d))
    beta2_sharp = math.sqrt(t - d) / theta
    return beta1_sharp, beta2_sharp


def compute_betas(delta: float, geom: Optional[GeometryParams] = None) -> BetaPair:
    """``beta1 = 2 / ((1 - delta) sqrt(1 + delta))`` and ``beta2 = delta / sqrt(1 - delta^2)``.

    The sharp bounds are filled in when ``geom`` is given and ``theta > 0``.
    """
    delta = float(delta)
    if not 0.0 <= delta < 1.0:
        raise InputError(f"delta must lie in [0, 1), got {delta}")
    beta1 = 2.0 / ((1.0 - delta) * math.sqrt(1.0 + delta))
    beta2 = delta / math.sqrt(1.0 - delta**2)
    b1s = b2s = None
    if geom is not None and geom.theta**2 > 0:
        b1s, b2s = beta_sharp_bounds(geom.t, geom.d, geom.theta)
    return BetaPair(beta1, beta2, delta, b1s, b2s)


def f_polynomials(beta2: float, geom: GeometryParams) -> tuple[float, float, float]:
    d, th, r, r1 = geom.d, geom.theta, geom.r, geom.r1
    sd = math.sqrt(d)
    f1 = th * sd * beta2**2 + r * (sd + 2.0 * th) * beta2 + (2.0 + th) * r * r1
    f2 = sd * beta2**2 + 2.0 * (r + r1) * beta2 + r * r1
    f3 = 2.0 * (r * sd - th * (r1 - r)) * beta2 + (4.0 + th) * r * r1
    return f1, f2, f3


@dataclass(frozen=True)
class BoundConstants:
    geom: GeometryParams
    betas: BetaPair
    threshold: float
    k: int
    lam: float
    eps: float
    f1: float
    f2: float
    f3: float
    eta: float
    C1: float
    C2: float
    bound_value: float

    def to_dict(self) -> dict:
        return asdict(self)


def _certified_setup(inst: ProblemInstance, t: float, delta: float):
    p = inst.prior
    geom = geometry(inst.w, p.alpha, p.rho, t)
    thr = condition_threshold(t, geom.d, geom.theta)
    if not delta < thr:
        raise CertificateError(f"delta_tk = {delta!r} does not satisfy delta < {thr!r}; no bound is claimed")
    return geom, thr, compute_betas(delta, geom)


def theorem_bound(inst: ProblemInstance, t: float, delta: float) -> BoundConstants:
    """Error bound ``||x_opt - x||_2 <= C1 * eta + C2`` under the recovery condition.

    ``C2`` carries the factor ``(theta sqrt(k) beta1 lam + eps)`` in its
    numerator. When that factor is zero (``theta = 0`` and ``eps = 0``),
    ``C1`` is infinite and the bound is ``C2`` only if ``eta = 0``.
    """
    geom, thr, bp = _certified_setup(inst, t, delta)
    k, lam, eps = inst.k, inst.lam, inst.eps
    d, th, r, r1 = geom.d, geom.theta, geom.r, geom.r1
    b1, b2 = bp.beta1, bp.beta2
    sk = math.sqrt(k)
    f1, f2, f3 = f_polynomials(b2, geom)
    eta = compute_eta(inst.truth, inst.prior, inst.w)

    X = th * sk * b1 * lam + eps
    gap = r - th * b2
    if X > 0:
        C1 = (2.0 * sk * b1 * f1 * lam + 2.0 * f2 * eps) / (r * sk * gap * X)
    else:
        C1 = math.inf
    C2 = (sk * b1 * f3 * lam + (math.sqrt(d) * b2**2 + f2) * eps) / (r1 * sk * gap * (1.0 / X if X > 0 else math.inf) * lam)
    bound = C2 if eta == 0.0 else C1 * eta + C2
    return BoundConstants(geom, bp, thr, k, lam, eps, f1, f2, f3, eta, C1, C2, bound)


@dataclass(frozen=True)
class CaseEstimate:
    """One of the simplified estimates for ``lam = eps``, ``lam = eps / sqrt(k)`` or ``eps = 0``.

    ``bound_value`` is None when the case is not applicable (``theta = 0``).
    """

    case_id: int
    applicable: bool
    constants: dict = field(default_factory=dict)
    bound_value: Optional[float] = None
    reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _relation_holds(case_id: int, lam: float, eps: float, k: int) -> bool:
    tol = CASE_RELATION_TOL * max(1.0, abs(lam), abs(eps))
    if case_id == 1:
        return eps != 0 and abs(lam - eps) <= tol
    if case_id == 2:
        return eps != 0 and abs(lam - eps / math.sqrt(k)) <= tol
    if case_id == 3:
        return abs(eps) <= CASE_RELATION_TOL
    raise InputError(f"case_id must be 1, 2 or 3, got {case_id}")


def applicable_cases(inst: ProblemInstance) -> list[int]:
    return [c for c in (1, 2, 3) if _relation_holds(c, inst.lam, inst.eps, inst.k)]


def case_estimate(case_id: int, inst: ProblemInstance, t: float, delta: float, star_rule: str = "argmin") -> CaseEstimate:
    """Simplified bound of the form ``(Ca / sqrt(k) * eta + s * Cb * p) / (threshold - delta)``.

    ``beta2_star`` picks the candidate in ``{0, beta2_sharp}`` minimizing
    ``f3`` (``star_rule="argmin"``). ``star_rule="argmax"`` takes the
    maximizer instead, which makes ``f3(beta2) <= f3(beta2_star)`` hold
    for every admissible ``beta2``.
    """
    if not _relation_holds(case_id, inst.lam, inst.eps, inst.k):
        raise InputError(f"instance (lambda={inst.lam}, eps={inst.eps}, k={inst.k}) does not satisfy case {case_id}")
    if star_rule not in ("argmin", "argmax"):
        raise InputError(f"unknown star_rule {star_rule!r}")
    geom, thr, bp = _certified_setup(inst, t, delta)
    if not geom.theta**2 > 0:
        return CaseEstimate(case_id, False, reason="theta = 0: case constants divide by theta")

    k, lam, eps = inst.k, inst.lam, inst.eps
    d, th, r, r1 = geom.d, geom.theta, geom.r, geom.r1
    b1, b2, b1s, b2s = bp.beta1, bp.beta2, bp.beta1_sharp, bp.beta2_sharp
    sk, sd = math.sqrt(k), math.sqrt(d)
    gap = thr - delta
    eta = compute_eta(inst.truth, inst.prior, inst.w)

    F1s, F2s, _ = f_polynomials(b2s, geom)
    f3_zero = f_polynomials(0.0, geom)[2]
    f3_sharp = f_polynomials(b2s, geom)[2]
    if star_rule == "argmin":
        b2_star = 0.0 if f3_zero <= f3_sharp else b2s
    else:
        b2_star = b2s if f3_sharp >= f3_zero else 0.0
    F3_star = f_polynomials(b2_star, geom)[2]
    C4 = (th * b1s + 1.0) * (b1s * F3_star + sd * b2s**2 + F2s) / (r1 * th)
    const = {"beta1_sharp": b1s, "beta2_sharp": b2s, "beta2_star": b2_star, "eta": eta, "gap": gap}

    if case_id == 1:
        f1, f2, f3 = f_polynomials(b2, geom)
        C1 = (2.0 * sk * b1 * f1 + 2.0 * f2) / (r * sk * (r - th * b2) * (th * sk * b1 + 1.0))
        C2 = (sk * b1 * f3 + sd * b2**2 + f2) / (r1 * sk * (r - th * b2) / (th * sk * b1 + 1.0))
        C3 = (2.0 * b1s * F1s + 2.0 * F2s) / (2.0 * r * th**2)
        const.update(Ct1=C1, Ct2=C2, Ct3=C3, Ct4=C4)
        bound = (C3 / sk * eta + sk * C4 * lam) / gap
    elif case_id == 2:
        C5 = (2.0 * b1s * F1s + 2.0 * F2s) / (r * th * (2.0 * th + 1.0))
        const.update(Ct4=C4, Ct5=C5)
        bound = (C5 / sk * eta + C4 * eps) / gap
    else:
        C6 = 2.0 * F1s / (r * th**2)
        C7 = b1s**2 * F3_star / r1
        const.update(Ct6=C6, Ct7=C7)
        bound = (C6 / sk * eta + sk * C7 * lam) / gap
    return CaseEstimate(case_id, True, const, bound)
