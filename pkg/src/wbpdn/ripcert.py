"""Exact restricted isometry constants and the sharp recovery condition.

``delta_s`` is the largest deviation ``max(lmax - 1, 1 - lmin)`` of the
eigenvalues of ``A_S^T A_S`` over every column subset ``S`` of size ``s``.
Fractional orders are rounded up.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ResourceError
from .model import SupportPrior

__all__ = [
    "RicEstimate",
    "RipCondition",
    "DEFAULT_CAP",
    "effective_order",
    "ric_exact",
    "condition_threshold",
    "check_condition",
]

DEFAULT_CAP = 10**7
_CHUNK = 20_000


@dataclass(frozen=True)
class RicEstimate:
    order: float
    effective_order: int
    delta: float
    extremal_subset: tuple[int, ...]
    subsets_checked: int

    @property
    def degenerate(self) -> bool:
        """True when ``delta >= 1`` (some subset is rank-deficient or stretched by 2x)."""
        return self.delta >= 1.0

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "effective_order": self.effective_order,
            "delta": self.delta,
            "degenerate": self.degenerate,
            "extremal_subset": [i + 1 for i in self.extremal_subset],
            "subsets_checked": self.subsets_checked,
        }


@dataclass(frozen=True)
class RipCondition:
    t: float
    d: float
    theta: float
    threshold: float
    delta: float
    satisfied: bool
    ric: RicEstimate

    @property
    def margin(self) -> float:
        return self.threshold - self.delta

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "d": self.d,
            "theta": self.theta,
            "threshold": self.threshold,
            "delta": self.delta,
            "margin": self.margin,
            "satisfied": self.satisfied,
            "ric": self.ric.to_dict(),
        }


def effective_order(k: float) -> int:
    """``ceil(k)``, ignoring float noise below 1e-9 (so ``0.1 * 30`` counts as 3)."""
    k = float(k)
    if not k > 0:
        raise InputError(f"RIC order must be positive, got {k}")
    nearest = round(k)
    if abs(k - nearest) <= 1e-9:
        return int(nearest)
    return math.ceil(k)


def ric_exact(A, k: float, cap: int = DEFAULT_CAP) -> RicEstimate:
    """Exact ``delta_k`` by enumerating every column subset of size ``ceil(k)``.

    Subsets are visited in lexicographic order and only a strictly larger
    deviation replaces the incumbent, so the reported subset is the
    lexicographically smallest maximizer.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InputError(f"matrix must be 2-d, got shape {A.shape}")
    n = A.shape[1]
    s = effective_order(k)
    if s > n:
        raise InputError(f"order ceil({k}) = {s} exceeds the number of columns {n}")
    total = math.comb(n, s)
    if total > cap:
        raise ResourceError(f"C({n}, {s}) = {total} subsets exceeds the enumeration cap {cap}")

    G = A.T @ A
    best, best_subset = -math.inf, None
    combos = itertools.combinations(range(n), s)
    while True:
        block = np.array(list(itertools.islice(combos, _CHUNK)), dtype=np.intp)
        if block.size == 0:
            break
        sub = G[block[:, :, None], block[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        dev = np.maximum(ev[:, -1] - 1.0, 1.0 - ev[:, 0])
        j = int(np.argmax(dev))
        if dev[j] > best:
            best, best_subset = float(dev[j]), tuple(int(i) for i in block[j])
    return RicEstimate(float(k), s, best, best_subset, total)


def condition_threshold(t: float, d: float, theta: float) -> float:
    """Right-hand side ``sqrt((t - d) / (t - d + theta^2))`` of the recovery condition."""
    if not t > d:
        raise InputError(f"need t > d, got t={t}, d={d}")
    if theta < 0:
        raise InputError(f"theta must be >= 0, got {theta}")
    return math.sqrt((t - d) / (t - d + theta**2))


def check_condition(A, k: int, t: float, prior: SupportPrior, w: float, cap: int = DEFAULT_CAP) -> RipCondition:
    """Certify ``delta_{tk} < sqrt((t - d) / (t - d + theta^2))`` for the prior's ``(alpha, rho)``."""
    from .bounds import compute_d, compute_theta

    d = compute_d(w, prior.alpha, prior.rho)
    theta = compute_theta(w, prior.alpha, prior.rho)
    threshold = condition_threshold(t, d, theta)
    ric = ric_exact(A, t * k, cap)
    return RipCondition(float(t), d, theta, threshold, ric.delta, bool(ric.delta < threshold), ric)
