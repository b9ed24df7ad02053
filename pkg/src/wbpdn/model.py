"""Signals, measurement ensembles, support priors and random problem instances.

Index sets are 0-based tuples of sorted ints inside the Python API; the text
and JSON formats in :mod:`wbpdn.formats` convert them to 1-based lists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import InputError

__all__ = [
    "MeasurementEnsemble",
    "SupportPrior",
    "WeightProfile",
    "ProblemInstance",
    "as_signal",
    "round_half_up",
    "build_weights",
    "weighted_l1_norm",
    "best_k_term",
    "objective_value",
    "support_overlap_stats",
    "gaussian_matrix",
    "near_orthogonal_matrix",
    "tight_frame_matrix",
    "random_matrix",
    "MATRIX_KINDS",
    "make_instance",
    "generate_instance",
]

NOISE_SLACK = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def as_signal(x, n: Optional[int] = None, name: str = "x") -> np.ndarray:
    """Validate ``x`` as a finite 1-d real vector (optionally of length ``n``)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise InputError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    if n is not None and arr.size != n:
        raise InputError(f"{name} has length {arr.size}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains NaN or Inf")
    return arr


def _index_set(idx: Iterable[int], n: int, name: str) -> tuple[int, ...]:
    out = sorted({int(i) for i in idx})
    if out and (out[0] < 0 or out[-1] >= n):
        raise InputError(f"{name} has indices outside [0, {n})")
    return tuple(out)


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves upward.

    A 1e-9 guard absorbs products such as ``0.1 * 3 * 5`` that land just
    below a half-integer in binary floating point.
    """
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    matrix: np.ndarray
    observation: np.ndarray
    noise_bound: float
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        if A.ndim != 2 or min(A.shape) < 1:
            raise InputError(f"matrix must be 2-d and non-empty, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InputError("matrix contains NaN or Inf")
        b = as_signal(self.observation, A.shape[0], "observation")
        eps = float(self.noise_bound)
        if not (eps >= 0 and math.isfinite(eps)):
            raise InputError(f"noise_bound must be finite and >= 0, got {self.noise_bound}")
        object.__setattr__(self, "matrix", _frozen(A))
        object.__setattr__(self, "observation", _frozen(b))
        object.__setattr__(self, "noise_bound", eps)
        if self.noise is not None:
            z = as_signal(self.noise, A.shape[0], "noise")
            if np.linalg.norm(z) > eps + NOISE_SLACK:
                raise InputError(f"noise norm {np.linalg.norm(z)!r} exceeds noise_bound {eps!r}")
            object.__setattr__(self, "noise", _frozen(z))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True, eq=False)
class SupportPrior:
    """Support estimate ``K`` together with the true top-k support ``E``.

    ``rho`` and ``alpha`` are the realized ratios ``|K|/k`` and
    ``|E & K|/|K|`` (``alpha = 0`` when ``K`` is empty).
    """

    estimate_set: tuple[int, ...]
    true_support: tuple[int, ...]
    k: int
    rho: float
    alpha: float


@dataclass(frozen=True, eq=False)
class WeightProfile:
    weights: np.ndarray
    w: float
    source_set: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    ensemble: MeasurementEnsemble
    truth: np.ndarray
    prior: SupportPrior
    profile: WeightProfile
    lam: float
    seed: Optional[int] = None
    generator: Mapping = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.ensemble.shape
        object.__setattr__(self, "truth", _frozen(as_signal(self.truth, n, "truth")))
        if self.profile.weights.size != n:
            raise InputError("weight profile length does not match the matrix")
        lam = float(self.lam)
        if not (lam > 0 and math.isfinite(lam)):
            raise InputError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "lam", lam)

    @property
    def A(self) -> np.ndarray:
        return self.ensemble.matrix

    @property
    def b(self) -> np.ndarray:
        return self.ensemble.observation

    @property
    def eps(self) -> float:
        return self.ensemble.noise_bound

    @property
    def w(self) -> float:
        return self.profile.w

    @property
    def k(self) -> int:
        return self.prior.k

    @property
    def weights(self) -> np.ndarray:
        return self.profile.weights


def build_weights(K: Iterable[int], w: float, n: int) -> WeightProfile:
    """Binary weights: ``w`` on the support estimate ``K``, 1 elsewhere."""
    if n < 1:
        raise InputError(f"dimension must be >= 1, got {n}")
    w = float(w)
    if not 0.0 <= w <= 1.0:
        raise InputError(f"w must lie in [0, 1], got {w}")
    K = _index_set(K, n, "K")
    weights = np.ones(n)
    weights[list(K)] = w
    return WeightProfile(_frozen(weights), w, K)


def weighted_l1_norm(x, profile: WeightProfile) -> float:
    x = as_signal(x)
    if x.size != profile.weights.size:
        raise InputError(f"length mismatch: x has {x.size}, weights have {profile.weights.size}")
    return float(np.sum(profile.weights * np.abs(x)))


def best_k_term(x, s: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Keep the ``s`` largest-magnitude entries of ``x``; ties go to the lower index.

    Returns the truncated vector and the sorted retained index set.
    """
    x = as_signal(x)
    s = int(s)
    if not 1 <= s <= x.size:
        raise InputError(f"s must lie in [1, {x.size}], got {s}")
    order = np.argsort(-np.abs(x), kind="stable")
    keep = np.sort(order[:s])
    out = np.zeros_like(x)
    out[keep] = x[keep]
    return out, tuple(int(i) for i in keep)


def objective_value(x, inst: ProblemInstance) -> float:
    """Weighted BPDN objective ``||x||_{w,1} + ||b - Ax||^2 / (2 lam)``."""
    x = as_signal(x)
    if x.size != inst.A.shape[1]:
        raise InputError(f"x has length {x.size}, expected {inst.A.shape[1]}")
    res = inst.b - inst.A @ x
    return weighted_l1_norm(x, inst.profile) + float(res @ res) / (2.0 * inst.lam)


def support_overlap_stats(E: Iterable[int], K: Iterable[int], k: int) -> tuple[float, float]:
    """Return ``(rho, alpha)`` with ``|K| = rho k`` and ``|E & K| = alpha |K|``."""
    if int(k) < 1:
        raise InputError(f"k must be >= 1, got {k}")
    E, K = set(E), set(K)
    rho = len(K) / k
    alpha = len(E & K) / len(K) if K else 0.0
    return rho, alpha


def gaussian_matrix(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. N(0, 1/m) entries."""
    return rng.standard_normal((m, n)) / math.sqrt(m)


def near_orthogonal_matrix(m: int, n: int, rng: np.random.Generator, mix: float = 0.0) -> np.ndarray:
    """Unit-norm columns, optionally pulled toward an orthonormal basis.

    The first ``min(m, n)`` columns are blended as ``(1 - mix) * g + mix * q``
    with ``q`` a random orthonormal basis; every column is renormalized.
    ``mix = 0`` gives column-normalized Gaussian columns.
    """
    if not 0.0 <= mix <= 1.0:
        raise InputError(f"mix must lie in [0, 1], got {mix}")
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=0)
    if mix > 0:
        q, _ = np.linalg.qr(rng.standard_normal((m, m)))
        p = min(m, n)
        A[:, :p] = (1.0 - mix) * A[:, :p] + mix * q[:, :p]
        A /= np.linalg.norm(A, axis=0)
    return A


def tight_frame_matrix(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """First ``m`` rows of a random ``n x n`` orthogonal matrix, columns renormalized.

    For ``m < n`` the rows are orthonormal before renormalization, which
    keeps small column subsets well conditioned: random 10 x 14 draws have
    ``delta_4`` around 0.85 where column-normalized Gaussians exceed 1.
    """
    if m > n:
        raise InputError(f"a tight frame needs m <= n, got m={m}, n={n}")
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = q[:m].copy()
    return A / np.linalg.norm(A, axis=0)


def make_instance(
    A,
    b,
    truth,
    K: Iterable[int],
    w: float,
    lam: float,
    noise_bound: float,
    k: int,
    noise=None,
    seed: Optional[int] = None,
    generator: Optional[Mapping] = None,
) -> ProblemInstance:
    """Assemble an instance from explicit data; ``E`` is taken as the top-k support of ``truth``."""
    ens = MeasurementEnsemble(A, b, noise_bound, noise)
    n = ens.shape[1]
    truth = as_signal(truth, n, "truth")
    k = int(k)
    if not 1 <= k <= n:
        raise InputError(f"k must lie in [1, {n}], got {k}")
    _, E = best_k_term(truth, k)
    profile = build_weights(K, w, n)
    rho, alpha = support_overlap_stats(E, profile.source_set, k)
    prior = SupportPrior(profile.source_set, E, k, rho, alpha)
    return ProblemInstance(ens, truth, prior, profile, lam, seed, dict(generator or {}))


MATRIX_KINDS = ("gaussian", "near_orthogonal", "tight_frame")


def random_matrix(kind: str, m: int, n: int, rng: np.random.Generator, mix: float = 0.0) -> np.ndarray:
    if kind == "gaussian":
        return gaussian_matrix(m, n, rng)
    if kind == "near_orthogonal":
        return near_orthogonal_matrix(m, n, rng, mix)
    if kind == "tight_frame":
        return tight_frame_matrix(m, n, rng)
    raise InputError(f"unknown matrix kind {kind!r}; expected one of {MATRIX_KINDS}")


def generate_instance(
    m: int,
    n: int,
    k: int,
    rho: float,
    alpha: float,
    w: float,
    lam: float,
    noise_bound: float,
    seed: int,
    *,
    amplitude: str = "sign",
    matrix_kind: str = "gaussian",
    mix: float = 0.0,
    matrix_seed: Optional[int] = None,
) -> ProblemInstance:
    """Draw a reproducible instance ``b = A x + z`` with an exactly k-sparse ``x``.

    The seed is split into four independent streams (matrix, signal, prior,
    noise). ``matrix_seed``, when given, replaces the matrix stream so that
    several instances can share one measurement matrix.

    ``K`` receives ``round(alpha*rho*k)`` indices drawn from the true support
    and ``round(rho*k) - round(alpha*rho*k)`` drawn off it. The noise lies
    exactly on the sphere of radius ``noise_bound``.
    """
    m, n, k = int(m), int(n), int(k)
    if not 1 <= k <= m <= n:
        raise InputError(f"need 1 <= k <= m <= n, got k={k}, m={m}, n={n}")
    if rho < 0 or not 0 <= alpha <= 1:
        raise InputError(f"need rho >= 0 and 0 <= alpha <= 1, got rho={rho}, alpha={alpha}")
    n_K = round_half_up(rho * k)
    n_in = round_half_up(alpha * rho * k)
    n_out = n_K - n_in
    if n_in > k:
        raise InputError(f"round(alpha*rho*k) = {n_in} exceeds k = {k}")
    if n_out < 0 or n_out > n - k:
        raise InputError(
            f"K needs {n_out} indices off the support but only {n - k} are available "
            f"(rho={rho}, alpha={alpha}, k={k}, n={n})"
        )
    if amplitude not in ("sign", "gaussian"):
        raise InputError(f"unknown amplitude distribution {amplitude!r}")
    if matrix_kind not in MATRIX_KINDS:
        raise InputError(f"unknown matrix kind {matrix_kind!r}")

    mat_ss, sig_ss, pri_ss, noi_ss = np.random.SeedSequence(int(seed)).spawn(4)
    if matrix_seed is not None:
        mat_ss = np.random.SeedSequence(int(matrix_seed))
    mat_rng = np.random.default_rng(mat_ss)
    A = random_matrix(matrix_kind, m, n, mat_rng, mix)

    sig_rng = np.random.default_rng(sig_ss)
    E = np.sort(sig_rng.choice(n, size=k, replace=False))
    truth = np.zeros(n)
    if amplitude == "sign":
        truth[E] = sig_rng.choice([-1.0, 1.0], size=k)
    else:
        truth[E] = sig_rng.standard_normal(k)

    pri_rng = np.random.default_rng(pri_ss)
    off = np.setdiff1d(np.arange(n), E)
    K_in = pri_rng.choice(E, size=n_in, replace=False)
    K_out = pri_rng.choice(off, size=n_out, replace=False)
    K = np.concatenate([K_in, K_out]).astype(int)

    noise = np.zeros(m)
    if noise_bound > 0:
        g = np.random.default_rng(noi_ss).standard_normal(m)
        noise = g * (noise_bound / np.linalg.norm(g))
        nz = np.linalg.norm(noise)
        if nz > noise_bound:
            noise *= noise_bound / nz
    b = A @ truth + noise

    gen = {
        "m": m,
        "n": n,
        "k": k,
        "rho": float(rho),
        "alpha": float(alpha),
        "amplitude": amplitude,
        "matrix_kind": matrix_kind,
        "mix": float(mix),
        "matrix_seed": None if matrix_seed is None else int(matrix_seed),
    }
    return make_instance(A, b, truth, K, w, lam, noise_bound, k, noise, int(seed), gen)
