import math

import mpmath as mp
import numpy as np
import pytest
import sympy as sp
from hypothesis import assume, given, settings, strategies as st

from wbpdn.bounds import (
    applicable_cases,
    beta_sharp_bounds,
    case_estimate,
    compute_betas,
    compute_d,
    compute_eta,
    compute_theta,
    f_polynomials,
    geometry,
    theorem_bound,
)
from wbpdn.errors import CertificateError, InputError
from wbpdn.model import SupportPrior, make_instance
from wbpdn.ripcert import condition_threshold

mp.mp.dps = 40

unit = st.floats(0, 1, allow_nan=False)


# -- independent symbolic oracle ------------------------------------------

_w, _a, _rho, _t, _dl, _k, _lam, _eps = sp.symbols("w alpha rho t delta k lam eps", nonnegative=True)


def _sym_constants(w, alpha, rho, t, delta, k, lam, eps):
    """Exact evaluation of every constant from rational inputs."""
    w, alpha, rho, t, delta, k, lam, eps = map(sp.nsimplify, (w, alpha, rho, t, delta, k, lam, eps))
    d = sp.Integer(1) if w == 1 else 1 - alpha * rho + sp.Max(alpha, 1 - alpha) * rho
    th = w + (1 - w) * sp.sqrt(1 + rho - 2 * alpha * rho)
    r, r1 = sp.sqrt(t - d), sp.sqrt(t - 1)
    b1 = 2 / ((1 - delta) * sp.sqrt(1 + delta))
    b2 = delta / sp.sqrt(1 - delta**2)

    def f(u):
        return (
            th * sp.sqrt(d) * u**2 + r * (sp.sqrt(d) + 2 * th) * u + (2 + th) * r * r1,
            sp.sqrt(d) * u**2 + 2 * (r + r1) * u + r * r1,
            2 * (r * sp.sqrt(d) - th * (r1 - r)) * u + (4 + th) * r * r1,
        )

    f1, f2, f3 = f(b2)
    sk = sp.sqrt(k)
    X = th * sk * b1 * lam + eps
    C1 = (2 * sk * b1 * f1 * lam + 2 * f2 * eps) / (r * sk * (r - th * b2) * X)
    C2 = (sk * b1 * f3 * lam + (sp.sqrt(d) * b2**2 + f2) * eps) * X / (r1 * sk * (r - th * b2) * lam)
    thr = sp.sqrt((t - d) / (t - d + th**2))
    S = t - d + th**2
    b1s = 2 / th**2 * S ** sp.Rational(3, 4) * sp.sqrt(sp.sqrt(S) + r)
    b2s = r / th
    F1s, F2s, F3s = f(b2s)
    F30 = f(0)[2]
    star = 0 if sp.N(F30 - F3s, 50) <= 0 else b2s
    F3star = f(star)[2]
    C3 = (2 * b1s * F1s + 2 * F2s) / (2 * r * th**2)
    C4 = (th * b1s + 1) * (b1s * F3star + sp.sqrt(d) * b2s**2 + F2s) / (r1 * th)
    C5 = (2 * b1s * F1s + 2 * F2s) / (r * th * (2 * th + 1))
    C6 = 2 * F1s / (r * th**2)
    C7 = b1s**2 * F3star / r1
    return dict(d=d, theta=th, beta1=b1, beta2=b2, f1=f1, f2=f2, f3=f3, C1=C1, C2=C2, thr=thr,
                beta1_sharp=b1s, beta2_sharp=b2s, Ct3=C3, Ct4=C4, Ct5=C5, Ct6=C6, Ct7=C7)


def _num(expr):
    return float(sp.N(expr, 30))


def _inst(w, alpha, rho, k, lam, eps, truth=None):
    """Instance on the identity with a prior realizing (alpha, rho) for the given k."""
    n = 3 * k + int(math.ceil(rho * k)) + 2
    if truth is None:
        truth = np.zeros(n)
        truth[:k] = 1.0
    n_K = int(round(rho * k))
    n_in = int(round(alpha * rho * k))
    K = list(range(n_in)) + list(range(k, k + n_K - n_in))
    inst = make_instance(np.eye(n), np.asarray(truth, float), truth, K, w, lam, eps, k)
    assert (inst.prior.alpha, inst.prior.rho) == pytest.approx((alpha, rho)) or n_K == 0
    return inst


# -- d, theta, eta ---------------------------------------------------------

def test_d_examples():
    assert compute_d(1.0, 0.2, 3.0) == 1.0
    assert compute_d(0.5, 0.5, 1.0) == 1.0
    assert compute_d(0.3, 0.3, 1.0) == pytest.approx(1.4, rel=1e-15)
    assert _num(_sym_constants(0.3, 0.3, 1, 2, 0, 1, 1, 1)["d"]) == pytest.approx(1.4, rel=1e-15)


def test_theta_examples():
    assert compute_theta(1.0, 0.3, 2.0) == 1.0
    assert compute_theta(0.0, 1.0, 1.0) == 0.0
    exact = mp.mpf("0.3") + mp.mpf("0.7") * mp.sqrt(mp.mpf("0.4"))
    assert compute_theta(0.3, 0.8, 1.0) == pytest.approx(float(exact), rel=1e-15)
    assert compute_theta(0.3, 0.8, 1.0) == pytest.approx(0.74272, abs=5e-6)


def test_theta_rejects_negative_radicand():
    with pytest.raises(InputError):
        compute_theta(0.5, 1.0, 2.0)
    for bad in ((1.2, 0.5, 1.0), (0.5, -0.1, 1.0), (0.5, 0.5, -1.0)):
        with pytest.raises(InputError):
            compute_d(*bad)


@given(unit, unit, st.floats(0, 4))
def test_unit_weight_geometry(alpha, rho_frac, rho):
    assume(1 + rho - 2 * alpha * rho >= 0)
    assert compute_d(1.0, alpha, rho) == 1.0
    assert compute_theta(1.0, alpha, rho) == 1.0


@given(st.floats(0, 0.999), unit, st.floats(0, 4))
def test_d_at_least_one(w, alpha, rho):
    assert compute_d(w, alpha, rho) >= 1.0


def test_eta_examples():
    truth = np.array([1.0, 1.0, 0.1, 0.1])
    prior = SupportPrior((0, 2), (0, 1), 2, 1.0, 0.5)
    assert compute_eta(truth, prior, 0.5) == pytest.approx(0.15, rel=1e-15)
    assert compute_eta(truth, prior, 1.0) == pytest.approx(0.2, rel=1e-15)
    sparse = np.array([1.0, -2.0, 0.0, 0.0])
    assert compute_eta(sparse, prior, 0.3) == 0.0


# -- betas -----------------------------------------------------------------

def test_beta_examples():
    bp = compute_betas(0.0)
    assert (bp.beta1, bp.beta2) == (2.0, 0.0)
    assert compute_betas(0.6).beta2 == pytest.approx(0.75, rel=1e-15)
    bp = compute_betas(0.5)
    assert bp.beta1 == pytest.approx(float(2 / (mp.mpf("0.5") * mp.sqrt(mp.mpf("1.5")))), rel=1e-15)
    assert bp.beta1 == pytest.approx(3.26599, abs=5e-6)
    assert bp.beta2 == pytest.approx(0.57735, abs=5e-6)
    with pytest.raises(InputError):
        compute_betas(1.0)
    with pytest.raises(InputError):
        compute_betas(-0.1)


def test_sharp_examples():
    b1s, b2s = beta_sharp_bounds(2, 1, 1)
    assert b2s == 1.0
    exact = 2 * mp.power(2, mp.mpf(3) / 4) * mp.sqrt(mp.sqrt(2) + 1)
    assert b1s == pytest.approx(float(exact), rel=1e-14)
    assert b1s == pytest.approx(5.2263, abs=5e-5)
    assert beta_sharp_bounds(5, 1, 1)[1] == 2.0
    with pytest.raises(InputError):
        beta_sharp_bounds(2, 1, 0)
    with pytest.raises(InputError):
        beta_sharp_bounds(1, 1, 1)


def test_sharp_bounds_are_betas_at_threshold():
    # the sharp values are beta1, beta2 evaluated at delta = threshold
    for t, d, th in [(2, 1, 1), (3, 1.2, 0.6), (1.7, 1.0, 1.8)]:
        thr = condition_threshold(t, d, th)
        bp = compute_betas(thr)
        b1s, b2s = beta_sharp_bounds(t, d, th)
        assert bp.beta1 == pytest.approx(b1s, rel=1e-12)
        assert bp.beta2 == pytest.approx(b2s, rel=1e-12)


def test_betas_increasing():
    grid = np.linspace(0.01, 0.99, 99)
    b1 = [compute_betas(x).beta1 for x in grid]
    b2 = [compute_betas(x).beta2 for x in grid]
    assert np.all(np.diff(b1) > 0) and np.all(np.diff(b2) > 0)
    assert min(b1) > 2


# -- f polynomials ---------------------------------------------------------

def test_f_examples():
    g = geometry(1.0, 1.0, 1.0, 2.0)
    assert f_polynomials(0.0, g) == (3.0, 1.0, 5.0)
    f1, f2, f3 = f_polynomials(1.0, g)
    assert (f1, f2, f3) == (7.0, 6.0, 7.0)


def test_geometry_requires_t_above_d():
    with pytest.raises(InputError):
        geometry(0.3, 0.3, 1.0, 1.4)
    g = geometry(0.3, 0.3, 1.0, 2.0)
    assert g.r == pytest.approx(math.sqrt(0.6)) and g.r1 == 1.0


# -- theorem constants -----------------------------------------------------

def test_c2_hand_value():
    inst = _inst(1.0, 1.0, 1.0, 1, 1.0, 1.0)
    bc = theorem_bound(inst, 2.0, 0.0)
    sym = _sym_constants(1, 1, 1, 2, 0, 1, 1, 1)
    assert sp.simplify(sym["C2"] - 33) == 0
    assert bc.C2 == 33.0
    assert bc.eta == 0.0 and bc.bound_value == bc.C2


@pytest.mark.parametrize(
    "w,alpha,rho,t,frac,k,lam,eps",
    [
        (0.5, 1.0, 1.0, 2.0, 0.5, 1, 0.1, 0.1),
        (0.3, 0.5, 2.0, 3.0, 0.9, 2, 0.05, 0.2),
        (0.0, 0.75, 1.0, 2.5, 0.3, 4, 0.2, 0.0),
        (1.0, 1 / 3, 1.0, 1.5, 0.99, 3, 0.02, 0.01),
        (0.8, 0.0, 0.5, 4.0, 0.7, 2, 1.0, 0.5),
    ],
)
def test_theorem_constants_match_symbolic(w, alpha, rho, t, frac, k, lam, eps):
    g = geometry(w, alpha, rho, t)
    delta = round(frac * condition_threshold(t, g.d, g.theta), 6)
    inst = _inst(w, alpha, rho, k, lam, eps)
    bc = theorem_bound(inst, t, delta)
    sym = _sym_constants(w, alpha, rho, t, delta, k, lam, eps)
    for name in ("f1", "f2", "f3", "C1", "C2"):
        assert getattr(bc, name) == pytest.approx(_num(sym[name]), rel=1e-12), name
    assert bc.betas.beta1 == pytest.approx(_num(sym["beta1"]), rel=1e-13)
    assert bc.threshold == pytest.approx(_num(sym["thr"]), rel=1e-13)


def test_c2_display_agrees_with_split_form():
    # C2 written as the two separate terms lam-part + eps-part, over the common gap
    w, alpha, rho, t, delta, k, lam, eps = 0.4, 0.5, 1.0, 2.5, 0.3, 2, 0.1, 0.07
    bc = theorem_bound(_inst(w, alpha, rho, k, lam, eps), t, delta)
    g, b1, b2 = bc.geom, bc.betas.beta1, bc.betas.beta2
    X = g.theta * math.sqrt(k) * b1 * lam + eps
    lam_part = b1 * bc.f3 * X / (g.r1 * (g.r - g.theta * b2))
    eps_part = (math.sqrt(g.d) * b2**2 + bc.f2) * eps * X / (g.r1 * math.sqrt(k) * (g.r - g.theta * b2) * lam)
    assert bc.C2 == pytest.approx(lam_part + eps_part, rel=1e-13)


def test_tail_term_enters_bound():
    truth = np.array([1.0, 0.0, 0.0, 0.05, 0.0, 0.0, 0.0])
    inst = make_instance(np.eye(7), truth, truth, [0], 0.5, 0.1, 0.0, 1)
    bc = theorem_bound(inst, 2.0, 0.2)
    # index 3 lies outside both E and K, so both tail terms see it
    assert bc.eta == pytest.approx(0.5 * 0.05 + 0.5 * 0.05)
    assert bc.bound_value == pytest.approx(bc.C1 * bc.eta + bc.C2)
    assert bc.bound_value > bc.C2 >= 0


def test_theorem_requires_condition():
    inst = _inst(1.0, 1.0, 1.0, 1, 0.1, 0.1)
    with pytest.raises(CertificateError):
        theorem_bound(inst, 2.0, math.sqrt(0.5))
    with pytest.raises(InputError):
        theorem_bound(_inst(0.3, 0.0, 1.0, 1, 0.1, 0.1), 1.2, 0.1)  # d = 2


def test_theta_zero_edge():
    inst = _inst(0.0, 1.0, 1.0, 1, 0.1, 0.0)
    bc = theorem_bound(inst, 2.0, 0.5)
    assert math.isinf(bc.C1) and bc.bound_value == bc.C2 and math.isfinite(bc.C2)
    ce = case_estimate(3, inst, 2.0, 0.5)
    assert not ce.applicable and ce.bound_value is None


@settings(max_examples=200, deadline=None)
@given(
    w=unit,
    prior=st.sampled_from([(1.0, 1.0), (0.5, 1.0), (0.0, 1.0), (0.25, 2.0), (0.5, 2.0), (1.0, 0.5)]),
    dt=st.floats(0.05, 3), frac=st.floats(0, 0.999),
    lam=st.floats(1e-3, 2), eps=st.floats(0, 1),
)
def test_bound_nonnegative(w, prior, dt, frac, lam, eps):
    alpha, rho = prior
    g = geometry(w, alpha, rho, compute_d(w, alpha, rho) + dt)
    inst = _inst(w, alpha, rho, 2, lam, eps)
    bc = theorem_bound(inst, g.t, frac * condition_threshold(g.t, g.d, g.theta))
    assert bc.bound_value >= 0 and bc.C2 >= 0


# -- case estimates --------------------------------------------------------

def _case_inst(case, w, alpha, rho, k=1):
    if case == 1:
        return _inst(w, alpha, rho, k, 0.1, 0.1)
    if case == 2:
        return _inst(w, alpha, rho, k, 0.1 / math.sqrt(k), 0.1)
    return _inst(w, alpha, rho, k, 0.1, 0.0)


def test_applicable_cases():
    assert applicable_cases(_inst(1.0, 1.0, 1.0, 1, 0.1, 0.1)) == [1, 2]
    assert applicable_cases(_inst(1.0, 1.0, 1.0, 4, 0.05, 0.1)) == [2]
    assert applicable_cases(_inst(1.0, 1.0, 1.0, 4, 0.05, 0.0)) == [3]
    assert applicable_cases(_inst(1.0, 1.0, 1.0, 4, 0.05, 0.2)) == []
    with pytest.raises(InputError):
        case_estimate(3, _inst(1.0, 1.0, 1.0, 4, 0.05, 0.2), 2.0, 0.1)
    with pytest.raises(InputError):
        case_estimate(4, _inst(1.0, 1.0, 1.0, 4, 0.05, 0.0), 2.0, 0.1)


def test_star_selection_two_point_set():
    # t=2, d=1, theta=1: f3 is constant (5) on {0, 1}; ties resolve to 0
    ce = case_estimate(1, _inst(1.0, 1.0, 1.0, 1, 0.1, 0.1), 2.0, 0.3)
    assert ce.constants["beta2_sharp"] == 1.0
    assert ce.constants["beta2_star"] == 0.0
    # w=0.5, alpha=1, rho=1, t=3: f3 grows in beta2, so argmin is 0 and argmax is beta2_sharp
    inst = _inst(0.5, 1.0, 1.0, 1, 0.1, 0.1)
    lo = case_estimate(1, inst, 3.0, 0.3, "argmin").constants
    hi = case_estimate(1, inst, 3.0, 0.3, "argmax").constants
    assert lo["beta2_star"] == 0.0 and hi["beta2_star"] == hi["beta2_sharp"]
    with pytest.raises(InputError):
        case_estimate(1, inst, 3.0, 0.3, "median")


@pytest.mark.parametrize("case", [1, 2, 3])
@pytest.mark.parametrize("w,alpha,rho,t,k", [(0.5, 1.0, 1.0, 2.0, 1), (0.3, 0.5, 2.0, 3.0, 2), (1.0, 1.0, 1.0, 1.5, 4)])
def test_case_constants_match_symbolic(case, w, alpha, rho, t, k):
    inst = _case_inst(case, w, alpha, rho, k)
    g = geometry(w, alpha, rho, t)
    delta = round(0.6 * condition_threshold(t, g.d, g.theta), 6)
    ce = case_estimate(case, inst, t, delta)
    sym = _sym_constants(w, alpha, rho, t, delta, k, inst.lam, inst.eps)
    for name, val in ce.constants.items():
        if name.startswith("Ct") and name in sym:
            assert val == pytest.approx(_num(sym[name]), rel=1e-12), name
    thr = _num(sym["thr"])
    sk = math.sqrt(k)
    if case == 1:
        expect = sk * _num(sym["Ct4"]) * inst.lam / (thr - delta)
    elif case == 2:
        expect = _num(sym["Ct4"]) * inst.eps / (thr - delta)
    else:
        expect = sk * _num(sym["Ct7"]) * inst.lam / (thr - delta)
    assert ce.bound_value == pytest.approx(expect, rel=1e-12)


def test_case3_vanishes_with_lambda():
    # exactly sparse truth: the estimate is linear in lambda and tends to 0
    vals = [case_estimate(3, _inst(0.5, 1.0, 1.0, 1, lam, 0.0), 2.0, 0.3).bound_value for lam in (1e-2, 1e-6, 1e-12)]
    assert vals[1] == pytest.approx(vals[0] * 1e-4, rel=1e-12)
    assert vals[2] == pytest.approx(vals[0] * 1e-10, rel=1e-12)


def _dominance_ratios(star_rule, ts):
    worst = math.inf
    for t in ts:
        for w in (0.0, 0.25, 0.5, 0.75, 1.0):
            for alpha, rho in ((1.0, 1.0), (0.5, 1.0), (0.25, 2.0), (0.5, 2.0), (0.0, 1.0)):
                d = compute_d(w, alpha, rho)
                if not t > d or compute_theta(w, alpha, rho) == 0:
                    continue
                thr = condition_threshold(t, d, compute_theta(w, alpha, rho))
                for case in (1, 2, 3):
                    inst = _case_inst(case, w, alpha, rho, 2)
                    for frac in (0.01, 0.3, 0.7, 0.95, 0.999):
                        tb = theorem_bound(inst, t, frac * thr).bound_value
                        ce = case_estimate(case, inst, t, frac * thr, star_rule).bound_value
                        worst = min(worst, ce / tb)
    return worst


def test_cases_dominate_theorem_for_moderate_t():
    assert _dominance_ratios("argmin", (1.5, 2.0, 3.0)) >= 1.0


def test_argmax_star_dominates_near_boundary():
    assert _dominance_ratios("argmax", (1.01, 1.1, 1.5, 2.0, 3.0)) >= 1.0


def test_argmin_star_can_undercut_theorem_near_t_equal_d():
    # with w=0.5, alpha=rho=1 (d=1, theta=0.5) and t close to d, f3 increases in
    # beta2 and picking the minimizer drops below the general bound
    inst = _case_inst(3, 0.5, 1.0, 1.0)
    thr = condition_threshold(1.1, 1.0, 0.5)
    delta = 0.999 * thr
    tb = theorem_bound(inst, 1.1, delta).bound_value
    assert case_estimate(3, inst, 1.1, delta, "argmin").bound_value < tb
    assert case_estimate(3, inst, 1.1, delta, "argmax").bound_value >= tb
