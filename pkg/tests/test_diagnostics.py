import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpca.convex import ConvexOptions, ConvexSolution, KktReport, default_lambda_tau, solve_convex
from rpca.data import ModelParams, assemble, generate
from rpca.diagnostics import (
    check_injectivity, check_near_isometry, check_noise_bound, check_operator_concentration, cvx_ncvx_distance,
    error_report, support_decomposition, tangent_probe,
)
from rpca.errors import ParameterError
from rpca.linalg import IndexMask, TangentSpace
from rpca.nonconvex import NcvxOptions, NcvxResult, NcvxState, run
from rpca.trace import SolveTrace


def gt_of(n=30, r=3, p=1.0, rho_s=0.1, sigma=0.01, seed=0, trial=0):
    return generate(ModelParams(n1=n, n2=n, r=r, p=p, rho_s=rho_s, sigma=sigma, seed=seed), trial)


def test_error_report_zero_at_truth():
    gt = gt_of()
    rep = error_report(gt.Lstar, gt.Sstar, gt)
    assert all(v == 0 for v in rep.as_dict().values())


def test_error_report_single_entry():
    gt = gt_of()
    D = np.zeros_like(gt.Lstar)
    D[0, 0] = 1e-3
    rep = error_report(gt.Lstar + D, gt.Sstar, gt)
    assert rep.fro == pytest.approx(1e-3) and rep.spectral == pytest.approx(1e-3)
    assert rep.linf == pytest.approx(1e-3) and rep.two_inf == pytest.approx(1e-3)
    assert rep.rel_fro == pytest.approx(1e-3 / np.linalg.norm(gt.Lstar))
    with pytest.raises(ParameterError):
        error_report(gt.Lstar[:-1], gt.Sstar, gt)


@settings(max_examples=30)
@given(st.integers(0, 2**31))
def test_error_report_nonnegative(seed):
    gt = gt_of(n=8, r=2)
    rng = np.random.default_rng(seed)
    rep = error_report(rng.standard_normal((8, 8)), rng.standard_normal((8, 8)), gt)
    assert all(v >= 0 for v in rep.as_dict().values())


# tangent probes

def tangent(n=40, r=3, seed=0):
    gt = gt_of(n=n, r=r, seed=seed)
    return TangentSpace.at(gt.Lstar, r)


def test_probe_lies_in_tangent_space():
    T = tangent()
    H = tangent_probe(T, np.random.default_rng(0))
    Pu, Pv = T.U @ T.U.T, T.V @ T.V.T
    perp = H - Pu @ H - H @ Pv + Pu @ H @ Pv
    assert np.linalg.norm(perp) <= 1e-12 * np.linalg.norm(H)
    with pytest.raises(ParameterError):
        tangent_probe(TangentSpace(np.zeros((4, 0)), np.zeros((4, 0))), np.random.default_rng(0))


def test_isometry_full_and_empty_masks():
    T = tangent()
    rng = np.random.default_rng(1)
    full = check_near_isometry(T, IndexMask.full(40, 40), 1.0, 20, rng)
    assert full["min_ratio"] == pytest.approx(1.0, rel=1e-14) and full["max_ratio"] == pytest.approx(1.0, rel=1e-14)
    empty = check_near_isometry(T, IndexMask.empty(40, 40), 0.5, 5, rng)
    assert empty == {"min_ratio": 0.0, "max_ratio": 0.0}
    with pytest.raises(ParameterError):
        check_near_isometry(T, IndexMask.full(40, 40), 1.0, 0, rng)


def test_injectivity_examples():
    T = tangent()
    rng = np.random.default_rng(2)
    out = check_injectivity(T, IndexMask.full(40, 40), IndexMask.empty(40, 40), 1.0, 2.0, 10, rng)
    assert out["c_lower"] == pytest.approx(1.0, rel=1e-14)
    assert out["c_upper"] == 0.0
    assert out["ref_lower"] == 1 / 64 and out["ref_upper"] == 1 / 256


def test_injectivity_desk_regime():
    gt = gt_of(n=200, r=5, p=0.2, rho_s=0.1, sigma=1e-3)
    T = TangentSpace.at(gt.Lstar, 5)
    out = check_injectivity(T, gt.omega_obs, gt.omega_star, 0.2, gt.kappa, 30, np.random.default_rng(3))
    assert out["c_lower"] >= out["ref_lower"]
    assert out["c_upper"] <= out["c_lower"] / 4


def test_concentration_examples():
    rng = np.random.default_rng(4)
    A, B = rng.standard_normal((20, 3)), rng.standard_normal((20, 3))
    assert check_operator_concentration(A, B, IndexMask.full(20, 20), 1.0) == pytest.approx(0.0, abs=1e-13)
    assert check_operator_concentration(np.zeros((20, 3)), B, IndexMask.full(20, 20), 0.3) == 0.0


def test_concentration_regression_bound():
    n, rho0 = 300, 0.2
    rng = np.random.default_rng(5)
    A = rng.standard_normal((n, 5))
    B = rng.standard_normal((n, 5))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    B /= np.linalg.norm(B, axis=1, keepdims=True)
    mask = IndexMask(rng.random((n, n)) < rho0)
    assert check_operator_concentration(A, B, mask, rho0) <= 10


def test_noise_bound_examples():
    out = check_noise_bound(np.zeros((5, 5)), IndexMask.full(5, 5), 1.0, 1.0)
    assert out == {"op_ratio": 0.0, "fro_ratio": 0.0}
    E = np.random.default_rng(6).standard_normal((300, 300))
    out = check_noise_bound(E, IndexMask.full(300, 300), 1.0, 1.0)
    assert 1.5 <= out["op_ratio"] <= 2.5
    assert out["fro_ratio"] == pytest.approx(1.0, abs=0.02)


def _cvx(L, S):
    rep = KktReport(0.0, 0.0, 0.0, 0.0, 0)
    return ConvexSolution(L, S, SolveTrace(("iter",)), True, rep)


def _ncvx(X, Y, S):
    state = NcvxState(X, Y, S)
    return NcvxResult(state, SolveTrace(("iter",)), 0, 0.0)


def test_distance_examples():
    rng = np.random.default_rng(7)
    X, Y, S = rng.standard_normal((6, 2)), rng.standard_normal((5, 2)), rng.standard_normal((6, 5))
    assert cvx_ncvx_distance(_cvx(X @ Y.T, S), _ncvx(X, Y, S)) == {"dL_fro": 0.0, "dS_fro": 0.0}
    z = cvx_ncvx_distance(_cvx(np.zeros((6, 5)), np.zeros((6, 5))), _ncvx(np.zeros((6, 2)), np.zeros((5, 2)), np.zeros((6, 5))))
    assert z == {"dL_fro": 0.0, "dS_fro": 0.0}


def test_support_decomposition_trivial_case():
    gt = gt_of(n=12, r=2, p=0.5)
    obs = assemble(gt)
    L = gt.Lstar
    tau = 2 * np.abs(obs.M - L).max() + 1
    Z = np.zeros_like(L)
    d = support_decomposition(L, Z, obs, gt, tau, Z, Z)
    assert d["omega"].count == 0 and d["omega1"] == obs.omega_obs
    assert all(d["inclusions"].values())


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.floats(0.01, 2.0))
def test_omega2_disjoint_from_support(seed, tau):
    # an entry with |residual| <= tau has a zero soft-threshold, so omega2 never meets supp(S)
    from rpca.prox import soft_threshold

    rng = np.random.default_rng(seed)
    gt = gt_of(n=10, r=2, p=0.7)
    obs = assemble(gt)
    L = rng.standard_normal((10, 10))
    S = soft_threshold(obs.M - L, tau, obs.omega_obs)
    d = support_decomposition(L, S, obs, gt, tau, rng.standard_normal((10, 10)), rng.standard_normal((10, 10)))
    assert d["inclusions"]["omega2_disjoint_omega"]


@pytest.fixture(scope="module")
def desk_pair():
    # full observation and tau = 3 sigma sqrt(log n): the convex solution stays rank r here
    n, sigma = 200, 1e-3
    gt = gt_of(n=n, r=5, p=1.0, rho_s=0.1, sigma=sigma)
    obs = assemble(gt)
    lam, _ = default_lambda_tau(n, n, 1.0, sigma)
    tau = 3 * sigma * math.sqrt(math.log(n))
    cvx = solve_convex(obs, lam, tau, ConvexOptions(max_iters=20_000, rel_obj_tol=0.0, kkt_tol=1e-8))
    ncvx = run(obs, lam, tau, NcvxOptions(eta=0.5, max_iters=20_000), gt=gt)
    s = ncvx.best_state
    d = support_decomposition(s.L, s.S, obs, gt, tau, cvx.L - s.L, cvx.S - s.S)
    return gt, obs, cvx, ncvx, d


def test_desk_pair_first_two_inclusions(desk_pair):
    gt, obs, cvx, ncvx, d = desk_pair
    assert cvx.converged and np.linalg.matrix_rank(cvx.L, tol=1e-8) == 5
    assert d["gap_inf"] <= 1e-9
    assert d["inclusions"]["omega2_disjoint_omega"]
    assert d["inclusions"]["unsupported_in_omega1_or_omega2"]


def test_desk_pair_support_nearly_inside_truth(desk_pair):
    gt, obs, cvx, ncvx, d = desk_pair
    stray = ((d["omega"] | d["omega2"]) - gt.omega_star).count
    assert stray <= 1e-3 * obs.omega_obs.count


@pytest.mark.xfail(strict=True, reason="a few noise entries cross tau at n = 200; see the decisions ledger")
def test_desk_pair_support_inside_truth(desk_pair):
    gt, obs, cvx, ncvx, d = desk_pair
    assert d["inclusions"]["omega_or_omega2_in_star"]
