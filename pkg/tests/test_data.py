import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpca.data import (
    ModelParams, ObservationSet, Outliers, assemble, fixed_sign_target, gen_low_rank, gen_mask,
    gen_mask_augmented, gen_noise, gen_outliers, generate, load_ground_truth, load_observations,
    measure_incoherence, save_ground_truth, substream,
)
from rpca.errors import ParameterError
from rpca.io import write_mask, write_matrix
from rpca.linalg import IndexMask, TruncatedSvd, norm, truncated_svd


def test_params_validation():
    for bad in (dict(r=0), dict(r=300), dict(p=0.0), dict(p=1.5), dict(rho_s=1.0), dict(sigma=-1.0),
                dict(sign_mode="neg"), dict(spectrum=(1.0,)), dict(rho_aug=0.05)):
        with pytest.raises(ParameterError):
            ModelParams(**bad)


def test_params_dict_roundtrip():
    prm = ModelParams(n1=30, n2=20, r=3, spectrum=(3.0, 2.0, 1.0), outliers=Outliers("constant", 0.5))
    assert ModelParams.from_dict(prm.to_dict()) == prm


# low-rank factors

def test_full_rank_identity_spectrum_is_orthogonal():
    X, Y, L = gen_low_rank(ModelParams(n1=6, n2=6, r=6), np.random.default_rng(0))
    np.testing.assert_allclose(np.linalg.svd(L, compute_uv=False), np.ones(6), atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_factors_balanced_and_consistent(seed, r):
    prm = ModelParams(n1=9, n2=7, r=r, spectrum=tuple(np.linspace(2, 1, r)))
    X, Y, L = gen_low_rank(prm, np.random.default_rng(seed))
    np.testing.assert_allclose(X.T @ X - Y.T @ Y, 0, atol=1e-10)
    np.testing.assert_allclose(L, X @ Y.T, atol=1e-12)
    assert np.linalg.matrix_rank(L) == r
    mu, _ = measure_incoherence(truncated_svd(L, r))
    assert mu >= 1 - 1e-12


def test_incoherence_median_baseline():
    # regression baseline: median over 200 draws at n = 50, r = 5, frozen from the first run
    mus = [
        measure_incoherence(truncated_svd(gen_low_rank(ModelParams(n1=50, n2=50, r=5), substream(0, k, "factors"))[2], 5))[0]
        for k in range(200)
    ]
    assert np.median(mus) == pytest.approx(2.912021181611288, rel=1e-9)


def test_incoherence_examples():
    n, r = 10, 3
    U = np.eye(n)[:, :r]
    mu, kappa = measure_incoherence(TruncatedSvd(U, np.ones(r), U))
    assert mu == pytest.approx(n / r)
    assert kappa == 1.0
    _, kappa0 = measure_incoherence(TruncatedSvd(U, np.array([1.0, 0.5, 0.0]), U))
    assert kappa0 == math.inf
    rng = np.random.default_rng(4)
    Q = np.linalg.qr(rng.standard_normal((100, 4)))[0]
    mu, _ = measure_incoherence(TruncatedSvd(Q, np.ones(4), Q))
    assert mu == pytest.approx(100 * max(np.sum(Q**2, axis=1)) / 4)


# masks

def test_mask_full_and_degenerate():
    rng = np.random.default_rng(0)
    assert gen_mask(7, 5, 1.0, rng).count == 35
    assert gen_mask(10, 10, 1e-9, rng).count == 0
    with pytest.raises(ParameterError):
        gen_mask(3, 3, 0.0, rng)


def test_mask_rate_binomial():
    rng = np.random.default_rng(1)
    total = sum(gen_mask(100, 100, 0.5, rng).count for _ in range(10_000))
    cells = 10_000 * 100 * 100
    se = math.sqrt(0.25 / cells)
    assert abs(total / cells - 0.5) <= 3 * se


# outliers

def test_no_outliers_when_rate_zero():
    S, star = gen_outliers(IndexMask.full(5, 5), 0.0, Outliers(), "random", np.random.default_rng(0))
    assert star.count == 0 and not S.any()


def test_gaussian_outliers_have_variance_ten():
    S, star = gen_outliers(IndexMask.full(400, 400), 0.1, Outliers("gaussian", 10.0), "random",
                           np.random.default_rng(2))
    vals = S[star.dense]
    assert star.count == pytest.approx(16_000, rel=0.05)
    assert np.var(vals) == pytest.approx(10.0, rel=0.05)
    assert abs(vals.mean()) < 4 * math.sqrt(10 / vals.size)


def test_random_signs_symmetric():
    S, star = gen_outliers(IndexMask.full(1000, 1000), 0.1, Outliers("constant", 2.0), "random",
                           np.random.default_rng(3))
    vals = S[star.dense]
    assert vals.size >= 1e4
    assert abs(vals.mean()) <= 3 * 2.0 / math.sqrt(vals.size)
    pos = (vals > 0).mean()
    assert abs(pos - 0.5) <= 3 * math.sqrt(0.25 / vals.size)


def test_fixed_sign_and_support_nesting():
    obs = gen_mask(50, 40, 0.3, np.random.default_rng(5))
    S, star = gen_outliers(obs, 0.2, Outliers("constant", 0.5), "fixed_positive", np.random.default_rng(6))
    assert star.issubset(obs)
    assert np.all(S[star.dense] == 0.5)
    assert np.all(S[~star.dense] == 0)


def test_sign_mode_keeps_locations_paired():
    obs = IndexMask.full(30, 30)
    _, a = gen_outliers(obs, 0.1, Outliers("constant", 1.0), "random", substream(9, 0, "outliers"))
    _, b = gen_outliers(obs, 0.1, Outliers("constant", 1.0), "fixed_positive", substream(9, 0, "outliers"))
    assert a == b


# noise

def test_noise_examples():
    assert not gen_noise(4, 4, 0.0, np.random.default_rng(0)).any()
    E = gen_noise(200, 200, 1.0, np.random.default_rng(7))
    assert 1.8 <= norm(E, "spectral") / math.sqrt(200) <= 2.2
    assert abs(E.mean()) <= 3 * 1.0 / 200
    R = gen_noise(20, 20, 0.5, np.random.default_rng(8), "rademacher")
    assert set(np.unique(R)) == {-0.5, 0.5}
    with pytest.raises(ParameterError):
        gen_noise(2, 2, -1.0, np.random.default_rng(0))


# augmented model

def test_augmented_edge_cases():
    rng = np.random.default_rng(0)
    obs, aug, star = gen_mask_augmented(40, 40, 0.5, 0.2, 0.2, rng)
    assert star == aug and aug.issubset(obs)
    obs, aug, star = gen_mask_augmented(40, 40, 0.5, 1.0, 0.1, rng)
    assert aug == obs and star.issubset(aug)
    with pytest.raises(ParameterError):
        gen_mask_augmented(4, 4, 0.5, 0.1, 0.2, rng)


def test_augmented_marginal_matches_direct_model():
    p, rho_aug, rho_s = 0.3, 0.5, 0.1
    obs, aug, star = gen_mask_augmented(317, 317, p, rho_aug, rho_s, np.random.default_rng(10))
    cells = 317 * 317
    assert cells >= 1e5
    freq = star.count / cells
    target = p * rho_s
    assert abs(freq - target) <= 3 * math.sqrt(target * (1 - target) / cells)
    assert star.issubset(aug) and aug.issubset(obs)


# full instances

def test_generate_invariants_and_determinism():
    prm = ModelParams(n1=40, n2=30, r=3, p=0.6, rho_s=0.2, sigma=0.01, seed=123)
    a, b = generate(prm, 2), generate(prm, 2)
    for name in ("Xstar", "Ystar", "Lstar", "Sstar", "E"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.omega_obs == b.omega_obs and a.omega_star == b.omega_star
    np.testing.assert_allclose(a.Lstar, a.Xstar @ a.Ystar.T, atol=1e-10)
    assert a.omega_star.issubset(a.omega_obs)
    assert (a.Sstar != 0).sum() == a.omega_star.count and not a.Sstar[~a.omega_star.dense].any()
    assert np.linalg.matrix_rank(a.Lstar) == 3
    assert a.kappa == pytest.approx(1.0) and a.sigma_max == pytest.approx(1.0)
    c = generate(prm, 3)
    assert not np.array_equal(a.Lstar, c.Lstar)


def test_trials_share_draws_across_noise_level():
    a = generate(ModelParams(n1=20, n2=20, r=2, p=0.5, sigma=1e-3), 1)
    b = generate(ModelParams(n1=20, n2=20, r=2, p=0.5, sigma=1e-2), 1)
    assert np.array_equal(a.Lstar, b.Lstar) and np.array_equal(a.Sstar, b.Sstar)
    np.testing.assert_allclose(10 * a.E, b.E, rtol=1e-15)


def test_generate_augmented_nesting():
    gt = generate(ModelParams(n1=60, n2=60, r=2, p=0.5, rho_s=0.1, rho_aug=0.3), 0)
    assert gt.omega_star.issubset(gt.omega_aug) and gt.omega_aug.issubset(gt.omega_obs)


def test_assemble_examples():
    gt = generate(ModelParams(n1=15, n2=12, r=2, p=1.0, rho_s=0.0, sigma=0.0), 0)
    np.testing.assert_array_equal(assemble(gt).M, gt.Lstar)
    gt = generate(ModelParams(n1=30, n2=30, r=2, p=0.4, rho_s=0.2, sigma=0.1), 0)
    M = assemble(gt).M
    rng = np.random.default_rng(0)
    for i, j in rng.integers(0, 30, (100, 2)):
        want = gt.Lstar[i, j] + gt.Sstar[i, j] + gt.E[i, j] if (i, j) in gt.omega_obs else 0.0
        assert M[i, j] == want
    empty = ObservationSet(np.ones((3, 3)), IndexMask.empty(3, 3))
    assert not empty.M.any()


def test_fixed_sign_target():
    gt = generate(ModelParams(n1=20, n2=20, r=2, rho_s=0.25, sigma=0.1, sign_mode="fixed_positive",
                              outliers=Outliers("constant", 0.5)), 0)
    np.testing.assert_allclose(fixed_sign_target(gt) - gt.Lstar, 5 * 0.25 * 0.1)


def test_ground_truth_roundtrip(tmp_path):
    gt = generate(ModelParams(n1=12, n2=9, r=2, p=0.7, rho_s=0.1, rho_aug=0.4, sigma=0.01, seed=5), 1)
    save_ground_truth(gt, tmp_path / "gt")
    back = load_ground_truth(tmp_path / "gt")
    for name in ("Xstar", "Ystar", "Lstar", "Sstar", "E"):
        assert np.array_equal(getattr(gt, name), getattr(back, name))
    assert back.params == gt.params and back.omega_aug == gt.omega_aug and back.trial == 1
    obs = load_observations(tmp_path / "gt" / "M.txt", tmp_path / "gt" / "omega_obs.mask", 0.7)
    np.testing.assert_array_equal(obs.M, assemble(gt).M)


def test_observation_set_sampling_rate(tmp_path):
    write_matrix(tmp_path / "M", np.ones((2, 2)))
    write_mask(tmp_path / "m", IndexMask.from_indices(2, 2, [(0, 0)]))
    obs = load_observations(tmp_path / "M", tmp_path / "m")
    assert obs.sampling_rate == 0.25
    assert obs.M.tolist() == [[1.0, 0.0], [0.0, 0.0]]
