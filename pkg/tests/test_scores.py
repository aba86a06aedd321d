import time

import numpy as np
import pytest

from fvgknock import (
    GaussianModel,
    GroupStructure,
    LambdaRule,
    NumericalError,
    ScoreTable,
    ValidationError,
    build_s_equi,
    compute_g,
    kappa_tau,
    multi_scores,
    sample_knockoffs,
    scores_combined,
    scores_joint_lasso,
    scores_marginal,
    scores_residual_corr,
    scores_separate_lasso,
    w_statistics,
)
from fvgknock.lasso import lambda_max, lasso_fit, lasso_residuals
from fvgknock.scores import correlation_with, group_w_statistics
from fvgknock.simulate import build_covariance
from oracles import compute_g_explicit, kappa_tau_scan

FIXED = LambdaRule(kind="fixed", value=0.1)


def make_knockoff_data(rng, n=120, p=8, size=2, within=0.5, between=0.1, beta=None):
    gs = GroupStructure.from_sizes([size] * (p // size))
    model = GaussianModel(mu=np.zeros(p), sigma=build_covariance(gs, within, between), gs=gs)
    x = rng.standard_normal((n, p)) @ np.linalg.cholesky(model.sigma).T
    smat = build_s_equi(model)
    xk = sample_knockoffs(model, smat, x, rng_seed=int(rng.integers(2**31)))
    if beta is None:
        beta = np.zeros(p)
    y = x @ beta + rng.standard_normal(n)
    return x, xk, y, gs, model, smat


class TestMarginal:
    def test_perfect_correlation(self, rng):
        y = rng.standard_normal(50)
        x = np.column_stack([y, rng.standard_normal(50)])
        xk = rng.standard_normal((50, 2))
        s = scores_marginal(x, xk, y)
        assert s.t[0] == pytest.approx(1.0)

    def test_orthogonal_knockoff_scores_zero(self, rng):
        y = rng.standard_normal(60)
        xk = np.column_stack([y - y.mean(), rng.standard_normal(60)])
        # Make the first knockoff column orthogonal to y in-sample.
        v = y - y.mean()
        xk[:, 0] = rng.standard_normal(60)
        xk[:, 0] -= v * (xk[:, 0] @ v) / (v @ v)
        xk[:, 0] -= xk[:, 0].mean() - 0  # keep it centered-ish; corr is invariant
        s = scores_marginal(rng.standard_normal((60, 2)), xk, y)
        assert s.t_knock[0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_direct_recomputation(self, rng):
        x = rng.standard_normal((100, 4))
        xk = rng.standard_normal((100, 4))
        y = rng.standard_normal(100)
        s = scores_marginal(x, xk, y)
        for j in range(4):
            direct = abs(np.corrcoef(x[:, j], y)[0, 1])
            assert abs(s.t[j] - direct) < 1e-12

    def test_constant_column_scores_zero(self, rng):
        x = np.column_stack([np.full(30, 2.0)])
        s = scores_marginal(x, x, rng.standard_normal(30))
        assert s.t[0] == 0.0


class TestJointLasso:
    def test_lambda_max_zeroes_everything(self, rng):
        x, xk, y, gs, _, _ = make_knockoff_data(rng)
        lam = lambda_max(np.hstack([x, xk]), y)
        s = scores_joint_lasso(x, xk, y, LambdaRule(kind="fixed", value=lam * 1.001))
        assert np.all(s.t == 0.0) and np.all(s.t_knock == 0.0)

    def test_swap_exchanges_scores(self, rng):
        x, xk, y, gs, _, _ = make_knockoff_data(rng, beta=np.array([1.0, 0, 0, 0, 0, 0, 0, 0]))
        s = scores_joint_lasso(x, xk, y, FIXED)
        x2, xk2 = x.copy(), xk.copy()
        x2[:, 3], xk2[:, 3] = xk[:, 3], x[:, 3]
        s2 = scores_joint_lasso(x2, xk2, y, FIXED)
        assert s2.t[3] == pytest.approx(s.t_knock[3], abs=1e-7)
        assert s2.t_knock[3] == pytest.approx(s.t[3], abs=1e-7)
        keep = np.arange(8) != 3
        assert np.allclose(s2.t[keep], s.t[keep], atol=1e-7)

    def test_logistic_family_scores(self, rng):
        # Binary-response joint lasso: the signal feature should outscore
        # its knockoff, and swapping stays symmetric.
        p = 4
        gs = GroupStructure.singletons(p)
        model = GaussianModel(mu=np.zeros(p), sigma=np.eye(p), gs=gs)
        x = rng.standard_normal((400, p))
        xk = sample_knockoffs(model, build_s_equi(model), x, rng_seed=3)
        eta = 2.0 * x[:, 1]
        y = (rng.uniform(size=400) < 1 / (1 + np.exp(-eta))).astype(float)
        rule = LambdaRule(kind="ratio", value=0.15)
        s = scores_joint_lasso(x, xk, y, rule, family="logistic")
        assert s.t[1] > s.t_knock[1]
        x2, xk2 = x.copy(), xk.copy()
        x2[:, 1], xk2[:, 1] = xk[:, 1], x[:, 1]
        s2 = scores_joint_lasso(x2, xk2, y, rule, family="logistic")
        assert s2.t[1] == pytest.approx(s.t_knock[1], abs=1e-6)

    def test_planted_signal_beats_knockoff(self):
        # Frequency of T_0 > T_knock_0 across replications should be high.
        wins = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            p = 3
            gs = GroupStructure.singletons(p)
            model = GaussianModel(mu=np.zeros(p), sigma=np.eye(p), gs=gs)
            x = rng.standard_normal((80, p))
            xk = sample_knockoffs(model, build_s_equi(model), x, rng_seed=seed)
            y = 1.5 * x[:, 0] + rng.standard_normal(80)
            s = scores_joint_lasso(x, xk, y, LambdaRule(kind="ratio", value=0.2))
            wins += s.t[0] > s.t_knock[0]
        assert wins >= 90


class TestResidualCorr:
    def test_single_group_reduces_to_marginal(self, rng):
        x, xk, y, _, _, _ = make_knockoff_data(rng, p=4, size=4)
        gs1 = GroupStructure.from_sizes([4])
        s = scores_residual_corr(x, xk, y, gs1, FIXED)
        m = scores_marginal(x, xk, y)
        assert np.allclose(s.t, m.t, atol=1e-12)

    def test_null_scores_small(self, rng):
        vals = []
        for _ in range(30):
            x, xk, y, gs, _, _ = make_knockoff_data(rng, n=150)
            s = scores_residual_corr(x, xk, y, gs, LambdaRule(kind="ratio", value=0.5))
            vals.append(np.mean(s.t))
        assert np.mean(vals) < 3 / np.sqrt(150)

    def test_matches_fresh_refit(self, rng):
        x, xk, y, gs, _, _ = make_knockoff_data(rng)
        s = scores_residual_corr(x, xk, y, gs, FIXED)
        for k, g in enumerate(gs.groups):
            keep = np.setdiff1d(np.arange(gs.p), g)
            design = np.hstack([x[:, keep], xk[:, keep]])
            fit = lasso_fit(design, y, 0.1)
            resid = lasso_residuals(fit, design, y)
            for j in g:
                direct = abs(correlation_with(x[:, [j]], resid)[0])
                assert abs(s.t[j] - direct) < 1e-9


class TestSeparateLasso:
    def test_singleton_groups_match_joint(self, rng):
        # With singleton groups each separate design is the full joint design
        # (reordered), so scores agree up to solver tolerance.
        x, xk, y, _, _, _ = make_knockoff_data(rng, p=4, size=2, beta=np.array([1.0, 0, 0, 0]))
        gs1 = GroupStructure.singletons(4)
        sep = scores_separate_lasso(x, xk, y, gs1, FIXED)
        joint = scores_joint_lasso(x, xk, y, FIXED)
        assert np.allclose(sep.t, joint.t, atol=1e-6)
        assert np.allclose(sep.t_knock, joint.t_knock, atol=1e-6)

    def test_swap_symmetry(self, rng):
        x, xk, y, gs, _, _ = make_knockoff_data(rng, beta=np.array([0.8, 0, 0, 0, 0, 0, 0, 0]))
        sep = scores_separate_lasso(x, xk, y, gs, FIXED)
        g = list(gs.groups[0])
        x2, xk2 = x.copy(), xk.copy()
        x2[:, g], xk2[:, g] = xk[:, g], x[:, g]
        sep2 = scores_separate_lasso(x2, xk2, y, gs, FIXED)
        for j in g:
            assert sep2.t[j] == pytest.approx(sep.t_knock[j], abs=1e-6)
            assert sep2.t_knock[j] == pytest.approx(sep.t[j], abs=1e-6)


class TestComputeG:
    def test_singleton_groups_identity(self, rng):
        p = 5
        a = rng.standard_normal((p, p))
        psi = a @ a.T + p * np.eye(p)
        gamma = rng.standard_normal(p)
        g = compute_g(gamma, psi, GroupStructure.singletons(p))
        assert np.allclose(g, gamma)

    def test_hand_example(self):
        gs = GroupStructure.from_sizes([2])
        psi = np.array([[1.0, 0.5], [0.5, 1.0]])
        g = compute_g(np.array([1.0, 2.0]), psi, gs)
        assert g == pytest.approx([2.0, 2.5])

    def test_matches_explicit_inverse_oracle(self, rng):
        for _ in range(10):
            p = 6
            a = rng.standard_normal((p, p))
            psi = a @ a.T + p * np.eye(p)
            gamma = rng.standard_normal(p)
            gs = GroupStructure.from_sizes([3, 3])
            mine = compute_g(gamma, psi, gs)
            oracle = compute_g_explicit(gamma, psi, [list(g) for g in gs.groups])
            assert np.max(np.abs(mine - oracle)) < 1e-10

    def test_non_pd_psi_rejected(self, rng):
        gs = GroupStructure.from_sizes([2])
        psi = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NumericalError):
            compute_g(np.ones(2), psi, gs)


class TestCombined:
    def test_zero_g_zeroes_scores(self, rng):
        x, xk, y, gs, model, smat = make_knockoff_data(rng)
        psi = model.sigma - smat.s / 2
        # lambda above lambda_max makes every gamma_hat zero, hence g = 0.
        lam = lambda_max(np.hstack([x, xk]), y) * 1.01
        s = scores_combined(x, xk, y, gs, psi, LambdaRule(kind="fixed", value=lam))
        assert np.all(s.t == 0.0) and np.all(s.t_knock == 0.0)

    def test_w_sign_tracks_marginal_correlations(self, rng):
        x, xk, y, gs, model, smat = make_knockoff_data(
            rng, beta=np.array([1.2, 0.8, 0, 0, 0, 0, 0, 0])
        )
        psi = model.sigma - smat.s / 2
        s = scores_combined(x, xk, y, gs, psi, FIXED)
        m = scores_marginal(x, xk, y)
        w = w_statistics(s)
        w_m = w_statistics(m)
        live = s.t + s.t_knock > 0  # g_j != 0
        assert np.all(np.sign(w[live]) == np.sign(w_m[live]))

    def test_faster_than_separate_lasso(self):
        # One joint fit versus p fits; the gap should be at least 10x at p=250.
        rng = np.random.default_rng(0)
        p, n = 250, 300
        gs = GroupStructure.from_sizes([5] * 50)
        model = GaussianModel(mu=np.zeros(p), sigma=build_covariance(gs, 0.5, 0.1), gs=gs)
        x = rng.standard_normal((n, p)) @ np.linalg.cholesky(model.sigma).T
        smat = build_s_equi(model)
        xk = sample_knockoffs(model, smat, x, rng_seed=1)
        beta = np.zeros(p)
        beta[:4] = 1.0
        y = x @ beta + rng.standard_normal(n)
        psi = model.sigma - smat.s / 2
        rule = LambdaRule(kind="ratio", value=0.2)
        scores_combined(x, xk, y, gs, psi, rule)  # warm the jit
        t0 = time.perf_counter()
        scores_combined(x, xk, y, gs, psi, rule)
        t_combined = time.perf_counter() - t0
        t0 = time.perf_counter()
        scores_separate_lasso(x, xk, y, gs, rule)
        t_separate = time.perf_counter() - t0
        assert t_separate > 10 * t_combined


class TestWStatistics:
    @pytest.mark.parametrize(
        "pair,expected", [((3.0, 1.0), 3.0), ((1.0, 3.0), -3.0), ((2.0, 2.0), 0.0)]
    )
    def test_signed_max(self, pair, expected):
        s = ScoreTable(t=np.array([pair[0]]), t_knock=np.array([pair[1]]))
        assert w_statistics(s)[0] == expected

    def test_swap_antisymmetry(self, rng):
        t = rng.uniform(size=6)
        tk = rng.uniform(size=6)
        w = w_statistics(ScoreTable(t=t, t_knock=tk))
        w_swapped = w_statistics(ScoreTable(t=tk, t_knock=t))
        assert np.allclose(w_swapped, -w)

    def test_group_statistics(self, rng):
        gs = GroupStructure.from_sizes([2, 2])
        s = ScoreTable(t=np.array([1.0, 2, 0, 1]), t_knock=np.array([0.5, 1, 2, 3]))
        wg = group_w_statistics(s, gs)
        assert wg[0] == pytest.approx(3.0)  # T=3 vs 1.5 -> +3
        assert wg[1] == pytest.approx(-5.0)  # T=1 vs 5 -> -5


class TestKappaTau:
    def test_hand_example(self):
        kt = kappa_tau(np.array([[3.0], [1.0], [2.0]]), GroupStructure.singletons(1))
        assert kt.kappa[0] == 0
        assert kt.tau[0] == pytest.approx(1.5)

    def test_all_equal_ties_to_zero(self):
        kt = kappa_tau(np.full((4, 2), 7.0), GroupStructure.singletons(2))
        assert np.all(kt.kappa == 0)
        assert np.allclose(kt.tau, 0.0)

    def test_matches_scan_oracle(self, rng):
        t_all = rng.uniform(size=(5, 9))
        kt = kappa_tau(t_all, GroupStructure.from_sizes([3, 3, 3]))
        kappa, tau = kappa_tau_scan(t_all)
        assert np.array_equal(kt.kappa, kappa)
        assert np.allclose(kt.tau, tau)

    def test_needs_two_rows(self):
        with pytest.raises(ValidationError):
            kappa_tau(np.ones((1, 3)), GroupStructure.singletons(3))


class TestMultiScores:
    def test_marginal_stacks_each_copy(self, rng):
        x = rng.standard_normal((60, 4))
        copies = [rng.standard_normal((60, 4)) for _ in range(3)]
        y = rng.standard_normal(60)
        t_all = multi_scores(x, copies, y, "marginal")
        assert t_all.shape == (4, 4)
        assert np.allclose(t_all[0], np.abs(correlation_with(x, y)))
        assert np.allclose(t_all[2], np.abs(correlation_with(copies[1], y)))

    def test_joint_lasso_needs_rule(self, rng):
        x = rng.standard_normal((30, 2))
        with pytest.raises(ValidationError):
            multi_scores(x, [x], rng.standard_normal(30), "joint_lasso")

    def test_unsupported_family(self, rng):
        x = rng.standard_normal((30, 2))
        with pytest.raises(ValidationError):
            multi_scores(x, [x], rng.standard_normal(30), "combined")


class TestSwapAntisymmetry:
    def test_marginal_group_swap_flips_w_in_group_only(self, rng):
        x, xk, y, gs, _, _ = make_knockoff_data(rng, beta=np.array([1.0, 0, 0, 0, 0, 0, 0, 0]))
        w = w_statistics(scores_marginal(x, xk, y))
        g = list(gs.groups[1])
        x2, xk2 = x.copy(), xk.copy()
        x2[:, g], xk2[:, g] = xk[:, g], x[:, g]
        w2 = w_statistics(scores_marginal(x2, xk2, y))
        assert np.allclose(w2[g], -w[g])
        others = [j for j in range(gs.p) if j not in g]
        assert np.allclose(w2[others], w[others])


class TestCoinFlipProperty:
    def test_null_signs_near_uniform(self):
        # Small-scale version of the Theorem 1 Monte Carlo (full run in
        # acceptance): marginal scores on globally null data.
        reps, p = 600, 6
        gs = GroupStructure.from_sizes([2, 2, 2])
        model = GaussianModel(mu=np.zeros(p), sigma=build_covariance(gs, 0.5, 0.1), gs=gs)
        smat = build_s_equi(model)
        chol = np.linalg.cholesky(model.sigma)
        signs = np.zeros((reps, p))
        for r in range(reps):
            rng = np.random.default_rng(1000 + r)
            x = rng.standard_normal((60, p)) @ chol.T
            y = rng.standard_normal(60)
            xk = sample_knockoffs(model, smat, x, rng_seed=2000 + r)
            w = w_statistics(scores_marginal(x, xk, y))
            signs[r] = np.sign(w)
        freq = (signs > 0).mean(axis=0)
        assert np.all(np.abs(freq - 0.5) < 0.08)
