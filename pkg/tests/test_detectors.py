"""Detector update rules, oracles, and cross-detector identities."""

import math

import numpy as np
import pytest

from hsmimo.detectors import (
    DetectorDivergenceError,
    HsParams,
    InstanceTooLargeError,
    ThsParams,
    TpgParams,
    brute_force_ml_detect,
    hard_decision,
    hs_detect,
    hypercube_vertices,
    lmmse_like_matrix,
    ml_objective,
    mmse_detect,
    scalable_tpg_detect,
    ths_detect,
    ths_step,
    tpg_detect,
)
from hsmimo.evaluation import gradient_amplitude
from hsmimo.system_model import RngStream, SystemDims, realify_channel, sample_channel, sample_signal


def random_system(seed, n=3, m=2, noise=0.0):
    dims = SystemDims(n, m)
    stream = RngStream(seed)
    H = realify_channel(sample_channel(dims, stream.child(0)))
    x = sample_signal(dims, stream.child(1))
    w = noise * stream.child(2).generator().standard_normal(dims.M)
    return H, x, H @ x + w


class TestHardDecision:
    def test_definition(self):
        np.testing.assert_array_equal(hard_decision([0.3, -0.7]), [1.0, -1.0])

    def test_zero_maps_to_plus_one(self):
        np.testing.assert_array_equal(hard_decision([0.0]), [1.0])

    def test_idempotent_on_symbols(self):
        x = np.array([1.0, -1.0, 1.0])
        np.testing.assert_array_equal(hard_decision(x), x)


class TestThsStep:
    def test_zero_initialization(self):
        H, x, y = random_system(1)
        N = H.shape[1]
        u1, s1 = ths_step(np.zeros(N), np.zeros(N), H, y, beta_t=1.3, eta_t=0.05, zeta_t=1.1)
        np.testing.assert_allclose(u1, 0.05 * (H.T @ y), rtol=0, atol=1e-15)
        np.testing.assert_allclose(s1, np.tanh(1.3 * 0.05 * (H.T @ y)), rtol=0, atol=1e-15)

    def test_zero_residual_keeps_u_exactly(self):
        # y = Hs and zeta = 1: the dual state must not move at all
        gen = np.random.default_rng(2)
        for _ in range(200):
            H = gen.standard_normal((4, 6))
            s = gen.standard_normal(6)
            u = gen.standard_normal(6)
            u1, _ = ths_step(u, s, H, H @ s, beta_t=0.7, eta_t=0.3, zeta_t=1.0)
            np.testing.assert_array_equal(u1, u)

    def test_scalar_arithmetic_oracle(self):
        # H=[2], y=[1], s=[0.25], u=[0], zeta=1, eta=0.1, beta=1:
        # u' = 0.1 * 2 * (1 - 2*0.25) = 0.1, s' = tanh(0.1)
        u1, s1 = ths_step(np.array([0.0]), np.array([0.25]), np.array([[2.0]]),
                          np.array([1.0]), beta_t=1.0, eta_t=0.1, zeta_t=1.0)
        assert u1[0] == pytest.approx(0.1, abs=1e-15)
        assert s1[0] == pytest.approx(math.tanh(0.1), abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ths_step(np.zeros(3), np.zeros(3), np.eye(4), np.zeros(4), 1.0, 0.1, 1.0)


class TestThsDetect:
    def test_depth_one_is_single_step(self):
        H, x, y = random_system(3)
        N = H.shape[1]
        params = ThsParams(beta=[1.2], eta=[0.07], zeta=[1.05])
        res = ths_detect(H, y, params)
        _, s1 = ths_step(np.zeros(N), np.zeros(N), H, y, 1.2, 0.07, 1.05)
        np.testing.assert_array_equal(res.soft, s1)

    def test_noiseless_fixed_point_freezes(self):
        # with s at the true signal and zeta = 1, u never moves and the
        # hard output stays at the transmitted vector; beta large enough
        # that tanh saturates keeps s there exactly
        H, x, y = random_system(4, noise=0.0)
        u = 2.0 * x  # any state whose signs match x
        s = x.copy()
        for _ in range(10):
            u_next, s = ths_step(u, s, H, y, beta_t=10.0, eta_t=0.1, zeta_t=1.0)
            np.testing.assert_array_equal(u_next, u)
            np.testing.assert_array_equal(s, x)
            u = u_next
        np.testing.assert_array_equal(hard_decision(s), x)

    def test_matches_ml_on_small_noiseless_systems(self):
        # well-conditioned square (4,4) instances, sigma = 0
        dims = SystemDims(4, 4)
        params = ThsParams.initial(30, eta=0.2, beta=1.0, zeta=1.1)
        rng = RngStream(40)
        matches = 0
        total = 0
        i = 0
        while total < 1000:
            H = realify_channel(sample_channel(dims, rng.child(0, i)))
            i += 1
            if np.linalg.cond(H) > 10.0:
                continue
            x = sample_signal(dims, rng.child(1, i))
            y = H @ x
            total += 1
            if np.array_equal(ths_detect(H, y, params).hard, brute_force_ml_detect(H, y).hard):
                matches += 1
        assert matches / total >= 0.95

    def test_divergence_names_iteration(self):
        H, x, y = random_system(5)
        params = ThsParams(beta=[1.0, 1.0, 1.0], eta=[1e200, 1e200, 1e200],
                           zeta=[1e200, 1e200, 1e200])
        with pytest.raises(DetectorDivergenceError) as err:
            ths_detect(H, y, params)
        assert err.value.iteration == 1

    def test_trace_shapes_and_recorded_gradient(self):
        H, x, y = random_system(6)
        params = ThsParams.initial(5, eta=0.1, zeta=1.1)
        res = ths_detect(H, y, params, trace=True)
        tr = res.trace
        assert tr.u.shape == (6, H.shape[1])
        assert tr.s.shape == (6, H.shape[1])
        assert tr.gradient_amplitude.shape == (6,)
        assert tr.bit_flip_ratio.shape == (5,)
        assert np.all(tr.gradient_amplitude >= 0)
        assert np.all((0 <= tr.bit_flip_ratio) & (tr.bit_flip_ratio <= 1))
        # recorded G matches an independent recomputation
        for t in range(6):
            assert tr.gradient_amplitude[t] == pytest.approx(
                gradient_amplitude(H, y, tr.s[t]), abs=1e-12)


class TestHsDetect:
    def test_equals_ths_with_mapped_constants(self):
        # (eta, lambda, beta) maps to constant (beta, eta, 1 + eta/lambda)
        for seed in range(20):
            H, x, y = random_system(seed, n=4, m=3, noise=0.1)
            hs = hs_detect(H, y, HsParams(T=12, eta=0.08, lam=0.9, beta=1.4))
            ths = ths_detect(H, y, ThsParams.initial(12, eta=0.08, beta=1.4,
                                                     zeta=1.0 + 0.08 / 0.9))
            assert np.max(np.abs(hs.soft - ths.soft)) < 1e-12

    def test_first_iteration_state(self):
        H, x, y = random_system(7)
        res = hs_detect(H, y, HsParams(T=3, eta=0.1, lam=1.0, beta=1.0), trace=True)
        np.testing.assert_allclose(res.trace.u[1], 0.1 * (H.T @ y), rtol=0, atol=1e-15)


def _scalable_tpg_single_recursion(H, y, params):
    """Independent oracle: the one-line search-point recursion

    r_{t+1} = tanh(b_t r_t) + c_t H^T (y - H tanh(b_t r_t)), r_0 = 0,

    with the index correspondence c_t = gamma_t and b_t = 1/|theta_{t-1}|,
    soft output tanh(r_T / |theta_{T-1}|).
    """
    T = params.T
    N = H.shape[1]
    r = np.zeros(N)
    for t in range(T):
        proj = np.tanh(r / abs(params.theta[t - 1])) if t > 0 else np.zeros(N)
        r = proj + params.gamma[t] * (H.T @ (y - H @ proj))
    return np.tanh(r / abs(params.theta[T - 1]))


class TestScalableTpg:
    def test_first_iteration_from_zero(self):
        H, x, y = random_system(8)
        params = TpgParams(gamma=[0.3, 0.2], theta=[1.0, 1.0])
        res = scalable_tpg_detect(H, y, params, trace=True)
        # tanh(0) = 0, so the first search point is gamma_0 H^T y
        np.testing.assert_allclose(res.trace.u[1], 0.3 * (H.T @ y), rtol=0, atol=1e-15)

    def test_equivalence_with_single_recursion_form(self):
        gen = np.random.default_rng(9)
        for seed in range(25):
            H, x, y = random_system(seed, n=4, m=3, noise=0.2)
            T = 8
            params = TpgParams(gamma=gen.uniform(0.01, 0.3, T),
                               theta=gen.uniform(0.4, 2.0, T))
            res = scalable_tpg_detect(H, y, params)
            oracle = _scalable_tpg_single_recursion(H, y, params)
            assert np.max(np.abs(res.soft - oracle)) < 1e-12

    def test_true_signal_is_not_a_fixed_point(self):
        # r with x = tanh(beta r) (approximately) gets displaced by the update
        H, x, y = random_system(10, noise=0.0)
        beta = 1.0
        r = np.arctanh(0.999 * x) / beta
        proj = np.tanh(beta * r)
        r_next = proj + 0.1 * (H.T @ (y - H @ proj))
        assert np.linalg.norm(r_next - r) > 0.5

    def test_zero_theta_rejected(self):
        with pytest.raises(ValueError):
            TpgParams(gamma=[0.1], theta=[0.0])

    def test_variant_mismatch_rejected(self):
        H, x, y = random_system(11)
        with pytest.raises(ValueError):
            scalable_tpg_detect(H, y, TpgParams(gamma=[0.1], theta=[1.0], variant="lmmse"))


class TestTpg:
    def test_lmmse_matrix_residual(self):
        # W (H H^T + alpha I) = H^T to 1e-10 (independent dense check)
        gen = np.random.default_rng(12)
        for _ in range(10):
            H = gen.standard_normal((6, 10))
            W = lmmse_like_matrix(H, alpha=0.7)
            assert np.max(np.abs(W @ (H @ H.T + 0.7 * np.eye(6)) - H.T)) < 1e-10

    def test_large_alpha_approaches_scaled_scalable(self):
        H, x, y = random_system(13, noise=0.1)
        alpha = 1e8
        T = 6
        gamma = np.full(T, 0.05)
        theta = np.full(T, 1.0)
        res_lmmse = tpg_detect(H, y, 0.0, TpgParams(gamma=alpha * gamma, theta=theta,
                                                    variant="lmmse", alpha=alpha))
        res_scalable = scalable_tpg_detect(H, y, TpgParams(gamma=gamma, theta=theta))
        assert np.max(np.abs(res_lmmse.soft - res_scalable.soft)) < 1e-4

    def test_tiny_theta_gives_hard_projection(self):
        H, x, y = random_system(14)
        params = TpgParams(gamma=[1.0], theta=[1e-8], variant="lmmse", alpha=0.5)
        res = tpg_detect(H, y, 0.0, params, trace=True)
        r0 = res.trace.u[1]
        np.testing.assert_array_equal(res.soft, np.sign(r0))


class TestMmse:
    def test_identity_channel_shrinkage(self):
        y = np.array([0.4, -1.2, 2.0, -0.1])
        res = mmse_detect(np.eye(4), y, sigma2=2.0)
        np.testing.assert_allclose(res.soft, y / 2.0, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(res.hard, hard_decision(y))

    def test_noiseless_square_inversion_is_exact(self):
        H, x, y = random_system(15, n=4, m=4, noise=0.0)
        res = mmse_detect(H, y, sigma2=0.0)
        np.testing.assert_allclose(res.soft, x, rtol=0, atol=1e-9)

    def test_matches_independent_dense_solve(self):
        gen = np.random.default_rng(16)
        for _ in range(10):
            H = gen.standard_normal((6, 10))
            y = gen.standard_normal(6)
            sigma2 = 0.3
            oracle = H.T @ np.linalg.inv(H @ H.T + (sigma2 / 2) * np.eye(6)) @ y
            assert np.max(np.abs(mmse_detect(H, y, sigma2).soft - oracle)) < 1e-10


class TestBruteForceMl:
    def test_recovers_noiseless_signal(self):
        H, x, y = random_system(17, n=4, m=4, noise=0.0)
        np.testing.assert_array_equal(brute_force_ml_detect(H, y).hard, x)

    def test_componentwise_nearest_point(self):
        res = brute_force_ml_detect(np.eye(2), np.array([0.9, -0.2]))
        np.testing.assert_array_equal(res.hard, [1.0, -1.0])

    def test_beats_random_hypercube_points(self):
        gen = np.random.default_rng(18)
        H = gen.standard_normal((6, 10))
        y = gen.standard_normal(6)
        best = ml_objective(H, y, brute_force_ml_detect(H, y).hard)
        random_points = 1.0 - 2.0 * gen.integers(0, 2, size=(1000, 10)).astype(float)
        assert all(best <= ml_objective(H, y, p) + 1e-12 for p in random_points)

    def test_tie_break_is_lexicographic(self):
        # zero channel makes every vertex optimal; +1 before -1 wins
        res = brute_force_ml_detect(np.zeros((2, 3)), np.zeros(2))
        np.testing.assert_array_equal(res.hard, [1.0, 1.0, 1.0])

    def test_enumeration_guard(self):
        with pytest.raises(InstanceTooLargeError):
            brute_force_ml_detect(np.zeros((2, 21)), np.zeros(2))

    def test_vertex_enumeration_order(self):
        X = hypercube_vertices(2, 0, 4)
        np.testing.assert_array_equal(X, [[1, 1], [1, -1], [-1, 1], [-1, -1]])


class TestCrossDetectorInvariants:
    def test_soft_outputs_within_tanh_range(self):
        for seed in range(10):
            H, x, y = random_system(seed, n=4, m=3, noise=0.3)
            outs = [
                ths_detect(H, y, ThsParams.initial(10, eta=0.05, zeta=1.05)).soft,
                hs_detect(H, y, HsParams(T=10, eta=0.05)).soft,
                scalable_tpg_detect(H, y, TpgParams.initial(10, gamma=0.05)).soft,
                tpg_detect(H, y, 0.1, TpgParams.initial(10, gamma=0.3, variant="lmmse",
                                                        alpha=1.0)).soft,
            ]
            for soft in outs:
                assert np.all(np.abs(soft) < 1.0)

    def test_monotone_saturation_in_beta(self):
        gen = np.random.default_rng(19)
        u = gen.standard_normal(12)
        prev = np.abs(np.tanh(0.2 * u))
        for beta in (0.5, 1.0, 2.0, 5.0):
            cur = np.abs(np.tanh(beta * u))
            assert np.all(cur >= prev)
            prev = cur

    def test_ml_objective_is_global_minimum(self):
        for seed in range(25):
            H, x, y = random_system(seed, n=3, m=2, noise=0.4)
            best = ml_objective(H, y, brute_force_ml_detect(H, y).hard)
            for res in (
                ths_detect(H, y, ThsParams.initial(20, eta=0.2, zeta=1.1)),
                hs_detect(H, y, HsParams(T=20)),
                scalable_tpg_detect(H, y, TpgParams.initial(20)),
                mmse_detect(H, y, 0.2),
            ):
                assert best <= ml_objective(H, y, res.hard) + 1e-12
