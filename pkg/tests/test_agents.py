import numpy as np
import pytest
from hypothesis import given, strategies as st

from dicect.agents import DataConsistencyAgent, data_consistency_agent, diffusion_prior_agent
from dicect.diffusion import gaussian_mmse_denoiser, make_schedule
from dicect.errors import ContractError, DimensionError
from dicect.geometry import ScanGeometry, Sinogram, radon_operator
from dicect.linalg import IdentityOperator, MatrixOperator
from dicect.toy import stationary_covariance

HALF = make_schedule(1, "linear", 0.5, 0.5)  # zeta[1] == 1
LINEAR = make_schedule(1000, "linear")
EIGHT_VIEWS = ScanGeometry(16, tuple(22.5 * k for k in range(8)))


def dense_prox(A, y, v, z):
    M = A.to_matrix()
    n = M.shape[1]
    s = np.linalg.solve(M.T @ M + z * np.eye(n), M.T @ y.ravel() + z * v.ravel())
    return s.reshape(A.in_shape)


class TestDataConsistency:
    def test_identity_operator_midpoint(self, rng):
        y, v = rng.standard_normal((2, 6))
        agent = data_consistency_agent(y, IdentityOperator(6), 1, HALF)
        np.testing.assert_allclose(agent.apply(v, 1), (y + v) / 2, rtol=1e-14)

    def test_minimiser_is_fixed(self, rng):
        # with y = A v the minimiser is v itself, so the warm start has zero residual
        A = radon_operator(EIGHT_VIEWS)
        v = rng.standard_normal(A.in_shape)
        agent = data_consistency_agent(A.apply(v), A, 5, LINEAR)
        np.testing.assert_array_equal(agent.apply(v, 200), v)

    def test_matches_dense_solve(self, rng):
        A = radon_operator(EIGHT_VIEWS)
        y = rng.standard_normal(A.out_shape)
        v = rng.standard_normal(A.in_shape)
        for t in (10, 500):
            agent = data_consistency_agent(y, A, 200, LINEAR)
            ref = dense_prox(A, y, v, LINEAR.zeta[t])
            assert np.linalg.norm(agent.apply(v, t) - ref) <= 1e-6 * np.linalg.norm(ref)

    def test_truncated_error_shrinks_with_P(self, rng):
        A = radon_operator(EIGHT_VIEWS)
        y = rng.standard_normal(A.out_shape)
        v = rng.standard_normal(A.in_shape)
        ref = dense_prox(A, y, v, LINEAR.zeta[50])
        errs = [np.linalg.norm(data_consistency_agent(y, A, P, LINEAR).apply(v, 50) - ref)
                for P in (1, 5, 20, 80)]
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_optimality_in_exact_mode(self, rng):
        A = radon_operator(EIGHT_VIEWS)
        y = rng.standard_normal(A.out_shape)
        v = rng.standard_normal(A.in_shape)
        for t in (5, 300, 1000):
            z = LINEAR.zeta[t]
            s = data_consistency_agent(y, A, None, LINEAR).apply(v, t)
            grad = A.apply_adjoint(A.apply(s) - y) + z * (s - v)
            scale = np.linalg.norm(A.apply_adjoint(y)) + z * np.linalg.norm(v)
            assert np.linalg.norm(grad) <= 1e-6 * scale

    @given(st.integers(0, 10 ** 6), st.integers(1, 1000))
    def test_firmly_nonexpansive(self, seed, t):
        r = np.random.default_rng(seed)
        A = MatrixOperator(r.standard_normal((5, 10)))
        agent = data_consistency_agent(r.standard_normal(5), A, None, LINEAR)
        a, b = r.standard_normal((2, 10))
        d = agent.apply(a, t) - agent.apply(b, t)
        assert d @ d <= d @ (a - b) + 1e-8

    def test_accepts_sinogram(self, rng):
        A = radon_operator(EIGHT_VIEWS)
        y = rng.standard_normal(A.out_shape)
        v = rng.standard_normal(A.in_shape)
        a = data_consistency_agent(Sinogram(y, EIGHT_VIEWS), A, 5, LINEAR).apply(v, 30)
        np.testing.assert_array_equal(a, data_consistency_agent(y, A, 5, LINEAR).apply(v, 30))

    def test_previous_warm_start_mode(self, rng):
        A = MatrixOperator(rng.standard_normal((6, 8)))
        y = rng.standard_normal(6)
        agent = DataConsistencyAgent(y, A, None, LINEAR, warm_start="previous")
        v = rng.standard_normal(8)
        first = agent.apply(v, 40)
        np.testing.assert_allclose(agent.apply(v, 40), first, rtol=1e-10)
        np.testing.assert_allclose(first, dense_prox(A, y, v, LINEAR.zeta[40]), rtol=1e-8)

    def test_invalid(self, rng):
        A = MatrixOperator(rng.standard_normal((6, 8)))
        with pytest.raises(ContractError):
            data_consistency_agent(np.zeros(6), A, 0, LINEAR)
        with pytest.raises(DimensionError):
            data_consistency_agent(np.zeros(5), A, 3, LINEAR)
        with pytest.raises(ContractError):
            DataConsistencyAgent(np.zeros(6), A, 3, LINEAR, warm_start="sometimes")
        with pytest.raises(DimensionError):
            data_consistency_agent(np.zeros(6), A, 3, LINEAR).apply(np.zeros(7), 3)


class ZeroEps:
    def predict_eps(self, x_t, t):
        return np.zeros_like(x_t)


class TestDiffusionPrior:
    def test_zero_eps_rescales(self, rng):
        v = rng.standard_normal((4, 4))
        out = diffusion_prior_agent(ZeroEps(), LINEAR).apply(v, 640)
        np.testing.assert_allclose(out, v / np.sqrt(LINEAR.alpha_bar[640]))

    def test_gaussian_posterior_mean(self, rng):
        mu = rng.standard_normal((4, 4))
        Sigma = stationary_covariance(4)
        ab = LINEAR.alpha_bar[77]
        v = rng.standard_normal((4, 4))
        gain = np.sqrt(ab) * Sigma @ np.linalg.inv(ab * Sigma + (1 - ab) * np.eye(16))
        expected = mu.ravel() + gain @ (v.ravel() - np.sqrt(ab) * mu.ravel())
        out = diffusion_prior_agent(gaussian_mmse_denoiser(mu, Sigma, LINEAR), LINEAR).apply(v, 77)
        np.testing.assert_allclose(out.ravel(), expected, rtol=1e-10)

    def test_small_noise_bound(self, rng):
        sched = make_schedule(10, "linear", 1e-8, 1e-8)
        d = gaussian_mmse_denoiser(np.zeros(9), np.eye(9), sched)
        v = rng.standard_normal(9)
        eps = d.predict_eps(v, 1)
        ab = sched.alpha_bar[1]
        bound = (np.sqrt(1 - ab) * np.linalg.norm(eps) + (1 / np.sqrt(ab) - 1) * np.linalg.norm(v)) / np.sqrt(ab)
        assert np.linalg.norm(diffusion_prior_agent(d, sched).apply(v, 1) - v) <= bound * (1 + 1e-9)

    def test_shape_contract(self):
        class Wrong:
            def predict_eps(self, x_t, t):
                return np.zeros(3)

        with pytest.raises(DimensionError):
            diffusion_prior_agent(Wrong(), LINEAR).apply(np.zeros(4), 5)


def test_agents_are_pure(rng):
    A = MatrixOperator(rng.standard_normal((6, 8)))
    agents = [data_consistency_agent(rng.standard_normal(6), A, 5, LINEAR),
              diffusion_prior_agent(gaussian_mmse_denoiser(np.zeros(8), np.eye(8), LINEAR), LINEAR)]
    v = rng.standard_normal(8)
    for agent in agents:
        copy = v.copy()
        a, b = agent.apply(v, 9), agent.apply(copy, 9)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(v, copy)
