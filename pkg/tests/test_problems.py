import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ebsde import (DividendParams, dividend_problem, intensity_matrix,
                   poisson_problem, quadratic_problem)
from ebsde.problems import build_problem


class TestPoisson:
    def test_generator_is_constant_source(self):
        p = poisson_problem(2, r=0.5, b=0.75)
        x = np.random.default_rng(0).normal(size=(5, 2))
        y = np.random.default_rng(1).normal(size=5)
        z = np.random.default_rng(2).normal(size=(5, 2))
        assert np.all(p.generator(x, y, z) == 0.75)

    def test_reference_center_and_boundary(self):
        p = poisson_problem(2, r=0.5, b=0.75)
        assert p.reference(np.zeros((1, 2)))[0] == pytest.approx(0.046875, abs=1e-15)
        bdry = np.array([[0.5, 0.0], [0.3, 0.4]])
        assert np.allclose(p.reference(bdry), 0.0, atol=1e-15)

    def test_diffusion_product_is_2I(self):
        p = poisson_problem(3)
        sig = p.diffusion(np.zeros((2, 3)))
        prod = np.einsum("nij,nkj->nik", sig, sig)
        assert np.allclose(prod, 2.0 * np.eye(3), atol=1e-14)

    def test_apply_diffusion_consistent_with_matrix(self):
        p = poisson_problem(3)
        rngen = np.random.default_rng(3)
        x = rngen.normal(size=(4, 3))
        v = rngen.normal(size=(4, 3))
        direct = p.apply_diffusion(x, v)
        via_matrix = np.einsum("nij,nj->ni", p.diffusion(x), v)
        assert np.allclose(direct, via_matrix, atol=1e-14)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            poisson_problem(0)
        with pytest.raises(ValueError):
            poisson_problem(2, r=-1.0)


class TestQuadratic:
    def test_generator_plug_in(self):
        p = quadratic_problem(2)
        f = p.generator(np.zeros((1, 2)), np.zeros(1), np.zeros((1, 2)))
        assert f[0] == pytest.approx(-2.0, abs=1e-15)

    def test_boundary_value_d2_r1(self):
        p = quadratic_problem(2, r=1.0)
        g = p.terminal_value(np.array([[1.0, 0.0]]))
        assert g[0] == pytest.approx(0.0, abs=1e-15)

    def test_terminal_value_extends_boundary_formula(self):
        # discrete exits overshoot the sphere; terminal_value scores the
        # overshot state with the same formula the boundary data restricts
        p = quadratic_problem(2, r=1.0)
        g = p.terminal_value(np.array([[1.1, 0.0]]))
        assert g[0] == pytest.approx(np.log((1.21 + 1.0) / 2.0), rel=1e-12)
        assert np.array_equal(p.terminal_value(np.eye(2) * 0.3),
                              p.cutoff_value(np.eye(2) * 0.3))

    def test_reference_high_dim_center(self):
        p = quadratic_problem(100, r=1.0)
        assert p.reference(np.zeros((1, 100)))[0] == pytest.approx(np.log(0.01), rel=1e-12)

    def test_generator_partials_match_fd(self):
        p = quadratic_problem(2)
        rngen = np.random.default_rng(4)
        x = rngen.normal(size=(6, 2)) * 0.3
        y = rngen.normal(size=6)
        z = rngen.normal(size=(6, 2))
        fy, fz = p.generator_partials(x, y, z)
        h = 1e-6
        fd_y = (p.generator(x, y + h, z) - p.generator(x, y - h, z)) / (2 * h)
        assert np.allclose(fy, fd_y, rtol=1e-8, atol=1e-8)
        for i in range(2):
            dz = np.zeros_like(z)
            dz[:, i] = h
            fd_z = (p.generator(x, y, z + dz) - p.generator(x, y, z - dz)) / (2 * h)
            assert np.allclose(fz[:, i], fd_z, rtol=1e-8, atol=1e-8)


def _fd_pde_residual_poisson(p, x, h=1e-4):
    """Laplacian of the reference via central differences: expect -b."""
    d = p.dim
    lap = np.zeros(x.shape[0])
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        lap += (p.reference(x + e) - 2 * p.reference(x) + p.reference(x - e)) / h**2
    return lap


class TestReferencesSatisfyPDE:
    def test_poisson_reference_pde_residual(self):
        p = poisson_problem(3, r=0.5, b=0.75)
        rngen = np.random.default_rng(5)
        x = rngen.normal(size=(100, 3))
        x = 0.3 * x / np.linalg.norm(x, axis=1, keepdims=True) * rngen.uniform(0.1, 1.0, size=(100, 1))
        residual = _fd_pde_residual_poisson(p, x) + 0.75
        assert np.max(np.abs(residual)) < 1e-4

    def test_quadratic_reference_pde_residual(self):
        # Delta u + |grad u|^2 - 2 exp(-u) = 0 for u = log((|x|^2+1)/d)
        p = quadratic_problem(2, r=1.0)
        rngen = np.random.default_rng(6)
        x = rngen.uniform(-0.6, 0.6, size=(100, 2))
        h = 1e-4
        lap = np.zeros(100)
        grad = np.zeros((100, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            up, um, u0 = p.reference(x + e), p.reference(x - e), p.reference(x)
            lap += (up - 2 * u0 + um) / h**2
            grad[:, i] = (up - um) / (2 * h)
        residual = lap + np.sum(grad**2, axis=1) - 2.0 * np.exp(-p.reference(x))
        assert np.max(np.abs(residual)) < 1e-4


class TestIntensityMatrix:
    def test_d2_exact(self):
        Q = intensity_matrix(2)
        assert np.array_equal(Q, np.array([[-0.25, 0.25], [0.5, -0.5]]))

    def test_d4_subdiagonal_entry(self):
        Q = intensity_matrix(4)
        assert Q[2, 1] == 0.25  # row 3, column 2 in 1-based terms

    def test_row_sums_zero_d100(self):
        Q = intensity_matrix(100)
        assert np.allclose(Q.sum(axis=1), 0.0, atol=1e-15)

    def test_rejects_small_d(self):
        with pytest.raises(ValueError):
            intensity_matrix(1)

    @settings(derandomize=True, max_examples=127)
    @given(d=st.integers(2, 128))
    def test_row_sums_and_sign_structure(self, d):
        Q = intensity_matrix(d)
        assert np.allclose(Q.sum(axis=1), 0.0, atol=1e-15)
        off = Q - np.diag(np.diag(Q))
        assert np.all(off >= 0.0)
        assert np.all(np.diag(Q) <= 0.0)


class TestDividend:
    def test_default_trend_values(self):
        params = DividendParams(d=2)
        assert np.allclose(params.a, [1.5, 1.0])

    def test_nu_hand_value(self):
        p = dividend_problem(DividendParams(d=2))
        mu = p.drift(np.array([[0.5, 2.0]]))
        assert mu[0, 1] == pytest.approx(1.25, abs=1e-15)  # nu = 1 + 0.5*0.5

    def test_generator_indicator_off(self):
        p = dividend_problem(DividendParams(d=2))
        zeta = np.array([[0.0, 2.0]])
        f = p.generator(np.zeros((1, 2)), np.ones(1), zeta)
        assert f[0] == pytest.approx(-0.5, abs=1e-15)

    def test_generator_indicator_tie_pays(self):
        p = dividend_problem(DividendParams(d=2))
        zeta = np.array([[0.0, 1.0]])
        f = p.generator(np.zeros((1, 2)), np.zeros(1), zeta)
        assert f[0] == pytest.approx(0.0, abs=1e-15)  # K(1-1) = 0, on the payout branch
        zeta = np.array([[0.0, 0.5]])
        f = p.generator(np.zeros((1, 2)), np.zeros(1), zeta)
        assert f[0] == pytest.approx(1.8 * 0.5, abs=1e-15)

    def test_boundary_values(self):
        p = dividend_problem(DividendParams(d=2))
        g = p.terminal_value(np.array([[0.5, 5.0], [0.5, -0.1], [0.5, 6.0]]))
        assert np.allclose(g, [3.6, 0.0, 3.6])

    def test_sigma_rank_one(self):
        p = dividend_problem(DividendParams(d=4))
        rngen = np.random.default_rng(7)
        x = np.column_stack([rngen.uniform(0, 0.4, size=(5, 3)), rngen.uniform(1, 4, size=5)])
        sig = p.diffusion(x)
        assert np.all(sig[:, :, 1:] == 0.0)
        ranks = [np.linalg.matrix_rank(sig[i]) for i in range(5)]
        assert max(ranks) <= 1

    def test_apply_diffusion_consistent_with_matrix(self):
        p = dividend_problem(DividendParams(d=3))
        rngen = np.random.default_rng(8)
        x = np.column_stack([rngen.uniform(0, 0.5, size=(6, 2)), rngen.uniform(0.5, 4.5, size=6)])
        v = rngen.normal(size=(6, 3))
        assert np.allclose(p.apply_diffusion(x, v),
                           np.einsum("nij,nj->ni", p.diffusion(x), v), atol=1e-14)

    def test_projection_clamps_probabilities_only(self):
        p = dividend_problem(DividendParams(d=3))
        x = np.array([[-0.2, 1.4, 7.0]])
        out = p.project_state(x.copy())
        assert np.allclose(out, [[0.0, 1.0, 7.0]])

    def test_domain_is_surplus_interval(self):
        p = dividend_problem(DividendParams(d=2))
        x = np.array([[0.5, 2.0], [0.5, 0.0], [0.5, 5.0], [0.5, -1.0], [2.0, 3.0]])
        assert np.array_equal(p.inside_domain(x), [True, False, False, False, True])

    @settings(derandomize=True, max_examples=40)
    @given(d=st.integers(2, 12), seed=st.integers(0, 10**6))
    def test_nu_range_on_simplex(self, d, seed):
        params = DividendParams(d=d)
        p = dividend_problem(params)
        rngen = np.random.default_rng(seed)
        w = rngen.dirichlet(np.ones(d), size=8)  # includes the implicit last weight
        x = np.column_stack([w[:, :d - 1], rngen.uniform(0.5, 4.5, size=8)])
        mu = p.drift(x)
        nu = mu[:, d - 1]
        assert np.all(nu >= params.a.min() - 1e-12)
        assert np.all(nu <= params.a.max() + 1e-12)

    def test_generator_payout_bounds(self):
        p = dividend_problem(DividendParams(d=2))
        rngen = np.random.default_rng(9)
        zeta = rngen.normal(size=(200, 2)) * 3
        payout = p.generator(np.zeros((200, 2)), np.zeros(200), zeta)
        zl = zeta[:, 1]
        assert np.all(payout[zl <= 1.0] >= 0.0)
        assert np.all(payout <= 1.8 * (1.0 + np.abs(zl)) + 1e-12)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            DividendParams(d=1)
        with pytest.raises(ValueError):
            DividendParams(d=2, delta=0.0)
        with pytest.raises(ValueError):
            DividendParams(d=2, a=np.array([1.0]))
        bad_q = np.array([[0.5, -0.5], [0.5, -0.5]])
        with pytest.raises(ValueError):
            DividendParams(d=2, Q=bad_q)


def test_build_problem_registry():
    assert build_problem("poisson", 2).name == "poisson"
    assert build_problem("quadratic", 3, r=2.0).params["r"] == 2.0
    assert build_problem("dividend", 2).dim == 2
    with pytest.raises(ValueError):
        build_problem("heat", 2)


def test_default_horizons_scale_with_dimension():
    assert poisson_problem(2).cutoff_time == pytest.approx(0.5)
    assert poisson_problem(100).cutoff_time == pytest.approx(0.01)
    assert poisson_problem(25).cutoff_time == pytest.approx(0.04)
    assert quadratic_problem(2).cutoff_time == pytest.approx(5.0)
    assert quadratic_problem(100).cutoff_time == pytest.approx(0.1)
