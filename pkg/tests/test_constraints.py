import cvxpy as cp
import numpy as np
import pytest

from covert_isac import constraints as cons

from conftest import crandn, random_psd


class TestEmbedding:
    def test_identity(self):
        np.testing.assert_array_equal(cons.embed_complex(np.eye(3)), np.eye(6))

    def test_two_by_two_imaginary_case(self):
        h = np.zeros((2, 2), dtype=complex)
        h[0, 1] = 1j
        h[1, 0] = -1j
        r = cons.embed_complex(h)
        y = np.array([[0.0, 1.0], [-1.0, 0.0]])
        np.testing.assert_array_equal(r[:2, 2:], -y)
        np.testing.assert_array_equal(r[2:, :2], y)
        vals = np.linalg.eigvalsh(r)
        np.testing.assert_allclose(sorted(set(np.round(vals, 12))), [-1.0, 1.0])

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            h = random_psd(rng, 5) + 0.3 * 1j * (lambda a: a - a.T)(rng.standard_normal((5, 5)))
            h = (h + h.conj().T) / 2
            assert np.abs(cons.lift_real(cons.embed_complex(h)) - h).max() <= 1e-12

    def test_psd_preserved(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            h = random_psd(rng, 6)
            r = cons.embed_complex(h)
            assert np.linalg.eigvalsh(r).min() >= -1e-10
            assert np.trace(r) == pytest.approx(2 * np.trace(h).real, rel=1e-12)

    def test_quadratic_form_convention(self):
        # stacked real vector (Re v, Im v) reproduces Re(v^H H v) exactly.
        rng = np.random.default_rng(2)
        for _ in range(50):
            h = random_psd(rng, 4)
            v = crandn(rng, 4)
            vt = np.concatenate([v.real, v.imag])
            assert vt @ cons.embed_complex(h) @ vt == pytest.approx(
                float(np.real(v.conj() @ h @ v)), rel=1e-10)

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError, match="Hermitian"):
            cons.embed_complex(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_lift_shape_check(self):
        with pytest.raises(ValueError):
            cons.lift_real(np.eye(3))


class TestHermitianSqrt:
    def test_square_recovers(self):
        rng = np.random.default_rng(3)
        m = random_psd(rng, 5)
        root = cons.hermitian_sqrt(m)
        np.testing.assert_allclose(root @ root, m, atol=1e-10)

    def test_negative_noise_floored_with_warning(self):
        m = np.diag([1.0, -1e-3]).astype(complex)
        with pytest.warns(RuntimeWarning, match="flooring"):
            root = cons.hermitian_sqrt(m)
        assert root[1, 1] == 0.0

    def test_small_noise_silent(self):
        m = np.diag([1.0, -1e-12]).astype(complex)
        root = cons.hermitian_sqrt(m)
        assert root[1, 1] == 0.0


class TestS1Matrix:
    def test_composition(self):
        rng = np.random.default_rng(4)
        w1, t = random_psd(rng, 4), random_psd(rng, 4)
        s1 = cons.s1_matrix(w1, t, 0.1, 1.0, 10.0, 5.0)
        np.testing.assert_allclose(s1, w1 - 0.18 * t, atol=1e-14)

    def test_affine_in_both_arguments(self):
        rng = np.random.default_rng(5)
        w_a, w_b = random_psd(rng, 4), random_psd(rng, 4)
        t_a, t_b = random_psd(rng, 4), random_psd(rng, 4)
        lhs = cons.s1_matrix(2 * w_a + 3 * w_b, 2 * t_a + 3 * t_b, 0.1, 1.0, 10.0, 5.0)
        rhs = (2 * cons.s1_matrix(w_a, t_a, 0.1, 1.0, 10.0, 5.0)
               + 3 * cons.s1_matrix(w_b, t_b, 0.1, 1.0, 10.0, 5.0))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestSProcedure:
    def test_negative_identity_block_is_psd(self):
        # S1 = -I with zero multiplier: the block reduces to
        # [[I, h], [h^H, h^H h]], PSD because its Schur complement vanishes.
        rng = np.random.default_rng(6)
        h = crandn(rng, 5)
        w1 = np.zeros((5, 5), dtype=complex)
        t = np.eye(5, dtype=complex) / 0.18
        block = cons.s_procedure_lmi(w1, t, h, eps_w=1.0, lam=0.0, epsilon=0.1,
                                     p_a_min=1.0, p_a_max=10.0, p_a=5.0)
        s1 = cons.s1_matrix(w1, t, 0.1, 1.0, 10.0, 5.0)
        np.testing.assert_allclose(s1, -np.eye(5), atol=1e-12)
        vals = np.linalg.eigvalsh((block.block + block.block.conj().T) / 2)
        assert vals.min() >= -1e-10

    def test_zero_radius_reduces_to_point_constraint(self):
        rng = np.random.default_rng(7)
        h = crandn(rng, 4)
        n = 4
        w1 = cp.Variable((n, n), hermitian=True)
        t = cp.Variable((n, n), hermitian=True)
        lam = cp.Variable(nonneg=True)
        block = cons.s_procedure_lmi(w1, t, h, 0.0, lam, 0.1, 1.0, 10.0, 5.0)
        prob = cp.Problem(
            cp.Maximize(cp.real(h.conj() @ w1 @ h)),
            [w1 >> 0, t >> 0, cp.real(cp.trace(t)) == 5.0,
             cp.real(cp.trace(w1)) <= 5.0, block.block >> 0])
        prob.solve(solver=cp.CLARABEL)
        s1 = cons.s1_matrix(w1.value, t.value, 0.1, 1.0, 10.0, 5.0)
        assert float(np.real(h.conj() @ s1 @ h)) <= 1e-7

    def test_feasible_instance_passes_sampling_verifier(self):
        rng = np.random.default_rng(8)
        n = 5
        h = crandn(rng, n)
        eps_w = 0.1 * float(np.linalg.norm(h))
        w1 = cp.Variable((n, n), hermitian=True)
        t = cp.Variable((n, n), hermitian=True)
        lam = cp.Variable(nonneg=True)
        block = cons.s_procedure_lmi(w1, t, h, eps_w, lam, 0.1, 1.0, 10.0, 5.0)
        prob = cp.Problem(
            cp.Maximize(cp.real(h.conj() @ w1 @ h)),
            [w1 >> 0, t >> 0, cp.real(cp.trace(t)) == 5.0,
             cp.real(cp.trace(w1)) <= 5.0, block.block >> 0])
        prob.solve(solver=cp.CLARABEL)
        assert prob.status == cp.OPTIMAL
        worst = cons.verify_s_procedure_by_sampling(
            cons.psd_floor(w1.value), cons.psd_floor(t.value), h, eps_w,
            0.1, 1.0, 10.0, 5.0, np.random.default_rng(9), n_samples=10**5)
        assert worst <= 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            cons.s_procedure_lmi(np.eye(3), np.eye(3), np.ones(4), 0.1, 0.0,
                                 0.1, 1.0, 10.0, 5.0)

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            cons.s_procedure_lmi(np.eye(3), np.eye(3), np.ones(3), -0.1, 0.0,
                                 0.1, 1.0, 10.0, 5.0)


class TestBti:
    def test_direct_substitution_case(self):
        # S1 = -I, unit covariance, zero estimate: A = I, b = 0, c = 0;
        # the triple is satisfiable with x = sqrt(n), y = 0 whenever
        # n >= 2 ln(1/rho_c), which holds at the default array size.
        n = 10
        w1 = np.zeros((n, n), dtype=complex)
        t = np.eye(n, dtype=complex) / 0.18
        a_w, b_w, c_w = cons.bti_data(w1, t, np.zeros(n), np.eye(n), 0.1, 1.0, 10.0, 5.0)
        np.testing.assert_allclose(a_w, np.eye(n), atol=1e-12)
        np.testing.assert_allclose(b_w, np.zeros(n), atol=1e-12)
        assert c_w == pytest.approx(0.0, abs=1e-12)
        triple = cons.bti_constraints(w1, t, np.zeros(n), np.eye(n), 0.05,
                                      0.1, 1.0, 10.0, 5.0, x=float(np.sqrt(n)), y=0.0)
        assert triple.affine_lhs >= 0
        assert triple.soc_norm <= np.sqrt(n) + 1e-12
        assert np.linalg.eigvalsh(triple.psd_block).min() >= -1e-12

    def test_zero_covariance_reduces_to_deterministic(self):
        rng = np.random.default_rng(10)
        n = 4
        h = crandn(rng, n)
        w1 = random_psd(rng, n, scale=1e-3)
        t = random_psd(rng, n, scale=5.0)
        a_w, b_w, c_w = cons.bti_data(w1, t, h, np.zeros((n, n)), 0.1, 1.0, 10.0, 5.0)
        np.testing.assert_allclose(a_w, 0.0, atol=1e-12)
        np.testing.assert_allclose(b_w, 0.0, atol=1e-12)
        s1 = cons.s1_matrix(w1, t, 0.1, 1.0, 10.0, 5.0)
        assert c_w == pytest.approx(-float(np.real(h.conj() @ s1 @ h)), rel=1e-12)

    def test_feasible_instance_empirical_outage_below_target(self):
        rng = np.random.default_rng(11)
        n = 5
        h = crandn(rng, n)
        gamma = 0.01 * float(np.linalg.norm(h) ** 2) / n * np.eye(n)
        w1 = cp.Variable((n, n), hermitian=True)
        t = cp.Variable((n, n), hermitian=True)
        x = cp.Variable(nonneg=True)
        y = cp.Variable(nonneg=True)
        triple = cons.bti_constraints(w1, t, h, gamma, 0.05, 0.1, 1.0, 10.0, 5.0, x, y)
        prob = cp.Problem(
            cp.Maximize(cp.real(h.conj() @ w1 @ h)),
            [w1 >> 0, t >> 0, cp.real(cp.trace(t)) == 5.0,
             cp.real(cp.trace(w1)) <= 5.0] + triple.as_cvxpy_constraints())
        prob.solve(solver=cp.CLARABEL)
        assert prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
        outage = cons.verify_bti_outage(
            cons.psd_floor(w1.value), cons.psd_floor(t.value), h, gamma,
            0.1, 1.0, 10.0, 5.0, np.random.default_rng(12), n_samples=10**5)
        assert outage <= 0.05
        assert cons.bti_feasible_point(cons.psd_floor(w1.value), cons.psd_floor(t.value),
                                       h, gamma, 0.05, 0.1, 1.0, 10.0, 5.0, tol=1e-6)

    def test_rho_domain(self):
        with pytest.raises(ValueError):
            cons.bti_constraints(np.eye(2), np.eye(2), np.ones(2), np.eye(2), 0.0,
                                 0.1, 1.0, 10.0, 5.0, 1.0, 0.0)


class TestStatisticalCovertness:
    def test_zero_information_always_satisfied(self):
        rng = np.random.default_rng(13)
        t = random_psd(rng, 4, scale=5.0)
        slack = cons.statistical_covertness(np.zeros((4, 4)), t, np.eye(4), 40.0, 10.0, 5.0)
        assert slack >= 0

    def test_equality_active_point(self):
        n = 4
        tau_eps = 8.0
        t = (5.0 / n) * np.eye(n)
        w1 = (10.0 / tau_eps / n) * np.eye(n)
        slack = cons.statistical_covertness(w1, t, np.eye(n), tau_eps, 10.0, 5.0)
        assert slack == pytest.approx(0.0, abs=1e-12)

    def test_affine(self):
        rng = np.random.default_rng(14)
        w_a, w_b = random_psd(rng, 4), random_psd(rng, 4)
        t_a, t_b = random_psd(rng, 4), random_psd(rng, 4)
        omega = random_psd(rng, 4)
        f = lambda w, t: cons.statistical_covertness(w, t, omega, 12.0, 10.0, 5.0)
        assert f(2 * w_a + 3 * w_b, 2 * t_a + 3 * t_b) == pytest.approx(
            2 * f(w_a, t_a) + 3 * f(w_b, t_b), rel=1e-10)

    def test_tau_domain(self):
        with pytest.raises(ValueError):
            cons.statistical_covertness(np.eye(2), np.eye(2), np.eye(2), 0.0, 10.0, 5.0)


class TestRateAndPower:
    def test_zero_rate_floor_vacuous_for_psd(self):
        rng = np.random.default_rng(15)
        w1 = random_psd(rng, 4)
        h = crandn(rng, 4)
        assert cons.covert_rate_constraint(w1, np.zeros((4, 4)), h, 0.0, 1e-11) >= -1e-15

    def test_rank_one_substitution(self):
        rng = np.random.default_rng(16)
        h = crandn(rng, 4)
        w = crandn(rng, 4)
        w1 = np.outer(w, w.conj())
        slack = cons.covert_rate_constraint(w1, np.zeros((4, 4)), h, 2.0, 1e-3)
        expected = np.abs(h.conj() @ w) ** 2 - 3.0 * 1e-3
        assert slack == pytest.approx(float(expected), rel=1e-10)

    def test_affine(self):
        rng = np.random.default_rng(17)
        h = crandn(rng, 4)
        w_a, w_b = random_psd(rng, 4), random_psd(rng, 4)
        t_a, t_b = random_psd(rng, 4), random_psd(rng, 4)
        f = lambda w, t: cons.covert_rate_constraint(w, t, h, 1.5, 0.0)
        assert f(2 * w_a + 3 * w_b, 2 * t_a + 3 * t_b) == pytest.approx(
            2 * f(w_a, t_a) + 3 * f(w_b, t_b), rel=1e-10)

    def test_power_rows(self):
        rng = np.random.default_rng(18)
        w1 = random_psd(rng, 4, scale=2.0)
        assert cons.power_constraint(np.zeros((4, 4)), 15.0, 10.0) == pytest.approx(5.0)
        assert cons.power_constraint(w1 * (5.0 / np.trace(w1).real), 15.0, 10.0) == pytest.approx(0.0, abs=1e-12)
        t = random_psd(rng, 4, scale=5.0) * (5.0 / 4)
        t = t * (5.0 / np.trace(t).real)
        assert cons.dfan_power_constraint(t, 5.0) == pytest.approx(0.0, abs=1e-12)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            cons.covert_rate_constraint(np.eye(2), np.eye(2), np.ones(2), -1.0, 1e-3)


class TestDcPenalty:
    def test_aligned_rank_one_is_zero(self):
        rng = np.random.default_rng(19)
        w = crandn(rng, 5)
        w1 = np.outer(w, w.conj())
        assert cons.dc_penalty(w1, w) == pytest.approx(0.0, abs=1e-12)

    def test_identity_two_dim(self):
        rng = np.random.default_rng(20)
        u = crandn(rng, 2)
        assert cons.dc_penalty(np.eye(2, dtype=complex), u) == pytest.approx(1.0, rel=1e-12)

    def test_direct_arithmetic_oracle(self):
        rng = np.random.default_rng(21)
        w1 = random_psd(rng, 6)
        u = crandn(rng, 6)
        u_hat = u / np.linalg.norm(u)
        expected = float(np.trace(w1).real - np.real(u_hat.conj() @ w1 @ u_hat))
        assert cons.dc_penalty(w1, u) == pytest.approx(expected, rel=1e-12)
        assert cons.dc_penalty(w1, u) >= 0

    def test_zero_penalty_implies_rank_one(self):
        rng = np.random.default_rng(22)
        w = crandn(rng, 5)
        w1 = 3.0 * np.outer(w, w.conj()) / np.linalg.norm(w) ** 2
        vals, vecs = np.linalg.eigh(w1)
        leading = vecs[:, -1]
        assert cons.dc_penalty(w1, leading) == pytest.approx(0.0, abs=1e-10)
        assert sum(vals[:-1]) == pytest.approx(0.0, abs=1e-10)

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            cons.dc_penalty(np.eye(3), np.zeros(3))

    def test_affine_in_matrix(self):
        rng = np.random.default_rng(23)
        u = crandn(rng, 4)
        w_a, w_b = random_psd(rng, 4), random_psd(rng, 4)
        assert cons.dc_penalty(2 * w_a + 3 * w_b, u) == pytest.approx(
            2 * cons.dc_penalty(w_a, u) + 3 * cons.dc_penalty(w_b, u), rel=1e-10)


class TestBtiDataAffinity:
    def test_quadratic_event_data_affine(self):
        rng = np.random.default_rng(24)
        n = 4
        h = crandn(rng, n)
        gamma = random_psd(rng, n, scale=0.01)
        w_a, w_b = random_psd(rng, n), random_psd(rng, n)
        t_a, t_b = random_psd(rng, n), random_psd(rng, n)
        a1, b1, c1 = cons.bti_data(w_a, t_a, h, gamma, 0.1, 1.0, 10.0, 5.0)
        a2, b2, c2 = cons.bti_data(w_b, t_b, h, gamma, 0.1, 1.0, 10.0, 5.0)
        a3, b3, c3 = cons.bti_data(2 * w_a + 3 * w_b, 2 * t_a + 3 * t_b, h, gamma,
                                   0.1, 1.0, 10.0, 5.0)
        np.testing.assert_allclose(a3, 2 * a1 + 3 * a2, atol=1e-12)
        np.testing.assert_allclose(b3, 2 * b1 + 3 * b2, atol=1e-12)
        assert c3 == pytest.approx(2 * c1 + 3 * c2, rel=1e-10)
