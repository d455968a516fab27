import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehrenfest.brackets import (
    casimir_det_functional,
    casimir_functional,
    covariance_bracket,
    matrix_coordinate,
    moment_bracket,
    z_coordinate,
)
from ehrenfest.core import (
    Harmonic,
    MomentFunctional,
    Morse,
    PolynomialPotential,
    Quartic,
    Step,
    make_symplectic_form,
)
from ehrenfest.gaussian import (
    ClosureSpec,
    FiveMoments,
    MomentState,
    closure_energy,
    conservative_fourth_order_rhs,
    covariance_rhs,
    five_moments,
    fourth_order_energy,
    gaussian_energy,
    moment_energy_from_covariance,
    moment_rhs,
    nonconservative_fourth_order_rhs,
)

from conftest import random_admissible_covariance
from helpers import random_polynomial_energy


def random_moment_state(rng, n=1):
    z = rng.uniform(-1, 1, 2 * n)
    S = random_admissible_covariance(rng, 2 * n)
    return z, S, 0.5 * (S + np.outer(z, z))


def oracle_moment_rhs(H, z, X):
    d = z.size
    dz = np.array([moment_bracket(z_coordinate(i, d // 2), H, z, X).value for i in range(d)])
    dX = np.array([[moment_bracket(matrix_coordinate(i, j, d // 2), H, z, X).value
                    for j in range(d)] for i in range(d)])
    return dz, dX


def oracle_covariance_rhs(h, z, S):
    d = z.size
    dz = np.array([covariance_bracket(z_coordinate(i, d // 2), h, z, S).value for i in range(d)])
    dS = np.array([[covariance_bracket(matrix_coordinate(i, j, d // 2), h, z, S).value
                    for j in range(d)] for i in range(d)])
    return dz, dS


def five_from_flow(z, dz, dS):
    q, p = z
    dq, dp = dz
    return np.array([dq, dp, dS[0, 0] + 2 * q * dq, dS[1, 1] + 2 * p * dp,
                     dS[0, 1] + dq * p + q * dp])


class TestStateTypes:
    def test_moment_state_from_covariance(self):
        s = MomentState.from_covariance([1.0, 0.0], np.eye(2))
        np.testing.assert_allclose(s.X, [[1.0, 0.0], [0.0, 0.5]])
        np.testing.assert_allclose(s.Sigma, np.eye(2))
        assert s.n == 1

    def test_inadmissible_second_moment_rejected(self):
        with pytest.raises(ValueError):
            MomentState([1.0, 0.0], 0.5 * np.eye(2))

    def test_asymmetric_second_moment_rejected(self):
        with pytest.raises(ValueError):
            MomentState([0.0, 0.0], [[1.0, 0.2], [0.0, 1.0]])

    def test_closure_order_bounded_by_derivatives(self):
        with pytest.raises(ValueError):
            ClosureSpec(Morse(derivative_order=3), truncation_order=4)
        assert ClosureSpec(Quartic(), truncation_order=5).odd_truncation

    def test_five_moment_round_trip(self):
        z, S = np.array([0.3, -0.4]), np.array([[0.6, 0.1], [0.1, 0.9]])
        m = five_moments(z, S)
        z2, S2 = m.covariance()
        np.testing.assert_allclose(z2, z)
        np.testing.assert_allclose(S2, S)
        np.testing.assert_array_equal(FiveMoments.from_array(m.as_array()).as_array(), m.as_array())


class TestGaussianEnergy:
    def test_harmonic_second_order(self):
        spec = ClosureSpec(Harmonic(), truncation_order=2)
        assert gaussian_energy(spec, MomentState.from_covariance([1.0, 0.0], 0.5 * np.eye(2))) == \
            pytest.approx(1.0)

    def test_quartic_fourth_order_at_origin(self):
        # potential part V''(0) s/2 + 3 V''''(0) s^2/24 = 0.75; kinetic part s_pp/2 = 0.5
        spec = ClosureSpec(Quartic(lam=1.0), truncation_order=4)
        h = gaussian_energy(spec, (np.zeros(2), np.eye(2)))
        assert h == pytest.approx(1.25)
        assert h - 0.5 == pytest.approx(0.75)

    @pytest.mark.parametrize("pot", [Harmonic(), Quartic(), Morse(), PolynomialPotential((1, 2, 3, 4))],
                             ids=lambda p: p.kind)
    def test_classical_limit(self, pot):
        z = np.array([0.4, 1.1])
        h = gaussian_energy(ClosureSpec(pot), (z, 1e-14 * np.eye(2)))
        assert h == pytest.approx(0.5 * z[1] ** 2 + pot(z[0]), abs=1e-12)

    def test_quartic_closure_is_exact_gaussian_average(self):
        # <q^4> for a Gaussian: q^4 + 6 q^2 s + 3 s^2
        q, s = 0.7, 0.3
        h = gaussian_energy(ClosureSpec(Quartic(lam=4.0)), ([q, 0.0], np.diag([s, 0.2])))
        assert h == pytest.approx(q ** 4 + 6 * q * q * s + 3 * s * s + 0.1)

    def test_step_uses_smeared_step(self):
        h = gaussian_energy(ClosureSpec(Step(mu=2.0)), ([0.0, 0.0], np.eye(2)))
        assert h == pytest.approx(0.5 + 1.0)

    @pytest.mark.parametrize("pot", [Quartic(0.5), Morse(1.0, 1.2), Step(1.5)], ids=lambda p: p.kind)
    def test_closure_partials_match_finite_differences(self, pot, rng):
        h = closure_energy(ClosureSpec(pot))
        fd = MomentFunctional(h.value)
        for _ in range(5):
            z, S, _ = random_moment_state(rng)
            for a, b in zip(h.gradients(z, S), fd.gradients(z, S)):
                np.testing.assert_allclose(a, b, atol=1e-7)

    def test_two_dof_is_separable(self):
        h = closure_energy(ClosureSpec(Harmonic(), 2))
        z = np.array([1.0, 2.0, 0.5, 0.0])
        S = np.diag([0.5, 0.7, 0.9, 1.1])
        expected = 0.5 * (0.25 + 0.9 + 1.1) + 0.5 * (1.0 + 0.5) + 0.5 * (4.0 + 0.7)
        assert h(z, S) == pytest.approx(expected)


class TestMomentRhs:
    def test_harmonic_ground_state_is_stationary(self):
        H = MomentFunctional(lambda z, X: np.trace(X), lambda z, X: (np.zeros(2), np.eye(2)))
        dz, dX = moment_rhs(H, ([1.0, 0.0], 0.5 * np.eye(2)))
        np.testing.assert_allclose(dz, [0.0, -1.0])
        # the given pair is inadmissible for a mean of 1; the flow value is still defined
        np.testing.assert_allclose(dX, oracle_moment_rhs(H, np.array([1.0, 0.0]), 0.5 * np.eye(2))[1],
                                   atol=1e-14)
        dz0, dX0 = moment_rhs(H, MomentState(np.zeros(2), 0.5 * np.eye(2)))
        np.testing.assert_allclose(dX0, 0.0, atol=1e-15)

    def test_free_particle_second_moment(self):
        H = MomentFunctional(lambda z, X: X[1, 1], lambda z, X: (np.zeros(2), np.diag([0.0, 1.0])))
        _, dX = moment_rhs(H, MomentState(np.zeros(2), 0.5 * np.eye(2)))
        np.testing.assert_allclose(dX, [[0.0, 0.5], [0.5, 0.0]])

    def test_constant_generator(self):
        H = MomentFunctional(lambda z, X: 3.0, lambda z, X: (np.zeros(2), np.zeros((2, 2))))
        dz, dX = moment_rhs(H, MomentState([0.2, 0.1], np.eye(2)))
        assert not dz.any() and not dX.any()

    def test_asymmetric_partial_rejected(self):
        H = MomentFunctional(lambda z, X: 0.0,
                             lambda z, X: (np.zeros(2), np.array([[0.0, 1.0], [0.0, 0.0]])))
        with pytest.raises(ValueError):
            moment_rhs(H, MomentState(np.zeros(2), np.eye(2)))
        with pytest.raises(ValueError):
            covariance_rhs(H, MomentState(np.zeros(2), np.eye(2)))

    @pytest.mark.parametrize("n", [1, 2])
    def test_oracle_equivalence(self, n, rng):
        for _ in range(3):
            H = random_polynomial_energy(rng, n)
            for _ in range(4):
                z, S, X = random_moment_state(rng, n)
                dz, dX = moment_rhs(H, MomentState(z, X))
                oz, oX = oracle_moment_rhs(H, z, X)
                np.testing.assert_allclose(dz, oz, atol=1e-9)
                np.testing.assert_allclose(dX, oX, atol=1e-9)
                np.testing.assert_array_equal(dX, dX.T)

    def test_energy_and_casimirs_are_conserved(self, rng):
        cas = [casimir_functional(j) for j in (1, 2, 3)] + [casimir_det_functional()]
        for _ in range(10):
            H = random_polynomial_energy(rng, 1)
            z, S, X = random_moment_state(rng)
            dz, dX = moment_rhs(H, (z, X))
            for F in [H] + cas:
                Fz, FX = F.gradients(z, X)
                rate = Fz @ dz + np.trace(FX @ dX)
                assert abs(rate) < 1e-9 * max(1.0, np.abs(Fz).max(), np.abs(FX).max())

    def test_classical_limit(self, rng):
        a = rng.normal(size=2)
        H = MomentFunctional(lambda z, X: float(a @ z + z[0] ** 2 * z[1]),
                             lambda z, X: (a + np.array([2 * z[0] * z[1], z[0] ** 2]),
                                           np.zeros((2, 2))))
        z = np.array([0.3, -0.8])
        dz, _ = moment_rhs(H, (z, np.eye(2)))
        np.testing.assert_allclose(dz, make_symplectic_form(1) @ H.gradients(z, np.eye(2))[0])

    def test_finite_difference_energy(self, rng):
        H = random_polynomial_energy(rng)
        fd = MomentFunctional(H.value)
        z, S, X = random_moment_state(rng)
        for a, b in zip(moment_rhs(H, (z, X)), moment_rhs(fd, (z, X))):
            np.testing.assert_allclose(a, b, atol=1e-6)


class TestCovarianceRhs:
    def test_harmonic_ground_covariance_stationary(self):
        h = MomentFunctional(lambda z, S: 0.5 * np.trace(S),
                             lambda z, S: (np.zeros(2), 0.5 * np.eye(2)))
        _, dS = covariance_rhs(h, (np.zeros(2), np.eye(2)))
        np.testing.assert_allclose(dS, 0.0, atol=1e-15)

    def test_free_particle_riccati_flow(self):
        h = MomentFunctional(lambda z, S: 0.5 * S[1, 1],
                             lambda z, S: (np.zeros(2), np.diag([0.0, 0.5])))
        _, dS = covariance_rhs(h, (np.zeros(2), np.eye(2)))
        np.testing.assert_allclose(dS, [[0.0, 1.0], [1.0, 0.0]])

    def test_independent_of_covariance(self):
        h = MomentFunctional(lambda z, S: z[0] * z[1], lambda z, S: ((z[1], z[0]), np.zeros((2, 2))))
        dz, dS = covariance_rhs(h, (np.array([1.0, 2.0]), np.eye(2)))
        np.testing.assert_allclose(dz, [1.0, -2.0])
        assert not dS.any()

    def test_quadratic_hamiltonian_matches_riccati(self, rng):
        K = rng.normal(size=(2, 2))
        Hs = K + K.T
        h = MomentFunctional(lambda z, S: 0.5 * (z @ Hs @ z + np.trace(Hs @ S)),
                             lambda z, S: (Hs @ z, 0.5 * Hs))
        z, S, _ = random_moment_state(rng)
        A = make_symplectic_form(1) @ Hs
        _, dS = covariance_rhs(h, (z, S))
        np.testing.assert_allclose(dS, A @ S + S @ A.T, atol=1e-13)

    def test_oracle_equivalence(self, rng):
        for _ in range(3):
            h = random_polynomial_energy(rng)
            for _ in range(4):
                z, S, _ = random_moment_state(rng)
                dz, dS = covariance_rhs(h, (z, S))
                oz, oS = oracle_covariance_rhs(h, z, S)
                np.testing.assert_allclose(dz, oz, atol=1e-9)
                np.testing.assert_allclose(dS, oS, atol=1e-9)

    def test_chain_rule_against_moment_flow(self, rng):
        for pot in (Quartic(0.7), Morse(1.0, 0.9)):
            h = closure_energy(ClosureSpec(pot))
            H = moment_energy_from_covariance(h)
            for _ in range(5):
                z, S, X = random_moment_state(rng)
                dz, dS = covariance_rhs(h, (z, S))
                mz, dX = moment_rhs(H, (z, X))
                np.testing.assert_allclose(dz, mz, atol=1e-12)
                np.testing.assert_allclose(dS, 2 * dX - np.outer(mz, z) - np.outer(z, mz),
                                           atol=1e-9)

    def test_determinant_invariant(self, rng):
        h = closure_energy(ClosureSpec(Morse()))
        z, S, _ = random_moment_state(rng)
        _, dS = covariance_rhs(h, (z, S))
        assert abs(np.trace(np.linalg.det(S) * np.linalg.inv(S) @ dS)) < 1e-12


class TestFourthOrderSystem:
    def test_harmonic_example(self):
        out = conservative_fourth_order_rhs(Harmonic(), [1.0, 0.0, 1.5, 0.5, 0.0])
        np.testing.assert_allclose(out, [0.0, -1.0, 0.0, 0.0, -1.0])

    def test_quartic_variants_coincide(self, rng):
        for _ in range(10):
            m = five_moments(*random_moment_state(rng)[:2]).as_array()
            np.testing.assert_array_equal(conservative_fourth_order_rhs(Quartic(), m),
                                          nonconservative_fourth_order_rhs(Quartic(), m))

    def test_morse_difference_is_fifth_derivative_term(self):
        pot = Morse(1.0, 1.0)
        m = five_moments([0.3, 0.0], np.eye(2))
        diff = conservative_fourth_order_rhs(pot, m) - nonconservative_fourth_order_rhs(pot, m)
        assert diff[1] == pytest.approx(-pot.derivative(5, 0.3) / 8.0, rel=1e-14)
        assert diff[0] == diff[2] == 0.0

    def test_fixed_point(self):
        out = conservative_fourth_order_rhs(Morse(), [0.0, 0.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(out, 0.0, atol=1e-15)

    def test_needs_fifth_derivative(self):
        with pytest.raises(ValueError):
            conservative_fourth_order_rhs(Morse(derivative_order=4), [0.0] * 5)

    @pytest.mark.parametrize("pot", [Morse(1.0, 1.0), Quartic(0.3),
                                     PolynomialPotential((0, 0.1, 0.5, -0.2, 0.05, 0.02))],
                             ids=lambda p: p.kind)
    def test_equals_bracket_flow_of_closure_energy(self, pot, rng):
        h = closure_energy(ClosureSpec(pot, 4))
        for _ in range(20):
            z, S, _ = random_moment_state(rng)
            flow = five_from_flow(z, *covariance_rhs(h, (z, S)))
            printed = conservative_fourth_order_rhs(pot, five_moments(z, S))
            np.testing.assert_allclose(printed, flow, atol=1e-10)

    def test_energy_matches_closure(self, rng):
        pot = Morse(0.8, 1.3)
        z, S, _ = random_moment_state(rng)
        assert fourth_order_energy(pot, five_moments(z, S)) == pytest.approx(
            gaussian_energy(ClosureSpec(pot, 4), (z, S)), rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(q=st.floats(-1.5, 1.5), p=st.floats(-1.5, 1.5), s=st.floats(0.05, 1.0),
       r=st.floats(0.05, 1.0), c=st.floats(-0.9, 0.9))
def test_conservative_fourth_order_conserves_energy(q, p, s, r, c):
    pot = Morse(1.0, 1.0)
    S = np.array([[s, c * np.sqrt(s * r)], [c * np.sqrt(s * r), r]])
    m = five_moments([q, p], S).as_array()
    dm = conservative_fourth_order_rhs(pot, m)
    eps = 1e-6
    grad = np.array([(fourth_order_energy(pot, m + eps * e) - fourth_order_energy(pot, m - eps * e))
                     / (2 * eps) for e in np.eye(5)])
    assert abs(grad @ dm) < 1e-7
