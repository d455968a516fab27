import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehrenfest.brackets import (
    AxiomReport,
    BracketReport,
    bracket_axiom_suite,
    canonical_bracket,
    casimir,
    casimir_det,
    casimir_det_functional,
    casimir_functional,
    covariance_bracket,
    matrix_coordinate,
    moment_bracket,
    z_coordinate,
)
from ehrenfest.core import MomentFunctional

from conftest import random_admissible_covariance


def trace_functional(A):
    A = np.asarray(A, dtype=float)
    return MomentFunctional(lambda z, M: float(np.trace(M @ A)),
                            lambda z, M: (np.zeros(len(z)), 0.5 * (A + A.T)))


class TestCanonicalBracket:
    def test_canonical_pair(self):
        assert canonical_bracket(lambda x: x[0], lambda x: x[1], [0.3, -1.2]) == pytest.approx(1.0)

    def test_quadratic_pair(self):
        val = canonical_bracket(lambda x: x[0] ** 2 / 2, lambda x: x[1] ** 2 / 2, [2.0, 3.0])
        assert val == pytest.approx(6.0, rel=1e-8)

    def test_self_bracket_vanishes(self):
        f = lambda x: np.sin(x[0]) * x[1] ** 3
        assert canonical_bracket(f, f, [0.4, 0.9]) == pytest.approx(0.0, abs=1e-12)

    def test_non_finite_field_reported(self):
        with pytest.raises(FloatingPointError):
            canonical_bracket(lambda x: 1.0 / (x[0] - 0.5) if x[0] != 0.5 else np.inf,
                              lambda x: x[1], [0.5, 0.0])


class TestMomentBracket:
    def test_mean_coordinates(self, rng):
        z = rng.normal(size=2)
        X = 0.5 * (random_admissible_covariance(rng) + np.outer(z, z))
        rep = moment_bracket(z_coordinate(0, 1), z_coordinate(1, 1), z, X)
        assert rep.value == pytest.approx(1.0)
        assert rep.method == "analytic" and rep.fd_step is None

    def test_antisymmetry_of_identical_arguments(self):
        F = MomentFunctional(lambda z, X: z[0] * X[1, 1] + X[0, 1] ** 2)
        rep = moment_bracket(F, F, [0.2, 0.1], [[1.0, 0.1], [0.1, 0.7]])
        assert rep.value == pytest.approx(0.0, abs=1e-9)
        assert rep.method == "finite_difference" and rep.fd_step == 1e-5

    def test_diagonal_trace_functionals_commute_at_half_identity(self):
        F = trace_functional(np.diag([1.0, 0.0]))
        G = trace_functional(np.diag([0.0, 1.0]))
        assert moment_bracket(F, G, np.zeros(2), 0.5 * np.eye(2)).value == pytest.approx(0.0, abs=1e-15)

    def test_second_moment_of_free_flight(self):
        # {X_qq, X_pp}: d<q^2>/2 along H = <p^2>/2 is <qp>
        X = np.array([[0.8, 0.3], [0.3, 0.6]])
        val = moment_bracket(matrix_coordinate(0, 0, 1), matrix_coordinate(1, 1, 1),
                             np.zeros(2), X).value
        assert val == pytest.approx(2.0 * X[0, 1])

    def test_non_finite_value_rejected(self):
        with pytest.raises(FloatingPointError):
            BracketReport(float("nan"), "analytic")


class TestCovarianceBracket:
    def test_direct_sum_has_no_cross_terms(self):
        rep = covariance_bracket(z_coordinate(0, 1), matrix_coordinate(0, 0, 1),
                                 [0.5, 0.5], np.eye(2))
        assert rep.value == 0.0

    def test_diagonal_entries_commute_at_identity(self):
        rep = covariance_bracket(matrix_coordinate(0, 0, 1), matrix_coordinate(1, 1, 1),
                                 np.zeros(2), np.eye(2))
        assert rep.value == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("sigma, tau", [(1.0, 1.0), (0.7, 2.5), (3.0, 0.2)])
    def test_variance_against_symmetrized_cross_entry(self, sigma, tau):
        rep = covariance_bracket(matrix_coordinate(0, 0, 1), matrix_coordinate(0, 1, 1),
                                 np.zeros(2), np.diag([sigma, tau]))
        assert rep.value == pytest.approx(2.0 * sigma)


class TestCasimirs:
    def test_determinant_at_ground_state(self):
        assert casimir_det(np.zeros(2), 0.5 * np.eye(2)) == pytest.approx(1.0)

    def test_trace_casimir_at_ground_state(self):
        assert casimir(1, np.zeros(2), 0.5 * np.eye(2)) == pytest.approx(-0.25)

    def test_determinant_with_mean(self):
        assert casimir_det([1.0, 0.0], np.diag([1.0, 0.5])) == pytest.approx(1.0)

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            casimir(4, np.zeros(2), np.eye(2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            casimir(1, np.zeros(2), np.eye(4))

    def test_one_dof_trace_casimir_is_minus_half_determinant(self, rng):
        for _ in range(10):
            z = rng.normal(size=2)
            S = random_admissible_covariance(rng)
            X = 0.5 * (S + np.outer(z, z))
            assert casimir(1, z, X) == pytest.approx(-0.25 * np.linalg.det(S))

    @pytest.mark.parametrize("j", [1, 2, 3])
    def test_casimir_partials_match_finite_differences(self, j, rng):
        C = casimir_functional(j)
        FD = MomentFunctional(C.value)
        z = rng.normal(size=4)
        X = 0.5 * (random_admissible_covariance(rng, 4) + np.outer(z, z))
        for a, b in zip(C.gradients(z, X), FD.gradients(z, X)):
            np.testing.assert_allclose(a, b, atol=1e-7)

    def test_casimirs_commute_with_quadratic_observables(self, rng):
        casimirs = [casimir_functional(j) for j in (1, 2, 3)] + [casimir_det_functional()]
        worst = 0.0
        for _ in range(20):
            A = rng.uniform(-1, 1, (2, 2))
            b = rng.uniform(-1, 1, 2)
            F = MomentFunctional(lambda z, X, A=A, b=b: float(np.trace(X @ (A + A.T)) + b @ z),
                                 lambda z, X, A=A, b=b: (b, A + A.T))
            z = rng.normal(size=2)
            X = 0.5 * (random_admissible_covariance(rng) + np.outer(z, z))
            for C in casimirs:
                worst = max(worst, abs(moment_bracket(C, F, z, X).value))
        assert worst < 1e-8


class TestAxiomSuite:
    @pytest.mark.parametrize("bracket", ["canonical", "moment", "covariance"])
    def test_analytic_defects(self, bracket):
        rep = bracket_axiom_suite(bracket, samples=10, seed=3)
        assert rep.max_defect() < 1e-10

    @pytest.mark.parametrize("bracket", ["canonical", "moment"])
    def test_finite_difference_defects(self, bracket):
        rep = bracket_axiom_suite(bracket, samples=5, seed=5, method="finite_difference")
        assert rep.fd_step == 1e-4
        assert rep.max_defect() < 1e-6

    def test_two_dof_moment_bracket(self):
        assert bracket_axiom_suite("moment", samples=3, seed=1, n=2).max_defect() < 1e-10

    def test_deterministic_in_seed(self):
        a = bracket_axiom_suite("moment", samples=3, seed=11)
        b = bracket_axiom_suite("moment", samples=3, seed=11)
        assert a.to_csv() == b.to_csv()

    def test_report_formats(self):
        rep = bracket_axiom_suite("canonical", samples=2, seed=0)
        assert isinstance(rep, AxiomReport)
        header, row = rep.to_csv().strip().split("\n")
        assert header.split(",")[:3] == ["bracket", "method", "samples"]
        assert "casimir=n/a" in str(rep)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            bracket_axiom_suite("moment", samples=0)
        with pytest.raises(ValueError):
            bracket_axiom_suite("lie", samples=1)
        with pytest.raises(ValueError):
            bracket_axiom_suite("moment", samples=1, method="symbolic")


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2), q=st.floats(-2, 2),
       p=st.floats(-2, 2))
def test_canonical_bracket_of_quadratics_is_antisymmetric(a, b, c, q, p):
    f = lambda x: a * x[0] ** 2 + b * x[0] * x[1]
    g = lambda x: c * x[1] ** 2 + x[0]
    assert canonical_bracket(f, g, [q, p]) == pytest.approx(-canonical_bracket(g, f, [q, p]),
                                                            abs=1e-8)
