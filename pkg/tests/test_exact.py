from __future__ import annotations

import json
from fractions import Fraction

import mpmath
import pytest
from mpmath import mpf

from gasket_lerw import exact
from gasket_lerw.exact import (
    PHI_REFERENCE,
    THETA_REFERENCE,
    BivariatePoly,
    CompositionCapExceeded,
    GeneratingFunctionMismatch,
    CrossingLaw,
    build_phi_theta,
    compose_level,
    eigen_data,
    enumerate_self_avoiding_crossings,
    exact_report,
    functional_equation_residual,
    length_mean,
    length_variance,
    mat_pow,
    mean_matrix,
    moment_table,
    shape_table,
    solve_shape_distribution,
    spectral_data,
    type_count_mean,
)
from gasket_lerw.walker import CrossingVariant

F = Fraction

DIRECT_MASSES = [F(1, 2), F(2, 15), F(2, 15), F(1, 30), F(1, 30), F(1, 30), F(2, 15)]
VIA_MASSES = [
    F(1, 9),
    F(11, 90),
    F(11, 90),
    F(2, 45),
    F(2, 45),
    F(2, 45),
    F(8, 45),
    F(2, 9),
    F(1, 18),
    F(1, 18),
]


class TestShapeLaws:
    def test_event_probabilities(self):
        assert solve_shape_distribution(CrossingVariant.DIRECT).event_probability == F(1, 4)
        assert solve_shape_distribution(CrossingVariant.VIA_CORNER).event_probability == F(1, 16)

    def test_direct_masses(self, table):
        assert [s.p_direct for s in table.shapes[:7]] == DIRECT_MASSES
        assert all(s.p_direct == 0 for s in table.shapes[7:])

    def test_via_masses(self, table):
        assert [s.p_via for s in table.shapes] == VIA_MASSES

    def test_columns_normalize(self, table):
        assert sum(s.p_direct for s in table.shapes) == 1
        assert sum(s.p_via for s in table.shapes) == 1

    def test_supports_match_enumeration_oracle(self, table):
        direct_support = {s.path for s in table.shapes if s.p_direct}
        via_support = {s.path for s in table.shapes if s.p_via}
        assert direct_support == enumerate_self_avoiding_crossings(allow_corner=False)
        assert via_support == enumerate_self_avoiding_crossings(allow_corner=True)
        assert direct_support < via_support

    def test_shapes_are_self_avoiding_crossings(self, table):
        from gasket_lerw.eraser import is_self_avoiding

        for s in table.shapes:
            assert is_self_avoiding(s.path)
            assert s.path[0] == (0, 0) and s.path[-1] == (0, 2)
            assert len(s.path) - 1 == s.s1 + 2 * s.s2


class TestGeneratingFunctions:
    def test_reference_forms(self, phi_theta):
        phi, theta = phi_theta
        assert phi == PHI_REFERENCE
        assert theta == THETA_REFERENCE

    def test_normalization(self, phi_theta):
        phi, theta = phi_theta
        assert phi(F(1), F(1)) == 1
        assert theta(F(1), F(1)) == 1

    def test_minimum_degree_two_and_nonnegative(self, phi_theta):
        # Every offspring draw yields at least two cells; this is what makes
        # the limit variables almost surely positive.
        phi, theta = phi_theta
        assert phi.min_total_degree() == 2
        assert theta.min_total_degree() == 2
        assert all(c > 0 for c in phi.coeffs.values())
        assert all(c > 0 for c in theta.coeffs.values())

    def test_mismatch_is_fatal(self, table):
        import dataclasses

        bad = dataclasses.replace(
            table.shapes[0], p_direct=table.shapes[0].p_direct + F(1, 90)
        )
        tampered = exact.ShapeTable(shapes=(bad,) + table.shapes[1:])
        with pytest.raises(GeneratingFunctionMismatch):
            build_phi_theta(tampered)

    def test_composition_base_and_normalization(self, phi_theta):
        phi, theta = phi_theta
        p1, t1 = compose_level(phi, theta, 1)
        assert p1 == phi and t1 == theta
        for n in (2, 3, 4):
            pn, tn = compose_level(phi, theta, n)
            assert pn(F(1), F(1)) == 1
            assert tn(F(1), F(1)) == 1

    def test_composition_cap(self, phi_theta):
        phi, theta = phi_theta
        with pytest.raises(CompositionCapExceeded):
            compose_level(phi, theta, 5)

    def test_both_composition_orders_agree(self, phi_theta):
        # Substituting at the root or at the leaves is the same semigroup map.
        phi, theta = phi_theta
        p2, t2 = compose_level(phi, theta, 2)
        assert p2 == phi.compose(phi, theta).compose(
            BivariatePoly({(1, 0): 1}), BivariatePoly({(0, 1): 1})
        )
        assert p2 == phi.compose(phi, theta)
        assert t2 == theta.compose(phi, theta)

    def test_gradients_are_matrix_powers(self, phi_theta):
        phi, theta = phi_theta
        m = mean_matrix(phi, theta)
        for n in (1, 2, 3, 4):
            pn, tn = compose_level(phi, theta, n)
            assert (pn.gradient_at_one(), tn.gradient_at_one()) == mat_pow(m, n)


class TestMeanMatrix:
    def test_entries(self, phi_theta):
        m = mean_matrix(*phi_theta)
        assert m == ((F(9, 5), F(2, 5)), (F(26, 15), F(13, 15)))

    def test_first_entry_is_mean_one_visit_count(self, table, phi_theta):
        m = mean_matrix(*phi_theta)
        assert m[0][0] == sum(s.p_direct * s.s1 for s in table.shapes) == F(9, 5)

    def test_row_sums_are_expected_cell_counts(self, table, phi_theta):
        m = mean_matrix(*phi_theta)
        assert m[0][0] + m[0][1] == sum(s.p_direct * (s.s1 + s.s2) for s in table.shapes)
        assert m[1][0] + m[1][1] == sum(s.p_via * (s.s1 + s.s2) for s in table.shapes)

    def test_upper_right_entry_is_forced_by_the_eigenvalue(self, phi_theta):
        # The Perron eigenvalue (20 + sqrt(205))/15 pins this entry to 2/5
        # (trace 8/3, determinant 13/15, discriminant 4*205/225); a 2/15
        # there would put the top of the spectrum at (20 + sqrt(101))/15.
        m = mean_matrix(*phi_theta)
        tr = m[0][0] + m[1][1]
        det = m[0][0] * m[1][1] - m[0][1] * m[1][0]
        assert tr == F(8, 3)
        assert det == F(13, 15)
        assert tr * tr - 4 * det == F(4 * 205, 225)
        assert m[0][1] == F(2, 5) != F(2, 15)


class TestEigenData:
    def test_closed_forms(self, eig):
        with mpmath.workdps(60):
            root = mpmath.sqrt(mpf(205))
            assert abs(eig.lam - (20 + root) / 15) < mpf(10) ** -30
            assert abs(eig.lam_prime - (20 - root) / 15) < mpf(10) ** -30
            assert abs(eig.dim - mpmath.log(eig.lam) / mpmath.log(2)) == 0
            assert abs(eig.dim - mpf("1.1939")) < 2e-4

    def test_eigen_identities(self, eig):
        m = [[float(x) for x in row] for row in eig.mean_matrix]
        with mpmath.workdps(60):
            mm = [[exact._to_mpf(x) for x in row] for row in eig.mean_matrix]
            for i in range(2):
                mu = mm[i][0] * eig.u[0] + mm[i][1] * eig.u[1]
                assert abs(mu - eig.lam * eig.u[i]) < mpf(10) ** -30
                vm = eig.v[0] * mm[0][i] + eig.v[1] * mm[1][i]
                assert abs(vm - eig.lam * eig.v[i]) < mpf(10) ** -30
            assert abs(eig.u[0] ** 2 + eig.u[1] ** 2 - 1) < mpf(10) ** -30
            assert abs(eig.v[0] ** 2 + eig.v[1] ** 2 - 1) < mpf(10) ** -30
        assert 1 < float(eig.lam) < 3 and 0 < float(eig.lam_prime) < 1
        assert m[0][0] > 0

    def test_right_eigenvector_direction(self, eig):
        # (M - lam I) u = 0 gives u2/u1 = (15 lam - 27)/6 for this matrix.
        with mpmath.workdps(60):
            ratio = eig.u[1] / eig.u[0]
            assert abs(ratio - (15 * eig.lam - 27) / 6) < mpf(10) ** -30

    def test_positivity_required(self):
        with pytest.raises(ValueError):
            eigen_data(((F(1), F(0)), (F(1), F(1))))


class TestMoments:
    def test_first_moment_is_normalized_eigenvector(self, eig):
        mt = moment_table(3, eig)
        m1 = mt.moment(1)
        with mpmath.workdps(60):
            assert abs(m1[0] - eig.u[0] / eig.c) < mpf(10) ** -30
            assert abs(m1[1] - eig.u[1] / eig.c) < mpf(10) ** -30

    def test_moments_positive(self, eig):
        mt = moment_table(8, eig)
        for k in range(1, 9):
            a, b = mt.moment(k)
            assert a > 0 and b > 0

    def test_order_validation(self, eig):
        with pytest.raises(ValueError):
            moment_table(0, eig)
        with pytest.raises(ValueError):
            moment_table(13, eig)

    def test_residuals_tiny_under_truncation(self, eig):
        mt = moment_table(8, eig)
        for t in (-0.5, -0.1, 0.1):
            r1, r2, remainder = functional_equation_residual(mt, t)
            assert r1 < 1e-9 and r2 < 1e-9
            assert remainder >= 0

    def test_w_prime_mean_value(self, eig):
        mt = moment_table(2, eig)
        v1, v2 = eig.v
        with mpmath.workdps(60):
            assert abs(mt.w_prime_mean - (v1 + 2 * v2) * eig.u[0] / eig.c) < mpf(10) ** -30
        assert abs(float(mt.w_prime_mean) - 1.16351) < 1e-4


class TestRationalCountMoments:
    def test_depth_one_matches_direct_summation(self, table):
        mean_ell = sum(s.p_direct * (s.s1 + 2 * s.s2) for s in table.shapes)
        sq = sum(s.p_direct * (s.s1 + 2 * s.s2) ** 2 for s in table.shapes)
        assert length_mean(1) == mean_ell == F(13, 5)
        assert length_variance(1) == sq - mean_ell * mean_ell

    def test_mean_is_matrix_power_row(self, phi_theta):
        m = mean_matrix(*phi_theta)
        assert type_count_mean(2) == (
            m[0][0] * m[0][0] + m[0][1] * m[1][0],
            m[0][0] * m[0][1] + m[0][1] * m[1][1],
        )

    def test_rescaled_moments_converge_to_limit_engine(self, eig):
        # Exact rational finite-depth moments against the functional-equation
        # moments: two independent routes to the same limit.
        mt = moment_table(2, eig)
        with mpmath.workdps(60):
            lam = eig.lam
            for depth in (16, 20):
                mean = exact._to_mpf(length_mean(depth)) / lam**depth
                var = exact._to_mpf(length_variance(depth)) / lam ** (2 * depth)
                assert abs(mean - mt.w_prime_mean) < 1e-9
                assert abs(var - mt.w_prime_variance) < 1e-5
            gap = abs(
                exact._to_mpf(length_variance(12)) / lam**24 - mt.w_prime_variance
            )
            assert gap < 1e-3


class TestReport:
    def test_report_round_trips_and_is_deterministic(self):
        r1 = exact_report(moment_order=4)
        r2 = exact_report(moment_order=4)
        assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)
        assert len(r1["shapes"]) == 10  # 7 direct-law rows plus 3 via-only rows
        assert r1["mean_matrix"] == [["9/5", "2/5"], ["26/15", "13/15"]]
        assert r1["lambda"].startswith("2.2878547375517")
        assert r1["dim"].startswith("1.1939")

    def test_crossing_law_dataclass(self):
        law = solve_shape_distribution(CrossingVariant.DIRECT)
        assert isinstance(law, CrossingLaw)
        assert sum(law.masses.values()) == 1
