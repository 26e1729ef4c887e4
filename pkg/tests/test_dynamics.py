"""Iterate bounds, orbit sums, map inversion, unstable setup, globalization."""

from __future__ import annotations

import numpy as np
import pytest

from paramfold.approx import Branch, approximate
from paramfold.dynamics import (
    InvariantCurve,
    InverseMap,
    OrbitBoundParams,
    check_orbit_bounds,
    default_nu_mu,
    emit_curve,
    globalize,
    invert_F,
    invert_map_jets,
    iterate_R,
    orbit_sum,
    r_inverse,
    select_rho,
    unstable_setup,
)
from paramfold.errors import NumericError, OrbitSumError
from paramfold.model import CaseTag, reduce
from paramfold.refine import RefineConfig, picard_solve

from conftest import make_spec, rng


@pytest.fixture(scope="module")
def t1_par2(t1_rm):
    # R = t - 0.5 t^2 exactly (no second coefficient yet at order 2).
    par, _ = approximate(t1_rm, Branch.STABLE, 2)
    return par


class TestIterateR:
    def test_zero_iterations(self, t1_par2):
        assert iterate_R(t1_par2, 0.1, 0, 0.2) == 0.1

    def test_single_step(self, t1_par2):
        # R(0.1) = 0.1 - 0.5 * 0.01 = 0.095
        assert abs(iterate_R(t1_par2, 0.1, 1, 0.2) - 0.095) < 1e-15

    def test_sandwich_at_large_j(self, t1_par2):
        # Iterate-bound sandwich at j = 1000 for nu=0.45, mu=0.55.
        t, j = 0.1, 1000
        val = iterate_R(t1_par2, t, j, 0.2)
        lower = t / (1 + j * 0.55 * t)
        upper = t / (1 + j * 0.45 * t)
        assert lower < val < upper

    def test_unstable_iterates_inverse(self, t1_rm):
        par, _ = approximate(t1_rm, Branch.UNSTABLE, 2)
        val = iterate_R(par, 0.1, 1, 0.2)
        # inverse of R(t) = t + 0.5 t^2 moves down
        assert 0 < val < 0.1
        assert abs(par.R_eval(val) - 0.1) < 1e-13

    def test_leaving_interval_raises(self, t1_par2):
        # Far outside the contraction region R goes negative in one step.
        with pytest.raises(NumericError, match="rho too large"):
            iterate_R(t1_par2, 2.5, 2, 3.0)


class TestOrbitBounds:
    def test_no_violations_default_bracket(self, t1_pair10):
        par, _ = t1_pair10
        nu, mu = default_nu_mu(par.N, par.R_N)
        params = OrbitBoundParams(N=par.N, R_N=par.R_N, nu=nu, mu=mu, rho=0.1)
        report = check_orbit_bounds(
            par, params, np.geomspace(1e-4, 0.0999, 20), 1000
        )
        assert report.passed
        assert report.rho_valid >= 0.09

    def test_nu_above_critical_rejected(self, t1_pair10):
        par, _ = t1_pair10
        with pytest.raises(ValueError, match="nu"):
            OrbitBoundParams(N=par.N, R_N=par.R_N, nu=0.55, mu=0.6, rho=0.1)

    def test_kappa_condition(self, t1_pair10):
        par, _ = t1_pair10
        params = OrbitBoundParams(N=par.N, R_N=par.R_N, nu=0.2, mu=0.55, rho=0.1)
        with pytest.raises(ValueError, match="kappa"):
            check_orbit_bounds(par, params, [0.01], 10)

    def test_dr_product_monotone_in_j(self, t1_par2):
        t = 0.05
        r_c = t1_par2.R_coeffs()
        dr_c = np.polynomial.polynomial.polyder(r_c)
        s, prod = t, 1.0
        prev = 2.0
        for _ in range(200):
            prod *= np.polynomial.polynomial.polyval(s, dr_c)
            s = np.polynomial.polynomial.polyval(s, r_c)
            assert prod < prev
            prev = prod

    def test_select_rho(self, t1_pair10):
        par, _ = t1_pair10
        rho = select_rho(par)
        assert 0 < rho <= 0.1
        assert abs(par.R_N) * rho ** (par.N - 1) < 0.1

    def test_violations_reported_outside_valid_radius(self, t3_pair8):
        # T3's R = t - 0.5 t^2 - 0.75 t^3 decays faster than the mu-envelope
        # for t above ~0.0475, so a sweep that touches the edge of (0, 0.05)
        # must report lower-sandwich violations and a smaller valid radius.
        par, _ = t3_pair8
        nu, mu = default_nu_mu(par.N, par.R_N)
        params = OrbitBoundParams(N=par.N, R_N=par.R_N, nu=nu, mu=mu, rho=0.05)
        rep = check_orbit_bounds(
            par, params, np.geomspace(5e-5, 0.0499, 30), 100
        )
        assert not rep.passed
        assert all(v.kind == "sandwich_lower" for v in rep.violations)
        assert rep.rho_valid < 0.048

    def test_select_rho_rejects_edge_for_t3(self, t3_pair8):
        par, _ = t3_pair8
        assert select_rho(par) <= 0.025


class TestOrbitSum:
    def test_zero_eta(self, t1_par2):
        vx, vy, tail = orbit_sum(lambda s: (0.0, 0.0), t1_par2, 0.03, orders=(4, 5))
        assert vx == 0.0 and vy == 0.0 and tail < 1e-13

    def test_defining_equation_round_trip(self, t1_par2):
        eta = lambda s: (s**4, s**5)
        for t in np.geomspace(2e-3, 0.05, 6):
            vx, vy, _ = orbit_sum(eta, t1_par2, float(t), tol=1e-12, orders=(4, 5))
            rx, ry, _ = orbit_sum(
                eta, t1_par2, float(t1_par2.R_eval(t)), tol=1e-12, orders=(4, 5)
            )
            # S(S^{-1} eta) = eta:  Delta(R(t)) - Delta(t) = eta(t)
            assert abs((rx - vx) - t**4) < 1e-11
            assert abs((ry - vy) - t**5) < 1e-11

    def test_operator_norm_bound(self, t1_par2):
        # Weighted norms respect rho^{N-1} + (1/nu)(N-1)/n with n = 3.
        nu = 0.45
        eta = lambda s: (s**4, s**5)
        sup_x = sup_y = 0.0
        for t in np.geomspace(1e-3, 0.05, 25):
            vx, vy, _ = orbit_sum(eta, t1_par2, float(t), tol=1e-13, orders=(4, 5))
            sup_x = max(sup_x, abs(vx) / t**3)
            sup_y = max(sup_y, abs(vy) / t**4)
        assert sup_x <= 0.05 + (1 / nu) / 3
        assert sup_y <= 0.05 + (1 / nu) / 4

    def test_budget_exhaustion_reports_tail(self, t1_par2):
        with pytest.raises(OrbitSumError) as err:
            orbit_sum(
                lambda s: (s**4, s**5), t1_par2, 0.0001, tol=1e-30, j_cap=50,
                orders=(4, 5),
            )
        assert err.value.tail > 0


class TestInvertF:
    def test_hand_example(self, t1_rm):
        # F(0.1, 0.01) = (0.11, 0.025); Newton recovers the preimage.
        inv = InverseMap(t1_rm)
        z = t1_rm.eval((0.1, 0.01))
        assert np.allclose(z, [0.11, 0.025], rtol=0, atol=1e-15)
        w = invert_F(inv, z)
        assert np.max(np.abs(w - [0.1, 0.01])) < 1e-12

    def test_origin_fixed(self, t1_rm):
        w = invert_F(InverseMap(t1_rm), np.zeros(2))
        assert np.max(np.abs(w)) < 1e-14

    def test_round_trip_grid(self, t2_rm):
        inv = InverseMap(t2_rm)
        gen = rng(12)
        for _ in range(40):
            w0 = gen.uniform(-0.1, 0.1, 2)
            w = invert_F(inv, t2_rm.eval(w0))
            assert np.max(np.abs(w - w0)) < 1e-12


class TestUnstableSetup:
    def test_t1_gives_case1_same_sign(self, t1_rm):
        g = unstable_setup(t1_rm)
        assert g.case == CaseTag.CASE1
        assert g.k == t1_rm.k
        assert abs(g.a_k - t1_rm.a_k) < 1e-12
        assert g.a_k > 0
        assert not g.polynomial_exact

    def test_case3_flips_b(self):
        rm = reduce(make_spec("c3u", [(1, 1, 1.0), (4, 0, 1.0)]))
        g = unstable_setup(rm)
        assert g.case == CaseTag.CASE3
        assert abs(g.b_l - (-1.0)) < 1e-12

    def test_involution_recovers_leading_data(self, t2_rm):
        g2 = unstable_setup(unstable_setup(t2_rm))
        assert g2.case == t2_rm.case
        assert (g2.k, g2.l) == (t2_rm.k, t2_rm.l)
        assert abs(g2.a_k - t2_rm.a_k) < 1e-10
        assert abs(g2.b_l - t2_rm.b_l) < 1e-10
        assert abs(g2.c - t2_rm.c) < 1e-10

    def test_inverse_jets_invert(self, t3_rm):
        inv_spec = invert_map_jets(t3_rm)
        gen = rng(13)
        for _ in range(20):
            pt = gen.uniform(-0.01, 0.01, 2)
            back = t3_rm.eval(inv_spec.eval(pt))
            # exact through degree r; remainder is O(|pt|^{r+1})
            assert np.max(np.abs(back - pt)) < 1e-9


@pytest.fixture(scope="module")
def t1_curve_small(t1_rm, t1_pair10):
    par, _ = t1_pair10
    rho = 0.02
    state = picard_solve(t1_rm, par, RefineConfig(rho=rho, grid_m=24))
    return InvariantCurve(
        branch=Branch.STABLE,
        par=par,
        rho=rho,
        solved_map=t1_rm,
        F=t1_rm,
        charts=(t1_rm,),
        delta_eval=state.delta_eval,
    )


class TestGlobalize:
    def test_inside_interval_is_local(self, t1_curve_small):
        t = 0.01
        assert np.array_equal(
            globalize(t1_curve_small, t), t1_curve_small.local_point(t)
        )

    def test_j_independence(self, t1_curve_small):
        t = 0.15
        s, j = t, 0
        while s > t1_curve_small.rho:
            s = t1_curve_small.par.R_eval(s)
            j += 1
        p1 = globalize(t1_curve_small, t)
        p2 = globalize(t1_curve_small, t, j_override=j + 3)
        assert np.max(np.abs(p1 - p2)) < 1e-8

    def test_invariance_after_globalization(self, t1_curve_small):
        curve = t1_curve_small
        for t in (0.05, 0.1, 0.18):
            pt = curve.point(t)
            res = curve.F.eval(pt) - curve.point(curve.inner_eval(t))
            assert np.max(np.abs(res)) < 1e-8

    def test_emit_single_sample_matches_direct(self, t1_curve_small):
        t = 0.01
        rows = emit_curve(t1_curve_small, t_min=t, t_max=t, samples=1)
        assert len(rows) == 1
        pt = t1_curve_small.point(t)
        assert rows[0][1] == pt[0] and rows[0][2] == pt[1]

    def test_emit_geometric_spacing(self, t1_curve_small):
        rows = emit_curve(t1_curve_small, t_min=0.001, t_max=0.01)
        ts = [r[0] for r in rows]
        assert all(ts[i] < ts[i + 1] for i in range(len(ts) - 1))
        ratios = [ts[i + 1] / ts[i] for i in range(len(ts) - 1)]
        assert all(abs(r - 1.2) < 1e-9 for r in ratios)


class TestUnstableCurve:
    def test_forward_and_backward_invariance(self, t1_rm):
        g = unstable_setup(t1_rm)
        par, _ = approximate(g, Branch.STABLE, 10)
        state = picard_solve(g, par, RefineConfig(rho=0.05, grid_m=24))
        curve = InvariantCurve(
            branch=Branch.UNSTABLE,
            par=par,
            rho=0.05,
            solved_map=g,
            F=t1_rm,
            charts=(g, t1_rm),
            delta_eval=state.delta_eval,
        )
        inv = InverseMap(t1_rm)
        for t in np.geomspace(2e-3, 0.05, 8):
            pt = curve.point(float(t))
            # forward: F(K(t)) = K(R_F(t)) with R_F the expanding inverse
            rf = curve.inner_eval(float(t))
            assert rf > t
            res_f = t1_rm.eval(pt) - curve.point(rf)
            assert np.max(np.abs(res_f)) < 1e-8
            # backward: F^{-1}(K(t)) = K(R_G(t)) with the polynomial R_G
            res_b = invert_F(inv, pt) - curve.point(float(par.R_eval(t)))
            assert np.max(np.abs(res_b)) < 1e-8

    def test_r_inverse_round_trip(self, t1_pair10):
        par, _ = t1_pair10
        for t in (0.01, 0.03, 0.05):
            w = r_inverse(par, t)
            assert abs(par.R_eval(w) - t) < 1e-13
