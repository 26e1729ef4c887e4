"""Reduction, classification, hypothesis checks, spec-file handling."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from paramfold.errors import HypothesisError, SpecFormatError
from paramfold.jets import Jet2
from paramfold.model import (
    CaseTag,
    PlanarMapSpec,
    check_hypotheses,
    classify,
    dump_map_spec,
    load_map_spec,
    map_spec_from_dict,
    reduce,
)

from conftest import make_spec, rng


class TestReduce:
    def test_already_reduced_passthrough(self, t1_rm):
        assert t1_rm.case == CaseTag.CASE1
        assert t1_rm.k == 2 and t1_rm.l is None
        assert t1_rm.a_k == 1.5
        assert t1_rm.N == 2 and t1_rm.s == 12
        assert t1_rm.polynomial_exact

    def test_t2_classification(self, t2_rm):
        assert t2_rm.case == CaseTag.CASE2
        assert (t2_rm.k, t2_rm.l) == (3, 2)
        assert (t2_rm.a_k, t2_rm.b_l) == (1.0, 1.0)
        assert t2_rm.N == 2 and t2_rm.s == 6

    def test_t3_classification(self, t3_rm):
        assert t3_rm.case == CaseTag.CASE3
        assert (t3_rm.k, t3_rm.l) == (4, 2)
        assert (t3_rm.a_k, t3_rm.b_l) == (1.0, -1.0)
        assert t3_rm.N == 2

    def test_conjugacy_oracle_pointwise(self):
        # f1 = x y, f2 = x^2: the reduced map must satisfy
        # Phi o F = F_reduced o Phi at sample points (independent of jets).
        r = 6
        spec = PlanarMapSpec(
            "conj",
            1.0,
            r,
            Jet2.from_monomials([(1, 1, 1.0)], r),
            Jet2.from_monomials([(2, 0, 1.0)], r),
        )
        rm = reduce(spec)
        assert rm.k == 2 and abs(rm.a_k - 1.0) < 1e-13
        assert not rm.polynomial_exact
        gen = rng(10)
        for _ in range(30):
            pt = gen.uniform(-0.01, 0.01, 2)
            lhs = rm.point_from_original(spec.eval(pt))
            rhs = rm.eval(rm.point_from_original(pt))
            # Conjugation is exact only through degree r; residual is O(|pt|^{r+1}).
            assert np.max(np.abs(lhs - rhs)) < 1e-13

    def test_point_chart_round_trip(self):
        r = 6
        spec = PlanarMapSpec(
            "conj",
            1.0,
            r,
            Jet2.from_monomials([(1, 1, 1.0), (2, 0, 0.5)], r),
            Jet2.from_monomials([(2, 0, 1.0)], r),
        )
        rm = reduce(spec)
        gen = rng(11)
        for _ in range(20):
            pt = gen.uniform(-0.05, 0.05, 2)
            back = rm.point_to_original(rm.point_from_original(pt))
            assert np.max(np.abs(back - pt)) < 1e-14

    def test_negative_c_sign_conjugation(self):
        spec = make_spec("neg", [(2, 0, 1.5)], c=-1.0)
        rm = reduce(spec)
        assert rm.c == 1.0
        assert rm.sign_flipped
        # L only flips y; the pure-x data is unchanged.
        assert rm.k == 2 and rm.a_k == -1.5
        pt = rm.point_to_original(np.array([0.1, 0.2]))
        assert np.array_equal(pt, [0.1, -0.2])

    def test_zero_c_rejected(self):
        with pytest.raises(SpecFormatError, match="parabolic"):
            make_spec("bad", [(2, 0, 1.0)], c=0.0)

    def test_reduction_idempotence(self, t2_rm):
        again = reduce(t2_rm.as_spec())
        assert np.array_equal(again.p, t2_rm.p)
        assert np.array_equal(again.q, t2_rm.q)
        assert np.array_equal(again.u.coeffs, t2_rm.u.coeffs)
        assert again.case == t2_rm.case

    def test_u_carries_y_squared(self):
        spec = make_spec("u", [(2, 0, 1.0), (0, 2, 0.7), (1, 2, -0.3)])
        rm = reduce(spec)
        for i, j, v in rm.u.monomials():
            assert j >= 2 and v != 0.0


class TestClassify:
    @pytest.mark.parametrize(
        "k,l,expected,N",
        [
            (2, None, CaseTag.CASE1, 2),
            (2, 3, CaseTag.CASE1, 2),
            (3, 2, CaseTag.CASE2, 2),
            (4, 2, CaseTag.CASE3, 2),
            (None, 2, CaseTag.CASE3, 2),
            (5, 3, CaseTag.CASE2, 3),
        ],
    )
    def test_trichotomy(self, k, l, expected, N):
        case, n_val = classify(k, l)
        assert case == expected and n_val == N

    def test_degenerate_rejected(self):
        with pytest.raises(HypothesisError, match="no nonlinear normal data"):
            classify(None, None)

    def test_degenerate_map_rejected(self):
        # order-2 terms only in u: p and q vanish identically
        spec = make_spec("deg", [(0, 2, 1.0)])
        with pytest.raises(HypothesisError, match="no nonlinear normal data"):
            reduce(spec)


class TestHypotheses:
    def test_case1_all_pass(self, t1_rm):
        rep = check_hypotheses(t1_rm, "stable")
        assert rep.existence_ok
        assert all(c.passed for c in rep.checks)  # r=6 >= 3k/2=3

    def test_case2_beta_value(self, t2_rm):
        # beta = 2 l |b_l| / |b_l - sqrt(b_l^2 + 4 c a_k l)| = 4/|1-3| = 2
        rep = check_hypotheses(t2_rm, "stable")
        beta = next(c for c in rep.checks if c.name == "cr_regularity").detail["beta"]
        assert abs(beta - 2.0) < 1e-14

    def test_case3_branch_signs(self):
        spec = make_spec("c3u", [(1, 1, 1.0), (4, 0, 1.0)])
        rm = reduce(spec)
        assert not check_hypotheses(rm, "stable").existence_ok
        assert check_hypotheses(rm, "unstable").existence_ok

    def test_case2_formal_window(self):
        # a_k just inside the window -b_l^2/(4 c l) = -1/8
        spec = make_spec("win", [(3, 0, -0.1), (1, 1, 1.0)])
        rm = reduce(spec)
        rep = check_hypotheses(rm, "stable")
        window = next(c for c in rep.checks if c.name == "formal_window")
        assert window.passed
        assert not rep.existence_ok  # a_k <= 0: no true stable curve

    def test_case2_exceptional_constant_flagged(self):
        # a_k = -((2l+1)/(3l-1)) b_l^2 = -1 for l=2, b_l=1
        spec = make_spec("exc", [(3, 0, -1.0), (1, 1, 1.0)])
        rm = reduce(spec)
        rep = check_hypotheses(rm, "stable")
        exc = next(c for c in rep.checks if c.name == "exceptional_constant")
        assert not exc.passed

    def test_report_always_returned(self, t3_rm):
        rep = check_hypotheses(t3_rm, "unstable")
        assert isinstance(rep.to_dict()["checks"], list)


class TestSpecFiles:
    def test_round_trip(self, tmp_path, t2_spec):
        path = tmp_path / "t2.json"
        dump_map_spec(t2_spec, path)
        loaded = load_map_spec(path)
        assert loaded.c == t2_spec.c
        assert np.array_equal(loaded.f2.coeffs, t2_spec.f2.coeffs)

    def test_missing_field(self):
        with pytest.raises(SpecFormatError, match="missing required field"):
            map_spec_from_dict({"c": 1.0, "degree": 6})

    def test_low_order_monomial_rejected(self):
        with pytest.raises(SpecFormatError, match="total degree < 2"):
            map_spec_from_dict(
                {"c": 1.0, "degree": 6, "f2": [{"i": 0, "j": 1, "v": 1.0}]}
            )

    def test_monomial_above_degree_rejected(self):
        with pytest.raises(SpecFormatError, match="exceeds degree"):
            map_spec_from_dict(
                {"c": 1.0, "degree": 4, "f2": [{"i": 3, "j": 2, "v": 1.0}]}
            )

    def test_omitted_monomials_are_zero(self):
        spec = map_spec_from_dict(
            {"c": 1.0, "degree": 6, "f2": [{"i": 2, "j": 0, "v": 1.5}]}
        )
        assert spec.f1.order() is None
        assert spec.f2.coeffs[2, 0] == 1.5

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope", encoding="utf-8")
        with pytest.raises(SpecFormatError, match="line 1"):
            load_map_spec(path)

    def test_validity_radius_round_trip(self, tmp_path):
        spec = map_spec_from_dict(
            {
                "c": 1.0,
                "degree": 6,
                "f2": [{"i": 2, "j": 0, "v": 1.0}],
                "validity_radius": 0.7,
            }
        )
        assert spec.validity_radius == 0.7
        path = tmp_path / "s.json"
        dump_map_spec(spec, path)
        assert json.loads(path.read_text())["validity_radius"] == 0.7
        assert math.isinf(
            map_spec_from_dict(
                {"c": 1.0, "degree": 6, "f2": [{"i": 2, "j": 0, "v": 1.0}]}
            ).validity_radius
        )
