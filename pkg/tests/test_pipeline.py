"""End-to-end pipeline paths: conjugation charts, branch handling, defaults."""

from __future__ import annotations

import numpy as np
import pytest

from paramfold.errors import HypothesisError
from paramfold.jets import Jet2
from paramfold.model import PlanarMapSpec, reduce
from paramfold.pipeline import build_curve, run_approx, run_classify, run_full, run_globalize

from conftest import rng


def invariance_sup(spec, curve, ts) -> float:
    worst = 0.0
    for t in ts:
        pt = curve.point(float(t))
        res = spec.eval(pt) - curve.point(curve.inner_eval(float(t)))
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


@pytest.fixture(scope="module")
def shear_spec():
    # f1 = x y forces a nontrivial change of variables in the reduction.
    return PlanarMapSpec(
        "shear",
        1.0,
        8,
        Jet2.from_monomials([(1, 1, 1.0)], 8),
        Jet2.from_monomials([(2, 0, 1.5)], 8),
    )


class TestChartChains:
    def test_stable_curve_in_original_frame(self, shear_spec):
        bundle = build_curve(shear_spec, order=8, rho=0.02, grid_m=16)
        worst = invariance_sup(shear_spec, bundle.curve, np.geomspace(1e-3, 0.1, 10))
        assert worst < 1e-10

    def test_unstable_curve_in_original_frame(self, shear_spec):
        bundle = build_curve(
            shear_spec, branch="unstable", order=8, rho=0.02, grid_m=16
        )
        worst = invariance_sup(shear_spec, bundle.curve, np.geomspace(1e-3, 0.02, 8))
        assert worst < 1e-10

    def test_unstable_globalization_beyond_rho(self, t1_spec):
        bundle = build_curve(t1_spec, branch="unstable", order=8, rho=0.02, grid_m=16)
        worst = invariance_sup(t1_spec, bundle.curve, (0.05, 0.1, 0.2))
        assert worst < 1e-8

    def test_case2_unstable_needs_deeper_inverse_jet(self, t2_spec):
        # order 8 exceeds the input-degree cap r - 2l + 2 = 4; the pipeline
        # must deepen the (exact) inverse jet instead of failing.
        bundle = build_curve(t2_spec, branch="unstable", order=8, rho=0.01, grid_m=16)
        assert bundle.solved_map.r >= 10
        worst = invariance_sup(t2_spec, bundle.curve, np.geomspace(1e-3, 0.01, 6))
        assert worst < 1e-8

    def test_negative_c_curve(self):
        spec = PlanarMapSpec(
            "negc", -1.0, 6, Jet2.zero(6), Jet2.from_monomials([(2, 0, -1.5)], 6)
        )
        rm = reduce(spec)
        assert rm.sign_flipped and rm.a_k == 1.5
        bundle = build_curve(spec, order=8, rho=0.02, grid_m=16)
        worst = invariance_sup(spec, bundle.curve, np.geomspace(1e-3, 0.05, 8))
        assert worst < 1e-10
        # the original map's curve lives in the flipped half plane
        assert bundle.curve.point(0.02)[1] > 0


class TestPipelineFunctions:
    def test_classify_payload(self, t1_spec):
        out = run_classify(t1_spec)
        assert out["reduced"]["case"] == 1
        assert out["hypotheses"]["stable"]["existence_ok"]

    def test_approx_gate(self, t3_spec):
        with pytest.raises(HypothesisError):
            run_approx(t3_spec, branch="unstable", order=4)

    def test_second_family_bypasses_gate(self, t3_spec):
        out = run_approx(t3_spec, branch="unstable", order=4, second_family=True)
        assert out["parameterization"]["second_family"]

    def test_full_default_rho_is_adaptive(self, t1_spec):
        payload, bundle = run_full(t1_spec, order=8, grid_m=16, samples=4)
        assert 0 < payload["meta"]["rho"] <= 0.1
        assert abs(bundle.par.R_N) * bundle.rho ** (bundle.par.N - 1) < 0.1

    def test_globalize_requires_t(self, t1_spec):
        with pytest.raises(ValueError, match="at least one t"):
            run_globalize(t1_spec, [])


class TestDeterminism:
    def test_rows_identical_across_thread_counts(self, t1_spec, monkeypatch):
        from paramfold import _threads

        results = []
        for workers in ("1", "4"):
            monkeypatch.setenv(_threads.ENV_VAR, workers)
            payload, _ = run_full(
                t1_spec, order=8, rho=0.02, grid_m=16, tmax=0.1, samples=9
            )
            results.append(payload["rows"])
        assert results[0] == results[1]

    def test_mismatched_parameterization_reports_not_raises(self, t1_spec, t2_rm):
        from paramfold.approx import Branch, approximate
        from paramfold.pipeline import run_residual

        par_t2, _ = approximate(t2_rm, Branch.STABLE, 4)
        out = run_residual(t1_spec, par_t2.to_dict())
        assert out["residual_report"]["order_ok"] is False


class TestRandomMaps:
    def test_random_case1_maps_refine(self):
        gen = rng(21)
        for trial in range(4):
            a = float(gen.uniform(0.5, 3.0))
            c = float(gen.uniform(0.5, 2.0))
            extra = float(gen.uniform(-1.0, 1.0))
            spec = PlanarMapSpec(
                f"rand1_{trial}",
                c,
                6,
                Jet2.zero(6),
                Jet2.from_monomials([(2, 0, a), (3, 0, extra), (0, 2, extra)], 6),
            )
            bundle = build_curve(spec, order=8, rho=0.01, grid_m=16)
            assert bundle.state.residual_sup < 1e-10
            worst = invariance_sup(spec, bundle.curve, np.geomspace(1e-3, 0.01, 5))
            assert worst < 1e-10

    def test_random_case3_maps_refine(self):
        gen = rng(22)
        for trial in range(3):
            b = -float(gen.uniform(0.5, 2.0))
            c = float(gen.uniform(0.5, 2.0))
            spec = PlanarMapSpec(
                f"rand3_{trial}",
                c,
                6,
                Jet2.zero(6),
                Jet2.from_monomials([(1, 1, b), (4, 0, 1.0), (2, 2, 0.3)], 6),
            )
            bundle = build_curve(spec, order=8, rho=0.01, grid_m=16)
            assert bundle.state.residual_sup < 1e-10
            worst = invariance_sup(spec, bundle.curve, np.geomspace(1e-3, 0.01, 5))
            assert worst < 1e-10
