"""End-to-end orchestration: classify -> approximate -> refine -> globalize.

Pure functions from parsed inputs to JSON-serializable dictionaries.  Both
the HTTP service and the CLI call these; everything is deterministic given
identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .approx import Branch, Parameterization, approximate, residual_report
from .dynamics import InvariantCurve, emit_curve, select_rho, unstable_setup
from .errors import HypothesisError, NumericError
from .model import CaseTag, PlanarMapSpec, ReducedMap, check_hypotheses, reduce
from .refine import RefineConfig, RefineState, picard_solve

CURVE_COLUMNS = ("t", "x", "y", "res_x", "res_y")


def run_classify(spec: PlanarMapSpec) -> dict:
    rm = reduce(spec)
    return {
        "reduced": rm.to_dict(),
        "hypotheses": {
            "stable": check_hypotheses(rm, "stable").to_dict(),
            "unstable": check_hypotheses(rm, "unstable").to_dict(),
        },
    }


def _gate(rm: ReducedMap, branch: Branch) -> None:
    report = check_hypotheses(rm, branch.value)
    if not report.existence_ok:
        raise HypothesisError(
            f"existence hypotheses fail for the {branch.value} branch",
            report=report.to_dict(),
        )


def run_approx(
    spec: PlanarMapSpec,
    branch: str = "stable",
    order: int = 10,
    second_family: bool = False,
    tie_break: float = 0.0,
) -> dict:
    rm = reduce(spec)
    br = Branch(branch)
    if not second_family:
        _gate(rm, br)
    par, report = approximate(
        rm, br, order, second_family=second_family, tie_break=tie_break
    )
    return {
        "parameterization": par.to_dict(),
        "residual_report": report.to_dict(),
    }


def run_residual(
    spec: PlanarMapSpec,
    parameterization: dict | Parameterization,
    t_samples=None,
) -> dict:
    rm = reduce(spec)
    par = (
        parameterization
        if isinstance(parameterization, Parameterization)
        else Parameterization.from_dict(parameterization)
    )
    report = residual_report(rm, par, t_samples=t_samples)
    return {"residual_report": report.to_dict()}


@dataclass
class CurveBundle:
    """Everything the curve-producing commands share."""

    spec: PlanarMapSpec
    rm: ReducedMap
    solved_map: ReducedMap
    par: Parameterization
    state: RefineState
    curve: InvariantCurve
    rho: float

    def artifacts(self) -> dict:
        return {
            "reduced": self.rm.to_dict(),
            "parameterization": self.par.to_dict(),
            "refine": self.state.to_dict(),
            "rho": self.rho,
        }


def build_curve(
    spec: PlanarMapSpec,
    branch: str = "stable",
    order: int = 10,
    rho: float | None = None,
    tol: float = 1e-12,
    grid_m: int = 32,
    max_sweeps: int = 60,
    gamma: float | None = None,
) -> CurveBundle:
    """Classify, approximate and refine; returns a globally evaluable curve.

    The unstable branch is solved through the reduced inverse map (whose
    stable curve it is) and conjugated back; its inner dynamics is evaluated
    by Newton on the inverse polynomial.
    """
    rm = reduce(spec)
    br = Branch(branch)
    _gate(rm, br)
    charts: tuple[ReducedMap, ...]
    if br == Branch.STABLE:
        frame = rm
        charts = (rm,)
    else:
        # The inverse jet must carry enough orders for the requested pair:
        # n <= 2(r - k + 1) in case 1 and n <= r - 2l + 2 otherwise.
        if rm.case == CaseTag.CASE1:
            need = rm.k - 1 + (order + 1) // 2
        else:
            need = order + 2 * rm.l - 2
        frame = unstable_setup(rm, degree=max(rm.r, need))
        stable_report = check_hypotheses(frame, "stable")
        if not stable_report.existence_ok:
            raise NumericError(
                "inverse-map reduction lost the stable hypotheses; cannot "
                "refine the unstable branch"
            )
        charts = (frame, rm)
    par, _ = approximate(frame, Branch.STABLE, order)
    if rho is None:
        rho = select_rho(par)
    state = picard_solve(
        frame,
        par,
        RefineConfig(rho=rho, tol=tol, grid_m=grid_m, max_sweeps=max_sweeps, gamma=gamma),
    )
    curve = InvariantCurve(
        branch=br,
        par=par,
        rho=rho,
        solved_map=frame,
        F=spec,
        charts=charts,
        delta_eval=state.delta_eval,
    )
    return CurveBundle(
        spec=spec, rm=rm, solved_map=frame, par=par, state=state, curve=curve, rho=rho
    )


def run_refine(
    spec: PlanarMapSpec,
    branch: str = "stable",
    order: int = 10,
    rho: float | None = None,
    tol: float = 1e-12,
    grid_m: int = 32,
    max_sweeps: int = 60,
    gamma: float | None = None,
) -> dict:
    bundle = build_curve(
        spec,
        branch=branch,
        order=order,
        rho=rho,
        tol=tol,
        grid_m=grid_m,
        max_sweeps=max_sweeps,
        gamma=gamma,
    )
    return {
        "refine": bundle.state.to_dict(),
        "parameterization": bundle.par.to_dict(),
        "rho": bundle.rho,
        "convergence_table": [
            (row["sweep"], row["sup_change"], row["residual_sup"])
            for row in bundle.state.history
        ],
    }


def _point_rows(curve: InvariantCurve, ts) -> list[dict]:
    rows = []
    for t in ts:
        pt = curve.point(float(t))
        res = curve.F.eval(pt) - curve.point(curve.inner_eval(float(t)))
        rows.append(
            {
                "t": float(t),
                "x": float(pt[0]),
                "y": float(pt[1]),
                "res_x": float(res[0]),
                "res_y": float(res[1]),
            }
        )
    return rows


def run_globalize(
    spec: PlanarMapSpec,
    t_values,
    branch: str = "stable",
    order: int = 10,
    rho: float | None = None,
    tol: float = 1e-12,
    grid_m: int = 32,
) -> dict:
    if not t_values:
        raise ValueError("globalize needs at least one t value")
    bundle = build_curve(
        spec, branch=branch, order=order, rho=rho, tol=tol, grid_m=grid_m
    )
    return {
        "rho": bundle.rho,
        "points": _point_rows(bundle.curve, t_values),
    }


def run_full(
    spec: PlanarMapSpec,
    branch: str = "stable",
    order: int = 10,
    rho: float | None = None,
    tol: float = 1e-12,
    grid_m: int = 32,
    tmax: float | None = None,
    tmin: float | None = None,
    samples: int | None = None,
    gamma: float | None = None,
) -> tuple[dict, CurveBundle]:
    """Full pipeline; returns the row payload plus intermediate artifacts."""
    bundle = build_curve(
        spec, branch=branch, order=order, rho=rho, tol=tol, grid_m=grid_m, gamma=gamma
    )
    t_hi = tmax if tmax is not None else bundle.rho
    t_lo = tmin if tmin is not None else bundle.rho / 50.0
    rows = emit_curve(bundle.curve, t_min=t_lo, t_max=t_hi, samples=samples)
    payload = {
        "columns": list(CURVE_COLUMNS),
        "rows": [[v for v in row] for row in rows],
        "meta": {
            "branch": branch,
            "order": order,
            "rho": bundle.rho,
            "residual_sup": bundle.state.residual_sup,
            "sweeps": bundle.state.sweeps,
        },
    }
    return payload, bundle


def rows_to_csv(rows: list, columns=CURVE_COLUMNS) -> str:
    """Bit-stable CSV: shortest round-trip float formatting, LF endings."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def points_to_csv(points: list[dict]) -> str:
    rows = [[p["t"], p["x"], p["y"], p["res_x"], p["res_y"]] for p in points]
    return rows_to_csv(rows)
