"""Planar-map input format, reduction to the simple form, and case analysis.

A map ``F(x, y) = (x + c y + f1(x, y), y + f2(x, y))`` with ``c != 0`` and
``f1, f2 = O(|(x, y)|^2)`` is conjugated by ``Phi(x, y) = (x, y + f1/c)``
(after an automatic sign conjugation ``L(x, y) = (x, -y)`` when ``c < 0``)
into the reduced form

    (x, y) -> (x + c y, y + p(x) + y q(x) + u(x, y)),

where ``p`` collects the pure-x terms, ``y q(x)`` the terms linear in ``y``
and every monomial of ``u`` carries ``y^2``.  The leading indices ``k`` of
``p`` and ``l`` of ``q`` split the maps into three cases:

    case 1: k < 2l - 1,   case 2: k = 2l - 1,   case 3: k > 2l - 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import HypothesisError, NewtonDivergenceError, SpecFormatError
from .jets import Jet2, invert_in_y

# Coefficients below this fraction of the largest one count as zero when the
# leading indices k, l are detected.  The case split is discontinuous; a
# fixed documented threshold keeps it deterministic.
LEADING_COEFF_REL_TOL = 1e-13

# Residual first-component coefficients of the conjugated map must vanish to
# this relative size, otherwise the reduction is reported as inconsistent.
REDUCTION_CONSISTENCY_TOL = 1e-13


class CaseTag(IntEnum):
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3


@dataclass(frozen=True)
class PlanarMapSpec:
    """Input map ``(x + c y + f1, y + f2)`` with polynomial nonlinear parts.

    ``degree`` is the working jet degree r >= 3; ``f1`` and ``f2`` must have
    total order >= 2 and live at exactly that degree.  ``validity_radius``
    is the radius of the ball on which the map is trusted (infinite for
    genuinely polynomial maps); it feeds the contraction-ball radius used by
    the refiner.
    """

    name: str
    c: float
    degree: int
    f1: Jet2
    f2: Jet2
    validity_radius: float = math.inf

    def __post_init__(self):
        if self.degree < 3:
            raise SpecFormatError("degree must be >= 3")
        if self.c == 0.0:
            raise SpecFormatError("not a nilpotent parabolic block: c = 0")
        for label, jet in (("f1", self.f1), ("f2", self.f2)):
            if jet.degree != self.degree:
                raise SpecFormatError(
                    f"{label} has degree {jet.degree}, expected {self.degree}"
                )
            order = jet.order()
            if order is not None and order < 2:
                raise SpecFormatError(f"{label} must have order >= 2")
        if not self.validity_radius > 0:
            raise SpecFormatError("validity_radius must be positive")

    # -- point evaluation -------------------------------------------------

    def eval(self, pt):
        x, y = pt
        return np.array(
            [
                x + self.c * y + self.f1.eval(x, y),
                y + self.f2.eval(x, y),
            ]
        )

    def jacobian(self, pt) -> np.ndarray:
        x, y = pt
        return np.array(
            [
                [1.0 + self.f1.partial_x().eval(x, y), self.c + self.f1.partial_y().eval(x, y)],
                [self.f2.partial_x().eval(x, y), 1.0 + self.f2.partial_y().eval(x, y)],
            ]
        )

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "c": self.c,
            "degree": self.degree,
            "f1": [{"i": i, "j": j, "v": v} for i, j, v in self.f1.monomials()],
            "f2": [{"i": i, "j": j, "v": v} for i, j, v in self.f2.monomials()],
        }
        if math.isfinite(self.validity_radius):
            out["validity_radius"] = self.validity_radius
        return out


def _jet_from_entries(entries, degree: int, label: str) -> Jet2:
    triples = []
    for pos, entry in enumerate(entries):
        if not isinstance(entry, dict) or not {"i", "j", "v"} <= set(entry):
            raise SpecFormatError(
                f"{label}[{pos}]: expected an object with keys i, j, v"
            )
        i, j, v = entry["i"], entry["j"], entry["v"]
        if not isinstance(i, int) or not isinstance(j, int):
            raise SpecFormatError(f"{label}[{pos}]: i and j must be integers")
        if i + j < 2:
            raise SpecFormatError(
                f"{label}[{pos}]: monomial x^{i} y^{j} has total degree < 2"
            )
        if i + j > degree:
            raise SpecFormatError(
                f"{label}[{pos}]: monomial x^{i} y^{j} exceeds degree {degree}"
            )
        triples.append((i, j, float(v)))
    return Jet2.from_monomials(triples, degree)


def map_spec_from_dict(data: dict) -> PlanarMapSpec:
    for key in ("c", "degree", "f2"):
        if key not in data:
            raise SpecFormatError(f"map spec missing required field '{key}'")
    degree = data["degree"]
    if not isinstance(degree, int):
        raise SpecFormatError("degree must be an integer")
    if degree < 3:
        raise SpecFormatError("degree must be >= 3")
    return PlanarMapSpec(
        name=str(data.get("name", "map")),
        c=float(data["c"]),
        degree=degree,
        f1=_jet_from_entries(data.get("f1", []), degree, "f1"),
        f2=_jet_from_entries(data["f2"], degree, "f2"),
        validity_radius=float(data.get("validity_radius", math.inf)),
    )


def load_map_spec(path: str | Path) -> PlanarMapSpec:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecFormatError(f"cannot read map spec: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SpecFormatError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise SpecFormatError("map spec must be a JSON object")
    return map_spec_from_dict(data)


def dump_map_spec(spec: PlanarMapSpec, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


@dataclass(frozen=True)
class ReducedMap:
    """Reduced form of a planar map plus its case data.

    ``p`` holds coefficients of ``x^0..x^r`` (zero below ``k``); ``q`` holds
    coefficients of ``x^0..x^{r-1}`` for the part linear in ``y`` (zero below
    ``l - 1``); every monomial of ``u`` carries ``y^2``.  ``sign_flipped``
    records whether the automatic conjugation by ``L(x, y) = (x, -y)`` was
    applied, and ``h`` is the y-shift jet ``f1/c`` of the change of variables
    ``Phi``; together they map curve points back to the input frame.
    ``polynomial_exact`` is True when no remainder beyond degree ``r`` was
    discarded, in which case the order-extension has no cap.
    """

    name: str
    c: float
    r: int
    p: np.ndarray
    q: np.ndarray
    u: Jet2
    k: int | None
    l: int | None
    a_k: float
    b_l: float
    case: CaseTag
    N: int
    s: int
    sign_flipped: bool = False
    h: Jet2 | None = None
    polynomial_exact: bool = True
    validity_radius: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "p", _freeze_vec(self.p))
        object.__setattr__(self, "q", _freeze_vec(self.q))

    # -- reconstruction helpers -------------------------------------------

    def nonlinear_jet(self) -> Jet2:
        """P(x, y) = p(x) + y q(x) + u(x, y) as a single jet."""
        c = self.u.pad(self.r).coeffs.copy() if self.u.degree < self.r else self.u.coeffs.copy()
        c[: self.p.size, 0] += self.p
        c[: self.q.size, 1] += self.q
        return Jet2(c)

    def P_eval(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        px = np.polynomial.polynomial.polyval(x, self.p)
        qx = np.polynomial.polynomial.polyval(x, self.q)
        return px + y * qx + self.u.eval(x, y)

    def eval(self, pt):
        x, y = pt
        return np.array([x + self.c * y, y + self.P_eval(x, y)])

    def jacobian(self, pt) -> np.ndarray:
        x, y = pt
        dp = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(self.p))
        dq = np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(self.q))
        qx = np.polynomial.polynomial.polyval(x, self.q)
        ux = self.u.partial_x().eval(x, y)
        uy = self.u.partial_y().eval(x, y)
        return np.array(
            [
                [1.0, self.c],
                [dp + y * dq + ux, 1.0 + qx + uy],
            ]
        )

    def as_spec(self) -> PlanarMapSpec:
        """Re-package the reduced map as a spec with f1 = 0."""
        return PlanarMapSpec(
            name=self.name + "_reduced",
            c=self.c,
            degree=self.r,
            f1=Jet2.zero(self.r),
            f2=self.nonlinear_jet(),
            validity_radius=self.validity_radius,
        )

    # -- coordinate chart back to the input frame --------------------------

    def point_to_original(self, pt) -> np.ndarray:
        """Send a point in reduced coordinates to the input-map frame.

        Inverts ``Phi(x, y) = (x, y + h(x, y))`` by a scalar fixed-point /
        Newton solve (exact to machine precision for polynomial ``h``), then
        undoes the sign conjugation.
        """
        x, y = float(pt[0]), float(pt[1])
        if self.h is not None:
            w = y
            for _ in range(100):
                g = w + self.h.eval(x, w) - y
                if abs(g) <= 1e-15 * (1.0 + abs(y)):
                    break
                dg = 1.0 + self.h.partial_y().eval(x, w)
                if dg == 0.0:
                    raise NewtonDivergenceError("degenerate change of variables")
                w -= g / dg
            else:
                raise NewtonDivergenceError("change-of-variables inversion stalled")
            y = w
        if self.sign_flipped:
            y = -y
        return np.array([x, y])

    def point_from_original(self, pt) -> np.ndarray:
        x, y = float(pt[0]), float(pt[1])
        if self.sign_flipped:
            y = -y
        if self.h is not None:
            y = y + self.h.eval(x, y)
        return np.array([x, y])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "c": self.c,
            "degree": self.r,
            "case": int(self.case),
            "N": self.N,
            "s": self.s,
            "k": self.k,
            "l": self.l,
            "a_k": self.a_k,
            "b_l": self.b_l,
            "p": [float(v) for v in self.p],
            "q": [float(v) for v in self.q],
            "u": [{"i": i, "j": j, "v": v} for i, j, v in self.u.monomials()],
            "sign_flipped": self.sign_flipped,
            "polynomial_exact": self.polynomial_exact,
        }


def _freeze_vec(arr) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.flags.writeable = False
    return arr


def classify(k: int | None, l: int | None) -> tuple[CaseTag, int]:
    """Case tag and N from the leading indices.

    Absent ``p`` means ``k = infinity``; absent ``q`` means ``l = infinity``.
    N is ``k`` in case 1 and ``l`` in cases 2 and 3; the companion exponent
    is ``s = 2r`` in case 1 and ``s = r`` otherwise (filled in by reduce).
    """
    if k is None and l is None:
        raise HypothesisError("no nonlinear normal data through degree r")
    k_eff = math.inf if k is None else k
    l_eff = math.inf if l is None else l
    if k_eff < 2 * l_eff - 1:
        return CaseTag.CASE1, int(k_eff)
    if k_eff == 2 * l_eff - 1:
        return CaseTag.CASE2, int(l_eff)
    return CaseTag.CASE3, int(l_eff)


def reduce(spec: PlanarMapSpec) -> ReducedMap:
    """Conjugate a planar map to the reduced form and classify it.

    Applies ``L(x, y) = (x, -y)`` first when ``c < 0``, then the change
    ``Phi(x, y) = (x, y + f1(x, y)/c)``; the conjugated first component is
    exactly ``x + c y`` (checked to ``1e-13`` relative).
    """
    r = spec.degree
    c = spec.c
    f1, f2 = spec.f1, spec.f2
    sign_flipped = False
    if c < 0:
        # L o F o L: c -> -c, f1(x,y) -> f1(x,-y), f2 -> -f2(x,-y).
        sign_flipped = True
        c = -c
        flip = np.where(np.arange(r + 1)[None, :] % 2 == 1, -1.0, 1.0)
        f1 = Jet2(f1.coeffs * flip)
        f2 = Jet2(-(f2.coeffs * flip))

    h = f1 * (1.0 / c)
    f1_is_zero = not np.any(f1.coeffs)
    if f1_is_zero:
        conj = f2
    else:
        x_id = Jet2.variable_x(r)
        y_id = Jet2.variable_y(r)
        phi_inv_x, phi_inv_y = invert_in_y((x_id, y_id + h))
        fx = x_id + c * y_id + f1
        fy = y_id + f2
        mid_x = fx.compose_jet2(phi_inv_x, phi_inv_y)
        mid_y = fy.compose_jet2(phi_inv_x, phi_inv_y)
        tilde_x = mid_x
        tilde_y = mid_y + h.compose_jet2(mid_x, mid_y)
        # First component must collapse to x + c y.
        resid = tilde_x - (x_id + c * y_id)
        scale = max(float(np.max(np.abs(tilde_x.coeffs))), 1.0)
        if float(np.max(np.abs(resid.coeffs))) > REDUCTION_CONSISTENCY_TOL * scale:
            raise SpecFormatError(
                "internal consistency error: conjugated first component "
                "does not reduce to x + c*y"
            )
        conj = tilde_y - y_id

    table = conj.coeffs
    p = table[:, 0].copy()
    q = table[:r, 1].copy()
    u_table = table.copy()
    u_table[:, 0] = 0.0
    u_table[:, 1] = 0.0
    u = Jet2(u_table)

    scale = max(float(np.max(np.abs(table))), 1e-300)
    thresh = LEADING_COEFF_REL_TOL * scale
    k = next((i for i in range(2, r + 1) if abs(p[i]) > thresh), None)
    l_m = next((m for m in range(1, r) if abs(q[m]) > thresh), None)
    l = None if l_m is None else l_m + 1
    case, N = classify(k, l)
    s = 2 * r if case == CaseTag.CASE1 else r

    return ReducedMap(
        name=spec.name,
        c=c,
        r=r,
        p=p,
        q=q,
        u=u,
        k=k,
        l=l,
        a_k=0.0 if k is None else float(p[k]),
        b_l=0.0 if l is None else float(q[l - 1]),
        case=case,
        N=N,
        s=s,
        sign_flipped=sign_flipped,
        h=None if f1_is_zero else h,
        polynomial_exact=f1_is_zero,
        validity_radius=spec.validity_radius,
    )


# ---------------------------------------------------------------------------
# Hypothesis checks


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    detail: dict

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class HypothesisReport:
    case: CaseTag
    branch: str
    checks: tuple[HypothesisCheck, ...]

    @property
    def existence_ok(self) -> bool:
        return all(c.passed for c in self.checks if c.name == "analytic_existence")

    def to_dict(self) -> dict:
        return {
            "case": int(self.case),
            "branch": self.branch,
            "existence_ok": self.existence_ok,
            "checks": [c.to_dict() for c in self.checks],
        }


# Exceptional case-2 constant a_k = -((2l+1)/(3l-1)) b_l^2 blocks one sign
# family; it is flagged within this relative tolerance.
EXCEPTIONAL_CONSTANT_REL_TOL = 1e-9


def check_hypotheses(rm: ReducedMap, branch: str = "stable") -> HypothesisReport:
    """Evaluate the existence and regularity hypotheses for one branch.

    Always returns a report; nothing is raised here.  Downstream operations
    gate on ``analytic_existence`` (the sign conditions under which the
    true curve exists for analytic maps); the C^r conditions and the formal-window checks are
    informational for polynomial inputs.
    """
    if branch not in ("stable", "unstable"):
        raise ValueError("branch must be 'stable' or 'unstable'")
    checks: list[HypothesisCheck] = []
    c, r, case = rm.c, rm.r, rm.case
    k, l, a_k, b_l = rm.k, rm.l, rm.a_k, rm.b_l

    if case == CaseTag.CASE1:
        checks.append(
            HypothesisCheck(
                "analytic_existence",
                a_k > 0,
                {"condition": "a_k > 0", "a_k": a_k},
            )
        )
        checks.append(
            HypothesisCheck(
                "cr_regularity",
                r >= 1.5 * k,
                {"condition": "r >= 3k/2", "r": r, "k": k},
            )
        )
    elif case == CaseTag.CASE2:
        checks.append(
            HypothesisCheck(
                "analytic_existence",
                a_k > 0 and b_l != 0,
                {"condition": "a_k > 0 and b_l != 0", "a_k": a_k, "b_l": b_l},
            )
        )
        disc = b_l * b_l + 4 * c * a_k * l
        beta = math.nan
        cr_ok = False
        sgn = 1.0 if branch == "stable" else -1.0
        if disc >= 0:
            denom = abs(sgn * b_l - math.sqrt(disc))
            if denom > 0:
                beta = 2 * l * abs(b_l) / denom
                lhs1 = beta / ((r - 2 * l + 2) * (r - l + 1)) * (
                    2 * l * (l - 1) + c * k * a_k * beta / (b_l * b_l)
                )
                lhs2 = 2 * l * beta / (r - l + 1)
                cr_ok = r > k and max(lhs1, lhs2) < 1
        checks.append(
            HypothesisCheck(
                "cr_regularity",
                cr_ok,
                {
                    "condition": "r > k and beta-max inequality < 1",
                    "r": r,
                    "k": k,
                    "beta": beta,
                },
            )
        )
        window = -b_l * b_l / (4 * c * l)
        checks.append(
            HypothesisCheck(
                "formal_window",
                a_k > window,
                {"condition": "a_k > -b_l^2/(4 c l)", "a_k": a_k, "bound": window},
            )
        )
        exceptional = -((2 * l + 1) / (3 * l - 1)) * b_l * b_l
        is_exc = abs(a_k - exceptional) <= EXCEPTIONAL_CONSTANT_REL_TOL * max(
            abs(exceptional), 1e-300
        )
        checks.append(
            HypothesisCheck(
                "exceptional_constant",
                not is_exc,
                {
                    "condition": "a_k != -((2l+1)/(3l-1)) b_l^2",
                    "a_k": a_k,
                    "exceptional_value": exceptional,
                },
            )
        )
    else:
        want_neg = branch == "stable"
        ok = (b_l < 0) if want_neg else (b_l > 0)
        checks.append(
            HypothesisCheck(
                "analytic_existence",
                ok,
                {
                    "condition": "b_l < 0" if want_neg else "b_l > 0",
                    "b_l": b_l,
                },
            )
        )
        cr_ok = r > 2 * l - 1 and l * (l - 1) / ((r - 2 * l + 2) * (r - l + 1)) < 1
        checks.append(
            HypothesisCheck(
                "cr_regularity",
                cr_ok,
                {
                    "condition": "r > 2l-1 and l(l-1)/((r-2l+2)(r-l+1)) < 1",
                    "r": r,
                    "l": l,
                },
            )
        )

    return HypothesisReport(case=case, branch=branch, checks=tuple(checks))
