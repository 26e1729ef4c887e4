"""Formal polynomial pairs (K, R) solving the invariance equation to order.

``K = (K^x, K^y)`` parameterizes the candidate curve and ``R`` models the
inner dynamics; the defect ``G = F o K - K o R`` of an order-n pair vanishes
through prescribed orders that depend on the case.  Extension to order n+1
zeroes the two leading defect coefficients by solving a 2x2 affine system in
the new coefficients; the system is built numerically by unit-perturbation
linearization, which is exact because the dependence at those orders is
affine.  At one singular order the system degenerates and a second
coefficient of ``R`` is activated by the consistency condition; the leftover
one-parameter freedom is resolved by a fixed tie-break (new x-coefficient
zero), which changes the parameterization but not the curve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import HypothesisError, NumericError, SingularStepError, SpecFormatError
from .jets import Jet1
from .model import CaseTag, ReducedMap

# Relative tolerance for "this defect coefficient is zero" in order
# certificates.
ORDER_CERT_REL_TOL = 1e-11

# Absolute certificate floor, scaled by the pair's coefficient magnitude:
# double-precision jet arithmetic cannot distinguish structure below
# ~machine epsilon times the working coefficients.
ORDER_CERT_ABS_FLOOR = 1e-14

# |det| below this fraction of the matrix scale flags the singular step.
SINGULAR_DET_REL_TOL = 1e-9


class Branch(str, Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True)
class Parameterization:
    """Order-n polynomial pair for one branch.

    ``Kx`` stores coefficients of ``t^0..t^n`` (lowest nonzero is exactly 1
    at ``Kx_base``); ``Ky`` of ``t^0..t^{n + Ky_base - Kx_base}``.  ``R`` is
    always ``t + R_N t^N + R_2Nm1 t^{2N-1}`` with no other terms; the sign
    of ``R_N`` matches the branch.  ``off_y`` is the order offset of the
    certified y-defect (``2N - 1`` for the main families, ``k`` for the
    second case-3 family).
    """

    case: CaseTag
    branch: Branch
    n: int
    N: int
    Kx: np.ndarray
    Ky: np.ndarray
    Kx_base: int
    Ky_base: int
    R_N: float
    R_2Nm1: float
    off_y: int
    second_family: bool = False
    singular_done: bool = False

    def __post_init__(self):
        for name in ("Kx", "Ky"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.Kx[self.Kx_base] != 1.0:
            raise ValueError("K^x must be normalized to 1 at its base order")
        if self.R_N < 0 and self.branch != Branch.STABLE:
            raise ValueError("R_N < 0 contradicts declared unstable branch")
        if self.R_N > 0 and self.branch != Branch.UNSTABLE:
            raise ValueError("R_N > 0 contradicts declared stable branch")

    @property
    def R_degree(self) -> int:
        return 2 * self.N - 1

    def R_coeffs(self) -> np.ndarray:
        c = np.zeros(self.R_degree + 1)
        c[1] = 1.0
        c[self.N] += self.R_N
        c[2 * self.N - 1] += self.R_2Nm1
        return c

    def R_jet(self, degree: int) -> Jet1:
        c = np.zeros(degree + 1)
        d = min(degree, self.R_degree)
        c[: d + 1] = self.R_coeffs()[: d + 1]
        return Jet1(c)

    def R_eval(self, t):
        t = np.asarray(t, dtype=float)
        out = t + self.R_N * t**self.N + self.R_2Nm1 * t ** (2 * self.N - 1)
        return out if out.shape else float(out)

    def Kx_eval(self, t):
        return Jet1(self.Kx).eval(t)

    def Ky_eval(self, t):
        return Jet1(self.Ky).eval(t)

    def K_eval(self, t) -> np.ndarray:
        return np.array([self.Kx_eval(t), self.Ky_eval(t)])

    def to_dict(self) -> dict:
        return {
            "case": int(self.case),
            "branch": self.branch.value,
            "n": self.n,
            "N": self.N,
            "Kx": [float(v) for v in self.Kx[self.Kx_base :]],
            "Ky": [float(v) for v in self.Ky[self.Ky_base :]],
            "Kx_base": self.Kx_base,
            "Ky_base": self.Ky_base,
            "R_N": self.R_N,
            "R_2Nm1": self.R_2Nm1,
            "off_y": self.off_y,
            "second_family": self.second_family,
        }

    @staticmethod
    def from_dict(data: dict) -> Parameterization:
        try:
            kx_base = int(data["Kx_base"])
            ky_base = int(data["Ky_base"])
            kx_tail = [float(v) for v in data["Kx"]]
            ky_tail = [float(v) for v in data["Ky"]]
            n = int(data["n"])
            N = int(data["N"])
            case = CaseTag(int(data["case"]))
            branch = Branch(data["branch"])
        except (KeyError, ValueError, TypeError) as exc:
            raise SpecFormatError(f"invalid parameterization payload: {exc}") from exc
        Kx = np.zeros(kx_base + len(kx_tail))
        Kx[kx_base:] = kx_tail
        Ky = np.zeros(ky_base + len(ky_tail))
        Ky[ky_base:] = ky_tail
        off_y = int(data.get("off_y", 2 * N - 1))
        return Parameterization(
            case=case,
            branch=branch,
            n=n,
            N=N,
            Kx=Kx,
            Ky=Ky,
            Kx_base=kx_base,
            Ky_base=ky_base,
            R_N=float(data["R_N"]),
            R_2Nm1=float(data.get("R_2Nm1", 0.0)),
            off_y=off_y,
            second_family=bool(data.get("second_family", False)),
            singular_done=bool(data.get("R_2Nm1", 0.0) != 0.0),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


@dataclass(frozen=True)
class ResidualReport:
    """Defect jets of a pair with their certified vanishing orders."""

    n: int
    Gx: Jet1
    Gy: Jet1
    first_nonzero_x: int | None
    first_nonzero_y: int | None
    required_x: int
    required_y: int
    pointwise: tuple[tuple[float, float, float], ...]

    @property
    def order_ok(self) -> bool:
        ok_x = self.first_nonzero_x is None or self.first_nonzero_x >= self.required_x
        ok_y = self.first_nonzero_y is None or self.first_nonzero_y >= self.required_y
        return ok_x and ok_y

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "first_nonzero_x": self.first_nonzero_x,
            "first_nonzero_y": self.first_nonzero_y,
            "required_x": self.required_x,
            "required_y": self.required_y,
            "order_ok": self.order_ok,
            "Gx": [float(v) for v in self.Gx.coeffs],
            "Gy": [float(v) for v in self.Gy.coeffs],
            "pointwise": [
                {"t": t, "abs_ex": ex, "abs_ey": ey} for t, ex, ey in self.pointwise
            ],
        }


# ---------------------------------------------------------------------------
# Residual jets


def residual_jets(
    rm: ReducedMap, par: Parameterization, degree: int
) -> tuple[Jet1, Jet1]:
    """Jets of ``G = F o K - K o R`` through ``degree``."""
    kx = Jet1(par.Kx).pad(degree) if par.Kx.size - 1 <= degree else Jet1(par.Kx[: degree + 1])
    ky = Jet1(par.Ky).pad(degree) if par.Ky.size - 1 <= degree else Jet1(par.Ky[: degree + 1])
    rj = par.R_jet(degree)
    p_jet = Jet1(rm.p).pad(degree) if rm.p.size - 1 <= degree else Jet1(rm.p[: degree + 1])
    q_jet = Jet1(rm.q).pad(degree) if rm.q.size - 1 <= degree else Jet1(rm.q[: degree + 1])

    gx = kx + rm.c * ky - kx.compose(rj)
    gy = ky + p_jet.compose(kx) + ky * q_jet.compose(kx) - ky.compose(rj)
    if np.any(rm.u.coeffs):
        u_pad = rm.u.pad(degree) if rm.u.degree <= degree else rm.u.truncate(degree)
        gy = gy + u_pad.compose_jet1(kx, ky)
    return gx, gy


def certificate_floor(par: Parameterization) -> float:
    """Absolute zero-threshold for defect certificates of this pair."""
    return ORDER_CERT_ABS_FLOOR * max(
        1.0, float(np.max(np.abs(par.Kx))), float(np.max(np.abs(par.Ky)))
    )


def _first_nonzero(jet: Jet1, rel_tol: float, abs_tol: float) -> int | None:
    return jet.leading_index(rel_tol=rel_tol, abs_tol=abs_tol)


def residual_report(
    rm: ReducedMap,
    par: Parameterization,
    degree: int | None = None,
    t_samples=None,
) -> ResidualReport:
    """Certify the vanishing orders of the defect of ``par``.

    The jets are computed with a margin of N + 2 orders above the required
    ones so truncation cannot produce false certificates.  Pointwise samples
    are evaluated from the same jets.
    """
    req_x = par.n + par.N
    req_y = par.n + par.off_y
    cap = degree if degree is not None else par.n + 2 * par.N + 2
    cap = max(cap, req_y + 1)
    gx, gy = residual_jets(rm, par, cap)
    if t_samples is None:
        t_samples = np.geomspace(1e-3, 0.1, 9)
    pointwise = tuple(
        (float(t), abs(float(gx.eval(t))), abs(float(gy.eval(t)))) for t in t_samples
    )
    floor = certificate_floor(par)
    return ResidualReport(
        n=par.n,
        Gx=gx,
        Gy=gy,
        first_nonzero_x=_first_nonzero(gx, ORDER_CERT_REL_TOL, floor),
        first_nonzero_y=_first_nonzero(gy, ORDER_CERT_REL_TOL, floor),
        required_x=req_x,
        required_y=req_y,
        pointwise=pointwise,
    )


# ---------------------------------------------------------------------------
# Leading pairs


def leading_pair(
    rm: ReducedMap, branch: Branch, second_family: bool = False
) -> tuple[float, float]:
    """Closed-form leading coefficients ``(K^y_base, R_N)`` for one branch."""
    branch = Branch(branch)
    c = rm.c
    if second_family:
        if rm.case != CaseTag.CASE3:
            raise HypothesisError("second family exists only in case 3")
        if rm.k is None or rm.a_k == 0.0:
            raise HypothesisError("second family needs a nonzero pure-x term")
        ky = -rm.a_k / rm.b_l
        rN = c * ky
        _require_sign(rN, branch)
        return ky, rN

    if rm.case == CaseTag.CASE1:
        k, a_k = rm.k, rm.a_k
        if a_k <= 0:
            raise HypothesisError(
                f"case 1 requires a_k > 0 for a real formal curve (a_k = {a_k})"
            )
        mag = math.sqrt(2.0 * a_k / (c * (k + 1)))
        ky = -mag if branch == Branch.STABLE else mag
        return ky, 0.5 * c * ky

    if rm.case == CaseTag.CASE2:
        l, a_k, b_l = rm.l, rm.a_k, rm.b_l
        disc = b_l * b_l + 4.0 * c * a_k * l
        if disc < 0:
            raise HypothesisError(
                "no real formal curve: b_l^2 + 4 c a_k l < 0"
            )
        root = math.sqrt(disc)
        first = (b_l - root) / (2.0 * c * l)
        second = (b_l + root) / (2.0 * c * l)
        want_neg = branch == Branch.STABLE
        for ky in (first, second):
            rN = c * ky
            if (rN < 0) == want_neg and rN != 0.0:
                return ky, rN
        raise HypothesisError(
            f"no formal curve with R_N {'<' if want_neg else '>'} 0 in case 2"
        )

    # case 3, first family
    l, b_l = rm.l, rm.b_l
    ky = b_l / (c * l)
    rN = b_l / l
    _require_sign(rN, branch)
    return ky, rN


def _require_sign(rN: float, branch: Branch) -> None:
    if rN == 0.0:
        raise HypothesisError("degenerate leading R coefficient")
    if (rN < 0) != (branch == Branch.STABLE):
        raise HypothesisError(
            f"requested {branch.value} branch but leading R coefficient is {rN:g}"
        )


def _initial_parameterization(
    rm: ReducedMap, branch: Branch, second_family: bool
) -> Parameterization:
    ky_lead, rN = leading_pair(rm, branch, second_family)
    if second_family:
        n0, N = 1, rm.k - rm.l + 1
        kx_base, ky_base = 1, rm.k - rm.l + 1
        off_y = rm.k
    elif rm.case == CaseTag.CASE1:
        n0, N = 2, rm.k
        kx_base, ky_base = 2, rm.k + 1
        off_y = 2 * N - 1
    else:
        n0, N = 1, rm.l
        kx_base, ky_base = 1, rm.l
        off_y = 2 * N - 1
    Kx = np.zeros(n0 + 1)
    Kx[kx_base] = 1.0
    Ky = np.zeros(n0 + ky_base - kx_base + 1)
    Ky[ky_base] = ky_lead
    return Parameterization(
        case=rm.case,
        branch=branch,
        n=n0,
        N=N,
        Kx=Kx,
        Ky=Ky,
        Kx_base=kx_base,
        Ky_base=ky_base,
        R_N=rN,
        R_2Nm1=0.0,
        off_y=off_y,
        second_family=second_family,
    )


# ---------------------------------------------------------------------------
# Order extension


def _order_cap(rm: ReducedMap, par: Parameterization) -> int | None:
    """Maximum attainable order for maps with a discarded remainder."""
    if rm.polynomial_exact:
        return None
    r = rm.r
    if par.second_family:
        return r - (rm.k - rm.l) * rm.l - 2 * rm.l + 1
    if par.case == CaseTag.CASE1:
        return 2 * (r - rm.k + 1)
    return r - 2 * rm.l + 2


def _expected_singular_target(par: Parameterization) -> int:
    """Order whose construction activates the second R coefficient."""
    if par.case == CaseTag.CASE1 and not par.second_family:
        return par.N + 1
    return par.N


def _defect_targets(rm: ReducedMap, par: Parameterization, kx, ky, r2nm1_extra):
    """Leading defect coefficients for trial coefficient arrays."""
    n = par.n
    ox = n + par.N
    oy = n + par.off_y
    cap = max(ox, oy)
    trial = replace(
        par,
        Kx=kx,
        Ky=ky,
        R_2Nm1=par.R_2Nm1 + r2nm1_extra,
    )
    gx, gy = residual_jets(rm, trial, cap)
    return np.array([gx.coeffs[ox], gy.coeffs[oy]])


def extend_order(
    rm: ReducedMap, par: Parameterization, tie_break: float = 0.0
) -> Parameterization:
    """Extend an order-n pair to order n+1.

    The two new coefficients (and, at the singular step, the second R
    coefficient) satisfy an affine system obtained by evaluating the defect
    with each unknown set to 0 and to 1 and subtracting.  Away from the
    singular step the system is solved directly with the extra R coefficient
    kept at zero; at the singular step the consistency condition determines
    the R coefficient and the x-coefficient is set to ``tie_break``.
    """
    n = par.n
    cap = _order_cap(rm, par)
    if cap is not None and n + 1 > cap:
        raise NumericError(
            f"order cap exceeded: n+1 = {n + 1} > {cap} and the map carries "
            "a remainder beyond its jet degree"
        )

    ax = n + 1
    ay = n + par.Ky_base - par.Kx_base + 1
    # Coefficient arrays may extend beyond the certified order (a-posteriori
    # inputs); the new unknowns then correct the existing entries.
    kx0 = np.zeros(max(ax + 1, par.Kx.size))
    kx0[: par.Kx.size] = par.Kx
    ky0 = np.zeros(max(ay + 1, par.Ky.size))
    ky0[: par.Ky.size] = par.Ky

    def with_unit(arr, order):
        out = arr.copy()
        out[order] += 1.0
        return out

    g0 = _defect_targets(rm, par, kx0, ky0, 0.0)
    col_x = _defect_targets(rm, par, with_unit(kx0, ax), ky0, 0.0) - g0
    col_y = _defect_targets(rm, par, kx0, with_unit(ky0, ay), 0.0) - g0
    mat = np.column_stack([col_x, col_y])

    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    scale = max(
        abs(mat[0, 0] * mat[1, 1]) + abs(mat[0, 1] * mat[1, 0]),
        float(np.max(np.abs(mat))) ** 2,
        1e-300,
    )
    singular = abs(det) < SINGULAR_DET_REL_TOL * scale
    expected_singular = (not par.singular_done) and (n + 1 == _expected_singular_target(par))
    if singular != expected_singular:
        raise SingularStepError(
            f"singular-step mismatch at n={n}->{n + 1}: numeric singular={singular}, "
            f"analytic prediction={expected_singular} (|det|={abs(det):.3e}, "
            f"scale={scale:.3e})"
        )

    r_extra = 0.0
    if singular:
        col_r = _defect_targets(rm, par, kx0, ky0, 1.0) - g0
        # Left null vector of the rank-1 matrix picks the consistency
        # condition: u . (g0 + col_r * r) = 0.
        row = 0 if np.abs(mat[0]).max() >= np.abs(mat[1]).max() else 1
        other = 1 - row
        # mat[other] = lam * mat[row]
        pivot = mat[row, 0] if abs(mat[row, 0]) >= abs(mat[row, 1]) else mat[row, 1]
        j = 0 if abs(mat[row, 0]) >= abs(mat[row, 1]) else 1
        lam = mat[other, j] / mat[row, j]
        u = np.array([lam, -1.0]) if row == 0 else np.array([-1.0, lam])
        denom = float(u @ col_r)
        if denom == 0.0:
            raise SingularStepError(
                "consistency condition cannot be met: the extra R coefficient "
                "does not act on the degenerate direction (exceptional map)"
            )
        r_extra = -float(u @ g0) / denom
        rhs = -(g0 + col_r * r_extra)
        tau_x = tie_break
        rem = rhs - col_x * tau_x
        # Solve the better-conditioned row for the y-coefficient.
        row_y = int(np.argmax(np.abs(col_y)))
        if col_y[row_y] == 0.0:
            raise SingularStepError("degenerate system: y-column vanished")
        tau_y = rem[row_y] / col_y[row_y]
    else:
        sol = np.linalg.solve(mat, -g0)
        tau_x, tau_y = float(sol[0]), float(sol[1])

    kx_new = kx0.copy()
    kx_new[ax] += tau_x
    ky_new = ky0.copy()
    ky_new[ay] += tau_y
    # Cheap self-check: the targeted defect coefficients must now vanish
    # (evaluated at the orders of the step just performed).
    g_check = _defect_targets(rm, par, kx_new, ky_new, r_extra)
    ref = max(float(np.max(np.abs(g0))), float(np.max(np.abs(mat))), 1.0)
    if np.max(np.abs(g_check)) > 1e-8 * ref:
        raise NumericError(
            f"order extension failed to zero the defect at n={n + 1}: "
            f"|G| = {np.max(np.abs(g_check)):.3e}"
        )
    return replace(
        par,
        n=n + 1,
        Kx=kx_new,
        Ky=ky_new,
        R_2Nm1=par.R_2Nm1 + r_extra,
        singular_done=par.singular_done or singular,
    )


def case1_singular_r_coefficient(
    rm: ReducedMap, r_k: float, gx_2k: float, gy_3km1: float
) -> float:
    """Closed-form second R coefficient at the case-1 singular step.

    Independent of the linearization path: evaluates
    ``(2k R_k [G^x]_{2k} + c [G^y]_{3k-1}) / (2 (3k+1) R_k)`` from the
    defect coefficients of the order-k pair with leading coefficient R_k.
    The y-defect order ``3k-1`` is the one entering the degenerate linear
    system (``n + 2k - 1`` at ``n = k``).
    """
    k = rm.k
    return (2 * k * r_k * gx_2k + rm.c * gy_3km1) / (2 * (3 * k + 1) * r_k)


def approximate(
    rm: ReducedMap,
    branch: Branch,
    n: int,
    second_family: bool = False,
    tie_break: float = 0.0,
) -> tuple[Parameterization, ResidualReport]:
    """Build the order-n pair for a branch and certify its defect orders."""
    branch = Branch(branch)
    par = _initial_parameterization(rm, branch, second_family)
    if n < par.n:
        raise ValueError(f"order must be >= {par.n} for this case")
    while par.n < n:
        par = extend_order(rm, par, tie_break=tie_break)
    report = residual_report(rm, par)
    if not report.order_ok:
        raise NumericError(
            "order certificate failed: defect orders "
            f"({report.first_nonzero_x}, {report.first_nonzero_y}) below "
            f"({report.required_x}, {report.required_y})"
        )
    return par, report


def case1_singular_r_coefficient_from_pair(
    rm: ReducedMap, par: Parameterization
) -> float:
    """Evaluate the closed-form consistency value from an order-k pair."""
    if rm.case != CaseTag.CASE1:
        raise ValueError("closed form applies to case 1 only")
    k = rm.k
    if par.n != k:
        raise ValueError(f"expected an order-{k} pair, got order {par.n}")
    gx, gy = residual_jets(rm, par, 3 * k - 1)
    return case1_singular_r_coefficient(
        rm, par.R_N, float(gx.coeffs[2 * k]), float(gy.coeffs[3 * k - 1])
    )
