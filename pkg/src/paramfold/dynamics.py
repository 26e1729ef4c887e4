"""Iteration of R and F, quantitative iterate bounds, orbit sums, inversion
and globalization of local invariant curves.

For a contracting inner dynamics ``R(t) = t + R_N t^N + ...`` with
``R_N < 0`` the iterates obey, for ``0 < nu < (N-1)|R_N| < mu`` and ``rho``
small, the sandwich

    t / (1 + j mu t^{N-1})^{1/(N-1)}  <  R^j(t)  <  t / (1 + j nu t^{N-1})^{1/(N-1)}

and, with ``kappa = nu/mu > 1/N``, the derivative bound

    DR^j(t) <= (1 + j mu t^{N-1})^{-kappa N / (N-1)}.

These power-law rates certify truncation tails of the orbit sums

    S^{-1} eta = - sum_{j>=0} eta o R^j,

the right inverse of the difference operator ``f -> f o R - f``.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import _threads
from .approx import Branch, Parameterization
from .errors import (
    CurveEmissionError,
    NewtonDivergenceError,
    NumericError,
    OrbitSumError,
)
from .jets import Jet2
from .model import PlanarMapSpec, ReducedMap, reduce


def default_nu_mu(N: int, R_N: float) -> tuple[float, float]:
    """Symmetric 10% bracket around the critical rate (kappa = 9/11 > 1/N)."""
    base = (N - 1) * abs(R_N)
    return 0.9 * base, 1.1 * base


# ---------------------------------------------------------------------------
# Iteration of R


def _r_eval(par: Parameterization, t):
    return par.R_eval(t)


def r_inverse(par: Parameterization, y: float, tol: float = 1e-14, max_steps: int = 60) -> float:
    """Solve ``R(w) = y`` by Newton on the low-degree polynomial."""
    w = y - par.R_N * y**par.N
    for _ in range(max_steps):
        g = par.R_eval(w) - y
        if abs(g) <= tol * max(1.0, abs(y)):
            return w
        dg = 1.0 + par.N * par.R_N * w ** (par.N - 1) + (
            2 * par.N - 1
        ) * par.R_2Nm1 * w ** (2 * par.N - 2)
        if dg == 0.0:
            break
        w -= g / dg
    raise NewtonDivergenceError(f"R-inversion did not converge at y={y!r}")


def iterate_R(par: Parameterization, t: float, j: int, rho: float) -> float:
    """j-th iterate of the contracting inner dynamics starting at ``t``.

    For the stable branch this is direct iteration of R; for the unstable
    branch (``R_N > 0``) the numeric inverse of R is iterated instead, which
    is the contracting direction.
    """
    if not 0.0 < t < rho:
        raise ValueError(f"t={t!r} outside (0, rho={rho!r})")
    forward = par.R_N < 0
    s = t
    for _ in range(j):
        s = par.R_eval(s) if forward else r_inverse(par, s)
        if not 0.0 < s < rho:
            raise NumericError(
                f"iterate left (0, {rho}): rho too large for this dynamics"
            )
    return float(s)


# ---------------------------------------------------------------------------
# Quantitative bound checks


@dataclass(frozen=True)
class OrbitBoundParams:
    """Rates (nu, mu) bracketing (N-1)|R_N|, with the working radius rho."""

    N: int
    R_N: float
    nu: float
    mu: float
    rho: float

    def __post_init__(self):
        crit = (self.N - 1) * abs(self.R_N)
        if not 0.0 < self.nu < crit:
            raise ValueError(
                f"nu must lie in (0, (N-1)|R_N|) = (0, {crit}); got {self.nu}"
            )
        if not self.mu > crit:
            raise ValueError(f"mu must exceed (N-1)|R_N| = {crit}; got {self.mu}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def kappa(self) -> float:
        return self.nu / self.mu


@dataclass(frozen=True)
class BoundViolation:
    t: float
    j: int
    kind: str
    value: float
    bound: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class BoundReport:
    params: OrbitBoundParams
    j_max: int
    t_samples: tuple[float, ...]
    n_checks: int
    violations: tuple[BoundViolation, ...]
    rho_valid: float

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "nu": self.params.nu,
            "mu": self.params.mu,
            "kappa": self.params.kappa,
            "rho": self.params.rho,
            "j_max": self.j_max,
            "n_samples": len(self.t_samples),
            "n_checks": self.n_checks,
            "n_violations": len(self.violations),
            "violations": [v.to_dict() for v in self.violations[:50]],
            "rho_valid": self.rho_valid,
            "passed": self.passed,
        }


def check_orbit_bounds(
    par: Parameterization,
    params: OrbitBoundParams,
    t_samples,
    j_max: int,
    max_recorded: int = 200,
) -> BoundReport:
    """Sweep the iterate sandwich and the DR^j bound over samples and j.

    Requires ``kappa = nu/mu > 1/N`` so the derivative bound applies.  The
    report lists violations (capped) and the largest sample radius below
    which every check passed.
    """
    if params.kappa <= 1.0 / params.N:
        raise ValueError(
            f"kappa = nu/mu = {params.kappa:.4f} must exceed 1/N = {1.0 / params.N:.4f}"
        )
    t0 = np.asarray(sorted(float(t) for t in t_samples))
    if np.any(t0 <= 0) or np.any(t0 >= params.rho):
        raise ValueError("t_samples must lie in (0, rho)")
    N = params.N
    nu, mu = params.nu, params.mu
    expo = 1.0 / (N - 1)
    dr_expo = params.kappa * N / (N - 1)

    r_coeffs = par.R_coeffs()
    dr_coeffs = np.polynomial.polynomial.polyder(r_coeffs)

    s = t0.copy()
    dr_prod = np.ones_like(s)
    violations: list[BoundViolation] = []
    n_checks = 0
    bad = np.zeros(t0.shape, dtype=bool)
    tpow = t0 ** (N - 1)
    for j in range(1, j_max + 1):
        dr_prod = dr_prod * np.polynomial.polynomial.polyval(s, dr_coeffs)
        s = np.polynomial.polynomial.polyval(s, r_coeffs)
        lower = t0 * (1.0 + j * mu * tpow) ** (-expo)
        upper = t0 * (1.0 + j * nu * tpow) ** (-expo)
        dr_bound = (1.0 + j * mu * tpow) ** (-dr_expo)
        n_checks += 3 * t0.size
        for kind, mask, val, bnd in (
            ("sandwich_lower", ~(s > lower), s, lower),
            ("sandwich_upper", ~(s < upper), s, upper),
            ("dr_upper", ~(dr_prod <= dr_bound), dr_prod, dr_bound),
        ):
            if np.any(mask):
                bad |= mask
                for idx in np.nonzero(mask)[0]:
                    if len(violations) < max_recorded:
                        violations.append(
                            BoundViolation(
                                t=float(t0[idx]),
                                j=j,
                                kind=kind,
                                value=float(val[idx]),
                                bound=float(bnd[idx]),
                            )
                        )

    rho_valid = 0.0
    for idx in range(t0.size):
        if bad[idx]:
            break
        rho_valid = float(t0[idx])
    return BoundReport(
        params=params,
        j_max=j_max,
        t_samples=tuple(float(v) for v in t0),
        n_checks=n_checks,
        violations=tuple(violations),
        rho_valid=rho_valid,
    )


def select_rho(par: Parameterization, start: float = 0.1, j_max: int = 2000) -> float:
    """Adaptive working radius: halve from ``start`` until the iterate
    bounds pass on a coarse sweep and the leading term dominates
    (``|R_N| rho^{N-1} < 0.1``)."""
    rho = start
    for _ in range(40):
        lead_ok = abs(par.R_N) * rho ** (par.N - 1) < 0.1
        if lead_ok:
            nu, mu = default_nu_mu(par.N, par.R_N)
            params = OrbitBoundParams(N=par.N, R_N=par.R_N, nu=nu, mu=mu, rho=rho)
            samples = np.geomspace(rho * 1e-3, rho * 0.999, 16)
            try:
                report = check_orbit_bounds(par, params, samples, j_max)
            except NumericError:
                report = None
            if report is not None and report.passed:
                return rho
        rho *= 0.5
    raise NumericError("could not validate any rho down from the starting value")


# ---------------------------------------------------------------------------
# Orbit sums (right inverse of f -> f o R - f)


def orbit_sum(
    eta: Callable[[float], tuple[float, float]],
    par: Parameterization,
    t: float,
    tol: float = 1e-13,
    j_cap: int = 2_000_000,
    orders: tuple[int, int] | None = None,
    nu: float | None = None,
) -> tuple[float, float, float]:
    """Evaluate ``-(sum_{j>=0} eta(R^j(t)))`` with a certified tail bound.

    ``orders`` are the vanishing orders of the two slots of ``eta`` at 0
    (defaults to ``(n + N - 1, n + 2N - 2)`` read from the pair for
    ``n = par.n``); they must exceed ``N - 1`` so the integral-comparison
    tail converges.  Returns ``(value_x, value_y, tail_bound)``; the tail
    bound estimates the weighted size of ``eta`` along the orbit and applies
    the iterate upper bound to the remaining terms.
    """
    if par.R_N >= 0:
        raise ValueError("orbit sums require the contracting (stable) dynamics")
    N = par.N
    if orders is None:
        orders = (par.n + N - 1, par.n + 2 * N - 2)
    mx, my = orders
    if min(mx, my) <= N - 1:
        raise ValueError("vanishing orders must exceed N - 1")
    if nu is None:
        nu = default_nu_mu(N, par.R_N)[0]

    sx = 0.0
    sy = 0.0
    cx = 0.0
    cy = 0.0
    s = float(t)
    tail = math.inf
    for j in range(j_cap):
        ex, ey = eta(s)
        sx += ex
        sy += ey
        wx = s**mx
        wy = s**my
        if wx > 0.0:
            cx = max(cx, abs(ex) / wx)
        if wy > 0.0:
            cy = max(cy, abs(ey) / wy)
        s_next = par.R_eval(s)
        if not 0.0 < s_next < s:
            raise NumericError(
                f"orbit left the contracting regime at R^{j + 1}({t!r}); "
                "rho too large"
            )
        s = s_next
        tail_x = cx * s ** (mx - N + 1) * (N - 1) / (nu * (mx - N + 1))
        tail_y = cy * s ** (my - N + 1) * (N - 1) / (nu * (my - N + 1))
        tail = max(tail_x, tail_y)
        if tail < tol:
            return -sx, -sy, tail
    raise OrbitSumError(
        f"orbit sum at t={t!r} did not reach tail < {tol} within {j_cap} terms",
        tail=tail,
    )


# ---------------------------------------------------------------------------
# Newton inversion of planar maps


@dataclass(frozen=True)
class InverseMap:
    """Newton-based inverse of a forward planar map."""

    forward: PlanarMapSpec | ReducedMap
    tol: float = 1e-13
    max_steps: int = 50

    @property
    def c(self) -> float:
        return self.forward.c

    def seed(self, z) -> np.ndarray:
        # Inverse of the linear part [[1, c], [0, 1]].
        return np.array([z[0] - self.c * z[1], z[1]])


def invert_F(inv: InverseMap, z, seed=None) -> np.ndarray:
    """Solve ``F(w) = z`` by Newton, seeded from the linear inverse.

    ``seed`` overrides the default seed; along a slow manifold the previous
    point is a far better start and keeps Newton on the correct branch of a
    folded map.
    """
    z = np.asarray(z, dtype=float)
    w = inv.seed(z) if seed is None else np.asarray(seed, dtype=float)
    scale = max(1.0, float(np.max(np.abs(z))))
    for _ in range(inv.max_steps):
        g = inv.forward.eval(w) - z
        if float(np.max(np.abs(g))) <= inv.tol * scale:
            return w
        J = inv.forward.jacobian(w)
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergenceError(f"singular Jacobian at {w!r}") from exc
        w = w - step
        if not np.all(np.isfinite(w)):
            raise NewtonDivergenceError(f"Newton diverged inverting near z={z!r}")
    raise NewtonDivergenceError(
        f"Newton did not reach tol={inv.tol} inverting z={z!r}"
    )


# ---------------------------------------------------------------------------
# Jet inversion and the unstable-manifold setup


def invert_map_jets(rm: ReducedMap, degree: int | None = None) -> PlanarMapSpec:
    """Jet of the inverse of the reduced map, as a new map spec.

    Fixed-point iteration ``W <- A^{-1} ((x, y) - f(W))`` with ``A`` the
    linear part; each pass gains at least one order, so ``degree`` passes
    suffice.  The returned spec has ``c = -c`` (the inverse's linear part is
    the inverse shear) and carries the inverse's nonlinear jets.  For a
    genuinely polynomial map the inverse's Taylor coefficients are exact to
    any requested degree; otherwise the degree is clamped to the input's
    (everything beyond it would be fabricated).
    """
    d = rm.r if degree is None else degree
    if d > rm.r and not rm.polynomial_exact:
        d = rm.r
    c = rm.c
    P = rm.nonlinear_jet().pad(d) if d > rm.r else rm.nonlinear_jet()
    x = Jet2.variable_x(d)
    y = Jet2.variable_y(d)
    w1, w2 = x - c * y, y
    for _ in range(d):
        pw = P.compose_jet2(w1, w2)
        w2_new = y - pw
        w1_new = x - c * y + c * pw
        if np.array_equal(w1_new.coeffs, w1.coeffs) and np.array_equal(
            w2_new.coeffs, w2.coeffs
        ):
            break
        w1, w2 = w1_new, w2_new
    f1_inv = w1 - (x - c * y)
    f2_inv = w2 - y
    return PlanarMapSpec(
        name=rm.name + "_inverse",
        c=-c,
        degree=d,
        f1=f1_inv,
        f2=f2_inv,
        validity_radius=rm.validity_radius,
    )


def unstable_setup(rm: ReducedMap, degree: int | None = None) -> ReducedMap:
    """Reduced form of the inverse map; its stable curve is the unstable
    curve of the input, mapped back through the recorded conjugations.

    The inverse jet has ``c < 0``, so the reduction applies the sign
    conjugation automatically; the combined chart is stored on the returned
    map (``point_to_original`` sends its frame back to the input frame).
    The inverse jet is a truncation of a non-polynomial map, so the result
    is never marked polynomial-exact and order caps stay active; raising
    ``degree`` (exact for polynomial inputs) raises the attainable order.
    """
    inv_spec = invert_map_jets(rm, degree)
    g = reduce(inv_spec)
    return dataclasses.replace(g, polynomial_exact=False)


# ---------------------------------------------------------------------------
# Curves and globalization


@dataclass
class InvariantCurve:
    """A locally validated curve plus everything needed to extend it.

    ``par`` is always the stable-side pair (``R_N < 0``) of ``solved_map``;
    for the unstable branch ``solved_map`` is the reduced inverse and
    ``charts`` carries the conjugations back to the input frame.  ``F`` is
    the map in the input frame (the one whose curve this is).
    """

    branch: Branch
    par: Parameterization
    rho: float
    solved_map: ReducedMap
    F: PlanarMapSpec | ReducedMap
    charts: tuple[ReducedMap, ...] = ()
    delta_eval: Callable[[float], tuple[float, float]] | None = None
    newton_tol: float = 1e-13
    j_cap: int = 4096

    def local_point(self, t: float) -> np.ndarray:
        """Curve point for t within the validated radius."""
        pt = np.array([self.par.Kx_eval(t), self.par.Ky_eval(t)])
        if self.delta_eval is not None:
            dx, dy = self.delta_eval(t)
            pt = pt + np.array([dx, dy])
        for chart in self.charts:
            pt = chart.point_to_original(pt)
        return pt

    def inner_eval(self, t: float) -> float:
        """The curve's own inner dynamics R_F at ``t``."""
        if self.branch == Branch.STABLE:
            return float(self.par.R_eval(t))
        return r_inverse(self.par, t, tol=self.newton_tol)

    def inner_inverse(self, t: float) -> float:
        if self.branch == Branch.STABLE:
            return r_inverse(self.par, t, tol=self.newton_tol)
        return float(self.par.R_eval(t))

    def point(self, t: float) -> np.ndarray:
        return globalize(self, t)

    def invariance_residual(self, t: float) -> np.ndarray:
        """``F(K(t)) - K(R_F(t))`` in the input frame."""
        return self.F.eval(self.point(t)) - self.point(self.inner_eval(t))


def globalize(
    curve: InvariantCurve, t: float, j_override: int | None = None
) -> np.ndarray:
    """Evaluate the curve at ``t``, conjugating out of the local interval.

    Stable branch: find j with ``R^j(t)`` inside the validated interval,
    evaluate locally and pull back with ``F^{-1}`` j times (Newton).
    Unstable branch: pull the parameter back with the contracting
    polynomial (the inverse's inner dynamics) and push forward with F, so
    no map inversion is needed.  The result is independent of the chosen
    admissible j up to the Newton tolerance.
    """
    if t <= 0:
        raise ValueError("curve parameter must be positive")
    # Parameter pullback is by the contracting polynomial in both branches.
    if t <= curve.rho and j_override is None:
        return curve.local_point(t)
    s = t
    j = 0
    while s > curve.rho or (j_override is not None and j < j_override):
        s_next = curve.par.R_eval(s)
        if not 0.0 < s_next < s:
            raise NumericError(
                f"parameter pullback failed at t={t!r}: inner dynamics not "
                f"contracting at {s!r}"
            )
        s = s_next
        j += 1
        if j > curve.j_cap:
            raise NumericError(
                f"parameter pullback needs more than {curve.j_cap} steps at t={t!r}"
            )
    pt = curve.local_point(s)
    if curve.branch == Branch.STABLE:
        inv = InverseMap(curve.F, tol=curve.newton_tol)
        for _ in range(j):
            pt = invert_F(inv, pt, seed=pt)
    else:
        for _ in range(j):
            pt = curve.F.eval(pt)
    return pt


def emit_curve(
    curve: InvariantCurve,
    t_min: float,
    t_max: float,
    samples: int | None = None,
    ratio: float = 1.2,
) -> list[tuple[float, float, float, float, float]]:
    """Rows ``(t, x, y, res_x, res_y)`` at geometrically spaced parameters.

    Dynamics near the fixed point are extremely slow, so geometric spacing
    (default ratio 1.2) resolves both the tangency region and the far field.
    On a globalization failure the rows produced so far are attached to the
    raised error.
    """
    if not 0 < t_min <= t_max:
        raise ValueError("need 0 < t_min <= t_max")
    if samples is not None:
        if samples < 1:
            raise ValueError("samples must be >= 1")
        if samples == 1:
            ts = [t_max]
        else:
            ts = list(np.geomspace(t_min, t_max, samples))
    else:
        ts = []
        t = t_max
        while t >= t_min * (1.0 - 1e-12):
            ts.append(t)
            t /= ratio
        ts.reverse()

    def row(t: float):
        pt = curve.point(t)
        res = curve.F.eval(pt) - curve.point(curve.inner_eval(t))
        return (float(t), float(pt[0]), float(pt[1]), float(res[0]), float(res[1]))

    try:
        return _threads.parallel_map(row, ts)
    except NumericError:
        # Serial sweep to pin down the failing parameter and keep the prefix.
        rows: list[tuple[float, float, float, float, float]] = []
        for t in ts:
            try:
                rows.append(row(t))
            except NumericError as exc:
                raise CurveEmissionError(
                    f"globalization failed at t={t!r}: {exc}", rows=rows
                ) from exc
        return rows
