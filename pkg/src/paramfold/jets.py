"""Truncated power-series (jet) arithmetic in one and two real variables.

All operations truncate at a fixed working degree and are exact in exact
arithmetic; coefficients are IEEE doubles.  Jets are immutable after
construction, so values can be shared freely across threads.

Conventions
-----------
* ``Jet1`` stores coefficients ``c_0..c_d`` of ``t^0..t^d``.
* ``Jet2`` stores a triangular table ``c[i, j]`` for ``x^i y^j`` with
  ``i + j <= d``.  The serialization order is graded lexicographic: ascending
  total degree ``i + j``, then ascending ``j`` (descending power of ``x``).
  This order is fixed so serialized jets round-trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Jet1:
    """Univariate jet: polynomial in ``t`` truncated at ``degree``."""

    coeffs: np.ndarray
    degree: int = field(init=False)

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("Jet1 coefficients must be a non-empty 1-d array")
        object.__setattr__(self, "coeffs", _freeze(arr))
        object.__setattr__(self, "degree", arr.size - 1)

    # -- constructors ---------------------------------------------------

    @staticmethod
    def zero(degree: int) -> Jet1:
        return Jet1(np.zeros(degree + 1))

    @staticmethod
    def variable(degree: int) -> Jet1:
        c = np.zeros(degree + 1)
        if degree >= 1:
            c[1] = 1.0
        return Jet1(c)

    @staticmethod
    def monomial(order: int, value: float, degree: int) -> Jet1:
        if order > degree:
            raise ValueError(f"monomial order {order} exceeds degree {degree}")
        c = np.zeros(degree + 1)
        c[order] = value
        return Jet1(c)

    # -- ring operations ------------------------------------------------

    def _check(self, other: Jet1) -> None:
        if self.degree != other.degree:
            raise ValueError(
                f"degree mismatch: {self.degree} vs {other.degree}"
            )

    def __add__(self, other: Jet1) -> Jet1:
        self._check(other)
        return Jet1(self.coeffs + other.coeffs)

    def __sub__(self, other: Jet1) -> Jet1:
        self._check(other)
        return Jet1(self.coeffs - other.coeffs)

    def __neg__(self) -> Jet1:
        return Jet1(-self.coeffs)

    def __mul__(self, other: Jet1 | float) -> Jet1:
        if isinstance(other, Jet1):
            self._check(other)
            full = np.convolve(self.coeffs, other.coeffs)
            return Jet1(full[: self.degree + 1])
        return Jet1(self.coeffs * float(other))

    __rmul__ = __mul__

    def truncate(self, degree: int) -> Jet1:
        if degree > self.degree:
            raise ValueError("truncate cannot raise the degree; use pad")
        return Jet1(self.coeffs[: degree + 1])

    def pad(self, degree: int) -> Jet1:
        if degree < self.degree:
            raise ValueError("pad cannot lower the degree; use truncate")
        c = np.zeros(degree + 1)
        c[: self.degree + 1] = self.coeffs
        return Jet1(c)

    # -- composition and evaluation --------------------------------------

    def compose(self, inner: Jet1) -> Jet1:
        """Jet of ``self(inner(t))``; ``inner`` must vanish at 0.

        Horner-style accumulation in the jet ring: one truncated product per
        coefficient rather than building powers of ``inner`` separately.
        """
        self._check(inner)
        if inner.coeffs[0] != 0.0:
            raise ValueError("compose requires inner jet with zero constant term")
        d = self.degree
        acc = np.zeros(d + 1)
        acc[0] = self.coeffs[d]
        for i in range(d - 1, -1, -1):
            acc = np.convolve(acc, inner.coeffs)[: d + 1]
            acc[0] += self.coeffs[i]
        return Jet1(acc)

    def eval(self, t):
        """Horner evaluation at a scalar or ndarray of points."""
        t = np.asarray(t, dtype=float)
        acc = np.full(t.shape, self.coeffs[self.degree])
        for i in range(self.degree - 1, -1, -1):
            acc = acc * t + self.coeffs[i]
        return acc if acc.shape else float(acc)

    def derivative(self) -> Jet1:
        if self.degree == 0:
            return Jet1.zero(0)
        return Jet1(self.coeffs[1:] * np.arange(1, self.degree + 1))

    def leading_index(self, rel_tol: float = 0.0, abs_tol: float = 0.0) -> int | None:
        """Smallest order whose coefficient exceeds both tolerances.

        The threshold is ``max(rel_tol * max|coeff|, abs_tol)``; the absolute
        part keeps pure rounding residue in an otherwise-zero jet from being
        mistaken for content.
        """
        scale = float(np.max(np.abs(self.coeffs)))
        if scale == 0.0:
            return None
        thresh = max(rel_tol * scale, abs_tol)
        idx = np.nonzero(np.abs(self.coeffs) > thresh)[0]
        return int(idx[0]) if idx.size else None


@dataclass(frozen=True)
class Jet2:
    """Bivariate jet: triangular coefficient table for ``x^i y^j``."""

    coeffs: np.ndarray
    degree: int = field(init=False)

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("Jet2 coefficients must be a square 2-d array")
        d = arr.shape[0] - 1
        mask = np.add.outer(np.arange(d + 1), np.arange(d + 1)) > d
        if np.any(arr[mask] != 0.0):
            raise ValueError("Jet2 table has nonzero entries above the degree")
        object.__setattr__(self, "coeffs", _freeze(arr))
        object.__setattr__(self, "degree", d)

    # -- constructors ---------------------------------------------------

    @staticmethod
    def zero(degree: int) -> Jet2:
        return Jet2(np.zeros((degree + 1, degree + 1)))

    @staticmethod
    def variable_x(degree: int) -> Jet2:
        c = np.zeros((degree + 1, degree + 1))
        if degree >= 1:
            c[1, 0] = 1.0
        return Jet2(c)

    @staticmethod
    def variable_y(degree: int) -> Jet2:
        c = np.zeros((degree + 1, degree + 1))
        if degree >= 1:
            c[0, 1] = 1.0
        return Jet2(c)

    @staticmethod
    def from_monomials(entries, degree: int) -> Jet2:
        """Build from an iterable of ``(i, j, value)`` triples."""
        c = np.zeros((degree + 1, degree + 1))
        for i, j, v in entries:
            if i < 0 or j < 0 or i + j > degree:
                raise ValueError(f"monomial x^{i} y^{j} outside degree {degree}")
            c[i, j] += float(v)
        return Jet2(c)

    def monomials(self, drop_zero: bool = True) -> list[tuple[int, int, float]]:
        """Triples in graded lexicographic order (total degree, then j)."""
        out = []
        for total in range(self.degree + 1):
            for j in range(total + 1):
                i = total - j
                v = float(self.coeffs[i, j])
                if v != 0.0 or not drop_zero:
                    out.append((i, j, v))
        return out

    # -- ring operations ------------------------------------------------

    def _check(self, other: Jet2) -> None:
        if self.degree != other.degree:
            raise ValueError(
                f"degree mismatch: {self.degree} vs {other.degree}"
            )

    def __add__(self, other: Jet2) -> Jet2:
        self._check(other)
        return Jet2(self.coeffs + other.coeffs)

    def __sub__(self, other: Jet2) -> Jet2:
        self._check(other)
        return Jet2(self.coeffs - other.coeffs)

    def __neg__(self) -> Jet2:
        return Jet2(-self.coeffs)

    def __mul__(self, other: Jet2 | float) -> Jet2:
        if not isinstance(other, Jet2):
            return Jet2(self.coeffs * float(other))
        self._check(other)
        d = self.degree
        out = np.zeros((d + 1, d + 1))
        a, b = self.coeffs, other.coeffs
        for i in range(d + 1):
            for j in range(d + 1 - i):
                v = a[i, j]
                if v != 0.0:
                    out[i:, j:] += v * b[: d + 1 - i, : d + 1 - j]
        # Re-truncate to total degree d.
        mask = np.add.outer(np.arange(d + 1), np.arange(d + 1)) > d
        out[mask] = 0.0
        return Jet2(out)

    __rmul__ = __mul__

    def truncate(self, degree: int) -> Jet2:
        if degree > self.degree:
            raise ValueError("truncate cannot raise the degree; use pad")
        c = self.coeffs[: degree + 1, : degree + 1].copy()
        mask = np.add.outer(np.arange(degree + 1), np.arange(degree + 1)) > degree
        c[mask] = 0.0
        return Jet2(c)

    def pad(self, degree: int) -> Jet2:
        if degree < self.degree:
            raise ValueError("pad cannot lower the degree; use truncate")
        c = np.zeros((degree + 1, degree + 1))
        c[: self.degree + 1, : self.degree + 1] = self.coeffs
        return Jet2(c)

    def order(self) -> int | None:
        """Total order of the lowest nonzero monomial, or None if zero."""
        best = None
        nz = np.argwhere(self.coeffs != 0.0)
        if nz.size:
            best = int(np.min(nz.sum(axis=1)))
        return best

    # -- composition and evaluation --------------------------------------

    def compose_jet1(self, inner_x: Jet1, inner_y: Jet1) -> Jet1:
        """Jet of ``t -> self(inner_x(t), inner_y(t))``.

        Both inner jets must vanish at 0 and share the working degree; the
        result lives at that degree.
        """
        if inner_x.degree != inner_y.degree:
            raise ValueError("inner jets must share a degree")
        if inner_x.coeffs[0] != 0.0 or inner_y.coeffs[0] != 0.0:
            raise ValueError("compose requires inner jets with zero constant term")
        d = inner_x.degree
        # Horner in x with rows pre-collapsed by Horner in y.
        acc = np.zeros(d + 1)
        for i in range(self.degree, -1, -1):
            row = np.zeros(d + 1)
            for j in range(self.degree - i, -1, -1):
                row = np.convolve(row, inner_y.coeffs)[: d + 1]
                row[0] += self.coeffs[i, j]
            acc = np.convolve(acc, inner_x.coeffs)[: d + 1] + row
        return Jet1(acc)

    def compose_jet2(self, inner_x: Jet2, inner_y: Jet2) -> Jet2:
        """Jet of ``(x, y) -> self(inner_x(x, y), inner_y(x, y))``."""
        inner_x._check(inner_y)
        if inner_x.coeffs[0, 0] != 0.0 or inner_y.coeffs[0, 0] != 0.0:
            raise ValueError("compose requires inner jets with zero constant term")
        d = inner_x.degree
        zero = Jet2.zero(d)
        acc = zero
        for i in range(self.degree, -1, -1):
            row = zero
            for j in range(self.degree - i, -1, -1):
                row = row * inner_y
                c = row.coeffs.copy()
                c[0, 0] += self.coeffs[i, j]
                row = Jet2(c)
            acc = acc * inner_x + row
        return acc

    def eval(self, x, y):
        """Evaluate at scalars or ndarrays (broadcast together)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        acc = np.zeros(np.broadcast(x, y).shape)
        for i in range(self.degree, -1, -1):
            row = np.zeros_like(acc)
            for j in range(self.degree - i, -1, -1):
                row = row * y + self.coeffs[i, j]
            acc = acc * x + row
        return acc if acc.shape else float(acc)

    def partial_x(self) -> Jet2:
        d = self.degree
        out = np.zeros((d + 1, d + 1))
        if d >= 1:
            out[:d, :] = self.coeffs[1:, :] * np.arange(1, d + 1)[:, None]
        return Jet2(out)

    def partial_y(self) -> Jet2:
        d = self.degree
        out = np.zeros((d + 1, d + 1))
        if d >= 1:
            out[:, :d] = self.coeffs[:, 1:] * np.arange(1, d + 1)[None, :]
        return Jet2(out)


def invert_in_y(phi: tuple[Jet2, Jet2]) -> tuple[Jet2, Jet2]:
    """Invert a change of variables ``phi = (x, y + h(x, y))`` on jets.

    ``h`` must have total order >= 2.  The inverse second slot is found by
    the fixed-point iteration ``w <- y - h(x, w)``, which gains at least one
    correct order per pass and therefore converges within ``degree`` passes.
    Returns the pair ``(x, w)`` with ``phi o (x, w) = id`` through the degree.
    """
    phi_x, phi_y = phi
    phi_x._check(phi_y)
    d = phi_x.degree
    x = Jet2.variable_x(d)
    y = Jet2.variable_y(d)
    if np.any(phi_x.coeffs != x.coeffs):
        raise ValueError("first slot must be the identity in x")
    h = phi_y - y
    h_order = h.order()
    if h_order is not None and h_order < 2:
        raise ValueError("perturbation h must have order >= 2")
    w = y
    for _ in range(d):
        w_new = y - h.compose_jet2(x, w)
        if np.array_equal(w_new.coeffs, w.coeffs):
            break
        w = w_new
    return (x, w)
