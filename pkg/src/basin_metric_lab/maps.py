"""Rational maps on the Riemann sphere via two coordinate charts.

Chart Z carries the plane coordinate z, chart W the coordinate w = 1/z, so
(0, 0) in chart W is the point at infinity. Every point has a representation
with |coordinate| <= 1 (its preferred chart); the charts overlap on
2/3 <= |z| <= 3/2. All distances are chordal (the round metric with local
scale 2 / (1 + |z|^2), total diameter 2).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import roots as rt
from .errors import CommonFactor, DegreeTooLow, NotFixed

FIXED_RESIDUAL_TOL = 1e-9
CLASS_TOL = 1e-9
PREIMAGE_RESIDUAL_TOL = 1e-8
CHART_EXTENT = 1.5


class Chart(Enum):
    Z = "Z"
    W = "W"


@dataclass(frozen=True)
class ComplexPoint:
    re: float
    im: float
    chart: Chart = Chart.Z

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)

    @property
    def is_infinity(self) -> bool:
        return self.chart is Chart.W and self.re == 0.0 and self.im == 0.0

    def other_chart(self) -> "ComplexPoint":
        v = self.value
        if v == 0:
            raise ZeroDivisionError("0 and infinity have no finite other-chart coordinate")
        inv = 1.0 / v
        other = Chart.W if self.chart is Chart.Z else Chart.Z
        return ComplexPoint(inv.real, inv.imag, other)

    def preferred(self) -> "ComplexPoint":
        """Representation with |coordinate| <= 1 (ties keep chart Z)."""
        if abs(self.value) <= 1.0:
            if self.chart is Chart.Z or abs(self.value) < 1.0:
                return self
        return self.other_chart()

    def as_plane(self) -> complex:
        """Plane coordinate z; infinity maps to complex inf."""
        if self.chart is Chart.Z:
            return self.value
        if self.is_infinity:
            return complex(np.inf, 0.0)
        return 1.0 / self.value

    def chordal(self, other: "ComplexPoint") -> float:
        return float(chordal_mixed(
            np.array([self.value]), np.array([self.chart is Chart.W]),
            np.array([other.value]), np.array([other.chart is Chart.W]))[0])

    @staticmethod
    def infinity() -> "ComplexPoint":
        return ComplexPoint(0.0, 0.0, Chart.W)

    @staticmethod
    def from_plane(z: complex) -> "ComplexPoint":
        z = complex(z)
        if not np.isfinite(z.real) or not np.isfinite(z.imag):
            return ComplexPoint.infinity()
        if abs(z) <= 1.0:
            return ComplexPoint(z.real, z.imag, Chart.Z)
        inv = 1.0 / z
        return ComplexPoint(inv.real, inv.imag, Chart.W)


class FixedClass(Enum):
    SUPERATTRACTING = "superattracting"
    ATTRACTING = "attracting"
    INDIFFERENT = "indifferent"
    REPELLING = "repelling"


@dataclass(frozen=True)
class FixedPointInfo:
    location: ComplexPoint
    multiplier: complex
    klass: FixedClass


def classify_multiplier(mult: complex) -> FixedClass:
    m = abs(mult)
    if m <= CLASS_TOL:
        return FixedClass.SUPERATTRACTING
    if abs(m - 1.0) <= CLASS_TOL:
        return FixedClass.INDIFFERENT
    if m < 1.0:
        return FixedClass.ATTRACTING
    return FixedClass.REPELLING


def embed_sphere(vals: np.ndarray, is_w: np.ndarray) -> np.ndarray:
    """Stereographic embedding into R^3 (unit sphere): chordal == Euclidean.

    Chart W points land antipodally flipped in the third coordinate, which is
    exactly the z <-> 1/z sphere symmetry (conjugation included via -im).
    """
    vals = np.asarray(vals, dtype=np.complex128)
    is_w = np.asarray(is_w, dtype=bool)
    r2 = vals.real**2 + vals.imag**2
    denom = 1.0 + r2
    x = 2.0 * vals.real / denom
    y = 2.0 * vals.imag / denom
    zc = (r2 - 1.0) / denom
    # w = 1/z: (x, y, z) -> (x, -y, -z)
    y = np.where(is_w, -y, y)
    zc = np.where(is_w, -zc, zc)
    return np.stack([x, y, zc], axis=-1)


def chordal_same_chart(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Chordal distance for coordinates in one common chart."""
    return 2.0 * np.abs(a - b) / np.sqrt((1.0 + np.abs(a) ** 2) * (1.0 + np.abs(b) ** 2))


def chordal_mixed(a_val, a_is_w, b_val, b_is_w) -> np.ndarray:
    pa = embed_sphere(np.asarray(a_val), np.asarray(a_is_w))
    pb = embed_sphere(np.asarray(b_val), np.asarray(b_is_w))
    return np.sqrt(((pa - pb) ** 2).sum(axis=-1))


@dataclass(frozen=True)
class RationalMap:
    """R = P/Q with coprime ascending-coefficient polynomials."""

    num_coeffs: tuple
    den_coeffs: tuple
    degree: int

    @property
    def num(self) -> np.ndarray:
        return np.asarray(self.num_coeffs, dtype=np.complex128)

    @property
    def den(self) -> np.ndarray:
        return np.asarray(self.den_coeffs, dtype=np.complex128)

    @property
    def is_polynomial(self) -> bool:
        return len(self.den_coeffs) == 1

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """(P, Q) zero-padded to length degree + 1."""
        n = self.degree + 1
        p = np.zeros(n, dtype=np.complex128)
        q = np.zeros(n, dtype=np.complex128)
        p[: len(self.num_coeffs)] = self.num
        q[: len(self.den_coeffs)] = self.den
        return p, q

    def reversed_pair(self) -> tuple[np.ndarray, np.ndarray]:
        """Chart-W numerator/denominator: R(1/w) = revP(w) / revQ(w)."""
        p, q = self.padded()
        return p[::-1].copy(), q[::-1].copy()


def parse_map(num_coeffs, den_coeffs) -> RationalMap:
    """Validate and normalize a rational map given by coefficient lists.

    Raises CommonFactor when P vanishes at a root of Q (ill-posed quotient).
    Degree-1 maps parse but are rejected by dynamical operations.
    """
    p = rt.trim_coeffs(num_coeffs)
    q = rt.trim_coeffs(den_coeffs)
    degree = max(len(p), len(q)) - 1
    scale = float(max(np.max(np.abs(p)), np.max(np.abs(q))))
    if len(q) > 1:
        for root, _mult in rt.solve_poly(q):
            if abs(rt.polyval(p, root)) <= 1e-9 * scale:
                raise CommonFactor(
                    f"numerator nearly vanishes at denominator root {root:.6g}"
                )
    return RationalMap(tuple(p.tolist()), tuple(q.tolist()), degree)


def _require_dynamical(rmap: RationalMap) -> None:
    if rmap.degree < 2:
        raise DegreeTooLow(f"degree {rmap.degree} < 2")


def _sphere_sort_key(point: ComplexPoint):
    """Finite points by plane (re, im); infinity sorts last."""
    if point.is_infinity:
        return (1, 0.0, 0.0)
    z = point.as_plane()
    return (0, z.real, z.imag)


def evaluate_array(rmap: RationalMap, vals: np.ndarray, is_w: np.ndarray):
    """Apply the map to point arrays (vals, is_w); returns normalized pairs.

    Output coordinates always have modulus <= 1 (best-conditioned chart), so
    iteration never overflows. Total on the sphere: 0/0 cannot occur for
    coprime P, Q.
    """
    vals = np.asarray(vals, dtype=np.complex128)
    is_w = np.asarray(is_w, dtype=bool)
    p, q = rmap.padded()
    rp, rq = rmap.reversed_pair()

    num = np.empty_like(vals)
    den = np.empty_like(vals)
    zmask = ~is_w
    if zmask.any():
        zv = vals[zmask]
        num[zmask] = rt.polyval(p, zv)
        den[zmask] = rt.polyval(q, zv)
    if is_w.any():
        wv = vals[is_w]
        num[is_w] = rt.polyval(rp, wv)
        den[is_w] = rt.polyval(rq, wv)

    # num/den is the image's z-coordinate; den/num its w-coordinate.
    to_w = np.abs(num) > np.abs(den)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(to_w, den / num, num / den)
    out = np.where(np.isnan(out), 0.0, out)  # exact-infinity inputs
    return out, to_w


def evaluate(rmap: RationalMap, point: ComplexPoint) -> ComplexPoint:
    """R(point), returned in the chart where its coordinate has modulus <= 1."""
    out, to_w = evaluate_array(
        rmap, np.array([point.value]), np.array([point.chart is Chart.W])
    )
    v = complex(out[0])
    return ComplexPoint(v.real, v.imag, Chart.W if bool(to_w[0]) else Chart.Z)


def _derivative_num_den(p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(P'Q - PQ', Q^2) as coefficient arrays."""
    dp = rt.polyder(p)
    dq = rt.polyder(q)
    num = np.polynomial.polynomial.polymul(dp, q) - np.polynomial.polynomial.polymul(p, dq)
    den = np.polynomial.polynomial.polymul(q, q)
    return np.asarray(num, dtype=np.complex128), np.asarray(den, dtype=np.complex128)


def derivative_at(rmap: RationalMap, point: ComplexPoint) -> complex:
    """Chart derivative of the map written in (point chart) -> (image chart)."""
    img = evaluate(rmap, point)
    if point.chart is Chart.Z:
        fnum, fden = rmap.num, rmap.den
    else:
        fnum, fden = rmap.reversed_pair()
    if img.chart is Chart.W:
        fnum, fden = fden, fnum  # image coordinate is den/num
    dnum, dden = _derivative_num_den(fnum, fden)
    x = point.value
    return complex(rt.polyval(dnum, x) / rt.polyval(dden, x))


def multiplier(rmap: RationalMap, fixed: ComplexPoint) -> complex:
    """Derivative at a fixed point, computed in the point's own chart."""
    img = evaluate(rmap, fixed)
    if fixed.chordal(img) > FIXED_RESIDUAL_TOL:
        raise NotFixed(
            f"residual {fixed.chordal(img):.3e} exceeds {FIXED_RESIDUAL_TOL:g}"
        )
    return derivative_at(rmap, fixed)


def poly_roots(coeffs) -> list[tuple[complex, int]]:
    """Public root-with-multiplicity solver (sorted by re, im)."""
    return rt.solve_poly(coeffs)


def fixed_points(rmap: RationalMap) -> list[FixedPointInfo]:
    """All fixed points on the sphere, classified by multiplier.

    Finite fixed points are roots of P(z) - z Q(z); infinity is fixed exactly
    when deg P > deg Q (then the multiplier is lim Q/P' scaling, i.e. the
    leading-coefficient ratio for deg P = deg Q + 1 and 0 beyond).
    """
    _require_dynamical(rmap)
    p, q = rmap.num, rmap.den
    shifted = np.concatenate([[0.0 + 0.0j], q])
    n = max(len(p), len(shifted))
    f = np.zeros(n, dtype=np.complex128)
    f[: len(p)] += p
    f[: len(shifted)] -= shifted
    infos = []
    if np.any(f != 0):
        for root, _mult in rt.solve_poly(f):
            loc = ComplexPoint.from_plane(root)
            mult = derivative_at(rmap, loc)
            infos.append(FixedPointInfo(loc, mult, classify_multiplier(mult)))
    deg_p, deg_q = len(p) - 1, len(q) - 1
    if deg_p > deg_q:
        if deg_p >= deg_q + 2:
            mult = 0.0 + 0.0j
        else:
            mult = complex(q[-1] / p[-1])
        infos.append(
            FixedPointInfo(ComplexPoint.infinity(), mult, classify_multiplier(mult))
        )
    infos.sort(key=lambda fp: _sphere_sort_key(fp.location))
    return infos


def critical_points(rmap: RationalMap) -> list[ComplexPoint]:
    """Zeros of P'Q - PQ' (covers poles of higher order) plus a critical infinity.

    Infinity is critical exactly when the sphere map has local degree >= 2
    there, detected on the leading coefficients.
    """
    _require_dynamical(rmap)
    p, q = rmap.padded()
    dnum, _ = _derivative_num_den(rmap.num, rmap.den)
    points = []
    nz = np.nonzero(dnum)[0]
    if nz.size > 0 and nz[-1] >= 1:
        for root, _mult in rt.solve_poly(dnum):
            points.append(ComplexPoint.from_plane(root))
    n = rmap.degree
    deg_p, deg_q = len(rmap.num_coeffs) - 1, len(rmap.den_coeffs) - 1
    if deg_p > deg_q:
        inf_critical = deg_p >= deg_q + 2
    else:
        # Image of infinity is finite: test U'(0) for U = revP/revQ.
        scale = float(max(np.max(np.abs(p)), np.max(np.abs(q))))
        inf_critical = abs(p[n - 1] * q[n] - p[n] * q[n - 1]) <= 1e-12 * scale**2
    if inf_critical:
        points.append(ComplexPoint.infinity())
    points.sort(key=_sphere_sort_key)
    return points


def _preimage_coeffs(rmap: RationalMap, target: ComplexPoint) -> np.ndarray:
    """Coefficients whose roots are the finite preimages (target's chart)."""
    p, q = rmap.padded()
    if target.chart is Chart.Z:
        return p - target.value * q
    return q - target.value * p


def preimages(rmap: RationalMap, target: ComplexPoint) -> list[tuple[ComplexPoint, int]]:
    """Solutions of R(x) = target with multiplicity, summing to the degree.

    A drop of k in the leading coefficients contributes infinity with
    multiplicity k. Targets given in chart W are solved as Q - w P = 0,
    keeping the system well conditioned near infinity.
    """
    coeffs = _preimage_coeffs(rmap, target)
    n = rmap.degree
    scale = float(np.max(np.abs(coeffs)))
    if scale == 0.0:
        raise ValueError("degenerate preimage equation (map not coprime?)")
    k = 0
    while k < n and abs(coeffs[n - k]) <= 1e-12 * scale:
        k += 1
    out: list[tuple[ComplexPoint, int]] = []
    finite = coeffs[: n - k + 1]
    if len(finite) > 1:
        solved = rt.solve_poly(finite)
        solved = _repolish_large_roots(finite, solved)
        for root, mult in solved:
            out.append((ComplexPoint.from_plane(root), mult))
    if k > 0:
        out.append((ComplexPoint.infinity(), k))
    out.sort(key=lambda pm: _sphere_sort_key(pm[0]))
    return out


def _repolish_large_roots(coeffs: np.ndarray, solved: list[tuple[complex, int]]):
    """Reanchor |x| > 1 roots on the reversed polynomial (root 1/x) for accuracy."""
    rev = np.asarray(coeffs, dtype=np.complex128)[::-1].copy()
    out = []
    for root, mult in solved:
        if abs(root) > 1.0 and rev[-1] != 0:
            inv = np.array([[1.0 / root]], dtype=np.complex128)
            polished = rt.newton_polish_batch(rev[None, :], inv)[0, 0]
            if polished != 0:
                root = complex(1.0 / polished)
        out.append((root, mult))
    return out
