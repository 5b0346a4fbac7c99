"""Rational quadratic differentials on the Riemann sphere.

A differential is ``N(z) / prod (z - p)^m  dz^2`` with the behaviour at infinity
read off from ``w = 1/z``, under which the coefficient becomes
``w^-4 * phi(1/w)``.  Numerator coefficients are stored highest degree first
(the ``numpy.polyval`` convention).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre

from .errors import SpectraError, ValidationError
from .surface import MarkedBorderedSurface

INF = "inf"


class NonSimpleZero(ValidationError):
    pass


class NotDoublePole(ValidationError):
    pass


class SheetAmbiguity(SpectraError):
    pass


@dataclass(frozen=True)
class ResidueDatum:
    pole: object
    r: complex
    residue: complex


@dataclass(frozen=True, eq=False)
class QuadraticDifferential:
    numerator: np.ndarray
    poles: tuple = ()            # ((position, order), ...) finite poles
    signing: tuple = ()          # ((pole key, +-1), ...) for double poles; key is position or "inf"
    strict: bool = True          # enforce the GMN conditions

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.numerator, dtype=complex)), "f")
        if num.size == 0:
            raise ValidationError("numerator must be a nonzero polynomial")
        object.__setattr__(self, "numerator", num)
        poles = tuple((complex(p), int(m)) for p, m in self.poles)
        if any(m < 1 for _, m in poles):
            raise ValidationError("pole orders must be positive")
        if len({p for p, _ in poles}) != len(poles):
            raise ValidationError("repeated pole position")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "signing", tuple((k if k == INF else complex(k), int(s))
                                                  for k, s in dict(self.signing).items()))
        self._validate()

    # -- evaluation ----------------------------------------------------------
    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        den = np.ones_like(z)
        for p, m in self.poles:
            den = den * (z - p) ** m
        return np.polyval(self.numerator, z) / den

    def log_derivative(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.polyval(np.polyder(self.numerator), z) / np.polyval(self.numerator, z)
        for p, m in self.poles:
            out = out - m / (z - p)
        return out

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        num = np.polyval(np.polyder(self.numerator), z)
        corr = np.zeros_like(z)
        den = np.ones_like(z)
        for p, m in self.poles:
            corr = corr + m / (z - p)
            den = den * (z - p) ** m
        return (num - np.polyval(self.numerator, z) * corr) / den

    # -- structure -------------------------------------------------------------
    @property
    def degree(self):
        return self.numerator.size - 1

    @property
    def order_at_infinity(self):
        """Pole order at infinity (negative for a zero, 0 for a regular point)."""
        return 4 + self.degree - sum(m for _, m in self.poles)

    @cached_property
    def zeros(self):
        if self.degree == 0:
            return np.zeros(0, dtype=complex)
        return np.roots(self.numerator)

    @cached_property
    def scale(self):
        pts = list(self.zeros) + [p for p, _ in self.poles]
        if len(pts) < 2:
            return 1.0
        pts = np.array(pts)
        return float(max(np.max(np.abs(pts[:, None] - pts[None, :])), 1e-3))

    def _validate(self):
        zs = self.zeros
        tol = 1e-8 * max(1.0, float(np.max(np.abs(zs))) if zs.size else 1.0)
        dn = np.polyder(self.numerator)
        for i, z in enumerate(zs):
            others = np.delete(zs, i)
            if (others.size and np.min(np.abs(others - z)) < 1e-6 * max(1.0, abs(z))) or \
                    abs(np.polyval(dn, z)) < tol * np.max(np.abs(self.numerator)):
                raise NonSimpleZero(f"zero near {z} is not simple")
            for p, _ in self.poles:
                if abs(z - p) < 1e-9 * max(1.0, abs(p)):
                    raise ValidationError("zero coincides with a pole")
        if not self.strict:
            return
        if self.order_at_infinity < -1:
            raise NonSimpleZero("zero at infinity is not simple")
        if not self.poles and self.order_at_infinity <= 0:
            raise ValidationError("differential needs at least one pole")
        if not self.finite_critical_points_count:
            raise ValidationError("differential needs a zero or a simple pole")
        for key, s in self.signing:
            if s not in (1, -1):
                raise ValidationError("signs must be +1 or -1")

    @property
    def finite_critical_points_count(self):
        n = len(self.zeros) + sum(1 for _, m in self.poles if m == 1)
        if self.order_at_infinity in (-1, 1):
            n += 1
        return n

    def critical_points(self):
        """(zeros, finite poles with orders, order at infinity)."""
        return self.zeros.copy(), list(self.poles), self.order_at_infinity

    def all_pole_orders(self):
        out = {p: m for p, m in self.poles}
        if self.order_at_infinity > 0:
            out[INF] = self.order_at_infinity
        return out

    def is_complete(self):
        return all(m >= 2 for m in self.all_pole_orders().values())

    def sign_of(self, key):
        return dict(self.signing).get(key if key == INF else complex(key), 1)

    # -- transformations ------------------------------------------------------
    def rotate(self, theta):
        return self.scaled(np.exp(-2j * theta))

    def scaled(self, c):
        return QuadraticDifferential(self.numerator * c, self.poles, self.signing, self.strict)

    def at_infinity(self):
        """The same differential in the chart w = 1/z."""
        num = self.numerator[::-1].copy()           # reversed polynomial N~(w)
        mi = self.order_at_infinity
        const = 1.0 + 0j
        poles = []
        for p, m in self.poles:
            if p == 0:
                continue                             # absorbed into the order at w = 0
            const *= (-p) ** m
            poles.append((1 / p, m))
        if mi > 0:
            poles.append((0j, mi))
        elif mi < 0:
            num = np.concatenate([num, np.zeros(-mi, dtype=complex)])
        num = np.trim_zeros(num, "f") / const
        sig = {}
        for key, s in self.signing:
            if key == INF:
                sig[0j] = s
            elif key != 0:
                sig[1 / key] = s
        return QuadraticDifferential(num, tuple(poles), tuple(sig.items()), self.strict)

    # -- local data at poles -----------------------------------------------------
    def leading_coefficient(self, pole):
        """a0 with phi ~ a0 t^-m dt^2 in the local coordinate t (t = 1/z at infinity)."""
        if pole == INF:
            return complex(self.numerator[0])
        p = complex(pole)
        val = np.polyval(self.numerator, p)
        for q, mq in self.poles:
            if q != p:
                val = val / (p - q) ** mq
        return complex(val)

    def pole_order(self, pole):
        if pole == INF:
            return self.order_at_infinity
        return dict(self.poles).get(complex(pole), 0)

    def residue(self, pole, sign=None) -> ResidueDatum:
        if self.pole_order(pole) != 2:
            raise NotDoublePole(f"{pole} is not a double pole")
        r = self.leading_coefficient(pole)
        s = self.sign_of(pole) if sign is None else sign
        return ResidueDatum(pole, r, s * 4j * np.pi * np.sqrt(r))

    def asymptotic_directions(self, pole, anti=False):
        """Arguments (in the z-plane) of the m-2 horizontal directions at a pole of order m >= 3.

        At a finite pole these are directions of z - p, at infinity of z itself.
        With ``anti=True`` returns the directions where a0 t^(2-m) is real negative.
        """
        m = self.pole_order(pole)
        if m < 3:
            raise ValidationError("asymptotic directions need a pole of order >= 3")
        a0 = self.leading_coefficient(pole)
        shift = np.pi if anti else 0.0
        alpha = (np.angle(a0) + shift + 2 * np.pi * np.arange(m - 2)) / (m - 2)
        if pole == INF:
            alpha = -alpha
        return np.sort(np.mod(alpha, 2 * np.pi))

    def higher_order_poles(self):
        return [k for k, m in self.all_pole_orders().items() if m >= 3]

    def double_poles(self):
        return [k for k, m in self.all_pole_orders().items() if m == 2]

    def marked_bordered_surface(self) -> MarkedBorderedSurface:
        orders = self.all_pole_orders()
        marks = tuple(m - 2 for m in orders.values() if m > 2)
        punct = sum(1 for m in orders.values() if m == 2)
        return MarkedBorderedSurface(0, marks, punct)

    def degree_identity(self):
        zeros = len(self.zeros) + (1 if self.order_at_infinity == -1 else 0)
        return zeros - sum(self.all_pole_orders().values())

    def finite_critical_points(self):
        return np.concatenate([self.zeros, np.array([p for p, _ in self.poles], dtype=complex)])

    def to_dict(self):
        return {"numerator": [[float(c.real), float(c.imag)] for c in self.numerator],
                "poles": [{"z": [p.real, p.imag], "order": m, "sign": self.sign_of(p)}
                          for p, m in self.poles],
                **({"sign_at_infinity": self.sign_of(INF)} if self.order_at_infinity == 2 else {})}

    @classmethod
    def from_dict(cls, d):
        try:
            num = [complex(*c) if isinstance(c, (list, tuple)) else complex(c) for c in d["numerator"]]
            poles, sig = [], {}
            for p in d.get("poles", []):
                z = complex(*p["z"]) if isinstance(p["z"], (list, tuple)) else complex(p["z"])
                poles.append((z, int(p["order"])))
                if "sign" in p:
                    sig[z] = int(p["sign"])
            if "sign_at_infinity" in d:
                sig[INF] = int(d["sign_at_infinity"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed differential: {exc}") from exc
        return cls(np.array(num), tuple(poles), tuple(sig.items()))


# -- periods ----------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodPath:
    """Polyline between finite critical points.

    ``sheet`` selects the branch of the square root at the midpoint of the first
    segment: either +1/-1 (times the principal root) or a complex reference value
    whose nearest root is taken.
    """
    waypoints: tuple
    sheet: complex = 1

    def reversed(self):
        return PeriodPath(tuple(self.waypoints[::-1]), self.sheet)


_GL_NODES, _GL_WEIGHTS = legendre.leggauss(20)
_GL_NODES_LO, _GL_WEIGHTS_LO = legendre.leggauss(10)


def _pick(root, ref):
    return np.where((root * np.conj(ref)).real >= 0, root, -root)


def _segment_integral(f_branch, a, b, ref, tol, depth=0):
    """Adaptive Gauss-Legendre for an integrand whose branch is fixed by continuity.

    ``f_branch(x, ref)`` returns (values, new reference) on nodes x in [a, b].
    """
    mid, half = (a + b) / 2, (b - a) / 2
    xs = mid + half * _GL_NODES
    vals, ref_end = f_branch(xs, ref)
    hi = half * np.sum(_GL_WEIGHTS * vals)
    xl = mid + half * _GL_NODES_LO
    vl, _ = f_branch(xl, ref)
    lo = half * np.sum(_GL_WEIGHTS_LO * vl)
    if abs(hi - lo) <= tol or depth > 40:
        return hi, ref_end
    left, ref_mid = _segment_integral(f_branch, a, mid, ref, tol / 2, depth + 1)
    right, ref_end = _segment_integral(f_branch, mid, b, ref_mid, tol / 2, depth + 1)
    return left + right, ref_end


def _tracked_sqrt(phi, zs, ref):
    # continue sqrt(phi) along ordered sample points starting from reference ref
    out = np.sqrt(phi(zs))
    cur = ref
    for i in range(out.size):
        out[i] = _pick(out[i], cur)
        cur = out[i]
    return out, cur


def period(phi: QuadraticDifferential, path: PeriodPath, tol=1e-13, clearance=None) -> complex:
    """2 * integral of sqrt(phi) along the polyline with a continuously tracked sheet."""
    pts = [complex(p) for p in path.waypoints]
    if len(pts) < 2:
        raise ValidationError("path needs at least two waypoints")
    crit = phi.finite_critical_points()
    zeros = phi.zeros
    clearance = 1e-3 * phi.scale if clearance is None else clearance

    def is_zero(z):
        return zeros.size and np.min(np.abs(zeros - z)) < 1e-12 * max(1.0, abs(z))

    for i, (a, b) in enumerate(zip(pts[:-1], pts[1:])):
        for c in crit:
            d = _dist_point_segment(c, a, b)
            near_end = (i == 0 and abs(c - a) < 1e-12 * max(1, abs(a))) or \
                       (i == len(pts) - 2 and abs(c - b) < 1e-12 * max(1, abs(b)))
            if d < clearance and not (near_end and is_zero(c)):
                raise SheetAmbiguity(f"path passes within {d:.3g} of critical point {c}")

    z_ref = (pts[0] + pts[1]) / 2
    root = np.sqrt(complex(phi(z_ref)))
    ref0 = root * path.sheet if path.sheet in (1, -1) else _pick(root, complex(path.sheet))
    # propagate the reference back to the first waypoint region
    ref = _walk_reference(phi, z_ref, pts[0] if not is_zero(pts[0]) else
                          pts[0] + 0.05 * (pts[1] - pts[0]), ref0)
    total = 0j
    nseg = len(pts) - 1
    for i, (a, b) in enumerate(zip(pts[:-1], pts[1:])):
        start_zero = i == 0 and is_zero(a)
        end_zero = i == nseg - 1 and is_zero(b)
        lo_t, hi_t = (0.05 if start_zero else 0.0), (0.95 if end_zero else 1.0)
        if start_zero:
            val, ref = _endpoint_piece(phi, a, b, ref, tol)
            total += val
        d = b - a

        def fb(ts, r, a=a, d=d):
            v, r2 = _tracked_sqrt(phi, a + d * ts, r)
            return v * d, r2

        val, ref = _segment_integral(fb, lo_t, hi_t, ref, tol)
        total += val
        if end_zero:
            val, ref = _endpoint_piece(phi, b, a, ref, tol)
            total -= val
    return 2 * total


def _walk_reference(phi, z_from, z_to, ref, steps=64):
    zs = z_from + (z_to - z_from) * np.linspace(0, 1, steps)
    _, cur = _tracked_sqrt(phi, zs, ref)
    return cur


def _endpoint_piece(phi, z0, other, ref, tol):
    """Integral of sqrt(phi) from the zero z0 toward ``other`` over the first 5%.

    Uses z = z0 + d s^2 which makes the integrand analytic at s = 0.  ``ref`` is the
    branch value near the far end of the piece; returns (integral, branch near the
    far end).
    """
    d = other - z0
    smax = np.sqrt(0.05)
    # g(s) = sqrt(phi(z0 + d s^2)) / s is analytic and nonzero near s = 0
    z_end = z0 + d * 0.05
    g_ref = _pick(np.sqrt(complex(phi(z_end))), ref) / smax

    def fb(ss, r):
        ss = np.asarray(ss)
        order = np.argsort(-ss)            # walk from the far end toward the zero
        gv = np.sqrt(phi(z0 + d * ss ** 2)) / ss
        cur = r
        out = np.empty_like(gv)
        for i in order:
            out[i] = _pick(gv[i], cur)
            cur = out[i]
        return out * ss * 2 * ss * d, r

    val, _ = _segment_integral(fb, 0.0, smax, g_ref, tol)
    return val, g_ref * smax


def _dist_point_segment(c, a, b):
    d = b - a
    if d == 0:
        return abs(c - a)
    t = np.clip(((c - a) * np.conj(d)).real / abs(d) ** 2, 0, 1)
    return abs(c - (a + t * d))


def straight_period(phi, z1, z2, sheet=1):
    return period(phi, PeriodPath((z1, z2), sheet))


def _match_roots(old, new):
    # nearest-neighbour assignment; steps are small enough for this to be unambiguous
    out = np.empty_like(old)
    free = list(range(new.size))
    for i, z in enumerate(old):
        j = min(free, key=lambda k: abs(new[k] - z))
        out[i] = new[j]
        free.remove(j)
    return out


def continue_periods(phi_from: QuadraticDifferential, phi_to: QuadraticDifferential, paths,
                     steps=200):
    """Carry period paths along the straight-line deformation of the numerator.

    Finite poles must agree.  Each step moves every waypoint by the polynomial
    displacement field interpolating the zero motion (and fixing the poles), so a
    path ending at zeros keeps ending at the continued zeros and its homotopy class
    is preserved.  Returns (periods under phi_to, continued PeriodPaths).
    """
    if tuple(phi_from.poles) != tuple(phi_to.poles):
        raise ValidationError("continuation needs identical finite poles")
    n = max(phi_from.numerator.size, phi_to.numerator.size)
    a = np.pad(phi_from.numerator, (n - phi_from.numerator.size, 0))
    b = np.pad(phi_to.numerator, (n - phi_to.numerator.size, 0))
    if a[0] == 0 or b[0] == 0:
        raise ValidationError("leading coefficient must stay fixed in degree")
    poles = np.array([p for p, _ in phi_from.poles], dtype=complex)
    cur = phi_from
    zs = cur.zeros
    paths = [PeriodPath(tuple(complex(w) for w in p.waypoints), p.sheet) for p in paths]
    refs = []
    for p in paths:
        mid = (p.waypoints[0] + p.waypoints[1]) / 2
        root = np.sqrt(complex(cur(mid)))
        refs.append(root * p.sheet if p.sheet in (1, -1) else _pick(root, complex(p.sheet)))
    for s in np.linspace(0, 1, steps + 1)[1:]:
        nxt = QuadraticDifferential((1 - s) * a + s * b, phi_from.poles, phi_from.signing,
                                    phi_from.strict)
        zn = _match_roots(zs, nxt.zeros)
        nodes = np.concatenate([zs, poles])
        shift = np.concatenate([zn - zs, np.zeros(poles.size)])
        new_paths, new_refs = [], []
        for p, r in zip(paths, refs):
            w = np.array(p.waypoints)
            disp = np.zeros_like(w)
            for j in range(nodes.size):
                basis = np.ones_like(w)
                for k in range(nodes.size):
                    if k != j:
                        basis = basis * (w - nodes[k]) / (nodes[j] - nodes[k])
                disp = disp + shift[j] * basis
            w = w + disp
            # snap endpoints that sat on zeros onto the continued zeros exactly
            for e in (0, -1):
                d = np.abs(zs - p.waypoints[e])
                if d.min() < 1e-12 * max(1.0, abs(p.waypoints[e])):
                    w[e] = zn[int(np.argmin(d))]
            mid = (w[0] + w[1]) / 2
            r = _pick(np.sqrt(complex(nxt(mid))), r)
            new_paths.append(PeriodPath(tuple(w), r))
            new_refs.append(r)
        paths, refs, cur, zs = new_paths, new_refs, nxt, zn
    return np.array([period(cur, p) for p in paths]), paths
