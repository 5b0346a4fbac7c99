"""BPS structures, DT invariants, ray diagrams, the twisted torus and wall-crossing maps.

Classes are integer coordinate tuples in a fixed basis e_1..e_n; the skew form is an
integer matrix with <e_i, e_j> = skew[i, j].  Wall-crossing maps act on points of the
twisted torus given by their values on the basis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

import numpy as np

from .errors import ActiveBoundary, ConflictingFlags, PoleOfMap, ValidationError

POLE_TOL = 1e-14


def _vec(g):
    return tuple(int(c) for c in g)


def _neg(g):
    return tuple(-c for c in g)


def _content(g):
    d = 0
    for c in g:
        d = gcd(d, abs(int(c)))
    return d


def sup_norm(g):
    return max((abs(int(c)) for c in g), default=0)


@dataclass(frozen=True)
class BPSStructure:
    skew: np.ndarray
    central_charge: np.ndarray
    omega: dict = field(default_factory=dict)

    def __post_init__(self):
        B = np.asarray(self.skew, dtype=int)
        if B.ndim != 2 or B.shape[0] != B.shape[1] or (B != -B.T).any():
            raise ValidationError("skew form must be an antisymmetric integer matrix")
        Z = np.asarray(self.central_charge, dtype=complex)
        if Z.shape != (B.shape[0],):
            raise ValidationError("central charge needs one value per basis vector")
        om = {}
        for g, v in dict(self.omega).items():
            g = _vec(g)
            if len(g) != B.shape[0]:
                raise ValidationError(f"class {g} has the wrong rank")
            if v == 0:
                continue
            if not any(g):
                raise ValidationError("the zero class cannot be active")
            other = om.get(_neg(g))
            if other is not None and other != v:
                raise ValidationError(f"omega is not symmetric at {g}")
            om[g] = v
            om[_neg(g)] = v
        object.__setattr__(self, "skew", B)
        object.__setattr__(self, "central_charge", Z)
        object.__setattr__(self, "omega", om)
        for g in om:
            if abs(self.Z(g)) == 0:
                raise ValidationError(f"active class {g} has vanishing central charge")

    @property
    def rank(self):
        return self.skew.shape[0]

    def pair(self, a, b):
        return int(np.asarray(a, dtype=int) @ self.skew @ np.asarray(b, dtype=int))

    def Z(self, g):
        return complex(np.dot(np.asarray(g, dtype=float), self.central_charge))

    def Omega(self, g):
        return self.omega.get(_vec(g), 0)

    def active(self):
        return sorted(self.omega)

    def support_constant(self):
        """Largest C with |Z(g)| >= C ||g|| on the active classes (inf if none)."""
        vals = [abs(self.Z(g)) / sup_norm(g) for g in self.omega]
        return min(vals) if vals else float("inf")

    def is_convergent(self, R=1.0):
        return bool(np.isfinite(sum(abs(float(v)) * np.exp(-R * abs(self.Z(g)))
                                    for g, v in self.omega.items())))

    def to_dict(self):
        return {"rank": self.rank, "skew": self.skew.tolist(),
                "Z": [[z.real, z.imag] for z in self.central_charge],
                "omega": [{"class": list(g), "value": str(v)} for g, v in sorted(self.omega.items())],
                "support_constant": self.support_constant()}

    @classmethod
    def from_dict(cls, d):
        try:
            Z = [complex(*z) for z in d["Z"]]
            om = {tuple(e["class"]): Fraction(e["value"]) for e in d.get("omega", [])}
            om = {g: (int(v) if v.denominator == 1 else v) for g, v in om.items()}
            return cls(np.array(d["skew"]), np.array(Z), om)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed BPS structure: {exc}") from exc


def from_differential(basis, table, require_generic=True) -> BPSStructure:
    """Lattice, central charge and Omega of a generic differential from foliation output."""
    from .foliation import bps_invariants
    om = bps_invariants(table, require_generic=require_generic)
    return BPSStructure(basis.skew, basis.periods, om)


# -- DT invariants -------------------------------------------------------------------

def _mobius(m):
    res, k, p = 1, m, 2
    while p * p <= k:
        if k % p == 0:
            k //= p
            if k % p == 0:
                return 0
            res = -res
        p += 1
    return -res if k > 1 else res


def dt_from_bps(omega: dict, max_multiple=20) -> dict:
    """DT(g) = sum over g = m a of Omega(a) / m^2, in exact rationals.

    Along each primitive direction p the result covers k p for k up to
    max(max_multiple, largest multiple carrying Omega).
    """
    top = max([max_multiple] + [_content(g) for g in omega])
    out = {}
    for a, v in omega.items():
        a = _vec(a)
        j = _content(a)
        for m in range(1, top // j + 1):
            g = tuple(m * c for c in a)
            out[g] = out.get(g, Fraction(0)) + Fraction(v) / (m * m)
    return {g: v for g, v in out.items() if v != 0}


def bps_from_dt(dt: dict, max_divisor=None) -> dict:
    """Inverse via Moebius: Omega(g) = sum over g = m a of mu(m) DT(a) / m^2."""
    out = {}
    for g in dt:
        g = _vec(g)
        c = _content(g)
        tot = Fraction(0)
        for m in range(1, (c if max_divisor is None else min(c, max_divisor)) + 1):
            if c % m:
                continue
            a = tuple(x // m for x in g)
            tot += Fraction(_mobius(m)) * Fraction(dt.get(a, 0)) / (m * m)
        if tot != 0:
            out[g] = tot
    return out


# -- ray diagram -----------------------------------------------------------------------

@dataclass
class Ray:
    phase: float                 # arg / pi in [0, 2)
    classes: list
    height: float


@dataclass
class RayDiagram:
    rays: list
    h_max: float

    def height(self, phase, tol=1e-9):
        for r in self.rays:
            if _phase_dist(r.phase, phase) < tol:
                return r.height
        return float("inf")

    def phases(self):
        return [r.phase for r in self.rays]

    def is_active(self, phase, tol=1e-9):
        return np.isfinite(self.height(phase, tol))

    def to_dict(self):
        return {"h_max": self.h_max,
                "rays": [{"phase": r.phase, "height": r.height,
                          "classes": [list(g) for g in r.classes]} for r in self.rays]}


def _phase_dist(a, b):
    d = (a - b) % 2.0
    return min(d, 2.0 - d)


def _ray_phase(z):
    return float(np.angle(z) / np.pi % 2.0)


def ray_diagram(bps: BPSStructure, h_max=float("inf"), tol=1e-9) -> RayDiagram:
    groups = []
    for g in bps.active():
        z = bps.Z(g)
        if abs(z) >= h_max:
            continue
        ph = _ray_phase(z)
        for grp in groups:
            if _phase_dist(grp[0], ph) < tol:
                grp[1].append(g)
                break
        else:
            groups.append([ph, [g]])
    rays = [Ray(ph, sorted(cls), min(abs(bps.Z(g)) for g in cls)) for ph, cls in groups]
    # clockwise starting just counterclockwise of the positive real axis
    rays.sort(key=lambda r: (-r.phase) % 2.0 if r.phase > 1e-12 else 0.0)
    return RayDiagram(rays, h_max)


# -- twisted torus ------------------------------------------------------------------------

def _refinement_sign(a, skew):
    a = np.asarray(a, dtype=int)
    s = int(np.sum(np.triu(np.outer(a, a) * skew, 1)))
    return -1 if s % 2 else 1


@dataclass(frozen=True)
class TwistedTorusPoint:
    values: np.ndarray
    skew: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if np.any(v == 0):
            raise ValidationError("torus coordinates must be nonzero")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "skew", np.asarray(self.skew, dtype=int))

    def __call__(self, g):
        a = np.asarray(g, dtype=int)
        if not a.any():
            return 1.0 + 0j
        return complex(_refinement_sign(a, self.skew) * np.prod(self.values ** a))


def character(values, g, skew):
    """x_g on arrays of basis values (last axis indexes the basis)."""
    a = np.asarray(g, dtype=int)
    return _refinement_sign(a, skew) * np.prod(np.asarray(values) ** a, axis=-1)


def xi_basepoint(bps: BPSStructure, non_closed=None, closed=()) -> TwistedTorusPoint:
    """Distinguished point: -1 on basis classes of non-closed saddles, +1 on closed ones."""
    n = bps.rank
    non_closed = set(range(n)) if non_closed is None else set(non_closed)
    closed = set(closed)
    both = non_closed & closed
    if both:
        raise ConflictingFlags(f"basis classes {sorted(both)} flagged both closed and non-closed")
    vals = np.array([-1.0 if j in non_closed else 1.0 for j in range(n)], dtype=complex)
    return TwistedTorusPoint(vals, bps.skew)


# -- wall-crossing automorphisms -------------------------------------------------------------

@dataclass(frozen=True)
class TorusMap:
    """Point evaluator acting on basis values of twisted-torus points."""
    rank: int
    factors: tuple = ()          # ((class, exponent vector over the basis), ...)
    skew: np.ndarray = None
    steps: tuple = ()            # composed maps, applied left to right

    def __call__(self, values):
        if isinstance(values, TwistedTorusPoint):
            return TwistedTorusPoint(self(values.values), values.skew)
        X = np.array(values, dtype=complex)
        if self.steps:
            for s in self.steps:
                X = s(X)
            return X
        out = X.copy()
        for g, expo in self.factors:
            base = 1 - character(X, g, self.skew)
            if np.any(np.abs(base) < POLE_TOL):
                raise PoleOfMap(f"x_{list(g)} equals 1")
            out = out * base[..., None] ** expo
        return out

    def then(self, other: "TorusMap") -> "TorusMap":
        """Apply self first, then other."""
        mine = self.steps if self.steps else (self,)
        theirs = other.steps if other.steps else (other,)
        return TorusMap(self.rank, skew=self.skew, steps=mine + theirs)


def identity(rank, skew=None):
    return TorusMap(rank, (), skew)


def ray_map(bps: BPSStructure, classes) -> TorusMap:
    """S(l) for a ray carrying the given classes: x_b -> x_b prod (1 - x_g)^{Omega(g) <b, g>}."""
    factors = []
    for g in classes:
        om = bps.Omega(g)
        if om == 0:
            continue
        if Fraction(om).denominator != 1:
            raise ValidationError("point evaluation needs integer Omega")
        expo = int(om) * (bps.skew @ np.asarray(g, dtype=int))     # <e_j, g>
        factors.append((_vec(g), expo))
    return TorusMap(bps.rank, tuple(factors), bps.skew)


def bps_automorphism(bps: BPSStructure, phase, tol=1e-9) -> TorusMap:
    """S(l) for the ray at unit phase ``phase`` (argument / pi)."""
    classes = [g for g in bps.active() if _phase_dist(_ray_phase(bps.Z(g)), phase) < tol]
    return ray_map(bps, classes)


def _in_sector(ph, lo, hi):
    # sector from lo counterclockwise to hi, both unit phases, width < 2
    width = (hi - lo) % 2.0
    return 0 < (ph - lo) % 2.0 < width


def sector_composition(bps: BPSStructure, sector, h_max=float("inf"), tol=1e-9) -> TorusMap:
    """S(sector) as the clockwise-ordered composition S(l_1) o ... o S(l_k).

    ``sector`` is (phase_minus, phase_plus) with the sector running counterclockwise
    from phase_minus to phase_plus; l_1 is the ray nearest phase_plus.
    """
    lo, hi = sector
    diag = ray_diagram(bps, h_max, tol)
    for b in (lo, hi):
        if diag.is_active(b, tol):
            raise ActiveBoundary(f"sector boundary at phase {b} is an active ray")
    rays = [r for r in diag.rays if _in_sector(r.phase, lo, hi)]
    # clockwise order inside the sector: decreasing offset from lo
    rays.sort(key=lambda r: -((r.phase - lo) % 2.0))
    m = identity(bps.rank, bps.skew)
    # S(l_1) o ... o S(l_k) applies S(l_k) first
    for r in reversed(rays):
        m = m.then(ray_map(bps, r.classes))
    return m


def rebase(bps: BPSStructure, M) -> BPSStructure:
    """The same structure in new coordinates, where a class with old coordinates a has
    new coordinates a @ M (M unimodular)."""
    M = np.asarray(M)
    Mi = np.linalg.inv(M)
    if abs(abs(np.linalg.det(M)) - 1) > 1e-9 or not np.allclose(M, np.round(M)):
        raise ValidationError("basis change must be an integer unimodular matrix")
    M = np.round(M).astype(int)
    skew = np.round(Mi @ bps.skew @ Mi.T).astype(int)
    Z = Mi @ bps.central_charge
    om = {tuple(int(c) for c in np.asarray(g) @ M): v for g, v in bps.omega.items()}
    return BPSStructure(skew, Z, om)


def compare_compositions(first: BPSStructure, second: BPSStructure, sector, n_points=100,
                         rng=None, h_max=float("inf")):
    """Largest relative discrepancy between the two sector compositions at random points.

    Both structures must share the lattice coordinates and skew form; the central
    charges may differ (they order the rays).
    """
    if (first.skew != second.skew).any():
        raise ValidationError("structures live on different lattices")
    rng = np.random.default_rng(rng)
    fa = sector_composition(first, sector, h_max)
    fb = sector_composition(second, sector, h_max)
    worst = 0.0
    for _ in range(n_points):
        x = random_torus_point(first, rng).values
        ya, yb = fa(x), fb(x)
        worst = max(worst, float(np.max(np.abs(ya - yb) / np.abs(ya))))
    return worst


def random_torus_point(bps, rng, lo=0.3, hi=3.0):
    mod = rng.uniform(lo, hi, size=bps.rank)
    arg = rng.uniform(-np.pi, np.pi, size=bps.rank)
    return TwistedTorusPoint(mod * np.exp(1j * arg), bps.skew)


def twisted_bracket_defect(f: TorusMap, skew, X, alpha, beta, h_rel=1e-4):
    """Relative failure of {x_a, x_b} = <a, b> x_a x_b after pulling back by f.

    The log-canonical bracket on basis values is {X_i, X_j} = skew[i, j] X_i X_j; the
    pulled-back functions are x_a o f and x_b o f.
    """
    from .cluster import _jacobian
    X = np.asarray(X, dtype=complex)
    skew = np.asarray(skew)

    def fa(Y):
        return np.array([character(f(Y), alpha, skew), character(f(Y), beta, skew)])

    J = _jacobian(fa, X, h_rel)
    P = skew * np.outer(X, X)
    br = (J @ P @ J.T)[0, 1]
    va, vb = fa(X)
    want = int(np.asarray(alpha) @ skew @ np.asarray(beta)) * va * vb
    return float(abs(br - want) / max(abs(va * vb), 1e-300))
