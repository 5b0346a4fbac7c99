"""Horizontal foliation engine.

Trajectories at phase theta solve dz/ds = e^{i pi theta} / sqrt(phi(z)) with the
square root continued along the path.  Integration is a vectorised RK4 in
Euclidean arc length with steps proportional to the distance to the nearest
finite critical point, so many trajectories (every prong at every grid phase)
advance together.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .differential import INF, PeriodPath, QuadraticDifferential, period
from .errors import SpectraError, ValidationError
from .surface import (IdealTriangulation, TaggedTriangulation,
                      exchange_matrix)


class NotSaddleFree(SpectraError):
    pass


class UnsupportedTopology(ValidationError):
    pass


class NotGeneric(SpectraError):
    pass


class ClassAmbiguity(SpectraError):
    pass


class Stalled(SpectraError):
    pass


@dataclass(frozen=True)
class FoliationConfig:
    grid_per_unit: int = 400
    theta_tol: float = 1e-10
    eps_hit: float = 1e-6           # relative to scale
    delta_prong: float = 1e-4       # relative to scale
    budget: float = 50.0            # Euclidean arc length, relative to scale
    hmax_factor: float = 10.0
    step: float = 0.05              # RK4 step / distance to nearest critical point
    scan_step: float = 0.1          # same, for the sign-change scan before refinement
    fine_step: float = 0.01
    escape_radius: float = 20.0     # relative to scale + max |critical point|
    trap_radius: float = 1e-3       # relative to scale
    near_radius: float = 0.3        # relative to the smallest critical spacing
    max_steps: int = 20000
    class_bound: int = 10
    angle_tol: float = 1e-7
    sector_offset: float = 0.05     # generic-trajectory seed distance / zero spacing


# status codes
ALIVE, ZERO, POLE, DOUBLE, CLOSED, BUDGET, ESCAPE = range(7)
STATUS_NAMES = {ZERO: "zero-hit", POLE: "pole-sector", DOUBLE: "double-pole", CLOSED: "closed",
                BUDGET: "budget-exhausted", ESCAPE: "escape", ALIVE: "alive"}


def _pick(q, ref):
    return np.where((q * np.conj(ref)).real >= 0, q, -q)


class Geometry:
    """Critical-point bookkeeping and termination radii for one differential."""

    def __init__(self, phi: QuadraticDifferential, cfg: FoliationConfig = FoliationConfig(),
                 label_phase=0.0):
        self.phi = phi
        self.label_phase = label_phase      # phi is the base differential rotated by this phase
        self.cfg = cfg
        self.zeros = np.asarray(phi.zeros, dtype=complex)
        self.scale = phi.scale
        self.fin_poles = [(p, m) for p, m in phi.poles]
        self.crit = np.concatenate([self.zeros, np.array([p for p, _ in self.fin_poles], dtype=complex)])
        spread = float(np.max(np.abs(self.crit))) if self.crit.size else 0.0
        self.r_escape = cfg.escape_radius * (self.scale + spread)
        self.r_trap = cfg.trap_radius * self.scale
        self.eps_hit = cfg.eps_hit * self.scale
        if self.zeros.size > 1:
            d = np.abs(self.zeros[:, None] - self.crit[None, :])
            d[d == 0] = np.inf
            self.spacing = float(np.min(d))
        elif self.crit.size > 1:
            d = np.abs(self.crit[:, None] - self.crit[None, :])
            d[d == 0] = np.inf
            self.spacing = float(np.min(d))
        else:
            self.spacing = self.scale
        self.r_near = cfg.near_radius * self.spacing
        self.m_inf = phi.order_at_infinity
        self.directions = {}
        for key in phi.higher_order_poles():
            self.directions[key] = phi.asymptotic_directions(key)
        self.double_keys = phi.double_poles()

    # marked-point labels on the blown-up surface
    def boundary_label(self, key, idx):
        # labels follow the unrotated base differential so they are stable in phase
        dirs = self.directions[key]
        k = len(dirs)
        shift = 2 * np.pi * self.label_phase / k * (1 if key == INF else -1)
        # rank from half a spacing below zero so round-off cannot wrap a direction
        base = np.mod(dirs - shift + np.pi / k, 2 * np.pi)
        rank = int(np.argsort(np.argsort(base))[idx])
        return rank if key == INF else int(k - 1 - rank)

    def puncture_label(self, key):
        keys = sorted(self.double_keys, key=lambda k: (k == INF, str(k)))
        return f"p{keys.index(key)}"

    def classify_direction(self, key, z):
        if key == INF:
            ang = np.angle(z)
        else:
            ang = np.angle(z - key)
        dirs = self.directions[key]
        diff = np.abs(np.angle(np.exp(1j * (ang - dirs))))
        return int(np.argmin(diff))


@dataclass
class Trajectory:
    theta: float
    samples: np.ndarray
    termination: str
    label: object
    w_length: float
    arc_length: float


def _rhs(phi, z, vref, e):
    q = _pick(np.sqrt(phi(z)), vref)
    aq = np.abs(q)
    u = e * np.conj(q) / aq
    return u, q, q * u


def integrate_many(geom: Geometry, z0, v0, theta, direction=1, step=None, record=False,
                   origin=None, track=True, max_steps=None):
    """Advance trajectories until each terminates.

    Returns a dict of per-trajectory arrays; with ``record`` also the list of
    sample arrays (one per trajectory).
    """
    cfg = geom.cfg
    phi = geom.phi
    step = cfg.step if step is None else step
    max_steps = cfg.max_steps if max_steps is None else max_steps
    z0 = np.atleast_1d(np.asarray(z0, dtype=complex))
    K = z0.size
    v = _pick(np.sqrt(phi(z0)), np.broadcast_to(np.asarray(v0, dtype=complex), (K,)).copy())
    e = np.exp(1j * np.pi * np.broadcast_to(np.asarray(theta, dtype=float), (K,))) * \
        np.broadcast_to(np.asarray(direction, dtype=float), (K,))
    origin = np.full(K, -1) if origin is None else np.broadcast_to(np.asarray(origin), (K,)).copy()

    z = z0.copy()
    w = np.zeros(K, dtype=complex)
    sigma = np.zeros(K)
    status = np.zeros(K, dtype=int)
    label = np.full(K, None, dtype=object)
    nz = geom.zeros.size
    # first passage near each zero
    ap_state = np.zeros((K, nz), dtype=int)
    ap_d = np.full((K, nz), np.inf)
    ap_z = np.zeros((K, nz), dtype=complex)
    ap_v = np.zeros((K, nz), dtype=complex)
    ap_w = np.zeros((K, nz), dtype=complex)
    left_origin = origin < 0
    samples = [[zz] for zz in z0] if record else None

    budget = cfg.budget * geom.scale
    crit = geom.crit
    idx = np.arange(K)
    for _ in range(max_steps):
        if idx.size == 0:
            break
        zi, vi, ei = z[idx], v[idx], e[idx]
        dc = np.min(np.abs(zi[:, None] - crit[None, :]), axis=1) if crit.size else np.abs(zi) + 1
        h = step * np.maximum(dc, 1e-3 * geom.eps_hit)
        k1, q1, d1 = _rhs(phi, zi, vi, ei)
        k2, q2, d2 = _rhs(phi, zi + 0.5 * h * k1, q1, ei)
        k3, q3, d3 = _rhs(phi, zi + 0.5 * h * k2, q2, ei)
        k4, q4, d4 = _rhs(phi, zi + h * k3, q3, ei)
        zn = zi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        wn = w[idx] + h / 6 * (d1 + 2 * d2 + 2 * d3 + d4)
        vn = _pick(np.sqrt(phi(zn)), q4)
        z[idx], v[idx], w[idx] = zn, vn, wn
        sigma[idx] += h
        if record:
            for j, zz in zip(idx, zn):
                samples[j].append(zz)

        st = np.zeros(idx.size, dtype=int)
        lab = np.full(idx.size, None, dtype=object)
        if nz:
            dz = np.abs(zn[:, None] - geom.zeros[None, :])
            if track:
                own = origin[idx]
                lo = left_origin[idx] | (np.where(own >= 0, dz[np.arange(idx.size), np.maximum(own, 0)], 0)
                                         > geom.r_near)
                left_origin[idx] = lo
                for j in range(nz):
                    valid = (own != j) | lo
                    inside = (dz[:, j] < geom.r_near) & valid
                    stj = ap_state[idx, j]
                    enter = inside & (stj == 0)
                    ap_state[idx[enter], j] = 1
                    stj = ap_state[idx, j]
                    upd = inside & (stj == 1) & (dz[:, j] < ap_d[idx, j])
                    sel = idx[upd]
                    ap_d[sel, j] = dz[upd, j]
                    ap_z[sel, j] = zn[upd]
                    ap_v[sel, j] = vn[upd]
                    ap_w[sel, j] = wn[upd]
                    ex = (~inside) & (stj == 1)
                    ap_state[idx[ex], j] = 2
            jmin = np.argmin(dz, axis=1)
            dmin = dz[np.arange(idx.size), jmin]
            own = origin[idx]
            hit = (dmin < geom.eps_hit) & ((jmin != own) | left_origin[idx])
            st[hit] = ZERO
            for a in np.nonzero(hit)[0]:
                lab[a] = int(jmin[a])
        for p, m in geom.fin_poles:
            near = (np.abs(zn - p) < geom.r_trap) & (st == 0)
            if not near.any():
                continue
            if m >= 3:
                st[near] = POLE
                for a in np.nonzero(near)[0]:
                    lab[a] = (p, geom.classify_direction(p, zn[a]))
            elif m == 2:
                st[near] = DOUBLE
                for a in np.nonzero(near)[0]:
                    lab[a] = p
            else:
                st[near] = ZERO
                for a in np.nonzero(near)[0]:
                    lab[a] = ("simple-pole", p)
        far = (np.abs(zn) > geom.r_escape) & (st == 0)
        if far.any():
            if geom.m_inf >= 3:
                st[far] = POLE
                for a in np.nonzero(far)[0]:
                    lab[a] = (INF, geom.classify_direction(INF, zn[a]))
            elif geom.m_inf == 2:
                st[far] = DOUBLE
                for a in np.nonzero(far)[0]:
                    lab[a] = INF
            else:
                st[far] = ESCAPE
        closed = (st == 0) & (sigma[idx] > 10 * geom.r_near) & \
            (np.abs(zn - z0[idx]) < np.maximum(h, geom.eps_hit) * 0.75)
        st[closed] = CLOSED
        over = (st == 0) & (sigma[idx] > budget)
        st[over] = BUDGET
        done = st != 0
        if done.any():
            status[idx[done]] = st[done]
            label[idx[done]] = lab[done]
            idx = idx[~done]
    status[idx] = BUDGET
    out = dict(z=z, v=v, w=w, sigma=sigma, status=status, label=label,
               ap_d=ap_d, ap_z=ap_z, ap_v=ap_v, ap_w=ap_w)
    if record:
        out["samples"] = [np.array(s) for s in samples]
    return out


def integrate_trajectory(phi: QuadraticDifferential, z0, theta, direction=1, v0=None,
                         cfg: FoliationConfig = FoliationConfig(), step=None) -> Trajectory:
    geom = Geometry(phi, cfg)
    z0 = complex(z0)
    if v0 is None:
        v0 = np.sqrt(complex(phi(z0)))
    res = integrate_many(geom, [z0], [v0], theta, direction, step=step, record=True, track=False)
    lab = res["label"][0]
    if res["status"][0] == ZERO and isinstance(lab, int):
        lab = ("zero", lab)
    return Trajectory(theta, res["samples"][0], STATUS_NAMES[int(res["status"][0])], lab,
                      float(abs(res["w"][0])), float(res["sigma"][0]))


# -- local structure at zeros ----------------------------------------------------

_GL16 = np.polynomial.legendre.leggauss(16)


def local_w(phi, zj, z, v):
    """w(zj) - w(z) along the straight segment, branch fixed by sqrt(phi(z)) = v."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    d = z - zj
    x, wts = _GL16
    s = (x + 1) / 2
    wts = wts / 2
    order = np.argsort(-s)
    g = v.copy()                    # sqrt(phi)/s at s = 1
    acc = np.zeros_like(z)
    for i in order:
        q = np.sqrt(phi(zj + d * s[i] ** 2)) / s[i]
        q = _pick(q, g)
        g = q
        acc += wts[i] * q * s[i] * 2 * s[i] * d
    return -acc


def prong_seeds(phi, zero, theta, delta):
    """Three seeds (points, sheet values) along the prongs of a simple zero, ccw ordered."""
    c = np.sqrt(complex(phi.derivative(zero)))
    rho = (2 / 3) * abs(c) * delta ** 1.5
    A = 1.5 * np.exp(1j * np.pi * theta) * rho / c
    base = np.abs(A) ** (2 / 3)
    us = base * np.exp(1j * (2 * np.angle(A) + 2 * np.pi * np.arange(3)) / 3)
    us = us[np.argsort(np.mod(np.angle(us), 2 * np.pi))]
    pts = zero + us
    vref = 1.5 * np.exp(1j * np.pi * theta) * rho / us
    vs = _pick(np.sqrt(phi(pts)), vref)
    return pts, vs


def critical_prongs(phi, zero, theta, cfg: FoliationConfig = FoliationConfig()):
    return prong_seeds(phi, zero, theta, cfg.delta_prong * phi.scale)[0]


# -- saddle connections ----------------------------------------------------------

@dataclass
class SaddleConnection:
    theta: float
    zeros: tuple
    path: np.ndarray
    Z: complex
    closed: bool
    class_coords: tuple = None
    hit_distance: float = float("nan")

    def to_dict(self):
        return {"theta": self.theta, "zeros": list(self.zeros), "Z": [self.Z.real, self.Z.imag],
                "closed": self.closed,
                "class": None if self.class_coords is None else list(self.class_coords),
                "type": "closed-saddle" if self.closed else "saddle"}


@dataclass
class RingDomain:
    theta: float
    Z: complex
    degenerate: bool
    class_coords: tuple = None
    confidence: str = "probe"

    def to_dict(self):
        return {"theta": self.theta, "Z": [self.Z.real, self.Z.imag], "degenerate": self.degenerate,
                "class": None if self.class_coords is None else list(self.class_coords),
                "confidence": self.confidence, "type": "ring-domain"}


@dataclass
class SpectrumTable:
    saddles: list
    rings: list
    grid: int
    window: tuple
    h_max: float
    basis: "HatBasis" = None
    support_constant: float = float("nan")

    def classes(self):
        return sorted({s.class_coords for s in self.saddles if s.class_coords is not None})

    def to_dict(self):
        return {"saddles": [s.to_dict() for s in self.saddles],
                "rings": [r.to_dict() for r in self.rings],
                "grid_per_unit": self.grid, "window": list(self.window), "h_max": self.h_max,
                "support_constant": self.support_constant}


def _grid(window, per_unit):
    lo, hi = window
    N = max(2, int(ceil(per_unit * (hi - lo))))
    d = (hi - lo) / N
    shift = 0.381966 * d            # keep grid points off rational phases
    return lo - d + shift + d * np.arange(N + 2)


def _scan_prongs(geom, thetas, step):
    phi = geom.phi
    pts, vs, th, org, pr = [], [], [], [], []
    for t in thetas:
        for i, z0 in enumerate(geom.zeros):
            p, v = prong_seeds(phi, z0, t, geom.cfg.delta_prong * geom.scale)
            pts.append(p)
            vs.append(v)
            th += [t] * 3
            org += [i] * 3
            pr += [0, 1, 2]
    pts = np.concatenate(pts)
    vs = np.concatenate(vs)
    res = integrate_many(geom, pts, vs, np.array(th), 1, step=step, origin=np.array(org))
    res["theta"] = np.array(th)
    res["origin"] = np.array(org)
    res["prong"] = np.array(pr)
    res["seed"] = pts
    res["seed_v"] = vs
    return res


def _miss_values(geom, res):
    """Im(e^{-i pi theta} (w(z_j) - w(z_i))) per trajectory and target zero (NaN if no approach)."""
    phi = geom.phi
    nz = geom.zeros.size
    K = res["z"].size
    miss = np.full((K, nz), np.nan)
    W = np.full((K, nz), np.nan + 0j)
    w0 = -local_w(phi, geom.zeros[res["origin"]], res["seed"], res["seed_v"])   # w(seed) - w(z_i)
    for j in range(nz):
        ok = np.isfinite(res["ap_d"][:, j])
        if not ok.any():
            continue
        dw = local_w(phi, geom.zeros[j], res["ap_z"][ok, j], res["ap_v"][ok, j])
        Wj = w0[ok] + res["ap_w"][ok, j] + dw
        W[ok, j] = Wj
        miss[ok, j] = (np.exp(-1j * np.pi * res["theta"][ok]) * Wj).imag
    return miss, W


def _trace_path(geom, zi, theta, prong, j, step):
    """Samples of the prong trajectory from zero zi up to its first passage near zero j."""
    phi = geom.phi
    pts, vs = prong_seeds(phi, geom.zeros[zi], theta, geom.cfg.delta_prong * geom.scale)
    res = integrate_many(geom, [pts[prong]], [vs[prong]], theta, 1, step=step, record=True,
                         origin=np.array([zi]))
    smp = res["samples"][0]
    if not np.isfinite(res["ap_d"][0, j]):
        return None, res, vs[prong]
    target = res["ap_z"][0, j]
    k = int(np.argmin(np.abs(smp - target)))
    path = np.concatenate([[geom.zeros[zi]], smp[:k + 1], [geom.zeros[j]]])
    return path, res, vs[prong]


def _thin(path, crit, frac=0.4):
    # drop samples while each kept segment stays short relative to nearby critical points
    keep = [0]
    for i in range(1, len(path) - 1):
        a = path[keep[-1]]
        d = np.min(np.abs(crit - a)) if crit.size else np.inf
        if abs(path[i + 1] - a) > frac * d:
            keep.append(i)
    keep.append(len(path) - 1)
    return path[keep]


def _clean_path(geom, path, v_first, radius=None):
    """Drop samples hugging the end zeros and carry the sheet to the first kept sample."""
    radius = 0.1 * geom.spacing if radius is None else radius
    a, b = path[0], path[-1]
    inner = path[1:-1]
    keep = (np.abs(inner - a) > radius) & (np.abs(inner - b) > radius)
    if not keep.any():
        raise Stalled("path too short to separate its endpoints")
    first = int(np.argmax(keep))
    ref = v_first
    for zz in inner[:first + 1]:
        ref = _pick(np.sqrt(complex(geom.phi(zz))), ref)
    out = np.concatenate([[a], inner[keep], [b]])
    return _thin(out, geom.crit), ref


def _saddle_from_bracket(geom, zi, prong, j, t_lo, t_hi, step):
    phi = geom.phi
    path, res, v_seed = _trace_path(geom, zi, t_lo, prong, j, step)
    if path is None:
        path, res, v_seed = _trace_path(geom, zi, t_hi, prong, j, step)
        if path is None:
            return None
    try:
        path, ref = _clean_path(geom, path, v_seed)
        Z = period(phi, PeriodPath(tuple(path), ref))
    except SpectraError:
        return None
    theta = np.angle(Z) / np.pi % 1.0
    # map into the bracket's branch of phase
    cand = theta + np.round((0.5 * (t_lo + t_hi) - theta))
    slack = 2 * (t_hi - t_lo) + 1e-6
    if not (t_lo - slack <= cand <= t_hi + slack):
        return None
    return cand, Z, path


def _class_of(basis, Z, bound, tol):
    return basis.decompose(Z, bound, tol)


def find_saddles(phi: QuadraticDifferential, theta_window=(0.0, 1.0), h_max=None,
                 cfg: FoliationConfig = FoliationConfig(), basis=None, verify=True) -> SpectrumTable:
    geom = Geometry(phi, cfg)
    if geom.zeros.size == 0:
        return SpectrumTable([], [], cfg.grid_per_unit, tuple(theta_window), h_max or 0.0)
    lo, hi = theta_window
    thetas = _grid((lo, hi), cfg.grid_per_unit)
    res = _scan_prongs(geom, thetas, cfg.scan_step)
    miss, W = _miss_values(geom, res)
    nz = geom.zeros.size
    nt = thetas.size
    M = miss.reshape(nt, nz, 3, nz)        # theta, origin zero, prong, target zero
    found = []
    for i in range(nz):
        for a in range(3):
            for j in range(nz):
                m = M[:, i, a, j]
                for k in range(nt - 1):
                    m0, m1 = m[k], m[k + 1]
                    if not (np.isfinite(m0) and np.isfinite(m1)) or m0 * m1 > 0:
                        continue
                    hit = _saddle_from_bracket(geom, i, a, j, thetas[k], thetas[k + 1], cfg.step)
                    if hit is None:
                        continue
                    th, Z, path = hit
                    th_mod = th % 1.0
                    if th_mod <= 1e-12:
                        th_mod = 1.0
                    # keep phases in the half-open window (lo, hi]
                    if not (lo < th_mod <= hi or lo < th <= hi):
                        continue
                    found.append(SaddleConnection(float(th if lo < th <= hi else th_mod),
                                                  (i, j), path, complex(Z), i == j))
    saddles = _dedupe(found)
    if verify:
        for s in saddles:
            s.hit_distance = _verify_hit(geom, s)
    rings = _ring_domains(geom, (lo, hi), saddles)
    table = SpectrumTable(sorted(saddles, key=lambda s: (s.theta, s.zeros)), rings,
                          cfg.grid_per_unit, (lo, hi), h_max if h_max is not None else float("inf"))
    if basis is not None:
        assign_classes(table, basis, h_max, cfg)
    return table


def _dedupe(found, tol=1e-7):
    out = []
    for s in sorted(found, key=lambda s: s.theta):
        dup = False
        for t in out:
            if abs(t.theta - s.theta) < tol and set(t.zeros) == set(s.zeros) and \
                    min(abs(t.Z - s.Z), abs(t.Z + s.Z)) < 1e-6 * max(1, abs(s.Z)):
                dup = True
                break
        if not dup:
            out.append(s)
    return out


def _verify_hit(geom, s):
    i, j = s.zeros
    best = np.inf
    for a in range(3):
        pts, vs = prong_seeds(geom.phi, geom.zeros[i], s.theta, geom.cfg.delta_prong * geom.scale)
        res = integrate_many(geom, [pts[a]], [vs[a]], s.theta, 1, step=geom.cfg.fine_step,
                             origin=np.array([i]))
        best = min(best, float(res["ap_d"][0, j]))
    return best


def assign_classes(table: SpectrumTable, basis: "HatBasis", h_max=None, cfg=FoliationConfig()):
    table.basis = basis
    if h_max is None:
        h_max = cfg.hmax_factor * float(np.max(np.abs(basis.periods)))
    table.h_max = h_max
    kept = []
    for s in table.saddles:
        if abs(s.Z) > h_max:
            continue
        s.class_coords = basis.decompose(s.Z, cfg.class_bound)
        kept.append(s)
    table.saddles = kept
    for r in table.rings:
        try:
            r.class_coords = basis.decompose(r.Z, cfg.class_bound)
        except ClassAmbiguity:
            r.class_coords = None
    table.rings = [r for r in table.rings if abs(r.Z) <= h_max]
    norms = [max(abs(c) for c in s.class_coords) for s in kept if s.class_coords]
    if norms:
        table.support_constant = float(min(abs(s.Z) / n for s, n in zip(kept, norms)))
    return table


# -- ring domains ------------------------------------------------------------------

def _winding(poly, pt):
    d = poly - pt
    return int(np.round(np.sum(np.angle(d[1:] / d[:-1])) / (2 * np.pi)))


def _ring_domains(geom, window, saddles):
    phi = geom.phi
    lo, hi = window
    rings = []
    for key in geom.double_keys:
        res = phi.residue(key)
        Z = res.residue
        th = np.angle(Z) / np.pi % 1.0
        if th <= 0:
            th = 1.0
        if not (lo < th <= hi):
            if lo < th - 1 <= hi:
                th -= 1
            else:
                continue
        Zr = Z if np.exp(-1j * np.pi * th) * Z == abs(Z) or \
            (np.exp(-1j * np.pi * th) * Z).real > 0 else -Z
        rings.append(RingDomain(float(th), complex(Zr), True, confidence="residue"))
    for s in saddles:
        if not s.closed:
            continue
        loop = np.append(s.path, s.path[0])
        inside = [c for c in geom.crit if _winding(loop, c) != 0]
        outside_count = geom.crit.size - len(inside) + (1 if geom.m_inf > 0 else 0)
        for region in (inside, None):
            if region is None:
                pts = [c for c in geom.crit if c not in inside]
                doubles = [p for p, m in geom.fin_poles if m == 2 and p in pts] + \
                    ([INF] if geom.m_inf == 2 else [])
                count = outside_count - 1   # the base zero of the saddle lies on the loop
            else:
                doubles = [p for p, m in geom.fin_poles if m == 2 and p in region]
                count = len(region)
            if count == 1 and len(doubles) == 1:
                continue                    # degenerate ring already recorded from the residue
            if count == 0:
                continue
            rings.append(RingDomain(s.theta, s.Z, False, confidence="closed-saddle-probe"))
            break
    return rings


# -- WKB triangulation and hat basis -------------------------------------------------

@dataclass
class HatBasis:
    periods: np.ndarray
    skew: np.ndarray
    triangulation: IdealTriangulation
    signing: dict
    strips: list
    theta_ref: float = 0.0
    wkb_data: dict = field(default=None, repr=False, compare=False)

    @property
    def rank(self):
        return self.periods.size

    def decompose(self, Z, bound=10, tol=1e-7):
        """Integer coordinates of a class from its period (unique within the bound)."""
        n = self.rank
        if n > 5:
            raise ClassAmbiguity("period matching is limited to rank <= 5")
        rng = np.arange(-bound, bound + 1)
        best = []
        scale = max(1.0, abs(Z))
        for combo in itertools.product(rng, repeat=n - 1) if n > 1 else [()]:
            partial = np.dot(combo, self.periods[:-1]) if n > 1 else 0
            a_last = (Z - partial) / self.periods[-1]
            r = np.round(a_last.real)
            if abs(r) > bound:
                continue
            err = abs(partial + r * self.periods[-1] - Z)
            if err < tol * scale:
                best.append(tuple(int(c) for c in combo) + (int(r),))
        if len(best) != 1:
            raise ClassAmbiguity(f"{len(best)} lattice vectors match period {Z}")
        return best[0]

    def period_of(self, coords):
        return complex(np.dot(coords, self.periods))

    def to_dict(self):
        return {"periods": [[z.real, z.imag] for z in self.periods],
                "skew": self.skew.tolist(), "theta_ref": self.theta_ref,
                "triangulation": self.triangulation.to_dict(),
                "signing": dict(self.signing)}


def _end_label(geom, status, lab):
    if status == POLE:
        key, idx = lab
        return geom.boundary_label(key, idx)
    if status == DOUBLE:
        return geom.puncture_label(lab)
    raise NotSaddleFree(f"separating trajectory ended with status {STATUS_NAMES[status]}")


def _sector_seeds(geom, zi, offset):
    """Bisector seeds of the three horizontal sectors at a zero with the 'up' sheet."""
    phi = geom.phi
    z0 = geom.zeros[zi]
    pts, _ = prong_seeds(phi, z0, 0.0, 1.0)
    ang = np.angle(pts - z0)
    us = offset * np.exp(1j * (ang + np.pi / 3))
    seeds = z0 + us
    vs = _pick(np.sqrt(phi(seeds)), 1j / us)
    return seeds, vs


def wkb_triangulation(phi: QuadraticDifferential, cfg: FoliationConfig = FoliationConfig(),
                      with_data=False, label_phase=0.0):
    """Ideal triangulation, signing and tagged triangulation of a saddle-free differential.

    ``label_phase`` says phi is a base differential rotated by that phase; boundary
    marks are labelled as for the base so that labels agree across phases.
    """
    geom = Geometry(phi, cfg, label_phase)
    surf = phi.marked_bordered_surface()
    if not surf.is_disk:
        raise UnsupportedTopology("WKB triangulations are assembled only on disks")
    if not phi.is_complete():
        raise UnsupportedTopology("differential must be complete")
    nz = geom.zeros.size
    # separating trajectories
    seeds, vs, org = [], [], []
    for i in range(nz):
        p, v = prong_seeds(phi, geom.zeros[i], 0.0, cfg.delta_prong * geom.scale)
        seeds.append(p)
        vs.append(v)
        org += [i] * 3
    res = integrate_many(geom, np.concatenate(seeds), np.concatenate(vs), 0.0, 1,
                         step=cfg.step, origin=np.array(org), track=False)
    ends = [_end_label(geom, int(s), l) for s, l in zip(res["status"], res["label"])]
    prong_end = np.array(ends, dtype=object).reshape(nz, 3)

    offset = cfg.sector_offset * geom.spacing
    for attempt in range(4):
        corners = []
        sseeds, svs = [], []
        for i in range(nz):
            sp_, sv_ = _sector_seeds(geom, i, offset)
            sseeds.append(sp_)
            svs.append(sv_)
        sseeds = np.concatenate(sseeds)
        svs = np.concatenate(svs)
        fw = integrate_many(geom, sseeds, svs, 0.0, 1, step=cfg.step, track=False, record=with_data)
        bw = integrate_many(geom, sseeds, svs, 0.0, -1, step=cfg.step, track=False, record=with_data)
        ok = True
        for i in range(nz):
            for k in range(3):
                idx = 3 * i + k
                try:
                    head = _end_label(geom, int(fw["status"][idx]), fw["label"][idx])
                    tail = _end_label(geom, int(bw["status"][idx]), bw["label"][idx])
                except NotSaddleFree:
                    ok = False
                    break
                if head != prong_end[i, k] or tail != prong_end[i, (k + 1) % 3]:
                    ok = False
                    break
                corners.append((i, k, tail, head))
            if not ok:
                break
        if ok:
            break
        offset /= 4
    else:
        raise NotSaddleFree("generic trajectories near zeros disagree with separatrix endpoints")

    kmarks = surf.boundary_marks[0]
    edge_of = {}
    strips = []
    pending = {}
    for (i, k, tail, head) in corners:
        key = (head, tail)
        if key in pending and pending[key]:
            other = pending[key].pop()
            j = len(strips)
            strips.append((other, (i, k)))
            edge_of[other] = j
            edge_of[(i, k)] = j
        else:
            pending.setdefault((tail, head), []).append((i, k))
    for (tail, head), rest in pending.items():
        for c in rest:
            # unmatched corner: a half-plane, whose side runs head -> tail along the boundary
            if isinstance(head, str) or isinstance(tail, str) or (head + 1) % kmarks != tail:
                raise UnsupportedTopology(f"cannot place half-plane corner {c} ({head}->{tail})")
            edge_of[c] = f"b{head}"
    if len(strips) != sum(1 for _ in strips) or len(strips) != _dimension(surf):
        raise UnsupportedTopology(f"found {len(strips)} strips, expected {_dimension(surf)}")
    tris = []
    for i in range(nz):
        tris.append(tuple((edge_of[(i, k)], prong_end[i, k]) for k in range(3)))
    T = IdealTriangulation(surf, tuple(tris), len(strips))
    signing = {}
    for key in geom.double_keys:
        Zr = phi.residue(key, 1).residue
        inH = Zr.imag > 0 or (Zr.imag == 0 and Zr.real < 0)
        signing[geom.puncture_label(key)] = 1 if inH else -1
    tau = TaggedTriangulation(T, tuple(signing.items()))
    if with_data:
        # one horizontal trajectory per corner, ordered from its tail mark to its head mark
        paths = {}
        for (i, k, tail, head) in corners:
            idx = 3 * i + k
            paths[(i, k)] = np.concatenate([bw["samples"][idx][::-1], fw["samples"][idx][1:]])
        return T, signing, tau, dict(geom=geom, strips=strips, sector_seeds=sseeds,
                                     sector_v=svs, corners=corners, offset=offset,
                                     edge_of=edge_of, corner_paths=paths)
    return T, signing, tau


def _dimension(surf):
    from .surface import dimension
    return dimension(surf)


def _segments_cross(a0, a1, b0, b1):
    # vectorised proper intersection test of segments a (single) with arrays b
    def cross(u, v):
        return u.real * v.imag - u.imag * v.real
    d = a1 - a0
    e = b1 - b0
    den = cross(d, e)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross(b0 - a0, e) / den
        s = cross(b0 - a0, d) / den
    return (den != 0) & (t >= 0) & (t <= 1) & (s >= 0) & (s <= 1), t, s


def _strip_period(geom, corner_a, corner_b, seeds, seed_v, step):
    phi = geom.phi
    ia, ka = corner_a
    ib, kb = corner_b
    za, zb = geom.zeros[ia], geom.zeros[ib]
    sa, va = seeds[3 * ia + ka], seed_v[3 * ia + ka]
    sb, vb = seeds[3 * ib + kb], seed_v[3 * ib + kb]
    fw = integrate_many(geom, [sa], [va], 0.0, 1, step=step, record=True, track=False)["samples"][0]
    bw = integrate_many(geom, [sa], [va], 0.0, -1, step=step, record=True, track=False)["samples"][0]
    A = np.concatenate([bw[::-1], fw[1:]])
    ia_seed = len(bw) - 1
    for direction in (1, -1):
        vert = integrate_many(geom, [sb], [vb], 0.5, direction, step=step, record=True,
                              track=False)["samples"][0]
        for m in range(len(vert) - 1):
            hit, t, s = _segments_cross(vert[m], vert[m + 1], A[:-1], A[1:])
            if hit.any():
                n = int(np.nonzero(hit)[0][0])
                cross_pt = vert[m] + t[n] * (vert[m + 1] - vert[m])
                if n >= ia_seed:
                    along = A[ia_seed:n + 1]
                else:
                    along = A[n + 1:ia_seed + 1][::-1]
                path = np.concatenate([[za], along, [cross_pt], vert[:m + 1][::-1], [zb]])
                path, ref = _clean_path(geom, path, va, radius=0.5 * abs(sa - za))
                return period(phi, PeriodPath(tuple(path), ref)), PeriodPath(tuple(path), ref)
    raise NotSaddleFree("vertical probe did not cross the strip's generic trajectory")


def hat_basis(phi: QuadraticDifferential, cfg: FoliationConfig = FoliationConfig(),
              theta_ref=0.0, transpose_form=True) -> HatBasis:
    """Basis of hat-homology from the WKB triangulation of phi rotated to phase theta_ref.

    Periods are reported for phi itself, so they lie in e^{i pi theta_ref} times the
    semi-closed upper half plane.  ``transpose_form`` selects <g_i, g_j> = eps_ji.
    """
    rot = phi.rotate(np.pi * theta_ref)
    T, signing, tau, data = wkb_triangulation(rot, cfg, with_data=True, label_phase=theta_ref)
    geom = data["geom"]
    periods, paths = [], []
    for (ca, cb) in data["strips"]:
        Z, path = _strip_period(geom, ca, cb, data["sector_seeds"], data["sector_v"], cfg.step)
        if Z.imag < 0 or (Z.imag == 0 and Z.real > 0):
            raise SpectraError("strip period left the upper half plane")
        periods.append(Z * np.exp(1j * np.pi * theta_ref))
        paths.append(path)
    eps = exchange_matrix(T)
    skew = eps.T.copy() if transpose_form else eps.copy()
    hb = HatBasis(np.array(periods), skew, T, signing,
                  [dict(corners=s, path=np.array(p.waypoints),
                        period_path=PeriodPath(p.waypoints, p.sheet * np.exp(1j * np.pi * theta_ref)))
                   for s, p in zip(data["strips"], paths)], theta_ref)
    hb.wkb_data = data
    return hb


# -- saddle-free test, BPS invariants, genericity ----------------------------------------

def is_saddle_free(phi: QuadraticDifferential, cfg: FoliationConfig = FoliationConfig(),
                   half_width=None):
    hw = 2.0 / cfg.grid_per_unit if half_width is None else half_width
    table = find_saddles(phi, (-hw, hw), cfg=cfg, verify=False)
    hits = [s for s in table.saddles if abs(s.theta) < hw]
    rings = [r for r in table.rings if min(abs(r.theta), abs(r.theta - 1)) < cfg.angle_tol]
    if hits:
        w = min(hits, key=lambda s: abs(s.theta))
        if abs(w.theta) < 1e-9:
            return False, w
    if rings:
        return False, rings[0]
    return True, None


def bps_invariants(table: SpectrumTable, require_generic=True, cfg=FoliationConfig()):
    if require_generic and not is_generic(table, cfg):
        raise NotGeneric("two independent classes have real-proportional periods")
    omega = {}
    for s in table.saddles:
        if s.closed or s.class_coords is None:
            continue
        omega[s.class_coords] = omega.get(s.class_coords, 0) + 1
    for r in table.rings:
        if r.degenerate or r.class_coords is None:
            continue
        omega[r.class_coords] = omega.get(r.class_coords, 0) - 2
    full = {}
    for g, v in omega.items():
        if v:
            full[g] = v
            full[tuple(-c for c in g)] = v
    return full


def is_generic(table: SpectrumTable, cfg=FoliationConfig()):
    items = [(s.class_coords, s.Z) for s in table.saddles if s.class_coords is not None]
    items += [(r.class_coords, r.Z) for r in table.rings if r.class_coords is not None]
    for (g1, z1), (g2, z2) in itertools.combinations(items, 2):
        a, b = np.array(g1), np.array(g2)
        proportional = np.linalg.matrix_rank(np.vstack([a, b])) < 2
        if proportional:
            continue
        if abs((z1 * np.conj(z2)).imag) < cfg.angle_tol * abs(z1) * abs(z2):
            return False
    return True


def spectrum(phi: QuadraticDifferential, theta_window=(0.0, 1.0), h_max=None,
             cfg: FoliationConfig = FoliationConfig(), theta_ref=None):
    """Saddle scan plus hat basis at a non-active reference phase, with classes assigned."""
    table = find_saddles(phi, theta_window, cfg=cfg)
    if theta_ref is None:
        theta_ref = choose_reference_phase([s.theta for s in table.saddles] +
                                           [r.theta for r in table.rings])
    basis = hat_basis(phi, cfg, theta_ref)
    assign_classes(table, basis, h_max, cfg)
    return table


def choose_reference_phase(phases, margin=1e-3):
    ph = np.sort(np.mod(np.asarray(phases, dtype=float), 1.0))
    if ph.size == 0 or np.min(np.minimum(ph, 1 - ph)) > margin:
        return 0.0
    gaps = np.diff(np.append(ph, ph[0] + 1))
    k = int(np.argmax(gaps))
    ref = (ph[k] + gaps[k] / 2) % 1.0
    return float(ref)
