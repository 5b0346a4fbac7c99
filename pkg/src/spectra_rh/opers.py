"""Schrodinger operators y'' = (t^-2 phi + Q_corr) y: transport, framings and
Fock-Goncharov coordinates.

Two evaluators are provided.  The general one builds framing lines at a basepoint
(subdominant solutions at higher-order poles, monodromy eigenlines at double
poles) and takes cross ratios.  The WKB-edge evaluator computes the same cross
ratios as products of Wronskians evaluated along the horizontal trajectories of
the WKB triangulation; it works in log form and stays accurate for |t| down to a
few thousandths, where the basepoint method overflows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .differential import INF, QuadraticDifferential
from .errors import ApparentSingularity, NumericalFailure, SpectraError, UnsupportedSurface, \
    ValidationError
from .foliation import FoliationConfig, Geometry, wkb_triangulation


class SingularityOnPath(ValidationError):
    pass


class SeedUnstable(NumericalFailure):
    pass


class DegenerateQuadrilateral(SpectraError):
    pass


@dataclass(frozen=True)
class OperConfig:
    rtol: float = 1e-12
    atol: float = 1e-14
    step_bound: float = 0.5          # |Q|^(1/2) * step <= step_bound
    line_tol: float = 1e-7
    seed_factor: float = 10.0        # R_big = seed_factor * spread of critical points
    check_seed: bool = True
    apparent_tol: float = 1e-8
    t_perturb: float = 1e-3
    series_order: int = 10
    rho_inner: float = 0.02          # series is trusted where rho(z) <= rho_inner
    rho_anchor: float = 1e-3
    chunk_growth: float = 25.0       # renormalise solutions after this much log growth
    clearance: float = 0.25          # fraction of the critical spacing kept free around poles


_GL_X, _GL_W = legendre.leggauss(8)


# -- Taylor arithmetic on arrays of shape (K, nodes) -------------------------------

def _t_mul(a, b):
    K = a.shape[0]
    out = np.zeros_like(a)
    for k in range(K):
        out[k] = np.sum(a[:k + 1] * b[k::-1], axis=0)
    return out


def _t_div(a, b):
    K = a.shape[0]
    q = np.zeros_like(a)
    for k in range(K):
        acc = a[k] - np.sum(b[1:k + 1] * q[k - 1::-1][:k], axis=0) if k else a[0]
        q[k] = acc / b[0]
    return q


def _t_sqrt(a, root0):
    K = a.shape[0]
    s = np.zeros_like(a)
    s[0] = root0
    for k in range(1, K):
        acc = a[k] - np.sum(s[1:k] * s[k - 1:0:-1], axis=0)
        s[k] = acc / (2 * root0)
    return s


def _t_der(a):
    K = a.shape[0]
    out = np.zeros_like(a)
    out[:-1] = a[1:] * np.arange(1, K)[:, None]
    return out


def _taylor_rational(num, poles, z, K, extra_simple=()):
    """Taylor coefficients at each node of N(z)/prod (z-p)^m plus sum c/(z-q)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.zeros((K, z.size), dtype=complex)
    d = np.asarray(num, dtype=complex)
    fact = 1.0
    for k in range(K):
        if k:
            d = np.polyder(d) if d.size > 1 else np.zeros(1, dtype=complex)
            fact *= k
        out[k] = np.polyval(d, z) / fact
    for p, m in poles:
        dz = z - p
        j = np.arange(K)[:, None]
        coef = np.array([math.comb(m + k - 1, k) * (-1) ** k for k in range(K)], dtype=float)[:, None]
        ser = coef * dz[None, :] ** (-m - j)
        out = _t_mul(out, ser)
    for q, c in extra_simple:
        dz = z - q
        j = np.arange(K)[:, None]
        out = out + c * (-1.0) ** j * dz[None, :] ** (-1 - j)
    return out


def _double_pole_series(poles, z, K, coeff=-0.25):
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.zeros((K, z.size), dtype=complex)
    j = np.arange(K)[:, None]
    for p in poles:
        dz = z - p
        out = out + coeff * (j + 1) * (-1.0) ** j * dz[None, :] ** (-2 - j)
    return out


# -- the operator family -------------------------------------------------------------

@dataclass
class TransportMatrix:
    matrix: np.ndarray

    @property
    def det_error(self):
        return abs(np.linalg.det(self.matrix) - 1)

    def __matmul__(self, other):
        return TransportMatrix(self.matrix @ other.matrix)


@dataclass
class FramedLineSet:
    basepoint: complex
    t: complex
    lines: dict                    # mark label -> unit vector in C^2 at the basepoint
    monodromy: dict = field(default_factory=dict)   # puncture label -> 2x2 matrix at basepoint
    substitutions: list = field(default_factory=list)


def projective_distance(u, v):
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    return float(abs(u[0] * v[1] - u[1] * v[0]) / (np.linalg.norm(u) * np.linalg.norm(v)))


class OperFamily:
    """The family y'' = (t^-2 phi + Q_corr) y for one differential."""

    def __init__(self, phi: QuadraticDifferential, basepoint=None, cfg: OperConfig = OperConfig()):
        self.phi = phi
        self.cfg = cfg
        orders = phi.all_pole_orders()
        self.double_finite = [complex(p) for p, m in phi.poles if m == 2]
        self.inf_order = phi.order_at_infinity
        self.simple_corr = self._simple_terms()
        crit = phi.finite_critical_points()
        self.crit = crit
        self.center = complex(np.mean(crit)) if crit.size else 0j
        self.spread = float(max(np.max(np.abs(crit - self.center)), 0.5 * phi.scale)) if crit.size else 1.0
        if crit.size > 1:
            d = np.abs(crit[:, None] - crit[None, :])
            d[d == 0] = np.inf
            self.spacing = float(np.min(d))
        else:
            self.spacing = phi.scale
        self.z0 = complex(basepoint) if basepoint is not None else self._default_basepoint()
        self._orders = orders

    # -- potential -----------------------------------------------------------------
    def _simple_terms(self):
        # simple-pole terms c_p/(z-p) so that Q_corr has the right behaviour at infinity
        ps = self.double_finite
        k = len(ps)
        if not k or self.inf_order >= 3:
            return ()
        P = np.array(ps, dtype=complex)
        if self.inf_order == 2:
            A = np.vstack([np.ones(k), P])
            b = np.array([0, (k - 1) / 4], dtype=complex)
        else:
            A = np.vstack([np.ones(k), P, P ** 2])
            b = np.array([0, k / 4, np.sum(P) / 2], dtype=complex)
        c = np.linalg.lstsq(A, b, rcond=None)[0]
        return tuple((p, complex(ci)) for p, ci in zip(ps, c) if abs(ci) > 0)

    def correction(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for p in self.double_finite:
            out = out - 0.25 / (z - p) ** 2
        for p, c in self.simple_corr:
            out = out + c / (z - p)
        return out

    def potential(self, z, t):
        return self.phi(z) / t ** 2 + self.correction(z)

    def _correction_taylor(self, z, K):
        out = _double_pole_series(self.double_finite, z, K)
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        j = np.arange(K)[:, None]
        for p, c in self.simple_corr:
            out = out + c * (-1.0) ** j * (z - p)[None, :] ** (-1 - j)
        return out

    # -- paths ---------------------------------------------------------------------
    def _default_basepoint(self):
        cands = self.center + self.spacing * np.array(
            [0.31 + 0.17j, -0.29 + 0.23j, 0.21 - 0.33j, -0.37 - 0.19j, 0.5j, -0.5, 0.5, -0.5j])
        if self.crit.size == 0:
            return complex(cands[0])
        clear = [np.min(np.abs(self.crit - c)) for c in cands]
        return complex(cands[int(np.argmax(clear))])

    def _poles_finite(self):
        return [complex(p) for p, _ in self.phi.poles]

    def atlas_path(self, a, b):
        """Straight segment from a to b, bent around finite poles by circular detours."""
        r = self.cfg.clearance * self.spacing
        pts = [complex(a)]
        cur = complex(a)
        b = complex(b)
        for p in sorted(self._poles_finite(), key=lambda p: abs(p - a)):
            d = b - cur
            if abs(d) == 0:
                break
            s = ((p - cur) * np.conj(d)).real / abs(d) ** 2
            if not 0 < s < 1:
                continue
            foot = cur + s * d
            if abs(foot - p) >= r:
                continue
            u = d / abs(d)
            ang_in = np.angle(-u)
            ang_out = np.angle(u)
            # pass on the left of the direction of travel
            sweep = np.mod(ang_out - ang_in, 2 * np.pi) - 2 * np.pi
            angles = ang_in + sweep * np.linspace(0, 1, 17)
            pts.extend(p + r * np.exp(1j * angles))
            cur = pts[-1]
        pts.append(b)
        return np.array(pts)

    def _check_path(self, pts):
        for p in self._poles_finite():
            for a, b in zip(pts[:-1], pts[1:]):
                d = b - a
                s = np.clip(((p - a) * np.conj(d)).real / max(abs(d) ** 2, 1e-300), 0, 1)
                if abs(a + s * d - p) < 1e-9 * max(1.0, abs(p)):
                    raise SingularityOnPath(f"path passes through the pole {p}")

    # -- transport -----------------------------------------------------------------
    def scalar_potential(self, t):
        """Plain-Python evaluator of Q(z, t) for one point (the ODE hot path)."""
        num = [complex(c) for c in self.phi.numerator]
        poles = [(complex(p), int(m)) for p, m in self.phi.poles]
        dbl = list(self.double_finite)
        simple = list(self.simple_corr)
        it2 = 1 / complex(t) ** 2

        def q(z):
            acc = 0j
            for c in num:
                acc = acc * z + c
            for p, m in poles:
                acc /= (z - p) ** m
            out = acc * it2
            for p in dbl:
                out -= 0.25 / (z - p) ** 2
            for p, c in simple:
                out += c / (z - p)
            return out
        return q

    def _rhs(self, t):
        q = self.scalar_potential(t)

        def f(zfun, dzfun):
            def rhs(s, y):
                z = zfun(s)
                dz = dzfun(s)
                n = y.size // 2
                qz = q(z)
                out = np.empty_like(y)
                out[:n] = dz * y[n:]
                out[n:] = (dz * qz) * y[:n]
                return out
            return rhs
        return f

    def _max_step(self, pts, t, length):
        q = np.abs(self.potential(pts, t))
        return max(self.cfg.step_bound / max(float(np.sqrt(np.max(q))), 1e-12), length * 1e-6)

    def transport(self, path, t) -> TransportMatrix:
        """Fundamental matrix of the (y, y') system along a polyline."""
        pts = np.asarray(path, dtype=complex)
        self._check_path(pts)
        Y = np.eye(2, dtype=complex)
        Y, _ = self._propagate(pts, t, Y, renorm=False)
        return TransportMatrix(Y)

    def _propagate(self, pts, t, Y0, renorm=True):
        """Carry the columns of Y0 along the polyline; returns (Y, log scale per column)."""
        pts = np.asarray(pts, dtype=complex)
        Y = np.array(Y0, dtype=complex).reshape(2, -1)
        logs = np.zeros(Y.shape[1])
        make = self._rhs(t)
        for a, b in zip(pts[:-1], pts[1:]):
            L = abs(b - a)
            if L == 0:
                continue
            mid = a + (b - a) * np.linspace(0, 1, 9)
            qmax = float(np.sqrt(np.max(np.abs(self.potential(mid, t)))))
            growth = qmax * L
            n = max(1, int(np.ceil(growth / self.cfg.chunk_growth))) if renorm else 1
            for c in range(n):
                za = a + (b - a) * c / n
                zb = a + (b - a) * (c + 1) / n
                d = zb - za
                rhs = make(lambda s, za=za, d=d: za + s * d, lambda s, d=d: d)
                ms = max(self.cfg.step_bound / max(qmax * abs(d), 1e-12), 1e-7)
                sol = solve_ivp(rhs, (0.0, 1.0), Y.ravel(), method="DOP853", rtol=self.cfg.rtol,
                                atol=self.cfg.atol, max_step=min(ms, 1.0))
                if not sol.success:
                    raise NumericalFailure(f"ODE transport failed: {sol.message}")
                Y = sol.y[:, -1].reshape(2, -1)
                if renorm:
                    nrm = np.linalg.norm(Y, axis=0)
                    Y = Y / nrm
                    logs = logs + np.log(nrm)
        return Y, logs

    def _propagate_curve(self, pts, t, y0):
        """Carry one vector along a densely sampled curve (spline through the samples)."""
        pts = np.asarray(pts, dtype=complex)
        if pts.size < 2:
            return np.asarray(y0, dtype=complex) / np.linalg.norm(y0), float(np.log(np.linalg.norm(y0)))
        seg = np.abs(np.diff(pts))
        keep = np.concatenate([[True], seg > 0])
        pts = pts[keep]
        s = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(pts)))])
        if pts.size < 4:
            y, lg = self._propagate(pts, t, np.reshape(y0, (2, 1)))
            return y[:, 0], float(lg[0])
        spl = CubicSpline(s, pts)
        coef = np.ascontiguousarray(spl.c)
        knots = s

        def zf(u):
            i = min(max(int(np.searchsorted(knots, u, side="right")) - 1, 0), len(knots) - 2)
            h = u - knots[i]
            c = coef[:, i]
            return ((c[0] * h + c[1]) * h + c[2]) * h + c[3]

        def dzf(u):
            i = min(max(int(np.searchsorted(knots, u, side="right")) - 1, 0), len(knots) - 2)
            h = u - knots[i]
            c = coef[:, i]
            return (3 * c[0] * h + 2 * c[1]) * h + c[2]
        rate = np.sqrt(np.abs(self.potential(pts, t)))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(s))])
        nch = max(1, int(np.ceil(cum[-1] / self.cfg.chunk_growth)))
        cuts = np.interp(np.linspace(0, cum[-1], nch + 1), cum, s)
        cuts[0], cuts[-1] = 0.0, s[-1]
        y = np.asarray(y0, dtype=complex).copy()
        nrm = np.linalg.norm(y)
        y = y / nrm
        lg = float(np.log(nrm))
        rhs = self._rhs(t)(zf, dzf)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi <= lo:
                continue
            sel = (s >= lo) & (s <= hi)
            rmax = float(np.max(rate[sel])) if sel.any() else float(np.max(rate))
            ms = self.cfg.step_bound / max(rmax, 1e-12)
            sol = solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=self.cfg.rtol,
                            atol=self.cfg.atol, max_step=ms)
            if not sol.success:
                raise NumericalFailure(f"ODE transport failed: {sol.message}")
            y = sol.y[:, -1]
            nrm = np.linalg.norm(y)
            y = y / nrm
            lg += float(np.log(nrm))
        return y, lg

    # -- monodromy at double poles ---------------------------------------------------
    def loop_radius(self, p):
        if p == INF:
            return 2.0 * (self.spread + abs(self.center)) + self.spacing
        others = [c for c in self.crit if abs(c - p) > 1e-12]
        dmin = min(abs(c - p) for c in others) if others else 1.0
        return 0.5 * dmin

    def _loop(self, p, n=64):
        r = self.loop_radius(p)
        if p == INF:
            ang = -2 * np.pi * np.linspace(0, 1, n + 1)
            return r * np.exp(1j * ang)
        ang = 2 * np.pi * np.linspace(0, 1, n + 1)
        return complex(p) + r * np.exp(1j * ang)

    def monodromy(self, p, t, at_basepoint=True):
        """Monodromy around a double pole (counterclockwise in its local coordinate)."""
        loop = self._loop(p)
        M = self.transport(loop, t).matrix
        if not at_basepoint:
            return M
        T = self.transport(self.atlas_path(self.z0, loop[0]), t).matrix
        return np.linalg.solve(T, M @ T)

    def predicted_eigenvalues(self, p, t):
        res = self.phi.residue(p).residue
        return -np.exp(res / (2 * t)), -np.exp(-res / (2 * t))

    def monodromy_eigendata(self, p, t):
        """(lambda_signed, lambda_other, eigenline of lambda_signed at the basepoint, M)."""
        if self.phi.pole_order(p) != 2:
            raise ValidationError(f"{p} is not a double pole")
        M = self.monodromy(p, t)
        ev = np.linalg.eigvals(M)
        lam_s, lam_o = self.predicted_eigenvalues(p, t)
        scale = max(abs(lam_s), abs(lam_o), 1.0)
        if abs(ev[0] - ev[1]) < self.cfg.apparent_tol * scale:
            raise ApparentSingularity(f"monodromy eigenvalues collide at {p} for t={t}")
        i = int(np.argmin(np.abs(ev - lam_s)))
        lam = ev[i]
        line = _eigenline(M, lam)
        return complex(lam), complex(ev[1 - i]), line, M

    # -- subdominant solutions -----------------------------------------------------
    def mark_direction(self, pole, j, t):
        """Direction along which the j-th subdominant solution decays, for this t."""
        dirs = self.phi.asymptotic_directions(pole)
        m = self.phi.pole_order(pole)
        shift = 2 * np.angle(t) / (m - 2)
        return float(dirs[j] + (shift if pole == INF else -shift))

    def _seed_point(self, pole, j, t, factor=1.0):
        alpha = self.mark_direction(pole, j, t)
        u = np.exp(1j * alpha)
        if pole == INF:
            R = self.cfg.seed_factor * self.spread
            # move further out when |t| is large so that the series seed is accurate
            while self.rho(self.center + R * u, t) > self.cfg.rho_inner and R < 1e6:
                R *= 1.5
            return self.center + factor * R * u
        others = [c for c in self.crit if abs(c - pole) > 1e-12]
        r = (min(abs(c - pole) for c in others) if others else 1.0) / self.cfg.seed_factor
        while self.rho(complex(pole) + r * u, t) > self.cfg.rho_inner and r > 1e-8:
            r /= 1.5
        return complex(pole) + r / factor * u

    def subdominant_line(self, pole, j, t, _factor=1.0):
        """Projective line at the basepoint of the solution decaying into sector j."""
        if self.phi.pole_order(pole) < 3:
            raise ValidationError("subdominant solutions live at poles of order >= 3")
        line = self._subdominant(pole, j, t, _factor)
        if self.cfg.check_seed and _factor == 1.0:
            other = self._subdominant(pole, j, t, 2.0)
            if projective_distance(line, other) > self.cfg.line_tol:
                raise SeedUnstable(f"seed at sector {j} of {pole} moves by "
                                   f"{projective_distance(line, other):.2e} when R doubles")
        return line

    def _subdominant(self, pole, j, t, factor):
        zs = self._seed_point(pole, j, t, factor)
        toward = np.exp(1j * self.mark_direction(pole, j, t))
        if pole != INF:
            toward = -toward
        root = np.sqrt(self.phi(zs))
        if (root * toward / t).real < 0:
            root = -root
        S = self.series_log_derivative(np.array([zs]), t, np.array([root]))[0]
        Y, _ = self._propagate(self.atlas_path(zs, self.z0), t, np.array([[1.0], [S]], dtype=complex))
        v = Y[:, 0]
        return v / np.linalg.norm(v)

    # -- WKB series ------------------------------------------------------------------
    def rho(self, z, t):
        z = np.asarray(z, dtype=complex)
        return np.abs(t) * np.abs(self.phi.derivative(z)) / np.abs(self.phi(z)) ** 1.5

    def series_terms(self, z, t, root):
        """Terms t^n u_n, n = -1..N, of the log-derivative of the decaying WKB solution.

        ``root`` is sqrt(phi) on the branch along which the solution decays.
        """
        N = self.cfg.series_order
        K = N + 2
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        ph = _taylor_rational(self.phi.numerator, self.phi.poles, z, K)
        qc = self._correction_taylor(z, K)
        um1 = -_t_sqrt(ph, np.asarray(root, dtype=complex))
        us = [um1]
        u0 = -_t_div(_t_der(um1), 2 * um1)
        us.append(u0)
        u1 = _t_div(qc - _t_der(u0) - _t_mul(u0, u0), 2 * um1)
        us.append(u1)
        for n in range(1, N):
            acc = _t_der(us[n + 1])
            for a in range(0, n + 1):
                acc = acc + _t_mul(us[a + 1], us[n - a + 1])
            us.append(-_t_div(acc, 2 * um1))
        terms = np.array([u[0] * t ** (n - 1) for n, u in enumerate(us)])
        return terms

    def series_log_derivative(self, z, t, root):
        terms = self.series_terms(z, t, root)
        mag = np.abs(terms)
        keep = np.ones_like(mag, dtype=bool)
        # optimal truncation: stop once the terms start to grow (after order 1)
        for n in range(4, mag.shape[0]):
            grow = mag[n] > mag[n - 1]
            keep[n] = keep[n - 1] & ~grow
        return np.sum(np.where(keep, terms, 0), axis=0)

    # -- framings ------------------------------------------------------------------
    def framed_local_system(self, t, label_phase=0.0) -> FramedLineSet:
        """Framing lines at the basepoint; marks are labelled as in the WKB triangulation
        of phi viewed as a base differential rotated by ``label_phase``."""
        t = complex(t)
        subs = []
        for attempt in range(4):
            try:
                return self._framed(t, subs, label_phase)
            except ApparentSingularity:
                new = t * (1 + self.cfg.t_perturb)
                subs.append((t, new))
                t = new
        raise ApparentSingularity("apparent singularity persists after perturbation")

    def _framed(self, t, subs, label_phase):
        geom = Geometry(self.phi, label_phase=label_phase)
        lines, mono = {}, {}
        for key in self.phi.higher_order_poles():
            k = self.phi.pole_order(key) - 2
            for j in range(k):
                lab = geom.boundary_label(key, j)
                lines[lab] = self.subdominant_line(key, j, t)
        for key in self.phi.double_poles():
            lam, _, line, M = self.monodromy_eigendata(key, t)
            lab = geom.puncture_label(key)
            lines[lab] = line
            mono[lab] = M
        return FramedLineSet(self.z0, t, lines, mono, list(subs))


def _eigenline(M, lam):
    a, b = M[0, 0] - lam, M[0, 1]
    c, d = M[1, 0], M[1, 1] - lam
    # use whichever row of M - lam is larger
    if abs(a) + abs(b) >= abs(c) + abs(d):
        v = np.array([-b, a])
    else:
        v = np.array([d, -c])
    return v / np.linalg.norm(v)


# -- cross ratios ----------------------------------------------------------------------

def _det(u, v):
    return u[0] * v[1] - u[1] * v[0]


def cross_ratio(z1, z2, z3, z4):
    """Y = (z1-z2)(z3-z4) / ((z2-z3)(z1-z4)) of four lines given as vectors in C^2."""
    num = _det(z1, z2) * _det(z3, z4)
    den = _det(z2, z3) * _det(z1, z4)
    scale = np.prod([np.linalg.norm(v) for v in (z1, z2, z3, z4)])
    if abs(den) < 1e-13 * scale or abs(num) < 1e-13 * scale:
        raise DegenerateQuadrilateral("two framing lines coincide")
    return complex(num / den)


def line_of(value):
    """Vector representative of a point of P^1 (None or inf gives infinity)."""
    if value is None or (isinstance(value, float) and math.isinf(value)):
        return np.array([1.0, 0.0], dtype=complex)
    return np.array([value, 1.0], dtype=complex)


def quadrilateral(T, j):
    """Marks (c1, c2, c3, c4) counterclockwise with arc j joining c1 and c3, plus the
    four sides as (triangle, position, reversed)."""
    sides = T.sides_of(j)
    if len(sides) != 2:
        raise ValidationError(f"arc {j} does not border two triangle sides")
    (ta, sa), (tb, sb) = sides
    A, B = T.triangles[ta], T.triangles[tb]
    x, y, z = A[sa][1], A[(sa + 1) % 3][1], A[(sa + 2) % 3][1]
    w = B[(sb + 2) % 3][1]
    return (x, w, y, z), dict(c12=(tb, (sb + 1) % 3, False), c23=(tb, (sb + 2) % 3, False),
                              c34=(ta, (sa + 1) % 3, False), c14=(ta, (sa + 2) % 3, True))


def fock_goncharov_eval(lines: FramedLineSet, T, signing=None):
    """Fock-Goncharov coordinates of the framed lines with respect to an ideal triangulation.

    Quadrilaterals are read directly from the triangulation, which is exact on
    unpunctured disks; on punctured surfaces the lifts to the universal cover are
    needed and the call is refused.
    """
    if T.surface.puncture_count:
        raise UnsupportedSurface("coordinates from basepoint lines need an unpunctured disk")
    L = lines.lines if isinstance(lines, FramedLineSet) else lines
    Y = []
    for j in range(T.n_arcs):
        (c1, c2, c3, c4), _ = quadrilateral(T, j)
        Y.append(cross_ratio(L[c1], L[c2], L[c3], L[c4]))
    X = list(Y)
    for inner, outer in T.self_folded_pairs().items():
        X[inner] = Y[inner] * Y[outer]
    return np.array(X)


# -- WKB-edge evaluator --------------------------------------------------------------

@dataclass
class WKBCoordinates:
    """Log Fock-Goncharov coordinates of a saddle-free differential at one t."""
    t: complex
    log_x: np.ndarray
    triangulation: object
    diagnostics: dict

    @property
    def values(self):
        return np.exp(self.log_x)

    def log_monomial(self, coords):
        return complex(np.dot(np.asarray(coords, dtype=float), self.log_x))


def _arc_points(center, r, a0, a1, n):
    return center + r * np.exp(1j * (a0 + (a1 - a0) * np.linspace(0, 1, n + 1)))


class WKBEvaluator:
    """Evaluates log X_j(t) along the trajectories of a fixed WKB triangulation.

    Only differentials without double poles are handled (one subdominant solution per
    boundary mark).  The triangulation data are computed once and reused for every t.
    """

    def __init__(self, psi: QuadraticDifferential, label_phase=0.0, cfg: OperConfig = OperConfig(),
                 fcfg: FoliationConfig = FoliationConfig(), T=None, data=None):
        if psi.double_poles():
            raise UnsupportedSurface("the trajectory evaluator needs a surface without punctures")
        self.psi = psi
        self.oper = OperFamily(psi, cfg=cfg)
        self.cfg = cfg
        if data is None or T is None:
            T, _, _, data = wkb_triangulation(psi, fcfg, with_data=True, label_phase=label_phase)
        self.T = T
        self.data = data
        geom = data["geom"]
        self.geom = geom
        # each corner: path from tail end to head end, split at the point nearest its zero
        self.parts = {}
        self.mid = {}
        for (i, k, tail, head) in data["corners"]:
            P = data["corner_paths"][(i, k)]
            m = int(np.argmin(np.abs(P - geom.zeros[i])))
            self.mid[(i, k)] = P[m]
            self.parts[(i, k, "tail")] = (tail, P[:m + 1])
            self.parts[(i, k, "head")] = (head, P[m:][::-1])
        self.mark_pole = {}
        for key in psi.higher_order_poles():
            for j in range(psi.pole_order(key) - 2):
                self.mark_pole[geom.boundary_label(key, j)] = key

    def _radius(self, key, z):
        return np.abs(z) if key == INF else np.abs(z - key)

    def _anchor(self, key, part, R):
        """First crossing of the anchor circle from the mark end; returns (point, index)."""
        r = self._radius(key, part)
        outer = (r >= R) if key == INF else (r <= R)
        if outer.all():
            idx = len(part) - 1
        else:
            idx = int(np.argmin(outer))     # first point inside the anchor circle
            if idx == 0:
                return part[0], 0
        a, b = part[idx - 1], part[idx]
        ra, rb = r[idx - 1], r[idx]
        s = (ra - R) / (ra - rb) if ra != rb else 0.0
        return a + s * (b - a), idx

    def _anchor_radius(self, key, parts, t):
        """Radius at which the series is trusted on every part reaching this mark."""
        Rs = []
        lim = []
        for part in parts:
            r = self._radius(key, part)
            rho = self.oper.rho(part, t)
            bad = np.nonzero(rho > self.cfg.rho_anchor)[0]
            first_bad = bad[0] if bad.size else len(part) - 1
            Rs.append(r[max(first_bad - 1, 0)])
            lim.append(r[0])
        if key == INF:
            return float(min(max(Rs), min(lim)))
        return float(max(min(Rs), max(lim)))

    def _branch(self, z, toward_mark):
        # along a horizontal trajectory the decaying solution has W increasing toward the mark
        root = np.sqrt(self.psi(z))
        return root if (root * toward_mark).real > 0 else -root

    def _track(self, zs, root0):
        q = np.sqrt(self.psi(zs))
        q = np.asarray(q, dtype=complex)
        out = np.empty_like(q)
        ref = root0
        for n in range(q.size):
            out[n] = q[n] if (q[n] * np.conj(ref)).real >= 0 else -q[n]
            ref = out[n]
        return out

    def _integrate_series(self, pts, t, root0):
        """Integral of the series log-derivative along a polyline; returns (integral, end root)."""
        pts = np.asarray(pts, dtype=complex)
        if pts.size < 2:
            return 0j, root0
        a, b = pts[:-1], pts[1:]
        nodes = (0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * _GL_X[None, :]
        flat = nodes.ravel()
        # branch tracking through the ordered nodes (and segment ends)
        seq = np.concatenate([np.column_stack([a, nodes]).ravel(), b[-1:]])
        roots_seq = self._track(seq, root0)
        roots = roots_seq[:-1].reshape(len(a), 1 + len(_GL_X))[:, 1:].ravel()
        S = self.oper.series_log_derivative(flat, t, roots)
        vals = S.reshape(len(a), len(_GL_X))
        integral = np.sum(vals * _GL_W[None, :] * (0.5 * (b - a))[:, None])
        return complex(integral), complex(roots_seq[-1])

    def evaluate(self, t) -> WKBCoordinates:
        t = complex(t)
        if t.real <= 0:
            raise ValidationError("the trajectory evaluator needs Re t > 0")
        by_mark = {}
        for key_part, (mark, part) in self.parts.items():
            by_mark.setdefault(mark, []).append(key_part)
        log_s = {}        # part key -> (unit vector at midpoint, log scale)
        diag = {"rho_seed": [], "ode_points": 0}
        for mark, keys in by_mark.items():
            pole = self.mark_pole[mark]
            parts = [self.parts[k][1] for k in keys]
            R = self._anchor_radius(pole, parts, t)
            center = 0j if pole == INF else complex(pole)
            anchors = []
            for part in parts:
                A, idx = self._anchor(pole, part, R)
                anchors.append((A, idx))
            A0 = anchors[0][0]
            toward0 = (parts[0][max(anchors[0][1] - 1, 0)] - A0)
            if toward0 == 0:
                toward0 = (A0 - center) if pole == INF else (center - A0)
            root_ref = self._branch(A0, toward0 / abs(toward0))
            ang0 = np.angle(A0 - center)
            for (A, idx), part, key in zip(anchors, parts, keys):
                # arc from the reference anchor to this anchor along the anchor circle
                ang = ang0 + np.angle(np.exp(1j * (np.angle(A - center) - ang0)))
                rr = abs(A - center)
                n = max(2, int(np.ceil(abs(ang - ang0) * rr / (0.02 * max(rr, 1e-3)) )))
                arc = _arc_points(center, rr, ang0, ang, n)
                arc[0] = A0
                arc[-1] = A
                I_arc, rootA = self._integrate_series(arc, t, root_ref)
                toward = part[max(idx - 1, 0)] - A
                if toward != 0 and (rootA * toward).real < 0:
                    raise NumericalFailure("decaying branch is inconsistent between anchors")
                # series inward from the anchor while rho stays small
                inner = np.concatenate([[A], part[idx:]])
                rho = self.oper.rho(inner, t)
                bad = np.nonzero(rho > self.cfg.rho_inner)[0]
                stop = int(bad[0]) - 1 if bad.size else len(inner) - 1
                stop = max(stop, 0)
                I_in, rootP = self._integrate_series(inner[:stop + 1], t, rootA)
                P = inner[stop]
                diag["rho_seed"].append(float(self.oper.rho(np.array([P]), t)[0]))
                S = self.oper.series_log_derivative(np.array([P]), t, np.array([rootP]))[0]
                y0 = np.array([1.0, S], dtype=complex)
                rest = inner[stop:]
                diag["ode_points"] += len(rest)
                y, lg = self.oper._propagate_curve(rest, t, y0)
                log_s[key] = (y, lg + I_arc + I_in)
        logW = {}
        for (i, k, tail, head) in self.data["corners"]:
            yt, lt = log_s[(i, k, "tail")]
            yh, lh = log_s[(i, k, "head")]
            d = yt[0] * yh[1] - yt[1] * yh[0]
            if d == 0:
                raise DegenerateQuadrilateral("subdominant solutions coincide")
            logW[(i, k)] = lt + lh + np.log(d)          # W(s_tail, s_head)
        T = self.T
        logx = []
        for j in range(T.n_arcs):
            _, sides = quadrilateral(T, j)

            def side_w(entry):
                ti, pos, rev = entry
                # triangle side (ti, pos) runs head -> tail of corner (ti, pos)
                val = logW[(ti, pos)] + 1j * np.pi
                return val + 1j * np.pi if rev else val
            ly = side_w(sides["c12"]) + side_w(sides["c34"]) - side_w(sides["c23"]) - side_w(sides["c14"])
            logx.append(ly)
        logx = np.array(logx, dtype=complex)
        for inner, outer in T.self_folded_pairs().items():
            logx[inner] = logx[inner] + logx[outer]
        # fold imaginary parts into (-pi, pi]
        logx = logx.real + 1j * np.angle(np.exp(1j * logx.imag))
        return WKBCoordinates(t, logx, T, diag)


def y_function(evaluator: WKBEvaluator, coords, t):
    """Monomial X_gamma at t for gamma given by coordinates over the triangulation arcs."""
    if not any(coords):
        return 1.0 + 0j
    return complex(np.exp(evaluator.evaluate(t).log_monomial(coords)))
