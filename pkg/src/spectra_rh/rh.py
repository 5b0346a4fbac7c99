"""Riemann-Hilbert solutions X_r(t) assembled from rotated Y-functions, and checks of
the jump, small-t and large-t conditions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bps import (BPSStructure, _phase_dist, _ray_phase,
                  from_differential, ray_diagram, sector_composition, xi_basepoint)
from .differential import QuadraticDifferential
from .errors import ValidationError
from .foliation import FoliationConfig, hat_basis, spectrum
from .opers import OperConfig, OperFamily, WKBEvaluator, fock_goncharov_eval


class ActiveRay(ValidationError):
    pass


@dataclass(frozen=True)
class RHConfig:
    tol_rh1: tuple = (1e-3, 1e-4)      # tolerance ladder, loosest first
    tol_rh2: float = 1e-3
    rh2_floor: float = 1e-7            # differences below this are integration noise
    small_t: float = 0.05              # |t| = small_t * pi / max |Z_j|
    jump_size: float = 2.5             # Re(Z/t) of the lightest active class at RH1 samples
    rh3_range: tuple = (10.0, 1000.0)
    rh3_points: int = 5
    rh3_slope: float = 10.0
    lines_above: float = 2.0           # |t| beyond which the basepoint-lines evaluator is used
    active_tol: float = 1e-9


@dataclass
class RHSample:
    phase: float
    t: complex
    values: dict                       # class -> X_{r, class}(t)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"phase": self.phase, "t": [self.t.real, self.t.imag],
                "values": [{"class": list(g), "value": [complex(v).real, complex(v).imag]}
                           for g, v in self.values.items()],
                "diagnostics": self.diagnostics}


@dataclass
class _Chamber:
    phase: float
    evaluator: object
    change: np.ndarray      # reference coordinates -> coordinates in this chamber's basis
    psi: QuadraticDifferential


class RHProblem:
    """BPS structure of a differential, its basepoint xi, and the differential itself."""

    def __init__(self, phi: QuadraticDifferential, bps: BPSStructure = None, xi=None, basis=None,
                 h_max=None, cfg: RHConfig = RHConfig(), fcfg: FoliationConfig = FoliationConfig(),
                 ocfg: OperConfig = OperConfig()):
        self.phi = phi
        self.cfg = cfg
        self.fcfg = fcfg
        self.ocfg = ocfg
        if bps is None or basis is None:
            table = spectrum(phi, h_max=h_max, cfg=fcfg)
            basis = table.basis
            bps = from_differential(basis, table)
        self.basis = basis
        self.bps = bps
        if not bps.is_convergent():
            raise ValidationError("BPS structure must have finite support")
        self.xi = xi if xi is not None else xi_basepoint(bps)
        self._chambers = {}

    @property
    def rank(self):
        return self.bps.rank

    def rays(self):
        return ray_diagram(self.bps, tol=self.cfg.active_tol)

    def is_active(self, phase):
        return any(_phase_dist(_ray_phase(self.bps.Z(g)), phase) < self.cfg.active_tol
                   for g in self.bps.active())

    # -- chambers ----------------------------------------------------------------------
    def chamber(self, phase):
        key = round(float(phase) % 2.0, 12)
        if key in self._chambers:
            return self._chambers[key]
        if self.is_active(phase):
            raise ActiveRay(f"ray at phase {phase} carries active classes")
        hb = hat_basis(self.phi, self.fcfg, theta_ref=phase)
        # express the chamber basis through periods in the reference basis
        rows = [self.basis.decompose(z, self.fcfg.class_bound) for z in hb.periods]
        M = np.array(rows, dtype=int)                   # chamber vector j = sum_k M[j,k] e_k
        if round(abs(np.linalg.det(M))) != 1:
            raise ValidationError("chamber basis is not unimodular in the reference lattice")
        change = np.rint(np.linalg.inv(M.T)).astype(int)
        psi = self.phi.rotate(np.pi * phase)
        ev = WKBEvaluator(psi, label_phase=phase, cfg=self.ocfg, fcfg=self.fcfg,
                          T=hb.triangulation, data=hb.wkb_data)
        ch = _Chamber(phase, ev, change, psi)
        self._chambers[key] = ch
        return ch

    def _log_y_basis(self, ch: _Chamber, tp):
        """Log coordinates in the chamber's own basis at the rotated parameter tp."""
        if abs(tp) <= self.cfg.lines_above:
            return ch.evaluator.evaluate(tp).log_x, {"method": "trajectory"}
        op = OperFamily(ch.psi, cfg=self.ocfg)
        lines = op.framed_local_system(tp, label_phase=ch.phase)
        X = fock_goncharov_eval(lines, ch.evaluator.T)
        return np.log(X), {"method": "lines", "substitutions": lines.substitutions}

    def log_y(self, phase, t):
        """log Y_{phi_theta, e_k}(e^{-i pi theta} t) for the reference basis classes e_k."""
        ch = self.chamber(phase)
        tp = complex(t) * np.exp(-1j * np.pi * phase)
        if tp.real <= 0:
            raise ValidationError(f"t = {t} is outside the half-plane of the ray at phase {phase}")
        logx, diag = self._log_y_basis(ch, tp)
        # e_k = sum_j change[k, j] (chamber vector j)
        return ch.change @ logx, diag

    def x_function(self, phase, g, t):
        g = tuple(int(c) for c in g)
        if not any(g):
            if self.is_active(phase):
                raise ActiveRay(f"ray at phase {phase} carries active classes")
            return 1.0 + 0j
        ly, _ = self.log_y(phase, t)
        return complex(self.xi(g) * np.exp(np.dot(g, ly)))

    def sample(self, phase, t, classes=None) -> RHSample:
        ly, diag = self.log_y(phase, t)
        classes = classes or [tuple(int(i == k) for i in range(self.rank)) for k in range(self.rank)]
        vals = {tuple(g): complex(self.xi(g) * np.exp(np.dot(g, ly))) for g in classes}
        return RHSample(float(phase), complex(t), vals, diag)

    def basis_values(self, phase, t):
        ly, _ = self.log_y(phase, t)
        return np.array([self.xi(tuple(int(i == k) for i in range(self.rank))) for k in range(self.rank)]) \
            * np.exp(ly)

    # -- default sample points ---------------------------------------------------------
    def small_t(self):
        return self.cfg.small_t * np.pi / float(np.max(np.abs(self.basis.periods)))

    def rh1_samples(self, phase_minus, phase_plus, modulus=None):
        """t values in both half-planes where the lightest active class in the sector has
        Re(Z/t) equal to the configured jump size (one on each side of the sector)."""
        modulus = self.small_t() if modulus is None else modulus
        lo, hi = phase_plus, phase_minus
        act = [g for g in self.bps.active()
               if 0 < (_ray_phase(self.bps.Z(g)) - lo) % 2.0 < (hi - lo) % 2.0]
        if not act:
            mid = lo + ((hi - lo) % 2.0) / 2
            return [modulus * np.exp(1j * np.pi * mid)]
        zmin = min(abs(self.bps.Z(g)) for g in act)
        eps = np.arcsin(min(self.cfg.jump_size * modulus / zmin, 1.0))
        out = []
        for ang in (np.pi * hi - np.pi / 2 + eps, np.pi * lo + np.pi / 2 - eps):
            t = modulus * np.exp(1j * ang)
            if (t * np.exp(-1j * np.pi * lo)).real > 0 and (t * np.exp(-1j * np.pi * hi)).real > 0:
                out.append(t)
        if not out:
            raise ValidationError("sector too wide for a visible jump at this |t|")
        return out


# -- checks ----------------------------------------------------------------------------

def check_rh1(problem: RHProblem, phase_minus, phase_plus, t_set=None):
    """Compare X_{r-}(t) with S(sector)(X_{r+}(t)); the sector runs counterclockwise from
    r+ to r-."""
    cfg = problem.cfg
    t_set = problem.rh1_samples(phase_minus, phase_plus) if t_set is None else list(t_set)
    S = sector_composition(problem.bps, (phase_plus, phase_minus))
    rows = []
    worst = 0.0
    for t in t_set:
        xp = problem.basis_values(phase_plus, t)
        xm = problem.basis_values(phase_minus, t)
        pred = S(xp)
        dev = np.abs(pred - xm) / np.abs(xm)
        jump = np.abs(xm - xp) / np.abs(xm)
        rows.append({"t": [complex(t).real, complex(t).imag], "deviation": dev.tolist(),
                     "jump": jump.tolist()})
        worst = max(worst, float(np.max(dev)))
    tier = next((tol for tol in sorted(cfg.tol_rh1) if worst < tol), None)
    return {"condition": "RH1", "phase_minus": phase_minus, "phase_plus": phase_plus,
            "samples": rows, "max_deviation": worst, "tier": tier,
            "passed": tier is not None and tier <= min(cfg.tol_rh1)}


def eventually_decreasing(seq, floor):
    """True when the second half of the sequence never increases by more than ``floor``."""
    seq = list(seq)
    start = len(seq) // 2
    return all(b <= a or b <= floor for a, b in zip(seq[start:-1], seq[start + 1:]))


def check_rh2(problem: RHProblem, phase, g, t_sequence=None):
    cfg = problem.cfg
    g = tuple(int(c) for c in g)
    if t_sequence is None:
        t_sequence = [0.3 * 2.0 ** -k for k in range(7)]
    ray = np.exp(1j * np.pi * phase)
    Z = problem.bps.Z(g)
    xi = problem.xi(g)
    errs = []
    for tm in t_sequence:
        t = tm * ray if np.isrealobj(tm) else complex(tm)
        if not any(g):
            errs.append(0.0)
            continue
        ly, _ = problem.log_y(phase, t)
        errs.append(float(abs(xi * np.exp(Z / t + np.dot(g, ly)) - xi)))
    dec = eventually_decreasing(errs, cfg.rh2_floor)
    return {"condition": "RH2", "phase": phase, "class": list(g), "errors": errs,
            "eventually_decreasing": dec, "final": errs[-1],
            "passed": dec and errs[-1] < cfg.tol_rh2}


def slope_fit(ts, values):
    x = np.log(np.abs(np.asarray(ts)))
    y = np.log(np.abs(np.asarray(values)))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), resid


def check_rh3(problem: RHProblem, phase, g, t_grid=None):
    """Weak large-t diagnostic: slope of log|X| against log|t| (advisory only)."""
    cfg = problem.cfg
    g = tuple(int(c) for c in g)
    if t_grid is None:
        t_grid = np.geomspace(cfg.rh3_range[0], cfg.rh3_range[1], cfg.rh3_points)
    ray = np.exp(1j * np.pi * phase)
    if not any(g):
        slope, resid = 0.0, 0.0
        vals = [1.0] * len(t_grid)
    else:
        vals = [problem.x_function(phase, g, tm * ray) for tm in t_grid]
        slope, resid = slope_fit(t_grid, vals)
    return {"condition": "RH3", "phase": phase, "class": list(g), "slope": slope,
            "residual": resid, "advisory": True, "weak": True,
            "passed": bool(abs(slope) < cfg.rh3_slope),
            "values": [[complex(v).real, complex(v).imag] for v in vals]}


def auto_rays(problem: RHProblem, width=0.01):
    """(phase_minus, phase_plus) pairs tightly bracketing each active ray in [0, 1)."""
    out = []
    for r in problem.rays().rays:
        if r.phase >= 1.0:
            continue
        out.append((r.phase + width, r.phase - width))
    return out


def rh_report(problem: RHProblem, width=0.01, rh2_phase=None):
    """Full structured report: RH1 across every active ray in the upper half plane, RH2 on
    every basis class along a non-active ray, weak RH3 on the same ray."""
    rays = auto_rays(problem, width)
    rh1 = [check_rh1(problem, m, p) for m, p in rays]
    phases = [r.phase % 1.0 for r in problem.rays().rays]
    if rh2_phase is None:
        from .foliation import choose_reference_phase
        rh2_phase = choose_reference_phase(phases)
    n = problem.rank
    basis = [tuple(int(i == k) for i in range(n)) for k in range(n)]
    rh2 = [check_rh2(problem, rh2_phase, g) for g in basis]
    rh3 = [check_rh3(problem, rh2_phase, g) for g in basis]
    return {"RH1": rh1, "RH2": rh2, "RH3": rh3,
            "status": {"RH1": "PASS" if all(r["passed"] for r in rh1) else "FAIL",
                       "RH2": "PASS" if all(r["passed"] for r in rh2) else "FAIL",
                       "RH3": "ADVISORY"}}
