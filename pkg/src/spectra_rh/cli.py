"""Command-line entry point ``spectra-rh``.

Every subcommand reads a JSON document (a differential, or a seed for the cluster
commands), runs one module operation and writes JSON, CSV or SVG.  Emitted JSON
carries ``"schema": "spectra-rh/1"`` and embeds its input, so any output can be
fed back to the command that produced it.
"""
from __future__ import annotations

import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
import functools
from dataclasses import dataclass, fields, replace
from xml.sax.saxutils import escape

import click
import numpy as np

from . import __version__
from .bps import (BPSStructure, compare_compositions, from_differential, random_torus_point,
                  ray_diagram, sector_composition)
from .cluster import Seed, identity_map, is_identity_exact, mutation_map
from .differential import INF, QuadraticDifferential
from .errors import SpectraError, ValidationError
from .foliation import (FoliationConfig, Geometry, choose_reference_phase, hat_basis,
                        integrate_many, prong_seeds, spectrum as run_spectrum)
from .opers import OperConfig, WKBEvaluator
from .rh import RHConfig, RHProblem, check_rh1, check_rh2, check_rh3, rh_report
from .surface import dimension, is_amenable

SCHEMA = "spectra-rh/1"


@dataclass(frozen=True)
class Config:
    ode_tol: float = 1e-12
    theta_tol: float = 1e-10
    quad_tol: float = 1e-13
    line_tol: float = 1e-7
    tol_rh2: float = 1e-3
    grid_per_unit: int = 400
    h_max: float = None
    budget: float = 50.0
    format: str = "json"
    precision: int = 12
    svg_width: int = 640
    svg_height: int = 640
    seed: int = 0

    def __post_init__(self):
        for name in ("ode_tol", "theta_tol", "quad_tol", "line_tol", "tol_rh2", "budget"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"config value {name} must be positive")
        if self.grid_per_unit < 1:
            raise ValidationError("grid_per_unit must be at least 1")
        if self.format not in ("json", "csv", "svg"):
            raise ValidationError(f"unknown format {self.format!r}")

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        doc = _read_json(path)
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known - {"schema"}
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        return cls(**{k: v for k, v in doc.items() if k in known})

    def foliation(self):
        return FoliationConfig(grid_per_unit=self.grid_per_unit, theta_tol=self.theta_tol,
                               budget=self.budget)

    def opers(self):
        return OperConfig(rtol=self.ode_tol, atol=self.ode_tol * 1e-2, line_tol=self.line_tol)

    def rh(self):
        return RHConfig(tol_rh2=self.tol_rh2)


# -- I/O helpers ---------------------------------------------------------------------------

def _read_json(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def load_differential(doc) -> QuadraticDifferential:
    """Accepts a bare differential document or any CLI output embedding one."""
    if isinstance(doc, dict) and "differential" in doc:
        doc = doc["differential"]
    if not isinstance(doc, dict):
        raise ValidationError("expected a JSON object describing a differential")
    phi = QuadraticDifferential.from_dict(doc)
    if doc.get("strict") is False:
        phi = QuadraticDifferential(phi.numerator, phi.poles, phi.signing, strict=False)
    return phi


def load_seed(doc) -> Seed:
    if isinstance(doc, dict) and "seed" in doc:
        doc = doc["seed"]
    try:
        return Seed(np.array(doc["skew"], dtype=int))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed seed: {exc}") from exc


def _cplx(z, digits):
    z = complex(z)
    return [round(z.real, digits), round(z.imag, digits)]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(float(obj.real)), _jsonable(float(obj.imag))]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # unbounded heights and the like: strict JSON has no infinity
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "numerator") and hasattr(obj, "denominator") and not isinstance(obj, int):
        return str(obj)
    return obj


def _emit(ctx, payload, rows=None, svg=None):
    cfg: Config = ctx.obj["config"]
    fmt = ctx.obj["format"] or cfg.format
    if fmt == "svg":
        if svg is None:
            raise ValidationError("this command has no SVG output")
        text = svg
    elif fmt == "csv":
        if rows is None:
            raise ValidationError("this command has no CSV output")
        buf = io.StringIO()
        if rows:
            w = csv.DictWriter(buf, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps({"schema": SCHEMA, **_jsonable(payload)}, indent=2, allow_nan=False)
    out = ctx.obj["out"]
    if out:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        click.echo(text)


def _threads():
    try:
        return max(1, int(os.environ.get("SPECTRA_RH_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    # ordered results regardless of pool size
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _parse_window(text):
    if text is None:
        return (0.0, 1.0)
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError as exc:
        raise ValidationError("--theta-window expects LO,HI") from exc
    return (lo, hi)


def _parse_t_grid(text, default):
    if text is None:
        return list(default)
    out = []
    for tok in text.split(","):
        tok = tok.strip().replace(" ", "")
        try:
            out.append(complex(tok.replace("i", "j")))
        except ValueError as exc:
            raise ValidationError(f"bad t value {tok!r}") from exc
    return out


def _h_max(ctx):
    h = ctx.obj["h_max"]
    return h if h is not None else ctx.obj["config"].h_max


# -- command group ------------------------------------------------------------------------

_SHARED = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="JSON config file."),
    click.option("--out", type=click.Path(), default=None,
                 help="Write output here instead of stdout."),
    click.option("--format", "fmt", type=click.Choice(["json", "csv", "svg"]), default=None),
    click.option("--h-max", type=float, default=None, help="Central charge cutoff."),
    click.option("--theta-window", default=None, help="Phase window LO,HI in units of pi."),
    click.option("--t-grid", default=None,
                 help="Comma separated complex t values, e.g. 0.5,0.3+0.1i."),
    click.option("--seed", type=int, default=None, help="Random seed."),
]


def _apply_shared(ctx, config_path, out, fmt, h_max, theta_window, t_grid, seed):
    if ctx.obj is None:
        ctx.obj = {"config": Config(), "out": None, "format": None, "h_max": None,
                   "window": None, "t_grid": None}
    if config_path is not None:
        ctx.obj["config"] = Config.load(config_path)
    if seed is not None:
        ctx.obj["config"] = replace(ctx.obj["config"], seed=seed)
    for key, val in (("out", out), ("format", fmt), ("h_max", h_max),
                     ("window", theta_window), ("t_grid", t_grid)):
        if val is not None:
            ctx.obj[key] = val


def shared_options(fn):
    """Lets the global flags also appear after the subcommand name."""
    @functools.wraps(fn)
    def wrapper(*args, config_path, out, fmt, h_max, theta_window, t_grid, seed, **kw):
        _apply_shared(click.get_current_context(), config_path, out, fmt, h_max,
                      theta_window, t_grid, seed)
        return fn(*args, **kw)
    for opt in reversed(_SHARED):
        wrapper = opt(wrapper)
    return wrapper


@click.group()
@click.version_option(__version__)
@shared_options
def cli():
    pass


@cli.command()
@click.argument("input", type=click.Path())
@shared_options
@click.pass_context
def analyze(ctx, input):
    """Critical points, residues, asymptotic directions and the marked surface."""
    phi = load_differential(_read_json(input))
    d = ctx.obj["config"].precision
    surf = phi.marked_bordered_surface()
    residues, directions = [], []
    for key, m in phi.all_pole_orders().items():
        if m == 2:
            r = phi.residue(key)
            residues.append({"pole": "inf" if key == INF else _cplx(key, d),
                             "residue": _cplx(r.residue, d)})
        if m >= 3:
            directions.append({"pole": "inf" if key == INF else _cplx(key, d), "order": m,
                               "directions": [round(float(a), d) for a in phi.asymptotic_directions(key)]})
    amen = is_amenable(surf)
    warnings = [] if amen else ["surface is not amenable"]
    for w in warnings:
        click.echo(f"warning: {w}", err=True)
    kind = ("disk" if surf.is_disk else f"genus {surf.genus}, {len(surf.boundary_marks)} boundary")
    desc = f"{kind}, {sum(surf.boundary_marks)} marks" + \
        (f", {surf.puncture_count} punctures" if surf.puncture_count else "")
    payload = {"differential": phi.to_dict(),
               "zeros": [_cplx(z, d) for z in phi.zeros],
               "poles": [{"pole": "inf" if k == INF else _cplx(k, d), "order": m}
                         for k, m in phi.all_pole_orders().items()],
               "residues": residues, "asymptotic_directions": directions,
               "surface": surf.to_dict(), "surface_type": desc, "amenable": amen,
               "n": dimension(surf), "complete": phi.is_complete(), "warnings": warnings}
    _emit(ctx, payload)


def _spectrum_payload(ctx, phi):
    cfg: Config = ctx.obj["config"]
    table = run_spectrum(phi, _parse_window(ctx.obj["window"]), _h_max(ctx), cfg.foliation())
    bps = from_differential(table.basis, table)
    return table, bps


@cli.command()
@click.argument("input", type=click.Path())
@shared_options
@click.pass_context
def spectrum(ctx, input):
    """Saddle connections, ring domains, hat basis and BPS invariants."""
    phi = load_differential(_read_json(input))
    table, bps = _spectrum_payload(ctx, phi)
    rows = [{"theta": s.theta, "Z_re": s.Z.real, "Z_im": s.Z.imag,
             "class": " ".join(map(str, s.class_coords or ())), "closed": s.closed}
            for s in table.saddles]
    _emit(ctx, {"differential": phi.to_dict(), "table": table.to_dict(),
                "basis": table.basis.to_dict(), "classes": [list(c) for c in table.classes()],
                "bps": bps.to_dict()}, rows=rows)


@cli.command()
@click.argument("input", type=click.Path())
@click.option("--theta", type=float, default=0.0, help="Phase (units of pi) of the rotation.")
@shared_options
@click.pass_context
def wkb(ctx, input, theta):
    """WKB triangulation and hat basis at a saddle-free phase."""
    phi = load_differential(_read_json(input))
    hb = hat_basis(phi, ctx.obj["config"].foliation(), theta_ref=theta)
    _emit(ctx, {"differential": phi.to_dict(), "theta": theta, "basis": hb.to_dict()})


@cli.command()
@click.argument("input", type=click.Path())
@shared_options
@click.pass_context
def rays(ctx, input):
    """Ray diagram of the BPS structure."""
    phi = load_differential(_read_json(input))
    _, bps = _spectrum_payload(ctx, phi)
    h = _h_max(ctx)
    diag = ray_diagram(bps, float("inf") if h is None else h)
    rows = [{"phase": r.phase, "height": r.height,
             "classes": ";".join(" ".join(map(str, g)) for g in r.classes)} for r in diag.rays]
    _emit(ctx, {"differential": phi.to_dict(), "bps": bps.to_dict(), "rays": diag.to_dict()},
          rows=rows)


@cli.command()
@click.argument("input", type=click.Path())
@click.option("--sector", nargs=2, type=float, default=(-0.5, 0.5),
              help="Sector LO HI (units of pi), counterclockwise from LO to HI.")
@click.option("--points", type=int, default=5)
@shared_options
@click.pass_context
def wallcross(ctx, input, sector, points):
    """Sector composition of wall-crossing automorphisms, sampled at random torus points."""
    phi = load_differential(_read_json(input))
    _, bps = _spectrum_payload(ctx, phi)
    S = sector_composition(bps, tuple(sector))
    rng = np.random.default_rng(ctx.obj["config"].seed)
    rows, samples = [], []
    for i in range(points):
        x = random_torus_point(bps, rng).values
        y = S(x)
        samples.append({"x": x, "image": y})
        for j in range(bps.rank):
            rows.append({"point": i, "coordinate": j, "x_re": x[j].real, "x_im": x[j].imag,
                         "y_re": y[j].real, "y_im": y[j].imag})
    _emit(ctx, {"differential": phi.to_dict(), "bps": bps.to_dict(), "sector": list(sector),
                "samples": samples}, rows=rows)


@cli.command()
@click.argument("input", type=click.Path())
@click.option("--theta", type=float, default=0.0)
@shared_options
@click.pass_context
def ycoords(ctx, input, theta):
    """Fock-Goncharov coordinates of the WKB triangulation at each t in --t-grid."""
    cfg: Config = ctx.obj["config"]
    phi = load_differential(_read_json(input))
    psi = phi.rotate(np.pi * theta)
    ev = WKBEvaluator(psi, label_phase=theta, cfg=cfg.opers(), fcfg=cfg.foliation())
    ts = _parse_t_grid(ctx.obj["t_grid"], [0.5, 1.0])
    res = _pmap(ev.evaluate, ts)
    rows, samples = [], []
    for t, r in zip(ts, res):
        vals = r.values
        samples.append({"t": t, "values": vals, "log": r.log_x})
        for j, v in enumerate(vals):
            rows.append({"t_re": t.real, "t_im": t.imag, "arc": j, "re": v.real, "im": v.imag})
    _emit(ctx, {"differential": phi.to_dict(), "theta": theta,
                "triangulation": ev.T.to_dict(), "samples": samples}, rows=rows)


def _problem(ctx, phi):
    cfg: Config = ctx.obj["config"]
    return RHProblem(phi, h_max=_h_max(ctx), cfg=cfg.rh(), fcfg=cfg.foliation(), ocfg=cfg.opers())


@cli.command("rh-solve")
@click.argument("input", type=click.Path())
@click.option("--phase", type=float, default=None, help="Ray phase (units of pi); default non-active.")
@shared_options
@click.pass_context
def rh_solve(ctx, input, phase):
    """Tabulate the Riemann-Hilbert solution on a non-active ray."""
    phi = load_differential(_read_json(input))
    prob = _problem(ctx, phi)
    if phase is None:
        phase = choose_reference_phase([r.phase % 1.0 for r in prob.rays().rays])
    ray = np.exp(1j * np.pi * phase)
    ts = _parse_t_grid(ctx.obj["t_grid"], [0.5 * ray, 0.2 * ray])
    samples = _pmap(lambda t: prob.sample(phase, t), ts)
    rows = []
    for s in samples:
        for g, v in s.values.items():
            rows.append({"phase": phase, "t_re": s.t.real, "t_im": s.t.imag,
                         "class": " ".join(map(str, g)), "re": v.real, "im": v.imag})
    _emit(ctx, {"differential": phi.to_dict(), "bps": prob.bps.to_dict(),
                "samples": [s.to_dict() for s in samples]}, rows=rows)


@cli.command("rh-check")
@click.argument("input", type=click.Path())
@click.option("--rays", "rays_opt", default="auto", help="'auto' or MINUS,PLUS phase pair.")
@shared_options
@click.pass_context
def rh_check(ctx, input, rays_opt):
    """Check the jump, small-t and weak large-t conditions."""
    phi = load_differential(_read_json(input))
    prob = _problem(ctx, phi)
    if rays_opt == "auto":
        report = rh_report(prob)
    else:
        try:
            m, p = (float(x) for x in rays_opt.split(","))
        except ValueError as exc:
            raise ValidationError("--rays expects 'auto' or MINUS,PLUS") from exc
        rep1 = check_rh1(prob, m, p)
        n = prob.rank
        basis = [tuple(int(i == k) for i in range(n)) for k in range(n)]
        rep2 = [check_rh2(prob, p, g) for g in basis]
        rep3 = [check_rh3(prob, p, g) for g in basis]
        report = {"RH1": [rep1], "RH2": rep2, "RH3": rep3,
                  "status": {"RH1": "PASS" if rep1["passed"] else "FAIL",
                             "RH2": "PASS" if all(r["passed"] for r in rep2) else "FAIL",
                             "RH3": "ADVISORY"}}
    rows = [{"condition": k, "status": v} for k, v in report["status"].items()]
    _emit(ctx, {"differential": phi.to_dict(), "report": report}, rows=rows)


def _foliation_svg(phi, theta, cfg: Config):
    fcfg = cfg.foliation()
    geom = Geometry(phi.rotate(np.pi * theta), fcfg)
    psi = geom.phi
    curves = []
    for zj in geom.zeros:
        seeds, vs = prong_seeds(psi, zj, 0.0, fcfg.delta_prong * geom.scale)
        for s, v in zip(seeds, vs):
            res = integrate_many(geom, [s], [v], 0.0, 1, record=True, track=False)
            curves.append((np.concatenate([[zj], res["samples"][0]]), "#c0392b"))
    rng = np.random.default_rng(cfg.seed)
    box = geom.scale + (float(np.max(np.abs(geom.crit))) if geom.crit.size else 0.0)
    for _ in range(12):
        z0 = complex(*rng.uniform(-box, box, 2))
        if geom.crit.size and np.min(np.abs(geom.crit - z0)) < 0.05 * geom.scale:
            continue
        v0 = np.sqrt(complex(psi(z0)))
        both = []
        for direction in (1, -1):
            res = integrate_many(geom, [z0], [v0], 0.0, direction, record=True, track=False,
                                 max_steps=2000)
            both.append(res["samples"][0])
        curves.append((np.concatenate([both[1][::-1], both[0][1:]]), "#7f8c8d"))
    W, H = cfg.svg_width, cfg.svg_height
    half = 1.5 * box

    def xy(z):
        return (W / 2 + z.real / half * W / 2, H / 2 - z.imag / half * H / 2)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'viewBox="0 0 {W} {H}">',
             f'<title>{escape(f"horizontal trajectories at phase {theta} pi")}</title>',
             f'<rect width="{W}" height="{H}" fill="white"/>']
    for pts, colour in curves:
        pts = pts[np.abs(pts) < 2 * half]
        if pts.size < 2:
            continue
        d = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(xy, pts))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1" points="{d}"/>')
    for z in geom.zeros:
        x, y = xy(z)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="black"/>')
    for p, _ in geom.fin_poles:
        x, y = xy(p)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="none" stroke="black"/>')
    parts.append("</svg>")
    return "\n".join(parts)


@cli.command("foliation-plot")
@click.argument("input", type=click.Path())
@click.option("--theta", type=float, default=0.0)
@shared_options
@click.pass_context
def foliation_plot(ctx, input, theta):
    """SVG drawing of the horizontal foliation at a phase (critical trajectories in red)."""
    phi = load_differential(_read_json(input))
    svg = _foliation_svg(phi, theta, ctx.obj["config"])
    if (ctx.obj["format"] or "svg") != "svg":
        _emit(ctx, {"differential": phi.to_dict(), "theta": theta, "svg": svg})
    else:
        ctx.obj["format"] = "svg"
        _emit(ctx, None, svg=svg)


def _sample_map(m, n, count, rng):
    from .cluster import random_torus_points
    pts = random_torus_points(n, count, rng)
    return [{"x": x, "image": m(x)} for x in pts]


@cli.command()
@click.argument("input", type=click.Path())
@click.option("-k", "--direction", "k", type=int, required=True, help="0-based mutation index.")
@click.option("--points", type=int, default=5)
@shared_options
@click.pass_context
def mutate(ctx, input, k, points):
    """Mutate a seed and tabulate the mutation map."""
    seed = load_seed(_read_json(input))
    if not 0 <= k < seed.rank:
        raise ValidationError(f"mutation index {k} out of range")
    new, m = mutation_map(seed, k)
    rng = np.random.default_rng(ctx.obj["config"].seed)
    samples = _sample_map(m, seed.rank, points, rng)
    rows = [{"point": i, "coordinate": j, "x_re": s["x"][j].real, "x_im": s["x"][j].imag,
             "y_re": s["image"][j].real, "y_im": s["image"][j].imag}
            for i, s in enumerate(samples) for j in range(seed.rank)]
    payload = {"seed": {"skew": seed.skew.tolist()}, "direction": k,
               "mutated": {"skew": new.skew.tolist()}, "samples": samples}
    if m.exact is not None:
        payload["exact"] = [str(e) for e in m.exact]
    _emit(ctx, payload, rows=rows)


@cli.command("pentagon-check")
@click.argument("input", type=click.Path(), required=False)
@click.option("--points", type=int, default=100)
@shared_options
@click.pass_context
def pentagon_check(ctx, input, points):
    """Check (mu_2 mu_1)^5 = id exactly and the two-versus-three factor identity numerically."""
    seed = load_seed(_read_json(input)) if input else Seed(np.array([[0, 1], [-1, 0]]))
    if seed.rank != 2 or abs(seed.skew[0, 1]) != 1:
        raise ValidationError("pentagon check needs a rank-2 seed with pairing +-1")
    m, cur = identity_map(2), seed
    for i in range(10):
        cur, step = mutation_map(cur, i % 2)
        m = m.then(step)
    exact = bool(is_identity_exact(m))
    # unit-Omega structures on the two sides of the wall, same lattice; with
    # <a, b> = -1 the two-class side has arg Z(a) < arg Z(b)
    skew = seed.skew
    a, b = ((1, 0), (0, 1)) if seed.pair((1, 0), (0, 1)) == -1 else ((0, 1), (1, 0))

    def charges(za, zb):
        Z = np.zeros(2, dtype=complex)
        Z[a.index(1)], Z[b.index(1)] = za, zb
        return Z

    small = BPSStructure(skew, charges(1.0 + 0.2j, 0.2 + 1.0j), {a: 1, b: 1})
    big = BPSStructure(skew, charges(0.6 + 1.0j, 1.0 + 0.6j), {a: 1, b: 1, (1, 1): 1})
    dev = compare_compositions(small, big, (-0.25, 0.75), points, ctx.obj["config"].seed)
    passed = exact and dev < 1e-10
    _emit(ctx, {"seed": {"skew": skew.tolist()}, "periodicity_exact": exact,
                "pentagon_max_relative_deviation": dev, "points": points, "passed": passed},
          rows=[{"check": "periodicity", "value": exact},
                {"check": "pentagon", "value": dev}])
    if not passed:
        ctx.exit(3)


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="spectra-rh", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        return 1
    except SpectraError as exc:
        click.echo(json.dumps({"schema": SCHEMA, "error": type(exc).__name__,
                               "exit_code": exc.exit_code, "message": str(exc)}), err=True)
        return exc.exit_code
    except (ValueError, KeyError, TypeError) as exc:
        # malformed input that slipped past the readers
        click.echo(json.dumps({"schema": SCHEMA, "error": type(exc).__name__,
                               "exit_code": 2, "message": str(exc)}), err=True)
        return 2
    return 0


def entry():
    sys.exit(main())
