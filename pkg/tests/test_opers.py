import numpy as np
import pytest

from spectra_rh.differential import INF, QuadraticDifferential
from spectra_rh.errors import ValidationError
from spectra_rh.foliation import wkb_triangulation
from spectra_rh.opers import (DegenerateQuadrilateral, OperConfig, OperFamily, WKBEvaluator,
                              cross_ratio, fock_goncharov_eval, line_of, projective_distance,
                              y_function)

from conftest import a1

CONST = QuadraticDifferential(np.array([1.0]), strict=False)
AIRY = QuadraticDifferential(np.array([1.0, 0.0]))


def double_pole(a, sign=1):
    return QuadraticDifferential(np.array([a]), ((0, 2),), ((0, sign),), strict=False)


def test_constant_potential_transport():
    op = OperFamily(CONST)
    L = 1.7
    M = op.transport([0, L], 1.0).matrix
    want = np.array([[np.cosh(L), np.sinh(L)], [np.sinh(L), np.cosh(L)]])
    assert np.allclose(M, want, rtol=1e-10, atol=1e-10)


def test_vanishing_potential_transport():
    # t so large that t^-2 vanishes in double precision
    M = OperFamily(CONST).transport([0, 1], 1e20).matrix
    assert np.allclose(M, [[1, 1], [0, 1]], atol=1e-12)


def test_determinant_and_concatenation():
    op = OperFamily(a1())
    rng = np.random.default_rng(2)
    for t in (1.0, 0.4 + 0.2j):
        for _ in range(3):
            a, b, c = rng.uniform(-2, 2, 3) + 1j * rng.uniform(0.3, 2, 3)
            p1, p2 = op.transport([a, b], t), op.transport([b, c], t)
            whole = op.transport([a, b, c], t)
            assert whole.det_error < 1e-9
            assert np.allclose((p2 @ p1).matrix, whole.matrix, rtol=1e-9, atol=1e-9 * np.abs(whole.matrix).max())


def test_path_independence():
    op = OperFamily(a1())
    direct = op.transport([0.5j, 2 + 0.5j], 0.8).matrix
    detour = op.transport([0.5j, 1j + 0.3, 1.5j + 1.2, 2 + 0.5j], 0.8).matrix
    assert np.allclose(direct, detour, rtol=1e-8, atol=1e-8 * np.abs(direct).max())


def test_potential_examples():
    P = QuadraticDifferential(np.array([1.0, 0.0, -1.0]))
    op = OperFamily(P)
    z, t = 0.3 + 0.7j, 0.6 - 0.2j
    assert op.potential(z, t) == pytest.approx((z ** 2 - 1) / t ** 2)
    a = 1.5 + 0.5j
    op = OperFamily(double_pole(a))
    assert op.potential(z, t) == pytest.approx(a / (t ** 2 * z ** 2) - 1 / (4 * z ** 2))
    corr = op.correction(z)
    assert op.potential(z, 2 * t) - corr == pytest.approx((op.potential(z, t) - corr) / 4)


@pytest.mark.parametrize("t", [1.0, 1 + 1j, 0.3])
def test_eigenvalue_law(t):
    a = 2.0
    op = OperFamily(double_pole(a))
    res = 4j * np.pi * np.sqrt(a)
    lam, other, line, M = op.monodromy_eigendata(0, t)
    want = sorted([-np.exp(res / (2 * t)), -np.exp(-res / (2 * t))], key=lambda w: abs(w - lam))
    assert abs(lam - want[0]) < 1e-6 * abs(want[0])
    assert abs(other - want[1]) < 1e-6 * abs(want[1])
    assert np.linalg.norm(M @ line - lam * line) < 1e-7


def test_signing_selects_other_eigenline():
    a = 2.0
    lam, other, line, M = OperFamily(double_pole(a)).monodromy_eigendata(0, 1.0)
    lam2, other2, line2, _ = OperFamily(double_pole(a, -1)).monodromy_eigendata(0, 1.0)
    assert lam2 == pytest.approx(other) and other2 == pytest.approx(lam)
    assert projective_distance(line, line2) > 1e-3


def test_non_double_pole_rejected():
    with pytest.raises(ValidationError):
        OperFamily(a1()).monodromy_eigendata(INF, 1.0)


def test_airy_lines_distinct_and_stable():
    op = OperFamily(AIRY)
    lines = [op.subdominant_line(INF, j, 1.0) for j in range(3)]
    for i in range(3):
        for j in range(i + 1, 3):
            assert projective_distance(lines[i], lines[j]) > 1e-6
    far = op.subdominant_line(INF, 0, 1.0, _factor=2.0)
    assert projective_distance(lines[0], far) < 1e-7


def test_sector_rotation_covariance():
    th = 0.3
    op, rot = OperFamily(AIRY), OperFamily(AIRY.rotate(th))
    # pole order at infinity is 5, so directions move by 2 th / 3
    d0 = AIRY.asymptotic_directions(INF)
    d1 = AIRY.rotate(th).asymptotic_directions(INF)
    assert np.allclose(np.sort(np.mod(d1, 2 * np.pi)), np.sort(np.mod(d0 + 2 * th / 3, 2 * np.pi)))
    t = 0.9
    for j in range(3):
        assert rot.mark_direction(INF, j, t) == pytest.approx(op.mark_direction(INF, j, t * np.exp(1j * th)))
        u = rot.subdominant_line(INF, j, t)
        v = op.subdominant_line(INF, j, t * np.exp(1j * th))
        assert projective_distance(u, v) < 1e-7


def test_a1_framing_and_determinism():
    op = OperFamily(a1())
    f1 = op.framed_local_system(1.0)
    f2 = OperFamily(a1()).framed_local_system(1.0)
    assert len(f1.lines) == 4
    for k in f1.lines:
        assert np.array_equal(f1.lines[k], f2.lines[k])


def test_basepoint_independence():
    T, signing, _ = wkb_triangulation(a1())
    x1 = fock_goncharov_eval(OperFamily(a1()).framed_local_system(1.0), T)
    x2 = fock_goncharov_eval(OperFamily(a1(), basepoint=-0.4 + 0.6j).framed_local_system(1.0), T)
    assert np.allclose(x1, x2, rtol=1e-9)


def test_cross_ratio_examples():
    w = 0.7 - 1.3j
    pts = [line_of(0.0), line_of(1.0), line_of(None), line_of(w)]
    assert cross_ratio(*pts) == pytest.approx(-1 / w, rel=1e-14)
    assert cross_ratio(pts[2], pts[3], pts[0], pts[1]) == pytest.approx(-1 / w, rel=1e-14)
    rng = np.random.default_rng(5)
    zs = [line_of(complex(*rng.normal(size=2))) for _ in range(4)]
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    assert cross_ratio(*[A @ z for z in zs]) == pytest.approx(cross_ratio(*zs), rel=1e-10)
    with pytest.raises(DegenerateQuadrilateral):
        cross_ratio(pts[0], pts[0], pts[2], pts[3])


def test_y_function_and_self_convergence():
    ev = WKBEvaluator(a1())
    assert y_function(ev, (0,), 1.0) == 1
    coarse = y_function(ev, (1,), 1.0)
    assert np.isfinite(coarse) and coarse != 0
    fine_cfg = OperConfig(rtol=5e-13, atol=5e-15)
    fine = y_function(WKBEvaluator(a1(), cfg=fine_cfg), (1,), 1.0)
    assert abs(fine - coarse) < 1e-6 * abs(coarse)
    assert y_function(ev, (2,), 1.0) == pytest.approx(coarse ** 2, rel=1e-12)
