import numpy as np
import pytest
import sympy as sp

from spectra_rh.differential import (INF, NonSimpleZero, NotDoublePole, PeriodPath,
                                     QuadraticDifferential, SheetAmbiguity, continue_periods,
                                     period, straight_period)
from spectra_rh.errors import ValidationError


def qd(num, poles=(), strict=True):
    return QuadraticDifferential(np.array(num, dtype=complex), tuple(poles), strict=strict)


def test_critical_points_z():
    phi = qd([1, 0])
    assert np.allclose(phi.zeros, [0])
    assert phi.order_at_infinity == 5


def test_critical_points_a1():
    phi = qd([1, 0, -1])
    assert np.allclose(sorted(phi.zeros.real), [-1, 1])
    assert phi.order_at_infinity == 6


def test_critical_points_with_double_pole():
    phi = qd([1, 0], [(2, 2)])
    assert np.allclose(phi.zeros, [0])
    assert phi.all_pole_orders() == {2 + 0j: 2, INF: 3}


@pytest.mark.parametrize("num, poles", [([1, 0], []), ([1, 0, -1], []), ([1, 0], [(2, 2)]),
                                        ([1, 0, 3], [(0, 2), (1, 2)]), ([1, 0, 0, 1], [])])
def test_degree_identity(num, poles):
    assert qd(num, poles).degree_identity() == -4


def test_non_simple_zero_rejected():
    with pytest.raises(NonSimpleZero):
        qd([1, -2, 1])


def test_residue_unit_double_pole():
    phi = qd([1], [(0, 2)], strict=False)
    assert np.isclose(phi.residue(0, 1).residue, 4j * np.pi)
    assert np.isclose(phi.residue(0, -1).residue, -4j * np.pi)


def test_residue_negative_coefficient_is_real():
    res = qd([-0.25], [(0, 2)], strict=False).residue(0, 1).residue
    assert np.isclose(abs(res.real), 2 * np.pi) and abs(res.imag) < 1e-12


def test_residue_at_infinity_matches_series():
    phi = qd([1, 0, 3], [(0, 2), (1, 2)])
    w = sp.symbols("w")
    z = 1 / w
    local = sp.simplify(w ** -4 * (z ** 2 + 3) / (z ** 2 * (z - 1) ** 2))
    r = complex(sp.limit(local * w ** 2, w, 0))
    assert phi.pole_order(INF) == 2
    assert np.isclose(phi.residue(INF, 1).residue, 4j * np.pi * np.sqrt(r))
    # same number from the explicit chart change
    assert np.isclose(phi.at_infinity().residue(0, 1).residue, phi.residue(INF, 1).residue)


def test_residue_squared_law():
    phi = qd([1, 0, 3], [(0, 2), (1, 2)])
    for p in (0, 1):
        d = phi.residue(p)
        assert np.isclose(d.residue ** 2, -16 * np.pi ** 2 * d.r)


def test_residue_requires_double_pole():
    with pytest.raises(NotDoublePole):
        qd([1, 0, -1]).residue(INF)


def test_rotation():
    phi = qd([1, 0, -3, 1j])
    assert np.allclose(phi.rotate(np.pi).numerator, phi.numerator)
    assert np.allclose(phi.rotate(np.pi / 2).numerator, -phi.numerator)


def test_directions_at_infinity_for_z():
    dirs = qd([1, 0]).asymptotic_directions(INF)
    assert np.allclose(dirs, [0, 2 * np.pi / 3, 4 * np.pi / 3])


@pytest.mark.parametrize("num, poles", [([1, 0], []), ([1, 0, -1], []), ([1, 0, 0, 1], []),
                                        ([2 - 1j, 0, 1, 5], [])])
def test_directions_are_horizontal_rays(num, poles):
    # along each direction phi(z) dz^2 with dz radial is real positive for large |z|
    phi = qd(num, poles)
    for a in phi.asymptotic_directions(INF):
        u = np.exp(1j * a)
        val = phi(1e4 * u) * u ** 2
        assert abs(np.angle(val)) < 1e-3


def test_single_direction_at_order_three_pole():
    phi = qd([-1, 1], [(0, 3)])            # (1 - z) / z^3 has a0 = 1 at 0
    assert np.allclose(phi.asymptotic_directions(0), [0.0])


def test_directions_rotate_under_scaling():
    phi = qd([1, 0])
    th = 0.3
    rot = phi.rotate(th).asymptotic_directions(INF)
    base = np.mod(phi.asymptotic_directions(INF) + 2 * th / 3, 2 * np.pi)
    assert np.allclose(np.sort(rot), np.sort(base))


@pytest.mark.parametrize("num, poles, marks, punct", [
    ([1, 0, 0, 1], [], (5,), 0), ([1, 0, -1], [], (4,), 0), ([1, 0], [(2, 2)], (1,), 1)])
def test_marked_surface(num, poles, marks, punct):
    s = qd(num, poles).marked_bordered_surface()
    assert s.boundary_marks == marks and s.puncture_count == punct


def test_a1_period_closed_form():
    phi = qd([1, 0, -1])
    Z = period(phi, PeriodPath((-1, 1), 1j))
    assert abs(Z - 1j * np.pi) < 1e-10
    assert abs(period(phi, PeriodPath((1, -1), 1j)) + Z) < 1e-10
    assert abs(period(phi, PeriodPath((-1, 1), -1j)) + Z) < 1e-10


def test_period_bent_path_agrees():
    phi = qd([1, 0, -1])
    Z = period(phi, PeriodPath((-1, 0.4j, 1), 1j))
    assert abs(Z - 1j * np.pi) < 1e-10


def test_period_rotation_law():
    phi = qd([1, 0, -3, 1j])
    a, b = phi.zeros[:2]
    Z = straight_period(phi, a, b)
    th = 0.37
    ref = np.sqrt(complex(phi((a + b) / 2))) * np.exp(-1j * th)
    Zr = period(phi.rotate(th), PeriodPath((a, b), ref))
    assert abs(Zr - np.exp(-1j * th) * Z) < 1e-10


def test_period_converges_with_tolerance():
    phi = qd([1, 0, -3, 1j])
    a, b = phi.zeros[:2]
    coarse = period(phi, PeriodPath((a, b)), tol=1e-8)
    fine = period(phi, PeriodPath((a, b)), tol=1e-13)
    assert abs(coarse - fine) < 1e-7


def test_sheet_ambiguity():
    phi = qd([1, 0, -1, 0])                 # zeros at -1, 0, 1
    with pytest.raises(SheetAmbiguity):
        period(phi, PeriodPath((-1, 1)))


def test_continue_periods_scaling_family():
    # z^2 - c has period i pi c between its zeros
    Z, _ = continue_periods(qd([1, 0, -1]), qd([1, 0, -4]), [PeriodPath((-1, 1), 1j)])
    assert abs(Z[0] - 4j * np.pi) < 1e-9


def test_continue_periods_needs_same_poles():
    with pytest.raises(ValidationError):
        continue_periods(qd([1, 0], [(2, 2)]), qd([1, 0], [(3, 2)]), [])


def test_json_round_trip():
    phi = qd([1, 0, 3], [(0, 2), (1, 2)])
    back = QuadraticDifferential.from_dict(phi.to_dict())
    assert np.allclose(back.numerator, phi.numerator) and back.poles == phi.poles


def test_malformed_json():
    with pytest.raises(ValidationError):
        QuadraticDifferential.from_dict({"poles": []})
