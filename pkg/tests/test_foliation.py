import numpy as np
import pytest

from spectra_rh.differential import INF, QuadraticDifferential, continue_periods
from spectra_rh.foliation import (ClassAmbiguity, bps_invariants, critical_prongs, find_saddles,
                                  hat_basis, integrate_trajectory, is_generic, is_saddle_free,
                                  spectrum, wkb_triangulation)
from spectra_rh.surface import dimension, exchange_matrix, polygon_triangulation

from conftest import a1, a2

# constant term (times i) where the two A2 basis periods become parallel; located by
# continuing the hat-basis periods in the constant term and solving arg Z1 = arg Z2
WALL = 1.8304406077635744


def test_vertical_saddle_trajectory_hits_zeros():
    for direction in (1, -1):
        tr = integrate_trajectory(a1(), 0.0, 0.5, direction)
        assert tr.termination == "zero-hit"
        assert min(abs(tr.samples[-1] - 1), abs(tr.samples[-1] + 1)) < 1e-3


def test_trajectory_escapes_along_asymptotic_direction():
    phi = QuadraticDifferential(np.array([1, 0]))
    tr = integrate_trajectory(phi, 1.0, 0.0)
    assert tr.termination == "pole-sector"
    end = np.angle(tr.samples[-1])
    dirs = phi.asymptotic_directions(INF)
    assert np.min(np.abs(np.angle(np.exp(1j * (dirs - end))))) < 0.1


def test_closed_trajectory_around_real_residue_pole():
    phi = QuadraticDifferential(np.array([-1]), ((0, 2),), strict=False)
    tr = integrate_trajectory(phi, 1.0, 0.0)
    assert tr.termination == "closed"
    assert np.allclose(np.abs(tr.samples), 1.0, atol=1e-6)


def test_trajectory_is_straight_in_distinguished_coordinate():
    phi = a2(1j)
    tr = integrate_trajectory(phi, 0.3 + 0.2j, 0.13)
    z = tr.samples
    mids, dz = (z[1:] + z[:-1]) / 2, np.diff(z)
    root = np.sqrt(phi(mids))
    root = np.where((root * np.conj(np.sqrt(phi(z[0])))).real >= 0, root, -root)
    for i in range(1, root.size):
        if (root[i] * np.conj(root[i - 1])).real < 0:
            root[i:] *= -1
    w = np.cumsum(root * dz) * np.exp(-1j * np.pi * 0.13)
    assert np.max(np.abs(w.imag)) < 1e-4 * np.max(np.abs(w))


def test_prongs_of_z_are_horizontal():
    phi = QuadraticDifferential(np.array([1, 0]))
    pts = critical_prongs(phi, 0.0, 0.0)
    ang = np.sort(np.mod(np.angle(pts), 2 * np.pi))
    assert np.allclose(np.diff(ang), 2 * np.pi / 3)
    for p in pts:
        u = p / abs(p)
        assert abs(np.angle(phi(p) * u ** 2)) < 1e-9


def test_prongs_rotate_with_the_differential():
    phi = a2(1j)
    z0 = phi.zeros[0]
    a = critical_prongs(phi, z0, 0.2)
    b = critical_prongs(phi.rotate(0.2 * np.pi), z0, 0.0)
    assert np.allclose(np.sort_complex(a), np.sort_complex(b))


def test_a1_spectrum(a1_spectrum):
    table, bps = a1_spectrum
    assert len(table.saddles) == 1
    s = table.saddles[0]
    assert abs(s.theta - 0.5) < 1e-8
    assert abs(abs(s.Z) - np.pi) < 1e-8 and abs(s.Z.real) < 1e-8
    assert bps.omega == {(1,): 1, (-1,): 1}


def test_rotated_spectrum_shifts():
    th = 0.1
    table = find_saddles(a1().rotate(np.pi * th), (0, 1))
    assert len(table.saddles) == 1
    assert abs(table.saddles[0].theta - (0.5 - th)) < 1e-8


def test_saddle_free_checks():
    ok, _ = is_saddle_free(a1())
    assert ok
    ok, _ = is_saddle_free(a1().rotate(np.pi / 4))
    assert ok
    ok, witness = is_saddle_free(a1().rotate(np.pi / 2))
    assert not ok and abs(witness.theta) < 1e-8


def test_a1_triangulation_is_square():
    T, signing, _ = wkb_triangulation(a1())
    assert T.n_arcs == 1 and T.surface.boundary_marks == (4,)
    assert T == polygon_triangulation(4, [(0, 2)]) or T == polygon_triangulation(4, [(1, 3)])


def test_cubic_triangulation_is_pentagon():
    phi = QuadraticDifferential(np.array([1, 0, 0, 1]))
    assert is_saddle_free(phi)[0]
    T, _, _ = wkb_triangulation(phi)
    assert T.n_arcs == 2 == dimension(T.surface)
    assert abs(exchange_matrix(T)[0, 1]) == 1


def test_a1_hat_basis():
    hb = hat_basis(a1())
    assert hb.rank == 1
    assert abs(hb.periods[0] - 1j * np.pi) < 1e-8


def test_a2_counts_and_additivity(a2_small, a2_big):
    small, big = a2_small[0], a2_big[0]
    assert len(small.classes()) == 2
    assert len(big.classes()) == 3
    Z = big.basis.periods
    assert np.all(Z.imag >= 0)
    bound = next(s for s in big.saddles if s.class_coords == (1, 1))
    assert abs(bound.Z - (Z[0] + Z[1])) < 1e-8


def test_a2_omega(a2_small, a2_big):
    assert a2_small[1].omega == {g: 1 for g in [(1, 0), (-1, 0), (0, 1), (0, -1)]}
    assert a2_big[1].omega == {g: 1 for g in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)]}


def test_phase_period_consistency(a2_big):
    for s in a2_big[0].saddles:
        off = np.angle(s.Z) / np.pi - s.theta
        assert abs(off - np.round(off)) < 1e-8


def test_wall_tuning_and_genericity():
    phi0 = a2(1j)
    hb = hat_basis(phi0)
    Z, _ = continue_periods(phi0, a2(1j * WALL), [s["period_path"] for s in hb.strips], steps=60)
    assert abs(np.angle(Z[0] / Z[1])) < 1e-12
    phi = a2(1j * WALL)
    with pytest.raises(ClassAmbiguity):
        spectrum(phi)
    table = find_saddles(phi)
    assert len(table.saddles) == 2
    for s, g in zip(table.saddles, [(1, 0), (0, 1)]):
        s.class_coords = g
    assert not is_generic(table)


def test_generic_perturbation_of_wall():
    table = spectrum(a2(1j * WALL + 0.05))
    assert is_generic(table)
    assert sorted(bps_invariants(table)) == [(-1, 0), (0, -1), (0, 1), (1, 0)]


def test_omega_symmetry_and_bound(a2_big):
    om = bps_invariants(a2_big[0])
    for g, v in om.items():
        assert om[tuple(-c for c in g)] == v and abs(v) <= 2
