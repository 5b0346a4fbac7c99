from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectra_rh.bps import (BPSStructure, TwistedTorusPoint, bps_automorphism, bps_from_dt,
                            character, compare_compositions, dt_from_bps, from_differential,
                            identity, random_torus_point, ray_diagram, ray_map, rebase,
                            sector_composition, twisted_bracket_defect, xi_basepoint)
from spectra_rh.errors import ActiveBoundary, ConflictingFlags, PoleOfMap, ValidationError

SKEW2 = np.array([[0, 1], [-1, 0]])


def a2_structure(Z=(1j, 1 + 1j), big=True):
    om = {(1, 0): 1, (0, 1): 1}
    if big:
        om[(1, 1)] = 1
    return BPSStructure(SKEW2, np.array(Z), om)


def test_from_differential_a1(a1_spectrum):
    bps = a1_spectrum[1]
    assert bps.rank == 1
    assert abs(bps.central_charge[0] - 1j * np.pi) < 1e-8
    assert bps.omega == {(1,): 1, (-1,): 1}


def test_from_differential_a2(a2_big):
    table, bps = a2_big
    again = from_differential(table.basis, table)
    assert again.omega == bps.omega
    assert all(abs(v) <= 2 for v in bps.omega.values())
    assert bps.support_constant() > 0 and bps.is_convergent()


def test_structure_validation():
    with pytest.raises(ValidationError):
        BPSStructure(np.array([[0, 1], [1, 0]]), np.array([1, 1j]), {})
    with pytest.raises(ValidationError):
        BPSStructure(SKEW2, np.array([1, 1j]), {(1, 0): 1, (-1, 0): 2})
    with pytest.raises(ValidationError):
        BPSStructure(SKEW2, np.array([1, -1]), {(1, 1): 1})
    b = a2_structure()
    assert BPSStructure.from_dict(b.to_dict()).omega == b.omega


def test_dt_examples():
    dt = dt_from_bps({(1, 0): 1})
    assert dt[(2, 0)] == Fraction(1, 4)
    assert dt[(1, 0)] == 1
    prim = {(1, 0): 1, (0, 1): -2, (1, 1): 1}
    dt = dt_from_bps(prim)
    assert all(dt[g] == v for g, v in prim.items())


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.tuples(st.integers(-6, 6), st.integers(-6, 6)).filter(any),
                       st.integers(-3, 3).filter(bool), max_size=6))
def test_dt_round_trip(om):
    assert {g: v for g, v in bps_from_dt(dt_from_bps(om)).items() if v} == om


def test_ray_diagram_a1(a1_spectrum):
    d = ray_diagram(a1_spectrum[1])
    assert len(d.rays) == 2
    assert sorted(d.phases()) == pytest.approx([0.5, 1.5])
    assert all(r.height == pytest.approx(np.pi) for r in d.rays)
    assert d.height(0.1) == float("inf") and not d.is_active(0.1)


def test_ray_diagram_a2_big(a2_big):
    d = ray_diagram(a2_big[1])
    assert len(d.rays) == 6
    classes = sorted(g for r in d.rays for g in r.classes)
    assert classes == sorted([(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)])
    assert len(ray_diagram(a2_big[1], h_max=0.0).rays) == 0


def test_xi_examples():
    b = a2_structure()
    xi = xi_basepoint(b)
    assert xi((1, 0)) == -1 and xi((0, 1)) == -1
    assert xi((1, 1)) == -1
    assert xi((0, 0)) == 1
    assert xi((2, 0)) == 1
    assert xi_basepoint(b, non_closed=[0], closed=[1])((0, 1)) == 1
    with pytest.raises(ConflictingFlags):
        xi_basepoint(b, non_closed=[0, 1], closed=[1])


def test_twisted_multiplicativity():
    rng = np.random.default_rng(7)
    for n in (2, 4):
        A = rng.integers(-2, 3, size=(n, n))
        skew = A - A.T
        g = TwistedTorusPoint(rng.uniform(0.5, 2, n) * np.exp(1j * rng.uniform(-3, 3, n)), skew)
        for _ in range(200):
            a, b = rng.integers(-4, 5, size=(2, n))
            sign = (-1) ** int(a @ skew @ b)
            assert g(a + b) == pytest.approx(sign * g(a) * g(b), rel=1e-12)


def test_automorphism_examples():
    b = a2_structure(big=False)
    x = np.array([0.7 + 0.2j, 1.3 - 0.4j])
    S = ray_map(b, [(0, 1)])
    y = S(x)
    xg = character(x, (0, 1), SKEW2)
    # <e1, e2> = 1 so x_{e1} picks up one factor; x_{e2} pairs trivially with itself
    assert y[0] == pytest.approx(x[0] * (1 - xg))
    assert y[1] == pytest.approx(x[1])
    ring = BPSStructure(SKEW2, np.array([1j, 1 + 1j]), {(0, 1): -2})
    y = ray_map(ring, [(0, 1)])(x)
    assert y[0] == pytest.approx(x[0] * (1 - xg) ** -2)
    with pytest.raises(PoleOfMap):
        S(np.array([-1.0, 1.0]))


def test_sector_compositions():
    b = a2_structure()
    x = random_torus_point(b, np.random.default_rng(1)).values
    assert np.allclose(sector_composition(b, (0.8, 0.9))(x), x)
    ph = float(np.angle(1j) / np.pi)
    single = sector_composition(b, (ph - 0.05, ph + 0.05))(x)
    assert np.allclose(single, bps_automorphism(b, ph)(x))
    with pytest.raises(ActiveBoundary):
        sector_composition(b, (0.5, 0.9))
    # stabilizes once the height bound exceeds every |Z|
    f1 = sector_composition(b, (-0.2, 0.8), h_max=10)(x)
    assert np.allclose(f1, sector_composition(b, (-0.2, 0.8))(x))


def test_pentagon_identity():
    b = a2_structure()
    S1, S2, S12 = (ray_map(b, [g]) for g in [(1, 0), (0, 1), (1, 1)])
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        x = random_torus_point(b, rng).values
        lhs = S2.then(S1)(x)                 # S1 o S2
        rhs = S1.then(S12).then(S2)(x)       # S2 o S12 o S1
        worst = max(worst, np.max(np.abs(lhs - rhs) / np.abs(lhs)))
    assert worst < 1e-10


def test_poisson_preservation():
    b = a2_structure()
    rng = np.random.default_rng(11)
    maps = [ray_map(b, [g]) for g in b.active()] + [sector_composition(b, (-0.2, 0.8))]
    for f in maps:
        for _ in range(5):
            x = random_torus_point(b, rng).values
            al, be = rng.integers(-2, 3, size=(2, 2))
            assert twisted_bracket_defect(f, SKEW2, x, al, be) < 1e-8


def test_rebase_round_trip():
    b = a2_structure()
    M = np.array([[1, 1], [0, 1]])
    r = rebase(b, M)
    assert r.Z((1, 1)) == pytest.approx(b.Z((1, 0)))
    assert rebase(r, np.linalg.inv(M).round()).omega == b.omega
    with pytest.raises(ValidationError):
        rebase(b, np.array([[2, 0], [0, 1]]))


def test_chamber_invariance_synthetic():
    # the same lattice with central charges on either side of the wall
    # with <e2, e1> = -1 the two-class chamber has arg Z(e2) < arg Z(e1)
    small = a2_structure(Z=(1j, 1 + 1j), big=False)
    big = a2_structure(Z=(1 + 1j, 1j), big=True)
    assert compare_compositions(small, big, (-0.2, 0.8), n_points=100, rng=0) < 1e-10
    assert compare_compositions(a2_structure(Z=(1 + 1j, 1j), big=False), big,
                                (-0.2, 0.8), n_points=20, rng=0) > 1e-3


def test_identity_map():
    x = np.array([2.0 + 0j, 3.0])
    assert np.allclose(identity(2, SKEW2)(x), x)
