import numpy as np
import pytest

from spectra_rh.bps import from_differential
from spectra_rh.differential import QuadraticDifferential
from spectra_rh.foliation import spectrum


def a1():
    return QuadraticDifferential(np.array([1, 0, -1]))


def a2(c):
    return QuadraticDifferential(np.array([1, 0, -3, c]))


@pytest.fixture(scope="session")
def a1_spectrum():
    table = spectrum(a1(), h_max=10)
    return table, from_differential(table.basis, table)


@pytest.fixture(scope="session")
def a2_small():
    table = spectrum(a2(1j))
    return table, from_differential(table.basis, table)


@pytest.fixture(scope="session")
def a2_big():
    table = spectrum(a2(2j))
    return table, from_differential(table.basis, table)
