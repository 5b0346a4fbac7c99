"""Cluster Poisson tori, the gluing maps iota/kappa/mu, and the flip law.

Maps are represented by a numeric evaluator acting on coordinate vectors and,
for rank <= 3, an exact rational form built with sympy.  Indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp

from .errors import PoleOfMap
from .surface import matrix_mutation

EXACT_MAX_RANK = 3
POLE_TOL = 1e-14


@dataclass(frozen=True)
class Seed:
    skew: np.ndarray
    basis_labels: tuple = ()

    def __post_init__(self):
        B = np.asarray(self.skew, dtype=int)
        if B.ndim != 2 or B.shape[0] != B.shape[1] or (B != -B.T).any():
            raise ValueError("seed form must be a skew-symmetric integer matrix")
        object.__setattr__(self, "skew", B)
        if not self.basis_labels:
            object.__setattr__(self, "basis_labels", tuple(range(B.shape[0])))

    @property
    def rank(self):
        return self.skew.shape[0]

    def pair(self, a, b):
        return int(np.asarray(a) @ self.skew @ np.asarray(b))


def symbols(n):
    return sp.symbols(f"x1:{n + 1}")


@dataclass(frozen=True)
class BirationalTorusMap:
    rank: int
    evaluator: Callable
    exact: Optional[tuple] = field(default=None, compare=False)

    def __call__(self, X):
        X = np.asarray(X, dtype=complex)
        if X.shape[-1] != self.rank:
            raise ValueError("wrong number of coordinates")
        if np.any(X == 0):
            raise ValueError("torus points have nonzero coordinates")
        return self.evaluator(X)

    def then(self, other: "BirationalTorusMap") -> "BirationalTorusMap":
        """Apply self first, then other."""
        exact = None
        if self.exact is not None and other.exact is not None:
            xs = symbols(self.rank)
            exact = tuple(sp.cancel(e.subs(dict(zip(xs, self.exact)), simultaneous=True))
                          for e in other.exact)
        return BirationalTorusMap(self.rank, lambda X: other(self(X)), exact)

    def eval_exact(self, X):
        xs = symbols(self.rank)
        sub = dict(zip(xs, [sp.nsimplify(v) if isinstance(v, (int, float)) else v for v in X]))
        return tuple(sp.nsimplify(e.subs(sub)) for e in self.exact)


def identity_map(n):
    return BirationalTorusMap(n, lambda X: np.array(X, dtype=complex),
                              tuple(symbols(n)) if n <= EXACT_MAX_RANK else None)


def _monomial(X, exps):
    return np.prod(X ** np.asarray(exps))


def iota_lattice_map(seed: Seed, k: int) -> np.ndarray:
    """Columns are the images of the new basis vectors in old coordinates."""
    B = seed.skew
    n = seed.rank
    F = np.eye(n, dtype=int)
    for j in range(n):
        if j == k:
            F[:, j] = 0
            F[k, j] = -1
        else:
            F[k, j] += max(int(B[k, j]), 0)
    return F


def monomial_map_iota(seed: Seed, k: int) -> BirationalTorusMap:
    F = iota_lattice_map(seed, k)
    n = seed.rank

    def ev(X):
        return np.array([_monomial(X, F[:, j]) for j in range(n)])

    exact = None
    if n <= EXACT_MAX_RANK:
        xs = symbols(n)
        exact = tuple(sp.Mul(*[xs[i] ** int(F[i, j]) for i in range(n)]) for j in range(n))
    return BirationalTorusMap(n, ev, exact)


def cluster_automorphism_kappa(seed: Seed, k: int) -> BirationalTorusMap:
    B = seed.skew
    n = seed.rank
    expo = B[:, k].astype(int)      # <e_j, e_k>

    def ev(X):
        base = 1 + X[k]
        if abs(base) < POLE_TOL:
            raise PoleOfMap(f"coordinate {k} equals -1")
        return X * base ** expo

    exact = None
    if n <= EXACT_MAX_RANK:
        xs = symbols(n)
        exact = tuple(xs[j] * (1 + xs[k]) ** int(expo[j]) for j in range(n))
    return BirationalTorusMap(n, ev, exact)


def mutation_map(seed: Seed, k: int):
    """Returns the mutated seed and the map mu_k = iota_k o kappa_k on coordinates."""
    iota = monomial_map_iota(seed, k)
    kappa = cluster_automorphism_kappa(seed, k)
    # pullback of mu_k is kappa* o iota*: evaluate the monomials of iota on kappa's output
    m = kappa.then(iota)
    new_seed = Seed(matrix_mutation(seed.skew, k), seed.basis_labels)
    return new_seed, m


def fg_flip_law(eps, k: int) -> BirationalTorusMap:
    eps = np.asarray(eps, dtype=int)
    n = eps.shape[0]

    def ev(X):
        out = np.array(X, dtype=complex)
        xk = X[k]
        for j in range(n):
            if j == k:
                out[j] = 1 / xk
                continue
            e = int(eps[j, k])
            if e == 0:
                continue
            base = 1 + xk ** (-np.sign(e))
            if abs(base) < POLE_TOL:
                raise PoleOfMap(f"coordinate {k} equals -1")
            out[j] = X[j] * base ** (-e)
        return out

    exact = None
    if n <= EXACT_MAX_RANK:
        xs = symbols(n)
        ex = []
        for j in range(n):
            e = int(eps[j, k])
            if j == k:
                ex.append(1 / xs[k])
            else:
                ex.append(xs[j] * (1 + xs[k] ** (-int(np.sign(e)))) ** (-e))
        exact = tuple(sp.cancel(e) for e in ex)
    return BirationalTorusMap(n, ev, exact)


def flip_law_seed(eps) -> Seed:
    """Seed whose mutation maps coincide with the flip law for exchange matrix eps."""
    return Seed(np.asarray(eps, dtype=int).T)


def is_identity_exact(m: BirationalTorusMap) -> bool:
    xs = symbols(m.rank)
    return all(sp.simplify(e - x) == 0 for e, x in zip(m.exact, xs))


def random_torus_points(n, count, rng, lo=0.2, hi=5.0, max_arg=0.9 * np.pi):
    mod = rng.uniform(lo, hi, size=(count, n))
    arg = rng.uniform(-max_arg, max_arg, size=(count, n))
    return mod * np.exp(1j * arg)


def _jacobian(f, X, h_rel=1e-3):
    # fourth-order central differences along each holomorphic coordinate
    X = np.asarray(X, dtype=complex)
    n = X.size
    cols = []
    for a in range(n):
        h = h_rel * abs(X[a])
        e = np.zeros(n, dtype=complex)
        e[a] = h
        d = (-f(X + 2 * e) + 8 * f(X + e) - 8 * f(X - e) + f(X - 2 * e)) / (12 * h)
        cols.append(d)
    return np.array(cols).T


def poisson_defect(f: Callable, B_src, B_dst, X, h_rel=1e-3) -> float:
    """Max relative mismatch between pushed-forward log-canonical brackets.

    Source bracket {X_a, X_b} = B_src[a, b] X_a X_b; the image coordinates Y = f(X)
    should satisfy {Y_i, Y_j} = B_dst[i, j] Y_i Y_j.
    """
    X = np.asarray(X, dtype=complex)
    Y = f(X)
    J = _jacobian(f, X, h_rel)
    P = np.asarray(B_src) * np.outer(X, X)
    got = J @ P @ J.T
    want = np.asarray(B_dst) * np.outer(Y, Y)
    scale = np.abs(np.outer(Y, Y))
    return float(np.max(np.abs(got - want) / scale))
