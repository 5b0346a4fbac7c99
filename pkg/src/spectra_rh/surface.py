"""Marked bordered surfaces, ideal and tagged triangulations, flips, exchange
matrices and quivers with potential.

Triangulations are stored as gluing data: a list of triangles, each a
counterclockwise triple of sides ``(edge, tail)`` where ``edge`` is either an
arc index (int) or a boundary segment label ``"b<i>"`` and ``tail`` is the
marked point the side leaves from.  Boundary marks are ints, punctures are
strings ``"p<i>"``.  Explicit triangulations are supported for unpunctured
polygons and once/twice-punctured disks.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import FlipNotAllowed, NotRegular, UnsupportedSurface


@dataclass(frozen=True)
class MarkedBorderedSurface:
    genus: int = 0
    boundary_marks: tuple[int, ...] = ()
    puncture_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "boundary_marks", tuple(int(k) for k in self.boundary_marks))
        if self.genus < 0 or self.puncture_count < 0:
            raise ValueError("genus and puncture count must be nonnegative")
        if any(k < 1 for k in self.boundary_marks):
            raise ValueError("every boundary component needs at least one marked point")
        if sum(self.boundary_marks) + self.puncture_count < 1:
            raise ValueError("marked set is empty")

    @property
    def is_disk(self):
        return self.genus == 0 and len(self.boundary_marks) == 1

    def to_dict(self):
        return {"genus": self.genus, "boundary_marks": list(self.boundary_marks),
                "puncture_count": self.puncture_count}


def dimension(surface: MarkedBorderedSurface) -> int:
    ks = list(surface.boundary_marks) + [0] * surface.puncture_count
    return 6 * surface.genus - 6 + sum(k + 3 for k in ks)


def is_amenable(surface: MarkedBorderedSurface) -> bool:
    g, b, p = surface.genus, surface.boundary_marks, surface.puncture_count
    if not b:
        if p == 1:
            return False
        if g == 0 and p <= 5:
            return False
    if g == 0 and len(b) == 1:
        k = b[0]
        if p == 0 and k <= 4:
            return False
        if p == 1 and k in (1, 2, 4):
            return False
        if p == 2 and k == 2:
            return False
    if g == 0 and p == 0 and sorted(b) == [1, 1]:
        return False
    return True


@dataclass(frozen=True)
class Arc:
    endpoints: tuple
    winding: int = 0


def _is_arc(e):
    return not isinstance(e, str)


def _side_head(tri, s):
    return tri[(s + 1) % 3][1]


@dataclass(frozen=True, eq=False)
class IdealTriangulation:
    surface: MarkedBorderedSurface
    triangles: tuple
    n_arcs: int

    def __post_init__(self):
        tris = tuple(tuple((e, v) for e, v in t) for t in self.triangles)
        object.__setattr__(self, "triangles", tris)
        counts = {}
        for t in tris:
            for e, _ in t:
                counts[e] = counts.get(e, 0) + 1
        for j in range(self.n_arcs):
            if counts.get(j, 0) != 2:
                raise ValueError(f"arc {j} borders {counts.get(j, 0)} triangle sides")
        if self.surface.is_disk:
            k = self.surface.boundary_marks[0]
            for i in range(k):
                if counts.get(f"b{i}", 0) != 1:
                    raise ValueError(f"boundary segment b{i} is not used exactly once")
        if self.n_arcs != dimension(self.surface):
            raise ValueError("arc count does not match surface dimension")

    # -- structure -------------------------------------------------------
    def sides_of(self, e):
        return [(ti, s) for ti, t in enumerate(self.triangles) for s in range(3) if t[s][0] == e]

    def self_folded_flags(self):
        return tuple(len({e for e, _ in t}) == 2 for t in self.triangles)

    def self_folded_pairs(self):
        """Map interior arc -> encircling edge for each self-folded triangle."""
        out = {}
        for t in self.triangles:
            es = [e for e, _ in t]
            if len(set(es)) == 2:
                inner = next(e for e in es if es.count(e) == 2)
                outer = next(e for e in es if es.count(e) == 1)
                out[inner] = outer
        return out

    def endpoints(self, j):
        ti, s = self.sides_of(j)[0]
        t = self.triangles[ti]
        return (t[s][1], _side_head(t, s))

    @property
    def arcs(self):
        return tuple(Arc(tuple(sorted(self.endpoints(j), key=str)), self._winding(j))
                     for j in range(self.n_arcs))

    def _region_punctures(self, j):
        # punctures on the side of arc j that contains the first triangle side
        ti0, _ = self.sides_of(j)[0]
        seen, queue = {ti0}, deque([ti0])
        while queue:
            ti = queue.popleft()
            for e, _ in self.triangles[ti]:
                if e == j or not _is_arc(e):
                    continue
                for tj, _ in self.sides_of(e):
                    if tj not in seen:
                        seen.add(tj)
                        queue.append(tj)
        return seen

    def _winding(self, j):
        # boundary-to-boundary arcs on punctured disks: bitmask of punctures to the
        # left of the arc run from its smaller endpoint (the enclosed ones for loops)
        a, b = self.endpoints(j)
        if self.surface.puncture_count == 0 or isinstance(a, str) or isinstance(b, str):
            return 0
        side = self._region_punctures(j)
        ti, s = self.sides_of(j)[0]
        tail = self.triangles[ti][s][1]
        mask = sum(1 << int(v[1:]) for t in side for _, v in self.triangles[t]
                   if isinstance(v, str))
        full = (1 << self.surface.puncture_count) - 1
        if a == b:
            has_boundary = any(not _is_arc(e) for t in side for e, _ in self.triangles[t])
            return full & ~mask if has_boundary else mask
        return mask if tail == min(a, b) else full & ~mask

    def puncture_valencies(self):
        # half-edges incident to each puncture
        val = {f"p{i}": 0 for i in range(self.surface.puncture_count)}
        for j in range(self.n_arcs):
            for v in self.endpoints(j):
                if v in val:
                    val[v] += 1
        return val

    def is_regular(self):
        return all(v >= 3 for v in self.puncture_valencies().values())

    # -- equality ----------------------------------------------------------
    def canonical(self):
        """Relabel arcs by breadth-first order from boundary segment b0."""
        tris = self.triangles
        label = {}
        order = []
        start = None
        for ti, t in enumerate(tris):
            for s, (e, _) in enumerate(t):
                if e == "b0":
                    start = (ti, s)
        if start is None:
            start = (0, 0)
        seen = {start[0]}
        queue = deque([start])
        while queue:
            ti, s0 = queue.popleft()
            order.append((ti, s0))
            t = tris[ti]
            for d in range(3):
                e, _ = t[(s0 + d) % 3]
                if not _is_arc(e):
                    continue
                if e not in label:
                    label[e] = len(label)
                for tj, sj in self.sides_of(e):
                    if tj not in seen:
                        seen.add(tj)
                        queue.append((tj, sj))
        out = []
        for ti, s0 in order:
            t = tris[ti]
            out.append(tuple((label[e] if _is_arc(e) else e, str(v))
                             for e, v in (t[(s0 + d) % 3] for d in range(3))))
        return tuple(sorted(out, key=repr)), label

    def key(self):
        return self.canonical()[0]

    def __eq__(self, other):
        return isinstance(other, IdealTriangulation) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def relabeled(self, perm):
        """Arc j becomes arc perm[j]."""
        tris = tuple(tuple((perm[e] if _is_arc(e) else e, v) for e, v in t) for t in self.triangles)
        return IdealTriangulation(self.surface, tris, self.n_arcs)

    def to_dict(self):
        return {"surface": self.surface.to_dict(),
                "arcs": [{"endpoints": [str(x) for x in a.endpoints], "winding": a.winding}
                         for a in self.arcs],
                "triangles": [[[e if isinstance(e, str) else int(e), str(v)] for e, v in t]
                              for t in self.triangles]}

    @classmethod
    def from_dict(cls, d):
        s = d["surface"]
        surf = MarkedBorderedSurface(s["genus"], tuple(s["boundary_marks"]), s["puncture_count"])
        def vert(v):
            return v if str(v).startswith("p") else int(v)
        tris = tuple(tuple((e if isinstance(e, str) else int(e), vert(v)) for e, v in t)
                     for t in d["triangles"])
        return cls(surf, tris, len(d["arcs"]))


# -- constructors -------------------------------------------------------------

def polygon_triangulation(m, diagonals):
    """Triangulation of an m-gon (marks 0..m-1 counterclockwise) from diagonals.

    Arc j is ``diagonals[j]``.  Boundary segment ``b<i>`` joins i to i+1.
    """
    surf = MarkedBorderedSurface(0, (m,), 0)
    diags = [tuple(sorted(d)) for d in diagonals]
    if len(set(diags)) != len(diags) or len(diags) != m - 3:
        raise ValueError("need m-3 distinct diagonals")
    edge_of = {tuple(sorted((i, (i + 1) % m))): f"b{i}" for i in range(m)}
    for j, d in enumerate(diags):
        if d in edge_of or d[0] == d[1]:
            raise ValueError(f"{d} is not a diagonal")
        edge_of[d] = j
    tris = []

    def split(poly):
        if len(poly) == 3:
            tris.append(tuple((edge_of[tuple(sorted((poly[i], poly[(i + 1) % 3])))], poly[i])
                              for i in range(3)))
            return
        for a in range(len(poly)):
            for b in range(a + 2, len(poly)):
                if a == 0 and b == len(poly) - 1:
                    continue
                if tuple(sorted((poly[a], poly[b]))) in edge_of:
                    split(poly[a:b + 1])
                    split(poly[b:] + poly[:a + 1])
                    return
        raise ValueError("diagonals do not triangulate the polygon")

    split(list(range(m)))
    return IdealTriangulation(surf, tuple(tris), m - 3)


def fan_triangulation(m):
    return polygon_triangulation(m, [(0, j) for j in range(2, m - 1)])


def punctured_disk_fan(k):
    """Once-punctured disk with k boundary marks; arc i joins mark i to the puncture."""
    surf = MarkedBorderedSurface(0, (k,), 1)
    tris = tuple(((f"b{i}", i), ((i + 1) % k, (i + 1) % k), (i, "p0")) for i in range(k))
    return IdealTriangulation(surf, tris, k)


def twice_punctured_disk_triangulation(k):
    """Fan to p0 with the second puncture inserted in the triangle over b0."""
    surf = MarkedBorderedSurface(0, (k,), 2)
    tris = [((f"b{i}", i), ((i + 1) % k, (i + 1) % k), (i, "p0")) for i in range(1, k)]
    # arcs 0..k-1 join mark i to p0; k, k+1, k+2 join p1 to mark 0, mark 1, p0
    a0, a1, q0, q1, qp = 0, 1 % k, k, k + 1, k + 2
    tris.append((("b0", 0), (q1, 1 % k), (q0, "p1")))
    tris.append(((a1, 1 % k), (qp, "p0"), (q1, "p1")))
    tris.append(((a0, "p0"), (q0, 0), (qp, "p1")))
    return IdealTriangulation(surf, tuple(tris), k + 3)


def standard_triangulation(surface: MarkedBorderedSurface):
    if not surface.is_disk:
        raise UnsupportedSurface("explicit triangulations exist only for disks")
    k, p = surface.boundary_marks[0], surface.puncture_count
    if p == 0:
        return fan_triangulation(k)
    if p == 1:
        return punctured_disk_fan(k)
    if p == 2:
        return twice_punctured_disk_triangulation(k)
    raise UnsupportedSurface("at most two punctures supported")


# -- flips --------------------------------------------------------------------

def flip(T: IdealTriangulation, k: int) -> IdealTriangulation:
    sides = T.sides_of(k)
    (t1, s1), (t2, s2) = sides
    if t1 == t2:
        raise FlipNotAllowed(f"arc {k} is the interior edge of a self-folded triangle")
    A = T.triangles[t1]
    B = T.triangles[t2]
    # rotate so arc k sits first: A = x->y, a: y->z, b: z->x ; B = y->x, c: x->w, d: w->y
    A = A[s1:] + A[:s1]
    B = B[s2:] + B[:s2]
    (_, x), (a, y), (b, z) = A
    (_, y2), (c, x2), (d, w) = B
    new1 = ((k, z), (d, w), (a, y))
    new2 = ((k, w), (b, z), (c, x2))
    tris = [t for i, t in enumerate(T.triangles) if i not in (t1, t2)] + [new1, new2]
    return IdealTriangulation(T.surface, tuple(tris), T.n_arcs)


def match_flip(T1: IdealTriangulation, T2: IdealTriangulation):
    """Find k and a relabelling with T2 equal to flip(T1, k) up to arc names.

    Returns (k, perm) where arc j of T1 (j != k) is arc perm[j] of T2 and perm[k] is the
    new arc.  Arcs are compared by endpoints and winding.
    """
    a1, a2 = T1.arcs, T2.arcs
    perm = {}
    used = set()
    for j, arc in enumerate(a1):
        hits = [i for i, b in enumerate(a2) if b == arc and i not in used]
        if len(hits) == 1:
            perm[j] = hits[0]
            used.add(hits[0])
    missing = [j for j in range(T1.n_arcs) if j not in perm]
    spare = [i for i in range(T2.n_arcs) if i not in used]
    if len(missing) != 1 or len(spare) != 1:
        raise ValueError("triangulations are not related by a single flip")
    k = missing[0]
    perm[k] = spare[0]
    return k, perm


def flip_graph(T0: IdealTriangulation, limit=100000):
    """Breadth-first exploration of the ideal flip graph. Returns (nodes, edges)."""
    nodes = {T0.key(): T0}
    edges = set()
    queue = deque([T0])
    while queue:
        T = queue.popleft()
        for k in range(T.n_arcs):
            try:
                U = flip(T, k)
            except FlipNotAllowed:
                continue
            ku = U.key()
            edges.add(frozenset((T.key(), ku)))
            if ku not in nodes:
                if len(nodes) >= limit:
                    raise RuntimeError("flip graph exceeds exploration limit")
                nodes[ku] = U
                queue.append(U)
    return nodes, edges


def catalan(n):
    return comb(2 * n, n) // (n + 1)


# -- exchange matrix and quiver ----------------------------------------------

def exchange_matrix(T: IdealTriangulation) -> np.ndarray:
    n = T.n_arcs
    folded = T.self_folded_pairs()
    pi = {j: folded.get(j, j) for j in range(n)}
    pre = {}
    for j, e in pi.items():
        pre.setdefault(e, []).append(j)
    eps = np.zeros((n, n), dtype=int)
    for t, sf in zip(T.triangles, T.self_folded_flags()):
        if sf:
            continue
        for s in range(3):
            ei, ej = t[s][0], t[(s + 1) % 3][0]
            for i in pre.get(ei, []):
                for j in pre.get(ej, []):
                    eps[i, j] += 1
                    eps[j, i] -= 1
    return eps


def matrix_mutation(eps, k):
    eps = np.asarray(eps, dtype=int)
    out = eps + np.sign(eps[:, [k]]) * np.maximum(0, eps[:, [k]] * eps[[k], :])
    out[k, :] = -eps[k, :]
    out[:, k] = -eps[:, k]
    return out


@dataclass(frozen=True)
class QuiverWithPotential:
    vertex_labels: tuple
    arrows: tuple                      # (source, target) pairs with multiplicity
    potential_terms: tuple = field(default=())   # (coefficient, cycle as vertex tuple)

    def to_dict(self):
        return {"vertices": list(self.vertex_labels),
                "arrows": [list(a) for a in self.arrows],
                "potential": [{"coefficient": c, "cycle": list(cyc)} for c, cyc in self.potential_terms]}


def quiver(eps):
    eps = np.asarray(eps)
    n = eps.shape[0]
    arrows = []
    for i in range(n):
        for j in range(n):
            arrows += [(j, i)] * int(max(eps[i, j], 0))
    return tuple(arrows)


def _ccw_arcs_around(T, p):
    # successor map around p: in each triangle with a corner at p, the side
    # leaving p is followed (counterclockwise about p) by the side entering p
    nxt = {}
    for t in T.triangles:
        for s in range(3):
            if t[s][1] == p:
                out_e, in_e = t[s][0], t[(s - 1) % 3][0]
                nxt[out_e] = in_e
    start = next(iter(nxt))
    cyc, e = [start], nxt[start]
    while e != start:
        cyc.append(e)
        e = nxt[e]
    return tuple(cyc)


def quiver_with_potential(T: IdealTriangulation, signing=None) -> QuiverWithPotential:
    if not T.is_regular():
        raise NotRegular("potential is only built for regular triangulations")
    signing = signing or {}
    eps = exchange_matrix(T)
    terms = []
    for t in T.triangles:
        es = [e for e, _ in t]
        if all(_is_arc(e) for e in es):
            # arrows run from each side to the one before it, so a -> c -> b
            terms.append((1, (es[0], es[2], es[1])))
    for i in range(T.surface.puncture_count):
        p = f"p{i}"
        terms.append((-int(signing.get(p, 1)), _ccw_arcs_around(T, p)))
    return QuiverWithPotential(tuple(range(T.n_arcs)), quiver(eps), tuple(terms))


def cycle_is_oriented(qp: QuiverWithPotential, cycle):
    arrows = set(qp.arrows)
    return all((cycle[i], cycle[(i + 1) % len(cycle)]) in arrows for i in range(len(cycle)))


# -- tagged triangulations ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class TaggedTriangulation:
    base: IdealTriangulation
    signing: tuple = ()     # sorted (puncture, sign) pairs

    def __post_init__(self):
        sig = dict(self.signing)
        for i in range(self.base.surface.puncture_count):
            sig.setdefault(f"p{i}", 1)
        object.__setattr__(self, "signing", tuple(sorted(sig.items())))

    def key(self):
        val = self.base.puncture_valencies()
        sig = tuple((p, s if val[p] != 1 else 1) for p, s in self.signing)
        return (self.base.key(), sig)

    def __eq__(self, other):
        return isinstance(other, TaggedTriangulation) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


def _check_tagged_scope(surface):
    if not surface.is_disk or surface.puncture_count > 2:
        raise UnsupportedSurface("tagged flips supported for polygons and once/twice-punctured disks")


def tagged_flip(tau: TaggedTriangulation, j: int) -> TaggedTriangulation:
    T = tau.base
    _check_tagged_scope(T.surface)
    folded = T.self_folded_pairs()
    sig = dict(tau.signing)
    if j in folded:
        # switch to the representative where this tagged arc is the encircling edge
        loop = folded[j]
        if not _is_arc(loop):
            raise UnsupportedSurface("once-punctured monogon has no tagged flip model")
        _, p = T.endpoints(j)
        p = p if isinstance(p, str) else T.endpoints(j)[0]
        sig[p] = -sig[p]
        perm = list(range(T.n_arcs))
        perm[j], perm[loop] = loop, j
        T = T.relabeled(perm)
    return TaggedTriangulation(flip(T, j), tuple(sig.items()))


def tagged_flip_graph(tau0: TaggedTriangulation, limit=100000):
    nodes = {tau0.key(): tau0}
    adj = {tau0.key(): set()}
    queue = deque([tau0])
    while queue:
        tau = queue.popleft()
        for j in range(tau.base.n_arcs):
            nu = tagged_flip(tau, j)
            kn = nu.key()
            adj[tau.key()].add(kn)
            if kn not in nodes:
                if len(nodes) >= limit:
                    raise RuntimeError("tagged flip graph exceeds exploration limit")
                nodes[kn] = nu
                adj[kn] = set()
                queue.append(nu)
    return nodes, adj
