"""Finite systems of partial isometries between subtrees of finite metric
trees: pruning, splitting germs, the splitting step, interval exchanges and
Rauzy-Veech induction, and leaf exploration.

Points of a base tree are addressed canonically as ``("v", u)`` for a vertex
or ``("e", e, t)`` with ``0 < t < length(e)``.  A direction at a point is
``(e, sign)``: leave along edge ``e`` with the offset increasing (``+1``) or
decreasing (``-1``).

Closed subsets are stored as :class:`Region` values: per-edge closed
intervals plus the vertices they contain.  All arithmetic is exact.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .gog import fraction_str, to_fraction


class IsometryError(ValueError):
    pass


# --------------------------------------------------------------------------
# trees


class FiniteMetricTree:
    def __init__(self, n_vertices, edges):
        self.n_vertices = int(n_vertices)
        self.edges = tuple((int(u), int(v), to_fraction(L)) for u, v, L in edges)
        n = self.n_vertices
        if n < 1:
            raise IsometryError("a tree needs a vertex")
        if len(self.edges) != n - 1:
            raise IsometryError("a tree on n vertices has n - 1 edges")
        self.adj = [[] for _ in range(n)]
        for e, (u, v, L) in enumerate(self.edges):
            if not (0 <= u < n and 0 <= v < n) or u == v:
                raise IsometryError("bad tree edge")
            if L <= 0:
                raise IsometryError("edge lengths must be positive")
            self.adj[u].append((e, v))
            self.adj[v].append((e, u))
        self._dist = []
        self._prev = []
        for s in range(n):
            dist = {s: Fraction(0)}
            prev = {s: None}
            q = deque([s])
            while q:
                u = q.popleft()
                for e, w in self.adj[u]:
                    if w not in dist:
                        dist[w] = dist[u] + self.edges[e][2]
                        prev[w] = (u, e)
                        q.append(w)
            if len(dist) != n:
                raise IsometryError("tree is not connected")
            self._dist.append(dist)
            self._prev.append(prev)

    @classmethod
    def interval(cls, length):
        return cls(2, [(0, 1, length)])

    def length(self, e):
        return self.edges[e][2]

    def volume(self):
        return sum((L for _, _, L in self.edges), Fraction(0))

    def point(self, e, t):
        t = to_fraction(t)
        u, v, L = self.edges[e]
        if t < 0 or t > L:
            raise IsometryError("offset outside the edge")
        if t == 0:
            return ("v", u)
        if t == L:
            return ("v", v)
        return ("e", e, t)

    def check_point(self, p):
        if p[0] == "v":
            if not 0 <= p[1] < self.n_vertices:
                raise IsometryError("vertex out of range")
            return p
        return self.point(p[1], p[2])

    def reps(self, p):
        """``(edge, offset)`` representations of a point."""
        if p[0] == "e":
            return [(p[1], p[2])]
        u = p[1]
        out = []
        for e, _ in self.adj[u]:
            out.append((e, Fraction(0) if self.edges[e][0] == u else self.edges[e][2]))
        return out

    def _ends(self, p):
        if p[0] == "v":
            return [(p[1], Fraction(0))]
        u, v, L = self.edges[p[1]]
        return [(u, p[2]), (v, L - p[2])]

    def dist(self, p, q):
        if p[0] == "e" and q[0] == "e" and p[1] == q[1]:
            return abs(p[2] - q[2])
        best = None
        for a, da in self._ends(p):
            for b, db in self._ends(q):
                d = da + self._dist[a][b] + db
                if best is None or d < best:
                    best = d
        return best

    def _vertex_path(self, a, b):
        """Edges from ``a`` to ``b`` as (edge, from, to)."""
        out = []
        cur = b
        prev = self._prev[a]
        while cur != a:
            u, e = prev[cur]
            out.append((e, u, cur))
            cur = u
        out.reverse()
        return out

    def _offset(self, e, vertex):
        return Fraction(0) if self.edges[e][0] == vertex else self.edges[e][2]

    def path(self, p, q):
        """Oriented pieces ``(edge, t_from, t_to)`` of the geodesic from p to q."""
        if p == q:
            return []
        if p[0] == "e" and q[0] == "e" and p[1] == q[1]:
            return [(p[1], p[2], q[2])]
        best = None
        for a, da in self._ends(p):
            for b, db in self._ends(q):
                d = da + self._dist[a][b] + db
                if best is None or d < best[0]:
                    best = (d, a, b)
        _, a, b = best
        out = []
        if p[0] == "e":
            out.append((p[1], p[2], self._offset(p[1], a)))
        for e, u, w in self._vertex_path(a, b):
            out.append((e, self._offset(e, u), self._offset(e, w)))
        if q[0] == "e":
            out.append((q[1], self._offset(q[1], b), q[2]))
        return [s for s in out if s[1] != s[2]]

    def point_at(self, p, q, s):
        """Point at distance ``s`` from ``p`` on the geodesic towards ``q``."""
        s = to_fraction(s)
        if s < 0:
            raise IsometryError("negative distance")
        if s == 0:
            return p
        for e, a, b in self.path(p, q):
            L = abs(b - a)
            if s <= L:
                return self.point(e, a + s if b > a else a - s)
            s -= L
        if s == 0:
            return q
        raise IsometryError("distance exceeds the geodesic")

    def directions(self, x):
        if x[0] == "e":
            return [(x[1], 1), (x[1], -1)]
        u = x[1]
        return sorted((e, 1 if self.edges[e][0] == u else -1) for e, _ in self.adj[u])

    def first_direction(self, x, p):
        e, a, b = self.path(x, p)[0]
        return (e, 1 if b > a else -1)

    def offset_on(self, x, e):
        for f, t in self.reps(x):
            if f == e:
                return t
        raise IsometryError("point is not on that edge")

    def in_halfspace(self, x, eta, y):
        """Is ``y`` in the open half-space at ``x`` in direction ``eta``?"""
        if y == x:
            return False
        return self.first_direction(x, y) == eta

    def to_json(self):
        return {"vertices": self.n_vertices,
                "edges": [[u, v, fraction_str(L)] for u, v, L in self.edges]}

    @classmethod
    def from_json(cls, d):
        return cls(d["vertices"], [(u, v, to_fraction(L)) for u, v, L in d["edges"]])

    def __eq__(self, other):
        return isinstance(other, FiniteMetricTree) and (self.n_vertices, self.edges) == (
            other.n_vertices, other.edges)

    def __hash__(self):
        return hash((self.n_vertices, self.edges))


def point_key(p):
    return (0, p[1], Fraction(0)) if p[0] == "v" else (1, p[1], p[2])


def point_to_json(p):
    if p[0] == "v":
        return {"vertex": p[1]}
    return {"edge": p[1], "offset": fraction_str(p[2])}


def point_from_json(tree, d):
    if "vertex" in d:
        return tree.check_point(("v", int(d["vertex"])))
    return tree.point(int(d["edge"]), to_fraction(d["offset"]))


# --------------------------------------------------------------------------
# closed regions


@dataclass(frozen=True)
class Region:
    """Closed subset: sorted disjoint intervals per edge plus contained vertices."""

    tree: FiniteMetricTree = field(repr=False, compare=False, hash=False)
    parts: tuple
    verts: frozenset

    @classmethod
    def make(cls, tree, parts, verts=()):
        per = {}
        for e, lo, hi in parts:
            lo, hi = to_fraction(lo), to_fraction(hi)
            if lo > hi:
                lo, hi = hi, lo
            per.setdefault(e, []).append((lo, hi))
        vs = set(verts)
        out = []
        for e in sorted(per):
            u, v, L = tree.edges[e]
            ivs = sorted(per[e])
            merged = []
            for lo, hi in ivs:
                if merged and lo <= merged[-1][1]:
                    merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
                else:
                    merged.append((lo, hi))
            for lo, hi in merged:
                if lo == 0:
                    vs.add(u)
                if hi == L:
                    vs.add(v)
                if lo == hi and (lo == 0 or lo == L):
                    continue
                out.append((e, lo, hi))
        return cls(tree, tuple(out), frozenset(vs))

    @classmethod
    def empty(cls, tree):
        return cls(tree, (), frozenset())

    @classmethod
    def whole(cls, tree):
        return cls.make(tree, [(e, 0, L) for e, (_, _, L) in enumerate(tree.edges)],
                        range(tree.n_vertices))

    @classmethod
    def hull(cls, tree, points):
        points = list(points)
        if not points:
            return cls.empty(tree)
        parts, verts = [], set()
        for p in points:
            if p[0] == "v":
                verts.add(p[1])
            else:
                parts.append((p[1], p[2], p[2]))
            for e, a, b in tree.path(points[0], p):
                parts.append((e, a, b))
        return cls.make(tree, parts, verts)

    def is_empty(self):
        return not self.parts and not self.verts

    def measure(self):
        return sum((hi - lo for _, lo, hi in self.parts), Fraction(0))

    def contains(self, p):
        if p[0] == "v":
            return p[1] in self.verts
        for e, lo, hi in self.parts:
            if e == p[1] and lo <= p[2] <= hi:
                return True
        return False

    def contains_germ(self, x, eta):
        if not self.contains(x):
            return False
        e, sign = eta
        t = self.tree.offset_on(x, e)
        for f, lo, hi in self.parts:
            if f != e:
                continue
            if sign > 0 and lo <= t < hi:
                return True
            if sign < 0 and lo < t <= hi:
                return True
        return False

    def directions_in(self, x):
        return [d for d in self.tree.directions(x) if self.contains_germ(x, d)]

    def intersect(self, other):
        parts = []
        for e, lo, hi in self.parts:
            for f, lo2, hi2 in other.parts:
                if e == f and max(lo, lo2) <= min(hi, hi2):
                    parts.append((e, max(lo, lo2), min(hi, hi2)))
        verts = self.verts & other.verts
        return Region.make(self.tree, parts, verts)

    def union(self, other):
        return Region.make(self.tree, list(self.parts) + list(other.parts), self.verts | other.verts)

    def points_of_interest(self):
        pts = [("v", u) for u in sorted(self.verts)]
        for e, lo, hi in self.parts:
            for t in (lo, hi):
                p = self.tree.point(e, t)
                if p[0] == "e":
                    pts.append(p)
        seen, out = set(), []
        for p in pts:
            if p not in seen:
                seen.add(p)
                out.append(p)
        return sorted(out, key=point_key)

    def extremal_points(self):
        return [p for p in self.points_of_interest() if len(self.directions_in(p)) <= 1]

    def components(self):
        nodes = [("v", u) for u in sorted(self.verts)] + [("p", i) for i in range(len(self.parts))]
        parent = {n: n for n in nodes}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, (e, lo, hi) in enumerate(self.parts):
            u, v, L = self.tree.edges[e]
            if lo == 0:
                parent[find(("p", i))] = find(("v", u))
            if hi == L:
                parent[find(("p", i))] = find(("v", v))
        groups = {}
        for n in nodes:
            groups.setdefault(find(n), []).append(n)
        comps = []
        for members in groups.values():
            parts = [self.parts[n[1]] for n in members if n[0] == "p"]
            verts = [n[1] for n in members if n[0] == "v"]
            comps.append(Region.make(self.tree, parts, verts))
        comps.sort(key=lambda r: (r.parts, sorted(r.verts)))
        return comps

    def is_point(self):
        return self.measure() == 0 and (len(self.verts) + len(self.parts)) == 1

    def single_point(self):
        if self.parts:
            e, lo, _ = self.parts[0]
            return self.tree.point(e, lo)
        return ("v", next(iter(self.verts)))

    def to_json(self):
        return {"parts": [[e, fraction_str(lo), fraction_str(hi)] for e, lo, hi in self.parts],
                "vertices": sorted(self.verts)}

    @classmethod
    def from_json(cls, tree, d):
        return cls.make(tree, [(int(e), to_fraction(lo), to_fraction(hi)) for e, lo, hi in d["parts"]],
                        d.get("vertices", []))


def cut_at(region, x, eta):
    """Split a subtree containing ``x`` into its parts towards ``eta`` and away from it."""
    T = region.tree
    ext = region.extremal_points()
    inside = [p for p in ext if T.in_halfspace(x, eta, p)]
    outside = [p for p in ext if p != x and not T.in_halfspace(x, eta, p)]
    return Region.hull(T, [x] + inside), Region.hull(T, [x] + outside)


# --------------------------------------------------------------------------
# bands


@dataclass(frozen=True)
class Band:
    """Isometry from a subtree of base ``dom_base`` onto a subtree of ``cod_base``.

    ``pairs`` lists ``(p, q)`` with ``q`` the image of ``p``; the domain is the
    hull of the ``p`` and the isometry is determined by the pairs.
    """

    name: str
    dom_base: int
    cod_base: int
    pairs: tuple

    def ends(self):
        return (("dom", self.dom_base), ("cod", self.cod_base))


class _BandView:
    """Band together with its base trees: hulls and point maps."""

    def __init__(self, band, dom_tree, cod_tree, check=True):
        self.band = band
        self.dt, self.ct = dom_tree, cod_tree
        ps = [p for p, _ in band.pairs]
        qs = [q for _, q in band.pairs]
        if not ps:
            raise IsometryError(f"band {band.name} has no points")
        self.dom = Region.hull(dom_tree, ps)
        self.cod = Region.hull(cod_tree, qs)
        if check:
            for i in range(len(ps)):
                for j in range(i + 1, len(ps)):
                    if dom_tree.dist(ps[i], ps[j]) != cod_tree.dist(qs[i], qs[j]):
                        raise IsometryError(f"band {band.name} is not distance preserving")
            if self.dom.measure() != self.cod.measure():
                raise IsometryError(f"band {band.name} domain and codomain differ in size")
            for p in self.dom.extremal_points():
                self.map(p)

    def end(self, side):
        return self.dom if side == "dom" else self.cod

    def _apply(self, x, src, dst, T, U):
        pairs = list(zip(src, dst))
        if len(pairs) == 1:
            if x != pairs[0][0]:
                raise IsometryError("point outside a singleton band")
            return pairs[0][1]
        for i in range(len(pairs)):
            for j in range(i + 1, len(pairs)):
                (pa, qa), (pb, qb) = pairs[i], pairs[j]
                dab = T.dist(pa, pb)
                s = T.dist(pa, x)
                if s + T.dist(x, pb) == dab:
                    return U.point_at(qa, qb, s)
        raise IsometryError("point outside the band end")

    def map(self, x):
        return self._apply(x, [p for p, _ in self.band.pairs], [q for _, q in self.band.pairs],
                           self.dt, self.ct)

    def inv(self, y):
        return self._apply(y, [q for _, q in self.band.pairs], [p for p, _ in self.band.pairs],
                           self.ct, self.dt)

    def across(self, side, x):
        return self.map(x) if side == "dom" else self.inv(x)

    def restrict(self, dom_region, name=None):
        pts = dom_region.extremal_points() if not dom_region.is_point() else [dom_region.single_point()]
        pairs = tuple((p, self.map(p)) for p in pts)
        return Band(name or self.band.name, self.band.dom_base, self.band.cod_base, pairs)

    def restrict_side(self, side, region, name=None):
        if side == "dom":
            return self.restrict(region, name)
        pts = region.extremal_points() if not region.is_point() else [region.single_point()]
        pre = Region.hull(self.dt, [self.inv(q) for q in pts])
        return self.restrict(pre, name)


@dataclass(frozen=True)
class SplittingGerm:
    base: int
    point: tuple
    direction: tuple
    carrier: tuple  # (band name, side)
    split: tuple    # (band name, side)
    degenerate: bool

    def key(self):
        e, sign = self.direction
        return (self.base, e, _offset_key(self), sign, self.carrier, self.split)

    def to_json(self):
        return {"base": self.base, "point": point_to_json(self.point),
                "direction": [self.direction[0], self.direction[1]],
                "carrier": list(self.carrier), "split": list(self.split),
                "degenerate": self.degenerate}


def _offset_key(germ):
    p = germ.point
    if p[0] == "e":
        return p[2]
    return Fraction(-1)


class IsometrySystem:
    """Base trees, the live support on each, and named bands between them.

    ``origins[i]`` records how base ``i`` embeds into an earlier base when it
    was extracted by a splitting step (``None`` for original bases).
    """

    def __init__(self, bases, bands, support=None, origins=None, check=True):
        self.bases = tuple(bases)
        self.bands = tuple(sorted(bands, key=lambda b: b.name))
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names):
            raise IsometryError("band names must be distinct")
        if support is None:
            support = [Region.whole(T) for T in self.bases]
        self.support = tuple(support)
        if len(self.support) != len(self.bases):
            raise IsometryError("one support region per base")
        self.origins = tuple(origins) if origins is not None else (None,) * len(self.bases)
        self.views = {}
        for b in self.bands:
            if not (0 <= b.dom_base < len(self.bases) and 0 <= b.cod_base < len(self.bases)):
                raise IsometryError(f"band {b.name} refers to a missing base")
            view = _BandView(b, self.bases[b.dom_base], self.bases[b.cod_base], check)
            if check:
                for side in ("dom", "cod"):
                    base = b.dom_base if side == "dom" else b.cod_base
                    R = view.end(side)
                    if R.intersect(self.support[base]) != R:
                        raise IsometryError(f"band {b.name} leaves the support")
            self.views[b.name] = view

    # ---- identity --------------------------------------------------------
    def signature(self):
        return (tuple((T.n_vertices, T.edges) for T in self.bases),
                tuple((R.parts, tuple(sorted(R.verts))) for R in self.support),
                tuple((b.name, b.dom_base, b.cod_base,
                       tuple(sorted(b.pairs, key=lambda pq: (point_key(pq[0]), point_key(pq[1])))))
                      for b in self.bands))

    def __eq__(self, other):
        return isinstance(other, IsometrySystem) and self.signature() == other.signature()

    def __hash__(self):
        return hash(self.signature())

    def band(self, name):
        return self.views[name]

    def band_ends(self):
        """All ``(base, region, band name, side)`` in a fixed order."""
        out = []
        for b in self.bands:
            v = self.views[b.name]
            out.append((b.dom_base, v.dom, b.name, "dom"))
            out.append((b.cod_base, v.cod, b.name, "cod"))
        return out

    def incidence(self, base, x):
        return sum(1 for bi, R, _, _ in self.band_ends() if bi == base and R.contains(x))

    def total_volume(self):
        return sum((R.measure() for R in self.support), Fraction(0))

    def elementary_pieces(self, base):
        """(edge, a, c, incidence on the open interval) for the pieces of the support."""
        T = self.bases[base]
        ends = [R for bi, R, _, _ in self.band_ends() if bi == base]
        out = []
        for e, (_, _, L) in enumerate(T.edges):
            br = {Fraction(0), L}
            regs = [self.support[base]] + ends
            for R in regs:
                for f, lo, hi in R.parts:
                    if f == e:
                        br.add(lo)
                        br.add(hi)
            br = sorted(br)
            for a, c in zip(br, br[1:]):
                mid = T.point(e, (a + c) / 2)
                if not self.support[base].contains(mid):
                    continue
                m = sum(1 for R in ends if R.contains(mid))
                out.append((e, a, c, m))
        return out

    def measures(self):
        le1 = eq2 = ge3 = Fraction(0)
        for i in range(len(self.bases)):
            for _, a, c, m in self.elementary_pieces(i):
                if m <= 1:
                    le1 += c - a
                elif m == 2:
                    eq2 += c - a
                else:
                    ge3 += c - a
        return {"m_le1": le1, "m_eq2": eq2, "m_ge3": ge3}

    # ---- serialization -----------------------------------------------------
    def to_json(self):
        return {
            "bases": [T.to_json() for T in self.bases],
            "support": [R.to_json() for R in self.support],
            "bands": [{"name": b.name,
                       "domain": {"base": b.dom_base, "points": [point_to_json(p) for p, _ in b.pairs]},
                       "codomain": {"base": b.cod_base, "points": [point_to_json(q) for _, q in b.pairs]}}
                      for b in self.bands],
        }

    @classmethod
    def from_json(cls, d):
        bases = [FiniteMetricTree.from_json(t) for t in d["bases"]]
        bands = []
        for bd in d["bands"]:
            i, j = int(bd["domain"]["base"]), int(bd["codomain"]["base"])
            ps = [point_from_json(bases[i], p) for p in bd["domain"]["points"]]
            qs = [point_from_json(bases[j], q) for q in bd["codomain"]["points"]]
            if len(ps) != len(qs):
                raise IsometryError(f"band {bd['name']}: point lists differ in length")
            bands.append(Band(str(bd["name"]), i, j, tuple(zip(ps, qs))))
        support = None
        if "support" in d:
            support = [Region.from_json(bases[k], r) for k, r in enumerate(d["support"])]
        return cls(bases, bands, support)


def measures_json(meas):
    return {k: fraction_str(v) for k, v in meas.items()}


# --------------------------------------------------------------------------
# pruning


def prune_step(S):
    """Keep the closure of ``{m >= 2}`` and restrict every band to it.

    Pieces of a restricted band that shrink to a single point are dropped.
    """
    comps = []
    new_support = []
    for i, T in enumerate(S.bases):
        parts = [(e, a, c) for e, a, c, m in S.elementary_pieces(i) if m >= 2]
        K = Region.make(T, parts)
        new_support.append(K)
        comps.append(K.components())
    bands = []
    for b in S.bands:
        view = S.views[b.name]
        pieces = []
        for Ka in comps[b.dom_base]:
            D1 = view.dom.intersect(Ka)
            if D1.is_empty():
                continue
            for Kb in comps[b.cod_base]:
                Z = view.cod.intersect(Kb)
                if Z.is_empty():
                    continue
                zpts = Z.extremal_points() if not Z.is_point() else [Z.single_point()]
                D2 = Region.hull(view.dt, [view.inv(q) for q in zpts])
                D = D1.intersect(D2)
                if D.is_empty() or D.measure() == 0:
                    continue
                pieces.append(D)
        pieces.sort(key=lambda R: R.parts)
        for k, D in enumerate(pieces):
            name = b.name if len(pieces) == 1 else f"{b.name}.{k + 1}"
            bands.append(view.restrict(D, name))
    return IsometrySystem(S.bases, bands, new_support, S.origins)


def prune_to_limit(S, max_iter=100):
    """Iterate :func:`prune_step`; returns ``(system, halted, steps, measure trace)``."""
    if max_iter < 1:
        raise IsometryError("max_iter must be at least 1")
    trace = [S.total_volume()]
    steps = 0
    for _ in range(max_iter):
        S2 = prune_step(S)
        if S2 == S:
            return S, True, steps, trace
        S = S2
        steps += 1
        trace.append(S.total_volume())
    return S, prune_step(S) == S, steps, trace


def is_prune_stable(S):
    return prune_step(S) == S


def classify(S):
    meas = S.measures()
    stable = is_prune_stable(S)
    return {
        "m_le1": meas["m_le1"],
        "m_eq2": meas["m_eq2"],
        "m_ge3": meas["m_ge3"],
        "prune_stable": stable,
        "quadratic": meas["m_ge3"] == 0 and stable,
        "independence_obstruction": meas["m_ge3"] > meas["m_le1"],
    }


def classify_json(c):
    return {k: (fraction_str(v) if isinstance(v, Fraction) else v) for k, v in c.items()}


# --------------------------------------------------------------------------
# splitting germs


def _support_component(S, base, x):
    for C in S.support[base].components():
        if C.contains(x):
            return C
    raise IsometryError("point not in the support")


def find_splitting_germs(S, check=True):
    if check and not is_prune_stable(S):
        raise IsometryError("system is not prune-stable")
    ends = S.band_ends()
    germs = []
    for base0, R0, name0, side0 in ends:
        if R0.measure() == 0:
            continue
        for x in R0.extremal_points():
            C = _support_component(S, base0, x)
            if len(C.directions_in(x)) <= 1:
                continue
            dirs = R0.directions_in(x)
            if len(dirs) != 1:
                continue
            eta = dirs[0]
            for base1, R1, name1, side1 in ends:
                if base1 != base0 or (name1, side1) == (name0, side0):
                    continue
                if not R1.contains_germ(x, eta):
                    continue
                deg = len(R1.directions_in(x)) <= 1
                germs.append(SplittingGerm(base0, x, eta, (name0, side0), (name1, side1), deg))
    germs.sort(key=lambda g: g.key())
    return germs


def _germ_probe(S, germ):
    """A point a short way from the germ's base point along its direction."""
    T = S.bases[germ.base]
    e, sign = germ.direction
    t = T.offset_on(germ.point, e)
    br = {Fraction(0), T.length(e)}
    for _, R, _, _ in S.band_ends():
        for f, lo, hi in R.parts:
            if f == e:
                br.update((lo, hi))
    if sign > 0:
        nxt = min(b for b in br if b > t)
    else:
        nxt = max(b for b in br if b < t)
    return T.point(e, (t + nxt) / 2)


def facing_pairs(S, germs):
    """Index pairs of germs whose points and directions correspond under a band
    with the directions pointing towards each other."""
    out = []
    for i, g in enumerate(germs):
        probe = _germ_probe(S, g)
        for name, view in S.views.items():
            for side in ("dom", "cod"):
                base = view.band.dom_base if side == "dom" else view.band.cod_base
                if base != g.base:
                    continue
                R = view.end(side)
                if not (R.contains(g.point) and R.contains(probe)):
                    continue
                y = view.across(side, g.point)
                yp = view.across(side, probe)
                tb = view.band.cod_base if side == "dom" else view.band.dom_base
                U = S.bases[tb]
                d_img = U.first_direction(y, yp)
                for j, h in enumerate(germs):
                    if j <= i or h.base != tb or h.point != y:
                        continue
                    if h.direction != d_img:
                        out.append((i, j))
    return sorted(set(out))


def removal_disconnects(S, base, x):
    """Does removing ``x`` from its base disconnect the band complex?"""
    nodes = []
    for i in range(len(S.bases)):
        for k, C in enumerate(S.support[i].components()):
            if i == base and C.contains(x):
                for d in C.directions_in(x):
                    nodes.append((i, k, d))
            else:
                nodes.append((i, k, None))
    parent = {n: n for n in nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def touched(i, R):
        out = []
        for k, C in enumerate(S.support[i].components()):
            if C.intersect(R).is_empty():
                continue
            if i == base and C.contains(x):
                T = S.bases[i]
                pts = R.points_of_interest()
                for d in C.directions_in(x):
                    if R.contains_germ(x, d) or any(T.in_halfspace(x, d, p) for p in pts):
                        out.append((i, k, d))
            else:
                out.append((i, k, None))
        return out

    def count():
        return len({find(n) for n in nodes})

    for b in S.bands:
        v = S.views[b.name]
        group = touched(b.dom_base, v.dom) + touched(b.cod_base, v.cod)
        for n in group[1:]:
            parent[find(n)] = find(group[0])
    after = count()
    # the same count with x kept
    nodes0 = sorted({(i, k) for i, k, _ in nodes})
    parent0 = {n: n for n in nodes0}

    def find0(a):
        while parent0[a] != a:
            a = parent0[a]
        return a

    for b in S.bands:
        v = S.views[b.name]
        group = [(i, k) for i, k, _ in touched(b.dom_base, v.dom) + touched(b.cod_base, v.cod)]
        for n in group[1:]:
            parent0[find0(n)] = find0(group[0])
    before = len({find0(n) for n in nodes0})
    return after > before


# --------------------------------------------------------------------------
# splitting


def _extract(T, K):
    """A new tree isometric to the subtree ``K`` and the address map into it."""
    vid = {}
    new_edges = []
    emb = []

    def vertex_for(p):
        if p not in vid:
            vid[p] = len(vid)
        return vid[p]

    for u in sorted(K.verts):
        vertex_for(("v", u))
    for e, lo, hi in K.parts:
        a = vertex_for(T.point(e, lo))
        b = vertex_for(T.point(e, hi))
        if lo == hi:
            continue
        emb.append((e, lo))
        new_edges.append((a, b, hi - lo))
    U = FiniteMetricTree(len(vid), new_edges)

    def to_new(p):
        if p in vid:
            return ("v", vid[p])
        for k, (e, lo) in enumerate(emb):
            if p[0] == "e" and p[1] == e and lo <= p[2] <= lo + new_edges[k][2]:
                return U.point(k, p[2] - lo)
        raise IsometryError("point outside the extracted subtree")

    inv_v = {i: p for p, i in vid.items()}
    return U, to_new, (inv_v, tuple(emb))


def root_address(S, base, p):
    """Follow extraction records back to an original base."""
    while S.origins[base] is not None:
        parent, inv_v, emb = S.origins[base]
        if p[0] == "v":
            p = inv_v[p[1]]
        else:
            e, lo = emb[p[1]]
            p = ("e", e, lo + p[2])
        base = parent
    return base, p


def split_step(S, germ):
    """One step of the splitting process at a non-degenerate germ."""
    if germ.degenerate:
        raise IsometryError("degenerate germ: the system splits as a free product instead")
    valid = [g for g in find_splitting_germs(S, check=False) if g == germ]
    if not valid:
        raise IsometryError("germ is not a splitting germ of this system")
    base, x, eta = germ.base, germ.point, germ.direction
    T = S.bases[base]
    bands = list(S.bands)
    used = {b.name for b in bands}

    def fresh(name):
        n = name + "'"
        while n in used:
            n += "'"
        used.add(n)
        return n

    # cut every band end that straddles x
    changed = True
    keep_name = {}
    while changed:
        changed = False
        for k, b in enumerate(bands):
            view = _BandView(b, S.bases[b.dom_base], S.bases[b.cod_base], check=False)
            for side in ("dom", "cod"):
                bi = b.dom_base if side == "dom" else b.cod_base
                R = view.end(side)
                if bi != base or not R.contains_germ(x, eta) or len(R.directions_in(x)) < 2:
                    continue
                R_eta, R_rest = cut_at(R, x, eta)
                n_eta = fresh(b.name)
                keep_name[n_eta] = b.name
                bands[k:k + 1] = [view.restrict_side(side, R_rest, b.name),
                                  view.restrict_side(side, R_eta, n_eta)]
                changed = True
                break
            if changed:
                break
    C = _support_component(S, base, x)
    K_eta, K_star = cut_at(C, x, eta)
    views = {b.name: _BandView(b, S.bases[b.dom_base], S.bases[b.cod_base], check=False)
             for b in bands}
    inside = []
    for b in bands:
        for side in ("dom", "cod"):
            bi = b.dom_base if side == "dom" else b.cod_base
            R = views[b.name].end(side)
            if bi == base and R.measure() > 0 and K_eta.contains_germ(x, eta) and \
                    all(K_eta.contains(p) for p in R.points_of_interest()) and \
                    not all(p == x for p in R.points_of_interest()):
                if R.intersect(K_eta).measure() > 0:
                    inside.append((b.name, side, R))
    support = list(S.support)
    origins = list(S.origins)
    bases = list(S.bases)
    full = [(n, s) for n, s, R in inside if R == K_eta]
    if len(inside) == 2 and len(full) == 2 and full[0][0] != full[1][0]:
        (n1, s1), (n2, s2) = full
        carrier = germ.carrier[0]
        if keep_name.get(n1, n1) == carrier or n1 == carrier:
            pass
        elif keep_name.get(n2, n2) == carrier or n2 == carrier:
            (n1, s1), (n2, s2) = (n2, s2), (n1, s1)
        v1, v2 = views[n1], views[n2]
        o1 = "cod" if s1 == "dom" else "dom"
        O1 = v1.end(o1)
        b1o = v1.band.cod_base if o1 == "cod" else v1.band.dom_base
        b2o = v2.band.cod_base if s2 == "dom" else v2.band.dom_base
        pts = O1.extremal_points() if not O1.is_point() else [O1.single_point()]
        pairs = tuple((p, v2.across(s2, v1.across(o1, p))) for p in pts)
        name = keep_name.get(n1, n1)
        others = [b for b in bands if b.name not in (n1, n2)]
        if name in {b.name for b in others}:
            name = n1
        if s1 == "cod":
            composed = Band(name, b1o, b2o, pairs)
        else:
            # the carrier's surviving end keeps its side
            composed = Band(name, b2o, b1o, tuple((q, p) for p, q in pairs))
        bands = others + [composed]
        rest = S.support[base].components()
        new_sup = None
        for R in rest:
            R2 = K_star if R == C else R
            new_sup = R2 if new_sup is None else new_sup.union(R2)
        support[base] = new_sup
    else:
        U, to_new, rec = _extract(T, K_eta)
        nb = len(bases)
        bases.append(U)
        origins.append((base, rec[0], rec[1]))
        moved = set()
        for n, s, R in inside:
            moved.add((n, s))
        new_bands = []
        for b in bands:
            pairs = b.pairs
            db, cb = b.dom_base, b.cod_base
            if (b.name, "dom") in moved:
                pairs = tuple((to_new(p), q) for p, q in pairs)
                db = nb
            if (b.name, "cod") in moved:
                pairs = tuple((p, to_new(q)) for p, q in pairs)
                cb = nb
            new_bands.append(Band(b.name, db, cb, pairs))
        bands = new_bands
        new_sup = None
        for R in S.support[base].components():
            R2 = K_star if R == C else R
            new_sup = R2 if new_sup is None else new_sup.union(R2)
        support[base] = new_sup
        support.append(Region.whole(U))
    return IsometrySystem(bases, bands, support, origins)


# --------------------------------------------------------------------------
# interval exchanges and Rauzy-Veech induction


def _rows(permutation):
    if isinstance(permutation, tuple) and len(permutation) == 2 and isinstance(permutation[0], (list, tuple)):
        top, bottom = list(permutation[0]), list(permutation[1])
    else:
        bottom = list(permutation)
        top = sorted(bottom)
    if sorted(top) != sorted(bottom) or len(set(top)) != len(top):
        raise IsometryError("top and bottom rows must list the same labels once each")
    return top, bottom


def is_irreducible(top, bottom):
    for k in range(1, len(top)):
        if set(top[:k]) == set(bottom[:k]):
            return False
    return True


def _lengths_map(lengths, top):
    if isinstance(lengths, dict):
        lam = {k: to_fraction(v) for k, v in lengths.items()}
    else:
        labels = sorted(top)
        if len(lengths) != len(labels):
            raise IsometryError("one length per interval")
        lam = {lab: to_fraction(v) for lab, v in zip(labels, lengths)}
    if any(v <= 0 for v in lam.values()):
        raise IsometryError("interval lengths must be positive")
    return lam


def rauzy_step(lengths, permutation):
    """Classical Rauzy-Veech step; returns ``(lengths, (top, bottom), type)``."""
    top, bottom = _rows(permutation)
    if not is_irreducible(top, bottom):
        raise IsometryError("permutation is reducible")
    lam = _lengths_map(lengths, top)
    a, b = top[-1], bottom[-1]
    if lam[a] == lam[b]:
        raise IsometryError("connection: last top and bottom intervals have equal length")
    lam = dict(lam)
    if lam[a] > lam[b]:
        lam[a] -= lam[b]
        bottom.remove(b)
        bottom.insert(bottom.index(a) + 1, b)
        kind = "top"
    else:
        lam[b] -= lam[a]
        top.remove(a)
        top.insert(top.index(b) + 1, a)
        kind = "bottom"
    return lam, (tuple(top), tuple(bottom)), kind


def rauzy_trace(lengths, permutation, steps):
    """Up to ``steps`` Rauzy moves, stopping at a connection."""
    if not is_irreducible(*_rows(permutation)):
        raise IsometryError("permutation is reducible")
    out = []
    lam, rows = lengths, permutation
    for _ in range(steps):
        top, bottom = _rows(rows)
        lam_m = _lengths_map(lam, top)
        if lam_m[top[-1]] == lam_m[bottom[-1]]:
            out.append({"connection": True, "lengths": _lam_json(lam_m)})
            break
        lam, rows, kind = rauzy_step(lam_m, (top, bottom))
        out.append({"type": kind, "lengths": _lam_json(lam), "top": list(rows[0]),
                    "bottom": list(rows[1])})
    return out


def _lam_json(lam):
    return {str(k): fraction_str(v) for k, v in sorted(lam.items(), key=lambda kv: str(kv[0]))}


def reduced_permutation(top, bottom):
    """Relabel so that the top row reads 1..d; returns the bottom row."""
    pos = {lab: i + 1 for i, lab in enumerate(top)}
    return tuple(pos[lab] for lab in bottom)


def rauzy_class(permutation):
    """Closure of a reduced permutation under the two Rauzy moves (BFS)."""
    top, bottom = _rows(permutation)
    if not is_irreducible(top, bottom):
        raise IsometryError("permutation is reducible")
    start = reduced_permutation(top, bottom)
    seen = {start}
    order = [start]
    q = deque([start])
    d = len(start)
    while q:
        p = q.popleft()
        t = list(range(1, d + 1))
        for kind in ("top", "bottom"):
            tt, bb = list(t), list(p)
            a, b = tt[-1], bb[-1]
            if kind == "top":
                bb.remove(b)
                bb.insert(bb.index(a) + 1, b)
            else:
                tt.remove(a)
                tt.insert(tt.index(b) + 1, a)
            r = reduced_permutation(tt, bb)
            if r not in seen:
                seen.add(r)
                order.append(r)
                q.append(r)
    return sorted(order)


def iet_to_system(lengths, permutation):
    """One interval base carrying one band per label, top interval onto bottom interval."""
    top, bottom = _rows(permutation)
    if not is_irreducible(top, bottom):
        raise IsometryError("permutation is reducible")
    lam = _lengths_map(lengths, top)
    total = sum(lam.values(), Fraction(0))
    T = FiniteMetricTree.interval(total)
    start_top, start_bot = {}, {}
    s = Fraction(0)
    for lab in top:
        start_top[lab] = s
        s += lam[lab]
    s = Fraction(0)
    for lab in bottom:
        start_bot[lab] = s
        s += lam[lab]
    bands = []
    for lab in top:
        a, b = start_top[lab], start_bot[lab]
        bands.append(Band(str(lab), 0, 0, ((T.point(0, a), T.point(0, b)),
                                          (T.point(0, a + lam[lab]), T.point(0, b + lam[lab])))))
    return IsometrySystem([T], bands)


def _interval_of(R):
    if len(R.parts) != 1 or R.parts[0][0] != 0:
        raise IsometryError("not an interval system")
    return R.parts[0][1], R.parts[0][2]


def system_to_iet(S):
    """Read lengths and rows back from a one-interval translation system."""
    if len(S.bases) != 1 or S.bases[0].n_vertices != 2:
        raise IsometryError("not an interval system")
    lo, hi = _interval_of(S.support[0])
    tops, bots, lam = [], [], {}
    for b in S.bands:
        v = S.views[b.name]
        dlo, dhi = _interval_of(v.dom)
        clo, chi = _interval_of(v.cod)
        T = S.bases[0]
        if v.map(T.point(0, dlo)) != T.point(0, clo):
            raise IsometryError("band does not preserve orientation")
        lam[b.name] = dhi - dlo
        tops.append((dlo, b.name))
        bots.append((clo, b.name))
    tops.sort()
    bots.sort()
    return lam, (tuple(n for _, n in tops), tuple(n for _, n in bots))


def canonical_rauzy_germ(S):
    """The germ whose split reproduces the classical Rauzy step."""
    lam, (top, bottom) = system_to_iet(S)
    lo, hi = _interval_of(S.support[0])
    a, b = top[-1], bottom[-1]
    if lam[a] == lam[b]:
        raise IsometryError("connection: last top and bottom intervals have equal length")
    T = S.bases[0]
    if lam[a] > lam[b]:
        x, carrier = T.point(0, hi - lam[b]), (b, "cod")
    else:
        x, carrier = T.point(0, hi - lam[a]), (a, "dom")
    for g in find_splitting_germs(S, check=False):
        if g.point == x and g.direction == (0, 1) and g.carrier == carrier:
            return g
    raise IsometryError("canonical germ not found")


def rauzy_via_split(S):
    return split_step(S, canonical_rauzy_germ(S))


# --------------------------------------------------------------------------
# leaves


def _neighbors(S, base, x):
    out = []
    for b in S.bands:
        v = S.views[b.name]
        if b.dom_base == base and v.dom.contains(x):
            out.append(((b.cod_base, v.map(x)), b.name, "+"))
        if b.cod_base == base and v.cod.contains(x):
            out.append(((b.dom_base, v.inv(x)), b.name, "-"))
    return out


def explore_leaf(S, base, x, radius):
    """Ball of radius ``radius`` in the leaf through ``x`` (BFS over band moves)."""
    if radius < 0:
        raise IsometryError("radius must be non-negative")
    start = (base, S.bases[base].check_point(x))
    dist = {start: 0}
    q = deque([start])
    edges = []
    frontier = 0
    while q:
        p = q.popleft()
        nbrs = _neighbors(S, *p)
        if dist[p] == radius:
            frontier += sum(1 for r, _, _ in nbrs if r not in dist)
            continue
        for r, name, sgn in nbrs:
            edges.append((p, r, name, sgn))
            if r not in dist:
                dist[r] = dist[p] + 1
                q.append(r)
    valence = {p: S.incidence(*p) for p in dist}
    return {"vertices": dist, "edges": edges, "valence": valence, "frontier": frontier}


def leaf_json(leaf):
    def pj(p):
        return {"base": p[0], "point": point_to_json(p[1])}
    verts = sorted(leaf["vertices"], key=lambda p: (leaf["vertices"][p], p[0], point_key(p[1])))
    return {"vertices": [dict(pj(p), depth=leaf["vertices"][p], valence=leaf["valence"][p])
                         for p in verts],
            "edges": [{"from": pj(a), "to": pj(b), "band": n, "sense": s}
                      for a, b, n, s in leaf["edges"]],
            "frontier": leaf["frontier"]}


def orbit_points(S, base, x, radius):
    return set(explore_leaf(S, base, x, radius)["vertices"])


# --------------------------------------------------------------------------
# driver


def run_machine(S, prune=True, split=True, max_steps=100):
    """Alternate pruning and splitting; yields one trace record per step."""
    records = []
    step = 0
    while step < max_steps:
        if prune:
            S2, halted, n, _ = prune_to_limit(S, max_steps)
            if n:
                S = S2
                step += 1
                records.append({"step": step, "action": "prune", "prune_steps": n,
                                "measures": measures_json(S.measures())})
                continue
        if not split:
            break
        try:
            germs = find_splitting_germs(S, check=prune)
        except IsometryError:
            germs = []
        nondeg = [g for g in germs if not g.degenerate]
        if not nondeg:
            records.append({"step": step, "action": "stop",
                            "degenerate_germs": [g.to_json() for g in germs if g.degenerate],
                            "measures": measures_json(S.measures())})
            break
        g = nondeg[0]
        faces = facing_pairs(S, germs)
        S = split_step(S, g)
        step += 1
        records.append({"step": step, "action": "split", "germ": g.to_json(),
                        "facing_pairs": [list(p) for p in faces],
                        "measures": measures_json(S.measures())})
    return S, records


def trace_lines(records):
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


__all__ = [
    "Band", "FiniteMetricTree", "IsometryError", "IsometrySystem", "Region", "SplittingGerm",
    "canonical_rauzy_germ", "classify", "classify_json", "cut_at", "explore_leaf",
    "facing_pairs", "find_splitting_germs", "iet_to_system", "is_irreducible", "is_prune_stable",
    "leaf_json", "measures_json", "orbit_points", "prune_step", "prune_to_limit", "rauzy_class",
    "rauzy_step", "rauzy_trace", "rauzy_via_split", "reduced_permutation", "removal_disconnects",
    "root_address", "run_machine", "split_step", "system_to_iet", "trace_lines",
]
