"""Rational currents evaluated on cylinders, the tree/current pairing, and the
discontinuity experiment for A*B*C and B*<t>.

A cylinder is given by a reduced edge path ``J = d_1 k_1 d_2 ... k_{n-1} d_n``
in a marked graph of groups, where ``k_i`` is a local element at the terminal
vertex of ``d_i``.  The value of a current is the number of group elements
carrying ``J`` (or its reverse) into the support with first edge in a fixed
fundamental domain, which for quotient paths is a pattern count.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

from .core import (
    FreeProductContext,
    FreeProductError,
    GroupElement,
    PeripheralFactor,
    boundary_eq,
    cyclic_reduce,
    format_element,
    format_point,
    is_peripheral,
    parse_element,
    translate_point,
    vertex_point,
)
from .gog import (
    FREE_PIECE,
    StandardFormVertexGroup,
    TreeError,
    _Builder,
    build_rose,
    build_splitting,
    direction_name,
    fraction_str,
    path_inverse,
    rev,
    solve_marking,
)


class CurrentError(FreeProductError):
    pass


@dataclass(frozen=True)
class RationalCurrent:
    """``element`` current eta_g, or ``vertex`` current eta_{alpha, omega}."""

    kind: str
    element: object = None
    alpha: object = None
    omega: object = None

    @classmethod
    def of_element(cls, g):
        if g.is_identity() or is_peripheral(g) is not None:
            raise CurrentError("element currents need a non-peripheral element")
        _, core = cyclic_reduce(g)
        return cls("element", core)

    @classmethod
    def of_vertices(cls, alpha, omega):
        if alpha.kind != "vertex" or omega.kind != "vertex":
            raise CurrentError("vertex-pair currents need two peripheral vertices")
        if boundary_eq(alpha, omega):
            raise CurrentError("vertex-pair current needs distinct points")
        a, b = sorted((alpha, omega))
        return cls("vertex", None, a, b)

    def __add__(self, other):
        return CurrentSum(_terms(self) + _terms(other))

    def describe(self, ctx):
        if self.kind == "element":
            return f"eta[{format_element(self.element)}]"
        return f"eta[{format_point(ctx, self.alpha)}, {format_point(ctx, self.omega)}]"


@dataclass(frozen=True)
class CurrentSum:
    terms: tuple

    def __add__(self, other):
        return CurrentSum(self.terms + _terms(other))


def _terms(x):
    return tuple(x.terms) if isinstance(x, CurrentSum) else (x,)


@dataclass(frozen=True)
class Cylinder:
    """Reduced edge path ``edges`` with interior local ``labels``."""

    tree: object = field(repr=False, compare=False)
    edges: tuple
    labels: tuple = ()
    anchor: object = field(default=None, compare=False)

    def __post_init__(self):
        T = self.tree
        if not self.edges:
            raise CurrentError("cylinder path must have at least one edge")
        if len(self.labels) != len(self.edges) - 1:
            raise CurrentError("cylinder needs one label per interior vertex")
        for d in self.edges:
            if not 0 <= d < 2 * T.n_edges:
                raise CurrentError(f"edge {d} out of range")
        for i, k in enumerate(self.labels):
            a, b = self.edges[i], self.edges[i + 1]
            if T.terminal(a) != T.origin(b):
                raise CurrentError("cylinder path is not connected")
            if b == rev(a) and k.is_identity():
                raise CurrentError("cylinder path backtracks")

    def reverse(self):
        return Cylinder(self.tree, tuple(rev(d) for d in reversed(self.edges)),
                        tuple(k.inverse() for k in reversed(self.labels)), self.anchor)

    def key(self):
        return (len(self.edges), self.edges, tuple(k.sort_key() for k in self.labels))

    def canonical(self):
        r = self.reverse()
        return r if r.key() < self.key() else self

    def describe(self):
        T = self.tree
        parts = [direction_name(self.edges[0])]
        for i, k in enumerate(self.labels):
            v = T.terminal(self.edges[i])
            parts.append(f"[{format_element(T.phi_local(v, k))}]")
            parts.append(direction_name(self.edges[i + 1]))
        return " ".join(parts)


def _count(seq, J, cyclic):
    """Occurrences of ``J`` in a sequence of (edge, element after it)."""
    m, n = len(seq), len(J.edges)
    if m == 0:
        return 0
    starts = range(m) if cyclic else range(m - n + 1)
    hits = 0
    for i in starts:
        ok = True
        for j in range(n):
            d, h = seq[(i + j) % m]
            if d != J.edges[j] or (j < n - 1 and h != J.labels[j]):
                ok = False
                break
        if ok:
            hits += 1
    return hits


def segment(T, alpha, omega):
    """Reduced path between the vertices fixed by two peripheral vertex points."""
    def anchor(p):
        P_i, j = T.mu_factor[p.factor]
        b = _Builder(T, T.base)
        b.path(T.mu(GroupElement(T.ctx, p.prefix)))
        b.path(P_i)
        return b.build()

    for p in (alpha, omega):
        if p.kind != "vertex":
            raise CurrentError("vertex_distance needs peripheral vertex points")
    Pa, Pw = anchor(alpha), anchor(omega)
    b = _Builder(T, Pa.end(T))
    b.path(path_inverse(T, Pa))
    b.path(Pw)
    return b.build()


def vertex_distance(T, alpha, omega):
    if boundary_eq(alpha, omega):
        return Fraction(0)
    Q = segment(T, alpha, omega)
    return sum((T.length(d) for d, _ in Q.steps), Fraction(0))


def _support(T, eta, cache):
    key = (id(T), eta)
    if key in cache:
        return cache[key]
    if eta.kind == "element":
        if T.translation_length(eta.element) == 0:
            out = ((), True)
        else:
            out = (T.axis(eta.element).cycle, True)
    else:
        out = (segment(T, eta.alpha, eta.omega).steps, False)
    cache[key] = out
    return out


def cylinder_value(eta, C, _cache=None):
    """Exact value of a current on a cylinder (orientation-free)."""
    cache = {} if _cache is None else _cache
    total = 0
    for term in _terms(eta):
        seq, cyclic = _support(C.tree, term, cache)
        total += _count(seq, C, cyclic) + _count(seq, C.reverse(), cyclic)
    return total


def edge_cylinder(T, e):
    return Cylinder(T, (2 * e,), ())


def pairing(T, eta):
    """Sum over edge orbits of length times the value on the edge cylinder."""
    cache = {}
    total = Fraction(0)
    for e, (_, _, L) in enumerate(T.edges):
        total += L * cylinder_value(eta, edge_cylinder(T, e), cache)
    return total


def _local_elements(T, v, zbound):
    ps = T.pieces[v]
    ident = T.local_identity(v)
    if not ps:
        return [ident]
    if len(ps) > 1 or ps[0] == FREE_PIECE:
        raise CurrentError("path enumeration needs Grushko vertex groups")
    f = T.ctx.factors[ps[0]]
    return [ident] + [T.local_piece(v, 0, a) for a in f.nonidentity(zbound)]


def enumerate_cylinders(T, depth, zbound):
    """Reduced paths with 1..depth edges, one per reversal pair, sorted."""
    out = {}

    def rec(edges, labels):
        C = Cylinder(T, tuple(edges), tuple(labels))
        c = C.canonical()
        out[c.key()] = c
        if len(edges) == depth:
            return
        v = T.terminal(edges[-1])
        for k in _local_elements(T, v, zbound):
            for d in T.directions(v):
                if d == rev(edges[-1]) and k.is_identity():
                    continue
                rec(edges + [d], labels + [k])

    for d in range(2 * T.n_edges):
        rec([d], [])
    return [out[k] for k in sorted(out)]


# --------------------------------------------------------------------------
# the discontinuity experiment


def family1_context():
    return FreeProductContext([PeripheralFactor.cyclic("A", 2), PeripheralFactor.integers("B"),
                               PeripheralFactor.cyclic("C", 2)], 0)


def family1_tree(ctx, k):
    """Splitting <A, b^k C b^-k> * B with one unit edge."""
    P = StandardFormVertexGroup(ctx, [(ctx.identity, 0), (ctx.letter("B", k), 2)])
    Q = StandardFormVertexGroup(ctx, [(ctx.identity, 1)])
    return build_splitting(ctx, P, Q, 1)


def family1_element(ctx, k):
    return parse_element(ctx, f"A:1 B:{k} C:1 B:{-k}")


def family1_limit_tree(ctx):
    """Grushko tree with the B vertex in the middle of A - B - C."""
    I = ctx.identity
    return solve_marking(ctx, [(0,), (1,), (2,)], [(I,), (I,), (I,)],
                         [(1, 0, 1), (1, 2, 1)], [I, I], 1)


def family1_limit_current(ctx):
    beta = vertex_point(ctx.identity, 1)
    a, c = ctx.letter("A"), ctx.letter("C")
    return (RationalCurrent.of_vertices(beta, translate_point(ctx, a, beta))
            + RationalCurrent.of_vertices(beta, translate_point(ctx, c, beta)))


def family2_context():
    return FreeProductContext([PeripheralFactor.integers("B")], 1, ["t"])


def family2_tree(ctx, k):
    """Splitting <t b^k> * B with one unit edge."""
    P = StandardFormVertexGroup(ctx, [(ctx.identity, parse_element(ctx, f"t B:{k}"))])
    Q = StandardFormVertexGroup(ctx, [(ctx.identity, 0)])
    return build_splitting(ctx, P, Q, 1)


def family2_element(ctx, k):
    return parse_element(ctx, f"t B:{k}")


def family2_limit_tree(ctx):
    """Grushko tree: the B vertex with a t-loop of length 2."""
    return solve_marking(ctx, [(0,)], [(ctx.identity,)], [(0, 0, 2)], [ctx.letter("t")], 0)


def family2_limit_current(ctx):
    beta = vertex_point(ctx.identity, 0)
    return RationalCurrent.of_vertices(beta, translate_point(ctx, ctx.letter("t"), beta))


def stabilization_index(values, limit):
    """Smallest K (1-based) with values[k-1] == limit for every k >= K, else None."""
    K = None
    for k in range(len(values), 0, -1):
        if values[k - 1] != limit:
            break
        K = k
    return K


def _cylinder_table(rose, elements, limit, depth, zbound):
    rows = []
    cache = {}
    for C in enumerate_cylinders(rose, depth, zbound):
        vals = [cylinder_value(RationalCurrent.of_element(g), C, cache) for g in elements]
        lim = cylinder_value(limit, C, cache)
        rows.append({"path": C.describe(), "values": vals, "limit": lim,
                     "stabilizes_at": stabilization_index(vals, lim)})
    return rows


def discontinuity_experiment(kmax=20, cylinder_depth=3, zbound=3):
    """Both families for k = 1..kmax.

    Cylinders use peripheral labels of letter length <= zbound; keeping the
    set fixed while kmax grows is what makes the stabilization indices
    meaningful.
    """
    if kmax < 2:
        raise CurrentError("kmax must be at least 2")
    if zbound < 1:
        raise CurrentError("zbound must be at least 1")
    if cylinder_depth < 1:
        raise CurrentError("cylinder depth must be at least 1")
    ctx1 = family1_context()
    ctx2 = family2_context()
    fam1, fam2 = [], []
    g1 = [family1_element(ctx1, k) for k in range(1, kmax + 2)]
    g2 = [family2_element(ctx2, k) for k in range(1, kmax + 2)]
    for k in range(1, kmax + 1):
        T = family1_tree(ctx1, k)
        fam1.append({"k": k, "self": T.translation_length(g1[k - 1]),
                     "next": T.translation_length(g1[k])})
        S = family2_tree(ctx2, k)
        fam2.append({"k": k, "self": S.translation_length(g2[k - 1]),
                     "next": S.translation_length(g2[k])})
    lim1, lim2 = family1_limit_current(ctx1), family2_limit_current(ctx2)
    cyl1 = _cylinder_table(build_rose(ctx1), g1[:kmax], lim1, cylinder_depth, zbound)
    cyl2 = _cylinder_table(build_rose(ctx2), g2[:kmax], lim2, cylinder_depth, zbound)
    T1, S1 = family1_limit_tree(ctx1), family2_limit_tree(ctx2)
    inc = {
        "family1": {"limit_of_self_pairings": fraction_str(fam1[-1]["self"]),
                    "next_pairing": fraction_str(fam1[-1]["next"]),
                    "limit_tree_pairing": fraction_str(pairing(T1, lim1))},
        "family2": {"limit_of_self_pairings": fraction_str(fam2[-1]["self"]),
                    "next_pairing": fraction_str(fam2[-1]["next"]),
                    "limit_tree_pairing": fraction_str(pairing(S1, lim2))},
    }
    for fam in inc.values():
        fam["incompatible"] = fam["limit_of_self_pairings"] != fam["limit_tree_pairing"]
    return {
        "kmax": kmax,
        "depth": cylinder_depth,
        "zbound": zbound,
        "family1": [{"k": r["k"], "self": fraction_str(r["self"]), "next": fraction_str(r["next"])}
                    for r in fam1],
        "family2": [{"k": r["k"], "self": fraction_str(r["self"]), "next": fraction_str(r["next"])}
                    for r in fam2],
        "cylinders": {"family1": cyl1, "family2": cyl2},
        "all_stabilized": all(r["stabilizes_at"] is not None for r in cyl1 + cyl2),
        "incompatibility": inc,
    }


def report_csv(report):
    """Length tables and the family-1 cylinder table as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "k", "self", "next"])
    for fam in ("family1", "family2"):
        for r in report[fam]:
            w.writerow([fam, r["k"], r["self"], r["next"]])
    w.writerow([])
    k = report["kmax"]
    w.writerow(["family", "path", "limit", "stabilizes_at"] + [f"k={i}" for i in range(1, k + 1)])
    for fam in ("family1", "family2"):
        for r in report["cylinders"][fam]:
            w.writerow([fam, r["path"], r["limit"],
                        "" if r["stabilizes_at"] is None else r["stabilizes_at"]] + r["values"])
    return buf.getvalue()


__all__ = [
    "CurrentError", "CurrentSum", "Cylinder", "RationalCurrent", "cylinder_value",
    "discontinuity_experiment", "edge_cylinder", "enumerate_cylinders", "pairing",
    "report_csv", "segment", "stabilization_index", "vertex_distance", "TreeError",
]
