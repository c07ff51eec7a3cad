"""Marked graphs of groups with trivial edge groups.

A tree is stored through its quotient graph.  Each vertex carries an
abstract free product of *pieces*: a peripheral factor (by index) or a free
infinite cyclic piece.  Oriented edge ``d`` of positive edge ``e`` is
``2*e`` (from ``edges[e][0]`` to ``edges[e][1]``) or ``2*e + 1`` (reversed).

The marking is kept in both directions:

* marking-in: every piece and every edge has an image in G, giving a
  homomorphism from the fundamental groupoid of the graph of groups to G;
* marking-out: every factor ``i`` is sent to ``(path from base to a vertex,
  piece index)`` and every free generator to a loop at the base vertex.

Paths alternate local vertex elements and oriented edges.  With trivial edge
groups the only reduction is ``d . 1 . reverse(d) -> nothing``, so reduced
paths are normal forms and equality is structural.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    FREE,
    PERIPHERAL,
    FreeProductContext,
    FreeProductError,
    GroupElement,
    PeripheralFactor,
    cyclic_reduce,
    format_element,
    is_peripheral,
    parse_element,
)


class TreeError(FreeProductError):
    """Invalid graph of groups, marking, or surgery request."""


FREE_PIECE = -1


def rev(d):
    return d ^ 1


def direction_name(d):
    return f"e{d >> 1}{'-' if d & 1 else '+'}"


def to_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TreeError(f"cannot read {x!r} as an exact rational")


def fraction_str(q):
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Path:
    """``head . d_1 . h_1 . d_2 . h_2 ...`` starting at vertex ``start``."""

    start: int
    head: GroupElement
    steps: tuple

    def end(self, T):
        return T.terminal(self.steps[-1][0]) if self.steps else self.start

    def edge_count(self):
        return len(self.steps)


class _Builder:
    """Accumulates a reduced path one edge or element at a time."""

    __slots__ = ("T", "start", "head", "steps")

    def __init__(self, T, start, head=None):
        self.T = T
        self.start = start
        self.head = head if head is not None else T.local_identity(start)
        self.steps = []

    def vertex(self):
        return self.T.terminal(self.steps[-1][0]) if self.steps else self.start

    def elem(self, h):
        if h.is_identity():
            return
        if self.steps:
            self.steps[-1][1] = self.steps[-1][1] * h
        else:
            self.head = self.head * h

    def edge(self, d):
        T = self.T
        if T.origin(d) != self.vertex():
            raise TreeError("path edge does not start at the current vertex")
        if self.steps and self.steps[-1][0] == rev(d) and self.steps[-1][1].is_identity():
            self.steps.pop()
        else:
            self.steps.append([d, T.local_identity(T.terminal(d))])

    def path(self, p):
        if p.start != self.vertex():
            raise TreeError("path concatenation at mismatched vertices")
        self.elem(p.head)
        for d, h in p.steps:
            self.edge(d)
            self.elem(h)

    def inv_path(self, p):
        self.path(path_inverse(self.T, p))

    def build(self):
        return Path(self.start, self.head, tuple((d, h) for d, h in self.steps))


def path_inverse(T, p):
    elems = [p.head] + [h for _, h in p.steps]
    steps = []
    for k in range(len(p.steps) - 1, -1, -1):
        steps.append((rev(p.steps[k][0]), elems[k].inverse()))
    return Path(p.end(T), elems[-1].inverse(), tuple(steps))


@dataclass(frozen=True)
class AxisPath:
    """Cyclic fundamental domain of an axis.

    ``cycle`` lists ``(oriented edge, element at its terminal vertex)``;
    ``conjugator`` is a path from the base vertex to the origin of the first
    cycle edge with ``mu(g) = conjugator . cycle . conjugator^-1``.
    """

    cycle: tuple
    length: Fraction
    conjugator: Path

    def edges(self):
        return [d for d, _ in self.cycle]


class MarkedGraphOfGroups:
    """Quotient graph of groups with trivial edge groups and a two-way marking."""

    def __init__(self, ctx, pieces, piece_images, edges, edge_images, base,
                 mu_factor, mu_free, verify=True):
        self.ctx = ctx
        self.pieces = tuple(tuple(p) for p in pieces)
        self.piece_images = tuple(tuple(p) for p in piece_images)
        self.edges = tuple((int(o), int(t), to_fraction(L)) for o, t, L in edges)
        self.edge_images = tuple(edge_images)
        self.base = int(base)
        self.local_ctx = tuple(_local_context(ctx, p) for p in self.pieces)
        self.mu_factor = tuple(mu_factor)
        self.mu_free = tuple(mu_free)
        self._check_shape()
        if verify:
            self.verify_marking()

    # ---- basic structure ---------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.pieces)

    @property
    def n_edges(self):
        return len(self.edges)

    def origin(self, d):
        e = self.edges[d >> 1]
        return e[1] if d & 1 else e[0]

    def terminal(self, d):
        e = self.edges[d >> 1]
        return e[0] if d & 1 else e[1]

    def length(self, d):
        return self.edges[d >> 1][2]

    def directions(self, v):
        """Oriented edges with origin ``v`` in increasing order."""
        out = []
        for e, (o, t, _) in enumerate(self.edges):
            if o == v:
                out.append(2 * e)
            if t == v:
                out.append(2 * e + 1)
        return sorted(out)

    def valence(self, v):
        return len(self.directions(v))

    def volume(self):
        return sum((e[2] for e in self.edges), Fraction(0))

    def is_trivial_vertex(self, v):
        return not self.pieces[v]

    def local_identity(self, v):
        return self.local_ctx[v].identity

    def local_piece(self, v, j, a):
        return GroupElement(self.local_ctx[v], ((PERIPHERAL, j, a),))

    def is_grushko(self):
        seen = []
        for ps in self.pieces:
            if len(ps) > 1 or (ps and ps[0] == FREE_PIECE):
                return False
            seen.extend(ps)
        return sorted(seen) == list(range(len(self.ctx.factors)))

    def describe_vertex(self, v):
        parts = []
        for j, p in enumerate(self.pieces[v]):
            img = self.piece_images[v][j]
            if p == FREE_PIECE:
                parts.append(f"<{format_element(img)}>")
            elif img.is_identity():
                parts.append(self.ctx.factors[p].name)
            else:
                parts.append(f"({format_element(img)}){self.ctx.factors[p].name}")
        return "*".join(parts) if parts else "1"

    def _check_shape(self):
        n = self.n_vertices
        if n == 0:
            raise TreeError("graph has no vertices")
        if len(self.piece_images) != n:
            raise TreeError("piece images do not match pieces")
        for v in range(n):
            if len(self.piece_images[v]) != len(self.pieces[v]):
                raise TreeError("piece images do not match pieces")
        if len(self.edge_images) != len(self.edges):
            raise TreeError("edge images do not match edges")
        for o, t, L in self.edges:
            if not (0 <= o < n and 0 <= t < n):
                raise TreeError("edge endpoint out of range")
            if L <= 0:
                raise TreeError("edge lengths must be positive")
        if not 0 <= self.base < n:
            raise TreeError("base vertex out of range")
        seen = {self.base}
        todo = [self.base]
        while todo:
            v = todo.pop()
            for d in self.directions(v):
                w = self.terminal(d)
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        if len(seen) != n:
            raise TreeError("graph is not connected")

    # ---- marking-in --------------------------------------------------------
    def phi_local(self, v, h):
        ctx = self.ctx
        out = ctx.identity
        for _, j, a in h.syllables:
            p = self.pieces[v][j]
            img = self.piece_images[v][j]
            if p == FREE_PIECE:
                out = out * img ** a
            else:
                out = out * img * GroupElement(ctx, ((PERIPHERAL, p, a),)) * img.inverse()
        return out

    def phi_edge(self, d):
        g = self.edge_images[d >> 1]
        return g.inverse() if d & 1 else g

    def phi_path(self, p):
        out = self.phi_local(p.start, p.head)
        for d, h in p.steps:
            out = out * self.phi_edge(d) * self.phi_local(self.terminal(d), h)
        return out

    # ---- marking-out -------------------------------------------------------
    def mu(self, g):
        """Reduced loop at the base vertex representing ``g``."""
        b = _Builder(self, self.base)
        for s in g.syllables:
            if s[0] == PERIPHERAL:
                P, j = self.mu_factor[s[1]]
                b.path(P)
                b.elem(self.local_piece(P.end(self), j, s[2]))
                b.inv_path(P)
            else:
                L = self.mu_free[s[1]]
                if s[2] > 0:
                    b.path(L)
                else:
                    b.inv_path(L)
        return b.build()

    def tree_paths(self):
        """Spanning-tree paths from the base vertex (BFS, smallest edges first)."""
        paths = {self.base: Path(self.base, self.local_identity(self.base), ())}
        tree_edges = set()
        queue = deque([self.base])
        while queue:
            v = queue.popleft()
            for d in self.directions(v):
                w = self.terminal(d)
                if w not in paths:
                    b = _Builder(self, self.base)
                    b.path(paths[v])
                    b.edge(d)
                    paths[w] = b.build()
                    tree_edges.add(d >> 1)
                    queue.append(w)
        return paths, tree_edges

    def groupoid_generators(self):
        """Loops at the base generating the fundamental group."""
        paths, tree_edges = self.tree_paths()
        gens = []
        for v in range(self.n_vertices):
            for j, p in enumerate(self.pieces[v]):
                if p == FREE_PIECE:
                    vals = [1]
                else:
                    f = self.ctx.factors[p]
                    vals = [1] if f.is_infinite else f.nonidentity()
                for a in vals:
                    b = _Builder(self, self.base)
                    b.path(paths[v])
                    b.elem(self.local_piece(v, j, a))
                    b.inv_path(paths[v])
                    gens.append(b.build())
        for e, (o, t, _) in enumerate(self.edges):
            if e in tree_edges:
                continue
            b = _Builder(self, self.base)
            b.path(paths[o])
            b.edge(2 * e)
            b.inv_path(paths[t])
            gens.append(b.build())
        return gens

    def standard_generators(self):
        ctx = self.ctx
        gens = []
        for i, f in enumerate(ctx.factors):
            vals = [1] if f.is_infinite else f.nonidentity()
            gens.extend(GroupElement(ctx, ((PERIPHERAL, i, a),)) for a in vals)
        gens.extend(ctx.gen(j) for j in range(ctx.free_rank))
        return gens

    def verify_marking(self):
        """Check both round trips of the marking; raise ``TreeError`` otherwise."""
        if len(self.mu_factor) != len(self.ctx.factors) or len(self.mu_free) != self.ctx.free_rank:
            raise TreeError("marking-out has the wrong number of entries")
        for i, (P, j) in enumerate(self.mu_factor):
            v = P.end(self)
            if P.start != self.base or not (0 <= j < len(self.pieces[v])) or self.pieces[v][j] != i:
                raise TreeError(f"marking-out of factor {i} does not land on its piece")
        for L in self.mu_free:
            if L.start != self.base or L.end(self) != self.base:
                raise TreeError("marking-out of a free generator is not a loop")
        for s in self.standard_generators():
            if self.phi_path(self.mu(s)) != s:
                raise TreeError(f"marking round trip fails on generator {format_element(s)}")
        for t in self.groupoid_generators():
            if self.mu(self.phi_path(t)) != t:
                raise TreeError("marking round trip fails on a graph-of-groups generator")

    # ---- lengths -----------------------------------------------------------
    def cyclic_loop(self, g):
        """Cyclically reduce ``mu(g)``; returns ``(conjugator path, cycle)``."""
        p = self.mu(g)
        start, head, steps = p.start, p.head, [list(s) for s in p.steps]
        pre = _Builder(self, self.base)
        while len(steps) >= 2:
            wrap = steps[-1][1] * head
            if wrap.is_identity() and steps[0][0] == rev(steps[-1][0]):
                pre.elem(head)
                pre.edge(steps[0][0])
                head = steps[0][1]
                start = self.terminal(steps[0][0])
                steps = steps[1:-1]
            else:
                break
        if steps:
            pre.elem(head)
            cycle = [tuple(s) for s in steps]
            cycle[-1] = (cycle[-1][0], steps[-1][1] * head)
            return pre.build(), tuple(cycle)
        conj = pre.build()
        return conj, Path(start, head, ())

    def translation_length(self, g):
        _, cyc = self.cyclic_loop(g)
        if isinstance(cyc, Path):
            return Fraction(0)
        return sum((self.length(d) for d, _ in cyc), Fraction(0))

    def axis(self, g):
        conj, cyc = self.cyclic_loop(g)
        if isinstance(cyc, Path):
            raise TreeError("element is elliptic; it has no axis")
        return AxisPath(cyc, sum((self.length(d) for d, _ in cyc), Fraction(0)), conj)

    def elliptic_fixed_vertex(self, g):
        """``(vertex, conjugator)`` with ``conjugator^-1 g conjugator`` in the vertex group."""
        if g.is_identity():
            raise TreeError("identity fixes every vertex")
        conj, cyc = self.cyclic_loop(g)
        if not isinstance(cyc, Path):
            raise TreeError("element is hyperbolic")
        v = cyc.start
        c = self.phi_path(conj)
        inner = c.inverse() * g * c
        if inner != self.phi_local(v, cyc.head):
            raise TreeError("fixed-vertex certificate does not match (corrupt tree)")
        if self.vertex_group(v).contains(inner) is None:
            raise TreeError("membership parser rejected the fixed-vertex certificate")
        return v, c

    def vertex_group(self, v):
        gens = []
        for j, p in enumerate(self.pieces[v]):
            img = self.piece_images[v][j]
            if p == FREE_PIECE:
                gens.append((self.ctx.identity, img))
            else:
                gens.append((img, p))
        return StandardFormVertexGroup(self.ctx, gens, check=False)

    # ---- export ------------------------------------------------------------
    def to_json(self):
        verts = []
        for v in range(self.n_vertices):
            ps = []
            for j, p in enumerate(self.pieces[v]):
                img = format_element(self.piece_images[v][j])
                if p == FREE_PIECE:
                    ps.append({"free": img})
                else:
                    ps.append({"factor": self.ctx.factors[p].name, "conjugator": img})
            verts.append({"pieces": ps})
        edges = [{"from": o, "to": t, "length": fraction_str(L),
                  "image": format_element(self.edge_images[e])}
                 for e, (o, t, L) in enumerate(self.edges)]
        return {"context": self.ctx.to_json(), "base": self.base,
                "vertices": verts, "edges": edges}

    def to_dot(self):
        lines = ["graph G {"]
        for v in range(self.n_vertices):
            lines.append(f'  v{v} [label="v{v}: {self.describe_vertex(v)}"];')
        for e, (o, t, L) in enumerate(self.edges):
            lines.append(f'  v{o} -- v{t} [label="e{e} ({fraction_str(L)})"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return (f"MarkedGraphOfGroups({self.n_vertices} vertices, {self.n_edges} edges, "
                f"vol={fraction_str(self.volume())})")


def _local_context(ctx, pieces):
    facs = []
    for j, p in enumerate(pieces):
        if p == FREE_PIECE:
            facs.append(PeripheralFactor.integers(f"_f{j}"))
        else:
            f = ctx.factors[p]
            facs.append(PeripheralFactor(f"{f.name}_{j}", f.table, f.identity)
                        if not f.is_infinite else PeripheralFactor.integers(f"{f.name}_{j}"))
    if not facs:
        return _TRIVIAL_LOCAL
    return FreeProductContext(facs, 0)


class _TrivialLocal:
    """Local context of a vertex with trivial group."""

    factors = ()
    free_rank = 0

    def __init__(self):
        self.identity = GroupElement(self, ())


_TRIVIAL_LOCAL = _TrivialLocal()


def translation_length(T, g):
    return T.translation_length(g)


def axis(T, g):
    return T.axis(g)


def elliptic_fixed_vertex(T, g):
    return T.elliptic_fixed_vertex(g)


# --------------------------------------------------------------------------
# standard-form subgroups


class StandardFormVertexGroup:
    """Subgroup generated by conjugated pieces ``c G_i c^-1`` or ``<u>``.

    ``generators`` is a list of ``(conjugator, piece)`` where ``piece`` is a
    factor index or a non-peripheral element; a free piece contributes the
    cyclic group generated by ``conjugator * piece * conjugator^-1``.
    """

    def __init__(self, ctx, generators, check=True):
        self.ctx = ctx
        gens = []
        for c, piece in generators:
            if isinstance(piece, GroupElement):
                u = c * piece * c.inverse()
                if u.is_identity() or is_peripheral(u) is not None:
                    raise TreeError("a free piece must be non-peripheral")
                cc, w = cyclic_reduce(u)
                gens.append(("free", cc, w))
            else:
                if not isinstance(piece, int) or not 0 <= piece < len(ctx.factors):
                    raise TreeError(f"unknown peripheral piece {piece!r}")
                syl = list(c.syllables)
                if syl and syl[-1][0] == PERIPHERAL and syl[-1][1] == piece:
                    syl.pop()
                gens.append(("factor", GroupElement(ctx, tuple(syl)), piece))
        self.generators = tuple(gens)
        facs = [g[2] for g in gens if g[0] == "factor"]
        if len(set(facs)) != len(facs):
            raise TreeError("a factor appears twice in a standard-form group")
        if check:
            self._ping_pong()

    @classmethod
    def parse(cls, ctx, items):
        """``items``: list of strings ``"A"``, ``"b C"`` (conjugator then factor
        name) or ``"free: t B:1"``; or dicts with ``factor``/``free`` keys."""
        gens = []
        for it in items:
            if isinstance(it, dict):
                c = parse_element(ctx, it.get("conjugator", "1"))
                if "factor" in it:
                    gens.append((c, ctx.factor_index(it["factor"])))
                elif "free" in it:
                    gens.append((c, parse_element(ctx, it["free"])))
                else:
                    raise TreeError("piece needs 'factor' or 'free'")
                continue
            it = it.strip()
            if it.startswith("free:"):
                gens.append((ctx.identity, parse_element(ctx, it[5:])))
                continue
            toks = it.split()
            name = toks[-1]
            if name not in ctx._factor_index:
                raise TreeError(f"{name!r} is not a peripheral factor; free letters must be "
                                "given as 'free: <word>'")
            gens.append((parse_element(ctx, " ".join(toks[:-1])), ctx.factor_index(name)))
        return cls(ctx, gens)

    def conjugate(self, k):
        """The group ``k H k^-1``."""
        gens = []
        for g in self.generators:
            if g[0] == "factor":
                gens.append((k * g[1], g[2]))
            else:
                gens.append((k * g[1], g[2]))
        return StandardFormVertexGroup(self.ctx, gens, check=False)

    def letters(self, zbound=1):
        """Sample generators used by the ping-pong check, with core sizes."""
        out = []
        for idx, g in enumerate(self.generators):
            if g[0] == "factor":
                c, i = g[1], g[2]
                f = self.ctx.factors[i]
                for a in f.nonidentity(zbound):
                    x = c * GroupElement(self.ctx, ((PERIPHERAL, i, a),)) * c.inverse()
                    out.append((idx, x, len(c) + 1, len(c) + 1, 0))
            else:
                c, w = g[1], g[2]
                m = len(w)
                core = len(c) + m // 2 + 1
                u = c * w * c.inverse()
                out.append((idx, u, core, core, 1))
                out.append((idx, u.inverse(), core, core, -1))
        return out

    def _ping_pong(self):
        """Sufficient check: in every product of two letters from distinct
        pieces (or equal free letters) more than half of each letter survives."""
        L = self.letters()
        for i1, x, lx, _, s1 in L:
            for i2, y, _, ry, s2 in L:
                if i1 == i2 and not (s1 != 0 and s1 == s2):
                    continue
                xy = x * y
                if xy.syllables[:lx] != x.syllables[:lx] or len(xy) < ry or \
                        xy.syllables[len(xy) - ry:] != y.syllables[len(y) - ry:]:
                    raise TreeError("pieces do not pass the ping-pong check for a free product")

    def contains(self, g, budget=20000):
        """Factor ``g`` over the pieces; returns the list of letters or ``None``.

        Depth-first peeling of a piece element from the left, never letting
        the syllable length grow.  Always sound; complete for ping-pong sets.
        """
        ctx = self.ctx
        seen = {g.syllables}
        stack = [(g, [])]
        steps = 0
        while stack:
            r, acc = stack.pop()
            if r.is_identity():
                return acc
            steps += 1
            if steps > budget:
                return None
            cands = []
            for g_ in self.generators:
                if g_[0] == "factor":
                    c, i = g_[1], g_[2]
                    n = len(c)
                    if len(r) > n and r.syllables[:n] == c.syllables:
                        s = r.syllables[n]
                        if s[0] == PERIPHERAL and s[1] == i:
                            cands.append(c * GroupElement(ctx, (s,)) * c.inverse())
                else:
                    u = g_[1] * g_[2] * g_[1].inverse()
                    cands.append(u)
                    cands.append(u.inverse())
            nxt = []
            for x in cands:
                r2 = x.inverse() * r
                if len(r2) <= len(r) and r2.syllables not in seen:
                    seen.add(r2.syllables)
                    nxt.append((len(r2), r2, x))
            nxt.sort(key=lambda t: -t[0])
            for _, r2, x in nxt:
                stack.append((r2, acc + [x]))
        return None

    def describe(self):
        parts = []
        for g in self.generators:
            if g[0] == "factor":
                name = self.ctx.factors[g[2]].name
                parts.append(name if g[1].is_identity() else f"({format_element(g[1])}){name}")
            else:
                u = g[1] * g[2] * g[1].inverse()
                parts.append(f"<{format_element(u)}>")
        return "<" + ", ".join(parts) + ">"


# --------------------------------------------------------------------------
# construction


def solve_marking(ctx, pieces, piece_images, edges, edge_images, base=0):
    """Build a marked graph of groups from its marking-in data alone.

    The marking-out is found by triangular elimination: a peripheral piece
    is resolved once its conjugator is expressible; a free-type generator
    (free piece or non-tree edge) resolves the unique not-yet-resolved free
    letter it contains.  Raises ``TreeError`` when the data is not a basis.
    """
    T = MarkedGraphOfGroups(ctx, pieces, piece_images, edges, edge_images, base,
                            [], [], verify=False)
    for v, ps in enumerate(T.pieces):
        for j, p in enumerate(ps):
            if p != FREE_PIECE and not 0 <= p < len(ctx.factors):
                raise TreeError(f"piece refers to unknown factor {p}")
    facs = [p for ps in T.pieces for p in ps if p != FREE_PIECE]
    if sorted(facs) != list(range(len(ctx.factors))):
        missing = sorted(set(range(len(ctx.factors))) - set(facs))
        if missing:
            raise TreeError("pieces omit factor(s) " + ", ".join(ctx.factors[i].name for i in missing))
        raise TreeError("a peripheral factor appears more than once")
    paths, tree_edges = T.tree_paths()
    pot = {v: T.phi_path(p) for v, p in paths.items()}
    periph = []
    frees = []
    for v, ps in enumerate(T.pieces):
        for j, p in enumerate(ps):
            img = T.piece_images[v][j]
            if p == FREE_PIECE:
                b = _Builder(T, T.base)
                b.path(paths[v])
                b.elem(T.local_piece(v, j, 1))
                b.inv_path(paths[v])
                frees.append((pot[v] * img * pot[v].inverse(), b.build()))
            else:
                periph.append((p, v, j, pot[v] * img))
    for e, (o, t, _) in enumerate(T.edges):
        if e in tree_edges:
            continue
        b = _Builder(T, T.base)
        b.path(paths[o])
        b.edge(2 * e)
        b.inv_path(paths[t])
        frees.append((pot[o] * T.edge_images[e] * pot[t].inverse(), b.build()))
    if len(frees) != ctx.free_rank:
        raise TreeError(f"graph has {len(frees)} free generators, context needs {ctx.free_rank}")

    mu_factor = [None] * len(ctx.factors)
    mu_free = [None] * ctx.free_rank

    def known(s):
        return mu_factor[s[1]] is not None if s[0] == PERIPHERAL else mu_free[s[1]] is not None

    def M(g):
        T.mu_factor, T.mu_free = mu_factor, mu_free
        return T.mu(g)

    pending_p = list(periph)
    pending_f = list(frees)
    while pending_p or pending_f:
        progress = False
        rest = []
        for item in pending_p:
            i, v, j, C = item
            if all(known(s) for s in C.syllables):
                b = _Builder(T, T.base)
                b.inv_path(M(C))
                b.path(paths[v])
                mu_factor[i] = (b.build(), j)
                progress = True
            else:
                rest.append(item)
        pending_p = rest
        rest = []
        for item in pending_f:
            W, loop = item
            unknown = [k for k, s in enumerate(W.syllables) if not known(s)]
            if not unknown:
                # nothing left to resolve; the round trip checks consistency
                continue
            s = W.syllables[unknown[0]]
            if len(unknown) == 1 and s[0] == FREE:
                k = unknown[0]
                U = GroupElement(ctx, W.syllables[:k])
                V = GroupElement(ctx, W.syllables[k + 1:])
                b = _Builder(T, T.base)
                b.inv_path(M(U))
                b.path(loop)
                b.inv_path(M(V))
                L = b.build()
                mu_free[s[1]] = L if s[2] > 0 else path_inverse(T, L)
                progress = True
            else:
                rest.append(item)
        pending_f = rest
        if not progress and (pending_p or pending_f):
            raise TreeError("marking cannot be inverted: the pieces and edges do not form a basis")
    if any(m is None for m in mu_free):
        raise TreeError("marking cannot be inverted: some free generator is not reached")
    return MarkedGraphOfGroups(ctx, T.pieces, T.piece_images, T.edges, T.edge_images,
                               T.base, mu_factor, mu_free)


def build_rose(ctx, lengths=None):
    """Central trivial vertex, one edge per factor, one loop per free letter."""
    k, N = len(ctx.factors), ctx.free_rank
    if lengths is None:
        lengths = [1] * (k + N)
    lengths = [to_fraction(L) for L in lengths]
    if len(lengths) != k + N:
        raise TreeError(f"need {k + N} edge lengths, got {len(lengths)}")
    if any(L <= 0 for L in lengths):
        raise TreeError("edge lengths must be positive")
    pieces = [()] + [(i,) for i in range(k)]
    images = [()] + [(ctx.identity,) for _ in range(k)]
    edges = [(0, i + 1, lengths[i]) for i in range(k)] + [(0, 0, lengths[k + j]) for j in range(N)]
    eimg = [ctx.identity] * k + [ctx.gen(j) for j in range(N)]
    return solve_marking(ctx, pieces, images, edges, eimg, 0)


def build_splitting(ctx, side_P, side_Q, length=1):
    """Two vertices with groups ``side_P`` and ``side_Q`` joined by one edge."""
    sides = []
    for side in (side_P, side_Q):
        ps, imgs = [], []
        for g in side.generators:
            if g[0] == "factor":
                ps.append(g[2])
                imgs.append(g[1])
            else:
                ps.append(FREE_PIECE)
                imgs.append(g[1] * g[2] * g[1].inverse())
        if not ps:
            raise TreeError("each side of a splitting needs at least one piece")
        sides.append((tuple(ps), tuple(imgs)))
    return solve_marking(ctx, [sides[0][0], sides[1][0]], [sides[0][1], sides[1][1]],
                         [(0, 1, to_fraction(length))], [ctx.identity], 0)


def from_json(data, ctx=None):
    """Load a tree file (see :meth:`MarkedGraphOfGroups.to_json`)."""
    if ctx is None:
        ctx = FreeProductContext.from_json(data["context"])
    pieces, images = [], []
    for vd in data["vertices"]:
        ps, imgs = [], []
        for pd in vd.get("pieces", []):
            if "factor" in pd:
                ps.append(ctx.factor_index(pd["factor"]))
                imgs.append(parse_element(ctx, pd.get("conjugator", "1")))
            elif "free" in pd:
                ps.append(FREE_PIECE)
                imgs.append(parse_element(ctx, pd["free"]))
            else:
                raise TreeError("vertex piece needs 'factor' or 'free'")
        pieces.append(tuple(ps))
        images.append(tuple(imgs))
    edges, eimg = [], []
    for ed in data["edges"]:
        edges.append((int(ed["from"]), int(ed["to"]), to_fraction(ed.get("length", 1))))
        eimg.append(parse_element(ctx, ed.get("image", "1")))
    return solve_marking(ctx, pieces, images, edges, eimg, int(data.get("base", 0)))


# --------------------------------------------------------------------------
# surgery


def _relocal(T2, v, h, shift=0):
    syl = h.syllables if not shift else tuple((k, j + shift, a) for k, j, a in h.syllables)
    return GroupElement(T2.local_ctx[v], syl)


def _map_paths(T, T2, map_path):
    mu_f = []
    for P, j in T.mu_factor:
        P2, j2 = map_path(P, j)
        mu_f.append((P2, j2))
    mu_x = [map_path(L, None)[0] for L in T.mu_free]
    return mu_f, mu_x


def _collapse_one(T, e):
    """Collapse positive edge ``e``; returns the new tree and an edge renumbering."""
    ctx = T.ctx
    u, w, _ = T.edges[e]
    phi_e = T.edge_images[e]
    if w == T.base and u != w:
        # keep the base vertex: collapse along the reversed edge
        u, w, phi_e = w, u, phi_e.inverse()
    edge_map = {}
    new_edges, new_eimg = [], []
    if u != w:
        vmap = {}
        for v in range(T.n_vertices):
            if v == w:
                continue
            vmap[v] = len(vmap)
        vmap[w] = vmap[u]
        off = len(T.pieces[u])
        pieces, images = [], []
        for v in range(T.n_vertices):
            if v == w:
                continue
            if v == u:
                pieces.append(T.pieces[u] + T.pieces[w])
                wimgs = []
                for j, p in enumerate(T.pieces[w]):
                    img = T.piece_images[w][j]
                    wimgs.append(phi_e * img if p != FREE_PIECE else phi_e * img * phi_e.inverse())
                images.append(T.piece_images[u] + tuple(wimgs))
            else:
                pieces.append(T.pieces[v])
                images.append(T.piece_images[v])
        for e2, (o, t, L) in enumerate(T.edges):
            if e2 == e:
                continue
            img = T.edge_images[e2]
            if o == w:
                img = phi_e * img
            if t == w:
                img = img * phi_e.inverse()
            edge_map[e2] = len(new_edges)
            new_edges.append((vmap[o], vmap[t], L))
            new_eimg.append(img)
        base = vmap[T.base]
        shift = {v: (off if v == w else 0) for v in range(T.n_vertices)}
    else:
        vmap = {v: v for v in range(T.n_vertices)}
        pieces = list(T.pieces)
        images = list(T.piece_images)
        new_j = len(pieces[u])
        pieces[u] = pieces[u] + (FREE_PIECE,)
        images[u] = images[u] + (phi_e,)
        for e2, (o, t, L) in enumerate(T.edges):
            if e2 == e:
                continue
            edge_map[e2] = len(new_edges)
            new_edges.append((o, t, L))
            new_eimg.append(T.edge_images[e2])
        base = T.base
        shift = {v: 0 for v in range(T.n_vertices)}
    if not new_edges:
        raise TreeError("cannot collapse every edge")
    T2 = MarkedGraphOfGroups(ctx, pieces, images, new_edges, new_eimg, base, [], [], verify=False)

    def newdir(d):
        return 2 * edge_map[d >> 1] + (d & 1)

    def map_path(P, j):
        b = _Builder(T2, vmap[P.start])
        b.elem(_relocal(T2, vmap[P.start], P.head, shift[P.start]))
        for d, h in P.steps:
            tv = T.terminal(d)
            if d >> 1 == e:
                if u == w:
                    b.elem(T2.local_piece(u, new_j, 1 if d % 2 == 0 else -1))
            else:
                b.edge(newdir(d))
            b.elem(_relocal(T2, vmap[tv], h, shift[tv]))
        end = P.end(T)
        return b.build(), (None if j is None else j + shift[end])

    mu_f, mu_x = _map_paths(T, T2, map_path)
    T3 = MarkedGraphOfGroups(ctx, T2.pieces, T2.piece_images, T2.edges, T2.edge_images,
                             T2.base, mu_f, mu_x)
    return T3, edge_map


def collapse(T, edge_orbits):
    """Collapse the given positive edges (ids of ``T``)."""
    todo = sorted(set(int(e) for e in edge_orbits))
    for e in todo:
        if not 0 <= e < T.n_edges:
            raise TreeError(f"edge {e} out of range")
    if len(todo) >= T.n_edges:
        raise TreeError("cannot collapse every edge")
    ids = {e: e for e in todo}
    cur = T
    while ids:
        orig = min(ids)
        cur, emap = _collapse_one(cur, ids.pop(orig))
        ids = {o: emap[c] for o, c in ids.items()}
    return cur


def subdivide(T, edge, point):
    """Insert a trivial vertex on positive edge ``edge`` at distance ``point`` from its origin."""
    point = to_fraction(point)
    o, t, L = T.edges[edge]
    if not 0 < point < L:
        raise TreeError("subdivision point must be strictly inside the edge")
    z = T.n_vertices
    pieces = list(T.pieces) + [()]
    images = list(T.piece_images) + [()]
    edges = list(T.edges)
    edges[edge] = (o, z, point)
    e2 = len(edges)
    edges.append((z, t, L - point))
    eimg = list(T.edge_images) + [T.ctx.identity]
    T2 = MarkedGraphOfGroups(T.ctx, pieces, images, edges, eimg, T.base, [], [], verify=False)

    def map_path(P, j):
        b = _Builder(T2, P.start)
        b.elem(_relocal(T2, P.start, P.head))
        for d, h in P.steps:
            if d == 2 * edge:
                b.edge(2 * edge)
                b.edge(2 * e2)
            elif d == 2 * edge + 1:
                b.edge(2 * e2 + 1)
                b.edge(2 * edge + 1)
            else:
                b.edge(d)
            b.elem(_relocal(T2, T.terminal(d), h))
        return b.build(), j

    mu_f, mu_x = _map_paths(T, T2, map_path)
    return MarkedGraphOfGroups(T.ctx, pieces, images, edges, eimg, T.base, mu_f, mu_x)


def rescale(T, factor):
    """Multiply every edge length by the positive rational ``factor``."""
    factor = to_fraction(factor)
    if factor <= 0:
        raise TreeError("rescaling factor must be positive")
    edges = [(o, t, L * factor) for o, t, L in T.edges]
    T2 = MarkedGraphOfGroups(T.ctx, T.pieces, T.piece_images, edges, T.edge_images, T.base,
                             [], [], verify=False)

    def map_path(P, j):
        return Path(P.start, _relocal(T2, P.start, P.head),
                    tuple((d, _relocal(T2, T.terminal(d), h)) for d, h in P.steps)), j

    mu_f, mu_x = _map_paths(T, T2, map_path)
    return MarkedGraphOfGroups(T.ctx, T.pieces, T.piece_images, edges, T.edge_images, T.base,
                               mu_f, mu_x)


def natural_edges(T):
    """Maximal chains of oriented edges through trivial vertices of valence 2."""
    def interior(v):
        return T.is_trivial_vertex(v) and T.valence(v) == 2

    def other_dir(v, d_in):
        ds = T.directions(v)
        back = rev(d_in)
        rest = list(ds)
        rest.remove(back)
        return rest[0]

    chains = set()
    used = set()
    for v in range(T.n_vertices):
        if interior(v):
            continue
        for d in T.directions(v):
            if d in used:
                continue
            chain = [d]
            cur = d
            while interior(T.terminal(cur)):
                cur = other_dir(T.terminal(cur), cur)
                chain.append(cur)
            for x in chain:
                used.add(x)
                used.add(rev(x))
            chains.add(_canon_chain(chain))
    # cycles made only of interior vertices
    for v in range(T.n_vertices):
        if not interior(v):
            continue
        for d in T.directions(v):
            if d in used:
                continue
            chain = [d]
            cur = d
            while T.terminal(cur) != v:
                cur = other_dir(T.terminal(cur), cur)
                chain.append(cur)
            for x in chain:
                used.add(x)
                used.add(rev(x))
            chains.add(_canon_chain(chain))
    return sorted(chains, key=lambda c: (len(c), c))


def _canon_chain(chain):
    fwd = tuple(chain)
    bwd = tuple(rev(d) for d in reversed(chain))
    return min(fwd, bwd)


def chain_length(T, chain):
    return sum((T.length(d) for d in chain), Fraction(0))
