"""Finite approximants of dual laminations, carried-by checks and
peritransitive saturation.

Leaves are unordered pairs of distinct eventually periodic boundary points.
Saturation is purely algebraic: translates by a ball of group elements, the
transitivity rule and the peripheral rule, iterated for a bounded number of
rounds with a flag telling whether a fixed point was reached.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import (
    PERIPHERAL,
    FreeProductContext,
    FreeProductError,
    GroupElement,
    boundary_eq,
    canonical_class_rep,
    endpoints,
    enumerate_cyclic_words,
    enumerate_elements,
    is_peripheral,
    point_from_json,
    point_to_json,
    ray_syllables,
    translate_point,
    vertex_point,
)
from .gog import to_fraction
from .whitehead import is_simple


class LaminationError(FreeProductError):
    pass


@dataclass(frozen=True)
class AlgebraicLeaf:
    ctx: FreeProductContext = field(repr=False, compare=False, hash=False)
    first: object
    second: object

    @classmethod
    def make(cls, ctx, p, q):
        if boundary_eq(p, q):
            raise LaminationError("a leaf needs two distinct endpoints")
        p, q = sorted((p, q))
        return cls(ctx, p, q)

    @classmethod
    def of_element(cls, g):
        a, b = endpoints(g)
        return cls.make(g.ctx, a, b)

    def translate(self, h):
        return AlgebraicLeaf.make(self.ctx, translate_point(self.ctx, h, self.first),
                                  translate_point(self.ctx, h, self.second))

    def key(self):
        return (self.first.key(), self.second.key())

    def __lt__(self, other):
        return self.key() < other.key()

    def to_json(self):
        return [point_to_json(self.ctx, self.first), point_to_json(self.ctx, self.second)]


@dataclass(frozen=True)
class LeafSet:
    leaves: frozenset
    depth: int = 0
    fixed_point: bool = False

    def __iter__(self):
        return iter(sorted(self.leaves))

    def __len__(self):
        return len(self.leaves)

    def __contains__(self, leaf):
        return leaf in self.leaves

    def to_json(self, ctx):
        return {"context": ctx.to_json(), "depth": self.depth, "fixed_point": self.fixed_point,
                "leaves": [lf.to_json() for lf in sorted(self.leaves)]}

    @classmethod
    def from_json(cls, data, ctx=None):
        if ctx is None:
            ctx = FreeProductContext.from_json(data["context"])
        leaves = []
        for pair in data["leaves"]:
            if len(pair) != 2:
                raise LaminationError("a leaf is a pair of boundary points")
            leaves.append(AlgebraicLeaf.make(ctx, point_from_json(ctx, pair[0]),
                                             point_from_json(ctx, pair[1])))
        return cls(frozenset(leaves), int(data.get("depth", 0)),
                   bool(data.get("fixed_point", False)))


def class_representatives(ctx, len_bound):
    """One canonical cyclic word per conjugacy class of non-peripheral elements."""
    seen = set()
    out = []
    for g in enumerate_cyclic_words(ctx, len_bound):
        if is_peripheral(g) is not None:
            continue
        r = canonical_class_rep(g)
        if r.syllables not in seen:
            seen.add(r.syllables)
            out.append(r)
    return out


def l2_epsilon_leaves(T, eps, len_bound):
    """Leaves of axes of classes of letter length <= len_bound with ||g||_T <= eps."""
    eps = to_fraction(eps)
    if eps < 0:
        raise LaminationError("eps must be non-negative")
    if len_bound < 1:
        raise LaminationError("len_bound must be at least 1")
    leaves = set()
    for g in class_representatives(T.ctx, len_bound):
        if T.translation_length(g) <= eps:
            leaves.add(AlgebraicLeaf.of_element(g))
    return LeafSet(frozenset(leaves), 0, False)


@dataclass(frozen=True)
class CarriedResult:
    carried: bool
    conjugator: object
    bound: int

    def __bool__(self):
        return self.carried


def _point_in(H, ctx, h, p):
    if p.kind == "ray":
        P = GroupElement(ctx, p.prefix)
        Q = GroupElement(ctx, p.period)
        return H.contains(h * P * Q * P.inverse() * h.inverse()) is not None
    c = h * GroupElement(ctx, p.prefix)
    f = ctx.factors[p.factor]
    for a in f.nonidentity(1):
        x = c * GroupElement(ctx, ((PERIPHERAL, p.factor, a),)) * c.inverse()
        if H.contains(x) is None:
            return False
    return True


def is_carried_by(leaf, H, conj_bound):
    """Is some translate ``h . leaf`` (``|h| <= conj_bound``) inside the boundary of ``H``?"""
    ctx = leaf.ctx
    for h in enumerate_elements(ctx, conj_bound):
        if _point_in(H, ctx, h, leaf.first) and _point_in(H, ctx, h, leaf.second):
            return CarriedResult(True, h, conj_bound)
    return CarriedResult(False, None, conj_bound)


# --------------------------------------------------------------------------
# saturation


def _stream(ctx, p, n):
    if p.kind == "ray":
        return ray_syllables(ctx, p, n)
    return p.prefix[:n]


def _bound(p):
    return len(p.prefix) + len(p.period)


def _strip_options(ctx, p):
    """(factor or None, point) with at most one leading peripheral syllable removed."""
    out = [(None, p)]
    syl = p.prefix if p.prefix else p.period
    if syl and syl[0][0] == PERIPHERAL:
        s = GroupElement(ctx, (syl[0],))
        out.append((syl[0][1], translate_point(ctx, s.inverse(), p)))
    return out


def peripheral_tags(ctx, a, b):
    """Vertices ``w`` such that ``b = g a`` for some ``g != 1`` fixing ``w``.

    Candidate vertices lie on the line from ``a`` to ``b``: they are read off
    prefixes of the syllable streams of both endpoints.
    """
    if boundary_eq(a, b):
        return set()
    n = _bound(a) + _bound(b) + 2
    sa, sb = _stream(ctx, a, 2 * n), _stream(ctx, b, 2 * n)
    cands = set()
    for s in (sa, sb):
        for m in range(len(s) + 1):
            cands.add(s[:m])
    tags = set()
    for W in sorted(cands, key=lambda w: (len(w), w)):
        Wg = GroupElement(ctx, W)
        a1 = translate_point(ctx, Wg.inverse(), a)
        b1 = translate_point(ctx, Wg.inverse(), b)
        for fa, pa in _strip_options(ctx, a1):
            for fb, pb in _strip_options(ctx, b1):
                if fa is None and fb is None:
                    continue
                if fa is not None and fb is not None and fa != fb:
                    continue
                if boundary_eq(pa, pb):
                    tags.add(vertex_point(Wg, fa if fa is not None else fb))
    return tags


def _translates(leaves, ball):
    out = set(leaves)
    for lf in leaves:
        for h in ball:
            out.add(lf.translate(h))
    return out


def _transitive(leaves):
    adj = {}
    for lf in leaves:
        adj.setdefault(lf.first, set()).add(lf.second)
        adj.setdefault(lf.second, set()).add(lf.first)
    out = set(leaves)
    ctx = next(iter(leaves)).ctx if leaves else None
    for b, nbrs in adj.items():
        ns = sorted(nbrs)
        for i in range(len(ns)):
            for j in range(i + 1, len(ns)):
                if not boundary_eq(ns[i], ns[j]):
                    out.add(AlgebraicLeaf.make(ctx, ns[i], ns[j]))
    return out


def _peripheral(leaves, tag_cache):
    groups = {}
    ctx = None
    for lf in leaves:
        ctx = lf.ctx
        if lf not in tag_cache:
            tag_cache[lf] = peripheral_tags(lf.ctx, lf.first, lf.second)
        for t in tag_cache[lf]:
            groups.setdefault(t, set()).update((lf.first, lf.second))
    out = set(leaves)
    for pts in groups.values():
        ps = sorted(pts)
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                out.add(AlgebraicLeaf.make(ctx, ps[i], ps[j]))
    return out


def saturation_round(leaves, ball, tag_cache=None):
    tag_cache = {} if tag_cache is None else tag_cache
    cur = _translates(set(leaves), ball)
    cur = _transitive(cur)
    return _peripheral(cur, tag_cache)


def peritransitive_saturate(X, ctx, depth, translate_bound=0, max_leaves=200000):
    """Apply rounds of the three rules until nothing changes or ``depth`` rounds ran."""
    if depth < 0:
        raise LaminationError("depth must be non-negative")
    leaves = set(X.leaves if isinstance(X, LeafSet) else X)
    ball = [h for h in enumerate_elements(ctx, translate_bound) if not h.is_identity()]
    cache = {}
    fixed = False
    rounds = 0
    for _ in range(depth):
        new = saturation_round(leaves, ball, cache)
        if new == leaves:
            fixed = True
            break
        leaves = new
        rounds += 1
        if len(leaves) > max_leaves:
            raise LaminationError("saturation exceeded the leaf budget")
    return LeafSet(frozenset(leaves), rounds, fixed)


def recover_element(leaf):
    """The primitive ``g`` with ``leaf = (g^-inf, g^+inf)``, or ``None``."""
    ctx = leaf.ctx
    for p in (leaf.second, leaf.first):
        if p.kind != "ray":
            return None
        P, Q = GroupElement(ctx, p.prefix), GroupElement(ctx, p.period)
        g = P * Q * P.inverse()
        try:
            if AlgebraicLeaf.of_element(g) == leaf:
                return g
        except FreeProductError:
            continue
    return None


def is_simple_leaf(leaf):
    g = recover_element(leaf)
    if g is None:
        raise LaminationError("leaf is not the axis of an element; no finite criterion")
    return is_simple(leaf.ctx, g).verdict == "Simple"


__all__ = [
    "AlgebraicLeaf", "CarriedResult", "LaminationError", "LeafSet", "class_representatives",
    "is_carried_by", "is_simple_leaf", "l2_epsilon_leaves", "peripheral_tags",
    "peritransitive_saturate", "recover_element", "saturation_round",
]
