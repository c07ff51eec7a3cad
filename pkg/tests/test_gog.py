from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from freeprod.core import cyclic_reduce, is_peripheral
from freeprod.gog import (
    StandardFormVertexGroup,
    TreeError,
    build_rose,
    build_splitting,
    collapse,
    from_json,
    natural_edges,
    rescale,
    subdivide,
)
from oracles import rose_length
from strategies import CONTEXTS, elements

ctx_st = st.sampled_from(CONTEXTS)
ROSES = {id(c): build_rose(c) for c in CONTEXTS}


def lengths_for(ctx):
    k = len(ctx.factors)
    return [Fraction(i + 2, 2) for i in range(k + ctx.free_rank)]


@given(st.data())
def test_rose_matches_formula(data):
    ctx = data.draw(ctx_st)
    g = data.draw(elements(ctx))
    L = lengths_for(ctx)
    T = build_rose(ctx, L)
    _, core = cyclic_reduce(g)
    k = len(ctx.factors)
    assert T.translation_length(g) == rose_length(core.syllables, L[:k], L[k:])


@given(st.data())
def test_conjugation_invariance(data):
    ctx = data.draw(ctx_st)
    g, h = data.draw(elements(ctx)), data.draw(elements(ctx))
    T = ROSES[id(ctx)]
    assert T.translation_length(h * g * h.inverse()) == T.translation_length(g)


@given(st.data())
def test_axis_and_fixed_vertex(data):
    ctx = data.draw(ctx_st)
    g = data.draw(elements(ctx))
    T = ROSES[id(ctx)]
    L = T.translation_length(g)
    if g.is_identity():
        return
    if L == 0:
        v, c = T.elliptic_fixed_vertex(g)
        assert T.vertex_group(v).contains(c.inverse() * g * c) is not None
    else:
        A = T.axis(g)
        assert A.length == L
        assert sum(T.length(d) for d in A.edges()) == L


def test_power_scales_length(mixed):
    T = build_rose(mixed)
    g = mixed.parse("t A B")
    assert T.translation_length(g ** 3) == 3 * T.translation_length(g)


def test_subdivide_and_rescale(abc, rng):
    T = build_rose(abc)
    S = subdivide(T, 1, Fraction(1, 3))
    R = rescale(T, Fraction(5, 2))
    from freeprod.core import random_element
    for _ in range(30):
        g = random_element(abc, rng, rng.randint(1, 8))
        assert S.translation_length(g) == T.translation_length(g)
        assert R.translation_length(g) == Fraction(5, 2) * T.translation_length(g)
    assert len(natural_edges(S)) == len(natural_edges(T))


def test_collapse_is_lipschitz(abc, rng):
    from freeprod.core import random_element
    T = build_rose(abc)
    S = collapse(T, [0])
    assert S.n_edges == 2
    for _ in range(30):
        g = random_element(abc, rng, rng.randint(1, 8))
        assert S.translation_length(g) <= T.translation_length(g)
    # ab is elliptic once the A and B petals are gone
    assert collapse(T, [0, 1]).translation_length(abc.parse("A B")) == 0
    with pytest.raises(TreeError):
        collapse(T, [0, 1, 2])


def test_json_roundtrip(mixed):
    T = subdivide(build_rose(mixed), 2, Fraction(1, 2))
    U = from_json(T.to_json())
    for w in ("t", "A t B", "A B^-2 t^-1"):
        g = mixed.parse(w)
        assert U.translation_length(g) == T.translation_length(g)


def test_splitting_vertex_groups(abc):
    P = StandardFormVertexGroup.parse(abc, ["A", "B"])
    Q = StandardFormVertexGroup.parse(abc, ["C"])
    T = build_splitting(abc, P, Q)
    assert not T.is_grushko()
    for w, L in (("A B", 0), ("A C", 2), ("A B C", 2), ("A C B C", 4)):
        assert T.translation_length(abc.parse(w)) == L
    assert P.contains(abc.parse("A B A")) is not None
    assert P.contains(abc.parse("A C")) is None


def test_ping_pong_rejects_overlap(f2):
    with pytest.raises(TreeError):
        StandardFormVertexGroup.parse(f2, ["free: x", "free: x y x^-1"])


def test_elliptic_in_free_splitting(mixed):
    P = StandardFormVertexGroup.parse(mixed, ["A", "free: t"])
    Q = StandardFormVertexGroup.parse(mixed, ["B"])
    T = build_splitting(mixed, P, Q)
    for w in ("t A", "A t^2 A"):
        g = mixed.parse(w)
        assert is_peripheral(g) is None
        assert T.translation_length(g) == 0
    assert T.translation_length(mixed.parse("t B")) == 2
