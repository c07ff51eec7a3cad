import random
from fractions import Fraction
from itertools import permutations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from freeprod.isometry import (
    Band,
    FiniteMetricTree,
    IsometryError,
    IsometrySystem,
    Region,
    classify,
    cut_at,
    explore_leaf,
    facing_pairs,
    find_splitting_germs,
    iet_to_system,
    prune_step,
    prune_to_limit,
    rauzy_class,
    rauzy_step,
    rauzy_via_split,
    removal_disconnects,
    root_address,
    run_machine,
    split_step,
    system_to_iet,
)
from isosystems import (
    degenerate_system,
    fan_system,
    interval_band,
    spur_system,
    thin_system,
    triple_overlap,
    tripod_system,
)
from oracles import subtractive_euclid

lengths_st = st.lists(st.builds(Fraction, st.integers(1, 60), st.integers(1, 12)),
                      min_size=2, max_size=4)


def irreducibles(d):
    return [list(p) for p in permutations(range(1, d + 1))
            if all(set(range(1, k + 1)) != set(p[:k]) for k in range(1, d))]


IRRED = {d: irreducibles(d) for d in (2, 3, 4)}


def test_tree_metric():
    T = FiniteMetricTree(4, [(0, 1, 1), (0, 2, 2), (2, 3, Fraction(1, 2))])
    p, q = T.point(0, Fraction(1, 2)), T.point(2, Fraction(1, 4))
    assert T.dist(p, q) == Fraction(1, 2) + 2 + Fraction(1, 4)
    m = T.point_at(p, q, 1)
    assert T.dist(p, m) == 1 and T.dist(m, q) == T.dist(p, q) - 1
    with pytest.raises(IsometryError):
        FiniteMetricTree(3, [(0, 1, 1), (1, 0, 1)])


def test_region_hull_and_cut():
    T = FiniteMetricTree(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1)])
    R = Region.hull(T, [("v", 1), ("v", 2), ("v", 3)])
    assert R.measure() == 3 and len(R.extremal_points()) == 3
    a, b = cut_at(R, ("v", 0), (0, 1))
    assert a.measure() == 1 and b.measure() == 2
    assert a.intersect(b) == Region.hull(T, [("v", 0)])


def test_band_must_be_isometric():
    T = FiniteMetricTree.interval(3)
    with pytest.raises(IsometryError):
        IsometrySystem([T], [interval_band(T, "bad", 0, 1, 0, 2)])


@given(lengths_st, st.integers(0, 1000))
def test_measures_sum_to_volume(lengths, i):
    perms = IRRED[len(lengths)]
    perm = perms[i % len(perms)]
    S = iet_to_system(lengths, perm)
    m = S.measures()
    assert m["m_le1"] + m["m_eq2"] + m["m_ge3"] == S.total_volume() == sum(lengths)
    c = classify(S)
    assert c["quadratic"] and not c["independence_obstruction"]
    assert c["m_le1"] == 0 == c["m_ge3"]


def test_prune_fixed_and_empty():
    assert prune_step(iet_to_system([1, 2], [2, 1])) == iet_to_system([1, 2], [2, 1])
    T = FiniteMetricTree.interval(3)
    S = IsometrySystem([T], [interval_band(T, "only", 0, 1, 2, 3)])
    L, halted, steps, _ = prune_to_limit(S, 5)
    assert halted and L.bands == () and L.total_volume() == 0


def test_spur_depth():
    L, halted, steps, trace = prune_to_limit(spur_system(), 10)
    assert halted and steps == 2
    assert trace == [3, 2, 1]
    assert [b.name for b in L.bands] == ["P"]


def test_thin_example_does_not_halt():
    _, halted, steps, trace = prune_to_limit(thin_system(100), 10)
    assert not halted and steps == 10
    assert all(a > b for a, b in zip(trace, trace[1:]))


@given(st.integers(3, 40))
def test_prune_step_monotone(q):
    S = thin_system(q)
    S2 = prune_step(S)
    assert S2.total_volume() <= S.total_volume()
    assert (S2.total_volume() == S.total_volume()) == (S2 == S)


def test_triple_overlap_obstruction():
    c = classify(triple_overlap())
    assert c["m_ge3"] == 1 and c["m_le1"] == 0 and c["independence_obstruction"]
    empty = IsometrySystem([], [])
    c0 = classify(empty)
    assert c0["quadratic"] and c0["m_le1"] == c0["m_eq2"] == c0["m_ge3"] == 0


def test_rotation_germs():
    S = iet_to_system([3, 5], [2, 1])
    germs = find_splitting_germs(S)
    assert sorted({g.point[2] for g in germs}) == [3, 5]
    assert len(germs) == 4 and not any(g.degenerate for g in germs)


def test_no_germs_on_plain_cover():
    T = FiniteMetricTree.interval(1)
    assert find_splitting_germs(IsometrySystem([T], [interval_band(T, "id", 0, 1, 0, 1)])) == []


def test_germs_need_prune_stable():
    with pytest.raises(IsometryError):
        find_splitting_germs(spur_system())


def test_degenerate_germs_disconnect():
    S = degenerate_system()
    germs = find_splitting_germs(S)
    assert germs and all(g.degenerate for g in germs)
    for g in germs:
        assert removal_disconnects(S, g.base, g.point)
        with pytest.raises(IsometryError):
            split_step(S, g)
    R = iet_to_system([3, 5], [2, 1])
    for g in find_splitting_germs(R):
        assert not removal_disconnects(R, g.base, g.point)


def test_rauzy_step_matches_split():
    assert rauzy_step([3, 5], [2, 1])[0] == {1: 3, 2: 2}
    lam, rows = system_to_iet(rauzy_via_split(iet_to_system([3, 5], [2, 1])))
    assert lam == {"1": 3, "2": 2} and rows == (("1", "2"), ("2", "1"))


def test_rauzy_errors():
    with pytest.raises(IsometryError):
        rauzy_step([1, 2], [1, 2])
    with pytest.raises(IsometryError):
        rauzy_step([2, 2], [2, 1])


@given(lengths_st, st.integers(0, 1000))
def test_split_commutes_with_rauzy(lengths, i):
    perms = IRRED[len(lengths)]
    perm = perms[i % len(perms)]
    top, bottom = list(range(1, len(lengths) + 1)), perm
    lam = dict(zip(top, lengths))
    if lam[top[-1]] == lam[bottom[-1]]:
        return
    want_lam, (wt, wb), _ = rauzy_step(lengths, perm)
    got_lam, (gt, gb) = system_to_iet(rauzy_via_split(iet_to_system(lengths, perm)))
    assert {int(k): v for k, v in got_lam.items()} == want_lam
    assert tuple(int(a) for a in gt) == wt and tuple(int(a) for a in gb) == wb


def test_euclid_trace():
    lam, rows = [5, 8], [2, 1]
    trace = []
    while lam[0] != lam[1]:
        new, rows, kind = rauzy_step(lam, rows)
        lam = [new[1], new[2]]
        trace.append((kind, lam[0], lam[1]))
    assert trace == subtractive_euclid(5, 8)


def test_rauzy_class_321():
    cls = rauzy_class([3, 2, 1])
    assert (3, 2, 1) in cls
    for p in cls:
        assert rauzy_class(list(p)) == cls


def test_split_preserves_orbits_iet():
    rng = random.Random(5)
    lengths = [Fraction(13, 10), Fraction(21, 10), Fraction(34, 10)]
    S = iet_to_system(lengths, [3, 2, 1])
    S2 = rauzy_via_split(S)
    lo, hi = S2.support[0].parts[0][1:]
    r = 6
    for _ in range(50):
        x = S.bases[0].point(0, lo + (hi - lo) * Fraction(rng.randrange(1, 997), 997))
        new = {y for y in explore_leaf(S2, 0, x, r)["vertices"]}
        old = explore_leaf(S, 0, x, 2 * r)["vertices"]
        assert new <= set(old)
        near = {y for y, d in old.items() if d <= r and S2.support[0].contains(y[1])}
        assert near <= new


def test_tripod_split_extracts_branch():
    S = tripod_system()
    germs = [g for g in find_splitting_germs(S) if not g.degenerate]
    assert germs and germs[0].point == ("v", 0)
    S2 = split_step(S, germs[0])
    assert len(S2.bases) == len(S.bases) + 1
    assert S2.total_volume() == S.total_volume()
    # the two pieces of A meet at the cut point only
    A, A2 = S2.band("A"), S2.band("A'")
    pts_a = {root_address(S2, A.band.dom_base, p) for p in A.dom.extremal_points()}
    pts_b = {root_address(S2, A2.band.dom_base, p) for p in A2.dom.extremal_points()}
    assert (0, ("v", 0)) in pts_b
    assert A.dom.measure() + A2.dom.measure() == 3
    # leaves are unchanged up to the extraction embedding
    for x in (("e", 0, Fraction(1, 3)), ("e", 1, Fraction(1, 2))):
        old = set(explore_leaf(S, 0, x, 4)["vertices"])
        base = 0 if x[1] != 0 else len(S.bases)
        p = x if base == 0 else ("e", 0, x[2])
        new = {root_address(S2, b, y) for b, y in explore_leaf(S2, base, p, 4)["vertices"]}
        assert new == old
    assert pts_a


def test_leaf_exploration():
    S = iet_to_system([Fraction(1000), Fraction(1618)], [2, 1])
    leaf = explore_leaf(S, 0, ("e", 0, Fraction(1, 7)), 5)
    assert max(leaf["valence"].values()) <= 2 and leaf["frontier"] == 2
    assert len(leaf["vertices"]) == 11
    zero = explore_leaf(S, 0, ("e", 0, Fraction(1, 7)), 0)
    assert len(zero["vertices"]) == 1 and not zero["edges"]
    fan = explore_leaf(fan_system(), 0, ("e", 0, Fraction(1, 2)), 2)
    assert fan["valence"][(0, ("e", 0, Fraction(1, 2)))] == 3


def test_machine_on_rotation():
    S, records = run_machine(iet_to_system([3, 5], [2, 1]), max_steps=20)
    assert records[-1]["action"] == "stop"
    vols = [Fraction(r["measures"]["m_eq2"]) for r in records]
    assert all(a >= b for a, b in zip(vols, vols[1:]))
    germs = find_splitting_germs(iet_to_system([3, 5], [2, 1]))
    assert all(i < j for i, j in facing_pairs(iet_to_system([3, 5], [2, 1]), germs))


def test_json_roundtrip():
    S = rauzy_via_split(iet_to_system([3, 5, 2], [3, 2, 1]))
    assert IsometrySystem.from_json(S.to_json()) == S


def test_singleton_band():
    T = FiniteMetricTree.interval(2)
    S = IsometrySystem([T], [Band("pt", 0, 0, ((T.point(0, 1), T.point(0, 1)),)),
                             interval_band(T, "id", 0, 2, 0, 2)])
    assert S.incidence(0, T.point(0, 1)) == 4
    assert classify(S)["m_eq2"] == 2
