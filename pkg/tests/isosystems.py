"""Hand-built systems of isometries shared by the isometry tests."""
from fractions import Fraction

from freeprod.isometry import Band, FiniteMetricTree, IsometrySystem


def interval_band(T, name, a, b, c, d, base=0, cbase=0, U=None):
    U = T if U is None else U
    return Band(name, base, cbase, ((T.point(0, a), U.point(0, c)), (T.point(0, b), U.point(0, d))))


def spur_system():
    """A flip on [0,1] with a two-step dead-end chain on [1,3]."""
    T = FiniteMetricTree.interval(3)
    return IsometrySystem([T], [interval_band(T, "P", 0, 1, 1, 0), interval_band(T, "S2", 1, 2, 0, 1),
                                interval_band(T, "S1", 2, 3, 1, 2)])


def thin_system(q=100):
    T = FiniteMetricTree.interval(1)
    return IsometrySystem([T], [interval_band(T, "t", 0, 1 - Fraction(1, q), Fraction(1, q), 1)])


def triple_overlap():
    T = FiniteMetricTree.interval(1)
    return IsometrySystem([T], [interval_band(T, n, 0, 1, 0, 1) for n in ("a", "b", "c")])


def fan_system():
    """One interval carried by three bands to three separate intervals."""
    B0 = FiniteMetricTree.interval(1)
    others = [FiniteMetricTree.interval(1) for _ in range(3)]
    bands = [interval_band(B0, f"f{i}", 0, 1, 0, 1, 0, i + 1, others[i]) for i in range(3)]
    return IsometrySystem([B0] + others, bands)


def degenerate_system():
    """[0,2] glued along [0,1] and [1,2] to two separate doubly covered intervals."""
    B0, B1, B2 = FiniteMetricTree.interval(2), FiniteMetricTree.interval(1), FiniteMetricTree.interval(1)
    bands = [interval_band(B0, "U", 0, 1, 0, 1, 0, 1, B1), interval_band(B0, "U2", 0, 1, 0, 1, 0, 1, B1),
             interval_band(B0, "V", 1, 2, 0, 1, 0, 2, B2), interval_band(B0, "V2", 1, 2, 0, 1, 0, 2, B2)]
    return IsometrySystem([B0, B1, B2], bands)


def tripod_system():
    """Identity band on a tripod plus an edge of it glued to a doubly covered interval."""
    T = FiniteMetricTree(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1)])
    U = FiniteMetricTree.interval(1)
    v = lambda i: ("v", i)
    bands = [Band("A", 0, 0, tuple((v(i), v(i)) for i in (1, 2, 3))),
             Band("C", 0, 1, ((v(0), U.point(0, 0)), (v(1), U.point(0, 1)))),
             Band("D", 1, 1, ((U.point(0, 0), U.point(0, 0)), (U.point(0, 1), U.point(0, 1))))]
    return IsometrySystem([T, U], bands)
