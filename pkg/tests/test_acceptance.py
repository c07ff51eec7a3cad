"""Acceptance suite.

Each test prints exactly one line of the form

    [AC-n] PASS|FAIL  <title>  (tolerance: ...)  <detail>

and the lines are repeated in the pytest terminal summary.  All numeric
comparisons are exact rational equality; the only tolerances are the
wall-clock budgets, stated on the line.  Run directly with
``python3 tests/test_acceptance.py`` for the lines alone.
"""
import json
import random
import sys
import time
from fractions import Fraction
from itertools import permutations
from math import gcd
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from freeprod.core import (  # noqa: E402
    FreeProductContext,
    PeripheralFactor,
    endpoints,
    enumerate_cyclic_words,
    is_peripheral,
    random_element,
    random_nonperipheral,
    translate_point,
    vertex_point,
)
from freeprod.currents import RationalCurrent, discontinuity_experiment, pairing  # noqa: E402
from freeprod.currents import (  # noqa: E402
    family1_context,
    family1_element,
    family1_tree,
    family2_context,
    family2_element,
    family2_tree,
)
from freeprod.gog import (  # noqa: E402
    StandardFormVertexGroup,
    build_rose,
    build_splitting,
    from_json as tree_from_json,
    rescale,
    subdivide,
)
from freeprod.isometry import (  # noqa: E402
    classify,
    is_irreducible,
    iet_to_system,
    rauzy_class,
    rauzy_trace,
)
from freeprod.laminations import (  # noqa: E402
    AlgebraicLeaf,
    l2_epsilon_leaves,
    peripheral_tags,
    peritransitive_saturate,
)
from freeprod.whitehead import blowup, find_admissible_cut, is_simple, whitehead_graph  # noqa: E402

from isosystems import triple_overlap  # noqa: E402
from oracles import cyclically_reduced_words, f2_is_simple, subtractive_euclid, word_text  # noqa: E402

DATA = Path(__file__).parent / "data"
SEED = 20261014
RESULTS = []


def record(n, title, ok, tolerance, detail=""):
    line = f"[AC-{n}] {'PASS' if ok else 'FAIL'}  {title}  (tolerance: {tolerance})"
    if detail:
        line += f"  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _ctx(*factors, free=0, names=None):
    fs = [PeripheralFactor.integers(n) if o == 0 else PeripheralFactor.cyclic(n, o)
          for n, o in factors]
    return FreeProductContext(fs, free, names or [])


F2 = _ctx(free=2, names=["x", "y"])
ABC = _ctx(("A", 2), ("B", 3), ("C", 2))
MIXED = _ctx(("A", 3), ("B", 0), free=1, names=["t"])
BZ = _ctx(("B", 0), free=1, names=["t"])
AB = _ctx(("A", 2), ("B", 3))


def _vg(ctx, items):
    return StandardFormVertexGroup.parse(ctx, items)


def grushko_corpus():
    F = Fraction
    trees = [
        build_rose(F2), build_rose(F2, [F(3, 2), 1]),
        build_rose(ABC), build_rose(ABC, [1, F(1, 2), 3]),
        subdivide(build_rose(ABC), 1, F(1, 3)),
        build_rose(MIXED, [2, F(1, 3), 5]), subdivide(build_rose(MIXED), 2, F(1, 2)),
        rescale(build_rose(MIXED), F(7, 3)), build_rose(BZ, [F(2, 5), 1]), build_rose(AB),
    ]
    for name in ("rose_abc.json", "rose_f2.json"):
        trees.append(tree_from_json(json.loads((DATA / name).read_text())))
    return trees


def splitting_corpus():
    F = Fraction
    return [
        build_splitting(ABC, _vg(ABC, ["A", "B"]), _vg(ABC, ["C"])),
        build_splitting(ABC, _vg(ABC, ["A"]), _vg(ABC, ["B", "C"]), F(5, 2)),
        build_splitting(MIXED, _vg(MIXED, ["A", "free: t"]), _vg(MIXED, ["B"]), F(3, 2)),
        build_splitting(MIXED, _vg(MIXED, ["A"]), _vg(MIXED, ["B", "free: t"])),
        build_splitting(F2, _vg(F2, ["free: x"]), _vg(F2, ["free: y"])),
        build_splitting(BZ, _vg(BZ, ["B"]), _vg(BZ, ["free: t"]), F(1, 4)),
    ]


# --------------------------------------------------------------------------


def test_ac1_family1():
    ctx = family1_context()
    t0 = time.perf_counter()
    rows = []
    for k in range(1, 21):
        T = family1_tree(ctx, k)
        rows.append((T.translation_length(family1_element(ctx, k)),
                     T.translation_length(family1_element(ctx, k + 1))))
    dt = time.perf_counter() - t0
    bad = [k for k, r in enumerate(rows, 1) if r != (0, 4)]
    ok = not bad and dt < 1.0
    record(1, "family 1: ||g_k||_{T_k} = 0 and ||g_{k+1}||_{T_k} = 4 for k=1..20", ok,
           "exact; runtime < 1 s", f"runtime={dt:.3f}s mismatches={bad}")
    assert ok


def test_ac2_family2():
    ctx = family2_context()
    rows = []
    for k in range(1, 21):
        S = family2_tree(ctx, k)
        rows.append((S.translation_length(family2_element(ctx, k)),
                     S.translation_length(family2_element(ctx, k + 1))))
    bad = [(k, str(a), str(b)) for k, (a, b) in enumerate(rows, 1) if (a, b) != (0, 3)]
    ok = not bad
    record(2, "family 2: ||tb_k||_{S_k} = 0 and ||tb_{k+1}||_{S_k} = 3 for k=1..20", ok,
           "exact", f"observed (self,next) values={sorted({(a, b) for _, a, b in bad})}")
    assert ok


def test_ac3_cylinders():
    rep = discontinuity_experiment(20, 3, zbound=3)
    rows = rep["cylinders"]["family1"]
    unstable = [r["path"] for r in rows if r["stabilizes_at"] is None]
    worst = max((r["stabilizes_at"] for r in rows if r["stabilizes_at"] is not None), default=None)
    # the recorded index must leave at least one k of evidence
    late = [r["path"] for r in rows if r["stabilizes_at"] is not None and r["stabilizes_at"] >= 20]
    ok = bool(rows) and not unstable and not late
    record(3, "cylinders of depth <= 3 stabilize at the limit current", ok,
           "exact; k <= 20, |Z label| <= 3", f"cylinders={len(rows)} max_index={worst} unstable={len(unstable)}")
    assert ok


def test_ac4_pairing():
    rng = random.Random(SEED)
    trees = grushko_corpus()[:7] + splitting_corpus()[:3]
    assert len(trees) == 10
    t0 = time.perf_counter()
    bad = 0
    n = 0
    for T in trees:
        for _ in range(200):
            g = random_nonperipheral(T.ctx, rng, 10)
            n += 1
            if pairing(T, RationalCurrent.of_element(g)) != T.translation_length(g):
                bad += 1
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10.0
    record(4, "pairing(T, eta_g) = ||g||_T on 10 trees x 200 elements", ok,
           "exact; runtime < 10 s", f"checks={n} mismatches={bad} runtime={dt:.2f}s")
    assert ok


def test_ac5_f2_oracle():
    words = list(cyclically_reduced_words(6))
    bad = []
    simple = 0
    for w in words:
        got = is_simple(F2, F2.parse(word_text(w))).verdict == "Simple"
        simple += got
        if got != f2_is_simple(w):
            bad.append(word_text(w))
    ex = {"x y x^-1 y^-1": "NotSimple", "x": "Simple", "y": "Simple", "y^-1": "Simple"}
    ex_ok = all(is_simple(F2, F2.parse(w)).verdict == v for w, v in ex.items())
    ok = not bad and ex_ok
    record(5, "is_simple agrees with Whitehead peak reduction on F2, length <= 6", ok,
           "100% agreement", f"words={len(words)} simple={simple} disagreements={len(bad)} "
           f"examples_ok={ex_ok}")
    assert ok


def _witness_ok(ctx, g, S):
    if S is None or S.n_edges != 1 or S.translation_length(g) != 0:
        return False
    if not all(S.pieces[v] for v in range(S.n_vertices)):
        return False
    # every factor sits in exactly one vertex group
    placed = [0] * len(ctx.factors)
    for v in range(S.n_vertices):
        for j in range(len(ctx.factors)):
            f = ctx.parse(ctx.factors[j].name)
            placed[j] += S.vertex_group(v).contains(f) is not None
    return all(p == 1 for p in placed)


def test_ac6_relative():
    words = [g for g in enumerate_cyclic_words(AB, 6) if is_peripheral(g) is None]
    wrong = [str(g) for g in words if is_simple(AB, g).verdict != "NotSimple"]
    g = ABC.parse("A B")
    res = is_simple(ABC, g)
    wit = res.verdict == "Simple" and _witness_ok(ABC, g, res.witness)
    ok = bool(words) and not wrong and wit
    record(6, "A*B: all non-peripheral words NotSimple; A*B*C: ab Simple with witness", ok,
           "exact", f"A*B words={len(words)} wrong={len(wrong)} witness_verified={wit}")
    assert ok


def test_ac7_blowup():
    rng = random.Random(SEED)
    bases = [build_rose(ABC), build_rose(ABC, [1, Fraction(1, 2), 2]), build_rose(MIXED),
             build_rose(F2, [1, Fraction(2, 3)]), build_rose(BZ)]
    runs = 0
    bad = []
    attempts = 0
    while runs < 100 and attempts < 5000:
        attempts += 1
        T = rng.choice(bases)
        g = random_nonperipheral(T.ctx, rng, 8)
        v = rng.randrange(T.n_vertices)
        try:
            W = whitehead_graph(T, g, v)
        except Exception:
            continue
        cut = find_admissible_cut(W)
        if cut is None:
            continue
        hs = [random_nonperipheral(T.ctx, rng, 8) for _ in range(100)]
        T2 = blowup(T, v, cut, g, samples=hs)
        runs += 1
        if T2.translation_length(g) != T.translation_length(g):
            bad.append("length")
        if T2.n_edges != T.n_edges + 1:
            bad.append("edges")
        if any(T2.translation_length(h) < T.translation_length(h) for h in hs):
            bad.append("decrease")
    ok = runs == 100 and not bad
    record(7, "blow-up keeps ||g||, adds one edge, never shortens 100 samples", ok,
           "exact", f"executions={runs} violations={len(bad)}")
    assert ok


def test_ac8_l2():
    empty_bad = []
    for i, T in enumerate(grushko_corpus()):
        if not T.is_grushko():
            empty_bad.append(i)
            continue
        eps = min(L for _, _, L in T.edges) / 2
        if len(l2_epsilon_leaves(T, eps, 4)):
            empty_bad.append(i)
    nonempty_bad = []
    checked = 0
    for i, T in enumerate(splitting_corpus()):
        # a vertex group containing a non-peripheral element
        if not any(_has_nonperipheral(T, v) for v in range(T.n_vertices)):
            continue
        checked += 1
        if not len(l2_epsilon_leaves(T, 0, 4)):
            nonempty_bad.append(i)
    ok = not empty_bad and not nonempty_bad and checked > 0
    record(8, "L2_eps empty on Grushko trees below min edge; nonempty at 0 on splittings", ok,
           "exact; eps = min edge / 2, L = 4",
           f"grushko_trees={len(grushko_corpus())} splittings_checked={checked} "
           f"failures={empty_bad + nonempty_bad}")
    assert ok


def _has_nonperipheral(T, v):
    for g in enumerate_cyclic_words(T.ctx, 4):
        if is_peripheral(g) is None and T.vertex_group(v).contains(g) is not None:
            return True
    return False


def _irreducible_perms():
    out = []
    for d in (2, 3, 4):
        for p in permutations(range(1, d + 1)):
            if is_irreducible(tuple(range(1, d + 1)), p):
                out.append(list(p))
    return out


def test_ac9_rips():
    rng = random.Random(SEED)
    perms = _irreducible_perms()
    bad = []
    n = 0
    for _ in range(30):
        p = rng.choice(perms)
        lengths = [Fraction(rng.randint(1, 40), rng.randint(1, 9)) for _ in p]
        c = classify(iet_to_system(lengths, p))
        n += 1
        if not (c["quadratic"] and c["m_ge3"] == 0 and c["m_le1"] == 0):
            bad.append((p, lengths))
    t = classify(triple_overlap())
    obs = t["independence_obstruction"] and t["m_ge3"] > t["m_le1"]
    ok = not bad and obs
    record(9, "IET systems quadratic with m_ge3 = 0 = m_le1; triple overlap obstructs", ok,
           "exact", f"iet_systems={n} failures={len(bad)} triple_overlap m_ge3={t['m_ge3']} "
           f"m_le1={t['m_le1']}")
    assert ok


def test_ac10_rauzy():
    rng = random.Random(SEED)
    bad = 0
    pairs = 0
    while pairs < 100:
        a, b = rng.randint(1, 200), rng.randint(1, 200)
        if a == b or gcd(a, b) != 1:
            continue
        s = Fraction(rng.randint(1, 7), rng.randint(1, 7))
        lam = (a * s, b * s)
        pairs += 1
        trace = rauzy_trace(list(lam), [2, 1], 10 ** 4)
        got = [(r["type"], Fraction(r["lengths"]["1"]), Fraction(r["lengths"]["2"]))
               for r in trace if "type" in r]
        if got != subtractive_euclid(*lam) or not trace[-1].get("connection"):
            bad += 1
    cls = rauzy_class([3, 2, 1])
    stable = (3, 2, 1) in cls and all(rauzy_class(list(p)) == cls for p in cls)
    ok = bad == 0 and stable
    record(10, "Rauzy trace equals subtractive Euclid; class of (3 2 1) restart-stable", ok,
           "exact", f"pairs={pairs} mismatches={bad} class_size={len(cls)} stable={stable}")
    assert ok


def saturation_corpus():
    """50 leaf sets with a superset each; every case mentions its rule instances."""
    rng = random.Random(SEED)
    cases = []
    # peripheral rule instances: two leaves from a common vertex point
    for _ in range(20):
        ctx = rng.choice([BZ, ABC])
        j = rng.randrange(len(ctx.factors))
        beta = vertex_point(ctx.identity, j)
        pts = []
        while len(pts) < 3:
            h = random_element(ctx, rng, rng.randint(1, 3))
            p = translate_point(ctx, h, beta)
            if p != beta and p not in pts:
                pts.append(p)
        X = {AlgebraicLeaf.make(ctx, beta, p) for p in pts[:2]}
        cases.append((ctx, X, X | {AlgebraicLeaf.make(ctx, beta, pts[2])}))
    # transitivity instances: chains of element axes sharing endpoints
    for _ in range(20):
        ctx = rng.choice([F2, BZ, MIXED])
        g = random_nonperipheral(ctx, rng, 4)
        h = random_nonperipheral(ctx, rng, 4)
        lo, hi = endpoints(g)
        hlo, hhi = endpoints(h)
        if len({lo.key(), hi.key(), hhi.key()}) < 3:
            continue
        X = {AlgebraicLeaf.make(ctx, lo, hi), AlgebraicLeaf.make(ctx, hi, hhi)}
        extra = {AlgebraicLeaf.make(ctx, hhi, hlo)} if hlo.key() not in (lo.key(), hi.key(), hhi.key()) else set()
        cases.append((ctx, X, X | extra))
    # plain axes, no rule fires or both mix
    while len(cases) < 50:
        ctx = rng.choice([F2, ABC, BZ])
        ls = {AlgebraicLeaf.of_element(random_nonperipheral(ctx, rng, 5)) for _ in range(2)}
        more = ls | {AlgebraicLeaf.of_element(random_nonperipheral(ctx, rng, 5))}
        cases.append((ctx, ls, more))
    return cases[:50]


def _shares_endpoint(X):
    ends = {}
    for lf in X:
        for p in (lf.first, lf.second):
            ends[p] = ends.get(p, 0) + 1
    return any(c > 1 for c in ends.values())


def test_ac11_saturation():
    cases = saturation_corpus()
    trans = sum(_shares_endpoint(X) for _, X, _ in cases)
    peri = sum(any(peripheral_tags(ctx, lf.first, lf.second) for lf in X) for ctx, X, _ in cases)
    failures = []
    for i, (ctx, X, Y) in enumerate(cases):
        SX = peritransitive_saturate(X, ctx, 8, translate_bound=0)
        SY = peritransitive_saturate(Y, ctx, 8, translate_bound=0)
        if not (SX.fixed_point and SY.fixed_point):
            failures.append((i, "no fixed point"))
            continue
        if not (set(X) <= SX.leaves and SX.leaves <= SY.leaves):
            failures.append((i, "monotone"))
        again = peritransitive_saturate(SX, ctx, 8, translate_bound=0)
        if again.leaves != SX.leaves or again.depth != 0:
            failures.append((i, "idempotent"))
    ok = len(cases) == 50 and not failures and trans > 0 and peri > 0
    record(11, "saturation is monotone and idempotent at its fixed point", ok,
           "exact; translate_bound = 0, depth <= 8",
           f"cases={len(cases)} transitivity_instances={trans} peripheral_instances={peri} failures={failures}")
    assert ok


if __name__ == "__main__":
    failed = 0
    tests = [(int(name.split("_")[1][2:]), fn) for name, fn in globals().items()
             if name.startswith("test_ac")]
    for _, fn in sorted(tests, key=lambda t: t[0]):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
