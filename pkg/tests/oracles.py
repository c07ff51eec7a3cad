"""Independent brute-force oracles.

These do not import the package; words in F2 are tuples over {1, -1, 2, -2}
(x, x^-1, y, y^-1).
"""
from fractions import Fraction
from itertools import product

LETTERS = (1, -1, 2, -2)


def free_reduce(w):
    out = []
    for a in w:
        if out and out[-1] == -a:
            out.pop()
        else:
            out.append(a)
    return tuple(out)


def cyclic_reduce(w):
    w = free_reduce(w)
    while len(w) >= 2 and w[0] == -w[-1]:
        w = w[1:-1]
    return w


def substitute(w, images):
    out = []
    for a in w:
        img = images[abs(a)]
        if a < 0:
            img = tuple(-b for b in reversed(img))
        out.extend(img)
    return free_reduce(out)


def whitehead_automorphisms():
    """All type-two Whitehead automorphisms of F2 as image dicts."""
    auts = []
    for a in LETTERS:
        b = 3 - abs(a)
        ai = -a
        for img in ((b, a), (ai, b), (ai, b, a)):
            auts.append({abs(a): (abs(a),), b: img})
    return auts


_AUTS = whitehead_automorphisms()


def minimize(w):
    """Peak reduction: apply length-reducing Whitehead moves until none reduce."""
    w = cyclic_reduce(w)
    while True:
        for phi in _AUTS:
            v = cyclic_reduce(substitute(w, phi))
            if len(v) < len(w):
                w = v
                break
        else:
            return w


def f2_is_simple(w):
    """A nontrivial cyclic word of F2 lies in a proper free factor iff its
    minimal Whitehead representative is a power of one letter."""
    m = minimize(w)
    return len(m) > 0 and len({abs(a) for a in m}) == 1


def cyclically_reduced_words(max_len):
    for n in range(1, max_len + 1):
        for w in product(LETTERS, repeat=n):
            if free_reduce(w) == w and cyclic_reduce(w) == w:
                yield w


def word_text(w):
    names = {1: "x", -1: "x^-1", 2: "y", -2: "y^-1"}
    return " ".join(names[a] for a in w)


def subtractive_euclid(a, b):
    """Trace of the subtractive algorithm on (a, b) with the step types used by
    Rauzy induction of the rotation permutation (2 1)."""
    a, b = Fraction(a), Fraction(b)
    out = []
    while a != b:
        if b > a:
            b -= a
            out.append(("top", a, b))
        else:
            a -= b
            out.append(("bottom", a, b))
    return out


def rose_length(syllables, factor_lengths, free_lengths):
    """Translation length on a rose from a cyclically reduced syllable list:
    a peripheral syllable crosses its petal twice, a free letter once."""
    if len(syllables) == 1 and syllables[0][0] == 0:
        return Fraction(0)
    total = Fraction(0)
    for kind, j, _ in syllables:
        total += 2 * factor_lengths[j] if kind == 0 else free_lengths[j]
    return total
