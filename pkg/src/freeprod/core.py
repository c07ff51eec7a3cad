"""Normal forms, conjugacy helpers and boundary points in free products.

A group here is ``G = G_1 * ... * G_k * F_N`` where each ``G_i`` is either a
finite group given by its multiplication table or the infinite cyclic group.

Syllables are plain tuples:

* ``(0, i, a)`` -- element ``a`` (non-identity) of peripheral factor ``i``
* ``(1, j, s)`` -- free generator ``j`` raised to ``s`` in ``{+1, -1}``

Elements of infinite cyclic factors are integers; elements of finite factors
are row indices of the table.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

PERIPHERAL = 0
FREE = 1

DEFAULT_FREE_NAMES = ("x", "y", "z", "t", "u", "w", "s", "r")


class FreeProductError(ValueError):
    """Raised on malformed input or a violated precondition."""


class PeripheralFactor:
    """A finite group (by table) or the infinite cyclic group.

    Finite tables are checked for closure, associativity, identity and
    inverses when the factor is built.
    """

    __slots__ = ("name", "table", "identity", "_inv")

    def __init__(self, name, table=None, identity=0):
        self.name = str(name)
        if table is None:
            self.table = None
            self.identity = 0
            self._inv = None
            return
        tab = tuple(tuple(int(v) for v in row) for row in table)
        n = len(tab)
        if n == 0:
            raise FreeProductError(f"factor {name}: empty table")
        for row in tab:
            if len(row) != n:
                raise FreeProductError(f"factor {name}: table is not square")
            for v in row:
                if not 0 <= v < n:
                    raise FreeProductError(f"factor {name}: table not closed")
        if not 0 <= identity < n:
            raise FreeProductError(f"factor {name}: identity out of range")
        for a in range(n):
            if tab[identity][a] != a or tab[a][identity] != a:
                raise FreeProductError(f"factor {name}: bad identity")
        for a in range(n):
            for b in range(n):
                ab = tab[a][b]
                for c in range(n):
                    if tab[ab][c] != tab[a][tab[b][c]]:
                        raise FreeProductError(f"factor {name}: table not associative")
        inv = []
        for a in range(n):
            found = [b for b in range(n) if tab[a][b] == identity]
            if len(found) != 1 or tab[found[0]][a] != identity:
                raise FreeProductError(f"factor {name}: element {a} has no inverse")
            inv.append(found[0])
        self.table = tab
        self.identity = identity
        self._inv = tuple(inv)

    @classmethod
    def cyclic(cls, name, n):
        """The cyclic group of order ``n`` with generator 1."""
        n = int(n)
        if n < 1:
            raise FreeProductError("cyclic order must be positive")
        return cls(name, [[(i + j) % n for j in range(n)] for i in range(n)], 0)

    @classmethod
    def integers(cls, name):
        return cls(name, None)

    @property
    def is_infinite(self):
        return self.table is None

    @property
    def order(self):
        return None if self.table is None else len(self.table)

    def mul(self, a, b):
        if self.table is None:
            return a + b
        return self.table[a][b]

    def inv(self, a):
        if self.table is None:
            return -a
        return self._inv[a]

    def pow(self, a, n):
        if self.table is None:
            return a * n
        r = self.identity
        base = a if n >= 0 else self._inv[a]
        for _ in range(abs(n)):
            r = self.table[r][base]
        return r

    def is_identity(self, a):
        return a == self.identity

    def check(self, a):
        if self.table is None:
            if not isinstance(a, int):
                raise FreeProductError(f"factor {self.name}: element must be an integer")
        elif not (isinstance(a, int) and 0 <= a < len(self.table)):
            raise FreeProductError(f"factor {self.name}: element {a} out of table range")

    def nonidentity(self, bound=1):
        """Non-identity elements; for Z those with ``0 < |n| <= bound``."""
        if self.table is None:
            out = []
            for n in range(1, bound + 1):
                out.extend((n, -n))
            return out
        return [a for a in range(len(self.table)) if a != self.identity]

    def cost(self, a):
        """Letter cost of a syllable: ``|n|`` for Z, 1 for finite factors."""
        return abs(a) if self.table is None else 1

    def __eq__(self, other):
        return (isinstance(other, PeripheralFactor) and self.name == other.name
                and self.table == other.table and self.identity == other.identity)

    def __hash__(self):
        return hash((self.name, self.table))

    def __repr__(self):
        if self.table is None:
            return f"PeripheralFactor({self.name!r}, Z)"
        return f"PeripheralFactor({self.name!r}, order={len(self.table)})"


class FreeProductContext:
    """The free product of ``factors`` with a free group of rank ``free_rank``."""

    def __init__(self, factors, free_rank=0, free_names=None):
        self.factors = tuple(factors)
        self.free_rank = int(free_rank)
        if self.free_rank < 0:
            raise FreeProductError("free rank must be non-negative")
        if free_names is None:
            if self.free_rank <= len(DEFAULT_FREE_NAMES):
                free_names = DEFAULT_FREE_NAMES[: self.free_rank]
            else:
                free_names = [f"x{i}" for i in range(self.free_rank)]
        self.free_names = tuple(str(n) for n in free_names)
        if len(self.free_names) != self.free_rank:
            raise FreeProductError("free_names length differs from free rank")
        names = [f.name for f in self.factors] + list(self.free_names)
        if len(set(names)) != len(names):
            raise FreeProductError("factor and generator names must be distinct")
        for n in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", n):
                raise FreeProductError(f"bad name {n!r}")
        if len(self.factors) + self.free_rank < 1:
            raise FreeProductError("a context needs k + N >= 1")
        self._factor_index = {f.name: i for i, f in enumerate(self.factors)}
        self._free_index = {n: j for j, n in enumerate(self.free_names)}

    @property
    def kurosh_rank(self):
        return len(self.factors) + self.free_rank

    @property
    def identity(self):
        return GroupElement(self, ())

    def factor_index(self, name):
        try:
            return self._factor_index[name]
        except KeyError:
            raise FreeProductError(f"unknown factor {name!r}") from None

    def free_index(self, name):
        try:
            return self._free_index[name]
        except KeyError:
            raise FreeProductError(f"unknown free generator {name!r}") from None

    # element construction -------------------------------------------------
    def element(self, word):
        """Reduce a sequence of raw syllables (see module docstring)."""
        return reduce(self, word)

    def parse(self, text):
        return parse_element(self, text)

    def peripheral(self, i, a):
        return reduce(self, [(PERIPHERAL, i, a)])

    def gen(self, j, s=1):
        return reduce(self, [(FREE, j, 1 if s > 0 else -1)] * abs(s))

    def letter(self, name, power=1):
        """``letter('x', 2)`` is x^2; for a factor the element 1 is raised to ``power``."""
        if name in self._factor_index:
            i = self._factor_index[name]
            f = self.factors[i]
            gen = 1 if f.is_infinite else 1 % f.order
            return self.peripheral(i, f.pow(gen, power))
        return self.gen(self.free_index(name), power)

    def same_as(self, other):
        return (self.factors == other.factors and self.free_names == other.free_names)

    def __eq__(self, other):
        return isinstance(other, FreeProductContext) and self.same_as(other)

    def __hash__(self):
        return hash((self.factors, self.free_names))

    def __repr__(self):
        parts = [f.name + ("=Z" if f.is_infinite else f"[{f.order}]") for f in self.factors]
        parts += list(self.free_names)
        return "FreeProductContext(" + ", ".join(parts) + ")"

    def to_json(self):
        facs = []
        for f in self.factors:
            if f.is_infinite:
                facs.append({"name": f.name, "kind": "Z"})
            else:
                facs.append({"name": f.name, "table": [list(r) for r in f.table],
                             "identity": f.identity})
        return {"factors": facs, "free_rank": self.free_rank,
                "free_names": list(self.free_names)}

    @classmethod
    def from_json(cls, data):
        if not isinstance(data, dict):
            raise FreeProductError("context must be a JSON object")
        facs = []
        for fd in data.get("factors", []):
            name = fd["name"]
            if fd.get("kind") == "Z" or fd.get("table") == "Z":
                facs.append(PeripheralFactor.integers(name))
            elif "cyclic" in fd:
                facs.append(PeripheralFactor.cyclic(name, fd["cyclic"]))
            elif "table" in fd:
                facs.append(PeripheralFactor(name, fd["table"], fd.get("identity", 0)))
            else:
                raise FreeProductError(f"factor {name}: need 'table', 'cyclic' or kind 'Z'")
        names = data.get("free_names")
        rank = data.get("free_rank", len(names) if names is not None else 0)
        return cls(facs, rank, names)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """An element in reduced normal form; immutable and hashable."""

    ctx: FreeProductContext = field(repr=False)
    syllables: tuple

    def __eq__(self, other):
        return isinstance(other, GroupElement) and self.syllables == other.syllables

    def __hash__(self):
        return hash(self.syllables)

    def __len__(self):
        return len(self.syllables)

    def __mul__(self, other):
        return _mul(self.ctx, self.syllables, other.syllables)

    def __pow__(self, n):
        if n < 0:
            return self.inverse() ** (-n)
        r = self.ctx.identity
        b = self
        while n:
            if n & 1:
                r = r * b
            b = b * b
            n >>= 1
        return r

    def inverse(self):
        return GroupElement(self.ctx, invert_syllables(self.ctx, self.syllables))

    def is_identity(self):
        return not self.syllables

    def conj(self, h):
        """``h * self * h^-1``."""
        return h * self * h.inverse()

    def letter_length(self):
        n = 0
        for s in self.syllables:
            n += self.ctx.factors[s[1]].cost(s[2]) if s[0] == PERIPHERAL else 1
        return n

    def __str__(self):
        return format_element(self)

    def __repr__(self):
        return f"GroupElement({format_element(self)!r})"

    def sort_key(self):
        return (len(self.syllables), self.syllables)


def invert_syllables(ctx, syl):
    out = []
    for s in reversed(syl):
        if s[0] == PERIPHERAL:
            out.append((PERIPHERAL, s[1], ctx.factors[s[1]].inv(s[2])))
        else:
            out.append((FREE, s[1], -s[2]))
    return tuple(out)


def _push(ctx, stack, s):
    if s[0] == PERIPHERAL:
        f = ctx.factors[s[1]]
        if stack:
            t = stack[-1]
            if t[0] == PERIPHERAL and t[1] == s[1]:
                v = f.mul(t[2], s[2])
                stack.pop()
                if not f.is_identity(v):
                    stack.append((PERIPHERAL, s[1], v))
                return
        if not f.is_identity(s[2]):
            stack.append(s)
    else:
        if stack:
            t = stack[-1]
            if t[0] == FREE and t[1] == s[1] and t[2] == -s[2]:
                stack.pop()
                return
        stack.append(s)


def _validate(ctx, s):
    if not isinstance(s, tuple) or len(s) != 3:
        raise FreeProductError(f"malformed syllable {s!r}")
    kind, i, a = s
    if kind == PERIPHERAL:
        if not (isinstance(i, int) and 0 <= i < len(ctx.factors)):
            raise FreeProductError(f"unknown factor index {i!r}")
        ctx.factors[i].check(a)
    elif kind == FREE:
        if not (isinstance(i, int) and 0 <= i < ctx.free_rank):
            raise FreeProductError(f"unknown free generator index {i!r}")
        if a not in (1, -1):
            raise FreeProductError("free letter exponent must be +1 or -1")
    else:
        raise FreeProductError(f"unknown syllable kind {kind!r}")


def reduce(ctx, word):
    """Reduced normal form of a sequence of raw syllables."""
    stack = []
    for s in word:
        s = tuple(s)
        _validate(ctx, s)
        _push(ctx, stack, s)
    return GroupElement(ctx, tuple(stack))


def _mul(ctx, a, b):
    stack = list(a)
    for s in b:
        _push(ctx, stack, s)
    return GroupElement(ctx, tuple(stack))


def _merge_ends(ctx, first, last):
    """How the last syllable of a word interacts with the first one.

    Returns ``None`` when they neither cancel nor merge, otherwise the merged
    syllable (``()`` when they cancel completely).
    """
    if first[0] == PERIPHERAL:
        if last[0] == PERIPHERAL and last[1] == first[1]:
            f = ctx.factors[first[1]]
            v = f.mul(last[2], first[2])
            return () if f.is_identity(v) else (PERIPHERAL, first[1], v)
        return None
    if last[0] == FREE and last[1] == first[1] and last[2] == -first[2]:
        return ()
    return None


def is_cyclically_reduced(g):
    syl = g.syllables
    if len(syl) <= 1:
        return True
    return _merge_ends(g.ctx, syl[0], syl[-1]) is None


def cyclic_reduce(g):
    """Return ``(conjugator, core)`` with ``g = conjugator * core * conjugator^-1``."""
    ctx = g.ctx
    syl = list(g.syllables)
    left = []
    while len(syl) >= 2:
        m = _merge_ends(ctx, syl[0], syl[-1])
        if m is None:
            break
        if m == ():
            left.append(syl[0])
            syl = syl[1:-1]
        else:
            # g = s0 * (mid * (last s0)) * s0^-1 with last*s0 merged
            left.append(syl[0])
            syl = syl[1:-1] + [m]
    conj = reduce(ctx, left) if left else ctx.identity
    return conj, GroupElement(ctx, tuple(syl))


IDENTITY_TAG = "identity"


def is_peripheral(g):
    """``(factor, conjugator)`` if ``g`` is conjugate into one factor, else ``None``.

    The identity returns the module constant ``IDENTITY_TAG``.
    """
    if g.is_identity():
        return IDENTITY_TAG
    conj, core = cyclic_reduce(g)
    if len(core) == 1 and core.syllables[0][0] == PERIPHERAL:
        return core.syllables[0][1], conj
    return None


def is_nonperipheral(g):
    return not g.is_identity() and is_peripheral(g) is None


def primitive_root_cyclic(core):
    """Shortest syllable block ``r`` with ``core = r^n`` (``core`` cyclically reduced)."""
    syl = core.syllables
    n = len(syl)
    for d in range(1, n + 1):
        if n % d == 0 and syl == syl[:d] * (n // d):
            return GroupElement(core.ctx, syl[:d]), n // d
    return core, 1


# --------------------------------------------------------------------------
# boundary points


@dataclass(frozen=True)
class BoundaryPoint:
    """Either a ray ``prefix * period^infinity`` or a peripheral vertex ``coset * v_i``.

    Build with :func:`ray_normalize` or :func:`vertex_point` so that the
    stored representation is canonical and equality is structural.
    """

    kind: str
    prefix: tuple
    period: tuple = ()
    factor: int = -1

    def key(self):
        return (0 if self.kind == "vertex" else 1, len(self.prefix), self.prefix,
                len(self.period), self.period, self.factor)

    def __lt__(self, other):
        return self.key() < other.key()

    def is_ray(self):
        return self.kind == "ray"


def ray_normalize(prefix, period):
    """Canonical form of the ray ``prefix * period * period * ...``."""
    ctx = period.ctx
    if period.is_identity() or is_peripheral(period) is not None:
        raise FreeProductError("ray period must be non-peripheral")
    c, q = cyclic_reduce(period)
    q, _ = primitive_root_cyclic(q)
    w = list((prefix * c).syllables)
    qs = list(q.syllables)
    # absorb cancellation at the junction with the periodic stream
    while w:
        m = _merge_ends(ctx, qs[0], w[-1])
        if m is None:
            break
        w.pop()
        head = qs[0]
        qs = qs[1:] + [head]
        if m != ():
            w.append(m)
            break
    # strip trailing whole syllables that repeat the period
    while w and w[-1] == qs[-1]:
        w.pop()
        qs = [qs[-1]] + qs[:-1]
    return BoundaryPoint("ray", tuple(w), tuple(qs))


def vertex_point(coset, factor):
    """The vertex fixed by ``coset * G_factor * coset^-1``."""
    syl = list(coset.syllables)
    if syl and syl[-1][0] == PERIPHERAL and syl[-1][1] == factor:
        syl.pop()
    return BoundaryPoint("vertex", tuple(syl), (), int(factor))


def boundary_eq(p, q):
    return p == q


def translate_point(ctx, h, p):
    """``h . p`` for a group element ``h``."""
    if p.kind == "ray":
        return ray_normalize(h * GroupElement(ctx, p.prefix), GroupElement(ctx, p.period))
    return vertex_point(h * GroupElement(ctx, p.prefix), p.factor)


def endpoints(g):
    """``(g^-inf, g^+inf)`` as canonical rays."""
    if g.is_identity() or is_peripheral(g) is not None:
        raise FreeProductError("endpoints need a non-peripheral, non-identity element")
    conj, core = cyclic_reduce(g)
    return ray_normalize(conj, core.inverse()), ray_normalize(conj, core)


def ray_syllables(ctx, p, n):
    """First ``n`` syllables of a ray (naive expansion, used as a cross-check)."""
    if p.kind != "ray":
        raise FreeProductError("not a ray")
    reps = n // max(1, len(p.period)) + 2
    w = GroupElement(ctx, p.prefix) * (GroupElement(ctx, p.period) ** reps)
    return w.syllables[:n]


# --------------------------------------------------------------------------
# text syntax

_TOKEN = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?::(-?\d+))?(?:\^(-?\d+))?$")


def parse_element(ctx, text):
    """Parse ``"A:3 x^-1 B:2"``; ``""`` or ``"1"`` is the identity."""
    text = text.strip()
    if text in ("", "1", "e"):
        return ctx.identity
    word = []
    for tok in text.replace("*", " ").split():
        m = _TOKEN.match(tok)
        if not m:
            raise FreeProductError(f"cannot parse syllable {tok!r}")
        name, val, power = m.group(1), m.group(2), m.group(3)
        power = int(power) if power is not None else 1
        if name in ctx._factor_index:
            i = ctx._factor_index[name]
            f = ctx.factors[i]
            if val is None:
                a = 1 if f.is_infinite else (1 % f.order)
            else:
                a = int(val)
            f.check(a)
            if power < 0:
                a, power = f.inv(a), -power
            word.extend([(PERIPHERAL, i, a)] * power)
        elif name in ctx._free_index:
            if val is not None:
                raise FreeProductError(f"free letter {tok!r} takes no ':' value")
            j = ctx._free_index[name]
            word.extend([(FREE, j, 1 if power > 0 else -1)] * abs(power))
        else:
            raise FreeProductError(f"unknown factor or generator {name!r}")
    return reduce(ctx, word)


def format_syllable(ctx, s):
    if s[0] == PERIPHERAL:
        return f"{ctx.factors[s[1]].name}:{s[2]}"
    name = ctx.free_names[s[1]]
    return name if s[2] == 1 else f"{name}^-1"


def format_element(g):
    if g.is_identity():
        return "1"
    return " ".join(format_syllable(g.ctx, s) for s in g.syllables)


def format_point(ctx, p):
    if p.kind == "ray":
        pre = format_element(GroupElement(ctx, p.prefix))
        per = format_element(GroupElement(ctx, p.period))
        return f"ray({pre}; {per})"
    return f"vertex({format_element(GroupElement(ctx, p.prefix))}; {ctx.factors[p.factor].name})"


def point_to_json(ctx, p):
    if p.kind == "ray":
        return {"ray": {"prefix": format_element(GroupElement(ctx, p.prefix)),
                        "period": format_element(GroupElement(ctx, p.period))}}
    return {"vertex": {"coset": format_element(GroupElement(ctx, p.prefix)),
                       "factor": ctx.factors[p.factor].name}}


def point_from_json(ctx, d):
    if "ray" in d:
        return ray_normalize(parse_element(ctx, d["ray"]["prefix"]),
                             parse_element(ctx, d["ray"]["period"]))
    if "vertex" in d:
        return vertex_point(parse_element(ctx, d["vertex"]["coset"]),
                            ctx.factor_index(d["vertex"]["factor"]))
    raise FreeProductError("boundary point needs 'ray' or 'vertex'")


# --------------------------------------------------------------------------
# enumeration and sampling


def _letter_options(ctx, zbound):
    opts = []
    for i, f in enumerate(ctx.factors):
        for a in f.nonidentity(zbound):
            opts.append(((PERIPHERAL, i, a), f.cost(a)))
    for j in range(ctx.free_rank):
        opts.append(((FREE, j, 1), 1))
        opts.append(((FREE, j, -1), 1))
    return opts


def _compatible(prev, s):
    if prev is None:
        return True
    if s[0] == PERIPHERAL:
        return not (prev[0] == PERIPHERAL and prev[1] == s[1])
    return not (prev[0] == FREE and prev[1] == s[1] and prev[2] == -s[2])


def enumerate_elements(ctx, max_len):
    """All reduced elements of letter length ``<= max_len`` (identity first).

    A syllable ``b^n`` of an infinite cyclic factor costs ``|n|`` letters.
    """
    opts = _letter_options(ctx, max_len)
    out = [ctx.identity]

    def rec(word, budget):
        prev = word[-1] if word else None
        for s, c in opts:
            if c <= budget and _compatible(prev, s):
                word.append(s)
                out.append(GroupElement(ctx, tuple(word)))
                rec(word, budget - c)
                word.pop()

    rec([], max_len)
    out.sort(key=lambda g: (g.letter_length(), g.syllables))
    return out


def enumerate_cyclic_words(ctx, max_len):
    """Cyclically reduced non-identity elements of letter length ``<= max_len``."""
    return [g for g in enumerate_elements(ctx, max_len)[1:] if is_cyclically_reduced(g)]


def random_element(ctx, rng, length, zbound=3):
    """A random reduced element with exactly ``length`` syllables."""
    opts = [s for s, _ in _letter_options(ctx, zbound)]
    word = []
    while len(word) < length:
        s = rng.choice(opts)
        if _compatible(word[-1] if word else None, s):
            word.append(s)
    return GroupElement(ctx, tuple(word))


def random_nonperipheral(ctx, rng, max_len, zbound=3):
    while True:
        g = random_element(ctx, rng, rng.randint(1, max_len), zbound)
        if is_nonperipheral(g):
            return g


def canonical_class_rep(g):
    """Minimal rotation of the cyclically reduced core of ``g`` or ``g^-1``."""
    _, core = cyclic_reduce(g)
    best = None
    for h in (core, core.inverse()):
        syl = h.syllables
        for r in range(max(1, len(syl))):
            rot = syl[r:] + syl[:r]
            key = (len(rot), rot)
            if best is None or key < best:
                best = key
    return GroupElement(g.ctx, best[1])
