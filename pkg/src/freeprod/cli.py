"""Command-line entry point.

Every subcommand prints canonical JSON (sorted keys, rationals as ``"p/q"``)
unless ``--dot`` or ``--csv`` selects another format.  Exit status is 0 on
success, 1 on a domain error and 2 on unreadable or malformed input; errors
are reported as JSON on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import __version__
from .core import FreeProductContext, FreeProductError, GroupElement, format_element, parse_element
from .currents import RationalCurrent, discontinuity_experiment, pairing, report_csv
from .gog import direction_name, fraction_str, from_json as tree_from_json, to_fraction
from .isometry import (
    IsometryError,
    IsometrySystem,
    classify,
    classify_json,
    rauzy_class,
    rauzy_trace,
    run_machine,
    trace_lines,
)
from .laminations import LeafSet, l2_epsilon_leaves, peritransitive_saturate
from .whitehead import is_simple, whitehead_graph


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def jsonable(x):
    if isinstance(x, Fraction):
        return fraction_str(x)
    if isinstance(x, GroupElement):
        return format_element(x)
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj):
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def _load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def _structured(fn, path, *args):
    try:
        return fn(*args)
    except (KeyError, TypeError, IndexError) as exc:
        raise InputError(f"{path}: malformed file ({type(exc).__name__}: {exc})") from None


def _context(path):
    data = _load(path)
    if isinstance(data, dict) and "context" in data and "factors" not in data:
        data = data["context"]
    return _structured(FreeProductContext.from_json, path, data)


def _tree(path):
    data = _load(path)
    return _structured(tree_from_json, path, data)


def _report(name, context, result, provenance):
    return {"experiment": name, "context": context, "result": result,
            "provenance": provenance, "version": __version__}


# --------------------------------------------------------------------------
# subcommands


def cmd_simple(args, out):
    ctx = _context(args.context)
    g = parse_element(ctx, args.word)
    res = is_simple(ctx, g)
    body = res.to_json()
    body["element"] = format_element(g)
    out.write(dumps(_report("simple", ctx.to_json(), body, "whitehead.is_simple")))


def cmd_tlen(args, out):
    T = _tree(args.tree)
    g = parse_element(T.ctx, args.word)
    L = T.translation_length(g)
    out.write(dumps(_report("tlen", T.ctx.to_json(),
                            {"element": format_element(g), "translation_length": L},
                            "gog.translation_length")))


def cmd_axis(args, out):
    T = _tree(args.tree)
    g = parse_element(T.ctx, args.word)
    if T.translation_length(g) == 0:
        v, c = T.elliptic_fixed_vertex(g)
        body = {"element": format_element(g), "elliptic": True, "fixed_vertex": v,
                "conjugator": format_element(c)}
    else:
        A = T.axis(g)
        body = {"element": format_element(g), "elliptic": False, "length": A.length,
                "cycle": [[direction_name(d), format_element(h)] for d, h in A.cycle],
                "conjugator": {"start": A.conjugator.start, "head": format_element(A.conjugator.head),
                               "steps": [[direction_name(d), format_element(h)]
                                         for d, h in A.conjugator.steps]}}
    out.write(dumps(_report("axis", T.ctx.to_json(), body, "gog.axis")))


def cmd_pair(args, out):
    T = _tree(args.tree)
    g = parse_element(T.ctx, args.word)
    eta = RationalCurrent.of_element(g)
    body = {"element": format_element(g), "pairing": pairing(T, eta),
            "translation_length": T.translation_length(g)}
    out.write(dumps(_report("pair", T.ctx.to_json(), body, "currents.pairing")))


def cmd_discontinuity(args, out):
    rep = discontinuity_experiment(args.kmax, args.depth, args.zbound)
    if args.csv:
        out.write(report_csv(rep))
        return
    prov = {"family1": "gog.translation_length", "family2": "gog.translation_length",
            "cylinders": "currents.cylinder_value", "incompatibility": "currents.pairing"}
    out.write(dumps(_report("discontinuity", "A*B*C and B*Z families", rep, prov)))


def cmd_l2(args, out):
    T = _tree(args.tree)
    eps = to_fraction(args.eps)
    res = l2_epsilon_leaves(T, eps, args.len)
    body = res.to_json(T.ctx)
    body.update({"eps": eps, "len_bound": args.len})
    out.write(dumps(_report("l2", T.ctx.to_json(), body, "laminations.l2_epsilon_leaves")))


def cmd_saturate(args, out):
    data = _load(args.leaves)
    ctx = _context(args.context) if args.context else None
    X = _structured(LeafSet.from_json, args.leaves, data, ctx)
    if ctx is None:
        ctx = _structured(FreeProductContext.from_json, args.leaves, data["context"])
    res = peritransitive_saturate(X, ctx, args.depth, args.translate_bound)
    out.write(dumps(_report("saturate", ctx.to_json(), res.to_json(ctx),
                            "laminations.peritransitive_saturate")))


def cmd_rips(args, out):
    data = _load(args.system)
    S = _structured(IsometrySystem.from_json, args.system, data)
    if args.action == "classify":
        out.write(dumps(_report("rips-classify", "system", classify_json(classify(S)),
                                "isometry.classify")))
        return
    _, records = run_machine(S, prune=args.prune, split=args.split, max_steps=args.max_steps)
    out.write(trace_lines(records))


def _parse_list(text):
    return [t for t in text.replace(",", " ").replace("(", " ").replace(")", " ").split() if t]


def _parse_perm(text):
    try:
        return [int(t) for t in _parse_list(text)]
    except ValueError:
        raise InputError(f"bad permutation {text!r}") from None


def cmd_rauzy(args, out):
    try:
        lengths = [to_fraction(t) for t in _parse_list(args.lengths)]
    except (ValueError, ZeroDivisionError):
        raise InputError(f"bad lengths {args.lengths!r}") from None
    perm = _parse_perm(args.permutation)
    trace = rauzy_trace(lengths, perm, args.steps)
    out.write(dumps(_report("rauzy", {"lengths": lengths, "permutation": perm}, trace,
                            "isometry.rauzy_step")))


def cmd_rauzy_class(args, out):
    perm = _parse_perm(args.permutation)
    cls = rauzy_class(perm)
    out.write(dumps(_report("rauzy-class", {"permutation": perm},
                            {"size": len(cls), "class": [list(p) for p in cls]},
                            "isometry.rauzy_class")))


def cmd_wh(args, out):
    T = _tree(args.tree)
    g = parse_element(T.ctx, args.word)
    W = whitehead_graph(T, g, args.vertex)
    if args.dot:
        out.write(W.to_dot())
        return
    out.write(dumps(_report("wh", T.ctx.to_json(), W.to_json(), "whitehead.whitehead_graph")))


# --------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="freeprod", description="Computations in free products of groups.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, helptext):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--json", action="store_true", help="JSON output (the default)")
        sp.set_defaults(func=fn)
        return sp

    sp = add("simple", cmd_simple, "decide simplicity of an element")
    sp.add_argument("context")
    sp.add_argument("word")

    for name, fn, h in (("tlen", cmd_tlen, "translation length in a tree"),
                        ("axis", cmd_axis, "axis or fixed vertex of an element"),
                        ("pair", cmd_pair, "pair a tree with the current of an element")):
        sp = add(name, fn, h)
        sp.add_argument("tree")
        sp.add_argument("word")

    sp = add("discontinuity", cmd_discontinuity, "run the discontinuity experiment")
    sp.add_argument("--kmax", type=int, default=20)
    sp.add_argument("--depth", type=int, default=3)
    sp.add_argument("--zbound", type=int, default=3, help="largest |n| of a Z label in a cylinder")
    sp.add_argument("--csv", action="store_true")

    sp = add("l2", cmd_l2, "leaves of short axes")
    sp.add_argument("tree")
    sp.add_argument("--eps", default="0")
    sp.add_argument("--len", type=int, default=4)

    sp = add("saturate", cmd_saturate, "peritransitive saturation of a leaf set")
    sp.add_argument("leaves")
    sp.add_argument("--context")
    sp.add_argument("--depth", type=int, default=3)
    sp.add_argument("--translate-bound", type=int, default=0)

    sp = add("rips", cmd_rips, "pruning and splitting on a system of isometries")
    sp.add_argument("action", choices=["run", "classify"])
    sp.add_argument("system")
    sp.add_argument("--prune", action="store_true")
    sp.add_argument("--split", action="store_true")
    sp.add_argument("--max-steps", type=int, default=100)

    sp = add("rauzy", cmd_rauzy, "Rauzy-Veech induction trace")
    sp.add_argument("lengths")
    sp.add_argument("permutation")
    sp.add_argument("--steps", type=int, default=50)

    sp = add("rauzy-class", cmd_rauzy_class, "Rauzy class of a permutation")
    sp.add_argument("permutation")

    sp = add("wh", cmd_wh, "Whitehead graph at a vertex")
    sp.add_argument("tree")
    sp.add_argument("word")
    sp.add_argument("--vertex", type=int, default=0)
    sp.add_argument("--dot", action="store_true")
    return p


def _error(kind, exc, err):
    err.write(json.dumps({"error": kind, "message": str(exc)}, sort_keys=True) + "\n")


def main(argv=None, out=None, err=None):
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except InputError as exc:
        _error("usage", exc, err)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "rips" and not (args.prune or args.split) and args.action == "run":
        args.prune = args.split = True
    try:
        args.func(args, out)
    except InputError as exc:
        _error("input", exc, err)
        return 2
    except (FreeProductError, IsometryError) as exc:
        _error(type(exc).__name__, exc, err)
        return 1
    except ValueError as exc:
        _error("input", exc, err)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
