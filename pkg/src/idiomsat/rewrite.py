"""Patterns, e-matching, rule application, and the saturation scheduler.

Shift-annotated pattern variables (?x^k) bind a class only when some member
avoids the k lowest De Bruijn indices; the member is extracted as a witness
and recorded down-shifted. Beta reduction is applied by extracting the body
and argument, substituting at the term level, and re-inserting the result, so
no substitution or shift operators ever appear in the graph.

Rules with unbound right-hand-side variables (the Intro* family) enumerate
candidate classes from the graph. The enumeration is capped and ranked:
classes holding low-index De Bruijn variables first, then small classes.
Instantiation re-derives the sort of every new node from the bindings and
skips the match if anything is inconsistent, which is what keeps dimension-
mixing instantiations out of the graph.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterator, Optional, Sequence

from .egraph import ClassId, ConstConflict, EGraph, ENode, EGraphError, SortConflict, Unextractable
from .ir import (
    ArraySort,
    Dim,
    Expr,
    FLOAT,
    FloatSort,
    FnName,
    FnSort,
    KernelDef,
    SIZE,
    SizeSort,
    Sort,
    TExpr,
    TupleSort,
    UnknownSort,
    call_sort,
    sorts_agree,
    tshift,
    tsubstitute,
)


# ---------------------------------------------------------------------------
# Sort filters for pattern variables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SortFilter:
    name: str
    fn: Callable[[Sort], bool]

    def __call__(self, s: Sort) -> bool:
        return self.fn(s)


def _is_vec(s: Sort) -> bool:
    return isinstance(s, ArraySort) and sorts_agree(s.elem, FLOAT) and not isinstance(s.elem, ArraySort)


def _is_mat(s: Sort) -> bool:
    return isinstance(s, ArraySort) and isinstance(s.elem, ArraySort)


SF_FLOAT = SortFilter("float", lambda s: isinstance(s, (FloatSort, UnknownSort)))
SF_SIZE = SortFilter("size", lambda s: isinstance(s, SizeSort))
SF_VEC = SortFilter("vec", _is_vec)
SF_MAT = SortFilter("mat", _is_mat)
SF_ARR = SortFilter("array", lambda s: isinstance(s, ArraySort))
SF_FN_SIZE = SortFilter("fn-size", lambda s: isinstance(s, FnSort) and isinstance(s.arg, SizeSort))


# ---------------------------------------------------------------------------
# Patterns
# ---------------------------------------------------------------------------

class Pat:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class PMeta(Pat):
    name: str
    shift: int = 0
    sort: Optional[SortFilter] = None
    const: Optional[Fraction] = None


@dataclass(frozen=True, slots=True)
class PVarIdx(Pat):
    index: int


@dataclass(frozen=True, slots=True)
class PNum(Pat):
    value: Fraction


@dataclass(frozen=True, slots=True)
class PSizeLit(Pat):
    value: int


@dataclass(frozen=True, slots=True)
class PLam(Pat):
    body: Pat
    param: Optional[Sort] = None
    param_from: Optional[str] = None


@dataclass(frozen=True, slots=True)
class PApp(Pat):
    fn: Pat
    arg: Pat


@dataclass(frozen=True, slots=True)
class PBuild(Pat):
    size: Pat
    fn: Pat


@dataclass(frozen=True, slots=True)
class PIndex(Pat):
    arr: Pat
    idx: Pat


@dataclass(frozen=True, slots=True)
class PIFold(Pat):
    size: Pat
    init: Pat
    fn: Pat


@dataclass(frozen=True, slots=True)
class PTup(Pat):
    fst: Pat
    snd: Pat


@dataclass(frozen=True, slots=True)
class PFst(Pat):
    arg: Pat


@dataclass(frozen=True, slots=True)
class PSnd(Pat):
    arg: Pat


# Flag patterns on calls: a literal bool, ("var", x) binding x, or ("not", x).
FlagPat = object


@dataclass(frozen=True, slots=True)
class PCall(Pat):
    base: str
    flags: tuple
    args: tuple[Pat, ...]


@dataclass(frozen=True, slots=True)
class PSizeOfDim(Pat):
    """RHS-only: the size expression naming the outer dimension of a bound
    array variable (a SizeSym or SizeLit class)."""

    of: str


def pm(name: str, shift: int = 0, sort: Optional[SortFilter] = None, const=None) -> PMeta:
    c = None if const is None else Fraction(const)
    return PMeta(name, shift, sort, c)


def pvar(i: int) -> PVarIdx:
    return PVarIdx(i)


def pnum(v) -> PNum:
    return PNum(Fraction(v))


def plam(body: Pat, param: Optional[Sort] = None, param_from: Optional[str] = None) -> PLam:
    return PLam(body, param, param_from)


def pcall(base: str, *args: Pat, flags: tuple = ()) -> PCall:
    return PCall(base, flags, tuple(args))


def padd(a: Pat, b: Pat) -> PCall:
    return PCall("+", (), (a, b))


def pmul(a: Pat, b: Pat) -> PCall:
    return PCall("*", (), (a, b))


def fvar(name: str):
    return ("var", name)


def fnot(name: str):
    return ("not", name)


_KIND_OF_PAT = {
    PVarIdx: "var",
    PNum: "numlit",
    PSizeLit: "sizelit",
    PLam: "lam",
    PApp: "app",
    PBuild: "build",
    PIndex: "idx",
    PIFold: "ifold",
    PTup: "tup",
    PFst: "fst",
    PSnd: "snd",
    PCall: "call",
}


def pat_children(p: Pat) -> tuple[Pat, ...]:
    match p:
        case PLam(body, _, _):
            return (body,)
        case PApp(f, a) | PBuild(f, a) | PIndex(f, a) | PTup(f, a):
            return (f, a)
        case PIFold(n, z, f):
            return (n, z, f)
        case PFst(a) | PSnd(a):
            return (a,)
        case PCall(_, _, args):
            return args
        case _:
            return ()


def print_pattern(p: Pat) -> str:
    match p:
        case PMeta(name, shift, _, _):
            return f"?{name}" + ("^" + str(shift) if shift else "")
        case PVarIdx(i):
            return f"%{i}"
        case PNum(v):
            return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
        case PSizeLit(n):
            return f"#{n}"
        case PLam(body, _, _):
            return f"(lam {print_pattern(body)})"
        case PApp(f, a):
            return f"(app {print_pattern(f)} {print_pattern(a)})"
        case PBuild(n, f):
            return f"(build {print_pattern(n)} {print_pattern(f)})"
        case PIndex(a, i):
            return f"(idx {print_pattern(a)} {print_pattern(i)})"
        case PIFold(n, z, f):
            return f"(ifold {print_pattern(n)} {print_pattern(z)} {print_pattern(f)})"
        case PTup(a, b):
            return f"(tuple {print_pattern(a)} {print_pattern(b)})"
        case PFst(a):
            return f"(fst {print_pattern(a)})"
        case PSnd(a):
            return f"(snd {print_pattern(a)})"
        case PCall(base, flags, args):
            name = base
            if flags:
                bits = []
                for f in flags:
                    if f is True:
                        bits.append("T")
                    elif f is False:
                        bits.append("F")
                    elif f[0] == "var":
                        bits.append(f"?{f[1]}")
                    else:
                        bits.append(f"!?{f[1]}")
                name = base + "_" + "".join(bits)
            inner = " ".join(print_pattern(a) for a in args)
            if base in ("+", "*", ">"):
                return f"({base} {inner})"
            return f"(call {name}{' ' + inner if inner else ''})"
        case PSizeOfDim(of):
            return f"(dim-of ?{of})"
    raise TypeError(f"not a pattern: {p!r}")


# ---------------------------------------------------------------------------
# Rules and matches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewriteRule:
    name: str
    family: str  # core | scalar | blas | pytorch
    lhs: Pat
    rhs: Optional[Pat]
    unbound: tuple[tuple[str, Optional[SortFilter]], ...] = ()
    applier: str = "plain"  # plain | beta | fold_step

    def needs_any_witness(self) -> frozenset[str]:
        """LHS-bound names whose RHS occurrences are shifted: those bindings
        need a concrete representative even though the LHS bound them plain."""
        lhs_shift: dict[str, int] = {}

        def scan_l(p: Pat) -> None:
            if isinstance(p, PMeta):
                prev = lhs_shift.get(p.name)
                if prev is not None and prev != p.shift:
                    raise ValueError(f"{self.name}: {p.name} bound at two shifts")
                lhs_shift[p.name] = p.shift
            for c in pat_children(p):
                scan_l(c)

        need: set[str] = set()

        def scan_r(p: Pat) -> None:
            if isinstance(p, PMeta) and p.name in lhs_shift and p.shift != lhs_shift[p.name]:
                need.add(p.name)
            for c in pat_children(p):
                scan_r(c)

        scan_l(self.lhs)
        if self.rhs is not None:
            scan_r(self.rhs)
        if self.applier == "beta":
            need.update(n for n in lhs_shift)
        return frozenset(need)


@dataclass
class Binding:
    cid: ClassId
    shift: int
    witness: Optional[TExpr] = None  # down-shifted representative for shift>0


@dataclass
class Match:
    rule: str
    root: ClassId
    bindings: dict[str, Binding]
    flags: dict[str, bool] = field(default_factory=dict)

    def key(self, g: EGraph) -> tuple:
        items = tuple(sorted((n, g.find(b.cid), b.shift) for n, b in self.bindings.items()))
        return (self.rule, g.find(self.root), items, tuple(sorted(self.flags.items())))


# ---------------------------------------------------------------------------
# E-matching
# ---------------------------------------------------------------------------

def _match_flags(pats: tuple, flags: tuple[bool, ...], fenv: dict[str, bool]) -> Optional[dict[str, bool]]:
    if len(pats) != len(flags):
        return None
    env = fenv
    for p, f in zip(pats, flags):
        if p is True or p is False:
            if p != f:
                return None
        elif p[0] == "var":
            have = env.get(p[1])
            if have is None:
                env = {**env, p[1]: f}
            elif have != f:
                return None
        else:  # ("not", x)
            have = env.get(p[1])
            if have is None or have == f:
                return None
    return env


def _iter_matches(
    g: EGraph, p: Pat, cid: ClassId, bnd: dict[str, tuple[ClassId, int]], fenv: dict[str, bool]
) -> Iterator[tuple[dict, dict]]:
    cid = g.find(cid)
    if isinstance(p, PMeta):
        cls = g.classes[cid]
        if p.sort is not None and not p.sort(cls.sort):
            return
        if p.const is not None and cls.const != p.const:
            return
        if p.shift and frozenset(range(p.shift)) & cls.free:
            return
        have = bnd.get(p.name)
        if have is not None:
            if have == (cid, p.shift):
                yield bnd, fenv
            return
        yield {**bnd, p.name: (cid, p.shift)}, fenv
        return
    kind = _KIND_OF_PAT[type(p)]
    cls = g.classes[cid]
    for node in list(cls.nodes):
        if node.kind != kind:
            continue
        fenv2 = fenv
        if isinstance(p, PVarIdx):
            if node.payload[0] != p.index:
                continue
        elif isinstance(p, PNum):
            if node.payload != p.value:
                continue
        elif isinstance(p, PSizeLit):
            if node.payload != p.value:
                continue
        elif isinstance(p, PCall):
            name: FnName = node.payload
            if name.base != p.base or len(node.children) != len(p.args):
                continue
            fenv2 = _match_flags(p.flags, name.flags, fenv)
            if fenv2 is None:
                continue
        kids = pat_children(p)
        if len(kids) != len(node.children):
            continue

        def go(i: int, b: dict, fe: dict) -> Iterator[tuple[dict, dict]]:
            if i == len(kids):
                yield b, fe
                return
            for b2, fe2 in _iter_matches(g, kids[i], node.children[i], b, fe):
                yield from go(i + 1, b2, fe2)

        yield from go(0, bnd, fenv2)


def ematch(rule: RewriteRule, g: EGraph, by_kind=None) -> list[Match]:
    """All matches of the rule's LHS against the current graph (witnesses not
    yet resolved)."""
    out: list[Match] = []
    seen: set = set()
    lhs = rule.lhs
    if isinstance(lhs, PMeta):
        roots: Sequence[tuple[ClassId, Optional[ENode]]] = [(cid, None) for cid in sorted(g.classes)]
    else:
        if by_kind is None:
            by_kind = g.nodes_by_kind()
        roots = by_kind[_KIND_OF_PAT[type(lhs)]]
    for cid, _node in roots:
        root = g.find(cid)
        if root not in g.classes:
            continue
        for bnd, fenv in _iter_matches(g, lhs, root, {}, {}):
            m = Match(rule.name, root, {n: Binding(c, s) for n, (c, s) in bnd.items()}, dict(fenv))
            k = m.key(g)
            if k not in seen:
                seen.add(k)
                out.append(m)
    return out


# ---------------------------------------------------------------------------
# Candidate pools for unbound RHS variables
# ---------------------------------------------------------------------------

_SORT_RANK = {"size": 0, "float": 1}


def candidate_pool(
    g: EGraph, filt: Optional[SortFilter], best: dict[ClassId, tuple[int, ENode]]
) -> list[ClassId]:
    """Deterministic ranking of candidate classes for an unbound variable.

    Size-filtered pools put named/literal sizes first. Unfiltered pools put
    De Bruijn variable classes first (low index, sizes before floats), since
    lambda-introduction over a loop index is what exposes latent idioms.
    """
    entries = []
    for cid in sorted(g.classes):
        cls = g.classes[cid]
        if filt is not None and not filt(cls.sort):
            continue
        size = best.get(cid, ((1 << 30, 1 << 30), None))[0]
        if filt is SF_SIZE:
            entries.append(((0 if cls.dim is not None else 1, size, cid), cid))
            continue
        var_idx = None
        for node in cls.nodes:
            if node.kind == "var":
                var_idx = node.payload[0] if var_idx is None else min(var_idx, node.payload[0])
        if var_idx is not None:
            srank = _SORT_RANK.get(repr(cls.sort), 2)
            entries.append(((0, srank, var_idx, cid), cid))
        else:
            entries.append(((1, size, cid, 0), cid))
    entries.sort(key=lambda e: e[0])
    return [cid for _, cid in entries]


def enumerate_unbound(
    rule: RewriteRule,
    m: Match,
    g: EGraph,
    cap: Optional[int] = None,
    pools: Optional[dict] = None,
    best: Optional[dict] = None,
) -> list[Match]:
    """Complete a match by choosing classes for unbound RHS variables.

    cap=None enumerates every candidate (the unrestricted behavior); cap=0
    yields nothing."""
    if not rule.unbound:
        return [m]
    if best is None:
        best = g.min_sizes()
    done = [m]
    for name, filt in rule.unbound:
        key = filt.name if filt is not None else "*"
        if pools is not None and key in pools:
            pool = pools[key]
        else:
            pool = candidate_pool(g, filt, best)
            if pools is not None:
                pools[key] = pool
        take = pool if cap is None else pool[: max(cap, 0)]
        nxt = []
        for mm in done:
            for cid in take:
                b = dict(mm.bindings)
                b[name] = Binding(g.find(cid), 0)
                nxt.append(Match(mm.rule, mm.root, b, dict(mm.flags)))
        done = nxt
    return done


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class TClassRef(TExpr):
    cid: ClassId
    sort: Sort


def _represent_template(g: EGraph, t: TExpr) -> ClassId:
    if isinstance(t, TClassRef):
        return g.find(t.cid)
    from .ir import TApp, TBuild, TCall, TFst, TIFold, TIndex, TLam, TNumLit, TSizeLit, TSizeSym, TSnd, TTup, TVar

    match t:
        case TVar(i, s):
            return g.add(ENode("var", (i, s), ()), s)
        case TNumLit(v, s):
            return g.add(ENode("numlit", v, ()), s)
        case TSizeLit(n, s):
            return g.add(ENode("sizelit", n, ()), s)
        case TSizeSym(nm, s):
            return g.add(ENode("sizesym", nm, ()), s)
        case TLam(body, p, s):
            return g.add(ENode("lam", p, (_represent_template(g, body),)), s)
        case TApp(f, a, s):
            return g.add(ENode("app", None, (_represent_template(g, f), _represent_template(g, a))), s)
        case TBuild(n, f, s):
            return g.add(ENode("build", None, (_represent_template(g, n), _represent_template(g, f))), s)
        case TIndex(a, i, s):
            return g.add(ENode("idx", None, (_represent_template(g, a), _represent_template(g, i))), s)
        case TIFold(n, z, f, s):
            return g.add(
                ENode("ifold", None, (_represent_template(g, n), _represent_template(g, z), _represent_template(g, f))), s
            )
        case TTup(a, b, s):
            return g.add(ENode("tup", None, (_represent_template(g, a), _represent_template(g, b))), s)
        case TFst(a, s):
            return g.add(ENode("fst", None, (_represent_template(g, a),)), s)
        case TSnd(a, s):
            return g.add(ENode("snd", None, (_represent_template(g, a),)), s)
        case TCall(nm, args, s):
            return g.add(ENode("call", nm, tuple(_represent_template(g, a) for a in args)), s)
    raise EGraphError(f"cannot instantiate {t!r}")


class _Skip(Exception):
    """Instantiation does not sort-check; drop the match quietly."""


def _rhs_texpr(g: EGraph, p: Pat, m: Match, env: list[Sort]) -> TExpr:
    """Build the sort-annotated RHS template. Raises _Skip when the bindings
    are dimensionally inconsistent for this rule."""
    from .ir import SortMismatch, TApp, TBuild, TCall, TFst, TIFold, TIndex, TLam, TNumLit, TSizeLit, TSizeSym, TSnd, TTup, TVar
    from .ir import size_dim

    def sort_dim(s: Sort) -> Dim:
        return s.dim if isinstance(s, ArraySort) else None

    def rec(p: Pat, env: list[Sort]) -> TExpr:
        match p:
            case PMeta(name, shift, _, _):
                b = m.bindings.get(name)
                if b is None:
                    raise _Skip(f"unbound RHS variable {name}")
                cls = g.class_of(b.cid)
                if shift == b.shift:
                    return TClassRef(g.find(b.cid), cls.sort)
                base = b.witness
                if base is None:
                    raise _Skip(f"no witness for {name}")
                return tshift(base, shift, 0) if shift else base
            case PVarIdx(i):
                if i >= len(env):
                    raise _Skip(f"RHS index %{i} escapes the pattern binders")
                return TVar(i, env[i])
            case PNum(v):
                return TNumLit(v)
            case PSizeLit(n):
                return TSizeLit(n)
            case PSizeOfDim(of):
                b = m.bindings.get(of)
                if b is None:
                    raise _Skip(f"dim-of unbound variable {of}")
                d = sort_dim(g.class_of(b.cid).sort)
                if isinstance(d, int):
                    return TSizeLit(d)
                if isinstance(d, str):
                    return TSizeSym(d)
                raise _Skip(f"dimension of {of} is not statically known")
            case PLam(body, param, param_from):
                ps = param
                if param_from is not None:
                    b = m.bindings.get(param_from)
                    if b is None:
                        raise _Skip(f"lambda parameter source {param_from} unbound")
                    ps = g.class_of(b.cid).sort
                if ps is None:
                    raise _Skip("lambda pattern without a parameter sort")
                tb = rec(body, [ps] + env)
                return TLam(tb, ps, FnSort(ps, tb.sort))
            case PApp(f, a):
                tf, ta = rec(f, env), rec(a, env)
                if not isinstance(tf.sort, FnSort) or not sorts_agree(tf.sort.arg, ta.sort):
                    raise _Skip("application does not sort-check")
                return TApp(tf, ta, tf.sort.res)
            case PBuild(n, f):
                tn, tf = rec(n, env), rec(f, env)
                if not isinstance(tn.sort, SizeSort) or not isinstance(tf.sort, FnSort):
                    raise _Skip("build does not sort-check")
                if not sorts_agree(tf.sort.arg, SIZE):
                    raise _Skip("build function must take a size")
                dim = _texpr_dim(g, tn)
                return TBuild(tn, tf, ArraySort(tf.sort.res, dim))
            case PIndex(a, i):
                ta, ti = rec(a, env), rec(i, env)
                if not isinstance(ta.sort, ArraySort) or not isinstance(ti.sort, SizeSort):
                    raise _Skip("index does not sort-check")
                return TIndex(ta, ti, ta.sort.elem)
            case PIFold(n, z, f):
                tn, tz, tf = rec(n, env), rec(z, env), rec(f, env)
                if not isinstance(tn.sort, SizeSort) or not isinstance(tf.sort, FnSort):
                    raise _Skip("ifold does not sort-check")
                inner = tf.sort.res
                if not isinstance(inner, FnSort) or not sorts_agree(inner.arg, tz.sort) or not sorts_agree(inner.res, tz.sort):
                    raise _Skip("ifold does not sort-check")
                return TIFold(tn, tz, tf, tz.sort)
            case PTup(a, b):
                ta, tb = rec(a, env), rec(b, env)
                return TTup(ta, tb, TupleSort(ta.sort, tb.sort))
            case PFst(a):
                ta = rec(a, env)
                if not isinstance(ta.sort, TupleSort):
                    raise _Skip("fst of non-tuple")
                return TFst(ta, ta.sort.fst)
            case PSnd(a):
                ta = rec(a, env)
                if not isinstance(ta.sort, TupleSort):
                    raise _Skip("snd of non-tuple")
                return TSnd(ta, ta.sort.snd)
            case PCall(base, flags, args):
                targs = tuple(rec(a, env) for a in args)
                fl = []
                for f in flags:
                    if f is True or f is False:
                        fl.append(f)
                    elif f[0] == "var":
                        fl.append(m.flags[f[1]])
                    else:
                        fl.append(not m.flags[f[1]])
                name = FnName(base, tuple(fl))
                dims = [_texpr_dim(g, t) for t in targs]
                try:
                    out = call_sort(name, [t.sort for t in targs], size_dims=dims)
                except SortMismatch as exc:
                    raise _Skip(str(exc)) from exc
                return TCall(name, targs, out)
        raise EGraphError(f"bad RHS pattern {p!r}")

    return rec(p, env)


def _texpr_dim(g: EGraph, t: TExpr) -> Dim:
    from .ir import size_dim

    if isinstance(t, TClassRef):
        return g.class_of(t.cid).dim
    return size_dim(t)


def apply_match(rule: RewriteRule, m: Match, g: EGraph) -> bool:
    """Instantiate the RHS and union it with the match root. Returns True if
    the union changed the graph."""
    root = g.find(m.root)
    if root not in g.classes:
        return False
    if rule.applier == "beta":
        body = m.bindings["e"].witness
        arg = m.bindings["y"].witness
        if body is None or arg is None:
            return False
        out = tsubstitute(body, arg, 0)
        new = _represent_template(g, out)
        _, changed = g.union(new, root)
        return changed
    if rule.applier == "fold_step":
        return _apply_fold_step(rule, m, g)
    assert rule.rhs is not None
    try:
        template = _rhs_texpr(g, rule.rhs, m, [])
    except _Skip:
        return False
    if not sorts_agree(template.sort, g.classes[root].sort):
        return False
    new = _represent_template(g, template)
    _, changed = g.union(new, root)
    return changed


def _apply_fold_step(rule: RewriteRule, m: Match, g: EGraph) -> bool:
    """ifold (k+1) z f  ->  f k (ifold k z f), for literal sizes only."""
    root = g.find(m.root)
    b_n = m.bindings["N"]
    cls_n = g.class_of(b_n.cid)
    if not isinstance(cls_n.dim, int) or cls_n.dim < 1:
        return False
    k = cls_n.dim - 1
    z, f = m.bindings["z"], m.bindings["f"]
    fsort = g.class_of(f.cid).sort
    zsort = g.class_of(z.cid).sort
    if not isinstance(fsort, FnSort) or not isinstance(fsort.res, FnSort):
        return False
    kc = g.add(ENode("sizelit", k, ()), SIZE)
    sub = g.add(ENode("ifold", None, (kc, g.find(z.cid), g.find(f.cid))), zsort)
    app1 = g.add(ENode("app", None, (g.find(f.cid), kc)), fsort.res)
    app2 = g.add(ENode("app", None, (app1, sub)), fsort.res.res)
    _, changed = g.union(app2, root)
    return changed


# ---------------------------------------------------------------------------
# Saturation
# ---------------------------------------------------------------------------

# Rules that inflate expressions; throttled by the policy below.
INTRO_RULES = frozenset(
    {
        "R-IntroLambda",
        "R-IntroFstTuple",
        "R-IntroSndTuple",
        "R-IntroIndexBuild",
        "E-AddZero-rev",
        "E-MulOneL-rev",
        "E-MulOneR-rev",
    }
)


@dataclass
class StepPolicy:
    unbound_cap: Optional[int] = 2
    rule_caps: dict = field(
        default_factory=lambda: {
            "R-IntroLambda": 2,
            "R-IntroFstTuple": 1,
            "R-IntroSndTuple": 1,
            "R-IntroIndexBuild": 8,
        }
    )
    # Introduction rewrites fire only on classes whose smallest member has at
    # most this many nodes: inflating already-large terms only bloats the
    # graph, while latent-idiom derivations abstract small subterms.
    intro_size_cap: Optional[int] = 10
    include_ifold_rules: bool = False

    def cap_for(self, rule: RewriteRule) -> Optional[int]:
        return self.rule_caps.get(rule.name, self.unbound_cap)

    def intro_root_ok(self, rule: RewriteRule, g: EGraph, root: ClassId, best) -> bool:
        if rule.name not in INTRO_RULES:
            return True
        cls = g.class_of(root)
        if isinstance(cls.sort, FnSort):
            return False
        if self.intro_size_cap is None:
            return True
        got = best.get(g.find(root))
        return got is not None and got[0][1] <= self.intro_size_cap


@dataclass
class StepReport:
    step: int
    enodes: int
    eclasses: int
    applied: int
    step_seconds: float


def saturation_step(g: EGraph, rules: Sequence[RewriteRule], policy: Optional[StepPolicy] = None, step: int = 0) -> StepReport:
    """One batch: match every rule against the pre-step graph, resolve
    witnesses, apply everything, rebuild once."""
    policy = policy or StepPolicy()
    t0 = time.perf_counter()
    by_kind = g.nodes_by_kind()
    best = g.min_sizes(prefer_redex_free=True)
    pools: dict = {}
    wmemo: dict = {}

    batch: list[tuple[RewriteRule, Match]] = []
    for rule in rules:
        need_any = rule.needs_any_witness()
        for m in ematch(rule, g, by_kind):
            if not policy.intro_root_ok(rule, g, m.root, best):
                continue
            ok = True
            for name, b in m.bindings.items():
                if b.shift > 0:
                    w = g.extract_avoiding(b.cid, frozenset(range(b.shift)), best, _memo=wmemo)
                    if w is None:
                        ok = False
                        break
                    b.witness = tshift(w, -b.shift, 0)
                elif name in need_any:
                    try:
                        b.witness = g.extract_any_typed(b.cid, best)
                    except Unextractable:
                        ok = False
                        break
            if not ok:
                continue
            batch.extend((rule, c) for c in enumerate_unbound(rule, m, g, policy.cap_for(rule), pools, best))

    applied = 0
    for rule, m in batch:
        if apply_match(rule, m, g):
            applied += 1
    g.rebuild()
    return StepReport(step, g.n_nodes(), g.n_classes(), applied, time.perf_counter() - t0)


@dataclass
class StepRecord:
    step: int
    enodes: int
    eclasses: int
    applied: int
    step_seconds: float
    best_expr: Expr
    best_cost: Fraction
    library_calls: dict[str, int]


@dataclass
class SaturationTrace:
    kernel: str
    target: str
    records: list[StepRecord]
    stop_reason: str  # fixpoint | step_limit | time_limit | node_limit | conflict

    @property
    def final(self) -> StepRecord:
        return self.records[-1]


@dataclass
class RunLimits:
    max_steps: int = 8
    timeout_seconds: float = 300.0
    max_enodes: int = 200_000


def run(
    kernel: KernelDef,
    target: str,
    limits: Optional[RunLimits] = None,
    policy: Optional[StepPolicy] = None,
    size_env: Optional[dict[str, int]] = None,
) -> SaturationTrace:
    """Saturate a kernel under a target's rule set, extracting the cheapest
    solution after every step."""
    from .cost import CostModel, count_library_calls, extract
    from .rules import catalog

    limits = limits or RunLimits()
    policy = policy or StepPolicy()
    rules = catalog(target, include_ifold=policy.include_ifold_rules)
    model = CostModel(target, size_env if size_env is not None else kernel.cost_size_env())

    g = EGraph()
    root = g.represent(kernel.annotated())
    g.rebuild()

    def record(step: int, applied: int, secs: float) -> StepRecord:
        expr, cost = extract(g, root, model)
        calls = count_library_calls(expr, target)
        return StepRecord(step, g.n_nodes(), g.n_classes(), applied, secs, expr, cost, calls)

    records = [record(0, 0, 0.0)]
    stop = "step_limit"
    started = time.perf_counter()
    for step in range(1, limits.max_steps + 1):
        if time.perf_counter() - started > limits.timeout_seconds:
            stop = "time_limit"
            break
        if g.n_nodes() > limits.max_enodes:
            stop = "node_limit"
            break
        prev_nodes = g.n_nodes()
        try:
            rep = saturation_step(g, rules, policy, step)
        except (ConstConflict, SortConflict):
            stop = "conflict"
            break
        rec = record(step, rep.applied, rep.step_seconds)
        if rec.best_cost > records[-1].best_cost:
            raise EGraphError(
                f"best cost increased at step {step}: {records[-1].best_cost} -> {rec.best_cost}"
            )
        records.append(rec)
        if rep.applied == 0 and rep.enodes == prev_nodes:
            stop = "fixpoint"
            break
    return SaturationTrace(kernel.name, target, records, stop)
