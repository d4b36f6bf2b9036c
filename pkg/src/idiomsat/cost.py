"""Target cost models and greedy cheapest-member extraction.

Costs are exact rationals so extraction is deterministic and the recomputed
cost of an extracted expression matches the reported class cost exactly.
Library calls are discounted per target; calls outside the active target's
library are infeasible and can never be extracted.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .egraph import ClassId, EGraph, ENode, Unextractable
from .ir import (
    ArraySort,
    Dim,
    Expr,
    FnName,
    KernelDef,
    LIBRARY_NAMES,
    Sort,
    TExpr,
    annotate,
    erase,
    library_names,
)
from .ir import (
    TApp,
    TBuild,
    TCall,
    TFst,
    TIFold,
    TIndex,
    TLam,
    TNumLit,
    TSizeLit,
    TSizeSym,
    TSnd,
    TTup,
    TVar,
    size_dim,
)


class CostError(Exception):
    pass


class UnresolvedDimension(CostError):
    pass


F = Fraction
_DOT = F(4, 5)  # .8
_GEMV = F(7, 10)  # .7
_GEMM = F(3, 5)  # .6
_TRANS = F(9, 10)  # .9
_ELEM = F(2, 5)  # .4


@dataclass
class CostModel:
    target: str  # pure_c | blas | pytorch
    size_env: dict[str, int]
    call_overrides: dict[str, Fraction] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.target = self.target.replace("-", "_")
        self.library = library_names(self.target)

    def resolve(self, dim: Dim) -> Fraction:
        if isinstance(dim, int):
            return F(dim)
        if isinstance(dim, str):
            if dim not in self.size_env:
                raise UnresolvedDimension(f"size {dim} not in the cost environment")
            return F(self.size_env[dim])
        raise UnresolvedDimension("dimension is not statically known")

    def weight(self, sort: Sort) -> Fraction:
        """Total element count of a sort; scalars weigh nothing."""
        if isinstance(sort, ArraySort):
            return self.resolve(sort.dim) * self.weight_or_one(sort.elem)
        return F(0)

    def weight_or_one(self, sort: Sort) -> Fraction:
        w = self.weight(sort)
        return w if isinstance(sort, ArraySort) else F(1)

    def mat_dims(self, sort: Sort, what: str) -> tuple[Fraction, Fraction]:
        if not (isinstance(sort, ArraySort) and isinstance(sort.elem, ArraySort)):
            raise UnresolvedDimension(f"{what}: expected a matrix sort, got {sort!r}")
        return self.resolve(sort.dim), self.resolve(sort.elem.dim)

    def vec_dim(self, sort: Sort, what: str) -> Fraction:
        if not isinstance(sort, ArraySort):
            raise UnresolvedDimension(f"{what}: expected an array sort, got {sort!r}")
        return self.resolve(sort.dim)

    def call_discount(self, name: FnName, arg_sorts: Sequence[Sort], arg_dims: Sequence[Dim]) -> Fraction:
        """The size-dependent term of a library call's cost."""
        base = name.base
        if base in ("dot", "axpy"):
            return _DOT * self.vec_dim(arg_sorts[-2], base)
        if base == "sum":
            return _DOT * self.vec_dim(arg_sorts[0], base)
        if base in ("memset", "full"):
            return _DOT * self.resolve(arg_dims[1])
        if base in ("gemv", "mv"):
            n, m_ = self.mat_dims(arg_sorts[1] if base == "gemv" else arg_sorts[0], base)
            return _GEMV * n * m_
        if base == "gemm":
            n, m_ = self.mat_dims(arg_sorts[4], "gemm C")
            ar, ac = self.mat_dims(arg_sorts[1], "gemm A")
            k = ar if name.flags[0] else ac
            return _GEMM * n * m_ * k
        if base == "mm":
            ar, ac = self.mat_dims(arg_sorts[0], "mm A")
            _, bc = self.mat_dims(arg_sorts[1], "mm B")
            return _GEMM * ar * ac * bc
        if base == "transpose":
            n, m_ = self.mat_dims(arg_sorts[0], "transpose")
            return _TRANS * n * m_
        if base in ("add", "mul"):
            return _ELEM * self.weight(arg_sorts[0]) + _ELEM * self.weight(arg_sorts[1])
        raise CostError(f"{name} is not a library call")

    def call_own_cost(self, name: FnName, arg_sorts: Sequence[Sort], arg_dims: Sequence[Dim]) -> Optional[Fraction]:
        """Cost of a call node excluding argument costs; None when the call is
        not available under this target."""
        base = name.base
        if base in ("+", "*", ">"):
            return F(1)
        if base in self.call_overrides:
            return self.call_overrides[base]
        if base in LIBRARY_NAMES:
            if base not in self.library:
                return None
            extra = F(1) if base in ("memset", "full") else F(0)
            return self.call_discount(name, arg_sorts, arg_dims) + extra
        return F(1)  # unknown named function: same as a scalar op

    def counted_args(self, name: FnName, n_args: int) -> list[int]:
        """Indices of arguments whose cost contributes; fill calls do not pay
        for their compile-time size argument."""
        if name.base in ("memset", "full"):
            return [0]
        return list(range(n_args))


def node_cost(
    kind: str,
    payload,
    child_costs: Sequence[Fraction],
    child_sorts: Sequence[Sort],
    child_dims: Sequence[Dim],
    model: CostModel,
) -> Optional[Fraction]:
    """Cost of one node given its children; None when infeasible under the
    model's target."""
    if kind in ("var", "numlit", "sizelit", "sizesym"):
        return F(1)
    if kind == "lam":
        return child_costs[0] + 1
    if kind == "app":
        return child_costs[0] + child_costs[1] + 1
    if kind == "build":
        n = model.resolve(child_dims[0])
        return n * (child_costs[1] + 1) + 1
    if kind == "ifold":
        n = model.resolve(child_dims[0])
        return child_costs[1] + n * child_costs[2] + 1
    if kind == "idx":
        return child_costs[0] + child_costs[1] + 1
    if kind == "tup":
        return child_costs[0] + child_costs[1] + 1
    if kind in ("fst", "snd"):
        return child_costs[0] + 1
    if kind == "call":
        own = model.call_own_cost(payload, child_sorts, child_dims)
        if own is None:
            return None
        return own + sum((child_costs[i] for i in model.counted_args(payload, len(child_costs))), F(0))
    raise CostError(f"bad node kind {kind}")


def extract(g: EGraph, root: ClassId, model: CostModel) -> tuple[Expr, Fraction]:
    """Greedy fixpoint extraction of the cheapest representable expression."""
    best: dict[ClassId, tuple[Fraction, ENode]] = {}
    changed = True
    while changed:
        changed = False
        for cid in sorted(g.classes):
            cls = g.classes[cid]
            for node in cls.nodes:
                kids = [g.find(c) for c in node.children]
                vals = []
                ok = True
                for c in kids:
                    got = best.get(c)
                    if got is None:
                        ok = False
                        break
                    vals.append(got[0])
                if not ok:
                    continue
                try:
                    cost = node_cost(
                        node.kind,
                        node.payload,
                        vals,
                        [g.classes[c].sort for c in kids],
                        [g.classes[c].dim for c in kids],
                        model,
                    )
                except UnresolvedDimension:
                    continue
                if cost is None:
                    continue
                cur = best.get(cid)
                if cur is None or (cost, node.order_key()) < (cur[0], cur[1].order_key()):
                    best[cid] = (cost, node)
                    changed = True
    r = g.find(root)
    if r not in best:
        raise Unextractable(f"no finite-cost expression for class {r}")

    def walk(c: ClassId) -> TExpr:
        c = g.find(c)
        _, node = best[c]
        return g.node_to_texpr(node, g.classes[c].sort, walk)

    return erase(walk(r)), best[r][0]


def count_library_calls(e: Expr, target: str) -> dict[str, int]:
    """Multiset of library-call base names appearing in an expression."""
    from .ir import App, Build, Call, Fst, IFold, Index, Lam, Snd, Tup

    lib = library_names(target.replace("-", "_")) if target else LIBRARY_NAMES
    out: dict[str, int] = {}

    def go(e: Expr) -> None:
        match e:
            case Call(name, args):
                if name.base in lib:
                    out[name.base] = out.get(name.base, 0) + 1
                for a in args:
                    go(a)
            case Lam(b) | Fst(b) | Snd(b):
                go(b)
            case App(a, b) | Build(a, b) | Index(a, b) | Tup(a, b):
                go(a)
                go(b)
            case IFold(a, b, c):
                go(a)
                go(b)
                go(c)
            case _:
                pass

    go(e)
    return out


def format_calls(calls: dict[str, int]) -> str:
    if not calls:
        return "-"
    return ", ".join(f"{n} × {name}" for name, n in sorted(calls.items()))


def coverage_breakdown(e: Expr, model: CostModel, param_env: Sequence[Sort]) -> tuple[Fraction, dict[str, Fraction]]:
    """Static work split of an expression: (overhead, per-library-call work).

    Library work is the discounted size term of each call; everything else
    (loops, scalar ops, call bookkeeping) is overhead. References to bare
    inputs are free, so a single library call over inputs is pure library
    work.
    """
    t = annotate(e, param_env)
    base = F(0)
    lib: dict[str, Fraction] = {}

    def go(t: TExpr, mult: Fraction) -> None:
        # mult is how many times this node executes (loop trip counts).
        nonlocal base
        match t:
            case TVar(_, _):
                return
            case TCall(name, args, _):
                if name.base in model.library:
                    d = model.call_discount(name, [a.sort for a in args], [_tdim(a) for a in args])
                    lib[name.base] = lib.get(name.base, F(0)) + mult * d
                    if name.base in ("memset", "full"):
                        base += mult
                else:
                    base += mult
                counted = model.counted_args(name, len(args))
                for i in counted:
                    go(args[i], mult)
                return
            case TLam(b, _, _):
                base += mult
                go(b, mult)
                return
            case TBuild(n, f, _):
                trips = model.resolve(size_dim(n))
                base += mult * (trips + 1)
                go(f, mult * trips)
                return
            case TIFold(n, z, f, _):
                trips = model.resolve(size_dim(n))
                base += mult
                go(z, mult)
                go(f, mult * trips)
                return
            case TApp(a, b, _) | TIndex(a, b, _) | TTup(a, b, _):
                base += mult
                go(a, mult)
                go(b, mult)
                return
            case TFst(a, _) | TSnd(a, _):
                base += mult
                go(a, mult)
                return
            case _:
                base += mult
                return

    go(t, F(1))
    return base, lib


def _tdim(t: TExpr) -> Dim:
    return size_dim(t)


def static_coverage(e: Expr, model: CostModel, param_env: Sequence[Sort]) -> float:
    """Fraction of an expression's statically modeled work done by library
    calls: 0 with no calls, exactly 1 for a lone call over bare inputs."""
    base, lib = coverage_breakdown(e, model, param_env)
    total_lib = sum(lib.values(), F(0))
    if total_lib == 0:
        return 0.0
    return float(total_lib / (total_lib + base))


def solution_cost(e: Expr, model: CostModel, param_env: Sequence[Sort]) -> Fraction:
    """Recompute an extracted expression's cost bottom-up (exact)."""
    t = annotate(e, param_env)

    def go(t: TExpr) -> Fraction:
        match t:
            case TVar(_, _) | TNumLit(_, _) | TSizeLit(_, _) | TSizeSym(_, _):
                return F(1)
            case TLam(b, _, _):
                return go(b) + 1
            case TApp(a, b, _):
                return go(a) + go(b) + 1
            case TBuild(n, f, _):
                return model.resolve(size_dim(n)) * (go(f) + 1) + 1
            case TIFold(n, z, f, _):
                return go(z) + model.resolve(size_dim(n)) * go(f) + 1
            case TIndex(a, i, _):
                return go(a) + go(i) + 1
            case TTup(a, b, _):
                return go(a) + go(b) + 1
            case TFst(a, _) | TSnd(a, _):
                return go(a) + 1
            case TCall(name, args, _):
                own = model.call_own_cost(name, [a.sort for a in args], [size_dim(a) for a in args])
                if own is None:
                    raise CostError(f"{name} is not available under target {model.target}")
                counted = model.counted_args(name, len(args))
                return own + sum((go(args[i]) for i in counted), F(0))
        raise CostError(f"cannot cost {t!r}")

    return go(t)
