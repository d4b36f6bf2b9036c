"""Core term language: a minimalist functional array IR with De Bruijn indices.

Terms are immutable; structural equality doubles as alpha-equivalence because
variables are nameless. The same module houses the sort (shape) language and
the signature registry for named functions, since both are needed everywhere
else in the package.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union


class IRError(Exception):
    pass


class SortMismatch(IRError):
    pass


class DownShiftCapture(IRError):
    """A negative shift would renumber an index into the protected range."""


# ---------------------------------------------------------------------------
# Sorts
# ---------------------------------------------------------------------------

# Array dims are symbolic: a literal length, a size-parameter name, or None
# when the length is not statically resolvable (dynamic size expressions).
Dim = Union[int, str, None]


class Sort:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class FloatSort(Sort):
    def __repr__(self) -> str:
        return "float"


@dataclass(frozen=True, slots=True)
class SizeSort(Sort):
    def __repr__(self) -> str:
        return "size"


@dataclass(frozen=True, slots=True)
class UnknownSort(Sort):
    def __repr__(self) -> str:
        return "?"


@dataclass(frozen=True, slots=True)
class ArraySort(Sort):
    elem: Sort
    dim: Dim

    def __repr__(self) -> str:
        return f"(array {self.elem!r} {self.dim})"


@dataclass(frozen=True, slots=True)
class TupleSort(Sort):
    fst: Sort
    snd: Sort

    def __repr__(self) -> str:
        return f"(tuple {self.fst!r} {self.snd!r})"


@dataclass(frozen=True, slots=True)
class FnSort(Sort):
    arg: Sort
    res: Sort

    def __repr__(self) -> str:
        return f"(fn {self.arg!r} {self.res!r})"


FLOAT = FloatSort()
SIZE = SizeSort()
UNKNOWN = UnknownSort()


def sorts_agree(a: Sort, b: Sort) -> bool:
    """Unification up to UNKNOWN wildcards; array dims must match exactly."""
    if isinstance(a, UnknownSort) or isinstance(b, UnknownSort):
        return True
    if type(a) is not type(b):
        return False
    if isinstance(a, ArraySort):
        assert isinstance(b, ArraySort)
        return a.dim == b.dim and sorts_agree(a.elem, b.elem)
    if isinstance(a, TupleSort):
        assert isinstance(b, TupleSort)
        return sorts_agree(a.fst, b.fst) and sorts_agree(a.snd, b.snd)
    if isinstance(a, FnSort):
        assert isinstance(b, FnSort)
        return sorts_agree(a.arg, b.arg) and sorts_agree(a.res, b.res)
    return True


def join_sorts(a: Sort, b: Sort) -> Sort:
    """Prefer the more concrete of two agreeing sorts."""
    if isinstance(a, UnknownSort):
        return b
    if isinstance(b, UnknownSort):
        return a
    if not sorts_agree(a, b):
        raise SortMismatch(f"cannot join sorts {a!r} and {b!r}")
    return a


# ---------------------------------------------------------------------------
# Function names
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class FnName:
    """A named function, optionally carrying transpose-flag bits.

    gemv carries one flag (is A transposed), gemm two (A, B). Flag-free names
    like dot have an empty flags tuple.
    """

    base: str
    flags: tuple[bool, ...] = ()

    def __str__(self) -> str:
        if not self.flags:
            return self.base
        return self.base + "_" + "".join("T" if f else "F" for f in self.flags)

    def __repr__(self) -> str:
        return f"FnName({str(self)!r})"


def parse_fn_name(text: str) -> FnName:
    if "_" in text:
        base, _, suffix = text.rpartition("_")
        if base in FLAGGED_ARITY and suffix and all(c in "FT" for c in suffix):
            if len(suffix) != FLAGGED_ARITY[base]:
                raise IRError(f"{base} takes {FLAGGED_ARITY[base]} flag(s), got {text!r}")
            return FnName(base, tuple(c == "T" for c in suffix))
    return FnName(text)


FLAGGED_ARITY = {"gemv": 1, "gemm": 2}


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

class Expr:
    __slots__ = ()

    def __repr__(self) -> str:
        from .syntax import print_expr

        return print_expr(self)


@dataclass(frozen=True, slots=True, repr=False)
class Lam(Expr):
    body: Expr


@dataclass(frozen=True, slots=True, repr=False)
class App(Expr):
    fn: Expr
    arg: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Var(Expr):
    index: int


@dataclass(frozen=True, slots=True, repr=False)
class Build(Expr):
    size: Expr
    fn: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Index(Expr):
    arr: Expr
    idx: Expr


@dataclass(frozen=True, slots=True, repr=False)
class IFold(Expr):
    size: Expr
    init: Expr
    fn: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Tup(Expr):
    fst: Expr
    snd: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Fst(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Snd(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True, repr=False)
class Call(Expr):
    name: FnName
    args: tuple[Expr, ...]


@dataclass(frozen=True, slots=True, repr=False)
class SizeLit(Expr):
    value: int


@dataclass(frozen=True, slots=True, repr=False)
class SizeSym(Expr):
    name: str


@dataclass(frozen=True, slots=True, repr=False)
class NumLit(Expr):
    value: Fraction

    def __post_init__(self) -> None:
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


def num(v) -> NumLit:
    return NumLit(Fraction(v))


def call(name: str, *args: Expr) -> Call:
    return Call(parse_fn_name(name), tuple(args))


def add(a: Expr, b: Expr) -> Call:
    return Call(FnName("+"), (a, b))


def mul(a: Expr, b: Expr) -> Call:
    return Call(FnName("*"), (a, b))


# ---------------------------------------------------------------------------
# De Bruijn machinery
# ---------------------------------------------------------------------------

def shift(e: Expr, amount: int, cutoff: int = 0) -> Expr:
    """Renumber free indices >= cutoff by amount.

    Down-shifts refuse to move an index into [cutoff, cutoff-amount): such an
    index would collide with variables that stay put.
    """
    match e:
        case Var(i):
            if i < cutoff:
                return e
            j = i + amount
            if j < cutoff:
                raise DownShiftCapture(f"%{i} shifted by {amount} under cutoff {cutoff}")
            return Var(j)
        case Lam(body):
            return Lam(shift(body, amount, cutoff + 1))
        case App(f, a):
            return App(shift(f, amount, cutoff), shift(a, amount, cutoff))
        case Build(n, f):
            return Build(shift(n, amount, cutoff), shift(f, amount, cutoff))
        case Index(a, i):
            return Index(shift(a, amount, cutoff), shift(i, amount, cutoff))
        case IFold(n, z, f):
            return IFold(shift(n, amount, cutoff), shift(z, amount, cutoff), shift(f, amount, cutoff))
        case Tup(a, b):
            return Tup(shift(a, amount, cutoff), shift(b, amount, cutoff))
        case Fst(a):
            return Fst(shift(a, amount, cutoff))
        case Snd(a):
            return Snd(shift(a, amount, cutoff))
        case Call(name, args):
            return Call(name, tuple(shift(a, amount, cutoff) for a in args))
        case _:
            return e


def substitute(body: Expr, replacement: Expr, depth: int = 0) -> Expr:
    """Replace free index `depth` (0 at the top) with `replacement`.

    Remaining free indices above `depth` are decremented; the replacement is
    shifted as the recursion passes under binders, so capture cannot occur.
    """
    match body:
        case Var(i):
            if i == depth:
                return shift(replacement, depth, 0)
            if i > depth:
                return Var(i - 1)
            return body
        case Lam(b):
            return Lam(substitute(b, replacement, depth + 1))
        case App(f, a):
            return App(substitute(f, replacement, depth), substitute(a, replacement, depth))
        case Build(n, f):
            return Build(substitute(n, replacement, depth), substitute(f, replacement, depth))
        case Index(a, i):
            return Index(substitute(a, replacement, depth), substitute(i, replacement, depth))
        case IFold(n, z, f):
            return IFold(
                substitute(n, replacement, depth),
                substitute(z, replacement, depth),
                substitute(f, replacement, depth),
            )
        case Tup(a, b):
            return Tup(substitute(a, replacement, depth), substitute(b, replacement, depth))
        case Fst(a):
            return Fst(substitute(a, replacement, depth))
        case Snd(a):
            return Snd(substitute(a, replacement, depth))
        case Call(name, args):
            return Call(name, tuple(substitute(a, replacement, depth) for a in args))
        case _:
            return body


def free_indices(e: Expr, depth: int = 0) -> frozenset[int]:
    """Free De Bruijn indices of e, relative to `depth` enclosing binders."""
    match e:
        case Var(i):
            return frozenset([i - depth]) if i >= depth else frozenset()
        case Lam(body):
            return free_indices(body, depth + 1)
        case App(f, a):
            return free_indices(f, depth) | free_indices(a, depth)
        case Build(n, f):
            return free_indices(n, depth) | free_indices(f, depth)
        case Index(a, i):
            return free_indices(a, depth) | free_indices(i, depth)
        case IFold(n, z, f):
            return free_indices(n, depth) | free_indices(z, depth) | free_indices(f, depth)
        case Tup(a, b):
            return free_indices(a, depth) | free_indices(b, depth)
        case Fst(a) | Snd(a):
            return free_indices(a, depth)
        case Call(_, args):
            out: frozenset[int] = frozenset()
            for a in args:
                out |= free_indices(a, depth)
            return out
        case _:
            return frozenset()


# ---------------------------------------------------------------------------
# Function signatures
# ---------------------------------------------------------------------------

# Signature functions take (FnName, arg sorts) and return the result sort,
# raising SortMismatch when the arguments do not fit.
SigFn = Callable[[FnName, Sequence[Sort]], Sort]


def _want(cond: bool, msg: str) -> None:
    if not cond:
        raise SortMismatch(msg)


def _vec(s: Sort, what: str) -> ArraySort:
    _want(isinstance(s, ArraySort) and sorts_agree(s.elem, FLOAT), f"{what}: expected float vector, got {s!r}")
    assert isinstance(s, ArraySort)
    return s


def _mat(s: Sort, what: str) -> ArraySort:
    _want(
        isinstance(s, ArraySort) and isinstance(s.elem, ArraySort) and sorts_agree(s.elem.elem, FLOAT),
        f"{what}: expected float matrix, got {s!r}",
    )
    assert isinstance(s, ArraySort)
    return s


def _mat_dims(s: ArraySort) -> tuple[Dim, Dim]:
    assert isinstance(s.elem, ArraySort)
    return s.dim, s.elem.dim


def _dims_eq(a: Dim, b: Dim, what: str) -> None:
    _want(a == b and a is not None, f"{what}: dimension mismatch ({a} vs {b})")


def _sig_scalar_add(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 2, f"{name} expects 2 arguments")
    a, b = args
    if isinstance(a, SizeSort) and isinstance(b, SizeSort):
        return SIZE
    _want(sorts_agree(a, FLOAT) and sorts_agree(b, FLOAT), f"{name} on {a!r}, {b!r}")
    return FLOAT


def _sig_scalar(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 2, f"{name} expects 2 arguments")
    a, b = args
    _want(sorts_agree(a, FLOAT) and sorts_agree(b, FLOAT), f"{name} on {a!r}, {b!r}")
    return FLOAT


def _sig_dot(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 2, "dot expects 2 arguments")
    a = _vec(args[0], "dot lhs")
    b = _vec(args[1], "dot rhs")
    _dims_eq(a.dim, b.dim, "dot")
    return FLOAT


def _sig_axpy(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 3, "axpy expects 3 arguments")
    _want(sorts_agree(args[0], FLOAT), "axpy alpha must be a scalar")
    a = _vec(args[1], "axpy A")
    b = _vec(args[2], "axpy B")
    _dims_eq(a.dim, b.dim, "axpy")
    return a


def _sig_gemv(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 5, "gemv expects 5 arguments")
    _want(sorts_agree(args[0], FLOAT) and sorts_agree(args[3], FLOAT), "gemv scalars")
    m = _mat(args[1], "gemv A")
    rows, cols = _mat_dims(m)
    if name.flags[0]:
        in_dim, out_dim = rows, cols
    else:
        in_dim, out_dim = cols, rows
    b = _vec(args[2], "gemv B")
    c = _vec(args[4], "gemv C")
    _dims_eq(b.dim, in_dim, "gemv B")
    _dims_eq(c.dim, out_dim, "gemv C")
    return c


def _sig_gemm(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 5, "gemm expects 5 arguments")
    _want(sorts_agree(args[0], FLOAT) and sorts_agree(args[3], FLOAT), "gemm scalars")
    a = _mat(args[1], "gemm A")
    b = _mat(args[2], "gemm B")
    c = _mat(args[4], "gemm C")
    ar, ac = _mat_dims(a)
    br, bc = _mat_dims(b)
    n, k = (ac, ar) if name.flags[0] else (ar, ac)
    kb, m = (bc, br) if name.flags[1] else (br, bc)
    _dims_eq(k, kb, "gemm contraction")
    cr, cc = _mat_dims(c)
    _dims_eq(cr, n, "gemm C rows")
    _dims_eq(cc, m, "gemm C cols")
    return c


def _sig_transpose(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 1, "transpose expects 1 argument")
    a = _mat(args[0], "transpose")
    rows, cols = _mat_dims(a)
    return ArraySort(ArraySort(FLOAT, rows), cols)


def _sig_fill(name: FnName, args: Sequence[Sort]) -> Sort:
    # memset/full: scalar plus an explicit size argument carrying the length.
    _want(len(args) == 2, f"{name} expects value and size arguments")
    _want(sorts_agree(args[0], FLOAT), f"{name} value must be a scalar")
    _want(isinstance(args[1], SizeSort), f"{name} length must be a size")
    return ArraySort(FLOAT, None)


def _sig_mv(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 2, "mv expects 2 arguments")
    a = _mat(args[0], "mv A")
    rows, cols = _mat_dims(a)
    b = _vec(args[1], "mv B")
    _dims_eq(b.dim, cols, "mv B")
    return ArraySort(FLOAT, rows)


def _sig_mm(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 2, "mm expects 2 arguments")
    a = _mat(args[0], "mm A")
    b = _mat(args[1], "mm B")
    ar, ac = _mat_dims(a)
    br, bc = _mat_dims(b)
    _dims_eq(ac, br, "mm contraction")
    return ArraySort(ArraySort(FLOAT, bc), ar)


def _sig_elemwise(name: FnName, args: Sequence[Sort]) -> Sort:
    # torch add/mul are polymorphic: scalars or same-shape tensors, and mul
    # broadcasts a scalar against any tensor.
    _want(len(args) == 2, f"{name} expects 2 arguments")
    a, b = args
    if sorts_agree(a, FLOAT) and sorts_agree(b, FLOAT):
        return join_sorts(join_sorts(a, b), FLOAT)
    if str(name) == "mul" and sorts_agree(a, FLOAT) and isinstance(b, ArraySort):
        return b
    _want(isinstance(a, ArraySort) or isinstance(b, ArraySort), f"{name} on {a!r}, {b!r}")
    _want(sorts_agree(a, b), f"{name} shape mismatch: {a!r} vs {b!r}")
    return join_sorts(a, b)


def _sig_sum(name: FnName, args: Sequence[Sort]) -> Sort:
    _want(len(args) == 1, "sum expects 1 argument")
    _vec(args[0], "sum")
    return FLOAT


SIGNATURES: dict[str, SigFn] = {
    "+": _sig_scalar_add,
    "*": _sig_scalar,
    ">": _sig_scalar,
    "dot": _sig_dot,
    "axpy": _sig_axpy,
    "gemv": _sig_gemv,
    "gemm": _sig_gemm,
    "transpose": _sig_transpose,
    "memset": _sig_fill,
    "full": _sig_fill,
    "mv": _sig_mv,
    "mm": _sig_mm,
    "add": _sig_elemwise,
    "mul": _sig_elemwise,
    "sum": _sig_sum,
}

# Library namespaces: call names that count as library work for each target.
BLAS_NAMES = frozenset({"dot", "axpy", "gemv", "gemm", "transpose", "memset"})
PYTORCH_NAMES = frozenset({"dot", "sum", "mv", "mm", "transpose", "add", "mul", "full"})
LIBRARY_NAMES = BLAS_NAMES | PYTORCH_NAMES


def library_names(target: str) -> frozenset[str]:
    if target == "blas":
        return BLAS_NAMES
    if target == "pytorch":
        return PYTORCH_NAMES
    if target in ("pure_c", "pure-c"):
        return frozenset()
    raise IRError(f"unknown target {target!r}")


def register_function(name: str, sig: SigFn) -> None:
    """Extension point for tests and experiments; not used by the catalog."""
    SIGNATURES[name] = sig


def call_sort(name: FnName, arg_sorts: Sequence[Sort], *, size_dims: Sequence[Dim] = ()) -> Sort:
    """Result sort of a named call. size_dims supplies the symbolic dims of
    Size-sorted arguments (used by memset/full to name their output length)."""
    sig = SIGNATURES.get(name.base)
    if sig is None:
        raise SortMismatch(f"unknown function {name}")
    out = sig(name, arg_sorts)
    if name.base in ("memset", "full"):
        dim = size_dims[1] if len(size_dims) > 1 else None
        out = ArraySort(FLOAT, dim)
    return out


# ---------------------------------------------------------------------------
# Sort-annotated terms
# ---------------------------------------------------------------------------

class TExpr:
    """Internal sort-annotated twin of Expr, produced by `annotate` and by
    e-graph extraction; rewriting shifts/substitutes these so node sorts never
    have to be re-inferred from context."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class TLam(TExpr):
    body: TExpr
    param: Sort
    sort: Sort


@dataclass(frozen=True, slots=True)
class TApp(TExpr):
    fn: TExpr
    arg: TExpr
    sort: Sort


@dataclass(frozen=True, slots=True)
class TVar(TExpr):
    index: int
    sort: Sort


@dataclass(frozen=True, slots=True)
class TBuild(TExpr):
    size: TExpr
    fn: TExpr
    sort: Sort


@dataclass(frozen=True, slots=True)
class TIndex(TExpr):
    arr: TExpr
    idx: TExpr
    sort: Sort


@dataclass(frozen=True, slots=True)
class TIFold(TExpr):
    size: TExpr
    init: TExpr
    fn: TExpr
    sort: Sort


@dataclass(frozen=True, slots=True)
class TTup(TExpr):
    fst: TExpr
    snd: TExpr
    sort: Sort


@dataclass(frozen=True, slots=True)
class TFst(TExpr):
    arg: TExpr
    sort: Sort


@dataclass(frozen=True, slots=True)
class TSnd(TExpr):
    arg: TExpr
    sort: Sort


@dataclass(frozen=True, slots=True)
class TCall(TExpr):
    name: FnName
    args: tuple[TExpr, ...]
    sort: Sort


@dataclass(frozen=True, slots=True)
class TSizeLit(TExpr):
    value: int
    sort: Sort = SIZE


@dataclass(frozen=True, slots=True)
class TSizeSym(TExpr):
    name: str
    sort: Sort = SIZE


@dataclass(frozen=True, slots=True)
class TNumLit(TExpr):
    value: Fraction
    sort: Sort = FLOAT


def size_dim(t: TExpr) -> Dim:
    if isinstance(t, TSizeLit):
        return t.value
    if isinstance(t, TSizeSym):
        return t.name
    return None


def annotate(e: Expr, env: Sequence[Sort]) -> TExpr:
    """Infer the sort of every subterm. env[i] is the sort of free Var(i).

    Lambda parameter sorts come from context: build binds a size, ifold binds
    a size then the accumulator, application binds the argument's sort. A
    lambda in any other position cannot be annotated and is rejected.
    """

    def lam_with(param: Sort, lam: Expr, env_: list[Sort]) -> TLam:
        assert isinstance(lam, Lam)
        body = rec(lam.body, [param] + env_)
        return TLam(body, param, FnSort(param, body.sort))

    def as_fn(t: TExpr, what: str) -> FnSort:
        if not isinstance(t.sort, FnSort):
            raise SortMismatch(f"{what}: expected a function, got {t.sort!r}")
        return t.sort

    def rec(e: Expr, env_: list[Sort]) -> TExpr:
        match e:
            case Var(i):
                if i >= len(env_):
                    raise SortMismatch(f"unbound index %{i}")
                return TVar(i, env_[i])
            case NumLit(v):
                return TNumLit(v)
            case SizeLit(n):
                return TSizeLit(n)
            case SizeSym(name):
                return TSizeSym(name)
            case Lam(_):
                raise SortMismatch("cannot infer the parameter sort of a bare lambda")
            case App(f, a):
                ta = rec(a, env_)
                tf = lam_with(ta.sort, f, env_) if isinstance(f, Lam) else rec(f, env_)
                fs = as_fn(tf, "application")
                if not sorts_agree(fs.arg, ta.sort):
                    raise SortMismatch(f"application: {fs.arg!r} function applied to {ta.sort!r}")
                return TApp(tf, ta, fs.res)
            case Build(n, f):
                tn = rec(n, env_)
                if not isinstance(tn.sort, SizeSort):
                    raise SortMismatch(f"build length must be a size, got {tn.sort!r}")
                tf = lam_with(SIZE, f, env_) if isinstance(f, Lam) else rec(f, env_)
                fs = as_fn(tf, "build")
                if not sorts_agree(fs.arg, SIZE):
                    raise SortMismatch("build function must take a size")
                return TBuild(tn, tf, ArraySort(fs.res, size_dim(tn)))
            case Index(a, i):
                ta = rec(a, env_)
                ti = rec(i, env_)
                if not isinstance(ta.sort, ArraySort):
                    raise SortMismatch(f"indexing a non-array of sort {ta.sort!r}")
                if not isinstance(ti.sort, (SizeSort, UnknownSort)):
                    raise SortMismatch(f"array index must be a size, got {ti.sort!r}")
                return TIndex(ta, ti, ta.sort.elem)
            case IFold(n, z, f):
                tn = rec(n, env_)
                if not isinstance(tn.sort, SizeSort):
                    raise SortMismatch(f"ifold length must be a size, got {tn.sort!r}")
                tz = rec(z, env_)
                if isinstance(f, Lam) and isinstance(f.body, Lam):
                    inner = lam_with(tz.sort, f.body, [SIZE] + env_)
                    tf: TExpr = TLam(inner, SIZE, FnSort(SIZE, inner.sort))
                elif isinstance(f, Lam):
                    raise SortMismatch("ifold function must bind an index and an accumulator")
                else:
                    tf = rec(f, env_)
                fs = as_fn(tf, "ifold")
                inner_fs = fs.res
                if not isinstance(inner_fs, FnSort):
                    raise SortMismatch("ifold function must be curried over two arguments")
                if not (sorts_agree(fs.arg, SIZE) and sorts_agree(inner_fs.arg, tz.sort)):
                    raise SortMismatch("ifold function disagrees with the accumulator sort")
                if not sorts_agree(inner_fs.res, tz.sort):
                    raise SortMismatch("ifold step must return the accumulator sort")
                return TIFold(tn, tz, tf, tz.sort)
            case Tup(a, b):
                ta, tb = rec(a, env_), rec(b, env_)
                return TTup(ta, tb, TupleSort(ta.sort, tb.sort))
            case Fst(a):
                ta = rec(a, env_)
                if not isinstance(ta.sort, TupleSort):
                    raise SortMismatch(f"fst of non-tuple {ta.sort!r}")
                return TFst(ta, ta.sort.fst)
            case Snd(a):
                ta = rec(a, env_)
                if not isinstance(ta.sort, TupleSort):
                    raise SortMismatch(f"snd of non-tuple {ta.sort!r}")
                return TSnd(ta, ta.sort.snd)
            case Call(name, args):
                targs = tuple(rec(a, env_) for a in args)
                out = call_sort(name, [t.sort for t in targs], size_dims=[size_dim(t) for t in targs])
                return TCall(name, targs, out)
            case _:
                raise SortMismatch(f"cannot annotate {e!r}")

    return rec(e, list(env))


def infer_sort(e: Expr, env: Sequence[Sort]) -> Sort:
    return annotate(e, env).sort


def erase(t: TExpr) -> Expr:
    match t:
        case TVar(i, _):
            return Var(i)
        case TLam(body, _, _):
            return Lam(erase(body))
        case TApp(f, a, _):
            return App(erase(f), erase(a))
        case TBuild(n, f, _):
            return Build(erase(n), erase(f))
        case TIndex(a, i, _):
            return Index(erase(a), erase(i))
        case TIFold(n, z, f, _):
            return IFold(erase(n), erase(z), erase(f))
        case TTup(a, b, _):
            return Tup(erase(a), erase(b))
        case TFst(a, _):
            return Fst(erase(a))
        case TSnd(a, _):
            return Snd(erase(a))
        case TCall(name, args, _):
            return Call(name, tuple(erase(a) for a in args))
        case TSizeLit(n, _):
            return SizeLit(n)
        case TSizeSym(name, _):
            return SizeSym(name)
        case TNumLit(v, _):
            return NumLit(v)
    raise IRError(f"cannot erase {t!r}")


def tshift(t: TExpr, amount: int, cutoff: int = 0) -> TExpr:
    match t:
        case TVar(i, s):
            if i < cutoff:
                return t
            j = i + amount
            if j < cutoff:
                raise DownShiftCapture(f"%{i} shifted by {amount} under cutoff {cutoff}")
            return TVar(j, s)
        case TLam(body, p, s):
            return TLam(tshift(body, amount, cutoff + 1), p, s)
        case TApp(f, a, s):
            return TApp(tshift(f, amount, cutoff), tshift(a, amount, cutoff), s)
        case TBuild(n, f, s):
            return TBuild(tshift(n, amount, cutoff), tshift(f, amount, cutoff), s)
        case TIndex(a, i, s):
            return TIndex(tshift(a, amount, cutoff), tshift(i, amount, cutoff), s)
        case TIFold(n, z, f, s):
            return TIFold(tshift(n, amount, cutoff), tshift(z, amount, cutoff), tshift(f, amount, cutoff), s)
        case TTup(a, b, s):
            return TTup(tshift(a, amount, cutoff), tshift(b, amount, cutoff), s)
        case TFst(a, s):
            return TFst(tshift(a, amount, cutoff), s)
        case TSnd(a, s):
            return TSnd(tshift(a, amount, cutoff), s)
        case TCall(name, args, s):
            return TCall(name, tuple(tshift(a, amount, cutoff) for a in args), s)
        case _:
            return t


def tsubstitute(body: TExpr, replacement: TExpr, depth: int = 0) -> TExpr:
    match body:
        case TVar(i, _):
            if i == depth:
                return tshift(replacement, depth, 0)
            if i > depth:
                return TVar(i - 1, body.sort)
            return body
        case TLam(b, p, s):
            return TLam(tsubstitute(b, replacement, depth + 1), p, s)
        case TApp(f, a, s):
            return TApp(tsubstitute(f, replacement, depth), tsubstitute(a, replacement, depth), s)
        case TBuild(n, f, s):
            return TBuild(tsubstitute(n, replacement, depth), tsubstitute(f, replacement, depth), s)
        case TIndex(a, i, s):
            return TIndex(tsubstitute(a, replacement, depth), tsubstitute(i, replacement, depth), s)
        case TIFold(n, z, f, s):
            return TIFold(
                tsubstitute(n, replacement, depth),
                tsubstitute(z, replacement, depth),
                tsubstitute(f, replacement, depth),
                s,
            )
        case TTup(a, b, s):
            return TTup(tsubstitute(a, replacement, depth), tsubstitute(b, replacement, depth), s)
        case TFst(a, s):
            return TFst(tsubstitute(a, replacement, depth), s)
        case TSnd(a, s):
            return TSnd(tsubstitute(a, replacement, depth), s)
        case TCall(name, args, s):
            return TCall(name, tuple(tsubstitute(a, replacement, depth) for a in args), s)
        case _:
            return body


# ---------------------------------------------------------------------------
# Kernel definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelDef:
    """A benchmark kernel: named inputs, symbolic sizes, and a body that is
    closed under the implicit lambda prefix binding the inputs.

    Input k of n binds De Bruijn index n-1-k at the top of the body (the first
    parameter is the outermost binder). `sizes` are small defaults safe for
    interpretation; `cost_sizes` are the large dimensions the cost model uses.
    """

    name: str
    params: tuple[tuple[str, Sort], ...]
    sizes: tuple[tuple[str, int], ...]
    body: Expr
    cost_sizes: tuple[tuple[str, int], ...] = ()
    reference: str = ""

    def __post_init__(self) -> None:
        if not self.reference:
            object.__setattr__(self, "reference", self.name)
        if not self.cost_sizes:
            object.__setattr__(self, "cost_sizes", self.sizes)

    def param_env(self) -> list[Sort]:
        # env[i] is the sort of Var(i) at the top of the body.
        return [s for _, s in reversed(self.params)]

    def size_env(self) -> dict[str, int]:
        return dict(self.sizes)

    def cost_size_env(self) -> dict[str, int]:
        return dict(self.cost_sizes)

    def annotated(self) -> TExpr:
        return annotate(self.body, self.param_env())
