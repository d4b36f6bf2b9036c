"""Reference interpreter and the randomized equivalence oracle.

Runtime values are plain Python objects: float for scalars, int for sizes,
list for arrays, 2-tuples for pairs, and Closure for functions. Library calls
are interpreted directly with a fixed ascending iteration order so results
are reproducible.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

from .ir import (
    App,
    ArraySort,
    Build,
    Call,
    Expr,
    FLOAT,
    FloatSort,
    FnName,
    Fst,
    IFold,
    Index,
    KernelDef,
    Lam,
    NumLit,
    SizeLit,
    SizeSort,
    SizeSym,
    Snd,
    Sort,
    Tup,
    TupleSort,
    Var,
)


class EvalError(Exception):
    pass


class IndexOutOfBounds(EvalError):
    pass


class UnknownFunction(EvalError):
    pass


class ArityError(EvalError):
    pass


class ShapeMismatch(EvalError):
    pass


class UnboundSize(EvalError):
    pass


Value = Any  # float | int | list | tuple[Value, Value] | Closure


@dataclass
class Closure:
    body: Expr
    env: list

    def __call__(self, arg: Value) -> Value:
        return eval_expr(self.body, [arg] + self.env, self.sizes)

    sizes: dict = None  # type: ignore[assignment]


def eval_expr(e: Expr, env: Sequence[Value], sizes: dict[str, int]) -> Value:
    match e:
        case Var(i):
            if i >= len(env):
                raise EvalError(f"unbound index %{i}")
            return env[i]
        case NumLit(v):
            return float(v)
        case SizeLit(n):
            return n
        case SizeSym(name):
            if name not in sizes:
                raise UnboundSize(f"size {name} not bound")
            return sizes[name]
        case Lam(body):
            c = Closure(body, list(env))
            c.sizes = sizes
            return c
        case App(f, a):
            fv = eval_expr(f, env, sizes)
            av = eval_expr(a, env, sizes)
            if not isinstance(fv, Closure):
                raise EvalError("applying a non-function")
            return fv(av)
        case Build(n, f):
            nv = _as_size(eval_expr(n, env, sizes))
            fv = eval_expr(f, env, sizes)
            return [_apply(fv, i) for i in range(nv)]
        case Index(Build(n, f), i):
            # Evaluate one element instead of materializing the whole array;
            # bounds behave exactly as if the array had been built.
            nv = _as_size(eval_expr(n, env, sizes))
            iv = _as_size(eval_expr(i, env, sizes))
            if not 0 <= iv < nv:
                raise IndexOutOfBounds(f"index {iv} out of range [0, {nv})")
            return _apply(eval_expr(f, env, sizes), iv)
        case Index(a, i):
            av = eval_expr(a, env, sizes)
            iv = eval_expr(i, env, sizes)
            if not isinstance(av, list):
                raise EvalError("indexing a non-array")
            iv = _as_size(iv)
            if not 0 <= iv < len(av):
                raise IndexOutOfBounds(f"index {iv} out of range [0, {len(av)})")
            return av[iv]
        case IFold(n, z, f):
            nv = _as_size(eval_expr(n, env, sizes))
            acc = eval_expr(z, env, sizes)
            fv = eval_expr(f, env, sizes)
            for i in range(nv):
                acc = _apply(_apply(fv, i), acc)
            return acc
        case Tup(a, b):
            return (eval_expr(a, env, sizes), eval_expr(b, env, sizes))
        case Fst(a):
            v = eval_expr(a, env, sizes)
            if not (isinstance(v, tuple) and len(v) == 2):
                raise EvalError("fst of non-tuple")
            return v[0]
        case Snd(a):
            v = eval_expr(a, env, sizes)
            if not (isinstance(v, tuple) and len(v) == 2):
                raise EvalError("snd of non-tuple")
            return v[1]
        case Call(name, args):
            vals = [eval_expr(a, env, sizes) for a in args]
            return eval_library(name, vals)
    raise EvalError(f"cannot evaluate {e!r}")


def _apply(f: Value, arg: Value) -> Value:
    if not isinstance(f, Closure):
        raise EvalError("applying a non-function")
    return f(arg)


def _as_size(v: Value) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ShapeMismatch(f"expected a size, got {type(v).__name__}")
    return v


def _as_scalar(v: Value) -> float:
    if isinstance(v, (int, float)):
        return float(v)
    raise ShapeMismatch(f"expected a scalar, got {type(v).__name__}")


def _as_vec(v: Value) -> list:
    if isinstance(v, list) and all(isinstance(x, (int, float)) for x in v):
        return v
    raise ShapeMismatch("expected a vector of scalars")


def _as_mat(v: Value) -> list:
    if isinstance(v, list) and all(isinstance(r, list) for r in v):
        return v
    raise ShapeMismatch("expected a matrix")


def _same_len(a: list, b: list, what: str) -> None:
    if len(a) != len(b):
        raise ShapeMismatch(f"{what}: lengths {len(a)} and {len(b)} differ")


# --- library semantics -----------------------------------------------------

def _lib_dot(a, b):
    a, b = _as_vec(a), _as_vec(b)
    _same_len(a, b, "dot")
    acc = 0.0
    for i in range(len(a)):
        acc += a[i] * b[i]
    return acc


def _lib_axpy(alpha, a, b):
    alpha = _as_scalar(alpha)
    a, b = _as_vec(a), _as_vec(b)
    _same_len(a, b, "axpy")
    return [alpha * a[i] + b[i] for i in range(len(a))]


def _lib_gemv(trans, alpha, a, b, beta, c):
    alpha, beta = _as_scalar(alpha), _as_scalar(beta)
    a, b, c = _as_mat(a), _as_vec(b), _as_vec(c)
    if trans:
        if a and len(a) != len(b):
            raise ShapeMismatch("gemv^T: rows(A) != len(B)")
        cols = len(a[0]) if a else 0
        if cols != len(c):
            raise ShapeMismatch("gemv^T: cols(A) != len(C)")
        out = []
        for j in range(cols):
            s = 0.0
            for i in range(len(a)):
                s += a[i][j] * b[i]
            out.append(alpha * s + beta * c[j])
        return out
    if a and len(a[0]) != len(b):
        raise ShapeMismatch("gemv: cols(A) != len(B)")
    if len(a) != len(c):
        raise ShapeMismatch("gemv: rows(A) != len(C)")
    return [alpha * _lib_dot(a[i], b) + beta * c[i] for i in range(len(a))]


def _op(a, trans):
    return _lib_transpose(a) if trans else a


def _lib_gemm(ta, tb, alpha, a, b, beta, c):
    alpha, beta = _as_scalar(alpha), _as_scalar(beta)
    a, b, c = _op(_as_mat(a), ta), _op(_as_mat(b), tb), _as_mat(c)
    n = len(a)
    k = len(a[0]) if a else 0
    if len(b) != k:
        raise ShapeMismatch("gemm: inner dimensions differ")
    m = len(b[0]) if b else 0
    if len(c) != n or (c and len(c[0]) != m):
        raise ShapeMismatch("gemm: C has wrong shape")
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            s = 0.0
            for kk in range(k):
                s += a[i][kk] * b[kk][j]
            row.append(alpha * s + beta * c[i][j])
        out.append(row)
    return out


def _lib_transpose(a):
    a = _as_mat(a)
    rows = len(a)
    cols = len(a[0]) if a else 0
    return [[a[i][j] for i in range(rows)] for j in range(cols)]


def _lib_fill(c, n):
    return [_as_scalar(c)] * _as_size(n)


def _lib_mv(a, b):
    a, b = _as_mat(a), _as_vec(b)
    if a and len(a[0]) != len(b):
        raise ShapeMismatch("mv: cols(A) != len(B)")
    return [_lib_dot(row, b) for row in a]


def _lib_mm(a, b):
    return _lib_gemm(False, False, 1.0, a, b, 0.0, [[0.0] * (len(b[0]) if b else 0) for _ in a])


def _lib_add(a, b):
    if isinstance(a, list) and isinstance(b, list):
        _same_len(a, b, "add")
        return [_lib_add(a[i], b[i]) for i in range(len(a))]
    return _as_scalar(a) + _as_scalar(b)


def _lib_mul(a, b):
    if isinstance(a, (int, float)) and isinstance(b, list):
        return [_lib_mul(a, x) for x in b]
    if isinstance(a, list) and isinstance(b, list):
        _same_len(a, b, "mul")
        return [_lib_mul(a[i], b[i]) for i in range(len(a))]
    return _as_scalar(a) * _as_scalar(b)


def _lib_sum(a):
    a = _as_vec(a)
    acc = 0.0
    for x in a:
        acc += x
    return acc


# Extension point for tests: maps base name -> python callable over values.
EXTRA_FUNCTIONS: dict[str, Callable[..., Value]] = {}


def register_impl(name: str, fn: Callable[..., Value]) -> None:
    EXTRA_FUNCTIONS[name] = fn


def eval_library(name: FnName, args: list) -> Value:
    base = name.base
    try:
        if base == "+":
            _need(args, 2, name)
            if isinstance(args[0], int) and isinstance(args[1], int):
                return args[0] + args[1]
            return _as_scalar(args[0]) + _as_scalar(args[1])
        if base == "*":
            _need(args, 2, name)
            return _as_scalar(args[0]) * _as_scalar(args[1])
        if base == ">":
            _need(args, 2, name)
            return 1.0 if _as_scalar(args[0]) > _as_scalar(args[1]) else 0.0
        if base == "dot":
            _need(args, 2, name)
            return _lib_dot(*args)
        if base == "axpy":
            _need(args, 3, name)
            return _lib_axpy(*args)
        if base == "gemv":
            _need(args, 5, name)
            return _lib_gemv(name.flags[0], *args)
        if base == "gemm":
            _need(args, 5, name)
            return _lib_gemm(name.flags[0], name.flags[1], *args)
        if base == "transpose":
            _need(args, 1, name)
            return _lib_transpose(*args)
        if base in ("memset", "full"):
            _need(args, 2, name)
            return _lib_fill(*args)
        if base == "mv":
            _need(args, 2, name)
            return _lib_mv(*args)
        if base == "mm":
            _need(args, 2, name)
            return _lib_mm(*args)
        if base == "add":
            _need(args, 2, name)
            return _lib_add(*args)
        if base == "mul":
            _need(args, 2, name)
            return _lib_mul(*args)
        if base == "sum":
            _need(args, 1, name)
            return _lib_sum(*args)
    except TypeError as exc:
        raise ArityError(str(exc)) from exc
    if base in EXTRA_FUNCTIONS:
        return EXTRA_FUNCTIONS[base](*args)
    raise UnknownFunction(f"no semantics for {name}")


def _need(args: list, n: int, name: FnName) -> None:
    if len(args) != n:
        raise ArityError(f"{name} expects {n} arguments, got {len(args)}")


# --- randomized equivalence oracle ------------------------------------------

REL_TOL = 1e-9
ABS_TOL = 1e-12


def random_value(sort: Sort, rng: random.Random, sizes: dict[str, int], allow_zero: bool = False) -> Value:
    match sort:
        case FloatSort():
            if allow_zero and rng.random() < 0.25:
                return rng.choice([0.0, 1.0, -1.0])
            v = rng.uniform(-1.0, 1.0)
            while v == 0.0:
                v = rng.uniform(-1.0, 1.0)
            return v
        case SizeSort():
            return rng.randint(1, 4)
        case ArraySort(elem, dim):
            if isinstance(dim, int):
                n = dim
            elif isinstance(dim, str):
                n = sizes[dim]
            else:
                n = rng.randint(1, 4)
            return [random_value(elem, rng, sizes, allow_zero) for _ in range(n)]
        case TupleSort(a, b):
            return (random_value(a, rng, sizes, allow_zero), random_value(b, rng, sizes, allow_zero))
    raise ShapeMismatch(f"cannot generate a value of sort {sort!r}")


def values_close(a: Value, b: Value) -> bool:
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_close(x, y) for x, y in zip(a, b))
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(values_close(x, y) for x, y in zip(a, b))
    if isinstance(a, bool) or isinstance(b, bool):
        return a == b
    if isinstance(a, int) and isinstance(b, int):
        return a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        fa, fb = float(a), float(b)
        if fa == fb:
            return True
        return abs(fa - fb) <= max(ABS_TOL, REL_TOL * max(abs(fa), abs(fb)))
    return False


@dataclass
class EquivResult:
    ok: bool
    trials: int
    counterexample: Optional[dict] = None

    def __bool__(self) -> bool:
        return self.ok


def scaled_sizes(sizes: dict[str, int], cap: int = 8) -> dict[str, int]:
    """Shrink size defaults proportionally so the largest is at most cap.

    Plain clamping would break relationships like M = N - 2 that stencil
    kernels rely on, so all sizes shrink by the same offset when any exceeds
    the cap."""
    if not sizes:
        return {}
    biggest = max(sizes.values())
    if biggest <= cap:
        return dict(sizes)
    drop = biggest - cap
    return {k: max(1, v - drop) for k, v in sizes.items()}


def equiv_check(
    e1: Expr,
    e2: Expr,
    params: Sequence[tuple[str, Sort]],
    sizes: dict[str, int],
    trials: int = 10,
    seed: int = 0,
    size_cap: int = 8,
) -> EquivResult:
    """Evaluate both terms on seeded random inputs; pass iff all values agree
    within REL_TOL/ABS_TOL. Trial 0 mixes in exact zeros and ones."""
    run_sizes = scaled_sizes(sizes, size_cap)
    for trial in range(trials):
        rng = random.Random(seed + trial)
        vals = [random_value(s, rng, run_sizes, allow_zero=(trial == 0)) for _, s in params]
        env = list(reversed(vals))
        try:
            v1 = eval_expr(e1, env, run_sizes)
            v2 = eval_expr(e2, env, run_sizes)
        except EvalError as exc:
            return EquivResult(False, trial + 1, {"inputs": vals, "error": str(exc)})
        if not values_close(v1, v2):
            return EquivResult(False, trial + 1, {"inputs": vals, "lhs": v1, "rhs": v2})
    return EquivResult(True, trials)


def eval_kernel(kd: KernelDef, inputs: Sequence[Value], sizes: dict[str, int] | None = None) -> Value:
    """Evaluate a kernel body on positional inputs (first param first)."""
    run_sizes = dict(kd.sizes) if sizes is None else dict(sizes)
    if len(inputs) != len(kd.params):
        raise ArityError(f"{kd.name} takes {len(kd.params)} inputs")
    env = list(reversed(list(inputs)))
    return eval_expr(kd.body, env, run_sizes)
