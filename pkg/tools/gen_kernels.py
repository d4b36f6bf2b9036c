#!/usr/bin/env python3
"""Regenerates the kernel corpus (src/idiomsat/kernels/*.lir).

Bodies are assembled from build/ifold combinators over named parameter
references, then printed with parameter names kept readable. Run from the
repository root after editing; the checked-in files are the source of truth
for tests.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from idiomsat.ir import (
    Build,
    Call,
    Expr,
    FnName,
    IFold,
    Index,
    Lam,
    NumLit,
    SizeLit,
    SizeSym,
    Tup,
    Var,
    add,
    mul,
    num,
)
from idiomsat.syntax import parse_kernel, print_expr


@dataclass(frozen=True)
class PRef(Expr):
    """Placeholder for a named kernel parameter; resolved to a De Bruijn
    index once the full body is assembled."""

    name: str


def resolve(e, params: list[str], depth: int = 0):
    match e:
        case PRef(name):
            return Var(depth + (len(params) - 1 - params.index(name)))
        case Lam(b):
            return Lam(resolve(b, params, depth + 1))
        case Build(n, f):
            return Build(resolve(n, params, depth), resolve(f, params, depth))
        case IFold(n, z, f):
            return IFold(resolve(n, params, depth), resolve(z, params, depth), resolve(f, params, depth))
        case Index(a, i):
            return Index(resolve(a, params, depth), resolve(i, params, depth))
        case Tup(a, b):
            return Tup(resolve(a, params, depth), resolve(b, params, depth))
        case Call(name, args):
            return Call(name, tuple(resolve(a, params, depth) for a in args))
        case _:
            return e


def named_print(e, params: list[str], depth: int = 0) -> str:
    """print_expr, but free indices that denote parameters print as names."""
    match e:
        case Var(i) if i >= depth:
            return params[len(params) - 1 - (i - depth)]
        case Lam(b):
            return f"(lam {named_print(b, params, depth + 1)})"
        case Build(n, f):
            return f"(build {named_print(n, params, depth)} {named_print(f, params, depth)})"
        case IFold(n, z, f):
            return (
                f"(ifold {named_print(n, params, depth)} {named_print(z, params, depth)} "
                f"{named_print(f, params, depth)})"
            )
        case Index(a, i):
            return f"(idx {named_print(a, params, depth)} {named_print(i, params, depth)})"
        case Tup(a, b):
            return f"(tuple {named_print(a, params, depth)} {named_print(b, params, depth)})"
        case Call(name, args):
            inner = " ".join(named_print(a, params, depth) for a in args)
            if name.base in ("+", "*", ">") and len(args) == 2:
                return f"({name.base} {inner})"
            return f"(call {name}{' ' + inner if inner else ''})"
        case _:
            return print_expr(e)


# --- combinators (all sizes are SizeSym names) ------------------------------

def sz(n: str) -> SizeSym:
    return SizeSym(n)


def idx(a, *i):
    out = a
    for j in i:
        out = Index(out, j)
    return out


def build(n, body) -> Build:
    return Build(n, Lam(body))


def ifold(n, z, body) -> IFold:
    return IFold(n, z, Lam(Lam(body)))


def up(e, by: int):
    """Shift the free De Bruijn indices of an embedded argument expression.
    PRef leaves are depth-agnostic and pass through untouched."""
    match e:
        case PRef(_):
            return e
        case Var(i):
            return Var(i + by)
        case Lam(b):
            return Lam(up_under(b, by, 1))
        case Build(n, f):
            return Build(up(n, by), up(f, by))
        case IFold(n, z, f):
            return IFold(up(n, by), up(z, by), up(f, by))
        case Index(a, i):
            return Index(up(a, by), up(i, by))
        case Tup(a, b):
            return Tup(up(a, by), up(b, by))
        case Call(name, args):
            return Call(name, tuple(up(a, by) for a in args))
        case _:
            return e


def up_under(e, by: int, cutoff: int):
    match e:
        case PRef(_):
            return e
        case Var(i):
            return Var(i + by) if i >= cutoff else e
        case Lam(b):
            return Lam(up_under(b, by, cutoff + 1))
        case Build(n, f):
            return Build(up_under(n, by, cutoff), up_under(f, by, cutoff))
        case IFold(n, z, f):
            return IFold(up_under(n, by, cutoff), up_under(z, by, cutoff), up_under(f, by, cutoff))
        case Index(a, i):
            return Index(up_under(a, by, cutoff), up_under(i, by, cutoff))
        case Tup(a, b):
            return Tup(up_under(a, by, cutoff), up_under(b, by, cutoff))
        case Call(name, args):
            return Call(name, tuple(up_under(a, by, cutoff) for a in args))
        case _:
            return e


def vadd(n, x, y):
    # element i: x[i] + y[i]
    return build(n, add(idx(up(x, 1), Var(0)), idx(up(y, 1), Var(0))))


def vscale(n, s, x):
    return build(n, mul(up(s, 1), idx(up(x, 1), Var(0))))


def dot_expand(k, u, v):
    # ifold k 0 (lam lam u^^[%1]*v^^[%1] + %0)
    return ifold(k, num(0), add(mul(idx(up(u, 2), Var(1)), idx(up(v, 2), Var(1))), Var(0)))


def matvec(rows, inner, a, x):
    # row i: dot(a[i], x)
    return build(rows, dot_expand(inner, idx(up(a, 1), Var(0)), up(x, 1)))


def transpose_expand(rows, cols, a):
    # result[j][i] = a[i][j]; rows/cols are a's dimensions.
    return build(cols, build(rows, idx(up(a, 2), Var(0), Var(1))))


def mscale(rows, cols, s, x):
    return build(rows, build(cols, mul(up(s, 2), idx(up(x, 2), Var(1), Var(0)))))


def madd(rows, cols, x, y):
    return build(rows, build(cols, add(idx(up(x, 2), Var(1), Var(0)), idx(up(y, 2), Var(1), Var(0)))))


def p(name: str) -> PRef:
    return PRef(name)


KERNELS: dict[str, tuple[list[tuple[str, str]], list[tuple[str, int]], list[tuple[str, int]], Expr]] = {}


def kernel(name, params, sizes, cost_sizes, body):
    KERNELS[name] = (params, sizes, cost_sizes, body)


N, M, K = sz("N"), sz("M"), sz("K")

kernel(
    "vsum",
    [("xs", "(array float N)")],
    [("N", 8)],
    [("N", 1024)],
    ifold(N, num(0), add(idx(p("xs"), Var(1)), Var(0))),
)

kernel(
    "axpy",
    [("alpha", "float"), ("A", "(array float N)"), ("B", "(array float N)")],
    [("N", 8)],
    [("N", 1024)],
    vadd(N, vscale(N, p("alpha"), p("A")), p("B")),
)

kernel(
    "memset",
    [],
    [("N", 8)],
    [("N", 1024)],
    build(N, num(0)),
)

kernel(
    "gemv",
    [
        ("alpha", "float"),
        ("A", "(array (array float M) N)"),
        ("B", "(array float M)"),
        ("beta", "float"),
        ("C", "(array float N)"),
    ],
    [("N", 8), ("M", 8)],
    [("N", 1024), ("M", 1024)],
    vadd(N, vscale(N, p("alpha"), matvec(N, M, p("A"), p("B"))), vscale(N, p("beta"), p("C"))),
)

kernel(
    "gesummv",
    [
        ("alpha", "float"),
        ("beta", "float"),
        ("A", "(array (array float N) N)"),
        ("B", "(array (array float N) N)"),
        ("x", "(array float N)"),
    ],
    [("N", 8)],
    [("N", 1024)],
    vadd(
        N,
        vscale(N, p("alpha"), matvec(N, N, p("A"), p("x"))),
        vscale(N, p("beta"), matvec(N, N, p("B"), p("x"))),
    ),
)

kernel(
    "1mm",
    [("A", "(array (array float K) N)"), ("B", "(array (array float M) K)")],
    [("N", 8), ("K", 8), ("M", 8)],
    [("N", 1024), ("K", 1024), ("M", 1024)],
    build(N, matvec(M, K, transpose_expand(K, M, p("B")), idx(p("A"), Var(0)))),
)

kernel(
    "gemm",
    [
        ("alpha", "float"),
        ("A", "(array (array float K) N)"),
        ("B", "(array (array float M) K)"),
        ("beta", "float"),
        ("C", "(array (array float M) N)"),
    ],
    [("N", 8), ("K", 8), ("M", 8)],
    [("N", 1024), ("K", 1024), ("M", 1024)],
    madd(
        N,
        M,
        mscale(N, M, p("alpha"), build(N, matvec(M, K, transpose_expand(K, M, p("B")), idx(p("A"), Var(0))))),
        mscale(N, M, p("beta"), p("C")),
    ),
)

NI, NJ, NK, NL = sz("NI"), sz("NJ"), sz("NK"), sz("NL")
kernel(
    "2mm",
    [
        ("alpha", "float"),
        ("beta", "float"),
        ("A", "(array (array float NK) NI)"),
        ("B", "(array (array float NJ) NK)"),
        ("C", "(array (array float NL) NJ)"),
        ("D", "(array (array float NL) NI)"),
    ],
    [("NI", 8), ("NJ", 8), ("NK", 8), ("NL", 8)],
    [("NI", 1024), ("NJ", 1024), ("NK", 1024), ("NL", 1024)],
    madd(
        NI,
        NL,
        build(
            NI,
            matvec(
                NL,
                NJ,
                transpose_expand(NJ, NL, p("C")),
                idx(
                    mscale(
                        NI,
                        NJ,
                        p("alpha"),
                        build(NI, matvec(NJ, NK, transpose_expand(NK, NJ, p("B")), idx(p("A"), Var(0)))),
                    ),
                    Var(0),
                ),
            ),
        ),
        mscale(NI, NL, p("beta"), p("D")),
    ),
)

L = sz("L")
kernel(
    "slim-2mm",
    [
        ("A", "(array (array float K) N)"),
        ("B", "(array (array float M) K)"),
        ("C", "(array (array float L) M)"),
    ],
    [("N", 8), ("K", 8), ("M", 8), ("L", 8)],
    [("N", 1024), ("K", 1024), ("M", 1024), ("L", 1024)],
    build(
        N,
        matvec(
            L,
            M,
            transpose_expand(M, L, p("C")),
            idx(build(N, matvec(M, K, transpose_expand(K, M, p("B")), idx(p("A"), Var(0)))), Var(0)),
        ),
    ),
)

kernel(
    "atax",
    [("A", "(array (array float M) N)"), ("x", "(array float M)")],
    [("N", 8), ("M", 8)],
    [("N", 1024), ("M", 1024)],
    matvec(M, N, transpose_expand(N, M, p("A")), matvec(N, M, p("A"), p("x"))),
)

kernel(
    "mvt",
    [
        ("x1", "(array float N)"),
        ("x2", "(array float N)"),
        ("y1", "(array float N)"),
        ("y2", "(array float N)"),
        ("A", "(array (array float N) N)"),
    ],
    [("N", 8)],
    [("N", 1024)],
    Tup(
        vadd(N, p("x1"), matvec(N, N, p("A"), p("y1"))),
        vadd(N, p("x2"), matvec(N, N, transpose_expand(N, N, p("A")), p("y2"))),
    ),
)

R, Q, P = sz("R"), sz("Q"), sz("P")
kernel(
    "doitgen",
    [("A", "(array (array (array float P) Q) R)"), ("B", "(array (array float P) P)")],
    [("R", 8), ("Q", 8), ("P", 8)],
    [("R", 64), ("Q", 64), ("P", 64)],
    build(
        R,
        build(
            Q,
            build(
                P,
                ifold(
                    P,
                    num(0),
                    add(mul(idx(p("A"), Var(4), Var(3), Var(1)), idx(p("B"), Var(2), Var(1))), Var(0)),
                ),
            ),
        ),
    ),
)

third = NumLit.__call__ if False else None
from fractions import Fraction

kernel(
    "jacobi1d",
    [("A", "(array float N)")],
    [("N", 8), ("M", 6)],
    [("N", 1024), ("M", 1022)],
    build(
        M,
        mul(
            NumLit(Fraction(1, 3)),
            add(
                add(idx(p("A"), Var(0)), idx(p("A"), add(Var(0), SizeLit(1)))),
                idx(p("A"), add(Var(0), SizeLit(2))),
            ),
        ),
    ),
)

kernel(
    "blur1d",
    [("A", "(array float N)")],
    [("N", 8), ("M", 6)],
    [("N", 1024), ("M", 1022)],
    build(
        M,
        add(
            add(
                mul(NumLit(Fraction(1, 4)), idx(p("A"), Var(0))),
                mul(NumLit(Fraction(1, 2)), idx(p("A"), add(Var(0), SizeLit(1)))),
            ),
            mul(NumLit(Fraction(1, 4)), idx(p("A"), add(Var(0), SizeLit(2)))),
        ),
    ),
)

kernel(
    "stencil2d",
    [("A", "(array (array float N) N)")],
    [("N", 8), ("M", 6)],
    [("N", 1024), ("M", 1022)],
    build(
        M,
        build(
            M,
            mul(
                NumLit(Fraction(1, 5)),
                add(
                    add(
                        add(
                            idx(p("A"), Var(1), add(Var(0), SizeLit(1))),
                            idx(p("A"), add(Var(1), SizeLit(1)), Var(0)),
                        ),
                        add(
                            idx(p("A"), add(Var(1), SizeLit(1)), add(Var(0), SizeLit(1))),
                            idx(p("A"), add(Var(1), SizeLit(1)), add(Var(0), SizeLit(2))),
                        ),
                    ),
                    idx(p("A"), add(Var(1), SizeLit(2)), add(Var(0), SizeLit(1))),
                ),
            ),
        ),
    ),
)


def _gemver_ahat():
    # A + u1 v1^T + u2 v2^T, element [i][j] with i=%1, j=%0
    return build(
        N,
        build(
            N,
            add(
                add(
                    idx(p("A"), Var(1), Var(0)),
                    mul(idx(p("u1"), Var(1)), idx(p("v1"), Var(0))),
                ),
                mul(idx(p("u2"), Var(1)), idx(p("v2"), Var(0))),
            ),
        ),
    )


def _gemver_x():
    # x[i] = x0[i] + sum_j beta * Ahat[j][i] * y[j], then + z[i]
    ah = _gemver_ahat()
    x1 = build(
        N,
        add(
            idx(p("x0"), Var(0)),
            ifold(
                N,
                num(0),
                add(mul(mul(p("beta"), idx(ah, Var(1), Var(2))), idx(p("y"), Var(1))), Var(0)),
            ),
        ),
    )
    return vadd(N, x1, p("z"))


kernel(
    "gemver",
    [
        ("alpha", "float"),
        ("beta", "float"),
        ("A", "(array (array float N) N)"),
        ("u1", "(array float N)"),
        ("v1", "(array float N)"),
        ("u2", "(array float N)"),
        ("v2", "(array float N)"),
        ("w0", "(array float N)"),
        ("x0", "(array float N)"),
        ("y", "(array float N)"),
        ("z", "(array float N)"),
    ],
    [("N", 8)],
    [("N", 1024)],
    build(
        N,
        add(
            idx(p("w0"), Var(0)),
            ifold(
                N,
                num(0),
                add(
                    mul(mul(p("alpha"), idx(_gemver_ahat(), Var(2), Var(1))), idx(_gemver_x(), Var(1))),
                    Var(0),
                ),
            ),
        ),
    ),
)


def main() -> None:
    outdir = Path(__file__).resolve().parent.parent / "src" / "idiomsat" / "kernels"
    outdir.mkdir(parents=True, exist_ok=True)
    for name, (params, sizes, cost_sizes, body) in KERNELS.items():
        pnames = [pn for pn, _ in params]
        resolved = resolve(body, pnames)
        lines = [f"(kernel {name}"]
        lines.append("  (params " + " ".join(f"({pn} {ps})" for pn, ps in params) + ")")
        lines.append("  (sizes " + " ".join(f"({sn} {sv})" for sn, sv in sizes) + ")")
        lines.append("  (cost-sizes " + " ".join(f"({sn} {sv})" for sn, sv in cost_sizes) + ")")
        lines.append("  " + named_print(resolved, pnames))
        lines.append(")")
        text = "\n".join(lines) + "\n"
        parse_kernel(text)  # must round-trip through the real parser
        (outdir / f"{name}.lir").write_text(text)
        print(f"wrote {name}.lir ({len(text)} bytes)")


if __name__ == "__main__":
    main()
