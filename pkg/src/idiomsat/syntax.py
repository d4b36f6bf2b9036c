"""Textual format for IR terms and kernel files.

Canonical form is fully parenthesized prefix syntax with bare De Bruijn
indices (%k). Kernel bodies may refer to declared inputs by name; the parser
rewrites those names to the indices of the implicit input binders. Infix
sugar like (a + b) is accepted on input but never printed.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .ir import (
    App,
    ArraySort,
    Build,
    Call,
    Expr,
    FLOAT,
    FnName,
    FnSort,
    Fst,
    IFold,
    Index,
    KernelDef,
    Lam,
    NumLit,
    SIZE,
    SizeLit,
    SizeSym,
    Snd,
    Sort,
    Tup,
    TupleSort,
    Var,
    annotate,
    free_indices,
    parse_fn_name,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


class UnboundName(ParseError):
    pass


@dataclass(frozen=True)
class _Tok:
    text: str
    line: int
    col: int


_PUNCT = "()"
_INFIX = {"+", "*", ">"}


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c.isspace():
            col += 1
            i += 1
            continue
        if c == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        if c in _PUNCT:
            toks.append(_Tok(c, line, col))
            i += 1
            col += 1
            continue
        j = i
        while j < len(text) and not text[j].isspace() and text[j] not in _PUNCT and text[j] != ";":
            j += 1
        toks.append(_Tok(text[i:j], line, col))
        col += j - i
        i = j
    return toks


def _is_number(t: str) -> bool:
    body = t[1:] if t[:1] == "-" else t
    if not body:
        return False
    for sep in (".", "/"):
        if sep in body:
            a, _, b = body.partition(sep)
            return a.isdigit() and b.isdigit()
    return body.isdigit()


def _parse_number(t: str) -> Fraction:
    return Fraction(t)


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> _Tok:
        t = self.peek()
        if t is None:
            last = self.toks[-1] if self.toks else _Tok("", 1, 1)
            raise ParseError("unexpected end of input", last.line, last.col)
        self.pos += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, got {t.text!r}", t.line, t.col)
        return t

    def at_end(self) -> bool:
        return self.pos >= len(self.toks)

    # names: list of in-scope identifiers, innermost binder first; a name at
    # position i denotes Var(i).
    def expr(self, names: list[str]) -> Expr:
        t = self.next()
        if t.text == "(":
            return self.form(names, t)
        return self.atom(t, names)

    def atom(self, t: _Tok, names: list[str]) -> Expr:
        s = t.text
        if s.startswith("%"):
            if not s[1:].isdigit():
                raise ParseError(f"bad index {s!r}", t.line, t.col)
            return Var(int(s[1:]))
        if s.startswith("#"):
            if not s[1:].isdigit():
                raise ParseError(f"bad size literal {s!r}", t.line, t.col)
            return SizeLit(int(s[1:]))
        if _is_number(s):
            return NumLit(_parse_number(s))
        if s in names:
            return Var(names.index(s))
        if s[0].isupper():
            return SizeSym(s)
        raise UnboundName(f"unbound variable {s!r}", t.line, t.col)

    def form(self, names: list[str], opener: _Tok) -> Expr:
        head = self.next()
        h = head.text
        if h == "lam":
            body = self.expr(["%"] + names)  # "%" is unnameable filler
            self.expect(")")
            return Lam(body)
        if h == "app":
            f = self.expr(names)
            a = self.expr(names)
            self.expect(")")
            return App(f, a)
        if h == "build":
            n = self.expr(names)
            f = self.expr(names)
            self.expect(")")
            return Build(n, f)
        if h == "idx":
            a = self.expr(names)
            i = self.expr(names)
            self.expect(")")
            return Index(a, i)
        if h == "ifold":
            n = self.expr(names)
            z = self.expr(names)
            f = self.expr(names)
            self.expect(")")
            return IFold(n, z, f)
        if h == "tuple":
            a = self.expr(names)
            b = self.expr(names)
            self.expect(")")
            return Tup(a, b)
        if h == "fst":
            a = self.expr(names)
            self.expect(")")
            return Fst(a)
        if h == "snd":
            a = self.expr(names)
            self.expect(")")
            return Snd(a)
        if h == "call":
            nm = self.next()
            args = []
            while self.peek() is not None and self.peek().text != ")":
                args.append(self.expr(names))
            self.expect(")")
            return Call(parse_fn_name(nm.text), tuple(args))
        if h in _INFIX:
            a = self.expr(names)
            b = self.expr(names)
            self.expect(")")
            return Call(FnName(h), (a, b))
        # Infix sugar: re-parse the head as an operand of (a + b).
        self.pos -= 1
        a = self.expr(names)
        op = self.next()
        if op.text not in _INFIX:
            raise ParseError(f"unknown form {h!r}", head.line, head.col)
        b = self.expr(names)
        self.expect(")")
        return Call(FnName(op.text), (a, b))

    def sort(self) -> Sort:
        t = self.next()
        if t.text == "float":
            return FLOAT
        if t.text == "size":
            return SIZE
        if t.text != "(":
            raise ParseError(f"bad sort {t.text!r}", t.line, t.col)
        head = self.next()
        if head.text == "array":
            elem = self.sort()
            d = self.next()
            dim: int | str
            if d.text.isdigit():
                dim = int(d.text)
            elif d.text[0].isupper():
                dim = d.text
            else:
                raise ParseError(f"bad dimension {d.text!r}", d.line, d.col)
            self.expect(")")
            return ArraySort(elem, dim)
        if head.text == "tuple":
            a = self.sort()
            b = self.sort()
            self.expect(")")
            return TupleSort(a, b)
        if head.text == "fn":
            a = self.sort()
            b = self.sort()
            self.expect(")")
            return FnSort(a, b)
        raise ParseError(f"unknown sort {head.text!r}", head.line, head.col)


def parse_expr(text: str, params: list[str] | None = None) -> Expr:
    """Parse a standalone expression. `params` optionally names the free
    indices: params[0] is the outermost input, so with n params the name
    params[k] denotes index n-1-k at the top level."""
    p = _Parser(_tokenize(text))
    names = list(reversed(params)) if params else []
    e = p.expr(names)
    if not p.at_end():
        t = p.peek()
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return e


def parse_kernel(text: str) -> KernelDef:
    p = _Parser(_tokenize(text))
    p.expect("(")
    p.expect("kernel")
    name = p.next().text
    p.expect("(")
    p.expect("params")
    params: list[tuple[str, Sort]] = []
    while p.peek() is not None and p.peek().text != ")":
        p.expect("(")
        pname = p.next().text
        psort = p.sort()
        p.expect(")")
        params.append((pname, psort))
    p.expect(")")
    p.expect("(")
    p.expect("sizes")
    sizes: list[tuple[str, int]] = []
    while p.peek() is not None and p.peek().text != ")":
        p.expect("(")
        sname = p.next().text
        sval = p.next().text
        p.expect(")")
        sizes.append((sname, int(sval)))
    p.expect(")")
    cost_sizes: list[tuple[str, int]] = []
    save = p.pos
    nxt = p.peek()
    if nxt is not None and nxt.text == "(":
        p.next()
        head = p.peek()
        if head is not None and head.text == "cost-sizes":
            p.next()
            while p.peek() is not None and p.peek().text != ")":
                p.expect("(")
                sname = p.next().text
                sval = p.next().text
                p.expect(")")
                cost_sizes.append((sname, int(sval)))
            p.expect(")")
        else:
            p.pos = save
    body = p.expr([pn for pn, _ in reversed(params)])
    p.expect(")")
    if not p.at_end():
        t = p.peek()
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    kd = KernelDef(
        name=name,
        params=tuple(params),
        sizes=tuple(sizes),
        cost_sizes=tuple(cost_sizes),
        body=body,
    )
    extra = free_indices(kd.body) - set(range(len(params)))
    if extra:
        raise UnboundName(f"kernel {name} body has unbound indices {sorted(extra)}", 1, 1)
    annotate(kd.body, kd.param_env())  # sort-check, including build size positions
    return kd


def parse(text: str):
    """Parse either a kernel file or a bare expression."""
    stripped = text.lstrip()
    if stripped.startswith("(") and stripped[1:].lstrip().startswith("kernel"):
        return parse_kernel(text)
    return parse_expr(text)


def _print_num(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def print_expr(e: Expr) -> str:
    match e:
        case Var(i):
            return f"%{i}"
        case NumLit(v):
            return _print_num(v)
        case SizeLit(n):
            return f"#{n}"
        case SizeSym(name):
            return name
        case Lam(body):
            return f"(lam {print_expr(body)})"
        case App(f, a):
            return f"(app {print_expr(f)} {print_expr(a)})"
        case Build(n, f):
            return f"(build {print_expr(n)} {print_expr(f)})"
        case Index(a, i):
            return f"(idx {print_expr(a)} {print_expr(i)})"
        case IFold(n, z, f):
            return f"(ifold {print_expr(n)} {print_expr(z)} {print_expr(f)})"
        case Tup(a, b):
            return f"(tuple {print_expr(a)} {print_expr(b)})"
        case Fst(a):
            return f"(fst {print_expr(a)})"
        case Snd(a):
            return f"(snd {print_expr(a)})"
        case Call(name, args):
            if name.base in _INFIX and len(args) == 2:
                return f"({name.base} {print_expr(args[0])} {print_expr(args[1])})"
            inner = " ".join(print_expr(a) for a in args)
            return f"(call {name}{' ' + inner if inner else ''})"
    raise TypeError(f"not an Expr: {e!r}")


def print_sort(s: Sort) -> str:
    match s:
        case ArraySort(elem, dim):
            return f"(array {print_sort(elem)} {dim})"
        case TupleSort(a, b):
            return f"(tuple {print_sort(a)} {print_sort(b)})"
        case FnSort(a, b):
            return f"(fn {print_sort(a)} {print_sort(b)})"
        case _:
            return repr(s)
