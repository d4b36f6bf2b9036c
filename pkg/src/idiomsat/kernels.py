"""The benchmark kernel corpus and its independent numpy reference semantics.

Kernels live as textual files next to this module, one per kernel, so new
ones can be added without touching code. `reference_eval` implements each
kernel's math directly in numpy, deliberately not sharing code with the IR
interpreter: agreement between the two is the corpus sanity oracle.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .ir import KernelDef
from .syntax import parse_kernel

CORPUS_DIR = Path(__file__).parent / "kernels"

KERNEL_NAMES = (
    "2mm",
    "atax",
    "doitgen",
    "gemm",
    "gemver",
    "gesummv",
    "jacobi1d",
    "mvt",
    "1mm",
    "axpy",
    "blur1d",
    "gemv",
    "memset",
    "slim-2mm",
    "stencil2d",
    "vsum",
)


class UnknownKernel(Exception):
    pass


def load(name: str) -> KernelDef:
    path = CORPUS_DIR / f"{name}.lir"
    if not path.exists():
        raise UnknownKernel(f"no kernel named {name!r} in {CORPUS_DIR}")
    return parse_kernel(path.read_text())


def load_file(path: str | Path) -> KernelDef:
    return parse_kernel(Path(path).read_text())


def load_all() -> dict[str, KernelDef]:
    return {name: load(name) for name in KERNEL_NAMES}


# --- reference semantics ------------------------------------------------------

def _np(x):
    return np.asarray(x, dtype=np.float64)


def _ref_vsum(xs):
    return float(np.sum(_np(xs)))


def _ref_axpy(alpha, a, b):
    return alpha * _np(a) + _np(b)


def _ref_memset():
    return None  # size comes from the size environment


def _ref_gemv(alpha, a, b, beta, c):
    return alpha * (_np(a) @ _np(b)) + beta * _np(c)


def _ref_gesummv(alpha, beta, a, b, x):
    return alpha * (_np(a) @ _np(x)) + beta * (_np(b) @ _np(x))


def _ref_1mm(a, b):
    return _np(a) @ _np(b)


def _ref_gemm(alpha, a, b, beta, c):
    return alpha * (_np(a) @ _np(b)) + beta * _np(c)


def _ref_2mm(alpha, beta, a, b, c, d):
    return (alpha * (_np(a) @ _np(b))) @ _np(c) + beta * _np(d)


def _ref_slim_2mm(a, b, c):
    return _np(a) @ _np(b) @ _np(c)


def _ref_atax(a, x):
    a = _np(a)
    return a.T @ (a @ _np(x))


def _ref_mvt(x1, x2, y1, y2, a):
    a = _np(a)
    return (_np(x1) + a @ _np(y1), _np(x2) + a.T @ _np(y2))


def _ref_doitgen(a, b):
    a, b = _np(a), _np(b)
    # out[r, q, p] = sum_s a[r, q, s] * b[p, s]
    return np.einsum("rqs,ps->rqp", a, b)


def _ref_jacobi1d(a):
    a = _np(a)
    m = len(a) - 2
    return (a[0:m] + a[1 : m + 1] + a[2 : m + 2]) / 3.0


def _ref_blur1d(a):
    a = _np(a)
    m = len(a) - 2
    return 0.25 * a[0:m] + 0.5 * a[1 : m + 1] + 0.25 * a[2 : m + 2]


def _ref_stencil2d(a):
    a = _np(a)
    m = a.shape[0] - 2
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            out[i, j] = (
                a[i, j + 1] + a[i + 1, j] + a[i + 1, j + 1] + a[i + 1, j + 2] + a[i + 2, j + 1]
            ) / 5.0
    return out


def _ref_gemver(alpha, beta, a, u1, v1, u2, v2, w0, x0, y, z):
    a = _np(a)
    ahat = a + np.outer(_np(u1), _np(v1)) + np.outer(_np(u2), _np(v2))
    x = _np(x0) + beta * (ahat.T @ _np(y)) + _np(z)
    return _np(w0) + alpha * (ahat @ x)


_REFERENCES = {
    "vsum": _ref_vsum,
    "axpy": _ref_axpy,
    "gemv": _ref_gemv,
    "gesummv": _ref_gesummv,
    "1mm": _ref_1mm,
    "gemm": _ref_gemm,
    "2mm": _ref_2mm,
    "slim-2mm": _ref_slim_2mm,
    "atax": _ref_atax,
    "mvt": _ref_mvt,
    "doitgen": _ref_doitgen,
    "jacobi1d": _ref_jacobi1d,
    "blur1d": _ref_blur1d,
    "stencil2d": _ref_stencil2d,
    "gemver": _ref_gemver,
}


def _to_value(x):
    if isinstance(x, tuple):
        return tuple(_to_value(v) for v in x)
    if isinstance(x, np.ndarray):
        return [_to_value(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def reference_eval(name: str, inputs: Sequence, sizes: dict[str, int] | None = None):
    """Direct numpy evaluation of a kernel, independent of the interpreter.

    Returns values in the interpreter's representation (nested lists/floats)
    so results compare directly."""
    if name == "memset":
        n = (sizes or dict(load("memset").sizes))["N"]
        return [0.0] * n
    fn = _REFERENCES.get(name)
    if fn is None:
        raise UnknownKernel(f"no reference semantics for {name!r}")
    return _to_value(fn(*inputs))
