"""The compiled-in rewrite rule catalog.

Eight core rules tie build, array indexing, tuples, and beta reduction
together; four scalar identities each install as a pair of directed rules;
the BLAS and PyTorch idiom sets translate library-call equivalences into
recognition rewrites (expanded form -> call), with both directions installed
only where call-level restructuring needs them (transpose folding, hoisting,
and the polymorphic lift rules).
"""
from __future__ import annotations

from .ir import FLOAT, SIZE
from .rewrite import (
    PIFold,
    PSizeOfDim,
    RewriteRule,
    SF_ARR,
    SF_FLOAT,
    SF_FN_SIZE,
    SF_MAT,
    SF_SIZE,
    SF_VEC,
    fnot,
    fvar,
    padd,
    pcall,
    plam,
    pm,
    pmul,
    pnum,
    pvar,
    PBuild,
    PIndex,
    PApp,
    PFst,
    PSnd,
    PTup,
)


def _r(name, family, lhs, rhs, unbound=(), applier="plain"):
    return RewriteRule(name, family, lhs, rhs, tuple(unbound), applier)


def core_rules() -> list[RewriteRule]:
    return [
        _r("R-BetaReduce", "core", PApp(plam(pm("e", 0)), pm("y")), None, applier="beta"),
        _r(
            "R-IntroLambda",
            "core",
            pm("e"),
            PApp(plam(pm("e", 1), param_from="y"), pm("y")),
            unbound=[("y", None)],
        ),
        _r(
            "R-ElimIndexBuild",
            "core",
            PIndex(PBuild(pm("N", sort=SF_SIZE), pm("f")), pm("i")),
            PApp(pm("f"), pm("i")),
        ),
        _r(
            "R-IntroIndexBuild",
            "core",
            PApp(pm("f", sort=SF_FN_SIZE), pm("i", sort=SF_SIZE)),
            PIndex(PBuild(pm("N"), pm("f")), pm("i")),
            unbound=[("N", SF_SIZE)],
        ),
        _r("R-ElimFstTuple", "core", PFst(PTup(pm("a"), pm("b"))), pm("a")),
        _r("R-IntroFstTuple", "core", pm("a"), PFst(PTup(pm("a"), pm("b"))), unbound=[("b", None)]),
        _r("R-ElimSndTuple", "core", PSnd(PTup(pm("a"), pm("b"))), pm("b")),
        _r("R-IntroSndTuple", "core", pm("b"), PSnd(PTup(pm("a"), pm("b"))), unbound=[("a", None)]),
    ]


def scalar_rules() -> list[RewriteRule]:
    x = pm("x", sort=SF_FLOAT)
    y = pm("y", sort=SF_FLOAT)
    return [
        _r("E-AddZero", "scalar", padd(x, pnum(0)), x),
        _r("E-AddZero-rev", "scalar", x, padd(x, pnum(0))),
        _r("E-MulOneL", "scalar", pmul(pnum(1), x), x),
        _r("E-MulOneL-rev", "scalar", x, pmul(pnum(1), x)),
        _r("E-MulOneR", "scalar", pmul(x, pnum(1)), x),
        _r("E-MulOneR-rev", "scalar", x, pmul(x, pnum(1))),
        _r("E-CommuteMul", "scalar", pmul(x, y), pmul(y, x)),
        _r("E-CommuteMul-rev", "scalar", pmul(y, x), pmul(x, y)),
    ]


def _shared_idioms(family: str) -> list[RewriteRule]:
    # dot and transpose recognition are identical for both libraries.
    dot_lhs = PIFold(
        pm("N", sort=SF_SIZE),
        pnum(0),
        plam(
            plam(
                padd(
                    pmul(
                        PIndex(pm("A", 2, SF_VEC), pvar(1)),
                        PIndex(pm("B", 2, SF_VEC), pvar(1)),
                    ),
                    pvar(0),
                ),
                param=FLOAT,
            ),
            param=SIZE,
        ),
    )
    transpose_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(
            PBuild(
                pm("M", sort=SF_SIZE),
                plam(PIndex(PIndex(pm("A", 2, SF_MAT), pvar(0)), pvar(1)), param=SIZE),
            ),
            param=SIZE,
        ),
    )
    return [
        _r("I-Dot", family, dot_lhs, pcall("dot", pm("A"), pm("B"))),
        _r("I-Transpose", family, transpose_lhs, pcall("transpose", pm("A"))),
    ]


def blas_rules() -> list[RewriteRule]:
    rules = _shared_idioms("blas")
    axpy_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(
            padd(
                pmul(pm("alpha", 1, SF_FLOAT), PIndex(pm("A", 1, SF_VEC), pvar(0))),
                PIndex(pm("B", 1, SF_VEC), pvar(0)),
            ),
            param=SIZE,
        ),
    )
    rules.append(_r("I-Axpy", "blas", axpy_lhs, pcall("axpy", pm("alpha"), pm("A"), pm("B"))))

    gemv_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(
            padd(
                pmul(
                    pm("alpha", 1, SF_FLOAT),
                    pcall("dot", PIndex(pm("A", 1, SF_MAT), pvar(0)), pm("B", 1, SF_VEC)),
                ),
                pmul(pm("beta", 1, SF_FLOAT), PIndex(pm("C", 1, SF_VEC), pvar(0))),
            ),
            param=SIZE,
        ),
    )
    rules.append(
        _r(
            "I-Gemv",
            "blas",
            gemv_lhs,
            pcall("gemv", pm("alpha"), pm("A"), pm("B"), pm("beta"), pm("C"), flags=(False,)),
        )
    )

    gemm_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(
            pcall(
                "gemv",
                pm("alpha", 1, SF_FLOAT),
                pm("B", 1, SF_MAT),
                PIndex(pm("A", 1, SF_MAT), pvar(0)),
                pm("beta", 1, SF_FLOAT),
                PIndex(pm("C", 1, SF_MAT), pvar(0)),
                flags=(False,),
            ),
            param=SIZE,
        ),
    )
    rules.append(
        _r(
            "I-Gemm",
            "blas",
            gemm_lhs,
            pcall("gemm", pm("alpha"), pm("A"), pm("B"), pm("beta"), pm("C"), flags=(False, True)),
        )
    )

    # Transpose folding works in both directions: a transpose call can be
    # absorbed into a flag or pulled back out.
    tg_l = pcall(
        "gemv", pm("alpha"), pcall("transpose", pm("A")), pm("B"), pm("beta"), pm("C"), flags=(fvar("X"),)
    )
    tg_r = pcall("gemv", pm("alpha"), pm("A"), pm("B"), pm("beta"), pm("C"), flags=(fnot("X"),))
    rules.append(_r("I-TransposeInGemv", "blas", tg_l, tg_r))
    rules.append(
        _r(
            "I-TransposeInGemv-rev",
            "blas",
            pcall("gemv", pm("alpha"), pm("A", sort=SF_MAT), pm("B"), pm("beta"), pm("C"), flags=(fvar("X"),)),
            pcall(
                "gemv", pm("alpha"), pcall("transpose", pm("A")), pm("B"), pm("beta"), pm("C"), flags=(fnot("X"),)
            ),
        )
    )
    ta_l = pcall(
        "gemm", pm("alpha"), pcall("transpose", pm("A")), pm("B"), pm("beta"), pm("C"), flags=(fvar("X"), fvar("Y"))
    )
    ta_r = pcall("gemm", pm("alpha"), pm("A"), pm("B"), pm("beta"), pm("C"), flags=(fnot("X"), fvar("Y")))
    rules.append(_r("I-TransposeAInGemm", "blas", ta_l, ta_r))
    rules.append(
        _r(
            "I-TransposeAInGemm-rev",
            "blas",
            pcall("gemm", pm("alpha"), pm("A", sort=SF_MAT), pm("B"), pm("beta"), pm("C"), flags=(fvar("X"), fvar("Y"))),
            pcall(
                "gemm",
                pm("alpha"),
                pcall("transpose", pm("A")),
                pm("B"),
                pm("beta"),
                pm("C"),
                flags=(fnot("X"), fvar("Y")),
            ),
        )
    )
    tb_l = pcall(
        "gemm", pm("alpha"), pm("A"), pcall("transpose", pm("B")), pm("beta"), pm("C"), flags=(fvar("X"), fvar("Y"))
    )
    tb_r = pcall("gemm", pm("alpha"), pm("A"), pm("B"), pm("beta"), pm("C"), flags=(fvar("X"), fnot("Y")))
    rules.append(_r("I-TransposeBInGemm", "blas", tb_l, tb_r))
    rules.append(
        _r(
            "I-TransposeBInGemm-rev",
            "blas",
            pcall("gemm", pm("alpha"), pm("A"), pm("B", sort=SF_MAT), pm("beta"), pm("C"), flags=(fvar("X"), fvar("Y"))),
            pcall(
                "gemm",
                pm("alpha"),
                pm("A"),
                pcall("transpose", pm("B")),
                pm("beta"),
                pm("C"),
                flags=(fvar("X"), fnot("Y")),
            ),
        )
    )

    hoist_l = pcall(
        "dot",
        PBuild(
            pm("N", sort=SF_SIZE),
            plam(pmul(pm("alpha", 1, SF_FLOAT), PIndex(pm("A", 1, SF_VEC), pvar(0))), param=SIZE),
        ),
        pm("B", sort=SF_VEC),
    )
    hoist_r = pmul(pm("alpha"), pcall("dot", pm("A"), pm("B")))
    rules.append(_r("I-HoistMulFromDot", "blas", hoist_l, hoist_r))
    rules.append(
        _r(
            "I-HoistMulFromDot-rev",
            "blas",
            pmul(pm("alpha", sort=SF_FLOAT), pcall("dot", pm("A", sort=SF_VEC), pm("B", sort=SF_VEC))),
            pcall(
                "dot",
                PBuild(
                    PSizeOfDim("A"),
                    plam(pmul(pm("alpha", 1), PIndex(pm("A", 1), pvar(0))), param=SIZE),
                ),
                pm("B"),
            ),
        )
    )

    memset_lhs = PBuild(pm("N", sort=SF_SIZE), plam(pm("c", 1, SF_FLOAT, const=0), param=SIZE))
    rules.append(_r("I-MemsetZero", "blas", memset_lhs, pcall("memset", pm("c"), pm("N"))))
    return rules


def pytorch_rules() -> list[RewriteRule]:
    rules = _shared_idioms("pytorch")
    vecsum_lhs = PIFold(
        pm("N", sort=SF_SIZE),
        pnum(0),
        plam(plam(padd(PIndex(pm("A", 2, SF_VEC), pvar(1)), pvar(0)), param=FLOAT), param=SIZE),
    )
    rules.append(_r("I-VecSum", "pytorch", vecsum_lhs, pcall("sum", pm("A"))))

    mv_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(pcall("dot", PIndex(pm("A", 1, SF_MAT), pvar(0)), pm("B", 1, SF_VEC)), param=SIZE),
    )
    rules.append(_r("I-MatVec", "pytorch", mv_lhs, pcall("mv", pm("A"), pm("B"))))

    # Rows of mv(B, A[i]) contract A's rows against B's rows, which is A
    # times B transposed; the recognition direction materializes a transpose
    # call so the usual folding rules can simplify it away.
    mm_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(pcall("mv", pm("B", 1, SF_MAT), PIndex(pm("A", 1, SF_MAT), pvar(0))), param=SIZE),
    )
    rules.append(_r("I-MatMat", "pytorch", mm_lhs, pcall("mm", pm("A"), pcall("transpose", pm("B")))))

    rules.append(
        _r(
            "I-TransposeTwice",
            "pytorch",
            pcall("transpose", pcall("transpose", pm("A"))),
            pm("A"),
        )
    )
    rules.append(
        _r(
            "I-TransposeTwice-rev",
            "pytorch",
            pm("A", sort=SF_MAT),
            pcall("transpose", pcall("transpose", pm("A"))),
        )
    )

    addvec_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(
            padd(PIndex(pm("A", 1, SF_VEC), pvar(0)), PIndex(pm("B", 1, SF_VEC), pvar(0))),
            param=SIZE,
        ),
    )
    rules.append(_r("I-AddVec", "pytorch", addvec_lhs, pcall("add", pm("A"), pm("B"))))

    liftadd_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(
            pcall("add", PIndex(pm("A", 1, SF_ARR), pvar(0)), PIndex(pm("B", 1, SF_ARR), pvar(0))),
            param=SIZE,
        ),
    )
    rules.append(_r("I-LiftAdd", "pytorch", liftadd_lhs, pcall("add", pm("A"), pm("B"))))
    rules.append(
        _r(
            "I-LiftAdd-rev",
            "pytorch",
            pcall("add", pm("A", sort=SF_ARR), pm("B", sort=SF_ARR)),
            PBuild(
                PSizeOfDim("A"),
                plam(pcall("add", PIndex(pm("A", 1), pvar(0)), PIndex(pm("B", 1), pvar(0))), param=SIZE),
            ),
        )
    )

    mulsv_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(pmul(pm("alpha", 1, SF_FLOAT), PIndex(pm("A", 1, SF_VEC), pvar(0))), param=SIZE),
    )
    rules.append(_r("I-MulScalarAndVec", "pytorch", mulsv_lhs, pcall("mul", pm("alpha"), pm("A"))))

    liftmul_lhs = PBuild(
        pm("N", sort=SF_SIZE),
        plam(pcall("mul", pm("alpha", 1, SF_FLOAT), PIndex(pm("A", 1, SF_ARR), pvar(0))), param=SIZE),
    )
    rules.append(_r("I-LiftMul", "pytorch", liftmul_lhs, pcall("mul", pm("alpha"), pm("A"))))
    rules.append(
        _r(
            "I-LiftMul-rev",
            "pytorch",
            pcall("mul", pm("alpha", sort=SF_FLOAT), pm("A", sort=SF_ARR)),
            PBuild(
                PSizeOfDim("A"),
                plam(pcall("mul", pm("alpha", 1), PIndex(pm("A", 1), pvar(0))), param=SIZE),
            ),
        )
    )

    fullvec_lhs = PBuild(pm("N", sort=SF_SIZE), plam(pm("c", 1, SF_FLOAT), param=SIZE))
    rules.append(_r("I-FullVec", "pytorch", fullvec_lhs, pcall("full", pm("c"), pm("N"))))
    return rules


def ifold_semantics_rules() -> list[RewriteRule]:
    """Unfolding rules for ifold on literal sizes. Not installed by default:
    no kernel needs them, but they are available for experiments."""
    from .rewrite import PSizeLit

    init_lhs = PIFold(PSizeLit(0), pm("z"), pm("f"))
    step_lhs = PIFold(pm("N", sort=SF_SIZE), pm("z"), pm("f"))
    return [
        _r("E-FoldInit", "core", init_lhs, pm("z")),
        _r("E-FoldStep", "core", step_lhs, None, applier="fold_step"),
    ]


def catalog(target: str, include_ifold: bool = False) -> list[RewriteRule]:
    """Rule set for a target: pure_c = core + scalar; blas and pytorch add
    their idiom families."""
    target = target.replace("-", "_")
    rules = core_rules() + scalar_rules()
    if target == "blas":
        rules += blas_rules()
    elif target == "pytorch":
        rules += pytorch_rules()
    elif target != "pure_c":
        raise ValueError(f"unknown target {target!r}")
    if include_ifold:
        rules += ifold_semantics_rules()
    return rules


def dump_rules(rules) -> str:
    from .rewrite import print_pattern

    lines = []
    for r in rules:
        rhs = "<beta-substitution>" if r.applier == "beta" else (
            "<ifold-unfold>" if r.applier == "fold_step" else print_pattern(r.rhs)
        )
        lines.append(f"{r.name}  [{r.family}]")
        lines.append(f"  lhs: {print_pattern(r.lhs)}")
        lines.append(f"  rhs: {rhs}")
        if r.unbound:
            names = ", ".join(f"?{n}" + (f" : {f.name}" if f else "") for n, f in r.unbound)
            lines.append(f"  unbound: {names}")
    return "\n".join(lines)
