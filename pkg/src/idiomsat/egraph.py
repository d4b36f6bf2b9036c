"""Hash-consed e-graph with union-find, congruence repair, and per-class
analyses: sort, free De Bruijn indices, constant value, and size value.

The free-index analysis joins by intersection: an index is recorded as free
only if every known member uses it. A class whose free set avoids an index
therefore admits at least one member avoiding it, which `extract_avoiding`
produces as a concrete witness for shift-annotated pattern variables.

Var and Lambda e-nodes carry their sort in the payload: a sort cannot be
derived from children for either, and without it structurally equal variables
from unrelated binders would collapse into one class and ruin the dimension
checks that idiom instantiation relies on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Optional

from .ir import (
    ArraySort,
    Dim,
    FnName,
    Sort,
    TApp,
    TBuild,
    TCall,
    TExpr,
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
    erase,
    join_sorts,
)
from .ir import Expr


class EGraphError(Exception):
    pass


class ConstConflict(EGraphError):
    """Two distinct constants were merged: an unsound rewrite fired."""


class SortConflict(EGraphError):
    """Two differently sorted classes were merged: an unsound rewrite fired."""


class Unextractable(EGraphError):
    pass


ClassId = int

KINDS = (
    "var",
    "numlit",
    "sizelit",
    "sizesym",
    "lam",
    "app",
    "build",
    "idx",
    "ifold",
    "tup",
    "fst",
    "snd",
    "call",
)
_KIND_INDEX = {k: i for i, k in enumerate(KINDS)}


@dataclass(frozen=True, slots=True)
class ENode:
    kind: str
    payload: Any
    children: tuple[ClassId, ...]

    def order_key(self) -> tuple:
        return (_KIND_INDEX[self.kind], repr(self.payload), self.children)


@dataclass
class EClassData:
    nodes: dict[ENode, None]
    parents: list[tuple[ENode, ClassId]]
    sort: Sort
    free: frozenset[int]
    const: Optional[Fraction]
    dim: Dim


def _node_free(node: ENode, free_of: Callable[[ClassId], frozenset[int]]) -> frozenset[int]:
    if node.kind == "var":
        return frozenset([node.payload[0]])
    if node.kind == "lam":
        inner = free_of(node.children[0])
        return frozenset(i - 1 for i in inner if i >= 1)
    out: frozenset[int] = frozenset()
    for c in node.children:
        out |= free_of(c)
    return out


class EGraph:
    def __init__(self) -> None:
        self._uf: list[ClassId] = []
        self.classes: dict[ClassId, EClassData] = {}
        self.hashcons: dict[ENode, ClassId] = {}
        self._congr_work: list[ClassId] = []
        self._analysis_work: list[ClassId] = []

    # -- union-find ----------------------------------------------------------

    def find(self, cid: ClassId) -> ClassId:
        uf = self._uf
        while uf[cid] != cid:
            uf[cid] = uf[uf[cid]]
            cid = uf[cid]
        return cid

    def canonicalize(self, node: ENode) -> ENode:
        kids = tuple(self.find(c) for c in node.children)
        if kids == node.children:
            return node
        return ENode(node.kind, node.payload, kids)

    # -- construction ----------------------------------------------------------

    def add(self, node: ENode, sort: Sort) -> ClassId:
        node = self.canonicalize(node)
        hit = self.hashcons.get(node)
        if hit is not None:
            root = self.find(hit)
            cls = self.classes[root]
            cls.sort = join_sorts(cls.sort, sort)
            return root
        cid = len(self._uf)
        self._uf.append(cid)
        free = _node_free(node, lambda c: self.classes[self.find(c)].free)
        const = node.payload if node.kind == "numlit" else None
        dim: Dim = None
        if node.kind == "sizelit":
            dim = node.payload
        elif node.kind == "sizesym":
            dim = node.payload
        self.classes[cid] = EClassData({node: None}, [], sort, free, const, dim)
        self.hashcons[node] = cid
        for c in dict.fromkeys(node.children):
            self.classes[self.find(c)].parents.append((node, cid))
        return cid

    def union(self, a: ClassId, b: ClassId) -> tuple[ClassId, bool]:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra, False
        root, other = (ra, rb) if ra < rb else (rb, ra)
        rc, oc = self.classes[root], self.classes[other]
        sort = join_sorts(rc.sort, oc.sort)
        const = self._merge_const(rc.const, oc.const)
        dim = self._merge_dim(rc.dim, oc.dim)
        free = rc.free & oc.free
        self._uf[other] = root
        rc.nodes.update(oc.nodes)
        rc.parents.extend(oc.parents)
        changed_analysis = free != rc.free or free != oc.free
        rc.sort, rc.const, rc.dim, rc.free = sort, const, dim, free
        del self.classes[other]
        self._congr_work.append(root)
        if changed_analysis:
            self._analysis_work.append(root)
        return root, True

    @staticmethod
    def _merge_const(a: Optional[Fraction], b: Optional[Fraction]) -> Optional[Fraction]:
        if a is not None and b is not None and a != b:
            raise ConstConflict(f"merged classes with constants {a} and {b}")
        return a if a is not None else b

    @staticmethod
    def _merge_dim(a: Dim, b: Dim) -> Dim:
        if a is not None and b is not None and a != b:
            raise ConstConflict(f"merged classes with sizes {a} and {b}")
        return a if a is not None else b

    # -- maintenance -----------------------------------------------------------

    def rebuild(self) -> None:
        while self._congr_work or self._analysis_work:
            while self._congr_work:
                todo = {self.find(c) for c in self._congr_work}
                self._congr_work.clear()
                for cid in todo:
                    if cid in self.classes:
                        self._repair(cid)
            while self._analysis_work:
                todo = {self.find(c) for c in self._analysis_work}
                self._analysis_work.clear()
                for cid in todo:
                    self._repair_analysis_parents(cid)

    def _repair(self, cid: ClassId) -> None:
        cls = self.classes[cid]
        parents = cls.parents
        cls.parents = []
        seen: dict[ENode, ClassId] = {}
        for pnode, pcid in parents:
            proot = self.find(pcid)
            if proot not in self.classes:
                continue
            self.hashcons.pop(pnode, None)
            canon = self.canonicalize(pnode)
            holder = self.classes[proot]
            if pnode in holder.nodes and canon != pnode:
                del holder.nodes[pnode]
                holder.nodes[canon] = None
            existing = self.hashcons.get(canon)
            if existing is not None and self.find(existing) != proot:
                proot, _ = self.union(existing, proot)
            self.hashcons[canon] = self.find(proot)
            prev = seen.get(canon)
            if prev is not None and self.find(prev) != self.find(proot):
                self.union(prev, proot)
            seen[canon] = self.find(proot)
        me = self.find(cid)
        if me in self.classes:
            target = self.classes[me]
            for canon, proot in seen.items():
                target.parents.append((canon, self.find(proot)))

    def _repair_analysis_parents(self, cid: ClassId) -> None:
        root = self.find(cid)
        if root not in self.classes:
            return
        for pnode, pcid in list(self.classes[root].parents):
            proot = self.find(pcid)
            if proot not in self.classes:
                continue
            pcls = self.classes[proot]
            new_free = self._class_free(pcls)
            if new_free != pcls.free:
                pcls.free = new_free
                self._analysis_work.append(proot)

    def _class_free(self, cls: EClassData) -> frozenset[int]:
        free_of = lambda c: self.classes[self.find(c)].free
        out: Optional[frozenset[int]] = None
        for node in cls.nodes:
            nf = _node_free(node, free_of)
            out = nf if out is None else (out & nf)
        return out if out is not None else frozenset()

    # -- views -----------------------------------------------------------------

    def n_nodes(self) -> int:
        return len(self.hashcons)

    def n_classes(self) -> int:
        return len(self.classes)

    def class_of(self, cid: ClassId) -> EClassData:
        return self.classes[self.find(cid)]

    def nodes_by_kind(self) -> dict[str, list[tuple[ClassId, ENode]]]:
        out: dict[str, list[tuple[ClassId, ENode]]] = {k: [] for k in KINDS}
        for cid in sorted(self.classes):
            for node in self.classes[cid].nodes:
                out[node.kind].append((cid, node))
        return out

    # -- representation ----------------------------------------------------------

    def represent(self, t: TExpr) -> ClassId:
        match t:
            case TVar(i, s):
                return self.add(ENode("var", (i, s), ()), s)
            case TNumLit(v, s):
                return self.add(ENode("numlit", v, ()), s)
            case TSizeLit(n, s):
                return self.add(ENode("sizelit", n, ()), s)
            case TSizeSym(name, s):
                return self.add(ENode("sizesym", name, ()), s)
            case TLam(body, p, s):
                b = self.represent(body)
                return self.add(ENode("lam", p, (b,)), s)
            case TApp(f, a, s):
                return self.add(ENode("app", None, (self.represent(f), self.represent(a))), s)
            case TBuild(n, f, s):
                return self.add(ENode("build", None, (self.represent(n), self.represent(f))), s)
            case TIndex(a, i, s):
                return self.add(ENode("idx", None, (self.represent(a), self.represent(i))), s)
            case TIFold(n, z, f, s):
                return self.add(
                    ENode("ifold", None, (self.represent(n), self.represent(z), self.represent(f))), s
                )
            case TTup(a, b, s):
                return self.add(ENode("tup", None, (self.represent(a), self.represent(b))), s)
            case TFst(a, s):
                return self.add(ENode("fst", None, (self.represent(a),)), s)
            case TSnd(a, s):
                return self.add(ENode("snd", None, (self.represent(a),)), s)
            case TCall(name, args, s):
                return self.add(ENode("call", name, tuple(self.represent(a) for a in args)), s)
        raise EGraphError(f"cannot represent {t!r}")

    # -- extraction --------------------------------------------------------------

    def min_sizes(self, prefer_redex_free: bool = False) -> dict[ClassId, tuple]:
        """Smallest member per class with a deterministic node choice.

        With prefer_redex_free the metric is (beta-redex count, size) ordered
        lexicographically: representatives feeding substitution and shift
        witnesses should not re-embed redexes, or fused terms keep hiding the
        idiom shapes the patterns look for. The plain metric is pure AST size.
        """
        best: dict[ClassId, tuple] = {}

        def is_redex(node: ENode) -> bool:
            if node.kind != "app":
                return False
            fcls = self.classes.get(self.find(node.children[0]))
            return fcls is not None and any(n.kind == "lam" for n in fcls.nodes)

        changed = True
        while changed:
            changed = False
            for cid in sorted(self.classes):
                for node in self.classes[cid].nodes:
                    if prefer_redex_free:
                        total = (1 if is_redex(node) else 0, 1)
                    else:
                        total = (0, 1)
                    ok = True
                    for c in node.children:
                        got = best.get(self.find(c))
                        if got is None:
                            ok = False
                            break
                        total = (total[0] + got[0][0], total[1] + got[0][1])
                    if not ok:
                        continue
                    cur = best.get(cid)
                    if cur is None or (total, node.order_key()) < (cur[0], cur[1].order_key()):
                        best[cid] = (total, node)
                        changed = True
        return best

    def node_to_texpr(self, node: ENode, cls_sort: Sort, child_fn: Callable[[ClassId], TExpr]) -> TExpr:
        k = node.kind
        if k == "var":
            return TVar(node.payload[0], node.payload[1])
        if k == "numlit":
            return TNumLit(node.payload)
        if k == "sizelit":
            return TSizeLit(node.payload)
        if k == "sizesym":
            return TSizeSym(node.payload)
        kids = [child_fn(c) for c in node.children]
        if k == "lam":
            return TLam(kids[0], node.payload, cls_sort)
        if k == "app":
            return TApp(kids[0], kids[1], cls_sort)
        if k == "build":
            return TBuild(kids[0], kids[1], cls_sort)
        if k == "idx":
            return TIndex(kids[0], kids[1], cls_sort)
        if k == "ifold":
            return TIFold(kids[0], kids[1], kids[2], cls_sort)
        if k == "tup":
            return TTup(kids[0], kids[1], cls_sort)
        if k == "fst":
            return TFst(kids[0], cls_sort)
        if k == "snd":
            return TSnd(kids[0], cls_sort)
        if k == "call":
            return TCall(node.payload, tuple(kids), cls_sort)
        raise EGraphError(f"bad node kind {k}")

    def extract_any_typed(self, cid: ClassId, best: Optional[dict[ClassId, tuple[int, ENode]]] = None) -> TExpr:
        if best is None:
            best = self.min_sizes()
        root = self.find(cid)
        if root not in best:
            raise Unextractable(f"class {root} has no finite member")

        def go(c: ClassId) -> TExpr:
            c = self.find(c)
            _, node = best[c]
            return self.node_to_texpr(node, self.classes[c].sort, go)

        return go(root)

    def extract_any(self, cid: ClassId, best: Optional[dict[ClassId, tuple[int, ENode]]] = None) -> Expr:
        return erase(self.extract_any_typed(cid, best))

    def extract_avoiding(
        self,
        cid: ClassId,
        protected: frozenset[int],
        best: dict[ClassId, tuple[int, ENode]],
        _memo: Optional[dict] = None,
    ) -> Optional[TExpr]:
        """A member expression none of whose free indices lie in `protected`,
        or None. Prefers small members; the protected set shifts under
        binders. Needed to down-shift bindings of shift-annotated pattern
        variables."""
        memo: dict = _memo if _memo is not None else {}

        def go(c: ClassId, prot: frozenset[int], depth: int) -> Optional[TExpr]:
            c = self.find(c)
            if not prot:
                return self.extract_any_typed(c, best) if c in best else None
            cls = self.classes[c]
            if prot & cls.free:
                return None
            key = (c, prot)
            if key in memo:
                return memo[key]
            if depth > 64:
                return None
            memo[key] = None  # blocks cyclic derivations while in progress
            # Try the size-minimal node first, then the rest deterministically.
            first = best[c][1] if c in best else None
            ranked = sorted(cls.nodes, key=lambda n: (n != first, n.order_key()))
            for node in ranked:
                if node.kind == "var" and node.payload[0] in prot:
                    continue
                child_prot = frozenset(p + 1 for p in prot) if node.kind == "lam" else prot
                kids: list[TExpr] = []
                ok = True
                for ch in node.children:
                    sub = go(ch, child_prot, depth + 1)
                    if sub is None:
                        ok = False
                        break
                    kids.append(sub)
                if not ok:
                    continue
                it = iter(kids)
                result = self.node_to_texpr(node, cls.sort, lambda _c: next(it))
                memo[key] = result
                return result
            return None

        return go(cid, protected, 0)

    # -- debugging ----------------------------------------------------------------

    def to_dot(self) -> str:
        lines = ["digraph egraph {", "  compound=true;", "  node [shape=record];"]
        for cid in sorted(self.classes):
            cls = self.classes[cid]
            lines.append(f"  subgraph cluster_{cid} {{")
            lines.append(f'    label="c{cid}: {cls.sort!r}";')
            for i, node in enumerate(cls.nodes):
                label = node.kind if node.payload is None else f"{node.kind} {node.payload}"
                label = str(label).replace('"', "'")
                lines.append(f'    n{cid}_{i} [label="{label}"];')
            lines.append("  }")
        for cid in sorted(self.classes):
            for i, node in enumerate(self.classes[cid].nodes):
                for j, ch in enumerate(node.children):
                    tgt = self.find(ch)
                    lines.append(f"  n{cid}_{i} -> n{tgt}_0 [lhead=cluster_{tgt}, label={j}];")
        lines.append("}")
        return "\n".join(lines)

    def check_invariants(self) -> None:
        """Test support: verify hashcons and congruence after a rebuild."""
        seen: dict[ENode, ClassId] = {}
        for cid, cls in self.classes.items():
            assert self.find(cid) == cid, "non-root class retained"
            for node in cls.nodes:
                canon = self.canonicalize(node)
                assert canon == node, f"stale node {node} in class {cid}"
                other = seen.get(canon)
                assert other is None or other == cid, f"hashcons violation: {canon}"
                seen[canon] = cid
                assert self.hashcons.get(canon) is not None
                assert self.find(self.hashcons[canon]) == cid
        assert len(seen) == len(self.hashcons), "hashcons holds stale keys"
