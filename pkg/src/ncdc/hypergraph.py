"""Hypergraph form of terms, canonical isomorphism, rewriting and extraction.

Nodes carry lone objects.  Every node has exactly one producer (an edge
port or an interface input) and exactly one consumer (an edge port or an
interface output); copies and deletions are explicit ``copy`` edges.

Reindexing edges are stored in *pure* form: a broadcast of the identity
whose masks are all tiled, so that the single stride map covers every
slot.  Pure reindexings compose with ``compose_affine``.
"""

from __future__ import annotations

import copy as _copy
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable

from . import remapping as rm
from . import terms as tm
from .arraybr import ArrayObject, BroadcastedOp, OpTag, Weave
from .errors import ExtractionError, ValidationError
from .serde import _Encoder, dumps, lone_key, payload_key, value_key
from .stride import AffineStrideMap, compose_affine, identity_map
from .terms import (Block, Composed, Element, ProductObject, ProductOfMorphisms,
                    Rearrangement, Root, Term)

RULES = ("fuse", "cleanup", "yoneda")


@dataclass
class Edge:
    kind: str  # "root" | "copy" | "element"
    sources: list
    targets: list
    op: Any = None
    values: tuple = ()
    uid: str = ""
    blocks: tuple = ()

    @property
    def deterministic(self) -> bool:
        if self.kind == "element":
            return True
        if self.kind == "root":
            return bool(getattr(self.op, "deterministic", True))
        return True

    def label(self) -> str:
        if self.kind == "root":
            return payload_key(self.op)
        if self.kind == "element":
            return "|".join(value_key(v) for v in self.values)
        return ""


class Hypergraph:
    def __init__(self):
        self.nodes: dict[int, Any] = {}
        self.edges: dict[int, Edge] = {}
        self.inputs: list[int] = []
        self.outputs: list[int] = []
        self._next_node = 0
        self._next_edge = 0

    def new_node(self, obj) -> int:
        n = self._next_node
        self._next_node += 1
        self.nodes[n] = obj
        return n

    def add_edge(self, e: Edge) -> int:
        i = self._next_edge
        self._next_edge += 1
        self.edges[i] = e
        return i

    def copy(self) -> "Hypergraph":
        return _copy.deepcopy(self)

    def producers(self) -> dict[int, tuple]:
        out = {n: ("in", i) for i, n in enumerate(self.inputs)}
        for eid, e in self.edges.items():
            for k, n in enumerate(e.targets):
                out[n] = (eid, k)
        return out

    def consumers(self) -> dict[int, tuple]:
        out = {n: ("out", i) for i, n in enumerate(self.outputs)}
        for eid, e in self.edges.items():
            for k, n in enumerate(e.sources):
                out[n] = (eid, k)
        return out

    def violations(self) -> list[str]:
        problems = []
        produced: dict[int, int] = {}
        consumed: dict[int, int] = {}
        for n in self.inputs:
            produced[n] = produced.get(n, 0) + 1
        for n in self.outputs:
            consumed[n] = consumed.get(n, 0) + 1
        for e in self.edges.values():
            for n in e.targets:
                produced[n] = produced.get(n, 0) + 1
            for n in e.sources:
                consumed[n] = consumed.get(n, 0) + 1
        for n in self.nodes:
            if produced.get(n, 0) != 1:
                problems.append(f"node {n} has {produced.get(n, 0)} producers")
            if consumed.get(n, 0) != 1:
                problems.append(f"node {n} has {consumed.get(n, 0)} consumers")
        for n in list(produced) + list(consumed):
            if n not in self.nodes:
                problems.append(f"edge port refers to missing node {n}")
        return problems

    def replace_node(self, drop: int, keep: int):
        """Let whatever consumed ``drop`` consume ``keep`` instead."""
        for e in self.edges.values():
            e.sources = [keep if n == drop else n for n in e.sources]
        self.outputs = [keep if n == drop else n for n in self.outputs]
        self.inputs = [keep if n == drop else n for n in self.inputs]
        self.nodes.pop(drop, None)


# -- pure reindexings ---------------------------------------------------------------


def is_reindex(op) -> bool:
    return (isinstance(op, BroadcastedOp) and op.op.name == "id"
            and len(op.input_weaves) == 1 and len(op.output_weaves) == 1)


def is_pure(op) -> bool:
    return is_reindex(op) and not any(op.input_weaves[0].mask) and not any(op.output_weaves[0].mask)


def full_slot_map(op: BroadcastedOp) -> AffineStrideMap:
    """The gather of a reindexing written over every slot of its arrays."""
    w_in, w_out = op.input_weaves[0], op.output_weaves[0]
    eta = op.reindexings[0]
    in_arr = w_in.source(eta.cod)
    out_arr = w_out.source(op.degree)
    in_target_slots = [s for s, m in enumerate(w_in.mask) if m]
    in_tile_slots = [s for s, m in enumerate(w_in.mask) if not m]
    lam = [[0] * len(in_arr.shape) for _ in out_arr.shape]
    offset = [0] * len(in_arr.shape)
    t = p = 0
    for s, m in enumerate(w_out.mask):
        if m:
            lam[s][in_target_slots[t]] = 1
            t += 1
        else:
            for j, col in enumerate(in_tile_slots):
                lam[s][col] = eta.lam[p][j]
            p += 1
    for j, col in enumerate(in_tile_slots):
        offset[col] = eta.offset[j]
    return AffineStrideMap(out_arr.shape, in_arr.shape, lam, offset)


def pure_reindex(dtype, m: AffineStrideMap) -> BroadcastedOp:
    return BroadcastedOp(OpTag("id"), (Weave((False,) * len(m.cod), dtype, ()),),
                         (Weave((False,) * len(m.dom), dtype, ()),), (m,), m.dom)


def _purify(op):
    if is_reindex(op) and not is_pure(op):
        return pure_reindex(op.input_weaves[0].dtype, full_slot_map(op))
    return op


# -- conversion --------------------------------------------------------------------


def to_hypergraph(t: Term) -> Hypergraph:
    g = Hypergraph()
    g.inputs = [g.new_node(o) for o in t.dom()]
    g.outputs = _build(g, t, list(g.inputs), ())
    return g


def _build(g: Hypergraph, t: Term, ins: list[int], blocks: tuple) -> list[int]:
    if isinstance(t, Composed):
        for p in t.parts:
            ins = _build(g, p, ins, blocks)
        return ins
    if isinstance(t, ProductOfMorphisms):
        out, start = [], 0
        for p in t.parts:
            n = len(p.dom())
            out += _build(g, p, ins[start:start + n], blocks)
            start += n
        return out
    if isinstance(t, Block):
        return _build(g, t.body, ins, blocks + ((t.tag, t.repeat),))
    if isinstance(t, Rearrangement):
        slots: list[list[int]] = []
        for i, n in enumerate(ins):
            c = rm.count(t.mapping, i)
            if c == 1:
                slots.append([n])
            else:
                targets = [g.new_node(t.dom_family[i]) for _ in range(c)]
                g.add_edge(Edge("copy", [n], targets, blocks=blocks))
                slots.append(targets)
        used = [0] * len(ins)
        out = []
        for j in t.mapping.targets:
            out.append(slots[j][used[j]])
            used[j] += 1
        return out
    if isinstance(t, Element):
        targets = [g.new_node(o) for o in t.cod_object]
        g.add_edge(Edge("element", [], targets, values=tuple(t.values), blocks=blocks))
        return targets
    if isinstance(t, Root):
        op = _purify(t.op)
        targets = [g.new_node(o) for o in op.cod_object()]
        g.add_edge(Edge("root", list(ins), targets, op=op, uid=t.uid, blocks=blocks))
        return targets
    raise ValidationError(f"cannot convert {type(t).__name__} to a hypergraph")


# -- canonical form ---------------------------------------------------------------


def _traverse(g: Hypergraph, start_nodes: list[int], start_edges: list[int],
              prod: dict, cons: dict) -> tuple[list[int], list[int]]:
    node_order: dict[int, int] = {}
    edge_order: dict[int, int] = {}
    queue: deque = deque()

    def see_node(n):
        if n not in node_order:
            node_order[n] = len(node_order)
            queue.append(("n", n))

    def see_edge(e):
        if e not in edge_order:
            edge_order[e] = len(edge_order)
            queue.append(("e", e))

    for n in start_nodes:
        see_node(n)
    for e in start_edges:
        see_edge(e)
    while queue:
        kind, x = queue.popleft()
        if kind == "n":
            for link in (prod.get(x), cons.get(x)):
                if link is not None and link[0] not in ("in", "out"):
                    see_edge(link[0])
        else:
            e = g.edges[x]
            for n in e.sources:
                see_node(n)
            for n in e.targets:
                see_node(n)
    return list(node_order), list(edge_order)


def _encode(g: Hypergraph, nodes: list[int], edges: list[int], keys: dict) -> tuple:
    idx = {n: i for i, n in enumerate(nodes)}
    node_part = tuple(keys["node"][n] for n in nodes)
    edge_part = tuple((g.edges[e].kind, keys["edge"][e],
                       tuple(idx[n] for n in g.edges[e].sources),
                       tuple(idx[n] for n in g.edges[e].targets),
                       repr(g.edges[e].blocks)) for e in edges)
    return node_part, edge_part


def canonical(g: Hypergraph) -> tuple[tuple, list[int], list[int]]:
    """Canonical encoding plus canonical node and edge orders."""
    prod, cons = g.producers(), g.consumers()
    keys = {"node": {n: lone_key(o) for n, o in g.nodes.items()},
            "edge": {e: g.edges[e].label() for e in g.edges}}
    nodes, edges = _traverse(g, list(g.inputs) + list(g.outputs), [], prod, cons)
    node_part, edge_part = _encode(g, nodes, edges, keys)
    anchored = (node_part, edge_part,
                tuple(nodes.index(n) for n in g.inputs), tuple(nodes.index(n) for n in g.outputs))
    rest = [e for e in sorted(g.edges) if e not in set(edges)]
    components = []
    seen: set[int] = set()
    for e in rest:
        if e in seen:
            continue
        comp_nodes, comp_edges = _traverse(g, [], [e], prod, cons)
        seen.update(comp_edges)
        best = None
        for start in comp_edges:
            cn, ce = _traverse(g, [], [start], prod, cons)
            enc = _encode(g, cn, ce, keys)
            if best is None or enc < best[0]:
                best = (enc, cn, ce)
        components.append(best)
    components.sort(key=lambda c: c[0])
    for _, cn, ce in components:
        nodes += cn
        edges += ce
    return (anchored, tuple(c[0] for c in components)), nodes, edges


def iso_check(a: Hypergraph, b: Hypergraph) -> bool:
    return canonical(a)[0] == canonical(b)[0]


# -- slot splitting ----------------------------------------------------------------


def _split_known_cod(rho: AffineStrideMap, mask: tuple) -> tuple | None:
    """Split a gather into an identity on ``mask``'s targets and a map on the rest.

    ``mask`` describes the codomain.  Returns (dom mask, theta) where
    theta maps the remaining domain slots to the tiled codomain slots.
    """
    rows: list[int] = []
    for s, m in enumerate(mask):
        if not m:
            continue
        col = [rho.lam[r][s] for r in range(len(rho.dom))]
        nz = [r for r, x in enumerate(col) if x]
        if len(nz) != 1 or col[nz[0]] != 1 or rho.offset[s] != 0:
            return None
        r = nz[0]
        if sum(1 for x in rho.lam[r] if x) != 1 or rho.dom[r] != rho.cod[s]:
            return None
        rows.append(r)
    if rows != sorted(rows) or len(set(rows)) != len(rows):
        return None
    tile_rows = [r for r in range(len(rho.dom)) if r not in rows]
    tile_cols = [s for s, m in enumerate(mask) if not m]
    dom_mask = tuple(r in rows for r in range(len(rho.dom)))
    theta = AffineStrideMap(tuple(rho.dom[r] for r in tile_rows),
                            tuple(rho.cod[s] for s in tile_cols),
                            [[rho.lam[r][s] for s in tile_cols] for r in tile_rows],
                            [rho.offset[s] for s in tile_cols])
    return dom_mask, theta


def _split_known_dom(rho: AffineStrideMap, mask: tuple) -> tuple | None:
    """As ``_split_known_cod`` but with the mask on the domain side."""
    cols: list[int] = []
    for r, m in enumerate(mask):
        if not m:
            continue
        row = rho.lam[r]
        nz = [s for s, x in enumerate(row) if x]
        if len(nz) != 1 or row[nz[0]] != 1:
            return None
        s = nz[0]
        if rho.offset[s] != 0 or rho.dom[r] != rho.cod[s]:
            return None
        if sum(1 for rr in range(len(rho.dom)) if rho.lam[rr][s]) != 1:
            return None
        cols.append(s)
    if cols != sorted(cols) or len(set(cols)) != len(cols):
        return None
    tile_rows = [r for r, m in enumerate(mask) if not m]
    tile_cols = [s for s in range(len(rho.cod)) if s not in cols]
    cod_mask = tuple(s in cols for s in range(len(rho.cod)))
    theta = AffineStrideMap(tuple(rho.dom[r] for r in tile_rows),
                            tuple(rho.cod[s] for s in tile_cols),
                            [[rho.lam[r][s] for s in tile_cols] for r in tile_rows],
                            [rho.offset[s] for s in tile_cols])
    return cod_mask, theta


def _lift_to_slots(w: Weave, theta: AffineStrideMap, dom_mask: tuple) -> AffineStrideMap:
    """Full-slot map from ``(dom_mask, theta.dom)`` arrays to ``(w, theta.cod)`` arrays."""
    dom_w = Weave(dom_mask, w.dtype, w.target_axes)
    return full_slot_map(BroadcastedOp(OpTag("id"), (Weave(w.mask, w.dtype, w.target_axes),),
                                       (dom_w,), (theta,), theta.dom))


def _canonical_mask(w: Weave, n_tiles: int) -> tuple:
    return (True,) * len(w.target_axes) + (False,) * n_tiles


# -- rule helpers -------------------------------------------------------------


def _broadcast_edge(e: Edge) -> bool:
    return e.kind == "root" and isinstance(e.op, BroadcastedOp)


def _absorb(g: Hypergraph, fid: int, cons: dict) -> bool:
    """Move pure reindexings that read every output of ``fid`` into its reindexings."""
    f = g.edges[fid]
    if not _broadcast_edge(f) or is_reindex(f.op) or not f.deterministic or not f.targets:
        return False
    op: BroadcastedOp = f.op
    plan = []
    common = None
    for j, n in enumerate(f.targets):
        c = cons.get(n)
        if c is None or c[0] == "out":
            return False
        r = g.edges[c[0]]
        if not (r.kind == "root" and is_pure(r.op)) or r.blocks != f.blocks:
            return False
        split = _split_known_cod(r.op.reindexings[0], op.output_weaves[j].mask)
        if split is None:
            return False
        dom_mask, theta = split
        if common is None:
            common = theta
        elif theta != common:
            return False
        plan.append((c[0], dom_mask))
    theta = common
    new_reidx = tuple(compose_affine(theta, eta) for eta in op.reindexings)
    new_outs = tuple(Weave(m, w.dtype, w.target_axes)
                     for (_, m), w in zip(plan, op.output_weaves))
    f.op = BroadcastedOp(op.op, op.input_weaves, new_outs, new_reidx, theta.dom)
    old = list(f.targets)
    f.targets = [g.edges[rid].targets[0] for rid, _ in plan]
    for (rid, _), n in zip(plan, old):
        del g.edges[rid]
        g.nodes.pop(n, None)
    return True


def _pull_out(g: Hypergraph, fid: int) -> bool:
    """Split non-identity reindexings of ``fid`` into reindex edges before it."""
    f = g.edges[fid]
    if not _broadcast_edge(f) or is_reindex(f.op):
        return False
    op: BroadcastedOp = f.op
    changed = False
    weaves, reidx = list(op.input_weaves), list(op.reindexings)
    for i, (w, eta) in enumerate(zip(op.input_weaves, op.reindexings)):
        if eta.is_identity() and eta.cod == op.degree:
            continue
        new_mask = _canonical_mask(w, len(op.degree))
        rho = _lift_to_slots(w, eta, new_mask)
        node = g.new_node(ArrayObject(w.dtype, rho.dom))
        g.add_edge(Edge("root", [f.sources[i]], [node], op=pure_reindex(w.dtype, rho),
                        uid=f"{f.uid}:{i}", blocks=f.blocks))
        f.sources[i] = node
        weaves[i] = Weave(new_mask, w.dtype, w.target_axes)
        reidx[i] = identity_map(op.degree)
        changed = True
    if changed:
        f.op = BroadcastedOp(op.op, tuple(weaves), op.output_weaves, tuple(reidx), op.degree)
    return changed


def _push_in(g: Hypergraph, fid: int, prod: dict) -> bool:
    """Inverse of ``_pull_out``: fold pure reindex edges feeding ``fid`` into it."""
    f = g.edges[fid]
    if not _broadcast_edge(f) or is_reindex(f.op):
        return False
    op: BroadcastedOp = f.op
    changed = False
    weaves, reidx = list(op.input_weaves), list(op.reindexings)
    for i, n in enumerate(list(f.sources)):
        p = prod.get(n)
        if p is None or p[0] == "in":
            continue
        r = g.edges[p[0]]
        if not (r.kind == "root" and is_pure(r.op)) or r.blocks != f.blocks:
            continue
        split = _split_known_dom(r.op.reindexings[0], weaves[i].mask)
        if split is None:
            continue
        cod_mask, theta = split
        if theta.dom != reidx[i].cod:
            continue
        reidx[i] = compose_affine(reidx[i], theta)
        weaves[i] = Weave(cod_mask, weaves[i].dtype, weaves[i].target_axes)
        f.sources[i] = r.sources[0]
        del g.edges[p[0]]
        g.nodes.pop(n, None)
        changed = True
    if changed:
        f.op = BroadcastedOp(op.op, tuple(weaves), op.output_weaves, tuple(reidx), op.degree)
    return changed


def _unabsorb(g: Hypergraph, fid: int) -> bool:
    """Inverse of ``_absorb``: factor a shared reindexing out past the outputs."""
    f = g.edges[fid]
    if not _broadcast_edge(f) or is_reindex(f.op) or not f.op.reindexings:
        return False
    op: BroadcastedOp = f.op
    theta = op.reindexings[0]
    if any(r != theta for r in op.reindexings) or (theta.is_identity() and theta.cod == op.degree):
        return False
    base = theta.cod
    new_outs = []
    new_targets = []
    for w, n in zip(op.output_weaves, f.targets):
        canon = Weave(_canonical_mask(w, len(base)), w.dtype, w.target_axes)
        rho = _lift_to_slots(canon, theta, w.mask)
        mid = g.new_node(canon.source(base))
        g.add_edge(Edge("root", [mid], [n], op=pure_reindex(w.dtype, rho), uid=f"{f.uid}:o",
                        blocks=f.blocks))
        new_outs.append(canon)
        new_targets.append(mid)
    f.op = BroadcastedOp(op.op, op.input_weaves, tuple(new_outs),
                         tuple(identity_map(base) for _ in op.reindexings), base)
    f.targets = new_targets
    return True


def slide_toward_inputs(g: Hypergraph, fid: int) -> bool:
    """``[f,Q];[Y,eta]  ->  [X,eta];[f,P]`` around the broadcast edge ``fid``."""
    if not _absorb(g, fid, g.consumers()):
        return False
    _pull_out(g, fid)
    return True


def slide_toward_outputs(g: Hypergraph, fid: int) -> bool:
    """``[X,eta];[f,P]  ->  [f,Q];[Y,eta]`` around the broadcast edge ``fid``."""
    trial = g.copy()
    _push_in(trial, fid, trial.producers())
    if not _unabsorb(trial, fid):
        return False
    g.__dict__.update(trial.__dict__)
    return True


# -- rules ----------------------------------------------------------------------


def _rule_cleanup(g: Hypergraph) -> bool:
    cons = g.consumers()

    def is_delete(eid):
        e = g.edges.get(eid)
        return e is not None and e.kind == "copy" and not e.targets

    for eid in sorted(g.edges):
        e = g.edges[eid]
        if e.kind == "copy" and len(e.targets) == 1:
            src, dst = e.sources[0], e.targets[0]
            del g.edges[eid]
            g.replace_node(dst, src)
            return True
    for eid in sorted(g.edges):
        e = g.edges[eid]
        if e.kind != "copy" or not e.targets:
            continue
        for n in e.targets:
            c = cons.get(n)
            if c and c[0] != "out" and is_delete(c[0]):
                e.targets = [x for x in e.targets if x != n]
                del g.edges[c[0]]
                g.nodes.pop(n, None)
                return True
    for eid in sorted(g.edges):
        e = g.edges[eid]
        if e.kind == "copy" or not e.deterministic:
            continue
        links = [cons.get(n) for n in e.targets]
        if all(c and c[0] != "out" and is_delete(c[0]) for c in links):
            for c, n in zip(links, e.targets):
                del g.edges[c[0]]
                g.nodes.pop(n, None)
            for n in e.sources:
                g.add_edge(Edge("copy", [n], [], blocks=e.blocks))
            del g.edges[eid]
            return True
    return False


def _rule_fuse(g: Hypergraph) -> bool:
    for eid in sorted(g.edges):
        e = g.edges[eid]
        if e.kind == "root" and is_reindex(e.op) and not is_pure(e.op):
            e.op = _purify(e.op)
            return True
        if e.kind == "root" and is_pure(e.op) and e.op.reindexings[0].is_identity():
            del g.edges[eid]
            g.replace_node(e.targets[0], e.sources[0])
            return True
    cons = g.consumers()
    for eid in sorted(g.edges):
        e = g.edges[eid]
        if not e.targets:
            continue
        c = cons.get(e.targets[0])
        if c is None or c[0] == "out":
            continue
        nxt = g.edges[c[0]]
        if e.blocks != nxt.blocks:
            continue
        if e.kind == "root" and nxt.kind == "root" and is_pure(e.op) and is_pure(nxt.op):
            fused = compose_affine(nxt.op.reindexings[0], e.op.reindexings[0])
            mid = e.targets[0]
            nxt.op = pure_reindex(e.op.input_weaves[0].dtype, fused)
            nxt.sources = list(e.sources)
            del g.edges[eid]
            g.nodes.pop(mid, None)
            return True
        if (e.kind == "root" and nxt.kind == "root" and isinstance(e.op, AffineStrideMap)
                and isinstance(nxt.op, AffineStrideMap) and nxt.sources == e.targets
                and all(cons.get(n, (None,))[0] == c[0] for n in e.targets)):
            fused = compose_affine(e.op, nxt.op)
            for n in e.targets:
                g.nodes.pop(n, None)
            nxt.op = fused
            nxt.sources = list(e.sources)
            del g.edges[eid]
            return True
    for eid in sorted(g.edges):
        e = g.edges[eid]
        if e.kind != "copy":
            continue
        for k, n in enumerate(e.targets):
            c = cons.get(n)
            if c and c[0] != "out" and g.edges[c[0]].kind == "copy" and \
                    g.edges[c[0]].blocks == e.blocks:
                inner = g.edges[c[0]]
                e.targets = e.targets[:k] + inner.targets + e.targets[k + 1:]
                del g.edges[c[0]]
                g.nodes.pop(n, None)
                return True
    return False


def _rule_yoneda(g: Hypergraph) -> bool:
    cons = g.consumers()
    for eid in sorted(g.edges):
        if _absorb(g, eid, cons):
            return True
    for eid in sorted(g.edges):
        if _pull_out(g, eid):
            return True
    return False


_RULE_FUNCS = {"cleanup": _rule_cleanup, "fuse": _rule_fuse, "yoneda": _rule_yoneda}
_PRIORITY = ("cleanup", "fuse", "yoneda")


@dataclass
class RewriteResult:
    graph: Hypergraph
    steps: int
    exhausted: bool
    applied: list = field(default_factory=list)


def rewrite(g: Hypergraph, rules: Iterable[str] = RULES, max_steps: int = 1000) -> RewriteResult:
    rules = list(rules)
    unknown = [r for r in rules if r not in _RULE_FUNCS]
    if unknown:
        raise ValidationError(f"unknown rewrite rules {unknown}; choose from {list(RULES)}")
    order = [r for r in _PRIORITY if r in rules]
    g = g.copy()
    applied: list[str] = []
    while True:
        if len(applied) >= max_steps:
            probe = g.copy()
            exhausted = any(_RULE_FUNCS[r](probe) for r in order)
            return RewriteResult(g, len(applied), exhausted, applied)
        for r in order:
            if _RULE_FUNCS[r](g):
                applied.append(r)
                break
        else:
            return RewriteResult(g, len(applied), False, applied)


# -- extraction -------------------------------------------------------------------


def _edge_term(g: Hypergraph, e: Edge) -> Term:
    if e.kind == "root":
        t: Term = Root(e.op, e.uid) if e.uid else Root(e.op)
    elif e.kind == "element":
        t = Element(tuple(e.values), ProductObject(g.nodes[n] for n in e.targets))
    else:
        t = Rearrangement(rm.copy_remapping(len(e.targets)), (g.nodes[e.sources[0]],))
    for tag, repeat in reversed(e.blocks):
        t = Block(t, tag, repeat)
    return t


def extract(g: Hypergraph) -> Term:
    problems = g.violations()
    if problems:
        raise ExtractionError("; ".join(problems))
    prod = g.producers()
    _, node_order, edge_order = canonical(g)
    rank = {e: i for i, e in enumerate(edge_order)}
    level: dict[int, int] = {}
    visiting: set[int] = set()

    def edge_level(eid: int) -> int:
        if eid in level:
            return level[eid]
        if eid in visiting:
            raise ExtractionError("graph has a cycle")
        visiting.add(eid)
        lv = 0
        for n in g.edges[eid].sources:
            p = prod[n]
            if p[0] != "in":
                lv = max(lv, edge_level(p[0]) + 1)
        visiting.discard(eid)
        level[eid] = lv
        return lv

    for eid in g.edges:
        edge_level(eid)
    wires = list(g.inputs)
    steps: list[Term] = []
    for lv in sorted(set(level.values())):
        batch = sorted((e for e in g.edges if level[e] == lv), key=rank.__getitem__)
        consumed = {n for e in batch for n in g.edges[e].sources}
        passing = [n for n in wires if n not in consumed]
        order = [n for e in batch for n in g.edges[e].sources] + passing
        pos = {n: i for i, n in enumerate(wires)}
        steps.append(Rearrangement(rm.Remapping(tuple(pos[n] for n in order), len(wires)),
                                   tuple(g.nodes[n] for n in wires)))
        parts = [_edge_term(g, g.edges[e]) for e in batch]
        parts.append(tm.identity([g.nodes[n] for n in passing]))
        steps.append(tm.product(parts))
        wires = [n for e in batch for n in g.edges[e].targets] + passing
    pos = {n: i for i, n in enumerate(wires)}
    if sorted(pos[n] for n in g.outputs) != list(range(len(wires))):
        raise ExtractionError("outputs do not consume every remaining wire exactly once")
    steps.append(Rearrangement(rm.Remapping(tuple(pos[n] for n in g.outputs), len(wires)),
                               tuple(g.nodes[n] for n in wires)))
    return tm.compose(*steps)


# -- dump --------------------------------------------------------------------------


def to_json(g: Hypergraph) -> dict:
    _, nodes, edges = canonical(g)
    idx = {n: i for i, n in enumerate(nodes)}
    enc = _Encoder()
    out_edges = []
    for i, eid in enumerate(edges):
        e = g.edges[eid]
        item = {"id": i, "kind": e.kind, "sources": [idx[n] for n in e.sources],
                "targets": [idx[n] for n in e.targets],
                "blocks": [{"tag": t, "repeat": r} for t, r in e.blocks]}
        if e.kind == "root":
            item["op"] = enc.payload(e.op)
            item["label"] = e.op.label
        elif e.kind == "element":
            item["values"] = [enc.value(v) for v in e.values]
        out_edges.append(item)
    return {"nodes": [{"id": i, "type": enc.lone(g.nodes[n])} for i, n in enumerate(nodes)],
            "edges": out_edges, "inputs": [idx[n] for n in g.inputs],
            "outputs": [idx[n] for n in g.outputs], "uids": enc.uids}


def dump(g: Hypergraph) -> bytes:
    return dumps(to_json(g))
