"""Autoaligned composition and configuration.

``compose_aligned(f, g)`` glues ``f`` to ``g`` even when their interfaces
only agree up to naming, batch axes and trailing arguments:

* axes are paired per segment starting from the innermost end, and the
  paired uids are merged (the ``f`` side keeps its uid);
* surplus outer axes on one side batch-lift the other side;
* a side with fewer segments is padded with identities at the bottom.
"""

from __future__ import annotations

import dataclasses
from typing import Mapping

from . import terms as tm
from .arraybr import ArrayObject, BroadcastedOp, batch_lift
from .errors import AlignmentError, CaptureError, ConfigurationError, SubstitutionError
from .stride import AffineStrideMap, Axis
from .terms import Root, Term


class Configuration(dict):
    """Axis uid -> size."""

    def __init__(self, sizes: Mapping[str, int] | None = None):
        super().__init__()
        for uid, size in (sizes or {}).items():
            if isinstance(size, bool) or not isinstance(size, int) or size < 1:
                raise ConfigurationError(f"size for {uid!r} must be an integer >= 1, got {size!r}")
            self[uid] = size


def _segment_axes(obj) -> tuple:
    return tuple(obj.iter_axes())


class _Unifier:
    def __init__(self):
        self.parent: dict[str, str] = {}
        self.axis: dict[str, Axis] = {}

    def add(self, a: Axis):
        if a.uid not in self.parent:
            self.parent[a.uid] = a.uid
            self.axis[a.uid] = a

    def find(self, uid: str) -> str:
        while self.parent[uid] != uid:
            self.parent[uid] = self.parent[self.parent[uid]]
            uid = self.parent[uid]
        return uid

    def union(self, keep: Axis, drop: Axis):
        self.add(keep)
        self.add(drop)
        rk, rd = self.find(keep.uid), self.find(drop.uid)
        if rk == rd:
            return
        a, b = self.axis[rk], self.axis[rd]
        if a.size is not None and b.size is not None and a.size != b.size:
            raise AlignmentError(f"cannot align axis {a.display} (size {a.size}) with "
                                 f"{b.display} (size {b.size})")
        self.parent[rd] = rk
        if a.size is None and b.size is not None:
            self.axis[rk] = dataclasses.replace(a, size=b.size)

    def resolve(self, a: Axis) -> Axis:
        if a.uid not in self.parent:
            return a
        return self.axis[self.find(a.uid)]


def _apply(t: Term, u: _Unifier) -> Term:
    return tm.map_axes(t, u.resolve)


def compose_aligned(f: Term, g: Term) -> Term:
    f_cod, g_dom = f.cod(), g.dom()
    shared = min(len(f_cod), len(g_dom))
    u = _Unifier()
    for s in range(shared):
        fo, go = f_cod[s], g_dom[s]
        if isinstance(fo, ArrayObject) and isinstance(go, ArrayObject) and fo.dtype != go.dtype:
            raise AlignmentError(f"segment {s}: datatype {fo.dtype} cannot meet {go.dtype}")
        for a, b in zip(_segment_axes(fo), _segment_axes(go)):
            u.union(a, b)
    f2, g2 = _apply(f, u), _apply(g, u)
    f_cod, g_dom = f2.cod(), g2.dom()

    lift_g, lift_f = set(), set()
    for s in range(shared):
        fa, ga = _segment_axes(f_cod[s]), _segment_axes(g_dom[s])
        lift_g.add(fa[len(ga):])
        lift_f.add(ga[len(fa):])
    needs_g = {p for p in lift_g if p}
    needs_f = {p for p in lift_f if p}
    if needs_g and needs_f:
        raise AlignmentError("both sides need batch axes from the other; "
                             "lift one side explicitly with batch_lift")
    for needs, side in ((needs_g, "second"), (needs_f, "first")):
        if needs and (len(needs) > 1 or len(lift_g if side == "second" else lift_f) > 1):
            raise AlignmentError(f"the {side} term would need different batch axes per "
                                 "segment; lift it explicitly with batch_lift")
    if needs_g:
        g2 = batch_lift(g2, next(iter(needs_g)))
    if needs_f:
        f2 = batch_lift(f2, next(iter(needs_f)))

    f_cod, g_dom = f2.cod(), g2.dom()
    if len(f_cod) < len(g_dom):
        f2 = tm.product([f2, tm.identity(g_dom[len(f_cod):])])
    elif len(g_dom) < len(f_cod):
        g2 = tm.product([g2, tm.identity(f_cod[len(g_dom):])])
    try:
        return tm.compose(f2, g2)
    except Exception as exc:
        raise AlignmentError(f"interfaces still differ after alignment: {exc}") from exc


def stride_maps(t: Term):
    for s in tm.walk(t):
        if isinstance(s, Root):
            if isinstance(s.op, AffineStrideMap):
                yield s.op
            elif isinstance(s.op, BroadcastedOp):
                yield from s.op.reindexings


def check_capture(t: Term) -> Term:
    for m in stride_maps(t):
        m.check_capture()
    return t


def configure(t: Term, c: Mapping[str, int]) -> Term:
    c = Configuration(c)
    if not c:
        return t
    free = {uid for uid, _ in tm.scan_free_uids(t)}
    known = tm.axes_by_uid(t)
    for uid in c:
        if uid not in known:
            raise ConfigurationError(f"unknown uid {uid!r}")
        if uid not in free:
            raise ConfigurationError(f"axis {uid!r} is already configured "
                                     f"(size {known[uid].size})")
    try:
        out = tm.substitute(t, dict(c))
    except SubstitutionError as exc:
        raise ConfigurationError(str(exc)) from exc
    return check_capture(out)
