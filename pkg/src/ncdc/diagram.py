"""Deterministic SVG rendering of terms.

Composition runs left to right and products stack top to bottom with a
dashed separator between parts.  Each axis is one wire, outer axes on top;
the datatype wire is drawn only for non-real arrays, scalars, or when
``show_dtypes`` is set.  Every drawn construct carries a class attribute
(``op``, ``reindex``, ``element``, ``block``, ``separator``, ``wire-label``)
so that renders can be audited by counting tags.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from html import escape

from .arraybr import ArrayObject, BroadcastedOp
from .hypergraph import is_reindex
from .remapping import count
from .stride import Axis
from .terms import (Block, Composed, Element, ProductObject, ProductOfMorphisms,
                    Rearrangement, Root, Term)

ROW = 18
SEG_GAP = 8
OP_WIDTH = 96
REARRANGE_WIDTH = 44
JOG = 24
BLOCK_PAD = 10
PART_GAP = 12
MARGIN = 70


def _n(x: float) -> str:
    return f"{x:.1f}".rstrip("0").rstrip(".") if x != int(x) else str(int(x))


def wires_of(o, show_dtypes: bool = False) -> list[str]:
    """Wire labels of one lone object, top to bottom."""
    if isinstance(o, Axis):
        return [o.display]
    if isinstance(o, ArrayObject):
        labels = [a.display for a in reversed(o.shape)]
        if show_dtypes or o.dtype.kind != "real" or not o.shape:
            labels.append(str(o.dtype))
        return labels
    return [str(o)]


def anchors(obj: ProductObject, show_dtypes: bool) -> tuple[list[float], list[str], list[int]]:
    ys, labels, owner = [], [], []
    y = 0.0
    for k, o in enumerate(obj):
        if k:
            y += SEG_GAP
        for label in wires_of(o, show_dtypes):
            ys.append(y + ROW / 2)
            labels.append(label)
            owner.append(k)
            y += ROW
    return ys, labels, owner


def _extent(ys: list[float]) -> float:
    return ys[-1] + ROW / 2 if ys else 0.0


@dataclass
class Layout:
    width: float
    height: float
    dom: list = field(default_factory=list)
    cod: list = field(default_factory=list)
    items: list = field(default_factory=list)


def _wire(x1, y1, x2, y2) -> str:
    if y1 == y2:
        return f'<path class="wire" d="M{_n(x1)},{_n(y1)} H{_n(x2)}"/>'
    mx = (x1 + x2) / 2
    return (f'<path class="wire" d="M{_n(x1)},{_n(y1)} C{_n(mx)},{_n(y1)} {_n(mx)},{_n(y2)} '
            f'{_n(x2)},{_n(y2)}"/>')


def _translate(items: list[str], dx: float, dy: float) -> str:
    body = "".join(items)
    return f'<g transform="translate({_n(dx)},{_n(dy)})">{body}</g>'


class _Renderer:
    def __init__(self, show_dtypes: bool):
        self.show_dtypes = show_dtypes

    def layout(self, t: Term) -> Layout:
        if isinstance(t, Composed):
            return self.composed(t)
        if isinstance(t, ProductOfMorphisms):
            return self.product(t)
        if isinstance(t, Block):
            return self.block(t)
        if isinstance(t, Rearrangement):
            return self.rearrangement(t)
        if isinstance(t, Element):
            return self.element(t)
        return self.root(t)

    def root(self, t: Root) -> Layout:
        dom, _, _ = anchors(t.dom(), self.show_dtypes)
        cod, _, _ = anchors(t.cod(), self.show_dtypes)
        h = max(_extent(dom), _extent(cod), ROW)
        w = OP_WIDTH
        x0, x1 = 12, w - 12
        items = [_wire(0, y, x0, y) for y in dom] + [_wire(x1, y, w, y) for y in cod]
        op = t.op
        label = escape(op.label)
        if isinstance(op, BroadcastedOp) and is_reindex(op):
            d = 10
            pts = [(x0, h / 2), (x0 + d, 0), (x1 - d, 0), (x1, h / 2), (x1 - d, h), (x0 + d, h)]
            items.append('<polygon class="reindex" points="' +
                         " ".join(f"{_n(x)},{_n(y)}" for x, y in pts) + '"/>')
        else:
            cls = "op learned" if getattr(op, "learned", False) else "op"
            stroke = 3 if getattr(op, "learned", False) else 1
            items.append(f'<rect class="{cls}" x="{x0}" y="0" width="{_n(x1 - x0)}" '
                         f'height="{_n(h)}" stroke-width="{stroke}"/>')
        weight = ' font-weight="bold"' if getattr(op, "learned", False) else ""
        items.append(f'<text class="op-label" x="{_n(w / 2)}" y="{_n(h / 2 + 4)}" '
                     f'text-anchor="middle"{weight}>{label}</text>')
        return Layout(w, h, dom, cod, items)

    def element(self, t: Element) -> Layout:
        cod, _, _ = anchors(t.cod(), self.show_dtypes)
        h = max(_extent(cod), ROW)
        w = 60
        pts = [(8, h / 2), (22, 0), (w - 10, 0), (w - 10, h), (22, h)]
        items = ['<polygon class="element" points="' +
                 " ".join(f"{_n(x)},{_n(y)}" for x, y in pts) + '"/>']
        items += [_wire(w - 10, y, w, y) for y in cod]
        return Layout(w, h, [], cod, items)

    def rearrangement(self, t: Rearrangement) -> Layout:
        dom, _, dom_owner = anchors(t.dom(), self.show_dtypes)
        cod, _, cod_owner = anchors(t.cod(), self.show_dtypes)
        w = REARRANGE_WIDTH
        starts: dict[int, int] = {}
        for i, k in enumerate(dom_owner):
            starts.setdefault(k, i)
        cod_starts: dict[int, int] = {}
        for i, k in enumerate(cod_owner):
            cod_starts.setdefault(k, i)
        items = []
        for j, src in enumerate(t.mapping.targets):
            n = len(wires_of(t.dom_family[src], self.show_dtypes))
            for k in range(n):
                items.append(_wire(0, dom[starts[src] + k], w, cod[cod_starts[j] + k]))
        for i in range(len(t.dom_family)):
            if count(t.mapping, i) == 0:
                n = len(wires_of(t.dom_family[i], self.show_dtypes))
                for k in range(n):
                    y = dom[starts[i] + k]
                    items.append(_wire(0, y, w / 3, y))
                    items.append(f'<circle class="discard" cx="{_n(w / 3)}" cy="{_n(y)}" r="2.5"/>')
        h = max(_extent(dom), _extent(cod), 0.0)
        return Layout(w, h, dom, cod, items)

    def composed(self, t: Composed) -> Layout:
        parts = [self.layout(p) for p in t.parts]
        items: list[str] = []
        x = 0.0
        prev: Layout | None = None
        for lay in parts:
            if prev is not None and prev.cod != lay.dom:
                items += [_wire(x, a, x + JOG, b) for a, b in zip(prev.cod, lay.dom)]
                x += JOG
            items.append(_translate(lay.items, x, 0))
            x += lay.width
            prev = lay
        h = max(p.height for p in parts)
        return Layout(x, h, parts[0].dom, parts[-1].cod, items)

    def product(self, t: ProductOfMorphisms) -> Layout:
        parts = [self.layout(p) for p in t.parts]
        w = max([p.width for p in parts] + [0])
        items, dom, cod = [], [], []
        y = 0.0
        for i, lay in enumerate(parts):
            if i:
                sep = y + PART_GAP / 2
                items.append(f'<line class="separator" x1="0" y1="{_n(sep)}" x2="{_n(w)}" '
                             f'y2="{_n(sep)}" stroke-dasharray="4,3"/>')
                y += PART_GAP
            items.append(_translate(lay.items, 0, y))
            items += [_wire(lay.width, y + c, w, y + c) for c in lay.cod if lay.width < w]
            dom += [y + d for d in lay.dom]
            cod += [y + c for c in lay.cod]
            y += max(lay.height, ROW if not (lay.dom or lay.cod) else 0)
        return Layout(w, y, dom, cod, items)

    def block(self, t: Block) -> Layout:
        body = self.layout(t.body)
        w, h = body.width + 2 * BLOCK_PAD, body.height + 2 * BLOCK_PAD + 10
        tag = escape(t.tag + (f" x{t.repeat}" if t.repeat is not None else ""))
        dy = BLOCK_PAD + 10
        items = [f'<rect class="block" x="2" y="2" width="{_n(w - 4)}" height="{_n(h - 4)}" rx="6"/>',
                 f'<text class="block-label" x="8" y="14">{tag}</text>']
        items += [_wire(0, dy + d, BLOCK_PAD, dy + d) for d in body.dom]
        items += [_wire(BLOCK_PAD + body.width, dy + c, w, dy + c) for c in body.cod]
        items.append(_translate(body.items, BLOCK_PAD, dy))
        return Layout(w, h, [dy + d for d in body.dom], [dy + c for c in body.cod], items)


STYLE = (".wire{fill:none;stroke:#222;stroke-width:1.2}"
         ".op{fill:#f4f4f4;stroke:#222}.reindex{fill:#e8eef8;stroke:#224}"
         ".element{fill:#f8eee0;stroke:#432}.block{fill:#eef6ee;stroke:#9a9;opacity:.8}"
         ".separator{stroke:#888}.discard{fill:#222}"
         "text{font-family:monospace;font-size:11px}")


def render_svg(t: Term, show_dtypes: bool = False) -> str:
    r = _Renderer(show_dtypes)
    lay = r.layout(t)
    _, dom_labels, _ = anchors(t.dom(), show_dtypes)
    _, cod_labels, _ = anchors(t.cod(), show_dtypes)
    width = lay.width + 2 * MARGIN
    height = max(lay.height, ROW) + 2 * ROW
    items = []
    for y, label in zip(lay.dom, dom_labels):
        items.append(f'<text class="wire-label" x="{_n(MARGIN - 4)}" y="{_n(ROW + y + 4)}" '
                     f'text-anchor="end">{escape(label)}</text>')
        items.append(_wire(MARGIN - 2, ROW + y, MARGIN, ROW + y))
    for y, label in zip(lay.cod, cod_labels):
        x = MARGIN + lay.width
        items.append(_wire(x, ROW + y, x + 2, ROW + y))
        items.append(f'<text class="wire-label" x="{_n(x + 4)}" y="{_n(ROW + y + 4)}">'
                     f'{escape(label)}</text>')
    body = _translate(lay.items, MARGIN, ROW)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(width)}" height="{_n(height)}" '
            f'viewBox="0 0 {_n(width)} {_n(height)}"><style>{STYLE}</style>'
            f'{body}{"".join(items)}</svg>\n')


def expected_counts(t: Term, show_dtypes: bool = False) -> dict[str, int]:
    """Element counts a render of ``t`` must contain, derived from the term alone."""
    from .terms import walk

    counts = {"op": 0, "reindex": 0, "element": 0, "block": 0, "separator": 0, "wire-label": 0}
    for s in walk(t):
        if isinstance(s, Root):
            if isinstance(s.op, BroadcastedOp) and is_reindex(s.op):
                counts["reindex"] += 1
            else:
                counts["op"] += 1
        elif isinstance(s, Element):
            counts["element"] += 1
        elif isinstance(s, Block):
            counts["block"] += 1
        elif isinstance(s, ProductOfMorphisms):
            counts["separator"] += len(s.parts) - 1
    counts["wire-label"] = (len(anchors(t.dom(), show_dtypes)[0])
                            + len(anchors(t.cod(), show_dtypes)[0]))
    return counts
