"""An independent reader for term documents, written from docs/schema.md alone.

It shares no code with ``ncdc.serde``: it validates against the JSON Schema,
resolves uids, recomputes every term's domain and codomain from the
documented rules, and returns a neutral nested description.
"""

import json
import re
from pathlib import Path

import jsonschema

SCHEMA = json.loads((Path(__file__).resolve().parents[1] / "src" / "ncdc" / "schema"
                     / "term.schema.json").read_text())


class Invalid(Exception):
    pass


def _dtype(s):
    if s in ("real", "int") or re.fullmatch(r"finite\([1-9][0-9]*\)", s) \
            or re.fullmatch(r"quantized\(.+\)", s):
        return s
    raise Invalid(f"bad dtype {s!r}")


class Reader:
    def __init__(self, doc):
        jsonschema.validate(doc, SCHEMA)
        major = int(doc["version"].split(".")[0])
        if major > 1:
            raise Invalid("newer major version")
        self.uids = doc["uids"]
        self.doc = doc

    def axis(self, uid):
        entry = self.uids.get(uid)
        if entry is None or entry["kind"] != "axis":
            raise Invalid(f"dangling axis {uid}")
        return (uid, entry["size"])

    def lone(self, d):
        if isinstance(d, str):
            return ("axis", self.axis(d))
        return ("array", _dtype(d["dtype"]), tuple(self.axis(u) for u in d["shape"]))

    def stride(self, d):
        dom = tuple(self.axis(u) for u in d["dom"])
        cod = tuple(self.axis(u) for u in d["cod"])
        lam = tuple(tuple(r) for r in d["lambda"])
        if len(lam) != len(dom) or any(len(r) != len(cod) for r in lam):
            raise Invalid("lambda has the wrong shape")
        if len(d["offset"]) != len(cod):
            raise Invalid("offset has the wrong length")
        return dom, cod, lam, tuple(d["offset"])

    def weave_array(self, w, tiles):
        targets = iter(self.axis(u) for u in w["targets"])
        tiles = iter(tiles)
        shape = tuple(next(targets) if m else next(tiles) for m in w["mask"])
        return ("array", _dtype(w["dtype"]), shape)

    def root(self, d):
        op = d["op"]
        if self.uids.get(d["uid"], {}).get("kind") != "root":
            raise Invalid(f"dangling root {d['uid']}")
        if op["type"] == "stride":
            dom, cod, lam, off = self.stride(op)
            return (("stride", dom, cod, lam, off),
                    tuple(("axis", a) for a in dom), tuple(("axis", a) for a in cod))
        degree = tuple(self.axis(u) for u in op["degree"])
        maps = [self.stride(m) for m in op["reindexings"]]
        if any(m[0] != degree for m in maps):
            raise Invalid("reindexing does not start at the degree")
        param = op["op"]["param"]
        if param is not None:
            entry = self.uids[param]
            param = (entry["param_kind"], tuple(self.axis(u) for u in entry["axes"]),
                     entry["fan_in"])
        dom = tuple(self.weave_array(w, m[1]) for w, m in zip(op["inputs"], maps))
        cod = tuple(self.weave_array(w, degree) for w in op["outputs"])
        desc = ("broadcast", op["op"]["name"], op["op"]["fn"], param, dom, cod,
                tuple(maps), degree)
        return desc, dom, cod

    def term(self, d):
        """Return ``(description, dom, cod)``."""
        kind = d["kind"]
        if kind == "root":
            return self.root(d)
        if kind == "composed":
            parts = [self.term(p) for p in d["parts"]]
            for left, right in zip(parts, parts[1:]):
                if left[2] != right[1]:
                    raise Invalid("composition junction mismatch")
            return ("composed", tuple(p[0] for p in parts)), parts[0][1], parts[-1][2]
        if kind == "product":
            parts = [self.term(p) for p in d["parts"]]
            return (("product", tuple(p[0] for p in parts)),
                    tuple(x for p in parts for x in p[1]), tuple(x for p in parts for x in p[2]))
        if kind == "rearrangement":
            family = tuple(self.lone(o) for o in d["dom"])
            targets = tuple(d["mapping"]["targets"])
            if d["mapping"]["cod"] != len(family) or any(t >= len(family) for t in targets):
                raise Invalid("mapping does not fit its family")
            return (("rearrangement", targets, family), family,
                    tuple(family[t] for t in targets))
        if kind == "block":
            body = self.term(d["body"])
            return ("block", d["tag"], d["repeat"], body[0]), body[1], body[2]
        if kind == "element":
            cod = tuple(self.lone(o) for o in d["cod"])
            values = tuple(v if isinstance(v, int) else
                           (_dtype(v["dtype"]), tuple(v["sizes"]), tuple(v["data"]))
                           for v in d["values"])
            return ("element", values, cod), (), cod
        raise Invalid(f"unknown kind {kind}")


def read(data):
    doc = json.loads(data)
    reader = Reader(doc)
    return reader.term(doc["root"])


# -- the same description computed from library objects ----------------------------


def describe(t):
    """Description of a library term in the reader's vocabulary (no serde involved)."""
    from ncdc import terms as tm
    from ncdc.arraybr import ArrayObject, BroadcastedOp
    from ncdc.stride import AffineStrideMap, Axis

    def ax(a):
        return (a.uid, a.size)

    def lone(o):
        if isinstance(o, Axis):
            return ("axis", ax(o))
        return ("array", str(o.dtype), tuple(ax(a) for a in o.shape))

    def smap(m):
        return (tuple(ax(a) for a in m.dom), tuple(ax(a) for a in m.cod),
                tuple(tuple(r) for r in m.lam), tuple(m.offset))

    def go(t):
        if isinstance(t, tm.Root):
            op = t.op
            if isinstance(op, AffineStrideMap):
                return ("stride",) + smap(op)
            assert isinstance(op, BroadcastedOp)
            p = op.op.param
            param = None if p is None else (p.kind, tuple(ax(a) for a in p.axes), p.fan_in)
            return ("broadcast", op.op.name, op.op.fn, param,
                    tuple(lone(o) for o in t.dom()), tuple(lone(o) for o in t.cod()),
                    tuple(smap(m) for m in op.reindexings), tuple(ax(a) for a in op.degree))
        if isinstance(t, tm.Composed):
            return ("composed", tuple(go(p) for p in t.parts))
        if isinstance(t, tm.ProductOfMorphisms):
            return ("product", tuple(go(p) for p in t.parts))
        if isinstance(t, tm.Rearrangement):
            return ("rearrangement", t.mapping.targets, tuple(lone(o) for o in t.dom_family))
        if isinstance(t, tm.Block):
            return ("block", t.tag, t.repeat, go(t.body))
        values = tuple(v if isinstance(v, int) else (str(v.dtype), tuple(v.sizes),
                                                     tuple(v.data)) for v in t.values)
        return ("element", values, tuple(lone(o) for o in t.cod_object))

    return go(t), tuple(lone(o) for o in t.dom()), tuple(lone(o) for o in t.cod())
