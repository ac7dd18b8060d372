"""Canonical JSON documents for terms, tensors, configurations and graphs.

Encoding is canonical: keys sorted, no insignificant whitespace, floats in
shortest round-trip form.  Axis and parameter metadata live once in a uid
repository and are referenced by uid from the term tree.
"""

from __future__ import annotations

import json
import math
from typing import Any

from . import terms as tm
from .arraybr import ArrayObject, BroadcastedOp, OpTag, ParamRef, Weave
from .errors import SchemaError
from .remapping import Remapping
from .stride import AffineStrideMap, Axis
from .tensor import Datatype, TensorValue
from .terms import (Block, Composed, Element, ProductObject, ProductOfMorphisms,
                    Rearrangement, Root, Term)

VERSION = "1.0"
EXTENSION = ".ncd.json"


def dumps(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True,
                      allow_nan=False).encode("utf-8")


def _loads(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        return json.loads(data, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc.msg} at line {exc.lineno}", "") from exc


def _reject_constant(name):
    raise SchemaError(f"non-finite number {name} is not allowed", "")


# -- encoding -----------------------------------------------------------------


class _Encoder:
    def __init__(self):
        self.uids: dict[str, dict] = {}

    def axis(self, a: Axis) -> str:
        entry = {"kind": "axis", "display": a.name, "size": a.size}
        old = self.uids.get(a.uid)
        if old is not None and old != entry:
            if old.get("size") is None and a.size is not None:
                self.uids[a.uid] = entry
        else:
            self.uids[a.uid] = entry
        return a.uid

    def axes(self, axes) -> list[str]:
        return [self.axis(a) for a in axes]

    def lone(self, o) -> Any:
        if isinstance(o, Axis):
            return self.axis(o)
        if isinstance(o, ArrayObject):
            return {"dtype": str(o.dtype), "shape": self.axes(o.shape)}
        raise SchemaError(f"cannot encode lone object {type(o).__name__}", "")

    def stride(self, m: AffineStrideMap) -> dict:
        return {"lambda": [list(r) for r in m.lam], "offset": list(m.offset),
                "dom": self.axes(m.dom), "cod": self.axes(m.cod)}

    def weave(self, w: Weave) -> dict:
        return {"mask": list(w.mask), "dtype": str(w.dtype), "targets": self.axes(w.target_axes)}

    def param(self, p: ParamRef) -> str:
        self.uids[p.uid] = {"kind": "param", "display": p.kind, "param_kind": p.kind,
                            "axes": self.axes(p.axes), "fan_in": p.fan_in}
        return p.uid

    def payload(self, op) -> dict:
        if isinstance(op, AffineStrideMap):
            return {"type": "stride", **self.stride(op)}
        if isinstance(op, BroadcastedOp):
            tag = op.op
            return {"type": "broadcast",
                    "op": {"name": tag.name, "fn": tag.fn,
                           "param": self.param(tag.param) if tag.param else None,
                           "deterministic": tag.deterministic},
                    "inputs": [self.weave(w) for w in op.input_weaves],
                    "outputs": [self.weave(w) for w in op.output_weaves],
                    "reindexings": [self.stride(r) for r in op.reindexings],
                    "degree": self.axes(op.degree)}
        raise SchemaError(f"cannot encode root payload {type(op).__name__}", "")

    def value(self, v) -> Any:
        if isinstance(v, TensorValue):
            return encode_tensor(v)
        if isinstance(v, int) and not isinstance(v, bool):
            return v
        raise SchemaError(f"cannot encode element value {v!r}", "")

    def term(self, t: Term) -> dict:
        if isinstance(t, Root):
            self.uids[t.uid] = {"kind": "root", "display": t.op.label}
            return {"kind": "root", "uid": t.uid, "op": self.payload(t.op)}
        if isinstance(t, Composed):
            return {"kind": "composed", "parts": [self.term(p) for p in t.parts]}
        if isinstance(t, ProductOfMorphisms):
            return {"kind": "product", "parts": [self.term(p) for p in t.parts]}
        if isinstance(t, Rearrangement):
            return {"kind": "rearrangement", "mapping": encode_remapping(t.mapping),
                    "dom": [self.lone(o) for o in t.dom_family]}
        if isinstance(t, Block):
            return {"kind": "block", "tag": t.tag, "repeat": t.repeat, "body": self.term(t.body)}
        if isinstance(t, Element):
            return {"kind": "element", "values": [self.value(v) for v in t.values],
                    "cod": [self.lone(o) for o in t.cod_object]}
        raise SchemaError(f"cannot encode term {type(t).__name__}", "")


def encode_remapping(r: Remapping) -> dict:
    return {"targets": list(r.targets), "cod": r.cod_size}


def encode_tensor(v: TensorValue) -> dict:
    return {"dtype": str(v.dtype), "sizes": list(v.sizes), "data": v.data}


def encode_term(t: Term) -> dict:
    enc = _Encoder()
    root = enc.term(t)
    return {"version": VERSION, "uids": enc.uids, "root": root}


def save(t: Term) -> bytes:
    return dumps(encode_term(t))


def payload_key(op) -> str:
    """Stable text for a root payload, used to order and compare graph edges."""
    enc = _Encoder()
    body = enc.payload(op)
    return dumps({"payload": body, "uids": enc.uids}).decode()


def value_key(v) -> str:
    return dumps(_Encoder().value(v)).decode()


def lone_key(o) -> str:
    enc = _Encoder()
    body = enc.lone(o)
    return dumps({"lone": body, "uids": enc.uids}).decode()


# -- decoding ----------------------------------------------------------------


def _expect(cond: bool, msg: str, ptr: str):
    if not cond:
        raise SchemaError(msg, ptr)


def _is_nat(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


def _obj(d, keys: dict[str, bool], ptr: str):
    _expect(isinstance(d, dict), "expected an object", ptr)
    for k, required in keys.items():
        if required:
            _expect(k in d, f"missing key {k!r}", ptr)
    extra = set(d) - set(keys)
    _expect(not extra, f"unexpected keys {sorted(extra)}", ptr)


def _list(d, ptr: str) -> list:
    _expect(isinstance(d, list), "expected an array", ptr)
    return d


def _check_version(v, ptr="/version"):
    _expect(isinstance(v, str), "version must be a string", ptr)
    parts = v.split(".")
    _expect(len(parts) == 2 and all(p.isdigit() for p in parts), f"bad version {v!r}", ptr)
    major = int(parts[0])
    _expect(major <= int(VERSION.split(".")[0]), f"unsupported major version {v!r}", ptr)


def decode_dtype(s, ptr: str) -> Datatype:
    _expect(isinstance(s, str), "datatype must be a string", ptr)
    try:
        return Datatype.parse(s)
    except Exception as exc:
        raise SchemaError(str(exc), ptr) from exc


def decode_tensor(d, ptr: str = "") -> TensorValue:
    _obj(d, {"dtype": True, "sizes": True, "data": True}, ptr)
    dtype = decode_dtype(d["dtype"], ptr + "/dtype")
    sizes = _list(d["sizes"], ptr + "/sizes")
    for i, n in enumerate(sizes):
        _expect(_is_nat(n) and n >= 1, "sizes must be integers >= 1", f"{ptr}/sizes/{i}")
    data = _list(d["data"], ptr + "/data")
    for i, x in enumerate(data):
        ok = (isinstance(x, int) and not isinstance(x, bool)) if dtype.is_integral else (
            isinstance(x, (int, float)) and not isinstance(x, bool))
        _expect(ok, f"bad scalar for {dtype}", f"{ptr}/data/{i}")
    _expect(len(data) == math.prod(sizes), f"data has {len(data)} entries, sizes need "
            f"{math.prod(sizes)}", ptr + "/data")
    try:
        return TensorValue(dtype, sizes, data)
    except Exception as exc:
        raise SchemaError(str(exc), ptr) from exc


def decode_remapping(d, ptr: str) -> Remapping:
    _obj(d, {"targets": True, "cod": True}, ptr)
    targets = _list(d["targets"], ptr + "/targets")
    _expect(_is_nat(d["cod"]), "cod must be a natural number", ptr + "/cod")
    for i, x in enumerate(targets):
        _expect(_is_nat(x) and x < d["cod"], "target out of range", f"{ptr}/targets/{i}")
    return Remapping(tuple(targets), d["cod"])


class _Decoder:
    def __init__(self, uids: dict, ptr: str = "/uids"):
        _expect(isinstance(uids, dict), "expected an object", ptr)
        self.raw = uids
        self.axes: dict[str, Axis] = {}
        self.params: dict[str, ParamRef] = {}
        for uid, entry in uids.items():
            p = f"{ptr}/{_escape(uid)}"
            _expect(isinstance(entry, dict) and "kind" in entry, "uid entry needs a kind", p)
            kind = entry["kind"]
            if kind == "axis":
                _obj(entry, {"kind": True, "display": True, "size": True}, p)
                _expect(isinstance(entry["display"], str), "display must be a string",
                        p + "/display")
                size = entry["size"]
                _expect(size is None or (_is_nat(size) and size >= 1),
                        "size must be null or an integer >= 1", p + "/size")
                self.axes[uid] = Axis(uid, size, entry["display"])
            elif kind == "root":
                _obj(entry, {"kind": True, "display": True}, p)
            elif kind == "param":
                _obj(entry, {"kind": True, "display": True, "param_kind": True, "axes": True,
                             "fan_in": True}, p)
            else:
                raise SchemaError(f"unknown uid kind {kind!r}", p + "/kind")
        for uid, entry in uids.items():
            if entry["kind"] == "param":
                p = f"{ptr}/{_escape(uid)}"
                _expect(entry["param_kind"] in ("linear", "rmsnorm", "embedding"),
                        "unknown parameter kind", p + "/param_kind")
                _expect(_is_nat(entry["fan_in"]), "fan_in must be natural", p + "/fan_in")
                axes = self.axis_list(entry["axes"], p + "/axes")
                self.params[uid] = ParamRef(uid, entry["param_kind"], axes, entry["fan_in"])

    def axis(self, uid, ptr: str) -> Axis:
        _expect(isinstance(uid, str), "axis reference must be a uid string", ptr)
        if uid not in self.axes:
            raise SchemaError(f"dangling uid {uid!r}", ptr)
        return self.axes[uid]

    def axis_list(self, d, ptr: str) -> tuple:
        return tuple(self.axis(u, f"{ptr}/{i}") for i, u in enumerate(_list(d, ptr)))

    def lone(self, d, ptr: str):
        if isinstance(d, str):
            return self.axis(d, ptr)
        _obj(d, {"dtype": True, "shape": True}, ptr)
        return ArrayObject(decode_dtype(d["dtype"], ptr + "/dtype"),
                           self.axis_list(d["shape"], ptr + "/shape"))

    def stride(self, d, ptr: str, extra=()) -> AffineStrideMap:
        _obj(d, {"lambda": True, "offset": True, "dom": True, "cod": True,
                 **{k: True for k in extra}}, ptr)
        dom = self.axis_list(d["dom"], ptr + "/dom")
        cod = self.axis_list(d["cod"], ptr + "/cod")
        lam = _list(d["lambda"], ptr + "/lambda")
        _expect(len(lam) == len(dom), "lambda needs one row per dom axis", ptr + "/lambda")
        for i, row in enumerate(lam):
            _list(row, f"{ptr}/lambda/{i}")
            _expect(len(row) == len(cod), "lambda rows need one entry per cod axis",
                    f"{ptr}/lambda/{i}")
            for j, x in enumerate(row):
                _expect(_is_nat(x), "stride entries are natural numbers", f"{ptr}/lambda/{i}/{j}")
        offset = _list(d["offset"], ptr + "/offset")
        _expect(len(offset) == len(cod), "offset needs one entry per cod axis", ptr + "/offset")
        for j, x in enumerate(offset):
            _expect(_is_nat(x), "offsets are natural numbers", f"{ptr}/offset/{j}")
        return AffineStrideMap(dom, cod, lam, offset)

    def weave(self, d, ptr: str) -> Weave:
        _obj(d, {"mask": True, "dtype": True, "targets": True}, ptr)
        mask = _list(d["mask"], ptr + "/mask")
        for i, m in enumerate(mask):
            _expect(isinstance(m, bool), "mask entries are booleans", f"{ptr}/mask/{i}")
        targets = self.axis_list(d["targets"], ptr + "/targets")
        _expect(sum(mask) == len(targets), "mask and targets disagree", ptr)
        return Weave(tuple(mask), decode_dtype(d["dtype"], ptr + "/dtype"), targets)

    def payload(self, d, ptr: str):
        _expect(isinstance(d, dict) and "type" in d, "payload needs a type", ptr)
        if d["type"] == "stride":
            return self.stride(d, ptr, extra=("type",))
        _expect(d["type"] == "broadcast", f"unknown payload type {d['type']!r}", ptr + "/type")
        _obj(d, {"type": True, "op": True, "inputs": True, "outputs": True,
                 "reindexings": True, "degree": True}, ptr)
        op = d["op"]
        _obj(op, {"name": True, "fn": True, "param": True, "deterministic": True}, ptr + "/op")
        _expect(isinstance(op["name"], str), "op name must be a string", ptr + "/op/name")
        _expect(isinstance(op["fn"], str), "op fn must be a string", ptr + "/op/fn")
        _expect(isinstance(op["deterministic"], bool), "deterministic must be a boolean",
                ptr + "/op/deterministic")
        param = None
        if op["param"] is not None:
            _expect(isinstance(op["param"], str), "param must be a uid", ptr + "/op/param")
            if op["param"] not in self.params:
                raise SchemaError(f"dangling uid {op['param']!r}", ptr + "/op/param")
            param = self.params[op["param"]]
        tag = OpTag(op["name"], op["fn"], param, op["deterministic"])
        ins = [self.weave(w, f"{ptr}/inputs/{i}") for i, w in enumerate(_list(d["inputs"], ptr + "/inputs"))]
        outs = [self.weave(w, f"{ptr}/outputs/{i}")
                for i, w in enumerate(_list(d["outputs"], ptr + "/outputs"))]
        reidx = [self.stride(r, f"{ptr}/reindexings/{i}")
                 for i, r in enumerate(_list(d["reindexings"], ptr + "/reindexings"))]
        degree = self.axis_list(d["degree"], ptr + "/degree")
        return BroadcastedOp(tag, tuple(ins), tuple(outs), tuple(reidx), degree)

    def value(self, d, obj, ptr: str):
        if isinstance(obj, Axis):
            _expect(_is_nat(d), "axis elements are natural numbers", ptr)
            return d
        return decode_tensor(d, ptr)

    def term(self, d, ptr: str) -> Term:
        _expect(isinstance(d, dict) and "kind" in d, "term needs a kind", ptr)
        kind = d["kind"]
        if kind == "root":
            _obj(d, {"kind": True, "uid": True, "op": True}, ptr)
            _expect(isinstance(d["uid"], str), "root uid must be a string", ptr + "/uid")
            if self.raw.get(d["uid"], {}).get("kind") != "root":
                raise SchemaError(f"dangling uid {d['uid']!r}", ptr + "/uid")
            return Root(self.payload(d["op"], ptr + "/op"), d["uid"])
        if kind in ("composed", "product"):
            _obj(d, {"kind": True, "parts": True}, ptr)
            parts = tuple(self.term(p, f"{ptr}/parts/{i}")
                          for i, p in enumerate(_list(d["parts"], ptr + "/parts")))
            if kind == "composed":
                _expect(len(parts) >= 1, "composition needs parts", ptr + "/parts")
                return Composed(parts)
            return ProductOfMorphisms(parts)
        if kind == "rearrangement":
            _obj(d, {"kind": True, "mapping": True, "dom": True}, ptr)
            mapping = decode_remapping(d["mapping"], ptr + "/mapping")
            dom = tuple(self.lone(o, f"{ptr}/dom/{i}") for i, o in enumerate(_list(d["dom"], ptr + "/dom")))
            _expect(mapping.cod_size == len(dom), "mapping cod differs from family length",
                    ptr + "/mapping/cod")
            return Rearrangement(mapping, dom)
        if kind == "block":
            _obj(d, {"kind": True, "tag": True, "repeat": True, "body": True}, ptr)
            _expect(isinstance(d["tag"], str), "tag must be a string", ptr + "/tag")
            _expect(d["repeat"] is None or _is_nat(d["repeat"]), "repeat must be null or natural",
                    ptr + "/repeat")
            return Block(self.term(d["body"], ptr + "/body"), d["tag"], d["repeat"])
        if kind == "element":
            _obj(d, {"kind": True, "values": True, "cod": True}, ptr)
            cod = tuple(self.lone(o, f"{ptr}/cod/{i}") for i, o in enumerate(_list(d["cod"], ptr + "/cod")))
            values = _list(d["values"], ptr + "/values")
            _expect(len(values) == len(cod), "one value per lone object", ptr + "/values")
            return Element(tuple(self.value(v, o, f"{ptr}/values/{i}")
                                 for i, (v, o) in enumerate(zip(values, cod))), ProductObject(cod))
        raise SchemaError(f"unknown term kind {kind!r}", ptr + "/kind")


def _escape(key: str) -> str:
    return key.replace("~", "~0").replace("/", "~1")


def decode_term(doc) -> Term:
    _obj(doc, {"version": True, "uids": True, "root": True}, "")
    _check_version(doc["version"])
    dec = _Decoder(doc["uids"])
    return dec.term(doc["root"], "/root")


def load(data: bytes | str) -> Term:
    return decode_term(_loads(data))


def load_json(data: bytes | str) -> Any:
    return _loads(data)


# -- sibling documents ------------------------------------------------------------


def save_tensors(values) -> bytes:
    """One tensor is written as an object, a sequence as a list."""
    if isinstance(values, TensorValue):
        return dumps(encode_tensor(values))
    return dumps([encode_tensor(v) for v in values])


def load_tensors(data: bytes | str) -> list[TensorValue]:
    d = _loads(data)
    if isinstance(d, list):
        return [decode_tensor(x, f"/{i}") for i, x in enumerate(d)]
    return [decode_tensor(d, "")]


def save_configuration(c: dict[str, int]) -> bytes:
    return dumps(dict(c))


def load_configuration(data: bytes | str) -> dict[str, int]:
    d = _loads(data)
    _expect(isinstance(d, dict), "configuration must be an object", "")
    for k, v in d.items():
        _expect(_is_nat(v) and v >= 1, "sizes must be integers >= 1", f"/{_escape(k)}")
    return dict(d)
