"""Array-broadcasted terms: arrays, weaves, broadcasts and the op builders.

Shapes are stored innermost axis first.  A weave mask marks which slots of
an array the base operation acts on (``True``) and which are tiled by the
broadcast (``False``).  Every root of this category is a ``BroadcastedOp``:
for each coordinate ``p`` of the degree, output slices at ``p`` are the
base operation applied to the input slices at ``reindexing_i(p)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from . import terms as tm
from .errors import ConfigurationError, DomainError, ValidationError
from .remapping import Remapping
from .stride import AffineStrideMap, Axis, addition_map, axis, identity_map
from .tensor import INT, REAL, Datatype, TensorValue, finite
from .terms import (Block, Composed, Element, ProductObject, ProductOfMorphisms,
                    Rearrangement, Root, Term)
from .uids import new_uid


@dataclass(frozen=True)
class ArrayObject:
    dtype: Datatype
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(self.shape))

    @property
    def display(self) -> str:
        return f"[{self.dtype}; {' '.join(a.display for a in self.shape)}]"

    def iter_axes(self):
        yield from self.shape

    def map_axes(self, fn):
        return ArrayObject(self.dtype, tuple(fn(a) for a in self.shape))

    def check_element(self, value) -> str | None:
        if not isinstance(value, TensorValue):
            return f"expected a tensor for {self.display}"
        if value.dtype != self.dtype:
            return f"dtype {value.dtype} does not match {self.dtype}"
        if any(a.size is None for a in self.shape):
            return f"array {self.display} is not configured"
        if tuple(value.sizes) != tuple(a.size for a in self.shape):
            return f"sizes {list(value.sizes)} do not match {self.display}"
        return None

    def lifted(self, batch: Sequence[Axis]) -> "ArrayObject":
        return ArrayObject(self.dtype, self.shape + tuple(batch))

    def __str__(self):
        return self.display


def array(dtype: Datatype, *axes: Axis) -> ArrayObject:
    return ArrayObject(dtype, axes)


# -- weaves -----------------------------------------------------------------


def weave_permutation(w: "Weave | Sequence[bool]") -> Remapping:
    """``i -> rank of slot i`` once targets are moved before tilings."""
    mask = w.mask if isinstance(w, Weave) else tuple(bool(x) for x in w)
    n_targets = sum(mask)
    out = []
    seen_t = seen_f = 0
    for m in mask:
        if m:
            out.append(seen_t)
            seen_t += 1
        else:
            out.append(n_targets + seen_f)
            seen_f += 1
    return Remapping(tuple(out), len(mask))


def organize(mask: Sequence[bool]) -> tuple[int, ...]:
    """Slot order that lists target slots first, then tiled slots."""
    return tuple(i for i, m in enumerate(mask) if m) + tuple(i for i, m in enumerate(mask) if not m)


@dataclass(frozen=True)
class Weave:
    mask: tuple
    dtype: Datatype
    target_axes: tuple

    def __post_init__(self):
        object.__setattr__(self, "mask", tuple(bool(m) for m in self.mask))
        object.__setattr__(self, "target_axes", tuple(self.target_axes))
        if sum(self.mask) != len(self.target_axes):
            raise ValidationError(f"weave has {sum(self.mask)} target slots but "
                                  f"{len(self.target_axes)} target axes")

    @property
    def n_tiles(self) -> int:
        return len(self.mask) - len(self.target_axes)

    @property
    def target(self) -> ArrayObject:
        return ArrayObject(self.dtype, self.target_axes)

    def source(self, tiles: Sequence[Axis]) -> ArrayObject:
        tiles = tuple(tiles)
        if len(tiles) != self.n_tiles:
            raise ValidationError(f"weave has {self.n_tiles} tiled slots, got {len(tiles)} axes")
        it_t, it_p = iter(self.target_axes), iter(tiles)
        return ArrayObject(self.dtype, tuple(next(it_t) if m else next(it_p) for m in self.mask))

    def lifted(self, n: int) -> "Weave":
        return Weave(self.mask + (False,) * n, self.dtype, self.target_axes)

    def map_axes(self, fn):
        return Weave(self.mask, self.dtype, tuple(fn(a) for a in self.target_axes))


def full_weave(obj: ArrayObject) -> Weave:
    return Weave((True,) * len(obj.shape), obj.dtype, obj.shape)


def tiled_weave(dtype: Datatype, n: int, target_axes: Sequence[Axis] = ()) -> Weave:
    target_axes = tuple(target_axes)
    return Weave((True,) * len(target_axes) + (False,) * n, dtype, target_axes)


# -- base operations -------------------------------------------------------------


@dataclass(frozen=True)
class ParamRef:
    """A learned tensor: its uid keys the parameter store."""

    uid: str
    kind: str
    axes: tuple
    fan_in: int = 0  # number of leading axes that count towards fan-in

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))

    def map_axes(self, fn):
        return replace(self, axes=tuple(fn(a) for a in self.axes))

    @property
    def sizes(self) -> tuple[int, ...]:
        for a in self.axes:
            if a.size is None:
                raise ConfigurationError(f"parameter {self.uid} has unconfigured axis {a.display}")
        return tuple(a.size for a in self.axes)


UNARY = {"neg", "tanh", "relu", "exp", "square"}
NARY = {"add", "mul", "max"}
BINARY = {"sub", "div"}
ELEMENTWISE = UNARY | NARY | BINARY
INTEGRAL_SAFE = {"neg", "relu", "square", "add", "mul", "max", "sub", "id", "sum"}
LEARNED = {"linear": "linear", "rmsnorm": "rmsnorm", "embedding": "embedding"}


@dataclass(frozen=True)
class OpTag:
    """The polymorphic base operation of a broadcast."""

    name: str
    fn: str = ""
    param: ParamRef | None = None
    deterministic: bool = True

    @property
    def learned(self) -> bool:
        return self.param is not None

    @property
    def label(self) -> str:
        return self.fn or self.name

    def map_axes(self, fn):
        return self if self.param is None else replace(self, param=self.param.map_axes(fn))


def base_violations(op: OpTag, ins: Sequence[ArrayObject], outs: Sequence[ArrayObject]) -> list[str]:
    """Check the base operation's signature on target arrays."""
    name = op.name
    problems: list[str] = []

    def need(cond, msg):
        if not cond:
            problems.append(f"{op.label}: {msg}")

    if name == "id":
        need(len(ins) == len(outs), "identity needs as many outputs as inputs")
        need(list(ins) == list(outs), "identity must not change its targets")
    elif name == "elementwise":
        arity = {**{k: 1 for k in UNARY}, **{k: 2 for k in BINARY}}.get(op.fn)
        need(op.fn in ELEMENTWISE, f"unknown elementwise function {op.fn!r}")
        need(len(ins) >= 1 and len(outs) == 1, "elementwise ops have one output")
        if arity is not None:
            need(len(ins) == arity, f"expects {arity} inputs, got {len(ins)}")
        if ins and outs:
            need(all(i == outs[0] for i in ins), "inputs and output must share a target")
            if ins[0].dtype.is_integral:
                need(op.fn in INTEGRAL_SAFE, f"{op.fn} is not defined on integral data")
    elif name == "sum":
        need(len(ins) == 1 and len(outs) == 1, "sum has one input and one output")
        if ins and outs:
            need(outs[0].shape == (), "sum produces a scalar")
            need(ins[0].dtype == outs[0].dtype, "sum keeps the datatype")
    elif name in ("softmax", "rmsnorm"):
        need(len(ins) == 1 and len(outs) == 1 and ins[0] == outs[0],
             "acts on one array and returns the same shape")
        need(len(ins) == 1 and len(ins[0].shape) == 1, "acts along exactly one axis")
        need(len(ins) == 1 and not ins[0].dtype.is_integral, "needs real data")
        if name == "rmsnorm":
            need(op.param is not None and len(ins) == 1
                 and op.param.axes == ins[0].shape, "gain must match the normalised axis")
    elif name == "linear":
        need(len(ins) == 1 and len(outs) == 1, "linear has one input and one output")
        if ins and outs and op.param is not None:
            need(op.param.axes == ins[0].shape + outs[0].shape,
                 "weight axes must be input axes followed by output axes")
            need(not ins[0].dtype.is_integral, "needs real data")
        need(op.param is not None, "linear needs a weight")
    elif name == "embedding":
        need(len(ins) == 1 and len(outs) == 1, "embedding has one input and one output")
        need(op.param is not None, "embedding needs a table")
        if ins and outs and op.param is not None:
            need(ins[0].shape == () and ins[0].dtype.kind == "finite", "input is a finite scalar")
            m_axes = outs[0].shape
            need(len(m_axes) == 1 and len(op.param.axes) == 2
                 and op.param.axes[0] == m_axes[0], "table axes are (features, vocabulary)")
            if len(op.param.axes) == 2 and op.param.axes[1].size is not None:
                need(op.param.axes[1].size == ins[0].dtype.param,
                     "vocabulary axis must have the input's V")
    elif name == "select":
        need(len(ins) == 2 and len(outs) == 1, "select takes an index and an array")
        if len(ins) == 2 and outs:
            idx, arr = ins
            need(idx.shape == () and idx.dtype.kind == "finite", "index is a finite scalar")
            need(len(arr.shape) == 1, "selects along one axis")
            if len(arr.shape) == 1 and arr.shape[0].size is not None and idx.dtype.kind == "finite":
                need(arr.shape[0].size == idx.dtype.param, "axis size must equal V")
            need(outs[0] == ArrayObject(arr.dtype, ()), "output is a scalar of the array dtype")
    elif name == "triangular_mask":
        need(len(ins) == 1 and len(outs) == 1 and ins[0] == outs[0], "acts in place")
        need(len(ins) == 1 and len(ins[0].shape) == 2, "needs two target axes (x, q)")
        need(len(ins) == 1 and not ins[0].dtype.is_integral, "needs real data")
    else:
        problems.append(f"unknown base operation {name!r}")
    return problems


# -- broadcasted operations ---------------------------------------------------------


@dataclass(frozen=True)
class BroadcastedOp:
    op: OpTag
    input_weaves: tuple
    output_weaves: tuple
    reindexings: tuple
    degree: tuple

    def __post_init__(self):
        for name in ("input_weaves", "output_weaves", "reindexings", "degree"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def label(self) -> str:
        return self.op.label

    @property
    def learned(self) -> bool:
        return self.op.learned

    @property
    def deterministic(self) -> bool:
        return self.op.deterministic

    @property
    def is_reindex(self) -> bool:
        return (self.op.name == "id" and len(self.input_weaves) == 1
                and len(self.output_weaves) == 1)

    def dom_object(self):
        return ProductObject(w.source(r.cod) for w, r in zip(self.input_weaves, self.reindexings))

    def cod_object(self):
        return ProductObject(w.source(self.degree) for w in self.output_weaves)

    def iter_axes(self):
        yield from self.degree
        for w in self.input_weaves + self.output_weaves:
            yield from w.target_axes
        for r in self.reindexings:
            yield from r.cod
        if self.op.param is not None:
            yield from self.op.param.axes

    def map_axes(self, fn):
        return BroadcastedOp(self.op.map_axes(fn),
                             tuple(w.map_axes(fn) for w in self.input_weaves),
                             tuple(w.map_axes(fn) for w in self.output_weaves),
                             tuple(r.map_axes(fn) for r in self.reindexings),
                             tuple(fn(a) for a in self.degree))

    def violations(self) -> list[str]:
        out: list[str] = []
        if len(self.reindexings) != len(self.input_weaves):
            out.append(f"{len(self.input_weaves)} input weaves but "
                       f"{len(self.reindexings)} reindexings")
            return out
        for i, (w, r) in enumerate(zip(self.input_weaves, self.reindexings)):
            if r.dom != self.degree:
                out.append(f"reindexing {i} does not start at the degree")
            if w.n_tiles != len(r.cod):
                out.append(f"input weave {i} has {w.n_tiles} tiled slots for "
                           f"{len(r.cod)} reindexed axes")
            out.extend(f"reindexing {i}: {v}" for v in r.capture_violations())
        for j, w in enumerate(self.output_weaves):
            if w.n_tiles != len(self.degree):
                out.append(f"output weave {j} has {w.n_tiles} tiled slots for a degree of "
                           f"{len(self.degree)} axes")
        out.extend(base_violations(self.op, [w.target for w in self.input_weaves],
                                   [w.target for w in self.output_weaves]))
        return out

    def lifted(self, batch: Sequence[Axis]) -> "BroadcastedOp":
        batch = tuple(batch)
        n = len(batch)
        reindexings = []
        for r in self.reindexings:
            lam = [list(row) + [0] * n for row in r.lam]
            lam += [[0] * len(r.cod) + [int(i == j) for j in range(n)] for i in range(n)]
            reindexings.append(AffineStrideMap(r.dom + batch, r.cod + batch, lam,
                                               r.offset + (0,) * n))
        return BroadcastedOp(self.op, tuple(w.lifted(n) for w in self.input_weaves),
                             tuple(w.lifted(n) for w in self.output_weaves),
                             tuple(reindexings), self.degree + batch)


def make_broadcast(op: OpTag, input_weaves: Sequence[Weave], output_weaves: Sequence[Weave],
                   reindexings: Sequence[AffineStrideMap],
                   degree: Sequence[Axis] | None = None) -> Root:
    reindexings = tuple(reindexings)
    if degree is None:
        if not reindexings:
            raise ValidationError("a broadcast without inputs needs an explicit degree")
        degree = reindexings[0].dom
    degree = tuple(degree)
    for i, r in enumerate(reindexings):
        if r.dom != degree:
            raise ValidationError(f"reindexing {i} has a different degree")
    payload = BroadcastedOp(op, tuple(input_weaves), tuple(output_weaves), reindexings, degree)
    for problem in payload.violations():
        if "capture" not in problem:  # capture waits for configuration
            raise ValidationError(problem)
    return Root(payload)


def reindexing(dtype: Datatype, m: AffineStrideMap, inner: Sequence[Axis] = ()) -> Term:
    """``[a, m]``: the gather ``out[p] = in[m(p)]`` from ``[a, cod m]`` to ``[a, dom m]``.

    ``inner`` axes are carried through untouched in front of the reindexed ones.
    """
    inner = tuple(inner)
    if m.is_identity():
        return tm.identity([ArrayObject(dtype, inner + m.dom)])
    return make_broadcast(OpTag("id"), [tiled_weave(dtype, len(m.cod), inner)],
                          [tiled_weave(dtype, len(m.dom), inner)], [m], m.dom)


def lift_object(obj: ProductObject, batch: Sequence[Axis]) -> ProductObject:
    return ProductObject(o.lifted(batch) for o in obj)


def batch_lift(f: Term, batch: Sequence[Axis]) -> Term:
    """``[f, P]``: run ``f`` independently for every coordinate of ``P``."""
    batch = tuple(batch)
    if not batch:
        return f
    if isinstance(f, Composed):
        return Composed(tuple(batch_lift(p, batch) for p in f.parts))
    if isinstance(f, ProductOfMorphisms):
        return ProductOfMorphisms(tuple(batch_lift(p, batch) for p in f.parts))
    if isinstance(f, Block):
        return replace(f, body=batch_lift(f.body, batch))
    if isinstance(f, Rearrangement):
        return Rearrangement(f.mapping, tuple(o.lifted(batch) for o in f.dom_family))
    if isinstance(f, Element):
        sizes = [a.size for a in batch]
        if any(s is None for s in sizes):
            raise ConfigurationError("lifting an element needs configured batch axes")
        return Element(tuple(v.tile(sizes) for v in f.values), lift_object(f.cod_object, batch))
    if isinstance(f, Root) and isinstance(f.op, BroadcastedOp):
        return Root(f.op.lifted(batch))
    raise ValidationError(f"cannot batch-lift {type(f).__name__}")


def projection_map(degree: Sequence[Axis], picked: Sequence[Axis]) -> AffineStrideMap:
    """0/1 map from ``degree`` onto a sub-family of its axes (matched by uid)."""
    degree, picked = tuple(degree), tuple(picked)
    lam = [[int(d.uid == p.uid) for p in picked] for d in degree]
    for j, p in enumerate(picked):
        if not any(row[j] for row in lam):
            raise ValidationError(f"axis {p.display} is not part of the degree")
    return AffineStrideMap(degree, picked, lam, [0] * len(picked))


# -- builders ----------------------------------------------------------------------


def _as_axis(a: Axis | str, size: int | None = None) -> Axis:
    return a if isinstance(a, Axis) else axis(a, size)


def elementwise(fn: str, arity: int | None = None, axes: Sequence[Axis] = (),
                dtype: Datatype = REAL) -> Root:
    """Scalar function broadcast over ``axes``."""
    if arity is None:
        arity = 1 if fn in UNARY else 2
    axes = tuple(axes)
    ident = identity_map(axes)
    return make_broadcast(OpTag("elementwise", fn), [tiled_weave(dtype, len(axes))] * arity,
                          [tiled_weave(dtype, len(axes))], [ident] * arity, axes)


def sum_over(*axes: Axis, dtype: Datatype = REAL) -> Root:
    return make_broadcast(OpTag("sum"), [Weave((True,) * len(axes), dtype, axes)],
                          [Weave((), dtype, ())], [identity_map(())], ())


def _single_axis_op(op: OpTag, ax: Axis, dtype: Datatype) -> Root:
    w = Weave((True,), dtype, (ax,))
    return make_broadcast(op, [w], [w], [identity_map(())], ())


def softmax(ax: Axis | None = None, dtype: Datatype = REAL) -> Root:
    return _single_axis_op(OpTag("softmax"), ax or axis("s"), dtype)


def rmsnorm(ax: Axis | None = None, gain: ParamRef | None = None) -> Root:
    ax = ax or axis("n")
    gain = gain or ParamRef(new_uid("p"), "rmsnorm", (ax,))
    return _single_axis_op(OpTag("rmsnorm", param=gain), ax, REAL)


def triangular_mask(q: Axis | None = None, x: Axis | None = None) -> Root:
    """Causal mask on targets ``(x, q)``: entries with ``x > q`` become -1e30."""
    q, x = q or axis("q"), x or axis("x")
    w = Weave((True, True), REAL, (x, q))
    return make_broadcast(OpTag("triangular_mask"), [w], [w], [identity_map(())], ())


def linear(in_axes: Sequence[Axis], out_axes: Sequence[Axis],
           weight: ParamRef | None = None) -> Root:
    in_axes, out_axes = tuple(in_axes), tuple(out_axes)
    weight = weight or ParamRef(new_uid("p"), "linear", in_axes + out_axes, len(in_axes))
    return make_broadcast(OpTag("linear", param=weight),
                          [Weave((True,) * len(in_axes), REAL, in_axes)],
                          [Weave((True,) * len(out_axes), REAL, out_axes)],
                          [identity_map(())], ())


def embedding(vocab: int, features: Axis | None = None, table: ParamRef | None = None) -> Root:
    features = features or axis("m")
    table = table or ParamRef(new_uid("p"), "embedding", (features, axis("v", vocab)))
    return make_broadcast(OpTag("embedding", param=table), [Weave((), finite(vocab), ())],
                          [Weave((True,), REAL, (features,))], [identity_map(())], ())


def select(vocab: int, ax: Axis | None = None, dtype: Datatype = REAL) -> Root:
    ax = ax or axis("v", vocab)
    return make_broadcast(OpTag("select"), [Weave((), finite(vocab), ()),
                                            Weave((True,), dtype, (ax,))],
                          [Weave((), dtype, ())], [identity_map(())] * 2, ())


def convolution(x_out: Axis, k: Axis, c_in: Axis, c_out: Axis, x_in: Axis | None = None,
                weight: ParamRef | None = None) -> Term:
    """Valid convolution ``y[c', i] = sum_{c,j} W[c,j,c'] x[c, i+j]``.

    Built as an addition reindexing followed by a linear map over ``(c, k)``.
    """
    if x_in is None:
        size = None
        if x_out.size is not None and k.size is not None:
            size = x_out.size + k.size - 1
        x_in = axis("x", size)
    shift = addition_map(k, x_out, x_in)
    windows = make_broadcast(OpTag("id"), [tiled_weave(REAL, 1, (c_in,))],
                             [tiled_weave(REAL, 2, (c_in,))], [shift], (k, x_out))
    mix = batch_lift(linear((c_in, k), (c_out,), weight), (x_out,))
    return tm.compose(windows, mix)


_EINSUM_OPERAND = re.compile(r"^[a-z]?( [a-z])*$")


def parse_einsum(spec: str) -> tuple[list[list[str]], list[str]]:
    if spec.count("->") != 1:
        raise DomainError(f"einsum spec needs exactly one '->': {spec!r}")
    lhs, rhs = spec.split("->")
    operands = []
    for raw in lhs.split(","):
        letters = raw.split()
        if not all(re.fullmatch(r"[a-z]", c) for c in letters):
            raise DomainError(f"einsum operands use single lowercase letters: {raw.strip()!r}")
        if len(set(letters)) != len(letters):
            raise DomainError(f"repeated letter within operand {raw.strip()!r}")
        operands.append(letters)
    out = rhs.split()
    if not all(re.fullmatch(r"[a-z]", c) for c in out):
        raise DomainError(f"einsum output uses single lowercase letters: {rhs.strip()!r}")
    if len(set(out)) != len(out):
        raise DomainError("repeated letter in einsum output")
    used = {c for op in operands for c in op}
    missing = [c for c in out if c not in used]
    if missing:
        raise DomainError(f"output letters {missing} appear in no operand")
    return operands, out


def einsum(spec: str, dtype: Datatype = REAL, sizes: Mapping[str, int] | None = None,
           axes: Mapping[str, Axis] | None = None) -> Term:
    """Weaved multiplication followed by summation over contracted letters.

    Letters are written outermost first, as in numpy; a fresh axis is minted
    per distinct letter unless ``axes`` supplies one.
    """
    operands, out = parse_einsum(spec)
    sizes = dict(sizes or {})
    letter_axes = dict(axes or {})
    order: list[str] = []
    for c in [c for op in operands for c in op]:
        if c not in order:
            order.append(c)
    for c in order:
        if c not in letter_axes:
            letter_axes[c] = axis(c, sizes.get(c))
    shape_of = lambda letters: tuple(letter_axes[c] for c in reversed(letters))
    out_axes = shape_of(out)
    contracted = [c for c in order if c not in out]
    con_axes = tuple(letter_axes[c] for c in contracted)
    degree = out_axes + con_axes
    operand_shapes = [shape_of(op) for op in operands]
    if len(operands) == 1 and not contracted and operand_shapes[0] == degree:
        return tm.identity([ArrayObject(dtype, degree)])
    product_step = make_broadcast(
        OpTag("elementwise", "mul"),
        [tiled_weave(dtype, len(s)) for s in operand_shapes],
        [tiled_weave(dtype, len(degree))],
        [projection_map(degree, s) for s in operand_shapes], degree)
    if not contracted:
        return product_step
    reduce_step = make_broadcast(
        OpTag("sum"),
        [Weave((False,) * len(out_axes) + (True,) * len(con_axes), dtype, con_axes)],
        [tiled_weave(dtype, len(out_axes))], [identity_map(out_axes)], out_axes)
    return tm.compose(product_step, reduce_step)


def broadcast_ops(t: Term) -> list[BroadcastedOp]:
    return [s.op for s in tm.walk(t) if isinstance(s, Root) and isinstance(s.op, BroadcastedOp)]


def learned_params(t: Term) -> list[ParamRef]:
    seen: dict[str, ParamRef] = {}
    for op in broadcast_ops(t):
        if op.op.param is not None:
            seen.setdefault(op.op.param.uid, op.op.param)
    return list(seen.values())
