"""Brute-force evaluator.

Every output scalar is computed on its own by walking the degree and the
reindexings one coordinate at a time.  Only the Python standard library is
used so that it shares nothing with the vectorised interpreter.
"""

from __future__ import annotations

import itertools
import math

from ..arraybr import BroadcastedOp
from ..errors import EvaluationError
from ..tensor import TensorValue
from ..terms import Block, Composed, Element, ProductOfMorphisms, Rearrangement, Root, Term
from .params import ParamStore

MASK_FILL = -1e30
RMS_EPS = 1e-6


def evaluate_oracle(t: Term, inputs, params: ParamStore | None = None) -> list[TensorValue]:
    params = params if params is not None else ParamStore(0)
    values = [(x.dtype, list(x.sizes), x.data) for x in inputs]
    if len(values) != len(t.dom()):
        raise EvaluationError(f"expected {len(t.dom())} inputs, got {len(values)}")
    for i, (obj, x) in enumerate(zip(t.dom(), inputs)):
        problem = obj.check_element(x)
        if problem:
            raise EvaluationError(f"input {i}: {problem}")
    return [TensorValue(d, s, data) for d, s, data in _run(t, values, params)]


def _run(t, values, params):
    if isinstance(t, Rearrangement):
        return [values[j] for j in t.mapping.targets]
    if isinstance(t, Element):
        return [(v.dtype, list(v.sizes), v.data) for v in t.values]
    if isinstance(t, Block):
        return _run(t.body, values, params)
    if isinstance(t, Composed):
        for part in t.parts:
            values = _run(part, values, params)
        return values
    if isinstance(t, ProductOfMorphisms):
        result, used = [], 0
        for part in t.parts:
            width = len(part.dom())
            result += _run(part, values[used:used + width], params)
            used += width
        return result
    if isinstance(t, Root) and isinstance(t.op, BroadcastedOp):
        return _broadcast(t.op, values, params)
    raise EvaluationError(f"oracle cannot evaluate {type(t).__name__}")


def _count(sizes):
    return math.prod(sizes)


def _flat_index(coord, sizes):
    index, stride = 0, 1
    for c, n in zip(coord, sizes):
        if not 0 <= c < n:
            raise EvaluationError(f"coordinate {coord} outside {sizes}")
        index += c * stride
        stride *= n
    return index


def _all_coords(sizes):
    # first coordinate varies fastest
    for rev in itertools.product(*[range(n) for n in reversed(sizes)]):
        yield tuple(reversed(rev))


def _weave_coord(mask, target_coord, tile_coord):
    t, p = iter(target_coord), iter(tile_coord)
    return tuple(next(t) if m else next(p) for m in mask)


def _broadcast(b, values, params):
    degree = [a.size for a in b.degree]
    if any(n is None for n in degree):
        raise EvaluationError("degree is not configured")
    in_targets = [[a.size for a in w.target_axes] for w in b.input_weaves]
    out_targets = [[a.size for a in w.target_axes] for w in b.output_weaves]
    out_sizes = [_weave_coord(w.mask, ts, degree) for w, ts in zip(b.output_weaves, out_targets)]
    out_data = [[None] * _count(s) for s in out_sizes]
    weight = params.get(b.op.param) if b.op.param is not None else None
    for p in _all_coords(degree):
        slices = []
        for (dtype, sizes, data), w, r, ts in zip(values, b.input_weaves, b.reindexings,
                                                  in_targets):
            q = tuple(r.offset[j] + sum(p[i] * r.lam[i][j] for i in range(len(p)))
                      for j in range(len(r.cod)))
            piece = [data[_flat_index(_weave_coord(w.mask, tc, q), sizes)]
                     for tc in _all_coords(ts)]
            slices.append((ts, piece))
        results = _base(b.op, slices, out_targets, weight)
        for j, (w, ts) in enumerate(zip(b.output_weaves, out_targets)):
            for k, tc in enumerate(_all_coords(ts)):
                out_data[j][_flat_index(_weave_coord(w.mask, tc, p), out_sizes[j])] = results[j][k]
    return [(w.dtype, list(s), d) for w, s, d in zip(b.output_weaves, out_sizes, out_data)]


def _base(op, slices, out_targets, weight):
    name, fn = op.name, op.fn
    xs = [piece for _, piece in slices]
    if name == "id":
        return [list(x) for x in xs]
    if name == "elementwise":
        out = []
        for k in range(len(xs[0])):
            args = [x[k] for x in xs]
            out.append(_scalar(fn, args))
        return [out]
    if name == "sum":
        total = 0
        for v in xs[0]:
            total += v
        return [[total]]
    if name == "softmax":
        top = max(xs[0])
        exps = [math.exp(v - top) for v in xs[0]]
        z = math.fsum(exps)
        return [[e / z for e in exps]]
    if name == "rmsnorm":
        x = xs[0]
        scale = math.sqrt(math.fsum(v * v for v in x) / len(x) + RMS_EPS)
        g = weight.data
        return [[g[i] * x[i] / scale for i in range(len(x))]]
    if name == "linear":
        x = xs[0]
        w = weight.data
        n_in = len(x)
        n_out = _count(out_targets[0])
        return [[math.fsum(w[i + n_in * o] * x[i] for i in range(n_in)) for o in range(n_out)]]
    if name == "embedding":
        table = weight.data
        m = out_targets[0][0]
        v = xs[0][0]
        return [table[v * m:(v + 1) * m]]
    if name == "select":
        return [[xs[1][xs[0][0]]]]
    if name == "triangular_mask":
        (n_x, n_q), x = slices[0]
        out = []
        for q in range(n_q):
            for xi in range(n_x):
                out.append(x[xi + n_x * q] if xi <= q else MASK_FILL)
        # out was filled q-major, which is the flat order for (x, q)
        return [out]
    raise EvaluationError(f"oracle has no rule for {name!r}")


def _scalar(fn, args):
    if fn == "neg":
        return -args[0]
    if fn == "tanh":
        return math.tanh(args[0])
    if fn == "exp":
        return math.exp(args[0])
    if fn == "square":
        return args[0] * args[0]
    if fn == "relu":
        return args[0] if args[0] > 0 else type(args[0])(0)
    if fn == "sub":
        return args[0] - args[1]
    if fn == "div":
        return args[0] / args[1]
    if fn == "add":
        acc = args[0]
        for a in args[1:]:
            acc = acc + a
        return acc
    if fn == "mul":
        acc = args[0]
        for a in args[1:]:
            acc = acc * a
        return acc
    if fn == "max":
        return max(args)
    raise EvaluationError(f"oracle has no scalar rule for {fn!r}")
