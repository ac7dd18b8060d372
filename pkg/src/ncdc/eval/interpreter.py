"""Vectorised reference interpreter.

A broadcast is evaluated by listing every degree coordinate at once,
gathering the input slices with fancy indexing, running the base operation
on the whole batch, and transposing the stacked results into place.
"""

from __future__ import annotations

import concurrent.futures
import os
from typing import Sequence

import numpy as np

from ..arraybr import ArrayObject, BroadcastedOp, OpTag
from ..errors import ConfigurationError, EvaluationError
from ..stride import sizes_of
from ..tensor import TensorValue
from ..terms import Block, Composed, Element, ProductOfMorphisms, Rearrangement, Root, Term
from .params import ParamStore

MASK_FILL = -1e30
RMS_EPS = 1e-6
_CHUNK = 4096


def thread_count() -> int:
    raw = os.environ.get("NCDC_THREADS", "1").strip() or "1"
    n = int(raw)
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def evaluate(t: Term, inputs: Sequence[TensorValue], params: ParamStore | None = None
             ) -> list[TensorValue]:
    params = params if params is not None else ParamStore(0)
    inputs = list(inputs)
    _check_values(t.dom(), inputs, "input")
    return _eval(t, inputs, params)


def _check_values(obj, values, what):
    if len(values) != len(obj):
        raise EvaluationError(f"expected {len(obj)} {what}s, got {len(values)}")
    for i, (o, v) in enumerate(zip(obj, values)):
        if isinstance(o, ArrayObject):
            problem = o.check_element(v)
            if problem:
                raise EvaluationError(f"{what} {i}: {problem}")


def _eval(t: Term, xs: list[TensorValue], params: ParamStore) -> list[TensorValue]:
    if isinstance(t, Composed):
        for p in t.parts:
            xs = _eval(p, xs, params)
        return xs
    if isinstance(t, ProductOfMorphisms):
        out: list[TensorValue] = []
        start = 0
        for p in t.parts:
            n = len(p.dom())
            out.extend(_eval(p, xs[start:start + n], params))
            start += n
        return out
    if isinstance(t, Rearrangement):
        return [xs[j] for j in t.mapping.targets]
    if isinstance(t, Block):
        return _eval(t.body, xs, params)
    if isinstance(t, Element):
        return list(t.values)
    if isinstance(t, Root) and isinstance(t.op, BroadcastedOp):
        return _broadcast(t.op, xs, params)
    raise EvaluationError(f"cannot evaluate {type(t).__name__}")


def _degree_coords(sizes: tuple[int, ...]) -> np.ndarray:
    if not sizes:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices(tuple(reversed(sizes))).reshape(len(sizes), -1)
    return grids[::-1].T.astype(np.int64)


def _input_perm(mask: tuple[bool, ...]) -> list[int]:
    """numpy axes ordered as (tiles in order, targets innermost-last)."""
    n = len(mask)
    tiles = [n - 1 - s for s, m in enumerate(mask) if not m]
    targets = [n - 1 - s for s, m in enumerate(mask) if m]
    return tiles + targets[::-1]


def _output_perm(mask: tuple[bool, ...], n_degree: int) -> list[int]:
    n_targets = sum(mask)
    source_of_slot = []
    seen_t = seen_f = 0
    for m in mask:
        if m:
            source_of_slot.append(n_degree + (n_targets - 1 - seen_t))
            seen_t += 1
        else:
            source_of_slot.append(n_degree - 1 - seen_f)
            seen_f += 1
    n = len(mask)
    return [source_of_slot[n - 1 - c] for c in range(n)]


def _broadcast(b: BroadcastedOp, xs: list[TensorValue], params: ParamStore) -> list[TensorValue]:
    try:
        degree_sizes = sizes_of(b.degree)
        for w in b.output_weaves:
            sizes_of(w.target_axes)
    except ConfigurationError as exc:
        raise EvaluationError(f"term is not configured: {exc}") from exc
    problems = b.violations()
    if problems:
        raise EvaluationError("; ".join(problems))
    coords = _degree_coords(degree_sizes)
    organised = [np.transpose(x.array, _input_perm(w.mask))
                 for x, w in zip(xs, b.input_weaves)]
    lams = [np.array(r.lam, dtype=np.int64).reshape(len(r.dom), len(r.cod)) for r in b.reindexings]
    offs = [np.array(r.offset, dtype=np.int64) for r in b.reindexings]
    extra = [params.get(b.op.param).array] if b.op.param is not None else []

    def run(lo: int, hi: int) -> list[np.ndarray]:
        p = coords[lo:hi]
        slices = []
        for arr, lam, off in zip(organised, lams, offs):
            if not off.size:
                slices.append(np.broadcast_to(arr, (len(p),) + arr.shape))
                continue
            q = off + p @ lam
            slices.append(arr[tuple(q[:, k] for k in range(q.shape[1]))])
        return apply_base(b.op, slices, extra, hi - lo)

    n = coords.shape[0]
    workers = thread_count()
    if workers > 1 and n > _CHUNK:
        bounds = [(lo, min(n, lo + _CHUNK)) for lo in range(0, n, _CHUNK)]
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda lh: run(*lh), bounds))
        stacked = [np.concatenate([p[j] for p in parts]) for j in range(len(b.output_weaves))]
    else:
        stacked = run(0, n)
    outs = []
    for w, y in zip(b.output_weaves, stacked):
        y = y.reshape(tuple(reversed(degree_sizes)) + y.shape[1:])
        y = np.transpose(y, _output_perm(w.mask, len(degree_sizes)))
        outs.append(TensorValue.from_array(w.dtype, y))
    return outs


_UNARY_FNS = {
    "neg": np.negative, "tanh": np.tanh, "exp": np.exp, "square": np.square,
    "relu": lambda x: np.maximum(x, 0),
}


def apply_base(op: OpTag, xs: list[np.ndarray], extra: list[np.ndarray], n: int
               ) -> list[np.ndarray]:
    """Run a base operation on ``n`` stacked slices (leading axis)."""
    name = op.name
    if name == "id":
        return list(xs)
    if name == "elementwise":
        fn = op.fn
        if fn in _UNARY_FNS:
            return [_UNARY_FNS[fn](xs[0])]
        if fn == "sub":
            return [xs[0] - xs[1]]
        if fn == "div":
            return [xs[0] / xs[1]]
        acc = xs[0]
        for x in xs[1:]:
            acc = {"add": np.add, "mul": np.multiply, "max": np.maximum}[fn](acc, x)
        return [acc]
    if name == "sum":
        return [xs[0].reshape(n, -1).sum(axis=1)]
    if name == "softmax":
        x = xs[0]
        e = np.exp(x - x.max(axis=1, keepdims=True))
        return [e / e.sum(axis=1, keepdims=True)]
    if name == "rmsnorm":
        x = xs[0]
        return [extra[0] * x / np.sqrt(np.mean(x * x, axis=1, keepdims=True) + RMS_EPS)]
    if name == "linear":
        w = extra[0]
        k = xs[0].ndim - 1
        return [np.tensordot(xs[0], w, axes=(list(range(1, k + 1)),
                                              list(range(w.ndim - k, w.ndim))))]
    if name == "embedding":
        return [extra[0][xs[0]]]
    if name == "select":
        return [xs[1][np.arange(n), xs[0]]]
    if name == "triangular_mask":
        x = xs[0]
        rows, cols = x.shape[1], x.shape[2]
        keep = np.arange(cols)[None, :] <= np.arange(rows)[:, None]
        return [np.where(keep[None], x, MASK_FILL)]
    raise EvaluationError(f"no implementation for base operation {name!r}")
