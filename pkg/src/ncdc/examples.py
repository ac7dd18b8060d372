"""Bundled example terms.

Each builder mints uids in deterministic mode so that the emitted
documents are stable across runs.
"""

from __future__ import annotations

from typing import Callable

from . import terms as tm
from .align import compose_aligned, configure
from .arraybr import (batch_lift, convolution, einsum, elementwise, linear, rmsnorm, softmax,
                      triangular_mask)
from .errors import NcdError
from .stride import axis
from .terms import Term
from .uids import deterministic_uids


def attention_templates() -> tuple[Term, Term, Term, Term]:
    """Query-key product, causal mask, softmax and score-value product."""
    qk = einsum("q h d, x h d -> h q x", axes={"d": axis("d1")})
    sv = einsum("h q x, x h d -> q h d", axes={"d": axis("d2")})
    return qk, triangular_mask(), softmax(), sv


def attention(configured: bool = False) -> Term:
    with deterministic_uids():
        qk, mask, norm, sv = attention_templates()
        t = compose_aligned(compose_aligned(compose_aligned(qk, mask), norm), sv)
    if configured:
        t = configure_by_name(t, {"q": 4, "h": 2, "x": 4, "d1": 8, "d2": 8})
    return t


def convolution_example(configured: bool = False) -> Term:
    with deterministic_uids():
        t = convolution(axis("x'"), axis("k"), axis("c"), axis("c'"), axis("x"))
    if configured:
        t = configure_by_name(t, {"x'": 3, "k": 2, "c": 1, "c'": 1, "x": 4})
    return t


def resnet_block(configured: bool = False) -> Term:
    """Residual block ``x + W2 relu(W1 rmsnorm(x))`` applied at every position."""
    with deterministic_uids():
        d, hidden, s = axis("d"), axis("m"), axis("s")
        branch = compose_aligned(compose_aligned(compose_aligned(
            rmsnorm(d), linear((d,), (hidden,))), elementwise("relu")), linear((hidden,), (d,)))
        skip = tm.fanout([tm.identity(branch.dom()), branch])
        body = tm.block(compose_aligned(skip, elementwise("add", 2)), "residual")
        t = batch_lift(body, (s,))
    if configured:
        t = configure_by_name(t, {"d": 4, "m": 8, "s": 3})
    return t


EXAMPLES: dict[str, Callable[..., Term]] = {
    "attention": attention,
    "convolution": convolution_example,
    "resnet-block": resnet_block,
}


def build(name: str, configured: bool = False) -> Term:
    if name not in EXAMPLES:
        raise NcdError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    return EXAMPLES[name](configured)


def resolve_names(t: Term, sizes: dict[str, int]) -> dict[str, int]:
    """Map keys that are uids or unambiguous display names of free axes to uids."""
    free = tm.free_axes(t)
    by_uid = {a.uid: a for a in free}
    out: dict[str, int] = {}
    for key, value in sizes.items():
        if key in by_uid:
            out[key] = value
            continue
        hits = [a for a in free if a.name == key]
        if len(hits) == 1:
            out[hits[0].uid] = value
        elif len(hits) > 1:
            raise NcdError(f"name {key!r} is ambiguous: uids {[a.uid for a in hits]}")
        else:
            out[key] = value  # let configure report the unknown uid
    return out


def configure_by_name(t: Term, sizes: dict[str, int]) -> Term:
    return configure(t, resolve_names(t, sizes))
