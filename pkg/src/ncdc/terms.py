"""The constructed-term system shared by every product category.

Objects are flat tuples of lone objects.  Morphisms are immutable terms
built from root morphisms by composition, products, rearrangements and
blocks.  Construction helpers (``compose``, ``product``, ...) normalise
associativity eagerly so that ``(f;g);h`` and ``f;(g;h)`` are the same term.

Lone objects and root payloads are duck-typed.  A lone object provides
``uid``, ``display``, ``iter_axes()``, ``map_axes(fn)`` and
``check_element(value)``; a root payload provides ``dom_object()``,
``cod_object()``, ``iter_axes()``, ``map_axes(fn)``, ``violations()`` and
``label``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

from . import remapping as rm
from .errors import CompositionError, SubstitutionError, ValidationError
from .remapping import Remapping
from .uids import new_uid


@dataclass(frozen=True)
class ProductObject:
    content: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "content", tuple(self.content))

    def __len__(self):
        return len(self.content)

    def __iter__(self):
        return iter(self.content)

    def __getitem__(self, i):
        return self.content[i]

    def __add__(self, other: "ProductObject") -> "ProductObject":
        return ProductObject(self.content + tuple(other))

    @property
    def flat_length(self) -> int:
        return len(self.content)

    def __str__(self):
        if not self.content:
            return "1"
        return " x ".join(str(o) for o in self.content)


UNIT = ProductObject(())


class Term:
    """Base class of all morphism terms."""

    def dom(self) -> ProductObject:
        raise NotImplementedError

    def cod(self) -> ProductObject:
        raise NotImplementedError

    def children(self) -> tuple["Term", ...]:
        return ()

    def __rshift__(self, other: "Term") -> "Term":
        return compose(self, other)

    def __matmul__(self, other: "Term") -> "Term":
        from .align import compose_aligned
        return compose_aligned(self, other)


@dataclass(frozen=True)
class Root(Term):
    op: Any
    uid: str = field(default_factory=lambda: new_uid("r"), compare=False)

    def dom(self):
        return self.op.dom_object()

    def cod(self):
        return self.op.cod_object()


@dataclass(frozen=True)
class Composed(Term):
    parts: tuple

    def dom(self):
        return self.parts[0].dom()

    def cod(self):
        return self.parts[-1].cod()

    def children(self):
        return self.parts


@dataclass(frozen=True)
class ProductOfMorphisms(Term):
    parts: tuple

    def dom(self):
        return ProductObject(o for p in self.parts for o in p.dom())

    def cod(self):
        return ProductObject(o for p in self.parts for o in p.cod())

    def children(self):
        return self.parts


@dataclass(frozen=True)
class Rearrangement(Term):
    mapping: Remapping
    dom_family: tuple

    def __post_init__(self):
        object.__setattr__(self, "dom_family", tuple(self.dom_family))

    def dom(self):
        return ProductObject(self.dom_family)

    def cod(self):
        return ProductObject(self.mapping.apply(self.dom_family))

    def is_identity(self) -> bool:
        return self.mapping.is_identity()


@dataclass(frozen=True)
class Block(Term):
    body: Term
    tag: str = ""
    repeat: int | None = None

    def dom(self):
        return self.body.dom()

    def cod(self):
        return self.body.cod()

    def children(self):
        return (self.body,)


@dataclass(frozen=True)
class Element(Term):
    """A point ``1 -> X``; ``values`` holds one value per lone object of X."""

    values: tuple
    cod_object: ProductObject

    def dom(self):
        return UNIT

    def cod(self):
        return self.cod_object


# -- construction rules -------------------------------------------------


def identity(obj: ProductObject | Sequence) -> Rearrangement:
    family = tuple(obj)
    return Rearrangement(Remapping.identity(len(family)), family)


def _is_identity(t: Term) -> bool:
    return isinstance(t, Rearrangement) and t.is_identity()


def _first_mismatch(a: ProductObject, b: ProductObject) -> int | None:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


def compose(*terms: Term) -> Term:
    """Sequential composition ``t0 ; t1 ; ...`` with interface checks."""
    if not terms:
        raise CompositionError("compose needs at least one term")
    parts: list[Term] = []
    for t in terms:
        if parts:
            slot = _first_mismatch(parts[-1].cod(), t.dom())
            if slot is not None:
                raise CompositionError(
                    f"interface mismatch at slot {slot}: "
                    f"cod={parts[-1].cod()} vs dom={t.dom()}")
        parts.extend(t.parts if isinstance(t, Composed) else (t,))
    kept = [p for p in parts if not _is_identity(p)]
    if not kept:
        return parts[0]
    if len(kept) == 1:
        return kept[0]
    return Composed(tuple(kept))


def product(parts: Iterable[Term]) -> Term:
    flat: list[Term] = []
    for p in parts:
        flat.extend(p.parts if isinstance(p, ProductOfMorphisms) else (p,))
    if not flat:
        return identity(UNIT)
    if len(flat) == 1:
        return flat[0]
    if all(isinstance(p, Rearrangement) for p in flat):
        return Rearrangement(
            rm.direct_sum(p.mapping for p in flat),
            tuple(o for p in flat for o in p.dom_family))
    return ProductOfMorphisms(tuple(flat))


def rearrangement(mapping: Remapping, dom_family: Sequence) -> Rearrangement:
    family = tuple(dom_family)
    if mapping.cod_size != len(family):
        raise ValidationError(
            f"remapping expects a family of {mapping.cod_size}, got {len(family)}")
    return Rearrangement(mapping, family)


def copy(obj: ProductObject | Sequence, n: int = 2) -> Rearrangement:
    """``[delta^n]_A``: copy the whole object ``A`` n times."""
    family = tuple(obj)
    return Rearrangement(rm.flatten(rm.copy_remapping(n), [len(family)]), family)


def project(family: Sequence[ProductObject], i: int) -> Rearrangement:
    """Projection ``[i]`` from a family of (product) objects onto member ``i``."""
    lengths = [len(o) for o in family]
    flat = tuple(x for o in family for x in o)
    return Rearrangement(rm.flatten(rm.projection(i, len(family)), lengths), flat)


def fanout(family: Sequence[Term]) -> Term:
    """Free construction ``[delta^I]_A ; prod f_i`` for morphisms sharing a domain."""
    family = list(family)
    if not family:
        raise ValidationError("fanout needs at least one morphism")
    dom = family[0].dom()
    for i, f in enumerate(family):
        if f.dom() != dom:
            raise ValidationError(f"fanout member {i} has a different domain")
    return compose(copy(dom, len(family)), product(family))


def block(body: Term, tag: str = "", repeat: int | None = None) -> Block:
    return Block(body, tag, repeat)


def recover(t: Term) -> tuple[Callable[..., Term], tuple]:
    """Return ``(rule, args)`` such that ``rule(*args)`` rebuilds ``t``."""
    if isinstance(t, Composed):
        return compose, t.parts
    if isinstance(t, ProductOfMorphisms):
        return (lambda *ps: product(ps)), t.parts
    if isinstance(t, Rearrangement):
        return rearrangement, (t.mapping, t.dom_family)
    if isinstance(t, Block):
        return block, (t.body, t.tag, t.repeat)
    if isinstance(t, Element):
        return Element, (t.values, t.cod_object)
    return Root, (t.op, t.uid)


# -- traversal ------------------------------------------------------------


def walk(t: Term) -> Iterator[Term]:
    """Pre-order traversal."""
    yield t
    for c in t.children():
        yield from walk(c)


def iter_axes(t: Term) -> Iterator:
    """Axes in left-to-right, outside-in order (with repeats)."""
    if isinstance(t, (Composed, ProductOfMorphisms)):
        for p in t.parts:
            yield from iter_axes(p)
    elif isinstance(t, Block):
        yield from iter_axes(t.body)
    elif isinstance(t, Rearrangement):
        for o in t.dom_family:
            yield from o.iter_axes()
    elif isinstance(t, Element):
        for o in t.cod_object:
            yield from o.iter_axes()
    else:
        yield from t.op.iter_axes()


def free_axes(t: Term) -> list:
    seen: dict[str, Any] = {}
    for a in iter_axes(t):
        if a.size is None and a.uid not in seen:
            seen[a.uid] = a
    return list(seen.values())


def scan_free_uids(t: Term) -> list[tuple[str, str]]:
    """UIDs whose values are still unassigned, in first-appearance order."""
    return [(a.uid, "axis") for a in free_axes(t)]


def axes_by_uid(t: Term) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for a in iter_axes(t):
        if a.uid not in out or (out[a.uid].size is None and a.size is not None):
            out[a.uid] = a
    return out


def map_axes(t: Term, fn: Callable) -> Term:
    """Rebuild ``t`` with every axis replaced by ``fn(axis)``."""
    if isinstance(t, Composed):
        return Composed(tuple(map_axes(p, fn) for p in t.parts))
    if isinstance(t, ProductOfMorphisms):
        return ProductOfMorphisms(tuple(map_axes(p, fn) for p in t.parts))
    if isinstance(t, Block):
        return dataclasses.replace(t, body=map_axes(t.body, fn))
    if isinstance(t, Rearrangement):
        return Rearrangement(t.mapping, tuple(o.map_axes(fn) for o in t.dom_family))
    if isinstance(t, Element):
        return Element(t.values, ProductObject(o.map_axes(fn) for o in t.cod_object))
    return Root(t.op.map_axes(fn), t.uid)


def substitute(t: Term, assignment: Mapping[str, Any]) -> Term:
    """Merge axes (uid -> uid or Axis) or fix sizes (uid -> int)."""
    if not assignment:
        return t
    known = axes_by_uid(t)
    replacement: dict[str, Any] = {}
    for key, value in assignment.items():
        if key not in known:
            raise SubstitutionError(f"unknown uid {key!r}")
        old = known[key]
        if isinstance(value, bool):
            raise SubstitutionError(f"cannot assign a boolean to axis {key!r}")
        if isinstance(value, int):
            if value < 1:
                raise SubstitutionError(f"axis {key!r} needs a size >= 1, got {value}")
            if old.size is not None and old.size != value:
                raise SubstitutionError(
                    f"axis {key!r} already has size {old.size}, cannot set {value}")
            replacement[key] = dataclasses.replace(old, size=value)
        elif isinstance(value, str):
            if value not in known:
                raise SubstitutionError(f"unknown target uid {value!r}")
            replacement[key] = known[value]
        elif hasattr(value, "uid") and hasattr(value, "size"):
            replacement[key] = value
        else:
            raise SubstitutionError(
                f"kind mismatch: cannot substitute {type(value).__name__} for axis {key!r}")
    # merged axes take the fixed size of either side
    resolved: dict[str, Any] = {}
    for key, new in replacement.items():
        old = known[key]
        size = new.size
        if old.size is not None and new.size is not None and old.size != new.size:
            raise SubstitutionError(
                f"cannot merge {key!r} (size {old.size}) into {new.uid!r} (size {new.size})")
        if size is None:
            size = old.size
        resolved[key] = dataclasses.replace(new, size=size)
    # propagate a size learned through a merge to the surviving uid
    grow = {a.uid: a for a in resolved.values()
            if a.size is not None and a.uid in known and known[a.uid].size is None}
    for uid, a in grow.items():
        if uid not in resolved:
            resolved[uid] = a

    def fn(axis):
        return resolved.get(axis.uid, axis)

    return map_axes(t, fn)


# -- validation -------------------------------------------------------------


def validate(t: Term) -> list[str]:
    """All invariant violations found in ``t`` (empty when well-formed)."""
    out: list[str] = []
    _validate(t, "", out)
    sizes: dict[str, int] = {}
    for a in iter_axes(t):
        if a.size is None:
            continue
        if a.uid in sizes and sizes[a.uid] != a.size:
            out.append(f"axis {a.uid!r} appears with sizes {sizes[a.uid]} and {a.size}")
        sizes.setdefault(a.uid, a.size)
    return out


def _validate(t: Term, path: str, out: list[str]):
    here = path or "/"
    if isinstance(t, Composed):
        if not t.parts:
            out.append(f"{here}: empty composition")
            return
        for i, p in enumerate(t.parts):
            _validate(p, f"{path}/parts/{i}", out)
        for i in range(len(t.parts) - 1):
            try:
                a, b = t.parts[i].cod(), t.parts[i + 1].dom()
            except Exception as exc:  # malformed child already reported
                out.append(f"{here}: cannot read interface at junction {i}: {exc}")
                continue
            slot = _first_mismatch(a, b)
            if slot is not None:
                out.append(f"{here}: interface mismatch at junction {i}, slot {slot}")
    elif isinstance(t, ProductOfMorphisms):
        for i, p in enumerate(t.parts):
            _validate(p, f"{path}/parts/{i}", out)
    elif isinstance(t, Block):
        _validate(t.body, f"{path}/body", out)
    elif isinstance(t, Rearrangement):
        if t.mapping.cod_size != len(t.dom_family):
            out.append(
                f"{here}: remapping cod_size {t.mapping.cod_size} != family length "
                f"{len(t.dom_family)}")
    elif isinstance(t, Element):
        if len(t.values) != len(t.cod_object):
            out.append(f"{here}: element has {len(t.values)} values for "
                       f"{len(t.cod_object)} lone objects")
        else:
            for i, (v, o) in enumerate(zip(t.values, t.cod_object)):
                problem = o.check_element(v)
                if problem:
                    out.append(f"{here}: value {i}: {problem}")
    elif isinstance(t, Root):
        out.extend(f"{here}: {v}" for v in t.op.violations())
    else:
        out.append(f"{here}: unknown term type {type(t).__name__}")


def check(t: Term) -> Term:
    """Raise ``ValidationError`` unless ``t`` is well-formed."""
    problems = validate(t)
    if problems:
        raise ValidationError("; ".join(problems), problems)
    return t
