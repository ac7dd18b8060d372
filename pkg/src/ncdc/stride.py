"""Axes, shapes and affine stride maps.

An ``AffineStrideMap`` sends a coordinate ``a`` of its domain shape to
``offset[j] + sum_i a[i] * lam[i][j]`` in its codomain shape.  The matrix
has one row per domain axis and one column per codomain axis, and every
entry is a natural number.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from . import remapping as rm
from .errors import CaptureError, CompositionError, ConfigurationError, DomainError
from .remapping import Remapping
from .terms import (Composed, Element, ProductObject, ProductOfMorphisms, Rearrangement,
                    Root, Term, Block)
from .uids import new_uid


@dataclass(frozen=True)
class Axis:
    uid: str
    size: int | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.size is not None and (isinstance(self.size, bool) or self.size < 1):
            raise DomainError(f"axis {self.display!r} needs size >= 1, got {self.size}")

    @property
    def display(self) -> str:
        return self.name or self.uid[:8]

    @property
    def configured(self) -> bool:
        return self.size is not None

    def iter_axes(self):
        yield self

    def map_axes(self, fn: Callable[["Axis"], "Axis"]) -> "Axis":
        return fn(self)

    def check_element(self, value) -> str | None:
        if self.size is None:
            return f"axis {self.display} is not configured"
        if not isinstance(value, int) or not 0 <= value < self.size:
            return f"coordinate {value!r} outside axis {self.display} of size {self.size}"
        return None

    def __str__(self):
        return self.display if self.size is None else f"{self.display}:{self.size}"


def axis(name: str = "", size: int | None = None, uid: str | None = None) -> Axis:
    return Axis(uid or new_uid("a"), size, name)


def shape(*axes: Axis) -> ProductObject:
    return ProductObject(axes)


def sizes_of(axes: Iterable[Axis]) -> tuple[int, ...]:
    out = []
    for a in axes:
        if a.size is None:
            raise ConfigurationError(f"axis {a.display} ({a.uid}) is not configured")
        out.append(a.size)
    return tuple(out)


def element_count(axes: Iterable[Axis]) -> int:
    return math.prod(sizes_of(axes))


def coordinates(axes: Sequence[Axis]) -> Iterator[tuple[int, ...]]:
    """All coordinates of a shape, first axis varying fastest."""
    sizes = sizes_of(axes)
    for rev in itertools.product(*(range(n) for n in reversed(sizes))):
        yield tuple(reversed(rev))


@dataclass(frozen=True)
class AffineStrideMap:
    dom: tuple
    cod: tuple
    lam: tuple
    offset: tuple

    def __post_init__(self):
        object.__setattr__(self, "dom", tuple(self.dom))
        object.__setattr__(self, "cod", tuple(self.cod))
        object.__setattr__(self, "lam", tuple(tuple(int(x) for x in row) for row in self.lam))
        object.__setattr__(self, "offset", tuple(int(x) for x in self.offset))
        if len(self.lam) != len(self.dom):
            raise DomainError(f"stride matrix has {len(self.lam)} rows for "
                              f"{len(self.dom)} domain axes")
        for row in self.lam:
            if len(row) != len(self.cod):
                raise DomainError(f"stride matrix row has {len(row)} entries for "
                                  f"{len(self.cod)} codomain axes")
        if len(self.offset) != len(self.cod):
            raise DomainError("offset length differs from codomain length")
        if any(x < 0 for row in self.lam for x in row) or any(x < 0 for x in self.offset):
            raise DomainError("stride entries and offsets must be natural numbers")

    # payload protocol, so a map can be a root of St
    label = "stride"
    learned = False
    deterministic = True

    def dom_object(self):
        return ProductObject(self.dom)

    def cod_object(self):
        return ProductObject(self.cod)

    def iter_axes(self):
        yield from self.dom
        yield from self.cod

    def map_axes(self, fn):
        return AffineStrideMap(tuple(fn(a) for a in self.dom), tuple(fn(a) for a in self.cod),
                               self.lam, self.offset)

    def column(self, j: int) -> tuple[int, ...]:
        return tuple(row[j] for row in self.lam)

    def capture_violations(self) -> list[str]:
        out = []
        if not all(a.configured for a in self.dom + self.cod):
            return out
        for j, b in enumerate(self.cod):
            reach = self.offset[j] + sum((a.size - 1) * self.lam[i][j]
                                         for i, a in enumerate(self.dom))
            if reach > b.size - 1:
                out.append(f"capture fails on output {b.display}: reaches {reach} "
                           f"but size is {b.size}")
        return out

    def violations(self) -> list[str]:
        return self.capture_violations()

    def check_capture(self) -> "AffineStrideMap":
        problems = self.capture_violations()
        if problems:
            raise CaptureError("; ".join(problems), self)
        return self

    def apply(self, coord: Sequence[int]) -> tuple[int, ...]:
        return apply_element(self, coord)

    def is_identity(self) -> bool:
        if self.dom != self.cod or any(self.offset):
            return False
        n = len(self.dom)
        return all(self.lam[i][j] == (i == j) for i in range(n) for j in range(n))

    def __str__(self):
        return (f"stride({' '.join(map(str, self.dom))} -> {' '.join(map(str, self.cod))}; "
                f"lam={[list(r) for r in self.lam]}, v={list(self.offset)})")


def apply_element(m: AffineStrideMap, coord: Sequence[int]) -> tuple[int, ...]:
    sizes = sizes_of(m.dom)
    sizes_of(m.cod)
    if len(coord) != len(sizes):
        raise DomainError(f"coordinate has {len(coord)} entries, shape has {len(sizes)}")
    for c, n in zip(coord, sizes):
        if not 0 <= c < n:
            raise DomainError(f"coordinate {tuple(coord)} outside shape {sizes}")
    return tuple(m.offset[j] + sum(c * m.lam[i][j] for i, c in enumerate(coord))
                 for j in range(len(m.cod)))


def compose_affine(first: AffineStrideMap, then: AffineStrideMap) -> AffineStrideMap:
    if first.cod != then.dom:
        raise CompositionError("stride maps do not meet: "
                               f"{[str(a) for a in first.cod]} vs {[str(a) for a in then.dom]}")
    inner = len(first.cod)
    lam = [[sum(first.lam[i][k] * then.lam[k][j] for k in range(inner))
            for j in range(len(then.cod))] for i in range(len(first.dom))]
    offset = [sum(first.offset[k] * then.lam[k][j] for k in range(inner)) + then.offset[j]
              for j in range(len(then.cod))]
    return AffineStrideMap(first.dom, then.cod, lam, offset)


def identity_map(axes: Sequence[Axis]) -> AffineStrideMap:
    n = len(axes)
    return AffineStrideMap(axes, axes, [[int(i == j) for j in range(n)] for i in range(n)],
                           [0] * n)


def from_remapping(r: Remapping, dom_family: Sequence[Axis]) -> AffineStrideMap:
    family = tuple(dom_family)
    if r.cod_size != len(family):
        raise DomainError(f"remapping expects {r.cod_size} axes, got {len(family)}")
    cod = r.apply(family)
    lam = [[int(r.targets[j] == i) for j in range(len(cod))] for i in range(len(family))]
    return AffineStrideMap(family, cod, lam, [0] * len(cod))


def translation_map(source: Axis, t: int, target: Axis) -> AffineStrideMap:
    """``i -> i + t`` from ``source`` into ``target``."""
    if t < 0:
        raise DomainError("translations must be non-negative")
    return AffineStrideMap((source,), (target,), [[1]], [t]).check_capture()


def addition_map(left: Axis, right: Axis, target: Axis) -> AffineStrideMap:
    """``(i, j) -> i + j``; the index map behind a valid convolution."""
    return AffineStrideMap((left, right), (target,), [[1], [1]], [0])


def element(axes: Sequence[Axis], coord: Sequence[int]) -> AffineStrideMap:
    axes = tuple(axes)
    if len(coord) != len(axes):
        raise DomainError(f"coordinate has {len(coord)} entries, shape has {len(axes)}")
    for c, a in zip(coord, axes):
        problem = a.check_element(c)
        if problem:
            raise DomainError(problem)
    return AffineStrideMap((), axes, (), coord)


def evaluate_st(t: Term, coord: Sequence[int]) -> tuple[int, ...]:
    """Action of an St term on a coordinate of its domain."""
    coord = tuple(coord)
    if isinstance(t, Root):
        return apply_element(t.op, coord)
    if isinstance(t, Rearrangement):
        return tuple(t.mapping.apply(coord))
    if isinstance(t, Element):
        return tuple(t.values)
    if isinstance(t, Block):
        return evaluate_st(t.body, coord)
    if isinstance(t, Composed):
        for p in t.parts:
            coord = evaluate_st(p, coord)
        return coord
    if isinstance(t, ProductOfMorphisms):
        out: list[int] = []
        start = 0
        for p in t.parts:
            n = len(p.dom())
            out.extend(evaluate_st(p, coord[start:start + n]))
            start += n
        return tuple(out)
    raise DomainError(f"not an St term: {type(t).__name__}")
