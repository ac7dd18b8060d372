"""Finite remappings ``mu: J -> I`` underlying rearrangements.

A remapping is stored as the list of its values: entry ``j`` is the source
slot feeding output slot ``j``.  Composition is written in diagrammatic
order, so ``compose(first, then)`` is the remapping of the rearrangement
``[first] ; [then]``.
"""

from __future__ import annotations

import enum
import sys
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import CompositionError, DomainError

_MAX_SIZE = sys.maxsize


class TemplateClass(enum.Enum):
    BIJECTION = "bijection"
    DELETION = "deletion-compatible"
    GENERAL = "general"


@dataclass(frozen=True)
class Remapping:
    targets: tuple[int, ...]
    cod_size: int

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.cod_size < 0:
            raise DomainError("cod_size must be a natural number")
        for j, t in enumerate(self.targets):
            if not 0 <= t < self.cod_size:
                raise DomainError(
                    f"target {t} at slot {j} is out of range for cod_size {self.cod_size}")

    @classmethod
    def identity(cls, n: int) -> "Remapping":
        return cls(tuple(range(n)), n)

    @property
    def dom_size(self) -> int:
        return len(self.targets)

    def __len__(self):
        return len(self.targets)

    def __getitem__(self, j):
        return self.targets[j]

    def __iter__(self):
        return iter(self.targets)

    def is_identity(self) -> bool:
        return self.dom_size == self.cod_size and all(
            t == j for j, t in enumerate(self.targets))

    def inverse(self) -> "Remapping":
        """Inverse of a bijection."""
        if classify(self) is not TemplateClass.BIJECTION:
            raise DomainError("only bijections have an inverse")
        inv = [0] * self.cod_size
        for j, t in enumerate(self.targets):
            inv[t] = j
        return Remapping(tuple(inv), self.dom_size)

    def apply(self, family: Sequence) -> tuple:
        """Pull a family back along the remapping: ``(family[mu(j)])_j``."""
        if len(family) != self.cod_size:
            raise DomainError(
                f"family of length {len(family)} does not match cod_size {self.cod_size}")
        return tuple(family[t] for t in self.targets)


def count(r: Remapping, i: int) -> int:
    """Multiplicity with which source slot ``i`` is used."""
    if not 0 <= i < r.cod_size:
        raise DomainError(f"index {i} out of range for cod_size {r.cod_size}")
    return sum(1 for t in r.targets if t == i)


def compose(first: Remapping, then: Remapping) -> Remapping:
    """Remapping of ``[first] ; [then]``, i.e. ``k -> first(then(k))``."""
    if then.cod_size != first.dom_size:
        raise CompositionError(
            f"cannot compose: then.cod_size={then.cod_size} but first.dom_size={first.dom_size}")
    return Remapping(tuple(first.targets[t] for t in then.targets), first.cod_size)


def direct_sum(parts: Iterable[Remapping]) -> Remapping:
    targets: list[int] = []
    offset = 0
    for part in parts:
        targets.extend(t + offset for t in part.targets)
        offset = _checked_add(offset, part.cod_size)
    return Remapping(tuple(targets), offset)


def flatten(r: Remapping, lengths: Sequence[int]) -> Remapping:
    """Flat remapping acting on the lone objects of an ``I``-family of products.

    ``lengths[i]`` is the flat length of the ``i``-th source object.
    """
    if len(lengths) != r.cod_size:
        raise DomainError(
            f"expected {r.cod_size} lengths, got {len(lengths)}")
    starts = []
    total = 0
    for n in lengths:
        if n < 0:
            raise DomainError("lengths must be natural numbers")
        starts.append(total)
        total = _checked_add(total, n)
    flat: list[int] = []
    for s in r.targets:
        flat.extend(range(starts[s], starts[s] + lengths[s]))
    return Remapping(tuple(flat), total)


def classify(r: Remapping) -> TemplateClass:
    counts = [0] * r.cod_size
    for t in r.targets:
        counts[t] += 1
    if all(c == 1 for c in counts):
        return TemplateClass.BIJECTION
    if all(c <= 1 for c in counts):
        return TemplateClass.DELETION
    return TemplateClass.GENERAL


def copy_remapping(n: int) -> Remapping:
    """``delta^n``: every output slot reads the single source slot."""
    return Remapping((0,) * n, 1)


def projection(i: int, n: int) -> Remapping:
    """Remapping ``1 -> n`` picking slot ``i``."""
    return Remapping((i,), n)


def _checked_add(a: int, b: int) -> int:
    s = a + b
    if s > _MAX_SIZE:
        raise DomainError("remapping size overflow")
    return s
