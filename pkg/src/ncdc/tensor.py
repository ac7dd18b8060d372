"""Concrete tensors.

Sizes are listed innermost axis first and the flat data has the first
axis varying fastest.  The numpy view therefore has the sizes reversed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Datatype:
    kind: str
    param: int | str | None = None

    def __post_init__(self):
        if self.kind not in ("real", "int", "finite", "quantized"):
            raise DomainError(f"unknown datatype kind {self.kind!r}")
        if self.kind == "finite" and (not isinstance(self.param, int) or self.param < 1):
            raise DomainError("finite datatypes need V >= 1")
        if self.kind == "quantized" and not isinstance(self.param, str):
            raise DomainError("quantized datatypes carry a string tag")

    @property
    def is_integral(self) -> bool:
        return self.kind in ("int", "finite")

    @property
    def numpy_dtype(self):
        return np.int64 if self.is_integral else np.float64

    def __str__(self):
        if self.kind in ("real", "int"):
            return self.kind
        return f"{self.kind}({self.param})"

    @staticmethod
    def parse(text: str) -> "Datatype":
        text = text.strip()
        if text in ("real", "int"):
            return Datatype(text)
        for kind in ("finite", "quantized"):
            if text.startswith(kind + "(") and text.endswith(")"):
                inner = text[len(kind) + 1:-1]
                if kind == "finite":
                    if not inner.isdigit():
                        raise DomainError(f"bad finite datatype {text!r}")
                    return Datatype(kind, int(inner))
                return Datatype(kind, inner)
        raise DomainError(f"unknown datatype {text!r}")


REAL = Datatype("real")
INT = Datatype("int")


def finite(v: int) -> Datatype:
    return Datatype("finite", v)


def quantized(tag: str) -> Datatype:
    return Datatype("quantized", tag)


class TensorValue:
    __slots__ = ("dtype", "sizes", "array")

    def __init__(self, dtype: Datatype, sizes: Sequence[int], data):
        sizes = tuple(int(n) for n in sizes)
        arr = np.asarray(data, dtype=dtype.numpy_dtype)
        if arr.size != math.prod(sizes):
            raise DomainError(f"tensor data has {arr.size} entries, sizes {sizes} need "
                              f"{math.prod(sizes)}")
        arr = arr.reshape(tuple(reversed(sizes)))
        if dtype.kind == "finite" and arr.size and (arr.min() < 0 or arr.max() >= dtype.param):
            raise DomainError(f"finite({dtype.param}) tensor has entries outside [0, {dtype.param})")
        arr = arr.copy()
        arr.setflags(write=False)
        self.dtype = dtype
        self.sizes = sizes
        self.array = arr

    @classmethod
    def from_array(cls, dtype: Datatype, arr) -> "TensorValue":
        arr = np.asarray(arr)
        return cls(dtype, tuple(reversed(arr.shape)), arr.reshape(-1))

    @property
    def data(self) -> list:
        return self.array.reshape(-1).tolist()

    def tile(self, extra_sizes: Sequence[int]) -> "TensorValue":
        """Repeat over new outer axes."""
        extra = tuple(reversed(tuple(extra_sizes)))
        arr = np.broadcast_to(self.array, extra + self.array.shape)
        return TensorValue.from_array(self.dtype, arr)

    def __eq__(self, other):
        return (isinstance(other, TensorValue) and self.dtype == other.dtype
                and self.sizes == other.sizes and np.array_equal(self.array, other.array))

    def __hash__(self):
        return hash((self.dtype, self.sizes, self.array.tobytes()))

    def __repr__(self):
        return f"TensorValue({self.dtype}, sizes={list(self.sizes)}, data={self.data})"
