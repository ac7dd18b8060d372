"""Deterministic parameter store for learned operations."""

from __future__ import annotations

import hashlib
import math
import threading

import numpy as np

from ..arraybr import ParamRef, learned_params
from ..errors import EvaluationError
from ..tensor import REAL, TensorValue
from ..terms import Term


def _stream(seed: int, uid: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{int(seed)}:{uid}".encode()).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "little")))


def draw(seed: int, ref: ParamRef) -> TensorValue:
    sizes = ref.sizes
    n = math.prod(sizes)
    rng = _stream(seed, ref.uid)
    if ref.kind == "rmsnorm":
        data = np.ones(n)
    elif ref.kind == "embedding":
        data = rng.uniform(-1.0, 1.0, n)
    elif ref.kind == "linear":
        bound = 1.0 / math.sqrt(math.prod(sizes[:ref.fan_in]) or 1)
        data = rng.uniform(-bound, bound, n)
    else:
        raise EvaluationError(f"unknown parameter kind {ref.kind!r}")
    return TensorValue(REAL, sizes, data)


class ParamStore:
    """Learned tensors keyed by parameter uid, drawn lazily from ``seed``."""

    def __init__(self, seed: int = 0, values: dict[str, TensorValue] | None = None):
        self.seed = int(seed)
        self.values: dict[str, TensorValue] = dict(values or {})
        self._lock = threading.Lock()

    def set(self, ref: ParamRef | str, value: TensorValue) -> None:
        self.values[ref if isinstance(ref, str) else ref.uid] = value

    def get(self, ref: ParamRef) -> TensorValue:
        with self._lock:
            value = self.values.get(ref.uid)
            if value is None:
                value = self.values[ref.uid] = draw(self.seed, ref)
        if tuple(value.sizes) != ref.sizes:
            raise EvaluationError(f"parameter {ref.uid} has sizes {list(value.sizes)}, "
                                  f"expected {list(ref.sizes)}")
        return value

    def __eq__(self, other):
        return (isinstance(other, ParamStore) and self.seed == other.seed
                and self.values == other.values)


def init_params(seed: int, term: Term) -> ParamStore:
    store = ParamStore(seed)
    for ref in learned_params(term):
        store.get(ref)
    return store
